//! Synthetic world generation: spatial layout, towers, the contact graph
//! with a planted recipient cohort, tastes, prices, and coverage. Every
//! artifact is a pure function of the configuration and seed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::coverage::{
    agent_coverage, tower_coverage_map, ElevationGrid, GeoPoint, LosConfig, Tower, WeightedPoint,
};
use crate::equilibrium::{CoverageSeries, Environment, Graph};
use crate::error::{Error, Result};
use crate::model::{AgentId, Link, ShockDistribution};
use crate::policy::SubsidyProgram;
use crate::traces::{TowerId, TowerInfo, TowerTable};

use super::config::{CoverageConfig, ScenarioConfig, ShockFamily};

/// Stage tags mixed into the base seed so stages draw independent streams.
fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(stage))
}

/// Everything a scenario run needs beyond the environment itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioData {
    pub env: Environment,
    pub towers: TowerTable,
    /// Most-used tower per agent.
    pub home_tower: Vec<TowerId>,
    /// Occasional second tower per agent.
    pub secondary_tower: Vec<TowerId>,
    pub planted_recipients: BTreeSet<AgentId>,
    pub program: SubsidyProgram,
}

const KM: f64 = 1000.0;
const M_PER_DEG_LAT: f64 = 111_320.0;

fn to_geo(origin: GeoPoint, x_m: f64, y_m: f64) -> GeoPoint {
    let m_per_deg_lon = M_PER_DEG_LAT * origin.lat.to_radians().cos();
    GeoPoint { lat: origin.lat + y_m / M_PER_DEG_LAT, lon: origin.lon + x_m / m_per_deg_lon }
}

/// Build the synthetic environment. Deterministic under the configuration
/// seed: identical inputs serialize byte-identically.
pub fn generate_network(config: &ScenarioConfig, seed: u64) -> Result<ScenarioData> {
    config.validate()?;
    let n = config.population as usize;
    let extent_m = config.space.extent_km * KM;
    let params = config.utility_params()?;

    // City centers.
    let mut rng = stage_rng(seed, 1);
    let cities: Vec<(f64, f64)> = (0..config.space.cities.max(1))
        .map(|_| (rng.random::<f64>() * extent_m, rng.random::<f64>() * extent_m))
        .collect();

    // Agent positions and rural flags.
    let mut rng = stage_rng(seed, 2);
    let mut positions = Vec::with_capacity(n);
    let mut rural = Vec::with_capacity(n);
    let city_radius_m = config.space.city_radius_km * KM;
    for _ in 0..n {
        if rng.random::<f64>() < config.space.urban_fraction {
            let (cx, cy) = cities[rng.random_range(0..cities.len())];
            let ang = rng.random::<f64>() * std::f64::consts::TAU;
            let r = rng.random::<f64>().sqrt() * city_radius_m;
            let x = (cx + r * ang.cos()).clamp(0.0, extent_m);
            let y = (cy + r * ang.sin()).clamp(0.0, extent_m);
            positions.push((x, y));
            rural.push(false);
        } else {
            positions.push((rng.random::<f64>() * extent_m, rng.random::<f64>() * extent_m));
            rural.push(true);
        }
    }

    // Towers: one per city center plus a rural lattice.
    let mut towers = TowerTable::default();
    let mut tower_points: Vec<(TowerId, f64, f64)> = Vec::new();
    let mut next_tower = 1u64;
    for (cx, cy) in &cities {
        let id = TowerId(next_tower);
        next_tower += 1;
        towers.towers.insert(
            id,
            TowerInfo {
                position: to_geo(config.space.origin, *cx, *cy),
                rural: false,
                antenna_height_m: 35.0,
                active_month: 1,
            },
        );
        tower_points.push((id, *cx, *cy));
    }
    let spacing = (config.space.rural_tower_spacing_km * KM).max(1.0);
    let per_side = (extent_m / spacing).ceil() as usize;
    for gy in 0..per_side {
        for gx in 0..per_side {
            let x = (gx as f64 + 0.5) * spacing;
            let y = (gy as f64 + 0.5) * spacing;
            if x > extent_m || y > extent_m {
                continue;
            }
            let near_city = cities
                .iter()
                .any(|(cx, cy)| ((cx - x).powi(2) + (cy - y).powi(2)).sqrt() < city_radius_m);
            if near_city {
                continue;
            }
            let id = TowerId(next_tower);
            next_tower += 1;
            towers.towers.insert(
                id,
                TowerInfo {
                    position: to_geo(config.space.origin, x, y),
                    rural: true,
                    antenna_height_m: 30.0,
                    active_month: 1,
                },
            );
            tower_points.push((id, x, y));
        }
    }

    // Home and secondary towers by proximity.
    let mut rng = stage_rng(seed, 3);
    let mut home_tower = Vec::with_capacity(n);
    let mut secondary_tower = Vec::with_capacity(n);
    for (x, y) in &positions {
        let mut ranked: Vec<(f64, TowerId)> = tower_points
            .iter()
            .map(|(id, tx, ty)| ((tx - x).powi(2) + (ty - y).powi(2), *id))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        home_tower.push(ranked[0].1);
        let second = if ranked.len() > 1 && rng.random::<f64>() < 0.8 { ranked[1].1 } else { ranked[0].1 };
        secondary_tower.push(second);
    }

    // Initial adopters, then the planted recipient cohort from the rest.
    let mut rng = stage_rng(seed, 4);
    let mut ids: Vec<u32> = (0..n as u32).collect();
    ids.shuffle(&mut rng);
    let n_initial = ((n as f64) * config.initial_adopters.fraction).round() as usize;
    let initial_ids: BTreeSet<u32> = ids.iter().take(n_initial).copied().collect();
    let mut initial = BTreeMap::new();
    for (k, agent) in initial_ids.iter().enumerate() {
        let month = 1 + (k as u32 % config.initial_adopters.months.max(1));
        initial.insert(AgentId(*agent), month);
    }
    let mut recipient_pool: Vec<u32> = (0..n as u32)
        .filter(|i| {
            !initial_ids.contains(i) && (!config.recipients.rural_only || rural[*i as usize])
        })
        .collect();
    recipient_pool.shuffle(&mut rng);
    if recipient_pool.len() < config.recipients.count as usize {
        return Err(Error::InvalidConfig(format!(
            "recipient cohort {} exceeds the {} eligible agents",
            config.recipients.count,
            recipient_pool.len()
        )));
    }
    let planted: BTreeSet<AgentId> = recipient_pool
        .iter()
        .take(config.recipients.count as usize)
        .map(|i| AgentId(*i))
        .collect();

    // Contact graph: spatially clustered partnerships with recipient
    // homophily; every partnership is reciprocal.
    let mut rng = stage_rng(seed, 5);
    let bucket = (extent_m / 10.0).max(1.0);
    let buckets_per_side = (extent_m / bucket).ceil() as usize + 1;
    let mut bucket_members: Vec<Vec<u32>> = vec![Vec::new(); buckets_per_side * buckets_per_side];
    for (i, (x, y)) in positions.iter().enumerate() {
        let bx = (x / bucket) as usize;
        let by = (y / bucket) as usize;
        bucket_members[by * buckets_per_side + bx].push(i as u32);
    }
    let recipient_vec: Vec<u32> = planted.iter().map(|a| a.0).collect();
    let recipient_share = recipient_vec.len() as f64 / n as f64;
    let p_recipient_partner =
        (config.graph.recipient_homophily * recipient_share).clamp(0.0, 0.9);
    let mut pairs: HashSet<(u32, u32)> = HashSet::new();
    let mean_initiations = config.graph.mean_out_degree / 2.0;
    if mean_initiations > 0.0 {
        let poisson = Poisson::new(mean_initiations)
            .map_err(|e| Error::InvalidConfig(format!("degree target: {e}")))?;
        for i in 0..n as u32 {
            let k = poisson.sample(&mut rng) as usize;
            let is_rec = planted.contains(&AgentId(i));
            for _ in 0..k {
                let mut partner = None;
                for _attempt in 0..30 {
                    let cand = if is_rec
                        && recipient_vec.len() > 1
                        && rng.random::<f64>() < p_recipient_partner
                    {
                        recipient_vec[rng.random_range(0..recipient_vec.len())]
                    } else if rng.random::<f64>() < config.graph.local_share {
                        let (x, y) = positions[i as usize];
                        let bx = (x / bucket) as usize;
                        let by = (y / bucket) as usize;
                        let members = &bucket_members[by * buckets_per_side + bx];
                        if members.len() < 2 {
                            rng.random_range(0..n as u32)
                        } else {
                            members[rng.random_range(0..members.len())]
                        }
                    } else {
                        rng.random_range(0..n as u32)
                    };
                    if cand == i {
                        continue;
                    }
                    let key = if i < cand { (i, cand) } else { (cand, i) };
                    if pairs.contains(&key) {
                        continue;
                    }
                    partner = Some(key);
                    break;
                }
                if let Some(key) = partner {
                    pairs.insert(key);
                }
            }
        }
    }
    let mut sorted_pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
    sorted_pairs.sort_unstable();
    let mut rng = stage_rng(seed, 6);
    let normal_mu = Normal::new(config.shocks.mu_mean, config.shocks.mu_sd)
        .map_err(|e| Error::InvalidConfig(format!("shock mu: {e}")))?;
    let mut links = Vec::with_capacity(sorted_pairs.len() * 2);
    for (a, b) in sorted_pairs {
        for (s, d) in [(a, b), (b, a)] {
            let mu = normal_mu.sample(&mut rng);
            let shocks = match config.shocks.family {
                ShockFamily::LogNormal => ShockDistribution::LogNormal { mu, sigma: config.shocks.sigma },
                ShockFamily::PointMass => ShockDistribution::PointMass { value: mu.exp() },
            };
            links.push(Link { caller: AgentId(s), callee: AgentId(d), shocks });
        }
    }
    let graph = Graph::new(n as u32, links)?;

    // Tastes.
    let mut rng = stage_rng(seed, 7);
    let eta_dist = Normal::new(0.0, config.eta.sd.max(1e-12))
        .map_err(|e| Error::InvalidConfig(format!("eta: {e}")))?;
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            config.eta.mean
                + if rural[i] { config.eta.rural_shift } else { 0.0 }
                + eta_dist.sample(&mut rng)
        })
        .collect();

    // Coverage.
    let locations: Vec<GeoPoint> =
        positions.iter().map(|(x, y)| to_geo(config.space.origin, *x, *y)).collect();
    let mut rng = stage_rng(seed, 8);
    let coverage = match &config.coverage {
        CoverageConfig::Constant { phi } => CoverageSeries::Constant { phi: vec![*phi; n] },
        CoverageConfig::PerAgent { urban, rural_min, rural_max } => {
            let phi = (0..n)
                .map(|i| {
                    if rural[i] {
                        rural_min + (rural_max - rural_min) * rng.random::<f64>()
                    } else {
                        *urban
                    }
                })
                .collect();
            CoverageSeries::Constant { phi }
        }
        CoverageConfig::Terrain { cell_size_m, relief_m, radius_m } => {
            let phi =
                terrain_coverage(config, &positions, &towers, *cell_size_m, *relief_m, *radius_m, seed)?;
            CoverageSeries::Constant { phi }
        }
    };

    let program = SubsidyProgram {
        recipients: planted.clone(),
        discount: config.program.discount,
        month: config.program.month,
        full_price: config.program.full_price,
        repayment: config.program.repayment,
        payments_made: config.program.payments_made,
    };

    let env = Environment {
        horizon: config.horizon,
        params,
        eta,
        discounts: vec![0.0; n],
        rural,
        locations,
        graph: Arc::new(graph),
        call_price: Arc::new(config.prices.call_series(config.horizon)),
        handset_price: Arc::new(config.prices.handset_series(config.horizon)),
        coverage: Arc::new(coverage),
        initial: Arc::new(initial),
        tail_continuation: false,
    };
    env.validate()?;
    Ok(ScenarioData {
        env,
        towers,
        home_tower,
        secondary_tower,
        planted_recipients: planted,
        program,
    })
}

/// Line-of-sight coverage fractions from synthetic rolling terrain.
fn terrain_coverage(
    config: &ScenarioConfig,
    positions: &[(f64, f64)],
    towers: &TowerTable,
    cell_size_m: f64,
    relief_m: f64,
    radius_m: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let extent_m = config.space.extent_km * KM;
    let cells = ((extent_m / cell_size_m).ceil() as usize).max(2);
    let mut rng = stage_rng(seed, 9);
    let (px, py, qx, qy) = (
        rng.random::<f64>() * 0.7 + 0.4,
        rng.random::<f64>() * 0.7 + 0.4,
        rng.random::<f64>() * 2.0,
        rng.random::<f64>() * 2.0,
    );
    let mut heights = Vec::with_capacity(cells * cells);
    for row in 0..cells {
        for col in 0..cells {
            let (x, y) = (col as f64 / cells as f64 * 8.0, row as f64 / cells as f64 * 8.0);
            heights.push(1500.0 + relief_m * (px * x + qx).sin() * (py * y + qy).cos());
        }
    }
    let grid = ElevationGrid::new(config.space.origin, cell_size_m, cells, cells, heights)?;
    let tower_list: Vec<Tower> = {
        let mut ids: Vec<_> = towers.towers.keys().copied().collect();
        ids.sort();
        ids.iter()
            .map(|id| {
                let info = &towers.towers[id];
                Tower {
                    id: id.0,
                    position: info.position,
                    antenna_height_m: info.antenna_height_m,
                    active_month: info.active_month,
                }
            })
            .collect()
    };
    let raster = tower_coverage_map(&grid, &tower_list, &LosConfig::default())?;
    Ok(positions
        .iter()
        .map(|(x, y)| {
            let loc = [WeightedPoint { x: *x, y: *y, weight: 1.0 }];
            agent_coverage(&loc, &raster, radius_m).map(|c| c.phi).unwrap_or(0.0)
        })
        .collect())
}
