//! Welfare accounting over solved equilibria: consumer surplus, firm
//! revenue, government revenue, net welfare, and their geographic
//! distribution, each as a [lower, upper] bound pair.
//!
//! All quantities are expected values under the link shock distributions
//! (the same expectations the adoption game uses), so reports carry no
//! simulation noise. Sums run per agent in parallel with a deterministic
//! ordered reduction.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::GeoPoint;
use crate::equilibrium::{AdoptionProfile, Environment, LinkValueCache};
use crate::error::{Error, Result};
use crate::model::AgentId;

/// Tax rates feeding government revenue. Only the call levy has a canonical
/// default; handset taxation is fully configurable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TaxConfig {
    /// Share of operator call revenue collected, default 2%.
    pub call_rate: f64,
    /// Tax collected on effective handset payments.
    pub handset_rate: f64,
}

impl Default for TaxConfig {
    fn default() -> Self {
        Self { call_rate: 0.02, handset_rate: 0.0 }
    }
}

impl TaxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.call_rate < 0.0 || self.handset_rate < 0.0 {
            return Err(Error::InvalidParameter("tax rates must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Discounted consumer surplus per agent: calling surplus from adoption
/// through the horizon (plus the taste term when `include_eta`), minus the
/// discounted effective handset price. Never-adopters get exactly zero.
#[allow(clippy::needless_range_loop)]
pub fn consumer_surplus(
    profile: &AdoptionProfile,
    env: &Environment,
    cache: &LinkValueCache,
    include_eta: bool,
) -> Vec<f64> {
    let horizon = env.horizon as usize;
    let dp = env.delta_powers();
    (0..env.n_agents())
        .into_par_iter()
        .map(|i| {
            let Some(tau) = profile.dates[i] else { return 0.0 };
            let agent = AgentId(i as u32);
            let mut cs = 0.0;
            for li in env.graph.out_links(agent) {
                if let Some(tau_j) = profile.dates[env.graph.links[li].callee.index()] {
                    let start = tau.max(tau_j) as usize;
                    for t in start..=horizon {
                        cs += dp[t] * cache.eu(li, t - 1);
                    }
                }
            }
            if include_eta {
                let eta = env.eta[i];
                for t in tau as usize..=horizon {
                    cs += dp[t] * eta;
                }
            }
            cs - dp[tau as usize] * env.effective_handset_price(i, tau)
        })
        .collect()
}

/// Discounted expected billed revenue attributed to each calling agent.
#[allow(clippy::needless_range_loop)]
pub fn firm_revenue(
    profile: &AdoptionProfile,
    env: &Environment,
    cache: &LinkValueCache,
) -> Vec<f64> {
    let horizon = env.horizon as usize;
    let dp = env.delta_powers();
    (0..env.n_agents())
        .into_par_iter()
        .map(|i| {
            let Some(tau) = profile.dates[i] else { return 0.0 };
            let agent = AgentId(i as u32);
            let mut rev = 0.0;
            for li in env.graph.out_links(agent) {
                if let Some(tau_j) = profile.dates[env.graph.links[li].callee.index()] {
                    let start = tau.max(tau_j) as usize;
                    for t in start..=horizon {
                        rev += dp[t] * env.call_price[t - 1] * cache.ed(li, t - 1);
                    }
                }
            }
            rev
        })
        .collect()
}

/// Government revenue split into its call-tax and handset components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GovernmentRevenue {
    /// Call-levy component per agent: `call_rate x firm revenue`.
    pub call: Vec<f64>,
    /// Handset component per agent: handset tax on effective payments minus
    /// the subsidy outlay for discounted agents.
    pub handset: Vec<f64>,
}

impl GovernmentRevenue {
    pub fn total(&self, agent: usize) -> f64 {
        self.call[agent] + self.handset[agent]
    }
}

/// Per-agent government revenue under the tax configuration.
pub fn government_revenue(
    profile: &AdoptionProfile,
    env: &Environment,
    cache: &LinkValueCache,
    tax: &TaxConfig,
) -> Result<GovernmentRevenue> {
    tax.validate()?;
    let dp = env.delta_powers();
    let firm = firm_revenue(profile, env, cache);
    let call: Vec<f64> = firm.iter().map(|r| tax.call_rate * r).collect();
    let handset: Vec<f64> = (0..env.n_agents())
        .map(|i| match profile.dates[i] {
            Some(tau) => {
                let paid = env.effective_handset_price(i, tau);
                dp[tau as usize] * (tax.handset_rate * paid - env.discounts[i])
            }
            None => 0.0,
        })
        .collect();
    Ok(GovernmentRevenue { call, handset })
}

/// Net present cost of the subsidy: the discount, discounted to each
/// recipient's adoption month, summed over adopting discounted agents.
pub fn subsidy_net_present_cost(profile: &AdoptionProfile, env: &Environment) -> f64 {
    let dp = env.delta_powers();
    (0..env.n_agents())
        .map(|i| match profile.dates[i] {
            Some(tau) if env.discounts[i] != 0.0 => dp[tau as usize] * env.discounts[i],
            _ => 0.0,
        })
        .sum()
}

/// Aggregated outcome levels for one group of agents in one equilibrium.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLevels {
    /// Mean adoption month, never counted as horizon + 1.
    pub mean_adoption_time: f64,
    pub firm_revenue: f64,
    /// Consumer surplus including the handset taste term.
    pub consumer_surplus: f64,
    /// Consumer surplus from calls only (taste excluded).
    pub consumer_surplus_ex_eta: f64,
    pub government_revenue: f64,
    pub government_handset_revenue: f64,
    /// firm revenue + consumer surplus + government revenue.
    pub net_welfare: f64,
}

/// Values per reporting group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerGroup<T> {
    pub all: T,
    pub recipients: T,
    pub nonrecipients: T,
}

impl<T> PerGroup<T> {
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> PerGroup<U> {
        PerGroup {
            all: f(&self.all),
            recipients: f(&self.recipients),
            nonrecipients: f(&self.nonrecipients),
        }
    }
}

/// One equilibrium to account for: the profile plus the environment it was
/// solved in (whose discounts and tastes it reflects).
#[derive(Clone, Copy)]
pub struct EquilibriumCase<'a> {
    pub env: &'a Environment,
    pub profile: &'a AdoptionProfile,
}

/// Group-level outcome aggregation for one equilibrium.
pub fn outcome_levels(
    case: EquilibriumCase<'_>,
    cache: &LinkValueCache,
    recipients: &HashSet<AgentId>,
    tax: &TaxConfig,
) -> Result<PerGroup<OutcomeLevels>> {
    let env = case.env;
    let profile = case.profile;
    let cs = consumer_surplus(profile, env, cache, true);
    let cs_ex = consumer_surplus(profile, env, cache, false);
    let firm = firm_revenue(profile, env, cache);
    let gov = government_revenue(profile, env, cache, tax)?;

    let n = env.n_agents();
    let mut acc = PerGroup::<OutcomeLevels>::default();
    let mut counts = PerGroup::<usize>::default();
    let mut adopt_sum = PerGroup::<f64>::default();
    for i in 0..n {
        let is_rec = recipients.contains(&AgentId(i as u32));
        let adopt = profile.dates[i].unwrap_or(env.horizon + 1) as f64;
        for (levels, count, asum, member) in [
            (&mut acc.all, &mut counts.all, &mut adopt_sum.all, true),
            (&mut acc.recipients, &mut counts.recipients, &mut adopt_sum.recipients, is_rec),
            (
                &mut acc.nonrecipients,
                &mut counts.nonrecipients,
                &mut adopt_sum.nonrecipients,
                !is_rec,
            ),
        ] {
            if !member {
                continue;
            }
            *count += 1;
            *asum += adopt;
            levels.firm_revenue += firm[i];
            levels.consumer_surplus += cs[i];
            levels.consumer_surplus_ex_eta += cs_ex[i];
            levels.government_revenue += gov.total(i);
            levels.government_handset_revenue += gov.handset[i];
        }
    }
    let finish = |levels: &mut OutcomeLevels, count: usize, asum: f64| {
        levels.mean_adoption_time = if count > 0 { asum / count as f64 } else { 0.0 };
        levels.net_welfare =
            levels.firm_revenue + levels.consumer_surplus + levels.government_revenue;
    };
    finish(&mut acc.all, counts.all, adopt_sum.all);
    finish(&mut acc.recipients, counts.recipients, adopt_sum.recipients);
    finish(&mut acc.nonrecipients, counts.nonrecipients, adopt_sum.nonrecipients);
    Ok(acc)
}

/// A [lower-bound, upper-bound] value pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

impl BoundPair {
    pub fn map2(a: BoundPair, b: BoundPair, f: impl Fn(f64, f64) -> f64) -> BoundPair {
        BoundPair { lower: f(a.lower, b.lower), upper: f(a.upper, b.upper) }
    }
}

/// Outcome levels as bound pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundedOutcomes {
    pub mean_adoption_time: BoundPair,
    pub firm_revenue: BoundPair,
    pub consumer_surplus: BoundPair,
    pub consumer_surplus_ex_eta: BoundPair,
    pub government_revenue: BoundPair,
    pub government_handset_revenue: BoundPair,
    pub net_welfare: BoundPair,
}

fn pair(lo: &OutcomeLevels, hi: &OutcomeLevels) -> BoundedOutcomes {
    BoundedOutcomes {
        mean_adoption_time: BoundPair {
            lower: lo.mean_adoption_time,
            upper: hi.mean_adoption_time,
        },
        firm_revenue: BoundPair { lower: lo.firm_revenue, upper: hi.firm_revenue },
        consumer_surplus: BoundPair { lower: lo.consumer_surplus, upper: hi.consumer_surplus },
        consumer_surplus_ex_eta: BoundPair {
            lower: lo.consumer_surplus_ex_eta,
            upper: hi.consumer_surplus_ex_eta,
        },
        government_revenue: BoundPair {
            lower: lo.government_revenue,
            upper: hi.government_revenue,
        },
        government_handset_revenue: BoundPair {
            lower: lo.government_handset_revenue,
            upper: hi.government_handset_revenue,
        },
        net_welfare: BoundPair { lower: lo.net_welfare, upper: hi.net_welfare },
    }
}

fn minus(a: &BoundedOutcomes, b: &BoundedOutcomes) -> BoundedOutcomes {
    let d = |x: BoundPair, y: BoundPair| BoundPair::map2(x, y, |p, q| p - q);
    BoundedOutcomes {
        mean_adoption_time: d(a.mean_adoption_time, b.mean_adoption_time),
        firm_revenue: d(a.firm_revenue, b.firm_revenue),
        consumer_surplus: d(a.consumer_surplus, b.consumer_surplus),
        consumer_surplus_ex_eta: d(a.consumer_surplus_ex_eta, b.consumer_surplus_ex_eta),
        government_revenue: d(a.government_revenue, b.government_revenue),
        government_handset_revenue: d(a.government_handset_revenue, b.government_handset_revenue),
        net_welfare: d(a.net_welfare, b.net_welfare),
    }
}

/// Full welfare report: with-program levels, impacts (with minus without),
/// net-present subsidy cost, and the social rate of return, per group and
/// bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WelfareReport {
    pub with_program: PerGroup<BoundedOutcomes>,
    pub impact: PerGroup<BoundedOutcomes>,
    pub subsidy_net_present_cost: BoundPair,
    /// Net welfare impact divided by the subsidy cost; zero when the cost is
    /// zero.
    pub social_rate_of_return: BoundPair,
    /// Agents whose adoption dates were held fixed (crossed bounds).
    pub held_fixed: usize,
}

/// The four equilibria feeding a report: with/without the program, at the
/// lower and upper taste bounds.
pub struct ReportInputs<'a> {
    pub with_lower: EquilibriumCase<'a>,
    pub with_upper: EquilibriumCase<'a>,
    pub without_lower: EquilibriumCase<'a>,
    pub without_upper: EquilibriumCase<'a>,
}

pub fn build_report(
    inputs: &ReportInputs<'_>,
    cache: &LinkValueCache,
    recipients: &HashSet<AgentId>,
    tax: &TaxConfig,
    held_fixed: usize,
) -> Result<WelfareReport> {
    let wl = outcome_levels(inputs.with_lower, cache, recipients, tax)?;
    let wu = outcome_levels(inputs.with_upper, cache, recipients, tax)?;
    let ol = outcome_levels(inputs.without_lower, cache, recipients, tax)?;
    let ou = outcome_levels(inputs.without_upper, cache, recipients, tax)?;
    let with_program = PerGroup {
        all: pair(&wl.all, &wu.all),
        recipients: pair(&wl.recipients, &wu.recipients),
        nonrecipients: pair(&wl.nonrecipients, &wu.nonrecipients),
    };
    let without = PerGroup {
        all: pair(&ol.all, &ou.all),
        recipients: pair(&ol.recipients, &ou.recipients),
        nonrecipients: pair(&ol.nonrecipients, &ou.nonrecipients),
    };
    let impact = PerGroup {
        all: minus(&with_program.all, &without.all),
        recipients: minus(&with_program.recipients, &without.recipients),
        nonrecipients: minus(&with_program.nonrecipients, &without.nonrecipients),
    };
    let cost = BoundPair {
        lower: subsidy_net_present_cost(inputs.with_lower.profile, inputs.with_lower.env),
        upper: subsidy_net_present_cost(inputs.with_upper.profile, inputs.with_upper.env),
    };
    let ror = BoundPair {
        lower: rate_of_return(impact.all.net_welfare.lower, cost.lower),
        upper: rate_of_return(impact.all.net_welfare.upper, cost.upper),
    };
    Ok(WelfareReport {
        with_program,
        impact,
        subsidy_net_present_cost: cost,
        social_rate_of_return: ror,
        held_fixed,
    })
}

fn rate_of_return(gain: f64, cost: f64) -> f64 {
    if cost > 0.0 {
        gain / cost
    } else {
        0.0
    }
}

/// Write a report as CSV: one row per (group, outcome) with with-program and
/// impact bound pairs.
pub fn write_report_csv<W: Write>(writer: W, report: &WelfareReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "outcome", "with_lower", "with_upper", "impact_lower", "impact_upper"])?;
    let rows = |group: &str, with: &BoundedOutcomes, imp: &BoundedOutcomes| {
        [
            ("mean_adoption_time", with.mean_adoption_time, imp.mean_adoption_time),
            ("firm_revenue", with.firm_revenue, imp.firm_revenue),
            ("consumer_surplus", with.consumer_surplus, imp.consumer_surplus),
            ("consumer_surplus_ex_eta", with.consumer_surplus_ex_eta, imp.consumer_surplus_ex_eta),
            ("government_revenue", with.government_revenue, imp.government_revenue),
            (
                "government_handset_revenue",
                with.government_handset_revenue,
                imp.government_handset_revenue,
            ),
            ("net_welfare", with.net_welfare, imp.net_welfare),
        ]
        .map(|(name, wp, ip)| {
            vec![
                group.to_string(),
                name.to_string(),
                wp.lower.to_string(),
                wp.upper.to_string(),
                ip.lower.to_string(),
                ip.upper.to_string(),
            ]
        })
    };
    for (name, with, imp) in [
        ("all", &report.with_program.all, &report.impact.all),
        ("recipients", &report.with_program.recipients, &report.impact.recipients),
        ("nonrecipients", &report.with_program.nonrecipients, &report.impact.nonrecipients),
    ] {
        for row in rows(name, with, imp) {
            w.write_record(row)?;
        }
    }
    w.write_record([
        "all",
        "subsidy_net_present_cost",
        &report.subsidy_net_present_cost.lower.to_string(),
        &report.subsidy_net_present_cost.upper.to_string(),
        "",
        "",
    ])?;
    w.write_record([
        "all",
        "social_rate_of_return",
        &report.social_rate_of_return.lower.to_string(),
        &report.social_rate_of_return.upper.to_string(),
        "",
        "",
    ])?;
    w.flush()?;
    Ok(())
}

/// Geometry of a surplus map.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MapGridSpec {
    pub origin: GeoPoint,
    pub cell_size_m: f64,
    pub ncols: usize,
    pub nrows: usize,
}

impl MapGridSpec {
    /// Bounding grid over the environment's agent locations.
    pub fn covering(env: &Environment, cell_size_m: f64) -> Self {
        let mut min_lat = f64::INFINITY;
        let mut min_lon = f64::INFINITY;
        let mut max_lat = f64::NEG_INFINITY;
        let mut max_lon = f64::NEG_INFINITY;
        for p in &env.locations {
            min_lat = min_lat.min(p.lat);
            max_lat = max_lat.max(p.lat);
            min_lon = min_lon.min(p.lon);
            max_lon = max_lon.max(p.lon);
        }
        let origin = GeoPoint { lat: min_lat, lon: min_lon };
        let m_lat = 111_320.0;
        let m_lon = 111_320.0 * origin.lat.to_radians().cos();
        let nrows = (((max_lat - min_lat) * m_lat / cell_size_m).ceil() as usize + 1).max(1);
        let ncols = (((max_lon - min_lon) * m_lon / cell_size_m).ceil() as usize + 1).max(1);
        Self { origin, cell_size_m, ncols, nrows }
    }

    fn cell_of(&self, p: GeoPoint) -> Option<usize> {
        let m_lat = 111_320.0;
        let m_lon = 111_320.0 * self.origin.lat.to_radians().cos();
        let x = (p.lon - self.origin.lon) * m_lon;
        let y = (p.lat - self.origin.lat) * m_lat;
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let col = (x / self.cell_size_m) as usize;
        let row = (y / self.cell_size_m) as usize;
        if col >= self.ncols || row >= self.nrows {
            return None;
        }
        Some(row * self.ncols + col)
    }

    fn cell_corner(&self, row: usize, col: usize) -> GeoPoint {
        let m_lat = 111_320.0;
        let m_lon = 111_320.0 * self.origin.lat.to_radians().cos();
        GeoPoint {
            lat: self.origin.lat + row as f64 * self.cell_size_m / m_lat,
            lon: self.origin.lon + col as f64 * self.cell_size_m / m_lon,
        }
    }
}

/// Per-cell call surplus (taste excluded), baseline vs counterfactual, plus
/// the difference layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurplusMap {
    pub grid: MapGridSpec,
    pub baseline: Vec<f64>,
    pub counterfactual: Vec<f64>,
    /// counterfactual - baseline, per cell.
    pub diff: Vec<f64>,
    /// Surplus of agents whose location falls outside the grid.
    pub unlocated_baseline: f64,
    pub unlocated_counterfactual: f64,
}

/// Assign each agent's call surplus (taste excluded, net of handset cost) to
/// the cell containing its mode location.
pub fn surplus_map(
    baseline: EquilibriumCase<'_>,
    counterfactual: EquilibriumCase<'_>,
    cache: &LinkValueCache,
    grid: MapGridSpec,
) -> SurplusMap {
    let n_cells = grid.ncols * grid.nrows;
    let mut map = SurplusMap {
        grid,
        baseline: vec![0.0; n_cells],
        counterfactual: vec![0.0; n_cells],
        diff: vec![0.0; n_cells],
        unlocated_baseline: 0.0,
        unlocated_counterfactual: 0.0,
    };
    let base_cs = consumer_surplus(baseline.profile, baseline.env, cache, false);
    let cf_cs = consumer_surplus(counterfactual.profile, counterfactual.env, cache, false);
    for i in 0..baseline.env.n_agents() {
        match grid.cell_of(baseline.env.locations[i]) {
            Some(cell) => {
                map.baseline[cell] += base_cs[i];
                map.counterfactual[cell] += cf_cs[i];
            }
            None => {
                map.unlocated_baseline += base_cs[i];
                map.unlocated_counterfactual += cf_cs[i];
            }
        }
    }
    for c in 0..n_cells {
        map.diff[c] = map.counterfactual[c] - map.baseline[c];
    }
    map
}

/// GeoJSON FeatureCollection of occupied cell polygons with baseline,
/// counterfactual and diff properties.
pub fn surplus_map_geojson(map: &SurplusMap) -> serde_json::Value {
    let mut features = Vec::new();
    for row in 0..map.grid.nrows {
        for col in 0..map.grid.ncols {
            let idx = row * map.grid.ncols + col;
            if map.baseline[idx] == 0.0 && map.counterfactual[idx] == 0.0 {
                continue;
            }
            let sw = map.grid.cell_corner(row, col);
            let ne = map.grid.cell_corner(row + 1, col + 1);
            features.push(serde_json::json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[
                        [sw.lon, sw.lat],
                        [ne.lon, sw.lat],
                        [ne.lon, ne.lat],
                        [sw.lon, ne.lat],
                        [sw.lon, sw.lat],
                    ]],
                },
                "properties": {
                    "row": row,
                    "col": col,
                    "baseline": map.baseline[idx],
                    "counterfactual": map.counterfactual[idx],
                    "diff": map.diff[idx],
                },
            }));
        }
    }
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}

/// Surplus map as CSV rows `row,col,baseline,counterfactual,diff`, with a
/// trailing row for the unlocated bucket.
pub fn write_surplus_map_csv<W: Write>(writer: W, map: &SurplusMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "col", "baseline", "counterfactual", "diff"])?;
    for row in 0..map.grid.nrows {
        for col in 0..map.grid.ncols {
            let idx = row * map.grid.ncols + col;
            w.write_record([
                row.to_string(),
                col.to_string(),
                map.baseline[idx].to_string(),
                map.counterfactual[idx].to_string(),
                map.diff[idx].to_string(),
            ])?;
        }
    }
    w.write_record([
        "unlocated".to_string(),
        String::new(),
        map.unlocated_baseline.to_string(),
        map.unlocated_counterfactual.to_string(),
        (map.unlocated_counterfactual - map.unlocated_baseline).to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::tests::build_env;
    use crate::model::ShockDistribution;

    fn pm(v: f64) -> ShockDistribution {
        ShockDistribution::PointMass { value: v }
    }

    #[test]
    fn never_adopter_has_zero_surplus() {
        let env =
            build_env(2, 3, vec![(0, 1, pm(8.0))], vec![0.4; 2], vec![0.1; 3], vec![5.0; 3], 0.9, &[]);
        let cache = LinkValueCache::build(&env).unwrap();
        let profile = AdoptionProfile::all_never(2);
        assert_eq!(consumer_surplus(&profile, &env, &cache, true), vec![0.0, 0.0]);
        assert_eq!(firm_revenue(&profile, &env, &cache), vec![0.0, 0.0]);
    }

    #[test]
    fn lonely_adopter_pays_the_handset() {
        // Adopter with no subscribed contacts, eta 0, price 10, delta 1.
        let env = build_env(1, 2, vec![], vec![0.0], vec![0.1; 2], vec![10.0; 2], 1.0, &[]);
        let cache = LinkValueCache::build(&env).unwrap();
        let profile = AdoptionProfile { dates: vec![Some(1)] };
        let cs = consumer_surplus(&profile, &env, &cache, true);
        assert!((cs[0] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn three_node_surplus_matches_hand_sum() {
        // Same fixture as the lifetime-utility hand computation; consumer
        // surplus with the taste included equals U(tau) there.
        let env = build_env(
            3,
            3,
            vec![(0, 1, pm(10.0)), (0, 2, pm(4.0))],
            vec![0.3, 0.0, 0.0],
            vec![0.1; 3],
            vec![2.0, 1.5, 1.0],
            0.5,
            &[(1, 1), (2, 2)],
        );
        let cache = LinkValueCache::build(&env).unwrap();
        let mut profile = AdoptionProfile::all_never(3);
        profile.enforce_initial(&env);
        profile.dates[0] = Some(1);
        let cs = consumer_surplus(&profile, &env, &cache, true);
        assert!((cs[0] - 2.379375).abs() < 1e-12, "cs0 = {}", cs[0]);
        // Without the taste the eta stream drops out.
        let cs_ex = consumer_surplus(&profile, &env, &cache, false);
        let eta_part: f64 = (1..=3).map(|t| 0.5f64.powi(t) * 0.3).sum();
        assert!((cs[0] - cs_ex[0] - eta_part).abs() < 1e-12);
    }

    #[test]
    fn zero_price_means_zero_revenue() {
        let env =
            build_env(2, 2, vec![(0, 1, pm(8.0))], vec![0.0; 2], vec![0.0; 2], vec![1.0; 2], 1.0, &[]);
        let cache = LinkValueCache::build(&env).unwrap();
        let profile = AdoptionProfile::all_at(2, 1);
        assert_eq!(firm_revenue(&profile, &env, &cache), vec![0.0, 0.0]);
    }

    #[test]
    fn point_mass_revenue_is_price_times_duration() {
        // Shock 10 at price 0.1: d* = 8, so revenue = sum_t delta^t * 0.8.
        let env =
            build_env(2, 3, vec![(0, 1, pm(10.0))], vec![0.0; 2], vec![0.1; 3], vec![1.0; 3], 0.5, &[]);
        let cache = LinkValueCache::build(&env).unwrap();
        let profile = AdoptionProfile::all_at(2, 1);
        let rev = firm_revenue(&profile, &env, &cache);
        let expect: f64 = (1..=3).map(|t| 0.5f64.powi(t) * 0.1 * 8.0).sum();
        assert!((rev[0] - expect).abs() < 1e-12);
        assert_eq!(rev[1], 0.0); // no outgoing link
    }

    #[test]
    fn government_revenue_components() {
        let env =
            build_env(2, 2, vec![(0, 1, pm(10.0))], vec![0.0; 2], vec![0.1; 2], vec![1.0; 2], 1.0, &[]);
        let cache = LinkValueCache::build(&env).unwrap();
        let profile = AdoptionProfile::all_at(2, 1);
        // All rates zero, no subsidy: zero.
        let tax0 = TaxConfig { call_rate: 0.0, handset_rate: 0.0 };
        let g = government_revenue(&profile, &env, &cache, &tax0).unwrap();
        assert!(g.call.iter().chain(&g.handset).all(|v| *v == 0.0));
        // 2% of firm revenue.
        let tax = TaxConfig { call_rate: 0.02, handset_rate: 0.0 };
        let g = government_revenue(&profile, &env, &cache, &tax).unwrap();
        let firm = firm_revenue(&profile, &env, &cache);
        assert!((g.call[0] - 0.02 * firm[0]).abs() < 1e-12);
        // Negative rates rejected.
        let bad = TaxConfig { call_rate: -0.1, handset_rate: 0.0 };
        assert!(government_revenue(&profile, &env, &cache, &bad).is_err());
    }

    #[test]
    fn subsidy_only_handset_component_is_minus_outlay() {
        let mut env = build_env(2, 2, vec![], vec![0.0; 2], vec![0.1; 2], vec![3.0; 2], 0.5, &[]);
        env.discounts[0] = 2.0;
        let cache = LinkValueCache::build(&env).unwrap();
        let profile = AdoptionProfile::all_at(2, 1);
        let tax0 = TaxConfig { call_rate: 0.0, handset_rate: 0.0 };
        let g = government_revenue(&profile, &env, &cache, &tax0).unwrap();
        assert!((g.handset[0] + 0.5 * 2.0).abs() < 1e-12);
        assert_eq!(g.handset[1], 0.0);
        assert!((subsidy_net_present_cost(&profile, &env) - 1.0).abs() < 1e-12);
    }

    fn report_for(
        env: &Environment,
        with: &AdoptionProfile,
        without: &AdoptionProfile,
    ) -> WelfareReport {
        let cache = LinkValueCache::build(env).unwrap();
        let recipients: HashSet<AgentId> = [AgentId(0)].into();
        let inputs = ReportInputs {
            with_lower: EquilibriumCase { env, profile: with },
            with_upper: EquilibriumCase { env, profile: with },
            without_lower: EquilibriumCase { env, profile: without },
            without_upper: EquilibriumCase { env, profile: without },
        };
        build_report(&inputs, &cache, &recipients, &TaxConfig::default(), 0).unwrap()
    }

    #[test]
    fn identical_arms_yield_zero_impacts() {
        let env =
            build_env(3, 3, vec![(0, 1, pm(9.0))], vec![0.2; 3], vec![0.1; 3], vec![2.0; 3], 0.9, &[]);
        let profile = AdoptionProfile::all_at(3, 1);
        let report = report_for(&env, &profile, &profile);
        assert_eq!(report.impact.all.net_welfare, BoundPair { lower: 0.0, upper: 0.0 });
        assert_eq!(report.impact.recipients.firm_revenue, BoundPair { lower: 0.0, upper: 0.0 });
        assert_eq!(report.social_rate_of_return, BoundPair { lower: 0.0, upper: 0.0 });
    }

    #[test]
    fn rate_of_return_is_gain_over_cost() {
        assert_eq!(rate_of_return(0.51, 1.0), 0.51);
        assert_eq!(rate_of_return(1.0, 0.0), 0.0);
    }

    #[test]
    fn report_accounting_identities() {
        let mut env = build_env(
            4,
            3,
            vec![(0, 1, pm(9.0)), (1, 0, pm(7.0)), (2, 0, pm(5.0))],
            vec![0.3, 0.1, 0.05, -0.2],
            vec![0.1; 3],
            vec![2.0, 1.5, 1.2],
            0.9,
            &[],
        );
        env.discounts[0] = 1.0;
        let with = AdoptionProfile { dates: vec![Some(1), Some(1), Some(2), None] };
        let without = AdoptionProfile { dates: vec![Some(2), Some(1), Some(3), None] };
        let report = report_for(&env, &with, &without);
        for group in [
            &report.with_program.all,
            &report.with_program.recipients,
            &report.with_program.nonrecipients,
        ] {
            let (net, firm, cs, gov) = (
                group.net_welfare,
                group.firm_revenue,
                group.consumer_surplus,
                group.government_revenue,
            );
            assert!((net.lower - firm.lower - cs.lower - gov.lower).abs() < 1e-9);
            assert!((net.upper - firm.upper - cs.upper - gov.upper).abs() < 1e-9);
        }
        // Group additivity for dollar outcomes.
        let (a, r, nr) =
            (&report.impact.all, &report.impact.recipients, &report.impact.nonrecipients);
        assert!((a.net_welfare.lower - r.net_welfare.lower - nr.net_welfare.lower).abs() < 1e-9);
        assert!((a.firm_revenue.upper - r.firm_revenue.upper - nr.firm_revenue.upper).abs() < 1e-9);

        // Component recount for one cell: recipients' firm revenue impact.
        let cache = LinkValueCache::build(&env).unwrap();
        let f_with = firm_revenue(&with, &env, &cache);
        let f_without = firm_revenue(&without, &env, &cache);
        let expect = f_with[0] - f_without[0];
        assert!((report.impact.recipients.firm_revenue.lower - expect).abs() < 1e-9);
    }

    #[test]
    fn report_csv_emits_all_rows() {
        let env =
            build_env(2, 2, vec![(0, 1, pm(6.0))], vec![0.1; 2], vec![0.1; 2], vec![1.0; 2], 1.0, &[]);
        let with = AdoptionProfile::all_at(2, 1);
        let without = AdoptionProfile::all_at(2, 2);
        let report = report_for(&env, &with, &without);
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 21 + 2); // header + 3 groups x 7 outcomes + cost + ror
        assert!(text.contains("net_welfare"));
    }

    #[test]
    fn surplus_map_conserves_totals() {
        let mut env = build_env(
            5,
            3,
            vec![(0, 1, pm(9.0)), (1, 2, pm(6.0)), (3, 4, pm(7.0))],
            vec![0.2; 5],
            vec![0.1; 3],
            vec![1.5; 3],
            0.9,
            &[],
        );
        // Two occupied cells plus one off-grid straggler.
        env.locations = vec![
            GeoPoint { lat: -2.00, lon: 30.00 },
            GeoPoint { lat: -2.00, lon: 30.00 },
            GeoPoint { lat: -1.95, lon: 30.05 },
            GeoPoint { lat: -1.95, lon: 30.05 },
            GeoPoint { lat: 10.0, lon: 10.0 },
        ];
        let cache = LinkValueCache::build(&env).unwrap();
        let with = AdoptionProfile::all_at(5, 1);
        let without = AdoptionProfile { dates: vec![Some(2), Some(1), None, Some(1), Some(3)] };
        let grid = MapGridSpec {
            origin: GeoPoint { lat: -2.01, lon: 29.99 },
            cell_size_m: 3000.0,
            ncols: 4,
            nrows: 4,
        };
        let map = surplus_map(
            EquilibriumCase { env: &env, profile: &with },
            EquilibriumCase { env: &env, profile: &without },
            &cache,
            grid,
        );
        let cs_with = consumer_surplus(&with, &env, &cache, false);
        let cs_without = consumer_surplus(&without, &env, &cache, false);
        let total_with: f64 = map.baseline.iter().sum::<f64>() + map.unlocated_baseline;
        let total_without: f64 =
            map.counterfactual.iter().sum::<f64>() + map.unlocated_counterfactual;
        assert!((total_with - cs_with.iter().sum::<f64>()).abs() < 1e-9);
        assert!((total_without - cs_without.iter().sum::<f64>()).abs() < 1e-9);
        assert!(map.unlocated_baseline != 0.0, "straggler should be off-grid");
        // Identical arms produce an all-zero diff layer.
        let zero = surplus_map(
            EquilibriumCase { env: &env, profile: &with },
            EquilibriumCase { env: &env, profile: &with },
            &cache,
            grid,
        );
        assert!(zero.diff.iter().all(|d| *d == 0.0));
        // GeoJSON emits one feature per occupied cell.
        let gj = surplus_map_geojson(&map);
        assert_eq!(gj["type"], "FeatureCollection");
        assert!(gj["features"].as_array().unwrap().len() >= 2);
    }

    #[test]
    fn single_period_undiscounted_sanity() {
        // With delta = 1 and one month, everything reduces to its
        // single-period definition.
        let env =
            build_env(2, 1, vec![(0, 1, pm(10.0))], vec![0.5, 0.0], vec![0.1], vec![1.0], 1.0, &[]);
        let cache = LinkValueCache::build(&env).unwrap();
        let profile = AdoptionProfile::all_at(2, 1);
        let cs = consumer_surplus(&profile, &env, &cache, true);
        assert!((cs[0] - (3.2 + 0.5 - 1.0)).abs() < 1e-12);
        let rev = firm_revenue(&profile, &env, &cache);
        assert!((rev[0] - 0.8).abs() < 1e-12);
    }
}
