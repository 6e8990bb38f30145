#![allow(dead_code)]
//! Shared fixtures for the integration and acceptance suites: small random
//! game instances with exactly computable link values, and an independent
//! utility oracle for exhaustive Nash enumeration.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use netsub_core::coverage::GeoPoint;
use netsub_core::equilibrium::{AdoptionProfile, CoverageSeries, Environment, Graph};
use netsub_core::model::{AgentId, Link, ShockDistribution, UtilityParams};

/// Per-shock surplus of the optimal call, written out from the payoff
/// definition so the oracle does not share code with the crate.
pub fn oracle_surplus(eps: f64, cost: f64, gamma: f64, alpha: f64, beta: f64) -> f64 {
    let slack = 1.0 - beta * cost;
    if slack <= 0.0 {
        return 0.0;
    }
    let base = eps * slack - alpha;
    if base <= 0.0 {
        return 0.0;
    }
    let d = base.powf(1.0 / (gamma - 1.0));
    let value = d * ((1.0 - alpha / eps) / beta - cost) - d.powf(gamma) / (beta * eps * gamma);
    value.max(0.0)
}

/// A random game instance with point-mass shocks (expectations are exact).
pub struct Instance {
    pub env: Environment,
    /// Oracle link values: `eu[link][month0]`.
    pub eu: Vec<Vec<f64>>,
}

pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n_free: u32,
    n_fixed: u32,
    horizon: u32,
) -> Instance {
    let n = n_free + n_fixed;
    let gamma = 2.0;
    let alpha = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
    let beta_cost = 1.0;
    let delta = [0.7, 0.9, 1.0][rng.random_range(0..3)];
    let params = UtilityParams { gamma, alpha, beta_cost, beta_coverage: 0.0, delta };

    let mut links = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random::<f64>() < 0.45 {
                let eps = 2.0 + rng.random::<f64>() * 28.0;
                links.push(Link {
                    caller: AgentId(a),
                    callee: AgentId(b),
                    shocks: ShockDistribution::PointMass { value: eps },
                });
            }
        }
    }
    let call_price: Vec<f64> =
        (0..horizon).map(|t| 0.1 + 0.05 * ((t / 2) % 2) as f64).collect();
    let start = 2.0 + rng.random::<f64>() * 4.0;
    let handset_price: Vec<f64> = (0..horizon)
        .map(|t| start * (1.0 - 0.6 * t as f64 / horizon.max(1) as f64))
        .collect();
    let eta: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let mut initial = BTreeMap::new();
    for k in 0..n_fixed {
        initial.insert(AgentId(n_free + k), 1 + rng.random_range(0..horizon));
    }
    let graph = Graph::new(n, links).unwrap();
    let env = Environment {
        horizon,
        params,
        eta,
        discounts: vec![0.0; n as usize],
        rural: (0..n).map(|i| i % 2 == 0).collect(),
        locations: vec![GeoPoint { lat: -2.0, lon: 30.0 }; n as usize],
        graph: Arc::new(graph),
        call_price: Arc::new(call_price),
        handset_price: Arc::new(handset_price),
        coverage: Arc::new(CoverageSeries::Constant { phi: vec![1.0; n as usize] }),
        initial: Arc::new(initial),
        tail_continuation: false,
    };
    let eu = oracle_link_values(&env);
    Instance { env, eu }
}

/// Exact per-link, per-month values from the oracle surplus formula.
pub fn oracle_link_values(env: &Environment) -> Vec<Vec<f64>> {
    env.graph
        .links
        .iter()
        .map(|link| {
            (0..env.horizon as usize)
                .map(|t| {
                    let eps = match link.shocks {
                        ShockDistribution::PointMass { value } => value,
                        _ => panic!("oracle expects point-mass shocks"),
                    };
                    oracle_surplus(eps, env.call_price[t], env.params.gamma, env.params.alpha, env.params.beta_cost)
                })
                .collect()
        })
        .collect()
}

/// Independent lifetime utility: direct summation over months and contacts.
pub fn oracle_utility(
    env: &Environment,
    eu: &[Vec<f64>],
    agent: AgentId,
    tau: Option<u32>,
    dates: &[Option<u32>],
) -> f64 {
    let Some(tau) = tau else { return 0.0 };
    let horizon = env.horizon as usize;
    let delta = env.params.delta;
    let mut total = 0.0;
    let mut dp = delta.powi(tau as i32);
    for t in tau as usize..=horizon {
        let mut flow = env.eta[agent.index()];
        for li in env.graph.out_links(agent) {
            if let Some(tj) = dates[env.graph.links[li].callee.index()] {
                if (tj as usize) <= t {
                    flow += eu[li][t - 1];
                }
            }
        }
        total += dp * flow;
        dp *= delta;
    }
    total
        - delta.powi(tau as i32)
            * (env.handset_price[(tau - 1) as usize] - env.discounts[agent.index()])
}

/// All Nash profiles by exhaustive enumeration over `(horizon + 1)^n_free`
/// strategy combinations (tolerance 1e-9 on deviation gains).
pub fn enumerate_nash(env: &Environment, eu: &[Vec<f64>]) -> Vec<Vec<Option<u32>>> {
    let n = env.n_agents();
    let free: Vec<AgentId> =
        (0..n as u32).map(AgentId).filter(|a| !env.is_initial(*a)).collect();
    let choices: Vec<Option<u32>> =
        std::iter::once(None).chain((1..=env.horizon).map(Some)).collect();
    let mut base = vec![None; n];
    for (agent, month) in env.initial.iter() {
        base[agent.index()] = Some(*month);
    }
    let mut nash = Vec::new();
    let total = choices.len().pow(free.len() as u32);
    for code in 0..total {
        let mut dates = base.clone();
        let mut c = code;
        for a in &free {
            dates[a.index()] = choices[c % choices.len()];
            c /= choices.len();
        }
        let mut is_nash = true;
        'outer: for a in &free {
            let current = oracle_utility(env, eu, *a, dates[a.index()], &dates);
            for alt in &choices {
                if oracle_utility(env, eu, *a, *alt, &dates) > current + 1e-9 {
                    is_nash = false;
                    break 'outer;
                }
            }
        }
        if is_nash {
            nash.push(dates);
        }
    }
    nash
}

/// Convenience: dates vector of a profile.
pub fn dates_of(profile: &AdoptionProfile) -> Vec<Option<u32>> {
    profile.dates.clone()
}
