//! Structural call-demand model: per-shock duration choice, per-shock
//! surplus, and expected monthly values of a directed link.
//!
//! A caller facing communication shock `eps` and per-second cost `c` picks a
//! monthly duration maximizing the monetary payoff
//!
//! ```text
//!   (1/beta_cost) * [d - (1/eps)(d^gamma/gamma + alpha*d)] - c*d
//! ```
//!
//! which has the closed-form solution
//! `d* = max(0, eps*(1 - beta_cost*c) - alpha)^(1/(gamma-1))`, zero whenever
//! `beta_cost*c >= 1`. Expected values integrate the payoff at `d*` over the
//! link's shock distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, GaussLegendre};

/// Agent identifier; doubles as the index into environment arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Structural parameters shared by the usage and adoption models.
///
/// Utilities are in real dollars, durations in seconds, one period is one
/// calendar month; `delta` is the per-month discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    /// Curvature of call benefits; marginal returns decline faster for
    /// larger values. Must exceed 1.
    pub gamma: f64,
    /// Censoring intercept: months with small shocks produce no call.
    pub alpha: f64,
    /// Utility-to-money conversion (per dollar). Positive.
    pub beta_cost: f64,
    /// Coverage hassle coefficient (dollars/second), applied as
    /// `cost = price + beta_coverage * phi_caller * phi_callee`. Signed
    /// configuration input; no sign is imposed.
    pub beta_coverage: f64,
    /// Per-month discount factor in (0, 1].
    pub delta: f64,
}

impl UtilityParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma, self.alpha, self.beta_cost, self.beta_coverage, self.delta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("utility parameters".into()));
        }
        if self.gamma <= 1.0 {
            return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if self.beta_cost <= 0.0 {
            return Err(Error::InvalidParameter("beta_cost must be positive".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidParameter("alpha must be nonnegative".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0,1], got {}", self.delta)));
        }
        Ok(())
    }

    /// Monthly discount factor equivalent to the given annual rate.
    pub fn monthly_delta_from_annual(annual: f64) -> f64 {
        annual.powf(1.0 / 12.0)
    }
}

/// Per-second cost of a call, split into billed price and coverage hassle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallCost {
    /// Billed price, dollars/second.
    pub price: f64,
    /// Hassle term `beta_coverage * phi_caller * phi_callee`, dollars/second.
    pub hassle: f64,
}

impl CallCost {
    pub fn new(price: f64, beta_coverage: f64, phi_caller: f64, phi_callee: f64) -> Self {
        Self { price, hassle: beta_coverage * phi_caller * phi_callee }
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.price + self.hassle
    }
}

/// Distribution of the monthly communication shock on one directed link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ShockDistribution {
    /// Log-normal with log-scale location `mu` and shape `sigma`.
    LogNormal { mu: f64, sigma: f64 },
    /// Degenerate distribution; useful for exact expectations in tests and
    /// deterministic scenarios.
    PointMass { value: f64 },
}

impl ShockDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ShockDistribution::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "log-normal shock requires finite mu and sigma > 0, got mu={mu} sigma={sigma}"
                    )));
                }
            }
            ShockDistribution::PointMass { value } => {
                if !value.is_finite() || value <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "point-mass shock must be finite and positive, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            ShockDistribution::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = (x.ln() - mu) / sigma;
                    (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
                }
            }
            ShockDistribution::PointMass { .. } => f64::NAN,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ShockDistribution::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    math::normal_cdf((x.ln() - mu) / sigma)
                }
            }
            ShockDistribution::PointMass { value } => {
                if x < value {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            ShockDistribution::LogNormal { mu, sigma } => {
                (mu + sigma * math::inverse_normal_cdf(p)).exp()
            }
            ShockDistribution::PointMass { value } => value,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ShockDistribution::LogNormal { mu, sigma } => {
                let dist = rand_distr::LogNormal::new(mu, sigma).expect("validated parameters");
                rng.sample(dist)
            }
            ShockDistribution::PointMass { value } => value,
        }
    }
}

/// A directed contact link with its shock distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub caller: AgentId,
    pub callee: AgentId,
    pub shocks: ShockDistribution,
}

impl Link {
    pub fn validate(&self) -> Result<()> {
        if self.caller == self.callee {
            return Err(Error::InvalidParameter(format!("self link on agent {}", self.caller)));
        }
        self.shocks.validate()
    }
}

fn check_shock_cost(epsilon: f64, cost: f64) -> Result<()> {
    if !epsilon.is_finite() || !cost.is_finite() {
        return Err(Error::NonFinite("shock or cost".into()));
    }
    if epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!("shock must be positive, got {epsilon}")));
    }
    if cost < 0.0 {
        return Err(Error::InvalidParameter(format!("cost must be nonnegative, got {cost}")));
    }
    Ok(())
}

/// Duration (seconds) maximizing the per-shock monetary payoff.
pub fn optimal_duration(epsilon: f64, cost: f64, params: &UtilityParams) -> Result<f64> {
    check_shock_cost(epsilon, cost)?;
    Ok(duration_unchecked(epsilon, cost, params))
}

#[inline]
fn duration_unchecked(epsilon: f64, cost: f64, params: &UtilityParams) -> f64 {
    let slack = 1.0 - params.beta_cost * cost;
    if slack <= 0.0 {
        return 0.0;
    }
    let base = epsilon * slack - params.alpha;
    if base <= 0.0 {
        return 0.0;
    }
    base.powf(1.0 / (params.gamma - 1.0))
}

/// Monetary surplus (dollars) of the optimal call at shock `epsilon`.
pub fn call_surplus(epsilon: f64, cost: f64, params: &UtilityParams) -> Result<f64> {
    check_shock_cost(epsilon, cost)?;
    Ok(surplus_unchecked(epsilon, cost, params))
}

#[inline]
fn surplus_unchecked(epsilon: f64, cost: f64, params: &UtilityParams) -> f64 {
    let d = duration_unchecked(epsilon, cost, params);
    if d == 0.0 {
        return 0.0;
    }
    let margin = (1.0 - params.alpha / epsilon) / params.beta_cost - cost;
    let curvature = d.powf(params.gamma) / (params.beta_cost * epsilon * params.gamma);
    (d * margin - curvature).max(0.0)
}

/// Quadrature settings for expected-value integrals.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    /// Absolute tolerance.
    pub tol: f64,
    /// Upper-tail mass cut: integrate up to the `1 - tail_mass` quantile.
    pub tail_mass: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { tol: math::DEFAULT_QUAD_TOL, tail_mass: 1e-6 }
    }
}

/// Expected per-month surplus and duration of a link at the given cost:
/// `(E[surplus], E[duration])` integrated over the shock distribution.
pub fn expected_link_values(
    shocks: &ShockDistribution,
    cost: f64,
    params: &UtilityParams,
    rule: &GaussLegendre,
    quad: &QuadConfig,
) -> Result<(f64, f64)> {
    if !cost.is_finite() {
        return Err(Error::NonFinite("cost".into()));
    }
    if cost < 0.0 {
        return Err(Error::InvalidParameter(format!("cost must be nonnegative, got {cost}")));
    }
    let slack = 1.0 - params.beta_cost * cost;
    if slack <= 0.0 {
        return Ok((0.0, 0.0));
    }
    match *shocks {
        ShockDistribution::PointMass { value } => {
            Ok((surplus_unchecked(value, cost, params), duration_unchecked(value, cost, params)))
        }
        ShockDistribution::LogNormal { .. } => {
            let threshold = params.alpha / slack;
            let lower = threshold.max(shocks.quantile(1e-12));
            let upper = shocks.quantile(1.0 - quad.tail_mass);
            if lower >= upper {
                return Ok((0.0, 0.0));
            }
            let f = |eps: f64| {
                let w = shocks.pdf(eps);
                [surplus_unchecked(eps, cost, params) * w, duration_unchecked(eps, cost, params) * w]
            };
            let q = math::integrate_adaptive(rule, f, lower, upper, quad.tol)?;
            Ok((q.value[0].max(0.0), q.value[1].max(0.0)))
        }
    }
}

/// Expected monthly utility (dollars) the caller derives from one link.
pub fn expected_link_utility(
    link: &Link,
    price: f64,
    phi_caller: f64,
    phi_callee: f64,
    params: &UtilityParams,
) -> Result<f64> {
    for phi in [phi_caller, phi_callee] {
        if !(0.0..=1.0).contains(&phi) {
            return Err(Error::InvalidParameter(format!("coverage must lie in [0,1], got {phi}")));
        }
    }
    let cost = CallCost::new(price, params.beta_coverage, phi_caller, phi_callee);
    let rule = GaussLegendre::new(math::GL_ORDER);
    expected_link_values(&link.shocks, cost.total(), params, &rule, &QuadConfig::default())
        .map(|(eu, _)| eu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn base_params() -> UtilityParams {
        UtilityParams { gamma: 2.0, alpha: 1.0, beta_cost: 1.0, beta_coverage: 0.0, delta: 1.0 }
    }

    /// Grid-search maximizer of the per-shock payoff, independent of the
    /// closed form. The search cap comes from the payoff itself: marginal
    /// benefit is negative past `(eps*(1-beta*c))^(1/(gamma-1))` even with
    /// alpha = 0.
    fn grid_argmax(epsilon: f64, cost: f64, p: &UtilityParams, points: usize) -> f64 {
        let payoff = |d: f64| {
            (d - (d.powf(p.gamma) / p.gamma + p.alpha * d) / epsilon) / p.beta_cost - cost * d
        };
        let slack = 1.0 - p.beta_cost * cost;
        let cap = if slack <= 0.0 { 1.0 } else { (epsilon * slack).powf(1.0 / (p.gamma - 1.0)) + 1.0 };
        let mut best = (0.0, payoff(0.0));
        for i in 1..=points {
            let d = cap * i as f64 / points as f64;
            let v = payoff(d);
            if v > best.1 {
                best = (d, v);
            }
        }
        best.0
    }

    #[test]
    fn duration_example_from_first_order_condition() {
        let d = optimal_duration(10.0, 0.1, &base_params()).unwrap();
        assert!((d - 8.0).abs() < 1e-12);
        // Independent numeric maximization agrees.
        let g = grid_argmax(10.0, 0.1, &base_params(), 200_000);
        assert!((d - g).abs() <= 9.0 / 200_000.0 * 2.0, "closed form {d} vs grid {g}");
    }

    #[test]
    fn duration_censoring_cases() {
        let p = base_params();
        // Shock at or below the censoring threshold.
        assert_eq!(optimal_duration(1.0 / 0.9, 0.1, &p).unwrap(), 0.0);
        assert_eq!(optimal_duration(1.0, 0.0, &p).unwrap(), 0.0);
        // Cost exceeding maximal marginal benefit.
        assert_eq!(optimal_duration(1e9, 1.0, &p).unwrap(), 0.0);
        assert_eq!(optimal_duration(1e9, 2.5, &p).unwrap(), 0.0);
    }

    #[test]
    fn duration_rejects_bad_inputs() {
        let p = base_params();
        assert!(optimal_duration(f64::NAN, 0.1, &p).is_err());
        assert!(optimal_duration(10.0, f64::INFINITY, &p).is_err());
        assert!(optimal_duration(-1.0, 0.1, &p).is_err());
        assert!(optimal_duration(10.0, -0.1, &p).is_err());
    }

    #[test]
    fn surplus_examples() {
        let p = base_params();
        let s = call_surplus(10.0, 0.1, &p).unwrap();
        assert!((s - 3.2).abs() < 1e-12, "got {s}");
        assert_eq!(call_surplus(1.0, 0.1, &p).unwrap(), 0.0);
        let free = UtilityParams { alpha: 0.0, ..p };
        let d = optimal_duration(4.0, 0.0, &free).unwrap();
        assert!((d - 4.0).abs() < 1e-12);
        let s = call_surplus(4.0, 0.0, &free).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn surplus_matches_grid_maximum_value() {
        let p = base_params();
        // Value at the grid argmax can only fall below the closed-form optimum.
        let payoff = |d: f64| (d - (d * d / 2.0 + d) / 10.0) - 0.1 * d;
        let s = call_surplus(10.0, 0.1, &p).unwrap();
        let g = grid_argmax(10.0, 0.1, &p, 100_000);
        assert!(s >= payoff(g) - 1e-9);
        assert!((s - payoff(g)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn duration_monotone_in_shock_and_cost(
            eps in 0.1f64..500.0,
            bump in 0.01f64..50.0,
            cost in 0.0f64..1.5,
            dc in 0.001f64..0.5,
            gamma in 1.2f64..4.0,
            alpha in 0.0f64..3.0,
        ) {
            let p = UtilityParams { gamma, alpha, beta_cost: 1.0, beta_coverage: 0.0, delta: 1.0 };
            let d = optimal_duration(eps, cost, &p).unwrap();
            prop_assert!(optimal_duration(eps + bump, cost, &p).unwrap() >= d);
            prop_assert!(optimal_duration(eps, cost + dc, &p).unwrap() <= d);
            let s = call_surplus(eps, cost, &p).unwrap();
            prop_assert!(call_surplus(eps + bump, cost, &p).unwrap() >= s - 1e-12);
            prop_assert!(call_surplus(eps, cost + dc, &p).unwrap() <= s + 1e-12);
        }

        #[test]
        fn closed_form_in_grid_tolerance(
            eps in 0.5f64..200.0,
            cost in 0.0f64..0.9,
            gamma in 1.3f64..3.5,
            alpha in 0.0f64..2.0,
        ) {
            let p = UtilityParams { gamma, alpha, beta_cost: 1.0, beta_coverage: 0.0, delta: 1.0 };
            let d = optimal_duration(eps, cost, &p).unwrap();
            let grid = grid_argmax(eps, cost, &p, 20_000);
            let slack = 1.0 - cost;
            let cap = (eps * slack).powf(1.0 / (gamma - 1.0)) + 1.0;
            prop_assert!((d - grid).abs() <= cap / 20_000.0 + 1e-9);
        }
    }

    #[test]
    fn point_mass_expectation_reduces_to_single_shock() {
        let p = base_params();
        let link = Link {
            caller: AgentId(0),
            callee: AgentId(1),
            shocks: ShockDistribution::PointMass { value: 10.0 },
        };
        let eu = expected_link_utility(&link, 0.1, 1.0, 1.0, &p).unwrap();
        assert!((eu - 3.2).abs() < 1e-12);
    }

    #[test]
    fn prohibitive_price_kills_link_value() {
        let p = base_params();
        let link = Link {
            caller: AgentId(0),
            callee: AgentId(1),
            shocks: ShockDistribution::LogNormal { mu: 2.0, sigma: 0.8 },
        };
        assert_eq!(expected_link_utility(&link, 1.0, 1.0, 1.0, &p).unwrap(), 0.0);
        assert_eq!(expected_link_utility(&link, 7.3, 1.0, 1.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_matches_monte_carlo() {
        let p = base_params();
        let shocks = ShockDistribution::LogNormal { mu: 2.2, sigma: 0.7 };
        let rule = GaussLegendre::new(math::GL_ORDER);
        let (eu, ed) =
            expected_link_values(&shocks, 0.05, &p, &rule, &QuadConfig::default()).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(91);
        let n = 200_000usize;
        let (mut sum_s, mut sum_s2, mut sum_d) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let eps = shocks.sample(&mut rng);
            let s = call_surplus(eps, 0.05, &p).unwrap();
            sum_s += s;
            sum_s2 += s * s;
            sum_d += optimal_duration(eps, 0.05, &p).unwrap();
        }
        let mean = sum_s / n as f64;
        let se = ((sum_s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (eu - mean).abs() < 3.0 * se || (eu - mean).abs() / mean < 1e-3,
            "quadrature {eu} vs MC {mean} (se {se})"
        );
        let mean_d = sum_d / n as f64;
        assert!((ed - mean_d).abs() / mean_d < 0.02, "E[d] {ed} vs MC {mean_d}");
    }

    #[test]
    fn doubling_price_never_raises_link_utility() {
        let p = base_params();
        let shocks = ShockDistribution::LogNormal { mu: 1.8, sigma: 0.9 };
        let link = Link { caller: AgentId(0), callee: AgentId(1), shocks };
        for price in [0.0, 0.02, 0.1, 0.3] {
            let lo = expected_link_utility(&link, price, 0.7, 0.9, &p).unwrap();
            let hi = expected_link_utility(&link, price * 2.0, 0.7, 0.9, &p).unwrap();
            assert!(hi <= lo + 1e-10, "price {price}: {hi} > {lo}");
        }
    }

    #[test]
    fn shock_quantile_inverts_cdf() {
        let d = ShockDistribution::LogNormal { mu: 1.5, sigma: 0.6 };
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let x = d.quantile(p);
            assert!((d.cdf(x) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn params_validation_catches_bad_values() {
        let ok = base_params();
        assert!(ok.validate().is_ok());
        assert!(UtilityParams { gamma: 1.0, ..ok }.validate().is_err());
        assert!(UtilityParams { beta_cost: 0.0, ..ok }.validate().is_err());
        assert!(UtilityParams { alpha: -0.1, ..ok }.validate().is_err());
        assert!(UtilityParams { delta: 0.0, ..ok }.validate().is_err());
        assert!(UtilityParams { delta: 1.2, ..ok }.validate().is_err());
    }
}
