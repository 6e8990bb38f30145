//! Scenario configuration: one versioned JSON document with every knob of
//! the synthetic world, all defaults embedded and overridable. Seeds are
//! explicit; nothing draws from ambient randomness.

use serde::{Deserialize, Serialize};

use crate::coverage::GeoPoint;
use crate::error::{Error, Result};
use crate::model::UtilityParams;
use crate::policy::TargetingRule;
use crate::welfare::TaxConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub version: u32,
    pub seed: u64,
    pub population: u32,
    /// Months simulated.
    pub horizon: u32,
    pub space: SpaceConfig,
    pub graph: GraphConfig,
    pub shocks: ShockConfig,
    pub utility: UtilityConfig,
    pub eta: EtaConfig,
    pub prices: PriceConfig,
    pub coverage: CoverageConfig,
    pub initial_adopters: InitialAdoptersConfig,
    pub recipients: RecipientsConfig,
    pub program: ProgramConfig,
    pub rules: RulesConfig,
    /// Replications for random targeting rules.
    pub random_replications: u32,
    /// Cap on taste bounds where no deviation binds.
    pub eta_cap: f64,
    /// Comparison group: non-recipients adopting within this many months
    /// from the program month.
    pub comparison_window_months: u32,
    pub tax: TaxConfig,
    pub cdr: CdrConfig,
    pub forensics: ForensicsConfig,
    /// Starting point of the observed-world solve: a network growing out of
    /// the initial adopters (`never`) or the coordinated optimistic start
    /// (`first_month`).
    pub observed_init: ObservedInit,
    /// Surplus map cell edge, kilometers.
    pub map_cell_km: f64,
    /// Rules to emit surplus maps for (by rule name).
    pub map_rules: Vec<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 1,
            population: 1000,
            horizon: 36,
            space: SpaceConfig::default(),
            graph: GraphConfig::default(),
            shocks: ShockConfig::default(),
            utility: UtilityConfig::default(),
            eta: EtaConfig::default(),
            prices: PriceConfig::default(),
            coverage: CoverageConfig::default(),
            initial_adopters: InitialAdoptersConfig::default(),
            recipients: RecipientsConfig::default(),
            program: ProgramConfig::default(),
            rules: RulesConfig::default(),
            random_replications: 10,
            eta_cap: 1e6,
            comparison_window_months: 4,
            tax: TaxConfig::default(),
            cdr: CdrConfig::default(),
            forensics: ForensicsConfig::default(),
            observed_init: ObservedInit::Never,
            map_cell_km: 5.0,
            map_rules: vec!["implemented".into()],
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.population == 0 {
            return Err(Error::InvalidConfig("population must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least one month".into()));
        }
        if self.program.month < 1 || self.program.month > self.horizon {
            return Err(Error::InvalidConfig(format!(
                "program month {} outside horizon {}",
                self.program.month, self.horizon
            )));
        }
        if self.initial_adopters.fraction < 0.0 || self.initial_adopters.fraction >= 1.0 {
            return Err(Error::InvalidConfig("initial adopter fraction must lie in [0,1)".into()));
        }
        if self.graph.mean_out_degree < 0.0 {
            return Err(Error::InvalidConfig("mean out degree must be nonnegative".into()));
        }
        if self.graph.mean_out_degree >= self.population as f64 {
            return Err(Error::InvalidConfig(format!(
                "mean out degree {} infeasible for population {}",
                self.graph.mean_out_degree, self.population
            )));
        }
        if self.recipients.count as usize >= self.population as usize {
            return Err(Error::InvalidConfig("recipient cohort exceeds population".into()));
        }
        self.utility.params()?.validate()?;
        self.tax.validate()?;
        if self.prices.call_steps == 0 {
            return Err(Error::InvalidConfig("call price staircase needs at least one step".into()));
        }
        Ok(())
    }

    pub fn utility_params(&self) -> Result<UtilityParams> {
        self.utility.params()
    }
}

/// Spatial layout: a square of side `extent_km` anchored at `origin`, with
/// city disks holding the urban share of the population.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceConfig {
    pub origin: GeoPoint,
    pub extent_km: f64,
    pub cities: u32,
    pub city_radius_km: f64,
    pub urban_fraction: f64,
    /// Spacing of the rural tower lattice, kilometers.
    pub rural_tower_spacing_km: f64,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            origin: GeoPoint { lat: -2.6, lon: 29.3 },
            extent_km: 120.0,
            cities: 3,
            city_radius_km: 6.0,
            urban_fraction: 0.35,
            rural_tower_spacing_km: 25.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub mean_out_degree: f64,
    /// Probability a partner is drawn from the same spatial bucket.
    pub local_share: f64,
    /// Multiplier on the chance that a recipient's partner is another
    /// recipient (1 = no homophily).
    pub recipient_homophily: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { mean_out_degree: 8.0, local_share: 0.6, recipient_homophily: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockFamily {
    LogNormal,
    /// Degenerate shocks at the drawn location; exact expectations.
    PointMass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ShockConfig {
    pub family: ShockFamily,
    /// Per-link log-location drawn from Normal(mu_mean, mu_sd).
    pub mu_mean: f64,
    pub mu_sd: f64,
    /// Shared log-scale.
    pub sigma: f64,
}

impl Default for ShockConfig {
    fn default() -> Self {
        Self { family: ShockFamily::LogNormal, mu_mean: 3.2, mu_sd: 0.5, sigma: 0.8 }
    }
}

/// Structural utility parameters with the discount given annually.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub beta_cost: f64,
    pub beta_coverage: f64,
    /// Annual discount rate, converted to a monthly factor.
    pub annual_discount: f64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self { gamma: 2.0, alpha: 10.0, beta_cost: 20.0, beta_coverage: -0.001, annual_discount: 0.9 }
    }
}

impl UtilityConfig {
    pub fn params(&self) -> Result<UtilityParams> {
        let params = UtilityParams {
            gamma: self.gamma,
            alpha: self.alpha,
            beta_cost: self.beta_cost,
            beta_coverage: self.beta_coverage,
            delta: UtilityParams::monthly_delta_from_annual(self.annual_discount),
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EtaConfig {
    pub mean: f64,
    pub sd: f64,
    /// Added to the mean for rural agents.
    pub rural_shift: f64,
}

impl Default for EtaConfig {
    fn default() -> Self {
        Self { mean: 0.0, sd: 1.0, rural_shift: 0.0 }
    }
}

/// Calling price follows a declining staircase with `call_steps` distinct
/// levels (few levels keep the link-value cache compact). The handset index
/// decays geometrically toward its floor: the early decline is steep and
/// flattens out, which is what spreads adoption dates across the horizon
/// (with a linear decline the adopt-now-or-never condition never changes).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceConfig {
    pub call_start: f64,
    pub call_end: f64,
    pub call_steps: u32,
    pub handset_start: f64,
    pub handset_end: f64,
    /// Monthly ratio of the remaining gap to the floor; 1.0 means a linear
    /// decline instead.
    pub handset_decay: f64,
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self {
            call_start: 0.004,
            call_end: 0.0025,
            call_steps: 6,
            handset_start: 60.0,
            handset_end: 20.0,
            handset_decay: 0.88,
        }
    }
}

impl PriceConfig {
    pub fn call_series(&self, horizon: u32) -> Vec<f64> {
        let steps = self.call_steps.max(1) as usize;
        (0..horizon as usize)
            .map(|t| {
                let level = t * steps / horizon as usize;
                let frac = if steps == 1 { 0.0 } else { level as f64 / (steps - 1) as f64 };
                self.call_start + (self.call_end - self.call_start) * frac
            })
            .collect()
    }

    pub fn handset_series(&self, horizon: u32) -> Vec<f64> {
        if self.handset_decay >= 1.0 {
            return (0..horizon as usize)
                .map(|t| {
                    let frac = if horizon <= 1 { 0.0 } else { t as f64 / (horizon - 1) as f64 };
                    self.handset_start + (self.handset_end - self.handset_start) * frac
                })
                .collect();
        }
        (0..horizon as usize)
            .map(|t| {
                self.handset_end
                    + (self.handset_start - self.handset_end) * self.handset_decay.powi(t as i32)
            })
            .collect()
    }
}

/// How per-agent coverage fractions are produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CoverageConfig {
    /// One value for everyone.
    Constant { phi: f64 },
    /// Urban agents get `urban`; rural agents draw uniformly from
    /// `[rural_min, rural_max]`.
    PerAgent { urban: f64, rural_min: f64, rural_max: f64 },
    /// Synthesize terrain, rasterize line-of-sight coverage from the tower
    /// set, and measure each agent's covered share within `radius_m`.
    Terrain { cell_size_m: f64, relief_m: f64, radius_m: f64 },
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig::PerAgent { urban: 0.95, rural_min: 0.55, rural_max: 0.9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialAdoptersConfig {
    pub fraction: f64,
    /// Fixed dates are spread uniformly over the first `months` months.
    pub months: u32,
}

impl Default for InitialAdoptersConfig {
    fn default() -> Self {
        Self { fraction: 0.08, months: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RecipientsConfig {
    pub count: u32,
    /// Restrict the planted cohort to rural agents.
    pub rural_only: bool,
}

impl Default for RecipientsConfig {
    fn default() -> Self {
        Self { count: 50, rural_only: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProgramConfig {
    pub discount: f64,
    pub month: u32,
    pub full_price: f64,
    pub repayment: f64,
    pub payments_made: u32,
}

impl Default for ProgramConfig {
    fn default() -> Self {
        Self { discount: 18.94, month: 13, full_price: 28.0, repayment: 1.81, payments_made: 5 }
    }
}

/// Initialization of the observed-world equilibrium solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedInit {
    Never,
    FirstMonth,
}

/// Which targeting rules a run evaluates.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum RulesConfig {
    /// Only the implemented program.
    #[default]
    ImplementedOnly,
    /// The full seventeen-variant comparison at the given budget (defaults
    /// to the planted cohort size).
    Standard { budget: Option<usize> },
    /// Explicit list.
    List { rules: Vec<TargetingRule> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CdrConfig {
    /// A month's duration is split into at most this many calls.
    pub max_calls_per_link_month: u32,
    /// Probability a call stamps the secondary tower instead of the home
    /// tower.
    pub secondary_tower_prob: f64,
    /// Emit one 1-second call in each adopter's first month so activations are
    /// always observable.
    pub activation_ping: bool,
    /// Calendar anchor of scenario month 1 (UTC).
    pub epoch_year: i32,
    pub epoch_month: u32,
}

impl Default for CdrConfig {
    fn default() -> Self {
        Self {
            max_calls_per_link_month: 4,
            secondary_tower_prob: 0.2,
            activation_ping: true,
            epoch_year: 2007,
            epoch_month: 1,
        }
    }
}

/// Forensic structure planted into the simulated records.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForensicsConfig {
    /// Model id of the subsidized handset.
    pub subsidized_model: u32,
    /// Size of the non-subsidized model catalog.
    pub other_models: u32,
    /// Subsidized-model handsets activated by non-recipients outside the
    /// program window, before or after (exercises the window cut).
    pub off_window_same_model: u32,
    /// Direct recipient-to-buyer handset transfers (two lineage segments).
    pub handoffs: u32,
    /// Middleman accounts; each briefly holds two subsidized handsets.
    pub middlemen: u32,
    /// Transactions per middleman interior segment (detection requires at
    /// most 20).
    pub middleman_txns: u32,
    /// Identification window length: recipients are handsets of the
    /// subsidized model activated within this many months of the program.
    pub window_months: u32,
}

impl Default for ForensicsConfig {
    fn default() -> Self {
        Self {
            subsidized_model: 113,
            other_models: 8,
            off_window_same_model: 0,
            handoffs: 0,
            middlemen: 0,
            middleman_txns: 6,
            window_months: 4,
        }
    }
}
