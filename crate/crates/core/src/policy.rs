//! Subsidy programs, targeting rules, and the proximal/ripple/total impact
//! decomposition.
//!
//! A counterfactual program is evaluated in three layers: the baseline
//! equilibrium with the program in place, the profile where only recipients
//! re-optimize against a frozen baseline after the program is removed
//! (proximal), and the full re-equilibration without the program (total).
//! Ripple is total minus proximal, cell by cell.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    best_response, solve_equilibrium, AdoptionProfile, Environment, LinkValueCache, SolveOptions,
};
use crate::error::{Error, Result};
use crate::model::AgentId;
use crate::welfare::{outcome_levels, EquilibriumCase, OutcomeLevels, PerGroup, TaxConfig};

/// A handset subsidy program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsidyProgram {
    pub recipients: BTreeSet<AgentId>,
    /// Handset discount in dollars.
    pub discount: f64,
    /// Program month (1-based scenario month).
    pub month: u32,
    /// Full handset price at the program month.
    pub full_price: f64,
    /// Monthly repayment owed by recipients.
    pub repayment: f64,
    /// Repayments actually made, on average.
    pub payments_made: u32,
}

impl SubsidyProgram {
    /// Program with the canonical parameters: $18.94 discount off a $28
    /// handset, $1.81 repayments with five made.
    pub fn standard(recipients: BTreeSet<AgentId>, month: u32) -> Self {
        Self { recipients, discount: 18.94, month, full_price: 28.0, repayment: 1.81, payments_made: 5 }
    }

    /// Discount implied by the repayment schedule:
    /// `full_price - payments_made * repayment`.
    pub fn derived_discount(&self) -> f64 {
        self.full_price - self.payments_made as f64 * self.repayment
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        if !self.discount.is_finite() || self.discount < 0.0 {
            return Err(Error::InvalidParameter("discount must be nonnegative".into()));
        }
        if self.discount > self.full_price {
            return Err(Error::InvalidParameter(format!(
                "discount {} exceeds full price {}",
                self.discount, self.full_price
            )));
        }
        if self.month < 1 || self.month > env.horizon {
            return Err(Error::InvalidParameter(format!("program month {} outside horizon", self.month)));
        }
        for r in &self.recipients {
            if r.index() >= env.n_agents() {
                return Err(Error::UnknownAgent(r.0 as u64));
            }
        }
        Ok(())
    }
}

/// Geographic restriction of an allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoFilter {
    Any,
    Rural,
    Urban,
}

impl GeoFilter {
    fn admits(&self, rural: bool) -> bool {
        match self {
            GeoFilter::Any => true,
            GeoFilter::Rural => rural,
            GeoFilter::Urban => !rural,
        }
    }
}

/// Ranking metric for priority allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMetric {
    /// Distinct undirected contacts in the eventual graph.
    Degree,
    /// Contacts already adopted before the program month.
    AdoptedContacts,
    /// Adopted contacts divided by degree.
    FractionContactsAdopted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    High,
    Low,
}

/// Which adopter cohort hands out vouchers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoucherCohort {
    /// Subscribed in the first simulated month.
    EarlyAdopters,
    /// Subscribed the month before the program.
    RecentAdopters,
}

/// One targeting rule variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RuleVariant {
    /// The actual program's recipient set, unchanged.
    Implemented,
    Priority { metric: PriorityMetric, direction: Direction },
    Random { geo: GeoFilter },
    /// Breadth-first cluster of eligible nodes around a random seed.
    SuperCluster,
    Voucher { cohort: VoucherCohort, geo: GeoFilter },
}

/// A targeting rule with its node budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetingRule {
    pub variant: RuleVariant,
    pub budget: usize,
}

impl TargetingRule {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidParameter("targeting budget must be positive".into()));
        }
        Ok(())
    }

    /// Stable machine name for file outputs.
    pub fn name(&self) -> String {
        match self.variant {
            RuleVariant::Implemented => "implemented".into(),
            RuleVariant::Priority { metric, direction } => {
                let m = match metric {
                    PriorityMetric::Degree => "degree",
                    PriorityMetric::AdoptedContacts => "adopted_contacts",
                    PriorityMetric::FractionContactsAdopted => "fraction_adopted",
                };
                let d = match direction {
                    Direction::High => "high",
                    Direction::Low => "low",
                };
                format!("priority_{m}_{d}")
            }
            RuleVariant::Random { geo } => format!("random{}", geo_suffix(geo)),
            RuleVariant::SuperCluster => "random_super_cluster".into(),
            RuleVariant::Voucher { cohort, geo } => {
                let c = match cohort {
                    VoucherCohort::EarlyAdopters => "early",
                    VoucherCohort::RecentAdopters => "recent",
                };
                format!("voucher_{c}{}", geo_suffix(geo))
            }
        }
    }
}

fn geo_suffix(geo: GeoFilter) -> &'static str {
    match geo {
        GeoFilter::Any => "",
        GeoFilter::Rural => "_rural",
        GeoFilter::Urban => "_urban",
    }
}

/// The seventeen rule variants of the standard comparison table, sharing one
/// budget.
pub fn standard_rule_set(budget: usize) -> Vec<TargetingRule> {
    use Direction::*;
    use PriorityMetric::*;
    let mut rules = vec![TargetingRule { variant: RuleVariant::Implemented, budget }];
    for (metric, direction) in [
        (Degree, High),
        (Degree, Low),
        (AdoptedContacts, High),
        (AdoptedContacts, Low),
        (FractionContactsAdopted, High),
        (FractionContactsAdopted, Low),
    ] {
        rules.push(TargetingRule { variant: RuleVariant::Priority { metric, direction }, budget });
    }
    for geo in [GeoFilter::Any, GeoFilter::Rural, GeoFilter::Urban] {
        rules.push(TargetingRule { variant: RuleVariant::Random { geo }, budget });
    }
    rules.push(TargetingRule { variant: RuleVariant::SuperCluster, budget });
    for cohort in [VoucherCohort::EarlyAdopters, VoucherCohort::RecentAdopters] {
        for geo in [GeoFilter::Any, GeoFilter::Rural, GeoFilter::Urban] {
            rules.push(TargetingRule { variant: RuleVariant::Voucher { cohort, geo }, budget });
        }
    }
    rules
}

/// Nodes a counterfactual allocation may target: not actual recipients, not
/// adopted before the program month in the baseline, not never-adopters,
/// and inside the geographic filter. Sorted by id.
pub fn eligible_nodes(
    env: &Environment,
    baseline: &AdoptionProfile,
    actual_recipients: &BTreeSet<AgentId>,
    program_month: u32,
    geo: GeoFilter,
) -> Vec<AgentId> {
    (0..env.n_agents() as u32)
        .map(AgentId)
        .filter(|a| {
            if actual_recipients.contains(a) || !geo.admits(env.rural[a.index()]) {
                return false;
            }
            match baseline.dates[a.index()] {
                Some(tau) => tau >= program_month,
                None => false,
            }
        })
        .collect()
}

/// Undirected adjacency sets of the eventual contact graph.
fn undirected_neighbors(env: &Environment) -> Vec<BTreeSet<u32>> {
    let mut nbrs: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); env.n_agents()];
    for l in &env.graph.links {
        nbrs[l.caller.index()].insert(l.callee.0);
        nbrs[l.callee.index()].insert(l.caller.0);
    }
    nbrs
}

/// Result of one allocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub recipients: BTreeSet<AgentId>,
    /// Budget minus the selected count when the pool ran short.
    pub shortfall: usize,
}

/// Select recipients under a targeting rule. Deterministic given the seed.
pub fn allocate(
    rule: &TargetingRule,
    env: &Environment,
    cache: &LinkValueCache,
    baseline: &AdoptionProfile,
    actual_recipients: &BTreeSet<AgentId>,
    program_month: u32,
    seed: u64,
) -> Result<AllocationOutcome> {
    rule.validate()?;
    let geo = match rule.variant {
        RuleVariant::Random { geo } | RuleVariant::Voucher { geo, .. } => geo,
        _ => GeoFilter::Any,
    };
    let eligible = eligible_nodes(env, baseline, actual_recipients, program_month, geo);
    let budget = rule.budget;
    let selected: Vec<AgentId> = match rule.variant {
        RuleVariant::Implemented => {
            return Ok(AllocationOutcome { recipients: actual_recipients.clone(), shortfall: 0 });
        }
        RuleVariant::Priority { metric, direction } => {
            let nbrs = undirected_neighbors(env);
            let adopted_before = |j: u32| match baseline.dates[j as usize] {
                Some(tau) => tau < program_month,
                None => false,
            };
            let score = |a: &AgentId| -> f64 {
                let deg = nbrs[a.index()].len();
                match metric {
                    PriorityMetric::Degree => deg as f64,
                    PriorityMetric::AdoptedContacts => {
                        nbrs[a.index()].iter().filter(|j| adopted_before(**j)).count() as f64
                    }
                    PriorityMetric::FractionContactsAdopted => {
                        if deg == 0 {
                            0.0
                        } else {
                            nbrs[a.index()].iter().filter(|j| adopted_before(**j)).count() as f64
                                / deg as f64
                        }
                    }
                }
            };
            let mut ranked: Vec<(f64, AgentId)> = eligible.iter().map(|a| (score(a), *a)).collect();
            match direction {
                Direction::High => ranked
                    .sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1))),
                Direction::Low => ranked
                    .sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1))),
            }
            ranked.into_iter().take(budget).map(|(_, a)| a).collect()
        }
        RuleVariant::Random { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool = eligible.clone();
            pool.shuffle(&mut rng);
            pool.truncate(budget);
            pool
        }
        RuleVariant::SuperCluster => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eligible_set: HashSet<AgentId> = eligible.iter().copied().collect();
            let nbrs = undirected_neighbors(env);
            let mut selected: Vec<AgentId> = Vec::new();
            let mut taken: HashSet<AgentId> = HashSet::new();
            let mut remaining = eligible.clone();
            while selected.len() < budget && !remaining.is_empty() {
                let start = remaining[rng.random_range(0..remaining.len())];
                let mut queue = VecDeque::from([start]);
                taken.insert(start);
                while let Some(node) = queue.pop_front() {
                    selected.push(node);
                    if selected.len() == budget {
                        break;
                    }
                    for j in &nbrs[node.index()] {
                        let cand = AgentId(*j);
                        if eligible_set.contains(&cand) && taken.insert(cand) {
                            queue.push_back(cand);
                        }
                    }
                }
                remaining.retain(|a| !taken.contains(a));
            }
            selected
        }
        RuleVariant::Voucher { cohort, .. } => {
            let cohort_month = match cohort {
                VoucherCohort::EarlyAdopters => 1,
                VoucherCohort::RecentAdopters => program_month.saturating_sub(1).max(1),
            };
            let givers: Vec<AgentId> = (0..env.n_agents() as u32)
                .map(AgentId)
                .filter(|a| baseline.dates[a.index()] == Some(cohort_month))
                .collect();
            let eligible_set: HashSet<AgentId> = eligible.iter().copied().collect();
            // Link strength: expected monthly duration at the program month,
            // both directions summed.
            let t0 = (program_month - 1) as usize;
            let mut strength: std::collections::HashMap<(AgentId, AgentId), f64> =
                std::collections::HashMap::new();
            for (li, l) in env.graph.links.iter().enumerate() {
                let key = if l.caller < l.callee { (l.caller, l.callee) } else { (l.callee, l.caller) };
                *strength.entry(key).or_default() += cache.ed(li, t0);
            }
            let nbrs = undirected_neighbors(env);
            let mut taken: HashSet<AgentId> = HashSet::new();
            let mut selected: Vec<AgentId> = Vec::new();
            for giver in givers {
                if selected.len() == budget {
                    break;
                }
                // Contacts ranked by strength (desc), ties to the lower id.
                let mut cands: Vec<(f64, AgentId)> = nbrs[giver.index()]
                    .iter()
                    .map(|j| AgentId(*j))
                    .filter(|c| eligible_set.contains(c))
                    .map(|c| {
                        let key = if giver < c { (giver, c) } else { (c, giver) };
                        (*strength.get(&key).unwrap_or(&0.0), c)
                    })
                    .collect();
                cands.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
                if let Some((_, pick)) = cands.iter().find(|(_, c)| !taken.contains(c)) {
                    taken.insert(*pick);
                    selected.push(*pick);
                }
            }
            selected
        }
    };
    let shortfall = budget.saturating_sub(selected.len());
    Ok(AllocationOutcome { recipients: selected.into_iter().collect(), shortfall })
}

/// Environment with the program's discount installed for its recipients; all
/// other fields unchanged. The discount applies at whatever month each
/// recipient adopts.
pub fn apply_program(env: &Environment, program: &SubsidyProgram) -> Result<Environment> {
    program.validate(env)?;
    let mut out = env.clone();
    for r in &program.recipients {
        out.discounts[r.index()] = program.discount;
    }
    Ok(out)
}

/// Outcome kinds reported by the decomposition, in emission order.
pub const IMPACT_OUTCOMES: [&str; 7] = [
    "mean_adoption_time",
    "firm_revenue",
    "consumer_surplus",
    "consumer_surplus_ex_eta",
    "government_revenue",
    "government_handset_revenue",
    "net_welfare",
];

fn outcome_value(levels: &OutcomeLevels, key: &str) -> f64 {
    match key {
        "mean_adoption_time" => levels.mean_adoption_time,
        "firm_revenue" => levels.firm_revenue,
        "consumer_surplus" => levels.consumer_surplus,
        "consumer_surplus_ex_eta" => levels.consumer_surplus_ex_eta,
        "government_revenue" => levels.government_revenue,
        "government_handset_revenue" => levels.government_handset_revenue,
        "net_welfare" => levels.net_welfare,
        _ => unreachable!("unknown outcome {key}"),
    }
}

/// One decomposition cell: with-program level and the three impact
/// components, satisfying `proximal + ripple = total` exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpactCell {
    pub with_level: f64,
    pub proximal: f64,
    pub ripple: f64,
    pub total: f64,
}

/// The full proximal/ripple/total table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpactTable {
    /// Label for the taste regime this table was computed under.
    pub eta_mode: String,
    /// `cells[group][outcome]`, groups ordered all/recipients/nonrecipients,
    /// outcomes per [`IMPACT_OUTCOMES`].
    pub cells: PerGroup<Vec<ImpactCell>>,
    /// Whether the full re-solve without the program converged.
    pub total_converged: bool,
    pub rounds: u32,
    /// Net present cost of the program in the with-subsidy baseline.
    pub np_subsidy_cost: f64,
    /// Removal profiles backing the impact rows.
    pub proximal_profile: AdoptionProfile,
    pub total_profile: AdoptionProfile,
}

impl ImpactTable {
    pub fn cell(&self, group: &str, outcome: &str) -> ImpactCell {
        let idx = IMPACT_OUTCOMES.iter().position(|k| *k == outcome).expect("known outcome");
        match group {
            "all" => self.cells.all[idx],
            "recipients" => self.cells.recipients[idx],
            "nonrecipients" => self.cells.nonrecipients[idx],
            _ => panic!("unknown group {group}"),
        }
    }
}

/// Decomposition settings.
#[derive(Debug, Clone, Default)]
pub struct DecomposeOptions {
    pub solve: SolveOptions,
    pub tax: TaxConfig,
    pub eta_mode_label: String,
}

/// Decompose the program's impact relative to removing it.
///
/// `env` is the environment WITHOUT the program; `baseline` must be an
/// equilibrium of `apply_program(env, program)`. Impacts are
/// with-subsidy minus without-subsidy:
///
/// - proximal: recipients re-best-respond individually against the frozen
///   baseline after removal (non-recipients cannot move, so their adoption
///   impact is identically zero);
/// - total: full re-solve without the program, initialized from the
///   proximal profile;
/// - ripple = total - proximal.
pub fn decompose_impact(
    env: &Environment,
    cache: &LinkValueCache,
    program: &SubsidyProgram,
    baseline: &AdoptionProfile,
    opts: &DecomposeOptions,
) -> Result<ImpactTable> {
    let env_with = apply_program(env, program)?;
    let recipients_set: HashSet<AgentId> = program.recipients.iter().copied().collect();

    // Proximal: each recipient re-optimizes against the frozen baseline.
    let mut proximal = baseline.clone();
    for r in &program.recipients {
        if env.is_initial(*r) || opts.solve.held_fixed.contains(r) {
            continue;
        }
        proximal.dates[r.index()] = best_response(*r, baseline, env, cache)?;
    }

    // Total: the network re-equilibrates from the proximal profile.
    let solved = solve_equilibrium(&proximal, env, cache, &opts.solve)?;

    let with_levels = outcome_levels(
        EquilibriumCase { env: &env_with, profile: baseline },
        cache,
        &recipients_set,
        &opts.tax,
    )?;
    let prox_levels = outcome_levels(
        EquilibriumCase { env, profile: &proximal },
        cache,
        &recipients_set,
        &opts.tax,
    )?;
    let total_levels = outcome_levels(
        EquilibriumCase { env, profile: &solved.profile },
        cache,
        &recipients_set,
        &opts.tax,
    )?;

    let build = |with: &OutcomeLevels, prox: &OutcomeLevels, total: &OutcomeLevels| -> Vec<ImpactCell> {
        IMPACT_OUTCOMES
            .iter()
            .map(|key| {
                let w = outcome_value(with, key);
                let p = outcome_value(prox, key);
                let t = outcome_value(total, key);
                let proximal = w - p;
                let total_impact = w - t;
                ImpactCell {
                    with_level: w,
                    proximal,
                    ripple: total_impact - proximal,
                    total: total_impact,
                }
            })
            .collect()
    };
    let cells = PerGroup {
        all: build(&with_levels.all, &prox_levels.all, &total_levels.all),
        recipients: build(&with_levels.recipients, &prox_levels.recipients, &total_levels.recipients),
        nonrecipients: build(
            &with_levels.nonrecipients,
            &prox_levels.nonrecipients,
            &total_levels.nonrecipients,
        ),
    };
    Ok(ImpactTable {
        eta_mode: opts.eta_mode_label.clone(),
        cells,
        total_converged: solved.converged,
        rounds: solved.rounds,
        np_subsidy_cost: crate::welfare::subsidy_net_present_cost(baseline, &env_with),
        proximal_profile: proximal,
        total_profile: solved.profile,
    })
}

/// Write an impact table as CSV: one row per (group, outcome) with level and
/// impact components.
pub fn write_impact_csv<W: Write>(writer: W, table: &ImpactTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "eta_mode",
        "group",
        "outcome",
        "with_subsidy",
        "total_impact",
        "proximal_impact",
        "ripple_impact",
        "total_converged",
    ])?;
    for (group, cells) in [
        ("all", &table.cells.all),
        ("recipients", &table.cells.recipients),
        ("nonrecipients", &table.cells.nonrecipients),
    ] {
        for (key, cell) in IMPACT_OUTCOMES.iter().zip(cells) {
            w.write_record([
                table.eta_mode.clone(),
                group.to_string(),
                key.to_string(),
                cell.with_level.to_string(),
                cell.total.to_string(),
                cell.proximal.to_string(),
                cell.ripple.to_string(),
                table.total_converged.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
