//! The adoption game: lifetime utilities, best responses, iterated best
//! response to a Nash equilibrium, and revealed-preference bounds on the
//! per-month taste for owning a handset.
//!
//! Agents pick an adoption month (or never) maximizing the discounted stream
//! of expected calling utility against the declining handset price. A fixed
//! initial set adopts at given dates and never moves. Expected link values
//! are profile-independent, so they are computed once per environment into a
//! [`LinkValueCache`] and shared by every solve.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::GeoPoint;
use crate::error::{Error, Result};
use crate::math::{self, GaussLegendre};
use crate::model::{self, AgentId, CallCost, Link, QuadConfig, UtilityParams};

/// Adoption date: month in `1..=horizon`, or `None` for never.
pub type AdoptionDate = Option<u32>;

/// Directed contact graph in CSR form, links sorted by caller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Graph {
    pub n_agents: u32,
    pub links: Vec<Link>,
    #[serde(skip)]
    out_offsets: Vec<u32>,
}

impl Graph {
    pub fn new(n_agents: u32, mut links: Vec<Link>) -> Result<Self> {
        links.sort_by_key(|l| (l.caller, l.callee));
        for pair in links.windows(2) {
            if pair[0].caller == pair[1].caller && pair[0].callee == pair[1].callee {
                return Err(Error::InvalidParameter(format!(
                    "duplicate link {} -> {}",
                    pair[0].caller, pair[0].callee
                )));
            }
        }
        for l in &links {
            l.validate()?;
            if l.caller.0 >= n_agents || l.callee.0 >= n_agents {
                return Err(Error::UnknownAgent(l.caller.0.max(l.callee.0) as u64));
            }
        }
        let mut g = Self { n_agents, links, out_offsets: Vec::new() };
        g.rebuild_index();
        Ok(g)
    }

    /// Rebuild the CSR index; required after deserialization.
    pub fn rebuild_index(&mut self) {
        let n = self.n_agents as usize;
        let mut offsets = vec![0u32; n + 1];
        for l in &self.links {
            offsets[l.caller.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        self.out_offsets = offsets;
    }

    /// Indices into `links` of the agent's outgoing links.
    #[inline]
    pub fn out_links(&self, agent: AgentId) -> std::ops::Range<usize> {
        let i = agent.index();
        self.out_offsets[i] as usize..self.out_offsets[i + 1] as usize
    }

    pub fn out_degree(&self, agent: AgentId) -> usize {
        self.out_links(agent).len()
    }
}

/// Per-agent coverage, either time-invariant or month-by-month.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoverageSeries {
    Constant { phi: Vec<f64> },
    Monthly { phi: Vec<Vec<f64>> },
}

impl CoverageSeries {
    #[inline]
    pub fn phi(&self, agent: usize, month0: usize) -> f64 {
        match self {
            CoverageSeries::Constant { phi } => phi[agent],
            CoverageSeries::Monthly { phi } => phi[month0][agent],
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self, CoverageSeries::Constant { .. })
    }

    fn validate(&self, n_agents: usize, horizon: usize) -> Result<()> {
        let check = |v: &[f64]| -> Result<()> {
            if v.len() != n_agents {
                return Err(Error::InvalidParameter("coverage length != agent count".into()));
            }
            if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidParameter("coverage outside [0,1]".into()));
            }
            Ok(())
        };
        match self {
            CoverageSeries::Constant { phi } => check(phi),
            CoverageSeries::Monthly { phi } => {
                if phi.len() != horizon {
                    return Err(Error::InvalidParameter("coverage months != horizon".into()));
                }
                phi.iter().try_for_each(|v| check(v))
            }
        }
    }
}

/// Everything the game consumes: agents, graph, price and coverage series,
/// structural parameters, tastes, and the fixed initial adopters.
///
/// Heavy shared members sit behind `Arc` so that policy variants (different
/// discounts or tastes) clone cheaply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    /// Number of months, 1-based.
    pub horizon: u32,
    pub params: UtilityParams,
    /// Per-agent monthly taste for having a handset, dollars.
    pub eta: Vec<f64>,
    /// Per-agent handset discount applied at whatever month they adopt.
    pub discounts: Vec<f64>,
    pub rural: Vec<bool>,
    /// Primary (mode) location per agent.
    pub locations: Vec<GeoPoint>,
    pub graph: Arc<Graph>,
    /// Calling price, dollars/second, per month.
    pub call_price: Arc<Vec<f64>>,
    /// Handset price index, dollars, per month.
    pub handset_price: Arc<Vec<f64>>,
    pub coverage: Arc<CoverageSeries>,
    /// Fixed initial adopters and their dates.
    pub initial: Arc<BTreeMap<AgentId, u32>>,
    /// Append a geometric continuation of the last month's flow utility
    /// after the horizon (decision utilities only; reports stay truncated).
    #[serde(default)]
    pub tail_continuation: bool,
}

impl Environment {
    pub fn n_agents(&self) -> usize {
        self.graph.n_agents as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let n = self.n_agents();
        let t = self.horizon as usize;
        if self.horizon < 1 {
            return Err(Error::InvalidParameter("horizon must be at least one month".into()));
        }
        for (name, len) in [
            ("eta", self.eta.len()),
            ("discounts", self.discounts.len()),
            ("rural", self.rural.len()),
            ("locations", self.locations.len()),
        ] {
            if len != n {
                return Err(Error::InvalidParameter(format!("{name} length {len} != {n} agents")));
            }
        }
        for (name, series) in
            [("call_price", &self.call_price), ("handset_price", &self.handset_price)]
        {
            if series.len() != t {
                return Err(Error::InvalidParameter(format!("{name} length != horizon")));
            }
            if series.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative")));
            }
        }
        self.coverage.validate(n, t)?;
        for (agent, month) in self.initial.iter() {
            if agent.index() >= n {
                return Err(Error::UnknownAgent(agent.0 as u64));
            }
            if *month < 1 || *month > self.horizon {
                return Err(Error::InvalidParameter(format!(
                    "initial adopter {agent} has date {month} outside 1..={}",
                    self.horizon
                )));
            }
        }
        if self.tail_continuation && self.params.delta >= 1.0 {
            return Err(Error::InvalidParameter("tail continuation requires delta < 1".into()));
        }
        Ok(())
    }

    /// Discount factors `delta^t` for `t = 0..=horizon`.
    pub fn delta_powers(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.horizon as usize + 1);
        let mut acc = 1.0;
        out.push(acc);
        for _ in 0..self.horizon {
            acc *= self.params.delta;
            out.push(acc);
        }
        out
    }

    /// Effective handset price for an agent adopting in `month` (1-based).
    #[inline]
    pub fn effective_handset_price(&self, agent: usize, month: u32) -> f64 {
        self.handset_price[(month - 1) as usize] - self.discounts[agent]
    }

    pub fn is_initial(&self, agent: AgentId) -> bool {
        self.initial.contains_key(&agent)
    }

    pub fn to_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        let mut env: Environment = serde_json::from_reader(reader)?;
        Arc::make_mut(&mut env.graph).rebuild_index();
        env.validate()?;
        Ok(env)
    }
}

/// One adoption date per agent; the strategy profile of the game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdoptionProfile {
    pub dates: Vec<AdoptionDate>,
}

impl AdoptionProfile {
    pub fn all_never(n: usize) -> Self {
        Self { dates: vec![None; n] }
    }

    pub fn all_at(n: usize, month: u32) -> Self {
        Self { dates: vec![Some(month); n] }
    }

    /// Overwrite the fixed initial adopters with their given dates.
    pub fn enforce_initial(&mut self, env: &Environment) {
        for (agent, month) in env.initial.iter() {
            self.dates[agent.index()] = Some(*month);
        }
    }

    #[inline]
    pub fn date(&self, agent: AgentId) -> AdoptionDate {
        self.dates[agent.index()]
    }

    pub fn adopter_count(&self) -> usize {
        self.dates.iter().filter(|d| d.is_some()).count()
    }

    /// Mean adoption month over the given agents, with never-adopters
    /// counted as `horizon + 1` to keep the population constant.
    pub fn mean_adoption_month<'a>(
        &self,
        agents: impl IntoIterator<Item = &'a AgentId>,
        horizon: u32,
    ) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for a in agents {
            sum += self.dates[a.index()].unwrap_or(horizon + 1) as f64;
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Write a profile as CSV rows `agent,tau` with `never` for non-adopters.
pub fn write_profile_csv<W: Write>(writer: W, profile: &AdoptionProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["agent", "tau"])?;
    for (i, d) in profile.dates.iter().enumerate() {
        let tau = match d {
            Some(m) => m.to_string(),
            None => "never".into(),
        };
        w.write_record([i.to_string(), tau])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a profile written by [`write_profile_csv`].
pub fn read_profile_csv<R: Read>(reader: R, n_agents: usize) -> Result<AdoptionProfile> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut profile = AdoptionProfile::all_never(n_agents);
    for row in rdr.records() {
        let row = row?;
        let agent: usize = row
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad agent id: {e}")))?;
        if agent >= n_agents {
            return Err(Error::UnknownAgent(agent as u64));
        }
        let tau = row.get(1).unwrap_or("").trim();
        profile.dates[agent] = if tau.eq_ignore_ascii_case("never") {
            None
        } else {
            Some(tau.parse().map_err(|e| Error::Parse(format!("bad tau: {e}")))?)
        };
    }
    Ok(profile)
}

/// Expected link surplus and duration per month, precomputed per link.
///
/// When coverage is time-invariant, months sharing a calling price share one
/// value slot, which keeps the table small on long horizons.
#[derive(Debug, Clone)]
pub struct LinkValueCache {
    month_slot: Vec<u16>,
    n_slots: usize,
    eu: Vec<f64>,
    ed: Vec<f64>,
}

impl LinkValueCache {
    pub fn build(env: &Environment) -> Result<Self> {
        env.validate()?;
        let horizon = env.horizon as usize;
        let shared = env.coverage.is_time_invariant();
        let (month_slot, slot_price): (Vec<u16>, Vec<f64>) = if shared {
            let mut slot_price: Vec<f64> = Vec::new();
            let mut month_slot = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let p = env.call_price[t];
                let slot = match slot_price.iter().position(|q| q.to_bits() == p.to_bits()) {
                    Some(s) => s,
                    None => {
                        slot_price.push(p);
                        slot_price.len() - 1
                    }
                };
                month_slot.push(slot as u16);
            }
            (month_slot, slot_price)
        } else {
            ((0..horizon).map(|t| t as u16).collect(), env.call_price.to_vec())
        };
        let n_slots = slot_price.len();
        let quad = QuadConfig::default();
        let per_link: Vec<(Vec<f64>, Vec<f64>)> = env
            .graph
            .links
            .par_iter()
            .map_init(
                || GaussLegendre::new(math::GL_ORDER),
                |rule, link| -> Result<(Vec<f64>, Vec<f64>)> {
                    let mut eu = Vec::with_capacity(n_slots);
                    let mut ed = Vec::with_capacity(n_slots);
                    for (slot, price) in slot_price.iter().enumerate() {
                        let month0 = if shared { 0 } else { slot };
                        let pi = env.coverage.phi(link.caller.index(), month0);
                        let pj = env.coverage.phi(link.callee.index(), month0);
                        let cost = CallCost::new(*price, env.params.beta_coverage, pi, pj);
                        if cost.total() < 0.0 {
                            return Err(Error::InvalidParameter(format!(
                                "negative call cost {} on link {} -> {}",
                                cost.total(),
                                link.caller,
                                link.callee
                            )));
                        }
                        let (u, d) = model::expected_link_values(
                            &link.shocks,
                            cost.total(),
                            &env.params,
                            rule,
                            &quad,
                        )?;
                        eu.push(u);
                        ed.push(d);
                    }
                    Ok((eu, ed))
                },
            )
            .collect::<Result<Vec<_>>>()?;
        let mut eu = Vec::with_capacity(per_link.len() * n_slots);
        let mut ed = Vec::with_capacity(per_link.len() * n_slots);
        for (u, d) in per_link {
            eu.extend(u);
            ed.extend(d);
        }
        Ok(Self { month_slot, n_slots, eu, ed })
    }

    /// Expected surplus of `link` in 0-based month `month0`.
    #[inline]
    pub fn eu(&self, link: usize, month0: usize) -> f64 {
        self.eu[link * self.n_slots + self.month_slot[month0] as usize]
    }

    /// Expected duration of `link` in 0-based month `month0`.
    #[inline]
    pub fn ed(&self, link: usize, month0: usize) -> f64 {
        self.ed[link * self.n_slots + self.month_slot[month0] as usize]
    }
}

/// Expected utility an agent receives in one month given the current set of
/// subscribers: the sum of expected link utilities to subscribed contacts
/// plus the agent's handset taste.
pub fn monthly_utility(
    agent: AgentId,
    adopters: &HashSet<AgentId>,
    month: u32,
    env: &Environment,
) -> Result<f64> {
    if agent.index() >= env.n_agents() {
        return Err(Error::UnknownAgent(agent.0 as u64));
    }
    if month < 1 || month > env.horizon {
        return Err(Error::InvalidParameter(format!("month {month} outside horizon")));
    }
    let t0 = (month - 1) as usize;
    let mut total = env.eta[agent.index()];
    for li in env.graph.out_links(agent) {
        let link = &env.graph.links[li];
        if !adopters.contains(&link.callee) {
            continue;
        }
        let phi_t = if env.coverage.is_time_invariant() { 0 } else { t0 };
        total += model::expected_link_utility(
            link,
            env.call_price[t0],
            env.coverage.phi(link.caller.index(), phi_t),
            env.coverage.phi(link.callee.index(), phi_t),
            &env.params,
        )?;
    }
    Ok(total)
}

/// Scratch space for per-agent utility evaluation.
struct Scratch {
    /// Calling utility per month (0-based), given contacts' dates.
    w: Vec<f64>,
    /// `suffix[t0]` = discounted flow utility from month `t0+1` through the
    /// horizon (plus the optional tail), including the taste term.
    suffix: Vec<f64>,
}

impl Scratch {
    fn new(horizon: usize) -> Self {
        Self { w: vec![0.0; horizon], suffix: vec![0.0; horizon + 1] }
    }
}

/// Shared evaluation context: environment, cache, and discount powers.
struct Evaluator<'a> {
    env: &'a Environment,
    cache: &'a LinkValueCache,
    delta_pow: Vec<f64>,
    tail_factor: f64,
}

impl<'a> Evaluator<'a> {
    fn new(env: &'a Environment, cache: &'a LinkValueCache) -> Self {
        let delta_pow = env.delta_powers();
        let tail_factor = if env.tail_continuation {
            env.params.delta / (1.0 - env.params.delta)
        } else {
            0.0
        };
        Self { env, cache, delta_pow, tail_factor }
    }

    /// Fill `scratch` for one agent given the contacts' adoption dates and
    /// the taste value `eta`.
    fn fill(&self, agent: AgentId, dates: &[AdoptionDate], eta: f64, s: &mut Scratch) {
        let horizon = self.env.horizon as usize;
        s.w[..horizon].fill(0.0);
        for li in self.env.graph.out_links(agent) {
            if let Some(tau_j) = dates[self.env.graph.links[li].callee.index()] {
                for t0 in (tau_j - 1) as usize..horizon {
                    s.w[t0] += self.cache.eu(li, t0);
                }
            }
        }
        let tail = self.tail_factor * self.delta_pow[horizon] * (s.w[horizon - 1] + eta);
        s.suffix[horizon] = tail;
        for t0 in (0..horizon).rev() {
            s.suffix[t0] = s.suffix[t0 + 1] + self.delta_pow[t0 + 1] * (s.w[t0] + eta);
        }
    }

    /// Lifetime utility of adopting at `tau` from a filled scratch.
    #[inline]
    fn utility_at(&self, tau: u32, discount: f64, s: &Scratch) -> f64 {
        let price = self.env.handset_price[(tau - 1) as usize] - discount;
        s.suffix[(tau - 1) as usize] - self.delta_pow[tau as usize] * price
    }

    /// Earliest utility-maximizing month, or never when every month is
    /// strictly negative.
    fn best_response_filled(&self, discount: f64, s: &Scratch) -> (AdoptionDate, f64) {
        let mut best_tau = 0u32;
        let mut best = f64::NEG_INFINITY;
        for tau in 1..=self.env.horizon {
            let u = self.utility_at(tau, discount, s);
            if u > best {
                best = u;
                best_tau = tau;
            }
        }
        if best < 0.0 {
            (None, 0.0)
        } else {
            (Some(best_tau), best)
        }
    }
}

/// Lifetime utility of adopting at `tau` given the contacts' dates in
/// `profile`. `subsidy` overrides the environment's per-agent discount when
/// given. Never yields exactly zero.
pub fn lifetime_utility(
    agent: AgentId,
    tau: AdoptionDate,
    profile: &AdoptionProfile,
    env: &Environment,
    cache: &LinkValueCache,
    subsidy: Option<f64>,
) -> Result<f64> {
    if agent.index() >= env.n_agents() {
        return Err(Error::UnknownAgent(agent.0 as u64));
    }
    let Some(tau) = tau else { return Ok(0.0) };
    if tau < 1 || tau > env.horizon {
        return Err(Error::InvalidParameter(format!("tau {tau} outside horizon")));
    }
    let ev = Evaluator::new(env, cache);
    let mut s = Scratch::new(env.horizon as usize);
    ev.fill(agent, &profile.dates, env.eta[agent.index()], &mut s);
    let discount = subsidy.unwrap_or(env.discounts[agent.index()]);
    Ok(ev.utility_at(tau, discount, &s))
}

/// Best response of one agent against the given profile: the earliest
/// maximizing month, or never if all months fall strictly below zero.
pub fn best_response(
    agent: AgentId,
    profile: &AdoptionProfile,
    env: &Environment,
    cache: &LinkValueCache,
) -> Result<AdoptionDate> {
    if agent.index() >= env.n_agents() {
        return Err(Error::UnknownAgent(agent.0 as u64));
    }
    let ev = Evaluator::new(env, cache);
    let mut s = Scratch::new(env.horizon as usize);
    ev.fill(agent, &profile.dates, env.eta[agent.index()], &mut s);
    Ok(ev.best_response_filled(env.discounts[agent.index()], &s).0)
}

/// Sweep style: sequential in-place updates, or parallel updates against the
/// sweep-start snapshot. Both are deterministic and thread-count invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    GaussSeidel,
    Jacobi,
}

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub mode: SweepMode,
    pub round_limit: u32,
    /// Agents (beyond the initial set) whose dates are held fixed.
    pub held_fixed: HashSet<AgentId>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { mode: SweepMode::GaussSeidel, round_limit: 500, held_fixed: HashSet::new() }
    }
}

/// Result of an equilibrium solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub profile: AdoptionProfile,
    pub rounds: u32,
    pub converged: bool,
}

/// Iterated best response over full sweeps in fixed agent-id order.
/// Converged means a complete pass changed no date; the final profile then
/// passes [`verify_nash`]. Hitting the round limit returns the last profile
/// with `converged = false`.
pub fn solve_equilibrium(
    initial: &AdoptionProfile,
    env: &Environment,
    cache: &LinkValueCache,
    opts: &SolveOptions,
) -> Result<SolveOutcome> {
    let n = env.n_agents();
    if initial.dates.len() != n {
        return Err(Error::InvalidParameter("profile length != agent count".into()));
    }
    let mut profile = initial.clone();
    profile.enforce_initial(env);
    let ev = Evaluator::new(env, cache);
    let free: Vec<AgentId> = (0..n as u32)
        .map(AgentId)
        .filter(|a| !env.is_initial(*a) && !opts.held_fixed.contains(a))
        .collect();
    let horizon = env.horizon as usize;
    let mut rounds = 0;
    let mut scratch = Scratch::new(horizon);
    while rounds < opts.round_limit {
        rounds += 1;
        let mut changed = false;
        match opts.mode {
            SweepMode::GaussSeidel => {
                for &agent in &free {
                    ev.fill(agent, &profile.dates, env.eta[agent.index()], &mut scratch);
                    let (br, _) =
                        ev.best_response_filled(env.discounts[agent.index()], &scratch);
                    if br != profile.dates[agent.index()] {
                        profile.dates[agent.index()] = br;
                        changed = true;
                    }
                }
            }
            SweepMode::Jacobi => {
                let snapshot = profile.dates.clone();
                let responses: Vec<(usize, AdoptionDate)> = free
                    .par_iter()
                    .map_init(
                        || Scratch::new(horizon),
                        |s, agent| {
                            ev.fill(*agent, &snapshot, env.eta[agent.index()], s);
                            let (br, _) =
                                ev.best_response_filled(env.discounts[agent.index()], s);
                            (agent.index(), br)
                        },
                    )
                    .collect();
                for (idx, br) in responses {
                    if profile.dates[idx] != br {
                        profile.dates[idx] = br;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return Ok(SolveOutcome { profile, rounds, converged: true });
        }
    }
    Ok(SolveOutcome { profile, rounds, converged: false })
}

/// A profitable unilateral deviation found by [`verify_nash`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashViolation {
    pub agent: AgentId,
    pub current: AdoptionDate,
    pub better: AdoptionDate,
    pub gain: f64,
}

/// Check every free agent for a strictly improving unilateral deviation
/// (gain above `1e-9` dollars). Empty output means Nash.
pub fn verify_nash(
    profile: &AdoptionProfile,
    env: &Environment,
    cache: &LinkValueCache,
    held_fixed: &HashSet<AgentId>,
) -> Result<Vec<NashViolation>> {
    const TOL: f64 = 1e-9;
    let ev = Evaluator::new(env, cache);
    let mut s = Scratch::new(env.horizon as usize);
    let mut violations = Vec::new();
    for i in 0..env.n_agents() {
        let agent = AgentId(i as u32);
        if env.is_initial(agent) || held_fixed.contains(&agent) {
            continue;
        }
        ev.fill(agent, &profile.dates, env.eta[i], &mut s);
        let discount = env.discounts[i];
        let current = profile.dates[i];
        let current_u = match current {
            Some(tau) => ev.utility_at(tau, discount, &s),
            None => 0.0,
        };
        let (br, br_u) = ev.best_response_filled(discount, &s);
        let best_u = br_u.max(0.0);
        if best_u > current_u + TOL {
            violations.push(NashViolation { agent, current, better: br, gain: best_u - current_u });
        }
    }
    Ok(violations)
}

/// Revealed-preference bounds on each agent's handset taste.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtaBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Upper bound after the comparable reweighting; equals `upper` until
    /// [`comparable_upper_bounds`] runs.
    pub upper_comparable: Vec<f64>,
    /// Set where the comparable adjustment inverted the bounds
    /// (`lower > upper_comparable`).
    pub crossed: Vec<bool>,
    /// Agents whose observed date no taste value rationalizes; their raw
    /// bounds are reported inverted rather than clipped.
    pub infeasible: Vec<AgentId>,
    /// Magnitude cap applied to otherwise unbounded sides.
    pub cap: f64,
}

/// Configuration for [`estimate_eta_bounds`].
#[derive(Debug, Clone, Copy)]
pub struct EtaBoundConfig {
    /// Bounds are capped to `[-cap, cap]` where no deviation binds.
    pub cap: f64,
}

impl Default for EtaBoundConfig {
    fn default() -> Self {
        Self { cap: 1e6 }
    }
}

/// Bounds on the taste from the observed profile. Utility is linear in the
/// taste at fixed dates, so deviations to later dates (including never)
/// yield lower bounds and deviations to earlier dates yield upper bounds;
/// the tightest of each side is returned. Fixed initial adopters choose
/// nothing, so their interval degenerates to the environment's taste.
pub fn estimate_eta_bounds(
    observed: &AdoptionProfile,
    env: &Environment,
    cache: &LinkValueCache,
    cfg: &EtaBoundConfig,
) -> Result<EtaBounds> {
    let n = env.n_agents();
    if observed.dates.len() != n {
        return Err(Error::InvalidParameter("profile length != agent count".into()));
    }
    let ev = Evaluator::new(env, cache);
    let horizon = env.horizon as usize;
    let mut s = Scratch::new(horizon);
    // Taste coefficients D(tau) = sum_{t >= tau} delta^t (+ optional tail);
    // strictly decreasing in tau, zero for never.
    let delta_pow = env.delta_powers();
    let mut d_coef = vec![0.0; horizon + 2];
    d_coef[horizon] = delta_pow[horizon]
        + if env.tail_continuation {
            env.params.delta / (1.0 - env.params.delta) * delta_pow[horizon]
        } else {
            0.0
        };
    for t in (1..horizon).rev() {
        d_coef[t] = d_coef[t + 1] + delta_pow[t];
    }

    let mut bounds = EtaBounds {
        lower: vec![-cfg.cap; n],
        upper: vec![cfg.cap; n],
        upper_comparable: vec![cfg.cap; n],
        crossed: vec![false; n],
        infeasible: Vec::new(),
        cap: cfg.cap,
    };
    for i in 0..n {
        let agent = AgentId(i as u32);
        if env.is_initial(agent) {
            bounds.lower[i] = env.eta[i];
            bounds.upper[i] = env.eta[i];
            bounds.upper_comparable[i] = env.eta[i];
            continue;
        }
        // A(tau): lifetime utility at eta = 0.
        ev.fill(agent, &observed.dates, 0.0, &mut s);
        let discount = env.discounts[i];
        let a_of = |tau: AdoptionDate, s: &Scratch| -> f64 {
            match tau {
                Some(m) => ev.utility_at(m, discount, s),
                None => 0.0,
            }
        };
        let d_of = |tau: AdoptionDate| -> f64 {
            match tau {
                Some(m) => d_coef[m as usize],
                None => 0.0,
            }
        };
        let star = observed.dates[i];
        let (a_star, d_star) = (a_of(star, &s), d_of(star));
        let mut lo = -cfg.cap;
        let mut hi = cfg.cap;
        let consider = |tau: AdoptionDate, lo: &mut f64, hi: &mut f64, s: &Scratch| {
            if tau == star {
                return;
            }
            let denom = d_star - d_of(tau);
            let num = a_of(tau, s) - a_star;
            if denom > 0.0 {
                *lo = lo.max(num / denom);
            } else if denom < 0.0 {
                *hi = hi.min(num / denom);
            }
        };
        for m in 1..=env.horizon {
            consider(Some(m), &mut lo, &mut hi, &s);
        }
        consider(None, &mut lo, &mut hi, &s);
        if lo > hi + 1e-9 {
            bounds.infeasible.push(agent);
        }
        bounds.lower[i] = lo;
        bounds.upper[i] = hi;
        bounds.upper_comparable[i] = hi;
    }
    Ok(bounds)
}

/// Reweight recipients' upper bounds toward their lower bounds with a single
/// scalar weight chosen so the recipient mean of the comparable upper bound
/// equals the comparison group's mean upper bound. Non-recipients keep their
/// raw upper bound. Agents whose bounds invert get the crossed flag.
pub fn comparable_upper_bounds(
    bounds: &EtaBounds,
    recipients: &HashSet<AgentId>,
    comparison: &HashSet<AgentId>,
) -> Result<EtaBounds> {
    if recipients.is_empty() || comparison.is_empty() {
        return Err(Error::InvalidParameter(
            "comparable bounds need nonempty recipient and comparison groups".into(),
        ));
    }
    // Sum in id order so the weight never depends on set iteration order.
    let mean = |set: &HashSet<AgentId>, v: &[f64]| -> f64 {
        let mut ids: Vec<usize> = set.iter().map(|a| a.index()).collect();
        ids.sort_unstable();
        ids.iter().map(|i| v[*i]).sum::<f64>() / ids.len() as f64
    };
    let mean_lo_rec = mean(recipients, &bounds.lower);
    let mean_hi_rec = mean(recipients, &bounds.upper);
    let mean_hi_cmp = mean(comparison, &bounds.upper);
    let denom = mean_lo_rec - mean_hi_rec;
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateComparableWeight);
    }
    let a = (mean_hi_cmp - mean_hi_rec) / denom;
    let mut out = bounds.clone();
    for agent in recipients {
        let i = agent.index();
        out.upper_comparable[i] = a * bounds.lower[i] + (1.0 - a) * bounds.upper[i];
    }
    for i in 0..out.lower.len() {
        out.crossed[i] = out.lower[i] > out.upper_comparable[i];
    }
    Ok(out)
}

/// Which bound the tastes are pinned to in a bound equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    Lower,
    ComparableUpper,
}

impl std::fmt::Display for EtaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EtaMode::Lower => write!(f, "lower"),
            EtaMode::ComparableUpper => write!(f, "comparable_upper"),
        }
    }
}

/// Environment with tastes pinned to one bound, plus the set of agents to
/// hold at their observed dates (crossed or infeasible bounds).
///
/// Tastes sit a hair inside the revealed interval: exactly at a bound the
/// observed date ties with its binding deviation, and equilibria built on
/// knife-edge ties are numerically meaningless.
pub fn bound_environment(
    env: &Environment,
    bounds: &EtaBounds,
    mode: EtaMode,
) -> (Environment, HashSet<AgentId>) {
    const NUDGE: f64 = 1e-9;
    let mut out = env.clone();
    out.eta = match mode {
        EtaMode::Lower => bounds
            .lower
            .iter()
            .zip(&bounds.upper_comparable)
            .map(|(lo, hi)| if hi - lo > 2.0 * NUDGE { lo + NUDGE } else { 0.5 * (lo + hi) })
            .collect(),
        EtaMode::ComparableUpper => bounds
            .lower
            .iter()
            .zip(&bounds.upper_comparable)
            .map(|(lo, hi)| if hi - lo > 2.0 * NUDGE { hi - NUDGE } else { 0.5 * (lo + hi) })
            .collect(),
    };
    let mut held: HashSet<AgentId> = bounds
        .crossed
        .iter()
        .enumerate()
        .filter(|(_, c)| **c)
        .map(|(i, _)| AgentId(i as u32))
        .collect();
    held.extend(bounds.infeasible.iter().copied());
    (out, held)
}
