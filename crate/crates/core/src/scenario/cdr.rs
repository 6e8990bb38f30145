//! Transaction-record simulation from a solved adoption profile, with
//! optional planted resale structure (direct handoffs and middlemen) whose
//! ground truth is returned alongside the records.
//!
//! Each subscribed link-month draws one communication shock, producing a
//! total duration that is split into a few calls. Every adopter emits a
//! one-second activation ping in its adoption month, so trace analytics can
//! recover adoption dates exactly. Timestamps are unique per (handset,
//! caller) by construction.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{optimal_duration, AgentId, CallCost};
use crate::equilibrium::AdoptionProfile;
use crate::traces::{
    mode_handsets, AccountId, HandsetId, HandsetRegistry, ModelId, TransactionRecord,
};

use super::config::ScenarioConfig;
use super::generate::ScenarioData;

/// What the generator planted; the forensic procedures must recover exactly
/// this.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub recipients: BTreeSet<AccountId>,
    pub middlemen: BTreeSet<AccountId>,
    pub transferred_handsets: BTreeSet<HandsetId>,
    pub subsidized_handsets: BTreeSet<HandsetId>,
    /// Scenario month (1-based) of each account's first transaction.
    pub activation_month: BTreeMap<AccountId, u32>,
    /// Outgoing call tallies accumulated during emission.
    pub outgoing_calls: BTreeMap<AccountId, u64>,
    pub outgoing_duration: BTreeMap<AccountId, u64>,
    /// Scenario months with at least one record.
    pub months_with_records: BTreeSet<u32>,
}

/// Simulated records plus the registries analytics needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CdrOutput {
    pub records: Vec<TransactionRecord>,
    pub registry: HandsetRegistry,
    pub truth: GroundTruth,
}

/// UTC second range of scenario month `m` (1-based).
pub fn month_bounds(config: &ScenarioConfig, m: u32) -> (i64, i64) {
    let total = config.cdr.epoch_month as i64 - 1 + m as i64 - 1;
    let (y, mo) = (config.cdr.epoch_year + (total / 12) as i32, (total % 12) as u32 + 1);
    let start = NaiveDate::from_ymd_opt(y, mo, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let next_total = total + 1;
    let (ny, nmo) = (config.cdr.epoch_year + (next_total / 12) as i32, (next_total % 12) as u32 + 1);
    let end = NaiveDate::from_ymd_opt(ny, nmo, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    (start.and_utc().timestamp(), end.and_utc().timestamp())
}

/// Scenario month containing a UTC timestamp, if inside the horizon.
pub fn month_of_timestamp(config: &ScenarioConfig, t: i64) -> Option<u32> {
    for m in 1..=config.horizon {
        let (lo, hi) = month_bounds(config, m);
        if t >= lo && t < hi {
            return Some(m);
        }
    }
    None
}

struct Emitter<'a> {
    data: &'a ScenarioData,
    records: Vec<TransactionRecord>,
    used: HashSet<(i64, u64)>,
    truth: GroundTruth,
}

impl<'a> Emitter<'a> {
    fn push(&mut self, mut t: i64, handset: HandsetId, caller: AgentId, callee: AgentId, d: u32, month: u32) {
        while !self.used.insert((t, caller.0 as u64)) {
            t += 1;
        }
        let rec = TransactionRecord {
            t,
            handset,
            caller: AccountId(caller.0 as u64),
            callee: AccountId(callee.0 as u64),
            caller_tower: self.data.home_tower[caller.index()],
            callee_tower: self.data.home_tower[callee.index()],
            duration_s: d,
        };
        self.records.push(rec);
        let acc = AccountId(caller.0 as u64);
        *self.truth.outgoing_calls.entry(acc).or_default() += 1;
        *self.truth.outgoing_duration.entry(acc).or_default() += d as u64;
        self.truth.months_with_records.insert(month);
        self.truth
            .activation_month
            .entry(acc)
            .and_modify(|cur| {
                if month < *cur {
                    *cur = month;
                }
            })
            .or_insert(month);
    }
}

/// One planted handset journey.
#[derive(Debug, Clone, Copy)]
struct TransferPlan {
    handset_owner: AgentId,
    middleman: Option<AgentId>,
    buyer: AgentId,
    /// Month the handset leaves the recipient.
    leave_month: u32,
}

/// Simulate the transaction stream for a solved profile.
pub fn simulate_cdr(
    profile: &AdoptionProfile,
    data: &ScenarioData,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<CdrOutput> {
    let env = &data.env;
    let n = env.n_agents();
    if profile.dates.len() != n {
        return Err(Error::InvalidParameter("profile length != agent count".into()));
    }
    let horizon = env.horizon;
    let forensics = &config.forensics;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);

    // Handset per agent: agent i owns HandsetId(i + 1).
    let own_handset = |a: AgentId| HandsetId(a.0 as u64 + 1);

    // Recipients who adopt carry the subsidized model.
    let adopting_recipients: Vec<AgentId> = data
        .planted_recipients
        .iter()
        .copied()
        .filter(|r| profile.dates[r.index()].is_some())
        .collect();

    // Donors (recipients whose handsets move) are fixed upfront because
    // they stop transmitting once the handset leaves; middlemen and buyers
    // are cast later from realized call volumes.
    let needed_donors = (2 * forensics.middlemen + forensics.handoffs) as usize;
    if needed_donors > adopting_recipients.len() {
        return Err(Error::InvalidConfig(format!(
            "forensic plan needs {needed_donors} donor recipients, only {} adopted",
            adopting_recipients.len()
        )));
    }
    if needed_donors > 0 && !config.cdr.activation_ping {
        return Err(Error::InvalidConfig(
            "forensic plants need the activation ping: donors must transmit before the transfer"
                .into(),
        ));
    }
    let program_month = data.program.month;
    let leave_month = (program_month + 1).min(horizon);
    let donors: Vec<AgentId> = adopting_recipients.iter().take(needed_donors).copied().collect();
    // Donors stop transmitting once the handset leaves them.
    let mut last_active_month: Vec<u32> = vec![horizon; n];
    for d in &donors {
        last_active_month[d.index()] = leave_month.saturating_sub(1).max(1);
    }

    // Model registry: subsidized model for recipients' handsets and the
    // planted late activations; catalog models elsewhere.
    let subs_model = ModelId(forensics.subsidized_model);
    let window_end = program_month + forensics.window_months.saturating_sub(1);
    let mut off_window_same_model: BTreeSet<AgentId> = BTreeSet::new();
    if forensics.off_window_same_model > 0 {
        let mut candidates: Vec<AgentId> = (0..n as u32)
            .map(AgentId)
            .filter(|a| {
                !data.planted_recipients.contains(a)
                    && matches!(profile.dates[a.index()],
                        Some(tau) if tau < program_month || tau > window_end)
            })
            .collect();
        candidates.sort();
        if candidates.len() < forensics.off_window_same_model as usize {
            return Err(Error::InvalidConfig(format!(
                "forensic plan wants {} off-window same-model activations, only {} candidates adopt outside months {program_month}..={window_end}",
                forensics.off_window_same_model,
                candidates.len()
            )));
        }
        off_window_same_model
            .extend(candidates.into_iter().take(forensics.off_window_same_model as usize));
    }
    let mut registry = HandsetRegistry::default();
    let mut subsidized_handsets = BTreeSet::new();
    for i in 0..n as u32 {
        let agent = AgentId(i);
        if profile.dates[agent.index()].is_none() {
            continue;
        }
        let h = own_handset(agent);
        let model = if data.planted_recipients.contains(&agent) || off_window_same_model.contains(&agent) {
            subs_model
        } else {
            ModelId(200 + i % forensics.other_models.max(1))
        };
        registry.models.insert(h, model);
        if data.planted_recipients.contains(&agent) {
            subsidized_handsets.insert(h);
        }
    }

    let mut em = Emitter {
        data,
        records: Vec::new(),
        used: HashSet::new(),
        truth: GroundTruth::default(),
    };
    em.truth.subsidized_handsets = subsidized_handsets.clone();
    em.truth.recipients =
        adopting_recipients.iter().map(|a| AccountId(a.0 as u64)).collect();

    let n_zone = n as i64;
    // Model calls per subscribed link-month.
    for m in 1..=horizon {
        let (lo, hi) = month_bounds(config, m);
        let model_zone_lo = lo + n_zone + 10_000;
        let t0 = (m - 1) as usize;
        for link in env.graph.links.iter() {
            let caller = link.caller;
            let callee = link.callee;
            let sub_i = matches!(profile.dates[caller.index()], Some(tau) if tau <= m);
            let sub_j = matches!(profile.dates[callee.index()], Some(tau) if tau <= m);
            if !sub_i || !sub_j || m > last_active_month[caller.index()] {
                continue;
            }
            let phi_t = if env.coverage.is_time_invariant() { 0 } else { t0 };
            let cost = CallCost::new(
                env.call_price[t0],
                env.params.beta_coverage,
                env.coverage.phi(caller.index(), phi_t),
                env.coverage.phi(callee.index(), phi_t),
            );
            let eps = link.shocks.sample(&mut rng);
            let d_total = optimal_duration(eps, cost.total(), &env.params)?;
            let d_int = d_total.round() as u32;
            if d_int == 0 {
                continue;
            }
            let max_calls = config.cdr.max_calls_per_link_month.max(1).min(d_int);
            let n_calls = 1 + rng.random_range(0..max_calls);
            let mut remaining = d_int;
            for k in 0..n_calls {
                let left = n_calls - k - 1;
                let d = if left == 0 {
                    remaining
                } else {
                    let max_here = remaining - left; // keep 1s for each later call
                    1 + rng.random_range(0..max_here.max(1))
                };
                remaining -= d;
                let span = (hi - model_zone_lo).max(1);
                let t = model_zone_lo + rng.random_range(0..span);
                em.push(t, own_handset(caller), caller, callee, d, m);
                if remaining == 0 {
                    break;
                }
            }
        }
    }

    // Activation pings: one 1-second call at the month start, offset by the
    // agent id so timestamps never collide.
    if config.cdr.activation_ping {
        for i in 0..n as u32 {
            let agent = AgentId(i);
            if let Some(tau) = profile.dates[agent.index()] {
                let (lo, _) = month_bounds(config, tau);
                let callee = env
                    .graph
                    .out_links(agent)
                    .next()
                    .map(|li| env.graph.links[li].callee)
                    .unwrap_or(AgentId((i + 1) % n as u32));
                em.push(lo + i as i64, own_handset(agent), agent, callee, 1, tau);
            }
        }
    }

    // Cast middlemen and buyers now that call volumes are known: their own
    // handsets must dominate the handsets passing through them, by a margin.
    let mut plans: Vec<TransferPlan> = Vec::new();
    let mut middlemen_truth = BTreeSet::new();
    if needed_donors > 0 {
        let own_count = |a: &AgentId| {
            em.truth.outgoing_calls.get(&AccountId(a.0 as u64)).copied().unwrap_or(0)
        };
        let margin = (2 * forensics.middleman_txns + 8) as u64;
        let mut insiders: Vec<AgentId> = env
            .initial
            .keys()
            .copied()
            .filter(|a| !data.planted_recipients.contains(a) && own_count(a) >= margin)
            .collect();
        insiders.sort_by_key(|a| (std::cmp::Reverse(own_count(a)), a.0));
        let needed_insiders =
            (3 * forensics.middlemen + forensics.handoffs) as usize;
        if insiders.len() < needed_insiders {
            return Err(Error::InvalidConfig(format!(
                "forensic plan needs {needed_insiders} established accounts with at least {margin} calls, found {}",
                insiders.len()
            )));
        }
        let mut insider_iter = insiders.into_iter();
        let mut donor_iter = donors.iter().copied();
        for _ in 0..forensics.middlemen {
            let m = insider_iter.next().unwrap();
            middlemen_truth.insert(AccountId(m.0 as u64));
            for _ in 0..2 {
                let donor = donor_iter.next().unwrap();
                let buyer = insider_iter.next().unwrap();
                plans.push(TransferPlan {
                    handset_owner: donor,
                    middleman: Some(m),
                    buyer,
                    leave_month,
                });
            }
        }
        for _ in 0..forensics.handoffs {
            let donor = donor_iter.next().unwrap();
            let buyer = insider_iter.next().unwrap();
            plans.push(TransferPlan { handset_owner: donor, middleman: None, buyer, leave_month });
        }
    }
    em.truth.middlemen = middlemen_truth;

    // Forensic journeys: the handset appears under the middleman (testing
    // calls) and then under the buyer (light pings).
    for plan in &plans {
        let h = own_handset(plan.handset_owner);
        let mm_month = plan.leave_month;
        let buyer_month = (plan.leave_month + 1).min(horizon);
        if let Some(mm) = plan.middleman {
            let (lo, _) = month_bounds(config, mm_month);
            for k in 0..forensics.middleman_txns {
                let callee = env
                    .graph
                    .out_links(mm)
                    .next()
                    .map(|li| env.graph.links[li].callee)
                    .unwrap_or(plan.buyer);
                em.push(lo + n_zone + 100 + k as i64 * 7 + mm.0 as i64 % 7, h, mm, callee, 10, mm_month);
            }
        }
        let (lo, _) = month_bounds(config, buyer_month);
        for k in 0..3u32 {
            let callee = env
                .graph
                .out_links(plan.buyer)
                .next()
                .map(|li| env.graph.links[li].callee)
                .unwrap_or(plan.handset_owner);
            em.push(lo + n_zone + 5_000 + k as i64 * 11 + plan.buyer.0 as i64 % 11, h, plan.buyer, callee, 15, buyer_month);
        }
        em.truth.transferred_handsets.insert(h);
    }
    // Direct handoffs are transfers too, but only middleman-borne handsets
    // count as transferred in the detection sense.
    em.truth
        .transferred_handsets
        .retain(|h| plans.iter().any(|p| own_handset(p.handset_owner) == *h && p.middleman.is_some()));

    em.records.sort_by_key(|r| (r.t, r.caller.0, r.callee.0));

    // Generator invariant: the plan must keep mode handsets where the truth
    // expects them, or recovery cannot be exact.
    let modes = mode_handsets(&em.records);
    for r in &adopting_recipients {
        let acc = AccountId(r.0 as u64);
        if modes.get(&acc) != Some(&own_handset(*r)) {
            return Err(Error::InvalidConfig(format!(
                "forensic plan corrupted recipient {acc}: mode handset moved"
            )));
        }
    }
    for (acc, h) in &modes {
        let is_recipient = em.truth.recipients.contains(acc);
        if !is_recipient && subsidized_handsets.contains(h) {
            return Err(Error::InvalidConfig(format!(
                "forensic plan leaked a subsidized handset onto account {acc}"
            )));
        }
    }

    Ok(CdrOutput { records: em.records, registry, truth: em.truth })
}
