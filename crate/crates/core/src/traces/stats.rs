//! Edge-level and account-level usage statistics, and the activation-weighted
//! handset price index.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::coverage::haversine_km;
use crate::error::{Error, Result};

use super::{AccountId, ModelId, TowerId, TowerTable, TraceCalendar, TransactionRecord, YearMonth};

/// Analysis window and calendar for the statistics below.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StatsConfig {
    pub calendar: TraceCalendar,
    /// Inclusive month window; records outside are ignored.
    pub window_start: Option<YearMonth>,
    pub window_end: Option<YearMonth>,
}

impl StatsConfig {
    fn in_window(&self, ym: YearMonth) -> bool {
        self.window_start.is_none_or(|s| ym >= s) && self.window_end.is_none_or(|e| ym <= e)
    }
}

/// Averages over the directed edges of a filtered subgraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeStatistics {
    pub nodes: usize,
    pub edges: usize,
    /// Distinct months with any record in the window; the denominator of the
    /// per-month rates (missing months do not dilute them).
    pub months_with_data: usize,
    pub calls_per_month: f64,
    pub duration_per_month_s: f64,
    /// Great-circle distance between the endpoints' mode towers, km.
    pub distance_km: f64,
    /// Edges excluded from the distance average for want of tower data.
    pub missing_distance_edges: usize,
    pub any_workday: f64,
    pub any_weekend: f64,
    pub any_late_night: f64,
    pub any_holiday: f64,
    pub only_workday: f64,
    pub all_under_30s: f64,
    pub all_under_1min: f64,
}

/// The mode tower of each account over all its appearances (caller and
/// callee side); ties go to the earliest first use, then the lowest id.
pub fn mode_towers(records: &[TransactionRecord]) -> HashMap<AccountId, TowerId> {
    let mut tally: HashMap<(AccountId, TowerId), (u64, i64)> = HashMap::new();
    for r in records {
        for (account, tower) in [(r.caller, r.caller_tower), (r.callee, r.callee_tower)] {
            let e = tally.entry((account, tower)).or_insert((0, i64::MAX));
            e.0 += 1;
            e.1 = e.1.min(r.t);
        }
    }
    let mut best: HashMap<AccountId, (TowerId, u64, i64)> = HashMap::new();
    for ((account, tower), (count, first_t)) in tally {
        best.entry(account)
            .and_modify(|cur| {
                let better = (count, std::cmp::Reverse(first_t), std::cmp::Reverse(tower.0))
                    > (cur.1, std::cmp::Reverse(cur.2), std::cmp::Reverse(cur.0 .0));
                if better {
                    *cur = (tower, count, first_t);
                }
            })
            .or_insert((tower, count, first_t));
    }
    best.into_iter().map(|(a, (tw, _, _))| (a, tw)).collect()
}

/// Per-edge metrics averaged over the directed edges `i -> j` where `i`
/// passes the source filter and `j` the target filter.
pub fn edge_statistics(
    records: &[TransactionRecord],
    towers: &TowerTable,
    source_filter: impl Fn(AccountId) -> bool,
    target_filter: impl Fn(AccountId) -> bool,
    cfg: &StatsConfig,
) -> EdgeStatistics {
    struct EdgeAcc {
        calls: u64,
        duration: u64,
        max_duration: u32,
        any_workday: bool,
        any_weekend: bool,
        any_late_night: bool,
        any_holiday: bool,
        all_workday: bool,
    }

    let windowed: Vec<&TransactionRecord> =
        records.iter().filter(|r| cfg.in_window(cfg.calendar.year_month(r.t))).collect();
    let months: BTreeSet<YearMonth> =
        windowed.iter().map(|r| cfg.calendar.year_month(r.t)).collect();
    let months_with_data = months.len().max(1);

    // Deterministic iteration keeps float accumulation order stable.
    let mut edges: BTreeMap<(AccountId, AccountId), EdgeAcc> = BTreeMap::new();
    let mut nodes: BTreeSet<AccountId> = BTreeSet::new();
    for r in &windowed {
        for a in [r.caller, r.callee] {
            if source_filter(a) {
                nodes.insert(a);
            }
        }
        if !source_filter(r.caller) || !target_filter(r.callee) {
            continue;
        }
        let acc = edges.entry((r.caller, r.callee)).or_insert(EdgeAcc {
            calls: 0,
            duration: 0,
            max_duration: 0,
            any_workday: false,
            any_weekend: false,
            any_late_night: false,
            any_holiday: false,
            all_workday: true,
        });
        acc.calls += 1;
        acc.duration += r.duration_s as u64;
        acc.max_duration = acc.max_duration.max(r.duration_s);
        let workday = cfg.calendar.is_workday(r.t);
        acc.any_workday |= workday;
        acc.all_workday &= workday;
        acc.any_weekend |= cfg.calendar.is_weekend(r.t);
        acc.any_late_night |= cfg.calendar.is_late_night(r.t);
        acc.any_holiday |= cfg.calendar.is_holiday(r.t);
    }

    let modes = mode_towers(
        &windowed.iter().map(|r| **r).collect::<Vec<_>>(),
    );
    let n_edges = edges.len();
    let mut out = EdgeStatistics {
        nodes: nodes.len(),
        edges: n_edges,
        months_with_data: months.len(),
        calls_per_month: 0.0,
        duration_per_month_s: 0.0,
        distance_km: 0.0,
        missing_distance_edges: 0,
        any_workday: 0.0,
        any_weekend: 0.0,
        any_late_night: 0.0,
        any_holiday: 0.0,
        only_workday: 0.0,
        all_under_30s: 0.0,
        all_under_1min: 0.0,
    };
    if n_edges == 0 {
        return out;
    }
    let mut dist_sum = 0.0;
    let mut dist_n = 0usize;
    for ((i, j), acc) in &edges {
        out.calls_per_month += acc.calls as f64 / months_with_data as f64;
        out.duration_per_month_s += acc.duration as f64 / months_with_data as f64;
        out.any_workday += acc.any_workday as u8 as f64;
        out.any_weekend += acc.any_weekend as u8 as f64;
        out.any_late_night += acc.any_late_night as u8 as f64;
        out.any_holiday += acc.any_holiday as u8 as f64;
        out.only_workday += acc.all_workday as u8 as f64;
        out.all_under_30s += (acc.max_duration < 30) as u8 as f64;
        out.all_under_1min += (acc.max_duration < 60) as u8 as f64;
        let towers_known = modes
            .get(i)
            .and_then(|ti| towers.get(*ti))
            .zip(modes.get(j).and_then(|tj| towers.get(*tj)));
        match towers_known {
            Some((ti, tj)) => {
                dist_sum += haversine_km(ti.position, tj.position);
                dist_n += 1;
            }
            None => out.missing_distance_edges += 1,
        }
    }
    let nf = n_edges as f64;
    out.calls_per_month /= nf;
    out.duration_per_month_s /= nf;
    out.any_workday /= nf;
    out.any_weekend /= nf;
    out.any_late_night /= nf;
    out.any_holiday /= nf;
    out.only_workday /= nf;
    out.all_under_30s /= nf;
    out.all_under_1min /= nf;
    out.distance_km = if dist_n > 0 { dist_sum / dist_n as f64 } else { 0.0 };
    out
}

/// Per-account usage profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountProfile {
    pub account: AccountId,
    pub mode_tower: Option<TowerId>,
    pub rural: bool,
    /// Month of the account's first transmitted transaction.
    pub adoption_month: YearMonth,
    pub calls_per_month: f64,
    pub duration_min_per_month: f64,
    /// Distinct undirected contacts.
    pub degree: usize,
    /// Share of the account's neighbor pairs that are themselves connected;
    /// zero below degree 2.
    pub clustering: f64,
    /// Share of outgoing duration to accounts adopting at or after the
    /// configured threshold month.
    pub fraction_duration_to_late_adopters: f64,
    pub subsidy_recipient: bool,
}

/// Build per-account profiles (Table-2-style metrics).
pub fn account_usage_profiles(
    records: &[TransactionRecord],
    towers: &TowerTable,
    late_adopter_threshold: YearMonth,
    recipients: Option<&BTreeSet<AccountId>>,
    cfg: &StatsConfig,
) -> BTreeMap<AccountId, AccountProfile> {
    let windowed: Vec<&TransactionRecord> =
        records.iter().filter(|r| cfg.in_window(cfg.calendar.year_month(r.t))).collect();
    let months: BTreeSet<YearMonth> =
        windowed.iter().map(|r| cfg.calendar.year_month(r.t)).collect();
    let months_with_data = months.len().max(1) as f64;

    // Adoption month: first outgoing record over the FULL stream, so that a
    // window restriction does not shift adoption dates.
    let mut adoption: HashMap<AccountId, YearMonth> = HashMap::new();
    for r in records {
        let ym = cfg.calendar.year_month(r.t);
        adoption
            .entry(r.caller)
            .and_modify(|cur| {
                if ym < *cur {
                    *cur = ym;
                }
            })
            .or_insert(ym);
    }

    let mut neighbors: HashMap<AccountId, BTreeSet<AccountId>> = HashMap::new();
    let mut out_calls: HashMap<AccountId, u64> = HashMap::new();
    let mut out_duration: HashMap<AccountId, u64> = HashMap::new();
    let mut late_duration: HashMap<AccountId, u64> = HashMap::new();
    for r in &windowed {
        neighbors.entry(r.caller).or_default().insert(r.callee);
        neighbors.entry(r.callee).or_default().insert(r.caller);
        *out_calls.entry(r.caller).or_default() += 1;
        *out_duration.entry(r.caller).or_default() += r.duration_s as u64;
        let late = adoption.get(&r.callee).is_some_and(|m| *m >= late_adopter_threshold);
        if late {
            *late_duration.entry(r.caller).or_default() += r.duration_s as u64;
        }
    }
    let modes = mode_towers(&windowed.iter().map(|r| **r).collect::<Vec<_>>());

    let mut profiles = BTreeMap::new();
    for (account, nbrs) in &neighbors {
        let degree = nbrs.len();
        let clustering = if degree < 2 {
            0.0
        } else {
            let nbr_vec: Vec<AccountId> = nbrs.iter().copied().collect();
            let mut closed = 0usize;
            let mut pairs = 0usize;
            for a in 0..nbr_vec.len() {
                for b in (a + 1)..nbr_vec.len() {
                    pairs += 1;
                    if neighbors[&nbr_vec[a]].contains(&nbr_vec[b]) {
                        closed += 1;
                    }
                }
            }
            closed as f64 / pairs as f64
        };
        let mode_tower = modes.get(account).copied();
        let rural = mode_tower.and_then(|tw| towers.get(tw)).map(|i| i.rural).unwrap_or(false);
        let total_dur = out_duration.get(account).copied().unwrap_or(0);
        let frac_late = if total_dur > 0 {
            late_duration.get(account).copied().unwrap_or(0) as f64 / total_dur as f64
        } else {
            0.0
        };
        profiles.insert(
            *account,
            AccountProfile {
                account: *account,
                mode_tower,
                rural,
                adoption_month: adoption
                    .get(account)
                    .copied()
                    .unwrap_or(YearMonth { year: 9999, month: 12 }),
                calls_per_month: out_calls.get(account).copied().unwrap_or(0) as f64
                    / months_with_data,
                duration_min_per_month: total_dur as f64 / 60.0 / months_with_data,
                degree,
                clustering,
                fraction_duration_to_late_adopters: frac_late,
                subsidy_recipient: recipients.is_some_and(|set| set.contains(account)),
            },
        );
    }
    profiles
}

/// Activation counts by model and month.
pub type ActivationTable = BTreeMap<(ModelId, YearMonth), u64>;
/// Retail prices by model and month.
pub type PriceTable = BTreeMap<(ModelId, YearMonth), f64>;

/// Activation-weighted monthly handset price index:
/// `index_t = sum_m q_mt p_mt / sum_m q_mt`. Months in the span without any
/// activations are reported as `None`, never interpolated. A model activated
/// in a month without a listed price is an error.
pub fn handset_price_index(
    activations: &ActivationTable,
    prices: &PriceTable,
) -> Result<BTreeMap<YearMonth, Option<f64>>> {
    let mut out = BTreeMap::new();
    let Some(first) = activations.keys().map(|(_, ym)| *ym).min() else {
        return Ok(out);
    };
    let last = activations.keys().map(|(_, ym)| *ym).max().unwrap();
    let mut ym = first;
    loop {
        out.insert(ym, None);
        if ym == last {
            break;
        }
        ym = ym.next();
    }
    let mut sums: BTreeMap<YearMonth, (f64, f64)> = BTreeMap::new();
    for ((model, ym), q) in activations {
        if *q == 0 {
            continue;
        }
        let p = prices.get(&(*model, *ym)).ok_or_else(|| Error::MissingPrice {
            context: "handset price index".into(),
            model: model.0 as u64,
            month: ym.to_string(),
        })?;
        let e = sums.entry(*ym).or_insert((0.0, 0.0));
        e.0 += *q as f64 * p;
        e.1 += *q as f64;
    }
    for (ym, (wp, q)) in sums {
        if q > 0.0 {
            out.insert(ym, Some(wp / q));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::GeoPoint;
    use crate::traces::{HandsetId, TowerInfo};

    fn rec_at(ym: (i32, u32, u32), hour: u32, i: u64, j: u64, d: u32) -> TransactionRecord {
        let t = chrono::NaiveDate::from_ymd_opt(ym.0, ym.1, ym.2)
            .unwrap()
            .and_hms_opt(hour, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp();
        TransactionRecord {
            t,
            handset: HandsetId(i),
            caller: AccountId(i),
            callee: AccountId(j),
            caller_tower: TowerId(i),
            callee_tower: TowerId(j),
            duration_s: d,
        }
    }

    fn tower_table(ids: &[u64]) -> TowerTable {
        let mut t = TowerTable::default();
        for (k, id) in ids.iter().enumerate() {
            t.towers.insert(
                TowerId(*id),
                TowerInfo {
                    position: GeoPoint { lat: -2.0 + 0.1 * k as f64, lon: 30.0 },
                    rural: k % 2 == 1,
                    antenna_height_m: 30.0,
                    active_month: 1,
                },
            );
        }
        t
    }

    #[test]
    fn single_edge_rates() {
        // One edge, 3 calls across 3 months, 10 s each.
        let records = vec![
            rec_at((2008, 1, 9), 10, 1, 2, 10), // Wednesday
            rec_at((2008, 2, 6), 10, 1, 2, 10),
            rec_at((2008, 3, 5), 10, 1, 2, 10),
        ];
        let towers = tower_table(&[1, 2]);
        let stats = edge_statistics(&records, &towers, |_| true, |_| true, &StatsConfig::default());
        assert_eq!(stats.edges, 1);
        assert_eq!(stats.months_with_data, 3);
        assert!((stats.calls_per_month - 1.0).abs() < 1e-12);
        assert!((stats.duration_per_month_s - 10.0).abs() < 1e-12);
        assert!((stats.all_under_30s - 1.0).abs() < 1e-12);
        assert!((stats.all_under_1min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weekend_only_edges() {
        // 2008-01-05 is a Saturday.
        let records = vec![rec_at((2008, 1, 5), 10, 1, 2, 45), rec_at((2008, 1, 5), 14, 1, 2, 61)];
        let towers = tower_table(&[1, 2]);
        let stats = edge_statistics(&records, &towers, |_| true, |_| true, &StatsConfig::default());
        assert_eq!(stats.any_weekend, 1.0);
        assert_eq!(stats.only_workday, 0.0);
        assert_eq!(stats.any_workday, 0.0);
        assert_eq!(stats.all_under_30s, 0.0);
        assert_eq!(stats.all_under_1min, 0.0);
    }

    #[test]
    fn holiday_share_uses_calendar() {
        let mut cfg = StatsConfig::default();
        cfg.calendar.holidays.push(chrono::NaiveDate::from_ymd_opt(2008, 1, 9).unwrap());
        let records = vec![rec_at((2008, 1, 9), 10, 1, 2, 10), rec_at((2008, 1, 10), 10, 3, 4, 10)];
        let towers = tower_table(&[1, 2, 3, 4]);
        let stats = edge_statistics(&records, &towers, |_| true, |_| true, &cfg);
        assert!((stats.any_holiday - 0.5).abs() < 1e-12);
    }

    #[test]
    fn filters_restrict_edges_monotonically() {
        let records = vec![
            rec_at((2008, 1, 7), 10, 1, 2, 10),
            rec_at((2008, 1, 7), 11, 2, 3, 10),
            rec_at((2008, 1, 7), 12, 3, 1, 10),
        ];
        let towers = tower_table(&[1, 2, 3]);
        let all = edge_statistics(&records, &towers, |_| true, |_| true, &StatsConfig::default());
        let sub = edge_statistics(
            &records,
            &towers,
            |a| a.0 <= 2,
            |a| a.0 <= 2,
            &StatsConfig::default(),
        );
        assert!(sub.edges <= all.edges);
        assert_eq!(all.edges, 3);
        assert_eq!(sub.edges, 1);
    }

    #[test]
    fn brute_force_recount_on_random_month() {
        let mut state = 99u64;
        let mut records = Vec::new();
        for _ in 0..600 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let day = 1 + ((state >> 40) % 28) as u32;
            let hour = ((state >> 32) % 24) as u32;
            let i = 1 + (state >> 20) % 12;
            let mut j = 1 + (state >> 8) % 12;
            if j == i {
                j = if j == 12 { 1 } else { j + 1 };
            }
            let d = (state % 120) as u32;
            records.push(rec_at((2008, 1, day), hour, i, j, d));
        }
        let towers = tower_table(&(1..=12).collect::<Vec<_>>());
        let cfg = StatsConfig::default();
        let stats = edge_statistics(&records, &towers, |_| true, |_| true, &cfg);

        // Independent recount: group with a BTreeMap and recompute means.
        let mut per_edge: BTreeMap<(u64, u64), Vec<&TransactionRecord>> = BTreeMap::new();
        for r in &records {
            per_edge.entry((r.caller.0, r.callee.0)).or_default().push(r);
        }
        assert_eq!(stats.edges, per_edge.len());
        let months = 1.0;
        let mean_calls: f64 =
            per_edge.values().map(|v| v.len() as f64 / months).sum::<f64>() / per_edge.len() as f64;
        assert!((stats.calls_per_month - mean_calls).abs() < 1e-9);
        let under30: f64 = per_edge
            .values()
            .map(|v| v.iter().all(|r| r.duration_s < 30) as u8 as f64)
            .sum::<f64>()
            / per_edge.len() as f64;
        assert!((stats.all_under_30s - under30).abs() < 1e-9);
        let any_wd: f64 = per_edge
            .values()
            .map(|v| v.iter().any(|r| cfg.calendar.is_workday(r.t)) as u8 as f64)
            .sum::<f64>()
            / per_edge.len() as f64;
        assert!((stats.any_workday - any_wd).abs() < 1e-9);
    }

    #[test]
    fn triangle_and_star_clustering() {
        let records = vec![
            rec_at((2008, 1, 7), 9, 1, 2, 10),
            rec_at((2008, 1, 7), 9, 2, 3, 10),
            rec_at((2008, 1, 7), 9, 3, 1, 10),
        ];
        let towers = tower_table(&[1, 2, 3]);
        let profiles = account_usage_profiles(
            &records,
            &towers,
            YearMonth::new(2008, 1),
            None,
            &StatsConfig::default(),
        );
        for p in profiles.values() {
            assert_eq!(p.degree, 2);
            assert_eq!(p.clustering, 1.0);
        }

        let star = vec![
            rec_at((2008, 1, 7), 9, 10, 1, 10),
            rec_at((2008, 1, 7), 9, 10, 2, 10),
            rec_at((2008, 1, 7), 9, 10, 3, 10),
        ];
        let towers = tower_table(&[1, 2, 3, 10]);
        let profiles = account_usage_profiles(
            &star,
            &towers,
            YearMonth::new(2008, 1),
            None,
            &StatsConfig::default(),
        );
        assert_eq!(profiles[&AccountId(10)].degree, 3);
        assert_eq!(profiles[&AccountId(10)].clustering, 0.0);
        assert_eq!(profiles[&AccountId(1)].clustering, 0.0); // degree 1
    }

    #[test]
    fn clustering_matches_cubic_oracle_on_random_graph() {
        // Erdos-Renyi-ish n=30 instance from a fixed LCG.
        let n = 30u64;
        let mut state = 7u64;
        let mut records = Vec::new();
        for i in 1..=n {
            for j in 1..=n {
                if i == j {
                    continue;
                }
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                if state % 100 < 12 {
                    records.push(rec_at((2008, 1, 7), 9, i, j, 10));
                }
            }
        }
        let towers = tower_table(&(1..=n).collect::<Vec<_>>());
        let profiles = account_usage_profiles(
            &records,
            &towers,
            YearMonth::new(2008, 1),
            None,
            &StatsConfig::default(),
        );
        // O(n^3) oracle over the undirected adjacency matrix.
        let mut adj = vec![vec![false; (n + 1) as usize]; (n + 1) as usize];
        for r in &records {
            adj[r.caller.0 as usize][r.callee.0 as usize] = true;
            adj[r.callee.0 as usize][r.caller.0 as usize] = true;
        }
        for i in 1..=n as usize {
            let nbrs: Vec<usize> = (1..=n as usize).filter(|j| adj[i][*j]).collect();
            let expected = if nbrs.len() < 2 {
                0.0
            } else {
                let mut closed = 0;
                let mut pairs = 0;
                for a in 0..nbrs.len() {
                    for b in (a + 1)..nbrs.len() {
                        pairs += 1;
                        if adj[nbrs[a]][nbrs[b]] {
                            closed += 1;
                        }
                    }
                }
                closed as f64 / pairs as f64
            };
            if let Some(p) = profiles.get(&AccountId(i as u64)) {
                assert!((p.clustering - expected).abs() < 1e-12, "node {i}");
                assert_eq!(p.degree, nbrs.len());
            } else {
                assert!(nbrs.is_empty());
            }
        }
    }

    #[test]
    fn late_adopter_fraction_and_rural_flag() {
        // Account 2 first transmits in 2008-02 (late); account 3 in 2007-12.
        let records = vec![
            rec_at((2007, 12, 3), 9, 3, 1, 10),
            rec_at((2008, 1, 7), 9, 1, 2, 30),
            rec_at((2008, 1, 7), 10, 1, 3, 10),
            rec_at((2008, 2, 4), 9, 2, 1, 10),
        ];
        let towers = tower_table(&[1, 2, 3]);
        let profiles = account_usage_profiles(
            &records,
            &towers,
            YearMonth::new(2008, 1),
            None,
            &StatsConfig::default(),
        );
        let p1 = &profiles[&AccountId(1)];
        // Outgoing duration: 30 to late adopter (2), 10 to early adopter (3).
        assert!((p1.fraction_duration_to_late_adopters - 0.75).abs() < 1e-12);
        // Tower 2 is rural in the fixture (odd index).
        assert!(towers.get(TowerId(2)).unwrap().rural);
    }

    #[test]
    fn price_index_cases() {
        let m = |v: u32| ModelId(v);
        let jan = YearMonth::new(2008, 1);
        let feb = jan.next();
        let mar = feb.next();
        let mut acts = ActivationTable::new();
        let mut prices = PriceTable::new();

        // Single model: index equals its price.
        acts.insert((m(1), jan), 50);
        prices.insert((m(1), jan), 20.0);
        // Two models at equal quantity: midpoint.
        acts.insert((m(1), mar), 10);
        acts.insert((m(2), mar), 10);
        prices.insert((m(1), mar), 20.0);
        prices.insert((m(2), mar), 30.0);

        let index = handset_price_index(&acts, &prices).unwrap();
        assert_eq!(index[&jan], Some(20.0));
        assert_eq!(index[&feb], None); // missing month reported, not interpolated
        assert_eq!(index[&mar], Some(25.0));
    }

    #[test]
    fn price_index_random_recompute() {
        let mut state = 5u64;
        let mut acts = ActivationTable::new();
        let mut prices = PriceTable::new();
        let mut ym = YearMonth::new(2007, 6);
        for _ in 0..18 {
            for model in 1..=5u32 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(11);
                let q = state % 40;
                let p = 10.0 + (state >> 13) as f64 % 30.0;
                if q > 0 {
                    acts.insert((ModelId(model), ym), q);
                    prices.insert((ModelId(model), ym), p);
                }
            }
            ym = ym.next();
        }
        let index = handset_price_index(&acts, &prices).unwrap();
        for (ym, value) in &index {
            let mut num = 0.0;
            let mut den = 0.0;
            for ((model, m2), q) in &acts {
                if m2 == ym {
                    num += *q as f64 * prices[&(*model, *m2)];
                    den += *q as f64;
                }
            }
            match value {
                Some(v) => assert!((v - num / den).abs() < 1e-12),
                None => assert_eq!(den, 0.0),
            }
        }
    }

    #[test]
    fn price_index_missing_price_is_error() {
        let mut acts = ActivationTable::new();
        acts.insert((ModelId(1), YearMonth::new(2008, 1)), 5);
        let prices = PriceTable::new();
        assert!(handset_price_index(&acts, &prices).is_err());
    }
}
