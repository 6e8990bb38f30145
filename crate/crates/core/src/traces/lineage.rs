//! Handset lineages and the forensic procedures built on them: activation
//! detection, subsidy-recipient identification, and middleman detection.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{AccountId, HandsetId, HandsetRegistry, ModelId, TowerId, TraceCalendar, TransactionRecord, YearMonth};

/// A maximal run of consecutive transactions of one handset by one account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageSegment {
    pub account: AccountId,
    pub first_t: i64,
    pub last_t: i64,
    pub count: u32,
}

/// The ownership history of one handset, reconstructed from its outgoing
/// transactions in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandsetLineage {
    pub handset: HandsetId,
    pub segments: Vec<LineageSegment>,
    pub model: Option<ModelId>,
    pub subsidized: bool,
}

impl HandsetLineage {
    pub fn total_transactions(&self) -> u64 {
        self.segments.iter().map(|s| s.count as u64).sum()
    }
}

/// All lineages plus ingestion diagnostics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LineageSet {
    pub by_handset: BTreeMap<HandsetId, HandsetLineage>,
    /// Duplicate `(t, h, i)` records dropped during ingestion.
    pub duplicates_dropped: u64,
}

impl LineageSet {
    pub fn total_transactions(&self) -> u64 {
        self.by_handset.values().map(|l| l.total_transactions()).sum()
    }
}

/// Build per-handset lineages. Records are sorted by a total order on
/// `(t, i, j, l_i, l_j, d)` so the result is independent of input order;
/// duplicate `(t, h, i)` keys are dropped with a count. A new segment starts
/// exactly where the calling account changes.
pub fn build_handset_lineages(
    records: &[TransactionRecord],
    registry: Option<&HandsetRegistry>,
    subsidized_model: Option<ModelId>,
) -> LineageSet {
    let mut per_handset: HashMap<HandsetId, Vec<&TransactionRecord>> = HashMap::new();
    for r in records {
        per_handset.entry(r.handset).or_default().push(r);
    }
    let mut set = LineageSet::default();
    for (handset, mut recs) in per_handset {
        recs.sort_by_key(|r| r.sort_key());
        let mut segments: Vec<LineageSegment> = Vec::new();
        let mut seen: HashSet<(i64, u64)> = HashSet::new();
        for r in recs {
            if !seen.insert((r.t, r.caller.0)) {
                set.duplicates_dropped += 1;
                continue;
            }
            match segments.last_mut() {
                Some(seg) if seg.account == r.caller => {
                    seg.last_t = r.t;
                    seg.count += 1;
                }
                _ => segments.push(LineageSegment {
                    account: r.caller,
                    first_t: r.t,
                    last_t: r.t,
                    count: 1,
                }),
            }
        }
        let model = registry.and_then(|reg| reg.model_of(handset));
        let subsidized = match (model, subsidized_model) {
            (Some(m), Some(s)) => m == s,
            _ => false,
        };
        set.by_handset.insert(handset, HandsetLineage { handset, segments, model, subsidized });
    }
    set
}

/// A handset's first transmitted transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub t: i64,
    pub account: AccountId,
    pub tower: TowerId,
}

/// First transaction per handset; ties at equal timestamps go to the lowest
/// account id.
pub fn detect_activations(records: &[TransactionRecord]) -> BTreeMap<HandsetId, Activation> {
    let mut out: BTreeMap<HandsetId, Activation> = BTreeMap::new();
    for r in records {
        let cand = Activation { t: r.t, account: r.caller, tower: r.caller_tower };
        out.entry(r.handset)
            .and_modify(|cur| {
                if (cand.t, cand.account) < (cur.t, cur.account) {
                    *cur = cand;
                }
            })
            .or_insert(cand);
    }
    out
}

/// The mode handset of each account: most outgoing transactions, ties broken
/// by earliest first use, then by handset id.
pub fn mode_handsets(records: &[TransactionRecord]) -> HashMap<AccountId, HandsetId> {
    let mut tally: HashMap<(AccountId, HandsetId), (u64, i64)> = HashMap::new();
    for r in records {
        let e = tally.entry((r.caller, r.handset)).or_insert((0, i64::MAX));
        e.0 += 1;
        e.1 = e.1.min(r.t);
    }
    let mut best: HashMap<AccountId, (HandsetId, u64, i64)> = HashMap::new();
    for ((account, handset), (count, first_t)) in tally {
        let cand = (handset, count, first_t);
        best.entry(account)
            .and_modify(|cur| {
                let better = (count, std::cmp::Reverse(first_t), std::cmp::Reverse(handset.0))
                    > (cur.1, std::cmp::Reverse(cur.2), std::cmp::Reverse(cur.0 .0));
                if better {
                    *cur = cand;
                }
            })
            .or_insert(cand);
    }
    best.into_iter().map(|(a, (h, _, _))| (a, h)).collect()
}

/// Accounts whose mode handset is the given model and whose handset was
/// activated inside `[window.0, window.1]` (inclusive months).
pub fn identify_subsidy_recipients(
    records: &[TransactionRecord],
    registry: &HandsetRegistry,
    model: ModelId,
    window: (YearMonth, YearMonth),
    calendar: &TraceCalendar,
) -> BTreeSet<AccountId> {
    if records.is_empty() {
        return BTreeSet::new();
    }
    let activations = detect_activations(records);
    let modes = mode_handsets(records);
    let mut out = BTreeSet::new();
    for (account, handset) in modes {
        if registry.model_of(handset) != Some(model) {
            continue;
        }
        let Some(act) = activations.get(&handset) else { continue };
        let ym = calendar.year_month(act.t);
        if ym >= window.0 && ym <= window.1 {
            out.insert(account);
        }
    }
    out
}

/// Middleman detection output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiddlemanReport {
    pub middlemen: BTreeSet<AccountId>,
    /// Subsidized handsets that passed through a flagged middleman.
    pub transferred_handsets: BTreeSet<HandsetId>,
}

/// An account is a middleman iff it appears as an interior lineage segment
/// (a segment with both a predecessor and a successor) of at most `max_txns`
/// transactions on at least `min_handsets` distinct subsidized handsets.
///
/// The predecessor and successor accounts necessarily differ from the
/// middleman (segments alternate accounts); they are not required to differ
/// from each other.
pub fn detect_middlemen(
    lineages: &LineageSet,
    subsidized: &BTreeSet<HandsetId>,
    max_txns: u32,
    min_handsets: usize,
) -> MiddlemanReport {
    let mut qualifying: BTreeMap<AccountId, BTreeSet<HandsetId>> = BTreeMap::new();
    for (handset, lineage) in &lineages.by_handset {
        if !subsidized.contains(handset) {
            continue;
        }
        let segs = &lineage.segments;
        if segs.len() >= 3 {
            for seg in &segs[1..segs.len() - 1] {
                if seg.count <= max_txns {
                    qualifying.entry(seg.account).or_default().insert(*handset);
                }
            }
        }
    }
    let mut report = MiddlemanReport::default();
    for (account, handsets) in qualifying {
        if handsets.len() >= min_handsets {
            report.transferred_handsets.extend(handsets.iter().copied());
            report.middlemen.insert(account);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: i64, h: u64, i: u64, j: u64, d: u32) -> TransactionRecord {
        TransactionRecord {
            t,
            handset: HandsetId(h),
            caller: AccountId(i),
            callee: AccountId(j),
            caller_tower: TowerId(1),
            callee_tower: TowerId(2),
            duration_s: d,
        }
    }

    #[test]
    fn single_user_single_segment() {
        let records = vec![rec(10, 1, 5, 6, 30), rec(20, 1, 5, 7, 30), rec(30, 1, 5, 6, 30)];
        let set = build_handset_lineages(&records, None, None);
        let lin = &set.by_handset[&HandsetId(1)];
        assert_eq!(lin.segments.len(), 1);
        assert_eq!(lin.segments[0].count, 3);
        assert_eq!(lin.segments[0].first_t, 10);
        assert_eq!(lin.segments[0].last_t, 30);
    }

    #[test]
    fn handoff_makes_two_segments() {
        let records = vec![
            rec(1, 1, 10, 99, 5),
            rec(2, 1, 10, 99, 5),
            rec(3, 1, 10, 99, 5),
            rec(4, 1, 20, 99, 5),
            rec(5, 1, 20, 99, 5),
        ];
        let set = build_handset_lineages(&records, None, None);
        let segs = &set.by_handset[&HandsetId(1)].segments;
        assert_eq!(segs.len(), 2);
        assert_eq!((segs[0].account, segs[0].count), (AccountId(10), 3));
        assert_eq!((segs[1].account, segs[1].count), (AccountId(20), 2));
    }

    #[test]
    fn interleaved_users_make_three_segments() {
        let records =
            vec![rec(1, 1, 10, 99, 5), rec(2, 1, 20, 99, 5), rec(3, 1, 10, 99, 5)];
        let set = build_handset_lineages(&records, None, None);
        let segs = &set.by_handset[&HandsetId(1)].segments;
        let accounts: Vec<u64> = segs.iter().map(|s| s.account.0).collect();
        assert_eq!(accounts, vec![10, 20, 10]);
    }

    #[test]
    fn duplicates_dropped_with_count() {
        let records = vec![rec(1, 1, 10, 99, 5), rec(1, 1, 10, 98, 7), rec(2, 1, 10, 99, 5)];
        let set = build_handset_lineages(&records, None, None);
        assert_eq!(set.duplicates_dropped, 1);
        assert_eq!(set.total_transactions(), 2);
    }

    #[test]
    fn lineage_completeness_under_shuffling() {
        // Sum of segment counts equals deduplicated record count, regardless
        // of input order.
        let mut records = Vec::new();
        for k in 0..50i64 {
            records.push(rec(k, (k % 3) as u64, (k % 7) as u64 + 1, 99, 10));
        }
        let forward = build_handset_lineages(&records, None, None);
        records.reverse();
        let backward = build_handset_lineages(&records, None, None);
        assert_eq!(forward.total_transactions(), 50);
        assert_eq!(forward.by_handset, backward.by_handset);
    }

    #[test]
    fn activations_pick_earliest_with_tie_break() {
        let records = vec![rec(20, 1, 10, 99, 5), rec(10, 1, 30, 99, 5), rec(10, 1, 20, 99, 5)];
        let act = detect_activations(&records);
        assert_eq!(act[&HandsetId(1)].t, 10);
        assert_eq!(act[&HandsetId(1)].account, AccountId(20));
    }

    #[test]
    fn activations_match_sort_oracle_on_bulk_stream() {
        let mut records = Vec::new();
        let mut state = 123456789u64;
        for _ in 0..10_000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let t = (state >> 33) as i64 % 100_000;
            let h = (state >> 17) % 200;
            let i = (state >> 5) % 500 + 1;
            records.push(rec(t, h, i, 9999, 10));
        }
        let fast = detect_activations(&records);
        let mut sorted = records.clone();
        sorted.sort_by_key(|r| (r.handset.0, r.t, r.caller.0));
        let mut oracle: BTreeMap<HandsetId, Activation> = BTreeMap::new();
        for r in &sorted {
            oracle
                .entry(r.handset)
                .or_insert(Activation { t: r.t, account: r.caller, tower: r.caller_tower });
        }
        assert_eq!(fast, oracle);
    }

    fn registry(pairs: &[(u64, u32)]) -> HandsetRegistry {
        let mut reg = HandsetRegistry::default();
        for (h, m) in pairs {
            reg.models.insert(HandsetId(*h), ModelId(*m));
        }
        reg
    }

    #[test]
    fn recipients_require_model_and_window() {
        let cal = TraceCalendar::default();
        let jan_2008 = chrono::NaiveDate::from_ymd_opt(2008, 1, 15)
            .unwrap()
            .and_hms_opt(9, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp();
        let jun_2008 = jan_2008 + 150 * 86_400;
        let records = vec![
            rec(jan_2008, 1, 10, 99, 5),     // subsidized model, in window
            rec(jan_2008 + 5, 2, 20, 99, 5), // other model
            rec(jun_2008, 3, 30, 99, 5),     // subsidized model, after window
        ];
        let reg = registry(&[(1, 113), (2, 7), (3, 113)]);
        let window = (YearMonth::new(2008, 1), YearMonth::new(2008, 4));
        let got = identify_subsidy_recipients(&records, &reg, ModelId(113), window, &cal);
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec![AccountId(10)]);
    }

    #[test]
    fn recipients_use_mode_handset() {
        let cal = TraceCalendar::default();
        let t0 = chrono::NaiveDate::from_ymd_opt(2008, 2, 1)
            .unwrap()
            .and_hms_opt(8, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp();
        // Account 10 uses subsidized handset 1 once but other handset 2 three
        // times: mode handset is 2, so 10 is not a recipient.
        let records = vec![
            rec(t0, 1, 10, 99, 5),
            rec(t0 + 10, 2, 10, 99, 5),
            rec(t0 + 20, 2, 10, 99, 5),
            rec(t0 + 30, 2, 10, 99, 5),
        ];
        let reg = registry(&[(1, 113), (2, 7)]);
        let window = (YearMonth::new(2008, 1), YearMonth::new(2008, 4));
        let got = identify_subsidy_recipients(&records, &reg, ModelId(113), window, &cal);
        assert!(got.is_empty());
        assert!(identify_subsidy_recipients(&[], &reg, ModelId(113), window, &cal).is_empty());
    }

    fn lineage_from(accounts_counts: &[(u64, u32)], handset: u64) -> HandsetLineage {
        let mut t = 0i64;
        let segments = accounts_counts
            .iter()
            .map(|(a, c)| {
                let seg =
                    LineageSegment { account: AccountId(*a), first_t: t, last_t: t + *c as i64, count: *c };
                t += *c as i64 + 1;
                seg
            })
            .collect();
        HandsetLineage { handset: HandsetId(handset), segments, model: None, subsidized: true }
    }

    #[test]
    fn middleman_needs_two_subsidized_handsets() {
        let mut set = LineageSet::default();
        set.by_handset.insert(HandsetId(1), lineage_from(&[(100, 50), (7, 5), (200, 80)], 1));
        set.by_handset.insert(HandsetId(2), lineage_from(&[(101, 40), (7, 3), (201, 90)], 2));
        set.by_handset.insert(HandsetId(3), lineage_from(&[(102, 40), (8, 3), (202, 90)], 3));
        let subs: BTreeSet<HandsetId> = [HandsetId(1), HandsetId(2), HandsetId(3)].into();
        let report = detect_middlemen(&set, &subs, 20, 2);
        assert_eq!(report.middlemen.iter().copied().collect::<Vec<_>>(), vec![AccountId(7)]);
        assert_eq!(
            report.transferred_handsets.iter().copied().collect::<Vec<_>>(),
            vec![HandsetId(1), HandsetId(2)]
        );
    }

    #[test]
    fn middleman_transaction_cap_is_inclusive() {
        let mut set = LineageSet::default();
        set.by_handset.insert(HandsetId(1), lineage_from(&[(100, 50), (7, 20), (200, 80)], 1));
        set.by_handset.insert(HandsetId(2), lineage_from(&[(101, 40), (7, 21), (201, 90)], 2));
        set.by_handset.insert(HandsetId(3), lineage_from(&[(102, 40), (7, 20), (202, 90)], 3));
        let subs: BTreeSet<HandsetId> = [HandsetId(1), HandsetId(2), HandsetId(3)].into();
        let report = detect_middlemen(&set, &subs, 20, 2);
        // Handset 2's 21-transaction segment does not qualify.
        assert!(report.middlemen.contains(&AccountId(7)));
        assert!(!report.transferred_handsets.contains(&HandsetId(2)));
    }

    #[test]
    fn terminal_segments_never_qualify() {
        let mut set = LineageSet::default();
        // Account 7 is first and last user, never interior.
        set.by_handset.insert(HandsetId(1), lineage_from(&[(7, 5), (100, 50)], 1));
        set.by_handset.insert(HandsetId(2), lineage_from(&[(100, 50), (7, 5)], 2));
        let subs: BTreeSet<HandsetId> = [HandsetId(1), HandsetId(2)].into();
        let report = detect_middlemen(&set, &subs, 20, 2);
        assert!(report.middlemen.is_empty());
    }

    #[test]
    fn unsubsidized_handsets_ignored() {
        let mut set = LineageSet::default();
        set.by_handset.insert(HandsetId(1), lineage_from(&[(100, 50), (7, 5), (200, 80)], 1));
        set.by_handset.insert(HandsetId(2), lineage_from(&[(101, 40), (7, 3), (201, 90)], 2));
        let subs: BTreeSet<HandsetId> = [HandsetId(1)].into();
        let report = detect_middlemen(&set, &subs, 20, 2);
        assert!(report.middlemen.is_empty());
    }
}
