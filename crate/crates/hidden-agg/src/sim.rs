//! The dynamic hidden database: top-k search answering, update schedules, and
//! per-round query-budget accounting.
//!
//! A [`Simulator`] owns one database trajectory. Searches are conjunctive
//! prefix queries over a caller-supplied attribute ordering (the query tree's
//! ordering); the simulator answers them from a lazily built sorted index and
//! memoizes answers within a round, since a repeated query against an
//! unchanged state must return the identical outcome. Estimators never see
//! anything beyond the up-to-k returned tuples and the overflow flag.

use std::cmp::Ordering as CmpOrd;
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DatabaseState, Schema, Tuple};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("query budget exceeded: all {0} queries for this round are spent")]
    BudgetExceeded(u32),
    #[error("insert pool exhausted: schedule requires more reserve tuples")]
    PoolExhausted,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Outcome status of one search call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryStatus {
    /// No matching tuple.
    Underflow,
    /// Between 1 and k matches; all of them are returned.
    Valid,
    /// More than k matches; only the k highest-ranked are returned.
    Overflow,
}

/// What a search call returns: a status flag and at most k tuples.
///
/// The true match count is never exposed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub status: QueryStatus,
    pub returned: Vec<Tuple>,
}

impl QueryOutcome {
    pub fn is_overflow(&self) -> bool {
        self.status == QueryStatus::Overflow
    }
}

/// Per-round query budget. `consume` fails once the limit is reached; the
/// caller must stop issuing queries for the round.
#[derive(Debug, Clone)]
pub struct BudgetLedger {
    limit: u32,
    used: u32,
}

impl BudgetLedger {
    pub fn new(limit: u32) -> Self {
        BudgetLedger { limit, used: 0 }
    }

    pub fn consume(&mut self) -> Result<(), SimError> {
        if self.used >= self.limit {
            return Err(SimError::BudgetExceeded(self.limit));
        }
        self.used += 1;
        assert!(self.used <= self.limit, "budget invariant violated");
        Ok(())
    }

    pub fn used(&self) -> u32 {
        self.used
    }

    pub fn limit(&self) -> u32 {
        self.limit
    }

    pub fn remaining(&self) -> u32 {
        self.limit - self.used
    }

    /// Resets at a round boundary.
    pub fn reset(&mut self) {
        self.used = 0;
    }
}

/// When updates are applied relative to the round's query timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// All of a round's inserts/deletes land at the round boundary.
    Round,
    /// The same changes are spread evenly across the round's search calls.
    Constant,
}

/// Per-round insertion/deletion schedule. Deletions pick victims uniformly at
/// random from the schedule's own PRNG stream, independent of estimator
/// randomness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateSchedule {
    pub inserts_per_round: u32,
    pub delete_fraction: f64,
    pub mode: UpdateMode,
    pub seed: u64,
}

impl UpdateSchedule {
    pub fn none(seed: u64) -> Self {
        UpdateSchedule {
            inserts_per_round: 0,
            delete_fraction: 0.0,
            mode: UpdateMode::Round,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.delete_fraction) || self.delete_fraction.is_nan() {
            return Err(SimError::InvalidSchedule(
                "delete_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed derivation for independent PRNG streams.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(salt))
}

/// Ranking function standing in for the interface's proprietary scoring.
///
/// Estimator correctness must not depend on the choice; tests run both.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Scorer {
    /// A static pseudo-random score per tuple id.
    SeededHash { seed: u64 },
    /// Rank by the tuple's value vector (schema order), lexicographically.
    ValueOrdered,
}

impl Scorer {
    /// Best-first comparison: `Less` means `a` outranks `b`. Ties broken by
    /// tuple id, so the order is total.
    pub fn cmp_best_first(&self, a: &Tuple, b: &Tuple) -> CmpOrd {
        let primary = match *self {
            Scorer::SeededHash { seed } => {
                let sa = splitmix64(seed ^ a.id);
                let sb = splitmix64(seed ^ b.id);
                sb.cmp(&sa) // higher score first
            }
            Scorer::ValueOrdered => a.values.cmp(&b.values),
        };
        primary.then_with(|| a.id.cmp(&b.id))
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Insert,
    Delete,
}

/// Simulator configuration beyond the schedule itself.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Top-k cutoff of the search interface.
    pub k: usize,
    /// Queries permitted per round; also the timeline length over which
    /// constant-mode updates are spread.
    pub round_budget: u32,
    pub scorer: Scorer,
}

/// One dynamic hidden database behind a top-k interface.
///
/// Single-threaded; independent trials each own a simulator. Cloning yields a
/// replica that will follow the identical trajectory.
#[derive(Debug, Clone)]
pub struct Simulator {
    schema: Arc<Schema>,
    state: DatabaseState,
    schedule: UpdateSchedule,
    pool: VecDeque<Vec<u32>>,
    next_id: u64,
    sched_rng: ChaCha8Rng,
    cfg: SimConfig,
    // Within-round caches; any mutation invalidates them.
    index_cache: HashMap<Vec<usize>, Vec<u32>>,
    memo: HashMap<Vec<(u32, u32)>, QueryOutcome>,
    // Constant-mode bookkeeping.
    calls_in_round: u32,
    pending: VecDeque<(u32, Event)>,
}

impl Simulator {
    pub fn new(
        schema: Arc<Schema>,
        initial: Vec<Vec<u32>>,
        pool: Vec<Vec<u32>>,
        schedule: UpdateSchedule,
        cfg: SimConfig,
    ) -> Result<Self, SimError> {
        schedule.validate()?;
        assert!(cfg.k >= 1, "top-k interface requires k >= 1");
        let mut next_id = 1u64;
        let tuples = initial
            .into_iter()
            .map(|values| {
                let t = Tuple::new(next_id, values);
                next_id += 1;
                t
            })
            .collect();
        Ok(Simulator {
            schema,
            state: DatabaseState::new(tuples, 1),
            schedule: schedule.clone(),
            pool: pool.into(),
            next_id,
            sched_rng: ChaCha8Rng::seed_from_u64(schedule.seed),
            cfg,
            index_cache: HashMap::new(),
            memo: HashMap::new(),
            calls_in_round: 0,
            pending: VecDeque::new(),
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn state(&self) -> &DatabaseState {
        &self.state
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn round_index(&self) -> u32 {
        self.state.round_index()
    }

    pub fn pool_remaining(&self) -> usize {
        self.pool.len()
    }

    /// Answers a conjunctive prefix query.
    ///
    /// `ordering` lists attribute indexes in the active query tree's sort
    /// order (pinned attributes first, then free levels); `values` constrains
    /// its first `values.len()` attributes. Consumes one query from the
    /// ledger or fails without touching the database.
    pub fn search(
        &mut self,
        ordering: &[usize],
        values: &[u32],
        ledger: &mut BudgetLedger,
    ) -> Result<QueryOutcome, SimError> {
        debug_assert!(values.len() <= ordering.len());
        ledger.consume()?;
        if self.schedule.mode == UpdateMode::Constant {
            self.calls_in_round += 1;
            self.fire_due_events();
        }

        let mut key: Vec<(u32, u32)> = ordering
            .iter()
            .zip(values)
            .map(|(&a, &v)| (a as u32, v))
            .collect();
        key.sort_unstable();
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        let outcome = self.resolve(ordering, values);
        self.memo.insert(key, outcome.clone());
        Ok(outcome)
    }

    fn resolve(&mut self, ordering: &[usize], values: &[u32]) -> QueryOutcome {
        self.ensure_index(ordering);
        let order = &self.index_cache[ordering];
        let tuples = self.state.tuples();
        let prefix_cmp = |pos: u32| -> CmpOrd {
            let t = &tuples[pos as usize];
            for (i, &want) in values.iter().enumerate() {
                match t.values[ordering[i]].cmp(&want) {
                    CmpOrd::Equal => continue,
                    other => return other,
                }
            }
            CmpOrd::Equal
        };
        let lo = order.partition_point(|&pos| prefix_cmp(pos) == CmpOrd::Less);
        let hi = lo + order[lo..].partition_point(|&pos| prefix_cmp(pos) == CmpOrd::Equal);
        let count = hi - lo;
        let k = self.cfg.k;

        if count == 0 {
            QueryOutcome {
                status: QueryStatus::Underflow,
                returned: Vec::new(),
            }
        } else if count <= k {
            let mut matched: Vec<Tuple> =
                order[lo..hi].iter().map(|&p| tuples[p as usize].clone()).collect();
            matched.sort_unstable_by_key(|t| t.id);
            QueryOutcome {
                status: QueryStatus::Valid,
                returned: matched,
            }
        } else {
            let scorer = self.cfg.scorer;
            let mut cands: Vec<u32> = order[lo..hi].to_vec();
            cands.select_nth_unstable_by(k - 1, |&a, &b| {
                scorer.cmp_best_first(&tuples[a as usize], &tuples[b as usize])
            });
            cands.truncate(k);
            cands
                .sort_unstable_by(|&a, &b| scorer.cmp_best_first(&tuples[a as usize], &tuples[b as usize]));
            QueryOutcome {
                status: QueryStatus::Overflow,
                returned: cands.into_iter().map(|p| tuples[p as usize].clone()).collect(),
            }
        }
    }

    fn ensure_index(&mut self, ordering: &[usize]) {
        if self.index_cache.contains_key(ordering) {
            return;
        }
        let tuples = self.state.tuples();
        let mut order: Vec<u32> = (0..tuples.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| {
            let ta = &tuples[a as usize];
            let tb = &tuples[b as usize];
            for &attr in ordering {
                match ta.values[attr].cmp(&tb.values[attr]) {
                    CmpOrd::Equal => continue,
                    other => return other,
                }
            }
            ta.id.cmp(&tb.id)
        });
        self.index_cache.insert(ordering.to_vec(), order);
    }

    fn fire_due_events(&mut self) {
        while let Some(&(pos, event)) = self.pending.front() {
            if pos > self.calls_in_round {
                break;
            }
            self.pending.pop_front();
            self.apply_event(event);
        }
    }

    fn apply_event(&mut self, event: Event) {
        match event {
            Event::Insert => {
                if let Some(values) = self.pool.pop_front() {
                    let t = Tuple::new(self.next_id, values);
                    self.next_id += 1;
                    self.state.tuples_mut().push(t);
                    self.invalidate();
                } else {
                    log::warn!("constant-mode insert skipped: reserve pool exhausted");
                }
            }
            Event::Delete => {
                let n = self.state.len();
                if n > 0 {
                    let victim = rand::Rng::random_range(&mut self.sched_rng, 0..n);
                    self.state.tuples_mut().swap_remove(victim);
                    self.invalidate();
                }
            }
        }
    }

    fn invalidate(&mut self) {
        self.index_cache.clear();
        self.memo.clear();
    }

    /// Applies any constant-mode events the round's query sequence did not
    /// reach, finalizing the end-of-round state. A no-op in round mode.
    pub fn finish_round(&mut self) {
        while let Some((_, event)) = self.pending.pop_front() {
            self.apply_event(event);
        }
    }

    /// Applies the schedule and moves to the next round.
    ///
    /// Round mode deletes `floor(delete_fraction * n)` tuples chosen uniformly
    /// without replacement, then inserts `inserts_per_round` tuples from the
    /// reserve pool. Constant mode registers the same changes as events fired
    /// between this round's search calls instead.
    pub fn advance_round(&mut self) -> Result<(), SimError> {
        self.finish_round();
        self.calls_in_round = 0;

        let n = self.state.len();
        let deletes = ((self.schedule.delete_fraction * n as f64) + 1e-9).floor() as usize;
        let inserts = self.schedule.inserts_per_round as usize;
        match self.schedule.mode {
            UpdateMode::Round => {
                if deletes > 0 {
                    let mut victims =
                        rand::seq::index::sample(&mut self.sched_rng, n, deletes).into_vec();
                    victims.sort_unstable_by(|a, b| b.cmp(a));
                    for v in victims {
                        self.state.tuples_mut().swap_remove(v);
                    }
                }
                if inserts > self.pool.len() {
                    return Err(SimError::PoolExhausted);
                }
                for _ in 0..inserts {
                    let values = self.pool.pop_front().expect("length checked");
                    let t = Tuple::new(self.next_id, values);
                    self.next_id += 1;
                    self.state.tuples_mut().push(t);
                }
                self.invalidate();
            }
            UpdateMode::Constant => {
                if inserts > self.pool.len() {
                    return Err(SimError::PoolExhausted);
                }
                let timeline = self.cfg.round_budget.max(1);
                let mut events = Vec::with_capacity(inserts + deletes);
                if inserts > 0 {
                    let period = timeline.div_ceil(inserts as u32);
                    for i in 1..=inserts as u32 {
                        events.push((period.saturating_mul(i), Event::Insert));
                    }
                }
                if deletes > 0 {
                    let period = timeline.div_ceil(deletes as u32);
                    for i in 1..=deletes as u32 {
                        events.push((period.saturating_mul(i), Event::Delete));
                    }
                }
                // Stable order: by position, inserts before deletes.
                events.sort_by_key(|&(pos, e)| (pos, matches!(e, Event::Delete)));
                self.pending = events.into();
            }
        }
        self.state.set_round_index(self.state.round_index() + 1);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Schema;

    fn boolean_sim(
        m: usize,
        rows: &[&[u32]],
        pool: Vec<Vec<u32>>,
        schedule: UpdateSchedule,
        k: usize,
    ) -> Simulator {
        let schema = Arc::new(Schema::boolean(m).unwrap());
        Simulator::new(
            schema,
            rows.iter().map(|r| r.to_vec()).collect(),
            pool,
            schedule,
            SimConfig {
                k,
                round_budget: 1000,
                scorer: Scorer::SeededHash { seed: 7 },
            },
        )
        .unwrap()
    }

    fn full_order(m: usize) -> Vec<usize> {
        (0..m).collect()
    }

    #[test]
    fn search_valid_returns_all_matches() {
        let rows: &[&[u32]] = &[&[0, 0], &[0, 1], &[1, 1], &[1, 0], &[0, 0]];
        let mut sim = boolean_sim(2, rows, vec![], UpdateSchedule::none(1), 10);
        let mut ledger = BudgetLedger::new(10);
        let out = sim.search(&full_order(2), &[0], &mut ledger).unwrap();
        assert_eq!(out.status, QueryStatus::Valid);
        assert_eq!(out.returned.len(), 3);
        assert_eq!(ledger.used(), 1);
    }

    #[test]
    fn search_underflow_is_empty() {
        let rows: &[&[u32]] = &[&[0, 0]];
        let mut sim = boolean_sim(2, rows, vec![], UpdateSchedule::none(1), 10);
        let mut ledger = BudgetLedger::new(10);
        let out = sim.search(&full_order(2), &[1, 1], &mut ledger).unwrap();
        assert_eq!(out.status, QueryStatus::Underflow);
        assert!(out.returned.is_empty());
    }

    #[test]
    fn search_overflow_matches_sort_and_truncate_oracle() {
        // 15 matching tuples with k = 10: the answer must equal the oracle
        // that sorts the full match set by score and truncates.
        let rows: Vec<Vec<u32>> = (0..20u32).map(|i| vec![(i < 15) as u32 ^ 1, i % 2]).collect();
        // rows: first 15 have A1=0? (i<15 → 1^1=0) yes; last 5 have A1=1.
        let schema = Arc::new(Schema::boolean(2).unwrap());
        for scorer in [Scorer::SeededHash { seed: 99 }, Scorer::ValueOrdered] {
            let mut sim = Simulator::new(
                schema.clone(),
                rows.clone(),
                vec![],
                UpdateSchedule::none(1),
                SimConfig {
                    k: 10,
                    round_budget: 100,
                    scorer,
                },
            )
            .unwrap();
            let mut ledger = BudgetLedger::new(10);
            let out = sim.search(&full_order(2), &[0], &mut ledger).unwrap();
            assert_eq!(out.status, QueryStatus::Overflow);
            assert_eq!(out.returned.len(), 10);

            let mut expected: Vec<Tuple> = sim
                .state()
                .tuples()
                .iter()
                .filter(|t| t.values[0] == 0)
                .cloned()
                .collect();
            assert_eq!(expected.len(), 15);
            expected.sort_by(|a, b| scorer.cmp_best_first(a, b));
            expected.truncate(10);
            assert_eq!(out.returned, expected);
        }
    }

    #[test]
    fn repeated_query_within_round_is_identical() {
        let rows: Vec<Vec<u32>> = (0..64u32)
            .map(|i| vec![i & 1, (i >> 1) & 1, (i >> 2) & 1, (i >> 3) & 1, (i >> 4) & 1, (i >> 5) & 1])
            .collect();
        let mut sim = boolean_sim(
            6,
            &rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(),
            vec![],
            UpdateSchedule::none(1),
            4,
        );
        let mut ledger = BudgetLedger::new(10);
        let a = sim.search(&full_order(6), &[1], &mut ledger).unwrap();
        let b = sim.search(&full_order(6), &[1], &mut ledger).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.returned, b.returned);
        assert_eq!(ledger.used(), 2); // repeats still consume budget
    }

    #[test]
    fn budget_exhaustion_blocks_search() {
        let rows: &[&[u32]] = &[&[0, 0]];
        let mut sim = boolean_sim(2, rows, vec![], UpdateSchedule::none(1), 10);
        let mut ledger = BudgetLedger::new(2);
        sim.search(&full_order(2), &[], &mut ledger).unwrap();
        sim.search(&full_order(2), &[], &mut ledger).unwrap();
        assert!(matches!(
            sim.search(&full_order(2), &[], &mut ledger),
            Err(SimError::BudgetExceeded(2))
        ));
        assert_eq!(ledger.used(), 2);
    }

    #[test]
    fn round_update_matches_bookkeeping() {
        // n = 5000, 50 inserts, 0.5% deletions: 5000 - 25 + 50 = 5025.
        let rows: Vec<Vec<u32>> = (0..5000u32).map(|i| vec![i & 1, (i >> 1) & 1]).collect();
        let pool: Vec<Vec<u32>> = (0..100u32).map(|i| vec![i & 1, 1]).collect();
        let schedule = UpdateSchedule {
            inserts_per_round: 50,
            delete_fraction: 0.005,
            mode: UpdateMode::Round,
            seed: 3,
        };
        let mut sim = boolean_sim(
            2,
            &rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(),
            pool,
            schedule,
            10,
        );
        sim.advance_round().unwrap();
        assert_eq!(sim.state().len(), 5025);
        assert_eq!(sim.round_index(), 2);
    }

    #[test]
    fn no_op_update_keeps_tuples() {
        let rows: &[&[u32]] = &[&[0, 0], &[1, 1]];
        let mut sim = boolean_sim(2, rows, vec![], UpdateSchedule::none(5), 10);
        let before: Vec<u64> = sim.state().tuples().iter().map(|t| t.id).collect();
        sim.advance_round().unwrap();
        let after: Vec<u64> = sim.state().tuples().iter().map(|t| t.id).collect();
        assert_eq!(before, after);
        assert_eq!(sim.round_index(), 2);
    }

    #[test]
    fn full_deletion_empties_database() {
        let rows: Vec<Vec<u32>> = (0..100u32).map(|i| vec![i & 1, (i >> 1) & 1]).collect();
        let schedule = UpdateSchedule {
            inserts_per_round: 0,
            delete_fraction: 1.0,
            mode: UpdateMode::Round,
            seed: 3,
        };
        let mut sim = boolean_sim(
            2,
            &rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(),
            vec![],
            schedule,
            10,
        );
        sim.advance_round().unwrap();
        assert_eq!(sim.state().len(), 0);
    }

    #[test]
    fn pool_exhaustion_is_an_error() {
        let rows: &[&[u32]] = &[&[0, 0]];
        let schedule = UpdateSchedule {
            inserts_per_round: 5,
            delete_fraction: 0.0,
            mode: UpdateMode::Round,
            seed: 3,
        };
        let mut sim = boolean_sim(2, rows, vec![vec![1, 0]], schedule, 10);
        assert!(matches!(sim.advance_round(), Err(SimError::PoolExhausted)));
    }

    #[test]
    fn constant_mode_spreads_events_across_calls() {
        let rows: Vec<Vec<u32>> = (0..10u32).map(|i| vec![i & 1, (i >> 1) & 1]).collect();
        let pool: Vec<Vec<u32>> = (0..4u32).map(|_| vec![1, 1]).collect();
        let schedule = UpdateSchedule {
            inserts_per_round: 4,
            delete_fraction: 0.0,
            mode: UpdateMode::Constant,
            seed: 3,
        };
        let schema = Arc::new(Schema::boolean(2).unwrap());
        let mut sim = Simulator::new(
            schema,
            rows,
            pool,
            schedule,
            SimConfig {
                k: 100,
                round_budget: 8, // one insert every ceil(8/4) = 2 calls
                scorer: Scorer::SeededHash { seed: 7 },
            },
        )
        .unwrap();
        sim.advance_round().unwrap();
        assert_eq!(sim.state().len(), 10); // nothing applied yet

        let mut ledger = BudgetLedger::new(8);
        let order = full_order(2);
        let mut sizes = Vec::new();
        for _ in 0..8 {
            sim.search(&order, &[], &mut ledger).unwrap();
            sizes.push(sim.state().len());
        }
        assert_eq!(sizes, vec![10, 11, 11, 12, 12, 13, 13, 14]);
    }

    #[test]
    fn constant_mode_flushes_leftovers_at_round_end() {
        let rows: Vec<Vec<u32>> = (0..10u32).map(|i| vec![i & 1, (i >> 1) & 1]).collect();
        let pool: Vec<Vec<u32>> = (0..8u32).map(|_| vec![1, 1]).collect();
        let schedule = UpdateSchedule {
            inserts_per_round: 4,
            delete_fraction: 0.0,
            mode: UpdateMode::Constant,
            seed: 3,
        };
        let schema = Arc::new(Schema::boolean(2).unwrap());
        let mut sim = Simulator::new(
            schema,
            rows,
            pool,
            schedule,
            SimConfig {
                k: 100,
                round_budget: 8,
                scorer: Scorer::SeededHash { seed: 7 },
            },
        )
        .unwrap();
        sim.advance_round().unwrap();
        // No searches issued this round; the next boundary must apply them all.
        sim.advance_round().unwrap();
        assert_eq!(sim.state().len(), 14);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        // For every query: overflow iff the true match count exceeds k, and
        // valid answers are exactly the full match set.
        #[test]
        fn status_matches_full_scan_oracle(
            rows in proptest::collection::vec(
                proptest::collection::vec(0u32..3, 3),
                0..40
            ),
            prefix in proptest::collection::vec(0u32..3, 0..3),
            k in 1usize..5,
        ) {
            let schema = Arc::new(Schema::new(
                (0..3)
                    .map(|i| crate::model::Attribute {
                        name: format!("c{i}"),
                        domain: vec!["0".into(), "1".into(), "2".into()],
                    })
                    .collect(),
            ).unwrap());
            let mut sim = Simulator::new(
                schema,
                rows.clone(),
                vec![],
                UpdateSchedule::none(1),
                SimConfig { k, round_budget: 10, scorer: Scorer::SeededHash { seed: 2 } },
            ).unwrap();
            let mut ledger = BudgetLedger::new(10);
            let out = sim.search(&[0, 1, 2], &prefix, &mut ledger).unwrap();
            let matches: Vec<&Vec<u32>> = rows
                .iter()
                .filter(|r| prefix.iter().enumerate().all(|(i, &v)| r[i] == v))
                .collect();
            match matches.len() {
                0 => proptest::prop_assert_eq!(out.status, QueryStatus::Underflow),
                c if c <= k => {
                    proptest::prop_assert_eq!(out.status, QueryStatus::Valid);
                    proptest::prop_assert_eq!(out.returned.len(), c);
                }
                _ => {
                    proptest::prop_assert_eq!(out.status, QueryStatus::Overflow);
                    proptest::prop_assert_eq!(out.returned.len(), k);
                }
            }
        }
    }

    #[test]
    fn deterministic_replica_trajectories() {
        let rows: Vec<Vec<u32>> = (0..200u32).map(|i| vec![i & 1, (i >> 1) & 1, (i >> 2) & 1]).collect();
        let pool: Vec<Vec<u32>> = (0..50u32).map(|i| vec![i & 1, 1, 0]).collect();
        let schedule = UpdateSchedule {
            inserts_per_round: 5,
            delete_fraction: 0.05,
            mode: UpdateMode::Round,
            seed: 11,
        };
        let schema = Arc::new(Schema::boolean(3).unwrap());
        let make = || {
            Simulator::new(
                schema.clone(),
                rows.clone(),
                pool.clone(),
                schedule.clone(),
                SimConfig {
                    k: 10,
                    round_budget: 100,
                    scorer: Scorer::SeededHash { seed: 7 },
                },
            )
            .unwrap()
        };
        let mut a = make();
        let mut b = make();
        for _ in 0..5 {
            a.advance_round().unwrap();
            b.advance_round().unwrap();
            let ids_a: Vec<u64> = a.state().tuples().iter().map(|t| t.id).collect();
            let ids_b: Vec<u64> = b.state().tuples().iter().map(|t| t.id).collect();
            assert_eq!(ids_a, ids_b);
        }
    }
}
