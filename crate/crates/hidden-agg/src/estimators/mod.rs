//! The three tracking estimators and their shared machinery: drill-down
//! records, per-drill-down estimates, update-estimate functions, and the
//! round-estimate assembly common to all of them.
//!
//! Every estimator owns a set of [`DrillDownRecord`]s. A record is one
//! signature's lifetime: the drill-down performed when it was created plus
//! one history entry per round in which it was refreshed. All estimates are
//! built from the entries' per-component contributions `Q(q) / p(q)`.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AggFn, AggKind, AggregateSpec, Measure, Schema, Selection, Tuple};
use crate::sim::{BudgetLedger, QueryOutcome, QueryStatus, SimError, Simulator};
use crate::tree::{drill_down, DrillResult, SearchQuery, Signature, TreeContext, TreeError};

pub mod math;
pub mod reissue;
pub mod restart;
pub mod rs;

pub use reissue::ReissueEstimator;
pub use restart::RestartEstimator;
pub use rs::RsEstimator;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("no drill-down completed in round {0}")]
    NoEstimate(u32),
    #[error("sample variance needs at least two values")]
    UndefinedVariance,
    #[error("single estimates require a non-overflowing terminal")]
    OverflowTerminal,
    #[error("missing estimator state: {0}")]
    MissingState(&'static str),
    #[error("zero-variance classes disagree on the estimate")]
    InconsistentExact,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl EstimatorError {
    /// Budget exhaustion is normal control flow for a round; everything else
    /// is a real failure.
    pub fn is_budget_exhausted(&self) -> bool {
        matches!(
            self,
            EstimatorError::Tree(TreeError::Sim(SimError::BudgetExceeded(_)))
        )
    }
}

/// One summand of an aggregate: a measure plus a selection. COUNT and SUM
/// map to one component; AVG is tracked as a SUM and a COUNT component and
/// reported as their ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Component {
    pub measure: Measure,
    pub selection: Selection,
}

impl Component {
    /// `g(t) * f(t)` for one returned tuple.
    fn tuple_value(&self, schema: &Schema, t: &Tuple) -> f64 {
        if self.selection.matches(t) {
            self.measure.value(schema, t)
        } else {
            0.0
        }
    }

    /// Contribution of a terminal answer: `sum(g(t) f(t)) / p(q)`, zero for
    /// an underflowing terminal.
    pub fn contribution(&self, schema: &Schema, returned: &[Tuple], inverse_p: f64) -> f64 {
        let mut total = 0.0;
        for t in returned {
            total += self.tuple_value(schema, t);
        }
        total * inverse_p
    }
}

/// How a spec's reported value is built from component estimates.
#[derive(Debug, Clone, Copy)]
pub(crate) enum ValueRef {
    Single(usize),
    Ratio { sum: usize, count: usize },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Binding {
    pub kind: AggKind,
    pub value: ValueRef,
}

/// The resolved set of aggregates an estimator instance tracks, flattened
/// into components shared across all of its drill-downs.
#[derive(Debug, Clone)]
pub struct AggregateSet {
    schema: Arc<Schema>,
    specs: Vec<AggregateSpec>,
    components: Vec<Component>,
    pub(crate) bindings: Vec<Binding>,
}

impl AggregateSet {
    pub fn new(schema: Arc<Schema>, specs: Vec<AggregateSpec>) -> Result<Self, EstimatorError> {
        if specs.is_empty() {
            return Err(EstimatorError::InvalidParameter(
                "at least one aggregate to track".into(),
            ));
        }
        let mut components = Vec::new();
        let mut bindings = Vec::new();
        for spec in &specs {
            if spec.agg == AggFn::Avg && spec.kind == AggKind::SizeDelta {
                return Err(EstimatorError::InvalidParameter(format!(
                    "aggregate `{}`: size deltas of AVG are not supported",
                    spec.name
                )));
            }
            let value = match spec.agg {
                AggFn::Count | AggFn::Sum => {
                    components.push(Component {
                        measure: spec.measure,
                        selection: spec.selection.clone(),
                    });
                    ValueRef::Single(components.len() - 1)
                }
                AggFn::Avg => {
                    components.push(Component {
                        measure: spec.measure,
                        selection: spec.selection.clone(),
                    });
                    components.push(Component {
                        measure: Measure::ConstantOne,
                        selection: spec.selection.clone(),
                    });
                    ValueRef::Ratio {
                        sum: components.len() - 2,
                        count: components.len() - 1,
                    }
                }
            };
            bindings.push(Binding {
                kind: spec.kind,
                value,
            });
        }
        Ok(AggregateSet {
            schema,
            specs,
            components,
            bindings,
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn specs(&self) -> &[AggregateSpec] {
        &self.specs
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub(crate) fn contributions(&self, returned: &[Tuple], inverse_p: f64) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.contribution(&self.schema, returned, inverse_p))
            .collect()
    }

    /// The component and update-estimate form the adaptive estimator
    /// optimizes its budget split for: the first tracked aggregate (its SUM
    /// part for AVG; single-round form for running averages).
    pub(crate) fn allocation_target(&self) -> (usize, FqKind) {
        let binding = &self.bindings[0];
        let comp = match binding.value {
            ValueRef::Single(i) => i,
            ValueRef::Ratio { sum, .. } => sum,
        };
        let kind = match binding.kind {
            AggKind::SizeDelta => FqKind::SizeDelta,
            _ => FqKind::SingleRound,
        };
        (comp, kind)
    }
}

/// One refresh of a drill-down: the round, the terminal (always the top
/// non-overflowing query on the signature's path at that round), its answer,
/// and the per-component contributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    pub terminal: SearchQuery,
    pub status: QueryStatus,
    pub returned: Vec<Tuple>,
    pub inverse_p: f64,
    pub contributions: Vec<f64>,
}

/// A signature's lifetime across rounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrillDownRecord {
    pub signature: Signature,
    pub history: Vec<HistoryEntry>,
    pub last_updated_round: u32,
    pub cost_last_update: u32,
}

impl DrillDownRecord {
    pub fn latest(&self) -> &HistoryEntry {
        self.history.last().expect("records always hold one entry")
    }

    /// Performs a fresh root-started drill-down for `sig` and wraps it in a
    /// new record. The record only exists if the drill-down completes; a
    /// budget failure mid-descent leaves no trace beyond the spent queries.
    pub fn start(
        sim: &mut Simulator,
        ledger: &mut BudgetLedger,
        tree: &TreeContext,
        aggs: &AggregateSet,
        sig: Signature,
        round: u32,
    ) -> Result<(Self, u32), EstimatorError> {
        new_record(sim, ledger, tree, aggs, sig, round)
    }

    /// Refreshes the terminal at the current round: reissue it, then drill
    /// down if it now overflows or roll up if it underflows. On budget
    /// exhaustion mid-update the record keeps its previous state.
    pub fn refresh(
        &mut self,
        sim: &mut Simulator,
        ledger: &mut BudgetLedger,
        tree: &TreeContext,
        aggs: &AggregateSet,
        round: u32,
    ) -> Result<u32, EstimatorError> {
        refresh_record(sim, ledger, tree, aggs, self, round)
    }
}

/// `Q(q) / p(q)` for one COUNT or SUM aggregate at a non-overflowing
/// terminal; an underflowing terminal contributes zero.
pub fn single_estimate(
    tree: &TreeContext,
    spec: &AggregateSpec,
    terminal: &SearchQuery,
    outcome: &QueryOutcome,
) -> Result<f64, EstimatorError> {
    if outcome.status == QueryStatus::Overflow {
        return Err(EstimatorError::OverflowTerminal);
    }
    let comp = Component {
        measure: spec.measure,
        selection: spec.selection.clone(),
    };
    Ok(comp.contribution(tree.schema(), &outcome.returned, tree.inverse_p(terminal)))
}

/// Which update-estimate form applies to a tracked quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FqKind {
    SingleRound,
    SizeDelta,
}

/// Inputs for [`f_q_update`]: one drill-down last updated at round `x`,
/// refreshed at round `j` (`x == j` marks a brand-new drill-down).
#[derive(Debug, Clone, Copy)]
pub struct FqInputs {
    pub x: u32,
    pub j: u32,
    /// Contribution of the refreshed terminal at round `j`.
    pub new_contribution: f64,
    /// Contribution recorded at round `x` (absent for a new drill-down).
    pub contribution_at_x: Option<f64>,
    /// The combined estimate produced at round `x` for this aggregate.
    pub estimate_at_x: Option<f64>,
    /// The combined estimate produced at round `j - 1` (size-delta baseline).
    pub prev_round_estimate: Option<f64>,
}

/// The estimate one updated (or new) drill-down yields for an aggregate.
///
/// Single-round SUM/COUNT: the round-`x` estimate plus the contribution
/// delta. Size delta with `x = j - 1`: the plain contribution delta. Size
/// delta with a staler class, or a brand-new drill-down: the fresh
/// contribution minus the previous round's estimate — updating old and
/// initiating new drill-downs coincide there.
pub fn f_q_update(kind: FqKind, inputs: &FqInputs) -> Result<f64, EstimatorError> {
    let FqInputs {
        x,
        j,
        new_contribution,
        contribution_at_x,
        estimate_at_x,
        prev_round_estimate,
    } = *inputs;
    debug_assert!(x <= j);
    match kind {
        FqKind::SingleRound => {
            if x == j {
                return Ok(new_contribution);
            }
            let old = contribution_at_x
                .ok_or(EstimatorError::MissingState("contribution at round x"))?;
            let q_x = estimate_at_x.ok_or(EstimatorError::MissingState("estimate at round x"))?;
            Ok(q_x + new_contribution - old)
        }
        FqKind::SizeDelta => {
            if x + 1 == j {
                let old = contribution_at_x
                    .ok_or(EstimatorError::MissingState("contribution at round x"))?;
                Ok(new_contribution - old)
            } else {
                let prev = prev_round_estimate
                    .ok_or(EstimatorError::MissingState("previous round estimate"))?;
                Ok(new_contribution - prev)
            }
        }
    }
}

fn commit_entry(
    aggs: &AggregateSet,
    tree: &TreeContext,
    record: &mut DrillDownRecord,
    round: u32,
    result: DrillResult,
) {
    let inverse_p = tree.inverse_p(&result.terminal);
    let contributions = aggs.contributions(&result.outcome.returned, inverse_p);
    record.history.push(HistoryEntry {
        round,
        terminal: result.terminal,
        status: result.outcome.status,
        returned: result.outcome.returned,
        inverse_p,
        contributions,
    });
    record.last_updated_round = round;
    record.cost_last_update = result.cost;
}

/// Performs a fresh root-started drill-down for `sig` and wraps it in a new
/// record. The record is only created if the drill-down completes; a budget
/// failure mid-descent leaves no trace beyond the spent queries.
pub(crate) fn new_record(
    sim: &mut Simulator,
    ledger: &mut BudgetLedger,
    tree: &TreeContext,
    aggs: &AggregateSet,
    sig: Signature,
    round: u32,
) -> Result<(DrillDownRecord, u32), EstimatorError> {
    let result = drill_down(sim, ledger, tree, tree.root(), &sig)?;
    let cost = result.cost;
    let mut record = DrillDownRecord {
        signature: sig,
        history: Vec::with_capacity(1),
        last_updated_round: round,
        cost_last_update: cost,
    };
    commit_entry(aggs, tree, &mut record, round, result);
    Ok((record, cost))
}

/// Refreshes a record's terminal at the current round: reissue it, then
/// drill down if it now overflows or roll up if it underflows.
///
/// On budget exhaustion mid-update the record keeps its previous state and
/// the error propagates; the caller excludes it from this round's estimate.
pub(crate) fn refresh_record(
    sim: &mut Simulator,
    ledger: &mut BudgetLedger,
    tree: &TreeContext,
    aggs: &AggregateSet,
    record: &mut DrillDownRecord,
    round: u32,
) -> Result<u32, EstimatorError> {
    let terminal = record.latest().terminal.clone();
    let outcome = tree.issue(sim, &terminal, ledger).map_err(TreeError::from)?;
    let result = match outcome.status {
        QueryStatus::Valid => DrillResult {
            terminal,
            outcome,
            cost: 1,
        },
        QueryStatus::Overflow => {
            if terminal.depth() == tree.max_depth() {
                return Err(TreeError::LeafOverflow.into());
            }
            let start = tree.child(&terminal, record.signature.values[terminal.depth()]);
            let mut r = drill_down(sim, ledger, tree, start, &record.signature)?;
            r.cost += 1;
            r
        }
        QueryStatus::Underflow => {
            let mut r = crate::tree::roll_up(sim, ledger, tree, terminal)?;
            r.cost += 1;
            r
        }
    };
    let cost = result.cost;
    commit_entry(aggs, tree, record, round, result);
    Ok(cost)
}

/// Round-level estimate of every tracked aggregate.
#[derive(Debug, Clone)]
pub struct RoundEstimate {
    pub round: u32,
    pub queries_used: u32,
    /// Drill-downs completed this round (updates plus new ones).
    pub drill_downs: usize,
    /// Aligned with the tracked spec list.
    pub aggregates: Vec<AggregateEstimate>,
}

#[derive(Debug, Clone)]
pub struct AggregateEstimate {
    pub name: String,
    pub value: Option<f64>,
    /// The estimator's own variance estimate, when it maintains one.
    pub variance: Option<f64>,
    /// Per history-class combination weights, when applicable: `(round, w)`.
    pub class_weights: Vec<(u32, f64)>,
}

/// Accumulates per-record values during a round for the mean-based
/// estimators.
#[derive(Debug, Clone)]
pub(crate) struct RoundAccumulator {
    pub base_sums: Vec<f64>,
    pub completed: usize,
    pub delta_sums: Vec<f64>,
    pub delta_counts: Vec<usize>,
}

impl RoundAccumulator {
    pub fn new(n_components: usize) -> Self {
        RoundAccumulator {
            base_sums: vec![0.0; n_components],
            completed: 0,
            delta_sums: vec![0.0; n_components],
            delta_counts: vec![0; n_components],
        }
    }

    /// A brand-new drill-down completed at round `j`.
    pub fn add_new(&mut self, contribs: &[f64], j: u32, prev_base: &[Option<f64>]) {
        self.completed += 1;
        for (i, &c) in contribs.iter().enumerate() {
            self.base_sums[i] += c;
            let inputs = FqInputs {
                x: j,
                j,
                new_contribution: c,
                contribution_at_x: None,
                estimate_at_x: None,
                prev_round_estimate: prev_base[i],
            };
            if let Ok(f) = f_q_update(FqKind::SizeDelta, &inputs) {
                self.delta_sums[i] += f;
                self.delta_counts[i] += 1;
            }
        }
    }

    /// A record previously of round `x`, refreshed at round `j`.
    pub fn add_updated(
        &mut self,
        new_contribs: &[f64],
        old_contribs: &[f64],
        x: u32,
        j: u32,
        prev_base: &[Option<f64>],
    ) {
        self.completed += 1;
        for (i, &c) in new_contribs.iter().enumerate() {
            self.base_sums[i] += c;
            let inputs = FqInputs {
                x,
                j,
                new_contribution: c,
                contribution_at_x: Some(old_contribs[i]),
                estimate_at_x: None,
                prev_round_estimate: prev_base[i],
            };
            if let Ok(f) = f_q_update(FqKind::SizeDelta, &inputs) {
                self.delta_sums[i] += f;
                self.delta_counts[i] += 1;
            }
        }
    }

    pub fn base_means(&self) -> Vec<Option<f64>> {
        self.base_sums
            .iter()
            .map(|&s| {
                if self.completed > 0 {
                    Some(s / self.completed as f64)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn delta_means(&self) -> Vec<Option<f64>> {
        self.delta_sums
            .iter()
            .zip(&self.delta_counts)
            .map(|(&s, &n)| if n > 0 { Some(s / n as f64) } else { None })
            .collect()
    }
}

/// Turns per-component base/delta estimates into per-spec reported values,
/// maintaining the previous-round baseline and running-average windows.
#[derive(Debug, Clone)]
pub(crate) struct ValueAssembler {
    prev_base: Vec<Option<f64>>,
    windows: Vec<VecDeque<(u32, f64)>>,
}

impl ValueAssembler {
    pub fn new(aggs: &AggregateSet) -> Self {
        ValueAssembler {
            prev_base: vec![None; aggs.components().len()],
            windows: vec![VecDeque::new(); aggs.specs().len()],
        }
    }

    pub fn prev_base(&self) -> &[Option<f64>] {
        &self.prev_base
    }

    fn resolve(vref: ValueRef, base: &[Option<f64>]) -> Option<f64> {
        match vref {
            ValueRef::Single(i) => base[i],
            ValueRef::Ratio { sum, count } => match (base[sum], base[count]) {
                (Some(s), Some(c)) if c != 0.0 => Some(s / c),
                _ => None,
            },
        }
    }

    /// Closes the round: produces per-spec values and advances baselines.
    pub fn finish_round(
        &mut self,
        aggs: &AggregateSet,
        round: u32,
        base: &[Option<f64>],
        delta: &[Option<f64>],
    ) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(aggs.bindings.len());
        for (idx, binding) in aggs.bindings.iter().enumerate() {
            let value = match binding.kind {
                AggKind::SingleRound => Self::resolve(binding.value, base),
                AggKind::SizeDelta => match binding.value {
                    ValueRef::Single(i) => delta[i],
                    ValueRef::Ratio { .. } => None, // rejected at construction
                },
                AggKind::RunningAverage(w) => {
                    if let Some(v) = Self::resolve(binding.value, base) {
                        self.windows[idx].push_back((round, v));
                    }
                    while self.windows[idx]
                        .front()
                        .is_some_and(|&(r, _)| r + w <= round)
                    {
                        self.windows[idx].pop_front();
                    }
                    let win = &self.windows[idx];
                    if win.is_empty() {
                        None
                    } else {
                        Some(win.iter().map(|&(_, v)| v).sum::<f64>() / win.len() as f64)
                    }
                }
            };
            out.push(value);
        }
        self.prev_base = base.to_vec();
        out
    }
}

/// A tracking estimator driven one round at a time against a simulator.
pub trait Estimator {
    fn name(&self) -> &'static str;

    /// Runs the estimator's procedure for the simulator's current round
    /// within the given budget, producing estimates for every tracked
    /// aggregate.
    fn run_round(
        &mut self,
        sim: &mut Simulator,
        ledger: &mut BudgetLedger,
    ) -> Result<RoundEstimate, EstimatorError>;

    /// Serializable record set: per drill-down and round, the terminal query
    /// and its returned tuples. Sufficient to replay aggregate estimation
    /// for queries posed after the fact.
    fn snapshot(&self) -> RecordSetSnapshot;
}

/// Serializable estimator state for ad hoc query replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordSetSnapshot {
    pub estimator: String,
    pub records: Vec<DrillDownRecord>,
}

/// Replays a single-round aggregate over a snapshot as if it had been posed
/// before the drill-downs ran: the mean of `Q(q)/p(q)` over the records
/// refreshed in `round`, computed from their stored answers.
pub fn ad_hoc_estimate(
    schema: &Schema,
    snapshot: &RecordSetSnapshot,
    spec: &AggregateSpec,
    round: u32,
) -> Option<f64> {
    let sum_comp = Component {
        measure: spec.measure,
        selection: spec.selection.clone(),
    };
    let count_comp = Component {
        measure: Measure::ConstantOne,
        selection: spec.selection.clone(),
    };
    let mut sum = 0.0;
    let mut count = 0.0;
    let mut n = 0usize;
    for record in &snapshot.records {
        if let Some(entry) = record.history.iter().find(|e| e.round == round) {
            sum += sum_comp.contribution(schema, &entry.returned, entry.inverse_p);
            count += count_comp.contribution(schema, &entry.returned, entry.inverse_p);
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    match spec.agg {
        AggFn::Count => Some(count / n as f64),
        AggFn::Sum => Some(sum / n as f64),
        AggFn::Avg => {
            if count == 0.0 {
                None
            } else {
                Some(sum / count)
            }
        }
    }
}
