//! The restarting baseline: every round starts from scratch with fresh
//! root-started drill-downs and averages their single estimates. Nothing is
//! reused, so accuracy does not improve across rounds on a stable database.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sim::{BudgetLedger, Simulator};
use crate::tree::TreeContext;

use super::{
    new_record, AggregateEstimate, AggregateSet, DrillDownRecord, Estimator, EstimatorError,
    RecordSetSnapshot, RoundAccumulator, RoundEstimate, ValueAssembler,
};

pub struct RestartEstimator {
    tree: TreeContext,
    aggs: AggregateSet,
    rng: ChaCha8Rng,
    assembler: ValueAssembler,
    records: Vec<DrillDownRecord>,
    max_drill_downs: Option<usize>,
}

impl RestartEstimator {
    pub fn new(tree: TreeContext, aggs: AggregateSet, seed: u64) -> Self {
        let assembler = ValueAssembler::new(&aggs);
        RestartEstimator {
            tree,
            aggs,
            rng: ChaCha8Rng::seed_from_u64(seed),
            assembler,
            records: Vec::new(),
            max_drill_downs: None,
        }
    }

    /// Caps the number of drill-downs per round; experiment control for
    /// studies that fix the drill-down count rather than the query budget.
    pub fn with_max_drill_downs(mut self, cap: Option<usize>) -> Self {
        self.max_drill_downs = cap;
        self
    }

    pub fn records(&self) -> &[DrillDownRecord] {
        &self.records
    }
}

impl Estimator for RestartEstimator {
    fn name(&self) -> &'static str {
        "restart"
    }

    fn run_round(
        &mut self,
        sim: &mut Simulator,
        ledger: &mut BudgetLedger,
    ) -> Result<RoundEstimate, EstimatorError> {
        let round = sim.round_index();
        let mut accum = RoundAccumulator::new(self.aggs.components().len());
        loop {
            if self
                .max_drill_downs
                .is_some_and(|cap| accum.completed >= cap)
                || ledger.remaining() == 0
            {
                break;
            }
            let sig = self.tree.sample_signature(&mut self.rng);
            match new_record(sim, ledger, &self.tree, &self.aggs, sig, round) {
                Ok((record, _)) => {
                    accum.add_new(
                        &record.latest().contributions,
                        round,
                        self.assembler.prev_base(),
                    );
                    self.records.push(record);
                }
                Err(e) if e.is_budget_exhausted() => break, // partial drill-down discarded
                Err(e) => return Err(e),
            }
        }
        let base = accum.base_means();
        let delta = accum.delta_means();
        let values = self.assembler.finish_round(&self.aggs, round, &base, &delta);
        if accum.completed == 0 {
            return Err(EstimatorError::NoEstimate(round));
        }
        let aggregates = self
            .aggs
            .specs()
            .iter()
            .zip(values)
            .map(|(spec, value)| AggregateEstimate {
                name: spec.name.clone(),
                value,
                variance: None,
                class_weights: Vec::new(),
            })
            .collect();
        Ok(RoundEstimate {
            round,
            queries_used: ledger.used(),
            drill_downs: accum.completed,
            aggregates,
        })
    }

    fn snapshot(&self) -> RecordSetSnapshot {
        RecordSetSnapshot {
            estimator: self.name().into(),
            records: self.records.clone(),
        }
    }
}
