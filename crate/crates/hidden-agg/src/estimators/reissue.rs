//! The reissuing estimator: one signature set for the whole run. Each round
//! it refreshes every previous drill-down from its last terminal — one query
//! when nothing changed, a short descent or climb otherwise — and spends the
//! leftover budget on new drill-downs from the same signature stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sim::{BudgetLedger, Simulator};
use crate::tree::TreeContext;

use super::{
    new_record, refresh_record, AggregateEstimate, AggregateSet, DrillDownRecord, Estimator,
    EstimatorError, RecordSetSnapshot, RoundAccumulator, RoundEstimate, ValueAssembler,
};

pub struct ReissueEstimator {
    tree: TreeContext,
    aggs: AggregateSet,
    rng: ChaCha8Rng,
    assembler: ValueAssembler,
    records: Vec<DrillDownRecord>,
    max_new_drill_downs: Option<usize>,
}

impl ReissueEstimator {
    pub fn new(tree: TreeContext, aggs: AggregateSet, seed: u64) -> Self {
        let assembler = ValueAssembler::new(&aggs);
        ReissueEstimator {
            tree,
            aggs,
            rng: ChaCha8Rng::seed_from_u64(seed),
            assembler,
            records: Vec::new(),
            max_new_drill_downs: None,
        }
    }

    /// Caps the number of new drill-downs initiated per round (updates are
    /// never capped); experiment control.
    pub fn with_max_new_drill_downs(mut self, cap: Option<usize>) -> Self {
        self.max_new_drill_downs = cap;
        self
    }

    pub fn records(&self) -> &[DrillDownRecord] {
        &self.records
    }
}

impl Estimator for ReissueEstimator {
    fn name(&self) -> &'static str {
        "reissue"
    }

    fn run_round(
        &mut self,
        sim: &mut Simulator,
        ledger: &mut BudgetLedger,
    ) -> Result<RoundEstimate, EstimatorError> {
        let round = sim.round_index();
        let mut accum = RoundAccumulator::new(self.aggs.components().len());

        // Update phase: refresh records in creation order. A record caught
        // by budget exhaustion keeps its previous state and is excluded from
        // this round's mean, as are any records never reached.
        for record in &mut self.records {
            if ledger.remaining() == 0 {
                break;
            }
            if record.last_updated_round >= round {
                continue;
            }
            let x = record.last_updated_round;
            let old = record.latest().contributions.clone();
            match refresh_record(sim, ledger, &self.tree, &self.aggs, record, round) {
                Ok(_) => {
                    accum.add_updated(
                        &record.latest().contributions,
                        &old,
                        x,
                        round,
                        self.assembler.prev_base(),
                    );
                }
                Err(e) if e.is_budget_exhausted() => break,
                Err(e) => return Err(e),
            }
        }

        // Initiation phase: new drill-downs from the signature stream.
        let mut started = 0usize;
        while ledger.remaining() > 0
            && self
                .max_new_drill_downs
                .is_none_or(|cap| started < cap)
        {
            let sig = self.tree.sample_signature(&mut self.rng);
            match new_record(sim, ledger, &self.tree, &self.aggs, sig, round) {
                Ok((record, _)) => {
                    accum.add_new(
                        &record.latest().contributions,
                        round,
                        self.assembler.prev_base(),
                    );
                    self.records.push(record);
                    started += 1;
                }
                Err(e) if e.is_budget_exhausted() => break,
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
