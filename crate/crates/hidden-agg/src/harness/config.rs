//! Experiment configuration: JSON-loadable, flag-overridable, and fully
//! deterministic given its master seed.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AggFn, AggKind, AggregateSpec, Schema, Selection};
use crate::sim::{derive_seed, Scorer, UpdateMode};

use super::HarnessError;

/// Where the schema and initial tuples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaSource {
    /// Synthetic Boolean data: `n0` distinct uniform tuples over `m`
    /// attributes, plus a disjoint reserve pool for insertions (defaults to
    /// `inserts_per_round * rounds`).
    Boolean {
        n0: usize,
        m: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pool: Option<usize>,
    },
    /// A categorical CSV: first row attribute names, one tuple per row.
    /// `initial` selects the starting subset; the rest forms the reserve.
    Csv { path: PathBuf, initial: InitialSize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSize {
    Count(usize),
    Fraction(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub inserts_per_round: u32,
    #[serde(default)]
    pub delete_fraction: f64,
    #[serde(default = "default_mode")]
    pub mode: UpdateMode,
}

fn default_mode() -> UpdateMode {
    UpdateMode::Round
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            inserts_per_round: 0,
            delete_fraction: 0.0,
            mode: UpdateMode::Round,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Restart,
    Reissue,
    Rs,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Restart => "restart",
            EstimatorKind::Reissue => "reissue",
            EstimatorKind::Rs => "rs",
        }
    }
}

/// One aggregate to track, by attribute/value names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateConfig {
    pub name: String,
    pub agg: AggFn,
    /// Measure attribute for SUM/AVG; COUNT ignores it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<String>,
    /// Conjunctive equality selection: attribute name -> value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub selection: BTreeMap<String, String>,
    #[serde(default = "default_kind")]
    pub kind: AggKind,
}

fn default_kind() -> AggKind {
    AggKind::SingleRound
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    SeededHash,
    ValueOrdered,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: SchemaSource,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Query budget per round (G).
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_aggregates")]
    pub aggregates: Vec<AggregateConfig>,
    /// Pilot drill-downs per history class for the adaptive estimator.
    #[serde(default = "default_varpi")]
    pub varpi: u32,
    #[serde(default = "default_scorer")]
    pub scorer: ScorerKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_k() -> usize {
    10
}
fn default_budget() -> u32 {
    100
}
fn default_rounds() -> u32 {
    50
}
fn default_trials() -> u32 {
    1
}
fn default_varpi() -> u32 {
    10
}
fn default_seed() -> u64 {
    42
}
fn default_scorer() -> ScorerKind {
    ScorerKind::SeededHash
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Restart,
        EstimatorKind::Reissue,
        EstimatorKind::Rs,
    ]
}
fn default_aggregates() -> Vec<AggregateConfig> {
    vec![AggregateConfig {
        name: "count_all".into(),
        agg: AggFn::Count,
        measure: None,
        selection: BTreeMap::new(),
        kind: AggKind::SingleRound,
    }]
}

/// Purpose tags for deterministic per-trial seed derivation.
#[derive(Debug, Clone, Copy)]
pub enum SeedRole {
    Dataset,
    Schedule,
    Scorer,
    Estimator(usize),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(HarnessError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.rounds < 1 {
            return Err(HarnessError::InvalidConfig("rounds must be >= 1".into()));
        }
        if self.k < 1 {
            return Err(HarnessError::InvalidConfig("k must be >= 1".into()));
        }
        if self.budget < 1 {
            return Err(HarnessError::InvalidConfig("budget must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::InvalidConfig(
                "at least one estimator".into(),
            ));
        }
        if self.aggregates.is_empty() {
            return Err(HarnessError::InvalidConfig(
                "at least one aggregate".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.schedule.delete_fraction) {
            return Err(HarnessError::InvalidConfig(
                "delete_fraction must lie in [0, 1]".into(),
            ));
        }
        match &self.schema {
            SchemaSource::Boolean { n0: _, m, .. } => {
                if *m < 1 {
                    return Err(HarnessError::InvalidConfig("m must be >= 1".into()));
                }
            }
            SchemaSource::Csv { initial, .. } => {
                if let InitialSize::Fraction(f) = initial {
                    if !(0.0..=1.0).contains(f) {
                        return Err(HarnessError::InvalidConfig(
                            "initial fraction must lie in [0, 1]".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reserve pool size for the Boolean source.
    pub fn boolean_pool_size(&self) -> usize {
        match &self.schema {
            SchemaSource::Boolean { pool: Some(p), .. } => *p,
            _ => (self.schedule.inserts_per_round as usize) * (self.rounds as usize),
        }
    }

    /// Resolves the aggregate configs against a concrete schema.
    pub fn resolve_aggregates(
        &self,
        schema: &Arc<Schema>,
    ) -> Result<Vec<AggregateSpec>, HarnessError> {
        let mut specs = Vec::with_capacity(self.aggregates.len());
        for agg in &self.aggregates {
            let pairs: Vec<(&str, &str)> = agg
                .selection
                .iter()
                .map(|(k, v)| (k.as_str(), v.as_str()))
                .collect();
            let selection = Selection::resolve(schema, &pairs)?;
            let spec = AggregateSpec::new(
                schema,
                agg.name.clone(),
                agg.agg,
                agg.measure.as_deref(),
                selection,
                agg.kind,
            )?;
            specs.push(spec);
        }
        Ok(specs)
    }

    pub fn scorer(&self, trial: u32) -> Scorer {
        match self.scorer {
            ScorerKind::SeededHash => Scorer::SeededHash {
                seed: self.trial_seed(trial, SeedRole::Scorer),
            },
            ScorerKind::ValueOrdered => Scorer::ValueOrdered,
        }
    }

    /// Deterministic sub-seed for one purpose within one trial.
    pub fn trial_seed(&self, trial: u32, role: SeedRole) -> u64 {
        let salt = match role {
            SeedRole::Dataset => 1,
            SeedRole::Schedule => 2,
            SeedRole::Scorer => 3,
            SeedRole::Estimator(i) => 4 + i as u64,
        };
        derive_seed(self.seed, (trial as u64) << 16 | salt)
    }
}
