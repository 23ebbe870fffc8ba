//! Schema, tuples, aggregate specifications, and the exact ground-truth
//! oracle used to score estimators.
//!
//! Attribute values are categorical. A [`Schema`] fixes, per attribute, an
//! ordered domain of distinct string values; tuples store indexes into those
//! domains. Numeric attributes are expected to be pre-discretized by the
//! dataset loader before they reach this layer.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown value `{value}` for attribute `{attribute}`")]
    UnknownValue { attribute: String, value: String },
    #[error("attribute `{0}` appears more than once in a selection")]
    DuplicateSelectionAttribute(String),
    #[error("attribute `{0}` has non-numeric domain values and cannot be used as a measure")]
    NonNumericMeasure(String),
    #[error("AVG is undefined: no tuple matches the selection")]
    UndefinedAverage,
    #[error("{0} requires {1} prior round state(s)")]
    MissingPriorState(&'static str, usize),
}

/// One categorical attribute: a name and its ordered domain of values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub domain: Vec<String>,
}

/// An ordered list of categorical attributes plus the attribute-to-tree-level
/// permutation used by the query tree.
///
/// Immutable after construction; wrap in `Arc` and share freely.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    attributes: Vec<Attribute>,
    /// `level_order[i]` is the attribute index assigned to tree level `i`.
    level_order: Vec<usize>,
    /// Per attribute: the domain parsed as numbers, when every value parses.
    numeric_domains: Vec<Option<Vec<f64>>>,
}

impl Schema {
    /// Builds a schema with the default identity level order.
    pub fn new(attributes: Vec<Attribute>) -> Result<Self, ModelError> {
        let order = (0..attributes.len()).collect();
        Self::with_level_order(attributes, order)
    }

    /// Builds a schema mapping tree level `i` to attribute `level_order[i]`.
    pub fn with_level_order(
        attributes: Vec<Attribute>,
        level_order: Vec<usize>,
    ) -> Result<Self, ModelError> {
        if attributes.is_empty() {
            return Err(ModelError::InvalidSchema("no attributes".into()));
        }
        let mut names = std::collections::HashSet::new();
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(ModelError::InvalidSchema(format!(
                    "duplicate attribute name `{}`",
                    attr.name
                )));
            }
            if attr.domain.len() < 2 {
                return Err(ModelError::InvalidSchema(format!(
                    "attribute `{}` needs a domain of at least 2 values",
                    attr.name
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for v in &attr.domain {
                if !seen.insert(v.as_str()) {
                    return Err(ModelError::InvalidSchema(format!(
                        "attribute `{}` has duplicate domain value `{v}`",
                        attr.name
                    )));
                }
            }
        }
        if level_order.len() != attributes.len() {
            return Err(ModelError::InvalidSchema(
                "level order length does not match attribute count".into(),
            ));
        }
        let mut seen = vec![false; attributes.len()];
        for &a in &level_order {
            if a >= attributes.len() || seen[a] {
                return Err(ModelError::InvalidSchema(
                    "level order is not a permutation of the attributes".into(),
                ));
            }
            seen[a] = true;
        }
        let numeric_domains = attributes
            .iter()
            .map(|attr| {
                attr.domain
                    .iter()
                    .map(|v| v.trim().parse::<f64>().ok())
                    .collect::<Option<Vec<f64>>>()
            })
            .collect();
        Ok(Schema {
            attributes,
            level_order,
            numeric_domains,
        })
    }

    /// Convenience constructor: `m` Boolean attributes named `A1..Am` with
    /// domains `["0", "1"]`.
    pub fn boolean(m: usize) -> Result<Self, ModelError> {
        let attributes = (1..=m)
            .map(|i| Attribute {
                name: format!("A{i}"),
                domain: vec!["0".into(), "1".into()],
            })
            .collect();
        Self::new(attributes)
    }

    pub fn attribute_count(&self) -> usize {
        self.attributes.len()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn level_order(&self) -> &[usize] {
        &self.level_order
    }

    pub fn domain_size(&self, attr: usize) -> usize {
        self.attributes[attr].domain.len()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize, ModelError> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| ModelError::UnknownAttribute(name.to_string()))
    }

    pub fn value_index(&self, attr: usize, value: &str) -> Result<u32, ModelError> {
        self.attributes[attr]
            .domain
            .iter()
            .position(|v| v == value)
            .map(|i| i as u32)
            .ok_or_else(|| ModelError::UnknownValue {
                attribute: self.attributes[attr].name.clone(),
                value: value.to_string(),
            })
    }

    /// Numeric interpretation of a stored value index, if the attribute's
    /// whole domain parses as numbers.
    pub fn numeric_value(&self, attr: usize, value: u32) -> Option<f64> {
        self.numeric_domains[attr]
            .as_ref()
            .map(|d| d[value as usize])
    }

    /// Total number of leaves of the full query tree, as a float (the product
    /// overflows fixed-width integers for wide schemas).
    pub fn leaf_count(&self) -> f64 {
        self.attributes
            .iter()
            .map(|a| a.domain.len() as f64)
            .product()
    }
}

/// A database row: an opaque unique id plus one domain-value index per
/// attribute. No NULLs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple {
    pub id: u64,
    pub values: Arc<[u32]>,
}

impl Tuple {
    pub fn new(id: u64, values: Vec<u32>) -> Self {
        Tuple {
            id,
            values: values.into(),
        }
    }
}

/// The aggregate function of an [`AggregateSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Count,
    Sum,
    Avg,
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggFn::Count => write!(f, "count"),
            AggFn::Sum => write!(f, "sum"),
            AggFn::Avg => write!(f, "avg"),
        }
    }
}

/// The per-tuple measure `f(t)`: the constant 1 (COUNT), or the numeric
/// interpretation of one designated attribute's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    ConstantOne,
    Attribute(usize),
}

impl Measure {
    pub fn value(&self, schema: &Schema, t: &Tuple) -> f64 {
        match *self {
            Measure::ConstantOne => 1.0,
            Measure::Attribute(a) => schema
                .numeric_value(a, t.values[a])
                .expect("measure attribute validated as numeric at construction"),
        }
    }
}

/// Conjunctive equality selection `g(t)`: a set of `(attribute, value)`
/// constraints over distinct attributes, stored as resolved indexes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    constraints: Vec<(usize, u32)>,
}

impl Selection {
    pub fn empty() -> Self {
        Selection::default()
    }

    /// Resolves `(attribute name, value)` pairs against the schema.
    pub fn resolve(schema: &Schema, pairs: &[(&str, &str)]) -> Result<Self, ModelError> {
        let mut constraints = Vec::with_capacity(pairs.len());
        for (name, value) in pairs {
            let attr = schema.attribute_index(name)?;
            let value = schema.value_index(attr, value)?;
            constraints.push((attr, value));
        }
        Self::from_indexes(constraints)
    }

    pub fn from_indexes(mut constraints: Vec<(usize, u32)>) -> Result<Self, ModelError> {
        constraints.sort_unstable();
        for w in constraints.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateSelectionAttribute(format!(
                    "#{}",
                    w[0].0
                )));
            }
        }
        Ok(Selection { constraints })
    }

    pub fn constraints(&self) -> &[(usize, u32)] {
        &self.constraints
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn matches(&self, t: &Tuple) -> bool {
        self.constraints.iter().all(|&(a, v)| t.values[a] == v)
    }
}

/// What the tracked quantity is, relative to the round timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggKind {
    /// The aggregate over the current round's database state.
    SingleRound,
    /// Current-round value minus previous-round value.
    SizeDelta,
    /// Mean of the per-round values over the trailing window.
    RunningAverage(u32),
}

/// A fully resolved aggregate to track: `AGG(f(t)) WHERE g(t)`, evaluated
/// per round according to [`AggKind`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateSpec {
    pub name: String,
    pub agg: AggFn,
    pub measure: Measure,
    pub selection: Selection,
    pub kind: AggKind,
}

impl AggregateSpec {
    pub fn new(
        schema: &Schema,
        name: impl Into<String>,
        agg: AggFn,
        measure_attr: Option<&str>,
        selection: Selection,
        kind: AggKind,
    ) -> Result<Self, ModelError> {
        let measure = match (agg, measure_attr) {
            (AggFn::Count, _) => Measure::ConstantOne,
            (_, None) => Measure::ConstantOne,
            (_, Some(name)) => {
                let attr = schema.attribute_index(name)?;
                if schema.numeric_value(attr, 0).is_none() {
                    return Err(ModelError::NonNumericMeasure(name.to_string()));
                }
                Measure::Attribute(attr)
            }
        };
        if let AggKind::RunningAverage(w) = kind {
            if w == 0 {
                return Err(ModelError::InvalidSchema(
                    "running average window must be at least 1".into(),
                ));
            }
        }
        Ok(AggregateSpec {
            name: name.into(),
            agg,
            measure,
            selection,
            kind,
        })
    }

    /// COUNT(*) over the current round, no selection.
    pub fn count_all(name: impl Into<String>) -> Self {
        AggregateSpec {
            name: name.into(),
            agg: AggFn::Count,
            measure: Measure::ConstantOne,
            selection: Selection::empty(),
            kind: AggKind::SingleRound,
        }
    }
}

/// `g(t)`: 1 iff every equality constraint of the spec's selection holds.
pub fn eval_selection(spec: &AggregateSpec, t: &Tuple) -> u8 {
    spec.selection.matches(t) as u8
}

/// A database state visible to the oracle: the tuple set plus the round index.
///
/// Scores live in the simulator's ranking function; they are irrelevant to
/// exact aggregates.
#[derive(Debug, Clone)]
pub struct DatabaseState {
    tuples: Vec<Tuple>,
    round_index: u32,
}

impl DatabaseState {
    pub fn new(tuples: Vec<Tuple>, round_index: u32) -> Self {
        debug_assert!(round_index >= 1);
        let mut ids = tuples.iter().map(|t| t.id).collect::<Vec<_>>();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), tuples.len(), "tuple ids must be unique");
        DatabaseState {
            tuples,
            round_index,
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn round_index(&self) -> u32 {
        self.round_index
    }

    pub fn tuples(&self) -> &[Tuple] {
        &self.tuples
    }

    pub(crate) fn tuples_mut(&mut self) -> &mut Vec<Tuple> {
        &mut self.tuples
    }

    pub(crate) fn set_round_index(&mut self, round: u32) {
        self.round_index = round;
    }
}

/// Exact single-round value of `AGG(f(t)) WHERE g(t)` over one state, by
/// direct scan.
pub fn base_value(
    schema: &Schema,
    spec: &AggregateSpec,
    db: &DatabaseState,
) -> Result<f64, ModelError> {
    let mut sum = 0.0;
    let mut count = 0u64;
    for t in db.tuples() {
        if spec.selection.matches(t) {
            count += 1;
            sum += spec.measure.value(schema, t);
        }
    }
    match spec.agg {
        AggFn::Count => Ok(count as f64),
        AggFn::Sum => Ok(sum),
        AggFn::Avg => {
            if count == 0 {
                Err(ModelError::UndefinedAverage)
            } else {
                Ok(sum / count as f64)
            }
        }
    }
}

/// Exact ground truth for a spec at the current state.
///
/// `prior` holds earlier round states ordered oldest to newest; it may be
/// empty for single-round aggregates. A size delta needs the immediately
/// preceding state. A running average over window `w` uses the current state
/// plus up to `w - 1` of the most recent priors (fewer in the first rounds).
pub fn ground_truth(
    schema: &Schema,
    spec: &AggregateSpec,
    db: &DatabaseState,
    prior: &[DatabaseState],
) -> Result<f64, ModelError> {
    match spec.kind {
        AggKind::SingleRound => base_value(schema, spec, db),
        AggKind::SizeDelta => {
            let prev = prior
                .last()
                .ok_or(ModelError::MissingPriorState("size delta", 1))?;
            debug_assert_eq!(prev.round_index() + 1, db.round_index());
            Ok(base_value(schema, spec, db)? - base_value(schema, spec, prev)?)
        }
        AggKind::RunningAverage(w) => {
            let take = (w as usize - 1).min(prior.len());
            let mut total = base_value(schema, spec, db)?;
            for state in &prior[prior.len() - take..] {
                total += base_value(schema, spec, state)?;
            }
            Ok(total / (take + 1) as f64)
        }
    }
}

/// Exact per-round base values keyed by round, for harness bookkeeping.
pub type TruthSeries = BTreeMap<u32, f64>;
