//! The query-tree abstraction: prefix conjunctive queries, signatures,
//! selection probabilities `p(q)`, and the drill-down / roll-up procedures.
//!
//! A tree context is either the full tree (root is `SELECT *`) or the subtree
//! pinned by a conjunctive selection condition. Level `i` of the tree refines
//! the query by one attribute per the schema's level order; leaves are fully
//! specified queries. A drill-down walks a root-to-leaf path chosen by a
//! uniformly random signature and stops at the first non-overflowing query.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Schema, Selection};
use crate::sim::{BudgetLedger, QueryOutcome, QueryStatus, SimError, Simulator};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("leaf query overflows: more than k tuples share one full assignment")]
    LeafOverflow,
}

/// A node of the active query tree: the prefix of level values fixed so far.
/// `prefix.len()` is the node's depth; an empty prefix is the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub prefix: Vec<u32>,
}

impl SearchQuery {
    pub fn depth(&self) -> usize {
        self.prefix.len()
    }
}

/// A complete leaf choice: one domain value per free level, drawn uniformly
/// and independently per level. Identifies one drill-down for its lifetime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub values: Vec<u32>,
}

/// The active query tree: pinned condition plus the remaining free levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeContext {
    schema: Arc<Schema>,
    /// Pinned predicates of the subtree root; empty for the full tree.
    fixed: Selection,
    /// Attribute index per free level, in level order.
    levels: Vec<usize>,
    /// Sort order handed to the simulator: pinned attributes, then levels.
    ordering: Vec<usize>,
    /// Values for the pinned prefix of `ordering`.
    fixed_values: Vec<u32>,
}

impl TreeContext {
    /// The full tree over every attribute.
    pub fn full(schema: Arc<Schema>) -> Self {
        Self::for_condition(schema, Selection::empty())
    }

    /// The subtree whose root pins `condition`; its levels are the remaining
    /// attributes in schema level order. Signatures and `p(q)` operate within
    /// this subtree. Contradictory conditions are unrepresentable: building
    /// the [`Selection`] already rejects a repeated attribute.
    pub fn for_condition(schema: Arc<Schema>, condition: Selection) -> Self {
        let pinned: Vec<usize> = condition.constraints().iter().map(|&(a, _)| a).collect();
        let levels: Vec<usize> = schema
            .level_order()
            .iter()
            .copied()
            .filter(|a| !pinned.contains(a))
            .collect();
        let mut ordering = pinned.clone();
        ordering.extend(&levels);
        let fixed_values = condition.constraints().iter().map(|&(_, v)| v).collect();
        TreeContext {
            schema,
            fixed: condition,
            levels,
            ordering,
            fixed_values,
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn condition(&self) -> &Selection {
        &self.fixed
    }

    /// Number of free levels below the (sub)tree root.
    pub fn max_depth(&self) -> usize {
        self.levels.len()
    }

    /// Attribute index assigned to a free level.
    pub fn level_attribute(&self, level: usize) -> usize {
        self.levels[level]
    }

    /// Number of leaves of this (sub)tree, as a float.
    pub fn leaf_count(&self) -> f64 {
        self.levels
            .iter()
            .map(|&a| self.schema.domain_size(a) as f64)
            .product()
    }

    pub fn root(&self) -> SearchQuery {
        SearchQuery { prefix: Vec::new() }
    }

    pub fn child(&self, q: &SearchQuery, value: u32) -> SearchQuery {
        debug_assert!(q.depth() < self.max_depth());
        debug_assert!((value as usize) < self.schema.domain_size(self.levels[q.depth()]));
        let mut prefix = q.prefix.clone();
        prefix.push(value);
        SearchQuery { prefix }
    }

    pub fn parent(&self, q: &SearchQuery) -> Option<SearchQuery> {
        if q.prefix.is_empty() {
            None
        } else {
            Some(SearchQuery {
                prefix: q.prefix[..q.prefix.len() - 1].to_vec(),
            })
        }
    }

    /// Fraction of this tree's leaves whose root-to-leaf path contains `q`:
    /// the probability that a uniform drill-down goes through `q`.
    pub fn p_of_query(&self, q: &SearchQuery) -> f64 {
        self.levels[..q.depth()]
            .iter()
            .map(|&a| 1.0 / self.schema.domain_size(a) as f64)
            .product()
    }

    /// `1 / p(q)` as a running product of domain sizes. Falls back to
    /// log-space accumulation once the product leaves the comfortably
    /// representable range, so very wide schemas stay safe.
    pub fn inverse_p(&self, q: &SearchQuery) -> f64 {
        let mut product = 1.0f64;
        let mut log_sum = 0.0f64;
        for &a in &self.levels[..q.depth()] {
            let u = self.schema.domain_size(a) as f64;
            product *= u;
            log_sum += u.ln();
        }
        if log_sum > 690.0 {
            log_sum.exp()
        } else {
            product
        }
    }

    /// Draws a uniform leaf: one independent uniform value per free level.
    pub fn sample_signature<R: Rng + ?Sized>(&self, rng: &mut R) -> Signature {
        let values = self
            .levels
            .iter()
            .map(|&a| rng.random_range(0..self.schema.domain_size(a) as u32))
            .collect();
        Signature { values }
    }

    /// The depth-`d` node on `sig`'s root-to-leaf path.
    pub fn query_at(&self, sig: &Signature, depth: usize) -> SearchQuery {
        debug_assert!(depth <= self.max_depth());
        SearchQuery {
            prefix: sig.values[..depth].to_vec(),
        }
    }

    /// Whether `q` lies on `sig`'s path.
    pub fn on_path(&self, q: &SearchQuery, sig: &Signature) -> bool {
        q.prefix.iter().zip(&sig.values).all(|(a, b)| a == b)
    }

    /// Issues `q` through the simulated interface, consuming one query.
    pub fn issue(
        &self,
        sim: &mut Simulator,
        q: &SearchQuery,
        ledger: &mut BudgetLedger,
    ) -> Result<QueryOutcome, SimError> {
        let mut values = Vec::with_capacity(self.fixed_values.len() + q.prefix.len());
        values.extend_from_slice(&self.fixed_values);
        values.extend_from_slice(&q.prefix);
        sim.search(&self.ordering, &values, ledger)
    }
}

/// Terminal of a drill-down or roll-up: the top non-overflowing query on the
/// signature's path, its answer, and the number of queries spent getting there.
#[derive(Debug, Clone)]
pub struct DrillResult {
    pub terminal: SearchQuery,
    pub outcome: QueryOutcome,
    pub cost: u32,
}

/// Issues `start`, then successive one-level extensions along `sig`, stopping
/// at the first non-overflowing query.
///
/// On budget exhaustion mid-descent the error propagates and the caller must
/// discard the partial drill-down; queries already spent stay spent.
pub fn drill_down(
    sim: &mut Simulator,
    ledger: &mut BudgetLedger,
    tree: &TreeContext,
    start: SearchQuery,
    sig: &Signature,
) -> Result<DrillResult, TreeError> {
    debug_assert!(tree.on_path(&start, sig));
    let mut q = start;
    let mut cost = 0u32;
    loop {
        let outcome = tree.issue(sim, &q, ledger)?;
        cost += 1;
        if outcome.status != QueryStatus::Overflow {
            return Ok(DrillResult {
                terminal: q,
                outcome,
                cost,
            });
        }
        if q.depth() == tree.max_depth() {
            // Only reachable when more than k tuples share a full assignment.
            return Err(TreeError::LeafOverflow);
        }
        q = tree.child(&q, sig.values[q.depth()]);
    }
}

/// Climbs from `q` — which underflowed when just issued — towards the root
/// until reaching a non-underflowing node, or an underflowing node whose
/// parent overflows.
///
/// If the stopping ancestor is valid it becomes the terminal; if it
/// overflows, the terminal is its underflowing child (estimate contribution
/// zero). If the whole path underflows up to the root, the root is the
/// terminal. Cost counts only the ancestor queries issued here, not the query
/// that discovered `q`'s underflow.
pub fn roll_up(
    sim: &mut Simulator,
    ledger: &mut BudgetLedger,
    tree: &TreeContext,
    q: SearchQuery,
) -> Result<DrillResult, TreeError> {
    let underflow = |terminal: SearchQuery, cost: u32| DrillResult {
        terminal,
        outcome: QueryOutcome {
            status: QueryStatus::Underflow,
            returned: Vec::new(),
        },
        cost,
    };
    let mut child = q;
    let mut cost = 0u32;
    loop {
        let Some(parent) = tree.parent(&child) else {
            // The root itself underflows: empty (sub)tree.
            return Ok(underflow(child, cost));
        };
        let outcome = tree.issue(sim, &parent, ledger)?;
        cost += 1;
        match outcome.status {
            QueryStatus::Underflow => child = parent,
            QueryStatus::Valid => {
                return Ok(DrillResult {
                    terminal: parent,
                    outcome,
                    cost,
                })
            }
            QueryStatus::Overflow => return Ok(underflow(child, cost)),
        }
    }
}
