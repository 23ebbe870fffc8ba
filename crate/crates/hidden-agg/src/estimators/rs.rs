//! The adaptive reservoir-style estimator. Each round it spends a bounded
//! bootstrap budget probing every history class (drill-downs last updated in
//! the same past round), estimates per-class update costs and variances from
//! those pilots, solves for the variance-optimal per-class update counts,
//! and executes a randomly ordered pool of chosen drill-downs until the
//! budget runs out. Class estimates are combined by inverse variance.
//!
//! The fewer changes the database sees, the fewer updates the plan buys and
//! the more budget flows to new drill-downs; under drastic change the plan
//! degrades gracefully into updating as much as possible.
//!
//! Per-drill-down update estimates are heavy-tailed (usually zero, rarely a
//! jump of the terminal's inverse selection probability), so the
//! per-drill-down variance `alpha` is not taken from a handful of raw class
//! samples: the Bessel sums are pooled across classes after normalizing by
//! class staleness, and smoothed across rounds with a forgetting factor.
//! Without this the sampled variance of an unlucky class collapses to zero,
//! its reference chain is treated as exact, and fresh evidence stops
//! mattering.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::AggKind;
use crate::sim::{BudgetLedger, Simulator};
use crate::tree::TreeContext;

use super::math::{self, ClassParams};
use super::{
    new_record, refresh_record, AggregateEstimate, AggregateSet, DrillDownRecord, Estimator,
    EstimatorError, FqKind, RecordSetSnapshot, RoundEstimate, ValueAssembler, ValueRef,
};

/// Per-class cost/variance statistics measured from this round's bootstrap
/// updates, for the aggregate the budget split is optimized for.
#[derive(Debug, Clone)]
pub struct VarianceProfile {
    pub classes: Vec<ClassStats>,
}

#[derive(Debug, Clone)]
pub struct ClassStats {
    /// The round the class was last updated in; the current round marks the
    /// new-drill-down class.
    pub round: u32,
    /// Per-drill-down variance of the update estimate.
    pub alpha: f64,
    /// Variance of the class's shared reference value.
    pub beta: f64,
    /// Mean queries per update.
    pub mean_cost: f64,
    /// Bootstrap samples behind the statistics.
    pub samples: usize,
    /// Drill-downs available to update; `None` for the new class.
    pub available: Option<u64>,
}

/// The solved budget split: per class, how many drill-downs to update this
/// round and how many were available.
#[derive(Debug, Clone)]
pub struct AllocationPlan {
    pub classes: Vec<ClassPlan>,
}

#[derive(Debug, Clone)]
pub struct ClassPlan {
    pub round: u32,
    pub planned: u64,
    pub available: Option<u64>,
}

/// One completed update (or new drill-down) this round.
struct Done {
    rec: usize,
    /// Class the record belonged to before the update; equals the current
    /// round for new drill-downs.
    x: u32,
    /// Contributions recorded at round `x` (absent for new drill-downs).
    old: Option<Vec<f64>>,
}

/// Dof-weighted sum of squared deviations with exponential forgetting:
/// a pooled variance estimate that stays informed across rounds.
#[derive(Debug, Clone, Default)]
struct SmoothedVar {
    ss: f64,
    dof: f64,
}

impl SmoothedVar {
    const FORGET: f64 = 0.8;

    fn commit(&mut self, ss: f64, dof: f64) {
        self.ss = Self::FORGET * self.ss + ss;
        self.dof = Self::FORGET * self.dof + dof;
    }

    fn value(&self) -> Option<f64> {
        if self.dof > 0.0 {
            Some(self.ss / self.dof)
        } else {
            None
        }
    }

    /// Estimate including not-yet-committed observations.
    fn preview(&self, ss: f64, dof: f64) -> Option<f64> {
        let d = self.dof + dof;
        if d > 0.0 {
            Some((self.ss + ss) / d)
        } else {
            None
        }
    }
}

/// Bessel sum of squared deviations and its degrees of freedom.
fn bessel_sums(parts: &[f64]) -> (f64, f64) {
    if parts.len() < 2 {
        return (0.0, 0.0);
    }
    let m = parts.iter().sum::<f64>() / parts.len() as f64;
    let ss = parts.iter().map(|p| (p - m) * (p - m)).sum::<f64>();
    (ss, (parts.len() - 1) as f64)
}

pub struct RsEstimator {
    tree: TreeContext,
    aggs: AggregateSet,
    rng: ChaCha8Rng,
    assembler: ValueAssembler,
    records: Vec<DrillDownRecord>,
    varpi: u32,
    /// Per component: round -> (combined estimate, its variance estimate).
    stats: Vec<BTreeMap<u32, (f64, f64)>>,
    /// Per component: per-drill-down update-delta variance at one round of
    /// staleness.
    unit_alpha: Vec<SmoothedVar>,
    /// Per component: per-drill-down variance of a fresh estimate.
    fresh_alpha: Vec<SmoothedVar>,
    last_profile: Option<VarianceProfile>,
    last_plan: Option<AllocationPlan>,
}

impl RsEstimator {
    pub fn new(tree: TreeContext, aggs: AggregateSet, seed: u64, varpi: u32) -> Self {
        let assembler = ValueAssembler::new(&aggs);
        let ncomp = aggs.components().len();
        RsEstimator {
            tree,
            aggs,
            rng: ChaCha8Rng::seed_from_u64(seed),
            assembler,
            records: Vec::new(),
            varpi: varpi.max(1),
            stats: vec![BTreeMap::new(); ncomp],
            unit_alpha: vec![SmoothedVar::default(); ncomp],
            fresh_alpha: vec![SmoothedVar::default(); ncomp],
            last_profile: None,
            last_plan: None,
        }
    }

    pub fn records(&self) -> &[DrillDownRecord] {
        &self.records
    }

    /// Stored per-round combined estimate and its chain variance for one
    /// component.
    pub fn stored_estimate(&self, comp: usize, round: u32) -> Option<(f64, f64)> {
        self.stats[comp].get(&round).copied()
    }

    /// The cost/variance profile measured in the most recent round.
    pub fn last_profile(&self) -> Option<&VarianceProfile> {
        self.last_profile.as_ref()
    }

    /// The budget split solved in the most recent round.
    pub fn last_plan(&self) -> Option<&AllocationPlan> {
        self.last_plan.as_ref()
    }

    /// Pilot drill-downs per class, shrunk when the nominal count times the
    /// class count could not fit the bootstrap's half-budget share.
    fn effective_varpi(&self, n_classes: usize, budget: u32) -> u32 {
        let want = self.varpi as u64 * n_classes as u64;
        if want * 2 > budget as u64 {
            (budget / (2 * n_classes as u32)).max(1)
        } else {
            self.varpi
        }
    }

    /// Whether class `x` updates carry the stored round-`x` estimate as a
    /// reference (with per-record deltas on top), or count as fresh samples.
    fn reference_of(&self, comp: usize, x: u32, round: u32) -> Option<(f64, f64)> {
        if x == round {
            None
        } else {
            self.stats[comp].get(&x).copied()
        }
    }

    /// Update-estimate parts for one component over a class's completed
    /// updates.
    fn parts_of(&self, comp: usize, x: u32, round: u32, done: &[&Done]) -> Vec<f64> {
        let use_delta = self.reference_of(comp, x, round).is_some();
        done.iter()
            .map(|d| {
                let new = self.records[d.rec].latest().contributions[comp];
                if use_delta {
                    new - d.old.as_ref().expect("updated records carry old contributions")[comp]
                } else {
                    new
                }
            })
            .collect()
    }

    fn execute_update(
        &mut self,
        sim: &mut Simulator,
        ledger: &mut BudgetLedger,
        rec: usize,
        round: u32,
        done: &mut Vec<Done>,
        costs: &mut BTreeMap<u32, Vec<f64>>,
    ) -> Result<bool, EstimatorError> {
        let x = self.records[rec].last_updated_round;
        let old = self.records[rec].latest().contributions.clone();
        match refresh_record(sim, ledger, &self.tree, &self.aggs, &mut self.records[rec], round) {
            Ok(cost) => {
                done.push(Done {
                    rec,
                    x,
                    old: Some(old),
                });
                costs.entry(x).or_default().push(cost as f64);
                Ok(true)
            }
            Err(e) if e.is_budget_exhausted() => Ok(false),
            Err(e) => Err(e),
        }
    }

    fn execute_new(
        &mut self,
        sim: &mut Simulator,
        ledger: &mut BudgetLedger,
        round: u32,
        done: &mut Vec<Done>,
        costs: &mut BTreeMap<u32, Vec<f64>>,
    ) -> Result<bool, EstimatorError> {
        let sig = self.tree.sample_signature(&mut self.rng);
        match new_record(sim, ledger, &self.tree, &self.aggs, sig, round) {
            Ok((record, cost)) => {
                self.records.push(record);
                done.push(Done {
                    rec: self.records.len() - 1,
                    x: round,
                    old: None,
                });
                costs.entry(round).or_default().push(cost as f64);
                Ok(true)
            }
            Err(e) if e.is_budget_exhausted() => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Smoothed per-drill-down variance for a class, previewing this round's
    /// not-yet-committed sums. Classes at staleness `s` scale the unit
    /// variance by `s` (update deltas accumulate round by round).
    fn alpha_for(
        &self,
        comp: usize,
        staleness: Option<u32>,
        unit_preview: (f64, f64),
        fresh_preview: (f64, f64),
    ) -> f64 {
        match staleness {
            Some(s) => {
                let unit = self.unit_alpha[comp]
                    .preview(unit_preview.0, unit_preview.1)
                    .or_else(|| self.fresh_alpha[comp].preview(fresh_preview.0, fresh_preview.1));
                unit.map(|u| u * s as f64).unwrap_or(0.0)
            }
            None => self.fresh_alpha[comp]
                .preview(fresh_preview.0, fresh_preview.1)
                .unwrap_or(0.0),
        }
    }
}

struct CombineOutcome {
    value: Option<f64>,
    variance: Option<f64>,
    weights: Vec<(u32, f64)>,
}

/// Inverse-variance combination of per-class means; an unmeasurable profile
/// degenerates to equal weights with a logged flag.
fn combine_classes(labels: &[u32], means: &[f64], v2s: &[f64]) -> CombineOutcome {
    if means.is_empty() {
        return CombineOutcome {
            value: None,
            variance: None,
            weights: Vec::new(),
        };
    }
    if v2s.iter().any(|v| !v.is_finite()) || v2s.iter().all(|&v| v <= 0.0) && means.len() > 1 {
        // Give up on weighting rather than pretending exactness.
        let distinct = means.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-9);
        if distinct {
            log::warn!("unmeasurable class variances; falling back to equal weights");
            let w = 1.0 / means.len() as f64;
            return CombineOutcome {
                value: Some(means.iter().sum::<f64>() / means.len() as f64),
                variance: None,
                weights: labels.iter().map(|&l| (l, w)).collect(),
            };
        }
    }
    match math::multiround_combine(
        &means
            .iter()
            .zip(v2s)
            .map(|(&m, &v)| (m, v))
            .collect::<Vec<_>>(),
    ) {
        Ok(combined) => CombineOutcome {
            value: Some(combined.value),
            variance: Some(combined.variance),
            weights: labels.iter().copied().zip(combined.weights).collect(),
        },
        Err(_) => {
            log::warn!("inconsistent exact classes; falling back to equal weights");
            let w = 1.0 / means.len() as f64;
            CombineOutcome {
                value: Some(means.iter().sum::<f64>() / means.len() as f64),
                variance: None,
                weights: labels.iter().map(|&l| (l, w)).collect(),
            }
        }
    }
}

impl Estimator for RsEstimator {
    fn name(&self) -> &'static str {
        "rs"
    }

    fn run_round(
        &mut self,
        sim: &mut Simulator,
        ledger: &mut BudgetLedger,
    ) -> Result<RoundEstimate, EstimatorError> {
        let round = sim.round_index();
        let budget = ledger.limit();
        let ncomp = self.aggs.components().len();

        // History classes by last-updated round.
        let mut classes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.last_updated_round < round {
                classes.entry(r.last_updated_round).or_default().push(i);
            }
        }
        let varpi_eff = self.effective_varpi(classes.len() + 1, budget);
        // Bootstrapping stops once it has consumed half the round budget,
        // whatever the pilot counts say: pilots are measurements, the pool
        // is where the budget is supposed to go.
        let bootstrap_cap = (budget / 2).max(1);

        let mut done: Vec<Done> = Vec::new();
        let mut costs: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut exhausted = false;

        // Bootstrap phase: pilot updates per class, oldest class first, then
        // pilot new drill-downs. These are genuine class updates and enter
        // the final estimate.
        let class_list: Vec<(u32, Vec<usize>)> =
            classes.iter().map(|(&x, v)| (x, v.clone())).collect();
        'bootstrap: for (_, members) in &class_list {
            let nb = (varpi_eff as usize).min(members.len());
            let picks = rand::seq::index::sample(&mut self.rng, members.len(), nb);
            for pi in picks {
                if ledger.used() >= bootstrap_cap {
                    break 'bootstrap;
                }
                if !self.execute_update(sim, ledger, members[pi], round, &mut done, &mut costs)? {
                    exhausted = true;
                    break 'bootstrap;
                }
            }
        }
        if !exhausted {
            for _ in 0..varpi_eff {
                if ledger.used() >= bootstrap_cap {
                    break;
                }
                if !self.execute_new(sim, ledger, round, &mut done, &mut costs)? {
                    exhausted = true;
                    break;
                }
            }
        }

        // Profile + allocation + pool execution.
        if !exhausted {
            let (tcomp, tkind) = self.aggs.allocation_target();
            let new_class = (round, Vec::new());
            let all_classes: Vec<&(u32, Vec<usize>)> =
                class_list.iter().chain(std::iter::once(&new_class)).collect();

            // This round's not-yet-committed variance sums for the target
            // component, from the bootstrap samples.
            let mut unit_sums = (0.0, 0.0);
            let mut fresh_sums = (0.0, 0.0);
            let mut per_class: Vec<(u32, Vec<f64>, Option<u32>, f64, usize)> = Vec::new();
            for entry in &all_classes {
                let (x, members) = (entry.0, &entry.1);
                let ds: Vec<&Done> = done.iter().filter(|d| d.x == x).collect();
                if ds.is_empty() {
                    continue;
                }
                let (parts, staleness, beta) = match tkind {
                    FqKind::SingleRound => {
                        let reference = self.reference_of(tcomp, x, round);
                        let parts = self.parts_of(tcomp, x, round, &ds);
                        match reference {
                            Some((_, var)) => (parts, Some(round - x), var),
                            None => (parts, None, 0.0),
                        }
                    }
                    FqKind::SizeDelta => {
                        let adjacent = x + 1 == round;
                        let parts: Vec<f64> = ds
                            .iter()
                            .map(|d| {
                                let new = self.records[d.rec].latest().contributions[tcomp];
                                if adjacent {
                                    new - d.old.as_ref().expect("adjacent class is updated")[tcomp]
                                } else {
                                    new
                                }
                            })
                            .collect();
                        if adjacent {
                            (parts, Some(1), 0.0)
                        } else {
                            let beta = self.stats[tcomp]
                                .get(&round.wrapping_sub(1))
                                .map(|&(_, var)| var)
                                .unwrap_or(0.0);
                            (parts, None, beta)
                        }
                    }
                };
                let (ss, dof) = bessel_sums(&parts);
                match staleness {
                    Some(s) => {
                        unit_sums.0 += ss / s as f64;
                        unit_sums.1 += dof;
                    }
                    None => {
                        fresh_sums.0 += ss;
                        fresh_sums.1 += dof;
                    }
                }
                per_class.push((x, parts, staleness, beta, members.len()));
            }

            let mut labels = Vec::with_capacity(per_class.len());
            let mut params = Vec::with_capacity(per_class.len());
            for (x, parts, staleness, beta, h_x) in &per_class {
                let alpha = self.alpha_for(tcomp, *staleness, unit_sums, fresh_sums);
                let g_x = math::mean(costs.get(x).map_or(&[][..], |v| v)).unwrap_or(1.0);
                labels.push(*x);
                params.push(ClassParams {
                    alpha,
                    beta: *beta,
                    cost: g_x.max(1.0),
                    available: if *x == round {
                        None
                    } else {
                        Some(*h_x as u64)
                    },
                });
                let _ = parts;
            }
            self.last_profile = Some(VarianceProfile {
                classes: labels
                    .iter()
                    .zip(&params)
                    .zip(&per_class)
                    .map(|((&x, p), (_, parts, ..))| ClassStats {
                        round: x,
                        alpha: p.alpha,
                        beta: p.beta,
                        mean_cost: p.cost,
                        samples: parts.len(),
                        available: p.available,
                    })
                    .collect(),
            });

            let counts = math::optimal_allocation(budget as f64, &params);
            self.last_plan = Some(AllocationPlan {
                classes: labels
                    .iter()
                    .zip(&counts)
                    .zip(&params)
                    .map(|((&x, &planned), p)| ClassPlan {
                        round: x,
                        planned,
                        available: p.available,
                    })
                    .collect(),
            });

            // Fill the pool with the chosen drill-downs and run it in random
            // order until the budget is gone; estimated costs are noisy, so
            // the tail may not fit.
            let bootstrapped: HashSet<usize> = done.iter().map(|d| d.rec).collect();
            let mut pool: Vec<Option<usize>> = Vec::new(); // None = new drill-down
            for (&label, &planned) in labels.iter().zip(&counts) {
                let already = done.iter().filter(|d| d.x == label).count();
                if label == round {
                    for _ in 0..(planned as usize).saturating_sub(already) {
                        pool.push(None);
                    }
                } else {
                    let members = &classes[&label];
                    let target = (planned as usize).min(members.len());
                    let extra = target.saturating_sub(already);
                    if extra > 0 {
                        let remaining: Vec<usize> = members
                            .iter()
                            .copied()
                            .filter(|m| !bootstrapped.contains(m))
                            .collect();
                        let picks = rand::seq::index::sample(
                            &mut self.rng,
                            remaining.len(),
                            extra.min(remaining.len()),
                        );
                        for pi in picks {
                            pool.push(Some(remaining[pi]));
                        }
                    }
                }
            }
            pool.shuffle(&mut self.rng);
            for item in pool {
                if ledger.remaining() == 0 {
                    break;
                }
                let ok = match item {
                    Some(rec) => self.execute_update(sim, ledger, rec, round, &mut done, &mut costs)?,
                    None => self.execute_new(sim, ledger, round, &mut done, &mut costs)?,
                };
                if !ok {
                    break;
                }
            }
            // Rounding and cost-estimation slack: spend whatever is left on
            // additional new drill-downs.
            while ledger.remaining() > 0 {
                if !self.execute_new(sim, ledger, round, &mut done, &mut costs)? {
                    break;
                }
            }
        }

        // Estimation: per component, commit this round's variance sums, then
        // combine the realized classes by inverse variance.
        let mut by_class: BTreeMap<u32, Vec<&Done>> = BTreeMap::new();
        for d in &done {
            by_class.entry(d.x).or_default().push(d);
        }
        let mut base: Vec<Option<f64>> = vec![None; ncomp];
        let mut base_var: Vec<Option<f64>> = vec![None; ncomp];
        let mut base_weights: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ncomp];
        let mut delta: Vec<Option<f64>> = vec![None; ncomp];
        let mut delta_var: Vec<Option<f64>> = vec![None; ncomp];
        let needs_delta = self
            .aggs
            .specs()
            .iter()
            .any(|s| s.kind == AggKind::SizeDelta);

        for comp in 0..ncomp {
            if by_class.is_empty() {
                continue;
            }
            // Realized classes under single-round semantics.
            struct Realized {
                label: u32,
                mean: f64,
                count: usize,
                staleness: Option<u32>,
                beta: f64,
            }
            let mut realized = Vec::new();
            let mut unit_sums = (0.0, 0.0);
            let mut fresh_sums = (0.0, 0.0);
            for (&x, ds) in &by_class {
                let reference = self.reference_of(comp, x, round);
                let parts = self.parts_of(comp, x, round, ds);
                let (ss, dof) = bessel_sums(&parts);
                let m = math::mean(&parts).expect("class is nonempty");
                let (mean, staleness, beta) = match reference {
                    Some((est, var)) => (est + m, Some(round - x), var),
                    None => (m, None, 0.0),
                };
                match staleness {
                    Some(s) => {
                        unit_sums.0 += ss / s as f64;
                        unit_sums.1 += dof;
                    }
                    None => {
                        fresh_sums.0 += ss;
                        fresh_sums.1 += dof;
                    }
                }
                realized.push(Realized {
                    label: x,
                    mean,
                    count: parts.len(),
                    staleness,
                    beta,
                });
            }
            self.unit_alpha[comp].commit(unit_sums.0, unit_sums.1);
            self.fresh_alpha[comp].commit(fresh_sums.0, fresh_sums.1);

            let labels: Vec<u32> = realized.iter().map(|r| r.label).collect();
            let means: Vec<f64> = realized.iter().map(|r| r.mean).collect();
            let sampling_terms: Vec<f64> = realized
                .iter()
                .map(|r| {
                    self.alpha_for(comp, r.staleness, (0.0, 0.0), (0.0, 0.0)) / r.count as f64
                })
                .collect();
            let v2s: Vec<f64> = realized
                .iter()
                .zip(&sampling_terms)
                .map(|(r, &s)| r.beta + s)
                .collect();
            let out = combine_classes(&labels, &means, &v2s);
            // Chain variance of this round's value. Reference-bearing
            // classes share most of their history, so their reference parts
            // are treated as fully correlated rather than independent; only
            // their sampling terms and the fresh classes add in quadrature.
            // With a single reference class this equals the combined
            // variance exactly.
            if let Some(v) = out.value {
                let weight_of = |label: u32| -> f64 {
                    out.weights
                        .iter()
                        .find(|&&(l, _)| l == label)
                        .map(|&(_, w)| w)
                        .unwrap_or(0.0)
                };
                let mut correlated = 0.0;
                let mut quadrature = 0.0;
                for (r, &s) in realized.iter().zip(&sampling_terms) {
                    let w = weight_of(r.label);
                    if r.staleness.is_some() {
                        correlated += w * r.beta.max(0.0).sqrt();
                        quadrature += w * w * s;
                    } else {
                        quadrature += w * w * (r.beta + s);
                    }
                }
                let chain_var = correlated * correlated + quadrature;
                if v.is_finite() && chain_var.is_finite() {
                    self.stats[comp].insert(round, (v, chain_var));
                }
            }
            base[comp] = out.value;
            base_var[comp] = out.variance;
            base_weights[comp] = out.weights;

            if needs_delta && round > 1 {
                // Two effective classes: per-record deltas from the adjacent
                // class, and fresh contributions against the previous
                // combined estimate for everything else (stale classes and
                // new drill-downs behave identically there).
                let mut adjacent_parts = Vec::new();
                let mut fresh_parts = Vec::new();
                for (&x, ds) in &by_class {
                    for d in ds {
                        let new = self.records[d.rec].latest().contributions[comp];
                        if x + 1 == round {
                            adjacent_parts
                                .push(new - d.old.as_ref().expect("adjacent is updated")[comp]);
                        } else {
                            fresh_parts.push(new);
                        }
                    }
                }
                let mut labels = Vec::new();
                let mut means = Vec::new();
                let mut v2s = Vec::new();
                if !adjacent_parts.is_empty() {
                    let alpha = self.alpha_for(comp, Some(1), (0.0, 0.0), (0.0, 0.0));
                    labels.push(round - 1);
                    means.push(math::mean(&adjacent_parts).expect("nonempty"));
                    v2s.push(alpha / adjacent_parts.len() as f64);
                }
                if !fresh_parts.is_empty() {
                    if let Some(&(prev_est, prev_var)) = self.stats[comp].get(&(round - 1)) {
                        let alpha = self.alpha_for(comp, None, (0.0, 0.0), (0.0, 0.0));
                        labels.push(round);
                        means.push(math::mean(&fresh_parts).expect("nonempty") - prev_est);
                        v2s.push(prev_var + alpha / fresh_parts.len() as f64);
                    }
                }
                if !means.is_empty() {
                    let out = combine_classes(&labels, &means, &v2s);
                    delta[comp] = out.value;
                    delta_var[comp] = out.variance;
                }
            }
        }

        let values = self.assembler.finish_round(&self.aggs, round, &base, &delta);
        if done.is_empty() {
            return Err(EstimatorError::NoEstimate(round));
        }
        let aggregates = self
            .aggs
            .specs()
            .iter()
            .zip(&self.aggs.bindings)
            .zip(values)
            .map(|((spec, binding), value)| {
                let comp = match binding.value {
                    ValueRef::Single(i) => i,
                    ValueRef::Ratio { sum, .. } => sum,
                };
                let (variance, class_weights) = match binding.kind {
                    AggKind::SizeDelta => (delta_var[comp], Vec::new()),
                    AggKind::SingleRound => (base_var[comp], base_weights[comp].clone()),
                    AggKind::RunningAverage(_) => (None, base_weights[comp].clone()),
                };
                AggregateEstimate {
                    name: spec.name.clone(),
                    value,
                    variance,
                    class_weights,
                }
            })
            .collect();
        Ok(RoundEstimate {
            round,
            queries_used: ledger.used(),
            drill_downs: done.len(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AggregateSpec, Schema};
    use crate::sim::{Scorer, SimConfig, UpdateMode, UpdateSchedule};
    use std::sync::Arc;

    fn boolean_rows(n: u32, m: usize, seed: u64) -> Vec<Vec<u32>> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::HashSet::new();
        let mut rows = Vec::new();
        while rows.len() < n as usize {
            let row: Vec<u32> = (0..m).map(|_| rng.random_range(0..2u32)).collect();
            if seen.insert(row.clone()) {
                rows.push(row);
            }
        }
        rows
    }

    fn setup(
        rows: Vec<Vec<u32>>,
        pool: Vec<Vec<u32>>,
        schedule: UpdateSchedule,
        k: usize,
        m: usize,
        budget: u32,
    ) -> (Simulator, TreeContext, AggregateSet) {
        let schema = Arc::new(Schema::boolean(m).unwrap());
        let sim = Simulator::new(
            schema.clone(),
            rows,
            pool,
            schedule,
            SimConfig {
                k,
                round_budget: budget,
                scorer: Scorer::SeededHash { seed: 5 },
            },
        )
        .unwrap();
        let tree = TreeContext::full(schema.clone());
        let aggs = AggregateSet::new(schema, vec![AggregateSpec::count_all("n")]).unwrap();
        (sim, tree, aggs)
    }

    #[test]
    fn first_round_reduces_to_fresh_drill_downs_until_budget_gone() {
        let rows = boolean_rows(512, 10, 3);
        let (mut sim, tree, aggs) = setup(rows, vec![], UpdateSchedule::none(1), 4, 10, 100);
        let mut est = RsEstimator::new(tree, aggs, 7, 10);
        let mut ledger = BudgetLedger::new(100);
        let r = est.run_round(&mut sim, &mut ledger).unwrap();
        // Only the new-drill-down class exists...
        let plan = est.last_plan().unwrap();
        assert_eq!(plan.classes.len(), 1);
        assert!(plan.classes[0].available.is_none());
        // ...and the round budget is fully converted into drill-downs, like
        // the restarting procedure: too little left for even one more.
        assert!(r.queries_used > 100 - 12);
        assert_eq!(r.drill_downs, est.records().len());
        // Flat mean over the records equals the reported estimate.
        let mean: f64 = est
            .records()
            .iter()
            .map(|rec| rec.latest().contributions[0])
            .sum::<f64>()
            / est.records().len() as f64;
        assert!((r.aggregates[0].value.unwrap() - mean).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_stops_at_half_budget() {
        // Deep drill-downs cost ~8 queries each here; pilots must stop once
        // half the budget is spent so the plan and pool can still run.
        let rows = boolean_rows(2048, 14, 3);
        let (mut sim, tree, aggs) = setup(rows, vec![], UpdateSchedule::none(1), 4, 14, 60);
        let mut est = RsEstimator::new(tree, aggs, 7, 10);
        let mut ledger = BudgetLedger::new(60);
        est.run_round(&mut sim, &mut ledger).unwrap();
        assert!(est.last_plan().is_some(), "allocation must run");

        sim.advance_round().unwrap();
        let mut ledger = BudgetLedger::new(60);
        est.run_round(&mut sim, &mut ledger).unwrap();
        assert!(est.last_plan().is_some());
        assert!(ledger.used() <= 60);
    }

    #[test]
    fn unchanged_database_shifts_plan_to_new_drill_downs() {
        let rows = boolean_rows(2048, 12, 3);
        let (mut sim, tree, aggs) = setup(rows, vec![], UpdateSchedule::none(1), 8, 12, 150);
        let mut est = RsEstimator::new(tree, aggs, 7, 10);
        for round in 1..=4u32 {
            if round > 1 {
                sim.advance_round().unwrap();
            }
            let mut ledger = BudgetLedger::new(150);
            est.run_round(&mut sim, &mut ledger).unwrap();
        }
        // With zero change the per-record deltas all vanish: alpha of the
        // updated classes is 0, so the plan buys essentially no updates
        // beyond the pilots and pours the budget into new drill-downs.
        let plan = est.last_plan().unwrap();
        let updates_planned: u64 = plan
            .classes
            .iter()
            .filter(|c| c.available.is_some())
            .map(|c| c.planned)
            .sum();
        assert_eq!(updates_planned, 0, "plan: {plan:?}");
        // And the claimed precision keeps improving as evidence accumulates.
        let (_, eps2) = est.stats[0][&4];
        let (_, eps2_r2) = est.stats[0][&2];
        assert!(eps2 < eps2_r2);
    }

    #[test]
    fn weights_are_normalized_and_estimate_tracks_truth() {
        let rows = boolean_rows(1024, 12, 3);
        let pool = {
            let mut p = boolean_rows(2048, 12, 4);
            p.retain(|r| !rows.contains(r));
            p.truncate(400);
            p
        };
        let schedule = UpdateSchedule {
            inserts_per_round: 40,
            delete_fraction: 0.02,
            mode: UpdateMode::Round,
            seed: 11,
        };
        let (mut sim, tree, aggs) = setup(rows, pool, schedule, 8, 12, 200);
        let mut est = RsEstimator::new(tree, aggs, 7, 10);
        for round in 1..=5u32 {
            if round > 1 {
                sim.advance_round().unwrap();
            }
            let mut ledger = BudgetLedger::new(200);
            let r = est.run_round(&mut sim, &mut ledger).unwrap();
            assert!(ledger.used() <= 200);
            let est_val = r.aggregates[0].value.unwrap();
            let truth = sim.state().len() as f64;
            assert!(
                (est_val - truth).abs() / truth < 0.6,
                "round {round}: estimate {est_val} vs truth {truth}"
            );
            if !r.aggregates[0].class_weights.is_empty() {
                let total: f64 = r.aggregates[0].class_weights.iter().map(|&(_, w)| w).sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tracks_size_delta_with_dedicated_classes() {
        let rows = boolean_rows(1024, 12, 3);
        let pool = {
            let mut p = boolean_rows(2200, 12, 4);
            p.retain(|r| !rows.contains(r));
            p.truncate(600);
            p
        };
        let schedule = UpdateSchedule {
            inserts_per_round: 100,
            delete_fraction: 0.0,
            mode: UpdateMode::Round,
            seed: 11,
        };
        let schema = Arc::new(Schema::boolean(12).unwrap());
        let sim0 = Simulator::new(
            schema.clone(),
            rows,
            pool,
            schedule,
            SimConfig {
                k: 8,
                round_budget: 250,
                scorer: Scorer::SeededHash { seed: 5 },
            },
        )
        .unwrap();
        let mut sim = sim0;
        let tree = TreeContext::full(schema.clone());
        let delta_spec = AggregateSpec {
            kind: crate::model::AggKind::SizeDelta,
            ..AggregateSpec::count_all("delta")
        };
        let aggs = AggregateSet::new(schema, vec![delta_spec]).unwrap();
        let mut est = RsEstimator::new(tree, aggs, 7, 10);

        let mut ledger = BudgetLedger::new(250);
        let r1 = est.run_round(&mut sim, &mut ledger).unwrap();
        assert!(r1.aggregates[0].value.is_none()); // no previous round yet

        let mut sum = 0.0;
        let mut rounds = 0;
        for _ in 2..=6u32 {
            sim.advance_round().unwrap();
            let mut ledger = BudgetLedger::new(250);
            let r = est.run_round(&mut sim, &mut ledger).unwrap();
            if let Some(v) = r.aggregates[0].value {
                sum += v;
                rounds += 1;
            }
        }
        assert!(rounds >= 4);
        // True delta is +100 per round; the mean estimate should land in a
        // generous band around it.
        let mean = sum / rounds as f64;
        assert!((mean - 100.0).abs() < 80.0, "mean delta estimate {mean}");
    }

    #[test]
    fn bootstrap_respects_half_budget_guard() {
        let rows = boolean_rows(4096, 12, 3);
        let (mut sim, tree, aggs) = setup(rows, vec![], UpdateSchedule::none(1), 4, 12, 40);
        // varpi = 30 with one class would already blow 40/2; the guard must
        // shrink it.
        let mut est = RsEstimator::new(tree, aggs, 7, 30);
        assert_eq!(est.effective_varpi(1, 40), 20);
        assert_eq!(est.effective_varpi(2, 40), 10);
        assert_eq!(est.effective_varpi(5, 40), 4);
        assert_eq!(est.effective_varpi(40, 40), 1);
        let mut ledger = BudgetLedger::new(40);
        est.run_round(&mut sim, &mut ledger).unwrap();
        assert!(ledger.used() <= 40);
    }
}
