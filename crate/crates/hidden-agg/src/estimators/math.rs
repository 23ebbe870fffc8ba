//! Variance-optimal weighting and budget allocation: the closed forms used
//! by the adaptive estimator, plus the error-ratio bound for the reissuing
//! strategy under deletions.

use super::EstimatorError;

/// Arithmetic mean; `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Bessel-corrected sample variance: `sum((v - mean)^2) / (n - 1)`.
pub fn sample_variance(values: &[f64]) -> Result<f64, EstimatorError> {
    if values.len() < 2 {
        return Err(EstimatorError::UndefinedVariance);
    }
    let m = mean(values).expect("nonempty");
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok(ss / (values.len() - 1) as f64)
}

/// Population variance (divide by `n`); the form under which the mean-square
/// error decomposes exactly into bias squared plus variance.
pub fn population_variance(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    Some(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64)
}

/// Optimal weight on the updated-chain estimate when combining it with the
/// fresh-drill-down estimate in the second round:
///
/// `w1 = (s2_d/h2) / (s2_c/h1 + s2_1/h + s2_d/h2)`
///
/// A fully degenerate denominator (all three terms zero) yields 1/2 with a
/// logged flag.
pub fn optimal_w1(s2_c: f64, s2_1: f64, s2_d: f64, h: f64, h1: f64, h2: f64) -> f64 {
    debug_assert!(h >= 1.0 && h1 >= 1.0 && h2 >= 1.0);
    let chained = s2_c / h1 + s2_1 / h;
    let fresh = s2_d / h2;
    let denom = chained + fresh;
    if denom == 0.0 {
        log::warn!("optimal_w1: all variance terms zero; falling back to 1/2");
        return 0.5;
    }
    fresh / denom
}

/// Variance of the combined second-round estimate at a given weight:
///
/// `w1^2 (s2_c/h1 + s2_1/h) + (1 - w1)^2 s2_d/h2`
pub fn combined_variance(
    w1: f64,
    s2_c: f64,
    s2_1: f64,
    s2_d: f64,
    h: f64,
    h1: f64,
    h2: f64,
) -> f64 {
    w1 * w1 * (s2_c / h1 + s2_1 / h) + (1.0 - w1) * (1.0 - w1) * s2_d / h2
}

/// Number of previous-round drill-downs to update under budget `g_budget`,
/// minimizing the combined second-round variance:
///
/// `h1 = max(0, min(G/g_c, h, h (sqrt(g_d s2_d s2_c / g_c) - s2_c) / s2_1))`
///
/// rounded down. `s2_c = 0` forces 0; `s2_1 = 0` with `s2_c > 0` leaves the
/// third term unbounded, so the result clamps to `min(G/g_c, h)` with a
/// logged flag.
pub fn optimal_h1(
    g_budget: f64,
    g_c: f64,
    g_d: f64,
    h: f64,
    s2_c: f64,
    s2_1: f64,
    s2_d: f64,
) -> u64 {
    debug_assert!(g_c >= 1.0 && g_d >= 1.0 && g_budget >= 1.0);
    if s2_c == 0.0 {
        return 0;
    }
    let third = if s2_1 > 0.0 {
        h * ((g_d * s2_d * s2_c / g_c).sqrt() - s2_c) / s2_1
    } else {
        log::warn!("optimal_h1: s2_1 = 0 with s2_c > 0; clamping to min(G/g_c, h)");
        f64::INFINITY
    };
    (g_budget / g_c).min(h).min(third).max(0.0).floor() as u64
}

/// One history class as seen by the allocator.
#[derive(Debug, Clone, Copy)]
pub struct ClassParams {
    /// Limit of `c_x * (v2_x(c_x) - beta_x)`: the per-drill-down variance.
    pub alpha: f64,
    /// Limit of `v2_x(c_x)` as `c_x` grows: the reference-value variance.
    pub beta: f64,
    /// Mean query cost of one update in this class (>= 1).
    pub cost: f64,
    /// Drill-downs available to update; `None` marks the new-drill-down
    /// class, which is unlimited.
    pub available: Option<u64>,
}

fn clamp_count(raw: f64, class: &ClassParams, g_budget: f64) -> u64 {
    let mut v = if raw.is_finite() { raw.max(0.0) } else { 0.0 };
    v = v.min(g_budget / class.cost);
    if let Some(h) = class.available {
        v = v.min(h as f64);
    }
    v.floor() as u64
}

/// Variance-minimizing per-class update counts for a round budget.
///
/// Three regimes:
/// - every `beta > 0`: the closed form
///   `c_x = G sqrt(g_x/a_x) / (b_x * sum_i((sqrt(g_i/a_i) - a_i)(g_i/b_i))) - a_x/b_x`;
/// - every `beta = 0`: the class minimizing `alpha * cost` takes `G/g_x`
///   (ties broken towards the earliest class), the rest take 0;
/// - mixed: with `y` the `beta = 0` class minimizing `alpha * cost`, each
///   `beta > 0` class takes
///   `max(0, min(G/g_x, (sqrt(a_x a_y g_y / g_x) - a_x) / b_x))`
///   and `y` is budgeted from the remainder.
///
/// Counts are rounded down and capped at the class's availability. A fully
/// degenerate profile (all alpha and beta zero) sends everything to the
/// new-drill-down class with a logged flag.
pub fn optimal_allocation(g_budget: f64, classes: &[ClassParams]) -> Vec<u64> {
    let n = classes.len();
    let mut out = vec![0u64; n];
    if n == 0 {
        return out;
    }
    let all_alpha_zero = classes.iter().all(|c| c.alpha <= 0.0);
    let all_beta_zero = classes.iter().all(|c| c.beta <= 0.0);

    if all_alpha_zero && all_beta_zero {
        log::warn!("optimal_allocation: degenerate variance profile; using new drill-downs only");
        if let Some(i) = classes.iter().position(|c| c.available.is_none()) {
            out[i] = clamp_count(g_budget / classes[i].cost, &classes[i], g_budget);
        }
        return out;
    }

    if classes.iter().all(|c| c.beta > 0.0) {
        let denom: f64 = classes
            .iter()
            .map(|c| ((c.cost / c.alpha).sqrt() - c.alpha) * (c.cost / c.beta))
            .sum();
        for (i, c) in classes.iter().enumerate() {
            let raw = g_budget * (c.cost / c.alpha).sqrt() / (c.beta * denom) - c.alpha / c.beta;
            out[i] = clamp_count(raw, c, g_budget);
        }
        return out;
    }

    if all_beta_zero {
        let mut best = 0usize;
        for (i, c) in classes.iter().enumerate() {
            if c.alpha * c.cost < classes[best].alpha * classes[best].cost {
                best = i;
            }
        }
        out[best] = clamp_count(g_budget / classes[best].cost, &classes[best], g_budget);
        return out;
    }

    // Mixed case.
    let mut y = None::<usize>;
    for (i, c) in classes.iter().enumerate() {
        if c.beta <= 0.0 && y.is_none_or(|b| c.alpha * c.cost < classes[b].alpha * classes[b].cost)
        {
            y = Some(i);
        }
    }
    let y = y.expect("mixed case has a beta = 0 class");
    let (a_y, g_y) = (classes[y].alpha, classes[y].cost);
    let mut spent = 0.0;
    for (i, c) in classes.iter().enumerate() {
        if c.beta > 0.0 {
            let raw = ((c.alpha * a_y * g_y / c.cost).sqrt() - c.alpha) / c.beta;
            out[i] = clamp_count(raw.min(g_budget / c.cost), c, g_budget);
            spent += out[i] as f64 * c.cost;
        }
    }
    let remainder = (g_budget - spent).max(0.0);
    out[y] = clamp_count(remainder / g_y, &classes[y], g_budget);
    out
}

/// A combined multi-class estimate: inverse-variance weights, the weighted
/// value, and the achieved variance `1 / sum(1/v2_x)`.
#[derive(Debug, Clone)]
pub struct Combined {
    pub value: f64,
    pub weights: Vec<f64>,
    pub variance: f64,
}

/// Combines per-class means by inverse variance. A zero-variance class is
/// exact information and takes all the weight; several zero-variance classes
/// must agree on the value or the combination is inconsistent.
pub fn multiround_combine(classes: &[(f64, f64)]) -> Result<Combined, EstimatorError> {
    if classes.is_empty() {
        return Err(EstimatorError::InvalidParameter(
            "combine needs at least one class".into(),
        ));
    }
    let exact: Vec<usize> = classes
        .iter()
        .enumerate()
        .filter(|(_, &(_, v2))| v2 <= 0.0)
        .map(|(i, _)| i)
        .collect();
    if !exact.is_empty() {
        let first = classes[exact[0]].0;
        for &i in &exact[1..] {
            let m = classes[i].0;
            let scale = first.abs().max(m.abs()).max(1.0);
            if (m - first).abs() > 1e-9 * scale {
                return Err(EstimatorError::InconsistentExact);
            }
        }
        let mut weights = vec![0.0; classes.len()];
        let w = 1.0 / exact.len() as f64;
        for &i in &exact {
            weights[i] = w;
        }
        return Ok(Combined {
            value: first,
            weights,
            variance: 0.0,
        });
    }
    let inv: Vec<f64> = classes.iter().map(|&(_, v2)| 1.0 / v2).collect();
    let total: f64 = inv.iter().sum();
    let weights: Vec<f64> = inv.iter().map(|w| w / total).collect();
    let value = classes
        .iter()
        .zip(&weights)
        .map(|(&(m, _), &w)| w * m)
        .sum();
    Ok(Combined {
        value,
        weights,
        variance: 1.0 / total,
    })
}

/// Upper bound on the ratio between the reissuing strategy's standard error
/// after deleting `n_d` of `n` tuples and the restarting strategy's standard
/// error on the old database:
///
/// `(1 - n_d/n) * sqrt(2 max_log_domain / log_n_minus_log_k + (n_d/n)^(k+1))`
///
/// The two log arguments must use one consistent base.
pub fn reissue_error_bound(
    n: f64,
    n_d: f64,
    k: u32,
    max_log_domain: f64,
    log_n_minus_log_k: f64,
) -> Result<f64, EstimatorError> {
    if !(n > 0.0) || n_d < 0.0 || n_d > n {
        return Err(EstimatorError::InvalidParameter(
            "need 0 <= n_d <= n with n > 0".into(),
        ));
    }
    if !(n > k as f64) || log_n_minus_log_k <= 0.0 {
        return Err(EstimatorError::InvalidParameter(
            "bound requires n > k".into(),
        ));
    }
    let ratio = n_d / n;
    Ok((1.0 - ratio) * (2.0 * max_log_domain / log_n_minus_log_k + ratio.powi(k as i32 + 1)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_variance_hand_values() {
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(sample_variance(&[5.0, 5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(sample_variance(&[0.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(
            sample_variance(&[1.0]),
            Err(EstimatorError::UndefinedVariance)
        ));
    }

    #[test]
    fn w1_trusts_updated_chain_when_it_is_exact() {
        assert_eq!(optimal_w1(0.0, 0.0, 3.0, 8.0, 4.0, 3.0), 1.0);
    }

    #[test]
    fn w1_is_half_under_symmetry() {
        // s2_c/h1 + s2_1/h = 1.0 and s2_d/h2 = 1.0.
        assert_eq!(optimal_w1(2.0, 4.0, 3.0, 8.0, 4.0, 3.0), 0.5);
    }

    #[test]
    fn w1_direct_evaluation() {
        // 1.0 / (0.5 + 0.5 + 1.0) = 0.5.
        let w1 = optimal_w1(2.0, 4.0, 3.0, 8.0, 4.0, 3.0);
        assert!((w1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn w1_degenerate_falls_back_to_half() {
        assert_eq!(optimal_w1(0.0, 0.0, 0.0, 8.0, 4.0, 3.0), 0.5);
    }

    #[test]
    fn combined_variance_edges_and_optimum() {
        let (s2_c, s2_1, s2_d, h, h1, h2) = (2.0, 4.0, 3.0, 8.0, 4.0, 3.0);
        assert_eq!(
            combined_variance(0.0, s2_c, s2_1, s2_d, h, h1, h2),
            s2_d / h2
        );
        assert_eq!(
            combined_variance(1.0, s2_c, s2_1, s2_d, h, h1, h2),
            s2_c / h1 + s2_1 / h
        );
        // At the optimal weight the variance takes the product/sum form:
        // (1.0 * 1.0) / 2.0 here.
        let w1 = optimal_w1(s2_c, s2_1, s2_d, h, h1, h2);
        let v = combined_variance(w1, s2_c, s2_1, s2_d, h, h1, h2);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn optimal_w1_minimizes_combined_variance() {
        // Perturbing the optimal weight must never reduce the variance.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let s2_c = rng.random_range(0.0..5.0);
            let s2_1 = rng.random_range(0.01..5.0);
            let s2_d = rng.random_range(0.01..5.0);
            let h = rng.random_range(1.0..50.0f64).floor();
            let h1 = rng.random_range(1.0..50.0f64).floor();
            let h2 = rng.random_range(1.0..50.0f64).floor();
            let w = optimal_w1(s2_c, s2_1, s2_d, h, h1, h2);
            let at = combined_variance(w, s2_c, s2_1, s2_d, h, h1, h2);
            for dw in [-1e-3, 1e-3] {
                let v = combined_variance(w + dw, s2_c, s2_1, s2_d, h, h1, h2);
                assert!(v >= at - 1e-12);
            }
        }
    }

    #[test]
    fn h1_zero_when_nothing_changed() {
        assert_eq!(optimal_h1(100.0, 2.0, 10.0, 50.0, 0.0, 1.0, 1.0), 0);
        // Also when s2_1 is zero too; the early return must dodge the 0/0.
        assert_eq!(optimal_h1(100.0, 2.0, 10.0, 50.0, 0.0, 0.0, 1.0), 0);
    }

    #[test]
    fn h1_spends_everything_on_updates_under_heavy_change() {
        // Equal variances and a fresh drill-down much costlier than an
        // update: updating as much as possible wins, h1 = min(G/g_c, h).
        let s = 2.5;
        let h1 = optimal_h1(100.0, 2.0, 18.0, 1000.0, s, s, s);
        assert_eq!(h1, 50); // G / g_c
        let h1 = optimal_h1(100.0, 2.0, 18.0, 30.0, s, s, s);
        assert_eq!(h1, 30); // h
    }

    #[test]
    fn h1_clamps_negative_inner_term_to_zero() {
        // sqrt(g_d s2_d s2_c / g_c) < s2_c makes the third term negative.
        let h1 = optimal_h1(100.0, 4.0, 4.0, 50.0, 9.0, 1.0, 0.5);
        assert_eq!(h1, 0);
    }

    #[test]
    fn h1_unbounded_third_term_clamps_to_budget_or_availability() {
        assert_eq!(optimal_h1(100.0, 2.0, 10.0, 30.0, 1.0, 0.0, 1.0), 30);
        assert_eq!(optimal_h1(100.0, 2.0, 10.0, 500.0, 1.0, 0.0, 1.0), 50);
    }

    #[test]
    fn allocation_all_beta_zero_is_winner_take_all() {
        let classes = [
            ClassParams {
                alpha: 1.0,
                beta: 0.0,
                cost: 2.0,
                available: Some(1000),
            },
            ClassParams {
                alpha: 3.0,
                beta: 0.0,
                cost: 1.0,
                available: None,
            },
        ];
        // alpha*cost: 2.0 vs 3.0 — class 0 wins and takes G/g = 50.
        assert_eq!(optimal_allocation(100.0, &classes), vec![50, 0]);

        // Tie: earliest class wins.
        let tie = [
            ClassParams {
                alpha: 2.0,
                beta: 0.0,
                cost: 3.0,
                available: Some(10),
            },
            ClassParams {
                alpha: 3.0,
                beta: 0.0,
                cost: 2.0,
                available: None,
            },
        ];
        assert_eq!(optimal_allocation(60.0, &tie), vec![10, 0]);
    }

    #[test]
    fn allocation_mixed_negative_inner_clamps_to_zero() {
        let classes = [
            ClassParams {
                alpha: 9.0,
                beta: 1.0,
                cost: 4.0,
                available: Some(100),
            },
            ClassParams {
                alpha: 0.5,
                beta: 0.0,
                cost: 4.0,
                available: None,
            },
        ];
        // sqrt(9 * 0.5 * 4 / 4) = 2.121 < alpha = 9: class 0 gets nothing,
        // the remainder buys 100/4 = 25 new drill-downs.
        assert_eq!(optimal_allocation(100.0, &classes), vec![0, 25]);
    }

    #[test]
    fn allocation_two_round_instance_matches_h1_formula() {
        // With classes (updated: alpha = s2_c, beta = s2_1/h) and
        // (new: alpha = s2_d, beta = 0), the mixed-case count equals the
        // dedicated two-round formula.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let g_budget = rng.random_range(10.0..500.0f64).floor();
            let g_c = rng.random_range(1.0..5.0f64);
            let g_d = rng.random_range(g_c..20.0f64);
            let h = rng.random_range(1.0..200.0f64).floor();
            let s2_c = rng.random_range(0.0..4.0);
            let s2_1 = rng.random_range(0.01..4.0);
            let s2_d = rng.random_range(0.01..4.0);
            let direct = optimal_h1(g_budget, g_c, g_d, h, s2_c, s2_1, s2_d);
            let classes = [
                ClassParams {
                    alpha: s2_c,
                    beta: s2_1 / h,
                    cost: g_c,
                    available: Some(h as u64),
                },
                ClassParams {
                    alpha: s2_d,
                    beta: 0.0,
                    cost: g_d,
                    available: None,
                },
            ];
            let alloc = optimal_allocation(g_budget, &classes);
            assert_eq!(
                alloc[0], direct,
                "mismatch at g={g_budget} g_c={g_c} g_d={g_d} h={h} s2_c={s2_c} s2_1={s2_1} s2_d={s2_d}"
            );
        }
    }

    #[test]
    fn allocation_all_beta_positive_closed_form_is_finite() {
        let classes = [
            ClassParams {
                alpha: 1.0,
                beta: 0.2,
                cost: 2.0,
                available: Some(40),
            },
            ClassParams {
                alpha: 2.0,
                beta: 0.1,
                cost: 3.0,
                available: Some(60),
            },
        ];
        let alloc = optimal_allocation(300.0, &classes);
        assert!(alloc[0] <= 40 && alloc[1] <= 60);
        let spent: f64 = alloc[0] as f64 * 2.0 + alloc[1] as f64 * 3.0;
        assert!(spent <= 300.0);
    }

    #[test]
    fn allocation_degenerate_goes_to_new_drill_downs() {
        let classes = [
            ClassParams {
                alpha: 0.0,
                beta: 0.0,
                cost: 1.0,
                available: Some(5),
            },
            ClassParams {
                alpha: 0.0,
                beta: 0.0,
                cost: 4.0,
                available: None,
            },
        ];
        assert_eq!(optimal_allocation(100.0, &classes), vec![0, 25]);
    }

    #[test]
    fn combine_two_classes_reduces_to_w1_form() {
        // Classes (updated, new) with v2_1 = s2_c/h1 + s2_1/h and
        // v2_2 = s2_d/h2: the first weight must equal the two-round optimum.
        let (s2_c, s2_1, s2_d, h, h1, h2) = (2.0, 4.0, 3.0, 8.0, 4.0, 3.0);
        let v2_1 = s2_c / h1 + s2_1 / h;
        let v2_2 = s2_d / h2;
        let combined = multiround_combine(&[(10.0, v2_1), (20.0, v2_2)]).unwrap();
        let w1 = optimal_w1(s2_c, s2_1, s2_d, h, h1, h2);
        assert!((combined.weights[0] - w1).abs() < 1e-15);
        assert!(
            (combined.value - (w1 * 10.0 + (1.0 - w1) * 20.0)).abs() < 1e-12
        );
        // And the reported variance matches the product/sum form.
        let eps2 = (v2_1 * v2_2) / (v2_1 + v2_2);
        assert!((combined.variance - eps2).abs() < 1e-15);
    }

    #[test]
    fn combine_equal_variances_weighs_uniformly() {
        let combined =
            multiround_combine(&[(1.0, 2.0), (2.0, 2.0), (3.0, 2.0), (6.0, 2.0)]).unwrap();
        for w in &combined.weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
        assert!((combined.value - 3.0).abs() < 1e-15);
    }

    #[test]
    fn combine_direct_evaluation() {
        let combined = multiround_combine(&[(10.0, 1.0), (14.0, 3.0)]).unwrap();
        assert!((combined.weights[0] - 0.75).abs() < 1e-15);
        assert!((combined.weights[1] - 0.25).abs() < 1e-15);
        assert!((combined.value - 11.0).abs() < 1e-15);
        assert!((combined.variance - 0.75).abs() < 1e-15);
    }

    #[test]
    fn combine_zero_variance_class_takes_all_weight() {
        let combined = multiround_combine(&[(7.0, 0.0), (9.0, 3.0)]).unwrap();
        assert_eq!(combined.weights, vec![1.0, 0.0]);
        assert_eq!(combined.value, 7.0);
        assert_eq!(combined.variance, 0.0);

        assert!(matches!(
            multiround_combine(&[(7.0, 0.0), (9.0, 0.0)]),
            Err(EstimatorError::InconsistentExact)
        ));
        // Agreeing exact classes are fine.
        let ok = multiround_combine(&[(7.0, 0.0), (7.0, 0.0)]).unwrap();
        assert_eq!(ok.value, 7.0);
    }

    #[test]
    fn combine_weights_normalize_and_scale_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(1..6);
            let classes: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(-10.0..10.0), rng.random_range(0.01..9.0)))
                .collect();
            let a = multiround_combine(&classes).unwrap();
            assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let scale = rng.random_range(0.1..40.0);
            let scaled: Vec<(f64, f64)> =
                classes.iter().map(|&(m, v)| (m, v * scale)).collect();
            let b = multiround_combine(&scaled).unwrap();
            assert!((a.value - b.value).abs() < 1e-9);
            for (wa, wb) in a.weights.iter().zip(&b.weights) {
                assert!((wa - wb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn error_bound_vanishes_when_everything_is_deleted() {
        let b = reissue_error_bound(1000.0, 1000.0, 10, 2f64.ln(), 1000f64.ln() - 10f64.ln())
            .unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn error_bound_base_two_evaluation() {
        // Boolean domains, n = 2^20, k = 2^4, no deletions, base-2 logs:
        // sqrt(2 * 1 / 16) ≈ 0.3536.
        let b = reissue_error_bound((1u64 << 20) as f64, 0.0, 16, 1.0, 16.0).unwrap();
        assert!((b - (2.0f64 / 16.0).sqrt()).abs() < 1e-12);
        assert!((b - 0.35355339).abs() < 1e-6);
    }

    #[test]
    fn error_bound_rejects_small_n() {
        assert!(reissue_error_bound(8.0, 0.0, 10, 1.0, -0.3).is_err());
        assert!(reissue_error_bound(0.0, 0.0, 10, 1.0, 1.0).is_err());
        assert!(reissue_error_bound(10.0, 20.0, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn error_bound_below_one_for_deletion_only_runs() {
        // Deep expected drill-downs mean reissuing beats restarting: the
        // bound must come out below 1.
        let n: f64 = 1e5;
        let k = 10u32;
        let b = reissue_error_bound(n, 0.1 * n, k, 2f64.ln(), n.ln() - (k as f64).ln()).unwrap();
        assert!(b < 1.0);
    }

    #[test]
    fn mse_decomposes_into_bias_squared_plus_variance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let truth = 42.0;
        let samples: Vec<f64> = (0..10_000)
            .map(|_| truth + rng.random_range(-3.0..5.0))
            .collect();
        let mse = samples.iter().map(|x| (x - truth) * (x - truth)).sum::<f64>()
            / samples.len() as f64;
        let bias = mean(&samples).unwrap() - truth;
        let var = population_variance(&samples).unwrap();
        assert!((mse - (bias * bias + var)).abs() / mse < 1e-12);
    }
}
