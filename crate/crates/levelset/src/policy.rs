//! Closed-form finite-horizon sampling policies for distance-penalized
//! change-point search.
//!
//! A policy is an ordered list of sampling fractions `z_1..z_N`, each giving
//! the proportion of the current feasible interval to move at that step. The
//! optimal fractions minimize the expected weighted sum of final interval
//! length and distance traveled, with the penalty weight `lambda` trading the
//! two off. The minimizer has a closed form computed by a backward recursion
//! starting from `z_N = 1/2 - lambda/4`.

use crate::error::{Error, Result};

/// Default cap on the horizon grown by [`policy_for_error`].
pub const MAX_HORIZON: usize = 10_000;

/// An ordered sampling policy together with its penalty weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// Distance-penalty weight, in `[0, 2)`.
    pub lambda: f64,
    /// Fractions `z_1..z_N`, each in `[0, 1/2]`.
    pub fractions: Vec<f64>,
    /// One-step-optimal fraction `1/2 - lambda/4`, used after step N.
    pub greedy_fraction: f64,
}

impl Policy {
    pub fn n_steps(&self) -> usize {
        self.fractions.len()
    }

    /// Fraction to use at 0-based step `i`; falls back to the greedy
    /// fraction once the planned horizon is exhausted.
    pub fn fraction_at(&self, i: usize) -> f64 {
        self.fractions.get(i).copied().unwrap_or(self.greedy_fraction)
    }

    /// Checks the structural invariants: fractions in `[0, 1/2]`,
    /// nondecreasing, and the last one equal to the greedy fraction.
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        for pair in self.fractions.windows(2) {
            if pair[1] < pair[0] {
                return Err(Error::domain("policy fractions must be nondecreasing"));
            }
        }
        for &z in &self.fractions {
            if !(0.0..=0.5).contains(&z) {
                return Err(Error::domain(format!("fraction {z} outside [0, 1/2]")));
            }
        }
        if let Some(&last) = self.fractions.last() {
            if (last - self.greedy_fraction).abs() > 1e-12 {
                return Err(Error::domain("last fraction must equal 1/2 - lambda/4"));
            }
        }
        Ok(())
    }
}

/// Per-step diagnostics and analytic expectations for a policy.
#[derive(Debug, Clone)]
pub struct PolicyDiagnostics {
    /// `xi_i = z_i^2 + (1 - z_i)^2`, the expected one-step shrink factor.
    pub xi: Vec<f64>,
    /// `rho_k` from the backward recursion, with `rho_N = 1`.
    pub rho: Vec<f64>,
    pub expected_length: f64,
    pub expected_distance: f64,
    pub expected_cost: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || !(0.0..2.0).contains(&lambda) {
        return Err(Error::domain(format!(
            "lambda must lie in [0, 2); got {lambda}"
        )));
    }
    Ok(())
}

/// Expected shrink factor of the feasible interval for a single fraction.
pub fn xi(z: f64) -> f64 {
    z * z + (1.0 - z) * (1.0 - z)
}

/// Computes the optimal `n_steps`-step policy for penalty `lambda`.
///
/// Runs the backward recursion `rho_k = xi_{k+1} rho_{k+1} + lambda z_{k+1}`
/// with `rho_N = 1` and `z_k = 1/2 - lambda / (4 rho_k)`, in time linear in
/// `n_steps`.
pub fn compute_policy(n_steps: usize, lambda: f64) -> Result<Policy> {
    check_lambda(lambda)?;
    if n_steps == 0 {
        return Err(Error::domain("n_steps must be at least 1"));
    }
    let greedy = 0.5 - lambda / 4.0;
    let mut fractions = vec![0.0; n_steps];
    fractions[n_steps - 1] = greedy;
    let mut rho = 1.0;
    for k in (0..n_steps - 1).rev() {
        let z_next = fractions[k + 1];
        rho = xi(z_next) * rho + lambda * z_next;
        fractions[k] = 0.5 - lambda / (4.0 * rho);
    }
    Ok(Policy {
        lambda,
        fractions,
        greedy_fraction: greedy,
    })
}

/// `rho_l` for arbitrary fractions, by the same backward recursion.
fn rho_values(fractions: &[f64], lambda: f64) -> Vec<f64> {
    let n = fractions.len();
    let mut rho = vec![1.0; n];
    for k in (0..n.saturating_sub(1)).rev() {
        let z_next = fractions[k + 1];
        rho[k] = xi(z_next) * rho[k + 1] + lambda * z_next;
    }
    rho
}

/// Expected final interval length: `initial_length * prod_i xi_i`.
pub fn expected_interval_length(policy: &Policy, initial_length: f64) -> f64 {
    initial_length * policy.fractions.iter().map(|&z| xi(z)).product::<f64>()
}

/// Expected total distance traveled:
/// `initial_length * sum_i z_i prod_{j<i} xi_j`.
pub fn expected_distance(policy: &Policy, initial_length: f64) -> f64 {
    let mut prefix = 1.0;
    let mut total = 0.0;
    for &z in &policy.fractions {
        total += z * prefix;
        prefix *= xi(z);
    }
    initial_length * total
}

/// Expected cost `E[e^{H_N}] + lambda E[D_N]` for the given starting length.
pub fn expected_cost(policy: &Policy, initial_length: f64) -> f64 {
    expected_interval_length(policy, initial_length)
        + policy.lambda * expected_distance(policy, initial_length)
}

/// Cost of an arbitrary fraction vector on the unit interval.
pub fn cost_of_fractions(fractions: &[f64], lambda: f64) -> f64 {
    let mut prefix = 1.0;
    let mut travel = 0.0;
    for &z in fractions {
        travel += z * prefix;
        prefix *= xi(z);
    }
    prefix + lambda * travel
}

/// Gradient of the cost with respect to each fraction:
/// `dJ/dz_l = (prod_{i<l} xi_i) ((4 z_l - 2) rho_l + lambda)`.
pub fn cost_gradient(fractions: &[f64], lambda: f64) -> Vec<f64> {
    let rho = rho_values(fractions, lambda);
    let mut prefix = 1.0;
    let mut grad = Vec::with_capacity(fractions.len());
    for (l, &z) in fractions.iter().enumerate() {
        grad.push(prefix * ((4.0 * z - 2.0) * rho[l] + lambda));
        prefix *= xi(z);
    }
    grad
}

/// Diagnostics for a policy at a given starting interval length.
pub fn diagnostics(policy: &Policy, initial_length: f64) -> PolicyDiagnostics {
    PolicyDiagnostics {
        xi: policy.fractions.iter().map(|&z| xi(z)).collect(),
        rho: rho_values(&policy.fractions, policy.lambda),
        expected_length: expected_interval_length(policy, initial_length),
        expected_distance: expected_distance(policy, initial_length),
        expected_cost: expected_cost(policy, initial_length),
    }
}

/// Shortest policy whose expected final interval length is at most
/// `target_error`, grown backward from the greedy step.
///
/// Returns a zero-step policy when `target_error >= initial_length`. The
/// horizon is capped at [`MAX_HORIZON`]; exceeding the cap is an error.
pub fn policy_for_error(target_error: f64, lambda: f64, initial_length: f64) -> Result<Policy> {
    policy_for_error_capped(target_error, lambda, initial_length, MAX_HORIZON)
}

pub fn policy_for_error_capped(
    target_error: f64,
    lambda: f64,
    initial_length: f64,
    max_horizon: usize,
) -> Result<Policy> {
    check_lambda(lambda)?;
    if !(target_error > 0.0) {
        return Err(Error::domain("target_error must be positive"));
    }
    if !(initial_length > 0.0) {
        return Err(Error::domain("initial_length must be positive"));
    }
    let greedy = 0.5 - lambda / 4.0;
    if target_error >= initial_length {
        return Ok(Policy {
            lambda,
            fractions: Vec::new(),
            greedy_fraction: greedy,
        });
    }
    // Reversed order: reversed[0] is the final step z_N.
    let mut reversed = vec![greedy];
    let mut product = xi(greedy);
    let mut rho = 1.0;
    while initial_length * product > target_error {
        if reversed.len() >= max_horizon {
            return Err(Error::Timeout {
                max_iters: max_horizon,
            });
        }
        let z_prev = *reversed.last().expect("nonempty");
        rho = xi(z_prev) * rho + lambda * z_prev;
        let z = 0.5 - lambda / (4.0 * rho);
        product *= xi(z);
        reversed.push(z);
    }
    reversed.reverse();
    Ok(Policy {
        lambda,
        fractions: reversed,
        greedy_fraction: greedy,
    })
}

/// Picks the penalty weight minimizing total search time
/// `T_s N_lambda + T_t D_lambda` over a grid of candidates.
///
/// With no `cost_table`, `N_lambda` and `D_lambda` come from the analytic
/// noiseless expressions; a table of empirical `(N, D)` pairs (one per grid
/// entry, e.g. Monte Carlo means for a noisy search) overrides them. Ties are
/// broken toward the smaller lambda.
pub fn select_lambda(
    sample_time: f64,
    travel_time: f64,
    target_error: f64,
    initial_length: f64,
    lambda_grid: &[f64],
    cost_table: Option<&[(f64, f64)]>,
) -> Result<(f64, Policy)> {
    if lambda_grid.is_empty() {
        return Err(Error::domain("lambda grid must be nonempty"));
    }
    if sample_time < 0.0 || travel_time < 0.0 {
        return Err(Error::domain("times must be nonnegative"));
    }
    if let Some(table) = cost_table {
        if table.len() != lambda_grid.len() {
            return Err(Error::Dimension(format!(
                "cost table has {} entries for {} grid values",
                table.len(),
                lambda_grid.len()
            )));
        }
    }
    let mut order: Vec<usize> = (0..lambda_grid.len()).collect();
    order.sort_by(|&a, &b| lambda_grid[a].total_cmp(&lambda_grid[b]));

    let mut best: Option<(f64, f64)> = None; // (time, lambda)
    for &idx in &order {
        let lambda = lambda_grid[idx];
        let (n, d) = match cost_table {
            Some(table) => table[idx],
            None => {
                let policy = policy_for_error(target_error, lambda, initial_length)?;
                (
                    policy.n_steps() as f64,
                    expected_distance(&policy, initial_length),
                )
            }
        };
        let time = sample_time * n + travel_time * d;
        // Strict improvement only, so equal times keep the smaller lambda.
        if best.map_or(true, |(t, _)| time < t) {
            best = Some((time, lambda));
        }
    }
    let (_, lambda_star) = best.expect("grid nonempty");
    let policy = policy_for_error(target_error, lambda_star, initial_length)?;
    Ok((lambda_star, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Literal double-sum form of rho_k, as opposed to the incremental
    /// recursion used by the implementation.
    fn rho_literal(fractions: &[f64], lambda: f64, k: usize) -> f64 {
        let n = fractions.len();
        let mut prod = 1.0;
        for i in k + 1..n {
            prod *= xi(fractions[i]);
        }
        let mut sum = 0.0;
        for i in k + 1..n {
            let mut inner = 1.0;
            for j in k + 1..i {
                inner *= xi(fractions[j]);
            }
            sum += fractions[i] * inner;
        }
        prod + lambda * sum
    }

    #[test]
    fn incremental_rho_matches_literal_formula() {
        for n in 1..=6 {
            for &lambda in &[0.0, 0.3, 0.9, 1.5, 1.9] {
                let policy = compute_policy(n, lambda).unwrap();
                let rho = rho_values(&policy.fractions, lambda);
                for k in 0..n {
                    let literal = rho_literal(&policy.fractions, lambda, k);
                    assert!(
                        (rho[k] - literal).abs() < 1e-12,
                        "n={n} lambda={lambda} k={k}: {} vs {literal}",
                        rho[k]
                    );
                }
            }
        }
    }

    #[test]
    fn lambda_zero_gives_bisection() {
        let policy = compute_policy(5, 0.0).unwrap();
        for &z in &policy.fractions {
            assert_eq!(z, 0.5);
        }
    }

    #[test]
    fn single_step_policy_is_greedy() {
        for &lambda in &[0.0, 0.5, 1.0, 1.9] {
            let policy = compute_policy(1, lambda).unwrap();
            assert_eq!(policy.fractions, vec![0.5 - lambda / 4.0]);
        }
    }

    #[test]
    fn two_step_policy_hand_values() {
        let policy = compute_policy(2, 0.5).unwrap();
        let d = diagnostics(&policy, 1.0);
        assert!((policy.fractions[1] - 0.375).abs() < 1e-12);
        assert!((d.xi[1] - 0.53125).abs() < 1e-12);
        assert!((d.rho[0] - 0.71875).abs() < 1e-12);
        assert!((policy.fractions[0] - (0.5 - 0.5 / (4.0 * 0.71875))).abs() < 1e-12);
        assert!((policy.fractions[0] - 0.32609).abs() < 1e-5);
    }

    #[test]
    fn two_step_policy_matches_grid_minimization() {
        // Dense 2-D grid search over [0,1]^2 as an independent oracle.
        let grid = 400usize;
        let lambda = 0.5;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=grid {
            let z1 = i as f64 / grid as f64;
            for j in 0..=grid {
                let z2 = j as f64 / grid as f64;
                let cost = cost_of_fractions(&[z1, z2], lambda);
                if cost < best.0 {
                    best = (cost, z1, z2);
                }
            }
        }
        let policy = compute_policy(2, lambda).unwrap();
        let width = 1.0 / grid as f64;
        assert!((policy.fractions[0] - best.1).abs() <= 2.0 * width);
        assert!((policy.fractions[1] - best.2).abs() <= 2.0 * width);
        assert!(expected_cost(&policy, 1.0) <= best.0 + 1e-9);
    }

    #[test]
    fn lambda_out_of_range_is_rejected() {
        assert!(compute_policy(3, 2.0).is_err());
        assert!(compute_policy(3, -0.1).is_err());
        assert!(compute_policy(3, f64::NAN).is_err());
    }

    #[test]
    fn expected_length_examples() {
        let bisect = compute_policy(4, 0.0).unwrap();
        assert!((expected_interval_length(&bisect, 1.0) - 0.0625).abs() < 1e-12);

        let one = Policy {
            lambda: 0.5,
            fractions: vec![0.375],
            greedy_fraction: 0.375,
        };
        assert!((expected_interval_length(&one, 1.0) - 0.53125).abs() < 1e-12);

        // Linear in the starting length.
        let p = compute_policy(3, 0.7).unwrap();
        let l1 = expected_interval_length(&p, 1.0);
        let l2 = expected_interval_length(&p, 2.0);
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn expected_distance_examples() {
        let one = compute_policy(1, 0.0).unwrap();
        assert!((expected_distance(&one, 1.0) - 0.5).abs() < 1e-12);

        let two = compute_policy(2, 0.0).unwrap();
        assert!((expected_distance(&two, 1.0) - 0.75).abs() < 1e-12);

        let opt = compute_policy(2, 0.5).unwrap();
        let z1 = opt.fractions[0];
        let expect = z1 + 0.375 * xi(z1);
        assert!((expected_distance(&opt, 1.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn cost_at_lambda_zero_is_length_only() {
        let p = compute_policy(4, 0.0).unwrap();
        assert_eq!(expected_cost(&p, 1.0), expected_interval_length(&p, 1.0));
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        for n in 1..=20 {
            for step in 0..8 {
                let lambda = 0.25 * step as f64;
                let policy = compute_policy(n, lambda).unwrap();
                for g in cost_gradient(&policy.fractions, lambda) {
                    assert!(g.abs() < 1e-10, "n={n} lambda={lambda} grad={g}");
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fractions = [0.21, 0.34, 0.47, 0.11];
        let lambda = 0.8;
        let grad = cost_gradient(&fractions, lambda);
        let h = 1e-6;
        for l in 0..fractions.len() {
            let mut plus = fractions;
            let mut minus = fractions;
            plus[l] += h;
            minus[l] -= h;
            let fd = (cost_of_fractions(&plus, lambda) - cost_of_fractions(&minus, lambda))
                / (2.0 * h);
            assert!((grad[l] - fd).abs() < 1e-5, "l={l}: {} vs {fd}", grad[l]);
        }
    }

    #[test]
    fn gradient_zero_for_bisection_without_penalty() {
        for g in cost_gradient(&[0.5, 0.5, 0.5], 0.0) {
            assert_eq!(g, 0.0);
        }
    }

    #[test]
    fn policy_for_error_bisection_count() {
        let p = policy_for_error(0.25, 0.0, 1.0).unwrap();
        assert_eq!(p.fractions, vec![0.5, 0.5]);
    }

    #[test]
    fn policy_for_error_matches_forward_scan() {
        // Independent oracle: evaluate prod(xi) of compute_policy(n) for
        // increasing n until it first drops below the target.
        let (eps, lambda) = (0.1, 0.5);
        let mut expected_n = 0;
        for n in 1..200 {
            let p = compute_policy(n, lambda).unwrap();
            if expected_interval_length(&p, 1.0) <= eps {
                expected_n = n;
                break;
            }
        }
        let p = policy_for_error(eps, lambda, 1.0).unwrap();
        assert_eq!(p.n_steps(), expected_n);
        assert!(expected_interval_length(&p, 1.0) <= eps);
        let shorter = compute_policy(expected_n - 1, lambda).unwrap();
        assert!(expected_interval_length(&shorter, 1.0) > eps);
    }

    #[test]
    fn policy_for_error_scale_invariance() {
        let a = policy_for_error(0.25, 0.0, 1.0).unwrap();
        let b = policy_for_error(0.5, 0.0, 2.0).unwrap();
        assert_eq!(a.fractions, b.fractions);

        let c = policy_for_error(0.03, 0.9, 1.0).unwrap();
        let d = policy_for_error(0.03 * 7.0, 0.9, 7.0).unwrap();
        assert_eq!(c.fractions, d.fractions);
    }

    #[test]
    fn policy_for_error_trivial_and_invalid_inputs() {
        let zero = policy_for_error(1.5, 0.3, 1.0).unwrap();
        assert!(zero.fractions.is_empty());
        assert!(policy_for_error(0.0, 0.3, 1.0).is_err());
        assert!(policy_for_error(0.1, 2.0, 1.0).is_err());
    }

    #[test]
    fn policy_for_error_horizon_cap() {
        let err = policy_for_error_capped(1e-6, 1.9999 - 0.0001, 1.0, 50);
        match err {
            Err(Error::Timeout { max_iters }) => assert_eq!(max_iters, 50),
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn select_lambda_free_travel_prefers_smallest() {
        let grid = [0.0, 0.4, 0.8, 1.2];
        let (lambda, _) = select_lambda(100.0, 0.0, 0.01, 1.0, &grid, None).unwrap();
        assert_eq!(lambda, 0.0);
    }

    #[test]
    fn select_lambda_nondecreasing_in_travel_time() {
        let grid: Vec<f64> = (0..16).map(|i| i as f64 * 0.12).collect();
        let mut last = -1.0;
        for k in 0..20 {
            let ratio = 1e-4 * 10f64.powf(7.0 * k as f64 / 19.0);
            let (lambda, _) =
                select_lambda(100.0, 100.0 * ratio, 0.01, 1.0, &grid, None).unwrap();
            assert!(lambda >= last, "ratio={ratio}: {lambda} < {last}");
            last = lambda;
        }
    }

    #[test]
    fn select_lambda_regression_value() {
        // Pinned from the exhaustive grid evaluation on first run.
        let grid: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
        let (lambda, policy) =
            select_lambda(100.0, 100.0 * 250.0, 0.01, 1.0, &grid, None).unwrap();
        assert!((lambda - 0.70).abs() < 1e-9);
        assert!(expected_interval_length(&policy, 1.0) <= 0.01);
    }

    #[test]
    fn select_lambda_empty_grid_and_table_mismatch() {
        assert!(select_lambda(1.0, 1.0, 0.1, 1.0, &[], None).is_err());
        let table = [(3.0, 0.5)];
        assert!(select_lambda(1.0, 1.0, 0.1, 1.0, &[0.0, 0.5], Some(&table)).is_err());
    }

    #[test]
    fn select_lambda_uses_cost_table_when_present() {
        let grid = [0.0, 1.0];
        // Table makes the larger lambda strictly cheaper.
        let table = [(10.0, 1.0), (2.0, 0.1)];
        let (lambda, _) = select_lambda(1.0, 1.0, 0.1, 1.0, &grid, Some(&table)).unwrap();
        assert_eq!(lambda, 1.0);
    }

    proptest! {
        #[test]
        fn fractions_monotone_and_bounded(n in 1usize..20, lambda in 0.0..1.999f64) {
            let policy = compute_policy(n, lambda).unwrap();
            policy.validate().unwrap();
            for w in policy.fractions.windows(2) {
                prop_assert!(w[1] >= w[0]);
                if lambda > 0.0 {
                    prop_assert!(w[1] > w[0]);
                }
            }
        }

        #[test]
        fn tail_subproblem_identity(n in 2usize..20, lambda in 0.0..1.999f64) {
            let long = compute_policy(n, lambda).unwrap();
            for m in 1..n {
                let short = compute_policy(m, lambda).unwrap();
                for (a, b) in long.fractions[n - m..].iter().zip(&short.fractions) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn perturbed_policies_cost_more(
            n in 1usize..8,
            lambda in 0.0..1.999f64,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let policy = compute_policy(n, lambda).unwrap();
            let base = expected_cost(&policy, 1.0);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..16 {
                let perturbed: Vec<f64> = policy
                    .fractions
                    .iter()
                    .map(|z| (z + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0))
                    .collect();
                prop_assert!(cost_of_fractions(&perturbed, lambda) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn fractions_shrink_toward_lambda_two() {
        let near_two = compute_policy(10, 1.999).unwrap();
        for &z in &near_two.fractions {
            assert!(z < 0.01, "z={z}");
        }
    }
}
