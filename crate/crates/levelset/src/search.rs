//! Noiseless finite-horizon search against a binary step-function oracle.
//!
//! The executor walks the unit interval, moving a policy fraction of the
//! current feasible interval forward after a positive label and backward
//! after a negative one, and shrinks the interval from the labels observed.

use crate::error::{Error, Result};
use crate::policy::Policy;
use std::io::Write;

/// Default iteration cap for a single search.
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Stopping condition for a search run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop once the error criterion drops to the threshold: the feasible
    /// interval length for the noiseless search, the posterior expected
    /// absolute error for the probabilistic one.
    ErrorBelow(f64),
    /// Take exactly this many samples.
    FixedSamples(usize),
}

/// One measurement in a search trace.
#[derive(Debug, Clone)]
pub struct SearchStep {
    pub x: f64,
    /// Raw oracle output (the binary label for noiseless searches).
    pub raw: f64,
    pub label: bool,
    /// Lower edge of the interval summary: the feasible interval for the
    /// noiseless search, an expected-error band around the estimate for the
    /// probabilistic one.
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    pub cumulative_distance: f64,
}

/// Full record of a search run.
#[derive(Debug, Clone, Default)]
pub struct SearchTrace {
    pub steps: Vec<SearchStep>,
    pub total_distance: f64,
    pub estimate: f64,
    pub sample_count: usize,
    /// Step indices at which the derived error probability was clamped.
    pub clamped_steps: Vec<usize>,
}

impl SearchTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,x,y,label,a,b,estimate,cumulative_distance")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                i + 1,
                s.x,
                s.raw,
                s.label as u8,
                s.lower,
                s.upper,
                s.estimate,
                s.cumulative_distance
            )?;
        }
        Ok(())
    }
}

/// Search result together with whether the stop criterion was reached.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub trace: SearchTrace,
    pub converged: bool,
}

/// Runs the finite-horizon search until the feasible interval is no longer
/// than `stop_error`. The oracle must return exactly 0 or 1.
pub fn fhs_search(
    oracle: impl FnMut(f64) -> f64,
    policy: &Policy,
    stop_error: f64,
) -> Result<SearchTrace> {
    if !(stop_error > 0.0) {
        return Err(Error::domain("stop_error must be positive"));
    }
    let outcome = fhs_search_with(
        oracle,
        policy,
        StopRule::ErrorBelow(stop_error),
        DEFAULT_MAX_ITERS,
    )?;
    if !outcome.converged {
        return Err(Error::Timeout {
            max_iters: DEFAULT_MAX_ITERS,
        });
    }
    Ok(outcome.trace)
}

/// Finite-horizon search with an explicit stop rule and iteration cap.
///
/// Starts at `X_0 = 0` with an implicit positive label there, so the first
/// move is always forward. If contradictory labels collapse the feasible
/// interval (possible only when the oracle is noisy), the run stops early.
pub fn fhs_search_with(
    mut oracle: impl FnMut(f64) -> f64,
    policy: &Policy,
    stop: StopRule,
    max_iters: usize,
) -> Result<SearchOutcome> {
    policy.validate()?;
    let mut x = 0.0f64;
    let mut last_label = true;
    let mut lower = 0.0f64;
    let mut upper = 1.0f64;
    let mut distance = 0.0f64;
    let mut trace = SearchTrace {
        estimate: 0.5,
        ..Default::default()
    };

    loop {
        let done = match stop {
            StopRule::ErrorBelow(eps) => upper - lower <= eps,
            StopRule::FixedSamples(n) => trace.sample_count >= n,
        };
        if done {
            return Ok(SearchOutcome {
                trace,
                converged: true,
            });
        }
        if upper <= lower {
            // Degenerate interval from noisy labels; nothing left to sample.
            return Ok(SearchOutcome {
                trace,
                converged: matches!(stop, StopRule::ErrorBelow(_)),
            });
        }
        if trace.sample_count >= max_iters {
            return Ok(SearchOutcome {
                trace,
                converged: false,
            });
        }

        let z = policy.fraction_at(trace.sample_count);
        let step = z * (upper - lower);
        let next = if last_label { x + step } else { x - step };
        let next = next.clamp(0.0, 1.0);
        let raw = oracle(next);
        if raw != 0.0 && raw != 1.0 {
            return Err(Error::Contract(format!(
                "binary oracle returned {raw} at x={next}"
            )));
        }
        let label = raw == 1.0;
        if label {
            lower = lower.max(next);
        } else {
            upper = upper.min(next);
        }
        distance += (next - x).abs();
        x = next;
        last_label = label;
        let estimate = 0.5 * (lower + upper);
        trace.sample_count += 1;
        trace.total_distance = distance;
        trace.estimate = estimate;
        trace.steps.push(SearchStep {
            x,
            raw,
            label,
            lower,
            upper,
            estimate,
            cumulative_distance: distance,
        });
    }
}

/// Noiseless step-function oracle: 1 on `[0, theta)`, 0 elsewhere.
pub fn step_oracle(theta: f64) -> impl Fn(f64) -> f64 {
    move |x| if x < theta { 1.0 } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{compute_policy, expected_distance, expected_interval_length};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bisection_sample_count() {
        let policy = compute_policy(4, 0.0).unwrap();
        let trace = fhs_search(step_oracle(0.5), &policy, 0.1).unwrap();
        assert_eq!(trace.sample_count, 4);
        assert_eq!(trace.steps[0].x, 0.5);
        let s = &trace.steps[1];
        assert!(s.x == 0.25 || s.x == 0.75);
        assert!((trace.estimate - 0.5).abs() <= 0.05);
    }

    #[test]
    fn estimate_within_half_stop_error() {
        let policy = compute_policy(6, 0.6).unwrap();
        for i in 1..40 {
            let theta = i as f64 / 40.0;
            let eps = 0.02;
            let trace = fhs_search(step_oracle(theta), &policy, eps).unwrap();
            assert!(
                (trace.estimate - theta).abs() <= eps / 2.0 + 1e-12,
                "theta={theta} est={}",
                trace.estimate
            );
        }
    }

    #[test]
    fn theta_always_inside_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let theta: f64 = rng.gen();
            let lambda: f64 = rng.gen_range(0.0..1.9);
            let policy = compute_policy(8, lambda).unwrap();
            let trace = fhs_search(step_oracle(theta), &policy, 0.01).unwrap();
            for s in &trace.steps {
                assert!(s.lower <= theta && theta <= s.upper);
                assert!((0.0..=1.0).contains(&s.x));
            }
        }
    }

    #[test]
    fn boundary_label_is_negative_at_theta() {
        // Indicator of [0, theta) is right-open.
        assert_eq!(step_oracle(0.5)(0.5), 0.0);
    }

    #[test]
    fn distance_penalized_policy_travels_less_near_one() {
        let theta = 0.999;
        let slow = crate::policy::policy_for_error(0.01, 1.5, 1.0).unwrap();
        let bisect = crate::policy::policy_for_error(0.01, 0.0, 1.0).unwrap();
        let d_slow = fhs_search(step_oracle(theta), &slow, 0.01)
            .unwrap()
            .total_distance;
        let d_bisect = fhs_search(step_oracle(theta), &bisect, 0.01)
            .unwrap()
            .total_distance;
        assert!(d_slow < d_bisect, "{d_slow} vs {d_bisect}");
    }

    #[test]
    fn non_binary_oracle_is_rejected() {
        let policy = compute_policy(3, 0.0).unwrap();
        let err = fhs_search(|_| 0.3, &policy, 0.1);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn interval_shrinks_by_z_or_one_minus_z() {
        let policy = compute_policy(6, 0.8).unwrap();
        let trace = fhs_search(step_oracle(0.37), &policy, 0.005).unwrap();
        let mut len = 1.0;
        for (i, s) in trace.steps.iter().enumerate() {
            let z = policy.fraction_at(i);
            let next_len = s.upper - s.lower;
            let shrink = next_len / len;
            assert!(
                (shrink - z).abs() < 1e-9 || (shrink - (1.0 - z)).abs() < 1e-9,
                "step {i}: shrink {shrink} with z {z}"
            );
            len = next_len;
        }
    }

    #[test]
    fn monte_carlo_matches_analytic_expectations() {
        let trials = 100_000;
        let policy = compute_policy(5, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut len_sum, mut len_sq) = (0.0, 0.0);
        let (mut dist_sum, mut dist_sq) = (0.0, 0.0);
        for _ in 0..trials {
            let theta: f64 = rng.gen();
            let out = fhs_search_with(
                step_oracle(theta),
                &policy,
                StopRule::FixedSamples(5),
                100,
            )
            .unwrap();
            let last = out.trace.steps.last().unwrap();
            let len = last.upper - last.lower;
            len_sum += len;
            len_sq += len * len;
            dist_sum += out.trace.total_distance;
            dist_sq += out.trace.total_distance * out.trace.total_distance;
        }
        let n = trials as f64;
        let len_mean = len_sum / n;
        let len_se = ((len_sq / n - len_mean * len_mean) / n).sqrt();
        let dist_mean = dist_sum / n;
        let dist_se = ((dist_sq / n - dist_mean * dist_mean) / n).sqrt();
        let len_expect = expected_interval_length(&policy, 1.0);
        let dist_expect = expected_distance(&policy, 1.0);
        assert!(
            (len_mean - len_expect).abs() <= 3.0 * len_se,
            "length {len_mean} vs {len_expect} (se {len_se})"
        );
        assert!(
            (dist_mean - dist_expect).abs() <= 3.0 * dist_se,
            "distance {dist_mean} vs {dist_expect} (se {dist_se})"
        );
    }

    #[test]
    fn csv_round_trip_header() {
        let policy = compute_policy(3, 0.0).unwrap();
        let trace = fhs_search(step_oracle(0.3), &policy, 0.05).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,x,y,label,a,b,estimate,cumulative_distance\n"));
        assert_eq!(text.lines().count(), trace.sample_count + 1);
    }
}
