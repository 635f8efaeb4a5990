//! Probabilistic finite-horizon search over a discretized posterior.
//!
//! The change-point posterior lives on a fixed grid of bins over `[0,1]`.
//! Each raw measurement is thresholded to a binary label, the probability
//! that the label is wrong is derived from the Gaussian noise model, and the
//! posterior is reweighted on either side of the sample location. Sampling
//! locations are quantiles of the posterior, with the nearer of the two
//! candidate quantiles chosen to keep travel short.

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::search::{SearchOutcome, SearchStep, SearchTrace, StopRule, DEFAULT_MAX_ITERS};
use libm::erfc;
use std::io::Write;

/// Default number of posterior bins.
pub const DEFAULT_GRID_SIZE: usize = 10_000;

/// Error probabilities are clamped here before the Bayesian update.
pub const MAX_ERROR_PROB: f64 = 0.4999;

/// Gaussian measurement noise around a level-set threshold.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    /// Measurement noise standard deviation, in field units.
    pub sigma: f64,
    /// Level-set threshold, in field units.
    pub threshold: f64,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that the thresholded label of `raw_value` is wrong.
///
/// A measurement right at the threshold is uninformative and returns 1/2;
/// with zero noise any other measurement is certain and returns 0.
pub fn error_probability(raw_value: f64, noise: &NoiseModel) -> f64 {
    let diff = raw_value - noise.threshold;
    if diff == 0.0 {
        return 0.5;
    }
    if noise.sigma == 0.0 {
        return 0.0;
    }
    let t = diff / noise.sigma;
    if t > 0.0 {
        1.0 - normal_cdf(t)
    } else {
        normal_cdf(t)
    }
}

/// Discretized probability mass over the change-point location.
#[derive(Debug, Clone)]
pub struct Posterior {
    mass: Vec<f64>,
}

impl Posterior {
    pub fn uniform(grid_size: usize) -> Self {
        assert!(grid_size > 0, "grid_size must be positive");
        Posterior {
            mass: vec![1.0 / grid_size as f64; grid_size],
        }
    }

    pub fn grid_size(&self) -> usize {
        self.mass.len()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.mass.len() as f64
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Cumulative mass strictly left of `x`, with the bin containing `x`
    /// counted proportionally.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let n = self.mass.len();
        let pos = x * n as f64;
        let idx = (pos.floor() as usize).min(n - 1);
        let frac = pos - idx as f64;
        let mut cum = 0.0;
        for &m in &self.mass[..idx] {
            cum += m;
        }
        cum + self.mass[idx] * frac
    }

    /// Location with cumulative mass `q`, linearly interpolated within the
    /// bin where the target mass is reached.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0) * self.total_mass();
        let n = self.mass.len();
        let width = self.bin_width();
        let mut cum = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            if cum + m >= q {
                let frac = if m > 0.0 { (q - cum) / m } else { 0.0 };
                return (i as f64 + frac) * width;
            }
            cum += m;
        }
        // q beyond the accumulated mass only through rounding.
        let _ = n;
        1.0
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Expected absolute error `E|estimate - theta|`, summed exactly over
    /// bins assuming uniform mass within each bin.
    pub fn expected_abs_error(&self, estimate: f64) -> f64 {
        let width = self.bin_width();
        let mut total = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let lo = i as f64 * width;
            let hi = lo + width;
            total += if estimate <= lo {
                m * ((lo + hi) * 0.5 - estimate)
            } else if estimate >= hi {
                m * (estimate - (lo + hi) * 0.5)
            } else {
                let a = estimate - lo;
                let b = hi - estimate;
                m * (a * a + b * b) / (2.0 * width)
            };
        }
        total
    }

    /// Bayesian update after a thresholded measurement at `x` with error
    /// probability `p`, where `z` is the prior mass left of `x`.
    ///
    /// A positive label scales mass left of `x` by `p / (z o p)` and right
    /// by `(1-p) / (z o p)` with `z o p = zp + (1-z)(1-p)`; a negative label
    /// uses the mirrored weights with `z * p = z(1-p) + (1-z)p`. The bin
    /// containing `x` is split proportionally and the result renormalized.
    pub fn update(&mut self, x: f64, label_positive: bool, p: f64, z: f64) -> Result<()> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::domain(format!("error probability {p} outside [0, 1/2]")));
        }
        let (left, right, denom) = if label_positive {
            let denom = z * p + (1.0 - z) * (1.0 - p);
            (p, 1.0 - p, denom)
        } else {
            let denom = z * (1.0 - p) + (1.0 - z) * p;
            (1.0 - p, p, denom)
        };
        if denom <= 0.0 {
            return Err(Error::domain(
                "degenerate posterior update: normalizer is zero",
            ));
        }
        let fl = left / denom;
        let fr = right / denom;
        let n = self.mass.len();
        let pos = (x.clamp(0.0, 1.0)) * n as f64;
        let idx = (pos.floor() as usize).min(n - 1);
        let frac = pos - idx as f64;
        for m in &mut self.mass[..idx] {
            *m *= fl;
        }
        self.mass[idx] *= fl * frac + fr * (1.0 - frac);
        for m in &mut self.mass[idx + 1..] {
            *m *= fr;
        }
        let total = self.total_mass();
        if total <= 0.0 {
            return Err(Error::domain("posterior mass vanished in update"));
        }
        for m in &mut self.mass {
            *m /= total;
        }
        Ok(())
    }

    /// Writes `bin_center,mass` rows for plotting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_center,mass")?;
        let width = self.bin_width();
        for (i, &m) in self.mass.iter().enumerate() {
            writeln!(w, "{},{}", (i as f64 + 0.5) * width, m)?;
        }
        Ok(())
    }
}

/// One thresholded measurement as consumed by the probabilistic search.
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    pub raw: f64,
    pub label_positive: bool,
    pub error_prob: f64,
}

/// Resumable probabilistic search state, used to seed a run from a
/// previously updated posterior (sequential transect initialization).
#[derive(Debug, Clone)]
pub struct PfhsState {
    pub posterior: Posterior,
    pub location: f64,
}

impl PfhsState {
    pub fn fresh(grid_size: usize) -> Self {
        PfhsState {
            posterior: Posterior::uniform(grid_size),
            location: 0.0,
        }
    }
}

/// Probabilistic finite-horizon search with the Gaussian noise model.
pub fn pfhs_search(
    mut oracle: impl FnMut(f64) -> f64,
    policy: &Policy,
    noise: &NoiseModel,
    stop_error: f64,
    grid_size: usize,
) -> Result<SearchOutcome> {
    let noise = *noise;
    pfhs_run(
        move |x| {
            let raw = oracle(x);
            if !raw.is_finite() {
                return Err(Error::Contract(format!(
                    "field oracle returned {raw} at x={x}"
                )));
            }
            Ok(Measurement {
                raw,
                label_positive: raw > noise.threshold,
                error_prob: error_probability(raw, &noise),
            })
        },
        policy,
        StopRule::ErrorBelow(stop_error),
        DEFAULT_MAX_ITERS,
        PfhsState::fresh(grid_size),
    )
}

/// Probabilistic search against a binary oracle whose labels flip with a
/// known constant probability.
pub fn pfhs_search_flip(
    mut oracle: impl FnMut(f64) -> f64,
    policy: &Policy,
    flip_prob: f64,
    stop: StopRule,
    grid_size: usize,
) -> Result<SearchOutcome> {
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::domain("flip probability must lie in [0, 1/2)"));
    }
    pfhs_run(
        move |x| {
            let raw = oracle(x);
            if raw != 0.0 && raw != 1.0 {
                return Err(Error::Contract(format!(
                    "binary oracle returned {raw} at x={x}"
                )));
            }
            Ok(Measurement {
                raw,
                label_positive: raw == 1.0,
                error_prob: flip_prob,
            })
        },
        policy,
        stop,
        DEFAULT_MAX_ITERS,
        PfhsState::fresh(grid_size),
    )
}

/// Core probabilistic search loop over an arbitrary measurement supplier.
///
/// At each step the two candidate quantiles at cumulative mass `z` and
/// `1 - z` are computed and the nearer one chosen; if the nearer candidate
/// lies on the far side of the posterior median from the current location,
/// the median-side candidate is used instead so that every move is toward
/// the median. A run that exhausts `max_iters` returns with
/// `converged = false` and the trace collected so far.
pub fn pfhs_run(
    mut measure: impl FnMut(f64) -> Result<Measurement>,
    policy: &Policy,
    stop: StopRule,
    max_iters: usize,
    state: PfhsState,
) -> Result<SearchOutcome> {
    policy.validate()?;
    let PfhsState {
        mut posterior,
        mut location,
    } = state;
    let mut distance = 0.0f64;
    let mut trace = SearchTrace::default();
    trace.estimate = posterior.median();

    loop {
        let estimate = posterior.median();
        let eabs = posterior.expected_abs_error(estimate);
        trace.estimate = estimate;
        let done = match stop {
            StopRule::ErrorBelow(eps) => eabs <= eps,
            StopRule::FixedSamples(n) => trace.sample_count >= n,
        };
        if done {
            return Ok(SearchOutcome {
                trace,
                converged: true,
            });
        }
        if trace.sample_count >= max_iters {
            return Ok(SearchOutcome {
                trace,
                converged: false,
            });
        }

        let z = policy.fraction_at(trace.sample_count).clamp(0.0, 0.5);
        let lo_quantile = posterior.quantile(z);
        let hi_quantile = posterior.quantile(1.0 - z);
        let median = estimate;
        let (near, far) = if (location - lo_quantile).abs() <= (location - hi_quantile).abs() {
            (lo_quantile, hi_quantile)
        } else {
            (hi_quantile, lo_quantile)
        };
        // Truncation: never cross the median away from the current side.
        let target = if (near - median) * (location - median) < 0.0 {
            far
        } else {
            near
        };

        let meas = measure(target)?;
        let mut p = meas.error_prob;
        if p > MAX_ERROR_PROB {
            p = MAX_ERROR_PROB;
            trace.clamped_steps.push(trace.sample_count);
        }
        let z_eff = posterior.cdf_at(target);
        posterior.update(target, meas.label_positive, p, z_eff)?;

        distance += (target - location).abs();
        location = target;
        let estimate = posterior.median();
        let eabs = posterior.expected_abs_error(estimate);
        trace.sample_count += 1;
        trace.total_distance = distance;
        trace.estimate = estimate;
        trace.steps.push(SearchStep {
            x: location,
            raw: meas.raw,
            label: meas.label_positive,
            lower: (estimate - eabs).max(0.0),
            upper: (estimate + eabs).min(1.0),
            estimate,
            cumulative_distance: distance,
        });
    }
}

/// Exponentiated differential entropy of a uniform prior after one
/// thresholded sample at `x0` with error probability `p`; generalizes the
/// remaining interval length to noisy measurements.
pub fn effective_interval_size(x0: f64, label_positive: bool, p: f64) -> f64 {
    if label_positive {
        let denom = x0 * p + (1.0 - x0) * (1.0 - p);
        denom * p.powf(-(p * x0) / denom) * (1.0 - p).powf(-((1.0 - p) * (1.0 - x0)) / denom)
    } else {
        let denom = x0 * (1.0 - p) + (1.0 - x0) * p;
        denom * p.powf(-(p * (1.0 - x0)) / denom) * (1.0 - p).powf(-((1.0 - p) * x0) / denom)
    }
}

/// Per-step contraction factor `t(z)` bounding the error decay of the
/// discretized probabilistic search at noise level `p`.
///
/// Strictly below 1 for `z > 0` and `p < 1/2`.
pub fn convergence_factor(z: f64, p: f64) -> f64 {
    // Algebraic collapse of the alpha-form coefficients:
    // a = (sqrt(p) + sqrt(1-p))^2 / 2, b = (sqrt(1-p) - sqrt(p))^2 / 2,
    // with a + b = 1 and t(z) = a + b (1 - 2z).
    let s = p.sqrt();
    let q = (1.0 - p).sqrt();
    let a = (s + q) * (s + q) / 2.0;
    let b = (q - s) * (q - s) / 2.0;
    a + b * (1.0 - 2.0 * z)
}
