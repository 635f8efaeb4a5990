//! Gaussian-process regression over change-point estimates and the
//! transect-based two-dimensional level set estimator.
//!
//! The regression core is dimension-agnostic (points are coordinate slices)
//! so the same code fits the one-dimensional boundary model and the
//! two-dimensional synthetic fields used by the simulation harness.

use crate::error::{Error, Result};
use crate::policy::{policy_for_error, Policy};
use crate::posterior::{
    effective_interval_size, error_probability, pfhs_run, Measurement, NoiseModel, PfhsState,
    Posterior, MAX_ERROR_PROB,
};
use crate::search::{SearchOutcome, StopRule};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Jitter added to kernel diagonals before factorization.
pub const KERNEL_JITTER: f64 = 1e-10;

/// Radial-basis-function kernel hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct KernelSpec {
    /// Lengthscale, in domain units.
    pub lengthscale: f64,
    /// Signal variance.
    pub variance: f64,
    /// Observation noise variance added to the kernel diagonal.
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn new(lengthscale: f64, variance: f64, noise_variance: f64) -> Self {
        KernelSpec {
            lengthscale,
            variance,
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0) || !(self.variance > 0.0) || self.noise_variance < 0.0 {
            return Err(Error::domain(
                "kernel requires lengthscale > 0, variance > 0, noise_variance >= 0",
            ));
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.variance * (-0.5 * sq / (self.lengthscale * self.lengthscale)).exp()
    }
}

/// A fitted GP: training data plus the Cholesky factor of `K + sigma^2 I`.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub kernel: KernelSpec,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

/// Fits a GP to the given points, factorizing `K + sigma^2 I` once (cubic in
/// the number of points). An empty training set yields the prior.
pub fn gp_fit(x: Vec<Vec<f64>>, y: Vec<f64>, kernel: KernelSpec) -> Result<GpModel> {
    kernel.validate()?;
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} inputs for {} targets",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n == 0 {
        return Ok(GpModel {
            kernel,
            train_x: x,
            train_y: y,
            chol: None,
            alpha: DVector::zeros(0),
        });
    }
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += kernel.noise_variance + KERNEL_JITTER;
    }
    let chol = Cholesky::new(k).ok_or(Error::Factorization)?;
    let alpha = chol.solve(&DVector::from_column_slice(&y));
    Ok(GpModel {
        kernel,
        train_x: x,
        train_y: y,
        chol: Some(chol),
        alpha,
    })
}

/// Convenience wrapper for one-dimensional inputs.
pub fn gp_fit_1d(x: &[f64], y: &[f64], kernel: KernelSpec) -> Result<GpModel> {
    gp_fit(x.iter().map(|&v| vec![v]).collect(), y.to_vec(), kernel)
}

/// Posterior mean and variance at a query point. The variance excludes
/// observation noise and is clamped to be nonnegative.
pub fn gp_predict(model: &GpModel, x: &[f64]) -> (f64, f64) {
    let prior_var = model.kernel.variance;
    let Some(chol) = &model.chol else {
        return (0.0, prior_var);
    };
    let k_star = DVector::from_iterator(
        model.train_x.len(),
        model.train_x.iter().map(|xi| model.kernel.eval(x, xi)),
    );
    let mean = k_star.dot(&model.alpha);
    let v = chol.solve(&k_star);
    let var = prior_var - k_star.dot(&v);
    (mean, var.max(0.0))
}

pub fn gp_predict_1d(model: &GpModel, x: f64) -> (f64, f64) {
    gp_predict(model, &[x])
}

impl GpModel {
    pub fn train_len(&self) -> usize {
        self.train_x.len()
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }
}

/// Per-grid-cell super/sub-level classification with the boundary values it
/// was derived from.
#[derive(Debug, Clone)]
pub struct LevelSetEstimate {
    pub rows: usize,
    pub cols: usize,
    /// Row-major flags; `true` marks a super-level cell.
    pub classification: Vec<bool>,
    /// Predicted boundary location at each column coordinate.
    pub boundary_estimate: Vec<f64>,
}

/// Cell coordinates on the unit square: columns index the first coordinate
/// (along which the boundary is a function), rows the second.
fn cell_coord(index: usize, count: usize) -> f64 {
    if count <= 1 {
        0.0
    } else {
        index as f64 / (count - 1) as f64
    }
}

/// Classifies a grid against a boundary function of the first coordinate.
/// A cell is super-level iff its second coordinate lies strictly below the
/// boundary value at its first coordinate.
pub fn classify_grid(
    grid_dims: (usize, usize),
    boundary: impl Fn(f64) -> f64,
) -> LevelSetEstimate {
    let (rows, cols) = grid_dims;
    let boundary_estimate: Vec<f64> = (0..cols).map(|c| boundary(cell_coord(c, cols))).collect();
    let mut classification = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let v = cell_coord(r, rows);
        for b in &boundary_estimate {
            classification.push(v < *b);
        }
    }
    LevelSetEstimate {
        rows,
        cols,
        classification,
        boundary_estimate,
    }
}

impl LevelSetEstimate {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,super_level")?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                writeln!(w, "{},{},{}", r, c, self.classification[r * self.cols + c] as u8)?;
            }
        }
        Ok(())
    }
}

/// Fraction of grid cells on which the two classifications disagree
/// (symmetric difference over the total cell count).
pub fn level_set_error(truth: &LevelSetEstimate, estimate: &LevelSetEstimate) -> Result<f64> {
    if truth.rows != estimate.rows || truth.cols != estimate.cols {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            truth.rows, truth.cols, estimate.rows, estimate.cols
        )));
    }
    let mismatches = truth
        .classification
        .iter()
        .zip(&estimate.classification)
        .filter(|(a, b)| a != b)
        .count();
    Ok(mismatches as f64 / (truth.rows * truth.cols) as f64)
}

/// Record of one transect search.
#[derive(Debug)]
pub struct TransectRecord {
    /// First-coordinate location of the transect.
    pub coord: f64,
    /// Change-point estimate along the transect.
    pub estimate: f64,
    /// Initial sample taken at the previous transect's estimate, if any.
    pub initial_sample: Option<(f64, f64)>,
    pub outcome: SearchOutcome,
}

/// Aggregate result of the transect-based level set estimator.
#[derive(Debug)]
pub struct TransectLse {
    pub estimate: LevelSetEstimate,
    pub boundary_model: GpModel,
    pub transects: Vec<TransectRecord>,
    /// Path length including straight-line hops between transects.
    pub total_distance: f64,
    pub total_samples: usize,
    /// False if any per-transect search hit its iteration cap.
    pub converged: bool,
}

/// Discretization and safety tunables for [`transect_lse`].
#[derive(Debug, Clone, Copy)]
pub struct TransectConfig {
    /// Posterior bins per transect search.
    pub grid_size: usize,
    /// Iteration cap per transect search.
    pub max_iters: usize,
}

impl Default for TransectConfig {
    fn default() -> Self {
        TransectConfig {
            grid_size: crate::posterior::DEFAULT_GRID_SIZE,
            max_iters: 500,
        }
    }
}

/// Estimates a two-dimensional level set by probabilistic change-point
/// searches along equally spaced transects.
///
/// Transects sit at first-coordinate positions `i / (n_transects - 1)`. The
/// first search starts from 0 with a unit interval; each later transect takes
/// its initial sample at the previous transect's estimate, converts that
/// sample into an effective interval size, and sizes its policy accordingly.
/// Change-point estimates are then smoothed by a GP over the transect
/// coordinate (observation noise `(stop_error / 2)^2`) and the grid is
/// classified by the posterior-mean boundary.
pub fn transect_lse(
    mut field_oracle: impl FnMut(f64, f64) -> f64,
    noise: &NoiseModel,
    n_transects: usize,
    transect_stop_error: f64,
    lambda: f64,
    boundary_kernel: KernelSpec,
    grid_dims: (usize, usize),
    config: TransectConfig,
) -> Result<TransectLse> {
    if n_transects < 2 {
        return Err(Error::domain("at least 2 transects are required"));
    }
    if !(transect_stop_error > 0.0) {
        return Err(Error::domain("transect_stop_error must be positive"));
    }
    boundary_kernel.validate()?;

    let mut transects: Vec<TransectRecord> = Vec::with_capacity(n_transects);
    let mut total_distance = 0.0;
    let mut total_samples = 0;
    let mut converged = true;
    // (coord, along-transect position) of the last sample taken.
    let mut last_position: Option<(f64, f64)> = None;

    for i in 0..n_transects {
        let coord = cell_coord(i, n_transects);
        let noise_local = *noise;

        let (state, policy, initial_sample) = match transects.last() {
            None => (
                PfhsState::fresh(config.grid_size),
                policy_for_error(transect_stop_error, lambda, 1.0)?,
                None,
            ),
            Some(prev) => {
                let x0 = prev.estimate.clamp(1e-6, 1.0 - 1e-6);
                let raw = field_oracle(coord, x0);
                if !raw.is_finite() {
                    return Err(Error::Contract(format!(
                        "field oracle returned {raw} at ({coord}, {x0})"
                    )));
                }
                let label = raw > noise_local.threshold;
                let p = error_probability(raw, &noise_local).min(MAX_ERROR_PROB);
                let mut posterior = Posterior::uniform(config.grid_size);
                posterior.update(x0, label, p, posterior.cdf_at(x0))?;
                let effective = effective_interval_size(x0, label, p).min(1.0);
                let policy = policy_for_error(transect_stop_error, lambda, effective)?;
                if let Some((pc, pv)) = last_position {
                    total_distance += ((coord - pc).powi(2) + (x0 - pv).powi(2)).sqrt();
                }
                total_samples += 1;
                (
                    PfhsState {
                        posterior,
                        location: x0,
                    },
                    policy,
                    Some((x0, raw)),
                )
            }
        };

        let outcome = run_transect_search(
            &mut field_oracle,
            coord,
            &noise_local,
            &policy,
            transect_stop_error,
            config.max_iters,
            state,
        )?;
        converged &= outcome.converged;
        total_samples += outcome.trace.sample_count;
        total_distance += outcome.trace.total_distance;
        let last_v = outcome
            .trace
            .steps
            .last()
            .map(|s| s.x)
            .or(initial_sample.map(|(x0, _)| x0))
            .unwrap_or(0.0);
        last_position = Some((coord, last_v));
        transects.push(TransectRecord {
            coord,
            estimate: outcome.trace.estimate,
            initial_sample,
            outcome,
        });
    }

    // Boundary GP over (transect coordinate, change-point estimate), centered
    // on the mean estimate since the regression prior has mean zero.
    let xs: Vec<f64> = transects.iter().map(|t| t.coord).collect();
    let ys: Vec<f64> = transects.iter().map(|t| t.estimate).collect();
    let offset = ys.iter().sum::<f64>() / ys.len() as f64;
    let centered: Vec<f64> = ys.iter().map(|y| y - offset).collect();
    let mut kernel = boundary_kernel;
    kernel.noise_variance = (transect_stop_error / 2.0).powi(2);
    let model = gp_fit_1d(&xs, &centered, kernel)?;

    let estimate = classify_grid(grid_dims, |u| gp_predict_1d(&model, u).0 + offset);

    Ok(TransectLse {
        estimate,
        boundary_model: model,
        transects,
        total_distance,
        total_samples,
        converged,
    })
}

fn run_transect_search(
    field_oracle: &mut impl FnMut(f64, f64) -> f64,
    coord: f64,
    noise: &NoiseModel,
    policy: &Policy,
    stop_error: f64,
    max_iters: usize,
    state: PfhsState,
) -> Result<SearchOutcome> {
    let noise = *noise;
    pfhs_run(
        |v| {
            let raw = field_oracle(coord, v);
            if !raw.is_finite() {
                return Err(Error::Contract(format!(
                    "field oracle returned {raw} at ({coord}, {v})"
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
        max_iters,
        state,
    )
}
