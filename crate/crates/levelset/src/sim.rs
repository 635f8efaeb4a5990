//! Oracles, synthetic fields, Monte Carlo sweeps, and time-cost accounting.
//!
//! Every stochastic operation takes an explicit base seed and derives
//! per-trial generators from it, so sweeps are reproducible bit-for-bit
//! regardless of how many threads execute them.

use crate::error::{Error, Result};
use crate::gp::{classify_grid, gp_fit, gp_fit_1d, gp_predict, KernelSpec, LevelSetEstimate};
use crate::policy::{compute_policy, policy_for_error, Policy};
use crate::posterior::pfhs_search_flip;
use crate::search::{fhs_search_with, step_oracle, StopRule};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Search algorithm selector for sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Fhs,
    Pfhs,
    Qs,
    Pqs,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Algorithm::Fhs => "fhs",
            Algorithm::Pfhs => "pfhs",
            Algorithm::Qs => "qs",
            Algorithm::Pqs => "pqs",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fhs" => Ok(Algorithm::Fhs),
            "pfhs" => Ok(Algorithm::Pfhs),
            "qs" => Ok(Algorithm::Qs),
            "pqs" => Ok(Algorithm::Pqs),
            other => Err(Error::domain(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Parameters shared by every trial of a sweep.
#[derive(Debug, Clone)]
pub struct SweepParams {
    pub lambda: f64,
    pub epsilon: f64,
    /// Constant label-flip probability; 0 gives noiseless labels.
    pub flip_prob: f64,
    /// When set, every trial takes exactly this many samples instead of
    /// stopping at `epsilon`.
    pub n_samples: Option<usize>,
    /// Quantile-search fraction denominator for the QS/PQS baselines; when
    /// absent it is derived from `lambda` so that `1/m = 1/2 - lambda/4`.
    pub qs_m: Option<f64>,
    /// Posterior bins for the probabilistic algorithms.
    pub grid_size: usize,
    pub seed: u64,
    pub sample_time: f64,
    pub travel_time: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            lambda: 0.0,
            epsilon: 0.01,
            flip_prob: 0.0,
            n_samples: None,
            qs_m: None,
            grid_size: 2000,
            seed: 0,
            sample_time: 0.0,
            travel_time: 0.0,
        }
    }
}

/// One search trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub algo: Algorithm,
    pub theta: f64,
    pub lambda: f64,
    pub noise: f64,
    pub samples: usize,
    pub distance: f64,
    /// |estimate - theta|.
    pub error: f64,
    /// Weighted cost: final interval length for noiseless runs, the
    /// four-times-absolute-error proxy for noisy ones, plus lambda times
    /// distance.
    pub cost: f64,
    /// `T_s N + T_t D` for the sweep's time parameters.
    pub time: f64,
}

/// All trials of a sweep plus aggregate accessors.
#[derive(Debug, Clone, Default)]
pub struct CostReport {
    pub records: Vec<TrialRecord>,
}

impl CostReport {
    fn mean_of(&self, f: impl Fn(&TrialRecord) -> f64) -> (f64, f64) {
        let n = self.records.len() as f64;
        if n == 0.0 {
            return (0.0, 0.0);
        }
        let mean = self.records.iter().map(&f).sum::<f64>() / n;
        let var = self
            .records
            .iter()
            .map(|r| {
                let d = f(r) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, (var / n).sqrt())
    }

    pub fn mean_cost(&self) -> (f64, f64) {
        self.mean_of(|r| r.cost)
    }

    pub fn mean_samples(&self) -> (f64, f64) {
        self.mean_of(|r| r.samples as f64)
    }

    pub fn mean_distance(&self) -> (f64, f64) {
        self.mean_of(|r| r.distance)
    }

    pub fn mean_error(&self) -> (f64, f64) {
        self.mean_of(|r| r.error)
    }

    pub fn mean_time(&self) -> (f64, f64) {
        self.mean_of(|r| r.time)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "algo,theta,lambda,noise,samples,distance,error,cost,time")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.algo, r.theta, r.lambda, r.noise, r.samples, r.distance, r.error, r.cost, r.time
            )?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "metric,mean,stderr")?;
        for (name, (mean, se)) in [
            ("samples", self.mean_samples()),
            ("distance", self.mean_distance()),
            ("error", self.mean_error()),
            ("cost", self.mean_cost()),
            ("time", self.mean_time()),
        ] {
            writeln!(w, "{name},{mean},{se}")?;
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic per-trial seed derivation.
pub fn derive_seed(base: u64, theta_index: u64, trial_index: u64) -> u64 {
    splitmix64(base ^ splitmix64(theta_index.wrapping_add(1)) ^ splitmix64(trial_index.wrapping_mul(0x5851f42d4c957f2d)))
}

/// Evenly spaced change-point grid that avoids the degenerate endpoints:
/// `theta_i = i / (count + 1)`, `i = 1..count`.
pub fn theta_grid(count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64 / (count + 1) as f64).collect()
}

/// Constant-fraction quantile-search policy `z = 1/m` at every step.
pub fn qs_policy(m: f64) -> Result<Policy> {
    if !(m >= 2.0) {
        return Err(Error::domain(format!(
            "quantile-search parameter m must be >= 2; got {m}"
        )));
    }
    // The constant fraction 1/m equals the greedy step of lambda = 2 - 4/m,
    // so an empty horizon with that greedy fraction repeats it forever.
    let lambda = 2.0 - 4.0 / m;
    Ok(Policy {
        lambda,
        fractions: Vec::new(),
        greedy_fraction: 1.0 / m,
    })
}

fn policy_for(algo: Algorithm, params: &SweepParams) -> Result<Policy> {
    match algo {
        Algorithm::Fhs | Algorithm::Pfhs => match params.n_samples {
            Some(n) => compute_policy(n, params.lambda),
            None => policy_for_error(params.epsilon, params.lambda, 1.0),
        },
        Algorithm::Qs | Algorithm::Pqs => {
            let m = params
                .qs_m
                .unwrap_or(4.0 / (2.0 - params.lambda));
            qs_policy(m)
        }
    }
}

fn run_trial(
    algo: Algorithm,
    theta: f64,
    policy: &Policy,
    params: &SweepParams,
    seed: u64,
) -> Result<TrialRecord> {
    let stop = match params.n_samples {
        Some(n) => StopRule::FixedSamples(n),
        None => StopRule::ErrorBelow(params.epsilon),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = params.flip_prob;
    let base = step_oracle(theta);
    let oracle = move |x: f64| {
        let y = base(x);
        if p > 0.0 && rng.gen_bool(p) {
            1.0 - y
        } else {
            y
        }
    };

    let (trace, final_interval) = match algo {
        Algorithm::Fhs | Algorithm::Qs => {
            let out = fhs_search_with(oracle, policy, stop, crate::search::DEFAULT_MAX_ITERS)?;
            let interval = out
                .trace
                .steps
                .last()
                .map(|s| (s.upper - s.lower).max(0.0))
                .unwrap_or(1.0);
            (out.trace, interval)
        }
        Algorithm::Pfhs | Algorithm::Pqs => {
            let out = pfhs_search_flip(oracle, policy, p, stop, params.grid_size)?;
            (out.trace, f64::NAN)
        }
    };

    let error = (trace.estimate - theta).abs();
    // Noiseless runs score the exponentiated entropy (= interval length);
    // noisy runs use the four-times-absolute-error proxy.
    let entropy_term = if p == 0.0 && final_interval.is_finite() {
        final_interval
    } else {
        4.0 * error
    };
    let cost = entropy_term + params.lambda * trace.total_distance;
    let time = params.sample_time * trace.sample_count as f64
        + params.travel_time * trace.total_distance;
    Ok(TrialRecord {
        algo,
        theta,
        lambda: params.lambda,
        noise: p,
        samples: trace.sample_count,
        distance: trace.total_distance,
        error,
        cost,
        time,
    })
}

/// Runs `trials` Monte Carlo searches at each change point in `thetas`.
/// Trials execute in parallel with per-trial derived seeds and are merged
/// in index order, so the report is deterministic for a fixed base seed.
pub fn run_sweep(
    algo: Algorithm,
    thetas: &[f64],
    trials: usize,
    params: &SweepParams,
) -> Result<CostReport> {
    if thetas.is_empty() || trials == 0 {
        return Err(Error::domain("sweep needs at least one theta and one trial"));
    }
    let policy = policy_for(algo, params)?;
    let jobs: Vec<(usize, usize)> = (0..thetas.len())
        .flat_map(|ti| (0..trials).map(move |tr| (ti, tr)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(ti, tr)| {
            let seed = derive_seed(params.seed, ti as u64, tr as u64);
            run_trial(algo, thetas[ti], &policy, params, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostReport { records })
}

/// Monte Carlo `(N_lambda, D_lambda)` estimates for a noisy search at each
/// penalty in `lambda_grid`, for use as a `select_lambda` cost table.
pub fn noisy_cost_table(
    lambda_grid: &[f64],
    flip_prob: f64,
    epsilon: f64,
    theta_count: usize,
    trials: usize,
    grid_size: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let thetas = theta_grid(theta_count);
    lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let params = SweepParams {
                lambda,
                epsilon,
                flip_prob,
                grid_size,
                seed: derive_seed(seed, 0xface, i as u64),
                ..SweepParams::default()
            };
            let report = run_sweep(Algorithm::Pfhs, &thetas, trials, &params)?;
            Ok((report.mean_samples().0, report.mean_distance().0))
        })
        .collect()
}

/// Total mission time `T_s N + T_t D`.
pub fn time_cost(samples: f64, distance: f64, sample_time: f64, travel_time: f64) -> Result<f64> {
    if sample_time < 0.0 || travel_time < 0.0 {
        return Err(Error::domain("times must be nonnegative"));
    }
    Ok(sample_time * samples + travel_time * distance)
}

/// A rectangular scalar field with physical metadata, bilinearly
/// interpolated between cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub rows: usize,
    pub cols: usize,
    /// Physical size of one cell edge, in kilometers.
    pub cell_km: f64,
    /// Level-set threshold in field units.
    pub gamma: f64,
    /// Suggested measurement noise standard deviation.
    pub sigma: f64,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl GridField {
    /// Field value at unit-square coordinates (first coordinate along
    /// columns, second along rows).
    pub fn value_at(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = v.clamp(0.0, 1.0);
        let cf = u * (self.cols - 1) as f64;
        let rf = v * (self.rows - 1) as f64;
        let c0 = (cf.floor() as usize).min(self.cols - 1);
        let r0 = (rf.floor() as usize).min(self.rows - 1);
        let c1 = (c0 + 1).min(self.cols - 1);
        let r1 = (r0 + 1).min(self.rows - 1);
        let fu = cf - c0 as f64;
        let fv = rf - r0 as f64;
        let at = |r: usize, c: usize| self.values[r * self.cols + c];
        (1.0 - fv) * ((1.0 - fu) * at(r0, c0) + fu * at(r0, c1))
            + fv * ((1.0 - fu) * at(r1, c0) + fu * at(r1, c1))
    }

    /// Ground-truth classification directly from the stored values.
    pub fn super_level_truth(&self) -> LevelSetEstimate {
        let classification = self.values.iter().map(|&v| v >= self.gamma).collect();
        LevelSetEstimate {
            rows: self.rows,
            cols: self.cols,
            classification,
            boundary_estimate: Vec::new(),
        }
    }

    pub fn save_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},{},{}",
            self.rows, self.cols, self.cell_km, self.gamma, self.sigma
        )?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| self.values[r * self.cols + c].to_string())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_to_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.save_csv(std::io::BufWriter::new(file))?;
        Ok(())
    }
}

/// Loads a grid field from the CSV layout written by [`GridField::save_csv`]:
/// a `rows,cols,cell_km,gamma,sigma` header followed by row-major values.
pub fn load_grid_field(path: &Path) -> Result<GridField> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            row: 1,
            col: 1,
            msg: "empty file".into(),
        })??;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 5 {
        return Err(Error::Parse {
            row: 1,
            col: fields.len(),
            msg: format!("expected 5 header fields, found {}", fields.len()),
        });
    }
    let parse_header = |idx: usize| -> Result<f64> {
        fields[idx].trim().parse::<f64>().map_err(|e| Error::Parse {
            row: 1,
            col: idx + 1,
            msg: e.to_string(),
        })
    };
    let rows = parse_header(0)? as usize;
    let cols = parse_header(1)? as usize;
    let cell_km = parse_header(2)?;
    let gamma = parse_header(3)?;
    let sigma = parse_header(4)?;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: "grid dimensions must be positive".into(),
        });
    }

    let mut values = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let row_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(Error::Parse {
                row: row_no,
                col: cells.len(),
                msg: format!("expected {cols} values, found {}", cells.len()),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            let v = cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                row: row_no,
                col: j + 1,
                msg: e.to_string(),
            })?;
            values.push(v);
        }
    }
    if values.len() != rows * cols {
        return Err(Error::Parse {
            row: values.len() / cols + 2,
            col: 1,
            msg: format!("expected {} values, found {}", rows * cols, values.len()),
        });
    }
    Ok(GridField {
        rows,
        cols,
        cell_km,
        gamma,
        sigma,
        values,
    })
}

/// A generated field together with its exact boundary.
#[derive(Debug, Clone)]
pub struct SyntheticField {
    pub grid: GridField,
    /// True boundary location at each column coordinate.
    pub boundary: Vec<f64>,
}

/// Resolution of the internal boundary polyline.
const BOUNDARY_POINTS: usize = 257;
const BOUNDARY_RETRIES: usize = 64;

/// Generates a synthetic field whose level-set boundary is a draw from a
/// one-dimensional GP prior.
///
/// The boundary sample is centered at 1/2; draws leaving `(0.05, 0.95)` are
/// rejected and resampled with an incremented seed. Field values are signed
/// Euclidean distances to the boundary polyline (positive on the super-level
/// side), observed at `n_field_samples` random locations with additive
/// Gaussian noise of variance `field_noise`, then smoothed onto the grid by
/// two-dimensional GP regression with lengthscale `field_lengthscale`. The
/// returned grid has threshold 0.
pub fn generate_gp_field(
    boundary_kernel: &KernelSpec,
    field_lengthscale: f64,
    grid_dims: (usize, usize),
    n_field_samples: usize,
    field_noise: f64,
    seed: u64,
) -> Result<SyntheticField> {
    boundary_kernel.validate()?;
    let (rows, cols) = grid_dims;
    if rows < 2 || cols < 2 {
        return Err(Error::domain("grid must be at least 2x2"));
    }
    if n_field_samples == 0 {
        return Err(Error::domain("need at least one field sample"));
    }

    let coords: Vec<f64> = (0..BOUNDARY_POINTS)
        .map(|i| i as f64 / (BOUNDARY_POINTS - 1) as f64)
        .collect();
    let mut boundary_curve = None;
    for attempt in 0..BOUNDARY_RETRIES {
        let draw = sample_gp_prior(boundary_kernel, &coords, seed.wrapping_add(attempt as u64))?;
        let curve: Vec<f64> = draw.iter().map(|g| 0.5 + g).collect();
        if curve.iter().all(|&b| (0.05..=0.95).contains(&b)) {
            boundary_curve = Some(curve);
            break;
        }
    }
    let curve = boundary_curve.ok_or_else(|| {
        Error::domain("boundary sampling kept exiting the unit square; reduce the kernel variance")
    })?;

    let signed_distance = |u: f64, v: f64| -> f64 {
        let mut best = f64::INFINITY;
        for (bu, bv) in coords.iter().zip(&curve) {
            let d = (u - bu) * (u - bu) + (v - bv) * (v - bv);
            if d < best {
                best = d;
            }
        }
        let idx = ((u * (BOUNDARY_POINTS - 1) as f64).round() as usize).min(BOUNDARY_POINTS - 1);
        let sign = if v < curve[idx] { 1.0 } else { -1.0 };
        sign * best.sqrt()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5eed_f1e1d));
    let noise_sd = field_noise.sqrt();
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n_field_samples);
    let mut ys: Vec<f64> = Vec::with_capacity(n_field_samples);
    for _ in 0..n_field_samples {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        let noise: f64 = rng.sample(StandardNormal);
        xs.push(vec![u, v]);
        ys.push(signed_distance(u, v) + noise_sd * noise);
    }

    let field_kernel = KernelSpec::new(field_lengthscale, 1.0, field_noise.max(1e-8));
    let model = gp_fit(xs, ys, field_kernel)?;

    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let v = r as f64 / (rows - 1) as f64;
        for c in 0..cols {
            let u = c as f64 / (cols - 1) as f64;
            values.push(gp_predict(&model, &[u, v]).0);
        }
    }

    let boundary: Vec<f64> = (0..cols)
        .map(|c| {
            let u = c as f64 / (cols - 1) as f64;
            interp_curve(&coords, &curve, u)
        })
        .collect();

    Ok(SyntheticField {
        grid: GridField {
            rows,
            cols,
            cell_km: 1.0,
            gamma: 0.0,
            sigma: 0.0,
            values,
        },
        boundary,
    })
}

fn interp_curve(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let pos = x.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = (pos.floor() as usize).min(n - 2);
    let frac = pos - i as f64;
    ys[i] * (1.0 - frac) + ys[i + 1] * frac
}

/// Draws one sample path from a zero-mean GP prior at the given coordinates.
fn sample_gp_prior(kernel: &KernelSpec, coords: &[f64], seed: u64) -> Result<Vec<f64>> {
    let n = coords.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&[coords[i]], &[coords[j]]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += 1e-8;
    }
    let chol = Cholesky::new(k).ok_or(Error::Factorization)?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    let std: DVector<f64> =
        DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((chol.l() * std).iter().copied().collect())
}

/// Symmetric-difference error of a transect run against a ground-truth
/// classification.
pub fn level_set_summary(
    truth: &LevelSetEstimate,
    result: &crate::gp::TransectLse,
) -> Result<f64> {
    crate::gp::level_set_error(truth, &result.estimate)
}

/// True-boundary classification of a synthetic field's grid.
pub fn synthetic_truth(field: &SyntheticField) -> LevelSetEstimate {
    let cols = field.grid.cols;
    classify_grid((field.grid.rows, cols), |u| {
        let c = (u * (cols - 1) as f64).round() as usize;
        field.boundary[c.min(cols - 1)]
    })
}

/// Measurement oracle over a grid field: bilinear field value plus Gaussian
/// noise of standard deviation `sigma`.
pub fn field_oracle(
    grid: GridField,
    sigma: f64,
    seed: u64,
) -> impl FnMut(f64, f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x0bac1e));
    move |u, v| {
        let noise: f64 = rng.sample(StandardNormal);
        grid.value_at(u, v) + sigma * noise
    }
}

/// Smooths scattered 1-D observations with a GP; exposed for CLI plumbing.
pub fn smooth_boundary(
    xs: &[f64],
    ys: &[f64],
    kernel: KernelSpec,
) -> Result<impl Fn(f64) -> f64> {
    let offset = if ys.is_empty() {
        0.0
    } else {
        ys.iter().sum::<f64>() / ys.len() as f64
    };
    let centered: Vec<f64> = ys.iter().map(|y| y - offset).collect();
    let model = gp_fit_1d(xs, &centered, kernel)?;
    Ok(move |x: f64| crate::gp::gp_predict_1d(&model, x).0 + offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::expected_interval_length;
    use tempfile::tempdir;

    #[test]
    fn qs_policy_examples() {
        let bisect = qs_policy(2.0).unwrap();
        assert_eq!(bisect.greedy_fraction, 0.5);
        assert_eq!(bisect.lambda, 0.0);

        let lambda = 0.8;
        let m = 4.0 / (2.0 - lambda);
        let qs = qs_policy(m).unwrap();
        let one_step = compute_policy(1, lambda).unwrap();
        assert!((qs.greedy_fraction - one_step.fractions[0]).abs() < 1e-12);

        let quarter = qs_policy(4.0).unwrap();
        assert!((crate::policy::xi(quarter.greedy_fraction) - 0.625).abs() < 1e-12);

        assert!(qs_policy(1.0).is_err());
        assert!(qs_policy(0.5).is_err());
    }

    #[test]
    fn bisection_sweep_sample_count() {
        let params = SweepParams {
            lambda: 0.0,
            epsilon: 2f64.powi(-10),
            seed: 1,
            ..SweepParams::default()
        };
        let report = run_sweep(Algorithm::Fhs, &theta_grid(20), 5, &params).unwrap();
        for r in &report.records {
            assert_eq!(r.samples, 10);
        }
    }

    #[test]
    fn sweeps_are_reproducible() {
        let params = SweepParams {
            lambda: 0.5,
            epsilon: 0.01,
            flip_prob: 0.1,
            grid_size: 500,
            seed: 42,
            n_samples: Some(10),
            ..SweepParams::default()
        };
        let thetas = theta_grid(5);
        let a = run_sweep(Algorithm::Pfhs, &thetas, 4, &params).unwrap();
        let b = run_sweep(Algorithm::Pfhs, &thetas, 4, &params).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.error, y.error);
            assert_eq!(x.distance, y.distance);
        }
    }

    #[test]
    fn qs_and_fhs_agree_at_lambda_zero() {
        let params = SweepParams {
            lambda: 0.0,
            epsilon: 0.01,
            seed: 9,
            ..SweepParams::default()
        };
        let thetas = theta_grid(10);
        let fhs = run_sweep(Algorithm::Fhs, &thetas, 3, &params).unwrap();
        let qs_params = SweepParams {
            qs_m: Some(2.0),
            ..params
        };
        let qs = run_sweep(Algorithm::Qs, &thetas, 3, &qs_params).unwrap();
        for (a, b) in fhs.records.iter().zip(&qs.records) {
            assert_eq!(a.samples, b.samples);
            assert_eq!(a.distance, b.distance);
        }
    }

    #[test]
    fn noiseless_sweep_matches_analytic_mean_length() {
        let n = 6;
        let lambda = 0.9;
        let policy = compute_policy(n, lambda).unwrap();
        let expect = expected_interval_length(&policy, 1.0);
        let params = SweepParams {
            lambda,
            n_samples: Some(n),
            seed: 3,
            ..SweepParams::default()
        };
        let report = run_sweep(Algorithm::Fhs, &theta_grid(200), 50, &params).unwrap();
        // cost = interval + lambda * distance, so recover the interval term.
        let mean_interval = report
            .records
            .iter()
            .map(|r| r.cost - lambda * r.distance)
            .sum::<f64>()
            / report.records.len() as f64;
        assert!(
            (mean_interval - expect).abs() < 0.01,
            "{mean_interval} vs {expect}"
        );
    }

    #[test]
    fn time_cost_examples() {
        assert_eq!(time_cost(10.0, 1.5, 100.0, 0.0).unwrap(), 1000.0);
        assert_eq!(time_cost(0.0, 0.0, 8.0, 30.0).unwrap(), 0.0);
        assert!(time_cost(1.0, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn grid_field_round_trip() {
        let field = GridField {
            rows: 2,
            cols: 2,
            cell_km: 5.55,
            gamma: 100.0,
            sigma: (400.0 / 12.0f64).sqrt(),
            values: vec![120.0, 90.0, 80.0, 110.0],
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("field.csv");
        field.save_to_path(&path).unwrap();
        let loaded = load_grid_field(&path).unwrap();
        assert_eq!(field, loaded);
    }

    #[test]
    fn grid_field_parse_errors_carry_position() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "2,2,1,0,0\n1.0,2.0\n3.0,oops\n").unwrap();
        match load_grid_field(&path) {
            Err(Error::Parse { row, col, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(col, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "2,2,1,0,0\n1.0,2.0,3.0\n4.0,5.0\n").unwrap();
        assert!(matches!(
            load_grid_field(&ragged),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn constant_field_above_threshold_is_all_super() {
        let field = GridField {
            rows: 3,
            cols: 4,
            cell_km: 1.0,
            gamma: 50.0,
            sigma: 0.0,
            values: vec![60.0; 12],
        };
        let truth = field.super_level_truth();
        assert!(truth.classification.iter().all(|&b| b));
    }

    #[test]
    fn generated_fields_are_deterministic() {
        let kernel = KernelSpec::new(0.6, 0.0625, 0.0);
        let a = generate_gp_field(&kernel, 0.1, (11, 10), 120, 1e-4, 7).unwrap();
        let b = generate_gp_field(&kernel, 0.1, (11, 10), 120, 1e-4, 7).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.boundary, b.boundary);
    }

    #[test]
    fn generated_boundary_stays_inside_unit_square() {
        let kernel = KernelSpec::new(0.6, 0.0625, 0.0);
        for seed in 0..10 {
            let f = generate_gp_field(&kernel, 0.1, (11, 10), 100, 1e-4, seed).unwrap();
            for &b in &f.boundary {
                assert!((0.0..1.0).contains(&b));
            }
        }
    }

    #[test]
    fn zero_noise_field_crossing_tracks_boundary() {
        let kernel = KernelSpec::new(0.6, 0.0625, 0.0);
        let f = generate_gp_field(&kernel, 0.1, (21, 20), 500, 0.0, 3).unwrap();
        // At each column the field's sign change along rows should fall
        // within one cell of the true boundary.
        let cell = 1.0 / (f.grid.rows - 1) as f64;
        for c in 0..f.grid.cols {
            let mut crossing = None;
            for r in 0..f.grid.rows - 1 {
                let v0 = f.grid.values[r * f.grid.cols + c];
                let v1 = f.grid.values[(r + 1) * f.grid.cols + c];
                if v0 >= 0.0 && v1 < 0.0 {
                    crossing = Some(r as f64 * cell);
                    break;
                }
            }
            let crossing = crossing.expect("field should change sign along each column");
            assert!(
                (crossing - f.boundary[c]).abs() <= 2.0 * cell,
                "col {c}: crossing {crossing} vs boundary {}",
                f.boundary[c]
            );
        }
    }

    #[test]
    fn unknown_algorithm_string_is_rejected() {
        assert!("truvar".parse::<Algorithm>().is_err());
        assert_eq!("pfhs".parse::<Algorithm>().unwrap(), Algorithm::Pfhs);
    }
}
