//! `lse` — distance-penalized change-point search and GP level set tools.
//!
//! Every subcommand writes its CSV artifacts plus a `manifest.txt` echoing
//! the full parameter set into `<out-root>/<subcommand>-<timestamp>/`, and
//! prints a one-line summary. Runs are deterministic given `--seed`.

use clap::{Args, Parser, Subcommand};
use levelset::error::Error;
use levelset::gp::{transect_lse, KernelSpec, TransectConfig};
use levelset::policy::{
    compute_policy, diagnostics, policy_for_error, select_lambda, Policy,
};
use levelset::posterior::{pfhs_search, NoiseModel, DEFAULT_GRID_SIZE};
use levelset::search::{fhs_search, step_oracle};
use levelset::sim::{
    field_oracle, generate_gp_field, level_set_summary, load_grid_field, noisy_cost_table,
    run_sweep, synthetic_truth, theta_grid, time_cost, Algorithm, SweepParams,
};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

const OUT_ENV: &str = "LSE_OUT";

#[derive(Parser)]
#[command(name = "lse", version, about = "Distance-penalized change-point search and transect-based level set estimation")]
struct Cli {
    /// Output root directory; each run creates a timestamped subdirectory
    /// inside it. Defaults to $LSE_OUT, then ./lse-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute an optimal step-fraction schedule and its expected cost.
    Policy(PolicyArgs),
    /// Run a single change-point search and record its trace.
    Search(SearchArgs),
    /// Monte Carlo sweep of searches over a change-point grid.
    Sweep(SweepArgs),
    /// Choose the distance penalty minimizing total mission time.
    SelectLambda(SelectLambdaArgs),
    /// Generate a synthetic scalar field with a GP-drawn boundary.
    Genfield(GenfieldArgs),
    /// Estimate a field's level set by searches along transects.
    Gplse(GplseArgs),
}

#[derive(Args)]
struct PolicyArgs {
    /// Number of samples in the schedule (mutually exclusive with --epsilon).
    #[arg(long, conflicts_with = "epsilon")]
    n: Option<usize>,
    /// Distance penalty per unit travel, in [0, 2).
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Target expected interval length (unit-interval fraction).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Initial interval length (unit-interval fraction).
    #[arg(long, default_value_t = 1.0)]
    length: f64,
}

#[derive(Args)]
struct SearchArgs {
    /// True change point in (0, 1).
    #[arg(long)]
    theta: f64,
    /// Distance penalty per unit travel, in [0, 2).
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Stop error: interval length (noiseless) or posterior expected
    /// absolute error (noisy), unit-interval fraction.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Measurement noise standard deviation in field units; 0 runs the
    /// noiseless executor.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Level threshold in field units (noisy executor only).
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Posterior bins (noisy executor only).
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid_size: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Search algorithm: fhs, pfhs, qs, or pqs.
    #[arg(long, default_value = "fhs")]
    algo: String,
    /// Distance penalty per unit travel, in [0, 2).
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Stop error (unit-interval fraction).
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Constant label-flip probability in [0, 0.5).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Fixed sample budget; overrides --epsilon stopping.
    #[arg(long)]
    samples: Option<usize>,
    /// Quantile-search fraction denominator m (qs/pqs only; default from lambda).
    #[arg(long)]
    qs_m: Option<f64>,
    /// Number of change-point grid values.
    #[arg(long, default_value_t = 100)]
    thetas: usize,
    /// Monte Carlo trials per change point.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Shrink to a 20x20 sweep for quick runs.
    #[arg(long)]
    fast: bool,
    /// Posterior bins (probabilistic algorithms).
    #[arg(long, default_value_t = 2000)]
    grid_size: usize,
    /// Base random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time per sample, in seconds.
    #[arg(long, default_value_t = 0.0)]
    ts: f64,
    /// Time per unit distance traveled, in seconds.
    #[arg(long, default_value_t = 0.0)]
    tt: f64,
}

#[derive(Args)]
struct SelectLambdaArgs {
    /// Time per sample, in seconds.
    #[arg(long)]
    ts: f64,
    /// Travel-to-sample time ratio T_t / T_s (per unit distance).
    #[arg(long)]
    ratio: f64,
    /// Target stop error (unit-interval fraction).
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Constant label-flip probability; > 0 scores candidates by Monte Carlo.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Number of evenly spaced candidate penalties in [0, 1.9].
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Change points and trials per candidate for the noisy table.
    #[arg(long, default_value_t = 20)]
    thetas: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Posterior bins for the noisy table.
    #[arg(long, default_value_t = 2000)]
    grid_size: usize,
    /// Base random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenfieldArgs {
    /// Grid rows.
    #[arg(long, default_value_t = 21)]
    rows: usize,
    /// Grid columns.
    #[arg(long, default_value_t = 20)]
    cols: usize,
    /// Boundary GP lengthscale (unit-square fraction).
    #[arg(long, default_value_t = 0.6)]
    lengthscale: f64,
    /// Boundary GP variance.
    #[arg(long, default_value_t = 0.0625)]
    variance: f64,
    /// Field smoothing lengthscale (unit-square fraction).
    #[arg(long, default_value_t = 0.1)]
    field_lengthscale: f64,
    /// Number of noisy field observations used for smoothing.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// Field observation noise variance (field units squared).
    #[arg(long, default_value_t = 1e-4)]
    noise_var: f64,
    /// Base random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GplseArgs {
    /// Field CSV to load; when absent a synthetic field is generated.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Number of transects.
    #[arg(long, default_value_t = 5)]
    transects: usize,
    /// Per-transect stop error (unit-interval fraction).
    #[arg(long, default_value_t = 0.03)]
    stop_error: f64,
    /// Distance penalty per unit travel, in [0, 2).
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Measurement noise standard deviation in field units; defaults to the
    /// field file's stored sigma.
    #[arg(long)]
    noise: Option<f64>,
    /// Boundary GP lengthscale / variance for smoothing the estimates.
    #[arg(long, default_value_t = 0.6)]
    boundary_lengthscale: f64,
    #[arg(long, default_value_t = 0.0625)]
    boundary_variance: f64,
    /// Time per sample, in seconds.
    #[arg(long, default_value_t = 0.0)]
    ts: f64,
    /// Time per unit distance traveled, in seconds.
    #[arg(long, default_value_t = 0.0)]
    tt: f64,
    /// Base random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            std::process::exit(3);
        }
    }
    let out_root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("lse-out"));
    if let Err(e) = run(cli.command, &out_root) {
        eprintln!("error: {e}");
        let code = match e {
            Error::Domain(_) | Error::Contract(_) | Error::Dimension(_) | Error::Parse { .. } => 2,
            Error::Timeout { .. } | Error::Factorization | Error::Io(_) => 3,
        };
        std::process::exit(code);
    }
}

fn run(cmd: Command, out_root: &Path) -> Result<(), Error> {
    match cmd {
        Command::Policy(a) => cmd_policy(a, out_root),
        Command::Search(a) => cmd_search(a, out_root),
        Command::Sweep(a) => cmd_sweep(a, out_root),
        Command::SelectLambda(a) => cmd_select_lambda(a, out_root),
        Command::Genfield(a) => cmd_genfield(a, out_root),
        Command::Gplse(a) => cmd_gplse(a, out_root),
    }
}

fn make_run_dir(out_root: &Path, subcommand: &str) -> Result<PathBuf, Error> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let dir = out_root.join(format!("{subcommand}-{stamp}"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_manifest(dir: &Path, subcommand: &str, params: &[(&str, String)]) -> Result<(), Error> {
    let mut f = BufWriter::new(File::create(dir.join("manifest.txt"))?);
    writeln!(f, "subcommand: {subcommand}")?;
    for (k, v) in params {
        writeln!(f, "{k}: {v}")?;
    }
    Ok(())
}

fn print_policy(policy: &Policy, length: f64) {
    let diag = diagnostics(policy, length);
    println!("lambda = {}", policy.lambda);
    println!("steps  = {}", policy.n_steps());
    println!("step,fraction,xi,rho");
    for (i, &z) in policy.fractions.iter().enumerate() {
        println!("{},{},{},{}", i + 1, z, diag.xi[i], diag.rho[i]);
    }
    println!(
        "expected: length = {}, distance = {}, cost = {}",
        diag.expected_length, diag.expected_distance, diag.expected_cost
    );
}

fn cmd_policy(a: PolicyArgs, out_root: &Path) -> Result<(), Error> {
    let policy = match (a.n, a.epsilon) {
        (Some(n), None) => compute_policy(n, a.lambda)?,
        (None, Some(eps)) => policy_for_error(eps, a.lambda, a.length)?,
        _ => {
            return Err(Error::domain(
                "provide exactly one of --n or --epsilon",
            ))
        }
    };
    print_policy(&policy, a.length);

    let dir = make_run_dir(out_root, "policy")?;
    let diag = diagnostics(&policy, a.length);
    let mut f = BufWriter::new(File::create(dir.join("policy.csv"))?);
    writeln!(f, "step,fraction,xi,rho")?;
    for (i, &z) in policy.fractions.iter().enumerate() {
        writeln!(f, "{},{},{},{}", i + 1, z, diag.xi[i], diag.rho[i])?;
    }
    drop(f);
    write_manifest(
        &dir,
        "policy",
        &[
            ("n", format!("{:?}", a.n)),
            ("lambda", a.lambda.to_string()),
            ("epsilon", format!("{:?}", a.epsilon)),
            ("length", a.length.to_string()),
        ],
    )?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_search(a: SearchArgs, out_root: &Path) -> Result<(), Error> {
    if !(0.0 < a.theta && a.theta < 1.0) {
        return Err(Error::domain("theta must lie strictly inside (0, 1)"));
    }
    let policy = policy_for_error(a.epsilon, a.lambda, 1.0)?;
    let trace = if a.noise == 0.0 {
        fhs_search(step_oracle(a.theta), &policy, a.epsilon)?
    } else {
        let noise = NoiseModel {
            sigma: a.noise,
            threshold: a.gamma,
        };
        // Signed-distance oracle: the positive side lies below theta.
        let oracle = move |x: f64| a.gamma + (a.theta - x);
        let outcome = pfhs_search(oracle, &policy, &noise, a.epsilon, a.grid_size)?;
        if !outcome.converged {
            return Err(Error::Timeout {
                max_iters: levelset::search::DEFAULT_MAX_ITERS,
            });
        }
        outcome.trace
    };

    let dir = make_run_dir(out_root, "search")?;
    trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
    write_manifest(
        &dir,
        "search",
        &[
            ("theta", a.theta.to_string()),
            ("lambda", a.lambda.to_string()),
            ("epsilon", a.epsilon.to_string()),
            ("noise", a.noise.to_string()),
            ("gamma", a.gamma.to_string()),
            ("grid_size", a.grid_size.to_string()),
        ],
    )?;
    println!(
        "estimate = {}, samples = {}, distance = {}, error = {}",
        trace.estimate,
        trace.sample_count,
        trace.total_distance,
        (trace.estimate - a.theta).abs()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(a: SweepArgs, out_root: &Path) -> Result<(), Error> {
    let algo: Algorithm = a.algo.parse()?;
    let (theta_count, trials) = if a.fast {
        (20, 20)
    } else {
        (a.thetas, a.trials)
    };
    let params = SweepParams {
        lambda: a.lambda,
        epsilon: a.epsilon,
        flip_prob: a.noise,
        n_samples: a.samples,
        qs_m: a.qs_m,
        grid_size: a.grid_size,
        seed: a.seed,
        sample_time: a.ts,
        travel_time: a.tt,
    };
    let report = run_sweep(algo, &theta_grid(theta_count), trials, &params)?;

    let dir = make_run_dir(out_root, "sweep")?;
    report.write_csv(BufWriter::new(File::create(dir.join("trials.csv"))?))?;
    report.write_summary(BufWriter::new(File::create(dir.join("trials_summary.csv"))?))?;
    write_manifest(
        &dir,
        "sweep",
        &[
            ("algo", a.algo.clone()),
            ("lambda", a.lambda.to_string()),
            ("epsilon", a.epsilon.to_string()),
            ("noise", a.noise.to_string()),
            ("samples", format!("{:?}", a.samples)),
            ("qs_m", format!("{:?}", a.qs_m)),
            ("thetas", theta_count.to_string()),
            ("trials", trials.to_string()),
            ("grid_size", a.grid_size.to_string()),
            ("seed", a.seed.to_string()),
            ("ts", a.ts.to_string()),
            ("tt", a.tt.to_string()),
        ],
    )?;
    let (samples, _) = report.mean_samples();
    let (distance, _) = report.mean_distance();
    let (cost, _) = report.mean_cost();
    println!(
        "mean samples = {samples}, mean distance = {distance}, mean cost = {cost}"
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_select_lambda(a: SelectLambdaArgs, out_root: &Path) -> Result<(), Error> {
    if a.grid == 0 {
        return Err(Error::domain("lambda grid must be nonempty"));
    }
    let lambda_grid: Vec<f64> = (0..a.grid)
        .map(|i| 1.9 * i as f64 / (a.grid.max(2) - 1) as f64)
        .collect();
    let tt = a.ts * a.ratio;
    let table = if a.noise > 0.0 {
        Some(noisy_cost_table(
            &lambda_grid,
            a.noise,
            a.epsilon,
            a.thetas,
            a.trials,
            a.grid_size,
            a.seed,
        )?)
    } else {
        None
    };
    let (lambda_star, policy) =
        select_lambda(a.ts, tt, a.epsilon, 1.0, &lambda_grid, table.as_deref())?;

    let dir = make_run_dir(out_root, "select-lambda")?;
    let mut f = BufWriter::new(File::create(dir.join("selection.csv"))?);
    writeln!(f, "lambda,samples,distance,time")?;
    for (i, &lam) in lambda_grid.iter().enumerate() {
        let (n, d) = match &table {
            Some(t) => t[i],
            None => {
                let p = policy_for_error(a.epsilon, lam, 1.0)?;
                (
                    p.n_steps() as f64,
                    levelset::policy::expected_distance(&p, 1.0),
                )
            }
        };
        writeln!(f, "{},{},{},{}", lam, n, d, time_cost(n, d, a.ts, tt)?)?;
    }
    drop(f);
    write_manifest(
        &dir,
        "select-lambda",
        &[
            ("ts", a.ts.to_string()),
            ("ratio", a.ratio.to_string()),
            ("epsilon", a.epsilon.to_string()),
            ("noise", a.noise.to_string()),
            ("grid", a.grid.to_string()),
            ("thetas", a.thetas.to_string()),
            ("trials", a.trials.to_string()),
            ("grid_size", a.grid_size.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    println!("lambda* = {lambda_star}");
    print_policy(&policy, 1.0);
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_genfield(a: GenfieldArgs, out_root: &Path) -> Result<(), Error> {
    let kernel = KernelSpec::new(a.lengthscale, a.variance, 0.0);
    let field = generate_gp_field(
        &kernel,
        a.field_lengthscale,
        (a.rows, a.cols),
        a.samples,
        a.noise_var,
        a.seed,
    )?;

    let dir = make_run_dir(out_root, "genfield")?;
    field.grid.save_to_path(&dir.join("field.csv"))?;
    let mut f = BufWriter::new(File::create(dir.join("boundary.csv"))?);
    writeln!(f, "u,boundary")?;
    for (c, b) in field.boundary.iter().enumerate() {
        writeln!(f, "{},{}", c as f64 / (a.cols - 1) as f64, b)?;
    }
    drop(f);
    write_manifest(
        &dir,
        "genfield",
        &[
            ("rows", a.rows.to_string()),
            ("cols", a.cols.to_string()),
            ("lengthscale", a.lengthscale.to_string()),
            ("variance", a.variance.to_string()),
            ("field_lengthscale", a.field_lengthscale.to_string()),
            ("samples", a.samples.to_string()),
            ("noise_var", a.noise_var.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    println!(
        "generated {}x{} field, boundary in [{:.3}, {:.3}]",
        a.rows,
        a.cols,
        field.boundary.iter().cloned().fold(f64::INFINITY, f64::min),
        field
            .boundary
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_gplse(a: GplseArgs, out_root: &Path) -> Result<(), Error> {
    let (grid, truth) = match &a.field {
        Some(path) => {
            let grid = load_grid_field(path)?;
            let truth = grid.super_level_truth();
            (grid, truth)
        }
        None => {
            let kernel = KernelSpec::new(0.6, 0.0625, 0.0);
            let field = generate_gp_field(&kernel, 0.1, (21, 20), 500, 1e-4, a.seed)?;
            let truth = synthetic_truth(&field);
            (field.grid, truth)
        }
    };
    let sigma = a.noise.unwrap_or(grid.sigma);
    let noise = NoiseModel {
        sigma,
        threshold: grid.gamma,
    };
    let boundary_kernel = KernelSpec::new(
        a.boundary_lengthscale,
        a.boundary_variance,
        (a.stop_error / 2.0) * (a.stop_error / 2.0),
    );
    let dims = (grid.rows, grid.cols);
    let oracle = field_oracle(grid.clone(), sigma, a.seed);
    let start = Instant::now();
    let result = transect_lse(
        oracle,
        &noise,
        a.transects,
        a.stop_error,
        a.lambda,
        boundary_kernel,
        dims,
        TransectConfig::default(),
    )?;
    let wall = start.elapsed().as_secs_f64();

    let summary = level_set_summary(&truth, &result)?;
    let mission_time = time_cost(
        result.total_samples as f64,
        result.total_distance * grid.cell_km * (grid.cols - 1) as f64,
        a.ts,
        a.tt,
    )?;

    let dir = make_run_dir(out_root, "gplse")?;
    result
        .estimate
        .write_csv(BufWriter::new(File::create(dir.join("estimate.csv"))?))?;
    let mut f = BufWriter::new(File::create(dir.join("transects.csv"))?);
    writeln!(f, "coord,estimate,samples,distance")?;
    for t in &result.transects {
        writeln!(
            f,
            "{},{},{},{}",
            t.coord, t.estimate, t.outcome.trace.sample_count, t.outcome.trace.total_distance
        )?;
    }
    drop(f);
    write_manifest(
        &dir,
        "gplse",
        &[
            ("field", format!("{:?}", a.field)),
            ("transects", a.transects.to_string()),
            ("stop_error", a.stop_error.to_string()),
            ("lambda", a.lambda.to_string()),
            ("noise", sigma.to_string()),
            ("boundary_lengthscale", a.boundary_lengthscale.to_string()),
            ("boundary_variance", a.boundary_variance.to_string()),
            ("ts", a.ts.to_string()),
            ("tt", a.tt.to_string()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    println!(
        "error = {:.4}, samples = {}, distance = {:.4}, mission time = {:.2} s, wall = {:.3} s",
        summary, result.total_samples, result.total_distance, mission_time, wall
    );
    println!("wrote {}", dir.display());
    Ok(())
}
