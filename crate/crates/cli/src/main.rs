//! `mdct` command-line front end.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mdct::grid::{DomainBox, MultiresGrid};
use mdct::io::{read_predictions, read_table, read_truth, write_predictions, write_table, write_truth, Table};
use mdct::predict::{mse, predict};
use mdct::probit::{auc, run_probit_chain, BinaryDataset};
use mdct::sampler::{meta_path, read_chain, run_chain, write_chain, ChainConfig, ChainMeta, ChainSamples, Dataset};
use mdct::simdata::{gen_1d, gen_2d, gen_2d_fast, gen_binary, MaternParams};
use mdct::{Error, Hyperparams, SamplerMode};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "mdct", version, about = "Multiscale kernel convolution spatial regression")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a dataset.
    Fit(FitArgs),
    /// Posterior predictive summaries at new locations.
    Predict(PredictArgs),
    /// Score predictions against held-out data.
    Evaluate(EvaluateArgs),
    /// Time sampler iterations over increasing n.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    #[value(name = "1d")]
    OneD,
    #[value(name = "2d")]
    TwoD,
    Binary,
    /// Closed-form 2D surface, no dense factorization.
    #[value(name = "2d-fast")]
    TwoDFast,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Family {
    Gaussian,
    Probit,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Probit => "probit",
        }
    }
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    /// Rows held out as a test set (default: 0 for 1d and 2d-fast, 500 otherwise).
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Noise SD for 1d and 2d-fast.
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
    #[arg(long, default_value_t = 1.0)]
    theta1: f64,
    #[arg(long, default_value_t = 3.0)]
    theta2: f64,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
    /// Spatial to noise variance ratio (2d).
    #[arg(long, default_value_t = 20.0)]
    noise_ratio: f64,
    /// Comma-separated coefficients; the first multiplies the intercept.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Output prefix: writes `<out>.train.csv`, `<out>.train.truth.csv` and the test pair.
    #[arg(long, default_value = "sim")]
    out: String,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: Family,
    #[arg(long, default_value_t = 3)]
    resolutions: usize,
    /// Resolution-1 knots per axis, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "10,10")]
    j1: Vec<usize>,
    /// Domain lower corner (default: floor of the data minimum).
    #[arg(long, value_delimiter = ',')]
    lower: Option<Vec<f64>>,
    /// Domain upper corner (default: ceiling of the data maximum).
    #[arg(long, value_delimiter = ',')]
    upper: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3.0)]
    c: f64,
    #[arg(long, default_value_t = 2.0)]
    a_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    b_sigma: f64,
    #[arg(long, default_value_t = 5)]
    h_eta: usize,
    #[arg(long, default_value_t = 2000)]
    n_iter: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "chromatic")]
    mode: SamplerMode,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Chain file; metadata goes next to it in `<chain>.meta`.
    #[arg(long, default_value = "chain.csv")]
    chain: PathBuf,
    /// Fit report (default `<chain>.report.txt`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct PredictArgs {
    #[arg(long)]
    chain: PathBuf,
    /// Dataset file with the prediction locations and predictors; `y` is ignored.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Held-out dataset with the observed `y`.
    #[arg(long)]
    data: PathBuf,
    /// Truth sidecar; adds the surface MSE line.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "10000,20000,40000")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    resolutions: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,10")]
    j1: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value = "chromatic")]
    mode: SamplerMode,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Model(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Hyperparameter(_) | Error::Index { .. } => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn with_suffix(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{suffix}"))
}

fn save_split(prefix: &str, part: &str, dim: usize, data: &Dataset, truth: &[f64]) -> Result<(), Error> {
    let file = with_suffix(prefix, &format!(".{part}.csv"));
    write_table(&file, dim, data.locations(), data.y(), data.x())?;
    write_truth(&with_suffix(prefix, &format!(".{part}.truth.csv")), dim, data.locations(), truth)?;
    println!("wrote {} ({} rows)", file.display(), data.n());
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let gamma = a.gamma.clone().unwrap_or_else(|| match a.kind {
        Kind::Binary => vec![0.0, 1.0],
        _ => vec![1.0, 1.0],
    });
    let params = || MaternParams::new(a.theta1, a.theta2, a.nu);
    match a.kind {
        Kind::OneD | Kind::TwoDFast => {
            let n_test = a.n_test.unwrap_or(0);
            if n_test >= a.n {
                return Err(Failure::Usage(format!("n-test {n_test} leaves no training rows")));
            }
            let (sim, dim) = match a.kind {
                Kind::OneD => (gen_1d(a.n, a.noise_sd, &gamma, a.seed)?, 1),
                _ => (gen_2d_fast(a.n, a.noise_sd, &gamma, a.seed)?, 2),
            };
            let d = &sim.data;
            let cut = a.n - n_test;
            let part = |r: std::ops::Range<usize>| -> Result<(Dataset, Vec<f64>), Error> {
                let x = d.x().rows(r.start, r.len()).into_owned();
                Ok((Dataset::new(d.y()[r.clone()].to_vec(), x, d.locations()[r.clone()].to_vec())?, sim.truth[r].to_vec()))
            };
            let (train, truth) = part(0..cut)?;
            save_split(&a.out, "train", dim, &train, &truth)?;
            if n_test > 0 {
                let (test, truth) = part(cut..a.n)?;
                save_split(&a.out, "test", dim, &test, &truth)?;
            }
        }
        Kind::TwoD => {
            let split = gen_2d(a.n, &params()?, a.noise_ratio, &gamma, a.n_test.unwrap_or(500), a.seed)?;
            save_split(&a.out, "train", 2, &split.train.data, &split.train.truth)?;
            if let Some(t) = &split.test {
                save_split(&a.out, "test", 2, &t.data, &t.truth)?;
            }
            println!("noise variance {}", a.theta1 / a.noise_ratio);
        }
        Kind::Binary => {
            let split = gen_binary(a.n, &params()?, &gamma, a.n_test.unwrap_or(500), a.seed)?;
            save_split(&a.out, "train", 2, split.train.data.data(), &split.train.truth)?;
            if let Some(t) = &split.test {
                save_split(&a.out, "test", 2, t.data.data(), &t.truth)?;
            }
        }
    }
    println!("gamma {gamma:?}, seed {}", a.seed);
    Ok(())
}

fn domain_for(table: &Table, lower: Option<Vec<f64>>, upper: Option<Vec<f64>>) -> Result<DomainBox, Error> {
    let bound = |f: fn(f64, f64) -> f64, init: f64, round: fn(f64) -> f64| -> Vec<f64> {
        (0..table.dim).map(|k| round(table.locations.iter().map(|s| s[k]).fold(init, f))).collect()
    };
    let lower = lower.unwrap_or_else(|| bound(f64::min, f64::INFINITY, f64::floor));
    let mut upper = upper.unwrap_or_else(|| bound(f64::max, f64::NEG_INFINITY, f64::ceil));
    for k in 0..upper.len().min(lower.len()) {
        if upper[k] <= lower[k] {
            upper[k] = lower[k] + 1.0;
        }
    }
    DomainBox::new(lower, upper)
}

fn fit(a: FitArgs) -> CmdResult {
    let table = read_table(&a.data)?;
    if table.y.is_empty() {
        return Err(Error::Data(format!("{}: no rows", a.data.display())).into());
    }
    if a.j1.len() != table.dim {
        return Err(Failure::Usage(format!("j1 has {} entries but the data are {}-dimensional", a.j1.len(), table.dim)));
    }
    let domain = domain_for(&table, a.lower.clone(), a.upper.clone())?;
    let grid = MultiresGrid::new(domain, a.resolutions, &a.j1)?;
    let hyper = Hyperparams { c: a.c, a_sigma: a.a_sigma, b_sigma: a.b_sigma, h_eta: a.h_eta };
    hyper.validate()?;
    let cfg = ChainConfig {
        n_iter: a.n_iter,
        burn_in: a.burn_in,
        thin: a.thin,
        seed: a.seed,
        mode: a.mode,
        workers: a.workers,
        ..Default::default()
    };
    let p = table.x.ncols();
    let n = table.y.len();
    let chain = match a.family {
        Family::Gaussian => run_chain(&Dataset::new(table.y, table.x, table.locations)?, &grid, &hyper, &cfg)?,
        Family::Probit => run_probit_chain(&BinaryDataset::new(table.y, table.x, table.locations)?, &grid, &hyper, &cfg)?,
    };
    write_chain(&a.chain, &chain, &ChainMeta::new(a.family.name(), &chain, &grid, &hyper, p))?;
    let report = fit_report(&a, &grid, &hyper, &chain, n, p);
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.chain.display().to_string(), ".report.txt"));
    std::fs::write(&report_path, &report).map_err(Error::from)?;
    print!("{report}");
    println!("wrote {}, {} and {}", a.chain.display(), meta_path(&a.chain).display(), report_path.display());
    Ok(())
}

fn fit_report(a: &FitArgs, grid: &MultiresGrid, hyper: &Hyperparams, chain: &ChainSamples, n: usize, p: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "family {}", a.family.name());
    let _ = writeln!(s, "observations {n}, predictors {p}");
    let _ = writeln!(s, "resolutions {}, j1 {:?}", grid.resolutions(), grid.j1_dims());
    let _ = writeln!(s, "total basis functions {}", grid.total_knots());
    let _ = writeln!(s, "c {}, a_sigma {}, b_sigma {}, h_eta {}", hyper.c, hyper.a_sigma, hyper.b_sigma, hyper.h_eta);
    let _ = writeln!(
        s,
        "iterations {}, burn-in {}, thin {}, stored {}, mode {}, workers {}, seed {}",
        chain.n_iter, chain.burn_in, chain.thin, chain.len(), chain.mode, a.workers, chain.seed
    );
    let total: f64 = chain.iter_seconds.iter().sum();
    let per = if chain.iter_seconds.is_empty() { 0.0 } else { total / chain.iter_seconds.len() as f64 };
    let _ = writeln!(s, "wall time {total:.3} s, {:.3} ms per iteration", per * 1e3);
    let counts = chain.eta_counts(hyper.h_eta);
    let freq: Vec<String> = counts.iter().enumerate().map(|(k, c)| format!("{}:{c}", k + 1)).collect();
    let _ = writeln!(s, "eta frequencies {}", freq.join(" "));
    // every update is an exact conjugate draw
    let _ = writeln!(s, "acceptance rate 1 (conjugate updates)");
    let _ = writeln!(s, "per-iteration seconds:");
    for (k, t) in chain.iter_seconds.iter().enumerate() {
        let _ = writeln!(s, "  {k} {t:.6}");
    }
    s
}

fn predict_cmd(a: PredictArgs) -> CmdResult {
    let (meta, chain) = read_chain(&a.chain)?;
    let grid = meta.grid()?;
    let table = read_table(&a.data)?;
    if table.x.ncols() != meta.p {
        return Err(Error::Data(format!("chain has {} predictors, {} has {}", meta.p, a.data.display(), table.x.ncols())).into());
    }
    let draws = predict(&table.locations, &table.x, &chain, &grid, a.seed)?;
    write_predictions(&a.out, table.dim, &draws, meta.family == "probit")?;
    println!("wrote {} ({} points, {} draws)", a.out.display(), draws.len(), chain.len());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CmdResult {
    let preds = read_predictions(&a.predictions)?;
    let table = read_table(&a.data)?;
    let n = table.y.len();
    if preds.locations.len() != n {
        return Err(Error::LengthMismatch { left: preds.locations.len(), right: n }.into());
    }
    let col = |name: &str| {
        preds.column(name).ok_or_else(|| Error::Data(format!("{}: missing column {name}", a.predictions.display())))
    };
    let mean = col("y_mean")?;
    let (lo, hi) = (col("y_lo95")?, col("y_hi95")?);
    let mut s = String::new();
    let _ = writeln!(s, "points {n}");
    let _ = writeln!(s, "MSPE {}", mse(mean, &table.y)?);
    let covered = (0..n).filter(|&i| lo[i] <= table.y[i] && table.y[i] <= hi[i]).count();
    let _ = writeln!(s, "coverage95 {}", covered as f64 / n as f64);
    let _ = writeln!(s, "mean_length95 {}", (0..n).map(|i| hi[i] - lo[i]).sum::<f64>() / n as f64);
    if let Some(p) = preds.column("p_mean") {
        let labels: Vec<bool> = table.y.iter().map(|&v| v == 1.0).collect();
        let _ = writeln!(s, "AUC {}", auc(p, &labels)?);
    }
    if let Some(t) = &a.truth {
        let (_, w0) = read_truth(t)?;
        let _ = writeln!(s, "MSE {}", surface_mse(col("w_median")?, &w0)?);
    }
    print!("{s}");
    if let Some(r) = &a.report {
        std::fs::write(r, &s).map_err(Error::from)?;
    }
    Ok(())
}

/// Surface MSE with the mean difference removed: the intercept and the
/// level of the surface are not separately identified.
fn surface_mse(estimate: &[f64], truth: &[f64]) -> Result<f64, Error> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch { left: estimate.len(), right: truth.len() });
    }
    let diff: Vec<f64> = estimate.iter().zip(truth).map(|(e, t)| e - t).collect();
    let shift = diff.iter().sum::<f64>() / diff.len().max(1) as f64;
    mse(&diff, &vec![shift; diff.len()])
}

fn bench(a: BenchArgs) -> CmdResult {
    if a.j1.len() != 2 {
        return Err(Failure::Usage("bench runs on the unit square; j1 needs two entries".into()));
    }
    if a.iters < 2 {
        return Err(Failure::Usage("iters must be at least 2".into()));
    }
    let grid = MultiresGrid::new(DomainBox::rect(0.0, 1.0, 0.0, 1.0)?, a.resolutions, &a.j1)?;
    let mut rows = Vec::new();
    println!("n,ms_per_iter");
    for &n in &a.n {
        let sim = gen_2d_fast(n, 0.2, &[1.0, 1.0], a.seed)?;
        let cfg = ChainConfig {
            n_iter: a.iters,
            burn_in: a.iters,
            seed: a.seed,
            mode: a.mode,
            workers: a.workers,
            ..Default::default()
        };
        let chain = run_chain(&sim.data, &grid, &Hyperparams::default(), &cfg)?;
        // the first iteration pays for warm-up
        let mut t = chain.iter_seconds[1..].to_vec();
        t.sort_by(f64::total_cmp);
        let med = t[t.len() / 2];
        println!("{n},{:.3}", med * 1e3);
        rows.push((n as f64, med));
    }
    let slope = rows.iter().map(|(n, t)| n * t).sum::<f64>() / rows.iter().map(|(n, _)| n * n).sum::<f64>();
    let worst = rows.iter().map(|(n, t)| ((t - slope * n) / (slope * n)).abs()).fold(0.0, f64::max);
    println!("slope {:.3e} s per row, max relative residual {worst:.3}", slope);
    Ok(())
}
