//! `log1p-nmf`: fit, simulate and evaluate log1p NMF models from the shell.
//!
//! Exit codes: 0 on success, 2 for unusable input or flags, 3 when a
//! computation fails after the inputs were accepted.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log1p_nmf::eval::{metrics_report, simulate};
use log1p_nmf::fitter::compute_size_factors;
use log1p_nmf::geometry::upper_right_hull;
use log1p_nmf::io::{format_float, read_numeric_csv, write_factor_csv};
use log1p_nmf::likelihood::{approx_loglik, exact_loglik, identity_loglik, poisson_loglik};
use log1p_nmf::{fit, ApproxMethod, CParam, CountMatrix, FactorModel, FitConfig, Link, Objective, QuadApprox};
use ndarray::Array1;

use manifest::{sha256_file, RunManifest};

#[derive(Parser)]
#[command(name = "log1p-nmf", version, about = "Poisson NMF with the shifted-log link")]
struct Cli {
    /// Log progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit L and F to a MatrixMarket count matrix.
    Fit(FitArgs),
    /// Simulate counts from a random log1p NMF model.
    Simulate(SimulateArgs),
    /// Hoyer sparsity and factor correlation of a fitted model.
    Metrics(MetricsArgs),
    /// Log-likelihood of a stored model.
    Loglik(LoglikArgs),
    /// Upper-right convex hull of 2-D points.
    Hull(HullArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Exact,
    ApproxTaylor,
    ApproxChebyshev,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Exact => Objective::Exact,
            ObjectiveArg::ApproxTaylor => Objective::Approx(ApproxMethod::Taylor),
            ObjectiveArg::ApproxChebyshev => Objective::Approx(ApproxMethod::Chebyshev),
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args)]
struct FitArgs {
    /// MatrixMarket file with the counts (rows are samples).
    #[arg(long, required_unless_present = "from_manifest")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Link constant, a positive number or `inf`.
    #[arg(long, default_value = "1")]
    c: CParam,
    #[arg(long, value_enum, default_value = "exact")]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value = "off")]
    size_factors: Switch,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Repeat the run recorded in a manifest; other fit flags are ignored.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    c: CParam,
    /// Target fraction of zero counts.
    #[arg(long, default_value_t = 0.95)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output MatrixMarket file; L_true.csv and F_true.csv go next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct MetricsArgs {
    /// Directory holding L.csv and F.csv.
    #[arg(long)]
    model_dir: PathBuf,
    /// Link constant to report; defaults to the one in the directory's manifest.
    #[arg(long)]
    c: Option<CParam>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LoglikKind {
    Exact,
    ApproxTaylor,
    ApproxChebyshev,
    /// `Σ y log λ − λ` under the shifted-log link.
    Poisson,
    /// Classical identity-link Poisson NMF.
    Identity,
}

#[derive(clap::Args)]
struct LoglikArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long, default_value = "1")]
    c: CParam,
    #[arg(long, value_enum, default_value = "exact")]
    kind: LoglikKind,
    #[arg(long, value_enum, default_value = "off")]
    size_factors: Switch,
}

#[derive(clap::Args)]
struct HullArgs {
    /// CSV with two numeric columns, one point per row.
    #[arg(long)]
    points: PathBuf,
}

/// A failed command and its exit code.
#[derive(Debug)]
enum Failure {
    Input(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Compute(_) => 3,
        }
    }
}

fn input_err(context: &str) -> impl Fn(log1p_nmf::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{context}: {e}"))
}

fn compute_err(context: &str) -> impl Fn(log1p_nmf::Error) -> Failure + '_ {
    move |e| Failure::Compute(format!("{context}: {e}"))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Compute(format!("{}: {e}", path.display()))
}

fn read_counts(path: &Path) -> Result<CountMatrix, Failure> {
    if !path.exists() {
        return Err(Failure::Input(format!("input {} does not exist", path.display())));
    }
    CountMatrix::read_matrix_market(path).map_err(input_err("reading counts"))
}

fn read_model(dir: &Path, link: Link) -> Result<FactorModel, Failure> {
    let read = |name: &str| {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Failure::Input(format!("{} does not exist", path.display())));
        }
        read_numeric_csv(&path).map_err(input_err(name))
    };
    FactorModel::new(read("L.csv")?, read("F.csv")?, link).map_err(input_err("model"))
}

fn link_for(c: CParam) -> Result<Link, Failure> {
    Link::shifted_log(c.effective()).map_err(input_err("link constant"))
}

fn cmd_fit(args: FitArgs, command_line: Vec<String>) -> Result<(), Failure> {
    let (input, config) = match &args.from_manifest {
        Some(path) => {
            let previous = RunManifest::load(path).map_err(Failure::Input)?;
            let input = previous.input.clone();
            if let (Some(expected), Ok(actual)) = (&previous.input_sha256, sha256_file(&input)) {
                if *expected != actual {
                    return Err(Failure::Input(format!("{} changed since the recorded run", input.display())));
                }
            }
            (input, previous.config)
        }
        None => {
            let mut config = FitConfig::new(args.k, args.c);
            config.objective = args.objective.into();
            config.use_size_factors = args.size_factors == Switch::On;
            config.max_outer_iters = args.max_iters;
            config.rel_tol = args.tol;
            config.seed = args.seed;
            config.threads = args.threads;
            (args.input.clone().expect("clap requires --input"), config)
        }
    };
    config.validate().map_err(input_err("configuration"))?;
    let y = read_counts(&input)?;
    let checksum = sha256_file(&input).map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;

    let started = Instant::now();
    let mut manifest = RunManifest::new(command_line, input.clone(), checksum, config.clone());
    let manifest_path = args.out_dir.join("manifest.json");
    let outcome = fit(&y, &config);
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    let (model, report) = match outcome {
        Ok(v) => v,
        Err(e) => {
            manifest.status = "error".into();
            manifest.error = Some(e.to_string());
            manifest.save(&manifest_path).map_err(Failure::Compute)?;
            return Err(Failure::Compute(format!("fit aborted: {e}")));
        }
    };

    let l_path = args.out_dir.join("L.csv");
    let f_path = args.out_dir.join("F.csv");
    let trace_path = args.out_dir.join("trace.csv");
    write_factor_csv(&model.loadings, &l_path).map_err(compute_err("writing L.csv"))?;
    write_factor_csv(&model.factors, &f_path).map_err(compute_err("writing F.csv"))?;
    let mut trace = String::from("iteration,objective\n");
    for (t, v) in report.loglik_trace.iter().enumerate() {
        trace.push_str(&format!("{t},{}\n", format_float(*v)));
    }
    fs::write(&trace_path, trace).map_err(io_err(&trace_path))?;

    manifest.status = if report.converged { "converged" } else { "max_iters" }.into();
    manifest.converged = report.converged;
    manifest.iterations = report.iterations;
    manifest.effective_c = report.effective_c;
    manifest.final_exact_loglik = Some(exact_loglik(&y, &model).map_err(compute_err("final log-likelihood"))?);
    manifest.final_poisson_loglik = Some(poisson_loglik(&y, &model).map_err(compute_err("final log-likelihood"))?);
    manifest.loglik_trace = report.loglik_trace;
    manifest.empty_factors = report.empty_factors;
    manifest.outputs = vec![l_path, f_path, trace_path, manifest_path.clone()];
    manifest.save(&manifest_path).map_err(Failure::Compute)?;
    log::info!("{} after {} iterations", manifest.status, manifest.iterations);
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let sim = simulate(args.n, args.m, args.k, args.c, args.sparsity, args.seed).map_err(input_err("simulation"))?;
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    sim.y.write_matrix_market(&args.out).map_err(compute_err("writing counts"))?;
    write_factor_csv(&sim.loadings, dir.join("L_true.csv")).map_err(compute_err("writing L_true.csv"))?;
    write_factor_csv(&sim.factors, dir.join("F_true.csv")).map_err(compute_err("writing F_true.csv"))?;
    log::info!("sparsity {:.4} (expected {:.4}), scale {:.6e}", sim.y.sparsity(), sim.expected_sparsity, sim.scale);
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Failure> {
    let c = match args.c {
        Some(c) => c,
        None => {
            RunManifest::load(&args.model_dir.join("manifest.json"))
                .map_err(|e| Failure::Input(format!("no --c given and {e}")))?
                .config
                .c
        }
    };
    let model = read_model(&args.model_dir, link_for(c)?)?;
    let report = metrics_report(&model, c).map_err(input_err("metrics"))?;
    let text = match args.format {
        Format::Csv => format!("{}\n{}\n", log1p_nmf::eval::MetricsReport::CSV_HEADER, report.csv_row()),
        Format::Json => serde_json::to_string_pretty(&report).expect("report serialises") + "\n",
    };
    match &args.out {
        Some(path) => fs::write(path, text).map_err(io_err(path))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_loglik(args: LoglikArgs) -> Result<(), Failure> {
    let y = read_counts(&args.input)?;
    let link = match args.kind {
        LoglikKind::Identity => Link::Identity,
        _ => link_for(args.c)?,
    };
    let mut model = read_model(&args.model_dir, link)?;
    if args.size_factors == Switch::On {
        let s = compute_size_factors(&y).map_err(input_err("size factors"))?;
        model = FactorModel::with_size_factors(model.loadings, model.factors, link, s).map_err(input_err("model"))?;
    }
    let approx = |method| -> Result<f64, Failure> {
        let q = QuadApprox::for_link_constant(method, args.c.effective()).map_err(input_err("approximation"))?;
        approx_loglik(&y, &model, &q).map_err(input_err("log-likelihood"))
    };
    let value = match args.kind {
        LoglikKind::Exact => exact_loglik(&y, &model).map_err(input_err("log-likelihood"))?,
        LoglikKind::ApproxTaylor => approx(ApproxMethod::Taylor)?,
        LoglikKind::ApproxChebyshev => approx(ApproxMethod::Chebyshev)?,
        LoglikKind::Poisson => poisson_loglik(&y, &model).map_err(input_err("log-likelihood"))?,
        LoglikKind::Identity => {
            let s = if args.size_factors == Switch::On { model.size_factors.clone() } else { Array1::ones(y.n_rows()) };
            identity_loglik(&y, &model.loadings, &model.factors, s.view()).map_err(input_err("log-likelihood"))?
        }
    };
    println!("{}", format_float(value));
    Ok(())
}

fn cmd_hull(args: HullArgs) -> Result<(), Failure> {
    if !args.points.exists() {
        return Err(Failure::Input(format!("{} does not exist", args.points.display())));
    }
    let table = read_numeric_csv(&args.points).map_err(input_err("reading points"))?;
    if table.ncols() != 2 {
        return Err(Failure::Input(format!("expected 2 columns, found {}", table.ncols())));
    }
    let points: Vec<[f64; 2]> = table.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let hull = upper_right_hull(&points).map_err(input_err("hull"))?;
    println!("{}", serde_json::to_string_pretty(&hull).expect("hull serialises"));
    Ok(())
}

fn main() -> ExitCode {
    let command_line: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args, command_line),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Loglik(args) => cmd_loglik(args),
        Command::Hull(args) => cmd_hull(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (Failure::Input(msg) | Failure::Compute(msg)) = &failure;
            eprintln!("error: {msg}");
            ExitCode::from(failure.code())
        }
    }
}
