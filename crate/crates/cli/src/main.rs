//! Command line front end: simulate paths, add observation noise,
//! estimate H and sigma, run Monte Carlo sweeps, and fit convergence
//! rates.
//!
//! Exit codes: 0 success, 2 usage error (bad arguments), 3 data or I/O
//! error, 4 numerical failure.

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use hurstlet::estimator::{estimate, optimal_level, EstimateOptions};
use hurstlet::fbm::{generate_path, write_path_csv, HurstParams, Normalization, MAX_GRID_EXP};
use hurstlet::harness::{
    rate_fit, read_rows, run_experiment, summarize, write_rows, ExperimentConfig,
};
use hurstlet::noise::{observe_values, Amplitude, NoiseSpec, NoisySeries, XiDist};
use hurstlet::wavelet::{build_basis, DEFAULT_CASCADE_DEPTH};
use hurstlet::Error;

#[derive(Parser)]
#[command(
    name = "hurstlet",
    about = "Hurst and scale estimation for noisy fractional Brownian motion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a fractional Brownian motion path on a dyadic grid
    Simulate(SimulateArgs),
    /// Add observation noise to a series
    Observe(ObserveArgs),
    /// Estimate H and sigma from a series
    Estimate(EstimateArgs),
    /// Run a Monte Carlo sweep from a config file
    Experiment(ExperimentArgs),
    /// Fit the convergence rate from experiment rows
    RateFit(RateFitArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Hurst parameter, in (0, 1)
    #[arg(long = "H")]
    h: f64,
    /// Scale parameter, positive
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Grid exponent: the path has 2^N + 1 samples; N must be even
    #[arg(long = "N")]
    n_exp: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Covariance convention: "kappa" or "standard"
    #[arg(long, default_value = "kappa")]
    normalization: String,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ObserveArgs {
    /// Input series CSV (stdin when omitted)
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Amplitude: "const:c" or "tanh:alpha,beta"
    #[arg(long)]
    noise: String,
    /// Innovation law: "gauss" or "t:nu"
    #[arg(long, default_value = "gauss")]
    dist: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cut the series to the largest valid prefix instead of failing
    #[arg(long)]
    trim: bool,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input series CSV (stdin when omitted)
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Lower clamp for the H estimate
    #[arg(long, default_value_t = 0.01)]
    hmin: f64,
    /// Upper clamp for the H estimate
    #[arg(long, default_value_t = 0.99)]
    hmax: f64,
    /// Emit a JSON report instead of the CSV table
    #[arg(long)]
    json: bool,
    /// Include the per-level threshold table and the theory-optimal level
    #[arg(long)]
    diagnostics: bool,
    /// Cut the series to the largest valid prefix instead of failing
    #[arg(long)]
    trim: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Path to a key = value config file
    #[arg(long)]
    config: PathBuf,
    /// Rerun even when the rows file already exists
    #[arg(long)]
    force: bool,
    /// Run replicates on one worker (output is identical either way)
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct RateFitArgs {
    /// Rows CSV produced by the experiment subcommand
    #[arg(long = "in")]
    input: PathBuf,
    /// H value whose rows enter the fit
    #[arg(long = "H")]
    h: f64,
    /// Keep clamped estimates in the RMSE
    #[arg(long)]
    include_clamped: bool,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) => 2,
        Error::Size(_) | Error::Format(_) | Error::Io(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Observe(args) => cmd_observe(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::RateFit(args) => cmd_rate_fit(args),
    };
    if let Err(e) = result {
        // a downstream pipe closing early (estimate | head) is not a failure
        if let Error::Io(io) = &e {
            if io.kind() == io::ErrorKind::BrokenPipe {
                return;
            }
        }
        eprintln!("hurstlet: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn out_writer(path: &Option<PathBuf>) -> hurstlet::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_input(path: &Option<PathBuf>, trim: bool) -> hurstlet::Result<NoisySeries> {
    let ingested = match path {
        Some(p) => hurstlet::noise::read_series(File::open(p)?, trim)?,
        None => {
            let mut buf = Vec::new();
            io::stdin().lock().read_to_end(&mut buf)?;
            hurstlet::noise::read_series(&buf[..], trim)?
        }
    };
    if ingested.trimmed {
        eprintln!(
            "hurstlet: trimmed {} rows to {} samples",
            ingested.original_rows,
            ingested.series.values().len()
        );
    }
    Ok(ingested.series)
}

fn cmd_simulate(args: SimulateArgs) -> hurstlet::Result<()> {
    // argument-level validation: report bad values as usage errors
    if args.n_exp % 2 != 0 || !(2..=MAX_GRID_EXP).contains(&args.n_exp) {
        return Err(Error::Domain(format!(
            "--N must be even and within [2, {MAX_GRID_EXP}], got {}",
            args.n_exp
        )));
    }
    let params = HurstParams::new(args.h, args.sigma)?;
    let normalization: Normalization = args.normalization.parse()?;
    let path = generate_path(params, args.n_exp, args.seed, normalization)?;
    write_path_csv(&path, out_writer(&args.out)?)
}

fn cmd_observe(args: ObserveArgs) -> hurstlet::Result<()> {
    let amplitude: Amplitude = args.noise.parse()?;
    let xi_dist: XiDist = args.dist.parse()?;
    let series = read_input(&args.input, args.trim)?;
    let spec = NoiseSpec {
        amplitude,
        xi_dist,
        seed: args.seed,
    };
    let y = observe_values(series.values(), &spec)?;
    let n = series.n();
    let mut out = out_writer(&args.out)?;
    writeln!(out, "t,y")?;
    for (i, v) in y.iter().enumerate() {
        writeln!(out, "{},{}", fmt(i as f64 / n as f64), fmt(*v))?;
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> hurstlet::Result<()> {
    let opts = EstimateOptions {
        h_min: args.hmin,
        h_max: args.hmax,
        compute_sigma: true,
    };
    opts.validate()?;
    let series = read_input(&args.input, args.trim)?;
    let basis = build_basis(DEFAULT_CASCADE_DEPTH)?;
    let profile = estimate(&series, &basis, &opts)?;
    let mut out = io::stdout().lock();
    if args.json {
        let report = profile.to_report_json(args.diagnostics);
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        return Ok(());
    }
    let opt_f = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    writeln!(
        out,
        "row,j,qhat,threshold,selected,h_hat,clamped,pair_downshifted,sigma_hat"
    )?;
    let j_star = profile.j_star;
    for j in profile.j_lo()..=profile.j_hi() {
        writeln!(
            out,
            "level,{j},{},{},{},,,,",
            fmt(profile.q(j).unwrap()),
            fmt(profile.threshold(j)),
            j_star == Some(j)
        )?;
    }
    writeln!(
        out,
        "summary,{},{},,,{},{},{},{}",
        j_star.map(|j| j.to_string()).unwrap_or_default(),
        opt_f(j_star.and_then(|j| profile.q(j))),
        opt_f(profile.h_hat),
        profile.clamped,
        profile.pair_downshifted,
        opt_f(profile.sigma_hat),
    )?;
    if args.diagnostics {
        if let Some(h) = profile.h_hat {
            writeln!(
                out,
                "# theory-optimal level at the estimated H: {}",
                optimal_level(h, profile.n_exp())
            )?;
        }
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> hurstlet::Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let config = ExperimentConfig::parse(&text)?;
    let rows_path = config.rows_path.clone().ok_or_else(|| {
        Error::Format("config must set rows_path for the experiment subcommand".into())
    })?;
    if rows_path.exists() && !args.force {
        println!(
            "rows file {} already exists; pass --force to rerun",
            rows_path.display()
        );
        return Ok(());
    }
    let rows = run_experiment(&config, !args.serial)?;
    ensure_parent(&rows_path)?;
    write_rows(&rows, File::create(&rows_path)?)?;
    println!("wrote {} rows to {}", rows.len(), rows_path.display());
    if let Some(summary_path) = &config.summary_path {
        ensure_parent(summary_path)?;
        let summary = summarize(&rows);
        fs::write(summary_path, serde_json::to_string_pretty(&summary)?)?;
        println!("wrote summary to {}", summary_path.display());
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> hurstlet::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn cmd_rate_fit(args: RateFitArgs) -> hurstlet::Result<()> {
    if !(args.h > 0.0 && args.h < 1.0) {
        return Err(Error::Domain(format!(
            "--H must lie in (0, 1), got {}",
            args.h
        )));
    }
    let rows = read_rows(File::open(&args.input)?)?;
    let fit = rate_fit(&rows, args.h, args.include_clamped)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(())
}
