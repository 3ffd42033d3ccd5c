use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bsindy::active::save_history;
use bsindy::bench::{
    fd_vs_weak_report, init_thread_pool, run_sweep, write_deriv_csv, ActiveRun, DerivCompareConfig,
    FitRun, SweepConfig,
};
use bsindy::dynamics::{add_noise, builtin, default_initial_condition, simulate};
use bsindy::io::{save_csv, save_metadata, write_csv, SeriesMetadata};
use bsindy::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Sparse identification of polynomial ODEs from noisy data.
#[derive(Parser, Debug)]
#[command(name = "bsindy", version)]
struct Cli {
    /// Suppress progress and summary messages on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a built-in system and write its trajectory as CSV.
    Simulate(SimulateArgs),
    /// Fit a trajectory CSV and print the identified equations.
    Fit(FitArgs),
    /// Run a success-rate sweep and write report.json, report.csv and timing.json.
    Sweep(SweepArgs),
    /// Choose the noise level of a trajectory by evidence over a grid.
    SigmaSweep(FitArgs),
    /// Entropy-driven point selection on a simulated pool.
    Active(ActiveArgs),
    /// Compare derivative schemes on a simulated trajectory.
    #[command(alias = "fd-vs-weak")]
    DerivCompare(DerivArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// van_der_pol, cubic_oscillator, lorenz or lotka_volterra.
    #[arg(long)]
    system: String,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long)]
    t1: f64,
    /// Sampling interval; rows are t0, t0 + dt, … up to t1.
    #[arg(long)]
    dt: f64,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Standard deviation of added measurement noise.
    #[arg(long, default_value_t = 0.0)]
    sigma_x: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RK4 steps per sampling interval.
    #[arg(long, default_value_t = 10)]
    substeps: usize,
    /// Output CSV; a `.meta.json` sidecar is written next to it. Defaults to stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the config's data path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides the config's noise level (drops any sigma grid).
    #[arg(long)]
    sigma_x: Option<f64>,
    /// Directory for machine-readable output.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(short, long)]
    out_dir: PathBuf,
    /// Overrides the config's seed base.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's trials per cell.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct ActiveArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(short, long)]
    out_dir: PathBuf,
    /// Overrides the noise seed of the pool.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct DerivArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(short, long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a config file, attributing JSON errors to the file.
fn load_config<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    parse(&read_config(path)?).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.display().to_string(),
            line: j.line(),
            message: j.to_string(),
        },
        other => other,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, bytes).map_err(|source| Error::Io { path, source })
}

fn stdout_error(e: io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

struct Ctx {
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn cmd_simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let system = builtin(&a.system, &a.params)?;
    let x0 = match a.x0 {
        Some(x) => x,
        None => default_initial_condition(&a.system)?,
    };
    if !(a.dt > 0.0 && a.t1 > a.t0) {
        return Err(Error::Invalid("need dt > 0 and t1 > t0".into()));
    }
    let rows = ((a.t1 - a.t0) / a.dt * (1.0 + 1e-12)).floor() as usize + 1;
    let clean = simulate(&system, &x0, a.t0, a.dt, rows, a.substeps)?;
    let ts = add_noise(&clean, a.sigma_x, a.seed)?;
    match a.output {
        Some(path) => {
            save_csv(&ts, &path)?;
            let meta = SeriesMetadata {
                system: Some(a.system.clone()),
                sigma_x: Some(a.sigma_x),
                seed: Some(a.seed),
            };
            save_metadata(&meta, &path)?;
            ctx.note(format!("wrote {} rows to {}", ts.len(), path.display()));
        }
        None => {
            let stdout = io::stdout();
            write_csv(&ts, stdout.lock()).map_err(stdout_error)?;
        }
    }
    Ok(())
}

fn load_fit_run(a: &FitArgs) -> Result<FitRun> {
    let mut run = load_config(&a.config, FitRun::from_json)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    run = run.relative_to(base);
    if let Some(d) = &a.data {
        run.data = d.clone();
    }
    if let Some(s) = a.sigma_x {
        run.sigma_x = Some(s);
        run.sigma_grid = None;
    }
    run.validate()?;
    Ok(run)
}

fn print_equations(model: &bsindy::regression::FittedModel) -> Result<()> {
    let mut out = io::stdout().lock();
    for eq in model.equations() {
        writeln!(out, "{eq}").map_err(stdout_error)?;
    }
    Ok(())
}

fn cmd_fit(ctx: &Ctx, a: FitArgs) -> Result<()> {
    let run = load_fit_run(&a)?;
    let outcome = run.run()?;
    ctx.note(format!(
        "sigma_x = {}  log evidence = {:.4}",
        outcome.sigma_x,
        outcome.model.log_evidence()
    ));
    print_equations(&outcome.model)?;
    let report = outcome.model.report();
    for dim in &report.dimensions {
        for t in &dim.terms {
            ctx.note(format!(
                "  d{}/dt  {:>10}  {:+.6e} ± {:.3e}",
                dim.state, t.label, t.mean, t.std
            ));
        }
        if let Some(w) = &dim.warning {
            ctx.note(format!("  d{}/dt  warning: {w}", dim.state));
        }
    }
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        write_file(
            dir.join("model.json"),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
        if let Some(sweep) = &outcome.sweep {
            let mut buf = Vec::new();
            sweep.write_csv(&mut buf).map_err(|e| Error::Io {
                path: dir.join("sigma_sweep.csv"),
                source: e,
            })?;
            write_file(dir.join("sigma_sweep.csv"), buf)?;
        }
    }
    Ok(())
}

fn cmd_sigma_sweep(ctx: &Ctx, a: FitArgs) -> Result<()> {
    let run = load_fit_run(&a)?;
    if run.sigma_grid.is_none() {
        return Err(Error::Invalid(
            "sigma-sweep needs `sigma_grid` in the config".into(),
        ));
    }
    let outcome = run.run()?;
    let sweep = outcome.sweep.expect("grid given");
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf).map_err(stdout_error)?;
    match &a.out_dir {
        Some(dir) => {
            create_dir(dir)?;
            write_file(dir.join("sigma_sweep.csv"), &buf)?;
            write_file(
                dir.join("model.json"),
                serde_json::to_string_pretty(&sweep.best_model.report())? + "\n",
            )?;
        }
        None => io::stdout().write_all(&buf).map_err(stdout_error)?,
    }
    ctx.note(format!("best sigma_x = {}", sweep.best_sigma()));
    for eq in sweep.best_model.equations() {
        ctx.note(eq);
    }
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let mut cfg = load_config(&a.config, SweepConfig::from_json)?;
    if let Some(s) = a.seed {
        cfg.seed_base = s;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let (report, timing) = run_sweep(&cfg)?;
    create_dir(&a.out_dir)?;
    report.save(&a.out_dir)?;
    timing.save(&a.out_dir)?;
    for c in &report.cells {
        ctx.note(format!(
            "{:<12} sigma_x={:<6} n={:<5} success={:.3} [{:.3}, {:.3}] errors={}",
            c.strategy.name(),
            c.sigma_x,
            c.n_samples,
            c.success_rate,
            c.ci_low,
            c.ci_high,
            c.errors
        ));
    }
    ctx.note(format!(
        "wrote report to {} ({:.1} s)",
        a.out_dir.display(),
        timing.total_seconds
    ));
    report.ensure_ok()
}

fn cmd_active(ctx: &Ctx, a: ActiveArgs) -> Result<()> {
    let mut run = load_config(&a.config, ActiveRun::from_json)?;
    if let Some(s) = a.seed {
        run.seed = s;
    }
    let outcome = run.run()?;
    create_dir(&a.out_dir)?;
    save_history(&outcome.state.history, a.out_dir.join("history.csv"))?;
    write_file(
        a.out_dir.join("model.json"),
        serde_json::to_string_pretty(&outcome.state.model.report())? + "\n",
    )?;
    ctx.note(format!(
        "selected {} of {} rows{}",
        outcome.state.selected.len(),
        outcome.pool.len(),
        match outcome.state.recovered_at {
            Some(n) => format!("; true support recovered at {n}"),
            None => String::new(),
        }
    ));
    print_equations(&outcome.state.model)
}

fn cmd_deriv(ctx: &Ctx, a: DerivArgs) -> Result<()> {
    let mut cfg: DerivCompareConfig = load_config(&a.config, |t| Ok(serde_json::from_str(t)?))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let rows = fd_vs_weak_report(&cfg)?;
    create_dir(&a.out_dir)?;
    let mut buf = Vec::new();
    write_deriv_csv(&rows, &mut buf).map_err(stdout_error)?;
    write_file(a.out_dir.join("deriv_compare.csv"), &buf)?;
    for r in &rows {
        ctx.note(format!(
            "{:<10} dt={:<8} rms={:.4e} bias={:.4e}",
            r.scheme, r.dt, r.rms, r.bias
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx { quiet: cli.quiet };
    init_thread_pool()?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::SigmaSweep(a) => cmd_sigma_sweep(&ctx, a),
        Command::Active(a) => cmd_active(&ctx, a),
        Command::DerivCompare(a) => cmd_deriv(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
