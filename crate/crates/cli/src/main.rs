//! `vheat`: command-line front end for the viscous-heating solvers.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration error,
//! 3 numerical failure, 4 non-convergence.

mod kv;
mod manifest;
mod plots;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use vheat_core::bgk::{self, BgkError};
use vheat_core::cns::{self, CnsError};
use vheat_core::diagnostics::{self, DiagnosticsError, Field, GrowthSeries};
use vheat_core::dsmc::{self, DsmcError};
use vheat_core::gauss_moments::{self, MomentsError};
use vheat_core::steady_ns::{self, SteadyNsError};

use kv::ConfigError;
use manifest::RunDir;

/// Worker-count variable for the DSMC ensemble pool.
const WORKERS_ENV: &str = "VHEAT_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "vheat", version, about = "Viscous heating under a divergence-free force")]
struct Cli {
    /// Parent directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the Gaussian moment closure identities by quadrature.
    MomentsVerify,
    /// BGK finite-difference solver.
    Bgk {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Hard-sphere DSMC ensemble.
    Dsmc {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Reduced compressible Navier–Stokes model.
    Cns {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Steady incompressible Navier–Stokes on the torus.
    SteadyNs {
        #[command(subcommand)]
        action: SolveAction,
    },
    /// Growth-exponent fitting.
    Fit {
        #[command(subcommand)]
        action: FitAction,
    },
    /// Write matplotlib scripts for a run directory.
    EmitPlots {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum RunAction {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint file (BGK only).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Slope window in decades for the exponent columns.
        #[arg(long, default_value_t = 0.25)]
        window: f64,
    },
}

#[derive(Debug, Subcommand)]
enum SolveAction {
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum FitAction {
    Slope {
        #[arg(long)]
        input: PathBuf,
        /// Fit a single field; both exponents are fitted when omitted.
        #[arg(long)]
        field: Option<Field>,
        /// Window width in decades.
        #[arg(long, default_value_t = 0.25)]
        window: f64,
        /// Trailing averaging window for beta, in time units.
        #[arg(long)]
        beta_window: Option<f64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Error classes with dedicated exit codes.
#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Numerical(String),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<DiagnosticsError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<BgkError>() {
            return if matches!(e, BgkError::Config(_)) { 2 } else { 3 };
        }
        if let Some(e) = cause.downcast_ref::<DsmcError>() {
            return if matches!(e, DsmcError::Config(_)) { 2 } else { 3 };
        }
        if let Some(e) = cause.downcast_ref::<CnsError>() {
            return if matches!(e, CnsError::Config(_)) { 2 } else { 3 };
        }
        if let Some(e) = cause.downcast_ref::<SteadyNsError>() {
            return match e {
                SteadyNsError::Config(_) => 2,
                SteadyNsError::NonConvergence { .. } => 4,
                SteadyNsError::Inconsistent { .. } => 3,
            };
        }
        if cause.is::<MomentsError>() {
            return 3;
        }
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Numerical(_) => 3,
            };
        }
    }
    1
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))
}

fn workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Range(format!("{WORKERS_ENV} = '{v}' (must be a positive integer)")))?;
            if n == 0 {
                return Err(ConfigError::Range(format!("{WORKERS_ENV} = 0 (must be >= 1)")).into());
            }
            Ok(n)
        }
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

fn moments_verify(out: &Path) -> Result<PathBuf> {
    let mut dir = RunDir::create(out, "moments-verify", "")?;
    let mut csv = String::from("identity,max_abs_error,tolerance,passed\n");
    let mut failed = 0;
    println!("{:<8} {:<8} {:<62} {:>11} {:>9}  ok", "alpha", "beta", "identity", "max error", "tol");
    for (wa, wb, quad, tol) in gauss_moments::standard_suite() {
        for r in gauss_moments::verify_appendix(&wa, &wb, &quad, tol)? {
            println!(
                "{:<8} {:<8} {:<62} {:>11.3e} {:>9.1e}  {}",
                wa.label,
                wb.label,
                r.identity_name,
                r.max_abs_error,
                r.tolerance,
                if r.passed { "yes" } else { "NO" }
            );
            csv.push_str(&format!(
                "\"[{}|{}] {}\",{:.6e},{:.1e},{}\n",
                wa.label, wb.label, r.identity_name, r.max_abs_error, r.tolerance, r.passed
            ));
            failed += usize::from(!r.passed);
        }
    }
    dir.write("moments.csv", csv.as_bytes())?;
    dir.note("failed_identities", failed);
    let path = dir.finish()?;
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} identities exceed tolerance")).into());
    }
    Ok(path)
}

fn write_slopes(dir: &mut RunDir, series: &GrowthSeries, window: f64) -> Result<()> {
    match diagnostics::slope_series(series, window, None) {
        Ok(s) => {
            dir.write("slopes.csv", s.to_csv().as_bytes())?;
        }
        Err(e) => warn!("slopes not written: {e}"),
    }
    Ok(())
}

fn bgk_run(out: &Path, config: &Path, resume: Option<&Path>, window: f64) -> Result<PathBuf> {
    let cfg = kv::bgk_config(&read_config(config)?)?;
    let state = match resume {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading checkpoint {}", p.display()))?;
            bgk::read_checkpoint(&bytes)?
        }
        None => bgk::SolverState::initial(&cfg)?,
    };
    let mut dir = RunDir::create(out, "bgk", &kv::render_bgk(&cfg))?;
    if let Some(p) = resume {
        dir.note("resumed_from", p.display());
    }
    info!("bgk run: kn = {}, f0 = {}, t_end = {}", cfg.kn, cfg.f0, cfg.t_end);
    let run = bgk::run_from(&cfg, state)?;
    dir.write("series.csv", run.series.to_csv().as_bytes())?;
    write_slopes(&mut dir, &GrowthSeries::from(&run.series), window)?;
    for (t, m) in &run.series.snapshots {
        dir.write(&format!("snapshots/snapshot_t{t:.6e}.csv"), m.to_csv(&cfg.grid).as_bytes())?;
    }
    dir.write("checkpoint.bin", &bgk::write_checkpoint(&run.state))?;
    dir.note("steps", run.state.step_count);
    dir.note("clipped_values", run.state.clipped);
    dir.note("remap_events", run.state.remaps.len());
    for e in &run.state.remaps {
        dir.note(
            "remap",
            format!(
                "t = {:.6e}, scale {:.6} -> {:.6}, defect {:.3e}",
                e.time, e.old_scale, e.new_scale, e.defect
            ),
        );
    }
    dir.finish()
}

fn dsmc_run(out: &Path, config: &Path, window: f64) -> Result<PathBuf> {
    let cfg = kv::dsmc_config(&read_config(config)?)?;
    let n = workers()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
    let mut dir = RunDir::create(out, "dsmc", &kv::render_dsmc(&cfg))?;
    info!("dsmc ensemble: {} runs on {n} workers", cfg.n_ensemble);
    let avg = pool.install(|| dsmc::run_ensemble(&cfg))?;
    for r in &avg.runs {
        dir.write(&format!("runs/run_seed{}.csv", r.seed), r.to_csv().as_bytes())?;
    }
    dir.write("aggregate.csv", avg.to_csv().as_bytes())?;
    let growth = GrowthSeries {
        times: avg.times.clone(),
        theta_av: avg.theta_av_mean.clone(),
        u2_av: avg.u2_av_mean.clone(),
    };
    write_slopes(&mut dir, &growth, window)?;
    dir.note(
        "seeds",
        avg.seeds().iter().map(u64::to_string).collect::<Vec<_>>().join(","),
    );
    dir.note("workers", n);
    dir.finish()
}

fn cns_run(out: &Path, config: &Path) -> Result<PathBuf> {
    let cfg = kv::cns_config(&read_config(config)?)?;
    let mut dir = RunDir::create(out, "cns", &kv::render_cns(&cfg))?;
    let series = cns::run(&cfg)?;
    dir.write("series.csv", series.to_csv().as_bytes())?;
    let worst = series
        .times
        .iter()
        .zip(series.relative_error())
        .filter(|(t, _)| (10.0..=1000.0).contains(*t))
        .map(|(_, e)| e)
        .fold(0.0, f64::max);
    dir.note("max_rel_error_10_1000", format!("{worst:.4e}"));
    if let Some(s) = series.slope.last() {
        dir.note("final_slope", format!("{s:.6}"));
    }
    dir.finish()
}

fn steady_solve(out: &Path, config: &Path) -> Result<PathBuf> {
    let run = kv::steady_config(&read_config(config)?)?;
    let report = steady_ns::solve_steady(&run.config)?;
    let mut dir = RunDir::create(out, "steady-ns", &kv::render_steady(&run))?;
    dir.write("solution.csv", report.u.to_csv().as_bytes())?;
    let mut log = String::from("iteration,residual\n");
    for (k, r) in report.residual_history.iter().enumerate() {
        log.push_str(&format!("{},{:.6e}\n", k + 1, r));
    }
    dir.write("residual.csv", log.as_bytes())?;
    let mut cert = report.certificate();
    match steady_ns::nsf_theta(&report.u, run.kappa, 1e-10) {
        Ok(t) => cert.push_str(&format!("nsf_theta_norm: {:.3e} (sweeps {})\n", t.norm, t.sweeps)),
        Err(e) => cert.push_str(&format!("nsf_theta: {e}\n")),
    }
    print!("{cert}");
    dir.write("certificate.txt", cert.as_bytes())?;
    dir.note("iterations", report.iterations);
    dir.note("residual", format!("{:.3e}", report.residual));
    dir.finish()
}

/// Reads `t` and the growth columns from a CSV, accepting the column names
/// written by every solver.
fn read_growth(path: &Path) -> Result<GrowthSeries> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let find = |names: &[&str]| names.iter().find_map(|n| header.iter().position(|h| h == n));
    let t = find(&["t"]).ok_or_else(|| ConfigError::Range(format!("{} has no 't' column", path.display())))?;
    let th = find(&["theta_av", "theta_av_mean"]);
    let u2 = find(&["u2_av", "u2_av_mean", "u2_amplitude"]);
    if th.is_none() && u2.is_none() {
        return Err(ConfigError::Range(format!("{} has no theta_av or u2_av column", path.display())).into());
    }
    let mut s = GrowthSeries::default();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let get = |c: Option<usize>| -> Result<f64> {
            match c {
                None => Ok(f64::NAN),
                Some(c) => cells
                    .get(c)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| ConfigError::Range(format!("{}: bad value on data row {}", path.display(), i + 1)).into()),
            }
        };
        s.times.push(get(Some(t))?);
        s.theta_av.push(get(th)?);
        s.u2_av.push(get(u2)?);
    }
    Ok(s)
}

fn fit_slope(
    input: &Path,
    field: Option<Field>,
    window: f64,
    beta_window: Option<f64>,
    output: Option<&Path>,
) -> Result<()> {
    let series = read_growth(input)?;
    let slopes = match field {
        Some(f) => {
            if series.field(f).iter().all(|v| v.is_nan()) {
                return Err(ConfigError::Range(format!("{} has no {} column", input.display(), f.name())).into());
            }
            diagnostics::field_slope(&series, f, window)?
        }
        None => diagnostics::slope_series(&series, window, beta_window)?,
    };
    let csv = slopes.to_csv();
    match output {
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let out = cli.out.as_path();
    let dir = match cli.command {
        Command::MomentsVerify => moments_verify(out)?,
        Command::Bgk {
            action: RunAction::Run { config, resume, window },
        } => bgk_run(out, &config, resume.as_deref(), window)?,
        Command::Dsmc {
            action: RunAction::Run { config, resume, window },
        } => {
            if resume.is_some() {
                bail!(ConfigError::Range("--resume is only supported by bgk run".into()));
            }
            dsmc_run(out, &config, window)?
        }
        Command::Cns {
            action: RunAction::Run { config, resume, .. },
        } => {
            if resume.is_some() {
                bail!(ConfigError::Range("--resume is only supported by bgk run".into()));
            }
            cns_run(out, &config)?
        }
        Command::SteadyNs {
            action: SolveAction::Solve { config },
        } => steady_solve(out, &config)?,
        Command::Fit {
            action:
                FitAction::Slope {
                    input,
                    field,
                    window,
                    beta_window,
                    output,
                },
        } => return fit_slope(&input, field, window, beta_window, output.as_deref()),
        Command::EmitPlots { run_dir } => {
            for p in plots::emit_plots(&run_dir)? {
                println!("{}", p.display());
            }
            return Ok(());
        }
    };
    println!("{}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
