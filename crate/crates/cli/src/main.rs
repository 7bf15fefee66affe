//! Batch front door: config ingestion, experiment dispatch, the validation
//! suite, and report emission.
//!
//! Exit codes: 0 on success, 1 on an invariant or runtime failure, 2 on a
//! config error.

mod emit;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use lindblad_egorov::correspondence::{
    duhamel_corrector, run_experiment, scaling_sweep, CorrespondenceReport, ExperimentConfig,
    Mode,
};
use lindblad_egorov::validation;
use lindblad_egorov::weyl::BOX_FLOOR;
use lindblad_egorov::Error as CoreError;

use manifest::{PolicyConstants, RunManifest, Timings};

#[derive(Parser)]
#[command(
    name = "lindblad-egorov",
    version,
    about = "Compare Lindblad density-matrix evolution with its Fokker-Planck symbol dynamics"
)]
struct Cli {
    /// JSON experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON reports
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep dispatch (env LINDBLAD_EGOROV_THREADS as fallback)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the randomized validation checks
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// One correspondence experiment from the config
    Run,
    /// h- or gamma-sweep with a log-log slope fit
    Sweep,
    /// Closed-system (gamma = 0) transport study
    Egorov,
    /// Execute the full invariant suite and print a pass/fail table
    Validate,
    /// First Duhamel corrector next to the plain distance
    Corrector,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Egorov => "egorov",
            Command::Validate => "validate",
            Command::Corrector => "corrector",
        }
    }
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn config_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::Config(_)
            | CoreError::UnknownPreset { .. }
            | CoreError::SweepTooSmall(_)
            | CoreError::NegativeGamma(_)
            | CoreError::InvalidGrid(_)
            | CoreError::OddPointCount(_)
            | CoreError::NonPositiveStep(_)
            | CoreError::BadTimeSpan { .. }
            | CoreError::UndersizedBox { .. }
            | CoreError::EnvelopeUndefined(_)
    )
}

fn parse_config(path: &Path) -> Result<ExperimentConfig, (u8, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_CONFIG, format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| (EXIT_CONFIG, format!("config parse error in {}: {e}", path.display())))?;
    cfg.validate()
        .map_err(|e| (EXIT_CONFIG, format!("config error: {e}")))?;
    Ok(cfg)
}

fn threads_from(cli: &Cli) -> usize {
    cli.threads
        .or_else(|| {
            std::env::var("LINDBLAD_EGOROV_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), (u8, String)> {
    let seed = cli.seed.unwrap_or(2026);
    let threads = threads_from(cli);

    if cli.command == Command::Validate {
        return run_validate(seed);
    }

    let t0 = Instant::now();
    let config_path = cli
        .config
        .as_ref()
        .ok_or((EXIT_CONFIG, "--config <path> is required".to_string()))?;
    let mut cfg = parse_config(config_path)?;

    match cli.command {
        Command::Egorov => {
            cfg.mode = Mode::Egorov;
            if cfg.gamma != 0.0 {
                return Err((
                    EXIT_CONFIG,
                    "config error: the egorov study requires gamma = 0".into(),
                ));
            }
        }
        Command::Sweep => {
            if cfg.h_list.is_none() && cfg.gamma_list.is_none() {
                return Err((
                    EXIT_CONFIG,
                    "config error: sweep needs h_list or gamma_list".into(),
                ));
            }
        }
        Command::Corrector => {
            cfg.mode = Mode::Corrector;
        }
        _ => {}
    }
    cfg.validate()
        .map_err(|e| (EXIT_CONFIG, format!("config error: {e}")))?;
    let parse_s = t0.elapsed().as_secs_f64();

    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("out-{}", cli.command.name())));

    let t1 = Instant::now();
    let classify = |e: CoreError| -> (u8, String) {
        let code = if config_error(&e) { EXIT_CONFIG } else { EXIT_FAILURE };
        (code, e.to_string())
    };
    let report: CorrespondenceReport = match cli.command {
        Command::Run | Command::Egorov => run_experiment(&cfg).map_err(classify)?,
        Command::Sweep => scaling_sweep(&cfg, threads).map_err(classify)?,
        Command::Corrector => duhamel_corrector(&cfg).map_err(classify)?.1,
        Command::Validate => unreachable!(),
    };
    let compute_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut outputs = Vec::new();
    let csv_path;
    match cli.command {
        Command::Sweep => {
            csv_path = out_dir.join("sweep.csv");
            emit::write_sweep_csv(&report, &csv_path)
                .map_err(|e| (EXIT_FAILURE, format!("{e:#}")))?;
        }
        Command::Corrector => {
            csv_path = out_dir.join("run.csv");
            emit::write_run_csv(&report, &csv_path)
                .map_err(|e| (EXIT_FAILURE, format!("{e:#}")))?;
            let cpath = out_dir.join("corrector.csv");
            emit::write_corrector_csv(&report, &cpath)
                .map_err(|e| (EXIT_FAILURE, format!("{e:#}")))?;
            outputs.push(cpath.display().to_string());
        }
        _ => {
            csv_path = out_dir.join("run.csv");
            emit::write_run_csv(&report, &csv_path)
                .map_err(|e| (EXIT_FAILURE, format!("{e:#}")))?;
        }
    }
    outputs.push(csv_path.display().to_string());

    let report_path = out_dir.join("report.json");
    let manifest_path = out_dir.join("manifest.json");
    outputs.push(report_path.display().to_string());
    outputs.push(manifest_path.display().to_string());

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        config_path: Some(config_path.display().to_string()),
        config: Some(cfg.clone()),
        policy: PolicyConstants {
            c0: cfg.c0(),
            box_floor: BOX_FLOOR,
            fit_fraction: cfg.fit_fraction(),
            crosscheck_tol: 1e-9,
            contraction_tol: 1e-6,
            seed,
            threads,
        },
        timings: Timings {
            parse_s,
            compute_s,
            emit_s: t2.elapsed().as_secs_f64(),
        },
        outputs,
    };
    emit::write_report_json(&report, &manifest, &report_path)
        .map_err(|e| (EXIT_FAILURE, format!("{e:#}")))?;
    emit::write_manifest_json(&manifest, &manifest_path)
        .map_err(|e| (EXIT_FAILURE, format!("{e:#}")))?;

    if !report.audit.box_floor_ok {
        eprintln!(
            "warning: box floor violated (quantum {:.3e}, classical {:.3e}); enlarge the box",
            report.audit.box_floor_quantum, report.audit.box_floor_classical
        );
    }
    if !report.audit.gamma_regime_ok {
        eprintln!("warning: gamma < 1/h does not hold for this configuration");
    }
    println!(
        "{}: wrote {} samples to {} (cfit = {:.6e}, envelope inflation = {:.3})",
        cli.command.name(),
        report.times.len(),
        out_dir.display(),
        report.cfit,
        report.envelope_inflation
    );
    if let Some(sweep) = &report.sweep {
        println!(
            "sweep[{}]: slope = {:.4}, residual = {:.3e}, floor_dominated = {}, monotone_slack = {:.3e}",
            sweep.axis, sweep.slope, sweep.residual, sweep.floor_dominated, sweep.monotone_slack
        );
    }
    Ok(())
}

fn run_validate(seed: u64) -> Result<(), (u8, String)> {
    let results = validation::run_all(seed);
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(10);
    let mut failed = 0usize;
    println!("{:<w$}  {:^6}  {:>12}  {:>12}  detail", "check", "status", "measured", "threshold", w = width);
    for r in &results {
        let rel = if r.lower_bound { ">=" } else { "<=" };
        println!(
            "{:<w$}  {:^6}  {:>12.3e}  {rel} {:>9.3e}  {}",
            r.name,
            if r.pass { "pass" } else { "FAIL" },
            r.measured,
            r.threshold,
            r.detail,
            w = width
        );
        if !r.pass {
            failed += 1;
        }
    }
    println!(
        "{} checks, {} failed (seed {seed})",
        results.len(),
        failed
    );
    if failed > 0 {
        Err((EXIT_FAILURE, format!("{failed} validation checks failed")))
    } else {
        Ok(())
    }
}
