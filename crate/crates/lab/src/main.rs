use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use knapp_lab::config::ExperimentConfig;
use knapp_lab::fit::fit_exponent;
use knapp_lab::report::{default_targets, emit_report, series, Abscissa, Quantity};
use knapp_lab::sweep::{failed_certificates, prepare, run_sweep};
use knapp_lab::table::read_rows;

#[derive(Parser)]
#[command(name = "knapp", version, about = "Concentrating quasimodes on space forms: sweeps and exponent fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum XAxis {
    Lambda,
    LambdaDelta,
}

#[derive(Subcommand)]
enum Command {
    /// Check the manifold and the group searches of a config.
    Validate { config: PathBuf },
    /// Run a sweep; writes the CSV and, unless disabled, a summary.
    Sweep {
        config: PathBuf,
        /// Overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recompute every row.
        #[arg(long)]
        no_cache: bool,
    },
    /// Fit a log-log exponent to a result CSV.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Defaults to lambda for sphere tables, lambda-delta for flat ones.
        #[arg(long, value_enum)]
        x: Option<XAxis>,
        /// ratio, p1, p2, p4, or f1, f2, f4 for unnormalized norms.
        #[arg(long, default_value = "ratio")]
        y: String,
    },
    /// Write summary and plot data for a result CSV.
    Report {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_targets: bool,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let ctx = prepare(&cfg).map_err(|e| e.to_string())?;
            println!("{}", ctx.describe());
            println!("degrees: {:?}", ctx.degrees(&cfg.degrees));
            Ok(true)
        }
        Command::Sweep { config, out, no_cache } => {
            let mut cfg = load_config(&config)?;
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            let ctx = prepare(&cfg).map_err(|e| e.to_string())?;
            eprintln!("{}", ctx.describe());
            let cache = cfg.out_dir.join("cache");
            let outcome =
                run_sweep(&ctx, &cfg, if no_cache { None } else { Some(&cache) }).map_err(|e| e.to_string())?;
            let targets: Vec<_> =
                default_targets(&outcome.rows).into_iter().filter(|t| cfg.targets.keeps(&t.name)).collect();
            let stem = cfg.csv_name.trim_end_matches(".csv");
            let (files, summary) =
                emit_report(&outcome.rows, &targets, &cfg.out_dir, stem).map_err(|e| e.to_string())?;
            eprintln!("{} degrees computed, {} from cache", outcome.computed, outcome.cached);
            println!("csv: {}", files.csv.display());
            if let Some(s) = &summary {
                for t in &s.targets {
                    match &t.fit {
                        Some(f) => println!(
                            "{}: exponent {:.4} (target {:.4} ± {}) {}",
                            t.target.name,
                            f.exponent,
                            t.target.exponent,
                            t.target.tolerance,
                            if t.pass { "pass" } else { "FAIL" }
                        ),
                        None => println!("{}: {}", t.target.name, t.error.as_deref().unwrap_or("no fit")),
                    }
                }
            }
            let mut ok = summary.as_ref().is_none_or(|s| s.targets.iter().all(|t| t.pass));
            for row in &outcome.rows {
                let failed = failed_certificates(row, &cfg.require);
                if !failed.is_empty() {
                    ok = false;
                    eprintln!("k = {} R = {}: {} ({})", row.k, row.tube_r, failed.join(", "), row.status);
                }
            }
            Ok(ok)
        }
        Command::Fit { csv, target, tolerance, x, y } => {
            let rows = read_rows(fs::File::open(&csv).map_err(|e| format!("{}: {e}", csv.display()))?)
                .map_err(|e| e.to_string())?;
            let quantity = Quantity::parse(&y).ok_or_else(|| format!("unknown quantity {y:?}"))?;
            let flat = rows.iter().any(|r| r.is_ok() && r.is_flat());
            let x = match x {
                Some(XAxis::Lambda) => Abscissa::Lambda,
                Some(XAxis::LambdaDelta) => Abscissa::LambdaDelta,
                None if flat => Abscissa::LambdaDelta,
                None => Abscissa::Lambda,
            };
            let fit = fit_exponent(&series(&rows, x, quantity)).map_err(|e| e.to_string())?;
            let pass = (fit.exponent - target).abs() <= tolerance;
            println!(
                "exponent {:.6} intercept {:.6} max_residual {:.3e} samples {} loo_shift {:.3e} target {} ± {} {}",
                fit.exponent,
                fit.intercept,
                fit.max_residual,
                fit.samples,
                fit.loo_shift,
                target,
                tolerance,
                if pass { "pass" } else { "FAIL" }
            );
            Ok(pass)
        }
        Command::Report { csv, out, no_targets } => {
            let rows = read_rows(fs::File::open(&csv).map_err(|e| format!("{}: {e}", csv.display()))?)
                .map_err(|e| e.to_string())?;
            let dir = out.unwrap_or_else(|| csv.parent().map(Path::to_path_buf).unwrap_or_default());
            let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            let targets = if no_targets { Vec::new() } else { default_targets(&rows) };
            let (files, summary) = emit_report(&rows, &targets, &dir, stem).map_err(|e| e.to_string())?;
            if let Some(p) = &files.summary {
                println!("summary: {}", p.display());
            }
            Ok(summary.is_none_or(|s| s.targets.iter().all(|t| t.pass)))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
