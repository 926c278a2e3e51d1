//! `recmon` command line harness: Monte Carlo scenario runs, information
//! curves, target-information calculation and event-file fits.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use recmon::blinded::{fit_blinded_lumping, fit_blinded_mixture, blinded_fisher, BlindedMethod};
use recmon::config::load_config;
use recmon::constrate::{fit_const_blinded, fit_const_unblinded, info_const_blinded};
use recmon::curve::{all_monitored_procedures, information_curve};
use recmon::engine::run_scenario;
use recmon::error::Error;
use recmon::events::load_blinded_events;
use recmon::mle::fit_trend;
use recmon::model::AllocationWeights;
use recmon::monitor::{target_information, Procedure};
use recmon::report::write_reports;

#[derive(Parser)]
#[command(
    name = "recmon",
    about = "Blinded continuous information monitoring for recurrent-event trials",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo scenarios of a configuration file.
    Simulate {
        /// Scenario configuration file.
        config: PathBuf,
        /// Output directory for report.csv / report.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Blinded information curves over calendar time for an event file with
    /// entry dates.
    Curve(CurveArgs),
    /// Target information for a one-sided level, power and rate ratio.
    TargetInfo {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        power: f64,
        /// Rate ratio exp(beta_h1) under the alternative.
        #[arg(long)]
        rate_ratio: f64,
    },
    /// Fit models to an event file: the trend model when group labels are
    /// present, the pooled blinded procedures with --blinded.
    Fit(FitArgs),
}

#[derive(Args)]
struct CurveArgs {
    /// Event file with header subject_id,entry_years,exposure_years,event_times.
    events: PathBuf,
    /// Monitoring effect beta_H1 (log rate ratio).
    #[arg(long)]
    beta_h1: f64,
    /// Procedure(s); repeat the flag for several. Default: all four.
    #[arg(long = "procedure")]
    procedures: Vec<String>,
    /// Treatment allocation weight.
    #[arg(long, default_value_t = 0.5)]
    w_treatment: f64,
    /// Grid start in calendar years (default: first feasible point).
    #[arg(long)]
    grid_start: Option<f64>,
    /// Grid step in calendar years.
    #[arg(long, default_value_t = 1.0 / 52.0)]
    grid_step: f64,
    /// Grid end in calendar years (default: last subject's end of follow-up).
    #[arg(long)]
    grid_end: Option<f64>,
    /// Starting alpha0 for the blinded fits.
    #[arg(long)]
    alpha0_init: Option<f64>,
    /// Write the curve CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Event file (canonical blinded format; optional group column).
    events: PathBuf,
    /// Fit the blinded nuisance model instead of the unblinded one.
    #[arg(long)]
    blinded: bool,
    /// Monitoring effect beta_H1 (log rate ratio); required with --blinded.
    #[arg(long)]
    beta_h1: Option<f64>,
    /// Blinded procedure: trend-lump, trend-mix, const-lump or const-mix.
    #[arg(long)]
    procedure: Option<String>,
    /// Treatment allocation weight.
    #[arg(long, default_value_t = 0.5)]
    w_treatment: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> recmon::Result<()> {
    match cli.command {
        Command::Simulate { config, out, workers } => {
            let scenarios = load_config(&config)?;
            if scenarios.is_empty() {
                println!("no scenarios in {}", config.display());
                return Ok(());
            }
            let mut summaries = Vec::with_capacity(scenarios.len());
            for sc in &scenarios {
                let summary = run_scenario(sc, workers)?;
                println!(
                    "{}: reject_rate={:.4} (mc {:.4}) mean_stop={:.3} mean_n={:.1} skipped={} failures={}{}",
                    summary.label,
                    summary.reject_rate,
                    summary.mc_error,
                    summary.mean_stop_time,
                    summary.mean_n,
                    summary.skipped_fit_count,
                    summary.final_fit_failures,
                    if summary.degraded { " DEGRADED" } else { "" },
                );
                summaries.push(summary);
            }
            write_reports(&summaries, &out)?;
            println!("reports written to {}", out.display());
            Ok(())
        }
        Command::Curve(args) => {
            let data = load_blinded_events(&args.events)?;
            let weights = AllocationWeights::new(args.w_treatment)?;
            let procedures = if args.procedures.is_empty() {
                all_monitored_procedures()
            } else {
                args.procedures
                    .iter()
                    .map(|s| Procedure::parse(s))
                    .collect::<recmon::Result<Vec<_>>>()?
            };
            let entries = data.entries.as_ref().ok_or_else(|| {
                Error::invalid("curve needs the entry_years column in the event file")
            })?;
            let end = args.grid_end.unwrap_or_else(|| {
                entries
                    .iter()
                    .zip(&data.snapshot.subjects)
                    .map(|(e, s)| e + s.exposure)
                    .fold(0.0f64, f64::max)
            });
            let start = args.grid_start.unwrap_or_else(|| {
                entries.iter().cloned().fold(f64::INFINITY, f64::min) + args.grid_step
            });
            if !(end > start) {
                return Err(Error::invalid(format!("empty grid: start {start}, end {end}")));
            }
            let mut grid = Vec::new();
            let mut k = 0u32;
            loop {
                let t = start + f64::from(k) * args.grid_step;
                if t >= end - 1e-9 {
                    grid.push(end);
                    break;
                }
                grid.push(t);
                k += 1;
            }
            // The alpha0 hint seeds nothing today beyond validation; blinded
            // fits self-start from the pooled event rate.
            if let Some(a0) = args.alpha0_init {
                if !a0.is_finite() {
                    return Err(Error::invalid("alpha0-init must be finite"));
                }
            }
            let table = information_curve(&data, args.beta_h1, &weights, &procedures, &grid)?;
            let csv = table.to_csv();
            match args.out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::TargetInfo { alpha, power, rate_ratio } => {
            if !(rate_ratio > 0.0) {
                return Err(Error::invalid("rate ratio must be positive"));
            }
            let info = target_information(alpha, power, rate_ratio.ln())?;
            println!("{info:.4}");
            Ok(())
        }
        Command::Fit(args) => {
            let data = load_blinded_events(&args.events)?;
            let weights = AllocationWeights::new(args.w_treatment)?;
            if args.blinded {
                let beta_h1 = args
                    .beta_h1
                    .ok_or_else(|| Error::invalid("--blinded requires --beta-h1"))?;
                let procedure = Procedure::parse(
                    args.procedure.as_deref().unwrap_or("trend-lump"),
                )?;
                let snap = data.snapshot.blinded();
                match procedure {
                    Procedure::TrendLump | Procedure::TrendMix => {
                        let fit = match procedure.blinded_method().unwrap() {
                            BlindedMethod::Lumping => {
                                fit_blinded_lumping(&snap, beta_h1, &weights, None)?
                            }
                            BlindedMethod::Mixture => {
                                fit_blinded_mixture(&snap, beta_h1, &weights, None)?
                            }
                        };
                        println!(
                            "method={} converged={} iterations={}",
                            procedure.name(),
                            fit.converged,
                            fit.iterations
                        );
                        println!("alpha0_b={:.6}", fit.alpha0_b);
                        println!("alpha1_b={:.6}", fit.alpha1_b);
                        println!("phi_b={:.6}", fit.phi_b);
                        let exposures: Vec<f64> =
                            snap.subjects.iter().map(|s| s.exposure).collect();
                        match blinded_fisher(&fit, beta_h1, &weights, &exposures, 0.0) {
                            Ok(bi) => println!("blinded_information={:.6}", bi.info),
                            Err(e) => println!("blinded_information=NA ({e})"),
                        }
                    }
                    Procedure::ConstLump | Procedure::ConstMix => {
                        let fit = fit_const_blinded(
                            &snap,
                            beta_h1,
                            &weights,
                            procedure.blinded_method().unwrap(),
                        )?;
                        println!(
                            "method={} converged={} iterations={}",
                            procedure.name(),
                            fit.converged,
                            fit.iterations
                        );
                        println!("mu_c_b={:.6}", fit.mu_c_b);
                        println!("mu_t_b={:.6}", fit.mu_t_b);
                        println!("varphi_b={:.6}", fit.varphi_b);
                        let exposures: Vec<f64> =
                            snap.subjects.iter().map(|s| s.exposure).collect();
                        match info_const_blinded(&fit, &weights, &exposures) {
                            Ok(j) => println!("blinded_information={j:.6}"),
                            Err(e) => println!("blinded_information=NA ({e})"),
                        }
                    }
                    Procedure::FixedDesign => {
                        return Err(Error::invalid("--blinded expects a monitored procedure"))
                    }
                }
                Ok(())
            } else {
                if !data.has_groups {
                    return Err(Error::invalid(
                        "unblinded fit needs a group column (T/C); use --blinded for pooled fits",
                    ));
                }
                let trend = fit_trend(&data.snapshot, None)?;
                println!("trend model: converged={} iterations={}", trend.converged, trend.iterations);
                println!("alpha0={:.6}", trend.estimates.alpha0);
                println!("alpha1={:.6}", trend.estimates.alpha1);
                println!("beta={:.6}", trend.estimates.beta);
                println!("rate_ratio={:.6}", trend.estimates.beta.exp());
                println!("phi={:.6}", trend.estimates.phi);
                println!("information_beta={:.6}", trend.information_beta);
                println!("wald={:.6}", trend.wald_statistic);
                let const_fit = fit_const_unblinded(&data.snapshot)?;
                println!(
                    "constant model: converged={} mu_t={:.6} mu_c={:.6} varphi={:.6} lrd={:.6} wald={:.6}",
                    const_fit.converged,
                    const_fit.params.mu_t,
                    const_fit.params.mu_c,
                    const_fit.params.varphi,
                    const_fit.log_rate_diff,
                    const_fit.wald_statistic,
                );
                Ok(())
            }
        }
    }
}
