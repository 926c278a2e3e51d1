// Temporary calibration harness: timings and desk-scale operating
// characteristics used while tuning. Not part of the deliverable surface.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recmon::engine::{run_scenario, solve_alpha0, Scenario};
use recmon::model::{AllocationWeights, ModelParams};
use recmon::monitor::{target_information, MonitoringSpec, Procedure};
use recmon::sim::{simulate_trial, snapshot, TrialDesign};

fn design(n: u32) -> TrialDesign {
    TrialDesign {
        n_total: n,
        weights: AllocationWeights::equal(),
        recruitment_period: 2.0,
        max_followup: 2.0,
        study_duration: 4.0,
        monitor_start: 0.5,
        monitor_step: 1.0 / 52.0,
    }
}

fn params(alpha1: f64, rr: f64) -> ModelParams {
    let a0 = solve_alpha0(1.5, 2.0, alpha1).unwrap();
    ModelParams::new(a0, alpha1, rr.ln(), 1.25).unwrap()
}

fn scenario(proc_: Procedure, n: u32, alpha1: f64, rr_true: f64, rr_h1: f64, reps: u32, seed: u64) -> Scenario {
    let target = target_information(0.025, 0.8, rr_h1.ln()).unwrap();
    Scenario {
        label: format!("{}-{n}-{alpha1}-{rr_true}", proc_.name()),
        design: design(n),
        true_params: params(alpha1, rr_true),
        spec: MonitoringSpec {
            procedure: proc_,
            beta_h1: rr_h1.ln(),
            alpha: 0.025,
            target_info: target,
            weights: AllocationWeights::equal(),
            allow_extension: false,
        },
        replications: reps,
        seed,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("all");

    if mode == "all" || mode == "fit" {
        // large-sample fit check
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = design(10_000);
        let p = params(-1.0, 0.5);
        let trial = simulate_trial(&d, &p, &mut rng).unwrap();
        let snap = snapshot(&trial, &d, 4.0, false);
        let t0 = Instant::now();
        let fit = recmon::mle::fit_trend(&snap, None).unwrap();
        println!(
            "fit n=10000: {:?} iters={} a0={:.4} (truth {:.4}) a1={:.4} beta={:.4} phi={:.4} info={:.1} wald={:.2} [{:?}]",
            fit.converged, fit.iterations, fit.estimates.alpha0, p.alpha0,
            fit.estimates.alpha1, fit.estimates.beta, fit.estimates.phi,
            fit.information_beta, fit.wald_statistic, t0.elapsed()
        );
    }

    if mode == "all" || mode == "timing" {
        // per-replication monitored timing at n=148
        for proc_ in [Procedure::TrendLump, Procedure::TrendMix, Procedure::ConstLump] {
            let sc = scenario(proc_, 148, -1.0, 0.5, 0.5, 20, 11);
            let t0 = Instant::now();
            let s = run_scenario(&sc, Some(2)).unwrap();
            println!(
                "{}: 20 reps in {:?} -> per-rep {:.1?} reject={:.2} stop={:.2} skipped={}",
                proc_.name(),
                t0.elapsed(),
                t0.elapsed() / 20,
                s.reject_rate,
                s.mean_stop_time,
                s.skipped_fit_count
            );
        }
    }

    if mode == "all" || mode == "fixed" {
        // fixed-design level and power, 2000 reps
        let t0 = Instant::now();
        let s = run_scenario(&scenario(Procedure::FixedDesign, 510, -0.25, 1.0, 0.7, 2000, 21), Some(2)).unwrap();
        println!("fixed level n=510 a1=-0.25: {:.4} (mc {:.4}) [{:?}]", s.reject_rate, s.mc_error, t0.elapsed());
        let t0 = Instant::now();
        let s = run_scenario(&scenario(Procedure::FixedDesign, 148, -1.0, 0.5, 0.5, 2000, 22), Some(2)).unwrap();
        println!("fixed power n=148 a1=-1: {:.4} (mc {:.4}) [{:?}]", s.reject_rate, s.mc_error, t0.elapsed());
    }

    if mode == "all" || mode == "monitor" {
        // desk-scale monitored runs, 500 reps each
        for (proc_, n, a1, rr_true) in [
            (Procedure::TrendLump, 148, -1.0, 0.5),
            (Procedure::TrendMix, 148, -1.0, 0.5),
            (Procedure::TrendLump, 222, -1.0, 0.5),
            (Procedure::TrendMix, 222, -1.0, 0.5),
            (Procedure::ConstLump, 222, -1.0, 0.5),
        ] {
            let sc = scenario(proc_, n, a1, rr_true, 0.5, 500, 33);
            let t0 = Instant::now();
            let s = run_scenario(&sc, Some(2)).unwrap();
            println!(
                "{} n={} a1={}: reject={:.3} stop={:.3} sd={:.2} early={:.2} n_mean={:.0} skipped={} fail={} [{:?}]",
                proc_.name(), n, a1, s.reject_rate, s.mean_stop_time, s.sd_stop_time,
                s.mean_stopped_early, s.mean_n, s.skipped_fit_count, s.final_fit_failures,
                t0.elapsed()
            );
        }
    }
}
