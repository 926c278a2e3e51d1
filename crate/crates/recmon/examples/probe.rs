// Temporary: inspect lumping fit failures along the monitoring grid.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recmon::blinded::{fit_blinded_lumping_stats, fit_blinded_mixture_stats, Nuisance};
use recmon::engine::solve_alpha0;
use recmon::model::{AllocationWeights, ModelParams};
use recmon::sim::{simulate_trial, TrialCursor, TrialDesign};

fn main() {
    let d = TrialDesign {
        n_total: 148,
        weights: AllocationWeights::equal(),
        recruitment_period: 2.0,
        max_followup: 2.0,
        study_duration: 4.0,
        monitor_start: 0.5,
        monitor_step: 1.0 / 52.0,
    };
    let a0 = solve_alpha0(1.5, 2.0, -1.0).unwrap();
    let p = ModelParams::new(a0, -1.0, 0.5f64.ln(), 1.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    rng.set_stream(std::env::args().nth(2).map(|v| v.parse().unwrap()).unwrap_or(0));
    let trial = simulate_trial(&d, &p, &mut rng).unwrap();
    let cursor = TrialCursor::new(&trial, &d);
    let w = AllocationWeights::equal();
    let mut warm: Option<Nuisance> = None;
    let mut fails = 0;
    let mut k = 0u32;
    loop {
        let t = 0.5 + f64::from(k) * d.monitor_step;
        let t = if t >= 4.0 - 1e-9 { 4.0 } else { t };
        let stats = cursor.stats_at(t, true);
        if !stats.subjects.is_empty() && stats.total_events() > 0 {
            let which = std::env::args().nth(1).unwrap_or_default();
            let res = if which == "mix" { fit_blinded_mixture_stats(&stats, 0.5f64.ln(), &w, warm) } else { fit_blinded_lumping_stats(&stats, 0.5f64.ln(), &w, warm) };
            match res {
                Ok(f) if f.converged => {
                    warm = Some(Nuisance { alpha0: f.alpha0_b, alpha1: f.alpha1_b, phi: f.phi_b });
                }
                Ok(f) => {
                    fails += 1;
                    if fails <= 3 {
                        println!(
                            "t={t:.3} m={} ev={} FAIL iters={} a0={:.3} a1={:.3} phi={:.4} ll={:.4}",
                            stats.subjects.len(), stats.total_events(), f.iterations,
                            f.alpha0_b, f.alpha1_b, f.phi_b, f.loglik
                        );
                    }
                    warm = None;
                }
                Err(e) => {
                    fails += 1;
                    println!("t={t:.3} ERR {e}");
                    warm = None;
                }
            }
        }
        if t >= 4.0 { break; }
        k += 1;
    }
    println!("total fails: {fails}");
}
