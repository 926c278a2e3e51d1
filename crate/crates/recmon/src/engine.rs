//! Monte Carlo engine: replication-parallel scenario runs with seed-derived
//! independent random streams and a deterministic reduction, so results are
//! bit-reproducible regardless of the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::inv3;
use crate::mle::fisher_trend;
use crate::model::{AllocationWeights, GroupLabel, ModelParams};
use crate::monitor::{run_monitored_trial, target_information, MonitoringOutcome, MonitoringSpec};
use crate::sim::{simulate_trial, TrialDesign};

/// One simulation scenario: design, generating parameters, monitoring
/// procedure and Monte Carlo size.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub design: TrialDesign,
    pub true_params: ModelParams,
    pub spec: MonitoringSpec,
    pub replications: u32,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.true_params.validate()?;
        self.spec.validate()?;
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        Ok(())
    }
}

/// Aggregated operating characteristics of a scenario run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub replications: u32,
    pub reject_rate: f64,
    /// `sqrt(p (1-p) / replications)` for the rejection rate.
    pub mc_error: f64,
    pub mean_stop_time: f64,
    pub sd_stop_time: f64,
    pub mean_n: f64,
    pub mean_beta_hat: f64,
    /// `exp(mean beta_hat) - exp(beta_true)`.
    pub bias_exp_beta: f64,
    /// Total monitoring grid points skipped across replications.
    pub skipped_fit_count: u64,
    /// Replications whose final unblinded fit failed.
    pub final_fit_failures: u32,
    /// Flagged when more than 5% of replications had a fit problem.
    pub degraded: bool,
    pub mean_stopped_early: f64,
    /// Stopping-time histogram over grid values: (time, count), sorted.
    pub stop_time_histogram: Vec<(f64, u32)>,
}

/// Run every replication of a scenario. The per-replication stream is the
/// scenario seed with the replication index as the ChaCha stream, so the
/// worker count cannot change any draw.
pub fn run_scenario(sc: &Scenario, workers: Option<usize>) -> Result<ScenarioSummary> {
    sc.validate()?;
    let run = || -> Result<Vec<MonitoringOutcome>> {
        (0..sc.replications)
            .into_par_iter()
            .map(|rep| run_replication(sc, rep))
            .collect()
    };
    let outcomes = match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            pool.install(run)?
        }
        None => run()?,
    };
    Ok(summarize(sc, &outcomes))
}

/// Simulate and monitor one replication.
pub fn run_replication(sc: &Scenario, rep: u32) -> Result<MonitoringOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(u64::from(rep));
    let trial = simulate_trial(&sc.design, &sc.true_params, &mut rng)?;
    run_monitored_trial(&trial, &sc.design, &sc.spec)
}

fn summarize(sc: &Scenario, outcomes: &[MonitoringOutcome]) -> ScenarioSummary {
    let reps = outcomes.len() as f64;
    let rejects = outcomes.iter().filter(|o| o.reject).count() as f64;
    let p = rejects / reps;
    let mean_stop = outcomes.iter().map(|o| o.stop_time).sum::<f64>() / reps;
    let var_stop = if outcomes.len() > 1 {
        outcomes
            .iter()
            .map(|o| (o.stop_time - mean_stop) * (o.stop_time - mean_stop))
            .sum::<f64>()
            / (reps - 1.0)
    } else {
        0.0
    };
    let mean_n = outcomes.iter().map(|o| f64::from(o.n_analyzed)).sum::<f64>() / reps;
    let betas: Vec<f64> = outcomes.iter().filter_map(|o| o.beta_hat).collect();
    let mean_beta = if betas.is_empty() {
        f64::NAN
    } else {
        betas.iter().sum::<f64>() / betas.len() as f64
    };
    let skipped: u64 = outcomes.iter().map(|o| u64::from(o.skipped_points)).sum();
    let failures = outcomes.iter().filter(|o| !o.final_fit_converged).count() as u32;
    let mean_early =
        outcomes.iter().filter(|o| o.stopped_early).count() as f64 / reps;

    let mut hist: std::collections::BTreeMap<i64, u32> = std::collections::BTreeMap::new();
    for o in outcomes {
        // stop times land on grid values; key at micro-year resolution
        let key = (o.stop_time * 1e6).round() as i64;
        *hist.entry(key).or_insert(0) += 1;
    }
    let stop_time_histogram =
        hist.into_iter().map(|(k, c)| (k as f64 / 1e6, c)).collect::<Vec<_>>();

    ScenarioSummary {
        label: sc.label.clone(),
        replications: sc.replications,
        reject_rate: p,
        mc_error: (p * (1.0 - p) / reps).sqrt(),
        mean_stop_time: mean_stop,
        sd_stop_time: var_stop.sqrt(),
        mean_n,
        mean_beta_hat: mean_beta,
        bias_exp_beta: mean_beta.exp() - sc.true_params.beta.exp(),
        skipped_fit_count: skipped,
        final_fit_failures: failures,
        degraded: f64::from(failures) > 0.05 * reps,
        mean_stopped_early: mean_early,
        stop_time_histogram,
    }
}

/// Solve for `alpha0` so the control cumulative rate hits `target_cum_rate`
/// at `horizon`: `alpha0 = ln(target) - ln(horizon (e^{a1 h} - 1)/(a1 h))`.
pub fn solve_alpha0(target_cum_rate: f64, horizon: f64, alpha1: f64) -> Result<f64> {
    if !(target_cum_rate > 0.0) || !target_cum_rate.is_finite() {
        return Err(Error::invalid(format!(
            "target cumulative rate must be positive, got {target_cum_rate}"
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if !alpha1.is_finite() {
        return Err(Error::invalid("alpha1 must be finite"));
    }
    Ok(target_cum_rate.ln() - (horizon * crate::math::exp_m1_over(alpha1 * horizon)).ln())
}

/// Expected information for beta in a fixed design where every subject
/// reaches the full follow-up, with real-valued group sizes `n w_i`.
pub fn fixed_design_information(
    n_total: f64,
    weights: &AllocationWeights,
    params_h1: &ModelParams,
    followup: f64,
) -> Result<f64> {
    if !(n_total > 0.0) || !(followup > 0.0) {
        return Err(Error::invalid("n_total and followup must be positive"));
    }
    // Expected information of one subject per group, scaled by the
    // real-valued group sizes n w_i.
    let f_t = fisher_trend(params_h1, &[followup], &[])?;
    let f_c = fisher_trend(params_h1, &[], &[followup])?;
    let (nt, nc) = (n_total * weights.treatment(), n_total * weights.control());
    let mut m = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = nt * f_t[i][j] + nc * f_c[i][j];
        }
    }
    let inv = inv3(&m)?;
    if !(inv[2][2] > 0.0) {
        return Err(Error::Singular("variance of beta not positive".into()));
    }
    Ok(1.0 / inv[2][2])
}

/// Smallest total sample size whose fixed-design information reaches the
/// target for `(alpha, power, beta_h1)`; rounded up to an even total under
/// 1:1 allocation.
pub fn analytic_nfix(
    weights: &AllocationWeights,
    params_h1: &ModelParams,
    alpha: f64,
    power: f64,
    followup: f64,
) -> Result<u32> {
    let target = target_information(alpha, power, params_h1.beta)?;
    let per_subject = fixed_design_information(1.0, weights, params_h1, followup)?;
    let mut n = (target / per_subject).ceil() as u32;
    if (weights.treatment() - 0.5).abs() < 1e-12 && n % 2 == 1 {
        n += 1;
    }
    // Guard against ceil landing exactly below the target through rounding.
    while fixed_design_information(f64::from(n), weights, params_h1, followup)? < target {
        n += if (weights.treatment() - 0.5).abs() < 1e-12 { 2 } else { 1 };
    }
    Ok(n)
}

/// Monte Carlo search for the fixed-design sample size: bisection on the
/// simulated power of the trend-model Wald test. A cross-check utility, not
/// used by the monitoring procedures.
pub fn search_nfix_simulated(
    design_template: &TrialDesign,
    params_h1: &ModelParams,
    alpha: f64,
    power: f64,
    replications: u32,
    seed: u64,
) -> Result<u32> {
    let simulated_power = |n: u32| -> Result<f64> {
        let mut design = design_template.clone();
        design.n_total = n;
        let sc = Scenario {
            label: format!("nfix-probe-{n}"),
            design,
            true_params: *params_h1,
            spec: MonitoringSpec {
                procedure: crate::monitor::Procedure::FixedDesign,
                beta_h1: params_h1.beta,
                alpha,
                target_info: 1.0,
                weights: design_template.weights,
                allow_extension: false,
            },
            replications,
            seed,
        };
        Ok(run_scenario(&sc, None)?.reject_rate)
    };
    let (mut lo, mut hi) = (8u32, 64u32);
    while simulated_power(hi)? < power {
        lo = hi;
        hi *= 2;
        if hi > 1 << 16 {
            return Err(Error::Numerical("sample size search diverged".into()));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if simulated_power(mid)? < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Convenience: both-group event expectation for a design at given params,
/// used by tests for aggregate-count oracles.
pub fn expected_total_events(design: &TrialDesign, params: &ModelParams) -> f64 {
    let n = f64::from(design.n_total);
    let lam_c =
        crate::model::cumulative_rate_unchecked(params, GroupLabel::Control, design.max_followup);
    let lam_t = lam_c * params.beta.exp();
    n * (design.weights.treatment() * lam_t + design.weights.control() * lam_c)
}
