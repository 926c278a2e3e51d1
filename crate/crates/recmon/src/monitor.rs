//! Target-information calculation and the continuous monitoring loop:
//! evaluate blinded information on a calendar grid, stop at the first
//! crossing of the target, then unblind and run the procedure-matched test.

use crate::blinded::{
    blinded_info_value, fit_blinded_lumping_stats, fit_blinded_mixture_stats, BlindedMethod,
    Nuisance,
};
use crate::constrate::{fit_const_blinded_stats, fit_const_unblinded_stats, info_const_blinded};
use crate::error::{Error, Result};
use crate::math::normal_quantile;
use crate::mle::{fit_trend_stats, wald_decision};
use crate::model::{AllocationWeights, ModelParams};
use crate::sim::{SubjectPath, TrialCursor, TrialDesign};

/// Monitoring procedure: the trend or constant-rate information estimate,
/// each with lumping or mixture nuisance estimation, or no monitoring at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Procedure {
    TrendLump,
    TrendMix,
    ConstLump,
    ConstMix,
    FixedDesign,
}

impl Procedure {
    pub fn is_fixed(self) -> bool {
        matches!(self, Procedure::FixedDesign)
    }

    pub fn uses_trend_model(self) -> bool {
        matches!(self, Procedure::TrendLump | Procedure::TrendMix | Procedure::FixedDesign)
    }

    pub fn blinded_method(self) -> Option<BlindedMethod> {
        match self {
            Procedure::TrendLump | Procedure::ConstLump => Some(BlindedMethod::Lumping),
            Procedure::TrendMix | Procedure::ConstMix => Some(BlindedMethod::Mixture),
            Procedure::FixedDesign => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Procedure::TrendLump => "trend-lump",
            Procedure::TrendMix => "trend-mix",
            Procedure::ConstLump => "const-lump",
            Procedure::ConstMix => "const-mix",
            Procedure::FixedDesign => "fixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trend-lump" => Ok(Procedure::TrendLump),
            "trend-mix" => Ok(Procedure::TrendMix),
            "const-lump" => Ok(Procedure::ConstLump),
            "const-mix" => Ok(Procedure::ConstMix),
            "fixed" => Ok(Procedure::FixedDesign),
            other => Err(Error::invalid(format!(
                "unknown procedure '{other}' (expected trend-lump, trend-mix, const-lump, const-mix or fixed)"
            ))),
        }
    }
}

/// What to monitor and how to test at the end.
#[derive(Debug, Clone, Copy)]
pub struct MonitoringSpec {
    pub procedure: Procedure,
    /// Planning alternative on the log rate-ratio scale.
    pub beta_h1: f64,
    /// One-sided significance level.
    pub alpha: f64,
    pub target_info: f64,
    pub weights: AllocationWeights,
    /// Continue the grid past the planned duration when the target has not
    /// been reached (exposures still cap at max follow-up). Off by default.
    pub allow_extension: bool,
}

impl MonitoringSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::invalid(format!(
                "one-sided level must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        if !(self.target_info > 0.0) || !self.target_info.is_finite() {
            return Err(Error::invalid(format!(
                "target information must be positive, got {}",
                self.target_info
            )));
        }
        if !self.beta_h1.is_finite() {
            return Err(Error::invalid("beta_h1 must be finite"));
        }
        Ok(())
    }
}

/// Target information for a one-sided level, power and effect:
/// `(z_{1-alpha} + z_P)^2 / beta_h1^2`.
pub fn target_information(alpha: f64, power: f64, beta_h1: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::invalid(format!("one-sided level {alpha} outside (0, 0.5)")));
    }
    if !(power > 0.0 && power < 1.0) {
        return Err(Error::invalid(format!("power {power} outside (0, 1)")));
    }
    if beta_h1 == 0.0 || !beta_h1.is_finite() {
        return Err(Error::invalid(
            "beta_h1 = 0 requires infinite information; it must be nonzero and finite",
        ));
    }
    let z_a = normal_quantile(1.0 - alpha)?;
    let z_p = normal_quantile(power)?;
    Ok((z_a + z_p) * (z_a + z_p) / (beta_h1 * beta_h1))
}

/// Outcome of one monitored trial.
#[derive(Debug, Clone)]
pub struct MonitoringOutcome {
    pub stop_time: f64,
    pub stopped_early: bool,
    pub reject: bool,
    /// Log rate-ratio estimate (trend procedures) or log-rate difference
    /// (constant procedures) from the final analysis; `None` when the final
    /// fit failed.
    pub beta_hat: Option<f64>,
    pub n_analyzed: u32,
    pub info_trajectory: Vec<(f64, f64)>,
    /// Monitoring grid points skipped because the blinded fit failed.
    pub skipped_points: u32,
    pub final_fit_converged: bool,
}

/// Warm-start state carried across grid points.
enum WarmState {
    Trend(Option<Nuisance>),
    Const(Option<[f64; 2]>),
}

/// Run the monitoring loop on a simulated trial. Deterministic: the outcome
/// is a pure function of `(trial, design, spec)`.
///
/// The information is evaluated on the grid `monitor_start, +step, ...` and
/// at `study_duration` itself; the trial stops at the first point where the
/// blinded estimate reaches the target (non-strict). A failed blinded fit
/// skips the point and never fabricates a crossing. Without a crossing the
/// trial stops at the planned duration.
pub fn run_monitored_trial(
    trial: &[SubjectPath],
    design: &TrialDesign,
    spec: &MonitoringSpec,
) -> Result<MonitoringOutcome> {
    design.validate()?;
    spec.validate()?;
    let cursor = TrialCursor::new(trial, design);
    run_monitored_cursor(&cursor, design, spec)
}

pub(crate) fn run_monitored_cursor(
    cursor: &TrialCursor,
    design: &TrialDesign,
    spec: &MonitoringSpec,
) -> Result<MonitoringOutcome> {
    let mut trajectory = Vec::new();
    let mut skipped = 0u32;
    let mut stop_time = design.study_duration;
    let mut stopped_early = false;

    if !spec.procedure.is_fixed() {
        let horizon = if spec.allow_extension {
            (design.recruitment_period + design.max_followup).max(design.study_duration)
        } else {
            design.study_duration
        };
        let mut warm = match spec.procedure.uses_trend_model() {
            true => WarmState::Trend(None),
            false => WarmState::Const(None),
        };
        let mut crossed = false;
        let mut k = 0u32;
        loop {
            let t = design.monitor_start + f64::from(k) * design.monitor_step;
            let (t, last) = if t >= horizon - 1e-9 { (horizon, true) } else { (t, false) };
            match evaluate_blinded_info(cursor, spec, t, &mut warm) {
                Some(info) => {
                    trajectory.push((t, info));
                    if info >= spec.target_info {
                        stop_time = t;
                        stopped_early = t < design.study_duration - 1e-9;
                        crossed = true;
                        break;
                    }
                }
                None => skipped += 1,
            }
            if last {
                break;
            }
            k += 1;
        }
        if !crossed {
            stop_time = if spec.allow_extension { horizon } else { design.study_duration };
            stopped_early = false;
        }
    }

    // Final unblinded analysis on the stopping snapshot.
    let stats = cursor.stats_at(stop_time, false);
    let n_analyzed = stats.subjects.len() as u32;
    let z = normal_quantile(spec.alpha)?;
    let (reject, beta_hat, final_ok) = if spec.procedure.uses_trend_model() {
        match fit_trend_stats(&stats, None) {
            Ok(fit) if fit.converged => {
                let reject = wald_decision(&fit, spec.alpha)?;
                (reject, Some(fit.estimates.beta), true)
            }
            _ => (false, None, false),
        }
    } else {
        match fit_const_unblinded_stats(&stats) {
            Ok(fit) if fit.converged => {
                (fit.wald_statistic < z, Some(fit.log_rate_diff), true)
            }
            _ => (false, None, false),
        }
    };

    Ok(MonitoringOutcome {
        stop_time,
        stopped_early,
        reject,
        beta_hat,
        n_analyzed,
        info_trajectory: trajectory,
        skipped_points: skipped,
        final_fit_converged: final_ok,
    })
}

/// Blinded information at calendar time `t`, or `None` when the snapshot is
/// uninformative or the blinded fit fails.
fn evaluate_blinded_info(
    cursor: &TrialCursor,
    spec: &MonitoringSpec,
    t: f64,
    warm: &mut WarmState,
) -> Option<f64> {
    let stats = cursor.stats_at(t, true);
    if stats.subjects.is_empty() || stats.total_events() == 0 {
        return None;
    }
    let exposures: Vec<f64> = stats.subjects.iter().map(|s| s.exposure).collect();
    match warm {
        WarmState::Trend(state) => {
            let method = spec.procedure.blinded_method().expect("monitored procedure");
            let attempt = |init: Option<Nuisance>| match method {
                BlindedMethod::Mixture => {
                    fit_blinded_mixture_stats(&stats, spec.beta_h1, &spec.weights, init)
                }
                BlindedMethod::Lumping => {
                    fit_blinded_lumping_stats(&stats, spec.beta_h1, &spec.weights, init)
                }
            };
            // a failing warm start gets one cold retry before the point is
            // skipped
            let fit = match attempt(*state) {
                Ok(f) if f.converged => f,
                _ if state.is_some() => match attempt(None) {
                    Ok(f) if f.converged => f,
                    _ => {
                        *state = None;
                        return None;
                    }
                },
                _ => {
                    *state = None;
                    return None;
                }
            };
            *state =
                Some(Nuisance { alpha0: fit.alpha0_b, alpha1: fit.alpha1_b, phi: fit.phi_b });
            let params = ModelParams {
                alpha0: fit.alpha0_b,
                alpha1: fit.alpha1_b,
                beta: spec.beta_h1,
                phi: fit.phi_b,
            };
            if params.validate().is_err() {
                return None;
            }
            blinded_info_value(&params, &spec.weights, &exposures).ok()
        }
        WarmState::Const(state) => {
            let method = spec.procedure.blinded_method().expect("monitored procedure");
            let attempt = |init: Option<[f64; 2]>| {
                fit_const_blinded_stats(&stats, spec.beta_h1, &spec.weights, method, init)
            };
            let fit = match attempt(*state) {
                Ok(f) if f.converged => f,
                _ if state.is_some() => match attempt(None) {
                    Ok(f) if f.converged => f,
                    _ => {
                        *state = None;
                        return None;
                    }
                },
                _ => {
                    *state = None;
                    return None;
                }
            };
            *state = Some([fit.mu_c_b.ln(), fit.varphi_b]);
            info_const_blinded(&fit, &spec.weights, &exposures).ok()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::simulate_trial;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn design() -> TrialDesign {
        TrialDesign {
            n_total: 148,
            weights: AllocationWeights::equal(),
            recruitment_period: 2.0,
            max_followup: 2.0,
            study_duration: 4.0,
            monitor_start: 0.5,
            monitor_step: 1.0 / 13.0,
        }
    }

    fn params() -> ModelParams {
        // Lambda_C(2) = 1.5 at alpha1 = -1
        let alpha0 = (1.5f64 / (1.0 - (-2.0f64).exp())).ln();
        ModelParams::new(alpha0, -1.0, 0.5f64.ln(), 1.25).unwrap()
    }

    fn spec(procedure: Procedure, target: f64) -> MonitoringSpec {
        MonitoringSpec {
            procedure,
            beta_h1: 0.5f64.ln(),
            alpha: 0.025,
            target_info: target,
            weights: AllocationWeights::equal(),
            allow_extension: false,
        }
    }

    #[test]
    fn target_information_matches_reported_values() {
        // One-sided 2.5%: 3.03 / 4.06 at exp(b)=0.2, 16.34 / 21.87 at 0.5.
        let cases = [
            (0.8, 0.2f64, 3.03),
            (0.9, 0.2, 4.06),
            (0.8, 0.5, 16.34),
            (0.9, 0.5, 21.87),
        ];
        for (power, rr, expect) in cases {
            let got = target_information(0.025, power, rr.ln()).unwrap();
            assert!((got - expect).abs() < 0.005, "power {power} rr {rr}: {got}");
        }
        assert!(target_information(0.025, 0.8, 0.0).is_err());
    }

    #[test]
    fn tiny_target_stops_at_first_grid_point() {
        let d = design();
        let trial = simulate_trial(&d, &params(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let out = run_monitored_trial(&trial, &d, &spec(Procedure::TrendLump, 1e-9)).unwrap();
        assert!(out.stopped_early);
        assert_relative_eq!(out.stop_time, d.monitor_start, epsilon = 1e-12);
        assert_eq!(out.skipped_points, 0);
    }

    #[test]
    fn unreachable_target_runs_to_planned_duration() {
        let d = design();
        let trial = simulate_trial(&d, &params(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let out = run_monitored_trial(&trial, &d, &spec(Procedure::TrendMix, 1e9)).unwrap();
        assert!(!out.stopped_early);
        assert_relative_eq!(out.stop_time, d.study_duration, epsilon = 1e-12);
        assert_eq!(out.n_analyzed, d.n_total);
        // grid includes the planned duration itself
        let last = out.info_trajectory.last().unwrap();
        assert_relative_eq!(last.0, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn monitoring_is_deterministic() {
        let d = design();
        let trial = simulate_trial(&d, &params(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let s = spec(Procedure::ConstLump, 10.0);
        let a = run_monitored_trial(&trial, &d, &s).unwrap();
        let b = run_monitored_trial(&trial, &d, &s).unwrap();
        assert_eq!(a.stop_time, b.stop_time);
        assert_eq!(a.reject, b.reject);
        assert_eq!(a.info_trajectory, b.info_trajectory);
    }

    #[test]
    fn fixed_design_skips_monitoring() {
        let d = design();
        let trial = simulate_trial(&d, &params(), &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let out = run_monitored_trial(&trial, &d, &spec(Procedure::FixedDesign, 16.34)).unwrap();
        assert!(out.info_trajectory.is_empty());
        assert!(!out.stopped_early);
        assert_eq!(out.stop_time, 4.0);
        assert!(out.final_fit_converged);
    }

    #[test]
    fn trajectory_times_strictly_increase() {
        let d = design();
        let trial = simulate_trial(&d, &params(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let out = run_monitored_trial(&trial, &d, &spec(Procedure::TrendMix, 1e9)).unwrap();
        for w in out.info_trajectory.windows(2) {
            assert!(w[1].0 > w[0].0);
        }
    }
}
