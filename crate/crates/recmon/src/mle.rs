//! Unblinded maximum likelihood for the trend model: log-likelihood, score,
//! expected Fisher information, safeguarded Fisher-scoring fit, and the Wald
//! test for the log rate ratio.
//!
//! Parameter order everywhere is `(alpha0, alpha1, beta, phi)`; the contrast
//! vector selecting the treatment effect is `c = (0, 0, 1, 0)'`.

use crate::data::{Snapshot, SnapshotStats};
use crate::error::{Error, Result};
use crate::math::{inv3, nb_phi_curv_kernel, nb_phi_score_kernel, GammaDiffTable};
use crate::model::{GroupLabel, ModelParams, PHI_MIN};

pub const MAX_ITERATIONS: u32 = 100;
pub const MAX_HALVINGS: u32 = 30;
pub const SCORE_TOL: f64 = 1e-8;
pub const STEP_TOL: f64 = 1e-9;

/// Shared per-subject kernels of the log-linear cumulative rate, computed
/// with a single `exp`/`exp_m1` pair: `(e^x-1)/x` and its first and second
/// derivative kernels.
#[inline]
pub(crate) fn rate_kernels(x: f64) -> (f64, f64, f64) {
    let ex = x.exp();
    let exm1 = x.exp_m1();
    let em = if x.abs() < crate::math::EM1_SERIES_THRESHOLD {
        1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0)))
    } else {
        exm1 / x
    };
    let d1 = if x.abs() < 0.02 {
        0.5 + x * (1.0 / 3.0
            + x * (1.0 / 8.0 + x * (1.0 / 30.0 + x * (1.0 / 144.0 + x * (1.0 / 840.0)))))
    } else {
        (x * ex - exm1) / (x * x)
    };
    let d2 = if x.abs() < 0.05 {
        1.0 / 3.0
            + x * (0.25 + x * (0.1 + x * (1.0 / 36.0 + x * (1.0 / 168.0 + x * (1.0 / 960.0)))))
    } else {
        (x * x * ex - 2.0 * x * ex + 2.0 * exm1) / (x * x * x)
    };
    (em, d1, d2)
}

/// Full evaluation of the trend likelihood at one parameter point.
pub(crate) struct TrendEval {
    pub loglik: f64,
    pub score: [f64; 4],
    /// Expected information of the (alpha0, alpha1, beta) block.
    pub info3: [[f64; 3]; 3],
    /// Observed information in the (phi, phi) slot.
    pub phi_obs: f64,
}

pub(crate) fn trend_loglik_stats(params: &ModelParams, stats: &SnapshotStats) -> f64 {
    let y = 1.0 / params.phi;
    let table = GammaDiffTable::new(params.phi, stats.max_count as usize);
    let ea0 = params.alpha0.exp();
    let eb = params.beta.exp();
    let ln_phi = params.phi.ln();
    let mut ll = 0.0;
    for s in &stats.subjects {
        let treat = s.group == Some(GroupLabel::Treatment);
        let x = params.alpha1 * s.exposure;
        let (em, _, _) = rate_kernels(x);
        let mut lam = ea0 * s.exposure * em;
        if treat {
            lam *= eb;
        }
        let n = s.count as f64;
        let ln_a = (params.phi * lam).ln_1p();
        ll += n * params.alpha0 + params.alpha1 * s.sum_times + n * ln_phi
            + table.ln_gamma_diff(s.count)
            - stats.ln_fact[s.count as usize]
            - (n + y) * ln_a;
        if treat {
            ll += n * params.beta;
        }
    }
    ll
}

pub(crate) fn trend_eval(params: &ModelParams, stats: &SnapshotStats) -> TrendEval {
    let phi = params.phi;
    let y = 1.0 / phi;
    let table = GammaDiffTable::new(phi, stats.max_count as usize);
    let ea0 = params.alpha0.exp();
    let eb = params.beta.exp();
    let ln_phi = phi.ln();
    let mut ll = 0.0;
    let mut score = [0.0f64; 4];
    let mut info3 = [[0.0f64; 3]; 3];
    let mut phi_obs = 0.0;
    for s in &stats.subjects {
        let treat = s.group == Some(GroupLabel::Treatment);
        let sx = s.exposure;
        let x = params.alpha1 * sx;
        let (em, d1, d2) = rate_kernels(x);
        let scale = if treat { ea0 * eb } else { ea0 };
        let lam = scale * sx * em;
        let lamp = scale * sx * sx * d1;
        let lampp = scale * sx * sx * sx * d2;
        let n = s.count as f64;
        let a = 1.0 + phi * lam;
        let ln_a = (phi * lam).ln_1p();
        let one_phi_n = 1.0 + phi * n;

        ll += n * params.alpha0 + params.alpha1 * s.sum_times + n * ln_phi
            + table.ln_gamma_diff(s.count)
            - stats.ln_fact[s.count as usize]
            - (n + y) * ln_a;
        if treat {
            ll += n * params.beta;
        }

        let s0 = n - lam * one_phi_n / a;
        let s1 = s.sum_times - lamp * one_phi_n / a;
        let sphi = table.phi_score_sum(s.count)
            + lam * lam * nb_phi_score_kernel(phi * lam)
            - n * lam / a;
        score[0] += s0;
        score[1] += s1;
        score[3] += sphi;
        if treat {
            score[2] += s0;
        }

        let u = lam / a;
        let g = lamp / a;
        let h = lampp - phi * lamp * lamp / a;
        info3[0][0] += u;
        info3[0][1] += g;
        info3[1][1] += h;
        if treat {
            info3[0][2] += u;
            info3[1][2] += g;
            info3[2][2] += u;
        }

        // Observed -d2 logL / d phi2; the digamma differences reduce to
        // rational sums that stay conditioned for small phi.
        phi_obs += table.phi_curv_sum(s.count) - n * lam * lam / (a * a)
            - lam * lam * lam * nb_phi_curv_kernel(phi * lam);
    }
    info3[1][0] = info3[0][1];
    info3[2][0] = info3[0][2];
    info3[2][1] = info3[1][2];
    TrendEval { loglik: ll, score, info3, phi_obs }
}

fn require_unblinded(snap: &Snapshot) -> Result<()> {
    if snap.is_empty() {
        return Err(Error::invalid("snapshot is empty"));
    }
    if snap.subjects.iter().any(|s| s.group.is_none()) {
        return Err(Error::invalid("unblinded snapshot required: group labels missing"));
    }
    Ok(())
}

/// Log-likelihood of the trend model on an unblinded snapshot.
pub fn loglik_trend(params: &ModelParams, snap: &Snapshot) -> Result<f64> {
    params.validate()?;
    require_unblinded(snap)?;
    let stats = SnapshotStats::from(snap);
    let ll = trend_loglik_stats(params, &stats);
    if !ll.is_finite() {
        return Err(Error::Numerical(format!(
            "log-likelihood overflow at alpha0={} alpha1={} beta={} phi={}",
            params.alpha0, params.alpha1, params.beta, params.phi
        )));
    }
    Ok(ll)
}

/// Score vector `(d/dalpha0, d/dalpha1, d/dbeta, d/dphi)` of [`loglik_trend`].
pub fn score_trend(params: &ModelParams, snap: &Snapshot) -> Result<[f64; 4]> {
    params.validate()?;
    require_unblinded(snap)?;
    let stats = SnapshotStats::from(snap);
    let eval = trend_eval(params, &stats);
    if eval.score.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "score overflow at alpha0={} alpha1={} beta={} phi={}",
            params.alpha0, params.alpha1, params.beta, params.phi
        )));
    }
    Ok(eval.score)
}

/// Expected `-d2 logL/dphi2` for one subject, by truncated negative binomial
/// expectation; the paper gives no closed form for this entry.
pub(crate) fn expected_phi_info_subject(lam: f64, phi: f64) -> f64 {
    let y = 1.0 / phi;
    let a = 1.0 + phi * lam;
    let u = phi * lam;
    // E over N ~ NegBin(lam, phi) of the rational curvature sums.
    let mut pk = (-y * u.ln_1p()).exp(); // P(N = 0)
    let mut cum = pk;
    let mut e_r2 = 0.0;
    let mut r2 = 0.0;
    let r = u / a;
    let mut k = 0u64;
    while cum < 1.0 - 1e-12 && k < 100_000 {
        // move from k to k+1
        let v = k as f64 / (1.0 + k as f64 * phi);
        r2 += v * v;
        pk *= (k as f64 + y) * r / (k as f64 + 1.0);
        e_r2 += pk * r2;
        cum += pk;
        k += 1;
    }
    e_r2 - lam * lam * lam / (a * a) - lam * lam * lam * nb_phi_curv_kernel(u)
}

/// Expected Fisher information of `(alpha0, alpha1, beta, phi)` from the
/// closed-form entries, given only exposure times per group. The phi row and
/// column are zero off-diagonal; the `(phi, phi)` slot is evaluated by
/// truncated negative binomial expectation.
pub fn fisher_trend(
    params: &ModelParams,
    exposures_treatment: &[f64],
    exposures_control: &[f64],
) -> Result<[[f64; 4]; 4]> {
    params.validate()?;
    let total: f64 = exposures_treatment.iter().chain(exposures_control).sum();
    if exposures_treatment.len() + exposures_control.len() == 0 || total <= 0.0 {
        return Err(Error::Singular("all exposures zero or no subjects".into()));
    }
    for &s in exposures_treatment.iter().chain(exposures_control) {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::invalid(format!("exposure {s} must be non-negative")));
        }
    }
    let phi = params.phi;
    let ea0 = params.alpha0.exp();
    let eb = params.beta.exp();
    let mut m = [[0.0f64; 4]; 4];
    for (group, exposures) in [
        (GroupLabel::Treatment, exposures_treatment),
        (GroupLabel::Control, exposures_control),
    ] {
        let scale = if group.is_treatment() { ea0 * eb } else { ea0 };
        for &sx in exposures {
            let x = params.alpha1 * sx;
            let (em, d1, d2) = rate_kernels(x);
            let lam = scale * sx * em;
            let lamp = scale * sx * sx * d1;
            let lampp = scale * sx * sx * sx * d2;
            let a = 1.0 + phi * lam;
            let u = lam / a;
            let g = lamp / a;
            let h = lampp - phi * lamp * lamp / a;
            m[0][0] += u;
            m[0][1] += g;
            m[1][1] += h;
            if group.is_treatment() {
                m[0][2] += u;
                m[1][2] += g;
                m[2][2] += u;
            }
            if lam > 0.0 {
                m[3][3] += expected_phi_info_subject(lam, phi);
            }
        }
    }
    m[1][0] = m[0][1];
    m[2][0] = m[0][2];
    m[2][1] = m[1][2];
    Ok(m)
}

/// Result of an unblinded trend-model fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub estimates: ModelParams,
    /// Plug-in Fisher matrix at the estimates: expected 3x3 block, observed
    /// `(phi, phi)` slot, zero cross terms.
    pub fisher: [[f64; 4]; 4],
    /// `1 / (c' fisher^-1 c)` with `c = (0,0,1,0)'`.
    pub information_beta: f64,
    /// `beta_hat / sqrt((fisher^-1)_beta,beta)`.
    pub wald_statistic: f64,
    pub converged: bool,
    pub iterations: u32,
    pub phi_at_boundary: bool,
    pub loglik: f64,
}

/// Method-of-moments start for phi from per-subject counts, clamped to
/// `[1e-3, 50]`.
pub(crate) fn phi_moment_start(stats: &SnapshotStats) -> f64 {
    let n = stats.subjects.len() as f64;
    if n < 2.0 {
        return 1.0;
    }
    let mean = stats.total_events() as f64 / n;
    if mean <= 0.0 {
        return 1.0;
    }
    let var = stats
        .subjects
        .iter()
        .map(|s| {
            let d = s.count as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    ((var - mean) / (mean * mean)).clamp(1e-3, 50.0)
}

pub(crate) struct ScoringOutcome {
    pub theta: [f64; 4],
    pub converged: bool,
    pub iterations: u32,
    pub phi_at_boundary: bool,
}

/// Safeguarded Fisher scoring on (alpha0, alpha1, beta, phi). `active_beta`
/// switches the beta row on; with it off the same loop fits pooled one-group
/// models (used by the blinded lumping path through a different eval).
fn scoring_loop(
    stats: &SnapshotStats,
    start: [f64; 4],
    eval: impl Fn(&[f64; 4]) -> TrendEval,
    loglik: impl Fn(&[f64; 4]) -> f64,
) -> ScoringOutcome {
    let mut theta = start;
    let mut phi_at_boundary = false;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    let _ = stats;
    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let mut ev = eval(&theta);
        let ll = ev.loglik;
        if !ll.is_finite() {
            return ScoringOutcome { theta, converged: false, iterations, phi_at_boundary };
        }
        // KKT at the phi floor: a score pushing phi below the floor counts
        // as satisfied there.
        if theta[3] <= PHI_MIN * (1.0 + 1e-9) && ev.score[3] < 0.0 {
            ev.score[3] = 0.0;
        }
        let scaled_score = ev
            .score
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            / (1.0 + ll.abs());
        if scaled_score < SCORE_TOL && (iter == 1 || last_step < STEP_TOL) {
            return ScoringOutcome { theta, converged: true, iterations, phi_at_boundary };
        }
        if scaled_score < SCORE_TOL {
            // Score satisfied; only the step criterion is pending.
            last_step = 0.0;
            continue;
        }
        // Newton direction from the block-diagonal information.
        let rhs = [ev.score[0], ev.score[1], ev.score[2]];
        let delta3 = match inv3(&ev.info3) {
            Ok(inv) => {
                let mut d = [0.0f64; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        d[i] += inv[i][j] * rhs[j];
                    }
                }
                d
            }
            Err(_) => {
                // Ridge fallback keeps the direction usable when the block is
                // near-singular far from the optimum.
                let tr = ev.info3[0][0] + ev.info3[1][1] + ev.info3[2][2];
                let ridge = 1e-8 * tr.abs().max(1e-8);
                let mut m = ev.info3;
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] += ridge;
                }
                match inv3(&m) {
                    Ok(inv) => {
                        let mut d = [0.0f64; 3];
                        for i in 0..3 {
                            for j in 0..3 {
                                d[i] += inv[i][j] * rhs[j];
                            }
                        }
                        d
                    }
                    Err(_) => {
                        return ScoringOutcome {
                            theta,
                            converged: false,
                            iterations,
                            phi_at_boundary,
                        }
                    }
                }
            }
        };
        let dphi = if ev.phi_obs > 0.0 {
            ev.score[3] / ev.phi_obs
        } else {
            ev.score[3].signum() * 0.5 * theta[3]
        };
        let mut delta = [delta3[0], delta3[1], delta3[2], dphi];
        if delta.iter().any(|v| !v.is_finite()) {
            return ScoringOutcome { theta, converged: false, iterations, phi_at_boundary };
        }
        // Keep phi positive: truncate the phi component so it cannot fall
        // below half its current value in one move.
        if delta[3] < -0.5 * theta[3] {
            delta[3] = -0.5 * theta[3];
        }
        // Step-halving line search with an Armijo bound on the
        // log-likelihood.
        let ascent: f64 = delta.iter().zip(&ev.score).map(|(d, g)| d * g).sum();
        let mut lambda = 1.0f64;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = [
                theta[0] + lambda * delta[0],
                theta[1] + lambda * delta[1],
                theta[2] + lambda * delta[2],
                (theta[3] + lambda * delta[3]).max(PHI_MIN),
            ];
            let ll_new = loglik(&cand);
            if ll_new.is_finite() && ll_new >= ll + 1e-4 * lambda * ascent.max(0.0) {
                last_step = (0..4)
                    .map(|i| (cand[i] - theta[i]).abs() / (1.0 + theta[i].abs()))
                    .fold(0.0f64, f64::max);
                if cand[3] <= PHI_MIN {
                    phi_at_boundary = true;
                }
                theta = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // No uphill step found; report the score verdict at this point.
            let converged = scaled_score < SCORE_TOL;
            return ScoringOutcome { theta, converged, iterations, phi_at_boundary };
        }
    }
    ScoringOutcome { theta, converged: false, iterations, phi_at_boundary }
}

/// Fit the four-parameter trend model on an unblinded snapshot.
///
/// Starting values: `alpha0` from the naive overall event rate, `alpha1 = 0`,
/// `beta = 0`, `phi` by method of moments. A non-converged fit is reported as
/// such, never as a fabricated estimate.
pub fn fit_trend(snap: &Snapshot, init: Option<ModelParams>) -> Result<FitResult> {
    require_unblinded(snap)?;
    let stats = SnapshotStats::from(snap);
    fit_trend_stats(&stats, init)
}

/// [`fit_trend`] on precomputed sufficient statistics.
pub fn fit_trend_stats(stats: &SnapshotStats, init: Option<ModelParams>) -> Result<FitResult> {
    let n_t = stats.count_in_group(GroupLabel::Treatment);
    let n_c = stats.count_in_group(GroupLabel::Control);
    if n_t == 0 || n_c == 0 {
        return Err(Error::invalid(format!(
            "both groups required for the trend fit (treatment {n_t}, control {n_c})"
        )));
    }
    let total_events = stats.total_events();
    if total_events == 0 {
        return Err(Error::NoEvents("cannot fit the trend model".into()));
    }
    if stats.events_in_group(GroupLabel::Treatment) == 0 {
        return Err(Error::NoEvents(
            "treatment group has no events; the rate-ratio estimate diverges".into(),
        ));
    }
    if stats.events_in_group(GroupLabel::Control) == 0 {
        return Err(Error::NoEvents(
            "control group has no events; the rate-ratio estimate diverges".into(),
        ));
    }
    let start = match init {
        Some(p) => {
            p.validate()?;
            [p.alpha0, p.alpha1, p.beta, p.phi.max(PHI_MIN)]
        }
        None => {
            let rate0 = total_events as f64 / stats.total_exposure();
            [rate0.ln(), 0.0, 0.0, phi_moment_start(stats)]
        }
    };
    let out = scoring_loop(
        stats,
        start,
        |th| {
            let p = ModelParams { alpha0: th[0], alpha1: th[1], beta: th[2], phi: th[3] };
            trend_eval(&p, stats)
        },
        |th| {
            let p = ModelParams { alpha0: th[0], alpha1: th[1], beta: th[2], phi: th[3] };
            trend_loglik_stats(&p, stats)
        },
    );
    let estimates = ModelParams {
        alpha0: out.theta[0],
        alpha1: out.theta[1],
        beta: out.theta[2],
        phi: out.theta[3],
    };
    let ev = trend_eval(&estimates, stats);
    let mut fisher = [[0.0f64; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            fisher[i][j] = ev.info3[i][j];
        }
    }
    fisher[3][3] = ev.phi_obs;
    let (information_beta, wald_statistic, converged) = match inv3(&ev.info3) {
        Ok(inv) if inv[2][2] > 0.0 => {
            let var_beta = inv[2][2];
            (1.0 / var_beta, estimates.beta / var_beta.sqrt(), out.converged)
        }
        _ => (f64::NAN, f64::NAN, false),
    };
    Ok(FitResult {
        estimates,
        fisher,
        information_beta,
        wald_statistic,
        converged,
        iterations: out.iterations,
        phi_at_boundary: out.phi_at_boundary,
        loglik: ev.loglik,
    })
}

/// One-sided Wald decision: reject when `T < z_alpha` (strict inequality;
/// superiority means beta < 0).
pub fn wald_decision(fit: &FitResult, alpha: f64) -> Result<bool> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::invalid(format!("one-sided level {alpha} outside (0, 0.5)")));
    }
    if !fit.converged {
        return Err(Error::NotConverged("wald decision unavailable".into()));
    }
    let z = crate::math::normal_quantile(alpha)?;
    Ok(fit.wald_statistic < z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;
    use approx::assert_relative_eq;

    fn fixture_snapshot() -> Snapshot {
        Snapshot::new(vec![
            SubjectRecord {
                exposure: 2.0,
                event_times: vec![0.3, 0.9, 1.7],
                group: Some(GroupLabel::Control),
            },
            SubjectRecord {
                exposure: 1.5,
                event_times: vec![0.8],
                group: Some(GroupLabel::Treatment),
            },
            SubjectRecord {
                exposure: 0.7,
                event_times: vec![],
                group: Some(GroupLabel::Treatment),
            },
        ])
        .unwrap()
    }

    fn fixture_params() -> ModelParams {
        ModelParams::new(0.21, -0.65, -0.4, 0.9).unwrap()
    }

    #[test]
    fn zero_count_subject_reduces_to_closed_form() {
        let p = ModelParams::new(0.3, -0.5, 0.0, 1.1).unwrap();
        let snap = Snapshot::new(vec![SubjectRecord {
            exposure: 1.8,
            event_times: vec![],
            group: Some(GroupLabel::Control),
        }])
        .unwrap();
        let lam = crate::model::cumulative_rate(&p, GroupLabel::Control, 1.8).unwrap();
        let expect = -(1.0 / p.phi) * (p.phi * lam).ln_1p();
        assert_relative_eq!(loglik_trend(&p, &snap).unwrap(), expect, max_relative = 1e-14);
    }

    #[test]
    fn loglik_invariant_to_label_swap_under_null() {
        let p = ModelParams::new(0.1, -0.8, 0.0, 1.3).unwrap();
        let snap = fixture_snapshot();
        let swapped = Snapshot::new(
            snap.subjects
                .iter()
                .map(|s| SubjectRecord {
                    exposure: s.exposure,
                    event_times: s.event_times.clone(),
                    group: s.group.map(|g| match g {
                        GroupLabel::Treatment => GroupLabel::Control,
                        GroupLabel::Control => GroupLabel::Treatment,
                    }),
                })
                .collect(),
        )
        .unwrap();
        assert_relative_eq!(
            loglik_trend(&p, &snap).unwrap(),
            loglik_trend(&p, &swapped).unwrap(),
            max_relative = 1e-14
        );
    }

    // Frozen by the independent per-event evaluation in
    // tests/mle_checks.rs (term-by-term composition of Eq.-style pieces).
    #[test]
    fn loglik_fixture_frozen_value() {
        let ll = loglik_trend(&fixture_params(), &fixture_snapshot()).unwrap();
        assert_relative_eq!(ll, -6.930_588_331_610_903, max_relative = 1e-12);
    }

    #[test]
    fn score_matches_central_differences_on_fixture() {
        let p = fixture_params();
        let snap = fixture_snapshot();
        let score = score_trend(&p, &snap).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut up = p;
            let mut dn = p;
            match i {
                0 => {
                    up.alpha0 += h;
                    dn.alpha0 -= h;
                }
                1 => {
                    up.alpha1 += h;
                    dn.alpha1 -= h;
                }
                2 => {
                    up.beta += h;
                    dn.beta -= h;
                }
                _ => {
                    up.phi += h;
                    dn.phi -= h;
                }
            }
            let fd = (loglik_trend(&up, &snap).unwrap() - loglik_trend(&dn, &snap).unwrap())
                / (2.0 * h);
            assert_relative_eq!(score[i], fd, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn beta_score_zero_on_all_control_snapshot() {
        let p = fixture_params();
        let snap = Snapshot::new(vec![SubjectRecord {
            exposure: 2.0,
            event_times: vec![0.4, 1.1],
            group: Some(GroupLabel::Control),
        }])
        .unwrap();
        let score = score_trend(&p, &snap).unwrap();
        assert_eq!(score[2], 0.0);
    }

    #[test]
    fn fisher_beta_block_zero_without_treatment_subjects() {
        let p = fixture_params();
        let f = fisher_trend(&p, &[], &[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(f[2][2], 0.0);
        assert_eq!(f[0][2], 0.0);
    }

    #[test]
    fn fisher_phi_cross_terms_exactly_zero() {
        let p = fixture_params();
        let f = fisher_trend(&p, &[1.5, 2.0], &[1.0, 2.0, 0.5]).unwrap();
        for i in 0..3 {
            assert_eq!(f[3][i], 0.0);
            assert_eq!(f[i][3], 0.0);
        }
        assert!(f[3][3] > 0.0);
    }

    #[test]
    fn fisher_rejects_degenerate_exposures() {
        let p = fixture_params();
        assert!(fisher_trend(&p, &[0.0], &[0.0]).is_err());
        assert!(fisher_trend(&p, &[], &[]).is_err());
    }

    #[test]
    fn wald_decision_thresholds() {
        let mut fit = FitResult {
            estimates: fixture_params(),
            fisher: [[0.0; 4]; 4],
            information_beta: 10.0,
            wald_statistic: -3.0,
            converged: true,
            iterations: 5,
            phi_at_boundary: false,
            loglik: 0.0,
        };
        assert!(wald_decision(&fit, 0.025).unwrap());
        fit.wald_statistic = 0.0;
        assert!(!wald_decision(&fit, 0.025).unwrap());
        // Exactly at the quantile: strict inequality, so do not reject.
        fit.wald_statistic = crate::math::normal_quantile(0.025).unwrap();
        assert!(!wald_decision(&fit, 0.025).unwrap());
        fit.converged = false;
        assert!(wald_decision(&fit, 0.025).is_err());
    }

    #[test]
    fn fit_errors_without_information() {
        // No events at all.
        let snap = Snapshot::new(vec![
            SubjectRecord { exposure: 1.0, event_times: vec![], group: Some(GroupLabel::Control) },
            SubjectRecord { exposure: 1.0, event_times: vec![], group: Some(GroupLabel::Treatment) },
        ])
        .unwrap();
        assert!(matches!(fit_trend(&snap, None), Err(Error::NoEvents(_))));
        // Missing group.
        let snap = Snapshot::new(vec![SubjectRecord {
            exposure: 1.0,
            event_times: vec![0.5],
            group: Some(GroupLabel::Control),
        }])
        .unwrap();
        assert!(fit_trend(&snap, None).is_err());
    }
}
