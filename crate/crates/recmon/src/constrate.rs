//! The constant-rate comparator: negative binomial model with per-group rates
//! `mu_T`, `mu_C` and dispersion `varphi`, its blinded lumping/mixture
//! estimation, the information `J_t`, and the log-rate-difference Wald test.

use crate::blinded::BlindedMethod;
use crate::data::{Snapshot, SnapshotStats};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp2, nb_phi_curv_kernel, nb_phi_score_kernel, GammaDiffTable};
use crate::model::{AllocationWeights, GroupLabel, PHI_MIN};
use crate::optim::{newton_max, NewtonOptions};

/// Parameters of the constant-rate negative binomial model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstParams {
    pub mu_t: f64,
    pub mu_c: f64,
    pub varphi: f64,
}

impl ConstParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_t > 0.0) || !self.mu_t.is_finite() {
            return Err(Error::invalid(format!("mu_t must be positive, got {}", self.mu_t)));
        }
        if !(self.mu_c > 0.0) || !self.mu_c.is_finite() {
            return Err(Error::invalid(format!("mu_c must be positive, got {}", self.mu_c)));
        }
        if !(self.varphi >= 0.0) || !self.varphi.is_finite() {
            return Err(Error::invalid(format!(
                "varphi must be non-negative, got {}",
                self.varphi
            )));
        }
        Ok(())
    }
}

fn group_info(mu: f64, varphi: f64, exposures: &[f64]) -> f64 {
    exposures
        .iter()
        .map(|&s| {
            let m = s * mu;
            m / (1.0 + varphi * m)
        })
        .sum()
}

/// Information for the log-rate difference at calendar time t:
/// `J = 1 / (1/I_T + 1/I_C)` with `I_i = sum_j S_ij mu_i / (1 + varphi S_ij mu_i)`.
pub fn info_const(
    params: &ConstParams,
    exposures_treatment: &[f64],
    exposures_control: &[f64],
) -> Result<f64> {
    params.validate()?;
    if exposures_treatment.is_empty() || exposures_control.is_empty() {
        return Err(Error::Singular("both groups need at least one subject".into()));
    }
    for &s in exposures_treatment.iter().chain(exposures_control) {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("exposure {s} must be positive")));
        }
    }
    let i_t = group_info(params.mu_t, params.varphi, exposures_treatment);
    let i_c = group_info(params.mu_c, params.varphi, exposures_control);
    if i_t <= 0.0 || i_c <= 0.0 {
        return Err(Error::Singular("zero per-group information".into()));
    }
    Ok(1.0 / (1.0 / i_t + 1.0 / i_c))
}

/// Result of the unblinded constant-rate fit.
#[derive(Debug, Clone)]
pub struct ConstFit {
    pub params: ConstParams,
    /// `log(mu_T) - log(mu_C)`.
    pub log_rate_diff: f64,
    pub wald_statistic: f64,
    /// Plug-in `J_t` at the estimates.
    pub information: f64,
    /// 3x3 covariance of `(log mu_T, log mu_C, varphi)` (diagonal by the
    /// expected-information orthogonality).
    pub covariance: [[f64; 3]; 3],
    pub converged: bool,
    pub iterations: u32,
    pub varphi_at_boundary: bool,
    pub loglik: f64,
}

/// Counts-only log-likelihood and gradient for the constant model; theta is
/// `(log mu_T, log mu_C, varphi)`.
fn const_loglik_grad(th: &[f64], stats: &SnapshotStats, want_grad: bool) -> (f64, [f64; 3]) {
    let (lt, lc, phi) = (th[0], th[1], th[2]);
    let y = 1.0 / phi;
    let table = GammaDiffTable::new(phi, stats.max_count as usize);
    let ln_phi = phi.ln();
    let mut ll = 0.0;
    let mut g = [0.0f64; 3];
    for s in &stats.subjects {
        let (lmu, t_idx) = match s.group {
            Some(GroupLabel::Treatment) => (lt, 0usize),
            Some(GroupLabel::Control) => (lc, 1usize),
            None => continue,
        };
        let mu = s.exposure * lmu.exp();
        let n = s.count as f64;
        let a = 1.0 + phi * mu;
        let ln_a = (phi * mu).ln_1p();
        ll += table.ln_gamma_diff(s.count) - stats.ln_fact[s.count as usize]
            + n * (ln_phi + mu.ln())
            - (n + y) * ln_a;
        if want_grad {
            g[t_idx] += (n - mu) / a;
            g[2] += table.phi_score_sum(s.count)
                + mu * mu * nb_phi_score_kernel(phi * mu)
                - n * mu / a;
        }
    }
    (ll, g)
}

fn const_expected_info(th: &[f64], stats: &SnapshotStats) -> Vec<Vec<f64>> {
    let (lt, lc, phi) = (th[0], th[1], th[2]);
    let table = GammaDiffTable::new(phi, stats.max_count as usize);
    let mut m = vec![vec![0.0f64; 3]; 3];
    for s in &stats.subjects {
        let (lmu, idx) = match s.group {
            Some(GroupLabel::Treatment) => (lt, 0usize),
            Some(GroupLabel::Control) => (lc, 1usize),
            None => continue,
        };
        let mu = s.exposure * lmu.exp();
        let a = 1.0 + phi * mu;
        m[idx][idx] += mu / a;
        let n = s.count as f64;
        m[2][2] += table.phi_curv_sum(s.count) - n * mu * mu / (a * a)
            - mu * mu * mu * nb_phi_curv_kernel(phi * mu);
    }
    if m[2][2] <= 0.0 {
        m[2][2] = 1.0;
    }
    m
}

/// Maximum likelihood fit of the constant-rate model on an unblinded
/// snapshot, with the Wald statistic for the log-rate difference.
pub fn fit_const_unblinded(snap: &Snapshot) -> Result<ConstFit> {
    if snap.is_empty() {
        return Err(Error::invalid("snapshot is empty"));
    }
    if snap.subjects.iter().any(|s| s.group.is_none()) {
        return Err(Error::invalid("unblinded snapshot required: group labels missing"));
    }
    let stats = SnapshotStats::from(snap);
    fit_const_unblinded_stats(&stats)
}

pub fn fit_const_unblinded_stats(stats: &SnapshotStats) -> Result<ConstFit> {
    let mut exp_t = 0.0f64;
    let mut exp_c = 0.0f64;
    let mut ev_t = 0u64;
    let mut ev_c = 0u64;
    for s in &stats.subjects {
        match s.group {
            Some(GroupLabel::Treatment) => {
                exp_t += s.exposure;
                ev_t += s.count;
            }
            Some(GroupLabel::Control) => {
                exp_c += s.exposure;
                ev_c += s.count;
            }
            None => {}
        }
    }
    if exp_t <= 0.0 || exp_c <= 0.0 {
        return Err(Error::invalid("both groups required for the constant-rate fit"));
    }
    if ev_t == 0 || ev_c == 0 {
        return Err(Error::NoEvents(
            "a group without events puts the log-rate estimate on the boundary".into(),
        ));
    }
    let start = [
        (ev_t as f64 / exp_t).ln(),
        (ev_c as f64 / exp_c).ln(),
        crate::mle::phi_moment_start(stats),
    ];
    let opts = NewtonOptions { positive_index: Some(2), ..Default::default() };
    let info = |th: &[f64]| const_expected_info(th, stats);
    let out = newton_max(
        &start,
        |th| const_loglik_grad(th, stats, false).0,
        |th| const_loglik_grad(th, stats, true).1.to_vec(),
        Some(&info),
        &opts,
    );
    let params = ConstParams { mu_t: out.x[0].exp(), mu_c: out.x[1].exp(), varphi: out.x[2] };
    let exposures_t: Vec<f64> = stats
        .subjects
        .iter()
        .filter(|s| s.group == Some(GroupLabel::Treatment))
        .map(|s| s.exposure)
        .collect();
    let exposures_c: Vec<f64> = stats
        .subjects
        .iter()
        .filter(|s| s.group == Some(GroupLabel::Control))
        .map(|s| s.exposure)
        .collect();
    let i_t = group_info(params.mu_t, params.varphi, &exposures_t);
    let i_c = group_info(params.mu_c, params.varphi, &exposures_c);
    let info_ev = const_expected_info(&out.x, stats);
    let log_rate_diff = out.x[0] - out.x[1];
    let (information, wald, converged, covariance) = if i_t > 0.0 && i_c > 0.0 {
        let var_diff = 1.0 / i_t + 1.0 / i_c;
        let j = 1.0 / var_diff;
        let cov = [
            [1.0 / i_t, 0.0, 0.0],
            [0.0, 1.0 / i_c, 0.0],
            [0.0, 0.0, 1.0 / info_ev[2][2]],
        ];
        (j, log_rate_diff / var_diff.sqrt(), out.converged, cov)
    } else {
        (f64::NAN, f64::NAN, false, [[f64::NAN; 3]; 3])
    };
    Ok(ConstFit {
        params,
        log_rate_diff,
        wald_statistic: wald,
        information,
        covariance,
        converged,
        iterations: out.iterations,
        varphi_at_boundary: out.at_floor,
        loglik: out.loglik,
    })
}

/// Blinded constant-rate fit: control and treatment rates recovered from the
/// pooled sample under the monitored effect `beta_h1`.
#[derive(Debug, Clone, Copy)]
pub struct ConstBlindedFit {
    pub mu_t_b: f64,
    pub mu_c_b: f64,
    pub varphi_b: f64,
    pub method: BlindedMethod,
    pub converged: bool,
    pub iterations: u32,
    pub varphi_at_boundary: bool,
    pub loglik: f64,
}

/// Counts-only blinded likelihood for the constant model. For lumping, theta
/// is `(log mu_b, varphi)` with per-subject mean `S_j mu_b`; for the mixture,
/// theta is `(log mu_C, varphi)` with components `S mu_C e^b` and `S mu_C`.
fn const_blinded_loglik_grad(
    th: &[f64],
    beta_h1: f64,
    weights: &AllocationWeights,
    method: BlindedMethod,
    stats: &SnapshotStats,
    want_grad: bool,
) -> (f64, [f64; 2]) {
    let (lmu, phi) = (th[0], th[1]);
    let y = 1.0 / phi;
    let table = GammaDiffTable::new(phi, stats.max_count as usize);
    let ln_phi = phi.ln();
    let mut ll = 0.0;
    let mut g = [0.0f64; 2];
    match method {
        BlindedMethod::Lumping => {
            for s in &stats.subjects {
                let mu = s.exposure * lmu.exp();
                let n = s.count as f64;
                let a = 1.0 + phi * mu;
                let ln_a = (phi * mu).ln_1p();
                ll += table.ln_gamma_diff(s.count) - stats.ln_fact[s.count as usize]
                    + n * (ln_phi + mu.ln())
                    - (n + y) * ln_a;
                if want_grad {
                    g[0] += (n - mu) / a;
                    g[1] += table.phi_score_sum(s.count)
                        + mu * mu * nb_phi_score_kernel(phi * mu)
                        - n * mu / a;
                }
            }
        }
        BlindedMethod::Mixture => {
            let eb = beta_h1.exp();
            let ln_wt = weights.treatment().ln();
            let ln_wc = weights.control().ln();
            for s in &stats.subjects {
                let mu = s.exposure * lmu.exp(); // control-scale mean
                let n = s.count as f64;
                let npy = n + y;
                let a1 = 1.0 + phi * mu * eb;
                let a0 = 1.0 + phi * mu;
                let ln_a1 = (phi * mu * eb).ln_1p();
                let ln_a0 = (phi * mu).ln_1p();
                let c_t = ln_wt + n * beta_h1 - npy * ln_a1;
                let c_c = ln_wc - npy * ln_a0;
                let lse = log_sum_exp2(c_t, c_c);
                ll += table.ln_gamma_diff(s.count) - stats.ln_fact[s.count as usize]
                    + n * (ln_phi + mu.ln())
                    + lse;
                if want_grad {
                    let r_t = (c_t - lse).exp();
                    let r_c = (c_c - lse).exp();
                    let q = npy * phi * (r_t * eb / a1 + r_c / a0);
                    let (mu1, mu0) = (mu * eb, mu);
                    g[0] += n - q * mu;
                    g[1] += table.phi_score_sum(s.count)
                        + r_t * (mu1 * mu1 * nb_phi_score_kernel(phi * mu1) - n * mu1 / a1)
                        + r_c * (mu0 * mu0 * nb_phi_score_kernel(phi * mu0) - n * mu0 / a0);
                }
            }
        }
    }
    (ll, g)
}

/// Blinded estimation of `(mu_T, mu_C, varphi)` by lumping or mixture.
///
/// Lumping fits a single negative binomial at pooled rate `mu_b` and splits
/// it as `mu_C = mu_b / (w_T e^b + w_C)`, `mu_T = mu_C e^b`, so that
/// `w_T mu_T + w_C mu_C = mu_b` exactly.
pub fn fit_const_blinded(
    snap: &Snapshot,
    beta_h1: f64,
    weights: &AllocationWeights,
    method: BlindedMethod,
) -> Result<ConstBlindedFit> {
    if snap.is_empty() {
        return Err(Error::invalid("snapshot is empty"));
    }
    if !snap.is_blinded() {
        return Err(Error::invalid("blinded snapshot required: group labels present"));
    }
    let stats = SnapshotStats::from(snap);
    fit_const_blinded_stats(&stats, beta_h1, weights, method, None)
}

/// [`fit_const_blinded`] with an optional warm start on the internal
/// `(log rate, varphi)` scale (control-scale rate for the mixture, pooled
/// rate for lumping).
pub fn fit_const_blinded_stats(
    stats: &SnapshotStats,
    beta_h1: f64,
    weights: &AllocationWeights,
    method: BlindedMethod,
    init: Option<[f64; 2]>,
) -> Result<ConstBlindedFit> {
    if !beta_h1.is_finite() {
        return Err(Error::invalid(format!("beta_h1 must be finite, got {beta_h1}")));
    }
    if stats.subjects.is_empty() {
        return Err(Error::invalid("snapshot is empty"));
    }
    if stats.total_events() == 0 {
        return Err(Error::NoEvents("blinded constant-rate fit needs at least one event".into()));
    }
    let kappa = weights.blinded_factor(beta_h1);
    let pooled_rate = stats.total_events() as f64 / stats.total_exposure();
    // `init` is on the (log mu_C, varphi) scale; lumping optimizes the pooled
    // log rate, which sits ln(kappa) above the control one.
    let start = match (method, init) {
        (BlindedMethod::Lumping, Some([lc, phi])) => [lc + kappa.ln(), phi.max(PHI_MIN)],
        (BlindedMethod::Mixture, Some([lc, phi])) => [lc, phi.max(PHI_MIN)],
        (BlindedMethod::Lumping, None) => {
            [pooled_rate.ln(), crate::mle::phi_moment_start(stats)]
        }
        (BlindedMethod::Mixture, None) => {
            [(pooled_rate / kappa).ln(), crate::mle::phi_moment_start(stats)]
        }
    };
    let opts = NewtonOptions { positive_index: Some(1), ..Default::default() };
    let out = newton_max(
        &start,
        |th| const_blinded_loglik_grad(th, beta_h1, weights, method, stats, false).0,
        |th| const_blinded_loglik_grad(th, beta_h1, weights, method, stats, true).1.to_vec(),
        None,
        &opts,
    );
    let (mu_c, mu_t) = match method {
        BlindedMethod::Lumping => {
            let mu_b = out.x[0].exp();
            let mu_c = mu_b / kappa;
            (mu_c, mu_c * beta_h1.exp())
        }
        BlindedMethod::Mixture => {
            let mu_c = out.x[0].exp();
            (mu_c, mu_c * beta_h1.exp())
        }
    };
    Ok(ConstBlindedFit {
        mu_t_b: mu_t,
        mu_c_b: mu_c,
        varphi_b: out.x[1].max(PHI_MIN),
        method,
        converged: out.converged,
        iterations: out.iterations,
        varphi_at_boundary: out.at_floor,
        loglik: out.loglik,
    })
}

/// Blinded plug-in information: `I_b,i = w_i sum_j S_j mu_i / (1 + varphi S_j mu_i)`
/// harmonically combined as in [`info_const`].
pub fn info_const_blinded(
    fit: &ConstBlindedFit,
    weights: &AllocationWeights,
    exposures: &[f64],
) -> Result<f64> {
    if exposures.is_empty() {
        return Err(Error::Singular("no exposures in blinded sample".into()));
    }
    for &s in exposures {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("exposure {s} must be positive")));
        }
    }
    let i_t = weights.treatment() * group_info(fit.mu_t_b, fit.varphi_b, exposures);
    let i_c = weights.control() * group_info(fit.mu_c_b, fit.varphi_b, exposures);
    if i_t <= 0.0 || i_c <= 0.0 || !i_t.is_finite() || !i_c.is_finite() {
        return Err(Error::Singular("zero blinded per-group information".into()));
    }
    Ok(1.0 / (1.0 / i_t + 1.0 / i_c))
}
