//! Rate and cumulative-rate functions of the non-homogeneous Poisson model
//! with Gamma frailty, and the marginal negative binomial mass. Everything
//! else in the crate builds on these.

use crate::error::{Error, Result};
use crate::math::{exp_m1_over, GammaDiffTable};

/// Lower clamp for the dispersion parameter in estimation contexts; data that
/// look Poisson must not crash the negative binomial mass.
pub const PHI_MIN: f64 = 1e-8;

/// Treatment arm indicator. `Control` maps to x = 0, `Treatment` to x = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupLabel {
    Treatment,
    Control,
}

impl GroupLabel {
    #[inline]
    pub fn indicator(self) -> f64 {
        match self {
            GroupLabel::Treatment => 1.0,
            GroupLabel::Control => 0.0,
        }
    }

    pub fn is_treatment(self) -> bool {
        matches!(self, GroupLabel::Treatment)
    }
}

/// Parameters of the log-linear trend model: the conditional rate for a
/// subject in group i is `nu * exp(alpha0 + alpha1 * s) * exp(beta * x_i)`
/// with frailty variance `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Log baseline rate at study time 0.
    pub alpha0: f64,
    /// Log-linear trend per year of study time.
    pub alpha1: f64,
    /// Log rate ratio treatment vs. control.
    pub beta: f64,
    /// Gamma frailty variance / negative binomial shape. Strictly positive.
    pub phi: f64,
}

impl ModelParams {
    pub fn new(alpha0: f64, alpha1: f64, beta: f64, phi: f64) -> Result<Self> {
        let p = ModelParams { alpha0, alpha1, beta, phi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("alpha1", self.alpha1),
            ("beta", self.beta),
            ("phi", self.phi),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if self.phi <= 0.0 {
            return Err(Error::invalid(format!(
                "phi must be strictly positive, got {}",
                self.phi
            )));
        }
        Ok(())
    }

    /// Rate ratio `exp(beta)`.
    pub fn rate_ratio(&self) -> f64 {
        self.beta.exp()
    }
}

/// Randomization weights. The control weight is derived from the treatment
/// weight so the two always sum to one exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationWeights {
    w_treatment: f64,
}

impl AllocationWeights {
    pub fn new(w_treatment: f64) -> Result<Self> {
        if !w_treatment.is_finite() || w_treatment <= 0.0 || w_treatment >= 1.0 {
            return Err(Error::invalid(format!(
                "treatment allocation weight must lie in (0,1), got {w_treatment}"
            )));
        }
        Ok(AllocationWeights { w_treatment })
    }

    /// 1:1 allocation.
    pub fn equal() -> Self {
        AllocationWeights { w_treatment: 0.5 }
    }

    #[inline]
    pub fn treatment(&self) -> f64 {
        self.w_treatment
    }

    #[inline]
    pub fn control(&self) -> f64 {
        1.0 - self.w_treatment
    }

    /// Mixture factor `w_T exp(beta_h1) + w_C` relating the blinded cumulative
    /// rate to the control one.
    #[inline]
    pub fn blinded_factor(&self, beta_h1: f64) -> f64 {
        self.w_treatment * beta_h1.exp() + self.control()
    }
}

fn check_time(s: f64) -> Result<()> {
    if !s.is_finite() || s < 0.0 {
        return Err(Error::invalid(format!(
            "study time must be a finite non-negative number, got {s}"
        )));
    }
    Ok(())
}

/// Event rate `exp(alpha0 + alpha1 s) exp(beta x_i)` at study time `s`.
///
/// The treatment value is the control value times `exp(beta)` exactly.
pub fn rate(params: &ModelParams, group: GroupLabel, s: f64) -> Result<f64> {
    params.validate()?;
    check_time(s)?;
    Ok(rate_unchecked(params, group, s))
}

#[inline]
pub(crate) fn rate_unchecked(params: &ModelParams, group: GroupLabel, s: f64) -> f64 {
    let base = (params.alpha0 + params.alpha1 * s).exp();
    match group {
        GroupLabel::Control => base,
        GroupLabel::Treatment => base * params.beta.exp(),
    }
}

/// Cumulative rate `Lambda_i(s) = exp(alpha0) (exp(alpha1 s) - 1)/alpha1 exp(beta x_i)`.
///
/// The removable singularity at `alpha1 = 0` is evaluated by series, so the
/// homogeneous-Poisson limit `exp(alpha0) s` is exact.
pub fn cumulative_rate(params: &ModelParams, group: GroupLabel, s: f64) -> Result<f64> {
    params.validate()?;
    check_time(s)?;
    Ok(cumulative_rate_unchecked(params, group, s))
}

#[inline]
pub(crate) fn cumulative_rate_unchecked(params: &ModelParams, group: GroupLabel, s: f64) -> f64 {
    let base = params.alpha0.exp() * s * exp_m1_over(params.alpha1 * s);
    match group {
        GroupLabel::Control => base,
        GroupLabel::Treatment => base * params.beta.exp(),
    }
}

/// Cumulative rate of the blinded sample,
/// `Lambda_b(s) = Lambda_C(s) (w_T exp(beta_h1) + w_C)`.
///
/// Only the nuisance part of `params` enters; `params.beta` is ignored.
pub fn blinded_cumulative_rate(
    params: &ModelParams,
    beta_h1: f64,
    weights: &AllocationWeights,
    s: f64,
) -> Result<f64> {
    params.validate()?;
    check_time(s)?;
    if !beta_h1.is_finite() {
        return Err(Error::invalid(format!("beta_h1 must be finite, got {beta_h1}")));
    }
    let lambda_c = params.alpha0.exp() * s * exp_m1_over(params.alpha1 * s);
    Ok(lambda_c * weights.blinded_factor(beta_h1))
}

/// Log of the negative binomial mass with mean `mean` and dispersion `phi`
/// (variance `mean (1 + phi mean)`).
pub fn negbin_log_pmf(count: u64, mean: f64, phi: f64) -> Result<f64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::invalid(format!("negbin mean must be positive, got {mean}")));
    }
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::invalid(format!("negbin phi must be positive, got {phi}")));
    }
    let table = GammaDiffTable::new(phi, count as usize);
    Ok(negbin_log_pmf_tabled(count, mean, phi, &table, ln_fact(count)))
}

#[inline]
pub(crate) fn negbin_log_pmf_tabled(
    count: u64,
    mean: f64,
    phi: f64,
    table: &GammaDiffTable,
    ln_count_factorial: f64,
) -> f64 {
    let k = count as f64;
    table.ln_gamma_diff(count) - ln_count_factorial + k * (phi * mean).ln()
        - (k + 1.0 / phi) * (phi * mean).ln_1p()
}

fn ln_fact(n: u64) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(alpha0: f64, alpha1: f64, beta: f64, phi: f64) -> ModelParams {
        ModelParams::new(alpha0, alpha1, beta, phi).unwrap()
    }

    #[test]
    fn rate_all_zero_parameters() {
        let p = params(0.0, 0.0, 0.0, 1.0);
        assert_eq!(rate(&p, GroupLabel::Control, 5.0).unwrap(), 1.0);
    }

    #[test]
    fn rate_matches_pediatric_ms_trend_fit() {
        // Trend-model column: baseline control rate exp(-0.066) = 0.936.
        let p = params(-0.066, -0.236, 0.3, 1.26);
        let r = rate(&p, GroupLabel::Control, 0.0).unwrap();
        assert_relative_eq!(r, 0.936, epsilon = 5e-4);
    }

    #[test]
    fn rate_direct_scalar_evaluation() {
        // Independent scalar composition: exp(0.5 - 1 + ln 0.5).
        let p = params(0.5, -1.0, 0.5f64.ln(), 1.0);
        let expect = (0.5 - 1.0 + 0.5f64.ln()).exp();
        assert_relative_eq!(
            rate(&p, GroupLabel::Treatment, 1.0).unwrap(),
            expect,
            max_relative = 1e-15
        );
        assert_relative_eq!(expect, 0.303265329856, max_relative = 1e-10);
    }

    #[test]
    fn rate_rejects_bad_input() {
        let p = params(0.0, 0.0, 0.0, 1.0);
        assert!(rate(&p, GroupLabel::Control, -0.5).is_err());
        assert!(rate(&p, GroupLabel::Control, f64::NAN).is_err());
        assert!(ModelParams::new(0.0, f64::INFINITY, 0.0, 1.0).is_err());
        assert!(ModelParams::new(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn cumulative_rate_homogeneous_limit() {
        let p = params(0.0, 0.0, 0.0, 1.0);
        assert_eq!(cumulative_rate(&p, GroupLabel::Control, 2.0).unwrap(), 2.0);
        assert_eq!(cumulative_rate(&p, GroupLabel::Control, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_rate_matches_pediatric_ms_fit() {
        let p = params(-0.066, -0.236, 0.0, 1.26);
        let l = cumulative_rate(&p, GroupLabel::Control, 2.0).unwrap();
        assert!((l - 1.49).abs() < 0.005, "Lambda_C(2) = {l}");
    }

    #[test]
    fn cumulative_rate_alpha0_solved_by_bisection_oracle() {
        // Independent 1-d bisection on alpha0 for Lambda_C(2) = 1.5 at alpha1 = -1.
        let target = 1.5;
        let f = |a0: f64| a0.exp() * (1.0 - (-2.0f64).exp()) / 1.0 - target;
        let (mut lo, mut hi) = (-5.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let a0 = 0.5 * (lo + hi);
        let p = params(a0, -1.0, 0.0, 1.0);
        assert_relative_eq!(
            cumulative_rate(&p, GroupLabel::Control, 2.0).unwrap(),
            1.5,
            max_relative = 1e-10
        );
    }

    #[test]
    fn treatment_is_control_times_rate_ratio_exactly() {
        let p = params(0.3, -0.7, -0.4, 2.0);
        for &s in &[0.0, 0.3, 1.0, 2.0, 7.5] {
            let rc = rate(&p, GroupLabel::Control, s).unwrap();
            let rt = rate(&p, GroupLabel::Treatment, s).unwrap();
            assert_eq!(rt, rc * p.beta.exp());
            let lc = cumulative_rate(&p, GroupLabel::Control, s).unwrap();
            let lt = cumulative_rate(&p, GroupLabel::Treatment, s).unwrap();
            assert_eq!(lt, lc * p.beta.exp());
        }
    }

    #[test]
    fn blinded_cumulative_rate_cases() {
        let w = AllocationWeights::equal();
        let p = params(0.2, -0.8, 0.0, 1.0);
        // Null effect collapses the mixture.
        let s = 1.7;
        let lc = cumulative_rate(&p, GroupLabel::Control, s).unwrap();
        assert_relative_eq!(
            blinded_cumulative_rate(&p, 0.0, &w, s).unwrap(),
            lc,
            max_relative = 1e-15
        );
        // Degenerate all-treatment allocation (limit within the open interval).
        let w_all_t = AllocationWeights::new(1.0 - 1e-12).unwrap();
        let b = 0.5f64.ln();
        assert_relative_eq!(
            blinded_cumulative_rate(&p, b, &w_all_t, s).unwrap(),
            lc * b.exp(),
            max_relative = 1e-9
        );
        // Hand-checkable arithmetic: Lambda_C(2)=1.5, exp(beta_h1)=0.5, equal weights.
        let a0 = (1.5f64 / ((1.0 - (-2.0f64).exp()) / 1.0)).ln();
        let p2 = params(a0, -1.0, 0.0, 1.0);
        assert_relative_eq!(
            blinded_cumulative_rate(&p2, 0.5f64.ln(), &w, 2.0).unwrap(),
            1.125,
            max_relative = 1e-12
        );
    }

    #[test]
    fn allocation_weights_validation() {
        assert!(AllocationWeights::new(0.0).is_err());
        assert!(AllocationWeights::new(1.0).is_err());
        assert!(AllocationWeights::new(f64::NAN).is_err());
        let w = AllocationWeights::new(0.3).unwrap();
        assert_eq!(w.treatment() + w.control(), 1.0);
    }

    #[test]
    fn negbin_zero_count_closed_form() {
        let (mean, phi) = (1.5f64, 1.25f64);
        let expect = -(1.0 / phi) * (phi * mean).ln_1p();
        assert_relative_eq!(
            negbin_log_pmf(0, mean, phi).unwrap(),
            expect,
            max_relative = 1e-14
        );
    }

    #[test]
    fn negbin_quadrature_oracle() {
        // Gamma-Poisson integral for k = 3, mean 1.5, phi 1.25 evaluated by
        // high-resolution Simpson quadrature over the frailty density.
        let (k, mean, phi) = (3u64, 1.5f64, 1.25f64);
        let shape = 1.0 / phi;
        // Substituting t = nu^shape removes the integrable singularity of the
        // nu^(shape-1) density factor at zero, so plain Simpson converges:
        // integral nu^(shape-1) h(nu) dnu = (1/shape) integral h(t^(1/shape)) dt.
        let simpson = |h: &dyn Fn(f64) -> f64| -> f64 {
            let (a, b, n) = (0.0, 80.0f64.powf(shape), 400_000);
            let step = (b - a) / n as f64;
            let mut s = h(a) + h(b);
            for i in 1..n {
                let t = a + i as f64 * step;
                s += h(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * step / 3.0
        };
        let poisson_mass = |nu: f64| -> f64 {
            let lam = nu * mean;
            (-lam).exp() * lam.powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>()
        };
        let numerator = simpson(&|t: f64| {
            let nu = t.powf(1.0 / shape);
            (-nu / phi).exp() * poisson_mass(nu)
        });
        let denominator = simpson(&|t: f64| {
            let nu = t.powf(1.0 / shape);
            (-nu / phi).exp()
        });
        let p = numerator / denominator;
        assert_relative_eq!(
            negbin_log_pmf(k, mean, phi).unwrap(),
            p.ln(),
            max_relative = 1e-8
        );
        // Frozen value from the quadrature oracle.
        assert_relative_eq!(p.ln(), -2.524_671_122_339_257, max_relative = 1e-9);
    }

    #[test]
    fn negbin_normalizes() {
        let (mean, phi) = (1.5, 1.25);
        let total: f64 = (0..=500)
            .map(|k| negbin_log_pmf(k, mean, phi).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "sum = {total}");
    }

    #[test]
    fn negbin_rejects_bad_domain() {
        assert!(negbin_log_pmf(1, 0.0, 1.0).is_err());
        assert!(negbin_log_pmf(1, -1.0, 1.0).is_err());
        assert!(negbin_log_pmf(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn negbin_tiny_phi_is_poisson() {
        // y = 1/phi = 1e8: the gamma-difference form must stay accurate.
        let (k, mean, phi) = (4u64, 2.0f64, 1e-8f64);
        let pois = -mean + (k as f64) * mean.ln() - (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        assert_relative_eq!(negbin_log_pmf(k, mean, phi).unwrap(), pois, epsilon = 1e-6);
    }
}
