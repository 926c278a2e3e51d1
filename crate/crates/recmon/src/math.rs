//! Small numerical kernels shared across the crate: removable-singularity
//! helpers for the log-linear cumulative rate, gamma-function difference
//! tables, the standard normal quantile/CDF, and tiny dense linear algebra.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, Normal};

/// Switch point below which `(exp(x)-1)/x` is evaluated by its Taylor series.
pub const EM1_SERIES_THRESHOLD: f64 = 1e-5;

/// `(exp(x) - 1) / x`, continuous through `x = 0`.
///
/// Below [`EM1_SERIES_THRESHOLD`] the 4-term series `1 + x/2 + x^2/6 + x^3/24`
/// is used, keeping the relative error below 1e-16 at the switch point.
#[inline]
pub fn exp_m1_over(x: f64) -> f64 {
    if x.abs() < EM1_SERIES_THRESHOLD {
        1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0)))
    } else {
        x.exp_m1() / x
    }
}

/// First derivative of `x -> (exp(x)-1)/x` scaled: `(x e^x - (e^x-1)) / x^2`.
///
/// Equals `d/da [(exp(a s)-1)/a] / s^2` evaluated at `x = a s`; the series
/// `sum_{k>=1} k x^(k-1) / (k+1)!` is used for small `|x|` where the closed
/// form cancels catastrophically.
#[inline]
pub fn dexp_m1_over(x: f64) -> f64 {
    if x.abs() < 0.02 {
        0.5 + x * (1.0 / 3.0
            + x * (1.0 / 8.0 + x * (1.0 / 30.0 + x * (1.0 / 144.0 + x * (1.0 / 840.0)))))
    } else {
        let ex = x.exp();
        (x * ex - x.exp_m1()) / (x * x)
    }
}

/// Second derivative kernel: `(x^2 e^x - 2x e^x + 2(e^x-1)) / x^3`, the series
/// `sum_{m>=2} m(m-1) x^(m-2) / (m+1)!` near zero.
#[inline]
pub fn d2exp_m1_over(x: f64) -> f64 {
    if x.abs() < 0.05 {
        1.0 / 3.0
            + x * (0.25
                + x * (0.1 + x * (1.0 / 36.0 + x * (1.0 / 168.0 + x * (1.0 / 960.0)))))
    } else {
        let ex = x.exp();
        (x * x * ex - 2.0 * x * ex + 2.0 * x.exp_m1()) / (x * x * x)
    }
}

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a >= b {
        if b == f64::NEG_INFINITY {
            a
        } else {
            a + (b - a).exp().ln_1p()
        }
    } else if a == f64::NEG_INFINITY {
        b
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Quantile of the standard normal distribution.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile level {p} outside (0,1)")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(p))
}

/// CDF of the standard normal distribution.
pub fn normal_cdf(x: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.cdf(x)
}

/// Per-count prefix tables for the negative binomial at dispersion `phi`
/// (`y = 1/phi`):
///
/// - `ln_gamma_diff(n)   = lnGamma(n + y) - lnGamma(y) = sum_{i<n} ln(y + i)`
/// - `phi_score_sum(n)   = n/phi - (psi(n+y) - psi(y))/phi^2
///                       = sum_{i<n} i/(1 + i phi)`
/// - `phi_curv_sum(n)    = sum_{i<n} (i/(1 + i phi))^2`
///
/// The rational rewrites are exact for integer counts and stay conditioned
/// as `phi -> 0`, where the raw `1/phi^2` digamma differences cancel
/// catastrophically.
pub struct GammaDiffTable {
    ln: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
}

impl GammaDiffTable {
    pub fn new(phi: f64, max_count: usize) -> Self {
        let y = 1.0 / phi;
        let mut ln = Vec::with_capacity(max_count + 1);
        let mut r1 = Vec::with_capacity(max_count + 1);
        let mut r2 = Vec::with_capacity(max_count + 1);
        let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
        ln.push(a);
        r1.push(b);
        r2.push(c);
        for i in 0..max_count {
            let v = i as f64 / (1.0 + i as f64 * phi);
            a += (y + i as f64).ln();
            b += v;
            c += v * v;
            ln.push(a);
            r1.push(b);
            r2.push(c);
        }
        GammaDiffTable { ln, r1, r2 }
    }

    #[inline]
    pub fn ln_gamma_diff(&self, n: u64) -> f64 {
        self.ln[n as usize]
    }

    #[inline]
    pub fn phi_score_sum(&self, n: u64) -> f64 {
        self.r1[n as usize]
    }

    #[inline]
    pub fn phi_curv_sum(&self, n: u64) -> f64 {
        self.r2[n as usize]
    }
}

/// `(ln(1+u) - u/(1+u)) / u^2`, continuous through zero: the dispersion-score
/// kernel, `d/dphi` of the `-(n + 1/phi) ln(1 + phi lam)` block combined with
/// its `1/phi` part.
#[inline]
pub fn nb_phi_score_kernel(u: f64) -> f64 {
    if u.abs() < 0.02 {
        0.5 + u * (-2.0 / 3.0
            + u * (0.75 + u * (-0.8 + u * (5.0 / 6.0 + u * (-6.0 / 7.0 + u * (7.0 / 8.0))))))
    } else {
        ((1.0 + u).ln() - u / (1.0 + u)) / (u * u)
    }
}

/// `2/(u^2 (1+u)) - 2 ln(1+u)/u^3 + 1/(u (1+u)^2)`, continuous through zero:
/// the dispersion-curvature kernel of the same block.
#[inline]
pub fn nb_phi_curv_kernel(u: f64) -> f64 {
    if u.abs() < 0.005 {
        -2.0 / 3.0
            + u * (1.5 + u * (-2.4 + u * (10.0 / 3.0 + u * (-30.0 / 7.0 + u * (21.0 / 4.0)))))
    } else {
        let a = 1.0 + u;
        2.0 / (u * u * a) - 2.0 * a.ln() / (u * u * u) + 1.0 / (u * a * a)
    }
}

/// `ln(n!)` prefix table for counts `0..=max_count`.
pub fn ln_factorial_table(max_count: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(max_count + 1);
    let mut acc = 0.0f64;
    t.push(0.0);
    for i in 1..=max_count {
        acc += (i as f64).ln();
        t.push(acc);
    }
    t
}

/// Solve the symmetric positive definite 3x3 system `m x = b` and return the
/// inverse as well; errors when `m` is numerically singular.
pub fn inv3(m: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .powi(3);
    if !det.is_finite() || det.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Singular(format!("3x3 determinant {det}")));
    }
    let inv = [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
        ],
    ];
    Ok(inv)
}

/// Solve a small (n <= 8) linear system in place by Gaussian elimination with
/// partial pivoting. Returns the solution; errors on singular systems.
pub fn solve_small(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|r| r.clone()).collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if !pivot.is_finite() || pivot <= 1e-300 {
            return Err(Error::Singular("pivot underflow in small solve".into()));
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for c in (row + 1)..n {
            s -= m[row][c] * x[c];
        }
        x[row] = s / m[row][row];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution in small solve".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn em1_over_series_matches_closed_form_at_switch() {
        for sign in [-1.0, 1.0] {
            let x = sign * EM1_SERIES_THRESHOLD;
            let series = 1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0)));
            let closed = x.exp_m1() / x;
            assert_relative_eq!(series, closed, max_relative = 1e-12);
        }
    }

    #[test]
    fn derivative_kernels_match_finite_differences() {
        for &x in &[-2.0, -0.5, -0.019, 0.021, 0.3, 1.7] {
            let h = 1e-6;
            let fd1 = (exp_m1_over(x + h) - exp_m1_over(x - h)) / (2.0 * h);
            assert_relative_eq!(dexp_m1_over(x), fd1, max_relative = 1e-8);
            let fd2 = (dexp_m1_over(x + h) - dexp_m1_over(x - h)) / (2.0 * h);
            assert_relative_eq!(d2exp_m1_over(x), fd2, max_relative = 1e-6);
        }
    }

    #[test]
    fn kernel_series_continuous_at_switch() {
        // Series and closed form evaluated at the same switch-point x.
        for sign in [-1.0f64, 1.0] {
            let x = sign * 0.02;
            let series = 0.5
                + x * (1.0 / 3.0
                    + x * (1.0 / 8.0
                        + x * (1.0 / 30.0 + x * (1.0 / 144.0 + x * (1.0 / 840.0)))));
            let closed = (x * x.exp() - x.exp_m1()) / (x * x);
            assert_relative_eq!(series, closed, max_relative = 1e-11);

            let x = sign * 0.05;
            let series2 = 1.0 / 3.0
                + x * (0.25
                    + x * (0.1 + x * (1.0 / 36.0 + x * (1.0 / 168.0 + x * (1.0 / 960.0)))));
            let ex = x.exp();
            let closed2 = (x * x * ex - 2.0 * x * ex + 2.0 * x.exp_m1()) / (x * x * x);
            assert_relative_eq!(series2, closed2, max_relative = 1e-9);
        }
    }

    #[test]
    fn gamma_diff_table_matches_direct_sums() {
        let phi = 1.25;
        let y = 1.0 / phi;
        let t = GammaDiffTable::new(phi, 6);
        // lnGamma(3 + y) - lnGamma(y) = ln(y) + ln(y+1) + ln(y+2)
        assert_relative_eq!(
            t.ln_gamma_diff(3),
            y.ln() + (y + 1.0).ln() + (y + 2.0).ln(),
            max_relative = 1e-14
        );
        // n/phi - (psi(n+y) - psi(y))/phi^2 telescopes to sum i/(1 + i phi)
        let psi_diff = 1.0 / y + 1.0 / (y + 1.0) + 1.0 / (y + 2.0);
        assert_relative_eq!(
            t.phi_score_sum(3),
            3.0 / phi - psi_diff / (phi * phi),
            max_relative = 1e-12
        );
        let v1 = 1.0 / (1.0 + phi);
        let v2 = 2.0 / (1.0 + 2.0 * phi);
        assert_relative_eq!(t.phi_curv_sum(3), v1 * v1 + v2 * v2, max_relative = 1e-14);
    }

    #[test]
    fn phi_kernels_match_series_and_closed_form() {
        for &u in &[-0.019f64, 0.019, 0.5, 2.0, 8.0] {
            let closed = ((1.0 + u).ln() - u / (1.0 + u)) / (u * u);
            assert_relative_eq!(nb_phi_score_kernel(u), closed, max_relative = 1e-9);
        }
        for &u in &[-0.0049f64, 0.0049, 0.5, 2.0, 8.0] {
            let a = 1.0 + u;
            let closed = 2.0 / (u * u * a) - 2.0 * a.ln() / (u * u * u) + 1.0 / (u * a * a);
            assert_relative_eq!(nb_phi_curv_kernel(u), closed, max_relative = 1e-8);
        }
        assert_relative_eq!(nb_phi_score_kernel(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(nb_phi_curv_kernel(0.0), -2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn normal_quantiles() {
        assert_relative_eq!(normal_quantile(0.025).unwrap(), -1.959964, epsilon = 1e-5);
        assert_relative_eq!(normal_quantile(0.8).unwrap(), 0.841621, epsilon = 1e-5);
        assert!(normal_quantile(0.0).is_err());
    }

    #[test]
    fn inv3_roundtrip() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = inv3(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += m[i][k] * inv[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(s, expect, epsilon = 1e-12);
            }
        }
        let singular = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]];
        assert!(inv3(&singular).is_err());
    }

    #[test]
    fn solve_small_matches_inv3() {
        let m = vec![
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ];
        let b = [1.0, -2.0, 0.5];
        let x = solve_small(&m, &b).unwrap();
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                s += m[i][j] * x[j];
            }
            assert_relative_eq!(s, b[i], epsilon = 1e-12);
        }
    }
}
