//! Small safeguarded Newton maximizer used by the blinded fits: analytic
//! gradient, curvature either supplied (Fisher scoring) or built by forward
//! differences of the gradient, persistent Levenberg damping against
//! ill-conditioned information matrices, step-halving on the objective, and
//! a positivity floor for dispersion-like parameters.

use crate::math::solve_small;
use crate::model::PHI_MIN;

pub(crate) struct NewtonOptions {
    pub max_iterations: u32,
    pub max_halvings: u32,
    pub score_tol: f64,
    pub step_tol: f64,
    /// Index of a parameter that must stay positive (floored at [`PHI_MIN`]
    /// and never more than halved in one step).
    pub positive_index: Option<usize>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: crate::mle::MAX_ITERATIONS,
            max_halvings: crate::mle::MAX_HALVINGS,
            score_tol: crate::mle::SCORE_TOL,
            step_tol: crate::mle::STEP_TOL,
            positive_index: None,
        }
    }
}

pub(crate) struct NewtonOutcome {
    pub x: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: u32,
    pub at_floor: bool,
}

/// Maximize `f` starting from `x0`. `neg_hessian` may supply a positive
/// semidefinite curvature matrix (expected information); otherwise the
/// curvature comes from forward differences of `grad`.
pub(crate) fn newton_max(
    x0: &[f64],
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    neg_hessian: Option<&dyn Fn(&[f64]) -> Vec<Vec<f64>>>,
    opts: &NewtonOptions,
) -> NewtonOutcome {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut at_floor = false;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    // Levenberg damping carried across iterations; grows on trouble, decays
    // on clean steps.
    let mut tau = 0.0f64;
    for iter in 1..=opts.max_iterations {
        iterations = iter;
        let ll = f(&x);
        if !ll.is_finite() {
            return NewtonOutcome { x, loglik: ll, converged: false, iterations, at_floor };
        }
        let mut g = grad(&x);
        if g.iter().any(|v| !v.is_finite()) {
            return NewtonOutcome { x, loglik: ll, converged: false, iterations, at_floor };
        }
        // KKT at the positivity floor: a gradient pushing the floored
        // parameter further down counts as satisfied.
        if let Some(pi) = opts.positive_index {
            if x[pi] <= PHI_MIN * (1.0 + 1e-9) && g[pi] < 0.0 {
                g[pi] = 0.0;
            }
        }
        let scaled_score = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (1.0 + ll.abs());
        if scaled_score < opts.score_tol && (iter == 1 || last_step < opts.step_tol) {
            return NewtonOutcome { x, loglik: ll, converged: true, iterations, at_floor };
        }
        if scaled_score < opts.score_tol {
            // Score satisfied; only the step criterion is pending.
            last_step = 0.0;
            continue;
        }
        let b = match neg_hessian {
            Some(h) => h(&x),
            None => {
                // Forward differences of the gradient, symmetrized, negated.
                let mut m = vec![vec![0.0; n]; n];
                for i in 0..n {
                    let h = 1e-6 * (1.0 + x[i].abs());
                    let mut xp = x.clone();
                    xp[i] += h;
                    let gp = grad(&xp);
                    for j in 0..n {
                        m[i][j] = -(gp[j] - g[j]) / h;
                    }
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        let avg = 0.5 * (m[i][j] + m[j][i]);
                        m[i][j] = avg;
                        m[j][i] = avg;
                    }
                }
                m
            }
        };
        let scale: f64 =
            (0..n).map(|i| b[i][i].abs()).fold(0.0f64, f64::max).max(1e-12);
        let mut accepted = false;
        'damping: for _ in 0..60 {
            let mut bt = b.clone();
            for (i, row) in bt.iter_mut().enumerate() {
                row[i] += tau * scale;
            }
            let delta = match solve_small(&bt, &g) {
                Ok(d) => d,
                Err(_) => {
                    tau = if tau == 0.0 { 1e-8 } else { tau * 10.0 };
                    continue;
                }
            };
            let ascent: f64 = delta.iter().zip(&g).map(|(a, s)| a * s).sum();
            let step_norm = delta
                .iter()
                .zip(&x)
                .map(|(d, xi)| d.abs() / (1.0 + xi.abs()))
                .fold(0.0f64, f64::max);
            if !ascent.is_finite() || ascent <= 0.0 || step_norm > 1e3 {
                tau = if tau == 0.0 { 1e-8 } else { tau * 10.0 };
                continue;
            }
            let mut delta = delta;
            if let Some(pi) = opts.positive_index {
                // truncate only the floored component so the rest of the
                // direction keeps its Newton length
                if delta[pi] < -0.5 * x[pi] {
                    delta[pi] = -0.5 * x[pi];
                }
            }
            // Step-halving line search with an Armijo bound, so accepted
            // steps make genuine progress along the ascent direction.
            let mut lambda = 1.0f64;
            for _ in 0..=opts.max_halvings {
                let mut cand: Vec<f64> =
                    x.iter().zip(&delta).map(|(xi, di)| xi + lambda * di).collect();
                if let Some(pi) = opts.positive_index {
                    if cand[pi] < PHI_MIN {
                        cand[pi] = PHI_MIN;
                    }
                }
                let ll_new = f(&cand);
                if ll_new.is_finite() && ll_new >= ll + 1e-4 * lambda * ascent {
                    last_step = cand
                        .iter()
                        .zip(&x)
                        .map(|(c, xi)| (c - xi).abs() / (1.0 + xi.abs()))
                        .fold(0.0f64, f64::max);
                    if let Some(pi) = opts.positive_index {
                        if cand[pi] <= PHI_MIN {
                            at_floor = true;
                        }
                    }
                    x = cand;
                    accepted = true;
                    tau *= 0.25;
                    if tau < 1e-12 {
                        tau = 0.0;
                    }
                    break 'damping;
                }
                lambda *= 0.5;
            }
            // Line search exhausted: damp harder and rebuild the step.
            tau = if tau == 0.0 { 1e-6 } else { tau * 30.0 };
        }
        if !accepted {
            let converged = scaled_score < opts.score_tol;
            return NewtonOutcome { x, loglik: ll, converged, iterations, at_floor };
        }
        if std::env::var_os("RECMON_TRACE").is_some() {
            eprintln!("  it={iter} ll={ll:.6} score={scaled_score:.3e} x={x:?} tau={tau:.1e} step={last_step:.2e}");
        }
    }
    let ll = f(&x);
    NewtonOutcome { x, loglik: ll, converged: false, iterations, at_floor }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn maximizes_a_concave_quadratic() {
        // f(x) = -(x0-1)^2 - 2(x1+0.5)^2 with a cross term
        let f = |x: &[f64]| -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2)
            - 0.3 * (x[0] - 1.0) * (x[1] + 0.5);
        let g = |x: &[f64]| {
            vec![
                -2.0 * (x[0] - 1.0) - 0.3 * (x[1] + 0.5),
                -4.0 * (x[1] + 0.5) - 0.3 * (x[0] - 1.0),
            ]
        };
        let out = newton_max(&[4.0, 4.0], f, g, None, &NewtonOptions::default());
        assert!(out.converged);
        assert_relative_eq!(out.x[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(out.x[1], -0.5, epsilon = 1e-7);
    }

    #[test]
    fn respects_positivity_floor() {
        // Maximum at x = -1 but x must stay positive.
        let f = |x: &[f64]| -(x[0] + 1.0).powi(2);
        let g = |x: &[f64]| vec![-2.0 * (x[0] + 1.0)];
        let opts = NewtonOptions { positive_index: Some(0), ..Default::default() };
        let out = newton_max(&[1.0], f, g, None, &opts);
        assert!(out.x[0] >= PHI_MIN);
        assert!(out.at_floor);
        assert!(out.converged);
    }

    #[test]
    fn warm_restart_converges_immediately() {
        let f = |x: &[f64]| -(x[0] - 2.0).powi(2);
        let g = |x: &[f64]| vec![-2.0 * (x[0] - 2.0)];
        let first = newton_max(&[10.0], f, g, None, &NewtonOptions::default());
        assert!(first.converged);
        let second = newton_max(&first.x, f, g, None, &NewtonOptions::default());
        assert!(second.converged);
        assert!(second.iterations <= 2);
    }

    #[test]
    fn survives_a_nearly_singular_ridge() {
        // Strongly correlated parameters: f depends mostly on x0 + x1.
        let f = |x: &[f64]| {
            let u = x[0] + x[1];
            let v = x[0] - x[1];
            -(u - 1.0).powi(2) - 1e-8 * v * v
        };
        let g = |x: &[f64]| {
            let u = x[0] + x[1];
            let v = x[0] - x[1];
            vec![
                -2.0 * (u - 1.0) - 2e-8 * v,
                -2.0 * (u - 1.0) + 2e-8 * v,
            ]
        };
        let out = newton_max(&[5.0, -2.0], f, g, None, &NewtonOptions::default());
        assert!(out.converged);
        assert_relative_eq!(out.x[0] + out.x[1], 1.0, epsilon = 1e-6);
    }
}
