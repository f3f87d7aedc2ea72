//! Quasi-Newton minimization with finite-difference gradients.
//!
//! The likelihoods in this crate are smooth but their derivatives are not
//! available in closed form, so the fitter runs BFGS on a rescaled
//! parameter vector with central-difference gradients. Callers supply a
//! characteristic scale per coordinate; internally everything is O(1).

use std::cell::Cell;

/// Options for [`minimize`].
#[derive(Debug, Clone)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Convergence when the scaled gradient infinity-norm drops below this.
    pub grad_tol: f64,
    /// Convergence when the relative step drops below this.
    pub step_rtol: f64,
    /// Central-difference step in scaled coordinates.
    pub fd_step: f64,
    /// Characteristic magnitude of each coordinate; `None` means all 1.
    pub scales: Option<Vec<f64>>,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iter: 400,
            grad_tol: 1e-6,
            step_rtol: 1e-9,
            fd_step: 1e-5,
            scales: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Scaled gradient infinity-norm below `grad_tol`.
    GradTol,
    /// Relative step below `step_rtol` (progress exhausted).
    StepTol,
    /// Iteration budget spent without meeting either tolerance.
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Infinity-norm of the scaled gradient at the final point.
    pub grad_norm: f64,
    pub iterations: usize,
    pub n_evals: usize,
    pub termination: Termination,
}

impl OptimResult {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIter
    }
}

/// Minimize `f` from `x0` by BFGS with backtracking line search.
/// Non-finite objective values are treated as +inf and backed away from.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &OptimOptions) -> OptimResult {
    let n = x0.len();
    let scales: Vec<f64> = opts
        .scales
        .clone()
        .unwrap_or_else(|| vec![1.0; n]);
    assert_eq!(scales.len(), n, "scale vector length mismatch");
    assert!(scales.iter().all(|s| *s > 0.0), "scales must be positive");

    let evals = Cell::new(0usize);
    let eval = |u: &[f64]| -> f64 {
        evals.set(evals.get() + 1);
        let x: Vec<f64> = u.iter().zip(&scales).map(|(ui, s)| ui * s).collect();
        let v = f(&x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let grad = |u: &[f64], g: &mut [f64]| {
        let mut up = u.to_vec();
        for j in 0..n {
            let h = opts.fd_step * u[j].abs().max(1.0);
            let uj = u[j];
            up[j] = uj + h;
            let fp = eval(&up);
            up[j] = uj - h;
            let fm = eval(&up);
            up[j] = uj;
            g[j] = (fp - fm) / (2.0 * h);
        }
    };

    let mut u: Vec<f64> = x0.iter().zip(&scales).map(|(x, s)| x / s).collect();
    let mut fu = eval(&u);
    let mut g = vec![0.0; n];
    grad(&u, &mut g);
    // Inverse Hessian approximation, row-major.
    let mut h_inv = identity(n);
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let gnorm = inf_norm(&g);
        if gnorm < opts.grad_tol {
            termination = Termination::GradTol;
            break;
        }
        // Search direction d = -H g.
        let mut d = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += h_inv[i * n + j] * g[j];
            }
            d[i] = -s;
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if slope >= 0.0 {
            // Not a descent direction (stale curvature); restart from
            // steepest descent.
            h_inv = identity(n);
            for i in 0..n {
                d[i] = -g[i];
            }
            slope = -g.iter().map(|x| x * x).sum::<f64>();
        }

        // Backtracking Armijo line search.
        let mut t = 1.0f64;
        let mut u_new = u.clone();
        let mut f_new = f64::INFINITY;
        let mut ok = false;
        for _ in 0..50 {
            for i in 0..n {
                u_new[i] = u[i] + t * d[i];
            }
            f_new = eval(&u_new);
            if f_new <= fu + 1e-4 * t * slope {
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if !ok {
            // No decrease along the steepest feasible direction: treat as
            // converged by exhausted progress.
            termination = Termination::StepTol;
            break;
        }

        let step_rel = {
            let num = u_new
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let den = u.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
            num / den
        };

        let mut g_new = vec![0.0; n];
        grad(&u_new, &mut g_new);

        // BFGS inverse update with curvature guard.
        let s: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            let rho = 1.0 / sy;
            // H = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let mut hy = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += h_inv[i * n + j] * y[j];
                }
                hy[i] = acc;
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h_inv[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                }
            }
        }

        u = u_new;
        fu = f_new;
        g = g_new;

        if step_rel < opts.step_rtol {
            termination = Termination::StepTol;
            break;
        }
    }

    OptimResult {
        x: u.iter().zip(&scales).map(|(ui, s)| ui * s).collect(),
        f: fu,
        grad_norm: inf_norm(&g),
        iterations,
        n_evals: evals.get(),
        termination,
    }
}

/// Central-difference Hessian of `f` at `x` with per-coordinate steps.
pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], steps: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert_eq!(steps.len(), n);
    let f0 = f(x);
    let mut h = vec![0.0; n * n];
    let mut xp = x.to_vec();
    for j in 0..n {
        let hj = steps[j];
        xp[j] = x[j] + hj;
        let fp = f(&xp);
        xp[j] = x[j] - hj;
        let fm = f(&xp);
        xp[j] = x[j];
        h[j * n + j] = (fp - 2.0 * f0 + fm) / (hj * hj);
        for k in 0..j {
            let hk = steps[k];
            xp[j] = x[j] + hj;
            xp[k] = x[k] + hk;
            let fpp = f(&xp);
            xp[k] = x[k] - hk;
            let fpm = f(&xp);
            xp[j] = x[j] - hj;
            let fmm = f(&xp);
            xp[k] = x[k] + hk;
            let fmp = f(&xp);
            xp[j] = x[j];
            xp[k] = x[k];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hj * hk);
            h[j * n + k] = v;
            h[k * n + j] = v;
        }
    }
    h
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl_converges_to_center() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2);
        let r = minimize(f, &[0.0, 0.0], &OptimOptions::default());
        assert!(r.converged());
        assert!((r.x[0] - 3.0).abs() < 1e-6);
        assert!((r.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_with_scaling() {
        let f = |x: &[f64]| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            a * a + 100.0 * b * b
        };
        let opts = OptimOptions {
            max_iter: 2000,
            ..OptimOptions::default()
        };
        let r = minimize(f, &[-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn badly_scaled_coordinates_still_converge() {
        // Minimum at (2000, 0.003); scales tell the optimizer about it.
        let f = |x: &[f64]| ((x[0] - 2000.0) / 1000.0).powi(2) + ((x[1] - 0.003) * 1000.0).powi(2);
        let opts = OptimOptions {
            scales: Some(vec![1000.0, 0.001]),
            ..OptimOptions::default()
        };
        let r = minimize(f, &[500.0, 0.001], &opts);
        assert!(r.converged());
        assert!((r.x[0] - 2000.0).abs() < 1e-2);
        assert!((r.x[1] - 0.003).abs() < 1e-7);
    }

    #[test]
    fn infinite_regions_are_avoided() {
        // Objective undefined (inf) for x <= 0; minimum at x = 2.
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                f64::INFINITY
            } else {
                (x[0].ln() - 2.0f64.ln()).powi(2)
            }
        };
        let r = minimize(f, &[0.5], &OptimOptions::default());
        assert!((r.x[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn hessian_of_quadratic_is_exact() {
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[0] * x[1] + 5.0 * x[1] * x[1];
        let h = fd_hessian(f, &[0.3, -0.7], &[1e-4, 1e-4]);
        assert!((h[0] - 4.0).abs() < 1e-5);
        assert!((h[1] - 3.0).abs() < 1e-5);
        assert!((h[3] - 10.0).abs() < 1e-5);
    }
}
