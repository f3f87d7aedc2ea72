//! Shared optimizer plumbing for the fitting entry points: parameter
//! transforms, jittered multi-start, and standard errors from the
//! observed information matrix.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::linalg::symmetric_inverse;
use crate::optim::{fd_hessian, minimize, OptimOptions, OptimResult};
use crate::sim::{domains, stream_rng};

/// Declares, for each coordinate of a parameter vector, its name, sign
/// handling, optimizer scale, and finite-difference step floor.
/// Positive coordinates are optimized on the log scale; everything the
/// caller sees (`init`, results, Hessian steps) stays in raw units.
pub(crate) struct ParamSpace {
    pub names: Vec<String>,
    pub positive: Vec<bool>,
    pub scales: Vec<f64>,
    pub fd_floors: Vec<f64>,
}

impl ParamSpace {
    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn to_opt(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.positive)
            .map(|(x, pos)| if *pos { x.ln() } else { *x })
            .collect()
    }

    pub fn to_raw(&self, opt: &[f64]) -> Vec<f64> {
        opt.iter()
            .zip(&self.positive)
            .map(|(x, pos)| if *pos { x.exp() } else { *x })
            .collect()
    }
}

/// Relative jitter applied to non-first starts, in units of each
/// coordinate's optimizer scale.
const JITTER_REL: f64 = 0.05;

pub(crate) struct MultiStartOutcome {
    /// Optimum in raw units.
    pub x_raw: Vec<f64>,
    pub result: OptimResult,
    pub best_start: usize,
    pub total_evals: usize,
}

/// Run several jittered optimizations in parallel and keep the best.
/// Converged runs beat unconverged ones; ties go to the lower objective.
pub(crate) fn multi_start(
    neg_loglik_raw: &(dyn Fn(&[f64]) -> f64 + Sync),
    space: &ParamSpace,
    init_raw: &[f64],
    n_starts: usize,
    seed: u64,
    max_iter: usize,
) -> MultiStartOutcome {
    let u0 = space.to_opt(init_raw);
    let objective = |u: &[f64]| neg_loglik_raw(&space.to_raw(u));
    let opts = OptimOptions {
        max_iter,
        scales: Some(space.scales.clone()),
        ..OptimOptions::default()
    };
    let results: Vec<OptimResult> = (0..n_starts.max(1))
        .into_par_iter()
        .map(|k| {
            let mut start = u0.clone();
            if k > 0 {
                let mut rng = stream_rng(seed, domains::JITTER, k as u64);
                for (s, scale) in start.iter_mut().zip(&space.scales) {
                    let n: f64 = rng.sample(StandardNormal);
                    *s += JITTER_REL * scale * n;
                }
            }
            minimize(&objective, &start, &opts)
        })
        .collect();
    let mut best = 0;
    for (i, r) in results.iter().enumerate().skip(1) {
        let better = match (r.converged(), results[best].converged()) {
            (true, false) => true,
            (false, true) => false,
            _ => r.f < results[best].f,
        };
        if better {
            best = i;
        }
    }
    let total_evals = results.iter().map(|r| r.n_evals).sum();
    let result = results.into_iter().nth(best).unwrap();
    MultiStartOutcome {
        x_raw: space.to_raw(&result.x),
        result,
        best_start: best,
        total_evals,
    }
}

pub(crate) struct Inference {
    pub se: Vec<f64>,
    /// Row-major covariance of the raw parameter vector.
    pub covariance: Vec<f64>,
    /// Whether the observed information was strictly positive definite.
    pub pd: bool,
}

/// Standard errors and covariance from the observed information (the
/// finite-difference Hessian of the negative log-likelihood at the
/// optimum, in raw units). A non-invertible Hessian falls back to the
/// positive-semidefinite pseudo-inverse with `pd = false`.
pub(crate) fn observed_information(
    neg_loglik_raw: &(dyn Fn(&[f64]) -> f64 + Sync),
    xhat_raw: &[f64],
    space: &ParamSpace,
) -> Inference {
    let n = xhat_raw.len();
    let steps: Vec<f64> = xhat_raw
        .iter()
        .zip(&space.fd_floors)
        .map(|(x, floor)| (x.abs() * 1e-4).max(*floor))
        .collect();
    let hess = fd_hessian(|x| neg_loglik_raw(x), xhat_raw, &steps);
    match symmetric_inverse(&hess, n) {
        Ok((covariance, pd)) => {
            let se = (0..n)
                .map(|i| covariance[i * n + i].max(0.0).sqrt())
                .collect();
            Inference {
                se,
                covariance,
                pd,
            }
        }
        Err(_) => Inference {
            se: vec![f64::NAN; n],
            covariance: vec![f64::NAN; n * n],
            pd: false,
        },
    }
}
