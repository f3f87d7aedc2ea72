//! The combined-model fit: one parametric surface over wavelength,
//! dosage, neutral density, temperature, and humidity, estimated by
//! marginal maximum likelihood. Starting values come from the
//! factor-per-level fit: each smooth term is regressed through the
//! corresponding free effects, so the optimizer starts inside the
//! basin of the right solution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::driver::{multi_start, observed_information, ParamSpace};
use super::likelihood::{self, grid_golden_max};
use super::{aic, CategoricalFit, FitDiagnostics, FitOptions, ModelKind};
use crate::dataset::AccelDataset;
use crate::error::{Error, Result};
use crate::path::{is_free_band, CombinedParams, KELVIN_OFFSET};
use crate::spectral::WavelengthSplit;

/// Coordinate names of the packed parameter vector for a model kind.
/// Model A imposes reciprocity (`p = 0`) and has no random effect.
fn coord_names(kind: ModelKind) -> Vec<&'static str> {
    let mut v = vec!["alpha", "beta_lambda"];
    if kind != ModelKind::A {
        v.push("p");
    }
    v.extend([
        "ea_over_r",
        "beta_rh",
        "rh0",
        "eta0",
        "b353",
        "sigma0",
        "sigma1",
        "sigma2",
    ]);
    if kind != ModelKind::A {
        v.push("sigma_v");
    }
    v.push("sigma_eps");
    if kind == ModelKind::C {
        v.push("sigma_group");
    }
    v
}

/// (positive, optimizer scale, finite-difference step floor).
fn coord_meta(name: &str) -> (bool, f64, f64) {
    match name {
        "alpha" => (false, 0.5, 1e-5),
        "beta_lambda" => (false, 0.01, 1e-6),
        "p" => (false, 0.5, 1e-5),
        "ea_over_r" => (false, 1000.0, 0.05),
        "beta_rh" => (false, 0.001, 1e-7),
        "rh0" => (false, 20.0, 1e-3),
        "eta0" => (false, 5.0, 1e-4),
        "b353" => (false, 5.0, 1e-4),
        "sigma0" => (true, 0.5, 1e-5),
        "sigma1" => (false, 5.0, 1e-4),
        "sigma2" => (false, 0.01, 1e-6),
        "sigma_v" => (true, 1.0, 1e-5),
        "sigma_eps" => (true, 1.0, 1e-6),
        "sigma_group" => (true, 1.0, 1e-5),
        other => unreachable!("unknown coordinate {other}"),
    }
}

pub(crate) fn get_param(p: &CombinedParams, sigma_group: f64, name: &str) -> f64 {
    match name {
        "alpha" => p.alpha,
        "beta_lambda" => p.beta_lambda,
        "p" => p.p,
        "ea_over_r" => p.ea_over_r,
        "beta_rh" => p.beta_rh,
        "rh0" => p.rh0,
        "eta0" => p.eta0,
        "b353" => p.b353,
        "sigma0" => p.sigma0,
        "sigma1" => p.sigma1,
        "sigma2" => p.sigma2,
        "sigma_v" => p.sigma_v,
        "sigma_eps" => p.sigma_eps,
        "sigma_group" => sigma_group,
        other => unreachable!("unknown coordinate {other}"),
    }
}

pub(crate) fn set_param(p: &mut CombinedParams, sigma_group: &mut f64, name: &str, value: f64) {
    match name {
        "alpha" => p.alpha = value,
        "beta_lambda" => p.beta_lambda = value,
        "p" => p.p = value,
        "ea_over_r" => p.ea_over_r = value,
        "beta_rh" => p.beta_rh = value,
        "rh0" => p.rh0 = value,
        "eta0" => p.eta0 = value,
        "b353" => p.b353 = value,
        "sigma0" => p.sigma0 = value,
        "sigma1" => p.sigma1 = value,
        "sigma2" => p.sigma2 = value,
        "sigma_v" => p.sigma_v = value,
        "sigma_eps" => p.sigma_eps = value,
        "sigma_group" => *sigma_group = value,
        other => unreachable!("unknown coordinate {other}"),
    }
}

fn param_space(names: &[&'static str]) -> ParamSpace {
    let mut space = ParamSpace {
        names: names.iter().map(|n| n.to_string()).collect(),
        positive: Vec::new(),
        scales: Vec::new(),
        fd_floors: Vec::new(),
    };
    for n in names {
        let (pos, scale, floor) = coord_meta(n);
        space.positive.push(pos);
        space.scales.push(scale);
        space.fd_floors.push(floor);
    }
    space
}

fn pack(names: &[&'static str], params: &CombinedParams, sigma_group: f64) -> Vec<f64> {
    names
        .iter()
        .map(|n| get_param(params, sigma_group, n))
        .collect()
}

fn unpack(
    kind: ModelKind,
    names: &[&'static str],
    template: &CombinedParams,
    x: &[f64],
) -> (CombinedParams, Option<f64>) {
    let mut params = template.clone();
    if kind == ModelKind::A {
        params.p = 0.0;
        params.sigma_v = 0.0;
    }
    let mut sigma_group = f64::NAN;
    for (n, v) in names.iter().zip(x) {
        set_param(&mut params, &mut sigma_group, n, *v);
    }
    let sg = (kind == ModelKind::C).then_some(sigma_group);
    (params, sg)
}

/// Result of [`fit_combined`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombinedFit {
    pub kind: ModelKind,
    pub params: CombinedParams,
    /// Chamber-group effect standard deviation (model C only).
    pub sigma_group: Option<f64>,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    /// Mean squared residual at the conditional path scales.
    pub mse: f64,
    /// Packed-vector coordinate names, estimates, and standard errors.
    pub param_names: Vec<String>,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    /// Row-major covariance of the packed vector.
    pub covariance: Vec<f64>,
    /// The fixed-effect subset (everything except the variance
    /// components) and its covariance block, used for prediction
    /// uncertainty.
    pub fixed_names: Vec<String>,
    pub fixed_covariance: Vec<f64>,
    pub n_specimens: usize,
    pub n_obs: usize,
    pub diagnostics: FitDiagnostics,
}

impl CombinedFit {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.estimates[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.se[i])
    }
}

const VARIANCE_COMPONENTS: [&str; 3] = ["sigma_v", "sigma_eps", "sigma_group"];

/// Fit the combined model.
///
/// With `init = None` the starting point is derived from a
/// factor-per-level fit of the full dataset ([`seed_from_categorical`]).
/// Cells listed in `opts.drop_cells` are excluded from this fit (the
/// default drops the harshest corner cell, whose extra interaction the
/// smooth surface cannot absorb); the factor-per-level stage keeps them.
pub fn fit_combined(
    dataset: &AccelDataset,
    kind: ModelKind,
    init: Option<&CombinedParams>,
    opts: &FitOptions,
) -> Result<CombinedFit> {
    if opts.quad_order == 0 || opts.inner_quad_order == 0 || opts.outer_quad_order == 0 {
        return Err(Error::config("quadrature order must be at least 1"));
    }
    let mut diagnostics = FitDiagnostics::default();

    // Starting values, from the factor-per-level stage when not given.
    let init_params = match init {
        Some(p) => {
            p.validate()?;
            p.clone()
        }
        None => {
            let cat = super::fit_categorical(dataset, opts)?;
            seed_from_categorical(&cat, &dataset.splits)
        }
    };

    // Exclude configured cells from this fit.
    let mut kept = Vec::new();
    let mut drop_counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in &dataset.specimens {
        let dropped = opts.drop_cells.iter().any(|(t, r)| {
            (s.conditions.temp_c - t).abs() < 1e-6 && (s.conditions.rh_pct - r).abs() < 1e-6
        });
        if dropped {
            let key = format!("{}C/{}%RH", s.conditions.temp_c, s.conditions.rh_pct);
            *drop_counts.entry(key).or_insert(0) += 1;
        } else {
            kept.push(s.clone());
        }
    }
    for (cell, n) in &drop_counts {
        diagnostics
            .dropped_cells
            .push(format!("{cell}: {n} specimens"));
    }
    if kept.is_empty() {
        return Err(Error::degenerate(
            "every specimen falls in an excluded cell",
        ));
    }
    let working = AccelDataset {
        specimens: kept,
        splits: dataset.splits.clone(),
    };
    let ctx = likelihood::prepare(&working)?;

    let names = coord_names(kind);
    let space = param_space(&names);
    let sigma_group_init = (init_params.sigma_v * 0.5).max(1e-3);
    let template = init_params.clone();
    let init_raw = pack(&names, &init_params, sigma_group_init);

    let neg_loglik = |x: &[f64]| -> f64 {
        let (params, sg) = unpack(kind, &names, &template, x);
        if params.validate().is_err() {
            return f64::INFINITY;
        }
        match kind {
            ModelKind::A => -likelihood::loglik_no_random(&ctx, &params),
            ModelKind::B => -likelihood::loglik_specimen(&ctx, &params, opts.quad_order),
            ModelKind::C => {
                let su = sg.unwrap();
                if !su.is_finite() || su <= 0.0 {
                    return f64::INFINITY;
                }
                -likelihood::loglik_nested(
                    &ctx,
                    &params,
                    su,
                    opts.outer_quad_order,
                    opts.inner_quad_order,
                )
            }
        }
    };

    let outcome = multi_start(
        &neg_loglik,
        &space,
        &init_raw,
        opts.multi_start,
        opts.seed,
        opts.max_iter,
    );
    if !outcome.result.converged() {
        return Err(Error::NonConvergence {
            context: format!("combined model {kind} fit"),
            iterations: outcome.result.iterations,
            grad_norm: outcome.result.grad_norm,
        });
    }
    let xhat = outcome.x_raw;
    let inference = observed_information(&neg_loglik, &xhat, &space);
    let (params, sigma_group) = unpack(kind, &names, &template, &xhat);

    // Conditional MSE at the fitted parameters.
    let band = likelihood::band_logs(&ctx, params.beta_lambda);
    let sums: Vec<_> = ctx
        .specimens
        .iter()
        .map(|sp| likelihood::combined_sums(sp, &params, &band))
        .collect();
    let mse = likelihood::conditional_mse(
        &ctx.groups,
        &sums,
        params.sigma_eps,
        params.sigma_v,
        sigma_group,
        opts.inner_quad_order,
    );

    // Fixed-effect block for prediction uncertainty.
    let n = names.len();
    let fixed_idx: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| !VARIANCE_COMPONENTS.contains(n))
        .map(|(i, _)| i)
        .collect();
    let nf = fixed_idx.len();
    let mut fixed_covariance = vec![0.0; nf * nf];
    for (a, &i) in fixed_idx.iter().enumerate() {
        for (b, &j) in fixed_idx.iter().enumerate() {
            fixed_covariance[a * nf + b] = inference.covariance[i * n + j];
        }
    }
    let fixed_names: Vec<String> = fixed_idx.iter().map(|&i| names[i].to_string()).collect();

    if !inference.pd {
        diagnostics.warnings.push(
            "observed information is not positive definite; standard errors \
             use a pseudo-inverse"
                .to_string(),
        );
    }
    if kind != ModelKind::A && params.sigma_v < 1e-6 {
        diagnostics
            .warnings
            .push("specimen effect variance collapsed toward zero".to_string());
    }
    let loglik = -outcome.result.f;
    diagnostics.iterations = outcome.result.iterations;
    diagnostics.n_evals = outcome.total_evals;
    diagnostics.grad_norm = outcome.result.grad_norm;
    diagnostics.converged = true;
    diagnostics.n_starts = opts.multi_start;
    diagnostics.best_start = outcome.best_start;
    diagnostics.hessian_pd = inference.pd;

    Ok(CombinedFit {
        kind,
        params,
        sigma_group,
        loglik,
        n_params: n,
        aic: aic(loglik, n),
        mse,
        param_names: names.iter().map(|s| s.to_string()).collect(),
        estimates: xhat,
        se: inference.se,
        covariance: inference.covariance,
        fixed_names,
        fixed_covariance,
        n_specimens: ctx.specimens.len(),
        n_obs: ctx.specimens.iter().map(|s| s.damage.len()).sum(),
        diagnostics,
    })
}

fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let xbar = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn slope_through_origin(points: &[(f64, f64)]) -> Option<f64> {
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Least-squares quadratic `y = c0 + c1 x + c2 x²`.
fn quadratic_fit(points: &[(f64, f64)]) -> Option<[f64; 3]> {
    if points.len() < 3 {
        return None;
    }
    let mut xtx = [0.0; 9];
    let mut xty = [0.0; 3];
    for &(x, y) in points {
        let row = [1.0, x, x * x];
        for i in 0..3 {
            xty[i] += row[i] * y;
            for j in 0..3 {
                xtx[i * 3 + j] += row[i] * row[j];
            }
        }
    }
    let l = crate::linalg::cholesky(&xtx, 3)?;
    let c = crate::linalg::chol_solve(&l, 3, &xty);
    Some([c[0], c[1], c[2]])
}

/// Fit `sigma(lambda) = sigma0 + exp(sigma1 + sigma2*lambda)` through
/// per-band scale estimates: a golden-section search over `sigma0`
/// with the inner line fitted by least squares on the log scale.
fn fit_sigma_curve(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let line = |s0: f64, pts: &[(f64, f64)]| -> Option<(f64, f64, f64)> {
        let logs: Vec<(f64, f64)> = pts
            .iter()
            .filter(|(_, s)| *s > s0)
            .map(|&(l, s)| (l, (s - s0).ln()))
            .collect();
        if logs.len() < 2 {
            return None;
        }
        let slope = ols_slope(&logs)?;
        let n = logs.len() as f64;
        let intercept = logs.iter().map(|p| p.1 - slope * p.0).sum::<f64>() / n;
        let sse: f64 = logs
            .iter()
            .map(|&(l, y)| {
                let r = y - (intercept + slope * l);
                r * r
            })
            .sum();
        Some((intercept, slope, sse))
    };
    let min_sigma = points
        .iter()
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min);
    match points.len() {
        0 => (0.8, 7.7, -0.026),
        1 => {
            let (l, s) = points[0];
            let s0 = 0.8 * s;
            (s0, (s - s0).ln() + 0.026 * l, -0.026)
        }
        2 => {
            let s0 = 0.5 * min_sigma;
            let (a, b) = (points[0], points[1]);
            let slope = ((b.1 - s0).ln() - (a.1 - s0).ln()) / (b.0 - a.0);
            (s0, (a.1 - s0).ln() - slope * a.0, slope)
        }
        _ => {
            let objective = |s0: f64| -> f64 {
                match line(s0, points) {
                    Some((_, _, sse)) => -sse,
                    None => f64::NEG_INFINITY,
                }
            };
            let s0 = grid_golden_max(&objective, 1e-6, 0.999 * min_sigma, 64, 1e-6);
            match line(s0, points) {
                Some((intercept, slope, _)) => (s0, intercept, slope),
                None => (0.8 * min_sigma, (0.2 * min_sigma).ln() + 0.026 * points[0].0, -0.026),
            }
        }
    }
}

/// Translate a factor-per-level fit into combined-model starting
/// values: the wavelength slope from the band effects, activation
/// energy from the temperature effects, the humidity quadratic from the
/// humidity effects, the residual ND exponent from the ND effects, and
/// the scale curve through the per-band scales. Factors without enough
/// levels fall back to neutral defaults.
pub fn seed_from_categorical(
    cat: &CategoricalFit,
    splits: &BTreeMap<u32, WavelengthSplit>,
) -> CombinedParams {
    let nd_base_ln = cat.baselines.nd.ln();
    let t_base_inv = 1.0 / (cat.baselines.temp_c + KELVIN_OFFSET);
    let rh_base = cat.baselines.rh_pct;

    // Split bands: (mean wavelength, effect, split).
    let mut free_eff = None;
    let mut pairs: Vec<(f64, f64, &WavelengthSplit)> = Vec::new();
    for b in &cat.bp_effect {
        if is_free_band(b.level) {
            free_eff = Some(b.estimate);
        } else if let Some(split) = splits.get(&(b.level.round() as u32)) {
            let lbar: f64 = split
                .lambdas
                .iter()
                .zip(&split.proportions)
                .map(|(l, p)| l * p)
                .sum();
            pairs.push((lbar, b.estimate, split));
        }
    }
    let beta_lambda = ols_slope(
        &pairs
            .iter()
            .map(|(l, e, _)| (*l, *e))
            .collect::<Vec<_>>(),
    )
    .unwrap_or(-0.02);

    let ea_over_r = slope_through_origin(
        &cat.log_f
            .iter()
            .map(|lf| (t_base_inv - 1.0 / (lf.level + KELVIN_OFFSET), lf.estimate))
            .collect::<Vec<_>>(),
    )
    .unwrap_or(2000.0);

    let mut rh_points = vec![(rh_base, 0.0)];
    rh_points.extend(cat.log_g.iter().map(|lg| (lg.level, lg.estimate)));
    let (beta_rh, rh0) = match quadratic_fit(&rh_points) {
        Some([_, c1, c2]) if c2.abs() > 1e-12 => {
            ((-c2), (-c1 / (2.0 * c2)).clamp(0.0, 100.0))
        }
        _ => {
            // One non-baseline level: place the vertex mid-range and
            // solve for the curvature from the single contrast.
            let rh0 = 45.0;
            let beta = cat
                .log_g
                .first()
                .and_then(|lg| {
                    let d = (lg.level - rh0).powi(2) - (rh_base - rh0).powi(2);
                    (d.abs() > 1e-9).then(|| -lg.estimate / d)
                })
                .unwrap_or(-1e-4);
            (beta, rh0)
        }
    };

    let p = slope_through_origin(
        &cat.log_d
            .iter()
            .map(|ld| (ld.level.ln() - nd_base_ln, ld.estimate))
            .collect::<Vec<_>>(),
    )
    .unwrap_or(0.0);

    let (sigma0, sigma1, sigma2) = fit_sigma_curve(
        &cat.sigma_bp
            .iter()
            .map(|s| (s.level, s.estimate))
            .collect::<Vec<_>>(),
    );

    // Baseline-level contributions absorbed by each band effect.
    let absorbed = p * nd_base_ln - ea_over_r * t_base_inv - beta_rh * (rh_base - rh0).powi(2);
    let eta0 = if pairs.is_empty() {
        10.0
    } else {
        pairs
            .iter()
            .map(|(_, e, split)| e - split.log_band_factor(beta_lambda) - absorbed)
            .sum::<f64>()
            / pairs.len() as f64
    };
    let b353 = match free_eff {
        Some(e) => e - absorbed,
        None => eta0 + beta_lambda * 353.0,
    };

    CombinedParams {
        alpha: cat.alpha,
        beta_lambda,
        p,
        ea_over_r,
        beta_rh,
        rh0,
        eta0,
        b353,
        sigma0,
        sigma1,
        sigma2,
        sigma_v: cat.sigma_v.max(1e-3),
        sigma_eps: cat.sigma_eps.max(1e-4),
    }
}
