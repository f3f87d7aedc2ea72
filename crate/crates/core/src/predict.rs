//! Outdoor degradation prediction under time-varying weather.
//!
//! Accelerated-test fits describe damage as a function of cumulative
//! dosage at fixed conditions. Outdoors, irradiance, temperature, and
//! humidity all move, so the path is built incrementally: within each
//! bin the conditions are treated as constant, the damage slope is
//! evaluated at the bin's midpoint dosage, and the increments
//! accumulate. As the bins shrink this converges to the continuous
//! damage process; under constant conditions it reproduces the
//! closed-form accelerated path.

use chrono::NaiveDateTime;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariates::{bin_covariates, BinnedHistory, CovariateHistory};
use crate::error::{Error, Result};
use crate::fit::CombinedFit;
use crate::linalg::psd_sqrt;
use crate::path::{sigma_of_lambda, CombinedParams, KELVIN_OFFSET};
use crate::sim::{domains, stream_rng};
use crate::stats::{norm_cdf, norm_ppf, quantile_sorted, sigmoid_deriv};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Bin width for the incremental integration, in minutes. Must
    /// divide the covariate recording interval evenly.
    pub bin_minutes: u32,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self { bin_minutes: 60 }
    }
}

/// A predicted damage path on the covariate bin grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionPath {
    pub start: NaiveDateTime,
    pub bin_minutes: u32,
    /// End of each bin, in hours since `start`.
    pub t_end_h: Vec<f64>,
    /// Damage at each bin end (starts near zero, decreases).
    pub omega: Vec<f64>,
    /// Cumulative wavelength-weighted effective dosage at each bin end.
    pub s_star: Vec<f64>,
}

impl PredictionPath {
    /// Damage at `t_h` hours, linearly interpolated between bin ends.
    /// `None` beyond the last bin.
    pub fn value_at(&self, t_h: f64) -> Option<f64> {
        interp(&self.t_end_h, &self.omega, t_h)
    }

    /// Cumulative effective dosage at `t_h` hours.
    pub fn s_star_at(&self, t_h: f64) -> Option<f64> {
        interp(&self.t_end_h, &self.s_star, t_h)
    }

    pub fn end_h(&self) -> f64 {
        self.t_end_h.last().copied().unwrap_or(0.0)
    }
}

fn interp(ts: &[f64], ys: &[f64], t: f64) -> Option<f64> {
    let last = *ts.last()?;
    if !(0.0..=last).contains(&t) {
        return None;
    }
    // Bins start at 0 even though ts[0] is the end of the first bin.
    let idx = ts.partition_point(|&x| x < t);
    if idx == 0 {
        let frac = t / ts[0];
        return Some(ys[0] * frac);
    }
    let (t0, t1) = (ts[idx - 1], ts[idx]);
    let (y0, y1) = (ys[idx - 1], ys[idx]);
    Some(y0 + (y1 - y0) * (t - t0) / (t1 - t0))
}

/// Predict the damage path for a specimen with random effect `v` under
/// the recorded weather. The history must be complete (impute first).
pub fn predict_path(
    history: &CovariateHistory,
    params: &CombinedParams,
    v: f64,
    opts: &PredictOptions,
) -> Result<PredictionPath> {
    let binned = bin_covariates(history, opts.bin_minutes)?;
    predict_on_binned(&binned, params, v)
}

/// The incremental midpoint engine on an already-binned history.
pub fn predict_on_binned(
    binned: &BinnedHistory,
    params: &CombinedParams,
    v: f64,
) -> Result<PredictionPath> {
    params.validate()?;
    let n_cells = binned.lambdas.len();
    let n_bins = binned.t_end_h.len();

    // Per-cell weights and scales never change across bins.
    let weights: Vec<f64> = binned
        .lambdas
        .iter()
        .map(|&l| (params.beta_lambda * l).exp())
        .collect();
    let inv_sigma: Vec<f64> = binned
        .lambdas
        .iter()
        .map(|&l| {
            sigma_of_lambda(params.sigma0, params.sigma1, params.sigma2, l).map(|s| 1.0 / s)
        })
        .collect::<Result<_>>()?;

    let amp = params.alpha * v.exp();
    let mut omega = Vec::with_capacity(n_bins);
    let mut s_star = Vec::with_capacity(n_bins);
    let mut s_cum = 0.0;
    let mut w_cum = 0.0;
    for i in 0..n_bins {
        let dosage = &binned.dosage[i * n_cells..(i + 1) * n_cells];
        let ds_tot: f64 = dosage
            .iter()
            .zip(&weights)
            .map(|(d, w)| d * w)
            .sum();
        if ds_tot > 0.0 {
            let s_mid = s_cum + 0.5 * ds_tot;
            let base = s_mid.ln() + params.eta0
                - params.ea_over_r / (binned.temp_c[i] + KELVIN_OFFSET)
                - params.beta_rh * (binned.rh_pct[i] - params.rh0).powi(2);
            let slope_sum: f64 = dosage
                .iter()
                .zip(&weights)
                .zip(&inv_sigma)
                .filter(|((d, _), _)| **d > 0.0)
                .map(|((d, w), is)| sigmoid_deriv(base * is) * d * w * is)
                .sum();
            w_cum += amp * slope_sum / s_mid;
            s_cum += ds_tot;
        }
        omega.push(w_cum);
        s_star.push(s_cum);
    }
    Ok(PredictionPath {
        start: binned.start,
        bin_minutes: binned.bin_minutes,
        t_end_h: binned.t_end_h.clone(),
        omega,
        s_star,
    })
}

/// Mean squared difference between observed and predicted damage.
pub fn prediction_mse(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() || observed.is_empty() {
        return Err(Error::config(
            "observed and predicted series must have equal, nonzero length",
        ));
    }
    Ok(observed
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / observed.len() as f64)
}

/// Result of [`estimate_random_effect`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomEffectEstimate {
    pub v_hat: f64,
    /// Least-squares scale `sum(y*yhat)/sum(yhat^2)` over the window.
    pub ratio: f64,
    /// True when the ratio was not positive and `v_hat` fell back to 0.
    pub fell_back: bool,
    /// 1-based observation window actually used.
    pub window: (usize, usize),
}

/// Estimate a specimen's random effect from early outdoor
/// measurements: the damage path scales by `exp(v)`, so the
/// least-squares scale of observed against predicted damage over an
/// early window identifies it. The window is 1-based and inclusive,
/// and the series must reach its end; the points before it are
/// excluded because early damage is too small to carry scale
/// information.
pub fn estimate_random_effect(
    observed: &[f64],
    predicted: &[f64],
    window: (usize, usize),
) -> Result<RandomEffectEstimate> {
    if observed.len() != predicted.len() {
        return Err(Error::config(
            "observed and predicted series must have equal length",
        ));
    }
    let (lo, hi) = window;
    if lo == 0 || hi < lo {
        return Err(Error::config("window must be 1-based with lo <= hi"));
    }
    if observed.len() < hi {
        return Err(Error::config(
            "adjustment needs measurements through the end of the window",
        ));
    }
    let mut syp = 0.0;
    let mut spp = 0.0;
    for i in (lo - 1)..hi {
        syp += observed[i] * predicted[i];
        spp += predicted[i] * predicted[i];
    }
    if spp <= 0.0 {
        return Err(Error::degenerate(
            "predicted damage is zero over the adjustment window",
        ));
    }
    let ratio = syp / spp;
    if ratio <= 0.0 {
        Ok(RandomEffectEstimate {
            v_hat: 0.0,
            ratio,
            fell_back: true,
            window: (lo, hi),
        })
    } else {
        Ok(RandomEffectEstimate {
            v_hat: ratio.ln(),
            ratio,
            fell_back: false,
            window: (lo, hi),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalOptions {
    /// Coverage level of the band, e.g. 0.95.
    pub level: f64,
    /// Number of parameter/specimen draws.
    pub n_draws: usize,
    pub seed: u64,
    pub bin_minutes: u32,
    /// Evaluation times in hours; default is daily plus the final time.
    pub times_h: Option<Vec<f64>>,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            n_draws: 50_000,
            seed: 0,
            bin_minutes: 60,
            times_h: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalDiagnostics {
    pub n_draws: usize,
    /// Draws rejected for producing invalid parameters and redrawn.
    pub redraws: usize,
    pub warnings: Vec<String>,
}

/// A calibrated pointwise prediction band for a new specimen's damage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionBand {
    pub start: NaiveDateTime,
    pub level: f64,
    pub times_h: Vec<f64>,
    /// Median-specimen path (random effect at zero).
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cumulative effective dosage at the evaluation times.
    pub s_star: Vec<f64>,
    pub diagnostics: IntervalDiagnostics,
}

const MAX_REDRAWS_PER_DRAW: usize = 1000;

/// Compute a calibrated prediction band for a new specimen exposed to
/// the recorded weather.
///
/// Each draw perturbs the fixed effects by a normal draw from their
/// estimated covariance and the specimen effect from its fitted
/// distribution, then rebuilds the damage path. The drawn paths are
/// reduced to probability-scale pivots against the point path, whose
/// empirical quantiles are inverted back to damage units, which keeps
/// the band's endpoints on actual damage paths rather than on a normal
/// approximation.
pub fn calibrated_interval(
    history: &CovariateHistory,
    fit: &CombinedFit,
    opts: &IntervalOptions,
) -> Result<PredictionBand> {
    if !(0.0..1.0).contains(&opts.level) || opts.level <= 0.0 {
        return Err(Error::config("interval level must be in (0, 1)"));
    }
    if opts.n_draws < 1000 {
        return Err(Error::config(
            "interval calibration needs at least 1000 draws",
        ));
    }
    let sigma_v = fit.params.sigma_v;
    let binned = bin_covariates(history, opts.bin_minutes)?;
    let base = predict_on_binned(&binned, &fit.params, 0.0)?;
    let end = base.end_h();

    let times_h = match &opts.times_h {
        Some(ts) => {
            for &t in ts {
                if !(t > 0.0 && t <= end) {
                    return Err(Error::Extrapolation {
                        requested: t,
                        limit: end,
                    });
                }
            }
            ts.clone()
        }
        None => {
            let mut ts: Vec<f64> = (1..=(end / 24.0).floor() as usize)
                .map(|d| 24.0 * d as f64)
                .collect();
            if ts.last().map_or(true, |&l| l < end) {
                ts.push(end);
            }
            ts
        }
    };
    let base_at: Vec<f64> = times_h
        .iter()
        .map(|&t| base.value_at(t).unwrap())
        .collect();

    // Without a specimen effect the predictive distribution carries no
    // invertible spread: the band collapses to the point prediction.
    if sigma_v <= 0.0 {
        let s_star = times_h
            .iter()
            .map(|&t| base.s_star_at(t).unwrap())
            .collect();
        return Ok(PredictionBand {
            start: base.start,
            level: opts.level,
            times_h,
            point: base_at.clone(),
            lower: base_at.clone(),
            upper: base_at,
            s_star,
            diagnostics: IntervalDiagnostics {
                n_draws: 0,
                redraws: 0,
                warnings: vec![
                    "the fit has no specimen effect variance; the band collapsed \
                     to the point prediction"
                        .to_string(),
                ],
            },
        });
    }

    let nf = fit.fixed_names.len();
    if fit.fixed_covariance.len() != nf * nf {
        return Err(Error::config(
            "fixed-effect covariance does not match the parameter count",
        ));
    }
    let theta_hat: Vec<f64> = fit
        .fixed_names
        .iter()
        .map(|n| crate::fit::get_param(&fit.params, f64::NAN, n))
        .collect();
    let sqrt_cov = psd_sqrt(&fit.fixed_covariance, nf);

    // One path per draw, evaluated at the requested times.
    let rows: Vec<Result<(Vec<f64>, usize)>> = (0..opts.n_draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(opts.seed, domains::BOOTSTRAP, b as u64);
            let mut redraws = 0;
            let params = loop {
                let z: Vec<f64> = (0..nf)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut candidate = fit.params.clone();
                let mut unused = f64::NAN;
                for (i, name) in fit.fixed_names.iter().enumerate() {
                    let shift: f64 = (0..nf).map(|j| sqrt_cov[i * nf + j] * z[j]).sum();
                    crate::fit::set_param(&mut candidate, &mut unused, name, theta_hat[i] + shift);
                }
                if candidate.validate().is_ok() {
                    break candidate;
                }
                redraws += 1;
                if redraws > MAX_REDRAWS_PER_DRAW {
                    return Err(Error::degenerate(
                        "parameter uncertainty is too large to calibrate an interval",
                    ));
                }
            };
            let v = sigma_v * rng.sample::<f64, _>(StandardNormal);
            let path = predict_on_binned(&binned, &params, v)?;
            let row = times_h
                .iter()
                .map(|&t| path.value_at(t).unwrap())
                .collect();
            Ok((row, redraws))
        })
        .collect();

    let mut paths = Vec::with_capacity(opts.n_draws);
    let mut total_redraws = 0;
    for r in rows {
        let (row, redraws) = r?;
        paths.push(row);
        total_redraws += redraws;
    }

    let mut warnings = Vec::new();
    if total_redraws * 10 > opts.n_draws {
        warnings.push(format!(
            "{total_redraws} of {} draws were rejected as invalid; the band may \
             understate parameter uncertainty",
            opts.n_draws
        ));
    }

    // Reduce each draw to its probability-scale pivot per time, take
    // empirical quantiles, and invert back to damage units.
    let q_lo = (1.0 - opts.level) / 2.0;
    let q_hi = 1.0 - q_lo;
    let mut lower = Vec::with_capacity(times_h.len());
    let mut upper = Vec::with_capacity(times_h.len());
    for (j, &b0) in base_at.iter().enumerate() {
        if b0 == 0.0 {
            lower.push(0.0);
            upper.push(0.0);
            continue;
        }
        let mut pivots: Vec<f64> = paths
            .iter()
            .map(|row| norm_cdf(-(row[j] / b0).ln() / sigma_v))
            .collect();
        pivots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let w_lo = quantile_sorted(&pivots, q_lo);
        let w_hi = quantile_sorted(&pivots, q_hi);
        // Small pivot = heavily degraded specimen = numerically lower
        // damage bound (damage is negative).
        lower.push(b0 * (-sigma_v * norm_ppf(w_lo)).exp());
        upper.push(b0 * (-sigma_v * norm_ppf(w_hi)).exp());
    }

    let s_star = times_h
        .iter()
        .map(|&t| base.s_star_at(t).unwrap())
        .collect();
    Ok(PredictionBand {
        start: base.start,
        level: opts.level,
        times_h,
        point: base_at,
        lower,
        upper,
        s_star,
        diagnostics: IntervalDiagnostics {
            n_draws: opts.n_draws,
            redraws: total_redraws,
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::CovariateRecord;
    use crate::fit::{FitDiagnostics, ModelKind};
    use crate::spectral::N_CELLS;
    use crate::stats::sigmoid;
    use chrono::NaiveDate;

    fn start() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2023, 3, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    /// Constant-rate history with dosage in the given cells, hourly
    /// records for `n_days`.
    fn constant_history(
        cells: &[(usize, f64)],
        temp_c: f64,
        rh_pct: f64,
        n_days: usize,
    ) -> CovariateHistory {
        let mut records = Vec::new();
        for i in 0..(n_days * 24) {
            let mut dosage = vec![0.0; N_CELLS];
            for &(k, rate) in cells {
                dosage[k] = rate;
            }
            records.push(CovariateRecord {
                timestamp: start() + chrono::Duration::hours(i as i64),
                temp_c,
                rh_pct,
                dosage,
            });
        }
        CovariateHistory::new(records, 60).unwrap()
    }

    /// Closed-form path under constant conditions and a fixed spectral
    /// shape: a mixture of logistic terms, one per active cell.
    fn closed_form(
        params: &CombinedParams,
        cells: &[(usize, f64)],
        temp_c: f64,
        rh_pct: f64,
        v: f64,
        t_h: f64,
    ) -> f64 {
        let lambdas = crate::spectral::cell_centers();
        let weighted: Vec<(f64, f64)> = cells
            .iter()
            .map(|&(k, rate)| {
                let w = (params.beta_lambda * lambdas[k]).exp();
                (lambdas[k], w * rate * t_h)
            })
            .collect();
        let s_star: f64 = weighted.iter().map(|(_, s)| s).sum();
        let c = params.eta0 - params.ea_over_r / (temp_c + KELVIN_OFFSET)
            - params.beta_rh * (rh_pct - params.rh0).powi(2);
        weighted
            .iter()
            .map(|&(l, s)| {
                let sigma =
                    sigma_of_lambda(params.sigma0, params.sigma1, params.sigma2, l).unwrap();
                let frac = s / s_star;
                params.alpha * v.exp() * frac * sigmoid((s_star.ln() + c) / sigma)
            })
            .sum()
    }

    fn fast_params() -> CombinedParams {
        // Nominal surface, but with the intercept raised so damage
        // accumulates within a month at unit dosage rates.
        let mut p = CombinedParams::nominal();
        p.eta0 = 8.0;
        p
    }

    #[test]
    fn midpoint_engine_matches_closed_form_under_constant_conditions() {
        let params = fast_params();
        let cells = [(3usize, 2.0)]; // single cell at 306 nm
        let hist = constant_history(&cells, 25.0, 50.0, 30);
        for (bin_min, tol) in [(60u32, 1e-3), (6u32, 1e-4)] {
            let path = predict_path(
                &hist,
                &params,
                0.3,
                &PredictOptions {
                    bin_minutes: bin_min,
                },
            )
            .unwrap();
            for frac in [0.1, 0.3, 0.5, 0.8, 1.0] {
                let t = 30.0 * 24.0 * frac;
                let got = path.value_at(t).unwrap();
                let want = closed_form(&params, &cells, 25.0, 50.0, 0.3, t);
                assert!(
                    (got - want).abs() < tol,
                    "bin {bin_min}min at t={t}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn engine_handles_spectral_mixtures() {
        let params = fast_params();
        let cells = [(3usize, 1.5), (13, 4.0), (40, 10.0)];
        let hist = constant_history(&cells, 30.0, 60.0, 30);
        let path = predict_path(&hist, &params, -0.2, &PredictOptions { bin_minutes: 6 }).unwrap();
        let t = 30.0 * 24.0;
        let got = path.value_at(t).unwrap();
        let want = closed_form(&params, &cells, 30.0, 60.0, -0.2, t);
        assert!((got - want).abs() < 2e-4, "{got} vs {want}");
    }

    #[test]
    fn damage_is_monotone_and_scales_exactly_with_the_random_effect() {
        let params = fast_params();
        let hist = constant_history(&[(3, 1.0), (20, 5.0)], 25.0, 50.0, 10);
        let p0 = predict_path(&hist, &params, 0.0, &PredictOptions::default()).unwrap();
        let pv = predict_path(&hist, &params, 0.4, &PredictOptions::default()).unwrap();
        for w in p0.omega.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let scale = 0.4f64.exp();
        for (a, b) in p0.omega.iter().zip(&pv.omega) {
            assert!((b - a * scale).abs() < 1e-12);
        }
    }

    #[test]
    fn dark_periods_leave_the_path_flat() {
        let params = fast_params();
        let mut records = Vec::new();
        for i in 0..240 {
            let mut dosage = vec![0.0; N_CELLS];
            let hour = i % 24;
            if (8..16).contains(&hour) {
                dosage[10] = 3.0;
            }
            records.push(CovariateRecord {
                timestamp: start() + chrono::Duration::hours(i as i64),
                temp_c: 20.0,
                rh_pct: 55.0,
                dosage,
            });
        }
        let hist = CovariateHistory::new(records, 60).unwrap();
        let path = predict_path(&hist, &params, 0.0, &PredictOptions::default()).unwrap();
        // Overnight (bins 0..8 of each day) the damage must not move.
        assert_eq!(path.omega[0], 0.0);
        for day in 0..10 {
            let i0 = day * 24;
            for i in i0..i0 + 8 {
                if i == 0 {
                    continue;
                }
                assert_eq!(path.omega[i], path.omega[i - 1], "bin {i}");
            }
        }
        assert!(path.omega.last().unwrap() < &-1e-4);
    }

    #[test]
    fn interpolation_and_range_checks() {
        let params = fast_params();
        let hist = constant_history(&[(3, 1.0)], 25.0, 50.0, 2);
        let path = predict_path(&hist, &params, 0.0, &PredictOptions::default()).unwrap();
        assert!(path.value_at(-1.0).is_none());
        assert!(path.value_at(48.0 + 1e-9).is_none());
        let mid = path.value_at(1.5).unwrap();
        assert!(mid < 0.0 && mid > path.omega[1]);
    }

    #[test]
    fn random_effect_recovery_from_scaled_observations() {
        let predicted = vec![-0.05, -0.09, -0.14, -0.20, -0.26, -0.31, -0.37, -0.42, -0.45, -0.48];
        let v = 0.25;
        let observed: Vec<f64> = predicted.iter().map(|p| p * v.exp()).collect();
        let est = estimate_random_effect(&observed, &predicted, (5, 10)).unwrap();
        assert!((est.v_hat - v).abs() < 1e-12);
        assert!(!est.fell_back);
        assert_eq!(est.window, (5, 10));

        // Too few measurements to reach the window's end.
        assert!(matches!(
            estimate_random_effect(&observed[..7], &predicted[..7], (5, 10)),
            Err(Error::Config(_))
        ));

        // A sign-flipped specimen cannot be scaled: fall back to zero.
        let flipped: Vec<f64> = predicted.iter().map(|p| -p).collect();
        let est = estimate_random_effect(&flipped, &predicted, (5, 10)).unwrap();
        assert!(est.fell_back);
        assert_eq!(est.v_hat, 0.0);

        let zeros = vec![0.0; 10];
        assert!(matches!(
            estimate_random_effect(&observed, &zeros, (5, 10)),
            Err(Error::Degenerate(_))
        ));
    }

    fn synthetic_fit(sigma_v: f64) -> CombinedFit {
        let mut params = fast_params();
        params.sigma_v = sigma_v;
        let fixed_names: Vec<String> = [
            "alpha",
            "beta_lambda",
            "p",
            "ea_over_r",
            "beta_rh",
            "rh0",
            "eta0",
            "b353",
            "sigma0",
            "sigma1",
            "sigma2",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let nf = fixed_names.len();
        let mut cov = vec![0.0; nf * nf];
        let ses = [0.01, 2.6e-4, 0.008, 76.0, 1e-5, 0.29, 0.26, 0.09, 0.007, 0.19, 6e-4];
        for i in 0..nf {
            cov[i * nf + i] = ses[i] * ses[i];
        }
        CombinedFit {
            kind: ModelKind::B,
            params,
            sigma_group: None,
            loglik: 0.0,
            n_params: 13,
            aic: 0.0,
            mse: 0.0,
            param_names: fixed_names.clone(),
            estimates: vec![],
            se: vec![],
            covariance: vec![],
            fixed_names,
            fixed_covariance: cov,
            n_specimens: 0,
            n_obs: 0,
            diagnostics: FitDiagnostics::default(),
        }
    }

    #[test]
    fn calibrated_band_brackets_the_point_path_and_nests_by_level() {
        let fit = synthetic_fit(0.15);
        let hist = constant_history(&[(3, 1.0), (30, 6.0)], 22.0, 55.0, 20);
        let opts = IntervalOptions {
            n_draws: 1000,
            seed: 7,
            ..IntervalOptions::default()
        };
        let band = calibrated_interval(&hist, &fit, &opts).unwrap();
        assert_eq!(band.times_h.len(), 20);
        for j in 0..band.times_h.len() {
            assert!(
                band.lower[j] <= band.point[j] && band.point[j] <= band.upper[j],
                "t={}: {} {} {}",
                band.times_h[j],
                band.lower[j],
                band.point[j],
                band.upper[j]
            );
        }
        // The band is wider at higher confidence.
        let narrow = calibrated_interval(
            &hist,
            &fit,
            &IntervalOptions {
                level: 0.5,
                n_draws: 1000,
                seed: 7,
                ..IntervalOptions::default()
            },
        )
        .unwrap();
        for j in 0..band.times_h.len() {
            if band.point[j] == 0.0 {
                continue;
            }
            assert!(narrow.lower[j] >= band.lower[j] - 1e-12);
            assert!(narrow.upper[j] <= band.upper[j] + 1e-12);
        }
        // Same seed reproduces the band exactly.
        let again = calibrated_interval(&hist, &fit, &opts).unwrap();
        assert_eq!(band.lower, again.lower);
        assert_eq!(band.upper, again.upper);
    }

    #[test]
    fn interval_without_random_effect_collapses_to_the_point_path() {
        let fit = synthetic_fit(0.0);
        let hist = constant_history(&[(3, 1.0)], 22.0, 55.0, 5);
        let band = calibrated_interval(&hist, &fit, &IntervalOptions::default()).unwrap();
        assert_eq!(band.lower, band.point);
        assert_eq!(band.upper, band.point);
        assert_eq!(band.diagnostics.n_draws, 0);
        assert!(!band.diagnostics.warnings.is_empty());
    }

    #[test]
    fn interval_rejects_times_beyond_the_history() {
        let fit = synthetic_fit(0.1);
        let hist = constant_history(&[(3, 1.0)], 22.0, 55.0, 5);
        let opts = IntervalOptions {
            times_h: Some(vec![24.0, 5.0 * 24.0 + 1.0]),
            ..IntervalOptions::default()
        };
        assert!(matches!(
            calibrated_interval(&hist, &fit, &opts),
            Err(Error::Extrapolation { .. })
        ));
    }

    #[test]
    fn too_few_draws_is_a_configuration_error() {
        let fit = synthetic_fit(0.1);
        let hist = constant_history(&[(3, 1.0)], 22.0, 55.0, 2);
        let opts = IntervalOptions {
            n_draws: 500,
            ..IntervalOptions::default()
        };
        assert!(matches!(
            calibrated_interval(&hist, &fit, &opts),
            Err(Error::Config(_))
        ));
    }
}
