//! Factor-per-level fit: every bandpass, ND level, temperature, and
//! humidity gets a free multiplicative effect on effective dosage (a
//! free additive effect on the log scale), with no functional form
//! across levels. Effects are anchored by fixing the baseline level of
//! each factor to one; the per-bandpass effects absorb the overall
//! scale, so they have no baseline.

use serde::{Deserialize, Serialize};

use super::driver::{multi_start, observed_information, ParamSpace};
use super::likelihood::{self, LikContext, SpecimenSums};
use super::{aic, FitDiagnostics, FitOptions};
use crate::dataset::AccelDataset;
use crate::error::{Error, Result};
use crate::quad::gauss_hermite;
use crate::stats::sigmoid;

/// Reference levels at which each factor's effect is fixed to one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Baselines {
    pub nd: f64,
    pub temp_c: f64,
    pub rh_pct: f64,
}

impl Default for Baselines {
    fn default() -> Self {
        Baselines {
            nd: 0.10,
            temp_c: 35.0,
            rh_pct: 25.0,
        }
    }
}

/// One estimated level effect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub level: f64,
    pub estimate: f64,
    pub se: f64,
}

/// Result of [`fit_categorical`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalFit {
    pub alpha: f64,
    pub alpha_se: f64,
    /// Log band effect per bandpass center (absorbs the overall scale).
    pub bp_effect: Vec<LevelEstimate>,
    /// Log ND effect per non-baseline transmittance level.
    pub log_d: Vec<LevelEstimate>,
    /// Log temperature effect per non-baseline level.
    pub log_f: Vec<LevelEstimate>,
    /// Log humidity effect per non-baseline level.
    pub log_g: Vec<LevelEstimate>,
    /// Shape scale per bandpass center.
    pub sigma_bp: Vec<LevelEstimate>,
    pub sigma_v: f64,
    pub sigma_v_se: f64,
    pub sigma_eps: f64,
    pub sigma_eps_se: f64,
    pub baselines: Baselines,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    /// Mean squared residual at the conditional path scales.
    pub mse: f64,
    pub param_names: Vec<String>,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    /// Row-major covariance of the full parameter vector.
    pub covariance: Vec<f64>,
    pub n_specimens: usize,
    pub n_obs: usize,
    pub diagnostics: FitDiagnostics,
}

impl CategoricalFit {
    fn level_lookup(levels: &[LevelEstimate], x: f64) -> Option<f64> {
        levels
            .iter()
            .find(|l| quantize(l.level) == quantize(x))
            .map(|l| l.estimate)
    }

    /// Log ND effect at a level; the baseline returns zero.
    pub fn log_d_at(&self, nd: f64) -> Option<f64> {
        if quantize(nd) == quantize(self.baselines.nd) {
            return Some(0.0);
        }
        Self::level_lookup(&self.log_d, nd)
    }

    pub fn log_f_at(&self, temp_c: f64) -> Option<f64> {
        if quantize(temp_c) == quantize(self.baselines.temp_c) {
            return Some(0.0);
        }
        Self::level_lookup(&self.log_f, temp_c)
    }

    pub fn log_g_at(&self, rh_pct: f64) -> Option<f64> {
        if quantize(rh_pct) == quantize(self.baselines.rh_pct) {
            return Some(0.0);
        }
        Self::level_lookup(&self.log_g, rh_pct)
    }

    pub fn bp_effect_at(&self, bp_nm: f64) -> Option<f64> {
        Self::level_lookup(&self.bp_effect, bp_nm)
    }

    pub fn sigma_at(&self, bp_nm: f64) -> Option<f64> {
        Self::level_lookup(&self.sigma_bp, bp_nm)
    }
}

fn quantize(x: f64) -> i64 {
    (x * 1e6).round() as i64
}

fn distinct_levels(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut keyed: Vec<(i64, f64)> = values.map(|v| (quantize(v), v)).collect();
    keyed.sort_by_key(|k| k.0);
    keyed.dedup_by_key(|k| k.0);
    keyed.into_iter().map(|k| k.1).collect()
}

/// Parameter vector layout. Order: alpha, bandpass effects, ND effects,
/// temperature effects, humidity effects, per-bandpass scales, sigma_v,
/// sigma_eps.
struct Layout {
    bp: Vec<f64>,
    nd: Vec<f64>,
    temp: Vec<f64>,
    rh: Vec<f64>,
}

impl Layout {
    fn o_nd(&self) -> usize {
        1 + self.bp.len()
    }
    fn o_temp(&self) -> usize {
        self.o_nd() + self.nd.len()
    }
    fn o_rh(&self) -> usize {
        self.o_temp() + self.temp.len()
    }
    fn o_sigma(&self) -> usize {
        self.o_rh() + self.rh.len()
    }
    fn o_sigma_v(&self) -> usize {
        self.o_sigma() + self.bp.len()
    }
    fn n(&self) -> usize {
        self.o_sigma_v() + 2
    }
}

/// Per-specimen indices into the layout; `None` means baseline.
struct SpecIdx {
    bp: usize,
    nd: Option<usize>,
    temp: Option<usize>,
    rh: Option<usize>,
}

fn fmt_level(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x}")
    }
}

fn build_layout(ctx: &LikContext, baselines: &Baselines) -> Result<(Layout, Vec<SpecIdx>)> {
    let bp = distinct_levels(ctx.specimens.iter().map(|s| s.bp_nm));
    let factor = |name: &str,
                  baseline: f64,
                  values: Vec<f64>|
     -> Result<Vec<f64>> {
        let levels = distinct_levels(values.into_iter());
        if levels.len() <= 1 {
            return Ok(Vec::new());
        }
        if !levels.iter().any(|l| quantize(*l) == quantize(baseline)) {
            return Err(Error::RankDeficient(format!(
                "{name} levels {{{}}} lack the {} baseline, so their effects \
                 are not identifiable",
                levels
                    .iter()
                    .map(|l| fmt_level(*l))
                    .collect::<Vec<_>>()
                    .join(", "),
                fmt_level(baseline)
            )));
        }
        Ok(levels
            .into_iter()
            .filter(|l| quantize(*l) != quantize(baseline))
            .collect())
    };
    let nd = factor(
        "neutral-density",
        baselines.nd,
        ctx.specimens.iter().map(|s| s.nd).collect(),
    )?;
    let temp = factor(
        "temperature",
        baselines.temp_c,
        ctx.specimens.iter().map(|s| s.temp_c).collect(),
    )?;
    let rh = factor(
        "humidity",
        baselines.rh_pct,
        ctx.specimens.iter().map(|s| s.rh_pct).collect(),
    )?;
    if nd.is_empty() && temp.is_empty() && rh.is_empty() {
        return Err(Error::RankDeficient(
            "no covariate factor varies across specimens; there is nothing \
             to estimate beyond the bandpass effects"
                .into(),
        ));
    }
    let layout = Layout { bp, nd, temp, rh };
    let position = |levels: &[f64], x: f64| -> Option<usize> {
        levels.iter().position(|l| quantize(*l) == quantize(x))
    };
    let idx = ctx
        .specimens
        .iter()
        .map(|s| SpecIdx {
            bp: position(&layout.bp, s.bp_nm).expect("bp level collected above"),
            nd: position(&layout.nd, s.nd),
            temp: position(&layout.temp, s.temp_c),
            rh: position(&layout.rh, s.rh_pct),
        })
        .collect();
    Ok((layout, idx))
}

fn param_space(layout: &Layout) -> ParamSpace {
    let mut names = vec!["alpha".to_string()];
    let mut positive = vec![false];
    let mut scales = vec![0.5];
    let mut fd_floors = vec![1e-5];
    let mut push = |name: String, pos: bool, scale: f64, floor: f64| {
        names.push(name);
        positive.push(pos);
        scales.push(scale);
        fd_floors.push(floor);
    };
    for l in &layout.bp {
        push(format!("bp_effect[{}]", fmt_level(*l)), false, 2.0, 1e-4);
    }
    for l in &layout.nd {
        push(format!("log_d[{}]", fmt_level(*l)), false, 1.0, 1e-4);
    }
    for l in &layout.temp {
        push(format!("log_f[{}]", fmt_level(*l)), false, 1.0, 1e-4);
    }
    for l in &layout.rh {
        push(format!("log_g[{}]", fmt_level(*l)), false, 1.0, 1e-4);
    }
    for l in &layout.bp {
        push(format!("sigma[{}]", fmt_level(*l)), true, 0.5, 1e-5);
    }
    push("sigma_v".to_string(), true, 1.0, 1e-5);
    push("sigma_eps".to_string(), true, 1.0, 1e-6);
    ParamSpace {
        names,
        positive,
        scales,
        fd_floors,
    }
}

/// Data sums of every specimen at a raw parameter vector.
fn all_sums(ctx: &LikContext, idx: &[SpecIdx], layout: &Layout, x: &[f64]) -> Vec<SpecimenSums> {
    let alpha = x[0];
    ctx.specimens
        .iter()
        .zip(idx)
        .map(|(sp, si)| {
            let eff = x[1 + si.bp]
                + si.nd.map_or(0.0, |k| x[layout.o_nd() + k])
                + si.temp.map_or(0.0, |k| x[layout.o_temp() + k])
                + si.rh.map_or(0.0, |k| x[layout.o_rh() + k]);
            let inv_sigma = 1.0 / x[layout.o_sigma() + si.bp];
            let mut syw = 0.0;
            let mut sww = 0.0;
            for (ld, y) in sp.log_dosage.iter().zip(&sp.damage) {
                let w = alpha * sigmoid((eff + ld) * inv_sigma);
                syw += y * w;
                sww += w * w;
            }
            SpecimenSums {
                syy: sp.syy,
                syw,
                sww,
                m: sp.damage.len(),
            }
        })
        .collect()
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(values[values.len() / 2])
}

/// Data-driven starting values: the asymptote from the deepest observed
/// damage, band effects by inverting the sigmoid at mid-path
/// observations, and neutral starting points elsewhere.
fn initial_vector(ctx: &LikContext, idx: &[SpecIdx], layout: &Layout) -> Vec<f64> {
    let min_y = ctx
        .specimens
        .iter()
        .flat_map(|s| s.damage.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let alpha0 = if min_y < 0.0 {
        (min_y * 1.05).min(-0.05)
    } else {
        -0.1
    };
    let mut x = vec![0.0; layout.n()];
    x[0] = alpha0;
    for (b, bp) in layout.bp.iter().enumerate() {
        let mut vals = Vec::new();
        let mut all_logd = Vec::new();
        for (sp, si) in ctx.specimens.iter().zip(idx) {
            if si.bp != b {
                continue;
            }
            for (ld, y) in sp.log_dosage.iter().zip(&sp.damage) {
                all_logd.push(*ld);
                let q = y / alpha0;
                if q > 0.02 && q < 0.98 {
                    vals.push((q / (1.0 - q)).ln() - ld);
                }
            }
        }
        x[1 + b] = median(&mut vals)
            .or_else(|| median(&mut all_logd).map(|m| -m))
            .unwrap_or(-5.0);
        let _ = bp;
    }
    for k in 0..layout.bp.len() {
        x[layout.o_sigma() + k] = 1.0;
    }
    x[layout.o_sigma_v()] = 0.1;
    x[layout.o_sigma_v() + 1] = 0.02;
    x
}

/// Fit the factor-per-level model by marginal maximum likelihood with a
/// per-specimen lognormal scale effect.
pub fn fit_categorical(dataset: &AccelDataset, opts: &FitOptions) -> Result<CategoricalFit> {
    if opts.quad_order == 0 {
        return Err(Error::config("quadrature order must be at least 1"));
    }
    let baselines = Baselines::default();
    let ctx = likelihood::prepare_with(dataset, false)?;
    let (layout, idx) = build_layout(&ctx, &baselines)?;
    let space = param_space(&layout);
    let init = initial_vector(&ctx, &idx, &layout);

    let (nodes, weights) = gauss_hermite(opts.quad_order);
    let logw_x2: Vec<f64> = weights
        .iter()
        .zip(&nodes)
        .map(|(w, x)| w.ln() + x * x)
        .collect();
    let neg_loglik = |x: &[f64]| -> f64 {
        if x[0] >= -1e-8 || x.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let sigma_v = x[layout.o_sigma_v()];
        let sigma_eps = x[layout.o_sigma_v() + 1];
        let sums = all_sums(&ctx, &idx, &layout, x);
        -sums
            .iter()
            .map(|s| likelihood::specimen_marginal(*s, sigma_eps, sigma_v, &nodes, &logw_x2))
            .sum::<f64>()
    };

    let outcome = multi_start(
        &neg_loglik,
        &space,
        &init,
        opts.multi_start,
        opts.seed,
        opts.max_iter,
    );
    if !outcome.result.converged() {
        return Err(Error::NonConvergence {
            context: "factor-per-level fit".into(),
            iterations: outcome.result.iterations,
            grad_norm: outcome.result.grad_norm,
        });
    }
    let xhat = outcome.x_raw;
    let inference = observed_information(&neg_loglik, &xhat, &space);

    let sums = all_sums(&ctx, &idx, &layout, &xhat);
    let sigma_v = xhat[layout.o_sigma_v()];
    let sigma_eps = xhat[layout.o_sigma_v() + 1];
    let mse = likelihood::conditional_mse(&ctx.groups, &sums, sigma_eps, sigma_v, None, opts.inner_quad_order);

    let loglik = -outcome.result.f;
    let n_params = layout.n();
    let levels = |offset: usize, level_values: &[f64]| -> Vec<LevelEstimate> {
        level_values
            .iter()
            .enumerate()
            .map(|(k, l)| LevelEstimate {
                level: *l,
                estimate: xhat[offset + k],
                se: inference.se[offset + k],
            })
            .collect()
    };
    let mut warnings = Vec::new();
    if !inference.pd {
        warnings.push(
            "observed information is not positive definite; standard errors \
             use a pseudo-inverse"
                .to_string(),
        );
    }
    if sigma_v < 1e-6 {
        warnings.push("specimen effect variance collapsed toward zero".to_string());
    }
    Ok(CategoricalFit {
        alpha: xhat[0],
        alpha_se: inference.se[0],
        bp_effect: levels(1, &layout.bp),
        log_d: levels(layout.o_nd(), &layout.nd),
        log_f: levels(layout.o_temp(), &layout.temp),
        log_g: levels(layout.o_rh(), &layout.rh),
        sigma_bp: levels(layout.o_sigma(), &layout.bp),
        sigma_v,
        sigma_v_se: inference.se[layout.o_sigma_v()],
        sigma_eps,
        sigma_eps_se: inference.se[layout.o_sigma_v() + 1],
        baselines,
        loglik,
        n_params,
        aic: aic(loglik, n_params),
        mse,
        param_names: space.names.clone(),
        estimates: xhat,
        se: inference.se,
        covariance: inference.covariance,
        n_specimens: ctx.specimens.len(),
        n_obs: ctx.specimens.iter().map(|s| s.damage.len()).sum(),
        diagnostics: FitDiagnostics {
            iterations: outcome.result.iterations,
            n_evals: outcome.total_evals,
            grad_norm: outcome.result.grad_norm,
            converged: true,
            n_starts: opts.multi_start,
            best_start: outcome.best_start,
            hessian_pd: inference.pd,
            dropped_cells: Vec::new(),
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AccelSpecimen;
    use crate::path::ExposureConditions;
    use crate::spectral::DosageSeries;
    use crate::stats::sigmoid;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::collections::BTreeMap;

    struct TrueCat {
        alpha: f64,
        eff: fn(f64) -> f64,
        logd: fn(f64) -> f64,
        logg: fn(f64) -> f64,
        sigma: fn(f64) -> f64,
        sigma_v: f64,
        sigma_eps: f64,
    }

    fn truth() -> TrueCat {
        TrueCat {
            alpha: -0.68,
            eff: |bp| if bp == 353.0 { -6.0 } else { -7.0 },
            logd: |nd| if nd == 0.4 { -0.79 } else { 0.0 },
            logg: |rh| if rh == 75.0 { 0.23 } else { 0.0 },
            sigma: |bp| if bp == 353.0 { 1.0 } else { 0.84 },
            sigma_v: 0.05,
            sigma_eps: 0.01,
        }
    }

    /// Synthetic two-band dataset with known factor effects.
    fn synthetic_dataset(seed: u64) -> AccelDataset {
        use rand::SeedableRng;
        let t = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut specimens = Vec::new();
        for (ci, &(bp, nd, rh)) in [
            (353.0, 0.1, 25.0),
            (353.0, 0.1, 75.0),
            (353.0, 0.4, 25.0),
            (353.0, 0.4, 75.0),
            (452.0, 0.1, 25.0),
            (452.0, 0.1, 75.0),
            (452.0, 0.4, 25.0),
            (452.0, 0.4, 75.0),
        ]
        .iter()
        .enumerate()
        {
            // Transmitted rate: wide band is brighter; times chosen so
            // z sweeps the informative range in every cell.
            let rate = if bp == 353.0 { 34.0 } else { 126.0 } * nd;
            let times: Vec<f64> = (1..=16).map(|i| 48.0 * i as f64).collect();
            for rep in 0..3 {
                let v = t.sigma_v * rng.sample::<f64, _>(StandardNormal);
                let damage: Vec<f64> = times
                    .iter()
                    .map(|&tt| {
                        let z = ((t.eff)(bp) + (t.logd)(nd) + (t.logg)(rh) + (rate * tt).ln())
                            / (t.sigma)(bp);
                        t.alpha * v.exp() * sigmoid(z)
                            + t.sigma_eps * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                specimens.push(AccelSpecimen {
                    id: format!("c{ci}r{rep}"),
                    group: "g".into(),
                    conditions: ExposureConditions {
                        bp_nm: bp,
                        nd,
                        temp_c: 35.0,
                        rh_pct: rh,
                    },
                    dosage: DosageSeries::constant_rate(rate, &times).unwrap(),
                    times_h: times.clone(),
                    damage,
                });
            }
        }
        AccelDataset::new(specimens, BTreeMap::new()).unwrap()
    }

    #[test]
    fn recovers_known_factor_effects() {
        let ds = synthetic_dataset(7);
        let opts = FitOptions {
            multi_start: 2,
            ..FitOptions::default()
        };
        let fit = fit_categorical(&ds, &opts).unwrap();
        let t = truth();

        assert_eq!(fit.n_params, 1 + 2 + 1 + 0 + 1 + 2 + 2);
        assert!((fit.alpha - t.alpha).abs() < 0.02, "alpha {}", fit.alpha);
        for b in &fit.bp_effect {
            assert!(
                (b.estimate - (t.eff)(b.level)).abs() < 0.15,
                "bp {} -> {}",
                b.level,
                b.estimate
            );
        }
        assert!((fit.log_d_at(0.4).unwrap() - -0.79).abs() < 0.08);
        assert!((fit.log_g_at(75.0).unwrap() - 0.23).abs() < 0.08);
        for s in &fit.sigma_bp {
            assert!(
                (s.estimate - (t.sigma)(s.level)).abs() < 0.08,
                "sigma {} -> {}",
                s.level,
                s.estimate
            );
        }
        assert!((fit.sigma_eps - t.sigma_eps).abs() < 0.003);
        assert!(fit.sigma_v > 0.01 && fit.sigma_v < 0.12, "sigma_v {}", fit.sigma_v);
        // Baseline levels carry no parameters.
        assert!(fit.log_d_at(0.1).unwrap() == 0.0);
        assert!(!fit.param_names.iter().any(|n| n.contains("log_f")));
        assert!(fit.aic.is_finite());
        assert!(fit.mse < 5e-4, "mse {}", fit.mse);
        // Interval-scale sanity of the reported uncertainty.
        assert!(fit.alpha_se > 1e-5 && fit.alpha_se < 0.05);
    }

    #[test]
    fn missing_baseline_is_rank_deficient() {
        let mut ds = synthetic_dataset(3);
        // Shift every baseline ND specimen to 0.6: ND levels become
        // {0.4, 0.6}, neither the 0.1 baseline.
        for s in &mut ds.specimens {
            if s.conditions.nd == 0.1 {
                s.conditions.nd = 0.6;
            }
        }
        let err = fit_categorical(&ds, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err}");
        assert!(err.to_string().contains("baseline"));
    }

    #[test]
    fn all_factors_constant_is_rank_deficient() {
        let mut ds = synthetic_dataset(3);
        for s in &mut ds.specimens {
            s.conditions.nd = 0.1;
            s.conditions.temp_c = 35.0;
            s.conditions.rh_pct = 25.0;
        }
        let err = fit_categorical(&ds, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err}");
    }
}
