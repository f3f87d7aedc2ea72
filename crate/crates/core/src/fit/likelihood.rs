//! Marginal likelihood engine shared by both fitting entry points.
//!
//! A lognormal random effect scales the whole mean path, so with
//! `w_ij` the unit-scale path values a specimen's integrand depends on
//! its data only through three sums: `Syy = Σy²`, `Syw = Σyw`,
//! `Sww = Σw²`. After those are accumulated once per parameter value,
//! every integrand evaluation is O(1) no matter how many measurements
//! the specimen has, which makes an exhaustive mode search plus
//! adaptive Gauss–Hermite quadrature cheap and robust.

use rayon::prelude::*;

use crate::dataset::AccelDataset;
use crate::error::{Error, Result};
use crate::path::{is_free_band, CombinedParams, KELVIN_OFFSET};
use crate::quad::gauss_hermite;
use crate::spectral::WavelengthSplit;
use crate::stats::{logsumexp, sigmoid};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy)]
pub(crate) enum BandRef {
    /// The free-effect band: its whole log band factor is a parameter.
    Free,
    /// Index into [`LikContext::splits`].
    Split(usize),
}

/// Per-specimen quantities that do not change during optimization.
#[derive(Debug, Clone)]
pub(crate) struct SpecimenTerms {
    pub id: String,
    pub log_dosage: Vec<f64>,
    pub damage: Vec<f64>,
    /// Σ y².
    pub syy: f64,
    pub inv_temp_k: f64,
    pub temp_c: f64,
    pub rh_pct: f64,
    pub nd: f64,
    pub ln_nd: f64,
    pub bp_nm: f64,
    pub band: BandRef,
    pub group: usize,
}

/// Preprocessed dataset ready for repeated likelihood evaluation.
pub(crate) struct LikContext {
    pub specimens: Vec<SpecimenTerms>,
    pub splits: Vec<WavelengthSplit>,
    /// Specimen indices per group, groups ordered by name.
    pub groups: Vec<Vec<usize>>,
}

pub(crate) fn prepare(dataset: &AccelDataset) -> Result<LikContext> {
    prepare_with(dataset, true)
}

/// Preprocess a dataset. With `need_splits`, every non-free band must
/// have a registered wavelength split (required by the combined model);
/// the factor-per-level model estimates band effects directly and can
/// skip them.
pub(crate) fn prepare_with(dataset: &AccelDataset, need_splits: bool) -> Result<LikContext> {
    dataset.validate()?;
    let mut group_names: Vec<&str> = dataset
        .specimens
        .iter()
        .map(|s| s.group.as_str())
        .collect();
    group_names.sort_unstable();
    group_names.dedup();

    // Distinct bandpass keys that need a wavelength split.
    let mut split_keys: Vec<u32> = dataset
        .specimens
        .iter()
        .filter(|s| !is_free_band(s.conditions.bp_nm))
        .map(|s| s.conditions.bp_nm.round() as u32)
        .collect();
    split_keys.sort_unstable();
    split_keys.dedup();
    let mut splits = Vec::with_capacity(split_keys.len());
    if need_splits {
        for key in &split_keys {
            let split = dataset.splits.get(key).ok_or_else(|| {
                Error::config(format!(
                    "no wavelength split registered for the {key} nm bandpass"
                ))
            })?;
            splits.push(split.clone());
        }
    }

    let mut specimens = Vec::with_capacity(dataset.specimens.len());
    let mut groups = vec![Vec::new(); group_names.len()];
    for s in &dataset.specimens {
        let mut log_dosage = Vec::with_capacity(s.times_h.len());
        for &t in &s.times_h {
            let d = s.dosage.value_at(t)?;
            if d <= 0.0 {
                return Err(Error::domain(format!(
                    "specimen {}: cumulative dosage is {d} at {t} h; every \
                     measurement needs positive dosage",
                    s.id
                )));
            }
            log_dosage.push(d.ln());
        }
        let band = if is_free_band(s.conditions.bp_nm) {
            BandRef::Free
        } else {
            let key = s.conditions.bp_nm.round() as u32;
            BandRef::Split(split_keys.binary_search(&key).unwrap())
        };
        let group = group_names
            .binary_search(&s.group.as_str())
            .expect("group name collected above");
        groups[group].push(specimens.len());
        specimens.push(SpecimenTerms {
            id: s.id.clone(),
            log_dosage,
            syy: s.damage.iter().map(|y| y * y).sum(),
            damage: s.damage.clone(),
            inv_temp_k: 1.0 / (s.conditions.temp_c + KELVIN_OFFSET),
            temp_c: s.conditions.temp_c,
            rh_pct: s.conditions.rh_pct,
            nd: s.conditions.nd,
            ln_nd: s.conditions.nd.ln(),
            bp_nm: s.conditions.bp_nm,
            band,
            group,
        });
    }
    Ok(LikContext {
        specimens,
        splits,
        groups,
    })
}

/// The three data sums that determine a specimen's likelihood.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SpecimenSums {
    pub syy: f64,
    pub syw: f64,
    pub sww: f64,
    pub m: usize,
}

impl SpecimenSums {
    /// Σ (y - s·w)² at path scale `s = exp(v)`.
    pub fn sse(&self, s: f64) -> f64 {
        self.syy - 2.0 * s * self.syw + s * s * self.sww
    }
}

/// Log band factors (one per split) at the current wavelength slope.
pub(crate) fn band_logs(ctx: &LikContext, beta_lambda: f64) -> Vec<f64> {
    ctx.splits
        .iter()
        .map(|s| s.log_band_factor(beta_lambda))
        .collect()
}

/// Data sums of one specimen under the combined model. Assumes
/// `params.validate()` has passed, which guarantees a positive shape
/// scale at every wavelength.
pub(crate) fn combined_sums(
    spec: &SpecimenTerms,
    params: &CombinedParams,
    band_logs: &[f64],
) -> SpecimenSums {
    let sigma = params.sigma0 + (params.sigma1 + params.sigma2 * spec.bp_nm).exp();
    let band = match spec.band {
        BandRef::Free => params.b353,
        BandRef::Split(k) => band_logs[k] + params.eta0,
    };
    let drh = spec.rh_pct - params.rh0;
    let c = band + params.p * spec.ln_nd - params.ea_over_r * spec.inv_temp_k
        - params.beta_rh * drh * drh;
    let inv_sigma = 1.0 / sigma;
    let mut syw = 0.0;
    let mut sww = 0.0;
    for (ld, y) in spec.log_dosage.iter().zip(&spec.damage) {
        let w = params.alpha * sigmoid((c + ld) * inv_sigma);
        syw += y * w;
        sww += w * w;
    }
    SpecimenSums {
        syy: spec.syy,
        syw,
        sww,
        m: spec.damage.len(),
    }
}

/// Posterior mode and Laplace scale of the random effect given the data
/// sums. The log-integrand (up to constants) is
/// `h(v) = -(Syy - 2e^v Syw + e^{2v} Sww)/(2σe²) - v²/(2σv²)`,
/// which can have several stationary points when `Syw > 0`, so the
/// global mode is located by a coarse scan before local refinement.
pub(crate) fn mode_and_curvature(
    s: SpecimenSums,
    sigma_eps: f64,
    sigma_v: f64,
) -> (f64, f64) {
    let inv2e = 0.5 / (sigma_eps * sigma_eps);
    let inv_vv = 1.0 / (sigma_v * sigma_v);
    let hr = |v: f64| {
        let ev = v.exp();
        (2.0 * ev * s.syw - ev * ev * s.sww) * inv2e - 0.5 * v * v * inv_vv
    };
    // Scan a window that covers both the prior center and the
    // least-squares scale Syw/Sww.
    let vc = if s.syw > 0.0 && s.sww > 0.0 {
        (s.syw / s.sww).ln().clamp(-30.0, 30.0)
    } else {
        0.0
    };
    let pad = (4.0 * sigma_v).max(1.0);
    let lo = vc.min(0.0) - pad;
    let hi = vc.max(0.0) + pad;
    const GRID: usize = 48;
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best = 0;
    let mut best_h = f64::NEG_INFINITY;
    for i in 0..GRID {
        let h = hr(lo + step * i as f64);
        if h > best_h {
            best_h = h;
            best = i;
        }
    }
    let a = lo + step * best.saturating_sub(1) as f64;
    let b = (lo + step * (best + 1) as f64).min(hi);
    let mut vhat = golden_max(&hr, a, b, 1e-10);
    // Newton polish with the analytic derivatives.
    for _ in 0..3 {
        let ev = vhat.exp();
        let g = (ev * s.syw - ev * ev * s.sww) * 2.0 * inv2e - vhat * inv_vv;
        let hpp = (ev * s.syw - 2.0 * ev * ev * s.sww) * 2.0 * inv2e - inv_vv;
        if hpp >= 0.0 {
            break;
        }
        let delta = (g / hpp).clamp(-0.5, 0.5);
        vhat -= delta;
        if delta.abs() < 1e-14 {
            break;
        }
    }
    let ev = vhat.exp();
    let hpp = (ev * s.syw - 2.0 * ev * ev * s.sww) * 2.0 * inv2e - inv_vv;
    let scale = if hpp < -1e-300 {
        (-hpp).sqrt().recip().min(10.0 * sigma_v)
    } else {
        sigma_v
    };
    (vhat, scale)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Log marginal likelihood of one specimen: the random-effect integral
/// by Gauss–Hermite quadrature centered and scaled at the posterior
/// mode. `logw_x2[k]` must hold `ln(weight_k) + node_k²`.
pub(crate) fn specimen_marginal(
    s: SpecimenSums,
    sigma_eps: f64,
    sigma_v: f64,
    nodes: &[f64],
    logw_x2: &[f64],
) -> f64 {
    let m = s.m as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let base = -0.5 * m * (ln2pi + 2.0 * sigma_eps.ln());
    let inv2e = 0.5 / (sigma_eps * sigma_eps);
    if sigma_v <= 1e-12 {
        // Degenerate prior: the effect is pinned at zero.
        return base - s.sse(1.0) * inv2e;
    }
    let (vhat, scale) = mode_and_curvature(s, sigma_eps, sigma_v);
    let prior_norm = -0.5 * (ln2pi + 2.0 * sigma_v.ln());
    let inv2v = 0.5 / (sigma_v * sigma_v);
    let mut terms = Vec::with_capacity(nodes.len());
    for (x, lw) in nodes.iter().zip(logw_x2) {
        let v = vhat + SQRT_2 * scale * x;
        let h = base - s.sse(v.exp()) * inv2e + prior_norm - v * v * inv2v;
        terms.push(lw + h);
    }
    (SQRT_2 * scale).ln() + logsumexp(&terms)
}

/// Log-likelihood with no random effects (every specimen at scale 1).
pub(crate) fn loglik_no_random(ctx: &LikContext, params: &CombinedParams) -> f64 {
    let band = band_logs(ctx, params.beta_lambda);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let inv2e = 0.5 / (params.sigma_eps * params.sigma_eps);
    let terms: Vec<f64> = ctx
        .specimens
        .par_iter()
        .map(|sp| {
            let s = combined_sums(sp, params, &band);
            -0.5 * s.m as f64 * (ln2pi + 2.0 * params.sigma_eps.ln()) - s.sse(1.0) * inv2e
        })
        .collect();
    terms.iter().sum()
}

/// Marginal log-likelihood with one lognormal scale effect per specimen.
pub(crate) fn loglik_specimen(ctx: &LikContext, params: &CombinedParams, order: usize) -> f64 {
    let (nodes, weights) = gauss_hermite(order);
    let logw_x2: Vec<f64> = weights
        .iter()
        .zip(&nodes)
        .map(|(w, x)| w.ln() + x * x)
        .collect();
    let band = band_logs(ctx, params.beta_lambda);
    let terms: Vec<f64> = ctx
        .specimens
        .par_iter()
        .map(|sp| {
            let s = combined_sums(sp, params, &band);
            specimen_marginal(s, params.sigma_eps, params.sigma_v, &nodes, &logw_x2)
        })
        .collect();
    terms.iter().sum()
}

/// Marginal log-likelihood with nested effects: a shared group scale
/// `u_g` plus a specimen scale `w_i`, each lognormal. The group integral
/// is evaluated by an outer adaptive quadrature whose integrand reuses
/// the specimen integral with the sums rescaled by `exp(u)`.
pub(crate) fn loglik_nested(
    ctx: &LikContext,
    params: &CombinedParams,
    sigma_group: f64,
    outer_order: usize,
    inner_order: usize,
) -> f64 {
    let (nodes_o, weights_o) = gauss_hermite(outer_order);
    let logw_o: Vec<f64> = weights_o
        .iter()
        .zip(&nodes_o)
        .map(|(w, x)| w.ln() + x * x)
        .collect();
    let (nodes_i, weights_i) = gauss_hermite(inner_order);
    let logw_i: Vec<f64> = weights_i
        .iter()
        .zip(&nodes_i)
        .map(|(w, x)| w.ln() + x * x)
        .collect();
    let band = band_logs(ctx, params.beta_lambda);
    let sums: Vec<SpecimenSums> = ctx
        .specimens
        .iter()
        .map(|sp| combined_sums(sp, params, &band))
        .collect();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let su = sigma_group;
    let prior_norm = -0.5 * (ln2pi + 2.0 * su.ln());
    let inv2u = 0.5 / (su * su);

    let group_terms: Vec<f64> = ctx
        .groups
        .par_iter()
        .map(|members| {
            let hcap = |u: f64| -> f64 {
                let eu = u.exp();
                let data: f64 = members
                    .iter()
                    .map(|&i| {
                        let s = sums[i];
                        let scaled = SpecimenSums {
                            syy: s.syy,
                            syw: s.syw * eu,
                            sww: s.sww * eu * eu,
                            m: s.m,
                        };
                        specimen_marginal(
                            scaled,
                            params.sigma_eps,
                            params.sigma_v,
                            &nodes_i,
                            &logw_i,
                        )
                    })
                    .sum();
                data + prior_norm - u * u * inv2u
            };
            let pad = 8.0 * su + 0.75;
            let uhat = grid_golden_max(&hcap, -pad, pad, 28, 1e-9);
            // Curvature by central difference; the integrand is smooth.
            let delta = (su * 1e-3).max(1e-6);
            let hpp = (hcap(uhat + delta) - 2.0 * hcap(uhat) + hcap(uhat - delta))
                / (delta * delta);
            let scale = if hpp < -1e-300 {
                (-hpp).sqrt().recip().min(10.0 * su)
            } else {
                su
            };
            let mut terms = Vec::with_capacity(nodes_o.len());
            for (x, lw) in nodes_o.iter().zip(&logw_o) {
                terms.push(lw + hcap(uhat + SQRT_2 * scale * x));
            }
            (SQRT_2 * scale).ln() + logsumexp(&terms)
        })
        .collect();
    group_terms.iter().sum()
}

/// Coarse scan plus golden-section refinement of a smooth 1-D maximum.
pub(crate) fn grid_golden_max(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    n_grid: usize,
    tol: f64,
) -> f64 {
    let step = (hi - lo) / (n_grid - 1) as f64;
    let mut best = 0;
    let mut best_f = f64::NEG_INFINITY;
    for i in 0..n_grid {
        let v = f(lo + step * i as f64);
        if v > best_f {
            best_f = v;
            best = i;
        }
    }
    let a = lo + step * best.saturating_sub(1) as f64;
    let b = (lo + step * (best + 1) as f64).min(hi);
    golden_max(f, a, b, tol)
}

/// Mean squared residual at the conditional (posterior-mode) path
/// scales; the denominator is the total observation count.
pub(crate) fn conditional_mse(
    groups: &[Vec<usize>],
    sums: &[SpecimenSums],
    sigma_eps: f64,
    sigma_v: f64,
    sigma_group: Option<f64>,
    inner_order: usize,
) -> f64 {
    let specimen_sse = |s: SpecimenSums| -> f64 {
        if sigma_v > 1e-12 {
            let (v, _) = mode_and_curvature(s, sigma_eps, sigma_v);
            s.sse(v.exp())
        } else {
            s.sse(1.0)
        }
    };
    let n_obs: usize = sums.iter().map(|s| s.m).sum();
    let total: f64 = match sigma_group {
        None => sums.iter().map(|s| specimen_sse(*s)).sum(),
        Some(su) => {
            // Group mode first, then specimen modes within it.
            let (nodes_i, weights_i) = gauss_hermite(inner_order);
            let logw_i: Vec<f64> = weights_i
                .iter()
                .zip(&nodes_i)
                .map(|(w, x)| w.ln() + x * x)
                .collect();
            let ln2pi = (2.0 * std::f64::consts::PI).ln();
            groups
                .iter()
                .map(|members| {
                    let scaled_at = |i: usize, eu: f64| -> SpecimenSums {
                        let s = sums[i];
                        SpecimenSums {
                            syy: s.syy,
                            syw: s.syw * eu,
                            sww: s.sww * eu * eu,
                            m: s.m,
                        }
                    };
                    let hcap = |u: f64| -> f64 {
                        let eu = u.exp();
                        members
                            .iter()
                            .map(|&i| {
                                specimen_marginal(
                                    scaled_at(i, eu),
                                    sigma_eps,
                                    sigma_v,
                                    &nodes_i,
                                    &logw_i,
                                )
                            })
                            .sum::<f64>()
                            - 0.5 * (ln2pi + 2.0 * su.ln())
                            - u * u / (2.0 * su * su)
                    };
                    let uhat = grid_golden_max(&hcap, -8.0 * su - 0.75, 8.0 * su + 0.75, 28, 1e-9);
                    let eu = uhat.exp();
                    members
                        .iter()
                        .map(|&i| specimen_sse(scaled_at(i, eu)))
                        .sum::<f64>()
                })
                .sum()
        }
    };
    total / n_obs as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AccelDataset, AccelSpecimen};
    use crate::path::{degradation_path, z_combined, ExposureConditions};
    use crate::spectral::DosageSeries;
    use std::collections::BTreeMap;

    fn one_specimen(
        id: &str,
        group: &str,
        conditions: ExposureConditions,
        rate: f64,
        damage: Vec<f64>,
    ) -> AccelSpecimen {
        let times: Vec<f64> = (1..=damage.len()).map(|i| 48.0 * i as f64).collect();
        AccelSpecimen {
            id: id.into(),
            group: group.into(),
            conditions,
            dosage: DosageSeries::constant_rate(rate, &times).unwrap(),
            times_h: times,
            damage,
        }
    }

    fn free_band_conditions() -> ExposureConditions {
        ExposureConditions {
            bp_nm: 353.0,
            nd: 1.0,
            temp_c: 35.0,
            rh_pct: 25.0,
        }
    }

    /// Damage values running down the nominal path at effect `v`.
    fn synthetic_damage(conditions: ExposureConditions, rate: f64, n: usize, v: f64) -> Vec<f64> {
        let p = CombinedParams::nominal();
        (1..=n)
            .map(|i| {
                let t = 48.0 * i as f64;
                let z = z_combined(&p, &conditions, rate * t, None).unwrap();
                degradation_path(p.alpha, z, v)
            })
            .collect()
    }

    fn tiny_dataset() -> AccelDataset {
        let c = free_band_conditions();
        AccelDataset::new(
            vec![
                one_specimen("s1", "g1", c, 3.4, synthetic_damage(c, 3.4, 12, 0.08)),
                one_specimen("s2", "g1", c, 3.4, synthetic_damage(c, 3.4, 12, -0.05)),
                one_specimen("s3", "g2", c, 3.4, synthetic_damage(c, 3.4, 12, 0.12)),
            ],
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn no_random_likelihood_matches_hand_computation() {
        // One observation: the likelihood is a single normal density at
        // the path value, which we can build independently.
        let c = free_band_conditions();
        let y = -0.21;
        let ds = AccelDataset::new(
            vec![one_specimen("s", "g", c, 3.4, vec![y])],
            BTreeMap::new(),
        )
        .unwrap();
        let params = CombinedParams::nominal();
        let ctx = prepare(&ds).unwrap();
        let got = loglik_no_random(&ctx, &params);

        let z = z_combined(&params, &c, 3.4 * 48.0, None).unwrap();
        let mean = degradation_path(params.alpha, z, 0.0);
        let se = params.sigma_eps;
        let want = -0.5 * ((2.0 * std::f64::consts::PI).ln() + 2.0 * se.ln())
            - (y - mean) * (y - mean) / (2.0 * se * se);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn split_band_uses_band_factor_plus_intercept() {
        let c = ExposureConditions {
            bp_nm: 306.0,
            nd: 0.4,
            temp_c: 45.0,
            rh_pct: 50.0,
        };
        let split = crate::spectral::WavelengthSplit::uniform(303.0, 309.0).unwrap();
        let mut splits = BTreeMap::new();
        splits.insert(306u32, split.clone());
        let y = -0.15;
        let ds = AccelDataset::new(
            vec![one_specimen("s", "g", c, 0.5, vec![y])],
            splits,
        )
        .unwrap();
        let params = CombinedParams::nominal();
        let ctx = prepare(&ds).unwrap();
        let got = loglik_no_random(&ctx, &params);

        let z = z_combined(&params, &c, 0.5 * 48.0, Some(&split)).unwrap();
        let mean = degradation_path(params.alpha, z, 0.0);
        let se = params.sigma_eps;
        let want = -0.5 * ((2.0 * std::f64::consts::PI).ln() + 2.0 * se.ln())
            - (y - mean) * (y - mean) / (2.0 * se * se);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn missing_split_is_rejected_at_preparation() {
        let c = ExposureConditions {
            bp_nm: 306.0,
            nd: 1.0,
            temp_c: 35.0,
            rh_pct: 25.0,
        };
        let ds = AccelDataset::new(
            vec![one_specimen("s", "g", c, 0.5, vec![-0.1, -0.15, -0.2])],
            BTreeMap::new(),
        )
        .unwrap();
        let err = prepare(&ds).unwrap_err();
        assert!(err.to_string().contains("306"));
    }

    #[test]
    fn marginal_matches_dense_quadrature_oracle() {
        // Independent oracle: trapezoid rule over a very wide, very
        // dense grid of the same integrand.
        let ds = tiny_dataset();
        let ctx = prepare(&ds).unwrap();
        let params = CombinedParams::nominal();
        let band = band_logs(&ctx, params.beta_lambda);
        for sp in &ctx.specimens {
            let s = combined_sums(sp, &params, &band);
            let (nodes, weights) = gauss_hermite(15);
            let logw_x2: Vec<f64> = weights
                .iter()
                .zip(&nodes)
                .map(|(w, x)| w.ln() + x * x)
                .collect();
            let got = specimen_marginal(s, params.sigma_eps, params.sigma_v, &nodes, &logw_x2);

            let (vhat, scale) = mode_and_curvature(s, params.sigma_eps, params.sigma_v);
            let ln2pi = (2.0 * std::f64::consts::PI).ln();
            let base = -0.5 * s.m as f64 * (ln2pi + 2.0 * params.sigma_eps.ln());
            let prior_norm = -0.5 * (ln2pi + 2.0 * params.sigma_v.ln());
            let h = |v: f64| {
                base - s.sse(v.exp()) / (2.0 * params.sigma_eps * params.sigma_eps) + prior_norm
                    - v * v / (2.0 * params.sigma_v * params.sigma_v)
            };
            let n = 400_001;
            let lo = vhat - 14.0 * scale;
            let dv = 28.0 * scale / (n - 1) as f64;
            let mut terms = Vec::with_capacity(n);
            for i in 0..n {
                let mut t = h(lo + dv * i as f64);
                if i == 0 || i == n - 1 {
                    t -= std::f64::consts::LN_2;
                }
                terms.push(t);
            }
            let want = logsumexp(&terms) + dv.ln();
            assert!(
                (got - want).abs() < 1e-8,
                "specimen {}: got {got}, oracle {want}",
                sp.id
            );
        }
    }

    #[test]
    fn quadrature_is_stable_under_refinement() {
        let ds = tiny_dataset();
        let ctx = prepare(&ds).unwrap();
        let params = CombinedParams::nominal();
        let l10 = loglik_specimen(&ctx, &params, 10);
        let l40 = loglik_specimen(&ctx, &params, 40);
        assert!((l10 - l40).abs() < 1e-6, "order 10: {l10}, order 40: {l40}");
    }

    #[test]
    fn vanishing_effect_variance_recovers_fixed_model() {
        let ds = tiny_dataset();
        let ctx = prepare(&ds).unwrap();
        let mut params = CombinedParams::nominal();
        params.sigma_v = 1e-8;
        let with = loglik_specimen(&ctx, &params, 15);
        let without = loglik_no_random(&ctx, &params);
        assert!((with - without).abs() < 1e-6);
    }

    #[test]
    fn vanishing_group_variance_recovers_specimen_model() {
        let ds = tiny_dataset();
        let ctx = prepare(&ds).unwrap();
        let params = CombinedParams::nominal();
        let nested = loglik_nested(&ctx, &params, 1e-9, 9, 15);
        let specimen = loglik_specimen(&ctx, &params, 15);
        assert!(
            (nested - specimen).abs() < 1e-5,
            "nested: {nested}, specimen: {specimen}"
        );
    }

    #[test]
    fn conditional_mse_prefers_true_scales() {
        let ds = tiny_dataset();
        let ctx = prepare(&ds).unwrap();
        let params = CombinedParams::nominal();
        let band = band_logs(&ctx, params.beta_lambda);
        let sums: Vec<SpecimenSums> = ctx
            .specimens
            .iter()
            .map(|sp| combined_sums(sp, &params, &band))
            .collect();
        let with_modes = conditional_mse(&ctx.groups, &sums, params.sigma_eps, params.sigma_v, None, 9);
        let without = conditional_mse(&ctx.groups, &sums, params.sigma_eps, 0.0, None, 9);
        // Data were generated with nonzero effects and no noise, so the
        // conditional fit should be nearly exact and much better than
        // the fixed-scale fit.
        assert!(with_modes < 1e-10);
        assert!(without > 100.0 * with_modes.max(1e-300));
    }
}
