//! Model fitting by marginal maximum likelihood.
//!
//! Two model families share the same degradation-path likelihood:
//!
//! * [`fit_categorical`] — every exposure factor (bandpass, ND level,
//!   temperature, humidity) gets its own free effect. No functional
//!   form is assumed, so the estimates serve as a model-free check on
//!   the combined surface and as its starting values.
//! * [`fit_combined`] — the parametric surface over wavelength,
//!   dosage, temperature, and humidity, in three variants
//!   ([`ModelKind`]) that differ in random-effect structure.
//!
//! Specimen (and group) random effects scale the whole path, so they
//! are integrated out by adaptive Gauss–Hermite quadrature rather than
//! a Laplace approximation alone.

mod categorical;
mod combined;
mod driver;
pub(crate) mod likelihood;

use serde::{Deserialize, Serialize};

pub use categorical::{fit_categorical, Baselines, CategoricalFit, LevelEstimate};
pub use combined::{fit_combined, seed_from_categorical, CombinedFit};
pub(crate) use combined::{get_param, set_param};

use crate::dataset::AccelDataset;
use crate::error::{Error, Result};
use crate::path::CombinedParams;

/// Random-effect structure of a combined fit.
///
/// * `A` — no random effects and reciprocity imposed (`p = 0`).
/// * `B` — one lognormal scale effect per specimen.
/// * `C` — nested effects: chamber group plus specimen within group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    A,
    B,
    C,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::A => write!(f, "A"),
            ModelKind::B => write!(f, "B"),
            ModelKind::C => write!(f, "C"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ModelKind::A),
            "B" | "b" => Ok(ModelKind::B),
            "C" | "c" => Ok(ModelKind::C),
            other => Err(Error::config(format!(
                "unknown model kind {other:?}; expected A, B, or C"
            ))),
        }
    }
}

/// Options shared by both fitting entry points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Gauss–Hermite order for specimen random effects.
    pub quad_order: usize,
    /// Orders for the nested (group × specimen) integral of model C.
    pub outer_quad_order: usize,
    pub inner_quad_order: usize,
    /// Number of optimizer starts; the first is unjittered.
    pub multi_start: usize,
    /// Seed for start jitter.
    pub seed: u64,
    pub max_iter: usize,
    /// `(temp_c, rh_pct)` cells excluded from combined fits. The
    /// factor-per-level model can absorb cells where extra interactions
    /// appear, so categorical fits keep everything; the smooth combined
    /// surface cannot, and fits these cells' conditions by
    /// extrapolation instead.
    pub drop_cells: Vec<(f64, f64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            quad_order: 15,
            outer_quad_order: 9,
            inner_quad_order: 9,
            multi_start: 5,
            seed: 0,
            max_iter: 400,
            drop_cells: vec![(55.0, 75.0)],
        }
    }
}

/// Akaike information criterion.
pub fn aic(loglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

/// Marginal log-likelihood of `params` for a dataset under the given
/// random-effect structure, integrating random effects by adaptive
/// Gauss–Hermite quadrature of the given order.
///
/// Kind `A` has no random effect: `params.sigma_v` is ignored. Kind `C`
/// additionally needs the group-level standard deviation, which is not
/// part of [`CombinedParams`]; pass it as `sigma_group`.
pub fn marginal_loglik(
    dataset: &AccelDataset,
    params: &CombinedParams,
    kind: ModelKind,
    sigma_group: Option<f64>,
    quad_order: usize,
) -> Result<f64> {
    params.validate()?;
    if quad_order == 0 {
        return Err(Error::config("quadrature order must be at least 1"));
    }
    let ctx = likelihood::prepare(dataset)?;
    match kind {
        ModelKind::A => Ok(likelihood::loglik_no_random(&ctx, params)),
        ModelKind::B => Ok(likelihood::loglik_specimen(&ctx, params, quad_order)),
        ModelKind::C => {
            let su = sigma_group.ok_or_else(|| {
                Error::config("model C requires sigma_group for the chamber-group effect")
            })?;
            if !(su > 0.0) || !su.is_finite() {
                return Err(Error::domain("sigma_group must be positive and finite"));
            }
            Ok(likelihood::loglik_nested(&ctx, params, su, quad_order, quad_order))
        }
    }
}

/// Shared optimizer diagnostics attached to every fit result.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub n_evals: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub n_starts: usize,
    /// Index of the start that produced the reported optimum.
    pub best_start: usize,
    /// Whether the observed information matrix was strictly positive
    /// definite; when false, standard errors come from a pseudo-inverse
    /// and should be treated as lower bounds.
    pub hessian_pd: bool,
    pub dropped_cells: Vec<String>,
    pub warnings: Vec<String>,
}
