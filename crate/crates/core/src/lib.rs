//! Degradation-path modeling for accelerated photodegradation tests.
//!
//! This crate fits nonlinear mixed-effects models to laboratory
//! photodegradation data collected under constant exposure conditions
//! (bandpass filter, neutral-density filter, temperature, relative
//! humidity), and uses the fitted model to predict degradation outdoors,
//! where every one of those covariates varies over time.
//!
//! The central quantity is *effective dosage*: UV dosage weighted by a
//! wavelength-dependent quasi-quantum efficiency and scaled by
//! temperature and humidity effects. Observed damage follows a logistic
//! curve in log effective dosage, with a multiplicative lognormal
//! specimen effect and additive measurement error.
//!
//! The pieces, in dependency order:
//!
//! - [`spectral`]: spectral curves, filter transmission, per-wavelength
//!   dosage apportionment.
//! - [`path`]: the degradation-path function and its building blocks
//!   (quasi-quantum efficiency, Arrhenius and humidity effects, the
//!   wavelength-dependent shape parameter).
//! - [`covariates`]: outdoor covariate histories on a fixed recording
//!   grid, imputation of short gaps, time binning.
//! - [`fit`]: maximum-likelihood estimation (categorical-effects and
//!   combined parametric models) with specimen random effects
//!   integrated out by adaptive Gauss–Hermite quadrature.
//! - [`predict`]: outdoor prediction by cumulative damage accumulation,
//!   calibrated prediction bands, and post-hoc specimen adjustment.
//! - [`sim`]: synthetic data generators used for validation and
//!   end-to-end testing.
//! - [`io`]: CSV ingestion/emission and report artifacts.

pub mod covariates;
pub mod dataset;
pub mod error;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod path;
pub mod predict;
pub mod quad;
pub mod sim;
pub mod spectral;
pub mod stats;

pub use covariates::{BinnedHistory, CovariateHistory, CovariateRecord, ImputeOptions, ImputeReport};
pub use dataset::{AccelDataset, AccelSpecimen, CleanOptions, CleanReport};
pub use error::{Error, Result};
pub use fit::{
    aic, fit_categorical, fit_combined, marginal_loglik, CategoricalFit, CombinedFit, FitOptions,
    ModelKind,
};
pub use path::{CombinedParams, ExposureConditions};
pub use predict::{
    calibrated_interval, estimate_random_effect, predict_path, prediction_mse, IntervalOptions,
    PredictOptions, PredictionBand, PredictionPath, RandomEffectEstimate,
};
pub use sim::{simulate_accel, simulate_outdoor, simulate_weather, AccelDesign, WeatherSpec};
pub use spectral::{
    area_proportions, effective_dosage_constant, filtered_irradiance, wavelength_dosage,
    DosageSeries, FilterStack, SpectralCurve, WavelengthSplit,
};
