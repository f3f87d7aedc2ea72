//! Simulation of accelerated tests, outdoor weather, and outdoor
//! specimens.
//!
//! Every stochastic quantity draws from its own counter-keyed stream,
//! so results are identical regardless of iteration order or thread
//! count, and adding specimens never perturbs existing ones.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariates::{CovariateHistory, CovariateRecord};
use crate::dataset::{AccelDataset, AccelSpecimen};
use crate::error::{Error, Result};
use crate::path::{degradation_path, z_combined, CombinedParams, ExposureConditions};
use crate::predict::{predict_path, PredictOptions};
use crate::spectral::{cell_centers, DosageSeries, WavelengthSplit, N_CELLS};

/// Stream keys for the counter-based generators. Each domain gets its
/// own space of streams so, for example, specimen 3's noise never
/// collides with bootstrap draw 3.
pub(crate) mod domains {
    pub const SPECIMEN: u64 = 1;
    pub const GROUP: u64 = 2;
    pub const WEATHER: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const JITTER: u64 = 5;
}

/// A generator seeded by `seed` on stream `(domain, index)`.
pub(crate) fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 56) | index);
    rng
}

/// One exposure cell of an accelerated design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignCell {
    pub bp_nm: f64,
    pub nd: f64,
    pub temp_c: f64,
    pub rh_pct: f64,
    /// Transmitted dosage rate at the specimen plane (after the
    /// neutral-density filter), per hour.
    pub dose_rate_per_h: f64,
    pub replicates: usize,
    /// Chamber label; specimens sharing a chamber share its effect.
    pub group: String,
}

/// An accelerated test design: cells, a measurement schedule, and the
/// wavelength composition behind each bandpass filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccelDesign {
    pub cells: Vec<DesignCell>,
    pub schedule_h: Vec<f64>,
    pub splits: BTreeMap<u32, WavelengthSplit>,
    /// Chamber effect standard deviation (0 disables chamber effects).
    pub sigma_group: f64,
}

/// Per-band lamp settings for the reference design, chosen so each
/// band's damage path traverses its informative range within the
/// schedule at the nominal parameters. The free 353 nm band sits far
/// below the wavelength trend, so its lamp runs much hotter.
fn reference_rate(bp_nm: f64) -> f64 {
    match bp_nm as u32 {
        306 => 0.5,
        326 => 0.55,
        353 => 4.3e4,
        _ => 10.0,
    }
}

impl AccelDesign {
    /// The reference design: four bandpass filters crossed with four
    /// neutral densities in four harsh chambers, plus full-intensity
    /// specimens in four milder chambers, four replicates per cell
    /// (three in the last), for 319 specimens over a 2280-hour
    /// schedule.
    pub fn reference() -> Self {
        let bands = [306.0, 326.0, 353.0, 452.0];
        let nds = [0.1, 0.4, 0.6, 1.0];
        let full_grid = [(25.0, 0.0), (35.0, 0.0), (45.0, 75.0), (55.0, 75.0)];
        let full_intensity = [(35.0, 25.0), (35.0, 50.0), (45.0, 25.0), (45.0, 50.0)];
        let mut cells = Vec::new();
        let mut push = |bp: f64, nd: f64, temp: f64, rh: f64| {
            cells.push(DesignCell {
                bp_nm: bp,
                nd,
                temp_c: temp,
                rh_pct: rh,
                dose_rate_per_h: reference_rate(bp) * nd,
                replicates: 4,
                group: format!("ch{temp}_{rh}"),
            });
        };
        for &(temp, rh) in &full_grid {
            for &bp in &bands {
                for &nd in &nds {
                    push(bp, nd, temp, rh);
                }
            }
        }
        for &(temp, rh) in &full_intensity {
            for &bp in &bands {
                push(bp, 1.0, temp, rh);
            }
        }
        cells.last_mut().unwrap().replicates = 3;

        let schedule_h = vec![
            24.0, 48.0, 96.0, 144.0, 216.0, 288.0, 384.0, 480.0, 600.0, 720.0, 864.0, 1008.0,
            1152.0, 1296.0, 1440.0, 1608.0, 1776.0, 1944.0, 2112.0, 2280.0,
        ];
        let mut splits = BTreeMap::new();
        splits.insert(306, WavelengthSplit::uniform(303.0, 309.0).unwrap());
        splits.insert(326, WavelengthSplit::uniform(320.0, 332.0).unwrap());
        splits.insert(452, WavelengthSplit::uniform(373.0, 531.0).unwrap());
        AccelDesign {
            cells,
            schedule_h,
            splits,
            sigma_group: 0.0,
        }
    }

    pub fn n_specimens(&self) -> usize {
        self.cells.iter().map(|c| c.replicates).sum()
    }
}

/// Simulate an accelerated test from known parameters.
pub fn simulate_accel(
    design: &AccelDesign,
    truth: &CombinedParams,
    seed: u64,
) -> Result<AccelDataset> {
    truth.validate()?;
    if design.cells.is_empty() {
        return Err(Error::config("design has no cells"));
    }
    if design.schedule_h.is_empty()
        || design.schedule_h[0] <= 0.0
        || design.schedule_h.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::config(
            "schedule must be strictly increasing positive times",
        ));
    }
    if !(design.sigma_group >= 0.0) {
        return Err(Error::config("chamber effect deviation must be nonnegative"));
    }

    let mut group_names: Vec<&str> = design.cells.iter().map(|c| c.group.as_str()).collect();
    group_names.sort_unstable();
    group_names.dedup();
    let group_effect: BTreeMap<&str, f64> = group_names
        .iter()
        .enumerate()
        .map(|(g, name)| {
            let mut rng = stream_rng(seed, domains::GROUP, g as u64);
            let u: f64 = rng.sample(StandardNormal);
            (*name, design.sigma_group * u)
        })
        .collect();

    let mut specimens = Vec::with_capacity(design.n_specimens());
    let mut index: u64 = 0;
    for cell in &design.cells {
        if cell.dose_rate_per_h <= 0.0 || cell.replicates == 0 {
            return Err(Error::config(
                "each cell needs a positive dose rate and at least one replicate",
            ));
        }
        let conditions = ExposureConditions {
            bp_nm: cell.bp_nm,
            nd: cell.nd,
            temp_c: cell.temp_c,
            rh_pct: cell.rh_pct,
        };
        conditions.validate()?;
        let split = design.splits.get(&(cell.bp_nm.round() as u32));
        for _ in 0..cell.replicates {
            let mut rng = stream_rng(seed, domains::SPECIMEN, index);
            let v = truth.sigma_v * rng.sample::<f64, _>(StandardNormal)
                + group_effect[cell.group.as_str()];
            let damage = design
                .schedule_h
                .iter()
                .map(|&t| {
                    let z = z_combined(truth, &conditions, cell.dose_rate_per_h * t, split)?;
                    Ok(degradation_path(truth.alpha, z, v)
                        + truth.sigma_eps * rng.sample::<f64, _>(StandardNormal))
                })
                .collect::<Result<Vec<f64>>>()?;
            specimens.push(AccelSpecimen {
                id: format!("spec{index:04}"),
                group: cell.group.clone(),
                conditions: conditions.clone(),
                dosage: DosageSeries::constant_rate(cell.dose_rate_per_h, &design.schedule_h)?,
                times_h: design.schedule_h.clone(),
                damage,
            });
            index += 1;
        }
    }
    AccelDataset::new(specimens, design.splits.clone())
}

/// Parameters of the synthetic weather generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeatherSpec {
    pub start: NaiveDateTime,
    pub n_days: usize,
    pub interval_min: u32,
    /// Spectral irradiance scale at solar noon under a clear sky.
    pub peak_irradiance: f64,
    pub temp_mean_c: f64,
    pub temp_season_amp_c: f64,
    pub temp_diurnal_amp_c: f64,
    pub rh_mean_pct: f64,
    pub rh_diurnal_amp_pct: f64,
    /// Fraction of records degraded: a missing field or a gap.
    pub missing_fraction: f64,
}

impl WeatherSpec {
    /// One year of mid-latitude weather on the 12-minute recording
    /// grid, with 1% degraded records.
    pub fn reference() -> Self {
        WeatherSpec {
            start: NaiveDate::from_ymd_opt(2023, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            n_days: 365,
            interval_min: 12,
            peak_irradiance: 1.0,
            temp_mean_c: 12.0,
            temp_season_amp_c: 10.0,
            temp_diurnal_amp_c: 6.0,
            rh_mean_pct: 65.0,
            rh_diurnal_amp_pct: 18.0,
            missing_fraction: 0.01,
        }
    }
}

/// Ground-level spectral shape over the wavelength cells: zero in the
/// ozone cutoff, ramping up through the UV, flat in the visible.
/// Normalized to sum to one.
fn solar_shape() -> Vec<f64> {
    let mut shape: Vec<f64> = cell_centers()
        .iter()
        .map(|&l| {
            if l <= 299.0 {
                0.0
            } else {
                1.0 - (-(l - 299.0) / 25.0).exp()
            }
        })
        .collect();
    let total: f64 = shape.iter().sum();
    for s in &mut shape {
        *s /= total;
    }
    shape
}

/// Simulate a weather history: diurnal and seasonal irradiance with
/// day-to-day cloud persistence, correlated temperature and humidity,
/// and optional degraded records (missing fields or gaps).
pub fn simulate_weather(spec: &WeatherSpec, seed: u64) -> Result<CovariateHistory> {
    if spec.n_days == 0 {
        return Err(Error::config("weather simulation needs at least one day"));
    }
    if !(0.0..=0.5).contains(&spec.missing_fraction) {
        return Err(Error::config("missing fraction must be in [0, 0.5]"));
    }
    if spec.interval_min == 0 || 1440 % spec.interval_min != 0 {
        return Err(Error::config(
            "recording interval must divide a day evenly",
        ));
    }
    let mut rng = stream_rng(seed, domains::WEATHER, 0);
    let shape = solar_shape();
    let per_day = (1440 / spec.interval_min) as usize;
    let interval_h = spec.interval_min as f64 / 60.0;

    // Day-to-day cloud factor: AR(1) with lag-one correlation 0.7.
    let mut cloud = Vec::with_capacity(spec.n_days);
    let mut x = rng.sample::<f64, _>(StandardNormal);
    for _ in 0..spec.n_days {
        x = 0.7 * x + (1.0f64 - 0.49).sqrt() * rng.sample::<f64, _>(StandardNormal);
        cloud.push((0.78 + 0.18 * x).clamp(0.05, 1.0));
    }

    let mut records = Vec::with_capacity(spec.n_days * per_day);
    for day in 0..spec.n_days {
        let season = (std::f64::consts::TAU * (day as f64 - 197.0) / 365.25).cos();
        for slot in 0..per_day {
            let timestamp = spec.start
                + Duration::minutes((day * per_day + slot) as i64 * spec.interval_min as i64);
            let hour_mid = (slot as f64 + 0.5) * 24.0 / per_day as f64;

            let diurnal = (std::f64::consts::TAU * (hour_mid - 14.0) / 24.0).cos();
            let temp_c = spec.temp_mean_c
                + spec.temp_season_amp_c * season
                + spec.temp_diurnal_amp_c * diurnal
                + 3.0 * (cloud[day] - 0.78)
                + 1.2 * rng.sample::<f64, _>(StandardNormal);
            let rh_pct = (spec.rh_mean_pct - spec.rh_diurnal_amp_pct * diurnal - 4.0 * season
                + 4.0 * rng.sample::<f64, _>(StandardNormal))
            .clamp(3.0, 100.0);

            let elevation = if (6.0..=18.0).contains(&hour_mid) {
                (std::f64::consts::PI * (hour_mid - 6.0) / 12.0).sin()
            } else {
                0.0
            };
            let intensity = spec.peak_irradiance
                * elevation.powi(2)
                * (1.0 + 0.35 * season)
                * cloud[day]
                * interval_h;
            let dosage: Vec<f64> = shape.iter().map(|s| s * intensity).collect();

            let mut record = CovariateRecord {
                timestamp,
                temp_c,
                rh_pct,
                dosage,
            };
            let is_first = day == 0 && slot == 0;
            if !is_first && rng.gen::<f64>() < spec.missing_fraction {
                match rng.gen_range(0..4u32) {
                    0 => record.temp_c = f64::NAN,
                    1 => record.rh_pct = f64::NAN,
                    2 => record.dosage = vec![f64::NAN; N_CELLS],
                    _ => continue, // drop the record entirely
                }
            }
            records.push(record);
        }
    }
    CovariateHistory::new(records, spec.interval_min)
}

/// A simulated outdoor specimen: its latent effect and noisy damage
/// measurements on a sampling schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedOutdoor {
    pub id: String,
    pub v: f64,
    pub times_h: Vec<f64>,
    pub damage: Vec<f64>,
}

/// Simulate one outdoor specimen under a recorded (complete) weather
/// history, measured every `sample_every_h` hours.
pub fn simulate_outdoor(
    history: &CovariateHistory,
    truth: &CombinedParams,
    bin_minutes: u32,
    sample_every_h: f64,
    seed: u64,
    specimen_idx: u64,
) -> Result<SimulatedOutdoor> {
    if !(sample_every_h > 0.0) {
        return Err(Error::config("sampling spacing must be positive"));
    }
    let base = predict_path(history, truth, 0.0, &PredictOptions { bin_minutes })?;
    let end = base.end_h();
    let mut times_h: Vec<f64> = (1..)
        .map(|i| i as f64 * sample_every_h)
        .take_while(|&t| t <= end)
        .collect();
    if times_h.is_empty() {
        times_h.push(end);
    }
    let mut rng = stream_rng(seed, domains::SPECIMEN, specimen_idx);
    let v = truth.sigma_v * rng.sample::<f64, _>(StandardNormal);
    let scale = v.exp();
    let damage = times_h
        .iter()
        .map(|&t| {
            base.value_at(t).unwrap() * scale
                + truth.sigma_eps * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Ok(SimulatedOutdoor {
        id: format!("outdoor{specimen_idx:04}"),
        v,
        times_h,
        damage,
    })
}
