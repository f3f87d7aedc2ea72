//! Outdoor covariate histories: UV dosage per wavelength cell plus
//! temperature and relative humidity on a fixed recording grid.
//!
//! Raw records arrive at a short fixed cadence (nominally 12 minutes).
//! Missing values are `NaN` and short gaps are filled from the mean of
//! the same time-of-day on neighboring days, a window that tracks the
//! diurnal cycle far better than interpolation along the timeline. UV
//! gaps at night fill with zero, which is what the same-time-of-day donor
//! mean produces there anyway.

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{cell_centers, N_CELLS};

/// One record on the raw grid. `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateRecord {
    pub timestamp: NaiveDateTime,
    pub temp_c: f64,
    pub rh_pct: f64,
    /// Dosage per wavelength cell over this recording interval,
    /// ordered as [`cell_centers`].
    pub dosage: Vec<f64>,
}

impl CovariateRecord {
    pub fn has_missing(&self) -> bool {
        self.temp_c.is_nan() || self.rh_pct.is_nan() || self.dosage.iter().any(|d| d.is_nan())
    }

    fn missing_record(timestamp: NaiveDateTime) -> Self {
        CovariateRecord {
            timestamp,
            temp_c: f64::NAN,
            rh_pct: f64::NAN,
            dosage: vec![f64::NAN; N_CELLS],
        }
    }
}

/// A covariate time series on a fixed recording grid. Construction
/// validates alignment; rows may be absent (gaps) and values may be
/// missing until [`impute_covariates`] has run.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateHistory {
    records: Vec<CovariateRecord>,
    raw_interval_min: u32,
}

impl CovariateHistory {
    pub fn new(records: Vec<CovariateRecord>, raw_interval_min: u32) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::degenerate("empty covariate history"));
        }
        if raw_interval_min == 0 || 1440 % raw_interval_min != 0 {
            return Err(Error::config(format!(
                "recording interval {raw_interval_min} min must divide a day"
            )));
        }
        let step = i64::from(raw_interval_min) * 60;
        let t0 = records[0].timestamp;
        for (i, r) in records.iter().enumerate() {
            if r.dosage.len() != N_CELLS {
                return Err(Error::domain(format!(
                    "record {} has {} dosage cells, expected {N_CELLS}",
                    r.timestamp,
                    r.dosage.len()
                )));
            }
            let dt = (r.timestamp - t0).num_seconds();
            if dt % step != 0 {
                return Err(Error::domain(format!(
                    "record {} is not aligned to the {raw_interval_min} min grid",
                    r.timestamp
                )));
            }
            if i > 0 && r.timestamp <= records[i - 1].timestamp {
                return Err(Error::domain("covariate records must be strictly ascending"));
            }
            if !r.temp_c.is_nan() && !(-90.0..=70.0).contains(&r.temp_c) {
                return Err(Error::domain(format!(
                    "temperature {} C at {} outside physical bounds",
                    r.temp_c, r.timestamp
                )));
            }
            if !r.rh_pct.is_nan() && !(0.0..=100.0).contains(&r.rh_pct) {
                return Err(Error::domain(format!(
                    "relative humidity {}% at {} outside [0, 100]",
                    r.rh_pct, r.timestamp
                )));
            }
            if r.dosage.iter().any(|d| !d.is_nan() && (*d < 0.0 || !d.is_finite())) {
                return Err(Error::domain(format!(
                    "negative or non-finite dosage at {}",
                    r.timestamp
                )));
            }
        }
        Ok(CovariateHistory {
            records,
            raw_interval_min,
        })
    }

    pub fn records(&self) -> &[CovariateRecord] {
        &self.records
    }

    pub fn raw_interval_min(&self) -> u32 {
        self.raw_interval_min
    }

    pub fn start(&self) -> NaiveDateTime {
        self.records[0].timestamp
    }

    pub fn end(&self) -> NaiveDateTime {
        self.records.last().unwrap().timestamp
    }

    /// Rows the full grid should have between start and end.
    fn grid_len(&self) -> usize {
        let step = i64::from(self.raw_interval_min) * 60;
        ((self.end() - self.start()).num_seconds() / step) as usize + 1
    }

    /// Fraction of grid rows that are absent or have any missing field.
    pub fn missing_fraction(&self) -> f64 {
        let grid = self.grid_len();
        let gaps = grid - self.records.len();
        let partial = self.records.iter().filter(|r| r.has_missing()).count();
        (gaps + partial) as f64 / grid as f64
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() == self.grid_len() && self.records.iter().all(|r| !r.has_missing())
    }

    /// Exposure duration covered by the records, hours. Each record
    /// covers one recording interval starting at its timestamp.
    pub fn duration_h(&self) -> f64 {
        self.grid_len() as f64 * f64::from(self.raw_interval_min) / 60.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputeOptions {
    /// Donor search half-window, days.
    pub window_days: i64,
    /// Hard cap on the missing fraction; worse data is rejected rather
    /// than manufactured.
    pub max_missing_fraction: f64,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions {
            window_days: 14,
            max_missing_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ImputeReport {
    pub missing_fraction_before: f64,
    pub inserted_rows: usize,
    pub imputed_temp: usize,
    pub imputed_rh: usize,
    pub imputed_dosage_cells: usize,
    /// Dosage cells filled with zero because every donor was zero
    /// (nighttime gaps).
    pub nighttime_zero_cells: usize,
}

/// Fill every gap in a covariate history from same-time-of-day donors
/// within `window_days` of the gap. Fails (listing the offending
/// timestamps) when a gap has no donors, i.e. a missing run wider than
/// the window; refuses input missing more than the configured cap.
pub fn impute_covariates(
    history: &CovariateHistory,
    opts: &ImputeOptions,
) -> Result<(CovariateHistory, ImputeReport)> {
    let mut report = ImputeReport {
        missing_fraction_before: history.missing_fraction(),
        ..ImputeReport::default()
    };
    if report.missing_fraction_before > opts.max_missing_fraction {
        return Err(Error::MissingData(format!(
            "{:.2}% of records missing exceeds the {:.2}% imputation cap",
            100.0 * report.missing_fraction_before,
            100.0 * opts.max_missing_fraction
        )));
    }

    // Regularize onto the full grid; absent rows become all-missing rows.
    let step_min = i64::from(history.raw_interval_min);
    let step = chrono::Duration::minutes(step_min);
    let mut grid: Vec<CovariateRecord> = Vec::with_capacity(history.grid_len());
    let mut next = history.start();
    let mut it = history.records.iter().peekable();
    while next <= history.end() {
        match it.peek() {
            Some(r) if r.timestamp == next => {
                grid.push((*it.next().unwrap()).clone());
            }
            _ => {
                grid.push(CovariateRecord::missing_record(next));
                report.inserted_rows += 1;
            }
        }
        next += step;
    }

    let per_day = (1440 / history.raw_interval_min) as usize;
    let window = opts.window_days;
    let mut failures: Vec<String> = Vec::new();
    let snapshot = grid.clone(); // donors come from observed values only

    let donor_mean = |idx: usize, pick: &dyn Fn(&CovariateRecord) -> f64| -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for day in -window..=window {
            if day == 0 {
                continue;
            }
            let j = idx as i64 + day * per_day as i64;
            if j < 0 || j as usize >= snapshot.len() {
                continue;
            }
            let v = pick(&snapshot[j as usize]);
            if !v.is_nan() {
                sum += v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    };

    for idx in 0..grid.len() {
        if !grid[idx].has_missing() {
            continue;
        }
        let stamp = grid[idx].timestamp.to_string();
        if grid[idx].temp_c.is_nan() {
            match donor_mean(idx, &|r| r.temp_c) {
                Some(m) => {
                    grid[idx].temp_c = m;
                    report.imputed_temp += 1;
                }
                None => failures.push(stamp.clone()),
            }
        }
        if grid[idx].rh_pct.is_nan() {
            match donor_mean(idx, &|r| r.rh_pct) {
                Some(m) => {
                    grid[idx].rh_pct = m;
                    report.imputed_rh += 1;
                }
                None => failures.push(stamp.clone()),
            }
        }
        for k in 0..N_CELLS {
            if grid[idx].dosage[k].is_nan() {
                match donor_mean(idx, &|r| r.dosage[k]) {
                    Some(m) => {
                        grid[idx].dosage[k] = m;
                        report.imputed_dosage_cells += 1;
                        if m == 0.0 {
                            report.nighttime_zero_cells += 1;
                        }
                    }
                    None => failures.push(stamp.clone()),
                }
            }
        }
    }

    if !failures.is_empty() {
        failures.dedup();
        return Err(Error::Imputation {
            timestamps: failures,
        });
    }
    let filled = CovariateHistory::new(grid, history.raw_interval_min)?;
    debug_assert!(filled.is_complete());
    Ok((filled, report))
}

/// A covariate history aggregated into uniform bins: dosage summed,
/// temperature and humidity averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedHistory {
    pub start: NaiveDateTime,
    pub bin_minutes: u32,
    /// End of each bin, hours since `start`.
    pub t_end_h: Vec<f64>,
    pub temp_c: Vec<f64>,
    pub rh_pct: Vec<f64>,
    /// Bin-major dosage: `dosage[bin][cell]`.
    pub dosage: Vec<Vec<f64>>,
    /// Cell centers, nm (shared across bins).
    pub lambdas: Vec<f64>,
}

impl BinnedHistory {
    pub fn n_bins(&self) -> usize {
        self.t_end_h.len()
    }

    pub fn end_h(&self) -> f64 {
        *self.t_end_h.last().unwrap()
    }
}

/// Aggregate a complete history into `bin_minutes` bins. The bin width
/// must be a multiple of the recording interval, and the history must be
/// gap-free and fully imputed.
pub fn bin_covariates(history: &CovariateHistory, bin_minutes: u32) -> Result<BinnedHistory> {
    if bin_minutes == 0 || bin_minutes % history.raw_interval_min != 0 {
        return Err(Error::config(format!(
            "bin width {bin_minutes} min is not a multiple of the {} min recording interval",
            history.raw_interval_min
        )));
    }
    if history.records.len() != history.grid_len() {
        return Err(Error::MissingData(
            "history has gaps; run imputation before binning".into(),
        ));
    }
    if let Some(r) = history.records.iter().find(|r| r.has_missing()) {
        return Err(Error::MissingData(format!(
            "missing values at {}; run imputation before binning",
            r.timestamp
        )));
    }
    let per_bin = (bin_minutes / history.raw_interval_min) as usize;
    let n_bins = history.records.len().div_ceil(per_bin);
    let mut out = BinnedHistory {
        start: history.start(),
        bin_minutes,
        t_end_h: Vec::with_capacity(n_bins),
        temp_c: Vec::with_capacity(n_bins),
        rh_pct: Vec::with_capacity(n_bins),
        dosage: Vec::with_capacity(n_bins),
        lambdas: cell_centers(),
    };
    for b in 0..n_bins {
        let lo = b * per_bin;
        let hi = ((b + 1) * per_bin).min(history.records.len());
        let chunk = &history.records[lo..hi];
        let n = chunk.len() as f64;
        out.temp_c.push(chunk.iter().map(|r| r.temp_c).sum::<f64>() / n);
        out.rh_pct.push(chunk.iter().map(|r| r.rh_pct).sum::<f64>() / n);
        let mut cells = vec![0.0; N_CELLS];
        for r in chunk {
            for (c, d) in cells.iter_mut().zip(&r.dosage) {
                *c += d;
            }
        }
        out.dosage.push(cells);
        // Each record covers one interval starting at its timestamp.
        out.t_end_h
            .push((lo + chunk.len()) as f64 * f64::from(history.raw_interval_min) / 60.0);
    }
    Ok(out)
}

/// Per-bin, per-cell effective dosage increments: binned dosage weighted
/// by `exp(beta_lambda * lambda_cell)`.
#[derive(Debug, Clone)]
pub struct EffectiveIncrements {
    pub t_end_h: Vec<f64>,
    /// Bin-major: `delta_s[bin][cell]`.
    pub delta_s: Vec<Vec<f64>>,
}

/// Effective dosage increments of a complete history at a given bin
/// width and wavelength response.
pub fn incremental_effective_dosage(
    history: &CovariateHistory,
    beta_lambda: f64,
    bin_minutes: u32,
) -> Result<EffectiveIncrements> {
    let binned = bin_covariates(history, bin_minutes)?;
    Ok(effective_increments(&binned, beta_lambda))
}

/// The binned form of [`incremental_effective_dosage`]; shared by the
/// outdoor predictor so that prediction and the public increments agree
/// by construction.
pub fn effective_increments(binned: &BinnedHistory, beta_lambda: f64) -> EffectiveIncrements {
    let weights: Vec<f64> = binned
        .lambdas
        .iter()
        .map(|l| (beta_lambda * l).exp())
        .collect();
    let delta_s = binned
        .dosage
        .iter()
        .map(|cells| cells.iter().zip(&weights).map(|(d, w)| d * w).collect())
        .collect();
    EffectiveIncrements {
        t_end_h: binned.t_end_h.clone(),
        delta_s,
    }
}

/// Minutes past midnight of a timestamp (used by imputation donors and
/// tests; exact, no rounding).
pub fn minute_of_day(t: NaiveDateTime) -> u32 {
    t.time().hour() * 60 + t.time().minute()
}
