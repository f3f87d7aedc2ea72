//! Spectral curves, filter transmission, and dosage apportionment.
//!
//! Dosage is recorded per specimen as a cumulative total; the spectral
//! machinery here distributes that total across narrow wavelength cells
//! and weights it by the wavelength response `exp(beta_lambda * lambda)`
//! to produce *effective* dosage, the time scale on which damage evolves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest wavelength tracked, nm.
pub const CELL_MIN_NM: f64 = 300.0;
/// Longest wavelength tracked, nm.
pub const CELL_MAX_NM: f64 = 532.0;
/// Width of one wavelength cell, nm.
pub const CELL_WIDTH_NM: f64 = 2.0;
/// Number of wavelength cells on the standard grid.
pub const N_CELLS: usize = 117;

/// Centers of the standard wavelength cells: 300, 302, ..., 532 nm.
pub fn cell_centers() -> Vec<f64> {
    (0..N_CELLS)
        .map(|k| CELL_MIN_NM + CELL_WIDTH_NM * k as f64)
        .collect()
}

/// Index of the cell centered at `lambda`, if `lambda` is a grid center.
pub fn cell_index(lambda: f64) -> Option<usize> {
    let k = (lambda - CELL_MIN_NM) / CELL_WIDTH_NM;
    let idx = k.round() as isize;
    if idx >= 0 && (idx as usize) < N_CELLS && (k - k.round()).abs() < 1e-9 {
        Some(idx as usize)
    } else {
        None
    }
}

/// Nominal band centers of the four interference filters used in the
/// accelerated exposures, nm.
pub const BAND_CENTERS_NM: [f64; 4] = [306.0, 326.0, 353.0, 452.0];

/// Transmission window [lo, hi] of the bandpass filter centered at
/// `bp_nm`, or `None` for an unknown center.
pub fn bandpass_window(bp_nm: f64) -> Option<(f64, f64)> {
    let near = |x: f64| (bp_nm - x).abs() < 0.5;
    if near(306.0) {
        Some((303.0, 309.0))
    } else if near(326.0) {
        Some((320.0, 332.0))
    } else if near(353.0) {
        Some((332.0, 374.0))
    } else if near(452.0) {
        Some((373.0, 531.0))
    } else {
        None
    }
}

/// A nonnegative spectral intensity or transmittance sampled on an
/// ascending wavelength grid, interpreted as piecewise linear between
/// samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve {
    grid_nm: Vec<f64>,
    values: Vec<f64>,
}

impl SpectralCurve {
    pub fn new(grid_nm: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid_nm.len() != values.len() {
            return Err(Error::domain(format!(
                "spectral grid ({}) and values ({}) differ in length",
                grid_nm.len(),
                values.len()
            )));
        }
        if grid_nm.len() < 2 {
            return Err(Error::degenerate("spectral curve needs at least 2 samples"));
        }
        if grid_nm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("spectral grid must be strictly ascending"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("spectral values must be finite and >= 0"));
        }
        Ok(SpectralCurve { grid_nm, values })
    }

    /// Constant curve over [lo, hi].
    pub fn flat(lo: f64, hi: f64, value: f64) -> Result<Self> {
        SpectralCurve::new(vec![lo, hi], vec![value, value])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid_nm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        (self.grid_nm[0], *self.grid_nm.last().unwrap())
    }

    /// Linear interpolation; errors outside the support.
    pub fn value_at(&self, lambda: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if lambda < lo || lambda > hi {
            return Err(Error::Extrapolation(format!(
                "wavelength {lambda} nm outside curve support [{lo}, {hi}]"
            )));
        }
        let i = match self
            .grid_nm
            .binary_search_by(|g| g.partial_cmp(&lambda).unwrap())
        {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i,
        };
        let (g0, g1) = (self.grid_nm[i - 1], self.grid_nm[i]);
        let w = (lambda - g0) / (g1 - g0);
        Ok(self.values[i - 1] * (1.0 - w) + self.values[i] * w)
    }

    /// Exact integral of the piecewise-linear curve over [a, b], which
    /// must lie inside the support.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Err(Error::domain("integral bounds out of order"));
        }
        let fa = self.value_at(a)?;
        let fb = self.value_at(b)?;
        // Trapezoid pieces split at every interior grid point.
        let mut total = 0.0;
        let mut prev_x = a;
        let mut prev_y = fa;
        for (&g, &v) in self.grid_nm.iter().zip(&self.values) {
            if g <= a || g >= b {
                continue;
            }
            total += 0.5 * (prev_y + v) * (g - prev_x);
            prev_x = g;
            prev_y = v;
        }
        total += 0.5 * (prev_y + fb) * (b - prev_x);
        Ok(total)
    }
}

/// The optical stack in front of a specimen: a hard bandpass window and a
/// neutral-density transmittance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterStack {
    pub window_lo_nm: f64,
    pub window_hi_nm: f64,
    /// Neutral-density transmittance in (0, 1].
    pub nd: f64,
}

impl FilterStack {
    pub fn new(window_lo_nm: f64, window_hi_nm: f64, nd: f64) -> Result<Self> {
        if !(window_hi_nm > window_lo_nm) {
            return Err(Error::domain("bandpass window must have positive width"));
        }
        if !(nd > 0.0 && nd <= 1.0) {
            return Err(Error::domain(format!(
                "neutral-density transmittance {nd} outside (0, 1]"
            )));
        }
        Ok(FilterStack {
            window_lo_nm,
            window_hi_nm,
            nd,
        })
    }

    /// Stack for a nominal band center, e.g. 306 nm.
    pub fn for_band(bp_nm: f64, nd: f64) -> Result<Self> {
        let (lo, hi) = bandpass_window(bp_nm)
            .ok_or_else(|| Error::domain(format!("no bandpass window for center {bp_nm} nm")))?;
        FilterStack::new(lo, hi, nd)
    }
}

/// Source spectrum behind a filter stack: the curve restricted to the
/// window and scaled by the neutral-density transmittance. The result is
/// defined exactly on the window.
pub fn filtered_irradiance(source: &SpectralCurve, stack: &FilterStack) -> Result<SpectralCurve> {
    let (lo, hi) = source.support();
    if stack.window_lo_nm < lo || stack.window_hi_nm > hi {
        return Err(Error::domain(format!(
            "filter window [{}, {}] extends beyond source support [{lo}, {hi}]",
            stack.window_lo_nm, stack.window_hi_nm
        )));
    }
    let mut grid = vec![stack.window_lo_nm];
    let mut values = vec![source.value_at(stack.window_lo_nm)? * stack.nd];
    for (&g, &v) in source.grid().iter().zip(source.values()) {
        if g > stack.window_lo_nm && g < stack.window_hi_nm {
            grid.push(g);
            values.push(v * stack.nd);
        }
    }
    grid.push(stack.window_hi_nm);
    values.push(source.value_at(stack.window_hi_nm)? * stack.nd);
    SpectralCurve::new(grid, values)
}

/// Fractions of a band's dosage attributed to each 2 nm slice of its
/// window. `lambdas` holds slice centers; `proportions` sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavelengthSplit {
    pub lambdas: Vec<f64>,
    pub proportions: Vec<f64>,
}

impl WavelengthSplit {
    /// Equal proportions over the 2 nm slices of [lo, hi].
    pub fn uniform(lo_nm: f64, hi_nm: f64) -> Result<Self> {
        let slices = slice_edges(lo_nm, hi_nm)?;
        let n = slices.len() - 1;
        Ok(WavelengthSplit {
            lambdas: slices.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
            proportions: vec![1.0 / n as f64; n],
        })
    }

    /// A split concentrating all dosage in one slice.
    pub fn single(lambda: f64) -> Self {
        WavelengthSplit {
            lambdas: vec![lambda],
            proportions: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// log( sum_k P_k * exp(beta_lambda * lambda_k) ): the band's
    /// log damage-effectiveness factor for a given wavelength response.
    pub fn log_band_factor(&self, beta_lambda: f64) -> f64 {
        let terms: Vec<f64> = self
            .lambdas
            .iter()
            .zip(&self.proportions)
            .map(|(l, p)| p.ln() + beta_lambda * l)
            .collect();
        crate::stats::logsumexp(&terms)
    }
}

fn slice_edges(lo_nm: f64, hi_nm: f64) -> Result<Vec<f64>> {
    let width = hi_nm - lo_nm;
    if width < CELL_WIDTH_NM {
        return Err(Error::degenerate(format!(
            "window [{lo_nm}, {hi_nm}] narrower than one {CELL_WIDTH_NM} nm slice"
        )));
    }
    let n = (width / CELL_WIDTH_NM).round() as usize;
    if ((n as f64) * CELL_WIDTH_NM - width).abs() > 1e-9 {
        return Err(Error::config(format!(
            "window width {width} nm is not a multiple of the {CELL_WIDTH_NM} nm slice width"
        )));
    }
    Ok((0..=n).map(|k| lo_nm + CELL_WIDTH_NM * k as f64).collect())
}

/// Wavelength split of a (filtered) spectral curve over its own support:
/// the trapezoid area under each 2 nm slice, normalized to sum to one.
pub fn area_proportions(curve: &SpectralCurve) -> Result<WavelengthSplit> {
    let (lo, hi) = curve.support();
    let edges = slice_edges(lo, hi)?;
    let mut areas = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        areas.push(curve.integral(w[0], w[1])?);
    }
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::degenerate(
            "curve integrates to zero; no dosage to apportion",
        ));
    }
    let proportions: Vec<f64> = areas.iter().map(|a| a / total).collect();
    Ok(WavelengthSplit {
        lambdas: edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
        proportions,
    })
}

/// Cumulative dosage recorded over time for one specimen. Piecewise
/// linear; an implicit (0, 0) anchor precedes the first record when the
/// series starts after time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosageSeries {
    times_h: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DosageSeries {
    pub fn new(times_h: Vec<f64>, cumulative: Vec<f64>) -> Result<Self> {
        if times_h.len() != cumulative.len() {
            return Err(Error::domain("dosage times and values differ in length"));
        }
        if times_h.is_empty() {
            return Err(Error::degenerate("empty dosage series"));
        }
        if times_h[0] < 0.0 {
            return Err(Error::domain("dosage series starts before time zero"));
        }
        if times_h.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("dosage times must be strictly increasing"));
        }
        if cumulative[0] < 0.0 || cumulative.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("cumulative dosage must be nondecreasing"));
        }
        if cumulative.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("dosage values must be finite"));
        }
        Ok(DosageSeries {
            times_h,
            cumulative,
        })
    }

    /// Constant-rate series: `rate_per_h * t` sampled at `times_h`.
    pub fn constant_rate(rate_per_h: f64, times_h: &[f64]) -> Result<Self> {
        if rate_per_h < 0.0 {
            return Err(Error::domain("dosage rate must be >= 0"));
        }
        DosageSeries::new(
            times_h.to_vec(),
            times_h.iter().map(|t| rate_per_h * t).collect(),
        )
    }

    pub fn times_h(&self) -> &[f64] {
        &self.times_h
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn end_time_h(&self) -> f64 {
        *self.times_h.last().unwrap()
    }

    /// Cumulative dosage at time `t_h`, interpolated. Errors for `t_h`
    /// beyond the last record (the series does not extrapolate) or before
    /// time zero.
    pub fn value_at(&self, t_h: f64) -> Result<f64> {
        if t_h < 0.0 {
            return Err(Error::domain(format!("dosage queried at t = {t_h} h")));
        }
        if t_h > self.end_time_h() + 1e-9 {
            return Err(Error::Extrapolation(format!(
                "dosage queried at {t_h} h but records end at {} h",
                self.end_time_h()
            )));
        }
        let t_h = t_h.min(self.end_time_h());
        let i = match self
            .times_h
            .binary_search_by(|x| x.partial_cmp(&t_h).unwrap())
        {
            Ok(i) => return Ok(self.cumulative[i]),
            Err(i) => i,
        };
        let (t0, d0) = if i == 0 {
            (0.0, 0.0)
        } else {
            (self.times_h[i - 1], self.cumulative[i - 1])
        };
        let (t1, d1) = (self.times_h[i], self.cumulative[i]);
        let w = (t_h - t0) / (t1 - t0);
        Ok(d0 * (1.0 - w) + d1 * w)
    }
}

/// Per-slice cumulative dosage obtained by splitting a total series
/// according to a wavelength split.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDosage {
    pub lambdas: Vec<f64>,
    pub times_h: Vec<f64>,
    /// Slice-major: `cumulative[k][j]` is the dosage in slice `k` at
    /// `times_h[j]`.
    pub cumulative: Vec<Vec<f64>>,
}

/// Distribute a total dosage series across wavelength slices in fixed
/// proportions. Summing the slices recovers the total.
pub fn wavelength_dosage(total: &DosageSeries, split: &WavelengthSplit) -> Result<CellDosage> {
    validate_split(split)?;
    let cumulative = split
        .proportions
        .iter()
        .map(|p| total.cumulative().iter().map(|d| d * p).collect())
        .collect();
    Ok(CellDosage {
        lambdas: split.lambdas.clone(),
        times_h: total.times_h().to_vec(),
        cumulative,
    })
}

/// Effective dosage for a total `dosage` spread over a band according to
/// `split`, under wavelength response `exp(beta_lambda * lambda)`:
/// `dosage * sum_k P_k exp(beta_lambda * lambda_k)`.
pub fn effective_dosage_constant(
    dosage: f64,
    split: &WavelengthSplit,
    beta_lambda: f64,
) -> Result<f64> {
    if !(dosage >= 0.0) {
        return Err(Error::domain(format!("negative dosage {dosage}")));
    }
    validate_split(split)?;
    Ok(dosage * split.log_band_factor(beta_lambda).exp())
}

fn validate_split(split: &WavelengthSplit) -> Result<()> {
    if split.is_empty() || split.lambdas.len() != split.proportions.len() {
        return Err(Error::degenerate("empty or inconsistent wavelength split"));
    }
    if split.proportions.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::domain("split proportions must be >= 0"));
    }
    let sum: f64 = split.proportions.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Error::domain(format!("split proportions sum to {sum}, not 1")));
    }
    Ok(())
}
