//! CSV ingestion and emission, run artifacts, and text reports.
//!
//! Dataset and covariate CSVs are written with exact (shortest
//! round-trip) float formatting so that emit-then-ingest reproduces the
//! data field for field. Derived outputs — prediction CSVs and reports
//! — use fixed 12-significant-digit formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::covariates::{CovariateHistory, CovariateRecord};
use crate::dataset::AccelDataset;
use crate::error::{Error, Result};
use crate::fit::{CategoricalFit, CombinedFit, LevelEstimate};
use crate::path::{is_free_band, ExposureConditions};
use crate::predict::{PredictionBand, PredictionPath};
use crate::spectral::{bandpass_window, DosageSeries, WavelengthSplit, N_CELLS};
use crate::stats::norm_cdf;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const FORMAT_VERSION: u32 = 1;

/// Format with `digits` significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i64;
    let dec = (digits as i64 - 1 - mag).max(0) as usize;
    let mut s = format!("{x:.dec$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn schema_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| schema_err(path, line, format!("{field}: cannot parse `{raw}` as a number")))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn covariate_header() -> Vec<String> {
    let mut h = vec![
        "timestamp_iso8601".to_string(),
        "temp_c".to_string(),
        "rh_pct".to_string(),
    ];
    for k in 0..N_CELLS {
        h.push(format!("d{}", 300 + 2 * k));
    }
    h
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[String]) -> Result<()> {
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != want.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(schema_err(
            path,
            1,
            format!(
                "unexpected header: got [{}], want [{}]",
                got.join(", "),
                want.join(", ")
            ),
        ));
    }
    Ok(())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Read an outdoor covariate history. Empty fields are missing values;
/// absent rows are gaps. The recording interval is inferred from the
/// timestamp spacing.
pub fn read_covariates_csv(path: impl AsRef<Path>) -> Result<CovariateHistory> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    check_header(path, reader.headers()?, &covariate_header())?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = record_line(&row);
        if row.len() != 3 + N_CELLS {
            return Err(schema_err(
                path,
                line,
                format!("expected {} fields, got {}", 3 + N_CELLS, row.len()),
            ));
        }
        let timestamp = NaiveDateTime::parse_from_str(row[0].trim(), TIMESTAMP_FORMAT)
            .map_err(|e| schema_err(path, line, format!("timestamp_iso8601: {e}")))?;
        let opt = |raw: &str, field: &str| -> Result<f64> {
            if raw.trim().is_empty() {
                Ok(f64::NAN)
            } else {
                parse_f64(path, line, field, raw)
            }
        };
        let temp_c = opt(&row[1], "temp_c")?;
        let rh_pct = opt(&row[2], "rh_pct")?;
        let mut dosage = Vec::with_capacity(N_CELLS);
        for k in 0..N_CELLS {
            dosage.push(opt(&row[3 + k], &format!("d{}", 300 + 2 * k))?);
        }
        records.push(CovariateRecord {
            timestamp,
            temp_c,
            rh_pct,
            dosage,
        });
    }
    if records.len() < 2 {
        return Err(schema_err(
            path,
            1,
            "need at least two records to infer the recording interval",
        ));
    }
    let mut interval: u64 = 0;
    for w in records.windows(2) {
        let gap = w[1].timestamp.signed_duration_since(w[0].timestamp);
        if gap.num_seconds() <= 0 {
            return Err(schema_err(
                path,
                0,
                format!("timestamps must increase: {} then {}", w[0].timestamp, w[1].timestamp),
            ));
        }
        if gap.num_seconds() % 60 != 0 {
            return Err(schema_err(
                path,
                0,
                format!("timestamps must be minute-aligned near {}", w[1].timestamp),
            ));
        }
        interval = gcd(interval, gap.num_minutes() as u64);
    }
    CovariateHistory::new(records, interval as u32)
}

/// Write an outdoor covariate history; missing values become empty
/// fields.
pub fn write_covariates_csv(history: &CovariateHistory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(covariate_header())?;
    let cell = |x: f64| -> String {
        if x.is_nan() {
            String::new()
        } else {
            format!("{x}")
        }
    };
    for r in history.records() {
        let mut row = vec![
            r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            cell(r.temp_c),
            cell(r.rh_pct),
        ];
        row.extend(r.dosage.iter().map(|&d| cell(d)));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary of a dataset ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub n_specimens: usize,
    pub n_measurements: usize,
    pub n_dosage_points: usize,
    /// Measurement count per specimen id.
    pub measurements_per_specimen: BTreeMap<String, usize>,
}

const SPECIMEN_HEADER: [&str; 6] = ["specimen_id", "group_id", "bp_nm", "nd", "temp_c", "rh_pct"];
const MEASUREMENT_HEADER: [&str; 3] = ["specimen_id", "time_h", "damage"];
const DOSAGE_HEADER: [&str; 3] = ["specimen_id", "time_h", "cum_dosage"];

/// Read an accelerated-test dataset from its three CSVs: specimen
/// conditions, damage measurements, and cumulative transmitted dosage.
/// Wavelength splits are derived from the nominal bandpass windows.
pub fn ingest_accel(
    specimens_path: impl AsRef<Path>,
    measurements_path: impl AsRef<Path>,
    dosage_path: impl AsRef<Path>,
) -> Result<(AccelDataset, IngestReport)> {
    let spath = specimens_path.as_ref();
    let mpath = measurements_path.as_ref();
    let dpath = dosage_path.as_ref();

    struct Raw {
        group: String,
        conditions: ExposureConditions,
        line: u64,
        times: Vec<f64>,
        damage: Vec<f64>,
        dosage_t: Vec<f64>,
        dosage_s: Vec<f64>,
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Raw> = BTreeMap::new();

    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(spath)?));
    check_header(
        spath,
        reader.headers()?,
        &SPECIMEN_HEADER.map(String::from),
    )?;
    for row in reader.records() {
        let row = row?;
        let line = record_line(&row);
        if row.len() != 6 {
            return Err(schema_err(spath, line, "expected 6 fields"));
        }
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(schema_err(spath, line, "empty specimen_id"));
        }
        if by_id.contains_key(&id) {
            return Err(schema_err(
                spath,
                line,
                format!("duplicate specimen_id `{id}`"),
            ));
        }
        let conditions = ExposureConditions {
            bp_nm: parse_f64(spath, line, "bp_nm", &row[2])?,
            nd: parse_f64(spath, line, "nd", &row[3])?,
            temp_c: parse_f64(spath, line, "temp_c", &row[4])?,
            rh_pct: parse_f64(spath, line, "rh_pct", &row[5])?,
        };
        if !is_free_band(conditions.bp_nm) && bandpass_window(conditions.bp_nm).is_none() {
            return Err(schema_err(
                spath,
                line,
                format!("unknown bandpass filter {} nm", conditions.bp_nm),
            ));
        }
        order.push(id.clone());
        by_id.insert(
            id,
            Raw {
                group: row[1].trim().to_string(),
                conditions,
                line,
                times: Vec::new(),
                damage: Vec::new(),
                dosage_t: Vec::new(),
                dosage_s: Vec::new(),
            },
        );
    }

    let mut n_measurements = 0;
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(mpath)?));
    check_header(
        mpath,
        reader.headers()?,
        &MEASUREMENT_HEADER.map(String::from),
    )?;
    for row in reader.records() {
        let row = row?;
        let line = record_line(&row);
        let id = row[0].trim();
        let raw = by_id.get_mut(id).ok_or_else(|| {
            schema_err(mpath, line, format!("unknown specimen_id `{id}`"))
        })?;
        let t = parse_f64(mpath, line, "time_h", &row[1])?;
        let y = parse_f64(mpath, line, "damage", &row[2])?;
        if let Some(&last) = raw.times.last() {
            if t <= last {
                return Err(schema_err(
                    mpath,
                    line,
                    format!("time_h not increasing for specimen `{id}`: {last} then {t}"),
                ));
            }
        }
        raw.times.push(t);
        raw.damage.push(y);
        n_measurements += 1;
    }

    let mut n_dosage_points = 0;
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(dpath)?));
    check_header(dpath, reader.headers()?, &DOSAGE_HEADER.map(String::from))?;
    for row in reader.records() {
        let row = row?;
        let line = record_line(&row);
        let id = row[0].trim();
        let raw = by_id.get_mut(id).ok_or_else(|| {
            schema_err(dpath, line, format!("unknown specimen_id `{id}`"))
        })?;
        let t = parse_f64(dpath, line, "time_h", &row[1])?;
        let s = parse_f64(dpath, line, "cum_dosage", &row[2])?;
        if let Some(&last) = raw.dosage_t.last() {
            if t <= last {
                return Err(schema_err(
                    dpath,
                    line,
                    format!("time_h not increasing for specimen `{id}`: {last} then {t}"),
                ));
            }
        }
        raw.dosage_t.push(t);
        raw.dosage_s.push(s);
        n_dosage_points += 1;
    }

    let mut specimens = Vec::with_capacity(order.len());
    let mut counts = BTreeMap::new();
    let mut splits: BTreeMap<u32, WavelengthSplit> = BTreeMap::new();
    for id in order {
        let raw = by_id.remove(&id).unwrap();
        if raw.times.is_empty() {
            return Err(schema_err(
                spath,
                raw.line,
                format!("specimen `{id}` has no measurements"),
            ));
        }
        if raw.dosage_t.is_empty() {
            return Err(schema_err(
                spath,
                raw.line,
                format!("specimen `{id}` has no dosage series"),
            ));
        }
        if !is_free_band(raw.conditions.bp_nm) {
            let key = raw.conditions.bp_nm.round() as u32;
            if !splits.contains_key(&key) {
                let (lo, hi) = bandpass_window(raw.conditions.bp_nm).unwrap();
                splits.insert(key, WavelengthSplit::uniform(lo, hi)?);
            }
        }
        counts.insert(id.clone(), raw.times.len());
        specimens.push(crate::dataset::AccelSpecimen {
            id,
            group: raw.group,
            conditions: raw.conditions,
            dosage: DosageSeries::new(raw.dosage_t, raw.dosage_s)?,
            times_h: raw.times,
            damage: raw.damage,
        });
    }
    let dataset = AccelDataset::new(specimens, splits)?;
    let report = IngestReport {
        n_specimens: dataset.n_specimens(),
        n_measurements,
        n_dosage_points,
        measurements_per_specimen: counts,
    };
    Ok((dataset, report))
}

/// File names written by [`write_accel_csvs`].
#[derive(Debug, Clone)]
pub struct AccelCsvPaths {
    pub specimens: PathBuf,
    pub measurements: PathBuf,
    pub dosage: PathBuf,
}

/// Write a dataset as the three CSVs [`ingest_accel`] reads.
pub fn write_accel_csvs(dataset: &AccelDataset, dir: impl AsRef<Path>) -> Result<AccelCsvPaths> {
    let dir = dir.as_ref();
    let paths = AccelCsvPaths {
        specimens: dir.join("specimens.csv"),
        measurements: dir.join("measurements.csv"),
        dosage: dir.join("dosage.csv"),
    };

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&paths.specimens)?));
    w.write_record(SPECIMEN_HEADER)?;
    for s in &dataset.specimens {
        w.write_record([
            s.id.as_str(),
            s.group.as_str(),
            &format!("{}", s.conditions.bp_nm),
            &format!("{}", s.conditions.nd),
            &format!("{}", s.conditions.temp_c),
            &format!("{}", s.conditions.rh_pct),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&paths.measurements)?));
    w.write_record(MEASUREMENT_HEADER)?;
    for s in &dataset.specimens {
        for (t, y) in s.times_h.iter().zip(&s.damage) {
            w.write_record([s.id.as_str(), &format!("{t}"), &format!("{y}")])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&paths.dosage)?));
    w.write_record(DOSAGE_HEADER)?;
    for s in &dataset.specimens {
        for (t, d) in s.dosage.times_h().iter().zip(s.dosage.cumulative()) {
            w.write_record([s.id.as_str(), &format!("{t}"), &format!("{d}")])?;
        }
    }
    w.flush()?;
    Ok(paths)
}

fn hours_after(start: NaiveDateTime, t_h: f64) -> NaiveDateTime {
    start + Duration::seconds((t_h * 3600.0).round() as i64)
}

const BAND_HEADER: [&str; 5] = ["timestamp", "s_star_cum", "point", "lower", "upper"];

/// Write a prediction band as a five-column CSV.
pub fn write_band_csv(band: &PredictionBand, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path.as_ref())?));
    w.write_record(BAND_HEADER)?;
    for j in 0..band.times_h.len() {
        w.write_record([
            hours_after(band.start, band.times_h[j])
                .format(TIMESTAMP_FORMAT)
                .to_string(),
            fmt_sig(band.s_star[j], 12),
            fmt_sig(band.point[j], 12),
            fmt_sig(band.lower[j], 12),
            fmt_sig(band.upper[j], 12),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write a point prediction in the band schema (bounds equal to the
/// point path).
pub fn write_path_csv(p: &PredictionPath, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path.as_ref())?));
    w.write_record(BAND_HEADER)?;
    for j in 0..p.t_end_h.len() {
        let v = fmt_sig(p.omega[j], 12);
        w.write_record([
            hours_after(p.start, p.t_end_h[j])
                .format(TIMESTAMP_FORMAT)
                .to_string(),
            fmt_sig(p.s_star[j], 12),
            v.clone(),
            v.clone(),
            v,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the failure-crossing summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRow {
    /// Which curve was scanned (e.g. `point`, `lower`, `upper`, or a
    /// specimen id).
    pub series: String,
    pub threshold: f64,
    /// Crossing time in hours; `None` when the curve never fails.
    pub time_h: Option<f64>,
    pub timestamp: Option<NaiveDateTime>,
    /// The curve crosses the threshold more than once.
    pub multiple: bool,
}

/// Write the failure-crossing summary CSV.
pub fn write_failure_csv(rows: &[FailureRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path.as_ref())?));
    w.write_record(["series", "threshold", "t_cross_h", "timestamp", "multiple"])?;
    for r in rows {
        w.write_record([
            r.series.clone(),
            fmt_sig(r.threshold, 12),
            r.time_h.map_or(String::new(), |t| fmt_sig(t, 12)),
            r.timestamp
                .map_or(String::new(), |ts| ts.format(TIMESTAMP_FORMAT).to_string()),
            r.multiple.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the long-format measured-versus-predicted export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LongRow {
    pub specimen_id: String,
    pub time_h: f64,
    /// `measured`, `predicted`, or `adjusted`.
    pub series: String,
    pub value: f64,
}

/// Write plot-ready long-format rows.
pub fn write_long_csv(rows: &[LongRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path.as_ref())?));
    w.write_record(["specimen_id", "time_h", "series", "value"])?;
    for r in rows {
        w.write_record([
            r.specimen_id.clone(),
            fmt_sig(r.time_h, 12),
            r.series.clone(),
            fmt_sig(r.value, 12),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A reproducible output file: payload plus the configuration and seed
/// that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub format_version: u32,
    pub tool: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub payload: T,
}

impl<T> Artifact<T> {
    pub fn new(seed: u64, config: serde_json::Value, payload: T) -> Self {
        Artifact {
            format_version: FORMAT_VERSION,
            tool: format!("photodeg {}", env!("CARGO_PKG_VERSION")),
            seed,
            config,
            payload,
        }
    }
}

/// Write an artifact as JSON with sorted keys.
pub fn write_artifact<T: Serialize>(artifact: &Artifact<T>, path: impl AsRef<Path>) -> Result<()> {
    // Round-tripping through a Value sorts every object's keys.
    let value = serde_json::to_value(artifact)?;
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut out, &value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Read an artifact, checking the format version.
pub fn read_artifact<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Artifact<T>> {
    let artifact: Artifact<T> =
        serde_json::from_reader(BufReader::new(File::open(path.as_ref())?))?;
    if artifact.format_version != FORMAT_VERSION {
        return Err(Error::config(format!(
            "artifact format version {} is not supported (expected {})",
            artifact.format_version, FORMAT_VERSION
        )));
    }
    Ok(artifact)
}

fn p_value(estimate: f64, se: f64) -> String {
    if se.is_finite() && se > 0.0 {
        fmt_sig(2.0 * (1.0 - norm_cdf((estimate / se).abs())), 4)
    } else {
        "-".to_string()
    }
}

fn push_row(out: &mut String, name: &str, estimate: f64, se: f64) {
    let _ = writeln!(
        out,
        "  {name:<18} {:>14} {:>12} {:>10}",
        fmt_sig(estimate, 6),
        if se.is_finite() { fmt_sig(se, 4) } else { "-".to_string() },
        p_value(estimate, se),
    );
}

fn push_levels(out: &mut String, title: &str, levels: &[LevelEstimate]) {
    if levels.is_empty() {
        return;
    }
    let _ = writeln!(out, "{title}:");
    for l in levels {
        push_row(out, &format!("{}", l.level), l.estimate, l.se);
    }
}

/// Render the factor-per-level fit as a text table.
pub fn render_categorical_report(fit: &CategoricalFit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Factor-per-level fit");
    let _ = writeln!(
        out,
        "  {:<18} {:>14} {:>12} {:>10}",
        "parameter", "estimate", "std.err", "p"
    );
    push_row(&mut out, "alpha", fit.alpha, fit.alpha_se);
    push_levels(&mut out, "band effect (log, at baselines)", &fit.bp_effect);
    push_levels(&mut out, "neutral-density effect (log)", &fit.log_d);
    push_levels(&mut out, "temperature effect (log)", &fit.log_f);
    push_levels(&mut out, "humidity effect (log)", &fit.log_g);
    push_levels(&mut out, "path scale by band", &fit.sigma_bp);
    push_row(&mut out, "sigma_v", fit.sigma_v, fit.sigma_v_se);
    push_row(&mut out, "sigma_eps", fit.sigma_eps, fit.sigma_eps_se);
    let _ = writeln!(
        out,
        "baselines: ND {}, {} C, {}% RH",
        fit.baselines.nd, fit.baselines.temp_c, fit.baselines.rh_pct
    );
    let _ = writeln!(
        out,
        "loglik {} | params {} | AIC {} | conditional MSE {}",
        fmt_sig(fit.loglik, 8),
        fit.n_params,
        fmt_sig(fit.aic, 8),
        fmt_sig(fit.mse, 6)
    );
    for wng in &fit.diagnostics.warnings {
        let _ = writeln!(out, "warning: {wng}");
    }
    out
}

/// Render a combined-model fit as a text table.
pub fn render_combined_report(fit: &CombinedFit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Combined model {}", fit.kind);
    let _ = writeln!(
        out,
        "  {:<18} {:>14} {:>12} {:>10}",
        "parameter", "estimate", "std.err", "p"
    );
    for i in 0..fit.param_names.len() {
        push_row(&mut out, &fit.param_names[i], fit.estimates[i], fit.se[i]);
    }
    let _ = writeln!(
        out,
        "specimens {} | observations {} | loglik {} | params {} | AIC {} | conditional MSE {}",
        fit.n_specimens,
        fit.n_obs,
        fmt_sig(fit.loglik, 8),
        fit.n_params,
        fmt_sig(fit.aic, 8),
        fmt_sig(fit.mse, 6)
    );
    for cell in &fit.diagnostics.dropped_cells {
        let _ = writeln!(out, "excluded cell: {cell}");
    }
    for wng in &fit.diagnostics.warnings {
        let _ = writeln!(out, "warning: {wng}");
    }
    out
}

/// One row of the model-comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub mse: Option<f64>,
}

/// Render the model-comparison table (sorted as given).
pub fn render_compare_report(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>14} {:>8} {:>14} {:>12}",
        "model", "loglik", "params", "AIC", "MSE"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<24} {:>14} {:>8} {:>14} {:>12}",
            r.label,
            fmt_sig(r.loglik, 10),
            r.n_params,
            fmt_sig(r.aic, 10),
            r.mse.map_or("-".to_string(), |m| fmt_sig(m, 6)),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::CombinedParams;
    use crate::sim::{simulate_accel, simulate_weather, AccelDesign, WeatherSpec};
    use chrono::NaiveDate;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0, 12), "0");
        assert_eq!(fmt_sig(-1.5, 12), "-1.5");
        assert_eq!(fmt_sig(0.0297123456789, 6), "0.0297123");
        assert_eq!(fmt_sig(1945.6482, 12), "1945.6482");
        assert_eq!(fmt_sig(1.0000000000001e-3, 6), "0.001");
    }

    #[test]
    fn covariates_round_trip_preserves_fields_and_gaps() {
        let spec = WeatherSpec {
            n_days: 10,
            missing_fraction: 0.05,
            ..WeatherSpec::reference()
        };
        let hist = simulate_weather(&spec, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("weather.csv");
        write_covariates_csv(&hist, &p).unwrap();
        let back = read_covariates_csv(&p).unwrap();
        assert_eq!(back.raw_interval_min(), hist.raw_interval_min());
        assert_eq!(back.records().len(), hist.records().len());
        for (a, b) in hist.records().iter().zip(back.records()) {
            assert_eq!(a.timestamp, b.timestamp);
            assert!(a.temp_c == b.temp_c || (a.temp_c.is_nan() && b.temp_c.is_nan()));
            assert!(a.rh_pct == b.rh_pct || (a.rh_pct.is_nan() && b.rh_pct.is_nan()));
            for (x, y) in a.dosage.iter().zip(&b.dosage) {
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn accel_round_trip_is_the_identity() {
        let mut design = AccelDesign::reference();
        design.cells.truncate(10);
        let ds = simulate_accel(&design, &CombinedParams::nominal(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_accel_csvs(&ds, dir.path()).unwrap();
        let (back, report) =
            ingest_accel(&paths.specimens, &paths.measurements, &paths.dosage).unwrap();
        assert_eq!(report.n_specimens, ds.n_specimens());
        assert_eq!(report.n_measurements, ds.n_obs());
        assert_eq!(back.specimens.len(), ds.specimens.len());
        for (a, b) in ds.specimens.iter().zip(&back.specimens) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.group, b.group);
            assert_eq!(a.conditions, b.conditions);
            assert_eq!(a.times_h, b.times_h);
            assert_eq!(a.damage, b.damage);
            assert_eq!(a.dosage.times_h(), b.dosage.times_h());
            assert_eq!(a.dosage.cumulative(), b.dosage.cumulative());
        }
        assert_eq!(ds.splits.len(), back.splits.len());
        for (k, s) in &ds.splits {
            let t = &back.splits[k];
            assert_eq!(s.lambdas, t.lambdas);
            assert_eq!(s.proportions, t.proportions);
        }
    }

    #[test]
    fn schema_violations_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("specimens.csv");
        let mp = dir.path().join("measurements.csv");
        let dp = dir.path().join("dosage.csv");

        // Unknown id in measurements (line 3).
        std::fs::write(
            &sp,
            "specimen_id,group_id,bp_nm,nd,temp_c,rh_pct\na,g,306,1.0,35,25\n",
        )
        .unwrap();
        std::fs::write(
            &mp,
            "specimen_id,time_h,damage\na,24,-0.01\nzz,48,-0.02\n",
        )
        .unwrap();
        std::fs::write(&dp, "specimen_id,time_h,cum_dosage\na,24,12\na,48,24\n").unwrap();
        let err = ingest_accel(&sp, &mp, &dp).unwrap_err();
        match err {
            Error::Schema { line, ref msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("zz"), "{msg}");
            }
            other => panic!("unexpected error {other}"),
        }

        // Nonmonotone times name the specimen and the line.
        std::fs::write(
            &mp,
            "specimen_id,time_h,damage\na,24,-0.01\na,24,-0.02\n",
        )
        .unwrap();
        let err = ingest_accel(&sp, &mp, &dp).unwrap_err();
        match err {
            Error::Schema { line, ref msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains('a') && msg.contains("not increasing"), "{msg}");
            }
            other => panic!("unexpected error {other}"),
        }

        // Duplicate specimen ids.
        std::fs::write(
            &sp,
            "specimen_id,group_id,bp_nm,nd,temp_c,rh_pct\na,g,306,1.0,35,25\na,g,326,1.0,35,25\n",
        )
        .unwrap();
        let err = ingest_accel(&sp, &mp, &dp).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 3, .. }), "{err}");

        // Wrong header.
        std::fs::write(&sp, "id,group,bp,nd,temp,rh\na,g,306,1.0,35,25\n").unwrap();
        let err = ingest_accel(&sp, &mp, &dp).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 1, .. }), "{err}");
    }

    #[test]
    fn artifacts_embed_reproducibility_fields_with_sorted_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        let config = serde_json::json!({"model": "B", "quad_order": 15});
        let artifact = Artifact::new(42, config, vec![1.0, 2.0]);
        write_artifact(&artifact, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let pos = |needle: &str| text.find(needle).unwrap();
        assert!(pos("\"config\"") < pos("\"format_version\""));
        assert!(pos("\"format_version\"") < pos("\"payload\""));
        assert!(pos("\"payload\"") < pos("\"seed\""));
        assert!(pos("\"seed\"") < pos("\"tool\""));
        let back: Artifact<Vec<f64>> = read_artifact(&p).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.payload, vec![1.0, 2.0]);
        assert_eq!(back.config["model"], "B");
    }

    #[test]
    fn prediction_csvs_have_the_documented_schema() {
        let dir = tempfile::tempdir().unwrap();
        let start = NaiveDate::from_ymd_opt(2023, 6, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let band = PredictionBand {
            start,
            level: 0.95,
            times_h: vec![24.0, 48.0],
            point: vec![-0.1, -0.2],
            lower: vec![-0.15, -0.3],
            upper: vec![-0.05, -0.12],
            s_star: vec![0.001, 0.002],
            diagnostics: crate::predict::IntervalDiagnostics {
                n_draws: 1000,
                redraws: 0,
                warnings: vec![],
            },
        };
        let p = dir.path().join("band.csv");
        write_band_csv(&band, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "timestamp,s_star_cum,point,lower,upper"
        );
        assert_eq!(
            lines.next().unwrap(),
            "2023-06-02T00:00:00,0.001,-0.1,-0.15,-0.05"
        );

        let rows = vec![
            FailureRow {
                series: "point".into(),
                threshold: -0.4,
                time_h: Some(1234.5),
                timestamp: Some(start + Duration::minutes(74070)),
                multiple: false,
            },
            FailureRow {
                series: "upper".into(),
                threshold: -0.4,
                time_h: None,
                timestamp: None,
                multiple: false,
            },
        ];
        let p = dir.path().join("failures.csv");
        write_failure_csv(&rows, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("series,threshold,t_cross_h,timestamp,multiple\n"));
        assert!(text.contains("point,-0.4,1234.5,"));
        assert!(text.contains("upper,-0.4,,,false"));
    }
}
