//! Accelerated-test datasets: specimens exposed under constant chamber
//! conditions, with per-specimen dosage records and damage measurements.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::ExposureConditions;
use crate::spectral::{DosageSeries, WavelengthSplit};

/// One specimen: constant exposure conditions, a cumulative dosage
/// record, and damage measurements over time.
#[derive(Debug, Clone)]
pub struct AccelSpecimen {
    pub id: String,
    /// Chamber/batch the specimen was exposed in (shared random effects).
    pub group: String,
    pub conditions: ExposureConditions,
    pub dosage: DosageSeries,
    pub times_h: Vec<f64>,
    pub damage: Vec<f64>,
}

impl AccelSpecimen {
    pub fn n_obs(&self) -> usize {
        self.times_h.len()
    }

    fn validate(&self) -> Result<()> {
        if self.times_h.len() != self.damage.len() {
            return Err(Error::domain(format!(
                "specimen {}: {} times but {} damage values",
                self.id,
                self.times_h.len(),
                self.damage.len()
            )));
        }
        for w in self.times_h.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::domain(format!(
                    "specimen {}: measurement times must be strictly increasing",
                    self.id
                )));
            }
        }
        if self.times_h.first().is_some_and(|t| *t <= 0.0) {
            return Err(Error::domain(format!(
                "specimen {}: measurement times must be positive",
                self.id
            )));
        }
        if self.damage.iter().any(|y| !y.is_finite()) {
            return Err(Error::domain(format!(
                "specimen {}: non-finite damage value",
                self.id
            )));
        }
        if let Some(&t_max) = self.times_h.last() {
            // Surface dosage coverage problems at construction, not
            // deep inside a fit.
            self.dosage.value_at(t_max).map_err(|_| {
                Error::domain(format!(
                    "specimen {}: dosage record ends before the last measurement at {t_max} h",
                    self.id
                ))
            })?;
        }
        self.conditions.validate().map_err(|e| {
            Error::domain(format!("specimen {}: {e}", self.id))
        })?;
        Ok(())
    }
}

/// A set of specimens plus the wavelength splits used to resolve each
/// bandpass filter's transmitted dosage onto the common wavelength grid.
/// Splits are keyed by nominal bandpass center (nm).
#[derive(Debug, Clone)]
pub struct AccelDataset {
    pub specimens: Vec<AccelSpecimen>,
    pub splits: BTreeMap<u32, WavelengthSplit>,
}

impl AccelDataset {
    pub fn new(
        specimens: Vec<AccelSpecimen>,
        splits: BTreeMap<u32, WavelengthSplit>,
    ) -> Result<Self> {
        let ds = AccelDataset { specimens, splits };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.specimens.is_empty() {
            return Err(Error::degenerate("dataset has no specimens"));
        }
        let mut seen = BTreeSet::new();
        for s in &self.specimens {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::domain(format!("duplicate specimen id {}", s.id)));
            }
            s.validate()?;
        }
        Ok(())
    }

    pub fn n_specimens(&self) -> usize {
        self.specimens.len()
    }

    pub fn n_obs(&self) -> usize {
        self.specimens.iter().map(|s| s.n_obs()).sum()
    }

    pub fn split_for(&self, bp_nm: f64) -> Option<&WavelengthSplit> {
        self.splits.get(&(bp_nm.round() as u32))
    }

    /// Distinct exposure cells (conditions), in sorted order.
    pub fn cells(&self) -> Vec<ExposureConditions> {
        let mut keys: Vec<_> = self
            .specimens
            .iter()
            .map(|s| {
                (
                    (s.conditions.bp_nm * 10.0).round() as i64,
                    (s.conditions.nd * 1e4).round() as i64,
                    (s.conditions.temp_c * 10.0).round() as i64,
                    (s.conditions.rh_pct * 10.0).round() as i64,
                    s.conditions,
                )
            })
            .collect();
        keys.sort_by_key(|k| (k.0, k.1, k.2, k.3));
        keys.dedup_by_key(|k| (k.0, k.1, k.2, k.3));
        keys.into_iter().map(|k| k.4).collect()
    }
}

/// Data-preparation rules applied before fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleanOptions {
    /// Detection floor: damage below this is instrument saturation.
    /// Points at or below the floor are dropped.
    pub floor: f64,
    /// Specimens with fewer remaining points than this are dropped.
    pub min_points: usize,
    /// Specimen ids excluded outright (known bad exposures).
    pub exclude: BTreeSet<String>,
}

impl Default for CleanOptions {
    fn default() -> Self {
        CleanOptions {
            floor: -0.6,
            min_points: 3,
            exclude: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub specimens_in: usize,
    pub specimens_out: usize,
    pub points_in: usize,
    pub points_out: usize,
    pub floored_points: usize,
    pub excluded: Vec<String>,
    pub dropped_few_points: Vec<String>,
}

/// Apply exclusions, the detection floor, and the minimum-points rule.
/// Returns the cleaned dataset (possibly empty) and a report of what was
/// removed; fitting functions reject empty datasets downstream.
pub fn clean(dataset: &AccelDataset, opts: &CleanOptions) -> (AccelDataset, CleanReport) {
    let mut report = CleanReport {
        specimens_in: dataset.n_specimens(),
        points_in: dataset.n_obs(),
        ..CleanReport::default()
    };
    let mut kept = Vec::new();
    for s in &dataset.specimens {
        if opts.exclude.contains(&s.id) {
            report.excluded.push(s.id.clone());
            continue;
        }
        let mut times = Vec::with_capacity(s.times_h.len());
        let mut damage = Vec::with_capacity(s.damage.len());
        for (&t, &y) in s.times_h.iter().zip(&s.damage) {
            if y <= opts.floor {
                report.floored_points += 1;
            } else {
                times.push(t);
                damage.push(y);
            }
        }
        if times.len() < opts.min_points {
            report.dropped_few_points.push(s.id.clone());
            continue;
        }
        kept.push(AccelSpecimen {
            times_h: times,
            damage,
            ..s.clone()
        });
    }
    report.specimens_out = kept.len();
    report.points_out = kept.iter().map(|s| s.n_obs()).sum();
    (
        AccelDataset {
            specimens: kept,
            splits: dataset.splits.clone(),
        },
        report,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specimen(id: &str, damage: Vec<f64>) -> AccelSpecimen {
        let times: Vec<f64> = (1..=damage.len()).map(|i| 24.0 * i as f64).collect();
        let dosage = DosageSeries::constant_rate(0.5, &times).unwrap();
        AccelSpecimen {
            id: id.into(),
            group: "g1".into(),
            conditions: ExposureConditions {
                bp_nm: 353.0,
                nd: 1.0,
                temp_c: 35.0,
                rh_pct: 25.0,
            },
            dosage,
            times_h: times,
            damage,
        }
    }

    fn tiny_dataset() -> AccelDataset {
        AccelDataset::new(
            vec![
                specimen("a", vec![-0.1, -0.2, -0.3, -0.4]),
                specimen("b", vec![-0.1, -0.3, -0.61, -0.65]),
                specimen("c", vec![-0.1, -0.2, -0.3, -0.5]),
            ],
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = AccelDataset::new(
            vec![specimen("a", vec![-0.1; 3]), specimen("a", vec![-0.2; 3])],
            BTreeMap::new(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn dosage_must_cover_measurements() {
        let mut s = specimen("a", vec![-0.1, -0.2, -0.3]);
        s.times_h.push(1e6);
        s.damage.push(-0.4);
        assert!(AccelDataset::new(vec![s], BTreeMap::new()).is_err());
    }

    #[test]
    fn clean_applies_floor_exclusions_and_min_points() {
        let ds = tiny_dataset();
        let mut opts = CleanOptions::default();
        opts.exclude.insert("c".into());
        let (cleaned, report) = clean(&ds, &opts);

        // "b" loses its two floored points and falls below min_points.
        assert_eq!(report.floored_points, 2);
        assert_eq!(report.excluded, vec!["c".to_string()]);
        assert_eq!(report.dropped_few_points, vec!["b".to_string()]);
        assert_eq!(cleaned.n_specimens(), 1);
        assert_eq!(cleaned.specimens[0].id, "a");
        assert_eq!(report.points_in, 12);
        assert_eq!(report.points_out, 4);

        // Points exactly at the floor are dropped; just above survives.
        let ds2 = AccelDataset::new(
            vec![specimen("z", vec![-0.1, -0.2, -0.5999, -0.6])],
            BTreeMap::new(),
        )
        .unwrap();
        let (cleaned2, report2) = clean(&ds2, &CleanOptions::default());
        assert_eq!(report2.floored_points, 1);
        assert_eq!(cleaned2.specimens[0].n_obs(), 3);
    }

    #[test]
    fn cells_deduplicate_conditions() {
        let ds = tiny_dataset();
        assert_eq!(ds.cells().len(), 1);
    }
}
