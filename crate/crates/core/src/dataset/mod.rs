//! Forecast–observation data: ingestion, validation, filtering, splitting and
//! synthetic generation.

mod io;
mod split;
mod synth;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{ingest_csv, read_plants_csv, write_csv, write_plants_csv, ColumnMap, IngestOptions};
pub use split::{split_five_day_blocks, SplitMode, SplitPlan};
pub use synth::{diurnal_signal, synth_generate, SynthConfig};

/// Ensemble size: one control plus fifty exchangeable members.
pub const N_MEMBERS: usize = 51;

/// One forecast case: the 51-member ensemble for a plant and valid time,
/// with its verifying observation. Power values are normalized by the
/// plant's nominal AC power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCase {
    pub timestamp: DateTime<Utc>,
    pub plant_id: String,
    /// Minutes since forecast issue.
    pub lead_time: u32,
    /// Control member first, then the 50 exchangeable members.
    pub members: Vec<f64>,
    pub observation: f64,
    pub zenith_angle: Option<f64>,
}

impl ForecastCase {
    pub fn ctrl(&self) -> f64 {
        self.members[0]
    }

    pub fn exchangeable(&self) -> &[f64] {
        &self.members[1..]
    }

    /// All 51 values in ascending order, the raw ensemble as a sample.
    pub fn sorted_ensemble(&self) -> Vec<f64> {
        let mut v = self.members.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Minutes after midnight UTC of the valid time.
    pub fn time_of_day(&self) -> u32 {
        use chrono::Timelike;
        self.timestamp.hour() * 60 + self.timestamp.minute()
    }

    fn validate(&self, row: usize) -> Result<()> {
        if self.members.len() != N_MEMBERS {
            return Err(Error::Schema {
                row,
                msg: format!("expected {N_MEMBERS} members, found {}", self.members.len()),
            });
        }
        if let Some(bad) = self.members.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "row {row}: member value {bad} outside [0, 1] after normalization"
            )));
        }
        if !(0.0..=1.0).contains(&self.observation) {
            return Err(Error::Validation(format!(
                "row {row}: observation {} outside [0, 1] after normalization",
                self.observation
            )));
        }
        Ok(())
    }
}

/// Summary statistics of the exchangeable members plus the control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub ctrl: f64,
    pub mean: f64,
    /// Unbiased variance of the 50 exchangeable members.
    pub var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantInfo {
    pub nominal_power_ac: f64,
    pub mean_daytime_power: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub cases: Vec<ForecastCase>,
    /// Per-plant constants in kW.
    pub plants: BTreeMap<String, PlantInfo>,
}

impl Dataset {
    /// Builds a dataset, sorting by (plant, timestamp) and rejecting
    /// duplicates.
    pub fn new(mut cases: Vec<ForecastCase>, plants: BTreeMap<String, PlantInfo>) -> Result<Self> {
        for (i, c) in cases.iter().enumerate() {
            c.validate(i + 1)?;
            if !plants.contains_key(&c.plant_id) {
                return Err(Error::Validation(format!(
                    "row {}: plant {} has no metadata",
                    i + 1,
                    c.plant_id
                )));
            }
        }
        cases.sort_by(|a, b| {
            a.plant_id
                .cmp(&b.plant_id)
                .then_with(|| a.timestamp.cmp(&b.timestamp))
        });
        for w in cases.windows(2) {
            if w[0].plant_id == w[1].plant_id && w[0].timestamp == w[1].timestamp {
                return Err(Error::Validation(format!(
                    "duplicate case for plant {} at {}",
                    w[0].plant_id,
                    w[0].timestamp.to_rfc3339()
                )));
            }
        }
        Ok(Self { cases, plants })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Dataset restricted to the given case indices (in index order).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            cases: indices.iter().map(|&i| self.cases[i].clone()).collect(),
            plants: self.plants.clone(),
        }
    }

    /// Cases whose valid date lies in `[from, to]` (either bound optional).
    pub fn date_window(&self, from: Option<chrono::NaiveDate>, to: Option<chrono::NaiveDate>) -> Dataset {
        let keep = |c: &ForecastCase| {
            let d = c.timestamp.date_naive();
            from.map_or(true, |f| d >= f) && to.map_or(true, |t| d <= t)
        };
        Dataset {
            cases: self.cases.iter().filter(|c| keep(c)).cloned().collect(),
            plants: self.plants.clone(),
        }
    }

    /// Multiplier taking normalized power to percent of mean daytime power.
    pub fn score_scale(&self, plant_id: &str) -> f64 {
        self.plants
            .get(plant_id)
            .map(|p| 100.0 * p.nominal_power_ac / p.mean_daytime_power)
            .unwrap_or(100.0)
    }
}

/// Keeps daytime cases (zenith < 90°) with positive observed power.
pub fn daytime_filter(d: &Dataset) -> Result<Dataset> {
    let mut cases = Vec::with_capacity(d.cases.len());
    for c in &d.cases {
        let zenith = c.zenith_angle.ok_or_else(|| {
            Error::Config(format!(
                "daytime filter needs a zenith angle; missing for plant {} at {}",
                c.plant_id,
                c.timestamp.to_rfc3339()
            ))
        })?;
        if zenith < 90.0 && c.observation > 0.0 {
            cases.push(c.clone());
        }
    }
    Ok(Dataset {
        cases,
        plants: d.plants.clone(),
    })
}

/// Sorts the 50 exchangeable members ascending; the control stays first.
pub fn sort_members(c: &ForecastCase) -> ForecastCase {
    let mut out = c.clone();
    out.members[1..].sort_by(f64::total_cmp);
    out
}

/// Control value plus mean and unbiased variance of the exchangeable members.
pub fn ensemble_stats(c: &ForecastCase) -> EnsembleStats {
    let ex = c.exchangeable();
    let n = ex.len() as f64;
    let mean = ex.iter().sum::<f64>() / n;
    let var = if ex.len() > 1 {
        ex.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    EnsembleStats {
        ctrl: c.ctrl(),
        mean,
        var,
    }
}

/// Network input rows: the control followed by the sorted exchangeable
/// members.
pub fn network_inputs(cases: &[ForecastCase]) -> ndarray::Array2<f64> {
    let mut x = ndarray::Array2::zeros((cases.len(), N_MEMBERS));
    for (mut row, c) in x.rows_mut().into_iter().zip(cases) {
        let sorted = sort_members(c);
        row.iter_mut().zip(&sorted.members).for_each(|(r, v)| *r = *v);
    }
    x
}

pub fn observations(cases: &[ForecastCase]) -> ndarray::Array1<f64> {
    cases.iter().map(|c| c.observation).collect()
}
