use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, ForecastCase, PlantInfo, N_MEMBERS};
use crate::error::{Error, Result};

const SUNRISE_MIN: f64 = 165.0;
const SUNSET_MIN: f64 = 1155.0;
const FIRST_SLOT_MIN: u32 = 180;
const SLOT_COUNT: usize = 65;

/// Synthetic data with a known conditional law.
///
/// Observations follow a doubly censored normal with location
/// `a0 + a1·x + sine_amplitude·sin(2πx)` and scale `b0`, where `x` is the
/// diurnal signal scaled by a per-day clearness factor drawn from
/// `[1 − weather, 1]`. Members are drawn around the linear part shifted by
/// `bias`, with variance multiplied by `deflation`, then clipped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub bias: f64,
    pub deflation: f64,
    pub days: usize,
    pub cases_per_day: usize,
    pub seed: u64,
    pub weather: f64,
    pub sine_amplitude: f64,
    pub plant_id: String,
    pub nominal_kw: f64,
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            a0: 0.2,
            a1: 0.6,
            b0: 0.08,
            bias: 0.0,
            deflation: 1.0,
            days: 60,
            cases_per_day: 65,
            seed: 1,
            weather: 0.0,
            sine_amplitude: 0.0,
            plant_id: "synth".into(),
            nominal_kw: 498.0,
            start: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.b0 > 0.0) || !self.b0.is_finite() {
            return bad(format!("b0 (scale) must be positive, got {}", self.b0));
        }
        if !(self.deflation > 0.0) || !self.deflation.is_finite() {
            return bad(format!("deflation must be positive, got {}", self.deflation));
        }
        if self.days == 0 {
            return bad("days must be at least 1".into());
        }
        if self.cases_per_day == 0 || self.cases_per_day > SLOT_COUNT {
            return bad(format!("cases_per_day must be in 1..={SLOT_COUNT}"));
        }
        if !(0.0..=1.0).contains(&self.weather) {
            return bad("weather must lie in [0, 1]".into());
        }
        if !(self.nominal_kw > 0.0) {
            return bad("nominal_kw must be positive".into());
        }
        Ok(())
    }

    /// True location of the observation law at signal value `x`.
    pub fn true_mu(&self, x: f64) -> f64 {
        self.a0 + self.a1 * x + self.sine_amplitude * (2.0 * PI * x).sin()
    }

    /// Centre of the raw ensemble at signal value `x`.
    pub fn ensemble_centre(&self, x: f64) -> f64 {
        self.a0 + self.a1 * x + self.bias
    }
}

/// Clear-sky-like bell over the day; `minute` is minutes after midnight UTC.
pub fn diurnal_signal(minute: f64) -> f64 {
    (PI * (minute - SUNRISE_MIN) / (SUNSET_MIN - SUNRISE_MIN)).sin().max(0.0)
}

fn slot_minutes(cases_per_day: usize) -> Vec<u32> {
    if cases_per_day == 1 {
        return vec![FIRST_SLOT_MIN + 15 * (SLOT_COUNT as u32 / 2)];
    }
    (0..cases_per_day)
        .map(|j| {
            let idx = (j as f64 * (SLOT_COUNT - 1) as f64 / (cases_per_day - 1) as f64).round() as u32;
            FIRST_SLOT_MIN + 15 * idx
        })
        .collect()
}

/// Generates a deterministic synthetic dataset for `cfg` and `seed`.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = slot_minutes(cfg.cases_per_day);
    let origin = Utc.from_utc_datetime(&cfg.start.and_hms_opt(0, 0, 0).unwrap());
    let member_sd = cfg.b0 * cfg.deflation.sqrt();
    let mut cases = Vec::with_capacity(cfg.days * slots.len());
    let mut obs_sum = 0.0;
    let mut obs_n = 0usize;
    for day in 0..cfg.days {
        let clearness = 1.0 - cfg.weather * rng.gen::<f64>();
        for &minute in &slots {
            let s = diurnal_signal(minute as f64);
            let x = s * clearness;
            let mu = cfg.true_mu(x);
            let centre = cfg.ensemble_centre(x);
            let z: f64 = rng.sample(StandardNormal);
            let observation = (mu + cfg.b0 * z).clamp(0.0, 1.0);
            let members: Vec<f64> = (0..N_MEMBERS)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    (centre + member_sd * z).clamp(0.0, 1.0)
                })
                .collect();
            if observation > 0.0 {
                obs_sum += observation * cfg.nominal_kw;
                obs_n += 1;
            }
            cases.push(ForecastCase {
                timestamp: origin + Duration::days(day as i64) + Duration::minutes(minute as i64),
                plant_id: cfg.plant_id.clone(),
                lead_time: minute,
                members,
                observation,
                zenith_angle: Some(s.clamp(-1.0, 1.0).acos().to_degrees()),
            });
        }
    }
    let mean_daytime = if obs_n > 0 { obs_sum / obs_n as f64 } else { cfg.nominal_kw };
    let plants = BTreeMap::from([(
        cfg.plant_id.clone(),
        PlantInfo { nominal_power_ac: cfg.nominal_kw, mean_daytime_power: mean_daytime },
    )]);
    Dataset::new(cases, plants)
}
