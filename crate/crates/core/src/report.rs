//! Prediction files, score tables and curve data.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ForecastCase};
use crate::error::{Error, Result};
use crate::scoring::{
    crps_decomposition, crps_ensemble, interval_diagnostics, piaw_vs_picp_curve, point_metrics, qs_by_level,
    rank_histogram, reliability_diagram, skill_score, IntervalPoint, QuantileForecast, ReliabilityPoint, LEVEL_DENOM,
    N_LEVELS,
};

/// One row of a predictions file, with quantiles normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub timestamp: DateTime<Utc>,
    pub plant_id: String,
    pub lead_min: u32,
    pub quantiles: QuantileForecast,
}

fn format_time(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn nominal(d: &Dataset, plant: &str) -> Result<f64> {
    d.plants
        .get(plant)
        .map(|p| p.nominal_power_ac)
        .ok_or_else(|| Error::Validation(format!("plant {plant} has no nominal power")))
}

/// Writes `timestamp,plant_id,lead_min,q01..q51` with quantiles in kW.
pub fn write_predictions(
    path: impl AsRef<Path>,
    d: &Dataset,
    cases: &[ForecastCase],
    forecasts: &[QuantileForecast],
) -> Result<()> {
    if cases.len() != forecasts.len() {
        return Err(Error::Domain("one forecast per case required".into()));
    }
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["timestamp".to_string(), "plant_id".into(), "lead_min".into()];
    header.extend((1..=N_LEVELS).map(|k| format!("q{k:02}")));
    w.write_record(&header)?;
    for (c, f) in cases.iter().zip(forecasts) {
        let kw = nominal(d, &c.plant_id)?;
        let mut rec = vec![format_time(&c.timestamp), c.plant_id.clone(), c.lead_time.to_string()];
        rec.extend(f.values().iter().map(|v| (v * kw).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a predictions file and normalizes by the plants' nominal power.
pub fn read_predictions(path: impl AsRef<Path>, d: &Dataset) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref())?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 3 + N_LEVELS || &headers[0] != "timestamp" || &headers[1] != "plant_id" || &headers[2] != "lead_min" {
        return Err(Error::Schema {
            row: 0,
            msg: format!("predictions need timestamp,plant_id,lead_min and {N_LEVELS} quantile columns"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let parse_err = |msg: String| Error::Parse { row, msg };
        let timestamp = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|e| parse_err(format!("timestamp: {e}")))?
            .with_timezone(&Utc);
        let plant_id = rec[1].to_string();
        let lead_min: u32 = rec[2].parse().map_err(|e| parse_err(format!("lead_min: {e}")))?;
        let kw = nominal(d, &plant_id)?;
        let values = (3..3 + N_LEVELS)
            .map(|j| rec[j].parse::<f64>().map(|v| (v / kw).clamp(0.0, 1.0)))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("quantile: {e}")))?;
        let quantiles = QuantileForecast::new(values)
            .map_err(|e| Error::Validation(format!("row {row}: {e}")))?;
        out.push(PredictionRow { timestamp, plant_id, lead_min, quantiles });
    }
    Ok(out)
}

/// Matches prediction rows to dataset cases by plant and valid time and
/// returns forecasts in case order. Every case must be covered exactly once
/// and every row must match a case.
pub fn align_predictions(cases: &[ForecastCase], rows: Vec<PredictionRow>) -> Result<Vec<QuantileForecast>> {
    let mut by_key: HashMap<(String, DateTime<Utc>), QuantileForecast> = HashMap::with_capacity(rows.len());
    for r in rows {
        let key = (r.plant_id.clone(), r.timestamp);
        if by_key.insert(key, r.quantiles).is_some() {
            return Err(Error::Validation(format!(
                "duplicate prediction for plant {} at {}",
                r.plant_id,
                format_time(&r.timestamp)
            )));
        }
    }
    let mut out = Vec::with_capacity(cases.len());
    for c in cases {
        match by_key.remove(&(c.plant_id.clone(), c.timestamp)) {
            Some(q) => out.push(q),
            None => {
                return Err(Error::Validation(format!(
                    "no prediction for plant {} at {}",
                    c.plant_id,
                    format_time(&c.timestamp)
                )))
            }
        }
    }
    if let Some(((plant, t), _)) = by_key.into_iter().next() {
        return Err(Error::Validation(format!("prediction for plant {plant} at {} has no observation", format_time(&t))));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Overall,
    Plant,
    ObservationTime,
}

/// Group label of a case: `all`, the plant id, or the UTC time of day.
pub fn group_key(g: Grouping, c: &ForecastCase) -> String {
    match g {
        Grouping::Overall => "all".into(),
        Grouping::Plant => c.plant_id.clone(),
        Grouping::ObservationTime => {
            let m = c.time_of_day();
            format!("{:02}:{:02}", m / 60, m % 60)
        }
    }
}

/// Scores of one method on one group, in percent of mean daytime power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub method: String,
    pub group: String,
    pub n: usize,
    pub crps: f64,
    pub crpss: Option<f64>,
    pub rel: Option<f64>,
    pub res: Option<f64>,
    pub unc: Option<f64>,
    pub mae: f64,
    pub maes: Option<f64>,
    pub rmse: f64,
    pub mbe: f64,
    pub picp: f64,
    pub piaw: f64,
    pub ri: f64,
}

/// Forecasts and observations multiplied by each case's plant scale.
fn scaled(d: &Dataset, cases: &[&ForecastCase], forecasts: &[&QuantileForecast]) -> (Vec<QuantileForecast>, Vec<f64>) {
    let mut fs = Vec::with_capacity(cases.len());
    let mut ys = Vec::with_capacity(cases.len());
    for (c, f) in cases.iter().zip(forecasts) {
        let s = d.score_scale(&c.plant_id);
        fs.push(f.scaled(s));
        ys.push(c.observation * s);
    }
    (fs, ys)
}

struct GroupScores {
    crps: f64,
    mae: f64,
    row: ScoreRow,
}

fn score_group(method: &str, group: &str, fs: &[QuantileForecast], ys: &[f64], seed: u64) -> Result<GroupScores> {
    let n = ys.len();
    let crps = fs.iter().zip(ys).map(|(f, &y)| crps_ensemble(f.values(), y)).sum::<Result<f64>>()? / n as f64;
    let dec = if n >= 2 { Some(crps_decomposition(fs, ys)?) } else { None };
    let medians: Vec<f64> = fs.iter().map(|f| f.median()).collect();
    let means: Vec<f64> = fs.iter().map(|f| f.mean()).collect();
    let pm = point_metrics(&medians, &means, ys)?;
    let widest = 2.0 / LEVEL_DENOM as f64;
    let iv = interval_diagnostics(fs, ys, widest)?;
    let values: Vec<&[f64]> = fs.iter().map(|f| f.values()).collect();
    let rh = rank_histogram(&values, ys, seed)?;
    Ok(GroupScores {
        crps,
        mae: pm.mae,
        row: ScoreRow {
            method: method.into(),
            group: group.into(),
            n,
            crps,
            crpss: None,
            rel: dec.map(|d| d.rel),
            res: dec.map(|d| d.res),
            unc: dec.map(|d| d.unc),
            mae: pm.mae,
            maes: None,
            rmse: pm.rmse,
            mbe: pm.mbe,
            picp: iv.picp,
            piaw: iv.piaw,
            ri: rh.ri,
        },
    })
}

/// Methods paired with forecasts aligned to `cases`.
pub type MethodForecasts = Vec<(String, Vec<QuantileForecast>)>;

/// One row per method and group. Skill scores are relative to `reference`
/// on the same group.
pub fn score_table(
    d: &Dataset,
    cases: &[ForecastCase],
    methods: &MethodForecasts,
    reference: &str,
    grouping: Grouping,
    seed: u64,
) -> Result<Vec<ScoreRow>> {
    if cases.is_empty() {
        return Err(Error::InsufficientData("no cases to evaluate".into()));
    }
    if !methods.iter().any(|(m, _)| m == reference) {
        return Err(Error::Config(format!("reference method {reference:?} not among the evaluated methods")));
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in cases.iter().enumerate() {
        groups.entry(group_key(grouping, c)).or_default().push(i);
    }
    let mut rows = Vec::new();
    for (g, idx) in &groups {
        let group_cases: Vec<&ForecastCase> = idx.iter().map(|&i| &cases[i]).collect();
        let mut scored = Vec::with_capacity(methods.len());
        for (name, fc) in methods {
            if fc.len() != cases.len() {
                return Err(Error::Domain(format!("method {name} has {} forecasts for {} cases", fc.len(), cases.len())));
            }
            let group_fc: Vec<&QuantileForecast> = idx.iter().map(|&i| &fc[i]).collect();
            let (fs, ys) = scaled(d, &group_cases, &group_fc);
            scored.push(score_group(name, g, &fs, &ys, seed)?);
        }
        let ref_pos = methods.iter().position(|(m, _)| m == reference).expect("reference present");
        let (ref_crps, ref_mae) = (scored[ref_pos].crps, scored[ref_pos].mae);
        for mut s in scored {
            s.row.crpss = skill_score(s.crps, ref_crps).ok();
            s.row.maes = skill_score(s.mae, ref_mae).ok();
            rows.push(s.row);
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_score_table(rows: &[ScoreRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "method", "group", "n", "crps", "crpss", "rel", "res", "unc", "mae", "maes", "rmse", "mbe", "picp", "piaw", "ri",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.group.clone(),
            r.n.to_string(),
            r.crps.to_string(),
            opt(r.crpss),
            opt(r.rel),
            opt(r.res),
            opt(r.unc),
            r.mae.to_string(),
            opt(r.maes),
            r.rmse.to_string(),
            r.mbe.to_string(),
            r.picp.to_string(),
            r.piaw.to_string(),
            r.ri.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Diagnostic curves of one method over all cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub method: String,
    pub reliability: Vec<ReliabilityPoint>,
    pub rank_counts: Vec<usize>,
    pub ri: f64,
    /// `(level, mean quantile score)` in percent of mean daytime power.
    pub qs_by_level: Vec<(f64, f64)>,
    pub piaw_picp: Vec<IntervalPoint>,
}

pub fn curve_data(d: &Dataset, cases: &[ForecastCase], methods: &MethodForecasts, seed: u64) -> Result<Vec<CurveData>> {
    let refs: Vec<&ForecastCase> = cases.iter().collect();
    methods
        .iter()
        .map(|(name, fc)| {
            let fref: Vec<&QuantileForecast> = fc.iter().collect();
            let (fs, ys) = scaled(d, &refs, &fref);
            let values: Vec<&[f64]> = fs.iter().map(|f| f.values()).collect();
            let rh = rank_histogram(&values, &ys, seed)?;
            Ok(CurveData {
                method: name.clone(),
                reliability: reliability_diagram(&fs, &ys),
                rank_counts: rh.counts,
                ri: rh.ri,
                qs_by_level: qs_by_level(&fs, &ys)?,
                piaw_picp: piaw_vs_picp_curve(&fs, &ys),
            })
        })
        .collect()
}

/// Score tables of every grouping plus curve data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub reference: String,
    pub overall: Vec<ScoreRow>,
    pub per_plant: Vec<ScoreRow>,
    pub per_time: Vec<ScoreRow>,
    pub curves: Vec<CurveData>,
}

pub fn verification_report(
    d: &Dataset,
    cases: &[ForecastCase],
    methods: &MethodForecasts,
    reference: &str,
    seed: u64,
) -> Result<VerificationReport> {
    Ok(VerificationReport {
        reference: reference.into(),
        overall: score_table(d, cases, methods, reference, Grouping::Overall, seed)?,
        per_plant: score_table(d, cases, methods, reference, Grouping::Plant, seed)?,
        per_time: score_table(d, cases, methods, reference, Grouping::ObservationTime, seed)?,
        curves: curve_data(d, cases, methods, seed)?,
    })
}

impl VerificationReport {
    /// `scores_overall.csv`, `scores_plant.csv`, `scores_time.csv` and
    /// `curves.json` in `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_score_table(&self.overall, dir.join("scores_overall.csv"))?;
        write_score_table(&self.per_plant, dir.join("scores_plant.csv"))?;
        write_score_table(&self.per_time, dir.join("scores_time.csv"))?;
        std::fs::write(dir.join("curves.json"), serde_json::to_string_pretty(&self.curves)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, SynthConfig};
    use crate::model::raw_ensemble_forecasts;

    fn setup() -> (Dataset, MethodForecasts) {
        let d = synth_generate(&SynthConfig { days: 6, cases_per_day: 13, bias: 0.1, ..Default::default() }, 4).unwrap();
        let raw = raw_ensemble_forecasts(&d.cases).unwrap();
        let shifted: Vec<QuantileForecast> = raw
            .iter()
            .map(|q| QuantileForecast::new(q.values().iter().map(|v| (v - 0.1).max(0.0)).collect()).unwrap())
            .collect();
        (d, vec![("raw".into(), raw), ("shifted".into(), shifted)])
    }

    #[test]
    fn raw_against_itself_has_zero_skill() {
        let (d, m) = setup();
        for g in [Grouping::Overall, Grouping::Plant, Grouping::ObservationTime] {
            for r in score_table(&d, &d.cases, &m, "raw", g, 1).unwrap().iter().filter(|r| r.method == "raw") {
                assert_eq!(r.crpss, Some(0.0));
                assert_eq!(r.maes, Some(0.0));
            }
        }
    }

    #[test]
    fn decomposition_holds_in_every_row() {
        let (d, m) = setup();
        let rep = verification_report(&d, &d.cases, &m, "raw", 1).unwrap();
        assert_eq!(rep.per_time.len(), 2 * 13);
        for r in rep.overall.iter().chain(&rep.per_plant).chain(&rep.per_time) {
            let (rel, res, unc) = (r.rel.unwrap(), r.res.unwrap(), r.unc.unwrap());
            assert!((rel - res + unc - r.crps).abs() < 1e-10 * r.crps.max(1.0), "{r:?}");
        }
        assert!(rep.curves.iter().all(|c| c.piaw_picp.len() == 25));
        let shifted = rep.overall.iter().find(|r| r.method == "shifted").unwrap();
        assert!(shifted.crpss.unwrap() > 0.0);
    }

    #[test]
    fn unknown_reference_is_rejected() {
        let (d, m) = setup();
        assert!(matches!(score_table(&d, &d.cases, &m, "nope", Grouping::Overall, 1), Err(Error::Config(_))));
    }

    #[test]
    fn predictions_round_trip_in_kw() {
        let (d, m) = setup();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.csv");
        write_predictions(&p, &d, &d.cases, &m[0].1).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("timestamp,plant_id,lead_min,q01,"));
        let back = align_predictions(&d.cases, read_predictions(&p, &d).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&m[0].1) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(align_predictions(&d.cases[1..], read_predictions(&p, &d).unwrap()).is_err());
    }
}
