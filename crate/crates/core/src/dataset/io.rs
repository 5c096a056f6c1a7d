use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};

use super::{Dataset, ForecastCase, PlantInfo, N_MEMBERS};
use crate::error::{Error, Result};

/// Column names of the ingest CSV.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub timestamp: String,
    pub plant: String,
    pub lead: String,
    pub observation: String,
    /// Member columns are `<prefix>01` … `<prefix>51`.
    pub member_prefix: String,
    /// Optional zenith angle column (degrees).
    pub zenith: Option<String>,
    /// Optional solar elevation column, used as a zenith proxy (90° − elevation).
    pub elevation: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            plant: "plant_id".into(),
            lead: "lead_min".into(),
            observation: "obs".into(),
            member_prefix: "m".into(),
            zenith: Some("zenith".into()),
            elevation: Some("elevation".into()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub columns: ColumnMap,
    /// Nominal AC power per plant in kW. Empty means the file is already
    /// normalized.
    pub nominal_kw: BTreeMap<String, f64>,
}

fn member_name(prefix: &str, k: usize) -> String {
    format!("{prefix}{k:02}")
}

/// Reads a forecast CSV, normalizes power by nominal AC power and validates
/// every case.
pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::Schema {
            row: 0,
            msg: format!("header lacks column `{name}`"),
        })
    };
    let cols = &opts.columns;
    let ts_col = require(&cols.timestamp)?;
    let plant_col = require(&cols.plant)?;
    let lead_col = require(&cols.lead)?;
    let obs_col = require(&cols.observation)?;
    let member_cols: Vec<usize> = (1..=N_MEMBERS)
        .map(|k| require(&member_name(&cols.member_prefix, k)))
        .collect::<Result<_>>()?;
    if find(&member_name(&cols.member_prefix, N_MEMBERS + 1)).is_some() {
        return Err(Error::Schema {
            row: 0,
            msg: format!("header declares more than {N_MEMBERS} member columns"),
        });
    }
    let zenith_col = cols.zenith.as_deref().and_then(find);
    let elevation_col = cols.elevation.as_deref().and_then(find);

    let mut cases = Vec::new();
    let mut obs_kw: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if rec.len() != headers.len() {
            let present = member_cols.iter().filter(|&&c| c < rec.len()).count();
            return Err(Error::Schema {
                row,
                msg: format!(
                    "expected {} fields ({N_MEMBERS} members), found {} ({present} members)",
                    headers.len(),
                    rec.len()
                ),
            });
        }
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, what: &str| -> Result<f64> {
            let s = field(c);
            if s.is_empty() {
                return Err(Error::Schema { row, msg: format!("missing {what}") });
            }
            s.parse::<f64>()
                .map_err(|e| Error::Parse { row, msg: format!("{what} `{s}`: {e}") })
        };
        let timestamp = field(ts_col)
            .parse::<DateTime<Utc>>()
            .map_err(|e| Error::Parse { row, msg: format!("timestamp `{}`: {e}", field(ts_col)) })?;
        let plant_id = field(plant_col).to_string();
        let lead_time = field(lead_col)
            .parse::<u32>()
            .map_err(|e| Error::Parse { row, msg: format!("lead time `{}`: {e}", field(lead_col)) })?;
        let nominal = if opts.nominal_kw.is_empty() {
            1.0
        } else {
            *opts.nominal_kw.get(&plant_id).ok_or_else(|| {
                Error::Validation(format!("row {row}: no nominal power for plant {plant_id}"))
            })?
        };
        let mut members = Vec::with_capacity(N_MEMBERS);
        for (k, &c) in member_cols.iter().enumerate() {
            members.push(num(c, &format!("member {}", k + 1))? / nominal);
        }
        let obs = num(obs_col, "observation")?;
        let zenith_angle = match (zenith_col, elevation_col) {
            (Some(c), _) if !field(c).is_empty() => Some(num(c, "zenith")?),
            (_, Some(c)) if !field(c).is_empty() => Some(90.0 - num(c, "elevation")?),
            _ => None,
        };
        if obs > 0.0 {
            let e = obs_kw.entry(plant_id.clone()).or_insert((0.0, 0));
            e.0 += obs;
            e.1 += 1;
        }
        let case = ForecastCase {
            timestamp,
            plant_id,
            lead_time,
            members,
            observation: obs / nominal,
            zenith_angle,
        };
        case.validate(row)?;
        cases.push(case);
    }

    let mut plants = BTreeMap::new();
    for c in &cases {
        if plants.contains_key(&c.plant_id) {
            continue;
        }
        let nominal = opts.nominal_kw.get(&c.plant_id).copied().unwrap_or(1.0);
        let mean_day = match obs_kw.get(&c.plant_id) {
            Some(&(sum, n)) if n > 0 => sum / n as f64,
            _ => nominal,
        };
        plants.insert(
            c.plant_id.clone(),
            PlantInfo { nominal_power_ac: nominal, mean_daytime_power: mean_day },
        );
    }
    Dataset::new(cases, plants)
}

/// Writes the dataset in the ingest schema, de-normalized to kW. A trailing
/// `zenith` column is added when every case carries one.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let with_zenith = !d.cases.is_empty() && d.cases.iter().all(|c| c.zenith_angle.is_some());
    let mut header = vec!["timestamp".to_string(), "plant_id".into(), "lead_min".into(), "obs".into()];
    header.extend((1..=N_MEMBERS).map(|k| member_name("m", k)));
    if with_zenith {
        header.push("zenith".into());
    }
    w.write_record(&header)?;
    for c in &d.cases {
        let nominal = d.plants.get(&c.plant_id).map_or(1.0, |p| p.nominal_power_ac);
        let mut rec = vec![
            c.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            c.plant_id.clone(),
            c.lead_time.to_string(),
            (c.observation * nominal).to_string(),
        ];
        rec.extend(c.members.iter().map(|m| (m * nominal).to_string()));
        if with_zenith {
            rec.extend(c.zenith_angle.map(|z| z.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `plant_id,nominal_kw` rows.
pub fn read_plants_csv(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref())?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let id = rec.get(0).unwrap_or("").to_string();
        let kw: f64 = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::Parse { row, msg: format!("nominal_kw: {e}") })?;
        if !(kw > 0.0) {
            return Err(Error::Validation(format!("row {row}: nominal power must be positive")));
        }
        out.insert(id, kw);
    }
    Ok(out)
}

pub fn write_plants_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["plant_id", "nominal_kw"])?;
    for (id, p) in &d.plants {
        w.write_record([id.clone(), p.nominal_power_ac.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn header() -> String {
        let mut h = "timestamp,plant_id,lead_min,obs".to_string();
        for k in 1..=51 {
            h.push_str(&format!(",m{k:02}"));
        }
        h
    }

    fn row(ts: &str, members: usize) -> String {
        let mut r = format!("{ts},a,720,100");
        for k in 0..members {
            r.push_str(&format!(",{}", 50 + k));
        }
        r
    }

    fn write(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn opts() -> IngestOptions {
        IngestOptions {
            nominal_kw: BTreeMap::from([("a".to_string(), 200.0)]),
            ..Default::default()
        }
    }

    #[test]
    fn reads_well_formed_file() {
        let f = write(&[
            header(),
            row("2023-06-01T12:00:00Z", 51),
            row("2023-06-01T12:15:00Z", 51),
            row("2023-06-01T12:30:00Z", 51),
        ]);
        let d = ingest_csv(f.path(), &opts()).unwrap();
        assert_eq!(d.len(), 3);
        assert!((d.cases[0].observation - 0.5).abs() < 1e-15);
        assert!((d.cases[0].members[0] - 0.25).abs() < 1e-15);
        assert_eq!(d.plants["a"].nominal_power_ac, 200.0);
        assert_eq!(d.plants["a"].mean_daytime_power, 100.0);
    }

    #[test]
    fn short_member_row_is_a_schema_error() {
        let f = write(&[header(), row("2023-06-01T12:00:00Z", 51), row("2023-06-01T12:15:00Z", 50)]);
        match ingest_csv(f.path(), &opts()) {
            Err(Error::Schema { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_and_bad_values_are_rejected() {
        let f = write(&[header(), row("2023-06-01T12:00:00Z", 51), row("2023-06-01T12:00:00Z", 51)]);
        assert!(matches!(ingest_csv(f.path(), &opts()), Err(Error::Validation(_))));

        let bad = row("2023-06-01T12:00:00Z", 51).replace(",720,", ",abc,");
        let f = write(&[header(), bad]);
        assert!(matches!(ingest_csv(f.path(), &opts()), Err(Error::Parse { row: 1, .. })));

        let missing = row("2023-06-01T12:00:00Z", 51).replacen(",50,", ",,", 1);
        let f = write(&[header(), missing]);
        assert!(matches!(ingest_csv(f.path(), &opts()), Err(Error::Schema { row: 1, .. })));
    }
}
