//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::dataset::{daytime_filter, ingest_csv, read_plants_csv, synth_generate, write_csv, write_plants_csv, Dataset, IngestOptions, SynthConfig};
use crate::error::{Error, Result};
use crate::inference::{block_bootstrap_ci, dm_matrix, DmCell, ScoreSeries};
use crate::model::{raw_ensemble_forecasts, train_model, ModelKind, TrainOptions, TrainedModel};
use crate::quantile_models::write_trial_log;
use crate::report::{align_predictions, read_predictions, verification_report, write_predictions, MethodForecasts};
use crate::scoring::crps_ensemble;
use crate::sub_seed;

/// Exit code for usage and configuration problems.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for data and model problems.
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pvpost", version, about = "Post-processing and verification of ensemble PV power forecasts")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with a known conditional law.
    Synth(SynthArgs),
    /// Train a post-processing model.
    Train(TrainArgs),
    /// Write 51-quantile forecasts in kW.
    Predict(PredictArgs),
    /// Score tables and curve data for one or more prediction files.
    Evaluate(EvaluateArgs),
    /// Bootstrap intervals and Diebold–Mariano matrices.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with generator keys; defaults are used for missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Forecast CSV (`timestamp,plant_id,lead_min,obs,m01..m51`).
    #[arg(long)]
    pub input: PathBuf,
    /// `plant_id,nominal_kw` CSV; defaults to `<input stem>.plants.csv`.
    #[arg(long)]
    pub plants: Option<PathBuf>,
    #[arg(long)]
    pub from: Option<NaiveDate>,
    #[arg(long)]
    pub to: Option<NaiveDate>,
    /// Keep night-time and zero-power cases.
    #[arg(long)]
    pub no_daytime_filter: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// cn-emos, cn-emos-b, cn-drn, lqr, qrnn, bqn or ncqrnn.
    #[arg(long)]
    pub model: String,
    /// Model JSON; the log and trial CSV are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random-search trials (qrnn, bqn, ncqrnn).
    #[arg(long)]
    pub hp_search: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `name=path` of a predictions file; repeatable.
    #[arg(long = "pred", value_parser = parse_pred)]
    pub preds: Vec<(String, PathBuf)>,
    /// Reference for skill scores; `raw` is the raw ensemble.
    #[arg(long, default_value = "raw")]
    pub reference: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long = "pred", value_parser = parse_pred)]
    pub preds: Vec<(String, PathBuf)>,
    /// Include the raw ensemble as method `raw`.
    #[arg(long)]
    pub include_raw: bool,
    /// UTC time-of-day window, inclusive.
    #[arg(long, default_value = "06:00-16:00", value_parser = parse_window)]
    pub window: (u32, u32),
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn parse_pred(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

fn parse_hhmm(s: &str) -> Option<u32> {
    let (h, m) = s.split_once(':')?;
    let (h, m): (u32, u32) = (h.parse().ok()?, m.parse().ok()?);
    (h < 24 && m < 60).then_some(h * 60 + m)
}

fn parse_window(s: &str) -> std::result::Result<(u32, u32), String> {
    let bad = || format!("expected HH:MM-HH:MM, got {s:?}");
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    let (a, b) = (parse_hhmm(a).ok_or_else(bad)?, parse_hhmm(b).ok_or_else(bad)?);
    if a > b {
        return Err(format!("window start after end in {s:?}"));
    }
    Ok((a, b))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn sidecar_path(p: &Path) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}.plants.csv"))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_data(a: &DataArgs) -> Result<Dataset> {
    if !a.input.exists() {
        return Err(Error::Config(format!("input file {} not found", a.input.display())));
    }
    let plants_path = a.plants.clone().unwrap_or_else(|| sidecar_path(&a.input));
    let nominal_kw = if plants_path.exists() {
        read_plants_csv(&plants_path)?
    } else if a.plants.is_some() {
        return Err(Error::Config(format!("plants file {} not found", plants_path.display())));
    } else {
        BTreeMap::new()
    };
    let d = ingest_csv(&a.input, &IngestOptions { nominal_kw, ..Default::default() })?;
    let d = d.date_window(a.from, a.to);
    if a.no_daytime_filter {
        Ok(d)
    } else {
        daytime_filter(&d)
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            SynthConfig::from_toml(&text)?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let d = synth_generate(&cfg, cfg.seed)?;
    ensure_parent(&a.out)?;
    write_csv(&d, &a.out)?;
    write_plants_csv(&d, sidecar_path(&a.out))?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let kind: ModelKind = a.model.parse()?;
    let data = load_data(&a.data)?;
    let opts = TrainOptions { seed: a.seed, hp_search: a.hp_search, ..Default::default() };
    let out = train_model(kind, &data, &opts)?;
    ensure_parent(&a.out)?;
    out.model.save(&a.out)?;
    let mut log = out.log.join("\n");
    log.push('\n');
    fs::write(with_suffix(&a.out, ".log"), log)?;
    if let Some(trials) = &out.trials {
        write_trial_log(trials, with_suffix(&a.out, ".trials.csv"))?;
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    if !a.model.exists() {
        return Err(Error::Config(format!("model file {} not found", a.model.display())));
    }
    let model = TrainedModel::load(&a.model)?;
    let data = load_data(&a.data)?;
    let forecasts = model.predict(&data.cases)?;
    ensure_parent(&a.out)?;
    write_predictions(&a.out, &data, &data.cases, &forecasts)
}

fn load_methods(data: &Dataset, preds: &[(String, PathBuf)], include_raw: bool) -> Result<MethodForecasts> {
    let mut methods: MethodForecasts = Vec::new();
    if include_raw {
        methods.push(("raw".into(), raw_ensemble_forecasts(&data.cases)?));
    }
    for (name, path) in preds {
        if methods.iter().any(|(m, _)| m == name) {
            return Err(Error::Config(format!("method name {name:?} used twice")));
        }
        if !path.exists() {
            return Err(Error::Config(format!("predictions file {} not found", path.display())));
        }
        let rows = read_predictions(path, data)?;
        methods.push((name.clone(), align_predictions(&data.cases, rows)?));
    }
    Ok(methods)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let methods = load_methods(&data, &a.preds, true)?;
    let report = verification_report(&data, &data.cases, &methods, &a.reference, a.seed)?;
    fs::create_dir_all(&a.out)?;
    report.write(&a.out)
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    if a.preds.len() + usize::from(a.include_raw) < 2 {
        return Err(Error::Config("compare needs at least two methods".into()));
    }
    let full = load_data(&a.data)?;
    let all_methods = load_methods(&full, &a.preds, a.include_raw)?;
    let (lo, hi) = a.window;
    let keep: Vec<usize> = (0..full.len()).filter(|&i| (lo..=hi).contains(&full.cases[i].time_of_day())).collect();
    if keep.is_empty() {
        return Err(Error::InsufficientData("no cases inside the time window".into()));
    }
    let data = full.subset(&keep);
    let methods: MethodForecasts = all_methods
        .into_iter()
        .map(|(name, fc)| (name, keep.iter().map(|&i| fc[i].clone()).collect()))
        .collect();
    let names: Vec<String> = methods.iter().map(|(m, _)| m.clone()).collect();
    let scores: Vec<Vec<f64>> = methods
        .iter()
        .map(|(_, fc)| {
            data.cases
                .iter()
                .zip(fc)
                .map(|(c, f)| {
                    let s = data.score_scale(&c.plant_id);
                    crps_ensemble(f.scaled(s).values(), c.observation * s)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut by_time: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut by_cell: BTreeMap<(String, u32), Vec<usize>> = BTreeMap::new();
    for (i, c) in data.cases.iter().enumerate() {
        by_time.entry(c.time_of_day()).or_default().push(i);
        by_cell.entry((c.plant_id.clone(), c.time_of_day())).or_default().push(i);
    }
    let hhmm = |m: u32| format!("{:02}:{:02}", m / 60, m % 60);

    fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("ci.csv"))?;
    w.write_record(["method", "time", "n", "mean", "lo", "hi", "flag"])?;
    let mut stream = 0u64;
    for (mi, name) in names.iter().enumerate() {
        for (&t, idx) in &by_time {
            let values: Vec<f64> = idx.iter().map(|&i| scores[mi][i]).collect();
            let series = ScoreSeries::new(values, name.clone())?;
            let mean = series.mean().to_string();
            let rec = match block_bootstrap_ci(&series, 2000, 0.95, None, sub_seed(a.seed, stream)) {
                Ok(ci) => {
                    let flag = if ci.degenerate { "constant" } else { "" };
                    vec![name.clone(), hhmm(t), idx.len().to_string(), mean, ci.lo.to_string(), ci.hi.to_string(), flag.into()]
                }
                Err(Error::InsufficientData(_)) => {
                    vec![name.clone(), hhmm(t), idx.len().to_string(), mean, String::new(), String::new(), "too_few".into()]
                }
                Err(e) => return Err(e),
            };
            stream += 1;
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let cells: Vec<DmCell> = by_cell
        .iter()
        .map(|((plant, t), idx)| {
            let series = names
                .iter()
                .enumerate()
                .map(|(mi, name)| {
                    let v: Vec<f64> = idx.iter().map(|&i| scores[mi][i]).collect();
                    Ok((name.clone(), ScoreSeries::new(v, name.clone())?))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok(DmCell { key: format!("{plant}@{}", hhmm(*t)), series })
        })
        .collect::<Result<_>>()?;
    let m = dm_matrix(&names, &cells, 0.05)?;

    let mut w = csv::Writer::from_path(a.out.join("dm_proportions.csv"))?;
    let mut header = vec!["winner".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (i, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(m.proportions[i].iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(a.out.join("dm_counts.csv"))?;
    w.write_record(["winner", "loser", "tests", "degenerate", "skipped"])?;
    for (i, wi) in names.iter().enumerate() {
        for (j, lj) in names.iter().enumerate() {
            if i != j {
                w.write_record([
                    wi.clone(),
                    lj.clone(),
                    m.tests[i][j].to_string(),
                    m.degenerate[i][j].to_string(),
                    m.skipped[i][j].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_parsing() {
        assert_eq!(parse_window("06:00-16:00"), Ok((360, 960)));
        assert!(parse_window("16:00-06:00").is_err());
        assert!(parse_window("6-16").is_err());
        assert!(parse_window("25:00-26:00").is_err());
    }

    #[test]
    fn pred_parsing() {
        assert_eq!(parse_pred("qrnn=a/b.csv"), Ok(("qrnn".into(), PathBuf::from("a/b.csv"))));
        assert!(parse_pred("qrnn").is_err());
        assert!(parse_pred("=x").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["pvpost", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["pvpost", "train", "--input", "x.csv"]), EXIT_USAGE);
    }
}
