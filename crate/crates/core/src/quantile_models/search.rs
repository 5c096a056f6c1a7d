use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_bqn, fit_ncqrnn, fit_qrnn, repair, BqnModel, HyperparamSpace, Hyperparams, NcqrnnModel, QrnnModel,
};
use crate::error::{Error, Result};
use crate::scoring::crps::crps_sorted;
use crate::scoring::QuantileForecast;
use crate::sub_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Qrnn,
    Bqn,
    Ncqrnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuantileNetModel {
    Qrnn(QrnnModel),
    Bqn(BqnModel),
    Ncqrnn(NcqrnnModel),
}

pub fn fit_quantile_net(
    kind: NetKind,
    train: (ArrayView2<f64>, ArrayView1<f64>),
    val: (ArrayView2<f64>, ArrayView1<f64>),
    hp: &Hyperparams,
    seed: u64,
) -> Result<QuantileNetModel> {
    Ok(match kind {
        NetKind::Qrnn => QuantileNetModel::Qrnn(fit_qrnn(train, val, hp, seed)?),
        NetKind::Bqn => QuantileNetModel::Bqn(fit_bqn(train, val, hp, seed)?),
        NetKind::Ncqrnn => QuantileNetModel::Ncqrnn(fit_ncqrnn(train, val, hp, seed)?),
    })
}

impl QuantileNetModel {
    /// Forecasts for every input row: QRNN outputs are repaired, the
    /// structurally monotone models are only clipped.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<QuantileForecast>> {
        let raw = match self {
            QuantileNetModel::Qrnn(m) => m.net.try_forward(inputs)?,
            QuantileNetModel::Bqn(m) => m.try_forward(inputs)?,
            QuantileNetModel::Ncqrnn(m) => m.try_forward(inputs)?,
        };
        raw.rows()
            .into_iter()
            .map(|r| match self {
                QuantileNetModel::Qrnn(_) => repair(r.as_slice().expect("standard layout")),
                _ => QuantileForecast::new(r.iter().map(|v| v.clamp(0.0, 1.0)).collect()),
            })
            .collect()
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        match self {
            QuantileNetModel::Qrnn(m) => &m.hyperparams,
            QuantileNetModel::Bqn(m) => &m.hyperparams,
            QuantileNetModel::Ncqrnn(m) => &m.hyperparams,
        }
    }
}

/// Mean CRPS of quantile forecasts read as equally weighted ensembles.
pub(crate) fn mean_quantile_crps(forecasts: &[QuantileForecast], obs: ArrayView1<f64>) -> f64 {
    forecasts.iter().zip(obs).map(|(f, &y)| crps_sorted(f.values(), y)).sum::<f64>() / obs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub hyperparams: Hyperparams,
    pub holdout_crps: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Hyperparams,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

/// Seeded random search. Hyperparameters are drawn sequentially from one
/// stream so the trial sequence does not depend on scheduling; trials then
/// train in parallel, and the one with the lowest holdout CRPS wins (ties go
/// to the earlier trial).
pub fn hyperparameter_search(
    kind: NetKind,
    space: &HyperparamSpace,
    budget: usize,
    train: (ArrayView2<f64>, ArrayView1<f64>),
    val: (ArrayView2<f64>, ArrayView1<f64>),
    holdout: (ArrayView2<f64>, ArrayView1<f64>),
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<Hyperparams> = (0..budget).map(|_| space.sample(&mut rng)).collect();
    let trials: Vec<TrialRecord> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(trial, hp)| {
            let outcome = fit_quantile_net(kind, train, val, &hp, sub_seed(seed, trial as u64))
                .and_then(|m| m.predict_batch(holdout.0))
                .map(|f| mean_quantile_crps(&f, holdout.1));
            match outcome {
                Ok(crps) if crps.is_finite() => TrialRecord { trial, hyperparams: hp, holdout_crps: Some(crps), error: None },
                Ok(_) => TrialRecord { trial, hyperparams: hp, holdout_crps: None, error: Some("non-finite holdout CRPS".into()) },
                Err(e) => TrialRecord { trial, hyperparams: hp, holdout_crps: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let best = trials
        .iter()
        .filter_map(|t| t.holdout_crps.map(|c| (t.trial, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    match best {
        Some((best_trial, _)) => Ok(SearchResult { best: trials[best_trial].hyperparams.clone(), best_trial, trials }),
        None => Err(Error::Training(format!(
            "all {budget} trials failed; first error: {}",
            trials[0].error.as_deref().unwrap_or("unknown")
        ))),
    }
}

/// Writes one CSV row per trial.
pub fn write_trial_log(trials: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "trial",
        "hidden_sizes",
        "activation",
        "learning_rate",
        "batch_size",
        "patience",
        "max_epochs",
        "degree",
        "nc_width",
        "holdout_crps",
        "error",
    ])?;
    for t in trials {
        let hp = &t.hyperparams;
        w.write_record([
            t.trial.to_string(),
            hp.hidden_sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";"),
            hp.activation.name().to_string(),
            hp.learning_rate.to_string(),
            hp.batch_size.to_string(),
            hp.patience.to_string(),
            hp.max_epochs.to_string(),
            hp.degree.to_string(),
            hp.nc_width.to_string(),
            t.holdout_crps.map(|c| c.to_string()).unwrap_or_default(),
            t.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
