//! The seven model kinds behind one type: training on a dataset, prediction
//! to the 51-level grid, and JSON persistence.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::censored_normal::CensoredNormalParams;
use crate::dataset::{ensemble_stats, network_inputs, observations, split_five_day_blocks, Dataset, ForecastCase, SplitMode};
use crate::drn::{fit_drn, quantile_grid, DrnConfig, DrnModel};
use crate::emos::{
    boosted_covariates, fit_cn_emos_boosted, fit_emos_per_lead_time, predict_cn_emos, BoostConfig, BoostedEmosModel,
    EmosPerLeadTime, BOOSTED_COVARIATES,
};
use crate::error::{Error, Result};
use crate::neural::TrainHistory;
use crate::quantile_models::{
    fit_lqr, fit_quantile_net, hyperparameter_search, repair, BqnModel, HyperparamSpace, Hyperparams, LqrConfig, LqrModel,
    NcqrnnModel, NetKind, QrnnModel, QuantileNetModel, TrialRecord,
};
use crate::scoring::QuantileForecast;
use crate::sub_seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    CnEmos,
    CnEmosB,
    CnDrn,
    Lqr,
    Qrnn,
    Bqn,
    Ncqrnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::CnEmos,
        ModelKind::CnEmosB,
        ModelKind::CnDrn,
        ModelKind::Lqr,
        ModelKind::Qrnn,
        ModelKind::Bqn,
        ModelKind::Ncqrnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CnEmos => "cn-emos",
            ModelKind::CnEmosB => "cn-emos-b",
            ModelKind::CnDrn => "cn-drn",
            ModelKind::Lqr => "lqr",
            ModelKind::Qrnn => "qrnn",
            ModelKind::Bqn => "bqn",
            ModelKind::Ncqrnn => "ncqrnn",
        }
    }

    fn net_kind(self) -> Option<NetKind> {
        match self {
            ModelKind::Qrnn => Some(NetKind::Qrnn),
            ModelKind::Bqn => Some(NetKind::Bqn),
            ModelKind::Ncqrnn => Some(NetKind::Ncqrnn),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum TrainedModel {
    CnEmos(EmosPerLeadTime),
    CnEmosB(BoostedEmosModel),
    CnDrn(DrnModel),
    Lqr(LqrModel),
    Qrnn(QrnnModel),
    Bqn(BqnModel),
    Ncqrnn(NcqrnnModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: TrainedModel,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::CnEmos(_) => ModelKind::CnEmos,
            TrainedModel::CnEmosB(_) => ModelKind::CnEmosB,
            TrainedModel::CnDrn(_) => ModelKind::CnDrn,
            TrainedModel::Lqr(_) => ModelKind::Lqr,
            TrainedModel::Qrnn(_) => ModelKind::Qrnn,
            TrainedModel::Bqn(_) => ModelKind::Bqn,
            TrainedModel::Ncqrnn(_) => ModelKind::Ncqrnn,
        }
    }

    fn quantile_net(&self) -> Option<QuantileNetModel> {
        match self {
            TrainedModel::Qrnn(m) => Some(QuantileNetModel::Qrnn(m.clone())),
            TrainedModel::Bqn(m) => Some(QuantileNetModel::Bqn(m.clone())),
            TrainedModel::Ncqrnn(m) => Some(QuantileNetModel::Ncqrnn(m.clone())),
            _ => None,
        }
    }

    /// Censored-normal parameters for the parametric kinds, `None` otherwise.
    pub fn predict_params(&self, cases: &[ForecastCase]) -> Result<Option<Vec<CensoredNormalParams>>> {
        Ok(Some(match self {
            TrainedModel::CnEmos(m) => cases
                .iter()
                .map(|c| predict_cn_emos(m.coefficients(c.lead_time), &ensemble_stats(c)))
                .collect::<Result<_>>()?,
            TrainedModel::CnEmosB(m) => cases
                .iter()
                .map(|c| m.predict(&boosted_covariates(&ensemble_stats(c))))
                .collect::<Result<_>>()?,
            TrainedModel::CnDrn(m) => m.predict_batch(network_inputs(cases).view())?,
            _ => return Ok(None),
        }))
    }

    /// 51-level quantile forecasts, one per case, in case order.
    pub fn predict(&self, cases: &[ForecastCase]) -> Result<Vec<QuantileForecast>> {
        if let Some(params) = self.predict_params(cases)? {
            return params.into_iter().map(quantile_grid).collect();
        }
        if cases.is_empty() {
            return Ok(Vec::new());
        }
        let x = network_inputs(cases);
        match self {
            TrainedModel::Lqr(m) => {
                let raw = m.net.try_forward(x.view())?;
                raw.rows().into_iter().map(|r| repair(&r.to_vec())).collect()
            }
            _ => self.quantile_net().expect("network kind").predict_batch(x.view()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile { format_version: MODEL_FORMAT_VERSION, model: self.clone() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model format version {}", file.format_version)));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// The raw ensemble as a forecast: all 51 values sorted.
pub fn raw_ensemble_forecasts(cases: &[ForecastCase]) -> Result<Vec<QuantileForecast>> {
    cases.iter().map(|c| QuantileForecast::new(c.sorted_ensemble())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub seed: u64,
    /// Network hyperparameters for QRNN, BQN and NCQRNN when not searched.
    pub hyperparams: Hyperparams,
    /// Random-search budget (network kinds only).
    pub hp_search: Option<usize>,
    pub space: HyperparamSpace,
    pub drn: DrnConfig,
    pub lqr: LqrConfig,
    pub boost: BoostConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            hyperparams: Hyperparams::default(),
            hp_search: None,
            space: HyperparamSpace::default(),
            drn: DrnConfig::default(),
            lqr: LqrConfig::default(),
            boost: BoostConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Plain log lines without timestamps.
    pub log: Vec<String>,
    pub trials: Option<Vec<TrialRecord>>,
}

fn history_line(label: &str, h: &Option<TrainHistory>) -> Option<String> {
    h.as_ref().map(|h| {
        format!(
            "{label}: epochs {} best epoch {} best val loss {:.8}",
            h.epochs_run,
            h.best_epoch,
            h.val_loss.get(h.best_epoch.saturating_sub(1)).copied().unwrap_or(f64::NAN)
        )
    })
}

/// Trains one model kind. CN EMOS fits every lead time on all data; the
/// other kinds pool lead times and hold out every fifth day for validation.
/// With a search budget the network kinds first pick hyperparameters on the
/// five-day block split, then refit on the final split.
pub fn train_model(kind: ModelKind, data: &Dataset, opts: &TrainOptions) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no training cases".into()));
    }
    if opts.hp_search.is_some() && kind.net_kind().is_none() {
        return Err(Error::Config(format!("hyperparameter search applies to qrnn, bqn and ncqrnn, not {kind}")));
    }
    let mut log = vec![format!("model {kind}"), format!("seed {}", opts.seed), format!("cases {}", data.len())];
    if kind == ModelKind::CnEmos {
        let m = fit_emos_per_lead_time(data)?;
        log.push(format!("pooled: status {:?} crps {:.8}", m.pooled.status, m.pooled.mean_crps));
        for (lead, f) in &m.slots {
            log.push(format!(
                "lead {lead}: cases {} status {:?} iterations {} crps {:.8}",
                f.n_cases, f.status, f.iterations, f.mean_crps
            ));
        }
        return Ok(TrainOutcome { model: TrainedModel::CnEmos(m), log, trials: None });
    }
    let plan = split_five_day_blocks(data, SplitMode::Final)?;
    let train = data.subset(&plan.train_indices);
    let val = data.subset(&plan.validation_indices);
    log.push(format!("train {} validation {}", train.len(), val.len()));
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData("final split left an empty training or validation set".into()));
    }
    let (tx, ty) = (network_inputs(&train.cases), observations(&train.cases));
    let (vx, vy) = (network_inputs(&val.cases), observations(&val.cases));
    let mut trials = None;
    let model = match kind {
        ModelKind::CnEmos => unreachable!(),
        ModelKind::CnEmosB => {
            let rows = |d: &Dataset| -> Vec<(Vec<f64>, f64)> {
                d.cases.iter().map(|c| (boosted_covariates(&ensemble_stats(c)), c.observation)).collect()
            };
            let names: Vec<String> = BOOSTED_COVARIATES.iter().map(|s| s.to_string()).collect();
            let m = fit_cn_emos_boosted(&rows(&train), &rows(&val), &names, &opts.boost)?;
            log.push(format!(
                "status {:?} iterations {} selected {}",
                m.status,
                m.iterations_used,
                m.selection_order.join(",")
            ));
            TrainedModel::CnEmosB(m)
        }
        ModelKind::CnDrn => {
            let mut cfg = opts.drn.clone();
            cfg.train.seed = sub_seed(opts.seed, 1);
            let m = fit_drn((tx.view(), ty.view()), (vx.view(), vy.view()), &cfg)?;
            for (i, h) in m.histories.iter().enumerate() {
                log.extend(history_line(&format!("network {i}"), &Some(h.clone())));
            }
            TrainedModel::CnDrn(m)
        }
        ModelKind::Lqr => {
            let mut cfg = opts.lqr.clone();
            cfg.train.seed = sub_seed(opts.seed, 2);
            let m = fit_lqr((tx.view(), ty.view()), (vx.view(), vy.view()), &cfg)?;
            log.extend(history_line("lqr", &m.history));
            TrainedModel::Lqr(m)
        }
        ModelKind::Qrnn | ModelKind::Bqn | ModelKind::Ncqrnn => {
            let net_kind = kind.net_kind().expect("network kind");
            let hp = match opts.hp_search {
                Some(budget) => {
                    let sp = split_five_day_blocks(data, SplitMode::Search)?;
                    let part = |idx: &[usize]| {
                        let d = data.subset(idx);
                        (network_inputs(&d.cases), observations(&d.cases))
                    };
                    let (sx, sy) = part(&sp.train_indices);
                    let (svx, svy) = part(&sp.validation_indices);
                    let (hx, hy) = part(&sp.holdout_indices);
                    if sy.is_empty() || svy.is_empty() || hy.is_empty() {
                        return Err(Error::InsufficientData("search split left an empty subset".into()));
                    }
                    let res = hyperparameter_search(
                        net_kind,
                        &opts.space,
                        budget,
                        (sx.view(), sy.view()),
                        (svx.view(), svy.view()),
                        (hx.view(), hy.view()),
                        sub_seed(opts.seed, 3),
                    )?;
                    log.push(format!("search: {budget} trials, best trial {}", res.best_trial));
                    trials = Some(res.trials);
                    res.best
                }
                None => opts.hyperparams.clone(),
            };
            log.push(format!(
                "hyperparams: hidden {:?} activation {:?} lr {} batch {} patience {} degree {} nc width {}",
                hp.hidden_sizes, hp.activation, hp.learning_rate, hp.batch_size, hp.patience, hp.degree, hp.nc_width
            ));
            let m = fit_quantile_net(net_kind, (tx.view(), ty.view()), (vx.view(), vy.view()), &hp, sub_seed(opts.seed, 4))?;
            match m {
                QuantileNetModel::Qrnn(m) => {
                    log.extend(history_line("qrnn", &m.history));
                    TrainedModel::Qrnn(m)
                }
                QuantileNetModel::Bqn(m) => {
                    log.extend(history_line("bqn", &m.history));
                    TrainedModel::Bqn(m)
                }
                QuantileNetModel::Ncqrnn(m) => {
                    log.extend(history_line("ncqrnn", &m.history));
                    TrainedModel::Ncqrnn(m)
                }
            }
        }
    };
    Ok(TrainOutcome { model, log, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, SynthConfig};

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("emos".parse::<ModelKind>().is_err());
    }

    #[test]
    fn emos_json_round_trip_keeps_lead_times() {
        let d = synth_generate(&SynthConfig { days: 40, cases_per_day: 5, ..Default::default() }, 3).unwrap();
        let out = train_model(ModelKind::CnEmos, &d, &TrainOptions::default()).unwrap();
        let back = TrainedModel::from_json(&out.model.to_json().unwrap()).unwrap();
        assert_eq!(back, out.model);
        assert_eq!(back.predict(&d.cases).unwrap(), out.model.predict(&d.cases).unwrap());
    }

    #[test]
    fn search_flag_rejected_for_parametric_kinds() {
        let d = synth_generate(&SynthConfig { days: 10, ..Default::default() }, 3).unwrap();
        let opts = TrainOptions { hp_search: Some(2), ..Default::default() };
        assert!(matches!(train_model(ModelKind::CnEmos, &d, &opts), Err(Error::Config(_))));
    }

    #[test]
    fn raw_forecasts_are_sorted_ensembles() {
        let d = synth_generate(&SynthConfig { days: 1, cases_per_day: 3, ..Default::default() }, 1).unwrap();
        let raw = raw_ensemble_forecasts(&d.cases).unwrap();
        assert_eq!(raw[0].values(), d.cases[0].sorted_ensemble().as_slice());
    }
}
