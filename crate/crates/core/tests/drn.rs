use pvpost::dataset::{synth_generate, Dataset, SynthConfig};
use pvpost::drn::{drn_quantiles, fit_drn, DrnConfig};
use pvpost::dataset::{network_inputs, observations};
use pvpost::model::{train_model, ModelKind, TrainOptions};
use pvpost::scoring::crps_ensemble;

fn cn_data(days: usize, seed: u64) -> Dataset {
    synth_generate(&SynthConfig { days, bias: 0.1, deflation: 0.5, weather: 0.6, ..Default::default() }, seed).unwrap()
}

fn score(kind: ModelKind, train: &Dataset, test: &Dataset) -> f64 {
    let m = train_model(kind, train, &TrainOptions { seed: 7, ..Default::default() }).unwrap().model;
    let f = m.predict(&test.cases).unwrap();
    f.iter().zip(&test.cases).map(|(q, c)| crps_ensemble(q.values(), c.observation).unwrap()).sum::<f64>()
        / test.len() as f64
}

#[test]
fn bqn_matches_drn_when_the_truth_is_censored_normal() {
    let train = cn_data(100, 21);
    let test = cn_data(30, 22);
    let drn = score(ModelKind::CnDrn, &train, &test);
    let bqn = score(ModelKind::Bqn, &train, &test);
    assert!((bqn - drn).abs() / drn < 0.05, "drn {drn} bqn {bqn}");
}

#[test]
fn averaged_networks_are_seed_deterministic() {
    let d = cn_data(20, 23);
    let (x, y) = (network_inputs(&d.cases), observations(&d.cases));
    let n = x.nrows();
    let cfg = DrnConfig { n_networks: 3, ..Default::default() };
    let fit = || fit_drn((x.view(), y.view()), (x.slice(ndarray::s![..n / 5, ..]), y.slice(ndarray::s![..n / 5])), &cfg).unwrap();
    let (a, b) = (fit(), fit());
    assert_eq!(a, b);
    assert_eq!(a.networks.len(), 3);
    assert_ne!(a.networks[0].params, a.networks[1].params);
    let q = drn_quantiles(&a, x.row(100).as_slice().unwrap()).unwrap();
    assert!(q.values().windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn zero_networks_is_rejected() {
    let d = cn_data(10, 24);
    let (x, y) = (network_inputs(&d.cases), observations(&d.cases));
    let cfg = DrnConfig { n_networks: 0, ..Default::default() };
    assert!(fit_drn((x.view(), y.view()), (x.view(), y.view()), &cfg).is_err());
}
