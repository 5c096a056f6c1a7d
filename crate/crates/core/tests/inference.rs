use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pvpost::inference::{benjamini_hochberg, dm_matrix, DmCell, ScoreSeries};

#[test]
fn bh_rejections_grow_with_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0f64..1.0).powi(3)).collect();
    let mut last = 0;
    for alpha in [0.001, 0.01, 0.05, 0.1, 0.2, 0.5] {
        let r = benjamini_hochberg(&p, alpha).unwrap();
        let n = r.iter().filter(|&&x| x).count();
        assert!(n >= last);
        last = n;
    }
    assert!(last > 0);
}

#[test]
fn grid_of_seven_plants_by_forty_one_times() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let methods: Vec<String> = ["good", "bad", "same"].iter().map(|s| s.to_string()).collect();
    let mut cells = Vec::new();
    for plant in 0..7 {
        for slot in 0..41 {
            let base: Vec<f64> = (0..120).map(|_| 1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
            let bad: Vec<f64> = base.iter().map(|v| v + 0.5 + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut series = BTreeMap::new();
            series.insert("good".to_string(), ScoreSeries::new(base.clone(), "good").unwrap());
            series.insert("same".to_string(), ScoreSeries::new(base, "same").unwrap());
            series.insert("bad".to_string(), ScoreSeries::new(bad, "bad").unwrap());
            cells.push(DmCell { key: format!("p{plant}/{slot}"), series });
        }
    }
    let m = dm_matrix(&methods, &cells, 0.05).unwrap();
    let (good, bad, same) = (0, 1, 2);
    assert_eq!(m.tests[good][bad] + m.degenerate[good][bad], 287);
    assert_eq!(m.tests[good][bad], 287);
    assert!(m.proportions[good][bad] > 0.95);
    assert_eq!(m.proportions[bad][good], 0.0);
    assert_eq!(m.degenerate[good][same], 287);
    assert_eq!(m.proportions[good][same], 0.0);
    assert!(m.skipped.iter().flatten().all(|&s| s == 0));
}
