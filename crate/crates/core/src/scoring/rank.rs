use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankHistogram {
    /// Counts for ranks 1…K+1.
    pub counts: Vec<usize>,
    /// Reliability index Σ |ρ_r − 1/(K+1)|.
    pub ri: f64,
}

impl RankHistogram {
    pub fn frequencies(&self) -> Vec<f64> {
        let n: usize = self.counts.iter().sum();
        self.counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
    }
}

/// Verification rank histogram. An observation tied with members gets a
/// uniformly drawn rank among the admissible ones.
pub fn rank_histogram<E: AsRef<[f64]>>(ensembles: &[E], obs: &[f64], seed: u64) -> Result<RankHistogram> {
    if ensembles.is_empty() || ensembles.len() != obs.len() {
        return domain("rank histogram needs equal, non-empty inputs");
    }
    let k = ensembles[0].as_ref().len();
    if k == 0 || ensembles.iter().any(|e| e.as_ref().len() != k) {
        return domain("all ensembles must have the same non-zero size");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; k + 1];
    for (e, &y) in ensembles.iter().zip(obs) {
        let mut less = 0;
        let mut equal = 0;
        for &m in e.as_ref() {
            if m < y {
                less += 1;
            } else if m == y {
                equal += 1;
            }
        }
        let offset = if equal > 0 { rng.gen_range(0..=equal) } else { 0 };
        counts[less + offset] += 1;
    }
    let n = obs.len() as f64;
    let uniform = 1.0 / (k + 1) as f64;
    let ri = counts.iter().map(|&c| (c as f64 / n - uniform).abs()).sum();
    Ok(RankHistogram { counts, ri })
}
