use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// How whole days are assigned to subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Per five-day block: days 1–3 train, day 4 validation, day 5 holdout.
    Search,
    /// Every fifth day validation, the rest training; no holdout.
    Final,
}

/// Disjoint case-index sets, each covering whole calendar days.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
}

/// Assigns days by their calendar offset from the first day in the data, so
/// gaps do not shift the block pattern.
pub fn split_five_day_blocks(d: &Dataset, mode: SplitMode) -> Result<SplitPlan> {
    let first = d.cases.iter().map(|c| c.timestamp.date_naive()).min();
    let last = d.cases.iter().map(|c| c.timestamp.date_naive()).max();
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InsufficientData("empty dataset cannot be split".into())),
    };
    let span = day_offset(first, last) + 1;
    if span < 5 {
        return Err(Error::InsufficientData(format!(
            "five-day block split needs at least 5 days, data spans {span}"
        )));
    }
    let mut plan = SplitPlan::default();
    for (i, c) in d.cases.iter().enumerate() {
        let pos = day_offset(first, c.timestamp.date_naive()) % 5;
        let bucket = match (mode, pos) {
            (SplitMode::Search, 0..=2) => &mut plan.train_indices,
            (SplitMode::Search, 3) => &mut plan.validation_indices,
            (SplitMode::Search, _) => &mut plan.holdout_indices,
            (SplitMode::Final, 4) => &mut plan.validation_indices,
            (SplitMode::Final, _) => &mut plan.train_indices,
        };
        bucket.push(i);
    }
    Ok(plan)
}

fn day_offset(first: NaiveDate, d: NaiveDate) -> usize {
    (d - first).num_days() as usize
}
