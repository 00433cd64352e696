use serde::{Deserialize, Serialize};

use crate::dataset::ImageId;
use crate::scoring::{MatchOutcome, SpecKey};

/// Top negative (x) against top positive (y) for one scored reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub reference: ImageId,
    pub spec: SpecKey,
    /// `None` when the reference had no negative candidates at all.
    pub top_negative: Option<f64>,
    pub top_positive: f64,
}

impl ScatterPoint {
    /// On or below y = x. Ties sit on the diagonal and count as failures.
    pub fn below_diagonal(&self) -> bool {
        self.top_negative.is_some_and(|x| self.top_positive <= x)
    }
}

pub fn scatter_data(outcomes: &[MatchOutcome]) -> Vec<ScatterPoint> {
    outcomes
        .iter()
        .map(|o| ScatterPoint {
            reference: o.reference.clone(),
            spec: o.spec.clone(),
            top_negative: o.top_negative.as_ref().map(|m| m.score),
            top_positive: o.top_positive.score,
        })
        .collect()
}

/// Fraction of points below the diagonal per spec, in first-seen order.
pub fn below_diagonal_rates(points: &[ScatterPoint]) -> Vec<(SpecKey, f64)> {
    let mut tally: Vec<(SpecKey, usize, usize)> = Vec::new();
    for p in points {
        let i = match tally.iter().position(|(k, _, _)| *k == p.spec) {
            Some(i) => i,
            None => {
                tally.push((p.spec.clone(), 0, 0));
                tally.len() - 1
            }
        };
        tally[i].1 += usize::from(p.below_diagonal());
        tally[i].2 += 1;
    }
    tally
        .into_iter()
        .map(|(k, below, n)| (k, below as f64 / n as f64))
        .collect()
}
