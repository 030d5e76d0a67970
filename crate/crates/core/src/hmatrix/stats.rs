use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl RankSummary {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        if ranks.is_empty() {
            return Self::default();
        }
        Self {
            min: *ranks.iter().min().unwrap(),
            max: *ranks.iter().max().unwrap(),
            mean: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub assembly_s: f64,
    pub lu_s: f64,
    pub solve_s: f64,
}

/// Memory accounting of an H-matrix. Mirror quadrants of symmetric
/// operators hold nothing and count for nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub n: usize,
    /// Scalars held in dense leaves plus `k(m+n)` per low-rank leaf.
    pub stored: usize,
    /// `n²`.
    pub dense: usize,
    pub ratio: f64,
    pub ranks: RankSummary,
    pub rank_histogram: BTreeMap<usize, usize>,
    pub dense_leaves: usize,
    pub lowrank_leaves: usize,
    pub queries: usize,
    pub unconverged_blocks: usize,
    pub times: Timings,
}

impl CompressionStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_summary() {
        let s = RankSummary::from_ranks(&[2, 4, 9]);
        assert_eq!((s.min, s.max), (2, 9));
        assert!((s.mean - 5.0).abs() < 1e-15);
        assert_eq!(RankSummary::from_ranks(&[]), RankSummary::default());
    }
}
