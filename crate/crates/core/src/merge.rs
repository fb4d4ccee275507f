//! The merge step: local labels are nodes of a graph, and two labels join
//! when the positive edge votes between them strictly outnumber the negative
//! ones. Evidence is folded forward so a chain of merges can pull in labels
//! that had no direct support.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::local_cluster::{LabelImage, VotingMatrices};

/// Operation counts of one merge step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MergeStats {
    /// Number of `pos > neg` comparisons.
    pub vote_evals: usize,
    /// Number of accepted merges, each folding one row of both matrices.
    pub row_folds: usize,
    /// Matrix entries touched by row folding.
    pub fold_ops: usize,
}

impl MergeStats {
    pub fn operations(&self) -> usize {
        self.vote_evals + self.fold_ops
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeResult {
    /// Final 1-based instance for each 0-based local label.
    pub merged_label_list: Vec<u32>,
    pub n_instances: usize,
    pub stats: MergeStats,
}

impl MergeResult {
    /// Final instance of 1-based local label `label`; 0 stays 0.
    pub fn map(&self, label: u32) -> u32 {
        if label == 0 {
            0
        } else {
            self.merged_label_list[label as usize - 1]
        }
    }
}

/// Computes the local-to-final label mapping.
///
/// Clusters are opened from the lowest unconsumed local label and grown
/// breadth-first. When `target` absorbs `query`, the target's rows of both
/// matrices are added into the query's rows, so the query carries the
/// cluster's accumulated evidence when it is expanded in turn. The caller's
/// matrices are left untouched.
pub fn merge_mapping(votes: &VotingMatrices) -> Result<MergeResult> {
    merge_mapping_owned(votes.clone())
}

/// [`merge_mapping`] that folds into the given matrices instead of copies.
pub fn merge_mapping_owned(votes: VotingMatrices) -> Result<MergeResult> {
    let m = votes.plus.dim();
    if votes.minus.dim() != m {
        return Err(Error::DimensionMismatch {
            rows: m,
            cols: m,
            actual_rows: votes.minus.dim(),
            actual_cols: votes.minus.dim(),
        });
    }

    let VotingMatrices { mut plus, mut minus } = votes;
    let mut merged = vec![0u32; m];
    let mut stats = MergeStats::default();
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut queue = VecDeque::new();
    let mut current = 0u32;

    while !remaining.is_empty() {
        current += 1;
        let first = remaining.remove(0);
        merged[first] = current;
        queue.push_back(first);

        while let Some(target) = queue.pop_front() {
            remaining.retain(|&query| {
                stats.vote_evals += 1;
                if plus.get(target, query) > minus.get(target, query) {
                    merged[query] = current;
                    queue.push_back(query);
                    plus.fold_row(target, query);
                    minus.fold_row(target, query);
                    stats.row_folds += 1;
                    stats.fold_ops += 2 * m;
                    false
                } else {
                    true
                }
            });
        }
    }

    Ok(MergeResult {
        merged_label_list: merged,
        n_instances: current as usize,
        stats,
    })
}

/// Merges local labels and rewrites `labels` to final instance ids
/// `1..=n_instances`. Unlabeled pixels stay 0.
pub fn vote_and_merge(votes: &VotingMatrices, labels: &LabelImage) -> Result<(LabelImage, MergeResult)> {
    vote_and_merge_owned(votes.clone(), labels)
}

/// [`vote_and_merge`] that consumes the matrices.
pub fn vote_and_merge_owned(votes: VotingMatrices, labels: &LabelImage) -> Result<(LabelImage, MergeResult)> {
    let m = votes.plus.dim();
    let max = labels.max_label();
    if max as usize > m {
        return Err(Error::LabelOutOfRange { label: max, m });
    }
    let mapping = merge_mapping_owned(votes)?;
    let mut out = labels.clone();
    for l in out.as_mut_slice() {
        *l = mapping.map(*l);
    }
    Ok((out, mapping))
}
