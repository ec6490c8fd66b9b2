//! Topic alignment: total-variation distance between word distributions and
//! minimum-cost matching of estimated topics to reference topics.
//!
//! Independently trained samplers settle into arbitrary topic labelings, so
//! any cross-model comparison of topic-word rows must first match rows. The
//! matching minimizes the summed total-variation distance via the Hungarian
//! algorithm.

use crate::error::{Error, Result};

/// Half the L1 distance between two probability vectors; 0 for identical
/// distributions, 1 for disjoint support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Minimum-cost assignment on a square cost matrix; returns `assign` with
/// `assign[row] = col`. Shortest-augmenting-path formulation with row and
/// column potentials, O(n^3).
pub fn hungarian_min_cost(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidArgument(
            "cost matrix must be square".into(),
        ));
    }
    if cost
        .iter()
        .any(|row| row.iter().any(|c| !c.is_finite()))
    {
        return Err(Error::InvalidArgument(
            "cost matrix entries must be finite".into(),
        ));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // 1-based arrays; index 0 is the virtual unassigned slot.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row
    for row in 1..=n {
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut slack_from = vec![0usize; n + 1];
        let mut visited = vec![false; n + 1];
        let mut col = 0usize;
        matched_row[0] = row;
        loop {
            visited[col] = true;
            let r = matched_row[col];
            let mut delta = f64::INFINITY;
            let mut next_col = 0;
            for c in 1..=n {
                if visited[c] {
                    continue;
                }
                let reduced = cost[r - 1][c - 1] - u[r] - v[c];
                if reduced < min_slack[c] {
                    min_slack[c] = reduced;
                    slack_from[c] = col;
                }
                if min_slack[c] < delta {
                    delta = min_slack[c];
                    next_col = c;
                }
            }
            for c in 0..=n {
                if visited[c] {
                    u[matched_row[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_slack[c] -= delta;
                }
            }
            col = next_col;
            if matched_row[col] == 0 {
                break;
            }
        }
        // Augment along the alternating path.
        while col != 0 {
            let prev = slack_from[col];
            matched_row[col] = matched_row[prev];
            col = prev;
        }
    }

    let mut assign = vec![0usize; n];
    for c in 1..=n {
        assign[matched_row[c] - 1] = c - 1;
    }
    Ok(assign)
}

/// Result of matching estimated topic rows to reference rows.
#[derive(Debug, Clone)]
pub struct TopicMatch {
    /// `permutation[t]` is the reference row matched to estimated row `t`.
    /// Relabeling the estimate with this permutation aligns it to the
    /// reference.
    pub permutation: Vec<usize>,
    /// Total-variation distance per matched pair.
    pub row_tv: Vec<f64>,
    /// Mean of `row_tv`.
    pub mean_tv: f64,
}

/// Match rows of `phi_est` to rows of `phi_ref`, minimizing the summed
/// total-variation distance.
pub fn match_topics(phi_est: &[Vec<f64>], phi_ref: &[Vec<f64>]) -> Result<TopicMatch> {
    if phi_est.len() != phi_ref.len() {
        return Err(Error::LengthMismatch(format!(
            "estimate has {} topics, reference has {}",
            phi_est.len(),
            phi_ref.len()
        )));
    }
    let cost: Vec<Vec<f64>> = phi_est
        .iter()
        .map(|est| phi_ref.iter().map(|re| tv_distance(est, re)).collect())
        .collect();
    let permutation = hungarian_min_cost(&cost)?;
    let row_tv: Vec<f64> = permutation
        .iter()
        .enumerate()
        .map(|(t, &r)| cost[t][r])
        .collect();
    let mean_tv = row_tv.iter().sum::<f64>() / row_tv.len().max(1) as f64;
    Ok(TopicMatch {
        permutation,
        row_tv,
        mean_tv,
    })
}
