//! Dynamic late fusion: leader election, soft pseudo-labels, and the
//! MAP-gap gate.
//!
//! For each sample the classifier with the highest MAP score (the maximum
//! entry of its probability row) becomes the leader and supplies both the
//! prediction and the pseudo-label. A follower only learns from that label
//! when the leader out-confides it by at least θ, so near-ties, uncertain
//! leaders, and the leader itself never trigger updates.

use crate::error::{Error, Result};
use crate::Branch;

/// Sparse pseudo-label: descending fixed weights on the leader's top-n
/// classes, summing to 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SoftLabel {
    positions: Vec<usize>,
    weights: Vec<f64>,
    num_classes: usize,
}

impl SoftLabel {
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// Expand to a dense row of length `num_classes`.
    pub fn densify(&self) -> Vec<f64> {
        let mut row = vec![0.0; self.num_classes];
        for (&c, &w) in self.positions.iter().zip(&self.weights) {
            row[c] = w;
        }
        row
    }
}

/// Index of the row maximum; ties resolve to the lower index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Leader election result: the winning branch and every branch's MAP score.
#[derive(Debug, Clone, PartialEq)]
pub struct Election {
    pub leader: Branch,
    pub leader_map: f64,
    pub maps: Vec<(Branch, f64)>,
}

/// Pick the branch whose probability row has the largest maximum entry.
/// Exact ties go to the higher-priority branch (fused > video > audio).
pub fn elect_leader(prob_rows: &[(Branch, &[f64])]) -> Result<Election> {
    if prob_rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut maps = Vec::with_capacity(prob_rows.len());
    let mut leader = prob_rows[0].0;
    let mut leader_map = f64::NEG_INFINITY;
    for &(branch, row) in prob_rows {
        let map = row[argmax(row)];
        maps.push((branch, map));
        if map > leader_map || (map == leader_map && branch.priority() > leader.priority()) {
            leader = branch;
            leader_map = map;
        }
    }
    Ok(Election {
        leader,
        leader_map,
        maps,
    })
}

/// Build the top-n soft pseudo-label from the leader's probability row.
/// Weight i (1-based) is `(n+1−i) / (n(n+1)/2)`, an exact fraction, so the
/// weights decrease strictly and sum to 1. Position ties resolve to the
/// lower class index.
pub fn build_soft_label(leader_probs: &[f64], n: usize) -> Result<SoftLabel> {
    let num_classes = leader_probs.len();
    if n == 0 || n > num_classes {
        return Err(Error::InvalidN { n, num_classes });
    }
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| {
        leader_probs[b]
            .total_cmp(&leader_probs[a])
            .then(a.cmp(&b))
    });
    order.truncate(n);
    let denom = (n * (n + 1) / 2) as f64;
    let weights = (1..=n).map(|i| (n + 1 - i) as f64 / denom).collect();
    Ok(SoftLabel {
        positions: order,
        weights,
        num_classes,
    })
}

/// The gate: accept exactly when the leader leads by at least θ.
pub fn gate(leader_map: f64, ac_map: f64, theta: f64) -> bool {
    leader_map - ac_map >= theta
}

/// One gate evaluation, kept for the event log.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GateDecision {
    pub ac_id: Branch,
    pub leader_map: f64,
    pub ac_map: f64,
    pub accepted: bool,
}

pub fn gate_decision(ac_id: Branch, leader_map: f64, ac_map: f64, theta: f64) -> GateDecision {
    GateDecision {
        ac_id,
        leader_map,
        ac_map,
        accepted: gate(leader_map, ac_map, theta),
    }
}

/// Per-classifier thresholds, optionally drifting with the mean MAP gap.
///
/// With λ = 0 every θ stays pinned at θ_ini, which is the default; the
/// dynamic variant tracks the change in the batch-mean gap `d_t` per
/// classifier: `θ_t = θ_{t−1} + λ(d_t − d_{t−1})`, with the first batch only
/// recording `d`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ThresholdState {
    theta_ini: f64,
    lambda: f64,
    theta: [f64; 3],
    prev_gap: [Option<f64>; 3],
}

impl ThresholdState {
    pub fn new(theta_ini: f64, lambda: f64) -> ThresholdState {
        ThresholdState {
            theta_ini,
            lambda,
            theta: [theta_ini; 3],
            prev_gap: [None; 3],
        }
    }

    /// Rebuild from persisted per-branch thetas. Gap history is not part of
    /// the snapshot format, so the next batch is treated as a first batch.
    pub fn with_thetas(theta_ini: f64, lambda: f64, theta: [f64; 3]) -> ThresholdState {
        ThresholdState {
            theta_ini,
            lambda,
            theta,
            prev_gap: [None; 3],
        }
    }

    pub fn theta_ini(&self) -> f64 {
        self.theta_ini
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self, branch: Branch) -> f64 {
        self.theta[branch.code() as usize]
    }

    pub fn thetas(&self) -> [f64; 3] {
        self.theta
    }

    /// Fold in one batch's leader−follower gaps for `branch`. Every sample
    /// in the batch counts, accepted or not.
    pub fn update(&mut self, branch: Branch, batch_gaps: &[f64]) -> Result<()> {
        if batch_gaps.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let d = batch_gaps.iter().sum::<f64>() / batch_gaps.len() as f64;
        let slot = branch.code() as usize;
        if let Some(prev) = self.prev_gap[slot] {
            self.theta[slot] += self.lambda * (d - prev);
        }
        self.prev_gap[slot] = Some(d);
        Ok(())
    }
}
