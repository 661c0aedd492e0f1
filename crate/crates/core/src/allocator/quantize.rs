use serde::{Deserialize, Serialize};

use crate::harness::baselines::{baseline_knn, baseline_order_preserving};
use crate::net_model::Association;

/// Candidate binary actions from one relaxed output. Uplink groups are
/// `N·J` bits in row-major `(user, AP)` order, downlink groups `N` bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGroupSet {
    pub groups: Vec<Vec<bool>>,
    /// Ascending reference thresholds `b̄`; empty for the baseline schemes.
    pub thresholds: Vec<f64>,
}

impl ActionGroupSet {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Groups read as `users × aps` associations.
    pub fn associations(&self, users: usize, aps: usize) -> Vec<Association> {
        self.groups
            .iter()
            .map(|g| Association {
                users,
                aps,
                bits: g.clone(),
            })
            .collect()
    }
}

/// Group 1 at 0.5, groups `v ≥ 2` at the `(v−1)`-th ascending value, all
/// with strict `>`.
fn threshold_groups(scores: &[f64], count: usize) -> (Vec<Vec<bool>>, Vec<f64>) {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::with_capacity(count);
    groups.push(scores.iter().map(|&a| a > 0.5).collect());
    for v in 2..=count {
        let Some(&b) = sorted.get(v - 2) else { break };
        groups.push(scores.iter().map(|&a| a > b).collect());
    }
    (groups, sorted)
}

/// Per-user maxima `â_i`, thresholded into `count` groups; each selected
/// user is placed on its argmax AP.
pub fn quantize_uplink(relaxed: &[f64], users: usize, aps: usize, count: usize) -> ActionGroupSet {
    assert_eq!(relaxed.len(), users * aps, "relaxed action must be users × aps");
    let rows: Vec<&[f64]> = relaxed.chunks(aps).collect();
    let best: Vec<(usize, f64)> = rows
        .iter()
        .map(|r| {
            r.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc },
            )
        })
        .collect();
    let maxima: Vec<f64> = best.iter().map(|b| b.1).collect();
    let (picks, thresholds) = threshold_groups(&maxima, count);
    let groups = picks
        .into_iter()
        .map(|pick| {
            let mut bits = vec![false; users * aps];
            for (i, &on) in pick.iter().enumerate() {
                if on {
                    bits[i * aps + best[i].0] = true;
                }
            }
            bits
        })
        .collect();
    ActionGroupSet { groups, thresholds }
}

/// Same thresholding on the per-user serve probabilities, without the AP
/// step.
pub fn quantize_downlink(relaxed: &[f64], count: usize) -> ActionGroupSet {
    let (groups, thresholds) = threshold_groups(relaxed, count);
    ActionGroupSet { groups, thresholds }
}

/// Which quantisation scheme turns the relaxed output into candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantizer {
    Threshold,
    OrderPreserving,
    Knn,
}

impl Quantizer {
    pub fn uplink(self, relaxed: &[f64], users: usize, aps: usize, count: usize) -> ActionGroupSet {
        match self {
            Quantizer::Threshold => quantize_uplink(relaxed, users, aps, count),
            Quantizer::OrderPreserving => baseline_order_preserving(relaxed, count),
            Quantizer::Knn => baseline_knn(relaxed, count),
        }
    }

    pub fn downlink(self, relaxed: &[f64], count: usize) -> ActionGroupSet {
        match self {
            Quantizer::Threshold => quantize_downlink(relaxed, count),
            Quantizer::OrderPreserving => baseline_order_preserving(relaxed, count),
            Quantizer::Knn => baseline_knn(relaxed, count),
        }
    }
}
