use serde::{Deserialize, Serialize};

use super::rate::BeamformerSet;
use super::{ApConfig, UserState};
use crate::error::{Error, Result};

/// Binary user-to-AP uplink association, row-major `N × J`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Association {
    pub users: usize,
    pub aps: usize,
    pub bits: Vec<bool>,
}

impl Association {
    pub fn empty(users: usize, aps: usize) -> Self {
        Self {
            users,
            aps,
            bits: vec![false; users * aps],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let aps = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != aps) {
            return Err(Error::Dimension {
                expected: aps,
                got: r.len(),
            });
        }
        Ok(Self {
            users: rows.len(),
            aps,
            bits: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.aps + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.aps + j] = v;
    }

    /// The AP user `i` is associated with, if exactly one.
    pub fn ap_of(&self, i: usize) -> Option<usize> {
        let mut it = (0..self.aps).filter(|&j| self.get(i, j));
        match (it.next(), it.next()) {
            (Some(j), None) => Some(j),
            _ => None,
        }
    }

    pub fn user_count(&self, i: usize) -> usize {
        (0..self.aps).filter(|&j| self.get(i, j)).count()
    }

    pub fn ap_load(&self, j: usize) -> usize {
        (0..self.users).filter(|&i| self.get(i, j)).count()
    }

    pub fn total(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Every user is associated with at most one AP.
    pub fn single_ap_per_user(&self) -> bool {
        (0..self.users).all(|i| self.user_count(i) <= 1)
    }

    /// No AP decodes more than `capacity` users.
    pub fn within_capacity(&self, capacity: usize) -> bool {
        (0..self.aps).all(|j| self.ap_load(j) <= capacity)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// What was actually executed in one slot: successful uplink associations,
/// served downlink users and HMD transmit powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub ul_assoc: Association,
    pub dl_serve: Vec<bool>,
    pub hmd_power: Vec<f64>,
    pub hmd_circuit: Vec<f64>,
    pub hmd_max: Vec<f64>,
}

/// Per-slot presence terms `(B^ul, B^dl)`: fraction of users decoded in the
/// uplink and fraction served in the downlink.
pub fn slot_fop(outcome: &SlotOutcome) -> (f64, f64) {
    let n = outcome.ul_assoc.users;
    if n == 0 {
        return (0.0, 0.0);
    }
    let ul = outcome.ul_assoc.total() as f64 / n as f64;
    let dl = outcome.dl_serve.iter().filter(|&&a| a).count() as f64 / n as f64;
    (ul, dl)
}

/// `Σ_i Σ_j a_ij (p_i + p_i^c) / p̃_i`.
pub fn slot_power_term(outcome: &SlotOutcome) -> f64 {
    let a = &outcome.ul_assoc;
    (0..a.users)
        .map(|i| a.user_count(i) as f64 * (outcome.hmd_power[i] + outcome.hmd_circuit[i]) / outcome.hmd_max[i])
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveSummary {
    pub slots: usize,
    pub mean_fop_ul: f64,
    pub mean_fop_dl: f64,
    /// Time-averaged presence `B̄(T)`.
    pub mean_fop: f64,
    pub mean_power_term: f64,
    pub objective: f64,
}

/// Time-averaged presence minus the normalised HMD energy term over a
/// window of slots. An empty window gives all zeros.
pub fn objective_summary(window: &[SlotOutcome]) -> ObjectiveSummary {
    if window.is_empty() {
        return ObjectiveSummary::default();
    }
    let t = window.len() as f64;
    let (mut ul, mut dl, mut pw) = (0.0, 0.0, 0.0);
    for o in window {
        let (u, d) = slot_fop(o);
        ul += u;
        dl += d;
        pw += slot_power_term(o);
    }
    ObjectiveSummary {
        slots: window.len(),
        mean_fop_ul: ul / t,
        mean_fop_dl: dl / t,
        mean_fop: (ul + dl) / t,
        mean_power_term: pw / t,
        objective: (ul + dl - pw) / t,
    }
}

/// Per-AP power constraint `Σ_i a_i tr(Z_j G_i) + E_j^c ≤ Ẽ_j`, with a
/// relative slack of 1e-9 for round-off.
pub fn ap_power_check(serve: &[bool], beams: &BeamformerSet, aps: &[ApConfig]) -> Vec<bool> {
    aps.iter()
        .enumerate()
        .map(|(j, ap)| {
            let tx: f64 = serve
                .iter()
                .enumerate()
                .filter(|&(_, &a)| a)
                .map(|(i, _)| beams.ap_power(i, j, ap.num_elements))
                .sum();
            tx + ap.circuit_power <= ap.max_power * (1.0 + 1e-9)
        })
        .collect()
}

/// HMD power constraint `p + p^c ≤ p̃` (closed).
pub fn hmd_power_check(user: &UserState) -> bool {
    user.hmd_tx_power >= 0.0 && user.hmd_tx_power <= user.tx_budget()
}
