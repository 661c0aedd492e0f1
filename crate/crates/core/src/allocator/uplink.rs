use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{Association, ChannelRealization, RadioParams, UserState, SNR_REL_SLACK};

/// Uplink observation `[m_t; ĥ_t; p_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkState {
    /// Users decoded per AP.
    pub counts: Vec<f64>,
    /// `ĥ_ij`, row-major users × APs.
    pub pathloss: Vec<f64>,
    /// HMD transmit powers in watts.
    pub powers: Vec<f64>,
}

impl UplinkState {
    pub fn new(counts: Vec<f64>, channels: &ChannelRealization, powers: Vec<f64>) -> Self {
        Self {
            counts,
            pathloss: channels.ul_pathloss.iter().flatten().copied().collect(),
            powers,
        }
    }

    pub fn dim(users: usize, aps: usize) -> usize {
        aps + users * aps + users
    }

    /// Network input: counts over the decode capacity, path gain in dB
    /// shifted and scaled to order one, powers over the HMD maximum.
    pub fn features(&self, capacity: usize, hmd_max: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.counts.len() + self.pathloss.len() + self.powers.len());
        out.extend(self.counts.iter().map(|&c| c / capacity.max(1) as f64));
        out.extend(
            self.pathloss
                .iter()
                .map(|&h| (10.0 * h.max(1e-300).log10() + 100.0) / 25.0),
        );
        out.extend(self.powers.iter().map(|&p| p / hmd_max));
        out
    }
}

/// Transmit power each user needs to be decoded by its associated AP(s),
/// or 0 when that exceeds its budget `p̃ − p^c`.
pub fn uplink_power_closed_form(
    group: &Association,
    channels: &ChannelRealization,
    users: &[UserState],
    radio: &RadioParams,
) -> Vec<f64> {
    let n = group.users;
    (0..n)
        .map(|i| {
            let need: f64 = (0..group.aps)
                .filter(|&j| group.get(i, j))
                .map(|j| radio.ul_required_power(channels.ul_pathloss[i][j], n))
                .sum();
            let budget = users[i].tx_budget();
            // Budgets that miss the need by rounding still decode at the cap.
            if need <= budget * (1.0 + SNR_REL_SLACK) {
                need.min(budget)
            } else {
                0.0
            }
        })
        .collect()
}

/// Value of an uplink group and the pairs that actually decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkEval {
    pub reward: f64,
    pub decoded: Association,
    pub powers: Vec<f64>,
}

/// `B^ul(a) − Σ_ij a_ij (p_i + p_i^c)/p̃_i`, counting only pairs whose SNR
/// at the given powers reaches the threshold.
pub fn uplink_reward(
    group: &Association,
    powers: &[f64],
    channels: &ChannelRealization,
    users: &[UserState],
    radio: &RadioParams,
) -> Result<UplinkEval> {
    let n = group.users;
    if powers.len() != n || users.len() != n || channels.num_users() != n {
        return Err(Error::Dimension {
            expected: n,
            got: powers.len(),
        });
    }
    let noise = radio.noise_psd * radio.ul_bandwidth / n.max(1) as f64;
    let mut decoded = Association::empty(n, group.aps);
    let mut reward = 0.0;
    for i in 0..n {
        for j in 0..group.aps {
            if !group.get(i, j) || powers[i] <= 0.0 {
                continue;
            }
            let snr = powers[i] * radio.rayleigh_gain * channels.ul_pathloss[i][j] / noise;
            if snr >= radio.ul_snr_threshold * (1.0 - SNR_REL_SLACK) {
                decoded.set(i, j, true);
                reward += 1.0 / n as f64 - (powers[i] + users[i].hmd_circuit_power) / users[i].hmd_max_power;
            }
        }
    }
    let powers = (0..n)
        .map(|i| if decoded.user_count(i) > 0 { powers[i] } else { 0.0 })
        .collect();
    Ok(UplinkEval {
        reward,
        decoded,
        powers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkChoice {
    pub index: usize,
    /// The selected candidate as quantised.
    pub group: Association,
    pub eval: UplinkEval,
    /// Reward of every candidate, in candidate order.
    pub candidate_rewards: Vec<f64>,
}

/// Evaluate every candidate and keep the best; ties go to the lowest index.
pub fn select_uplink_action(
    groups: &[Association],
    channels: &ChannelRealization,
    users: &[UserState],
    radio: &RadioParams,
) -> Result<UplinkChoice> {
    if groups.is_empty() {
        return Err(Error::domain("no candidate uplink groups"));
    }
    let evals: Vec<UplinkEval> = groups
        .iter()
        .map(|g| {
            uplink_reward(
                g,
                &uplink_power_closed_form(g, channels, users, radio),
                channels,
                users,
                radio,
            )
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (v, e) in evals.iter().enumerate() {
        if e.reward > evals[best].reward {
            best = v;
        }
    }
    let candidate_rewards = evals.iter().map(|e| e.reward).collect();
    Ok(UplinkChoice {
        index: best,
        group: groups[best].clone(),
        eval: evals.into_iter().nth(best).expect("index in range"),
        candidate_rewards,
    })
}

/// Constraint audit of an uplink decision about to be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UplinkAudit {
    pub single_ap: bool,
    pub capacity: bool,
    pub hmd_power: bool,
    pub decode: bool,
}

impl UplinkAudit {
    pub fn ok(&self) -> bool {
        self.single_ap && self.capacity && self.hmd_power && self.decode
    }
}

/// Check `assoc` with `powers` against the per-user and per-AP limits and
/// the decode condition on `channels`.
pub fn audit_uplink(
    assoc: &Association,
    powers: &[f64],
    channels: &ChannelRealization,
    users: &[UserState],
    radio: &RadioParams,
    capacity: usize,
) -> UplinkAudit {
    let n = assoc.users;
    let noise = radio.noise_psd * radio.ul_bandwidth / n.max(1) as f64;
    let decode = (0..n).all(|i| {
        (0..assoc.aps).filter(|&j| assoc.get(i, j)).all(|j| {
            powers[i] * radio.rayleigh_gain * channels.ul_pathloss[i][j] / noise
                >= radio.ul_snr_threshold * (1.0 - SNR_REL_SLACK)
        })
    });
    UplinkAudit {
        single_ap: assoc.single_ap_per_user(),
        capacity: assoc.within_capacity(capacity),
        hmd_power: (0..n).all(|i| powers[i] >= 0.0 && powers[i] <= users[i].tx_budget()),
        decode,
    }
}
