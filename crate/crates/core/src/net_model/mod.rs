//! Physical layer and objective of the CoMP mmWave VR network: uplink
//! decoding, sectored antennas, body blockage, LoS/NLoS downlink channels,
//! CoMP downlink rate, feeling-of-presence terms and power constraints.
//!
//! All quantities are linear (watts, ratios, metres, radians).

mod channel;
mod geometry;
mod objective;
mod rate;

pub use channel::{dl_channel, dl_channel_from_draws, ChannelRealization, LinkDraws, NetworkScene, SmallScaleDraws};
pub use geometry::{
    antenna_gain, blockage, boresight_point, distance_3d, interferers, orientation_angle, tilt_angle, ul_decodes,
    ul_pathloss, ul_snr, DirectionTracker, SNR_REL_SLACK,
};
pub use objective::{
    ap_power_check, hmd_power_check, objective_summary, slot_fop, slot_power_term, Association, ObjectiveSummary,
    SlotOutcome,
};
pub use rate::{dl_rate, dl_rate_met, hermitian_trace_product, received_power, BeamformerSet, SINR_REL_SLACK};

use serde::{Deserialize, Serialize};

/// Access point geometry, antenna pattern and power limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub position: [f64; 2],
    pub antenna_height: f64,
    pub downtilt: f64,
    pub mainlobe_gain: f64,
    pub sidelobe_gain: f64,
    pub beamwidth: f64,
    pub num_elements: usize,
    /// Maximum instantaneous power `Ẽ_j` (W).
    pub max_power: f64,
    /// Circuit power `E_j^c` (W).
    pub circuit_power: f64,
    pub decode_capacity: usize,
}

impl ApConfig {
    /// Power available for beamforming, `Ẽ_j − E_j^c`.
    pub fn tx_budget(&self) -> f64 {
        self.max_power - self.circuit_power
    }
}

/// One user (HMD) at one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub position: [f64; 2],
    pub height: f64,
    /// Displacement since the previous slot (the position itself at the
    /// first slot).
    pub direction: [f64; 2],
    pub hmd_tx_power: f64,
    pub hmd_circuit_power: f64,
    pub hmd_max_power: f64,
}

impl UserState {
    pub fn tx_budget(&self) -> f64 {
        self.hmd_max_power - self.hmd_circuit_power
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub carrier_freq: f64,
    pub light_speed: f64,
    /// Noise spectral density `N_0` (W/Hz).
    pub noise_psd: f64,
    pub ul_bandwidth: f64,
    pub dl_bandwidth: f64,
    pub ul_snr_threshold: f64,
    pub dl_rate_threshold: f64,
    pub ul_fading_exponent: f64,
    /// Rayleigh gain `c_ij`, shared by every user-AP pair.
    pub rayleigh_gain: f64,
    pub pathloss_exp_los: f64,
    pub pathloss_exp_nlos: f64,
    /// Shadowing variances in dB².
    pub shadow_var_los: f64,
    pub shadow_var_nlos: f64,
    pub blockage_angle: f64,
    pub interference_radius: f64,
    pub area_center: [f64; 2],
}

impl RadioParams {
    /// Downlink noise power `N_0 W^dl`.
    pub fn dl_noise_power(&self) -> f64 {
        self.noise_psd * self.dl_bandwidth
    }

    /// Linear SINR target `2^{γ^th / W^dl} − 1` equivalent to the rate
    /// threshold.
    pub fn dl_sinr_target(&self) -> f64 {
        (self.dl_rate_threshold / self.dl_bandwidth).exp2() - 1.0
    }

    /// Uplink transmit power needed to reach the SNR threshold at path gain
    /// `pathloss` with `n_users` sharing the band.
    pub fn ul_required_power(&self, pathloss: f64, n_users: usize) -> f64 {
        self.ul_snr_threshold * self.noise_psd * self.ul_bandwidth / (n_users as f64 * self.rayleigh_gain * pathloss)
    }
}
