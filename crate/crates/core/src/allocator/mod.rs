//! Two-timescale uplink association and downlink beamforming allocation.

pub mod agent;
pub mod downlink;
pub mod env;
pub mod orchestrate;
pub mod quantize;
pub mod uplink;

pub use agent::{
    pretrain, quantizer_for, train_downlink, train_uplink, EpochLog, Learner, Link, MovingAverage, Penalty,
    TrainedPolicies,
};
pub use downlink::{
    audit_downlink, downlink_reward, select_downlink_action, DownlinkAudit, DownlinkChoice, DownlinkEval, DownlinkState,
};
pub use env::PretrainEnv;
pub use orchestrate::{
    forecast, orchestrate, slot_world, AllocationDecision, Forecast, Planner, SlotInputs, SlotWorld,
};
pub use quantize::{quantize_downlink, quantize_uplink, ActionGroupSet, Quantizer};
pub use uplink::{
    audit_uplink, select_uplink_action, uplink_power_closed_form, uplink_reward, UplinkAudit, UplinkChoice, UplinkEval,
    UplinkState,
};
