//! Discrete-time simulator and resource allocator for a CoMP-enabled mmWave
//! VR network.
//!
//! The crate is organised bottom-up:
//!
//! * [`net_model`]: uplink/downlink physical layer, feeling-of-presence
//!   objective and power constraints.
//! * [`esn`]: echo state network trajectory prediction trained by parallel
//!   dual coordinate ascent.
//! * [`policy`]: feedforward policy networks, replay memory and exploration.
//! * [`sdp`]: small dense complex SDP solver for downlink power control plus
//!   rank-one beamformer recovery.
//! * [`allocator`]: action quantisation, rewards, DRL training loops and the
//!   per-slot orchestration.
//! * [`harness`]: traces, baselines, experiments and report output.

pub mod allocator;
pub mod config;
pub mod error;
pub mod esn;
pub mod harness;
pub mod net_model;
pub mod policy;
pub mod rng;
pub mod sdp;
pub mod units;

pub use config::{Algorithm, InputFrame, SimConfig};
pub use error::{Error, Result};
