//! Feedforward policy networks, experience replay and exploration noise.

mod explore;
mod net;
mod replay;

pub use explore::{explore, ExplorationSchedule};
pub use net::{clamp_prob, cross_entropy, sigmoid, Gradients, PolicyNet, PROB_CLAMP};
pub use replay::{ReplayMemory, Transition};
