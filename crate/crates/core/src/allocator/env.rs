use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::harness::traces::{synth_traces, TraceSet, WaypointParams};
use crate::net_model::{
    ApConfig, ChannelRealization, DirectionTracker, NetworkScene, RadioParams, SmallScaleDraws, UserState,
};
use crate::rng::{self, streams, SimRng};
use crate::SimConfig;

/// Per-user heights drawn once per run.
pub fn sample_heights(cfg: &SimConfig, users: usize) -> Vec<f64> {
    let mut r = rng::stream(cfg.seed, streams::HEIGHTS);
    let normal = Normal::new(cfg.user_height_mean_m, cfg.user_height_var_m2.max(0.0).sqrt())
        .expect("finite height distribution");
    (0..users).map(|_| normal.sample(&mut r).max(0.1)).collect()
}

/// User states at one slot with the given headings and uplink powers.
pub fn user_states(
    cfg: &SimConfig,
    positions: &[[f64; 2]],
    heights: &[f64],
    directions: &[[f64; 2]],
    powers: &[f64],
) -> Vec<UserState> {
    positions
        .iter()
        .enumerate()
        .map(|(i, &p)| UserState {
            position: p,
            height: heights[i],
            direction: directions[i],
            hmd_tx_power: powers[i],
            hmd_circuit_power: cfg.hmd_circuit_power_w(),
            hmd_max_power: cfg.hmd_max_power_w(),
        })
        .collect()
}

/// Uniform initial uplink powers in `[0, p̃ − p^c]`.
pub fn random_powers<R: Rng + ?Sized>(cfg: &SimConfig, users: usize, rng: &mut R) -> Vec<f64> {
    let budget = cfg.hmd_tx_budget_w();
    (0..users).map(|_| rng.random::<f64>() * budget).collect()
}

/// One slot of the pretraining world.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub users: Vec<UserState>,
    pub channels: ChannelRealization,
}

/// Pretraining environment: a pool of synthetic trajectory slots walked in
/// order (wrapping), with a fresh small-scale draw every step.
#[derive(Debug, Clone)]
pub struct PretrainEnv {
    pub cfg: SimConfig,
    pub aps: Vec<ApConfig>,
    pub radio: RadioParams,
    traces: TraceSet,
    heights: Vec<f64>,
    tracker: DirectionTracker,
    channel_rng: SimRng,
    frozen: Option<SmallScaleDraws>,
    cursor: usize,
}

impl PretrainEnv {
    pub fn new(cfg: &SimConfig) -> Self {
        let n = cfg.num_users;
        let slots = cfg.pretrain_realizations.max(1);
        let traces = synth_traces(
            n,
            slots,
            &WaypointParams::from_config(cfg),
            &mut rng::stream(cfg.seed, streams::PRETRAIN_TRACES),
        );
        Self {
            cfg: cfg.clone(),
            aps: cfg.aps(),
            radio: cfg.radio(),
            traces,
            heights: sample_heights(cfg, n),
            tracker: DirectionTracker::new(),
            channel_rng: rng::stream(cfg.seed, streams::PRETRAIN_CHANNEL),
            frozen: None,
            cursor: 0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.cfg.num_users
    }

    /// Realisations in the pool.
    pub fn pool_size(&self) -> usize {
        self.traces.num_slots()
    }

    /// Advance one slot; `powers` become the users' current uplink powers.
    pub fn step(&mut self, powers: &[f64]) -> Result<EnvSlot> {
        let t = self.cursor % self.traces.num_slots().max(1);
        if t == 0 {
            self.tracker = DirectionTracker::new();
        }
        self.cursor += 1;
        let positions = self.traces.at(t);
        let directions = self.tracker.update(&positions);
        let users = user_states(&self.cfg, &positions, &self.heights, &directions, powers);
        let scene = NetworkScene {
            aps: self.aps.clone(),
            users,
            radio: self.radio.clone(),
        };
        let mut draws = SmallScaleDraws::sample(
            self.num_users(),
            self.cfg.num_aps,
            self.cfg.num_antennas,
            &mut self.channel_rng,
        );
        if self.cfg.freeze_shadowing {
            match &self.frozen {
                Some(f) => draws = draws.with_frozen_shadowing(f),
                None => self.frozen = Some(draws.clone()),
            }
        }
        let channels = scene.realize(&draws)?;
        Ok(EnvSlot {
            users: scene.users,
            channels,
        })
    }
}
