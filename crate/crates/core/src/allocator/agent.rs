use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::downlink::{audit_downlink, select_downlink_action, DownlinkState};
use super::env::{random_powers, PretrainEnv};
use super::quantize::Quantizer;
use super::uplink::{audit_uplink, select_uplink_action, UplinkState};
use crate::config::Algorithm;
use crate::error::{Error, Result};
use crate::net_model::BeamformerSet;
use crate::policy::{explore, ExplorationSchedule, PolicyNet, ReplayMemory, Transition};
use crate::rng::{self, streams, SimRng};
use crate::SimConfig;

/// Quantiser used by a learned algorithm; `None` for the heuristic.
pub fn quantizer_for(alg: Algorithm) -> Option<Quantizer> {
    match alg {
        Algorithm::Proposed => Some(Quantizer::Threshold),
        Algorithm::Droo => Some(Quantizer::OrderPreserving),
        Algorithm::Knn => Some(Quantizer::Knn),
        Algorithm::Heuristic => None,
    }
}

pub fn uplink_dims(cfg: &SimConfig) -> [usize; 4] {
    let (n, j) = (cfg.num_users, cfg.num_aps);
    [UplinkState::dim(n, j), cfg.hidden1, cfg.hidden2, n * j]
}

pub fn downlink_dims(cfg: &SimConfig) -> [usize; 4] {
    let n = cfg.num_users;
    [
        DownlinkState::dim(n, cfg.num_aps, cfg.num_antennas),
        cfg.hidden1,
        cfg.hidden2,
        n,
    ]
}

/// Policy network with its replay memory, exploration schedule and the
/// training cadence.
#[derive(Debug, Clone)]
pub struct Learner {
    pub net: PolicyNet,
    pub memory: ReplayMemory<Transition>,
    pub schedule: ExplorationSchedule,
    pub batch_size: usize,
    pub train_interval: usize,
    /// Epochs seen so far, across episodes.
    pub epoch: u64,
    explore_rng: SimRng,
    replay_rng: SimRng,
}

impl Learner {
    fn new(
        cfg: &SimConfig,
        dims: [usize; 4],
        lr: f64,
        net_stream: u64,
        explore_stream: u64,
        replay_stream: u64,
    ) -> Self {
        Self {
            net: PolicyNet::xavier(dims, lr, &mut rng::stream(cfg.seed, net_stream)),
            memory: ReplayMemory::new(cfg.replay_capacity.max(1)),
            schedule: ExplorationSchedule::new(cfg.epsilon0, cfg.epsilon_decay, cfg.epsilon_floor, cfg.noise_var),
            batch_size: cfg.batch_size,
            train_interval: cfg.train_interval.max(1),
            epoch: 0,
            explore_rng: rng::stream(cfg.seed, explore_stream),
            replay_rng: rng::stream(cfg.seed, replay_stream),
        }
    }

    pub fn uplink(cfg: &SimConfig) -> Self {
        Self::new(
            cfg,
            uplink_dims(cfg),
            cfg.lr_ul,
            streams::UL_NET,
            streams::EXPLORE,
            streams::REPLAY,
        )
    }

    pub fn downlink(cfg: &SimConfig) -> Self {
        Self::new(
            cfg,
            downlink_dims(cfg),
            cfg.lr_dl,
            streams::DL_NET,
            streams::DL_EXPLORE,
            streams::DL_REPLAY,
        )
    }

    /// Relaxed action with exploration noise at the current `ε`.
    pub fn propose(&mut self, features: &[f64]) -> Result<Vec<f64>> {
        let relaxed = self.net.forward(features)?;
        Ok(explore(
            &relaxed,
            self.schedule.epsilon(),
            self.schedule.noise_var,
            &mut self.explore_rng,
        ))
    }

    /// Store the transition, train on a replay batch when due, and move the
    /// epoch counter and schedule forward. Returns the batch loss if trained.
    pub fn record(&mut self, t: Transition) -> Result<Option<f64>> {
        self.memory.push(t);
        self.epoch += 1;
        let mut loss = None;
        if self.memory.len() >= self.batch_size && self.epoch.is_multiple_of(self.train_interval as u64) {
            if let Some(batch) = self.memory.sample(self.batch_size, &mut self.replay_rng) {
                let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
                let actions: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
                loss = Some(self.net.train_step(&states, &actions)?);
            }
        }
        self.schedule.advance();
        Ok(loss)
    }
}

/// Cancel-and-penalise bookkeeping: a cancelled epoch earns its candidate
/// reward minus `ϖ` times the magnitude of the previous reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub weight: f64,
    /// Previous unpenalised reward, 1 before the first epoch.
    pub previous: f64,
}

impl Penalty {
    pub fn new(weight: f64) -> Self {
        Self { weight, previous: 1.0 }
    }

    pub fn settle(&mut self, reward: f64, cancelled: bool) -> f64 {
        let out = if cancelled {
            reward - self.weight * self.previous.abs()
        } else {
            reward
        };
        self.previous = reward;
        out
    }
}

/// Mean of the last `window` values.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    window: usize,
    values: VecDeque<f64>,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            values: VecDeque::new(),
        }
    }

    pub fn push(&mut self, v: f64) -> f64 {
        self.values.push_back(v);
        if self.values.len() > self.window {
            self.values.pop_front();
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub link: Link,
    pub episode: usize,
    pub epoch: usize,
    pub reward: f64,
    pub moving_avg: f64,
    pub loss: Option<f64>,
    pub cancelled: bool,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Uplink,
    Downlink,
}

/// Run the uplink DRL loop on `env` for `episodes × epochs_per_episode`
/// epochs.
pub fn train_uplink(
    cfg: &SimConfig,
    env: &mut PretrainEnv,
    learner: &mut Learner,
    quantizer: Quantizer,
) -> Result<Vec<EpochLog>> {
    let (n, j) = (cfg.num_users, cfg.num_aps);
    let capacity = cfg.decode_capacity;
    let hmd_max = cfg.hmd_max_power_w();
    let groups_per_slot = cfg.candidate_groups();
    let mut power_rng = rng::stream(cfg.seed, streams::INIT_POWER);
    let mut penalty = Penalty::new(cfg.penalty_weight);
    let mut avg = MovingAverage::new(cfg.moving_average_window);
    let mut logs = Vec::with_capacity(cfg.episodes * cfg.epochs_per_episode);
    let mut epoch_index = 0;
    for episode in 0..cfg.episodes {
        let mut powers = random_powers(cfg, n, &mut power_rng);
        let mut counts = vec![0.0; j];
        let mut slot = env.step(&powers)?;
        for _ in 0..cfg.epochs_per_episode {
            let state = UplinkState::new(counts.clone(), &slot.channels, powers.clone()).features(capacity, hmd_max);
            let epsilon = learner.schedule.epsilon();
            let relaxed = learner.propose(&state)?;
            let groups = quantizer.uplink(&relaxed, n, j, groups_per_slot).associations(n, j);
            let choice = select_uplink_action(&groups, &slot.channels, &slot.users, &env.radio)?;
            let executed = &choice.eval.decoded;
            let audit = audit_uplink(
                executed,
                &choice.eval.powers,
                &slot.channels,
                &slot.users,
                &env.radio,
                capacity,
            );
            let cancelled = !audit.ok();
            let reward = penalty.settle(choice.eval.reward, cancelled);
            let next_state = if cancelled {
                state.clone()
            } else {
                counts = (0..j).map(|a| executed.ap_load(a) as f64).collect();
                powers.clone_from(&choice.eval.powers);
                slot = env.step(&powers)?;
                UplinkState::new(counts.clone(), &slot.channels, powers.clone()).features(capacity, hmd_max)
            };
            let loss = learner.record(Transition {
                state,
                action: choice.group.as_f64(),
                next_state,
            })?;
            logs.push(EpochLog {
                link: Link::Uplink,
                episode,
                epoch: epoch_index,
                reward,
                moving_avg: avg.push(reward),
                loss,
                cancelled,
                epsilon,
            });
            epoch_index += 1;
        }
    }
    Ok(logs)
}

/// Seed for the randomised beam recovery at a given epoch or slot.
pub fn recovery_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index
}

/// Run the downlink DRL loop on `env`. The selected served set is the
/// training label; an all-infeasible slot falls back to serving nobody.
pub fn train_downlink(
    cfg: &SimConfig,
    env: &mut PretrainEnv,
    learner: &mut Learner,
    quantizer: Quantizer,
) -> Result<Vec<EpochLog>> {
    let n = cfg.num_users;
    let j = cfg.num_aps;
    let noise = env.radio.dl_noise_power();
    let groups_per_slot = cfg.candidate_groups();
    let zero_powers = vec![0.0; n];
    let mut penalty = Penalty::new(cfg.penalty_weight);
    let mut avg = MovingAverage::new(cfg.moving_average_window);
    let mut logs = Vec::with_capacity(cfg.episodes * cfg.epochs_per_episode);
    let mut epoch_index = 0u64;
    for episode in 0..cfg.episodes {
        let mut counts = vec![0.0; j];
        let mut beams = BeamformerSet::empty(n);
        let mut slot = env.step(&zero_powers)?;
        for _ in 0..cfg.epochs_per_episode {
            let state = DownlinkState::new(counts.clone(), &slot.channels, &beams).features(n, noise);
            let epsilon = learner.schedule.epsilon();
            let relaxed = learner.propose(&state)?;
            let groups = quantizer.downlink(&relaxed, groups_per_slot).groups;
            let choice = select_downlink_action(
                &groups,
                &slot.channels,
                &env.radio,
                &env.aps,
                cfg.randomization_candidates,
                recovery_seed(cfg.seed, epoch_index),
            )?;
            let audit = audit_downlink(
                &choice.eval.serve,
                &choice.eval.beams,
                &slot.channels,
                &env.radio,
                &env.aps,
            )?;
            let cancelled = !audit.ok();
            let reward = penalty.settle(choice.eval.reward, cancelled);
            let action: Vec<f64> = choice.eval.serve.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let next_state = if cancelled {
                state.clone()
            } else {
                let served = choice.eval.serve.iter().filter(|&&b| b).count() as f64;
                counts = vec![served; j];
                beams = choice.eval.beams.clone();
                slot = env.step(&zero_powers)?;
                DownlinkState::new(counts.clone(), &slot.channels, &beams).features(n, noise)
            };
            let loss = learner.record(Transition {
                state,
                action,
                next_state,
            })?;
            logs.push(EpochLog {
                link: Link::Downlink,
                episode,
                epoch: epoch_index as usize,
                reward,
                moving_avg: avg.push(reward),
                loss,
                cancelled,
                epsilon,
            });
            epoch_index += 1;
        }
    }
    Ok(logs)
}

/// Both trained policy networks of one learned algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPolicies {
    pub algorithm: Algorithm,
    pub uplink: PolicyNet,
    pub downlink: PolicyNet,
}

/// Pretrain both links of `alg` on independent copies of the synthetic
/// environment.
pub fn pretrain(cfg: &SimConfig, alg: Algorithm) -> Result<(TrainedPolicies, Vec<EpochLog>)> {
    let quantizer =
        quantizer_for(alg).ok_or_else(|| Error::config(format!("{} has no policy to train", alg.name())))?;
    let mut ul = Learner::uplink(cfg);
    let mut dl = Learner::downlink(cfg);
    let mut ul_env = PretrainEnv::new(cfg);
    let mut dl_env = PretrainEnv::new(cfg);
    let (ul_logs, dl_logs) = rayon::join(
        || train_uplink(cfg, &mut ul_env, &mut ul, quantizer),
        || train_downlink(cfg, &mut dl_env, &mut dl, quantizer),
    );
    let mut logs = ul_logs?;
    logs.extend(dl_logs?);
    Ok((
        TrainedPolicies {
            algorithm: alg,
            uplink: ul.net,
            downlink: dl.net,
        },
        logs,
    ))
}
