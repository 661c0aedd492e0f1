use serde::{Deserialize, Serialize};

use super::agent::{quantizer_for, recovery_seed, Penalty, TrainedPolicies};
use super::downlink::{audit_downlink, select_downlink_action, DownlinkAudit, DownlinkState};
use super::env::{sample_heights, user_states};
use super::quantize::Quantizer;
use super::uplink::{audit_uplink, select_uplink_action, uplink_reward, UplinkAudit, UplinkState};
use crate::config::Algorithm;
use crate::error::{Error, Result};
use crate::esn::{nrmse, FleetPredictor, Nrmse};
use crate::harness::baselines::{baseline_greedy_downlink, baseline_greedy_uplink};
use crate::harness::traces::TraceSet;
use crate::net_model::{
    ApConfig, Association, BeamformerSet, ChannelRealization, DirectionTracker, NetworkScene, RadioParams, SlotOutcome,
    SmallScaleDraws, UserState, SNR_REL_SLACK,
};
use crate::policy::{explore, ExplorationSchedule};
use crate::rng::{self, streams, SimRng};
use crate::SimConfig;

/// Geometry and small-scale draws of one slot, shared by every algorithm
/// in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotInputs {
    pub slot: usize,
    pub truth: Vec<[f64; 2]>,
    pub truth_dirs: Vec<[f64; 2]>,
    /// Positions the decision is planned on.
    pub planned: Vec<[f64; 2]>,
    pub planned_dirs: Vec<[f64; 2]>,
    pub draws: SmallScaleDraws,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub inputs: Vec<SlotInputs>,
    pub heights: Vec<f64>,
    /// Per-user NRMSE of planned against true positions over slots `≥ M`;
    /// empty when no slot was predicted.
    pub nrmse: Vec<Nrmse>,
    pub retrains: usize,
}

/// Walk the traces, feed each slot to the ESN fleet (retraining every
/// `T_pr` slots) and record the `M`-step prediction for each later slot.
/// Slot `τ` is planned from observations up to `max(0, τ − M)`. With `M = 0`
/// the truth is used directly.
pub fn forecast(cfg: &SimConfig, traces: &TraceSet) -> Result<Forecast> {
    let n = traces.num_users();
    let slots = traces.num_slots();
    let m = cfg.horizon;
    if slots == 0 {
        return Ok(Forecast {
            inputs: Vec::new(),
            heights: sample_heights(cfg, n),
            nrmse: Vec::new(),
            retrains: 0,
        });
    }
    let mut channel_rng = rng::stream(cfg.seed, streams::EVAL_CHANNEL);
    let mut draws: Vec<SmallScaleDraws> = Vec::with_capacity(slots);
    for _ in 0..slots {
        let d = SmallScaleDraws::sample(n, cfg.num_aps, cfg.num_antennas, &mut channel_rng);
        let d = match (cfg.freeze_shadowing, draws.first()) {
            (true, Some(first)) => d.with_frozen_shadowing(first),
            _ => d,
        };
        draws.push(d);
    }
    let mut tracker = DirectionTracker::new();
    let truth_dirs: Vec<Vec<[f64; 2]>> = (0..slots).map(|t| tracker.update(&traces.at(t))).collect();

    let mut planned: Vec<Option<(Vec<[f64; 2]>, Vec<[f64; 2]>)>> = vec![None; slots];
    let mut retrains = 0;
    if m == 0 {
        for t in 0..slots {
            planned[t] = Some((traces.at(t), truth_dirs[t].clone()));
        }
    } else {
        let mut fleet = FleetPredictor::from_config(cfg, n);
        let interval = cfg.esn_retrain_interval.max(1);
        for s in 0..slots {
            let obs = traces.at(s);
            fleet.observe(&obs)?;
            if s % interval == 0 && fleet.retrain()? > 0 {
                retrains += 1;
            }
            let targets: Vec<usize> = if s == 0 {
                (0..=m.min(slots - 1)).collect()
            } else {
                vec![s + m]
            };
            for tau in targets.into_iter().filter(|&tau| tau < slots) {
                let steps = tau - s;
                let pos = fleet.predict_at(steps)?;
                let dirs = pos
                    .iter()
                    .zip(&obs)
                    .zip(&truth_dirs[s])
                    .map(|((p, o), d)| {
                        let v = [p[0] - o[0], p[1] - o[1]];
                        if v[0] == 0.0 && v[1] == 0.0 {
                            *d
                        } else {
                            v
                        }
                    })
                    .collect();
                planned[tau] = Some((pos, dirs));
            }
        }
    }

    let mut per_user_pred = vec![Vec::new(); n];
    let mut per_user_truth = vec![Vec::new(); n];
    let inputs: Vec<SlotInputs> = planned
        .into_iter()
        .zip(draws)
        .enumerate()
        .map(|(t, (p, d))| {
            let (pos, dirs) = p.expect("every slot planned");
            let truth = traces.at(t);
            if m > 0 && t >= m {
                for i in 0..n {
                    per_user_pred[i].push(pos[i]);
                    per_user_truth[i].push(truth[i]);
                }
            }
            SlotInputs {
                slot: t,
                truth,
                truth_dirs: truth_dirs[t].clone(),
                planned: pos,
                planned_dirs: dirs,
                draws: d,
            }
        })
        .collect();
    let nrmse = if per_user_pred.first().is_some_and(|v| !v.is_empty()) {
        per_user_pred
            .iter()
            .zip(&per_user_truth)
            .map(|(p, t)| nrmse(p, t))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(Forecast {
        inputs,
        heights: sample_heights(cfg, n),
        nrmse,
        retrains,
    })
}

/// Executed allocation of one slot after reconciliation with the true
/// channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub slot: usize,
    pub ul_assoc: Association,
    pub dl_serve: Vec<bool>,
    pub hmd_power: Vec<f64>,
    pub beams: BeamformerSet,
    /// Uplink reward of the executed association on the true channel.
    pub ul_reward: f64,
    /// Served fraction of the executed downlink.
    pub dl_reward: f64,
    pub ul_penalty: f64,
    pub dl_penalty: f64,
    /// Plan violated a constraint and was not executed.
    pub ul_cancelled: bool,
    pub dl_cancelled: bool,
    /// Planned users that failed on the true channel.
    pub ul_dropped: Vec<usize>,
    pub dl_dropped: Vec<usize>,
    pub ul_audit: UplinkAudit,
    pub dl_audit: DownlinkAudit,
    pub planned_positions: Vec<[f64; 2]>,
    pub dl_numerical_failures: usize,
}

impl AllocationDecision {
    pub fn outcome(&self, cfg: &SimConfig) -> SlotOutcome {
        let n = self.hmd_power.len();
        SlotOutcome {
            ul_assoc: self.ul_assoc.clone(),
            dl_serve: self.dl_serve.clone(),
            hmd_power: self.hmd_power.clone(),
            hmd_circuit: vec![cfg.hmd_circuit_power_w(); n],
            hmd_max: vec![cfg.hmd_max_power_w(); n],
        }
    }
}

/// How each slot's plan is produced.
#[derive(Debug, Clone)]
pub enum Planner {
    Learned {
        policies: Box<TrainedPolicies>,
        quantizer: Quantizer,
    },
    Heuristic,
}

impl Planner {
    pub fn for_algorithm(alg: Algorithm, policies: Option<TrainedPolicies>) -> Result<Self> {
        match (quantizer_for(alg), policies) {
            (None, _) => Ok(Planner::Heuristic),
            (Some(quantizer), Some(p)) => Ok(Planner::Learned {
                policies: Box::new(p),
                quantizer,
            }),
            (Some(_), None) => Err(Error::Untrained("learned algorithm needs trained policies")),
        }
    }
}

/// The two channel views of one slot.
pub struct SlotWorld {
    pub planned_users: Vec<UserState>,
    pub planned: ChannelRealization,
    pub truth_users: Vec<UserState>,
    pub truth: ChannelRealization,
}

pub fn slot_world(
    cfg: &SimConfig,
    aps: &[ApConfig],
    radio: &RadioParams,
    heights: &[f64],
    input: &SlotInputs,
    powers: &[f64],
) -> Result<SlotWorld> {
    let scene = |pos: &[[f64; 2]], dirs: &[[f64; 2]]| NetworkScene {
        aps: aps.to_vec(),
        users: user_states(cfg, pos, heights, dirs, powers),
        radio: radio.clone(),
    };
    let ps = scene(&input.planned, &input.planned_dirs);
    let ts = scene(&input.truth, &input.truth_dirs);
    Ok(SlotWorld {
        planned: ps.realize(&input.draws)?,
        planned_users: ps.users,
        truth: ts.realize(&input.draws)?,
        truth_users: ts.users,
    })
}

/// Keep the planned pairs that still decode on the true channel.
fn reconcile_uplink(
    plan: &Association,
    powers: &[f64],
    truth: &ChannelRealization,
    radio: &RadioParams,
) -> (Association, Vec<f64>, Vec<usize>) {
    let n = plan.users;
    let noise = radio.noise_psd * radio.ul_bandwidth / n.max(1) as f64;
    let mut kept = Association::empty(n, plan.aps);
    let mut out = vec![0.0; n];
    let mut dropped = Vec::new();
    for i in 0..n {
        let Some(j) = plan.ap_of(i) else { continue };
        let snr = powers[i] * radio.rayleigh_gain * truth.ul_pathloss[i][j] / noise;
        if powers[i] > 0.0 && snr >= radio.ul_snr_threshold * (1.0 - SNR_REL_SLACK) {
            kept.set(i, j, true);
            out[i] = powers[i];
        } else {
            dropped.push(i);
        }
    }
    (kept, out, dropped)
}

/// Drop served users whose rate fails on the true channel until the rest
/// all pass. Removing a user only removes interference, so this settles.
fn reconcile_downlink(
    serve: &[bool],
    beams: &BeamformerSet,
    truth: &ChannelRealization,
    radio: &RadioParams,
    aps: &[ApConfig],
) -> Result<(Vec<bool>, BeamformerSet, Vec<usize>, DownlinkAudit)> {
    let mut serve = serve.to_vec();
    let mut beams = beams.clone();
    let mut dropped = Vec::new();
    loop {
        let audit = audit_downlink(&serve, &beams, truth, radio, aps)?;
        if audit.rate_failures.is_empty() {
            return Ok((serve, beams, dropped, audit));
        }
        for &i in &audit.rate_failures {
            serve[i] = false;
            beams.beams[i] = None;
            beams.grams[i] = None;
            dropped.push(i);
        }
    }
}

/// Carry-over between slots.
struct Carry {
    ul_counts: Vec<f64>,
    powers: Vec<f64>,
    dl_counts: Vec<f64>,
    beams: BeamformerSet,
    ul_penalty: Penalty,
    dl_penalty: Penalty,
}

/// Run the allocation over every slot of `forecast`. Learned planners run
/// frozen unless `explore_online` is set, in which case noise stays at the
/// floor `ε`.
pub fn orchestrate(cfg: &SimConfig, forecast: &Forecast, planner: &Planner) -> Result<Vec<AllocationDecision>> {
    let n = forecast.heights.len();
    let j = cfg.num_aps;
    let aps = cfg.aps();
    let radio = cfg.radio();
    let capacity = cfg.decode_capacity;
    let groups_per_slot = cfg.candidate_groups();
    let mut explore_state: Option<(ExplorationSchedule, SimRng)> = cfg.explore_online.then(|| {
        (
            ExplorationSchedule::new(cfg.epsilon_floor, 1.0, cfg.epsilon_floor, cfg.noise_var),
            rng::stream(cfg.seed, streams::EXPLORE),
        )
    });
    let mut carry = Carry {
        ul_counts: vec![0.0; j],
        powers: vec![0.0; n],
        dl_counts: vec![0.0; j],
        beams: BeamformerSet::empty(n),
        ul_penalty: Penalty::new(cfg.penalty_weight),
        dl_penalty: Penalty::new(cfg.penalty_weight),
    };
    let mut out = Vec::with_capacity(forecast.inputs.len());
    for input in &forecast.inputs {
        let world = slot_world(cfg, &aps, &radio, &forecast.heights, input, &carry.powers)?;
        let seed = recovery_seed(cfg.seed, input.slot as u64);

        // Plans on the predicted channel.
        let (ul_plan, ul_powers, dl_serve, dl_beams, dl_failures) = match planner {
            Planner::Learned { policies, quantizer } => {
                let mut perturb = |relaxed: Vec<f64>| match explore_state.as_mut() {
                    Some((s, r)) => explore(&relaxed, s.epsilon(), s.noise_var, r),
                    None => relaxed,
                };
                let s_ul = UplinkState::new(carry.ul_counts.clone(), &world.planned, carry.powers.clone())
                    .features(capacity, cfg.hmd_max_power_w());
                let relaxed = perturb(policies.uplink.forward(&s_ul)?);
                let groups = quantizer.uplink(&relaxed, n, j, groups_per_slot).associations(n, j);
                let ul = select_uplink_action(&groups, &world.planned, &world.planned_users, &radio)?;

                let s_dl = DownlinkState::new(carry.dl_counts.clone(), &world.planned, &carry.beams)
                    .features(n, radio.dl_noise_power());
                let relaxed = perturb(policies.downlink.forward(&s_dl)?);
                let groups = quantizer.downlink(&relaxed, groups_per_slot).groups;
                let dl = select_downlink_action(
                    &groups,
                    &world.planned,
                    &radio,
                    &aps,
                    cfg.randomization_candidates,
                    seed,
                )?;
                (
                    ul.eval.decoded,
                    ul.eval.powers,
                    dl.eval.serve,
                    dl.eval.beams,
                    dl.numerical_failures,
                )
            }
            Planner::Heuristic => {
                let ul = baseline_greedy_uplink(&world.planned, &world.planned_users, &radio, capacity)?;
                let dl = baseline_greedy_downlink(&world.planned, &radio, &aps, cfg.randomization_candidates, seed)?;
                (ul.eval.decoded, ul.eval.powers, dl.serve, dl.beams, 0)
            }
        };
        if let Some((s, _)) = explore_state.as_mut() {
            s.advance();
        }

        // Uplink: cancel a plan that breaks a constraint, otherwise keep
        // what decodes on the true channel.
        let plan_audit = audit_uplink(
            &ul_plan,
            &ul_powers,
            &world.planned,
            &world.planned_users,
            &radio,
            capacity,
        );
        let ul_cancelled = !plan_audit.ok();
        let (ul_assoc, hmd_power, ul_dropped) = if ul_cancelled {
            (Association::empty(n, j), vec![0.0; n], Vec::new())
        } else {
            reconcile_uplink(&ul_plan, &ul_powers, &world.truth, &radio)
        };
        let executed_users = user_states(cfg, &input.truth, &forecast.heights, &input.truth_dirs, &hmd_power);
        let ul_reward = uplink_reward(&ul_assoc, &hmd_power, &world.truth, &executed_users, &radio)?.reward;
        let ul_audit = audit_uplink(&ul_assoc, &hmd_power, &world.truth, &executed_users, &radio, capacity);
        let ul_settled = carry
            .ul_penalty
            .settle(ul_reward, ul_cancelled || !ul_dropped.is_empty());

        // Downlink.
        let dl_plan_audit = audit_downlink(&dl_serve, &dl_beams, &world.planned, &radio, &aps)?;
        let dl_cancelled = !dl_plan_audit.ok();
        let (dl_serve, beams, dl_dropped, dl_audit) = if dl_cancelled {
            let empty = vec![false; n];
            let b = BeamformerSet::empty(n);
            let a = audit_downlink(&empty, &b, &world.truth, &radio, &aps)?;
            (empty, b, Vec::new(), a)
        } else {
            reconcile_downlink(&dl_serve, &dl_beams, &world.truth, &radio, &aps)?
        };
        let served = dl_serve.iter().filter(|&&b| b).count();
        let dl_reward = served as f64 / n.max(1) as f64;
        let dl_settled = carry
            .dl_penalty
            .settle(dl_reward, dl_cancelled || !dl_dropped.is_empty());

        carry.ul_counts = (0..j).map(|a| ul_assoc.ap_load(a) as f64).collect();
        carry.powers.clone_from(&hmd_power);
        carry.dl_counts = vec![served as f64; j];
        carry.beams = beams.clone();

        out.push(AllocationDecision {
            slot: input.slot,
            ul_assoc,
            dl_serve,
            hmd_power,
            beams,
            ul_reward,
            dl_reward,
            ul_penalty: ul_reward - ul_settled,
            dl_penalty: dl_reward - dl_settled,
            ul_cancelled,
            dl_cancelled,
            ul_dropped,
            dl_dropped,
            ul_audit,
            dl_audit,
            planned_positions: input.planned.clone(),
            dl_numerical_failures: dl_failures,
        });
    }
    Ok(out)
}
