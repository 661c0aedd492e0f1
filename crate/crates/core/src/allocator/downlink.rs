use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{ap_power_check, dl_rate_met, ApConfig, BeamformerSet, ChannelRealization, RadioParams};
use crate::rng::{self, streams};
use crate::sdp::{build_instance, recover_beams, solve, SdpStatus};

/// Downlink observation `[o_t; h_t; I_t; g_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownlinkState {
    /// Users each AP transmits to.
    pub counts: Vec<f64>,
    /// `h_ijk` flattened as (re, im) pairs.
    pub channels: Vec<f64>,
    /// `I_im`, row-major `N × N`.
    pub interference: Vec<f64>,
    /// Previous beams flattened as (re, im) pairs.
    pub beams: Vec<f64>,
}

impl DownlinkState {
    pub fn new(counts: Vec<f64>, channels: &ChannelRealization, beams: &BeamformerSet) -> Self {
        let n = channels.num_users();
        let jk = channels.num_aps() * channels.num_antennas;
        let flat_h = channels
            .dl_channel
            .iter()
            .flatten()
            .flatten()
            .flat_map(|z| [z.re, z.im])
            .collect();
        let mut interference = vec![0.0; n * n];
        for (i, list) in channels.interferers.iter().enumerate() {
            for &m in list {
                interference[i * n + m] = 1.0;
            }
        }
        let flat_g = if beams.num_users() == n {
            beams.flattened(jk).into_iter().flat_map(|z| [z.re, z.im]).collect()
        } else {
            vec![0.0; 2 * n * jk]
        };
        Self {
            counts,
            channels: flat_h,
            interference,
            beams: flat_g,
        }
    }

    pub fn dim(users: usize, aps: usize, elements: usize) -> usize {
        aps + 4 * users * aps * elements + users * users
    }

    /// Network input: counts over `N`, channel over the noise amplitude
    /// (scaled down by 10), beams as is.
    pub fn features(&self, users: usize, noise_power: f64) -> Vec<f64> {
        let h_scale = 1.0 / (10.0 * noise_power.sqrt());
        let mut out =
            Vec::with_capacity(self.counts.len() + self.channels.len() + self.interference.len() + self.beams.len());
        out.extend(self.counts.iter().map(|&c| c / users.max(1) as f64));
        out.extend(self.channels.iter().map(|&h| h * h_scale));
        out.extend(self.interference.iter().copied());
        out.extend(self.beams.iter().copied());
        out
    }
}

/// Outcome of one candidate served set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownlinkEval {
    pub serve: Vec<bool>,
    /// Served fraction when feasible, `−∞` otherwise.
    pub reward: f64,
    pub beams: BeamformerSet,
    pub total_power: f64,
    pub status: SdpStatus,
    /// Feasible relaxation whose beams could not be recovered.
    pub recovery_failed: bool,
}

impl DownlinkEval {
    pub fn feasible(&self) -> bool {
        self.reward.is_finite()
    }
}

/// `B^dl(a)` for a served set: solve the power-minimising relaxation,
/// recover beams and return the served fraction, or `−∞` when the set
/// cannot be served.
pub fn downlink_reward(
    serve: &[bool],
    channels: &ChannelRealization,
    radio: &RadioParams,
    aps: &[ApConfig],
    candidates: usize,
    seed: u64,
) -> Result<DownlinkEval> {
    let n = channels.num_users();
    if serve.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: serve.len(),
        });
    }
    let inst = build_instance(serve, channels, radio, aps)?;
    let sol = solve(&inst);
    let mut eval = DownlinkEval {
        serve: serve.to_vec(),
        reward: f64::NEG_INFINITY,
        beams: BeamformerSet::empty(n),
        total_power: f64::INFINITY,
        status: sol.status,
        recovery_failed: false,
    };
    if sol.status != SdpStatus::Feasible {
        return Ok(eval);
    }
    let mut r = rng::stream(seed, streams::RECOVERY);
    match recover_beams(&inst, &sol, candidates, &mut r) {
        Ok(beams) => {
            let mut all = vec![None; n];
            for (s, g) in inst.served.iter().zip(beams) {
                all[*s] = Some(g);
            }
            eval.beams = BeamformerSet::from_beams(all);
            eval.total_power = (0..n).map(|i| eval.beams.user_power(i)).sum();
            eval.reward = inst.num_served() as f64 / n.max(1) as f64;
        }
        Err(e) => {
            log::debug!("downlink recovery failed: {e}");
            eval.recovery_failed = true;
        }
    }
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownlinkChoice {
    /// Index of the chosen candidate; `None` for the all-zero fallback.
    pub index: Option<usize>,
    pub eval: DownlinkEval,
    pub candidate_rewards: Vec<f64>,
    pub numerical_failures: usize,
}

/// Solve every candidate (in parallel) and keep the best reward; ties go to
/// the smaller total power, then the lower index. When nothing is feasible
/// the empty served set is returned.
pub fn select_downlink_action(
    groups: &[Vec<bool>],
    channels: &ChannelRealization,
    radio: &RadioParams,
    aps: &[ApConfig],
    candidates: usize,
    seed: u64,
) -> Result<DownlinkChoice> {
    let evals: Vec<DownlinkEval> = groups
        .par_iter()
        .enumerate()
        .map(|(v, g)| downlink_reward(g, channels, radio, aps, candidates, seed ^ ((v as u64) << 32)))
        .collect::<Result<_>>()?;
    let numerical_failures = evals.iter().filter(|e| e.status == SdpStatus::NumericalFailure).count();
    let candidate_rewards: Vec<f64> = evals.iter().map(|e| e.reward).collect();
    let mut best: Option<usize> = None;
    for (v, e) in evals.iter().enumerate() {
        if !e.feasible() {
            continue;
        }
        best = match best {
            None => Some(v),
            Some(b) => {
                let cur = &evals[b];
                if e.reward > cur.reward || (e.reward == cur.reward && e.total_power < cur.total_power) {
                    Some(v)
                } else {
                    Some(b)
                }
            }
        };
    }
    let eval = match best {
        Some(b) => evals.into_iter().nth(b).expect("index in range"),
        None => {
            let n = channels.num_users();
            DownlinkEval {
                serve: vec![false; n],
                reward: 0.0,
                beams: BeamformerSet::empty(n),
                total_power: 0.0,
                status: SdpStatus::Feasible,
                recovery_failed: false,
            }
        }
    };
    Ok(DownlinkChoice {
        index: best,
        eval,
        candidate_rewards,
        numerical_failures,
    })
}

/// Constraint audit of a downlink decision on `channels`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DownlinkAudit {
    pub ap_power: bool,
    /// Served users whose rate falls short.
    pub rate_failures: Vec<usize>,
}

impl DownlinkAudit {
    pub fn ok(&self) -> bool {
        self.ap_power && self.rate_failures.is_empty()
    }
}

pub fn audit_downlink(
    serve: &[bool],
    beams: &BeamformerSet,
    channels: &ChannelRealization,
    radio: &RadioParams,
    aps: &[ApConfig],
) -> Result<DownlinkAudit> {
    let mut rate_failures = Vec::new();
    for i in 0..serve.len() {
        if serve[i] && !dl_rate_met(i, serve, channels, beams, radio)? {
            rate_failures.push(i);
        }
    }
    Ok(DownlinkAudit {
        ap_power: ap_power_check(serve, beams, aps).into_iter().all(|b| b),
        rate_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::{NetworkScene, SmallScaleDraws, UserState};
    use crate::SimConfig;

    fn scene(cfg: &SimConfig, positions: &[[f64; 2]]) -> NetworkScene {
        NetworkScene {
            aps: cfg.aps(),
            users: positions
                .iter()
                .map(|&p| UserState {
                    position: p,
                    height: cfg.user_height_mean_m,
                    direction: [cfg.area_center[0] - p[0], cfg.area_center[1] - p[1]],
                    hmd_tx_power: 0.0,
                    hmd_circuit_power: cfg.hmd_circuit_power_w(),
                    hmd_max_power: cfg.hmd_max_power_w(),
                })
                .collect(),
            radio: cfg.radio(),
        }
    }

    fn realize(cfg: &SimConfig, positions: &[[f64; 2]], seed: u64) -> ChannelRealization {
        let s = scene(cfg, positions);
        let draws = SmallScaleDraws::sample(
            positions.len(),
            cfg.num_aps,
            cfg.num_antennas,
            &mut rng::stream(seed, 9),
        );
        s.realize(&draws).unwrap()
    }

    #[test]
    fn empty_group_is_free() {
        let cfg = SimConfig::default();
        let ch = realize(&cfg, &[[100.0, 100.0], [400.0, 400.0]], 1);
        let e = downlink_reward(&[false, false], &ch, &cfg.radio(), &cfg.aps(), 100, 0).unwrap();
        assert_eq!(e.reward, 0.0);
        assert_eq!(e.total_power, 0.0);
        assert!(e.beams.beams.iter().all(Option::is_none));
    }

    #[test]
    fn one_of_four_served() {
        let cfg = SimConfig::default();
        let pos = [[100.0, 100.0], [400.0, 400.0], [100.0, 400.0], [400.0, 100.0]];
        let ch = realize(&cfg, &pos, 2);
        let e = downlink_reward(&[true, false, false, false], &ch, &cfg.radio(), &cfg.aps(), 100, 0).unwrap();
        assert_eq!(e.reward, 0.25);
        let audit = audit_downlink(&e.serve, &e.beams, &ch, &cfg.radio(), &cfg.aps()).unwrap();
        assert!(audit.ok(), "{audit:?}");
    }

    #[test]
    fn close_pair_is_discarded_and_fallback_applies() {
        let cfg = SimConfig::default();
        let pos = [[200.0, 200.0], [210.0, 200.0]];
        let ch = realize(&cfg, &pos, 3);
        let e = downlink_reward(&[true, true], &ch, &cfg.radio(), &cfg.aps(), 100, 0).unwrap();
        assert!(!e.feasible());
        assert_eq!(e.status, SdpStatus::Infeasible);
        let pick = select_downlink_action(&[vec![true, true]], &ch, &cfg.radio(), &cfg.aps(), 100, 0).unwrap();
        assert_eq!(pick.index, None);
        assert_eq!(pick.eval.serve, vec![false, false]);
        let pick = select_downlink_action(
            &[vec![true, true], vec![false, true], vec![true, false]],
            &ch,
            &cfg.radio(),
            &cfg.aps(),
            100,
            0,
        )
        .unwrap();
        assert!(pick.index == Some(1) || pick.index == Some(2));
        let other = if pick.index == Some(1) { 2 } else { 1 };
        let alt = downlink_reward(&[other == 2, other == 1], &ch, &cfg.radio(), &cfg.aps(), 100, 0).unwrap();
        assert!(pick.eval.total_power <= alt.total_power);
    }

    #[test]
    fn selection_is_order_deterministic() {
        let cfg = SimConfig::default();
        let pos: Vec<[f64; 2]> = (0..8)
            .map(|i| [60.0 + 50.0 * i as f64, 120.0 + 37.0 * (i % 3) as f64])
            .collect();
        let ch = realize(&cfg, &pos, 4);
        let groups: Vec<Vec<bool>> = (0..8).map(|v| (0..8).map(|i| (i + v) % 3 != 0).collect()).collect();
        let a = select_downlink_action(&groups, &ch, &cfg.radio(), &cfg.aps(), 100, 7).unwrap();
        let b = select_downlink_action(&groups, &ch, &cfg.radio(), &cfg.aps(), 100, 7).unwrap();
        assert_eq!(a, b);
        for r in &a.candidate_rewards {
            assert!(a.eval.reward >= *r);
        }
    }

    #[test]
    fn state_layout() {
        let cfg = SimConfig::default();
        let pos = [[200.0, 200.0], [210.0, 200.0], [400.0, 400.0]];
        let ch = realize(&cfg, &pos, 5);
        let s = DownlinkState::new(vec![0.0; 3], &ch, &BeamformerSet::empty(3));
        let f = s.features(3, cfg.radio().dl_noise_power());
        assert_eq!(f.len(), DownlinkState::dim(3, 3, 2));
        assert_eq!(s.interference, vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(s.beams.iter().all(|&g| g == 0.0));
    }
}
