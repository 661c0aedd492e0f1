use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::traces::{synth_traces, TraceSet, TraceSource, WaypointParams};
use crate::allocator::agent::{pretrain, EpochLog, Link, TrainedPolicies};
use crate::allocator::env::user_states;
use crate::allocator::orchestrate::{forecast, orchestrate, AllocationDecision, Forecast, Planner};
use crate::config::Algorithm;
use crate::error::{Error, Result};
use crate::esn::Nrmse;
use crate::net_model::{
    ap_power_check, dl_rate_met, hmd_power_check, objective_summary, slot_fop, slot_power_term, ul_decodes,
    NetworkScene, ObjectiveSummary,
};
use crate::rng::{self, streams};
use crate::SimConfig;

/// Epochs at the end of training over which the plateau is measured.
pub const PLATEAU_EPOCHS: usize = 500;

/// Constraint breach found by [`audit_run`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub slot: usize,
    pub what: String,
}

/// Re-derive every executed decision from the true geometry, independent
/// of the allocator's own bookkeeping: single AP per user, AP decoding
/// capacity, uplink SNR for every associated pair, HMD and AP power limits,
/// downlink rate for every served user, and the stored rewards.
pub fn audit_run(cfg: &SimConfig, forecast: &Forecast, decisions: &[AllocationDecision]) -> Result<Vec<Violation>> {
    let aps = cfg.aps();
    let radio = cfg.radio();
    let mut out = Vec::new();
    for d in decisions {
        let mut flag = |what: String| out.push(Violation { slot: d.slot, what });
        let input = forecast
            .inputs
            .get(d.slot)
            .ok_or_else(|| Error::domain(format!("decision for unknown slot {}", d.slot)))?;
        let n = input.truth.len();
        let users = user_states(cfg, &input.truth, &forecast.heights, &input.truth_dirs, &d.hmd_power);
        let scene = NetworkScene {
            aps: aps.clone(),
            users,
            radio: radio.clone(),
        };
        let truth = scene.realize(&input.draws)?;
        let a = &d.ul_assoc;
        if !a.single_ap_per_user() {
            flag("user associated with several APs".into());
        }
        if !a.within_capacity(cfg.decode_capacity) {
            flag("AP decoding capacity exceeded".into());
        }
        let mut ul = 0.0;
        for i in 0..n {
            if !hmd_power_check(&scene.users[i]) {
                flag(format!("HMD {i} power out of range"));
            }
            for (j, ap) in aps.iter().enumerate() {
                if a.get(i, j) {
                    if !ul_decodes(true, &scene.users[i], ap, &radio, n)? {
                        flag(format!("uplink ({i}, {j}) below SNR threshold"));
                    }
                    let u = &scene.users[i];
                    ul += 1.0 / n as f64 - (u.hmd_tx_power + u.hmd_circuit_power) / u.hmd_max_power;
                }
            }
        }
        for (j, ok) in ap_power_check(&d.dl_serve, &d.beams, &aps).into_iter().enumerate() {
            if !ok {
                flag(format!("AP {j} power budget exceeded"));
            }
        }
        for i in 0..n {
            if d.dl_serve[i] && !dl_rate_met(i, &d.dl_serve, &truth, &d.beams, &radio)? {
                flag(format!("downlink user {i} below rate threshold"));
            }
        }
        if (ul - d.ul_reward).abs() > 1e-9 {
            flag(format!("stored uplink reward {} differs from {ul}", d.ul_reward));
        }
        let dl = d.dl_serve.iter().filter(|&&b| b).count() as f64 / n.max(1) as f64;
        if (dl - d.dl_reward).abs() > 1e-12 {
            flag(format!("stored downlink reward {} differs from {dl}", d.dl_reward));
        }
    }
    Ok(out)
}

/// One row of `slots.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub ul_reward: f64,
    pub dl_reward: f64,
    pub fop_ul: f64,
    pub fop_dl: f64,
    pub power_term: f64,
    pub hmd_power_w: f64,
    pub beam_power_w: f64,
    pub ul_penalty: f64,
    pub dl_penalty: f64,
    pub ul_cancelled: bool,
    pub dl_cancelled: bool,
    pub ul_dropped: usize,
    pub dl_dropped: usize,
    pub ul_audit_ok: bool,
    pub dl_audit_ok: bool,
}

impl SlotRecord {
    pub fn from_decision(cfg: &SimConfig, d: &AllocationDecision) -> Self {
        let o = d.outcome(cfg);
        let (fop_ul, fop_dl) = slot_fop(&o);
        Self {
            slot: d.slot,
            ul_reward: d.ul_reward,
            dl_reward: d.dl_reward,
            fop_ul,
            fop_dl,
            power_term: slot_power_term(&o),
            hmd_power_w: d.hmd_power.iter().sum(),
            beam_power_w: (0..d.beams.num_users()).map(|i| d.beams.user_power(i)).sum(),
            ul_penalty: d.ul_penalty,
            dl_penalty: d.dl_penalty,
            ul_cancelled: d.ul_cancelled,
            dl_cancelled: d.dl_cancelled,
            ul_dropped: d.ul_dropped.len(),
            dl_dropped: d.dl_dropped.len(),
            ul_audit_ok: d.ul_audit.ok(),
            dl_audit_ok: d.dl_audit.ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub epochs: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation of the moving-average reward over
/// the last [`PLATEAU_EPOCHS`] epochs of `link`.
pub fn plateau(epochs: &[EpochLog], link: Link) -> Option<Plateau> {
    let series: Vec<f64> = epochs.iter().filter(|e| e.link == link).map(|e| e.moving_avg).collect();
    if series.is_empty() {
        return None;
    }
    let tail = &series[series.len().saturating_sub(PLATEAU_EPOCHS)..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / tail.len() as f64;
    Some(Plateau {
        epochs: tail.len(),
        mean,
        std: var.sqrt(),
    })
}

/// JSON summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub num_users: usize,
    pub num_aps: usize,
    pub num_antennas: usize,
    pub decode_capacity: usize,
    pub slots: usize,
    pub horizon: usize,
    pub trace_source: TraceSource,
    pub randomization_candidates: usize,
    pub pretrain_epochs: usize,
    pub objective: ObjectiveSummary,
    pub nrmse: Vec<Nrmse>,
    pub max_nrmse: Option<f64>,
    pub esn_retrains: usize,
    pub ul_plateau: Option<Plateau>,
    pub dl_plateau: Option<Plateau>,
    pub ul_cancelled: usize,
    pub dl_cancelled: usize,
    pub ul_dropped: usize,
    pub dl_dropped: usize,
    pub dl_numerical_failures: usize,
    pub audit_violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub summary: RunSummary,
    pub slots: Vec<SlotRecord>,
    pub epochs: Vec<EpochLog>,
}

/// A finished run: the report plus what is needed to inspect or resume it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub decisions: Vec<AllocationDecision>,
    pub policies: Option<TrainedPolicies>,
}

/// Synthetic traces for `cfg`, or the supplied ones trimmed to
/// `num_users` users and `slots` slots and zoomed into the area.
pub fn prepare_traces(cfg: &SimConfig, traces: Option<TraceSet>) -> Result<TraceSet> {
    match traces {
        None => Ok(synth_traces(
            cfg.num_users,
            cfg.slots,
            &WaypointParams::from_config(cfg),
            &mut rng::stream(cfg.seed, streams::TRACES),
        )),
        Some(t) => {
            let mut t = t.take_users(cfg.num_users)?;
            for p in &mut t.positions {
                p.truncate(cfg.slots);
            }
            t.zoom_to_area(cfg.area_side_m);
            Ok(t)
        }
    }
}

/// Run `alg` over a prepared forecast. Learned algorithms use `policies`.
pub fn run_on_forecast(
    cfg: &SimConfig,
    fc: &Forecast,
    source: TraceSource,
    alg: Algorithm,
    policies: Option<TrainedPolicies>,
    epochs: Vec<EpochLog>,
) -> Result<RunOutput> {
    let planner = Planner::for_algorithm(alg, policies.clone()).map_err(|e| e.at("planning"))?;
    let decisions = orchestrate(cfg, fc, &planner).map_err(|e| e.at("orchestration"))?;
    let audit_violations = audit_run(cfg, fc, &decisions).map_err(|e| e.at("audit"))?;
    let outcomes: Vec<_> = decisions.iter().map(|d| d.outcome(cfg)).collect();
    let slots: Vec<SlotRecord> = decisions.iter().map(|d| SlotRecord::from_decision(cfg, d)).collect();
    let max_nrmse = fc.nrmse.iter().map(|e| e.value).reduce(f64::max);
    let summary = RunSummary {
        algorithm: alg,
        seed: cfg.seed,
        num_users: cfg.num_users,
        num_aps: cfg.num_aps,
        num_antennas: cfg.num_antennas,
        decode_capacity: cfg.decode_capacity,
        slots: decisions.len(),
        horizon: cfg.horizon,
        trace_source: source,
        randomization_candidates: cfg.randomization_candidates,
        pretrain_epochs: epochs.iter().filter(|e| e.link == Link::Uplink).count(),
        objective: objective_summary(&outcomes),
        nrmse: fc.nrmse.clone(),
        max_nrmse,
        esn_retrains: fc.retrains,
        ul_plateau: plateau(&epochs, Link::Uplink),
        dl_plateau: plateau(&epochs, Link::Downlink),
        ul_cancelled: decisions.iter().filter(|d| d.ul_cancelled).count(),
        dl_cancelled: decisions.iter().filter(|d| d.dl_cancelled).count(),
        ul_dropped: decisions.iter().map(|d| d.ul_dropped.len()).sum(),
        dl_dropped: decisions.iter().map(|d| d.dl_dropped.len()).sum(),
        dl_numerical_failures: decisions.iter().map(|d| d.dl_numerical_failures).sum(),
        audit_violations,
    };
    Ok(RunOutput {
        report: RunReport { summary, slots, epochs },
        decisions,
        policies,
    })
}

fn train_if_learned(cfg: &SimConfig, alg: Algorithm) -> Result<(Option<TrainedPolicies>, Vec<EpochLog>)> {
    if !alg.is_learned() {
        return Ok((None, Vec::new()));
    }
    let (p, logs) = pretrain(cfg, alg).map_err(|e| e.at("pretraining"))?;
    Ok((Some(p), logs))
}

/// Pretrain (for learned algorithms) and run `cfg.algorithm` end to end.
pub fn run_experiment(cfg: &SimConfig, traces: Option<TraceSet>) -> Result<RunOutput> {
    cfg.validate()?;
    let traces = prepare_traces(cfg, traces).map_err(|e| e.at("traces"))?;
    let fc = forecast(cfg, &traces).map_err(|e| e.at("prediction"))?;
    let (policies, epochs) = train_if_learned(cfg, cfg.algorithm)?;
    run_on_forecast(cfg, &fc, traces.source, cfg.algorithm, policies, epochs)
}

/// Run `cfg.algorithm` with already trained policies (no pretraining).
pub fn simulate_with(
    cfg: &SimConfig,
    traces: Option<TraceSet>,
    policies: Option<TrainedPolicies>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let traces = prepare_traces(cfg, traces).map_err(|e| e.at("traces"))?;
    let fc = forecast(cfg, &traces).map_err(|e| e.at("prediction"))?;
    run_on_forecast(cfg, &fc, traces.source, cfg.algorithm, policies, Vec::new())
}

/// All four algorithms on one shared forecast, so every algorithm sees the
/// same geometry and small-scale draws in every slot.
pub fn compare(cfg: &SimConfig, traces: Option<TraceSet>) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    let traces = prepare_traces(cfg, traces).map_err(|e| e.at("traces"))?;
    let fc = forecast(cfg, &traces).map_err(|e| e.at("prediction"))?;
    Algorithm::ALL
        .par_iter()
        .map(|&alg| {
            let (policies, epochs) = train_if_learned(cfg, alg)?;
            run_on_forecast(cfg, &fc, traces.source, alg, policies, epochs)
        })
        .collect()
}

/// [`compare`] at each user count, with the paired decode capacities.
pub fn sweep_users(cfg: &SimConfig, users: &[usize]) -> Result<Vec<(usize, Vec<RunOutput>)>> {
    users
        .iter()
        .map(|&n| Ok((n, compare(&cfg.with_users(n), None)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> SimConfig {
        SimConfig {
            num_users: 4,
            decode_capacity: 2,
            hidden1: 12,
            hidden2: 8,
            episodes: 1,
            epochs_per_episode: 30,
            batch_size: 8,
            train_interval: 5,
            pretrain_realizations: 30,
            randomization_candidates: 20,
            reservoir_dim: 20,
            esn_rounds: 50,
            horizon: 2,
            slots: 20,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_slot_run_is_empty() {
        let cfg = SimConfig {
            slots: 0,
            algorithm: Algorithm::Heuristic,
            ..tiny()
        };
        let out = run_experiment(&cfg, None).unwrap();
        assert!(out.report.slots.is_empty());
        assert_eq!(out.report.summary.slots, 0);
        assert_eq!(out.report.summary.objective, ObjectiveSummary::default());
    }

    #[test]
    fn compare_is_paired_and_clean() {
        let cfg = tiny();
        let runs = compare(&cfg, None).unwrap();
        assert_eq!(runs.len(), 4);
        let algs: Vec<Algorithm> = runs.iter().map(|r| r.report.summary.algorithm).collect();
        assert_eq!(algs, Algorithm::ALL.to_vec());
        for r in &runs {
            assert!(
                r.report.summary.audit_violations.is_empty(),
                "{:?}",
                r.report.summary.audit_violations
            );
            assert_eq!(r.report.slots.len(), cfg.slots);
            let planned: Vec<_> = r.decisions.iter().map(|d| d.planned_positions.clone()).collect();
            let first: Vec<_> = runs[0].decisions.iter().map(|d| d.planned_positions.clone()).collect();
            assert_eq!(planned, first);
        }
        assert!(runs[3].report.epochs.is_empty());
        assert!(runs[0].report.summary.ul_plateau.is_some());
    }

    #[test]
    fn audit_catches_tampering() {
        let cfg = SimConfig {
            algorithm: Algorithm::Heuristic,
            ..tiny()
        };
        let traces = prepare_traces(&cfg, None).unwrap();
        let fc = forecast(&cfg, &traces).unwrap();
        let out = run_on_forecast(&cfg, &fc, traces.source, Algorithm::Heuristic, None, Vec::new()).unwrap();
        assert!(audit_run(&cfg, &fc, &out.decisions).unwrap().is_empty());
        let mut bad = out.decisions.clone();
        bad[0].ul_assoc.set(0, 0, true);
        bad[0].ul_assoc.set(0, 1, true);
        bad[1].hmd_power[0] = 1.0;
        bad[2].dl_reward += 0.25;
        let v = audit_run(&cfg, &fc, &bad).unwrap();
        assert!(v.iter().any(|x| x.slot == 0 && x.what.contains("several APs")));
        assert!(v.iter().any(|x| x.slot == 1 && x.what.contains("HMD 0")));
        assert!(v.iter().any(|x| x.slot == 2 && x.what.contains("downlink reward")));
    }

    #[test]
    fn plateau_of_tail() {
        let logs: Vec<EpochLog> = (0..600)
            .map(|k| EpochLog {
                link: Link::Uplink,
                episode: 0,
                epoch: k,
                reward: 0.0,
                moving_avg: if k < 100 { 5.0 } else { 1.0 },
                loss: None,
                cancelled: false,
                epsilon: 0.0,
            })
            .collect();
        let p = plateau(&logs, Link::Uplink).unwrap();
        assert_eq!(p.epochs, 500);
        assert_eq!(p.mean, 1.0);
        assert_eq!(p.std, 0.0);
        assert!(plateau(&logs, Link::Downlink).is_none());
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = SimConfig {
            algorithm: Algorithm::Droo,
            ..tiny()
        };
        let a = run_experiment(&cfg, None).unwrap();
        let b = run_experiment(&cfg, None).unwrap();
        assert_eq!(a.report, b.report);
    }
}
