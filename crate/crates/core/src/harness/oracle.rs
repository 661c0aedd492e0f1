//! Reference checks against independent closed forms, printed as a table by
//! the `oracle` command.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::baselines::baseline_knn;
use super::traces::{synth_traces, WaypointParams};
use crate::allocator::env::user_states;
use crate::allocator::uplink_power_closed_form;
use crate::config::DualStepRule;
use crate::error::Result;
use crate::esn::{train_from, DualState, DualTrainConfig, ShardPlan, TrainingWindow};
use crate::net_model::{hermitian_trace_product, Association, NetworkScene, SmallScaleDraws};
use crate::policy::PolicyNet;
use crate::sdp::{check_rank, lp_power_oracle, recover_beams, solve, SdpInstance, SdpStatus};
use crate::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub name: &'static str,
    pub cases: usize,
    /// Worst deviation observed over all cases.
    pub worst: f64,
    pub tolerance: f64,
}

impl OracleRow {
    pub fn pass(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

fn cgauss(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn ridge(w: &TrainingWindow, xi: f64) -> DMatrix<f64> {
    let d = w.feature_dim();
    let q = w.len() as f64;
    let lhs = &w.inputs * w.inputs.transpose() + DMatrix::identity(d, d) * (2.0 * xi * q);
    lhs.lu()
        .solve(&(&w.inputs * &w.targets))
        .expect("ridge system is positive definite")
}

fn esn_rows(seed: u64) -> Result<Vec<OracleRow>> {
    let cfg = DualTrainConfig {
        xi: 0.25,
        zeta: 1.0,
        mu: 1.0,
        rounds: 1000,
        rule: DualStepRule::Full,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut perm) = (0.0f64, 0.0f64);
    let cases = 20;
    for c in 0..cases {
        let d = 2 + if c % 2 == 0 { 8 } else { 300 };
        let x = DMatrix::from_fn(d, 6, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let w = TrainingWindow::new(x, y, 1)?;
        let start = DualState::random(&w, ShardPlan::contiguous(6, 3), cfg.xi, &mut rng)?;
        let out = train_from(&w, start.clone(), &cfg)?;
        let exact = ridge(&w, cfg.xi);
        worst = worst.max((&out.weights - &exact).norm() / exact.norm());
        let mut shuffled = start;
        shuffled.plan = ShardPlan {
            shards: vec![vec![4, 5], vec![0, 1], vec![2, 3]],
        };
        let again = train_from(&w, shuffled, &cfg)?;
        perm = perm.max((&again.weights - &out.weights).norm() / out.weights.norm());
    }
    Ok(vec![
        OracleRow {
            name: "sharded readout training vs centralised ridge",
            cases,
            worst,
            tolerance: 1e-6,
        },
        OracleRow {
            name: "readout invariant to shard order",
            cases,
            worst: perm,
            tolerance: 1e-6,
        },
    ])
}

fn uplink_row(seed: u64) -> Result<OracleRow> {
    let cfg = SimConfig::default();
    let radio = cfg.radio();
    let aps = cfg.aps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let cases = 1000;
    for c in 0..cases {
        let n = rng.random_range(1..=8usize);
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                [
                    rng.random_range(0.0..cfg.area_side_m),
                    rng.random_range(0.0..cfg.area_side_m),
                ]
            })
            .collect();
        let dirs = vec![[1.0, 0.0]; n];
        let mut users = user_states(&cfg, &positions, &vec![cfg.user_height_mean_m; n], &dirs, &vec![0.0; n]);
        let mut assoc = Association::empty(n, aps.len());
        for i in 0..n {
            let j = rng.random_range(0..=aps.len());
            if j < aps.len() {
                assoc.set(i, j, true);
            }
        }
        let scene = NetworkScene {
            aps: aps.clone(),
            users: users.clone(),
            radio: radio.clone(),
        };
        let ch = scene.realize(&SmallScaleDraws::sample(n, aps.len(), cfg.num_antennas, &mut rng))?;
        // Every third instance puts one user's budget exactly on its need.
        if c % 3 == 0 {
            if let Some(i) = (0..n).find(|&i| assoc.ap_of(i).is_some()) {
                let j = assoc.ap_of(i).unwrap();
                users[i].hmd_max_power = users[i].hmd_circuit_power + radio.ul_required_power(ch.ul_pathloss[i][j], n);
            }
        }
        let closed = uplink_power_closed_form(&assoc, &ch, &users, &radio);
        let budgets: Vec<f64> = users.iter().map(|u| u.tx_budget()).collect();
        let oracle = lp_power_oracle(&assoc, &ch.ul_pathloss, &radio, &budgets)?;
        for (a, b) in closed.iter().zip(&oracle) {
            worst = worst.max(rel(*a, *b));
        }
    }
    Ok(OracleRow {
        name: "uplink power closed form vs bisection",
        cases,
        worst,
        tolerance: 1e-9,
    })
}

fn sdp_rows(seed: u64) -> Result<Vec<OracleRow>> {
    let cfg = SimConfig::default();
    let radio = cfg.radio();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (j, k) = (cfg.num_aps, cfg.num_antennas);
    let instance = |channels: Vec<DVector<Complex64>>| SdpInstance {
        num_aps: j,
        num_elements: k,
        served: (0..channels.len()).collect(),
        interferers: vec![Vec::new(); channels.len()],
        channels,
        sinr_target: radio.dl_sinr_target(),
        noise_power: radio.dl_noise_power(),
        power_caps: cfg.aps().iter().map(|a| a.tx_budget()).collect(),
    };
    let mut single = 0.0f64;
    for _ in 0..100 {
        let scale = 10f64.powf(rng.random_range(-6.0..-4.0));
        let h = DVector::from_fn(j * k, |_, _| cgauss(&mut rng) * scale);
        let inst = instance(vec![h.clone()]);
        let sol = solve(&inst);
        let p = inst.single_user_power(0);
        single = single.max(if sol.status == SdpStatus::Feasible {
            rel(sol.objective, p)
        } else {
            f64::INFINITY
        });
    }
    let (mut ratio, mut residual) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let users = rng.random_range(1..=4usize);
        let chans = (0..users)
            .map(|_| {
                let scale = 10f64.powf(rng.random_range(-6.0..-4.5));
                DVector::from_fn(j * k, |_, _| cgauss(&mut rng) * scale)
            })
            .collect();
        let inst = instance(chans);
        let sol = solve(&inst);
        if sol.status != SdpStatus::Feasible {
            ratio = f64::INFINITY;
            continue;
        }
        for g in &sol.grams {
            ratio = ratio.max(check_rank(g).ratio);
        }
        match recover_beams(&inst, &sol, 0, &mut rng) {
            Ok(beams) => {
                let grams: Vec<_> = beams.iter().map(|b| b * b.adjoint()).collect();
                residual = residual.max(inst.residuals(&grams).0);
            }
            Err(_) => residual = f64::INFINITY,
        }
    }
    Ok(vec![
        OracleRow {
            name: "single-user SDP vs matched-filter power",
            cases: 100,
            worst: single,
            tolerance: 1e-6,
        },
        OracleRow {
            name: "interference-free SDP rank ratio",
            cases: 100,
            worst: ratio,
            tolerance: 1e-6,
        },
        OracleRow {
            name: "recovered beams constraint residual",
            cases: 100,
            worst: residual,
            tolerance: 1e-4,
        },
    ])
}

fn gradient_row(seed: u64) -> Result<OracleRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let cases = 10;
    let h = 1e-6;
    for _ in 0..cases {
        let dims = [
            rng.random_range(1..5),
            rng.random_range(1..6),
            rng.random_range(1..6),
            rng.random_range(1..4),
        ];
        let mut net = PolicyNet::xavier(dims, 0.1, &mut rng);
        // Nonzero biases keep pre-activations off the rectifier kink.
        for layer in 0..3 {
            for b in net.bias_mut(layer).iter_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let states: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let actions: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..dims[3]).map(|_| f64::from(rng.random_bool(0.5))).collect())
            .collect();
        let s: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
        let a: Vec<&[f64]> = actions.iter().map(Vec::as_slice).collect();
        let (_, g) = net.gradients(&s, &a)?;
        let mut check = |analytic: f64, numeric: f64| {
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
        };
        for layer in 0..3 {
            for idx in 0..net.weight(layer).len() {
                let orig = net.weight(layer)[idx];
                net.weight_mut(layer)[idx] = orig + h;
                let up = net.loss(&s, &a)?;
                net.weight_mut(layer)[idx] = orig - h;
                let down = net.loss(&s, &a)?;
                net.weight_mut(layer)[idx] = orig;
                check(g.w[layer][idx], (up - down) / (2.0 * h));
            }
            for idx in 0..net.bias(layer).len() {
                let orig = net.bias(layer)[idx];
                net.bias_mut(layer)[idx] = orig + h;
                let up = net.loss(&s, &a)?;
                net.bias_mut(layer)[idx] = orig - h;
                let down = net.loss(&s, &a)?;
                net.bias_mut(layer)[idx] = orig;
                check(g.b[layer][idx], (up - down) / (2.0 * h));
            }
        }
    }
    Ok(OracleRow {
        name: "policy gradients vs central differences",
        cases,
        worst,
        tolerance: 1e-4,
    })
}

fn trace_gram_row(seed: u64) -> OracleRow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8usize);
        let h = DVector::from_fn(n, |_, _| cgauss(&mut rng));
        let g = DVector::from_fn(n, |_, _| cgauss(&mut rng));
        let direct = h.dotc(&g).norm_sqr();
        let traced = hermitian_trace_product(&(&h * h.adjoint()), &(&g * g.adjoint()));
        worst = worst.max((direct - traced).abs() / direct.max(1.0));
    }
    OracleRow {
        name: "|h^H g|^2 vs tr(HG)",
        cases: 1000,
        worst,
        tolerance: 1e-10,
    }
}

fn knn_row(seed: u64) -> OracleRow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.001..0.999)).collect();
        let count = rng.random_range(1..=8usize);
        let mut dists: Vec<f64> = (0..8u32)
            .map(|v| (0..3).map(|b| (f64::from((v >> b) & 1) - a[b]).powi(2)).sum())
            .collect();
        dists.sort_by(f64::total_cmp);
        let got = baseline_knn(&a, count);
        for (k, g) in got.groups.iter().enumerate() {
            let d: f64 = g
                .iter()
                .zip(&a)
                .map(|(&x, y)| (f64::from(u8::from(x)) - y).powi(2))
                .sum();
            worst = worst.max((d - dists[k]).abs());
        }
    }
    OracleRow {
        name: "KNN candidates vs brute-force vertex ranking",
        cases: 200,
        worst,
        tolerance: 1e-12,
    }
}

fn zoom_row(seed: u64) -> OracleRow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = WaypointParams {
        side: 5000.0,
        ..WaypointParams::from_config(&SimConfig::default())
    };
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let raw = synth_traces(4, 30, &params, &mut rng);
        let mut zoomed = raw.clone();
        zoomed.zoom_to_area(500.0);
        let pts = |t: &super::traces::TraceSet| -> Vec<[f64; 2]> { t.positions.iter().flatten().copied().collect() };
        let (a, b) = (pts(&raw), pts(&zoomed));
        let dist = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        let (d0a, d0b) = (dist(a[0], a[a.len() - 1]), dist(b[0], b[b.len() - 1]));
        for k in 1..a.len() {
            let ra = dist(a[0], a[k]) / d0a;
            let rb = dist(b[0], b[k]) / d0b;
            worst = worst.max((ra - rb).abs());
        }
    }
    OracleRow {
        name: "trace zoom preserves distance ratios",
        cases: 20,
        worst,
        tolerance: 1e-12,
    }
}

/// Run every reference check with the given seed.
pub fn oracle_table(seed: u64) -> Result<Vec<OracleRow>> {
    let mut rows = esn_rows(seed)?;
    rows.push(uplink_row(seed)?);
    rows.extend(sdp_rows(seed)?);
    rows.push(gradient_row(seed)?);
    rows.push(trace_gram_row(seed));
    rows.push(knn_row(seed));
    rows.push(zoom_row(seed));
    Ok(rows)
}
