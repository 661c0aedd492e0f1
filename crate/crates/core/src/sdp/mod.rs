//! Relaxed downlink power control as a complex SDP, rank checks and
//! beamformer recovery, plus the bisection oracle for uplink power.

mod ipm;
mod recovery;

pub use ipm::{ConicProblem, IpmResult, IpmSettings, IpmStatus, Row};
pub use recovery::{check_rank, lp_power_oracle, principal_beam, recover_beams, RankCheck, RecoveryFailure};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{hermitian_trace_product, ApConfig, ChannelRealization, RadioParams};

type CMat = DMatrix<Complex64>;

/// Eigenvalue floor accepted on a returned Gram matrix.
pub const PSD_TOL: f64 = 1e-8;
/// Largest relative constraint violation accepted on a returned solution.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Phase-one margin above which the program is declared infeasible.
pub const PHASE_ONE_TOL: f64 = 1e-6;

/// Downlink power-control program for one served set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpInstance {
    pub num_aps: usize,
    pub num_elements: usize,
    /// User ids of the served set, in ascending order.
    pub served: Vec<usize>,
    /// Stacked channel `h_i` per served user (antenna gain already folded in).
    pub channels: Vec<DVector<Complex64>>,
    /// Served interferers of each served user, as indices into `served`.
    pub interferers: Vec<Vec<usize>>,
    pub sinr_target: f64,
    pub noise_power: f64,
    /// Transmit budget `Ẽ_j − E_j^c` per AP.
    pub power_caps: Vec<f64>,
}

impl SdpInstance {
    pub fn dim(&self) -> usize {
        self.num_aps * self.num_elements
    }

    pub fn num_served(&self) -> usize {
        self.served.len()
    }

    /// Channel Gram `H_i = h_i h_iᴴ`.
    pub fn gram(&self, s: usize) -> CMat {
        let h = &self.channels[s];
        h * h.adjoint()
    }

    /// Block selector `Z_j`: identity on AP `j`'s elements.
    pub fn selector(&self, j: usize) -> CMat {
        let n = self.dim();
        let k = self.num_elements;
        CMat::from_fn(n, n, |r, c| {
            if r == c && r / k == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Power one user needs alone to hit the SINR target with a matched
    /// filter and no per-AP caps.
    pub fn single_user_power(&self, s: usize) -> f64 {
        self.sinr_target * self.noise_power / self.channels[s].norm_squared()
    }

    /// Relative violation of the SINR rows and power caps, and the smallest
    /// eigenvalue, for Gram matrices in watts.
    pub fn residuals(&self, grams: &[CMat]) -> (f64, f64) {
        let received: Vec<f64> = (0..self.num_served())
            .map(|s| hermitian_trace_product(&self.gram(s), &grams[s]))
            .collect();
        let mut worst = 0.0f64;
        for s in 0..self.num_served() {
            let interference: f64 = self.interferers[s].iter().map(|&m| received[m]).sum();
            let need = self.sinr_target * (self.noise_power + interference);
            worst = worst.max((need - received[s]) / need);
        }
        let k = self.num_elements;
        for (j, cap) in self.power_caps.iter().enumerate() {
            let load: f64 = grams
                .iter()
                .map(|g| (j * k..(j + 1) * k).map(|r| g[(r, r)].re).sum::<f64>())
                .sum();
            worst = worst.max((load - cap) / cap);
        }
        let min_eig = grams
            .iter()
            .map(|g| SymmetricEigen::new(g.clone()).eigenvalues.min())
            .fold(f64::INFINITY, f64::min);
        (worst.max(0.0), if grams.is_empty() { 0.0 } else { min_eig })
    }
}

/// Assemble the program for the users flagged in `serve`.
pub fn build_instance(
    serve: &[bool],
    channels: &ChannelRealization,
    params: &RadioParams,
    aps: &[ApConfig],
) -> Result<SdpInstance> {
    if serve.len() != channels.num_users() {
        return Err(Error::Dimension {
            expected: channels.num_users(),
            got: serve.len(),
        });
    }
    if aps.len() != channels.num_aps() {
        return Err(Error::Dimension {
            expected: channels.num_aps(),
            got: aps.len(),
        });
    }
    let served: Vec<usize> = (0..serve.len()).filter(|&i| serve[i]).collect();
    let mut slot = vec![usize::MAX; serve.len()];
    for (s, &i) in served.iter().enumerate() {
        slot[i] = s;
    }
    let interferers = served
        .iter()
        .map(|&i| {
            channels.interferers[i]
                .iter()
                .filter(|&&m| serve[m])
                .map(|&m| slot[m])
                .collect()
        })
        .collect();
    Ok(SdpInstance {
        num_aps: channels.num_aps(),
        num_elements: channels.num_antennas,
        channels: served.iter().map(|&i| channels.stacked(i)).collect(),
        served,
        interferers,
        sinr_target: params.dl_sinr_target(),
        noise_power: params.dl_noise_power(),
        power_caps: aps.iter().map(|a| a.tx_budget()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

/// Why an instance was declared infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    /// Two served users interfere with each other while the SINR target
    /// exceeds one; adding their two SINR rows gives `(1 − β)(P_a + P_b) ≥
    /// 2βσ²`, which no nonnegative powers satisfy.
    MutualInterference { a: usize, b: usize },
    /// Even with every AP at its cap and no interference the user cannot
    /// reach the target: `(Σ_j ‖h_ij‖ √P_j)² < βσ²`.
    PowerBudget { user: usize },
    /// Phase-one program: smallest uniform SINR shortfall is positive.
    PhaseOne { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// One Gram matrix per served user, in watts; empty unless feasible.
    pub grams: Vec<DMatrix<Complex64>>,
    pub residual: f64,
    pub min_eigenvalue: f64,
    /// Total transmit power `Σ_i tr(G_i)`.
    pub objective: f64,
    pub iterations: usize,
    pub certificate: Option<Certificate>,
}

impl SdpSolution {
    fn infeasible(cert: Certificate, iterations: usize) -> Self {
        Self {
            status: SdpStatus::Infeasible,
            grams: Vec::new(),
            residual: f64::NAN,
            min_eigenvalue: f64::NAN,
            objective: f64::NAN,
            iterations,
            certificate: Some(cert),
        }
    }

    fn failure(iterations: usize) -> Self {
        Self {
            status: SdpStatus::NumericalFailure,
            certificate: None,
            ..Self::infeasible(Certificate::PhaseOne { margin: f64::NAN }, iterations)
        }
    }
}

/// Variables are rescaled per user, `G_i = d_i G̃_i` with `d_i` the lone
/// matched-filter power, so every SINR row reads
/// `tr(Ĥ_i G̃_i) − β Σ_m tr(Ĥ_m G̃_m) ≥ 1` with unit-norm `Ĥ`. Power rows are
/// divided by their caps.
fn conic_program(inst: &SdpInstance, phase_one: bool) -> (ConicProblem, Vec<f64>) {
    let n = inst.dim();
    let ns = inst.num_served();
    let nj = inst.num_aps;
    let d: Vec<f64> = (0..ns).map(|s| inst.single_user_power(s)).collect();
    let unit: Vec<CMat> = (0..ns)
        .map(|s| inst.gram(s).unscale(inst.channels[s].norm_squared()))
        .collect();
    let selectors: Vec<CMat> = (0..nj).map(|j| inst.selector(j)).collect();
    let mut rows = Vec::with_capacity(ns + nj);
    // Slack layout: SINR surpluses, then AP power headroom, then τ.
    for s in 0..ns {
        let mut blocks = vec![(s, unit[s].clone())];
        for &m in &inst.interferers[s] {
            blocks.push((m, unit[m].scale(-inst.sinr_target)));
        }
        let mut lp = vec![(s, -1.0)];
        if phase_one {
            lp.push((ns + nj, 1.0));
        }
        rows.push(Row { blocks, lp });
    }
    for j in 0..nj {
        let cap = inst.power_caps[j];
        rows.push(Row {
            blocks: (0..ns).map(|s| (s, selectors[j].scale(d[s] / cap))).collect(),
            lp: vec![(ns + j, 1.0)],
        });
    }
    let mean_d = if ns == 0 {
        1.0
    } else {
        d.iter().sum::<f64>() / ns as f64
    };
    let num_lp = ns + nj + usize::from(phase_one);
    let (c_blocks, c_lp) = if phase_one {
        let mut c = DVector::zeros(num_lp);
        c[ns + nj] = 1.0;
        (vec![CMat::zeros(n, n); ns], c)
    } else {
        (
            (0..ns).map(|s| CMat::identity(n, n).scale(d[s] / mean_d)).collect(),
            DVector::zeros(num_lp),
        )
    };
    let problem = ConicProblem {
        block_dim: n,
        c_blocks,
        c_lp,
        rows,
        b: DVector::from_element(ns + nj, 1.0),
    };
    (problem, d)
}

/// Cheap certificates checked before any interior-point work.
fn screen(inst: &SdpInstance) -> Option<Certificate> {
    if inst.sinr_target >= 1.0 {
        for (s, list) in inst.interferers.iter().enumerate() {
            for &m in list {
                if m > s && inst.interferers[m].contains(&s) {
                    return Some(Certificate::MutualInterference {
                        a: inst.served[s],
                        b: inst.served[m],
                    });
                }
            }
        }
    }
    let k = inst.num_elements;
    for (s, h) in inst.channels.iter().enumerate() {
        let reach: f64 = (0..inst.num_aps)
            .map(|j| h.rows(j * k, k).norm() * inst.power_caps[j].sqrt())
            .sum();
        if reach * reach < inst.sinr_target * inst.noise_power {
            return Some(Certificate::PowerBudget { user: inst.served[s] });
        }
    }
    None
}

/// Minimise total transmit power subject to the linearised SINR rows and
/// per-AP caps over Hermitian PSD Gram matrices.
pub fn solve(inst: &SdpInstance) -> SdpSolution {
    solve_with(inst, &IpmSettings::default())
}

pub fn solve_with(inst: &SdpInstance, settings: &IpmSettings) -> SdpSolution {
    if inst.num_served() == 0 {
        return SdpSolution {
            status: SdpStatus::Feasible,
            grams: Vec::new(),
            residual: 0.0,
            min_eigenvalue: 0.0,
            objective: 0.0,
            iterations: 0,
            certificate: None,
        };
    }
    if let Some(cert) = screen(inst) {
        return SdpSolution::infeasible(cert, 0);
    }
    let (problem, d) = conic_program(inst, false);
    let res = problem.solve(settings);
    let mut iterations = res.iterations;
    if res.status == IpmStatus::Optimal {
        let grams: Vec<CMat> = res.x_blocks.iter().zip(&d).map(|(x, &ds)| x.scale(ds)).collect();
        let (residual, min_eigenvalue) = inst.residuals(&grams);
        if residual <= RESIDUAL_TOL && min_eigenvalue >= -PSD_TOL {
            let objective = grams.iter().map(|g| g.trace().re).sum();
            return SdpSolution {
                status: SdpStatus::Feasible,
                grams,
                residual,
                min_eigenvalue,
                objective,
                iterations,
                certificate: None,
            };
        }
        log::debug!("sdp: optimal iterate rejected, residual {residual:.3e}, min eig {min_eigenvalue:.3e}");
    }
    let (phase_one, _) = conic_program(inst, true);
    let p1 = phase_one.solve(settings);
    iterations += p1.iterations;
    if p1.status == IpmStatus::Optimal {
        let margin = p1.x_lp[inst.num_served() + inst.num_aps];
        if margin > PHASE_ONE_TOL {
            return SdpSolution::infeasible(Certificate::PhaseOne { margin }, iterations);
        }
    }
    log::debug!(
        "sdp: numerical failure (main {:?}, phase one {:?})",
        res.status,
        p1.status
    );
    SdpSolution::failure(iterations)
}
