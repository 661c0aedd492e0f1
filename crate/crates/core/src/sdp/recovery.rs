use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{SdpInstance, SdpSolution, SdpStatus};
use crate::error::{Error, Result};
use crate::net_model::{Association, RadioParams, SINR_REL_SLACK, SNR_REL_SLACK};

/// Threshold on `λ₂/λ₁` below which a Gram matrix counts as rank one.
pub const RANK_ONE_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub rank_one: bool,
    /// `λ₂/λ₁` with eigenvalues sorted descending; 0 for the zero matrix.
    pub ratio: f64,
}

fn sorted_eigen(g: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new((g + g.adjoint()).scale(0.5));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    (values, vectors)
}

pub fn check_rank(g: &DMatrix<Complex64>) -> RankCheck {
    let (values, _) = sorted_eigen(g);
    let l1 = values.first().copied().unwrap_or(0.0);
    if l1 <= 0.0 {
        return RankCheck {
            rank_one: true,
            ratio: 0.0,
        };
    }
    let ratio = values.get(1).copied().unwrap_or(0.0).max(0.0) / l1;
    RankCheck {
        rank_one: ratio <= RANK_ONE_RATIO,
        ratio,
    }
}

/// Principal eigenvector scaled by `√λ₁`.
pub fn principal_beam(g: &DMatrix<Complex64>) -> DVector<Complex64> {
    let (values, vectors) = sorted_eigen(g);
    let l1 = values.first().copied().unwrap_or(0.0).max(0.0);
    vectors.column(0).scale(l1.sqrt())
}

fn psd_sqrt(g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (values, vectors) = sorted_eigen(g);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
    ));
    &vectors * d * vectors.adjoint()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RecoveryFailure {
    #[error("solution is not feasible")]
    NotFeasible,
    #[error("no randomized candidate met every SINR constraint")]
    NoCandidate,
}

fn meets_sinr(inst: &SdpInstance, beams: &[DVector<Complex64>]) -> bool {
    let received: Vec<f64> = beams
        .iter()
        .zip(&inst.channels)
        .map(|(g, h)| h.dotc(g).norm_sqr())
        .collect();
    (0..inst.num_served()).all(|s| {
        let interference: f64 = inst.interferers[s].iter().map(|&m| received[m]).sum();
        received[s] >= inst.sinr_target * (inst.noise_power + interference) * (1.0 - SINR_REL_SLACK)
    })
}

/// Stacked beams for every served user. Rank-one Gram matrices give their
/// principal beam; otherwise `candidates` Gaussian draws `G^{1/2}ζ` are
/// matched to `tr(H G)`, scaled into the AP caps and the first one meeting
/// every SINR row is kept.
pub fn recover_beams<R: Rng + ?Sized>(
    inst: &SdpInstance,
    sol: &SdpSolution,
    candidates: usize,
    rng: &mut R,
) -> std::result::Result<Vec<DVector<Complex64>>, RecoveryFailure> {
    if sol.status != SdpStatus::Feasible {
        return Err(RecoveryFailure::NotFeasible);
    }
    let ranks: Vec<RankCheck> = sol.grams.iter().map(check_rank).collect();
    let principal: Vec<DVector<Complex64>> = sol.grams.iter().map(principal_beam).collect();
    if ranks.iter().all(|r| r.rank_one) {
        return Ok(principal);
    }
    let roots: Vec<Option<DMatrix<Complex64>>> = sol
        .grams
        .iter()
        .zip(&ranks)
        .map(|(g, r)| (!r.rank_one).then(|| psd_sqrt(g)))
        .collect();
    let n = inst.dim();
    let k = inst.num_elements;
    for _ in 0..candidates {
        let mut beams = principal.clone();
        for (s, root) in roots.iter().enumerate() {
            let Some(root) = root else { continue };
            let zeta = DVector::from_fn(n, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            });
            let g = root * zeta;
            let h = &inst.channels[s];
            let gain = h.dotc(&g).norm_sqr();
            let target = (h * h.adjoint()).component_mul(&sol.grams[s].transpose()).sum().re;
            if gain <= 0.0 {
                continue;
            }
            beams[s] = g.scale((target / gain).sqrt());
        }
        let mut shrink = 1.0f64;
        for (j, cap) in inst.power_caps.iter().enumerate() {
            let load: f64 = beams.iter().map(|b| b.rows(j * k, k).norm_squared()).sum();
            if load > *cap {
                shrink = shrink.min(cap / load);
            }
        }
        if shrink < 1.0 {
            for b in &mut beams {
                *b = b.scale(shrink.sqrt());
            }
        }
        if meets_sinr(inst, &beams) {
            return Ok(beams);
        }
    }
    Err(RecoveryFailure::NoCandidate)
}

/// Minimal uplink power per associated user found by bisection on the SNR
/// inequality `p c ĥ N / (N₀ W) ≥ θ` over `[0, budget]`; 0 when even the
/// budget falls short or the user is unassociated.
pub fn lp_power_oracle(
    assoc: &Association,
    pathloss: &[Vec<f64>],
    params: &RadioParams,
    budgets: &[f64],
) -> Result<Vec<f64>> {
    if pathloss.len() != assoc.users || budgets.len() != assoc.users {
        return Err(Error::Dimension {
            expected: assoc.users,
            got: pathloss.len().min(budgets.len()),
        });
    }
    let n = assoc.users;
    let noise = params.noise_psd * params.ul_bandwidth / n as f64;
    let theta = params.ul_snr_threshold;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let Some(j) = assoc.ap_of(i) else { continue };
        let snr = |p: f64| p * params.rayleigh_gain * pathloss[i][j] / noise;
        let budget = budgets[i];
        if budget <= 0.0 || snr(budget) < theta * (1.0 - SNR_REL_SLACK) {
            continue;
        }
        let (mut lo, mut hi) = (0.0f64, budget);
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if snr(mid) >= theta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        out[i] = hi;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64, y: f64) -> Complex64 {
        Complex64::new(x, y)
    }

    #[test]
    fn rank_of_outer_product_and_identity() {
        let h = DVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(0.0, 1.0)]);
        let r = check_rank(&(&h * h.adjoint()));
        assert!(r.rank_one && r.ratio < 1e-12);
        let r = check_rank(&DMatrix::identity(3, 3));
        assert!(!r.rank_one && (r.ratio - 1.0).abs() < 1e-12);
        assert!(check_rank(&DMatrix::zeros(3, 3)).rank_one);
    }

    #[test]
    fn principal_beam_recovers_vector_up_to_phase() {
        let h = DVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(0.0, 1.0)]);
        let g = principal_beam(&(&h * h.adjoint()));
        let overlap = h.dotc(&g);
        assert!((overlap.norm() - h.norm_squared()).abs() < 1e-10);
        let phase = overlap.unscale(overlap.norm());
        assert!((&g - &h * phase).norm() < 1e-10);
        assert!((g.norm() - h.norm()).abs() < 1e-12);
    }

    #[test]
    fn recovered_power_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = DVector::from_fn(6, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let h = DVector::from_fn(6, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let g = &v * v.adjoint();
            let beam = principal_beam(&g);
            let direct = h.dotc(&beam).norm_sqr();
            let trace = (&h * h.adjoint()).component_mul(&g.transpose()).sum().re;
            assert!((direct - trace).abs() <= 1e-8 * trace.max(1e-12));
        }
    }

    #[test]
    fn randomization_handles_full_rank_gram() {
        // A non-rank-one but feasible Gram: matched filter plus an orthogonal
        // component the channel cannot see.
        let h = DVector::from_vec(vec![c(1e-4, 0.0), c(0.0, 0.0)]);
        let radio = crate::SimConfig::default().radio();
        let inst = SdpInstance {
            num_aps: 1,
            num_elements: 2,
            served: vec![0],
            channels: vec![h.clone()],
            interferers: vec![vec![]],
            sinr_target: radio.dl_sinr_target(),
            noise_power: radio.dl_noise_power(),
            power_caps: vec![1.0],
        };
        let p = inst.single_user_power(0);
        let gram = DMatrix::from_row_slice(2, 2, &[c(p, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(p, 0.0)]);
        let sol = SdpSolution {
            status: SdpStatus::Feasible,
            grams: vec![gram],
            residual: 0.0,
            min_eigenvalue: p,
            objective: 2.0 * p,
            iterations: 0,
            certificate: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let beams = recover_beams(&inst, &sol, 100, &mut rng).unwrap();
        let got = h.dotc(&beams[0]).norm_sqr();
        assert!(got >= inst.sinr_target * inst.noise_power * (1.0 - 1e-4));
    }

    #[test]
    fn infeasible_solution_has_no_beams() {
        let radio = crate::SimConfig::default().radio();
        let inst = SdpInstance {
            num_aps: 1,
            num_elements: 1,
            served: vec![],
            channels: vec![],
            interferers: vec![],
            sinr_target: radio.dl_sinr_target(),
            noise_power: radio.dl_noise_power(),
            power_caps: vec![1.0],
        };
        let mut sol = super::super::solve(&inst);
        sol.status = SdpStatus::Infeasible;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            recover_beams(&inst, &sol, 10, &mut rng),
            Err(RecoveryFailure::NotFeasible)
        );
    }

    #[test]
    fn oracle_unassigned_and_short_budget() {
        let radio = crate::SimConfig::default().radio();
        let mut assoc = Association::empty(2, 1);
        assoc.set(1, 0, true);
        let pl = vec![vec![1e-9], vec![1e-9]];
        let out = lp_power_oracle(&assoc, &pl, &radio, &[1.0, 1e-30]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }
}
