use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::channel::ChannelRealization;
use super::RadioParams;
use crate::error::{Error, Result};

/// Stacked per-user beamformers `g_i = [g_i1; …; g_iJ]` and, when the
/// relaxed solution is kept, the per-user Gram matrices `G_i`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BeamformerSet {
    pub beams: Vec<Option<DVector<Complex64>>>,
    pub grams: Vec<Option<DMatrix<Complex64>>>,
}

impl BeamformerSet {
    pub fn empty(num_users: usize) -> Self {
        Self {
            beams: vec![None; num_users],
            grams: vec![None; num_users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.beams.len()
    }

    /// Rank-one set built from stacked beams; Gram matrices are outer
    /// products.
    pub fn from_beams(beams: Vec<Option<DVector<Complex64>>>) -> Self {
        let grams = beams.iter().map(|b| b.as_ref().map(|g| g * g.adjoint())).collect();
        Self { beams, grams }
    }

    /// Transmit power of user `i`'s beam on AP `j`, `tr(Z_j G_i)`. Uses the
    /// Gram matrix when present, otherwise the stacked beam.
    pub fn ap_power(&self, i: usize, j: usize, k: usize) -> f64 {
        if let Some(Some(g)) = self.grams.get(i) {
            return (j * k..(j + 1) * k).map(|r| g[(r, r)].re).sum();
        }
        match self.beams.get(i) {
            Some(Some(b)) => b.rows(j * k, k).norm_squared(),
            _ => 0.0,
        }
    }

    /// Total transmit power of user `i` over all APs.
    pub fn user_power(&self, i: usize) -> f64 {
        if let Some(Some(g)) = self.grams.get(i) {
            return g.diagonal().iter().map(|z| z.re).sum();
        }
        match self.beams.get(i) {
            Some(Some(b)) => b.norm_squared(),
            _ => 0.0,
        }
    }

    /// Beams flattened to `N·J·K` entries, zeros for users without a beam.
    pub fn flattened(&self, jk: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.beams.len() * jk);
        for b in &self.beams {
            match b {
                Some(v) if v.len() == jk => out.extend(v.iter().copied()),
                _ => out.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), jk)),
            }
        }
        out
    }
}

/// `Re tr(H G)` for Hermitian `H`, `G`.
pub fn hermitian_trace_product(h: &DMatrix<Complex64>, g: &DMatrix<Complex64>) -> f64 {
    let n = h.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..n {
        for c in 0..n {
            acc += h[(r, c)] * g[(c, r)];
        }
    }
    acc.re
}

/// Useful received power `|h_i^H g_i|²` of user `i`; `tr(H_i G_i)` when only
/// the Gram matrix is known. Zero without a beam.
pub fn received_power(i: usize, channels: &ChannelRealization, beams: &BeamformerSet) -> f64 {
    let h = channels.stacked(i);
    if let Some(Some(g)) = beams.beams.get(i) {
        return h.dotc(g).norm_sqr();
    }
    if let Some(Some(g)) = beams.grams.get(i) {
        let hh = &h * h.adjoint();
        return hermitian_trace_product(&hh, g);
    }
    0.0
}

/// CoMP downlink rate of user `i`. Interference is the received power of
/// every served user in `i`'s interferer set.
pub fn dl_rate(
    i: usize,
    serve: &[bool],
    channels: &ChannelRealization,
    beams: &BeamformerSet,
    params: &RadioParams,
) -> Result<f64> {
    if serve.len() != channels.num_users() {
        return Err(Error::Dimension {
            expected: channels.num_users(),
            got: serve.len(),
        });
    }
    if !serve[i] {
        return Ok(0.0);
    }
    let interference: f64 = channels.interferers[i]
        .iter()
        .filter(|&&m| serve[m])
        .map(|&m| received_power(m, channels, beams))
        .sum();
    let sinr = received_power(i, channels, beams) / (params.dl_noise_power() + interference);
    Ok(params.dl_bandwidth * (1.0 + sinr).log2())
}

/// Relative allowance on the downlink SINR target when auditing recovered
/// beams (the recovery step accepts candidates within this margin).
pub const SINR_REL_SLACK: f64 = 1e-4;

/// Whether served user `i` meets the downlink rate threshold, judged on the
/// SINR with [`SINR_REL_SLACK`].
pub fn dl_rate_met(
    i: usize,
    serve: &[bool],
    channels: &ChannelRealization,
    beams: &BeamformerSet,
    params: &RadioParams,
) -> Result<bool> {
    let rate = dl_rate(i, serve, channels, beams, params)?;
    if !serve[i] {
        return Ok(false);
    }
    let sinr = (rate / params.dl_bandwidth).exp2() - 1.0;
    Ok(sinr >= params.dl_sinr_target() * (1.0 - SINR_REL_SLACK))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn params() -> RadioParams {
        crate::SimConfig::default().radio()
    }

    fn realization(h: Vec<Vec<Vec<Complex64>>>, interferers: Vec<Vec<usize>>) -> ChannelRealization {
        let n = h.len();
        let j = h[0].len();
        let k = h[0][0].len();
        ChannelRealization {
            num_antennas: k,
            ul_pathloss: vec![vec![1.0; j]; n],
            dl_channel: h,
            blockage: vec![vec![false; j]; n],
            antenna_gain: vec![vec![1.0; j]; n],
            interferers,
        }
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn unserved_user_has_zero_rate() {
        let c = |x: f64| Complex64::new(x, 0.0);
        let ch = realization(vec![vec![vec![c(1e-5), c(0.0)]]], vec![vec![]]);
        let beams = BeamformerSet::from_beams(vec![Some(DVector::from_vec(vec![c(1.0), c(0.0)]))]);
        assert_eq!(dl_rate(0, &[false], &ch, &beams, &params()).unwrap(), 0.0);
        let r = dl_rate(0, &[true], &ch, &beams, &params()).unwrap();
        let p = params();
        let expect = p.dl_bandwidth * (1.0 + 1e-10 / p.dl_noise_power()).log2();
        assert!((r - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn gram_and_beam_paths_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let h = random_vec(&mut rng, 6);
            let g = random_vec(&mut rng, 6);
            let direct = h.dotc(&g).norm_sqr();
            let trace = hermitian_trace_product(&(&h * h.adjoint()), &(&g * g.adjoint()));
            assert!((direct - trace).abs() <= 1e-10 * direct.max(1e-300));
        }
    }

    #[test]
    fn ap_power_matches_block_norm() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let g = random_vec(&mut rng, 6);
        let with_gram = BeamformerSet::from_beams(vec![Some(g.clone())]);
        let beams_only = BeamformerSet {
            beams: vec![Some(g.clone())],
            grams: vec![None],
        };
        for j in 0..3 {
            let direct = g.rows(2 * j, 2).norm_squared();
            assert!((with_gram.ap_power(0, j, 2) - direct).abs() < 1e-14);
            assert!((beams_only.ap_power(0, j, 2) - direct).abs() < 1e-14);
        }
        let scaled = BeamformerSet::from_beams(vec![Some(g.scale(10.0))]);
        assert!((scaled.ap_power(0, 1, 2) / with_gram.ap_power(0, 1, 2) - 100.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn rate_non_increasing_in_interference(scale in 1.0f64..100.0, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<Complex64>> {
                (0..3).map(|_| (0..2).map(|_| Complex64::new(rng.random::<f64>() * 1e-5, rng.random::<f64>() * 1e-5)).collect()).collect()
            };
            let ch = realization(vec![mk(&mut rng), mk(&mut rng)], vec![vec![1], vec![0]]);
            let g0 = random_vec(&mut rng, 6);
            let g1 = random_vec(&mut rng, 6);
            let base = BeamformerSet::from_beams(vec![Some(g0.clone()), Some(g1.clone())]);
            let louder = BeamformerSet::from_beams(vec![Some(g0), Some(g1.scale(scale))]);
            let p = params();
            let r0 = dl_rate(0, &[true, true], &ch, &base, &p).unwrap();
            let r1 = dl_rate(0, &[true, true], &ch, &louder, &p).unwrap();
            prop_assert!(r1 <= r0 * (1.0 + 1e-12));
            // an unserved interferer contributes nothing
            let alone = dl_rate(0, &[true, false], &ch, &louder, &p).unwrap();
            prop_assert!(alone >= r0 * (1.0 - 1e-12));
        }
    }
}
