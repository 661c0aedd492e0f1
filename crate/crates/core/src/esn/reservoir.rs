use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed random recurrent layer `s ← tanh(W_in x + W_rec s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub w_in: DMatrix<f64>,
    pub w_rec: DMatrix<f64>,
    pub state: DVector<f64>,
}

impl Reservoir {
    /// Dense weights drawn uniformly from the open interval (0, 1). With
    /// `spectral_radius` set, the recurrent matrix is rescaled to it.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        reservoir_dim: usize,
        spectral_radius: Option<f64>,
        rng: &mut R,
    ) -> Self {
        let w_in = DMatrix::from_fn(reservoir_dim, input_dim, |_, _| rng.sample(Open01));
        let mut w_rec = DMatrix::from_fn(reservoir_dim, reservoir_dim, |_, _| rng.sample(Open01));
        if let Some(rho) = spectral_radius {
            let current = perron_root(&w_rec);
            if current > 0.0 {
                w_rec *= rho / current;
            }
        }
        Self {
            w_in,
            w_rec,
            state: DVector::zeros(reservoir_dim),
        }
    }

    pub fn from_weights(w_in: DMatrix<f64>, w_rec: DMatrix<f64>) -> Result<Self> {
        if w_rec.nrows() != w_rec.ncols() {
            return Err(Error::Dimension {
                expected: w_rec.nrows(),
                got: w_rec.ncols(),
            });
        }
        if w_in.nrows() != w_rec.nrows() {
            return Err(Error::Dimension {
                expected: w_rec.nrows(),
                got: w_in.nrows(),
            });
        }
        let n = w_rec.nrows();
        Ok(Self {
            w_in,
            w_rec,
            state: DVector::zeros(n),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn reservoir_dim(&self) -> usize {
        self.w_rec.nrows()
    }

    /// Next state from `prev` and `input` without touching `self.state`.
    pub fn next_state(&self, prev: &DVector<f64>, input: &DVector<f64>) -> Result<DVector<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if prev.len() != self.reservoir_dim() {
            return Err(Error::Dimension {
                expected: self.reservoir_dim(),
                got: prev.len(),
            });
        }
        let mut pre = &self.w_in * input;
        pre.gemv(1.0, &self.w_rec, prev, 1.0);
        Ok(pre.map(f64::tanh))
    }

    /// Advance the stored state by one input and return it.
    pub fn step(&mut self, input: &DVector<f64>) -> Result<&DVector<f64>> {
        self.state = self.next_state(&self.state, input)?;
        Ok(&self.state)
    }

    pub fn reset(&mut self) {
        self.state.fill(0.0);
    }
}

/// Largest eigenvalue of an entrywise-positive matrix by power iteration.
fn perron_root(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let converged = (norm - lambda).abs() <= 1e-12 * norm;
        lambda = norm;
        v = next;
        if converged {
            break;
        }
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_give_zero_state() {
        let mut r = Reservoir::from_weights(DMatrix::zeros(3, 2), DMatrix::zeros(3, 3)).unwrap();
        let s = r.step(&DVector::from_vec(vec![4.0, -1.0])).unwrap();
        assert_eq!(s, &DVector::zeros(3));
    }

    #[test]
    fn toy_step_matches_scalar_arithmetic() {
        let w_in = DMatrix::from_row_slice(2, 2, &[0.2, 0.5, 0.9, 0.1]);
        let w_rec = DMatrix::from_row_slice(2, 2, &[0.3, 0.4, 0.6, 0.7]);
        let mut r = Reservoir::from_weights(w_in, w_rec).unwrap();
        r.state = DVector::from_vec(vec![0.25, -0.5]);
        let x = [1.5, -2.0];
        let s0 = 0.2 * x[0] + 0.5 * x[1] + 0.3 * 0.25 + 0.4 * -0.5;
        let s1 = 0.9 * x[0] + 0.1 * x[1] + 0.6 * 0.25 + 0.7 * -0.5;
        let s = r.step(&DVector::from_vec(x.to_vec())).unwrap().clone();
        assert!((s[0] - s0.tanh()).abs() < 1e-15);
        assert!((s[1] - s1.tanh()).abs() < 1e-15);
    }

    #[test]
    fn random_weights_in_open_unit_interval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let r = Reservoir::random(2, 300, None, &mut rng);
        assert_eq!(r.w_in.shape(), (300, 2));
        assert!(r.w_in.iter().chain(r.w_rec.iter()).all(|&w| w > 0.0 && w < 1.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut r = Reservoir::random(2, 8, None, &mut rng);
        assert!(r.step(&DVector::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn spectral_rescaling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let r = Reservoir::random(2, 40, Some(0.9), &mut rng);
        let eig = r.w_rec.clone().complex_eigenvalues();
        let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((rho - 0.9).abs() < 1e-6, "{rho}");
    }

    #[test]
    fn zero_input_iteration_contracts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut r = Reservoir::random(2, 8, Some(0.5), &mut rng);
        r.state = DVector::from_element(8, 0.9);
        let zero = DVector::zeros(2);
        let mut prev = r.state.clone();
        let mut last_gap = f64::INFINITY;
        for _ in 0..30 {
            let s = r.step(&zero).unwrap().clone();
            let gap = (&s - &prev).norm();
            assert!(gap <= last_gap + 1e-15);
            assert!(s.iter().all(|v| v.abs() < 1.0));
            last_gap = gap;
            prev = s;
        }
        assert!(last_gap < 1e-6);
    }
}
