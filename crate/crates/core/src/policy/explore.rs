use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::net::PROB_CLAMP;

/// Geometric decay `ε_t = max(floor, ε_0 · decay^t)` of the exploration
/// noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub epsilon0: f64,
    pub decay: f64,
    pub floor: f64,
    pub noise_var: f64,
    pub step: u64,
}

impl ExplorationSchedule {
    pub fn new(epsilon0: f64, decay: f64, floor: f64, noise_var: f64) -> Self {
        Self {
            epsilon0,
            decay,
            floor,
            noise_var,
            step: 0,
        }
    }

    /// A schedule that never perturbs.
    pub fn frozen() -> Self {
        Self::new(0.0, 1.0, 0.0, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        (self.epsilon0 * self.decay.powf(self.step as f64)).max(self.floor)
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }
}

/// `ā + ε·n` with `n ~ N(0, σ² I)`, clamped into the open unit interval.
pub fn explore<R: Rng + ?Sized>(relaxed: &[f64], epsilon: f64, noise_var: f64, rng: &mut R) -> Vec<f64> {
    if epsilon == 0.0 || noise_var == 0.0 {
        return relaxed.to_vec();
    }
    let normal = Normal::new(0.0, noise_var.sqrt()).expect("finite noise variance");
    relaxed
        .iter()
        .map(|&a| (a + epsilon * normal.sample(rng)).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn schedule_decays_to_floor() {
        let mut s = ExplorationSchedule::new(0.99, 0.999, 0.01, 0.36);
        assert_eq!(s.epsilon(), 0.99);
        let mut last = s.epsilon();
        for _ in 0..10_000 {
            s.advance();
            let e = s.epsilon();
            assert!(e <= last && e > 0.0 && e < 1.0);
            last = e;
        }
        assert_eq!(last, 0.01);
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let a = vec![0.2, 0.7, 0.5];
        assert_eq!(explore(&a, 0.0, 0.36, &mut rng), a);
    }

    #[test]
    fn perturbation_is_reproducible_and_clamped() {
        let a = vec![0.01, 0.99, 0.5, 0.5];
        let x = explore(&a, 0.99, 0.36, &mut rand_chacha::ChaCha8Rng::seed_from_u64(4));
        let y = explore(&a, 0.99, 0.36, &mut rand_chacha::ChaCha8Rng::seed_from_u64(4));
        assert_eq!(x, y);
        assert_ne!(x, a);
        assert!(x.iter().all(|&v| v >= PROB_CLAMP && v <= 1.0 - PROB_CLAMP));
    }
}
