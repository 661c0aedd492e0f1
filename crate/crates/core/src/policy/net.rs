use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Probabilities are kept this far away from 0 and 1.
pub const PROB_CLAMP: f64 = 1e-6;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: DMatrix::zeros(fan_out, fan_in),
            b: DVector::zeros(fan_out),
        }
    }
}

/// Feedforward policy `s → relu → relu → sigmoid` trained with Adam on a
/// binary cross-entropy loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    version: u32,
    layers: [Dense; 3],
    m: [Dense; 3],
    v: [Dense; 3],
    pub step: u64,
    pub learning_rate: f64,
}

/// Gradients of the loss with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: [DMatrix<f64>; 3],
    pub b: [DVector<f64>; 3],
}

impl PolicyNet {
    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(dims: [usize; 4], learning_rate: f64, rng: &mut R) -> Self {
        let layer = |fan_in: usize, fan_out: usize, rng: &mut R| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Dense {
                w: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..=bound)),
                b: DVector::zeros(fan_out),
            }
        };
        let l1 = layer(dims[0], dims[1], rng);
        let l2 = layer(dims[1], dims[2], rng);
        let l3 = layer(dims[2], dims[3], rng);
        Self::with_layers([l1, l2, l3], learning_rate)
    }

    /// Network with every parameter zero.
    pub fn zeros(dims: [usize; 4], learning_rate: f64) -> Self {
        Self::with_layers(
            [
                Dense::zeros(dims[0], dims[1]),
                Dense::zeros(dims[1], dims[2]),
                Dense::zeros(dims[2], dims[3]),
            ],
            learning_rate,
        )
    }

    fn with_layers(layers: [Dense; 3], learning_rate: f64) -> Self {
        let zero = |l: &Dense| Dense::zeros(l.w.ncols(), l.w.nrows());
        let m = [zero(&layers[0]), zero(&layers[1]), zero(&layers[2])];
        let v = m.clone();
        Self {
            version: CHECKPOINT_VERSION,
            layers,
            m,
            v,
            step: 0,
            learning_rate,
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        [
            self.layers[0].w.ncols(),
            self.layers[0].w.nrows(),
            self.layers[1].w.nrows(),
            self.layers[2].w.nrows(),
        ]
    }

    pub fn input_dim(&self) -> usize {
        self.dims()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims()[3]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn weight(&self, layer: usize) -> &DMatrix<f64> {
        &self.layers[layer].w
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut DMatrix<f64> {
        &mut self.layers[layer].w
    }

    pub fn bias(&self, layer: usize) -> &DVector<f64> {
        &self.layers[layer].b
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut DVector<f64> {
        &mut self.layers[layer].b
    }

    /// Pre-activations and activations for a batch (columns are samples).
    fn forward_batch(&self, x: &DMatrix<f64>) -> [DMatrix<f64>; 5] {
        let affine = |l: &Dense, a: &DMatrix<f64>| {
            let mut z = &l.w * a;
            for mut col in z.column_iter_mut() {
                col += &l.b;
            }
            z
        };
        let z1 = affine(&self.layers[0], x);
        let a1 = z1.map(|v| v.max(0.0));
        let z2 = affine(&self.layers[1], &a1);
        let a2 = z2.map(|v| v.max(0.0));
        let z3 = affine(&self.layers[2], &a2);
        [z1, a1, z2, a2, z3]
    }

    /// Output logits for one state.
    pub fn logits(&self, state: &[f64]) -> Result<DVector<f64>> {
        self.check_input(state.len())?;
        let x = DMatrix::from_column_slice(state.len(), 1, state);
        Ok(self.forward_batch(&x)[4].column(0).into_owned())
    }

    /// Relaxed action in (0, 1)^out.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits(state)?.iter().map(|&z| clamp_prob(sigmoid(z))).collect())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    fn batch(&self, states: &[&[f64]], actions: &[&[f64]]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if states.is_empty() || states.len() != actions.len() {
            return Err(Error::domain("training batch must be non-empty and paired"));
        }
        for (s, a) in states.iter().zip(actions) {
            self.check_input(s.len())?;
            if a.len() != self.output_dim() {
                return Err(Error::Dimension {
                    expected: self.output_dim(),
                    got: a.len(),
                });
            }
        }
        let x = DMatrix::from_fn(self.input_dim(), states.len(), |r, c| states[c][r]);
        let y = DMatrix::from_fn(self.output_dim(), actions.len(), |r, c| actions[c][r]);
        Ok((x, y))
    }

    /// Mean over the batch of the summed binary cross-entropy.
    pub fn loss(&self, states: &[&[f64]], actions: &[&[f64]]) -> Result<f64> {
        let (x, y) = self.batch(states, actions)?;
        let z = &self.forward_batch(&x)[4];
        Ok(logit_cross_entropy(z, &y) / states.len() as f64)
    }

    /// Loss and analytic gradients by backpropagation.
    pub fn gradients(&self, states: &[&[f64]], actions: &[&[f64]]) -> Result<(f64, Gradients)> {
        let (x, y) = self.batch(states, actions)?;
        let bsz = states.len() as f64;
        let [z1, a1, z2, a2, z3] = self.forward_batch(&x);
        let loss = logit_cross_entropy(&z3, &y) / bsz;
        let d3 = (z3.map(sigmoid) - y) / bsz;
        let gw3 = &d3 * a2.transpose();
        let gb3 = row_sums(&d3);
        let mut d2 = self.layers[2].w.tr_mul(&d3);
        d2.zip_apply(&z2, |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let gw2 = &d2 * a1.transpose();
        let gb2 = row_sums(&d2);
        let mut d1 = self.layers[1].w.tr_mul(&d2);
        d1.zip_apply(&z1, |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let gw1 = &d1 * x.transpose();
        let gb1 = row_sums(&d1);
        Ok((
            loss,
            Gradients {
                w: [gw1, gw2, gw3],
                b: [gb1, gb2, gb3],
            },
        ))
    }

    /// One Adam step with bias correction.
    pub fn apply_adam(&mut self, g: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let lr = self.learning_rate;
        for k in 0..3 {
            adam_update(
                self.layers[k].w.as_mut_slice(),
                self.m[k].w.as_mut_slice(),
                self.v[k].w.as_mut_slice(),
                g.w[k].as_slice(),
                lr,
                c1,
                c2,
            );
            adam_update(
                self.layers[k].b.as_mut_slice(),
                self.m[k].b.as_mut_slice(),
                self.v[k].b.as_mut_slice(),
                g.b[k].as_slice(),
                lr,
                c1,
                c2,
            );
        }
    }

    /// Backpropagate the batch loss and take one Adam step. Returns the loss
    /// before the update.
    pub fn train_step(&mut self, states: &[&[f64]], actions: &[&[f64]]) -> Result<f64> {
        let (loss, g) = self.gradients(states, actions)?;
        self.apply_adam(&g);
        Ok(loss)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        if net.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported policy checkpoint version {}",
                net.version
            )));
        }
        Ok(net)
    }
}

fn adam_update(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `Σ −a log σ(z) − (1−a) log(1−σ(z))`, evaluated stably from logits.
fn logit_cross_entropy(z: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    z.iter().zip(y.iter()).map(|(&z, &a)| softplus(z) - a * z).sum()
}

/// Averaged cross-entropy between relaxed actions `probs` and chosen
/// binary actions, one row per sample.
pub fn cross_entropy(probs: &[Vec<f64>], actions: &[Vec<f64>]) -> Result<f64> {
    if probs.is_empty() || probs.len() != actions.len() {
        return Err(Error::domain("cross-entropy needs a non-empty paired batch"));
    }
    let mut total = 0.0;
    for (p, a) in probs.iter().zip(actions) {
        if p.len() != a.len() {
            return Err(Error::Dimension {
                expected: p.len(),
                got: a.len(),
            });
        }
        for (&p, &a) in p.iter().zip(a) {
            total -= a * p.ln() + (1.0 - a) * (1.0 - p).ln();
        }
    }
    Ok(total / probs.len() as f64)
}
