use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dual::{train, DualTrainConfig, ShardPlan, TrainingWindow};
use super::reservoir::Reservoir;
use crate::config::{InputFrame, SimConfig};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Trained linear readout `ŷ = Wᵀ[x; s]` plus the constants it was trained
/// with. `mu` is carried for completeness and never used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// `(N_i + N_r) × N_o`.
    pub weights: DMatrix<f64>,
    pub xi: f64,
    pub zeta: f64,
    pub mu: f64,
    pub kappa: f64,
}

impl Readout {
    pub fn predict(&self, input: &DVector<f64>, state: &DVector<f64>) -> Result<DVector<f64>> {
        let d = input.len() + state.len();
        if d != self.weights.nrows() {
            return Err(Error::Dimension {
                expected: self.weights.nrows(),
                got: d,
            });
        }
        let n_i = input.len();
        let w_in = self.weights.rows(0, n_i);
        let w_r = self.weights.rows(n_i, state.len());
        Ok(w_in.tr_mul(input) + w_r.tr_mul(state))
    }
}

/// One user's reservoir and (once trained) readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnModel {
    pub reservoir: Reservoir,
    pub readout: Option<Readout>,
}

impl EsnModel {
    pub fn new(reservoir: Reservoir) -> Self {
        Self {
            reservoir,
            readout: None,
        }
    }

    /// One-step output for `input` given the reservoir `state` that already
    /// absorbed it.
    pub fn readout_predict(&self, input: &DVector<f64>, state: &DVector<f64>) -> Result<DVector<f64>> {
        self.readout
            .as_ref()
            .ok_or(Error::Untrained("echo state readout"))?
            .predict(input, state)
    }

    /// Closed-loop rollout over `steps` slots starting from the latest input
    /// and state; each prediction is fed back as the next input.
    pub fn predict_horizon(
        &self,
        input: &DVector<f64>,
        state: &DVector<f64>,
        steps: usize,
    ) -> Result<Vec<DVector<f64>>> {
        let mut out = Vec::with_capacity(steps);
        if steps == 0 {
            return Ok(out);
        }
        let mut s = state.clone();
        let mut y = self.readout_predict(input, &s)?;
        out.push(y.clone());
        for _ in 1..steps {
            s = self.reservoir.next_state(&s, &y)?;
            y = self.readout_predict(&y, &s)?;
            out.push(y.clone());
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> EsnSnapshot {
        EsnSnapshot {
            input_dim: self.reservoir.input_dim(),
            reservoir_dim: self.reservoir.reservoir_dim(),
            output_dim: self.readout.as_ref().map_or(0, |r| r.weights.ncols()),
            w_in: row_major(&self.reservoir.w_in),
            w_rec: row_major(&self.reservoir.w_rec),
            state: self.reservoir.state.iter().copied().collect(),
            readout: self.readout.as_ref().map(|r| row_major(&r.weights)),
            xi: self.readout.as_ref().map_or(0.0, |r| r.xi),
            zeta: self.readout.as_ref().map_or(0.0, |r| r.zeta),
            mu: self.readout.as_ref().map_or(0.0, |r| r.mu),
            kappa: self.readout.as_ref().map_or(0.0, |r| r.kappa),
        }
    }

    pub fn from_snapshot(s: &EsnSnapshot) -> Result<Self> {
        let (ni, nr, no) = (s.input_dim, s.reservoir_dim, s.output_dim);
        let check = |v: &[f64], n: usize| -> Result<()> {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::Dimension {
                    expected: n,
                    got: v.len(),
                })
            }
        };
        check(&s.w_in, nr * ni)?;
        check(&s.w_rec, nr * nr)?;
        check(&s.state, nr)?;
        let mut reservoir = Reservoir::from_weights(
            DMatrix::from_row_slice(nr, ni, &s.w_in),
            DMatrix::from_row_slice(nr, nr, &s.w_rec),
        )?;
        reservoir.state = DVector::from_column_slice(&s.state);
        let readout = match &s.readout {
            Some(w) => {
                check(w, (ni + nr) * no)?;
                Some(Readout {
                    weights: DMatrix::from_row_slice(ni + nr, no, w),
                    xi: s.xi,
                    zeta: s.zeta,
                    mu: s.mu,
                    kappa: s.kappa,
                })
            }
            None => None,
        };
        Ok(Self { reservoir, readout })
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

/// Flat model snapshot: dimensions and row-major weight arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnSnapshot {
    pub input_dim: usize,
    pub reservoir_dim: usize,
    pub output_dim: usize,
    pub w_in: Vec<f64>,
    pub w_rec: Vec<f64>,
    pub state: Vec<f64>,
    pub readout: Option<Vec<f64>>,
    pub xi: f64,
    pub zeta: f64,
    pub mu: f64,
    pub kappa: f64,
}

/// Per-user sliding-window predictor: feeds every observed position through
/// the reservoir, keeps the `Q + 1` newest (input, state) pairs, retrains on
/// demand and rolls out `M` slots ahead. Before the first training it holds
/// the last observation.
///
/// In the anchored frame every retrain moves the origin to the newest
/// observation and re-expresses the windowed inputs relative to it. The
/// reservoir state carries on untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPredictor {
    pub model: EsnModel,
    /// Positions enter the reservoir as `(p − center)/half_width`.
    pub scale: PositionScale,
    anchored: bool,
    raw: VecDeque<[f64; 2]>,
    history: VecDeque<(DVector<f64>, DVector<f64>)>,
    window: usize,
    pub last_dual_trace: Vec<f64>,
}

/// Affine map between metres and the predictor's working coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionScale {
    pub center: [f64; 2],
    pub half_width: f64,
}

impl PositionScale {
    pub const IDENTITY: Self = Self {
        center: [0.0, 0.0],
        half_width: 1.0,
    };

    /// Maps the square `[0, side]²` onto `[−1, 1]²`.
    pub fn for_area(side: f64) -> Self {
        Self {
            center: [side / 2.0, side / 2.0],
            half_width: side / 2.0,
        }
    }

    pub fn to_unit(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.center[0]) / self.half_width,
            (p[1] - self.center[1]) / self.half_width,
        ]
    }

    pub fn to_metres(&self, u: [f64; 2]) -> [f64; 2] {
        [
            u[0] * self.half_width + self.center[0],
            u[1] * self.half_width + self.center[1],
        ]
    }
}

impl UserPredictor {
    pub fn new(model: EsnModel, window: usize) -> Self {
        Self {
            model,
            scale: PositionScale::IDENTITY,
            anchored: false,
            raw: VecDeque::with_capacity(window + 1),
            history: VecDeque::with_capacity(window + 1),
            window,
            last_dual_trace: Vec::new(),
        }
    }

    pub fn with_frame(mut self, frame: InputFrame, area_side: f64) -> Self {
        self.scale = match frame {
            InputFrame::Area => PositionScale::for_area(area_side),
            InputFrame::Raw | InputFrame::Anchored => PositionScale::IDENTITY,
        };
        self.anchored = frame == InputFrame::Anchored;
        self
    }

    pub fn observe(&mut self, position: [f64; 2]) -> Result<()> {
        let x = DVector::from_column_slice(&self.scale.to_unit(position));
        let s = self.model.reservoir.step(&x)?.clone();
        if self.history.len() == self.window + 1 {
            self.history.pop_front();
            self.raw.pop_front();
        }
        self.history.push_back((x, s));
        self.raw.push_back(position);
        Ok(())
    }

    fn reanchor(&mut self) {
        let Some(&origin) = self.raw.back() else { return };
        self.scale = PositionScale {
            center: origin,
            half_width: 1.0,
        };
        for (i, (x, _)) in self.history.iter_mut().enumerate() {
            *x = DVector::from_column_slice(&self.scale.to_unit(self.raw[i]));
        }
    }

    pub fn last_observation(&self) -> Option<[f64; 2]> {
        self.history.back().map(|(x, _)| self.scale.to_metres([x[0], x[1]]))
    }

    pub fn ready(&self) -> bool {
        self.history.len() > self.window
    }

    /// Newest-first window of `Q` pairs `([x_{t−1−m}; s_{t−1−m}], x_{t−m})`.
    pub fn training_window(&self, horizon: usize) -> Option<TrainingWindow> {
        if !self.ready() {
            return None;
        }
        let q = self.window;
        let n = self.history.len();
        let (x0, s0) = &self.history[0];
        let d = x0.len() + s0.len();
        let mut inputs = DMatrix::zeros(d, q);
        let mut targets = DMatrix::zeros(q, x0.len());
        for m in 0..q {
            let (x_prev, s_prev) = &self.history[n - 2 - m];
            let (x_next, _) = &self.history[n - 1 - m];
            inputs.view_mut((0, m), (x_prev.len(), 1)).copy_from(x_prev);
            inputs.view_mut((x_prev.len(), m), (s_prev.len(), 1)).copy_from(s_prev);
            targets.row_mut(m).copy_from(&x_next.transpose());
        }
        TrainingWindow::new(inputs, targets, horizon).ok()
    }

    /// Retrain the readout on the current window. Returns false when fewer
    /// than `Q + 1` observations exist.
    pub fn retrain<R: Rng + ?Sized>(
        &mut self,
        cfg: &DualTrainConfig,
        workers: usize,
        horizon: usize,
        rng: &mut R,
    ) -> Result<bool> {
        if self.anchored && self.ready() {
            self.reanchor();
        }
        let Some(window) = self.training_window(horizon) else {
            return Ok(false);
        };
        let plan = ShardPlan::contiguous(window.len(), workers);
        let active = plan.shards.iter().filter(|s| !s.is_empty()).count();
        let out = train(&window, plan, cfg, rng)?;
        self.model.readout = Some(Readout {
            weights: out.weights,
            xi: cfg.xi,
            zeta: cfg.zeta,
            mu: cfg.mu,
            kappa: cfg.kappa(active),
        });
        self.last_dual_trace = out.dual_trace;
        Ok(true)
    }

    /// Predicted positions for the next `steps` slots.
    pub fn predict(&self, steps: usize) -> Result<Vec<[f64; 2]>> {
        let Some((x, s)) = self.history.back() else {
            return Err(Error::Untrained("no observation yet"));
        };
        if self.model.readout.is_none() {
            return Ok(vec![self.scale.to_metres([x[0], x[1]]); steps]);
        }
        Ok(self
            .model
            .predict_horizon(x, s, steps)?
            .into_iter()
            .map(|y| self.scale.to_metres([y[0], y[1]]))
            .collect())
    }
}

/// Predictors for every user, retrained in parallel across users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetPredictor {
    pub users: Vec<UserPredictor>,
    pub train_cfg: DualTrainConfig,
    pub workers: usize,
    pub horizon: usize,
    seed: u64,
    retrains: u64,
}

impl FleetPredictor {
    pub fn from_config(cfg: &SimConfig, num_users: usize) -> Self {
        let mut rng = rng::stream(cfg.seed, streams::RESERVOIR);
        let users = (0..num_users)
            .map(|_| {
                let res = Reservoir::random(cfg.esn_input_dim, cfg.reservoir_dim, cfg.esn_spectral_radius, &mut rng);
                UserPredictor::new(EsnModel::new(res), cfg.esn_window).with_frame(cfg.esn_input_frame, cfg.area_side_m)
            })
            .collect();
        Self {
            users,
            train_cfg: DualTrainConfig {
                xi: cfg.esn_xi,
                zeta: cfg.esn_zeta,
                mu: cfg.esn_mu,
                rounds: cfg.esn_rounds,
                rule: cfg.esn_step_rule,
            },
            workers: cfg.num_aps,
            horizon: cfg.horizon,
            seed: cfg.seed,
            retrains: 0,
        }
    }

    pub fn observe(&mut self, positions: &[[f64; 2]]) -> Result<()> {
        if positions.len() != self.users.len() {
            return Err(Error::Dimension {
                expected: self.users.len(),
                got: positions.len(),
            });
        }
        self.users
            .par_iter_mut()
            .zip(positions.par_iter())
            .try_for_each(|(u, &p)| u.observe(p))
    }

    /// Retrain every user whose window is full. Each user gets its own dual
    /// start stream so the result does not depend on thread scheduling.
    pub fn retrain(&mut self) -> Result<usize> {
        let base = self.retrains;
        self.retrains += 1;
        let seed = self.seed;
        let (cfg, workers, horizon) = (self.train_cfg, self.workers, self.horizon);
        let done: Vec<bool> = self
            .users
            .par_iter_mut()
            .enumerate()
            .map(|(i, u)| {
                let mut r = rng::stream(seed ^ (base << 20) ^ i as u64, streams::ESN_INIT);
                u.retrain(&cfg, workers, horizon, &mut r)
            })
            .collect::<Result<_>>()?;
        Ok(done.into_iter().filter(|&d| d).count())
    }

    /// Position of every user `steps` slots ahead.
    pub fn predict_at(&self, steps: usize) -> Result<Vec<[f64; 2]>> {
        self.users
            .iter()
            .map(|u| {
                if steps == 0 {
                    return u.last_observation().ok_or(Error::Untrained("no observation yet"));
                }
                Ok(*u.predict(steps)?.last().expect("steps > 0"))
            })
            .collect()
    }
}

/// Normalised RMSE of a predicted trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nrmse {
    pub value: f64,
    /// Set when some coordinate of the truth has zero range and its RMSE
    /// was left unnormalised.
    pub unnormalised: bool,
}

/// Per-coordinate RMSE divided by the max−min range of the true
/// coordinate, averaged over coordinates.
pub fn nrmse(predicted: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<Nrmse> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::domain("NRMSE of an empty trajectory"));
    }
    let n = truth.len() as f64;
    let mut total = 0.0;
    let mut flagged = false;
    for c in 0..2 {
        let mse = predicted
            .iter()
            .zip(truth)
            .map(|(p, t)| (p[c] - t[c]).powi(2))
            .sum::<f64>()
            / n;
        let (lo, hi) = truth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t[c]), hi.max(t[c]))
        });
        let range = hi - lo;
        if range > 0.0 {
            total += mse.sqrt() / range;
        } else {
            flagged = true;
            total += mse.sqrt();
        }
    }
    Ok(Nrmse {
        value: total / 2.0,
        unnormalised: flagged,
    })
}
