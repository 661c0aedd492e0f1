//! Readout training by dual coordinate ascent over sample shards.
//!
//! The ridge problem `min_W (1/2Q)‖XᵀW − Y‖² + ξ‖W‖²` is solved through its
//! dual in `A ∈ R^{Q×N_o}`. Every worker owns a block of samples, computes a
//! closed-form ascent step on its block against the shared model
//! `V = (XA)ᵀ/(ξQ)`, and the master adds the steps up. The readout is
//! `W = ½Vᵀ`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::DualStepRule;
use crate::error::{Error, Result};

/// `Q` training pairs: columns of `inputs` are stacked `[x; s]` (newest
/// first), rows of `targets` the matching next positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingWindow {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub horizon: usize,
}

impl TrainingWindow {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, horizon: usize) -> Result<Self> {
        if inputs.ncols() != targets.nrows() {
            return Err(Error::Dimension {
                expected: inputs.ncols(),
                got: targets.nrows(),
            });
        }
        if inputs.ncols() == 0 {
            return Err(Error::domain("training window holds no samples"));
        }
        Ok(Self {
            inputs,
            targets,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    fn shard_inputs(&self, shard: &[usize]) -> DMatrix<f64> {
        self.inputs.select_columns(shard)
    }

    fn shard_targets(&self, shard: &[usize]) -> DMatrix<f64> {
        self.targets.select_rows(shard)
    }
}

/// Partition of sample indices `0..Q` among workers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub shards: Vec<Vec<usize>>,
}

impl ShardPlan {
    /// Contiguous blocks whose sizes differ by at most one. With more
    /// workers than samples the surplus shards are empty.
    pub fn contiguous(samples: usize, workers: usize) -> Self {
        let workers = workers.max(1);
        let base = samples / workers;
        let extra = samples % workers;
        let mut next = 0;
        let shards = (0..workers)
            .map(|w| {
                let len = base + usize::from(w < extra);
                let s: Vec<usize> = (next..next + len).collect();
                next += len;
                s
            })
            .collect();
        Self { shards }
    }

    /// Checks that the shards partition `0..samples`.
    pub fn validate(&self, samples: usize) -> Result<()> {
        let mut seen = vec![false; samples];
        for &i in self.shards.iter().flatten() {
            if i >= samples || seen[i] {
                return Err(Error::domain(format!("shard plan does not partition 0..{samples}")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::domain(format!("shard plan does not cover 0..{samples}")));
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.shards.len()
    }
}

/// Dual variables and the shared model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// `A`, `Q × N_o`.
    pub dual: DMatrix<f64>,
    /// `V(A) = (XA)ᵀ/(ξQ)`, `N_o × (N_i + N_r)`.
    pub model: DMatrix<f64>,
    pub plan: ShardPlan,
}

impl DualState {
    pub fn new(window: &TrainingWindow, plan: ShardPlan, dual: DMatrix<f64>, xi: f64) -> Result<Self> {
        plan.validate(window.len())?;
        if dual.shape() != (window.len(), window.output_dim()) {
            return Err(Error::Dimension {
                expected: window.len() * window.output_dim(),
                got: dual.len(),
            });
        }
        let model = model_from_dual(window, &dual, xi);
        Ok(Self { dual, model, plan })
    }

    /// Random start: every worker draws its own rows uniformly in (−1, 1).
    pub fn random<R: Rng + ?Sized>(window: &TrainingWindow, plan: ShardPlan, xi: f64, rng: &mut R) -> Result<Self> {
        let dual = DMatrix::from_fn(window.len(), window.output_dim(), |_, _| rng.random_range(-1.0..1.0));
        Self::new(window, plan, dual, xi)
    }

    /// Readout weights `W = ½Vᵀ`, `(N_i + N_r) × N_o`.
    pub fn readout_weights(&self) -> DMatrix<f64> {
        self.model.transpose() * 0.5
    }

    /// Dual objective `D(A) = −(ξ/4)‖V‖² − (1/Q) Σ (a²/2 − a y)`.
    pub fn objective(&self, window: &TrainingWindow, xi: f64) -> f64 {
        let q = window.len() as f64;
        let conj: f64 = self
            .dual
            .iter()
            .zip(window.targets.iter())
            .map(|(a, y)| 0.5 * a * a - a * y)
            .sum();
        -xi * 0.25 * self.model.norm_squared() - conj / q
    }
}

/// `V(A)` recomputed from scratch.
pub fn model_from_dual(window: &TrainingWindow, dual: &DMatrix<f64>, xi: f64) -> DMatrix<f64> {
    (&window.inputs * dual).transpose() / (xi * window.len() as f64)
}

/// Closed-form maximiser of worker `shard`'s local subproblem:
/// `(I + κ/(ξQ) X_jᵀX_j)⁻¹ (Y_j − A_j − ½ X_jᵀVᵀ)`.
pub fn local_dual_step(
    window: &TrainingWindow,
    shard: &[usize],
    dual_rows: &DMatrix<f64>,
    model: &DMatrix<f64>,
    kappa: f64,
    xi: f64,
) -> Result<DMatrix<f64>> {
    if shard.is_empty() {
        return Err(Error::domain("local step on an empty shard"));
    }
    let q = window.len() as f64;
    let xj = window.shard_inputs(shard);
    let yj = window.shard_targets(shard);
    let mut lhs = xj.tr_mul(&xj) * (kappa / (xi * q));
    for d in 0..shard.len() {
        lhs[(d, d)] += 1.0;
    }
    let rhs = yj - dual_rows - xj.tr_mul(&model.transpose()) * 0.5;
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::Numerical("local dual system is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Master update after every worker has reported. `deltas[w]` belongs to
/// `state.plan.shards[w]` (`None` for empty shards).
pub fn aggregate_round(
    state: &mut DualState,
    window: &TrainingWindow,
    deltas: &[Option<DMatrix<f64>>],
    round: usize,
    rule: DualStepRule,
    xi: f64,
) -> Result<()> {
    if deltas.len() != state.plan.workers() {
        return Err(Error::domain(format!(
            "round aborted: {} of {} workers reported",
            deltas.len(),
            state.plan.workers()
        )));
    }
    let step = match rule {
        DualStepRule::Full => 1.0,
        DualStepRule::Harmonic => 1.0 / (round as f64 + 1.0),
    };
    let scale = step / (xi * window.len() as f64);
    for (shard, delta) in state.plan.shards.iter().zip(deltas) {
        let delta = match (shard.is_empty(), delta) {
            (true, _) => continue,
            (false, Some(d)) => d,
            (false, None) => return Err(Error::domain("round aborted: missing worker update")),
        };
        for (r, &row) in shard.iter().enumerate() {
            for c in 0..delta.ncols() {
                state.dual[(row, c)] += step * delta[(r, c)];
            }
        }
        let xj = window.shard_inputs(shard);
        state.model += (xj * delta).transpose() * scale;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualTrainConfig {
    pub xi: f64,
    pub zeta: f64,
    pub mu: f64,
    pub rounds: usize,
    pub rule: DualStepRule,
}

impl DualTrainConfig {
    /// `κ = J/ζ`.
    pub fn kappa(&self, workers: usize) -> f64 {
        workers as f64 / self.zeta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub weights: DMatrix<f64>,
    pub state: DualState,
    /// `D(A^r)` for r = 0..=rounds.
    pub dual_trace: Vec<f64>,
}

/// Run the bulk-synchronous rounds from `state` and return the readout.
pub fn train_from(window: &TrainingWindow, mut state: DualState, cfg: &DualTrainConfig) -> Result<TrainOutcome> {
    let kappa = cfg.kappa(state.plan.shards.iter().filter(|s| !s.is_empty()).count());
    let mut trace = Vec::with_capacity(cfg.rounds + 1);
    trace.push(state.objective(window, cfg.xi));
    for round in 0..cfg.rounds {
        let deltas = state
            .plan
            .shards
            .iter()
            .map(|shard| {
                if shard.is_empty() {
                    return Ok(None);
                }
                let rows = state.dual.select_rows(shard);
                local_dual_step(window, shard, &rows, &state.model, kappa, cfg.xi).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        aggregate_round(&mut state, window, &deltas, round, cfg.rule, cfg.xi)?;
        trace.push(state.objective(window, cfg.xi));
    }
    Ok(TrainOutcome {
        weights: state.readout_weights(),
        state,
        dual_trace: trace,
    })
}

/// Train from a random dual start.
pub fn train<R: Rng + ?Sized>(
    window: &TrainingWindow,
    plan: ShardPlan,
    cfg: &DualTrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    let state = DualState::random(window, plan, cfg.xi, rng)?;
    train_from(window, state, cfg)
}
