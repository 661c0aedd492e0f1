//! Echo state network trajectory prediction with a readout trained by
//! sharded dual coordinate ascent.

mod dual;
mod predictor;
mod reservoir;

pub use dual::{
    aggregate_round, local_dual_step, model_from_dual, train, train_from, DualState, DualTrainConfig, ShardPlan,
    TrainOutcome, TrainingWindow,
};
pub use predictor::{nrmse, EsnModel, EsnSnapshot, FleetPredictor, Nrmse, PositionScale, Readout, UserPredictor};
pub use reservoir::Reservoir;
