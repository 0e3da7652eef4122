//! Winner-take-all training: hypothesis selection, selective updates,
//! checkpoints, and the optimization loop.

mod checkpoint;
mod optimizer;
mod run;
mod wta;

pub use checkpoint::{load_checkpoint, save_checkpoint, VIFW_MAGIC, VIFW_VERSION};
pub use optimizer::{adam_update, AdamHyper, AdamState};
pub use run::{
    train, train_step, ReportRecord, StepMetrics, TrainConfig, TrainItem, TrainReport,
};
pub use wta::{wta_select, WtaOutcome};
