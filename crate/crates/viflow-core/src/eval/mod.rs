//! Flow evaluation: endpoint-error statistics, runtime scoring,
//! reconstruction residuals, anomaly regions, and interchange formats.

pub mod epe;
pub mod formats;
pub mod residual;
pub mod runtime;

pub use epe::{epe_stats, identity_baseline, EpeStats};
pub use formats::{read_flo, write_flo, write_flow_ppm, write_residual_pgm, FLO_MAGIC};
pub use residual::{
    anomaly_blobs, residual_map, AnomalyRoi, ResidualMap, BLOB_MIN_SIZE, BLOB_THRESHOLD,
};
pub use runtime::{measure_runtime, perf_runtime_quotient};
