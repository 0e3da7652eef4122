//! Wall-clock measurement and the accuracy-speed quotient.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::Image;
use crate::model::{Model, MotionInput};

/// Accuracy-speed score: endpoint error multiplied by runtime in
/// milliseconds, scaled by 0.01. Lower is better on both axes, so lower
/// quotients are better.
pub fn perf_runtime_quotient(aepe_px: f64, runtime_ms: f64) -> Result<f64> {
    if !runtime_ms.is_finite() || runtime_ms <= 0.0 {
        return Err(Error::Contract(format!(
            "runtime must be positive, got {runtime_ms} ms"
        )));
    }
    if !aepe_px.is_finite() || aepe_px < 0.0 {
        return Err(Error::Contract(format!(
            "endpoint error must be non-negative, got {aepe_px}"
        )));
    }
    Ok(aepe_px * runtime_ms * 0.01)
}

/// Median wall-clock time of one forward pass plus flow export, in
/// milliseconds. Runs three untimed warm-ups first so allocator and cache
/// effects settle; an even repetition count reports the lower middle.
pub fn measure_runtime(
    model: &Model,
    source: &Image,
    motion: &MotionInput,
    repetitions: usize,
) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::Contract("repetitions must be at least 1".into()));
    }
    for _ in 0..3 {
        let hyps = model.forward(source, motion)?;
        std::hint::black_box(hyps.export_flow(0)?);
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let hyps = model.forward(source, motion)?;
        std::hint::black_box(hyps.export_flow(0)?);
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(lower_median(&mut samples))
}

/// Lower-middle median; `samples` must be non-empty.
pub(crate) fn lower_median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    samples[(samples.len() - 1) / 2]
}
