//! Finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::param::{ParamSet, Pathway};
use crate::autodiff::tape::{NodeId, Tape};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Default central-difference step for [`grad_check`].
pub const DEFAULT_STEP: f64 = 1e-6;

/// Worst observed deviation from one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over every checked element.
    pub max_rel_err: f64,
    /// Number of scalar parameters compared.
    pub checked: usize,
    /// Parameter name and flat element index of the worst deviation.
    pub worst: Option<(String, usize)>,
}

/// Compares analytic gradients against central finite differences.
///
/// `build` must construct the same scalar-loss graph from the current
/// parameter values each time it is called; it runs once for the analytic
/// backward pass and twice per parameter element for the numeric probes
/// (f(x+h) - f(x-h)) / 2h. Relative error divides by
/// max(|analytic|, |numeric|, 1e-8). Parameters are restored exactly.
pub fn grad_check(
    params: &mut ParamSet<f64>,
    mut build: impl FnMut(&ParamSet<f64>, &mut Tape<f64>) -> Result<NodeId>,
    step: f64,
) -> Result<GradCheckReport> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut tape = Tape::new();
    let loss = build(params, &mut tape)?;
    if tape.value(loss).numel() != 1 {
        return Err(Error::Contract(format!(
            "gradient check needs a scalar loss, got shape {:?}",
            tape.value(loss).shape()
        )));
    }
    let grads = tape.backward(loss, params, |_| true)?;
    let mut report = GradCheckReport { max_rel_err: 0.0, checked: 0, worst: None };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if !params.trainable(id) {
            continue;
        }
        for e in 0..params.value(id).numel() {
            let original = params.value(id).data()[e];
            params.value_mut(id).data_mut()[e] = original + step;
            let f_plus = eval_loss(params, &mut build)?;
            params.value_mut(id).data_mut()[e] = original - step;
            let f_minus = eval_loss(params, &mut build)?;
            params.value_mut(id).data_mut()[e] = original;
            let numeric = (f_plus - f_minus) / (2.0 * step);
            let analytic = grads.get(id).data()[e];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((params.name(id).to_string(), e));
            }
        }
    }
    Ok(report)
}

fn eval_loss(
    params: &ParamSet<f64>,
    build: &mut impl FnMut(&ParamSet<f64>, &mut Tape<f64>) -> Result<NodeId>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = build(params, &mut tape)?;
    Ok(tape.value(loss).data()[0])
}

/// Relative-error tolerance for ops whose gradients are smooth everywhere.
pub const SMOOTH_TOLERANCE: f64 = 1e-6;

/// Relative-error tolerance for the grid and sampling ops. Their gradients
/// are only piecewise smooth, so the suite keeps every sampling coordinate
/// away from the integer seams where the derivative does not exist.
pub const SAMPLING_TOLERANCE: f64 = 1e-4;

/// One operator's aggregate result from [`standard_suite`].
#[derive(Debug, Clone)]
pub struct SuiteRow {
    /// Operator under test.
    pub op: String,
    /// Independent random problems checked.
    pub seeds: usize,
    /// Scalar parameter elements compared, summed over all problems.
    pub checked: usize,
    /// Largest relative error seen over all problems.
    pub max_rel_err: f64,
    /// Failure threshold for this operator.
    pub tolerance: f64,
}

impl SuiteRow {
    /// True when the worst relative error stayed below the tolerance.
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

type Builder = Box<dyn FnMut(&ParamSet<f64>, &mut Tape<f64>) -> Result<NodeId>>;

struct SuiteSpec {
    name: &'static str,
    tolerance: f64,
    /// Central-difference step. Every suite loss is quadratic in each
    /// parameter, so the difference has no truncation error and a larger
    /// step only reduces rounding noise; the sampling ops keep it small
    /// enough that no probe can cross a bilinear seam.
    step: f64,
    make: fn(u64) -> Result<(ParamSet<f64>, Builder)>,
}

const SMOOTH_STEP: f64 = 1e-4;
const SAMPLING_STEP: f64 = 1e-5;

/// Runs [`grad_check`] over every differentiable operator, each on
/// `seeds_per_op` independently seeded random problems, and returns one
/// row per operator.
pub fn standard_suite(base_seed: u64, seeds_per_op: usize) -> Result<Vec<SuiteRow>> {
    run_suite(&standard_specs(), base_seed, seeds_per_op)
}

fn standard_specs() -> Vec<SuiteSpec> {
    let smooth = |name, make| SuiteSpec { name, tolerance: SMOOTH_TOLERANCE, step: SMOOTH_STEP, make };
    let sampling = |name, make| SuiteSpec { name, tolerance: SAMPLING_TOLERANCE, step: SAMPLING_STEP, make };
    vec![
        smooth("fully_connected", make_fully_connected as fn(u64) -> _),
        smooth("conv2d", make_conv2d),
        smooth("conv_transpose2d", make_conv_transpose2d),
        smooth("relu", make_relu),
        smooth("add", make_add),
        smooth("concat", make_concat),
        smooth("reshape", make_reshape),
        smooth("euclidean_loss", make_euclidean_loss),
        sampling("affine_grid", make_affine_grid),
        sampling("bilinear_sample", make_bilinear_sample),
    ]
}

fn run_suite(specs: &[SuiteSpec], base_seed: u64, seeds_per_op: usize) -> Result<Vec<SuiteRow>> {
    if seeds_per_op == 0 {
        return Err(Error::Contract("seeds_per_op must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for (slot, spec) in specs.iter().enumerate() {
        let mut row = SuiteRow {
            op: spec.name.to_string(),
            seeds: seeds_per_op,
            checked: 0,
            max_rel_err: 0.0,
            tolerance: spec.tolerance,
        };
        for rep in 0..seeds_per_op {
            let problem_seed = base_seed ^ ((slot as u64 + 1) << 40) ^ rep as u64;
            let (mut params, build) = (spec.make)(problem_seed)?;
            let report = grad_check(&mut params, build, spec.step)?;
            row.checked += report.checked;
            if report.max_rel_err > row.max_rel_err {
                row.max_rel_err = report.max_rel_err;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let count: usize = shape.iter().product();
    let data = (0..count).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

fn make_fully_connected(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let x = params.add("x", uniform(&mut rng, &[2, 4], -1.0, 1.0), Pathway::Shared)?;
    let w = params.add("w", uniform(&mut rng, &[4, 3], -1.0, 1.0), Pathway::Shared)?;
    let b = params.add("b", uniform(&mut rng, &[3], -1.0, 1.0), Pathway::Shared)?;
    let target = uniform(&mut rng, &[2, 3], -1.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let xn = tape.param(p, x);
        let wn = tape.param(p, w);
        let bn = tape.param(p, b);
        let y = tape.fully_connected(xn, wn, bn)?;
        tape.euclidean_loss(y, &target)
    });
    Ok((params, build))
}

fn make_conv2d(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stride = 1 + (seed % 2) as usize;
    let out_side = if stride == 1 { 5 } else { 3 };
    let mut params = ParamSet::new();
    let x = params.add("x", uniform(&mut rng, &[1, 5, 5, 2], -1.0, 1.0), Pathway::Shared)?;
    let k = params.add("k", uniform(&mut rng, &[3, 3, 2, 3], -1.0, 1.0), Pathway::Shared)?;
    let b = params.add("b", uniform(&mut rng, &[3], -1.0, 1.0), Pathway::Shared)?;
    let target = uniform(&mut rng, &[1, out_side, out_side, 3], -1.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let xn = tape.param(p, x);
        let kn = tape.param(p, k);
        let bn = tape.param(p, b);
        let y = tape.conv2d(xn, kn, bn, stride)?;
        tape.euclidean_loss(y, &target)
    });
    Ok((params, build))
}

fn make_conv_transpose2d(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stride = 1 + (seed % 2) as usize;
    let mut params = ParamSet::new();
    let x = params.add("x", uniform(&mut rng, &[1, 3, 3, 2], -1.0, 1.0), Pathway::Shared)?;
    let k = params.add("k", uniform(&mut rng, &[3, 3, 3, 2], -1.0, 1.0), Pathway::Shared)?;
    let b = params.add("b", uniform(&mut rng, &[3], -1.0, 1.0), Pathway::Shared)?;
    let target = uniform(&mut rng, &[1, 3 * stride, 3 * stride, 3], -1.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let xn = tape.param(p, x);
        let kn = tape.param(p, k);
        let bn = tape.param(p, b);
        let y = tape.conv_transpose2d(xn, kn, bn, stride)?;
        tape.euclidean_loss(y, &target)
    });
    Ok((params, build))
}

fn make_relu(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Keep every input at least 0.05 from the kink at zero so the central
    // difference never straddles it.
    let data: Vec<f64> = (0..12)
        .map(|_| {
            let magnitude = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { magnitude } else { -magnitude }
        })
        .collect();
    let mut params = ParamSet::new();
    let x = params.add("x", Tensor::from_parts(vec![3, 4], data), Pathway::Shared)?;
    let target = uniform(&mut rng, &[3, 4], -1.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let xn = tape.param(p, x);
        let y = tape.relu(xn)?;
        tape.euclidean_loss(y, &target)
    });
    Ok((params, build))
}

fn make_add(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let a = params.add("a", uniform(&mut rng, &[2, 3], -1.0, 1.0), Pathway::Shared)?;
    let b = params.add("b", uniform(&mut rng, &[2, 3], -1.0, 1.0), Pathway::Shared)?;
    let target = uniform(&mut rng, &[2, 3], -1.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let an = tape.param(p, a);
        let bn = tape.param(p, b);
        let y = tape.add(an, bn)?;
        tape.euclidean_loss(y, &target)
    });
    Ok((params, build))
}

fn make_concat(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let a = params.add("a", uniform(&mut rng, &[2, 2], -1.0, 1.0), Pathway::Shared)?;
    let b = params.add("b", uniform(&mut rng, &[2, 3], -1.0, 1.0), Pathway::Shared)?;
    let c = params.add("c", uniform(&mut rng, &[2, 1], -1.0, 1.0), Pathway::Shared)?;
    let target = uniform(&mut rng, &[2, 6], -1.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let an = tape.param(p, a);
        let bn = tape.param(p, b);
        let cn = tape.param(p, c);
        let y = tape.concat(&[an, bn, cn], 1)?;
        tape.euclidean_loss(y, &target)
    });
    Ok((params, build))
}

fn make_reshape(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let x = params.add("x", uniform(&mut rng, &[2, 6], -1.0, 1.0), Pathway::Shared)?;
    let target = uniform(&mut rng, &[3, 4], -1.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let xn = tape.param(p, x);
        let y = tape.reshape(xn, vec![3, 4])?;
        tape.euclidean_loss(y, &target)
    });
    Ok((params, build))
}

fn make_euclidean_loss(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let a = params.add("a", uniform(&mut rng, &[3, 3], -1.0, 1.0), Pathway::Shared)?;
    let target = uniform(&mut rng, &[3, 3], -1.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let an = tape.param(p, a);
        tape.euclidean_loss(an, &target)
    });
    Ok((params, build))
}

fn make_affine_grid(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let (height, width) = (5usize, 6usize);
    for attempt in 0..64u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt << 16));
        let mut theta = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        for v in theta.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
        if !clear_of_integer_seams(&theta, height, width) {
            continue;
        }
        let image = uniform(&mut rng, &[height, width], 0.0, 1.0);
        let target = uniform(&mut rng, &[height, width], 0.0, 1.0);
        let mut params = ParamSet::new();
        let t = params.add("theta", Tensor::from_parts(vec![2, 3], theta), Pathway::Shared)?;
        let build: Builder = Box::new(move |p, tape| {
            let tn = tape.param(p, t);
            let grid = tape.affine_grid(tn, height, width)?;
            let img = tape.constant(image.clone());
            let y = tape.bilinear_sample(img, grid)?;
            tape.euclidean_loss(y, &target)
        });
        return Ok((params, build));
    }
    Err(Error::Contract(
        "no affine grid clear of integer seams in 64 attempts".into(),
    ))
}

fn make_bilinear_sample(seed: u64) -> Result<(ParamSet<f64>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (height, width, grid_h, grid_w) = (6usize, 7usize, 4usize, 5usize);
    let mut params = ParamSet::new();
    let image = params.add("image", uniform(&mut rng, &[height, width], 0.01, 0.99), Pathway::Shared)?;
    // Sample points sit at least a quarter pixel from every integer seam,
    // far beyond both the finite-difference step and the snap band.
    let mut coords = Vec::with_capacity(grid_h * grid_w * 2);
    for _ in 0..grid_h * grid_w {
        let px = rng.random_range(0..width - 1) as f64 + rng.random_range(0.25..0.75);
        let py = rng.random_range(0..height - 1) as f64 + rng.random_range(0.25..0.75);
        coords.push(2.0 * px / (width - 1) as f64 - 1.0);
        coords.push(2.0 * py / (height - 1) as f64 - 1.0);
    }
    let grid = params.add("grid", Tensor::from_parts(vec![grid_h, grid_w, 2], coords), Pathway::Shared)?;
    let target = uniform(&mut rng, &[grid_h, grid_w], 0.0, 1.0);
    let build: Builder = Box::new(move |p, tape| {
        let imgn = tape.param(p, image);
        let gridn = tape.param(p, grid);
        let y = tape.bilinear_sample(imgn, gridn)?;
        tape.euclidean_loss(y, &target)
    });
    Ok((params, build))
}

/// True when every denormalized sampling coordinate of the grid lies at
/// least 1e-3 from an integer, so a 1e-6 probe on theta cannot cross a
/// bilinear seam.
fn clear_of_integer_seams(theta: &[f64], height: usize, width: usize) -> bool {
    for row in 0..height {
        let by = 2.0 * row as f64 / (height - 1) as f64 - 1.0;
        for col in 0..width {
            let bx = 2.0 * col as f64 / (width - 1) as f64 - 1.0;
            let x = theta[0] * bx + theta[1] * by + theta[2];
            let y = theta[3] * bx + theta[4] * by + theta[5];
            let px = (x + 1.0) * 0.5 * (width - 1) as f64;
            let py = (y + 1.0) * 0.5 * (height - 1) as f64;
            if (px - px.round()).abs() < 1e-3 || (py - py.round()).abs() < 1e-3 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_standard_op_passes_three_seeds() {
        let rows = standard_suite(11, 3).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.op.as_str()).collect();
        assert_eq!(
            names,
            [
                "fully_connected",
                "conv2d",
                "conv_transpose2d",
                "relu",
                "add",
                "concat",
                "reshape",
                "euclidean_loss",
                "affine_grid",
                "bilinear_sample",
            ]
        );
        for row in &rows {
            assert!(
                row.passed(),
                "{} reached rel err {} against tolerance {}",
                row.op,
                row.max_rel_err,
                row.tolerance
            );
            assert!(row.checked > 0);
            assert_eq!(row.seeds, 3);
        }
    }

    #[test]
    fn suite_results_are_reproducible() {
        let a = standard_suite(42, 2).unwrap();
        let b = standard_suite(42, 2).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.op, rb.op);
            assert_eq!(ra.max_rel_err.to_bits(), rb.max_rel_err.to_bits());
            assert_eq!(ra.checked, rb.checked);
        }
    }

    #[test]
    fn zero_seeds_per_op_is_a_contract_error() {
        assert!(matches!(standard_suite(0, 0), Err(Error::Contract(_))));
    }

    // A builder whose numeric probes see a different target than the
    // analytic pass did: the finite differences then disagree with the
    // recorded gradient, which is exactly what a wrong backward rule
    // looks like from the outside.
    fn make_inconsistent(_seed: u64) -> Result<(ParamSet<f64>, Builder)> {
        let mut params = ParamSet::new();
        let x = params.add(
            "x",
            Tensor::from_parts(vec![2], vec![0.3, -0.4]),
            Pathway::Shared,
        )?;
        let mut calls = 0usize;
        let build: Builder = Box::new(move |p, tape| {
            let xn = tape.param(p, x);
            let sign = if calls == 0 { 1.0 } else { -1.0 };
            calls += 1;
            let target = Tensor::from_parts(vec![2], vec![sign, sign]);
            tape.euclidean_loss(xn, &target)
        });
        Ok((params, build))
    }

    #[test]
    fn a_wrong_gradient_fails_its_row_by_name() {
        let specs = vec![
            SuiteSpec {
                name: "inconsistent",
                tolerance: SMOOTH_TOLERANCE,
                step: SMOOTH_STEP,
                make: make_inconsistent,
            },
            SuiteSpec { name: "add", tolerance: SMOOTH_TOLERANCE, step: SMOOTH_STEP, make: make_add },
        ];
        let rows = run_suite(&specs, 5, 1).unwrap();
        assert_eq!(rows[0].op, "inconsistent");
        assert!(!rows[0].passed());
        assert!(rows[1].passed());
    }

    #[test]
    fn seam_guard_rejects_integer_hits_and_accepts_clear_grids() {
        // The identity map lands every sample exactly on its own pixel.
        assert!(!clear_of_integer_seams(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0], 5, 6));
        // A small diagonal offset moves every sample off the seams.
        assert!(clear_of_integer_seams(&[1.0, 0.0, 0.013, 0.0, 1.0, 0.017], 5, 6));
    }
}
