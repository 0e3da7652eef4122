//! Forward and backward kernels for the differentiable operations.
//!
//! Convolution layout is NHWC with kernels as (kh, kw, c_in, c_out).
//! Padding is "same"-style: the output extent is ceil(in / stride) and the
//! total padding splits with the smaller half leading.

use crate::autodiff::scalar::Scalar;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::kernel as geo;

/// Output extent and leading pad for one spatial axis.
pub(crate) fn same_out_and_pad(extent: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = extent.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(extent);
    (out, total / 2)
}

struct ConvDims {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    oh: usize,
    ow: usize,
    ph: usize,
    pw: usize,
}

fn conv_dims(x_shape: &[usize], k_shape: &[usize], stride: usize) -> Result<ConvDims> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".to_string()));
    }
    let [n, h, w, cin]: [usize; 4] = x_shape
        .try_into()
        .map_err(|_| Error::Shape(format!("convolution input must be rank 4, got {x_shape:?}")))?;
    let [kh, kw, kcin, cout]: [usize; 4] = k_shape
        .try_into()
        .map_err(|_| Error::Shape(format!("kernel must be rank 4, got {k_shape:?}")))?;
    if kcin != cin {
        return Err(Error::Shape(format!(
            "kernel expects {kcin} input channels, image has {cin}"
        )));
    }
    let (oh, ph) = same_out_and_pad(h, kh, stride);
    let (ow, pw) = same_out_and_pad(w, kw, stride);
    Ok(ConvDims { n, h, w, cin, kh, kw, cout, oh, ow, ph, pw })
}

/// Strided cross-correlation with zero padding, plus an optional per-output-
/// channel bias.
pub(crate) fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let d = conv_dims(x.shape(), k.shape(), stride)?;
    if let Some(b) = bias {
        if b.shape() != [d.cout] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match {} output channels",
                b.shape(),
                d.cout
            )));
        }
    }
    let xd = x.data();
    let kd = k.data();
    let mut out = vec![T::zero(); d.n * d.oh * d.ow * d.cout];
    for n in 0..d.n {
        for oh in 0..d.oh {
            for ow in 0..d.ow {
                let o_base = ((n * d.oh + oh) * d.ow + ow) * d.cout;
                if let Some(b) = bias {
                    out[o_base..o_base + d.cout].copy_from_slice(b.data());
                }
                for i in 0..d.kh {
                    let ih = (oh * stride + i) as isize - d.ph as isize;
                    if ih < 0 || ih >= d.h as isize {
                        continue;
                    }
                    for j in 0..d.kw {
                        let iw = (ow * stride + j) as isize - d.pw as isize;
                        if iw < 0 || iw >= d.w as isize {
                            continue;
                        }
                        let x_base = ((n * d.h + ih as usize) * d.w + iw as usize) * d.cin;
                        let k_base = (i * d.kw + j) * d.cin * d.cout;
                        for ci in 0..d.cin {
                            let xv = xd[x_base + ci];
                            let k_row = k_base + ci * d.cout;
                            for co in 0..d.cout {
                                out[o_base + co] += xv * kd[k_row + co];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![d.n, d.oh, d.ow, d.cout], out))
}

/// Gradient of [`conv_forward`] with respect to its input: scatters the
/// output adjoint back through the kernel. Also serves as the transposed-
/// convolution forward, since that is by definition this adjoint.
pub(crate) fn conv_grad_input<T: Scalar>(
    dy: &Tensor<T>,
    k: &Tensor<T>,
    stride: usize,
    in_shape: [usize; 4],
) -> Result<Tensor<T>> {
    let d = conv_dims(&in_shape, k.shape(), stride)?;
    if dy.shape() != [d.n, d.oh, d.ow, d.cout] {
        return Err(Error::Shape(format!(
            "adjoint shape {:?} does not match convolution output {:?}",
            dy.shape(),
            [d.n, d.oh, d.ow, d.cout]
        )));
    }
    let gd = dy.data();
    let kd = k.data();
    let mut dx = vec![T::zero(); d.n * d.h * d.w * d.cin];
    for n in 0..d.n {
        for oh in 0..d.oh {
            for ow in 0..d.ow {
                let o_base = ((n * d.oh + oh) * d.ow + ow) * d.cout;
                for i in 0..d.kh {
                    let ih = (oh * stride + i) as isize - d.ph as isize;
                    if ih < 0 || ih >= d.h as isize {
                        continue;
                    }
                    for j in 0..d.kw {
                        let iw = (ow * stride + j) as isize - d.pw as isize;
                        if iw < 0 || iw >= d.w as isize {
                            continue;
                        }
                        let x_base = ((n * d.h + ih as usize) * d.w + iw as usize) * d.cin;
                        let k_base = (i * d.kw + j) * d.cin * d.cout;
                        for ci in 0..d.cin {
                            let k_row = k_base + ci * d.cout;
                            let mut acc = T::zero();
                            for co in 0..d.cout {
                                acc += kd[k_row + co] * gd[o_base + co];
                            }
                            dx[x_base + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(in_shape.to_vec(), dx))
}

/// Gradient of [`conv_forward`] with respect to the kernel.
pub(crate) fn conv_grad_kernel<T: Scalar>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    k_shape: [usize; 4],
) -> Result<Tensor<T>> {
    let d = conv_dims(x.shape(), &k_shape, stride)?;
    if dy.shape() != [d.n, d.oh, d.ow, d.cout] {
        return Err(Error::Shape(format!(
            "adjoint shape {:?} does not match convolution output {:?}",
            dy.shape(),
            [d.n, d.oh, d.ow, d.cout]
        )));
    }
    let xd = x.data();
    let gd = dy.data();
    let mut dk = vec![T::zero(); d.kh * d.kw * d.cin * d.cout];
    for n in 0..d.n {
        for oh in 0..d.oh {
            for ow in 0..d.ow {
                let o_base = ((n * d.oh + oh) * d.ow + ow) * d.cout;
                for i in 0..d.kh {
                    let ih = (oh * stride + i) as isize - d.ph as isize;
                    if ih < 0 || ih >= d.h as isize {
                        continue;
                    }
                    for j in 0..d.kw {
                        let iw = (ow * stride + j) as isize - d.pw as isize;
                        if iw < 0 || iw >= d.w as isize {
                            continue;
                        }
                        let x_base = ((n * d.h + ih as usize) * d.w + iw as usize) * d.cin;
                        let k_base = (i * d.kw + j) * d.cin * d.cout;
                        for ci in 0..d.cin {
                            let xv = xd[x_base + ci];
                            let k_row = k_base + ci * d.cout;
                            for co in 0..d.cout {
                                dk[k_row + co] += xv * gd[o_base + co];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(k_shape.to_vec(), dk))
}

/// Sums a rank-4 NHWC tensor over everything but the channel axis.
pub(crate) fn channel_sum<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = t.shape();
    if shape.len() != 4 {
        return Err(Error::Shape(format!("expected rank-4 tensor, got {shape:?}")));
    }
    let c = shape[3];
    let mut out = vec![T::zero(); c];
    for (i, &v) in t.data().iter().enumerate() {
        out[i % c] += v;
    }
    Ok(Tensor::from_parts(vec![c], out))
}

/// Adds a per-channel bias onto a rank-4 NHWC tensor in place.
pub(crate) fn add_channel_bias<T: Scalar>(t: &mut Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    let c = *t.shape().last().expect("rank checked by caller");
    if bias.shape() != [c] {
        return Err(Error::Shape(format!(
            "bias shape {:?} does not match {c} channels",
            bias.shape()
        )));
    }
    let bd = bias.data().to_vec();
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        *v += bd[i % c];
    }
    Ok(())
}

fn fc_dims(x_shape: &[usize], w_shape: &[usize], b_shape: &[usize]) -> Result<(usize, usize, usize)> {
    let [n, m]: [usize; 2] = w_shape
        .try_into()
        .map_err(|_| Error::Shape(format!("weight must be rank 2, got {w_shape:?}")))?;
    if b_shape != [m] {
        return Err(Error::Shape(format!(
            "bias shape {b_shape:?} does not match {m} outputs"
        )));
    }
    let (batch, features) = match x_shape {
        [f] => (1, *f),
        [b, f] => (*b, *f),
        other => {
            return Err(Error::Shape(format!(
                "fully connected input must be rank 1 or 2, got {other:?}"
            )))
        }
    };
    if features != n {
        return Err(Error::Shape(format!(
            "input has {features} features, weight expects {n}"
        )));
    }
    Ok((batch, n, m))
}

/// y = xW + b, for x of rank 1 ([n]) or rank 2 ([batch, n]).
pub(crate) fn fc_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (batch, n, m) = fc_dims(x.shape(), w.shape(), b.shape())?;
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![T::zero(); batch * m];
    for row in 0..batch {
        let o = row * m;
        out[o..o + m].copy_from_slice(b.data());
        for i in 0..n {
            let xv = xd[row * n + i];
            let w_row = i * m;
            for j in 0..m {
                out[o + j] += xv * wd[w_row + j];
            }
        }
    }
    let shape = if x.rank() == 1 { vec![m] } else { vec![batch, m] };
    Ok(Tensor::from_parts(shape, out))
}

/// Gradients of [`fc_forward`]: (dx, dW, db).
pub(crate) fn fc_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    adj: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, m) = (w.shape()[0], w.shape()[1]);
    let batch = if x.rank() == 1 { 1 } else { x.shape()[0] };
    let xd = x.data();
    let wd = w.data();
    let ad = adj.data();
    let mut dx = vec![T::zero(); batch * n];
    let mut dw = vec![T::zero(); n * m];
    let mut db = vec![T::zero(); m];
    for row in 0..batch {
        for j in 0..m {
            db[j] += ad[row * m + j];
        }
        for i in 0..n {
            let xv = xd[row * n + i];
            let w_row = i * m;
            let mut acc = T::zero();
            for j in 0..m {
                let a = ad[row * m + j];
                acc += wd[w_row + j] * a;
                dw[w_row + j] += xv * a;
            }
            dx[row * n + i] = acc;
        }
    }
    let dx_shape = x.shape().to_vec();
    (
        Tensor::from_parts(dx_shape, dx),
        Tensor::from_parts(vec![n, m], dw),
        Tensor::from_parts(vec![m], db),
    )
}

/// Elementwise max(v, 0).
pub(crate) fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Passes the adjoint where the input was strictly positive; the
/// subgradient at exactly zero is zero.
pub(crate) fn relu_backward<T: Scalar>(x: &Tensor<T>, adj: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(adj.data())
        .map(|(&v, &a)| if v > T::zero() { a } else { T::zero() })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Concatenates tensors along `axis`; all other extents must agree.
pub(crate) fn concat_forward<T: Scalar>(xs: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Shape("concat needs at least one input".to_string()))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::Shape(format!("axis {axis} out of range for rank {rank}")));
    }
    let mut axis_total = 0;
    for x in xs {
        if x.rank() != rank {
            return Err(Error::Shape("concat inputs must share rank".to_string()));
        }
        for (d, (&a, &b)) in x.shape().iter().zip(first.shape()).enumerate() {
            if d != axis && a != b {
                return Err(Error::Shape(format!(
                    "concat extent mismatch on axis {d}: {a} vs {b}"
                )));
            }
        }
        axis_total += x.shape()[axis];
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = axis_total;
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * axis_total * inner);
    for o in 0..outer {
        for x in xs {
            let block = x.shape()[axis] * inner;
            let start = o * block;
            out.extend_from_slice(&x.data()[start..start + block]);
        }
    }
    Ok(Tensor::from_parts(shape, out))
}

/// Splits a concat adjoint back into per-input pieces.
pub(crate) fn concat_backward<T: Scalar>(
    adj: &Tensor<T>,
    input_shapes: &[&[usize]],
    axis: usize,
) -> Vec<Tensor<T>> {
    let outer: usize = input_shapes[0][..axis].iter().product();
    let inner: usize = input_shapes[0][axis + 1..].iter().product();
    let mut pieces: Vec<Vec<T>> = input_shapes
        .iter()
        .map(|s| Vec::with_capacity(s.iter().product()))
        .collect();
    let ad = adj.data();
    let mut cursor = 0;
    for _ in 0..outer {
        for (p, s) in pieces.iter_mut().zip(input_shapes) {
            let block = s[axis] * inner;
            p.extend_from_slice(&ad[cursor..cursor + block]);
            cursor += block;
        }
    }
    pieces
        .into_iter()
        .zip(input_shapes)
        .map(|(p, s)| Tensor::from_parts(s.to_vec(), p))
        .collect()
}

/// Sampling grid of a 2x3 affine matrix over an output extent, shaped
/// [h, w, 2] with interleaved (x, y).
pub(crate) fn affine_grid_forward<T: Scalar>(
    theta: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    if theta.shape() != [2, 3] {
        return Err(Error::Shape(format!(
            "theta must be shaped [2, 3], got {:?}",
            theta.shape()
        )));
    }
    if height < 2 || width < 2 {
        return Err(Error::InvalidDimension(format!(
            "grid extents must be at least 2x2, got {height}x{width}"
        )));
    }
    let coords = geo::affine_grid_coords(theta.data(), height, width);
    Ok(Tensor::from_parts(vec![height, width, 2], coords))
}

/// Gradient of [`affine_grid_forward`] with respect to theta.
pub(crate) fn affine_grid_backward<T: Scalar>(
    adj: &Tensor<T>,
    height: usize,
    width: usize,
) -> Tensor<T> {
    let ad = adj.data();
    let mut dt = [T::zero(); 6];
    for r in 0..height {
        let y = geo::norm_coord::<T>(r, height);
        for c in 0..width {
            let x = geo::norm_coord::<T>(c, width);
            let i = 2 * (r * width + c);
            let ax = ad[i];
            let ay = ad[i + 1];
            dt[0] += ax * x;
            dt[1] += ax * y;
            dt[2] += ax;
            dt[3] += ay * x;
            dt[4] += ay * y;
            dt[5] += ay;
        }
    }
    Tensor::from_parts(vec![2, 3], dt.to_vec())
}

fn bilinear_dims(image: &[usize], grid: &[usize]) -> Result<(usize, usize, usize, usize)> {
    let [h, w]: [usize; 2] = image
        .try_into()
        .map_err(|_| Error::Shape(format!("sampled image must be rank 2, got {image:?}")))?;
    match grid {
        [gh, gw, 2] => Ok((h, w, *gh, *gw)),
        other => Err(Error::Shape(format!(
            "grid must be shaped [h, w, 2], got {other:?}"
        ))),
    }
}

/// Bilinear sample of a rank-2 image at a [gh, gw, 2] grid.
pub(crate) fn bilinear_forward<T: Scalar>(
    image: &Tensor<T>,
    grid: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (h, w, gh, gw) = bilinear_dims(image.shape(), grid.shape())?;
    let mut out = vec![T::zero(); gh * gw];
    geo::bilinear_gather(image.data(), h, w, grid.data(), &mut out);
    Ok(Tensor::from_parts(vec![gh, gw], out))
}

/// Gradients of [`bilinear_forward`]: (d_image, d_grid).
pub(crate) fn bilinear_backward<T: Scalar>(
    image: &Tensor<T>,
    grid: &Tensor<T>,
    adj: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let gd = grid.data();
    let ad = adj.data();
    let mut di = vec![T::zero(); h * w];
    let mut dg = vec![T::zero(); gd.len()];
    for (i, &a) in ad.iter().enumerate() {
        let (dx, dy, corners) =
            geo::bilinear_backward_at(image.data(), h, w, gd[2 * i], gd[2 * i + 1]);
        dg[2 * i] += a * dx;
        dg[2 * i + 1] += a * dy;
        for (r, c, wgt) in corners {
            if r >= 0 && c >= 0 && r < h as i64 && c < w as i64 {
                di[r as usize * w + c as usize] += a * wgt;
            }
        }
    }
    (
        Tensor::from_parts(vec![h, w], di),
        Tensor::from_parts(grid.shape().to_vec(), dg),
    )
}

/// Sum of squared differences, as a one-element tensor.
pub(crate) fn euclidean_forward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "loss operands differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut acc = T::zero();
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        acc += d * d;
    }
    Ok(Tensor::scalar(acc))
}

/// Gradient of [`euclidean_forward`] with respect to its first operand.
pub(crate) fn euclidean_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    adj: &Tensor<T>,
) -> Tensor<T> {
    let two = T::one() + T::one();
    let s = adj.data()[0];
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| two * (x - y) * s)
        .collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}
