//! Append-only computation tape with reverse-mode differentiation.
//!
//! Each builder method runs its forward computation eagerly and records the
//! node; `backward` walks the tape in reverse insertion order, which is a
//! valid reverse topological order because inputs always precede consumers.

use crate::autodiff::ops;
use crate::autodiff::param::{GradTable, ParamId, ParamSet, Pathway};
use crate::autodiff::scalar::Scalar;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum OpKind {
    Leaf,
    FullyConnected,
    Conv2d { stride: usize },
    ConvTranspose2d { stride: usize },
    Relu,
    Add,
    Concat { axis: usize },
    Reshape,
    AffineGrid { height: usize, width: usize },
    BilinearSample,
    EuclideanLoss,
}

#[derive(Debug)]
struct Node<T> {
    op: OpKind,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
    param: Option<ParamId>,
}

/// One differentiable computation: values are computed as nodes are added,
/// gradients on demand by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: OpKind, inputs: Vec<NodeId>, value: Tensor<T>, param: Option<ParamId>) -> NodeId {
        self.nodes.push(Node { op, inputs, value, param });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::Contract(format!(
                "node {} does not belong to this tape",
                id.0
            )));
        }
        Ok(())
    }

    /// Adds a constant leaf (no gradient of its own).
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(OpKind::Leaf, vec![], value, None)
    }

    /// Binds a parameter's current value as a leaf; its gradient lands in
    /// the table under this id.
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> NodeId {
        self.push(OpKind::Leaf, vec![], params.value(id).clone(), Some(id))
    }

    /// y = xW + b. x may be rank 1 ([n]) or rank 2 ([batch, n]).
    pub fn fully_connected(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(x)?;
        self.check(w)?;
        self.check(b)?;
        let value = ops::fc_forward(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(OpKind::FullyConnected, vec![x, w, b], value, None))
    }

    /// Strided same-padded convolution over NHWC with a per-channel bias.
    pub fn conv2d(&mut self, x: NodeId, kernels: NodeId, bias: NodeId, stride: usize) -> Result<NodeId> {
        self.check(x)?;
        self.check(kernels)?;
        self.check(bias)?;
        let value = ops::conv_forward(self.value(x), self.value(kernels), Some(self.value(bias)), stride)?;
        Ok(self.push(OpKind::Conv2d { stride }, vec![x, kernels, bias], value, None))
    }

    /// Transposed convolution: the adjoint of [`Tape::conv2d`]'s linear map,
    /// so spatial extents multiply by the stride. The kernel is laid out as
    /// (kh, kw, c_out, c_in) and a matching kernel tensor satisfies
    /// ⟨conv2d(x), y⟩ = ⟨x, conv_transpose2d(y)⟩.
    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        kernels: NodeId,
        bias: NodeId,
        stride: usize,
    ) -> Result<NodeId> {
        self.check(x)?;
        self.check(kernels)?;
        self.check(bias)?;
        let xv = self.value(x);
        let kv = self.value(kernels);
        let xs = xv.shape();
        let ks = kv.shape();
        if xs.len() != 4 || ks.len() != 4 {
            return Err(Error::Shape(format!(
                "transposed convolution needs rank-4 input and kernel, got {xs:?} and {ks:?}"
            )));
        }
        if ks[3] != xs[3] {
            return Err(Error::Shape(format!(
                "kernel expects {} input channels, tensor has {}",
                ks[3], xs[3]
            )));
        }
        let out_shape = [xs[0], xs[1] * stride, xs[2] * stride, ks[2]];
        let mut value = ops::conv_grad_input(xv, kv, stride, out_shape)?;
        ops::add_channel_bias(&mut value, self.value(bias))?;
        Ok(self.push(OpKind::ConvTranspose2d { stride }, vec![x, kernels, bias], value, None))
    }

    /// Elementwise max(x, 0).
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let value = ops::relu_forward(self.value(x));
        Ok(self.push(OpKind::Relu, vec![x], value, None))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "add operands differ in shape: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.push(OpKind::Add, vec![a, b], value, None))
    }

    /// Concatenation along `axis`.
    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId> {
        for &x in xs {
            self.check(x)?;
        }
        let values: Vec<&Tensor<T>> = xs.iter().map(|&x| self.value(x)).collect();
        let value = ops::concat_forward(&values, axis)?;
        Ok(self.push(OpKind::Concat { axis }, xs.to_vec(), value, None))
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, x: NodeId, shape: impl Into<Vec<usize>>) -> Result<NodeId> {
        self.check(x)?;
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push(OpKind::Reshape, vec![x], value, None))
    }

    /// Sampling grid of a [2, 3] affine matrix, shaped [h, w, 2].
    pub fn affine_grid(&mut self, theta: NodeId, height: usize, width: usize) -> Result<NodeId> {
        self.check(theta)?;
        let value = ops::affine_grid_forward(self.value(theta), height, width)?;
        Ok(self.push(OpKind::AffineGrid { height, width }, vec![theta], value, None))
    }

    /// Bilinear sample of a rank-2 image at a [gh, gw, 2] grid.
    pub fn bilinear_sample(&mut self, image: NodeId, grid: NodeId) -> Result<NodeId> {
        self.check(image)?;
        self.check(grid)?;
        let value = ops::bilinear_forward(self.value(image), self.value(grid))?;
        Ok(self.push(OpKind::BilinearSample, vec![image, grid], value, None))
    }

    /// Sum of squared differences against a constant target, as a
    /// one-element tensor.
    pub fn euclidean_loss(&mut self, a: NodeId, target: &Tensor<T>) -> Result<NodeId> {
        self.check(a)?;
        let t = self.constant(target.clone());
        let value = ops::euclidean_forward(self.value(a), self.value(t))?;
        Ok(self.push(OpKind::EuclideanLoss, vec![a, t], value, None))
    }

    /// Reverse-mode gradients of a scalar loss with respect to every
    /// parameter bound on this tape.
    ///
    /// `active` filters by pathway: parameters whose pathway it rejects get
    /// an exactly zero gradient, as do frozen parameters and parameters the
    /// loss never touched. Binding the same parameter at several nodes sums
    /// their contributions.
    pub fn backward(
        &self,
        loss: NodeId,
        params: &ParamSet<T>,
        active: impl Fn(Pathway) -> bool,
    ) -> Result<GradTable<T>> {
        self.check(loss)?;
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adjoints: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(adj) = adjoints[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                OpKind::Leaf => {
                    adjoints[i] = Some(adj);
                    continue;
                }
                OpKind::FullyConnected => {
                    let (x, w) = (node.inputs[0], node.inputs[1]);
                    let (dx, dw, db) = ops::fc_backward(self.value(x), self.value(w), &adj);
                    self.accumulate(&mut adjoints, node.inputs[0], dx);
                    self.accumulate(&mut adjoints, node.inputs[1], dw);
                    self.accumulate(&mut adjoints, node.inputs[2], db);
                }
                OpKind::Conv2d { stride } => {
                    let (x, k) = (node.inputs[0], node.inputs[1]);
                    let in_shape: [usize; 4] =
                        self.value(x).shape().try_into().expect("checked at build");
                    let k_shape: [usize; 4] =
                        self.value(k).shape().try_into().expect("checked at build");
                    let dx = ops::conv_grad_input(&adj, self.value(k), *stride, in_shape)?;
                    let dk = ops::conv_grad_kernel(self.value(x), &adj, *stride, k_shape)?;
                    let db = ops::channel_sum(&adj)?;
                    self.accumulate(&mut adjoints, node.inputs[0], dx);
                    self.accumulate(&mut adjoints, node.inputs[1], dk);
                    self.accumulate(&mut adjoints, node.inputs[2], db);
                }
                OpKind::ConvTranspose2d { stride } => {
                    let (x, k) = (node.inputs[0], node.inputs[1]);
                    let k_shape: [usize; 4] =
                        self.value(k).shape().try_into().expect("checked at build");
                    let dx = ops::conv_forward(&adj, self.value(k), None, *stride)?;
                    let dk = ops::conv_grad_kernel(&adj, self.value(x), *stride, k_shape)?;
                    let db = ops::channel_sum(&adj)?;
                    self.accumulate(&mut adjoints, node.inputs[0], dx);
                    self.accumulate(&mut adjoints, node.inputs[1], dk);
                    self.accumulate(&mut adjoints, node.inputs[2], db);
                }
                OpKind::Relu => {
                    let dx = ops::relu_backward(self.value(node.inputs[0]), &adj);
                    self.accumulate(&mut adjoints, node.inputs[0], dx);
                }
                OpKind::Add => {
                    self.accumulate(&mut adjoints, node.inputs[0], adj.clone());
                    self.accumulate(&mut adjoints, node.inputs[1], adj);
                }
                OpKind::Concat { axis } => {
                    let shapes: Vec<&[usize]> =
                        node.inputs.iter().map(|&x| self.value(x).shape()).collect();
                    let pieces = ops::concat_backward(&adj, &shapes, *axis);
                    for (&input, piece) in node.inputs.iter().zip(pieces) {
                        self.accumulate(&mut adjoints, input, piece);
                    }
                }
                OpKind::Reshape => {
                    let dx = adj
                        .reshaped(self.value(node.inputs[0]).shape().to_vec())
                        .expect("element counts matched at build");
                    self.accumulate(&mut adjoints, node.inputs[0], dx);
                }
                OpKind::AffineGrid { height, width } => {
                    let dt = ops::affine_grid_backward(&adj, *height, *width);
                    self.accumulate(&mut adjoints, node.inputs[0], dt);
                }
                OpKind::BilinearSample => {
                    let (image, grid) = (node.inputs[0], node.inputs[1]);
                    let (di, dg) = ops::bilinear_backward(self.value(image), self.value(grid), &adj);
                    self.accumulate(&mut adjoints, image, di);
                    self.accumulate(&mut adjoints, grid, dg);
                }
                OpKind::EuclideanLoss => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let da = ops::euclidean_backward(self.value(a), self.value(b), &adj);
                    self.accumulate(&mut adjoints, a, da);
                }
            }
        }
        let mut grads: Vec<Tensor<T>> = params
            .ids()
            .map(|id| Tensor::from_parts(params.value(id).shape().to_vec(), vec![T::zero(); params.value(id).numel()]))
            .collect();
        for (i, node) in self.nodes.iter().enumerate() {
            let Some(pid) = node.param else { continue };
            let Some(adj) = &adjoints[i] else { continue };
            if params.trainable(pid) && active(params.pathway(pid)) {
                grads[pid.index()].add_assign(adj);
            }
        }
        Ok(GradTable::from_parts(grads))
    }

    fn accumulate(&self, adjoints: &mut [Option<Tensor<T>>], id: NodeId, grad: Tensor<T>) {
        match &mut adjoints[id.0] {
            Some(acc) => acc.add_assign(&grad),
            slot @ None => *slot = Some(grad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set() -> ParamSet<f64> {
        ParamSet::new()
    }

    #[test]
    fn fc_with_identity_weight_and_zero_bias_is_identity() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![3], vec![0.5, -2.0, 7.0]).unwrap());
        let w = t.constant(Tensor::new(vec![3, 3], vec![
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0,
        ]).unwrap());
        let b = t.constant(Tensor::zeros(vec![3]).unwrap());
        let y = t.fully_connected(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), t.value(x).data());
    }

    #[test]
    fn fc_identity_weight_adds_bias() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let w = t.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = t.constant(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
        let y = t.fully_connected(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[4.0, 6.0]);
    }

    #[test]
    fn fc_batched_rows_are_independent() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let w = t.constant(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let b = t.constant(Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap());
        let y = t.fully_connected(x, w, b).unwrap();
        assert_eq!(t.value(y).shape(), &[2, 3]);
        assert_eq!(&t.value(y).data()[..3], &[1.1, 2.2, 3.3]);
        assert_eq!(&t.value(y).data()[3..], &[4.1, 5.2, 6.3]);
    }

    #[test]
    fn conv_with_unit_1x1_kernel_is_identity() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![1, 3, 3, 1], (0..9).map(f64::from).collect::<Vec<_>>()).unwrap());
        let k = t.constant(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
        let b = t.constant(Tensor::zeros(vec![1]).unwrap());
        let y = t.conv2d(x, k, b, 1).unwrap();
        assert_eq!(t.value(y).data(), t.value(x).data());
        assert_eq!(t.value(y).shape(), &[1, 3, 3, 1]);
    }

    #[test]
    fn box_kernel_on_delta_paints_a_box() {
        let mut t = Tape::new();
        let mut img = vec![0.0; 25];
        img[12] = 1.0;
        let x = t.constant(Tensor::new(vec![1, 5, 5, 1], img).unwrap());
        let k = t.constant(Tensor::filled(vec![3, 3, 1, 1], 1.0).unwrap());
        let b = t.constant(Tensor::zeros(vec![1]).unwrap());
        let y = t.conv2d(x, k, b, 1).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let want = if (1..=3).contains(&r) && (1..=3).contains(&c) { 1.0 } else { 0.0 };
                assert_eq!(t.value(y).data()[r * 5 + c], want, "at ({r}, {c})");
            }
        }
    }

    #[test]
    fn stride_two_conv_takes_ceil_extents() {
        let mut t = Tape::<f64>::new();
        for (h, want) in [(8usize, 4usize), (7, 4), (224, 112), (5, 3)] {
            let x = t.constant(Tensor::zeros(vec![1, h, h, 1]).unwrap());
            let k = t.constant(Tensor::zeros(vec![5, 5, 1, 2]).unwrap());
            let b = t.constant(Tensor::zeros(vec![2]).unwrap());
            let y = t.conv2d(x, k, b, 2).unwrap();
            assert_eq!(t.value(y).shape(), &[1, want, want, 2]);
        }
    }

    #[test]
    fn transposed_conv_doubles_extents_at_stride_two() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(vec![1, 4, 4, 3]).unwrap());
        let k = t.constant(Tensor::zeros(vec![5, 5, 2, 3]).unwrap());
        let b = t.constant(Tensor::zeros(vec![2]).unwrap());
        let y = t.conv_transpose2d(x, k, b, 2).unwrap();
        assert_eq!(t.value(y).shape(), &[1, 8, 8, 2]);
    }

    #[test]
    fn transposed_conv_bias_reaches_every_pixel() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(vec![1, 2, 2, 1]).unwrap());
        let k = t.constant(Tensor::zeros(vec![3, 3, 2, 1]).unwrap());
        let b = t.constant(Tensor::new(vec![2], vec![0.25, -1.0]).unwrap());
        let y = t.conv_transpose2d(x, k, b, 2).unwrap();
        for px in t.value(y).data().chunks(2) {
            assert_eq!(px, &[0.25, -1.0]);
        }
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap());
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn concat_joins_along_requested_axis() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = t.constant(Tensor::new(vec![2, 1], vec![9.0, 8.0]).unwrap());
        let y = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.value(y).shape(), &[2, 3]);
        assert_eq!(t.value(y).data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        assert!(t.concat(&[a, b], 0).is_err());
    }

    #[test]
    fn reshape_round_trip_is_identity() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2, 3], (0..6).map(f64::from).collect::<Vec<_>>()).unwrap());
        let y = t.reshape(x, vec![3, 2]).unwrap();
        let z = t.reshape(y, vec![2, 3]).unwrap();
        assert_eq!(t.value(z), t.value(x));
    }

    #[test]
    fn euclidean_loss_matches_hand_values() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let same = t.euclidean_loss(a, &Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(t.value(same).data(), &[0.0]);
        let l = t.euclidean_loss(a, &Tensor::zeros(vec![2]).unwrap()).unwrap();
        assert_eq!(t.value(l).data(), &[5.0]);
    }

    #[test]
    fn euclidean_gradient_is_twice_the_residual() {
        let mut params = set();
        let pid = params.add("a", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), Pathway::Shared).unwrap();
        let mut t = Tape::new();
        let a = t.param(&params, pid);
        let l = t.euclidean_loss(a, &Tensor::zeros(vec![2]).unwrap()).unwrap();
        let grads = t.backward(l, &params, |_| true).unwrap();
        assert_eq!(grads.get(pid).data(), &[2.0, 4.0]);
    }

    #[test]
    fn loss_at_the_target_has_zero_gradients() {
        let mut params = set();
        let pid = params.add("x", Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap(), Pathway::Shared).unwrap();
        let mut t = Tape::new();
        let x = t.param(&params, pid);
        let l = t.euclidean_loss(x, &Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap()).unwrap();
        let grads = t.backward(l, &params, |_| true).unwrap();
        assert!(grads.get(pid).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn masked_pathway_gradients_are_bitwise_zero() {
        let mut params = set();
        let h0 = params.add("head0", Tensor::new(vec![1], vec![2.0]).unwrap(), Pathway::Hypothesis(0)).unwrap();
        let h1 = params.add("head1", Tensor::new(vec![1], vec![3.0]).unwrap(), Pathway::Hypothesis(1)).unwrap();
        let shared = params.add("trunk", Tensor::new(vec![1], vec![5.0]).unwrap(), Pathway::Shared).unwrap();
        let mut t = Tape::new();
        let a = t.param(&params, h0);
        let b = t.param(&params, h1);
        let s = t.param(&params, shared);
        let ab = t.add(a, b).unwrap();
        let abs = t.add(ab, s).unwrap();
        let l = t.euclidean_loss(abs, &Tensor::zeros(vec![1]).unwrap()).unwrap();
        let grads = t.backward(l, &params, |p| p != Pathway::Hypothesis(1)).unwrap();
        assert_ne!(grads.get(h0).data()[0], 0.0);
        assert_eq!(grads.get(h1).data()[0], 0.0);
        assert_ne!(grads.get(shared).data()[0], 0.0);
    }

    #[test]
    fn frozen_parameters_keep_zero_gradients() {
        let mut params = set();
        let pid = params.add("w", Tensor::new(vec![1], vec![4.0]).unwrap(), Pathway::Shared).unwrap();
        params.set_trainable(pid, false);
        let mut t = Tape::new();
        let x = t.param(&params, pid);
        let l = t.euclidean_loss(x, &Tensor::zeros(vec![1]).unwrap()).unwrap();
        let grads = t.backward(l, &params, |_| true).unwrap();
        assert_eq!(grads.get(pid).data(), &[0.0]);
    }

    #[test]
    fn fan_out_gradients_sum() {
        let mut params = set();
        let pid = params.add("x", Tensor::new(vec![1], vec![3.0]).unwrap(), Pathway::Shared).unwrap();
        let mut t = Tape::new();
        let x = t.param(&params, pid);
        let y = t.add(x, x).unwrap();
        let l = t.euclidean_loss(y, &Tensor::zeros(vec![1]).unwrap()).unwrap();
        // L = (2x)^2, dL/dx = 8x = 24.
        let grads = t.backward(l, &params, |_| true).unwrap();
        assert_abs_diff_eq!(grads.get(pid).data()[0], 24.0, epsilon = 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(vec![2]).unwrap());
        assert!(t.backward(x, &set(), |_| true).is_err());
    }

    #[test]
    fn sampling_at_identity_theta_reproduces_the_image() {
        let mut t = Tape::new();
        let theta = t.constant(Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap());
        let data: Vec<f64> = (0..30).map(|i| f64::from(i) / 29.0).collect();
        let image = t.constant(Tensor::new(vec![5, 6], data).unwrap());
        let grid = t.affine_grid(theta, 5, 6).unwrap();
        let out = t.bilinear_sample(image, grid).unwrap();
        assert_eq!(t.value(out).data(), t.value(image).data());
    }

    #[test]
    fn interior_samples_of_a_flat_image_give_zero_theta_gradient() {
        // Shrinking the grid keeps every sample away from the border taper,
        // where even a flat image picks up a spatial gradient.
        let mut params = set();
        let gid = params.add(
            "theta",
            Tensor::new(vec![2, 3], vec![0.5, 0.0, 0.0, 0.0, 0.5, 0.0]).unwrap(),
            Pathway::Shared,
        ).unwrap();
        let mut t = Tape::new();
        let theta = t.param(&params, gid);
        let image = t.constant(Tensor::filled(vec![5, 5], 0.7).unwrap());
        let grid = t.affine_grid(theta, 5, 5).unwrap();
        let out = t.bilinear_sample(image, grid).unwrap();
        assert!(t.value(out).data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let l = t.euclidean_loss(out, &Tensor::zeros(vec![5, 5]).unwrap()).unwrap();
        let grads = t.backward(l, &params, |_| true).unwrap();
        assert!(grads.get(gid).data().iter().all(|&g| g.abs() < 1e-12));
    }
}
