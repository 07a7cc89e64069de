//! Define-by-run reverse-mode differentiation over the small set of tensor
//! primitives the pipeline needs.
//!
//! Every op computes its value eagerly when pushed onto the [`Graph`];
//! [`Graph::backward`] walks the tape in reverse, each primitive supplying an
//! analytic adjoint. Parameters live outside the graph in a [`ParamStore`]
//! so one set of weights can serve many graphs.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::chart::{Orientation, UnfoldChart};
use crate::crown;
use crate::sweep::{self, SweepCache};
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named trainable tensors plus their gradient accumulators.
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.shape());
        let id = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
        });
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    /// Fan-in-scaled uniform init in (−1/√fan_in, 1/√fan_in).
    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl rand::Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| rng.gen::<f64>() * 2.0 * bound - bound)
            .collect();
        self.add(name, Tensor::from_vec(shape, data))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().fill(0.0);
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

enum Op {
    Input,
    Relu {
        input: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sum {
        input: NodeId,
    },
    SqueezeLast {
        input: NodeId,
    },
    Pad2 {
        input: NodeId,
        margin: usize,
    },
    Pad3 {
        input: NodeId,
        margin: usize,
    },
    Conv2d {
        input: NodeId,
        kernel: ParamId,
        bias: ParamId,
        stride: usize,
        orientation: Orientation,
    },
    Conv3d {
        input: NodeId,
        kernel: ParamId,
        bias: ParamId,
        orientation: Orientation,
    },
    ToCrown {
        input: NodeId,
        chart: Arc<UnfoldChart>,
        orientation: Orientation,
    },
    ToCrownVol {
        input: NodeId,
        chart: Arc<UnfoldChart>,
        orientation: Orientation,
    },
    FromCrown {
        col: NodeId,
        row: NodeId,
        chart: Arc<UnfoldChart>,
    },
    FromCrownVol {
        col: NodeId,
        row: NodeId,
        chart: Arc<UnfoldChart>,
    },
    CostVolume {
        features: Vec<NodeId>,
        cache: Arc<SweepCache>,
        validity_channel: bool,
    },
    Softmax {
        input: NodeId,
    },
    SoftArgmax {
        input: NodeId,
    },
    Huber {
        pred: NodeId,
        target: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    aux: Option<Tensor>,
}

/// The tape: values computed eagerly, adjoints replayed in reverse.
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        value.assert_finite("op output");
        self.nodes.push(Node {
            value,
            op,
            aux: None,
        });
        self.nodes.len() - 1
    }

    pub fn value(&self, n: NodeId) -> &Tensor {
        &self.nodes[n].value
    }

    /// Gradient of the last backward pass w.r.t. node `n`, if it received one.
    pub fn grad(&self, n: NodeId) -> Option<&Tensor> {
        self.grads.get(n).and_then(|g| g.as_ref())
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let mut v = self.nodes[input].value.clone();
        for x in v.data_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        self.push(v, Op::Relu { input })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(
            self.nodes[a].value.shape(),
            self.nodes[b].value.shape(),
            "add: shape mismatch"
        );
        let mut v = self.nodes[a].value.clone();
        for (x, y) in v.data_mut().iter_mut().zip(self.nodes[b].value.data()) {
            *x += y;
        }
        self.push(v, Op::Add { a, b })
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let s: f64 = self.nodes[input].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { input })
    }

    pub fn squeeze_last(&mut self, input: NodeId) -> NodeId {
        let shape = self.nodes[input].value.shape();
        assert_eq!(*shape.last().unwrap(), 1, "squeeze_last: last dim must be 1");
        let new_shape: Vec<usize> = shape[..shape.len() - 1].to_vec();
        let v = self.nodes[input].value.reshaped(&new_shape);
        self.push(v, Op::SqueezeLast { input })
    }

    pub fn pad_replicate2(&mut self, input: NodeId, margin: usize) -> NodeId {
        let v = crown::pad_replicate2(&self.nodes[input].value, margin);
        self.push(v, Op::Pad2 { input, margin })
    }

    pub fn pad_replicate3(&mut self, input: NodeId, margin: usize) -> NodeId {
        let v = crown::pad_replicate3(&self.nodes[input].value, margin);
        self.push(v, Op::Pad3 { input, margin })
    }

    /// Valid 3×3 cross-correlation over the last two dims of `[R, C, H, W]`.
    /// `Row` orientation applies the kernel rotated 90° so the designated
    /// weights face the rectangle's longer axis.
    pub fn conv2d(
        &mut self,
        params: &ParamStore,
        input: NodeId,
        kernel: ParamId,
        bias: ParamId,
        stride: usize,
        orientation: Orientation,
    ) -> NodeId {
        let k = oriented_kernel2(params.get(kernel), orientation);
        let v = conv2d_forward(&self.nodes[input].value, &k, params.get(bias), stride);
        self.push(
            v,
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                orientation,
            },
        )
    }

    /// Valid 3×3×3 cross-correlation over the last three dims of `[R, C, D, H, W]`.
    /// Orientation rotates the two spatial axes only; the depth axis is shared.
    pub fn conv3d(
        &mut self,
        params: &ParamStore,
        input: NodeId,
        kernel: ParamId,
        bias: ParamId,
        orientation: Orientation,
    ) -> NodeId {
        let k = oriented_kernel3(params.get(kernel), orientation);
        let v = conv3d_forward(&self.nodes[input].value, &k, params.get(bias));
        self.push(
            v,
            Op::Conv3d {
                input,
                kernel,
                bias,
                orientation,
            },
        )
    }

    pub fn to_crown(
        &mut self,
        input: NodeId,
        chart: &Arc<UnfoldChart>,
        orientation: Orientation,
    ) -> NodeId {
        let v = crown::to_crown(&self.nodes[input].value, chart, orientation);
        self.push(
            v,
            Op::ToCrown {
                input,
                chart: Arc::clone(chart),
                orientation,
            },
        )
    }

    pub fn to_crown_vol(
        &mut self,
        input: NodeId,
        chart: &Arc<UnfoldChart>,
        orientation: Orientation,
    ) -> NodeId {
        let v = crown::to_crown_vol(&self.nodes[input].value, chart, orientation);
        self.push(
            v,
            Op::ToCrownVol {
                input,
                chart: Arc::clone(chart),
                orientation,
            },
        )
    }

    pub fn from_crown(&mut self, col: NodeId, row: NodeId, chart: &Arc<UnfoldChart>) -> NodeId {
        let v = crown::from_crown(&self.nodes[col].value, &self.nodes[row].value, chart);
        self.push(
            v,
            Op::FromCrown {
                col,
                row,
                chart: Arc::clone(chart),
            },
        )
    }

    pub fn from_crown_vol(&mut self, col: NodeId, row: NodeId, chart: &Arc<UnfoldChart>) -> NodeId {
        let v = crown::from_crown_vol(&self.nodes[col].value, &self.nodes[row].value, chart);
        self.push(
            v,
            Op::FromCrownVol {
                col,
                row,
                chart: Arc::clone(chart),
            },
        )
    }

    /// Barycentric-blended multi-camera sampling into a `[V, N, K·C]` volume
    /// (plus K validity channels when requested).
    pub fn cost_volume(
        &mut self,
        features: Vec<NodeId>,
        cache: &Arc<SweepCache>,
        validity_channel: bool,
    ) -> NodeId {
        let tensors: Vec<&Tensor> = features.iter().map(|&n| &self.nodes[n].value).collect();
        let v = sweep::cost_volume_forward(&tensors, cache, validity_channel);
        self.push(
            v,
            Op::CostVolume {
                features,
                cache: Arc::clone(cache),
                validity_channel,
            },
        )
    }

    /// Row-wise softmax over the last dimension of `[V, N]`.
    pub fn softmax(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input].value;
        let n = *x.shape().last().unwrap();
        let mut v = x.clone();
        for row in v.data_mut().chunks_mut(n) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for p in row.iter_mut() {
                *p = (*p - m).exp();
                s += *p;
            }
            for p in row.iter_mut() {
                *p /= s;
            }
        }
        self.push(v, Op::Softmax { input })
    }

    /// Soft argmax over the last dimension: expectation of the 1-based index
    /// under the softmax of each row. `[V, N]` → `[V]`.
    pub fn soft_argmax(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input].value;
        assert_eq!(x.shape().len(), 2, "soft_argmax expects [V, N]");
        let (vcount, n) = (x.shape()[0], x.shape()[1]);
        let mut probs = x.clone();
        let mut out = Tensor::zeros(&[vcount]);
        for (row, o) in probs.data_mut().chunks_mut(n).zip(out.data_mut()) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for p in row.iter_mut() {
                *p = (*p - m).exp();
                s += *p;
            }
            let mut e = 0.0;
            for (j, p) in row.iter_mut().enumerate() {
                *p /= s;
                e += (j + 1) as f64 * *p;
            }
            *o = e;
        }
        let id = self.push(out, Op::SoftArgmax { input });
        self.nodes[id].aux = Some(probs);
        id
    }

    /// Mean Huber loss (δ = 1) between a prediction node and a constant target.
    pub fn huber(&mut self, pred: NodeId, target: Tensor) -> NodeId {
        let p = &self.nodes[pred].value;
        assert_eq!(p.shape(), target.shape(), "huber: shape mismatch");
        let n = p.numel() as f64;
        let mut acc = 0.0;
        for (a, b) in p.data().iter().zip(target.data()) {
            let e = a - b;
            acc += if e.abs() <= 1.0 {
                0.5 * e * e
            } else {
                e.abs() - 0.5
            };
        }
        self.push(Tensor::scalar(acc / n), Op::Huber { pred, target })
    }

    /// Reverse pass from a scalar node, accumulating parameter gradients into
    /// `params` and node gradients retrievable via [`Graph::grad`].
    pub fn backward(&mut self, loss: NodeId, params: &mut ParamStore) {
        assert!(
            loss < self.nodes.len(),
            "backward called on a node that was never computed"
        );
        assert_eq!(self.nodes[loss].value.numel(), 1, "loss must be scalar");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss] = Some(Tensor::scalar(1.0));

        for id in (0..self.nodes.len()).rev() {
            let Some(g) = self.grads[id].take() else {
                continue;
            };
            self.step(id, &g, params);
            self.grads[id] = Some(g);
        }
    }

    fn accumulate(&mut self, node: NodeId, delta: Tensor) {
        match &mut self.grads[node] {
            Some(g) => {
                debug_assert_eq!(g.shape(), delta.shape());
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn step(&mut self, id: NodeId, g: &Tensor, params: &mut ParamStore) {
        // Ops are taken apart immutably; accumulation happens after each match
        // arm so the borrows stay disjoint.
        match &self.nodes[id].op {
            Op::Input => {}
            Op::Relu { input } => {
                let input = *input;
                let mut d = g.clone();
                for (dx, x) in d.data_mut().iter_mut().zip(self.nodes[input].value.data()) {
                    if *x <= 0.0 {
                        *dx = 0.0;
                    }
                }
                self.accumulate(input, d);
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            Op::Sum { input } => {
                let input = *input;
                let d = Tensor::filled(self.nodes[input].value.shape(), g.item());
                self.accumulate(input, d);
            }
            Op::SqueezeLast { input } => {
                let input = *input;
                let d = g.reshaped(self.nodes[input].value.shape());
                self.accumulate(input, d);
            }
            Op::Pad2 { input, margin } => {
                let (input, margin) = (*input, *margin);
                let d = crown::pad_replicate2_adjoint(g, margin);
                self.accumulate(input, d);
            }
            Op::Pad3 { input, margin } => {
                let (input, margin) = (*input, *margin);
                let d = crown::pad_replicate3_adjoint(g, margin);
                self.accumulate(input, d);
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                orientation,
            } => {
                let (input, kernel, bias, stride, orientation) =
                    (*input, *kernel, *bias, *stride, *orientation);
                let k_eff = oriented_kernel2(params.get(kernel), orientation);
                let (dx, dk_eff, db) =
                    conv2d_backward(&self.nodes[input].value, &k_eff, g, stride);
                let dk = unoriented_kernel2(&dk_eff, orientation);
                add_into(params.entries_mut()[kernel.0].grad.data_mut(), dk.data());
                add_into(params.entries_mut()[bias.0].grad.data_mut(), db.data());
                self.accumulate(input, dx);
            }
            Op::Conv3d {
                input,
                kernel,
                bias,
                orientation,
            } => {
                let (input, kernel, bias, orientation) = (*input, *kernel, *bias, *orientation);
                let k_eff = oriented_kernel3(params.get(kernel), orientation);
                let (dx, dk_eff, db) = conv3d_backward(&self.nodes[input].value, &k_eff, g);
                let dk = unoriented_kernel3(&dk_eff, orientation);
                add_into(params.entries_mut()[kernel.0].grad.data_mut(), dk.data());
                add_into(params.entries_mut()[bias.0].grad.data_mut(), db.data());
                self.accumulate(input, dx);
            }
            Op::ToCrown {
                input,
                chart,
                orientation,
            } => {
                let (input, orientation) = (*input, *orientation);
                let chart = Arc::clone(chart);
                let d = crown::to_crown_adjoint(g, &chart, orientation);
                self.accumulate(input, d);
            }
            Op::ToCrownVol {
                input,
                chart,
                orientation,
            } => {
                let (input, orientation) = (*input, *orientation);
                let chart = Arc::clone(chart);
                let d = crown::to_crown_vol_adjoint(g, &chart, orientation);
                self.accumulate(input, d);
            }
            Op::FromCrown { col, row, chart } => {
                let (col, row) = (*col, *row);
                let chart = Arc::clone(chart);
                let (dcol, drow) = crown::from_crown_adjoint(g, &chart);
                self.accumulate(col, dcol);
                self.accumulate(row, drow);
            }
            Op::FromCrownVol { col, row, chart } => {
                let (col, row) = (*col, *row);
                let chart = Arc::clone(chart);
                let (dcol, drow) = crown::from_crown_vol_adjoint(
                    g,
                    &chart,
                    self.nodes[col].value.shape(),
                );
                self.accumulate(col, dcol);
                self.accumulate(row, drow);
            }
            Op::CostVolume {
                features,
                cache,
                validity_channel: _,
            } => {
                let features = features.clone();
                let cache = Arc::clone(cache);
                let c_feat = self.nodes[features[0]].value.shape()[1];
                let grads = sweep::cost_volume_adjoint(g, &cache, features.len(), c_feat);
                for (node, d) in features.into_iter().zip(grads) {
                    self.accumulate(node, d);
                }
            }
            Op::Softmax { input } => {
                let input = *input;
                let n = *self.nodes[id].value.shape().last().unwrap();
                let probs = self.nodes[id].value.clone();
                let mut d = g.clone();
                for (drow, prow) in d.data_mut().chunks_mut(n).zip(probs.data().chunks(n)) {
                    let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                    for (dx, p) in drow.iter_mut().zip(prow) {
                        *dx = p * (*dx - dot);
                    }
                }
                self.accumulate(input, d);
            }
            Op::SoftArgmax { input } => {
                let input = *input;
                let probs = self.nodes[id].aux.as_ref().unwrap().clone();
                let out = self.nodes[id].value.clone();
                let n = probs.shape()[1];
                let mut d = Tensor::zeros(probs.shape());
                for ((drow, prow), (o, go)) in d
                    .data_mut()
                    .chunks_mut(n)
                    .zip(probs.data().chunks(n))
                    .zip(out.data().iter().zip(g.data()))
                {
                    for (j, (dx, p)) in drow.iter_mut().zip(prow).enumerate() {
                        *dx = go * p * ((j + 1) as f64 - o);
                    }
                }
                self.accumulate(input, d);
            }
            Op::Huber { pred, target } => {
                let pred = *pred;
                let target = target.clone();
                let p = &self.nodes[pred].value;
                let n = p.numel() as f64;
                let scale = g.item() / n;
                let mut d = Tensor::zeros(p.shape());
                for ((dx, a), b) in d.data_mut().iter_mut().zip(p.data()).zip(target.data()) {
                    let e = a - b;
                    *dx = scale * if e.abs() <= 1.0 { e } else { e.signum() };
                }
                self.accumulate(pred, d);
            }
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 4, "expected 4-D tensor, got {s:?}");
    (s[0], s[1], s[2], s[3])
}

fn dims5(t: &Tensor) -> (usize, usize, usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 5, "expected 5-D tensor, got {s:?}");
    (s[0], s[1], s[2], s[3], s[4])
}

/// Kernel as applied for an orientation: `Col` keeps the stored layout, `Row`
/// rotates the spatial taps 90° counterclockwise.
fn oriented_kernel2(k: &Tensor, orientation: Orientation) -> Tensor {
    match orientation {
        Orientation::Col => k.clone(),
        Orientation::Row => {
            let s = k.shape();
            let (co, ci) = (s[0], s[1]);
            let mut out = Tensor::zeros(s);
            for p in 0..co * ci {
                let src = &k.data()[p * 9..][..9];
                let dst = &mut out.data_mut()[p * 9..][..9];
                for i in 0..3 {
                    for j in 0..3 {
                        dst[i * 3 + j] = src[j * 3 + (2 - i)];
                    }
                }
            }
            out
        }
    }
}

/// Inverse of [`oriented_kernel2`] applied to a gradient.
fn unoriented_kernel2(dk: &Tensor, orientation: Orientation) -> Tensor {
    match orientation {
        Orientation::Col => dk.clone(),
        Orientation::Row => {
            let s = dk.shape();
            let (co, ci) = (s[0], s[1]);
            let mut out = Tensor::zeros(s);
            for p in 0..co * ci {
                let src = &dk.data()[p * 9..][..9];
                let dst = &mut out.data_mut()[p * 9..][..9];
                for i in 0..3 {
                    for j in 0..3 {
                        dst[i * 3 + j] = src[(2 - j) * 3 + i];
                    }
                }
            }
            out
        }
    }
}

/// 3D variant: rotates the two trailing spatial axes, leaves the depth axis.
fn oriented_kernel3(k: &Tensor, orientation: Orientation) -> Tensor {
    match orientation {
        Orientation::Col => k.clone(),
        Orientation::Row => {
            let s = k.shape();
            let planes = s[0] * s[1] * s[2];
            let mut out = Tensor::zeros(s);
            for p in 0..planes {
                let src = &k.data()[p * 9..][..9];
                let dst = &mut out.data_mut()[p * 9..][..9];
                for i in 0..3 {
                    for j in 0..3 {
                        dst[i * 3 + j] = src[j * 3 + (2 - i)];
                    }
                }
            }
            out
        }
    }
}

fn unoriented_kernel3(dk: &Tensor, orientation: Orientation) -> Tensor {
    match orientation {
        Orientation::Col => dk.clone(),
        Orientation::Row => {
            let s = dk.shape();
            let planes = s[0] * s[1] * s[2];
            let mut out = Tensor::zeros(s);
            for p in 0..planes {
                let src = &dk.data()[p * 9..][..9];
                let dst = &mut out.data_mut()[p * 9..][..9];
                for i in 0..3 {
                    for j in 0..3 {
                        dst[i * 3 + j] = src[(2 - j) * 3 + i];
                    }
                }
            }
            out
        }
    }
}

/// Valid 3×3 cross-correlation on `[R, Cin, Hp, Wp]` → `[R, Cout, Ho, Wo]`.
/// Stride 1 or 2; caller pads beforehand.
pub fn conv2d_forward(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize) -> Tensor {
    let (rects, ci, hp, wp) = dims4(input);
    let co = kernel.shape()[0];
    assert_eq!(kernel.shape(), &[co, ci, 3, 3], "kernel must be [Co,Ci,3,3]");
    assert_eq!(bias.shape(), &[co]);
    assert!(stride == 1 || stride == 2, "stride must be 1 or 2");
    assert!(hp >= 3 && wp >= 3, "input {hp}x{wp} smaller than kernel");
    let ho = (hp - 3) / stride + 1;
    let wo = (wp - 3) / stride + 1;
    let mut out = Tensor::zeros(&[rects, co, ho, wo]);
    let xd = input.data();
    let kd = kernel.data();
    let bd = bias.data();

    out.data_mut()
        .par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(plane, o)| {
            let rect = plane / co;
            let oc = plane % co;
            o.fill(bd[oc]);
            for ic in 0..ci {
                let inp = &xd[(rect * ci + ic) * hp * wp..][..hp * wp];
                let k = &kd[(oc * ci + ic) * 9..][..9];
                let (k0, k1, k2, k3, k4, k5, k6, k7, k8) =
                    (k[0], k[1], k[2], k[3], k[4], k[5], k[6], k[7], k[8]);
                for y in 0..ho {
                    let iy = y * stride;
                    let r0 = &inp[iy * wp..][..wp];
                    let r1 = &inp[(iy + 1) * wp..][..wp];
                    let r2 = &inp[(iy + 2) * wp..][..wp];
                    let orow = &mut o[y * wo..][..wo];
                    if stride == 1 {
                        for x in 0..wo {
                            orow[x] += k0 * r0[x]
                                + k1 * r0[x + 1]
                                + k2 * r0[x + 2]
                                + k3 * r1[x]
                                + k4 * r1[x + 1]
                                + k5 * r1[x + 2]
                                + k6 * r2[x]
                                + k7 * r2[x + 1]
                                + k8 * r2[x + 2];
                        }
                    } else {
                        for x in 0..wo {
                            let ix = 2 * x;
                            orow[x] += k0 * r0[ix]
                                + k1 * r0[ix + 1]
                                + k2 * r0[ix + 2]
                                + k3 * r1[ix]
                                + k4 * r1[ix + 1]
                                + k5 * r1[ix + 2]
                                + k6 * r2[ix]
                                + k7 * r2[ix + 1]
                                + k8 * r2[ix + 2];
                        }
                    }
                }
            }
        });
    out
}

/// Adjoints of [`conv2d_forward`]: gradients w.r.t. input, kernel, and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    d_out: &Tensor,
    stride: usize,
) -> (Tensor, Tensor, Tensor) {
    let (rects, ci, hp, wp) = dims4(input);
    let (_, co, ho, wo) = dims4(d_out);
    let xd = input.data();
    let kd = kernel.data();
    let gd = d_out.data();

    let mut d_input = Tensor::zeros(&[rects, ci, hp, wp]);
    d_input
        .data_mut()
        .par_chunks_mut(hp * wp)
        .enumerate()
        .for_each(|(plane, dx)| {
            let rect = plane / ci;
            let ic = plane % ci;
            for oc in 0..co {
                let k = &kd[(oc * ci + ic) * 9..][..9];
                let go = &gd[(rect * co + oc) * ho * wo..][..ho * wo];
                for y in 0..ho {
                    let iy = y * stride;
                    let grow = &go[y * wo..][..wo];
                    for x in 0..wo {
                        let g = grow[x];
                        if g == 0.0 {
                            continue;
                        }
                        let ix = x * stride;
                        for dy in 0..3 {
                            let drow = &mut dx[(iy + dy) * wp + ix..][..3];
                            drow[0] += k[dy * 3] * g;
                            drow[1] += k[dy * 3 + 1] * g;
                            drow[2] += k[dy * 3 + 2] * g;
                        }
                    }
                }
            }
        });

    let mut d_kernel = Tensor::zeros(kernel.shape());
    d_kernel
        .data_mut()
        .par_chunks_mut(ci * 9)
        .enumerate()
        .for_each(|(oc, dk)| {
            for rect in 0..rects {
                let go = &gd[(rect * co + oc) * ho * wo..][..ho * wo];
                for ic in 0..ci {
                    let inp = &xd[(rect * ci + ic) * hp * wp..][..hp * wp];
                    let acc = &mut dk[ic * 9..][..9];
                    for y in 0..ho {
                        let iy = y * stride;
                        let r0 = &inp[iy * wp..][..wp];
                        let r1 = &inp[(iy + 1) * wp..][..wp];
                        let r2 = &inp[(iy + 2) * wp..][..wp];
                        let grow = &go[y * wo..][..wo];
                        let (mut a0, mut a1, mut a2, mut a3, mut a4) = (0.0, 0.0, 0.0, 0.0, 0.0);
                        let (mut a5, mut a6, mut a7, mut a8) = (0.0, 0.0, 0.0, 0.0);
                        for x in 0..wo {
                            let g = grow[x];
                            let ix = x * stride;
                            a0 += g * r0[ix];
                            a1 += g * r0[ix + 1];
                            a2 += g * r0[ix + 2];
                            a3 += g * r1[ix];
                            a4 += g * r1[ix + 1];
                            a5 += g * r1[ix + 2];
                            a6 += g * r2[ix];
                            a7 += g * r2[ix + 1];
                            a8 += g * r2[ix + 2];
                        }
                        acc[0] += a0;
                        acc[1] += a1;
                        acc[2] += a2;
                        acc[3] += a3;
                        acc[4] += a4;
                        acc[5] += a5;
                        acc[6] += a6;
                        acc[7] += a7;
                        acc[8] += a8;
                    }
                }
            }
        });

    let mut d_bias = Tensor::zeros(&[co]);
    for rect in 0..rects {
        for oc in 0..co {
            let go = &gd[(rect * co + oc) * ho * wo..][..ho * wo];
            d_bias.data_mut()[oc] += go.iter().sum::<f64>();
        }
    }

    (d_input, d_kernel, d_bias)
}

/// Valid 3×3×3 cross-correlation on `[R, Cin, Dp, Hp, Wp]` → `[R, Cout, Do, Ho, Wo]`.
pub fn conv3d_forward(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Tensor {
    let (rects, ci, dp, hp, wp) = dims5(input);
    let co = kernel.shape()[0];
    assert_eq!(
        kernel.shape(),
        &[co, ci, 3, 3, 3],
        "kernel must be [Co,Ci,3,3,3]"
    );
    assert!(dp >= 3 && hp >= 3 && wp >= 3);
    let (d_o, ho, wo) = (dp - 2, hp - 2, wp - 2);
    let mut out = Tensor::zeros(&[rects, co, d_o, ho, wo]);
    let xd = input.data();
    let kd = kernel.data();
    let bd = bias.data();

    out.data_mut()
        .par_chunks_mut(d_o * ho * wo)
        .enumerate()
        .for_each(|(plane, o)| {
            let rect = plane / co;
            let oc = plane % co;
            o.fill(bd[oc]);
            for ic in 0..ci {
                let inp = &xd[(rect * ci + ic) * dp * hp * wp..][..dp * hp * wp];
                let k = &kd[(oc * ci + ic) * 27..][..27];
                for z in 0..d_o {
                    for y in 0..ho {
                        let orow = &mut o[(z * ho + y) * wo..][..wo];
                        for t in 0..9 {
                            let (zi, yi) = (t / 3, t % 3);
                            let row = &inp[((z + zi) * hp + y + yi) * wp..][..wp];
                            let kk = &k[t * 3..][..3];
                            let (c0, c1, c2) = (kk[0], kk[1], kk[2]);
                            for x in 0..wo {
                                orow[x] += c0 * row[x] + c1 * row[x + 1] + c2 * row[x + 2];
                            }
                        }
                    }
                }
            }
        });
    out
}

/// Adjoints of [`conv3d_forward`].
pub fn conv3d_backward(input: &Tensor, kernel: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (rects, ci, dp, hp, wp) = dims5(input);
    let (_, co, d_o, ho, wo) = dims5(d_out);
    let xd = input.data();
    let kd = kernel.data();
    let gd = d_out.data();

    let mut d_input = Tensor::zeros(&[rects, ci, dp, hp, wp]);
    d_input
        .data_mut()
        .par_chunks_mut(dp * hp * wp)
        .enumerate()
        .for_each(|(plane, dx)| {
            let rect = plane / ci;
            let ic = plane % ci;
            for oc in 0..co {
                let k = &kd[(oc * ci + ic) * 27..][..27];
                let go = &gd[(rect * co + oc) * d_o * ho * wo..][..d_o * ho * wo];
                for z in 0..d_o {
                    for y in 0..ho {
                        let grow = &go[(z * ho + y) * wo..][..wo];
                        for x in 0..wo {
                            let g = grow[x];
                            if g == 0.0 {
                                continue;
                            }
                            for t in 0..9 {
                                let (zi, yi) = (t / 3, t % 3);
                                let drow = &mut dx[((z + zi) * hp + y + yi) * wp + x..][..3];
                                let kk = &k[t * 3..][..3];
                                drow[0] += kk[0] * g;
                                drow[1] += kk[1] * g;
                                drow[2] += kk[2] * g;
                            }
                        }
                    }
                }
            }
        });

    let mut d_kernel = Tensor::zeros(kernel.shape());
    d_kernel
        .data_mut()
        .par_chunks_mut(ci * 27)
        .enumerate()
        .for_each(|(oc, dk)| {
            for rect in 0..rects {
                let go = &gd[(rect * co + oc) * d_o * ho * wo..][..d_o * ho * wo];
                for ic in 0..ci {
                    let inp = &xd[(rect * ci + ic) * dp * hp * wp..][..dp * hp * wp];
                    let acc = &mut dk[ic * 27..][..27];
                    for z in 0..d_o {
                        for y in 0..ho {
                            let grow = &go[(z * ho + y) * wo..][..wo];
                            for t in 0..9 {
                                let (zi, yi) = (t / 3, t % 3);
                                let row = &inp[((z + zi) * hp + y + yi) * wp..][..wp];
                                let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
                                for x in 0..wo {
                                    let g = grow[x];
                                    a0 += g * row[x];
                                    a1 += g * row[x + 1];
                                    a2 += g * row[x + 2];
                                }
                                acc[t * 3] += a0;
                                acc[t * 3 + 1] += a1;
                                acc[t * 3 + 2] += a2;
                            }
                        }
                    }
                }
            }
        });

    let mut d_bias = Tensor::zeros(&[co]);
    for rect in 0..rects {
        for oc in 0..co {
            let go = &gd[(rect * co + oc) * d_o * ho * wo..][..d_o * ho * wo];
            d_bias.data_mut()[oc] += go.iter().sum::<f64>();
        }
    }

    (d_input, d_kernel, d_bias)
}

/// Helpers for comparing analytic gradients with central finite differences.
pub mod gradcheck {
    /// Central difference (f(+h) − f(−h)) / 2h where `eval_at(t)` evaluates the
    /// loss with the chosen quantity offset by `t` along a fixed direction.
    pub fn central_diff(mut eval_at: impl FnMut(f64) -> f64, h: f64) -> f64 {
        (eval_at(h) - eval_at(-h)) / (2.0 * h)
    }

    /// Relative error guarded for near-zero pairs.
    pub fn rel_err(a: f64, b: f64) -> f64 {
        let m = a.abs().max(b.abs());
        if m < 1e-8 {
            0.0
        } else {
            (a - b).abs() / m
        }
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}
