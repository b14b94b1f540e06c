//! Reverse-mode differentiation over a recorded operation tape.
//!
//! Every tape method runs the matching forward kernel from [`crate::ops`] and
//! appends one node; node `i` produces variable `i`, so the recording order is
//! already topological. `backward` replays the nodes in reverse exactly once,
//! propagating vector-Jacobian products on fresh working buffers, then folds
//! the results into persistent per-leaf accumulators — calling `backward`
//! twice without resetting therefore accumulates gradients.
//!
//! The tape can also re-execute its recorded graph in f64 with one leaf's data
//! substituted (`eval_f64`). The gradient checker uses this for precise
//! central differences without touching the f32 forward/backward paths.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Handle to a variable on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { requires_grad: bool },
    MatMul { a: VarId, b: VarId },
    Conv2d { input: VarId, kernel: VarId, stride: usize, padding: usize },
    Relu { input: VarId },
    AvgPool2d { input: VarId, window: usize },
    Add { a: VarId, b: VarId },
    AddBias { input: VarId, bias: VarId },
    Sub { a: VarId, b: VarId },
    Mul { a: VarId, b: VarId },
    Scale { input: VarId, factor: f32 },
    Sum { input: VarId },
    Mean { input: VarId },
    Reshape { input: VarId },
    LogSoftmax { input: VarId, tau: f32, probs: Vec<f32> },
    PickClasses { input: VarId, labels: Vec<u32> },
    ChannelSumSq { input: VarId },
    RowL2Norm { input: VarId, norms: Vec<f32> },
}

/// Recorded forward computation plus gradient state.
#[derive(Debug, Default)]
pub struct Tape {
    vals: Vec<Tensor>,
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f32>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, val: Tensor, node: Node) -> VarId {
        let id = VarId(self.vals.len());
        self.vals.push(val);
        self.nodes.push(node);
        self.leaf_grads.push(None);
        id
    }

    /// Registers a tensor as a leaf. The tape owns a copy; gradients flow into
    /// the leaf accumulator only when `requires_grad` is set on the tensor.
    pub fn leaf(&mut self, t: Tensor) -> VarId {
        let rg = t.requires_grad;
        self.push(t, Node::Leaf { requires_grad: rg })
    }

    /// Leaf that never receives gradient (inputs, detached teacher outputs).
    pub fn constant(&mut self, t: Tensor) -> VarId {
        let mut t = t;
        t.requires_grad = false;
        self.push(t, Node::Leaf { requires_grad: false })
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.vals[id.0]
    }

    /// Gradient accumulated for a leaf across `backward` calls. `None` until
    /// a backward pass has run over a requires-grad leaf.
    pub fn grad(&self, id: VarId) -> Option<&[f32]> {
        self.leaf_grads[id.0].as_deref()
    }

    /// Moves this leaf's accumulated gradient into the tensor's own grad
    /// buffer (accumulating there as well).
    pub fn write_grad_into(&self, id: VarId, target: &mut Tensor) -> Result<()> {
        match self.grad(id) {
            Some(g) => target.accumulate_grad(g),
            None => Err(Error::parameter(format!(
                "no gradient recorded for var {}; run backward first",
                id.0
            ))),
        }
    }

    // ── recording ops ────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = ops::matmul(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(val, Node::MatMul { a, b }))
    }

    pub fn conv2d(&mut self, input: VarId, kernel: VarId, stride: usize, padding: usize) -> Result<VarId> {
        let val = ops::conv2d(&self.vals[input.0], &self.vals[kernel.0], stride, padding)?;
        Ok(self.push(val, Node::Conv2d { input, kernel, stride, padding }))
    }

    pub fn relu(&mut self, input: VarId) -> Result<VarId> {
        let val = ops::relu(&self.vals[input.0])?;
        Ok(self.push(val, Node::Relu { input }))
    }

    pub fn avgpool2d(&mut self, input: VarId, window: usize) -> Result<VarId> {
        let val = ops::avgpool2d(&self.vals[input.0], window)?;
        Ok(self.push(val, Node::AvgPool2d { input, window }))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = ops::add(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(val, Node::Add { a, b }))
    }

    pub fn add_bias(&mut self, input: VarId, bias: VarId) -> Result<VarId> {
        let val = ops::add_bias(&self.vals[input.0], &self.vals[bias.0])?;
        Ok(self.push(val, Node::AddBias { input, bias }))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = ops::sub(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(val, Node::Sub { a, b }))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = ops::mul(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(val, Node::Mul { a, b }))
    }

    pub fn scale(&mut self, input: VarId, factor: f32) -> Result<VarId> {
        let val = ops::scale(&self.vals[input.0], factor)?;
        Ok(self.push(val, Node::Scale { input, factor }))
    }

    pub fn sum(&mut self, input: VarId) -> Result<VarId> {
        let (val, _) = ops::sum(&self.vals[input.0]);
        Ok(self.push(val, Node::Sum { input }))
    }

    pub fn mean(&mut self, input: VarId) -> Result<VarId> {
        let (val, _) = ops::mean(&self.vals[input.0]);
        Ok(self.push(val, Node::Mean { input }))
    }

    pub fn reshape(&mut self, input: VarId, new_shape: Vec<usize>) -> Result<VarId> {
        let val = ops::reshape(&self.vals[input.0], new_shape)?;
        Ok(self.push(val, Node::Reshape { input }))
    }

    pub fn log_softmax(&mut self, input: VarId, tau: f32) -> Result<VarId> {
        let (val, probs) = ops::log_softmax(&self.vals[input.0], tau)?;
        Ok(self.push(val, Node::LogSoftmax { input, tau, probs }))
    }

    pub fn pick_classes(&mut self, input: VarId, labels: &[u32]) -> Result<VarId> {
        let val = ops::pick_classes(&self.vals[input.0], labels)?;
        Ok(self.push(val, Node::PickClasses { input, labels: labels.to_vec() }))
    }

    pub fn channel_sumsq(&mut self, input: VarId) -> Result<VarId> {
        let val = ops::channel_sumsq(&self.vals[input.0])?;
        Ok(self.push(val, Node::ChannelSumSq { input }))
    }

    pub fn row_l2norm(&mut self, input: VarId) -> Result<VarId> {
        let (val, norms) = ops::row_l2norm(&self.vals[input.0])?;
        Ok(self.push(val, Node::RowL2Norm { input, norms }))
    }

    // ── backward ─────────────────────────────────────────────────────────

    /// Backpropagates from a scalar loss, accumulating dLoss/dleaf into every
    /// requires-grad leaf (zeros when the loss does not depend on it).
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if loss.0 >= self.vals.len() {
            return Err(Error::parameter("backward: unknown variable".to_string()));
        }
        if !self.vals[loss.0].is_scalar() {
            return Err(Error::dimension(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.vals[loss.0].shape()
            )));
        }

        let mut work: Vec<Option<Vec<f32>>> = vec![None; self.vals.len()];
        work[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = work[id].take() else { continue };
            if matches!(self.nodes[id], Node::Leaf { .. }) {
                // Keep the arrived gradient for the fold below.
                work[id] = Some(g);
                continue;
            }
            self.backprop_node(id, &g, &mut work)?;
        }

        // Fold working grads into persistent leaf accumulators; leaves the
        // loss never touched still get explicit zeros.
        for id in 0..self.vals.len() {
            if let Node::Leaf { requires_grad: true } = self.nodes[id] {
                let contrib = work[id].take().unwrap_or_else(|| vec![0.0; self.vals[id].len()]);
                let acc = self.leaf_grads[id]
                    .get_or_insert_with(|| vec![0.0; self.vals[id].len()]);
                for (a, c) in acc.iter_mut().zip(&contrib) {
                    *a += c;
                }
            }
        }
        Ok(())
    }

    fn backprop_node(&self, id: usize, g: &[f32], work: &mut Vec<Option<Vec<f32>>>) -> Result<()> {
        match &self.nodes[id] {
            Node::Leaf { .. } => {}
            Node::MatMul { a, b } => {
                let (av, bv) = (&self.vals[a.0], &self.vals[b.0]);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                let mut da = vec![0.0f32; m * k];
                let mut db = vec![0.0f32; k * n];
                let (ad, bd) = (av.data(), bv.data());
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0f64;
                        for j in 0..n {
                            acc += f64::from(g[i * n + j]) * f64::from(bd[p * n + j]);
                        }
                        da[i * k + p] = acc as f32;
                    }
                }
                for p in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0f64;
                        for i in 0..m {
                            acc += f64::from(ad[i * k + p]) * f64::from(g[i * n + j]);
                        }
                        db[p * n + j] = acc as f32;
                    }
                }
                accum(work, a.0, &da, m * k);
                accum(work, b.0, &db, k * n);
            }
            Node::Conv2d { input, kernel, stride, padding } => {
                let (iv, kv) = (&self.vals[input.0], &self.vals[kernel.0]);
                let (n, c, h, w) = dims4(iv);
                let (f, _, kh, kw) = dims4(kv);
                let osh = self.vals[id].shape();
                let (oh, ow) = (osh[2], osh[3]);
                let mut din = vec![0.0f64; iv.len()];
                let mut dker = vec![0.0f64; kv.len()];
                let (idata, kdata) = (iv.data(), kv.data());
                for bi in 0..n {
                    for fi in 0..f {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let go = f64::from(g[((bi * f + fi) * oh + oy) * ow + ox]);
                                if go == 0.0 {
                                    continue;
                                }
                                for ci in 0..c {
                                    for ky in 0..kh {
                                        let iy = (oy * stride + ky) as isize - *padding as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        let irow = ((bi * c + ci) * h + iy as usize) * w;
                                        let krow = ((fi * c + ci) * kh + ky) * kw;
                                        for kx in 0..kw {
                                            let ix = (ox * stride + kx) as isize - *padding as isize;
                                            if ix < 0 || ix >= w as isize {
                                                continue;
                                            }
                                            din[irow + ix as usize] += go * f64::from(kdata[krow + kx]);
                                            dker[krow + kx] += go * f64::from(idata[irow + ix as usize]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                let din: Vec<f32> = din.into_iter().map(|v| v as f32).collect();
                let dker: Vec<f32> = dker.into_iter().map(|v| v as f32).collect();
                accum(work, input.0, &din, iv.len());
                accum(work, kernel.0, &dker, kv.len());
            }
            Node::Relu { input } => {
                let xv = self.vals[input.0].data();
                // Subgradient 0 at exactly 0.
                let dx: Vec<f32> = g.iter().zip(xv).map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 }).collect();
                accum(work, input.0, &dx, dx.len());
            }
            Node::AvgPool2d { input, window } => {
                let iv = &self.vals[input.0];
                let (n, c, h, w) = dims4(iv);
                let (oh, ow) = (h / window, w / window);
                let inv = 1.0f32 / (window * window) as f32;
                let mut dx = vec![0.0f32; iv.len()];
                for bi in 0..n {
                    for ci in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let gv = g[((bi * c + ci) * oh + oy) * ow + ox] * inv;
                                for dy in 0..*window {
                                    let row = ((bi * c + ci) * h + oy * window + dy) * w + ox * window;
                                    for dxi in 0..*window {
                                        dx[row + dxi] += gv;
                                    }
                                }
                            }
                        }
                    }
                }
                accum(work, input.0, &dx, iv.len());
            }
            Node::Add { a, b } => {
                accum(work, a.0, g, g.len());
                accum(work, b.0, g, g.len());
            }
            Node::AddBias { input, bias } => {
                accum(work, input.0, g, g.len());
                let xs = self.vals[input.0].shape();
                let blen = self.vals[bias.0].len();
                let mut db = vec![0.0f64; blen];
                if xs.len() == 2 {
                    let k = xs[1];
                    for (i, &gv) in g.iter().enumerate() {
                        db[i % k] += f64::from(gv);
                    }
                } else {
                    let (c, spatial) = (xs[1], xs[2] * xs[3]);
                    for (i, &gv) in g.iter().enumerate() {
                        db[(i / spatial) % c] += f64::from(gv);
                    }
                }
                let db: Vec<f32> = db.into_iter().map(|v| v as f32).collect();
                accum(work, bias.0, &db, blen);
            }
            Node::Sub { a, b } => {
                accum(work, a.0, g, g.len());
                let neg: Vec<f32> = g.iter().map(|&v| -v).collect();
                accum(work, b.0, &neg, neg.len());
            }
            Node::Mul { a, b } => {
                let (av, bv) = (self.vals[a.0].data(), self.vals[b.0].data());
                let da: Vec<f32> = g.iter().zip(bv).map(|(&gv, &x)| gv * x).collect();
                let db: Vec<f32> = g.iter().zip(av).map(|(&gv, &x)| gv * x).collect();
                accum(work, a.0, &da, da.len());
                accum(work, b.0, &db, db.len());
            }
            Node::Scale { input, factor } => {
                let dx: Vec<f32> = g.iter().map(|&v| v * factor).collect();
                accum(work, input.0, &dx, dx.len());
            }
            Node::Sum { input } => {
                let len = self.vals[input.0].len();
                accum(work, input.0, &vec![g[0]; len], len);
            }
            Node::Mean { input } => {
                let len = self.vals[input.0].len();
                let gv = g[0] / len as f32;
                accum(work, input.0, &vec![gv; len], len);
            }
            Node::Reshape { input } => {
                accum(work, input.0, g, g.len());
            }
            Node::LogSoftmax { input, tau, probs } => {
                let sh = self.vals[input.0].shape();
                let (n, k) = (sh[0], sh[1]);
                let mut dx = vec![0.0f32; n * k];
                for r in 0..n {
                    let mut rowsum = 0.0f64;
                    for j in 0..k {
                        rowsum += f64::from(g[r * k + j]);
                    }
                    let rowsum = rowsum as f32;
                    for j in 0..k {
                        dx[r * k + j] = (g[r * k + j] - probs[r * k + j] * rowsum) / tau;
                    }
                }
                accum(work, input.0, &dx, dx.len());
            }
            Node::PickClasses { input, labels } => {
                let sh = self.vals[input.0].shape();
                let k = sh[1];
                let mut dx = vec![0.0f32; sh[0] * k];
                for (i, &lab) in labels.iter().enumerate() {
                    dx[i * k + lab as usize] += g[i];
                }
                accum(work, input.0, &dx, dx.len());
            }
            Node::ChannelSumSq { input } => {
                let iv = &self.vals[input.0];
                let (n, c, h, w) = dims4(iv);
                let spatial = h * w;
                let xd = iv.data();
                let mut dx = vec![0.0f32; iv.len()];
                for bi in 0..n {
                    for ci in 0..c {
                        for p in 0..spatial {
                            let idx = (bi * c + ci) * spatial + p;
                            dx[idx] = 2.0 * xd[idx] * g[bi * spatial + p];
                        }
                    }
                }
                accum(work, input.0, &dx, dx.len());
            }
            Node::RowL2Norm { input, norms } => {
                let yv = self.vals[id].data();
                let sh = self.vals[input.0].shape();
                let (n, m) = (sh[0], sh[1]);
                let mut dx = vec![0.0f32; n * m];
                for r in 0..n {
                    let nrm = norms[r];
                    if nrm <= 0.0 {
                        continue; // zero row: subgradient 0
                    }
                    let mut dot = 0.0f64;
                    for j in 0..m {
                        dot += f64::from(g[r * m + j]) * f64::from(yv[r * m + j]);
                    }
                    let dot = dot as f32;
                    for j in 0..m {
                        dx[r * m + j] = (g[r * m + j] - yv[r * m + j] * dot) / nrm;
                    }
                }
                accum(work, input.0, &dx, dx.len());
            }
        }
        Ok(())
    }

    // ── f64 re-execution ─────────────────────────────────────────────────

    /// Recomputes the value of `root` in f64 with `leaf`'s data replaced by
    /// `leaf_data`. All other leaves keep their recorded values. Used by the
    /// finite-difference oracle; never touches gradients.
    pub fn eval_f64(&self, root: VarId, leaf: VarId, leaf_data: &[f64]) -> Result<f64> {
        if leaf_data.len() != self.vals[leaf.0].len() {
            return Err(Error::dimension(format!(
                "eval_f64: leaf expects {} values, got {}",
                self.vals[leaf.0].len(),
                leaf_data.len()
            )));
        }
        let mut vals: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        for id in 0..=root.0 {
            let v = match &self.nodes[id] {
                Node::Leaf { .. } => {
                    if id == leaf.0 {
                        leaf_data.to_vec()
                    } else {
                        self.vals[id].data().iter().map(|&v| f64::from(v)).collect()
                    }
                }
                node => self.eval_node_f64(id, node, &vals)?,
            };
            vals[id] = Some(v);
        }
        let out = vals[root.0].as_ref().unwrap();
        if out.len() != 1 {
            return Err(Error::dimension("eval_f64: root must be scalar".to_string()));
        }
        Ok(out[0])
    }

    fn eval_node_f64(&self, id: usize, node: &Node, vals: &[Option<Vec<f64>>]) -> Result<Vec<f64>> {
        let get = |v: &VarId| vals[v.0].as_deref().expect("topological order");
        Ok(match node {
            Node::Leaf { .. } => unreachable!(),
            Node::MatMul { a, b } => {
                let (ash, bsh) = (self.vals[a.0].shape(), self.vals[b.0].shape());
                let (m, k, n) = (ash[0], ash[1], bsh[1]);
                let (ad, bd) = (get(a), get(b));
                let mut out = vec![0.0f64; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = ad[i * k + p];
                        for j in 0..n {
                            out[i * n + j] += av * bd[p * n + j];
                        }
                    }
                }
                out
            }
            Node::Conv2d { input, kernel, stride, padding } => {
                let (n, c, h, w) = dims4(&self.vals[input.0]);
                let (f, _, kh, kw) = dims4(&self.vals[kernel.0]);
                let osh = self.vals[id].shape();
                let (oh, ow) = (osh[2], osh[3]);
                let (idata, kdata) = (get(input), get(kernel));
                let mut out = vec![0.0f64; n * f * oh * ow];
                for bi in 0..n {
                    for fi in 0..f {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut acc = 0.0f64;
                                for ci in 0..c {
                                    for ky in 0..kh {
                                        let iy = (oy * stride + ky) as isize - *padding as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        let irow = ((bi * c + ci) * h + iy as usize) * w;
                                        let krow = ((fi * c + ci) * kh + ky) * kw;
                                        for kx in 0..kw {
                                            let ix = (ox * stride + kx) as isize - *padding as isize;
                                            if ix < 0 || ix >= w as isize {
                                                continue;
                                            }
                                            acc += idata[irow + ix as usize] * kdata[krow + kx];
                                        }
                                    }
                                }
                                out[((bi * f + fi) * oh + oy) * ow + ox] = acc;
                            }
                        }
                    }
                }
                out
            }
            Node::Relu { input } => get(input).iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Node::AvgPool2d { input, window } => {
                let (n, c, h, w) = dims4(&self.vals[input.0]);
                let (oh, ow) = (h / window, w / window);
                let xd = get(input);
                let inv = 1.0 / (window * window) as f64;
                let mut out = vec![0.0f64; n * c * oh * ow];
                for bi in 0..n {
                    for ci in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut acc = 0.0f64;
                                for dy in 0..*window {
                                    let row = ((bi * c + ci) * h + oy * window + dy) * w + ox * window;
                                    for dx in 0..*window {
                                        acc += xd[row + dx];
                                    }
                                }
                                out[((bi * c + ci) * oh + oy) * ow + ox] = acc * inv;
                            }
                        }
                    }
                }
                out
            }
            Node::Add { a, b } => get(a).iter().zip(get(b)).map(|(&x, &y)| x + y).collect(),
            Node::AddBias { input, bias } => {
                let xs = self.vals[input.0].shape();
                let (xd, bd) = (get(input), get(bias));
                if xs.len() == 2 {
                    let k = xs[1];
                    xd.iter().enumerate().map(|(i, &v)| v + bd[i % k]).collect()
                } else {
                    let (c, spatial) = (xs[1], xs[2] * xs[3]);
                    xd.iter().enumerate().map(|(i, &v)| v + bd[(i / spatial) % c]).collect()
                }
            }
            Node::Sub { a, b } => get(a).iter().zip(get(b)).map(|(&x, &y)| x - y).collect(),
            Node::Mul { a, b } => get(a).iter().zip(get(b)).map(|(&x, &y)| x * y).collect(),
            Node::Scale { input, factor } => {
                let f = f64::from(*factor);
                get(input).iter().map(|&v| v * f).collect()
            }
            Node::Sum { input } => vec![get(input).iter().sum::<f64>()],
            Node::Mean { input } => {
                let d = get(input);
                vec![d.iter().sum::<f64>() / d.len() as f64]
            }
            Node::Reshape { input } => get(input).to_vec(),
            Node::LogSoftmax { input, tau, .. } => {
                let sh = self.vals[input.0].shape();
                let (n, k) = (sh[0], sh[1]);
                let tau = f64::from(*tau);
                let xd = get(input);
                let mut out = vec![0.0f64; n * k];
                for r in 0..n {
                    let row = &xd[r * k..(r + 1) * k];
                    let mx = row.iter().map(|&v| v / tau).fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = row.iter().map(|&v| (v / tau - mx).exp()).sum();
                    let log_denom = denom.ln();
                    for (j, &v) in row.iter().enumerate() {
                        out[r * k + j] = v / tau - mx - log_denom;
                    }
                }
                out
            }
            Node::PickClasses { input, labels } => {
                let k = self.vals[input.0].shape()[1];
                let xd = get(input);
                labels.iter().enumerate().map(|(i, &lab)| xd[i * k + lab as usize]).collect()
            }
            Node::ChannelSumSq { input } => {
                let (n, c, h, w) = dims4(&self.vals[input.0]);
                let spatial = h * w;
                let xd = get(input);
                let mut out = vec![0.0f64; n * spatial];
                for bi in 0..n {
                    for p in 0..spatial {
                        let mut acc = 0.0f64;
                        for ci in 0..c {
                            let v = xd[(bi * c + ci) * spatial + p];
                            acc += v * v;
                        }
                        out[bi * spatial + p] = acc;
                    }
                }
                out
            }
            Node::RowL2Norm { input, .. } => {
                let sh = self.vals[input.0].shape();
                let (n, m) = (sh[0], sh[1]);
                let xd = get(input);
                let mut out = vec![0.0f64; n * m];
                for r in 0..n {
                    let row = &xd[r * m..(r + 1) * m];
                    let nrm = row.iter().map(|&v| v * v).sum::<f64>().sqrt();
                    if nrm > 0.0 {
                        for (j, &v) in row.iter().enumerate() {
                            out[r * m + j] = v / nrm;
                        }
                    }
                }
                out
            }
        })
    }
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

fn accum(work: &mut [Option<Vec<f32>>], id: usize, contrib: &[f32], len: usize) {
    match &mut work[id] {
        Some(buf) => {
            for (b, &c) in buf.iter_mut().zip(contrib) {
                *b += c;
            }
        }
        None => {
            debug_assert_eq!(contrib.len(), len);
            work[id] = Some(contrib.to_vec());
        }
    }
}
