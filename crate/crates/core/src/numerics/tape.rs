//! Reverse-mode gradient tape over a small, closed set of stack-valued primitives.
//!
//! Every node holds a [`FeatureStack`]; scalars are 1x1x1 stacks. The forward
//! pass appends nodes in evaluation order, so node indices are a topological
//! order and [`GradTape::backward`] simply walks them from last to first.

use super::plane::FeatureStack;
use super::resample::{bilinear_adjoint_into, bilinear_into, linear_taps, LinearTap};
use crate::error::{Error, Result};

/// Handle to a node on a [`GradTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive kinds, used to address a specific adjoint (e.g. for fault injection).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Mul,
    Scale,
    Log,
    Sqrt,
    Sum,
    Mean,
    ResampleBilinear,
    Concat,
    ChannelMix,
    Softmax,
    BinCenters,
    BinExpectation,
    SiLog,
}

/// Multiplies the adjoint emitted by every op of `kind` by `factor`.
///
/// Only useful for checking that gradient verification actually catches a
/// wrong derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointFault {
    pub kind: OpKind,
    pub factor: f64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Log(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    ResampleBilinear {
        src: Var,
        rows: Vec<LinearTap>,
        cols: Vec<LinearTap>,
    },
    Concat(Vec<Var>),
    ChannelMix {
        weight: Var,
        bias: Var,
        input: Var,
    },
    Softmax(Var),
    BinCenters {
        raw: Var,
        range: f64,
    },
    BinExpectation {
        probs: Var,
        centers: Var,
    },
    SiLog {
        pred: Var,
        pixels: Vec<usize>,
        gt: Vec<f64>,
        lambda: f64,
        alpha: f64,
    },
}

impl Op {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Leaf => return None,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Log(_) => OpKind::Log,
            Op::Sqrt(_) => OpKind::Sqrt,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::ResampleBilinear { .. } => OpKind::ResampleBilinear,
            Op::Concat(_) => OpKind::Concat,
            Op::ChannelMix { .. } => OpKind::ChannelMix,
            Op::Softmax(_) => OpKind::Softmax,
            Op::BinCenters { .. } => OpKind::BinCenters,
            Op::BinExpectation { .. } => OpKind::BinExpectation,
            Op::SiLog { .. } => OpKind::SiLog,
        })
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: FeatureStack,
    is_param: bool,
}

/// Result of the SILog primitive, exposed for callers that want the flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiLogOutput {
    pub loss: Var,
    /// Set when the variance term fell below the clamp floor.
    pub degenerate: bool,
}

/// Floor applied to the SILog variance term inside the gradient.
pub const SILOG_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
    fault: Option<AdjointFault>,
}

/// Adjoints of every parameter registered on a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<FeatureStack>>,
    visit_order: Vec<usize>,
}

impl Gradients {
    /// Adjoint of a parameter; `None` when `var` was not registered with [`GradTape::param`].
    pub fn wrt(&self, var: Var) -> Option<&FeatureStack> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Node indices in the order their adjoints were propagated.
    pub fn visit_order(&self) -> &[usize] {
        &self.visit_order
    }
}

fn same_shape(a: &FeatureStack, b: &FeatureStack, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{what}: shape {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Bin centers from unnormalized widths: positive widths via softplus, normalized
/// to span `[d_min, d_min + range]`, centers at bin midpoints.
pub fn bin_centers_from_raw(raw: &[f64], d_min: f64, range: f64) -> Vec<f64> {
    let w: Vec<f64> = raw.iter().map(|&r| softplus(r)).collect();
    let total: f64 = w.iter().sum();
    let mut cum = 0.0;
    w.iter()
        .map(|&wi| {
            let q = wi / total;
            let left = cum;
            cum += q;
            (d_min + range * (left + 0.5 * q)).clamp(d_min, d_min + range)
        })
        .collect()
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: AdjointFault) -> Self {
        Self {
            nodes: Vec::new(),
            fault: Some(fault),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: FeatureStack) -> Var {
        self.nodes.push(Node {
            op,
            value,
            is_param: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&FeatureStack> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::State(format!("variable {} is not on this tape", v.0)))
    }

    /// Registers a differentiable leaf.
    pub fn param(&mut self, value: FeatureStack) -> Var {
        let v = self.push(Op::Leaf, value);
        self.nodes[v.0].is_param = true;
        v
    }

    /// Registers a non-differentiable leaf.
    pub fn constant(&mut self, value: FeatureStack) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &FeatureStack {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        same_shape(va, vb, "add")?;
        let mut out = va.clone();
        for (o, &y) in out.data_mut().iter_mut().zip(vb.data()) {
            *o += y;
        }
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        same_shape(va, vb, "mul")?;
        let mut out = va.clone();
        for (o, &y) in out.data_mut().iter_mut().zip(vb.data()) {
            *o *= y;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.check(a)?.scaled(factor);
        Ok(self.push(Op::Scale(a, factor), out))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let va = self.check(a)?;
        if va.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::arg("log", "input must be strictly positive"));
        }
        let out = va.map(f64::ln);
        Ok(self.push(Op::Log(a), out))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let va = self.check(a)?;
        if va.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::arg("sqrt", "input must be strictly positive"));
        }
        let out = va.map(f64::sqrt);
        Ok(self.push(Op::Sqrt(a), out))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.check(a)?.data().iter().sum();
        Ok(self.push(Op::Sum(a), FeatureStack::scalar(s)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = self.check(a)?;
        if va.is_empty() {
            return Err(Error::Dimension("mean of an empty stack".into()));
        }
        let m = va.data().iter().sum::<f64>() / va.len() as f64;
        Ok(self.push(Op::Mean(a), FeatureStack::scalar(m)))
    }

    pub fn resample_bilinear(&mut self, src: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let v = self.check(src)?;
        let (c, h, w) = v.shape();
        if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
            return Err(Error::Dimension(format!(
                "cannot resample {h}x{w} to {out_h}x{out_w}"
            )));
        }
        if (h, w) == (out_h, out_w) {
            // Identity: no node needed, the gradient passes straight through.
            return Ok(src);
        }
        let rows = linear_taps(h, out_h);
        let cols = linear_taps(w, out_w);
        let mut out = FeatureStack::zeros(c, out_h, out_w);
        for ch in 0..c {
            bilinear_into(v.channel(ch), w, &rows, &cols, out.channel_mut(ch));
        }
        Ok(self.push(Op::ResampleBilinear { src, rows, cols }, out))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Dimension("concat of zero stacks".into()));
        };
        let dims = self.check(first)?.spatial();
        let mut channels = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.check(p)?;
            if v.spatial() != dims {
                return Err(Error::Dimension(format!(
                    "concat: {:?} vs {:?}",
                    v.spatial(),
                    dims
                )));
            }
            channels += v.channels();
            data.extend_from_slice(v.data());
        }
        let out = FeatureStack::new(channels, dims.0, dims.1, data)?;
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    /// Per-pixel affine channel map (a 1x1 convolution).
    ///
    /// `weight` is a 1 x out x in stack, `bias` a 1 x 1 x out stack.
    pub fn channel_mix(&mut self, weight: Var, bias: Var, input: Var) -> Result<Var> {
        let (vw, vb, vx) = (self.check(weight)?, self.check(bias)?, self.check(input)?);
        let (cin, h, w) = vx.shape();
        let (one, cout, wcin) = vw.shape();
        if one != 1 || wcin != cin {
            return Err(Error::Dimension(format!(
                "channel_mix: weight {:?} does not map {cin} input channels",
                vw.shape()
            )));
        }
        if vb.shape() != (1, 1, cout) {
            return Err(Error::Dimension(format!(
                "channel_mix: bias {:?} does not match {cout} outputs",
                vb.shape()
            )));
        }
        let n = h * w;
        let mut out = FeatureStack::zeros(cout, h, w);
        let wd = vw.data();
        for o in 0..cout {
            let dst = out.channel_mut(o);
            dst.fill(vb.data()[o]);
            for c in 0..cin {
                let k = wd[o * cin + c];
                for (d, &x) in dst.iter_mut().zip(&vx.data()[c * n..(c + 1) * n]) {
                    *d += k * x;
                }
            }
        }
        Ok(self.push(Op::ChannelMix { weight, bias, input }, out))
    }

    /// Softmax across channels at every pixel.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let v = self.check(logits)?;
        let (c, h, w) = v.shape();
        if c == 0 {
            return Err(Error::Dimension("softmax over zero channels".into()));
        }
        let n = h * w;
        let src = v.data();
        let mut out = FeatureStack::zeros(c, h, w);
        let dst = out.data_mut();
        for p in 0..n {
            let mut m = f64::NEG_INFINITY;
            for ch in 0..c {
                m = m.max(src[ch * n + p]);
            }
            let mut z = 0.0;
            for ch in 0..c {
                let e = (src[ch * n + p] - m).exp();
                dst[ch * n + p] = e;
                z += e;
            }
            for ch in 0..c {
                dst[ch * n + p] /= z;
            }
        }
        Ok(self.push(Op::Softmax(logits), out))
    }

    /// Bin centers in `[d_min, d_max]` from a 1x1xN stack of unnormalized widths.
    pub fn bin_centers(&mut self, raw: Var, d_min: f64, d_max: f64) -> Result<Var> {
        if !(d_max > d_min) {
            return Err(Error::arg("d_max", "must exceed d_min"));
        }
        let v = self.check(raw)?;
        if v.channels() != 1 || v.height() != 1 || v.width() < 1 {
            return Err(Error::Dimension(format!(
                "bin widths must be 1x1xN, got {:?}",
                v.shape()
            )));
        }
        let range = d_max - d_min;
        let centers = bin_centers_from_raw(v.data(), d_min, range);
        Ok(self.push(Op::BinCenters { raw, range }, FeatureStack::vector(centers)))
    }

    /// Per-pixel probability-weighted sum of bin centers.
    pub fn bin_expectation(&mut self, probs: Var, centers: Var) -> Result<Var> {
        let (vp, vc) = (self.check(probs)?, self.check(centers)?);
        let (c, h, w) = vp.shape();
        if vc.len() != c {
            return Err(Error::Dimension(format!(
                "{} bin centers for {c} probability channels",
                vc.len()
            )));
        }
        let n = h * w;
        let mut out = FeatureStack::zeros(1, h, w);
        let dst = out.data_mut();
        for (ch, &ctr) in vc.data().iter().enumerate() {
            for (d, &p) in dst.iter_mut().zip(&vp.data()[ch * n..(ch + 1) * n]) {
                *d += p * ctr;
            }
        }
        Ok(self.push(Op::BinExpectation { probs, centers }, out))
    }

    /// Scale-invariant log loss over the pixels where `mask > 0.5`:
    /// `alpha * sqrt(mean(g^2) - lambda * mean(g)^2)` with `g = ln pred - ln gt`.
    pub fn silog(
        &mut self,
        pred: Var,
        gt: &[f64],
        mask: &[f64],
        lambda: f64,
        alpha: f64,
    ) -> Result<SiLogOutput> {
        let vp = self.check(pred)?;
        if vp.channels() != 1 || gt.len() != vp.len() || mask.len() != vp.len() {
            return Err(Error::Dimension(format!(
                "silog: pred {:?}, gt {} values, mask {} values",
                vp.shape(),
                gt.len(),
                mask.len()
            )));
        }
        let mut pixels = Vec::new();
        let mut gts = Vec::new();
        for (i, (&m, &t)) in mask.iter().zip(gt).enumerate() {
            if m > 0.5 {
                let p = vp.data()[i];
                if p <= 0.0 || t <= 0.0 {
                    return Err(Error::arg(
                        "pred",
                        format!("masked pixel {i} has non-positive depth (pred {p}, gt {t})"),
                    ));
                }
                pixels.push(i);
                gts.push(t);
            }
        }
        if pixels.is_empty() {
            return Err(Error::arg("mask", "silog over an empty mask"));
        }
        let preds: Vec<f64> = pixels.iter().map(|&i| vp.data()[i]).collect();
        let stats = silog_stats(&preds, &gts, lambda);
        let loss = alpha * stats.variance.max(0.0).sqrt();
        let degenerate = stats.variance < SILOG_VARIANCE_FLOOR;
        let var = self.push(
            Op::SiLog {
                pred,
                pixels,
                gt: gts,
                lambda,
                alpha,
            },
            FeatureStack::scalar(loss),
        );
        Ok(SiLogOutput {
            loss: var,
            degenerate,
        })
    }

    /// Propagates `loss_adjoint` from the scalar `loss` back to every parameter.
    pub fn backward(self, loss: Var, loss_adjoint: f64) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        let lv = self.check(loss)?;
        if lv.len() != 1 {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut adj: Vec<Option<FeatureStack>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(FeatureStack::scalar(loss_adjoint));
        let mut visit_order = Vec::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            visit_order.push(idx);
            let node = &self.nodes[idx];
            let factor = match (self.fault, node.op.kind()) {
                (Some(f), Some(k)) if f.kind == k => f.factor,
                _ => 1.0,
            };
            let emit = |adj: &mut Vec<Option<FeatureStack>>, target: Var, mut grad: FeatureStack| {
                if factor != 1.0 {
                    grad = grad.scaled(factor);
                }
                match &mut adj[target.0] {
                    Some(acc) => {
                        for (a, &b) in acc.data_mut().iter_mut().zip(grad.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(grad),
                }
            };
            match &node.op {
                Op::Leaf => {
                    if node.is_param {
                        adj[idx] = Some(g);
                    }
                }
                Op::Add(a, b) => {
                    emit(&mut adj, *a, g.clone());
                    emit(&mut adj, *b, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = zip_map(&g, vb, |x, y| x * y);
                    let gb = zip_map(&g, va, |x, y| x * y);
                    emit(&mut adj, *a, ga);
                    emit(&mut adj, *b, gb);
                }
                Op::Scale(a, k) => emit(&mut adj, *a, g.scaled(*k)),
                Op::Log(a) => {
                    let ga = zip_map(&g, &self.nodes[a.0].value, |x, y| x / y);
                    emit(&mut adj, *a, ga);
                }
                Op::Sqrt(a) => {
                    let ga = zip_map(&g, &node.value, |x, y| x / (2.0 * y));
                    emit(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let va = &self.nodes[a.0].value;
                    let s = g.data()[0];
                    emit(&mut adj, *a, va.map(|_| s));
                }
                Op::Mean(a) => {
                    let va = &self.nodes[a.0].value;
                    let s = g.data()[0] / va.len() as f64;
                    emit(&mut adj, *a, va.map(|_| s));
                }
                Op::ResampleBilinear { src, rows, cols } => {
                    let (c, h, w) = self.nodes[src.0].value.shape();
                    let mut gs = FeatureStack::zeros(c, h, w);
                    for ch in 0..c {
                        bilinear_adjoint_into(g.channel(ch), w, rows, cols, gs.channel_mut(ch));
                    }
                    emit(&mut adj, *src, gs);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (c, h, w) = self.nodes[p.0].value.shape();
                        let n = c * h * w;
                        let gp = FeatureStack::new(c, h, w, g.data()[offset..offset + n].to_vec())?;
                        offset += n;
                        emit(&mut adj, *p, gp);
                    }
                }
                Op::ChannelMix { weight, bias, input } => {
                    let vw = &self.nodes[weight.0].value;
                    let vx = &self.nodes[input.0].value;
                    let (cin, h, w) = vx.shape();
                    let cout = vw.height();
                    let n = h * w;
                    let mut gw = FeatureStack::zeros(1, cout, cin);
                    let mut gb = FeatureStack::zeros(1, 1, cout);
                    let mut gx = FeatureStack::zeros(cin, h, w);
                    for o in 0..cout {
                        let go = g.channel(o);
                        gb.data_mut()[o] = go.iter().sum();
                        for c in 0..cin {
                            let xc = vx.channel(c);
                            gw.data_mut()[o * cin + c] = go.iter().zip(xc).map(|(a, b)| a * b).sum();
                            let k = vw.data()[o * cin + c];
                            for (d, &gg) in gx.channel_mut(c).iter_mut().zip(go) {
                                *d += k * gg;
                            }
                        }
                    }
                    debug_assert_eq!(gx.len(), cin * n);
                    emit(&mut adj, *weight, gw);
                    emit(&mut adj, *bias, gb);
                    emit(&mut adj, *input, gx);
                }
                Op::Softmax(logits) => {
                    let p = &node.value;
                    let (c, h, w) = p.shape();
                    let n = h * w;
                    let mut gz = FeatureStack::zeros(c, h, w);
                    let (pd, gd) = (p.data(), g.data());
                    let zd = gz.data_mut();
                    for px in 0..n {
                        let mut dot = 0.0;
                        for ch in 0..c {
                            dot += pd[ch * n + px] * gd[ch * n + px];
                        }
                        for ch in 0..c {
                            let i = ch * n + px;
                            zd[i] = pd[i] * (gd[i] - dot);
                        }
                    }
                    emit(&mut adj, *logits, gz);
                }
                Op::BinCenters { raw, range } => {
                    let r = self.nodes[raw.0].value.data();
                    let nb = r.len();
                    let w: Vec<f64> = r.iter().map(|&x| softplus(x)).collect();
                    let total: f64 = w.iter().sum();
                    let q: Vec<f64> = w.iter().map(|&x| x / total).collect();
                    let gc = g.data();
                    // c_i = d_min + range * (sum_{j<i} q_j + q_i / 2)
                    let mut gq = vec![0.0; nb];
                    let mut tail = 0.0;
                    for j in (0..nb).rev() {
                        gq[j] = range * (tail + 0.5 * gc[j]);
                        tail += gc[j];
                    }
                    let qdot: f64 = gq.iter().zip(&q).map(|(a, b)| a * b).sum();
                    let gr: Vec<f64> = (0..nb)
                        .map(|k| (gq[k] - qdot) / total * sigmoid(r[k]))
                        .collect();
                    emit(&mut adj, *raw, FeatureStack::new(1, 1, nb, gr)?);
                }
                Op::BinExpectation { probs, centers } => {
                    let vp = &self.nodes[probs.0].value;
                    let vc = &self.nodes[centers.0].value;
                    let (c, h, w) = vp.shape();
                    let n = h * w;
                    let gd = g.data();
                    let mut gp = FeatureStack::zeros(c, h, w);
                    let mut gc = vec![0.0; c];
                    for (ch, (&ctr, gci)) in vc.data().iter().zip(gc.iter_mut()).enumerate() {
                        let pc = vp.channel(ch);
                        *gci = gd.iter().zip(pc).map(|(a, b)| a * b).sum();
                        for (d, &gg) in gp.channel_mut(ch).iter_mut().zip(gd) {
                            *d = gg * ctr;
                        }
                    }
                    debug_assert_eq!(gp.len(), c * n);
                    emit(&mut adj, *probs, gp);
                    emit(&mut adj, *centers, FeatureStack::new(vc.channels(), vc.height(), vc.width(), gc)?);
                }
                Op::SiLog {
                    pred,
                    pixels,
                    gt,
                    lambda,
                    alpha,
                } => {
                    let vp = &self.nodes[pred.0].value;
                    let preds: Vec<f64> = pixels.iter().map(|&i| vp.data()[i]).collect();
                    let stats = silog_stats(&preds, gt, *lambda);
                    let denom = stats.variance.max(SILOG_VARIANCE_FLOOR).sqrt();
                    let n = pixels.len() as f64;
                    let s = g.data()[0] * alpha / (n * denom);
                    let mut gp = vp.map(|_| 0.0);
                    for ((&i, &p), lg) in pixels.iter().zip(&preds).zip(&stats.log_diff) {
                        gp.data_mut()[i] = s * (lg - lambda * stats.mean) / p;
                    }
                    emit(&mut adj, *pred, gp);
                }
            }
        }

        let grads = self
            .nodes
            .iter()
            .zip(adj)
            .map(|(n, a)| {
                if n.is_param {
                    Some(a.unwrap_or_else(|| n.value.map(|_| 0.0)))
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients { grads, visit_order })
    }
}

fn zip_map(a: &FeatureStack, b: &FeatureStack, f: impl Fn(f64, f64) -> f64) -> FeatureStack {
    let mut out = a.clone();
    for (o, &y) in out.data_mut().iter_mut().zip(b.data()) {
        *o = f(*o, y);
    }
    out
}

pub(crate) struct SiLogStats {
    pub log_diff: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

/// `g = ln pred - ln gt`, its mean, and `mean(g^2) - lambda * mean(g)^2`.
///
/// The variance term is evaluated as `mean((g - mean)^2) + (1 - lambda) mean^2`
/// so that a constant `g` with `lambda = 1` does not leave cancellation noise.
pub(crate) fn silog_stats(pred: &[f64], gt: &[f64], lambda: f64) -> SiLogStats {
    let log_diff: Vec<f64> = pred.iter().zip(gt).map(|(p, t)| p.ln() - t.ln()).collect();
    let n = log_diff.len() as f64;
    let mean = log_diff.iter().sum::<f64>() / n;
    let centered = log_diff.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
    SiLogStats {
        log_diff,
        mean,
        variance: centered + (1.0 - lambda) * mean * mean,
    }
}

/// SILog value over paired positive depths, without recording anything.
pub(crate) fn silog_value(pred: &[f64], gt: &[f64], lambda: f64, alpha: f64) -> f64 {
    alpha * silog_stats(pred, gt, lambda).variance.max(0.0).sqrt()
}
