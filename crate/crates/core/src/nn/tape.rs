//! Reverse-mode differentiation over matrix-valued operations.
//!
//! A [`Tape`] borrows the parameter store immutably during the forward pass
//! and records every operation with its output value. [`Tape::backward`]
//! walks the record in exact reverse order, accumulating adjoints additively,
//! and returns per-parameter gradients. A tape can be differentiated once.

use std::sync::Arc;

use super::coords::KernelMap;
use super::kernels;
use super::matrix::Matrix;
use super::params::{Gradients, ParamId, ParamStore, StatsUpdate};
use crate::error::{Error, Result};
use crate::real::Real;

pub const BN_EPS: f64 = 1e-5;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv {
        x: Var,
        w: ParamId,
        map: Arc<KernelMap>,
    },
    Linear {
        x: Var,
        w: ParamId,
        b: Option<ParamId>,
    },
    Add(Var, Var),
    Relu(Var),
    /// Per-channel affine normalisation; `xhat = (x - mean) * inv_std`.
    /// `batch_stats` marks training mode, where mean and variance depend on x.
    Norm {
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Concat(Var, Var),
    AvgPool {
        x: Var,
        segment: Arc<Vec<usize>>,
        counts: Vec<usize>,
    },
    MaxPool {
        x: Var,
        /// Winning row per (segment, channel).
        argmax: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Matrix<T>,
        count: usize,
    },
    Scale(Var, T),
    Sum(Var),
    Inner(Var, Arc<Matrix<T>>),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    stats: Vec<StatsUpdate<T>>,
    consumed: bool,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            stats: Vec::new(),
            consumed: false,
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Batch statistics recorded by training-mode batch norms.
    pub fn stats_updates(&self) -> &[StatsUpdate<T>] {
        &self.stats
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn trainable(&self, id: ParamId) -> bool {
        self.params.get(id).trainable
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A parameter used directly as a `rows × cols` value.
    pub fn param(&mut self, id: ParamId, rows: usize, cols: usize) -> Result<Var> {
        let p = self.params.get(id);
        let value = Matrix::from_vec(rows, cols, p.values.clone())?;
        let needs = p.trainable;
        Ok(self.push(value, Op::Param(id), needs))
    }

    /// Copies a value into a new constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.input(value)
    }

    /// Sparse convolution with weights of shape `offsets × C_in × C_out`.
    pub fn conv(&mut self, x: Var, w: ParamId, map: &Arc<KernelMap>) -> Result<Var> {
        let p = self.params.get(w);
        let xv = self.value(x);
        if p.shape.len() != 3 || p.shape[0] != map.num_offsets() || p.shape[1] != xv.cols() {
            return Err(Error::shape(format!(
                "conv {}: weights {:?} vs {} offsets and {} input channels",
                p.name,
                p.shape,
                map.num_offsets(),
                xv.cols()
            )));
        }
        if xv.rows() != map.n_in {
            return Err(Error::shape(format!(
                "conv {}: {} input rows but kernel map expects {}",
                p.name,
                xv.rows(),
                map.n_in
            )));
        }
        let out = kernels::conv_forward(xv, &p.values, map, p.shape[2]);
        let needs = self.needs(x) || p.trainable;
        Ok(self.push(
            out,
            Op::Conv {
                x,
                w,
                map: map.clone(),
            },
            needs,
        ))
    }

    /// `x · W + b` with `W: in × out`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: Option<ParamId>) -> Result<Var> {
        let p = self.params.get(w);
        let xv = self.value(x);
        if p.shape.len() != 2 || p.shape[0] != xv.cols() {
            return Err(Error::shape(format!(
                "linear {}: weights {:?} vs {} input features",
                p.name,
                p.shape,
                xv.cols()
            )));
        }
        let out_dim = p.shape[1];
        let bias = match b {
            Some(b) => {
                let bp = self.params.get(b);
                if bp.values.len() != out_dim {
                    return Err(Error::shape(format!("bias {} length", bp.name)));
                }
                Some(bp.values.as_slice())
            }
            None => None,
        };
        let out = kernels::linear_forward(xv, &p.values, bias, out_dim);
        let needs = self.needs(x) || p.trainable || b.is_some_and(|b| self.trainable(b));
        Ok(self.push(out, Op::Linear { x, w, b }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(format!(
                "add {:?} + {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let needs = self.needs(x);
        self.push(out, Op::Relu(x), needs)
    }

    /// Batch normalisation over all rows. In training mode the batch mean and
    /// (biased) variance normalise the input and are recorded as a
    /// [`StatsUpdate`]; in eval mode the running statistics are used.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
        train: bool,
    ) -> Result<Var> {
        let xv = self.value(x);
        let (m, c) = xv.shape();
        if m == 0 {
            return Err(Error::Empty("batch norm over zero rows".into()));
        }
        for id in [gamma, beta, running_mean, running_var] {
            if self.params.get(id).values.len() != c {
                return Err(Error::shape(format!(
                    "batch norm {} has {} entries for {c} channels",
                    self.params.get(id).name,
                    self.params.get(id).values.len()
                )));
            }
        }
        let eps = T::from_f64(BN_EPS);
        let (mean, var) = if train {
            let inv_m = T::one() / T::from_usize(m);
            let mut mean = vec![T::zero(); c];
            for r in 0..m {
                for (a, &v) in mean.iter_mut().zip(xv.row(r)) {
                    *a += v;
                }
            }
            mean.iter_mut().for_each(|v| *v *= inv_m);
            let mut var = vec![T::zero(); c];
            for r in 0..m {
                for ((a, &v), &mu) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                    let d = v - mu;
                    *a += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v *= inv_m);
            (mean, var)
        } else {
            (
                self.params.values(running_mean).to_vec(),
                self.params.values(running_var).to_vec(),
            )
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.params.values(gamma);
        let b = self.params.values(beta);
        let mut xhat = Matrix::zeros(m, c);
        let mut out = Matrix::zeros(m, c);
        for r in 0..m {
            let src = xv.row(r);
            let xh = xhat.row_mut(r);
            for j in 0..c {
                xh[j] = (src[j] - mean[j]) * inv_std[j];
            }
            let xh = xhat.row(r).to_vec();
            let dst = out.row_mut(r);
            for j in 0..c {
                dst[j] = g[j] * xh[j] + b[j];
            }
        }
        if train {
            self.stats.push(StatsUpdate {
                mean: running_mean,
                var: running_var,
                batch_mean: mean,
                batch_var: var,
            });
        }
        let needs = self.needs(x) || self.trainable(gamma) || self.trainable(beta);
        Ok(self.push(
            out,
            Op::Norm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: train,
            },
            needs,
        ))
    }

    /// Channel concatenation (`a` then `b`) of two row-aligned matrices.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::shape(format!(
                "concat of {} and {} rows",
                av.rows(),
                bv.rows()
            )));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let mut out = Matrix::zeros(av.rows(), ca + cb);
        for r in 0..av.rows() {
            let dst = out.row_mut(r);
            dst[..ca].copy_from_slice(av.row(r));
            dst[ca..].copy_from_slice(bv.row(r));
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Concat(a, b), needs))
    }

    fn segment_counts(segment: &[usize], rows: usize, num_segments: usize) -> Result<Vec<usize>> {
        if segment.len() != rows {
            return Err(Error::shape("segment ids do not match rows"));
        }
        let mut counts = vec![0usize; num_segments];
        for &s in segment {
            if s >= num_segments {
                return Err(Error::shape(format!("segment {s} >= {num_segments}")));
            }
            counts[s] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Empty(format!("batch element {empty} has no rows to pool")));
        }
        Ok(counts)
    }

    /// Mean over the rows of each segment (batch element).
    pub fn avg_pool(&mut self, x: Var, segment: &Arc<Vec<usize>>, num_segments: usize) -> Result<Var> {
        let xv = self.value(x);
        let counts = Self::segment_counts(segment, xv.rows(), num_segments)?;
        let mut out = Matrix::zeros(num_segments, xv.cols());
        for (r, &s) in segment.iter().enumerate() {
            for (d, &v) in out.row_mut(s).iter_mut().zip(xv.row(r)) {
                *d += v;
            }
        }
        for (s, &n) in counts.iter().enumerate() {
            let inv = T::one() / T::from_usize(n);
            out.row_mut(s).iter_mut().for_each(|v| *v *= inv);
        }
        let needs = self.needs(x);
        Ok(self.push(
            out,
            Op::AvgPool {
                x,
                segment: segment.clone(),
                counts,
            },
            needs,
        ))
    }

    /// Channel-wise maximum over the rows of each segment; ties go to the
    /// first row.
    pub fn max_pool(&mut self, x: Var, segment: &[usize], num_segments: usize) -> Result<Var> {
        let xv = self.value(x);
        Self::segment_counts(segment, xv.rows(), num_segments)?;
        let c = xv.cols();
        let mut argmax = vec![usize::MAX; num_segments * c];
        let mut out = Matrix::zeros(num_segments, c);
        for (r, &s) in segment.iter().enumerate() {
            let row = xv.row(r);
            for j in 0..c {
                let slot = &mut argmax[s * c + j];
                if *slot == usize::MAX || row[j] > xv.get(*slot, j) {
                    *slot = r;
                }
            }
        }
        for s in 0..num_segments {
            for j in 0..c {
                out.row_mut(s)[j] = xv.get(argmax[s * c + j], j);
            }
        }
        let needs = self.needs(x);
        Ok(self.push(out, Op::MaxPool { x, argmax }, needs))
    }

    /// Mean softmax cross-entropy over rows whose target is not `None`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, classes) = lv.shape();
        if targets.len() != rows {
            return Err(Error::shape(format!(
                "{} targets for {rows} logit rows",
                targets.len()
            )));
        }
        let mut probs = Matrix::zeros(rows, classes);
        let mut total = T::zero();
        let mut count = 0;
        for r in 0..rows {
            let row = lv.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let p = probs.row_mut(r);
            let mut z = T::zero();
            for (pj, &v) in p.iter_mut().zip(row) {
                *pj = (v - max).exp();
                z += *pj;
            }
            p.iter_mut().for_each(|v| *v = *v / z);
            if let Some(t) = targets[r] {
                if t >= classes {
                    return Err(Error::invalid(format!("target {t} >= {classes} classes")));
                }
                total += z.ln() + max - row[t];
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Empty("every cross-entropy row is ignored".into()));
        }
        let loss = total / T::from_usize(count);
        let needs = self.needs(logits);
        Ok(self.push(
            Matrix::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            needs,
        ))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let needs = self.needs(x);
        self.push(out, Op::Scale(x, factor), needs)
    }

    /// Sum of every entry, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let needs = self.needs(x);
        self.push(Matrix::scalar(s), Op::Sum(x), needs)
    }

    /// `Σ x ∘ c` for a constant matrix `c`, as a scalar.
    pub fn inner(&mut self, x: Var, c: Arc<Matrix<T>>) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != c.shape() {
            return Err(Error::shape("inner product shapes differ"));
        }
        let s = xv.data().iter().zip(c.data()).map(|(&a, &b)| a * b).sum();
        let needs = self.needs(x);
        Ok(self.push(Matrix::scalar(s), Op::Inner(x, c), needs))
    }

    /// Reverse pass from a scalar root. May run once per tape.
    pub fn backward(&mut self, root: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::StaleTape);
        }
        let (rows, cols) = self.value(root).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarRoot { rows, cols });
        }
        self.consumed = true;

        let params = self.params;
        let mut by_param: Vec<Option<Vec<T>>> = vec![None; params.len()];
        let mut adj: Vec<Option<Matrix<T>>> = Vec::with_capacity(self.nodes.len());
        adj.resize_with(self.nodes.len(), || None);
        adj[root.0] = Some(Matrix::scalar(T::one()));

        fn acc<T: Real>(slot: &mut Option<Matrix<T>>, g: Matrix<T>) {
            match slot {
                Some(s) => s.add_assign(&g),
                None => *slot = Some(g),
            }
        }
        let mut acc_param = |id: ParamId, g: Vec<T>| {
            if !params.get(id).trainable {
                return;
            }
            match &mut by_param[id.0] {
                Some(s) => s.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        };

        for n in (0..=root.0).rev() {
            let Some(g) = adj[n].take() else { continue };
            let node = &self.nodes[n];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => acc_param(*id, g.into_vec()),
                Op::Conv { x, w, map } => {
                    let xv = &self.nodes[x.0];
                    let (dx, dw) = kernels::conv_backward(
                        &xv.value,
                        params.values(*w),
                        map,
                        &g,
                        xv.needs_grad,
                    );
                    acc_param(*w, dw);
                    if let Some(dx) = dx {
                        acc(&mut adj[x.0], dx);
                    }
                }
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[x.0];
                    let (r, c_in) = xv.value.shape();
                    let c_out = g.cols();
                    let mut dw = vec![T::zero(); c_in * c_out];
                    T::gemm(
                        c_in,
                        r,
                        c_out,
                        T::one(),
                        xv.value.data(),
                        (1, c_in as isize),
                        g.data(),
                        (c_out as isize, 1),
                        T::zero(),
                        &mut dw,
                        (c_out as isize, 1),
                    );
                    acc_param(*w, dw);
                    if let Some(b) = b {
                        let mut db = vec![T::zero(); c_out];
                        for row in 0..r {
                            for (d, &v) in db.iter_mut().zip(g.row(row)) {
                                *d += v;
                            }
                        }
                        acc_param(*b, db);
                    }
                    if xv.needs_grad {
                        let mut dx = Matrix::zeros(r, c_in);
                        T::gemm(
                            r,
                            c_out,
                            c_in,
                            T::one(),
                            g.data(),
                            (c_out as isize, 1),
                            params.values(*w),
                            (1, c_out as isize),
                            T::zero(),
                            dx.data_mut(),
                            (c_in as isize, 1),
                        );
                        acc(&mut adj[x.0], dx);
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[b.0].needs_grad {
                        acc(&mut adj[b.0], g.clone());
                    }
                    if self.nodes[a.0].needs_grad {
                        acc(&mut adj[a.0], g);
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if v <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    acc(&mut adj[x.0], dx);
                }
                Op::Norm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    batch_stats,
                } => {
                    let (m, c) = xhat.shape();
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    for r in 0..m {
                        for ((dg, db), (&gv, &xh)) in dgamma
                            .iter_mut()
                            .zip(dbeta.iter_mut())
                            .zip(g.row(r).iter().zip(xhat.row(r)))
                        {
                            *dg += gv * xh;
                            *db += gv;
                        }
                    }
                    if self.nodes[x.0].needs_grad {
                        let gm = params.values(*gamma);
                        let mut dx = Matrix::zeros(m, c);
                        if *batch_stats {
                            // dx = gamma*inv_std/m * (m*dy - sum(dy) - xhat*sum(dy*xhat))
                            let inv_m = T::one() / T::from_usize(m);
                            for r in 0..m {
                                let gr = g.row(r);
                                let xr = xhat.row(r);
                                let dst = dx.row_mut(r);
                                for j in 0..c {
                                    dst[j] = gm[j]
                                        * inv_std[j]
                                        * (gr[j] - dbeta[j] * inv_m - xr[j] * dgamma[j] * inv_m);
                                }
                            }
                        } else {
                            for r in 0..m {
                                let gr = g.row(r);
                                let dst = dx.row_mut(r);
                                for j in 0..c {
                                    dst[j] = gm[j] * inv_std[j] * gr[j];
                                }
                            }
                        }
                        acc(&mut adj[x.0], dx);
                    }
                    acc_param(*gamma, dgamma);
                    acc_param(*beta, dbeta);
                }
                Op::Concat(a, b) => {
                    let ca = self.nodes[a.0].value.cols();
                    let cb = self.nodes[b.0].value.cols();
                    let rows = g.rows();
                    if self.nodes[a.0].needs_grad {
                        let mut da = Matrix::zeros(rows, ca);
                        for r in 0..rows {
                            da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        }
                        acc(&mut adj[a.0], da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = Matrix::zeros(rows, cb);
                        for r in 0..rows {
                            db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                        }
                        acc(&mut adj[b.0], db);
                    }
                }
                Op::AvgPool { x, segment, counts } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    for (r, &s) in segment.iter().enumerate() {
                        let inv = T::one() / T::from_usize(counts[s]);
                        for (d, &v) in dx.row_mut(r).iter_mut().zip(g.row(s)) {
                            *d = v * inv;
                        }
                    }
                    acc(&mut adj[x.0], dx);
                }
                Op::MaxPool { x, argmax } => {
                    let xv = &self.nodes[x.0].value;
                    let c = xv.cols();
                    let mut dx = Matrix::zeros(xv.rows(), c);
                    for (slot, &r) in argmax.iter().enumerate() {
                        let (s, j) = (slot / c, slot % c);
                        dx.row_mut(r)[j] += g.get(s, j);
                    }
                    acc(&mut adj[x.0], dx);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    count,
                } => {
                    let scale = g.get(0, 0) / T::from_usize(*count);
                    let mut dl = Matrix::zeros(probs.rows(), probs.cols());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            let dst = dl.row_mut(r);
                            for (d, &p) in dst.iter_mut().zip(probs.row(r)) {
                                *d = p * scale;
                            }
                            dst[*t] -= scale;
                        }
                    }
                    acc(&mut adj[logits.0], dl);
                }
                Op::Scale(x, f) => {
                    let f = *f;
                    acc(&mut adj[x.0], g.map(|v| v * f));
                }
                Op::Sum(x) => {
                    let xv = &self.nodes[x.0].value;
                    let v = g.get(0, 0);
                    acc(&mut adj[x.0], Matrix::from_vec(xv.rows(), xv.cols(), vec![v; xv.rows() * xv.cols()])?);
                }
                Op::Inner(x, c) => {
                    let v = g.get(0, 0);
                    acc(&mut adj[x.0], c.map(|e| e * v));
                }
            }
        }
        Ok(Gradients { by_param })
    }
}
