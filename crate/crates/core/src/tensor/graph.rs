//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass and
//! replays them backwards from a scalar output. Parameters live outside the
//! graph in a [`ParamStore`]; their gradients are collected per graph and
//! handed to the optimizer. A graph is confined to one thread.

use rand::Rng as _;

use super::kernels::{self, AttnSegment, View};
use super::mask::AttentionMask;
use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Node(usize),
    Param(ParamId),
}

enum Op<T> {
    Input,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add { a: Var, b: Var },
    AddRow { a: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: T },
    Relu { a: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Embed { table: Var, ids: Vec<u32> },
    GatherRows { a: Var, rows: Vec<usize> },
    Softmax { a: Var },
    Attention { q: Var, k: Var, v: Var, heads: usize, segments: Vec<AttnSegment>, probs: Vec<T> },
    Dropout { a: Var, keep: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<Option<u32>>, probs: Vec<T>, smoothing: T, count: usize },
    Sum { a: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Graph<'p, T: Scalar = f32> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    param_grads: Vec<Option<Vec<T>>>,
    train: bool,
    rng: Option<Rng>,
}

/// Gradients for every parameter touched by a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.grads.get(id.index()).and_then(|g| g.as_deref())
    }

    pub fn add(&mut self, other: &Gradients<T>) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.iter_mut().zip(t).for_each(|(a, &b)| *a += b),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: T) {
        self.grads
            .iter_mut()
            .flatten()
            .for_each(|g| g.iter_mut().for_each(|x| *x *= c));
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            grads: Vec::new(),
            param_grads: Vec::new(),
            train: false,
            rng: None,
        }
    }

    /// Training-mode graph; dropout masks are drawn from `rng`.
    pub fn training(params: &'p ParamStore<T>, rng: Rng) -> Self {
        Self {
            train: true,
            rng: Some(rng),
            ..Self::new(params)
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match v {
            Var::Node(i) => &self.nodes[i].value,
            Var::Param(id) => self.params.get(id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var::Node(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&self, id: ParamId) -> Var {
        Var::Param(id)
    }

    fn mat_dims(&self, v: Var, transposed: bool) -> (usize, usize) {
        let t = self.value(v);
        let (r, c) = (t.rows(), t.cols());
        if transposed {
            (c, r)
        } else {
            (r, c)
        }
    }

    /// `op(a) @ op(b)` where `op` optionally transposes a matrix operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (m, ka) = self.mat_dims(a, ta);
        let (kb, n) = self.mat_dims(b, tb);
        if ka != kb {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let av = orient(self.value(a), ta);
        let bv = orient(self.value(b), tb);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            T::one(),
            self.value(a).data(),
            av,
            self.value(b).data(),
            bv,
            T::zero(),
            &mut out,
            View::dense(m, n),
        );
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b, ta, tb }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Elementwise sum; `b` may also be a row vector broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa == sb {
            let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
            let value = Tensor::new(&sa, data)?;
            return Ok(self.push(value, Op::Add { a, b }));
        }
        if sb.len() == 1 && sb[0] == self.value(a).cols() {
            let (av, bv) = (self.value(a), self.value(b));
            let cols = av.cols();
            let data = av
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x + bv.data()[i % cols])
                .collect();
            let value = Tensor::new(&sa, data)?;
            return Ok(self.push(value, Op::AddRow { a, bias: b }));
        }
        Err(Error::Shape {
            op: "add",
            left: sa,
            right: sb,
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(Error::Shape {
                op: "mul",
                left: sa,
                right: sb,
            });
        }
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let value = Tensor::new(&sa, data)?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = T::of(c);
        let t = self.value(a);
        let value = Tensor::new(t.shape(), t.data().iter().map(|&x| x * c).collect()).expect("same shape");
        self.push(value, Op::Scale { a, c })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::new(t.shape(), t.data().iter().map(|&x| x.max(T::zero())).collect())
            .expect("same shape");
        self.push(value, Op::Relu { a })
    }

    /// Normalizes each row to zero mean and unit variance, then applies the
    /// per-column `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.value(gain).len() != cols || self.value(bias).len() != cols {
            return Err(Error::Shape {
                op: "layer_norm",
                left: self.shape(x).to_vec(),
                right: self.shape(gain).to_vec(),
            });
        }
        let xt = self.value(x);
        let mut out = vec![T::zero(); xt.len()];
        let (xhat, rstd) = kernels::layer_norm_rows(
            xt.data(),
            cols,
            self.value(gain).data(),
            self.value(bias).data(),
            &mut out,
        );
        let value = Tensor::new(xt.shape(), out)?;
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, xhat, rstd }))
    }

    /// Row lookup into a `[vocab, dim]` table.
    pub fn embed(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let t = self.value(table);
        let (rows, cols) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id as usize >= rows {
                return Err(Error::Shape {
                    op: "embed",
                    left: t.shape().to_vec(),
                    right: vec![id as usize],
                });
            }
            out.extend_from_slice(t.row(id as usize));
        }
        let value = Tensor::new(&[ids.len(), cols], out)?;
        Ok(self.push(value, Op::Embed { table, ids: ids.to_vec() }))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let cols = t.cols();
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= t.rows() {
                return Err(Error::Shape {
                    op: "gather_rows",
                    left: t.shape().to_vec(),
                    right: vec![r],
                });
            }
            out.extend_from_slice(t.row(r));
        }
        let value = Tensor::new(&[rows.len(), cols], out)?;
        Ok(self.push(value, Op::GatherRows { a, rows: rows.to_vec() }))
    }

    /// Row-wise softmax; masked entries (where `mask` is false) get exactly
    /// zero probability.
    pub fn softmax(&mut self, a: Var, mask: Option<&AttentionMask>) -> Result<Var> {
        let t = self.value(a);
        let cols = t.cols();
        if let Some(m) = mask {
            if (m.rows(), m.cols()) != (t.rows(), cols) {
                return Err(Error::Shape {
                    op: "softmax",
                    left: t.shape().to_vec(),
                    right: vec![m.rows(), m.cols()],
                });
            }
        }
        let mut data = t.data().to_vec();
        let masked = T::of(kernels::MASK_VALUE);
        for (r, row) in data.chunks_mut(cols).enumerate() {
            if let Some(m) = mask {
                for (j, x) in row.iter_mut().enumerate() {
                    if !m.allows(r, j) {
                        *x += masked;
                    }
                }
            }
            kernels::softmax_in_place(row);
        }
        let value = Tensor::new(t.shape(), data)?;
        Ok(self.push(value, Op::Softmax { a }))
    }

    /// Fused multi-head scaled dot-product attention over projected
    /// `q [rows_q, dim]`, `k`, `v [rows_k, dim]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, segments: Vec<AttnSegment>) -> Result<Var> {
        let dim = self.value(q).cols();
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(format!("model dim {dim} not divisible by {heads} heads")));
        }
        if self.value(k).cols() != dim || self.shape(k) != self.shape(v) {
            return Err(Error::Shape {
                op: "attention",
                left: self.shape(q).to_vec(),
                right: self.shape(k).to_vec(),
            });
        }
        let (rq, rk) = (self.value(q).rows(), self.value(k).rows());
        if segments
            .iter()
            .any(|s| s.q_start + s.q_len > rq || s.k_start + s.k_len > rk || s.k_len == 0)
        {
            return Err(Error::config("attention segment out of range"));
        }
        let mut covered = vec![false; rq];
        for s in &segments {
            for r in &mut covered[s.q_start..s.q_start + s.q_len] {
                if std::mem::replace(r, true) {
                    return Err(Error::config("attention segments overlap in query rows"));
                }
            }
        }
        let mut out = vec![T::zero(); rq * dim];
        let mut probs = Vec::new();
        kernels::attention_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            dim,
            heads,
            &segments,
            &mut out,
            Some(&mut probs),
        );
        let value = Tensor::new(&[rq, dim], out)?;
        Ok(self.push(value, Op::Attention { q, k, v, heads, segments, probs }))
    }

    /// Inverted dropout; the identity outside training mode.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if !self.train || rate <= 0.0 {
            return a;
        }
        let n = self.value(a).len();
        let rng = self.rng.as_mut().expect("training graph has an rng");
        let scale = T::of(1.0 / (1.0 - rate));
        let keep: Vec<T> = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { scale })
            .collect();
        let t = self.value(a);
        let value = Tensor::new(t.shape(), zip_map(t.data(), &keep, |x, m| x * m)).expect("same shape");
        self.push(value, Op::Dropout { a, keep })
    }

    /// Mean token-level cross-entropy of `logits [rows, vocab]` against
    /// `targets` (one per row; `None` rows are ignored). With `smoothing`
    /// > 0 the target distribution mixes in a uniform component.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<u32>], smoothing: f64) -> Result<Var> {
        let t = self.value(logits);
        let (rows, vocab) = (t.rows(), t.cols());
        if targets.len() != rows {
            return Err(Error::Shape {
                op: "cross_entropy",
                left: t.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let eps = T::of(smoothing);
        let off = eps / T::of(vocab as f64);
        let mut probs = vec![T::zero(); rows * vocab];
        let mut total = T::zero();
        let mut count = 0;
        for (r, target) in targets.iter().enumerate() {
            let Some(target) = *target else { continue };
            if target as usize >= vocab {
                return Err(Error::Shape {
                    op: "cross_entropy",
                    left: t.shape().to_vec(),
                    right: vec![target as usize],
                });
            }
            let logp = kernels::log_softmax_row(t.row(r));
            for (j, &lp) in logp.iter().enumerate() {
                probs[r * vocab + j] = lp.exp();
                let q = if j == target as usize { T::one() - eps + off } else { off };
                if q > T::zero() {
                    total -= q * lp;
                }
            }
            count += 1;
        }
        let loss = if count > 0 { total / T::of(count as f64) } else { T::zero() };
        let value = Tensor::scalar(loss);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                smoothing: eps,
                count,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    /// Backpropagates from the scalar `output` and returns parameter
    /// gradients. Gradients with respect to graph inputs remain available
    /// through [`Graph::grad`].
    pub fn backward(&mut self, output: Var) -> Result<Gradients<T>> {
        let Var::Node(last) = output else {
            return Err(Error::config("backward from a parameter"));
        };
        if self.nodes[last].value.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                left: self.nodes[last].value.shape().to_vec(),
                right: vec![1],
            });
        }
        self.param_grads = vec![None; self.params.len()];
        self.grads[last] = Some(vec![T::one()]);
        for idx in (0..=last).rev() {
            let Some(g) = self.grads[idx].take() else { continue };
            self.backprop_node(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads: std::mem::take(&mut self.param_grads),
        })
    }

    /// Gradient accumulated at a graph node by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        match v {
            Var::Node(i) => self.grads[i].as_deref(),
            Var::Param(_) => None,
        }
    }

    fn backprop_node(&mut self, idx: usize, g: &[T]) {
        let Graph {
            params,
            nodes,
            grads,
            param_grads,
            ..
        } = self;
        let node = &nodes[idx];
        let val = |v: Var| -> &Tensor<T> {
            match v {
                Var::Node(i) => &nodes[i].value,
                Var::Param(id) => params.get(id),
            }
        };
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(grads, param_grads, nodes, params, $v)
            };
        }
        match &node.op {
            Op::Input => {}
            Op::MatMul { a, b, ta, tb } => {
                let (at, bt) = (val(*a), val(*b));
                let (av, bv) = (orient(at, *ta), orient(bt, *tb));
                let cv = View::dense(av.rows, bv.cols);
                // d op(a) = g op(b)^T, written through the orientation of a
                let ga_view = orient(at, *ta);
                kernels::gemm(T::one(), g, cv, bt.data(), bv.t(), T::one(), slot!(*a), ga_view);
                let gb_view = orient(bt, *tb);
                kernels::gemm(T::one(), at.data(), av.t(), g, cv, T::one(), slot!(*b), gb_view);
            }
            Op::Add { a, b } => {
                add_into(slot!(*a), g);
                add_into(slot!(*b), g);
            }
            Op::AddRow { a, bias } => {
                add_into(slot!(*a), g);
                let cols = val(*bias).len();
                let gb = slot!(*bias);
                for row in g.chunks(cols) {
                    add_into(gb, row);
                }
            }
            Op::Mul { a, b } => {
                let prod_a = zip_map(g, val(*b).data(), |x, y| x * y);
                let prod_b = zip_map(g, val(*a).data(), |x, y| x * y);
                add_into(slot!(*a), &prod_a);
                add_into(slot!(*b), &prod_b);
            }
            Op::Scale { a, c } => {
                let c = *c;
                slot!(*a).iter_mut().zip(g).for_each(|(d, &x)| *d += c * x);
            }
            Op::Relu { a } => {
                let masked = zip_map(g, val(*a).data(), |x, y| if y > T::zero() { x } else { T::zero() });
                add_into(slot!(*a), &masked);
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let cols = val(*gain).len();
                let gn = val(*gain).data().to_vec();
                let n = T::of(cols as f64);
                let mut dgain = vec![T::zero(); cols];
                let mut dbias = vec![T::zero(); cols];
                let mut dx = vec![T::zero(); g.len()];
                for r in 0..rstd.len() {
                    let gr = &g[r * cols..(r + 1) * cols];
                    let hr = &xhat[r * cols..(r + 1) * cols];
                    let mut mean_gh = T::zero();
                    let mut mean_ghx = T::zero();
                    for c in 0..cols {
                        let gh = gr[c] * gn[c];
                        mean_gh += gh;
                        mean_ghx += gh * hr[c];
                        dgain[c] += gr[c] * hr[c];
                        dbias[c] += gr[c];
                    }
                    mean_gh /= n;
                    mean_ghx /= n;
                    for c in 0..cols {
                        let gh = gr[c] * gn[c];
                        dx[r * cols + c] = rstd[r] * (gh - mean_gh - hr[c] * mean_ghx);
                    }
                }
                add_into(slot!(*x), &dx);
                add_into(slot!(*gain), &dgain);
                add_into(slot!(*bias), &dbias);
            }
            Op::Embed { table, ids } => {
                let cols = val(*table).cols();
                let gt = slot!(*table);
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id as usize * cols..(id as usize + 1) * cols], &g[r * cols..(r + 1) * cols]);
                }
            }
            Op::GatherRows { a, rows } => {
                let cols = val(*a).cols();
                let ga = slot!(*a);
                for (i, &r) in rows.iter().enumerate() {
                    add_into(&mut ga[r * cols..(r + 1) * cols], &g[i * cols..(i + 1) * cols]);
                }
            }
            Op::Softmax { a } => {
                let y = node.value.data();
                let cols = node.value.cols();
                let mut dx = vec![T::zero(); y.len()];
                for ((yr, gr), dr) in y.chunks(cols).zip(g.chunks(cols)).zip(dx.chunks_mut(cols)) {
                    let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    for ((d, &p), &q) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = p * (q - dot);
                    }
                }
                add_into(slot!(*a), &dx);
            }
            Op::Attention { q, k, v, heads, segments, probs } => {
                let (qt, kt, vt) = (val(*q), val(*k), val(*v));
                let dim = qt.cols();
                let mut dq = vec![T::zero(); qt.len()];
                let mut dk = vec![T::zero(); kt.len()];
                let mut dv = vec![T::zero(); vt.len()];
                kernels::attention_backward(
                    qt.data(),
                    kt.data(),
                    vt.data(),
                    dim,
                    *heads,
                    segments,
                    probs,
                    g,
                    &mut dq,
                    &mut dk,
                    &mut dv,
                );
                add_into(slot!(*q), &dq);
                add_into(slot!(*k), &dk);
                add_into(slot!(*v), &dv);
            }
            Op::Dropout { a, keep } => {
                let masked = zip_map(g, keep, |x, m| x * m);
                add_into(slot!(*a), &masked);
            }
            Op::CrossEntropy { logits, targets, probs, smoothing, count } => {
                if *count == 0 {
                    return;
                }
                let vocab = val(*logits).cols();
                let scale = g[0] / T::of(*count as f64);
                let off = *smoothing / T::of(vocab as f64);
                let gl = slot!(*logits);
                for (r, target) in targets.iter().enumerate() {
                    let Some(target) = *target else { continue };
                    for j in 0..vocab {
                        let q = if j == target as usize { T::one() - *smoothing + off } else { off };
                        gl[r * vocab + j] += scale * (probs[r * vocab + j] - q);
                    }
                }
            }
            Op::Sum { a } => {
                let c = g[0];
                slot!(*a).iter_mut().for_each(|d| *d += c);
            }
        }
    }
}

fn grad_slot<'a, T: Scalar>(
    grads: &'a mut [Option<Vec<T>>],
    param_grads: &'a mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    params: &ParamStore<T>,
    v: Var,
) -> &'a mut [T] {
    let (store, i, len) = match v {
        Var::Node(i) => (grads, i, nodes[i].value.len()),
        Var::Param(id) => (param_grads, id.index(), params.get(id).len()),
    };
    store[i].get_or_insert_with(|| vec![T::zero(); len])
}

fn orient<T: Scalar>(t: &Tensor<T>, transposed: bool) -> View {
    let v = View::dense(t.rows(), t.cols());
    if transposed {
        v.t()
    } else {
        v
    }
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}
