//! Transformer building blocks. Each layer records its parameters in a
//! [`ParamStore`] and offers two evaluation paths: `forward` on an autodiff
//! [`Graph`] for training, and `apply` on plain buffers for inference.

use rand::Rng;

use super::graph::{Graph, Var};
use super::kernels::{self, AttnSegment, View};
use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let w = store.fan_in(&format!("{name}.w"), fan_in, fan_out, rng);
        let b = store.constant(&format!("{name}.b"), &[fan_out], 0.0);
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = g.matmul(x, Var::Param(self.w))?;
        g.add(h, Var::Param(self.b))
    }

    /// `x [rows, fan_in]` to `[rows, fan_out]`.
    pub fn apply<T: Scalar>(&self, p: &ParamStore<T>, x: &[T]) -> Vec<T> {
        let rows = x.len() / self.fan_in;
        let bias = p.get(self.b).data();
        let mut out = Vec::with_capacity(rows * self.fan_out);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        kernels::gemm(
            T::one(),
            x,
            View::dense(rows, self.fan_in),
            p.get(self.w).data(),
            View::dense(self.fan_in, self.fan_out),
            T::one(),
            &mut out,
            View::dense(rows, self.fan_out),
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        let gain = store.constant(&format!("{name}.gain"), &[dim], 1.0);
        let bias = store.constant(&format!("{name}.bias"), &[dim], 0.0);
        Self { gain, bias, dim }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        g.layer_norm(x, Var::Param(self.gain), Var::Param(self.bias))
    }

    pub fn apply<T: Scalar>(&self, p: &ParamStore<T>, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        kernels::layer_norm_rows(x, self.dim, p.get(self.gain).data(), p.get(self.bias).data(), &mut out);
        out
    }
}

/// Position-wise `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.inner"), dim, hidden, rng),
            outer: Linear::new(store, &format!("{name}.outer"), hidden, dim, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, dropout: f64) -> Result<Var> {
        let h = self.inner.forward(g, x)?;
        let h = g.relu(h);
        let h = g.dropout(h, dropout);
        self.outer.forward(g, h)
    }

    pub fn apply<T: Scalar>(&self, p: &ParamStore<T>, x: &[T]) -> Vec<T> {
        let mut h = self.inner.apply(p, x);
        h.iter_mut().for_each(|v| *v = v.max(T::zero()));
        self.outer.apply(p, &h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(format!("model dim {dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, rng),
            output: Linear::new(store, &format!("{name}.output"), dim, dim, rng),
            heads,
            dim,
        })
    }

    /// Queries from `xq` attend over keys and values projected from `xkv`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, xq: Var, xkv: Var, segments: Vec<AttnSegment>) -> Result<Var> {
        let q = self.query.forward(g, xq)?;
        let k = self.key.forward(g, xkv)?;
        let v = self.value.forward(g, xkv)?;
        let a = g.attention(q, k, v, self.heads, segments)?;
        self.output.forward(g, a)
    }

    pub fn project_kv<T: Scalar>(&self, p: &ParamStore<T>, x: &[T]) -> (Vec<T>, Vec<T>) {
        (self.key.apply(p, x), self.value.apply(p, x))
    }

    /// Projects `xq` to queries and attends over precomputed keys and values.
    pub fn attend<T: Scalar>(&self, p: &ParamStore<T>, xq: &[T], k: &[T], v: &[T], segments: &[AttnSegment]) -> Vec<T> {
        let q = self.query.apply(p, xq);
        let mut out = vec![T::zero(); q.len()];
        kernels::attention_forward(&q, k, v, self.dim, self.heads, segments, &mut out, None);
        self.output.apply(p, &out)
    }

    pub fn apply<T: Scalar>(&self, p: &ParamStore<T>, xq: &[T], xkv: &[T], segments: &[AttnSegment]) -> Vec<T> {
        let (k, v) = self.project_kv(p, xkv);
        self.attend(p, xq, &k, &v, segments)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    /// Entries drawn from `U(-sqrt(3/dim), sqrt(3/dim))`.
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let bound = super::params::INIT_GAIN / (dim as f64).sqrt();
        let table = store.uniform(&format!("{name}.table"), &[vocab, dim], bound, rng);
        Self { table, vocab, dim }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, ids: &[u32]) -> Result<Var> {
        g.embed(Var::Param(self.table), ids)
    }

    pub fn apply<T: Scalar>(&self, p: &ParamStore<T>, ids: &[u32]) -> Result<Vec<T>> {
        let t = p.get(self.table);
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            if id as usize >= self.vocab {
                return Err(Error::Shape {
                    op: "embed",
                    left: t.shape().to_vec(),
                    right: vec![id as usize],
                });
            }
            out.extend_from_slice(t.row(id as usize));
        }
        Ok(out)
    }
}

/// Sinusoidal position table `[length, dim]`.
pub fn sinusoidal_positions<T: Scalar>(length: usize, dim: usize) -> Result<Tensor<T>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::config(format!("positional encoding dim must be even, got {dim}")));
    }
    Tensor::new(&[length, dim], kernels::sinusoid_table(length, dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;
    use crate::tensor::mask::MaskKind;

    #[test]
    fn positions_start_alternating() {
        let t = sinusoidal_positions::<f64>(3, 6).unwrap();
        assert_eq!(t.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(t.shape(), &[3, 6]);
        assert_eq!(sinusoidal_positions::<f32>(0, 4).unwrap().shape(), &[0, 4]);
        assert!(matches!(sinusoidal_positions::<f32>(2, 5), Err(Error::Config(_))));
    }

    #[test]
    fn heads_must_divide_dim() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = SeedStreams::new(1).stream("init");
        assert!(matches!(
            MultiHeadAttention::new(&mut store, "att", 6, 4, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_projections_average_values_under_uniform_scores() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = SeedStreams::new(1).stream("init");
        let mha = MultiHeadAttention::new(&mut store, "att", 2, 1, &mut rng).unwrap();
        for lin in [mha.query, mha.key, mha.value, mha.output] {
            let w = store.get_mut(lin.w).data_mut();
            w.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        }
        // Zero queries make every score equal.
        let xq = vec![0.0, 0.0];
        let xkv = vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0];
        let segs = [AttnSegment::cross(0, 1, 0, 3)];
        let out = mha.apply(&store, &xq, &xkv, &segs);
        assert!((out[0] - 3.0).abs() < 1e-12 && (out[1] - 5.0).abs() < 1e-12);

        let mut g = Graph::new(&store);
        let q = g.input(Tensor::new(&[1, 2], xq).unwrap());
        let kv = g.input(Tensor::new(&[3, 2], xkv).unwrap());
        let y = mha.forward(&mut g, q, kv, segs.to_vec()).unwrap();
        assert_eq!(g.value(y).data(), &out[..]);
    }

    #[test]
    fn graph_and_buffer_paths_agree() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = SeedStreams::new(7).stream("init");
        let mha = MultiHeadAttention::new(&mut store, "att", 8, 2, &mut rng).unwrap();
        let ff = FeedForward::new(&mut store, "ff", 8, 16, &mut rng);
        let ln = LayerNorm::new(&mut store, "ln", 8);
        let x: Vec<f32> = (0..40).map(|i| ((i * 37 % 11) as f32 - 5.0) / 3.0).collect();
        let segs = vec![AttnSegment::square(0, 5, MaskKind::Causal)];

        let mut g = Graph::new(&store);
        let xv = g.input(Tensor::new(&[5, 8], x.clone()).unwrap());
        let a = mha.forward(&mut g, xv, xv, segs.clone()).unwrap();
        let f = ff.forward(&mut g, a, 0.5).unwrap();
        let y = ln.forward(&mut g, f).unwrap();

        let a2 = mha.apply(&store, &x, &x, &segs);
        let y2 = ln.apply(&store, &ff.apply(&store, &a2));
        for (u, v) in g.value(y).data().iter().zip(&y2) {
            assert!((u - v).abs() < 1e-5);
        }
    }
}
