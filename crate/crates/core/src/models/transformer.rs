//! Post-norm Transformer encoder and decoder stacks over packed batches.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{
    AttnSegment, Embedding, FeedForward, Graph, LayerNorm, Linear, MaskKind, MultiHeadAttention, ParamStore, Scalar,
    Tensor, Var,
};

/// Sentences laid end to end: `spans[s] = (start, len)` into `ids`, and
/// every row carries its position within its own sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Packed {
    pub ids: Vec<u32>,
    pub positions: Vec<usize>,
    pub spans: Vec<(usize, usize)>,
}

impl Packed {
    pub fn new<I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u32]>,
    {
        let mut p = Packed::default();
        for s in sentences {
            p.push(s.as_ref());
        }
        p
    }

    pub fn push(&mut self, ids: &[u32]) {
        self.spans.push((self.ids.len(), ids.len()));
        self.ids.extend_from_slice(ids);
        self.positions.extend(0..ids.len());
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn self_segments(&self, mask: &MaskKind) -> Vec<AttnSegment> {
        self.spans
            .iter()
            .map(|&(s, n)| AttnSegment::square(s, n, mask.clone()))
            .collect()
    }

    /// Each sentence of `self` attends over the matching sentence of `memory`.
    pub fn cross_segments(&self, memory: &Packed) -> Vec<AttnSegment> {
        self.spans
            .iter()
            .zip(&memory.spans)
            .map(|(&(qs, qn), &(ks, kn))| AttnSegment::cross(qs, qn, ks, kn))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub attn_norm: LayerNorm,
    pub ff: FeedForward,
    pub ff_norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub attn: MultiHeadAttention,
    pub attn_norm: LayerNorm,
    pub cross: MultiHeadAttention,
    pub cross_norm: LayerNorm,
    pub ff: FeedForward,
    pub ff_norm: LayerNorm,
}

/// Shape shared by every stack in one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dims {
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub max_positions: usize,
}

/// Token embedding scaled by `sqrt(dim)` plus sinusoidal positions.
#[derive(Debug, Clone)]
pub struct InputEmbedding {
    pub embed: Embedding,
    positions: Vec<f64>,
    max_positions: usize,
}

impl InputEmbedding {
    fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, vocab: usize, dims: Dims, rng: &mut impl Rng) -> Result<Self> {
        let positions = crate::tensor::sinusoidal_positions::<f64>(dims.max_positions, dims.dim)?.into_data();
        Ok(Self {
            embed: Embedding::new(store, name, vocab, dims.dim, rng),
            positions,
            max_positions: dims.max_positions,
        })
    }

    fn position_rows<T: Scalar>(&self, positions: &[usize]) -> Result<Vec<T>> {
        let d = self.embed.dim;
        let mut out = Vec::with_capacity(positions.len() * d);
        for &p in positions {
            if p >= self.max_positions {
                return Err(Error::config(format!(
                    "position {p} exceeds the positional table ({})",
                    self.max_positions
                )));
            }
            out.extend(self.positions[p * d..(p + 1) * d].iter().map(|&x| T::of(x)));
        }
        Ok(out)
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, ids: &[u32], positions: &[usize]) -> Result<Var> {
        let e = self.embed.forward(g, ids)?;
        let e = g.scale(e, (self.embed.dim as f64).sqrt());
        let pos = Tensor::new(&[ids.len(), self.embed.dim], self.position_rows(positions)?)?;
        let pos = g.input(pos);
        g.add(e, pos)
    }

    fn apply<T: Scalar>(&self, p: &ParamStore<T>, ids: &[u32], positions: &[usize]) -> Result<Vec<T>> {
        let mut e = self.embed.apply(p, ids)?;
        let scale = T::of((self.embed.dim as f64).sqrt());
        for (x, pe) in e.iter_mut().zip(self.position_rows::<T>(positions)?) {
            *x = *x * scale + pe;
        }
        Ok(e)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub input: InputEmbedding,
    pub layers: Vec<EncoderLayer>,
    pub dims: Dims,
}

impl Encoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        vocab: usize,
        layers: usize,
        dims: Dims,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input = InputEmbedding::new(store, &format!("{name}.embed"), vocab, dims, rng)?;
        let layers = (0..layers)
            .map(|i| {
                let n = format!("{name}.layer{i}");
                Ok(EncoderLayer {
                    attn: MultiHeadAttention::new(store, &format!("{n}.attn"), dims.dim, dims.heads, rng)?,
                    attn_norm: LayerNorm::new(store, &format!("{n}.attn_norm"), dims.dim),
                    ff: FeedForward::new(store, &format!("{n}.ff"), dims.dim, dims.ff_dim, rng),
                    ff_norm: LayerNorm::new(store, &format!("{n}.ff_norm"), dims.dim),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { input, layers, dims })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, src: &Packed) -> Result<Var> {
        let x = self.input.forward(g, &src.ids, &src.positions)?;
        self.forward_embedded(g, x, src)
    }

    /// Runs the layers on already-embedded rows (used to test the stack
    /// without positional information).
    pub fn forward_embedded<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, src: &Packed) -> Result<Var> {
        let rate = self.dims.dropout;
        let mut x = g.dropout(x, rate);
        let segs = src.self_segments(&MaskKind::Full);
        for l in &self.layers {
            let a = l.attn.forward(g, x, x, segs.clone())?;
            let a = g.dropout(a, rate);
            let h = g.add(x, a)?;
            let h = l.attn_norm.forward(g, h)?;
            let f = l.ff.forward(g, h, rate)?;
            let f = g.dropout(f, rate);
            let h2 = g.add(h, f)?;
            x = l.ff_norm.forward(g, h2)?;
        }
        Ok(x)
    }

    /// Inference for one sentence; returns `[len, dim]` rows.
    pub fn apply<T: Scalar>(&self, p: &ParamStore<T>, ids: &[u32]) -> Result<Vec<T>> {
        if ids.is_empty() {
            return Err(Error::Empty("source sentence"));
        }
        let positions: Vec<usize> = (0..ids.len()).collect();
        let mut x = self.input.apply(p, ids, &positions)?;
        let segs = [AttnSegment::square(0, ids.len(), MaskKind::Full)];
        for l in &self.layers {
            let a = l.attn.apply(p, &x, &x, &segs);
            add_assign(&mut x, &a);
            let h = l.attn_norm.apply(p, &x);
            let mut f = l.ff.apply(p, &h);
            add_assign(&mut f, &h);
            x = l.ff_norm.apply(p, &f);
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub input: InputEmbedding,
    pub layers: Vec<DecoderLayer>,
    pub output: Linear,
    pub dims: Dims,
}

/// Per-layer key/value cache for incremental decoding of `slots`
/// hypotheses that all have the same length.
#[derive(Debug, Clone)]
pub struct DecoderCache<T: Scalar> {
    pub slots: usize,
    pub len: usize,
    cap: usize,
    self_k: Vec<Vec<T>>,
    self_v: Vec<Vec<T>>,
    cross_k: Vec<Vec<T>>,
    cross_v: Vec<Vec<T>>,
    memory_len: usize,
}

impl<T: Scalar> DecoderCache<T> {
    /// Keeps the hypotheses named by `parents` (with repetition) in order.
    pub fn reorder(&mut self, parents: &[usize], dim: usize) {
        let (cap, len) = (self.cap, self.len);
        for buf in self.self_k.iter_mut().chain(self.self_v.iter_mut()) {
            let mut next = vec![T::zero(); parents.len() * cap * dim];
            for (s, &parent) in parents.iter().enumerate() {
                let src = &buf[parent * cap * dim..(parent * cap + len) * dim];
                next[s * cap * dim..(s * cap + len) * dim].copy_from_slice(src);
            }
            *buf = next;
        }
        self.slots = parents.len();
    }
}

impl Decoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_vocab: usize,
        out_vocab: usize,
        layers: usize,
        dims: Dims,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input = InputEmbedding::new(store, &format!("{name}.embed"), in_vocab, dims, rng)?;
        let layers = (0..layers)
            .map(|i| {
                let n = format!("{name}.layer{i}");
                Ok(DecoderLayer {
                    attn: MultiHeadAttention::new(store, &format!("{n}.attn"), dims.dim, dims.heads, rng)?,
                    attn_norm: LayerNorm::new(store, &format!("{n}.attn_norm"), dims.dim),
                    cross: MultiHeadAttention::new(store, &format!("{n}.cross"), dims.dim, dims.heads, rng)?,
                    cross_norm: LayerNorm::new(store, &format!("{n}.cross_norm"), dims.dim),
                    ff: FeedForward::new(store, &format!("{n}.ff"), dims.dim, dims.ff_dim, rng),
                    ff_norm: LayerNorm::new(store, &format!("{n}.ff_norm"), dims.dim),
                })
            })
            .collect::<Result<_>>()?;
        let output = Linear::new(store, &format!("{name}.output"), dims.dim, out_vocab, rng);
        Ok(Self {
            input,
            layers,
            output,
            dims,
        })
    }

    pub fn out_vocab(&self) -> usize {
        self.output.fan_out
    }

    /// Teacher-forced logits `[rows, out_vocab]`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        tgt: &Packed,
        mask: &MaskKind,
        memory: Var,
        src: &Packed,
    ) -> Result<Var> {
        let rate = self.dims.dropout;
        let x = self.input.forward(g, &tgt.ids, &tgt.positions)?;
        let mut x = g.dropout(x, rate);
        let self_segs = tgt.self_segments(mask);
        let cross_segs = tgt.cross_segments(src);
        for l in &self.layers {
            let a = l.attn.forward(g, x, x, self_segs.clone())?;
            let a = g.dropout(a, rate);
            let h = g.add(x, a)?;
            let h = l.attn_norm.forward(g, h)?;
            let c = l.cross.forward(g, h, memory, cross_segs.clone())?;
            let c = g.dropout(c, rate);
            let h2 = g.add(h, c)?;
            let h2 = l.cross_norm.forward(g, h2)?;
            let f = l.ff.forward(g, h2, rate)?;
            let f = g.dropout(f, rate);
            let h3 = g.add(h2, f)?;
            x = l.ff_norm.forward(g, h3)?;
        }
        self.output.forward(g, x)
    }

    /// Empty cache for `capacity` decoder positions attending over one
    /// encoded sentence; cross-attention keys and values are computed here
    /// once.
    pub fn start<T: Scalar>(&self, p: &ParamStore<T>, memory: &[T], capacity: usize) -> DecoderCache<T> {
        let d = self.dims.dim;
        let (cross_k, cross_v) = self.layers.iter().map(|l| l.cross.project_kv(p, memory)).unzip();
        DecoderCache {
            slots: 1,
            len: 0,
            cap: capacity,
            self_k: vec![vec![T::zero(); capacity * d]; self.layers.len()],
            self_v: vec![vec![T::zero(); capacity * d]; self.layers.len()],
            cross_k,
            cross_v,
            memory_len: memory.len() / d,
        }
    }

    /// Appends `n` positions to every slot (`ids` holds `slots * n` ids,
    /// slot-major) and returns their logits `[slots * n, out_vocab]`.
    pub fn step<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        cache: &mut DecoderCache<T>,
        ids: &[u32],
        mask: &MaskKind,
    ) -> Result<Vec<T>> {
        let d = self.dims.dim;
        let slots = cache.slots;
        if slots == 0 || ids.len() % slots != 0 {
            return Err(Error::config("decoder step ids do not divide evenly across slots"));
        }
        let n = ids.len() / slots;
        let start = cache.len;
        if start + n > cache.cap {
            return Err(Error::config(format!("decoder cache capacity {} exceeded", cache.cap)));
        }
        let positions: Vec<usize> = (0..slots).flat_map(|_| start..start + n).collect();
        let mut x = self.input.apply(p, ids, &positions)?;
        let self_segs: Vec<AttnSegment> = (0..slots)
            .map(|s| AttnSegment {
                q_start: s * n,
                q_len: n,
                k_start: s * cache.cap,
                k_len: start + n,
                q_offset: start,
                mask: mask.clone(),
            })
            .collect();
        let cross_segs: Vec<AttnSegment> = (0..slots)
            .map(|s| AttnSegment::cross(s * n, n, 0, cache.memory_len))
            .collect();
        for (li, l) in self.layers.iter().enumerate() {
            let (k, v) = l.attn.project_kv(p, &x);
            for s in 0..slots {
                let dst = (s * cache.cap + start) * d..(s * cache.cap + start + n) * d;
                cache.self_k[li][dst.clone()].copy_from_slice(&k[s * n * d..(s + 1) * n * d]);
                cache.self_v[li][dst].copy_from_slice(&v[s * n * d..(s + 1) * n * d]);
            }
            let a = l.attn.attend(p, &x, &cache.self_k[li], &cache.self_v[li], &self_segs);
            add_assign(&mut x, &a);
            let h = l.attn_norm.apply(p, &x);
            let mut c = l.cross.attend(p, &h, &cache.cross_k[li], &cache.cross_v[li], &cross_segs);
            add_assign(&mut c, &h);
            let h2 = l.cross_norm.apply(p, &c);
            let mut f = l.ff.apply(p, &h2);
            add_assign(&mut f, &h2);
            x = l.ff_norm.apply(p, &f);
        }
        cache.len += n;
        Ok(self.output.apply(p, &x))
    }

    /// Logits for a whole target sequence in one pass.
    pub fn apply<T: Scalar>(&self, p: &ParamStore<T>, memory: &[T], ids: &[u32], mask: &MaskKind) -> Result<Vec<T>> {
        let mut cache = self.start(p, memory, ids.len());
        self.step(p, &mut cache, ids, mask)
    }
}

fn add_assign<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}
