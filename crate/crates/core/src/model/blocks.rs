//! Transformer building blocks. Forward passes are recorded on a [`Tape`];
//! one sequence at a time, shapes `[T × d]`.
//!
//! Pre-norm residual layout with a final layer norm; fixed sinusoidal
//! positional encodings.

use rand::{Rng, RngCore};

use super::config::ModelConfig;
use crate::autodiff::{NodeId, ParamId, ParamStore, Scalar, Tape, Tensor};
use crate::error::Result;

const INIT_STD: f64 = 0.02;
const MASKED_OUT: f64 = -1e9;

/// Per-forward context: the tape under construction plus train/eval state.
pub(crate) struct Fwd<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub store: &'a ParamStore<T>,
    pub dropout: f64,
    /// `Some` in training mode; `None` disables dropout (eval).
    pub rng: Option<&'a mut dyn RngCore>,
}

impl<'a, T: Scalar> Fwd<'a, T> {
    fn drop_node(&mut self, x: NodeId) -> NodeId {
        match (&mut self.rng, self.dropout > 0.0) {
            (Some(rng), true) => self.tape.dropout(x, self.dropout, rng),
            _ => x,
        }
    }
}

pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Linear {
        Linear {
            w: store.add_normal(format!("{name}.w"), &[d_in, d_out], INIT_STD, rng),
            b: store.add_zeros(format!("{name}.b"), &[d_out]),
        }
    }

    fn apply<T: Scalar>(&self, f: &mut Fwd<'_, T>, x: NodeId) -> Result<NodeId> {
        let w = f.tape.param(f.store, self.w);
        let b = f.tape.param(f.store, self.b);
        let y = f.tape.matmul(x, w)?;
        f.tape.add_row(y, b)
    }
}

pub(crate) struct Norm {
    gain: ParamId,
    bias: ParamId,
}

impl Norm {
    fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) -> Norm {
        Norm {
            gain: store.add_full(format!("{name}.gain"), &[d], T::one()),
            bias: store.add_zeros(format!("{name}.bias"), &[d]),
        }
    }

    fn apply<T: Scalar>(&self, f: &mut Fwd<'_, T>, x: NodeId) -> Result<NodeId> {
        let g = f.tape.param(f.store, self.gain);
        let b = f.tape.param(f.store, self.bias);
        f.tape.layer_norm(x, g, b)
    }
}

pub(crate) struct Attention {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    heads: usize,
    head_dim: usize,
}

impl Attention {
    fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        cfg: &ModelConfig,
    ) -> Attention {
        let d = cfg.d_model;
        Attention {
            wq: Linear::new(store, rng, &format!("{name}.wq"), d, d),
            wk: Linear::new(store, rng, &format!("{name}.wk"), d, d),
            wv: Linear::new(store, rng, &format!("{name}.wv"), d, d),
            wo: Linear::new(store, rng, &format!("{name}.wo"), d, d),
            heads: cfg.heads,
            head_dim: d / cfg.heads,
        }
    }

    /// Multi-head scaled dot-product attention; queries from `x_q`, keys and
    /// values from `x_kv`. `causal` adds the upper-triangular mask (only
    /// valid when `x_q` and `x_kv` are the same sequence).
    fn apply<T: Scalar>(
        &self,
        f: &mut Fwd<'_, T>,
        x_q: NodeId,
        x_kv: NodeId,
        causal: bool,
    ) -> Result<NodeId> {
        let q = self.wq.apply(f, x_q)?;
        let k = self.wk.apply(f, x_kv)?;
        let v = self.wv.apply(f, x_kv)?;
        let t_q = f.tape.value(q).rows();
        let t_k = f.tape.value(k).rows();
        let mask = if causal {
            Some(f.tape.constant(causal_mask::<T>(t_q)))
        } else {
            None
        };
        let scale = T::from_f64(1.0 / (self.head_dim as f64).sqrt());
        let mut outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let start = h * self.head_dim;
            let qh = f.tape.slice_cols(q, start, self.head_dim)?;
            let kh = f.tape.slice_cols(k, start, self.head_dim)?;
            let vh = f.tape.slice_cols(v, start, self.head_dim)?;
            let kt = f.tape.transpose(kh);
            let scores = f.tape.matmul(qh, kt)?;
            let scores = f.tape.scale(scores, scale);
            let scores = match mask {
                Some(m) => f.tape.add(scores, m)?,
                None => scores,
            };
            debug_assert_eq!(f.tape.value(scores).shape(), &[t_q, t_k]);
            let attn = f.tape.softmax_rows(scores);
            outputs.push(f.tape.matmul(attn, vh)?);
        }
        let merged = f.tape.concat_cols(&outputs)?;
        self.wo.apply(f, merged)
    }
}

fn causal_mask<T: Scalar>(t: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); t * t];
    let blocked = T::from_f64(MASKED_OUT);
    for i in 0..t {
        for j in (i + 1)..t {
            data[i * t + j] = blocked;
        }
    }
    Tensor::from_vec(vec![t, t], data).expect("square mask")
}

pub(crate) struct FeedForward {
    w1: Linear,
    w2: Linear,
}

impl FeedForward {
    fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        cfg: &ModelConfig,
    ) -> FeedForward {
        FeedForward {
            w1: Linear::new(store, rng, &format!("{name}.w1"), cfg.d_model, cfg.d_ff),
            w2: Linear::new(store, rng, &format!("{name}.w2"), cfg.d_ff, cfg.d_model),
        }
    }

    fn apply<T: Scalar>(&self, f: &mut Fwd<'_, T>, x: NodeId) -> Result<NodeId> {
        let h = self.w1.apply(f, x)?;
        let h = f.tape.relu(h);
        self.w2.apply(f, h)
    }
}

struct EncoderLayer {
    ln1: Norm,
    attn: Attention,
    ln2: Norm,
    ff: FeedForward,
}

impl EncoderLayer {
    fn apply<T: Scalar>(&self, f: &mut Fwd<'_, T>, x: NodeId) -> Result<NodeId> {
        let h = self.ln1.apply(f, x)?;
        let a = self.attn.apply(f, h, h, false)?;
        let a = f.drop_node(a);
        let x = f.tape.add(x, a)?;
        let h = self.ln2.apply(f, x)?;
        let m = self.ff.apply(f, h)?;
        let m = f.drop_node(m);
        f.tape.add(x, m)
    }
}

pub(crate) struct Encoder {
    embed: ParamId,
    layers: Vec<EncoderLayer>,
    ln_f: Norm,
    d_model: usize,
}

impl Encoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        prefix: &str,
        cfg: &ModelConfig,
    ) -> Encoder {
        let embed = store.add_normal(
            format!("{prefix}.embed"),
            &[cfg.vocab_size, cfg.d_model],
            INIT_STD,
            rng,
        );
        let layers = (0..cfg.layers)
            .map(|l| EncoderLayer {
                ln1: Norm::new(store, &format!("{prefix}.l{l}.ln1"), cfg.d_model),
                attn: Attention::new(store, rng, &format!("{prefix}.l{l}.attn"), cfg),
                ln2: Norm::new(store, &format!("{prefix}.l{l}.ln2"), cfg.d_model),
                ff: FeedForward::new(store, rng, &format!("{prefix}.l{l}.ff"), cfg),
            })
            .collect();
        Encoder {
            embed,
            layers,
            ln_f: Norm::new(store, &format!("{prefix}.ln_f"), cfg.d_model),
            d_model: cfg.d_model,
        }
    }

    /// Latent representation of `ids`: shape `[len(ids) × d_model]`.
    pub fn apply<T: Scalar>(
        &self,
        f: &mut Fwd<'_, T>,
        ids: &[usize],
        pos: &Tensor<T>,
    ) -> Result<NodeId> {
        let table = f.tape.param(f.store, self.embed);
        let x = f.tape.gather(table, ids)?;
        let x = f.tape.scale(x, T::from_f64((self.d_model as f64).sqrt()));
        let pe = f.tape.constant(pos_slice(pos, ids.len()));
        let x = f.tape.add(x, pe)?;
        let mut x = f.drop_node(x);
        for layer in &self.layers {
            x = layer.apply(f, x)?;
        }
        self.ln_f.apply(f, x)
    }
}

struct DecoderLayer {
    ln1: Norm,
    self_attn: Attention,
    ln2: Norm,
    cross_attn: Attention,
    ln3: Norm,
    ff: FeedForward,
}

impl DecoderLayer {
    fn apply<T: Scalar>(
        &self,
        f: &mut Fwd<'_, T>,
        x: NodeId,
        memory: NodeId,
    ) -> Result<NodeId> {
        let h = self.ln1.apply(f, x)?;
        let a = self.self_attn.apply(f, h, h, true)?;
        let a = f.drop_node(a);
        let x = f.tape.add(x, a)?;
        let h = self.ln2.apply(f, x)?;
        let c = self.cross_attn.apply(f, h, memory, false)?;
        let c = f.drop_node(c);
        let x = f.tape.add(x, c)?;
        let h = self.ln3.apply(f, x)?;
        let m = self.ff.apply(f, h)?;
        let m = f.drop_node(m);
        f.tape.add(x, m)
    }
}

pub(crate) struct Decoder {
    embed: ParamId,
    layers: Vec<DecoderLayer>,
    ln_f: Norm,
    out: Linear,
    d_model: usize,
}

impl Decoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        prefix: &str,
        cfg: &ModelConfig,
    ) -> Decoder {
        let embed = store.add_normal(
            format!("{prefix}.embed"),
            &[cfg.vocab_size, cfg.d_model],
            INIT_STD,
            rng,
        );
        let layers = (0..cfg.layers)
            .map(|l| DecoderLayer {
                ln1: Norm::new(store, &format!("{prefix}.l{l}.ln1"), cfg.d_model),
                self_attn: Attention::new(store, rng, &format!("{prefix}.l{l}.self_attn"), cfg),
                ln2: Norm::new(store, &format!("{prefix}.l{l}.ln2"), cfg.d_model),
                cross_attn: Attention::new(store, rng, &format!("{prefix}.l{l}.cross_attn"), cfg),
                ln3: Norm::new(store, &format!("{prefix}.l{l}.ln3"), cfg.d_model),
                ff: FeedForward::new(store, rng, &format!("{prefix}.l{l}.ff"), cfg),
            })
            .collect();
        Decoder {
            embed,
            layers,
            ln_f: Norm::new(store, &format!("{prefix}.ln_f"), cfg.d_model),
            out: Linear::new(store, rng, &format!("{prefix}.out"), cfg.d_model, cfg.vocab_size),
            d_model: cfg.d_model,
        }
    }

    /// Teacher-forced logits `[len(input_ids) × V]` over the next token at
    /// each position. `input_ids` starts with the start token.
    pub fn apply<T: Scalar>(
        &self,
        f: &mut Fwd<'_, T>,
        input_ids: &[usize],
        memory: NodeId,
        pos: &Tensor<T>,
    ) -> Result<NodeId> {
        let table = f.tape.param(f.store, self.embed);
        let x = f.tape.gather(table, input_ids)?;
        let x = f.tape.scale(x, T::from_f64((self.d_model as f64).sqrt()));
        let pe = f.tape.constant(pos_slice(pos, input_ids.len()));
        let x = f.tape.add(x, pe)?;
        let mut x = f.drop_node(x);
        for layer in &self.layers {
            x = layer.apply(f, x, memory)?;
        }
        let x = self.ln_f.apply(f, x)?;
        self.out.apply(f, x)
    }
}

/// Sinusoidal positional encoding table, `[max_len × d]`.
pub(crate) fn positional_table<T: Scalar>(max_len: usize, d: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); max_len * d];
    for p in 0..max_len {
        for i in 0..d / 2 {
            let rate = (p as f64) / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[p * d + 2 * i] = T::from_f64(rate.sin());
            data[p * d + 2 * i + 1] = T::from_f64(rate.cos());
        }
    }
    Tensor::from_vec(vec![max_len, d], data).expect("table shape")
}

fn pos_slice<T: Scalar>(pos: &Tensor<T>, t: usize) -> Tensor<T> {
    let d = pos.cols();
    debug_assert!(t <= pos.rows(), "sequence longer than the position table");
    Tensor::from_vec(vec![t, d], pos.data()[..t * d].to_vec()).expect("slice shape")
}
