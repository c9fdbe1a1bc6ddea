use std::sync::atomic::{AtomicU64, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::blocks::{positional_table, Decoder, Encoder, Fwd};
use super::config::ModelConfig;
use crate::autodiff::{NodeId, ParamStore, Scalar, Tape, Tensor};
use crate::error::Result;
use crate::text::{Vocab, BOS_ID, EOS_ID, PAD_ID};

/// A single-pair transformer: one encoder, one decoder. Used for the learned
/// translator and as the temporary model during encoder pretraining.
pub struct Seq2Seq<T: Scalar> {
    config: ModelConfig,
    vocab: Vocab,
    store: ParamStore<T>,
    enc: Encoder,
    dec: Decoder,
    pos: Tensor<T>,
    truncations: AtomicU64,
}

impl<T: Scalar> std::fmt::Debug for Seq2Seq<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Seq2Seq")
            .field("config", &self.config)
            .field("params", &self.store.numel())
            .finish()
    }
}

impl<T: Scalar> Seq2Seq<T> {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &mut rng, "enc", &config);
        let dec = Decoder::new(&mut store, &mut rng, "dec", &config);
        let pos = positional_table(config.max_len, config.d_model);
        Ok(Seq2Seq {
            config,
            vocab,
            store,
            enc,
            dec,
            pos,
            truncations: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Count of over-length inputs truncated so far.
    pub fn truncation_count(&self) -> u64 {
        self.truncations.load(Ordering::Relaxed)
    }

    /// Encodes tokens to ids, truncating over-length input (counted, not an
    /// error). OOV tokens map to `<unk>`.
    pub fn input_ids(&self, tokens: &[String]) -> Vec<usize> {
        let mut ids = self.vocab.encode(tokens);
        if ids.len() > self.config.max_len {
            ids.truncate(self.config.max_len);
            self.truncations.fetch_add(1, Ordering::Relaxed);
        }
        ids
    }

    /// Teacher-forced training loss for one (source, target) pair, recorded
    /// on the caller's tape.
    pub fn pair_loss<'t>(
        &'t self,
        tape: &'t mut Tape<T>,
        rng: Option<&'t mut dyn RngCore>,
        src_tokens: &[String],
        tgt_tokens: &[String],
    ) -> Result<NodeId> {
        let src_ids = self.input_ids(src_tokens);
        let mut tgt_ids = self.vocab.encode(tgt_tokens);
        // Room for <bos> in the input and <eos> in the target.
        if tgt_ids.len() + 1 > self.config.max_len {
            tgt_ids.truncate(self.config.max_len - 1);
            self.truncations.fetch_add(1, Ordering::Relaxed);
        }
        let mut f = Fwd {
            tape,
            store: &self.store,
            dropout: self.config.dropout,
            rng,
        };
        let memory = self.enc.apply(&mut f, &src_ids, &self.pos)?;
        let mut dec_in = Vec::with_capacity(tgt_ids.len() + 1);
        dec_in.push(BOS_ID);
        dec_in.extend_from_slice(&tgt_ids);
        let logits = self.dec.apply(&mut f, &dec_in, memory, &self.pos)?;
        let mut targets = tgt_ids;
        targets.push(EOS_ID);
        f.tape.cross_entropy(logits, &targets, PAD_ID)
    }

    /// Greedy decode with an explicit output-length cap (further limited by
    /// the positional table).
    pub fn greedy_capped(&self, src_tokens: &[String], cap: usize) -> Result<Vec<String>> {
        let src_ids = self.input_ids(src_tokens);
        if src_ids.is_empty() {
            return Ok(Vec::new());
        }
        // Encode once, then reuse the latent as a constant.
        let mut tape = Tape::new();
        let mut f = Fwd {
            tape: &mut tape,
            store: &self.store,
            dropout: 0.0,
            rng: None,
        };
        let memory = self.enc.apply(&mut f, &src_ids, &self.pos)?;
        let z = tape.value(memory).clone();

        let cap = cap.min(self.config.max_len - 1);
        let ids = greedy_from_latent(&self.store, &self.dec, &z, &self.pos, BOS_ID, cap)?;
        self.vocab.decode(&ids)
    }
}

/// Greedy decoding loop shared by all models: re-runs the decoder over the
/// growing prefix against a fixed latent, stopping at `<eos>` or `cap`.
pub(crate) fn greedy_from_latent<T: Scalar>(
    store: &ParamStore<T>,
    dec: &Decoder,
    z: &Tensor<T>,
    pos: &Tensor<T>,
    start_id: usize,
    cap: usize,
) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = Vec::new();
    while out.len() < cap {
        let mut tape = Tape::new();
        let mut f = Fwd {
            tape: &mut tape,
            store,
            dropout: 0.0,
            rng: None,
        };
        let memory = f.tape.constant(z.clone());
        let mut dec_in = Vec::with_capacity(out.len() + 1);
        dec_in.push(start_id);
        dec_in.extend_from_slice(&out);
        let logits = dec.apply(&mut f, &dec_in, memory, pos)?;
        let t = tape.value(logits);
        let v = t.cols();
        let last = &t.data()[(dec_in.len() - 1) * v..dec_in.len() * v];
        let next = argmax(last);
        if next == EOS_ID {
            break;
        }
        out.push(next);
    }
    Ok(out)
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0usize;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
