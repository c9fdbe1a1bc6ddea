use std::sync::atomic::{AtomicU64, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::blocks::{positional_table, Decoder, Encoder, Fwd};
use super::config::{ModelConfig, Variant};
use super::seq2seq::greedy_from_latent;
use crate::autodiff::{NodeId, ParamStore, Scalar, Tape, Tensor};
use crate::error::{Error, Result};
use crate::lexicon::PolarityLexicon;
use crate::noising::{apply_noise, NoiseMode, PhaseProbs};
use crate::text::{Sentiment, Vocab, BOS_ID, EOS_ID, NEG_ID, PAD_ID, POS_ID};
use crate::translate::Translator;

/// Which decoder parameters produced an output, for routing assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderId {
    Pos,
    Neg,
    /// The single decoder of the style-token variant.
    Shared,
}

/// Per-token encoder output for one sentence.
#[derive(Debug, Clone)]
pub struct LatentRepresentation<T: Scalar> {
    pub z: Tensor<T>,
    pub src_len: usize,
}

enum Topology {
    StyleTok {
        enc: Encoder,
        dec: Decoder,
    },
    TwoSep {
        pos_enc: Encoder,
        pos_dec: Decoder,
        neg_enc: Encoder,
        neg_dec: Decoder,
    },
    SharedEnc {
        enc: Encoder,
        dec_pos: Decoder,
        dec_neg: Decoder,
    },
}

/// Optional inference-time noising of the intermediate input.
pub struct InferenceNoise<'a> {
    pub lexicon: &'a PolarityLexicon,
    pub probs: PhaseProbs,
    pub mode: NoiseMode,
    pub seed: u64,
}

/// The sentiment transfer model: shared or separate encoders plus
/// sentiment-specific decoding, per the configured [`Variant`].
pub struct TransferModel<T: Scalar> {
    config: ModelConfig,
    vocab: Vocab,
    store: ParamStore<T>,
    topology: Topology,
    pos: Tensor<T>,
    truncations: AtomicU64,
}

impl<T: Scalar> std::fmt::Debug for TransferModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransferModel")
            .field("config", &self.config)
            .field("params", &self.store.numel())
            .finish()
    }
}

impl<T: Scalar> TransferModel<T> {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Config(format!(
                "config vocab_size {} does not match vocabulary of {} tokens",
                config.vocab_size,
                vocab.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let topology = match config.variant {
            Variant::StyleTok => Topology::StyleTok {
                enc: Encoder::new(&mut store, &mut rng, "enc", &config),
                dec: Decoder::new(&mut store, &mut rng, "dec", &config),
            },
            Variant::TwoSep => Topology::TwoSep {
                pos_enc: Encoder::new(&mut store, &mut rng, "pos.enc", &config),
                pos_dec: Decoder::new(&mut store, &mut rng, "pos.dec", &config),
                neg_enc: Encoder::new(&mut store, &mut rng, "neg.enc", &config),
                neg_dec: Decoder::new(&mut store, &mut rng, "neg.dec", &config),
            },
            Variant::SharedEncTwoDec | Variant::PretrainedEnc | Variant::Denoised => {
                Topology::SharedEnc {
                    enc: Encoder::new(&mut store, &mut rng, "enc", &config),
                    dec_pos: Decoder::new(&mut store, &mut rng, "dec_pos", &config),
                    dec_neg: Decoder::new(&mut store, &mut rng, "dec_neg", &config),
                }
            }
        };
        let pos = positional_table(config.max_len, config.d_model);
        Ok(TransferModel {
            config,
            vocab,
            store,
            topology,
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

    pub fn truncation_count(&self) -> u64 {
        self.truncations.load(Ordering::Relaxed)
    }

    fn input_ids(&self, tokens: &[String]) -> Vec<usize> {
        let mut ids = self.vocab.encode(tokens);
        if ids.len() > self.config.max_len {
            ids.truncate(self.config.max_len);
            self.truncations.fetch_add(1, Ordering::Relaxed);
        }
        ids
    }

    /// The encoder serving decode paths toward `target`. Only the two
    /// separate transformers route encoding by sentiment.
    fn encoder_for(&self, target: Sentiment) -> &Encoder {
        match &self.topology {
            Topology::StyleTok { enc, .. } => enc,
            Topology::SharedEnc { enc, .. } => enc,
            Topology::TwoSep {
                pos_enc, neg_enc, ..
            } => match target {
                Sentiment::Neg => neg_enc,
                _ => pos_enc,
            },
        }
    }

    /// Decoder and start token for `target` sentiment output.
    fn decoder_for(&self, target: Sentiment) -> Result<(&Decoder, usize, DecoderId)> {
        match (&self.topology, target) {
            (Topology::StyleTok { dec, .. }, Sentiment::Pos) => Ok((dec, POS_ID, DecoderId::Shared)),
            (Topology::StyleTok { dec, .. }, Sentiment::Neg) => Ok((dec, NEG_ID, DecoderId::Shared)),
            (Topology::TwoSep { pos_dec, .. }, Sentiment::Pos) => {
                Ok((pos_dec, BOS_ID, DecoderId::Pos))
            }
            (Topology::TwoSep { neg_dec, .. }, Sentiment::Neg) => {
                Ok((neg_dec, BOS_ID, DecoderId::Neg))
            }
            (Topology::SharedEnc { dec_pos, .. }, Sentiment::Pos) => {
                Ok((dec_pos, BOS_ID, DecoderId::Pos))
            }
            (Topology::SharedEnc { dec_neg, .. }, Sentiment::Neg) => {
                Ok((dec_neg, BOS_ID, DecoderId::Neg))
            }
            (_, Sentiment::Unlabeled) => Err(Error::Data(
                "decode requires a pos or neg sentiment, got unlabeled".into(),
            )),
        }
    }

    /// Encodes intermediate-language tokens into the latent representation
    /// (eval mode). For the two-separate-transformers variant this uses the
    /// positive pair's encoder; [`TransferModel::transfer`] routes by target.
    pub fn encode(&self, tokens: &[String]) -> Result<LatentRepresentation<T>> {
        self.encode_for(Sentiment::Pos, tokens)
    }

    pub fn encode_for(
        &self,
        target: Sentiment,
        tokens: &[String],
    ) -> Result<LatentRepresentation<T>> {
        let ids = self.input_ids(tokens);
        if ids.is_empty() {
            return Err(Error::Data("cannot encode an empty sentence".into()));
        }
        let mut tape = Tape::new();
        let mut f = Fwd {
            tape: &mut tape,
            store: &self.store,
            dropout: 0.0,
            rng: None,
        };
        let node = self.encoder_for(target).apply(&mut f, &ids, &self.pos)?;
        let z = tape.value(node).clone();
        debug_assert_eq!(z.shape(), &[ids.len(), self.config.d_model]);
        Ok(LatentRepresentation {
            z,
            src_len: ids.len(),
        })
    }

    /// Greedy decoding of a latent with the decoder trained for `sentiment`.
    pub fn decode_greedy(
        &self,
        latent: &LatentRepresentation<T>,
        sentiment: Sentiment,
    ) -> Result<(Vec<String>, DecoderId)> {
        let (dec, start, id) = self.decoder_for(sentiment)?;
        let ids = greedy_from_latent(
            &self.store,
            dec,
            &latent.z,
            &self.pos,
            start,
            self.config.max_len - 1,
        )?;
        Ok((self.vocab.decode(&ids)?, id))
    }

    /// Teacher-forced loss toward `sentiment`-labeled targets, recorded on
    /// the caller's tape (training path: gradients reach the encoder).
    pub fn pair_loss<'t>(
        &'t self,
        tape: &'t mut Tape<T>,
        rng: Option<&'t mut dyn RngCore>,
        src_tokens: &[String],
        tgt_tokens: &[String],
        sentiment: Sentiment,
    ) -> Result<(NodeId, DecoderId)> {
        let src_ids = self.input_ids(src_tokens);
        let mut tgt_ids = self.vocab.encode(tgt_tokens);
        if tgt_ids.len() + 1 > self.config.max_len {
            tgt_ids.truncate(self.config.max_len - 1);
            self.truncations.fetch_add(1, Ordering::Relaxed);
        }
        let (dec, start, id) = self.decoder_for(sentiment)?;
        let enc = self.encoder_for(sentiment);
        let mut f = Fwd {
            tape,
            store: &self.store,
            dropout: self.config.dropout,
            rng,
        };
        let memory = enc.apply(&mut f, &src_ids, &self.pos)?;
        let mut dec_in = Vec::with_capacity(tgt_ids.len() + 1);
        dec_in.push(start);
        dec_in.extend_from_slice(&tgt_ids);
        let logits = dec.apply(&mut f, &dec_in, memory, &self.pos)?;
        let mut targets = tgt_ids;
        targets.push(EOS_ID);
        let loss = f.tape.cross_entropy(logits, &targets, PAD_ID)?;
        Ok((loss, id))
    }

    /// Sentiment transfer: translate into the intermediate language,
    /// optionally noise, encode, and decode with the decoder trained for the
    /// opposite sentiment. Deterministic in eval mode (no inference noise).
    pub fn transfer(
        &self,
        translator: &dyn Translator,
        tokens: &[String],
        source: Sentiment,
        noise: Option<&InferenceNoise<'_>>,
    ) -> Result<Vec<String>> {
        self.transfer_traced(translator, tokens, source, noise)
            .map(|(out, _)| out)
    }

    /// Like [`TransferModel::transfer`], also reporting which decoder ran.
    pub fn transfer_traced(
        &self,
        translator: &dyn Translator,
        tokens: &[String],
        source: Sentiment,
        noise: Option<&InferenceNoise<'_>>,
    ) -> Result<(Vec<String>, DecoderId)> {
        if source == Sentiment::Unlabeled {
            return Err(Error::Data(
                "transfer requires a pos or neg source sentiment".into(),
            ));
        }
        let target = source.opposite();
        let mut intermediate = translator.translate(tokens)?;
        if let Some(n) = noise {
            let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
            intermediate = apply_noise(&intermediate, n.lexicon, &n.probs, n.mode, &mut rng);
        }
        let latent = self.encode_for(target, &intermediate)?;
        self.decode_greedy(&latent, target)
    }

    /// Copies encoder weights from a pretraining model into every encoder of
    /// this model, matching parameters by their `enc.`-suffixed names.
    pub fn install_encoder(&mut self, src: &ParamStore<T>) -> Result<()> {
        let prefixes: &[&str] = match self.topology {
            Topology::TwoSep { .. } => &["pos.enc.", "neg.enc."],
            _ => &["enc."],
        };
        let mut installed = 0usize;
        let entries: Vec<(String, Tensor<T>)> = src
            .iter()
            .filter(|(_, name, _)| name.starts_with("enc."))
            .map(|(_, name, t)| (name.to_string(), t.clone()))
            .collect();
        for (name, tensor) in &entries {
            let suffix = &name["enc.".len()..];
            for prefix in prefixes {
                let target_name = format!("{prefix}{suffix}");
                if let Some(id) = self.store.id_by_name(&target_name) {
                    let dst = self.store.get_mut(id);
                    if dst.shape() != tensor.shape() {
                        return Err(Error::Checkpoint(format!(
                            "encoder parameter {target_name} has shape {:?}, expected {:?}",
                            tensor.shape(),
                            dst.shape()
                        )));
                    }
                    *dst = tensor.clone();
                    installed += 1;
                }
            }
        }
        if installed == 0 {
            return Err(Error::Checkpoint(
                "no encoder parameters found to install".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translate::{BilingualDict, CipherTranslator};

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn toy(variant: Variant) -> TransferModel<f32> {
        let vocab = Vocab::build(["alpha", "beta", "gamma", "delta", "epsilon"]);
        let config = ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 16,
            d_ff: 32,
            vocab_size: vocab.len(),
            max_len: 12,
            variant,
            dropout: 0.0,
        };
        TransferModel::new(config, vocab, 7).unwrap()
    }

    #[test]
    fn latent_has_token_by_dmodel_shape() {
        let model = toy(Variant::SharedEncTwoDec);
        let z = model.encode(&toks(&["alpha", "beta", "gamma"])).unwrap();
        assert_eq!(z.z.shape(), &[3, 16]);
        assert_eq!(z.src_len, 3);
    }

    #[test]
    fn encoding_is_deterministic_in_eval_mode() {
        let model = toy(Variant::SharedEncTwoDec);
        let a = model.encode(&toks(&["alpha", "beta"])).unwrap();
        let b = model.encode(&toks(&["alpha", "beta"])).unwrap();
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn permuting_tokens_changes_the_latent() {
        let model = toy(Variant::SharedEncTwoDec);
        let ab = model.encode(&toks(&["alpha", "beta"])).unwrap();
        let ba = model.encode(&toks(&["beta", "alpha"])).unwrap();
        // Even permuted rows differ thanks to the positional encoding.
        assert_ne!(ab.z.data()[..16], ba.z.data()[16..32]);
    }

    #[test]
    fn transfer_routes_to_the_opposite_decoder() {
        let model = toy(Variant::SharedEncTwoDec);
        let translator = CipherTranslator::new(BilingualDict::default());
        let (_, id) = model
            .transfer_traced(&translator, &toks(&["alpha", "beta"]), Sentiment::Pos, None)
            .unwrap();
        assert_eq!(id, DecoderId::Neg);
        let (_, id) = model
            .transfer_traced(&translator, &toks(&["alpha", "beta"]), Sentiment::Neg, None)
            .unwrap();
        assert_eq!(id, DecoderId::Pos);
    }

    #[test]
    fn transfer_is_deterministic_without_inference_noise() {
        let model = toy(Variant::Denoised);
        let translator = CipherTranslator::new(BilingualDict::default());
        let a = model
            .transfer(&translator, &toks(&["alpha", "beta"]), Sentiment::Pos, None)
            .unwrap();
        let b = model
            .transfer(&translator, &toks(&["alpha", "beta"]), Sentiment::Pos, None)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unlabeled_sentiment_is_rejected() {
        let model = toy(Variant::SharedEncTwoDec);
        let translator = CipherTranslator::new(BilingualDict::default());
        assert!(model
            .transfer(&translator, &toks(&["alpha"]), Sentiment::Unlabeled, None)
            .is_err());
        let z = model.encode(&toks(&["alpha"])).unwrap();
        assert!(model.decode_greedy(&z, Sentiment::Unlabeled).is_err());
    }

    #[test]
    fn style_tok_uses_sentiment_start_tokens_on_one_decoder() {
        let model = toy(Variant::StyleTok);
        let z = model.encode(&toks(&["alpha", "beta"])).unwrap();
        let (_, id_pos) = model.decode_greedy(&z, Sentiment::Pos).unwrap();
        let (_, id_neg) = model.decode_greedy(&z, Sentiment::Neg).unwrap();
        assert_eq!(id_pos, DecoderId::Shared);
        assert_eq!(id_neg, DecoderId::Shared);
    }

    #[test]
    fn teacher_forced_logits_shape_via_loss() {
        let model = toy(Variant::SharedEncTwoDec);
        let mut tape = Tape::new();
        let (loss, id) = model
            .pair_loss(
                &mut tape,
                None,
                &toks(&["alpha", "beta"]),
                &toks(&["gamma", "delta"]),
                Sentiment::Pos,
            )
            .unwrap();
        assert_eq!(id, DecoderId::Pos);
        assert_eq!(tape.value(loss).numel(), 1);
    }
}
