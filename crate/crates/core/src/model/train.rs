//! Encoder pretraining and sentiment finetuning loops.
//!
//! Both phases train on (noised intermediate, clean base) pairs. Pretraining
//! uses a temporary decoder that is discarded afterwards; only the encoder
//! weights are carried over. Finetuning alternates positive and negative
//! batches so both decoders advance together.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::seq2seq::Seq2Seq;
use super::transfer::{DecoderId, TransferModel};
use crate::autodiff::{adam_step, AdamParams, AdamState, Scalar, Tape};
use crate::error::{Error, Result};
use crate::lexicon::PolarityLexicon;
use crate::noising::{make_denoising_pairs, DenoisingPair, NoiseMode, PhaseProbs};
use crate::text::{Corpus, Sentence, Sentiment, Split};
use crate::translate::Translator;

#[derive(Debug, Clone)]
pub struct TrainParams {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            steps: 0,
            batch_size: 16,
            adam: AdamParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PretrainReport {
    /// Per-step mean batch loss.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct FinetuneReport {
    pub losses_pos: Vec<f64>,
    pub losses_neg: Vec<f64>,
    /// One entry per batch: which decoder was trained, on which label.
    pub routing: Vec<(DecoderId, Sentiment)>,
}

impl FinetuneReport {
    /// Batches where a decoder saw targets of the other sentiment.
    pub fn cross_routed_batches(&self) -> usize {
        self.routing
            .iter()
            .filter(|(dec, label)| {
                !matches!(
                    (dec, label),
                    (DecoderId::Pos, Sentiment::Pos)
                        | (DecoderId::Neg, Sentiment::Neg)
                        | (DecoderId::Shared, _)
                )
            })
            .count()
    }
}

/// Translates every sentence of a corpus, preserving labels and order.
pub fn translate_corpus(translator: &dyn Translator, corpus: &Corpus) -> Result<Corpus> {
    let sentences = corpus
        .iter()
        .map(|s| {
            let tokens = translator.translate(&s.tokens)?;
            Sentence::new(tokens, s.sentiment)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(sentences, corpus.split))
}

/// Shuffled, re-noised-per-epoch stream of denoising pairs.
struct PairStream<'a> {
    intermediate: &'a Corpus,
    clean: &'a Corpus,
    lexicon: &'a PolarityLexicon,
    probs: PhaseProbs,
    mode: NoiseMode,
    seed: u64,
    epoch: u64,
    pairs: Vec<DenoisingPair>,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> PairStream<'a> {
    fn new(
        intermediate: &'a Corpus,
        clean: &'a Corpus,
        lexicon: &'a PolarityLexicon,
        probs: PhaseProbs,
        mode: NoiseMode,
        seed: u64,
    ) -> Result<Self> {
        let mut stream = PairStream {
            intermediate,
            clean,
            lexicon,
            probs,
            mode,
            seed,
            epoch: 0,
            pairs: Vec::new(),
            order: Vec::new(),
            cursor: 0,
        };
        stream.next_epoch()?;
        Ok(stream)
    }

    fn next_epoch(&mut self) -> Result<()> {
        self.pairs = make_denoising_pairs(
            self.intermediate,
            self.clean,
            self.lexicon,
            &self.probs,
            self.mode,
            self.seed.wrapping_add(self.epoch),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (self.epoch << 17));
        self.order = (0..self.pairs.len()).collect();
        self.order.shuffle(&mut rng);
        self.cursor = 0;
        self.epoch += 1;
        Ok(())
    }

    fn next_batch(&mut self, n: usize) -> Result<Vec<DenoisingPair>> {
        let mut batch = Vec::with_capacity(n);
        while batch.len() < n {
            if self.cursor >= self.order.len() {
                self.next_epoch()?;
            }
            batch.push(self.pairs[self.order[self.cursor]].clone());
            self.cursor += 1;
        }
        Ok(batch)
    }
}

fn check_loss<T: Scalar>(loss: T, step: usize, poisoned: Option<&str>) -> Result<f64> {
    if let Some(op) = poisoned {
        return Err(Error::NonFinite {
            what: format!("forward output of {op}"),
            step: step as u64,
        });
    }
    let v = loss.as_f64();
    if !v.is_finite() {
        return Err(Error::NonFinite {
            what: "batch loss".into(),
            step: step as u64,
        });
    }
    Ok(v)
}

fn with_step(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::NonFinite { what, .. } => Error::NonFinite {
            what,
            step: step as u64,
        },
        other => other,
    }
}

/// Pretrains the encoder for denoised back-translation on general-domain
/// data: a temporary single-decoder model is trained to reconstruct the
/// clean base sentence from the noised intermediate one, then its encoder
/// weights are installed into `model` (every encoder copy for two_sep).
pub fn pretrain<T: Scalar>(
    model: &mut TransferModel<T>,
    translator: &dyn Translator,
    lexicon_int: &PolarityLexicon,
    general: &Corpus,
    probs: &PhaseProbs,
    mode: NoiseMode,
    params: &TrainParams,
) -> Result<PretrainReport> {
    if params.steps == 0 {
        return Ok(PretrainReport::default());
    }
    if general.is_empty() {
        return Err(Error::Data("pretraining corpus is empty".into()));
    }
    let intermediate = translate_corpus(translator, general)?;
    let mut scratch = Seq2Seq::<T>::new(
        scratch_config(model.config()),
        model.vocab().clone(),
        params.seed.wrapping_add(101),
    )?;
    // Continue from the transfer model's current encoder weights.
    install_into_seq2seq(&mut scratch, model)?;

    let mut stream = PairStream::new(
        &intermediate,
        general,
        lexicon_int,
        *probs,
        mode,
        params.seed,
    )?;
    let mut state = AdamState::for_store(scratch.store());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(7));
    let mut report = PretrainReport::default();

    for step in 0..params.steps {
        let batch = stream.next_batch(params.batch_size)?;
        let mut tape = Tape::new();
        let mut losses = Vec::with_capacity(batch.len());
        for (noised, clean) in &batch {
            let rng: Option<&mut dyn rand::RngCore> = if scratch.config().dropout > 0.0 {
                Some(&mut dropout_rng)
            } else {
                None
            };
            let loss = scratch
                .pair_loss(&mut tape, rng, noised, clean)
                .map_err(with_step(step))?;
            losses.push(loss);
        }
        let total = tape.add_n(&losses)?;
        let loss = tape.scale(total, T::from_f64(1.0 / batch.len() as f64));
        let loss_value = check_loss(tape.value(loss).item(), step, tape.poisoned())?;
        report.losses.push(loss_value);
        let grads = tape.backward(loss).map_err(with_step(step))?.to_vec();
        adam_step(scratch.store_mut(), &grads, &mut state, &params.adam)?;
    }

    model.install_encoder(scratch.store())?;
    Ok(report)
}

/// The pretraining scratch model keeps the transfer model's shape but is a
/// plain encoder/decoder pair.
fn scratch_config(cfg: &ModelConfig) -> ModelConfig {
    ModelConfig { ..*cfg }
}

/// Seeds the scratch model's encoder from the transfer model (inverse
/// direction of [`TransferModel::install_encoder`]).
fn install_into_seq2seq<T: Scalar>(
    scratch: &mut Seq2Seq<T>,
    model: &TransferModel<T>,
) -> Result<()> {
    // Names in the transfer model are either `enc.*` or `pos.enc.*`.
    let src: Vec<(String, _)> = model
        .store()
        .iter()
        .filter_map(|(_, name, t)| {
            name.strip_prefix("pos.enc.")
                .or_else(|| name.strip_prefix("enc.").filter(|_| !name.starts_with("pos.")))
                .map(|suffix| (format!("enc.{suffix}"), t.clone()))
        })
        .collect();
    for (name, tensor) in src {
        let id = scratch.store().id_by_name(&name).ok_or_else(|| {
            Error::Checkpoint(format!("scratch model is missing parameter {name}"))
        })?;
        *scratch.store_mut().get_mut(id) = tensor;
    }
    Ok(())
}

/// Finetunes the sentiment decoders (and encoder) on labeled data with the
/// finetuning noise, alternating positive and negative batches. Each decoder
/// only ever receives targets of its own sentiment.
pub fn finetune<T: Scalar>(
    model: &mut TransferModel<T>,
    translator: &dyn Translator,
    lexicon_int: &PolarityLexicon,
    pos: &Corpus,
    neg: &Corpus,
    probs: &PhaseProbs,
    mode: NoiseMode,
    params: &TrainParams,
) -> Result<FinetuneReport> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Data(
            "finetuning requires non-empty corpora for both sentiments".into(),
        ));
    }
    let pos_int = translate_corpus(translator, pos)?;
    let neg_int = translate_corpus(translator, neg)?;
    let mut pos_stream = PairStream::new(&pos_int, pos, lexicon_int, *probs, mode, params.seed)?;
    let mut neg_stream = PairStream::new(
        &neg_int,
        neg,
        lexicon_int,
        *probs,
        mode,
        params.seed.wrapping_add(1),
    )?;

    let mut state = AdamState::for_store(model.store());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(13));
    let mut report = FinetuneReport::default();

    for step in 0..params.steps {
        let sentiment = if step % 2 == 0 {
            Sentiment::Pos
        } else {
            Sentiment::Neg
        };
        let stream = match sentiment {
            Sentiment::Pos => &mut pos_stream,
            _ => &mut neg_stream,
        };
        let batch = stream.next_batch(params.batch_size)?;
        let mut tape = Tape::new();
        let mut losses = Vec::with_capacity(batch.len());
        let mut batch_route = None;
        for (noised, clean) in &batch {
            let rng: Option<&mut dyn rand::RngCore> = if model.config().dropout > 0.0 {
                Some(&mut dropout_rng)
            } else {
                None
            };
            let (loss, route) = model
                .pair_loss(&mut tape, rng, noised, clean, sentiment)
                .map_err(with_step(step))?;
            losses.push(loss);
            batch_route = Some(route);
        }
        let total = tape.add_n(&losses)?;
        let loss = tape.scale(total, T::from_f64(1.0 / batch.len() as f64));
        let loss_value = check_loss(tape.value(loss).item(), step, tape.poisoned())?;
        match sentiment {
            Sentiment::Pos => report.losses_pos.push(loss_value),
            _ => report.losses_neg.push(loss_value),
        }
        report
            .routing
            .push((batch_route.expect("non-empty batch"), sentiment));
        let grads = tape.backward(loss).map_err(with_step(step))?.to_vec();
        adam_step(model.store_mut(), &grads, &mut state, &params.adam)?;
    }
    Ok(report)
}

/// Transfers every sentence of a labeled corpus to the opposite sentiment.
pub fn transfer_corpus<T: Scalar>(
    model: &TransferModel<T>,
    translator: &dyn Translator,
    corpus: &Corpus,
    noise: Option<&super::transfer::InferenceNoise<'_>>,
) -> Result<Corpus> {
    let sentences = corpus
        .iter()
        .map(|s| {
            let out = model.transfer(translator, &s.tokens, s.sentiment, noise)?;
            let tokens = if out.is_empty() {
                vec!["<unk>".to_string()]
            } else {
                out
            };
            Sentence::new(tokens, s.sentiment.opposite())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(sentences, Split::Test))
}

/// Splits a corpus into train/valid/test with exact-string disjointness:
/// any train sentence whose text also appears in valid or test is dropped.
pub fn split_corpus(
    corpus: &Corpus,
    n_valid: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    if n_valid + n_test > corpus.len() {
        return Err(Error::Data(format!(
            "cannot reserve {} sentences from a corpus of {}",
            n_valid + n_test,
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let take = |idx: &[usize]| -> Vec<Sentence> {
        idx.iter().map(|&i| corpus.sentences[i].clone()).collect()
    };
    let test = Corpus::new(take(&order[..n_test]), Split::Test);
    let valid = Corpus::new(take(&order[n_test..n_test + n_valid]), Split::Valid);
    let held: std::collections::HashSet<String> = test
        .string_set()
        .into_iter()
        .chain(valid.string_set())
        .collect();
    let train_sentences = order[n_test + n_valid..]
        .iter()
        .map(|&i| corpus.sentences[i].clone())
        .filter(|s| !held.contains(&s.text()))
        .collect();
    Ok((Corpus::new(train_sentences, Split::Train), valid, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::text::{tokenize, Vocab};
    use crate::translate::{BilingualDict, CipherTranslator};

    fn tiny_corpus(lines: &[(&str, Sentiment)]) -> Corpus {
        Corpus::new(
            lines
                .iter()
                .map(|(text, s)| Sentence::new(tokenize(text), *s).unwrap())
                .collect(),
            Split::Train,
        )
    }

    fn setup() -> (TransferModel<f32>, CipherTranslator, PolarityLexicon, Corpus) {
        let corpus = tiny_corpus(&[
            ("the great movie was fun", Sentiment::Pos),
            ("a lovely day for all", Sentiment::Pos),
            ("the awful movie was long", Sentiment::Neg),
            ("a boring day for all", Sentiment::Neg),
        ]);
        let translator = CipherTranslator::new(BilingualDict::default());
        let mut lex_en = PolarityLexicon::new("en");
        for (t, s) in [("great", 3.1), ("lovely", 2.4), ("awful", -2.9), ("boring", -1.6)] {
            lex_en.insert(t, s).unwrap();
        }
        let (lex_int, _) =
            crate::lexicon::project_lexicon(&lex_en, &translator, "xx").unwrap();
        let intermediate = translate_corpus(&translator, &corpus).unwrap();
        let mut tokens: Vec<String> = Vec::new();
        for s in corpus.iter().chain(intermediate.iter()) {
            tokens.extend(s.tokens.iter().cloned());
        }
        let vocab = Vocab::build(tokens.iter().map(String::as_str));
        let config = ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 16,
            d_ff: 32,
            vocab_size: vocab.len(),
            max_len: 16,
            variant: Variant::Denoised,
            dropout: 0.0,
        };
        let model = TransferModel::new(config, vocab, 3).unwrap();
        (model, translator, lex_int, corpus)
    }

    #[test]
    fn zero_steps_leaves_the_model_unchanged() {
        let (mut model, translator, lex, corpus) = setup();
        let before = model.store().f32_fingerprint();
        let report = pretrain(
            &mut model,
            &translator,
            &lex,
            &corpus,
            &PhaseProbs::ZERO,
            NoiseMode::Mask,
            &TrainParams::default(),
        )
        .unwrap();
        assert!(report.losses.is_empty());
        assert_eq!(model.store().f32_fingerprint(), before);
    }

    #[test]
    fn pretraining_updates_encoder_weights_deterministically() {
        let run = || {
            let (mut model, translator, lex, corpus) = setup();
            let params = TrainParams {
                steps: 4,
                batch_size: 2,
                seed: 11,
                ..TrainParams::default()
            };
            let report = pretrain(
                &mut model,
                &translator,
                &lex,
                &corpus,
                &PhaseProbs { p_general: 0.3, p_polarity: 0.0 },
                NoiseMode::Mask,
                &params,
            )
            .unwrap();
            (model.store().f32_fingerprint(), report.losses)
        };
        let (fp_a, losses_a) = run();
        let (fp_b, losses_b) = run();
        assert_eq!(fp_a, fp_b);
        assert_eq!(losses_a, losses_b);
        assert_eq!(losses_a.len(), 4);
    }

    #[test]
    fn zero_noise_pretrain_matches_plain_pretraining_losses() {
        // The pretrained-encoder baseline is the denoised path with an
        // all-zero spec: identical loss sequence under the same seed.
        let losses = |probs: PhaseProbs| {
            let (mut model, translator, lex, corpus) = setup();
            let params = TrainParams {
                steps: 3,
                batch_size: 2,
                seed: 5,
                ..TrainParams::default()
            };
            pretrain(
                &mut model,
                &translator,
                &lex,
                &corpus,
                &probs,
                NoiseMode::Delete,
                &params,
            )
            .unwrap()
            .losses
        };
        assert_eq!(losses(PhaseProbs::ZERO), losses(PhaseProbs::ZERO));
    }

    #[test]
    fn finetune_never_cross_routes_targets() {
        let (mut model, translator, lex, corpus) = setup();
        let pos = corpus.of_sentiment(Sentiment::Pos);
        let neg = corpus.of_sentiment(Sentiment::Neg);
        let params = TrainParams {
            steps: 6,
            batch_size: 2,
            seed: 2,
            ..TrainParams::default()
        };
        let report = finetune(
            &mut model,
            &translator,
            &lex,
            &pos,
            &neg,
            &PhaseProbs { p_general: 0.2, p_polarity: 0.5 },
            NoiseMode::Mask,
            &params,
        )
        .unwrap();
        assert_eq!(report.routing.len(), 6);
        assert_eq!(report.cross_routed_batches(), 0);
        assert_eq!(report.losses_pos.len(), 3);
        assert_eq!(report.losses_neg.len(), 3);
    }

    #[test]
    fn finetune_requires_both_sentiments() {
        let (mut model, translator, lex, corpus) = setup();
        let pos = corpus.of_sentiment(Sentiment::Pos);
        let empty = Corpus::new(Vec::new(), Split::Train);
        let err = finetune(
            &mut model,
            &translator,
            &lex,
            &pos,
            &empty,
            &PhaseProbs::ZERO,
            NoiseMode::Mask,
            &TrainParams { steps: 1, ..TrainParams::default() },
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-empty"), "{err}");
    }

    #[test]
    fn two_sep_batches_touch_only_their_own_pair() {
        let (_, translator, lex, corpus) = setup();
        let vocab_tokens: Vec<String> = corpus
            .iter()
            .chain(translate_corpus(&translator, &corpus).unwrap().iter())
            .flat_map(|s| s.tokens.clone())
            .collect();
        let vocab = Vocab::build(vocab_tokens.iter().map(String::as_str));
        let config = ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 16,
            d_ff: 32,
            vocab_size: vocab.len(),
            max_len: 16,
            variant: Variant::TwoSep,
            dropout: 0.0,
        };
        let mut model = TransferModel::<f32>::new(config, vocab, 9).unwrap();
        let neg_before: Vec<u32> = model
            .store()
            .iter()
            .filter(|(_, name, _)| name.starts_with("neg."))
            .flat_map(|(_, _, t)| t.f32_bits())
            .collect();
        // One positive batch only (step parity 0): the negative pair of
        // parameters must remain bit-identical.
        let params = TrainParams {
            steps: 1,
            batch_size: 2,
            seed: 4,
            ..TrainParams::default()
        };
        finetune(
            &mut model,
            &translator,
            &lex,
            &corpus.of_sentiment(Sentiment::Pos),
            &corpus.of_sentiment(Sentiment::Neg),
            &PhaseProbs::ZERO,
            NoiseMode::Mask,
            &params,
        )
        .unwrap();
        let neg_after: Vec<u32> = model
            .store()
            .iter()
            .filter(|(_, name, _)| name.starts_with("neg."))
            .flat_map(|(_, _, t)| t.f32_bits())
            .collect();
        assert_eq!(neg_before, neg_after);
    }

    #[test]
    fn nan_poisoning_aborts_with_step_diagnostics() {
        let (mut model, translator, lex, corpus) = setup();
        // Poison one parameter so the very first forward pass goes non-finite.
        let id = model.store().id_by_name("enc.embed").unwrap();
        model.store_mut().get_mut(id).data_mut()[0] = f32::NAN;
        let err = pretrain(
            &mut model,
            &translator,
            &lex,
            &corpus,
            &PhaseProbs::ZERO,
            NoiseMode::Mask,
            &TrainParams { steps: 1, ..TrainParams::default() },
        )
        .unwrap_err();
        match err {
            Error::NonFinite { what, step } => {
                assert_eq!(step, 0);
                assert!(!what.is_empty());
            }
            other => panic!("expected NonFinite, got {other}"),
        }
    }

    #[test]
    fn split_corpus_is_disjoint_by_string() {
        let mut lines = Vec::new();
        for i in 0..30 {
            lines.push((format!("sentence number {i} here"), Sentiment::Pos));
        }
        // duplicates that must not straddle the split
        lines.push(("sentence number 0 here".to_string(), Sentiment::Pos));
        let corpus = Corpus::new(
            lines
                .iter()
                .map(|(t, s)| Sentence::new(tokenize(t), *s).unwrap())
                .collect(),
            Split::Train,
        );
        let (train, valid, test) = split_corpus(&corpus, 5, 5, 1).unwrap();
        assert_eq!(valid.len(), 5);
        assert_eq!(test.len(), 5);
        assert!(train.is_disjoint_from(&valid));
        assert!(train.is_disjoint_from(&test));
    }
}
