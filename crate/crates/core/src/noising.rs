//! Polarity-aware corruption: delete or mask general and/or polarity words
//! with independent per-class probabilities, plus the compact noise-spec
//! naming scheme used to label model variants.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lexicon::PolarityLexicon;
use crate::text::{Corpus, MASK_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Delete,
    Mask,
}

/// Corruption probabilities for one training phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseProbs {
    pub p_general: f64,
    pub p_polarity: f64,
}

impl PhaseProbs {
    pub const ZERO: PhaseProbs = PhaseProbs {
        p_general: 0.0,
        p_polarity: 0.0,
    };

    pub fn is_zero(&self) -> bool {
        self.p_general == 0.0 && self.p_polarity == 0.0
    }
}

/// Pretraining and finetuning noise probabilities plus the shared mode.
///
/// Named like `WG03P08-AG03P08-M`: the `W` group holds the pretraining
/// probabilities, the `A` group the finetuning ones; `G`/`P` prefix general
/// and polarity probabilities written as decimal fractions without the dot
/// (`03` → 0.3, `1` → 1.0, omitted → 0.0); the suffix picks deletion or
/// masking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub pretrain: PhaseProbs,
    pub finetune: PhaseProbs,
    pub mode: NoiseMode,
}

impl NoiseSpec {
    pub const fn zero(mode: NoiseMode) -> NoiseSpec {
        NoiseSpec {
            pretrain: PhaseProbs::ZERO,
            finetune: PhaseProbs::ZERO,
            mode,
        }
    }
}

/// Parses a noise-spec name of the form `W(G\d+)?(P\d+)?-A(G\d+)?(P\d+)?-[DM]`.
pub fn parse_noise_spec(name: &str) -> Result<NoiseSpec> {
    let err = |pos: usize, msg: &str| Error::NoiseSpec {
        name: name.to_string(),
        pos,
        msg: msg.to_string(),
    };
    let bytes = name.as_bytes();
    let mut pos = 0usize;

    let expect = |c: u8, pos: &mut usize, what: &str| -> Result<()> {
        if bytes.get(*pos) == Some(&c) {
            *pos += 1;
            Ok(())
        } else {
            Err(err(*pos, what))
        }
    };

    fn digits(bytes: &[u8], pos: &mut usize) -> Option<String> {
        let start = *pos;
        while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
            *pos += 1;
        }
        (*pos > start).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    }

    let phase = |pos: &mut usize| -> Result<PhaseProbs> {
        let mut probs = PhaseProbs::ZERO;
        if bytes.get(*pos) == Some(&b'G') {
            *pos += 1;
            let group_at = *pos;
            let d = digits(bytes, pos).ok_or_else(|| err(*pos, "expected digits after G"))?;
            probs.p_general = parse_prob(&d).ok_or_else(|| err(group_at, "probability above 1"))?;
        }
        if bytes.get(*pos) == Some(&b'P') {
            *pos += 1;
            let group_at = *pos;
            let d = digits(bytes, pos).ok_or_else(|| err(*pos, "expected digits after P"))?;
            probs.p_polarity =
                parse_prob(&d).ok_or_else(|| err(group_at, "probability above 1"))?;
        }
        Ok(probs)
    };

    expect(b'W', &mut pos, "expected leading W")?;
    let pretrain = phase(&mut pos)?;
    expect(b'-', &mut pos, "expected - before A")?;
    expect(b'A', &mut pos, "expected A")?;
    let finetune = phase(&mut pos)?;
    expect(b'-', &mut pos, "expected - before mode")?;
    let mode = match bytes.get(pos) {
        Some(b'D') => NoiseMode::Delete,
        Some(b'M') => NoiseMode::Mask,
        _ => return Err(err(pos, "expected mode D or M")),
    };
    pos += 1;
    if pos != bytes.len() {
        return Err(err(pos, "trailing characters"));
    }
    Ok(NoiseSpec {
        pretrain,
        finetune,
        mode,
    })
}

/// `"1"` is 1.0; otherwise the digits are read as the fraction after `0.`,
/// keeping the leading zero convention (`03` → 0.3, `08` → 0.8, `01` → 0.1).
fn parse_prob(digits: &str) -> Option<f64> {
    if digits == "1" {
        return Some(1.0);
    }
    if let Some(rest) = digits.strip_prefix('0') {
        if rest.is_empty() {
            return Some(0.0);
        }
        return format!("0.{rest}").parse().ok();
    }
    None // integer > 1 is out of range for a probability
}

/// Canonical inverse of [`parse_noise_spec`]: zero probabilities are omitted.
pub fn render_noise_spec(spec: &NoiseSpec) -> String {
    let mut out = String::from("W");
    render_phase(&mut out, &spec.pretrain);
    out.push_str("-A");
    render_phase(&mut out, &spec.finetune);
    out.push('-');
    out.push(match spec.mode {
        NoiseMode::Delete => 'D',
        NoiseMode::Mask => 'M',
    });
    out
}

fn render_phase(out: &mut String, probs: &PhaseProbs) {
    for (tag, p) in [('G', probs.p_general), ('P', probs.p_polarity)] {
        if p > 0.0 {
            out.push(tag);
            out.push_str(&render_prob(p));
        }
    }
}

fn render_prob(p: f64) -> String {
    if p == 1.0 {
        return "1".into();
    }
    // "0.3" → "03": drop the dot, keep the leading zero.
    format!("{p}").replacen('.', "", 1)
}

/// Corrupts a token sequence: a pivot token (per the lexicon) is hit with
/// probability `p_polarity`, any other token with `p_general`, each draw
/// independent. Delete removes the token, mask replaces it with `<mask>`.
/// If deletion would consume every token, one uniformly chosen token of the
/// original sentence is retained instead.
pub fn apply_noise<R: Rng>(
    tokens: &[String],
    lexicon: &PolarityLexicon,
    probs: &PhaseProbs,
    mode: NoiseMode,
    rng: &mut R,
) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        let p = if lexicon.is_pivot(token).is_some() {
            probs.p_polarity
        } else {
            probs.p_general
        };
        let corrupt = p > 0.0 && rng.gen::<f64>() < p;
        match (corrupt, mode) {
            (false, _) => out.push(token.clone()),
            (true, NoiseMode::Mask) => out.push(MASK_TOKEN.to_string()),
            (true, NoiseMode::Delete) => {}
        }
    }
    if out.is_empty() && !tokens.is_empty() {
        out.push(tokens.choose(rng).expect("non-empty input").clone());
    }
    out
}

/// One (noised intermediate, clean base) training pair.
pub type DenoisingPair = (Vec<String>, Vec<String>);

/// Builds the denoising pairs for one phase: the intermediate-language side
/// is corrupted, the aligned base-language side stays untouched. The two
/// corpora must have the same number of sentences. Deterministic per seed.
pub fn make_denoising_pairs(
    intermediate: &Corpus,
    clean: &Corpus,
    lexicon: &PolarityLexicon,
    probs: &PhaseProbs,
    mode: NoiseMode,
    seed: u64,
) -> Result<Vec<DenoisingPair>> {
    if intermediate.len() != clean.len() {
        return Err(Error::Data(format!(
            "misaligned corpora: {} intermediate vs {} clean sentences",
            intermediate.len(),
            clean.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(intermediate
        .iter()
        .zip(clean.iter())
        .map(|(noisy_side, clean_side)| {
            let noised = apply_noise(&noisy_side.tokens, lexicon, probs, mode, &mut rng);
            (noised, clean_side.tokens.clone())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{Sentence, Sentiment, Split};
    use proptest::prelude::*;

    fn lex() -> PolarityLexicon {
        let mut lex = PolarityLexicon::new("en");
        lex.insert("great", 3.1).unwrap();
        lex.insert("awful", -2.9).unwrap();
        lex
    }

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn parses_the_caption_examples() {
        let spec = parse_noise_spec("WG03P08-AG03P08-M").unwrap();
        assert_eq!(spec.pretrain, PhaseProbs { p_general: 0.3, p_polarity: 0.8 });
        assert_eq!(spec.finetune, PhaseProbs { p_general: 0.3, p_polarity: 0.8 });
        assert_eq!(spec.mode, NoiseMode::Mask);

        let spec = parse_noise_spec("WG01-AG03-D").unwrap();
        assert_eq!(spec.pretrain, PhaseProbs { p_general: 0.1, p_polarity: 0.0 });
        assert_eq!(spec.finetune, PhaseProbs { p_general: 0.3, p_polarity: 0.0 });
        assert_eq!(spec.mode, NoiseMode::Delete);

        let spec = parse_noise_spec("WP1-AP1-M").unwrap();
        assert_eq!(spec.pretrain, PhaseProbs { p_general: 0.0, p_polarity: 1.0 });
        assert_eq!(spec.finetune, PhaseProbs { p_general: 0.0, p_polarity: 1.0 });
        assert_eq!(spec.mode, NoiseMode::Mask);
    }

    #[test]
    fn malformed_names_report_a_position() {
        for (name, pos) in [
            ("XG03-AG03-D", 0),
            ("WG-AG03-D", 2),
            ("WG03-AG03-Q", 10),
            ("WG03-AG03-D!", 11),
            ("WG5-AG03-D", 2),
        ] {
            match parse_noise_spec(name) {
                Err(Error::NoiseSpec { pos: p, .. }) => assert_eq!(p, pos, "for {name}"),
                other => panic!("expected parse error for {name}, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_probabilities_render_by_omission() {
        let spec = NoiseSpec {
            pretrain: PhaseProbs { p_general: 0.3, p_polarity: 0.0 },
            finetune: PhaseProbs::ZERO,
            mode: NoiseMode::Delete,
        };
        assert_eq!(render_noise_spec(&spec), "WG03-A-D");
        assert_eq!(parse_noise_spec("WG03-A-D").unwrap(), spec);
    }

    #[test]
    fn zero_probability_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tokens = toks(&["the", "great", "movie"]);
        let out = apply_noise(&tokens, &lex(), &PhaseProbs::ZERO, NoiseMode::Delete, &mut rng);
        assert_eq!(out, tokens);
    }

    #[test]
    fn certain_polarity_deletion_removes_exactly_the_pivots() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probs = PhaseProbs { p_general: 0.0, p_polarity: 1.0 };
        let out = apply_noise(
            &toks(&["the", "great", "movie"]),
            &lex(),
            &probs,
            NoiseMode::Delete,
            &mut rng,
        );
        assert_eq!(out, toks(&["the", "movie"]));
    }

    #[test]
    fn full_masking_preserves_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probs = PhaseProbs { p_general: 1.0, p_polarity: 1.0 };
        let tokens = toks(&["the", "great", "movie"]);
        let out = apply_noise(&tokens, &lex(), &probs, NoiseMode::Mask, &mut rng);
        assert_eq!(out, vec![MASK_TOKEN; 3]);
    }

    #[test]
    fn full_deletion_retains_one_token() {
        let probs = PhaseProbs { p_general: 1.0, p_polarity: 1.0 };
        let tokens = toks(&["a", "b", "c"]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = apply_noise(&tokens, &lex(), &probs, NoiseMode::Delete, &mut rng);
            assert_eq!(out.len(), 1);
            assert!(tokens.contains(&out[0]));
        }
    }

    #[test]
    fn corruption_rates_stay_within_three_sigma() {
        // 10,000 Bernoulli draws per class; 3σ = 3·sqrt(p(1-p)/n).
        let lexicon = lex();
        let n = 10_000usize;
        for (p_general, p_polarity) in [(0.3, 0.8), (0.8, 0.3)] {
            for mode in [NoiseMode::Delete, NoiseMode::Mask] {
                let mut rng = ChaCha8Rng::seed_from_u64(7);
                let probs = PhaseProbs { p_general, p_polarity };
                let mut general_hits = 0usize;
                let mut pivot_hits = 0usize;
                // Sentences of 10 tokens: 5 general, 5 pivots.
                for _ in 0..n / 5 {
                    let tokens = toks(&[
                        "the", "great", "movie", "awful", "was", "great", "so", "awful", "very",
                        "great",
                    ]);
                    let out = apply_noise(&tokens, &lexicon, &probs, mode, &mut rng);
                    let count = |pred: &dyn Fn(&String) -> bool| -> usize {
                        out.iter().filter(|t| pred(t)).count()
                    };
                    let surviving_pivots =
                        count(&|t| lexicon.is_pivot(t).is_some());
                    let surviving_general = count(&|t| {
                        lexicon.is_pivot(t).is_none() && t.as_str() != MASK_TOKEN
                    });
                    pivot_hits += 5 - surviving_pivots;
                    general_hits += 5 - surviving_general;
                }
                for (hits, p) in [(general_hits, p_general), (pivot_hits, p_polarity)] {
                    let rate = hits as f64 / n as f64;
                    let sigma = (p * (1.0 - p) / n as f64).sqrt();
                    assert!(
                        (rate - p).abs() <= 3.0 * sigma,
                        "mode {mode:?}: rate {rate} vs p {p}"
                    );
                }
            }
        }
    }

    #[test]
    fn pair_streams_are_deterministic_and_keep_the_clean_side() {
        let inter = Corpus::new(
            vec![
                Sentence::new(toks(&["x", "great", "y"]), Sentiment::Pos).unwrap(),
                Sentence::new(toks(&["x", "awful", "z"]), Sentiment::Neg).unwrap(),
            ],
            Split::Train,
        );
        let clean = Corpus::new(
            vec![
                Sentence::new(toks(&["a", "great", "b"]), Sentiment::Pos).unwrap(),
                Sentence::new(toks(&["a", "awful", "c"]), Sentiment::Neg).unwrap(),
            ],
            Split::Train,
        );
        let probs = PhaseProbs { p_general: 0.5, p_polarity: 0.5 };
        let a = make_denoising_pairs(&inter, &clean, &lex(), &probs, NoiseMode::Delete, 9).unwrap();
        let b = make_denoising_pairs(&inter, &clean, &lex(), &probs, NoiseMode::Delete, 9).unwrap();
        assert_eq!(a, b);
        for ((_, got_clean), want) in a.iter().zip(clean.iter()) {
            assert_eq!(got_clean, &want.tokens);
        }

        let zero = make_denoising_pairs(
            &inter,
            &clean,
            &lex(),
            &PhaseProbs::ZERO,
            NoiseMode::Delete,
            9,
        )
        .unwrap();
        for ((noised, _), src) in zero.iter().zip(inter.iter()) {
            assert_eq!(noised, &src.tokens);
        }

        let short = Corpus::new(clean.sentences[..1].to_vec(), Split::Train);
        assert!(
            make_denoising_pairs(&inter, &short, &lex(), &probs, NoiseMode::Delete, 9).is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn mask_preserves_count_and_delete_never_empties(
            words in proptest::collection::vec("[a-z]{1,6}", 1..12),
            p_general in 0.0f64..=1.0,
            p_polarity in 0.0f64..=1.0,
            seed in 0u64..1000,
        ) {
            let lexicon = lex();
            let tokens: Vec<String> = words;
            let probs = PhaseProbs { p_general, p_polarity };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let masked = apply_noise(&tokens, &lexicon, &probs, NoiseMode::Mask, &mut rng);
            prop_assert_eq!(masked.len(), tokens.len());

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let deleted = apply_noise(&tokens, &lexicon, &probs, NoiseMode::Delete, &mut rng);
            prop_assert!(!deleted.is_empty());
            prop_assert!(deleted.len() <= tokens.len());
        }
    }
}
