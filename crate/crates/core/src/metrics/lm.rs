//! Default fluency scorer: an additively smoothed trigram language model.

use std::collections::HashMap;

use crate::text::Corpus;

/// Per-sentence total log-probability, ≤ 0; deterministic.
pub trait LanguageModel: Send + Sync {
    fn logprob(&self, tokens: &[String]) -> f64;
}

const BOS: &str = "<bos>";
const UNK: &str = "<unk>";
const ALPHA: f64 = 0.1;

/// Trigram counts with add-0.1 smoothing over the training vocabulary
/// (plus `<unk>` for unseen words).
pub struct TrigramLm {
    trigrams: HashMap<(String, String, String), u64>,
    bigrams: HashMap<(String, String), u64>,
    vocab: usize,
    known: std::collections::HashSet<String>,
}

impl TrigramLm {
    pub fn train(corpus: &Corpus) -> TrigramLm {
        let mut trigrams = HashMap::new();
        let mut bigrams = HashMap::new();
        let mut known = std::collections::HashSet::new();
        for sentence in corpus.iter() {
            let mut ctx = (BOS.to_string(), BOS.to_string());
            for token in &sentence.tokens {
                known.insert(token.clone());
                *bigrams.entry(ctx.clone()).or_insert(0) += 1;
                *trigrams
                    .entry((ctx.0.clone(), ctx.1.clone(), token.clone()))
                    .or_insert(0) += 1;
                ctx = (ctx.1, token.clone());
            }
        }
        let vocab = known.len() + 1; // +1 for <unk>
        TrigramLm {
            trigrams,
            bigrams,
            vocab,
            known,
        }
    }

    fn normalize<'a>(&self, token: &'a str) -> &'a str {
        if self.known.contains(token) {
            token
        } else {
            UNK
        }
    }
}

impl LanguageModel for TrigramLm {
    /// Sum over token positions of ln P(w | two-token context), with `<bos>`
    /// padding. The end-of-sentence event is not scored, so a sentence always
    /// scores strictly below its own proper prefixes.
    fn logprob(&self, tokens: &[String]) -> f64 {
        let mut total = 0.0;
        let mut ctx = (BOS.to_string(), BOS.to_string());
        for token in tokens {
            let w = self.normalize(token);
            let tri = self
                .trigrams
                .get(&(ctx.0.clone(), ctx.1.clone(), w.to_string()))
                .copied()
                .unwrap_or(0) as f64;
            let bi = self.bigrams.get(&ctx).copied().unwrap_or(0) as f64;
            let p = (tri + ALPHA) / (bi + ALPHA * self.vocab as f64);
            total += p.ln();
            ctx = (ctx.1, w.to_string());
        }
        total
    }
}
