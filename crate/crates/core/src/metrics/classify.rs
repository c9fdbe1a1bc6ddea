//! Default polarity classifier: the signed sum of lexicon scores over the
//! sentence, normalized into [-1, 1].

use crate::lexicon::PolarityLexicon;

/// Sentence polarity in [-1, 1]; deterministic.
pub trait Classifier: Send + Sync {
    fn score(&self, tokens: &[String]) -> f64;
}

pub struct LexiconClassifier<'a> {
    lexicon: &'a PolarityLexicon,
}

impl<'a> LexiconClassifier<'a> {
    pub fn new(lexicon: &'a PolarityLexicon) -> Self {
        LexiconClassifier { lexicon }
    }
}

impl Classifier for LexiconClassifier<'_> {
    /// Sum of the scores of lexicon tokens, divided by 4·(number of scored
    /// tokens); sentences without any lexicon token score exactly 0.
    fn score(&self, tokens: &[String]) -> f64 {
        let mut sum = 0.0;
        let mut hits = 0usize;
        for t in tokens {
            if let Some(s) = self.lexicon.score(t) {
                sum += s;
                hits += 1;
            }
        }
        if hits == 0 {
            0.0
        } else {
            sum / (4.0 * hits as f64)
        }
    }
}
