//! Sentence-level BLEU.
//!
//! Modified n-gram precision for n = 1..4 against a single reference, with:
//! - orders longer than the hypothesis excluded from the geometric mean
//!   (weights renormalized over the included orders, so `bleu(x, x) == 100`
//!   for any non-empty `x`);
//! - an add-epsilon numerator floor (0.1) for zero-count orders with n ≥ 2;
//! - a zero unigram count short-circuits to 0;
//! - brevity penalty `exp(1 - r/c)` when the hypothesis is shorter than the
//!   reference.
//!
//! The result is scaled by 100. An empty hypothesis scores 0.

use std::collections::HashMap;

const MAX_N: usize = 4;
const EPSILON: f64 = 0.1;

pub fn bleu(hypothesis: &[String], reference: &[String]) -> f64 {
    assert!(!reference.is_empty(), "reference must be non-empty");
    if hypothesis.is_empty() {
        return 0.0;
    }
    let c = hypothesis.len() as f64;
    let r = reference.len() as f64;

    let mut log_sum = 0.0;
    let mut included = 0usize;
    for n in 1..=MAX_N {
        if hypothesis.len() < n {
            break; // no n-grams of this order
        }
        let total = (hypothesis.len() - n + 1) as f64;
        let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
        for gram in reference.windows(n) {
            *ref_counts.entry(gram).or_insert(0) += 1;
        }
        let mut hyp_counts: HashMap<&[String], usize> = HashMap::new();
        for gram in hypothesis.windows(n) {
            *hyp_counts.entry(gram).or_insert(0) += 1;
        }
        let mut clipped = 0usize;
        for (gram, count) in &hyp_counts {
            clipped += (*count).min(ref_counts.get(gram).copied().unwrap_or(0));
        }
        let numerator = if clipped == 0 {
            if n == 1 {
                return 0.0;
            }
            EPSILON
        } else {
            clipped as f64
        };
        log_sum += (numerator / total).ln();
        included += 1;
    }

    let geo_mean = (log_sum / included as f64).exp();
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    100.0 * bp * geo_mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn identical_sentences_score_100() {
        for words in [
            vec!["one"],
            vec!["two", "words"],
            vec!["the", "quick", "brown", "fox", "jumps"],
        ] {
            let s = toks(&words);
            assert!((bleu(&s, &s) - 100.0).abs() < 1e-9, "{words:?}");
        }
    }

    #[test]
    fn disjoint_vocabulary_scores_zero() {
        let h = toks(&["aa", "bb", "cc", "dd"]);
        let r = toks(&["xx", "yy", "zz", "ww"]);
        assert_eq!(bleu(&h, &r), 0.0);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        assert_eq!(bleu(&[], &toks(&["ref"])), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn self_bleu_is_always_100(words in proptest::collection::vec("[a-c]{1,2}", 1..10)) {
            let s: Vec<String> = words;
            prop_assert!((bleu(&s, &s) - 100.0).abs() < 1e-9);
        }

        #[test]
        fn bleu_is_within_range(
            h in proptest::collection::vec("[a-c]{1,2}", 0..8),
            r in proptest::collection::vec("[a-c]{1,2}", 1..8),
        ) {
            let v = bleu(&h, &r);
            prop_assert!((0.0..=100.0 + 1e-9).contains(&v));
        }
    }
}
