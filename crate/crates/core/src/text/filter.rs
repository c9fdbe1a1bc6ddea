use super::corpus::{Corpus, Sentence, Sentiment, Split};
use super::tokenize;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct FilterOptions {
    /// Minimum sentence length in tokens.
    pub min_len: usize,
    /// A token may repeat at most this many times consecutively.
    pub rep_limit: usize,
    /// Minimum absolute classifier score.
    pub polarity_threshold: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            min_len: 5,
            rep_limit: 3,
            polarity_threshold: 0.5,
        }
    }
}

/// Selects high-polarity, well-formed sentences from raw text scored by a
/// polarity classifier (score in [-1, 1]).
///
/// A sentence is kept iff it has at least `min_len` tokens, no token repeats
/// more than `rep_limit` times consecutively, no token makes up more than
/// half of a sentence of length ≥ 6, and |score| ≥ `polarity_threshold`.
/// The sentiment label of a kept sentence is the sign of its score.
pub fn filter_dataset(
    scored: &[(String, f64)],
    opts: &FilterOptions,
    split: Split,
) -> Result<Corpus> {
    let mut kept = Vec::new();
    for (text, score) in scored {
        let tokens = tokenize(text);
        if tokens.len() < opts.min_len {
            continue;
        }
        if is_repetitive(&tokens, opts.rep_limit) {
            continue;
        }
        if score.abs() < opts.polarity_threshold || *score == 0.0 {
            continue;
        }
        let sentiment = if *score > 0.0 {
            Sentiment::Pos
        } else {
            Sentiment::Neg
        };
        kept.push(Sentence::new(tokens, sentiment)?);
    }
    Ok(Corpus::new(kept, split))
}

fn is_repetitive(tokens: &[String], rep_limit: usize) -> bool {
    let mut run = 1usize;
    for pair in tokens.windows(2) {
        if pair[0] == pair[1] {
            run += 1;
            if run > rep_limit {
                return true;
            }
        } else {
            run = 1;
        }
    }
    if tokens.len() >= 6 {
        let mut counts = std::collections::HashMap::new();
        for t in tokens {
            *counts.entry(t.as_str()).or_insert(0usize) += 1;
        }
        let max = counts.values().copied().max().unwrap_or(0);
        if max * 2 > tokens.len() {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(items: &[(&str, f64)]) -> Corpus {
        let scored: Vec<(String, f64)> =
            items.iter().map(|(t, s)| (t.to_string(), *s)).collect();
        filter_dataset(&scored, &FilterOptions::default(), Split::Train).unwrap()
    }

    #[test]
    fn rejects_the_repetition_example() {
        let out = run(&[("no no no no thanks thanks.", -0.9)]);
        assert!(out.is_empty());
    }

    #[test]
    fn rejects_short_sentences() {
        let out = run(&[("too short by far", 0.9)]); // 4 tokens
        assert!(out.is_empty());
        let out = run(&[("exactly five tokens right here", 0.9)]); // 5 tokens
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn rejects_weak_polarity() {
        let out = run(&[("a mostly neutral sentence about tables .", 0.05)]);
        assert!(out.is_empty());
    }

    #[test]
    fn label_follows_score_sign() {
        let out = run(&[
            ("what a wonderful little camera this is .", 0.92),
            ("what a dreadful little camera this is .", -0.88),
        ]);
        assert_eq!(out.len(), 2);
        assert_eq!(out.sentences[0].sentiment, Sentiment::Pos);
        assert_eq!(out.sentences[1].sentiment, Sentiment::Neg);
    }

    #[test]
    fn majority_token_rule_applies_from_length_six() {
        // "ha" is 4 of 7 tokens: > 50% of a sentence of length >= 6.
        let out = run(&[("ha ha this ha works ha poorly", -0.9)]);
        assert!(out.is_empty());
    }

    #[test]
    fn every_survivor_has_at_least_min_len_tokens() {
        let mixed: Vec<(String, f64)> = (1..12)
            .map(|n| {
                let words = vec!["w"; n].join(" x ");
                (words, 0.8)
            })
            .collect();
        let out = filter_dataset(&mixed, &FilterOptions::default(), Split::Train).unwrap();
        assert!(out.iter().all(|s| s.len() >= 5));
    }
}
