use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::{Corpus, Sentence, Sentiment, Split};
use super::tokenize;
use crate::error::{Error, Result};
use crate::lexicon::PolarityLexicon;

/// Generates a templated sentiment corpus: `n` sentences per sentiment,
/// each from a uniformly chosen template with its `{pivot}` slot filled by
/// a uniformly chosen lexicon word of the target label. Deterministic per
/// seed; the sentence label always matches the inserted pivot's label.
pub fn make_synthetic_corpus(
    templates: &[String],
    lexicon: &PolarityLexicon,
    n: usize,
    seed: u64,
    split: Split,
) -> Result<Corpus> {
    if templates.is_empty() {
        return Err(Error::Data("no templates given".into()));
    }
    if let Some(bad) = templates.iter().find(|t| !t.contains("{pivot}")) {
        return Err(Error::Data(format!(
            "template {bad:?} is missing the {{pivot}} slot"
        )));
    }
    let pos_pivots = lexicon.tokens_of(Sentiment::Pos);
    let neg_pivots = lexicon.tokens_of(Sentiment::Neg);
    if pos_pivots.is_empty() || neg_pivots.is_empty() {
        return Err(Error::Data(
            "lexicon must contain entries for both labels".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(2 * n);
    for _ in 0..n {
        for (label, pivots) in [
            (Sentiment::Pos, &pos_pivots),
            (Sentiment::Neg, &neg_pivots),
        ] {
            let template = templates.choose(&mut rng).expect("non-empty");
            let pivot = pivots.choose(&mut rng).expect("non-empty");
            let text = template.replace("{pivot}", pivot);
            sentences.push(Sentence::new(tokenize(&text), label)?);
        }
    }
    Ok(Corpus::new(sentences, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_lexicon() -> PolarityLexicon {
        let mut lex = PolarityLexicon::new("en");
        lex.insert("great", 3.1).unwrap();
        lex.insert("lovely", 2.7).unwrap();
        lex.insert("awful", -2.9).unwrap();
        lex.insert("boring", -1.6).unwrap();
        lex
    }

    #[test]
    fn pivot_label_sets_the_sentence_label() {
        let templates = vec!["the {pivot} movie".to_string()];
        let corpus =
            make_synthetic_corpus(&templates, &fixture_lexicon(), 20, 7, Split::Train).unwrap();
        let lex = fixture_lexicon();
        for s in corpus.iter() {
            let pivot_label = s
                .tokens
                .iter()
                .find_map(|t| lex.is_pivot(t))
                .expect("every sentence carries its pivot");
            assert_eq!(pivot_label, s.sentiment);
        }
        // e.g. "the great movie" really comes out of the template
        assert!(corpus
            .iter()
            .any(|s| s.text() == "the great movie" && s.sentiment == Sentiment::Pos));
    }

    #[test]
    fn same_seed_reproduces_the_corpus() {
        let templates = vec![
            "the {pivot} movie".to_string(),
            "what a {pivot} day .".to_string(),
        ];
        let lex = fixture_lexicon();
        let a = make_synthetic_corpus(&templates, &lex, 50, 3, Split::Train).unwrap();
        let b = make_synthetic_corpus(&templates, &lex, 50, 3, Split::Train).unwrap();
        assert_eq!(a, b);
        let c = make_synthetic_corpus(&templates, &lex, 50, 4, Split::Train).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn label_distribution_is_exactly_n_and_n() {
        let templates = vec!["a {pivot} thing".to_string()];
        let corpus =
            make_synthetic_corpus(&templates, &fixture_lexicon(), 33, 1, Split::Train).unwrap();
        let pos = corpus.of_sentiment(Sentiment::Pos).len();
        let neg = corpus.of_sentiment(Sentiment::Neg).len();
        assert_eq!((pos, neg), (33, 33));
    }

    #[test]
    fn template_without_slot_is_rejected() {
        let templates = vec!["no slot here".to_string()];
        assert!(
            make_synthetic_corpus(&templates, &fixture_lexicon(), 1, 1, Split::Train).is_err()
        );
    }
}
