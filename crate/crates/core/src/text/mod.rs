//! Tokenization, vocabulary management, corpus I/O, and the dataset
//! construction procedure (length / repetition / polarity filtering).

mod corpus;
mod filter;
mod synthetic;
mod vocab;

pub use corpus::{read_corpus, write_corpus, Corpus, CorpusFormat, Sentence, Sentiment, Split};
pub use filter::{filter_dataset, FilterOptions};
pub use synthetic::make_synthetic_corpus;
pub use vocab::{Vocab, BOS_ID, EOS_ID, MASK_ID, MASK_TOKEN, NEG_ID, PAD_ID, POS_ID, UNK_ID};

/// Lowercases and splits text into tokens: runs of alphanumeric characters
/// are words, every other non-whitespace character is a token of its own.
///
/// The split is deterministic and idempotent on its own space-joined output.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_lowercase().collect());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Splits raw review text into sentences on `.`, `!` or `?` followed by
/// whitespace (or end of input). The terminator stays with its sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().map_or(true, |n| n.is_whitespace());
            if at_boundary {
                let s = current.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                current.clear();
            }
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}
