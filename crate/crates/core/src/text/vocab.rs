use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;
pub const MASK_ID: usize = 4;
pub const POS_ID: usize = 5;
pub const NEG_ID: usize = 6;

pub const MASK_TOKEN: &str = "<mask>";

const RESERVED: [&str; 7] = ["<pad>", "<unk>", "<bos>", "<eos>", "<mask>", "<pos>", "<neg>"];

/// Token ↔ id bijection with fixed reserved ids 0..=6 in the order
/// `<pad> <unk> <bos> <eos> <mask> <pos> <neg>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary over the given tokens. Non-reserved tokens are
    /// deduplicated and sorted, so the result is independent of input order.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut uniq: Vec<&str> = tokens
            .into_iter()
            .filter(|t| !RESERVED.contains(t))
            .collect();
        uniq.sort_unstable();
        uniq.dedup();
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(uniq.into_iter().map(str::to_string));
        Vocab::from_token_list(all).expect("deduplicated list is bijective")
    }

    /// Rebuilds a vocabulary from an id-ordered token list (checkpoint load).
    pub fn from_token_list(tokens: Vec<String>) -> Result<Vocab> {
        for (i, reserved) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*reserved) {
                return Err(Error::Data(format!(
                    "vocabulary must start with the reserved tokens {RESERVED:?}, got {:?}",
                    &tokens[..tokens.len().min(RESERVED.len())]
                )));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    /// Number of non-reserved entries.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - RESERVED.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::TargetOutOfRange {
                id,
                vocab: self.tokens.len(),
            })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&i| self.token(i).map(str::to_string))
            .collect()
    }
}
