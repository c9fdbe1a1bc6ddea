//! Forward translation (base → intermediate language) behind a pluggable
//! interface: a deterministic dictionary+cipher surrogate, and a learned
//! sequence-to-sequence model.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::model::Seq2Seq;

/// Marker prepended to cipher-rotated out-of-vocabulary tokens. It keeps the
/// rotated range disjoint from dictionary values, which makes the combined
/// mapping exactly invertible for arbitrary input.
pub const OOV_MARKER: char = '\u{2581}'; // ▁

/// Word-level translation, deterministic, never empty for non-empty input.
pub trait Translator: Send + Sync {
    fn name(&self) -> &str;
    /// `(base, intermediate)` language tags.
    fn direction(&self) -> (&str, &str);
    fn translate(&self, tokens: &[String]) -> Result<Vec<String>>;
}

/// Base → intermediate token dictionary, bijective on its mapped pairs.
/// Keys are matched case-insensitively.
#[derive(Debug, Default)]
pub struct BilingualDict {
    forward: HashMap<String, String>,
    inverse: HashMap<String, String>,
    /// Distinct OOV tokens that went through the rotation fallback.
    oov_log: Mutex<BTreeSet<String>>,
}

impl BilingualDict {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut forward = HashMap::new();
        let mut inverse = HashMap::new();
        for (base, inter) in pairs {
            let base = base.to_lowercase();
            let inter = inter.to_lowercase();
            if inter.starts_with(OOV_MARKER) {
                return Err(Error::Data(format!(
                    "dictionary value {inter:?} starts with the reserved OOV marker"
                )));
            }
            if forward.insert(base.clone(), inter.clone()).is_some() {
                return Err(Error::Data(format!("duplicate dictionary key {base:?}")));
            }
            if inverse.insert(inter.clone(), base).is_some() {
                return Err(Error::Data(format!(
                    "duplicate dictionary value {inter:?} breaks invertibility"
                )));
            }
        }
        Ok(BilingualDict {
            forward,
            inverse,
            oov_log: Mutex::new(BTreeSet::new()),
        })
    }

    /// Loads a `base<TAB>intermediate` TSV.
    pub fn load(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (base, inter) = line.split_once('\t').ok_or_else(|| Error::ParseLine {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: "expected base<TAB>intermediate".into(),
            })?;
            pairs.push((base.to_string(), inter.to_string()));
        }
        BilingualDict::new(pairs)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Forward map for one token: dictionary hit, or marker + rotation.
    pub fn apply(&self, token: &str) -> String {
        let key = token.to_lowercase();
        if let Some(v) = self.forward.get(&key) {
            return v.clone();
        }
        self.oov_log.lock().unwrap().insert(key.clone());
        let mut out = String::with_capacity(key.len() + OOV_MARKER.len_utf8());
        out.push(OOV_MARKER);
        out.push_str(&rotate(&key));
        out
    }

    /// Exact inverse of [`BilingualDict::apply`].
    pub fn invert(&self, token: &str) -> String {
        if let Some(rest) = token.strip_prefix(OOV_MARKER) {
            return rotate(rest);
        }
        self.inverse
            .get(token)
            .cloned()
            .unwrap_or_else(|| token.to_string())
    }

    /// Distinct tokens that fell back to the rotation.
    pub fn oov_count(&self) -> usize {
        self.oov_log.lock().unwrap().len()
    }

    pub fn oov_tokens(&self) -> Vec<String> {
        self.oov_log.lock().unwrap().iter().cloned().collect()
    }
}

/// Self-inverse character rotation: ASCII letters rotate by 13, digits by 5,
/// everything else is unchanged.
fn rotate(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            'a'..='z' => (b'a' + (c as u8 - b'a' + 13) % 26) as char,
            'A'..='Z' => (b'A' + (c as u8 - b'A' + 13) % 26) as char,
            '0'..='9' => (b'0' + (c as u8 - b'0' + 5) % 10) as char,
            other => other,
        })
        .collect()
}

/// The default deterministic translation surrogate: token-wise substitution
/// through a [`BilingualDict`], rotation fallback for OOV tokens.
pub struct CipherTranslator {
    dict: BilingualDict,
}

impl CipherTranslator {
    pub fn new(dict: BilingualDict) -> Self {
        CipherTranslator { dict }
    }

    pub fn dict(&self) -> &BilingualDict {
        &self.dict
    }

    pub fn invert(&self, tokens: &[String]) -> Vec<String> {
        tokens.iter().map(|t| self.dict.invert(t)).collect()
    }
}

impl Translator for CipherTranslator {
    fn name(&self) -> &str {
        "cipher"
    }

    fn direction(&self) -> (&str, &str) {
        ("en", "xx")
    }

    fn translate(&self, tokens: &[String]) -> Result<Vec<String>> {
        Ok(tokens.iter().map(|t| self.dict.apply(t)).collect())
    }
}

/// Greedy decoding through a trained sequence-to-sequence checkpoint,
/// capped at 2·len(input)+5 output tokens.
pub struct LearnedTranslator<T: Scalar> {
    model: Seq2Seq<T>,
    base: String,
    intermediate: String,
}

impl<T: Scalar> LearnedTranslator<T> {
    pub fn new(model: Seq2Seq<T>, base: &str, intermediate: &str) -> Result<Self> {
        if model.vocab().content_len() == 0 {
            return Err(Error::Data(
                "learned translator model has an empty vocabulary".into(),
            ));
        }
        Ok(LearnedTranslator {
            model,
            base: base.to_string(),
            intermediate: intermediate.to_string(),
        })
    }
}

impl<T: Scalar> Translator for LearnedTranslator<T> {
    fn name(&self) -> &str {
        "learned"
    }

    fn direction(&self) -> (&str, &str) {
        (&self.base, &self.intermediate)
    }

    fn translate(&self, tokens: &[String]) -> Result<Vec<String>> {
        let cap = 2 * tokens.len() + 5;
        let out = self.model.greedy_capped(tokens, cap)?;
        if out.is_empty() && !tokens.is_empty() {
            // Contract: non-empty input never yields empty output.
            return Ok(vec!["<unk>".to_string()]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dict(pairs: &[(&str, &str)]) -> BilingualDict {
        BilingualDict::new(
            pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string())),
        )
        .unwrap()
    }

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn dictionary_hit_and_oov_rule() {
        let t = CipherTranslator::new(dict(&[("good", "gut")]));
        let out = t.translate(&toks(&["good", "movie"])).unwrap();
        assert_eq!(out[0], "gut");
        assert_eq!(out[1], format!("{OOV_MARKER}zbivr")); // rot13("movie")
        assert_eq!(t.dict().oov_count(), 1);
        assert_eq!(t.dict().oov_tokens(), ["movie"]);
    }

    #[test]
    fn empty_dict_is_pure_rotation_and_invertible() {
        let t = CipherTranslator::new(BilingualDict::default());
        let input = toks(&["the", "great", "movie", "4", "."]);
        let out = t.translate(&input).unwrap();
        assert!(out.iter().all(|o| o.starts_with(OOV_MARKER)));
        assert_eq!(t.invert(&out), input);
    }

    #[test]
    fn duplicate_values_are_rejected() {
        let err = BilingualDict::new(vec![
            ("good".to_string(), "gut".to_string()),
            ("nice".to_string(), "gut".to_string()),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("invertibility"), "{err}");
    }

    #[test]
    fn values_may_not_carry_the_oov_marker() {
        let err = BilingualDict::new(vec![(
            "good".to_string(),
            format!("{OOV_MARKER}gut"),
        )])
        .unwrap_err();
        assert!(err.to_string().contains("OOV marker"), "{err}");
    }

    #[test]
    fn rotation_is_self_inverse() {
        for s in ["abc", "XYZ", "movie42", "don't", "ha-ha"] {
            assert_eq!(rotate(&rotate(s)), s);
        }
    }

    proptest! {
        #[test]
        fn cipher_round_trips_arbitrary_sentences(
            words in proptest::collection::vec("[a-z0-9':!\\.\\-]{1,10}", 0..12)
        ) {
            // Includes a dict value ("gut") and keys to exercise collisions
            // between rotated tokens and dictionary entries.
            let t = CipherTranslator::new(dict(&[("good", "gut"), ("bad", "schlecht")]));
            let input: Vec<String> = words;
            let out = t.translate(&input).unwrap();
            prop_assert_eq!(out.len(), input.len());
            let lowered: Vec<String> = input.iter().map(|w| w.to_lowercase()).collect();
            prop_assert_eq!(t.invert(&out), lowered);
        }
    }
}
