//! Polarity lexicons: building, storage, pivot detection, and projection
//! into the intermediate language through a translator.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::Sentiment;
use crate::translate::Translator;

/// Token → (score, label) map over one language. Scores live in [-4, 4]
/// (VADER-style magnitudes); the label always matches the sign of the score
/// and zero scores are excluded. Keys are stored lowercased.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarityLexicon {
    entries: BTreeMap<String, f64>,
    language: String,
}

/// Loading/projection bookkeeping: duplicates overwritten, entries dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LexiconWarnings {
    pub duplicates: usize,
    pub dropped: usize,
    pub collisions: usize,
}

impl PolarityLexicon {
    pub fn new(language: impl Into<String>) -> Self {
        PolarityLexicon {
            entries: BTreeMap::new(),
            language: language.into(),
        }
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts an entry, validating the score range and sign. Returns the
    /// previous score if the token was already present.
    pub fn insert(&mut self, token: &str, score: f64) -> Result<Option<f64>> {
        if !(score.abs() <= 4.0) || score == 0.0 {
            return Err(Error::Data(format!(
                "lexicon score {score} for {token:?} outside [-4,4] or zero"
            )));
        }
        Ok(self.entries.insert(token.to_lowercase(), score))
    }

    pub fn score(&self, token: &str) -> Option<f64> {
        self.entries.get(&token.to_lowercase()).copied()
    }

    /// The pivot label of `token`: its lexicon label if present, else `None`.
    pub fn is_pivot(&self, token: &str) -> Option<Sentiment> {
        self.score(token).map(|s| {
            if s > 0.0 {
                Sentiment::Pos
            } else {
                Sentiment::Neg
            }
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Tokens of one label, in sorted order.
    pub fn tokens_of(&self, label: Sentiment) -> Vec<&str> {
        self.iter()
            .filter(|(_, s)| {
                matches!(
                    (label, *s > 0.0),
                    (Sentiment::Pos, true) | (Sentiment::Neg, false)
                )
            })
            .map(|(t, _)| t)
            .collect()
    }

    /// Keeps only entries with |score| ≥ `min_abs_score`.
    pub fn restrict(&self, min_abs_score: f64) -> PolarityLexicon {
        PolarityLexicon {
            entries: self
                .entries
                .iter()
                .filter(|(_, s)| s.abs() >= min_abs_score)
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            language: self.language.clone(),
        }
    }
}

fn label_str(score: f64) -> &'static str {
    if score > 0.0 {
        "pos"
    } else {
        "neg"
    }
}

/// Loads a `token<TAB>score<TAB>label` lexicon. Duplicate tokens are
/// overwritten by later lines (counted in the warnings); a label that
/// contradicts the sign of the score is an error at that line.
pub fn load_lexicon(path: &Path, language: &str) -> Result<(PolarityLexicon, LexiconWarnings)> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let reader = BufReader::new(file);
    let mut lexicon = PolarityLexicon::new(language);
    let mut warnings = LexiconWarnings::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = lineno + 1;
        let parse_err = |msg: String| Error::ParseLine {
            path: path.display().to_string(),
            line: lineno,
            msg,
        };
        let mut fields = line.split('\t');
        let (token, score, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(s), Some(l)) => (t, s, l),
            _ => return Err(parse_err("expected token<TAB>score<TAB>label".into())),
        };
        let score: f64 = score
            .parse()
            .map_err(|e| parse_err(format!("bad score: {e}")))?;
        let expected = Sentiment::parse(label)
            .filter(|s| *s != Sentiment::Unlabeled)
            .ok_or_else(|| parse_err(format!("unknown label {label:?}")))?;
        let actual = if score > 0.0 { Sentiment::Pos } else { Sentiment::Neg };
        if score == 0.0 || expected != actual {
            return Err(parse_err(format!(
                "label {label} inconsistent with score {score}"
            )));
        }
        if lexicon
            .insert(token, score)
            .map_err(|e| parse_err(e.to_string()))?
            .is_some()
        {
            warnings.duplicates += 1;
        }
    }
    Ok((lexicon, warnings))
}

pub fn save_lexicon(lexicon: &PolarityLexicon, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for (token, score) in lexicon.iter() {
        writeln!(w, "{token}\t{score}\t{}", label_str(score))
            .map_err(|e| Error::io("write lexicon", e))?;
    }
    w.flush().map_err(|e| Error::io("flush lexicon", e))
}

/// Projects a base-language lexicon into the intermediate language: each
/// entry whose word-level translation is a single token keeps its score and
/// label; multi-token or failed translations are dropped and counted. When
/// two projections collide on the same intermediate token, the entry with
/// the larger |score| wins.
pub fn project_lexicon(
    base: &PolarityLexicon,
    translator: &dyn Translator,
    language: &str,
) -> Result<(PolarityLexicon, LexiconWarnings)> {
    let mut projected = PolarityLexicon::new(language);
    let mut warnings = LexiconWarnings::default();
    for (token, score) in base.iter() {
        let out = match translator.translate(&[token.to_string()]) {
            Ok(out) => out,
            Err(_) => {
                warnings.dropped += 1;
                continue;
            }
        };
        if out.len() != 1 {
            warnings.dropped += 1;
            continue;
        }
        let target = out[0].to_lowercase();
        match projected.score(&target) {
            Some(existing) => {
                warnings.collisions += 1;
                if score.abs() > existing.abs() {
                    projected.insert(&target, score)?;
                }
            }
            None => {
                projected.insert(&target, score)?;
            }
        }
    }
    Ok((projected, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translate::{BilingualDict, CipherTranslator};

    fn write_lines(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.tsv");
        std::fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_entries_with_signs() {
        let (_d, path) = write_lines(&["good\t1.9\tpos", "bad\t-2.5\tneg"]);
        let (lex, warnings) = load_lexicon(&path, "en").unwrap();
        assert_eq!(lex.score("good"), Some(1.9));
        assert_eq!(lex.score("bad"), Some(-2.5));
        assert_eq!(warnings.duplicates, 0);
    }

    #[test]
    fn empty_file_is_a_legal_empty_lexicon() {
        let (_d, path) = write_lines(&[]);
        let (lex, _) = load_lexicon(&path, "en").unwrap();
        assert!(lex.is_empty());
    }

    #[test]
    fn inconsistent_label_errors_at_line() {
        let (_d, path) = write_lines(&["good\t1.9\tpos", "odd\t-1.2\tpos"]);
        let err = load_lexicon(&path, "en").unwrap_err();
        assert!(matches!(err, Error::ParseLine { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicates_warn_and_last_wins() {
        let (_d, path) = write_lines(&["good\t1.9\tpos", "good\t0.5\tpos"]);
        let (lex, warnings) = load_lexicon(&path, "en").unwrap();
        assert_eq!(warnings.duplicates, 1);
        assert_eq!(lex.score("good"), Some(0.5));
    }

    #[test]
    fn pivot_detection_examples() {
        let mut lex = PolarityLexicon::new("en");
        lex.insert("good", 1.9).unwrap();
        lex.insert("bad", -2.5).unwrap();
        assert_eq!(lex.is_pivot("good"), Some(Sentiment::Pos));
        assert_eq!(lex.is_pivot("GOOD"), Some(Sentiment::Pos));
        assert_eq!(lex.is_pivot("bad"), Some(Sentiment::Neg));
        assert_eq!(lex.is_pivot("table"), None);
    }

    #[test]
    fn is_pivot_agrees_with_membership() {
        let mut lex = PolarityLexicon::new("en");
        for (t, s) in [("fine", 1.0), ("gross", -2.0), ("super", 3.0)] {
            lex.insert(t, s).unwrap();
        }
        for (t, _) in lex.clone().iter() {
            assert!(lex.is_pivot(t).is_some());
        }
        assert!(lex.is_pivot("absent").is_none());
    }

    #[test]
    fn save_load_round_trips() {
        let mut lex = PolarityLexicon::new("en");
        lex.insert("good", 1.9).unwrap();
        lex.insert("awful", -3.1).unwrap();
        lex.insert("nice", 1.8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.tsv");
        save_lexicon(&lex, &path).unwrap();
        let (back, warnings) = load_lexicon(&path, "en").unwrap();
        assert_eq!(back, lex);
        assert_eq!(warnings, LexiconWarnings::default());
    }

    #[test]
    fn projection_preserves_scores_through_the_cipher() {
        let mut base = PolarityLexicon::new("en");
        base.insert("good", 1.9).unwrap();
        base.insert("awful", -3.1).unwrap();
        let translator = CipherTranslator::new(BilingualDict::default());
        let (projected, warnings) = project_lexicon(&base, &translator, "xx").unwrap();
        assert_eq!(projected.len(), 2);
        assert_eq!(warnings.dropped, 0);
        // Every base entry maps to the cipher of its token with score intact.
        for (token, score) in base.iter() {
            let image = translator
                .translate(&[token.to_string()])
                .unwrap()
                .remove(0);
            assert_eq!(projected.score(&image), Some(score));
        }
    }

    #[test]
    fn empty_base_projects_to_empty() {
        let base = PolarityLexicon::new("en");
        let translator = CipherTranslator::new(BilingualDict::default());
        let (projected, _) = project_lexicon(&base, &translator, "xx").unwrap();
        assert!(projected.is_empty());
    }

    #[test]
    fn projection_collision_keeps_larger_magnitude() {
        struct Collider;
        impl Translator for Collider {
            fn name(&self) -> &str {
                "collider"
            }
            fn direction(&self) -> (&str, &str) {
                ("en", "xx")
            }
            fn translate(&self, tokens: &[String]) -> crate::Result<Vec<String>> {
                Ok(tokens.iter().map(|_| "same".to_string()).collect())
            }
        }
        let mut base = PolarityLexicon::new("en");
        base.insert("good", 1.9).unwrap();
        base.insert("fantastic", 3.4).unwrap();
        let (projected, warnings) = project_lexicon(&base, &Collider, "xx").unwrap();
        assert_eq!(projected.len(), 1);
        assert_eq!(projected.score("same"), Some(3.4));
        assert_eq!(warnings.collisions, 1);
    }
}
