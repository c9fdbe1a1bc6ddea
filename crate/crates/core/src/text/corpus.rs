use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Pos,
    Neg,
    Unlabeled,
}

impl Sentiment {
    pub fn opposite(self) -> Sentiment {
        match self {
            Sentiment::Pos => Sentiment::Neg,
            Sentiment::Neg => Sentiment::Pos,
            Sentiment::Unlabeled => Sentiment::Unlabeled,
        }
    }

    pub fn parse(s: &str) -> Option<Sentiment> {
        match s {
            "pos" => Some(Sentiment::Pos),
            "neg" => Some(Sentiment::Neg),
            "unlabeled" => Some(Sentiment::Unlabeled),
            _ => None,
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Sentiment::Pos => "pos",
            Sentiment::Neg => "neg",
            Sentiment::Unlabeled => "unlabeled",
        };
        f.write_str(s)
    }
}

/// One tokenized sentence with its sentiment label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub sentiment: Sentiment,
    pub source_id: Option<String>,
}

impl Sentence {
    /// Builds a sentence, enforcing non-empty whitespace-free tokens.
    pub fn new(tokens: Vec<String>, sentiment: Sentiment) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Data("sentence has no tokens".into()));
        }
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::Data(format!(
                "token {bad:?} is empty or contains whitespace"
            )));
        }
        Ok(Sentence {
            tokens,
            sentiment,
            source_id: None,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// An ordered list of sentences tagged with its split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub split: Split,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>, split: Split) -> Self {
        Corpus { sentences, split }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sentence> {
        self.sentences.iter()
    }

    pub fn of_sentiment(&self, s: Sentiment) -> Corpus {
        Corpus {
            sentences: self
                .sentences
                .iter()
                .filter(|x| x.sentiment == s)
                .cloned()
                .collect(),
            split: self.split,
        }
    }

    /// Exact-match sentence strings, used for split-disjointness checks.
    pub fn string_set(&self) -> HashSet<String> {
        self.sentences.iter().map(Sentence::text).collect()
    }

    pub fn is_disjoint_from(&self, other: &Corpus) -> bool {
        let mine = self.string_set();
        other.sentences.iter().all(|s| !mine.contains(&s.text()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Picks the format from a file extension; `.tsv` is TSV, everything
    /// else is JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentiment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

/// Reads a corpus file. Text is re-tokenized with [`super::tokenize`], so
/// raw (untokenized) files are accepted as well; for files produced by
/// [`write_corpus`] the round trip is lossless.
pub fn read_corpus(path: &Path, format: CorpusFormat, split: Split) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let reader = BufReader::new(file);
    let mut sentences = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let parse_err = |msg: String| Error::ParseLine {
            path: path.display().to_string(),
            line: lineno,
            msg,
        };
        let (text, sentiment, id) = match format {
            CorpusFormat::Jsonl => {
                let rec: JsonlRecord = serde_json::from_str(&line)
                    .map_err(|e| parse_err(format!("invalid JSON: {e}")))?;
                let sentiment = match rec.sentiment.as_deref() {
                    None => Sentiment::Unlabeled,
                    Some(s) => Sentiment::parse(s)
                        .ok_or_else(|| parse_err(format!("unknown sentiment label {s:?}")))?,
                };
                (rec.text, sentiment, rec.id)
            }
            CorpusFormat::Tsv => {
                let (label, text) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err("expected sentiment<TAB>text".into()))?;
                let sentiment = Sentiment::parse(label)
                    .ok_or_else(|| parse_err(format!("unknown sentiment label {label:?}")))?;
                (text.to_string(), sentiment, None)
            }
        };
        let tokens = super::tokenize(&text);
        if tokens.is_empty() {
            return Err(parse_err("sentence has no tokens".into()));
        }
        let mut sentence = Sentence::new(tokens, sentiment)?;
        sentence.source_id = id;
        sentences.push(sentence);
    }
    Ok(Corpus::new(sentences, split))
}

pub fn write_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for s in &corpus.sentences {
        match format {
            CorpusFormat::Jsonl => {
                let rec = JsonlRecord {
                    text: s.text(),
                    sentiment: match s.sentiment {
                        Sentiment::Unlabeled => None,
                        other => Some(other.to_string()),
                    },
                    id: s.source_id.clone(),
                };
                serde_json::to_writer(&mut w, &rec)
                    .map_err(|e| Error::Data(format!("serialize corpus line: {e}")))?;
                writeln!(w).map_err(|e| Error::io("write corpus", e))?;
            }
            CorpusFormat::Tsv => {
                writeln!(w, "{}\t{}", s.sentiment, s.text())
                    .map_err(|e| Error::io("write corpus", e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("flush corpus", e))
}
