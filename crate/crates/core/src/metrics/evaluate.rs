//! The evaluation battery: style accuracy, fluency, BLEU / similarity, and
//! their polarity-masked variants, assembled into an [`EvalReport`].

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::bleu::bleu;
use super::classify::Classifier;
use super::embed::{cosine, Embedder, TfIdfEmbedder};
use super::lm::LanguageModel;
use super::report::{aggregate, EvalReport, SentenceEval};
use crate::error::{Error, Result};
use crate::lexicon::PolarityLexicon;
use crate::text::{Sentiment, MASK_TOKEN};

/// Replaces every pivot word (per the lexicon) with `<mask>`, preserving
/// token count.
pub fn mask_pivots(tokens: &[String], lexicon: &PolarityLexicon) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            if lexicon.is_pivot(t).is_some() {
                MASK_TOKEN.to_string()
            } else {
                t.clone()
            }
        })
        .collect()
}

/// BLEU computed on pivot-masked hypothesis and source.
pub fn mask_bleu(hypothesis: &[String], source: &[String], lexicon: &PolarityLexicon) -> f64 {
    bleu(&mask_pivots(hypothesis, lexicon), &mask_pivots(source, lexicon))
}

/// Cosine similarity of the two sentence embeddings.
pub fn similarity(a: &[String], b: &[String], embedder: &dyn Embedder) -> f64 {
    cosine(&embedder.embed(a), &embedder.embed(b))
}

/// Similarity of the pivot-masked sentences.
pub fn mask_sim(
    a: &[String],
    b: &[String],
    embedder: &dyn Embedder,
    lexicon: &PolarityLexicon,
) -> f64 {
    similarity(&mask_pivots(a, lexicon), &mask_pivots(b, lexicon), embedder)
}

/// Percentage of outputs whose classified sign matches the target sentiment;
/// a score of exactly 0 counts as a failure. Errors on an empty output set.
pub fn style_accuracy(
    outputs: &[(Vec<String>, Sentiment)],
    classifier: &dyn Classifier,
) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::Data(
            "style accuracy is undefined for an empty output set".into(),
        ));
    }
    let correct = outputs
        .iter()
        .filter(|(tokens, target)| {
            let s = classifier.score(tokens);
            match target {
                Sentiment::Pos => s > 0.0,
                Sentiment::Neg => s < 0.0,
                Sentiment::Unlabeled => false,
            }
        })
        .count();
    Ok(100.0 * correct as f64 / outputs.len() as f64)
}

/// Mean total sentence log-probability under the language model.
pub fn fluency(outputs: &[Vec<String>], lm: &dyn LanguageModel) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    outputs.iter().map(|s| lm.logprob(s)).sum::<f64>() / outputs.len() as f64
}

/// Scalar scorers may be replaced by per-sentence score files.
pub enum ScalarScores<'a, S: ?Sized> {
    Builtin(&'a S),
    File(Vec<f64>),
}

pub type ClassifierSource<'a> = ScalarScores<'a, dyn Classifier + 'a>;
pub type LmSource<'a> = ScalarScores<'a, dyn LanguageModel + 'a>;

/// Embeddings come from the built-in TF-IDF embedder (fitted on the masked
/// and unmasked evaluation sentences) or from an external vector file.
pub enum EmbeddingSource {
    TfIdf,
    File(ExternalEmbeddings),
}

/// Externally computed embeddings for each sentence index, one vector per
/// `(index, kind)` with kinds `hyp`, `src`, `hyp_masked`, `src_masked`.
pub struct ExternalEmbeddings {
    pub hyp: Vec<Vec<f64>>,
    pub src: Vec<Vec<f64>>,
    pub hyp_masked: Vec<Vec<f64>>,
    pub src_masked: Vec<Vec<f64>>,
}

/// Reads a scalar score file: `sentence_index<TAB>score` per line.
pub fn read_score_file(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut scores = vec![f64::NAN; expected];
    let mut seen = vec![false; expected];
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::ParseLine {
            path: path.display().to_string(),
            line: lineno + 1,
            msg,
        };
        let (idx, score) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected index<TAB>score".into()))?;
        let idx: usize = idx.parse().map_err(|e| parse_err(format!("bad index: {e}")))?;
        if idx >= expected {
            return Err(parse_err(format!("index {idx} out of range 0..{expected}")));
        }
        scores[idx] = score.parse().map_err(|e| parse_err(format!("bad score: {e}")))?;
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Data(format!(
            "{}: no score for sentence {missing}",
            path.display()
        )));
    }
    Ok(scores)
}

/// Reads an embedding file: `index<TAB>kind<TAB>v1 v2 ...` per line, with
/// kind in {hyp, src, hyp_masked, src_masked}. Vectors are L2-normalized on
/// ingestion (zero vectors stay zero).
pub fn read_embedding_file(path: &Path, expected: usize) -> Result<ExternalEmbeddings> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut out = ExternalEmbeddings {
        hyp: vec![Vec::new(); expected],
        src: vec![Vec::new(); expected],
        hyp_masked: vec![Vec::new(); expected],
        src_masked: vec![Vec::new(); expected],
    };
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::ParseLine {
            path: path.display().to_string(),
            line: lineno + 1,
            msg,
        };
        let mut fields = line.splitn(3, '\t');
        let (idx, kind, vector) = match (fields.next(), fields.next(), fields.next()) {
            (Some(i), Some(k), Some(v)) => (i, k, v),
            _ => return Err(parse_err("expected index<TAB>kind<TAB>vector".into())),
        };
        let idx: usize = idx.parse().map_err(|e| parse_err(format!("bad index: {e}")))?;
        if idx >= expected {
            return Err(parse_err(format!("index {idx} out of range 0..{expected}")));
        }
        let mut v: Vec<f64> = Vec::new();
        for part in vector.split_whitespace() {
            v.push(part.parse().map_err(|e| parse_err(format!("bad value: {e}")))?);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        let slot = match kind {
            "hyp" => &mut out.hyp[idx],
            "src" => &mut out.src[idx],
            "hyp_masked" => &mut out.hyp_masked[idx],
            "src_masked" => &mut out.src_masked[idx],
            other => return Err(parse_err(format!("unknown kind {other:?}"))),
        };
        *slot = v;
    }
    for (kind, vecs) in [
        ("hyp", &out.hyp),
        ("src", &out.src),
        ("hyp_masked", &out.hyp_masked),
        ("src_masked", &out.src_masked),
    ] {
        if let Some(missing) = vecs.iter().position(Vec::is_empty) {
            return Err(Error::Data(format!(
                "{}: missing {kind} embedding for sentence {missing}",
                path.display()
            )));
        }
    }
    Ok(out)
}

pub struct EvalInputs<'a> {
    pub name: String,
    pub hyps: &'a [Vec<String>],
    pub srcs: &'a [Vec<String>],
    /// Target sentiment of each output.
    pub targets: &'a [Sentiment],
    pub lexicon: &'a PolarityLexicon,
}

/// Computes the full report. Lengths of `hyps`, `srcs` and `targets` must
/// agree.
pub fn evaluate(
    inputs: &EvalInputs<'_>,
    classifier: &ClassifierSource<'_>,
    lm: &LmSource<'_>,
    embeddings: &EmbeddingSource,
) -> Result<EvalReport> {
    let n = inputs.hyps.len();
    if n == 0 {
        return Err(Error::Data("cannot evaluate an empty corpus".into()));
    }
    if inputs.srcs.len() != n || inputs.targets.len() != n {
        return Err(Error::Data(format!(
            "evaluation inputs disagree: {} hyps, {} srcs, {} targets",
            n,
            inputs.srcs.len(),
            inputs.targets.len()
        )));
    }
    for source in [classifier as &dyn FileBacked, lm as &dyn FileBacked] {
        source.check_len(n)?;
    }

    // Masked variants used by MaskBLEU/MaskSim and the TF-IDF fit.
    let hyp_masked: Vec<Vec<String>> = inputs
        .hyps
        .iter()
        .map(|s| mask_pivots(s, inputs.lexicon))
        .collect();
    let src_masked: Vec<Vec<String>> = inputs
        .srcs
        .iter()
        .map(|s| mask_pivots(s, inputs.lexicon))
        .collect();

    let tfidf;
    let embedded: Box<dyn Fn(usize) -> (f64, f64)> = match embeddings {
        EmbeddingSource::TfIdf => {
            tfidf = TfIdfEmbedder::fit(
                inputs
                    .hyps
                    .iter()
                    .chain(inputs.srcs.iter())
                    .chain(hyp_masked.iter())
                    .chain(src_masked.iter())
                    .map(Vec::as_slice),
            );
            let hyps = inputs.hyps;
            let srcs = inputs.srcs;
            let hyp_masked = &hyp_masked;
            let src_masked = &src_masked;
            let e: &TfIdfEmbedder = &tfidf;
            Box::new(move |i: usize| {
                (
                    similarity(&hyps[i], &srcs[i], e),
                    similarity(&hyp_masked[i], &src_masked[i], e),
                )
            })
        }
        EmbeddingSource::File(ext) => {
            if ext.hyp.len() != n {
                return Err(Error::Data(format!(
                    "embedding file covers {} sentences, expected {n}",
                    ext.hyp.len()
                )));
            }
            Box::new(move |i: usize| {
                (
                    cosine(&ext.hyp[i], &ext.src[i]),
                    cosine(&ext.hyp_masked[i], &ext.src_masked[i]),
                )
            })
        }
    };

    let mut rows = Vec::with_capacity(n);
    let mut acc_hits = 0usize;
    for i in 0..n {
        let hyp = &inputs.hyps[i];
        let src = &inputs.srcs[i];
        let target = inputs.targets[i];
        let score = match classifier {
            ScalarScores::Builtin(c) => c.score(hyp),
            ScalarScores::File(scores) => scores[i],
        };
        let acc_ok = match target {
            Sentiment::Pos => score > 0.0,
            Sentiment::Neg => score < 0.0,
            Sentiment::Unlabeled => false,
        };
        acc_hits += acc_ok as usize;
        let lp = match lm {
            ScalarScores::Builtin(m) => m.logprob(hyp),
            ScalarScores::File(scores) => scores[i],
        };
        let (sim_i, mask_sim_i) = embedded(i);
        rows.push(SentenceEval {
            index: i,
            acc_ok,
            sim: sim_i,
            mask_sim: mask_sim_i,
            bleu: bleu(hyp, src),
            mask_bleu: bleu(&hyp_masked[i], &src_masked[i]),
            lm: lp,
            len: hyp.len(),
        });
    }

    let nf = n as f64;
    let mean = |f: &dyn Fn(&SentenceEval) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / nf;
    let acc = 100.0 * acc_hits as f64 / nf;
    let sim = mean(&|r| r.sim);
    let msim = mean(&|r| r.mask_sim);
    let b = mean(&|r| r.bleu);
    let mb = mean(&|r| r.mask_bleu);
    let lm_score = mean(&|r| r.lm);
    let len = mean(&|r| r.len as f64);
    Ok(EvalReport {
        name: inputs.name.clone(),
        acc,
        sim,
        mask_sim: msim,
        bleu: b,
        mask_bleu: mb,
        lm: lm_score,
        len,
        avg: aggregate(acc, msim, mb),
        sentences: rows,
    })
}

/// Length validation for file-backed scalar scorers.
trait FileBacked {
    fn check_len(&self, n: usize) -> Result<()>;
}

impl<S: ?Sized> FileBacked for ScalarScores<'_, S> {
    fn check_len(&self, n: usize) -> Result<()> {
        match self {
            ScalarScores::Builtin(_) => Ok(()),
            ScalarScores::File(scores) if scores.len() == n => Ok(()),
            ScalarScores::File(scores) => Err(Error::Data(format!(
                "score file covers {} sentences, expected {n}",
                scores.len()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::classify::LexiconClassifier;
    use crate::metrics::lm::TrigramLm;
    use crate::text::{tokenize, Corpus, Sentence, Split};
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn lex() -> PolarityLexicon {
        let mut lex = PolarityLexicon::new("en");
        for (t, s) in [
            ("great", 3.1),
            ("tasteless", -1.9),
            ("delicious", 2.8),
            ("awful", -2.9),
        ] {
            lex.insert(t, s).unwrap();
        }
        lex
    }

    #[test]
    fn mask_pivots_examples() {
        let lex = lex();
        assert_eq!(
            mask_pivots(&toks(&["the", "food", "was", "tasteless"]), &lex),
            toks(&["the", "food", "was", MASK_TOKEN])
        );
        let no_pivots = toks(&["the", "food", "was", "warm"]);
        assert_eq!(mask_pivots(&no_pivots, &lex), no_pivots);
        assert_eq!(
            mask_pivots(&toks(&["great", "awful"]), &lex),
            toks(&[MASK_TOKEN, MASK_TOKEN])
        );
    }

    #[test]
    fn masking_equates_pivot_substitutions() {
        let lex = lex();
        let hyp = toks(&["the", "delicious", "movie"]);
        let src = toks(&["the", "tasteless", "movie"]);
        assert!((mask_bleu(&hyp, &src, &lex) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn no_pivot_pair_has_mask_bleu_equal_to_bleu() {
        let lex = lex();
        let hyp = toks(&["one", "two", "three"]);
        let src = toks(&["one", "two", "four"]);
        assert_eq!(mask_bleu(&hyp, &src, &lex), super::bleu(&hyp, &src));
    }

    #[test]
    fn style_accuracy_contract() {
        let lex = lex();
        let classifier = LexiconClassifier::new(&lex);
        let outputs = vec![
            (toks(&["the", "movie", "is", "great"]), Sentiment::Pos),
            (toks(&["the", "movie", "is", "awful"]), Sentiment::Pos),
            (toks(&["plain", "words", "only"]), Sentiment::Neg), // score 0 fails
        ];
        let acc = style_accuracy(&outputs, &classifier).unwrap();
        assert!((acc - 100.0 / 3.0).abs() < 1e-9);
        assert!(style_accuracy(&[], &classifier).is_err());
    }

    #[test]
    fn oracle_classifier_reaches_100() {
        struct Oracle;
        impl Classifier for Oracle {
            fn score(&self, tokens: &[String]) -> f64 {
                if tokens.contains(&"happy".to_string()) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
        let outputs = vec![
            (toks(&["happy", "day"]), Sentiment::Pos),
            (toks(&["sad", "day"]), Sentiment::Neg),
        ];
        assert_eq!(style_accuracy(&outputs, &Oracle).unwrap(), 100.0);
    }

    fn eval_fixture(
        hyps: &[Vec<String>],
        srcs: &[Vec<String>],
        targets: &[Sentiment],
    ) -> EvalReport {
        let lexicon = lex();
        let train = Corpus::new(
            vec![Sentence::new(tokenize("the movie was great fun"), Sentiment::Pos).unwrap()],
            Split::Train,
        );
        let lm = TrigramLm::train(&train);
        let classifier = LexiconClassifier::new(&lexicon);
        evaluate(
            &EvalInputs {
                name: "fixture".into(),
                hyps,
                srcs,
                targets,
                lexicon: &lexicon,
            },
            &ScalarScores::Builtin(&classifier),
            &ScalarScores::Builtin(&lm),
            &EmbeddingSource::TfIdf,
        )
        .unwrap()
    }

    #[test]
    fn report_satisfies_the_avg_identity() {
        let hyps = vec![
            toks(&["the", "food", "was", "delicious"]),
            toks(&["the", "show", "was", "awful"]),
        ];
        let srcs = vec![
            toks(&["the", "food", "was", "tasteless"]),
            toks(&["the", "show", "was", "great"]),
        ];
        let report = eval_fixture(&hyps, &srcs, &[Sentiment::Pos, Sentiment::Neg]);
        let expected = (report.acc + 100.0 * report.mask_sim + report.mask_bleu) / 3.0;
        assert_eq!(report.avg, expected);
        assert!(report.len > 0.0);
        assert_eq!(report.acc, 100.0);
        // masked pairs are identical here
        assert!((report.mask_sim - 1.0).abs() < 1e-6);
        assert!((report.mask_bleu - 100.0).abs() < 1e-9);
        assert!(report.lm < 0.0);
    }

    #[test]
    fn external_score_files_pass_through() {
        let dir = tempfile::tempdir().unwrap();
        let lm_path = dir.path().join("lm.tsv");
        std::fs::write(&lm_path, "0\t-12.5\n1\t-20.0\n").unwrap();
        let scores = read_score_file(&lm_path, 2).unwrap();
        assert_eq!(scores, vec![-12.5, -20.0]);

        let hyps = vec![toks(&["a", "b"]), toks(&["c", "d"])];
        let srcs = hyps.clone();
        let lexicon = lex();
        let classifier = LexiconClassifier::new(&lexicon);
        let report = evaluate(
            &EvalInputs {
                name: "ext".into(),
                hyps: &hyps,
                srcs: &srcs,
                targets: &[Sentiment::Pos, Sentiment::Neg],
                lexicon: &lexicon,
            },
            &ScalarScores::Builtin(&classifier),
            &ScalarScores::File(scores),
            &EmbeddingSource::TfIdf,
        )
        .unwrap();
        assert!((report.lm - (-16.25)).abs() < 1e-12);
    }

    #[test]
    fn missing_score_lines_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.tsv");
        std::fs::write(&path, "0\t0.5\n").unwrap();
        assert!(read_score_file(&path, 2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mask_bleu_is_bleu_after_masking(
            hyp in proptest::collection::vec("(great|awful|the|movie|fun)", 1..8),
            src in proptest::collection::vec("(great|awful|the|movie|fun)", 1..8),
        ) {
            let lexicon = lex();
            let hyp: Vec<String> = hyp;
            let src: Vec<String> = src;
            let direct = mask_bleu(&hyp, &src, &lexicon);
            let via = super::bleu(&mask_pivots(&hyp, &lexicon), &mask_pivots(&src, &lexicon));
            prop_assert_eq!(direct, via);
        }
    }
}
