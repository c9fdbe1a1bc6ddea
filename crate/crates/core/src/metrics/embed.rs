//! The default sentence embedder: TF-IDF weighted bag of words, L2
//! normalized. `<mask>` participates like any other token.

use std::collections::{BTreeMap, HashMap};

/// Deterministic sentence embedding into a unit-norm vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    /// Unit L2 norm (±1e-6), except the all-zero vector for sentences with
    /// no known tokens.
    fn embed(&self, tokens: &[String]) -> Vec<f64>;
}

pub struct TfIdfEmbedder {
    index: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfEmbedder {
    /// Fits document frequencies over the given sentences. The vocabulary is
    /// sorted, so embeddings do not depend on input order.
    pub fn fit<'a, I>(documents: I) -> TfIdfEmbedder
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        let mut n_docs = 0usize;
        for doc in documents {
            n_docs += 1;
            let mut seen = std::collections::BTreeSet::new();
            for t in doc {
                seen.insert(t.as_str());
            }
            for t in seen {
                *doc_freq.entry(t.to_string()).or_insert(0) += 1;
            }
        }
        let index: BTreeMap<String, usize> = doc_freq
            .keys()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut idf = vec![0.0; index.len()];
        for (t, &i) in &index {
            let df = doc_freq[t] as f64;
            idf[i] = (n_docs as f64 / (df + 1.0)).ln() + 1.0;
        }
        TfIdfEmbedder { index, idf }
    }
}

impl Embedder for TfIdfEmbedder {
    fn dim(&self) -> usize {
        self.index.len()
    }

    fn embed(&self, tokens: &[String]) -> Vec<f64> {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for t in tokens {
            if let Some(&i) = self.index.get(t) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut v = vec![0.0; self.idf.len()];
        for (i, c) in counts {
            v[i] = c * self.idf[i];
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

/// Cosine similarity; an all-zero embedding on either side is defined as 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
