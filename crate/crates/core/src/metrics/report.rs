use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated system, mirroring the standard report columns
/// (Acc, Sim, M/Sim, B, M/B, LM, Len, Avg).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    /// Style transfer accuracy in [0, 100].
    pub acc: f64,
    /// Cosine similarity between source and output, in [-1, 1].
    pub sim: f64,
    /// Similarity with pivot words masked.
    pub mask_sim: f64,
    /// Sentence BLEU against the source, mean over sentences, [0, 100].
    pub bleu: f64,
    /// BLEU with pivot words masked.
    pub mask_bleu: f64,
    /// Mean total sentence log-probability (≤ 0).
    pub lm: f64,
    /// Mean output length in tokens.
    pub len: f64,
    /// (acc + 100·mask_sim + mask_bleu) / 3.
    pub avg: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentences: Vec<SentenceEval>,
}

/// Per-sentence breakdown row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceEval {
    pub index: usize,
    pub acc_ok: bool,
    pub sim: f64,
    pub mask_sim: f64,
    pub bleu: f64,
    pub mask_bleu: f64,
    pub lm: f64,
    pub len: usize,
}

pub const REPORT_COLUMNS: [&str; 8] = ["Acc", "Sim", "M/Sim", "B", "M/B", "LM", "Len", "Avg"];

impl EvalReport {
    /// Column values in report order.
    pub fn columns(&self) -> [f64; 8] {
        [
            self.acc,
            self.sim,
            self.mask_sim,
            self.bleu,
            self.mask_bleu,
            self.lm,
            self.len,
            self.avg,
        ]
    }

    pub fn tsv_header() -> String {
        format!("model\t{}", REPORT_COLUMNS.join("\t"))
    }

    /// One TSV row: similarities with three decimals, everything else one.
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{:.1}\t{:.3}\t{:.3}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}",
            self.name,
            self.acc,
            self.sim,
            self.mask_sim,
            self.bleu,
            self.mask_bleu,
            self.lm,
            self.len,
            self.avg
        )
    }
}

/// The style-content trade-off aggregate: mean of accuracy, 100·MaskSim and
/// MaskBLEU.
pub fn aggregate(acc: f64, mask_sim: f64, mask_bleu: f64) -> f64 {
    const EPS: f64 = 1e-9;
    debug_assert!((-EPS..=100.0 + EPS).contains(&acc));
    debug_assert!((-1.0 - EPS..=1.0 + EPS).contains(&mask_sim));
    debug_assert!((-EPS..=100.0 + EPS).contains(&mask_bleu));
    (acc + 100.0 * mask_sim + mask_bleu) / 3.0
}

/// Pairwise Pearson correlations between the report columns. Requires at
/// least 3 reports; a constant column yields `None` against every other.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub labels: Vec<&'static str>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn correlation_report(reports: &[EvalReport]) -> Result<CorrelationMatrix> {
    if reports.len() < 3 {
        return Err(Error::Data(format!(
            "correlation needs at least 3 reports, got {}",
            reports.len()
        )));
    }
    let columns: Vec<Vec<f64>> = (0..REPORT_COLUMNS.len())
        .map(|c| reports.iter().map(|r| r.columns()[c]).collect())
        .collect();
    let n = REPORT_COLUMNS.len();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        values[i][i] = Some(1.0);
        for j in (i + 1)..n {
            let r = pearson(&columns[i], &columns[j]);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: REPORT_COLUMNS.to_vec(),
        values,
    })
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| *l == a)?;
        let j = self.labels.iter().position(|l| *l == b)?;
        self.values[i][j]
    }

    pub fn tsv(&self) -> String {
        let mut out = String::from("metric");
        for l in &self.labels {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for v in &self.values[i] {
                out.push('\t');
                match v {
                    Some(r) => out.push_str(&format!("{r:.3}")),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `None` when either column is constant (undefined correlation).
fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(name: &str, acc: f64, mask_sim: f64, mask_bleu: f64) -> EvalReport {
        EvalReport {
            name: name.into(),
            acc,
            sim: mask_sim - 0.05,
            mask_sim,
            bleu: mask_bleu - 2.0,
            mask_bleu,
            lm: -80.0,
            len: 12.0,
            avg: aggregate(acc, mask_sim, mask_bleu),
            sentences: Vec::new(),
        }
    }

    #[test]
    fn aggregate_matches_reference_rows() {
        assert!((aggregate(85.2, 0.646, 25.4) - 58.4).abs() <= 0.05);
        assert!((aggregate(82.0, 0.665, 27.4) - 58.6).abs() <= 0.05);
        assert_eq!(aggregate(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn correlation_requires_three_reports() {
        let rs = vec![report("a", 60.0, 0.7, 30.0), report("b", 70.0, 0.6, 25.0)];
        assert!(correlation_report(&rs).is_err());
    }

    #[test]
    fn duplicate_and_negated_columns() {
        // acc rises with bleu (duplicate up to affine) and falls with mask_sim.
        let rs = vec![
            report("a", 60.0, 0.70, 30.0),
            report("b", 70.0, 0.65, 40.0),
            report("c", 80.0, 0.60, 50.0),
        ];
        let m = correlation_report(&rs).unwrap();
        assert!((m.get("Acc", "M/B").unwrap() - 1.0).abs() < 1e-12);
        assert!((m.get("Acc", "M/Sim").unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal_and_constant_columns_na() {
        let rs = vec![
            report("a", 61.0, 0.71, 33.0),
            report("b", 72.0, 0.66, 41.0),
            report("c", 68.0, 0.69, 37.0),
        ];
        let m = correlation_report(&rs).unwrap();
        for i in 0..m.labels.len() {
            assert_eq!(m.values[i][i], Some(1.0));
            for j in 0..m.labels.len() {
                match (m.values[i][j], m.values[j][i]) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                    (None, None) => {}
                    other => panic!("asymmetric entries {other:?}"),
                }
            }
        }
        // lm and len are constant across the fixture reports
        assert_eq!(m.get("LM", "Acc"), None);
        assert_eq!(m.get("Len", "B"), None);
    }
}
