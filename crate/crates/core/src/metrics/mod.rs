//! Automatic evaluation: style accuracy, fluency, BLEU and embedding
//! similarity plus their polarity-masked variants (MaskBLEU / MaskSim), the
//! style-content trade-off aggregate, and metric correlation reporting.

mod bleu;
mod classify;
mod embed;
mod evaluate;
mod lm;
mod report;

pub use bleu::bleu;
pub use classify::{Classifier, LexiconClassifier};
pub use embed::{cosine, Embedder, TfIdfEmbedder};
pub use evaluate::{
    evaluate, fluency, mask_bleu, mask_pivots, mask_sim, read_embedding_file, read_score_file,
    similarity, style_accuracy, ClassifierSource, EmbeddingSource, EvalInputs,
    ExternalEmbeddings, LmSource, ScalarScores,
};
pub use lm::{LanguageModel, TrigramLm};
pub use report::{
    aggregate, correlation_report, CorrelationMatrix, EvalReport, SentenceEval, REPORT_COLUMNS,
};
