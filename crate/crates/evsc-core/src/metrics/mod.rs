//! Evaluation metrics: verb-classification scores (Acc@K, Rec@5, F1@5)
//! and caption-style phrase scores (CIDEr-D with micro / per-verb /
//! per-role grouping, ROUGE-L).

mod caption;
mod text;
mod verb;

pub use caption::{cider_d, rouge_l, Grouping, RoleEvalRecord, CIDER_MAX_N, CIDER_SIGMA, ROUGE_BETA};
pub use text::{ngram_counts, tokenize};
pub use verb::{acc_at_k, f1_at_5, rec_at_5, verb_breakdown, VerbEvalRecord, VerbStats};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("metric computed over an empty record list")]
    NoRecords,
    #[error("K must be at least 1")]
    BadK,
    #[error("record {clip_id} has no ground-truth verbs")]
    EmptyGroundTruth { clip_id: String },
    #[error("record {clip_id} has no reference phrases")]
    EmptyReferences { clip_id: String },
}

pub type MetricsResult<T> = Result<T, MetricsError>;
