//! Ranking metrics (MAP/MRR/P@1, by-length accuracy) and ROUGE.

pub mod ranking;
pub mod rouge;

pub use ranking::{
    accuracy_by_length, rank_metrics, LengthBucket, RankReport, RankedItem, RankedList,
    DEFAULT_LENGTH_EDGES,
};
pub use rouge::{rouge, rouge_corpus, RougeReport, RougeScore, RougeVariant};
