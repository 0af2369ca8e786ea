//! Dataset ingestion, tokenization, vocabulary and extended-vocabulary
//! encoding, and embedding loading.

pub mod dataset;
pub mod embeddings;
pub mod tokenize;
pub mod vocab;

pub use dataset::{load_dataset, read_dataset, Candidate, QAExample, TruncationLimits};
pub use embeddings::{load_embeddings, load_embeddings_file, random_embeddings, EmbeddingMatrix};
pub use tokenize::{tokenize, truncate};
pub use vocab::{
    decode_extended, encode_extended, encode_target, ExtendedEncoding, Vocabulary, PAD, START,
    STOP, UNK,
};
