//! Tokenization, vocabularies, term-frequency vectors and embedding tables.

mod embedding;
mod sparse;
mod tokenize;
mod vocab;

pub use embedding::{load_embeddings, read_embeddings, EmbeddingTable, OovPolicy};
pub use sparse::{vectorize_tf, vectorize_tf_streams, SparseVector};
pub use tokenize::{tokenize, tokenize_truncated};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// Token limit applied to claims and snippets before neural encoding.
pub const MAX_SEQ_TOKENS: usize = 64;
