//! Everything upstream of the encoders: dataset parsing, tokenization, query
//! splitting, exact-match mention extraction and frozen embeddings.

mod cache;
mod embedding;
pub mod examples;
mod mentions;
mod sample;
mod tokenize;

pub use cache::{read_cache, write_cache, FollowType, PreparedSample, CACHE_FORMAT, CACHE_SCHEMA_VERSION};
pub use embedding::{embed, EmbeddingProvider};
pub use mentions::{extract_mentions, mention_matches, Mention, MentionSource};
pub use sample::{
    parse_dataset, parse_dataset_with, query_tokens, serialize_dataset, split_query, split_query_with,
    QuerySample, RawRecord,
};
pub use tokenize::{tokenize, SimpleTokenizer, Tokenizer};
