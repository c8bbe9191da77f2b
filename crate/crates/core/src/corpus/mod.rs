//! Case ingestion, text preprocessing, hashed TF-IDF features, temporal
//! splitting and balanced resampling.

mod balance;
mod features;
mod record;
mod split;
mod text;

pub use balance::{balanced_resample, BalancedSet};
pub use features::{vectorize, DocumentFrequency, FeatureVector, DEFAULT_DIMENSION};
pub use record::{parse_corpus, parse_corpus_reader, write_corpus, Authority, CaseRecord};
pub use split::{temporal_split, AuthoritySummary, SplitCorpus, SplitManifest};
pub use text::{head_tail_truncate, tokenize, DEFAULT_HEAD_FRACTION, DEFAULT_TRUNCATION_LIMIT};
