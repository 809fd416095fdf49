//! Corpus data model, CSV ingestion, cleaning, splitting and statistics.

mod dataset;
mod label;
pub mod synthetic;

pub(crate) use dataset::raw_from_record;
pub use dataset::{
    clean_corpus, clean_corpus_with_exclusions, corpus_stats, format_timestamp, load_csv, load_exclusions,
    parse_timestamp, save_csv, split_dataset, AspectCounts, Comment, CorpusStats, CsvSchema, Dataset, RawComment,
    Rejection, RejectionLog, Split, SplitRatios, MAX_COMMENT_TOKENS,
};
pub use label::{Aspect, AspectState, LabelSet, Polarity};
