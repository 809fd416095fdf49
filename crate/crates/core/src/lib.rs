//! Aspect-based sentiment analysis for smartphone reviews.
//!
//! The crate covers the whole pipeline: corpus ingestion and cleaning
//! ([`corpus`]), tokenization ([`textproc`]), subword-hash embeddings
//! ([`embed`]), a small hand-differentiated layer set ([`neuralcore`]) used to
//! build a Bi-LSTM/CNN/LSTM multi-head classifier ([`models`]), classical
//! baselines ([`classicml`]), the two-task macro scoring protocol
//! ([`evaluation`]), annotator agreement ([`agreement`]) and per-product
//! aggregation for social listening ([`listening`]).

pub mod agreement;
pub mod classicml;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod evaluation;
pub mod listening;
pub mod models;
pub mod neuralcore;
pub mod textproc;

pub use corpus::{Aspect, AspectState, Comment, Dataset, LabelSet, Polarity};
pub use error::{Error, Result};
