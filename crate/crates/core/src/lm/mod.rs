//! N-gram language models and per-word surprisal.
//!
//! Surprisal is always `-ln p` in nats. Where the literature speaks of a
//! word's "perplexity", this crate uses its surprisal; the two differ only by
//! a monotone transform.

pub mod external;
pub mod ngram;

pub use external::{
    import_external_scores, read_external_scores, ExternalScoreRecord, ExternalScoreTable,
};
pub use ngram::{
    pos_surprisal_stats, title_surprisal_stats, train_ngram, NGramConfig, NGramModel,
    SurprisalStats, END, LM_FORMAT, UNK,
};
