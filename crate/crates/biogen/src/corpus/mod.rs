//! Corpus ingestion: tokenization, fact linearization, filtering, splitting,
//! title delexicalization, and the shared vocabulary.

mod dataset;
mod delex;
mod io;
mod record;
mod tokenize;
mod vocab;

pub use dataset::{
    compute_length_percentiles, prepare_dataset, DatasetConfig, FilterStats, PreparedDataset,
    SlotTable,
};
pub use delex::{copy_token, delexicalize_title, parse_copy_token, relexicalize};
pub use io::{normalize_date_value, read_instances, read_raw_instances, write_instances};
pub use record::{
    linearize, BiographyInstance, Fact, FactRecord, Slot, SlotSchema, DEFAULT_SLOTS, TITLE_SLOT,
};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{Vocabulary, EOS, GO, PAD, UNK};
