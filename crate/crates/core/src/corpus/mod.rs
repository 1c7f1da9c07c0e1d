//! Reviews, segments, corpus files, vocabularies, embeddings and the
//! synthetic bag generator.

mod embeddings;
mod jsonl;
mod model;
mod segmenter;
mod stats;
mod synthetic;
mod vocab;

pub use embeddings::{load_embeddings, parse_embeddings, random_embeddings, EmbeddingTable, OOV_RANGE};
pub use jsonl::{corpus_to_jsonl, load_corpus, parse_corpus, save_corpus, LoadOptions};
pub use model::{Corpus, Review, Segment, SegmentLabelSpace, Split, NEGATIVE, NEUTRAL, POSITIVE};
pub use segmenter::{segment_sentences, tokenize};
pub use stats::{corpus_stats, ClassStats, CorpusStats};
pub use synthetic::{generate_synthetic, SyntheticCorpus, SyntheticSpec};
pub use vocab::{IndexedReview, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
