//! Retrieval-augmented inference for flat named-entity recognition with
//! subtypes.
//!
//! A base token classifier's per-token main-label distribution is mixed with
//! a distribution voted by the `k` nearest training tokens in embedding
//! space:
//!
//! ```text
//! P_knn(v)  ∝ Σ_{n ∈ N(x), label(n) = v} exp(cos(x, key(n)) / τ)
//! P_final   = λ · P_main + (1 − λ) · P_knn
//! ```
//!
//! The argmax labels are decoded into `(start, end, main, {subtypes})`
//! entities and scored with entity-level micro P/R/F1.

pub mod corpus_io;
pub mod datastore;
pub mod decode;
pub mod error;
pub mod eval;
pub mod knn_inference;
pub mod sweep;
pub mod synthetic;
pub mod tagset;

pub use corpus_io::{
    read_corpus, read_datastore, write_corpus, write_datastore, Corpus, SentenceRecord,
};
pub use datastore::{
    build_datastore, build_datastore_with, cosine_sim, knn_search, BuildOptions, Datastore,
    Neighbor, NeighborList,
};
pub use decode::{decode_entities, EntityTuple, SentenceEntities};
pub use error::{Error, Result};
pub use eval::{micro_prf, EvalReport};
pub use knn_inference::{
    interpolate, knn_distribution, predict_baseline, predict_tokens, KnnConfig, LabelDistribution,
    TokenPrediction,
};
pub use sweep::{run_sweep, SweepGrid, SweepResult, SweepRow};
pub use tagset::{MainLabelIndex, SubLabelIndex, Tagset};
