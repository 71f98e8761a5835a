//! Misinformation target detection as link prediction over a knowledge graph
//! of tweets.
//!
//! The pieces, roughly in pipeline order:
//!
//! - [`corpus`]: JSONL records, validation, MinHash near-duplicate removal
//! - [`retrieval`]: BM25 inverted index and per-target candidate pooling
//! - [`mkg`]: the graph of fully connected per-target groups, bootstrapping, splits
//! - [`encoder`]: hashed text features and the learned projections
//! - [`kge`]: TransE / TransD / TransMS / TuckER / KNN scores and gradients
//! - [`trainer`]: margin-loss training with negative sampling and ADAM
//! - [`predictor`]: `All` and `Prototypical` prediction, threshold calibration
//! - [`baseline_bc`]: the pairwise binary-classification baseline
//! - [`eval`]: micro precision / recall / F1 and per-target reports
//! - [`pipeline`]: file-level stages and the end-to-end runner

pub mod baseline_bc;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod kge;
pub mod mkg;
pub mod model;
pub mod pipeline;
pub mod predictor;
pub mod retrieval;
pub mod synthetic;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
pub use kge::ModelKind;
pub use mkg::MisinfoKnowledgeGraph;
pub use model::KgeModel;
pub use predictor::{Mode, Prediction};
