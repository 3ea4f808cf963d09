//! Zero-shot one-class out-of-distribution scoring over text-image embeddings.
//!
//! The crate is organised bottom-up:
//!
//! - [`embedding`]: unit vectors, cosine logits.
//! - [`oceb`]: the OCEB v1 embedding interchange format.
//! - [`labelset`]: in-domain / OOD label sets, prompt ensembles and split tags.
//! - [`scoring`]: the five logit/softmax OOD scores and the log-decomposition check.
//! - [`mixture`]: per-box scoring and the max-minus-min mixture score.
//! - [`eval`]: AUROC and split-conditioned evaluation reports.
//! - [`synth`]: seeded synthetic embeddings and box corpora.
//! - [`cli`]: the `oca` command-line front end.
//!
//! Every score is oriented so that a higher value means "more out-of-distribution".

pub mod cli;
pub mod embedding;
pub mod eval;
pub mod fmt;
pub mod labelset;
pub mod mixture;
pub mod oceb;
pub mod scoring;
pub mod synth;

pub use embedding::{EmbeddingError, EmbeddingVector, LogitRow};
pub use eval::{auroc, EvalError, EvalReport, EvalTask};
pub use labelset::{ClassSpec, LabelSet, LabelSetError, SplitSpec, Tier};
pub use mixture::{BoxScoreSet, MixtureError, MixtureResult};
pub use oceb::{EmbeddingStore, OcebError};
pub use scoring::{JointLogits, Method, ScoreConfig, ScoreError, ScoredRecord};

/// Version of the OCEB binary interchange format written by this crate.
pub const FORMAT_VERSION: u32 = 1;
