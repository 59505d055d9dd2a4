//! Unsupervised domain adaptation for gait embeddings.
//!
//! A pre-trained gait recognizer embeds walking sequences into a metric
//! space, but on a new camera setup the embeddings cluster by *viewing
//! angle* instead of by *identity*. This crate adapts the embedding space
//! to the new domain without any identity labels:
//!
//! 1. estimate a yaw (viewing) angle for every sequence ([`geometry`]),
//! 2. mine triplets purely from view structure — the positive is the
//!    nearest *cross-view* sample, the negative a confusable *similar-view*
//!    sample ([`mining`]),
//! 3. train a linear map over the frozen embeddings with a triplet loss
//!    plus a sub-sequence consistency loss, feeding triplets easiest-first
//!    ([`loss`], [`train`]),
//! 4. stop when identity-unrelated view neighborhoods have dissolved,
//!    measured by a label-free neighborhood statistic ([`train::stopping_criterion`]).
//!
//! [`synth`] generates a controllable view-biased target domain so the
//! whole loop can be exercised and scored against ground truth ([`eval`]),
//! and [`oracle`] holds deliberately naive reference implementations used
//! to cross-check the fast paths.

pub mod adapter;
pub mod embedding;
pub mod error;
#[cfg(test)]
pub(crate) mod fixtures;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod mining;
pub mod optim;
pub mod oracle;
pub(crate) mod seeding;
pub mod synth;
pub mod train;

pub use adapter::LinearAdapter;
pub use embedding::{cosine_distance, DistanceMatrix, GaitRecord};
pub use error::{GoudaError, Result};
pub use eval::{rank1_cross_view, supervised_adapt, triplet_correctness, Rank1Report};
pub use geometry::{circular_view_distance, estimate_yaw, AngleMode, KeypointFrame, ViewAngle};
pub use mining::{select_triplets, top_q, CurriculumSchedule, MiningConfig, Triplet};
pub use synth::{generate_target_domain, SynthConfig, SynthDataset};
pub use train::{adapt, split_train_validation, stopping_criterion, AdaptOptions, TrainingTrace};
