//! The curriculum training loop and its label-free stopping criterion.
//!
//! No target labels means no validation accuracy, so training stops on a
//! proxy: for each held-out sample, count how many of its K nearest
//! neighbors are *similar-view* samples. A view-biased space scores near K;
//! a space organized by identity scores near the chance rate. The
//! checkpoint minimizing this count is kept.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::LinearAdapter;
use crate::embedding::{labels_of, views_of, DistanceMatrix, GaitRecord};
use crate::error::{GoudaError, Result};
use crate::eval;
use crate::geometry::{circular_view_distance, AngleMode, ViewAngle};
use crate::loss::{loss_and_gradient, LossWeights, TripletQuad};
use crate::mining::{select_triplets, stage_iterations, top_q, CurriculumSchedule, MiningConfig, Triplet};
use crate::optim::AdamState;
use crate::seeding::{stream_seed, TAG_TRAIN};
use crate::synth::augment;

/// Stopping-criterion knobs: neighborhood size and checkpoint cadence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScConfig {
    pub k: usize,
    pub checkpoint_every: usize,
}

impl Default for ScConfig {
    fn default() -> Self {
        ScConfig { k: 5, checkpoint_every: 200 }
    }
}

impl ScConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(GoudaError::InvalidConfig("sc k must be >= 1".into()));
        }
        if self.checkpoint_every < 1 {
            return Err(GoudaError::InvalidConfig("checkpoint_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub loss_weights: LossWeights,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { learning_rate: 1e-5, weight_decay: 5e-4, loss_weights: LossWeights::default() }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(GoudaError::InvalidConfig(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(GoudaError::InvalidConfig(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        self.loss_weights.validate()
    }
}

/// Everything [`adapt`] needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOptions {
    pub mining: MiningConfig,
    pub schedule: CurriculumSchedule,
    pub optim: OptimConfig,
    pub sc: ScConfig,
    /// Keep only label-correct triplets after mining (upper-bound baseline).
    pub oracle_filter: bool,
    pub seed: u64,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        AdaptOptions {
            mining: MiningConfig::default(),
            schedule: CurriculumSchedule::default(),
            optim: OptimConfig::default(),
            sc: ScConfig::default(),
            oracle_filter: false,
            seed: 0,
        }
    }
}

/// An adapter snapshot with its stopping-criterion score.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub adapter: LinearAdapter,
    pub sc: f64,
    pub iteration: usize,
    pub stage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub q: f64,
    pub n_valid: usize,
    pub n_selected: usize,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct_triplet_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTrace {
    pub iter: usize,
    pub stage: usize,
    pub sc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChosenTrace {
    pub iter: usize,
    pub sc: f64,
}

/// Full record of one adaptation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub stages: Vec<StageTrace>,
    pub loss: Vec<f64>,
    pub checkpoints: Vec<CheckpointTrace>,
    pub chosen: ChosenTrace,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    /// The triplets each stage trained on (train-set indices), for the
    /// analysis dump; not part of the serialized trace.
    #[serde(skip)]
    pub stage_triplets: Vec<Vec<Triplet>>,
}

/// Per-record count of similar-view samples among the K nearest neighbors.
pub(crate) fn similar_neighbor_counts(
    embeddings: &[Vec<f64>],
    views: &[ViewAngle],
    k: usize,
    t_similar: f64,
    mode: AngleMode,
) -> Result<Vec<usize>> {
    assert_eq!(embeddings.len(), views.len(), "one view per embedding");
    let d = DistanceMatrix::from_embeddings(embeddings)?;
    let mut counts = Vec::with_capacity(embeddings.len());
    for a in 0..embeddings.len() {
        let neighbors = d.knn(a, k)?;
        let c = neighbors
            .into_iter()
            .filter(|&i| circular_view_distance(views[a], views[i], mode) < t_similar)
            .count();
        counts.push(c);
    }
    Ok(counts)
}

/// Mean over samples of the similar-view neighbor count; lives in `[0, K]`.
pub fn stopping_criterion(
    embeddings: &[Vec<f64>],
    views: &[ViewAngle],
    k: usize,
    t_similar: f64,
    mode: AngleMode,
) -> Result<f64> {
    let counts = similar_neighbor_counts(embeddings, views, k, t_similar, mode)?;
    Ok(mean_count(&counts))
}

/// Shared by [`stopping_criterion`] and the neighborhood histogram so both
/// report bit-identical values.
pub(crate) fn mean_count(counts: &[usize]) -> f64 {
    counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64
}

/// Split records into (train, validation) index sets: the last 10% of
/// identities when labels exist, else the last 10% of records. At least one
/// record (or identity) always lands in validation, and the identity split
/// falls back to the record split rather than hand *everything* to
/// validation when only one identity exists.
pub fn split_train_validation(records: &[GaitRecord]) -> (Vec<usize>, Vec<usize>) {
    if records.len() >= 2 && records.iter().all(|r| r.identity.is_some()) {
        let mut identities: Vec<&str> = Vec::new();
        for r in records {
            let id = r.identity.as_deref().unwrap();
            if !identities.contains(&id) {
                identities.push(id);
            }
        }
        if identities.len() >= 2 {
            let n_val_ids = (identities.len() / 10).max(1);
            let val_ids: std::collections::HashSet<&str> =
                identities[identities.len() - n_val_ids..].iter().copied().collect();
            let (mut train, mut val) = (Vec::new(), Vec::new());
            for (i, r) in records.iter().enumerate() {
                if val_ids.contains(r.identity.as_deref().unwrap()) {
                    val.push(i);
                } else {
                    train.push(i);
                }
            }
            return (train, val);
        }
    }
    let n_val = (records.len() / 10).max(1).min(records.len());
    let cut = records.len() - n_val;
    ((0..cut).collect(), (cut..records.len()).collect())
}

/// Train the adapter over the curriculum and return the checkpoint with the
/// lowest stopping criterion (earliest on ties) plus the full trace.
///
/// Stage loop: re-mine triplets on the *current* adapter's distances, keep
/// the top q%, then run `stage_iterations` batches sampled uniformly with
/// replacement. Each batch element re-augments its anchor's frames into the
/// (a, ã) pair. Checkpoints happen every `checkpoint_every` iterations, at
/// iteration 0, and at every stage boundary.
pub fn adapt(
    train: &[GaitRecord],
    validation: &[GaitRecord],
    opts: &AdaptOptions,
) -> Result<(LinearAdapter, TrainingTrace)> {
    opts.mining.validate()?;
    opts.schedule.validate()?;
    opts.optim.validate()?;
    opts.sc.validate()?;
    if train.is_empty() {
        return Err(GoudaError::EmptyInput("train records"));
    }
    if validation.is_empty() {
        return Err(GoudaError::EmptyInput("validation records"));
    }
    let dim = train[0].embedding.len();
    for r in train.iter().chain(validation) {
        if r.embedding.len() != dim {
            return Err(GoudaError::DimensionMismatch { expected: dim, got: r.embedding.len() });
        }
    }
    if opts.sc.k > validation.len() - 1 {
        return Err(GoudaError::KTooLarge { k: opts.sc.k, available: validation.len() - 1 });
    }

    let train_views = views_of(train);
    let val_views = views_of(validation);
    let val_embeddings: Vec<&[f64]> =
        validation.iter().map(|r| r.embedding.as_slice()).collect();
    let train_embeddings: Vec<&[f64]> = train.iter().map(|r| r.embedding.as_slice()).collect();
    let labels = labels_of(train);
    let have_labels = labels.iter().all(|l| l.is_some());
    if opts.oracle_filter && !have_labels {
        let missing = train.iter().find(|r| r.identity.is_none()).unwrap();
        return Err(GoudaError::MissingLabel(missing.record_id.clone()));
    }

    let mut adapter = LinearAdapter::identity(dim);
    let mut adam = AdamState::new(dim * dim, opts.optim.learning_rate, opts.optim.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(opts.seed, TAG_TRAIN, 0));

    let mut trace = TrainingTrace {
        stages: Vec::new(),
        loss: Vec::new(),
        checkpoints: Vec::new(),
        chosen: ChosenTrace { iter: 0, sc: f64::NAN },
        warnings: Vec::new(),
        stage_triplets: Vec::new(),
    };
    let mut checkpoints: Vec<Checkpoint> = Vec::new();

    let record_checkpoint = |adapter: &LinearAdapter,
                                 iteration: usize,
                                 stage: usize,
                                 checkpoints: &mut Vec<Checkpoint>,
                                 trace: &mut TrainingTrace|
     -> Result<()> {
        if checkpoints.last().is_some_and(|c| c.iteration == iteration) {
            return Ok(()); // stage boundary coinciding with a cadence checkpoint
        }
        let adapted = adapter.apply(&val_embeddings)?;
        let sc = stopping_criterion(
            &adapted,
            &val_views,
            opts.sc.k,
            opts.mining.t_similar,
            opts.mining.angle_mode,
        )?;
        checkpoints.push(Checkpoint { adapter: adapter.clone(), sc, iteration, stage });
        trace.checkpoints.push(CheckpointTrace { iter: iteration, stage, sc });
        Ok(())
    };

    let mut iteration = 0usize;
    record_checkpoint(&adapter, 0, 0, &mut checkpoints, &mut trace)?;

    for (stage_idx, &q) in opts.schedule.stage_q_percent.iter().enumerate() {
        let stage = stage_idx + 1;
        let adapted_train = adapter.apply(&train_embeddings)?;
        let dm = DistanceMatrix::from_embeddings(&adapted_train)?;
        let valid = select_triplets(&dm, &train_views, &opts.mining);
        let n_valid = valid.len();
        // The iteration budget always follows the unfiltered selection, so
        // the oracle ablation changes triplet quality, never compute.
        let budget = ((q / 100.0) * n_valid as f64).ceil() as usize;
        let pool = if opts.oracle_filter { eval::oracle_filter(&valid, &labels)? } else { valid };

        if pool.is_empty() {
            if stage == 1 {
                return Err(GoudaError::NoValidTriplets {
                    t_similar: opts.mining.t_similar,
                    t_cross: opts.mining.t_cross,
                });
            }
            trace.warnings.push(format!("stage {stage}: no valid triplets; stage skipped"));
            trace.stages.push(StageTrace {
                q,
                n_valid,
                n_selected: 0,
                iterations: 0,
                correct_triplet_rate: None,
            });
            trace.stage_triplets.push(Vec::new());
            record_checkpoint(&adapter, iteration, stage, &mut checkpoints, &mut trace)?;
            continue;
        }

        let selected = top_q(&pool, q);
        let n_iterations = stage_iterations(budget, &opts.schedule);
        let correct_triplet_rate = if have_labels {
            eval::triplet_correctness(&selected, &labels)?.map(|r| r.triplet_rate)
        } else {
            None
        };

        for _ in 0..n_iterations {
            let mut batch = Vec::with_capacity(opts.schedule.batch_triplets);
            for _ in 0..opts.schedule.batch_triplets {
                let t = selected[rng.random_range(0..selected.len())];
                // Anchors train on re-augmented sub-sequence windows whenever
                // frames exist; embeddings-only data is fine as long as the
                // consistency term (which needs a distinct ã) is off.
                let (anchor, anchor_aug) =
                    if opts.optim.loss_weights.ssl == 0.0 && train[t.anchor].frames.is_none() {
                        (train[t.anchor].embedding.clone(), train[t.anchor].embedding.clone())
                    } else {
                        augment(&train[t.anchor], &mut rng)?
                    };
                batch.push(TripletQuad {
                    anchor,
                    anchor_aug,
                    positive: train[t.positive].embedding.clone(),
                    negative: train[t.negative].embedding.clone(),
                });
            }
            let (loss, grad) =
                loss_and_gradient(&batch, &adapter, opts.mining.margin, opts.optim.loss_weights)?;
            adam.step(adapter.weights_mut(), &grad)?;
            iteration += 1;
            trace.loss.push(loss);
            if iteration % opts.sc.checkpoint_every == 0 {
                record_checkpoint(&adapter, iteration, stage, &mut checkpoints, &mut trace)?;
            }
        }

        trace.stages.push(StageTrace {
            q,
            n_valid,
            n_selected: selected.len(),
            iterations: n_iterations,
            correct_triplet_rate,
        });
        trace.stage_triplets.push(selected);
        record_checkpoint(&adapter, iteration, stage, &mut checkpoints, &mut trace)?;
    }

    let best = checkpoints
        .iter()
        .min_by(|a, b| a.sc.total_cmp(&b.sc).then(a.iteration.cmp(&b.iteration)))
        .expect("at least the initial checkpoint exists");
    trace.chosen = ChosenTrace { iter: best.iteration, sc: best.sc };
    Ok((best.adapter.clone(), trace))
}
