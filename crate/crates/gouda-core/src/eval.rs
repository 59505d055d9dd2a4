//! Evaluation: rank-1 cross-view identification, label-based triplet
//! correctness, a supervised skyline, and view-neighborhood diagnostics.
//!
//! Everything here consumes ground-truth labels and therefore stays outside
//! the adaptation path proper (the one exception: `oracle_filter` can be
//! spliced into training to measure how much label-perfect mining would buy).

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::LinearAdapter;
use crate::embedding::{cosine_distance, labels_of, views_of, GaitRecord};
use crate::error::{GoudaError, Result};
use crate::geometry::{AngleMode, ViewAngle};
use crate::loss::{loss_and_gradient, LossWeights, TripletQuad};
use crate::mining::Triplet;
use crate::optim::AdamState;
use crate::seeding::{stream_seed, TAG_SUPERVISED};
use crate::train::{mean_count, similar_neighbor_counts, OptimConfig};

/// Accuracy of one (probe view, gallery view) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAccuracy {
    pub probe_view: ViewAngle,
    pub gallery_view: ViewAngle,
    /// Percent of probes whose nearest gallery entry shares their identity.
    pub accuracy: f64,
    pub n_probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank1Report {
    /// Unweighted mean accuracy over cells with probe view != gallery view.
    pub overall_cross_view: f64,
    /// Unweighted mean over the diagonal cells, if any exist. Diagnostic
    /// only; never enters the headline number.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identical_view_mean: Option<f64>,
    pub per_pair: Vec<PairAccuracy>,
    pub n_gallery: usize,
    pub n_probes: usize,
}

/// Rank-1 identification over every (probe view, gallery view) cell.
///
/// The gallery holds the first record of each (identity, view) pair in input
/// order; every remaining record probes each gallery view separately. Cells
/// with no probes or no gallery entries are absent, not zero.
pub fn rank1_cross_view(
    records: &[GaitRecord],
    adapter: Option<&LinearAdapter>,
) -> Result<Rank1Report> {
    if records.is_empty() {
        return Err(GoudaError::EmptyInput("evaluation records"));
    }
    for r in records {
        if r.identity.is_none() {
            return Err(GoudaError::MissingLabel(r.record_id.clone()));
        }
    }
    {
        let mut views: Vec<u64> = records.iter().map(|r| r.view.degrees().to_bits()).collect();
        views.sort_unstable();
        views.dedup();
        if views.len() < 2 {
            return Err(GoudaError::InvalidConfig(
                "rank-1 cross-view protocol needs >= 2 distinct views".into(),
            ));
        }
    }
    let embeddings: Vec<Vec<f64>> = match adapter {
        Some(a) => a.apply(&records.iter().map(|r| r.embedding.as_slice()).collect::<Vec<_>>())?,
        None => records.iter().map(|r| r.embedding.clone()).collect(),
    };

    // First record per (identity, view) is gallery; the rest probe.
    let mut gallery: Vec<usize> = Vec::new();
    let mut probes: Vec<usize> = Vec::new();
    let mut seen: std::collections::HashSet<(String, u64)> = std::collections::HashSet::new();
    for (i, r) in records.iter().enumerate() {
        let key = (r.identity.clone().unwrap(), r.view.degrees().to_bits());
        if seen.insert(key) {
            gallery.push(i);
        } else {
            probes.push(i);
        }
    }

    let mut gallery_views: Vec<u64> =
        gallery.iter().map(|&g| records[g].view.degrees().to_bits()).collect();
    gallery_views.sort_unstable_by(|a, b| f64::from_bits(*a).total_cmp(&f64::from_bits(*b)));
    gallery_views.dedup();

    // cell (probe view, gallery view) -> (correct, total)
    let mut cells: std::collections::BTreeMap<(u64, u64), (usize, usize)> =
        std::collections::BTreeMap::new();
    for &p in &probes {
        let pv = records[p].view.degrees().to_bits();
        for &gv in &gallery_views {
            let mut best: Option<(f64, usize)> = None;
            for &g in &gallery {
                if records[g].view.degrees().to_bits() != gv {
                    continue;
                }
                let d = cosine_distance(&embeddings[p], &embeddings[g])?;
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, g));
                }
            }
            let (_, g) = best.expect("gallery view came from the gallery");
            let correct = records[g].identity == records[p].identity;
            let cell = cells.entry((pv, gv)).or_insert((0, 0));
            cell.0 += correct as usize;
            cell.1 += 1;
        }
    }

    let mut per_pair = Vec::with_capacity(cells.len());
    let (mut cross_sum, mut cross_n) = (0.0, 0usize);
    let (mut same_sum, mut same_n) = (0.0, 0usize);
    for (&(pv, gv), &(correct, total)) in &cells {
        let accuracy = 100.0 * correct as f64 / total as f64;
        per_pair.push(PairAccuracy {
            probe_view: ViewAngle::new(f64::from_bits(pv)),
            gallery_view: ViewAngle::new(f64::from_bits(gv)),
            accuracy,
            n_probes: total,
        });
        if pv == gv {
            same_sum += accuracy;
            same_n += 1;
        } else {
            cross_sum += accuracy;
            cross_n += 1;
        }
    }
    per_pair.sort_by(|a, b| {
        a.probe_view
            .degrees()
            .total_cmp(&b.probe_view.degrees())
            .then(a.gallery_view.degrees().total_cmp(&b.gallery_view.degrees()))
    });
    if cross_n == 0 {
        return Err(GoudaError::EmptyInput("cross-view probe/gallery cells"));
    }
    Ok(Rank1Report {
        overall_cross_view: cross_sum / cross_n as f64,
        identical_view_mean: (same_n > 0).then(|| same_sum / same_n as f64),
        per_pair,
        n_gallery: gallery.len(),
        n_probes: probes.len(),
    })
}

/// Percent of triplets whose parts agree with the hidden labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessRates {
    /// Positive shares the anchor's identity AND the negative does not.
    pub triplet_rate: f64,
    /// Positive shares the anchor's identity.
    pub positive_rate: f64,
    /// Negative differs from the anchor's identity.
    pub negative_rate: f64,
}

/// Overall rates plus the per-curriculum-stage breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessReport {
    pub triplet_rate: f64,
    pub positive_rate: f64,
    pub negative_rate: f64,
    /// One entry per stage; `None` where a stage selected nothing.
    pub per_stage: Vec<Option<CorrectnessRates>>,
}

fn label_of<'a>(labels: &'a [Option<String>], i: usize) -> Result<&'a str> {
    labels
        .get(i)
        .and_then(|l| l.as_deref())
        .ok_or_else(|| GoudaError::MissingLabel(format!("record index {i}")))
}

/// Score triplets against labels. `None` when there are no triplets — a rate
/// over nothing would be noise, not a number.
pub fn triplet_correctness(
    triplets: &[Triplet],
    labels: &[Option<String>],
) -> Result<Option<CorrectnessRates>> {
    if triplets.is_empty() {
        return Ok(None);
    }
    let (mut pos_ok, mut neg_ok, mut both_ok) = (0usize, 0usize, 0usize);
    for t in triplets {
        let a = label_of(labels, t.anchor)?;
        let p = label_of(labels, t.positive)?;
        let n = label_of(labels, t.negative)?;
        let pos = p == a;
        let neg = n != a;
        pos_ok += pos as usize;
        neg_ok += neg as usize;
        both_ok += (pos && neg) as usize;
    }
    let pct = |c: usize| 100.0 * c as f64 / triplets.len() as f64;
    Ok(Some(CorrectnessRates {
        triplet_rate: pct(both_ok),
        positive_rate: pct(pos_ok),
        negative_rate: pct(neg_ok),
    }))
}

/// [`triplet_correctness`] for each curriculum stage's selected pool.
pub fn staged_triplet_correctness(
    stage_pools: &[Vec<Triplet>],
    labels: &[Option<String>],
) -> Result<Vec<Option<CorrectnessRates>>> {
    stage_pools.iter().map(|ts| triplet_correctness(ts, labels)).collect()
}

/// Overall + per-stage correctness; `None` if every stage is empty.
pub fn correctness_report(
    stage_pools: &[Vec<Triplet>],
    labels: &[Option<String>],
) -> Result<Option<CorrectnessReport>> {
    let pooled: Vec<Triplet> = stage_pools.iter().flatten().copied().collect();
    let Some(overall) = triplet_correctness(&pooled, labels)? else {
        return Ok(None);
    };
    Ok(Some(CorrectnessReport {
        triplet_rate: overall.triplet_rate,
        positive_rate: overall.positive_rate,
        negative_rate: overall.negative_rate,
        per_stage: staged_triplet_correctness(stage_pools, labels)?,
    }))
}

/// Keep only label-correct triplets (positive matches anchor, negative
/// doesn't), preserving order. Upper-bounds what perfect mining could do.
pub fn oracle_filter(triplets: &[Triplet], labels: &[Option<String>]) -> Result<Vec<Triplet>> {
    let mut kept = Vec::new();
    for t in triplets {
        let a = label_of(labels, t.anchor)?;
        let p = label_of(labels, t.positive)?;
        let n = label_of(labels, t.negative)?;
        if p == a && n != a {
            kept.push(*t);
        }
    }
    Ok(kept)
}

/// Skyline: train the adapter on ground-truth identity triplets and return
/// the final weights (with labels in hand there is no stopping problem).
///
/// Anchors come from identities with at least two records; the positive is a
/// different same-identity record, the negative a different identity, all
/// sampled uniformly from a seeded stream.
pub fn supervised_adapt(
    records: &[GaitRecord],
    optim: &OptimConfig,
    margin: f64,
    batch_triplets: usize,
    iterations: usize,
    seed: u64,
) -> Result<LinearAdapter> {
    optim.validate()?;
    if records.is_empty() {
        return Err(GoudaError::EmptyInput("supervised records"));
    }
    if batch_triplets == 0 {
        return Err(GoudaError::InvalidConfig("batch_triplets must be >= 1".into()));
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(GoudaError::InvalidConfig(format!("margin must be >= 0, got {margin}")));
    }
    let labels = labels_of(records);
    for (r, l) in records.iter().zip(&labels) {
        if l.is_none() {
            return Err(GoudaError::MissingLabel(r.record_id.clone()));
        }
    }

    // identity -> record indices, in first-appearance order
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        let id = l.as_deref().unwrap();
        match groups.iter_mut().find(|(g, _)| *g == id) {
            Some((_, v)) => v.push(i),
            None => groups.push((id, vec![i])),
        }
    }
    let anchor_groups: Vec<usize> =
        (0..groups.len()).filter(|&g| groups[g].1.len() >= 2).collect();
    if groups.len() < 2 || anchor_groups.is_empty() {
        return Err(GoudaError::TooFewIdentities);
    }

    let dim = records[0].embedding.len();
    let mut adapter = LinearAdapter::identity(dim);
    let mut adam = AdamState::new(dim * dim, optim.learning_rate, optim.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, TAG_SUPERVISED, 0));
    let weights = LossWeights { gouda: 1.0, ssl: 0.0 };

    for _ in 0..iterations {
        let mut batch = Vec::with_capacity(batch_triplets);
        for _ in 0..batch_triplets {
            let g = anchor_groups[rng.random_range(0..anchor_groups.len())];
            let members = &groups[g].1;
            let a = members[rng.random_range(0..members.len())];
            let p = loop {
                let cand = members[rng.random_range(0..members.len())];
                if cand != a {
                    break cand;
                }
            };
            let n = loop {
                let cand = rng.random_range(0..records.len());
                if labels[cand] != labels[a] {
                    break cand;
                }
            };
            batch.push(TripletQuad {
                anchor: records[a].embedding.clone(),
                anchor_aug: records[a].embedding.clone(), // unused: ssl weight is 0
                positive: records[p].embedding.clone(),
                negative: records[n].embedding.clone(),
            });
        }
        let (_, grad) = loss_and_gradient(&batch, &adapter, margin, weights)?;
        adam.step(adapter.weights_mut(), &grad)?;
    }
    Ok(adapter)
}

/// Where positives come from, given where anchors look from.
///
/// Row-normalized histogram over view bins of width `bin_width` covering
/// [0, 360): `rows[r]` holds the fraction of triplets whose anchor falls in
/// bin `anchor_bin` that picked a positive in each view bin. Anchor bins
/// with no triplets are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewConfusion {
    pub bin_width: f64,
    pub n_bins: usize,
    pub rows: Vec<ConfusionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub anchor_bin: usize,
    /// Length `n_bins`; sums to 1.
    pub fractions: Vec<f64>,
}

impl ViewConfusion {
    pub fn bin_start(&self, i: usize) -> f64 {
        i as f64 * self.bin_width
    }
}

pub fn positive_view_confusion(
    triplets: &[Triplet],
    views: &[ViewAngle],
    bin_width: f64,
) -> Result<ViewConfusion> {
    if !(bin_width > 0.0 && bin_width <= 360.0) || !bin_width.is_finite() {
        return Err(GoudaError::InvalidConfig(format!(
            "bin_width must be in (0, 360], got {bin_width}"
        )));
    }
    let n_bins = (360.0 / bin_width).ceil() as usize;
    let bin_of = |v: ViewAngle| ((v.degrees() / bin_width) as usize).min(n_bins - 1);
    let mut counts: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for t in triplets {
        let row = counts.entry(bin_of(views[t.anchor])).or_insert_with(|| vec![0; n_bins]);
        row[bin_of(views[t.positive])] += 1;
    }
    let rows = counts
        .into_iter()
        .map(|(anchor_bin, row)| {
            let total: usize = row.iter().sum();
            ConfusionRow {
                anchor_bin,
                fractions: row.into_iter().map(|c| c as f64 / total as f64).collect(),
            }
        })
        .collect();
    Ok(ViewConfusion { bin_width, n_bins, rows })
}

/// Distribution of similar-view counts within each sample's K neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodHistogram {
    pub k: usize,
    /// `counts[c]` = number of samples with exactly `c` similar-view
    /// neighbors among their K nearest; length K+1.
    pub counts: Vec<usize>,
    /// Mean of the per-sample counts — identical to the stopping criterion
    /// on the same inputs.
    pub sc: f64,
}

pub fn view_neighborhood_histogram(
    records: &[GaitRecord],
    adapter: Option<&LinearAdapter>,
    k: usize,
    t_similar: f64,
    mode: AngleMode,
) -> Result<NeighborhoodHistogram> {
    let embeddings: Vec<Vec<f64>> = match adapter {
        Some(a) => a.apply(&records.iter().map(|r| r.embedding.as_slice()).collect::<Vec<_>>())?,
        None => records.iter().map(|r| r.embedding.clone()).collect(),
    };
    let views = views_of(records);
    let per_sample = similar_neighbor_counts(&embeddings, &views, k, t_similar, mode)?;
    let mut counts = vec![0usize; k + 1];
    for &c in &per_sample {
        counts[c] += 1;
    }
    Ok(NeighborhoodHistogram { k, counts, sc: mean_count(&per_sample) })
}

/// Smallest nonzero circular distance between views present in the data —
/// the natural confusion-histogram bin width. `None` if all views coincide.
pub fn view_spacing(views: &[ViewAngle], mode: AngleMode) -> Option<f64> {
    let mut distinct: Vec<f64> = views.iter().map(|v| v.degrees()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut min: Option<f64> = None;
    for i in 0..distinct.len() {
        for j in (i + 1)..distinct.len() {
            let d = crate::geometry::circular_view_distance(
                ViewAngle::new(distinct[i]),
                ViewAngle::new(distinct[j]),
                mode,
            );
            if d > 0.0 && min.is_none_or(|m| d < m) {
                min = Some(d);
            }
        }
    }
    min
}
