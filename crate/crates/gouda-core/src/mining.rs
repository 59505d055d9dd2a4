//! View-driven triplet selection and the curriculum schedule.
//!
//! Without labels, the only trustworthy supervision in a view-biased
//! embedding space is the view structure itself: a sample's nearest
//! *cross-view* neighbor is probably the same person (hard to be close
//! across a large view gap by accident), while *similar-view* samples that
//! are almost as close are probably different people pulled in by the view.
//! Each anchor therefore contributes at most one (anchor, positive,
//! negative) triplet, ranked by how confident the positive pick is.

use crate::embedding::DistanceMatrix;
use crate::error::{GoudaError, Result};
use crate::geometry::{circular_view_distance, AngleMode, ViewAngle};

/// Thresholds for the per-anchor view partition plus the triplet margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    /// Views closer than this (degrees) are "similar-view".
    pub t_similar: f64,
    /// Views farther than this (degrees) are "cross-view".
    pub t_cross: f64,
    /// Triplet margin, shared by mining and the hinge losses.
    pub margin: f64,
    pub angle_mode: AngleMode,
}

impl MiningConfig {
    pub fn new(t_similar: f64, t_cross: f64, margin: f64, angle_mode: AngleMode) -> Result<Self> {
        let cfg = MiningConfig { t_similar, t_cross, margin, angle_mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_similar > 0.0) || !self.t_similar.is_finite() {
            return Err(GoudaError::InvalidConfig(format!(
                "t_similar must be positive, got {}",
                self.t_similar
            )));
        }
        if !(self.t_cross >= self.t_similar) || !self.t_cross.is_finite() {
            return Err(GoudaError::InvalidConfig(format!(
                "need 0 < t_similar <= t_cross, got t_similar={} t_cross={}",
                self.t_similar, self.t_cross
            )));
        }
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(GoudaError::InvalidConfig(format!(
                "margin must be >= 0, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig { t_similar: 10.0, t_cross: 20.0, margin: 0.2, angle_mode: AngleMode::Full }
    }
}

/// A mined triplet. `confidence = 1 − D[anchor][positive]`, i.e. the
/// anchor–positive cosine similarity; higher means an easier triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub confidence: f64,
}

/// Easy-to-hard schedule: stage `s` trains on the top `stage_q_percent[s]` %
/// most confident valid triplets, re-mined at every stage boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumSchedule {
    /// Strictly increasing, ending at 100. A single-entry `[100]` schedule
    /// disables the curriculum.
    pub stage_q_percent: Vec<f64>,
    /// Each selected triplet appears in training this many times on average.
    pub replay_factor: usize,
    /// Triplets per optimization step.
    pub batch_triplets: usize,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            stage_q_percent: vec![10.0, 25.0, 50.0, 100.0],
            replay_factor: 10,
            batch_triplets: 32,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.stage_q_percent.is_empty() {
            return Err(GoudaError::InvalidConfig("schedule needs at least one stage".into()));
        }
        for pair in self.stage_q_percent.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(GoudaError::InvalidConfig(format!(
                    "stage percentages must be strictly increasing, got {:?}",
                    self.stage_q_percent
                )));
            }
        }
        for &q in &self.stage_q_percent {
            if !(q > 0.0 && q <= 100.0) {
                return Err(GoudaError::InvalidConfig(format!(
                    "stage percentage {q} outside (0, 100]"
                )));
            }
        }
        if *self.stage_q_percent.last().unwrap() != 100.0 {
            return Err(GoudaError::InvalidConfig(
                "last stage percentage must be 100 so every valid triplet eventually trains".into(),
            ));
        }
        if self.replay_factor < 1 {
            return Err(GoudaError::InvalidConfig("replay_factor must be >= 1".into()));
        }
        if self.batch_triplets < 1 {
            return Err(GoudaError::InvalidConfig("batch_triplets must be >= 1".into()));
        }
        Ok(())
    }
}

/// Split all other samples by view distance from the anchor: `similar` are
/// those closer than `t_similar`, `cross` those farther than `t_cross`.
/// Samples in the dead zone `[t_similar, t_cross]` land in neither set.
pub fn partition_views(
    anchor: usize,
    views: &[ViewAngle],
    cfg: &MiningConfig,
) -> (Vec<usize>, Vec<usize>) {
    let va = views[anchor];
    let mut similar = Vec::new();
    let mut cross = Vec::new();
    for (j, &vj) in views.iter().enumerate() {
        let dist = circular_view_distance(va, vj, cfg.angle_mode);
        if j != anchor && dist < cfg.t_similar {
            similar.push(j);
        }
        // the anchor itself is at distance 0 < t_cross, so never lands here
        if dist > cfg.t_cross {
            cross.push(j);
        }
    }
    (similar, cross)
}

/// All valid triplets, one per anchor that admits one, ordered by anchor.
///
/// Per anchor: the positive is the nearest cross-view sample; the negative
/// is the farthest similar-view sample still within `margin` of the
/// positive's distance; the triplet is valid only if some similar-view
/// sample lies strictly closer than the negative (otherwise the "negative"
/// is the anchor's own best similar-view match and pushing it away would be
/// wrong as often as right). Ties always resolve to the lowest index.
pub fn select_triplets(d: &DistanceMatrix, views: &[ViewAngle], cfg: &MiningConfig) -> Vec<Triplet> {
    assert_eq!(views.len(), d.n(), "one view per distance-matrix row");
    let mut out = Vec::new();
    for a in 0..d.n() {
        let (similar, cross) = partition_views(a, views, cfg);
        let Some(p) = argmin_distance(d, a, &cross) else { continue };
        let d_ap = d.get(a, p);
        let candidates: Vec<usize> =
            similar.iter().copied().filter(|&j| d.get(a, j) < d_ap + cfg.margin).collect();
        let Some(n) = argmax_distance(d, a, &candidates) else { continue };
        let d_an = d.get(a, n);
        if similar.iter().any(|&j| d.get(a, j) < d_an) {
            out.push(Triplet { anchor: a, positive: p, negative: n, confidence: 1.0 - d_ap });
        }
    }
    out
}

fn argmin_distance(d: &DistanceMatrix, a: usize, among: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &j in among {
        if best.is_none_or(|b| d.get(a, j) < d.get(a, b)) {
            best = Some(j);
        }
    }
    best
}

fn argmax_distance(d: &DistanceMatrix, a: usize, among: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &j in among {
        if best.is_none_or(|b| d.get(a, j) > d.get(a, b)) {
            best = Some(j);
        }
    }
    best
}

/// The `ceil(q% · |valid|)` most confident triplets, so any q > 0 keeps at
/// least one triplet when any exist. Equal confidences order by anchor.
pub fn top_q(valid: &[Triplet], q: f64) -> Vec<Triplet> {
    assert!(q > 0.0 && q <= 100.0, "q must be in (0, 100], got {q}");
    if valid.is_empty() {
        return Vec::new();
    }
    let mut sorted = valid.to_vec();
    sorted.sort_by(|x, y| y.confidence.total_cmp(&x.confidence).then(x.anchor.cmp(&y.anchor)));
    let keep = ((q / 100.0) * valid.len() as f64).ceil() as usize;
    sorted.truncate(keep.min(valid.len()));
    sorted
}

/// Steps for one stage: enough batches that each selected triplet is drawn
/// `replay_factor` times on average.
pub fn stage_iterations(n_selected: usize, sched: &CurriculumSchedule) -> usize {
    if n_selected == 0 {
        return 0;
    }
    (sched.replay_factor * n_selected).div_ceil(sched.batch_triplets)
}
