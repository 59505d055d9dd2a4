//! Triplet hinge losses over adapted embeddings, and their exact gradient
//! with respect to the adapter weights.
//!
//! Two hinges share each batch quadruple (a, ã, p, n):
//!   view term      [d(Wa, Wp) − d(Wa, Wn) + m]₊   — pull the mined positive in,
//!   consistency    [d(Wa, Wã) − d(Wa, Wn) + m]₊   — keep sub-sequences of the
//!                                                    same walk together,
//! summed over the batch and combined with configurable weights (both 1 by
//! default; zeroing one gives the single-loss ablations).

use crate::adapter::LinearAdapter;
use crate::error::{GoudaError, Result};

/// One training quadruple. `anchor` and `anchor_aug` are two sub-sequence
/// augmentations of the same walk; `positive`/`negative` are mined record
/// embeddings. All vectors are *unadapted*; the loss maps them through `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletQuad {
    pub anchor: Vec<f64>,
    pub anchor_aug: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub gouda: f64,
    pub ssl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { gouda: 1.0, ssl: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.gouda >= 0.0) || !self.gouda.is_finite() || !(self.ssl >= 0.0) || !self.ssl.is_finite()
        {
            return Err(GoudaError::InvalidConfig(format!(
                "loss weights must be finite and >= 0, got gouda={} ssl={}",
                self.gouda, self.ssl
            )));
        }
        Ok(())
    }
}

/// A vector mapped through the adapter, with its norm cached.
struct Mapped {
    v: Vec<f64>,
    norm: f64,
}

fn map_checked(adapter: &LinearAdapter, e: &[f64], index: usize) -> Result<Mapped> {
    let v = adapter.apply_vec(e)?;
    let norm_sq: f64 = v.iter().map(|x| x * x).sum();
    if !(norm_sq > f64::MIN_POSITIVE) {
        return Err(GoudaError::CollapsedEmbedding { index });
    }
    Ok(Mapped { v, norm: norm_sq.sqrt() })
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Cosine distance on mapped vectors. Deliberately unclamped: a clamp would
/// flatten the loss surface at numerically parallel pairs and silently
/// disagree with the analytic gradient; the hinge floors the value anyway.
fn cos_dist(u: &Mapped, v: &Mapped) -> f64 {
    1.0 - dot(&u.v, &v.v) / (u.norm * v.norm)
}

/// Gradients of `cos_dist(u, v)` with respect to `u.v` and `v.v`.
fn cos_dist_grads(u: &Mapped, v: &Mapped) -> (Vec<f64>, Vec<f64>) {
    let s = dot(&u.v, &v.v);
    let inv = 1.0 / (u.norm * v.norm);
    let cu = s / (u.norm * u.norm); // d/du = (s/nu²)·u·inv − v·inv
    let cv = s / (v.norm * v.norm);
    let gu = u.v.iter().zip(&v.v).map(|(ui, vi)| (cu * ui - vi) * inv).collect();
    let gv = v.v.iter().zip(&u.v).map(|(vi, ui)| (cv * vi - ui) * inv).collect();
    (gu, gv)
}

enum SecondSlot {
    Positive,
    Augmented,
}

/// Σ over the batch of [d(Wa, Wx) − d(Wa, Wn) + m]₊ where x is the positive
/// or the augmented anchor.
fn hinge_sum(
    batch: &[TripletQuad],
    adapter: &LinearAdapter,
    margin: f64,
    slot: SecondSlot,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, quad) in batch.iter().enumerate() {
        let a = map_checked(adapter, &quad.anchor, i)?;
        let x = match slot {
            SecondSlot::Positive => map_checked(adapter, &quad.positive, i)?,
            SecondSlot::Augmented => map_checked(adapter, &quad.anchor_aug, i)?,
        };
        let n = map_checked(adapter, &quad.negative, i)?;
        total += (cos_dist(&a, &x) - cos_dist(&a, &n) + margin).max(0.0);
    }
    Ok(total)
}

/// The view-triplet loss: Σ [d(Wa, Wp) − d(Wa, Wn) + m]₊.
pub fn gouda_loss(batch: &[TripletQuad], adapter: &LinearAdapter, margin: f64) -> Result<f64> {
    hinge_sum(batch, adapter, margin, SecondSlot::Positive)
}

/// The sub-sequence consistency loss: Σ [d(Wa, Wã) − d(Wa, Wn) + m]₊.
pub fn ssl_loss(batch: &[TripletQuad], adapter: &LinearAdapter, margin: f64) -> Result<f64> {
    hinge_sum(batch, adapter, margin, SecondSlot::Augmented)
}

/// Weighted sum of the two losses. A weight of exactly 0 skips its term
/// entirely (the ablation semantics: that loss does not exist).
pub fn total_loss(
    batch: &[TripletQuad],
    adapter: &LinearAdapter,
    margin: f64,
    weights: LossWeights,
) -> Result<f64> {
    weights.validate()?;
    let mut total = 0.0;
    if weights.gouda != 0.0 {
        total += weights.gouda * gouda_loss(batch, adapter, margin)?;
    }
    if weights.ssl != 0.0 {
        total += weights.ssl * ssl_loss(batch, adapter, margin)?;
    }
    Ok(total)
}

/// Exact gradient of [`total_loss`] with respect to the flat row-major `W`.
pub fn loss_gradient(
    batch: &[TripletQuad],
    adapter: &LinearAdapter,
    margin: f64,
    weights: LossWeights,
) -> Result<Vec<f64>> {
    loss_and_gradient(batch, adapter, margin, weights).map(|(_, g)| g)
}

/// One fused pass computing the loss value and its gradient.
///
/// Per active hinge, the chain rule through `u = W·e` contributes
/// `outer(∂L/∂u, e)` for each of the (up to four) mapped vectors; inactive
/// hinges contribute nothing, and a hinge argument of exactly 0 takes
/// subgradient 0.
pub fn loss_and_gradient(
    batch: &[TripletQuad],
    adapter: &LinearAdapter,
    margin: f64,
    weights: LossWeights,
) -> Result<(f64, Vec<f64>)> {
    weights.validate()?;
    let d = adapter.dim();
    let mut grad = vec![0.0; d * d];
    let mut sum_gouda = 0.0;
    let mut sum_ssl = 0.0;

    let mut du_a = vec![0.0; d];
    let mut du_aug = vec![0.0; d];
    let mut du_p = vec![0.0; d];
    let mut du_n = vec![0.0; d];

    for (i, quad) in batch.iter().enumerate() {
        let a = map_checked(adapter, &quad.anchor, i)?;
        let n = map_checked(adapter, &quad.negative, i)?;
        let d_an = cos_dist(&a, &n);

        du_a.fill(0.0);
        du_aug.fill(0.0);
        du_p.fill(0.0);
        du_n.fill(0.0);
        let mut any_active = false;

        if weights.gouda != 0.0 {
            let p = map_checked(adapter, &quad.positive, i)?;
            let h = cos_dist(&a, &p) - d_an + margin;
            if h > 0.0 {
                sum_gouda += h;
                any_active = true;
                let (ga, gp) = cos_dist_grads(&a, &p);
                let (ga_n, gn) = cos_dist_grads(&a, &n);
                for k in 0..d {
                    du_a[k] += weights.gouda * (ga[k] - ga_n[k]);
                    du_p[k] += weights.gouda * gp[k];
                    du_n[k] -= weights.gouda * gn[k];
                }
            }
        }
        if weights.ssl != 0.0 {
            let aug = map_checked(adapter, &quad.anchor_aug, i)?;
            let h = cos_dist(&a, &aug) - d_an + margin;
            if h > 0.0 {
                sum_ssl += h;
                any_active = true;
                let (ga, gaug) = cos_dist_grads(&a, &aug);
                let (ga_n, gn) = cos_dist_grads(&a, &n);
                for k in 0..d {
                    du_a[k] += weights.ssl * (ga[k] - ga_n[k]);
                    du_aug[k] += weights.ssl * gaug[k];
                    du_n[k] -= weights.ssl * gn[k];
                }
            }
        }

        if any_active {
            accumulate_outer(&mut grad, &du_a, &quad.anchor);
            accumulate_outer(&mut grad, &du_aug, &quad.anchor_aug);
            accumulate_outer(&mut grad, &du_p, &quad.positive);
            accumulate_outer(&mut grad, &du_n, &quad.negative);
        }
    }

    let loss = weights.gouda * sum_gouda + weights.ssl * sum_ssl;
    Ok((loss, grad))
}

/// grad += outer(du, e), i.e. grad[k][j] += du[k] · e[j].
fn accumulate_outer(grad: &mut [f64], du: &[f64], e: &[f64]) {
    let d = du.len();
    for (k, &duk) in du.iter().enumerate() {
        if duk == 0.0 {
            continue;
        }
        let row = &mut grad[k * d..(k + 1) * d];
        for (slot, &ej) in row.iter_mut().zip(e) {
            *slot += duk * ej;
        }
    }
}
