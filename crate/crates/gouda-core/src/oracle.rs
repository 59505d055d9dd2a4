//! Deliberately naive reference implementations used to cross-check the
//! production paths.
//!
//! Nothing here shares helpers with the code it checks: the triplet
//! reference works on raw distance rows with its own inline angle math, and
//! the gradient reference is a central finite difference. Slow and obvious
//! beats fast and clever for a referee.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adapter::LinearAdapter;
use crate::embedding::DistanceMatrix;
use crate::error::Result;
use crate::geometry::{AngleMode, ViewAngle};
use crate::loss::{loss_and_gradient, total_loss, LossWeights, TripletQuad};
use crate::mining::{select_triplets, MiningConfig, Triplet};
use crate::seeding::{stream_seed, TAG_ORACLE};

/// Literal transcription of the selection rule over raw distance rows.
///
/// For each anchor: split the others into similar-view and cross-view sets,
/// take the closest cross-view sample as positive, the farthest similar-view
/// sample within `margin` of it as negative, and keep the triplet only if
/// some similar-view sample sits strictly inside the negative's distance.
pub fn reference_select_triplets(
    dist: &[Vec<f64>],
    views_deg: &[f64],
    t_similar: f64,
    t_cross: f64,
    margin: f64,
    axial: bool,
) -> Vec<Triplet> {
    let n = dist.len();
    let angle = |a: f64, b: f64| -> f64 {
        let mut d = (a - b).abs() % 360.0;
        if d > 180.0 {
            d = 360.0 - d;
        }
        if axial && d > 90.0 {
            d = 180.0 - d;
        }
        d
    };
    let mut out = Vec::new();
    for a in 0..n {
        let mut similar = Vec::new();
        let mut cross = Vec::new();
        for j in 0..n {
            if j == a {
                continue;
            }
            let dv = angle(views_deg[a], views_deg[j]);
            if dv < t_similar {
                similar.push(j);
            }
            if dv > t_cross {
                cross.push(j);
            }
        }
        if cross.is_empty() || similar.is_empty() {
            continue;
        }
        let mut p = cross[0];
        for &j in &cross[1..] {
            if dist[a][j] < dist[a][p] {
                p = j;
            }
        }
        let mut negative: Option<usize> = None;
        for &j in &similar {
            if dist[a][j] < dist[a][p] + margin {
                match negative {
                    Some(cur) if dist[a][j] <= dist[a][cur] => {}
                    _ => negative = Some(j),
                }
            }
        }
        let Some(neg) = negative else { continue };
        let mut has_inner = false;
        for &j in &similar {
            if dist[a][j] < dist[a][neg] {
                has_inner = true;
            }
        }
        if !has_inner {
            continue;
        }
        out.push(Triplet { anchor: a, positive: p, negative: neg, confidence: 1.0 - dist[a][p] });
    }
    out
}

/// Central finite difference of `f` at `w`, coordinate by coordinate.
pub fn finite_difference_gradient<F>(f: F, w: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut grad = vec![0.0; w.len()];
    let mut probe = w.to_vec();
    for i in 0..w.len() {
        probe[i] = w[i] + h;
        let up = f(&probe)?;
        probe[i] = w[i] - h;
        let down = f(&probe)?;
        probe[i] = w[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub instances: usize,
    /// Instance indices where production and reference disagreed.
    pub mismatched: Vec<usize>,
    /// Triplets emitted by the production path across all instances.
    pub total_triplets: usize,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Run production and reference selection over random instances and compare
/// their outputs exactly. `inject_fault` nudges the margin handed to the
/// production path, which must surface as mismatches — a checker that can't
/// fail isn't checking anything.
pub fn check_mining_equivalence(
    instances: usize,
    n_records: usize,
    dim: usize,
    cfg: &MiningConfig,
    seed: u64,
    inject_fault: bool,
) -> Result<EquivalenceReport> {
    cfg.validate()?;
    let mut report =
        EquivalenceReport { instances, mismatched: Vec::new(), total_triplets: 0 };
    for inst in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, TAG_ORACLE, inst as u64));
        let mut embeddings = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            loop {
                let e: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                if e.iter().any(|&x| x != 0.0) {
                    embeddings.push(e);
                    break;
                }
            }
        }
        let views: Vec<ViewAngle> =
            (0..n_records).map(|_| ViewAngle::new(rng.random_range(0.0..360.0))).collect();
        let d = DistanceMatrix::from_embeddings(&embeddings)?;

        let mut prod_cfg = cfg.clone();
        if inject_fault {
            prod_cfg.margin += 0.05;
        }
        let produced = select_triplets(&d, &views, &prod_cfg);

        let rows: Vec<Vec<f64>> =
            (0..n_records).map(|i| (0..n_records).map(|j| d.get(i, j)).collect()).collect();
        let views_deg: Vec<f64> = views.iter().map(|v| v.degrees()).collect();
        let expected = reference_select_triplets(
            &rows,
            &views_deg,
            cfg.t_similar,
            cfg.t_cross,
            cfg.margin,
            matches!(cfg.angle_mode, AngleMode::Axial),
        );

        report.total_triplets += produced.len();
        if produced != expected {
            report.mismatched.push(inst);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub batches: usize,
    /// max over batches of ||analytic - fd||_inf / max(||fd||_inf, 1e-12)
    pub max_rel_error: f64,
}

/// Compare the analytic loss gradient against central finite differences on
/// random batches around a perturbed-identity adapter.
pub fn check_gradient(
    batches: usize,
    dim: usize,
    batch_size: usize,
    margin: f64,
    seed: u64,
) -> Result<GradientCheckReport> {
    let weights = LossWeights::default();
    let h = 1e-6;
    let mut max_rel = 0.0f64;
    for b in 0..batches {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, TAG_ORACLE, b as u64));
        let mut w = LinearAdapter::identity(dim);
        for x in w.weights_mut() {
            let nudge: f64 = StandardNormal.sample(&mut rng);
            *x += 0.05 * nudge;
        }
        let mut quads = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(4);
            for _ in 0..4 {
                loop {
                    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
                        vecs.push(v);
                        break;
                    }
                }
            }
            let negative = vecs.pop().unwrap();
            let positive = vecs.pop().unwrap();
            let anchor_aug = vecs.pop().unwrap();
            let anchor = vecs.pop().unwrap();
            quads.push(TripletQuad { anchor, anchor_aug, positive, negative });
        }

        let (_, analytic) = loss_and_gradient(&quads, &w, margin, weights)?;
        let fd = finite_difference_gradient(
            |flat| {
                let adapter = LinearAdapter::from_flat(dim, flat)?;
                total_loss(&quads, &adapter, margin, weights)
            },
            w.weights(),
            h,
        )?;

        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, f)| a - f).collect();
        let rel = inf(&diff) / inf(&fd).max(1e-12);
        max_rel = max_rel.max(rel);
    }
    Ok(GradientCheckReport { batches, max_rel_error: max_rel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::worked_instance;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_reproduces_the_worked_instance() {
        let (d, views) = worked_instance();
        let cfg = MiningConfig::default();
        let n = views.len();
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| d.get(i, j)).collect()).collect();
        let views_deg: Vec<f64> = views.iter().map(|v| v.degrees()).collect();
        let got = reference_select_triplets(
            &rows,
            &views_deg,
            cfg.t_similar,
            cfg.t_cross,
            cfg.margin,
            false,
        );
        assert_eq!(got.len(), 2);
        assert_eq!((got[0].anchor, got[0].positive, got[0].negative), (0, 3, 2));
        assert_eq!((got[1].anchor, got[1].positive, got[1].negative), (1, 3, 2));
        assert_abs_diff_eq!(got[0].confidence, 0.70, epsilon = 1e-12);
        assert_abs_diff_eq!(got[1].confidence, 0.60, epsilon = 1e-12);
    }

    #[test]
    fn production_and_reference_agree_on_random_instances() {
        let cfg = MiningConfig::default();
        let report = check_mining_equivalence(25, 20, 8, &cfg, 1, false).unwrap();
        assert!(report.passed(), "mismatched instances: {:?}", report.mismatched);
        assert!(report.total_triplets > 0, "vacuous check: no triplets were ever produced");
    }

    #[test]
    fn equivalence_check_detects_an_injected_fault() {
        let cfg = MiningConfig::default();
        let report = check_mining_equivalence(25, 20, 8, &cfg, 1, true).unwrap();
        assert!(!report.passed(), "fault injection produced no mismatch");
    }

    #[test]
    fn fd_gradient_matches_a_quadratic_exactly() {
        let f = |w: &[f64]| Ok(w.iter().map(|x| x * x).sum::<f64>());
        let w = vec![0.5, -1.5, 2.0];
        let g = finite_difference_gradient(f, &w, 1e-6).unwrap();
        for (gi, wi) in g.iter().zip(&w) {
            assert_abs_diff_eq!(*gi, 2.0 * wi, epsilon = 1e-8);
        }
    }

    #[test]
    fn analytic_gradient_survives_the_fd_check() {
        let report = check_gradient(4, 4, 4, 0.2, 0).unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "max relative error {} out of tolerance",
            report.max_rel_error
        );
    }
}
