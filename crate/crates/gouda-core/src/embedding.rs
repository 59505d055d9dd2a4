//! Embedding containers, cosine distance, dense distance matrices and KNN.

use crate::error::{GoudaError, Result};
use crate::geometry::ViewAngle;

/// One gait sequence: its embedding, estimated view, and (when available)
/// ground-truth identity and the per-frame latent vectors it was pooled from.
/// Identity is only ever consulted by evaluation and oracle baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitRecord {
    pub record_id: String,
    pub embedding: Vec<f64>,
    pub view: ViewAngle,
    pub identity: Option<String>,
    pub frames: Option<Vec<Vec<f64>>>,
}

impl GaitRecord {
    pub fn new(record_id: impl Into<String>, embedding: Vec<f64>, view: ViewAngle) -> Self {
        GaitRecord {
            record_id: record_id.into(),
            embedding,
            view,
            identity: None,
            frames: None,
        }
    }
}

/// Collected views of a record set, in record order.
pub fn views_of(records: &[GaitRecord]) -> Vec<ViewAngle> {
    records.iter().map(|r| r.view).collect()
}

/// Collected identity labels of a record set, in record order.
pub fn labels_of(records: &[GaitRecord]) -> Vec<Option<String>> {
    records.iter().map(|r| r.identity.clone()).collect()
}

/// Cosine distance `1 − x·y/(‖x‖‖y‖)`, clamped into `[0, 2]`.
pub fn cosine_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(GoudaError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return Err(GoudaError::ZeroNormEmbedding);
    }
    let sim = dot / (nx.sqrt() * ny.sqrt());
    Ok(1.0 - sim.clamp(-1.0, 1.0))
}

/// Dense symmetric cosine-distance matrix over a record set.
///
/// Entries live in `[0, 2]` with an exact-zero diagonal; symmetry is exact
/// because only the upper triangle is computed and then mirrored.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>, // row-major n×n
}

impl DistanceMatrix {
    pub fn from_embeddings<E: AsRef<[f64]>>(embeddings: &[E]) -> Result<Self> {
        let n = embeddings.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = cosine_distance(embeddings[i].as_ref(), embeddings[j].as_ref())?;
                entries[i * n + j] = d;
                entries[j * n + i] = d;
            }
        }
        Ok(DistanceMatrix { n, entries })
    }

    pub fn from_records(records: &[GaitRecord]) -> Result<Self> {
        let embeddings: Vec<&[f64]> = records.iter().map(|r| r.embedding.as_slice()).collect();
        Self::from_embeddings(&embeddings)
    }

    /// Build from explicit rows (analysis inputs, fixtures). The rows must
    /// already be a valid distance matrix: square, exactly symmetric, zero
    /// diagonal, entries in [0, 2].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(GoudaError::DimensionMismatch { expected: n, got: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                if i == j && v != 0.0 {
                    return Err(GoudaError::InvalidConfig(format!(
                        "distance matrix diagonal entry [{i}][{i}] = {v}, expected 0"
                    )));
                }
                if !(0.0..=2.0).contains(&v) {
                    return Err(GoudaError::InvalidConfig(format!(
                        "distance matrix entry [{i}][{j}] = {v} outside [0, 2]"
                    )));
                }
                if rows[j][i] != v {
                    return Err(GoudaError::InvalidConfig(format!(
                        "distance matrix not symmetric at [{i}][{j}]"
                    )));
                }
                entries[i * n + j] = v;
            }
        }
        Ok(DistanceMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// The `k` nearest neighbors of `a`, self excluded, sorted by
    /// (distance, index) so ties resolve to the lower index.
    pub fn knn(&self, a: usize, k: usize) -> Result<Vec<usize>> {
        let available = self.n.saturating_sub(1);
        if k > available {
            return Err(GoudaError::KTooLarge { k, available });
        }
        let mut order: Vec<usize> = (0..self.n).filter(|&j| j != a).collect();
        order.sort_unstable_by(|&i, &j| self.get(a, i).total_cmp(&self.get(a, j)).then(i.cmp(&j)));
        order.truncate(k);
        Ok(order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_vectors_have_zero_distance() {
        let e = vec![0.3, -1.2, 4.0];
        assert_abs_diff_eq!(cosine_distance(&e, &e).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn orthogonal_vectors_have_distance_one() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn antipodal_vectors_have_distance_two() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn zero_vector_is_rejected() {
        let err = cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, GoudaError::ZeroNormEmbedding));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(cosine_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn matrix_of_identical_records_is_zero() {
        let d = DistanceMatrix::from_embeddings(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(d.get(i, j), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn matrix_matches_cosine_cases() {
        let d = DistanceMatrix::from_embeddings(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.get(1, 2), 1.0);
    }

    #[test]
    fn matrix_equals_entrywise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let embeddings: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let d = DistanceMatrix::from_embeddings(&embeddings).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let expect = if i == j {
                    0.0
                } else {
                    cosine_distance(&embeddings[i], &embeddings[j]).unwrap()
                };
                assert_eq!(d.get(i, j), expect, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn matrix_is_bitwise_symmetric_with_zero_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let embeddings: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let d = DistanceMatrix::from_embeddings(&embeddings).unwrap();
        for i in 0..12 {
            assert_eq!(d.get(i, i).to_bits(), 0.0_f64.to_bits());
            for j in 0..12 {
                assert_eq!(d.get(i, j).to_bits(), d.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn knn_single_candidate() {
        let d = DistanceMatrix::from_embeddings(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(d.knn(0, 1).unwrap(), vec![1]);
    }

    #[test]
    fn knn_breaks_ties_by_lower_index() {
        let rows = vec![
            vec![0.0, 0.5, 0.2, 0.2],
            vec![0.5, 0.0, 0.3, 0.3],
            vec![0.2, 0.3, 0.0, 0.1],
            vec![0.2, 0.3, 0.1, 0.0],
        ];
        let d = DistanceMatrix::from_rows(&rows).unwrap();
        assert_eq!(d.knn(0, 2).unwrap(), vec![2, 3]);
    }

    #[test]
    fn knn_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let embeddings: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let d = DistanceMatrix::from_embeddings(&embeddings).unwrap();
            let a = rng.random_range(0..20);
            let k = rng.random_range(1..20);
            let mut oracle: Vec<usize> = (0..20).filter(|&j| j != a).collect();
            oracle.sort_by(|&i, &j| d.get(a, i).total_cmp(&d.get(a, j)).then(i.cmp(&j)));
            oracle.truncate(k);
            assert_eq!(d.knn(a, k).unwrap(), oracle);
        }
    }

    #[test]
    fn knn_rejects_oversized_k() {
        let d = DistanceMatrix::from_embeddings(&[vec![1.0], vec![2.0]]).unwrap();
        let err = d.knn(0, 2).unwrap_err();
        assert!(matches!(err, GoudaError::KTooLarge { k: 2, available: 1 }));
    }

    #[test]
    fn from_rows_rejects_asymmetry() {
        let rows = vec![vec![0.0, 0.5], vec![0.4, 0.0]];
        assert!(DistanceMatrix::from_rows(&rows).is_err());
    }
}
