//! Hand-built instances shared across unit tests.

use crate::embedding::DistanceMatrix;
use crate::geometry::ViewAngle;

/// A five-sample mining instance small enough to evaluate by hand: views
/// 0/5/8/30/35 with fixed pairwise distances. Under the default thresholds
/// (t_similar=10, t_cross=20, margin=0.2) exactly anchors 0 and 1 admit a
/// triplet, both picking positive 3 and negative 2.
pub(crate) fn worked_instance() -> (DistanceMatrix, Vec<ViewAngle>) {
    let pairs = [
        ((0, 1), 0.10),
        ((0, 2), 0.45),
        ((0, 3), 0.30),
        ((0, 4), 0.50),
        ((1, 2), 0.20),
        ((1, 3), 0.40),
        ((1, 4), 0.60),
        ((2, 3), 0.15),
        ((2, 4), 0.55),
        ((3, 4), 0.05),
    ];
    let mut rows = vec![vec![0.0; 5]; 5];
    for ((i, j), v) in pairs {
        rows[i][j] = v;
        rows[j][i] = v;
    }
    let views = [0.0, 5.0, 8.0, 30.0, 35.0].iter().map(|&v| ViewAngle::new(v)).collect();
    (DistanceMatrix::from_rows(&rows).unwrap(), views)
}

/// Identity labels for the worked instance used by the correctness tests.
pub(crate) fn worked_instance_labels() -> Vec<Option<String>> {
    ["A", "B", "A", "A", "B"].iter().map(|s| Some(s.to_string())).collect()
}
