//! Python bindings for the adaptation pipeline.
//!
//! Build with `cargo build -p gouda-py`, then rename/copy the produced
//! `libgouda.so` (or `.dylib`) to `gouda.so` on your `PYTHONPATH`. See
//! `python/smoke_test.py` at the repo root, which automates that dance.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gouda_core::{
    adapt, circular_view_distance, cosine_distance, estimate_yaw, generate_target_domain,
    rank1_cross_view, select_triplets, split_train_validation, stopping_criterion, top_q,
    AdaptOptions, AngleMode, DistanceMatrix, GaitRecord, GoudaError, KeypointFrame, LinearAdapter,
    SynthConfig, Triplet, ViewAngle,
};

fn to_py_err(e: GoudaError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(axial: bool) -> AngleMode {
    if axial {
        AngleMode::Axial
    } else {
        AngleMode::Full
    }
}

fn views_from_deg(views_deg: &[f64]) -> Vec<ViewAngle> {
    views_deg.iter().map(|&v| ViewAngle::new(v)).collect()
}

fn triplet_tuples(triplets: &[Triplet]) -> Vec<(usize, usize, usize, f64)> {
    triplets.iter().map(|t| (t.anchor, t.positive, t.negative, t.confidence)).collect()
}

/// Circular distance between two viewing angles in degrees.
#[pyfunction]
#[pyo3(signature = (a, b, axial = false))]
fn view_distance(a: f64, b: f64, axial: bool) -> f64 {
    circular_view_distance(ViewAngle::new(a), ViewAngle::new(b), parse_mode(axial))
}

/// Yaw estimate (degrees) from per-frame hip/shoulder keypoints.
///
/// `frames` is a list of 4 joints × [x, y, z]: left hip, right hip,
/// left shoulder, right shoulder.
#[pyfunction]
fn yaw_from_keypoints(frames: Vec<[[f64; 3]; 4]>) -> PyResult<f64> {
    let frames: Vec<KeypointFrame> = frames
        .into_iter()
        .map(|j| KeypointFrame {
            left_hip: j[0],
            right_hip: j[1],
            left_shoulder: j[2],
            right_shoulder: j[3],
        })
        .collect();
    Ok(estimate_yaw(&frames).map_err(to_py_err)?.degrees())
}

/// Cosine distance, clamped to [0, 2].
#[pyfunction(name = "cosine_distance")]
fn cosine_distance_py(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    cosine_distance(&x, &y).map_err(to_py_err)
}

/// Mine view-based triplets from embeddings; returns
/// `(anchor, positive, negative, confidence)` tuples in anchor order.
#[pyfunction]
#[pyo3(signature = (embeddings, views_deg, t_similar = 10.0, t_cross = 20.0, margin = 0.2, axial = false))]
fn mine_triplets(
    embeddings: Vec<Vec<f64>>,
    views_deg: Vec<f64>,
    t_similar: f64,
    t_cross: f64,
    margin: f64,
    axial: bool,
) -> PyResult<Vec<(usize, usize, usize, f64)>> {
    if embeddings.len() != views_deg.len() {
        return Err(PyValueError::new_err("one view per embedding required"));
    }
    let cfg = gouda_core::MiningConfig {
        t_similar,
        t_cross,
        margin,
        angle_mode: parse_mode(axial),
    };
    cfg.validate().map_err(to_py_err)?;
    let d = DistanceMatrix::from_embeddings(&embeddings).map_err(to_py_err)?;
    Ok(triplet_tuples(&select_triplets(&d, &views_from_deg(&views_deg), &cfg)))
}

/// Mine triplets from a precomputed distance matrix (row-major square).
#[pyfunction]
#[pyo3(signature = (distances, views_deg, t_similar = 10.0, t_cross = 20.0, margin = 0.2, axial = false))]
fn mine_triplets_from_distances(
    distances: Vec<Vec<f64>>,
    views_deg: Vec<f64>,
    t_similar: f64,
    t_cross: f64,
    margin: f64,
    axial: bool,
) -> PyResult<Vec<(usize, usize, usize, f64)>> {
    let cfg = gouda_core::MiningConfig {
        t_similar,
        t_cross,
        margin,
        angle_mode: parse_mode(axial),
    };
    cfg.validate().map_err(to_py_err)?;
    let d = DistanceMatrix::from_rows(&distances).map_err(to_py_err)?;
    Ok(triplet_tuples(&select_triplets(&d, &views_from_deg(&views_deg), &cfg)))
}

/// Keep the top q% of triplets by confidence (ties by anchor index).
#[pyfunction(name = "top_q")]
fn top_q_py(
    triplets: Vec<(usize, usize, usize, f64)>,
    q: f64,
) -> PyResult<Vec<(usize, usize, usize, f64)>> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(PyValueError::new_err(format!("q must be in (0, 100], got {q}")));
    }
    let ts: Vec<Triplet> = triplets
        .into_iter()
        .map(|(anchor, positive, negative, confidence)| Triplet {
            anchor,
            positive,
            negative,
            confidence,
        })
        .collect();
    Ok(triplet_tuples(&top_q(&ts, q)))
}

/// Mean similar-view count among each sample's k nearest neighbors.
#[pyfunction(name = "stopping_criterion")]
#[pyo3(signature = (embeddings, views_deg, k = 5, t_similar = 10.0, axial = false))]
fn stopping_criterion_py(
    embeddings: Vec<Vec<f64>>,
    views_deg: Vec<f64>,
    k: usize,
    t_similar: f64,
    axial: bool,
) -> PyResult<f64> {
    if embeddings.len() != views_deg.len() {
        return Err(PyValueError::new_err("one view per embedding required"));
    }
    stopping_criterion(&embeddings, &views_from_deg(&views_deg), k, t_similar, parse_mode(axial))
        .map_err(to_py_err)
}

fn record_to_dict<'py>(py: Python<'py>, r: &GaitRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("record_id", &r.record_id)?;
    d.set_item("identity", r.identity.as_deref())?;
    d.set_item("view_deg", r.view.degrees())?;
    d.set_item("embedding", &r.embedding)?;
    Ok(d)
}

/// Generate the synthetic view-biased target domain; returns a list of
/// record dicts (`record_id`, `identity`, `view_deg`, `embedding`).
#[pyfunction]
#[pyo3(signature = (n_identities = 64, dim = 32, seed = 7, view_bias = 3.0))]
fn synth_domain(
    py: Python<'_>,
    n_identities: usize,
    dim: usize,
    seed: u64,
    view_bias: f64,
) -> PyResult<Vec<Bound<'_, PyDict>>> {
    let cfg =
        SynthConfig { n_identities, dim, seed, view_bias, ..SynthConfig::default_scenario() };
    let data = generate_target_domain(&cfg).map_err(to_py_err)?;
    data.records.iter().map(|r| record_to_dict(py, r)).collect()
}

/// Rank-1 cross-view accuracy (percent) of embeddings with labels.
#[pyfunction]
#[pyo3(signature = (embeddings, views_deg, identities, adapter_rows = None))]
fn rank1(
    embeddings: Vec<Vec<f64>>,
    views_deg: Vec<f64>,
    identities: Vec<String>,
    adapter_rows: Option<Vec<Vec<f64>>>,
) -> PyResult<f64> {
    if embeddings.len() != views_deg.len() || embeddings.len() != identities.len() {
        return Err(PyValueError::new_err("embeddings, views, identities must align"));
    }
    let records: Vec<GaitRecord> = embeddings
        .into_iter()
        .zip(views_deg)
        .zip(identities)
        .enumerate()
        .map(|(i, ((e, v), id))| {
            let mut r = GaitRecord::new(format!("r{i}"), e, ViewAngle::new(v));
            r.identity = Some(id);
            r
        })
        .collect();
    let adapter = adapter_rows
        .map(|rows| LinearAdapter::from_rows(&rows))
        .transpose()
        .map_err(to_py_err)?;
    Ok(rank1_cross_view(&records, adapter.as_ref()).map_err(to_py_err)?.overall_cross_view)
}

/// Run the full unsupervised adaptation on a fresh synthetic domain.
///
/// Returns `(adapter_rows, sc_before, sc_after, rank1_before, rank1_after)`.
/// Small defaults keep this fast enough for a smoke test; below ~32
/// identities the validation split gets too thin for the criterion to see a
/// view-bias gap, and the run keeps the initial checkpoint.
#[pyfunction]
#[pyo3(signature = (n_identities = 32, dim = 16, seed = 7, learning_rate = 0.01))]
fn adapt_synthetic(
    n_identities: usize,
    dim: usize,
    seed: u64,
    learning_rate: f64,
) -> PyResult<(Vec<Vec<f64>>, f64, f64, f64, f64)> {
    let cfg = SynthConfig { n_identities, dim, seed, ..SynthConfig::default_scenario() };
    let data = generate_target_domain(&cfg).map_err(to_py_err)?;
    let (train_idx, val_idx) = split_train_validation(&data.records);
    let train: Vec<GaitRecord> = train_idx.iter().map(|&i| data.records[i].clone()).collect();
    let val: Vec<GaitRecord> = val_idx.iter().map(|&i| data.records[i].clone()).collect();

    let mut opts = AdaptOptions { seed, ..AdaptOptions::default() };
    opts.optim.learning_rate = learning_rate;
    let (adapter, trace) = adapt(&train, &val, &opts).map_err(to_py_err)?;

    let sc_before = trace
        .checkpoints
        .first()
        .map(|c| c.sc)
        .ok_or_else(|| PyValueError::new_err("no checkpoints recorded"))?;
    let sc_after = trace.chosen.sc;
    let before = rank1_cross_view(&data.records, None).map_err(to_py_err)?;
    let after = rank1_cross_view(&data.records, Some(&adapter)).map_err(to_py_err)?;
    let rows: Vec<Vec<f64>> = adapter.rows().map(|r| r.to_vec()).collect();
    Ok((rows, sc_before, sc_after, before.overall_cross_view, after.overall_cross_view))
}

#[pymodule]
fn gouda(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(view_distance, m)?)?;
    m.add_function(wrap_pyfunction!(yaw_from_keypoints, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_distance_py, m)?)?;
    m.add_function(wrap_pyfunction!(mine_triplets, m)?)?;
    m.add_function(wrap_pyfunction!(mine_triplets_from_distances, m)?)?;
    m.add_function(wrap_pyfunction!(top_q_py, m)?)?;
    m.add_function(wrap_pyfunction!(stopping_criterion_py, m)?)?;
    m.add_function(wrap_pyfunction!(synth_domain, m)?)?;
    m.add_function(wrap_pyfunction!(rank1, m)?)?;
    m.add_function(wrap_pyfunction!(adapt_synthetic, m)?)?;
    Ok(())
}
