//! On-disk formats: CSV for tabular artifacts, JSON for structured reports.
//!
//! Every CSV may open with `# config_hash=<h> seed=<s>` comment lines;
//! readers skip them, [`read_provenance`] recovers them. Floats are written
//! with `Display`, whose shortest-round-trip form parses back bit-exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adapter::LinearAdapter;
use crate::embedding::GaitRecord;
use crate::error::{GoudaError, Result};
use crate::eval::{Rank1Report, ViewConfusion};
use crate::geometry::{KeypointFrame, ViewAngle};
use crate::mining::Triplet;

/// What produced a file: hash of the effective run config plus the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn comment_line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

fn create(path: &Path, provenance: Option<&Provenance>) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| GoudaError::io(p(path), e))?;
    let mut w = BufWriter::new(file);
    if let Some(pr) = provenance {
        writeln!(w, "{}", pr.comment_line()).map_err(|e| GoudaError::io(p(path), e))?;
    }
    Ok(w)
}

fn parse_f64(path: &Path, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| GoudaError::format(p(path), format!("bad float {raw:?} in column {field}")))?;
    if !v.is_finite() {
        return Err(GoudaError::format(p(path), format!("non-finite {field}: {raw}")));
    }
    Ok(v)
}

/// Recover the provenance comment from the head of a CSV, if present.
pub fn read_provenance(path: &Path) -> Result<Option<Provenance>> {
    let file = File::open(path).map_err(|e| GoudaError::io(p(path), e))?;
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line).map_err(|e| GoudaError::io(p(path), e))?;
    let Some(rest) = line.trim_end().strip_prefix("# ") else {
        return Ok(None);
    };
    let (mut hash, mut seed) = (None, None);
    for token in rest.split_whitespace() {
        if let Some(h) = token.strip_prefix("config_hash=") {
            hash = Some(h.to_string());
        } else if let Some(s) = token.strip_prefix("seed=") {
            seed = s.parse::<u64>().ok();
        }
    }
    match (hash, seed) {
        (Some(config_hash), Some(seed)) => Ok(Some(Provenance { config_hash, seed })),
        _ => Err(GoudaError::format(p(path), "malformed provenance comment".to_string())),
    }
}

fn csv_reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(headers)
        .from_path(path)
        .map_err(|e| GoudaError::format(p(path), e.to_string()))
}

// ---------------------------------------------------------------- embeddings

/// `record_id,identity,view_deg,e0..e{d-1}`; identity may be blank.
pub fn write_embeddings_csv(
    path: &Path,
    records: &[GaitRecord],
    provenance: Option<&Provenance>,
) -> Result<()> {
    if records.is_empty() {
        return Err(GoudaError::EmptyInput("records to write"));
    }
    let d = records[0].embedding.len();
    let mut out = create(path, provenance)?;
    let header: Vec<String> = ["record_id", "identity", "view_deg"]
        .into_iter()
        .map(String::from)
        .chain((0..d).map(|i| format!("e{i}")))
        .collect();
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(&header).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    for r in records {
        if r.embedding.len() != d {
            return Err(GoudaError::DimensionMismatch { expected: d, got: r.embedding.len() });
        }
        let mut row = vec![
            r.record_id.clone(),
            r.identity.clone().unwrap_or_default(),
            format!("{}", r.view.degrees()),
        ];
        row.extend(r.embedding.iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    }
    w.flush().map_err(|e| GoudaError::io(p(path), e))?;
    drop(w);
    out.flush().map_err(|e| GoudaError::io(p(path), e))
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<GaitRecord>> {
    let mut reader = csv_reader(path, true)?;
    let headers = reader.headers().map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    let fixed = ["record_id", "identity", "view_deg"];
    if headers.len() < 4 || headers.iter().take(3).ne(fixed) {
        return Err(GoudaError::format(
            p(path),
            "expected header record_id,identity,view_deg,e0,...".to_string(),
        ));
    }
    let d = headers.len() - 3;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| GoudaError::format(p(path), e.to_string()))?;
        let record_id = row[0].to_string();
        if record_id.is_empty() {
            return Err(GoudaError::format(p(path), "empty record_id".to_string()));
        }
        let view_deg = parse_f64(path, "view_deg", &row[2])?;
        if !(0.0..360.0).contains(&view_deg) {
            return Err(GoudaError::format(
                p(path),
                format!("view_deg {view_deg} outside [0, 360)"),
            ));
        }
        let mut embedding = Vec::with_capacity(d);
        for i in 0..d {
            embedding.push(parse_f64(path, &format!("e{i}"), &row[3 + i])?);
        }
        let mut r = GaitRecord::new(record_id, embedding, ViewAngle::new(view_deg));
        if !row[1].is_empty() {
            r.identity = Some(row[1].to_string());
        }
        records.push(r);
    }
    if records.is_empty() {
        return Err(GoudaError::format(p(path), "no data rows".to_string()));
    }
    Ok(records)
}

// -------------------------------------------------------------------- frames

/// `record_id,frame_idx,f0..f{d-1}`, one row per frame latent.
pub fn write_frames_csv(
    path: &Path,
    records: &[GaitRecord],
    provenance: Option<&Provenance>,
) -> Result<()> {
    let first = records
        .iter()
        .find_map(|r| r.frames.as_ref().and_then(|f| f.first()))
        .ok_or(GoudaError::EmptyInput("records with frames"))?;
    let d = first.len();
    let mut out = create(path, provenance)?;
    let header: Vec<String> = ["record_id", "frame_idx"]
        .into_iter()
        .map(String::from)
        .chain((0..d).map(|i| format!("f{i}")))
        .collect();
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(&header).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    for r in records {
        let frames =
            r.frames.as_ref().ok_or_else(|| GoudaError::MissingFrames(r.record_id.clone()))?;
        for (t, f) in frames.iter().enumerate() {
            if f.len() != d {
                return Err(GoudaError::DimensionMismatch { expected: d, got: f.len() });
            }
            let mut row = vec![r.record_id.clone(), t.to_string()];
            row.extend(f.iter().map(|v| format!("{v}")));
            w.write_record(&row).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
        }
    }
    w.flush().map_err(|e| GoudaError::io(p(path), e))?;
    drop(w);
    out.flush().map_err(|e| GoudaError::io(p(path), e))
}

pub fn read_frames_csv(path: &Path) -> Result<HashMap<String, Vec<Vec<f64>>>> {
    let mut reader = csv_reader(path, true)?;
    let headers = reader.headers().map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    if headers.len() < 3 || headers.iter().take(2).ne(["record_id", "frame_idx"]) {
        return Err(GoudaError::format(
            p(path),
            "expected header record_id,frame_idx,f0,...".to_string(),
        ));
    }
    let d = headers.len() - 2;
    let mut grouped: HashMap<String, Vec<(usize, Vec<f64>)>> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| GoudaError::format(p(path), e.to_string()))?;
        let idx: usize = row[1]
            .parse()
            .map_err(|_| GoudaError::format(p(path), format!("bad frame_idx {:?}", &row[1])))?;
        let mut frame = Vec::with_capacity(d);
        for i in 0..d {
            frame.push(parse_f64(path, &format!("f{i}"), &row[2 + i])?);
        }
        grouped.entry(row[0].to_string()).or_default().push((idx, frame));
    }
    let mut frames = HashMap::with_capacity(grouped.len());
    for (record_id, mut rows) in grouped {
        rows.sort_by_key(|(idx, _)| *idx);
        for (want, (got, _)) in rows.iter().enumerate() {
            if *got != want {
                return Err(GoudaError::format(
                    p(path),
                    format!("record {record_id}: frame indices not contiguous from 0"),
                ));
            }
        }
        frames.insert(record_id, rows.into_iter().map(|(_, f)| f).collect());
    }
    if frames.is_empty() {
        return Err(GoudaError::format(p(path), "no data rows".to_string()));
    }
    Ok(frames)
}

/// Attach frame latents to matching records; returns how many matched.
pub fn attach_frames(
    records: &mut [GaitRecord],
    mut frames: HashMap<String, Vec<Vec<f64>>>,
) -> usize {
    let mut attached = 0;
    for r in records {
        if let Some(f) = frames.remove(&r.record_id) {
            r.frames = Some(f);
            attached += 1;
        }
    }
    attached
}

// ----------------------------------------------------------------- keypoints

const KEYPOINT_HEADER: [&str; 13] = [
    "frame", "lhip_x", "lhip_y", "lhip_z", "rhip_x", "rhip_y", "rhip_z", "lsho_x", "lsho_y",
    "lsho_z", "rsho_x", "rsho_y", "rsho_z",
];

/// One row per frame: hip and shoulder keypoints in camera coordinates.
pub fn write_keypoints_csv(path: &Path, frames: &[KeypointFrame]) -> Result<()> {
    if frames.is_empty() {
        return Err(GoudaError::EmptyInput("keypoint frames"));
    }
    let mut out = create(path, None)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(KEYPOINT_HEADER).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    for (t, f) in frames.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for joint in [f.left_hip, f.right_hip, f.left_shoulder, f.right_shoulder] {
            row.extend(joint.iter().map(|v| format!("{v}")));
        }
        w.write_record(&row).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    }
    w.flush().map_err(|e| GoudaError::io(p(path), e))?;
    drop(w);
    out.flush().map_err(|e| GoudaError::io(p(path), e))
}

pub fn read_keypoints_csv(path: &Path) -> Result<Vec<KeypointFrame>> {
    let mut reader = csv_reader(path, true)?;
    let headers = reader.headers().map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    if headers.iter().ne(KEYPOINT_HEADER) {
        return Err(GoudaError::format(
            p(path),
            format!("expected header {}", KEYPOINT_HEADER.join(",")),
        ));
    }
    let mut rows: Vec<(usize, KeypointFrame)> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| GoudaError::format(p(path), e.to_string()))?;
        let idx: usize = row[0]
            .parse()
            .map_err(|_| GoudaError::format(p(path), format!("bad frame index {:?}", &row[0])))?;
        let mut coords = [0.0; 12];
        for (i, c) in coords.iter_mut().enumerate() {
            *c = parse_f64(path, KEYPOINT_HEADER[i + 1], &row[i + 1])?;
        }
        let joint = |o: usize| [coords[o], coords[o + 1], coords[o + 2]];
        rows.push((
            idx,
            KeypointFrame {
                left_hip: joint(0),
                right_hip: joint(3),
                left_shoulder: joint(6),
                right_shoulder: joint(9),
            },
        ));
    }
    if rows.is_empty() {
        return Err(GoudaError::format(p(path), "no data rows".to_string()));
    }
    rows.sort_by_key(|(idx, _)| *idx);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(GoudaError::format(p(path), format!("duplicate frame index {}", pair[0].0)));
        }
    }
    Ok(rows.into_iter().map(|(_, f)| f).collect())
}

// ------------------------------------------------------------------- adapter

/// d rows of d comma-separated weights, no header.
pub fn write_adapter_csv(
    path: &Path,
    adapter: &LinearAdapter,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut out = create(path, provenance)?;
    let mut w = csv::Writer::from_writer(&mut out);
    for row in adapter.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        w.write_record(&cells).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    }
    w.flush().map_err(|e| GoudaError::io(p(path), e))?;
    drop(w);
    out.flush().map_err(|e| GoudaError::io(p(path), e))
}

pub fn read_adapter_csv(path: &Path) -> Result<LinearAdapter> {
    let mut reader = csv_reader(path, false)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| GoudaError::format(p(path), e.to_string()))?;
        let mut parsed = Vec::with_capacity(row.len());
        for (i, cell) in row.iter().enumerate() {
            parsed.push(parse_f64(path, &format!("w{}{}", rows.len(), i), cell)?);
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(GoudaError::format(p(path), "no data rows".to_string()));
    }
    LinearAdapter::from_rows(&rows)
}

// ------------------------------------------------------------------ triplets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRow {
    pub anchor_id: String,
    pub positive_id: String,
    pub negative_id: String,
    pub confidence: f64,
    pub stage: usize,
}

/// `anchor_id,positive_id,negative_id,confidence,stage`; stages are 1-based.
pub fn write_triplets_csv(
    path: &Path,
    stage_pools: &[Vec<Triplet>],
    records: &[GaitRecord],
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut out = create(path, provenance)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["anchor_id", "positive_id", "negative_id", "confidence", "stage"])
        .map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    for (s, pool) in stage_pools.iter().enumerate() {
        for t in pool {
            w.write_record([
                records[t.anchor].record_id.as_str(),
                records[t.positive].record_id.as_str(),
                records[t.negative].record_id.as_str(),
                &format!("{}", t.confidence),
                &(s + 1).to_string(),
            ])
            .map_err(|e| GoudaError::format(p(path), e.to_string()))?;
        }
    }
    w.flush().map_err(|e| GoudaError::io(p(path), e))?;
    drop(w);
    out.flush().map_err(|e| GoudaError::io(p(path), e))
}

pub fn read_triplets_csv(path: &Path) -> Result<Vec<TripletRow>> {
    let mut reader = csv_reader(path, true)?;
    let headers = reader.headers().map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    if headers.iter().ne(["anchor_id", "positive_id", "negative_id", "confidence", "stage"]) {
        return Err(GoudaError::format(
            p(path),
            "expected header anchor_id,positive_id,negative_id,confidence,stage".to_string(),
        ));
    }
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| GoudaError::format(p(path), e.to_string()))?;
        rows.push(TripletRow {
            anchor_id: row[0].to_string(),
            positive_id: row[1].to_string(),
            negative_id: row[2].to_string(),
            confidence: parse_f64(path, "confidence", &row[3])?,
            stage: row[4]
                .parse()
                .map_err(|_| GoudaError::format(p(path), format!("bad stage {:?}", &row[4])))?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------- json

/// Pretty JSON with a trailing newline; used for traces and reports.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path, None)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    writeln!(out).map_err(|e| GoudaError::io(p(path), e))?;
    out.flush().map_err(|e| GoudaError::io(p(path), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| GoudaError::io(p(path), e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| GoudaError::format(p(path), e.to_string()))
}

// ------------------------------------------------------------------- reports

/// `probe_view,gallery_view,accuracy,n_probes`, one row per view pair.
pub fn write_rank1_pairs_csv(
    path: &Path,
    report: &Rank1Report,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut out = create(path, provenance)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["probe_view", "gallery_view", "accuracy", "n_probes"])
        .map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    for pair in &report.per_pair {
        w.write_record([
            format!("{}", pair.probe_view.degrees()),
            format!("{}", pair.gallery_view.degrees()),
            format!("{}", pair.accuracy),
            pair.n_probes.to_string(),
        ])
        .map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    }
    w.flush().map_err(|e| GoudaError::io(p(path), e))?;
    drop(w);
    out.flush().map_err(|e| GoudaError::io(p(path), e))
}

/// Anchor-view × positive-view matrix: header row carries the positive-view
/// bin lower edges, each data row leads with its anchor-view bin lower edge.
/// Only anchor bins that produced triplets appear.
pub fn write_confusion_csv(
    path: &Path,
    confusion: &ViewConfusion,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut out = create(path, provenance)?;
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header = Vec::with_capacity(confusion.n_bins + 1);
    header.push("anchor_view_deg".to_string());
    header.extend((0..confusion.n_bins).map(|i| format!("{}", confusion.bin_start(i))));
    w.write_record(&header).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    for row in &confusion.rows {
        let mut cells = Vec::with_capacity(confusion.n_bins + 1);
        cells.push(format!("{}", confusion.bin_start(row.anchor_bin)));
        cells.extend(row.fractions.iter().map(|f| format!("{f}")));
        w.write_record(&cells).map_err(|e| GoudaError::format(p(path), e.to_string()))?;
    }
    w.flush().map_err(|e| GoudaError::io(p(path), e))?;
    drop(w);
    out.flush().map_err(|e| GoudaError::io(p(path), e))
}
