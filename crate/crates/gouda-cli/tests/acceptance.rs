//! The acceptance gate: ten seeded end-to-end properties, one test (and one
//! printed pass line) per criterion.
//!
//! Criteria 4–7 share a single run of the reference scenario (seed 7) at the
//! suite's learning rate; its headline numbers are frozen as exact constants
//! below, so any change to the generator, the miner, or the trainer that
//! shifts them — even in the last bit — fails loudly here.
//!
//! Run with `cargo test -p gouda-cli --test acceptance -- --nocapture` to
//! see every line.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::LazyLock;
use std::time::Instant;

use gouda_core::embedding::{labels_of, views_of};
use gouda_core::eval::{oracle_filter, supervised_adapt};
use gouda_core::loss::{total_loss, LossWeights, TripletQuad};
use gouda_core::oracle::{check_gradient, check_mining_equivalence};
use gouda_core::train::{adapt, OptimConfig};
use gouda_core::{
    generate_target_domain, rank1_cross_view, select_triplets, split_train_validation,
    stopping_criterion, top_q, triplet_correctness, AdaptOptions, AngleMode, DistanceMatrix,
    GaitRecord, LinearAdapter, MiningConfig, Rank1Report, SynthConfig, TrainingTrace, Triplet,
    ViewAngle,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Learning rate the suite runs at. The reference default (1e-5) is sized
/// for fine-tuning a deep backbone; a 32x32 linear map needs larger steps
/// to converge inside the time budget.
const SUITE_LR: f64 = 1e-2;

// Frozen signature of the raw reference scenario (seed 7), recorded from the
// calibration run. Exact equality under the fixed seed.
const FROZEN_CROSS_VIEW: f64 = 53.794642857142854;
const FROZEN_SAME_VIEW: f64 = 100.0;
const FROZEN_RAW_SC: f64 = 5.0;

fn pass(criterion: usize, detail: String) {
    println!("criterion {criterion:>2}: PASS — {detail}");
}

/// One adaptation of the reference scenario, shared by criteria 4–7.
struct DefaultRun {
    records: Vec<GaitRecord>,
    train: Vec<GaitRecord>,
    opts: AdaptOptions,
    dt: Rank1Report,
    raw_sc: f64,
    trace: TrainingTrace,
    adapted: Rank1Report,
    adapt_seconds: f64,
}

static RUN: LazyLock<DefaultRun> = LazyLock::new(|| {
    let cfg = SynthConfig::default_scenario();
    let records = generate_target_domain(&cfg).expect("reference scenario generates").records;
    let (train_idx, val_idx) = split_train_validation(&records);
    let train: Vec<GaitRecord> = train_idx.iter().map(|&i| records[i].clone()).collect();
    let val: Vec<GaitRecord> = val_idx.iter().map(|&i| records[i].clone()).collect();

    let opts = AdaptOptions {
        optim: OptimConfig { learning_rate: SUITE_LR, ..OptimConfig::default() },
        seed: cfg.seed,
        ..AdaptOptions::default()
    };

    let dt = rank1_cross_view(&records, None).expect("raw evaluation");
    let embeddings: Vec<Vec<f64>> = records.iter().map(|r| r.embedding.clone()).collect();
    let raw_sc =
        stopping_criterion(&embeddings, &views_of(&records), 5, opts.mining.t_similar, AngleMode::Full)
            .expect("raw stopping criterion");

    let t0 = Instant::now();
    let (adapter, trace) = adapt(&train, &val, &opts).expect("adaptation runs");
    let adapt_seconds = t0.elapsed().as_secs_f64();
    let adapted = rank1_cross_view(&records, Some(&adapter)).expect("adapted evaluation");

    DefaultRun { records, train, opts, dt, raw_sc, trace, adapted, adapt_seconds }
});

// ------------------------------------------------------------- criterion 1

#[test]
fn c01_mining_matches_the_brute_force_reference_on_100_instances() {
    let t0 = Instant::now();
    let report = check_mining_equivalence(100, 50, 16, &MiningConfig::default(), 7, false)
        .expect("equivalence check runs");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        report.passed(),
        "criterion 1: FAIL — instances {:?} diverged from the reference",
        report.mismatched
    );
    assert!(elapsed < 10.0, "criterion 1: FAIL — took {elapsed:.1}s, budget 10s");
    pass(
        1,
        format!(
            "{}/{} instances exact ({} triplets compared) in {elapsed:.2}s",
            report.instances - report.mismatched.len(),
            report.instances,
            report.total_triplets
        ),
    );
}

// ------------------------------------------------------------- criterion 2

#[test]
fn c02_analytic_gradient_matches_finite_differences() {
    let t0 = Instant::now();
    let report = check_gradient(20, 16, 8, 0.2, 7).expect("gradient check runs");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        report.max_rel_error < 1e-4,
        "criterion 2: FAIL — max relative error {} >= 1e-4",
        report.max_rel_error
    );
    assert!(elapsed < 5.0, "criterion 2: FAIL — took {elapsed:.1}s, budget 5s");
    pass(
        2,
        format!(
            "max relative error {:.3e} over {} batches in {elapsed:.2}s",
            report.max_rel_error, report.batches
        ),
    );
}

// ------------------------------------------------------------- criterion 3

#[test]
fn c03_total_loss_is_invariant_to_adapter_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 16;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut quads = Vec::with_capacity(8);
        for _ in 0..8 {
            let mut draw = || -> Vec<f64> {
                (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            quads.push(TripletQuad {
                anchor: draw(),
                anchor_aug: draw(),
                positive: draw(),
                negative: draw(),
            });
        }
        let mut w = LinearAdapter::identity(dim);
        for x in w.weights_mut() {
            let nudge: f64 = StandardNormal.sample(&mut rng);
            *x += 0.05 * nudge;
        }
        let doubled: Vec<f64> = w.weights().iter().map(|x| 2.0 * x).collect();
        let w2 = LinearAdapter::from_flat(dim, &doubled).unwrap();

        let a = total_loss(&quads, &w, 0.2, LossWeights::default()).unwrap();
        let b = total_loss(&quads, &w2, 0.2, LossWeights::default()).unwrap();
        let rel = (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-9, "criterion 3: FAIL — max relative difference {worst:e} >= 1e-9");
    pass(3, format!("total_loss(W) vs total_loss(2W): max relative difference {worst:e}"));
}

// ------------------------------------------------------------- criterion 4

#[test]
fn c04_raw_reference_scenario_shows_the_view_bias_signature() {
    let run = &*RUN;
    let same = run.dt.identical_view_mean.expect("same-view pairs exist");
    assert!(
        same > 90.0 && run.dt.overall_cross_view < 60.0 && run.raw_sc > 4.0,
        "criterion 4: FAIL — identical_view_mean={same} overall_cross_view={} sc={}",
        run.dt.overall_cross_view,
        run.raw_sc
    );
    // Frozen calibration values; any drift in the generator or the
    // evaluation protocol shows up here as a bit-level mismatch.
    assert_eq!(
        (same, run.dt.overall_cross_view, run.raw_sc),
        (FROZEN_SAME_VIEW, FROZEN_CROSS_VIEW, FROZEN_RAW_SC),
        "criterion 4: FAIL — values drifted from the frozen calibration"
    );
    pass(
        4,
        format!(
            "identical_view_mean={same} overall_cross_view={:.4} SC(K=5)={}",
            run.dt.overall_cross_view, run.raw_sc
        ),
    );
}

// ------------------------------------------------------------- criterion 5

#[test]
fn c05_adaptation_gains_at_least_15_points_and_lowers_the_stopping_criterion() {
    let run = &*RUN;
    let gain = run.adapted.overall_cross_view - run.dt.overall_cross_view;
    let initial_sc = run.trace.checkpoints[0].sc;
    assert!(
        gain >= 15.0,
        "criterion 5: FAIL — gain {gain:.2} points ({} -> {})",
        run.dt.overall_cross_view,
        run.adapted.overall_cross_view
    );
    assert!(
        run.trace.chosen.sc < initial_sc,
        "criterion 5: FAIL — chosen SC {} not below initial {}",
        run.trace.chosen.sc,
        initial_sc
    );
    assert!(
        run.adapt_seconds < 300.0,
        "criterion 5: FAIL — adaptation took {:.0}s, budget 300s",
        run.adapt_seconds
    );
    pass(
        5,
        format!(
            "cross-view {:.2} -> {:.2} (+{gain:.2}), SC {initial_sc} -> {} in {:.1}s",
            run.dt.overall_cross_view,
            run.adapted.overall_cross_view,
            run.trace.chosen.sc,
            run.adapt_seconds
        ),
    );
}

// ------------------------------------------------------------- criterion 6

#[test]
fn c06_confidence_ranking_and_curriculum_stages_trend_upward() {
    let run = &*RUN;

    // Stage-1 view of the raw training embeddings: the top-10% most
    // confident triplets must be at least as label-correct as the full pool.
    let dm = DistanceMatrix::from_records(&run.train).unwrap();
    let views = views_of(&run.train);
    let labels = labels_of(&run.train);
    let valid = select_triplets(&dm, &views, &run.opts.mining);
    let all = triplet_correctness(&valid, &labels).unwrap().expect("valid triplets exist");
    let top = triplet_correctness(&top_q(&valid, 10.0), &labels)
        .unwrap()
        .expect("top slice is non-empty");
    assert!(
        top.triplet_rate >= all.triplet_rate,
        "criterion 6: FAIL — top-10% rate {:.2} below all-valid rate {:.2}",
        top.triplet_rate,
        all.triplet_rate
    );

    // Per-stage correctness may dip once, by at most 2 points.
    let rates: Vec<f64> = run
        .trace
        .stages
        .iter()
        .map(|s| s.correct_triplet_rate.expect("labeled run reports stage rates"))
        .collect();
    let dips: Vec<(usize, f64)> = rates
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0])
        .map(|(i, w)| (i + 1, w[0] - w[1]))
        .collect();
    assert!(
        dips.len() <= 1 && dips.iter().all(|&(_, drop)| drop <= 2.0),
        "criterion 6: FAIL — stage rates {rates:?} dip more than allowed: {dips:?}"
    );
    pass(
        6,
        format!(
            "top-10% rate {:.2} >= all-valid {:.2}; stage rates {:?}",
            top.triplet_rate,
            all.triplet_rate,
            rates.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    );
}

// ------------------------------------------------------------- criterion 7

#[test]
fn c07_ablation_ladder_orders_dt_gouda_oracle_supervised() {
    let run = &*RUN;
    let slack = 1.0;

    let (train_idx, val_idx) = split_train_validation(&run.records);
    let train: Vec<GaitRecord> = train_idx.iter().map(|&i| run.records[i].clone()).collect();
    let val: Vec<GaitRecord> = val_idx.iter().map(|&i| run.records[i].clone()).collect();
    let (oracle_adapter, _) = adapt(
        &train,
        &val,
        &AdaptOptions { oracle_filter: true, ..run.opts.clone() },
    )
    .expect("oracle-filtered adaptation runs");
    let oracle = rank1_cross_view(&run.records, Some(&oracle_adapter)).unwrap().overall_cross_view;

    let supervised_adapter = supervised_adapt(
        &run.records,
        &run.opts.optim,
        run.opts.mining.margin,
        run.opts.schedule.batch_triplets,
        2000,
        run.opts.seed,
    )
    .expect("supervised skyline runs");
    let supervised =
        rank1_cross_view(&run.records, Some(&supervised_adapter)).unwrap().overall_cross_view;

    let dt = run.dt.overall_cross_view;
    let gouda = run.adapted.overall_cross_view;
    assert!(
        gouda >= dt - slack && oracle >= gouda - slack && supervised >= oracle - slack,
        "criterion 7: FAIL — ladder DT={dt:.2} <= gouda={gouda:.2} <= oracle={oracle:.2} \
         <= supervised={supervised:.2} violated beyond {slack}-point slack"
    );
    pass(7, format!("DT={dt:.2} <= gouda={gouda:.2} <= oracle={oracle:.2} <= supervised={supervised:.2} (slack {slack})"));
}

// ------------------------------------------------------------- criterion 8

#[test]
fn c08_stopping_criterion_bounds_and_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..50 {
        let n = rng.random_range(7..40);
        let d = rng.random_range(4..8);
        let k = rng.random_range(1..6).min(n - 1);
        let embeddings: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let views: Vec<ViewAngle> =
            (0..n).map(|_| ViewAngle::new(rng.random_range(0.0..360.0))).collect();
        let sc = stopping_criterion(&embeddings, &views, k, 10.0, AngleMode::Full).unwrap();
        assert!(
            (0.0..=k as f64).contains(&sc),
            "criterion 8: FAIL — case {case}: sc {sc} outside [0, {k}]"
        );
    }

    // All views equal: every neighbor is similar-view, so SC == K exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let embeddings: Vec<Vec<f64>> =
        (0..10).map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let same_views = vec![ViewAngle::new(90.0); 10];
    let all_same = stopping_criterion(&embeddings, &same_views, 3, 10.0, AngleMode::Full).unwrap();
    assert_eq!(all_same, 3.0, "criterion 8: FAIL — all-same-view SC should be K");

    // Four points whose nearest neighbor is always the cross-view twin.
    let paired = vec![
        vec![1.0, 0.0],
        vec![1.0, 0.01],
        vec![0.0, 1.0],
        vec![0.01, 1.0],
    ];
    let paired_views = [0.0, 180.0, 0.0, 180.0].map(ViewAngle::new).to_vec();
    let zero = stopping_criterion(&paired, &paired_views, 1, 10.0, AngleMode::Full).unwrap();
    assert_eq!(zero, 0.0, "criterion 8: FAIL — cross-view pairing should give SC 0");

    pass(8, format!("50 random instances in bounds; all-same-view SC={all_same}; paired SC={zero}"));
}

// ------------------------------------------------------------- criterion 9

fn gouda_run(config: &Path, out: &Path, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_gouda"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "criterion 9: FAIL — `gouda {args:?}` exited {:?}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn c09_synth_adapt_eval_twice_is_byte_identical() {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance.ini");
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        gouda_run(&config, out, &["synth"]);
        gouda_run(&config, out, &["adapt"]);
        gouda_run(&config, out, &["eval"]);
    }
    let files = [
        "embeddings.csv",
        "frames.csv",
        "synth_config.json",
        "adapter.csv",
        "trace.json",
        "triplets.csv",
        "rank1.json",
        "rank1_pairs.csv",
        "provenance.json",
    ];
    for file in files {
        let bytes_a = std::fs::read(a.join(file)).expect(file);
        let bytes_b = std::fs::read(b.join(file)).expect(file);
        assert!(
            bytes_a == bytes_b,
            "criterion 9: FAIL — {file} differs between identical runs"
        );
    }
    pass(9, format!("{} artifacts byte-identical across two full runs", files.len()));
}

// ------------------------------------------------------------ criterion 10

#[test]
fn c10_worked_instance_regression() {
    // Five samples, pinned pairwise distances, views 0/5/8/30/35.
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
    let dm = DistanceMatrix::from_rows(&rows).unwrap();
    let views: Vec<ViewAngle> = [0.0, 5.0, 8.0, 30.0, 35.0].map(ViewAngle::new).to_vec();

    let mined = select_triplets(&dm, &views, &MiningConfig::default());
    assert_eq!(
        mined,
        vec![
            Triplet { anchor: 0, positive: 3, negative: 2, confidence: 0.70 },
            Triplet { anchor: 1, positive: 3, negative: 2, confidence: 0.60 },
        ],
        "criterion 10: FAIL — mined triplets differ from the worked instance"
    );

    let halved = top_q(&mined, 50.0);
    assert_eq!(
        halved,
        vec![Triplet { anchor: 0, positive: 3, negative: 2, confidence: 0.70 }],
        "criterion 10: FAIL — top_q(50) should keep only the most confident triplet"
    );

    let labels: Vec<Option<String>> =
        ["A", "B", "A", "A", "B"].iter().map(|s| Some(s.to_string())).collect();
    let filtered = oracle_filter(&mined, &labels).unwrap();
    assert!(
        filtered.is_empty(),
        "criterion 10: FAIL — no triplet is fully label-correct, got {filtered:?}"
    );

    let rates = triplet_correctness(&mined, &labels).unwrap().unwrap();
    assert_eq!(
        (rates.triplet_rate, rates.positive_rate, rates.negative_rate),
        (0.0, 50.0, 50.0),
        "criterion 10: FAIL — correctness rates differ from the worked instance"
    );
    pass(10, "mining, top_q, oracle filter, and correctness all match the hand-derived instance".to_string());
}
