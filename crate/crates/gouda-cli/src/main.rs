//! `gouda` — reproducible pipeline driver: generate a view-biased synthetic
//! domain, adapt the embedding space on it, evaluate, and analyze, all from
//! one INI config.
//!
//! Artifacts land in the configured output directory under fixed names (see
//! the README). Every CSV opens with a `# config_hash=… seed=…` comment and
//! every run refreshes a `provenance.json` sidecar, so any file can be
//! traced back to the exact settings that produced it.
//!
//! Exit codes: 0 success, 1 a property check failed, 2 config or I/O error.

mod config;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gouda_core::eval::{
    correctness_report, positive_view_confusion, supervised_adapt, view_neighborhood_histogram,
    view_spacing,
};
use gouda_core::io::{
    attach_frames, read_adapter_csv, read_embeddings_csv, read_frames_csv, read_triplets_csv,
    write_adapter_csv, write_confusion_csv, write_embeddings_csv, write_frames_csv, write_json,
    write_rank1_pairs_csv, write_triplets_csv, Provenance,
};
use gouda_core::oracle::{check_gradient, check_mining_equivalence};
use gouda_core::train::adapt;
use gouda_core::{
    generate_target_domain, rank1_cross_view, split_train_validation, GaitRecord, GoudaError,
    Result, Triplet,
};

use config::RunConfig;

const EMBEDDINGS_CSV: &str = "embeddings.csv";
const FRAMES_CSV: &str = "frames.csv";
const SYNTH_CONFIG_JSON: &str = "synth_config.json";
const ADAPTER_CSV: &str = "adapter.csv";
const TRACE_JSON: &str = "trace.json";
const TRIPLETS_CSV: &str = "triplets.csv";
const RANK1_JSON: &str = "rank1.json";
const RANK1_PAIRS_CSV: &str = "rank1_pairs.csv";
const CORRECTNESS_JSON: &str = "correctness.json";
const CONFUSION_CSV: &str = "confusion.csv";
const HISTOGRAM_JSON: &str = "histogram.json";
const PROVENANCE_JSON: &str = "provenance.json";

/// Tolerance the gradient self-check must meet to pass.
const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "gouda",
    version,
    about = "View-driven unsupervised domain adaptation for gait embeddings"
)]
struct Cli {
    /// INI run config; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override every seed in the config, the generator's included.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic view-biased target domain.
    Synth,
    /// Train the adapter on a generated dataset in the output directory.
    Adapt,
    /// Rank-1 cross-view evaluation (raw embeddings unless --adapter).
    Eval {
        /// Adapter weights CSV to apply before evaluating.
        #[arg(long, value_name = "PATH")]
        adapter: Option<PathBuf>,
    },
    /// Triplet correctness, positive-view confusion, neighborhood histograms.
    Analyze {
        /// Adapter weights CSV for the post-adaptation histogram.
        #[arg(long, value_name = "PATH")]
        adapter: Option<PathBuf>,
    },
    /// Cross-check fast paths against naive references; exit 0 iff all pass.
    OracleCheck {
        /// Random mining instances to compare.
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Corrupt the production path to prove the checker can fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = config::load(cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
    match &cli.command {
        Command::Synth => cmd_synth(&cfg)?,
        Command::Adapt => cmd_adapt(&cfg)?,
        Command::Eval { adapter } => cmd_eval(&cfg, adapter.as_deref())?,
        Command::Analyze { adapter } => cmd_analyze(&cfg, adapter.as_deref())?,
        Command::OracleCheck { instances, inject_fault } => {
            return cmd_oracle_check(&cfg, *instances, *inject_fault);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| GoudaError::io(cfg.out_dir.display().to_string(), e))
}

fn write_provenance(cfg: &RunConfig, prov: &Provenance) -> Result<()> {
    write_json(&cfg.out_dir.join(PROVENANCE_JSON), prov)
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let data = generate_target_domain(&cfg.synth)?;
    ensure_out_dir(cfg)?;
    let prov = cfg.provenance();
    write_embeddings_csv(&cfg.out_dir.join(EMBEDDINGS_CSV), &data.records, Some(&prov))?;
    write_frames_csv(&cfg.out_dir.join(FRAMES_CSV), &data.records, Some(&prov))?;
    write_json(&cfg.out_dir.join(SYNTH_CONFIG_JSON), &data.config)?;
    write_provenance(cfg, &prov)?;
    println!(
        "wrote {} records ({} identities x {} views x {} seqs) to {}",
        data.records.len(),
        cfg.synth.n_identities,
        cfg.synth.views.len(),
        cfg.synth.seqs_per_id_view,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Embeddings plus (when present) per-frame latents from the output dir.
fn load_dataset(cfg: &RunConfig) -> Result<Vec<GaitRecord>> {
    let mut records = read_embeddings_csv(&cfg.out_dir.join(EMBEDDINGS_CSV))?;
    let frames_path = cfg.out_dir.join(FRAMES_CSV);
    if frames_path.exists() {
        attach_frames(&mut records, read_frames_csv(&frames_path)?);
    }
    Ok(records)
}

fn cmd_adapt(cfg: &RunConfig) -> Result<()> {
    let records = load_dataset(cfg)?;
    let prov = cfg.provenance();

    if cfg.supervised_iterations > 0 {
        let adapter = supervised_adapt(
            &records,
            &cfg.optim,
            cfg.mining.margin,
            cfg.schedule.batch_triplets,
            cfg.supervised_iterations,
            cfg.seed,
        )?;
        write_adapter_csv(&cfg.out_dir.join(ADAPTER_CSV), &adapter, Some(&prov))?;
        write_provenance(cfg, &prov)?;
        println!(
            "supervised: trained {} iterations on ground-truth triplets; wrote {}",
            cfg.supervised_iterations,
            cfg.out_dir.join(ADAPTER_CSV).display()
        );
        return Ok(());
    }

    let (train_idx, val_idx) = split_train_validation(&records);
    let train: Vec<GaitRecord> = train_idx.iter().map(|&i| records[i].clone()).collect();
    let val: Vec<GaitRecord> = val_idx.iter().map(|&i| records[i].clone()).collect();
    let (adapter, trace) = adapt(&train, &val, &cfg.adapt_options())?;

    write_adapter_csv(&cfg.out_dir.join(ADAPTER_CSV), &adapter, Some(&prov))?;
    write_json(&cfg.out_dir.join(TRACE_JSON), &trace)?;
    write_triplets_csv(&cfg.out_dir.join(TRIPLETS_CSV), &trace.stage_triplets, &train, Some(&prov))?;
    write_provenance(cfg, &prov)?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "adapted over {} stages ({} train / {} validation records); \
         chosen checkpoint: iteration {} with stopping criterion {:.4} (initial {:.4})",
        trace.stages.len(),
        train.len(),
        val.len(),
        trace.chosen.iter,
        trace.chosen.sc,
        trace.checkpoints[0].sc,
    );
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, adapter_path: Option<&Path>) -> Result<()> {
    let records = read_embeddings_csv(&cfg.out_dir.join(EMBEDDINGS_CSV))?;
    let adapter = adapter_path.map(read_adapter_csv).transpose()?;
    let report = rank1_cross_view(&records, adapter.as_ref())?;
    let prov = cfg.provenance();
    write_json(&cfg.out_dir.join(RANK1_JSON), &report)?;
    write_rank1_pairs_csv(&cfg.out_dir.join(RANK1_PAIRS_CSV), &report, Some(&prov))?;
    write_provenance(cfg, &prov)?;
    let label = if adapter.is_some() { "adapted" } else { "raw (direct testing)" };
    match report.identical_view_mean {
        Some(same) => println!(
            "{label}: overall_cross_view={:.2} identical_view_mean={:.2} \
             ({} gallery, {} probes)",
            report.overall_cross_view, same, report.n_gallery, report.n_probes
        ),
        None => println!(
            "{label}: overall_cross_view={:.2} ({} gallery, {} probes)",
            report.overall_cross_view, report.n_gallery, report.n_probes
        ),
    }
    Ok(())
}

fn cmd_analyze(cfg: &RunConfig, adapter_path: Option<&Path>) -> Result<()> {
    let records = read_embeddings_csv(&cfg.out_dir.join(EMBEDDINGS_CSV))?;
    let rows = read_triplets_csv(&cfg.out_dir.join(TRIPLETS_CSV))?;
    let adapter = adapter_path.map(read_adapter_csv).transpose()?;
    let prov = cfg.provenance();

    // Triplet files reference records by id; resolve against this dataset.
    let index: HashMap<&str, usize> =
        records.iter().enumerate().map(|(i, r)| (r.record_id.as_str(), i)).collect();
    let resolve = |id: &str| -> Result<usize> {
        index.get(id).copied().ok_or_else(|| {
            GoudaError::format(
                cfg.out_dir.join(TRIPLETS_CSV).display().to_string(),
                format!("triplet references unknown record {id:?}"),
            )
        })
    };
    let n_stages = rows.iter().map(|r| r.stage).max().unwrap_or(0);
    let mut stage_pools: Vec<Vec<Triplet>> = vec![Vec::new(); n_stages];
    for row in &rows {
        if row.stage == 0 {
            return Err(GoudaError::format(
                cfg.out_dir.join(TRIPLETS_CSV).display().to_string(),
                "stage numbers are 1-based".to_string(),
            ));
        }
        stage_pools[row.stage - 1].push(Triplet {
            anchor: resolve(&row.anchor_id)?,
            positive: resolve(&row.positive_id)?,
            negative: resolve(&row.negative_id)?,
            confidence: row.confidence,
        });
    }
    let pooled: Vec<Triplet> = stage_pools.iter().flatten().copied().collect();

    // Correctness needs ground-truth identities; skip quietly without them.
    let labels: Vec<Option<String>> = records.iter().map(|r| r.identity.clone()).collect();
    if labels.iter().all(|l| l.is_some()) {
        let report = correctness_report(&stage_pools, &labels)?;
        write_json(&cfg.out_dir.join(CORRECTNESS_JSON), &report)?;
        if let Some(r) = &report {
            println!(
                "triplet correctness: triplet={:.1} positive={:.1} negative={:.1} over {} triplets",
                r.triplet_rate,
                r.positive_rate,
                r.negative_rate,
                pooled.len()
            );
        }
    } else {
        println!("no identity labels; skipping {CORRECTNESS_JSON}");
    }

    let views: Vec<_> = records.iter().map(|r| r.view).collect();
    let bin_width = match cfg.eval_bin_width {
        Some(bw) => bw,
        None => view_spacing(&views, cfg.mining.angle_mode).ok_or_else(|| {
            GoudaError::InvalidConfig(
                "all views coincide; set [eval] bin_width explicitly".to_string(),
            )
        })?,
    };
    let confusion = positive_view_confusion(&pooled, &views, bin_width)?;
    write_confusion_csv(&cfg.out_dir.join(CONFUSION_CSV), &confusion, Some(&prov))?;

    let raw = view_neighborhood_histogram(
        &records,
        None,
        cfg.sc.k,
        cfg.mining.t_similar,
        cfg.mining.angle_mode,
    )?;
    let adapted = adapter
        .as_ref()
        .map(|a| {
            view_neighborhood_histogram(
                &records,
                Some(a),
                cfg.sc.k,
                cfg.mining.t_similar,
                cfg.mining.angle_mode,
            )
        })
        .transpose()?;
    match &adapted {
        Some(post) => println!(
            "similar-view neighborhoods (K={}): raw sc={:.4}, adapted sc={:.4}",
            cfg.sc.k, raw.sc, post.sc
        ),
        None => println!("similar-view neighborhoods (K={}): raw sc={:.4}", cfg.sc.k, raw.sc),
    }
    write_json(
        &cfg.out_dir.join(HISTOGRAM_JSON),
        &serde_json::json!({ "raw": raw, "adapted": adapted }),
    )?;
    write_provenance(cfg, &prov)?;
    Ok(())
}

fn cmd_oracle_check(cfg: &RunConfig, instances: usize, inject_fault: bool) -> Result<ExitCode> {
    let eq = check_mining_equivalence(instances, 50, 16, &cfg.mining, cfg.seed, inject_fault)?;
    println!(
        "mining vs reference: {}/{} instances exact ({} triplets compared)",
        eq.instances - eq.mismatched.len(),
        eq.instances,
        eq.total_triplets
    );
    if let Some(first) = eq.mismatched.first() {
        println!("  first mismatching instance: {first}");
    }

    let grad = check_gradient(20, 16, 8, cfg.mining.margin, cfg.seed)?;
    println!(
        "analytic vs finite-difference gradient: max relative error {:.3e} \
         over {} batches (tolerance {GRADIENT_TOLERANCE:e})",
        grad.max_rel_error, grad.batches
    );

    let ok = eq.passed() && grad.max_rel_error < GRADIENT_TOLERANCE;
    if ok {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("CHECKS FAILED");
        Ok(ExitCode::from(1))
    }
}
