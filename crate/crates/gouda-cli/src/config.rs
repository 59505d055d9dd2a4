//! Run configuration: one INI file drives every subcommand.
//!
//! Sections mirror the pipeline — `[synth]`, `[mining]`, `[schedule]`,
//! `[optim]`, `[sc]`, `[eval]` — with `seed` and `out_dir` at top level.
//! Every key has a default, every key is overridable, and unknown keys or
//! sections are hard errors so a typo cannot silently run the wrong
//! experiment. Ablations ship as one-line diffs against the defaults.

use std::path::{Path, PathBuf};

use gouda_core::geometry::AngleMode;
use gouda_core::io::Provenance;
use gouda_core::mining::{CurriculumSchedule, MiningConfig};
use gouda_core::synth::SynthConfig;
use gouda_core::train::{AdaptOptions, OptimConfig, ScConfig};
use gouda_core::{GoudaError, Result, ViewAngle};
use ini::Ini;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub mining: MiningConfig,
    /// Drop label-incorrect triplets after mining (upper-bound ablation).
    pub oracle_filter: bool,
    pub schedule: CurriculumSchedule,
    pub optim: OptimConfig,
    /// When > 0, `adapt` trains on ground-truth identity triplets for this
    /// many iterations instead of running the unsupervised pipeline.
    pub supervised_iterations: usize,
    pub sc: ScConfig,
    /// Confusion-matrix bin width in degrees; defaults to the smallest
    /// spacing between views present in the data.
    pub eval_bin_width: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default_scenario(),
            mining: MiningConfig::default(),
            oracle_filter: false,
            schedule: CurriculumSchedule::default(),
            optim: OptimConfig::default(),
            supervised_iterations: 0,
            sc: ScConfig::default(),
            eval_bin_width: None,
            seed: 7,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Everything [`gouda_core::train::adapt`] needs, wired from the config.
    pub fn adapt_options(&self) -> AdaptOptions {
        AdaptOptions {
            mining: self.mining,
            schedule: self.schedule.clone(),
            optim: self.optim,
            sc: self.sc,
            oracle_filter: self.oracle_filter,
            seed: self.seed,
        }
    }

    /// Hash of every effective setting except `out_dir` — two runs of the
    /// same experiment written to different directories share a hash, so
    /// their artifacts stay byte-identical.
    pub fn provenance(&self) -> Provenance {
        let canon = format!(
            "synth={:?} mining={:?} oracle_filter={} schedule={:?} optim={:?} \
             supervised_iterations={} sc={:?} eval_bin_width={:?} seed={}",
            self.synth,
            self.mining,
            self.oracle_filter,
            self.schedule,
            self.optim,
            self.supervised_iterations,
            self.sc,
            self.eval_bin_width,
            self.seed,
        );
        let digest = Sha256::digest(canon.as_bytes());
        let config_hash = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Provenance { config_hash, seed: self.seed }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.mining.validate()?;
        self.schedule.validate()?;
        self.optim.validate()?;
        self.sc.validate()?;
        if let Some(bw) = self.eval_bin_width {
            if !(bw > 0.0 && bw <= 360.0) || !bw.is_finite() {
                return Err(GoudaError::InvalidConfig(format!(
                    "[eval] bin_width must be in (0, 360], got {bw}"
                )));
            }
        }
        Ok(())
    }
}

/// Load a config file (or pure defaults when `path` is `None`) and apply the
/// command-line overrides. `--seed` replaces *every* seed, including the
/// generator's; a `[synth] seed` key otherwise decouples data generation
/// from training randomness.
pub fn load(
    path: Option<&Path>,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut synth_seed_explicit = false;

    if let Some(path) = path {
        let display = path.display().to_string();
        let ini = Ini::load_from_file(path)
            .map_err(|e| GoudaError::format(display.clone(), e.to_string()))?;
        for (section, props) in ini.iter() {
            match section {
                None => {
                    for (key, value) in props.iter() {
                        match key {
                            "seed" => cfg.seed = parse("", key, value)?,
                            "out_dir" => cfg.out_dir = PathBuf::from(value),
                            _ => return Err(unknown_key("", key)),
                        }
                    }
                }
                Some("synth") => {
                    for (key, value) in props.iter() {
                        let s = &mut cfg.synth;
                        match key {
                            "n_identities" => s.n_identities = parse("synth", key, value)?,
                            "views" => s.views = parse_views(value)?,
                            "seqs_per_id_view" => s.seqs_per_id_view = parse("synth", key, value)?,
                            "frames_per_seq" => s.frames_per_seq = parse("synth", key, value)?,
                            "dim" => s.dim = parse("synth", key, value)?,
                            "id_strength" => s.id_strength = parse("synth", key, value)?,
                            "view_bias" => s.view_bias = parse("synth", key, value)?,
                            "gait_phase_amp" => s.gait_phase_amp = parse("synth", key, value)?,
                            "noise" => s.noise = parse("synth", key, value)?,
                            "seed" => {
                                s.seed = parse("synth", key, value)?;
                                synth_seed_explicit = true;
                            }
                            _ => return Err(unknown_key("synth", key)),
                        }
                    }
                }
                Some("mining") => {
                    for (key, value) in props.iter() {
                        match key {
                            "t_similar" => cfg.mining.t_similar = parse("mining", key, value)?,
                            "t_cross" => cfg.mining.t_cross = parse("mining", key, value)?,
                            "margin" => cfg.mining.margin = parse("mining", key, value)?,
                            "mode" => cfg.mining.angle_mode = parse_mode(value)?,
                            "oracle_filter" => cfg.oracle_filter = parse_bool("mining", key, value)?,
                            _ => return Err(unknown_key("mining", key)),
                        }
                    }
                }
                Some("schedule") => {
                    for (key, value) in props.iter() {
                        match key {
                            "stage_q" => cfg.schedule.stage_q_percent = parse_list("schedule", key, value)?,
                            "replay_factor" => cfg.schedule.replay_factor = parse("schedule", key, value)?,
                            "batch_triplets" => cfg.schedule.batch_triplets = parse("schedule", key, value)?,
                            _ => return Err(unknown_key("schedule", key)),
                        }
                    }
                }
                Some("optim") => {
                    for (key, value) in props.iter() {
                        match key {
                            "learning_rate" => cfg.optim.learning_rate = parse("optim", key, value)?,
                            "weight_decay" => cfg.optim.weight_decay = parse("optim", key, value)?,
                            "gouda_weight" => cfg.optim.loss_weights.gouda = parse("optim", key, value)?,
                            "ssl_weight" => cfg.optim.loss_weights.ssl = parse("optim", key, value)?,
                            "supervised_iterations" => {
                                cfg.supervised_iterations = parse("optim", key, value)?
                            }
                            _ => return Err(unknown_key("optim", key)),
                        }
                    }
                }
                Some("sc") => {
                    for (key, value) in props.iter() {
                        match key {
                            "k" => cfg.sc.k = parse("sc", key, value)?,
                            "checkpoint_every" => cfg.sc.checkpoint_every = parse("sc", key, value)?,
                            _ => return Err(unknown_key("sc", key)),
                        }
                    }
                }
                Some("eval") => {
                    for (key, value) in props.iter() {
                        match key {
                            "bin_width" => cfg.eval_bin_width = Some(parse("eval", key, value)?),
                            _ => return Err(unknown_key("eval", key)),
                        }
                    }
                }
                Some(other) => {
                    return Err(GoudaError::InvalidConfig(format!(
                        "unknown config section [{other}]"
                    )));
                }
            }
        }
    }

    // The generator follows the run seed unless the file pinned its own.
    if !synth_seed_explicit {
        cfg.synth.seed = cfg.seed;
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(out) = out_override {
        cfg.out_dir = out.to_path_buf();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn unknown_key(section: &str, key: &str) -> GoudaError {
    if section.is_empty() {
        GoudaError::InvalidConfig(format!("unknown top-level config key `{key}`"))
    } else {
        GoudaError::InvalidConfig(format!("unknown config key `{key}` in section [{section}]"))
    }
}

fn parse<T>(section: &str, key: &str, raw: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e| {
        let place = if section.is_empty() { String::new() } else { format!("[{section}] ") };
        GoudaError::InvalidConfig(format!("{place}{key}: cannot parse {raw:?}: {e}"))
    })
}

fn parse_bool(section: &str, key: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(GoudaError::InvalidConfig(format!(
            "[{section}] {key}: expected true/false, got {other:?}"
        ))),
    }
}

fn parse_mode(raw: &str) -> Result<AngleMode> {
    match raw.trim() {
        "full" => Ok(AngleMode::Full),
        "axial" => Ok(AngleMode::Axial),
        other => Err(GoudaError::InvalidConfig(format!(
            "[mining] mode: expected full or axial, got {other:?}"
        ))),
    }
}

fn parse_list(section: &str, key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',').map(|tok| parse(section, key, tok)).collect()
}

fn parse_views(raw: &str) -> Result<Vec<ViewAngle>> {
    Ok(parse_list("synth", "views", raw)?.into_iter().map(ViewAngle::new).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_ini(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ini");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn defaults_are_the_reference_settings() {
        let cfg = load(None, None, None).unwrap();
        assert_eq!(cfg.mining.t_similar, 10.0);
        assert_eq!(cfg.mining.t_cross, 20.0);
        assert_eq!(cfg.mining.margin, 0.2);
        assert_eq!(cfg.schedule.stage_q_percent, vec![10.0, 25.0, 50.0, 100.0]);
        assert_eq!(cfg.schedule.replay_factor, 10);
        assert_eq!(cfg.schedule.batch_triplets, 32);
        assert_eq!(cfg.optim.learning_rate, 1e-5);
        assert_eq!(cfg.optim.weight_decay, 5e-4);
        assert_eq!(cfg.sc.k, 5);
        assert_eq!(cfg.sc.checkpoint_every, 200);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.synth.seed, 7);
        assert!(!cfg.oracle_filter);
        assert_eq!(cfg.supervised_iterations, 0);
    }

    #[test]
    fn file_overrides_land_in_the_right_fields() {
        let (_dir, path) = write_ini(
            "seed = 11\n\
             [synth]\n\
             n_identities = 12\n\
             views = 0, 90, 180, 270\n\
             dim = 16\n\
             [mining]\n\
             t_similar = 15\n\
             mode = axial\n\
             oracle_filter = true\n\
             [schedule]\n\
             stage_q = 50, 100\n\
             [optim]\n\
             learning_rate = 0.01\n\
             ssl_weight = 0\n\
             supervised_iterations = 40\n\
             [sc]\n\
             k = 3\n\
             [eval]\n\
             bin_width = 30\n",
        );
        let cfg = load(Some(&path), None, None).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.synth.seed, 11); // follows the run seed
        assert_eq!(cfg.synth.n_identities, 12);
        assert_eq!(cfg.synth.views.len(), 4);
        assert_eq!(cfg.synth.views[1].degrees(), 90.0);
        assert_eq!(cfg.mining.t_similar, 15.0);
        assert_eq!(cfg.mining.angle_mode, AngleMode::Axial);
        assert!(cfg.oracle_filter);
        assert_eq!(cfg.schedule.stage_q_percent, vec![50.0, 100.0]);
        assert_eq!(cfg.optim.learning_rate, 0.01);
        assert_eq!(cfg.optim.loss_weights.ssl, 0.0);
        assert_eq!(cfg.supervised_iterations, 40);
        assert_eq!(cfg.sc.k, 3);
        assert_eq!(cfg.eval_bin_width, Some(30.0));
    }

    #[test]
    fn explicit_synth_seed_decouples_generation_from_training() {
        let (_dir, path) = write_ini("seed = 11\n[synth]\nseed = 3\n");
        let cfg = load(Some(&path), None, None).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.synth.seed, 3);
    }

    #[test]
    fn seed_flag_overrides_every_seed() {
        let (_dir, path) = write_ini("seed = 11\n[synth]\nseed = 3\n");
        let cfg = load(Some(&path), Some(5), None).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.synth.seed, 5);
    }

    #[test]
    fn unknown_key_and_section_are_named_errors() {
        let (_dir, path) = write_ini("[mining]\nt_simlar = 10\n");
        let err = load(Some(&path), None, None).unwrap_err();
        assert!(err.to_string().contains("t_simlar"), "{err}");
        assert!(err.to_string().contains("[mining]"), "{err}");

        let (_dir2, path2) = write_ini("[minning]\nt_similar = 10\n");
        let err2 = load(Some(&path2), None, None).unwrap_err();
        assert!(err2.to_string().contains("[minning]"), "{err2}");
    }

    #[test]
    fn bad_values_name_the_key() {
        let (_dir, path) = write_ini("[optim]\nlearning_rate = fast\n");
        let err = load(Some(&path), None, None).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");

        let (_dir2, path2) = write_ini("[synth]\nn_identities = 1\n");
        let err2 = load(Some(&path2), None, None).unwrap_err();
        assert!(err2.to_string().contains("n_identities"), "{err2}");
    }

    #[test]
    fn hash_ignores_out_dir_but_tracks_settings() {
        let a = load(None, None, Some(Path::new("/tmp/a"))).unwrap();
        let b = load(None, None, Some(Path::new("/tmp/b"))).unwrap();
        assert_eq!(a.provenance(), b.provenance());
        assert_eq!(a.provenance().config_hash.len(), 16);

        let c = load(None, Some(8), None).unwrap();
        assert_ne!(a.provenance().config_hash, c.provenance().config_hash);
        assert_eq!(c.provenance().seed, 8);

        let (_dir, path) = write_ini("[mining]\nmargin = 0.3\n");
        let d = load(Some(&path), None, None).unwrap();
        assert_ne!(a.provenance().config_hash, d.provenance().config_hash);
    }
}
