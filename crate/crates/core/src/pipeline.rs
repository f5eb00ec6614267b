//! End-to-end runs: synthetic data, fusion, training, prediction, evaluation.
//!
//! Directory conventions: a feature directory holds one `<video>.kff` per
//! manifest entry; fused directories mirror it with `D' = 2D` and add
//! `anchors.kff` (+ `anchors.kff.txt`); head directories hold
//! `member_<i>.kfh` plus `train_log.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, ClassifierHead, HeadKind, Optimizer, TrainConfig, TrainedHead};
use crate::dataset::{self, DatasetManifest, FrameLabel, Split, VideoEntry};
use crate::distance::{self, AnchorSet, DEFAULT_ANCHOR_COUNT};
use crate::ensemble::{self, DEFAULT_MEMBERS};
use crate::error::{Error, Result};
use crate::features::{self, FeatureMatrix, SyntheticSpec};
use crate::metrics::{self, DeltaSpec, EvalReport, ModelScores, VideoScore};

pub const ANCHOR_FILE: &str = "anchors.kff";
pub const TRAIN_LOG: &str = "train_log.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Members trained on raw features only.
    Raw,
    /// Members trained on fusion features only.
    Fusion,
    /// Raw members, fusion members, and the majority vote over fusion members.
    Ensemble,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(Mode::Raw),
            "fusion" => Ok(Mode::Fusion),
            "ensemble" => Ok(Mode::Ensemble),
            other => Err(Error::Usage(format!(
                "unknown mode {other:?} (raw | fusion | ensemble)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub feature_dir: PathBuf,
    pub output_dir: PathBuf,
    pub k: usize,
    /// Seeds anchor selection; member seeds default to `seed + i`.
    pub seed: u64,
    pub train: TrainConfig,
    pub members: usize,
    pub member_seeds: Option<Vec<u64>>,
    pub threshold: f64,
    pub mode: Mode,
    pub split: Split,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.csv"),
            feature_dir: PathBuf::from("features"),
            output_dir: PathBuf::from("out"),
            k: DEFAULT_ANCHOR_COUNT,
            seed: 7,
            train: TrainConfig::default(),
            members: DEFAULT_MEMBERS,
            member_seeds: None,
            threshold: classifier::DEFAULT_THRESHOLD,
            mode: Mode::Ensemble,
            split: Split::Test,
        }
    }
}

impl RunConfig {
    /// Applies `key=value` lines; relative paths resolve against `base`.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("config", lineno + 1, "expected key=value"))?;
            self.set(key.trim(), value.trim(), base)
                .map_err(|e| Error::parse("config", lineno + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Usage(format!("bad value {value:?} for {key}")))
        }
        match key {
            "manifest" => self.manifest = base.join(value),
            "features" | "feature_dir" => self.feature_dir = base.join(value),
            "out" | "output" | "output_dir" => self.output_dir = base.join(value),
            "k" => self.k = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "learning_rate" | "lr" => self.train.learning_rate = num(key, value)?,
            "weight_decay" => self.train.weight_decay = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "optimizer" => self.train.optimizer = value.parse::<Optimizer>()?,
            "head" => self.train.kind = value.parse::<HeadKind>()?,
            "members" => self.members = num(key, value)?,
            "member_seeds" => {
                self.member_seeds = Some(
                    value
                        .split(',')
                        .map(|s| num::<u64>(key, s.trim()))
                        .collect::<Result<_>>()?,
                )
            }
            "threshold" => self.threshold = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "split" => self.split = value.parse()?,
            other => return Err(Error::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        let seeds = match &self.member_seeds {
            Some(s) => s.clone(),
            None => (0..self.members as u64)
                .map(|i| self.seed.wrapping_add(i))
                .collect(),
        };
        if seeds.len() != self.members || self.members == 0 {
            return Err(Error::Usage(format!(
                "{} member seeds given for {} members",
                seeds.len(),
                self.members
            )));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(Error::Usage("member seeds must be distinct".into()));
        }
        Ok(seeds)
    }

    pub fn validate(&self) -> Result<()> {
        self.train
            .validate()
            .map_err(|e| Error::Usage(e.to_string()))?;
        self.seeds()?;
        if self.k == 0 {
            return Err(Error::Usage("k must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Usage("threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn feature_path(dir: &Path, video: &str) -> PathBuf {
    dir.join(format!("{video}.kff"))
}

/// Synthetic train/test videos for desk-scale runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRun {
    pub train_key: usize,
    pub train_ordinary: usize,
    pub test_key: usize,
    pub test_ordinary: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticRun {
    fn default() -> Self {
        Self {
            train_key: 50,
            train_ordinary: 50,
            test_key: 25,
            test_ordinary: 25,
            dim: 16,
            separation: 8.0,
            noise_scale: 1.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub manifest: PathBuf,
    pub feature_dir: PathBuf,
    pub warnings: Vec<String>,
}

/// Writes `manifest.csv`, `features/<video>.kff`, and `labels/<video>.labels`.
///
/// The train video uses `seed`, the test video `seed + 1`.
pub fn gen_synthetic(out_dir: &Path, run: &SyntheticRun) -> Result<Generated> {
    let feature_dir = out_dir.join("features");
    create_dir(&feature_dir)?;
    let mut warnings = Vec::new();
    let mut entries = Vec::new();
    let mut labels = BTreeMap::new();
    let videos = [
        (
            "synth_train",
            Split::Train,
            run.train_key,
            run.train_ordinary,
            run.seed,
        ),
        (
            "synth_test",
            Split::Test,
            run.test_key,
            run.test_ordinary,
            run.seed.wrapping_add(1),
        ),
    ];
    for (name, split, n_key, n_ordinary, seed) in videos {
        if n_key == 0 {
            warnings.push(format!("{name}: n_key=0, every frame is labeled ordinary"));
        }
        let spec = SyntheticSpec {
            video: name.into(),
            n_key,
            n_ordinary,
            dim: run.dim,
            separation: run.separation,
            noise_scale: run.noise_scale,
            seed,
        };
        let (matrix, frame_labels) = features::generate_synthetic(&spec)?;
        let path = feature_path(&feature_dir, name);
        features::save_features(&matrix, &path)?;
        let size_mb = std::fs::metadata(&path)
            .map_err(|e| Error::io(&path, e))?
            .len() as f64
            / 1e6;
        labels.extend(matrix.frame_ids().iter().cloned().zip(frame_labels));
        entries.push(VideoEntry {
            name: name.into(),
            memory_size_mb: size_mb,
            split,
            frame_count: matrix.n_rows() as u64,
            label_source: Some(format!("labels/{name}.labels")),
        });
    }
    let manifest = DatasetManifest::new(entries, labels)?;
    let manifest_path = out_dir.join("manifest.csv");
    dataset::save_manifest(&manifest, &manifest_path)?;
    Ok(Generated {
        manifest: manifest_path,
        feature_dir,
        warnings,
    })
}

/// Features and aligned labels of one video.
pub fn load_video(
    manifest: &DatasetManifest,
    feature_dir: &Path,
    video: &str,
) -> Result<(FeatureMatrix, Vec<FrameLabel>)> {
    let matrix = features::load_features(feature_path(feature_dir, video))?;
    let by_id: BTreeMap<_, _> = manifest.video_labels(video).into_iter().collect();
    let labels = matrix
        .frame_ids()
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("frame {id} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((matrix, labels))
}

/// All videos of a split stacked in manifest order.
pub fn load_split(
    manifest: &DatasetManifest,
    feature_dir: &Path,
    split: Split,
) -> Result<(FeatureMatrix, Vec<FrameLabel>)> {
    let mut parts = Vec::new();
    let mut labels = Vec::new();
    for name in manifest.split_names(split) {
        let (m, l) = load_video(manifest, feature_dir, name)?;
        parts.push(m);
        labels.extend(l);
    }
    if parts.is_empty() {
        return Err(Error::Invalid(format!("split {split} has no videos")));
    }
    Ok((FeatureMatrix::concat(split.tag(), &parts)?, labels))
}

/// Draws anchors from the training split and writes a fused copy of every video.
pub fn fuse_features(
    manifest: &DatasetManifest,
    feature_dir: &Path,
    out_dir: &Path,
    k: usize,
    seed: u64,
) -> Result<AnchorSet> {
    let (train, labels) = load_split(manifest, feature_dir, Split::Train)?;
    let anchors = distance::select_anchors(&train, &labels, k, seed)?;
    create_dir(out_dir)?;
    for entry in manifest.entries() {
        let raw = features::load_features(feature_path(feature_dir, &entry.name))?;
        let fused = distance::fuse_dataset(&raw, &anchors)?;
        features::save_features(&fused, feature_path(out_dir, &entry.name))?;
    }
    distance::save_anchors(&anchors, out_dir.join(ANCHOR_FILE))?;
    Ok(anchors)
}

pub fn member_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("member_{i}.kfh"))
}

/// Trains one head per seed on the training split; writes checkpoints and `train_log.csv`.
pub fn train_members(
    manifest: &DatasetManifest,
    feature_dir: &Path,
    out_dir: &Path,
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<TrainedHead>> {
    let (train, labels) = load_split(manifest, feature_dir, Split::Train)?;
    create_dir(out_dir)?;
    let mut log = String::from("member,seed,epoch,loss\n");
    let mut trained = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let config = TrainConfig {
            seed,
            ..base.clone()
        };
        let t = classifier::train_with_trace(&train, &labels, &config)?;
        classifier::save_head(&t.head, member_path(out_dir, i))?;
        for (epoch, loss) in t.epoch_losses.iter().enumerate() {
            let _ = writeln!(log, "{i},{seed},{epoch},{loss:e}");
        }
        trained.push(t);
    }
    write_file(&out_dir.join(TRAIN_LOG), log)?;
    Ok(trained)
}

/// Loads `member_0.kfh`, `member_1.kfh`, ... until the first gap.
pub fn load_members(dir: &Path) -> Result<Vec<ClassifierHead>> {
    let mut heads = Vec::new();
    while member_path(dir, heads.len()).exists() {
        heads.push(classifier::load_head(member_path(dir, heads.len()))?);
    }
    if heads.is_empty() {
        return Err(Error::Invalid(format!(
            "no member_0.kfh in {}",
            dir.display()
        )));
    }
    Ok(heads)
}

/// Per-video scores of every member (and optionally their majority vote) on one split.
pub fn score_split(
    manifest: &DatasetManifest,
    feature_dir: &Path,
    heads: &[ClassifierHead],
    split: Split,
    threshold: f64,
    table: &str,
    with_ensemble: bool,
) -> Result<Vec<ModelScores>> {
    let mut columns: Vec<ModelScores> = (0..heads.len())
        .map(|i| ModelScores {
            table: table.into(),
            model: format!("member_{i}"),
            videos: Vec::new(),
            published_average: None,
        })
        .collect();
    let mut vote = ModelScores {
        table: table.into(),
        model: "ensemble".into(),
        videos: Vec::new(),
        published_average: None,
    };
    let videos = manifest.split_names(split);
    if videos.is_empty() {
        return Err(Error::Invalid(format!("split {split} has no videos")));
    }
    for name in videos {
        let (matrix, actual) = load_video(manifest, feature_dir, name)?;
        let out = ensemble::run_ensemble(heads, &matrix, threshold)?;
        for (column, member) in columns.iter_mut().zip(&out.member_labels) {
            let counts = metrics::confusion(member, &actual)?;
            column.videos.push(VideoScore::from_counts(name, counts));
        }
        let voted: Vec<FrameLabel> = out.predictions.iter().map(|p| p.label).collect();
        vote.videos.push(VideoScore::from_counts(
            name,
            metrics::confusion(&voted, &actual)?,
        ));
    }
    if with_ensemble {
        columns.push(vote);
    }
    Ok(columns)
}

/// Writes `report.txt`, `report.csv`, and `report.json` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("report.txt"), report.to_text())?;
    write_file(&dir.join("report.csv"), report.to_csv())?;
    write_file(&dir.join("report.json"), report.to_json())
}

/// Replays published per-video F-scores through the report arithmetic.
pub fn report_from_scores(path: &Path, extra: &[DeltaSpec]) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let models = metrics::parse_scores_csv(&text)?;
    let mut deltas = metrics::default_deltas(&models);
    deltas.extend(extra.iter().cloned());
    metrics::aggregate_report(&models, &deltas)
}

/// Frame-level predictions as CSV: `frame_id,score,label,member_0,...`.
pub fn predictions_csv(out: &ensemble::EnsembleOutput) -> String {
    let mut text = String::from("frame_id,score,label");
    for i in 0..out.member_labels.len() {
        let _ = write!(text, ",member_{i}");
    }
    text.push('\n');
    for (row, p) in out.predictions.iter().enumerate() {
        let _ = write!(text, "{},{},{}", p.frame_id, p.score, p.label);
        for m in &out.member_labels {
            let _ = write!(text, ",{}", m[row]);
        }
        text.push('\n');
    }
    text
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub anchors: Option<AnchorSet>,
    pub raw_members: Vec<TrainedHead>,
    pub fusion_members: Vec<TrainedHead>,
}

/// Runs fusion, training, and evaluation as selected by `config.mode`.
///
/// Outputs go under `config.output_dir`: `fused/`, `heads/raw/`,
/// `heads/fusion/`, and the three report files.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let manifest = dataset::load_manifest(&config.manifest)?;
    let seeds = config.seeds()?;
    let out = &config.output_dir;
    create_dir(out)?;

    let mut columns = Vec::new();
    let mut raw_members = Vec::new();
    if matches!(config.mode, Mode::Raw | Mode::Ensemble) {
        let dir = out.join("heads").join("raw");
        raw_members = train_members(&manifest, &config.feature_dir, &dir, &config.train, &seeds)?;
        let heads: Vec<_> = raw_members.iter().map(|t| t.head.clone()).collect();
        columns.extend(score_split(
            &manifest,
            &config.feature_dir,
            &heads,
            config.split,
            config.threshold,
            "raw",
            false,
        )?);
    }
    let mut anchors = None;
    let mut fusion_members = Vec::new();
    if matches!(config.mode, Mode::Fusion | Mode::Ensemble) {
        let fused_dir = out.join("fused");
        anchors = Some(fuse_features(
            &manifest,
            &config.feature_dir,
            &fused_dir,
            config.k,
            config.seed,
        )?);
        let dir = out.join("heads").join("fusion");
        fusion_members = train_members(&manifest, &fused_dir, &dir, &config.train, &seeds)?;
        let heads: Vec<_> = fusion_members.iter().map(|t| t.head.clone()).collect();
        columns.extend(score_split(
            &manifest,
            &fused_dir,
            &heads,
            config.split,
            config.threshold,
            "fusion",
            config.mode == Mode::Ensemble,
        )?);
    }
    let report = metrics::aggregate_report(&columns, &metrics::default_deltas(&columns))?;
    write_report(&report, out)?;
    Ok(RunOutcome {
        report,
        anchors,
        raw_members,
        fusion_members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_precedence_and_parsing() {
        let mut c = RunConfig::default();
        c.apply_text(
            "k=4\nseed=3\nmembers=3\noptimizer=sgd\nhead=hidden:2\nmanifest=m.csv\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(c.k, 4);
        assert_eq!(c.manifest, PathBuf::from("/cfg/m.csv"));
        assert_eq!(c.train.kind, HeadKind::OneHidden(2));
        assert_eq!(c.seeds().unwrap(), [3, 4, 5]);
        c.set("k", "9", Path::new("")).unwrap();
        assert_eq!(c.k, 9);
        assert!(c.apply_text("bogus=1\n", Path::new("")).is_err());
    }

    #[test]
    fn member_seeds_must_be_distinct() {
        let c = RunConfig {
            members: 2,
            member_seeds: Some(vec![1, 1]),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            members: 3,
            member_seeds: Some(vec![1, 2]),
            ..RunConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn synthetic_generation_warns_on_no_key_frames() {
        let dir = tempfile::tempdir().unwrap();
        let run = SyntheticRun {
            train_key: 0,
            ..SyntheticRun::default()
        };
        let g = gen_synthetic(dir.path(), &run).unwrap();
        assert_eq!(g.warnings.len(), 1);
        let m = dataset::load_manifest(&g.manifest).unwrap();
        assert!(m
            .split_frames(Split::Train)
            .iter()
            .all(|(_, l)| *l == FrameLabel::Ordinary));
    }
}
