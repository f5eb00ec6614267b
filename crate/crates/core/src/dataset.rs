//! Video manifest, frame labels, and split bookkeeping.
//!
//! A manifest is a line-oriented text file with one video per line:
//!
//! ```text
//! # name,size_mb,split,frame_count,label_path
//! GH010063,27.9,train,0,labels/GH010063.labels
//! ```
//!
//! `label_path` is resolved relative to the manifest's directory; `-` (or an
//! empty field) means the video has no labels. A label file holds one
//! `frame_index,label` line per frame with label `0` (ordinary) or `1` (key).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Table of the eighteen recorded videos, their sizes and split assignment.
pub const BUNDLED_MANIFEST: &str = include_str!("../data/bundled_manifest.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameLabel {
    Ordinary = 0,
    Key = 1,
}

impl FrameLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_key(self) -> bool {
        self == FrameLabel::Key
    }

    /// Target value for binary cross-entropy.
    pub fn target(self) -> f64 {
        f64::from(self.as_u8())
    }
}

impl TryFrom<u8> for FrameLabel {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            0 => Ok(FrameLabel::Ordinary),
            1 => Ok(FrameLabel::Key),
            other => Err(Error::Invalid(format!(
                "frame label must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl FromStr for FrameLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" => Ok(FrameLabel::Ordinary),
            "1" => Ok(FrameLabel::Key),
            other => Err(Error::Invalid(format!(
                "frame label must be 0 or 1, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("invalid split tag {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// `<video-name>/<zero-padded 6-digit frame index>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameId {
    pub video: String,
    pub index: u32,
}

impl FrameId {
    pub fn new(video: impl Into<String>, index: u32) -> Self {
        Self {
            video: video.into(),
            index,
        }
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:06}", self.video, self.index)
    }
}

impl FromStr for FrameId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (video, index) = s
            .rsplit_once('/')
            .ok_or_else(|| Error::Invalid(format!("frame id {s:?} lacks '/'")))?;
        let index = index
            .parse()
            .map_err(|_| Error::Invalid(format!("frame id {s:?} has a bad index")))?;
        Ok(FrameId::new(video, index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub name: String,
    pub memory_size_mb: f64,
    pub split: Split,
    pub frame_count: u64,
    /// Relative to the manifest directory; `None` when the video is unlabeled.
    pub label_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    entries: Vec<VideoEntry>,
    labels: BTreeMap<FrameId, FrameLabel>,
}

impl DatasetManifest {
    /// Validates names, sizes, and that each label points at a listed video.
    pub fn new(
        mut entries: Vec<VideoEntry>,
        labels: BTreeMap<FrameId, FrameLabel>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for entry in &entries {
            if entry.name.is_empty() || entry.name.contains(['/', ',']) {
                return Err(Error::Invalid(format!("bad video name {:?}", entry.name)));
            }
            if !seen.insert(entry.name.as_str()) {
                return Err(Error::Invalid(format!(
                    "duplicate video name {}",
                    entry.name
                )));
            }
            if !(entry.memory_size_mb.is_finite() && entry.memory_size_mb >= 0.0) {
                return Err(Error::Invalid(format!(
                    "video {} has invalid size {}",
                    entry.name, entry.memory_size_mb
                )));
            }
        }
        if let Some(id) = labels.keys().find(|id| !seen.contains(id.video.as_str())) {
            return Err(Error::Invalid(format!(
                "label {id} references unknown video"
            )));
        }
        for entry in &mut entries {
            let count = labels.range(video_range(&entry.name)).count() as u64;
            if entry.frame_count == 0 {
                entry.frame_count = count;
            } else if let Some((id, _)) = labels
                .range(video_range(&entry.name))
                .find(|(id, _)| u64::from(id.index) >= entry.frame_count)
            {
                return Err(Error::Invalid(format!(
                    "label {id} is beyond frame_count {}",
                    entry.frame_count
                )));
            }
        }
        Ok(Self { entries, labels })
    }

    pub fn entries(&self) -> &[VideoEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&VideoEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn labels(&self) -> &BTreeMap<FrameId, FrameLabel> {
        &self.labels
    }

    /// Labels of one video in frame order.
    pub fn video_labels(&self, video: &str) -> Vec<(FrameId, FrameLabel)> {
        self.labels
            .range(video_range(video))
            .map(|(id, label)| (id.clone(), *label))
            .collect()
    }

    pub fn split_names(&self, split: Split) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.name.as_str())
            .collect()
    }

    /// Entry counts as (train, validation, test).
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let count = |s| self.entries.iter().filter(|e| e.split == s).count();
        (
            count(Split::Train),
            count(Split::Validation),
            count(Split::Test),
        )
    }

    /// Labeled frames of every video in `split`, manifest order then frame order.
    pub fn split_frames(&self, split: Split) -> Vec<(FrameId, FrameLabel)> {
        self.split_names(split)
            .into_iter()
            .flat_map(|name| self.video_labels(name))
            .collect()
    }

    pub fn average_memory_size(&self) -> Result<f64> {
        if self.entries.is_empty() {
            return Err(Error::Empty("manifest"));
        }
        let total: f64 = self.entries.iter().map(|e| e.memory_size_mb).sum();
        Ok(total / self.entries.len() as f64)
    }
}

fn video_range(video: &str) -> std::ops::RangeInclusive<FrameId> {
    FrameId::new(video, 0)..=FrameId::new(video, u32::MAX)
}

/// Parses manifest text; label files are not read.
pub fn parse_manifest_entries(text: &str, context: &str) -> Result<Vec<VideoEntry>> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                context,
                lineno + 1,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let bad = |what: &str| Error::parse(context, lineno + 1, format!("bad {what}"));
        let memory_size_mb: f64 = fields[1].parse().map_err(|_| bad("size_mb"))?;
        let split: Split = fields[2]
            .parse()
            .map_err(|e: Error| Error::parse(context, lineno + 1, e.to_string()))?;
        let frame_count: u64 = fields[3].parse().map_err(|_| bad("frame_count"))?;
        let label_source = match fields[4] {
            "" | "-" => None,
            p => Some(p.to_string()),
        };
        entries.push(VideoEntry {
            name: fields[0].to_string(),
            memory_size_mb,
            split,
            frame_count,
            label_source,
        });
    }
    Ok(entries)
}

/// Parses a label file for `video` into frame ids and labels.
pub fn parse_labels(text: &str, video: &str, context: &str) -> Result<Vec<(FrameId, FrameLabel)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (index, label) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(context, lineno + 1, "expected frame_index,label"))?;
        let index: u32 = index
            .trim()
            .parse()
            .map_err(|_| Error::parse(context, lineno + 1, "bad frame index"))?;
        let label: FrameLabel = label
            .parse()
            .map_err(|e: Error| Error::parse(context, lineno + 1, e.to_string()))?;
        out.push((FrameId::new(video, index), label));
    }
    Ok(out)
}

pub fn format_labels(labels: &[(FrameId, FrameLabel)]) -> String {
    let mut out = String::new();
    for (id, label) in labels {
        out.push_str(&format!("{},{}\n", id.index, label));
    }
    out
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries = parse_manifest_entries(&text, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut labels = BTreeMap::new();
    for entry in &entries {
        let Some(rel) = &entry.label_source else {
            continue;
        };
        let label_path = base.join(rel);
        let text = std::fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
        for (id, label) in parse_labels(&text, &entry.name, &label_path.display().to_string())? {
            if labels.insert(id.clone(), label).is_some() {
                return Err(Error::Invalid(format!("frame {id} labeled twice")));
            }
        }
    }
    DatasetManifest::new(entries, labels)
}

/// Writes the manifest and one label file per labeled video.
///
/// Videos with labels but no `label_source` get `labels/<name>.labels`.
/// Returns the manifest as written (with label paths filled in).
pub fn save_manifest(
    manifest: &DatasetManifest,
    path: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut written = manifest.clone();
    let mut text = String::from("# name,size_mb,split,frame_count,label_path\n");
    for entry in &mut written.entries {
        let labels = manifest.video_labels(&entry.name);
        if !labels.is_empty() {
            let rel = entry
                .label_source
                .get_or_insert_with(|| format!("labels/{}.labels", entry.name))
                .clone();
            let label_path: PathBuf = base.join(rel);
            if let Some(dir) = label_path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(&label_path, format_labels(&labels))
                .map_err(|e| Error::io(&label_path, e))?;
        } else {
            entry.label_source = None;
        }
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            entry.name,
            entry.memory_size_mb,
            entry.split,
            entry.frame_count,
            entry.label_source.as_deref().unwrap_or("-"),
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(written)
}

/// The bundled eighteen-video manifest (sizes and splits only, no labels).
pub fn bundled_manifest() -> DatasetManifest {
    let entries = parse_manifest_entries(BUNDLED_MANIFEST, "bundled_manifest.csv")
        .expect("bundled manifest parses");
    DatasetManifest::new(entries, BTreeMap::new()).expect("bundled manifest is valid")
}
