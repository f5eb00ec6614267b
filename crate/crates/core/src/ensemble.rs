//! Majority voting over member classifiers.
//!
//! Each member casts one vote per frame. The ensemble outputs `Ordinary` only
//! when strictly more members vote `Ordinary` than `Key`; ties go to `Key`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::classifier::{self, ClassifierHead, Prediction};
use crate::dataset::FrameLabel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const DEFAULT_MEMBERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VoteTally {
    pub votes_for_zero: usize,
    pub votes_for_one: usize,
}

impl VoteTally {
    pub fn cast(&mut self, label: FrameLabel) {
        match label {
            FrameLabel::Ordinary => self.votes_for_zero += 1,
            FrameLabel::Key => self.votes_for_one += 1,
        }
    }

    pub fn members(&self) -> usize {
        self.votes_for_zero + self.votes_for_one
    }

    pub fn decision(&self) -> FrameLabel {
        if self.votes_for_zero > self.votes_for_one {
            FrameLabel::Ordinary
        } else {
            FrameLabel::Key
        }
    }

    pub fn key_fraction(&self) -> f64 {
        self.votes_for_one as f64 / self.members() as f64
    }
}

/// Per-frame tallies over aligned member label lists.
pub fn tally(member_labels: &[Vec<FrameLabel>]) -> Result<Vec<VoteTally>> {
    let first = member_labels.first().ok_or(Error::Empty("member list"))?;
    let frames = first.len();
    if let Some(bad) = member_labels.iter().find(|m| m.len() != frames) {
        return Err(Error::LengthMismatch {
            expected: frames,
            found: bad.len(),
        });
    }
    let mut tallies = vec![VoteTally::default(); frames];
    for member in member_labels {
        for (t, label) in tallies.iter_mut().zip(member) {
            t.cast(*label);
        }
    }
    Ok(tallies)
}

pub fn majority_vote(member_labels: &[Vec<FrameLabel>]) -> Result<Vec<FrameLabel>> {
    Ok(tally(member_labels)?
        .iter()
        .map(VoteTally::decision)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    /// Score is the fraction of members voting `Key`.
    pub predictions: Vec<Prediction>,
    pub member_labels: Vec<Vec<FrameLabel>>,
}

pub fn run_ensemble(
    heads: &[ClassifierHead],
    features: &FeatureMatrix,
    threshold: f64,
) -> Result<EnsembleOutput> {
    if heads.is_empty() {
        return Err(Error::Empty("member list"));
    }
    let member_labels = heads
        .iter()
        .map(|h| {
            Ok(classifier::predict(h, features, threshold)?
                .into_iter()
                .map(|p| p.label)
                .collect())
        })
        .collect::<Result<Vec<Vec<FrameLabel>>>>()?;
    let predictions = tally(&member_labels)?
        .into_iter()
        .zip(features.frame_ids())
        .map(|(t, id)| Prediction {
            frame_id: id.clone(),
            score: t.key_fraction(),
            label: t.decision(),
        })
        .collect();
    Ok(EnsembleOutput {
        predictions,
        member_labels,
    })
}

/// Text description of an ensemble run:
///
/// ```text
/// features=fused/GH010072.kff
/// threshold=0.5
/// member=heads/member_0.kfh
/// member=heads/member_1.kfh
/// ```
///
/// Relative paths resolve against the description file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub features: PathBuf,
    pub threshold: f64,
    pub members: Vec<PathBuf>,
}

impl EnsembleRun {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let (mut features, mut threshold, mut members) =
            (None, classifier::DEFAULT_THRESHOLD, Vec::new());
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("ensemble run", lineno + 1, "expected key=value"))?;
            match key.trim() {
                "features" => features = Some(base.join(value.trim())),
                "threshold" => {
                    threshold = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse("ensemble run", lineno + 1, "bad threshold"))?
                }
                "member" => members.push(base.join(value.trim())),
                other => {
                    return Err(Error::parse(
                        "ensemble run",
                        lineno + 1,
                        format!("unknown key {other}"),
                    ))
                }
            }
        }
        let features =
            features.ok_or_else(|| Error::parse("ensemble run", 0, "missing features"))?;
        if members.is_empty() {
            return Err(Error::Empty("member list"));
        }
        Ok(Self {
            features,
            threshold,
            members,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "features={}", self.features.display());
        let _ = writeln!(out, "threshold={}", self.threshold);
        for m in &self.members {
            let _ = writeln!(out, "member={}", m.display());
        }
        out
    }

    pub fn execute(&self) -> Result<EnsembleOutput> {
        let features = crate::features::load_features(&self.features)?;
        let heads = self
            .members
            .iter()
            .map(classifier::load_head)
            .collect::<Result<Vec<_>>>()?;
        run_ensemble(&heads, &features, self.threshold)
    }
}
