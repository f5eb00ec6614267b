//! Confusion counts, precision/recall/F-score, and per-video report aggregation.
//!
//! Precision and recall use the usual ratios `tp/(tp+fp)` and `tp/(tp+fn)`;
//! F is their harmonic mean. A zero denominator yields 0 rather than NaN.
//! Internal values live in `[0, 1]`; reports print them ×100.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::FrameLabel;
use crate::error::{Error, Result};

/// Largest gap between a published average and its recomputed value that is not flagged.
pub const AVERAGE_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Positive class is `Key`.
pub fn confusion(predicted: &[FrameLabel], actual: &[FrameLabel]) -> Result<ConfusionCounts> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    let mut c = ConfusionCounts::default();
    for (p, a) in predicted.iter().zip(actual) {
        match (p, a) {
            (FrameLabel::Key, FrameLabel::Key) => c.tp += 1,
            (FrameLabel::Key, FrameLabel::Ordinary) => c.fp += 1,
            (FrameLabel::Ordinary, FrameLabel::Key) => c.fn_ += 1,
            (FrameLabel::Ordinary, FrameLabel::Ordinary) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

pub fn precision_recall_f(c: &ConfusionCounts) -> Scores {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores {
        precision,
        recall,
        f,
    }
}

/// One model's result on one video; all values ×100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video: String,
    pub f_score: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub counts: Option<ConfusionCounts>,
}

impl VideoScore {
    pub fn from_counts(video: impl Into<String>, counts: ConfusionCounts) -> Self {
        let s = precision_recall_f(&counts);
        Self {
            video: video.into(),
            f_score: 100.0 * s.f,
            precision: Some(100.0 * s.precision),
            recall: Some(100.0 * s.recall),
            counts: Some(counts),
        }
    }

    pub fn f_only(video: impl Into<String>, f_score: f64) -> Self {
        Self {
            video: video.into(),
            f_score,
            precision: None,
            recall: None,
            counts: None,
        }
    }
}

/// Input to [`aggregate_report`]: one column of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub table: String,
    pub model: String,
    pub videos: Vec<VideoScore>,
    /// An average printed alongside the per-video values, kept for cross-checking.
    pub published_average: Option<f64>,
}

impl ModelScores {
    pub fn key(&self) -> String {
        format!("{}/{}", self.table, self.model)
    }

    pub fn is_ensemble(&self) -> bool {
        self.model.to_ascii_lowercase().contains("ensemble")
    }
}

/// `name = mean(target averages) − mean(baseline averages)`; models named by `table/model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSpec {
    pub name: String,
    pub target: Vec<String>,
    pub baseline: Vec<String>,
}

impl std::str::FromStr for DeltaSpec {
    type Err = Error;

    /// `NAME=table/a+table/b:table/c+table/d`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Usage(format!(
                "delta {s:?} must look like NAME=TARGET[+TARGET]:BASELINE[+BASELINE]"
            ))
        };
        let (name, rest) = s.split_once('=').ok_or_else(bad)?;
        let (target, baseline) = rest.split_once(':').ok_or_else(bad)?;
        let list = |v: &str| {
            v.split('+')
                .map(|m| m.trim().to_string())
                .filter(|m| !m.is_empty())
                .collect::<Vec<_>>()
        };
        let spec = DeltaSpec {
            name: name.trim().to_string(),
            target: list(target),
            baseline: list(baseline),
        };
        if spec.name.is_empty() || spec.target.is_empty() || spec.baseline.is_empty() {
            return Err(bad());
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub table: String,
    pub model: String,
    pub videos: Vec<VideoScore>,
    /// Mean F×100 over videos (the published average when no per-video values exist).
    pub average: f64,
    pub published_average: Option<f64>,
}

impl ModelSummary {
    pub fn key(&self) -> String {
        format!("{}/{}", self.table, self.model)
    }

    /// Published minus recomputed average, when both exist and differ beyond tolerance.
    pub fn average_discrepancy(&self) -> Option<f64> {
        let published = self.published_average?;
        if self.videos.is_empty() {
            return None;
        }
        let gap = published - self.average;
        (gap.abs() > AVERAGE_TOLERANCE).then_some(gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<ModelSummary>,
    pub deltas: Vec<Delta>,
}

impl EvalReport {
    pub fn model(&self, key: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.key() == key)
    }

    pub fn delta(&self, name: &str) -> Option<f64> {
        self.deltas.iter().find(|d| d.name == name).map(|d| d.value)
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate_report(models: &[ModelScores], deltas: &[DeltaSpec]) -> Result<EvalReport> {
    let mut reference: Option<(String, BTreeSet<&str>)> = None;
    let mut keys = BTreeSet::new();
    let mut summaries = Vec::with_capacity(models.len());
    for m in models {
        if !keys.insert(m.key()) {
            return Err(Error::Invalid(format!("model {} listed twice", m.key())));
        }
        for v in &m.videos {
            if !(0.0..=100.0).contains(&v.f_score) {
                return Err(Error::Invalid(format!(
                    "{} on {}: F {} outside [0, 100]",
                    m.key(),
                    v.video,
                    v.f_score
                )));
            }
        }
        let average = match (
            mean(m.videos.iter().map(|v| v.f_score)),
            m.published_average,
        ) {
            (Some(avg), _) => {
                let videos: BTreeSet<&str> = m.videos.iter().map(|v| v.video.as_str()).collect();
                if videos.len() != m.videos.len() {
                    return Err(Error::Invalid(format!("model {} repeats a video", m.key())));
                }
                match &reference {
                    None => reference = Some((m.key(), videos)),
                    Some((first, set)) if *set != videos => {
                        return Err(Error::Invalid(format!(
                            "inconsistent video sets: {} and {} cover different videos",
                            first,
                            m.key()
                        )))
                    }
                    Some(_) => {}
                }
                avg
            }
            (None, Some(published)) => published,
            (None, None) => return Err(Error::Invalid(format!("model {} has no scores", m.key()))),
        };
        summaries.push(ModelSummary {
            table: m.table.clone(),
            model: m.model.clone(),
            videos: m.videos.clone(),
            average,
            published_average: m.published_average,
        });
    }

    let lookup = |key: &str| -> Result<f64> {
        summaries
            .iter()
            .find(|s| s.key() == key)
            .map(|s| s.average)
            .ok_or_else(|| Error::Invalid(format!("delta references unknown model {key}")))
    };
    let mut out = Vec::with_capacity(deltas.len());
    for spec in deltas {
        let target = mean(
            spec.target
                .iter()
                .map(|k| lookup(k))
                .collect::<Result<Vec<_>>>()?,
        );
        let baseline = mean(
            spec.baseline
                .iter()
                .map(|k| lookup(k))
                .collect::<Result<Vec<_>>>()?,
        );
        match (target, baseline) {
            (Some(t), Some(b)) => out.push(Delta {
                name: spec.name.clone(),
                value: t - b,
            }),
            _ => {
                return Err(Error::Invalid(format!(
                    "delta {} has an empty side",
                    spec.name
                )))
            }
        }
    }
    Ok(EvalReport {
        models: summaries,
        deltas: out,
    })
}

/// Improvement deltas implied by the table layout.
///
/// With tables in order of first appearance, and "members" being the
/// non-ensemble models of a table:
/// * `<table> vs <first>`: mean member average of a later table minus that of the first;
/// * `<model>: <table> vs <first>`: the same model name present in both tables;
/// * `<ensemble> vs <table>`: an ensemble's average minus each table's member mean.
pub fn default_deltas(models: &[ModelScores]) -> Vec<DeltaSpec> {
    let mut tables: Vec<&str> = Vec::new();
    for m in models {
        if !tables.contains(&m.table.as_str()) {
            tables.push(&m.table);
        }
    }
    let members = |table: &str| -> Vec<String> {
        models
            .iter()
            .filter(|m| m.table == table && !m.is_ensemble())
            .map(ModelScores::key)
            .collect()
    };
    let mut specs = Vec::new();
    if let Some((first, later)) = tables.split_first() {
        for t in later {
            let (target, baseline) = (members(t), members(first));
            if !target.is_empty() && !baseline.is_empty() {
                specs.push(DeltaSpec {
                    name: format!("{t} vs {first}"),
                    target,
                    baseline,
                });
            }
            for m in models.iter().filter(|m| m.table == *t && !m.is_ensemble()) {
                if models
                    .iter()
                    .any(|b| b.table == *first && b.model == m.model)
                {
                    specs.push(DeltaSpec {
                        name: format!("{}: {t} vs {first}", m.model),
                        target: vec![m.key()],
                        baseline: vec![format!("{first}/{}", m.model)],
                    });
                }
            }
        }
    }
    for e in models.iter().filter(|m| m.is_ensemble()) {
        for t in &tables {
            let baseline = members(t);
            if !baseline.is_empty() {
                specs.push(DeltaSpec {
                    name: format!("{} vs {t}", e.key()),
                    target: vec![e.key()],
                    baseline,
                });
            }
        }
    }
    specs
}

/// Reads `table,model,video,f_score` rows; a video named `Average` records a published average.
pub fn parse_scores_csv(text: &str) -> Result<Vec<ModelScores>> {
    let mut models: Vec<ModelScores> = Vec::new();
    let mut header_seen = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen && fields.first() == Some(&"table") {
            header_seen = true;
            continue;
        }
        header_seen = true;
        let [table, model, video, f] = fields[..] else {
            return Err(Error::parse(
                "scores",
                lineno + 1,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        };
        let f: f64 = f
            .parse()
            .map_err(|_| Error::parse("scores", lineno + 1, format!("bad F-score {f:?}")))?;
        let idx = match models
            .iter()
            .position(|m| m.table == table && m.model == model)
        {
            Some(i) => i,
            None => {
                models.push(ModelScores {
                    table: table.into(),
                    model: model.into(),
                    videos: Vec::new(),
                    published_average: None,
                });
                models.len() - 1
            }
        };
        if video.eq_ignore_ascii_case("average") {
            models[idx].published_average = Some(f);
        } else {
            models[idx].videos.push(VideoScore::f_only(video, f));
        }
    }
    Ok(models)
}

impl EvalReport {
    /// Plain-text tables, one per table name: videos down, models across.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut tables: Vec<&str> = Vec::new();
        for m in &self.models {
            if !tables.contains(&m.table.as_str()) {
                tables.push(&m.table);
            }
        }
        for table in tables {
            let cols: Vec<&ModelSummary> =
                self.models.iter().filter(|m| m.table == table).collect();
            let mut videos: Vec<&str> = Vec::new();
            for c in &cols {
                for v in &c.videos {
                    if !videos.contains(&v.video.as_str()) {
                        videos.push(&v.video);
                    }
                }
            }
            let width = cols.iter().map(|c| c.model.len()).max().unwrap_or(0).max(8);
            let label_width = videos.iter().map(|v| v.len()).max().unwrap_or(0).max(9);
            let _ = writeln!(out, "[{table}]");
            let _ = write!(out, "{:<label_width$}", "");
            for c in &cols {
                let _ = write!(out, "  {:>width$}", c.model);
            }
            out.push('\n');
            let rule = "=".repeat(label_width + cols.len() * (width + 2));
            let _ = writeln!(out, "{rule}");
            for v in &videos {
                let _ = write!(out, "{v:<label_width$}");
                for c in &cols {
                    match c.videos.iter().find(|s| s.video == *v) {
                        Some(s) => {
                            let _ = write!(out, "  {:>width$.2}", s.f_score);
                        }
                        None => {
                            let _ = write!(out, "  {:>width$}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            let _ = writeln!(out, "{rule}");
            let _ = write!(out, "{:<label_width$}", "Average");
            for c in &cols {
                let _ = write!(out, "  {:>width$.2}", c.average);
            }
            out.push('\n');
            if cols.iter().any(|c| c.average_discrepancy().is_some()) {
                let _ = write!(out, "{:<label_width$}", "Published");
                for c in &cols {
                    match (c.published_average, c.average_discrepancy()) {
                        (Some(p), Some(_)) => {
                            let _ = write!(out, "  {:>width$}", format!("*{p:.2}"));
                        }
                        (Some(p), None) => {
                            let _ = write!(out, "  {p:>width$.2}");
                        }
                        (None, _) => {
                            let _ = write!(out, "  {:>width$}", "-");
                        }
                    }
                }
                out.push('\n');
                let _ = writeln!(out, "(* published average differs from the per-video mean by more than {AVERAGE_TOLERANCE})");
            }
            out.push('\n');
        }
        if !self.deltas.is_empty() {
            let _ = writeln!(out, "[deltas]");
            for d in &self.deltas {
                let _ = writeln!(out, "{}: {:+.3}", d.name, d.value);
            }
        }
        out
    }

    /// `table,model,video,precision,recall,f_score`, with `Average` rows and `delta` rows.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_default();
        let mut out = String::from("table,model,video,precision,recall,f_score\n");
        for m in &self.models {
            for v in &m.videos {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{:.2}",
                    m.table,
                    m.model,
                    v.video,
                    opt(v.precision),
                    opt(v.recall),
                    v.f_score
                );
            }
            let _ = writeln!(out, "{},{},Average,,,{:.2}", m.table, m.model, m.average);
        }
        for d in &self.deltas {
            let _ = writeln!(out, "delta,{},,,,{:.3}", d.name.replace(',', ";"), d.value);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report JSON: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use FrameLabel::{Key as K, Ordinary as O};

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn confusion_basic() {
        assert_eq!(
            confusion(&[K, O, K], &[K, O, K]).unwrap(),
            counts(2, 0, 0, 1)
        );
        assert_eq!(confusion(&[K, K], &[O, O]).unwrap(), counts(0, 2, 0, 0));
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[K], &[K, O]).is_err());
    }

    #[test]
    fn confusion_matches_counting_oracle() {
        let mut rng = crate::rng::PortableRng::new(21);
        for _ in 0..50 {
            let draw = |rng: &mut crate::rng::PortableRng| -> Vec<FrameLabel> {
                (0..10)
                    .map(|_| if rng.below(2) == 1 { K } else { O })
                    .collect()
            };
            let (p, a) = (draw(&mut rng), draw(&mut rng));
            let count = |pp, aa| {
                p.iter()
                    .zip(&a)
                    .filter(|(x, y)| **x == pp && **y == aa)
                    .count() as u64
            };
            let c = confusion(&p, &a).unwrap();
            assert_eq!(
                c,
                counts(count(K, K), count(K, O), count(O, K), count(O, O))
            );
            assert_eq!(c.total(), 10);
        }
    }

    #[test]
    fn score_cases() {
        assert_eq!(
            precision_recall_f(&counts(5, 0, 0, 0)),
            Scores {
                precision: 1.0,
                recall: 1.0,
                f: 1.0
            }
        );
        assert_eq!(
            precision_recall_f(&counts(1, 1, 1, 0)),
            Scores {
                precision: 0.5,
                recall: 0.5,
                f: 0.5
            }
        );
        assert_eq!(
            precision_recall_f(&counts(0, 0, 3, 0)),
            Scores {
                precision: 0.0,
                recall: 0.0,
                f: 0.0
            }
        );
    }

    fn column(table: &str, model: &str, fs: &[f64]) -> ModelScores {
        ModelScores {
            table: table.into(),
            model: model.into(),
            videos: fs
                .iter()
                .zip(["GH020066", "GH010072", "GH050066"])
                .map(|(f, v)| VideoScore::f_only(v, *f))
                .collect(),
            published_average: None,
        }
    }

    fn averages_only(table: &str, entries: &[(&str, f64)]) -> Vec<ModelScores> {
        entries
            .iter()
            .map(|(m, a)| ModelScores {
                table: table.into(),
                model: (*m).into(),
                videos: vec![],
                published_average: Some(*a),
            })
            .collect()
    }

    #[test]
    fn resnet50_average() {
        let r = aggregate_report(&[column("t", "ResNet-50", &[62.09, 51.14, 64.09])], &[]).unwrap();
        assert!((r.models[0].average - 59.11).abs() <= 0.005);
    }

    #[test]
    fn deltas_from_published_averages() {
        let mut models = averages_only(
            "pretrained",
            &[
                ("ResNet-50", 59.11),
                ("ResNet-101", 58.11),
                ("Inception", 56.93),
                ("Xception", 55.93),
                ("ViT", 58.88),
            ],
        );
        models.extend(averages_only(
            "fusion",
            &[
                ("ResNet-50", 61.03),
                ("ResNet-101", 60.54),
                ("Inception-V4", 61.33),
                ("Xception", 57.40),
                ("ViT", 59.43),
                ("Ensemble Model", 62.97),
            ],
        ));
        let r = aggregate_report(&models, &default_deltas(&models)).unwrap();
        let d = |n: &str| r.delta(n).unwrap_or_else(|| panic!("missing {n}"));
        assert!((d("fusion/Ensemble Model vs fusion") - 3.024).abs() <= 0.001);
        assert!((d("fusion/Ensemble Model vs pretrained") - 5.178).abs() <= 0.001);
        // The narrative's 2.22 and 0.88 do not follow from these averages.
        assert!((d("fusion vs pretrained") - 2.154).abs() < 1e-9);
        assert!((d("ViT: fusion vs pretrained") - 0.55).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_videos_rejected() {
        let mut b = column("t", "b", &[1.0, 2.0, 3.0]);
        b.videos[2].video = "other".into();
        let err = aggregate_report(&[column("t", "a", &[1.0, 2.0, 3.0]), b], &[]).unwrap_err();
        assert!(err.to_string().contains("inconsistent video sets"));
    }

    #[test]
    fn out_of_range_scores_rejected() {
        assert!(aggregate_report(&[column("t", "a", &[101.0, 2.0, 3.0])], &[]).is_err());
    }

    #[test]
    fn delta_spec_parsing() {
        let d: DeltaSpec = "gain=f/a+f/b:p/a".parse().unwrap();
        assert_eq!(d.target, ["f/a", "f/b"]);
        assert_eq!(d.baseline, ["p/a"]);
        assert!("gain=f/a".parse::<DeltaSpec>().is_err());
        assert!("=a:b".parse::<DeltaSpec>().is_err());
    }

    #[test]
    fn scores_csv_and_discrepancy_flag() {
        let text = "table,model,video,f_score\nt,X,v1,50\nt,X,v2,60\nt,X,Average,54.00\n";
        let models = parse_scores_csv(text).unwrap();
        assert_eq!(models.len(), 1);
        assert_eq!(models[0].published_average, Some(54.0));
        let r = aggregate_report(&models, &[]).unwrap();
        assert_eq!(r.models[0].average, 55.0);
        assert_eq!(r.models[0].average_discrepancy(), Some(-1.0));
        assert!(r.to_text().contains("*54.00"));
        assert!(parse_scores_csv("t,X,v1\n").is_err());
    }

    #[test]
    fn renderings() {
        let mut m = column("test", "member_0", &[100.0, 50.0, 0.0]);
        m.videos[0] = VideoScore::from_counts("GH020066", counts(3, 0, 0, 2));
        let r = aggregate_report(&[m], &[]).unwrap();
        let text = r.to_text();
        assert!(text.contains("100.00"));
        assert!(text.contains("Average"));
        let csv = r.to_csv();
        assert!(csv.contains("test,member_0,GH020066,100.00,100.00,100.00"));
        assert!(csv.contains("test,member_0,Average,,,50.00"));
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }
}
