//! Anchor-averaged deep distance and fusion features.
//!
//! For a frame `x` and anchor key frames `a_0..a_{K-1}`, the deep distance
//! matrix holds `|x[c] - a_j[c]|`, its column mean is the deep distance, and
//! the fusion feature is `x ⊕ mean`, of length `2·D`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{FrameId, FrameLabel};
use crate::error::{Error, Result};
use crate::features::{self, FeatureMatrix};
use crate::rng::PortableRng;

pub const DEFAULT_ANCHOR_COUNT: usize = 32;

/// K key-frame feature vectors frozen for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    vectors: FeatureMatrix,
    seed: u64,
}

impl AnchorSet {
    /// Wraps explicit anchor vectors. Callers vouch that every row is a key frame.
    pub fn new(vectors: FeatureMatrix, seed: u64) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Empty("anchor set"));
        }
        Ok(Self { vectors, seed })
    }

    pub fn k(&self) -> usize {
        self.vectors.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        self.vectors.row(j)
    }

    pub fn vectors(&self) -> &FeatureMatrix {
        &self.vectors
    }

    pub fn source_frame_ids(&self) -> &[FrameId] {
        self.vectors.frame_ids()
    }
}

/// Draws `k` distinct key frames uniformly without replacement.
///
/// Anchors are returned in row order of `features`.
pub fn select_anchors(
    features: &FeatureMatrix,
    labels: &[FrameLabel],
    k: usize,
    seed: u64,
) -> Result<AnchorSet> {
    if labels.len() != features.n_rows() {
        return Err(Error::LengthMismatch {
            expected: features.n_rows(),
            found: labels.len(),
        });
    }
    if k == 0 {
        return Err(Error::Invalid("anchor count k must be positive".into()));
    }
    let key_rows: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_key())
        .map(|(i, _)| i)
        .collect();
    if key_rows.len() < k {
        return Err(Error::InsufficientKeyFrames {
            needed: k,
            available: key_rows.len(),
        });
    }
    let mut rng = PortableRng::new(seed);
    let mut picked: Vec<usize> = rng
        .sample_indices(key_rows.len(), k)
        .into_iter()
        .map(|i| key_rows[i])
        .collect();
    picked.sort_unstable();
    let rows = features.select_rows(&picked)?;
    let vectors = FeatureMatrix::new(
        "anchors",
        rows.dim(),
        rows.as_slice().to_vec(),
        rows.frame_ids().to_vec(),
    )?;
    AnchorSet::new(vectors, seed)
}

/// K×D matrix of absolute differences between one frame and each anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepDistanceMatrix {
    k: usize,
    dim: usize,
    values: Vec<f64>,
}

impl DeepDistanceMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Invalid("ragged deep distance rows".into()));
        }
        if rows.iter().flatten().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Invalid(
                "deep distance entries must be nonnegative".into(),
            ));
        }
        Ok(Self {
            k: rows.len(),
            dim,
            values: rows.concat(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.k, self.dim)
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn get(&self, j: usize, c: usize) -> f64 {
        self.values[j * self.dim + c]
    }
}

pub fn deep_distance_matrix(frame: &[f64], anchors: &AnchorSet) -> Result<DeepDistanceMatrix> {
    check_dim(anchors.dim(), frame.len())?;
    let mut values = Vec::with_capacity(anchors.k() * frame.len());
    for j in 0..anchors.k() {
        values.extend(
            frame
                .iter()
                .zip(anchors.vector(j))
                .map(|(x, a)| (x - a).abs()),
        );
    }
    Ok(DeepDistanceMatrix {
        k: anchors.k(),
        dim: frame.len(),
        values,
    })
}

/// Column mean of the distance matrix, summing rows in order 0..K.
pub fn deep_distance(matrix: &DeepDistanceMatrix) -> Result<Vec<f64>> {
    if matrix.k == 0 || matrix.dim == 0 {
        return Err(Error::Empty("deep distance matrix"));
    }
    let mut sum = vec![0.0; matrix.dim];
    for j in 0..matrix.k {
        for (s, v) in sum.iter_mut().zip(matrix.row(j)) {
            *s += v;
        }
    }
    let k = matrix.k as f64;
    Ok(sum.into_iter().map(|s| s / k).collect())
}

/// Raw features followed by deep distance.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionFeature {
    values: Vec<f64>,
}

impl FusionFeature {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.values[..self.values.len() / 2]
    }

    pub fn deep(&self) -> &[f64] {
        &self.values[self.values.len() / 2..]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

pub fn fuse(raw: &[f64], deep: &[f64]) -> Result<FusionFeature> {
    check_dim(raw.len(), deep.len())?;
    let mut values = Vec::with_capacity(2 * raw.len());
    values.extend_from_slice(raw);
    values.extend_from_slice(deep);
    Ok(FusionFeature { values })
}

/// Replaces every row by its fusion feature; frame ids and order are kept.
pub fn fuse_dataset(features: &FeatureMatrix, anchors: &AnchorSet) -> Result<FeatureMatrix> {
    check_dim(anchors.dim(), features.dim())?;
    let mut data = Vec::with_capacity(2 * features.as_slice().len());
    for row in features.rows() {
        let deep = deep_distance(&deep_distance_matrix(row, anchors)?)?;
        data.extend(fuse(row, &deep)?.into_vec());
    }
    FeatureMatrix::new(
        features.video(),
        2 * features.dim(),
        data,
        features.frame_ids().to_vec(),
    )
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Path of the text sidecar stored next to an anchor KFF1 file.
pub fn anchor_sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes anchor vectors as KFF1 plus a sidecar with seed, k, and source frame ids.
pub fn save_anchors(anchors: &AnchorSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    features::save_features(&anchors.vectors, path)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "seed={}", anchors.seed);
    let _ = writeln!(meta, "k={}", anchors.k());
    for id in anchors.source_frame_ids() {
        let _ = writeln!(meta, "frame={id}");
    }
    let sidecar = anchor_sidecar_path(path);
    std::fs::write(&sidecar, meta).map_err(|e| Error::io(&sidecar, e))
}

pub fn load_anchors(path: impl AsRef<Path>) -> Result<AnchorSet> {
    let path = path.as_ref();
    let stored = features::load_features(path)?;
    let sidecar = anchor_sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let ctx = sidecar.display().to_string();
    let (mut seed, mut k, mut ids) = (None, None, Vec::new());
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&ctx, lineno + 1, "expected key=value"))?;
        let bad = || Error::parse(&ctx, lineno + 1, format!("bad value for {key}"));
        match key {
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad())?),
            "k" => k = Some(value.parse::<usize>().map_err(|_| bad())?),
            "frame" => ids.push(value.parse::<FrameId>()?),
            other => {
                return Err(Error::parse(
                    &ctx,
                    lineno + 1,
                    format!("unknown key {other}"),
                ))
            }
        }
    }
    let seed = seed.ok_or_else(|| Error::parse(&ctx, 0, "missing seed"))?;
    let k = k.ok_or_else(|| Error::parse(&ctx, 0, "missing k"))?;
    if k != stored.n_rows() || ids.len() != k {
        return Err(Error::Format(format!(
            "anchor sidecar lists k={k} with {} frames, file holds {} rows",
            ids.len(),
            stored.n_rows()
        )));
    }
    let vectors = FeatureMatrix::new("anchors", stored.dim(), stored.as_slice().to_vec(), ids)?;
    AnchorSet::new(vectors, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchors(rows: &[Vec<f64>]) -> AnchorSet {
        AnchorSet::new(FeatureMatrix::from_rows("a", rows).unwrap(), 0).unwrap()
    }

    #[test]
    fn hand_computed_matrix() {
        let a = anchors(&[vec![0.0, 0.0], vec![2.0, 4.0]]);
        let m = deep_distance_matrix(&[1.0, 2.0], &a).unwrap();
        assert_eq!(
            m,
            DeepDistanceMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap()
        );
    }

    #[test]
    fn identical_frame_gives_zero_matrix() {
        let a = anchors(&vec![vec![3.0, -1.0, 0.5]; 4]);
        let m = deep_distance_matrix(&[3.0, -1.0, 0.5], &a).unwrap();
        assert_eq!(m.shape(), (4, 3));
        assert!((0..4).all(|j| m.row(j).iter().all(|&v| v == 0.0)));
        assert_eq!(deep_distance(&m).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn full_scale_shapes() {
        let rows: Vec<Vec<f64>> = (0..32).map(|j| vec![j as f64; 2048]).collect();
        let m = deep_distance_matrix(&vec![0.0; 2048], &anchors(&rows)).unwrap();
        assert_eq!(m.shape(), (32, 2048));
        assert_eq!(
            fuse(&[0.0; 2048], &deep_distance(&m).unwrap())
                .unwrap()
                .len(),
            4096
        );
    }

    #[test]
    fn dimension_mismatch() {
        let a = anchors(&[vec![0.0, 0.0]]);
        assert!(matches!(
            deep_distance_matrix(&[1.0], &a),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(fuse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn row_average() {
        let m = DeepDistanceMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(deep_distance(&m).unwrap(), vec![2.0, 3.0]);
        let single = DeepDistanceMatrix::from_rows(&[vec![0.25, 7.0]]).unwrap();
        assert_eq!(deep_distance(&single).unwrap(), vec![0.25, 7.0]);
        let empty = DeepDistanceMatrix::from_rows(&[]).unwrap();
        assert!(matches!(deep_distance(&empty), Err(Error::Empty(_))));
    }

    #[test]
    fn concatenation() {
        let f = fuse(&[1.0, 2.0], &[0.0, 3.0]).unwrap();
        assert_eq!(f.values(), [1.0, 2.0, 0.0, 3.0]);
        assert_eq!(f.raw(), [1.0, 2.0]);
        assert_eq!(f.deep(), [0.0, 3.0]);
        assert_eq!(fuse(&[5.0], &[0.0]).unwrap().values(), [5.0, 0.0]);
    }

    #[test]
    fn fuse_dataset_hand_computed() {
        let features =
            FeatureMatrix::from_rows("v", &[vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 1.0]])
                .unwrap();
        let a = anchors(&[vec![0.0, 0.0], vec![2.0, 4.0]]);
        let fused = fuse_dataset(&features, &a).unwrap();
        assert_eq!(fused.dim(), 4);
        assert_eq!(fused.row(0), [0.0, 0.0, 1.0, 2.0]);
        assert_eq!(fused.row(1), [1.0, 2.0, 1.0, 2.0]);
        assert_eq!(fused.row(2), [3.0, 1.0, 2.0, 2.0]);
        assert_eq!(fused.frame_ids(), features.frame_ids());
    }

    #[test]
    fn fuse_dataset_all_identical() {
        let features = FeatureMatrix::from_rows("v", &vec![vec![2.0, 2.0]; 3]).unwrap();
        let fused = fuse_dataset(&features, &anchors(&vec![vec![2.0, 2.0]; 2])).unwrap();
        assert!(fused.rows().all(|r| r == [2.0, 2.0, 0.0, 0.0]));
    }

    #[test]
    fn fuse_dataset_full_shape() {
        let features = FeatureMatrix::from_rows("v", &vec![vec![0.5; 2048]; 5]).unwrap();
        let a = anchors(&vec![vec![0.0; 2048]; 32]);
        let fused = fuse_dataset(&features, &a).unwrap();
        assert_eq!((fused.n_rows(), fused.dim()), (5, 4096));
    }

    fn labeled(n_key: usize, n_ord: usize) -> (FeatureMatrix, Vec<FrameLabel>) {
        let rows: Vec<Vec<f64>> = (0..n_key + n_ord).map(|i| vec![i as f64]).collect();
        let labels = (0..n_key + n_ord)
            .map(|i| {
                if i % 2 == 0 && i / 2 < n_key {
                    FrameLabel::Key
                } else {
                    FrameLabel::Ordinary
                }
            })
            .collect::<Vec<_>>();
        (FeatureMatrix::from_rows("v", &rows).unwrap(), labels)
    }

    #[test]
    fn forced_selection_takes_every_key_frame() {
        let (m, labels) = labeled(4, 6);
        for seed in [0, 1, 99] {
            let a = select_anchors(&m, &labels, 4, seed).unwrap();
            let picked: Vec<u32> = a.source_frame_ids().iter().map(|id| id.index).collect();
            assert_eq!(picked, [0, 2, 4, 6]);
        }
    }

    #[test]
    fn too_few_key_frames() {
        let (m, labels) = labeled(3, 3);
        assert!(matches!(
            select_anchors(&m, &labels, 4, 0),
            Err(Error::InsufficientKeyFrames {
                needed: 4,
                available: 3
            })
        ));
    }

    #[test]
    fn selection_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let m = FeatureMatrix::from_rows("v", &rows).unwrap();
        let labels = vec![FrameLabel::Key; 100];
        let pick = |seed| -> Vec<u32> {
            select_anchors(&m, &labels, 32, seed)
                .unwrap()
                .source_frame_ids()
                .iter()
                .map(|id| id.index)
                .collect()
        };
        assert_eq!(pick(1), pick(1));
        assert_eq!(pick(1), SEED1_ANCHORS);
        assert_eq!(pick(2), SEED2_ANCHORS);
        assert_ne!(pick(1), pick(2));
    }

    const SEED1_ANCHORS: [u32; 32] = [
        1, 3, 4, 6, 14, 19, 23, 25, 29, 32, 35, 37, 38, 41, 47, 51, 52, 55, 56, 57, 58, 60, 74, 75,
        77, 78, 81, 85, 88, 91, 92, 95,
    ];
    const SEED2_ANCHORS: [u32; 32] = [
        3, 7, 10, 11, 13, 16, 19, 23, 24, 25, 30, 36, 37, 38, 40, 43, 48, 52, 53, 55, 70, 72, 75,
        78, 79, 83, 85, 86, 91, 92, 93, 98,
    ];

    #[test]
    fn anchors_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anchors.kff");
        let (m, labels) = labeled(5, 5);
        let a = select_anchors(&m, &labels, 3, 11).unwrap();
        save_anchors(&a, &path).unwrap();
        assert_eq!(load_anchors(&path).unwrap(), a);
        let sidecar = std::fs::read_to_string(anchor_sidecar_path(&path)).unwrap();
        assert!(sidecar.starts_with("seed=11\nk=3\nframe=v/"));
    }
}
