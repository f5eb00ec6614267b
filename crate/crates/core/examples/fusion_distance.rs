// Build fusion features for a handful of frames against two anchor key frames.

use keyframe::dataset::FrameLabel;
use keyframe::distance::{self, deep_distance, deep_distance_matrix};
use keyframe::features::FeatureMatrix;

pub fn run_example() -> keyframe::Result<()> {
    let frames = FeatureMatrix::from_rows(
        "demo",
        &[
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![3.0, 1.0],
            vec![2.0, 4.0],
        ],
    )?;
    let labels = [
        FrameLabel::Key,
        FrameLabel::Ordinary,
        FrameLabel::Ordinary,
        FrameLabel::Key,
    ];

    // Only two key frames exist, so k=2 takes both regardless of seed.
    let anchors = distance::select_anchors(&frames, &labels, 2, 7)?;
    for id in anchors.source_frame_ids() {
        println!("anchor {id}");
    }

    let matrix = deep_distance_matrix(frames.row(1), &anchors)?;
    println!("distance matrix shape {:?}", matrix.shape());
    println!("deep distance of frame 1: {:?}", deep_distance(&matrix)?);

    let fused = distance::fuse_dataset(&frames, &anchors)?;
    for (id, row) in fused.frame_ids().iter().zip(fused.rows()) {
        println!("{id}: {row:?}");
    }
    Ok(())
}

fn main() -> keyframe::Result<()> {
    run_example()
}
