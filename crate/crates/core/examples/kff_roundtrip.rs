// Write and re-read a KFF1 feature file and a KFH1 head checkpoint.

use keyframe::classifier::{self, ClassifierHead, HeadKind};
use keyframe::features::{self, generate_synthetic, SyntheticSpec};
use keyframe::rng::PortableRng;

pub fn run_example() -> keyframe::Result<()> {
    let dir = std::env::temp_dir().join(format!("keyframe-kff-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| keyframe::Error::Io {
        path: dir.clone(),
        source: e,
    })?;

    let (matrix, _) = generate_synthetic(&SyntheticSpec {
        dim: 2048,
        n_key: 2,
        n_ordinary: 1,
        ..Default::default()
    })?;
    let path = dir.join("frames.kff");
    features::save_features(&matrix, &path)?;
    let loaded = features::load_features(&path)?;
    println!(
        "{}: {} x {} round trip equal: {}",
        loaded.video(),
        loaded.n_rows(),
        loaded.dim(),
        loaded == matrix
    );

    let head = ClassifierHead::initialized(HeadKind::OneHidden(8), 2048, &mut PortableRng::new(1))?;
    let head_path = dir.join("head.kfh");
    classifier::save_head(&head, &head_path)?;
    let back = classifier::load_head_as(&head_path, HeadKind::OneHidden(8))?;
    println!(
        "head with {} parameters round trip equal: {}",
        back.param_count(),
        back == head
    );

    std::fs::remove_dir_all(&dir).map_err(|e| keyframe::Error::Io {
        path: dir,
        source: e,
    })?;
    Ok(())
}

fn main() -> keyframe::Result<()> {
    run_example()
}
