// Generate a synthetic dataset and run fusion, training, voting, and evaluation.

use keyframe::pipeline::{self, RunConfig, SyntheticRun};

pub fn run_example() -> keyframe::Result<()> {
    let dir = std::env::temp_dir().join(format!("keyframe-example-{}", std::process::id()));
    let generated = pipeline::gen_synthetic(&dir, &SyntheticRun::default())?;
    let config = RunConfig {
        manifest: generated.manifest,
        feature_dir: generated.feature_dir,
        output_dir: dir.join("out"),
        ..RunConfig::default()
    };
    let outcome = pipeline::run(&config)?;
    print!("{}", outcome.report.to_text());
    if let Some(anchors) = &outcome.anchors {
        println!("anchors: k={} seed={}", anchors.k(), anchors.seed());
    }
    std::fs::remove_dir_all(&dir).map_err(|e| keyframe::Error::Io {
        path: dir,
        source: e,
    })?;
    Ok(())
}

fn main() -> keyframe::Result<()> {
    run_example()
}
