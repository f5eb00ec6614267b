// Replay published per-video F-scores through the report arithmetic.
//
// The per-video table and the printed averages are replayed separately: the
// first exposes where printed averages disagree with their own rows, the
// second reproduces the improvement deltas derived from those averages.

use std::path::Path;

use keyframe::pipeline;

pub fn run_example() -> keyframe::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let per_video = pipeline::report_from_scores(&data.join("published_scores.csv"), &[])?;
    print!("{}", per_video.to_text());

    let printed = pipeline::report_from_scores(&data.join("published_averages.csv"), &[])?;
    println!("from printed averages:");
    for d in &printed.deltas {
        println!("  {}: {:+.3}", d.name, d.value);
    }
    Ok(())
}

fn main() -> keyframe::Result<()> {
    run_example()
}
