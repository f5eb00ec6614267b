// Inspect the bundled eighteen-video manifest: split sizes and mean file size.

use keyframe::dataset::{self, Split};

pub fn run_example() -> keyframe::Result<()> {
    let manifest = dataset::bundled_manifest();
    let (train, validation, test) = manifest.split_counts();
    println!("train={train} validation={validation} test={test}");
    for split in Split::ALL {
        println!("{split:>10}: {}", manifest.split_names(split).join(" "));
    }
    println!("mean size: {:.2} MB", manifest.average_memory_size()?);
    Ok(())
}

fn main() -> keyframe::Result<()> {
    run_example()
}
