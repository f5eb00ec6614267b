// Majority voting over five members, including the tie rule for even ensembles.

use keyframe::dataset::FrameLabel::{Key as K, Ordinary as O};
use keyframe::ensemble;

pub fn run_example() -> keyframe::Result<()> {
    // Rows are members, columns are frames.
    let members = vec![
        vec![O, K, K, O],
        vec![O, K, O, O],
        vec![O, O, K, K],
        vec![K, K, O, K],
        vec![K, O, K, O],
    ];
    for (frame, t) in ensemble::tally(&members)?.iter().enumerate() {
        println!(
            "frame {frame}: {} for 0, {} for 1 -> {}",
            t.votes_for_zero,
            t.votes_for_one,
            t.decision()
        );
    }
    let tie = ensemble::majority_vote(&[vec![O], vec![K]])?;
    println!("two-member tie -> {}", tie[0]);
    Ok(())
}

fn main() -> keyframe::Result<()> {
    run_example()
}
