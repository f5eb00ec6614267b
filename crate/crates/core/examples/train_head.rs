// Train a logistic head on synthetic features and score a held-out set.

use keyframe::classifier::{self, TrainConfig};
use keyframe::features::{generate_synthetic, SyntheticSpec};
use keyframe::metrics;

pub fn run_example() -> keyframe::Result<()> {
    let train_spec = SyntheticSpec::default();
    let test_spec = SyntheticSpec {
        n_key: 25,
        n_ordinary: 25,
        seed: 8,
        ..SyntheticSpec::default()
    };
    let (train, train_labels) = generate_synthetic(&train_spec)?;
    let (test, test_labels) = generate_synthetic(&test_spec)?;

    let config = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let trained = classifier::train_with_trace(&train, &train_labels, &config)?;
    println!(
        "loss {:.4} -> {:.4} over {} epochs",
        trained.epoch_losses[0],
        trained.epoch_losses.last().unwrap(),
        config.epochs
    );

    let predicted: Vec<_> =
        classifier::predict(&trained.head, &test, classifier::DEFAULT_THRESHOLD)?
            .into_iter()
            .map(|p| p.label)
            .collect();
    let counts = metrics::confusion(&predicted, &test_labels)?;
    let scores = metrics::precision_recall_f(&counts);
    println!(
        "held-out precision {:.2} recall {:.2} F {:.2}",
        100.0 * scores.precision,
        100.0 * scores.recall,
        100.0 * scores.f
    );
    Ok(())
}

fn main() -> keyframe::Result<()> {
    run_example()
}
