use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use keyframe::classifier::{HeadKind, Optimizer};
use keyframe::dataset::{self, Split};
use keyframe::ensemble::{self, EnsembleRun};
use keyframe::metrics::{DeltaSpec, EvalReport};
use keyframe::pipeline::{self, RunConfig, SyntheticRun};
use keyframe::{features, Error, Result};

#[derive(Parser)]
#[command(
    name = "keyframe",
    version,
    about = "Key-frame identification from per-frame deep features"
)]
struct Cli {
    /// key=value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Anchor key frames per run.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    members: Option<usize>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Paths {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct Training {
    /// Comma-separated, one per member.
    #[arg(long, value_delimiter = ',')]
    member_seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// sgd | adamw
    #[arg(long)]
    optimizer: Option<Optimizer>,
    /// linear | hidden:<width>
    #[arg(long)]
    head: Option<HeadKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded two-class synthetic dataset (manifest, labels, KFF1 features).
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        train_key: usize,
        #[arg(long, default_value_t = 50)]
        train_ordinary: usize,
        #[arg(long, default_value_t = 25)]
        test_key: usize,
        #[arg(long, default_value_t = 25)]
        test_ordinary: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 8.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Select anchors from training key frames and write fused features.
    Fuse(#[command(flatten)] Paths),
    /// Train member heads on the training split.
    Train {
        #[command(flatten)]
        paths: Paths,
        #[command(flatten)]
        training: Training,
    },
    /// Score frames with an ensemble run description or a directory of heads.
    Predict {
        #[arg(long, conflicts_with_all = ["features", "heads"])]
        run: Option<PathBuf>,
        #[arg(long, requires = "heads")]
        features: Option<PathBuf>,
        #[arg(long)]
        heads: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-video evaluation report, or replay of published scores.
    Evaluate {
        #[command(flatten)]
        paths: Paths,
        #[arg(long)]
        heads: Option<PathBuf>,
        /// train | validation | test
        #[arg(long)]
        split: Option<Split>,
        /// CSV of `table,model,video,f_score` rows.
        #[arg(long)]
        from_scores: Option<PathBuf>,
        /// Extra improvement delta: NAME=TABLE/MODEL[+...]:TABLE/MODEL[+...]
        #[arg(long)]
        delta: Vec<DeltaSpec>,
    },
    /// Re-render a report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// text | csv | json
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Fuse, train, and evaluate in one go.
    Run {
        #[command(flatten)]
        paths: Paths,
        #[command(flatten)]
        training: Training,
        /// raw | fusion | ensemble
        #[arg(long)]
        mode: Option<pipeline::Mode>,
    },
}

impl Cli {
    fn config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.members {
            c.members = v;
        }
        if let Some(v) = self.threshold {
            c.threshold = v;
        }
        Ok(c)
    }
}

fn apply_paths(c: &mut RunConfig, p: &Paths) {
    if let Some(v) = &p.manifest {
        c.manifest = v.clone();
    }
    if let Some(v) = &p.features {
        c.feature_dir = v.clone();
    }
    if let Some(v) = &p.out {
        c.output_dir = v.clone();
    }
}

fn apply_training(c: &mut RunConfig, t: &Training) {
    if let Some(v) = &t.member_seeds {
        c.member_seeds = Some(v.clone());
    }
    if let Some(v) = t.epochs {
        c.train.epochs = v;
    }
    if let Some(v) = t.lr {
        c.train.learning_rate = v;
    }
    if let Some(v) = t.weight_decay {
        c.train.weight_decay = v;
    }
    if let Some(v) = t.batch_size {
        c.train.batch_size = v;
    }
    if let Some(v) = t.optimizer {
        c.train.optimizer = v;
    }
    if let Some(v) = t.head {
        c.train.kind = v;
    }
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = cli.config()?;
    match &cli.command {
        Command::GenSynthetic {
            out,
            train_key,
            train_ordinary,
            test_key,
            test_ordinary,
            dim,
            separation,
            noise,
        } => {
            let run = SyntheticRun {
                train_key: *train_key,
                train_ordinary: *train_ordinary,
                test_key: *test_key,
                test_ordinary: *test_ordinary,
                dim: *dim,
                separation: *separation,
                noise_scale: *noise,
                seed: config.seed,
            };
            let generated = pipeline::gen_synthetic(out, &run)?;
            for w in &generated.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote {}", generated.manifest.display());
        }
        Command::Fuse(paths) => {
            apply_paths(&mut config, paths);
            config.validate()?;
            let manifest = dataset::load_manifest(&config.manifest)?;
            let anchors = pipeline::fuse_features(
                &manifest,
                &config.feature_dir,
                &config.output_dir,
                config.k,
                config.seed,
            )?;
            eprintln!(
                "fused with {} anchors into {}",
                anchors.k(),
                config.output_dir.display()
            );
        }
        Command::Train { paths, training } => {
            apply_paths(&mut config, paths);
            apply_training(&mut config, training);
            config.validate()?;
            let manifest = dataset::load_manifest(&config.manifest)?;
            let trained = pipeline::train_members(
                &manifest,
                &config.feature_dir,
                &config.output_dir,
                &config.train,
                &config.seeds()?,
            )?;
            for (i, t) in trained.iter().enumerate() {
                eprintln!(
                    "member_{i}: final loss {:e}",
                    t.epoch_losses.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Predict {
            run,
            features: feature_file,
            heads,
            out,
        } => {
            let output = match (run, feature_file, heads) {
                (Some(run), _, _) => {
                    let mut description = EnsembleRun::load(run)?;
                    if let Some(t) = cli.threshold {
                        description.threshold = t;
                    }
                    description.execute()?
                }
                (None, Some(f), Some(h)) => {
                    let matrix = features::load_features(f)?;
                    let members = pipeline::load_members(h)?;
                    ensemble::run_ensemble(&members, &matrix, config.threshold)?
                }
                _ => {
                    return Err(Error::Usage(
                        "predict needs --run or --features with --heads".into(),
                    ))
                }
            };
            write_or_print(out.as_ref(), &pipeline::predictions_csv(&output))?;
        }
        Command::Evaluate {
            paths,
            heads,
            split,
            from_scores,
            delta,
        } => {
            apply_paths(&mut config, paths);
            let report = if let Some(scores) = from_scores {
                pipeline::report_from_scores(scores, delta)?
            } else {
                if let Some(s) = split {
                    config.split = *s;
                }
                let heads_dir = heads.as_ref().ok_or_else(|| {
                    Error::Usage("evaluate needs --heads or --from-scores".into())
                })?;
                let manifest = dataset::load_manifest(&config.manifest)?;
                let members = pipeline::load_members(heads_dir)?;
                let with_vote = members.len() > 1;
                let columns = pipeline::score_split(
                    &manifest,
                    &config.feature_dir,
                    &members,
                    config.split,
                    config.threshold,
                    config.split.tag(),
                    with_vote,
                )?;
                let mut deltas = keyframe::metrics::default_deltas(&columns);
                deltas.extend(delta.iter().cloned());
                keyframe::metrics::aggregate_report(&columns, &deltas)?
            };
            if paths.out.is_some() {
                pipeline::write_report(&report, &config.output_dir)?;
            }
            print!("{}", report.to_text());
        }
        Command::Report { input, format } => {
            let text = std::fs::read_to_string(input).map_err(|e| Error::Io {
                path: input.clone(),
                source: e,
            })?;
            let report = EvalReport::from_json(&text)?;
            let rendered = match format.as_str() {
                "text" => report.to_text(),
                "csv" => report.to_csv(),
                "json" => report.to_json(),
                other => return Err(Error::Usage(format!("unknown format {other:?}"))),
            };
            print!("{rendered}");
        }
        Command::Run {
            paths,
            training,
            mode,
        } => {
            apply_paths(&mut config, paths);
            apply_training(&mut config, training);
            if let Some(m) = mode {
                config.mode = *m;
            }
            let outcome = pipeline::run(&config)?;
            print!("{}", outcome.report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
