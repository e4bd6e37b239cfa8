//! `orbitsig`: staged pipeline for group-invariant speech segment
//! signatures. Exit codes: 0 success, 1 usage error, 2 data/format error,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use orbitsig_core::config::KeyValues;
use orbitsig_core::corpus::{generate_corpus, write_corpus, CorpusConfig};
use orbitsig_core::frontend::{FeatureKind, FrontendConfig};
use orbitsig_core::orbit::{MetaField, PartitionScheme};
use orbitsig_core::pipeline::{
    run_pipeline, run_sweep, stage_eval, stage_features, stage_sign, stage_store, stage_train,
    ExperimentConfig,
};
use orbitsig_core::rls::default_lambda_grid;
use orbitsig_core::segment::UtteranceMetadata;
use orbitsig_core::signature::PoolingSpec;
use orbitsig_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "orbitsig",
    about = "Group-invariant speech segment signatures: synthesis, features, orbit stores, signatures, RLS training and sweeps",
    version
)]
struct Cli {
    /// Worker threads (falls back to ORBITSIG_JOBS, then all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic vowel corpus (WAV + labels + metadata).
    Synth(SynthArgs),
    /// Extract frame features and aggregate segment vectors for one split.
    Features(FeaturesArgs),
    /// Partition a template pool into an orbit store.
    Store(StoreArgs),
    /// Compute invariant signatures for a segment file against a store.
    Sign(SignArgs),
    /// Train a one-vs-all RLS classifier on a feature table.
    Train(TrainArgs),
    /// Evaluate a trained model on a feature table.
    Eval(EvalArgs),
    /// Run the full pipeline (features, store, signatures, train, eval).
    Run(RunArgs),
    /// Run the training-set-size sweep on top of a full pipeline run.
    Sweep(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus config file (`key = value`); defaults are used if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Directory of WAV files with sibling .phn label files.
    #[arg(long)]
    dir: PathBuf,
    /// Metadata file mapping utterance to speaker and dialect.
    #[arg(long)]
    meta: PathBuf,
    /// Feature kind: mfs, mfb, mfc or plp.
    #[arg(long)]
    kind: String,
    /// Front-end config file (`key = value`, frontend keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Segment boundary extension in milliseconds.
    #[arg(long, default_value_t = 30.0)]
    extension_ms: f64,
    #[arg(long)]
    features_out: PathBuf,
    #[arg(long)]
    segments_out: PathBuf,
}

#[derive(Args)]
struct StoreArgs {
    /// Pool segment-vector CSV.
    #[arg(long)]
    segments: PathBuf,
    /// Partition: comma-separated metadata fields (label,dialect,speaker)
    /// or `kmeans`.
    #[arg(long)]
    scheme: String,
    /// Cluster count for kmeans.
    #[arg(long, default_value_t = 24)]
    k: usize,
    /// Clustering seed for kmeans.
    #[arg(long, default_value_t = 7)]
    kmeans_seed: u64,
    /// Iteration cap for kmeans.
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Source tag recorded in the store.
    #[arg(long, default_value = "pool")]
    tag: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SignArgs {
    /// Segment-vector CSV to compute signatures for.
    #[arg(long)]
    segments: PathBuf,
    /// Training segment CSV the standardizer is fitted on.
    #[arg(long)]
    train_segments: PathBuf,
    /// Orbit store file.
    #[arg(long)]
    store: PathBuf,
    /// Histogram bin count.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Use moment pooling instead of histograms (e.g. mean,energy,max).
    #[arg(long)]
    moments: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training feature table (segment or signature CSV).
    #[arg(long)]
    features: PathBuf,
    /// Fixed regularization; omitted = select on a 1/6 validation split.
    #[arg(long)]
    lambda: Option<f64>,
    /// Lambda grid for selection (comma-separated).
    #[arg(long)]
    grid: Option<String>,
    /// Seed for the stratified validation split.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training feature table the model's standardizer was fitted on.
    #[arg(long)]
    train: PathBuf,
    /// Feature table to evaluate.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    metrics_out: PathBuf,
    #[arg(long)]
    confusion_out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (`key = value`); defaults if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory (from `orbitsig synth` or TIMIT-style data).
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for all stage files and results.
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_scheme(args: &StoreArgs) -> Result<PartitionScheme> {
    if args.scheme == "kmeans" {
        return Ok(PartitionScheme::KMeans {
            k: args.k,
            seed: args.kmeans_seed,
            max_iters: args.max_iters,
        });
    }
    let fields: Option<Vec<MetaField>> = args
        .scheme
        .split(',')
        .map(|f| MetaField::parse(f.trim()))
        .collect();
    match fields {
        Some(f) if !f.is_empty() => Ok(PartitionScheme::Categorical(f)),
        _ => Err(Error::Pipeline(
            orbitsig_core::pipeline::PipelineError::BadConfig(format!(
                "bad scheme `{}`: expected metadata fields or `kmeans`",
                args.scheme
            )),
        )),
    }
}

fn load_experiment_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = match path {
        None => ExperimentConfig::default(),
        Some(p) => {
            let kv = KeyValues::load(p)?;
            let cfg = ExperimentConfig::from_key_values(&kv)?;
            kv.reject_unknown()?;
            cfg
        }
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let mut config = match &args.config {
                None => CorpusConfig::default(),
                Some(p) => {
                    let kv = KeyValues::load(p)?;
                    let cfg = CorpusConfig::from_key_values(&kv)?;
                    kv.reject_unknown()?;
                    cfg
                }
            };
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            let corpus = generate_corpus(&config)?;
            write_corpus(&corpus, &args.out)?;
            println!(
                "wrote {} utterances (seed {}) to {}",
                corpus.items.len(),
                corpus.generator_seed,
                args.out.display()
            );
        }
        Command::Features(args) => {
            let kind = FeatureKind::parse(&args.kind).ok_or_else(|| {
                Error::Pipeline(orbitsig_core::pipeline::PipelineError::BadConfig(format!(
                    "unknown feature kind `{}`",
                    args.kind
                )))
            })?;
            let frontend = match &args.config {
                None => FrontendConfig::default(),
                Some(p) => {
                    let kv = KeyValues::load(p)?;
                    let cfg = FrontendConfig::from_key_values(&kv, "")?;
                    kv.reject_unknown()?;
                    cfg
                }
            };
            let meta = UtteranceMetadata::load(&args.meta)?;
            let vectors = stage_features(
                &args.dir,
                &meta,
                kind,
                &frontend,
                args.extension_ms,
                &args.features_out,
                &args.segments_out,
            )?;
            println!(
                "wrote {} ({} segment vectors, dim {})",
                args.segments_out.display(),
                vectors.len(),
                vectors[0].dim()
            );
        }
        Command::Store(args) => {
            let scheme = parse_scheme(&args)?;
            let store = stage_store(&args.segments, &scheme, &args.tag, &args.out)?;
            println!(
                "wrote {} (K = {}, pool {} vectors)",
                args.out.display(),
                store.k(),
                store.pool.len()
            );
        }
        Command::Sign(args) => {
            let pooling = match &args.moments {
                None if args.bins == 0 => {
                    return Err(Error::Pipeline(
                        orbitsig_core::pipeline::PipelineError::BadConfig(
                            "--bins must be at least 1".to_string(),
                        ),
                    ))
                }
                None => PoolingSpec::Histogram { n_bins: args.bins },
                Some(list) => PoolingSpec::parse(&format!("moments:{}", list.replace(',', "+")))
                    .ok_or_else(|| {
                        Error::Pipeline(orbitsig_core::pipeline::PipelineError::BadConfig(
                            format!("bad moments list `{}`", list),
                        ))
                    })?,
            };
            stage_sign(
                &args.segments,
                &args.train_segments,
                &args.store,
                &pooling,
                &args.out,
            )?;
            println!("wrote {}", args.out.display());
        }
        Command::Train(args) => {
            let grid = match &args.grid {
                None => default_lambda_grid(),
                Some(list) => {
                    let parsed: std::result::Result<Vec<f64>, _> =
                        list.split(',').map(|v| v.trim().parse()).collect();
                    parsed.map_err(|_| {
                        Error::Pipeline(orbitsig_core::pipeline::PipelineError::BadConfig(
                            format!("bad lambda grid `{}`", list),
                        ))
                    })?
                }
            };
            let outcome = stage_train(
                &args.features,
                args.lambda,
                &grid,
                args.seed,
                &args.model_out,
            )?;
            match &outcome.validation {
                Some(v) => println!(
                    "wrote {} (lambda {} selected, validation ER {:.2}%, bER {:.2}%)",
                    args.model_out.display(),
                    outcome.lambda,
                    v.error_rate,
                    v.balanced_error_rate
                ),
                None => println!(
                    "wrote {} (lambda {} fixed)",
                    args.model_out.display(),
                    outcome.lambda
                ),
            }
        }
        Command::Eval(args) => {
            let metrics = stage_eval(
                &args.model,
                &args.train,
                &args.features,
                &args.metrics_out,
                &args.confusion_out,
            )?;
            println!(
                "ER {:.2}%  bER {:.2}%  ({})",
                metrics.error_rate,
                metrics.balanced_error_rate,
                args.metrics_out.display()
            );
        }
        Command::Run(args) => {
            let config = load_experiment_config(&args.config, args.seed)?;
            let result = run_pipeline(&config, &args.corpus, &args.out)?;
            println!(
                "base: ER {:.2}% bER {:.2}%  (dim {})",
                result.base.error_rate, result.base.balanced_error_rate, result.base_dim
            );
            println!(
                "invr: ER {:.2}% bER {:.2}%  (K {}, dim {})",
                result.invr.error_rate,
                result.invr.balanced_error_rate,
                result.k,
                result.signature_dim
            );
        }
        Command::Sweep(args) => {
            let config = load_experiment_config(&args.config, args.seed)?;
            let sweep = run_sweep(&config, &args.corpus, &args.out)?;
            println!("fraction  n_train  repr  mean_er  mean_ber");
            for row in &sweep.rows {
                println!(
                    "{:<9} {:<8} {:<5} {:>7.2}  {:>8.2}",
                    row.fraction, row.n_train, row.representation, row.mean_er, row.mean_ber
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let jobs = cli.jobs.or_else(|| {
        std::env::var("ORBITSIG_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(jobs) = jobs {
        if jobs > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
