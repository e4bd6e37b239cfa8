//! End-to-end experiment orchestration: staged feature extraction, store
//! construction, signature computation, training and evaluation, plus the
//! training-set-size sweep.
//!
//! Every stage reads and writes only the documented file formats, and the
//! one-shot pipeline routes its data through the same files, so staged
//! re-runs reproduce the one-shot results bit-exactly. The frame-feature
//! CSV is the single quantization point (9 significant digits); all other
//! files print floats with the shortest exact representation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::KeyValues;
use crate::corpus::Split;
use crate::frontend::{
    extract_features, read_feature_csv, write_feature_csv, FeatureKind, FrontendConfig,
};
use crate::orbit::{load_store, partition_by_category, save_store};
use crate::orbit::{kmeans_cosine, MetaField, OrbitStore, PartitionScheme, TemplatePool};
use crate::rls::{
    compute_metrics, default_lambda_grid, load_model, predict, save_model, select_lambda,
    train_rls, Metrics, RlsError, RlsModel,
};
use crate::rls::{write_confusion_csv, write_metrics_csv, LabeledDataset};
use crate::segment::{
    aggregate_segment, read_segment_csv, write_segment_csv, SegmentVector, UtteranceMetadata,
};
use crate::signature::{
    fit_standardizer, read_signature_csv, write_signature_csv, PoolingSpec, SignatureEngine,
    SignatureError, SignatureRowMeta, Standardizer,
};
use crate::util::mix_seed2;
use crate::{Error, Result};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad experiment config: {0}")]
    BadConfig(String),
    #[error("fraction {fraction} leaves class `{class}` without training samples")]
    FractionTooSmall { fraction: f64, class: String },
    #[error("label `{0}` appears in evaluation data but not in training data")]
    LabelUnseen(String),
    #[error("model was trained with standardizer `{model}`, this data gives `{data}`")]
    StandardizerMismatch { model: String, data: String },
    #[error("{0}")]
    Other(String),
}

/// Experiment parameters; everything a run needs beyond the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: FeatureKind,
    pub frontend: FrontendConfig,
    pub extension_ms: f64,
    pub scheme: PartitionScheme,
    pub pooling: PoolingSpec,
    /// Fixed regularization; `None` selects on the validation split.
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub fractions: Vec<f64>,
    pub sweep_seeds: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::Plp,
            frontend: FrontendConfig::default(),
            extension_ms: 30.0,
            scheme: PartitionScheme::Categorical(vec![MetaField::Label, MetaField::Dialect]),
            pooling: PoolingSpec::default_histogram(),
            lambda: None,
            lambda_grid: default_lambda_grid(),
            fractions: vec![1.0, 0.25, 0.0625, 0.015625],
            sweep_seeds: 50,
            seed: 42,
        }
    }
}

impl ExperimentConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let kind = match kv.get("kind") {
            None => d.kind,
            Some(v) => FeatureKind::parse(v)
                .ok_or_else(|| PipelineError::BadConfig(format!("unknown kind `{}`", v)))?,
        };
        let frontend = FrontendConfig::from_key_values(kv, "frontend.")?;
        let scheme = match kv.get("partition") {
            None => d.scheme,
            Some("kmeans") => PartitionScheme::KMeans {
                k: kv.get_parsed("kmeans_k", 24usize)?,
                seed: kv.get_parsed("kmeans_seed", 7u64)?,
                max_iters: kv.get_parsed("kmeans_max_iters", 100usize)?,
            },
            Some(fields) => {
                let parsed: Option<Vec<MetaField>> =
                    fields.split(',').map(|f| MetaField::parse(f.trim())).collect();
                let parsed = parsed.ok_or_else(|| {
                    PipelineError::BadConfig(format!("bad partition fields `{}`", fields))
                })?;
                if parsed.is_empty() {
                    return Err(PipelineError::BadConfig("empty partition".to_string()).into());
                }
                PartitionScheme::Categorical(parsed)
            }
        };
        let pooling = match kv.get("pooling") {
            // the default estimator is a histogram, so `bins` applies
            None | Some("histogram") => {
                let n_bins = kv.get_parsed("bins", 20usize)?;
                if n_bins == 0 {
                    return Err(PipelineError::BadConfig(
                        "bins must be at least 1".to_string(),
                    )
                    .into());
                }
                PoolingSpec::Histogram { n_bins }
            }
            Some("moments") => {
                let list = kv
                    .get_list("moments")
                    .unwrap_or_else(|| vec!["mean".into(), "energy".into(), "max".into()]);
                let parsed: Option<Vec<_>> =
                    list.iter().map(|m| crate::signature::Moment::parse(m)).collect();
                PoolingSpec::Moments(parsed.ok_or_else(|| {
                    PipelineError::BadConfig(format!("bad moments list `{}`", list.join(",")))
                })?)
            }
            Some(v) => {
                return Err(
                    PipelineError::BadConfig(format!("unknown pooling `{}`", v)).into()
                )
            }
        };
        let lambda = match kv.get("lambda") {
            None => None,
            Some(v) => Some(v.parse::<f64>().map_err(|_| {
                PipelineError::BadConfig(format!("bad lambda `{}`", v))
            })?),
        };
        let lambda_grid = match kv.get_list("lambda_grid") {
            None => d.lambda_grid,
            Some(list) => {
                let parsed: std::result::Result<Vec<f64>, _> =
                    list.iter().map(|v| v.parse()).collect();
                parsed.map_err(|_| PipelineError::BadConfig("bad lambda_grid".to_string()))?
            }
        };
        let fractions = match kv.get_list("fractions") {
            None => d.fractions,
            Some(list) => {
                let parsed: std::result::Result<Vec<f64>, _> =
                    list.iter().map(|v| v.parse()).collect();
                let parsed: Vec<f64> =
                    parsed.map_err(|_| PipelineError::BadConfig("bad fractions".to_string()))?;
                if parsed.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
                    return Err(PipelineError::BadConfig(
                        "fractions must lie in (0, 1]".to_string(),
                    )
                    .into());
                }
                parsed
            }
        };
        let sweep_seeds = kv.get_parsed("sweep_seeds", d.sweep_seeds)?;
        if sweep_seeds == 0 {
            return Err(PipelineError::BadConfig("sweep_seeds must be >= 1".to_string()).into());
        }
        let extension_ms = kv.get_parsed("extension_ms", d.extension_ms)?;
        if extension_ms < 0.0 {
            return Err(
                PipelineError::BadConfig("extension_ms must be nonnegative".to_string()).into(),
            );
        }
        let seed = kv.get_parsed("seed", d.seed)?;
        Ok(Self {
            kind,
            frontend,
            extension_ms,
            scheme,
            pooling,
            lambda,
            lambda_grid,
            fractions,
            sweep_seeds,
            seed,
        })
    }
}

/// Canonical file names inside an output directory.
pub struct StagePaths {
    pub out_dir: PathBuf,
}

impl StagePaths {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn features(&self, split: Split) -> PathBuf {
        self.out_dir.join(format!("features_{}.csv", split.as_str()))
    }

    pub fn segments(&self, split: Split) -> PathBuf {
        self.out_dir.join(format!("segments_{}.csv", split.as_str()))
    }

    pub fn store(&self) -> PathBuf {
        self.out_dir.join("store.txt")
    }

    pub fn signatures(&self, split: Split) -> PathBuf {
        self.out_dir.join(format!("signatures_{}.csv", split.as_str()))
    }

    pub fn model(&self, repr: &str) -> PathBuf {
        self.out_dir.join(format!("model_{}.txt", repr))
    }

    pub fn metrics(&self, repr: &str) -> PathBuf {
        self.out_dir.join(format!("metrics_{}.csv", repr))
    }

    pub fn confusion(&self, repr: &str) -> PathBuf {
        self.out_dir.join(format!("confusion_{}.csv", repr))
    }

    pub fn results(&self) -> PathBuf {
        self.out_dir.join("results.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.out_dir.join("manifest.txt")
    }

    pub fn sweep_csv(&self) -> PathBuf {
        self.out_dir.join("sweep.csv")
    }

    pub fn sweep_svg(&self) -> PathBuf {
        self.out_dir.join("sweep.svg")
    }
}

// --- stages --------------------------------------------------------------------

/// Extract frame features and aggregate segment vectors for one corpus
/// split. Writes the feature CSV, reads it back (the quantization
/// boundary), aggregates, writes the segment CSV, and returns its rows.
pub fn stage_features(
    split_dir: &Path,
    meta: &UtteranceMetadata,
    kind: FeatureKind,
    frontend: &FrontendConfig,
    extension_ms: f64,
    features_out: &Path,
    segments_out: &Path,
) -> Result<Vec<SegmentVector>> {
    let utterances = crate::corpus::load_split_dir(split_dir, meta)?;
    if utterances.is_empty() {
        return Err(PipelineError::Other(format!(
            "no WAV files in {}",
            split_dir.display()
        ))
        .into());
    }
    let frames: Result<Vec<_>> = utterances
        .par_iter()
        .map(|(utt, signal, _)| {
            let fm = extract_features(signal, kind, frontend)?;
            Ok((utt.clone(), fm))
        })
        .collect();
    let frames = frames?;
    write_feature_csv(features_out, &frames)?;

    let reloaded = read_feature_csv(features_out, frontend)?;
    let by_utt: BTreeMap<&str, &crate::frontend::FrameMatrix> = reloaded
        .iter()
        .map(|(utt, fm)| (utt.as_str(), fm))
        .collect();
    let mut vectors = Vec::new();
    for (utt, _, segments) in &utterances {
        let fm = by_utt.get(utt.as_str()).ok_or_else(|| {
            PipelineError::Other(format!("utterance `{}` lost in feature round-trip", utt))
        })?;
        for segment in segments {
            vectors.push(aggregate_segment(fm, segment, extension_ms)?);
        }
    }
    write_segment_csv(segments_out, &vectors)?;
    Ok(read_segment_csv(segments_out)?)
}

/// Partition the pool segment vectors into an orbit store and persist it.
pub fn stage_store(
    pool_segments_csv: &Path,
    scheme: &PartitionScheme,
    tag: &str,
    store_out: &Path,
) -> Result<OrbitStore> {
    let vectors = read_segment_csv(pool_segments_csv)?;
    let pool = TemplatePool::new(vectors, tag)?;
    let store = match scheme {
        PartitionScheme::Categorical(fields) => partition_by_category(pool, fields)?,
        PartitionScheme::KMeans { k, seed, max_iters } => {
            kmeans_cosine(pool, *k, *seed, *max_iters)?
        }
    };
    save_store(&store, store_out)?;
    Ok(load_store(store_out)?)
}

/// Compute signatures for one segment CSV against a stored orbit store,
/// standardizing with statistics fitted on the training segments.
pub fn stage_sign(
    segments_csv: &Path,
    train_segments_csv: &Path,
    store_file: &Path,
    pooling: &PoolingSpec,
    signatures_out: &Path,
) -> Result<()> {
    let inputs = read_segment_csv(segments_csv)?;
    let train = read_segment_csv(train_segments_csv)?;
    let store = load_store(store_file)?;
    if inputs[0].kind != store.pool.kind() {
        return Err(SignatureError::KindMismatch {
            input: inputs[0].kind.to_string(),
            store: store.pool.kind().to_string(),
        }
        .into());
    }
    let standardizer = fit_standardizer(&train)?;
    let engine = SignatureEngine::new(&store, &standardizer, pooling)?;
    let values = engine.batch(&inputs)?;
    let metas: Vec<SignatureRowMeta> = inputs
        .iter()
        .map(|sv| SignatureRowMeta {
            utterance_id: sv.segment.utterance_id.clone(),
            start_sample: sv.segment.start_sample,
            end_sample: sv.segment.end_sample,
            label: sv.segment.label.clone(),
        })
        .collect();
    write_signature_csv(
        signatures_out,
        &metas,
        &values,
        engine.store_id(),
        engine.k(),
        pooling,
    )?;
    Ok(())
}

/// A loaded feature table: rows, labels, and the id of the standardizer
/// its training statistics produce.
pub struct FeatureTable {
    pub labels: Vec<String>,
    pub features: Array2<f64>,
    pub source_id: String,
}

/// Load either a segment CSV or a signature CSV as a labelled feature
/// table (the two carry their label column in different positions).
pub fn load_feature_table(path: &Path) -> Result<FeatureTable> {
    let text = fs::read_to_string(path)?;
    let header = text
        .lines()
        .find(|l| !l.starts_with('#') && !l.trim().is_empty())
        .unwrap_or("");
    let basename = path
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| path.display().to_string());
    if header.starts_with("utterance,start,end,label,speaker,dialect") {
        let vectors = read_segment_csv(path)?;
        let p = vectors[0].dim();
        let features =
            Array2::from_shape_fn((vectors.len(), p), |(r, c)| vectors[r].values[c]);
        let labels = vectors.iter().map(|v| v.segment.label.clone()).collect();
        Ok(FeatureTable {
            labels,
            features,
            source_id: format!("{}#{}x{}", basename, vectors.len(), p),
        })
    } else if header.starts_with("utterance,start,end,label") {
        let (metas, features) = read_signature_csv(path)?;
        let labels = metas.iter().map(|m| m.label.clone()).collect();
        let id = format!("{}#{}x{}", basename, features.nrows(), features.ncols());
        Ok(FeatureTable {
            labels,
            features,
            source_id: id,
        })
    } else {
        Err(PipelineError::Other(format!(
            "{} is neither a segment nor a signature CSV",
            path.display()
        ))
        .into())
    }
}

fn sorted_class_names(labels: &[String]) -> Vec<String> {
    let mut names: Vec<String> = labels.to_vec();
    names.sort();
    names.dedup();
    names
}

fn label_ids(labels: &[String], class_names: &[String]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            class_names
                .binary_search(l)
                .map_err(|_| Error::from(PipelineError::LabelUnseen(l.clone())))
        })
        .collect()
}

/// Outcome of the train stage.
pub struct TrainOutcome {
    pub model: RlsModel,
    pub lambda: f64,
    pub validation: Option<Metrics>,
}

/// Train on a feature table file: fit the standardizer on it, select
/// lambda on a seeded 1/6 split unless one is given, retrain on the full
/// table, and persist the model.
pub fn stage_train(
    train_csv: &Path,
    lambda: Option<f64>,
    grid: &[f64],
    split_seed: u64,
    model_out: &Path,
) -> Result<TrainOutcome> {
    let table = load_feature_table(train_csv)?;
    let standardizer = Standardizer::fit(&table.features)?;
    let x = standardizer.apply_matrix(&table.features)?;
    let class_names = sorted_class_names(&table.labels);
    let labels = label_ids(&table.labels, &class_names)?;
    let data = LabeledDataset::new(x, labels, class_names)?;
    let (mut model, lambda, validation) = match lambda {
        Some(l) => (train_rls(&data, l)?, l, None),
        None => {
            let sel = select_lambda(&data, grid, split_seed)?;
            (sel.model, sel.lambda, Some(sel.validation))
        }
    };
    model.standardizer_id = table.source_id.clone();
    save_model(&model, model_out)?;
    Ok(TrainOutcome {
        model,
        lambda,
        validation,
    })
}

/// Evaluate a saved model: refit the standardizer from the training
/// table, verify it matches the model, score the evaluation table, and
/// write metrics and confusion CSVs.
pub fn stage_eval(
    model_file: &Path,
    train_csv: &Path,
    eval_csv: &Path,
    metrics_out: &Path,
    confusion_out: &Path,
) -> Result<Metrics> {
    let model = load_model(model_file)?;
    let train = load_feature_table(train_csv)?;
    if model.standardizer_id != train.source_id {
        return Err(PipelineError::StandardizerMismatch {
            model: model.standardizer_id.clone(),
            data: train.source_id.clone(),
        }
        .into());
    }
    let standardizer = Standardizer::fit(&train.features)?;
    let table = load_feature_table(eval_csv)?;
    let x = standardizer.apply_matrix(&table.features).map_err(|_| {
        Error::from(RlsError::DimensionMismatch {
            got: table.features.ncols(),
            want: standardizer.dim(),
        })
    })?;
    let truth = label_ids(&table.labels, &model.class_names)?;
    let preds = predict(&model, &x)?;
    let metrics = compute_metrics(&preds, &truth, model.class_names.len())?;
    write_metrics_csv(&metrics, metrics_out)?;
    write_confusion_csv(&metrics, &model.class_names, confusion_out)?;
    Ok(metrics)
}

// --- the one-shot pipeline -------------------------------------------------------

/// Everything a full run produces, for callers and the manifest.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub base: Metrics,
    pub invr: Metrics,
    pub lambda_base: f64,
    pub lambda_invr: f64,
    pub base_dim: usize,
    pub signature_dim: usize,
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_pool: usize,
}

fn split_seed_for(config: &ExperimentConfig) -> u64 {
    mix_seed2(config.seed, 1, 0)
}

/// Run the staged pipeline end to end on a generated corpus directory,
/// training and evaluating both the base segment representation and the
/// invariant signature representation with identical protocols.
pub fn run_pipeline(
    config: &ExperimentConfig,
    corpus_dir: &Path,
    out_dir: &Path,
) -> Result<PipelineResult> {
    fs::create_dir_all(out_dir)?;
    let paths = StagePaths::new(out_dir);
    let meta = UtteranceMetadata::load(&corpus_dir.join("metadata.txt"))?;

    let mut counts = BTreeMap::new();
    for split in Split::ALL {
        let vectors = stage_features(
            &corpus_dir.join(split.as_str()),
            &meta,
            config.kind,
            &config.frontend,
            config.extension_ms,
            &paths.features(split),
            &paths.segments(split),
        )?;
        counts.insert(split.as_str(), vectors.len());
    }

    let store = stage_store(
        &paths.segments(Split::Pool),
        &config.scheme,
        "pool",
        &paths.store(),
    )?;
    for split in [Split::Train, Split::Test] {
        stage_sign(
            &paths.segments(split),
            &paths.segments(Split::Train),
            &paths.store(),
            &config.pooling,
            &paths.signatures(split),
        )?;
    }

    let split_seed = split_seed_for(config);
    let mut outcomes = Vec::new();
    for (repr, train_csv, test_csv) in [
        (
            "base",
            paths.segments(Split::Train),
            paths.segments(Split::Test),
        ),
        (
            "invr",
            paths.signatures(Split::Train),
            paths.signatures(Split::Test),
        ),
    ] {
        let outcome = stage_train(
            &train_csv,
            config.lambda,
            &config.lambda_grid,
            split_seed,
            &paths.model(repr),
        )?;
        let metrics = stage_eval(
            &paths.model(repr),
            &train_csv,
            &test_csv,
            &paths.metrics(repr),
            &paths.confusion(repr),
        )?;
        outcomes.push((outcome, metrics));
    }
    let (base_outcome, base_metrics) = &outcomes[0];
    let (invr_outcome, invr_metrics) = &outcomes[1];

    let mut results = String::from("representation,er,ber\n");
    results.push_str(&format!(
        "base,{},{}\n",
        base_metrics.error_rate, base_metrics.balanced_error_rate
    ));
    results.push_str(&format!(
        "invr,{},{}\n",
        invr_metrics.error_rate, invr_metrics.balanced_error_rate
    ));
    fs::write(paths.results(), results)?;

    let result = PipelineResult {
        base: base_metrics.clone(),
        invr: invr_metrics.clone(),
        lambda_base: base_outcome.lambda,
        lambda_invr: invr_outcome.lambda,
        base_dim: base_outcome.model.p(),
        signature_dim: invr_outcome.model.p(),
        k: store.k(),
        n_train: counts["train"],
        n_test: counts["test"],
        n_pool: counts["pool"],
    };
    write_manifest(config, corpus_dir, &result, &paths.manifest())?;
    Ok(result)
}

fn write_manifest(
    config: &ExperimentConfig,
    corpus_dir: &Path,
    result: &PipelineResult,
    path: &Path,
) -> Result<()> {
    let fe = &config.frontend;
    let mut out = String::from("# run manifest: every value needed to reproduce this run\n");
    let mut push = |k: &str, v: String| out.push_str(&format!("{} = {}\n", k, v));
    push("corpus_dir", corpus_dir.display().to_string());
    push("kind", config.kind.to_string());
    push("frontend.window_ms", fe.window_ms.to_string());
    push("frontend.hop_ms", fe.hop_ms.to_string());
    push("frontend.preemphasis", fe.preemphasis.to_string());
    push("frontend.n_mels_spectral", fe.n_mels_spectral.to_string());
    push("frontend.n_mels_cepstral", fe.n_mels_cepstral.to_string());
    push("frontend.n_cepstra", fe.n_cepstra.to_string());
    push("frontend.lpc_order", fe.lpc_order.to_string());
    push("frontend.delta_window", fe.delta_window.to_string());
    push("frontend.fmin_hz", fe.fmin_hz.to_string());
    push(
        "frontend.fmax_hz",
        fe.fmax_hz.map(|v| v.to_string()).unwrap_or_else(|| "nyquist".into()),
    );
    push("extension_ms", config.extension_ms.to_string());
    push("partition", config.scheme.describe());
    push("pooling", config.pooling.describe());
    push(
        "lambda",
        config
            .lambda
            .map(|v| v.to_string())
            .unwrap_or_else(|| "auto".into()),
    );
    push(
        "lambda_grid",
        config
            .lambda_grid
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    push(
        "fractions",
        config
            .fractions
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    push("sweep_seeds", config.sweep_seeds.to_string());
    push("seed", config.seed.to_string());
    push("split_seed", split_seed_for(config).to_string());
    push("n_train", result.n_train.to_string());
    push("n_test", result.n_test.to_string());
    push("n_pool", result.n_pool.to_string());
    push("base_dim", result.base_dim.to_string());
    push("k", result.k.to_string());
    push("n_outputs", config.pooling.n_outputs().to_string());
    push("signature_dim", result.signature_dim.to_string());
    push("lambda_base", result.lambda_base.to_string());
    push("lambda_invr", result.lambda_invr.to_string());
    push("base_er", result.base.error_rate.to_string());
    push("base_ber", result.base.balanced_error_rate.to_string());
    push("invr_er", result.invr.error_rate.to_string());
    push("invr_ber", result.invr.balanced_error_rate.to_string());
    fs::write(path, out)?;
    Ok(())
}

// --- the sweep ---------------------------------------------------------------------

/// One aggregated sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub n_train: usize,
    pub representation: &'static str,
    pub mean_er: f64,
    pub std_er: f64,
    pub mean_ber: f64,
    pub seeds: usize,
}

/// Sweep output: aggregated rows sorted by ascending fraction, base and
/// invr per fraction.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub pipeline: PipelineResult,
}

struct RunMetrics {
    base: Metrics,
    invr: Metrics,
}

/// Class-stratified subsample: `round(fraction * count)` per class,
/// at least one item per class, indices returned in original order.
fn stratified_subset(
    labels: &[String],
    class_names: &[String],
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for name in class_names {
        let mut indices: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| *l == name)
            .map(|(i, _)| i)
            .collect();
        let count = (fraction * indices.len() as f64).round() as usize;
        if count == 0 {
            return Err(PipelineError::FractionTooSmall {
                fraction,
                class: name.clone(),
            }
            .into());
        }
        indices.shuffle(&mut rng);
        chosen.extend_from_slice(&indices[..count]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Run the training-set-size sweep. The full-scale pipeline runs first;
/// its selected regularization is reused at every fraction, and each
/// (fraction, seed) run refits standardizers and signatures on its own
/// subset. Emits `sweep.csv` and an SVG line plot of ER vs n_train.
pub fn run_sweep(
    config: &ExperimentConfig,
    corpus_dir: &Path,
    out_dir: &Path,
) -> Result<SweepResult> {
    let pipeline = run_pipeline(config, corpus_dir, out_dir)?;
    let paths = StagePaths::new(out_dir);

    let train_vectors = read_segment_csv(&paths.segments(Split::Train))?;
    let test_vectors = read_segment_csv(&paths.segments(Split::Test))?;
    let store = load_store(&paths.store())?;

    let train_labels: Vec<String> = train_vectors
        .iter()
        .map(|v| v.segment.label.clone())
        .collect();
    let class_names = sorted_class_names(&train_labels);
    let test_ids = label_ids(
        &test_vectors
            .iter()
            .map(|v| v.segment.label.clone())
            .collect::<Vec<_>>(),
        &class_names,
    )?;
    let base_dim = train_vectors[0].dim();
    let test_base = Array2::from_shape_fn((test_vectors.len(), base_dim), |(r, c)| {
        test_vectors[r].values[c]
    });

    let mut fractions = config.fractions.clone();
    fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // (fraction index, seed index) runs, computed in parallel, aggregated
    // in fixed order afterwards
    let runs: Vec<(usize, usize)> = (0..fractions.len())
        .flat_map(|f| (0..config.sweep_seeds).map(move |s| (f, s)))
        .collect();
    let results: Result<Vec<RunMetrics>> = runs
        .par_iter()
        .map(|&(f_idx, s)| {
            let fraction = fractions[f_idx];
            let subset_seed = mix_seed2(config.seed, 0x5eed + f_idx as u64, s as u64);
            let subset_idx =
                stratified_subset(&train_labels, &class_names, fraction, subset_seed)?;
            let subset: Vec<SegmentVector> = subset_idx
                .iter()
                .map(|&i| train_vectors[i].clone())
                .collect();
            let subset_ids = label_ids(
                &subset
                    .iter()
                    .map(|v| v.segment.label.clone())
                    .collect::<Vec<_>>(),
                &class_names,
            )?;

            // base representation
            let sub_base = Array2::from_shape_fn((subset.len(), base_dim), |(r, c)| {
                subset[r].values[c]
            });
            let std_base = Standardizer::fit(&sub_base)?;
            let data = LabeledDataset::new(
                std_base.apply_matrix(&sub_base)?,
                subset_ids.clone(),
                class_names.clone(),
            )?;
            let model = train_rls(&data, pipeline.lambda_base)?;
            let preds = predict(&model, &std_base.apply_matrix(&test_base)?)?;
            let base = compute_metrics(&preds, &test_ids, class_names.len())?;

            // invariant representation
            let std_seg = fit_standardizer(&subset)?;
            let engine = SignatureEngine::new(&store, &std_seg, &config.pooling)?;
            let sub_sigs = engine.batch(&subset)?;
            let test_sigs = engine.batch(&test_vectors)?;
            let std_sig = Standardizer::fit(&sub_sigs)?;
            let data = LabeledDataset::new(
                std_sig.apply_matrix(&sub_sigs)?,
                subset_ids,
                class_names.clone(),
            )?;
            let model = train_rls(&data, pipeline.lambda_invr)?;
            let preds = predict(&model, &std_sig.apply_matrix(&test_sigs)?)?;
            let invr = compute_metrics(&preds, &test_ids, class_names.len())?;
            Ok(RunMetrics { base, invr })
        })
        .collect();
    let results = results?;

    let mut rows = Vec::new();
    for (f_idx, &fraction) in fractions.iter().enumerate() {
        let slice: Vec<&RunMetrics> = runs
            .iter()
            .zip(&results)
            .filter(|((f, _), _)| *f == f_idx)
            .map(|(_, m)| m)
            .collect();
        let n_train = {
            // subset size is seed-independent; recompute from counts
            class_names
                .iter()
                .map(|name| {
                    let count = train_labels.iter().filter(|l| *l == name).count();
                    (fraction * count as f64).round().max(1.0) as usize
                })
                .sum()
        };
        for (repr, pick) in [
            ("base", &(|m: &&RunMetrics| m.base.clone()) as &dyn Fn(&&RunMetrics) -> Metrics),
            ("invr", &(|m: &&RunMetrics| m.invr.clone())),
        ] {
            let ers: Vec<f64> = slice.iter().map(|m| pick(m).error_rate).collect();
            let bers: Vec<f64> = slice.iter().map(|m| pick(m).balanced_error_rate).collect();
            let (mean_er, std_er) = mean_std(&ers);
            let (mean_ber, _) = mean_std(&bers);
            rows.push(SweepRow {
                fraction,
                n_train,
                representation: repr,
                mean_er,
                std_er,
                mean_ber,
                seeds: config.sweep_seeds,
            });
        }
    }

    let mut csv = String::from("fraction,n_train,representation,mean_er,std_er,mean_ber,seeds\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.fraction,
            row.n_train,
            row.representation,
            row.mean_er,
            row.std_er,
            row.mean_ber,
            row.seeds
        ));
    }
    fs::write(paths.sweep_csv(), csv)?;
    write_sweep_svg(&rows, &paths.sweep_svg())?;

    Ok(SweepResult { rows, pipeline })
}

/// Minimal SVG line chart: mean ER (%) against n_train on a log x-axis,
/// one polyline per representation.
fn write_sweep_svg(rows: &[SweepRow], path: &Path) -> Result<()> {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 20.0, 50.0);
    let xs: Vec<f64> = rows.iter().map(|r| (r.n_train as f64).ln()).collect();
    let x_lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(x_lo + 1e-9);
    let y_hi = rows
        .iter()
        .map(|r| r.mean_er + r.std_er)
        .fold(0.0f64, f64::max)
        .max(1.0)
        .ceil();
    let x_of = |n: usize| ml + ((n as f64).ln() - x_lo) / (x_hi - x_lo) * (w - ml - mr);
    let y_of = |er: f64| h - mb - er / y_hi * (h - mt - mb);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <line x1=\"{ml}\" y1=\"{y0}\" x2=\"{xr}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        y0 = h - mb,
        xr = w - mr,
    ));
    // y grid: five ticks
    for i in 0..=5 {
        let er = y_hi * i as f64 / 5.0;
        let y = y_of(er);
        svg.push_str(&format!(
            "<line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"#ddd\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" text-anchor=\"end\">{er:.0}</text>\n",
            x1 = ml,
            x2 = w - mr,
            tx = ml - 6.0,
            ty = y + 4.0,
        ));
    }
    for (repr, color) in [("base", "#c44"), ("invr", "#36c")] {
        let mut pts: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.representation == repr)
            .map(|r| (r.n_train, r.mean_er))
            .collect();
        pts.sort_by_key(|p| p.0);
        let path_d: Vec<String> = pts
            .iter()
            .map(|&(n, er)| format!("{:.2},{:.2}", x_of(n), y_of(er)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path_d.join(" ")
        ));
        for &(n, er) in &pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                x_of(n),
                y_of(er)
            ));
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                x_of(n),
                h - mb + 16.0,
                n
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">training segments</text>\n\
         <text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">mean ER (%)</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
    ));
    svg.push_str(&format!(
        "<rect x=\"{x}\" y=\"{y}\" width=\"12\" height=\"3\" fill=\"#c44\"/>\
         <text x=\"{tx}\" y=\"{ty}\">base</text>\n\
         <rect x=\"{x}\" y=\"{y2}\" width=\"12\" height=\"3\" fill=\"#36c\"/>\
         <text x=\"{tx}\" y=\"{ty2}\">invr</text>\n",
        x = w - mr - 90.0,
        y = mt + 8.0,
        tx = w - mr - 72.0,
        ty = mt + 13.0,
        y2 = mt + 24.0,
        ty2 = mt + 29.0,
    ));
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_parsing() {
        let kv = KeyValues::parse(
            "kind = mfc\npartition = label\npooling = histogram\nbins = 10\n\
             fractions = 1, 0.5\nsweep_seeds = 2\nseed = 9\nfrontend.window_ms = 20\n\
             frontend.hop_ms = 10\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_key_values(&kv).unwrap();
        kv.reject_unknown().unwrap();
        assert_eq!(cfg.kind, FeatureKind::Mfc);
        assert_eq!(cfg.scheme, PartitionScheme::Categorical(vec![MetaField::Label]));
        assert_eq!(cfg.pooling, PoolingSpec::Histogram { n_bins: 10 });
        assert_eq!(cfg.fractions, vec![1.0, 0.5]);
        assert_eq!(cfg.sweep_seeds, 2);
        assert_eq!(cfg.frontend.window_ms, 20.0);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn config_parses_kmeans_and_moments() {
        let kv = KeyValues::parse(
            "partition = kmeans\nkmeans_k = 12\nkmeans_seed = 5\n\
             pooling = moments\nmoments = mean, max\nlambda = 0.5\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_key_values(&kv).unwrap();
        kv.reject_unknown().unwrap();
        assert_eq!(
            cfg.scheme,
            PartitionScheme::KMeans {
                k: 12,
                seed: 5,
                max_iters: 100
            }
        );
        assert_eq!(
            cfg.pooling,
            PoolingSpec::Moments(vec![
                crate::signature::Moment::Mean,
                crate::signature::Moment::Max
            ])
        );
        assert_eq!(cfg.lambda, Some(0.5));
    }

    #[test]
    fn config_rejects_bad_values() {
        for text in [
            "kind = xyz\n",
            "pooling = kde\n",
            "partition = label,country\n",
            "fractions = 0\n",
            "fractions = 1.5\n",
            "sweep_seeds = 0\n",
        ] {
            let kv = KeyValues::parse(text).unwrap();
            assert!(ExperimentConfig::from_key_values(&kv).is_err(), "{}", text);
        }
    }

    #[test]
    fn stratified_subset_keeps_order_and_classes() {
        let labels: Vec<String> = (0..40)
            .map(|i| format!("c{}", i % 4))
            .collect();
        let names = sorted_class_names(&labels);
        let idx = stratified_subset(&labels, &names, 0.5, 1).unwrap();
        assert_eq!(idx.len(), 20);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        for name in &names {
            assert_eq!(idx.iter().filter(|&&i| &labels[i] == name).count(), 5);
        }
        // full fraction returns everything in order
        let idx = stratified_subset(&labels, &names, 1.0, 5).unwrap();
        assert_eq!(idx, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_subset_rejects_vanishing_classes() {
        let labels: Vec<String> = (0..8).map(|i| format!("c{}", i % 4)).collect();
        let names = sorted_class_names(&labels);
        assert!(matches!(
            stratified_subset(&labels, &names, 0.1, 1)
                .unwrap_err(),
            Error::Pipeline(PipelineError::FractionTooSmall { .. })
        ));
    }
}
