//! Deterministic synthetic vowel corpus: seeded nuisance-perturbed
//! renditions of a small formant inventory, split into disjoint train,
//! test and template-pool sets and written in the same WAV/label/metadata
//! formats the front-end consumes.

use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::{read_wav, write_wav, AudioError, RawSignal};
use crate::config::{ConfigError, KeyValues};
use crate::segment::{parse_label_file, PhoneSegment, SegmentError, UtteranceMetadata};
use crate::synth::{
    add_noise, apply_transform, synth_vowel, transform_vowel_spec, SynthError, TransformSpec,
    VowelSpec,
};
use crate::util::mix_seed;

/// Built-in formant inventory shipped with the crate.
pub const DEFAULT_VOWEL_TABLE: &str = include_str!("../data/default_vowels.txt");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("bad corpus config: {0}")]
    BadConfig(String),
    #[error("unknown vowel class `{0}`")]
    UnknownClass(String),
    #[error("vowel table line {line}: {msg}")]
    BadVowelTable { line: usize, msg: String },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Which experimental split an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Pool,
}

impl Split {
    pub const ALL: [Split; 3] = [Self::Train, Self::Test, Self::Pool];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
            Self::Pool => "pool",
        }
    }

    fn id(self) -> u64 {
        match self {
            Self::Train => 1,
            Self::Test => 2,
            Self::Pool => 3,
        }
    }
}

/// One synthesized utterance: a padded vowel with its segment annotation.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub signal: RawSignal,
    pub segment: PhoneSegment,
    pub split: Split,
}

/// A full generated corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
    pub generator_seed: u64,
    pub rate: u32,
}

impl Corpus {
    pub fn split_items(&self, split: Split) -> Vec<&CorpusItem> {
        self.items.iter().filter(|i| i.split == split).collect()
    }
}

/// A named vowel inventory entry.
#[derive(Debug, Clone)]
pub struct VowelEntry {
    pub name: String,
    pub formants_hz: [f64; 3],
    pub bandwidths_hz: [f64; 3],
    pub f0_hz: f64,
}

/// Parse an inventory table: `name F1 F2 F3 B1 B2 B3 f0` per line.
pub fn parse_vowel_table(text: &str) -> Result<Vec<VowelEntry>, CorpusError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: &str| CorpusError::BadVowelTable {
            line: i + 1,
            msg: msg.to_string(),
        };
        if fields.len() != 8 {
            return Err(err("expected `name F1 F2 F3 B1 B2 B3 f0`"));
        }
        let mut nums = [0.0; 7];
        for (j, slot) in nums.iter_mut().enumerate() {
            *slot = fields[j + 1].parse().map_err(|_| err("bad number"))?;
        }
        entries.push(VowelEntry {
            name: fields[0].to_string(),
            formants_hz: [nums[0], nums[1], nums[2]],
            bandwidths_hz: [nums[3], nums[4], nums[5]],
            f0_hz: nums[6],
        });
    }
    if entries.is_empty() {
        return Err(CorpusError::BadVowelTable {
            line: 0,
            msg: "empty vowel table".to_string(),
        });
    }
    Ok(entries)
}

/// Corpus generation parameters. Defaults give 8 classes with 64/24/32
/// items per class in train/test/pool and moderate nuisance ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub classes: Vec<String>,
    pub rate: u32,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub pool_per_class: usize,
    pub duration_ms_min: f64,
    pub duration_ms_max: f64,
    pub pad_ms: f64,
    pub pitch_scale_min: f64,
    pub pitch_scale_max: f64,
    pub formant_scale_min: f64,
    pub formant_scale_max: f64,
    pub nuisance_bands: usize,
    pub shift_ms_max: f64,
    pub time_scale_min: f64,
    pub time_scale_max: f64,
    pub fir_taps_max: usize,
    pub fir_wiggle: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
    /// Optional path to an inventory table replacing the built-in one.
    pub vowel_file: Option<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            classes: Vec::new(), // empty = all inventory classes
            rate: 16000,
            train_per_class: 64,
            test_per_class: 24,
            pool_per_class: 32,
            duration_ms_min: 140.0,
            duration_ms_max: 220.0,
            pad_ms: 50.0,
            pitch_scale_min: 0.85,
            pitch_scale_max: 1.15,
            formant_scale_min: 0.94,
            formant_scale_max: 1.06,
            nuisance_bands: 3,
            shift_ms_max: 15.0,
            time_scale_min: 0.85,
            time_scale_max: 1.18,
            fir_taps_max: 9,
            fir_wiggle: 0.5,
            snr_db: Some(20.0),
            seed: 42,
            vowel_file: None,
        }
    }
}

impl CorpusConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, CorpusError> {
        let d = Self::default();
        let snr_db = match kv.get("snr_db") {
            None => d.snr_db,
            Some("none") => None,
            Some(v) => Some(v.parse().map_err(|_| {
                CorpusError::BadConfig(format!("snr_db: cannot parse `{}`", v))
            })?),
        };
        let cfg = Self {
            classes: kv.get_list("classes").unwrap_or_default(),
            rate: kv.get_parsed("rate", d.rate)?,
            train_per_class: kv.get_parsed("train_per_class", d.train_per_class)?,
            test_per_class: kv.get_parsed("test_per_class", d.test_per_class)?,
            pool_per_class: kv.get_parsed("pool_per_class", d.pool_per_class)?,
            duration_ms_min: kv.get_parsed("duration_ms_min", d.duration_ms_min)?,
            duration_ms_max: kv.get_parsed("duration_ms_max", d.duration_ms_max)?,
            pad_ms: kv.get_parsed("pad_ms", d.pad_ms)?,
            pitch_scale_min: kv.get_parsed("pitch_scale_min", d.pitch_scale_min)?,
            pitch_scale_max: kv.get_parsed("pitch_scale_max", d.pitch_scale_max)?,
            formant_scale_min: kv.get_parsed("formant_scale_min", d.formant_scale_min)?,
            formant_scale_max: kv.get_parsed("formant_scale_max", d.formant_scale_max)?,
            nuisance_bands: kv.get_parsed("nuisance_bands", d.nuisance_bands)?,
            shift_ms_max: kv.get_parsed("shift_ms_max", d.shift_ms_max)?,
            time_scale_min: kv.get_parsed("time_scale_min", d.time_scale_min)?,
            time_scale_max: kv.get_parsed("time_scale_max", d.time_scale_max)?,
            fir_taps_max: kv.get_parsed("fir_taps_max", d.fir_taps_max)?,
            fir_wiggle: kv.get_parsed("fir_wiggle", d.fir_wiggle)?,
            snr_db,
            seed: kv.get_parsed("seed", d.seed)?,
            vowel_file: kv.get("vowel_file").map(|s| s.to_string()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::BadConfig(m));
        if self.rate == 0 {
            return bad("rate must be positive".to_string());
        }
        if self.train_per_class == 0 || self.test_per_class == 0 || self.pool_per_class == 0 {
            return bad("per-class counts must be positive".to_string());
        }
        if !(self.duration_ms_min > 0.0 && self.duration_ms_max >= self.duration_ms_min) {
            return bad("bad duration range".to_string());
        }
        if !(self.pitch_scale_min > 0.0 && self.pitch_scale_max >= self.pitch_scale_min) {
            return bad("bad pitch scale range".to_string());
        }
        if !(self.formant_scale_min > 0.0 && self.formant_scale_max >= self.formant_scale_min) {
            return bad("bad formant scale range".to_string());
        }
        if self.nuisance_bands == 0 {
            return bad("nuisance_bands must be positive".to_string());
        }
        if !(self.time_scale_min > 0.0 && self.time_scale_max >= self.time_scale_min) {
            return bad("bad time scale range".to_string());
        }
        if self.fir_taps_max == 0 || self.fir_taps_max.is_multiple_of(2) {
            return bad("fir_taps_max must be a positive odd count".to_string());
        }
        if self.shift_ms_max < 0.0 {
            return bad("shift_ms_max must be nonnegative".to_string());
        }
        Ok(())
    }

    fn inventory(&self) -> Result<Vec<VowelEntry>, CorpusError> {
        let table = match &self.vowel_file {
            Some(path) => parse_vowel_table(&fs::read_to_string(path)?)?,
            None => parse_vowel_table(DEFAULT_VOWEL_TABLE)?,
        };
        if self.classes.is_empty() {
            return Ok(table);
        }
        self.classes
            .iter()
            .map(|name| {
                table
                    .iter()
                    .find(|e| &e.name == name)
                    .cloned()
                    .ok_or_else(|| CorpusError::UnknownClass(name.clone()))
            })
            .collect()
    }

    /// Which nuisance band a formant scale falls into; bands partition the
    /// configured range into equal sub-ranges.
    pub fn band_of(&self, formant_scale: f64) -> usize {
        let lo = self.formant_scale_min;
        let hi = self.formant_scale_max;
        if hi <= lo {
            return 0;
        }
        let t = ((formant_scale - lo) / (hi - lo) * self.nuisance_bands as f64) as usize;
        t.min(self.nuisance_bands - 1)
    }
}

fn sample_fir(rng: &mut ChaCha8Rng, taps_max: usize, wiggle: f64) -> Vec<f64> {
    let choices: Vec<usize> = (1..=taps_max).step_by(2).collect();
    let taps = choices[rng.gen_range(0..choices.len())];
    if taps == 1 {
        return vec![1.0];
    }
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let hann =
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i + 1) as f64 / (taps + 1) as f64).cos();
            hann * (1.0 + wiggle * rng.gen_range(-1.0..1.0))
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum; // unit DC gain
    }
    h
}

/// Generate the corpus deterministically from its config. Per-item seeds
/// are derived from (seed, split, class, index), so the output does not
/// depend on generation order.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let inventory = config.inventory()?;
    if inventory.len() < 2 {
        return Err(CorpusError::BadConfig(
            "need at least 2 vowel classes".to_string(),
        ));
    }
    let mut items = Vec::new();
    let mut speaker_counter = 0usize;
    for split in Split::ALL {
        let per_class = match split {
            Split::Train => config.train_per_class,
            Split::Test => config.test_per_class,
            Split::Pool => config.pool_per_class,
        };
        for (class_idx, entry) in inventory.iter().enumerate() {
            for i in 0..per_class {
                let item_seed = mix_seed(
                    mix_seed(mix_seed(config.seed, split.id()), class_idx as u64),
                    i as u64,
                );
                let mut rng = ChaCha8Rng::seed_from_u64(item_seed);

                let duration_ms = rng.gen_range(config.duration_ms_min..=config.duration_ms_max);
                let pitch_scale =
                    rng.gen_range(config.pitch_scale_min..=config.pitch_scale_max);
                let formant_scale =
                    rng.gen_range(config.formant_scale_min..=config.formant_scale_max);
                let shift_ms = if config.shift_ms_max > 0.0 {
                    rng.gen_range(0.0..=config.shift_ms_max)
                } else {
                    0.0
                };
                let time_scale = rng.gen_range(config.time_scale_min..=config.time_scale_max);
                let fir = sample_fir(&mut rng, config.fir_taps_max, config.fir_wiggle);
                let noise_seed = rng.gen::<u64>();

                let base = VowelSpec {
                    class_name: entry.name.clone(),
                    formants_hz: entry.formants_hz,
                    bandwidths_hz: entry.bandwidths_hz,
                    f0_hz: entry.f0_hz,
                    duration_ms,
                };
                let voiced = transform_vowel_spec(
                    &base,
                    &TransformSpec {
                        pitch_scale,
                        formant_scale,
                        ..TransformSpec::default()
                    },
                );
                let vowel = synth_vowel(&voiced, config.rate)?;
                let warped = apply_transform(
                    &vowel,
                    &TransformSpec {
                        time_scale,
                        time_shift_ms: shift_ms,
                        channel_fir: fir,
                        ..TransformSpec::default()
                    },
                )?;

                let pad = (config.pad_ms * config.rate as f64 / 1000.0).round() as usize;
                let mut samples = vec![0.0; pad];
                samples.extend_from_slice(&warped.samples);
                samples.extend(std::iter::repeat_n(0.0, pad));
                if let Some(snr) = config.snr_db {
                    let power = warped.samples.iter().map(|v| v * v).sum::<f64>()
                        / warped.samples.len() as f64;
                    add_noise(&mut samples, snr, power, noise_seed);
                }

                let utterance_id = format!("{}_{}_{:04}", split.as_str(), entry.name, i);
                let segment = PhoneSegment {
                    utterance_id: utterance_id.clone(),
                    start_sample: pad,
                    end_sample: pad + warped.samples.len(),
                    label: entry.name.clone(),
                    speaker_id: format!("s{:05}", speaker_counter),
                    dialect_id: format!("b{}", config.band_of(formant_scale)),
                };
                speaker_counter += 1;
                items.push(CorpusItem {
                    signal: RawSignal {
                        samples,
                        rate: config.rate,
                    },
                    segment,
                    split,
                });
            }
        }
    }
    Ok(Corpus {
        items,
        generator_seed: config.seed,
        rate: config.rate,
    })
}

/// Write a corpus as `train/`, `test/`, `pool/` directories of WAV +
/// label files plus a `metadata.txt` at the root.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    let mut meta = UtteranceMetadata::default();
    for split in Split::ALL {
        fs::create_dir_all(dir.join(split.as_str()))?;
    }
    for item in &corpus.items {
        let sub = dir.join(item.split.as_str());
        let stem = &item.segment.utterance_id;
        write_wav(&sub.join(format!("{}.wav", stem)), &item.signal)?;
        fs::write(
            sub.join(format!("{}.phn", stem)),
            format!(
                "{} {} {}\n",
                item.segment.start_sample, item.segment.end_sample, item.segment.label
            ),
        )?;
        meta.insert(stem, &item.segment.speaker_id, &item.segment.dialect_id);
    }
    meta.write(&dir.join("metadata.txt"))?;
    Ok(())
}

/// Load one split directory written by [`write_corpus`] (or any directory
/// of WAV files with sibling `.phn` label files).
pub fn load_split_dir(
    dir: &Path,
    meta: &UtteranceMetadata,
) -> Result<Vec<(String, RawSignal, Vec<PhoneSegment>)>, CorpusError> {
    let mut stems: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let path = e.path();
            if path.extension().map(|x| x == "wav").unwrap_or(false) {
                path.file_stem().map(|s| s.to_string_lossy().to_string())
            } else {
                None
            }
        })
        .collect();
    stems.sort();
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let signal = read_wav(&dir.join(format!("{}.wav", stem)))?;
        let segments = parse_label_file(&dir.join(format!("{}.phn", stem)), &stem, meta)?;
        out.push((stem, signal, segments));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{extract_features, FeatureKind, FrontendConfig};
    use crate::rls::{compute_metrics, predict, train_rls, LabeledDataset};
    use crate::segment::aggregate_segment;
    use ndarray::Array2;

    fn small_config() -> CorpusConfig {
        CorpusConfig {
            train_per_class: 5,
            test_per_class: 2,
            pool_per_class: 3,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn split_sizes_match_config() {
        let cfg = CorpusConfig {
            train_per_class: 50,
            test_per_class: 20,
            pool_per_class: 30,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert_eq!(corpus.items.len(), 8 * 100);
        assert_eq!(corpus.split_items(Split::Train).len(), 400);
        assert_eq!(corpus.split_items(Split::Test).len(), 160);
        assert_eq!(corpus.split_items(Split::Pool).len(), 240);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let cfg = small_config();
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.items.len(), b.items.len());
        for (x, y) in a.items.iter().zip(&b.items) {
            assert_eq!(x.signal.samples, y.signal.samples);
            assert_eq!(x.segment, y.segment);
        }
        let cfg2 = CorpusConfig { seed: 43, ..cfg };
        let c = generate_corpus(&cfg2).unwrap();
        assert_ne!(a.items[0].signal.samples, c.items[0].signal.samples);
    }

    #[test]
    fn labels_cover_configured_classes_and_bands() {
        let cfg = small_config();
        let corpus = generate_corpus(&cfg).unwrap();
        for item in &corpus.items {
            assert!(!item.segment.label.is_empty());
            assert!(item.segment.dialect_id.starts_with('b'));
            let band: usize = item.segment.dialect_id[1..].parse().unwrap();
            assert!(band < cfg.nuisance_bands);
            assert!(item.segment.end_sample <= item.signal.len());
            assert!(item.segment.start_sample < item.segment.end_sample);
        }
    }

    #[test]
    fn corpus_roundtrips_through_disk() {
        let cfg = CorpusConfig {
            train_per_class: 1,
            test_per_class: 1,
            pool_per_class: 1,
            classes: vec!["aa".to_string(), "iy".to_string()],
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        let meta = UtteranceMetadata::load(&dir.path().join("metadata.txt")).unwrap();
        let train = load_split_dir(&dir.path().join("train"), &meta).unwrap();
        assert_eq!(train.len(), 2);
        let (stem, signal, segments) = &train[0];
        assert!(stem.starts_with("train_"));
        assert_eq!(segments.len(), 1);
        let original = corpus
            .items
            .iter()
            .find(|i| &i.segment.utterance_id == stem)
            .unwrap();
        assert_eq!(signal.len(), original.signal.len());
        assert_eq!(&segments[0], &original.segment);
    }

    #[test]
    fn unknown_class_is_an_error() {
        let cfg = CorpusConfig {
            classes: vec!["aa".to_string(), "zz".to_string()],
            ..small_config()
        };
        assert!(matches!(
            generate_corpus(&cfg),
            Err(CorpusError::UnknownClass(c)) if c == "zz"
        ));
    }

    #[test]
    fn config_parses_and_rejects_unknown_keys() {
        let kv = KeyValues::parse("train_per_class = 10\nsnr_db = none\n").unwrap();
        let cfg = CorpusConfig::from_key_values(&kv).unwrap();
        kv.reject_unknown().unwrap();
        assert_eq!(cfg.train_per_class, 10);
        assert_eq!(cfg.snr_db, None);
    }

    #[test]
    fn clean_vowels_are_linearly_separable_in_filterbank_space() {
        // zero nuisance: RLS reaches 0 training error on clean data
        let cfg = CorpusConfig {
            train_per_class: 6,
            test_per_class: 1,
            pool_per_class: 1,
            pitch_scale_min: 1.0,
            pitch_scale_max: 1.0,
            formant_scale_min: 1.0,
            formant_scale_max: 1.0,
            shift_ms_max: 0.0,
            time_scale_min: 1.0,
            time_scale_max: 1.0,
            fir_taps_max: 1,
            snr_db: None,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let train = corpus.split_items(Split::Train);
        let fe_cfg = FrontendConfig::default();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut names: Vec<String> = Vec::new();
        for item in &train {
            let fm = extract_features(&item.signal, FeatureKind::Mfb, &fe_cfg).unwrap();
            let sv = aggregate_segment(&fm, &item.segment, 30.0).unwrap();
            let label = &item.segment.label;
            let id = match names.iter().position(|n| n == label) {
                Some(i) => i,
                None => {
                    names.push(label.clone());
                    names.len() - 1
                }
            };
            rows.push(sv.values);
            labels.push(id);
        }
        let p = rows[0].len();
        let features = Array2::from_shape_fn((rows.len(), p), |(r, c)| rows[r][c]);
        let data = LabeledDataset::new(features.clone(), labels.clone(), names).unwrap();
        let model = train_rls(&data, 1e-6).unwrap();
        let preds = predict(&model, &features).unwrap();
        let metrics = compute_metrics(&preds, &labels, data.c()).unwrap();
        assert_eq!(metrics.error_rate, 0.0);
    }
}
