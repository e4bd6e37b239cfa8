//! Invariant signatures: standardize, project inputs onto every stored
//! template via normalized dot products, pool each orbit set's projection
//! values into an N-value distribution estimate, and concatenate the K
//! estimates into one K*N-dimensional vector.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::orbit::OrbitStore;
use crate::segment::SegmentVector;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("need at least 2 vectors to fit a standardizer, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate vector ({0}): centered norm below 1e-12")]
    DegenerateVector(String),
    #[error("empty orbit set `{0}`")]
    EmptyOrbitSet(String),
    #[error("dimension mismatch: {got} vs {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("feature kind mismatch: input is {input}, store holds {store}")]
    KindMismatch { input: String, store: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("signature file format error: {0}")]
    FormatError(String),
}

/// Per-dimension training statistics; `apply` is `(x - mean) / std` with
/// the std floored at 1e-8.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Standardizer {
    /// Fit on the rows of a matrix (population standard deviation).
    pub fn fit(rows: &Array2<f64>) -> Result<Self, SignatureError> {
        let n = rows.nrows();
        if n < 2 {
            return Err(SignatureError::TooFewSamples(n));
        }
        let p = rows.ncols();
        let mut means = vec![0.0; p];
        for r in 0..n {
            for c in 0..p {
                means[c] += rows[[r, c]];
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut vars = vec![0.0; p];
        for r in 0..n {
            for c in 0..p {
                let d = rows[[r, c]] - means[c];
                vars[c] += d * d;
            }
        }
        let stds = vars
            .iter()
            .map(|v| (v / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, SignatureError> {
        if x.len() != self.dim() {
            return Err(SignatureError::DimensionMismatch {
                got: x.len(),
                want: self.dim(),
            });
        }
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn apply_matrix(&self, rows: &Array2<f64>) -> Result<Array2<f64>, SignatureError> {
        if rows.ncols() != self.dim() {
            return Err(SignatureError::DimensionMismatch {
                got: rows.ncols(),
                want: self.dim(),
            });
        }
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[c]) / self.stds[c];
            }
        }
        Ok(out)
    }
}

/// Fit a standardizer on segment vectors.
pub fn fit_standardizer(train: &[SegmentVector]) -> Result<Standardizer, SignatureError> {
    if train.len() < 2 {
        return Err(SignatureError::TooFewSamples(train.len()));
    }
    let dim = train[0].dim();
    for sv in train {
        if sv.dim() != dim {
            return Err(SignatureError::DimensionMismatch {
                got: sv.dim(),
                want: dim,
            });
        }
    }
    let rows = Array2::from_shape_fn((train.len(), dim), |(r, c)| train[r].values[c]);
    Standardizer::fit(&rows)
}

/// Pooling statistics usable in [`PoolingSpec::Moments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    Mean,
    Energy,
    Max,
}

impl Moment {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Energy => "energy",
            Self::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(Self::Mean),
            "energy" => Some(Self::Energy),
            "max" => Some(Self::Max),
            _ => None,
        }
    }
}

/// How one orbit set's projection values are summarized.
#[derive(Debug, Clone, PartialEq)]
pub enum PoolingSpec {
    /// `n_bins` equal-width bins on [-1, 1], normalized masses, last bin
    /// right-closed.
    Histogram { n_bins: usize },
    Moments(Vec<Moment>),
}

impl PoolingSpec {
    pub fn default_histogram() -> Self {
        Self::Histogram { n_bins: 20 }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            Self::Histogram { n_bins } => *n_bins,
            Self::Moments(list) => list.len(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Histogram { n_bins } => format!("histogram:{}", n_bins),
            Self::Moments(list) => {
                let names: Vec<&str> = list.iter().map(|m| m.as_str()).collect();
                format!("moments:{}", names.join("+"))
            }
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if let Some(rest) = s.strip_prefix("histogram:") {
            let n: usize = rest.parse().ok()?;
            if n == 0 {
                return None;
            }
            return Some(Self::Histogram { n_bins: n });
        }
        if let Some(rest) = s.strip_prefix("moments:") {
            let list: Option<Vec<Moment>> = rest.split('+').map(Moment::parse).collect();
            let list = list?;
            if list.is_empty() {
                return None;
            }
            return Some(Self::Moments(list));
        }
        None
    }
}

/// An invariant representation: K pooled blocks of `n_outputs` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub values: Vec<f64>,
    pub store_id: String,
    pub pooling: PoolingSpec,
}

impl Signature {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn centered_unit(x: &[f64], what: &str) -> Result<Vec<f64>, SignatureError> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut v: Vec<f64> = x.iter().map(|a| a - mean).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(SignatureError::DegenerateVector(what.to_string()));
    }
    for a in &mut v {
        *a /= norm;
    }
    Ok(v)
}

fn clamp_projection(raw: f64) -> f64 {
    // unit vectors keep |<x,t>| within rounding error of 1
    assert!(
        raw.abs() <= 1.0 + 1e-12,
        "projection {} outside the cosine range",
        raw
    );
    raw.clamp(-1.0, 1.0)
}

/// Normalized dot product of two (already standardized) vectors after
/// mean-centering each: the cosine of the centered vectors, in [-1, 1].
pub fn project(x: &[f64], t: &[f64]) -> Result<f64, SignatureError> {
    if x.len() != t.len() {
        return Err(SignatureError::DimensionMismatch {
            got: x.len(),
            want: t.len(),
        });
    }
    let xc = centered_unit(x, "input")?;
    let tc = centered_unit(t, "template")?;
    let raw: f64 = xc.iter().zip(&tc).map(|(a, b)| a * b).sum();
    Ok(clamp_projection(raw))
}

/// Pool a set of projection values into `n_outputs` summary values.
pub fn pool(projections: &[f64], spec: &PoolingSpec) -> Result<Vec<f64>, SignatureError> {
    if projections.is_empty() {
        return Err(SignatureError::EmptyOrbitSet("<anonymous>".to_string()));
    }
    match spec {
        PoolingSpec::Histogram { n_bins } => {
            let n = *n_bins;
            assert!(n >= 1, "histogram needs at least one bin");
            let mut counts = vec![0usize; n];
            for &v in projections {
                let v = v.clamp(-1.0, 1.0);
                let idx = (((v + 1.0) / 2.0) * n as f64) as usize;
                counts[idx.min(n - 1)] += 1;
            }
            let total = projections.len() as f64;
            Ok(counts.iter().map(|&c| c as f64 / total).collect())
        }
        PoolingSpec::Moments(list) => {
            let n = projections.len() as f64;
            Ok(list
                .iter()
                .map(|m| match m {
                    Moment::Mean => projections.iter().sum::<f64>() / n,
                    Moment::Energy => projections.iter().map(|v| v * v).sum::<f64>() / n,
                    Moment::Max => projections.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                })
                .collect())
        }
    }
}

/// Precomputed projection machinery for one store: standardized,
/// mean-centered, unit-normalized templates grouped by orbit set.
pub struct SignatureEngine {
    templates: Vec<Vec<f64>>,
    sets: Vec<(String, Vec<usize>)>,
    standardizer: Standardizer,
    pooling: PoolingSpec,
    store_id: String,
    kind: crate::frontend::FeatureKind,
}

impl SignatureEngine {
    pub fn new(
        store: &OrbitStore,
        standardizer: &Standardizer,
        pooling: &PoolingSpec,
    ) -> Result<Self, SignatureError> {
        if store.pool.dim() != standardizer.dim() {
            return Err(SignatureError::DimensionMismatch {
                got: store.pool.dim(),
                want: standardizer.dim(),
            });
        }
        let mut templates = Vec::with_capacity(store.pool.len());
        for (i, sv) in store.pool.vectors.iter().enumerate() {
            let standardized = standardizer.apply(&sv.values)?;
            templates.push(centered_unit(&standardized, &format!("template {}", i))?);
        }
        let sets = store
            .sets
            .iter()
            .map(|s| {
                if s.members.is_empty() {
                    Err(SignatureError::EmptyOrbitSet(s.key.clone()))
                } else {
                    Ok((s.key.clone(), s.members.clone()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            templates,
            sets,
            standardizer: standardizer.clone(),
            pooling: pooling.clone(),
            store_id: store.id(),
            kind: store.pool.kind(),
        })
    }

    pub fn k(&self) -> usize {
        self.sets.len()
    }

    pub fn output_dim(&self) -> usize {
        self.k() * self.pooling.n_outputs()
    }

    pub fn store_id(&self) -> &str {
        &self.store_id
    }

    pub fn pooling(&self) -> &PoolingSpec {
        &self.pooling
    }

    /// Signature of one segment vector.
    pub fn signature(&self, x: &SegmentVector) -> Result<Signature, SignatureError> {
        if x.kind != self.kind {
            return Err(SignatureError::KindMismatch {
                input: x.kind.to_string(),
                store: self.kind.to_string(),
            });
        }
        self.signature_of_values(&x.values, &x.segment.utterance_id)
    }

    fn signature_of_values(&self, values: &[f64], what: &str) -> Result<Signature, SignatureError> {
        let standardized = self.standardizer.apply(values)?;
        let xc = centered_unit(&standardized, what)?;
        let mut out = Vec::with_capacity(self.output_dim());
        for (key, members) in &self.sets {
            let projections: Vec<f64> = members
                .iter()
                .map(|&m| {
                    let raw: f64 = xc.iter().zip(&self.templates[m]).map(|(a, b)| a * b).sum();
                    clamp_projection(raw)
                })
                .collect();
            let pooled = pool(&projections, &self.pooling)
                .map_err(|_| SignatureError::EmptyOrbitSet(key.clone()))?;
            out.extend_from_slice(&pooled);
        }
        Ok(Signature {
            values: out,
            store_id: self.store_id.clone(),
            pooling: self.pooling.clone(),
        })
    }

    /// Signatures for a batch, row `i` equal to `signature(&xs[i])`.
    /// Rows are computed in parallel; each row follows the exact
    /// single-vector code path, so the two agree bit-for-bit.
    pub fn batch(&self, xs: &[SegmentVector]) -> Result<Array2<f64>, SignatureError> {
        let rows: Result<Vec<Signature>, SignatureError> =
            xs.par_iter().map(|x| self.signature(x)).collect();
        let rows = rows?;
        let dim = self.output_dim();
        let mut out = Array2::zeros((xs.len(), dim));
        for (r, sig) in rows.iter().enumerate() {
            for (c, &v) in sig.values.iter().enumerate() {
                out[[r, c]] = v;
            }
        }
        Ok(out)
    }
}

/// One-shot signature computation matching [`SignatureEngine::signature`].
pub fn signature(
    x: &SegmentVector,
    store: &OrbitStore,
    standardizer: &Standardizer,
    spec: &PoolingSpec,
) -> Result<Signature, SignatureError> {
    SignatureEngine::new(store, standardizer, spec)?.signature(x)
}

/// One-shot batch path matching [`SignatureEngine::batch`].
pub fn signature_batch(
    xs: &[SegmentVector],
    store: &OrbitStore,
    standardizer: &Standardizer,
    spec: &PoolingSpec,
) -> Result<Array2<f64>, SignatureError> {
    SignatureEngine::new(store, standardizer, spec)?.batch(xs)
}

// --- signature CSV ---------------------------------------------------------------

/// Row metadata stored with each signature: enough to train and score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureRowMeta {
    pub utterance_id: String,
    pub start_sample: usize,
    pub end_sample: usize,
    pub label: String,
}

/// Write signatures as CSV with a comment header recording the store id,
/// K, N and estimator: `utterance,start,end,label,s0,...`.
pub fn write_signature_csv(
    path: &Path,
    metas: &[SignatureRowMeta],
    values: &Array2<f64>,
    store_id: &str,
    k: usize,
    pooling: &PoolingSpec,
) -> Result<(), SignatureError> {
    assert_eq!(metas.len(), values.nrows());
    let mut out = String::new();
    out.push_str(&format!(
        "# store={} K={} N={} estimator={}\n",
        store_id,
        k,
        pooling.n_outputs(),
        pooling.describe()
    ));
    out.push_str("utterance,start,end,label");
    for c in 0..values.ncols() {
        out.push_str(&format!(",s{}", c));
    }
    out.push('\n');
    for (r, meta) in metas.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}",
            meta.utterance_id, meta.start_sample, meta.end_sample, meta.label
        ));
        for c in 0..values.ncols() {
            out.push_str(&format!(",{}", values[[r, c]]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a signature CSV written by [`write_signature_csv`].
pub fn read_signature_csv(
    path: &Path,
) -> Result<(Vec<SignatureRowMeta>, Array2<f64>), SignatureError> {
    let text = fs::read_to_string(path)?;
    let err = |msg: String| SignatureError::FormatError(msg);
    let mut metas = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("utterance,") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 {
            return Err(err(format!("line {}: too few fields", i + 1)));
        }
        let start: usize = fields[1]
            .parse()
            .map_err(|_| err(format!("line {}: bad start", i + 1)))?;
        let end: usize = fields[2]
            .parse()
            .map_err(|_| err(format!("line {}: bad end", i + 1)))?;
        let mut values = Vec::with_capacity(fields.len() - 4);
        for f in &fields[4..] {
            let v: f64 = f
                .parse()
                .map_err(|_| err(format!("line {}: bad float", i + 1)))?;
            if !v.is_finite() {
                return Err(err(format!("line {}: non-finite value", i + 1)));
            }
            values.push(v);
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(err(format!("line {}: ragged row", i + 1)));
            }
            _ => {}
        }
        metas.push(SignatureRowMeta {
            utterance_id: fields[0].to_string(),
            start_sample: start,
            end_sample: end,
            label: fields[3].to_string(),
        });
        rows.push(values);
    }
    let dim = dim.ok_or_else(|| err("no rows".to_string()))?;
    let mut out = Array2::zeros((rows.len(), dim));
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[[r, c]] = v;
        }
    }
    Ok((metas, out))
}
