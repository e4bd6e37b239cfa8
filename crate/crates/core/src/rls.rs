//! One-vs-all linear Regularized Least Squares: closed-form training via
//! a shared Cholesky factorization, seeded stratified lambda selection on
//! a 1/6 validation split, and ER/bER metrics.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{cholesky_solve, inf_norm};

#[derive(Debug, Error)]
pub enum RlsError {
    #[error("bad dataset: {0}")]
    BadDataset(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("class `{0}` cannot be stratified into the 5/6-1/6 split")]
    ClassMissingFromSplit(String),
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("feature dimension mismatch: got {got}, model has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("prediction/truth length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file format error: {0}")]
    FormatError(String),
}

/// Features with 0-based class ids into `class_names`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, RlsError> {
        let n = features.nrows();
        let c = class_names.len();
        if labels.len() != n {
            return Err(RlsError::BadDataset(format!(
                "{} rows but {} labels",
                n,
                labels.len()
            )));
        }
        if c < 2 {
            return Err(RlsError::BadDataset("need at least 2 classes".to_string()));
        }
        if n < c {
            return Err(RlsError::BadDataset(format!(
                "need at least as many samples ({}) as classes ({})",
                n, c
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(RlsError::BadDataset(format!("label id {} out of range", bad)));
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn c(&self) -> usize {
        self.class_names.len()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let rows = Array2::from_shape_fn((indices.len(), self.p()), |(r, c)| {
            self.features[[indices[r], c]]
        });
        Self {
            features: rows,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Trained per-class weights with the lambda they were trained at.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsModel {
    pub weights: Array2<f64>,
    pub lambda: f64,
    pub standardizer_id: String,
    pub class_names: Vec<String>,
}

impl RlsModel {
    pub fn p(&self) -> usize {
        self.weights.nrows()
    }

    pub fn c(&self) -> usize {
        self.weights.ncols()
    }
}

/// Classification quality: overall and class-balanced error rates in
/// percent, plus the confusion matrix (rows = truth, columns = predicted).
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub error_rate: f64,
    pub balanced_error_rate: f64,
    pub confusion: Vec<Vec<usize>>,
}

/// Closed-form OVA training: `W = (X^T X + lambda n I)^-1 X^T Y` with
/// +/-1 targets. The normal-equation residual is verified before the
/// model is returned.
pub fn train_rls(data: &LabeledDataset, lambda: f64) -> Result<RlsModel, RlsError> {
    if !(lambda > 0.0) {
        return Err(RlsError::BadDataset(format!("lambda {} must be positive", lambda)));
    }
    let (n, p, c) = (data.n(), data.p(), data.c());
    let x = &data.features;
    let mut y = Array2::from_elem((n, c), -1.0);
    for (i, &l) in data.labels.iter().enumerate() {
        y[[i, l]] = 1.0;
    }
    let mut a = x.t().dot(x);
    let ridge = lambda * n as f64;
    for i in 0..p {
        a[[i, i]] += ridge;
    }
    let b = x.t().dot(&y);
    let w = cholesky_solve(&a, &b).ok_or_else(|| {
        RlsError::NumericalFailure("regularized normal equations are not positive definite".into())
    })?;
    let residual = inf_norm(&(a.dot(&w) - &b));
    let bound = 1e-8 * inf_norm(&b).max(1.0);
    if residual > bound {
        return Err(RlsError::NumericalFailure(format!(
            "normal-equation residual {} exceeds {}",
            residual, bound
        )));
    }
    Ok(RlsModel {
        weights: w,
        lambda,
        standardizer_id: String::new(),
        class_names: data.class_names.clone(),
    })
}

/// Predicted class ids: argmax over per-class scores, ties broken toward
/// the lowest id.
pub fn predict(model: &RlsModel, features: &Array2<f64>) -> Result<Vec<usize>, RlsError> {
    if features.ncols() != model.p() {
        return Err(RlsError::DimensionMismatch {
            got: features.ncols(),
            want: model.p(),
        });
    }
    let scores = features.dot(&model.weights);
    Ok((0..scores.nrows())
        .map(|r| {
            let mut best = 0;
            let mut best_score = scores[[r, 0]];
            for c in 1..scores.ncols() {
                if scores[[r, c]] > best_score {
                    best_score = scores[[r, c]];
                    best = c;
                }
            }
            best
        })
        .collect())
}

/// ER, bER and the confusion matrix. Classes absent from the truth are
/// excluded from the bER average.
pub fn compute_metrics(
    predicted: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<Metrics, RlsError> {
    if predicted.len() != truth.len() {
        return Err(RlsError::LengthMismatch {
            a: predicted.len(),
            b: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(RlsError::BadDataset("cannot score zero predictions".to_string()));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let n = truth.len();
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let error_rate = 100.0 * (n - correct) as f64 / n as f64;
    let mut class_errors = Vec::new();
    for c in 0..n_classes {
        let count: usize = confusion[c].iter().sum();
        if count > 0 {
            class_errors.push(100.0 * (count - confusion[c][c]) as f64 / count as f64);
        }
    }
    let balanced_error_rate = class_errors.iter().sum::<f64>() / class_errors.len() as f64;
    Ok(Metrics {
        error_rate,
        balanced_error_rate,
        confusion,
    })
}

/// Outcome of [`select_lambda`]: the winning lambda, its validation
/// metrics, and the final model retrained on the full training set.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub validation: Metrics,
    pub model: RlsModel,
}

/// Default grid: ten values log-spaced over 1e-6 .. 1e3.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..10).map(|k| 10f64.powi(k - 6)).collect()
}

/// Seeded class-stratified 5/6-1/6 split of row indices. Classes with a
/// single item contribute it to the training side only.
fn stratified_split(
    data: &LabeledDataset,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), RlsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..data.c() {
        let mut indices: Vec<usize> = (0..data.n()).filter(|&i| data.labels[i] == class).collect();
        if indices.is_empty() {
            return Err(RlsError::ClassMissingFromSplit(
                data.class_names[class].clone(),
            ));
        }
        indices.shuffle(&mut rng);
        let take = (((indices.len() as f64) / 6.0).round() as usize).min(indices.len() - 1);
        val.extend_from_slice(&indices[..take]);
        train.extend_from_slice(&indices[take..]);
    }
    if val.is_empty() {
        return Err(RlsError::ClassMissingFromSplit(
            "validation split is empty; training set too small for 1/6 validation".to_string(),
        ));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Pick the lambda minimizing validation bER over the grid (ties toward
/// the larger lambda), then retrain on the full training set.
pub fn select_lambda(
    data: &LabeledDataset,
    grid: &[f64],
    split_seed: u64,
) -> Result<LambdaSelection, RlsError> {
    if grid.is_empty() {
        return Err(RlsError::EmptyGrid);
    }
    let (train_idx, val_idx) = stratified_split(data, split_seed)?;
    let train = data.subset(&train_idx);
    let val = data.subset(&val_idx);
    let mut best: Option<(f64, Metrics)> = None;
    for &lambda in grid {
        let model = train_rls(&train, lambda)?;
        let preds = predict(&model, &val.features)?;
        let metrics = compute_metrics(&preds, &val.labels, data.c())?;
        let better = match &best {
            None => true,
            Some((best_lambda, best_metrics)) => {
                metrics.balanced_error_rate < best_metrics.balanced_error_rate
                    || (metrics.balanced_error_rate == best_metrics.balanced_error_rate
                        && lambda > *best_lambda)
            }
        };
        if better {
            best = Some((lambda, metrics));
        }
    }
    let (lambda, validation) = best.expect("grid is nonempty");
    let model = train_rls(data, lambda)?;
    Ok(LambdaSelection {
        lambda,
        validation,
        model,
    })
}

// --- persistence -----------------------------------------------------------------

/// Write a model as text: `RLSMODEL v1 p=<p> C=<C> lambda=<l> std=<id>`,
/// the class-name line, then `p` rows of `C` weights.
pub fn save_model(model: &RlsModel, path: &Path) -> Result<(), RlsError> {
    for name in &model.class_names {
        if name.contains(char::is_whitespace) {
            return Err(RlsError::FormatError(format!(
                "class name `{}` contains whitespace",
                name
            )));
        }
    }
    let std_id = if model.standardizer_id.is_empty() {
        "-".to_string()
    } else {
        model.standardizer_id.replace(char::is_whitespace, "_")
    };
    let mut out = format!(
        "RLSMODEL v1 p={} C={} lambda={} std={}\n",
        model.p(),
        model.c(),
        model.lambda,
        std_id
    );
    out.push_str(&model.class_names.join(" "));
    out.push('\n');
    for r in 0..model.p() {
        let row: Vec<String> = (0..model.c()).map(|c| format!("{}", model.weights[[r, c]])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Load a model written by [`save_model`].
pub fn load_model(path: &Path) -> Result<RlsModel, RlsError> {
    let text = fs::read_to_string(path)?;
    let err = |msg: String| RlsError::FormatError(msg);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty model file".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 2 || tokens[0] != "RLSMODEL" {
        return Err(err("missing RLSMODEL header".into()));
    }
    if tokens[1] != "v1" {
        return Err(err(format!("unsupported model version `{}`", tokens[1])));
    }
    let mut p = None;
    let mut c = None;
    let mut lambda = None;
    let mut std_id = None;
    for t in &tokens[2..] {
        let (key, value) = t
            .split_once('=')
            .ok_or_else(|| err(format!("bad header token `{}`", t)))?;
        match key {
            "p" => p = value.parse::<usize>().ok(),
            "C" => c = value.parse::<usize>().ok(),
            "lambda" => lambda = value.parse::<f64>().ok(),
            "std" => std_id = Some(value.to_string()),
            _ => return Err(err(format!("unknown header key `{}`", key))),
        }
    }
    let p = p.ok_or_else(|| err("header missing p".into()))?;
    let c = c.ok_or_else(|| err("header missing C".into()))?;
    let lambda = lambda.ok_or_else(|| err("header missing lambda".into()))?;
    let std_id = std_id.ok_or_else(|| err("header missing std".into()))?;
    let names_line = lines.next().ok_or_else(|| err("missing class names".into()))?;
    let class_names: Vec<String> = names_line.split_whitespace().map(|s| s.to_string()).collect();
    if class_names.len() != c {
        return Err(err(format!(
            "expected {} class names, found {}",
            c,
            class_names.len()
        )));
    }
    let mut weights = Array2::zeros((p, c));
    for r in 0..p {
        let line = lines
            .next()
            .ok_or_else(|| err(format!("missing weight row {}", r)))?;
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(|v| v.parse()).collect();
        let vals = vals.map_err(|_| err(format!("bad float in weight row {}", r)))?;
        if vals.len() != c {
            return Err(err(format!("weight row {} has {} values", r, vals.len())));
        }
        for (j, v) in vals.into_iter().enumerate() {
            weights[[r, j]] = v;
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(err("trailing content after weight rows".into()));
    }
    Ok(RlsModel {
        weights,
        lambda,
        standardizer_id: if std_id == "-" { String::new() } else { std_id },
        class_names,
    })
}

/// Metrics as a `metric,value` CSV.
pub fn write_metrics_csv(metrics: &Metrics, path: &Path) -> Result<(), RlsError> {
    let out = format!(
        "metric,value\ner,{}\nber,{}\n",
        metrics.error_rate, metrics.balanced_error_rate
    );
    fs::write(path, out)?;
    Ok(())
}

/// Confusion matrix CSV: header row of predicted class names, one row per
/// truth class.
pub fn write_confusion_csv(
    metrics: &Metrics,
    class_names: &[String],
    path: &Path,
) -> Result<(), RlsError> {
    let mut out = String::from("truth");
    for name in class_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (r, row) in metrics.confusion.iter().enumerate() {
        out.push_str(&class_names[r]);
        for &v in row {
            out.push_str(&format!(",{}", v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_names() -> Vec<String> {
        vec!["a".to_string(), "b".to_string()]
    }

    #[test]
    fn identity_features_hand_example() {
        let data = LabeledDataset::new(Array2::eye(2), vec![0, 1], two_names()).unwrap();
        let model = train_rls(&data, 0.5).unwrap();
        // A = I + 0.5*2*I = 2I, so W = Y / 2
        assert!((model.weights[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((model.weights[[0, 1]] + 0.5).abs() < 1e-12);
        assert!((model.weights[[1, 0]] + 0.5).abs() < 1e-12);
        assert!((model.weights[[1, 1]] - 0.5).abs() < 1e-12);
        // training points perfectly recovered
        let preds = predict(&model, &data.features).unwrap();
        assert_eq!(preds, vec![0, 1]);
    }

    #[test]
    fn huge_lambda_shrinks_weights_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((40, 6), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let data = LabeledDataset::new(x.clone(), labels.clone(), two_names()).unwrap();
        let model = train_rls(&data, 1e9).unwrap();
        let mut y = Array2::from_elem((40, 2), -1.0);
        for (i, &l) in labels.iter().enumerate() {
            y[[i, l]] = 1.0;
        }
        let b_norm = inf_norm(&x.t().dot(&y));
        assert!(inf_norm(&model.weights) <= 1e-6 * b_norm / 40.0);
    }

    // Gauss-Jordan oracle for the full normal equations.
    fn dense_solve_oracle(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let m = b.ncols();
        let mut aug = Array2::zeros((n, n + m));
        for i in 0..n {
            for j in 0..n {
                aug[[i, j]] = a[[i, j]];
            }
            for j in 0..m {
                aug[[i, n + j]] = b[[i, j]];
            }
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| aug[[x, col]].abs().partial_cmp(&aug[[y, col]].abs()).unwrap())
                .unwrap();
            if pivot != col {
                for j in 0..n + m {
                    let t = aug[[col, j]];
                    aug[[col, j]] = aug[[pivot, j]];
                    aug[[pivot, j]] = t;
                }
            }
            let p = aug[[col, col]];
            for j in col..n + m {
                aug[[col, j]] /= p;
            }
            for i in 0..n {
                if i != col {
                    let f = aug[[i, col]];
                    for j in col..n + m {
                        aug[[i, j]] -= f * aug[[col, j]];
                    }
                }
            }
        }
        Array2::from_shape_fn((n, m), |(i, j)| aug[[i, n + j]])
    }

    #[test]
    fn training_matches_dense_solve_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let names: Vec<String> = (0..3).map(|i| format!("c{}", i)).collect();
        let x = Array2::from_shape_fn((50, 10), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let data = LabeledDataset::new(x.clone(), labels.clone(), names).unwrap();
        let lambda = 0.01;
        let model = train_rls(&data, lambda).unwrap();

        let mut y = Array2::from_elem((50, 3), -1.0);
        for (i, &l) in labels.iter().enumerate() {
            y[[i, l]] = 1.0;
        }
        let mut a = x.t().dot(&x);
        for i in 0..10 {
            a[[i, i]] += lambda * 50.0;
        }
        let expect = dense_solve_oracle(&a, &x.t().dot(&y));
        for i in 0..10 {
            for j in 0..3 {
                assert!(
                    (model.weights[[i, j]] - expect[[i, j]]).abs() < 1e-8,
                    "({}, {})",
                    i,
                    j
                );
            }
        }
    }

    // Golden weights computed with sklearn Ridge(alpha=lambda*n,
    // fit_intercept=False) on +/-1 one-vs-all targets over the same
    // deterministic features. The first feature column is identically
    // zero, so this also exercises the ridge term keeping the normal
    // equations invertible.
    #[test]
    fn training_matches_sklearn_ridge_reference() {
        let (n, p, c, lambda) = (24usize, 5usize, 3usize, 0.05);
        let x = Array2::from_shape_fn((n, p), |(i, j)| {
            (0.31 * i as f64 * j as f64 + 0.7 * j as f64).sin()
        });
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let names: Vec<String> = (0..c).map(|i| format!("c{}", i)).collect();
        let data = LabeledDataset::new(x, labels, names).unwrap();
        let model = train_rls(&data, lambda).unwrap();
        let expect = [
            [0.0, 0.0, 0.0],
            [-0.0883396416378, -0.06823809395355122, -0.042904704240186935],
            [0.005659461435672448, -0.034318607827507674, -0.11685666712403131],
            [0.12445849153393115, 0.0025130689043765825, -0.09870013451645614],
            [0.0682408538687418, -0.02934618730114275, 0.02903020296064981],
        ];
        for i in 0..p {
            for j in 0..c {
                assert!(
                    (model.weights[[i, j]] - expect[i][j]).abs() < 1e-10,
                    "({i},{j}): {} vs {}",
                    model.weights[[i, j]],
                    expect[i][j]
                );
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((30, 5), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let data = LabeledDataset::new(x, labels, two_names()).unwrap();
        let a = train_rls(&data, 0.1).unwrap();
        let b = train_rls(&data, 0.1).unwrap();
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn prediction_tie_break_and_scaling_invariance() {
        let model = RlsModel {
            weights: arr2(&[[0.9, 0.1], [0.0, 0.0]]),
            lambda: 1.0,
            standardizer_id: String::new(),
            class_names: two_names(),
        };
        let x = arr2(&[[1.0, 0.0]]);
        assert_eq!(predict(&model, &x).unwrap(), vec![0]);
        // exact tie goes to the lowest id
        let tied = RlsModel {
            weights: arr2(&[[0.5, 0.5], [0.0, 0.0]]),
            ..model.clone()
        };
        assert_eq!(predict(&tied, &x).unwrap(), vec![0]);
        // scaling every column by the same positive factor keeps the argmax
        let scaled = RlsModel {
            weights: model.weights.clone() * 7.5,
            ..model.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = Array2::from_shape_fn((20, 2), |_| rng.gen_range(-2.0..2.0));
        assert_eq!(predict(&model, &xs).unwrap(), predict(&scaled, &xs).unwrap());
        // dimension check
        let bad = arr2(&[[1.0, 0.0, 0.0]]);
        assert!(matches!(
            predict(&model, &bad),
            Err(RlsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn metrics_hand_examples() {
        let m = compute_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap();
        assert_eq!(m.error_rate, 0.0);
        assert_eq!(m.balanced_error_rate, 0.0);

        // 90/10 class sizes, everything predicted as class 0
        let truth: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
        let pred = vec![0usize; 100];
        let m = compute_metrics(&pred, &truth, 2).unwrap();
        assert_eq!(m.error_rate, 10.0);
        assert_eq!(m.balanced_error_rate, 50.0);

        let m = compute_metrics(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.error_rate, 25.0);
        assert_eq!(m.balanced_error_rate, 25.0);

        assert!(matches!(
            compute_metrics(&[0], &[0, 1], 2),
            Err(RlsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth: Vec<usize> = (0..200).map(|_| rng.gen_range(0..4)).collect();
        let pred: Vec<usize> = (0..200).map(|_| rng.gen_range(0..4)).collect();
        let m = compute_metrics(&pred, &truth, 4).unwrap();
        for c in 0..4 {
            let count = truth.iter().filter(|&&t| t == c).count();
            let row_sum: usize = m.confusion[c].iter().sum();
            assert_eq!(row_sum, count);
        }
        let trace: usize = (0..4).map(|c| m.confusion[c][c]).sum();
        assert!((m.error_rate - 100.0 * (1.0 - trace as f64 / 200.0)).abs() < 1e-12);
    }

    fn separable_dataset(rng: &mut ChaCha8Rng, n_per: usize) -> LabeledDataset {
        let n = n_per * 2;
        let x = Array2::from_shape_fn((n, 4), |(r, c)| {
            let center = if r < n_per { 1.0 } else { -1.0 };
            if c == 0 {
                center + rng.gen_range(-0.2..0.2)
            } else {
                rng.gen_range(-0.2..0.2)
            }
        });
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n_per)).collect();
        LabeledDataset::new(x, labels, two_names()).unwrap()
    }

    #[test]
    fn select_lambda_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = separable_dataset(&mut rng, 30);
        // single-value grid returns that value
        let sel = select_lambda(&data, &[0.123], 7).unwrap();
        assert_eq!(sel.lambda, 0.123);
        // separable data reaches zero validation bER somewhere on the grid
        let sel = select_lambda(&data, &default_lambda_grid(), 7).unwrap();
        assert_eq!(sel.validation.balanced_error_rate, 0.0);
        // determinism
        let sel2 = select_lambda(&data, &default_lambda_grid(), 7).unwrap();
        assert_eq!(sel.lambda, sel2.lambda);
        assert_eq!(sel.model.weights, sel2.model.weights);
    }

    #[test]
    fn select_lambda_tie_breaks_toward_larger() {
        // two identical grid entries force an exact tie
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = separable_dataset(&mut rng, 18);
        let sel = select_lambda(&data, &[1e-4, 1e-3], 3).unwrap();
        // both lambdas separate the data perfectly, so the larger wins
        assert_eq!(sel.lambda, 1e-3);
        assert_eq!(sel.validation.balanced_error_rate, 0.0);
    }

    #[test]
    fn select_lambda_requires_populated_classes() {
        let x = Array2::eye(3);
        let data = LabeledDataset::new(
            x,
            vec![0, 0, 0],
            vec!["a".to_string(), "b".to_string(), "c".to_string()],
        )
        .unwrap();
        assert!(matches!(
            select_lambda(&data, &[1.0], 1),
            Err(RlsError::ClassMissingFromSplit(_))
        ));
    }

    #[test]
    fn empty_grid_is_an_error() {
        let data = LabeledDataset::new(Array2::eye(2), vec![0, 1], two_names()).unwrap();
        assert!(matches!(select_lambda(&data, &[], 1), Err(RlsError::EmptyGrid)));
    }

    #[test]
    fn model_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = RlsModel {
            weights: Array2::from_shape_fn((7, 3), |_| rng.gen_range(-2.0..2.0)),
            lambda: 0.0316,
            standardizer_id: "train.csv#40x7".to_string(),
            class_names: vec!["aa".into(), "iy".into(), "uw".into()],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn model_load_rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        std::fs::write(&path, "RLSMODEL v2 p=1 C=2 lambda=1 std=-\na b\n0 0\n").unwrap();
        assert!(load_model(&path).is_err());
        std::fs::write(&path, "RLSMODEL v1 p=2 C=2 lambda=1 std=-\na b\n0 0\n").unwrap();
        assert!(load_model(&path).is_err()); // missing weight row
        std::fs::write(&path, "RLSMODEL v1 p=1 C=2 lambda=1 std=-\na b\n0 0\nextra\n").unwrap();
        assert!(load_model(&path).is_err()); // trailing content
    }
}
