//! Evaluation metrics: feature-space collapse and separability, calibration,
//! top-1 accuracy (overall and by class-frequency group) and a regularized
//! linear probe.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::argmax;

/// Penultimate-layer features, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Array2<f64>,
    pub labels: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(rows: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if rows.nrows() != labels.len() {
            return Err(Error::Shape {
                expected: rows.nrows(),
                actual: labels.len(),
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "feature matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureQuality {
    pub d_within: f64,
    pub d_total: f64,
    pub r_squared: f64,
}

/// Unit-normalized rows; all-zero rows stay zero.
fn normalize_rows(rows: &Array2<f64>) -> Array2<f64> {
    let mut out = rows.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Mean cosine distance over all unordered pairs of `rows`, via
/// `Σ_{i<j} u_i·u_j = (‖Σ u_i‖² − Σ ‖u_i‖²) / 2`.
fn mean_pairwise_distance<'a>(
    rows: impl Iterator<Item = ndarray::ArrayView1<'a, f64>>,
    dim: usize,
) -> (f64, usize) {
    let mut sum = Array1::<f64>::zeros(dim);
    let mut sq_norms = 0.0;
    let mut n = 0usize;
    for row in rows {
        sum += &row;
        sq_norms += row.dot(&row);
        n += 1;
    }
    if n < 2 {
        return (0.0, n);
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let dot_sum = 0.5 * (sum.dot(&sum) - sq_norms);
    ((1.0 - dot_sum / pairs).max(0.0), n)
}

/// Within-class and overall mean cosine distance of L2-normalized features,
/// and `R² = 1 − d_within / d_total`.
pub fn feature_quality(f: &FeatureMatrix) -> Result<FeatureQuality> {
    if f.len() < 2 {
        return Err(Error::Degenerate("need at least 2 feature rows".into()));
    }
    let unit = normalize_rows(&f.rows);
    let (d_total, _) = mean_pairwise_distance(unit.rows().into_iter(), f.dim());
    if d_total <= 1e-12 {
        return Err(Error::Degenerate(
            "all feature rows point the same way".into(),
        ));
    }
    let mut per_class = Vec::new();
    for class in 0..f.num_classes() {
        let members = unit
            .rows()
            .into_iter()
            .zip(&f.labels)
            .filter(|(_, &l)| l == class)
            .map(|(r, _)| r);
        let (d, n) = mean_pairwise_distance(members, f.dim());
        if n >= 2 {
            per_class.push(d);
        }
    }
    if per_class.is_empty() {
        return Err(Error::Degenerate("no class has 2 or more samples".into()));
    }
    let d_within = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(FeatureQuality {
        d_within,
        d_total,
        r_squared: 1.0 - d_within / d_total,
    })
}

pub const ECE_BINS: usize = 15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub nll: f64,
    pub bins: Vec<CalibrationBin>,
}

/// 15-bin expected calibration error on top-1 confidence, and mean negative
/// log-likelihood of the true class. Empty bins report zero confidence and
/// accuracy.
pub fn calibration(probs: ArrayView2<'_, f64>, labels: &[usize]) -> Result<CalibrationReport> {
    if probs.nrows() != labels.len() {
        return Err(Error::Shape {
            expected: probs.nrows(),
            actual: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Usage("calibration needs at least one sample".into()));
    }
    let mut bins = vec![CalibrationBin::default(); ECE_BINS];
    let mut nll = 0.0;
    for (row, &label) in probs.rows().into_iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::Domain(format!("label {label} out of range")));
        }
        let row = row.to_vec();
        let top = argmax(&row);
        let conf = row[top];
        let bin = ((conf * ECE_BINS as f64) as usize).min(ECE_BINS - 1);
        bins[bin].confidence += conf;
        bins[bin].accuracy += f64::from(u8::from(top == label));
        bins[bin].count += 1;
        nll -= row[label].max(f64::MIN_POSITIVE).ln();
    }
    let n = labels.len() as f64;
    let mut ece = 0.0;
    for b in bins.iter_mut().filter(|b| b.count > 0) {
        b.confidence /= b.count as f64;
        b.accuracy /= b.count as f64;
        ece += b.count as f64 / n * (b.accuracy - b.confidence).abs();
    }
    Ok(CalibrationReport {
        ece,
        nll: nll / n,
        bins,
    })
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// Top-1 accuracy with the lowest-index tie break.
pub fn accuracy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| argmax(&row.to_vec()) == l)
        .count();
    correct as f64 / labels.len() as f64
}

/// Class-frequency cut points: `many` if the training count exceeds
/// `many_above`, `low` if it is below `low_below`, `medium` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub many_above: usize,
    pub low_below: usize,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        Self {
            many_above: 100,
            low_below: 20,
        }
    }
}

/// Per-group accuracy; `None` when no evaluated sample falls in the group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub overall: f64,
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub low: Option<f64>,
}

pub fn group_accuracy(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    class_counts: &[usize],
    thresholds: GroupThresholds,
) -> Result<GroupAccuracy> {
    let mut hits = [0usize; 3];
    let mut totals = [0usize; 3];
    for (row, &label) in logits.rows().into_iter().zip(labels) {
        let count = *class_counts
            .get(label)
            .ok_or_else(|| Error::Domain(format!("no training count for class {label}")))?;
        let group = if count > thresholds.many_above {
            0
        } else if count < thresholds.low_below {
            2
        } else {
            1
        };
        totals[group] += 1;
        if argmax(&row.to_vec()) == label {
            hits[group] += 1;
        }
    }
    let ratio = |g: usize| (totals[g] > 0).then(|| hits[g] as f64 / totals[g] as f64);
    Ok(GroupAccuracy {
        overall: accuracy(logits, labels),
        many: ratio(0),
        medium: ratio(1),
        low: ratio(2),
    })
}

/// `n` log-spaced values from `min` to `max`, endpoints exact.
pub fn log_grid(n: usize, min: f64, max: f64) -> Result<Vec<f64>> {
    if n == 0 || !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(Error::Domain(format!(
            "bad grid: {n} values in [{min}, {max}]"
        )));
    }
    if n == 1 {
        return Ok(vec![min]);
    }
    let (lo, hi) = (min.log10(), max.log10());
    let step = (hi - lo) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| 10f64.powf(lo + step * i as f64)).collect();
    grid[0] = min;
    grid[n - 1] = max;
    Ok(grid)
}

/// 45 values from `1e-6` to `1e5`.
pub fn default_l2_grid() -> Vec<f64> {
    log_grid(45, 1e-6, 1e5).expect("static grid is valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub iterations: usize,
    pub lr: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            lr: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub l2: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub best_l2: f64,
    pub best_accuracy: f64,
    pub accuracy_per_l2: Vec<ProbePoint>,
}

/// Multinomial logistic regression weights and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxRegression {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl SoftmaxRegression {
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1] / n` by power iteration. Half of it
/// bounds the curvature of mean softmax cross-entropy in `(W, b)`.
fn design_spectral_norm(x: ArrayView2<'_, f64>) -> f64 {
    let n = x.nrows() as f64;
    let d = x.ncols();
    let mut v = Array1::<f64>::from_elem(d + 1, 1.0 / ((d + 1) as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        // u = [X 1] v, then w = [X 1]ᵀ u / n
        let u = x.dot(&v.slice(ndarray::s![..d])) + v[d];
        let mut w = Array1::<f64>::zeros(d + 1);
        w.slice_mut(ndarray::s![..d]).assign(&(x.t().dot(&u) / n));
        w[d] = u.sum() / n;
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w / norm;
    }
    lambda
}

/// Proximal gradient descent from zero on mean softmax cross-entropy plus
/// `(l2/2)‖W‖²`: a cross-entropy gradient step followed by the exact ridge
/// shrinkage `W / (1 + lr·l2)`. The step is `opts.lr`, capped at the inverse
/// curvature bound so it cannot diverge on correlated features. The bias is
/// not penalized.
pub fn fit_softmax_regression(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    l2: f64,
    opts: &ProbeOptions,
) -> SoftmaxRegression {
    let n = x.nrows() as f64;
    let curvature = 0.5 * design_spectral_norm(x);
    let lr = if curvature > 0.0 {
        opts.lr.min(1.0 / curvature)
    } else {
        opts.lr
    };
    let shrink = 1.0 / (1.0 + lr * l2);
    let mut model = SoftmaxRegression {
        weight: Array2::zeros((num_classes, x.ncols())),
        bias: Array1::zeros(num_classes),
    };
    for _ in 0..opts.iterations {
        let mut residual = softmax_rows(model.logits(x).view());
        for (mut row, &l) in residual.rows_mut().into_iter().zip(labels) {
            row[l] -= 1.0;
        }
        residual.mapv_inplace(|v| v / n);
        let grad_w = residual.t().dot(&x);
        let grad_b = residual.sum_axis(Axis(0));
        model.weight.scaled_add(-lr, &grad_w);
        model.weight.mapv_inplace(|w| w * shrink);
        model.bias.scaled_add(-lr, &grad_b);
    }
    model
}

/// Column means and standard deviations of `x`; zero deviations become 1.
fn standardizer(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x
        .var_axis(Axis(0), 0.0)
        .mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    (mean, std)
}

/// Fits one probe per `l2` value on standardized `train` features and reports
/// validation accuracy for each. Ties for the best go to the smaller `l2`.
pub fn linear_probe(
    train: &FeatureMatrix,
    val: &FeatureMatrix,
    l2_grid: &[f64],
    opts: &ProbeOptions,
) -> Result<ProbeResult> {
    if train.dim() != val.dim() {
        return Err(Error::Shape {
            expected: train.dim(),
            actual: val.dim(),
        });
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::Domain("probe splits must be non-empty".into()));
    }
    let mut present = vec![false; train.num_classes()];
    for &l in &train.labels {
        present[l] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Domain(
            "probe training split has a single class".into(),
        ));
    }
    if let Some(&l) = val
        .labels
        .iter()
        .find(|&&l| !present.get(l).copied().unwrap_or(false))
    {
        return Err(Error::Domain(format!(
            "validation class {l} does not occur in the training split"
        )));
    }
    if l2_grid.is_empty() || l2_grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Domain(
            "l2 grid must be non-empty and non-negative".into(),
        ));
    }

    let (mean, std) = standardizer(&train.rows);
    let xt = (&train.rows - &mean) / &std;
    let xv = (&val.rows - &mean) / &std;
    let k = present.len();

    let accuracy_per_l2: Vec<ProbePoint> = l2_grid
        .iter()
        .map(|&l2| {
            let model = fit_softmax_regression(xt.view(), &train.labels, k, l2, opts);
            ProbePoint {
                l2,
                accuracy: accuracy(model.logits(xv.view()).view(), &val.labels),
            }
        })
        .collect();
    let best = accuracy_per_l2.iter().fold(accuracy_per_l2[0], |best, p| {
        if p.accuracy > best.accuracy {
            *p
        } else {
            best
        }
    });
    Ok(ProbeResult {
        best_l2: best.l2,
        best_accuracy: best.accuracy,
        accuracy_per_l2,
    })
}
