//! Cross-entropy, label smoothing, max suppression and related logit
//! regularizers, each with a closed-form gradient with respect to the logits.
//!
//! Every function here operates on a single sample. Batching, reduction and
//! backpropagation into network parameters live in [`crate::model`].
//!
//! The label-smoothing loss decomposes exactly as
//!
//! ```text
//! H(s, q) = H(y, q) + α (z_gt − mean(z))
//!         = H(y, q) + α/K Σ_{z_m < z_gt} (z_gt − z_m)     (regularization)
//!                   + α/K Σ_{z_n > z_gt} (z_gt − z_n)     (error amplification)
//! ```
//!
//! and max suppression replaces `z_gt` with `max(z)` in the first line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw class scores for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "logit {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest logit, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// `log Σ exp(z_k)`, shifted by the maximum.
    pub fn logsumexp(&self) -> f64 {
        let c = self.max();
        c + self.0.iter().map(|z| (z - c).exp()).sum::<f64>().ln()
    }

    /// Number of logits strictly below and strictly above `z[gt]`.
    pub fn partition_counts(&self, gt: usize) -> (usize, usize) {
        let pivot = self.0[gt];
        let below = self.0.iter().filter(|&&z| z < pivot).count();
        let above = self.0.iter().filter(|&&z| z > pivot).count();
        (below, above)
    }

    /// Adds `c` to every entry.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|z| z + c).collect())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A strictly positive probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput("need at least 2 classes".into()));
        }
        if values.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidInput(
                "probabilities must lie in (0, 1]".into(),
            ));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

/// Ground-truth class index. Validated against `K` wherever it is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HardLabel(pub usize);

impl HardLabel {
    fn check(self, k: usize) -> Result<usize> {
        if self.0 >= k {
            return Err(Error::Domain(format!(
                "label {} out of range for {k} classes",
                self.0
            )));
        }
        Ok(self.0)
    }
}

/// A soft target distribution built from one or two hard labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedLabel {
    values: Vec<f64>,
    alpha: f64,
}

impl SmoothedLabel {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `(1 − α)(λ·e_gt1 + (1 − λ)·e_gt2) + α/K`.
    pub fn mixed(mix: &MixTarget, alpha: f64, k: usize) -> Result<Self> {
        check_alpha(alpha)?;
        let (gt1, gt2) = mix.check(k)?;
        let mut values = vec![alpha / k as f64; k];
        values[gt1] += (1.0 - alpha) * mix.lambda;
        values[gt2] += (1.0 - alpha) * (1.0 - mix.lambda);
        Ok(Self { values, alpha })
    }
}

/// A mixup target: `λ` of `gt1` and `1 − λ` of `gt2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixTarget {
    pub gt1: usize,
    pub gt2: usize,
    pub lambda: f64,
}

impl MixTarget {
    fn check(&self, k: usize) -> Result<(usize, usize)> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Domain(format!(
                "mix weight {} outside [0, 1]",
                self.lambda
            )));
        }
        Ok((HardLabel(self.gt1).check(k)?, HardLabel(self.gt2).check(k)?))
    }
}

/// Which regularizer is added to the hard-label cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    None,
    Ls,
    Maxsup,
    RegOnly,
    ErrOnlyMean,
    ErrMax,
    LogitPenalty,
    ConfidencePenalty,
    LsMixup,
}

impl RegKind {
    pub const ALL: [RegKind; 9] = [
        RegKind::None,
        RegKind::Ls,
        RegKind::Maxsup,
        RegKind::RegOnly,
        RegKind::ErrOnlyMean,
        RegKind::ErrMax,
        RegKind::LogitPenalty,
        RegKind::ConfidencePenalty,
        RegKind::LsMixup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegKind::None => "none",
            RegKind::Ls => "ls",
            RegKind::Maxsup => "maxsup",
            RegKind::RegOnly => "reg_only",
            RegKind::ErrOnlyMean => "err_only_mean",
            RegKind::ErrMax => "err_max",
            RegKind::LogitPenalty => "logit_penalty",
            RegKind::ConfidencePenalty => "confidence_penalty",
            RegKind::LsMixup => "ls_mixup",
        }
    }

    /// Whether the regularizer is weighted by `alpha` (otherwise by `beta`).
    pub fn uses_alpha(self) -> bool {
        !matches!(
            self,
            RegKind::None | RegKind::LogitPenalty | RegKind::ConfidencePenalty
        )
    }
}

impl fmt::Display for RegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown regularizer kind `{s}`")))
    }
}

/// The three partial label-smoothing formulations used for ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    /// `α/M Σ_{z_m < z_gt} (z_gt − z_m)`
    RegOnly,
    /// `α/N Σ_{z_n > z_gt} (z_gt − z_n)`
    ErrOnlyMean,
    /// `α (z_gt − max z)`
    ErrMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub kind: RegKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    0.1
}

impl RegularizerSpec {
    pub fn none() -> Self {
        Self {
            kind: RegKind::None,
            alpha: 0.0,
            beta: default_beta(),
        }
    }

    pub fn with_alpha(kind: RegKind, alpha: f64) -> Self {
        Self {
            kind,
            alpha,
            beta: default_beta(),
        }
    }

    pub fn with_beta(kind: RegKind, beta: f64) -> Self {
        Self {
            kind,
            alpha: 0.0,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Domain(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Hard cross-entropy plus the value (and, for label smoothing, the
/// decomposition) of the regularizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce_hard: f64,
    pub reg_term: f64,
    pub err_term: f64,
    pub regularizer_total: f64,
    pub total: f64,
    /// Logits strictly below `z_gt`.
    pub m_count: usize,
    /// Logits strictly above `z_gt`.
    pub n_count: usize,
}

/// `∂L/∂z` for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

pub fn softmax(z: &LogitVector) -> ProbVector {
    let c = z.max();
    let exps: Vec<f64> = z.0.iter().map(|v| (v - c).exp()).collect();
    let total: f64 = exps.iter().sum();
    ProbVector(exps.into_iter().map(|e| e / total).collect())
}

/// `(1 − α)·e_gt + α/K`.
pub fn smooth_label(gt: HardLabel, alpha: f64, k: usize) -> Result<SmoothedLabel> {
    check_alpha(alpha)?;
    let gt = gt.check(k)?;
    let mut values = vec![alpha / k as f64; k];
    values[gt] += 1.0 - alpha;
    Ok(SmoothedLabel { values, alpha })
}

/// `−z_gt + logsumexp(z)`.
pub fn ce_hard(z: &LogitVector, gt: HardLabel) -> Result<f64> {
    let gt = gt.check(z.num_classes())?;
    Ok(z.logsumexp() - z.0[gt])
}

/// `−Σ s_k log softmax(z)_k`.
pub fn ce_soft(z: &LogitVector, s: &SmoothedLabel) -> Result<f64> {
    if s.values.len() != z.num_classes() {
        return Err(Error::Shape {
            expected: z.num_classes(),
            actual: s.values.len(),
        });
    }
    let lse = z.logsumexp();
    Ok(-z
        .0
        .iter()
        .zip(&s.values)
        .map(|(zk, sk)| sk * (zk - lse))
        .sum::<f64>())
}

// Shared by label smoothing and max suppression so the two agree bit-for-bit
// whenever the pivot logits coincide.
fn centered_gap(z: &LogitVector, pivot: f64, alpha: f64) -> f64 {
    alpha * (pivot - z.mean())
}

/// `α (z_gt − mean(z))`.
pub fn ls_loss(z: &LogitVector, gt: HardLabel, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let gt = gt.check(z.num_classes())?;
    Ok(centered_gap(z, z.0[gt], alpha))
}

/// Splits the label-smoothing loss into its regularization part (logits
/// below `z_gt`) and error-amplification part (logits above `z_gt`). Logits
/// equal to `z_gt` fall in neither set.
pub fn ls_decompose(z: &LogitVector, gt: HardLabel, alpha: f64) -> Result<LossBreakdown> {
    let ce = ce_hard(z, gt)?;
    let ls = ls_loss(z, gt, alpha)?;
    let pivot = z.0[gt.0];
    let scale = alpha / z.num_classes() as f64;
    let (mut below, mut above) = (0.0, 0.0);
    for &zk in &z.0 {
        if zk < pivot {
            below += pivot - zk;
        } else if zk > pivot {
            above += pivot - zk;
        }
    }
    let (m_count, n_count) = z.partition_counts(gt.0);
    Ok(LossBreakdown {
        ce_hard: ce,
        reg_term: scale * below,
        err_term: scale * above,
        regularizer_total: ls,
        total: ce + ls,
        m_count,
        n_count,
    })
}

/// `α (max(z) − mean(z))`.
pub fn maxsup_loss(z: &LogitVector, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(centered_gap(z, z.max(), alpha))
}

/// One-hot target at the top-1 prediction.
pub fn maxsup_label(q: &ProbVector) -> Vec<f64> {
    let mut y = vec![0.0; q.num_classes()];
    y[q.argmax()] = 1.0;
    y
}

/// The partial formulations of label smoothing. A normalized sum over an
/// empty index set is zero.
pub fn ablation_loss(
    z: &LogitVector,
    gt: HardLabel,
    alpha: f64,
    kind: AblationKind,
) -> Result<f64> {
    check_alpha(alpha)?;
    let gt = gt.check(z.num_classes())?;
    let pivot = z.0[gt];
    let mean_gap = |keep: &dyn Fn(f64) -> bool| {
        let (sum, count) =
            z.0.iter()
                .filter(|&&zk| keep(zk))
                .fold((0.0, 0usize), |(s, c), &zk| (s + (pivot - zk), c + 1));
        if count == 0 {
            0.0
        } else {
            alpha / count as f64 * sum
        }
    };
    Ok(match kind {
        AblationKind::RegOnly => mean_gap(&|zk| zk < pivot),
        AblationKind::ErrOnlyMean => mean_gap(&|zk| zk > pivot),
        AblationKind::ErrMax => alpha * (pivot - z.max()),
    })
}

/// Logit penalty `(β/2)‖z‖²` or confidence penalty `−β H(q)`.
pub fn penalty_loss(z: &LogitVector, q: &ProbVector, spec: &RegularizerSpec) -> Result<f64> {
    match spec.kind {
        RegKind::LogitPenalty => Ok(0.5 * spec.beta * z.0.iter().map(|v| v * v).sum::<f64>()),
        RegKind::ConfidencePenalty => Ok(-spec.beta * q.entropy()),
        other => Err(Error::Usage(format!(
            "`{other}` is not a penalty regularizer"
        ))),
    }
}

/// `α (λ z_gt1 + (1 − λ) z_gt2 − mean(z))`.
pub fn mix_ls_loss(z: &LogitVector, mix: &MixTarget, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let (gt1, gt2) = mix.check(z.num_classes())?;
    let pivot = mix.lambda * z.0[gt1] + (1.0 - mix.lambda) * z.0[gt2];
    Ok(centered_gap(z, pivot, alpha))
}

fn check_mix(spec: &RegularizerSpec, mix: Option<&MixTarget>) -> Result<()> {
    match (spec.kind, mix) {
        (RegKind::LsMixup, None) => Err(Error::Usage("ls_mixup requires a mix target".into())),
        (RegKind::LsMixup, Some(_)) | (_, None) => Ok(()),
        (kind, Some(_)) => Err(Error::Usage(format!(
            "mix target given for non-mixup regularizer `{kind}`"
        ))),
    }
}

/// Hard cross-entropy (λ-mixed under mixup) plus the regularizer in `spec`.
pub fn total_loss(
    z: &LogitVector,
    gt: HardLabel,
    spec: &RegularizerSpec,
    mix: Option<&MixTarget>,
) -> Result<LossBreakdown> {
    spec.validate()?;
    check_mix(spec, mix)?;
    let alpha = spec.alpha;

    if let Some(mix) = mix {
        mix.check(z.num_classes())?;
        let ce = mix.lambda * ce_hard(z, HardLabel(mix.gt1))?
            + (1.0 - mix.lambda) * ce_hard(z, HardLabel(mix.gt2))?;
        let reg = mix_ls_loss(z, mix, alpha)?;
        return Ok(LossBreakdown {
            ce_hard: ce,
            regularizer_total: reg,
            total: ce + reg,
            ..LossBreakdown::default()
        });
    }

    if spec.kind == RegKind::Ls {
        return ls_decompose(z, gt, alpha);
    }

    let ce = ce_hard(z, gt)?;
    let reg = match spec.kind {
        RegKind::None => 0.0,
        RegKind::Maxsup => maxsup_loss(z, alpha)?,
        RegKind::RegOnly => ablation_loss(z, gt, alpha, AblationKind::RegOnly)?,
        RegKind::ErrOnlyMean => ablation_loss(z, gt, alpha, AblationKind::ErrOnlyMean)?,
        RegKind::ErrMax => ablation_loss(z, gt, alpha, AblationKind::ErrMax)?,
        RegKind::LogitPenalty | RegKind::ConfidencePenalty => penalty_loss(z, &softmax(z), spec)?,
        RegKind::Ls | RegKind::LsMixup => unreachable!(),
    };
    let (m_count, n_count) = z.partition_counts(gt.0);
    Ok(LossBreakdown {
        ce_hard: ce,
        regularizer_total: reg,
        total: ce + reg,
        m_count,
        n_count,
        ..LossBreakdown::default()
    })
}

/// Closed-form `∂ total_loss / ∂z`. Argmax and the below/above partitions
/// are held fixed at `z`.
pub fn grad_total(
    z: &LogitVector,
    gt: HardLabel,
    spec: &RegularizerSpec,
    mix: Option<&MixTarget>,
) -> Result<GradientVector> {
    spec.validate()?;
    check_mix(spec, mix)?;
    let k = z.num_classes();
    let q = softmax(z);
    let mut g = q.0.clone();
    let alpha = spec.alpha;
    let uniform = alpha / k as f64;

    if let Some(mix) = mix {
        let (gt1, gt2) = mix.check(k)?;
        let (w1, w2) = (mix.lambda, 1.0 - mix.lambda);
        g[gt1] -= w1;
        g[gt2] -= w2;
        for v in g.iter_mut() {
            *v -= uniform;
        }
        g[gt1] += alpha * w1;
        g[gt2] += alpha * w2;
        return Ok(GradientVector(g));
    }

    let gt = gt.check(k)?;
    g[gt] -= 1.0;
    let pivot = z.0[gt];

    match spec.kind {
        RegKind::None => {}
        RegKind::Ls | RegKind::Maxsup => {
            let target = if spec.kind == RegKind::Ls {
                gt
            } else {
                z.argmax()
            };
            for v in g.iter_mut() {
                *v -= uniform;
            }
            g[target] += alpha;
        }
        RegKind::RegOnly | RegKind::ErrOnlyMean => {
            let members: Vec<usize> = (0..k)
                .filter(|&i| {
                    if spec.kind == RegKind::RegOnly {
                        z.0[i] < pivot
                    } else {
                        z.0[i] > pivot
                    }
                })
                .collect();
            if !members.is_empty() {
                let w = alpha / members.len() as f64;
                g[gt] += alpha;
                for i in members {
                    g[i] -= w;
                }
            }
        }
        RegKind::ErrMax => {
            let top = z.argmax();
            g[gt] += alpha;
            g[top] -= alpha;
        }
        RegKind::LogitPenalty => {
            for (v, zk) in g.iter_mut().zip(&z.0) {
                *v += spec.beta * zk;
            }
        }
        RegKind::ConfidencePenalty => {
            let h = q.entropy();
            for (v, &qk) in g.iter_mut().zip(&q.0) {
                if qk > 0.0 {
                    *v += spec.beta * qk * (qk.ln() + h);
                }
            }
        }
        RegKind::LsMixup => unreachable!(),
    }
    Ok(GradientVector(g))
}
