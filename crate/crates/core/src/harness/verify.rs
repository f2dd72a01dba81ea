//! Randomized verification of the loss identities and every closed-form
//! gradient against central finite differences.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::losses::{
    ce_hard, ce_soft, grad_total, ls_decompose, ls_loss, maxsup_loss, mix_ls_loss, smooth_label,
    total_loss, HardLabel, LogitVector, MixTarget, RegKind, RegularizerSpec, SmoothedLabel,
};
use crate::model::{init_params, MlpConfig, Params};

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Random trials per class count, per check.
    pub trials: usize,
    pub class_counts: Vec<usize>,
    pub seed: u64,
    pub fd_step: f64,
    pub identity_tol: f64,
    pub logit_grad_tol: f64,
    pub param_grad_tol: f64,
    /// Random networks per regularizer kind for the end-to-end check.
    pub param_trials: usize,
    /// Added to every label-smoothing loss value. Non-zero only as a
    /// negative control.
    pub ls_loss_offset: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            trials: 1000,
            class_counts: vec![2, 3, 10, 64],
            seed: 0x5eed,
            fd_step: 1e-5,
            identity_tol: 1e-10,
            logit_grad_tol: 1e-6,
            param_grad_tol: 1e-5,
            param_trials: 25,
            ls_loss_offset: 0.0,
        }
    }
}

/// Tolerance for checks that hold up to a few roundings of O(1) values.
const ROUNDING_TOL: f64 = 1e-14;

/// Smallest gap between distinct logits (and ReLU pre-activations from zero)
/// accepted for finite differencing, so ±h never flips a comparison.
const STABILITY_MARGIN: f64 = 1e-3;

/// Floor on the denominator of the relative gradient error.
const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Inputs of the trial with the largest error.
    pub worst_case: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            trials: 0,
            max_error: 0.0,
            tolerance,
            worst_case: String::new(),
        }
    }

    fn record(&mut self, error: f64, case: impl FnOnce() -> String) {
        self.trials += 1;
        if error.is_nan() || error > self.max_error {
            self.max_error = if error.is_nan() { f64::INFINITY } else { error };
            self.worst_case = case();
        }
    }

    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub identities: Vec<CheckResult>,
    pub logit_gradients: Vec<CheckResult>,
    pub param_gradients: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn checks(&self) -> impl Iterator<Item = &CheckResult> {
        self.identities
            .iter()
            .chain(&self.logit_gradients)
            .chain(&self.param_gradients)
    }

    pub fn passed(&self) -> bool {
        self.checks().all(CheckResult::passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks().filter(|c| !c.passed()).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let sections = [
            ("identities (max abs residual)", &self.identities),
            (
                "logit gradients (max rel error vs finite differences)",
                &self.logit_gradients,
            ),
            (
                "parameter gradients through an MLP (max rel error)",
                &self.param_gradients,
            ),
        ];
        for (title, checks) in sections {
            let _ = writeln!(out, "{title}");
            for c in checks {
                let _ = writeln!(
                    out,
                    "  [{}] {:<28} trials={:<6} max={:.3e} tol={:.0e}",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.trials,
                    c.max_error,
                    c.tolerance
                );
                if !c.passed() {
                    let _ = writeln!(out, "         worst case: {}", c.worst_case);
                }
            }
        }
        let _ = writeln!(
            out,
            "{}",
            if self.passed() {
                "all checks passed"
            } else {
                "VERIFICATION FAILED"
            }
        );
        out
    }
}

fn random_logits(rng: &mut ChaCha8Rng, k: usize, max_log_scale: f64) -> LogitVector {
    let scale = 10f64.powf(rng.random_range(-1.0..max_log_scale));
    let values = (0..k)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    LogitVector::new(values).expect("finite draws")
}

fn min_gap(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(REL_ERR_FLOOR)
}

fn describe(z: &LogitVector, gt: usize, alpha: f64) -> String {
    format!(
        "K={} gt={gt} alpha={alpha} z={:?}",
        z.num_classes(),
        z.as_slice()
    )
}

fn check_identities(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let tol = opts.identity_tol;
    let ls = |z: &LogitVector, gt: HardLabel, a: f64| -> Result<f64> {
        Ok(ls_loss(z, gt, a)? + opts.ls_loss_offset)
    };
    let mut soft = CheckResult::new("soft_label_decomposition", tol);
    let mut partition = CheckResult::new("ls_partition", tol);
    let mut mixup = CheckResult::new("mixup_decomposition", tol);
    let mut err_sign = CheckResult::new("err_term_sign", 0.0);
    let mut nonneg = CheckResult::new("maxsup_nonnegative", 0.0);
    let mut equiv = CheckResult::new("maxsup_ls_equivalence", 0.0);
    let mut gap = CheckResult::new("misclassified_gt_grad_gap", ROUNDING_TOL);

    for &k in &opts.class_counts {
        for trial in 0..opts.trials {
            let z = random_logits(rng, k, 1.0);
            let alpha: f64 = rng.random_range(0.0..=1.0);
            // Every other trial places the label on the top logit.
            let gt = if trial % 2 == 0 {
                z.argmax()
            } else {
                rng.random_range(0..k)
            };
            let label = HardLabel(gt);
            let case = || describe(&z, gt, alpha);

            let s = smooth_label(label, alpha, k)?;
            let hard = ce_hard(&z, label)?;
            let lsv = ls(&z, label, alpha)?;
            soft.record((ce_soft(&z, &s)? - hard - lsv).abs(), case);

            let b = ls_decompose(&z, label, alpha)?;
            partition.record((b.reg_term + b.err_term - lsv).abs(), case);

            let is_top = gt == z.argmax();
            // err_term is zero exactly when z_gt attains the maximum (and
            // strictly negative otherwise, given α > 0).
            let gt_maximal = z.as_slice()[gt] == z.max();
            let sign_violation = if b.reg_term < 0.0 || b.err_term > 0.0 {
                f64::INFINITY
            } else if gt_maximal {
                b.err_term.abs()
            } else if alpha > 0.0 && b.err_term == 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            err_sign.record(sign_violation, case);

            let ms = maxsup_loss(&z, alpha)?;
            nonneg.record((-ms).max(0.0), case);
            if is_top {
                equiv.record((ms - lsv).abs(), case);
            }

            let mix = MixTarget {
                gt1: gt,
                gt2: rng.random_range(0..k),
                lambda: rng.random_range(0.0..=1.0),
            };
            let mixed = SmoothedLabel::mixed(&mix, alpha, k)?;
            let mixed_hard = mix.lambda * ce_hard(&z, HardLabel(mix.gt1))?
                + (1.0 - mix.lambda) * ce_hard(&z, HardLabel(mix.gt2))?;
            let residual = ce_soft(&z, &mixed)? - mixed_hard - mix_ls_loss(&z, &mix, alpha)?;
            mixup.record(residual.abs(), || format!("{} mix={mix:?}", case()));

            if !is_top {
                let g_ls = grad_total(
                    &z,
                    label,
                    &RegularizerSpec::with_alpha(RegKind::Ls, alpha),
                    None,
                )?;
                let g_ms = grad_total(
                    &z,
                    label,
                    &RegularizerSpec::with_alpha(RegKind::Maxsup, alpha),
                    None,
                )?;
                let diff = g_ls.as_slice()[gt] - g_ms.as_slice()[gt];
                gap.record((diff - alpha).abs(), case);
            }
        }
    }
    Ok(vec![soft, partition, mixup, err_sign, nonneg, equiv, gap])
}

fn spec_for(kind: RegKind, rng: &mut ChaCha8Rng) -> RegularizerSpec {
    RegularizerSpec {
        kind,
        alpha: rng.random_range(0.0..=1.0),
        beta: rng.random_range(0.0..=1.0),
    }
}

fn mix_for(kind: RegKind, k: usize, rng: &mut ChaCha8Rng) -> Option<MixTarget> {
    (kind == RegKind::LsMixup).then(|| MixTarget {
        gt1: rng.random_range(0..k),
        gt2: rng.random_range(0..k),
        lambda: rng.random_range(0.0..=1.0),
    })
}

fn check_logit_gradients(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let h = opts.fd_step;
    let mut out = Vec::new();
    for kind in RegKind::ALL {
        let mut check = CheckResult::new(kind.name(), opts.logit_grad_tol);
        for &k in &opts.class_counts {
            let trials_here = opts.trials.div_ceil(4).max(1);
            let mut done = 0;
            while done < trials_here {
                let z = random_logits(rng, k, 0.5);
                if min_gap(z.as_slice()) < STABILITY_MARGIN {
                    continue;
                }
                done += 1;
                let gt = HardLabel(rng.random_range(0..k));
                let spec = spec_for(kind, rng);
                let mix = mix_for(kind, k, rng);
                let analytic = grad_total(&z, gt, &spec, mix.as_ref())?;
                let mut numeric = vec![0.0; k];
                for (i, slot) in numeric.iter_mut().enumerate() {
                    let mut plus = z.as_slice().to_vec();
                    let mut minus = plus.clone();
                    plus[i] += h;
                    minus[i] -= h;
                    let fp = total_loss(&LogitVector::new(plus)?, gt, &spec, mix.as_ref())?.total;
                    let fm = total_loss(&LogitVector::new(minus)?, gt, &spec, mix.as_ref())?.total;
                    *slot = (fp - fm) / (2.0 * h);
                }
                let err = rel_error(analytic.as_slice(), &numeric);
                check.record(err, || {
                    format!(
                        "{} spec={spec:?} mix={mix:?}",
                        describe(&z, gt.0, spec.alpha)
                    )
                });
            }
        }
        out.push(check);
    }
    Ok(out)
}

/// Mean regularized loss of a batch through the network.
fn batch_objective(
    params: &Params,
    x: &Array2<f64>,
    labels: &[usize],
    spec: &RegularizerSpec,
    mixes: &[Option<MixTarget>],
) -> Result<f64> {
    let trace = params.forward_batch(x.view())?;
    let mut total = 0.0;
    for (row, &label) in labels.iter().enumerate() {
        let z = trace.logit_vector(row)?;
        total += total_loss(&z, HardLabel(label), spec, mixes[row].as_ref())?.total;
    }
    Ok(total / labels.len() as f64)
}

fn check_param_gradients(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    const BATCH: usize = 3;
    let h = opts.fd_step;
    let mut out = Vec::new();
    for kind in RegKind::ALL {
        let mut check = CheckResult::new(kind.name(), opts.param_grad_tol);
        let mut done = 0;
        while done < opts.param_trials {
            let depth = rng.random_range(0..=2);
            let cfg = MlpConfig {
                input_dim: rng.random_range(1..=8),
                hidden_dims: (0..depth).map(|_| rng.random_range(2..=8)).collect(),
                num_classes: rng.random_range(2..=8),
                seed: rng.random(),
            };
            let mut params = init_params(&cfg)?;
            for l in &mut params.layers {
                l.bias
                    .mapv_inplace(|_| 0.1 * rng.sample::<f64, _>(StandardNormal));
            }
            let x = Array2::from_shape_simple_fn((BATCH, cfg.input_dim), || {
                rng.sample::<f64, _>(StandardNormal)
            });
            let labels: Vec<usize> = (0..BATCH)
                .map(|_| rng.random_range(0..cfg.num_classes))
                .collect();
            let spec = spec_for(kind, rng);
            let mixes: Vec<Option<MixTarget>> = (0..BATCH)
                .map(|_| mix_for(kind, cfg.num_classes, rng))
                .collect();

            let trace = params.forward_batch(x.view())?;
            let kink = trace
                .pre_activations()
                .iter()
                .any(|p| p.iter().any(|v| v.abs() < STABILITY_MARGIN));
            let tie = trace
                .logits()
                .rows()
                .into_iter()
                .any(|r| min_gap(&r.to_vec()) < STABILITY_MARGIN);
            if kink || tie {
                continue;
            }
            done += 1;

            let mut dlogits = Array2::zeros(trace.logits().raw_dim());
            for (row, &label) in labels.iter().enumerate() {
                let z = trace.logit_vector(row)?;
                let g = grad_total(&z, HardLabel(label), &spec, mixes[row].as_ref())?;
                for (d, v) in dlogits.row_mut(row).iter_mut().zip(g.as_slice()) {
                    *d = v / BATCH as f64;
                }
            }
            let analytic = params.backward(&trace, dlogits.view())?.flatten();

            let mut numeric = vec![0.0; params.num_params()];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let orig = *params.param_mut(i);
                *params.param_mut(i) = orig + h;
                let fp = batch_objective(&params, &x, &labels, &spec, &mixes)?;
                *params.param_mut(i) = orig - h;
                let fm = batch_objective(&params, &x, &labels, &spec, &mixes)?;
                *params.param_mut(i) = orig;
                *slot = (fp - fm) / (2.0 * h);
            }
            let err = rel_error(&analytic, &numeric);
            check.record(err, || {
                format!("net={cfg:?} labels={labels:?} spec={spec:?}")
            });
        }
        out.push(check);
    }
    Ok(out)
}

/// Runs every check. The report carries per-check trial counts, the largest
/// residual or relative error, and the worst inputs.
pub fn run_verification(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    Ok(VerifyReport {
        identities: check_identities(opts, &mut rng)?,
        logit_gradients: check_logit_gradients(opts, &mut rng)?,
        param_gradients: check_param_gradients(opts, &mut rng)?,
    })
}
