//! Property tests for the logit-level losses, checked against oracles built
//! here from first principles (explicit softmax, explicit sums, finite
//! differences) rather than against the library's own helpers.

use maxsup::losses::{
    ablation_loss, ce_soft, mix_ls_loss, smooth_label, AblationKind, SmoothedLabel,
};
use maxsup::{
    ce_hard, grad_total, ls_decompose, ls_loss, maxsup_loss, softmax, total_loss, HardLabel,
    LogitVector, MixTarget, RegKind, RegularizerSpec,
};
use proptest::prelude::*;

/// `−Σ y_k log q_k` with q from an explicit, unshifted softmax.
fn naive_ce(z: &[f64], y: &[f64]) -> f64 {
    let denom: f64 = z.iter().map(|v| v.exp()).sum();
    -z.iter()
        .zip(y)
        .map(|(zk, yk)| {
            if *yk == 0.0 {
                0.0
            } else {
                yk * (zk.exp() / denom).ln()
            }
        })
        .sum::<f64>()
}

fn logits(max_k: usize) -> impl Strategy<Value = Vec<f64>> {
    (2..=max_k).prop_flat_map(|k| prop::collection::vec(-10.0f64..10.0, k))
}

fn case(max_k: usize) -> impl Strategy<Value = (Vec<f64>, usize, f64)> {
    logits(max_k).prop_flat_map(|z| {
        let k = z.len();
        (Just(z), 0..k, 0.0f64..=1.0)
    })
}

fn lz(z: &[f64]) -> LogitVector {
    LogitVector::new(z.to_vec()).unwrap()
}

#[test]
fn softmax_matches_naive_evaluation() {
    let q = softmax(&lz(&[2.0, 1.0, 0.0]));
    let e: Vec<f64> = [2.0f64, 1.0, 0.0].iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    for (a, b) in q.as_slice().iter().zip(&e) {
        assert!((a - b / s).abs() <= 1e-12);
    }
}

#[test]
fn ce_hard_matches_explicit_log_softmax() {
    let z = [10.0, 0.0, 0.0];
    let oracle = naive_ce(&z, &[1.0, 0.0, 0.0]);
    assert!((ce_hard(&lz(&z), HardLabel(0)).unwrap() - oracle).abs() <= 1e-12);
}

#[test]
fn smoothed_label_hand_values() {
    let s: SmoothedLabel = smooth_label(HardLabel(2), 0.1, 5).unwrap();
    let expected = [0.02, 0.02, 0.92, 0.02, 0.02];
    for (a, b) in s.as_slice().iter().zip(expected) {
        assert!((a - b).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn soft_ce_splits_into_hard_ce_plus_gap((z, gt, alpha) in case(64)) {
        let v = lz(&z);
        let k = z.len();
        let soft = ce_soft(&v, &smooth_label(HardLabel(gt), alpha, k).unwrap()).unwrap();
        let hard = ce_hard(&v, HardLabel(gt)).unwrap();
        // Independent oracle for the gap: α (z_gt − mean z).
        let mean = z.iter().sum::<f64>() / k as f64;
        let gap = alpha * (z[gt] - mean);
        prop_assert!((soft - hard - ls_loss(&v, HardLabel(gt), alpha).unwrap()).abs() <= 1e-10);
        prop_assert!((ls_loss(&v, HardLabel(gt), alpha).unwrap() - gap).abs() <= 1e-10);
    }

    #[test]
    fn decomposition_partitions_the_gap((z, gt, alpha) in case(64)) {
        let v = lz(&z);
        let parts = ls_decompose(&v, HardLabel(gt), alpha).unwrap();
        let k = z.len() as f64;
        let reg: f64 = z.iter().filter(|&&m| m < z[gt]).map(|m| z[gt] - m).sum::<f64>() * alpha / k;
        let err: f64 = z.iter().filter(|&&n| n > z[gt]).map(|n| z[gt] - n).sum::<f64>() * alpha / k;
        prop_assert!((parts.reg_term - reg).abs() <= 1e-10);
        prop_assert!((parts.err_term - err).abs() <= 1e-10);
        prop_assert!((parts.reg_term + parts.err_term - ls_loss(&v, HardLabel(gt), alpha).unwrap()).abs() <= 1e-10);
        prop_assert!(parts.reg_term >= 0.0);
        prop_assert!(parts.err_term <= 0.0);
        let gt_is_max = z.iter().all(|&x| x <= z[gt]);
        prop_assert_eq!(parts.err_term == 0.0, gt_is_max || alpha == 0.0);
    }

    #[test]
    fn maxsup_is_nonnegative_and_matches_ls_at_argmax((z, _gt, alpha) in case(64)) {
        let v = lz(&z);
        let ms = maxsup_loss(&v, alpha).unwrap();
        prop_assert!(ms >= 0.0);
        let top = v.argmax();
        prop_assert_eq!(ms.to_bits(), ls_loss(&v, HardLabel(top), alpha).unwrap().to_bits());
    }

    #[test]
    fn mixup_identity(z in logits(64), a in 0usize..64, b in 0usize..64, lambda in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let k = z.len();
        let mix = MixTarget { gt1: a % k, gt2: b % k, lambda };
        let v = lz(&z);
        // Mixed smoothed label built by hand.
        let mut y = vec![alpha / k as f64; k];
        y[mix.gt1] += (1.0 - alpha) * lambda;
        y[mix.gt2] += (1.0 - alpha) * (1.0 - lambda);
        let soft = naive_ce(&z, &y);
        let mixed_hard = lambda * ce_hard(&v, HardLabel(mix.gt1)).unwrap()
            + (1.0 - lambda) * ce_hard(&v, HardLabel(mix.gt2)).unwrap();
        prop_assert!((soft - mixed_hard - mix_ls_loss(&v, &mix, alpha).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn gap_losses_are_shift_invariant((z, gt, alpha) in case(32), c in -50.0f64..50.0) {
        let v = lz(&z);
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        let w = lz(&shifted);
        let g = HardLabel(gt);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) * (1.0 + c.abs());
        prop_assert!(close(ls_loss(&v, g, alpha).unwrap(), ls_loss(&w, g, alpha).unwrap()));
        prop_assert!(close(maxsup_loss(&v, alpha).unwrap(), maxsup_loss(&w, alpha).unwrap()));
        for kind in [AblationKind::RegOnly, AblationKind::ErrOnlyMean, AblationKind::ErrMax] {
            prop_assert!(close(ablation_loss(&v, g, alpha, kind).unwrap(), ablation_loss(&w, g, alpha, kind).unwrap()));
        }
        let mix = MixTarget { gt1: gt, gt2: (gt + 1) % z.len(), lambda: 0.3 };
        prop_assert!(close(mix_ls_loss(&v, &mix, alpha).unwrap(), mix_ls_loss(&w, &mix, alpha).unwrap()));
        prop_assert!(close(ce_hard(&v, g).unwrap(), ce_hard(&w, g).unwrap()));
    }

    #[test]
    fn centred_kinds_have_zero_gradient_sum((z, gt, alpha) in case(64), lambda in 0.0f64..=1.0) {
        let v = lz(&z);
        let g = HardLabel(gt);
        let mix = MixTarget { gt1: gt, gt2: (gt + 1) % z.len(), lambda };
        for kind in [RegKind::None, RegKind::Ls, RegKind::Maxsup, RegKind::LsMixup] {
            let spec = RegularizerSpec::with_alpha(kind, alpha);
            let m = (kind == RegKind::LsMixup).then_some(&mix);
            let sum: f64 = grad_total(&v, g, &spec, m).unwrap().as_slice().iter().sum();
            prop_assert!(sum.abs() <= 1e-10, "{kind}: {sum}");
        }
    }

    #[test]
    fn maxsup_pushes_gt_harder_when_misclassified((z, gt, alpha) in case(64)) {
        let v = lz(&z);
        prop_assume!(v.argmax() != gt);
        let ls = grad_total(&v, HardLabel(gt), &RegularizerSpec::with_alpha(RegKind::Ls, alpha), None).unwrap();
        let ms = grad_total(&v, HardLabel(gt), &RegularizerSpec::with_alpha(RegKind::Maxsup, alpha), None).unwrap();
        let gap = ls.as_slice()[gt] - ms.as_slice()[gt];
        prop_assert!((gap - alpha).abs() <= 1e-14);
        if alpha > 0.0 {
            prop_assert!(ms.as_slice()[gt] < ls.as_slice()[gt]);
        }
    }
}

/// Central differences of `total_loss` at `z`, one coordinate at a time.
fn fd_gradient(
    z: &[f64],
    gt: usize,
    spec: &RegularizerSpec,
    mix: Option<&MixTarget>,
    h: f64,
) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let mut up = z.to_vec();
            let mut down = z.to_vec();
            up[i] += h;
            down[i] -= h;
            let f = |v: Vec<f64>| total_loss(&lz(&v), HardLabel(gt), spec, mix).unwrap().total;
            (f(up) - f(down)) / (2.0 * h)
        })
        .collect()
}

/// No two logits within `margin` of each other, so argmax and the M/N
/// partition cannot flip under a ±h probe.
fn well_separated(z: &[f64], margin: f64) -> bool {
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[1] - w[0] > margin)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_kind_matches_finite_differences(z in prop::collection::vec(-3.0f64..3.0, 7), gt in 0usize..7, alpha in 0.0f64..=1.0, lambda in 0.0f64..=1.0) {
        prop_assume!(well_separated(&z, 1e-3));
        let mix = MixTarget { gt1: gt, gt2: (gt + 3) % 7, lambda };
        for kind in RegKind::ALL {
            let spec = RegularizerSpec::with_alpha(kind, alpha);
            let m = (kind == RegKind::LsMixup).then_some(&mix);
            let g = grad_total(&lz(&z), HardLabel(gt), &spec, m).unwrap();
            let fd = fd_gradient(&z, gt, &spec, m, 1e-5);
            let diff: f64 = g.as_slice().iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            prop_assert!(diff / scale <= 1e-6, "{kind}: rel err {}", diff / scale);
        }
    }
}
