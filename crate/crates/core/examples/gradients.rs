//! Per-logit gradients of each regularizer on a misclassified sample.

use maxsup::{grad_total, HardLabel, LogitVector, RegKind, RegularizerSpec};

fn main() -> maxsup::Result<()> {
    let z = LogitVector::new(vec![2.0, 0.5, 1.0, -0.5, 0.0])?;
    let gt = HardLabel(2);
    let none = grad_total(&z, gt, &RegularizerSpec::none(), None)?;
    println!(
        "z = {:?}, gt = {}, argmax = {}",
        z.as_slice(),
        gt.0,
        z.argmax()
    );
    println!("{:<20} dL/dz minus plain cross-entropy", "kind");
    for kind in [
        RegKind::Ls,
        RegKind::Maxsup,
        RegKind::RegOnly,
        RegKind::ErrOnlyMean,
        RegKind::ErrMax,
        RegKind::LogitPenalty,
        RegKind::ConfidencePenalty,
    ] {
        let g = grad_total(&z, gt, &RegularizerSpec::with_alpha(kind, 0.1), None)?;
        let extra: Vec<String> = g
            .as_slice()
            .iter()
            .zip(none.as_slice())
            .map(|(a, b)| format!("{:+.4}", a - b))
            .collect();
        println!("{:<20} [{}]", kind.name(), extra.join(", "));
    }
    // Label smoothing pulls the ground-truth logit down by α(1 − 1/K); max
    // suppression leaves it alone and pushes the wrong top-1 logit instead.
    Ok(())
}
