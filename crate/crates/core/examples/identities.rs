//! The label-smoothing loss as a logit gap, its split into a regularization
//! part and an error-amplification part, and what max suppression changes.

use maxsup::losses::{ce_soft, smooth_label};
use maxsup::{ce_hard, ls_decompose, ls_loss, maxsup_loss, HardLabel, LogitVector};

fn show(label: &str, z: &LogitVector, gt: HardLabel, alpha: f64) -> maxsup::Result<()> {
    let k = z.num_classes();
    let soft = ce_soft(z, &smooth_label(gt, alpha, k)?)?;
    let hard = ce_hard(z, gt)?;
    let parts = ls_decompose(z, gt, alpha)?;
    println!("{label}: z = {:?}, gt = {}", z.as_slice(), gt.0);
    println!("  ce_soft - ce_hard      = {:+.6}", soft - hard);
    println!("  ls_loss                = {:+.6}", ls_loss(z, gt, alpha)?);
    println!(
        "  reg_term + err_term    = {:+.6} + {:+.6}  ({} below gt, {} above)",
        parts.reg_term, parts.err_term, parts.m_count, parts.n_count
    );
    println!("  maxsup_loss            = {:+.6}", maxsup_loss(z, alpha)?);
    Ok(())
}

fn main() -> maxsup::Result<()> {
    let alpha = 0.1;
    // Correct prediction: nothing ranks above the ground truth, so the error
    // term vanishes and max suppression coincides with label smoothing.
    show(
        "correct",
        &LogitVector::new(vec![3.0, 1.0, 0.5, -1.0])?,
        HardLabel(0),
        alpha,
    )?;
    println!();
    // Misclassified: the error term is negative and pushes toward the wrong
    // class, while max suppression still penalizes the top-1 logit.
    show(
        "misclassified",
        &LogitVector::new(vec![3.0, 1.0, 0.5, -1.0])?,
        HardLabel(1),
        alpha,
    )?;
    Ok(())
}
