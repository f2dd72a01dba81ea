//! One training run on noisy blobs, printing the per-epoch log.
//!
//! ```text
//! cargo run --release --example train_blobs -- [kind]
//! ```

use maxsup::harness::{run, ExperimentConfig};
use maxsup::RegKind;

fn main() -> maxsup::Result<()> {
    let mut cfg =
        ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs.json"))?;
    if let Some(kind) = std::env::args().nth(1) {
        cfg.regularizer.kind = kind.parse::<RegKind>()?;
    }
    let out = run(&cfg)?;
    println!("epoch  train_loss  train_acc  val_acc  alpha   lr");
    for r in out
        .rows
        .iter()
        .filter(|r| r.epoch % 10 == 0 || r.epoch == 1)
    {
        println!(
            "{:>5}  {:>10.4}  {:>9.4}  {:>7.4}  {:.3}  {:.5}",
            r.epoch, r.train_loss, r.train_acc, r.val_acc, r.alpha, r.lr
        );
    }
    let s = &out.summary;
    println!(
        "\n{}: val_acc {:.4}, ece {:.4}, nll {:.4}, d_within {:.4}, r2 {:.4}",
        s.kind,
        s.val_accuracy,
        s.ece,
        s.nll,
        s.feature_quality.d_within,
        s.feature_quality.r_squared
    );
    Ok(())
}
