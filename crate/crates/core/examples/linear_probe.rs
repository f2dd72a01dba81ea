//! Linear-probe transfer: fit L2-regularized softmax regression on frozen
//! features over the log-spaced grid and keep the best validation accuracy.

use maxsup::harness::{run, ExperimentConfig};
use maxsup::metrics::{default_l2_grid, linear_probe, ProbeOptions};

fn main() -> maxsup::Result<()> {
    let mut cfg =
        ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs.json"))?;
    cfg.epochs = 30;
    let out = run(&cfg)?;
    // A coarser grid than the default 45 points keeps the example quick.
    let grid: Vec<f64> = default_l2_grid().into_iter().step_by(4).collect();
    let probe = linear_probe(
        &out.train_features,
        &out.val_features,
        &grid,
        &ProbeOptions::default(),
    )?;
    for p in &probe.accuracy_per_l2 {
        println!("l2 {:>9.2e}  val_acc {:.4}", p.l2, p.accuracy);
    }
    println!(
        "best {:.4} at l2 {:.2e}",
        probe.best_accuracy, probe.best_l2
    );
    Ok(())
}
