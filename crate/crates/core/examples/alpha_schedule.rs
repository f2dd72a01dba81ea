//! Smoothing-weight and learning-rate schedules, and a run whose smoothing
//! weight ramps up over training.

use maxsup::harness::{run, ExperimentConfig};
use maxsup::schedules::{alpha_at, lr_at, AlphaSchedule, LrSchedule};
use maxsup::RegKind;

fn main() -> maxsup::Result<()> {
    let total = 10;
    let ramp = AlphaSchedule::Linear {
        alpha0: 0.1,
        alpha1: 0.2,
    };
    let cosine = LrSchedule::Cosine { base_lr: 0.1 };
    let step = LrSchedule::Step {
        base_lr: 0.1,
        step_size: 4,
        gamma: 0.1,
    };
    println!("t   alpha   cosine_lr  step_lr");
    for t in 0..total {
        println!(
            "{t:<3} {:.3}   {:.5}    {:.5}",
            alpha_at(&ramp, t, total)?,
            lr_at(&cosine, t, total)?,
            lr_at(&step, t, total)?
        );
    }

    let mut cfg =
        ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs.json"))?;
    cfg.regularizer.kind = RegKind::Maxsup;
    cfg.alpha_schedule = Some(ramp);
    cfg.epochs = 30;
    let out = run(&cfg)?;
    let last = out.rows.last().expect("at least one epoch");
    println!(
        "\nmaxsup with ramped alpha: final alpha {:.3}, val_acc {:.4}",
        last.alpha, out.summary.val_accuracy
    );
    Ok(())
}
