//! Mixup pairing and the label-smoothing loss on an interpolated target.

use maxsup::data::mixup_pairs;
use maxsup::harness::{run, ExperimentConfig};
use maxsup::losses::mix_ls_loss;
use maxsup::{LogitVector, MixTarget, RegKind};

fn main() -> maxsup::Result<()> {
    for p in mixup_pairs(6, 1.0, 3)? {
        println!(
            "row {} mixed with row {} at lambda {:.3}",
            p.i, p.j, p.lambda
        );
    }
    let z = LogitVector::new(vec![2.0, 1.0, -1.0])?;
    let mix = MixTarget {
        gt1: 0,
        gt2: 1,
        lambda: 0.7,
    };
    println!(
        "mixup smoothing loss on {:?}: {:.4}",
        z.as_slice(),
        mix_ls_loss(&z, &mix, 0.1)?
    );

    let mut cfg =
        ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs.json"))?;
    cfg.regularizer.kind = RegKind::LsMixup;
    cfg.epochs = 30;
    let s = run(&cfg)?.summary;
    println!("ls_mixup: val_acc {:.4} ece {:.4}", s.val_accuracy, s.ece);
    Ok(())
}
