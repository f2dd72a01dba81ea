//! Long-tailed training: exponential class-count profile and accuracy split
//! into many-shot, medium-shot and low-shot groups.

use maxsup::data::{longtail_counts, ImbalanceSpec};
use maxsup::harness::{run_on, DatasetSource, ExperimentConfig};
use maxsup::RegKind;

fn main() -> maxsup::Result<()> {
    println!(
        "class counts at ratio 50: {:?}",
        longtail_counts(500, 10, 50.0)
    );
    let mut cfg =
        ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs.json"))?;
    // Subsampling needs every class to hold its target count, and label
    // noise unbalances the classes, so the long-tail study runs on clean labels.
    if let DatasetSource::Blobs { spec, .. } = &mut cfg.dataset {
        spec.label_noise = 0.0;
    }
    cfg.imbalance = Some(ImbalanceSpec { ratio: 50.0 });
    cfg.epochs = 30;
    let (train, val) = cfg.load_data()?;
    println!(
        "train size {} (counts {:?})",
        train.len(),
        train.class_counts
    );
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.4}"));
    for kind in [RegKind::None, RegKind::Ls, RegKind::Maxsup] {
        cfg.regularizer.kind = kind;
        let g = run_on(&cfg, &train, &val)?.summary.group_accuracy;
        println!(
            "{:<8} overall {:.4}  many {}  medium {}  low {}",
            kind.name(),
            g.overall,
            fmt(g.many),
            fmt(g.medium),
            fmt(g.low)
        );
    }
    Ok(())
}
