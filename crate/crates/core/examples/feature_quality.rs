//! Within-class compactness and between-class separability of penultimate
//! features, for a plain and a label-smoothed network.

use maxsup::harness::{run_on, ExperimentConfig};
use maxsup::metrics::{feature_quality, FeatureMatrix};
use maxsup::RegKind;
use ndarray::array;

fn main() -> maxsup::Result<()> {
    // Toy geometry: two tight clusters far apart score a high R².
    let rows = array![[1.0, 0.05], [1.0, -0.05], [-0.05, 1.0], [0.05, 1.0]];
    let toy = feature_quality(&FeatureMatrix::new(rows, vec![0, 0, 1, 1])?)?;
    println!(
        "toy clusters: d_within {:.4} d_total {:.4} r2 {:.4}",
        toy.d_within, toy.d_total, toy.r_squared
    );

    let mut cfg =
        ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs.json"))?;
    cfg.epochs = 30;
    let (train, val) = cfg.load_data()?;
    for kind in [RegKind::None, RegKind::Ls, RegKind::Maxsup] {
        cfg.regularizer.kind = kind;
        let q = run_on(&cfg, &train, &val)?.summary.feature_quality;
        println!(
            "{:<8} d_within {:.4} d_total {:.4} r2 {:.4}",
            kind.name(),
            q.d_within,
            q.d_total,
            q.r_squared
        );
    }
    Ok(())
}
