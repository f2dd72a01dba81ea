//! Trains the five-way ablation on noisy blobs and prints per-seed metrics.
//!
//! ```text
//! cargo run --release --example ablation_matrix -- [within_std] [mean_radius] [seeds]
//! ```

use maxsup::harness::compare::{mean_std, run_matrix};
use maxsup::harness::{DatasetSource, ExperimentConfig};
use maxsup::RegKind;

fn main() -> maxsup::Result<()> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let within_std = args.first().copied().unwrap_or(1.0);
    let mean_radius = args.get(1).copied().unwrap_or(3.0);
    let n_seeds = args.get(2).map_or(5, |&s| s as u64);

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs.json");
    let mut base = ExperimentConfig::load(path)?;
    if let DatasetSource::Blobs { spec, .. } = &mut base.dataset {
        spec.within_std = within_std;
        spec.mean_radius = mean_radius;
    }

    let kinds = [
        RegKind::None,
        RegKind::Ls,
        RegKind::Maxsup,
        RegKind::RegOnly,
        RegKind::ErrOnlyMean,
    ];
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let cells = run_matrix(&base, &kinds, &seeds, None)?;

    println!("within_std={within_std} mean_radius={mean_radius}");
    println!(
        "{:<14} {:>5} {:>8} {:>9} {:>7} {:>7}",
        "kind", "seed", "val_acc", "d_within", "r2", "ece"
    );
    for c in &cells {
        let s = &c.summary;
        println!(
            "{:<14} {:>5} {:>8.4} {:>9.4} {:>7.4} {:>7.4}",
            c.kind.name(),
            c.seed,
            s.val_accuracy,
            s.feature_quality.d_within,
            s.feature_quality.r_squared,
            s.ece
        );
    }
    println!();
    for kind in kinds {
        let acc: Vec<f64> = cells
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.summary.val_accuracy)
            .collect();
        let dw: Vec<f64> = cells
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.summary.feature_quality.d_within)
            .collect();
        let (am, asd) = mean_std(&acc);
        let (dm, _) = mean_std(&dw);
        println!(
            "{:<14} val_acc {:.4} ± {:.4}  d_within {:.4}",
            kind.name(),
            am,
            asd,
            dm
        );
    }
    Ok(())
}
