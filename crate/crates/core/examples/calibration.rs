//! Reliability table and expected calibration error with and without a
//! regularizer.

use maxsup::harness::{run_on, ExperimentConfig};
use maxsup::metrics::{calibration, softmax_rows};
use maxsup::model::predict;
use maxsup::RegKind;

fn main() -> maxsup::Result<()> {
    let mut cfg =
        ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs.json"))?;
    let (train, val) = cfg.load_data()?;
    for kind in [RegKind::None, RegKind::Maxsup] {
        cfg.regularizer.kind = kind;
        let out = run_on(&cfg, &train, &val)?;
        let (logits, _) = predict(&out.params, val.inputs.view())?;
        let report = calibration(softmax_rows(logits.view()).view(), &val.labels)?;
        println!(
            "{}: ece {:.4} nll {:.4}",
            kind.name(),
            report.ece,
            report.nll
        );
        for (i, b) in report.bins.iter().enumerate().filter(|(_, b)| b.count > 0) {
            println!(
                "  bin {:>2}  n {:>5}  confidence {:.3}  accuracy {:.3}",
                i, b.count, b.confidence, b.accuracy
            );
        }
    }
    Ok(())
}
