use std::path::Path;

use crate::data::load_csv;
use crate::error::{Error, Result};
use crate::metrics::{linear_probe, log_grid, FeatureMatrix, ProbeOptions, ProbeResult};

pub const PROBE_FILE: &str = "probe.json";

/// Grid as given on the command line: `N,MIN,MAX`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [n, min, max] = parts.as_slice() else {
        return Err(Error::Usage(format!(
            "grid must be N,MIN,MAX, got `{text}`"
        )));
    };
    let bad = |what: &str| Error::Usage(format!("grid {what} is not a number in `{text}`"));
    let n: usize = n.parse().map_err(|_| bad("count"))?;
    let min: f64 = min.parse().map_err(|_| bad("minimum"))?;
    let max: f64 = max.parse().map_err(|_| bad("maximum"))?;
    log_grid(n, min, max)
}

fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let d = load_csv(path)?;
    FeatureMatrix::new(d.inputs, d.labels)
}

/// `probe` subcommand: fit the probe on `train_csv`, score `val_csv`, and
/// write `probe.json` into `out` when given.
pub fn cmd_probe(
    train_csv: &Path,
    val_csv: &Path,
    grid: &[f64],
    out: Option<&Path>,
) -> Result<ProbeResult> {
    let train = load_features(train_csv)?;
    let val = load_features(val_csv)?;
    let result = linear_probe(&train, &val, grid, &ProbeOptions::default())?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(PROBE_FILE);
        let mut text = serde_json::to_string_pretty(&result)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("45,1e-6,1e5").unwrap();
        assert_eq!(g, crate::metrics::default_l2_grid());
        assert_eq!(parse_grid("3, 1, 100").unwrap(), vec![1.0, 10.0, 100.0]);
        assert!(parse_grid("3,1").is_err());
        assert!(parse_grid("x,1,2").is_err());
        assert!(parse_grid("3,2,1").is_err());
    }
}
