//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the lines print in order and
//! the desk-scale training matrix is shared between the criteria that read
//! it. A criterion listed in `KNOWN_FAILING` is still evaluated at its full
//! tolerance and reported as FAIL, but does not fail the process; every other
//! failure does. See the README for why each listed criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use maxsup::data::BlobSpec;
use maxsup::harness::compare::{run_matrix, CellResult};
use maxsup::harness::run::{strip_wall_time, RUN_LOG, SUMMARY};
use maxsup::harness::verify::CheckResult;
use maxsup::harness::{
    cmd_train, run_verification, DatasetSource, ExperimentConfig, ModelSection, VerifyOptions,
};
use maxsup::metrics::{default_l2_grid, linear_probe, FeatureMatrix, ProbeOptions};
use maxsup::schedules::LrSchedule;
use maxsup::{RegKind, RegularizerSpec};
use ndarray::array;

/// Criteria that fail at desk scale, with the reason.
const KNOWN_FAILING: &[(&str, &str)] = &[(
    "4b",
    "maxsup trails ls under 20% label noise at this blob difficulty; the sign of the gap changes with blob separation",
)];

struct Outcome {
    id: &'static str,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn all_passed(checks: &[CheckResult]) -> bool {
    checks.iter().all(CheckResult::passed)
}

fn summarize(checks: &[CheckResult]) -> String {
    checks
        .iter()
        .map(|c| format!("{}={:.1e}/{:.0e}", c.name, c.max_error, c.tolerance))
        .collect::<Vec<_>>()
        .join(" ")
}

fn verification() -> Vec<Outcome> {
    let started = Instant::now();
    let report = run_verification(&VerifyOptions::default()).expect("verification runs");
    let elapsed = started.elapsed();
    // Identities and gradients run together, so the whole elapsed time is
    // held against each budget.
    let identity_names = [
        "soft_label_decomposition",
        "ls_partition",
        "mixup_decomposition",
    ];
    let identities: Vec<CheckResult> = report
        .identities
        .iter()
        .filter(|c| identity_names.contains(&c.name.as_str()))
        .cloned()
        .collect();
    let structural: Vec<CheckResult> = report
        .identities
        .iter()
        .filter(|c| !identity_names.contains(&c.name.as_str()))
        .cloned()
        .collect();
    let gradients: Vec<CheckResult> = report
        .logit_gradients
        .iter()
        .chain(&report.param_gradients)
        .cloned()
        .collect();
    let min_trials = identities.iter().map(|c| c.trials).min().unwrap_or(0);
    vec![
        Outcome {
            id: "1",
            title: "identity suite",
            passed: all_passed(&identities)
                && min_trials >= 1000 * 4
                && elapsed < Duration::from_secs(5),
            detail: format!(
                "{} trials>={min_trials} time={elapsed:.2?}",
                summarize(&identities)
            ),
        },
        Outcome {
            id: "2",
            title: "gradient suite",
            passed: all_passed(&gradients) && elapsed < Duration::from_secs(30),
            detail: format!(
                "kinds={} worst_logit={:.1e} worst_param={:.1e} time={elapsed:.2?}",
                report.logit_gradients.len(),
                report
                    .logit_gradients
                    .iter()
                    .map(|c| c.max_error)
                    .fold(0.0, f64::max),
                report
                    .param_gradients
                    .iter()
                    .map(|c| c.max_error)
                    .fold(0.0, f64::max),
            ),
        },
        Outcome {
            id: "3",
            title: "structural invariants",
            passed: all_passed(&structural),
            detail: summarize(&structural),
        },
    ]
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig {
        version: 1,
        dataset: DatasetSource::Blobs {
            spec: BlobSpec {
                num_classes: 10,
                dim: 32,
                samples_per_class: 500,
                within_std: 1.0,
                mean_radius: 3.0,
                label_noise: 0.2,
                seed: 7,
            },
            val_per_class: 200,
        },
        imbalance: None,
        model: ModelSection {
            hidden_dims: vec![64, 64],
        },
        regularizer: RegularizerSpec::with_alpha(RegKind::None, 0.1),
        alpha_schedule: None,
        lr_schedule: LrSchedule::Cosine { base_lr: 0.1 },
        epochs: 60,
        batch_size: 128,
        momentum: 0.9,
        weight_decay: 1e-4,
        mixup_concentration: 1.0,
        seed: 0,
        output_dir: None,
    }
}

fn per_seed(cells: &[CellResult], kind: RegKind, f: impl Fn(&CellResult) -> f64) -> Vec<f64> {
    cells.iter().filter(|c| c.kind == kind).map(f).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn wins(a: &[f64], b: &[f64], holds: impl Fn(f64, f64) -> bool) -> usize {
    a.iter().zip(b).filter(|(x, y)| holds(**x, **y)).count()
}

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn desk_scale() -> Vec<Outcome> {
    let kinds = [
        RegKind::None,
        RegKind::Ls,
        RegKind::Maxsup,
        RegKind::RegOnly,
        RegKind::ErrOnlyMean,
    ];
    let seeds = [0, 1, 2, 3, 4];
    let started = Instant::now();
    let cells = run_matrix(&desk_config(), &kinds, &seeds, None).expect("matrix trains");
    let elapsed = started.elapsed();
    let in_budget = elapsed < Duration::from_secs(600);

    let acc = |k| per_seed(&cells, k, |c| c.summary.val_accuracy);
    let dw = |k| per_seed(&cells, k, |c| c.summary.feature_quality.d_within);

    let (err_only, reg_only) = (acc(RegKind::ErrOnlyMean), acc(RegKind::RegOnly));
    let a_seeds = wins(&err_only, &reg_only, |e, r| e <= r);
    let (ms, ls) = (acc(RegKind::Maxsup), acc(RegKind::Ls));
    let b_gap = mean(&ms) - mean(&ls);

    let (dw_none, dw_ls, dw_ms) = (dw(RegKind::None), dw(RegKind::Ls), dw(RegKind::Maxsup));
    let ls_tighter = wins(&dw_ls, &dw_none, |l, n| l < n);
    let ms_looser = wins(&dw_ms, &dw_ls, |m, l| m >= l);

    vec![
        Outcome {
            id: "4a",
            title: "err_only_mean <= reg_only accuracy",
            passed: mean(&err_only) <= mean(&reg_only) && a_seeds >= 4 && in_budget,
            detail: format!(
                "means {:.4} vs {:.4}, seeds {a_seeds}/5 [{}] vs [{}] time={elapsed:.1?}",
                mean(&err_only),
                mean(&reg_only),
                fmt(&err_only),
                fmt(&reg_only)
            ),
        },
        Outcome {
            id: "4b",
            title: "maxsup accuracy >= ls - 0.3pp",
            passed: b_gap >= -0.003 && in_budget,
            detail: format!(
                "means {:.4} vs {:.4} (gap {:+.2}pp), [{}] vs [{}]",
                mean(&ms),
                mean(&ls),
                100.0 * b_gap,
                fmt(&ms),
                fmt(&ls)
            ),
        },
        Outcome {
            id: "5",
            title: "d_within(ls) < d_within(none), d_within(maxsup) >= d_within(ls)",
            passed: ls_tighter >= 4 && ms_looser >= 4,
            detail: format!(
                "ls<none {ls_tighter}/5, maxsup>=ls {ms_looser}/5; none [{}] ls [{}] maxsup [{}]",
                fmt(&dw_none),
                fmt(&dw_ls),
                fmt(&dw_ms)
            ),
        },
    ]
}

fn probe_protocol() -> Outcome {
    let grid = default_l2_grid();
    let log_step = (5.0 - -6.0) / 44.0;
    let grid_ok = grid.len() == 45
        && grid[0] == 1e-6
        && grid[44] == 1e5
        && grid
            .iter()
            .enumerate()
            .all(|(i, g)| (g.log10() - (-6.0 + log_step * i as f64)).abs() < 1e-12);
    let separable = FeatureMatrix::new(
        array![
            [-2.0, 0.3],
            [-1.5, -0.4],
            [-1.0, 0.1],
            [-2.5, 0.0],
            [1.0, -0.2],
            [1.6, 0.4],
            [2.1, 0.0],
            [1.2, -0.5]
        ],
        vec![0, 0, 0, 0, 1, 1, 1, 1],
    )
    .expect("fixture is valid");
    let result =
        linear_probe(&separable, &separable, &grid, &ProbeOptions::default()).expect("probe runs");
    Outcome {
        id: "6",
        title: "probe protocol",
        passed: grid_ok && result.best_accuracy == 1.0,
        detail: format!(
            "grid n={} [{:e}, {:e}] log-spaced={grid_ok}, separable best={}",
            grid.len(),
            grid[0],
            grid[44],
            result.best_accuracy
        ),
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut identical = true;
    let mut checked = Vec::new();
    for kind in [RegKind::Maxsup, RegKind::LsMixup] {
        let mut cfg = desk_config();
        cfg.regularizer.kind = kind;
        cfg.epochs = 10;
        let dirs = [
            tmp.path().join(format!("{kind}_a")),
            tmp.path().join(format!("{kind}_b")),
        ];
        for d in &dirs {
            cmd_train(&cfg, d, false).expect("train runs");
        }
        let read = |d: &std::path::Path, f: &str| {
            std::fs::read_to_string(d.join(f)).expect("output exists")
        };
        identical &= read(&dirs[0], RUN_LOG) == read(&dirs[1], RUN_LOG);
        identical &= strip_wall_time(&read(&dirs[0], SUMMARY)).unwrap()
            == strip_wall_time(&read(&dirs[1], SUMMARY)).unwrap();
        checked.push(kind.name());
    }
    Outcome {
        id: "7",
        title: "train determinism",
        passed: identical,
        detail: format!(
            "run.jsonl and summary.json byte-identical for {}: {identical}",
            checked.join(",")
        ),
    }
}

fn main() -> ExitCode {
    let mut outcomes = verification();
    outcomes.extend(desk_scale());
    outcomes.push(probe_protocol());
    outcomes.push(determinism());

    let mut unexpected = 0;
    println!();
    for o in &outcomes {
        let known = KNOWN_FAILING.iter().find(|(id, _)| *id == o.id);
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {} {}: {}", o.id, o.title, o.detail);
        match (o.passed, known) {
            (false, Some((_, why))) => println!("       known desk-scale failure: {why}"),
            (false, None) => unexpected += 1,
            (true, Some(_)) => println!("       listed as known failing but passed this run"),
            (true, None) => {}
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!(
        "\nacceptance: {passed}/{} criteria passed, {unexpected} unexpected failures\n",
        outcomes.len()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
