use std::fs;
use std::path::Path;

use sgc_harness::experiment::read_cells;
use sgc_harness::summary::{median_u64, read_summary, summary_from_csv, summary_to_csv};
use sgc_harness::{
    fit_complexity_slope, fit_log_log, render_svg, run_experiment, Algorithm, Arm, CellStatus,
    ExperimentSpec, HarnessError, OracleKind, RunnerOptions, SummaryRow,
};

fn small_spec(out: &Path, extra: &str) -> ExperimentSpec {
    let text = format!(
        r#"
algorithm = "psgd"
mode = "first_order"
sgc_arm = true
epsilon_grid = [0.2]
seeds = [0]
stop_at_first_certified = true
start_radius = 0.001
out_dir = "{}"
{extra}

[problem]
family = "multiplicative_saddle"
dim = 4
neg_count = 1
rho = 2.0
quartic_coeff = 0.001
r_box = 18.0

[constants]
a0 = 0.5
a1 = 0.0031622776601683794
c = 0.02
"#,
        out.display()
    );
    ExperimentSpec::from_toml_str(&text).unwrap()
}

fn list_dir(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn single_cell_spec_writes_one_trace_and_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), "");
    let out = run_experiment(&spec, &RunnerOptions::default()).unwrap();
    assert_eq!(out.cells.len(), 1);
    assert!(out.cells[0].calls_to_first_certified.is_some_and(|c| c > 0));
    assert_eq!(out.summary.len(), 1);
    assert_eq!(list_dir(&dir.path().join("traces")).len(), 1);
    for name in ["cells.csv", "summary.csv", "spec.toml", "plot.svg"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert_eq!(read_summary(&dir.path().join("summary.csv")).unwrap(), out.summary);
    let echoed = ExperimentSpec::from_file(&dir.path().join("spec.toml")).unwrap();
    assert_eq!(echoed, spec);
}

#[test]
fn invalid_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_spec(dir.path(), "");
    let cases: Vec<Box<dyn Fn(&mut ExperimentSpec)>> = vec![
        Box::new(|s| s.epsilon_grid.clear()),
        Box::new(|s| s.epsilon_grid = vec![0.1, 0.2]),
        Box::new(|s| s.epsilon_grid = vec![0.2, 0.2]),
        Box::new(|s| s.epsilon_grid = vec![1.5]),
        Box::new(|s| s.seeds.clear()),
        Box::new(|s| s.seeds = vec![1, 1]),
        Box::new(|s| s.problem.sigma = 0.5),
        Box::new(|s| s.start_point = Some(vec![0.0; 3])),
    ];
    for (i, mutate) in cases.iter().enumerate() {
        let mut spec = base.clone();
        mutate(&mut spec);
        assert!(
            matches!(run_experiment(&spec, &RunnerOptions::default()), Err(HarnessError::Validation(_))),
            "case {i}"
        );
    }
    assert!(ExperimentSpec::from_toml_str("algorithm = \"psgd\"\nunknown_key = 1").is_err());
}

#[test]
fn failed_cells_are_recorded_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path(), "");
    // The first-order schedule is undefined for ε ≥ 1/e.
    spec.epsilon_grid = vec![0.5, 0.2];
    spec.seeds = vec![0, 1];
    let out = run_experiment(&spec, &RunnerOptions::default()).unwrap();
    let failed: Vec<_> = out.cells.iter().filter(|c| c.status == CellStatus::Failed).collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|c| c.epsilon == 0.5 && !c.error.is_empty()));
    let row = out.summary.iter().find(|r| r.epsilon == 0.5).unwrap();
    assert_eq!((row.runs, row.failed), (2, 2));
    assert_eq!(row.median_calls_to_first_certified, None);
    assert_eq!(row.success_rate, 0.0);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut spec = small_spec(a.path(), "");
    spec.epsilon_grid = vec![0.2, 0.1];
    spec.seeds = vec![0, 1, 2];
    run_experiment(&spec, &RunnerOptions { workers: 1, master_seed: 9 }).unwrap();
    spec.out_dir = b.path().to_path_buf();
    run_experiment(&spec, &RunnerOptions { workers: 3, master_seed: 9 }).unwrap();
    let traces = list_dir(&a.path().join("traces"));
    assert_eq!(traces.len(), 6);
    assert_eq!(traces, list_dir(&b.path().join("traces")));
    for name in &traces {
        let rel = Path::new("traces").join(name);
        assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap(), "{name}");
    }
    for name in ["cells.csv", "summary.csv", "plot.svg"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn master_seed_changes_the_runs() {
    let a = tempfile::tempdir().unwrap();
    let spec = small_spec(a.path(), "");
    let one = run_experiment(&spec, &RunnerOptions { workers: 1, master_seed: 1 }).unwrap();
    let two = run_experiment(&spec, &RunnerOptions { workers: 1, master_seed: 2 }).unwrap();
    assert!(one.cells[0].calls_to_first_certified.is_some_and(|c| c > 0));
    assert_ne!(one.cells, two.cells);
}

/// Last data row of a trace CSV, split into fields.
fn last_row(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let line = text.lines().filter(|l| !l.starts_with('#')).last().unwrap();
    line.split(',').map(str::to_owned).collect()
}

#[test]
fn summary_statistics_are_consistent_with_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path(), "");
    spec.epsilon_grid = vec![0.2, 0.1];
    spec.seeds = vec![3, 4, 5, 6];
    let out = run_experiment(&spec, &RunnerOptions::default()).unwrap();
    let cells = read_cells(&dir.path().join("cells.csv")).unwrap();
    assert_eq!(cells, out.cells);
    for c in &cells {
        let row = last_row(&dir.path().join(&c.trace_file));
        assert_eq!(row[0].parse::<usize>().unwrap(), c.steps);
        assert_eq!(row[4].parse::<u64>().unwrap(), c.total_calls);
    }
    for r in &out.summary {
        let group: Vec<_> = cells.iter().filter(|c| c.epsilon == r.epsilon).collect();
        let mut hits: Vec<u64> = group.iter().filter_map(|c| c.calls_to_first_certified).collect();
        let success = hits.len() as f64 / group.len() as f64;
        assert_eq!(r.median_calls_to_first_certified, median_u64(&mut hits));
        assert_eq!(r.success_rate, success);
        assert_eq!(r.runs, group.len());
    }
}

fn synthetic(calls: impl Fn(f64) -> f64) -> Vec<SummaryRow> {
    [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&eps| SummaryRow {
            epsilon: eps,
            algorithm: Algorithm::Psgd,
            mode: OracleKind::Derivative,
            sgc_arm: true,
            median_calls_to_first_certified: Some(calls(eps).round() as u64),
            sosp_fraction: Some(1.0),
            success_rate: 1.0,
            random_iterate_rate: None,
            runs: 5,
            failed: 0,
        })
        .collect()
}

#[test]
fn slope_fits_recover_power_laws() {
    let arm = Arm {
        algorithm: Algorithm::Psgd,
        mode: OracleKind::Derivative,
        sgc_arm: true,
    };
    let fit = fit_complexity_slope(&synthetic(|e| 1000.0 * e.powf(-2.0)), &arm).unwrap();
    assert!((fit.slope - 2.0).abs() <= 1e-6, "{}", fit.slope);
    let fit = fit_complexity_slope(&synthetic(|e| 7.0 * e.powf(-2.5) * 1e3), &arm).unwrap();
    assert!((fit.slope - 2.5).abs() <= 1e-5, "{}", fit.slope);
    let exact = fit_log_log(&[(0.1, 100.0), (0.01, 1e4), (0.001, 1e6)]).unwrap();
    assert!((exact.slope - 2.0).abs() < 1e-12 && exact.stderr < 1e-12);
    assert!(matches!(fit_log_log(&[(0.1, 1.0), (0.05, 2.0)]), Err(HarnessError::InsufficientData(_))));
}

#[test]
fn summary_csv_round_trips() {
    let rows = synthetic(|e| 1.0 / e);
    assert_eq!(summary_from_csv(&summary_to_csv(&rows)).unwrap(), rows);
}

#[test]
fn plot_with_one_arm_and_two_points() {
    let rows: Vec<SummaryRow> = synthetic(|e| 10.0 / e).into_iter().take(2).collect();
    let svg = render_svg(&rows).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
    assert_eq!(points.split_whitespace().count(), 2);
    assert!(svg.contains(">1/epsilon<") && svg.contains(">oracle calls<"));
    assert!(matches!(render_svg(&[]), Err(HarnessError::InsufficientData(_))));
}

#[test]
fn plot_matches_golden_file() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let summary = read_summary(&fixtures.join("summary.csv")).unwrap();
    let svg = render_svg(&summary).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert_eq!(svg, fs::read_to_string(fixtures.join("plot.svg")).unwrap());
}
