//! End-to-end behaviour of the `mediate` front end: ingestion, analysis
//! output, scenario files and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use mediation_cli::analyze::{fmt4, MeasureName};
use mediation_cli::{analyze, load_csv, render_table, AnalysisConfig, CliError, ColumnRoles, FlavorSelection};
use mediation_core::simulation::{generate, solve_design, SimulationScenario};
use mediation_core::{CaseType, Dataset, Execution, Flavor};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mediate"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Dump `(Y, M, X)` plus outcome covariates `C1..` as CSV.
fn write_dataset(dir: &Path, name: &str, d: &Dataset) -> PathBuf {
    let mut text = String::from("Y,M,X");
    for j in 0..d.p_outcome() {
        text += &format!(",C{}", j + 1);
    }
    text.push('\n');
    for i in 0..d.n() {
        text += &format!("{},{},{}", d.y()[i], d.m()[i], d.x()[i]);
        for w in d.w_outcome() {
            text += &format!(",{}", w[i]);
        }
        text.push('\n');
    }
    write(dir, name, &text)
}

fn config(path: PathBuf, binary_outcome: bool, binary_mediator: bool) -> AnalysisConfig {
    AnalysisConfig {
        data_path: path,
        outcome: "Y".into(),
        mediator: "M".into(),
        exposure: "X".into(),
        binary_outcome,
        binary_mediator,
        covariates_outcome: vec![],
        covariates_mediator: vec![],
        x0: 0.0,
        x1: 1.0,
        c_outcome: vec![],
        c_mediator: vec![],
        boot: false,
        boot_r: 2000,
        seed: 0,
        flavor: None,
        level: 0.95,
        covariance: Default::default(),
        ghq_nodes: 40,
    }
}

const SIX_ROWS: &str = "Y,M,X,C1,C2
0,0,1,1,35
1,1,1,0,42
0,0,0,1,28
1,1,1,1,51
0,1,0,0,39
0,0,0,0,47
";

fn roles(binary: bool, covariates: &[&str]) -> ColumnRoles {
    ColumnRoles {
        outcome: "Y".into(),
        mediator: "M".into(),
        exposure: "X".into(),
        binary_outcome: binary,
        binary_mediator: binary,
        covariates_outcome: covariates.iter().map(|s| s.to_string()).collect(),
        covariates_mediator: covariates.iter().map(|s| s.to_string()).collect(),
    }
}

#[test]
fn six_row_file_loads_with_two_covariates() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "d.csv", SIX_ROWS);
    let d = load_csv(&p, &roles(true, &["C1", "C2"])).unwrap();
    assert_eq!(d.n(), 6);
    assert_eq!(d.p_outcome(), 2);
    assert_eq!(d.p_mediator(), 2);
    assert_eq!(d.w_outcome()[1][3], 51.0);
    assert_eq!(d.case(), CaseType::Case4);
}

#[test]
fn ingestion_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "e.csv", "Y,M,X\n1,0.5,1\n0,,0\n");
    assert!(matches!(
        load_csv(&empty, &roles(false, &[])),
        Err(CliError::MissingValue { row: 2, ref column }) if column == "M"
    ));
    let two = write(dir.path(), "b.csv", "Y,M,X\n1,0,1\n0,2,0\n");
    let mut r = roles(false, &[]);
    r.binary_mediator = true;
    assert!(matches!(load_csv(&two, &r), Err(CliError::NonBinaryValue { row: 2, value, .. }) if value == 2.0));
    let text = write(dir.path(), "t.csv", "Y,M,X\n1,zero,1\n");
    assert!(matches!(load_csv(&text, &roles(false, &[])), Err(CliError::NonNumericCell { row: 1, .. })));
    assert!(matches!(
        load_csv(&empty, &roles(false, &["Z"])),
        Err(CliError::MissingColumn(ref c)) if c == "Z"
    ));
    assert!(matches!(
        load_csv(&dir.path().join("absent.csv"), &roles(false, &[])),
        Err(CliError::FileNotFound(_))
    ));
}

#[test]
fn null_contrast_gives_zero_and_undefined_mp() {
    let dir = tempfile::tempdir().unwrap();
    let s = SimulationScenario::new(CaseType::Case1, 300, 1.0, 0.5);
    let p = write_dataset(dir.path(), "c1.csv", &generate(&s, &solve_design(&s).unwrap(), 0));
    let mut cfg = config(p, false, false);
    cfg.x1 = 0.0;
    let report = analyze(&cfg, Execution::Sequential).unwrap();
    assert_eq!(report.results.len(), 3);
    for row in &report.results {
        match row.measure {
            MeasureName::Mp => assert!(row.undefined && row.point.is_none()),
            _ => assert_eq!(row.point.unwrap().abs(), 0.0),
        }
    }
    assert!(render_table(&report).contains("undefined"));
}

fn case4_file(dir: &Path, te: f64, mp: f64, n: usize, prevalence: f64) -> (PathBuf, SimulationScenario) {
    let mut s = SimulationScenario::new(CaseType::Case4, n, te, mp);
    s.outcome_prevalence = prevalence;
    let d = generate(&s, &solve_design(&s).unwrap(), 3);
    (write_dataset(dir, "c4.csv", &d), s)
}

#[test]
fn case4_both_gives_six_rows_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let (p, _) = case4_file(dir.path(), 2f64.ln(), 0.5, 2000, 0.1);
    let mut cfg = config(p, true, true);
    cfg.flavor = Some(FlavorSelection::Both);
    let report = analyze(&cfg, Execution::Sequential).unwrap();
    let shape: Vec<(MeasureName, Flavor)> = report.results.iter().map(|r| (r.measure, r.flavor)).collect();
    use Flavor::*;
    use MeasureName::*;
    assert_eq!(
        shape,
        vec![(Nie, Approximate), (Nie, Exact), (Te, Approximate), (Te, Exact), (Mp, Approximate), (Mp, Exact)]
    );
    assert!(report.results.iter().all(|r| r.se.is_some() && r.boot_ci.is_none()));
}

#[test]
fn case4_reanalysis_recovers_generating_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (te, mp) = (1.5f64.ln(), 0.2);
    let (p, _) = case4_file(dir.path(), te, mp, 20_000, 0.1);
    let mut cfg = config(p, true, true);
    cfg.flavor = Some(FlavorSelection::Exact);
    let report = analyze(&cfg, Execution::Sequential).unwrap();
    for (row, truth) in report.results.iter().zip([te * mp, te, mp]) {
        let (point, se) = (row.point.unwrap(), row.se.unwrap());
        assert!((point - truth).abs() < 3.0 * se, "{:?}: {point} ± {se} vs {truth}", row.measure);
    }
}

#[test]
fn table_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (p, _) = case4_file(dir.path(), 2f64.ln(), 0.5, 1500, 0.25);
    let json = dir.path().join("out.json");
    let out = bin()
        .args(["analyze", "--data"])
        .arg(&p)
        .args(["--outcome", "Y", "--mediator", "M", "--exposure", "X", "--binary-outcome", "--binary-mediator"])
        .args(["--boot", "--boot-r", "200", "--seed", "4", "--json"])
        .arg(&json)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["fit_diagnostics"]["n"], 1500);
    assert_eq!(doc["fit_diagnostics"]["outcome"]["converged"], true);
    let rows = doc["results"].as_array().unwrap();
    let lines: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(lines.len(), rows.len());
    for (line, row) in lines.iter().zip(rows) {
        let f = |v: &serde_json::Value| fmt4(v.as_f64().unwrap());
        let expected = format!(
            "{} ({})",
            f(&row["point"]),
            f(&row["se"])
        );
        assert!(line.starts_with(row["measure"].as_str().unwrap()), "{line}");
        assert!(line.contains(row["flavor"].as_str().unwrap()));
        assert!(line.contains(&expected), "{line} lacks {expected}");
        let dci = format!("({}, {})", f(&row["delta_ci"][0]), f(&row["delta_ci"][1]));
        let bci = format!("({}, {})", f(&row["boot_ci"][0]), f(&row["boot_ci"][1]));
        assert!(line.contains(&dci) && line.contains(&bci), "{line}");
    }
}

#[test]
fn analyze_output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let (p, _) = case4_file(dir.path(), 2f64.ln(), 0.5, 800, 0.25);
    let run = |threads: &str| {
        let out = bin()
            .args(["--threads", threads, "analyze", "--data"])
            .arg(&p)
            .args(["--outcome", "Y", "--mediator", "M", "--exposure", "X", "--binary-outcome", "--binary-mediator"])
            .args(["--boot", "--boot-r", "100", "--seed", "11", "--json", "-"])
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("8"));
}

fn exit_code(args: &[&str], extra: &[&Path]) -> (i32, String) {
    let out = bin().args(args).args(extra).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cols = ["--outcome", "Y", "--mediator", "M", "--exposure", "X"];

    // input error
    let missing = dir.path().join("nope.csv");
    let (code, err) = exit_code(&[&["analyze"][..], &cols].concat(), &[Path::new("--data"), &missing]);
    assert_eq!(code, 2, "{err}");

    // fit error: the outcome never occurs
    let mut text = String::from("Y,M,X\n");
    for i in 0..40 {
        text += &format!("0,{},{}\n", (i as f64 * 0.7).sin(), i % 2);
    }
    let flat = write(dir.path(), "flat.csv", &text);
    let (code, err) =
        exit_code(&[&["analyze", "--binary-outcome"][..], &cols].concat(), &[Path::new("--data"), &flat]);
    assert_eq!(code, 3, "{err}");

    // bootstrap instability: six events, so many resamples separate
    let mut text = String::from("Y,M,X\n");
    for i in 0..400 {
        let y = u8::from([3, 104, 205, 306, 57, 158].contains(&i));
        text += &format!("{y},{},{}\n", ((i * 13) % 17) as f64 / 17.0 - 0.5, i % 2);
    }
    let rare = write(dir.path(), "rare.csv", &text);
    let (code, err) = exit_code(
        &[&["analyze", "--binary-outcome", "--boot", "--boot-r", "400", "--flavor", "approximate"][..], &cols].concat(),
        &[Path::new("--data"), &rare],
    );
    assert_eq!(code, 4, "{err}");

    // invalid scenario: field-level message
    let bad = write(dir.path(), "bad.toml", "case = 1\nn = 100\nte = 1.0\nmp = 1.5\n");
    let (code, err) = exit_code(&["simulate"], &[&bad]);
    assert_eq!(code, 2);
    assert!(err.contains("`mp`"), "{err}");

    // design solver cannot reach the target
    let unreachable = write(
        dir.path(),
        "solver.toml",
        "case = 4\nn = 100\nte = 6.0\nmp = 0.95\nxm_correlation = 0.01\nmediator_prevalence = 0.01\nreplications = 2\n",
    );
    let out_csv = dir.path().join("never.csv");
    let (code, err) = exit_code(&["simulate", "--output"], &[&out_csv, &unreachable]);
    assert_eq!(code, 5, "{err}");
    assert!(!out_csv.exists(), "no partial output on failure");

    // unknown flag is a usage error
    let (code, _) = exit_code(&["analyze", "--frobnicate"], &[]);
    assert_eq!(code, 2);
}

#[test]
fn simulate_single_replication_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "one.toml",
        "id = \"single\"\ncase = 1\nn = 300\nte = 1.0\nmp = 0.5\nreplications = 1\nseed = 5\n",
    );
    let out = dir.path().join("one.csv");
    let (code, err) = exit_code(&["simulate", "-o"], &[&out, &file]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&out).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(&r[0], "single");
        let cr: f64 = r[10].parse().unwrap();
        assert!(cr == 0.0 || cr == 100.0, "cr_delta {cr}");
        assert_eq!(&r[12], "", "no variance ratio from one replicate");
        assert_eq!(&r[15], "ok");
        assert_eq!(&r[16], "", "no timing unless asked");
    }

    let file = write(
        dir.path(),
        "c3.toml",
        "case = 3\nn = 300\nte = 0.6931\nmp = 0.5\noutcome_prevalence = 0.25\nreplications = 12\n[bootstrap]\nreplications = 40\nmax_retry_fraction = 0.1\n",
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(exit_code(&["--threads", "1", "simulate", "-o"], &[&a, &file]).0, 0);
    assert_eq!(exit_code(&["--threads", "8", "simulate", "-o"], &[&b, &file]).0, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn sweep_grid_shape_and_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "sweep.toml",
        "case = 4\nn = 400\nte = 0.6931\nmp = 0.5\nreplications = 10\nprevalences = [0.01, 0.05, 0.10, 0.25, 0.50]\n",
    );
    let out = bin().arg("sweep").arg(&file).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_reader(&out.stdout[..]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5 * 2 * 2);
    let prevalences: Vec<&str> = rows.iter().step_by(4).map(|r| &r[5]).collect();
    assert_eq!(prevalences, ["0.01", "0.05", "0.1", "0.25", "0.5"]);
    // a cell may legitimately fail (at 50% the design needs β2 ≈ 4, and small
    // samples then separate); it is still reported in its rows
    assert!(rows.iter().all(|r| &r[15] == "ok" || r[15].starts_with("failed")));
    assert!(rows[4..8].iter().all(|r| &r[15] == "ok"));

    // 1% of 40 records: most replicates have no event at all
    let file = write(
        dir.path(),
        "tiny.toml",
        "case = 4\nn = 40\nte = 0.6931\nmp = 0.5\nreplications = 20\nprevalences = [0.01, 0.5]\n",
    );
    let out = bin().arg("sweep").arg(&file).output().unwrap();
    assert!(out.status.success(), "a failed cell is reported in-row, not fatal");
    let mut rdr = csv::Reader::from_reader(&out.stdout[..]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows[..4].iter().all(|r| r[15].starts_with("failed") && &r[9] == ""), "{:?}", &rows[0]);

    let file = write(
        dir.path(),
        "probit.toml",
        "case = 3\nn = 400\nte = 0.6931\nmp = 0.5\nreplications = 5\nprevalences = [0.25, 0.5]\n",
    );
    let out = bin().arg("sweep").arg(&file).output().unwrap();
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(&out.stdout[..]);
    let flavors: Vec<String> = rdr.records().map(|r| r.unwrap()[6].to_string()).collect();
    assert_eq!(flavors.len(), 2 * 3 * 2);
    assert_eq!(&flavors[..6], ["approximate", "approximate", "exact", "exact", "probit", "probit"]);

    let bad = write(dir.path(), "badgrid.toml", "case = 4\nn = 400\nte = 0.6931\nmp = 0.5\nprevalences = [0.1, 1.5]\n");
    assert_eq!(exit_code(&["sweep"], &[&bad]).0, 2);
    let continuous = write(dir.path(), "c1.toml", "case = 1\nn = 400\nte = 1\nmp = 0.5\nprevalences = [0.1]\n");
    assert_eq!(exit_code(&["sweep"], &[&continuous]).0, 2);
}

#[test]
fn covariate_values_must_match_names() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "d.csv", SIX_ROWS);
    let mut cfg = config(p, false, false);
    cfg.covariates_outcome = vec!["C1".into(), "C2".into()];
    cfg.c_outcome = vec![1.0];
    let err = analyze(&cfg, Execution::Sequential).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}
