//! End-to-end checks of the command layer: deterministic output, fault
//! injection, fixture round trips, and the installed binary's exit codes.

use std::path::PathBuf;
use std::process::Command;

use caa_cli::bench::{self, BenchConfig};
use caa_cli::fixtures;
use caa_cli::report::{self, FlopsConfig};
use caa_cli::verify::{self, VerifyConfig};
use caa_core::oracle::OracleCaps;
use caa_core::tensor::Dtype;

fn fixtures_into(dir: &std::path::Path) {
    fixtures::write(dir, fixtures::DEFAULT_SEED, &OracleCaps::default()).expect("write fixtures");
}

fn verify_cfg(dir: &std::path::Path, mutate: bool) -> VerifyConfig {
    VerifyConfig {
        seed: 42,
        mutate,
        fixtures_dir: dir.to_path_buf(),
        oracle_caps: OracleCaps::default(),
    }
}

#[test]
fn verify_passes_and_renders_identically_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    fixtures_into(tmp.path());
    let first = verify::render_table(&verify::run(&verify_cfg(tmp.path(), false)));
    let second = verify::render_table(&verify::run(&verify_cfg(tmp.path(), false)));
    assert_eq!(first, second, "verify output must be run-invariant");
    assert!(first.ends_with("overall: pass (10/10 suites)\n"), "got:\n{first}");
}

#[test]
fn mutated_gate_weight_is_caught_by_the_oracle_suite() {
    let tmp = tempfile::tempdir().unwrap();
    fixtures_into(tmp.path());
    let outcomes = verify::run(&verify_cfg(tmp.path(), true));
    assert!(!verify::all_passed(&outcomes));
    let oracle = outcomes.iter().find(|o| o.name == "oracle-equivalence").unwrap();
    let why = oracle.failure.as_deref().expect("oracle suite must fail under mutation");
    assert!(why.contains("h=1 w=1 c=1"), "should fail at the smallest config: {why}");
    for o in &outcomes {
        if o.name != "oracle-equivalence" {
            assert!(o.failure.is_none(), "{} should still pass: {:?}", o.name, o.failure);
        }
    }
}

#[test]
fn missing_fixture_directory_is_an_explicit_failure() {
    let outcomes = verify::run(&verify_cfg(&PathBuf::from("/nonexistent/fixtures"), false));
    let replay = outcomes.iter().find(|o| o.name == "fixture-replay").unwrap();
    assert!(replay.failure.is_some());
}

#[test]
fn fixture_generation_is_bit_identical_and_replayable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    fixtures_into(a.path());
    fixtures_into(b.path());

    for (h, w, c) in fixtures::SIZES {
        let set = fixtures::set_name(h, w, c);
        let dir_a = a.path().join(&set);
        let mut names: Vec<_> = std::fs::read_dir(&dir_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(names.contains(&"manifest.txt".to_string()));
        for name in names {
            let bytes_a = std::fs::read(dir_a.join(&name)).unwrap();
            let bytes_b = std::fs::read(b.path().join(&set).join(&name)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{set}/{name} differs between generations");
        }
    }

    fixtures::replay(a.path(), fixtures::DEFAULT_SEED, &OracleCaps::default()).unwrap();
    // A different seed regenerates different tensors, which replay reports.
    let err = fixtures::replay(a.path(), 43, &OracleCaps::default()).unwrap_err();
    assert!(err.contains("differs bitwise"), "got: {err}");
}

#[test]
fn fixture_generation_respects_the_oracle_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let tiny = OracleCaps { max_elements: 10 };
    let err = fixtures::write(tmp.path(), fixtures::DEFAULT_SEED, &tiny).unwrap_err();
    assert!(err.to_string().contains("cap"), "got: {err}");
}

#[test]
fn bench_csv_is_deterministic_outside_the_wall_time_column() {
    let cfg = BenchConfig {
        heights: vec![5, 6],
        widths: vec![4],
        channels: vec![2],
        groups: vec![1, 2, 9],
        repeats: 2,
        ..BenchConfig::default()
    };
    let a = bench::run(&cfg).unwrap();
    let b = bench::run(&cfg).unwrap();
    assert_eq!(bench::strip_wall_time(&a), bench::strip_wall_time(&b));

    let lines: Vec<&str> = a.lines().collect();
    assert!(lines[0].starts_with(&format!("# {} ", bench::CSV_VERSION)));
    assert_eq!(lines[1], caa_core::groupexec::csv_header());
    // Two resolutions times three group counts, all feasible (G=9 pads).
    assert_eq!(lines.len(), 2 + 2 * 3);
    assert!(lines[2].starts_with("1,5,4,2,"));

    let f64_cfg = BenchConfig { dtype: Dtype::F64, ..cfg };
    let c = bench::run(&f64_cfg).unwrap();
    assert!(c.lines().next().unwrap().contains("dtype=f64"));
}

#[test]
fn default_bench_sweep_emits_fifteen_data_rows() {
    // Three resolutions times five group counts, every combination feasible.
    let cfg = BenchConfig { repeats: 1, ..BenchConfig::default() };
    let csv = bench::run(&cfg).unwrap();
    let data_rows = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("G,"))
        .count();
    assert_eq!(data_rows, 15, "got:\n{csv}");
}

#[test]
fn flops_report_is_deterministic_and_carries_the_exact_ratio() {
    let cfg = FlopsConfig::default();
    let a = report::render(&cfg);
    assert_eq!(a, report::render(&cfg));
    assert!(a.contains("(H+W)/(HW) = 2/33"), "got:\n{a}");
    assert!(a.contains("channelized-axial gate overhead: 4.228023e-4"), "got:\n{a}");
    for kind in ["self", "axial", "channelized-axial", "channelized-self"] {
        assert!(a.lines().any(|l| l.starts_with(kind)), "missing {kind} row:\n{a}");
    }
}

// ───────────────────────── binary-level checks ─────────────────────────

fn caa_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_caa"))
}

#[test]
fn binary_verify_round_trips_fixtures_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture_dir = tmp.path().join("fx");

    let out = caa_bin()
        .args(["fixtures", "--out"])
        .arg(&fixture_dir)
        .output()
        .expect("run caa fixtures");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let ok = caa_bin()
        .args(["verify", "--fixtures"])
        .arg(&fixture_dir)
        .output()
        .expect("run caa verify");
    assert!(ok.status.success(), "stdout: {}", String::from_utf8_lossy(&ok.stdout));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.contains("overall: pass"), "got:\n{text}");

    let bad = caa_bin()
        .args(["verify", "--mutate", "--fixtures"])
        .arg(&fixture_dir)
        .output()
        .expect("run caa verify --mutate");
    assert_eq!(bad.status.code(), Some(1));
    let text = String::from_utf8(bad.stdout).unwrap();
    assert!(text.contains("oracle-equivalence"), "got:\n{text}");
    assert!(text.contains("FAIL"), "got:\n{text}");
}

#[test]
fn binary_bench_writes_the_out_file() {
    let tmp = tempfile::tempdir().unwrap();
    let csv_path = tmp.path().join("bench.csv");
    let out = caa_bin()
        .args([
            "bench", "--heights", "4", "--widths", "4", "--channels", "2", "--groups", "1,2",
            "--repeats", "1", "--out",
        ])
        .arg(&csv_path)
        .output()
        .expect("run caa bench");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 4, "got:\n{csv}");
    assert!(csv.lines().nth(2).unwrap().starts_with("1,4,4,2,"));
}

#[test]
fn binary_rejects_invalid_arguments() {
    let out = caa_bin()
        .args(["flops", "--height", "0"])
        .output()
        .expect("run caa flops");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 1"));
}
