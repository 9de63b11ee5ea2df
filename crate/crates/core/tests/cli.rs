use std::path::PathBuf;
use std::process::{Command, Output};

use cutfem::study::{ErrorReport, CSV_HEADER};

fn cutfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutfem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cutfem-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn mesh_dump_has_one_line_per_cell() {
    let out = cutfem(&["mesh", "--level", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 64);
    assert_eq!(lines[0], "0 0 0 0 0.125");
    let last: Vec<f64> = lines[63].split(' ').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last, vec![7.0, 7.0, 0.875, 0.875, 0.125]);
}

#[test]
fn study_writes_a_parseable_table() {
    let csv = scratch("table.csv");
    let log = scratch("log.csv");
    let snap = scratch("snap.csv");
    let out = cutfem(&[
        "study",
        "--levels",
        "0..1",
        "--out",
        csv.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
        "--snapshot",
        snap.to_str().unwrap(),
        "--snapshot-grid",
        "11",
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().any(|l| l == CSV_HEADER));
    let rep = ErrorReport::from_csv(&text).unwrap();
    assert_eq!(rep.rows.len(), 2);
    assert!(rep.rows[0].eoc_v.is_none());
    assert!(rep.rows[1].eoc_v.unwrap() > 1.0);
    let log = std::fs::read_to_string(&log).unwrap();
    assert_eq!(log.lines().count(), 1 + 1 + 2);
    let snap = std::fs::read_to_string(&snap).unwrap();
    assert_eq!(snap.lines().count(), 1 + 11 * 11);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let cfg = scratch("run.cfg");
    std::fs::write(&cfg, "# coarse run\nk = 1\nr = 2\nlevels = 0\nnu = 0.5\n").unwrap();
    let out = cutfem(&["study", "--config", cfg.to_str().unwrap(), "--nu", "2", "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = ErrorReport::from_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.rows[0].nu, 2.0);
}

#[test]
fn invalid_input_fails_with_a_summary() {
    for args in [
        vec!["study", "--k", "7", "--levels", "0"],
        vec!["study", "--levels", "2..1"],
        vec!["study", "--radius-mult", "0.5", "--levels", "0"],
        vec!["study", "--jump-domain", "everywhere", "--levels", "0"],
    ] {
        let out = cutfem(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains("status=error kind="), "{args:?}: {err}");
    }
}

#[test]
fn geometry_dump_lists_points() {
    let out = cutfem(&["geometry", "--level", "0", "--q", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() > 16);
}
