//! Process-level checks of the binary: exit codes, report formats.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_curvglue"))
}

#[test]
fn list_prints_six_builtins() {
    let out = bin().arg("list").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    for name in curvglue::scenarios::BUILTIN_NAMES {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn list_with_config_dir() {
    let dir = std::env::temp_dir().join("curvglue-cli-list");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(
        dir.join("strip.scn"),
        "name = flat-strip\nn = 2\nwidth = 0.4\n",
    )
    .unwrap();
    let out = bin()
        .args(["list", "--config-dir", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.contains("flat-strip"));

    // an empty directory adds nothing
    let empty = std::env::temp_dir().join("curvglue-cli-empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = bin()
        .args(["list", "--config-dir", empty.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().lines().count(),
        7
    );
}

#[test]
fn unknown_scenario_exit_code() {
    let out = bin()
        .args([
            "certify",
            "--scenario",
            "doubled-banana",
            "--functional",
            "operator",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn parse_error_exit_code() {
    let path = std::env::temp_dir().join("curvglue-cli-broken.scn");
    std::fs::write(&path, "name = broken\nn = 2\nwidth = 0.4\n[g0]\ng0[1][1] = sin(x1\n")
        .unwrap();
    let out = bin()
        .args([
            "certify",
            "--config",
            path.to_str().unwrap(),
            "--functional",
            "operator",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 5"), "stderr: {err}");
}

#[test]
fn bad_ladder_exit_code() {
    let out = bin()
        .args([
            "certify",
            "--scenario",
            "doubled-disk-2d",
            "--functional",
            "operator",
            "--deltas",
            "0.1,0.2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn profile_csv_shape() {
    let out = bin()
        .args(["profile", "--delta", "0.2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,f,F,FF");
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields[0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(fields[1].parse::<f64>().unwrap(), 1.0);
    // ramp first, then a shallow well: sign pattern of the f column
    let mut saw_negative = false;
    let mut well_floor: f64 = 0.0;
    for line in text.lines().skip(1) {
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let x: f64 = fields[0].parse().unwrap();
        let f: f64 = fields[1].parse().unwrap();
        if f < 0.0 {
            saw_negative = true;
            well_floor = well_floor.min(f);
        }
        if x >= 0.2 {
            assert!(f.abs() < 1e-12, "tail not flat at {x}: {f}");
        }
    }
    assert!(saw_negative);
    assert!(well_floor >= -0.2 * 0.2, "well deeper than the bound");
    // certification appended as comments
    assert!(text.contains("# integral ="));
    assert!(text.contains("# max_violation ="));
}

#[test]
fn profile_rejects_large_delta() {
    let out = bin().args(["profile", "--delta", "0.6"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certify_fixed_constant_column() {
    let out = bin()
        .args([
            "certify",
            "--scenario",
            "doubled-disk-2d",
            "--functional",
            "operator",
            "--deltas",
            "0.2",
            "--c",
            "4.0",
        ])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let c_field: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    assert_eq!(c_field, 4.0);
}

#[test]
fn kappa_override_smooth_control() {
    let out = bin()
        .args([
            "certify",
            "--scenario",
            "doubled-hemisphere-2d",
            "--functional",
            "operator",
            "--kappa",
            "1",
            "--deltas",
            "0.4,0.2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for row in text.lines().skip(1) {
        let eps: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert!(eps <= 5e-3, "smooth control eps {eps}");
    }
}

#[test]
fn timings_flag_fills_wall_ms() {
    let out = bin()
        .args([
            "certify",
            "--scenario",
            "doubled-disk-2d",
            "--functional",
            "operator",
            "--deltas",
            "0.2",
            "--timings",
        ])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let wall: u128 = row.split(',').nth(9).unwrap().parse().unwrap();
    assert!(wall > 0, "wall_ms not measured: {row}");
}
