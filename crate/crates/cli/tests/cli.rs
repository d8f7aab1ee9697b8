use std::path::Path;
use std::process::Command as Proc;

use paramsim_cli::config::{parse_config_str, Violation};
use paramsim_cli::{run, Command, Invocation};

const DEVICE: &str = r#"
[device]
q1_freq_ghz = 5.8
q2_freq_ghz = 5.0
q1_anharm_mhz = -250.0
q2_anharm_mhz = -250.0
q1_coupling_mhz = 130.0
q2_coupling_mhz = 130.0
coupler_freq_ghz = 7.3
coupler_anharm_mhz = -250.0
flux_bias_phi0 = -0.1
"#;

fn with_output(body: &str) -> String {
    format!("{DEVICE}{body}\n[output]\ndir = \"out\"\n")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_paramsim"))
}

#[test]
fn minimal_config_echoes_device() {
    let cfg = parse_config_str(&with_output(""), Path::new(".")).unwrap();
    assert_eq!(cfg.device.q1_freq_ghz, 5.8);
    assert_eq!(cfg.device.levels, 3);
    let p = cfg.device.params();
    assert!((p.qubits[0].freq - 2.0 * std::f64::consts::PI * 5.8e9).abs() < 1e-3);
    assert!((p.qubits[1].coupling / (2.0 * std::f64::consts::PI) - 130e6).abs() < 1e-6);
    assert_eq!(p.flux_bias, -0.1);
}

#[test]
fn empty_file_lists_every_missing_section() {
    let errs = parse_config_str("", Path::new(".")).unwrap_err().0;
    let missing: Vec<&str> = errs
        .iter()
        .filter_map(|v| match v {
            Violation::MissingSection(s) => Some(s.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(missing, ["device", "output"]);
}

#[test]
fn key_without_unit_suffix_is_unknown() {
    let text = with_output("").replace("q1_freq_ghz = 5.8", "freq = 5.8");
    let errs = parse_config_str(&text, Path::new(".")).unwrap_err().0;
    assert!(errs.iter().any(|v| matches!(v,
        Violation::UnknownKey { key, line: Some(3), hint: Some(h), .. } if key == "freq" && h == "q1_freq_ghz")));
    assert!(errs
        .iter()
        .any(|v| matches!(v, Violation::MissingKey { key, .. } if key == "q1_freq_ghz")));
}

#[test]
fn all_violations_are_collected() {
    let text = with_output(
        "[protocol]\nduration_us = 0\nepsilon0_mhz = \"2.5\"\nmode = \"quantum\"\n[bogus]\nx = 1\n",
    )
    .replace("flux_bias_phi0 = -0.1", "flux_bias_phi0 = 0.7");
    let errs = parse_config_str(&text, Path::new(".")).unwrap_err().0;
    let text: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
    let joined = text.join("\n");
    for needle in [
        "duration_us",
        "epsilon0_mhz",
        "mode",
        "[bogus]",
        "flux_bias_phi0",
    ] {
        assert!(joined.contains(needle), "missing {needle} in\n{joined}");
    }
}

#[test]
fn syntax_errors_carry_a_line() {
    let errs = parse_config_str("[device]\nq1_freq_ghz = = 5\n", Path::new("."))
        .unwrap_err()
        .0;
    assert!(
        matches!(errs[0], Violation::Parse { line: Some(2), .. }),
        "{errs:?}"
    );
}

#[test]
fn referenced_files_must_exist() {
    let text = with_output("[molecule]\ntable = \"nowhere.csv\"\n");
    let errs = parse_config_str(&text, Path::new("/nonexistent"))
        .unwrap_err()
        .0;
    assert!(errs
        .iter()
        .any(|v| matches!(v, Violation::MissingFile { .. })));
}

#[test]
fn couplings_grid_writes_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let grid = "[sweep]\nd1_phi0 = [0.005, 0.01, 0.015, 0.02, 0.025]\nd2_phi0 = [0.005, 0.01, 0.015, 0.02, 0.025]\n";
    let cfg_path = write(dir.path(), "c.toml", &with_output(grid));
    let status = bin()
        .arg("couplings")
        .arg("--config")
        .arg(&cfg_path)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/couplings.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 26);
    assert_eq!(lines[0], Command::Couplings.header().join(","));
    let hash = lines[1].split(',').next().unwrap();
    assert_eq!(hash.len(), 16);
    assert!(lines[1..].iter().all(|l| l.starts_with(hash)));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/couplings.manifest.json")).unwrap(),
    )
    .unwrap();
    let points = manifest["points"].as_array().unwrap();
    assert_eq!(points.len(), 25);
    assert!(points
        .iter()
        .all(|p| p["status"] == "ok" && p["wall_seconds"].as_f64().unwrap() >= 0.0));
    assert_eq!(manifest["config_hash"], hash);
}

#[test]
fn zero_duration_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[protocol]\nduration_us = 0\nepsilon0_mhz = 2.5\ntarget_ay_mhz = 1.0\n";
    let cfg_path = write(dir.path(), "a.toml", &with_output(body));
    let out = bin()
        .arg("anneal")
        .arg("--config")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duration_us"));
}

#[test]
fn missing_config_argument_fails_validation() {
    let out = bin().arg("anneal").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_and_worker_counts_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[protocol]\nduration_us = 1.0\nepsilon0_mhz = 2.5\n[sweep]\nd1_phi0 = [0.01, 0.02, 0.03]\n";
    let text = with_output(body);
    let cfg = parse_config_str(&text, dir.path()).unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in [1, 1, 3].into_iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let inv = Invocation {
            workers,
            ..Default::default()
        };
        run(Command::Couplings, cfg.clone(), inv, &out).unwrap();
        outputs.push(std::fs::read(out.join("couplings.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn config_hash_tracks_content() {
    let dir = tempfile::tempdir().unwrap();
    let a = parse_config_str(&with_output("[sweep]\nd1_phi0 = [0.01]\n"), dir.path()).unwrap();
    let b = parse_config_str(&with_output("[sweep]\nd1_phi0 = [0.02]\n"), dir.path()).unwrap();
    let hash = |cfg, name: &str| {
        let out = dir.path().join(name);
        run(
            Command::Couplings,
            cfg,
            Invocation {
                workers: 1,
                ..Default::default()
            },
            &out,
        )
        .unwrap();
        let csv = std::fs::read_to_string(out.join("couplings.csv")).unwrap();
        csv.lines()
            .nth(1)
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .to_string()
    };
    assert_ne!(hash(a, "a"), hash(b, "b"));
}

#[test]
fn anneal_effective_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[protocol]\nduration_us = 3.5\nepsilon0_mhz = 2.5\ntarget_ay_mhz = 8.0\ntarget_jx_mhz = 0.5\ntarget_jy_mhz = 0.1\n";
    let cfg = parse_config_str(&with_output(body), dir.path()).unwrap();
    let out = dir.path().join("o");
    let r = run(
        Command::Anneal,
        cfg,
        Invocation {
            workers: 1,
            ..Default::default()
        },
        &out,
    )
    .unwrap();
    assert_eq!(r.failed_points, 0);
    let mut rdr = csv::Reader::from_path(out.join("anneal.csv")).unwrap();
    let rec = rdr.records().next().unwrap().unwrap();
    let fid: f64 = rec[11].parse().unwrap();
    assert!(fid > 0.99, "F_T = {fid}");
    assert_eq!(&rec[4], "effective");
}

#[test]
fn failed_sweep_points_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    // the middle row asks for couplings beyond the physical flux range
    let table = "# scale_mha_per_mhz = 1\nR_angstrom,Ay_mhz,Jx_mhz,Jy_mhz\n0.4,8.0,0.5,0.1\n0.5,8.0,400.0,0.0\n0.6,5.0,0.8,0.2\n";
    write(dir.path(), "t.csv", table);
    let body = "[protocol]\nduration_us = 2.0\nepsilon0_mhz = 2.5\n[molecule]\ntable = \"t.csv\"\n";
    let cfg_path = write(dir.path(), "s.toml", &with_output(body));
    let out = bin()
        .arg("anneal-sweep")
        .arg("--config")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let csv = std::fs::read_to_string(dir.path().join("out/anneal-sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/anneal-sweep.manifest.json")).unwrap(),
    )
    .unwrap();
    let status: Vec<&str> = manifest["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["status"].as_str().unwrap())
        .collect();
    assert_eq!(status, ["ok", "failed", "ok"]);
    assert!(!manifest["points"][1]["error"].as_str().unwrap().is_empty());
}

#[test]
fn topt_scan_marks_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[protocol]\nduration_us = 1.0\nepsilon0_mhz = 2.5\nmode = \"lindblad\"\ntarget_ay_mhz = 8.0\ntarget_jx_mhz = 0.5\ntarget_jy_mhz = 0.1\n\
                [dissipation]\nq1_t1_us = 60\nq1_t2_us = 40\nq2_t1_us = 60\nq2_t2_us = 40\ncoupler_t1_us = 10\ncoupler_t2_us = 1\n\
                [sweep]\ndurations_us = [0.4, 1.6, 8.0]\n";
    let cfg = parse_config_str(&with_output(body), dir.path()).unwrap();
    let out = dir.path().join("o");
    run(
        Command::ToptScan,
        cfg,
        Invocation {
            workers: 2,
            ..Default::default()
        },
        &out,
    )
    .unwrap();
    let mut rdr = csv::Reader::from_path(out.join("topt-scan.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let best: Vec<&str> = rows.iter().map(|r| &r[6]).collect();
    assert_eq!(best, ["false", "true", "false"]);
}

#[test]
fn shipped_config_parses() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let cfg = paramsim_cli::parse_config(&root).unwrap();
    assert_eq!(cfg.protocol.unwrap().row_r_angstrom, Some(0.74));
}
