//! End-to-end CLI checks: report formats, `--out` emission, and the exit-code
//! contract (2 for domain/config errors, 3 for numerical/oracle failures).

use std::process::{Command, Output};

fn bridgelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bridgelab"))
        .args(args)
        .output()
        .expect("spawn bridgelab")
}

fn stdout_json(args: &[&str]) -> serde_json::Value {
    let out = bridgelab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{args:?}: invalid JSON ({e})"))
}

#[test]
fn json_reports_carry_version_and_config_echo() {
    let v = stdout_json(&["kernel-eval", "--kernel", "q", "--c", "0.8", "--s", "0.3", "--t", "0.7"]);
    assert!(v["version"].as_str().unwrap().starts_with("bridgelab-"));
    assert_eq!(v["config"]["subcommand"], "kernel-eval");
    assert_eq!(v["config"]["params"]["c"], "0.8");
    let data = &v["data"];
    assert!(data["value"].is_f64());
    assert!(data["oracle_value"].is_f64());
    assert!(data["abs_deviation"].as_f64().unwrap() < 1e-9);
}

#[test]
fn kernel_eval_c1_is_exact() {
    let v = stdout_json(&["kernel-eval", "--kernel", "q", "--c", "1", "--s", "0.2", "--t", "0.9"]);
    assert_eq!(v["data"]["value"].as_f64().unwrap(), -1.0);
}

#[test]
fn sample_csv_layout_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.csv");
    let out = bridgelab(&[
        "sample", "--family", "bridge", "--c", "1", "--sampler", "exact", "--paths", "4",
        "--dim", "2", "--seed", "7", "--n", "32", "--eps-min", "1e-2", "--format", "csv",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap();
    assert_eq!(header, "path_id,t,x0,x1");
    let mut rows = 0;
    for line in lines {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 4);
        rows += 1;
    }
    assert_eq!(rows, 4 * 33); // paths × grid nodes
}

#[test]
fn sample_binary_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.bin");
    let out = bridgelab(&[
        "sample", "--family", "power", "--alpha", "1.5", "--sampler", "em", "--paths", "3",
        "--dim", "1", "--seed", "1", "--n", "16", "--eps-min", "1e-2", "--format", "binary",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = std::fs::File::open(&path).unwrap();
    let ens = bridgelab::sampler::read_binary(std::io::BufReader::new(file)).unwrap();
    assert_eq!(ens.dim, 1);
    assert_eq!(ens.n_paths, 3);
    assert_eq!(ens.values.len(), 3 * 17);
    assert!(ens.values.iter().all(|v| v.is_finite()));
}

#[test]
fn girsanov_csv_format() {
    let out = bridgelab(&[
        "girsanov", "--c-target", "0.9", "--paths", "50", "--n", "128", "--eps-min", "1e-4",
        "--seed", "2", "--format", "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "t,mean,se,median,q05,q95,mass_collapse");
    assert_eq!(lines.count(), 4);
}

#[test]
fn domain_and_config_errors_exit_2() {
    let cases: &[&[&str]] = &[
        // c out of domain
        &["kernel-eval", "--kernel", "q", "--c", "-1", "--s", "0.3", "--t", "0.7"],
        // t outside [0, 1)
        &["kernel-eval", "--kernel", "cov", "--c", "0.8", "--s", "0.3", "--t", "1.0"],
        // alpha ≤ 1 rejected by the family constructor
        &["sample", "--family", "power", "--alpha", "1", "--paths", "2", "--n", "16"],
        // perturbed growth constraint κ² > (1−2δ)/4
        &["perturbed", "--delta", "0.25", "--kappa", "0.9", "--paths", "2", "--n", "128", "--eps-min", "1e-4"],
        // qc-trend inside the c = 1/2 band
        &["qc-trend", "--c", "0.5", "--eps-list", "1e-2,1e-3,1e-4"],
        // girsanov t-list off the grid
        &["girsanov", "--c-target", "0.8", "--paths", "2", "--n", "100", "--eps-min", "1e-3", "--t-list", "0.123"],
    ];
    for args in cases {
        let out = bridgelab(args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: expected exit 2, got {:?}; stderr: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stderr.is_empty(), "{args:?}: silent failure");
    }
}

#[test]
fn unknown_flags_exit_nonzero() {
    let out = bridgelab(&["kernel-eval", "--no-such-flag"]);
    assert!(!out.status.success());
}

#[test]
fn every_json_subcommand_emits_valid_reports() {
    let cases: &[&[&str]] = &[
        &["aii-check", "--family", "bridge", "--c", "0.75", "--t-list", "0.25,0.5,0.75"],
        &["cm-check", "--op", "membership", "--c", "0.75", "--n", "512", "--eps-min", "1e-5",
          "--eps-list", "1e-1,1e-2,1e-3,1e-4"],
        &["cm-check", "--op", "subhalf", "--c", "0.4", "--n", "512", "--eps-min", "1e-5",
          "--eps-list", "1e-1,1e-2,1e-3,1e-4"],
        &["cm-check", "--op", "tail", "--h", "bridge", "--n", "4096", "--eps-min", "1e-5"],
        &["fh-diagnose", "--c", "1.2", "--n-list", "64,128,256"],
        &["perturbed", "--paths", "100", "--n", "128", "--eps-min", "1e-4", "--seed", "3"],
    ];
    for args in cases {
        let v = stdout_json(args);
        assert!(v["data"].is_object() || v["data"].is_array(), "{args:?}: {v}");
    }
}
