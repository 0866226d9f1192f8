use std::path::Path;
use std::process::{Command, Output};

use pimlut::cost_model::make_plan;
use pimlut::lut::{compute_sizes, SizeReport};
use pimlut::DeviceConfig;
use serde_json::Value;

fn pimlut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pimlut"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn sizes_csv_round_trips() {
    let out = pimlut(&["sizes", "--b-w", "1", "--b-a", "3", "--p-max", "7"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<SizeReport> = rdr.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 7);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(*r, compute_sizes(1, 3, i + 1, 2));
    }
    assert!((rows[6].column_reduction - 611.06).abs() < 0.01);
    assert!(rows[0].total_reduction < 1.0);
}

#[test]
fn worked_example_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let ops = write(dir.path(), "ops.json", r#"{"w": [[0, 0, 1]], "a": [[3], [0], [2]]}"#);
    let mut checksums = Vec::new();
    for strategy in [
        "naive-mac",
        "packed-dram",
        "packed-buffer",
        "canonical-buffer",
        "slice-stream",
        "auto",
    ] {
        let out = pimlut(&[
            "gemm",
            "--operands",
            &ops,
            "--strategy",
            strategy,
            "--verify",
            "--print-output",
        ]);
        assert!(
            out.status.success(),
            "{strategy}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let v = json(&out);
        assert_eq!(v["verified"], true);
        assert_eq!(v["output"]["data"], serde_json::json!([2]));
        checksums.push(v["output"]["crc32"].as_str().unwrap().to_owned());
    }
    checksums.dedup();
    assert_eq!(checksums.len(), 1);
}

#[test]
fn fixed_seed_gives_identical_reports() {
    let args = [
        "gemm",
        "--m",
        "40",
        "--k",
        "30",
        "--n",
        "9",
        "--seed",
        "17",
        "--strategy",
        "canonical-buffer",
    ];
    let (a, b) = (pimlut(&args), pimlut(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["config"]["seed"], 17);
    let other = pimlut(&[
        "gemm",
        "--m",
        "40",
        "--k",
        "30",
        "--n",
        "9",
        "--seed",
        "18",
        "--strategy",
        "canonical-buffer",
    ]);
    assert_ne!(json(&a)["output"]["crc32"], json(&other)["output"]["crc32"]);
}

#[test]
fn auto_report_embeds_the_plan() {
    let out = pimlut(&[
        "gemm", "--m", "48", "--k", "24", "--n", "6", "--b-w", "2", "--b-a", "2", "--verify",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    let plan = make_plan(48, 24, 6, 2, 2, 2, &DeviceConfig::default()).unwrap();
    assert_eq!(v["plan"]["p_star"], plan.p_star);
    assert_eq!(v["plan"]["strategy"], plan.strategy.to_string());
    match plan.decision_threshold_m {
        Some(t) => assert_eq!(v["plan"]["decision_threshold_m"].as_f64(), Some(t)),
        None => assert!(v["plan"]["decision_threshold_m"].is_null()),
    }
    assert_eq!(v["config"]["strategy"], plan.strategy.to_string());
    assert_eq!(v["config"]["format_version"], 1);
}

#[test]
fn plan_examples() {
    let v = json(&pimlut(&[
        "plan", "--m", "3072", "--k", "768", "--n", "768", "--b-w", "4", "--b-a", "4",
    ]));
    assert_eq!(v["plan"]["p_star"], 3);
    let v = json(&pimlut(&["plan", "--b-w", "1", "--b-a", "3"]));
    assert_eq!(v["plan"]["p_dram"], 8);
    let csv = stdout(&pimlut(&["plan", "--b-w", "1", "--b-a", "3", "--csv"]));
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn zero_buffer_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let dev = write(dir.path(), "dev.json", r#"{"buffer_bytes": 0}"#);
    let out = pimlut(&["plan", "--device", &dev]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("local buffer") && err.contains("0 bytes"), "{err}");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"m": 12, "k": 9, "n": 4, "b_w": 2, "b_a": 2, "strategy": "slice-stream", "p": 3, "k_slices": 2,
            "seed": 5, "tables": "symmetric-signed", "device": {"num_banks": 3}}"#,
    );
    let v = json(&pimlut(&["--config", &cfg, "gemm", "--n", "7", "--verify"]));
    let c = &v["config"];
    assert_eq!(
        (c["m"].as_u64(), c["n"].as_u64(), c["seed"].as_u64()),
        (Some(12), Some(7), Some(5))
    );
    assert_eq!(c["device"]["num_banks"], 3);
    assert_eq!(c["tables"], "symmetric-signed");
    assert_eq!(v["verified"], true);

    let bad = write(dir.path(), "bad.json", r#"{"mm": 1}"#);
    assert_eq!(pimlut(&["--config", &bad, "gemm"]).status.code(), Some(3));
}

#[test]
fn bench_rows_and_statuses() {
    let out = pimlut(&[
        "bench",
        "--strategies",
        "packed-buffer,packed-dram",
        "--b-a",
        "1",
        "--p",
        "1..6",
        "--m",
        "16",
        "--k",
        "12",
        "--n",
        "4",
        "--verify",
    ]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert_eq!(&r[col("status")], "ok");
        assert_eq!(&r[col("verified")], "true");
    }
    for p in 0..6 {
        let t = |row: &csv::StringRecord| row[col("wall_time_s")].parse::<f64>().unwrap();
        assert!(t(&rows[p]) < t(&rows[p + 6]));
    }

    let out = pimlut(&[
        "bench",
        "--strategies",
        "slice-stream",
        "--b-w",
        "2",
        "--b-a",
        "2",
        "--p",
        "5",
        "--k-slices",
        "8,16",
    ]);
    let text = stdout(&out);
    assert!(out.status.success());
    let statuses: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(13).unwrap()).collect();
    assert_eq!(statuses, vec!["ok", "infeasible"]);
}

#[test]
fn empty_sweep_is_header_only() {
    let out = pimlut(&["bench", "--m", ""]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("format_version,point,strategy,"));
}

#[test]
fn selftest_exit_codes() {
    let ok = pimlut(&["selftest"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("5 passed, 0 failed"));
    let bad = pimlut(&["selftest", "--inject-fault", "reordering-entry"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL lookup_equivalence"));
    let v = json(&pimlut(&["selftest", "--json"]));
    assert_eq!(v["passed"], true);
}

#[test]
fn build_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w2a3.lut");
    let p = path.to_str().unwrap();
    let out = pimlut(&[
        "build",
        "--kind",
        "canonical",
        "--b-w",
        "2",
        "--b-a",
        "3",
        "--p",
        "3",
        "--out",
        p,
        "--verify",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let built = json(&out);
    assert_eq!(built["header"]["cols"], 120);

    let inspected = json(&pimlut(&["build", "--inspect", p]));
    assert_eq!(inspected["header"], built["header"]);
    assert_eq!(inspected["checksum_ok"], true);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[40] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert_eq!(pimlut(&["build", "--inspect", p]).status.code(), Some(1));

    let reorder = dir.path().join("r.lut");
    let out = pimlut(&[
        "build",
        "--kind",
        "reordering",
        "--b-w",
        "2",
        "--p",
        "4",
        "--out",
        reorder.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(json(&out)["sidecar"].is_null());
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(pimlut(&["gemm", "--bogus"]).status.code(), Some(3));
    assert_eq!(pimlut(&["gemm", "--strategy", "fastest"]).status.code(), Some(3));
    assert_eq!(pimlut(&["gemm", "--csv"]).status.code(), Some(3));
    assert_eq!(pimlut(&["bench", "--p", "3..1"]).status.code(), Some(3));
    assert_eq!(pimlut(&["--help"]).status.code(), Some(0));
}

#[test]
fn tight_capacity_exits_2() {
    let out = pimlut(&[
        "gemm",
        "--strategy",
        "packed-buffer",
        "--b-w",
        "4",
        "--b-a",
        "4",
        "--p",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("local buffer"));
}
