use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_alignperc"));
    c.env_remove("ALIGNPERC_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn alignperc")
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

fn validate(schema: &str, doc: &Value) {
    let text = std::fs::read_to_string(repo().join("schemas").join(schema)).unwrap();
    let schema_json: Value = serde_json::from_str(&text).unwrap();
    let v = jsonschema::validator_for(&schema_json).unwrap();
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}");
}

/// Each CSV record as a JSON object of raw strings, checked against the
/// row schema and its declared column order.
fn validate_csv(schema: &str, bytes: &[u8]) {
    let text = std::fs::read_to_string(repo().join("schemas").join(schema)).unwrap();
    let schema_json: Value = serde_json::from_str(&text).unwrap();
    let mut rdr = csv::Reader::from_reader(bytes);
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let declared: Vec<String> = serde_json::from_value(schema_json["x-columns"].clone()).unwrap();
    assert_eq!(header, declared, "{schema} column order");
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let obj: serde_json::Map<String, Value> =
            header.iter().cloned().zip(rec.iter().map(|c| Value::String(c.into()))).collect();
        validate(schema, &Value::Object(obj));
        rows += 1;
    }
    assert!(rows > 0, "{schema}: no rows");
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn oracle_outputs_reference_values() {
    let v = stdout_json(&run(&["oracle", "--kind", "incident", "--p", "0.5", "--lambda", "0.5"]));
    assert_eq!(v["probability"], 0.84375);
    validate("oracle.schema.json", &v);
    let g = stdout_json(&run(&["oracle", "--kind", "gap", "--p", "0.5", "--lambda", "0.5"]));
    assert_eq!(g["gap"], -0.00390625);
    validate("oracle.schema.json", &g);
}

#[test]
fn pattern_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    let pattern = serde_json::json!({
        "d": 2,
        "edges": [
            {"site": [0, 0], "axis": 0, "state": "open"},
            {"site": [-1, 0], "axis": 0, "state": "open"},
            {"site": [0, 0], "axis": 1, "state": "closed"},
            {"site": [0, -1], "axis": 1, "state": "closed"}
        ]
    });
    validate("pattern.schema.json", &pattern);
    std::fs::write(&path, pattern.to_string()).unwrap();
    let v = stdout_json(&run(&["oracle", "--kind", "pattern", "--pattern", path.to_str().unwrap(), "--p", "0.5", "--lambda", "0.5"]));
    assert_eq!(v["probability"], 0.15625);
    validate("oracle.schema.json", &v);
}

#[test]
fn exit_codes() {
    // bad parameter
    assert_eq!(code(&run(&["oracle", "--p", "0", "--lambda", "0.5"])), 2);
    assert_eq!(code(&run(&["simulate", "--p", "1.5", "--lambda", "0.5"])), 2);
    // argument parsing
    assert_eq!(code(&run(&["simulate", "--bogus"])), 2);
    assert_eq!(code(&run(&["phase-diagram"])), 2);
    // size refusal
    assert_eq!(code(&run(&["lambda-c", "--p", "0.5", "--size", "100000", "--memory-budget", "1000000"])), 3);
    // missing file
    assert_eq!(code(&run(&["replay", "/nonexistent/x.manifest.json"])), 1);
}

#[test]
fn simulate_output_validates_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let o = run(&["simulate", "--d", "2", "--size", "6", "--p", "0.4", "--lambda", "0.6", "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    validate("sample.schema.json", &report);
    let manifest = dir.path().join("s.json.manifest.json");
    let m: Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    validate("manifest.schema.json", &m);
    let r = run(&["replay", manifest.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    // one-choice variant prints to stdout
    let v = stdout_json(&run(&["simulate", "--size", "6", "--p", "0.4", "--one-choice"]));
    validate("sample.schema.json", &v);
    assert_eq!(v["model"], "one_choice");
}

#[test]
fn tampered_output_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = run(&["covdecay", "--l", "1", "--dist", "4", "--p", "0.5", "--lambda", "0.5", "--n", "500", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let mut bytes = std::fs::read(&out).unwrap();
    bytes.push(b'\n');
    std::fs::write(&out, bytes).unwrap();
    let r = run(&["replay", dir.path().join("c.csv.manifest.json").to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains("c.csv"));
}

#[test]
fn missing_output_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    assert!(run(&["hex", "--p", "0.5", "--extent", "8", "--n", "20", "--out", out.to_str().unwrap()]).status.success());
    std::fs::remove_file(&out).unwrap();
    let r = run(&["replay", dir.path().join("h.csv.manifest.json").to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains("h.csv"));
}

#[test]
fn shipped_manifests_replay() {
    let dir = repo().join("manifests");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if !path.to_string_lossy().ends_with(".manifest.json") {
            continue;
        }
        let m: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        validate("manifest.schema.json", &m);
        let r = run(&["replay", path.to_str().unwrap()]);
        assert!(r.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&r.stderr));
        seen += 1;
    }
    assert!(seen >= 6, "only {seen} manifests shipped");
}

#[test]
fn shipped_outputs_validate() {
    let dir = repo().join("manifests");
    let read = |name: &str| std::fs::read(dir.join(name)).unwrap();
    validate("sample.schema.json", &serde_json::from_slice(&read("simulate.json")).unwrap());
    validate("qk.schema.json", &serde_json::from_slice(&read("qk.json")).unwrap());
    validate_csv("covdecay-row.schema.json", &read("covdecay.csv"));
    validate_csv("hex-row.schema.json", &read("hex.csv"));
    validate_csv("phase-row.schema.json", &read("lambda_c.csv"));
    validate_csv("phase-row.schema.json", &read("phase.csv"));
}

#[test]
fn renorm_reports_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("qk.json");
    let o = run(&[
        "renorm", "qk", "--family", "circuit_absent", "--l0", "4", "--levels", "0,1", "--p", "0.6", "--lambda", "0.98",
        "--n", "300", "--margin", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    validate("qk.schema.json", &serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap());

    let check = run(&["renorm", "check", "--in", out.to_str().unwrap()]);
    // 0/300 cannot resolve L^-4 at level 1, so the inductive verdict fails
    assert_eq!(code(&check), 4);
    validate("renorm-check.schema.json", &serde_json::from_slice(&check.stdout).unwrap());

    let l0 = stdout_json(&run(&["renorm", "trigger-lambda0", "--p", "0.5", "--l0", "4"]));
    validate("trigger-lambda0.schema.json", &l0);
    assert!(l0["one_minus_lambda0"].as_f64().unwrap() > 0.0);

    let p0 = stdout_json(&run(&["renorm", "trigger-p0", "--lambda", "0.25", "--d", "2", "--l0", "4", "--psi-n", "5000"]));
    validate("trigger-p0.schema.json", &p0);

    let hl = stdout_json(&run(&["renorm", "halfline", "--l0", "4", "--kmax", "2"]));
    validate("halfline.schema.json", &hl);
    assert_eq!(hl["coverage_ok"], true);
}

fn phase_bytes(threads: &str, dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let out = dir.join(format!("t{threads}.csv"));
    let o = bin()
        .env("ALIGNPERC_THREADS", threads)
        .args(["phase-diagram", "--grid", "0.5,1.0", "--size", "24", "--n", "30", "--replicates", "2", "--seed", "3"])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (std::fs::read(&out).unwrap(), std::fs::read(out.with_extension("svg")).unwrap())
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(phase_bytes("1", dir.path()), phase_bytes("8", dir.path()));
    let sim = |t: &str| {
        bin()
            .env("ALIGNPERC_THREADS", t)
            .args(["covdecay", "--l", "1", "--dist", "4", "--p", "0.3", "--n", "3000", "--seed", "5"])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(sim("1"), sim("8"));
}
