use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use ebitflow::entanglement::binary_entropy;
use ebitflow::harness::io::StateFile;
use ebitflow::protocol::equality_witness;

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebitflow")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn fixture(name: &str) -> String {
    manifest(&format!("fixtures/{name}")).display().to_string()
}

fn schema(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(manifest(&format!("schemas/{name}"))).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(validator: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn entropy_of_bell_fixture() {
    let v = run_ok(&["entropy", &fixture("bell.json")]);
    assert!((v["entropy"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["subsystems"], serde_json::json!(["A"]));
    let whole = run_ok(&["entropy", &fixture("bell.json"), "--of", "A,B"]);
    assert!(whole["entropy"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn schmidt_of_bell_fixture() {
    let v = run_ok(&["schmidt", &fixture("bell.json"), "--cut", "A|B"]);
    let coeffs: Vec<f64> = v["coefficients"].as_array().unwrap().iter().map(|c| c.as_f64().unwrap()).collect();
    assert_eq!(coeffs.len(), 2);
    for c in coeffs {
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }
}

#[test]
fn eof_of_werner_fixture() {
    // 0.9·Φ⁺ + 0.1·I/4 has concurrence (3·0.9 − 1)/2.
    let c: f64 = 0.85;
    let expected = binary_entropy((1.0 + (1.0 - c * c).sqrt()) / 2.0);
    let v = run_ok(&["eof", &fixture("werner.json"), "--cut", "A", "--method", "both", "--restarts", "4"]);
    let closed = v["closed_form"]["value"].as_f64().unwrap();
    let var = v["variational"]["value"].as_f64().unwrap();
    assert!((closed - expected).abs() < 1e-12, "{closed} vs {expected}");
    assert!((var - closed).abs() <= 1e-3);
    assert!(var >= closed - 1e-9);
    assert!(v["variational"]["decomposition"].is_null());

    let v = run_ok(&["eof", &fixture("werner.json"), "--cut", "A", "--method", "variational", "--decomposition"]);
    assert!(v["closed_form"].is_null());
    assert!(!v["variational"]["decomposition"]["members"].as_array().unwrap().is_empty());
}

#[test]
fn witness_trace() {
    let v = run_ok(&["witness"]);
    let e: Vec<f64> = v["steps"].as_array().unwrap().iter().map(|s| s["e"].as_f64().unwrap()).collect();
    assert_eq!(e.len(), 4);
    assert!((e[1] - 1.0).abs() < 1e-10 && (e[3] - 2.0).abs() < 1e-10);
    let (trace, _) = equality_witness().unwrap();
    assert_eq!(v, serde_json::to_value(&trace).unwrap());
}

#[test]
fn exit_codes_per_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    };
    let malformed = write("malformed.json", "{\"kind\": \"pure\", ");
    let unnormalized =
        write("unnormalized.json", r#"{"kind":"pure","layout":{"labels":["A"],"dims":[2]},"amplitudes":[[1,0],[1,0]]}"#);
    let missing = dir.path().join("missing.json").display().to_string();

    assert_eq!(code(&["entropy", &missing]), 1);
    assert_eq!(code(&["entropy", &malformed]), 5);
    assert_eq!(code(&["entropy", &unnormalized]), 3);
    assert_eq!(code(&["schmidt", &fixture("werner.json"), "--cut", "A"]), 3);
    assert_eq!(code(&["schmidt", &fixture("bell.json"), "--cut", "Q"]), 2);
    assert_eq!(code(&["verify", "--theorem", "3", "--trials", "1"]), 2);
    assert_eq!(code(&["verify", "--theorem", "1", "--trials", "0"]), 2);
    assert_eq!(code(&["verify", "--theorem", "1", "--trials", "2"]), 0);
    // Exactly certified equalities carry rounding noise far above this slack.
    assert_eq!(code(&["verify", "--theorem", "1", "--trials", "2", "--tol", "1e-300"]), 4);
}

#[test]
fn reports_validate_against_schema() {
    let validator = schema("report.schema.json");
    for args in [
        vec!["verify", "--theorem", "1", "--trials", "3", "--seed", "1"],
        vec!["verify", "--theorem", "2", "--trials", "1", "--restarts", "1", "--max-ensemble", "9"],
        vec!["verify", "--theorem", "3", "--trials", "1", "--channel", "amplitude_damping:0.3", "--restarts", "1", "--max-ensemble", "16"],
        vec!["verify", "--theorem", "1", "--trials", "1", "--identity"],
    ] {
        assert_valid(&validator, &run_ok(&args));
    }
}

#[test]
fn state_files_validate_against_schema() {
    let validator = schema("state.schema.json");
    for name in ["bell.json", "werner.json"] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        assert_valid(&validator, &serde_json::from_str(&text).unwrap());
    }
    let (_, psi) = equality_witness().unwrap();
    for file in [StateFile::from(psi.clone()), StateFile::from(psi.to_density())] {
        assert_valid(&validator, &serde_json::to_value(&file).unwrap());
    }
}

#[test]
fn csv_and_json_files_carry_the_same_margins() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("r.json");
    let csv_path = dir.path().join("r.csv");
    let base = ["verify", "--theorem", "1", "--trials", "5", "--seed", "3"];
    let out = run(&[&base[..], &["--out", json_path.to_str().unwrap()]].concat());
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let out = run(&[&base[..], &["--format", "csv", "--out", csv_path.to_str().unwrap()]].concat());
    assert!(out.status.success());

    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let from_json: Vec<(String, f64)> = report["trials"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|t| t["margins"].as_array().unwrap().clone())
        .map(|m| (m["name"].as_str().unwrap().to_string(), m["value"].as_f64().unwrap()))
        .collect();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "trial,seed,e1,e2,e3,e4,margin,kind,value");
    let from_csv: Vec<(String, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[6].to_string(), f[8].parse().unwrap())
        })
        .collect();
    assert_eq!(from_json, from_csv);
}

#[test]
fn seed_falls_back_to_environment() {
    let margins = |out: Output| {
        assert!(out.status.success());
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v["trials"].clone()
    };
    let bin = env!("CARGO_BIN_EXE_ebitflow");
    let from_env = Command::new(bin)
        .args(["verify", "--theorem", "1", "--trials", "3"])
        .env("EBITFLOW_SEED", "19")
        .output()
        .unwrap();
    let from_flag = run(&["verify", "--theorem", "1", "--trials", "3", "--seed", "19"]);
    let default = Command::new(bin)
        .args(["verify", "--theorem", "1", "--trials", "3"])
        .env_remove("EBITFLOW_SEED")
        .output()
        .unwrap();
    let a = margins(from_env);
    assert_eq!(a, margins(from_flag));
    assert_ne!(a, margins(default));
}
