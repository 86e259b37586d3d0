use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn shorpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shorpp"))
        .args(args)
        .env_remove("SHORPP_CACHE_DIR")
        .output()
        .expect("run shorpp")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(name: &str, doc: &Value) {
    let validator = jsonschema::validator_for(&schema(name)).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{doc:#}");
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

const BIG_P1: &str = "792281625142643375935439498399";
const BIG_P2: &str = "1267650600228229401496703192987";
const BIG_N: &str = "1004336277661868922213726291608834944951922025824940974527813";

#[test]
fn factor_safe_253() {
    let out = shorpp(&["factor", "--strategy", "safe", "253", "--seed", "7"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "factors 11 23\ncalls=1\n");
}

#[test]
fn factor_safe_five_branch() {
    let out = shorpp(&["factor", "--strategy", "safe", "35"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "factors 5 7\ncalls=0\n");
}

#[test]
fn factor_safe_rejects_non_safe_semiprime() {
    let out = shorpp(&["factor", "--strategy", "safe", "21"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).starts_with("failure NotApplicable\n"));
}

#[test]
fn factor_hex_input() {
    let dec = shorpp(&["factor", "--strategy", "sfa", "253"]);
    let hex = shorpp(&["factor", "--strategy", "sfa", "0xfd"]);
    assert_eq!(code(&hex), 0);
    assert_eq!(stdout(&dec), stdout(&hex));
}

#[test]
fn factor_exit_codes() {
    for (args, expected) in [
        (vec!["factor", "--strategy", "safe", "22"], 1),
        (vec!["factor", "12x"], 1),
        (vec!["factor", "0"], 1),
        (vec!["factor", "--mode", "exact", "91"], 1),
        (vec!["factor", "--strategy", "bogus", "91"], 1),
        (vec!["factor", "97"], 2),
        (vec!["factor", "--strategy", "sfa", "343"], 2),
        (vec!["factor", "--strategy", "improved", "91"], 0),
        (vec!["frobnicate"], 1),
        (vec!["--help"], 0),
        (vec!["--version"], 0),
    ] {
        let out = shorpp(&args);
        assert_eq!(code(&out), expected, "{args:?}");
        if expected == 1 {
            assert!(!out.stderr.is_empty(), "{args:?}");
        }
    }
}

#[test]
fn factor_json_report() {
    for strategy in ["safe", "sfa", "improved"] {
        let out = shorpp(&["factor", "--strategy", strategy, "253", "--format", "json", "--seed", "3"]);
        let doc = json_of(&out);
        assert_valid("factor", &doc);
        assert_eq!(doc["n"], "253");
        if doc["success"] == true {
            assert_eq!(doc["factors"], serde_json::json!(["11", "23"]));
        }
    }
    let failed = json_of(&shorpp(&["factor", "--strategy", "safe", "21", "--format", "json"]));
    assert_valid("factor", &failed);
    assert_eq!(failed["reason"], "NotApplicable");
}

#[test]
fn factor_is_reproducible() {
    let a = shorpp(&["factor", "--strategy", "sfa", "1000000016000000063"]);
    let b = shorpp(&["factor", "--strategy", "sfa", "1000000016000000063"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn factor_above_64_bits() {
    let primes = format!("{BIG_P1},{BIG_P2}");
    for strategy in ["safe", "sfa", "improved"] {
        let out = shorpp(&["factor", "--strategy", strategy, BIG_N, "--oracle-primes", &primes]);
        assert_eq!(code(&out), 0, "{strategy}");
        assert!(stdout(&out).starts_with(&format!("factors {BIG_P1} {BIG_P2}\n")));
    }
    let missing = shorpp(&["factor", "--strategy", "safe", BIG_N]);
    assert_eq!(code(&missing), 1);
    let wrong = shorpp(&["factor", BIG_N, "--oracle-primes", &format!("{BIG_P1},7")]);
    assert_eq!(code(&wrong), 1);
}

#[test]
fn census_253_matches_prediction() {
    let out = shorpp(&["census", "253"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("order,count,predicted"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[1], f[2], "{row}");
    }
    let doc = json_of(&shorpp(&["census", "253", "--format", "json"]));
    assert_valid("census", &doc);
    assert_eq!(doc["matches_prediction"], true);
    assert_eq!(doc["total"], 220);
}

#[test]
fn census_general_modulus() {
    let doc = json_of(&shorpp(&["census", "15", "--format", "json"]));
    assert_valid("census", &doc);
    assert_eq!(doc["total"], 8);
    assert_eq!(doc["safe_semiprime"], false);
    assert_eq!(code(&shorpp(&["census", "2000000"])), 1);
}

#[test]
fn sweep_safe_exact() {
    let out = shorpp(&["sweep-safe", "--bound", "1000", "--mode", "exact"]);
    assert_eq!(code(&out), 0);
    let doc = json_of(&out);
    assert_valid("sweep-safe", &doc);
    assert_eq!(doc["safe_strategy_success"], doc["safe_strategy_predicted"]);
    assert_eq!(doc["safe_strategy_not_better"], 0);
}

#[test]
fn sweep_safe_sampled() {
    let args = ["sweep-safe", "--bound", "500", "--mode", "sampled", "--trials", "20", "--base", "uniform"];
    let one = shorpp(&[&args[..], &["--workers", "1"]].concat());
    let four = shorpp(&[&args[..], &["--workers", "4"]].concat());
    assert_eq!(one.stdout, four.stdout);
    let doc = json_of(&one);
    assert_valid("sweep-safe", &doc);
    assert_eq!(doc["perfect_oracle_success"]["num"], "1");
    assert_eq!(doc["perfect_oracle_success"]["den"], "2");
}

#[test]
fn sweep_composite_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("records.csv");
    let out = shorpp(&["sweep-composite", "--lo", "10", "--hi", "3000", "--log", log.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let doc = json_of(&out);
    assert_valid("sweep-composite", &doc);
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,strategy,outcome,reason,order,d"));
    let universe = doc["universe_size"].as_u64().unwrap();
    assert_eq!(lines.count() as u64, 3 * universe);

    let csv = stdout(&shorpp(&["sweep-composite", "--hi", "3000", "--format", "csv"]));
    assert!(csv.starts_with("strategy,universe_size,successes,failures,failure_fraction\nsfa,"));
    assert_eq!(code(&shorpp(&["sweep-composite", "--lo", "3", "--hi", "100"])), 1);
}

#[test]
fn sweep_composite_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str| {
        let log = dir.path().join(format!("log{workers}.csv"));
        let agg = dir.path().join(format!("agg{workers}.json"));
        let out = shorpp(&[
            "sweep-composite",
            "--hi",
            "200000",
            "--seed",
            "99",
            "--workers",
            workers,
            "--log",
            log.to_str().unwrap(),
            "--output",
            agg.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        (std::fs::read(log).unwrap(), std::fs::read(agg).unwrap())
    };
    assert_eq!(run("1"), run("8"));
}

#[test]
fn safe_primes_with_cache() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_shorpp"))
            .args(["safe-primes", "--bound", "10000", "--format", "json"])
            .env("SHORPP_CACHE_DIR", dir.path())
            .output()
            .unwrap()
    };
    let first = run();
    assert_eq!(code(&first), 0);
    assert!(dir.path().join("safe_primes.bin").exists());
    let second = run();
    assert_eq!(first.stdout, second.stdout);
    let doc = json_of(&first);
    assert_valid("safe-primes", &doc);
    assert_eq!(doc["primes"][0], 5);
    assert_eq!(doc["primes"].as_array().unwrap().len() as u64, doc["count"].as_u64().unwrap());

    let text = stdout(&shorpp(&["safe-primes", "--bound", "60"]));
    assert_eq!(text, "5\n7\n11\n23\n47\n59\n");
}
