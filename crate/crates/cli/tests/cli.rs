use std::path::Path;
use std::process::{Command, Output};

use polymer_core::environment::{sample_lattice_environment, Environment};
use polymer_core::variational::{solve, Regime, Solution};

fn polymer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polymer"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn env_sample_is_seeded_json() {
    let a = stdout(&polymer(&[
        "env-sample",
        "--n",
        "20",
        "--alpha",
        "0.5",
        "--seed",
        "7",
    ]));
    let b = stdout(&polymer(&[
        "env-sample",
        "--n",
        "20",
        "--alpha",
        "0.5",
        "--seed",
        "7",
    ]));
    assert_eq!(a, b);
    let env: Environment = serde_json::from_str(&a).unwrap();
    assert_eq!(env, sample_lattice_environment(20, 0.5, 7).unwrap());
    let c = stdout(&polymer(&[
        "env-sample",
        "--n",
        "20",
        "--alpha",
        "0.5",
        "--seed",
        "8",
    ]));
    assert_ne!(a, c);
}

#[test]
fn solve_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("env.json");
    let out = polymer(&[
        "env-limit",
        "--k",
        "30",
        "--alpha",
        "0.7",
        "--seed",
        "3",
        "--out",
        path(&file),
    ]);
    stdout(&out);
    let env: Environment = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    for (beta, regime) in [("1", Regime::FiniteLimit), ("inf", Regime::ZeroTemperature)] {
        let text = stdout(&polymer(&["solve", "--env", path(&file), "--beta", beta]));
        let printed: Solution = serde_json::from_str(&text).unwrap();
        let direct = solve(&env, beta.parse().unwrap(), regime).unwrap();
        assert_eq!(printed, direct);
        assert_eq!(printed.value.to_bits(), direct.value.to_bits());
    }
}

#[test]
fn gibbs_reports_paths_and_tube() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("env.json");
    stdout(&polymer(&[
        "env-sample",
        "--n",
        "16",
        "--alpha",
        "0.5",
        "--seed",
        "1",
        "--out",
        path(&file),
    ]));
    let args = [
        "gibbs",
        "--env",
        path(&file),
        "--beta",
        "1",
        "--sample",
        "3",
        "--seed",
        "2",
        "--tube",
        "0.1",
    ];
    let text = stdout(&polymer(&args));
    assert_eq!(text, stdout(&polymer(&args)));
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["n"], 16);
    let paths = report["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 3);
    assert_eq!(paths[0].as_array().unwrap().len(), 17);
    let inside = report["tube"]["inside"].as_f64().unwrap();
    let outside = report["tube"]["outside"].as_f64().unwrap();
    assert!((inside + outside - 1.0).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let out = polymer(&[
        "env-sample",
        "--n",
        "20",
        "--alpha",
        "0.5",
        "--seed",
        "7",
        "--bogus",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = polymer(&["env-sample", "--n", "21", "--alpha", "0.5", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(1));
    let out = polymer(&["env-sample", "--n", "20", "--alpha", "2.5", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("env.json");
    stdout(&polymer(&[
        "env-limit",
        "--k",
        "5",
        "--alpha",
        "0.5",
        "--seed",
        "1",
        "--out",
        path(&file),
    ]));
    let out = polymer(&["gibbs", "--env", path(&file), "--beta", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = polymer(&["solve", "--env", path(&file), "--beta=-1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = polymer(&[
        "solve",
        "--env",
        path(&file),
        "--beta",
        "1",
        "--regime",
        "warm",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exp_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let records = dir.path().join("run.jsonl");
    std::fs::write(
        &config,
        format!(
            r#"{{"experiment":"phase-transition","alpha_list":[1.0,0.25],"k_list":[5,20],"replicas":3,"base_seed":4,"output":{:?}}}"#,
            path(&records)
        ),
    )
    .unwrap();
    let report = stdout(&polymer(&[
        "exp",
        "--config",
        path(&config),
        "--threads",
        "1",
    ]));
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["records"], 12);
    let first = std::fs::read(&records).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 12);
    let csv = std::fs::read_to_string(records.with_extension("csv")).unwrap();
    assert!(
        csv.starts_with("experiment,ensemble,alpha,beta,n,k,delta,statistic,count,q25,median,q75")
    );

    // the same run through flags only, into a second file
    let again = dir.path().join("again.jsonl");
    stdout(&polymer(&[
        "exp",
        "--experiment",
        "phase-transition",
        "--alpha-list",
        "1.0,0.25",
        "--k-list",
        "5,20",
        "--replicas",
        "3",
        "--base-seed",
        "4",
        "--output",
        path(&again),
    ]));
    assert_eq!(std::fs::read(&again).unwrap(), first);

    let out = polymer(&[
        "exp",
        "--experiment",
        "localization",
        "--alpha",
        "0.5",
        "--replicas",
        "1",
        "--base-seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
