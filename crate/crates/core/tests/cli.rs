use std::path::{Path, PathBuf};

use macrodim::cli::{execute, main_with_args, Command, LoadedConfig, Report};

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["macrodim"];
    argv.extend_from_slice(args);
    main_with_args(argv)
}

#[test]
fn percolate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"experiment": "t", "seed": 1, "d": 2, "p": 0.7, "k": 5}"#);
    let out = dir.path().join("out");
    assert_eq!(run(&["percolate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    for f in ["percolate.json", "percolate.txt", "timings.json", "raster.pgm", "survivors.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: Report = serde_json::from_slice(&std::fs::read(out.join("percolate.json")).unwrap()).unwrap();
    assert_eq!(report.seed, 1);
    assert!(report.canonical);
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "k.json",
        r#"{"experiment": "k", "seed": 9, "d_values": [2], "generations": 20, "trials": 20000}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        run(&["kolmogorov", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    }
    assert_eq!(std::fs::read(a.join("kolmogorov.json")).unwrap(), std::fs::read(b.join("kolmogorov.json")).unwrap());
    let c = dir.path().join("c");
    run(&["kolmogorov", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "10"]);
    assert_ne!(std::fs::read(a.join("kolmogorov.json")).unwrap(), std::fs::read(c.join("kolmogorov.json")).unwrap());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad_p = write_config(dir.path(), "p.json", "{\n  \"experiment\": \"t\",\n  \"seed\": 1,\n  \"d\": 2,\n  \"p\": 1.5,\n  \"k\": 3\n}");
    assert_eq!(run(&["percolate", "--config", bad_p.to_str().unwrap(), "--out", out]), 2);
    let unknown = write_config(dir.path(), "u.json", r#"{"experiment": "t", "seed": 1, "colour": 3}"#);
    assert_eq!(run(&["percolate", "--config", unknown.to_str().unwrap(), "--out", out]), 2);
    let missing = write_config(dir.path(), "m.json", r#"{"experiment": "t", "seed": 1}"#);
    assert_eq!(run(&["green", "--config", missing.to_str().unwrap(), "--out", out]), 2);
    assert_eq!(run(&["percolate", "--config", "/nonexistent/config.json", "--out", out]), 2);
    assert_eq!(run(&["explode", "--config", missing.to_str().unwrap()]), 2);
    assert_eq!(run(&["verify", "--config", missing.to_str().unwrap(), "--out", out, "--filter", "no-such-tag"]), 2);
    assert!(!Path::new(out).join("percolate.json").exists());
}

#[test]
fn error_messages_point_at_the_line() {
    let l = LoadedConfig::parse("{\n  \"experiment\": \"t\",\n  \"seed\": 1,\n  \"d\": 9,\n  \"p\": 0.5,\n  \"k\": 3\n}").unwrap();
    let e = execute(Command::Percolate, &l).unwrap_err().to_string();
    assert!(e.contains("line 4") && e.contains("dimension 9"), "{e}");
}

#[test]
fn failing_records_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // Five generations are far from the limit 2/σ², so the check fails.
    let cfg = write_config(
        dir.path(),
        "k.json",
        r#"{"experiment": "k", "seed": 9, "d_values": [2], "generations": 5, "trials": 20000}"#,
    );
    let out = dir.path().join("o");
    assert_eq!(run(&["kolmogorov", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
}

#[test]
fn verify_runs_a_tagged_subset() {
    let l = LoadedConfig::parse(
        r#"{"experiment": "v", "seed": 3, "budget_scale": 0.05, "filter": "percolation"}"#,
    )
    .unwrap();
    let out = execute(Command::Verify, &l).unwrap();
    let ids: Vec<&str> = out.report.records.iter().map(|r| r.id.as_str()).collect();
    assert!(ids.contains(&"one_point_law") && ids.contains(&"coupling_monotonicity"));
    assert!(!ids.contains(&"green_function"));
    assert!(!out.report.canonical);
    assert!(out.report.records.iter().all(|r| r.pass.is_some()));
    assert!(ids.iter().all(|id| out.timings.contains_key(*id)));
}

#[test]
fn verify_rerun_is_identical() {
    let l = LoadedConfig::parse(r#"{"experiment": "v", "seed": 3, "budget_scale": 0.01, "filter": "reproducibility"}"#)
        .unwrap();
    let out = execute(Command::Verify, &l).unwrap();
    assert_eq!(out.report.records.len(), 1);
    assert_eq!(out.report.records[0].pass, Some(true), "{:?}", out.report.records[0]);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        LoadedConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 8);
}
