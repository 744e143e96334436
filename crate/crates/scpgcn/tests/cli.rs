use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scpgcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scpgcn")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = scpgcn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FAST: &[&str] = &["--epochs", "2", "--widths", "8,6,4"];

fn generate(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["generate", "--out", s(&data), "--n", "12", "--per-class", "6", "--communities", "3", "--seed", "7"]);
    data.join("manifest.json")
}

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|a| a.to_string()).collect()
}

fn run_ok(args: &[String]) -> String {
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn generate_then_evaluate_writes_a_report_with_every_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let report = dir.path().join("eval.json");
    let stdout = run_ok(&with(
        &["evaluate", "--manifest", s(&manifest), "--variant", "scp-gcn", "--repeats", "3", "--out", s(&report)],
        FAST,
    ));
    assert!(stdout.starts_with("resolved config:"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["repeats"], 3);
    assert_eq!(json["accuracy"].as_array().unwrap().len(), 3);
    assert_eq!(json["variant"], "SCP-GCN");
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn ablate_emits_eight_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let out = dir.path().join("ablate.json");
    run_ok(&with(&["ablate", "--manifest", s(&manifest), "--repeats", "1", "--out", s(&out)], FAST));
    let csv = fs::read_to_string(dir.path().join("ablate.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    let names: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        ["GCN", "CP-GCN", "S-GCN", "SCP-GCN", "SCP-GCN-fMRI", "SCP-GCN-DTI", "SCP-GCN-fMRI-DTI", "SCP-GCN"]
    );
}

/// Runs `args` twice into two directories and compares every output file.
fn assert_deterministic(dir: &Path, manifest: &Path, make: impl Fn(&Path) -> Vec<String>) {
    let a = dir.join("a");
    let b = dir.join("b");
    for d in [&a, &b] {
        fs::create_dir_all(d).unwrap();
        let mut args = make(d);
        for arg in &mut args {
            *arg = arg.replace("{manifest}", s(manifest));
        }
        run_ok(&args);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(!names.is_empty());
    for p in names {
        if p.is_dir() {
            for inner in fs::read_dir(&p).unwrap() {
                let q = inner.unwrap().path();
                let twin = b.join(p.file_name().unwrap()).join(q.file_name().unwrap());
                assert_eq!(fs::read(&q).unwrap(), fs::read(&twin).unwrap(), "{}", q.display());
            }
        } else {
            let twin = b.join(p.file_name().unwrap());
            assert_eq!(fs::read(&p).unwrap(), fs::read(&twin).unwrap(), "{}", p.display());
        }
    }
}

#[test]
fn every_subcommand_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let d = |name: &str| dir.path().join(name);
    assert_deterministic(&d("gen"), &manifest, |o| {
        ["generate", "--out", s(&o.join("data")), "--n", "10", "--per-class", "3", "--seed", "3"]
            .map(String::from)
            .to_vec()
    });
    assert_deterministic(&d("cluster"), &manifest, |o| {
        ["cluster", "--manifest", "{manifest}", "--communities", "3", "--out", s(&o.join("m.json"))]
            .map(String::from)
            .to_vec()
    });
    assert_deterministic(&d("train"), &manifest, |o| with(&["train", "--manifest", "{manifest}", "--out", s(o)], FAST));
    ok(&with(&["train", "--manifest", s(&manifest), "--out", s(&d("model"))], FAST)
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    let model = d("model").join("model.json");
    assert_deterministic(&d("embed"), &manifest, |o| {
        ["embed", "--manifest", "{manifest}", "--model", s(&model), "--out", s(&o.join("g.csv"))]
            .map(String::from)
            .to_vec()
    });
    assert_deterministic(&d("evaluate"), &manifest, |o| {
        with(&["evaluate", "--manifest", "{manifest}", "--repeats", "2", "--out", s(&o.join("r.json"))], FAST)
    });
    assert_deterministic(&d("grid"), &manifest, |o| {
        with(
            &[
                "gridsearch",
                "--manifest",
                "{manifest}",
                "--alpha-grid",
                "0.1",
                "--beta-grid",
                "0.01,1",
                "--communities-grid",
                "2,3",
                "--folds",
                "2",
                "--out",
                s(&o.join("g.json")),
            ],
            FAST,
        )
    });
    assert_deterministic(&d("ablate"), &manifest, |o| {
        with(&["ablate", "--manifest", "{manifest}", "--repeats", "1", "--out", s(&o.join("a.json"))], FAST)
    });
}

#[test]
fn parallel_jobs_match_serial_results() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let serial = dir.path().join("serial.json");
    let parallel = dir.path().join("parallel.json");
    for (out, jobs) in [(&serial, "1"), (&parallel, "3")] {
        run_ok(&with(
            &["evaluate", "--manifest", s(&manifest), "--repeats", "3", "--jobs", jobs, "--out", s(out)],
            FAST,
        ));
    }
    assert_eq!(fs::read(&serial).unwrap(), fs::read(&parallel).unwrap());
    for (name, jobs) in [("gs.json", "1"), ("gp.json", "2")] {
        run_ok(&with(
            &[
                "gridsearch",
                "--manifest",
                s(&manifest),
                "--alpha-grid",
                "0.1",
                "--beta-grid",
                "0.01",
                "--communities-grid",
                "2,3,4",
                "--folds",
                "2",
                "--jobs",
                jobs,
                "--out",
                s(&dir.path().join(name)),
            ],
            FAST,
        ));
    }
    assert_eq!(fs::read(dir.path().join("gs.json")).unwrap(), fs::read(dir.path().join("gp.json")).unwrap());
}

#[test]
fn gridsearch_writes_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let out = dir.path().join("grid.json");
    let stdout = run_ok(&with(
        &[
            "gridsearch",
            "--manifest",
            s(&manifest),
            "--alpha-grid",
            "0.1",
            "--beta-grid",
            "0.01",
            "--communities-grid",
            "2,3",
            "--folds",
            "2",
            "--out",
            s(&out),
        ],
        FAST,
    ));
    assert!(stdout.contains("best alpha"));
    let table = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "alpha,beta,communities,fold,accuracy,f1");
    assert_eq!(table.lines().count(), 1 + 2 * 2);
    let summary = fs::read_to_string(dir.path().join("grid_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
}

#[test]
fn cluster_writes_membership_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let out = dir.path().join("m.json");
    ok(&["cluster", "--manifest", s(&manifest), "--communities", "3", "--out", s(&out)]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let rows = json.as_array().unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[0]["C"], 3);
    assert_eq!(rows[0]["membership"].as_array().unwrap().len(), 12);
}

#[test]
fn train_then_embed() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let out = dir.path().join("model");
    run_ok(&with(&["train", "--manifest", s(&manifest), "--out", s(&out)], FAST));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let g = dir.path().join("g.csv");
    ok(&["embed", "--manifest", s(&manifest), "--model", s(&out.join("model.json")), "--out", s(&g)]);
    let csv = fs::read_to_string(&g).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 1 + 12 * 4);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"alpha": 0.5, "beta": 0.25, "epochs": 2, "widths": {"hidden1": 8, "hidden2": 6, "embedding": 4}}"#,
    )
    .unwrap();
    let stdout = ok(&[
        "train",
        "--manifest",
        s(&manifest),
        "--config",
        s(&cfg),
        "--beta",
        "0.75",
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(stdout.contains("\"alpha\": 0.5"), "{stdout}");
    assert!(stdout.contains("\"beta\": 0.75"), "{stdout}");
    assert!(stdout.contains("\"margin\": 0.5"), "{stdout}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(scpgcn(&["evaluate", "--bogus"]).status.code(), Some(2));
    assert_eq!(scpgcn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        scpgcn(&["evaluate", "--manifest", "/nonexistent/manifest.json", "--out", "/tmp/x.json"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let out = dir.path().join("r.json");
    for bad in [
        vec!["--variant", "xyz"],
        vec!["--lr", "-1"],
        vec!["--variant", "gcn", "--structure-view", "functional"],
        vec!["--repeats", "0"],
    ] {
        let args = with(&["evaluate", "--manifest", s(&manifest), "--out", s(&out)], &bad);
        let code = scpgcn(&args.iter().map(String::as_str).collect::<Vec<_>>()).status.code();
        assert_eq!(code, Some(2), "{bad:?}");
    }
    assert_eq!(scpgcn(&["generate", "--out", s(dir.path()), "--classes", "3"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    // Corrupt one matrix file after generation.
    fs::write(dir.path().join("data").join("subject-000_functional.txt"), "1 2\n").unwrap();
    let out = scpgcn(&["cluster", "--manifest", s(&manifest), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subject-000"));
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let before = fs::read(&manifest).unwrap();
    ok(&["cluster", "--manifest", s(&manifest), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(fs::read(&manifest).unwrap(), before);
}
