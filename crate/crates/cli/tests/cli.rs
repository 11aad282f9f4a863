//! Black-box tests of the `maxsat` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EXAMPLE: &str = "c three-clause example\np cnf 3 3\n1 2 3 0\n1 -3 0\n-1 -2 -3 0\n";

fn maxsat(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxsat"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Every file under `dir`, sorted by relative path.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn example_local_algorithm_and_optimum() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ex.cnf"), EXAMPLE).unwrap();
    let dla = stdout(&maxsat(&["dla", "--cnf", "ex.cnf"], dir.path()));
    assert!(dla.starts_with("# dla cnf=ex.cnf policy=first seed=0\n"), "{dla}");
    assert!(dla.contains("assignment 111\n"), "{dla}");
    assert!(dla.contains("satisfied 2/3\n"), "{dla}");

    let exact = stdout(&maxsat(&["exact", "--cnf", "ex.cnf"], dir.path()));
    assert!(exact.contains("optimum 3\n"), "{exact}");
    let bits = exact.lines().find_map(|l| l.strip_prefix("witness ")).unwrap();
    assert_eq!(bits.len(), 3);

    let random = stdout(&maxsat(
        &["dla", "--cnf", "ex.cnf", "--policy", "random", "--seed", "4"],
        dir.path(),
    ));
    let sat: usize = random
        .lines()
        .find_map(|l| l.strip_prefix("satisfied "))
        .and_then(|s| s.split('/').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(2 * sat >= 3);
}

#[test]
fn generation_and_labels_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let gen = [
            "gen", "--k", "2", "--n", "20", "--m", "120", "--count", "10", "--seed", "7", "--out", out,
        ];
        stdout(&maxsat(&gen, dir.path()));
        stdout(&maxsat(&["label", "--manifest", out], dir.path()));
        snapshot(&dir.path().join(out))
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a.len(), 12, "10 instances, manifest and labels");
    assert_eq!(a, b);
}

#[test]
fn usage_errors_exit_two_and_runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["dla"],
        vec!["gen", "--k", "2", "--n", "5", "--m", "3", "--count", "0", "--out", "x"],
        vec!["exact", "--cnf", "x.cnf", "--bogus"],
        vec!["train", "--manifest", "d", "--model", "gcn", "--out", "m"],
    ] {
        assert_eq!(maxsat(&args, dir.path()).status.code(), Some(2), "{args:?}");
    }
    fs::write(dir.path().join("bad.cnf"), "p cnf 2 1\n1 5 0\n").unwrap();
    for args in [
        vec!["exact", "--cnf", "missing.cnf"],
        vec!["dla", "--cnf", "bad.cnf"],
        vec!["gen", "--k", "4", "--n", "3", "--m", "3", "--count", "1", "--out", "x"],
        vec!["eval", "--ckpt", "none.ckpt", "--manifest", "none"],
    ] {
        let out = maxsat(&args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }
}

#[test]
fn train_eval_and_cross_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout(&maxsat(
        &[
            "gen", "--k", "2", "--n", "6", "--m", "18", "--count", "30", "--seed", "1", "--out", "d",
        ],
        d,
    ));
    let unlabeled = maxsat(&["train", "--manifest", "d", "--model", "nsfg", "--out", "m.ckpt"], d);
    assert_eq!(unlabeled.status.code(), Some(1));
    stdout(&maxsat(&["label", "--manifest", "d"], d));
    let train = [
        "train",
        "--manifest",
        "d",
        "--model",
        "nsfg",
        "--d",
        "8",
        "--T",
        "2",
        "--lr",
        "1e-3",
        "--epochs",
        "3",
        "--seed",
        "5",
        "--out",
    ];
    let first = stdout(&maxsat(&[&train[..], &["m1.ckpt"]].concat(), d));
    assert!(
        first.starts_with("# train manifest=d model=nsfg d=8 lr=1e-3"),
        "{first}"
    );
    stdout(&maxsat(&[&train[..], &["m2.ckpt"]].concat(), d));
    let log = fs::read_to_string(d.join("m1.ckpt.log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert_eq!(log, fs::read_to_string(d.join("m2.ckpt.log.tsv")).unwrap());
    assert_eq!(
        fs::read(d.join("m1.ckpt")).unwrap(),
        fs::read(d.join("m2.ckpt")).unwrap()
    );

    let eval = stdout(&maxsat(&["eval", "--ckpt", "m1.ckpt", "--manifest", "d"], d));
    for name in ["MS-NSFG", "dla", "all-true", "random(0)"] {
        assert!(eval.lines().any(|l| l.starts_with(name)), "{eval}");
    }
    let cross = stdout(&maxsat(
        &[
            "cross",
            "--ckpts",
            "m1.ckpt,m2.ckpt",
            "--manifests",
            "d",
            "--split",
            "all",
            "--out",
            "c.tsv",
        ],
        d,
    ));
    assert!(cross.contains("R2(6,18)"));
    assert_eq!(fs::read_to_string(d.join("c.tsv")).unwrap().lines().count(), 3);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&maxsat(&["--threads", "1", "selftest"], dir.path()));
    assert!(out.lines().filter(|l| l.starts_with("[PASS]")).count() >= 9, "{out}");
    assert!(!out.contains("[FAIL]"));
}
