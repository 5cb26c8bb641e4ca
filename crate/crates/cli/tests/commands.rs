use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn mxm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mxm"))
        .args(args)
        .output()
        .expect("run mxm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn conf(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn json_number(line: &str, key: &str) -> f64 {
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    v[key].as_f64().unwrap_or_else(|| panic!("no `{key}` in {line}"))
}

#[test]
fn featurize_water_summary_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("water.conf");
    fs::write(&cfg, format!("manifest = {}\n", conf("water.manifest"))).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = mxm(&[
        "featurize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    // water with its two O-H bonds: 4 directed bonds, all 6 pairs within 5 Å,
    // and at each O-H edge one path through the other hydrogen
    assert_eq!(stdout(&o).trim(), "molecules/water.xyz N=3 El=4 Eg=6 T2=2 T1=2");
    let o = mxm(&[
        "featurize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert_eq!(ta.len(), 6);
    assert_eq!(ta, tb);
    let graph = fs::read_to_string(a.join("features/0000_water/graph.txt")).unwrap();
    assert_eq!(graph.lines().filter(|l| l.starts_with("L ")).count(), 4);
    let sbf = fs::read_to_string(a.join("features/0000_water/sbf_two_hop.csv")).unwrap();
    assert_eq!(sbf.lines().count(), 3);
    assert_eq!(sbf.lines().next().unwrap().split(',').count(), 4 + 42);
}

#[test]
fn featurize_rejects_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.manifest"), "# nothing\n").unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(&cfg, "manifest = empty.manifest\n").unwrap();
    let o = mxm(&[
        "featurize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no molecules"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(&cfg, "hiden = 3\n").unwrap();
    let o = mxm(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `hiden`"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn train_then_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mxm(&[
        "train",
        "--config",
        &conf("overfit.conf"),
        "--epochs",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let final_mae = json_number(stdout(&o).trim(), "final_train_mae");
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 41);
    assert_eq!(report.lines().next().unwrap(), "epoch,train_loss,val_mae,lr,seconds");
    assert!(out.join("checkpoint.mxm").exists());

    let e1 = mxm(&[
        "eval",
        "--config",
        &conf("overfit.conf"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(e1.status.success(), "{}", String::from_utf8_lossy(&e1.stderr));
    let text = stdout(&e1);
    let line = text.lines().find(|l| l.contains("\"train\"")).unwrap();
    assert!((json_number(line, "mae") - final_mae).abs() <= 1e-10);
    let e2 = mxm(&[
        "eval",
        "--config",
        &conf("overfit.conf"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(e1.stdout, e2.stdout);
}

#[test]
fn seeds_give_distinct_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        let o = mxm(&[
            "train",
            "--config",
            &conf("overfit.conf"),
            "--epochs",
            "5",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        let csv = fs::read_to_string(out.join("report.csv")).unwrap();
        // drop the wall-clock column
        csv.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    let (a, b, a2) = (run("1"), run("2"), run("1"));
    assert_ne!(a, b);
    assert_eq!(a, a2);
}

#[test]
fn train_rejects_unknown_target_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mxm(&[
        "train",
        "--config",
        &conf("overfit.conf"),
        "--target",
        "nope",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    assert!(!out.exists());
}

#[test]
fn eval_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = mxm(&[
        "eval",
        "--config",
        &conf("overfit.conf"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}

#[test]
fn verify_passes_on_fixtures_and_flags_tampering() {
    let o = mxm(&["verify", "--config", &conf("verify.conf")]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS ")).count() >= 10);
    assert!(text.contains("tolerance="));

    let o = mxm(&["verify", "--config", &conf("tampered.conf")]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL ")).collect();
    assert_eq!(failed.len(), 1, "{text}");
    assert!(failed[0].contains("pair equivalence"));
}

#[test]
fn bench_writes_counts_matching_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.conf");
    fs::write(
        &cfg,
        "bench_sizes = 128\nbench_kl = 2, 4\nbench_kg = 8, 16\nbench_kg_fixed = 16\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = mxm(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("reference_triples_vs_kg"));
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let n: u64 = r[col("n")].parse().unwrap();
        let e_l = (r[col("k_l")].parse::<f64>().unwrap() * n as f64).round() as u64;
        let num = |c: &str| r[col(c)].parse::<u64>().unwrap();
        assert_eq!(num("local_step1"), num("two_hop") + e_l);
        assert_eq!(num("local_step2"), num("one_hop") + e_l);
        assert_eq!(num("local_step3"), e_l);
        assert_eq!(num("cross"), 2 * n);
    }
}
