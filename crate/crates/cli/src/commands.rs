use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mxm_core::bench::{self, ScalingPoint, Sweep};
use mxm_core::dataset::{load_manifest, parse_atomrefs, split_dataset, target_stats, Dataset, Split};
use mxm_core::model::{featurize, Checkpoint, MxmNet, Sample};
use mxm_core::molecule::parse_extxyz;
use mxm_core::par;
use mxm_core::tensor::Tensor;
use mxm_core::train::{self, metrics};
use mxm_core::verify::{run_suite, SuiteOptions};
use serde_json::json;

use crate::config::{RunConfig, SplitSpec};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.manifest()?;
    let ds = load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))?;
    if ds.is_empty() {
        bail!("manifest {} lists no molecules", path.display());
    }
    Ok(ds)
}

/// Dataset with the configured split and, if given, atom references removed
/// from the target.
fn training_data(cfg: &RunConfig) -> Result<Dataset> {
    let mut ds = load_dataset(cfg)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    ds.target_values(&cfg.train.target, &all)?;
    if let Some(p) = &cfg.atomrefs {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let refs = parse_atomrefs(&text).with_context(|| format!("in {}", p.display()))?;
        ds = ds.with_atomrefs_subtracted(&cfg.train.target, &refs)?;
    }
    Ok(match cfg.split {
        SplitSpec::Fractions(f) => split_dataset(&ds, f, cfg.train.seed)?,
        SplitSpec::All => {
            ds.split = Some(Split {
                train: all,
                val: Vec::new(),
                test: Vec::new(),
                seed: cfg.train.seed,
            });
            ds
        }
    })
}

fn matrix_csv(header: &str, ids: impl Iterator<Item = String>, m: &Tensor, prefix: &str) -> String {
    let cols = m.shape().get(1).copied().unwrap_or(0);
    let mut s = String::from(header);
    for c in 0..cols {
        let _ = write!(s, ",{prefix}{c}");
    }
    s.push('\n');
    for (r, id) in ids.enumerate() {
        s.push_str(&id);
        for v in m.row(r) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// One-line summary of a featurized molecule.
pub fn summary_line(s: &Sample) -> String {
    format!(
        "N={} El={} Eg={} T2={} T1={}",
        s.n_nodes(),
        s.graph.local.len(),
        s.graph.global.len(),
        s.triples.two_hop.len(),
        s.triples.one_hop.len()
    )
}

fn stem(key: &str) -> String {
    Path::new(key)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "molecule".into())
}

pub fn featurize_cmd(cfg: &RunConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let samples = par::try_map(&ds.entries, |e| featurize(&e.molecule, &cfg.model)).context("featurizing molecules")?;
    let root = cfg.out.join("features");
    create_dir(&root)?;
    let mut summary = String::from("index,key,n,e_l,e_g,two_hop,one_hop\n");
    for (i, (e, s)) in ds.entries.iter().zip(&samples).enumerate() {
        let dir = root.join(format!("{i:04}_{}", stem(&e.key)));
        create_dir(&dir)?;
        write(&dir.join("graph.txt"), s.graph.dump())?;
        let edge_ids = |edges: &mxm_core::graph::Edges| {
            edges
                .iter()
                .enumerate()
                .map(|(k, (j, i))| format!("{k},{j},{i}"))
                .collect::<Vec<_>>()
        };
        write(
            &dir.join("rbf_local.csv"),
            matrix_csv(
                "edge,src,dst",
                edge_ids(&s.graph.local).into_iter(),
                &s.rbf_local,
                "rbf",
            ),
        )?;
        write(
            &dir.join("rbf_global.csv"),
            matrix_csv(
                "edge,src,dst",
                edge_ids(&s.graph.global).into_iter(),
                &s.rbf_global,
                "rbf",
            ),
        )?;
        let two = s
            .triples
            .two_hop
            .iter()
            .enumerate()
            .map(|(k, t)| format!("{k},{},{},{}", t.k, t.j, t.i));
        write(
            &dir.join("sbf_two_hop.csv"),
            matrix_csv("triple,k,j,i", two, &s.sbf_two_hop, "sbf"),
        )?;
        let one = s
            .triples
            .one_hop
            .iter()
            .enumerate()
            .map(|(k, t)| format!("{k},{},{},{}", t.j_prime, t.i, t.j));
        write(
            &dir.join("sbf_one_hop.csv"),
            matrix_csv("triple,j_prime,i,j", one, &s.sbf_one_hop, "sbf"),
        )?;
        let _ = writeln!(
            summary,
            "{i},{},{},{},{},{},{}",
            e.key,
            s.n_nodes(),
            s.graph.local.len(),
            s.graph.global.len(),
            s.triples.two_hop.len(),
            s.triples.one_hop.len()
        );
        println!("{} {}", e.key, summary_line(s));
    }
    write(&root.join("summary.csv"), summary)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let ds = training_data(cfg)?;
    let out = train::train(&ds, &cfg.model, &cfg.train)?;
    create_dir(&cfg.out)?;
    let ck_path = cfg.checkpoint_path();
    out.checkpoint.save(&ck_path)?;
    write(&cfg.out.join("report.csv"), out.report.to_csv())?;
    let summary = json!({
        "epochs": out.report.epochs.len(),
        "best_epoch": out.report.best_epoch,
        "final_train_mae": out.report.final_train_mae,
        "checkpoint": ck_path.display().to_string(),
    });
    write(&cfg.out.join("summary.json"), format!("{summary}\n"))?;
    println!("{summary}");
    Ok(())
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<()> {
    let path = cfg.checkpoint_path();
    let ck = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let net = MxmNet::new(ck.config.clone())?;
    let ds = training_data(cfg)?;
    let sigma = target_stats(&ds, &cfg.train.target)?.std;
    let split = ds.split.as_ref().expect("split assigned");
    for (name, idx) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if idx.is_empty() {
            continue;
        }
        let prepared = train::prepare(&ds, idx, &cfg.train.target, &ck.config)?;
        let pred = par::try_map(&prepared.samples, |s| ck.predict(&net, s))?;
        let m = metrics(&pred, &prepared.targets, sigma)?;
        println!(
            "{}",
            json!({"split": name, "n": idx.len(), "mae": m.mae, "std_mae": m.std_mae, "pearson": m.pearson})
        );
    }
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<(String, mxm_core::molecule::Molecule, mxm_core::molecule::Molecule)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let read = |f: &str| -> Result<_> {
        let p = base.join(f);
        let body = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        parse_extxyz(&body).with_context(|| format!("parsing {}", p.display()))
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            bail!("{}: line {}: expected two paths", path.display(), n + 1);
        };
        out.push((format!("{} ~ {}", stem(a), stem(b)), read(a)?, read(b)?));
    }
    Ok(out)
}

/// Returns whether every check passed.
pub fn verify_cmd(cfg: &RunConfig) -> Result<bool> {
    let ds = load_dataset(cfg)?;
    let molecules = ds.entries.into_iter().map(|e| (e.key, e.molecule)).collect();
    let mut opts = SuiteOptions::new(molecules, cfg.model.clone(), cfg.train.seed);
    opts.transforms = cfg.transforms;
    opts.permutations = cfg.permutations;
    opts.random_graphs = cfg.random_graphs;
    if let Some(p) = &cfg.pairs {
        opts.pairs = read_pairs(p)?;
    }
    let checks = run_suite(&opts)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(failed == 0)
}

pub fn bench_cmd(cfg: &RunConfig) -> Result<()> {
    let points = bench::run(&cfg.bench)?;
    create_dir(&cfg.out)?;
    let mut csv = format!("sweep,{}\n", ScalingPoint::CSV_HEADER);
    for (sweep, p) in &points {
        let name = match sweep {
            Sweep::Local => "local",
            Sweep::Global => "global",
        };
        let _ = writeln!(csv, "{name},{}", p.csv_row());
    }
    write(&cfg.out.join("bench.csv"), csv)?;
    let s = bench::slopes(&points);
    println!(
        "{}",
        json!({
            "local_triples_vs_kl": s.local_triples,
            "global_messages_vs_kg": s.global_messages,
            "reference_triples_vs_kg": s.reference_triples,
        })
    );
    Ok(())
}
