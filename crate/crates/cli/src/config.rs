//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use mxm_core::bench::BenchConfig;
use mxm_core::graph::LocalRule;
use mxm_core::model::{parse_order, LocalInit, ModelConfig};
use mxm_core::train::{TrainConfig, ValidateOn};

/// Keys whose values are file paths; relative values in a config file are
/// resolved against the file's directory.
const PATH_KEYS: &[&str] = &["manifest", "out", "pairs", "atomrefs", "checkpoint"];

const KEYS: &[&str] = &[
    "manifest",
    "target",
    "atomrefs",
    "split",
    "dl",
    "dg",
    "local_basis_cutoff",
    "global_excludes_local",
    "hidden",
    "layers",
    "residuals",
    "order",
    "local_init",
    "group",
    "lr",
    "epochs",
    "patience",
    "loss",
    "validate_on",
    "ema_decay",
    "seed",
    "out",
    "checkpoint",
    "pairs",
    "transforms",
    "permutations",
    "random_graphs",
    "bench_sizes",
    "bench_density",
    "bench_kl",
    "bench_kg",
    "bench_kl_fixed",
    "bench_kg_fixed",
];

/// How molecules are assigned to splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    Fractions([f64; 3]),
    /// Every molecule in the training split.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub atomrefs: Option<PathBuf>,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub transforms: usize,
    pub permutations: usize,
    pub random_graphs: usize,
    pub bench: BenchConfig,
}

/// Values given on the command line; each replaces the config-file entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub target: Option<String>,
    pub dg: Option<f64>,
    pub dl: Option<String>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, s: Option<String>| {
            if let Some(s) = s {
                v.push((k, s));
            }
        };
        put("seed", self.seed.map(|x| x.to_string()));
        put("target", self.target.clone());
        put("dg", self.dg.map(|x| x.to_string()));
        put("dl", self.dl.clone());
        put("layers", self.layers.map(|x| x.to_string()));
        put("hidden", self.hidden.map(|x| x.to_string()));
        put("lr", self.lr.map(|x| x.to_string()));
        put("epochs", self.epochs.map(|x| x.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("checkpoint", self.checkpoint.as_ref().map(|p| p.display().to_string()));
        v
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, found `{line}`", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            bail!("line {}: unknown key `{k}`", n + 1);
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            bail!("line {}: duplicate key `{k}`", n + 1);
        }
    }
    Ok(map)
}

fn take<T: FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("invalid value `{v}` for `{key}`")),
    }
}

fn take_list<T: FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<Vec<T>>> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| anyhow!("invalid entry `{}` in `{key}`", s.trim()))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some),
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides and validates every field.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut map = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut map = parse_pairs(&text).with_context(|| format!("in config {}", p.display()))?;
                let base = p.parent().unwrap_or(Path::new(""));
                for key in PATH_KEYS {
                    if let Some(v) = map.get_mut(*key) {
                        *v = base.join(&*v).display().to_string();
                    }
                }
                map
            }
            None => BTreeMap::new(),
        };
        for (k, v) in overrides.pairs() {
            map.insert(k.to_string(), v);
        }
        Self::from_map(map)
    }

    pub fn from_map(mut map: BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            bail!("unknown key `{k}`");
        }
        let mut model = ModelConfig::default();
        if let Some(dl) = map.remove("dl") {
            model.local_rule = match dl.as_str() {
                "bonds" => LocalRule::Bonds,
                v => LocalRule::Cutoff(
                    v.parse()
                        .map_err(|_| anyhow!("`dl` must be `bonds` or a cutoff in Å, got `{v}`"))?,
                ),
            };
        }
        if let Some(v) = take(&mut map, "dg")? {
            model.global_cutoff = v;
        }
        if let Some(v) = take(&mut map, "local_basis_cutoff")? {
            model.local_basis_cutoff = v;
        }
        if let Some(v) = take(&mut map, "global_excludes_local")? {
            model.global_excludes_local = v;
        }
        if let Some(v) = take(&mut map, "hidden")? {
            model.hidden = v;
        }
        if let Some(v) = take(&mut map, "layers")? {
            model.n_layers = v;
        }
        if let Some(v) = take(&mut map, "residuals")? {
            model.n_residuals = v;
        }
        if let Some(v) = map.remove("order") {
            model.order = parse_order(&v)?;
        }
        if let Some(v) = map.remove("local_init") {
            model.local_init = match v.as_str() {
                "cross" => LocalInit::Cross,
                "embedding" => LocalInit::Embedding,
                other => bail!("`local_init` must be `cross` or `embedding`, got `{other}`"),
            };
        }
        model.validate()?;

        let mut train = TrainConfig::default();
        if let Some(v) = map.remove("target") {
            train.target = v;
        }
        if let Some(v) = take(&mut map, "group")? {
            train.group = v;
        }
        if let Some(v) = take(&mut map, "lr")? {
            train.lr = v;
        }
        if let Some(v) = take(&mut map, "epochs")? {
            train.epochs = v;
        }
        if let Some(v) = take(&mut map, "patience")? {
            train.patience = v;
        }
        if let Some(v) = take::<String>(&mut map, "loss")? {
            train.loss = v.parse()?;
        }
        if let Some(v) = map.remove("validate_on") {
            train.validate_on = match v.as_str() {
                "val" => ValidateOn::Val,
                "train" => ValidateOn::Train,
                other => bail!("`validate_on` must be `val` or `train`, got `{other}`"),
            };
        }
        if let Some(v) = take(&mut map, "ema_decay")? {
            train.ema_decay = v;
        }
        if let Some(v) = take(&mut map, "seed")? {
            train.seed = v;
        }
        train.validate()?;

        let split = match map.remove("split").as_deref() {
            None => SplitSpec::Fractions([0.8, 0.1, 0.1]),
            Some("all") => SplitSpec::All,
            Some(v) => {
                let f: Vec<f64> = v
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| anyhow!("invalid split fraction `{}`", s.trim()))
                    })
                    .collect::<Result<_>>()?;
                let f: [f64; 3] = f
                    .try_into()
                    .map_err(|_| anyhow!("`split` needs three fractions or `all`, got `{v}`"))?;
                if f.iter().any(|&x| !(x > 0.0)) || f.iter().sum::<f64>() > 1.0 + 1e-12 {
                    bail!("split fractions must be positive with sum <= 1, got `{v}`");
                }
                SplitSpec::Fractions(f)
            }
        };

        let mut bench = BenchConfig {
            seed: train.seed,
            ..BenchConfig::default()
        };
        if let Some(v) = take_list(&mut map, "bench_sizes")? {
            bench.sizes = v;
        }
        if let Some(v) = take(&mut map, "bench_density")? {
            bench.density = v;
        }
        if let Some(v) = take_list(&mut map, "bench_kl")? {
            bench.k_l = v;
        }
        if let Some(v) = take_list(&mut map, "bench_kg")? {
            bench.k_g = v;
        }
        if let Some(v) = take(&mut map, "bench_kl_fixed")? {
            bench.k_l_fixed = v;
        }
        if let Some(v) = take(&mut map, "bench_kg_fixed")? {
            bench.k_g_fixed = v;
        }
        let bad_degree = bench
            .k_l
            .iter()
            .chain(&bench.k_g)
            .chain([&bench.k_l_fixed, &bench.k_g_fixed])
            .any(|&k| !(k > 0.0));
        if !(bench.density > 0.0) || bad_degree || bench.sizes.contains(&0) {
            bail!("bench sizes, density and degrees must be positive");
        }
        if bench.k_l.iter().any(|&k| k >= bench.k_g_fixed) || bench.k_g.iter().any(|&k| k <= bench.k_l_fixed) {
            bail!("bench local degrees must stay below the global ones");
        }

        let cfg = Self {
            manifest: map.remove("manifest").map(PathBuf::from),
            atomrefs: map.remove("atomrefs").map(PathBuf::from),
            split,
            model,
            train,
            out: map
                .remove("out")
                .map_or_else(|| PathBuf::from("mxm-out"), PathBuf::from),
            checkpoint: map.remove("checkpoint").map(PathBuf::from),
            pairs: map.remove("pairs").map(PathBuf::from),
            transforms: take(&mut map, "transforms")?.unwrap_or(10),
            permutations: take(&mut map, "permutations")?.unwrap_or(10),
            random_graphs: take(&mut map, "random_graphs")?.unwrap_or(200),
            bench,
        };
        debug_assert!(map.is_empty(), "unconsumed keys {map:?}");
        Ok(cfg)
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.manifest.as_deref().ok_or_else(|| anyhow!("no `manifest` given"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("checkpoint.mxm"))
    }
}
