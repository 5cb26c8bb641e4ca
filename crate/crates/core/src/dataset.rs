//! Molecule collections with reproducible splits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::elements;
use crate::error::{Error, Result};
use crate::molecule::{parse_extxyz, Molecule};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// Identity key; split membership depends on it, not on position.
    pub key: String,
    pub molecule: Molecule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub entries: Vec<Entry>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-element reference values, keyed by atomic number.
pub type AtomRefs = BTreeMap<u8, f64>;

impl Dataset {
    pub fn new(entries: Vec<Entry>) -> Self {
        Self { entries, split: None }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn molecule(&self, i: usize) -> &Molecule {
        &self.entries[i].molecule
    }

    /// Values of `prop` for the listed molecules; fails if any is missing.
    pub fn target_values(&self, prop: &str, indices: &[usize]) -> Result<Vec<f64>> {
        indices
            .iter()
            .map(|&i| {
                let e = &self.entries[i];
                e.molecule
                    .target(prop)
                    .ok_or_else(|| Error::invalid(format!("molecule `{}` has no target `{prop}`", e.key)))
            })
            .collect()
    }

    /// Replaces `prop` on every molecule with its atomization value.
    pub fn with_atomrefs_subtracted(&self, prop: &str, refs: &AtomRefs) -> Result<Self> {
        let mut out = self.clone();
        for e in &mut out.entries {
            let v = subtract_atomrefs(&e.molecule, prop, refs)?;
            e.molecule = e.molecule.clone().with_target(prop, v);
        }
        Ok(out)
    }
}

/// Reads a manifest of molecule paths, one per line, relative to the manifest.
///
/// Blank lines and lines starting with `#` are skipped.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let file = base.join(line);
        let body = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let molecule = parse_extxyz(&body).map_err(|e| match e {
            Error::Parse { line, msg } => Error::invalid(format!("{}: line {line}: {msg}", file.display())),
            other => Error::invalid(format!("{}: {other}", file.display())),
        })?;
        entries.push(Entry {
            key: line.to_string(),
            molecule,
        });
    }
    Ok(Dataset::new(entries))
}

/// Shuffles under `seed` and assigns contiguous train/validation/test blocks.
///
/// Molecules are ordered by key before shuffling, so membership does not
/// depend on the order in which the dataset was assembled.
pub fn split_dataset(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    if fractions.iter().any(|&f| !(f > 0.0)) || fractions.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "split fractions {fractions:?} must be positive with sum <= 1"
        )));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ds.entries[a].key.cmp(&ds.entries[b].key));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let count = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let n_train = count(fractions[0]).min(n);
    let n_val = count(fractions[1]).min(n - n_train);
    let n_test = count(fractions[2]).min(n - n_train - n_val);

    let mut out = ds.clone();
    out.split = Some(Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..n_train + n_val + n_test].to_vec(),
        seed,
    });
    Ok(out)
}

/// Target minus the summed per-element references.
pub fn subtract_atomrefs(m: &Molecule, prop: &str, refs: &AtomRefs) -> Result<f64> {
    let target = m
        .target(prop)
        .ok_or_else(|| Error::invalid(format!("molecule has no target `{prop}`")))?;
    let mut total = 0.0;
    for &z in m.atomic_numbers() {
        let r = refs
            .get(&z)
            .ok_or_else(|| Error::MissingAtomRef(elements::symbol(z).map_or_else(|| z.to_string(), str::to_string)))?;
        total += r;
    }
    Ok(target - total)
}

/// Parses `symbol value` lines.
pub fn parse_atomrefs(text: &str) -> Result<AtomRefs> {
    let mut refs = AtomRefs::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let mut toks = line.split_whitespace();
        let (Some(sym), Some(val), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(err(format!("expected `symbol value`, found `{line}`")));
        };
        let z = elements::atomic_number(sym).ok_or_else(|| err(format!("unknown element `{sym}`")))?;
        let v: f64 = val.parse().map_err(|_| err(format!("malformed float `{val}`")))?;
        refs.insert(z, v);
    }
    Ok(refs)
}

/// Mean and population standard deviation of `prop` over the training split.
pub fn target_stats(ds: &Dataset, prop: &str) -> Result<TargetStats> {
    let split = ds
        .split
        .as_ref()
        .ok_or_else(|| Error::invalid("dataset has not been split"))?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let values = ds.target_values(prop, &split.train)?;
    let stats = mean_std(&values);
    if stats.std == 0.0 {
        return Err(Error::ConstantTarget(prop.to_string()));
    }
    Ok(stats)
}

pub(crate) fn mean_std(values: &[f64]) -> TargetStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    TargetStats { mean, std: var.sqrt() }
}
