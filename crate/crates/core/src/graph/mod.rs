//! Two-layer multiplex molecular graphs.
//!
//! The local layer comes from chemical bonds (or a short cutoff) and carries
//! angle information; the global layer comes from a longer cutoff and carries
//! distances only. Both layers are stored as symmetric directed edge lists
//! over the same node set.

mod neighbors;
mod triples;

pub use neighbors::{all_pairs, cell_list, neighbor_search, BRUTE_FORCE_LIMIT};
pub use triples::{count_angles, count_messages, enumerate_angle_triples, AngleTriples, MessageCounts, OneHop, TwoHop};

use std::fmt::Write as _;

use crate::basis::distance;
use crate::elements;
use crate::error::{Error, Result};
use crate::molecule::Molecule;

/// Tolerance added to the summed covalent radii when inferring bonds, in Å.
pub const BOND_TOLERANCE: f64 = 0.3;

/// Directed edges `src[e] → dst[e]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Edges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl Edges {
    pub fn push(&mut self, j: usize, i: usize) {
        self.src.push(j);
        self.dst.push(i);
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    /// Both directions of every unordered pair, sorted by `(j, i)`.
    pub fn from_undirected(pairs: &[(usize, usize)]) -> Self {
        let mut directed: Vec<(usize, usize)> = pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        directed.sort_unstable();
        directed.dedup();
        let mut e = Edges::default();
        for (j, i) in directed {
            e.push(j, i);
        }
        e
    }

    /// Number of outgoing edges per node.
    pub fn degrees(&self, n_nodes: usize) -> Vec<usize> {
        let mut deg = vec![0; n_nodes];
        for &j in &self.src {
            deg[j] += 1;
        }
        deg
    }

    pub fn is_symmetric(&self) -> bool {
        let mut fwd: Vec<(usize, usize)> = self.iter().collect();
        let mut rev: Vec<(usize, usize)> = self.iter().map(|(j, i)| (i, j)).collect();
        fwd.sort_unstable();
        rev.sort_unstable();
        fwd == rev
    }

    pub fn has_self_edges(&self) -> bool {
        self.iter().any(|(j, i)| j == i)
    }
}

/// How the local layer is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalRule {
    Bonds,
    Cutoff(f64),
}

/// Construction rule recorded on each layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Bonds,
    Cutoff(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub local_rule: LocalRule,
    pub global_cutoff: f64,
    /// Drop local-layer pairs from the global layer.
    pub global_excludes_local: bool,
}

impl GraphConfig {
    pub fn new(local_rule: LocalRule, global_cutoff: f64) -> Self {
        Self {
            local_rule,
            global_cutoff,
            global_excludes_local: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexGraph {
    pub n_nodes: usize,
    pub local: Edges,
    pub global: Edges,
    pub local_provenance: Provenance,
    pub global_provenance: Provenance,
}

/// Explicit bonds if present, otherwise pairs closer than the summed covalent
/// radii plus [`BOND_TOLERANCE`].
pub fn derive_bonds(m: &Molecule) -> Result<Vec<(usize, usize)>> {
    if let Some(b) = m.bonds() {
        return Ok(b.to_vec());
    }
    let radii: Vec<f64> = m
        .atomic_numbers()
        .iter()
        .map(|&z| elements::covalent_radius(z).ok_or_else(|| Error::invalid(format!("no covalent radius for Z = {z}"))))
        .collect::<Result<_>>()?;
    let c = m.coords();
    let mut bonds = Vec::new();
    for a in 0..m.len() {
        for b in a + 1..m.len() {
            let d = distance(&c[a], &c[b]);
            if d > 0.0 && d < radii[a] + radii[b] + BOND_TOLERANCE {
                bonds.push((a, b));
            }
        }
    }
    Ok(bonds)
}

pub fn build_multiplex(m: &Molecule, cfg: &GraphConfig) -> Result<MultiplexGraph> {
    if !(cfg.global_cutoff > 0.0) || !cfg.global_cutoff.is_finite() {
        return Err(Error::invalid(format!(
            "global cutoff must be positive, got {}",
            cfg.global_cutoff
        )));
    }
    let (local, local_provenance) = match cfg.local_rule {
        LocalRule::Bonds => (Edges::from_undirected(&derive_bonds(m)?), Provenance::Bonds),
        LocalRule::Cutoff(c) => {
            if !(c < cfg.global_cutoff) {
                return Err(Error::invalid(format!(
                    "local cutoff {c} must be smaller than global cutoff {}",
                    cfg.global_cutoff
                )));
            }
            (neighbor_search(m.coords(), c)?, Provenance::Cutoff(c))
        }
    };
    let mut global = neighbor_search(m.coords(), cfg.global_cutoff)?;
    if cfg.global_excludes_local {
        let local_set: std::collections::HashSet<(usize, usize)> = local.iter().collect();
        let mut kept = Edges::default();
        for (j, i) in global.iter().filter(|p| !local_set.contains(p)) {
            kept.push(j, i);
        }
        global = kept;
    }
    Ok(MultiplexGraph {
        n_nodes: m.len(),
        local,
        global,
        local_provenance,
        global_provenance: Provenance::Cutoff(cfg.global_cutoff),
    })
}

impl MultiplexGraph {
    /// Checks that both layers are symmetric and free of self-edges.
    pub fn check_invariants(&self) -> Result<()> {
        for (name, e) in [("local", &self.local), ("global", &self.global)] {
            if e.iter().any(|(j, i)| j >= self.n_nodes || i >= self.n_nodes) {
                return Err(Error::invalid(format!("{name} layer index out of range")));
            }
            if e.has_self_edges() {
                return Err(Error::invalid(format!("{name} layer has a self-edge")));
            }
            if !e.is_symmetric() {
                return Err(Error::invalid(format!("{name} layer is not symmetric")));
            }
        }
        Ok(())
    }

    /// Text dump: one `L j i` line per local edge, then one `G j i` per global edge.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (j, i) in self.local.iter() {
            let _ = writeln!(s, "L {j} {i}");
        }
        for (j, i) in self.global.iter() {
            let _ = writeln!(s, "G {j} {i}");
        }
        s
    }

    /// Inverse of [`MultiplexGraph::dump`]; provenance is not stored in the dump.
    pub fn parse_dump(text: &str, n_nodes: usize) -> Result<Self> {
        let mut local = Edges::default();
        let mut global = Edges::default();
        for (ln, line) in text.lines().enumerate() {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: ln + 1,
                msg: format!("expected `L|G j i`, found `{line}`"),
            };
            if t.len() != 3 {
                return Err(bad());
            }
            let j: usize = t[1].parse().map_err(|_| bad())?;
            let i: usize = t[2].parse().map_err(|_| bad())?;
            match t[0] {
                "L" => local.push(j, i),
                "G" => global.push(j, i),
                _ => return Err(bad()),
            }
        }
        let g = MultiplexGraph {
            n_nodes,
            local,
            global,
            local_provenance: Provenance::Bonds,
            global_provenance: Provenance::Cutoff(f64::NAN),
        };
        g.check_invariants()?;
        Ok(g)
    }
}
