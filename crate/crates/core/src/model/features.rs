use crate::basis::{cos_angle, distance, Basis};
use crate::error::{Error, Result};
use crate::graph::{build_multiplex, enumerate_angle_triples, AngleTriples, MultiplexGraph};
use crate::molecule::Molecule;
use crate::tensor::Tensor;

use super::ModelConfig;

/// Everything the network reads from one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub atomic_numbers: Vec<u8>,
    pub graph: MultiplexGraph,
    pub triples: AngleTriples,
    /// `E_l × N_RBF`, one row per directed local edge.
    pub rbf_local: Tensor,
    /// `E_g × N_RBF`, one row per directed global edge.
    pub rbf_global: Tensor,
    /// `T₂ × N_SBF`: distance of `k → j` and the angle at `j`.
    pub sbf_two_hop: Tensor,
    /// `T₁ × N_SBF`: distance of `j' → i` and the angle at `i`.
    pub sbf_one_hop: Tensor,
}

impl Sample {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes
    }

    /// Checks that every feature table lines up with the graph it came from.
    pub fn check_consistency(&self) -> Result<()> {
        let g = &self.graph;
        let t = &self.triples;
        let rows = [
            ("rbf_local", self.rbf_local.rows(), g.local.len()),
            ("rbf_global", self.rbf_global.rows(), g.global.len()),
            ("sbf_two_hop", self.sbf_two_hop.rows(), t.two_hop.len()),
            ("sbf_one_hop", self.sbf_one_hop.rows(), t.one_hop.len()),
        ];
        for (name, got, want) in rows {
            if got != want {
                return Err(Error::invalid(format!("{name}: {got} rows for {want} items")));
            }
        }
        if self.atomic_numbers.len() != g.n_nodes {
            return Err(Error::invalid("atomic numbers do not match node count"));
        }
        let edge = |e: usize| (g.local.src[e], g.local.dst[e]);
        let e_l = g.local.len();
        for x in &t.two_hop {
            if x.edge_kj >= e_l
                || x.edge_ji >= e_l
                || edge(x.edge_kj) != (x.k, x.j)
                || edge(x.edge_ji) != (x.j, x.i)
                || x.k == x.i
            {
                return Err(Error::invalid(format!(
                    "two-hop triple {x:?} does not match local edges"
                )));
            }
        }
        for x in &t.one_hop {
            if x.edge_jpi >= e_l
                || x.edge_ji >= e_l
                || edge(x.edge_jpi) != (x.j_prime, x.i)
                || edge(x.edge_ji) != (x.j, x.i)
                || x.j_prime == x.j
            {
                return Err(Error::invalid(format!(
                    "one-hop triple {x:?} does not match local edges"
                )));
            }
        }
        Ok(())
    }
}

fn rbf_table(basis: &Basis, m: &Molecule, edges: &crate::graph::Edges, cutoff: f64) -> Result<Tensor> {
    let c = m.coords();
    let mut data = vec![0.0; edges.len() * basis.n_rbf];
    for (row, (j, i)) in edges.iter().enumerate() {
        let d = distance(&c[j], &c[i]);
        basis.rbf_into(d, cutoff, &mut data[row * basis.n_rbf..(row + 1) * basis.n_rbf])?;
    }
    Tensor::matrix(edges.len(), basis.n_rbf, data)
}

/// Builds the multiplex graph of `m` with its basis tables.
pub fn featurize(m: &Molecule, cfg: &ModelConfig) -> Result<Sample> {
    let basis = if cfg.envelope_exponent == crate::basis::DEFAULT_ENVELOPE_EXPONENT {
        std::borrow::Cow::Borrowed(Basis::standard())
    } else {
        std::borrow::Cow::Owned(Basis::new(cfg.n_rbf, cfg.n_shbf, cfg.n_srbf, cfg.envelope_exponent))
    };
    let graph = build_multiplex(m, &cfg.graph_config())?;
    let triples = enumerate_angle_triples(&graph);
    let c = m.coords();
    let c_l = cfg.local_cutoff();

    let rbf_local = rbf_table(&basis, m, &graph.local, c_l)?;
    let rbf_global = rbf_table(&basis, m, &graph.global, cfg.global_cutoff)?;

    let ns = basis.n_sbf();
    let mut two = vec![0.0; triples.two_hop.len() * ns];
    for (row, x) in triples.two_hop.iter().enumerate() {
        let d = distance(&c[x.k], &c[x.j]);
        let ca = cos_angle(&c[x.k], &c[x.j], &c[x.i])?;
        basis.sbf_cos_into(d, ca, c_l, &mut two[row * ns..(row + 1) * ns])?;
    }
    let mut one = vec![0.0; triples.one_hop.len() * ns];
    for (row, x) in triples.one_hop.iter().enumerate() {
        let d = distance(&c[x.j_prime], &c[x.i]);
        let ca = cos_angle(&c[x.j_prime], &c[x.i], &c[x.j])?;
        basis.sbf_cos_into(d, ca, c_l, &mut one[row * ns..(row + 1) * ns])?;
    }

    Ok(Sample {
        atomic_numbers: m.atomic_numbers().to_vec(),
        sbf_two_hop: Tensor::matrix(triples.two_hop.len(), ns, two)?,
        sbf_one_hop: Tensor::matrix(triples.one_hop.len(), ns, one)?,
        graph,
        triples,
        rbf_local,
        rbf_global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::parse_extxyz;

    const WATER: &str = "3\n\nO 0.0 0.0 0.1173\nH 0.0 0.7572 -0.4692\nH 0.0 -0.7572 -0.4692\nBONDS\n0 1\n0 2\n";

    #[test]
    fn water_tables_line_up() {
        let m = parse_extxyz(WATER).unwrap();
        let s = featurize(&m, &ModelConfig::default()).unwrap();
        assert_eq!(s.rbf_local.shape(), &[4, 16]);
        assert_eq!(s.rbf_global.shape(), &[6, 16]);
        assert_eq!(s.sbf_two_hop.shape(), &[2, 42]);
        assert_eq!(s.sbf_one_hop.shape(), &[2, 42]);
        s.check_consistency().unwrap();
    }

    #[test]
    fn tampered_triples_are_rejected() {
        let m = parse_extxyz(WATER).unwrap();
        let mut s = featurize(&m, &ModelConfig::default()).unwrap();
        s.triples.two_hop[0].edge_kj = s.triples.two_hop[0].edge_ji;
        assert!(s.check_consistency().is_err());
    }
}
