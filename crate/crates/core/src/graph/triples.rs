//! Angle triples on the local layer and closed-form message counts.

use super::{Edges, MultiplexGraph};

/// Two-hop angle at `j` between edges `k → j` and `j → i`, with `k ≠ i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TwoHop {
    pub k: usize,
    pub j: usize,
    pub i: usize,
    pub edge_kj: usize,
    pub edge_ji: usize,
}

/// One-hop angle at `i` between edges `j' → i` and `j → i`, with `j' ≠ j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OneHop {
    pub j_prime: usize,
    pub i: usize,
    pub j: usize,
    pub edge_jpi: usize,
    pub edge_ji: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AngleTriples {
    pub two_hop: Vec<TwoHop>,
    pub one_hop: Vec<OneHop>,
}

/// Incoming edge ids per node.
fn incoming(edges: &Edges, n_nodes: usize) -> Vec<Vec<usize>> {
    let mut inc = vec![Vec::new(); n_nodes];
    for (e, &i) in edges.dst.iter().enumerate() {
        inc[i].push(e);
    }
    inc
}

/// All two-hop and one-hop triples of the local layer.
///
/// Triples are grouped by their `j → i` edge in edge order, so the output is
/// deterministic for a given edge list.
pub fn enumerate_angle_triples(g: &MultiplexGraph) -> AngleTriples {
    let edges = &g.local;
    let inc = incoming(edges, g.n_nodes);
    let mut out = AngleTriples::default();
    for (edge_ji, (j, i)) in edges.iter().enumerate() {
        for &edge_kj in &inc[j] {
            let k = edges.src[edge_kj];
            if k != i {
                out.two_hop.push(TwoHop {
                    k,
                    j,
                    i,
                    edge_kj,
                    edge_ji,
                });
            }
        }
        for &edge_jpi in &inc[i] {
            let j_prime = edges.src[edge_jpi];
            if j_prime != j {
                out.one_hop.push(OneHop {
                    j_prime,
                    i,
                    j,
                    edge_jpi,
                    edge_ji,
                });
            }
        }
    }
    out
}

/// Number of angles spanned by pairs of adjacent edges: `Σ_v deg(v)(deg(v)-1)/2`.
///
/// `edges` is a symmetric directed edge list of a simple graph.
pub fn count_angles(edges: &Edges, n_nodes: usize) -> u64 {
    edges
        .degrees(n_nodes)
        .iter()
        .map(|&d| (d as u64) * (d as u64).saturating_sub(1) / 2)
        .sum()
}

/// Messages computed by one MXM block, split by stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageCounts {
    /// Two global passes, one message per directed edge each.
    pub global: u64,
    /// Two-hop triple messages plus one edge message per local edge.
    pub local_step1: u64,
    /// One-hop triple messages plus one edge message per local edge.
    pub local_step2: u64,
    /// Edge-to-node aggregation.
    pub local_step3: u64,
    /// Both cross-layer maps, one message per node each.
    pub cross: u64,
}

impl MessageCounts {
    pub fn total(&self) -> u64 {
        self.global + self.local_step1 + self.local_step2 + self.local_step3 + self.cross
    }

    pub fn as_tuple(&self) -> (u64, u64, u64, u64, u64) {
        (
            self.global,
            self.local_step1,
            self.local_step2,
            self.local_step3,
            self.cross,
        )
    }
}

impl std::ops::AddAssign for MessageCounts {
    fn add_assign(&mut self, o: Self) {
        self.global += o.global;
        self.local_step1 += o.local_step1;
        self.local_step2 += o.local_step2;
        self.local_step3 += o.local_step3;
        self.cross += o.cross;
    }
}

/// Closed-form per-block message counts from layer degrees alone.
pub fn count_messages(g: &MultiplexGraph) -> MessageCounts {
    let deg = g.local.degrees(g.n_nodes);
    let e_l = g.local.len() as u64;
    // for symmetric edges: |two_hop| = Σ_{j→i} (deg(j) - 1), |one_hop| = Σ_{j→i} (deg(i) - 1)
    let two_hop: u64 = g.local.src.iter().map(|&j| deg[j] as u64 - 1).sum();
    let one_hop: u64 = g.local.dst.iter().map(|&i| deg[i] as u64 - 1).sum();
    MessageCounts {
        global: 2 * g.global.len() as u64,
        local_step1: two_hop + e_l,
        local_step2: one_hop + e_l,
        local_step3: e_l,
        cross: 2 * g.n_nodes as u64,
    }
}
