//! Message-count scaling on random geometric graphs.
//!
//! Compares the multiplex scheme (angles on the local layer only) with a
//! reference scheme that enumerates two-hop angles over every global edge.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{
    build_multiplex, count_messages, enumerate_angle_triples, Edges, GraphConfig, LocalRule, MessageCounts,
};
use crate::molecule::Molecule;
use crate::par;

/// Carbon atoms spread uniformly in a cube holding `density` atoms per Å³.
pub fn random_cloud<R: Rng>(n: usize, density: f64, rng: &mut R) -> Result<Molecule> {
    if !(density > 0.0) {
        return Err(Error::invalid("density must be positive"));
    }
    let side = (n as f64 / density).cbrt();
    let coords = (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..side.max(f64::MIN_POSITIVE))))
        .collect();
    Molecule::new(vec![6; n], coords)
}

/// Cutoff at which a uniform cloud of `density` has `k` neighbors on average
/// (ignoring the boundary).
pub fn cutoff_for_degree(k: f64, density: f64) -> f64 {
    (3.0 * k / (4.0 * std::f64::consts::PI * density)).cbrt()
}

/// Two-hop angle triples `(k, j, i)` over every edge of `edges`, by enumeration.
pub fn reference_triples(edges: &Edges, n_nodes: usize) -> u64 {
    let mut incoming = vec![Vec::new(); n_nodes];
    for (j, i) in edges.iter() {
        incoming[i].push(j);
    }
    let mut count = 0u64;
    for (j, i) in edges.iter() {
        count += incoming[j].iter().filter(|&&k| k != i).count() as u64;
    }
    count
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub n: usize,
    pub d_l: f64,
    pub d_g: f64,
    /// Mean degree on the local and global layers.
    pub k_l: f64,
    pub k_g: f64,
    /// Closed-form counts for one block.
    pub counts: MessageCounts,
    /// Enumerated local-layer triples.
    pub two_hop: u64,
    pub one_hop: u64,
    /// Enumerated global-layer triples of the reference scheme.
    pub reference: u64,
    pub mxm_seconds: f64,
    pub reference_seconds: f64,
}

impl ScalingPoint {
    pub const CSV_HEADER: &'static str = "n,d_l,d_g,k_l,k_g,global,local_step1,local_step2,local_step3,cross,two_hop,one_hop,reference_triples,mxm_seconds,reference_seconds";

    pub fn csv_row(&self) -> String {
        let c = &self.counts;
        format!(
            "{},{},{},{:.6},{:.6},{},{},{},{},{},{},{},{},{:.6},{:.6}",
            self.n,
            self.d_l,
            self.d_g,
            self.k_l,
            self.k_g,
            c.global,
            c.local_step1,
            c.local_step2,
            c.local_step3,
            c.cross,
            self.two_hop,
            self.one_hop,
            self.reference,
            self.mxm_seconds,
            self.reference_seconds
        )
    }
}

pub fn measure(m: &Molecule, d_l: f64, d_g: f64) -> Result<ScalingPoint> {
    let n = m.len();
    let start = Instant::now();
    let g = build_multiplex(m, &GraphConfig::new(LocalRule::Cutoff(d_l), d_g))?;
    let t = enumerate_angle_triples(&g);
    let mxm_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let reference = reference_triples(&g.global, n);
    let reference_seconds = start.elapsed().as_secs_f64();
    let mean_degree = |e: &Edges| if n == 0 { 0.0 } else { e.len() as f64 / n as f64 };
    Ok(ScalingPoint {
        n,
        d_l,
        d_g,
        k_l: mean_degree(&g.local),
        k_g: mean_degree(&g.global),
        counts: count_messages(&g),
        two_hop: t.two_hop.len() as u64,
        one_hop: t.one_hop.len() as u64,
        reference,
        mxm_seconds,
        reference_seconds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub density: f64,
    /// Target mean local degrees; the global degree is held at `k_g_fixed`.
    pub k_l: Vec<f64>,
    /// Target mean global degrees; the local degree is held at `k_l_fixed`.
    pub k_g: Vec<f64>,
    pub k_l_fixed: f64,
    pub k_g_fixed: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![512],
            density: 0.1,
            k_l: vec![2.0, 4.0, 8.0, 16.0],
            k_g: vec![8.0, 16.0, 32.0, 64.0],
            k_l_fixed: 3.0,
            k_g_fixed: 64.0,
            seed: 0,
        }
    }
}

/// Which cutoff a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Local,
    Global,
}

/// One point per (size, target degree). Each size uses its own seeded cloud.
pub fn run(cfg: &BenchConfig) -> Result<Vec<(Sweep, ScalingPoint)>> {
    let mut jobs = Vec::new();
    for (s, &n) in cfg.sizes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(s as u64));
        let m = random_cloud(n, cfg.density, &mut rng)?;
        let fixed_g = cutoff_for_degree(cfg.k_g_fixed, cfg.density);
        let fixed_l = cutoff_for_degree(cfg.k_l_fixed, cfg.density);
        for &k in &cfg.k_l {
            jobs.push((Sweep::Local, m.clone(), cutoff_for_degree(k, cfg.density), fixed_g));
        }
        for &k in &cfg.k_g {
            let d_g = cutoff_for_degree(k, cfg.density);
            jobs.push((Sweep::Global, m.clone(), fixed_l.min(0.5 * d_g), d_g));
        }
    }
    par::try_map(&jobs, |(sweep, m, d_l, d_g)| Ok((*sweep, measure(m, *d_l, *d_g)?)))
}

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than two
/// usable points or no spread in `x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slopes {
    /// Local triples against `k_l`.
    pub local_triples: Option<f64>,
    /// Global messages against `k_g`.
    pub global_messages: Option<f64>,
    /// Reference triples against `k_g`.
    pub reference_triples: Option<f64>,
}

pub fn slopes(points: &[(Sweep, ScalingPoint)]) -> Slopes {
    let pick = |sw: Sweep, x: fn(&ScalingPoint) -> f64, y: fn(&ScalingPoint) -> f64| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|(s, _)| *s == sw)
            .map(|(_, p)| (x(p), y(p)))
            .unzip();
        loglog_slope(&xs, &ys)
    };
    Slopes {
        local_triples: pick(Sweep::Local, |p| p.k_l, |p| p.two_hop as f64),
        global_messages: pick(Sweep::Global, |p| p.k_g, |p| p.counts.global as f64),
        reference_triples: pick(Sweep::Global, |p| p.k_g, |p| p.reference as f64),
    }
}
