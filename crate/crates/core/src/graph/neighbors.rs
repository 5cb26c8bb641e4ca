//! Fixed-radius neighbor search.

use crate::basis::distance;
use crate::error::{Error, Result};
use crate::molecule::Vec3;

use super::Edges;

/// Above this many points the search switches from all-pairs to cell lists.
pub const BRUTE_FORCE_LIMIT: usize = 512;

/// Directed edges `j → i` for every ordered pair with `0 < |r_j - r_i| < cutoff`.
///
/// The result is symmetric and sorted by `(j, i)`.
pub fn neighbor_search(coords: &[Vec3], cutoff: f64) -> Result<Edges> {
    validate(coords, cutoff)?;
    if coords.len() <= BRUTE_FORCE_LIMIT {
        Ok(all_pairs(coords, cutoff))
    } else {
        Ok(cell_list(coords, cutoff))
    }
}

fn validate(coords: &[Vec3], cutoff: f64) -> Result<()> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::invalid(format!("cutoff must be positive, got {cutoff}")));
    }
    if let Some(i) = coords.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid(format!("non-finite coordinates for atom {i}")));
    }
    Ok(())
}

#[inline]
fn within(a: &Vec3, b: &Vec3, cutoff: f64) -> bool {
    let d = distance(a, b);
    d > 0.0 && d < cutoff
}

pub fn all_pairs(coords: &[Vec3], cutoff: f64) -> Edges {
    let mut edges = Edges::default();
    for (j, pj) in coords.iter().enumerate() {
        for (i, pi) in coords.iter().enumerate() {
            if i != j && within(pj, pi, cutoff) {
                edges.push(j, i);
            }
        }
    }
    edges
}

/// Uniform-grid search; cells are at least `cutoff` wide so only the 27
/// surrounding cells need scanning.
pub fn cell_list(coords: &[Vec3], cutoff: f64) -> Edges {
    let n = coords.len();
    if n == 0 {
        return Edges::default();
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in coords {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let max_cells = (8 * n).max(64);
    let mut size = cutoff;
    let dims = loop {
        let d: [usize; 3] = std::array::from_fn(|a| ((hi[a] - lo[a]) / size).floor() as usize + 1);
        if d[0].saturating_mul(d[1]).saturating_mul(d[2]) <= max_cells {
            break d;
        }
        size *= 2.0;
    };
    let cell_of = |p: &Vec3| -> [usize; 3] {
        std::array::from_fn(|a| (((p[a] - lo[a]) / size).floor() as usize).min(dims[a] - 1))
    };
    let flat = |c: [usize; 3]| (c[0] * dims[1] + c[1]) * dims[2] + c[2];

    // counting sort of points into cells
    let mut start = vec![0usize; dims[0] * dims[1] * dims[2] + 1];
    let cells: Vec<[usize; 3]> = coords.iter().map(cell_of).collect();
    for c in &cells {
        start[flat(*c) + 1] += 1;
    }
    for k in 1..start.len() {
        start[k] += start[k - 1];
    }
    let mut fill = start.clone();
    let mut members = vec![0usize; n];
    for (idx, c) in cells.iter().enumerate() {
        let f = flat(*c);
        members[fill[f]] = idx;
        fill[f] += 1;
    }

    let mut edges = Edges::default();
    let mut found = Vec::new();
    for (j, pj) in coords.iter().enumerate() {
        found.clear();
        let c = cells[j];
        for dx in c[0].saturating_sub(1)..=(c[0] + 1).min(dims[0] - 1) {
            for dy in c[1].saturating_sub(1)..=(c[1] + 1).min(dims[1] - 1) {
                for dz in c[2].saturating_sub(1)..=(c[2] + 1).min(dims[2] - 1) {
                    let f = flat([dx, dy, dz]);
                    for &i in &members[start[f]..start[f + 1]] {
                        if i != j && within(pj, &coords[i], cutoff) {
                            found.push(i);
                        }
                    }
                }
            }
        }
        found.sort_unstable();
        for &i in &found {
            edges.push(j, i);
        }
    }
    edges
}
