//! Molecular structures and the extended-XYZ text format.
//!
//! Layout accepted by [`parse_extxyz`]:
//!
//! ```text
//! 3
//! U0=-76.4 mu=1.85
//! O  0.000  0.000  0.117
//! H  0.000  0.757 -0.467
//! H  0.000 -0.757 -0.467
//! BONDS
//! 0 1
//! 0 2
//! ```
//!
//! Line 2 holds `key=value` pairs; those whose value parses as a float become
//! targets, anything else on that line is ignored. Body lines may carry extra
//! columns after the coordinates. The `BONDS` block is optional.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::elements;
use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    atomic_numbers: Vec<u8>,
    coords: Vec<Vec3>,
    bonds: Option<Vec<(usize, usize)>>,
    targets: BTreeMap<String, f64>,
}

impl Molecule {
    pub fn new(atomic_numbers: Vec<u8>, coords: Vec<Vec3>) -> Result<Self> {
        if atomic_numbers.is_empty() {
            return Err(Error::invalid("molecule has no atoms"));
        }
        if atomic_numbers.len() != coords.len() {
            return Err(Error::invalid(format!(
                "{} atomic numbers but {} coordinate rows",
                atomic_numbers.len(),
                coords.len()
            )));
        }
        if let Some(&z) = atomic_numbers.iter().find(|&&z| z == 0) {
            return Err(Error::invalid(format!("invalid atomic number {z}")));
        }
        Ok(Self {
            atomic_numbers,
            coords,
            bonds: None,
            targets: BTreeMap::new(),
        })
    }

    /// Attaches an explicit bond list; pairs are stored as `(min, max)`.
    pub fn with_bonds(mut self, bonds: Vec<(usize, usize)>) -> Result<Self> {
        let n = self.len();
        let mut seen = std::collections::HashSet::new();
        let mut normalized = Vec::with_capacity(bonds.len());
        for (a, b) in bonds {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("bond ({a}, {b}) out of range for {n} atoms")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-bond on atom {a}")));
            }
            let pair = (a.min(b), a.max(b));
            if !seen.insert(pair) {
                return Err(Error::invalid(format!("duplicate bond ({a}, {b})")));
            }
            normalized.push(pair);
        }
        self.bonds = Some(normalized);
        Ok(self)
    }

    pub fn with_target(mut self, name: impl Into<String>, value: f64) -> Self {
        self.targets.insert(name.into(), value);
        self
    }

    pub fn len(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atomic_numbers.is_empty()
    }

    pub fn atomic_numbers(&self) -> &[u8] {
        &self.atomic_numbers
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [Vec3] {
        &mut self.coords
    }

    pub fn bonds(&self) -> Option<&[(usize, usize)]> {
        self.bonds.as_deref()
    }

    pub fn targets(&self) -> &BTreeMap<String, f64> {
        &self.targets
    }

    pub fn target(&self, name: &str) -> Option<f64> {
        self.targets.get(name).copied()
    }

    /// Applies `coords[i] ← R·coords[i] + t` to every atom.
    pub fn transformed(&self, rotation: &[[f64; 3]; 3], translation: Vec3) -> Self {
        let mut out = self.clone();
        for p in &mut out.coords {
            let q = *p;
            for (r, o) in p.iter_mut().enumerate() {
                *o = rotation[r][0] * q[0] + rotation[r][1] * q[1] + rotation[r][2] * q[2] + translation[r];
            }
        }
        out
    }

    /// Relabels atoms so that new atom `i` is old atom `perm[i]`; bonds follow.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::invalid("not a permutation"));
            }
            inverse[old] = new;
        }
        if perm.len() != n {
            return Err(Error::invalid("not a permutation"));
        }
        let mut out = Molecule::new(
            perm.iter().map(|&p| self.atomic_numbers[p]).collect(),
            perm.iter().map(|&p| self.coords[p]).collect(),
        )?;
        out.targets = self.targets.clone();
        if let Some(bonds) = &self.bonds {
            out = out.with_bonds(bonds.iter().map(|&(a, b)| (inverse[a], inverse[b])).collect())?;
        }
        Ok(out)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_float(tok: &str) -> Option<f64> {
    // Mathematica-style exponents ("1.2*^-6") appear in some QM9 dumps.
    if tok.contains("*^") {
        tok.replace("*^", "e").parse().ok()
    } else {
        tok.parse().ok()
    }
}

/// Parses one structure in extended-XYZ layout.
pub fn parse_extxyz(text: &str) -> Result<Molecule> {
    let mut lines = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l));

    let (ln, count_line) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let n: usize = count_line
        .trim()
        .parse()
        .map_err(|_| parse_err(ln, format!("expected atom count, found `{}`", count_line.trim())))?;
    if n == 0 {
        return Err(parse_err(ln, "atom count must be positive"));
    }

    let mut targets = BTreeMap::new();
    let (ln, props) = lines.next().ok_or_else(|| parse_err(2, "missing property line"))?;
    for tok in props.split_whitespace() {
        if let Some((key, value)) = tok.split_once('=') {
            if key.is_empty() {
                return Err(parse_err(ln, format!("empty key in `{tok}`")));
            }
            if let Some(v) = parse_float(value) {
                targets.insert(key.to_string(), v);
            }
        }
    }

    let mut zs = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    let mut last_line = 2;
    for k in 0..n {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(last_line + 1, format!("expected {n} atoms, file ends after {k}")))?;
        last_line = ln;
        let mut toks = line.split_whitespace();
        let sym = toks
            .next()
            .ok_or_else(|| parse_err(ln, format!("expected {n} atoms, found only {k}")))?;
        let z = elements::atomic_number(sym).ok_or_else(|| parse_err(ln, format!("unknown element symbol `{sym}`")))?;
        let mut xyz = [0.0; 3];
        for c in &mut xyz {
            let tok = toks.next().ok_or_else(|| parse_err(ln, "expected three coordinates"))?;
            *c = parse_float(tok).ok_or_else(|| parse_err(ln, format!("malformed float `{tok}`")))?;
        }
        zs.push(z);
        coords.push(xyz);
    }

    let mut bonds: Option<Vec<(usize, usize)>> = None;
    for (ln, line) in lines {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match &mut bonds {
            None if t.eq_ignore_ascii_case("BONDS") => bonds = Some(Vec::new()),
            None => return Err(parse_err(ln, format!("unexpected content `{t}` after atoms"))),
            Some(list) => {
                let mut toks = t.split_whitespace();
                let mut idx = || -> Result<usize> {
                    let tok = toks
                        .next()
                        .ok_or_else(|| parse_err(ln, "bond line needs two indices"))?;
                    tok.parse()
                        .map_err(|_| parse_err(ln, format!("malformed bond index `{tok}`")))
                };
                let a = idx()?;
                let b = idx()?;
                if a >= n || b >= n {
                    return Err(parse_err(ln, format!("bond ({a}, {b}) out of range")));
                }
                list.push((a, b));
            }
        }
    }

    let mut mol = Molecule::new(zs, coords)?;
    mol.targets = targets;
    if let Some(b) = bonds {
        mol = mol.with_bonds(b)?;
    }
    Ok(mol)
}

/// Writes a molecule in the layout read by [`parse_extxyz`].
///
/// Floats use the shortest representation that parses back to the same bits.
pub fn to_extxyz(m: &Molecule) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", m.len());
    let props: Vec<String> = m.targets.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(s, "{}", props.join(" "));
    for (z, p) in m.atomic_numbers.iter().zip(&m.coords) {
        let sym = elements::symbol(*z).unwrap_or("X");
        let _ = writeln!(s, "{sym} {} {} {}", p[0], p[1], p[2]);
    }
    if let Some(bonds) = &m.bonds {
        s.push_str("BONDS\n");
        for (a, b) in bonds {
            let _ = writeln!(s, "{a} {b}");
        }
    }
    s
}
