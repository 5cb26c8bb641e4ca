//! Pairwise geometry and the radial / spherical basis embeddings.
//!
//! Distances are expanded in `N_RBF` sine functions, distance–angle pairs in
//! `N_SHBF × N_SRBF` products of spherical Bessel functions and zonal
//! spherical harmonics. Every component is multiplied by a polynomial
//! envelope that vanishes together with its first two derivatives at the
//! cutoff.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::molecule::Vec3;

pub const N_RBF: usize = 16;
pub const N_SHBF: usize = 7;
pub const N_SRBF: usize = 6;
pub const N_SBF: usize = N_SHBF * N_SRBF;
pub const DEFAULT_ENVELOPE_EXPONENT: i32 = 6;

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Cosine of the angle at vertex `b` of the path `a – b – c`, clamped to [-1, 1].
pub fn cos_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> Result<f64> {
    let u = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let v = [c[0] - b[0], c[1] - b[1], c[2] - b[2]];
    let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let nv = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("angle undefined: vertex coincides with an end point"));
    }
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Angle in radians at vertex `b`, in `[0, π]`.
pub fn angle(a: &Vec3, b: &Vec3, c: &Vec3) -> Result<f64> {
    cos_angle(a, b, c).map(f64::acos)
}

/// Smooth cutoff `u(d/c)` with exponent `p`; zero for `d >= c`.
pub fn envelope_with_exponent(d: f64, c: f64, p: i32) -> f64 {
    let x = d / c;
    if x >= 1.0 {
        return 0.0;
    }
    let pf = p as f64;
    let a = (pf + 1.0) * (pf + 2.0) / 2.0;
    let b = pf * (pf + 2.0);
    let cc = pf * (pf + 1.0) / 2.0;
    let xp = x.powi(p);
    1.0 - a * xp + b * xp * x - cc * xp * x * x
}

pub fn envelope(d: f64, c: f64) -> f64 {
    envelope_with_exponent(d, c, DEFAULT_ENVELOPE_EXPONENT)
}

/// Spherical Bessel function of the first kind, `j_l(x)`.
pub fn spherical_jn(l: usize, x: f64) -> f64 {
    let lf = l as f64;
    if x.abs() < lf.max(1.0) {
        // power series: x^l/(2l+1)!! Σ_k (-x²/2)^k / (k! (2l+3)(2l+5)…(2l+2k+1))
        let mut prefactor = 1.0;
        for k in 0..l {
            prefactor *= x / (2 * k + 3) as f64;
        }
        let half_sq = -0.5 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= half_sq / (k as f64 * (2.0 * lf + 2.0 * k as f64 + 1.0));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        return prefactor * sum;
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    if l == 0 {
        return j0;
    }
    let mut prev = j0;
    let mut cur = s / (x * x) - c / x;
    for n in 1..l {
        let next = (2 * n + 1) as f64 / x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Zonal spherical harmonic `Y_l^0` as a function of `cos θ`.
pub fn zonal_harmonic(l: usize, cos_theta: f64) -> f64 {
    let mut p_prev = 1.0;
    let mut p = cos_theta;
    let legendre = match l {
        0 => 1.0,
        _ => {
            for n in 1..l {
                let nf = n as f64;
                let next = ((2.0 * nf + 1.0) * cos_theta * p - nf * p_prev) / (nf + 1.0);
                p_prev = p;
                p = next;
            }
            p
        }
    };
    ((2 * l + 1) as f64 / (4.0 * PI)).sqrt() * legendre
}

/// First `count` positive roots of `j_l`, by bracketing sign changes and bisecting.
pub fn bessel_roots(l: usize, count: usize) -> Vec<f64> {
    let mut roots = Vec::with_capacity(count);
    let step = 0.05;
    let mut lo = 0.5 * step;
    let mut f_lo = spherical_jn(l, lo);
    while roots.len() < count {
        let hi = lo + step;
        let f_hi = spherical_jn(l, hi);
        if f_lo == 0.0 {
            roots.push(lo);
        } else if f_lo * f_hi < 0.0 {
            let (mut a, mut b, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let fm = spherical_jn(l, mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots
}

/// Basis sizes with the Bessel roots they need, computed once.
#[derive(Debug, Clone)]
pub struct Basis {
    pub n_rbf: usize,
    pub n_shbf: usize,
    pub n_srbf: usize,
    pub envelope_exponent: i32,
    roots: Vec<Vec<f64>>,
    // j_{l+1}(z_{l,n})², the normalization denominator
    norm_sq: Vec<Vec<f64>>,
}

impl Basis {
    pub fn new(n_rbf: usize, n_shbf: usize, n_srbf: usize, envelope_exponent: i32) -> Self {
        let roots: Vec<Vec<f64>> = (0..n_shbf).map(|l| bessel_roots(l, n_srbf)).collect();
        let norm_sq = roots
            .iter()
            .enumerate()
            .map(|(l, zs)| zs.iter().map(|&z| spherical_jn(l + 1, z).powi(2)).collect())
            .collect();
        Self {
            n_rbf,
            n_shbf,
            n_srbf,
            envelope_exponent,
            roots,
            norm_sq,
        }
    }

    /// The default 16 / 7 / 6 basis with envelope exponent 6, built once.
    pub fn standard() -> &'static Basis {
        static STANDARD: OnceLock<Basis> = OnceLock::new();
        STANDARD.get_or_init(|| Basis::new(N_RBF, N_SHBF, N_SRBF, DEFAULT_ENVELOPE_EXPONENT))
    }

    pub fn n_sbf(&self) -> usize {
        self.n_shbf * self.n_srbf
    }

    /// `z_{l,n}` for `n` counted from 1.
    pub fn root(&self, l: usize, n: usize) -> f64 {
        self.roots[l][n - 1]
    }

    pub fn envelope(&self, d: f64, c: f64) -> f64 {
        envelope_with_exponent(d, c, self.envelope_exponent)
    }

    /// Radial embedding `u(d)·sqrt(2/c)·sin(nπd/c)/d`, `n = 1..=n_rbf`.
    pub fn rbf(&self, d: f64, c: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_rbf];
        self.rbf_into(d, c, &mut out)?;
        Ok(out)
    }

    pub fn rbf_into(&self, d: f64, c: f64, out: &mut [f64]) -> Result<()> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::invalid(format!("rbf needs a positive distance, got {d}")));
        }
        let u = self.envelope(d, c);
        if u == 0.0 {
            out.fill(0.0);
            return Ok(());
        }
        let pref = u * (2.0 / c).sqrt() / d;
        for (n, o) in out.iter_mut().enumerate() {
            *o = pref * ((n + 1) as f64 * PI * d / c).sin();
        }
        Ok(())
    }

    /// Joint distance–angle embedding, row-major in `(l, n)`.
    pub fn sbf(&self, d: f64, alpha: f64, c: f64) -> Result<Vec<f64>> {
        if !(0.0..=PI).contains(&alpha) {
            return Err(Error::invalid(format!("angle {alpha} outside [0, π]")));
        }
        let mut out = vec![0.0; self.n_sbf()];
        self.sbf_cos_into(d, alpha.cos(), c, &mut out)?;
        Ok(out)
    }

    /// Same as [`Basis::sbf`] but takes `cos α` directly.
    pub fn sbf_cos_into(&self, d: f64, cos_alpha: f64, c: f64, out: &mut [f64]) -> Result<()> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::invalid(format!("sbf needs a positive distance, got {d}")));
        }
        if !(-1.0..=1.0).contains(&cos_alpha) {
            return Err(Error::invalid(format!("cosine {cos_alpha} outside [-1, 1]")));
        }
        let u = self.envelope(d, c);
        if u == 0.0 {
            out.fill(0.0);
            return Ok(());
        }
        let x = d / c;
        let c3 = c * c * c;
        for l in 0..self.n_shbf {
            let y = zonal_harmonic(l, cos_alpha);
            for n in 0..self.n_srbf {
                let z = self.roots[l][n];
                let norm = (2.0 / (c3 * self.norm_sq[l][n])).sqrt();
                out[l * self.n_srbf + n] = u * norm * spherical_jn(l, z * x) * y;
            }
        }
        Ok(())
    }
}

pub fn rbf_embed(d: f64, c: f64) -> Result<Vec<f64>> {
    Basis::standard().rbf(d, c)
}

pub fn sbf_embed(d: f64, alpha: f64, c: f64) -> Result<Vec<f64>> {
    Basis::standard().sbf(d, alpha, c)
}
