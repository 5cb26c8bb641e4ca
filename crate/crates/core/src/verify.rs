//! Property checks run by the `verify` command. Each check reports its worst
//! observed value against a fixed tolerance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{bessel_roots, spherical_jn, Basis, N_SHBF, N_SRBF};
use crate::error::{Error, Result};
use crate::graph::{count_angles, count_messages, Edges};
use crate::model::{featurize, Checkpoint, ModelConfig, MxmNet, ParamStore, Sample, Standardizer};
use crate::molecule::Molecule;
use crate::par;
use crate::tensor::Tape;

/// Norms below this count as zero in relative gradient errors.
pub const GRAD_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= tolerance && measured.is_finite(),
            measured,
            tolerance,
        }
    }

    fn strictly_below(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured < tolerance,
            measured,
            tolerance,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} measured={:.3e} tolerance={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

/// Uniformly distributed rotation matrix (via a normalized random quaternion).
pub fn random_rotation<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let q = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            break q.map(|x| x / n);
        }
    };
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Erdős–Rényi graph as a symmetric directed edge list.
pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> Edges {
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                pairs.push((a, b));
            }
        }
    }
    Edges::from_undirected(&pairs)
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or zero when both norms are below [`GRAD_NORM_FLOOR`].
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < GRAD_NORM_FLOOR {
        0.0
    } else {
        norm(&diff) / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub rel_err: f64,
    pub analytic_norm: f64,
}

/// Compares `∂y/∂θ` with central differences for every scalar of every parameter.
pub fn gradient_check(net: &MxmNet, params: &ParamStore, s: &Sample, step: f64) -> Result<Vec<GradCheck>> {
    let (_, grads) = net.gradients(params, s)?;
    let coords: Vec<(usize, usize)> = params
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(k, t)| (0..t.len()).map(move |i| (k, i)))
        .collect();
    let numeric = par::try_map(&coords, |&(k, i)| {
        let mut p = params.clone();
        let x = p.tensors()[k].data()[i];
        p.tensors_mut()[k].data_mut()[i] = x + step;
        let plus = net.predict(&p, s)?;
        p.tensors_mut()[k].data_mut()[i] = x - step;
        let minus = net.predict(&p, s)?;
        Ok((plus - minus) / (2.0 * step))
    })?;
    let mut out = Vec::with_capacity(params.len());
    let mut offset = 0;
    for ((name, t), g) in params.iter().zip(&grads) {
        let num = &numeric[offset..offset + t.len()];
        offset += t.len();
        out.push(GradCheck {
            name: name.to_string(),
            rel_err: relative_error(g.data(), num),
            analytic_norm: g.norm(),
        });
    }
    Ok(out)
}

/// Inputs for [`run_suite`].
#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub molecules: Vec<(String, Molecule)>,
    /// Molecule pairs expected to give equal predictions.
    pub pairs: Vec<(String, Molecule, Molecule)>,
    pub model: ModelConfig,
    pub seed: u64,
    pub transforms: usize,
    pub permutations: usize,
    pub random_graphs: usize,
}

impl SuiteOptions {
    pub fn new(molecules: Vec<(String, Molecule)>, model: ModelConfig, seed: u64) -> Self {
        Self {
            molecules,
            pairs: Vec::new(),
            model,
            seed,
            transforms: 10,
            permutations: 10,
            random_graphs: 200,
        }
    }
}

pub const INVARIANCE_TOL: f64 = 1e-8;
pub const PERMUTATION_TOL: f64 = 1e-10;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_STEP: f64 = 1e-4;
pub const BASIS_TOL: f64 = 1e-10;

/// Runs every check; the result lists one entry per check in a fixed order.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<Check>> {
    if opts.molecules.is_empty() {
        return Err(Error::invalid("property suite needs at least one molecule"));
    }
    let net = MxmNet::new(opts.model.clone())?;
    let params = net.init_params(opts.seed)?;
    let predict = |m: &Molecule| -> Result<f64> { net.predict(&params, &featurize(m, net.config())?) };
    let mut checks = Vec::new();

    // rigid motions
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jobs: Vec<(usize, [[f64; 3]; 3], [f64; 3])> = (0..opts.molecules.len())
        .flat_map(|m| (0..opts.transforms).map(move |_| m))
        .map(|m| {
            let r = random_rotation(&mut rng);
            let t = std::array::from_fn(|_| rng.gen_range(-20.0..20.0));
            (m, r, t)
        })
        .collect();
    let base: Vec<f64> = par::try_map(&opts.molecules, |(_, m)| predict(m))?;
    let worst = par::try_map(&jobs, |(k, r, t)| {
        Ok((predict(&opts.molecules[*k].1.transformed(r, *t))? - base[*k]).abs())
    })?
    .into_iter()
    .fold(0.0, f64::max);
    checks.push(Check::strictly_below("rigid-motion invariance", worst, INVARIANCE_TOL));

    // relabeling
    let jobs: Vec<(usize, Vec<usize>)> = (0..opts.molecules.len())
        .flat_map(|m| (0..opts.permutations).map(move |_| m))
        .map(|k| (k, random_permutation(opts.molecules[k].1.len(), &mut rng)))
        .collect();
    let worst = par::try_map(&jobs, |(k, p)| {
        Ok((predict(&opts.molecules[*k].1.permuted(p)?)? - base[*k]).abs())
    })?
    .into_iter()
    .fold(0.0, f64::max);
    checks.push(Check::strictly_below("permutation invariance", worst, PERMUTATION_TOL));

    // declared-equivalent pairs
    for (label, a, b) in &opts.pairs {
        let d = (predict(a)? - predict(b)?).abs();
        checks.push(Check::strictly_below(
            format!("pair equivalence {label}"),
            d,
            INVARIANCE_TOL,
        ));
    }

    // gradients on the smallest molecule with a small network
    let (_, small) = opts.molecules.iter().min_by_key(|(_, m)| m.len()).expect("non-empty");
    let mut gcfg = opts.model.clone();
    gcfg.hidden = 8;
    gcfg.n_layers = 2;
    let gnet = MxmNet::new(gcfg)?;
    let gparams = gnet.init_params(opts.seed)?;
    let worst = gradient_check(&gnet, &gparams, &featurize(small, gnet.config())?, GRAD_STEP)?
        .into_iter()
        .map(|g| g.rel_err)
        .fold(0.0, f64::max);
    checks.push(Check::strictly_below("gradient vs finite differences", worst, GRAD_TOL));

    // angle counts against pair enumeration
    let mut mismatches = 0u64;
    for _ in 0..opts.random_graphs {
        let n = rng.gen_range(1..=12);
        let e = random_graph(n, rng.gen_range(0.0..1.0), &mut rng);
        let undirected: Vec<(usize, usize)> = e.iter().filter(|(a, b)| a < b).collect();
        let mut pairs = 0u64;
        for x in 0..undirected.len() {
            for y in x + 1..undirected.len() {
                let (a, b) = undirected[x];
                let (c, d) = undirected[y];
                if a == c || a == d || b == c || b == d {
                    pairs += 1;
                }
            }
        }
        if pairs != count_angles(&e, n) {
            mismatches += 1;
        }
    }
    checks.push(Check::at_most("angle count closed form", mismatches as f64, 0.0));

    // instrumented message counts
    let mut mismatches = 0u64;
    for (_, m) in &opts.molecules {
        let s = featurize(m, net.config())?;
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let fwd = net.forward(&mut tape, &p, &s)?;
        let expect = count_messages(&s.graph);
        mismatches += fwd.per_block.iter().filter(|c| **c != expect).count() as u64;
    }
    checks.push(Check::at_most("message counts", mismatches as f64, 0.0));

    checks.extend(basis_checks());

    // checkpoint round trip
    let ck = Checkpoint::new(net.config().clone(), Standardizer::IDENTITY, params.clone())?;
    let back = Checkpoint::from_bytes(&ck.to_bytes())?;
    let s = featurize(&opts.molecules[0].1, net.config())?;
    let same = back.to_bytes() == ck.to_bytes() && back.predict(&net, &s)?.to_bits() == ck.predict(&net, &s)?.to_bits();
    checks.push(Check::at_most(
        "checkpoint round trip",
        if same { 0.0 } else { 1.0 },
        0.0,
    ));
    Ok(checks)
}

/// Root residuals, the `l = 0` reduction and behaviour at the cutoff.
pub fn basis_checks() -> Vec<Check> {
    let mut root_res: f64 = 0.0;
    for l in 0..N_SHBF {
        for z in bessel_roots(l, N_SRBF) {
            root_res = root_res.max(spherical_jn(l, z).abs());
        }
    }
    let b = Basis::standard();
    let c = 5.0;
    let mut l0: f64 = 0.0;
    for &d in &[0.3, 1.1, 2.5, 4.2] {
        let sbf = b.sbf(d, 1.0, c).expect("valid distance");
        for n in 1..=N_SRBF {
            let x = n as f64 * std::f64::consts::PI * d / c;
            let analytic = b.envelope(d, c) * (2.0 / c).sqrt() * x.sin() / d / (4.0 * std::f64::consts::PI).sqrt();
            l0 = l0.max((sbf[n - 1] - analytic).abs());
        }
    }
    let at_cut = b
        .rbf(c, c)
        .expect("valid")
        .into_iter()
        .chain(b.sbf(c, 0.7, c).expect("valid"))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    vec![
        Check::strictly_below("bessel roots", root_res, BASIS_TOL),
        Check::strictly_below("sbf l=0 reduction", l0, BASIS_TOL),
        Check::strictly_below("embeddings vanish at cutoff", at_cut, BASIS_TOL),
    ]
}
