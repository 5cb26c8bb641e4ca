use super::{gemm_acc, gemm_nt_acc, gemm_tn_acc, swish, swish_grad, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    Swish(usize),
    Abs(usize),
    Concat(Vec<usize>),
    Gather(usize, Vec<usize>),
    SegmentSum(usize, Vec<usize>),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of a forward computation.
///
/// Inputs always precede the operations that consume them, so a reverse scan
/// is a valid topological order for backpropagation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every differentiable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.require_matrix("matmul")?;
        let (k2, n) = tb.require_matrix("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a.0, b.0), rg))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Adds a bias row of length `n` to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (m, n) = tx.require_matrix("add_bias")?;
        if tb.len() != n {
            return Err(shape_err("add_bias", tx, tb));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n.max(1)).take(m) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        let rg = self.rg(&[x, bias]);
        Ok(self.push(value, Op::AddBias(x.0, bias.0), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x.0, factor), rg)
    }

    pub fn swish(&mut self, x: Var) -> Var {
        let value = self.value(x).map(swish);
        let rg = self.rg(&[x]);
        self.push(value, Op::Swish(x.0), rg)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::abs);
        let rg = self.rg(&[x]);
        self.push(value, Op::Abs(x.0), rg)
    }

    /// Concatenates matrices with equal row counts along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let (m, _) = self.value(*first).require_matrix("concat")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            let (r, c) = t.require_matrix("concat")?;
            if r != m {
                return Err(shape_err("concat", self.value(*first), t));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(*p).data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        let rg = self.rg(parts);
        Ok(self.push(value, Op::Concat(parts.iter().map(|v| v.0).collect()), rg))
    }

    /// Selects rows `index[0], index[1], …` of a matrix.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let (n, c) = tx.require_matrix("gather")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("gather index {bad} out of range for {n} rows")));
        }
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            data.extend_from_slice(&tx.data()[i * c..(i + 1) * c]);
        }
        let value = Tensor::matrix(index.len(), c, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Gather(x.0, index.to_vec()), rg))
    }

    /// Sums rows of `x` into `n_segments` buckets: `out[segment[e]] += x[e]`.
    ///
    /// Buckets that receive no rows are zero.
    pub fn segment_sum(&mut self, x: Var, segment: &[usize], n_segments: usize) -> Result<Var> {
        let tx = self.value(x);
        let (e, c) = tx.require_matrix("segment_sum")?;
        if segment.len() != e {
            return Err(Error::invalid(format!(
                "segment_sum: {} segment ids for {e} rows",
                segment.len()
            )));
        }
        if let Some(&bad) = segment.iter().find(|&&s| s >= n_segments) {
            return Err(Error::invalid(format!(
                "segment id {bad} out of range for {n_segments} segments"
            )));
        }
        let mut data = vec![0.0; n_segments * c];
        for (row, &s) in segment.iter().enumerate() {
            let src = &tx.data()[row * c..(row + 1) * c];
            for (o, v) in data[s * c..(s + 1) * c].iter_mut().zip(src) {
                *o += v;
            }
        }
        let value = Tensor::matrix(n_segments, c, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::SegmentSum(x.0, segment.to_vec()), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        let rg = self.rg(&[x]);
        self.push(value, Op::Sum(x.0), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Mean(x.0), rg))
    }

    /// Reverse-mode sweep from a single-element output.
    ///
    /// The returned gradients cover every leaf recorded with [`Tape::leaf`];
    /// a leaf used several times receives the sum of all contributions.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if !out.is_scalar() {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf => continue,
                _ => match grads[idx].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.propagate(idx, &g, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, g) {
                (Op::Leaf, Some(g)) if node.requires_grad => {
                    Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape"))
                }
                (Op::Leaf, None) if node.requires_grad => Some(Tensor::zeros(node.value.shape())),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], target: usize, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[target].requires_grad {
            return;
        }
        let slot = grads[target].get_or_insert_with(|| vec![0.0; self.nodes[target].value.len()]);
        f(slot);
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let ta = &self.nodes[a].value;
                let tb = &self.nodes[b].value;
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                self.accumulate(grads, a, |da| gemm_nt_acc(g, tb.data(), da, m, n, k));
                self.accumulate(grads, b, |db| gemm_tn_acc(ta.data(), g, db, m, k, n));
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, |d| add_into(d, g));
                self.accumulate(grads, b, |d| add_into(d, g));
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, |d| add_into(d, g));
                self.accumulate(grads, b, |d| {
                    for (o, v) in d.iter_mut().zip(g) {
                        *o -= v;
                    }
                });
            }
            &Op::Mul(a, b) => {
                let va = self.nodes[a].value.data();
                let vb = self.nodes[b].value.data();
                self.accumulate(grads, a, |d| {
                    for ((o, gv), y) in d.iter_mut().zip(g).zip(vb) {
                        *o += gv * y;
                    }
                });
                self.accumulate(grads, b, |d| {
                    for ((o, gv), x) in d.iter_mut().zip(g).zip(va) {
                        *o += gv * x;
                    }
                });
            }
            &Op::AddBias(x, bias) => {
                self.accumulate(grads, x, |d| add_into(d, g));
                let n = self.nodes[bias].value.len();
                self.accumulate(grads, bias, |d| {
                    if n > 0 {
                        for row in g.chunks(n) {
                            add_into(d, row);
                        }
                    }
                });
            }
            &Op::Scale(x, factor) => {
                self.accumulate(grads, x, |d| {
                    for (o, v) in d.iter_mut().zip(g) {
                        *o += v * factor;
                    }
                });
            }
            &Op::Swish(x) => {
                let vx = self.nodes[x].value.data();
                self.accumulate(grads, x, |d| {
                    for ((o, gv), &xv) in d.iter_mut().zip(g).zip(vx) {
                        *o += gv * swish_grad(xv);
                    }
                });
            }
            &Op::Abs(x) => {
                let vx = self.nodes[x].value.data();
                self.accumulate(grads, x, |d| {
                    for ((o, gv), &xv) in d.iter_mut().zip(g).zip(vx) {
                        // subgradient 0 at the kink
                        *o += gv
                            * if xv > 0.0 {
                                1.0
                            } else if xv < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                    }
                });
            }
            Op::Concat(parts) => {
                let m = node.value.shape()[0];
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p].value.cols();
                    self.accumulate(grads, p, |d| {
                        for i in 0..m {
                            let src = &g[i * total + offset..i * total + offset + w];
                            add_into(&mut d[i * w..(i + 1) * w], src);
                        }
                    });
                    offset += w;
                }
            }
            Op::Gather(x, index) => {
                let c = node.value.cols();
                self.accumulate(grads, *x, |d| {
                    for (row, &i) in index.iter().enumerate() {
                        add_into(&mut d[i * c..(i + 1) * c], &g[row * c..(row + 1) * c]);
                    }
                });
            }
            Op::SegmentSum(x, segment) => {
                let c = node.value.cols();
                self.accumulate(grads, *x, |d| {
                    for (row, &s) in segment.iter().enumerate() {
                        add_into(&mut d[row * c..(row + 1) * c], &g[s * c..(s + 1) * c]);
                    }
                });
            }
            &Op::Sum(x) => {
                self.accumulate(grads, x, |d| d.iter_mut().for_each(|o| *o += g[0]));
            }
            &Op::Mean(x) => {
                let scale = g[0] / self.nodes[x].value.len() as f64;
                self.accumulate(grads, x, |d| d.iter_mut().for_each(|o| *o += scale));
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central finite differences of `f` with respect to every entry of `inputs[which]`.
    fn numeric_grad(inputs: &[Tensor], which: usize, f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> Tensor {
        let eval = |inputs: &[Tensor]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = f(&mut tape, &vars);
            tape.value(out).item()
        };
        let h = 1e-5;
        let mut grad = Tensor::zeros(inputs[which].shape());
        for e in 0..inputs[which].len() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[e] += h;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[e] -= h;
            grad.data_mut()[e] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        grad
    }

    fn check(inputs: Vec<Tensor>, f: &dyn Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let grads = tape.backward(out).unwrap();
        for (i, v) in vars.iter().enumerate() {
            let analytic = grads.get(*v).unwrap();
            let numeric = numeric_grad(&inputs, i, f);
            let denom = analytic.norm().max(numeric.norm()).max(1e-12);
            let mut diff = analytic.clone();
            for (d, n) in diff.data_mut().iter_mut().zip(numeric.data()) {
                *d -= n;
            }
            let rel = diff.norm() / denom;
            assert!(rel < 1e-6, "input {i}: relative error {rel}");
        }
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let b = random(&mut rng, 3, 4);
        let i3 = tape.constant(Tensor::identity(3));
        let vb = tape.constant(b.clone());
        let p = tape.matmul(i3, vb).unwrap();
        assert_eq!(tape.value(p), &b);

        let two = tape.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let three = tape.constant(Tensor::matrix(1, 1, vec![3.0]).unwrap());
        let six = tape.matmul(two, three).unwrap();
        assert_eq!(tape.value(six).data(), &[6.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 4, 5);
        let b = random(&mut rng, 5, 3);
        let mut reference = vec![0.0; 12];
        for i in 0..4 {
            for j in 0..3 {
                for k in 0..5 {
                    reference[i * 3 + j] += a.get(i, k) * b.get(k, j);
                }
            }
        }
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a), tape.constant(b));
        let c = tape.matmul(va, vb).unwrap();
        for (x, y) in tape.value(c).data().iter().zip(&reference) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[4, 2]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn sum_and_square_gradients() {
        let x = Tensor::matrix(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let mut tape = Tape::new();
        let vx = tape.leaf(x.clone());
        let s = tape.sum(vx);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(vx).unwrap().data(), &[1.0; 4]);

        let mut tape = Tape::new();
        let vx = tape.leaf(x.clone());
        let sq = tape.mul(vx, vx).unwrap();
        let s = tape.sum(sq);
        let g = tape.backward(s).unwrap();
        let expected: Vec<f64> = x.data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(g.get(vx).unwrap().data(), expected.as_slice());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check(vec![random(&mut rng, 3, 4), random(&mut rng, 4, 5)], &|t, v| {
            let p = t.matmul(v[0], v[1]).unwrap();
            let s = t.swish(p);
            t.sum(s)
        });
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random(&mut rng, 4, 3);
        // nonlinear head so that every primitive's gradient is non-trivial
        let head = move |t: &mut Tape, x: Var| {
            let wv = t.constant(w.clone());
            let y = t.matmul(x, wv).unwrap();
            let y = t.swish(y);
            let y2 = t.mul(y, y).unwrap();
            t.sum(y2)
        };
        let h1 = head.clone();
        check(vec![random(&mut rng, 5, 4), random(&mut rng, 5, 4)], &move |t, v| {
            let a = t.add(v[0], v[1]).unwrap();
            h1(t, a)
        });
        let h2 = head.clone();
        check(vec![random(&mut rng, 5, 4), random(&mut rng, 5, 4)], &move |t, v| {
            let a = t.sub(v[0], v[1]).unwrap();
            let b = t.mul(a, v[0]).unwrap();
            h2(t, b)
        });
        let h3 = head.clone();
        check(vec![random(&mut rng, 5, 4), random(&mut rng, 1, 4)], &move |t, v| {
            let a = t.add_bias(v[0], v[1]).unwrap();
            let a = t.scale(a, -1.7);
            h3(t, a)
        });
        let h4 = head.clone();
        check(vec![random(&mut rng, 5, 1), random(&mut rng, 5, 3)], &move |t, v| {
            let a = t.concat(&[v[0], v[1]]).unwrap();
            h4(t, a)
        });
        let h5 = head.clone();
        check(vec![random(&mut rng, 3, 4)], &move |t, v| {
            let a = t.gather(v[0], &[2, 0, 2, 1, 2]).unwrap();
            h5(t, a)
        });
        let h6 = head.clone();
        check(vec![random(&mut rng, 6, 4)], &move |t, v| {
            let a = t.segment_sum(v[0], &[0, 3, 3, 1, 0, 3], 4).unwrap();
            h6(t, a)
        });
        let h7 = head;
        check(vec![random(&mut rng, 5, 4)], &move |t, v| {
            // offset keeps every entry away from the |x| kink
            let shifted = t.scale(v[0], 3.0);
            let a = t.abs(shifted);
            let m = t.mean(a).unwrap();
            let s = h7(t, v[0]);
            t.mul(m, s).unwrap()
        });
    }

    #[test]
    fn segment_sum_brute_force_and_empty_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 7, 3);
        let seg = [4, 0, 4, 2, 0, 4, 2];
        let mut tape = Tape::new();
        let vx = tape.constant(x.clone());
        let s = tape.segment_sum(vx, &seg, 6).unwrap();
        let out = tape.value(s);
        for bucket in 0..6 {
            for c in 0..3 {
                let expected: f64 = (0..7).filter(|&r| seg[r] == bucket).map(|r| x.get(r, c)).sum();
                assert_eq!(out.get(bucket, c), expected);
            }
        }
        assert!(out.row(1).iter().all(|&v| v == 0.0));
        assert!(out.row(5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::filled(&[2, 2], 1.0));
        let unused = tape.leaf(Tensor::filled(&[3], 1.0));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(&mut rng, 6, 5);
        let b = random(&mut rng, 5, 4);
        let run = || {
            let mut tape = Tape::new();
            let (va, vb) = (tape.leaf(a.clone()), tape.leaf(b.clone()));
            let p = tape.matmul(va, vb).unwrap();
            let p = tape.swish(p);
            let p = tape.segment_sum(p, &[1, 0, 1, 2, 2, 0], 3).unwrap();
            let s = tape.sum(p);
            let g = tape.backward(s).unwrap();
            (tape.value(s).item().to_bits(), g.get(va).unwrap().clone())
        };
        let (s1, g1) = run();
        let (s2, g2) = run();
        assert_eq!(s1, s2);
        assert_eq!(g1, g2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn segment_sum_is_order_independent(
                rows in proptest::collection::vec((0usize..5, -10.0f64..10.0), 1..30),
                seed in any::<u64>(),
            ) {
                let n = rows.len();
                let x = Tensor::matrix(n, 1, rows.iter().map(|r| r.1).collect()).unwrap();
                let seg: Vec<usize> = rows.iter().map(|r| r.0).collect();
                let mut perm: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                use rand::seq::SliceRandom;
                perm.shuffle(&mut rng);
                let xp = Tensor::matrix(n, 1, perm.iter().map(|&p| x.data()[p]).collect()).unwrap();
                let segp: Vec<usize> = perm.iter().map(|&p| seg[p]).collect();

                let mut tape = Tape::new();
                let a = tape.constant(x);
                let b = tape.constant(xp);
                let sa = tape.segment_sum(a, &seg, 5).unwrap();
                let sb = tape.segment_sum(b, &segp, 5).unwrap();
                let diff = tape.value(sa).max_abs_diff(tape.value(sb));
                prop_assert!(diff < 1e-12);
            }
        }
    }
}
