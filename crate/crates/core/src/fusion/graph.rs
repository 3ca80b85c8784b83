//! Tape-based reverse-mode differentiation over [`Tensor`] values.

use super::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var, Vec<f64>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    RowSlice(Var, usize),
    ColSlice(Var, usize),
    RepeatRows(Var),
    Transpose(Var),
    GroupMax(Var, Vec<Option<usize>>),
    Gather(Var, Vec<usize>),
    CrossEntropyRows(Var, Vec<usize>, Tensor),
    SmoothL1(Var, Tensor),
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A forward computation recorded for differentiation. Parameters are read
/// in place from `params` by index.
pub struct Graph<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
    branches: u64,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

fn smooth_l1(d: f64) -> (f64, f64) {
    if d.abs() < 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p [Tensor]) -> Graph<'p> {
        Graph {
            params,
            nodes: Vec::new(),
            branches: 0xcbf2_9ce4_8422_2325,
        }
    }

    /// Hash of every discrete choice made so far (max-pool winners, smooth-L1
    /// regimes). Equal hashes mean the same piecewise-smooth branch.
    pub fn branch_signature(&self) -> u64 {
        self.branches
    }

    fn note_branch(&mut self, v: u64) {
        self.branches = (self.branches ^ v).wrapping_mul(0x0100_0000_01b3);
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(i) => &self.params[i],
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, index: usize) -> Var {
        self.push(Tensor::zeros(0, 0), Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.rows(), x.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds a 1×C row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((r.rows(), r.cols()), (1, x.cols()), "row broadcast shape mismatch");
        let c = x.cols();
        let data = x.data().iter().enumerate().map(|(i, v)| v + r.data()[i % c]).collect();
        let v = Tensor::new(x.rows(), c, data).expect("same shape");
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(x.rows(), x.cols());
        let c = x.cols();
        for r in 0..x.rows() {
            softmax_row(x.row(r), &mut v.data_mut()[r * c..(r + 1) * c]);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Per-row standardization (no gain or bias).
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let mut v = Tensor::zeros(x.rows(), c);
        let mut inv = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            for (o, y) in v.data_mut()[r * c..(r + 1) * c].iter_mut().zip(row) {
                *o = (y - mean) * s;
            }
            inv.push(s);
        }
        self.push(v, Op::LayerNormRows(a, inv))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let t = self.value(*p);
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                data.extend_from_slice(t.row(r));
            }
        }
        let v = Tensor::new(rows, cols, data).expect("sized");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let v = Tensor::new(rows, cols, data).expect("sized");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Rows `start..start + n`.
    pub fn row_slice(&mut self, a: Var, start: usize, n: usize) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let v = Tensor::new(n, c, x.data()[start * c..(start + n) * c].to_vec()).expect("sized");
        self.push(v, Op::RowSlice(a, start))
    }

    /// Columns `start..start + n`.
    pub fn col_slice(&mut self, a: Var, start: usize, n: usize) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(x.rows() * n);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row(r)[start..start + n]);
        }
        let v = Tensor::new(x.rows(), n, data).expect("sized");
        self.push(v, Op::ColSlice(a, start))
    }

    /// Tiles a 1×C row `n` times.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows(), 1, "repeat_rows expects a single row");
        let v = Tensor::new(n, x.cols(), x.data().repeat(n)).expect("sized");
        self.push(v, Op::RepeatRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Output row `g` is the column-wise max over rows `groups[g]` of `a`;
    /// empty groups give zeros.
    pub fn group_max(&mut self, a: Var, groups: &[Vec<usize>]) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let mut v = Tensor::zeros(groups.len(), c);
        let mut arg = vec![None; groups.len() * c];
        for (g, rows) in groups.iter().enumerate() {
            for j in 0..c {
                let mut best: Option<(usize, f64)> = None;
                for &r in rows {
                    let y = x.get(r, j);
                    if best.is_none_or(|(_, b)| y > b) {
                        best = Some((r, y));
                    }
                }
                if let Some((r, y)) = best {
                    v.data_mut()[g * c + j] = y;
                    arg[g * c + j] = Some(r);
                }
            }
        }
        for a in &arg {
            self.note_branch(a.map_or(u64::MAX, |r| r as u64));
        }
        self.push(v, Op::GroupMax(a, arg))
    }

    /// Rows of `table` selected by `idx` (embedding lookup).
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Var {
        let t = self.value(table);
        let c = t.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let v = Tensor::new(idx.len(), c, data).expect("sized");
        self.push(v, Op::Gather(table, idx.to_vec()))
    }

    /// Mean over rows of `-log softmax(row)[target]`; 1×1.
    pub fn cross_entropy_rows(&mut self, a: Var, targets: &[usize]) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows(), targets.len(), "one target per row");
        let c = x.cols();
        let mut probs = Tensor::zeros(x.rows(), c);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = x.row(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            softmax_row(row, &mut probs.data_mut()[r * c..(r + 1) * c]);
        }
        let n = targets.len().max(1) as f64;
        self.push(Tensor::scalar(loss / n), Op::CrossEntropyRows(a, targets.to_vec(), probs))
    }

    /// Mean smooth-L1 (β = 1) between `a` and a constant target; 1×1.
    pub fn smooth_l1(&mut self, a: Var, target: Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), target.shape(), "smooth_l1 shape mismatch");
        let mut loss = 0.0;
        let mut regimes = Vec::with_capacity(x.len());
        for (p, q) in x.data().iter().zip(target.data()) {
            let d = p - q;
            loss += smooth_l1(d).0;
            regimes.push(u64::from(d.abs() < 1.0));
        }
        let n = x.len().max(1) as f64;
        for r in regimes {
            self.note_branch(r);
        }
        self.push(Tensor::scalar(loss / n), Op::SmoothL1(a, target))
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let shape = self.value(terms[0].0).shape();
        let mut v = Tensor::zeros(shape[0], shape[1]);
        for (t, w) in terms {
            let x = self.value(*t);
            assert_eq!(x.shape(), shape, "weighted_sum shape mismatch");
            for (o, y) in v.data_mut().iter_mut().zip(x.data()) {
                *o += w * y;
            }
        }
        self.push(v, Op::WeightedSum(terms.to_vec()))
    }

    /// Gradients of the scalar `loss` with respect to each parameter index
    /// (`None` for parameters the loss does not touch).
    pub fn backward(&self, loss: Var) -> Vec<Option<Tensor>> {
        assert_eq!(self.shape(loss), [1, 1], "loss must be a scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out: Vec<Option<Tensor>> = vec![None; self.params.len()];

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Input => {}
                Op::Param(p) => match &mut out[*p] {
                    Some(t) => t.add_assign(&g),
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (x, z) = (self.value(*a), self.value(*b));
                    let ga: Vec<f64> = g.data().iter().zip(z.data()).map(|(p, q)| p * q).collect();
                    let gb: Vec<f64> = g.data().iter().zip(x.data()).map(|(p, q)| p * q).collect();
                    acc(&mut grads, *a, Tensor::new(g.rows(), g.cols(), ga).expect("sized"));
                    acc(&mut grads, *b, Tensor::new(g.rows(), g.cols(), gb).expect("sized"));
                }
                Op::AddRow(a, row) => {
                    let c = g.cols();
                    let mut gr = vec![0.0; c];
                    for (k, v) in g.data().iter().enumerate() {
                        gr[k % c] += v;
                    }
                    acc(&mut grads, *row, Tensor::row_vector(gr));
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|v| v * s)),
                Op::Sigmoid(a) => {
                    let d = g.data().iter().zip(y.data()).map(|(p, s)| p * s * (1.0 - s)).collect();
                    acc(&mut grads, *a, Tensor::new(g.rows(), g.cols(), d).expect("sized"));
                }
                Op::Tanh(a) => {
                    let d = g.data().iter().zip(y.data()).map(|(p, t)| p * (1.0 - t * t)).collect();
                    acc(&mut grads, *a, Tensor::new(g.rows(), g.cols(), d).expect("sized"));
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let d = g.data().iter().zip(x.data()).map(|(p, &v)| p * gelu_grad(v)).collect();
                    acc(&mut grads, *a, Tensor::new(g.rows(), g.cols(), d).expect("sized"));
                }
                Op::SoftmaxRows(a) => {
                    let c = g.cols();
                    let mut d = vec![0.0; g.len()];
                    for r in 0..g.rows() {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for j in 0..c {
                            d[r * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(g.rows(), c, d).expect("sized"));
                }
                Op::LayerNormRows(a, inv) => {
                    let c = g.cols();
                    let n = c as f64;
                    let mut d = vec![0.0; g.len()];
                    for r in 0..g.rows() {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let mg = gr.iter().sum::<f64>() / n;
                        let mgy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / n;
                        for j in 0..c {
                            d[r * c + j] = inv[r] * (gr[j] - mg - yr[j] * mgy);
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(g.rows(), c, d).expect("sized"));
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let mut d = Vec::with_capacity(g.rows() * w);
                        for r in 0..g.rows() {
                            d.extend_from_slice(&g.row(r)[start..start + w]);
                        }
                        acc(&mut grads, *p, Tensor::new(g.rows(), w, d).expect("sized"));
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let c = g.cols();
                    let mut start = 0;
                    for p in parts {
                        let h = self.value(*p).rows();
                        let d = g.data()[start * c..(start + h) * c].to_vec();
                        acc(&mut grads, *p, Tensor::new(h, c, d).expect("sized"));
                        start += h;
                    }
                }
                Op::RowSlice(a, start) => {
                    let x = self.value(*a);
                    let c = x.cols();
                    let mut d = Tensor::zeros(x.rows(), c);
                    d.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    acc(&mut grads, *a, d);
                }
                Op::ColSlice(a, start) => {
                    let x = self.value(*a);
                    let c = x.cols();
                    let mut d = Tensor::zeros(x.rows(), c);
                    for r in 0..g.rows() {
                        d.data_mut()[r * c + start..r * c + start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, d);
                }
                Op::RepeatRows(a) => {
                    let c = g.cols();
                    let mut d = vec![0.0; c];
                    for r in 0..g.rows() {
                        for (o, v) in d.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *a, Tensor::row_vector(d));
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::GroupMax(a, arg) => {
                    let x = self.value(*a);
                    let c = x.cols();
                    let mut d = Tensor::zeros(x.rows(), c);
                    for (k, src) in arg.iter().enumerate() {
                        if let Some(r) = src {
                            d.data_mut()[r * c + k % c] += g.data()[k];
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Gather(table, idx) => {
                    let t = self.value(*table);
                    let c = t.cols();
                    let mut d = Tensor::zeros(t.rows(), c);
                    for (k, &row) in idx.iter().enumerate() {
                        for j in 0..c {
                            d.data_mut()[row * c + j] += g.get(k, j);
                        }
                    }
                    acc(&mut grads, *table, d);
                }
                Op::CrossEntropyRows(a, targets, probs) => {
                    let s = g.data()[0] / targets.len().max(1) as f64;
                    let c = probs.cols();
                    let mut d = probs.map(|p| p * s);
                    for (r, &t) in targets.iter().enumerate() {
                        d.data_mut()[r * c + t] -= s;
                    }
                    acc(&mut grads, *a, d);
                }
                Op::SmoothL1(a, target) => {
                    let x = self.value(*a);
                    let s = g.data()[0] / x.len().max(1) as f64;
                    let d = x.data().iter().zip(target.data()).map(|(p, q)| s * smooth_l1(p - q).1).collect();
                    acc(&mut grads, *a, Tensor::new(x.rows(), x.cols(), d).expect("sized"));
                }
                Op::WeightedSum(terms) => {
                    for (t, w) in terms {
                        acc(&mut grads, *t, g.map(|v| v * w));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central-difference check of every parameter entry for a small graph.
    fn check(params: Vec<Tensor>, build: impl Fn(&mut Graph) -> Var) {
        let g = {
            let mut gr = Graph::new(&params);
            let l = build(&mut gr);
            gr.backward(l)
        };
        let eval = |ps: &[Tensor]| {
            let mut gr = Graph::new(ps);
            let l = build(&mut gr);
            gr.value(l).data()[0]
        };
        let h = 1e-6;
        for (pi, p) in params.iter().enumerate() {
            for k in 0..p.len() {
                let mut plus = params.clone();
                plus[pi].data_mut()[k] += h;
                let mut minus = params.clone();
                minus[pi].data_mut()[k] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = g[pi].as_ref().map_or(0.0, |t| t.data()[k]);
                assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "param {pi}[{k}]: fd {fd} vs {an}");
            }
        }
    }

    #[test]
    fn op_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps = vec![rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 4, 2), rand_tensor(&mut rng, 1, 2), rand_tensor(&mut rng, 6, 4)];
        check(ps, |g| {
            let (a, b, r, t) = (g.param(0), g.param(1), g.param(2), g.param(3));
            let ab = g.matmul(a, b);
            let x = g.add_row(ab, r);
            let s = g.sigmoid(x);
            let th = g.tanh(x);
            let m = g.mul(s, th);
            let ge = g.gelu(m);
            let sm = g.softmax_rows(ge);
            let ln = g.layer_norm_rows(a);
            let tr = g.transpose(ln);
            let abt = g.matmul_t(tr, tr);
            let cc = g.concat_cols(&[sm, x]);
            let cr = g.concat_rows(&[cc, cc]);
            let rs = g.row_slice(cr, 2, 3);
            let cs = g.col_slice(rs, 1, 2);
            let rep = g.repeat_rows(r, 3);
            let d = g.sub(cs, rep);
            let emb = g.gather(t, &[5, 1, 5]);
            let gm = g.group_max(emb, &[vec![0, 1], vec![2], vec![]]);
            let ce = g.cross_entropy_rows(d, &[0, 1, 1]);
            let sl = g.smooth_l1(gm, Tensor::filled(3, 4, 0.3));
            let sc = g.scale(abt, 0.1);
            let ce2 = g.cross_entropy_rows(sc, &[3, 2, 1, 0]);
            let sum = g.weighted_sum(&[(ce, 0.3), (sl, 10.0), (ce2, 0.1)]);
            g.add(sum, sum)
        });
    }

    #[test]
    fn softmax_and_layernorm_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ps = vec![rand_tensor(&mut rng, 5, 7)];
        let mut g = Graph::new(&ps);
        let a = g.param(0);
        let s = g.softmax_rows(a);
        let l = g.layer_norm_rows(a);
        for r in 0..5 {
            assert!((g.value(s).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let row = g.value(l).row(r);
            let mean = row.iter().sum::<f64>() / 7.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0;
            assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn softmax_gradient_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ps = vec![rand_tensor(&mut rng, 2, 5), rand_tensor(&mut rng, 2, 5)];
        let mut g = Graph::new(&ps);
        let (a, w) = (g.param(0), g.param(1));
        let s = g.softmax_rows(a);
        let m = g.mul(s, w);
        let t = g.transpose(m);
        let ones5 = g.input(Tensor::filled(1, 5, 1.0));
        let ones2 = g.input(Tensor::filled(2, 1, 1.0));
        let r = g.matmul(ones5, t);
        let l = g.matmul(r, ones2);
        let grads = g.backward(l);
        let ga = grads[0].as_ref().unwrap();
        for r in 0..2 {
            assert!(ga.row(r).iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
