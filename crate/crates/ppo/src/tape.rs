//! Reverse-mode autodiff over dense row-major matrices.
//!
//! Nodes are recorded in creation order, so a reverse sweep over the node
//! list is a valid topological order.

/// Row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    /// Stacks equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn scalar(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "not a scalar");
        self.data[0]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a (n x m) * b (m x p)`.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// `a^T * b`.
fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows, b.rows);
    let mut out = Mat::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let arow = a.row(r);
        let brow = b.row(r);
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a * b^T`.
fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols);
    let mut out = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = arow.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise `x - logsumexp(x)`.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Softplus(Var),
    Sigmoid(Var),
    Square(Var),
    LogSoftmax(Var),
    SumCols(Var),
    SumAll(Var),
    MeanAll(Var),
    Min(Var, Var),
    Clamp(Var, f64, f64),
    Cols(Var, usize),
    BroadcastRows(Var),
}

struct Node {
    value: Mat,
    op: Op,
}

/// A recording of one forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every node.
pub struct Grads(Vec<Option<Mat>>);

impl Grads {
    /// `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.0[v.0].as_ref()
    }

    /// Gradient of `v`, zeros when it does not influence the output.
    pub fn or_zeros(&self, v: Var, like: &Mat) -> Mat {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(like.rows, like.cols))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a + b` with the single row `b` added to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        assert_eq!((bm.rows, bm.cols), (1, am.cols), "bias shape");
        let mut v = am.clone();
        for r in 0..v.rows {
            for (x, y) in v.data[r * v.cols..(r + 1) * v.cols].iter_mut().zip(&bm.data) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let mut v = Mat::zeros(am.rows, am.cols);
        for r in 0..am.rows {
            let row = log_softmax(am.row(r));
            v.data[r * am.cols..(r + 1) * am.cols].copy_from_slice(&row);
        }
        self.push(v, Op::LogSoftmax(a))
    }

    /// Row sums as an `n x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let data = (0..am.rows).map(|r| am.row(r).iter().sum()).collect();
        let v = Mat::from_vec(am.rows, 1, data);
        self.push(v, Op::SumCols(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Mat::from_vec(1, 1, vec![self.value(a).data.iter().sum()]);
        self.push(v, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let n = am.data.len().max(1) as f64;
        let v = Mat::from_vec(1, 1, vec![am.data.iter().sum::<f64>() / n]);
        self.push(v, Op::MeanAll(a))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), f64::min);
        self.push(v, Op::Min(a, b))
    }

    /// Elementwise clamp; the gradient passes only inside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// Columns `start..end`.
    pub fn cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let am = self.value(a);
        assert!(start <= end && end <= am.cols, "column range");
        let w = end - start;
        let mut data = Vec::with_capacity(am.rows * w);
        for r in 0..am.rows {
            data.extend_from_slice(&am.row(r)[start..end]);
        }
        let v = Mat::from_vec(am.rows, w, data);
        self.push(v, Op::Cols(a, start))
    }

    /// Repeats a single row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let am = self.value(a);
        assert_eq!(am.rows, 1, "broadcast needs one row");
        let mut data = Vec::with_capacity(n * am.cols);
        for _ in 0..n {
            data.extend_from_slice(&am.data);
        }
        let v = Mat::from_vec(n, am.cols, data);
        self.push(v, Op::BroadcastRows(a))
    }

    /// Gradients of the `1 x 1` node `out`.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.value(out).data.len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Mat::filled(1, 1, 1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut send = |v: Var, d: Mat| match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&d),
                slot @ None => *slot = Some(d),
            };
            let y = &node.value;
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    send(a, matmul_nt(&g, self.value(b)));
                    send(b, matmul_tn(self.value(a), &g));
                }
                Op::AddRow(a, b) => {
                    let mut db = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, x) in db.data.iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    send(a, g.clone());
                    send(b, db);
                }
                Op::Add(a, b) => {
                    send(a, g.clone());
                    send(b, g.clone());
                }
                Op::Sub(a, b) => {
                    send(a, g.clone());
                    send(b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    send(a, g.zip(self.value(b), |x, y| x * y));
                    send(b, g.zip(self.value(a), |x, y| x * y));
                }
                Op::Scale(a, c) => send(a, g.map(|x| x * c)),
                Op::AddScalar(a) => send(a, g.clone()),
                Op::Tanh(a) => send(a, g.zip(y, |x, t| x * (1.0 - t * t))),
                Op::Exp(a) => send(a, g.zip(y, |x, e| x * e)),
                Op::Softplus(a) => send(a, g.zip(self.value(a), |x, v| x * sigmoid(v))),
                Op::Sigmoid(a) => send(a, g.zip(y, |x, s| x * s * (1.0 - s))),
                Op::Square(a) => send(a, g.zip(self.value(a), |x, v| 2.0 * x * v)),
                Op::LogSoftmax(a) => {
                    let mut d = g.clone();
                    for r in 0..g.rows {
                        let gs: f64 = g.row(r).iter().sum();
                        for (c, dv) in d.data[r * g.cols..(r + 1) * g.cols].iter_mut().enumerate() {
                            *dv -= y.get(r, c).exp() * gs;
                        }
                    }
                    send(a, d);
                }
                Op::SumCols(a) => {
                    let am = self.value(a);
                    let mut d = Mat::zeros(am.rows, am.cols);
                    for r in 0..am.rows {
                        d.data[r * am.cols..(r + 1) * am.cols].fill(g.data[r]);
                    }
                    send(a, d);
                }
                Op::SumAll(a) => {
                    let am = self.value(a);
                    send(a, Mat::filled(am.rows, am.cols, g.data[0]));
                }
                Op::MeanAll(a) => {
                    let am = self.value(a);
                    let n = am.data.len().max(1) as f64;
                    send(a, Mat::filled(am.rows, am.cols, g.data[0] / n));
                }
                Op::Min(a, b) => {
                    let (am, bm) = (self.value(a), self.value(b));
                    let pick_a: Vec<bool> = am.data.iter().zip(&bm.data).map(|(x, y)| x <= y).collect();
                    let mut da = g.clone();
                    let mut db = g.clone();
                    for (i, &pa) in pick_a.iter().enumerate() {
                        if pa {
                            db.data[i] = 0.0;
                        } else {
                            da.data[i] = 0.0;
                        }
                    }
                    send(a, da);
                    send(b, db);
                }
                Op::Clamp(a, lo, hi) => {
                    send(a, g.zip(self.value(a), |x, v| if (lo..=hi).contains(&v) { x } else { 0.0 }));
                }
                Op::Cols(a, start) => {
                    let am = self.value(a);
                    let mut d = Mat::zeros(am.rows, am.cols);
                    for r in 0..g.rows {
                        d.data[r * am.cols + start..r * am.cols + start + g.cols].copy_from_slice(g.row(r));
                    }
                    send(a, d);
                }
                Op::BroadcastRows(a) => {
                    let mut d = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (dv, x) in d.data.iter_mut().zip(g.row(r)) {
                            *dv += x;
                        }
                    }
                    send(a, d);
                }
            }
            grads[i] = Some(g);
        }
        Grads(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Central differences of `f` at every entry of `inputs[which]`.
    fn numeric(f: &dyn Fn(&[Mat]) -> f64, inputs: &[Mat], which: usize) -> Vec<f64> {
        let h = 1e-6;
        (0..inputs[which].data.len())
            .map(|i| {
                let mut up = inputs.to_vec();
                let mut dn = inputs.to_vec();
                up[which].data[i] += h;
                dn[which].data[i] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    }

    fn check(build: &dyn Fn(&mut Tape, &[Var]) -> Var, inputs: &[Mat]) {
        let eval = |ins: &[Mat]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = ins.iter().map(|m| t.leaf(m.clone())).collect();
            let out = build(&mut t, &vars);
            t.value(out).scalar()
        };
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
        let out = build(&mut t, &vars);
        let g = t.backward(out);
        for (w, &v) in vars.iter().enumerate() {
            let analytic = g.or_zeros(v, &inputs[w]).data;
            let num = numeric(&eval, inputs, w);
            for (a, n) in analytic.iter().zip(&num) {
                assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "input {w}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn dense_tanh_chain_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ins = vec![random(&mut rng, 4, 3), random(&mut rng, 3, 5), random(&mut rng, 1, 5)];
        check(
            &|t, v| {
                let z = t.matmul(v[0], v[1]);
                let z = t.add_row(z, v[2]);
                let z = t.tanh(z);
                let z = t.square(z);
                t.mean_all(z)
            },
            &ins,
        );
    }

    #[test]
    fn softmax_softplus_and_slices_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ins = vec![random(&mut rng, 3, 6), random(&mut rng, 3, 2), random(&mut rng, 1, 2)];
        check(
            &|t, v| {
                let head = t.cols(v[0], 2, 6);
                let ls = t.log_softmax(head);
                let p = t.exp(ls);
                let e = t.mul(p, ls);
                let a = t.sum_cols(e);
                let b = t.cols(v[0], 0, 2);
                let b = t.softplus(b);
                let s = t.sigmoid(v[1]);
                let b = t.mul(b, s);
                let row = t.broadcast_rows(v[2], 3);
                let b = t.sub(b, row);
                let b = t.sum_cols(b);
                let c = t.add(a, b);
                let c = t.scale(c, -0.7);
                let c = t.add_scalar(c, 3.0);
                t.sum_all(c)
            },
            &ins,
        );
    }

    #[test]
    fn min_and_clamp_route_gradients() {
        let mut t = Tape::new();
        let a = t.leaf(Mat::from_vec(1, 3, vec![1.0, 5.0, -2.0]));
        let b = t.leaf(Mat::from_vec(1, 3, vec![2.0, 3.0, 0.0]));
        let m = t.min(a, b);
        let c = t.clamp(m, 0.5, 2.5);
        let s = t.sum_all(c);
        let g = t.backward(s);
        assert_eq!(g.get(a).unwrap().data, vec![1.0, 0.0, 0.0]);
        assert_eq!(g.get(b).unwrap().data, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn exp_and_square_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ins = vec![random(&mut rng, 2, 2), random(&mut rng, 2, 2)];
        check(
            &|t, v| {
                let e = t.exp(v[0]);
                let d = t.sub(e, v[1]);
                let q = t.square(d);
                let m = t.min(q, e);
                t.mean_all(m)
            },
            &ins,
        );
    }

    #[test]
    fn stable_scalar_helpers() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
        let l = log_softmax(&[1000.0, 1000.0]);
        assert!((l[0] - 0.5f64.ln()).abs() < 1e-12);
    }
}
