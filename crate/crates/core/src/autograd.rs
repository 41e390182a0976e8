//! Reverse-mode automatic differentiation over `f64` matrices.
//!
//! A [`Tape`] records a forward computation as a flat list of nodes; calling
//! [`Tape::backward`] propagates gradients in reverse recording order. Every
//! value is a dense 2-D matrix, scalars included (shape `[1, 1]`), which keeps
//! the op set small enough to verify each rule against finite differences.

use ndarray::{concatenate, s, Array2, Axis};

pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[n, d] + [1, d]`, the bias pattern.
    AddRowBroadcast(Var, Var),
    /// `[n, d] * [1, 1]`.
    MulScalar(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Recip(Var),
    Transpose(Var),
    /// Row-wise softmax; the additive mask is applied in the forward pass
    /// only (the gradient needs just the output probabilities).
    RowSoftmax(Var),
    /// Row-wise layer norm with learnable gain/bias of shape `[1, d]`.
    LayerNorm { x: Var, gain: Var, bias: Var },
    ConcatRows(Var, Var),
    ConcatCols(Var, Var),
    SliceRows { x: Var, start: usize, len: usize },
    SliceCols { x: Var, start: usize, len: usize },
    /// Select table rows by id; duplicate ids accumulate gradient.
    GatherRows { x: Var, ids: Vec<usize> },
    /// `[g*n, d] -> [n, d]`, mean over consecutive groups of `group` rows.
    MeanPoolRows { x: Var, group: usize },
    /// `[g*n, d] -> [n, d]`, per-column max over consecutive groups.
    MaxPoolRows { x: Var, group: usize },
    RowL2Normalize(Var),
    SumAll(Var),
    MeanAll(Var),
    /// `out[i, 0] = x[i, idx[i]]`.
    PickPerRow { x: Var, idx: Vec<usize> },
    RowLogSumExp(Var),
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
}

/// Recorded forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target w.r.t. `v` (zeros if unused).
    pub fn grad(&self, v: Var) -> Matrix {
        match &self.nodes[v.0].grad {
            Some(g) => g.clone(),
            None => Matrix::zeros(self.nodes[v.0].value.raw_dim()),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row_broadcast(&mut self, x: Var, bias: Var) -> Var {
        debug_assert_eq!(self.value(bias).nrows(), 1);
        let v = self.value(x) + self.value(bias);
        self.push(v, Op::AddRowBroadcast(x, bias))
    }

    pub fn mul_scalar(&mut self, x: Var, scalar: Var) -> Var {
        debug_assert_eq!(self.value(scalar).dim(), (1, 1));
        let s = self.value(scalar)[[0, 0]];
        let v = self.value(x) * s;
        self.push(v, Op::MulScalar(x, scalar))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) * c;
        self.push(v, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|t| t.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|t| 1.0 / (1.0 + (-t).exp()));
        self.push(v, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::ln);
        self.push(v, Op::Ln(x))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|t| 1.0 / t);
        self.push(v, Op::Recip(x))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let v = self.value(x).t().to_owned();
        self.push(v, Op::Transpose(x))
    }

    /// Numerically stable row softmax; `mask` is added to the logits first
    /// (use `f64::NEG_INFINITY` to exclude a position). Every row must keep
    /// at least one unmasked entry.
    pub fn row_softmax(&mut self, x: Var, mask: Option<Matrix>) -> Var {
        let mut logits = self.value(x).clone();
        if let Some(m) = &mask {
            logits += m;
        }
        let v = softmax_rows(&logits);
        self.push(v, Op::RowSoftmax(x))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let mut out = Matrix::zeros(xv.raw_dim());
        for (i, row) in xv.outer_iter().enumerate() {
            let d = row.len() as f64;
            let mean = row.sum() / d;
            let var = row.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / d;
            let denom = (var + LN_EPS).sqrt();
            for (j, t) in row.iter().enumerate() {
                out[[i, j]] = (t - mean) / denom;
            }
        }
        let out = &out * self.value(gain) + self.value(bias);
        self.push(out, Op::LayerNorm { x, gain, bias })
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let v = concatenate![Axis(0), self.value(a).view(), self.value(b).view()];
        self.push(v, Op::ConcatRows(a, b))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = concatenate![Axis(1), self.value(a).view(), self.value(b).view()];
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows { x, start, len })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols { x, start, len })
    }

    pub fn gather_rows(&mut self, x: Var, ids: Vec<usize>) -> Var {
        let xv = self.value(x);
        let mut v = Matrix::zeros((ids.len(), xv.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            v.row_mut(i).assign(&xv.row(id));
        }
        self.push(v, Op::GatherRows { x, ids })
    }

    pub fn mean_pool_rows(&mut self, x: Var, group: usize) -> Var {
        let xv = self.value(x);
        debug_assert_eq!(xv.nrows() % group, 0);
        let n = xv.nrows() / group;
        let mut v = Matrix::zeros((n, xv.ncols()));
        for i in 0..n {
            let block = xv.slice(s![i * group..(i + 1) * group, ..]);
            v.row_mut(i)
                .assign(&(block.sum_axis(Axis(0)) / group as f64));
        }
        self.push(v, Op::MeanPoolRows { x, group })
    }

    pub fn max_pool_rows(&mut self, x: Var, group: usize) -> Var {
        let xv = self.value(x);
        debug_assert_eq!(xv.nrows() % group, 0);
        let n = xv.nrows() / group;
        let mut v = Matrix::zeros((n, xv.ncols()));
        for i in 0..n {
            for j in 0..xv.ncols() {
                let mut best = f64::NEG_INFINITY;
                for g in 0..group {
                    best = best.max(xv[[i * group + g, j]]);
                }
                v[[i, j]] = best;
            }
        }
        self.push(v, Op::MaxPoolRows { x, group })
    }

    pub fn row_l2_normalize(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut v = xv.clone();
        for mut row in v.outer_iter_mut() {
            let norm = row.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
            row.mapv_inplace(|t| t / norm);
        }
        self.push(v, Op::RowL2Normalize(x))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = Matrix::from_elem((1, 1), self.value(x).sum());
        self.push(v, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let v = Matrix::from_elem((1, 1), xv.sum() / xv.len() as f64);
        self.push(v, Op::MeanAll(x))
    }

    pub fn pick_per_row(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let xv = self.value(x);
        debug_assert_eq!(xv.nrows(), idx.len());
        let mut v = Matrix::zeros((idx.len(), 1));
        for (i, &j) in idx.iter().enumerate() {
            v[[i, 0]] = xv[[i, j]];
        }
        self.push(v, Op::PickPerRow { x, idx })
    }

    pub fn row_log_sum_exp(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut v = Matrix::zeros((xv.nrows(), 1));
        for (i, row) in xv.outer_iter().enumerate() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|t| (t - m).exp()).sum();
            v[[i, 0]] = m + s.ln();
        }
        self.push(v, Op::RowLogSumExp(x))
    }

    fn accumulate(&mut self, v: Var, delta: &Matrix) {
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(g) => *g += delta,
            None => node.grad = Some(delta.clone()),
        }
    }

    /// Propagate `d target / d node` into every node; `target` must be `[1, 1]`.
    pub fn backward(&mut self, target: Var) {
        debug_assert_eq!(self.nodes[target.0].value.dim(), (1, 1));
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[target.0].grad = Some(Matrix::from_elem((1, 1), 1.0));

        for i in (0..=target.0).rev() {
            let Some(grad) = self.nodes[i].grad.clone() else {
                continue;
            };
            // Ops only reference earlier nodes, so this sweep is a valid
            // reverse topological order.
            match &self.nodes[i].op {
                Op::Leaf => {}
                &Op::MatMul(a, b) => {
                    let da = grad.dot(&self.nodes[b.0].value.t());
                    let db = self.nodes[a.0].value.t().dot(&grad);
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                &Op::Add(a, b) => {
                    self.accumulate(a, &grad);
                    self.accumulate(b, &grad);
                }
                &Op::Sub(a, b) => {
                    self.accumulate(a, &grad);
                    self.accumulate(b, &(-&grad));
                }
                &Op::Mul(a, b) => {
                    let da = &grad * &self.nodes[b.0].value;
                    let db = &grad * &self.nodes[a.0].value;
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                &Op::AddRowBroadcast(x, bias) => {
                    let db = grad
                        .sum_axis(Axis(0))
                        .insert_axis(Axis(0));
                    self.accumulate(x, &grad);
                    self.accumulate(bias, &db);
                }
                &Op::MulScalar(x, scalar) => {
                    let s = self.nodes[scalar.0].value[[0, 0]];
                    let dx = &grad * s;
                    let ds = (&grad * &self.nodes[x.0].value).sum();
                    self.accumulate(x, &dx);
                    self.accumulate(scalar, &Matrix::from_elem((1, 1), ds));
                }
                &Op::Scale(x, c) => {
                    self.accumulate(x, &(&grad * c));
                }
                &Op::Relu(x) => {
                    let dx = &grad * &self.nodes[x.0].value.mapv(|t| if t > 0.0 { 1.0 } else { 0.0 });
                    self.accumulate(x, &dx);
                }
                &Op::Sigmoid(x) => {
                    let y = &self.nodes[i].value;
                    let dx = &grad * &(y * &(1.0 - y));
                    self.accumulate(x, &dx);
                }
                &Op::Exp(x) => {
                    let dx = &grad * &self.nodes[i].value;
                    self.accumulate(x, &dx);
                }
                &Op::Ln(x) => {
                    let dx = &grad / &self.nodes[x.0].value;
                    self.accumulate(x, &dx);
                }
                &Op::Recip(x) => {
                    let y = &self.nodes[i].value;
                    let dx = -&grad * y * y;
                    self.accumulate(x, &dx);
                }
                &Op::Transpose(x) => {
                    self.accumulate(x, &grad.t().to_owned());
                }
                &Op::RowSoftmax(x) => {
                    let y = self.nodes[i].value.clone();
                    let mut dx = &grad * &y;
                    for (mut drow, yrow) in dx.outer_iter_mut().zip(y.outer_iter()) {
                        let dot = drow.sum();
                        for (d, p) in drow.iter_mut().zip(yrow.iter()) {
                            *d -= dot * p;
                        }
                    }
                    self.accumulate(x, &dx);
                }
                &Op::LayerNorm { x, gain, bias } => {
                    let xv = self.nodes[x.0].value.clone();
                    let g = self.nodes[gain.0].value.clone();
                    let mut dx = Matrix::zeros(xv.raw_dim());
                    let mut dgain = Matrix::zeros(g.raw_dim());
                    let mut dbias = Matrix::zeros(g.raw_dim());
                    for (r, row) in xv.outer_iter().enumerate() {
                        let d = row.len() as f64;
                        let mean = row.sum() / d;
                        let var = row.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / d;
                        let denom = (var + LN_EPS).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|t| (t - mean) / denom).collect();
                        let dy: Vec<f64> = grad.row(r).iter().cloned().collect();
                        let mut dxhat = vec![0.0; row.len()];
                        for j in 0..row.len() {
                            dgain[[0, j]] += dy[j] * xhat[j];
                            dbias[[0, j]] += dy[j];
                            dxhat[j] = dy[j] * g[[0, j]];
                        }
                        let mean_dxhat = dxhat.iter().sum::<f64>() / d;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d;
                        for j in 0..row.len() {
                            dx[[r, j]] =
                                (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat) / denom;
                        }
                    }
                    self.accumulate(x, &dx);
                    self.accumulate(gain, &dgain);
                    self.accumulate(bias, &dbias);
                }
                &Op::ConcatRows(a, b) => {
                    let na = self.nodes[a.0].value.nrows();
                    let da = grad.slice(s![..na, ..]).to_owned();
                    let db = grad.slice(s![na.., ..]).to_owned();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                &Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].value.ncols();
                    let da = grad.slice(s![.., ..ca]).to_owned();
                    let db = grad.slice(s![.., ca..]).to_owned();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                &Op::SliceRows { x, start, len } => {
                    let mut dx = Matrix::zeros(self.nodes[x.0].value.raw_dim());
                    dx.slice_mut(s![start..start + len, ..]).assign(&grad);
                    self.accumulate(x, &dx);
                }
                &Op::SliceCols { x, start, len } => {
                    let mut dx = Matrix::zeros(self.nodes[x.0].value.raw_dim());
                    dx.slice_mut(s![.., start..start + len]).assign(&grad);
                    self.accumulate(x, &dx);
                }
                Op::GatherRows { x, ids } => {
                    let x = *x;
                    let mut dx = Matrix::zeros(self.nodes[x.0].value.raw_dim());
                    for (i, &id) in ids.iter().enumerate() {
                        let mut target = dx.row_mut(id);
                        target += &grad.row(i);
                    }
                    self.accumulate(x, &dx);
                }
                &Op::MeanPoolRows { x, group } => {
                    let nrows = self.nodes[x.0].value.nrows();
                    let mut dx = Matrix::zeros(self.nodes[x.0].value.raw_dim());
                    for r in 0..nrows {
                        let mut row = dx.row_mut(r);
                        row += &(&grad.row(r / group) / group as f64);
                    }
                    self.accumulate(x, &dx);
                }
                &Op::MaxPoolRows { x, group } => {
                    // Subgradient: all flows to the first argmax in each group.
                    let xv = self.nodes[x.0].value.clone();
                    let mut dx = Matrix::zeros(xv.raw_dim());
                    let n = xv.nrows() / group;
                    for i in 0..n {
                        for j in 0..xv.ncols() {
                            let mut best = f64::NEG_INFINITY;
                            let mut arg = 0;
                            for g in 0..group {
                                let t = xv[[i * group + g, j]];
                                if t > best {
                                    best = t;
                                    arg = g;
                                }
                            }
                            dx[[i * group + arg, j]] += grad[[i, j]];
                        }
                    }
                    self.accumulate(x, &dx);
                }
                &Op::RowL2Normalize(x) => {
                    let xv = self.nodes[x.0].value.clone();
                    let y = self.nodes[i].value.clone();
                    let mut dx = Matrix::zeros(xv.raw_dim());
                    for (r, xrow) in xv.outer_iter().enumerate() {
                        let norm = xrow.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
                        let dot: f64 = grad
                            .row(r)
                            .iter()
                            .zip(y.row(r).iter())
                            .map(|(a, b)| a * b)
                            .sum();
                        for j in 0..xrow.len() {
                            dx[[r, j]] = (grad[[r, j]] - y[[r, j]] * dot) / norm;
                        }
                    }
                    self.accumulate(x, &dx);
                }
                &Op::SumAll(x) => {
                    let dx = Matrix::from_elem(self.nodes[x.0].value.raw_dim(), grad[[0, 0]]);
                    self.accumulate(x, &dx);
                }
                &Op::MeanAll(x) => {
                    let n = self.nodes[x.0].value.len() as f64;
                    let dx =
                        Matrix::from_elem(self.nodes[x.0].value.raw_dim(), grad[[0, 0]] / n);
                    self.accumulate(x, &dx);
                }
                Op::PickPerRow { x, idx } => {
                    let x = *x;
                    let mut dx = Matrix::zeros(self.nodes[x.0].value.raw_dim());
                    for (i, &j) in idx.iter().enumerate() {
                        dx[[i, j]] += grad[[i, 0]];
                    }
                    self.accumulate(x, &dx);
                }
                &Op::RowLogSumExp(x) => {
                    let xv = self.nodes[x.0].value.clone();
                    let soft = softmax_rows(&xv);
                    let mut dx = soft;
                    for (r, mut row) in dx.outer_iter_mut().enumerate() {
                        row.mapv_inplace(|t| t * grad[[r, 0]]);
                    }
                    self.accumulate(x, &dx);
                }
            }
        }
    }
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.outer_iter_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|t| (t - m).exp());
        let s = row.sum();
        row.mapv_inplace(|t| t / s);
    }
    out
}

/// Mean token cross-entropy over selected rows: rows of `logits` indexed by
/// `positions` predict the ids in `targets`. The two slices zip pairwise.
pub fn cross_entropy_rows(
    tape: &mut Tape,
    logits: Var,
    positions: &[usize],
    targets: &[usize],
) -> Var {
    debug_assert_eq!(positions.len(), targets.len());
    debug_assert!(!positions.is_empty());
    let picked = tape.gather_rows(logits, positions.to_vec());
    let lse = tape.row_log_sum_exp(picked);
    let gold = tape.pick_per_row(picked, targets.to_vec());
    let per_tok = tape.sub(lse, gold);
    tape.mean_all(per_tok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Finite-difference check of `f` treating the leaves in `inputs` as the
    /// probed variables.
    fn fd_check(
        inputs: Vec<Matrix>,
        f: impl Fn(&mut Tape, &[Var]) -> Var,
        tol: f64,
    ) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.backward(out);
        let analytic: Vec<Matrix> = vars.iter().map(|&v| tape.grad(v)).collect();

        let eps = 1e-6;
        for (k, input) in inputs.iter().enumerate() {
            for r in 0..input.nrows() {
                for c in 0..input.ncols() {
                    let eval = |delta: f64| {
                        let mut shifted = inputs.clone();
                        shifted[k][[r, c]] += delta;
                        let mut t = Tape::new();
                        let vs: Vec<Var> =
                            shifted.iter().map(|m| t.leaf(m.clone())).collect();
                        let o = f(&mut t, &vs);
                        t.scalar(o)
                    };
                    let num = (eval(eps) - eval(-eps)) / (2.0 * eps);
                    let ana = analytic[k][[r, c]];
                    let denom = ana.abs().max(num.abs()).max(1.0);
                    assert!(
                        (ana - num).abs() / denom < tol,
                        "input {k} at ({r},{c}): analytic {ana}, numeric {num}"
                    );
                }
            }
        }
    }

    #[test]
    fn matmul_and_bias_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = rand_matrix(&mut rng, 3, 4);
        let b = rand_matrix(&mut rng, 4, 2);
        let bias = rand_matrix(&mut rng, 1, 2);
        fd_check(vec![a, b, bias], |t, v| {
            let y = t.matmul(v[0], v[1]);
            let y = t.add_row_broadcast(y, v[2]);
            let y = t.sigmoid(y);
            t.mean_all(y)
        }, 1e-6);
    }

    #[test]
    fn softmax_layernorm_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_matrix(&mut rng, 3, 5);
        let g = rand_matrix(&mut rng, 1, 5);
        let b = rand_matrix(&mut rng, 1, 5);
        fd_check(vec![x, g, b], |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2]);
            let y = t.row_softmax(y, None);
            let y = t.ln(y);
            t.mean_all(y)
        }, 1e-5);
    }

    #[test]
    fn masked_softmax_excludes_positions() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0, 2.0, 3.0]]);
        let mask = array![[0.0, f64::NEG_INFINITY, 0.0]];
        let y = tape.row_softmax(x, Some(mask));
        assert_eq!(tape.value(y)[[0, 1]], 0.0);
        let row_sum: f64 = tape.value(y).row(0).sum();
        assert!((row_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structural_op_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_matrix(&mut rng, 4, 3);
        let b = rand_matrix(&mut rng, 2, 3);
        fd_check(vec![a, b], |t, v| {
            let c = t.concat_rows(v[0], v[1]);
            let sl = t.slice_rows(c, 1, 4);
            let cc = t.concat_cols(sl, sl);
            let sc = t.slice_cols(cc, 2, 3);
            let g = t.gather_rows(sc, vec![0, 0, 2, 3]);
            let m = t.mean_pool_rows(g, 2);
            let n = t.row_l2_normalize(m);
            t.sum_all(n)
        }, 1e-6);
    }

    #[test]
    fn pooling_pick_lse_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_matrix(&mut rng, 6, 3);
        fd_check(vec![a], |t, v| {
            let mx = t.max_pool_rows(v[0], 3);
            let p = t.pick_per_row(mx, vec![1, 2]);
            let l = t.row_log_sum_exp(p);
            t.mean_all(l)
        }, 1e-6);
    }

    #[test]
    fn scalar_and_elementwise_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = rand_matrix(&mut rng, 3, 3).mapv(|t| t + 2.5); // keep ln/recip away from 0
        let s = Matrix::from_elem((1, 1), 0.7);
        fd_check(vec![a, s], |t, v| {
            let r = t.recip(v[1]);
            let y = t.mul_scalar(v[0], r);
            let y2 = t.exp(v[1]);
            let z = t.scale(y, 0.5);
            let z = t.ln(z);
            let m = t.mean_all(z);
            let m2 = t.mean_all(y2);
            let s = t.add(m, m2);
            let d = t.mul(s, s);
            let tr = t.transpose(d);
            t.sum_all(tr)
        }, 1e-6);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_vocab() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Matrix::zeros((5, 16)));
        let loss = cross_entropy_rows(&mut tape, logits, &[0, 2, 4], &[3, 1, 15]);
        assert!((tape.scalar(loss) - (16f64).ln()).abs() < 1e-12);
    }
}
