//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! Each forward pass records onto a fresh [`Tape`]; [`Tape::backward`]
//! walks the record in reverse once and returns a gradient per node.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{Result, SeaError};
use crate::sparse::SparseMatrix;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;

/// Row-compressed neighborhoods used by attention. Entry lists are sorted
/// by column and include the self entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    pub offsets: Vec<usize>,
    pub cols: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Neighborhoods {
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

struct GatCache<'g> {
    h: Var,
    a_self: Var,
    a_nbr: Var,
    heads: usize,
    nbrs: &'g Neighborhoods,
    pre: Vec<f64>,
    alpha: Vec<f64>,
    keep: Option<Vec<f64>>,
}

enum Op<'g> {
    Leaf,
    MatMul(Var, Var),
    SpMM(&'g SparseMatrix, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Elu(Var),
    Mask(Var, Array2<f64>),
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Array2<f64>, inv_std: Array1<f64>, batch: bool },
    Gat(Box<GatCache<'g>>),
    CrossEntropy { logits: Var, rows: Vec<usize>, labels: Vec<usize>, probs: Array2<f64> },
}

struct Node<'g> {
    value: Array2<f64>,
    op: Op<'g>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient (inputs, fixed statistics).
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op<'g>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((_, k1), (k2, _)) = (self.shape(a), self.shape(b));
        if k1 != k2 {
            return Err(shape_err("matmul", format!("{:?} x {:?}", self.shape(a), self.shape(b))));
        }
        let value = self.value(a).dot(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), needs))
    }

    pub fn spmm(&mut self, m: &'g SparseMatrix, x: Var) -> Result<Var> {
        let value = m.mul_dense(self.value(x).view())?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::SpMM(m, x), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let value = self.value(a) + self.value(b);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c) = self.shape(x);
        if self.shape(bias) != (1, c) {
            return Err(shape_err("add_bias", format!("bias {:?} for {c} columns", self.shape(bias))));
        }
        let value = self.value(x) + self.value(bias);
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(value, Op::AddBias(x, bias), needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let needs = self.needs(x);
        self.push(value, Op::Relu(x), needs)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| if v > 0.0 { v } else { v.exp_m1() });
        let needs = self.needs(x);
        self.push(value, Op::Elu(x), needs)
    }

    /// Elementwise product with a fixed matrix; dropout passes its
    /// pre-scaled keep mask here.
    pub fn mask(&mut self, x: Var, mask: Array2<f64>) -> Result<Var> {
        if mask.dim() != self.shape(x) {
            return Err(shape_err("mask", format!("{:?} vs {:?}", mask.dim(), self.shape(x))));
        }
        let value = self.value(x) * &mask;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Mask(x, mask), needs))
    }

    /// Batch normalization over rows. With `stats = None` the batch mean
    /// and biased variance are used (and returned); otherwise the given
    /// running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: Option<(&Array1<f64>, &Array1<f64>)>,
    ) -> Result<(Var, Array1<f64>, Array1<f64>)> {
        let (n, c) = self.shape(x);
        if self.shape(gamma) != (1, c) || self.shape(beta) != (1, c) {
            return Err(shape_err("batch_norm", format!("scale/shift for {c} columns")));
        }
        let xv = self.value(x);
        let (mean, var, batch) = match stats {
            Some((m, v)) => (m.clone(), v.clone(), false),
            None => {
                if n == 0 {
                    return Err(shape_err("batch_norm", "empty batch".into()));
                }
                let mean = xv.mean_axis(Axis(0)).expect("nonempty");
                let var = xv.var_axis(Axis(0), 0.0);
                (mean, var, true)
            }
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let xhat = (xv - &mean) * &inv_std;
        let value = &xhat * &self.value(gamma).row(0) + &self.value(beta).row(0);
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let out = self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch }, needs);
        Ok((out, mean, var))
    }

    /// Multi-head weighted attention aggregation.
    ///
    /// `h` is `n x (heads * f)`; `a_self` and `a_nbr` are `1 x (heads * f)`.
    /// For head `k` the coefficient of neighbor `q` at node `p` is
    /// `w(p,q) exp(LeakyReLU(a_self_k . h_p,k + a_nbr_k . h_q,k))`, normalized
    /// over the neighborhood. `keep` is an optional pre-scaled dropout mask
    /// over coefficients, laid out as `entry * heads + head`.
    pub fn gat(
        &mut self,
        h: Var,
        a_self: Var,
        a_nbr: Var,
        heads: usize,
        nbrs: &'g Neighborhoods,
        keep: Option<Vec<f64>>,
    ) -> Result<Var> {
        let (n, width) = self.shape(h);
        if heads == 0 || width % heads != 0 {
            return Err(shape_err("gat", format!("{width} columns over {heads} heads")));
        }
        if self.shape(a_self) != (1, width) || self.shape(a_nbr) != (1, width) {
            return Err(shape_err("gat", "attention vectors must be 1 x width".into()));
        }
        if nbrs.n() != n {
            return Err(SeaError::DimensionMismatch { expected: n, actual: nbrs.n() });
        }
        if let Some(k) = &keep {
            if k.len() != nbrs.nnz() * heads {
                return Err(shape_err("gat", "dropout mask length".into()));
            }
        }
        let hv = self.value(h);
        let (pre, alpha) = attention_coefficients(hv, self.value(a_self), self.value(a_nbr), heads, nbrs);
        let f = width / heads;
        let mut out = Array2::zeros((n, width));
        for p in 0..n {
            for j in nbrs.offsets[p]..nbrs.offsets[p + 1] {
                let q = nbrs.cols[j];
                for k in 0..heads {
                    let idx = j * heads + k;
                    let beta = alpha[idx] * keep.as_ref().map_or(1.0, |m| m[idx]);
                    if beta == 0.0 {
                        continue;
                    }
                    for c in k * f..(k + 1) * f {
                        out[(p, c)] += beta * hv[(q, c)];
                    }
                }
            }
        }
        let needs = self.needs(h) || self.needs(a_self) || self.needs(a_nbr);
        let cache = GatCache { h, a_self, a_nbr, heads, nbrs, pre, alpha, keep };
        Ok(self.push(out, Op::Gat(Box::new(cache)), needs))
    }

    /// Mean softmax cross-entropy over the listed rows; a `1 x 1` node.
    pub fn cross_entropy(&mut self, logits: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
        if rows.is_empty() {
            return Err(SeaError::EmptyMask);
        }
        let lv = self.value(logits);
        let (n, c) = lv.dim();
        let mut probs = Array2::zeros((rows.len(), c));
        let mut total = 0.0;
        for (i, &r) in rows.iter().enumerate() {
            if r >= n || labels[r] >= c {
                return Err(shape_err("cross_entropy", format!("row {r} / label out of range")));
            }
            let row = lv.row(r);
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut z = 0.0;
            for (k, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[(i, k)] = e;
                z += e;
            }
            probs.row_mut(i).mapv_inplace(|e| e / z);
            total += z.ln() + max - row[labels[r]];
        }
        let value = Array2::from_elem((1, 1), total / rows.len() as f64);
        let needs = self.needs(logits);
        let op =
            Op::CrossEntropy { logits, rows: rows.to_vec(), labels: rows.iter().map(|&r| labels[r]).collect(), probs };
        Ok(self.push(value, op, needs))
    }

    /// Gradients of the scalar node `root` with respect to every node;
    /// `None` for nodes that do not influence it or need no gradient.
    pub fn backward(&self, root: Var) -> Vec<Option<Array2<f64>>> {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones(self.shape(root)));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::SpMM(m, x) => {
                    let gx = m.tr_mul_dense(g.view()).expect("shape recorded in forward");
                    accumulate(&mut grads, *x, gx);
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::AddBias(x, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Relu(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx).and(&node.value).for_each(|d, &y| {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut grads, *x, gx);
                }
                Op::Elu(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx).and(self.value(*x)).and(&node.value).for_each(|d, &xi, &y| {
                        if xi <= 0.0 {
                            *d *= y + 1.0;
                        }
                    });
                    accumulate(&mut grads, *x, gx);
                }
                Op::Mask(x, m) => accumulate(&mut grads, *x, g * m),
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch } => {
                    if self.needs(*beta) {
                        accumulate(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*gamma) {
                        accumulate(&mut grads, *gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*x) {
                        let dxhat = &g * &self.value(*gamma).row(0);
                        let gx = if *batch {
                            let n = dxhat.nrows() as f64;
                            let sum = dxhat.sum_axis(Axis(0));
                            let dot = (&dxhat * xhat).sum_axis(Axis(0));
                            ((&dxhat * n - &sum) - xhat * &dot) * &(inv_std / n)
                        } else {
                            dxhat * inv_std
                        };
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Gat(c) => self.gat_backward(c, &g, &mut grads),
                Op::CrossEntropy { logits, rows, labels, probs } => {
                    let scale = g[(0, 0)] / rows.len() as f64;
                    let mut gl = Array2::zeros(self.shape(*logits));
                    for (i, (&r, &y)) in rows.iter().zip(labels).enumerate() {
                        let mut row = gl.row_mut(r);
                        row.scaled_add(scale, &probs.row(i));
                        row[y] -= scale;
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        grads
    }

    fn gat_backward(&self, c: &GatCache<'g>, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let hv = self.value(c.h);
        let (n, width) = hv.dim();
        let heads = c.heads;
        let f = width / heads;
        let nbrs = c.nbrs;
        let a_self = self.value(c.a_self);
        let a_nbr = self.value(c.a_nbr);
        let mut gh = Array2::<f64>::zeros((n, width));
        // d(score)/d(s_p) and d(score)/d(t_q), per head.
        let mut ds = Array2::<f64>::zeros((n, heads));
        let mut dt = Array2::<f64>::zeros((n, heads));
        let mut dalpha = vec![0.0; c.alpha.len()];
        for p in 0..n {
            let range = nbrs.offsets[p]..nbrs.offsets[p + 1];
            for j in range.clone() {
                let q = nbrs.cols[j];
                for k in 0..heads {
                    let idx = j * heads + k;
                    let keep = c.keep.as_ref().map_or(1.0, |m| m[idx]);
                    let beta = c.alpha[idx] * keep;
                    let mut dbeta = 0.0;
                    for col in k * f..(k + 1) * f {
                        dbeta += g[(p, col)] * hv[(q, col)];
                        gh[(q, col)] += beta * g[(p, col)];
                    }
                    dalpha[idx] = dbeta * keep;
                }
            }
            for k in 0..heads {
                let weighted: f64 = range.clone().map(|j| c.alpha[j * heads + k] * dalpha[j * heads + k]).sum();
                for j in range.clone() {
                    let idx = j * heads + k;
                    let de = c.alpha[idx] * (dalpha[idx] - weighted);
                    let dz = if c.pre[idx] > 0.0 { de } else { LEAKY_SLOPE * de };
                    ds[(p, k)] += dz;
                    dt[(nbrs.cols[j], k)] += dz;
                }
            }
        }
        let mut ga_self = Array2::<f64>::zeros((1, width));
        let mut ga_nbr = Array2::<f64>::zeros((1, width));
        for p in 0..n {
            for k in 0..heads {
                for col in k * f..(k + 1) * f {
                    gh[(p, col)] += ds[(p, k)] * a_self[(0, col)] + dt[(p, k)] * a_nbr[(0, col)];
                    ga_self[(0, col)] += ds[(p, k)] * hv[(p, col)];
                    ga_nbr[(0, col)] += dt[(p, k)] * hv[(p, col)];
                }
            }
        }
        if self.needs(c.a_self) {
            accumulate(grads, c.a_self, ga_self);
        }
        if self.needs(c.a_nbr) {
            accumulate(grads, c.a_nbr, ga_nbr);
        }
        if self.needs(c.h) {
            accumulate(grads, c.h, gh);
        }
    }
}

/// Pre-activation scores and normalized coefficients, both laid out as
/// `entry * heads + head`.
pub fn attention_coefficients(
    h: &Array2<f64>,
    a_self: &Array2<f64>,
    a_nbr: &Array2<f64>,
    heads: usize,
    nbrs: &Neighborhoods,
) -> (Vec<f64>, Vec<f64>) {
    let (n, width) = h.dim();
    let f = width / heads;
    let mut s = Array2::<f64>::zeros((n, heads));
    let mut t = Array2::<f64>::zeros((n, heads));
    for p in 0..n {
        for k in 0..heads {
            for col in k * f..(k + 1) * f {
                s[(p, k)] += a_self[(0, col)] * h[(p, col)];
                t[(p, k)] += a_nbr[(0, col)] * h[(p, col)];
            }
        }
    }
    let mut pre = vec![0.0; nbrs.nnz() * heads];
    let mut alpha = vec![0.0; nbrs.nnz() * heads];
    for p in 0..n {
        let range = nbrs.offsets[p]..nbrs.offsets[p + 1];
        for k in 0..heads {
            let mut max = f64::NEG_INFINITY;
            for j in range.clone() {
                let z = s[(p, k)] + t[(nbrs.cols[j], k)];
                pre[j * heads + k] = z;
                max = max.max(leaky(z));
            }
            let mut total = 0.0;
            for j in range.clone() {
                let e = nbrs.weights[j] * (leaky(pre[j * heads + k]) - max).exp();
                alpha[j * heads + k] = e;
                total += e;
            }
            for j in range.clone() {
                alpha[j * heads + k] /= total;
            }
        }
    }
    (pre, alpha)
}

fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
    }
}

fn shape_err(context: &'static str, detail: String) -> SeaError {
    SeaError::ShapeMismatch { context: context.into(), detail }
}
