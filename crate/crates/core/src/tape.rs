//! Minimal reverse-mode automatic differentiation over row-major matrices.
//!
//! Every value on the tape is a 2-D matrix whose rows index the batch. Nodes
//! are appended in evaluation order, so a single reverse sweep over the node
//! list is a valid topological order for back-propagation.

use ndarray::{s, Array2, Axis, Zip};

use crate::scalar::{self, Scalar};

pub type Mat<T> = Array2<T>;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Offset(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    LogSigmoid(Var),
    Square(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    SumAll(Var),
    SumCols(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Mat<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A recorded computation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that gradients flow into (parameters, probed inputs).
    pub fn input(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds a `1 × C` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1, "add_row expects a single-row bias");
        let value = self.value(a) + self.value(row);
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::AddRow(a, row), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let value = self.value(a) * k;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    pub fn offset(&mut self, a: Var, k: T) -> Var {
        let value = self.value(a) + k;
        let rg = self.rg(a);
        self.push(value, Op::Offset(a, k), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(scalar::sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(T::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(T::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(T::ln);
        let rg = self.rg(a);
        self.push(value, Op::Ln(a), rg)
    }

    /// `ln σ(a)`, stable for large |a|.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| -scalar::softplus(-x));
        let rg = self.rg(a);
        self.push(value, Op::LogSigmoid(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x * x);
        let rg = self.rg(a);
        self.push(value, Op::Square(a), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let value = log_softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(value, Op::LogSoftmax(a), rg)
    }

    /// Column `cols[r]` of row `r`, as a `B × 1` column.
    pub fn pick(&mut self, a: Var, cols: Vec<usize>) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), cols.len());
        let value = Array2::from_shape_fn((cols.len(), 1), |(r, _)| src[[r, cols[r]]]);
        let rg = self.rg(a);
        self.push(value, Op::Pick(a, cols), rg)
    }

    /// Row lookup into `table` (embedding).
    pub fn gather_rows(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let src = self.value(table);
        let mut value = Array2::zeros((ids.len(), src.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            value.row_mut(r).assign(&src.row(id));
        }
        let rg = self.rg(table);
        self.push(value, Op::GatherRows(table, ids), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Array2::from_elem((1, 1), total), Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum_all(a);
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// Row sums as a `B × 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    /// Sum of equally shaped nodes.
    pub fn add_all(&mut self, parts: &[Var]) -> Var {
        let mut it = parts.iter();
        let mut acc = *it.next().expect("add_all needs at least one term");
        for &p in it {
            acc = self.add(acc, p);
        }
        acc
    }

    /// Reverse sweep from a `1 × 1` root.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.shape(root), (1, 1), "backward root must be a scalar");
        let mut grads: Vec<Option<Mat<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Array2::from_elem((1, 1), T::one()));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let g = dy.dot(&self.value(*b).t());
                        accum(&mut grads, *a, g);
                    }
                    if self.rg(*b) {
                        let g = self.value(*a).t().dot(&dy);
                        accum(&mut grads, *b, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accum(&mut grads, *a, dy.clone());
                    }
                    if self.rg(*b) {
                        accum(&mut grads, *b, dy.clone());
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(*row) {
                        let g = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accum(&mut grads, *row, g);
                    }
                    if self.rg(*a) {
                        accum(&mut grads, *a, dy.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        accum(&mut grads, *b, dy.mapv(|x| -x));
                    }
                    if self.rg(*a) {
                        accum(&mut grads, *a, dy.clone());
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        accum(&mut grads, *a, &dy * self.value(*b));
                    }
                    if self.rg(*b) {
                        accum(&mut grads, *b, &dy * self.value(*a));
                    }
                }
                Op::Scale(a, k) => accum(&mut grads, *a, &dy * *k),
                Op::Offset(a, _) => accum(&mut grads, *a, dy.clone()),
                Op::Sigmoid(a) => {
                    let mut g = dy.clone();
                    Zip::from(&mut g)
                        .and(&node.value)
                        .for_each(|g, &y| *g = *g * y * (T::one() - y));
                    accum(&mut grads, *a, g);
                }
                Op::Tanh(a) => {
                    let mut g = dy.clone();
                    Zip::from(&mut g)
                        .and(&node.value)
                        .for_each(|g, &y| *g = *g * (T::one() - y * y));
                    accum(&mut grads, *a, g);
                }
                Op::Exp(a) => accum(&mut grads, *a, &dy * &node.value),
                Op::Ln(a) => accum(&mut grads, *a, &dy / self.value(*a)),
                Op::LogSigmoid(a) => {
                    let mut g = dy.clone();
                    Zip::from(&mut g)
                        .and(self.value(*a))
                        .for_each(|g, &x| *g = *g * scalar::sigmoid(-x));
                    accum(&mut grads, *a, g);
                }
                Op::Square(a) => {
                    let mut g = dy.clone();
                    Zip::from(&mut g)
                        .and(self.value(*a))
                        .for_each(|g, &x| *g = *g * (x + x));
                    accum(&mut grads, *a, g);
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut g = Array2::zeros((rows, cols));
                    g.slice_mut(s![.., *start..*start + dy.ncols()]).assign(&dy);
                    accum(&mut grads, *a, g);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.rg(p) {
                            accum(&mut grads, p, dy.slice(s![.., at..at + w]).to_owned());
                        }
                        at += w;
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut g = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot: T = (0..y.ncols()).map(|c| dy[[r, c]] * y[[r, c]]).sum();
                        for c in 0..y.ncols() {
                            g[[r, c]] = y[[r, c]] * (dy[[r, c]] - dot);
                        }
                    }
                    accum(&mut grads, *a, g);
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let mut g = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let total: T = dy.row(r).sum();
                        for c in 0..y.ncols() {
                            g[[r, c]] = dy[[r, c]] - y[[r, c]].exp() * total;
                        }
                    }
                    accum(&mut grads, *a, g);
                }
                Op::Pick(a, cols) => {
                    let mut g = Array2::zeros(self.shape(*a));
                    for (r, &c) in cols.iter().enumerate() {
                        g[[r, c]] = dy[[r, 0]];
                    }
                    accum(&mut grads, *a, g);
                }
                Op::GatherRows(table, ids) => {
                    let mut g = Array2::zeros(self.shape(*table));
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = g.row_mut(id);
                        dst += &dy.row(r);
                    }
                    accum(&mut grads, *table, g);
                }
                Op::SumAll(a) => {
                    let g = Array2::from_elem(self.shape(*a), dy[[0, 0]]);
                    accum(&mut grads, *a, g);
                }
                Op::SumCols(a) => {
                    let (rows, cols) = self.shape(*a);
                    let g = Array2::from_shape_fn((rows, cols), |(r, _)| dy[[r, 0]]);
                    accum(&mut grads, *a, g);
                }
            }
            // Leaves keep their gradient for the caller.
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(dy);
            }
        }
        Gradients { grads }
    }
}

fn accum<T: Scalar>(grads: &mut [Option<Mat<T>>], v: Var, g: Mat<T>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Mat<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf, `None` when the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Mat<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, zero-filled when unreached.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Mat<T> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

pub fn softmax_rows<T: Scalar>(m: &Mat<T>) -> Mat<T> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|x| (x - max).exp());
        let total = row.sum();
        row.mapv_inplace(|x| x / total);
    }
    out
}

pub fn log_softmax_rows<T: Scalar>(m: &Mat<T>) -> Mat<T> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_check(build: impl Fn(&mut Graph<f64>, Var) -> Var, x0: Mat<f64>) {
        let mut g = Graph::new();
        let x = g.input(x0.clone());
        let y = build(&mut g, x);
        let grad = g.backward(y).get_or_zeros(x, x0.dim());
        let h = 1e-6;
        for idx in 0..x0.len() {
            let (r, c) = (idx / x0.ncols(), idx % x0.ncols());
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                xp[[r, c]] += delta;
                let mut g = Graph::new();
                let x = g.input(xp);
                let y = build(&mut g, x);
                g.scalar(y)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = grad[[r, c]];
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(
                (numeric - analytic).abs() / denom < 1e-5,
                "entry ({r},{c}): numeric {numeric} analytic {analytic}"
            );
        }
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let x0 = array![[0.3, -1.2, 0.5], [2.0, 0.1, -0.7]];
        fd_check(
            |g, x| {
                let a = g.sigmoid(x);
                let b = g.tanh(x);
                let c = g.mul(a, b);
                let d = g.exp(c);
                let e = g.square(x);
                let f = g.log_sigmoid(e);
                let s = g.add(d, f);
                let s = g.offset(s, 3.0);
                let l = g.ln(s);
                g.sum_all(l)
            },
            x0,
        );
    }

    #[test]
    fn matrix_ops_match_finite_differences() {
        let x0 = array![[0.3, -1.2, 0.5], [2.0, 0.1, -0.7]];
        let w = array![[0.2, -0.1], [0.4, 0.3], [-0.5, 0.6]];
        fd_check(
            move |g, x| {
                let wv = g.constant(w.clone());
                let m = g.matmul(x, wv);
                let row = g.slice_cols(x, 1, 2);
                let row = g.slice_cols(row, 0, 2);
                let both = g.concat_cols(&[m, row]);
                let sm = g.softmax(both);
                let lsm = g.log_softmax(both);
                let p = g.pick(lsm, vec![0, 3]);
                let q = g.sum_cols(sm);
                let q = g.mul(q, p);
                let t = g.gather_rows(x, vec![1, 1, 0]);
                let t = g.mean_all(t);
                let q = g.sum_all(q);
                g.add(q, t)
            },
            x0,
        );
    }

    #[test]
    fn add_row_broadcast_gradient() {
        let b0 = array![[0.1, -0.2, 0.3]];
        fd_check(
            |g, b| {
                let x = g.constant(array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]);
                let y = g.add_row(x, b);
                let y = g.square(y);
                let y = g.sub(y, x);
                g.sum_all(y)
            },
            b0,
        );
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(array![[1.0, 2.0]]);
        let x = g.input(array![[3.0, 4.0]]);
        let y = g.mul(c, x);
        let y = g.sum_all(y);
        let grads = g.backward(y);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap(), &array![[1.0, 2.0]]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = array![[1000.0f32, 999.0, -5.0], [0.0, 0.0, 0.0]];
        let p = softmax_rows(&m);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }
}
