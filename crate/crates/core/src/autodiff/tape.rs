//! Reverse-mode tape over small dense tensors.
//!
//! Every node stores its forward value. `backward` replays the tape once in
//! reverse; `forward_tangents` replays it forward with tangent seeds. Both
//! sweeps share the closed [`Op`] set, so the two modes stay consistent.

use super::dual::swish3;

/// Row-major 2-D tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor shape/data mismatch");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(1, 1, vec![v])
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor::new(1, data.len(), data)
    }

    pub fn col_vector(data: Vec<f64>) -> Self {
        Tensor::new(data.len(), 1, data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The closed set of primitives a tape can record.
#[derive(Clone, Debug)]
pub enum Op {
    Leaf,
    /// `x (B×d) · wᵀ` with `w` of shape `n×d`.
    MatMulT(Var, Var),
    /// Adds a `1×n` row to every row.
    AddRow(Var, Var),
    /// Multiplies every row elementwise by a `1×n` row.
    MulRow(Var, Var),
    /// Multiplies row `i` by the scalar in row `i` of a `B×1` column.
    MulCol(Var, Var),
    /// `col (B×1) + row (1×n)` broadcast to `B×n`.
    OuterAdd(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Row gather: output row `i` is input row `idx[i]`.
    Gather(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    /// Contiguous window `offset..offset + rows·cols` of the input's data,
    /// reshaped to `rows×cols`.
    View(Var, usize),
    Swish(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Powi(Var, i32),
    Recip(Var),
    Scale(Var, f64),
    AddConst(Var, f64),
    /// Sum of all entries to `1×1`.
    Sum(Var),
    /// Row sums to `B×1`.
    SumCols(Var),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros if the output does not depend on it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.grads[v.0].clone().unwrap_or_else(|| {
            let t = tape.value(v);
            Tensor::zeros(t.rows, t.cols)
        })
    }
}

/// `c = a·b + beta·c` for row/column-strided operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds views of `a` (m×k), `b` (k×n)
    // and the row-major `c` (m×n); lengths are checked by the callers' shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Clears recorded nodes, keeping the allocation.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_raw(Op::Leaf, t, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_raw(Op::Leaf, t, false)
    }

    fn push_raw(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push_raw(op, value, needs_grad)
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let xv = self.value(x);
        let value = Tensor::new(xv.rows, xv.cols, xv.data.iter().map(|&v| f(v)).collect());
        self.push(op, value, &[x])
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        assert_eq!(xv.cols, wv.cols, "matmul_t inner dimensions");
        let (b, d, n) = (xv.rows, xv.cols, wv.rows);
        let mut out = Tensor::zeros(b, n);
        gemm(
            b,
            d,
            n,
            &xv.data,
            (d as isize, 1),
            &wv.data,
            (1, d as isize),
            &mut out.data,
            0.0,
        );
        self.push(Op::MatMulT(x, w), out, &[x, w])
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (xv, rv) = (self.value(x), self.value(row));
        assert!(rv.rows == 1 && rv.cols == xv.cols, "add_row shape");
        let mut out = xv.clone();
        for r in out.data.chunks_mut(xv.cols) {
            for (o, b) in r.iter_mut().zip(&rv.data) {
                *o += b;
            }
        }
        self.push(Op::AddRow(x, row), out, &[x, row])
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let (xv, rv) = (self.value(x), self.value(row));
        assert!(rv.rows == 1 && rv.cols == xv.cols, "mul_row shape");
        let mut out = xv.clone();
        for r in out.data.chunks_mut(xv.cols) {
            for (o, a) in r.iter_mut().zip(&rv.data) {
                *o *= a;
            }
        }
        self.push(Op::MulRow(x, row), out, &[x, row])
    }

    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(col));
        assert!(cv.cols == 1 && cv.rows == xv.rows, "mul_col shape");
        let mut out = xv.clone();
        if xv.cols > 0 {
            for (r, s) in out.data.chunks_mut(xv.cols).zip(&cv.data) {
                for o in r.iter_mut() {
                    *o *= s;
                }
            }
        }
        self.push(Op::MulCol(x, col), out, &[x, col])
    }

    pub fn outer_add(&mut self, col: Var, row: Var) -> Var {
        let (cv, rv) = (self.value(col), self.value(row));
        assert!(cv.cols == 1 && rv.rows == 1, "outer_add shape");
        let mut out = Tensor::zeros(cv.rows, rv.cols);
        for (i, c) in cv.data.iter().enumerate() {
            for (j, r) in rv.data.iter().enumerate() {
                out.data[i * rv.cols + j] = c + r;
            }
        }
        self.push(Op::OuterAdd(col, row), out, &[col, row])
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(av.rows == bv.rows && av.cols == bv.cols, "elementwise shape");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(av.rows, av.cols, data);
        self.push(op, out, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(idx.len(), xv.cols);
        for (i, &r) in idx.iter().enumerate() {
            assert!(r < xv.rows, "gather index out of range");
            out.data[i * xv.cols..(i + 1) * xv.cols]
                .copy_from_slice(&xv.data[r * xv.cols..(r + 1) * xv.cols]);
        }
        self.push(Op::Gather(x, idx), out, &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(xv.rows, len);
        for i in 0..xv.rows {
            out.data[i * len..(i + 1) * len]
                .copy_from_slice(&xv.data[i * xv.cols + start..i * xv.cols + start + len]);
        }
        self.push(Op::SliceCols(x, start, len), out, &[x])
    }

    pub fn view(&mut self, x: Var, offset: usize, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        assert!(offset + rows * cols <= xv.len(), "view out of range");
        let out = Tensor::new(rows, cols, xv.data[offset..offset + rows * cols].to_vec());
        self.push(Op::View(x, offset), out, &[x])
    }

    pub fn swish(&mut self, x: Var) -> Var {
        self.map(x, Op::Swish(x), |v| swish3(v).0)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.map(x, Op::Sin(x), f64::sin)
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.map(x, Op::Cos(x), f64::cos)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, Op::Exp(x), f64::exp)
    }

    pub fn powi(&mut self, x: Var, n: i32) -> Var {
        self.map(x, Op::Powi(x, n), |v| v.powi(n))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.map(x, Op::Recip(x), |v| 1.0 / v)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::Scale(x, c), |v| c * v)
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::AddConst(x, c), |v| v + c)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s), &[x])
    }

    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = if xv.cols == 0 {
            vec![0.0; xv.rows]
        } else {
            xv.data.chunks(xv.cols).map(|r| r.iter().sum()).collect()
        };
        let out = Tensor::col_vector(data);
        self.push(Op::SumCols(x), out, &[x])
    }

    /// Reverse sweep from a scalar output. Each node is visited once.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Tensor::scalar(1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, contrib: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&contrib),
            slot @ None => *slot = Some(contrib),
        }
    }

    /// Adds `f(index, g)` into the adjoint of `v` without allocating a full
    /// contribution tensor when the slot already exists.
    fn accumulate_with(
        &self,
        grads: &mut [Option<Tensor>],
        v: Var,
        f: impl FnOnce(&mut Tensor),
    ) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let shape = self.value(v);
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.rows, shape.cols));
        f(slot);
    }

    fn unary_back(&self, x: Var, g: &Tensor, grads: &mut [Option<Tensor>], d: impl Fn(f64) -> f64) {
        let xv = self.value(x);
        let data = xv.data.iter().zip(&g.data).map(|(v, gv)| gv * d(*v)).collect();
        self.accumulate(grads, x, Tensor::new(xv.rows, xv.cols, data));
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMulT(x, w) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (b, d, n) = (xv.rows, xv.cols, wv.rows);
                self.accumulate_with(grads, *x, |dx| {
                    gemm(b, n, d, &g.data, (n as isize, 1), &wv.data, (d as isize, 1), &mut dx.data, 1.0)
                });
                self.accumulate_with(grads, *w, |dw| {
                    gemm(n, b, d, &g.data, (1, n as isize), &xv.data, (d as isize, 1), &mut dw.data, 1.0)
                });
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, g.clone());
                let n = g.cols;
                self.accumulate_with(grads, *row, |dr| {
                    for r in g.data.chunks(n) {
                        for (o, v) in dr.data.iter_mut().zip(r) {
                            *o += v;
                        }
                    }
                });
            }
            Op::MulRow(x, row) => {
                let (xv, rv) = (self.value(*x), self.value(*row));
                let n = g.cols;
                self.accumulate_with(grads, *x, |dx| {
                    for (dr, gr) in dx.data.chunks_mut(n).zip(g.data.chunks(n)) {
                        for ((o, gv), a) in dr.iter_mut().zip(gr).zip(&rv.data) {
                            *o += gv * a;
                        }
                    }
                });
                self.accumulate_with(grads, *row, |dr| {
                    for (gr, xr) in g.data.chunks(n).zip(xv.data.chunks(n)) {
                        for ((o, gv), xv) in dr.data.iter_mut().zip(gr).zip(xr) {
                            *o += gv * xv;
                        }
                    }
                });
            }
            Op::MulCol(x, col) => {
                let (xv, cv) = (self.value(*x), self.value(*col));
                let n = g.cols.max(1);
                self.accumulate_with(grads, *x, |dx| {
                    for ((dr, gr), s) in dx.data.chunks_mut(n).zip(g.data.chunks(n)).zip(&cv.data) {
                        for (o, gv) in dr.iter_mut().zip(gr) {
                            *o += gv * s;
                        }
                    }
                });
                self.accumulate_with(grads, *col, |dc| {
                    for ((o, gr), xr) in dc.data.iter_mut().zip(g.data.chunks(n)).zip(xv.data.chunks(n)) {
                        *o += gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
            }
            Op::OuterAdd(col, row) => {
                let n = g.cols.max(1);
                self.accumulate_with(grads, *col, |dc| {
                    for (o, gr) in dc.data.iter_mut().zip(g.data.chunks(n)) {
                        *o += gr.iter().sum::<f64>();
                    }
                });
                self.accumulate_with(grads, *row, |dr| {
                    for gr in g.data.chunks(n) {
                        for (o, v) in dr.data.iter_mut().zip(gr) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let neg = Tensor::new(g.rows, g.cols, g.data.iter().map(|v| -v).collect());
                self.accumulate(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
                let gb = g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect();
                self.accumulate(grads, *a, Tensor::new(g.rows, g.cols, ga));
                self.accumulate(grads, *b, Tensor::new(g.rows, g.cols, gb));
            }
            Op::Gather(x, idx) => {
                let c = g.cols;
                self.accumulate_with(grads, *x, |dx| {
                    for (i, &r) in idx.iter().enumerate() {
                        for (o, v) in dx.data[r * c..(r + 1) * c].iter_mut().zip(&g.data[i * c..(i + 1) * c]) {
                            *o += v;
                        }
                    }
                });
            }
            Op::SliceCols(x, start, len) => {
                let cols = self.value(*x).cols;
                self.accumulate_with(grads, *x, |dx| {
                    for (r, gr) in g.data.chunks(*len.max(&1)).enumerate().take(g.rows) {
                        for (o, v) in dx.data[r * cols + start..r * cols + start + len].iter_mut().zip(gr) {
                            *o += v;
                        }
                    }
                });
            }
            Op::View(x, offset) => {
                self.accumulate_with(grads, *x, |dx| {
                    for (o, v) in dx.data[*offset..offset + g.len()].iter_mut().zip(&g.data) {
                        *o += v;
                    }
                });
            }
            Op::Swish(x) => self.unary_back(*x, g, grads, |v| swish3(v).1),
            Op::Sin(x) => self.unary_back(*x, g, grads, f64::cos),
            Op::Cos(x) => self.unary_back(*x, g, grads, |v| -v.sin()),
            Op::Exp(x) => self.unary_back(*x, g, grads, f64::exp),
            Op::Powi(x, n) => {
                let n = *n;
                self.unary_back(*x, g, grads, |v| if n == 0 { 0.0 } else { n as f64 * v.powi(n - 1) })
            }
            Op::Recip(x) => self.unary_back(*x, g, grads, |v| -1.0 / (v * v)),
            Op::Scale(x, c) => {
                let c = *c;
                self.unary_back(*x, g, grads, |_| c)
            }
            Op::AddConst(x, _) => self.accumulate(grads, *x, g.clone()),
            Op::Sum(x) => {
                let s = g.data[0];
                self.accumulate_with(grads, *x, |dx| {
                    for o in dx.data.iter_mut() {
                        *o += s;
                    }
                });
            }
            Op::SumCols(x) => {
                let cols = self.value(*x).cols.max(1);
                self.accumulate_with(grads, *x, |dx| {
                    for (dr, s) in dx.data.chunks_mut(cols).zip(&g.data) {
                        for o in dr.iter_mut() {
                            *o += s;
                        }
                    }
                });
            }
        }
    }

    /// Forward sweep of tangents. `seeds` assigns a tangent to leaf nodes;
    /// every other leaf has zero tangent. Returns the tangent of every node.
    pub fn forward_tangents(&self, seeds: &[(Var, Tensor)]) -> Vec<Tensor> {
        let mut tan: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = &node.value;
            let zip_with = |a: &Tensor, b: &Tensor, f: &dyn Fn(f64, f64) -> f64| {
                Tensor::new(a.rows, a.cols, a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect())
            };
            let unary = |x: Var, d: &dyn Fn(f64) -> f64| {
                let xv = self.value(x);
                let tx = &tan[x.0];
                Tensor::new(
                    xv.rows,
                    xv.cols,
                    xv.data.iter().zip(&tx.data).map(|(a, t)| d(*a) * t).collect(),
                )
            };
            let t = match &node.op {
                Op::Leaf => seeds
                    .iter()
                    .find(|(s, _)| s.0 == i)
                    .map(|(_, t)| {
                        assert_eq!(t.len(), v.len(), "seed shape");
                        t.clone()
                    })
                    .unwrap_or_else(|| Tensor::zeros(v.rows, v.cols)),
                Op::MatMulT(x, w) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (b, d, n) = (xv.rows, xv.cols, wv.rows);
                    let mut out = Tensor::zeros(b, n);
                    gemm(b, d, n, &tan[x.0].data, (d as isize, 1), &wv.data, (1, d as isize), &mut out.data, 0.0);
                    gemm(b, d, n, &xv.data, (d as isize, 1), &tan[w.0].data, (1, d as isize), &mut out.data, 1.0);
                    out
                }
                Op::AddRow(x, row) => {
                    let mut out = tan[x.0].clone();
                    for r in out.data.chunks_mut(v.cols.max(1)) {
                        for (o, b) in r.iter_mut().zip(&tan[row.0].data) {
                            *o += b;
                        }
                    }
                    out
                }
                Op::MulRow(x, row) => {
                    let (xv, rv) = (self.value(*x), self.value(*row));
                    let (tx, tr) = (&tan[x.0], &tan[row.0]);
                    let n = v.cols.max(1);
                    let mut out = Tensor::zeros(v.rows, v.cols);
                    for (k, o) in out.data.iter_mut().enumerate() {
                        let j = k % n;
                        *o = tx.data[k] * rv.data[j] + xv.data[k] * tr.data[j];
                    }
                    out
                }
                Op::MulCol(x, col) => {
                    let (xv, cv) = (self.value(*x), self.value(*col));
                    let (tx, tc) = (&tan[x.0], &tan[col.0]);
                    let n = v.cols.max(1);
                    let mut out = Tensor::zeros(v.rows, v.cols);
                    for (k, o) in out.data.iter_mut().enumerate() {
                        let r = k / n;
                        *o = tx.data[k] * cv.data[r] + xv.data[k] * tc.data[r];
                    }
                    out
                }
                Op::OuterAdd(col, row) => {
                    let n = v.cols.max(1);
                    let mut out = Tensor::zeros(v.rows, v.cols);
                    for (k, o) in out.data.iter_mut().enumerate() {
                        *o = tan[col.0].data[k / n] + tan[row.0].data[k % n];
                    }
                    out
                }
                Op::Add(a, b) => zip_with(&tan[a.0], &tan[b.0], &|x, y| x + y),
                Op::Sub(a, b) => zip_with(&tan[a.0], &tan[b.0], &|x, y| x - y),
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (ta, tb) = (&tan[a.0], &tan[b.0]);
                    Tensor::new(
                        v.rows,
                        v.cols,
                        (0..v.len()).map(|k| ta.data[k] * bv.data[k] + av.data[k] * tb.data[k]).collect(),
                    )
                }
                Op::Gather(x, idx) => {
                    let c = v.cols;
                    let tx = &tan[x.0];
                    let mut out = Tensor::zeros(v.rows, c);
                    for (i, &r) in idx.iter().enumerate() {
                        out.data[i * c..(i + 1) * c].copy_from_slice(&tx.data[r * c..(r + 1) * c]);
                    }
                    out
                }
                Op::SliceCols(x, start, len) => {
                    let cols = self.value(*x).cols;
                    let tx = &tan[x.0];
                    let mut out = Tensor::zeros(v.rows, *len);
                    for r in 0..v.rows {
                        out.data[r * len..(r + 1) * len]
                            .copy_from_slice(&tx.data[r * cols + start..r * cols + start + len]);
                    }
                    out
                }
                Op::View(x, offset) => Tensor::new(
                    v.rows,
                    v.cols,
                    tan[x.0].data[*offset..offset + v.len()].to_vec(),
                ),
                Op::Swish(x) => unary(*x, &|a| swish3(a).1),
                Op::Sin(x) => unary(*x, &f64::cos),
                Op::Cos(x) => unary(*x, &|a| -a.sin()),
                Op::Exp(x) => unary(*x, &f64::exp),
                Op::Powi(x, n) => {
                    let n = *n;
                    unary(*x, &move |a| if n == 0 { 0.0 } else { n as f64 * a.powi(n - 1) })
                }
                Op::Recip(x) => unary(*x, &|a| -1.0 / (a * a)),
                Op::Scale(x, c) => {
                    let c = *c;
                    unary(*x, &move |_| c)
                }
                Op::AddConst(x, _) => tan[x.0].clone(),
                Op::Sum(x) => Tensor::scalar(tan[x.0].data.iter().sum()),
                Op::SumCols(x) => {
                    let cols = self.value(*x).cols.max(1);
                    Tensor::col_vector(tan[x.0].data.chunks(cols).map(|r| r.iter().sum()).collect())
                }
            };
            tan.push(t);
        }
        tan
    }
}
