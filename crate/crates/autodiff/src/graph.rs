use crate::tensor::gemm;
use crate::{AutodiffError, Gradients, ParamId, ParamStore, Result, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Elu(Var),
    Exp(Var),
    Square(Var),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Maximum(Var, Var),
    BroadcastRows(Var),
}

#[derive(Debug)]
struct Node {
    /// `None` for parameter leaves, which are read from the store.
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A tape of eagerly evaluated matrix operations.
///
/// The graph borrows the parameter store immutably; parameters are never
/// copied onto the tape. Nodes are appended in evaluation order, which is a
/// topological order, and [`Graph::backward`] walks it once in reverse.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant leaf; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims("matmul")?;
        let (k2, n) = self.value(b).dims("matmul")?;
        if k != k2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `a + row` with `row` of shape `[1, cols]` broadcast over rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims("add_row")?;
        let (r, n2) = self.value(row).dims("add_row")?;
        if r != 1 || n != n2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "add_row",
                lhs: vec![m, n],
                rhs: vec![r, n2],
            });
        }
        let rv = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_mut(n.max(1)) {
            for (o, b) in chunk.iter_mut().zip(rv) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::AddRow(a, row), rg))
    }

    /// Affine map `input · weight + bias` for `input: [n, in]`,
    /// `weight: [in, out]` and `bias: [1, out]`.
    pub fn linear(&mut self, weight: Var, bias: Var, input: Var) -> Result<Var> {
        let xw = self.matmul(input, weight)?;
        self.add_row(xw, bias)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("maximum", a, b, f64::max, Op::Maximum(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, |x| x * factor, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Exponential linear unit with α = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, elu, Op::Elu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Row sums: `[n, d] -> [n, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims("sum_cols")?;
        let data: Vec<f64> = if n == 0 {
            vec![0.0; m]
        } else {
            self.value(a).data().chunks(n).map(|r| r.iter().sum()).collect()
        };
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(vec![m, 1], data)?, Op::SumCols(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).dims("concat_cols")?.0,
            None => 0,
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims("concat_cols")?;
            if r != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: vec![rows],
                    rhs: vec![r, c],
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(vec![rows, total], data)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims("slice_cols")?;
        if start > end || end > n {
            return Err(AutodiffError::SliceOutOfBounds {
                start,
                end,
                width: n,
            });
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&src[r * n + start..r * n + end]);
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(vec![m, end - start], data)?,
            Op::SliceCols(a, start),
            rg,
        ))
    }

    /// Repeat a `[1, d]` row `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let (r, n) = self.value(a).dims("broadcast_rows")?;
        if r != 1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "broadcast_rows",
                lhs: vec![1, n],
                rhs: vec![r, n],
            });
        }
        let row = self.value(a).data();
        let mut data = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            data.extend_from_slice(row);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(vec![rows, n], data)?, Op::BroadcastRows(a), rg))
    }

    /// Reverse pass from a one-element output.
    ///
    /// Returns one gradient slot per parameter in the store; parameters that
    /// do not influence `output` get zeros.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_shape = self.value(output).shape();
        if self.value(output).len() != 1 {
            return Err(AutodiffError::NotScalar(out_shape.to_vec()));
        }
        let mut result = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Tensor>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(out_shape, 1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => result.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims("matmul")?;
                    let n = self.value(*b).cols();
                    if self.rg(*a) {
                        // dA = G · Bᵀ
                        let mut da = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), false, self.value(*b).data(), true, 0.0, &mut da);
                        accumulate(&mut grads, *a, Tensor::new(vec![m, k], da)?);
                    }
                    if self.rg(*b) {
                        // dB = Aᵀ · G
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, self.value(*a).data(), true, g.data(), false, 0.0, &mut db);
                        accumulate(&mut grads, *b, Tensor::new(vec![k, n], db)?);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(*row) {
                        let n = g.cols();
                        let mut dr = vec![0.0; n];
                        for chunk in g.data().chunks(n.max(1)) {
                            for (d, x) in dr.iter_mut().zip(chunk) {
                                *d += x;
                            }
                        }
                        accumulate(&mut grads, *row, Tensor::row(&dr));
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.map(|x| -x));
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let d = zip(&g, self.value(*b), |g, y| g * y);
                        accumulate(&mut grads, *a, d);
                    }
                    if self.rg(*b) {
                        let d = zip(&g, self.value(*a), |g, x| g * x);
                        accumulate(&mut grads, *b, d);
                    }
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.map(|x| x * f)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Elu(a) => {
                    let d = zip(&g, self.value(*a), |g, x| if x > 0.0 { g } else { g * x.exp() });
                    accumulate(&mut grads, *a, d);
                }
                Op::Exp(a) => {
                    let y = node.value.as_ref().expect("exp output");
                    accumulate(&mut grads, *a, zip(&g, y, |g, y| g * y));
                }
                Op::Square(a) => {
                    let d = zip(&g, self.value(*a), |g, x| 2.0 * g * x);
                    accumulate(&mut grads, *a, d);
                }
                Op::SumCols(a) => {
                    let src = self.value(*a);
                    let n = src.cols();
                    let mut d = Vec::with_capacity(src.len());
                    for &gr in g.data() {
                        d.extend(std::iter::repeat_n(gr, n));
                    }
                    accumulate(&mut grads, *a, Tensor::new(src.shape().to_vec(), d)?);
                }
                Op::Sum(a) => {
                    let g0 = g.data()[0];
                    accumulate(&mut grads, *a, Tensor::filled(self.value(*a).shape(), g0));
                }
                Op::Mean(a) => {
                    let src = self.value(*a);
                    let g0 = g.data()[0] / src.len().max(1) as f64;
                    accumulate(&mut grads, *a, Tensor::filled(src.shape(), g0));
                }
                Op::ConcatCols(parts) => {
                    let total = g.cols();
                    let rows = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.rg(p) {
                            let mut d = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                            }
                            accumulate(&mut grads, p, Tensor::new(vec![rows, w], d)?);
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let (m, n) = src.dims("slice_cols")?;
                    let w = g.cols();
                    let mut d = vec![0.0; m * n];
                    for r in 0..m {
                        d[r * n + start..r * n + start + w]
                            .copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                    accumulate(&mut grads, *a, Tensor::new(vec![m, n], d)?);
                }
                Op::Clamp(a, lo, hi) => {
                    let d = zip(&g, self.value(*a), |g, x| {
                        if x >= *lo && x <= *hi {
                            g
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, d);
                }
                Op::Minimum(a, b) | Op::Maximum(a, b) => {
                    let take_min = matches!(node.op, Op::Minimum(..));
                    let va = self.value(*a).data();
                    let vb = self.value(*b).data();
                    // ties route the gradient to the left operand
                    let left: Vec<bool> = va
                        .iter()
                        .zip(vb)
                        .map(|(x, y)| if take_min { x <= y } else { x >= y })
                        .collect();
                    if self.rg(*a) {
                        let d = g.data().iter().zip(&left).map(|(g, &l)| if l { *g } else { 0.0 }).collect();
                        accumulate(&mut grads, *a, Tensor::new(g.shape().to_vec(), d)?);
                    }
                    if self.rg(*b) {
                        let d = g.data().iter().zip(&left).map(|(g, &l)| if l { 0.0 } else { *g }).collect();
                        accumulate(&mut grads, *b, Tensor::new(g.shape().to_vec(), d)?);
                    }
                }
                Op::BroadcastRows(a) => {
                    let n = g.cols();
                    let mut d = vec![0.0; n];
                    for chunk in g.data().chunks(n.max(1)) {
                        for (acc, x) in d.iter_mut().zip(chunk) {
                            *acc += x;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::row(&d));
                }
            }
        }
        Ok(result)
    }
}

pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip of equal shapes")
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
