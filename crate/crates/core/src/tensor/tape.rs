use super::params::{ParamGrads, ParamId, ParameterSet};
use super::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Reduction / normalization axis, numpy-style.
///
/// `Rows` collapses the row dimension (one result per column); `Cols`
/// collapses the column dimension (one result per row).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Concat(Vec<Var>, Axis),
    Softmax(Var, Axis),
    Softplus(Var),
    Cos(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var, T),
    ClampMin(Var, T),
    Square(Var),
    Sum(Var),
    SumAxis(Var, Axis),
    Transpose(Var),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    RepeatRows(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records a forward computation over a read-only [`ParameterSet`].
///
/// A tape is single-threaded; independent tapes may share one parameter set.
pub struct Tape<'p, T> {
    params: &'p ParameterSet<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

fn shape_err(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Error {
    Error::Shape { op, detail: format!("{a:?} vs {b:?}") }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParameterSet<T>) -> Self {
        Self { params, nodes: Vec::new(), param_vars: vec![None; params.len()] }
    }

    pub fn params(&self) -> &'p ParameterSet<T> {
        self.params
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A non-trainable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push("constant", value, Op::Leaf)
    }

    /// A copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.push("detach", value, Op::Leaf)
    }

    /// The tape node for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let value = self.params.get(id).clone();
        self.nodes.push(Node { value, op: Op::Param });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av.shape(), bv.shape()));
        }
        let out = matmul(av, bv);
        self.push("matmul", out, Op::MatMul(a, b))
    }

    fn zip_with(&self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b))
    }

    /// Adds a `1 x n` bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        let n = xv.cols();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bv.data()[i % n];
        }
        self.push("add_bias", out, Op::AddBias(x, bias))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let out = self.value(x).map(|v| v * s);
        self.push("scale", out, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Result<Var> {
        let out = self.value(x).map(|v| v + s);
        self.push("add_scalar", out, Op::AddScalar(x))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -T::one())
    }

    /// `1 - x`, element-wise.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        let n = self.neg(x)?;
        self.add_scalar(n, T::one())
    }

    /// Concatenates along `axis`: `Rows` stacks vertically, `Cols` side by side.
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape { op: "concat", detail: "no inputs".into() });
        }
        let first = self.value(parts[0]).shape();
        let out = match axis {
            Axis::Rows => {
                let cols = first[1];
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let v = self.value(p);
                    if v.cols() != cols {
                        return Err(shape_err("concat", first, v.shape()));
                    }
                    rows += v.rows();
                    data.extend_from_slice(v.data());
                }
                Tensor::from_vec(rows, cols, data)?
            }
            Axis::Cols => {
                let rows = first[0];
                let mut cols = 0;
                for &p in parts {
                    let v = self.value(p);
                    if v.rows() != rows {
                        return Err(shape_err("concat", first, v.shape()));
                    }
                    cols += v.cols();
                }
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::from_vec(rows, cols, data)?
            }
        };
        self.push("concat", out, Op::Concat(parts.to_vec(), axis))
    }

    /// Softmax normalizing along `axis`; subtracts the running max for stability.
    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let xv = self.value(x);
        let mut out = xv.clone();
        for_each_lane(xv.shape(), axis, |lane| {
            let max = lane.iter().map(|&i| xv.data()[i]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for &i in lane {
                let e = (xv.data()[i] - max).exp();
                out.data_mut()[i] = e;
                total += e;
            }
            for &i in lane {
                out.data_mut()[i] /= total;
            }
        });
        self.push("softmax", out, Op::Softmax(x, axis))
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(T::softplus);
        self.push("softplus", out, Op::Softplus(x))
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(T::cos);
        self.push("cos", out, Op::Cos(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(T::tanh);
        self.push("tanh", out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(T::sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(T::exp);
        self.push("exp", out, Op::Exp(x))
    }

    /// `ln(max(x, floor))`; no gradient flows where the floor is active.
    pub fn log(&mut self, x: Var, floor: T) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(floor).ln());
        self.push("log", out, Op::Log(x, floor))
    }

    /// `max(x, floor)`.
    pub fn clamp_min(&mut self, x: Var, floor: T) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(floor));
        self.push("clamp_min", out, Op::ClampMin(x, floor))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v * v);
        self.push("square", out, Op::Square(x))
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn sum_axis(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let xv = self.value(x);
        let [r, c] = xv.shape();
        let out = match axis {
            Axis::Rows => {
                let mut o = Tensor::zeros(1, c);
                for i in 0..r {
                    for j in 0..c {
                        o.data_mut()[j] += xv.get(i, j);
                    }
                }
                o
            }
            Axis::Cols => {
                let mut o = Tensor::zeros(r, 1);
                for i in 0..r {
                    o.data_mut()[i] = xv.row_slice(i).iter().copied().sum();
                }
                o
            }
        };
        self.push("sum_axis", out, Op::SumAxis(x, axis))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = T::lit(self.value(x).len().max(1) as f64);
        let s = self.sum(x)?;
        self.scale(s, T::one() / n)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose();
        self.push("transpose", out, Op::Transpose(x))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.cols() {
            return Err(Error::Shape { op: "slice_cols", detail: format!("{start}+{len} > {}", xv.cols()) });
        }
        let mut data = Vec::with_capacity(xv.rows() * len);
        for r in 0..xv.rows() {
            data.extend_from_slice(&xv.row_slice(r)[start..start + len]);
        }
        let out = Tensor::from_vec(xv.rows(), len, data)?;
        self.push("slice_cols", out, Op::SliceCols(x, start))
    }

    /// Rows of `x` selected by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.rows()) {
            return Err(Error::Shape { op: "gather_rows", detail: format!("row {bad} of {}", xv.rows()) });
        }
        let mut data = Vec::with_capacity(idx.len() * xv.cols());
        for &i in idx {
            data.extend_from_slice(xv.row_slice(i));
        }
        let out = Tensor::from_vec(idx.len(), xv.cols(), data)?;
        self.push("gather_rows", out, Op::GatherRows(x, idx.to_vec()))
    }

    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        self.gather_rows(x, &[i])
    }

    /// Stacks `n` copies of a `1 x c` row.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != 1 {
            return Err(Error::Shape { op: "repeat_rows", detail: format!("expected a row, got {:?}", xv.shape()) });
        }
        let mut data = Vec::with_capacity(n * xv.cols());
        for _ in 0..n {
            data.extend_from_slice(xv.data());
        }
        let out = Tensor::from_vec(n, xv.cols(), data)?;
        self.push("repeat_rows", out, Op::RepeatRows(x))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let xv = self.value(x);
        let out = Tensor::from_vec(rows, cols, xv.data().to_vec())?;
        self.push("reshape", out, Op::Reshape(x))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.shape() != [1, 1] {
            return Err(Error::NonScalarLoss { rows: lv.rows(), cols: lv.cols() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut param_grads: Vec<Tensor<T>> =
            self.params.iter().map(|(_, _, v)| Tensor::zeros(v.rows(), v.cols())).collect();
        for (pid, slot) in self.param_vars.iter().enumerate() {
            if let Some(v) = slot {
                if let Some(g) = &grads[v.0] {
                    param_grads[pid] = g.clone();
                }
            }
        }
        Ok(Gradients { nodes: grads, params: ParamGrads::from_vec(param_grads) })
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let ga = matmul_nt(g, self.value(*b));
                let gb = matmul_tn(self.value(*a), g);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(grads, *a, zip(g, bv, |x, y| x * y));
                acc(grads, *b, zip(g, av, |x, y| x * y));
            }
            Op::AddBias(x, b) => {
                acc(grads, *x, g.clone());
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gb.data_mut().iter_mut().zip(g.row_slice(r)) {
                        *o += v;
                    }
                }
                acc(grads, *b, gb);
            }
            Op::Scale(x, s) => acc(grads, *x, g.map(|v| v * *s)),
            Op::AddScalar(x) => acc(grads, *x, g.clone()),
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let [pr, pc] = self.shape(p);
                    let mut gp = Tensor::zeros(pr, pc);
                    match axis {
                        Axis::Rows => {
                            gp.data_mut().copy_from_slice(&g.data()[offset * pc..(offset + pr) * pc]);
                            offset += pr;
                        }
                        Axis::Cols => {
                            for r in 0..pr {
                                gp.data_mut()[r * pc..(r + 1) * pc]
                                    .copy_from_slice(&g.row_slice(r)[offset..offset + pc]);
                            }
                            offset += pc;
                        }
                    }
                    acc(grads, p, gp);
                }
            }
            Op::Softmax(x, axis) => {
                let mut gx = Tensor::zeros(y.rows(), y.cols());
                for_each_lane(y.shape(), *axis, |lane| {
                    let dot: T = lane.iter().map(|&k| g.data()[k] * y.data()[k]).sum();
                    for &k in lane {
                        gx.data_mut()[k] = y.data()[k] * (g.data()[k] - dot);
                    }
                });
                acc(grads, *x, gx);
            }
            Op::Softplus(x) => acc(grads, *x, zip(g, self.value(*x), |gv, xv| gv * xv.sigmoid())),
            Op::Cos(x) => acc(grads, *x, zip(g, self.value(*x), |gv, xv| -gv * xv.sin())),
            Op::Tanh(x) => acc(grads, *x, zip(g, y, |gv, yv| gv * (T::one() - yv * yv))),
            Op::Sigmoid(x) => acc(grads, *x, zip(g, y, |gv, yv| gv * yv * (T::one() - yv))),
            Op::Exp(x) => acc(grads, *x, zip(g, y, |gv, yv| gv * yv)),
            Op::Log(x, floor) => {
                acc(grads, *x, zip(g, self.value(*x), |gv, xv| if xv > *floor { gv / xv } else { T::zero() }))
            }
            Op::ClampMin(x, floor) => {
                acc(grads, *x, zip(g, self.value(*x), |gv, xv| if xv >= *floor { gv } else { T::zero() }))
            }
            Op::Square(x) => acc(grads, *x, zip(g, self.value(*x), |gv, xv| gv * (xv + xv))),
            Op::Sum(x) => {
                let [r, c] = self.shape(*x);
                acc(grads, *x, Tensor::filled(r, c, g.item()));
            }
            Op::SumAxis(x, axis) => {
                let [r, c] = self.shape(*x);
                let mut gx = Tensor::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        let v = match axis {
                            Axis::Rows => g.data()[j],
                            Axis::Cols => g.data()[i],
                        };
                        gx.set(i, j, v);
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Transpose(x) => acc(grads, *x, g.transpose()),
            Op::SliceCols(x, start) => {
                let [r, c] = self.shape(*x);
                let mut gx = Tensor::zeros(r, c);
                let w = g.cols();
                for i in 0..r {
                    gx.data_mut()[i * c + start..i * c + start + w].copy_from_slice(g.row_slice(i));
                }
                acc(grads, *x, gx);
            }
            Op::GatherRows(x, idx) => {
                let [r, c] = self.shape(*x);
                let mut gx = Tensor::zeros(r, c);
                for (k, &src) in idx.iter().enumerate() {
                    for (o, &v) in gx.data_mut()[src * c..(src + 1) * c].iter_mut().zip(g.row_slice(k)) {
                        *o += v;
                    }
                }
                acc(grads, *x, gx);
            }
            Op::RepeatRows(x) => {
                let mut gx = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gx.data_mut().iter_mut().zip(g.row_slice(r)) {
                        *o += v;
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Reshape(x) => {
                let [r, c] = self.shape(*x);
                acc(grads, *x, Tensor::from_vec(r, c, g.data().to_vec()).expect("reshape preserves length"));
            }
        }
    }
}

fn zip<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn acc<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Calls `f` with the flat indices of every lane along `axis`.
fn for_each_lane(shape: [usize; 2], axis: Axis, mut f: impl FnMut(&[usize])) {
    let [r, c] = shape;
    let mut lane = Vec::new();
    match axis {
        Axis::Cols => {
            for i in 0..r {
                lane.clear();
                lane.extend((0..c).map(|j| i * c + j));
                f(&lane);
            }
        }
        Axis::Rows => {
            for j in 0..c {
                lane.clear();
                lane.extend((0..r).map(|i| i * c + j));
                f(&lane);
            }
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: ParamGrads<T>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to any recorded node; `None` if it does not reach the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].as_ref()
    }

    /// Dense gradient per parameter; parameters not on the tape are zero.
    pub fn params(&self) -> &ParamGrads<T> {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads<T> {
        self.params
    }
}
