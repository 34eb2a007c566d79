//! Tape-based reverse-mode differentiation over dense 2-D arrays.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs to compute exact adjoints. Nodes are [`Var`] handles into the tape;
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! into the [`ParamStore`] for every parameter leaf reachable from the loss.
//!
//! Scalars are represented as `1x1` arrays. Row vectors (`1xn`) broadcast
//! over rows in the `*_row` operations.

use ndarray::{Array2, Axis, Zip};
use rand::Rng;

use super::param::{ParamId, ParamStore};
use super::real::Real;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Array2<T>),
    AddRow(Var, Var),
    SubRow(Var, Var),
    DivRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Sqrt(Var),
    ClampMin(Var, T),
    LayerNorm(Var, Array2<T>),
    Softmax(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    ColMean(Var),
    SqDist(Var, Var),
}

impl<T> Op<T> {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "constant",
            Op::Param(_) => "parameter",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulConst(..) => "mul_const",
            Op::AddRow(..) => "add_row",
            Op::SubRow(..) => "sub_row",
            Op::DivRow(..) => "div_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Sqrt(_) => "sqrt",
            Op::ClampMin(..) => "clamp_min",
            Op::LayerNorm(..) => "layer_norm",
            Op::Softmax(_) => "softmax",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::Transpose(_) => "transpose",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::ColMean(_) => "col_mean",
            Op::SqDist(..) => "sq_dist",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    label: Option<String>,
}

/// A single forward pass recorded for differentiation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    first_non_finite: Option<usize>,
    stochastic: bool,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            first_non_finite: None,
            stochastic: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        let idx = self.nodes.len();
        if self.first_non_finite.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.first_non_finite = Some(idx);
        }
        self.nodes.push(Node {
            value,
            op,
            label: None,
        });
        Var(idx)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    /// Value of a `1x1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Attach a human-readable name used in non-finite diagnostics.
    pub fn label(&mut self, v: Var, name: impl Into<String>) -> Var {
        self.nodes[v.0].label = Some(name.into());
        v
    }

    /// True if any recorded operation consumed randomness (training-mode dropout).
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    /// Errors with the name of the first tensor that held a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite {
            None => Ok(()),
            Some(idx) => {
                let node = &self.nodes[idx];
                let name = match &node.label {
                    Some(l) => format!("{l} ({})", node.op.kind()),
                    None => format!("node {idx} ({})", node.op.kind()),
                };
                Err(Error::NonFinite { context: name })
            }
        }
    }

    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::shape(
                "matmul",
                format!("inner dims to agree ({}x{} . {}x?)", sa.0, sa.1, sa.1),
                format!("{}x{}", sb.0, sb.1),
            ));
        }
        let v = self.value(a).dot(self.value(b));
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    fn same_shape(&self, ctx: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(
                ctx,
                format!("{}x{}", sa.0, sa.1),
                format!("{}x{}", sb.0, sb.1),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a) * self.value(b);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant that receives no gradient.
    pub fn mul_const(&mut self, a: Var, c: Array2<T>) -> Result<Var> {
        if self.shape(a) != c.dim() {
            return Err(Error::shape(
                "mul_const",
                format!("{:?}", self.shape(a)),
                format!("{:?}", c.dim()),
            ));
        }
        let v = self.value(a) * &c;
        Ok(self.push(v, Op::MulConst(a, c)))
    }

    fn row_operand(&self, ctx: &'static str, a: Var, row: Var) -> Result<()> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(Error::shape(
                ctx,
                format!("1x{}", sa.1),
                format!("{}x{}", sr.0, sr.1),
            ));
        }
        Ok(())
    }

    /// `a + 1·row`, broadcasting a `1xn` row over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand("add_row", a, row)?;
        let v = self.value(a) + self.value(row);
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    pub fn sub_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand("sub_row", a, row)?;
        let v = self.value(a) - self.value(row);
        Ok(self.push(v, Op::SubRow(a, row)))
    }

    pub fn div_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand("div_row", a, row)?;
        let v = self.value(a) / self.value(row);
        Ok(self.push(v, Op::DivRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn identity(&mut self, a: Var) -> Var {
        a
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.sqrt());
        self.push(v, Op::Sqrt(a))
    }

    /// `max(a, floor)` elementwise; gradient passes only where `a > floor`.
    pub fn clamp_min(&mut self, a: Var, floor: T) -> Var {
        let v = self.value(a).mapv(|x| if x > floor { x } else { floor });
        self.push(v, Op::ClampMin(a, floor))
    }

    /// Per-row `(x - mean) / sqrt(var + eps)` with population variance, no affine.
    pub fn layer_norm(&mut self, a: Var, eps: T) -> Var {
        let (out, inv_std) = layer_norm_rows(self.value(a), eps);
        self.push(out, Op::LayerNorm(a, inv_std))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: T,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        if !(rate >= T::zero() && rate < T::one()) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0,1)")));
        }
        if !training || rate == T::zero() {
            return Ok(a);
        }
        self.stochastic = true;
        let keep_scale = T::one() / (T::one() - rate);
        let p = rate.to_f64();
        let mask = Array2::from_shape_simple_fn(self.shape(a), || {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep_scale
            }
        });
        self.mul_const(a, mask)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(Error::shape("concat_cols", sa.0, sb.0));
        }
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts checked");
        Ok(self.push(v, Op::ConcatCols(a, b)))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let cols = self.shape(a).1;
        if start > end || end > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("range within 0..{cols}"),
                format!("{start}..{end}"),
            ));
        }
        let v = self
            .value(a)
            .slice(ndarray::s![.., start..end])
            .to_owned();
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_usize(self.value(a).len());
        let s = self.value(a).sum() / n;
        self.push(Array2::from_elem((1, 1), s), Op::Mean(a))
    }

    /// Column means as a `1xn` row.
    pub fn col_mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = T::from_usize(x.nrows());
        let v = x.sum_axis(Axis(0)).mapv(|s| s / n).insert_axis(Axis(0));
        self.push(v, Op::ColMean(a))
    }

    /// Pairwise squared Euclidean distances between the rows of `a` (m×k) and `b` (n×k).
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(Error::shape("sq_dist", sa.1, sb.1));
        }
        let (x, y) = (self.value(a), self.value(b));
        let mut out = Array2::zeros((sa.0, sb.0));
        for (j, xr) in x.rows().into_iter().enumerate() {
            for (k, yr) in y.rows().into_iter().enumerate() {
                let mut d = T::zero();
                for (&p, &q) in xr.iter().zip(yr.iter()) {
                    let diff = p - q;
                    d = d + diff * diff;
                }
                out[[j, k]] = d;
            }
        }
        Ok(self.push(out, Op::SqDist(a, b)))
    }

    /// `sum(a ⊙ a)`.
    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let sq = self.mul(a, a)?;
        Ok(self.sum(sq))
    }

    /// Reverse pass from a scalar loss. Gradients accumulate into the store;
    /// calling twice without zeroing adds the contributions.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::NotScalar { rows: r, cols: c });
        }
        let mut grads: Vec<Option<Array2<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => store.accumulate_grad(*id, &g),
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.mapv(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MulConst(a, c) => acc(&mut grads, *a, &g * c),
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::SubRow(a, row) => {
                    let dr = g.sum_axis(Axis(0)).mapv(|x| -x).insert_axis(Axis(0));
                    acc(&mut grads, *row, dr);
                    acc(&mut grads, *a, g);
                }
                Op::DivRow(a, row) => {
                    let r = self.value(*row);
                    let y = &node.value;
                    // d(a/r)/dr = -y/r
                    let dr = (&g * y / r)
                        .sum_axis(Axis(0))
                        .mapv(|x| -x)
                        .insert_axis(Axis(0));
                    acc(&mut grads, *row, dr);
                    acc(&mut grads, *a, &g / r);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| {
                            if x <= T::zero() {
                                *d = T::zero()
                            }
                        });
                    acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| *d = *d * y * (T::one() - y));
                    acc(&mut grads, *a, d);
                }
                Op::Sqrt(a) => {
                    let two = T::from_f64(2.0);
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| *d = *d / (two * y));
                    acc(&mut grads, *a, d);
                }
                Op::ClampMin(a, floor) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| {
                            if x <= *floor {
                                *d = T::zero()
                            }
                        });
                    acc(&mut grads, *a, d);
                }
                Op::LayerNorm(a, inv_std) => {
                    let d = layer_norm_backward(&g, &node.value, inv_std);
                    acc(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut d = &g * y;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let s = drow.sum();
                        Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| {
                            *dv = *dv - yv * s;
                        });
                    }
                    acc(&mut grads, *a, d);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    let da = g.slice(ndarray::s![.., ..ca]).to_owned();
                    let db = g.slice(ndarray::s![.., ca..]).to_owned();
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::SliceCols(a, start) => {
                    let mut d = Array2::zeros(self.shape(*a));
                    let end = start + g.ncols();
                    d.slice_mut(ndarray::s![.., *start..end]).assign(&g);
                    acc(&mut grads, *a, d);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::Sum(a) => {
                    let d = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                    acc(&mut grads, *a, d);
                }
                Op::Mean(a) => {
                    let n = T::from_usize(self.value(*a).len());
                    let d = Array2::from_elem(self.shape(*a), g[[0, 0]] / n);
                    acc(&mut grads, *a, d);
                }
                Op::ColMean(a) => {
                    let (rows, _) = self.shape(*a);
                    let n = T::from_usize(rows);
                    let row = g.mapv(|x| x / n);
                    let d = row
                        .broadcast(self.shape(*a))
                        .expect("row broadcasts")
                        .to_owned();
                    acc(&mut grads, *a, d);
                }
                Op::SqDist(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let two = T::from_f64(2.0);
                    let mut dx = Array2::zeros(x.dim());
                    let mut dy = Array2::zeros(y.dim());
                    for j in 0..x.nrows() {
                        for k in 0..y.nrows() {
                            let gk = g[[j, k]] * two;
                            if gk == T::zero() {
                                continue;
                            }
                            for c in 0..x.ncols() {
                                let diff = gk * (x[[j, c]] - y[[k, c]]);
                                dx[[j, c]] = dx[[j, c]] + diff;
                                dy[[k, c]] = dy[[k, c]] - diff;
                            }
                        }
                    }
                    acc(&mut grads, *a, dx);
                    acc(&mut grads, *b, dy);
                }
            }
        }
        Ok(())
    }
}

fn acc<T: Real>(grads: &mut [Option<Array2<T>>], v: Var, d: Array2<T>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &d,
        slot @ None => *slot = Some(d),
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Forward layer norm; also returns the per-row `1/sqrt(var + eps)` (rows×1).
pub fn layer_norm_rows<T: Real>(x: &Array2<T>, eps: T) -> (Array2<T>, Array2<T>) {
    let (rows, cols) = x.dim();
    let n = T::from_usize(cols);
    let mut out = x.clone();
    let mut inv_std = Array2::zeros((rows, 1));
    for (r, mut row) in out.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().fold(T::zero(), |s, &v| s + v * v) / n;
        let s = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| v * s);
        inv_std[[r, 0]] = s;
    }
    (out, inv_std)
}

fn layer_norm_backward<T: Real>(g: &Array2<T>, y: &Array2<T>, inv_std: &Array2<T>) -> Array2<T> {
    let n = T::from_usize(y.ncols());
    let mut out = g.clone();
    for (r, mut drow) in out.rows_mut().into_iter().enumerate() {
        let yrow = y.row(r);
        let mean_g = drow.sum() / n;
        let mean_gy = drow
            .iter()
            .zip(yrow.iter())
            .fold(T::zero(), |s, (&a, &b)| s + a * b)
            / n;
        let s = inv_std[[r, 0]];
        Zip::from(&mut drow)
            .and(&yrow)
            .for_each(|d, &yv| *d = s * (*d - mean_g - yv * mean_gy));
    }
    out
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(x: &Array2<T>) -> Array2<T> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_hand_example() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        let b = g.constant(array![[1.0], [1.0]]);
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &array![[3.0], [7.0]]);
    }

    #[test]
    fn matmul_identity_and_mismatch() {
        let mut g = Graph::<f64>::new();
        let x = array![[1.5, -2.0, 0.25], [4.0, 5.0, 6.0]];
        let i = g.constant(Array2::eye(2));
        let xv = g.constant(x.clone());
        let y = g.matmul(i, xv).unwrap();
        assert_eq!(g.value(y), &x);
        assert!(matches!(g.matmul(xv, xv), Err(Error::Shape { .. })));
    }

    #[test]
    fn layer_norm_examples() {
        let (y, _) = layer_norm_rows(&array![[5.0, 5.0, 5.0], [1.0, 2.0, 3.0]], 1e-5);
        for v in y.row(0) {
            assert_eq!(*v, 0.0);
        }
        // mean 2, population variance 2/3
        let expect = 1.0 / (2.0f64 / 3.0 + 1e-5).sqrt();
        assert!((y[[1, 0]] + expect).abs() < 1e-12);
        assert!(y[[1, 1]].abs() < 1e-12);
        assert!((y[[1, 2]] - 1.2247).abs() < 1e-3);
    }

    #[test]
    fn layer_norm_shift_invariant() {
        let x: Array2<f64> = array![[0.3, -1.2, 4.0, 2.2]];
        let (a, _) = layer_norm_rows(&x, 1e-5);
        let (b, _) = layer_norm_rows(&(&x + 17.5), 1e-5);
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn softmax_examples() {
        let u = softmax_rows(&array![[2.0f64, 2.0, 2.0, 2.0]]);
        for v in u.row(0) {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let s = softmax_rows(&array![[0.0, 3.0f64.ln()]]);
        assert!((s[[0, 0]] - 0.25).abs() < 1e-15);
        assert!((s[[0, 1]] - 0.75).abs() < 1e-15);
        let shifted = softmax_rows(&array![[1000.0, 1000.0 + 3.0f64.ln()]]);
        assert!((shifted[[0, 1]] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        let mut g = Graph::<f64>::new();
        let x = g.constant(array![[-3.0, 3.0]]);
        let r = g.relu(x);
        assert_eq!(g.value(r), &array![[0.0, 3.0]]);
        let i = g.identity(x);
        assert_eq!(i, x);
    }

    #[test]
    fn backward_sum_and_square() {
        let mut store = ParamStore::<f64>::new();
        let p = store.add("p", array![[1.0, -2.0], [0.5, 3.0]]);
        let mut g = Graph::new();
        let pv = g.param(&store, p);
        let s = g.sum(pv);
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(p), &Array2::<f64>::ones((2, 2)));

        store.zero_grads();
        let mut g = Graph::new();
        let pv = g.param(&store, p);
        let s = g.sum_squares(pv).unwrap();
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(p), &(store.value(p) * 2.0));

        // repeated backward accumulates
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(p), &(store.value(p) * 4.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut store = ParamStore::<f64>::new();
        let mut g = Graph::new();
        let x = g.constant(Array2::zeros((2, 1)));
        assert!(matches!(
            g.backward(x, &mut store),
            Err(Error::NotScalar { rows: 2, cols: 1 })
        ));
    }

    #[test]
    fn non_finite_is_reported_by_label() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(array![[-1.0]]);
        let s = g.sqrt(x);
        g.label(s, "root");
        let err = g.check_finite().unwrap_err();
        assert!(err.to_string().contains("root"), "{err}");
    }

    #[test]
    fn dropout_modes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::<f64>::new();
        let x = g.constant(Array2::ones((3, 3)));
        assert_eq!(g.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(g.dropout(x, 0.5, &mut rng, false).unwrap(), x);
        assert!(!g.is_stochastic());
        assert!(g.dropout(x, 1.0, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_statistics() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut g = Graph::<f64>::new();
        let n = 100_000;
        let x = g.constant(Array2::from_elem((1, n), 2.0));
        let y = g.dropout(x, 0.2, &mut rng, true).unwrap();
        assert!(g.is_stochastic());
        let out = g.value(y);
        let survivors = out.iter().filter(|v| **v != 0.0).count() as f64 / n as f64;
        assert!((survivors - 0.8).abs() < 0.01, "{survivors}");
        let mean = out.mean().unwrap();
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "{mean}");
    }
}
