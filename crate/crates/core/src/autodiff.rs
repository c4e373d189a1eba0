//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar (1×1) node walks the tape in reverse and
//! accumulates adjoints for every recorded node. Named parameters are bound
//! once per tape through [`Tape::param`] so their gradients can be gathered
//! by name afterwards.
//!
//! Everything runs in double precision on a single thread; repeated runs of
//! the same program produce bit-identical values and gradients.

use std::cell::RefCell;
use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

pub type Mat = Array2<f64>;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Elu(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    LogSoftmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    RepeatRows(Var),
    RepeatCols(Var),
    Transpose(Var),
    SumAll(Var),
    MeanRows(Var),
    RowSums(Var),
    ScaleRows(Var, Var),
    Gather(Var, Vec<usize>),
    LayerNorm(Var),
    WeightedBce(Var),
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    aux: Option<Mat>,
    aux2: Option<Mat>,
}

/// Operation recorder.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<BTreeMap<String, Var>>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Grads {
    adjoints: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.adjoints.get(v.0).and_then(|g| g.as_ref())
    }
}

const LN_EPS: f64 = 1e-5;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Row-wise softmax restricted to the entries where `mask` is true.
/// Masked entries come out as exactly zero.
pub fn softmax_rows(x: &Mat, mask: Option<&Array2<bool>>) -> Mat {
    let mut out = Mat::zeros(x.raw_dim());
    for (r, row) in x.outer_iter().enumerate() {
        let allowed = |c: usize| mask.map_or(true, |m| m[[r, c]]);
        let max = row
            .iter()
            .enumerate()
            .filter(|(c, _)| allowed(*c))
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (c, v) in row.iter().enumerate() {
            if allowed(c) {
                let e = (v - max).exp();
                out[[r, c]] = e;
                total += e;
            }
        }
        out.row_mut(r).mapv_inplace(|e| e / total);
    }
    out
}

fn log_softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op) -> Var {
        self.push_aux(value, op, None, None)
    }

    fn push_aux(&self, value: Mat, op: Op, aux: Option<Mat>, aux2: Option<Mat>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            aux,
            aux2,
        });
        Var(nodes.len() - 1)
    }

    fn map<R, F: Fn(&Mat) -> R>(&self, v: Var, f: F) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    pub fn value(&self, v: Var) -> Mat {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let nodes = self.nodes.borrow();
        let m = &nodes[v.0].value;
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.dim()
    }

    pub fn constant(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds a named parameter. Binding the same name twice returns the
    /// same node, so gradients from every use accumulate in one place.
    pub fn param(&self, name: &str, value: &Mat) -> Var {
        if let Some(v) = self.params.borrow().get(name) {
            return *v;
        }
        let v = self.push(value.clone(), Op::Leaf);
        self.params.borrow_mut().insert(name.to_string(), v);
        v
    }

    pub fn bound_params(&self) -> BTreeMap<String, Var> {
        self.params.borrow().clone()
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(x.ncols(), y.nrows(), "matmul {:?} x {:?}", x.dim(), y.dim());
            x.dot(y)
        };
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(x.dim(), y.dim(), "add");
            x + y
        };
        self.push(value, Op::Add(a, b))
    }

    /// Adds a 1×c row vector to every row of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[row.0].value);
            assert_eq!(y.nrows(), 1, "add_row expects a single row");
            assert_eq!(x.ncols(), y.ncols(), "add_row");
            x + y
        };
        self.push(value, Op::AddRow(a, row))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(x.dim(), y.dim(), "sub");
            x - y
        };
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(x.dim(), y.dim(), "mul");
            x * y
        };
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&self, a: Var, k: f64) -> Var {
        let value = self.map(a, |x| x * k);
        self.push(value, Op::Scale(a, k))
    }

    pub fn add_scalar(&self, a: Var, k: f64) -> Var {
        let value = self.map(a, |x| x + k);
        self.push(value, Op::AddScalar(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.mapv(sigmoid));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.mapv(f64::tanh));
        self.push(value, Op::Tanh(a))
    }

    pub fn gelu(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.mapv(gelu));
        self.push(value, Op::Gelu(a))
    }

    pub fn elu(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.mapv(|v| if v > 0.0 { v } else { v.exp_m1() }));
        self.push(value, Op::Elu(a))
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Var {
        let value = self.map(a, |x| x.mapv(|v| if v > 0.0 { v } else { slope * v }));
        self.push(value, Op::LeakyRelu(a, slope))
    }

    pub fn exp(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.mapv(f64::exp));
        self.push(value, Op::Exp(a))
    }

    pub fn log(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.mapv(f64::ln));
        self.push(value, Op::Log(a))
    }

    pub fn softmax_rows(&self, a: Var) -> Var {
        let value = self.map(a, |x| softmax_rows(x, None));
        self.push(value, Op::Softmax(a))
    }

    /// Softmax over the entries of each row where `mask` is true. Every row
    /// must keep at least one entry.
    pub fn masked_softmax_rows(&self, a: Var, mask: &Array2<bool>) -> Var {
        let value = self.map(a, |x| {
            assert_eq!(x.dim(), mask.dim(), "mask shape");
            softmax_rows(x, Some(mask))
        });
        self.push(value, Op::Softmax(a))
    }

    pub fn log_softmax_rows(&self, a: Var) -> Var {
        let value = self.map(a, log_softmax_rows);
        self.push(value, Op::LogSoftmax(a))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let views: Vec<_> = parts.iter().map(|v| nodes[v.0].value.view()).collect();
            concatenate(Axis(1), &views).expect("concat_cols row counts differ")
        };
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let views: Vec<_> = parts.iter().map(|v| nodes[v.0].value.view()).collect();
            concatenate(Axis(0), &views).expect("concat_rows column counts differ")
        };
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&self, a: Var, start: usize, len: usize) -> Var {
        let value = self.map(a, |x| x.slice(s![start..start + len, ..]).to_owned());
        self.push(value, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Var {
        let value = self.map(a, |x| x.slice(s![.., start..start + len]).to_owned());
        self.push(value, Op::SliceCols(a, start))
    }

    pub fn row(&self, a: Var, r: usize) -> Var {
        self.slice_rows(a, r, 1)
    }

    /// Stacks `n` copies of a 1×c row.
    pub fn repeat_rows(&self, a: Var, n: usize) -> Var {
        let value = self.map(a, |x| {
            assert_eq!(x.nrows(), 1, "repeat_rows expects a single row");
            x.broadcast((n, x.ncols())).unwrap().to_owned()
        });
        self.push(value, Op::RepeatRows(a))
    }

    /// Places `n` copies of an r×1 column side by side.
    pub fn repeat_cols(&self, a: Var, n: usize) -> Var {
        let value = self.map(a, |x| {
            assert_eq!(x.ncols(), 1, "repeat_cols expects a single column");
            x.broadcast((x.nrows(), n)).unwrap().to_owned()
        });
        self.push(value, Op::RepeatCols(a))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.t().to_owned());
        self.push(value, Op::Transpose(a))
    }

    pub fn sum(&self, a: Var) -> Var {
        let value = self.map(a, |x| Mat::from_elem((1, 1), x.sum()));
        self.push(value, Op::SumAll(a))
    }

    /// Column means: r×c → 1×c.
    pub fn mean_rows(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0)));
        self.push(value, Op::MeanRows(a))
    }

    /// Per-row sums: r×c → r×1.
    pub fn row_sums(&self, a: Var) -> Var {
        let value = self.map(a, |x| x.sum_axis(Axis(1)).insert_axis(Axis(1)));
        self.push(value, Op::RowSums(a))
    }

    /// Multiplies row `i` of `a` by `weights[i]` (weights is r×1).
    pub fn scale_rows(&self, a: Var, weights: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, w) = (&nodes[a.0].value, &nodes[weights.0].value);
            assert_eq!(w.dim(), (x.nrows(), 1), "scale_rows weights");
            x * w
        };
        self.push(value, Op::ScaleRows(a, weights))
    }

    /// Builds a `shape` matrix whose k-th entry (row-major) is the
    /// `indices[k]`-th entry (row-major) of `a`.
    pub fn gather(&self, a: Var, shape: (usize, usize), indices: Vec<usize>) -> Var {
        assert_eq!(shape.0 * shape.1, indices.len(), "gather shape");
        let value = self.map(a, |x| {
            let flat: Vec<f64> = x.iter().copied().collect();
            let data = indices.iter().map(|&i| flat[i]).collect();
            Mat::from_shape_vec(shape, data).unwrap()
        });
        self.push(value, Op::Gather(a, indices))
    }

    /// Picks entry `(r, cols[r])` from every row: r×c → r×1.
    pub fn pick(&self, a: Var, cols: &[usize]) -> Var {
        let (rows, width) = self.shape(a);
        assert_eq!(rows, cols.len(), "pick");
        let idx = cols.iter().enumerate().map(|(r, c)| r * width + c).collect();
        self.gather(a, (rows, 1), idx)
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&self, a: Var) -> Var {
        let (normed, inv_std) = self.map(a, |x| {
            let n = x.ncols() as f64;
            let mut out = x.clone();
            let mut inv = Mat::zeros((x.nrows(), 1));
            for (r, mut row) in out.outer_iter_mut().enumerate() {
                let mean = row.sum() / n;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let is = 1.0 / (var + LN_EPS).sqrt();
                inv[[r, 0]] = is;
                row.mapv_inplace(|v| (v - mean) * is);
            }
            (out, inv)
        });
        self.push_aux(normed, Op::LayerNorm(a), Some(inv_std), None)
    }

    /// Sum over entries of the positive-class-weighted binary cross-entropy
    /// computed from logits: `-(w·y·ln σ(z) + (1−y)·ln(1−σ(z)))`.
    pub fn weighted_bce_sum(&self, logits: Var, targets: &Mat, pos_weight: &Mat) -> Var {
        let value = self.map(logits, |z| {
            assert_eq!(z.dim(), targets.dim(), "bce targets");
            assert_eq!(z.dim(), pos_weight.dim(), "bce weights");
            let mut total = 0.0;
            for ((zv, y), w) in z.iter().zip(targets.iter()).zip(pos_weight.iter()) {
                total += w * y * softplus(-zv) + (1.0 - y) * softplus(*zv);
            }
            Mat::from_elem((1, 1), total)
        });
        self.push_aux(
            value,
            Op::WeightedBce(logits),
            Some(targets.clone()),
            Some(pos_weight.clone()),
        )
    }

    /// Reverse sweep from a 1×1 output.
    pub fn backward(&self, output: Var) -> Grads {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.0].value.dim(), (1, 1), "backward from non-scalar");
        let mut adj: Vec<Option<Mat>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Mat::ones((1, 1)));

        fn acc(adj: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut adj[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(&mut adj, *a, g.dot(&val(*b).t()));
                    acc(&mut adj, *b, val(*a).t().dot(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g.clone());
                }
                Op::AddRow(a, b) => {
                    acc(&mut adj, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut adj, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, -&g);
                    acc(&mut adj, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    acc(&mut adj, *a, &g * val(*b));
                    acc(&mut adj, *b, &g * val(*a));
                }
                Op::Scale(a, k) => acc(&mut adj, *a, &g * *k),
                Op::AddScalar(a) => acc(&mut adj, *a, g.clone()),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut adj, *a, &g * &y.mapv(|s| s * (1.0 - s)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut adj, *a, &g * &y.mapv(|t| 1.0 - t * t));
                }
                Op::Gelu(a) => acc(&mut adj, *a, &g * &val(*a).mapv(gelu_grad)),
                Op::Elu(a) => {
                    let d = val(*a).mapv(|x| if x > 0.0 { 1.0 } else { x.exp() });
                    acc(&mut adj, *a, &g * &d);
                }
                Op::LeakyRelu(a, slope) => {
                    let d = val(*a).mapv(|x| if x > 0.0 { 1.0 } else { *slope });
                    acc(&mut adj, *a, &g * &d);
                }
                Op::Exp(a) => acc(&mut adj, *a, &g * &node.value),
                Op::Log(a) => acc(&mut adj, *a, &g / val(*a)),
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy = &g * y;
                    let dots = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut adj, *a, &gy - &(y * &dots));
                }
                Op::LogSoftmax(a) => {
                    let p = node.value.mapv(f64::exp);
                    let sums = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut adj, *a, &g - &(&p * &sums));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = val(*p).ncols();
                        acc(&mut adj, *p, g.slice(s![.., offset..offset + w]).to_owned());
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let h = val(*p).nrows();
                        acc(&mut adj, *p, g.slice(s![offset..offset + h, ..]).to_owned());
                        offset += h;
                    }
                }
                Op::SliceRows(a, start) => {
                    let mut full = Mat::zeros(val(*a).raw_dim());
                    full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut adj, *a, full);
                }
                Op::SliceCols(a, start) => {
                    let mut full = Mat::zeros(val(*a).raw_dim());
                    full.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut adj, *a, full);
                }
                Op::RepeatRows(a) => acc(&mut adj, *a, g.sum_axis(Axis(0)).insert_axis(Axis(0))),
                Op::RepeatCols(a) => acc(&mut adj, *a, g.sum_axis(Axis(1)).insert_axis(Axis(1))),
                Op::Transpose(a) => acc(&mut adj, *a, g.t().to_owned()),
                Op::SumAll(a) => {
                    let d = val(*a).raw_dim();
                    acc(&mut adj, *a, Mat::from_elem(d, g[[0, 0]]));
                }
                Op::MeanRows(a) => {
                    let x = val(*a);
                    let n = x.nrows() as f64;
                    let full = g.broadcast(x.raw_dim()).unwrap().mapv(|v| v / n);
                    acc(&mut adj, *a, full);
                }
                Op::RowSums(a) => {
                    let x = val(*a);
                    acc(&mut adj, *a, g.broadcast(x.raw_dim()).unwrap().to_owned());
                }
                Op::ScaleRows(a, w) => {
                    acc(&mut adj, *a, &g * val(*w));
                    let gw = (&g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut adj, *w, gw);
                }
                Op::Gather(a, indices) => {
                    let x = val(*a);
                    let mut flat = vec![0.0; x.len()];
                    for (gv, &idx) in g.iter().zip(indices) {
                        flat[idx] += gv;
                    }
                    acc(&mut adj, *a, Mat::from_shape_vec(x.raw_dim(), flat).unwrap());
                }
                Op::LayerNorm(a) => {
                    let y = &node.value;
                    let inv = node.aux.as_ref().unwrap();
                    let n = y.ncols() as f64;
                    let mean_g = g.sum_axis(Axis(1)).insert_axis(Axis(1)) / n;
                    let mean_gy = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1)) / n;
                    let dx = &(&(&g - &mean_g) - &(y * &mean_gy)) * inv;
                    acc(&mut adj, *a, dx);
                }
                Op::WeightedBce(z) => {
                    let t = node.aux.as_ref().unwrap();
                    let w = node.aux2.as_ref().unwrap();
                    let scale = g[[0, 0]];
                    let mut d = Mat::zeros(val(*z).raw_dim());
                    for (((dv, zv), y), wv) in
                        d.iter_mut().zip(val(*z).iter()).zip(t.iter()).zip(w.iter())
                    {
                        let p = sigmoid(*zv);
                        *dv = scale * (-wv * y * (1.0 - p) + (1.0 - y) * p);
                    }
                    acc(&mut adj, *z, d);
                }
            }
        }
        Grads { adjoints: adj }
    }

    /// Gradients of every bound parameter, keyed by name. Parameters the
    /// output does not depend on get a zero gradient.
    pub fn param_grads(&self, grads: &Grads) -> BTreeMap<String, Mat> {
        let nodes = self.nodes.borrow();
        self.params
            .borrow()
            .iter()
            .map(|(name, v)| {
                let g = grads
                    .get(*v)
                    .cloned()
                    .unwrap_or_else(|| Mat::zeros(nodes[v.0].value.raw_dim()));
                (name.clone(), g)
            })
            .collect()
    }
}

/// Named learnable matrices, kept in sorted order for reproducible
/// serialization and update order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: BTreeMap<String, Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> &Mat {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Mat> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|m| m.len()).sum()
    }

    /// Binds `name` on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &Tape, name: &str) -> Var {
        tape.param(name, self.get(name))
    }

    pub fn merge(&mut self, other: ParamStore) {
        self.entries.extend(other.entries);
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(|m| m.iter().all(|v| v.is_finite()))
    }
}
