//! Reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse creation order, which is a reverse
//! topological order because operands always precede their results.
//! Binary element-wise operations broadcast `1 x m`, `n x 1` and `1 x 1`
//! operands the way ndarray does.

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Swish(usize),
    Square(usize),
    Powf(usize, f64),
    Clamp(usize, f64, f64),
    Sum(usize),
    SumRows(usize),
    SumCols(usize),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    LogSumExpRows(usize),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// Adjoint of `v`, zero when the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Mat {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Mat::zeros(self.shapes[v.0]))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sums `g` down to `shape` along broadcast axes.
fn reduce_to(g: Mat, shape: (usize, usize)) -> Mat {
    let mut g = g;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        assert!(x == y || x == 1 || y == 1, "incompatible shapes {a:?} and {b:?}");
        x.max(y)
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn unary(&mut self, a: Var, value: Mat, op: Op) -> Var {
        let g = self.needs(a);
        self.push(value, op, g)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, v: f64) -> Var {
        self.constant(Mat::from_elem((1, 1), v))
    }

    pub fn bind_params<'a>(&mut self, params: impl IntoIterator<Item = &'a Mat>) -> Vec<Var> {
        params.into_iter().map(|p| self.param(p.clone())).collect()
    }

    pub fn bind_constants<'a>(&mut self, params: impl IntoIterator<Item = &'a Mat>) -> Vec<Var> {
        params.into_iter().map(|p| self.constant(p.clone())).collect()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "not a scalar");
        m[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a.0, b.0), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.unary(a, v, Op::Transpose(a.0))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let shape = broadcast_shape(self.shape(a), self.shape(b));
        let va = self.value(a).broadcast(shape).unwrap();
        let vb = self.value(b).broadcast(shape).unwrap();
        let v = Zip::from(&va).and(&vb).map_collect(|&x, &y| f(x, y));
        let g = self.needs(a) || self.needs(b);
        self.push(v, op, g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a.0, b.0))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| -x);
        self.unary(a, v, Op::Neg(a.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| c * x);
        self.unary(a, v, Op::Scale(a.0, c))
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| x + c);
        self.unary(a, v, Op::Offset(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.unary(a, v, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.unary(a, v, Op::Log(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.unary(a, v, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.unary(a, v, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.unary(a, v, Op::Sigmoid(a.0))
    }

    /// `x * sigmoid(x)`.
    pub fn swish(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * sigmoid(x));
        self.unary(a, v, Op::Swish(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.unary(a, v, Op::Square(a.0))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let v = self.value(a).mapv(|x| x.powf(p));
        self.unary(a, v, Op::Powf(a.0, p))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.unary(a, v, Op::Clamp(a.0, lo, hi))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.unary(a, v, Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as an `n x 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.unary(a, v, Op::SumRows(a.0))
    }

    /// Column sums as a `1 x m` row.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.unary(a, v, Op::SumCols(a.0))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.unary(a, v, Op::SliceCols(a.0, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts differ");
        let g = parts.iter().any(|p| self.needs(*p));
        self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect()), g)
    }

    /// Row-wise `ln sum_j exp(a_ij)` as an `n x 1` column.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Mat::from_shape_fn((x.nrows(), 1), |(i, _)| {
            let row = x.row(i);
            let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            if m == f64::NEG_INFINITY {
                return m;
            }
            m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
        });
        self.unary(a, v, Op::LogSumExpRows(a.0))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        self.backward_from(output, Mat::ones((1, 1)))
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `output`).
    /// The tape is left untouched, so several sweeps may share it.
    pub fn backward_from(&self, output: Var, seed: Mat) -> Gradients {
        assert_eq!(seed.dim(), self.shape(output), "seed shape mismatch");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Mat>> = vec![None; n];
        grads[output.0] = Some(seed);
        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.dim()).collect(),
        }
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        let val = |i: usize| &self.nodes[i].value;
        let mut acc = |i: usize, d: Mat| {
            if !self.nodes[i].needs_grad {
                return;
            }
            let d = reduce_to(d, self.nodes[i].value.dim());
            match &mut grads[i] {
                Some(x) => *x += &d,
                slot => *slot = Some(d),
            }
        };
        let out = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a].needs_grad {
                    acc(a, g.dot(&val(b).t()));
                }
                if self.nodes[b].needs_grad {
                    acc(b, val(a).t().dot(g));
                }
            }
            Op::Transpose(a) => acc(a, g.t().to_owned()),
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, -g);
            }
            Op::Mul(a, b) => {
                if self.nodes[a].needs_grad {
                    acc(a, g * val(b));
                }
                if self.nodes[b].needs_grad {
                    acc(b, g * val(a));
                }
            }
            Op::Div(a, b) => {
                if self.nodes[a].needs_grad {
                    acc(a, g / val(b));
                }
                if self.nodes[b].needs_grad {
                    acc(b, -(g * out) / val(b));
                }
            }
            Op::Neg(a) => acc(a, -g),
            Op::Scale(a, c) => acc(a, g * c),
            Op::Offset(a) => acc(a, g.clone()),
            Op::Exp(a) => acc(a, g * out),
            Op::Log(a) => acc(a, g / val(a)),
            Op::Tanh(a) => acc(a, Zip::from(g).and(out).map_collect(|&g, &y| g * (1.0 - y * y))),
            Op::Relu(a) => acc(a, Zip::from(g).and(val(a)).map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 })),
            Op::Sigmoid(a) => acc(a, Zip::from(g).and(out).map_collect(|&g, &y| g * y * (1.0 - y))),
            Op::Swish(a) => acc(
                a,
                Zip::from(g).and(val(a)).map_collect(|&g, &x| {
                    let s = sigmoid(x);
                    g * s * (1.0 + x * (1.0 - s))
                }),
            ),
            Op::Square(a) => acc(a, Zip::from(g).and(val(a)).map_collect(|&g, &x| 2.0 * x * g)),
            Op::Powf(a, p) => acc(a, Zip::from(g).and(val(a)).map_collect(|&g, &x| g * p * x.powf(p - 1.0))),
            Op::Clamp(a, lo, hi) => acc(
                a,
                Zip::from(g)
                    .and(val(a))
                    .map_collect(|&g, &x| if x >= lo && x <= hi { g } else { 0.0 }),
            ),
            Op::Sum(a) => acc(a, Mat::from_elem(val(a).dim(), g[[0, 0]])),
            Op::SumRows(a) | Op::SumCols(a) => acc(a, g.broadcast(val(a).dim()).unwrap().to_owned()),
            Op::SliceCols(a, start) => {
                let mut d = Mat::zeros(val(a).dim());
                d.slice_mut(s![.., start..start + g.ncols()]).assign(g);
                acc(a, d);
            }
            Op::ConcatCols(ref parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = val(p).ncols();
                    acc(p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::LogSumExpRows(a) => {
                let x = val(a);
                let d = Mat::from_shape_fn(x.dim(), |(i, j)| {
                    if out[[i, 0]] == f64::NEG_INFINITY {
                        0.0
                    } else {
                        g[[i, 0]] * (x[[i, j]] - out[[i, 0]]).exp()
                    }
                });
                acc(a, d);
            }
        }
    }
}
