use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::made::{input_degrees, made_network, Ordering};
use crate::error::{Error, Result};
use crate::generative::LN_2PI;
use crate::nn::{Activation, Mat, Mlp, Model, Tape, Var};
use crate::rng;

/// Added to batch variances before the square root.
pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FlowKind {
    RealNvp { tanh_scaling: bool },
    Maf { ordering: Ordering },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub n_flows: usize,
    pub hidden_dim: usize,
    /// Dense layers per conditioner network.
    pub n_layers: usize,
    pub activation: Activation,
    pub batch_norm: bool,
    /// Zero the last conditioner layers so every transform starts as a
    /// fixed linear map.
    pub init_identity: bool,
}

/// Batch norm uses batch statistics while training and the frozen
/// full-training-set statistics otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `s -> offset + exp(log_scale) * tanh(s)` with learnable scalars.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TanhScale {
    pub offset: Mat,
    pub log_scale: Mat,
}

/// Affine coupling: the first `split` coordinates pass unchanged and
/// condition a scale `s` and location `t` for the rest, which map to
/// `exp(-s/2) * (t - x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Coupling {
    pub split: usize,
    pub scale: Mlp,
    pub shift: Mlp,
    pub tanh: Option<TanhScale>,
}

/// Masked autoregressive transform `z_i = exp(-s_i/2) * (t_i - x_i)` where
/// `s_i, t_i` only see coordinates of lower degree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Autoregressive {
    pub degrees: Vec<usize>,
    pub scale: Mlp,
    pub shift: Mlp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchNorm {
    pub log_gamma: Mat,
    pub beta: Mat,
    /// Frozen statistics used outside training.
    pub mean: Mat,
    pub var: Mat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum FlowLayer {
    Coupling(Coupling),
    Autoregressive(Autoregressive),
    BatchNorm(BatchNorm),
    /// Reverses the coordinate order.
    Reverse,
}

/// A stack of invertible layers mapping data to a standard normal base.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowStack {
    pub dim: usize,
    pub spec: FlowSpec,
    pub layers: Vec<FlowLayer>,
}

fn conditioner(input: usize, output: usize, spec: &FlowSpec, seed: u64) -> Mlp {
    let mut net = Mlp::with_depth(input, spec.hidden_dim, output, spec.n_layers, spec.activation, seed);
    if spec.init_identity {
        net.zero_last_layer();
    }
    net
}

impl FlowLayer {
    fn tensors(&self) -> Vec<&Mat> {
        match self {
            FlowLayer::Coupling(c) => {
                let mut p = c.scale.parameters();
                p.extend(c.shift.parameters());
                if let Some(ts) = &c.tanh {
                    p.extend([&ts.offset, &ts.log_scale]);
                }
                p
            }
            FlowLayer::Autoregressive(a) => {
                let mut p = a.scale.parameters();
                p.extend(a.shift.parameters());
                p
            }
            FlowLayer::BatchNorm(b) => vec![&b.log_gamma, &b.beta],
            FlowLayer::Reverse => Vec::new(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        match self {
            FlowLayer::Coupling(c) => {
                let mut p = c.scale.parameters_mut();
                p.extend(c.shift.parameters_mut());
                if let Some(ts) = &mut c.tanh {
                    p.extend([&mut ts.offset, &mut ts.log_scale]);
                }
                p
            }
            FlowLayer::Autoregressive(a) => {
                let mut p = a.scale.parameters_mut();
                p.extend(a.shift.parameters_mut());
                p
            }
            FlowLayer::BatchNorm(b) => vec![&mut b.log_gamma, &mut b.beta],
            FlowLayer::Reverse => Vec::new(),
        }
    }

    /// Data-to-base direction; returns the output and the per-row log
    /// determinant (`n x 1`, or `1 x 1` when it is the same for all rows).
    fn forward(&self, t: &mut Tape, params: &[Var], x: Var, mode: Mode) -> (Var, Var) {
        match self {
            FlowLayer::Coupling(c) => {
                let dim = t.shape(x).1;
                let ns = c.scale.n_tensors();
                let nt = c.shift.n_tensors();
                let x1 = t.slice_cols(x, 0, c.split);
                let x2 = t.slice_cols(x, c.split, dim);
                let mut sc = c.scale.forward(t, &params[..ns], x1);
                if c.tanh.is_some() {
                    let (off, ls) = (params[ns + nt], params[ns + nt + 1]);
                    let th = t.tanh(sc);
                    let e = t.exp(ls);
                    let th = t.mul(th, e);
                    sc = t.add(th, off);
                }
                let loc = c.shift.forward(t, &params[ns..ns + nt], x1);
                let z2 = affine(t, sc, loc, x2);
                let z = t.concat_cols(&[x1, z2]);
                let ld = t.sum_rows(sc);
                (z, t.scale(ld, -0.5))
            }
            FlowLayer::Autoregressive(a) => {
                let ns = a.scale.n_tensors();
                let sc = a.scale.forward(t, &params[..ns], x);
                let loc = a.shift.forward(t, &params[ns..], x);
                let z = affine(t, sc, loc, x);
                let ld = t.sum_rows(sc);
                (z, t.scale(ld, -0.5))
            }
            FlowLayer::BatchNorm(b) => {
                let (lg, beta) = (params[0], params[1]);
                let (centered, var) = match mode {
                    Mode::Train => {
                        let n = t.shape(x).0 as f64;
                        let sum = t.sum_cols(x);
                        let mean = t.scale(sum, 1.0 / n);
                        let centered = t.sub(x, mean);
                        let sq = t.square(centered);
                        let sq = t.sum_cols(sq);
                        (centered, t.scale(sq, 1.0 / n))
                    }
                    Mode::Eval => {
                        let mean = t.constant(b.mean.clone());
                        (t.sub(x, mean), t.constant(b.var.clone()))
                    }
                };
                let var = t.offset(var, BATCH_NORM_EPS);
                let sd = t.powf(var, 0.5);
                let h = t.div(centered, sd);
                let g = t.exp(lg);
                let h = t.mul(h, g);
                let z = t.add(h, beta);
                let lv = t.log(var);
                let lv = t.scale(lv, 0.5);
                let ld = t.sub(lg, lv);
                (z, t.sum(ld))
            }
            FlowLayer::Reverse => {
                let d = t.shape(x).1;
                let perm = t.constant(Array2::from_shape_fn((d, d), |(i, j)| f64::from(u8::from(i + j + 1 == d))));
                let z = t.matmul(x, perm);
                (z, t.scalar_constant(0.0))
            }
        }
    }

    /// Base-to-data direction with frozen statistics.
    fn inverse(&self, z: &Mat) -> Mat {
        match self {
            FlowLayer::Coupling(c) => {
                let z1 = z.slice(s![.., ..c.split]).to_owned();
                let z2 = z.slice(s![.., c.split..]);
                let sc = c.effective_scale(&z1);
                let loc = c.shift.eval(&z1);
                let x2 = &loc - &(sc.mapv(|v| (0.5 * v).exp()) * z2);
                ndarray::concatenate(Axis(1), &[z1.view(), x2.view()]).unwrap()
            }
            FlowLayer::Autoregressive(a) => {
                let mut x = Mat::zeros(z.raw_dim());
                // one pass per degree; coordinate i only needs lower degrees
                let mut order: Vec<usize> = (0..a.degrees.len()).collect();
                order.sort_by_key(|&i| a.degrees[i]);
                for i in order {
                    let sc = a.scale.eval(&x);
                    let loc = a.shift.eval(&x);
                    for r in 0..x.nrows() {
                        x[[r, i]] = loc[[r, i]] - (0.5 * sc[[r, i]]).exp() * z[[r, i]];
                    }
                }
                x
            }
            FlowLayer::BatchNorm(b) => {
                let sd = b.var.mapv(|v| (v + BATCH_NORM_EPS).sqrt());
                let inv_g = b.log_gamma.mapv(|v| (-v).exp());
                (z - &b.beta) * &inv_g * &sd + &b.mean
            }
            FlowLayer::Reverse => z.slice(s![.., ..;-1]).to_owned(),
        }
    }
}

impl Coupling {
    fn effective_scale(&self, x1: &Mat) -> Mat {
        let sc = self.scale.eval(x1);
        match &self.tanh {
            Some(ts) => sc.mapv(|v| ts.offset[[0, 0]] + ts.log_scale[[0, 0]].exp() * v.tanh()),
            None => sc,
        }
    }
}

/// `exp(-s/2) * (t - x)`.
fn affine(t: &mut Tape, sc: Var, loc: Var, x: Var) -> Var {
    let h = t.scale(sc, -0.5);
    let e = t.exp(h);
    let d = t.sub(loc, x);
    t.mul(e, d)
}

impl FlowStack {
    pub fn new(dim: usize, spec: &FlowSpec, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("flows need at least two input dimensions"));
        }
        if spec.n_flows == 0 || spec.hidden_dim == 0 || spec.n_layers == 0 {
            return Err(Error::invalid("flow sizes must be positive"));
        }
        let mut layers = Vec::new();
        for i in 0..spec.n_flows {
            let s_seed = rng::derive_seed(seed, 2 * i as u64);
            let t_seed = rng::derive_seed(seed, 2 * i as u64 + 1);
            match spec.kind {
                FlowKind::RealNvp { tanh_scaling } => {
                    let split = dim / 2;
                    layers.push(FlowLayer::Coupling(Coupling {
                        split,
                        scale: conditioner(split, dim - split, spec, s_seed),
                        shift: conditioner(split, dim - split, spec, t_seed),
                        tanh: tanh_scaling.then(|| TanhScale {
                            offset: Mat::zeros((1, 1)),
                            log_scale: Mat::zeros((1, 1)),
                        }),
                    }));
                }
                FlowKind::Maf { ordering } => {
                    let degrees = input_degrees(dim, ordering, i, rng::derive_seed(seed, u64::MAX));
                    let mut scale = made_network(&degrees, spec.hidden_dim, spec.n_layers, spec.activation, s_seed)?;
                    let mut shift = made_network(&degrees, spec.hidden_dim, spec.n_layers, spec.activation, t_seed)?;
                    if spec.init_identity {
                        scale.zero_last_layer();
                        shift.zero_last_layer();
                    }
                    layers.push(FlowLayer::Autoregressive(Autoregressive { degrees, scale, shift }));
                }
            }
            if spec.batch_norm {
                layers.push(FlowLayer::BatchNorm(BatchNorm {
                    log_gamma: Mat::zeros((1, dim)),
                    beta: Mat::zeros((1, dim)),
                    mean: Mat::zeros((1, dim)),
                    var: Mat::ones((1, dim)),
                }));
            }
            if matches!(spec.kind, FlowKind::RealNvp { .. }) && i + 1 < spec.n_flows {
                layers.push(FlowLayer::Reverse);
            }
        }
        Ok(FlowStack { dim, spec: *spec, layers })
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, FlowLayer::BatchNorm(_)))
    }

    /// Maps `x` to the base space; returns `z` and the accumulated log
    /// determinant as an `n x 1` node.
    pub fn forward(&self, t: &mut Tape, params: &[Var], x: Var, mode: Mode) -> (Var, Var) {
        let n = t.shape(x).0;
        let mut h = x;
        let mut ld = t.constant(Mat::zeros((n, 1)));
        let mut cursor = 0;
        for layer in &self.layers {
            let k = layer.tensors().len();
            let (z, l) = layer.forward(t, &params[cursor..cursor + k], h, mode);
            cursor += k;
            h = z;
            ld = t.add(ld, l);
        }
        (h, ld)
    }

    /// Per-row log density on the tape.
    pub fn log_density_tape(&self, t: &mut Tape, params: &[Var], x: Var, mode: Mode) -> Var {
        let (z, ld) = self.forward(t, params, x, mode);
        let sq = t.square(z);
        let sq = t.sum_rows(sq);
        let base = t.scale(sq, -0.5);
        let base = t.offset(base, -0.5 * self.dim as f64 * LN_2PI);
        t.add(base, ld)
    }

    /// Base-space image and log determinant with frozen statistics.
    pub fn transform(&self, x: &Mat) -> (Mat, Vec<f64>) {
        let mut t = Tape::new();
        let params = t.bind_constants(self.parameters());
        let xv = t.constant(x.clone());
        let (z, ld) = self.forward(&mut t, &params, xv, Mode::Eval);
        (t.value(z).clone(), t.value(ld).column(0).to_vec())
    }

    /// Log density of every row (frozen statistics).
    pub fn log_density(&self, x: &Mat) -> Vec<f64> {
        flow_logpdf(self, x)
    }

    pub fn inverse(&self, z: &Mat) -> Mat {
        self.layers.iter().rev().fold(z.clone(), |h, l| l.inverse(&h))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Mat {
        let mut r = rng::seeded(seed);
        let z = Mat::from_shape_fn((n, self.dim), |_| rng::normal(&mut r));
        self.inverse(&z)
    }

    /// Re-estimates every batch-norm layer's frozen statistics from `train`
    /// propagated through the layers below it.
    pub fn refresh_batch_norm(&mut self, train: &Mat) {
        if !self.has_batch_norm() {
            return;
        }
        let mut h = train.clone();
        for layer in &mut self.layers {
            if let FlowLayer::BatchNorm(b) = layer {
                let mean = h.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
                let var = (&h - &mean).mapv(|v| v * v).mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
                b.mean = mean;
                b.var = var;
            }
            let mut t = Tape::new();
            let params = t.bind_constants(layer.tensors());
            let xv = t.constant(h);
            let (z, _) = layer.forward(&mut t, &params, xv, Mode::Eval);
            h = t.value(z).clone();
        }
    }
}

/// Log density of every row of `x` under the flow (frozen statistics).
pub fn flow_logpdf(flow: &FlowStack, x: &Mat) -> Vec<f64> {
    let mut t = Tape::new();
    let params = t.bind_constants(flow.parameters());
    let xv = t.constant(x.clone());
    let lp = flow.log_density_tape(&mut t, &params, xv, Mode::Eval);
    t.value(lp).column(0).to_vec()
}

impl Model for FlowStack {
    fn parameters(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(FlowLayer::tensors).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Mat> {
        self.layers.iter_mut().flat_map(FlowLayer::tensors_mut).collect()
    }
}
