//! Minimal feedforward network: forward pass, loss, exact backpropagation,
//! input gradients, and the two weight initializations used by the
//! training methods.

use crate::error::{Error, Result};
use crate::mat::{matmul_nt, matmul_tn, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Identity,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if a > 0.0 {
                    a
                } else {
                    0.0
                }
            }
            Activation::Identity => a,
            Activation::Sigmoid => 1.0 / (1.0 + (-a).exp()),
        }
    }

    /// Derivative with respect to the pre-activation. The ReLU subgradient
    /// at 0 is taken as 0.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-a).exp());
                s * (1.0 - s)
            }
        }
    }
}

/// One parametrized layer: `z = phi(W z_prev + b)` with `W: d_out x d_in`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

impl MlpModel {
    /// Zero-initialized model; `dims = [d_in, d_1, ..., d_out]`.
    pub fn new(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "need one activation per layer: {} dims, {} activations",
                dims.len(),
                activations.len()
            )));
        }
        let layers = (0..dims.len() - 1)
            .map(|l| Layer {
                w: Matrix::zeros(dims[l + 1], dims[l]),
                b: vec![0.0; dims[l + 1]],
                activation: activations[l],
            })
            .collect();
        Ok(MlpModel { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows()
    }

    pub fn head_activation(&self) -> Activation {
        self.layers.last().unwrap().activation
    }
}

/// Targets for a batch: 0/1 labels for a sigmoid head, or class indices
/// for a softmax cross-entropy head.
#[derive(Debug, Clone)]
pub enum Labels {
    Binary(Vec<f64>),
    Class(Vec<usize>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Binary(v) => v.len(),
            Labels::Class(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Labels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bce,
    CrossEntropy,
}

/// Per-layer gradients, shapes mirroring the model exactly.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_w: Vec<Matrix>,
    pub d_b: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            d_w: model
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.w.rows(), l.w.cols()))
                .collect(),
            d_b: model.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }
}

fn affine(layer: &Layer, z: &Matrix) -> Result<Matrix> {
    // a = z W^T + b, one row per sample.
    let mut a = matmul_nt(z, &layer.w)?;
    for i in 0..a.rows() {
        let row = a.row_mut(i);
        for (v, b) in row.iter_mut().zip(&layer.b) {
            *v += b;
        }
    }
    Ok(a)
}

struct ForwardCache {
    /// Pre-activations a^l, one matrix per layer.
    pre: Vec<Matrix>,
    /// Post-activations z^0 (the inputs) .. z^L.
    post: Vec<Matrix>,
}

fn forward_cached(model: &MlpModel, inputs: &Matrix) -> Result<ForwardCache> {
    if inputs.cols() != model.input_dim() {
        return Err(Error::dim(
            "forward",
            format!("input dim {} vs model dim {}", inputs.cols(), model.input_dim()),
        ));
    }
    let mut pre = Vec::with_capacity(model.layers.len());
    let mut post = Vec::with_capacity(model.layers.len() + 1);
    post.push(inputs.clone());
    for layer in &model.layers {
        let a = affine(layer, post.last().unwrap())?;
        let z = a.map(|x| layer.activation.apply(x));
        pre.push(a);
        post.push(z);
    }
    Ok(ForwardCache { pre, post })
}

/// Predictions for a batch of inputs, one row per sample.
pub fn forward(model: &MlpModel, inputs: &Matrix) -> Result<Matrix> {
    if inputs.cols() != model.input_dim() {
        return Err(Error::dim(
            "forward",
            format!("input dim {} vs model dim {}", inputs.cols(), model.input_dim()),
        ));
    }
    let mut z = inputs.clone();
    for layer in &model.layers {
        let a = affine(layer, &z)?;
        z = a.map(|x| layer.activation.apply(x));
    }
    Ok(z)
}

const BCE_EPS: f64 = 1e-12;

fn check_head(model: &MlpModel, kind: LossKind) -> Result<()> {
    match kind {
        LossKind::Bce => {
            if model.output_dim() != 1 || model.head_activation() != Activation::Sigmoid {
                return Err(Error::InvalidArgument(
                    "BCE requires a 1-dimensional sigmoid head".into(),
                ));
            }
        }
        LossKind::CrossEntropy => {
            if model.head_activation() != Activation::Identity {
                return Err(Error::InvalidArgument(
                    "cross-entropy expects raw logits (identity head)".into(),
                ));
            }
        }
    }
    Ok(())
}

fn loss_from_predictions(predictions: &Matrix, labels: &Labels, kind: LossKind) -> Result<f64> {
    let n = predictions.rows();
    if labels.len() != n {
        return Err(Error::dim(
            "loss",
            format!("{} predictions vs {} labels", n, labels.len()),
        ));
    }
    match (kind, labels) {
        (LossKind::Bce, Labels::Binary(y)) => {
            let mut total = 0.0;
            for i in 0..n {
                let p = predictions.get(i, 0).clamp(BCE_EPS, 1.0 - BCE_EPS);
                total -= y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln();
            }
            Ok(total / n as f64)
        }
        (LossKind::CrossEntropy, Labels::Class(y)) => {
            let mut total = 0.0;
            for i in 0..n {
                let row = predictions.row(i);
                if y[i] >= row.len() {
                    return Err(Error::InvalidArgument(format!(
                        "class index {} out of range for {} outputs",
                        y[i],
                        row.len()
                    )));
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let log_z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                total -= row[y[i]] - log_z;
            }
            Ok(total / n as f64)
        }
        _ => Err(Error::InvalidArgument(
            "label kind does not match loss kind".into(),
        )),
    }
}

/// Mean loss of the model over a batch.
pub fn loss(model: &MlpModel, batch: &Batch, kind: LossKind) -> Result<f64> {
    check_head(model, kind)?;
    let predictions = forward(model, &batch.inputs)?;
    loss_from_predictions(&predictions, &batch.labels, kind)
}

/// Head-layer gradient dL/da^L for the fused loss+head pairs
/// (BCE with sigmoid, cross-entropy with softmax over logits).
fn head_gradient(pre: &Matrix, post: &Matrix, labels: &Labels, kind: LossKind) -> Result<Matrix> {
    let n = post.rows();
    let inv_n = 1.0 / n as f64;
    match (kind, labels) {
        (LossKind::Bce, Labels::Binary(y)) => {
            let mut d = Matrix::zeros(n, 1);
            for i in 0..n {
                d.set(i, 0, (post.get(i, 0) - y[i]) * inv_n);
            }
            Ok(d)
        }
        (LossKind::CrossEntropy, Labels::Class(y)) => {
            let mut d = Matrix::zeros(n, pre.cols());
            for i in 0..n {
                let row = pre.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
                for j in 0..row.len() {
                    let soft = (row[j] - max).exp() / z;
                    let target = if y[i] == j { 1.0 } else { 0.0 };
                    d.set(i, j, (soft - target) * inv_n);
                }
            }
            Ok(d)
        }
        _ => Err(Error::InvalidArgument(
            "label kind does not match loss kind".into(),
        )),
    }
}

/// Exact gradient of the mean loss over the batch.
pub fn backprop(model: &MlpModel, batch: &Batch, kind: LossKind) -> Result<(f64, Gradients)> {
    check_head(model, kind)?;
    let cache = forward_cached(model, &batch.inputs)?;
    let predictions = cache.post.last().unwrap();
    let loss = loss_from_predictions(predictions, &batch.labels, kind)?;

    let num_layers = model.layers.len();
    let mut d_w = vec![Matrix::zeros(0, 0); num_layers];
    let mut d_b = vec![Vec::new(); num_layers];

    // dL/da for the current layer, one row per sample.
    let mut d_a = head_gradient(&cache.pre[num_layers - 1], predictions, &batch.labels, kind)?;

    for l in (0..num_layers).rev() {
        let layer = &model.layers[l];
        // dW = dA^T z^{l-1}, db = column sums of dA.
        d_w[l] = matmul_tn(&d_a, &cache.post[l])?;
        let mut db = vec![0.0; layer.b.len()];
        for i in 0..d_a.rows() {
            for (acc, v) in db.iter_mut().zip(d_a.row(i)) {
                *acc += v;
            }
        }
        d_b[l] = db;

        if l > 0 {
            // dZ^{l-1} = dA W, then through the previous activation.
            let mut d_z = crate::mat::matmul(&d_a, &layer.w)?;
            let prev = &model.layers[l - 1];
            let a_prev = &cache.pre[l - 1];
            for (dz, a) in d_z.data_mut().iter_mut().zip(a_prev.data()) {
                *dz *= prev.activation.derivative(*a);
            }
            d_a = d_z;
        }
    }

    Ok((loss, Gradients { d_w, d_b }))
}

/// Gradient of the scalar prediction with respect to the input, via the
/// product-of-Jacobians structure of the network.
pub fn input_gradient(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>> {
    if model.output_dim() != 1 {
        return Err(Error::InvalidArgument(
            "input_gradient requires a scalar head".into(),
        ));
    }
    if x.len() != model.input_dim() {
        return Err(Error::dim(
            "input_gradient",
            format!("point dim {} vs model dim {}", x.len(), model.input_dim()),
        ));
    }
    let inputs = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let cache = forward_cached(model, &inputs)?;

    // Row vector v, propagated backwards: v <- (v .* phi'(a^l)) W^l.
    let mut v = vec![1.0f64];
    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let a = cache.pre[l].row(0);
        let scaled: Vec<f64> = v
            .iter()
            .zip(a)
            .map(|(vi, ai)| vi * layer.activation.derivative(*ai))
            .collect();
        let mut next = vec![0.0; layer.w.cols()];
        for (i, s) in scaled.iter().enumerate() {
            if *s == 0.0 {
                continue;
            }
            for (nj, wij) in next.iter_mut().zip(layer.w.row(i)) {
                *nj += s * wij;
            }
        }
        v = next;
    }
    Ok(v)
}

/// Uniform init in (-1/sqrt(N_in), 1/sqrt(N_in)) per layer, weights and
/// biases alike, where N_in is the number of inputs to the layer.
pub fn init_standard(rng: &mut Rng, model: &mut MlpModel) {
    for layer in &mut model.layers {
        let bound = 1.0 / (layer.w.cols() as f64).sqrt();
        for v in layer.w.data_mut() {
            *v = rng.uniform(-bound, bound);
        }
        for v in &mut layer.b {
            *v = rng.uniform(-bound, bound);
        }
    }
}

/// Replace the weights of the selected layers by (transposed-as-needed)
/// orthonormal matrices; biases and all other layers are left untouched.
///
/// Construction: standard normal draw, Householder QR, then each column of
/// Q is scaled by the sign of the corresponding diagonal entry of R to fix
/// the gauge.
pub fn init_orthogonal(rng: &mut Rng, model: &mut MlpModel, layer_set: &[usize]) -> Result<()> {
    for &l in layer_set {
        if l >= model.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "layer index {} out of range ({} layers)",
                l,
                model.layers.len()
            )));
        }
        let (rows, cols) = (model.layers[l].w.rows(), model.layers[l].w.cols());
        // Tall orientation: Q is r x s with r >= s and Q^T Q = I_s.
        let (r, s) = (rows.max(cols), rows.min(cols));
        let g = rng.standard_normal_matrix(r, s);
        let q = orthonormalize(&g);
        model.layers[l].w = if rows >= cols { q } else { q.transpose() };
    }
    Ok(())
}

/// Thin Householder QR of a tall matrix; returns Q (r x s, orthonormal
/// columns) with the sign gauge fixed by diag(R) > 0.
fn orthonormalize(a: &Matrix) -> Matrix {
    let (r, s) = (a.rows(), a.cols());
    assert!(r >= s, "orthonormalize expects a tall matrix");
    let mut m = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut diag_signs = Vec::with_capacity(s);

    for k in 0..s {
        // Householder vector for column k below the diagonal.
        let mut v: Vec<f64> = (k..r).map(|i| m.get(i, k)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            for x in &mut v {
                *x /= vnorm;
            }
            // Apply I - 2vv^T to the trailing block.
            for j in k..s {
                let mut proj = 0.0;
                for (i, vi) in v.iter().enumerate() {
                    proj += vi * m.get(k + i, j);
                }
                for (i, vi) in v.iter().enumerate() {
                    let cur = m.get(k + i, j);
                    m.set(k + i, j, cur - 2.0 * vi * proj);
                }
            }
        }
        diag_signs.push(if m.get(k, k) >= 0.0 { 1.0 } else { -1.0 });
        reflectors.push(v);
    }

    // Q = H_0 H_1 ... H_{s-1} applied to the thin identity.
    let mut q = Matrix::zeros(r, s);
    for k in 0..s {
        q.set(k, k, 1.0);
    }
    for k in (0..s).rev() {
        let v = &reflectors[k];
        for j in 0..s {
            let mut proj = 0.0;
            for (i, vi) in v.iter().enumerate() {
                proj += vi * q.get(k + i, j);
            }
            for (i, vi) in v.iter().enumerate() {
                let cur = q.get(k + i, j);
                q.set(k + i, j, cur - 2.0 * vi * proj);
            }
        }
    }
    for j in 0..s {
        if diag_signs[j] < 0.0 {
            for i in 0..r {
                let cur = q.get(i, j);
                q.set(i, j, -cur);
            }
        }
    }
    q
}
