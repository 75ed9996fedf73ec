//! Training and sampling steppers: SGD, SGD with momentum, SGLD, the
//! constrained overdamped Langevin step (circle and orthogonality
//! projections), and the split A/B/O constrained underdamped steps with a
//! splitting composer.
//!
//! One stepper covers each damping regime for every constraint family:
//! a layer's [`LayerConstraint`] decides whether it takes a plain
//! Euler--Maruyama update, a circle projection, or a quasi-Newton
//! orthogonality projection. An empty constraint set therefore reduces
//! bit-identically to the unconstrained method.
//!
//! Noise draw order is a contract: within each step, layers are visited
//! in order and draws happen as (weights, biases, slacks); a draw is
//! skipped entirely when its coefficient is exactly zero, so setting
//! `tau = 0` never advances the noise stream.

use crate::constraints::{
    circle_cotangent_project, circle_pair_a_step, circle_project_orthogonal,
    orth_cotangent_project, orth_cotangent_residual, orth_quasi_newton_project, orth_residual,
    slack_init,
};
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::nn::{Gradients, MlpModel};
use crate::rng::Rng;

/// Default quasi-Newton iteration cap for orthogonality projections.
pub const DEFAULT_NEWTON_CAP: usize = 5;
/// Default tolerance on the orthogonality residual.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-8;

/// Hyperparameters of one trajectory.
#[derive(Debug, Clone)]
pub struct Hyper {
    /// Step size h > 0.
    pub h: f64,
    /// Friction (underdamped methods).
    pub gamma: f64,
    /// Temperature; 0 switches every noise term off.
    pub tau: f64,
    /// Momentum factor (SGD-with-momentum baseline only).
    pub momentum: f64,
    /// Weight decay (SGD baselines only).
    pub weight_decay: f64,
    /// Letter sequence over {A, B, O} for underdamped methods.
    pub split: String,
}

impl Hyper {
    pub fn new(h: f64) -> Self {
        Hyper {
            h,
            gamma: 0.0,
            tau: 0.0,
            momentum: 0.0,
            weight_decay: 0.0,
            split: "ABO".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::InvalidArgument("step size h must be positive".into()));
        }
        if self.gamma < 0.0 || self.tau < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "gamma, tau and weight decay must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Constraint attached to one layer's weight matrix. Biases are never
/// constrained.
#[derive(Debug, Clone)]
pub enum LayerConstraint {
    Free,
    /// Per-parameter circle constraint |w_ij| <= r via slacks.
    Circle { r: f64 },
    /// Orthogonality of the (tall orientation of the) weight matrix.
    Orth { newton_cap: usize, tol: f64 },
}

/// Momenta mirroring the parameters: one matrix per weight (kept in the
/// weight orientation), one vector per bias, one matrix per circle slack.
#[derive(Debug, Clone)]
pub struct Momenta {
    pub w: Vec<Matrix>,
    pub b: Vec<Vec<f64>>,
    pub xi: Vec<Option<Matrix>>,
}

/// One training trajectory: the model, its constraint state, and
/// (for underdamped methods) the momenta.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub model: MlpModel,
    pub constraints: Vec<LayerConstraint>,
    /// Slack variables for circle layers, same shape as the weights.
    pub slack: Vec<Option<Matrix>>,
    pub momenta: Option<Momenta>,
    pub steps: u64,
}

fn orient(w: &Matrix) -> Matrix {
    if w.rows() >= w.cols() {
        w.clone()
    } else {
        w.transpose()
    }
}

fn unorient(q: Matrix, rows: usize, cols: usize) -> Matrix {
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

impl TrajectoryState {
    /// Make a model feasible and wrap it into a trajectory. Circle layers
    /// have their weights clamped into [-r, r] and slacks set to the
    /// positive root; orthogonality layers must already be on the
    /// manifold (use `nn::init_orthogonal`).
    pub fn new(model: MlpModel, constraints: Vec<LayerConstraint>) -> Result<Self> {
        if constraints.len() != model.layers.len() {
            return Err(Error::dim(
                "TrajectoryState::new",
                format!(
                    "{} constraints vs {} layers",
                    constraints.len(),
                    model.layers.len()
                ),
            ));
        }
        let mut model = model;
        let mut slack = Vec::with_capacity(constraints.len());
        for (layer, constraint) in model.layers.iter_mut().zip(&constraints) {
            match constraint {
                LayerConstraint::Free => slack.push(None),
                LayerConstraint::Circle { r } => {
                    if !(*r > 0.0) {
                        return Err(Error::InvalidArgument("circle radius must be positive".into()));
                    }
                    let (rows, cols) = (layer.w.rows(), layer.w.cols());
                    let radii = vec![*r; rows * cols];
                    let xi = slack_init(layer.w.data_mut(), &radii);
                    slack.push(Some(Matrix::from_vec(rows, cols, xi)?));
                }
                LayerConstraint::Orth { tol, .. } => {
                    let resid = orth_residual(&orient(&layer.w));
                    if resid > *tol {
                        return Err(Error::InvalidArgument(format!(
                            "orthogonality-constrained layer starts off-manifold (residual {resid:.3e}); \
                             apply an orthogonal initialization first"
                        )));
                    }
                    slack.push(None);
                }
            }
        }
        Ok(TrajectoryState {
            model,
            constraints,
            slack,
            momenta: None,
            steps: 0,
        })
    }

    pub fn unconstrained(model: MlpModel) -> Self {
        let n = model.layers.len();
        TrajectoryState::new(model, vec![LayerConstraint::Free; n].into_iter().map(|c| c).collect())
            .expect("free constraints are always valid")
    }

    /// Zero momenta (used by the OBA/SGD-momentum equivalence).
    pub fn init_momenta_zero(&mut self) {
        let w = self
            .model
            .layers
            .iter()
            .map(|l| Matrix::zeros(l.w.rows(), l.w.cols()))
            .collect();
        let b = self.model.layers.iter().map(|l| vec![0.0; l.b.len()]).collect();
        let xi = self
            .slack
            .iter()
            .map(|s| s.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols())))
            .collect();
        self.momenta = Some(Momenta { w, b, xi });
    }

    /// Momenta equal to the supplied gradients (slack momenta start at 0,
    /// since the loss has no slack dependence), then projected onto the
    /// cotangent space of each constrained layer.
    pub fn init_momenta_from_gradients(&mut self, grads: &Gradients) {
        self.init_momenta_zero();
        let momenta = self.momenta.as_mut().unwrap();
        for l in 0..self.model.layers.len() {
            momenta.w[l] = grads.d_w[l].clone();
            momenta.b[l] = grads.d_b[l].clone();
        }
        project_momenta(
            &self.model,
            &self.constraints,
            &self.slack,
            self.momenta.as_mut().unwrap(),
        );
    }

    /// Largest absolute constraint violation across all constrained
    /// layers (0 when nothing is constrained).
    pub fn max_constraint_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (l, constraint) in self.constraints.iter().enumerate() {
            match constraint {
                LayerConstraint::Free => {}
                LayerConstraint::Circle { r } => {
                    let w = &self.model.layers[l].w;
                    let xi = self.slack[l].as_ref().unwrap();
                    for (t, x) in w.data().iter().zip(xi.data()) {
                        worst = worst.max((t * t + x * x - r * r).abs());
                    }
                }
                LayerConstraint::Orth { .. } => {
                    worst = worst.max(orth_residual(&orient(&self.model.layers[l].w)));
                }
            }
        }
        worst
    }

    /// Circle residual scaled by r^2 (the invariant bound is 1e-9 r^2).
    pub fn max_circle_residual_scaled(&self) -> f64 {
        let mut worst = 0.0f64;
        for (l, constraint) in self.constraints.iter().enumerate() {
            if let LayerConstraint::Circle { r } = constraint {
                let w = &self.model.layers[l].w;
                let xi = self.slack[l].as_ref().unwrap();
                for (t, x) in w.data().iter().zip(xi.data()) {
                    worst = worst.max((t * t + x * x - r * r).abs() / (r * r));
                }
            }
        }
        worst
    }

    pub fn max_orth_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (l, constraint) in self.constraints.iter().enumerate() {
            if let LayerConstraint::Orth { .. } = constraint {
                worst = worst.max(orth_residual(&orient(&self.model.layers[l].w)));
            }
        }
        worst
    }

    /// Largest cotangency violation of the momenta (0 without momenta).
    pub fn max_cotangency_residual(&self) -> f64 {
        let Some(momenta) = &self.momenta else {
            return 0.0;
        };
        let mut worst = 0.0f64;
        for (l, constraint) in self.constraints.iter().enumerate() {
            match constraint {
                LayerConstraint::Free => {}
                LayerConstraint::Circle { .. } => {
                    let w = &self.model.layers[l].w;
                    let xi = self.slack[l].as_ref().unwrap();
                    let pw = &momenta.w[l];
                    let pxi = momenta.xi[l].as_ref().unwrap();
                    for i in 0..w.data().len() {
                        let dot =
                            w.data()[i] * pw.data()[i] + xi.data()[i] * pxi.data()[i];
                        worst = worst.max(dot.abs());
                    }
                }
                LayerConstraint::Orth { .. } => {
                    let q = orient(&self.model.layers[l].w);
                    let p = orient(&momenta.w[l]);
                    worst = worst.max(orth_cotangent_residual(&q, &p));
                }
            }
        }
        worst
    }
}

fn project_momenta(
    model: &MlpModel,
    constraints: &[LayerConstraint],
    slack: &[Option<Matrix>],
    momenta: &mut Momenta,
) {
    for (l, constraint) in constraints.iter().enumerate() {
        match constraint {
            LayerConstraint::Free => {}
            LayerConstraint::Circle { r } => {
                let w = &model.layers[l].w;
                let xi = slack[l].as_ref().unwrap();
                let pw = momenta.w[l].data_mut();
                let pxi = momenta.xi[l].as_mut().unwrap().data_mut();
                for i in 0..pw.len() {
                    let (pc, px) = circle_cotangent_project(
                        (w.data()[i], xi.data()[i]),
                        (pw[i], pxi[i]),
                        *r,
                    );
                    pw[i] = pc;
                    pxi[i] = px;
                }
            }
            LayerConstraint::Orth { .. } => {
                let (rows, cols) = (momenta.w[l].rows(), momenta.w[l].cols());
                let q = orient(&model.layers[l].w);
                let p = orient(&momenta.w[l]);
                momenta.w[l] = unorient(orth_cotangent_project(&q, &p), rows, cols);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Overdamped steppers
// ---------------------------------------------------------------------------

#[inline]
fn em_update(params: &mut [f64], grads: &[f64], h: f64, noise_coeff: f64, rng: &mut Rng) {
    if noise_coeff == 0.0 {
        for (p, g) in params.iter_mut().zip(grads) {
            *p -= h * g;
        }
    } else {
        for (p, g) in params.iter_mut().zip(grads) {
            *p = *p - h * g + noise_coeff * rng.standard_normal();
        }
    }
}

/// Plain SGD: theta <- theta - h (g + wd theta).
pub fn sgd_step(state: &mut TrajectoryState, grads: &Gradients, hyper: &Hyper) -> Result<()> {
    let wd = hyper.weight_decay;
    for (l, layer) in state.model.layers.iter_mut().enumerate() {
        if wd != 0.0 {
            for (w, g) in layer.w.data_mut().iter_mut().zip(grads.d_w[l].data()) {
                *w -= hyper.h * (g + wd * *w);
            }
            for (b, g) in layer.b.iter_mut().zip(&grads.d_b[l]) {
                *b -= hyper.h * (g + wd * *b);
            }
        } else {
            for (w, g) in layer.w.data_mut().iter_mut().zip(grads.d_w[l].data()) {
                *w -= hyper.h * g;
            }
            for (b, g) in layer.b.iter_mut().zip(&grads.d_b[l]) {
                *b -= hyper.h * g;
            }
        }
    }
    state.steps += 1;
    Ok(())
}

/// SGD with momentum in the standard PyTorch form:
/// buf <- mu buf + g, theta <- theta - h buf; the buffer starts equal to
/// the first gradient.
pub fn sgd_momentum_step(
    state: &mut TrajectoryState,
    grads: &Gradients,
    hyper: &Hyper,
) -> Result<()> {
    let wd = hyper.weight_decay;
    let mu = hyper.momentum;
    if state.momenta.is_none() {
        // First step: buffer = gradient (plus weight decay term).
        state.init_momenta_zero();
        let momenta = state.momenta.as_mut().unwrap();
        for l in 0..grads.d_w.len() {
            momenta.w[l] = grads.d_w[l].clone();
            momenta.b[l] = grads.d_b[l].clone();
            if wd != 0.0 {
                momenta.w[l].axpy(wd, &state.model.layers[l].w);
                for (m, b) in momenta.b[l].iter_mut().zip(&state.model.layers[l].b) {
                    *m += wd * b;
                }
            }
        }
    } else {
        let momenta = state.momenta.as_mut().unwrap();
        for l in 0..grads.d_w.len() {
            let buf = momenta.w[l].data_mut();
            for (i, (m, g)) in buf.iter_mut().zip(grads.d_w[l].data()).enumerate() {
                let g_eff = if wd != 0.0 {
                    g + wd * state.model.layers[l].w.data()[i]
                } else {
                    *g
                };
                *m = mu * *m + g_eff;
            }
            for (i, (m, g)) in momenta.b[l].iter_mut().zip(&grads.d_b[l]).enumerate() {
                let g_eff = if wd != 0.0 {
                    g + wd * state.model.layers[l].b[i]
                } else {
                    *g
                };
                *m = mu * *m + g_eff;
            }
        }
    }
    let momenta = state.momenta.as_ref().unwrap();
    for (l, layer) in state.model.layers.iter_mut().enumerate() {
        for (w, m) in layer.w.data_mut().iter_mut().zip(momenta.w[l].data()) {
            *w -= hyper.h * m;
        }
        for (b, m) in layer.b.iter_mut().zip(&momenta.b[l]) {
            *b -= hyper.h * m;
        }
    }
    state.steps += 1;
    Ok(())
}

/// SGLD: theta <- theta - h g + sqrt(2 tau h) R. With tau = 0 this is
/// bit-identical to `sgd_step` (no draws are made).
pub fn sgld_step(
    state: &mut TrajectoryState,
    grads: &Gradients,
    hyper: &Hyper,
    rng: &mut Rng,
) -> Result<()> {
    let c = if hyper.tau > 0.0 {
        (2.0 * hyper.tau * hyper.h).sqrt()
    } else {
        0.0
    };
    for (l, layer) in state.model.layers.iter_mut().enumerate() {
        em_update(layer.w.data_mut(), grads.d_w[l].data(), hyper.h, c, rng);
        em_update(&mut layer.b, &grads.d_b[l], hyper.h, c, rng);
    }
    state.steps += 1;
    Ok(())
}

/// Constrained overdamped Langevin step. Free layers take a plain
/// Euler--Maruyama update; circle layers take the EM step on
/// (theta, xi) followed by the orthogonal circle projection; orthogonality
/// layers take the EM step followed by the quasi-Newton projection.
/// Covers both the circle variant and the orthogonality variant of the
/// method; with no constrained layers it is bit-identical to `sgld_step`.
pub fn colod_step(
    state: &mut TrajectoryState,
    grads: &Gradients,
    hyper: &Hyper,
    rng: &mut Rng,
) -> Result<()> {
    let c = if hyper.tau > 0.0 {
        (2.0 * hyper.tau * hyper.h).sqrt()
    } else {
        0.0
    };
    for l in 0..state.model.layers.len() {
        match &state.constraints[l] {
            LayerConstraint::Free => {
                let layer = &mut state.model.layers[l];
                em_update(layer.w.data_mut(), grads.d_w[l].data(), hyper.h, c, rng);
                em_update(&mut layer.b, &grads.d_b[l], hyper.h, c, rng);
            }
            LayerConstraint::Circle { r } => {
                let noise_w = if c != 0.0 {
                    Some(rng.standard_normal_matrix(
                        state.model.layers[l].w.rows(),
                        state.model.layers[l].w.cols(),
                    ))
                } else {
                    None
                };
                let layer = &mut state.model.layers[l];
                em_update(&mut layer.b, &grads.d_b[l], hyper.h, c, rng);
                let noise_xi = if c != 0.0 {
                    Some(rng.standard_normal_matrix(layer.w.rows(), layer.w.cols()))
                } else {
                    None
                };
                let xi = state.slack[l].as_mut().unwrap().data_mut();
                let w = layer.w.data_mut();
                let g = grads.d_w[l].data();
                for i in 0..w.len() {
                    let mut t_bar = w[i] - hyper.h * g[i];
                    let mut x_bar = xi[i];
                    if let (Some(nw), Some(nx)) = (&noise_w, &noise_xi) {
                        t_bar += c * nw.data()[i];
                        x_bar += c * nx.data()[i];
                    }
                    let (t, x) = circle_project_orthogonal((t_bar, x_bar), *r);
                    w[i] = t;
                    xi[i] = x;
                }
            }
            LayerConstraint::Orth { newton_cap, tol } => {
                let (newton_cap, tol) = (*newton_cap, *tol);
                let layer = &state.model.layers[l];
                let (rows, cols) = (layer.w.rows(), layer.w.cols());
                let q_n = orient(&layer.w);
                let mut q_bar = q_n.clone();
                q_bar.axpy(-hyper.h, &orient(&grads.d_w[l]));
                if c != 0.0 {
                    let noise = rng.standard_normal_matrix(q_n.rows(), q_n.cols());
                    q_bar.axpy(c, &noise);
                }
                let q_new = orth_quasi_newton_project(&q_n, &q_bar, newton_cap, tol)?;
                state.model.layers[l].w = unorient(q_new, rows, cols);
                let layer = &mut state.model.layers[l];
                em_update(&mut layer.b, &grads.d_b[l], hyper.h, c, rng);
            }
        }
    }
    state.steps += 1;
    Ok(())
}

// ---------------------------------------------------------------------------
// Underdamped A / B / O component steps
// ---------------------------------------------------------------------------

fn require_momenta(state: &TrajectoryState) -> Result<()> {
    if state.momenta.is_none() {
        return Err(Error::InvalidArgument(
            "underdamped step requires initialized momenta".into(),
        ));
    }
    Ok(())
}

/// A component: geodesic drift. Free coordinates move by h p; circle
/// pairs rotate exactly; orthogonality layers take a RATTLE-style drift
/// with quasi-Newton position projection and momentum recovery.
pub fn colud_a_step(state: &mut TrajectoryState, hyper: &Hyper) -> Result<()> {
    require_momenta(state)?;
    let h = hyper.h;
    let momenta = state.momenta.as_mut().unwrap();
    for l in 0..state.model.layers.len() {
        match &state.constraints[l] {
            LayerConstraint::Free => {
                let layer = &mut state.model.layers[l];
                for (w, p) in layer.w.data_mut().iter_mut().zip(momenta.w[l].data()) {
                    *w += h * p;
                }
                for (b, p) in layer.b.iter_mut().zip(&momenta.b[l]) {
                    *b += h * p;
                }
            }
            LayerConstraint::Circle { r } => {
                let layer = &mut state.model.layers[l];
                for (b, p) in layer.b.iter_mut().zip(&momenta.b[l]) {
                    *b += h * p;
                }
                let w = layer.w.data_mut();
                let xi = state.slack[l].as_mut().unwrap().data_mut();
                let pw = momenta.w[l].data_mut();
                let pxi = momenta.xi[l].as_mut().unwrap().data_mut();
                for i in 0..w.len() {
                    circle_pair_a_step(&mut w[i], &mut xi[i], &mut pw[i], &mut pxi[i], *r, h);
                }
            }
            LayerConstraint::Orth { newton_cap, tol } => {
                let (newton_cap, tol) = (*newton_cap, *tol);
                let layer = &mut state.model.layers[l];
                let (rows, cols) = (layer.w.rows(), layer.w.cols());
                let q_n = orient(&layer.w);
                let p_n = orient(&momenta.w[l]);
                let mut q_bar = q_n.clone();
                q_bar.axpy(h, &p_n);
                let q_new = orth_quasi_newton_project(&q_n, &q_bar, newton_cap, tol)?;
                // Momentum recovery: p_bar = p + (Q_{n+1} - Q_bar)/h.
                let mut p_bar = p_n;
                let mut diff = q_new.clone();
                diff.axpy(-1.0, &q_bar);
                p_bar.axpy(1.0 / h, &diff);
                let p_new = orth_cotangent_project(&q_new, &p_bar);
                layer.w = unorient(q_new, rows, cols);
                momenta.w[l] = unorient(p_new, rows, cols);
                for (b, p) in layer.b.iter_mut().zip(&momenta.b[l]) {
                    *b += h * p;
                }
            }
        }
    }
    Ok(())
}

/// B component: gradient kick on the momenta (the loss has no slack
/// dependence), then cotangent projection on every constrained layer.
pub fn colud_b_step(
    state: &mut TrajectoryState,
    grads: &Gradients,
    hyper: &Hyper,
) -> Result<()> {
    require_momenta(state)?;
    let h = hyper.h;
    let momenta = state.momenta.as_mut().unwrap();
    for l in 0..state.model.layers.len() {
        for (p, g) in momenta.w[l].data_mut().iter_mut().zip(grads.d_w[l].data()) {
            *p -= h * g;
        }
        for (p, g) in momenta.b[l].iter_mut().zip(&grads.d_b[l]) {
            *p -= h * g;
        }
        // Slack momenta receive no gradient.
    }
    project_momenta(&state.model, &state.constraints, &state.slack, momenta);
    Ok(())
}

/// O component: exact Ornstein--Uhlenbeck flow on the momenta, then
/// cotangent projection on every constrained layer.
pub fn colud_o_step(state: &mut TrajectoryState, hyper: &Hyper, rng: &mut Rng) -> Result<()> {
    require_momenta(state)?;
    let decay = (-hyper.gamma * hyper.h).exp();
    let noise_coeff = if hyper.tau > 0.0 && hyper.gamma > 0.0 {
        (hyper.tau * (1.0 - (-2.0 * hyper.gamma * hyper.h).exp())).sqrt()
    } else {
        0.0
    };
    if decay == 1.0 && noise_coeff == 0.0 {
        // The flow is the identity; momenta are already cotangent.
        return Ok(());
    }
    let ou = |p: &mut [f64], rng: &mut Rng| {
        if noise_coeff == 0.0 {
            if decay != 1.0 {
                for v in p.iter_mut() {
                    *v *= decay;
                }
            }
        } else {
            for v in p.iter_mut() {
                *v = decay * *v + noise_coeff * rng.standard_normal();
            }
        }
    };
    let momenta = state.momenta.as_mut().unwrap();
    for l in 0..state.model.layers.len() {
        ou(momenta.w[l].data_mut(), rng);
        ou(&mut momenta.b[l], rng);
        if let Some(pxi) = momenta.xi[l].as_mut() {
            ou(pxi.data_mut(), rng);
        }
    }
    project_momenta(&state.model, &state.constraints, &state.slack, momenta);
    Ok(())
}

/// Apply a letter sequence over {A, B, O} left to right, each with step
/// size h. The gradient provider is invoked exactly once per B.
pub fn compose_split<F>(
    letters: &str,
    state: &mut TrajectoryState,
    grad_provider: &mut F,
    hyper: &Hyper,
    rng: &mut Rng,
) -> Result<()>
where
    F: FnMut(&TrajectoryState) -> Result<Gradients>,
{
    for letter in letters.chars() {
        match letter {
            'A' => colud_a_step(state, hyper)?,
            'B' => {
                let grads = grad_provider(state)?;
                colud_b_step(state, &grads, hyper)?;
            }
            'O' => colud_o_step(state, hyper, rng)?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown splitting letter '{other}' (expected A, B or O)"
                )))
            }
        }
    }
    state.steps += 1;
    Ok(())
}
