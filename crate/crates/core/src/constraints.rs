//! Geometry of the constraint manifolds: residuals, position projections,
//! cotangent-space momentum projections, and the exact circle rotation
//! step, for circle, sphere, and orthogonality constraints.
//!
//! Circle constraints pair every constrained parameter `theta_i` with a
//! slack `xi_i` so that `theta_i^2 + xi_i^2 = r_i^2`; orthogonality
//! constraints act on the tall orientation `Q` (rows >= cols) of a layer
//! weight matrix with `Q^T Q = I`.

use crate::error::{Error, Result};
use crate::mat::{matmul, matmul_tn, Matrix};

// ---------------------------------------------------------------------------
// Circle constraints
// ---------------------------------------------------------------------------

/// A family of circle constraints: `theta_i^2 + xi_i^2 = r_i^2`.
#[derive(Debug, Clone)]
pub struct CircleGroup {
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub radii: Vec<f64>,
}

impl CircleGroup {
    /// Build a feasible group: clamps `|theta_i| <= r_i`, then sets the
    /// slack to the positive root.
    pub fn new(mut theta: Vec<f64>, radii: Vec<f64>) -> Result<Self> {
        if theta.len() != radii.len() {
            return Err(Error::dim(
                "CircleGroup::new",
                format!("{} parameters vs {} radii", theta.len(), radii.len()),
            ));
        }
        if radii.iter().any(|r| *r <= 0.0) {
            return Err(Error::InvalidArgument("radii must be positive".into()));
        }
        let xi = slack_init(&mut theta, &radii);
        Ok(CircleGroup { theta, xi, radii })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn residual(&self) -> Vec<f64> {
        circle_residual(&self.theta, &self.xi, &self.radii)
    }

    /// max_i |g_i| / r_i^2 (the on-manifold tolerance is relative to r^2).
    pub fn max_scaled_residual(&self) -> f64 {
        self.residual()
            .iter()
            .zip(&self.radii)
            .map(|(g, r)| g.abs() / (r * r))
            .fold(0.0, f64::max)
    }
}

/// g_i = theta_i^2 + xi_i^2 - r_i^2.
pub fn circle_residual(theta: &[f64], xi: &[f64], radii: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .zip(xi)
        .zip(radii)
        .map(|((t, x), r)| t * t + x * x - r * r)
        .collect()
}

/// Nearest point on the circle of radius `r` (full-quadrant projection);
/// the degenerate origin falls back to `(r, 0)`.
pub fn circle_project_orthogonal(point: (f64, f64), r: f64) -> (f64, f64) {
    let (t, x) = point;
    let norm = (t * t + x * x).sqrt();
    if norm == 0.0 {
        log::warn!("projecting the origin onto a circle: falling back to ({r}, 0)");
        return (r, 0.0);
    }
    (r * t / norm, r * x / norm)
}

/// Project `q_bar` onto the circle along the constraint gradient at the
/// previous on-manifold point `q_n`; of the two roots, the one closer to
/// `q_n` is selected. Returns the projected point and the multiplier.
pub fn circle_project_oblique(
    q_n: (f64, f64),
    q_bar: (f64, f64),
    r: f64,
) -> Result<((f64, f64), f64)> {
    let (tn, xn) = q_n;
    let (tb, xb) = q_bar;
    // q_bar - lambda * grad g(q_n) with grad g = 2(tn, xn); using
    // tn^2 + xn^2 = r^2 the multiplier solves
    //   4 r^2 lambda^2 - 4 lambda d + e = 0,
    // d = <q_bar, q_n>, e = |q_bar|^2 - r^2.
    let d = tb * tn + xb * xn;
    let e = tb * tb + xb * xb - r * r;
    let disc = d * d - r * r * e;
    if disc < 0.0 {
        return Err(Error::NoProjection);
    }
    let sq = disc.sqrt();
    let r2 = r * r;
    let candidates = [(d - sq) / (2.0 * r2), (d + sq) / (2.0 * r2)];
    let point = |lambda: f64| (tb - 2.0 * lambda * tn, xb - 2.0 * lambda * xn);
    let dist2 = |p: (f64, f64)| {
        let (a, b) = p;
        (a - tn) * (a - tn) + (b - xn) * (b - xn)
    };
    let lambda = if dist2(point(candidates[0])) <= dist2(point(candidates[1])) {
        candidates[0]
    } else {
        candidates[1]
    };
    Ok((point(lambda), lambda))
}

/// Project the momentum pair onto the cotangent space at `q`:
/// removes the component along (theta, xi).
#[inline]
pub fn circle_cotangent_project(q: (f64, f64), p_bar: (f64, f64), r: f64) -> (f64, f64) {
    let (t, x) = q;
    let (pc, px) = p_bar;
    let dot = (t * pc + x * px) / (r * r);
    (pc - t * dot, px - x * dot)
}

/// Exact solution of the constrained free flow on one circle: rotation by
/// angle `omega * h` with `omega = (xi p^c - theta p^xi) / r^2`. Updates
/// positions and momenta in place.
#[inline]
pub fn circle_pair_a_step(theta: &mut f64, xi: &mut f64, pc: &mut f64, pxi: &mut f64, r: f64, h: f64) {
    let omega = (*xi * *pc - *theta * *pxi) / (r * r);
    let (s, c) = (omega * h).sin_cos();
    let t_new = c * *theta + s * *xi;
    let x_new = -s * *theta + c * *xi;
    *pc = omega * x_new;
    *pxi = -omega * t_new;
    *theta = t_new;
    *xi = x_new;
}

/// A-step over a whole circle group (momenta move with the rotation;
/// cotangency is preserved exactly).
pub fn circle_a_step(group: &mut CircleGroup, p_c: &mut [f64], p_xi: &mut [f64], h: f64) {
    for i in 0..group.theta.len() {
        circle_pair_a_step(
            &mut group.theta[i],
            &mut group.xi[i],
            &mut p_c[i],
            &mut p_xi[i],
            group.radii[i],
            h,
        );
    }
}

/// Feasible slack for each parameter: clamps `|theta_i| <= r_i` in place,
/// then returns `xi_i = +sqrt(r_i^2 - theta_i^2)`.
pub fn slack_init(theta: &mut [f64], radii: &[f64]) -> Vec<f64> {
    theta
        .iter_mut()
        .zip(radii)
        .map(|(t, r)| {
            if t.abs() > *r {
                *t = t.signum() * r;
            }
            (r * r - *t * *t).max(0.0).sqrt()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sphere constraints
// ---------------------------------------------------------------------------

/// One sphere-constrained row: `|row|^2 + xi^2 = r^2`.
#[derive(Debug, Clone)]
pub struct SphereGroup {
    pub rows: Vec<(Vec<f64>, f64, f64)>,
}

impl SphereGroup {
    pub fn residual(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(row, xi, r)| row.iter().map(|v| v * v).sum::<f64>() + xi * xi - r * r)
            .collect()
    }
}

/// Radial rescale of the augmented vector `(row, xi)` onto the sphere of
/// radius `r`; the degenerate zero vector falls back to `(r e_1, 0)`.
pub fn sphere_project(row: &[f64], xi: f64, r: f64) -> (Vec<f64>, f64) {
    let norm = (row.iter().map(|v| v * v).sum::<f64>() + xi * xi).sqrt();
    if norm == 0.0 {
        log::warn!("projecting the zero vector onto a sphere: falling back to (r e1, 0)");
        let mut out = vec![0.0; row.len()];
        out[0] = r;
        return (out, 0.0);
    }
    let scale = r / norm;
    (row.iter().map(|v| v * scale).collect(), xi * scale)
}

// ---------------------------------------------------------------------------
// Orthogonality constraints
// ---------------------------------------------------------------------------

/// An orthogonality-constrained matrix in tall orientation, with the
/// quasi-Newton iteration cap and residual tolerance used to project back
/// onto the manifold. The constraint `Q^T Q = I_s` encodes s(s+1)/2
/// scalar constraints.
#[derive(Debug, Clone)]
pub struct OrthGroup {
    pub q: Matrix,
    pub newton_cap: usize,
    pub tol: f64,
}

impl OrthGroup {
    pub fn constraint_count(&self) -> usize {
        let s = self.q.cols();
        s * (s + 1) / 2
    }

    pub fn residual(&self) -> f64 {
        orth_residual(&self.q)
    }
}

/// ‖Q^T Q - I_s‖_F.
pub fn orth_residual(q: &Matrix) -> f64 {
    let mut g = matmul_tn(q, q).expect("square product");
    let s = g.cols();
    for i in 0..s {
        let v = g.get(i, i);
        g.set(i, i, v - 1.0);
    }
    g.frobenius_norm()
}

/// ‖P^T Q + Q^T P‖_F, the cotangency residual.
pub fn orth_cotangent_residual(q: &Matrix, p: &Matrix) -> f64 {
    let ptq = matmul_tn(p, q).expect("shape");
    let qtp = matmul_tn(q, p).expect("shape");
    let mut sum = ptq;
    sum.axpy(1.0, &qtp);
    sum.frobenius_norm()
}

/// Quasi-Newton projection onto the orthogonality manifold:
/// `Q^(k+1) = Q^(k) - 1/2 Q_n ((Q^(k))^T Q^(k) - I_s)`, stopping at the
/// first iterate whose constraint residual is within `tol`, or after
/// `k_cap` iterations. `k_cap = 0` returns `q0` unchanged.
///
/// Errors with `ProjectionDiverged` when the residual grows for three
/// consecutive iterations (the step that produced `q0` was too large).
pub fn orth_quasi_newton_project(
    q_n: &Matrix,
    q0: &Matrix,
    k_cap: usize,
    tol: f64,
) -> Result<Matrix> {
    let s = q0.cols();
    let mut q = q0.clone();
    let mut prev = f64::INFINITY;
    let mut increases = 0usize;
    for iter in 0..k_cap {
        let mut lambda = matmul_tn(&q, &q)?;
        for i in 0..s {
            let v = lambda.get(i, i);
            lambda.set(i, i, v - 1.0);
        }
        let residual = lambda.frobenius_norm();
        if residual <= tol {
            return Ok(q);
        }
        if residual >= prev {
            increases += 1;
            if increases >= 3 {
                return Err(Error::ProjectionDiverged { residual, iters: iter });
            }
        } else {
            increases = 0;
        }
        prev = residual;
        lambda.scale_in_place(0.5);
        let correction = matmul(q_n, &lambda)?;
        q.axpy(-1.0, &correction);
    }
    Ok(q)
}

/// Projection onto the cotangent space of the orthogonality manifold:
/// `P = P_bar - 1/2 Q (P_bar^T Q + Q^T P_bar)`.
pub fn orth_cotangent_project(q: &Matrix, p_bar: &Matrix) -> Matrix {
    let ptq = matmul_tn(p_bar, q).expect("shape");
    let qtp = matmul_tn(q, p_bar).expect("shape");
    let mut sym = ptq;
    sym.axpy(1.0, &qtp);
    sym.scale_in_place(0.5);
    let correction = matmul(q, &sym).expect("shape");
    let mut p = p_bar.clone();
    p.axpy(-1.0, &correction);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn circle_residual_cases() {
        let g = circle_residual(&[3.0, 1.0, 1.0], &[4.0, 0.0, 1.0], &[5.0, 1.0, 1.0]);
        assert_eq!(g, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn orthogonal_projection_cases() {
        assert_eq!(circle_project_orthogonal((2.0, 0.0), 1.0), (1.0, 0.0));
        let (t, x) = circle_project_orthogonal((1.0, 1.0), 2.0);
        let s = 2.0f64.sqrt();
        assert!((t - s).abs() < 1e-15 && (x - s).abs() < 1e-15);
        // Needs the full-quadrant angle: a plain arctan would flip the sign.
        let (t, x) = circle_project_orthogonal((-3.0, 4.0), 10.0);
        assert!((t - (-6.0)).abs() < 1e-14 && (x - 8.0).abs() < 1e-14);
        assert_eq!(circle_project_orthogonal((0.0, 0.0), 2.5), (2.5, 0.0));
    }

    #[test]
    fn orthogonal_projection_is_nearest_point() {
        // Brute force over 1e4 circle samples.
        let mut rng = Rng::from_seed_stream(3, 0);
        for _ in 0..20 {
            let p = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
            if p.0 == 0.0 && p.1 == 0.0 {
                continue;
            }
            let r = rng.uniform(0.1, 3.0);
            let proj = circle_project_orthogonal(p, r);
            let d2 = |a: (f64, f64), b: (f64, f64)| {
                (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
            };
            let dp = d2(proj, p);
            for k in 0..10_000 {
                let alpha = -std::f64::consts::PI
                    + 2.0 * std::f64::consts::PI * (k as f64) / 10_000.0;
                let cand = (r * alpha.cos(), r * alpha.sin());
                assert!(dp <= d2(cand, p) + 1e-12);
            }
        }
    }

    #[test]
    fn oblique_projection_cases() {
        // Already on the circle: lambda = 0.
        let ((t, x), lambda) = circle_project_oblique((1.0, 0.0), (1.0, 0.0), 1.0).unwrap();
        assert_eq!((t, x, lambda), (1.0, 0.0, 0.0));

        // Root selection: the quadratic (1.5 - 2 lambda)^2 = 1 has roots
        // 0.25 and 1.25; the nearer projection keeps lambda = 0.25.
        let ((t, x), lambda) = circle_project_oblique((1.0, 0.0), (1.5, 0.0), 1.0).unwrap();
        assert!((t - 1.0).abs() < 1e-15 && x.abs() < 1e-15);
        assert!((lambda - 0.25).abs() < 1e-15);

        // (0 - 2 lambda)^2 + 4 = 1 has no real root.
        assert!(matches!(
            circle_project_oblique((1.0, 0.0), (0.0, 2.0), 1.0),
            Err(Error::NoProjection)
        ));
    }

    #[test]
    fn cotangent_projection_cases() {
        let r = 2.0;
        // At (r, 0) the tangent direction is the xi axis.
        let (pc, px) = circle_cotangent_project((r, 0.0), (0.7, -1.3), r);
        assert!(pc.abs() < 1e-15);
        assert_eq!(px, -1.3);

        // Already cotangent: unchanged.
        let q = (1.2, 1.6); // radius 2
        let p = (-1.6, 1.2);
        let (pc, px) = circle_cotangent_project(q, p, r);
        assert!((pc - p.0).abs() < 1e-14 && (px - p.1).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn cotangent_projection_idempotent(seed in 0u64..500) {
            let mut rng = Rng::from_seed_stream(seed, 0);
            let r = rng.uniform(0.5, 3.0);
            let alpha = rng.uniform(-3.1, 3.1);
            let q = (r * alpha.cos(), r * alpha.sin());
            let p_bar = (rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0));
            let once = circle_cotangent_project(q, p_bar, r);
            let twice = circle_cotangent_project(q, once, r);
            prop_assert!((once.0 - twice.0).abs() < 1e-14);
            prop_assert!((once.1 - twice.1).abs() < 1e-14);
            // Cotangency residual.
            prop_assert!((q.0 * once.0 + q.1 * once.1).abs() <= 1e-9);
        }

        #[test]
        fn a_step_preserves_radius_and_cotangency(seed in 0u64..500) {
            let mut rng = Rng::from_seed_stream(seed, 1);
            let r = rng.uniform(0.5, 3.0);
            let alpha = rng.uniform(-3.1, 3.1);
            let (mut t, mut x) = (r * alpha.cos(), r * alpha.sin());
            let p_bar = (rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0));
            let (mut pc, mut px) = circle_cotangent_project((t, x), p_bar, r);
            circle_pair_a_step(&mut t, &mut x, &mut pc, &mut px, r, rng.uniform(0.0, 1.0));
            prop_assert!(((t * t + x * x).sqrt() - r).abs() < 1e-12);
            prop_assert!((t * pc + x * px).abs() < 1e-9);
        }
    }

    #[test]
    fn a_step_zero_momentum_fixed_point() {
        let (mut t, mut x, mut pc, mut px) = (0.6, 0.8, 0.0, 0.0);
        circle_pair_a_step(&mut t, &mut x, &mut pc, &mut px, 1.0, 0.37);
        assert_eq!((t, x, pc, px), (0.6, 0.8, 0.0, 0.0));
    }

    /// Independent oracle: RK4 on the projected geodesic ODE
    /// q' = p, p' = -(|p|^2 / r^2) q (from differentiating the constraint
    /// twice), which never references the rotation formulas.
    fn geodesic_rk4(q0: (f64, f64), p0: (f64, f64), r: f64, t_end: f64) -> ((f64, f64), (f64, f64)) {
        let f = |state: [f64; 4]| {
            let [t, x, pc, px] = state;
            let speed2 = pc * pc + px * px;
            [pc, px, -speed2 / (r * r) * t, -speed2 / (r * r) * x]
        };
        let mut y = [q0.0, q0.1, p0.0, p0.1];
        let n = 20_000;
        let h = t_end / n as f64;
        for _ in 0..n {
            let k1 = f(y);
            let mid1: [f64; 4] = std::array::from_fn(|i| y[i] + 0.5 * h * k1[i]);
            let k2 = f(mid1);
            let mid2: [f64; 4] = std::array::from_fn(|i| y[i] + 0.5 * h * k2[i]);
            let k3 = f(mid2);
            let end: [f64; 4] = std::array::from_fn(|i| y[i] + h * k3[i]);
            let k4 = f(end);
            for i in 0..4 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        ((y[0], y[1]), (y[2], y[3]))
    }

    #[test]
    fn a_step_quarter_turn_matches_geodesic_oracle() {
        // (theta, xi) = (1, 0), (p^c, p^xi) = (0, -1): omega = 1 and the
        // motion is clockwise, landing on (0, -1) after h = pi/2.
        let h = std::f64::consts::FRAC_PI_2;
        let (mut t, mut x, mut pc, mut px) = (1.0, 0.0, 0.0, -1.0);
        circle_pair_a_step(&mut t, &mut x, &mut pc, &mut px, 1.0, h);
        assert!(t.abs() < 1e-15 && (x - (-1.0)).abs() < 1e-15, "got ({t}, {x})");
        assert!((pc - (-1.0)).abs() < 1e-15 && px.abs() < 1e-15);

        let ((ot, ox), (opc, opx)) = geodesic_rk4((1.0, 0.0), (0.0, -1.0), 1.0, h);
        assert!((ot - t).abs() < 1e-9 && (ox - x).abs() < 1e-9);
        assert!((opc - pc).abs() < 1e-9 && (opx - px).abs() < 1e-9);
    }

    #[test]
    fn a_step_periodicity() {
        // n steps of total rotation angle 2 pi return to the start.
        let r = 1.5;
        let (t0, x0) = (r, 0.0);
        let (pc0, px0) = (0.0, 3.0); // omega = (xi pc - theta pxi)/r^2 = -2
        let omega: f64 = -2.0;
        let n = 1000;
        let h = (2.0 * std::f64::consts::PI / omega.abs()) / n as f64;
        let (mut t, mut x, mut pc, mut px) = (t0, x0, pc0, px0);
        for _ in 0..n {
            circle_pair_a_step(&mut t, &mut x, &mut pc, &mut px, r, h);
        }
        assert!((t - t0).abs() < 1e-9 && (x - x0).abs() < 1e-9);
        assert!((pc - pc0).abs() < 1e-9 && (px - px0).abs() < 1e-9);
    }

    #[test]
    fn slack_init_cases() {
        let mut theta = vec![0.0, 0.6, 1.5];
        let xi = slack_init(&mut theta, &[1.0, 1.0, 1.0]);
        assert_eq!(theta, vec![0.0, 0.6, 1.0]);
        assert!((xi[0] - 1.0).abs() < 1e-15);
        assert!((xi[1] - 0.8).abs() < 1e-15);
        assert_eq!(xi[2], 0.0);
    }

    #[test]
    fn sphere_projection_cases() {
        let (row, xi) = sphere_project(&[3.0, 0.0], 4.0, 10.0);
        assert_eq!(row, vec![6.0, 0.0]);
        assert_eq!(xi, 8.0);

        // On-sphere input is unchanged.
        let (row, xi) = sphere_project(&[0.6, 0.0], 0.8, 1.0);
        assert!((row[0] - 0.6).abs() < 1e-15 && (xi - 0.8).abs() < 1e-15);

        let mut rng = Rng::from_seed_stream(12, 0);
        for _ in 0..50 {
            let v: Vec<f64> = (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let xi = rng.uniform(-2.0, 2.0);
            let r = rng.uniform(0.1, 3.0);
            let (pv, pxi) = sphere_project(&v, xi, r);
            let g = pv.iter().map(|x| x * x).sum::<f64>() + pxi * pxi - r * r;
            assert!(g.abs() <= 1e-12, "residual {g}");
        }
        let (row, xi) = sphere_project(&[0.0, 0.0, 0.0], 0.0, 2.0);
        assert_eq!(row, vec![2.0, 0.0, 0.0]);
        assert_eq!(xi, 0.0);
    }

    #[test]
    fn orth_residual_cases() {
        let q = Matrix::identity(4);
        assert!(orth_residual(&q) <= 1e-12);

        let mut two_i = Matrix::identity(3);
        two_i.scale_in_place(2.0);
        assert!((orth_residual(&two_i) - 3.0 * 3.0f64.sqrt()).abs() < 1e-12);

        let q = Matrix::from_rows(&[&[1.2]]);
        assert!((orth_residual(&q) - 0.44).abs() < 1e-12);
    }

    #[test]
    fn quasi_newton_fixed_point_and_scalar_iterates() {
        let mut rng = Rng::from_seed_stream(5, 0);
        let g = rng.standard_normal_matrix(6, 4);
        let q = {
            // Orthonormalize through the nn initializer path.
            use crate::nn::{init_orthogonal, Activation, MlpModel};
            let mut m = MlpModel::new(&[4, 6], &[Activation::Identity]).unwrap();
            init_orthogonal(&mut rng, &mut m, &[0]).unwrap();
            let _ = g;
            m.layers[0].w.clone()
        };
        let out = orth_quasi_newton_project(&q, &q, 5, 1e-8).unwrap();
        let diff = out.sub(&q).frobenius_norm();
        assert!(diff < 1e-14);

        // 1x1 recurrence: 1.2 -> 0.98 -> 0.99980...
        let qn = Matrix::from_rows(&[&[1.0]]);
        let q0 = Matrix::from_rows(&[&[1.2]]);
        let one = orth_quasi_newton_project(&qn, &q0, 1, 0.0).unwrap_or_else(|_| unreachable!());
        assert!((one.get(0, 0) - 0.98).abs() < 1e-15);
        let two = orth_quasi_newton_project(&qn, &q0, 2, 0.0).unwrap();
        let expect2 = 0.98 + (1.0 - 0.98f64 * 0.98) / 2.0; // 0.9998
        assert!((two.get(0, 0) - expect2).abs() < 1e-15);
        let many = orth_quasi_newton_project(&qn, &q0, 20, 1e-14).unwrap();
        assert!((many.get(0, 0) - 1.0).abs() < 1e-12);

        // k_cap = 0 returns the input unprojected.
        let zero = orth_quasi_newton_project(&qn, &q0, 0, 1e-8).unwrap();
        assert_eq!(zero.get(0, 0), 1.2);
    }

    #[test]
    fn quasi_newton_residuals_decrease() {
        let mut rng = Rng::from_seed_stream(6, 0);
        use crate::nn::{init_orthogonal, Activation, MlpModel};
        let mut m = MlpModel::new(&[5, 9], &[Activation::Identity]).unwrap();
        init_orthogonal(&mut rng, &mut m, &[0]).unwrap();
        let qn = m.layers[0].w.clone();
        let mut q0 = qn.clone();
        let noise = rng.standard_normal_matrix(9, 5);
        q0.axpy(0.1, &noise);

        let mut residuals = Vec::new();
        for k in 0..5 {
            let out = orth_quasi_newton_project(&qn, &q0, k, 0.0).unwrap();
            residuals.push(orth_residual(&out));
        }
        for w in residuals.windows(2) {
            assert!(w[1] < w[0], "residuals not decreasing: {residuals:?}");
        }
    }

    #[test]
    fn quasi_newton_divergence_detected() {
        let qn = Matrix::identity(2);
        let mut q0 = Matrix::identity(2);
        q0.scale_in_place(10.0);
        let err = orth_quasi_newton_project(&qn, &q0, 50, 1e-8);
        assert!(matches!(err, Err(Error::ProjectionDiverged { .. })));
    }

    #[test]
    fn orth_cotangent_cases() {
        // 1x1: the cotangent space at Q = [1] is {0}.
        let q = Matrix::from_rows(&[&[1.0]]);
        let p = orth_cotangent_project(&q, &Matrix::from_rows(&[&[0.7]]));
        assert!(p.get(0, 0).abs() < 1e-15);

        // Q = I: skew-symmetric is unchanged, symmetric maps to zero.
        let q = Matrix::identity(2);
        let skew = Matrix::from_rows(&[&[0.0, 1.5], &[-1.5, 0.0]]);
        let ps = orth_cotangent_project(&q, &skew);
        assert!(ps.sub(&skew).frobenius_norm() < 1e-15);
        let sym = Matrix::from_rows(&[&[1.0, 0.5], &[0.5, -2.0]]);
        let pz = orth_cotangent_project(&q, &sym);
        assert!(pz.frobenius_norm() < 1e-15);
    }

    #[test]
    fn orth_cotangent_is_linear_idempotent_orthogonal() {
        let mut rng = Rng::from_seed_stream(7, 0);
        use crate::nn::{init_orthogonal, Activation, MlpModel};
        let mut m = MlpModel::new(&[3, 7], &[Activation::Identity]).unwrap();
        init_orthogonal(&mut rng, &mut m, &[0]).unwrap();
        let q = m.layers[0].w.clone();

        let p1 = rng.standard_normal_matrix(7, 3);
        let p2 = rng.standard_normal_matrix(7, 3);
        let alpha = 1.37;

        let pr1 = orth_cotangent_project(&q, &p1);
        let pr2 = orth_cotangent_project(&q, &p2);

        // Linearity.
        let mut combo = p1.clone();
        combo.scale_in_place(alpha);
        combo.axpy(1.0, &p2);
        let pr_combo = orth_cotangent_project(&q, &combo);
        let mut expect = pr1.clone();
        expect.scale_in_place(alpha);
        expect.axpy(1.0, &pr2);
        assert!(pr_combo.sub(&expect).frobenius_norm() < 1e-12);

        // Idempotence and cotangency.
        let twice = orth_cotangent_project(&q, &pr1);
        assert!(twice.sub(&pr1).frobenius_norm() < 1e-12);
        assert!(orth_cotangent_residual(&q, &pr1) <= 1e-8);

        // Frobenius orthogonality of the removed component.
        let mut removed = p1.clone();
        removed.axpy(-1.0, &pr1);
        let inner: f64 = removed
            .data()
            .iter()
            .zip(pr1.data())
            .map(|(a, b)| a * b)
            .sum();
        let norm2: f64 = p1.data().iter().map(|v| v * v).sum();
        assert!(inner.abs() <= 1e-8 * norm2);
    }
}
