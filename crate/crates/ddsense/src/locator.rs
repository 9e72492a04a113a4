//! Three-ellipse target localization: double WLS with two-stage estimation,
//! sign resolution against the accumulated squared range error, per-instant
//! transmitter velocity via LS, and LM/DFP baselines plus a brute-force grid
//! oracle for testing.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scene::SensingMeasurement;

/// First-stage WLS estimate of `z = [x, y, ||p||]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEstimate {
    pub z: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-instant transmitter velocity estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    pub velocity: Vector2<f64>,
    pub condition: f64,
    /// Set when the LoS/NLoS directions are nearly parallel (condition
    /// number above [`VELOCITY_CONDITION_LIMIT`]) or the solve failed.
    pub flagged: bool,
}

/// Full localization output.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub position: Vector2<f64>,
    pub upsilon: Vector2<f64>,
    pub loss: f64,
    pub sign_choice: (i8, i8),
    pub velocities: Vec<VelocityEstimate>,
    pub coarse: CoarseEstimate,
    /// True if a negative squared coordinate had to be clamped to zero.
    pub clamped: bool,
}

/// Default TSE stopping tolerance in meters.
pub const DEFAULT_EPS: f64 = 1e-6;
/// Default TSE iteration cap.
pub const DEFAULT_MAX_ITER: usize = 50;
/// Velocity solves with a worse condition number are flagged.
pub const VELOCITY_CONDITION_LIMIT: f64 = 1e6;

/// Build the linear system `alpha ~ A z`: `alpha_i = (r_i^2 - ||s_i||^2)/2`,
/// row i of `A` is `-[s_i^T, -r_i]`.
pub fn build_system(meas: &[SensingMeasurement]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if meas.len() < 3 {
        return Err(Error::InsufficientMeasurements {
            got: meas.len(),
            need: 3,
        });
    }
    if meas.iter().all(|m| m.tx.norm() == 0.0) {
        return Err(Error::DegenerateGeometry(
            "all transmitter positions at the origin".into(),
        ));
    }
    let n = meas.len();
    let alpha = DVector::from_iterator(
        n,
        meas.iter()
            .map(|m| 0.5 * (m.range * m.range - m.tx.norm_squared())),
    );
    let mut a = DMatrix::zeros(n, 3);
    for (i, m) in meas.iter().enumerate() {
        a[(i, 0)] = -m.tx.x;
        a[(i, 1)] = -m.tx.y;
        a[(i, 2)] = m.range;
    }
    Ok((alpha, a))
}

fn weighted_solve(
    alpha: &DVector<f64>,
    a: &DMatrix<f64>,
    r_diag: &DVector<f64>,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let n = a.nrows();
    let mut at_ri_a = Matrix3::zeros();
    let mut at_ri_alpha = Vector3::zeros();
    for i in 0..n {
        let w = 1.0 / r_diag[i];
        let row = Vector3::new(a[(i, 0)], a[(i, 1)], a[(i, 2)]);
        at_ri_a += row * row.transpose() * w;
        at_ri_alpha += row * (alpha[i] * w);
    }
    let cov = at_ri_a
        .try_inverse()
        .ok_or_else(|| Error::Singular("A^T R^-1 A is singular (collinear geometry)".into()))?;
    Ok((cov * at_ri_alpha, cov))
}

/// First-stage WLS with the two-stage (TSE) reweighting loop.
///
/// Starting from `R = Q`, alternately solve the WLS normal equations and
/// rebuild `R = B Q B^T` with `B = v_hat I - diag(r_hat)` until the iterate
/// moves less than `eps`.
pub fn coarse_wls(
    alpha: &DVector<f64>,
    a: &DMatrix<f64>,
    q_diag: &DVector<f64>,
    eps: f64,
    max_iter: usize,
) -> Result<CoarseEstimate> {
    let n = a.nrows();
    if alpha.len() != n || q_diag.len() != n {
        return Err(Error::DimensionMismatch(
            "alpha, A, and Q row counts differ".into(),
        ));
    }
    if q_diag.iter().any(|&q| q <= 0.0) {
        return Err(Error::InvalidArgument(
            "Q must be diagonal positive definite".into(),
        ));
    }

    let floor = 1e-12 * q_diag.max();
    let mut r_diag = q_diag.clone();
    let (mut z, mut cov) = weighted_solve(alpha, a, &r_diag)?;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=max_iter {
        iterations = iter;
        // B = v_hat I - diag(r_hat) is diagonal, so R = B Q B^T is too.
        for i in 0..n {
            let b = z[2] - a[(i, 2)];
            r_diag[i] = (b * b * q_diag[i]).max(floor);
        }
        let (z_next, cov_next) = weighted_solve(alpha, a, &r_diag)?;
        let step = (z_next - z).norm();
        z = z_next;
        cov = cov_next;
        if step <= eps {
            converged = true;
            break;
        }
    }
    Ok(CoarseEstimate {
        z,
        cov,
        iterations,
        converged,
    })
}

/// Second-stage WLS exploiting `||p||^2 = x^2 + y^2`; returns the squared
/// coordinates `[x^2, y^2]` and whether clamping occurred.
pub fn refine_wls(coarse: &CoarseEstimate) -> Result<(Vector2<f64>, bool)> {
    let (x, y, v) = (coarse.z[0], coarse.z[1], coarse.z[2]);
    let theta = Vector3::new(x * x, y * y, v * v);
    let c_bar = Matrix3::from_diagonal(&Vector3::new(x, y, v));
    let mut omega = 4.0 * c_bar * coarse.cov * c_bar;

    // Omega is singular when a coordinate estimate is ~0; diagonal loading.
    let near_zero = x.abs() < 1e-6 || y.abs() < 1e-6 || v.abs() < 1e-6;
    let mut omega_inv = if near_zero { None } else { omega.try_inverse() };
    if omega_inv.is_none() {
        let trace = omega.trace().abs().max(1e-300);
        omega += Matrix3::identity() * (1e-9 * trace / 3.0);
        omega_inv = omega.try_inverse();
    }
    let omega_inv =
        omega_inv.ok_or_else(|| Error::Singular("Omega not invertible after loading".into()))?;

    // S maps [x^2, y^2] to [x^2, y^2, x^2 + y^2].
    let s = nalgebra::Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 1.0, 1.0);
    let normal = (s.transpose() * omega_inv * s)
        .try_inverse()
        .ok_or_else(|| Error::Singular("refinement normal matrix singular".into()))?;
    let mut upsilon = normal * s.transpose() * omega_inv * theta;

    let mut clamped = false;
    for i in 0..2 {
        if upsilon[i] < 0.0 {
            upsilon[i] = 0.0;
            clamped = true;
        }
    }
    Ok((upsilon, clamped))
}

/// Accumulated squared bistatic-range error of a candidate position.
pub fn range_loss(p: &Vector2<f64>, meas: &[SensingMeasurement]) -> f64 {
    meas.iter()
        .map(|m| {
            let r = (p - m.tx).norm() + p.norm();
            (r - m.range).powi(2)
        })
        .sum()
}

/// Pick the sign combination of `[+/-sqrt(u1), +/-sqrt(u2)]` minimizing the
/// accumulated squared error; ties break toward positive signs.
pub fn resolve_sign(
    upsilon: &Vector2<f64>,
    meas: &[SensingMeasurement],
) -> (Vector2<f64>, f64, (i8, i8)) {
    let (sx, sy) = (upsilon[0].max(0.0).sqrt(), upsilon[1].max(0.0).sqrt());
    let mut best = None;
    for &(gx, gy) in &[(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
        let cand = Vector2::new(gx as f64 * sx, gy as f64 * sy);
        let loss = range_loss(&cand, meas);
        match best {
            None => best = Some((cand, loss, (gx, gy))),
            Some((_, l, _)) if loss < l => best = Some((cand, loss, (gx, gy))),
            _ => {}
        }
    }
    best.unwrap()
}

/// Per-instant LS velocity from the NLoS/LoS radial rates and the known
/// geometry at `p_hat`.
pub fn estimate_velocity(
    p_hat: &Vector2<f64>,
    meas: &SensingMeasurement,
) -> Result<VelocityEstimate> {
    let leg_nlos = meas.tx - p_hat;
    let leg_los = meas.tx;
    if leg_nlos.norm() == 0.0 || leg_los.norm() == 0.0 {
        return Err(Error::DegenerateGeometry(
            "transmitter coincides with target or receiver".into(),
        ));
    }
    let row1 = leg_nlos / leg_nlos.norm();
    let row2 = leg_los / leg_los.norm();
    let c = Matrix2::new(row1.x, row1.y, row2.x, row2.y);
    let u = Vector2::new(meas.range_rate, meas.los_rate);

    let svd = c.svd(false, false);
    let (smax, smin) = (svd.singular_values[0], svd.singular_values[1]);
    if smin <= smax * 1e-12 {
        return Err(Error::Singular(
            "LoS and NLoS directions are parallel".into(),
        ));
    }
    let condition = smax / smin;
    let velocity = c
        .try_inverse()
        .ok_or_else(|| Error::Singular("velocity matrix not invertible".into()))?
        * u;
    Ok(VelocityEstimate {
        velocity,
        condition,
        flagged: condition > VELOCITY_CONDITION_LIMIT,
    })
}

/// Full pipeline: build the ellipse system, coarse TSE-WLS, refinement,
/// sign resolution, and per-instant velocities.
///
/// `Q` is the diagonal of range-error variances; measurements with zero
/// sigma fall back to unit weights.
pub fn locate(
    meas: &[SensingMeasurement],
    eps: f64,
    max_iter: usize,
) -> Result<LocalizationResult> {
    let (alpha, a) = build_system(meas)?;
    let q = DVector::from_iterator(
        meas.len(),
        meas.iter().map(|m| {
            if m.sigma_range > 0.0 {
                m.sigma_range * m.sigma_range
            } else {
                1.0
            }
        }),
    );
    let coarse = coarse_wls(&alpha, &a, &q, eps, max_iter)?;
    let (upsilon, clamped) = refine_wls(&coarse)?;
    let (position, loss, sign_choice) = resolve_sign(&upsilon, meas);
    let velocities = meas
        .iter()
        .map(|m| {
            estimate_velocity(&position, m).unwrap_or(VelocityEstimate {
                velocity: Vector2::zeros(),
                condition: f64::INFINITY,
                flagged: true,
            })
        })
        .collect();
    Ok(LocalizationResult {
        position,
        upsilon,
        loss,
        sign_choice,
        velocities,
        coarse,
        clamped,
    })
}

/// Levenberg-Marquardt options.
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            damping: 1e-3,
            max_iter: 100,
            step_tol: 1e-10,
        }
    }
}

fn residuals_and_jacobian(
    p: &Vector2<f64>,
    meas: &[SensingMeasurement],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = meas.len();
    let mut f = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 2);
    let p_norm = p.norm().max(1e-12);
    for (i, m) in meas.iter().enumerate() {
        let leg = p - m.tx;
        let leg_norm = leg.norm().max(1e-12);
        f[i] = leg_norm + p.norm() - m.range;
        let grad = leg / leg_norm + p / p_norm;
        j[(i, 0)] = grad.x;
        j[(i, 1)] = grad.y;
    }
    (f, j)
}

/// Levenberg-Marquardt on the bistatic range residual vector.
pub fn locate_lm(
    meas: &[SensingMeasurement],
    init: Vector2<f64>,
    opts: &LmOptions,
) -> Result<Vector2<f64>> {
    if meas.len() < 3 {
        return Err(Error::InsufficientMeasurements {
            got: meas.len(),
            need: 3,
        });
    }
    let mut p = init;
    let mut lambda = opts.damping;
    let (mut f, mut j) = residuals_and_jacobian(&p, meas);
    let mut cost = f.norm_squared();
    for _ in 0..opts.max_iter {
        let jtj = Matrix2::new(
            j.column(0).dot(&j.column(0)),
            j.column(0).dot(&j.column(1)),
            j.column(1).dot(&j.column(0)),
            j.column(1).dot(&j.column(1)),
        );
        let jtf = Vector2::new(j.column(0).dot(&f), j.column(1).dot(&f));
        let mut damped = jtj;
        damped[(0, 0)] += lambda * jtj[(0, 0)].max(1e-12);
        damped[(1, 1)] += lambda * jtj[(1, 1)].max(1e-12);
        let Some(inv) = damped.try_inverse() else {
            lambda *= 10.0;
            continue;
        };
        let step = -(inv * jtf);
        let candidate = p + step;
        let (fc, jc) = residuals_and_jacobian(&candidate, meas);
        let c_cost = fc.norm_squared();
        if c_cost < cost {
            p = candidate;
            f = fc;
            j = jc;
            cost = c_cost;
            lambda = (lambda / 3.0).max(1e-12);
            if step.norm() < opts.step_tol {
                break;
            }
        } else {
            lambda *= 3.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    Ok(p)
}

/// DFP options. The gradient is a forward finite difference with spacing
/// `fd_step`, following the derivative-free formulation this baseline is
/// drawn from; the spacing sets the method's accuracy floor.
#[derive(Debug, Clone, Copy)]
pub struct DfpOptions {
    pub max_iter: usize,
    pub fd_step: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
}

impl Default for DfpOptions {
    fn default() -> Self {
        Self {
            max_iter: 60,
            fd_step: 0.25,
            grad_tol: 1e-3,
            step_tol: 1e-4,
        }
    }
}

fn fd_gradient(p: &Vector2<f64>, meas: &[SensingMeasurement], h: f64) -> Vector2<f64> {
    let base = range_loss(p, meas);
    Vector2::new(
        (range_loss(&Vector2::new(p.x + h, p.y), meas) - base) / h,
        (range_loss(&Vector2::new(p.x, p.y + h), meas) - base) / h,
    )
}

/// Davidon-Fletcher-Powell quasi-Newton minimization of the accumulated
/// squared range error with backtracking line search.
pub fn locate_dfp(
    meas: &[SensingMeasurement],
    init: Vector2<f64>,
    opts: &DfpOptions,
) -> Result<Vector2<f64>> {
    if meas.len() < 3 {
        return Err(Error::InsufficientMeasurements {
            got: meas.len(),
            need: 3,
        });
    }
    let mut p = init;
    let mut h_inv = Matrix2::identity();
    let mut grad = fd_gradient(&p, meas, opts.fd_step);
    let mut cost = range_loss(&p, meas);
    for _ in 0..opts.max_iter {
        if grad.norm() < opts.grad_tol {
            break;
        }
        let mut dir = -(h_inv * grad);
        if dir.dot(&grad) >= 0.0 {
            // Lost positive definiteness; restart on steepest descent.
            h_inv = Matrix2::identity();
            dir = -grad;
        }

        // Backtracking Armijo line search.
        let mut step = 1.0;
        let slope = grad.dot(&dir);
        let mut accepted = None;
        for _ in 0..25 {
            let cand = p + dir * step;
            let c = range_loss(&cand, meas);
            if c <= cost + 1e-4 * step * slope {
                accepted = Some((cand, c));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_cost)) = accepted else {
            break;
        };

        let s = next - p;
        let next_grad = fd_gradient(&next, meas, opts.fd_step);
        let y = next_grad - grad;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let hy = h_inv * y;
            let yhy = y.dot(&hy);
            h_inv += s * s.transpose() / sy;
            if yhy > 1e-12 {
                h_inv -= hy * hy.transpose() / yhy;
            }
        }
        let moved = s.norm();
        p = next;
        grad = next_grad;
        cost = next_cost;
        if moved < opts.step_tol {
            break;
        }
    }
    Ok(p)
}

/// Common initialization for the iterative baselines: centroid of the
/// transmitter positions.
pub fn baseline_init(meas: &[SensingMeasurement]) -> Vector2<f64> {
    let mut c = Vector2::zeros();
    for m in meas {
        c += m.tx;
    }
    c / meas.len().max(1) as f64
}

/// Exhaustive grid argmin of the accumulated squared error; test oracle.
pub fn brute_force_locate(
    meas: &[SensingMeasurement],
    min: Vector2<f64>,
    max: Vector2<f64>,
    step: f64,
) -> Result<Vector2<f64>> {
    if step <= 0.0 || min.x > max.x || min.y > max.y {
        return Err(Error::InvalidArgument("empty search box".into()));
    }
    let nx = ((max.x - min.x) / step).floor() as usize + 1;
    let ny = ((max.y - min.y) / step).floor() as usize + 1;
    let mut best = (Vector2::new(min.x, min.y), f64::INFINITY);
    for ix in 0..nx {
        for iy in 0..ny {
            let p = Vector2::new(min.x + ix as f64 * step, min.y + iy as f64 * step);
            let loss = range_loss(&p, meas);
            if loss < best.1 {
                best = (p, loss);
            }
        }
    }
    Ok(best.0)
}
