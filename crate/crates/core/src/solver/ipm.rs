//! Primal-dual interior-point method for smooth NLPs with equality and
//! inequality constraints.
//!
//! Inequalities get slacks (c_I(x) + s = 0, s > 0) and a log barrier with a
//! monotone schedule (μ/10 once the μ-scaled KKT error is small). Steps are
//! damped Newton on the reduced KKT system with an l1 merit line search and
//! the fraction-to-boundary rule. Dense factorization throughout.

use nalgebra::{DMatrix, DVector};

/// Problem interface consumed by [`solve`].
///
/// Conventions: minimize f(x) subject to c_E(x) = 0 and c_I(x) ≤ 0.
/// Output buffers are reused across iterations, so every method must
/// overwrite its `out` argument completely.
pub trait NlpProblem {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn initial(&self) -> DVector<f64>;
    fn objective(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>, grad: &mut DVector<f64>);
    fn eq_constraints(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    fn ineq_constraints(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    fn eq_jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>);
    fn ineq_jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>);
    /// Hessian of σ·f + λᵀc_E + zᵀc_I.
    fn lagrangian_hessian(
        &self,
        x: &DVector<f64>,
        sigma: f64,
        lam: &DVector<f64>,
        z: &DVector<f64>,
        out: &mut DMatrix<f64>,
    );
}

#[derive(Debug, Clone)]
pub struct IpmOptions {
    pub tol_feas: f64,
    pub tol_opt: f64,
    /// Complementarity cutoff; equals `tol_opt` unless an exact active set
    /// matters (the load-flow projection tightens it).
    pub tol_comp: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    pub mu_min: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol_feas: 1e-6,
            tol_opt: 1e-6,
            tol_comp: 1e-6,
            max_iter: 300,
            mu_init: 0.1,
            mu_min: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    IterLimit,
    Infeasible,
}

#[derive(Debug)]
pub struct IpmOutcome {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: IpmStatus,
    pub iterations: usize,
    /// max(‖c_E‖∞, ‖c_I+s‖∞) at the returned point.
    pub infeasibility: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum IpmError {
    #[error("KKT factorization failed even with maximal regularization")]
    SingularKkt,
}

const KAPPA_SIGMA: f64 = 1e10;
const DELTA_MAX: f64 = 1e8;
/// Slacks never fall below this; keeps 1/s and z/s bounded when an
/// inequality is pinned by the equalities (degenerate actives).
const S_FLOOR: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, e| acc.max(e.abs()))
}

struct Workspace {
    grad: DVector<f64>,
    c_eq: DVector<f64>,
    c_in: DVector<f64>,
    j_eq: DMatrix<f64>,
    j_in: DMatrix<f64>,
    hess: DMatrix<f64>,
}

/// Run the interior-point loop. `on_step` fires after every accepted step
/// with the new primal iterate.
pub fn solve<P: NlpProblem>(
    problem: &P,
    opts: &IpmOptions,
    mut on_step: impl FnMut(&DVector<f64>),
) -> Result<IpmOutcome, IpmError> {
    let n = problem.n_vars();
    let n_eq = problem.n_eq();
    let n_in = problem.n_ineq();

    let mut x = problem.initial();
    let mut ws = Workspace {
        grad: DVector::zeros(n),
        c_eq: DVector::zeros(n_eq),
        c_in: DVector::zeros(n_in),
        j_eq: DMatrix::zeros(n_eq, n),
        j_in: DMatrix::zeros(n_in, n),
        hess: DMatrix::zeros(n, n),
    };

    // Objective scaling keeps $-scale costs commensurate with pu-scale physics.
    problem.gradient(&x, &mut ws.grad);
    let g0 = inf_norm(&ws.grad);
    let obj_scale = if g0 > 100.0 { 100.0 / g0 } else { 1.0 };

    problem.ineq_constraints(&x, &mut ws.c_in);
    let mut s = DVector::from_fn(n_in, |i, _| (-ws.c_in[i]).max(1e-3));
    debug_assert!(S_FLOOR < 1e-3);
    let mut mu = opts.mu_init;
    let mut z = DVector::from_fn(n_in, |i, _| (mu / s[i]).clamp(1e-8, 1e8));
    let mut lam = DVector::zeros(n_eq);

    let mut nu = 1.0f64; // merit penalty weight
    let mut delta = 0.0f64; // Hessian regularization carried between iterations
    let mut ls_failures = 0usize;

    let mut best_x = x.clone();
    let mut best_theta = f64::INFINITY;
    let mut iterations = 0usize;
    let mut status = IpmStatus::IterLimit;

    for iter in 0..opts.max_iter {
        iterations = iter;
        problem.gradient(&x, &mut ws.grad);
        ws.grad *= obj_scale;
        problem.eq_constraints(&x, &mut ws.c_eq);
        problem.ineq_constraints(&x, &mut ws.c_in);
        problem.eq_jacobian(&x, &mut ws.j_eq);
        problem.ineq_jacobian(&x, &mut ws.j_in);

        // Residuals.
        let mut r_d = ws.grad.clone();
        r_d.gemv_tr(1.0, &ws.j_eq, &lam, 1.0);
        r_d.gemv_tr(1.0, &ws.j_in, &z, 1.0);
        let r_in = &ws.c_in + &s;
        let theta = inf_norm(&ws.c_eq).max(inf_norm(&r_in));

        if theta < best_theta {
            best_theta = theta;
            best_x = x.clone();
        }

        // Scaled KKT errors.
        let mult_sum = lam.iter().map(|v| v.abs()).sum::<f64>()
            + z.iter().map(|v| v.abs()).sum::<f64>();
        let s_d = (mult_sum / ((n_eq + n_in).max(1) as f64)).max(100.0) / 100.0;
        let s_c = if n_in > 0 {
            (z.iter().map(|v| v.abs()).sum::<f64>() / n_in as f64).max(100.0) / 100.0
        } else {
            1.0
        };
        let err_dual = inf_norm(&r_d) / s_d;
        let comp0 = (0..n_in).map(|i| (s[i] * z[i]).abs()).fold(0.0, f64::max);

        log::trace!(
            "iter {iter}: mu={mu:.2e} theta={theta:.2e} dual={err_dual:.2e} comp={:.2e} nu={nu:.1e} delta={delta:.1e}",
            comp0 / s_c
        );
        if theta <= opts.tol_feas && err_dual <= opts.tol_opt && comp0 / s_c <= opts.tol_comp {
            status = IpmStatus::Converged;
            break;
        }

        // Monotone barrier reduction toward a tenth of the average
        // complementarity; collapses μ as soon as the iterates center.
        if n_in > 0 {
            let gamma = s.dot(&z) / n_in as f64;
            let target = (0.1 * gamma).max(opts.mu_min);
            if target < mu {
                mu = target;
            }
        }
        let tau = 0.99f64.max(1.0 - mu);

        // Reduced KKT assembly. Σ = z/s with the usual safeguard.
        let sigma_vec = DVector::from_fn(n_in, |i, _| (z[i] / s[i]).clamp(1e-12, 1e12));
        problem.lagrangian_hessian(&x, obj_scale, &lam, &z, &mut ws.hess);
        let mut w = ws.hess.clone();
        for i in 0..n_in {
            let row = ws.j_in.row(i);
            let si = sigma_vec[i];
            // W += σ_i · J_i J_iᵀ (rank-one updates; rows are sparse-ish but dense is fine here)
            w.ger(si, &row.transpose(), &row.transpose(), 1.0);
        }

        // v = S^{-1}(Z r_I − r_C) = Σ r_I − z + μ/s
        let v_aux = DVector::from_fn(n_in, |i, _| sigma_vec[i] * r_in[i] - z[i] + mu / s[i]);
        let mut rhs_x = -&r_d;
        rhs_x.gemv_tr(-1.0, &ws.j_in, &v_aux, 1.0);

        let dim = n + n_eq;
        let mut accepted: Option<(DVector<f64>, DVector<f64>, f64)> = None;
        let mut delta_try = delta;
        for _reg in 0..40 {
            let mut kkt = DMatrix::zeros(dim, dim);
            kkt.view_mut((0, 0), (n, n)).copy_from(&w);
            for i in 0..n {
                kkt[(i, i)] += delta_try;
            }
            kkt.view_mut((0, n), (n, n_eq))
                .copy_from(&ws.j_eq.transpose());
            kkt.view_mut((n, 0), (n_eq, n)).copy_from(&ws.j_eq);
            let dual_reg = if delta_try > 0.0 { 1e-10 } else { 0.0 };
            for i in 0..n_eq {
                kkt[(n + i, n + i)] = -dual_reg;
            }

            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, n).copy_from(&rhs_x);
            rhs.rows_mut(n, n_eq).copy_from(&(-&ws.c_eq));

            let lu = kkt.lu();
            let Some(sol) = lu.solve(&rhs) else {
                delta_try = (delta_try * 10.0).max(1e-8);
                continue;
            };
            let dx = sol.rows(0, n).into_owned();
            let dlam = sol.rows(n, n_eq).into_owned();
            if !dx.iter().all(|v| v.is_finite()) || !dlam.iter().all(|v| v.is_finite()) {
                delta_try = (delta_try * 10.0).max(1e-8);
                continue;
            }

            // Curvature test: direction must carry positive curvature in W + δI.
            let wdx = &w * &dx;
            let curv = dx.dot(&wdx) + delta_try * dx.norm_squared();
            if curv < 1e-11 * dx.norm_squared() && delta_try < DELTA_MAX {
                delta_try = (delta_try * 10.0).max(1e-8);
                continue;
            }
            accepted = Some((dx, dlam, delta_try));
            break;
        }
        let Some((dx, dlam, used_delta)) = accepted else {
            return Err(IpmError::SingularKkt);
        };
        delta = used_delta / 3.0; // relax for the next iteration
        if delta < 1e-12 {
            delta = 0.0;
        }

        let jdx = &ws.j_in * &dx;
        let ds = DVector::from_fn(n_in, |i, _| -r_in[i] - jdx[i]);
        let dz = DVector::from_fn(n_in, |i, _| {
            sigma_vec[i] * (jdx[i] + r_in[i]) - z[i] + mu / s[i]
        });

        // Fraction-to-boundary step caps.
        let mut alpha_s: f64 = 1.0;
        let mut alpha_z: f64 = 1.0;
        for i in 0..n_in {
            if ds[i] < 0.0 {
                alpha_s = alpha_s.min(-tau * s[i] / ds[i]);
            }
            if dz[i] < 0.0 {
                alpha_z = alpha_z.min(-tau * z[i] / dz[i]);
            }
        }

        // l1 merit with penalty weight at least the dual magnitudes.
        let mult_inf = inf_norm(&lam)
            .max(inf_norm(&z))
            .max(inf_norm(&(&lam + &dlam)))
            .max(inf_norm(&(&z + alpha_z * &dz)));
        nu = nu.max((1.5 * mult_inf + 1.0).min(1e8));

        let barrier = |s_trial: &DVector<f64>| -> f64 {
            -mu * s_trial.iter().map(|v: &f64| v.ln()).sum::<f64>()
        };
        let merit = |x_trial: &DVector<f64>, s_trial: &DVector<f64>| -> f64 {
            let mut ce = DVector::zeros(n_eq);
            let mut ci = DVector::zeros(n_in);
            problem.eq_constraints(x_trial, &mut ce);
            problem.ineq_constraints(x_trial, &mut ci);
            let infeas = ce.iter().map(|v| v.abs()).sum::<f64>()
                + (0..n_in).map(|i| (ci[i] + s_trial[i]).abs()).sum::<f64>();
            obj_scale * problem.objective(x_trial) + barrier(s_trial) + nu * infeas
        };

        let infeas0 = ws.c_eq.iter().map(|v| v.abs()).sum::<f64>()
            + r_in.iter().map(|v| v.abs()).sum::<f64>();
        let phi0 = obj_scale * problem.objective(&x) + barrier(&s) + nu * infeas0;
        let dphi = ws.grad.dot(&dx) - mu * (0..n_in).map(|i| ds[i] / s[i]).sum::<f64>()
            - nu * infeas0;

        let mut alpha = alpha_s;
        let mut ok = false;
        for _ in 0..40 {
            let x_t = &x + alpha * &dx;
            let s_t = &s + alpha * &ds;
            if merit(&x_t, &s_t) <= phi0 + ARMIJO * alpha * dphi.min(0.0) {
                ok = true;
                break;
            }
            alpha *= 0.5;
        }
        if !ok {
            ls_failures += 1;
            if ls_failures >= 8 {
                status = if best_theta > 100.0 * opts.tol_feas {
                    IpmStatus::Infeasible
                } else {
                    IpmStatus::IterLimit
                };
                break;
            }
            // Take the damped step anyway; regularization grows next round.
            delta = (used_delta * 10.0).max(1e-6);
        } else {
            ls_failures = 0;
        }

        x += alpha * &dx;
        s += alpha * &ds;
        for i in 0..n_in {
            s[i] = s[i].max(S_FLOOR);
        }
        lam += alpha * &dlam;
        z += alpha_z * &dz;
        for i in 0..n_in {
            let lo = mu / (KAPPA_SIGMA * s[i]);
            let hi = KAPPA_SIGMA * mu / s[i];
            z[i] = z[i].clamp(lo.min(hi), lo.max(hi));
        }
        on_step(&x);
    }

    if status == IpmStatus::Converged {
        best_x = x.clone();
        best_theta = {
            problem.eq_constraints(&best_x, &mut ws.c_eq);
            problem.ineq_constraints(&best_x, &mut ws.c_in);
            let ri = &ws.c_in + &s;
            inf_norm(&ws.c_eq).max(inf_norm(&ri))
        };
    }
    let objective = problem.objective(&best_x);
    Ok(IpmOutcome {
        x: best_x,
        objective,
        status,
        iterations,
        infeasibility: best_theta,
    })
}
