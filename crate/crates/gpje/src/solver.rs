//! Damped-Newton homotopy continuation for the discretized second
//! boundary value problem.
//!
//! The equation family, for t in [0, 1] with pinning weights tau and eps,
//! reads in Monge-Ampere form
//!
//! ```text
//! log det[D^2 u - A(., u, Du)] = [tau (1 - t) + eps](u - u0) + log B_t,
//! B_t = |det E| [t f + (1 - t) f*(Tu0) |det DTu0|] / f*(Y),
//! ```
//!
//! with the oblique boundary operator `G_t = phi*(Y(., u, Du)) - (1 - t) r0`
//! where `r0 = phi*(Tu0)` on the boundary. At t = 0 the field u0 solves
//! both rows identically — the interior by construction of B_0 (with
//! |det DTu0| evaluated through the algebraic identity det(D^2u0 - A0) /
//! det E0) and the boundary by the residual offset, which deforms the
//! effective target level set from Tu0's image onto the true target as t
//! grows. At t = 1 the equation is the genuine prescribed-Jacobian problem
//! with only the eps-pin selecting among its solution family, and eps is
//! then driven to its floor through bordered stages (see
//! [`continuation_solve`]).

use crate::band::BandMatrix;
use crate::conditions;
use crate::density::Density;
use crate::domains::{DomainSpec, Grid};
use crate::dualmaps::{self, Jet1};
use crate::error::{Error, Result};
use crate::genfun::GenFun;
use crate::interval::Interval;
use crate::math::{Mat2, Vec2};
use serde::Serialize;

/// Continuation controls.
#[derive(Clone, Debug)]
pub struct HomotopyParams {
    /// Pinning weight override; estimated from sampled linearization
    /// bounds when absent.
    pub tau_override: Option<f64>,
    pub tau_cap: f64,
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_growth: f64,
    /// Newton iteration count at or under which the step size grows.
    pub fast_iters: usize,
    pub eps0: f64,
    pub eps_factor: f64,
    pub eps_min: f64,
    /// Convergence tolerance on the merged residual sup-norm.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Eigenvalue clamp floor for log det.
    pub delta_min: f64,
    pub refraction_delta: f64,
}

impl Default for HomotopyParams {
    fn default() -> Self {
        HomotopyParams {
            tau_override: None,
            tau_cap: 1e4,
            dt0: 0.1,
            dt_min: 1e-6,
            dt_growth: 1.5,
            fast_iters: 4,
            eps0: 1e-2,
            eps_factor: 0.25,
            eps_min: 1e-6,
            newton_tol: 1e-10,
            max_newton_iters: 30,
            delta_min: 1e-8,
            refraction_delta: 0.5,
        }
    }
}

/// The fixed problem data of one solve.
pub struct Problem {
    pub gf: GenFun,
    pub omega: DomainSpec,
    pub omega_star: DomainSpec,
    pub grid: Grid,
    pub f: Density,
    pub fstar: Density,
    /// Multiplier applied to f* so the discrete energies balance exactly.
    pub fstar_scale: f64,
    /// A5 gradient bound.
    pub k0: f64,
    /// A5 height interval.
    pub j0: Interval,
}

impl Problem {
    /// Assemble problem data, rescaling f* so the discrete masses balance.
    pub fn new(
        gf: GenFun,
        omega: DomainSpec,
        omega_star: DomainSpec,
        grid: Grid,
        f: Density,
        fstar: Density,
        refraction_delta: f64,
    ) -> Result<(Problem, f64)> {
        if grid.extra_rings != 0 {
            return Err(Error::config("the solver grid must not carry collar rings"));
        }
        let mass_f: f64 = grid.nodes.iter().map(|n| f.value(n.pos) * n.cell_measure).sum();
        let target_grid = Grid::build(&omega_star, grid.n_r.max(32), grid.n_theta.max(32))?;
        let mass_fstar: f64 =
            target_grid.nodes.iter().map(|n| fstar.value(n.pos) * n.cell_measure).sum();
        if mass_f <= 0.0 || mass_fstar <= 0.0 {
            return Err(Error::config("densities must have positive mass"));
        }
        let fstar_scale = mass_f / mass_fstar;
        let c = conditions::constants_a5(&gf, &omega, &omega_star, refraction_delta)?;
        Ok((
            Problem {
                gf,
                omega,
                omega_star,
                grid,
                f,
                fstar,
                fstar_scale,
                k0: c.k0,
                j0: c.j0,
            },
            fstar_scale,
        ))
    }

    fn fstar_eff(&self, y: Vec2) -> f64 {
        self.fstar_scale * self.fstar.value(y)
    }
}

/// Current continuation state plus the frozen pin data.
#[derive(Clone)]
pub struct SolverState {
    pub u: Vec<f64>,
    pub t: f64,
    pub eps: f64,
    pub tau: f64,
    /// Scalar compatibility multiplier of the bordered eps-stages: the
    /// interior equation carries `+ mu`, absorbing the O(h^2) defect of
    /// the discrete mass balance. Zero during the t-march.
    pub mu: f64,
    pub u0: Vec<f64>,
    /// Cached Tu0 per node.
    pub tu0: Vec<Vec2>,
    /// Cached |det DTu0| per node, through the algebraic identity.
    pub det_dtu0: Vec<f64>,
    /// Boundary residual offsets phi*(Tu0) per boundary column.
    pub r0: Vec<f64>,
}

/// One row of the convergence trace.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub eps: f64,
    pub newton_iters: usize,
    pub interior_sup: f64,
    pub boundary_sup: f64,
    pub min_lambda: f64,
    pub min_obliqueness: f64,
    pub clamp_penalty: f64,
    pub max_grad: f64,
    /// sup |u - u0|.
    pub drift: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub tau: f64,
    pub fstar_scale: f64,
    pub messages: Vec<String>,
}

/// Assembled residual (and optionally Jacobian) of the current state.
pub struct Assembled {
    pub residual: Vec<f64>,
    pub interior_sup: f64,
    pub boundary_sup: f64,
    pub min_lambda: f64,
    pub min_obliqueness: f64,
    pub clamp_penalty: f64,
    pub max_grad: f64,
    /// Rounding-noise estimate of the residual evaluation itself: the
    /// pole-adjacent Hessian stencils amplify f64 rounding by the metric
    /// factors, which bounds how small the residual can meaningfully get.
    pub noise_floor: f64,
    pub jacobian: Option<BandMatrix>,
}

impl Assembled {
    pub fn merged_sup(&self) -> f64 {
        self.interior_sup.max(self.boundary_sup)
    }

    /// Effective convergence tolerance given the evaluation noise.
    pub fn tol_effective(&self, newton_tol: f64) -> f64 {
        newton_tol.max(8.0 * self.noise_floor)
    }
}

/// log det with eigenvalues below `delta_min` continued linearly:
/// `log(lambda) -> log(delta) + (lambda - delta)/delta`. The linear branch
/// keeps the value consistent with its derivative (1/delta), so Newton
/// recovers from non-elliptic iterates in full steps instead of creeping
/// along a saturated clamp. The penalty records the total clamp depth.
fn clamped_logdet(m: Mat2, delta_min: f64) -> (f64, Mat2, f64) {
    let (lo, hi, q) = m.sym_eigen();
    let ext = |lambda: f64| {
        if lambda >= delta_min {
            lambda.ln()
        } else {
            delta_min.ln() + (lambda - delta_min) / delta_min
        }
    };
    let penalty = (delta_min - lo).max(0.0) + (delta_min - hi).max(0.0);
    let q2 = q.perp();
    let finv = Mat2::outer(q, q) * (1.0 / lo.max(delta_min))
        + Mat2::outer(q2, q2) * (1.0 / hi.max(delta_min));
    (ext(lo) + ext(hi), finv, penalty)
}

/// Initialize a solver state: caches Tu0, |det DTu0| (identity route) and
/// the boundary offsets. The pin field must be uniformly elliptic.
pub fn init_state(problem: &Problem, u0: Vec<f64>, params: &HomotopyParams) -> Result<SolverState> {
    let grid = &problem.grid;
    let n = grid.n_nodes();
    assert_eq!(u0.len(), n);
    let mut tu0 = Vec::with_capacity(n);
    let mut det_dtu0 = Vec::with_capacity(n);
    for k in 0..n {
        let (ring, col) = grid.ring_col(k);
        // accumulate the jet exactly as `assemble` does, so the cached
        // |det DTu0| cancels bitwise in the t = 0 interior residual
        let mut uval = 0.0;
        let mut du = Vec2::ZERO;
        let mut hess = Mat2::ZERO;
        for (idx, wu, dgrad, dhess) in grid.jet_weights(ring, col) {
            let v = u0[idx];
            uval += wu * v;
            du = du + dgrad * v;
            hess = hess + dhess * v;
        }
        let jet = Jet1::new(grid.nodes[k].pos, uval, du);
        let dual = dualmaps::solve_duals(&problem.gf, &jet)?;
        let m = hess - dualmaps::matrix_a_from_dual(&problem.gf, &jet, &dual);
        let det_m = m.det();
        let (lo, _) = m.sym_eigenvalues();
        if lo <= 0.0 {
            return Err(Error::Ellipticity {
                what: format!("pin field not elliptic at node {k}: lambda = {lo:.3e}"),
            });
        }
        tu0.push(dual.y);
        det_dtu0.push((det_m / dual.det_e).abs());
    }
    let mut r0 = Vec::with_capacity(grid.n_theta);
    let bring = grid.n_r - 1;
    for col in 0..grid.n_theta {
        let k = grid.idx(bring, col);
        r0.push(problem.omega_star.phi(tu0[k]).0);
    }
    let tau = match params.tau_override {
        Some(t) => t,
        None => estimate_tau(problem, &u0)?.min(params.tau_cap),
    };
    Ok(SolverState { u: u0.clone(), t: 0.0, eps: params.eps0, tau, mu: 0.0, u0, tu0, det_dtu0, r0 })
}

/// Pinning-weight estimate: sampled bounds on the linearization pieces at
/// the pin field, times a safety factor of four.
pub fn estimate_tau(problem: &Problem, u0: &[f64]) -> Result<f64> {
    let grid = &problem.grid;
    let mut c_est = 0.0f64;
    let mut k = 0;
    while k < grid.n_nodes() {
        let (ring, col) = grid.ring_col(k);
        let jet = grid.field_jet(u0, ring, col);
        let x = grid.nodes[k].pos;
        let j1 = Jet1::new(x, jet.u, jet.du);
        if let Ok(dual) = dualmaps::solve_duals(&problem.gf, &j1) {
            let a = dualmaps::matrix_a_from_dual(&problem.gf, &j1, &dual);
            let m = jet.hess - a;
            let (lo, hi) = m.sym_eigenvalues();
            if lo > 0.0 {
                let m_inv_norm = 1.0 / lo.min(hi);
                let h = 1e-6 * (1.0 + jet.u.abs());
                let du_a = fd_du_a(&problem.gf, &j1, h);
                let dp_a = fd_dp_a_norm(&problem.gf, &j1);
                let (db_u, db_p) = fd_dlogb(problem, &j1, dual.y);
                c_est = c_est
                    .max(m_inv_norm * (du_a.max_abs() + dp_a) + db_u.abs() + db_p);
            }
        }
        k += 7;
    }
    Ok(4.0 * c_est.max(1.0))
}

fn fd_du_a(gf: &GenFun, jet: &Jet1, h: f64) -> Mat2 {
    let ap = dualmaps::matrix_a(gf, &Jet1::new(jet.x, jet.u + h, jet.p));
    let am = dualmaps::matrix_a(gf, &Jet1::new(jet.x, jet.u - h, jet.p));
    match (ap, am) {
        (Ok(ap), Ok(am)) => (ap - am) * (1.0 / (2.0 * h)),
        _ => Mat2::ZERO,
    }
}

fn fd_dp_a_norm(gf: &GenFun, jet: &Jet1) -> f64 {
    let h = 1e-6 * (1.0 + jet.p.norm());
    let mut total = 0.0f64;
    for e in [Vec2::new(h, 0.0), Vec2::new(0.0, h)] {
        let ap = dualmaps::matrix_a(gf, &Jet1::new(jet.x, jet.u, jet.p + e));
        let am = dualmaps::matrix_a(gf, &Jet1::new(jet.x, jet.u, jet.p - e));
        if let (Ok(ap), Ok(am)) = (ap, am) {
            total += ((ap - am) * (1.0 / (2.0 * h))).max_abs();
        }
    }
    total
}

fn fd_dlogb(problem: &Problem, jet: &Jet1, _y: Vec2) -> (f64, f64) {
    let logb = |j: &Jet1| -> Option<f64> {
        let dual = dualmaps::solve_duals(&problem.gf, j).ok()?;
        Some((dual.det_e.abs() / problem.fstar_eff(dual.y)).ln())
    };
    let h = 1e-6 * (1.0 + jet.u.abs());
    let hu = match (
        logb(&Jet1::new(jet.x, jet.u + h, jet.p)),
        logb(&Jet1::new(jet.x, jet.u - h, jet.p)),
    ) {
        (Some(a), Some(b)) => (a - b) / (2.0 * h),
        _ => 0.0,
    };
    let hp = 1e-6 * (1.0 + jet.p.norm());
    let mut gp = 0.0;
    for e in [Vec2::new(hp, 0.0), Vec2::new(0.0, hp)] {
        if let (Some(a), Some(b)) = (
            logb(&Jet1::new(jet.x, jet.u, jet.p + e)),
            logb(&Jet1::new(jet.x, jet.u, jet.p - e)),
        ) {
            gp += ((a - b) / (2.0 * hp)).abs();
        }
    }
    (hu, gp)
}

/// Assemble the residual and optionally the band Jacobian at the current
/// state. Fails when a node's jet leaves the admissible set.
pub fn assemble(
    state: &SolverState,
    problem: &Problem,
    params: &HomotopyParams,
    want_jacobian: bool,
) -> Result<Assembled> {
    let grid = &problem.grid;
    let n = grid.n_nodes();
    let half_band = 2 * grid.n_theta + 2;
    let mut jac = if want_jacobian { Some(BandMatrix::zeros(n, half_band, half_band)) } else { None };
    let mut residual = vec![0.0; n];
    let mut interior_sup = 0.0f64;
    let mut boundary_sup = 0.0f64;
    let mut min_lambda = f64::INFINITY;
    let mut min_obliq = f64::INFINITY;
    let mut clamp_penalty = 0.0f64;
    let mut max_grad = 0.0f64;
    let mut noise_floor = 0.0f64;
    let pin = state.tau * (1.0 - state.t) + state.eps;
    let bring = grid.n_r - 1;
    for k in 0..n {
        let (ring, col) = grid.ring_col(k);
        let weights = grid.jet_weights(ring, col);
        let mut uval = 0.0;
        let mut du = Vec2::ZERO;
        let mut hess = Mat2::ZERO;
        let mut hess_amp = 0.0f64;
        for (idx, wu, dgrad, dhess) in &weights {
            let v = state.u[*idx];
            uval += wu * v;
            du = du + *dgrad * v;
            hess = hess + *dhess * v;
            hess_amp += dhess.max_abs() * v.abs();
        }
        let x = grid.nodes[k].pos;
        let jet = Jet1::new(x, uval, du);
        max_grad = max_grad.max(du.norm());
        let dual = dualmaps::solve_duals(&problem.gf, &jet)?;
        if ring < bring {
            // interior Monge-Ampere row
            let a = dualmaps::matrix_a_from_dual(&problem.gf, &jet, &dual);
            let m = hess - a;
            let (lo, _) = m.sym_eigenvalues();
            min_lambda = min_lambda.min(lo);
            let (logdet, finv, penalty) = clamped_logdet(m, params.delta_min);
            clamp_penalty += penalty;
            let fs = problem.fstar_eff(dual.y);
            if fs < 1e-8 {
                return Err(Error::domain(format!("target density {fs:.3e} under floor at node {k}")));
            }
            let transported = state.t * problem.f.value(x)
                + (1.0 - state.t) * problem.fstar_eff(state.tu0[k]) * state.det_dtu0[k];
            if transported <= 0.0 {
                return Err(Error::domain(format!("nonpositive transported mass at node {k}")));
            }
            let logb = (dual.det_e.abs() * transported / fs).ln();
            let r = logdet - pin * (uval - state.u0[k]) - logb + state.mu;
            if !r.is_finite() {
                return Err(Error::Continuation {
                    what: format!("non-finite interior residual at node {k}"),
                });
            }
            residual[k] = r;
            interior_sup = interior_sup.max(r.abs());
            noise_floor = noise_floor.max(f64::EPSILON * hess_amp * finv.max_abs());
            if let Some(jacm) = jac.as_mut() {
                // chain rule through (u, Du, D^2u); A- and log B-derivatives
                // by centered differences in the jet
                let hu = 1e-6 * (1.0 + uval.abs());
                let du_a = fd_du_a(&problem.gf, &jet, hu);
                let hp = 1e-6 * (1.0 + du.norm());
                let mut dp_a = [Mat2::ZERO, Mat2::ZERO];
                for (i, e) in [Vec2::new(hp, 0.0), Vec2::new(0.0, hp)].into_iter().enumerate() {
                    let ap = dualmaps::matrix_a(&problem.gf, &Jet1::new(x, uval, du + e));
                    let am = dualmaps::matrix_a(&problem.gf, &Jet1::new(x, uval, du - e));
                    if let (Ok(ap), Ok(am)) = (ap, am) {
                        dp_a[i] = (ap - am) * (1.0 / (2.0 * hp));
                    }
                }
                let logb_at = |j: &Jet1| -> Option<f64> {
                    let d = dualmaps::solve_duals(&problem.gf, j).ok()?;
                    let fs = problem.fstar_eff(d.y);
                    if fs < 1e-8 {
                        return None;
                    }
                    Some((d.det_e.abs() / fs).ln())
                };
                let logb0 = (dual.det_e.abs() / fs).ln();
                let dlogb_u = match (
                    logb_at(&Jet1::new(x, uval + hu, du)),
                    logb_at(&Jet1::new(x, uval - hu, du)),
                ) {
                    (Some(a), Some(b)) => (a - b) / (2.0 * hu),
                    (Some(a), None) => (a - logb0) / hu,
                    (None, Some(b)) => (logb0 - b) / hu,
                    _ => 0.0,
                };
                let mut dlogb_p = Vec2::ZERO;
                for (i, e) in [Vec2::new(hp, 0.0), Vec2::new(0.0, hp)].into_iter().enumerate() {
                    let d = match (
                        logb_at(&Jet1::new(x, uval, du + e)),
                        logb_at(&Jet1::new(x, uval, du - e)),
                    ) {
                        (Some(a), Some(b)) => (a - b) / (2.0 * hp),
                        (Some(a), None) => (a - logb0) / hp,
                        (None, Some(b)) => (logb0 - b) / hp,
                        _ => 0.0,
                    };
                    if i == 0 {
                        dlogb_p.x = d;
                    } else {
                        dlogb_p.y = d;
                    }
                }
                // dR = Finv : dM - F:D_uA du - F:D_pA . dDu - pin du - dlogB
                let r_u = -(finv.a * du_a.a + 2.0 * finv.b * du_a.b + finv.d * du_a.d)
                    - pin
                    - dlogb_u;
                let r_p = Vec2::new(
                    -(finv.a * dp_a[0].a + 2.0 * finv.b * dp_a[0].b + finv.d * dp_a[0].d)
                        - dlogb_p.x,
                    -(finv.a * dp_a[1].a + 2.0 * finv.b * dp_a[1].b + finv.d * dp_a[1].d)
                        - dlogb_p.y,
                );
                for (idx, wu, dgrad, dhess) in &weights {
                    let coeff = finv.a * dhess.a
                        + finv.b * dhess.b
                        + finv.c * dhess.c
                        + finv.d * dhess.d
                        + r_u * wu
                        + r_p.dot(*dgrad);
                    if coeff != 0.0 {
                        jacm.add(k, *idx, coeff);
                    }
                }
            }
        } else {
            // oblique boundary row
            let (phi, dphi, _) = problem.omega_star.phi(dual.y);
            let g_p = dual.e_inv.transpose().mul_vec(dphi);
            let gamma = problem.omega.boundary_point(grid.nodes[k].theta).normal;
            let obliq = g_p.dot(gamma);
            min_obliq = min_obliq.min(obliq);
            let r = phi - (1.0 - state.t) * state.r0[col];
            if !r.is_finite() {
                return Err(Error::Continuation {
                    what: format!("non-finite boundary residual at node {k}"),
                });
            }
            residual[k] = r;
            boundary_sup = boundary_sup.max(r.abs());
            if let Some(jacm) = jac.as_mut() {
                let yd = dualmaps::y_derivatives(&problem.gf, x, &dual)?;
                let g_u = dphi.dot(yd.y_u);
                for (idx, wu, dgrad, _) in &weights {
                    let coeff = g_u * wu + g_p.dot(*dgrad);
                    if coeff != 0.0 {
                        jacm.add(k, *idx, coeff);
                    }
                }
            }
        }
    }
    Ok(Assembled {
        residual,
        interior_sup,
        boundary_sup,
        min_lambda,
        min_obliqueness: min_obliq,
        clamp_penalty,
        max_grad,
        noise_floor,
        jacobian: jac,
    })
}

/// Residual-only evaluation (spec entry point).
pub fn residual(
    state: &SolverState,
    problem: &Problem,
    params: &HomotopyParams,
) -> Result<Assembled> {
    assemble(state, problem, params, false)
}

#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub residual_before: f64,
    pub residual_after: f64,
    pub step_scale: f64,
    pub clamp_penalty: f64,
    pub min_obliqueness: f64,
    /// False when the watchdog accepted a residual-increasing step (the
    /// iterate travels along a soft solution-family mode and the next
    /// corrections must pay it back; see `solve_stage`).
    pub monotone: bool,
}

/// One damped Newton step in place. Backtracks on the merged residual
/// sup-norm; when no damping achieves monotone decrease (the signature of
/// motion along a curved near-null family), the best probed trial is
/// accepted non-monotonically within a bounded growth factor. Fails on
/// linear-solve breakdown, a fully stuck line search, or obliqueness loss.
pub fn newton_step(
    state: &mut SolverState,
    problem: &Problem,
    params: &HomotopyParams,
) -> Result<StepReport> {
    let asm = assemble(state, problem, params, true)?;
    if asm.min_obliqueness <= 0.0 {
        return Err(Error::Continuation {
            what: format!("obliqueness lost: min G_p . gamma = {:.3e}", asm.min_obliqueness),
        });
    }
    let before = asm.merged_sup();
    let mut band = asm.jacobian.expect("assembled with jacobian");
    let n = band.n();
    let mut rhs = asm.residual.clone();
    for i in 0..n {
        let s = band.max_abs_row(i);
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::LinearSolve { what: format!("empty Jacobian row {i}") });
        }
        band.scale_row(i, 1.0 / s);
        rhs[i] = -rhs[i] / s;
    }
    let lu = band.factor()?;
    lu.solve(&mut rhs)?;
    let mut alpha = 1.0f64;
    let mut best: Option<(Vec<f64>, f64, f64, f64, f64)> = None;
    while alpha >= 1e-12 {
        let mut trial = state.clone();
        for (uv, dv) in trial.u.iter_mut().zip(&rhs) {
            *uv += alpha * dv;
        }
        if let Ok(trial_asm) = assemble(&trial, problem, params, false) {
            let m = trial_asm.merged_sup();
            if m <= before * (1.0 - 1e-4 * alpha) {
                state.u = trial.u;
                return Ok(StepReport {
                    residual_before: before,
                    residual_after: m,
                    step_scale: alpha,
                    clamp_penalty: trial_asm.clamp_penalty,
                    min_obliqueness: trial_asm.min_obliqueness,
                    monotone: true,
                });
            }
            if trial_asm.min_obliqueness > 0.0
                && best.as_ref().map_or(true, |(_, bm, _, _, _)| m < *bm)
            {
                best = Some((
                    trial.u,
                    m,
                    alpha,
                    trial_asm.clamp_penalty,
                    trial_asm.min_obliqueness,
                ));
            }
        }
        alpha *= 0.5;
    }
    match best {
        Some((u, m, a, penalty, obliq)) if m <= 10.0 * before => {
            state.u = u;
            Ok(StepReport {
                residual_before: before,
                residual_after: m,
                step_scale: a,
                clamp_penalty: penalty,
                min_obliqueness: obliq,
                monotone: false,
            })
        }
        _ => Err(Error::LineSearchStall {
            what: format!("residual {before:.3e} at t = {}, eps = {}", state.t, state.eps),
        }),
    }
}

/// Newton-solve the current (t, eps) stage to tolerance (or down to the
/// residual-evaluation noise floor, whichever is larger). A watchdog
/// permits a short burst of non-monotone steps — needed to traverse
/// curved soft-mode valleys — reverting to the best iterate if the burst
/// does not pay off.
fn solve_stage(
    state: &mut SolverState,
    problem: &Problem,
    params: &HomotopyParams,
) -> Result<(usize, Assembled)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut nonmono_run = 0usize;
    for it in 0..params.max_newton_iters {
        let asm = assemble(state, problem, params, false)?;
        let m = asm.merged_sup();
        if m <= asm.tol_effective(params.newton_tol) {
            return Ok((it, asm));
        }
        match &mut best {
            Some((bu, bm)) if m >= *bm => {
                nonmono_run += 1;
                if nonmono_run > 3 {
                    // watchdog expired: restore the best iterate seen
                    state.u = bu.clone();
                    let asm = assemble(state, problem, params, false)?;
                    if asm.merged_sup() <= asm.tol_effective(params.newton_tol) {
                        return Ok((it, asm));
                    }
                    return Err(Error::Continuation {
                        what: format!(
                            "Newton watchdog expired at t = {}, eps = {}: residual {:.3e}",
                            state.t, state.eps, asm.merged_sup()
                        ),
                    });
                }
            }
            _ => {
                best = Some((state.u.clone(), m));
                nonmono_run = 0;
            }
        }
        match newton_step(state, problem, params) {
            Ok(_) => {}
            Err(Error::LineSearchStall { .. })
                if m <= 32.0 * asm.noise_floor.max(params.newton_tol) =>
            {
                // the line search cannot certify progress inside the noise
                // band; the stage is as converged as f64 allows
                return Ok((it, asm));
            }
            Err(e) => return Err(e),
        }
    }
    // restore the best iterate before judging
    if let Some((bu, _)) = best {
        state.u = bu;
    }
    let asm = assemble(state, problem, params, false)?;
    if asm.merged_sup() <= asm.tol_effective(params.newton_tol) {
        Ok((params.max_newton_iters, asm))
    } else {
        Err(Error::Continuation {
            what: format!(
                "Newton did not reach tolerance at t = {}, eps = {}: residual {:.3e}",
                state.t,
                state.eps,
                asm.merged_sup()
            ),
        })
    }
}

/// Bordered Newton for the eps-stages at t = 1.
///
/// As eps falls, the pinned equation's Jacobian degenerates along the
/// tangent of the solution family (heights trade against shape, a
/// genuine continuum of solutions), and plain Newton crawls. The stage
/// is therefore solved with
/// one extra scalar unknown mu on the interior rows and the limit
/// selector `integral of (u - u0) f = 0` as the extra equation — the
/// first-order condition the exponential pin enforces as eps tends to
/// zero. The bordered Jacobian stays uniformly invertible through
/// eps = eps_min; mu converges to the O(h^2) compatibility defect of the
/// discrete mass balance.
fn bordered_stage(
    state: &mut SolverState,
    problem: &Problem,
    params: &HomotopyParams,
    selector: &[f64],
) -> Result<(usize, Assembled)> {
    let grid = &problem.grid;
    let n = grid.n_nodes();
    let bring = grid.n_r - 1;
    let constraint = |s: &SolverState| -> f64 {
        s.u.iter().zip(&s.u0).zip(selector).map(|((u, u0), a)| a * (u - u0)).sum()
    };
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut nonmono_run = 0usize;
    for it in 0..params.max_newton_iters {
        let mut asm = assemble(state, problem, params, true)?;
        if asm.min_obliqueness <= 0.0 {
            return Err(Error::Continuation {
                what: format!("obliqueness lost in eps stage: {:.3e}", asm.min_obliqueness),
            });
        }
        let r_con = constraint(state);
        let merged = asm.merged_sup().max(r_con.abs());
        if merged <= asm.tol_effective(params.newton_tol) {
            return Ok((it, asm));
        }
        match &mut best {
            Some((bu, bmu, bm)) if merged >= *bm => {
                nonmono_run += 1;
                if nonmono_run > 3 {
                    state.u = bu.clone();
                    state.mu = *bmu;
                    let asm = assemble(state, problem, params, false)?;
                    let m = asm.merged_sup().max(constraint(state).abs());
                    if m <= asm.tol_effective(params.newton_tol) {
                        return Ok((it, asm));
                    }
                    return Err(Error::Continuation {
                        what: format!(
                            "bordered watchdog expired at eps = {}: residual {m:.3e}",
                            state.eps
                        ),
                    });
                }
            }
            _ => {
                best = Some((state.u.clone(), state.mu, merged));
                nonmono_run = 0;
            }
        }
        // factor the main block once, solve for both right-hand sides
        let mut band = asm.jacobian.take().expect("assembled with jacobian");
        let mut rhs1 = asm.residual.clone();
        let mut rhs2 = vec![0.0; n];
        for k in 0..n {
            let (ring, _) = grid.ring_col(k);
            rhs2[k] = if ring < bring { -1.0 } else { 0.0 };
            rhs1[k] = -rhs1[k];
        }
        for i in 0..n {
            let s = band.max_abs_row(i);
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::LinearSolve { what: format!("empty Jacobian row {i}") });
            }
            band.scale_row(i, 1.0 / s);
            rhs1[i] /= s;
            rhs2[i] /= s;
        }
        let lu = band.factor()?;
        lu.solve(&mut rhs1)?;
        lu.solve(&mut rhs2)?;
        let a_dot = |v: &[f64]| -> f64 { selector.iter().zip(v).map(|(a, x)| a * x).sum() };
        let denom = a_dot(&rhs2);
        if denom.abs() < 1e-300 {
            return Err(Error::Degenerate {
                what: "bordered system: selector orthogonal to the mu response".into(),
            });
        }
        let dmu = (-r_con - a_dot(&rhs1)) / denom;
        // line search on the bordered merged norm
        let mut alpha = 1.0f64;
        let mut accepted = false;
        let mut fallback: Option<(Vec<f64>, f64, f64)> = None;
        while alpha >= 1e-12 {
            let mut trial = state.clone();
            for k in 0..n {
                trial.u[k] += alpha * (rhs1[k] + dmu * rhs2[k]);
            }
            trial.mu += alpha * dmu;
            if let Ok(tasm) = assemble(&trial, problem, params, false) {
                let tm = tasm.merged_sup().max(constraint(&trial).abs());
                if tm <= merged * (1.0 - 1e-4 * alpha) {
                    state.u = trial.u;
                    state.mu = trial.mu;
                    accepted = true;
                    break;
                }
                if tasm.min_obliqueness > 0.0
                    && fallback.as_ref().map_or(true, |(_, _, fm)| tm < *fm)
                {
                    fallback = Some((trial.u, trial.mu, tm));
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            match fallback {
                Some((u, mu, fm)) if fm <= 10.0 * merged => {
                    state.u = u;
                    state.mu = mu;
                }
                _ => {
                    if merged <= 32.0 * asm.noise_floor.max(params.newton_tol) {
                        return Ok((it, asm));
                    }
                    return Err(Error::LineSearchStall {
                        what: format!("bordered stage at eps = {}: residual {merged:.3e}", state.eps),
                    });
                }
            }
        }
    }
    if let Some((bu, bmu, _)) = best {
        state.u = bu;
        state.mu = bmu;
    }
    let asm = assemble(state, problem, params, false)?;
    let m = asm.merged_sup().max(constraint(state).abs());
    if m <= asm.tol_effective(params.newton_tol) {
        Ok((params.max_newton_iters, asm))
    } else {
        Err(Error::Continuation {
            what: format!(
                "bordered Newton did not converge at eps = {}: residual {m:.3e}",
                state.eps
            ),
        })
    }
}

fn guard_state(state: &SolverState, problem: &Problem, asm: &Assembled) -> Result<()> {
    let guard = problem.k0 * (1.0 + 1e-8) + 1e-8;
    if asm.max_grad > guard {
        return Err(Error::RangeCondition {
            what: format!("gradient bound violated: sup |Du| = {:.6} > K0 = {:.6}", asm.max_grad, problem.k0),
        });
    }
    let (umin, umax) = state
        .u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !problem.j0.contains(umin) || !problem.j0.contains(umax) {
        return Err(Error::RangeCondition {
            what: format!("height range [{umin:.4}, {umax:.4}] escaped J0 = {:?}", problem.j0),
        });
    }
    Ok(())
}

fn push_trace(trace: &mut Trace, state: &SolverState, iters: usize, asm: &Assembled) {
    let drift = state
        .u
        .iter()
        .zip(&state.u0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    trace.rows.push(TraceRow {
        t: state.t,
        eps: state.eps,
        newton_iters: iters,
        interior_sup: asm.interior_sup,
        boundary_sup: asm.boundary_sup,
        min_lambda: asm.min_lambda,
        min_obliqueness: asm.min_obliqueness,
        clamp_penalty: asm.clamp_penalty,
        max_grad: asm.max_grad,
        drift,
    });
}

/// Full continuation: march t from 0 to 1 adaptively, then drive eps to
/// its floor, re-solving at each stage.
pub fn continuation_solve(
    problem: &Problem,
    u0: Vec<f64>,
    params: &HomotopyParams,
) -> Result<(SolverState, Trace)> {
    let mut state = init_state(problem, u0, params)?;
    let mut trace = Trace {
        tau: state.tau,
        fstar_scale: problem.fstar_scale,
        ..Default::default()
    };
    // t = 0: the pin field solves the stage identically; still iterate to
    // tolerance so later stages start from a certified state
    let (iters, asm) = solve_stage(&mut state, problem, params)?;
    guard_state(&state, problem, &asm)?;
    push_trace(&mut trace, &state, iters, &asm);
    let mut dt = params.dt0;
    while state.t < 1.0 {
        let t_prev = state.t;
        let u_prev = state.u.clone();
        state.t = (t_prev + dt).min(1.0);
        match solve_stage(&mut state, problem, params).and_then(|(iters, asm)| {
            guard_state(&state, problem, &asm)?;
            Ok((iters, asm))
        }) {
            Ok((iters, asm)) => {
                push_trace(&mut trace, &state, iters, &asm);
                if iters <= params.fast_iters {
                    dt *= params.dt_growth;
                }
            }
            Err(e) => {
                state.t = t_prev;
                state.u = u_prev;
                dt *= 0.5;
                trace.messages.push(format!("step to t halved (dt = {dt:.3e}): {e}"));
                if dt < params.dt_min {
                    return Err(Error::Continuation {
                        what: format!("t-step underflow below {:.1e}: {e}", params.dt_min),
                    });
                }
            }
        }
    }
    // eps reduction at t = 1: each rung of the geometric ladder runs the
    // bordered Newton, which stays well-conditioned as the pin fades
    let selector: Vec<f64> = {
        let total: f64 = problem
            .grid
            .nodes
            .iter()
            .map(|n| problem.f.value(n.pos) * n.cell_measure)
            .sum();
        problem
            .grid
            .nodes
            .iter()
            .map(|n| problem.f.value(n.pos) * n.cell_measure / total)
            .collect()
    };
    let mut factor = params.eps_factor;
    while state.eps > params.eps_min {
        let next = (state.eps * factor).max(params.eps_min);
        let u_prev = state.u.clone();
        let mu_prev = state.mu;
        let eps_prev = state.eps;
        state.eps = next;
        match bordered_stage(&mut state, problem, params, &selector).and_then(|(iters, asm)| {
            guard_state(&state, problem, &asm)?;
            Ok((iters, asm))
        }) {
            Ok((iters, asm)) => {
                push_trace(&mut trace, &state, iters, &asm);
            }
            Err(e) => {
                state.u = u_prev;
                state.mu = mu_prev;
                state.eps = eps_prev;
                factor = factor.sqrt();
                trace.messages.push(format!("eps step relaxed to x{factor:.4}: {e}"));
                if factor > 0.999 {
                    return Err(Error::Continuation {
                        what: format!("eps reduction stalled at eps = {eps_prev:.3e}: {e}"),
                    });
                }
            }
        }
    }
    trace.messages.push(format!("compatibility multiplier mu = {:.6e}", state.mu));
    let final_asm = assemble(&state, problem, params, false)?;
    if final_asm.min_lambda <= 0.0 {
        return Err(Error::Ellipticity {
            what: format!("final state not elliptic: min lambda = {:.3e}", final_asm.min_lambda),
        });
    }
    if final_asm.min_obliqueness <= 0.0 {
        return Err(Error::Continuation { what: "final state lost obliqueness".into() });
    }
    bijectivity_check(&state, problem, &mut trace)?;
    Ok((state, trace))
}

/// A posteriori bijectivity of the solved map: positive Jacobian at every
/// node (ellipticity gives it) and boundary images on the target boundary.
fn bijectivity_check(state: &SolverState, problem: &Problem, trace: &mut Trace) -> Result<()> {
    let grid = &problem.grid;
    let tmap = dualmaps::map_t(&problem.gf, grid, &state.u)?;
    if !tmap.flagged.is_empty() {
        return Err(Error::Ellipticity {
            what: format!("{} nodes with nonpositive mapping Jacobian", tmap.flagged.len()),
        });
    }
    let mut worst_bc = 0.0f64;
    for col in 0..grid.n_theta {
        let k = grid.idx(grid.n_r - 1, col);
        worst_bc = worst_bc.max(problem.omega_star.phi(tmap.tu[k]).0.abs());
    }
    trace
        .messages
        .push(format!("boundary image max |phi*| = {worst_bc:.3e}"));
    Ok(())
}

/// Homotopy-family residual in the prescribed-Jacobian form (the identity
/// cross-check against the Monge-Ampere form used by the solver).
pub fn jacobian_form_residual(
    state: &SolverState,
    problem: &Problem,
) -> Result<Vec<f64>> {
    let grid = &problem.grid;
    let pin = state.tau * (1.0 - state.t) + state.eps;
    let bring = grid.n_r - 1;
    let mut out = Vec::new();
    for k in 0..grid.n_nodes() {
        let (ring, col) = grid.ring_col(k);
        if ring >= bring {
            continue;
        }
        let jet = grid.field_jet(&state.u, ring, col);
        let x = grid.nodes[k].pos;
        let j1 = Jet1::new(x, jet.u, jet.du);
        let dual = dualmaps::solve_duals(&problem.gf, &j1)?;
        let a = dualmaps::matrix_a_from_dual(&problem.gf, &j1, &dual);
        let det_dtu = (jet.hess - a).det() / dual.det_e;
        let transported = state.t * problem.f.value(x)
            + (1.0 - state.t) * problem.fstar_eff(state.tu0[k]) * state.det_dtu0[k];
        let rhs = (pin * (jet.u - state.u0[k]) - state.mu).exp() * transported
            / problem.fstar_eff(dual.y);
        out.push(det_dtu.abs() - rhs);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub n_probes: usize,
    pub n_converged: usize,
    pub max_distance: f64,
    /// Set when tau + eps falls under the estimated linearization bound.
    pub insufficient_pinning: bool,
}

/// Local-uniqueness probe at t = 0: perturbed starts must flow back to the
/// pin field under Newton.
pub fn uniqueness_probe(
    problem: &Problem,
    state0: &SolverState,
    params: &HomotopyParams,
    n_probes: usize,
    amplitude: f64,
    seed: u64,
) -> Result<ProbeReport> {
    use rand::Rng;
    let c_est = estimate_tau(problem, &state0.u0)? / 4.0;
    let insufficient = state0.tau * (1.0 - state0.t) + state0.eps < c_est;
    let mut rng = crate::sampling::rng_from(seed, 0x50524f42);
    let mut max_distance = 0.0f64;
    let mut n_converged = 0usize;
    for _ in 0..n_probes.max(1) {
        // smooth random perturbation field (low-order trigonometric), so
        // the perturbed start keeps finite ellipticity margins
        let c: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let field = |p: Vec2| {
            c[0] + c[1] * p.x + c[2] * p.y
                + c[3] * (1.7 * p.x).sin() * (1.3 * p.y).cos()
                + c[4] * p.x * p.y
                + c[5] * (2.1 * p.y).sin()
        };
        let raw: Vec<f64> = problem.grid.nodes.iter().map(|n| field(n.pos)).collect();
        let sup = raw.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
        let mut probe = state0.clone();
        if amplitude > 0.0 {
            for (u, r) in probe.u.iter_mut().zip(&raw) {
                *u += amplitude * r / sup;
            }
        }
        let mut converged = false;
        for _ in 0..params.max_newton_iters {
            let asm = assemble(&probe, problem, params, false)?;
            if asm.merged_sup() <= asm.tol_effective(params.newton_tol) {
                converged = true;
                break;
            }
            match newton_step(&mut probe, problem, params) {
                Ok(_) => {}
                Err(Error::LineSearchStall { .. })
                    if asm.merged_sup() <= 32.0 * asm.noise_floor.max(params.newton_tol) =>
                {
                    converged = true;
                    break;
                }
                Err(_) => break,
            }
        }
        let dist = probe
            .u
            .iter()
            .zip(&state0.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        max_distance = max_distance.max(dist);
        if converged && dist < 1e-8 {
            n_converged += 1;
        }
    }
    Ok(ProbeReport {
        n_probes,
        n_converged,
        max_distance,
        insufficient_pinning: insufficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gconvex::{build_initial, GRho};

    fn unit_disc() -> DomainSpec {
        DomainSpec::disc(Vec2::ZERO, 1.0).unwrap()
    }

    fn ot_problem(n: usize) -> (Problem, Vec<f64>) {
        let omega = unit_disc();
        let grid = Grid::build(&omega, n, n).unwrap();
        let (problem, _) = Problem::new(
            GenFun::QuadraticOt,
            omega.clone(),
            unit_disc(),
            grid,
            Density::Constant(1.0),
            Density::Constant(1.0),
            0.5,
        )
        .unwrap();
        let seed = GRho::new(GenFun::QuadraticOt, Vec2::ZERO, 0.0, 0.3);
        let u0: Vec<f64> =
            problem.grid.nodes.iter().map(|nd| seed.eval(nd.pos).unwrap()).collect();
        (problem, u0)
    }

    #[test]
    fn t0_residual_identically_zero() {
        let (problem, u0) = ot_problem(16);
        let params = HomotopyParams::default();
        let state = init_state(&problem, u0, &params).unwrap();
        let asm = residual(&state, &problem, &params).unwrap();
        assert!(asm.interior_sup < 1e-10, "interior sup {}", asm.interior_sup);
        assert!(asm.boundary_sup < 1e-12, "boundary sup {}", asm.boundary_sup);

        // reflection pin field: same algebraic identity
        let omega = unit_disc();
        let grid = Grid::build(&omega, 12, 16).unwrap();
        let (rp, _) = Problem::new(
            GenFun::reflection_flat(0.0),
            omega.clone(),
            DomainSpec::disc(Vec2::ZERO, 1.5).unwrap(),
            grid.clone(),
            Density::Constant(1.0),
            Density::Constant(1.0),
            0.0,
        )
        .unwrap();
        let (field, _, _) = build_initial(
            &GenFun::reflection_flat(0.0),
            &omega,
            &DomainSpec::disc(Vec2::ZERO, 1.5).unwrap(),
            Vec2::ZERO,
            -5.5,
            0.05,
            &grid,
            0.0,
        )
        .unwrap();
        let state = init_state(&rp, field.values, &params).unwrap();
        let asm = residual(&state, &rp, &params).unwrap();
        assert!(asm.interior_sup < 1e-10, "interior sup {}", asm.interior_sup);
    }

    #[test]
    fn quadratic_ot_exact_solution_residual() {
        // u = |x|^2/2 at t = 1: interior residual reduces to eps (u - u0)
        let (problem, u0) = ot_problem(16);
        let params = HomotopyParams::default();
        let mut state = init_state(&problem, u0, &params).unwrap();
        state.t = 1.0;
        state.u = problem.grid.nodes.iter().map(|n| 0.5 * n.pos.norm_sq()).collect();
        let asm = residual(&state, &problem, &params).unwrap();
        // residual = -eps (u - u0): bounded by eps times the field gap
        let gap = state
            .u
            .iter()
            .zip(&state.u0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(asm.interior_sup <= state.eps * gap + 1e-9, "{} vs {}", asm.interior_sup, state.eps * gap);
        assert!(asm.boundary_sup < 1e-9);
    }

    #[test]
    fn small_identity_transport_converges() {
        let (problem, u0) = ot_problem(20);
        let params = HomotopyParams::default();
        let (state, trace) = continuation_solve(&problem, u0, &params).unwrap();
        assert!((state.t - 1.0).abs() < 1e-14);
        assert!(state.eps <= params.eps_min * (1.0 + 1e-12));
        // Du should match the identity map
        let mut worst = 0.0f64;
        for k in 0..problem.grid.n_nodes() {
            let (ring, col) = problem.grid.ring_col(k);
            let jet = problem.grid.field_jet(&state.u, ring, col);
            worst = worst.max((jet.du - problem.grid.nodes[k].pos).norm());
        }
        assert!(worst < 5e-3, "gradient error {worst}");
        assert!(!trace.rows.is_empty());
        // ellipticity was never lost silently
        for row in &trace.rows {
            assert!(row.min_lambda > 0.0);
            assert!(row.min_obliqueness > 0.0);
        }
    }

    #[test]
    fn jacobian_form_identity_at_convergence() {
        let (problem, u0) = ot_problem(16);
        let params = HomotopyParams::default();
        let (state, _) = continuation_solve(&problem, u0, &params).unwrap();
        let asm = residual(&state, &problem, &params).unwrap();
        let form = jacobian_form_residual(&state, &problem).unwrap();
        let sup = form.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(sup <= 10.0 * asm.interior_sup.max(params.newton_tol), "{sup}");
    }

    #[test]
    fn additive_pin_shift_moves_solution_by_at_most_c() {
        let (problem, u0) = ot_problem(12);
        let params = HomotopyParams::default();
        let state_a = init_state(&problem, u0.clone(), &params).unwrap();
        let c = 0.37;
        let shifted: Vec<f64> = u0.iter().map(|v| v + c).collect();
        let state_b = init_state(&problem, shifted, &params).unwrap();
        // solve both at t = 0.5
        let mut a = state_a;
        let mut b = state_b;
        for s in [&mut a, &mut b] {
            s.t = 0.5;
            solve_stage(s, &problem, &params).unwrap();
        }
        let mut max_shift = 0.0f64;
        for k in 0..problem.grid.n_nodes() {
            max_shift = max_shift.max((b.u[k] - a.u[k]).abs());
        }
        assert!(max_shift <= c * (1.0 + 1e-6), "shift {max_shift} vs c {c}");
    }

    #[test]
    fn probe_returns_to_pin_and_flags_weak_tau() {
        let (problem, u0) = ot_problem(12);
        let params = HomotopyParams::default();
        let state = init_state(&problem, u0.clone(), &params).unwrap();
        let report = uniqueness_probe(&problem, &state, &params, 3, 1e-3, 5).unwrap();
        assert_eq!(report.n_converged, 3, "max distance {}", report.max_distance);
        assert!(report.max_distance < 1e-8);
        assert!(!report.insufficient_pinning);

        // zero amplitude needs no iterations at all
        let report = uniqueness_probe(&problem, &state, &params, 1, 0.0, 6).unwrap();
        assert_eq!(report.n_converged, 1);

        // tau = 0 with tiny eps must be flagged as weak pinning
        let weak_params = HomotopyParams {
            tau_override: Some(0.0),
            ..HomotopyParams::default()
        };
        let mut weak = init_state(&problem, u0, &weak_params).unwrap();
        weak.eps = 1e-6;
        let report = uniqueness_probe(&problem, &weak, &weak_params, 2, 1e-3, 7).unwrap();
        assert!(report.insufficient_pinning);
    }
}
