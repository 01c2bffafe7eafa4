//! Dual quantities generated by g: the mapping Y, dual function Z, matrix
//! E, the augmenting matrix A, the right-hand-side factor B, the dual map
//! Q, the dual generating function g*, and the discrete T-map.
//!
//! Given a one-jet (x, u, p) the generating equations
//! `g(x, Y, Z) = u`, `g_x(x, Y, Z) = p` determine (Y, Z). The flat-target
//! models admit closed-form duals; everything else goes through a damped
//! Newton solve on the 3-dimensional system, seeded from the flat formula
//! with the profile frozen at x.

use crate::density::Density;
use crate::domains::{DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::genfun::{GJet, GenFun};
use crate::math::{solve3, Mat2, Vec2};

/// A one-jet (x, u, p) of a candidate solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet1 {
    pub x: Vec2,
    pub u: f64,
    pub p: Vec2,
}

impl Jet1 {
    pub fn new(x: Vec2, u: f64, p: Vec2) -> Self {
        Jet1 { x, u, p }
    }
}

/// Everything derived from solving the generating equations at one jet.
#[derive(Clone, Copy, Debug)]
pub struct DualEval {
    pub y: Vec2,
    pub z: f64,
    pub e: Mat2,
    pub e_inv: Mat2,
    pub det_e: f64,
    /// A(x, u, p) = g_xx(x, Y, Z).
    pub a: Mat2,
    /// g-jet at the dual point (x, Y, Z).
    pub gjet: GJet,
}

/// First derivatives of (Y, Z) in (u, p), from the linearized generating
/// equations. `y_p` equals E^{-1}.
#[derive(Clone, Copy, Debug)]
pub struct YDerivs {
    pub y_p: Mat2,
    pub z_p: Vec2,
    pub y_u: Vec2,
    pub z_u: f64,
}

const DUAL_RESIDUAL_TOL: f64 = 1e-11;

fn residual_norm(gjet: &GJet, jet: &Jet1) -> f64 {
    (gjet.g_x - jet.p).norm() + (gjet.g - jet.u).abs()
}

fn finish(gf: &GenFun, jet: &Jet1, y: Vec2, z: f64) -> Result<DualEval> {
    let gjet = gf.eval(jet.x, y, z)?;
    let res = residual_norm(&gjet, jet);
    let scale = 1.0 + jet.u.abs() + jet.p.norm();
    if res > 100.0 * DUAL_RESIDUAL_TOL * scale {
        return Err(Error::JetOutsideU {
            what: format!("generating-equation residual {res:.3e} at x = {:?}", jet.x),
        });
    }
    let (e, e_inv, det_e) = e_from_gjet(&gjet)?;
    Ok(DualEval { y, z, e, e_inv, det_e, a: gjet.g_xx, gjet })
}

fn e_from_gjet(gjet: &GJet) -> Result<(Mat2, Mat2, f64)> {
    let e = gjet.g_xy - Mat2::outer(gjet.g_xz, gjet.g_y) * (1.0 / gjet.g_z);
    let det_e = e.det();
    if det_e.abs() < 1e-12 {
        return Err(Error::Degenerate { what: format!("det E = {det_e:.3e}") });
    }
    let e_inv = e.inverse().ok_or(Error::Degenerate { what: "E not invertible".into() })?;
    Ok((e, e_inv, det_e))
}

/// Closed-form dual for the flat-target models; None when no closed form
/// applies (non-constant profile).
fn closed_form_dual(gf: &GenFun, jet: &Jet1) -> Option<Result<(Vec2, f64)>> {
    match gf {
        GenFun::QuadraticOt => Some(Ok((jet.p, jet.x.dot(jet.p) - jet.u))),
        GenFun::Reflection { profile } => {
            let phi = profile.constant_value()?;
            let p2 = jet.p.norm_sq();
            if p2 >= 1.0 || jet.u <= phi {
                return Some(Err(Error::JetOutsideU {
                    what: format!(
                        "flat reflection needs |p| < 1 and u > {phi}; got |p| = {:.4}, u = {:.4}",
                        p2.sqrt(),
                        jet.u
                    ),
                }));
            }
            let z = 2.0 * (phi - jet.u) / (1.0 - p2);
            Some(Ok((jet.x - jet.p * z, z)))
        }
        GenFun::Refraction { kappa, profile } => {
            let phi = profile.constant_value()?;
            let w2 = 1.0 + (1.0 - kappa * kappa) * jet.p.norm_sq();
            if w2 <= 0.0 || jet.u >= phi {
                return Some(Err(Error::JetOutsideU {
                    what: format!(
                        "flat refraction needs (kappa^2-1)|p|^2 < 1 and u < {phi}; got u = {:.4}",
                        jet.u
                    ),
                }));
            }
            let w = w2.sqrt();
            let k2m1 = kappa * kappa - 1.0;
            let z = k2m1.abs() * (phi - jet.u) * w / (1.0 + kappa * w);
            let y = jet.x + jet.p * (k2m1.signum() * z / w);
            Some(Ok((y, z)))
        }
    }
}

/// Solve the generating equations for (Y, Z) at a jet. Closed forms for
/// the flat-target models, damped Newton otherwise.
pub fn solve_duals(gf: &GenFun, jet: &Jet1) -> Result<DualEval> {
    match closed_form_dual(gf, jet) {
        Some(yz) => {
            let (y, z) = yz?;
            finish(gf, jet, y, z)
        }
        None => solve_duals_newton(gf, jet),
    }
}

/// Damped Newton on (y, z), seeded from the flat-target closed form with
/// the profile frozen at Phi(x). Exposed separately so tests can compare
/// the iterative route against the closed forms.
pub fn solve_duals_newton(gf: &GenFun, jet: &Jet1) -> Result<DualEval> {
    let frozen = match gf {
        GenFun::QuadraticOt => GenFun::QuadraticOt,
        GenFun::Reflection { profile } => {
            GenFun::reflection_flat(profile.value(jet.x))
        }
        GenFun::Refraction { kappa, profile } => {
            GenFun::refraction_flat(*kappa, profile.value(jet.x))
        }
    };
    let seed = closed_form_dual(&frozen, jet)
        .expect("frozen profile is constant")
        .map_err(|e| Error::JetOutsideU { what: format!("seed construction failed: {e}") })?;
    let (mut y, mut z) = seed;
    let scale = 1.0 + jet.u.abs() + jet.p.norm();
    let mut gjet = gf.eval(jet.x, y, z).map_err(|e| Error::JetOutsideU {
        what: format!("seed outside admissible set: {e}"),
    })?;
    let mut res = residual_norm(&gjet, jet);
    for _ in 0..60 {
        if res <= DUAL_RESIDUAL_TOL * scale {
            break;
        }
        let j3 = [
            [gjet.g_xy.a, gjet.g_xy.b, gjet.g_xz.x],
            [gjet.g_xy.c, gjet.g_xy.d, gjet.g_xz.y],
            [gjet.g_y.x, gjet.g_y.y, gjet.g_z],
        ];
        let rhs = [jet.p.x - gjet.g_x.x, jet.p.y - gjet.g_x.y, jet.u - gjet.g];
        let step = solve3(j3, rhs).ok_or(Error::Degenerate {
            what: "singular dual Newton system (g_z det E = 0)".into(),
        })?;
        let mut alpha = 1.0;
        let mut advanced = false;
        while alpha > 1e-12 {
            let y_try = y + Vec2::new(step[0], step[1]) * alpha;
            let z_try = z + step[2] * alpha;
            if let Ok(gj) = gf.eval(jet.x, y_try, z_try) {
                let r = residual_norm(&gj, jet);
                if r < res * (1.0 - 1e-4 * alpha) {
                    y = y_try;
                    z = z_try;
                    gjet = gj;
                    res = r;
                    advanced = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !advanced {
            return Err(Error::JetOutsideU {
                what: format!("dual Newton stagnated at residual {res:.3e}"),
            });
        }
    }
    if res > DUAL_RESIDUAL_TOL * scale {
        return Err(Error::JetOutsideU {
            what: format!("dual Newton did not converge: residual {res:.3e}"),
        });
    }
    finish(gf, jet, y, z)
}

/// A(x, u, p): closed-form expressions for the optical models
/// (1/Z times the identity for reflection; the anisotropic refraction
/// form), g_xx at the dual point in general. The two routes agree to
/// rounding; tests assert it.
pub fn matrix_a(gf: &GenFun, jet: &Jet1) -> Result<Mat2> {
    let dual = solve_duals(gf, jet)?;
    Ok(matrix_a_from_dual(gf, jet, &dual))
}

pub fn matrix_a_from_dual(gf: &GenFun, jet: &Jet1, dual: &DualEval) -> Mat2 {
    match gf {
        GenFun::QuadraticOt => Mat2::ZERO,
        GenFun::Reflection { .. } => Mat2::scale(1.0 / dual.z),
        GenFun::Refraction { kappa, .. } => {
            let omk2 = 1.0 - kappa * kappa;
            let w = (1.0 + omk2 * jet.p.norm_sq()).sqrt();
            (Mat2::IDENTITY + Mat2::outer(jet.p, jet.p) * omk2)
                * (omk2.signum() * w / dual.z)
        }
    }
}

/// E = g_xy - g_z^{-1} g_xz (x) g_y at an admissible triple, with inverse
/// and determinant. Errors when |det E| falls under 1e-12.
pub fn matrix_e(gf: &GenFun, x: Vec2, y: Vec2, z: f64) -> Result<(Mat2, Mat2, f64)> {
    let gjet = gf.eval(x, y, z)?;
    e_from_gjet(&gjet)
}

/// B(x, u, p) = |det E| f(x) / f*(Y(x, u, p)).
pub fn scalar_b(gf: &GenFun, jet: &Jet1, f: &Density, fstar: &Density) -> Result<f64> {
    let dual = solve_duals(gf, jet)?;
    let fs = fstar.value(dual.y);
    if fs < 1e-8 {
        return Err(Error::domain(format!("target density {fs:.3e} below positive floor 1e-8")));
    }
    Ok(dual.det_e.abs() * f.value(jet.x) / fs)
}

/// Dual generating function: the unique z with g(x, y, z) = u, by strict
/// monotonicity in z. Closed forms per variant; residual verified.
pub fn dual_gstar(gf: &GenFun, x: Vec2, y: Vec2, u: f64) -> Result<f64> {
    if !gf.interval_j(x, y).contains(u) {
        return Err(Error::JetOutsideU {
            what: format!("u = {u} outside J(x, y) = {:?}", gf.interval_j(x, y)),
        });
    }
    let z = match gf {
        GenFun::QuadraticOt => x.dot(y) - u,
        GenFun::Reflection { profile } => {
            let w = profile.value(y) - u;
            w - (w * w + (x - y).norm_sq()).sqrt()
        }
        GenFun::Refraction { .. } => gf
            .refraction_dual_root(x, y, u)
            .ok_or_else(|| Error::RootFind { what: format!("no dual root for u = {u}") })?,
    };
    debug_assert!((gf.eval(x, y, z)?.g - u).abs() <= 1e-12 * (1.0 + u.abs()));
    Ok(z)
}

/// Generic monotone root finder for g(x, y, .) = u: bisection bracket then
/// Newton. Used as an independent oracle for [`dual_gstar`].
pub fn dual_gstar_rootfind(gf: &GenFun, x: Vec2, y: Vec2, u: f64) -> Result<f64> {
    let iv = gf.z_basic_interval(x, y);
    let gval = |z: f64| gf.eval(x, y, z).map(|j| j.g);
    // g is strictly decreasing in z; g grows toward iv.lo and falls toward
    // iv.hi. Walk each side until the target is straddled.
    let start = iv.shrunk(1.0).representative();
    let toward_lo =
        |z: f64| if iv.lo.is_finite() { 0.5 * (z + iv.lo) } else { z - (2.0 * z.abs()).max(1.0) };
    let toward_hi =
        |z: f64| if iv.hi.is_finite() { 0.5 * (z + iv.hi) } else { z + (2.0 * z.abs()).max(1.0) };
    let mut z_lo = start;
    let mut z_hi = start;
    for k in 0..400 {
        if gval(z_lo)? >= u {
            break;
        }
        let next = toward_lo(z_lo);
        if (next - z_lo).abs() < 1e-15 * (1.0 + z_lo.abs()) || k == 399 {
            return Err(Error::RootFind { what: format!("u = {u} above the range of g(x, y, .)") });
        }
        z_lo = next;
    }
    for k in 0..400 {
        if gval(z_hi)? <= u {
            break;
        }
        let next = toward_hi(z_hi);
        if (next - z_hi).abs() < 1e-15 * (1.0 + z_hi.abs()) || k == 399 {
            return Err(Error::RootFind { what: format!("u = {u} below the range of g(x, y, .)") });
        }
        z_hi = next;
    }
    for _ in 0..200 {
        if z_hi - z_lo < 1e-9 * (1.0 + z_lo.abs()) {
            break;
        }
        let mid = 0.5 * (z_lo + z_hi);
        if gval(mid)? >= u {
            z_lo = mid;
        } else {
            z_hi = mid;
        }
    }
    let mut z = 0.5 * (z_lo + z_hi);
    for _ in 0..40 {
        let j = gf.eval(x, y, z)?;
        let r = j.g - u;
        if r.abs() <= 1e-13 * (1.0 + u.abs()) {
            break;
        }
        let next = z - r / j.g_z;
        z = if iv.contains(next) { next } else { 0.5 * (z + if r > 0.0 { z_hi } else { z_lo }) };
    }
    Ok(z)
}

/// Q = -g_y / g_z; one-to-one in x under condition A1*.
pub fn map_q(gf: &GenFun, x: Vec2, y: Vec2, z: f64) -> Result<Vec2> {
    let j = gf.eval(x, y, z)?;
    Ok(j.g_y * (-1.0 / j.g_z))
}

/// Derivatives of (Y, Z) with respect to (u, p) at a solved dual point,
/// from one 3x3 factorization of the generating-equation Jacobian.
pub fn y_derivatives(gf: &GenFun, x: Vec2, dual: &DualEval) -> Result<YDerivs> {
    let gjet = gf.eval(x, dual.y, dual.z)?;
    let j3 = [
        [gjet.g_xy.a, gjet.g_xy.b, gjet.g_xz.x],
        [gjet.g_xy.c, gjet.g_xy.d, gjet.g_xz.y],
        [gjet.g_y.x, gjet.g_y.y, gjet.g_z],
    ];
    let singular = || Error::Degenerate { what: "singular generating-equation Jacobian".into() };
    let c0 = solve3(j3, [1.0, 0.0, 0.0]).ok_or_else(singular)?;
    let c1 = solve3(j3, [0.0, 1.0, 0.0]).ok_or_else(singular)?;
    let cu = solve3(j3, [0.0, 0.0, 1.0]).ok_or_else(singular)?;
    Ok(YDerivs {
        y_p: Mat2::new(c0[0], c1[0], c0[1], c1[1]),
        z_p: Vec2::new(c0[2], c1[2]),
        y_u: Vec2::new(cu[0], cu[1]),
        z_u: cu[2],
    })
}

/// Discrete T-map of a grid field: Tu, det DTu through the algebraic
/// identity det DTu = det(D^2 u - A) / det E, and per-node ellipticity.
#[derive(Clone, Debug)]
pub struct TMapField {
    pub tu: Vec<Vec2>,
    pub det_dtu: Vec<f64>,
    /// Smallest eigenvalue of D^2 u - A per node.
    pub lambda_min: Vec<f64>,
    /// Nodes where ellipticity fails (lambda_min <= 0).
    pub flagged: Vec<usize>,
}

pub fn map_t(gf: &GenFun, grid: &Grid, values: &[f64]) -> Result<TMapField> {
    let n = grid.n_nodes();
    assert_eq!(values.len(), n);
    let mut tu = Vec::with_capacity(n);
    let mut det_dtu = Vec::with_capacity(n);
    let mut lambda_min = Vec::with_capacity(n);
    let mut flagged = Vec::new();
    for k in 0..n {
        let (ring, col) = grid.ring_col(k);
        let jet = grid.field_jet(values, ring, col);
        let j1 = Jet1::new(grid.nodes[k].pos, jet.u, jet.du);
        let dual = solve_duals(gf, &j1)?;
        let m = jet.hess - matrix_a_from_dual(gf, &j1, &dual);
        let (lo, _) = m.sym_eigenvalues();
        if lo <= 0.0 {
            flagged.push(k);
        }
        tu.push(dual.y);
        det_dtu.push(m.det() / dual.det_e);
        lambda_min.push(lo);
    }
    Ok(TMapField { tu, det_dtu, lambda_min, flagged })
}

/// Cross-check determinant: finite-difference Jacobian of the discrete Tu
/// field itself (kept independent of the algebraic identity route).
pub fn map_t_fd_jacobian(grid: &Grid, tu: &[Vec2]) -> Vec<f64> {
    let n = grid.n_nodes();
    let tx: Vec<f64> = tu.iter().map(|v| v.x).collect();
    let ty: Vec<f64> = tu.iter().map(|v| v.y).collect();
    (0..n)
        .map(|k| {
            let (ring, col) = grid.ring_col(k);
            let jx = grid.field_jet(&tx, ring, col);
            let jy = grid.field_jet(&ty, ring, col);
            Mat2::from_cols(Vec2::new(jx.du.x, jy.du.x), Vec2::new(jx.du.y, jy.du.y))
                .transpose()
                .det()
        })
        .collect()
}

/// Obliqueness vector G_p = (E^{-1})^T D phi*(Y) for a target defining
/// function.
pub fn obliqueness_vector(dual: &DualEval, omega_star: &DomainSpec) -> Vec2 {
    let (_, dphi, _) = omega_star.phi(dual.y);
    dual.e_inv.transpose().mul_vec(dphi)
}
