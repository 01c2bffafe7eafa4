//! Constructive g-convexity: g-affine functions, the uniformly g-convex
//! seed field g_rho, its envelope extension past the boundary, adjustment
//! and mollification, and the boundary positivity test behind the
//! extension.
//!
//! The seed is the g*-transform of a spherical cap over a small ball
//! `B_rho(y0)` in the target:
//! `g_rho(x) = sup_{y in B_rho} g(x, y, z0 - sqrt(rho^2 - |y - y0|^2))`.
//! Its mapping image is contained in `B_rho(y0)`, and it converges
//! uniformly to the g-affine function `g(., y0, z0)` as rho shrinks.

use crate::conditions;
use crate::domains::{DomainSpec, Grid};
use crate::dualmaps::{self, Jet1};
use crate::error::{Error, Result};
use crate::genfun::GenFun;
use crate::math::{Mat2, Vec2};
use serde::Serialize;

/// A g-affine function g(., y0, z0): the analogue of an affine support
/// plane; its mapping image is the single point y0.
#[derive(Clone, Copy, Debug)]
pub struct GAffine {
    pub y0: Vec2,
    pub z0: f64,
}

impl GAffine {
    pub fn eval(&self, gf: &GenFun, x: Vec2) -> Result<f64> {
        Ok(gf.eval(x, self.y0, self.z0)?.g)
    }

    pub fn grad(&self, gf: &GenFun, x: Vec2) -> Result<Vec2> {
        Ok(gf.eval(x, self.y0, self.z0)?.g_x)
    }
}

/// The uniformly g-convex seed function.
#[derive(Clone, Debug)]
pub struct GRho {
    pub gf: GenFun,
    pub y0: Vec2,
    pub z0: f64,
    pub rho: f64,
}

impl GRho {
    pub fn new(gf: GenFun, y0: Vec2, z0: f64, rho: f64) -> Self {
        GRho { gf, y0, z0, rho }
    }

    fn v_rho(&self, w: Vec2) -> f64 {
        self.z0 - (self.rho * self.rho - w.norm_sq()).max(0.0).sqrt()
    }

    /// Objective g(x, y0 + w, v_rho(w)) and its w-gradient.
    fn objective(&self, x: Vec2, w: Vec2) -> Result<(f64, Vec2)> {
        let root = (self.rho * self.rho - w.norm_sq()).max(1e-300).sqrt();
        let jet = self.gf.eval(x, self.y0 + w, self.z0 - root)?;
        Ok((jet.g, jet.g_y + w * (jet.g_z / root)))
    }

    /// Value, maximizer y_w and gradient (g_x at the maximizer, by the
    /// envelope theorem) of the sup.
    ///
    /// Coarse polar scan over the closed ball followed by a damped Newton
    /// ascent on the interior stationarity condition; the maximizer is
    /// interior because g decreases in z and the cap is steepest at its rim.
    pub fn eval_full(&self, x: Vec2) -> Result<(f64, Vec2, Vec2)> {
        if let GenFun::QuadraticOt = self.gf {
            // closed form: sup of x.w + sqrt(rho^2 - |w|^2) over the ball;
            // here the gradient g_x = y equals the maximizer itself
            let s = (1.0 + x.norm_sq()).sqrt();
            let y_w = self.y0 + x * (self.rho / s);
            let val = x.dot(self.y0) - self.z0 + self.rho * s;
            return Ok((val, y_w, y_w));
        }
        self.eval_full_generic(x)
    }

    /// The sampling-plus-ascent route, independent of any closed form.
    pub fn eval_full_generic(&self, x: Vec2) -> Result<(f64, Vec2, Vec2)> {
        let mut best_w = Vec2::ZERO;
        let mut best = f64::NEG_INFINITY;
        let mut scan = |w: Vec2| -> Result<()> {
            let (v, _) = self.objective(x, w)?;
            if v > best {
                best = v;
                best_w = w;
            }
            Ok(())
        };
        scan(Vec2::ZERO)?;
        for ir in 0..8 {
            let r = self.rho * (ir as f64 + 0.5) / 8.5;
            for ia in 0..16 {
                let ang = std::f64::consts::TAU * ia as f64 / 16.0;
                scan(Vec2::new(ang.cos(), ang.sin()) * r)?;
            }
        }
        self.ascend_from(x, best_w)
    }

    /// Newton ascent from a known-good starting offset (skips the coarse
    /// scan; used with warm seeds at tightly clustered evaluation points).
    pub fn eval_full_seeded(&self, x: Vec2, w_seed: Vec2) -> Result<(f64, Vec2, Vec2)> {
        if let GenFun::QuadraticOt = self.gf {
            return self.eval_full(x);
        }
        let cap = self.rho * (1.0 - 1e-9);
        let w0 = if w_seed.norm() > cap { w_seed * (cap / w_seed.norm()) } else { w_seed };
        self.ascend_from(x, w0)
    }

    // Newton ascent on the gradient with a finite-difference Jacobian
    fn ascend_from(&self, x: Vec2, start: Vec2) -> Result<(f64, Vec2, Vec2)> {
        let mut w = start;
        let cap = self.rho * (1.0 - 1e-12);
        let clamp = |w: Vec2| {
            let n = w.norm();
            if n > cap {
                w * (cap / n)
            } else {
                w
            }
        };
        let (mut fval, mut grad) = self.objective(x, w)?;
        let scale = 1.0 + fval.abs();
        for _ in 0..60 {
            if grad.norm() <= 1e-12 * scale / self.rho.min(1.0) {
                break;
            }
            let h = 1e-7 * self.rho;
            let gx = self.objective(x, clamp(w + Vec2::new(h, 0.0)))?.1;
            let gmx = self.objective(x, clamp(w - Vec2::new(h, 0.0)))?.1;
            let gy = self.objective(x, clamp(w + Vec2::new(0.0, h)))?.1;
            let gmy = self.objective(x, clamp(w - Vec2::new(0.0, h)))?.1;
            let jac = Mat2::from_cols((gx - gmx) / (2.0 * h), (gy - gmy) / (2.0 * h));
            let step = match jac.inverse() {
                Some(inv) => inv.mul_vec(grad) * -1.0,
                None => grad * (self.rho / (1.0 + grad.norm())),
            };
            let mut alpha = 1.0;
            let mut advanced = false;
            while alpha > 1e-12 {
                let w_try = clamp(w + step * alpha);
                if let Ok((f_try, g_try)) = self.objective(x, w_try) {
                    if f_try >= fval {
                        let moved = (w_try - w).norm();
                        w = w_try;
                        fval = f_try;
                        grad = g_try;
                        advanced = moved > 1e-16 * self.rho;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        let jet = self.gf.eval(x, self.y0 + w, self.v_rho(w))?;
        Ok((jet.g, self.y0 + w, jet.g_x))
    }

    pub fn eval(&self, x: Vec2) -> Result<f64> {
        Ok(self.eval_full(x)?.0)
    }

    /// The g-affine function this seed perturbs.
    pub fn base_affine(&self) -> GAffine {
        GAffine { y0: self.y0, z0: self.z0 }
    }
}

/// Per-node ellipticity data of a discrete field.
#[derive(Clone, Debug)]
pub struct GConvexField {
    pub values: Vec<f64>,
    /// Smallest eigenvalue of D^2 u - A(., u, Du) per node.
    pub lambda_min: Vec<f64>,
    pub min_lambda: f64,
}

pub fn ellipticity_field(gf: &GenFun, grid: &Grid, values: &[f64]) -> Result<GConvexField> {
    let mut lambda_min = Vec::with_capacity(values.len());
    let mut min_lambda = f64::INFINITY;
    for k in 0..grid.n_nodes() {
        let (ring, col) = grid.ring_col(k);
        let jet = grid.field_jet(values, ring, col);
        let j1 = Jet1::new(grid.nodes[k].pos, jet.u, jet.du);
        let dual = dualmaps::solve_duals(gf, &j1)?;
        let m = jet.hess - dualmaps::matrix_a_from_dual(gf, &j1, &dual);
        let (lo, _) = m.sym_eigenvalues();
        lambda_min.push(lo);
        min_lambda = min_lambda.min(lo);
    }
    Ok(GConvexField { values: values.to_vec(), lambda_min, min_lambda })
}

#[derive(Clone, Debug, Serialize)]
pub struct InitialReport {
    pub rho: f64,
    pub min_lambda: f64,
    /// Largest |Tu0 - y0| over the grid (must stay below rho).
    pub image_radius: f64,
    pub u_range: (f64, f64),
}

/// Build the seed field on a grid, asserting ellipticity, the mapping
/// containment `Tu0(Omega) in B_rho(y0)`, and the height-range condition
/// `[inf u - K0 d, sup u + K0 d] in J0`.
pub fn build_initial(
    gf: &GenFun,
    omega: &DomainSpec,
    omega_star: &DomainSpec,
    y0: Vec2,
    z0: f64,
    rho: f64,
    grid: &Grid,
    refraction_delta: f64,
) -> Result<(GConvexField, GRho, InitialReport)> {
    if !omega_star.contains(y0) {
        return Err(Error::domain("seed focus y0 lies outside the target domain"));
    }
    let (_, clearance) = omega_star.project_boundary(y0);
    if rho >= clearance {
        return Err(Error::domain(format!(
            "B_rho(y0) must be contained in the target: rho = {rho:.4}, boundary clearance = \
             {clearance:.4}"
        )));
    }
    gamma0_admissible(gf, omega, y0, z0, rho)?;
    let seed = GRho::new(gf.clone(), y0, z0, rho);
    let values: Vec<f64> =
        grid.nodes.iter().map(|n| seed.eval(n.pos)).collect::<Result<_>>()?;
    let field = ellipticity_field(gf, grid, &values)?;
    if field.min_lambda <= 0.0 {
        return Err(Error::Ellipticity {
            what: format!("seed field not uniformly g-convex: min lambda = {}", field.min_lambda),
        });
    }
    // mapping containment through the discrete jets
    let mut image_radius = 0.0f64;
    for k in 0..grid.n_nodes() {
        let (ring, col) = grid.ring_col(k);
        let jet = grid.field_jet(&values, ring, col);
        let dual = dualmaps::solve_duals(gf, &Jet1::new(grid.nodes[k].pos, jet.u, jet.du))?;
        image_radius = image_radius.max((dual.y - y0).norm());
    }
    if image_radius >= rho {
        return Err(Error::domain(format!(
            "seed image escapes B_rho(y0): radius {image_radius:.6} vs rho {rho:.6}"
        )));
    }
    let (umin, umax) =
        values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let c = conditions::constants_a5(gf, omega, omega_star, refraction_delta)?;
    let d = omega.diameter();
    if !c.j0.contains_interval(crate::interval::Interval::new(umin - c.k0 * d, umax + c.k0 * d)) {
        return Err(Error::RangeCondition {
            what: format!(
                "[{:.4}, {:.4}] with K0 d = {:.4} not inside J0 = {:?}",
                umin,
                umax,
                c.k0 * d,
                c.j0
            ),
        });
    }
    let report = InitialReport {
        rho,
        min_lambda: field.min_lambda,
        image_radius,
        u_range: (umin, umax),
    };
    Ok((field, seed, report))
}

/// Verify the seed's admissibility box: Omega x closure(B_rho) x
/// [z0 - rho, z0] must sit inside the admissible set.
fn gamma0_admissible(
    gf: &GenFun,
    omega: &DomainSpec,
    y0: Vec2,
    z0: f64,
    rho: f64,
) -> Result<()> {
    for ib in 0..48 {
        let x = omega.boundary_point(std::f64::consts::TAU * ib as f64 / 48.0).position;
        for iy in 0..12 {
            let ang = std::f64::consts::TAU * iy as f64 / 12.0;
            for s in [0.0, 0.5, 1.0] {
                let y = y0 + Vec2::new(ang.cos(), ang.sin()) * (rho * s);
                for z in [z0 - rho, z0 - 0.5 * rho, z0] {
                    let iv = gf.z_interval(x, y);
                    if !iv.contains(z) {
                        return Err(Error::Admissibility {
                            variant: "seed construction",
                            constraint: format!(
                                "z = {z:.4} outside I(x, y) = ({:.4}, {:.4}) at x = {x:?}",
                                iv.lo, iv.hi
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Largest admissible rho (halved for slack): binary search on the
/// admissibility scan, capped by the target clearance of y0.
pub fn auto_rho(
    gf: &GenFun,
    omega: &DomainSpec,
    omega_star: &DomainSpec,
    y0: Vec2,
    z0: f64,
) -> Result<f64> {
    let (_, clearance) = omega_star.project_boundary(y0);
    let mut hi = clearance * 0.999;
    let mut lo = 0.0f64;
    if gamma0_admissible(gf, omega, y0, z0, hi).is_ok() {
        return Ok(0.5 * hi);
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if gamma0_admissible(gf, omega, y0, z0, mid).is_ok() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::domain("no admissible rho for the seed construction"));
    }
    Ok(0.5 * lo)
}

// ---------------------------------------------------------------------------
// Envelope extension
// ---------------------------------------------------------------------------

/// One boundary support piece of the envelope: the g-affine function with
/// focus on the target boundary that touches the seed from below at `x_b`.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryAffine {
    pub x_b: Vec2,
    pub u_b: f64,
    pub du_b: Vec2,
    /// Focus on the target boundary, reached along the p-ray.
    pub y_b: Vec2,
    pub z_b: f64,
    /// Ray parameter of the crossing.
    pub s_b: f64,
}

/// The extension u1 = max(u0, boundary affine family) over the enlarged
/// grid, with the analytic evaluator retained for mollification.
#[derive(Clone, Debug)]
pub struct EnvelopeField {
    pub seed: GRho,
    pub family: Vec<BoundaryAffine>,
    /// Construction source domain (the envelope extends past its boundary).
    pub source: DomainSpec,
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Family pieces swept per side when the angular window is active.
    /// The active piece at x sits near x's boundary angle, so the max can
    /// skip the far side of the family; validated against the full sweep
    /// at every grid node during construction and disabled on mismatch.
    window: Option<usize>,
}

/// Extend the seed past the boundary by the family of boundary-support
/// g-affine pieces: for each boundary sample x_b the p-ray
/// `Y(x_b, u_b, Du_b + s gamma)` is traced to its unique crossing of the
/// target boundary, giving the focus y_b and parameter z_b = g*(x_b, y_b, u_b).
pub fn envelope_extend(
    gf: &GenFun,
    seed: &GRho,
    source: &DomainSpec,
    omega_star: &DomainSpec,
    n_boundary: usize,
    grid: &Grid,
) -> Result<EnvelopeField> {
    if n_boundary < 8 {
        return Err(Error::config("envelope needs at least 8 boundary samples"));
    }
    let mut family = Vec::with_capacity(n_boundary);
    for b in 0..n_boundary {
        let bp = source.boundary_point(std::f64::consts::TAU * b as f64 / n_boundary as f64);
        let (u_b, _, du_b) = seed.eval_full(bp.position)?;
        let (y_b, s_b) = trace_boundary_ray(gf, omega_star, bp.position, u_b, du_b, bp.normal)
            .map_err(|e| Error::RootFind {
                what: format!("boundary ray at theta = {:.4}: {e}", bp.theta),
            })?;
        let z_b = dualmaps::dual_gstar(gf, bp.position, y_b, u_b)?;
        family.push(BoundaryAffine { x_b: bp.position, u_b, du_b, y_b, z_b, s_b });
    }
    let mut env = EnvelopeField {
        seed: seed.clone(),
        family,
        source: source.clone(),
        grid: grid.clone(),
        values: Vec::new(),
        window: None,
    };
    let values: Vec<f64> =
        grid.nodes.iter().map(|n| env.eval_u1(n.pos)).collect::<Result<_>>()?;
    // enable the angular window if it reproduces the full sweep at every
    // grid node
    if n_boundary >= 64 {
        env.window = Some((n_boundary / 8).max(24));
        let ok = grid.nodes.iter().zip(&values).all(|(n, full)| {
            matches!(env.eval_u1(n.pos),
                     Ok(w) if (w - full).abs() <= 1e-12 * (1.0 + full.abs()))
        });
        if !ok {
            env.window = None;
        }
    }
    Ok(EnvelopeField { values, ..env })
}

impl EnvelopeField {
    /// u1(x) = max(u0(x), family pieces).
    pub fn eval_u1(&self, x: Vec2) -> Result<f64> {
        let mut v = self.seed.eval(x)?;
        let sweep = |piece: &BoundaryAffine, v: &mut f64| {
            if let Ok(jet) = self.seed.gf.eval(x, piece.y_b, piece.z_b) {
                *v = v.max(jet.g);
            }
        };
        match self.window {
            Some(w) => {
                let n = self.family.len();
                let (_, theta) = self.source.chart_coords(x);
                let b0 = (theta.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU
                    * n as f64)
                    .round() as usize;
                for d in 0..=2 * w {
                    let b = (b0 + n + d - w) % n;
                    sweep(&self.family[b], &mut v);
                }
            }
            None => {
                for piece in &self.family {
                    sweep(piece, &mut v);
                }
            }
        }
        Ok(v)
    }

    /// u1 plus the exterior adjustment t_adj * dist(x, source)^2.
    pub fn eval_adjusted(&self, x: Vec2, t_adj: f64) -> Result<f64> {
        let d = self.source.distance_outside(x);
        Ok(self.eval_u1(x)? + t_adj * d * d)
    }

    /// Warm-seeded variant for tightly clustered evaluations (the
    /// mollification quadrature): the seed's inner maximizer offset from a
    /// nearby point replaces the coarse scan.
    pub fn eval_adjusted_seeded(&self, x: Vec2, t_adj: f64, w_hint: Vec2) -> Result<f64> {
        let (mut v, _, _) = self.seed.eval_full_seeded(x, w_hint)?;
        let sweep = |piece: &BoundaryAffine, v: &mut f64| {
            if let Ok(jet) = self.seed.gf.eval(x, piece.y_b, piece.z_b) {
                *v = v.max(jet.g);
            }
        };
        match self.window {
            Some(w) => {
                let n = self.family.len();
                let (_, theta) = self.source.chart_coords(x);
                let b0 = (theta.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU
                    * n as f64)
                    .round() as usize;
                for d in 0..=2 * w {
                    let b = (b0 + n + d - w) % n;
                    sweep(&self.family[b], &mut v);
                }
            }
            None => {
                for piece in &self.family {
                    sweep(piece, &mut v);
                }
            }
        }
        let d = self.source.distance_outside(x);
        Ok(v + t_adj * d * d)
    }

    /// Convex hull radius proxy of the mapped image: the family foci lie
    /// on the target boundary, so their angular coverage measures how much
    /// of it the extension reaches.
    pub fn image_covers_target(&self, omega_star: &DomainSpec, tol_arc: f64) -> bool {
        let mut angles: Vec<f64> = self
            .family
            .iter()
            .map(|p| {
                let (_, theta) = omega_star.chart_coords(p.y_b);
                theta.rem_euclid(std::f64::consts::TAU)
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        let mut max_gap = 0.0f64;
        for i in 0..angles.len() {
            let next = if i + 1 == angles.len() {
                angles[0] + std::f64::consts::TAU
            } else {
                angles[i + 1]
            };
            max_gap = max_gap.max(next - angles[i]);
        }
        max_gap <= tol_arc
    }
}

/// Find the unique s > 0 with phi*(Y(x_b, u_b, du_b + s gamma)) = 0:
/// expanding bracket, bisection, then Newton through the obliqueness
/// derivative. A second crossing within [s, 2s] is reported as
/// non-uniqueness.
fn trace_boundary_ray(
    gf: &GenFun,
    omega_star: &DomainSpec,
    x_b: Vec2,
    u_b: f64,
    du_b: Vec2,
    gamma: Vec2,
) -> Result<(Vec2, f64)> {
    let eval_y = |s: f64| -> Result<Vec2> {
        Ok(dualmaps::solve_duals(gf, &Jet1::new(x_b, u_b, du_b + gamma * s))?.y)
    };
    let psi = |s: f64| -> Result<f64> { Ok(omega_star.phi(eval_y(s)?).0) };
    let f0 = psi(0.0)?;
    if f0 >= 0.0 {
        return Err(Error::RootFind { what: "seed image not inside the target".into() });
    }
    let mut s_in = 0.0;
    let mut step = 0.05 * (1.0 + du_b.norm());
    let mut s_out = None;
    for _ in 0..300 {
        let s = s_in + step;
        match psi(s) {
            Ok(v) if v < 0.0 => {
                s_in = s;
                step *= 1.6;
            }
            Ok(_) => {
                s_out = Some(s);
                break;
            }
            Err(_) => {
                step *= 0.5;
                if step < 1e-13 {
                    return Err(Error::RootFind {
                        what: "ray left the admissible set before the target boundary".into(),
                    });
                }
            }
        }
    }
    let mut hi = s_out.ok_or(Error::RootFind { what: "no target-boundary crossing".into() })?;
    let mut lo = s_in;
    for _ in 0..80 {
        if hi - lo < 1e-14 * (1.0 + hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match psi(mid) {
            Ok(v) if v < 0.0 => lo = mid,
            _ => hi = mid,
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..20 {
        let dual = dualmaps::solve_duals(gf, &Jet1::new(x_b, u_b, du_b + gamma * s))?;
        let (v, dphi, _) = omega_star.phi(dual.y);
        if v.abs() < 1e-13 {
            break;
        }
        // d psi / d s = Dphi* . Y_p gamma = Dphi* . E^{-1} gamma
        let slope = dphi.dot(dual.e_inv.mul_vec(gamma));
        if slope.abs() < 1e-300 {
            break;
        }
        let next = s - v / slope;
        s = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    // uniqueness probe past the crossing
    for factor in [1.25, 1.75, 2.5] {
        if let Ok(v) = psi(s * factor) {
            if v < 0.0 {
                return Err(Error::RootFind {
                    what: format!("second boundary crossing detected near s = {:.4}", s * factor),
                });
            }
        }
    }
    Ok((eval_y(s)?, s))
}

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

/// Normalized polar quadrature of the standard C-infinity bump on the unit
/// ball. Weights are renormalized to sum exactly to one, so mollification
/// commutes with adding constants identically.
pub struct MollifierRule {
    /// (offset in the unit ball, weight)
    pub points: Vec<(Vec2, f64)>,
}

impl MollifierRule {
    pub fn standard() -> Self {
        Self::with_resolution(16, 32)
    }

    pub fn with_resolution(n_r: usize, n_a: usize) -> Self {
        // Gauss-Legendre would be marginally better radially, but the bump
        // vanishes to all orders at the rim, so midpoint already converges
        // superalgebraically.
        let mut points = Vec::with_capacity(n_r * n_a);
        let mut total = 0.0;
        for ir in 0..n_r {
            let r = (ir as f64 + 0.5) / n_r as f64;
            let bump = (-1.0 / (1.0 - r * r)).exp();
            for ia in 0..n_a {
                let ang = std::f64::consts::TAU * ia as f64 / n_a as f64;
                let w = bump * r;
                points.push((Vec2::new(ang.cos(), ang.sin()) * r, w));
                total += w;
            }
        }
        for p in &mut points {
            p.1 /= total;
        }
        MollifierRule { points }
    }

    /// Discrete mass of the rule (exactly one by construction).
    pub fn mass(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }

    /// Mollify an arbitrary evaluator at x with radius eps.
    pub fn apply<F: Fn(Vec2) -> Result<f64>>(&self, f: &F, x: Vec2, eps: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (xi, w) in &self.points {
            acc += w * f(x - *xi * eps)?;
        }
        Ok(acc)
    }
}

/// Adjust (t_adj d^2 outside the source) and mollify the envelope, sampled
/// on `grid`. Asserts a positive nodewise ellipticity margin.
pub fn mollify_adjust(
    gf: &GenFun,
    env: &EnvelopeField,
    t_adj: f64,
    eps_moll: f64,
    grid: &Grid,
) -> Result<GConvexField> {
    let rule = MollifierRule::standard();
    let values: Vec<f64> = crate::sampling::parallel_chunks(
        grid.n_nodes(),
        256,
        |range| -> Vec<Result<f64>> {
            range
                .map(|k| {
                    let x0 = grid.nodes[k].pos;
                    // one full evaluation per node seeds the whole
                    // quadrature cluster around it
                    let (_, y_w, _) = env.seed.eval_full(x0)?;
                    let hint = y_w - env.seed.y0;
                    let f = |x: Vec2| env.eval_adjusted_seeded(x, t_adj, hint);
                    rule.apply(&f, x0, eps_moll)
                })
                .collect()
        },
    )
    .into_iter()
    .flatten()
    .collect::<Result<_>>()?;
    let field = ellipticity_field(gf, grid, &values)?;
    if field.min_lambda <= 0.0 {
        return Err(Error::Ellipticity {
            what: format!(
                "mollified field lost ellipticity (min lambda = {:.3e}); decrease eps_moll or \
                 increase t_adj",
                field.min_lambda
            ),
        });
    }
    Ok(field)
}

// ---------------------------------------------------------------------------
// Boundary positivity (the extension's geometric engine)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PositivityReport {
    pub n_cases: usize,
    pub n_failures: usize,
    /// Worst minimum of h = u - g0 away from the touching node.
    pub worst_min_h: f64,
}

/// Randomized test of the boundary positivity property: build a uniformly
/// g-convex seed u and a g-affine g0 with h = u - g0 satisfying h(x0) = 0
/// and Dh(x0) = -s gamma at a boundary node, then check h > 0 everywhere
/// else on the grid.
pub fn positivity_test(
    gf: &GenFun,
    omega: &DomainSpec,
    omega_star: &DomainSpec,
    grid: &Grid,
    n_cases: usize,
    s_range: (f64, f64),
    base_height: f64,
    seed: u64,
) -> Result<PositivityReport> {
    use rand::Rng;
    let mut rng = crate::sampling::rng_from(seed, 0x4C32);
    let mut n_failures = 0usize;
    let mut worst = f64::INFINITY;
    for _ in 0..n_cases {
        // random seed field: focus near the target center, admissible rho
        let y0 = {
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r: f64 = rng.gen_range(0.0..0.2);
            omega_star.chart_point(r, ang)
        };
        let z0 = dualmaps::dual_gstar(gf, omega.center, y0, base_height)?;
        let rho_cap = auto_rho(gf, omega, omega_star, y0, z0)?;
        let rho = rho_cap.min(0.2) * rng.gen_range(0.5..1.0);
        let u = GRho::new(gf.clone(), y0, z0, rho);
        // touching boundary node and tilt
        let col = rng.gen_range(0..grid.n_theta);
        let node = grid.idx(grid.n_r - 1, col);
        let x0 = grid.nodes[node].pos;
        let bp = omega.boundary_point(grid.nodes[node].theta);
        let s = rng.gen_range(s_range.0..s_range.1);
        let (u0, _, du0) = u.eval_full(x0)?;
        let dual = dualmaps::solve_duals(gf, &Jet1::new(x0, u0, du0 + bp.normal * s))?;
        if !omega_star.contains(dual.y) {
            // the tilted focus must stay in the target for the property to
            // apply; regenerate deterministically by shrinking s
            n_failures += 1;
            continue;
        }
        let g0 = GAffine { y0: dual.y, z0: dual.z };
        // hypothesis residuals
        let touch = (g0.eval(gf, x0)? - u0).abs();
        let tilt = (g0.grad(gf, x0)? - (du0 + bp.normal * s)).norm();
        if touch > 1e-8 || tilt > 1e-8 {
            n_failures += 1;
            continue;
        }
        let mut min_h = f64::INFINITY;
        for k in 0..grid.n_r * grid.n_theta {
            if k == node {
                continue;
            }
            let x = grid.nodes[k].pos;
            let h = u.eval(x)? - g0.eval(gf, x)?;
            min_h = min_h.min(h);
        }
        worst = worst.min(min_h);
        if min_h <= 0.0 {
            n_failures += 1;
        }
    }
    Ok(PositivityReport { n_cases, n_failures, worst_min_h: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::ShapeKind;

    fn unit_disc() -> DomainSpec {
        DomainSpec::disc(Vec2::ZERO, 1.0).unwrap()
    }

    #[test]
    fn g_rho_closed_form_quadratic_ot() {
        let seed = GRho::new(GenFun::QuadraticOt, Vec2::new(0.1, -0.2), 0.3, 0.25);
        for x in [Vec2::ZERO, Vec2::new(0.7, 0.2), Vec2::new(-0.5, 0.5)] {
            let expect = x.dot(seed.y0) - seed.z0 + seed.rho * (1.0 + x.norm_sq()).sqrt();
            let (v, _, grad) = seed.eval_full(x).unwrap();
            assert!((v - expect).abs() < 1e-12);
            // generic ascent agrees with the closed form
            let (vg, _, gradg) = seed.eval_full_generic(x).unwrap();
            assert!((vg - expect).abs() < 1e-8, "generic {vg} vs closed {expect}");
            assert!((grad - gradg).norm() < 1e-6);
        }
    }

    #[test]
    fn g_rho_dense_sampling_oracle_reflection() {
        let gf = GenFun::reflection_flat(0.0);
        let seed = GRho::new(gf.clone(), Vec2::ZERO, -2.0, 0.1);
        let x = Vec2::new(0.6, -0.3);
        let (v, _, _) = seed.eval_full(x).unwrap();
        // dense sampling over the ball, then a refinement pass around the
        // stage-one winner (pure sampling, no gradients)
        let eval_w = |w: Vec2| {
            let z = seed.z0 - (seed.rho * seed.rho - w.norm_sq()).max(0.0).sqrt();
            gf.eval(x, seed.y0 + w, z).unwrap().g
        };
        let mut best = f64::NEG_INFINITY;
        let mut best_w = Vec2::ZERO;
        for ir in 0..1000 {
            let r = seed.rho * (ir as f64 + 0.5) / 1000.0;
            for ia in 0..1000 {
                let ang = std::f64::consts::TAU * ia as f64 / 1000.0;
                let w = Vec2::new(ang.cos(), ang.sin()) * r;
                let g = eval_w(w);
                if g > best {
                    best = g;
                    best_w = w;
                }
            }
        }
        let cell = seed.rho / 500.0;
        for i in 0..400 {
            for k in 0..400 {
                let w = best_w
                    + Vec2::new(
                        cell * (i as f64 / 200.0 - 1.0),
                        cell * (k as f64 / 200.0 - 1.0),
                    );
                if w.norm() < seed.rho {
                    best = best.max(eval_w(w));
                }
            }
        }
        assert!(v >= best - 1e-12, "ascent below dense scan");
        assert!((v - best).abs() < 1e-8, "ascent {v} vs dense {best}");
    }

    #[test]
    fn g_rho_converges_to_affine() {
        let gf = GenFun::reflection_flat(0.0);
        let x = Vec2::new(0.4, 0.3);
        let g0 = GAffine { y0: Vec2::ZERO, z0: -2.0 }.eval(&gf, x).unwrap();
        let mut prev_gap = f64::INFINITY;
        for rho in [1e-2, 1e-3, 1e-4] {
            let seed = GRho::new(gf.clone(), Vec2::ZERO, -2.0, rho);
            let gap = (seed.eval(x).unwrap() - g0).abs();
            // bound |g_rho - g0| <= sup(|g_y| + |g_z|) rho and linear decay
            assert!(gap <= 10.0 * rho, "gap {gap} at rho {rho}");
            assert!(gap < prev_gap * 0.3);
            prev_gap = gap;
        }
    }

    #[test]
    fn build_initial_quadratic_ot_example() {
        let grid = Grid::build(&unit_disc(), 16, 16).unwrap();
        let (field, _, report) = build_initial(
            &GenFun::QuadraticOt,
            &unit_disc(),
            &unit_disc(),
            Vec2::ZERO,
            0.0,
            0.1,
            &grid,
            0.5,
        )
        .unwrap();
        assert!(field.min_lambda > 0.0);
        // closed form image: rho x / sqrt(1 + |x|^2), radius rho / sqrt 2
        assert!(report.image_radius < 0.1);
        assert!((report.image_radius - 0.1 / 2.0f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn build_initial_reflection_and_rho_guard() {
        // heights must clear m_0 + K_0 diam = 2 for the range condition,
        // hence the seed level z0 = -5 (u near 2.5) on unit discs
        let grid = Grid::build(&unit_disc(), 16, 16).unwrap();
        let (field, _, report) = build_initial(
            &GenFun::reflection_flat(0.0),
            &unit_disc(),
            &unit_disc(),
            Vec2::ZERO,
            -5.0,
            0.05,
            &grid,
            0.0,
        )
        .unwrap();
        assert!(field.min_lambda > 0.0);
        assert!(report.image_radius < 0.05);

        // oversized rho: containment precondition must fail
        let err = build_initial(
            &GenFun::reflection_flat(0.0),
            &unit_disc(),
            &unit_disc(),
            Vec2::ZERO,
            -5.0,
            1.5,
            &grid,
            0.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("clearance"));

        // a low seed violates the height-range condition (2.3-style guard)
        let err = build_initial(
            &GenFun::reflection_flat(0.0),
            &unit_disc(),
            &unit_disc(),
            Vec2::ZERO,
            -2.0,
            0.05,
            &grid,
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::RangeCondition { .. }), "{err}");
    }

    #[test]
    fn envelope_ot_ray_circle_closed_form() {
        // for quadratic transport the ray is straight in p and the target
        // is the unit circle: closed-form intersection oracle
        let gf = GenFun::QuadraticOt;
        let omega_s = unit_disc().scaled(0.92);
        let grid = Grid::build_extended(&omega_s, 16, 32, 4).unwrap();
        let seed = GRho::new(gf.clone(), Vec2::ZERO, 0.0, 0.1);
        let env = envelope_extend(&gf, &seed, &omega_s, &unit_disc(), 64, &grid).unwrap();
        for piece in &env.family {
            // straight ray du + s gamma meets |y| = 1
            let (a, b, c) = (
                1.0f64,
                2.0 * piece.du_b.dot((piece.y_b - piece.du_b) / piece.s_b),
                piece.du_b.norm_sq() - 1.0,
            );
            let gamma = (piece.y_b - piece.du_b) / piece.s_b;
            let s_exact = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
            let _ = gamma;
            assert!((piece.s_b - s_exact).abs() < 1e-10, "{} vs {}", piece.s_b, s_exact);
            assert!((piece.y_b.norm() - 1.0).abs() < 1e-10);
        }
        // u1 equals the discrete envelope on the enlarged grid
        for k in (0..grid.n_nodes()).step_by(17) {
            let x = grid.nodes[k].pos;
            let mut expect = seed.eval(x).unwrap();
            for piece in &env.family {
                expect = expect.max(x.dot(piece.y_b) - piece.z_b);
            }
            assert!((env.values[k] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn envelope_is_extension_and_covers_target() {
        let gf = GenFun::QuadraticOt;
        let omega_s = unit_disc().scaled(0.92);
        let grid = Grid::build_extended(&omega_s, 16, 32, 4).unwrap();
        let seed = GRho::new(gf.clone(), Vec2::ZERO, 0.0, 0.1);
        let env = envelope_extend(&gf, &seed, &omega_s, &unit_disc(), 128, &grid).unwrap();
        // on the closed source domain the envelope equals the seed
        for k in 0..grid.n_nodes() {
            if grid.nodes[k].r <= 1.0 {
                let u0 = seed.eval(grid.nodes[k].pos).unwrap();
                assert!(
                    (env.values[k] - u0).abs() < 1e-12,
                    "envelope must not modify the seed inside"
                );
            }
        }
        // foci cover the whole target boundary within the sample resolution
        assert!(env.image_covers_target(&unit_disc(), 2.5 * std::f64::consts::TAU / 128.0));
    }

    #[test]
    fn envelope_monotone_in_boundary_count() {
        let gf = GenFun::QuadraticOt;
        let omega_s = unit_disc().scaled(0.92);
        let grid = Grid::build_extended(&omega_s, 12, 24, 4).unwrap();
        let seed = GRho::new(gf.clone(), Vec2::ZERO, 0.0, 0.1);
        let coarse = envelope_extend(&gf, &seed, &omega_s, &unit_disc(), 32, &grid).unwrap();
        let fine = envelope_extend(&gf, &seed, &omega_s, &unit_disc(), 64, &grid).unwrap();
        for k in 0..grid.n_nodes() {
            assert!(fine.values[k] >= coarse.values[k] - 1e-12);
        }
    }

    #[test]
    fn mollifier_mass_and_constant_commute() {
        let rule = MollifierRule::standard();
        assert!((rule.mass() - 1.0).abs() < 1e-12);
        // continuous-mass accuracy of the underlying rule: compare two
        // resolutions of the unnormalized integral
        let f = |_x: Vec2| -> crate::error::Result<f64> { Ok(1.0) };
        assert!((rule.apply(&f, Vec2::ZERO, 0.3).unwrap() - 1.0).abs() < 1e-14);

        let gf = GenFun::QuadraticOt;
        let omega_s = unit_disc().scaled(0.92);
        let grid = Grid::build_extended(&omega_s, 12, 24, 4).unwrap();
        let seed = GRho::new(gf.clone(), Vec2::ZERO, 0.0, 0.15);
        // the mollification radius must resolve both the grid spacing and
        // the angular spacing of the boundary family
        let env = envelope_extend(&gf, &seed, &omega_s, &unit_disc(), 128, &grid).unwrap();
        let half = Grid::build_extended(&omega_s, 12, 24, 2).unwrap();
        let a = mollify_adjust(&gf, &env, 1.0, 0.12, &half).unwrap();
        // shifted envelope: add a constant through a shifted seed
        let mut env_c = env.clone();
        let shift = 0.7;
        env_c.seed.z0 -= shift; // g = x.y - z: lowering z0 raises u by shift
        for p in &mut env_c.family {
            p.u_b += shift;
            p.z_b -= shift;
        }
        let b = mollify_adjust(&gf, &env_c, 1.0, 0.12, &half).unwrap();
        for k in 0..half.n_nodes() {
            assert!(
                ((b.values[k] - a.values[k]) - shift).abs() < 1e-12,
                "mollification must commute with constants exactly"
            );
        }
    }

    #[test]
    fn mollified_affine_stays_close() {
        // mollifying a g-affine function (as a degenerate "envelope" with
        // no family) reproduces it to O(eps^2) where it is smooth
        let gf = GenFun::reflection_flat(0.0);
        let g0 = GAffine { y0: Vec2::new(0.1, 0.0), z0: -2.0 };
        let rule = MollifierRule::standard();
        let f = |x: Vec2| g0.eval(&gf, x);
        for eps in [0.05, 0.025] {
            let x = Vec2::new(0.3, -0.2);
            let err = (rule.apply(&f, x, eps).unwrap() - g0.eval(&gf, x).unwrap()).abs();
            assert!(err < 2.0 * eps * eps, "eps {eps}: err {err}");
        }
    }

    #[test]
    fn mollify_preserves_ellipticity_quadratic_ot() {
        let gf = GenFun::QuadraticOt;
        let omega_s = unit_disc().scaled(0.92);
        let grid = Grid::build_extended(&omega_s, 16, 32, 4).unwrap();
        let seed = GRho::new(gf.clone(), Vec2::ZERO, 0.0, 0.15);
        let env = envelope_extend(&gf, &seed, &omega_s, &unit_disc(), 64, &grid).unwrap();
        let half = Grid::build_extended(&omega_s, 16, 32, 2).unwrap();
        let eps = 0.55 * 4.0 * grid.h_r; // under half the collar width
        let field = mollify_adjust(&gf, &env, 1.0, eps, &half).unwrap();
        assert!(field.min_lambda > 0.0);
        // interior margin tracks the closed-form seed Hessian scale
        // (rho * smallest eigenvalue of D^2 sqrt(1 + |x|^2))
        let interior_lambda = (0..half.n_nodes())
            .filter(|&k| half.nodes[k].r < 0.6)
            .map(|k| field.lambda_min[k])
            .fold(f64::INFINITY, f64::min);
        let expect = 0.15 * 0.35; // rho times a loose eigenvalue bound
        assert!(interior_lambda > 0.5 * expect, "{interior_lambda} vs {expect}");
    }

    #[test]
    fn positivity_cases_quadratic_ot_and_reflection() {
        // the target must be roomy enough that the tilted foci stay inside
        // for every s in the sweep
        let target = DomainSpec::disc(Vec2::ZERO, 2.5).unwrap();
        let grid = Grid::build(&unit_disc(), 12, 24).unwrap();
        let r = positivity_test(
            &GenFun::QuadraticOt,
            &unit_disc(),
            &target,
            &grid,
            12,
            (0.01, 0.5),
            0.0,
            7,
        )
        .unwrap();
        assert_eq!(r.n_failures, 0, "worst {}", r.worst_min_h);
        assert!(r.worst_min_h > 0.0);

        let r = positivity_test(
            &GenFun::reflection_flat(0.0),
            &unit_disc(),
            &target,
            &grid,
            12,
            (0.01, 0.5),
            2.0,
            8,
        )
        .unwrap();
        assert_eq!(r.n_failures, 0, "worst {}", r.worst_min_h);
        assert!(r.worst_min_h > 0.0);
    }

    #[test]
    fn positivity_support_case_s_zero() {
        // s = 0: the affine is a g-support, h >= 0 with equality at x0
        let gf = GenFun::QuadraticOt;
        let grid = Grid::build(&unit_disc(), 12, 24).unwrap();
        let u = GRho::new(gf.clone(), Vec2::ZERO, 0.0, 0.15);
        let node = grid.idx(11, 5);
        let x0 = grid.nodes[node].pos;
        let (u0, _, du0) = u.eval_full(x0).unwrap();
        let dual = dualmaps::solve_duals(&gf, &Jet1::new(x0, u0, du0)).unwrap();
        let g0 = GAffine { y0: dual.y, z0: dual.z };
        for k in 0..grid.n_nodes() {
            let h = u.eval(grid.nodes[k].pos).unwrap() - g0.eval(&gf, grid.nodes[k].pos).unwrap();
            assert!(h >= -1e-12);
        }
    }

    #[test]
    fn auto_rho_respects_clearance() {
        let rho = auto_rho(
            &GenFun::QuadraticOt,
            &unit_disc(),
            &DomainSpec::new(ShapeKind::Ellipse { radii: Vec2::new(1.0, 0.6) }, Vec2::ZERO)
                .unwrap(),
            Vec2::new(0.2, 0.0),
            0.0,
        )
        .unwrap();
        // clearance from (0.2, 0) to the ellipse is under 0.6
        assert!(rho > 0.0 && rho < 0.3);
    }
}
