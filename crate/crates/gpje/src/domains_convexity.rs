//! Domain convexity measured through the generated geometry: the boundary
//! form for Y-convexity of the source and convexity of the p-images
//! `P(x, u, Omega*)` for Y*-convexity of the target.

use crate::domains::DomainSpec;
use crate::dualmaps::{self, Jet1};
use crate::error::{Error, Result};
use crate::genfun::GenFun;
use crate::interval::Interval;
use crate::math::Vec2;
use crate::sampling;
use rand::Rng;
use serde::Serialize;

/// Sampling controls shared by the convexity checks.
#[derive(Clone, Debug)]
pub struct ConvexitySampler {
    pub n_samples: usize,
    /// Ray directions per traced p-image (Y*-check).
    pub n_directions: usize,
    pub seed: u64,
    /// Classification tolerance for "uniformly convex".
    pub tol: f64,
}

impl Default for ConvexitySampler {
    fn default() -> Self {
        ConvexitySampler { n_samples: 400, n_directions: 64, seed: 0, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct YConvexityReport {
    /// Minimum of the boundary form over the sample set (the delta_0
    /// estimate).
    pub min_margin: f64,
    pub uniformly_convex: bool,
    /// Boundary parameter, height and target point of the worst sample.
    pub worst: Option<(f64, f64, [f64; 2])>,
    pub n_used: usize,
    pub n_skipped: usize,
}

/// Boundary form `[D_i gamma_j - D_{p_k} A_ij gamma_k] tau_i tau_j` sampled
/// over boundary points of omega, heights in `j`, and target points in
/// omega_star; `D_p A` by centered differences.
pub fn check_y_convexity(
    gf: &GenFun,
    omega: &DomainSpec,
    omega_star: &DomainSpec,
    j: Interval,
    sampler: &ConvexitySampler,
) -> Result<YConvexityReport> {
    let mut rng = sampling::rng_from(sampler.seed, 0x59_434f4e56);
    let mut min_margin = f64::INFINITY;
    let mut worst = None;
    let mut used = 0usize;
    let mut skipped = 0usize;
    let mut attempts = 0usize;
    while used < sampler.n_samples {
        attempts += 1;
        if attempts > 80 * sampler.n_samples {
            break;
        }
        let Some((b, t)) = sampling::sample_boundary_triple(gf, omega, omega_star, j, &mut rng)
        else {
            skipped += 1;
            continue;
        };
        let jet = Jet1::new(t.x, t.u, t.p);
        // d/dp_k of A, contracted with the outer normal
        let hp = 1e-5 * (1.0 + t.p.norm());
        let mut a_gamma = crate::math::Mat2::ZERO;
        let mut ok = true;
        for k in 0..2 {
            let e = if k == 0 { Vec2::new(hp, 0.0) } else { Vec2::new(0.0, hp) };
            let ap = dualmaps::matrix_a(gf, &Jet1::new(jet.x, jet.u, jet.p + e));
            let am = dualmaps::matrix_a(gf, &Jet1::new(jet.x, jet.u, jet.p - e));
            match (ap, am) {
                (Ok(ap), Ok(am)) => {
                    let gk = if k == 0 { b.normal.x } else { b.normal.y };
                    a_gamma = a_gamma + (ap - am) * (gk / (2.0 * hp));
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            skipped += 1;
            continue;
        }
        let form = b.curvature - a_gamma.quad(b.tangent);
        if form < min_margin {
            min_margin = form;
            worst = Some((b.theta, t.u, [t.y.x, t.y.y]));
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::domain("empty admissible sample set for the Y-convexity check"));
    }
    Ok(YConvexityReport {
        min_margin,
        uniformly_convex: min_margin >= sampler.tol,
        worst,
        n_used: used,
        n_skipped: skipped,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct YstarConvexityReport {
    pub convex: bool,
    /// Minimum normalized turn of the traced image boundaries (negative
    /// when a traced polygon is nonconvex).
    pub min_support_margin: f64,
    pub worst: Option<([f64; 2], f64)>,
    pub n_traced: usize,
    pub n_skipped: usize,
}

/// Traces the boundary of `P(x, u, Omega*) = {p | Y(x, u, p) in Omega*}`
/// along p-rays from an interior point and tests convexity of the traced
/// curve through its discrete turning.
pub fn check_ystar_convexity(
    gf: &GenFun,
    omega_star: &DomainSpec,
    omega: &DomainSpec,
    j: Interval,
    sampler: &ConvexitySampler,
) -> Result<YstarConvexityReport> {
    let mut rng = sampling::rng_from(sampler.seed, 0x59_53_434f4e);
    let m = sampler.n_directions.max(8);
    let n_cases = sampler.n_samples.clamp(1, 200);
    let mut min_margin = f64::INFINITY;
    let mut worst = None;
    let mut traced = 0usize;
    let mut skipped = 0usize;
    let mut attempts = 0usize;
    while traced < n_cases {
        attempts += 1;
        if attempts > 100 * n_cases + 100 {
            break;
        }
        let x = sampling::uniform_in_domain(omega, &mut rng);
        // anchor p0 at a target point well inside omega_star
        let y0 = {
            let s: f64 = rng.gen_range(0.0..0.3);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            omega_star.chart_point(s, th)
        };
        let jw = gf.interval_j(x, y0).intersect(j);
        if jw.is_empty() {
            skipped += 1;
            continue;
        }
        let u = rng.gen_range(jw.lo.max(jw.hi - 4.0)..jw.hi);
        let Ok(z0) = dualmaps::dual_gstar(gf, x, y0, u) else {
            skipped += 1;
            continue;
        };
        let p0 = gf.eval(x, y0, z0)?.g_x;
        let mut pts = Vec::with_capacity(m);
        let mut failed = false;
        for kdir in 0..m {
            let ang = std::f64::consts::TAU * kdir as f64 / m as f64;
            let dir = Vec2::new(ang.cos(), ang.sin());
            match trace_p_ray(gf, omega_star, x, u, p0, dir) {
                Ok(s) => pts.push(p0 + dir * s),
                Err(e) => {
                    if matches!(e, Error::RootFind { .. }) {
                        failed = true;
                        break;
                    }
                    return Err(e);
                }
            }
        }
        if failed {
            skipped += 1;
            continue;
        }
        // discrete turning of the traced polygon (ccw): normalized cross
        // products of consecutive edges
        let mut local_min = f64::INFINITY;
        for k in 0..m {
            let a = pts[k];
            let b = pts[(k + 1) % m];
            let c = pts[(k + 2) % m];
            let e1 = b - a;
            let e2 = c - b;
            let denom = e1.norm() * e2.norm();
            if denom < 1e-300 {
                continue;
            }
            local_min = local_min.min(e1.cross(e2) / denom);
        }
        if local_min < min_margin {
            min_margin = local_min;
            worst = Some(([x.x, x.y], u));
        }
        traced += 1;
    }
    if traced == 0 {
        return Err(Error::domain("empty admissible sample set for the Y*-convexity check"));
    }
    Ok(YstarConvexityReport {
        convex: min_margin >= -sampler.tol,
        min_support_margin: min_margin,
        worst,
        n_traced: traced,
        n_skipped: skipped,
    })
}

/// Root of phi*(Y(x, u, p0 + s dir)) = 0 in s > 0 by expanding bracket and
/// bisection with a secant polish.
fn trace_p_ray(
    gf: &GenFun,
    omega_star: &DomainSpec,
    x: Vec2,
    u: f64,
    p0: Vec2,
    dir: Vec2,
) -> Result<f64> {
    let psi = |s: f64| -> Option<f64> {
        let dual = dualmaps::solve_duals(gf, &Jet1::new(x, u, p0 + dir * s)).ok()?;
        Some(omega_star.phi(dual.y).0)
    };
    let f0 = psi(0.0).ok_or(Error::RootFind { what: "anchor jet not admissible".into() })?;
    if f0 >= 0.0 {
        return Err(Error::RootFind { what: "anchor point not inside the target".into() });
    }
    let mut s_in = 0.0f64;
    let mut s_out = None;
    let mut step = 0.05 * (1.0 + p0.norm());
    let mut s = step;
    for _ in 0..200 {
        match psi(s) {
            Some(v) if v < 0.0 => {
                s_in = s;
                step *= 1.6;
                s += step;
            }
            Some(_) => {
                s_out = Some(s);
                break;
            }
            None => {
                // jet left the admissible set before exiting the target:
                // tighten toward the last inside point
                step *= 0.5;
                s = s_in + step;
                if step < 1e-12 {
                    return Err(Error::RootFind {
                        what: "ray left the admissible set before reaching the target boundary"
                            .into(),
                    });
                }
            }
        }
    }
    let mut hi = s_out.ok_or(Error::RootFind { what: "no crossing of the target boundary".into() })?;
    let mut lo = s_in;
    for _ in 0..90 {
        if hi - lo < 1e-13 * (1.0 + hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match psi(mid) {
            Some(v) if v < 0.0 => lo = mid,
            Some(_) => hi = mid,
            None => hi = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}
