//! Physics-level validation, independent of the PDE machinery.
//!
//! Rays are traced by the specular reflection law `d' = d - 2 (d . v) v`
//! and the vector Snell law against the target graph `{(y, Phi(y))}`; the
//! hit points are compared with the generated mapping Y(x, u, Du). Mass
//! conservation is checked by pushing stratified source samples through
//! the discrete map and binning them on the target's own grid cells.
//!
//! Vertical parallel beams travel along +e3: they strike the reflector
//! from below and bounce down onto the target, or refract through the
//! interface upward into it.

use crate::density::Density;
use crate::domains::{DomainSpec, Grid};
use crate::dualmaps::{self, Jet1};
use crate::error::{Error, Result};
use crate::genfun::{GenFun, TargetProfile};
use crate::math::{Mat2, Vec2};
use crate::sampling;
use rand::Rng;
use serde::Serialize;

/// Outcome of tracing a single ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceOutcome {
    Hit(Vec2),
    /// Refraction discriminant went negative.
    TotalInternalReflection,
    /// No graph intersection inside the search slab.
    MissedSlab,
}

/// Specular reflection of the vertical beam at surface height u, slope p;
/// intersected with the target graph by 1-D root finding along the ray.
pub fn trace_jet_reflection(
    x: Vec2,
    u: f64,
    p: Vec2,
    profile: &TargetProfile,
    slab_depth: f64,
) -> TraceOutcome {
    // surface normal (p, -1)/w, incoming d = e3
    let w2 = 1.0 + p.norm_sq();
    // d' = d - 2 (d . v) v with d . v = -1/w
    let dxy = p * (2.0 / w2);
    let dz = 1.0 - 2.0 / w2;
    intersect_graph(x, u, dxy, dz, profile, slab_depth)
}

/// Vector Snell refraction of the vertical beam with index ratio kappa.
pub fn trace_jet_refraction(
    x: Vec2,
    u: f64,
    p: Vec2,
    kappa: f64,
    profile: &TargetProfile,
    slab_depth: f64,
) -> TraceOutcome {
    let w = (1.0 + p.norm_sq()).sqrt();
    let c1 = 1.0 / w; // -d . v, with v = (p, -1)/w oriented against d
    let disc = 1.0 - kappa * kappa * (1.0 - c1 * c1);
    if disc < 0.0 {
        return TraceOutcome::TotalInternalReflection;
    }
    let coef = kappa * c1 - disc.sqrt();
    // d' = kappa e3 + coef (p, -1)/w, a unit vector
    let dxy = p * (coef / w);
    let dz = kappa - coef / w;
    intersect_graph(x, u, dxy, dz, profile, slab_depth)
}

fn intersect_graph(
    x: Vec2,
    u: f64,
    dxy: Vec2,
    dz: f64,
    profile: &TargetProfile,
    slab_depth: f64,
) -> TraceOutcome {
    if let Some(c) = profile.constant_value() {
        if dz.abs() < 1e-14 {
            return TraceOutcome::MissedSlab;
        }
        let t = (c - u) / dz;
        if t <= 0.0 || t * (dxy.norm_sq() + dz * dz).sqrt() > slab_depth {
            return TraceOutcome::MissedSlab;
        }
        return TraceOutcome::Hit(x + dxy * t);
    }
    // general graph: g(t) = u + t dz - Phi(x + t dxy), bracket then bisect
    let g = |t: f64| u + t * dz - profile.value(x + dxy * t);
    let t_max = slab_depth / (dxy.norm_sq() + dz * dz).sqrt();
    let g0 = g(1e-12);
    let n_scan = 512;
    let mut lo = 1e-12;
    let mut hi = None;
    for i in 1..=n_scan {
        let t = t_max * i as f64 / n_scan as f64;
        if g(t) * g0 <= 0.0 {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let Some(mut hi) = hi else { return TraceOutcome::MissedSlab };
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) * g0 <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * (1.0 + hi) {
            break;
        }
    }
    TraceOutcome::Hit(x + dxy * (0.5 * (lo + hi)))
}

/// Trace one jet with the law of the given model and return the deviation
/// from the generated mapping Y(x, u, p).
pub fn jet_deviation(gf: &GenFun, jet: &Jet1, slab_depth: f64) -> Result<(f64, TraceOutcome)> {
    let outcome = match gf {
        GenFun::Reflection { profile } => {
            trace_jet_reflection(jet.x, jet.u, jet.p, profile, slab_depth)
        }
        GenFun::Refraction { kappa, profile } => {
            trace_jet_refraction(jet.x, jet.u, jet.p, *kappa, profile, slab_depth)
        }
        GenFun::QuadraticOt => {
            return Err(Error::config("quadratic transport has no ray model to trace"))
        }
    };
    match outcome {
        TraceOutcome::Hit(y_hit) => {
            let dual = dualmaps::solve_duals(gf, jet)?;
            Ok(((y_hit - dual.y).norm(), outcome))
        }
        other => Ok((f64::NAN, other)),
    }
}

// ---------------------------------------------------------------------------
// Field interpolation (bicubic in chart coordinates)
// ---------------------------------------------------------------------------

/// C^1 interpolation of a grid field in computational coordinates:
/// Catmull-Rom bicubic with the angular wrap, the pole reflection for
/// inner cells and cubic extrapolation ghosts past the outer ring.
pub struct FieldInterpolator<'g> {
    grid: &'g Grid,
    values: &'g [f64],
}

fn catmull_rom(vm1: f64, v0: f64, v1: f64, v2: f64, s: f64) -> (f64, f64) {
    // value and d/ds on [0, 1] between v0 and v1
    let a = -0.5 * vm1 + 1.5 * v0 - 1.5 * v1 + 0.5 * v2;
    let b = vm1 - 2.5 * v0 + 2.0 * v1 - 0.5 * v2;
    let c = 0.5 * (v1 - vm1);
    let d = v0;
    (((a * s + b) * s + c) * s + d, (3.0 * a * s + 2.0 * b) * s + c)
}

impl<'g> FieldInterpolator<'g> {
    pub fn new(grid: &'g Grid, values: &'g [f64]) -> Self {
        FieldInterpolator { grid, values }
    }

    /// Field value at (ring index, column), with pole reflection for
    /// ring = -1, -2 and cubic extrapolation past the last ring.
    fn sample(&self, ring: i64, col: i64) -> f64 {
        let nt = self.grid.n_theta as i64;
        let last = self.grid.total_rings() as i64 - 1;
        if ring < 0 {
            // (-r, theta) coincides with (r - 1 offset, theta + pi)
            let refl = -ring - 1;
            return self.sample(refl, col + nt / 2);
        }
        if ring > last {
            let k = ring - last;
            // cubic extrapolation from the outermost four rings
            let f = |d: i64| self.sample(last - d, col);
            return match k {
                1 => 4.0 * f(0) - 6.0 * f(1) + 4.0 * f(2) - f(3),
                _ => {
                    // second ghost via the same rule applied recursively
                    let g1 = 4.0 * f(0) - 6.0 * f(1) + 4.0 * f(2) - f(3);
                    4.0 * g1 - 6.0 * f(0) + 4.0 * f(1) - f(2)
                }
            };
        }
        let c = col.rem_euclid(nt) as usize;
        self.values[ring as usize * self.grid.n_theta + c]
    }

    /// Value and Cartesian gradient at a physical point inside the grid.
    pub fn eval(&self, x: Vec2) -> (f64, Vec2) {
        let (r, theta) = self.grid.domain.chart_coords(x);
        let hr = self.grid.h_r;
        let ht = self.grid.h_theta;
        // ring centers at (i + 1/2) h
        let fi = r / hr - 0.5;
        let i0 = fi.floor();
        let s_r = fi - i0;
        let ft = theta.rem_euclid(std::f64::consts::TAU) / ht;
        let j0 = ft.floor();
        let s_t = ft - j0;
        let mut vals = [0.0; 4];
        let mut ders = [0.0; 4];
        for (m, out) in [(-1i64, 0usize), (0, 1), (1, 2), (2, 3)] {
            let ring = i0 as i64 + m;
            let f = |dc: i64| self.sample(ring, j0 as i64 + dc);
            let (v, dv) = catmull_rom(f(-1), f(0), f(1), f(2), s_t);
            vals[out] = v;
            ders[out] = dv;
        }
        let (u, du_dsr) = catmull_rom(vals[0], vals[1], vals[2], vals[3], s_r);
        let (ut, _) = catmull_rom(ders[0], ders[1], ders[2], ders[3], s_r);
        let grad_comp = Vec2::new(du_dsr / hr, ut / ht);
        // metric at the point
        let (p, p1, _) = self.grid.domain.chart(theta);
        let jac = Mat2::from_cols(p, p1 * r);
        let du = jac.inverse().map(|ji| ji.transpose().mul_vec(grad_comp)).unwrap_or(Vec2::ZERO);
        (u, du)
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct RayReport {
    pub n_samples: usize,
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub miss_count: usize,
    /// Worst samples as (x, deviation), largest first.
    pub worst: Vec<([f64; 2], f64)>,
}

/// Trace `n_samples` interpolated surface jets and compare the physical
/// hits with the generated mapping.
pub fn trace_field(
    gf: &GenFun,
    grid: &Grid,
    values: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<RayReport> {
    let interp = FieldInterpolator::new(grid, values);
    let slab = 10.0 * grid.domain.diameter().max(1.0);
    let mut rng = sampling::rng_from(seed, 0x52415953);
    let mut worst: Vec<([f64; 2], f64)> = Vec::new();
    let mut max_dev = 0.0f64;
    let mut sum_dev = 0.0f64;
    let mut miss = 0usize;
    let mut n_ok = 0usize;
    for _ in 0..n_samples {
        // keep clear of the outer ring where one-sided interpolation
        // degrades gradients
        let x = loop {
            let cand = sampling::uniform_in_domain(&grid.domain, &mut rng);
            if grid.domain.chart_coords(cand).0 < 1.0 - 0.5 * grid.h_r {
                break cand;
            }
        };
        let (u, du) = interp.eval(x);
        match jet_deviation(gf, &Jet1::new(x, u, du), slab) {
            Ok((dev, TraceOutcome::Hit(_))) => {
                n_ok += 1;
                sum_dev += dev;
                max_dev = max_dev.max(dev);
                worst.push(([x.x, x.y], dev));
                worst.sort_by(|a, b| b.1.total_cmp(&a.1));
                worst.truncate(8);
            }
            Ok((_, _)) => miss += 1,
            Err(_) => miss += 1,
        }
    }
    Ok(RayReport {
        n_samples,
        max_deviation: max_dev,
        mean_deviation: if n_ok > 0 { sum_dev / n_ok as f64 } else { f64::NAN },
        miss_count: miss,
        worst,
    })
}

/// Jet-level ground-truth check over random admissible jets (no grid, no
/// interpolation): validates the generating function against the optical
/// laws directly.
pub fn trace_jets(
    gf: &GenFun,
    omega: &DomainSpec,
    omega_star: &DomainSpec,
    u_window: crate::interval::Interval,
    n_samples: usize,
    seed: u64,
) -> Result<RayReport> {
    let slab = 10.0 * (omega.diameter() + omega_star.diameter()).max(1.0)
        + 10.0 * u_window.lo.abs().max(u_window.hi.abs()).min(1e3);
    let mut rng = sampling::rng_from(seed, 0x4a455453);
    let mut max_dev = 0.0f64;
    let mut sum = 0.0;
    let mut miss = 0usize;
    let mut worst: Vec<([f64; 2], f64)> = Vec::new();
    let mut n = 0usize;
    let mut attempts = 0usize;
    while n < n_samples && attempts < 200 * n_samples {
        attempts += 1;
        let Some(t) = sampling::sample_triple(gf, omega, omega_star, Some(u_window), &mut rng)
        else {
            continue;
        };
        match jet_deviation(gf, &Jet1::new(t.x, t.u, t.p), slab)? {
            (dev, TraceOutcome::Hit(_)) => {
                n += 1;
                sum += dev;
                max_dev = max_dev.max(dev);
                worst.push(([t.x.x, t.x.y], dev));
                worst.sort_by(|a, b| b.1.total_cmp(&a.1));
                worst.truncate(8);
            }
            _ => miss += 1,
        }
    }
    if n == 0 {
        return Err(Error::domain("no admissible jets for ray tracing"));
    }
    Ok(RayReport {
        n_samples: n,
        max_deviation: max_dev,
        mean_deviation: sum / n as f64,
        miss_count: miss,
        worst,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MassReport {
    pub n_samples: usize,
    pub n_bins: usize,
    /// Total mass of the drawn samples (the stratified quadrature of f).
    pub total_mass: f64,
    /// Mass landing in bins plus mass flagged outside, for the bookkeeping
    /// identity total = binned + outside.
    pub binned_mass: f64,
    pub outside_mass: f64,
    pub bookkeeping_error: f64,
    /// Largest relative per-bin mismatch against the target-density bin
    /// integrals.
    pub max_bin_mismatch: f64,
    pub mean_bin_mismatch: f64,
    /// Samples mapping beyond the containment tolerance (one bin width).
    pub containment_failures: usize,
}

/// Push stratified source samples through `map` and bin them on a coarse
/// partition of the target chart, comparing with the target density.
pub fn pushforward_with_map(
    map: &(dyn Fn(Vec2) -> Result<Vec2> + Sync),
    grid: &Grid,
    f: &Density,
    fstar: &Density,
    fstar_scale: f64,
    omega_star: &DomainSpec,
    bins: usize,
    n_samples: usize,
    seed: u64,
) -> Result<MassReport> {
    let nb = (bins as f64).sqrt().round().max(2.0) as usize;
    let n_cells = grid.n_r * grid.n_theta;
    let per_cell = (n_samples / n_cells).max(1);
    // expected bin masses by quadrature of f* over the coarse target cells
    let mut expected = vec![0.0f64; nb * nb];
    let nq = 8;
    for bi in 0..nb {
        for bj in 0..nb {
            let mut acc = 0.0;
            for qi in 0..nq {
                for qj in 0..nq {
                    let r = (bi as f64 + (qi as f64 + 0.5) / nq as f64) / nb as f64;
                    let th = std::f64::consts::TAU * (bj as f64 + (qj as f64 + 0.5) / nq as f64)
                        / nb as f64;
                    let y = omega_star.chart_point(r, th);
                    let (p, p1, _) = omega_star.chart(th);
                    acc += fstar_scale * fstar.value(y) * r * p.cross(p1);
                }
            }
            expected[bi * nb + bj] =
                acc / (nq * nq) as f64 / (nb * nb) as f64 * std::f64::consts::TAU;
        }
    }
    // stratified sampling, deterministic per cell
    let results = sampling::parallel_chunks(n_cells, 64, |range| {
        let mut bins_local = vec![0.0f64; nb * nb];
        let mut outside = 0.0f64;
        let mut total = 0.0f64;
        let mut contain_fail = 0usize;
        let mut err: Option<String> = None;
        for cell in range {
            let mut rng = sampling::rng_from(seed, 0x4d415353 ^ (cell as u64) << 8);
            let (ring, _col) = grid.ring_col(cell);
            let r_lo = (grid.nodes[cell].r - 0.5 * grid.h_r).max(0.0);
            let r_hi = if ring + 1 == grid.n_r { 1.0 } else { grid.nodes[cell].r + 0.5 * grid.h_r };
            let chart_area = (r_hi - r_lo) * grid.h_theta;
            for _ in 0..per_cell {
                let r = rng.gen_range(r_lo..r_hi);
                let th = grid.nodes[cell].theta + rng.gen_range(-0.5..0.5) * grid.h_theta;
                let x = grid.domain.chart_point(r, th);
                let (p, p1, _) = grid.domain.chart(th);
                let mass = f.value(x) * r * p.cross(p1) * chart_area / per_cell as f64;
                total += mass;
                match map(x) {
                    Ok(y) => {
                        let (ry, ty) = omega_star.chart_coords(y);
                        if ry > 1.0 + 1.0 / nb as f64 {
                            contain_fail += 1;
                            outside += mass;
                        } else if ry > 1.0 {
                            outside += mass;
                        } else {
                            let bi = ((ry * nb as f64) as usize).min(nb - 1);
                            let bj = ((ty.rem_euclid(std::f64::consts::TAU)
                                / std::f64::consts::TAU
                                * nb as f64) as usize)
                                .min(nb - 1);
                            bins_local[bi * nb + bj] += mass;
                        }
                    }
                    Err(e) => {
                        if err.is_none() {
                            err = Some(e.to_string());
                        }
                        outside += mass;
                        contain_fail += 1;
                    }
                }
            }
        }
        (bins_local, outside, total, contain_fail, err)
    });
    let mut bin_mass = vec![0.0f64; nb * nb];
    let mut outside = 0.0;
    let mut total = 0.0;
    let mut contain_fail = 0;
    for (bl, o, t, cf, err) in results {
        if let Some(e) = err {
            return Err(Error::Verification { what: format!("mapping failed during pushforward: {e}") });
        }
        for (acc, v) in bin_mass.iter_mut().zip(bl) {
            *acc += v;
        }
        outside += o;
        total += t;
        contain_fail += cf;
    }
    let binned: f64 = bin_mass.iter().sum();
    let bookkeeping = ((binned + outside) - total).abs() / total.max(1e-300);
    let mut max_mis = 0.0f64;
    let mut sum_mis = 0.0;
    for (m, e) in bin_mass.iter().zip(&expected) {
        let mis = (m - e).abs() / e.max(1e-300);
        max_mis = max_mis.max(mis);
        sum_mis += mis;
    }
    Ok(MassReport {
        n_samples: per_cell * n_cells,
        n_bins: nb * nb,
        total_mass: total,
        binned_mass: binned,
        outside_mass: outside,
        bookkeeping_error: bookkeeping,
        max_bin_mismatch: max_mis,
        mean_bin_mismatch: sum_mis / (nb * nb) as f64,
        containment_failures: contain_fail,
    })
}

/// Histogram of the discrete T-map of a grid field (interpolated jets).
pub fn pushforward_histogram(
    gf: &GenFun,
    grid: &Grid,
    values: &[f64],
    f: &Density,
    fstar: &Density,
    fstar_scale: f64,
    omega_star: &DomainSpec,
    bins: usize,
    n_samples: usize,
    seed: u64,
) -> Result<MassReport> {
    let interp = FieldInterpolator::new(grid, values);
    let map = move |x: Vec2| -> Result<Vec2> {
        let (u, du) = interp.eval(x);
        Ok(dualmaps::solve_duals(gf, &Jet1::new(x, u, du))?.y)
    };
    pushforward_with_map(&map, grid, f, fstar, fstar_scale, omega_star, bins, n_samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;

    fn unit_disc() -> DomainSpec {
        DomainSpec::disc(Vec2::ZERO, 1.0).unwrap()
    }

    #[test]
    fn normal_incidence_reflection_goes_straight_down() {
        let profile = TargetProfile::Constant(0.0);
        let x = Vec2::new(0.3, -0.2);
        match trace_jet_reflection(x, 1.0, Vec2::ZERO, &profile, 100.0) {
            TraceOutcome::Hit(y) => assert!((y - x).norm() < 1e-15),
            other => panic!("expected hit, got {other:?}"),
        }
    }

    #[test]
    fn normal_incidence_refraction_undeviated() {
        let profile = TargetProfile::Constant(0.0);
        let x = Vec2::new(0.1, 0.4);
        match trace_jet_refraction(x, -1.0, Vec2::ZERO, 2.0, &profile, 100.0) {
            TraceOutcome::Hit(y) => assert!((y - x).norm() < 1e-15),
            other => panic!("expected hit, got {other:?}"),
        }
    }

    #[test]
    fn jet_level_reflection_matches_mapping() {
        let gf = GenFun::reflection_flat(0.0);
        let r = trace_jets(
            &gf,
            &unit_disc(),
            &unit_disc(),
            Interval::new(2.25, 4.25),
            1000,
            3,
        )
        .unwrap();
        assert_eq!(r.miss_count, 0);
        assert!(r.max_deviation < 1e-8, "max dev {}", r.max_deviation);
    }

    #[test]
    fn jet_level_refraction_matches_mapping() {
        for kappa in [0.5, 2.0] {
            let gf = GenFun::refraction_flat(kappa, 0.0);
            let r = trace_jets(
                &gf,
                &unit_disc(),
                &unit_disc(),
                Interval::new(-4.0, -2.0),
                1000,
                4,
            )
            .unwrap();
            assert_eq!(r.miss_count, 0, "kappa {kappa}");
            assert!(r.max_deviation < 1e-8, "kappa {kappa}: max dev {}", r.max_deviation);
        }
    }

    #[test]
    fn tilted_quadratic_profile_reflection() {
        let profile = TargetProfile::Quadratic {
            c0: 0.0,
            b: Vec2::new(0.05, -0.02),
            q: Mat2::scale(0.08),
        };
        let gf = GenFun::Reflection { profile: profile.clone() };
        let r = trace_jets(
            &gf,
            &unit_disc(),
            &unit_disc(),
            Interval::new(2.5, 4.0),
            500,
            5,
        )
        .unwrap();
        assert_eq!(r.miss_count, 0);
        assert!(r.max_deviation < 1e-6, "max dev {}", r.max_deviation);
    }

    #[test]
    fn refraction_tir_flagged_beyond_gradient_bound() {
        // kappa > 1: the K0 = 1/kappa' bound is exactly the TIR threshold
        let kappa = 2.0f64;
        let kp = 3.0f64.sqrt();
        let p = Vec2::new(1.05 / kp, 0.0);
        let out = trace_jet_refraction(
            Vec2::ZERO,
            -1.0,
            p,
            kappa,
            &TargetProfile::Constant(0.0),
            100.0,
        );
        assert_eq!(out, TraceOutcome::TotalInternalReflection);
    }

    #[test]
    fn interpolator_converges_on_smooth_field() {
        let d = unit_disc();
        let f = |p: Vec2| (1.1 * p.x).sin() + 0.5 * p.y * p.y;
        let gradf = |p: Vec2| Vec2::new(1.1 * (1.1 * p.x).cos(), p.y);
        let mut val_errs = Vec::new();
        let mut grad_errs = Vec::new();
        for n in [32usize, 64] {
            let grid = Grid::build(&d, n, 2 * n).unwrap();
            let values: Vec<f64> = grid.nodes.iter().map(|nd| f(nd.pos)).collect();
            let interp = FieldInterpolator::new(&grid, &values);
            let mut rng = sampling::rng_from(9, 0);
            let mut ev = 0.0f64;
            let mut eg = 0.0f64;
            for _ in 0..300 {
                let x = sampling::uniform_in_domain(&d, &mut rng);
                if d.chart_coords(x).0 > 0.97 {
                    continue;
                }
                let (u, du) = interp.eval(x);
                ev = ev.max((u - f(x)).abs());
                eg = eg.max((du - gradf(x)).norm());
            }
            val_errs.push(ev);
            grad_errs.push(eg);
        }
        assert!(val_errs[0] < 1e-4 && val_errs[1] < 2e-5, "{val_errs:?}");
        assert!(val_errs[0] / val_errs[1] > 6.0, "value order too low: {val_errs:?}");
        assert!(grad_errs[0] < 5e-3, "{grad_errs:?}");
        assert!(grad_errs[0] / grad_errs[1] > 3.0, "gradient order too low: {grad_errs:?}");
    }

    #[test]
    fn identity_pushforward_uniform() {
        let d = unit_disc();
        let grid = Grid::build(&d, 32, 32).unwrap();
        let vals: Vec<f64> = grid.nodes.iter().map(|n| 0.5 * n.pos.norm_sq()).collect();
        let one = Density::Constant(1.0);
        let r = pushforward_histogram(
            &GenFun::QuadraticOt,
            &grid,
            &vals,
            &one,
            &one,
            1.0,
            &d,
            16,
            200_000,
            11,
        )
        .unwrap();
        assert_eq!(r.containment_failures, 0);
        assert!(r.bookkeeping_error < 1e-12);
        assert!(r.max_bin_mismatch < 0.02, "max mismatch {}", r.max_bin_mismatch);
        // total mass is the quadrature of f = 1 over the disc
        assert!((r.total_mass - std::f64::consts::PI).abs() < 1e-2);
    }

    #[test]
    fn histogram_noise_shrinks_with_samples() {
        let d = unit_disc();
        let grid = Grid::build(&d, 16, 16).unwrap();
        let one = Density::Constant(1.0);
        let map = |x: Vec2| -> Result<Vec2> { Ok(x) };
        let small =
            pushforward_with_map(&map, &grid, &one, &one, 1.0, &d, 16, 40_000, 13).unwrap();
        let large =
            pushforward_with_map(&map, &grid, &one, &one, 1.0, &d, 16, 640_000, 13).unwrap();
        // O(1/sqrt N): 16x the samples should shrink the error noticeably
        assert!(
            large.mean_bin_mismatch < small.mean_bin_mismatch,
            "{} vs {}",
            large.mean_bin_mismatch,
            small.mean_bin_mismatch
        );
    }

    #[test]
    fn wrong_field_reported_as_mismatch() {
        // the seed field maps the disc into a small ball: binning against
        // the full target must fail loudly
        let d = unit_disc();
        let grid = Grid::build(&d, 16, 16).unwrap();
        let seed = crate::gconvex::GRho::new(GenFun::QuadraticOt, Vec2::ZERO, 0.0, 0.2);
        let vals: Vec<f64> = grid.nodes.iter().map(|n| seed.eval(n.pos).unwrap()).collect();
        let one = Density::Constant(1.0);
        let r = pushforward_histogram(
            &GenFun::QuadraticOt,
            &grid,
            &vals,
            &one,
            &one,
            1.0,
            &d,
            16,
            100_000,
            15,
        )
        .unwrap();
        assert!(r.max_bin_mismatch > 0.5, "negative control too clean: {}", r.max_bin_mismatch);
    }
}
