//! Seeded samplers over domains and admissible sets, plus a deterministic
//! chunked parallel map used by the embarrassingly parallel verifiers.
//!
//! Determinism contract: all randomness flows from explicit u64 seeds, and
//! parallel reductions combine per-chunk results in a fixed order, so every
//! report is byte-reproducible for a given (config, seed).

use crate::domains::DomainSpec;
use crate::genfun::GenFun;
use crate::interval::Interval;
use crate::math::Vec2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng_from(seed: u64, stream: u64) -> ChaCha8Rng {
    // decorrelate streams sharing one user seed
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform (area-weighted) sample inside a domain via its chart.
pub fn uniform_in_domain(d: &DomainSpec, rng: &mut impl Rng) -> Vec2 {
    let rho_max = d.bounding_radius();
    loop {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let (rho, _, _) = d.rho(theta);
        // rejection on the angular weight rho^2
        if rng.gen_range(0.0..1.0) > (rho / rho_max) * (rho / rho_max) {
            continue;
        }
        let r = rng.gen_range(0.0f64..1.0).sqrt();
        return d.chart_point(r, theta);
    }
}

/// Draw z from the admissible interval I(x, y), biased to stay at a
/// moderate distance from the finite endpoint. None when I is empty.
pub fn sample_z(gf: &GenFun, x: Vec2, y: Vec2, rng: &mut impl Rng) -> Option<f64> {
    let iv = gf.z_interval(x, y);
    if iv.is_empty() {
        return None;
    }
    let d = (x - y).norm();
    let margin = 0.05 * (1.0 + d);
    let span = 2.0 * (1.0 + d);
    Some(match (iv.lo.is_finite(), iv.hi.is_finite()) {
        (true, true) => rng.gen_range(iv.lo + 1e-9..iv.hi - 1e-9),
        (false, true) => iv.hi - margin - rng.gen_range(0.0..span),
        (true, false) => iv.lo + margin + rng.gen_range(0.0..span),
        (false, false) => rng.gen_range(-3.0..3.0),
    })
}

/// An admissible triple with its derived one-jet (x, u = g, p = g_x).
#[derive(Clone, Copy, Debug)]
pub struct SampledTriple {
    pub x: Vec2,
    pub y: Vec2,
    pub z: f64,
    pub u: f64,
    pub p: Vec2,
}

/// Sample a triple with x in omega, y in omega_star and, when `u_window`
/// is given, u restricted to it; returns None when the draw is outside the
/// admissible set (callers loop).
pub fn sample_triple(
    gf: &GenFun,
    omega: &DomainSpec,
    omega_star: &DomainSpec,
    u_window: Option<Interval>,
    rng: &mut impl Rng,
) -> Option<SampledTriple> {
    let x = uniform_in_domain(omega, rng);
    let y = uniform_in_domain(omega_star, rng);
    let z = match u_window {
        None => sample_z(gf, x, y, rng)?,
        Some(w) => {
            let j = gf.interval_j(x, y).intersect(w);
            if j.is_empty() {
                return None;
            }
            let lo = if j.lo.is_finite() { j.lo } else { j.hi - 4.0 };
            let hi = if j.hi.is_finite() { j.hi } else { j.lo + 4.0 };
            let u = rng.gen_range(lo + 1e-9 * (1.0 + lo.abs())..hi);
            crate::dualmaps::dual_gstar(gf, x, y, u).ok()?
        }
    };
    let jet = gf.eval(x, y, z).ok()?;
    Some(SampledTriple { x, y, z, u: jet.g, p: jet.g_x })
}

/// Boundary-restricted variant: x on the boundary of omega.
pub fn sample_boundary_triple(
    gf: &GenFun,
    omega: &DomainSpec,
    omega_star: &DomainSpec,
    u_window: Interval,
    rng: &mut impl Rng,
) -> Option<(crate::domains::BoundaryPoint, SampledTriple)> {
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let b = omega.boundary_point(theta);
    let y = uniform_in_domain(omega_star, rng);
    let j = gf.interval_j(b.position, y).intersect(u_window);
    if j.is_empty() {
        return None;
    }
    let lo = if j.lo.is_finite() { j.lo } else { j.hi - 4.0 };
    let hi = if j.hi.is_finite() { j.hi } else { j.lo + 4.0 };
    let u = rng.gen_range(lo + 1e-9 * (1.0 + lo.abs())..hi);
    let z = crate::dualmaps::dual_gstar(gf, b.position, y, u).ok()?;
    let jet = gf.eval(b.position, y, z).ok()?;
    Some((b, SampledTriple { x: b.position, y, z, u: jet.g, p: jet.g_x }))
}

/// Number of worker threads: GPJE_THREADS, else available parallelism.
pub fn thread_count() -> usize {
    std::env::var("GPJE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .min(64)
}

/// Deterministic parallel map over index chunks: results are combined in
/// chunk order regardless of thread scheduling.
pub fn parallel_chunks<T, F>(n_items: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    let chunk = chunk.max(1);
    let ranges: Vec<std::ops::Range<usize>> = (0..n_items)
        .step_by(chunk)
        .map(|s| s..(s + chunk).min(n_items))
        .collect();
    let workers = thread_count().min(ranges.len().max(1));
    if workers <= 1 {
        return ranges.into_iter().map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<Option<T>> = (0..ranges.len()).map(|_| None).collect();
    let out_cell = std::sync::Mutex::new(&mut out);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= ranges.len() {
                    break;
                }
                let val = f(ranges[k].clone());
                let mut guard = out_cell.lock().unwrap();
                guard[k] = Some(val);
            });
        }
    });
    out.into_iter().map(|v| v.expect("chunk completed")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_sampling_stays_inside() {
        let d = DomainSpec::new(
            crate::domains::ShapeKind::Ellipse { radii: Vec2::new(2.0, 0.7) },
            Vec2::new(1.0, -0.5),
        )
        .unwrap();
        let mut rng = rng_from(3, 0);
        for _ in 0..2000 {
            let x = uniform_in_domain(&d, &mut rng);
            assert!(d.phi(x).0 < 0.0);
        }
    }

    #[test]
    fn parallel_chunks_is_deterministic() {
        let a = parallel_chunks(1000, 37, |r| r.map(|i| (i as f64).sin()).sum::<f64>());
        let b = parallel_chunks(1000, 37, |r| r.map(|i| (i as f64).sin()).sum::<f64>());
        assert_eq!(a, b);
        let total: f64 = a.iter().sum();
        let serial: f64 = (0..1000).map(|i| (i as f64).sin()).sum();
        assert!((total - serial).abs() < 1e-9);
    }
}
