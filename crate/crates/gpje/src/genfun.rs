//! Generating functions for the supported optical models, with exact first
//! and second partial derivatives and their admissible sets.
//!
//! Three variants are built in:
//!
//! * reflection of a vertical parallel beam onto a target graph,
//!   `g = Phi(y) - z/2 + |x - y|^2 / (2 z)` with `z < 0`;
//! * refraction with index ratio `kappa`,
//!   `g = Phi(y) - (kappa z + sqrt(z^2 + (kappa^2 - 1)|x - y|^2)) / |kappa^2 - 1|`;
//! * the quadratic-cost optimal transport generator `g = x . y - z`,
//!   which serves as the fully explicit reference model.
//!
//! In every variant `g_z < 0`, so `z` ranges over an open interval for each
//! `(x, y)` and the value `u = g(x, y, .)` over the open interval `J(x, y)`.

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::math::{Mat2, Vec2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Target height profile Phi: the target surface is the graph
/// `{(y, Phi(y))}` over the target domain.
#[derive(Clone, Debug)]
pub enum TargetProfile {
    Constant(f64),
    /// Phi(y) = c0 + b . y + y^T q y / 2 with symmetric q.
    Quadratic { c0: f64, b: Vec2, q: Mat2 },
    /// Gaussian bump Phi(y) = base + amplitude * exp(-|y - center|^2 / (2 w^2)).
    RadialBump { base: f64, amplitude: f64, width: f64, center: Vec2 },
}

impl TargetProfile {
    pub fn value(&self, y: Vec2) -> f64 {
        match self {
            TargetProfile::Constant(c) => *c,
            TargetProfile::Quadratic { c0, b, q } => c0 + b.dot(y) + 0.5 * q.quad(y),
            TargetProfile::RadialBump { base, amplitude, width, center } => {
                let d = y - *center;
                base + amplitude * (-d.norm_sq() / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn gradient(&self, y: Vec2) -> Vec2 {
        match self {
            TargetProfile::Constant(_) => Vec2::ZERO,
            TargetProfile::Quadratic { b, q, .. } => *b + q.mul_vec(y),
            TargetProfile::RadialBump { amplitude, width, center, .. } => {
                let d = y - *center;
                let w2 = width * width;
                d * (-amplitude * (-d.norm_sq() / (2.0 * w2)).exp() / w2)
            }
        }
    }

    pub fn hessian(&self, y: Vec2) -> Mat2 {
        match self {
            TargetProfile::Constant(_) => Mat2::ZERO,
            TargetProfile::Quadratic { q, .. } => *q,
            TargetProfile::RadialBump { amplitude, width, center, .. } => {
                let d = y - *center;
                let w2 = width * width;
                let e = (-d.norm_sq() / (2.0 * w2)).exp();
                (Mat2::outer(d, d) * (1.0 / w2) - Mat2::IDENTITY) * (amplitude * e / w2)
            }
        }
    }

    /// The constant value when the profile is identically flat.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            TargetProfile::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

/// One evaluation of g and all partials needed by the dual machinery.
#[derive(Clone, Copy, Debug)]
pub struct GJet {
    pub g: f64,
    pub g_x: Vec2,
    pub g_y: Vec2,
    pub g_z: f64,
    pub g_xx: Mat2,
    pub g_xy: Mat2,
    pub g_xz: Vec2,
}

/// A generating-function model.
#[derive(Clone, Debug)]
pub enum GenFun {
    Reflection { profile: TargetProfile },
    Refraction { kappa: f64, profile: TargetProfile },
    QuadraticOt,
}

impl GenFun {
    pub fn reflection_flat(level: f64) -> GenFun {
        GenFun::Reflection { profile: TargetProfile::Constant(level) }
    }

    pub fn refraction_flat(kappa: f64, level: f64) -> GenFun {
        GenFun::Refraction { kappa, profile: TargetProfile::Constant(level) }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GenFun::Reflection { .. } => "reflection",
            GenFun::Refraction { .. } => "refraction",
            GenFun::QuadraticOt => "quadratic_ot",
        }
    }

    pub fn profile(&self) -> Option<&TargetProfile> {
        match self {
            GenFun::Reflection { profile } | GenFun::Refraction { profile, .. } => Some(profile),
            GenFun::QuadraticOt => None,
        }
    }

    /// True when the target profile is a constant (the flat-target models
    /// with closed-form duals).
    pub fn is_flat(&self) -> bool {
        match self {
            GenFun::QuadraticOt => true,
            _ => self.profile().and_then(|p| p.constant_value()).is_some(),
        }
    }

    /// kappa' = sqrt(|kappa^2 - 1|) for refraction.
    pub fn kappa_prime(&self) -> Option<f64> {
        match self {
            GenFun::Refraction { kappa, .. } => Some((kappa * kappa - 1.0).abs().sqrt()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GenFun::Refraction { kappa, .. } = self {
            if *kappa <= 0.0 || (*kappa - 1.0).abs() < 1e-12 {
                return Err(Error::config("refraction requires kappa > 0, kappa != 1"));
            }
        }
        Ok(())
    }

    /// The variant's basic z-constraint at (x, y): z < 0 for reflection,
    /// z > kappa' |x-y| for refraction with kappa < 1, z > 0 for kappa > 1.
    pub fn z_basic_interval(&self, x: Vec2, y: Vec2) -> Interval {
        match self {
            GenFun::Reflection { .. } => Interval::new(f64::NEG_INFINITY, 0.0),
            GenFun::Refraction { kappa, .. } => {
                if *kappa < 1.0 {
                    let kp = self.kappa_prime().unwrap();
                    Interval::new(kp * (x - y).norm(), f64::INFINITY)
                } else {
                    Interval::new(0.0, f64::INFINITY)
                }
            }
            GenFun::QuadraticOt => Interval::ALL,
        }
    }

    /// The admissible interval I(x, y): the basic constraint intersected
    /// with the range on which u = g stays in J(x, y).
    pub fn z_interval(&self, x: Vec2, y: Vec2) -> Interval {
        match self {
            GenFun::QuadraticOt => Interval::ALL,
            GenFun::Reflection { profile } => {
                let d = (x - y).norm();
                let w = (x - y).dot(profile.gradient(y));
                // g(x, y, z_bar) = Phi + (x-y).DPhi, negative root
                let z_bar = -w - (w * w + d * d).sqrt();
                Interval::new(f64::NEG_INFINITY, z_bar)
            }
            GenFun::Refraction { profile, .. } => {
                let basic = self.z_basic_interval(x, y);
                let m1 = profile.value(y) + (x - y).dot(profile.gradient(y));
                // u < m1 translates to z > g*(x, y, m1) when m1 < Phi(y)
                let lo_j = if m1 < profile.value(y) {
                    self.refraction_dual_root(x, y, m1).unwrap_or(basic.lo)
                } else {
                    basic.lo
                };
                Interval::new(basic.lo.max(lo_j), f64::INFINITY)
            }
        }
    }

    /// Height interval J(x, y) = g(x, y, .)(I(x, y)).
    pub fn interval_j(&self, x: Vec2, y: Vec2) -> Interval {
        match self {
            GenFun::QuadraticOt => Interval::ALL,
            GenFun::Reflection { profile } => {
                let m = profile.value(y) + (x - y).dot(profile.gradient(y));
                Interval::new(m, f64::INFINITY)
            }
            GenFun::Refraction { kappa, profile } => {
                let phi = profile.value(y);
                let m1 = phi + (x - y).dot(profile.gradient(y));
                let kp = self.kappa_prime().unwrap();
                let m2 = phi - kappa.min(1.0) / kp * (x - y).norm();
                Interval::new(f64::NEG_INFINITY, m1.min(m2))
            }
        }
    }

    /// Closed-form dual root z with g(x, y, z) = u for refraction; valid
    /// when u < Phi(y).
    pub(crate) fn refraction_dual_root(&self, x: Vec2, y: Vec2, u: f64) -> Option<f64> {
        if let GenFun::Refraction { kappa, profile } = self {
            let k2m1 = kappa * kappa - 1.0;
            let m = k2m1.abs() * (profile.value(y) - u);
            if m <= 0.0 {
                return None;
            }
            let d2 = (x - y).norm_sq();
            let z = (m * kappa - (m * m + k2m1 * k2m1 * d2).sqrt()) / k2m1;
            Some(z)
        } else {
            None
        }
    }

    /// Evaluate g and its partials. Errors when `z` violates the variant's
    /// basic constraint.
    pub fn eval(&self, x: Vec2, y: Vec2, z: f64) -> Result<GJet> {
        match self {
            GenFun::QuadraticOt => Ok(GJet {
                g: x.dot(y) - z,
                g_x: y,
                g_y: x,
                g_z: -1.0,
                g_xx: Mat2::ZERO,
                g_xy: Mat2::IDENTITY,
                g_xz: Vec2::ZERO,
            }),
            GenFun::Reflection { profile } => {
                if z >= 0.0 {
                    return Err(Error::Admissibility {
                        variant: "reflection",
                        constraint: format!("z must be negative, got {z}"),
                    });
                }
                let d = x - y;
                let d2 = d.norm_sq();
                Ok(GJet {
                    g: profile.value(y) - 0.5 * z + d2 / (2.0 * z),
                    g_x: d / z,
                    g_y: profile.gradient(y) - d / z,
                    g_z: -0.5 - d2 / (2.0 * z * z),
                    g_xx: Mat2::scale(1.0 / z),
                    g_xy: Mat2::scale(-1.0 / z),
                    g_xz: d * (-1.0 / (z * z)),
                })
            }
            GenFun::Refraction { kappa, profile } => {
                let k2m1 = kappa * kappa - 1.0;
                let sigma = k2m1.signum();
                let mabs = k2m1.abs();
                let d = x - y;
                let basic = self.z_basic_interval(x, y);
                if !basic.contains(z) {
                    let c = if *kappa < 1.0 {
                        format!("z must exceed kappa'|x-y| = {:.6}, got {z}", basic.lo)
                    } else {
                        format!("z must be positive, got {z}")
                    };
                    return Err(Error::Admissibility { variant: "refraction", constraint: c });
                }
                let s2 = z * z + k2m1 * d.norm_sq();
                let s = s2.sqrt();
                if !(s > 0.0) {
                    return Err(Error::Admissibility {
                        variant: "refraction",
                        constraint: "degenerate optical path (s = 0)".into(),
                    });
                }
                let s3 = s * s2;
                Ok(GJet {
                    g: profile.value(y) - (kappa * z + s) / mabs,
                    g_x: d * (-sigma / s),
                    g_y: profile.gradient(y) + d * (sigma / s),
                    g_z: -(kappa + z / s) / mabs,
                    g_xx: Mat2::scale(-sigma / s) + Mat2::outer(d, d) * (mabs / s3),
                    g_xy: Mat2::scale(sigma / s) - Mat2::outer(d, d) * (mabs / s3),
                    g_xz: d * (sigma * z / s3),
                })
            }
        }
    }

    /// Compare the closed-form partials against centered finite differences
    /// at random admissible triples; returns the maximum relative error.
    pub fn fd_check(
        &self,
        omega: &crate::domains::DomainSpec,
        omega_star: &crate::domains::DomainSpec,
        n_samples: usize,
        seed: u64,
    ) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut used = 0usize;
        while used < n_samples {
            let x = crate::sampling::uniform_in_domain(omega, &mut rng);
            let y = crate::sampling::uniform_in_domain(omega_star, &mut rng);
            let z = match crate::sampling::sample_z(self, x, y, &mut rng) {
                Some(z) => z,
                None => continue,
            };
            let jet = self.eval(x, y, z)?;
            used += 1;
            let scale = 1.0 + jet.g.abs();
            let h = 1e-6 * scale.min(10.0);
            let gv = |x: Vec2, y: Vec2, z: f64| self.eval(x, y, z).map(|j| j.g);
            let ex = Vec2::new(h, 0.0);
            let ey = Vec2::new(0.0, h);
            // first derivatives of g
            let fd_gx = Vec2::new(
                (gv(x + ex, y, z)? - gv(x - ex, y, z)?) / (2.0 * h),
                (gv(x + ey, y, z)? - gv(x - ey, y, z)?) / (2.0 * h),
            );
            let fd_gy = Vec2::new(
                (gv(x, y + ex, z)? - gv(x, y - ex, z)?) / (2.0 * h),
                (gv(x, y + ey, z)? - gv(x, y - ey, z)?) / (2.0 * h),
            );
            let fd_gz = (gv(x, y, z + h)? - gv(x, y, z - h)?) / (2.0 * h);
            // second derivatives from the closed-form gradient
            let gxv = |x: Vec2, y: Vec2, z: f64| self.eval(x, y, z).map(|j| j.g_x);
            let fd_gxx = Mat2::from_cols(
                (gxv(x + ex, y, z)? - gxv(x - ex, y, z)?) / (2.0 * h),
                (gxv(x + ey, y, z)? - gxv(x - ey, y, z)?) / (2.0 * h),
            );
            let fd_gxy = Mat2::from_cols(
                (gxv(x, y + ex, z)? - gxv(x, y - ex, z)?) / (2.0 * h),
                (gxv(x, y + ey, z)? - gxv(x, y - ey, z)?) / (2.0 * h),
            );
            let fd_gxz = (gxv(x, y, z + h)? - gxv(x, y, z - h)?) / (2.0 * h);
            let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs());
            worst = worst
                .max((jet.g_x - fd_gx).norm() / (1.0 + jet.g_x.norm()))
                .max((jet.g_y - fd_gy).norm() / (1.0 + jet.g_y.norm()))
                .max(rel(jet.g_z, fd_gz))
                .max((jet.g_xx - fd_gxx.symmetrized()).max_abs() / (1.0 + jet.g_xx.max_abs()))
                .max((jet.g_xy - fd_gxy).max_abs() / (1.0 + jet.g_xy.max_abs()))
                .max((jet.g_xz - fd_gxz).norm() / (1.0 + jet.g_xz.norm()));
        }
        Ok(worst)
    }
}
