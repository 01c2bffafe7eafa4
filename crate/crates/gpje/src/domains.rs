//! Source and target domains: smooth defining functions, boundary
//! parameterizations, and the structured curvilinear grid used by the
//! discretization.
//!
//! All built-in shapes are star-shaped charts `x = c + r * P(theta)` with
//! `P(theta) = rho(theta) (cos theta, sin theta)` and `rho` smooth, positive
//! and pi-periodic. The pi-periodicity is what lets radial difference
//! stencils pass through the chart pole: the point `(-r, theta)` coincides
//! with `(r, theta + pi)`.

use crate::error::{Error, Result};
use crate::math::{Mat2, Vec2};

#[path = "domains_convexity.rs"]
pub mod convexity;

pub use convexity::{
    check_y_convexity, check_ystar_convexity, ConvexitySampler, YConvexityReport,
    YstarConvexityReport,
};

/// Shape family of a domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeKind {
    /// Disc of the given radius.
    Disc { radius: f64 },
    /// Axis-aligned ellipse with semi-axes `radii`.
    Ellipse { radii: Vec2 },
    /// Superellipse |x1/a|^q + |x2/b|^q = 1 with even exponent q >= 4;
    /// approximates a rounded rectangle while staying C^4.
    Superellipse { radii: Vec2, exponent: u32 },
    /// Disc with a cosine modulation of the boundary radius:
    /// rho = R (1 - amp cos(lobes * theta)). Nonconvex for
    /// amp (1 + lobes^2) > 1; used as a negative control.
    DentedDisc { radius: f64, amp: f64, lobes: u32 },
}

/// A smooth bounded domain with defining function, boundary chart and
/// normalization data.
#[derive(Clone, Debug)]
pub struct DomainSpec {
    pub kind: ShapeKind,
    pub center: Vec2,
    /// Multiplier applied to the raw defining function so that |D phi|
    /// averages 1 over the boundary (exactly 1 everywhere for discs).
    grad_scale: f64,
}

/// Boundary sample: position, frame and curvature at parameter `theta`.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub theta: f64,
    pub position: Vec2,
    /// Unit outer normal.
    pub normal: Vec2,
    /// Unit tangent (counterclockwise).
    pub tangent: Vec2,
    /// Signed curvature (positive for convex boundaries), units 1/length.
    pub curvature: f64,
}

fn unit(theta: f64) -> Vec2 {
    Vec2::new(theta.cos(), theta.sin())
}

impl DomainSpec {
    pub fn new(kind: ShapeKind, center: Vec2) -> Result<DomainSpec> {
        match kind {
            ShapeKind::Disc { radius } | ShapeKind::DentedDisc { radius, .. } if radius <= 0.0 => {
                return Err(Error::domain("radius must be positive"));
            }
            ShapeKind::Ellipse { radii } | ShapeKind::Superellipse { radii, .. }
                if radii.x <= 0.0 || radii.y <= 0.0 =>
            {
                return Err(Error::domain("radii must be positive"));
            }
            ShapeKind::Superellipse { exponent, .. } if exponent < 4 || exponent % 2 != 0 => {
                return Err(Error::domain("superellipse exponent must be even and >= 4"));
            }
            ShapeKind::DentedDisc { amp, lobes, .. } => {
                if !(0.0..1.0).contains(&amp) {
                    return Err(Error::domain("dent amplitude must lie in [0, 1)"));
                }
                if lobes == 0 || lobes % 2 != 0 {
                    return Err(Error::domain("dent lobe count must be even and positive"));
                }
            }
            _ => {}
        }
        let mut spec = DomainSpec { kind, center, grad_scale: 1.0 };
        spec.grad_scale = spec.compute_grad_scale();
        Ok(spec)
    }

    pub fn disc(center: Vec2, radius: f64) -> Result<DomainSpec> {
        DomainSpec::new(ShapeKind::Disc { radius }, center)
    }

    /// Same shape scaled about its center.
    pub fn scaled(&self, factor: f64) -> DomainSpec {
        let kind = match self.kind {
            ShapeKind::Disc { radius } => ShapeKind::Disc { radius: radius * factor },
            ShapeKind::Ellipse { radii } => ShapeKind::Ellipse { radii: radii * factor },
            ShapeKind::Superellipse { radii, exponent } => {
                ShapeKind::Superellipse { radii: radii * factor, exponent }
            }
            ShapeKind::DentedDisc { radius, amp, lobes } => {
                ShapeKind::DentedDisc { radius: radius * factor, amp, lobes }
            }
        };
        DomainSpec::new(kind, self.center).expect("scaling preserves validity")
    }

    /// Boundary radius rho(theta) and its first two derivatives.
    pub fn rho(&self, theta: f64) -> (f64, f64, f64) {
        match self.kind {
            ShapeKind::Disc { radius } => (radius, 0.0, 0.0),
            ShapeKind::Ellipse { radii } => rho_superellipse(radii, 2, theta),
            ShapeKind::Superellipse { radii, exponent } => {
                rho_superellipse(radii, exponent, theta)
            }
            ShapeKind::DentedDisc { radius, amp, lobes } => {
                let k = lobes as f64;
                let r = radius * (1.0 - amp * (k * theta).cos());
                let r1 = radius * amp * k * (k * theta).sin();
                let r2 = radius * amp * k * k * (k * theta).cos();
                (r, r1, r2)
            }
        }
    }

    /// Chart boundary curve P(theta) = rho(theta) e(theta) and derivatives.
    pub fn chart(&self, theta: f64) -> (Vec2, Vec2, Vec2) {
        let (r, r1, r2) = self.rho(theta);
        let e = unit(theta);
        let ep = e.perp();
        let p = e * r;
        let p1 = e * r1 + ep * r;
        let p2 = e * (r2 - r) + ep * (2.0 * r1);
        (p, p1, p2)
    }

    /// Physical point of chart coordinates (r, theta).
    pub fn chart_point(&self, r: f64, theta: f64) -> Vec2 {
        let (p, _, _) = self.chart(theta);
        self.center + p * r
    }

    /// Inverse chart: (r, theta) of a physical point. r < 1 inside.
    pub fn chart_coords(&self, x: Vec2) -> (f64, f64) {
        let xi = x - self.center;
        let theta = xi.angle();
        let (rho, _, _) = self.rho(theta);
        (xi.norm() / rho, theta)
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.chart_coords(x).0 < 1.0
    }

    pub fn boundary_point(&self, theta: f64) -> BoundaryPoint {
        let (p, p1, p2) = self.chart(theta);
        let tangent = p1.normalized();
        let normal = Vec2::new(tangent.y, -tangent.x);
        let curvature = p1.cross(p2) / p1.norm().powi(3);
        BoundaryPoint { theta, position: self.center + p, normal, tangent, curvature }
    }

    /// Defining function with gradient and Hessian: phi < 0 inside,
    /// phi = 0 on the boundary, phi > 0 outside.
    pub fn phi(&self, x: Vec2) -> (f64, Vec2, Mat2) {
        let s = self.grad_scale;
        let xi = x - self.center;
        match self.kind {
            ShapeKind::Disc { radius } => {
                // normalized so |D phi| = 1 on the boundary
                let v = (xi.norm_sq() - radius * radius) / (2.0 * radius);
                (v, xi / radius, Mat2::scale(1.0 / radius))
            }
            ShapeKind::Ellipse { radii } => {
                let q1 = xi.x / radii.x;
                let q2 = xi.y / radii.y;
                let v = q1 * q1 + q2 * q2 - 1.0;
                let g = Vec2::new(2.0 * q1 / radii.x, 2.0 * q2 / radii.y);
                let h = Mat2::diag(2.0 / (radii.x * radii.x), 2.0 / (radii.y * radii.y));
                (v * s, g * s, h * s)
            }
            ShapeKind::Superellipse { radii, exponent } => {
                let q = exponent as i32;
                let q1 = xi.x / radii.x;
                let q2 = xi.y / radii.y;
                let v = q1.powi(q) + q2.powi(q) - 1.0;
                let g = Vec2::new(
                    q as f64 * q1.powi(q - 1) / radii.x,
                    q as f64 * q2.powi(q - 1) / radii.y,
                );
                let hq = (q * (q - 1)) as f64;
                let h = Mat2::diag(
                    hq * q1.powi(q - 2) / (radii.x * radii.x),
                    hq * q2.powi(q - 2) / (radii.y * radii.y),
                );
                (v * s, g * s, h * s)
            }
            ShapeKind::DentedDisc { radius, .. } => {
                // phi = (|xi|^2 - rho(theta)^2) * s; smooth away from the
                // center, which is all the convexity checks ever touch.
                let nsq = xi.norm_sq();
                if nsq < 1e-24 {
                    let (rho, _, _) = self.rho(0.0);
                    return (s * (nsq - rho * rho), Vec2::ZERO, Mat2::scale(2.0 * s));
                }
                let theta = xi.angle();
                let (rho, rho1, rho2) = self.rho(theta);
                let m = rho * rho; // rho^2 as a function of theta
                let m1 = 2.0 * rho * rho1;
                let m2 = 2.0 * (rho1 * rho1 + rho * rho2);
                let dtheta = xi.perp() / nsq;
                let rot = Mat2::new(0.0, -1.0, 1.0, 0.0);
                let d2theta =
                    (rot - Mat2::outer(xi.perp(), xi) * (2.0 / nsq)) * (1.0 / nsq);
                let v = nsq - m;
                let g = xi * 2.0 - dtheta * m1;
                let h = Mat2::scale(2.0)
                    - Mat2::outer(dtheta, dtheta) * m2
                    - d2theta * m1;
                let _ = radius;
                (v * s, g * s, (h * s).symmetrized())
            }
        }
    }

    fn compute_grad_scale(&self) -> f64 {
        match self.kind {
            ShapeKind::Disc { .. } => 1.0,
            _ => {
                // normalize the mean of |D phi_raw| over the boundary to 1
                let n = 512;
                let mut acc = 0.0;
                for j in 0..n {
                    let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                    let x = self.chart_point(1.0, theta);
                    let raw = DomainSpec { grad_scale: 1.0, ..self.clone() };
                    let (_, g, _) = raw.phi(x);
                    acc += g.norm();
                }
                n as f64 / acc
            }
        }
    }

    /// Area by boundary quadrature of (1/2) * integral of cross(P, P');
    /// spectrally accurate for these smooth charts.
    pub fn area(&self) -> f64 {
        let n = 4096;
        let mut acc = 0.0;
        for j in 0..n {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            let (p, p1, _) = self.chart(theta);
            acc += p.cross(p1);
        }
        0.5 * acc * 2.0 * std::f64::consts::PI / n as f64
    }

    pub fn diameter(&self) -> f64 {
        let n = 512;
        let mut rmax = 0.0f64;
        for j in 0..n {
            let theta = std::f64::consts::PI * j as f64 / n as f64;
            let (pa, _, _) = self.chart(theta);
            let (pb, _, _) = self.chart(theta + std::f64::consts::PI);
            rmax = rmax.max((pa - pb).norm());
        }
        rmax
    }

    /// Largest distance from the center to the boundary.
    pub fn bounding_radius(&self) -> f64 {
        let n = 512;
        (0..n)
            .map(|j| self.rho(2.0 * std::f64::consts::PI * j as f64 / n as f64).0)
            .fold(0.0, f64::max)
    }

    /// Foot point of x on the boundary and the (unsigned) distance: coarse
    /// scan for the nearest boundary sample, then Newton on the
    /// stationarity condition of |x - c - P(t)|^2.
    pub fn project_boundary(&self, x: Vec2) -> (Vec2, f64) {
        let xi = x - self.center;
        let mut t = xi.angle();
        let mut best = f64::INFINITY;
        for k in 0..64 {
            let cand = std::f64::consts::TAU * k as f64 / 64.0;
            let (p, _, _) = self.chart(cand);
            let d = (xi - p).norm_sq();
            if d < best {
                best = d;
                t = cand;
            }
        }
        for _ in 0..24 {
            let (p, p1, p2) = self.chart(t);
            let d = xi - p;
            let f = d.dot(p1);
            let fp = d.dot(p2) - p1.norm_sq();
            if fp.abs() < 1e-300 {
                break;
            }
            let dt = f / fp;
            t -= dt;
            if dt.abs() < 1e-14 {
                break;
            }
        }
        let (p, _, _) = self.chart(t);
        let foot = self.center + p;
        (foot, (x - foot).norm())
    }

    /// Distance to the closed domain: 0 inside, boundary distance outside.
    pub fn distance_outside(&self, x: Vec2) -> f64 {
        if self.contains(x) {
            0.0
        } else {
            self.project_boundary(x).1
        }
    }
}

fn rho_superellipse(radii: Vec2, exponent: u32, theta: f64) -> (f64, f64, f64) {
    let q = exponent as i32;
    let qf = q as f64;
    let (c, s) = (theta.cos(), theta.sin());
    let (ca, sb) = (c / radii.x, s / radii.y);
    // S = (cos/a)^q + (sin/b)^q with q even, and its theta-derivatives
    let v = ca.powi(q) + sb.powi(q);
    let v1 = qf * (ca.powi(q - 1) * (-s / radii.x) + sb.powi(q - 1) * (c / radii.y));
    let v2 = qf
        * ((qf - 1.0) * ca.powi(q - 2) * (s / radii.x) * (s / radii.x)
            - ca.powi(q - 1) * (c / radii.x)
            + (qf - 1.0) * sb.powi(q - 2) * (c / radii.y) * (c / radii.y)
            - sb.powi(q - 1) * (s / radii.y));
    let rho = v.powf(-1.0 / qf);
    let rho1 = -rho * v1 / (qf * v);
    let rho2 = -(rho1 * v1 + rho * v2) / (qf * v) + rho * v1 * v1 / (qf * v * v);
    (rho, rho1, rho2)
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Node of the structured grid.
#[derive(Clone, Debug)]
pub struct GridNode {
    pub pos: Vec2,
    pub r: f64,
    pub theta: f64,
    /// Chart Jacobian [x_r | x_theta].
    pub jac: Mat2,
    pub jac_inv: Mat2,
    /// Chart second derivatives: x_{r theta} and x_{theta theta}
    /// (x_{rr} = 0 for these charts).
    pub x_rt: Vec2,
    pub x_tt: Vec2,
    pub cell_measure: f64,
    /// Lies on the domain boundary ring (r = 1).
    pub on_boundary: bool,
}

/// Structured curvilinear grid over a [`DomainSpec`], ring-major storage,
/// with optional collar rings extending past the boundary (used by the
/// envelope construction).
#[derive(Clone, Debug)]
pub struct Grid {
    pub domain: DomainSpec,
    /// Rings inside the closed domain; ring `n_r - 1` lies on the boundary.
    pub n_r: usize,
    pub n_theta: usize,
    /// Extra rings past the boundary (chart radius > 1).
    pub extra_rings: usize,
    pub h_r: f64,
    pub h_theta: f64,
    pub nodes: Vec<GridNode>,
}

/// Computational-coordinate jet of a grid field at a node.
#[derive(Clone, Copy, Debug)]
pub struct FieldJet {
    pub u: f64,
    pub du: Vec2,
    pub hess: Mat2,
}

/// Finite-difference weights of one stencil neighbor.
#[derive(Clone, Copy, Debug, Default)]
pub struct StencilEntry {
    pub idx: usize,
    pub w_u: f64,
    pub w_r: f64,
    pub w_t: f64,
    pub w_rr: f64,
    pub w_rt: f64,
    pub w_tt: f64,
}

impl Grid {
    pub fn build(domain: &DomainSpec, n_r: usize, n_theta: usize) -> Result<Grid> {
        Grid::build_extended(domain, n_r, n_theta, 0)
    }

    /// Build with `extra_rings` collar rings past the boundary.
    pub fn build_extended(
        domain: &DomainSpec,
        n_r: usize,
        n_theta: usize,
        extra_rings: usize,
    ) -> Result<Grid> {
        if n_r < 8 || n_theta < 8 {
            return Err(Error::domain("grid must have at least 8 rings and 8 columns"));
        }
        if n_theta % 2 != 0 {
            return Err(Error::domain(
                "angular node count must be even (radial stencils cross the chart pole)",
            ));
        }
        if let ShapeKind::DentedDisc { lobes, .. } = domain.kind {
            if lobes % 2 != 0 {
                return Err(Error::domain(
                    "shape kind unsupported for curvilinear generation: odd dent lobes",
                ));
            }
        }
        let h_r = 1.0 / (n_r as f64 - 0.5);
        let h_theta = 2.0 * std::f64::consts::PI / n_theta as f64;
        let total = n_r + extra_rings;
        let mut nodes = Vec::with_capacity(total * n_theta);
        for i in 0..total {
            let r = (i as f64 + 0.5) * h_r;
            for j in 0..n_theta {
                let theta = j as f64 * h_theta;
                let (p, p1, p2) = domain.chart(theta);
                let jac = Mat2::from_cols(p, p1 * r);
                let jac_inv = jac.inverse().ok_or_else(|| {
                    Error::domain(format!("degenerate chart Jacobian at ring {i}, column {j}"))
                })?;
                // cell extends half a spacing each way, clipped to the
                // domain at the boundary ring
                let r_lo = (r - 0.5 * h_r).max(0.0);
                let r_hi = if i + 1 == n_r { 1.0 } else { r + 0.5 * h_r };
                let cell = 0.5 * (r_hi * r_hi - r_lo * r_lo) * p.cross(p1) * h_theta;
                nodes.push(GridNode {
                    pos: domain.center + p * r,
                    r,
                    theta,
                    jac,
                    jac_inv,
                    x_rt: p1,
                    x_tt: p2 * r,
                    cell_measure: cell,
                    on_boundary: i + 1 == n_r,
                });
            }
        }
        Ok(Grid { domain: domain.clone(), n_r, n_theta, extra_rings, h_r, h_theta, nodes })
    }

    pub fn total_rings(&self) -> usize {
        self.n_r + self.extra_rings
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn idx(&self, ring: usize, col: usize) -> usize {
        ring * self.n_theta + col.rem_euclid(self.n_theta)
    }

    #[inline]
    pub fn ring_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_theta, idx % self.n_theta)
    }

    /// Index of the radial neighbor `ring - 1`, crossing the pole when
    /// ring = 0 (which lands on the opposite column of ring 0).
    #[inline]
    fn inner_idx(&self, ring: usize, col: usize) -> usize {
        if ring == 0 {
            self.idx(0, col + self.n_theta / 2)
        } else {
            self.idx(ring - 1, col)
        }
    }

    pub fn node(&self, ring: usize, col: usize) -> &GridNode {
        &self.nodes[self.idx(ring, col)]
    }

    /// Sum of cell measures over rings inside the domain.
    pub fn domain_area(&self) -> f64 {
        self.nodes
            .iter()
            .take(self.n_r * self.n_theta)
            .map(|n| n.cell_measure)
            .sum()
    }

    /// Stencil weights for (u, u_r, u_t, u_rr, u_rt, u_tt) at a node.
    /// Centered in the interior, pole-crossing at ring 0, one-sided in r
    /// at the outermost ring.
    pub fn stencil(&self, ring: usize, col: usize) -> Vec<StencilEntry> {
        let mut entries: Vec<StencilEntry> = Vec::with_capacity(12);
        let mut add = |idx: usize, w: [f64; 6]| {
            if let Some(e) = entries.iter_mut().find(|e| e.idx == idx) {
                e.w_u += w[0];
                e.w_r += w[1];
                e.w_t += w[2];
                e.w_rr += w[3];
                e.w_rt += w[4];
                e.w_tt += w[5];
            } else {
                entries.push(StencilEntry {
                    idx,
                    w_u: w[0],
                    w_r: w[1],
                    w_t: w[2],
                    w_rr: w[3],
                    w_rt: w[4],
                    w_tt: w[5],
                });
            }
        };
        let (hr, ht) = (self.h_r, self.h_theta);
        let last = self.total_rings() - 1;
        let c = self.idx(ring, col);
        let jm = self.idx(ring, col + self.n_theta - 1);
        let jp = self.idx(ring, col + 1);
        add(c, [1.0, 0.0, 0.0, 0.0, 0.0, -2.0 / (ht * ht)]);
        add(jm, [0.0, 0.0, -0.5 / ht, 0.0, 0.0, 1.0 / (ht * ht)]);
        add(jp, [0.0, 0.0, 0.5 / ht, 0.0, 0.0, 1.0 / (ht * ht)]);
        if ring < last {
            let im = self.inner_idx(ring, col);
            let ip = self.idx(ring + 1, col);
            add(im, [0.0, -0.5 / hr, 0.0, 1.0 / (hr * hr), 0.0, 0.0]);
            add(ip, [0.0, 0.5 / hr, 0.0, 1.0 / (hr * hr), 0.0, 0.0]);
            add(c, [0.0, 0.0, 0.0, -2.0 / (hr * hr), 0.0, 0.0]);
            // mixed derivative corners
            let (imm, imp) = if ring == 0 {
                (
                    self.idx(0, col + self.n_theta / 2 + self.n_theta - 1),
                    self.idx(0, col + self.n_theta / 2 + 1),
                )
            } else {
                (self.idx(ring - 1, col + self.n_theta - 1), self.idx(ring - 1, col + 1))
            };
            let ipm = self.idx(ring + 1, col + self.n_theta - 1);
            let ipp = self.idx(ring + 1, col + 1);
            let w4 = 0.25 / (hr * ht);
            add(ipp, [0.0, 0.0, 0.0, 0.0, w4, 0.0]);
            add(imm, [0.0, 0.0, 0.0, 0.0, w4, 0.0]);
            add(ipm, [0.0, 0.0, 0.0, 0.0, -w4, 0.0]);
            add(imp, [0.0, 0.0, 0.0, 0.0, -w4, 0.0]);
        } else {
            // one-sided second-order differences into the domain
            let i1 = self.idx(ring - 1, col);
            let i2 = self.idx(ring - 2, col);
            let i3 = self.idx(ring - 3, col);
            add(c, [0.0, 1.5 / hr, 0.0, 2.0 / (hr * hr), 0.0, 0.0]);
            add(i1, [0.0, -2.0 / hr, 0.0, -5.0 / (hr * hr), 0.0, 0.0]);
            add(i2, [0.0, 0.5 / hr, 0.0, 4.0 / (hr * hr), 0.0, 0.0]);
            add(i3, [0.0, 0.0, 0.0, -1.0 / (hr * hr), 0.0, 0.0]);
            // u_rt: one-sided in r of the centered theta-derivative
            let w = 0.5 / ht;
            for (node, wr) in [(ring, 1.5 / hr), (ring - 1, -2.0 / hr), (ring - 2, 0.5 / hr)] {
                add(self.idx(node, col + 1), [0.0, 0.0, 0.0, 0.0, wr * w, 0.0]);
                add(self.idx(node, col + self.n_theta - 1), [0.0, 0.0, 0.0, 0.0, -wr * w, 0.0]);
            }
        }
        entries
    }

    /// Cartesian jet (value, gradient, Hessian) of a grid field at a node.
    pub fn field_jet(&self, values: &[f64], ring: usize, col: usize) -> FieldJet {
        debug_assert_eq!(values.len(), self.n_nodes());
        let mut u = 0.0;
        let mut ur = 0.0;
        let mut ut = 0.0;
        let mut urr = 0.0;
        let mut urt = 0.0;
        let mut utt = 0.0;
        for e in self.stencil(ring, col) {
            let v = values[e.idx];
            u += e.w_u * v;
            ur += e.w_r * v;
            ut += e.w_t * v;
            urr += e.w_rr * v;
            urt += e.w_rt * v;
            utt += e.w_tt * v;
        }
        let node = &self.nodes[self.idx(ring, col)];
        self.transform_jet(node, u, Vec2::new(ur, ut), Mat2::new(urr, urt, urt, utt))
    }

    /// Transform a computational jet to Cartesian coordinates.
    pub fn transform_jet(&self, node: &GridNode, u: f64, grad_c: Vec2, hess_c: Mat2) -> FieldJet {
        let jinv = node.jac_inv;
        let jinv_t = jinv.transpose();
        let du = jinv_t.mul_vec(grad_c);
        // subtract chart curvature terms: H_comp -= du_k * d2 x_k
        let x2x = Mat2::new(0.0, node.x_rt.x, node.x_rt.x, node.x_tt.x);
        let x2y = Mat2::new(0.0, node.x_rt.y, node.x_rt.y, node.x_tt.y);
        let corrected = hess_c - x2x * du.x - x2y * du.y;
        let hess = jinv_t.mul_mat(corrected).mul_mat(jinv).symmetrized();
        FieldJet { u, du, hess }
    }

    /// Gradient-to-node-weight map at a node: for each stencil neighbor,
    /// the contribution of its value to (Du, Hess). Used by Newton assembly.
    pub fn jet_weights(&self, ring: usize, col: usize) -> Vec<(usize, f64, Vec2, Mat2)> {
        let node = &self.nodes[self.idx(ring, col)];
        let jinv = node.jac_inv;
        let jinv_t = jinv.transpose();
        let x2x = Mat2::new(0.0, node.x_rt.x, node.x_rt.x, node.x_tt.x);
        let x2y = Mat2::new(0.0, node.x_rt.y, node.x_rt.y, node.x_tt.y);
        self.stencil(ring, col)
            .into_iter()
            .map(|e| {
                let dgrad = jinv_t.mul_vec(Vec2::new(e.w_r, e.w_t));
                let dcomp = Mat2::new(e.w_rr, e.w_rt, e.w_rt, e.w_tt)
                    - x2x * dgrad.x
                    - x2y * dgrad.y;
                let dhess = jinv_t.mul_mat(dcomp).mul_mat(jinv).symmetrized();
                (e.idx, e.w_u, dgrad, dhess)
            })
            .collect()
    }

    /// Write nodes as CSV: index, ring, col, x, y, boundary flag, cell measure.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,ring,col,x,y,boundary,cell_measure\n");
        for (k, n) in self.nodes.iter().enumerate() {
            let (i, j) = self.ring_col(k);
            out.push_str(&format!(
                "{},{},{},{:.17e},{:.17e},{},{:.17e}\n",
                k, i, j, n.pos.x, n.pos.y, u8::from(n.on_boundary), n.cell_measure
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn disc_defining_function_matches_stated_form() {
        let d = DomainSpec::disc(Vec2::ZERO, 1.0).unwrap();
        let (phi, dphi, _) = d.phi(Vec2::ZERO);
        assert_eq!(phi, -0.5);
        assert_eq!(dphi, Vec2::ZERO);
        let (phi_b, dphi_b, _) = d.phi(Vec2::new(1.0, 0.0));
        assert_eq!(phi_b, 0.0);
        assert!((dphi_b - Vec2::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ellipse_boundary_zero_level() {
        let d = DomainSpec::new(ShapeKind::Ellipse { radii: Vec2::new(2.0, 1.0) }, Vec2::ZERO)
            .unwrap();
        let (phi, _, _) = d.phi(Vec2::new(2.0, 0.0));
        assert!(phi.abs() < 1e-14);
        // implicit equation residual along the whole chart boundary
        for j in 0..64 {
            let x = d.chart_point(1.0, 2.0 * PI * j as f64 / 64.0);
            assert!(d.phi(x).0.abs() < 1e-12);
        }
    }

    #[test]
    fn phi_gradient_hessian_consistent_fd() {
        let shapes = [
            DomainSpec::disc(Vec2::new(0.3, -0.1), 1.4).unwrap(),
            DomainSpec::new(ShapeKind::Ellipse { radii: Vec2::new(2.0, 1.0) }, Vec2::ZERO)
                .unwrap(),
            DomainSpec::new(
                ShapeKind::Superellipse { radii: Vec2::new(1.0, 1.0), exponent: 4 },
                Vec2::ZERO,
            )
            .unwrap(),
            DomainSpec::new(
                ShapeKind::DentedDisc { radius: 1.0, amp: 0.12, lobes: 4 },
                Vec2::ZERO,
            )
            .unwrap(),
        ];
        let h = 1e-5;
        for d in &shapes {
            for k in 0..24 {
                let theta = 2.0 * PI * k as f64 / 24.0;
                let x = d.chart_point(0.93, theta);
                let (_, g, hess) = d.phi(x);
                let fx = |p: Vec2| d.phi(p).0;
                let gx = (fx(x + Vec2::new(h, 0.0)) - fx(x - Vec2::new(h, 0.0))) / (2.0 * h);
                let gy = (fx(x + Vec2::new(0.0, h)) - fx(x - Vec2::new(0.0, h))) / (2.0 * h);
                assert!((g - Vec2::new(gx, gy)).norm() < 2e-8, "grad mismatch for {:?}", d.kind);
                let gfun = |p: Vec2| d.phi(p).1;
                let hcol0 = (gfun(x + Vec2::new(h, 0.0)) - gfun(x - Vec2::new(h, 0.0))) / (2.0 * h);
                let hcol1 = (gfun(x + Vec2::new(0.0, h)) - gfun(x - Vec2::new(0.0, h))) / (2.0 * h);
                let hfd = Mat2::from_cols(hcol0, hcol1).symmetrized();
                assert!((hess - hfd).max_abs() < 2e-7, "hess mismatch for {:?}", d.kind);
            }
        }
    }

    #[test]
    fn phi_sign_change_once_along_rays() {
        let d = DomainSpec::new(
            ShapeKind::Superellipse { radii: Vec2::new(1.5, 1.0), exponent: 6 },
            Vec2::new(0.2, 0.0),
        )
        .unwrap();
        for k in 0..32 {
            let theta = 2.0 * PI * k as f64 / 32.0;
            let dir = Vec2::new(theta.cos(), theta.sin());
            let mut signs = 0;
            let mut last = d.phi(d.center).0.signum();
            for s in 1..400 {
                let x = d.center + dir * (s as f64 * 0.01);
                let sg = d.phi(x).0.signum();
                if sg != last {
                    signs += 1;
                    last = sg;
                }
            }
            assert_eq!(signs, 1, "phi must change sign exactly once along a ray");
        }
    }

    #[test]
    fn boundary_frame_orthonormal_and_curvature() {
        let d = DomainSpec::disc(Vec2::ZERO, 2.0).unwrap();
        for k in 0..16 {
            let b = d.boundary_point(2.0 * PI * k as f64 / 16.0);
            assert!(b.normal.dot(b.tangent).abs() < 1e-14);
            assert!((b.normal.norm() - 1.0).abs() < 1e-14);
            assert!((b.tangent.norm() - 1.0).abs() < 1e-14);
            assert!((b.curvature - 0.5).abs() < 1e-13);
            // outer normal points away from center
            assert!(b.normal.dot(b.position - d.center) > 0.0);
        }
        let dent = DomainSpec::new(
            ShapeKind::DentedDisc { radius: 1.0, amp: 0.12, lobes: 4 },
            Vec2::ZERO,
        )
        .unwrap();
        // dent bottom has negative curvature
        assert!(dent.boundary_point(0.0).curvature < 0.0);
    }

    #[test]
    fn grid_counts_and_boundary_ring() {
        let d = DomainSpec::disc(Vec2::ZERO, 1.0).unwrap();
        let g = Grid::build(&d, 8, 8).unwrap();
        assert_eq!(g.n_nodes(), 64);
        for j in 0..8 {
            let n = g.node(7, j);
            assert!(n.on_boundary);
            assert!((n.pos.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_cell_measures_sum_to_area() {
        let d = DomainSpec::disc(Vec2::ZERO, 1.0).unwrap();
        let g = Grid::build(&d, 64, 64).unwrap();
        assert!((g.domain_area() - PI).abs() / PI < 1e-3);

        let se = DomainSpec::new(
            ShapeKind::Superellipse { radii: Vec2::new(1.0, 0.8), exponent: 4 },
            Vec2::ZERO,
        )
        .unwrap();
        let gse = Grid::build(&se, 64, 64).unwrap();
        assert!((gse.domain_area() - se.area()).abs() / se.area() < 1e-3);
        // boundary nodes satisfy the defining equation
        for j in 0..64 {
            assert!(se.phi(gse.node(63, j).pos).0.abs() < 1e-10);
        }
    }

    #[test]
    fn grid_refinement_improves_area() {
        let d = DomainSpec::new(
            ShapeKind::DentedDisc { radius: 1.0, amp: 0.05, lobes: 4 },
            Vec2::ZERO,
        )
        .unwrap();
        let exact = d.area();
        let e1 = (Grid::build(&d, 16, 16).unwrap().domain_area() - exact).abs();
        let e2 = (Grid::build(&d, 32, 32).unwrap().domain_area() - exact).abs();
        assert!(e2 <= e1 / 2.0 + 1e-12);
    }

    #[test]
    fn field_jet_exact_on_radial_quadratics() {
        // u = |x - c|^2/2 is theta-independent in chart coordinates over a
        // disc centered at c, and quadratic in r: the stencils are exact,
        // including the pole-crossing ring and the one-sided boundary ring.
        let c = Vec2::new(0.1, -0.2);
        let d = DomainSpec::disc(c, 1.3).unwrap();
        let g = Grid::build(&d, 16, 32).unwrap();
        let vals: Vec<f64> = g.nodes.iter().map(|n| 0.5 * (n.pos - c).norm_sq()).collect();
        for (ring, col) in [(0usize, 3usize), (7, 11), (14, 0), (15, 5)] {
            let jet = g.field_jet(&vals, ring, col);
            let p = g.node(ring, col).pos;
            assert!((jet.u - 0.5 * (p - c).norm_sq()).abs() < 1e-12);
            assert!((jet.du - (p - c)).norm() < 1e-10, "ring {ring}");
            assert!((jet.hess - Mat2::IDENTITY).max_abs() < 1e-9, "ring {ring} hess {:?}", jet.hess);
        }
    }

    #[test]
    fn field_jet_convergence_on_smooth_field() {
        let d = DomainSpec::new(ShapeKind::Ellipse { radii: Vec2::new(1.3, 0.9) }, Vec2::ZERO)
            .unwrap();
        let f = |p: Vec2| (p.x * 1.3).sin() * (0.8 * p.y).cosh() + 0.3 * p.x * p.y;
        let grad_exact = |p: Vec2| {
            let (sx, cx) = (1.3 * p.x).sin_cos();
            let (shy, chy) = ((0.8 * p.y).sinh(), (0.8 * p.y).cosh());
            Vec2::new(1.3 * cx * chy + 0.3 * p.y, 0.8 * sx * shy + 0.3 * p.x)
        };
        let hess_exact = |p: Vec2| {
            let (sx, cx) = (1.3 * p.x).sin_cos();
            let (shy, chy) = ((0.8 * p.y).sinh(), (0.8 * p.y).cosh());
            Mat2::new(
                -1.69 * sx * chy,
                1.04 * cx * shy + 0.3,
                1.04 * cx * shy + 0.3,
                0.64 * sx * chy,
            )
        };
        // gradients are uniformly second order; Hessians are second order
        // away from the pole and first order on the innermost rings (the
        // 1/r metric amplification), so measure them in the area-weighted
        // RMS norm where the pole contribution is negligible.
        let mut grad_errs = Vec::new();
        let mut hess_errs = Vec::new();
        for n in [20usize, 40] {
            let g = Grid::build(&d, n, 2 * n).unwrap();
            let vals: Vec<f64> = g.nodes.iter().map(|nd| f(nd.pos)).collect();
            let mut gmax = 0.0f64;
            let mut hsum = 0.0f64;
            let mut wsum = 0.0f64;
            for ring in 0..g.n_r {
                for col in 0..g.n_theta {
                    let jet = g.field_jet(&vals, ring, col);
                    let node = g.node(ring, col);
                    gmax = gmax.max((jet.du - grad_exact(node.pos)).norm());
                    let he = (jet.hess - hess_exact(node.pos)).max_abs();
                    hsum += he * he * node.cell_measure;
                    wsum += node.cell_measure;
                }
            }
            grad_errs.push(gmax);
            hess_errs.push((hsum / wsum).sqrt());
        }
        assert!(
            grad_errs[0] / grad_errs[1] > 3.0,
            "gradient: expected ~4x drop, got {grad_errs:?}"
        );
        assert!(
            hess_errs[0] / hess_errs[1] > 2.8,
            "hessian rms: expected ~4x drop, got {hess_errs:?}"
        );
    }
}
