//! Numerical design and verification of near-field reflectors and
//! refractors, posed as second boundary value problems for generated
//! prescribed Jacobian equations
//! `det[D^2 u - A(., u, Du)] = B(., u, Du)`, `Tu(Omega) = Omega*`.
//!
//! The crate is organized around the pipeline `check -> init -> solve ->
//! verify`:
//!
//! * [`domains`] — source/target domains, curvilinear grids, and the
//!   generated-geometry convexity checks;
//! * [`genfun`] — the catalogue of generating functions (reflection,
//!   refraction, quadratic transport) with exact partials;
//! * [`dualmaps`] — the dual quantities Y, Z, E, A, B, Q, g* and the
//!   discrete T-map;
//! * [`conditions`] — sampled verification of the structure conditions
//!   A1, A2, A1*, A3w/A3, A4w/A4*w, A5;
//! * [`gconvex`] — constructive g-convexity: the uniformly elliptic seed
//!   field, its envelope extension past the boundary, and mollification;
//! * [`solver`] — damped-Newton homotopy continuation for the discretized
//!   equation with its oblique boundary condition;
//! * [`verify`] — physics-level validation by ray tracing and pushforward
//!   mass conservation;
//! * [`config`] / [`pipeline`] — the TOML-driven CLI plumbing.
//!
//! The mdbook under `book/` walks through the same pipeline with runnable
//! snippets; those snippets compile here as doctests.

pub mod band;
pub mod conditions;
pub mod config;
pub mod density;
pub mod domains;
pub mod dualmaps;
pub mod error;
pub mod gconvex;
pub mod genfun;
pub mod interval;
pub mod math;
pub mod pipeline;
pub mod sampling;
pub mod solver;
pub mod verify;

pub use density::Density;
pub use domains::{BoundaryPoint, DomainSpec, Grid, ShapeKind};
pub use dualmaps::{DualEval, Jet1};
pub use error::{Error, Result};
pub use genfun::{GenFun, TargetProfile};
pub use interval::Interval;
pub use math::{Mat2, Vec2};

// The book's runnable snippets double as doctests so the guide cannot
// drift from the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(generating_functions, "../../../book/src/generating-functions.md");
    chapter!(dual_maps, "../../../book/src/dual-maps.md");
    chapter!(structure_conditions, "../../../book/src/structure-conditions.md");
    chapter!(initial_data, "../../../book/src/initial-data.md");
    chapter!(continuation, "../../../book/src/continuation.md");
    chapter!(verification, "../../../book/src/verification.md");
    chapter!(cli, "../../../book/src/cli.md");
}
