//! Intensity densities f on the source and f* on the target.

use crate::math::Vec2;
use std::sync::Arc;

/// Positive intensity on a domain. `Custom` carries an arbitrary closure
/// and is only constructible through the API (manufactured-solution tests);
/// configuration files produce the closed-form variants.
#[derive(Clone)]
pub enum Density {
    Constant(f64),
    /// Sum of terms c * x1^i * x2^j.
    Polynomial { terms: Vec<(u32, u32, f64)> },
    /// base + amplitude * exp(-|x - center|^2 / (2 width^2)).
    RadialBump { base: f64, amplitude: f64, width: f64, center: Vec2 },
    Custom(Arc<dyn Fn(Vec2) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Density::Constant(c) => write!(f, "Constant({c})"),
            Density::Polynomial { terms } => write!(f, "Polynomial({terms:?})"),
            Density::RadialBump { base, amplitude, width, center } => write!(
                f,
                "RadialBump(base={base}, amp={amplitude}, width={width}, center={center:?})"
            ),
            Density::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Density {
    pub fn value(&self, x: Vec2) -> f64 {
        match self {
            Density::Constant(c) => *c,
            Density::Polynomial { terms } => terms
                .iter()
                .map(|&(i, j, c)| c * x.x.powi(i as i32) * x.y.powi(j as i32))
                .sum(),
            Density::RadialBump { base, amplitude, width, center } => {
                let d = x - *center;
                base + amplitude * (-d.norm_sq() / (2.0 * width * width)).exp()
            }
            Density::Custom(f) => f(x),
        }
    }

    pub fn custom<F: Fn(Vec2) -> f64 + Send + Sync + 'static>(f: F) -> Density {
        Density::Custom(Arc::new(f))
    }
}
