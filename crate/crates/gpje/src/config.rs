//! Run configuration: a sectioned TOML file describing the model, the
//! domains, densities, grid, construction and continuation parameters.
//! Parsing round-trips (emit, parse, compare equal), and all randomized
//! procedures draw from the single top-level seed.

use crate::density::Density;
use crate::domains::{DomainSpec, ShapeKind};
use crate::error::{Error, Result};
use crate::genfun::{GenFun, TargetProfile};
use crate::math::{Mat2, Vec2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    pub domain: DomainsConfig,
    pub density: DensitiesConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub homotopy: HomotopyConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "quadratic_ot" | "reflection" | "refraction"
    pub variant: String,
    /// Refraction index ratio (n1/n2); required for refraction.
    pub kappa: Option<f64>,
    /// Target height profile for the optical models.
    pub profile: Option<ProfileConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ProfileConfig {
    #[serde(rename = "constant")]
    Constant { value: f64 },
    #[serde(rename = "quadratic")]
    Quadratic { constant: f64, linear: [f64; 2], quadratic: [f64; 3] },
    #[serde(rename = "radial_bump")]
    RadialBump { base: f64, amplitude: f64, width: f64, center: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainsConfig {
    pub source: DomainConfig,
    pub target: DomainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// "disc" | "ellipse" | "superellipse" | "dented_disc"
    pub shape: String,
    #[serde(default)]
    pub center: [f64; 2],
    pub radius: Option<f64>,
    pub radii: Option<[f64; 2]>,
    pub exponent: Option<u32>,
    pub amp: Option<f64>,
    pub lobes: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum DensityConfig {
    #[serde(rename = "constant")]
    Constant { value: f64 },
    /// Terms (i, j, c) meaning c * x1^i * x2^j.
    #[serde(rename = "polynomial")]
    Polynomial { terms: Vec<(u32, u32, f64)> },
    #[serde(rename = "radial_bump")]
    RadialBump { base: f64, amplitude: f64, width: f64, center: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitiesConfig {
    pub source: DensityConfig,
    pub target: DensityConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_r: usize,
    pub n_theta: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    /// Seed focus in the target (length units).
    pub y0: [f64; 2],
    /// Seed parameter; the g-affine level g(., y0, z0) anchors the heights.
    pub z0: f64,
    /// Cap radius; scanned automatically when absent.
    pub rho: Option<f64>,
    /// Collar width of the envelope extension, in radial grid cells.
    pub collar_cells: usize,
    /// Mollification radius (length units); collar/4 when absent.
    pub eps_moll: Option<f64>,
    /// Exterior adjustment weight.
    pub t_adj: f64,
    /// Boundary samples of the envelope family.
    pub n_boundary: usize,
    /// Use the bare seed with the boundary-offset homotopy instead of the
    /// envelope construction.
    pub skip_envelope: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            y0: [0.0, 0.0],
            z0: 0.0,
            rho: None,
            collar_cells: 5,
            eps_moll: None,
            t_adj: 1.0,
            n_boundary: 256,
            skip_envelope: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomotopyConfig {
    pub tau: Option<f64>,
    pub dt0: f64,
    pub dt_min: f64,
    pub eps0: f64,
    pub eps_factor: f64,
    pub eps_min: f64,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub delta_min: f64,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        let p = crate::solver::HomotopyParams::default();
        HomotopyConfig {
            tau: None,
            dt0: p.dt0,
            dt_min: p.dt_min,
            eps0: p.eps0,
            eps_factor: p.eps_factor,
            eps_min: p.eps_min,
            newton_tol: p.newton_tol,
            max_newton_iters: p.max_newton_iters,
            delta_min: p.delta_min,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub n_samples: usize,
    pub n_directions: usize,
    pub tolerance: f64,
    /// Height window J; derived from the A5 constants when absent.
    pub u_window: Option<[f64; 2]>,
    /// Slack for the refraction A5 constants with kappa < 1.
    pub refraction_delta: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            n_samples: 400,
            n_directions: 32,
            tolerance: 1e-6,
            u_window: None,
            refraction_delta: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub n_rays: usize,
    pub n_mass_samples: usize,
    pub bins: usize,
    pub ray_tol: f64,
    pub mass_tol: f64,
    /// Also write the worst-deviation samples as CSV.
    pub write_worst_csv: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n_rays: 10_000,
            n_mass_samples: 1_000_000,
            bins: 16,
            ray_tol: 1e-4,
            mass_tol: 0.02,
            write_worst_csv: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::config(format!("{e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn genfun(&self) -> Result<GenFun> {
        let profile = match &self.model.profile {
            None => TargetProfile::Constant(0.0),
            Some(ProfileConfig::Constant { value }) => TargetProfile::Constant(*value),
            Some(ProfileConfig::Quadratic { constant, linear, quadratic }) => {
                TargetProfile::Quadratic {
                    c0: *constant,
                    b: Vec2::new(linear[0], linear[1]),
                    q: Mat2::new(quadratic[0], quadratic[1], quadratic[1], quadratic[2]),
                }
            }
            Some(ProfileConfig::RadialBump { base, amplitude, width, center }) => {
                TargetProfile::RadialBump {
                    base: *base,
                    amplitude: *amplitude,
                    width: *width,
                    center: Vec2::new(center[0], center[1]),
                }
            }
        };
        let gf = match self.model.variant.as_str() {
            "quadratic_ot" => GenFun::QuadraticOt,
            "reflection" => GenFun::Reflection { profile },
            "refraction" => {
                let kappa = self
                    .model
                    .kappa
                    .ok_or_else(|| Error::config("refraction requires model.kappa"))?;
                GenFun::Refraction { kappa, profile }
            }
            other => return Err(Error::config(format!("unknown model variant '{other}'"))),
        };
        gf.validate()?;
        Ok(gf)
    }

    pub fn source_domain(&self) -> Result<DomainSpec> {
        domain_from(&self.domain.source)
    }

    pub fn target_domain(&self) -> Result<DomainSpec> {
        domain_from(&self.domain.target)
    }

    pub fn source_density(&self) -> Density {
        density_from(&self.density.source)
    }

    pub fn target_density(&self) -> Density {
        density_from(&self.density.target)
    }

    pub fn homotopy_params(&self) -> crate::solver::HomotopyParams {
        let h = &self.homotopy;
        crate::solver::HomotopyParams {
            tau_override: h.tau,
            dt0: h.dt0,
            dt_min: h.dt_min,
            eps0: h.eps0,
            eps_factor: h.eps_factor,
            eps_min: h.eps_min,
            newton_tol: h.newton_tol,
            max_newton_iters: h.max_newton_iters,
            delta_min: h.delta_min,
            refraction_delta: self.check.refraction_delta,
            ..crate::solver::HomotopyParams::default()
        }
    }

    pub fn out_path(&self, name: &str) -> std::path::PathBuf {
        std::path::Path::new(&self.output.dir).join(name)
    }
}

fn domain_from(c: &DomainConfig) -> Result<DomainSpec> {
    let center = Vec2::new(c.center[0], c.center[1]);
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::config(format!("domain shape '{}' requires {what}", c.shape)))
    };
    let kind = match c.shape.as_str() {
        "disc" => ShapeKind::Disc { radius: need(c.radius, "radius")? },
        "ellipse" => {
            let r = c.radii.ok_or_else(|| Error::config("ellipse requires radii"))?;
            ShapeKind::Ellipse { radii: Vec2::new(r[0], r[1]) }
        }
        "superellipse" => {
            let r = c.radii.ok_or_else(|| Error::config("superellipse requires radii"))?;
            ShapeKind::Superellipse {
                radii: Vec2::new(r[0], r[1]),
                exponent: c.exponent.unwrap_or(4),
            }
        }
        "dented_disc" => ShapeKind::DentedDisc {
            radius: need(c.radius, "radius")?,
            amp: need(c.amp, "amp")?,
            lobes: c.lobes.unwrap_or(4),
        },
        other => return Err(Error::config(format!("unknown domain shape '{other}'"))),
    };
    DomainSpec::new(kind, center)
}

fn density_from(c: &DensityConfig) -> Density {
    match c {
        DensityConfig::Constant { value } => Density::Constant(*value),
        DensityConfig::Polynomial { terms } => Density::Polynomial { terms: terms.clone() },
        DensityConfig::RadialBump { base, amplitude, width, center } => Density::RadialBump {
            base: *base,
            amplitude: *amplitude,
            width: *width,
            center: Vec2::new(center[0], center[1]),
        },
    }
}
