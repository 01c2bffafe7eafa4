//! Pipeline orchestration behind the CLI: check, init, solve, verify and
//! export, with file artifacts (CSV fields, JSON reports) under the
//! configured output directory.

use crate::conditions::{self, ConditionEntry, ConditionStatus, SamplerCfg};
use crate::config::RunConfig;
use crate::domains::{self, Grid};
use crate::dualmaps;
use crate::error::{Error, Result};
use crate::gconvex;
use crate::interval::Interval;
use crate::math::Vec2;
use crate::solver::{self, HomotopyParams};
use crate::verify;
use serde::Serialize;

/// FNV-1a content hash of the configuration text, recorded in metadata so
/// artifacts can be matched to the exact inputs that produced them.
pub fn content_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1_0000_01b3);
    }
    format!("{h:016x}")
}

fn write_out(cfg: &RunConfig, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(&cfg.output.dir)?;
    std::fs::write(cfg.out_path(name), contents)?;
    Ok(())
}

fn write_json<T: Serialize>(cfg: &RunConfig, name: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("serialization: {e}")))?;
    write_out(cfg, name, &text)
}

fn field_csv(grid: &Grid, values: &[f64]) -> String {
    let mut out = String::from("index,ring,col,x,y,u\n");
    for (k, v) in values.iter().enumerate() {
        let (i, j) = grid.ring_col(k);
        let p = grid.nodes[k].pos;
        out.push_str(&format!("{},{},{},{:.17e},{:.17e},{:.17e}\n", k, i, j, p.x, p.y, v));
    }
    out
}

fn read_field_csv(path: &std::path::Path, expected: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| Error::MissingArtifact { what: format!("{}", path.display()) })?;
    let mut values = Vec::with_capacity(expected);
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let v = line
            .rsplit(',')
            .next()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::config(format!("{}: bad row at line {}", path.display(), ln + 1)))?;
        values.push(v);
    }
    if values.len() != expected {
        return Err(Error::config(format!(
            "{}: {} rows, grid expects {}",
            path.display(),
            values.len(),
            expected
        )));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub model: String,
    pub entries: Vec<ConditionEntry>,
    pub constants: conditions::A5Constants,
    pub y_convexity: domains::YConvexityReport,
    pub ystar_convexity: domains::YstarConvexityReport,
    pub u_window: Interval,
    /// All conditions required by the existence theory hold at the
    /// sampled tolerance.
    pub ok: bool,
    pub summary: String,
}

pub fn cmd_check(cfg: &RunConfig) -> Result<CheckReport> {
    let gf = cfg.genfun()?;
    let omega = cfg.source_domain()?;
    let omega_star = cfg.target_domain()?;
    let u_window = match cfg.check.u_window {
        Some([lo, hi]) => Interval::new(lo, hi),
        None => conditions::default_u_window(&gf, &omega, &omega_star, cfg.check.refraction_delta)?,
    };
    let sampler = SamplerCfg {
        n_samples: cfg.check.n_samples,
        n_directions: cfg.check.n_directions,
        seed: cfg.seed,
        u_window,
        tol: cfg.check.tolerance,
        refraction_delta: cfg.check.refraction_delta,
    };
    let mut entries = conditions::check_a1_a2_a1star(&gf, &omega, &omega_star, &sampler)?;
    let a3w = conditions::check_a3w(&gf, &omega, &omega_star, &sampler)?;
    let (a4w, a4sw) = conditions::check_a4(&gf, &omega, &omega_star, &sampler)?;
    let constants = conditions::constants_a5(&gf, &omega, &omega_star, cfg.check.refraction_delta)?;
    let conv_sampler = domains::ConvexitySampler {
        n_samples: cfg.check.n_samples.min(400),
        n_directions: cfg.check.n_directions.max(32),
        seed: cfg.seed,
        tol: cfg.check.tolerance,
    };
    let y_conv = domains::check_y_convexity(&gf, &omega, &omega_star, u_window, &conv_sampler)?;
    let ystar_conv =
        domains::check_ystar_convexity(&gf, &omega_star, &omega, u_window, &conv_sampler)?;
    let ok_entry = |e: &ConditionEntry| {
        matches!(e.status, ConditionStatus::Holds | ConditionStatus::HoldsStrictly)
    };
    let a3_strict = a3w.status == ConditionStatus::HoldsStrictly;
    let monotone_ok = ok_entry(&a4w) || ok_entry(&a4sw) || a3_strict;
    let ok = entries.iter().all(ok_entry)
        && ok_entry(&a3w)
        && monotone_ok
        && y_conv.uniformly_convex
        && ystar_conv.convex;
    let summary = format!(
        "A1 {:?}, A2 {:?}, A1* {:?}, A3w {:?}{}, A4w {:?}, A4*w {:?}, Y-convex {} (margin \
         {:.3e}), Y*-convex {} (margin {:.3e})",
        entries[0].status,
        entries[1].status,
        entries[2].status,
        a3w.status,
        if a3_strict { " (A3 strict)" } else { "" },
        a4w.status,
        a4sw.status,
        y_conv.uniformly_convex,
        y_conv.min_margin,
        ystar_conv.convex,
        ystar_conv.min_support_margin,
    );
    entries.push(a3w);
    entries.push(a4w);
    entries.push(a4sw);
    let report = CheckReport {
        model: gf.name().into(),
        entries,
        constants,
        y_convexity: y_conv,
        ystar_convexity: ystar_conv,
        u_window,
        ok,
        summary,
    };
    write_json(cfg, "check_report.json", &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// init
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct InitArtifacts {
    pub path: String,
    pub skip_envelope: bool,
    pub rho: f64,
    pub seed_report: gconvex::InitialReport,
    /// Ellipticity margin of the field handed to the solver.
    pub min_lambda: f64,
    /// Largest boundary offset |phi*(Tu0)| the continuation must close.
    pub max_boundary_offset: f64,
    pub collar_cells: usize,
    pub eps_moll: Option<f64>,
    pub n_boundary: usize,
}

pub fn cmd_init(cfg: &RunConfig, force: bool, skip_envelope: bool) -> Result<InitArtifacts> {
    if !force {
        let check = cmd_check(cfg)?;
        if !check.ok {
            return Err(Error::Verification {
                what: format!("condition check failed ({}); pass --force to override", check.summary),
            });
        }
    }
    let gf = cfg.genfun()?;
    let omega = cfg.source_domain()?;
    let omega_star = cfg.target_domain()?;
    let grid = Grid::build(&omega, cfg.grid.n_r, cfg.grid.n_theta)?;
    let skip = skip_envelope || cfg.init.skip_envelope;
    let y0 = Vec2::new(cfg.init.y0[0], cfg.init.y0[1]);
    let z0 = cfg.init.z0;

    let (values, rho, seed_report, eps_used) = if skip {
        let rho = match cfg.init.rho {
            Some(r) => r,
            None => gconvex::auto_rho(&gf, &omega, &omega_star, y0, z0)?,
        };
        let (field, _, report) = gconvex::build_initial(
            &gf,
            &omega,
            &omega_star,
            y0,
            z0,
            rho,
            &grid,
            cfg.check.refraction_delta,
        )?;
        (field.values, rho, report, None)
    } else {
        // the construction runs on a source shrunk by half the collar, so
        // the mollified envelope reaches the true boundary with its
        // mapping image already spread over the target
        let collar_chart = cfg.init.collar_cells as f64 * grid.h_r;
        let omega_s = omega.scaled(1.0 - 0.5 * collar_chart);
        let rho = match cfg.init.rho {
            Some(r) => r,
            None => gconvex::auto_rho(&gf, &omega_s, &omega_star, y0, z0)?,
        };
        let grid_s = Grid::build(&omega_s, cfg.grid.n_r, cfg.grid.n_theta)?;
        let (_, seed, report) = gconvex::build_initial(
            &gf,
            &omega_s,
            &omega_star,
            y0,
            z0,
            rho,
            &grid_s,
            cfg.check.refraction_delta,
        )?;
        let env_grid = Grid::build_extended(
            &omega_s,
            cfg.grid.n_r,
            cfg.grid.n_theta,
            cfg.init.collar_cells + 2,
        )?;
        let env = gconvex::envelope_extend(
            &gf,
            &seed,
            &omega_s,
            &omega_star,
            cfg.init.n_boundary,
            &env_grid,
        )?;
        let collar_phys = collar_chart * omega.bounding_radius();
        // the mollification radius must resolve the grid spacing and the
        // boundary-family angular spacing, and the one-sided stencils on
        // the boundary ring need the kink fully smoothed; 0.4 collar sits
        // under the 0.5 admissibility bound with margin for both
        let eps = cfg.init.eps_moll.unwrap_or(0.4 * collar_phys);
        if eps >= 0.5 * collar_phys {
            return Err(Error::config(format!(
                "eps_moll = {eps:.4} must stay under half the collar width {collar_phys:.4}"
            )));
        }
        let field = gconvex::mollify_adjust(&gf, &env, cfg.init.t_adj, eps, &grid)?;
        (field.values, rho, report, Some(eps))
    };
    let field = gconvex::ellipticity_field(&gf, &grid, &values)?;
    if field.min_lambda <= 0.0 {
        return Err(Error::Ellipticity {
            what: format!("initial field not elliptic on the solver grid: {}", field.min_lambda),
        });
    }
    let mut max_off = 0.0f64;
    for col in 0..grid.n_theta {
        let k = grid.idx(grid.n_r - 1, col);
        let jet = grid.field_jet(&values, grid.n_r - 1, col);
        let dual =
            dualmaps::solve_duals(&gf, &crate::Jet1::new(grid.nodes[k].pos, jet.u, jet.du))?;
        max_off = max_off.max(omega_star.phi(dual.y).0.abs());
    }
    write_out(cfg, "u0.csv", &field_csv(&grid, &values))?;
    let artifacts = InitArtifacts {
        path: cfg.out_path("u0.csv").display().to_string(),
        skip_envelope: skip,
        rho,
        seed_report,
        min_lambda: field.min_lambda,
        max_boundary_offset: max_off,
        collar_cells: cfg.init.collar_cells,
        eps_moll: eps_used,
        n_boundary: cfg.init.n_boundary,
    };
    write_json(cfg, "init_report.json", &artifacts)?;
    Ok(artifacts)
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SolveMeta {
    pub config_hash: String,
    pub grid: (usize, usize),
    pub tau: f64,
    pub fstar_scale: f64,
    pub eps_final: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub interior_residual: f64,
    pub boundary_residual: f64,
    pub min_lambda: f64,
    pub min_obliqueness: f64,
    pub max_grad: f64,
    pub k0: f64,
    pub wall_time_s: f64,
    pub n_trace_rows: usize,
    pub messages: Vec<String>,
    /// The additive mode is pinned only through the eps term at t = 1;
    /// reported solutions are defined modulo that pin.
    pub pin_note: String,
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveMeta> {
    let started = std::time::Instant::now();
    let gf = cfg.genfun()?;
    let omega = cfg.source_domain()?;
    let omega_star = cfg.target_domain()?;
    let grid = Grid::build(&omega, cfg.grid.n_r, cfg.grid.n_theta)?;
    let u0 = read_field_csv(&cfg.out_path("u0.csv"), grid.n_nodes())?;
    let (problem, _) = solver::Problem::new(
        gf,
        omega,
        omega_star,
        grid,
        cfg.source_density(),
        cfg.target_density(),
        cfg.check.refraction_delta,
    )?;
    let params: HomotopyParams = cfg.homotopy_params();
    let (state, trace) = solver::continuation_solve(&problem, u0, &params)?;
    let final_asm = solver::residual(&state, &problem, &params)?;
    // artifacts
    write_out(cfg, "solution.csv", &field_csv(&problem.grid, &state.u))?;
    let mut trace_csv = String::from(
        "t,eps,newton_iters,interior_sup,boundary_sup,min_lambda,min_obliqueness,clamp_penalty,max_grad,drift\n",
    );
    for r in &trace.rows {
        trace_csv.push_str(&format!(
            "{:.10e},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            r.t,
            r.eps,
            r.newton_iters,
            r.interior_sup,
            r.boundary_sup,
            r.min_lambda,
            r.min_obliqueness,
            r.clamp_penalty,
            r.max_grad,
            r.drift
        ));
    }
    write_out(cfg, "trace.csv", &trace_csv)?;
    let meta = SolveMeta {
        config_hash: content_hash(&cfg.emit()),
        grid: (cfg.grid.n_r, cfg.grid.n_theta),
        tau: state.tau,
        fstar_scale: problem.fstar_scale,
        eps_final: state.eps,
        t_final: state.t,
        newton_tol: params.newton_tol,
        interior_residual: final_asm.interior_sup,
        boundary_residual: final_asm.boundary_sup,
        min_lambda: final_asm.min_lambda,
        min_obliqueness: final_asm.min_obliqueness,
        max_grad: final_asm.max_grad,
        k0: problem.k0,
        wall_time_s: started.elapsed().as_secs_f64(),
        n_trace_rows: trace.rows.len(),
        messages: trace.messages.clone(),
        pin_note: "additive constant fixed by the eps-pin against u0".into(),
    };
    write_json(cfg, "meta.json", &meta)?;
    Ok(meta)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct VerifyArtifacts {
    pub ray: Option<verify::RayReport>,
    pub mass: verify::MassReport,
    pub ok: bool,
    pub notes: Vec<String>,
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyArtifacts> {
    let gf = cfg.genfun()?;
    let omega = cfg.source_domain()?;
    let omega_star = cfg.target_domain()?;
    let grid = Grid::build(&omega, cfg.grid.n_r, cfg.grid.n_theta)?;
    let u = read_field_csv(&cfg.out_path("solution.csv"), grid.n_nodes())?;
    let mut notes = Vec::new();
    let mut ok = true;
    // ray tracing applies to the optical models only
    let ray = if matches!(gf, crate::GenFun::QuadraticOt) {
        notes.push("quadratic transport has no ray model; ray trace skipped".into());
        None
    } else {
        let r = verify::trace_field(&gf, &grid, &u, cfg.verify.n_rays, cfg.seed)?;
        if r.max_deviation > cfg.verify.ray_tol {
            ok = false;
            notes.push(format!(
                "ray deviation {:.3e} exceeds tolerance {:.3e}",
                r.max_deviation, cfg.verify.ray_tol
            ));
        }
        if r.miss_count > 0 {
            ok = false;
            notes.push(format!("{} rays missed the target graph", r.miss_count));
        }
        if cfg.verify.write_worst_csv {
            let mut csv = String::from("x1,x2,deviation\n");
            for (p, d) in &r.worst {
                csv.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", p[0], p[1], d));
            }
            write_out(cfg, "worst_rays.csv", &csv)?;
        }
        Some(r)
    };
    // energy rescale must match the solve
    let (problem, _) = solver::Problem::new(
        gf.clone(),
        omega.clone(),
        omega_star.clone(),
        grid.clone(),
        cfg.source_density(),
        cfg.target_density(),
        cfg.check.refraction_delta,
    )?;
    let mass = verify::pushforward_histogram(
        &gf,
        &grid,
        &u,
        &problem.f,
        &problem.fstar,
        problem.fstar_scale,
        &omega_star,
        cfg.verify.bins,
        cfg.verify.n_mass_samples,
        cfg.seed,
    )?;
    if mass.max_bin_mismatch > cfg.verify.mass_tol {
        ok = false;
        notes.push(format!(
            "bin mismatch {:.3e} exceeds tolerance {:.3e}",
            mass.max_bin_mismatch, cfg.verify.mass_tol
        ));
    }
    if mass.containment_failures > 0 {
        ok = false;
        notes.push(format!("{} samples escaped the target", mass.containment_failures));
    }
    let artifacts = VerifyArtifacts { ray, mass, ok, notes };
    write_json(cfg, "verify_report.json", &artifacts)?;
    Ok(artifacts)
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

pub fn cmd_export(cfg: &RunConfig, what: &str) -> Result<String> {
    let omega = cfg.source_domain()?;
    let grid = Grid::build(&omega, cfg.grid.n_r, cfg.grid.n_theta)?;
    let name = match what {
        "grid" => {
            write_out(cfg, "grid.csv", &grid.to_csv())?;
            "grid.csv"
        }
        "tmap" => {
            let gf = cfg.genfun()?;
            let u = read_field_csv(&cfg.out_path("solution.csv"), grid.n_nodes())?;
            let t = dualmaps::map_t(&gf, &grid, &u)?;
            let mut csv = String::from("index,x1,x2,t1,t2,det_dtu,lambda_min\n");
            for k in 0..grid.n_nodes() {
                let p = grid.nodes[k].pos;
                csv.push_str(&format!(
                    "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    k, p.x, p.y, t.tu[k].x, t.tu[k].y, t.det_dtu[k], t.lambda_min[k]
                ));
            }
            write_out(cfg, "tmap.csv", &csv)?;
            "tmap.csv"
        }
        other => {
            return Err(Error::config(format!(
                "unknown export '{other}' (expected 'grid' or 'tmap')"
            )))
        }
    };
    Ok(cfg.out_path(name).display().to_string())
}
