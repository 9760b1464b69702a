//! Maps a parsed config onto the library: builds the model, runs the
//! requested experiment, writes any CSV series into the output directory
//! and returns the JSON report plus a conclusiveness flag.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use stable_harnack::density::{default_grid_extent, default_grid_spacing};
use stable_harnack::geom::{norm, scale, spread_direction, Ball};
use stable_harnack::simulate::write_exit_samples_csv;
use stable_harnack::stats::ks_statistic_cdf;
use stable_harnack::{
    annulus_tail_decay, build_scheme, estimate_harnack_constant, estimate_hoelder_exponent,
    exit_lattice, exit_radius_cdf, green_point, green_profile_with_resolution,
    harmonic_extend_pooled, nested_offsets, run_oscillation_iteration, sample_exit_ensemble,
    time_density_grid, unit_density_grid, verify_average_bound, verify_average_comparison,
    verify_heat_kernel_bound, verify_near_diagonal_floor, write_claim_samples_csv, Error,
    ExteriorFunction, ExteriorTerm, GreenMcBudget, HarnackMcBudget, HarnackParams, Result,
    SpectralMeasure, StableModel,
};

use crate::config::{ExperimentConfig, MeasureSpec};

pub struct TaskOutcome {
    pub report: Value,
    pub series_files: Vec<String>,
    /// False when the experiment ran but could not certify its claim at
    /// the given budget; the process exits with status 2.
    pub conclusive: bool,
    pub model_hash: String,
}

/// Typed access to `[params]` that rejects unknown keys once every task
/// has taken what it understands.
struct Params {
    map: BTreeMap<String, String>,
}

impl Params {
    fn new(map: &BTreeMap<String, String>) -> Self {
        Params { map: map.clone() }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| Error::Precondition(format!("param '{key}' must be a number, got '{v}'"))),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v.parse::<usize>().map_err(|_| {
                Error::Precondition(format!("param '{key}' must be an integer, got '{v}'"))
            }),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.map.remove(key).unwrap_or_else(|| default.to_string())
    }

    fn vector<const D: usize>(&mut self, key: &str, default: [f64; D]) -> Result<[f64; D]> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != D {
                    return Err(Error::Precondition(format!(
                        "param '{key}' needs {D} comma-separated components, got '{v}'"
                    )));
                }
                let mut out = [0.0; D];
                for (o, p) in out.iter_mut().zip(&parts) {
                    *o = p.parse::<f64>().map_err(|_| {
                        Error::Precondition(format!("param '{key}': '{p}' is not a number"))
                    })?;
                }
                Ok(out)
            }
        }
    }

    /// Every task calls this once all its keys are taken, before any heavy
    /// work starts, so a typo fails fast.
    fn finish(&self) -> Result<()> {
        if let Some(key) = self.map.keys().next() {
            return Err(Error::Precondition(format!(
                "unknown param '{key}' for this task"
            )));
        }
        Ok(())
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value)
        .map_err(|e| Error::Precondition(format!("report not serializable: {e}")))
}

fn build_measure<const D: usize>(spec: &MeasureSpec) -> Result<SpectralMeasure<D>> {
    match spec {
        MeasureSpec::Isotropic { kappa } => SpectralMeasure::isotropic(*kappa),
        MeasureSpec::Cos2 { a, b } => SpectralMeasure::cos2(*a, *b),
        MeasureSpec::AxisAtoms { weight } => SpectralMeasure::axis_atoms(*weight),
    }
}

pub fn run_task(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TaskOutcome> {
    match cfg.model.dimension {
        2 => run_dim::<2>(cfg, out_dir),
        3 => run_dim::<3>(cfg, out_dir),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Builds the model (and nothing else); used by `validate`.
pub fn validate(cfg: &ExperimentConfig) -> Result<String> {
    fn build<const D: usize>(cfg: &ExperimentConfig) -> Result<String> {
        let measure = build_measure::<D>(&cfg.model.measure)?;
        let model = StableModel::new(cfg.model.alpha, measure, None)?;
        Ok(model.hash().to_string())
    }
    match cfg.model.dimension {
        2 => build::<2>(cfg),
        3 => build::<3>(cfg),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

fn run_dim<const D: usize>(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TaskOutcome> {
    let measure = build_measure::<D>(&cfg.model.measure)?;
    let model = StableModel::new(cfg.model.alpha, measure, None)?;
    let hash = model.hash().to_string();
    let mut p = Params::new(&cfg.params);
    let seed = cfg.seed;

    let (report, series_files, conclusive) = match cfg.task.as_str() {
        "symbol" => task_symbol(&model, &mut p, out_dir)?,
        "density" => task_density(&model, &mut p, out_dir)?,
        "green" => task_green(&model, &mut p, out_dir)?,
        "exit" => task_exit(&model, &mut p, out_dir, seed)?,
        "green_avg_bound" => task_avg_bound(&model, &mut p, out_dir, seed)?,
        "green_lower_bound" => task_lower_bound(&model, &mut p, out_dir, seed)?,
        "green_comparison" => task_comparison(&model, &mut p, out_dir, seed)?,
        "harnack" => task_harnack(&model, &mut p, out_dir, seed)?,
        "hoelder" => task_hoelder(&model, &mut p, out_dir, seed)?,
        "tail" => task_tail(&model, &mut p, out_dir)?,
        other => {
            return Err(Error::Precondition(format!("unknown task '{other}'")));
        }
    };
    p.finish()?;
    Ok(TaskOutcome {
        report,
        series_files,
        conclusive,
        model_hash: hash,
    })
}

type TaskResult = Result<(Value, Vec<String>, bool)>;

fn task_symbol<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
) -> TaskResult {
    let n_angles = p.usize("n_angles", 256)?;
    p.finish()?;
    if n_angles == 0 {
        return Err(Error::Precondition("n_angles must be positive".into()));
    }

    let mut csv = String::from(if D == 2 {
        "index,ux,uy,phi\n"
    } else {
        "index,ux,uy,uz,phi\n"
    });
    let mut phi_min = f64::INFINITY;
    let mut phi_max = f64::NEG_INFINITY;
    for j in 0..n_angles {
        let dir: [f64; D] = if D == 2 {
            let t = std::f64::consts::TAU * j as f64 / n_angles as f64;
            let mut d = [0.0; D];
            d[0] = t.cos();
            d[1] = t.sin();
            d
        } else {
            spread_direction::<D>(j)
        };
        let phi = model.char_exponent(&dir);
        phi_min = phi_min.min(phi);
        phi_max = phi_max.max(phi);
        let coords: Vec<String> = dir.iter().map(|c| format!("{c:.9e}")).collect();
        csv.push_str(&format!("{j},{},{phi:.12e}\n", coords.join(",")));
    }
    std::fs::write(out_dir.join("symbol.csv"), csv)?;

    // worst relative homogeneity defect over a deterministic sample
    let alpha = model.alpha();
    let mut defect: f64 = 0.0;
    for j in 0..100 {
        let dir = spread_direction::<D>(j);
        let radius = 0.3 + 0.35 * (j % 11) as f64;
        let c = 0.5 + 0.7 * (j % 7) as f64;
        let u = scale(&dir, radius);
        let lhs = model.char_exponent(&scale(&u, c));
        let rhs = c.powf(alpha) * model.char_exponent(&u);
        defect = defect.max((lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE));
    }

    let mut e1 = [0.0; D];
    e1[0] = 1.0;
    let report = json!({
        "alpha": alpha,
        "phi_min_on_sphere": model.symbol_min_on_sphere(),
        "phi_max_on_sphere": model.symbol_max_on_sphere(),
        "anisotropy_ratio": model.symbol_max_on_sphere() / model.symbol_min_on_sphere(),
        "phi_e1": model.char_exponent(&e1),
        "homogeneity_defect": defect,
        "n_angles": n_angles,
        "csv_phi_min": phi_min,
        "csv_phi_max": phi_max,
    });
    Ok((report, vec!["symbol.csv".into()], true))
}

fn task_density<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
) -> TaskResult {
    let t = p.f64("t", 1.0)?;
    let extent = p.f64("extent", default_grid_extent(D))?;
    let spacing = p.f64("spacing", default_grid_spacing(D))?;
    p.finish()?;

    let grid = if t == 1.0 {
        unit_density_grid(model, extent, spacing)?
    } else {
        time_density_grid(model, t, extent, spacing)?
    };
    let bound = verify_heat_kernel_bound(model, &grid)?;
    grid.write_axis_profile(0, &out_dir.join("density_axis.csv"))?;

    let origin = [0.0; D];
    let center = grid
        .interpolate(&origin)
        .ok_or_else(|| Error::GridResolution("origin outside grid".into()))?;
    let mass_defect = (grid.mass - 1.0).abs();
    let report = json!({
        "t": t,
        "extent": grid.extent,
        "spacing": grid.spacing,
        "nodes_per_axis": grid.n,
        "mass": grid.mass,
        "mass_defect": mass_defect,
        "ringing": grid.ringing,
        "value_at_origin": center,
        "heat_kernel_constant": bound.c_est,
        "tail_coefficient": grid.tail_coefficient,
    });
    Ok((
        report,
        vec!["density_axis.csv".into()],
        mass_defect <= 1e-3,
    ))
}

fn task_green<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
) -> TaskResult {
    let extent = p.f64("extent", default_grid_extent(D))?;
    let spacing = p.f64("spacing", default_grid_spacing(D))?;
    let resolution = p.usize("resolution", if D == 2 { 1024 } else { 64 })?;
    p.finish()?;

    let grid = unit_density_grid(model, extent, spacing)?;
    let profile = green_profile_with_resolution(model, &grid, resolution)?;

    let mut csv = String::from(if D == 2 {
        "index,x,y,g_unit\n"
    } else {
        "index,x,y,z,g_unit\n"
    });
    for (j, (dir, v)) in profile
        .directions
        .iter()
        .zip(&profile.values)
        .enumerate()
    {
        let coords: Vec<String> = dir.iter().map(|c| format!("{c:.9e}")).collect();
        csv.push_str(&format!("{j},{},{v:.12e}\n", coords.join(",")));
    }
    std::fs::write(out_dir.join("green_profile.csv"), csv)?;

    let mut e1 = [0.0; D];
    e1[0] = 1.0;
    let g_e1 = green_point(&profile, &e1)?;
    let mut defect: f64 = 0.0;
    for c in [0.5, 2.0, 8.0] {
        let lhs = green_point(&profile, &scale(&e1, c))?;
        let rhs = c.powf(model.alpha() - D as f64) * g_e1;
        defect = defect.max((lhs - rhs).abs() / rhs.abs());
    }
    let v_min = profile.values.iter().copied().fold(f64::INFINITY, f64::min);
    let v_max = profile
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let report = json!({
        "alpha": profile.alpha,
        "t_split": profile.t_split,
        "profile_min": v_min,
        "profile_max": v_max,
        "anisotropy_ratio": v_max / v_min,
        "g_at_unit_e1": g_e1,
        "homogeneity_defect": defect,
        "directions": profile.directions.len(),
    });
    Ok((report, vec!["green_profile.csv".into()], true))
}

fn task_exit<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
    seed: u64,
) -> TaskResult {
    let radius = p.f64("radius", 1.0)?;
    let n_paths = p.usize("n_paths", 10_000)?;
    let start = p.vector::<D>("start", [0.0; D])?;
    p.finish()?;
    if !(radius > 0.0) {
        return Err(Error::Precondition(format!(
            "radius must be positive, got {radius}"
        )));
    }

    let scheme = build_scheme(model, 0.01 * radius)?;
    let ball = Ball::centered(radius);
    let samples = sample_exit_ensemble(&scheme, &ball, &start, n_paths, seed)?;
    write_exit_samples_csv(&samples, &out_dir.join("exit_samples.csv"))?;

    let mean_steps =
        samples.iter().map(|s| s.steps as f64).sum::<f64>() / samples.len() as f64;
    let mean_radius = samples.iter().map(|s| norm(&s.position)).sum::<f64>()
        / samples.len() as f64;

    // distribution check against the closed-form law, available when the
    // model is rotation invariant and the walk starts at the center
    let isotropic_start = matches!(model.measure(), SpectralMeasure::Isotropic { .. })
        && norm(&start) == 0.0;
    let ks = if isotropic_start {
        let mut scaled: Vec<f64> = samples.iter().map(|s| norm(&s.position) / radius).collect();
        let alpha = model.alpha();
        Some(ks_statistic_cdf(&mut scaled, |s| {
            exit_radius_cdf(alpha, s).unwrap_or(0.0)
        }))
    } else {
        None
    };

    let conclusive = ks.is_none_or(|d| d <= 0.02);
    let report = json!({
        "radius": radius,
        "n_paths": n_paths,
        "mean_steps": mean_steps,
        "mean_exit_radius": mean_radius,
        "ks_vs_exact_radial_law": ks,
    });
    Ok((report, vec!["exit_samples.csv".into()], conclusive))
}

fn green_budget(p: &mut Params) -> Result<GreenMcBudget> {
    let d = GreenMcBudget::default();
    Ok(GreenMcBudget {
        lattice_target: p.usize("lattice_target", d.lattice_target)?,
        paths_per_node: p.usize("paths_per_node", d.paths_per_node)?,
        paths_per_point: p.usize("paths_per_point", d.paths_per_point)?,
    })
}

fn claim_outcome(report: stable_harnack::GreenBoundReport) -> TaskResult {
    let ok = report.conclusive && report.samples.iter().all(|s| s.pass || s.skipped);
    Ok((to_json(&report)?, vec!["claim_samples.csv".into()], ok))
}

fn task_avg_bound<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
    seed: u64,
) -> TaskResult {
    let x0 = p.vector::<D>("x0", [0.0; D])?;
    let r = p.f64("r", 1.0)?;
    let lambda = p.f64("lambda", 4.0 / 3.0)?;
    let a = p.f64("a", 0.9)?;
    let n_z = p.usize("n_z", 12)?;
    let extent = p.f64("extent", default_grid_extent(D))?;
    let spacing = p.f64("spacing", default_grid_spacing(D))?;
    let budget = green_budget(p)?;
    p.finish()?;

    let grid = unit_density_grid(model, extent, spacing)?;
    let profile = green_profile_with_resolution(model, &grid, if D == 2 { 1024 } else { 64 })?;
    let report =
        verify_average_bound(model, &profile, &x0, r, lambda, a, n_z, &budget, seed)?;
    write_claim_samples_csv(&report, &out_dir.join("claim_samples.csv"))?;
    claim_outcome(report)
}

fn task_lower_bound<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
    seed: u64,
) -> TaskResult {
    let x0 = p.vector::<D>("x0", [0.0; D])?;
    let r = p.f64("r", 1.0)?;
    let theta = p.f64("theta", 2.0)?;
    let a = p.f64("a", 0.9)?;
    let n_xbar = p.usize("n_xbar", 6)?;
    let extent = p.f64("extent", default_grid_extent(D))?;
    let spacing = p.f64("spacing", default_grid_spacing(D))?;
    let budget = green_budget(p)?;
    p.finish()?;

    let grid = unit_density_grid(model, extent, spacing)?;
    let profile = green_profile_with_resolution(model, &grid, if D == 2 { 1024 } else { 64 })?;
    let report =
        verify_near_diagonal_floor(model, &profile, &x0, r, theta, a, n_xbar, &budget, seed)?;
    write_claim_samples_csv(&report, &out_dir.join("claim_samples.csv"))?;
    claim_outcome(report)
}

fn task_comparison<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
    seed: u64,
) -> TaskResult {
    let x0 = p.vector::<D>("x0", [0.0; D])?;
    let r = p.f64("r", 1.0)?;
    let lambda = p.f64("lambda", 4.0 / 3.0)?;
    let theta = p.f64("theta", 2.0)?;
    let a = p.f64("a", 0.9)?;
    let delta1 = p.f64("delta1", 0.15 * r)?;
    let n_pairs = p.usize("n_pairs", 8)?;
    let extent = p.f64("extent", default_grid_extent(D))?;
    let spacing = p.f64("spacing", default_grid_spacing(D))?;
    let budget = green_budget(p)?;
    p.finish()?;

    let grid = unit_density_grid(model, extent, spacing)?;
    let profile = green_profile_with_resolution(model, &grid, if D == 2 { 1024 } else { 64 })?;
    let report = verify_average_comparison(
        model, &profile, &x0, r, lambda, theta, a, delta1, n_pairs, &budget, seed,
    )?;
    write_claim_samples_csv(&report, &out_dir.join("claim_samples.csv"))?;
    claim_outcome(report)
}

fn harnack_geometry<const D: usize>(p: &mut Params) -> Result<HarnackParams<D>> {
    let x0 = p.vector::<D>("x0", [0.0; D])?;
    let r = p.f64("r", 1.0)?;
    let r0 = p.f64("r0", r)?;
    let lambda = p.f64("lambda", 4.0 / 3.0)?;
    let theta = p.f64("theta", 2.0)?;
    let sigma = p.f64("sigma", 3.0)?;
    let a = p.f64("a", 0.9)?;
    HarnackParams::new(x0, r, r0, lambda, theta, sigma, a)
}

fn task_harnack<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
    seed: u64,
) -> TaskResult {
    let params = harnack_geometry::<D>(p)?;
    let ensemble_size = p.usize("ensemble", 50)?;
    let d = HarnackMcBudget::default();
    let budget = HarnackMcBudget {
        lattice_target: p.usize("lattice_target", d.lattice_target)?,
        paths_per_node: p.usize("paths_per_node", d.paths_per_node)?,
    };
    p.finish()?;

    let ensemble = estimate_harnack_constant(model, &params, ensemble_size, &budget, seed)?;

    let mut csv = String::from(
        "member,c_est,avg_term,avg_std_err,inf_term,inf_std_err,tail_term,vacuous\n",
    );
    for (i, rep) in ensemble.reports.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{}\n",
            rep.c_est,
            rep.avg_term,
            rep.avg_std_err,
            rep.inf_term,
            rep.inf_std_err,
            rep.tail_term,
            rep.vacuous
        ));
    }
    std::fs::write(out_dir.join("ensemble.csv"), csv)?;

    let conclusive = ensemble.reports.iter().all(|r| !r.vacuous);
    Ok((
        to_json(&ensemble)?,
        vec!["ensemble.csv".into()],
        conclusive,
    ))
}

fn exterior_data<const D: usize>(p: &mut Params, r: f64) -> Result<ExteriorFunction<D>> {
    let kind = p.string("data", "bump");
    let term = match kind.as_str() {
        "bump" => {
            let dist = p.f64("data_dist", 1.6 * r)?;
            let mut offset = [0.0; D];
            offset[0] = dist;
            offset[1] = 0.3 * r;
            ExteriorTerm::Bump {
                offset,
                width: p.f64("data_width", 1.0 * r)?,
                height: p.f64("data_level", 3.0)?,
            }
        }
        "shell" => {
            let lo = p.f64("data_dist", 1.2 * r)?;
            ExteriorTerm::Shell {
                lo,
                hi: lo + p.f64("data_width", 0.8 * r)?,
                level: p.f64("data_level", 3.0)?,
            }
        }
        "ramp" => ExteriorTerm::Ramp {
            radius: p.f64("data_dist", 1.5 * r)?,
            width: p.f64("data_width", 0.3 * r)?,
            level: p.f64("data_level", 3.0)?,
        },
        other => {
            return Err(Error::Precondition(format!(
                "unknown data kind '{other}' (expected bump, shell or ramp)"
            )))
        }
    };
    Ok(ExteriorFunction::new(vec![term]))
}

fn task_hoelder<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
    seed: u64,
) -> TaskResult {
    let params = harnack_geometry::<D>(p)?;
    let c1 = p.f64("c1", 2.0)?;
    let n_levels = p.usize("n_levels", 4)?;
    let per_level = p.usize("per_level", 40)?;
    let paths_per_node = p.usize("paths_per_node", 1500)?;
    let g = exterior_data::<D>(p, params.r)?;
    p.finish()?;

    let ball = params.extension_ball();
    let mut radii = vec![params.a * params.r];
    for k in 1..=n_levels {
        radii.push(params.r * params.theta.powi(-(k as i32)));
    }
    let (offsets, weights, spacing) = nested_offsets::<D>(&radii, per_level);
    let pool = exit_lattice(model, &ball, offsets, weights, spacing, paths_per_node, seed)?;
    let field = harmonic_extend_pooled(&g, &pool);

    let iteration = run_oscillation_iteration(&field, &g, &params, c1, n_levels)?;

    let mut csv = String::from("level,m,big_m,osc,case\n");
    for k in 0..=iteration.k_total {
        let case = if k == 0 {
            "-".to_string()
        } else {
            format!("{:?}", iteration.case_log[k - 1])
        };
        csv.push_str(&format!(
            "{k},{:.9e},{:.9e},{:.9e},{case}\n",
            iteration.m_seq[k], iteration.big_m_seq[k], iteration.osc_seq[k]
        ));
    }
    std::fs::write(out_dir.join("iteration.csv"), csv)?;

    let (fit_json, fit_note, fit_ok) =
        match estimate_hoelder_exponent(&field, params.r, params.theta, n_levels.max(3)) {
            Ok(fit) => {
                let mut csv = String::from("level,osc_measured,osc_std_err\n");
                for (n, (o, se)) in fit.osc.iter().zip(&fit.osc_se).enumerate() {
                    csv.push_str(&format!("{n},{o:.9e},{se:.9e}\n"));
                }
                std::fs::write(out_dir.join("oscillation.csv"), csv)?;
                (to_json(&fit)?, Value::Null, true)
            }
            Err(Error::NoiseFloor(msg)) => (Value::Null, json!(msg), false),
            Err(e) => return Err(e),
        };

    let clean = iteration.sandwich_violations == 0 && iteration.envelope_violations == 0;
    let report = json!({
        "iteration": to_json(&iteration)?,
        "exponent": fit_json,
        "exponent_note": fit_note,
    });
    let mut files = vec!["iteration.csv".into()];
    if fit_ok {
        files.push("oscillation.csv".into());
    }
    Ok((report, files, clean && fit_ok))
}

fn task_tail<const D: usize>(
    model: &StableModel<D>,
    p: &mut Params,
    out_dir: &Path,
) -> TaskResult {
    let params = harnack_geometry::<D>(p)?;
    let k = p.usize("k", 1)?;
    let j_max = p.usize("j_max", 5)?;
    p.finish()?;

    let report = annulus_tail_decay(model, &params, k, j_max)?;

    let mut csv = String::from("j,eta,fitted\n");
    for (i, eta) in report.eta.iter().enumerate() {
        let j = i + 1;
        let fitted = report.c_fit * report.zeta_fit.powf(-((j + 1) as f64));
        csv.push_str(&format!("{j},{eta:.9e},{fitted:.9e}\n"));
    }
    std::fs::write(out_dir.join("tail_decay.csv"), csv)?;

    let conclusive = report.monotone && report.max_residual <= 0.10;
    Ok((
        to_json(&report)?,
        vec!["tail_decay.csv".into()],
        conclusive,
    ))
}
