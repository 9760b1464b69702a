//! Green functions: the free kernel of the process, the killed kernel of
//! balls via exit sampling, and drivers that measure the averaged upper
//! bound, the near-diagonal lower bound and the averaged comparison
//! between the two.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::TransitionDensityGrid;
use crate::error::{Error, Result};
use crate::geom::{
    add, ball_lattice, dist, lattice_spacing_for, norm, scale, spread_direction, sub, unit, Ball,
};
use crate::model::StableModel;
use crate::quad::gauss_legendre;
use crate::rng::{child_seed, substream, Domain};
use crate::simulate::{build_scheme, sample_exit, sample_exit_ensemble};
use crate::stats::Moments;

/// Jump-size cutoff as a fraction of the domain radius; keeps the walk
/// exactly self-similar when the same geometry is rescaled.
const JUMP_CUT_FRACTION: f64 = 0.01;

/// Relative standard-error gate for reported Monte Carlo values.
const REL_STD_ERR_GATE: f64 = 0.05;

/// Agreement required between the two quadrature resolutions of the
/// radial profile integral, relative to the value. The integrand is
/// piecewise linear along the ray (cell crossings), which caps the
/// convergence rate well short of Gauss-Legendre smoothness.
const PROFILE_QUAD_TOL: f64 = 5e-4;

/// Largest evenness defect tolerated in a radial profile.
const PROFILE_EVEN_TOL: f64 = 1e-8;

const TAU: f64 = std::f64::consts::TAU;

/// `G(0, xi)` over unit directions `xi`, tabulated on a fixed angular
/// lattice. The radial dependence is exact: `green_point` applies the
/// homogeneity `G(0, x) = |x|^{alpha-d} G(0, x/|x|)`.
#[derive(Debug, Clone)]
pub struct RadialGreenProfile<const D: usize> {
    pub directions: Vec<[f64; D]>,
    pub values: Vec<f64>,
    /// Time cutoff of the integral split: the grid-backed quadrature covers
    /// `t > t_split`, the first-jump expansion covers `(0, t_split]`.
    pub t_split: f64,
    pub alpha: f64,
    pub model_hash: String,
    layout: Layout,
}

#[derive(Debug, Clone, Copy)]
enum Layout {
    /// `n` uniform angles on the circle.
    Circle { n: usize },
    /// Uniform levels of the third component times uniform azimuths.
    Sphere { n_mu: usize, n_psi: usize },
}

impl<const D: usize> RadialGreenProfile<D> {
    /// Interpolated `G(0, x/|x|)`.
    fn angular_value(&self, x: &[f64; D]) -> f64 {
        match self.layout {
            Layout::Circle { n } => {
                let theta = x[1].atan2(x[0]).rem_euclid(TAU);
                let t = theta / TAU * n as f64;
                let i0 = (t.floor() as usize).min(n - 1);
                let f = t - i0 as f64;
                self.values[i0] * (1.0 - f) + self.values[(i0 + 1) % n] * f
            }
            Layout::Sphere { n_mu, n_psi } => {
                let r = norm(x);
                let mu = (x[2] / r).clamp(-1.0, 1.0);
                let psi = x[1].atan2(x[0]).rem_euclid(TAU);
                let a = (mu + 1.0) / 2.0 * (n_mu as f64 - 1.0);
                let i0 = (a.floor() as usize).min(n_mu - 2);
                let fa = a - i0 as f64;
                let b = psi / TAU * n_psi as f64;
                let j0 = (b.floor() as usize).min(n_psi - 1);
                let fb = b - j0 as f64;
                let j1 = (j0 + 1) % n_psi;
                self.values[i0 * n_psi + j0] * (1.0 - fa) * (1.0 - fb)
                    + self.values[i0 * n_psi + j1] * (1.0 - fa) * fb
                    + self.values[(i0 + 1) * n_psi + j0] * fa * (1.0 - fb)
                    + self.values[(i0 + 1) * n_psi + j1] * fa * fb
            }
        }
    }

    /// Smallest directional value; a valid constant in the pointwise lower
    /// bound `G(0, x) >= min_value * |x|^{alpha-d}`.
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn profile_directions<const D: usize>(resolution: usize) -> Result<(Layout, Vec<[f64; D]>)> {
    if resolution < 4 || resolution % 2 != 0 {
        return Err(Error::Precondition(
            "profile resolution must be even and at least 4".into(),
        ));
    }
    if D == 2 {
        let n = resolution;
        let dirs = (0..n)
            .map(|k| {
                let theta = TAU * k as f64 / n as f64;
                let mut x = [0.0; D];
                x[0] = theta.cos();
                x[1] = theta.sin();
                x
            })
            .collect();
        Ok((Layout::Circle { n }, dirs))
    } else if D == 3 {
        let n_mu = resolution + 1;
        let n_psi = 2 * resolution;
        let mut dirs = Vec::with_capacity(n_mu * n_psi);
        for i in 0..n_mu {
            let mu = -1.0 + 2.0 * i as f64 / (n_mu - 1) as f64;
            let s = (1.0 - mu * mu).max(0.0).sqrt();
            for j in 0..n_psi {
                let psi = TAU * j as f64 / n_psi as f64;
                let mut x = [0.0; D];
                x[0] = s * psi.cos();
                x[1] = s * psi.sin();
                x[2] = mu;
                dirs.push(x);
            }
        }
        Ok((Layout::Sphere { n_mu, n_psi }, dirs))
    } else {
        Err(Error::UnsupportedDimension(D))
    }
}

fn evenness_defect(layout: &Layout, values: &[f64]) -> f64 {
    match layout {
        Layout::Circle { n } => (0..*n)
            .map(|k| (values[k] - values[(k + n / 2) % n]).abs())
            .fold(0.0, f64::max),
        Layout::Sphere { n_mu, n_psi } => {
            let mut worst = 0.0_f64;
            for i in 0..*n_mu {
                for j in 0..*n_psi {
                    let mi = n_mu - 1 - i;
                    let mj = (j + n_psi / 2) % n_psi;
                    worst = worst.max((values[i * n_psi + j] - values[mi * n_psi + mj]).abs());
                }
            }
            worst
        }
    }
}

/// Quadrature nodes for the radial ray integral after the substitution
/// `s = s0 q^m`: pairs of (s, weight), with the linear factor produced by
/// the substitution already folded into the weight.
fn quad_table(s0: f64, m_exp: f64, panels: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(4);
    let width = 1.0 / panels as f64;
    let mut out = Vec::with_capacity(4 * panels);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        for (x, w) in xs.iter().zip(&ws) {
            let q = mid + 0.5 * width * x;
            out.push((s0 * q.powf(m_exp), 0.5 * width * w * q));
        }
    }
    out
}

fn ray_integral<const D: usize>(
    grid: &TransitionDensityGrid<D>,
    xi: &[f64; D],
    nodes: &[(f64, f64)],
) -> Option<f64> {
    let mut sum = 0.0;
    for (s, w) in nodes {
        sum += w * grid.interpolate(&scale(xi, *s))?;
    }
    Some(sum)
}

/// Tabulate `G(0, xi)` from the unit-time density grid.
///
/// Along each direction the potential integral is split at
/// `t_split = (0.75 L)^{-alpha}`: times above the cutoff are covered by
/// the self-similar rescaling of the tabulated density (the integrand
/// stays on the grid for all of them, including the whole `t -> infinity`
/// end, where the argument shrinks to the origin), and the short-time
/// remainder is the first-jump expansion `t_split^2/2 * jump density`.
pub fn green_profile<const D: usize>(
    model: &StableModel<D>,
    grid: &TransitionDensityGrid<D>,
) -> Result<RadialGreenProfile<D>> {
    let resolution = if D == 2 { 1024 } else { 64 };
    green_profile_with_resolution(model, grid, resolution)
}

/// `green_profile` with an explicit angular resolution (angles on the
/// circle; latitude levels minus one on the sphere, with twice as many
/// azimuths).
pub fn green_profile_with_resolution<const D: usize>(
    model: &StableModel<D>,
    grid: &TransitionDensityGrid<D>,
    resolution: usize,
) -> Result<RadialGreenProfile<D>> {
    if grid.model_hash != model.hash() {
        return Err(Error::BadCache(
            "density grid belongs to a different model".into(),
        ));
    }
    if grid.t_ref != 1.0 {
        return Err(Error::Precondition(
            "the radial profile needs the unit-time density grid".into(),
        ));
    }
    if model.measure().is_atomic() {
        return Err(Error::NoDensity);
    }
    let alpha = model.alpha();
    let d = D as f64;
    let s0 = 0.75 * grid.extent;
    let t_split = s0.powf(-alpha);
    // the substitution s = s0 q^m with m = 2/(d - alpha) turns the radial
    // weight s^{d-alpha-1} ds into exactly q dq, bounded for every alpha < d
    let m_exp = 2.0 / (d - alpha);
    let cells = (s0 / grid.spacing).ceil() as usize;
    let panels = (cells / 2).clamp(64, 1024);
    let coarse = quad_table(s0, m_exp, panels);
    let fine = quad_table(s0, m_exp, 2 * panels);
    let front = alpha * s0.powf(d - alpha) * m_exp;

    let (layout, directions) = profile_directions::<D>(resolution)?;
    let values = directions
        .par_iter()
        .map(|xi| -> Result<f64> {
            let off_grid = || {
                Error::Quadrature(format!(
                    "radial quadrature node left the density grid along {xi:?}"
                ))
            };
            let lo = ray_integral(grid, xi, &coarse).ok_or_else(off_grid)?;
            let hi = ray_integral(grid, xi, &fine).ok_or_else(off_grid)?;
            if (hi - lo).abs() > (PROFILE_QUAD_TOL * hi.abs()).max(1e-14) {
                return Err(Error::Quadrature(format!(
                    "radial profile integral along {xi:?} moved by {:.3e} when the \
                     panel count doubled",
                    hi - lo
                )));
            }
            let v = front * hi + 0.5 * t_split * t_split * model.levy_density(xi)?;
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Quadrature(format!(
                    "radial profile value {v:.3e} along {xi:?} is not strictly positive"
                )));
            }
            Ok(v)
        })
        .collect::<Result<Vec<f64>>>()?;

    let defect = evenness_defect(&layout, &values);
    if defect > PROFILE_EVEN_TOL {
        return Err(Error::Quadrature(format!(
            "radial profile evenness defect {defect:.3e} exceeds {PROFILE_EVEN_TOL:.1e}"
        )));
    }

    Ok(RadialGreenProfile {
        directions,
        values,
        t_split,
        alpha,
        model_hash: model.hash().to_string(),
        layout,
    })
}

/// `G(0, x) = |x|^{alpha-d} G(0, x/|x|)` through the tabulated profile.
pub fn green_point<const D: usize>(profile: &RadialGreenProfile<D>, x: &[f64; D]) -> Result<f64> {
    let r = norm(x);
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    if !r.is_finite() {
        return Err(Error::Precondition(format!(
            "green_point evaluated at non-finite {x:?}"
        )));
    }
    Ok(r.powf(profile.alpha - D as f64) * profile.angular_value(x))
}

fn check_profile<const D: usize>(
    model: &StableModel<D>,
    profile: &RadialGreenProfile<D>,
) -> Result<()> {
    if profile.model_hash != model.hash() {
        return Err(Error::BadCache(
            "radial profile belongs to a different model".into(),
        ));
    }
    Ok(())
}

/// Monte Carlo estimate of the killed Green function of a ball.
#[derive(Debug, Clone, Serialize)]
pub struct KilledGreenEstimate<const D: usize> {
    pub value: f64,
    pub std_err: f64,
    pub n_paths: u64,
    pub ball: Ball<D>,
}

impl<const D: usize> KilledGreenEstimate<D> {
    /// A start outside the open ball exits at time zero, so the two terms
    /// of the subtraction formula cancel exactly.
    fn instant_exit(ball: Ball<D>) -> Self {
        KilledGreenEstimate {
            value: 0.0,
            std_err: 0.0,
            n_paths: 0,
            ball,
        }
    }
}

/// Cached first-exit positions from one start point. One ensemble prices
/// `G_D(start, z)` for any number of targets `z` without resampling.
#[derive(Debug, Clone)]
pub struct ExitEnsemble<const D: usize> {
    pub domain: Ball<D>,
    pub start: [f64; D],
    exits: Vec<[f64; D]>,
}

pub fn exit_ensemble<const D: usize>(
    model: &StableModel<D>,
    domain: &Ball<D>,
    start: &[f64; D],
    n_paths: usize,
    root_seed: u64,
) -> Result<ExitEnsemble<D>> {
    let scheme = build_scheme(model, JUMP_CUT_FRACTION * domain.radius)?;
    let samples = sample_exit_ensemble(&scheme, domain, start, n_paths, root_seed)?;
    Ok(ExitEnsemble {
        domain: *domain,
        start: *start,
        exits: samples.into_iter().map(|s| s.position).collect(),
    })
}

impl<const D: usize> ExitEnsemble<D> {
    pub fn n_paths(&self) -> usize {
        self.exits.len()
    }

    /// `G_D(start, z) = G(start - z) - mean over exits of G(exit - z)`.
    pub fn killed_green_at(
        &self,
        profile: &RadialGreenProfile<D>,
        z: &[f64; D],
    ) -> Result<KilledGreenEstimate<D>> {
        if !self.domain.strictly_contains(z) {
            return Err(Error::Precondition(format!(
                "target {z:?} is not strictly inside the domain ball"
            )));
        }
        if dist(&self.start, z) == 0.0 {
            return Err(Error::Singularity);
        }
        let direct = green_point(profile, &sub(&self.start, z))?;
        let mut m = Moments::new();
        for e in &self.exits {
            m.push(green_point(profile, &sub(e, z))?);
        }
        Ok(KilledGreenEstimate {
            value: direct - m.mean(),
            std_err: m.std_err(),
            n_paths: m.count(),
            ball: self.domain,
        })
    }
}

/// Killed Green function `G_D(x, z)` of a ball domain by the subtraction
/// formula; the expectation over the exit position is a fresh ensemble of
/// `n_paths` exact-jump walks. Never touches occupation times.
pub fn killed_green<const D: usize>(
    model: &StableModel<D>,
    profile: &RadialGreenProfile<D>,
    domain: &Ball<D>,
    x: &[f64; D],
    z: &[f64; D],
    n_paths: usize,
    root_seed: u64,
) -> Result<KilledGreenEstimate<D>> {
    check_profile(model, profile)?;
    if !domain.strictly_contains(z) {
        return Err(Error::Precondition(format!(
            "target {z:?} is not strictly inside the domain ball"
        )));
    }
    if dist(x, z) == 0.0 {
        return Err(Error::Singularity);
    }
    if !domain.strictly_contains(x) {
        return Ok(KilledGreenEstimate::instant_exit(*domain));
    }
    exit_ensemble(model, domain, x, n_paths, root_seed)?.killed_green_at(profile, z)
}

/// Pooled exit ensembles from every node of a lattice filling `window`,
/// pricing the lattice average over x of `G_domain(x, z)` for arbitrary
/// targets z.
///
/// The deterministic direct term carries the `|x - z|^{alpha-d}`
/// singularity, so it is evaluated on a refined copy of the lattice where
/// extra resolution is cheap; the sampled term is smooth in x and stays on
/// the coarse lattice that the exits were drawn from.
#[derive(Debug)]
pub struct AveragedExitField<const D: usize> {
    pub domain: Ball<D>,
    pub window: Ball<D>,
    /// Coarse lattice spacing.
    pub spacing: f64,
    /// Spacing of the refined lattice for the direct term.
    pub fine_spacing: f64,
    nodes: Vec<[f64; D]>,
    fine_nodes: Vec<[f64; D]>,
    exits: Vec<[f64; D]>,
    paths_per_node: usize,
}

pub fn averaged_exit_field<const D: usize>(
    model: &StableModel<D>,
    domain: &Ball<D>,
    window: &Ball<D>,
    lattice_target: usize,
    paths_per_node: usize,
    root_seed: u64,
) -> Result<AveragedExitField<D>> {
    if dist(&domain.center, &window.center) + window.radius >= domain.radius {
        return Err(Error::Precondition(
            "averaging window must lie strictly inside the exit domain".into(),
        ));
    }
    if lattice_target == 0 || paths_per_node == 0 {
        return Err(Error::Precondition(
            "lattice target and per-node path count must be positive".into(),
        ));
    }
    let spacing = lattice_spacing_for::<D>(window.radius, lattice_target);
    let refine = if D == 2 { 4.0 } else { 2.0 };
    let fine_spacing = spacing / refine;
    let nodes = ball_lattice(window, spacing, 1.0);
    let fine_nodes = ball_lattice(window, fine_spacing, 1.0);
    let scheme = build_scheme(model, JUMP_CUT_FRACTION * domain.radius)?;
    let exits = (0..nodes.len() * paths_per_node)
        .into_par_iter()
        .map(|k| {
            let node = k / paths_per_node;
            let mut rng = substream(
                root_seed,
                Domain::Ensemble,
                node as u64,
                (k % paths_per_node) as u64,
            );
            sample_exit(&scheme, domain, &nodes[node], &mut rng).map(|s| s.position)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AveragedExitField {
        domain: *domain,
        window: *window,
        spacing,
        fine_spacing,
        nodes,
        fine_nodes,
        exits,
        paths_per_node,
    })
}

impl<const D: usize> AveragedExitField<D> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_paths(&self) -> u64 {
        self.exits.len() as u64
    }

    /// Distance from `z` to the nearest node of the refined lattice.
    pub fn nearest_fine_node_gap(&self, z: &[f64; D]) -> f64 {
        self.fine_nodes
            .iter()
            .map(|x| dist(x, z))
            .fold(f64::INFINITY, f64::min)
    }

    /// Lattice average over the window of the free kernel `G(x - z)`.
    pub fn average_unkilled_green(
        &self,
        profile: &RadialGreenProfile<D>,
        z: &[f64; D],
    ) -> Result<f64> {
        if !self.domain.strictly_contains(z) {
            return Err(Error::Precondition(format!(
                "target {z:?} is not strictly inside the domain ball"
            )));
        }
        let mut sum = 0.0;
        for x in &self.fine_nodes {
            sum += green_point(profile, &sub(x, z))?;
        }
        Ok(sum / self.fine_nodes.len() as f64)
    }

    /// Lattice average over the window of `G_domain(x, z)`, with the
    /// standard error of the pooled Monte Carlo term.
    pub fn average_killed_green(
        &self,
        profile: &RadialGreenProfile<D>,
        z: &[f64; D],
    ) -> Result<(f64, f64)> {
        let direct = self.average_unkilled_green(profile, z)?;
        let per_node = (0..self.nodes.len())
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let lo = i * self.paths_per_node;
                let mut m = Moments::new();
                for e in &self.exits[lo..lo + self.paths_per_node] {
                    m.push(green_point(profile, &sub(e, z))?);
                }
                Ok((m.mean(), m.std_err()))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = per_node.len() as f64;
        let mut mean_sum = 0.0;
        let mut var_sum = 0.0;
        for (mean, se) in &per_node {
            mean_sum += mean;
            var_sum += se * se;
        }
        Ok((direct - mean_sum / n, var_sum.sqrt() / n))
    }
}

/// Which averaged-vs-pointwise Green bound a report certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GreenClaim {
    /// The window average of the killed kernel is bounded uniformly over
    /// targets in the domain.
    AverageBound,
    /// The killed kernel stays above a positive floor for targets close to
    /// an interior base point.
    NearDiagonalFloor,
    /// The window average is dominated by a constant times the kernel at a
    /// single interior base point.
    AverageComparison,
}

/// One probed inequality instance: both sides, their errors, and the
/// margin by which the claim held.
#[derive(Debug, Clone, Serialize)]
pub struct ClaimSample {
    pub label: String,
    /// Probe points of this sample, one coordinate list per point.
    pub points: Vec<Vec<f64>>,
    pub lhs: f64,
    pub lhs_std_err: f64,
    pub rhs: f64,
    pub rhs_std_err: f64,
    pub margin: f64,
    pub pass: bool,
    pub skipped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenBoundReport {
    pub claim: GreenClaim,
    pub constants: BTreeMap<String, f64>,
    /// False when the scan ended without an admissible configuration
    /// (reported, not an error).
    pub conclusive: bool,
    pub samples: Vec<ClaimSample>,
    pub n_paths_total: u64,
    pub root_seed: u64,
    pub model_hash: String,
}

/// One row per sample; points are space-separated coordinates with ';'
/// between points.
pub fn write_claim_samples_csv(report: &GreenBoundReport, path: &Path) -> Result<()> {
    let mut out = String::from("label,points,lhs,lhs_std_err,rhs,rhs_std_err,margin,pass,skipped\n");
    for s in &report.samples {
        let pts = s
            .points
            .iter()
            .map(|p| {
                p.iter()
                    .map(|c| format!("{c:.9e}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},{}",
            s.label, pts, s.lhs, s.lhs_std_err, s.rhs, s.rhs_std_err, s.margin, s.pass, s.skipped
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Monte Carlo budgets for the report drivers.
#[derive(Debug, Clone, Copy)]
pub struct GreenMcBudget {
    /// Target node count of the averaging lattice.
    pub lattice_target: usize,
    /// Exit paths pooled per lattice node.
    pub paths_per_node: usize,
    /// Exit paths per single-point estimate.
    pub paths_per_point: usize,
}

impl Default for GreenMcBudget {
    fn default() -> Self {
        GreenMcBudget {
            lattice_target: 1200,
            paths_per_node: 256,
            paths_per_point: 20_000,
        }
    }
}

fn cross3<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    debug_assert!(D == 3);
    let mut c = [0.0; D];
    c[0] = a[1] * b[2] - a[2] * b[1];
    c[1] = a[2] * b[0] - a[0] * b[2];
    c[2] = a[0] * b[1] - a[1] * b[0];
    c
}

/// `u` completed to an orthonormal frame, both signs of every axis.
fn probe_frame<const D: usize>(u: &[f64; D]) -> Vec<[f64; D]> {
    let mut dirs = Vec::new();
    if D == 2 {
        let mut t = [0.0; D];
        t[0] = -u[1];
        t[1] = u[0];
        dirs.push(*u);
        dirs.push(scale(u, -1.0));
        dirs.push(t);
        dirs.push(scale(&t, -1.0));
    } else {
        let mut least = 0;
        for i in 1..D {
            if u[i].abs() < u[least].abs() {
                least = i;
            }
        }
        let mut e = [0.0; D];
        e[least] = 1.0;
        let v = unit(&cross3(u, &e)).expect("frame axis");
        let w = cross3(u, &v);
        for axis in [*u, v, w] {
            dirs.push(axis);
            dirs.push(scale(&axis, -1.0));
        }
    }
    dirs
}

fn check_window_params(r: f64, lambda: f64, a: f64) -> Result<()> {
    if !(r > 0.0 && lambda > 1.0 && a < 1.0 && a * lambda > 1.0) {
        return Err(Error::Precondition(format!(
            "window geometry needs r > 0 and 1/lambda < a < 1 with lambda > 1; \
             got r = {r}, lambda = {lambda}, a = {a}"
        )));
    }
    Ok(())
}

/// Probe target `j` of `n` inside the domain: spread directions, radii
/// filling the ball, the last probe placed within one lattice cell of the
/// boundary. Probes are pulled inward off the refined lattice so the
/// direct term stays away from its singular nodes.
fn place_probe<const D: usize>(
    field: &AveragedExitField<D>,
    x0: &[f64; D],
    j: usize,
    n: usize,
) -> [f64; D] {
    let dir = spread_direction::<D>(j);
    let rho = if j + 1 == n {
        field.domain.radius - 0.75 * field.spacing
    } else {
        field.domain.radius * (j as f64 + 0.5) / n as f64
    };
    let mut z = add(x0, &scale(&dir, rho));
    for _ in 0..4 {
        if field.nearest_fine_node_gap(&z) >= 0.2 * field.fine_spacing {
            break;
        }
        z = sub(&z, &scale(&dir, 0.37 * field.fine_spacing));
    }
    z
}

/// Check that the window average of the killed kernel is bounded
/// uniformly over targets: sweeps `n_z` targets through the domain
/// (including one hugging the boundary), reports the per-target averages
/// and their maximum `c_avg`, and compares each against the unkilled
/// average, which dominates it by domain monotonicity.
pub fn verify_average_bound<const D: usize>(
    model: &StableModel<D>,
    profile: &RadialGreenProfile<D>,
    x0: &[f64; D],
    r: f64,
    lambda: f64,
    a: f64,
    n_z: usize,
    budget: &GreenMcBudget,
    root_seed: u64,
) -> Result<GreenBoundReport> {
    check_profile(model, profile)?;
    check_window_params(r, lambda, a)?;
    if n_z == 0 {
        return Err(Error::Precondition("need at least one probe target".into()));
    }
    let domain = Ball::new(*x0, a * r);
    let window = Ball::new(*x0, r / lambda);
    let field = averaged_exit_field(
        model,
        &domain,
        &window,
        budget.lattice_target,
        budget.paths_per_node,
        child_seed(root_seed, 1),
    )?;

    let mut samples = Vec::with_capacity(n_z);
    let mut c_avg = f64::NEG_INFINITY;
    for j in 0..n_z {
        let z = place_probe(&field, x0, j, n_z);
        let (avg, se) = field.average_killed_green(profile, &z)?;
        let unkilled = field.average_unkilled_green(profile, &z)?;
        if !(se <= REL_STD_ERR_GATE * avg.abs()) {
            return Err(Error::McBudget(format!(
                "average at z = {z:?} carries std err {se:.3e} against value {avg:.3e}; \
                 raise the path budget"
            )));
        }
        c_avg = c_avg.max(avg);
        samples.push(ClaimSample {
            label: format!("z{j}"),
            points: vec![z.to_vec()],
            lhs: avg,
            lhs_std_err: se,
            rhs: unkilled,
            rhs_std_err: 0.0,
            margin: unkilled - avg,
            pass: avg <= unkilled,
            skipped: false,
        });
    }

    let mut constants = BTreeMap::new();
    constants.insert("a".into(), a);
    constants.insert("lambda".into(), lambda);
    constants.insert("r".into(), r);
    constants.insert("c_avg".into(), c_avg);
    Ok(GreenBoundReport {
        claim: GreenClaim::AverageBound,
        constants,
        conclusive: true,
        samples,
        n_paths_total: field.total_paths(),
        root_seed,
        model_hash: model.hash().to_string(),
    })
}

/// Probes inside `B(xbar, delta)` clipped to the domain interior: two
/// shells of the candidate ball along an orthonormal frame through `xbar`.
fn floor_probes<const D: usize>(
    xbar: &[f64; D],
    delta: f64,
    x0: &[f64; D],
    domain: &Ball<D>,
) -> Vec<[f64; D]> {
    let radial = unit(&sub(xbar, x0)).unwrap_or_else(|| {
        let mut e = [0.0; D];
        e[0] = 1.0;
        e
    });
    let mut out = Vec::new();
    for frac in [0.98, 0.5] {
        for dir in probe_frame(&radial) {
            let z = add(xbar, &scale(&dir, frac * delta));
            if domain.boundary_distance(&z) >= 0.02 * domain.radius {
                out.push(z);
            }
        }
    }
    out
}

/// Scan for the largest near-diagonal radius `delta1` at which the killed
/// kernel stays above a positive floor: base points sweep the inner ball
/// of radius `r/theta`, targets sweep `B(xbar, delta)`, and a candidate
/// `delta` is admissible when every estimate clears zero by two standard
/// errors. The floor `c_floor` is the smallest estimate at the admissible
/// radius. Finding no admissible radius is reported as inconclusive, not
/// as an error.
pub fn verify_near_diagonal_floor<const D: usize>(
    model: &StableModel<D>,
    profile: &RadialGreenProfile<D>,
    x0: &[f64; D],
    r: f64,
    theta: f64,
    a: f64,
    n_xbar: usize,
    budget: &GreenMcBudget,
    root_seed: u64,
) -> Result<GreenBoundReport> {
    check_profile(model, profile)?;
    if !(r > 0.0 && theta > 1.0 && a > 0.0 && a < 1.0 && a * theta > 1.0) {
        return Err(Error::Precondition(format!(
            "inner-ball geometry needs theta > 1 and 1/theta < a < 1; \
             got r = {r}, theta = {theta}, a = {a}"
        )));
    }
    if n_xbar == 0 {
        return Err(Error::Precondition("need at least one base point".into()));
    }
    let domain = Ball::new(*x0, a * r);
    let inner = r / theta;
    let xbars: Vec<[f64; D]> = (0..n_xbar)
        .map(|i| {
            if i == 0 {
                *x0
            } else {
                let rho = 0.95 * inner * i as f64 / (n_xbar - 1) as f64;
                add(x0, &scale(&spread_direction(i), rho))
            }
        })
        .collect();
    let ensembles = xbars
        .iter()
        .enumerate()
        .map(|(i, xb)| {
            exit_ensemble(
                model,
                &domain,
                xb,
                budget.paths_per_point,
                child_seed(root_seed, 100 + i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let n_paths_total: u64 = ensembles.iter().map(|e| e.n_paths() as u64).sum();

    let mut found: Option<(f64, f64)> = None;
    let mut samples = Vec::new();
    for k in 0..8 {
        let delta = 0.4 * r * 0.6_f64.powi(k);
        let mut admissible = true;
        let mut floor = f64::INFINITY;
        let mut attempt = Vec::new();
        for (i, (xb, ens)) in xbars.iter().zip(&ensembles).enumerate() {
            for (m, z) in floor_probes(xb, delta, x0, &domain).into_iter().enumerate() {
                let est = ens.killed_green_at(profile, &z)?;
                let margin = est.value - 2.0 * est.std_err;
                admissible &= margin > 0.0;
                floor = floor.min(est.value);
                attempt.push(ClaimSample {
                    label: format!("xbar{i}/z{m}"),
                    points: vec![xb.to_vec(), z.to_vec()],
                    lhs: est.value,
                    lhs_std_err: est.std_err,
                    rhs: 0.0,
                    rhs_std_err: 0.0,
                    margin,
                    pass: margin > 0.0,
                    skipped: false,
                });
            }
        }
        samples = attempt;
        if admissible && !samples.is_empty() {
            found = Some((delta, floor));
            break;
        }
    }

    let mut constants = BTreeMap::new();
    constants.insert("a".into(), a);
    constants.insert("r".into(), r);
    constants.insert("theta".into(), theta);
    if let Some((delta1, floor)) = found {
        constants.insert("delta1".into(), delta1);
        constants.insert("c_floor".into(), floor);
    }
    Ok(GreenBoundReport {
        claim: GreenClaim::NearDiagonalFloor,
        constants,
        conclusive: found.is_some(),
        samples,
        n_paths_total,
        root_seed,
        model_hash: model.hash().to_string(),
    })
}

/// Target placement for the averaged comparison: at least `1.3 delta1`
/// away from the base point, inside 90% of the domain radius, and off the
/// averaging lattice. The direction rotates until every constraint holds.
fn place_separated<const D: usize>(
    field: &AveragedExitField<D>,
    xbar: &[f64; D],
    delta1: f64,
    frac: f64,
    salt: usize,
) -> Result<[f64; D]> {
    let domain = &field.domain;
    let cap = 0.9 * domain.radius;
    for turn in 0..16 {
        let dir = spread_direction::<D>(salt + 7 * turn);
        let lo = 1.3 * delta1;
        let hi = (cap - dist(xbar, &domain.center)).max(lo);
        let mut u = add(xbar, &scale(&dir, lo + (hi - lo) * frac));
        let v = sub(&u, &domain.center);
        if norm(&v) > cap {
            u = add(&domain.center, &scale(&unit(&v).expect("nonzero"), cap));
        }
        for _ in 0..4 {
            if field.nearest_fine_node_gap(&u) >= 0.2 * field.fine_spacing {
                break;
            }
            let pull = unit(&sub(&domain.center, &u)).expect("interior direction");
            u = add(&u, &scale(&pull, 0.37 * field.fine_spacing));
        }
        if dist(&u, xbar) >= 1.1 * delta1
            && domain.boundary_distance(&u) >= 0.05 * domain.radius
            && field.nearest_fine_node_gap(&u) >= 0.15 * field.fine_spacing
        {
            return Ok(u);
        }
    }
    Err(Error::Precondition(format!(
        "no admissible target around {xbar:?} at separation {delta1:.3e}"
    )))
}

/// Compare the window average of the killed kernel against its value at a
/// single base point: `c_ratio` is the largest ratio over well-separated
/// pairs, `c_ratio_near` the largest over near-diagonal pairs (target
/// within `delta1` of the base point). Pairs whose denominator is
/// statistically indistinguishable from zero are logged and skipped.
#[allow(clippy::too_many_arguments)]
pub fn verify_average_comparison<const D: usize>(
    model: &StableModel<D>,
    profile: &RadialGreenProfile<D>,
    x0: &[f64; D],
    r: f64,
    lambda: f64,
    theta: f64,
    a: f64,
    delta1: f64,
    n_pairs: usize,
    budget: &GreenMcBudget,
    root_seed: u64,
) -> Result<GreenBoundReport> {
    check_profile(model, profile)?;
    check_window_params(r, lambda, a)?;
    if !(theta > lambda && a * theta > 1.0) {
        return Err(Error::Precondition(format!(
            "comparison geometry needs theta > lambda and a*theta > 1; \
             got theta = {theta}, lambda = {lambda}, a = {a}"
        )));
    }
    if !(delta1 > 0.0 && delta1 < a * r) {
        return Err(Error::Precondition(format!(
            "separation radius must lie in (0, a r); got {delta1}"
        )));
    }
    if n_pairs == 0 {
        return Err(Error::Precondition("need at least one pair".into()));
    }
    let domain = Ball::new(*x0, a * r);
    let window = Ball::new(*x0, r / lambda);
    let inner = r / theta;
    let field = averaged_exit_field(
        model,
        &domain,
        &window,
        budget.lattice_target,
        budget.paths_per_node,
        child_seed(root_seed, 1),
    )?;

    // pair list: spread base points, separated targets, plus one
    // near-diagonal pair probing the regime inside B(xbar, delta1)
    let mut pairs: Vec<([f64; D], [f64; D], bool)> = Vec::with_capacity(n_pairs + 1);
    for j in 0..n_pairs {
        let xbar = if j == 0 {
            *x0
        } else {
            let rho = 0.9 * inner * j as f64 / n_pairs as f64;
            add(x0, &scale(&spread_direction(j), rho))
        };
        let frac = (j as f64 + 0.5) / n_pairs as f64;
        let u = place_separated(&field, &xbar, delta1, frac, 3 * j + 1)?;
        pairs.push((xbar, u, false));
    }
    {
        let mut u = add(x0, &scale(&spread_direction(2), 0.5 * delta1));
        for _ in 0..4 {
            if field.nearest_fine_node_gap(&u) >= 0.2 * field.fine_spacing {
                break;
            }
            u = add(&u, &scale(&spread_direction(5), 0.37 * field.fine_spacing));
        }
        pairs.push((*x0, u, true));
    }

    let mut n_paths_total = field.total_paths();
    let mut rows: Vec<(ClaimSample, Option<(f64, bool)>)> = Vec::with_capacity(pairs.len());
    for (j, (xbar, u, near)) in pairs.iter().enumerate() {
        let ens = exit_ensemble(
            model,
            &domain,
            xbar,
            budget.paths_per_point,
            child_seed(root_seed, 200 + j as u64),
        )?;
        n_paths_total += ens.n_paths() as u64;
        let point = ens.killed_green_at(profile, u)?;
        let (avg, avg_se) = field.average_killed_green(profile, u)?;
        let label = if *near {
            format!("near{j}")
        } else {
            format!("pair{j}")
        };
        let sample = ClaimSample {
            label,
            points: vec![xbar.to_vec(), u.to_vec()],
            lhs: avg,
            lhs_std_err: avg_se,
            rhs: point.value,
            rhs_std_err: point.std_err,
            margin: 0.0,
            pass: true,
            skipped: false,
        };
        if point.value <= 2.0 * point.std_err {
            // denominator indistinguishable from zero: log the pair, skip
            // the ratio
            rows.push((
                ClaimSample {
                    skipped: true,
                    ..sample
                },
                None,
            ));
            continue;
        }
        let ratio = avg / point.value;
        rows.push((sample, Some((ratio, *near))));
    }

    let best = |want_near: bool| {
        rows.iter()
            .filter_map(|(_, r)| match r {
                Some((ratio, near)) if *near == want_near => Some(*ratio),
                _ => None,
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let c_ratio = best(false);
    let c_near = best(true);

    let mut samples = Vec::with_capacity(rows.len());
    for (mut sample, ratio) in rows {
        if let Some((ratio, near)) = ratio {
            let pool = if near { c_near } else { c_ratio };
            sample.margin = pool - ratio;
            sample.pass = ratio.is_finite();
        }
        samples.push(sample);
    }

    let mut constants = BTreeMap::new();
    constants.insert("a".into(), a);
    constants.insert("delta1".into(), delta1);
    constants.insert("lambda".into(), lambda);
    constants.insert("r".into(), r);
    constants.insert("theta".into(), theta);
    let conclusive = c_ratio.is_finite();
    if conclusive {
        constants.insert("c_ratio".into(), c_ratio);
    }
    if c_near.is_finite() {
        constants.insert("c_ratio_near".into(), c_near);
    }
    Ok(GreenBoundReport {
        claim: GreenClaim::AverageComparison,
        constants,
        conclusive,
        samples,
        n_paths_total,
        root_seed,
        model_hash: model.hash().to_string(),
    })
}
