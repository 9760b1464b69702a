//! Harmonic functions built from exterior data by exit sampling, the
//! three terms of the weak Harnack inequality (window average, inner
//! infimum, negative-part tail), and the ensemble estimator for the
//! Harnack constant.
//!
//! Every geometric quantity in this module is handled relative to the
//! base point, so translating a whole experiment produces bit-identical
//! numbers under the same seeds.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{add, ball_lattice, lattice_spacing_for, norm, scale, spread_direction, sub, Ball};
use crate::model::StableModel;
use crate::quad::gauss_legendre;
use crate::rng::{child_seed, stream, substream, Domain};
use crate::simulate::{build_scheme, sample_exit_relative, DEFAULT_STEP_BUDGET};
use crate::stats::Moments;

/// Jump-size cutoff as a fraction of the extension-ball radius.
const JUMP_CUT_FRACTION: f64 = 0.01;

const TAU: f64 = std::f64::consts::TAU;

/// Geometry of one weak-Harnack experiment: the inequality compares the
/// average of `u` over `B(x0, r/lambda)` with its infimum over
/// `B(x0, r/theta)` plus a tail integral ranged over `B(x0, r/sigma_ratio)`,
/// for `u` harmonic in `B(x0, r)` built by extension over `B(x0, a r)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HarnackParams<const D: usize> {
    #[serde(with = "crate::geom::vec_array")]
    pub x0: [f64; D],
    pub r: f64,
    /// Reference radius; experiments require `r <= r0`.
    pub r0: f64,
    pub lambda: f64,
    pub theta: f64,
    pub sigma_ratio: f64,
    pub a: f64,
}

impl<const D: usize> HarnackParams<D> {
    pub fn new(
        x0: [f64; D],
        r: f64,
        r0: f64,
        lambda: f64,
        theta: f64,
        sigma_ratio: f64,
        a: f64,
    ) -> Result<Self> {
        if !(theta > lambda && lambda > 1.0) {
            return Err(Error::Precondition(format!(
                "ball ratios need theta > lambda > 1, got theta = {theta}, lambda = {lambda}"
            )));
        }
        if !(2.0 * theta > sigma_ratio && sigma_ratio > 1.0) {
            return Err(Error::Precondition(format!(
                "tail ratio needs 2 theta > sigma > 1, got sigma = {sigma_ratio}, theta = {theta}"
            )));
        }
        if !(a > 1.0 / lambda && a < 1.0) {
            return Err(Error::Precondition(format!(
                "extension fraction needs 1/lambda < a < 1, got a = {a}, lambda = {lambda}"
            )));
        }
        if !(r > 0.0 && r <= r0) {
            return Err(Error::Precondition(format!(
                "radius needs 0 < r <= r0, got r = {r}, r0 = {r0}"
            )));
        }
        Ok(HarnackParams {
            x0,
            r,
            r0,
            lambda,
            theta,
            sigma_ratio,
            a,
        })
    }

    /// The ball over which harmonic extensions are built.
    pub fn extension_ball(&self) -> Ball<D> {
        Ball::new(self.x0, self.a * self.r)
    }

    pub fn avg_radius(&self) -> f64 {
        self.r / self.lambda
    }

    pub fn inf_radius(&self) -> f64 {
        self.r / self.theta
    }

    pub fn tail_radius(&self) -> f64 {
        self.r / self.sigma_ratio
    }

    /// Same ratios at a different scale.
    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(
            self.x0,
            r,
            self.r0.max(r),
            self.lambda,
            self.theta,
            self.sigma_ratio,
            self.a,
        )
    }
}

/// One closed-form piece of exterior data; positions are relative to the
/// base point `x0`.
#[derive(Debug, Clone, Serialize)]
pub enum ExteriorTerm<const D: usize> {
    /// `level` everywhere.
    Constant { level: f64 },
    /// `level` on the radial shell `lo <= |y| < hi`, zero elsewhere.
    Shell { lo: f64, hi: f64, level: f64 },
    /// Compactly supported polynomial bump: `height (1 - s^2)^2` with
    /// `s = |y - offset| / width < 1`.
    Bump {
        #[serde(with = "crate::geom::vec_array")]
        offset: [f64; D],
        width: f64,
        height: f64,
    },
    /// Smooth radial ramp rising from 0 to `level` across `|y| ~ radius`.
    Ramp { radius: f64, width: f64, level: f64 },
}

impl<const D: usize> ExteriorTerm<D> {
    fn eval(&self, v: &[f64; D]) -> f64 {
        match self {
            ExteriorTerm::Constant { level } => *level,
            ExteriorTerm::Shell { lo, hi, level } => {
                let rho = norm(v);
                if rho >= *lo && rho < *hi {
                    *level
                } else {
                    0.0
                }
            }
            ExteriorTerm::Bump {
                offset,
                width,
                height,
            } => {
                let s2 = crate::geom::norm_sq(&sub(v, offset)) / (width * width);
                if s2 < 1.0 {
                    let t = 1.0 - s2;
                    height * t * t
                } else {
                    0.0
                }
            }
            ExteriorTerm::Ramp {
                radius,
                width,
                level,
            } => level * 0.5 * (1.0 + ((norm(v) - radius) / width).tanh()),
        }
    }

    fn sup_abs(&self) -> f64 {
        match self {
            ExteriorTerm::Constant { level } => level.abs(),
            ExteriorTerm::Shell { level, .. } => level.abs(),
            ExteriorTerm::Bump { height, .. } => height.abs(),
            ExteriorTerm::Ramp { level, .. } => level.abs(),
        }
    }

    /// Distance from the base point below which this term is guaranteed
    /// zero, when its sign is negative; `None` for nonnegative terms,
    /// `Some(f64::NEG_INFINITY)` for negative terms without compact support.
    fn negative_clearance(&self) -> Option<f64> {
        match self {
            ExteriorTerm::Constant { level } | ExteriorTerm::Ramp { level, .. } => {
                (*level < 0.0).then_some(f64::NEG_INFINITY)
            }
            ExteriorTerm::Shell { lo, level, .. } => (*level < 0.0).then_some(*lo),
            ExteriorTerm::Bump {
                offset,
                width,
                height,
            } => (*height < 0.0).then_some(norm(offset) - width),
        }
    }
}

/// Bounded exterior data `g`: a sum of closed-form terms, evaluated in
/// coordinates relative to the base point.
#[derive(Debug, Clone, Serialize)]
pub struct ExteriorFunction<const D: usize> {
    terms: Vec<ExteriorTerm<D>>,
}

impl<const D: usize> ExteriorFunction<D> {
    pub fn new(terms: Vec<ExteriorTerm<D>>) -> Self {
        ExteriorFunction { terms }
    }

    pub fn constant(level: f64) -> Self {
        ExteriorFunction {
            terms: vec![ExteriorTerm::Constant { level }],
        }
    }

    pub fn terms(&self) -> &[ExteriorTerm<D>] {
        &self.terms
    }

    /// `g(x0 + v)`.
    pub fn eval_rel(&self, v: &[f64; D]) -> f64 {
        self.terms.iter().map(|t| t.eval(v)).sum()
    }

    /// Declared bound: `|g| <= sup_bound()` everywhere.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.sup_abs()).sum()
    }

    /// Sum of the two data sets.
    pub fn plus(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        ExteriorFunction { terms }
    }

    /// Amplitude scaling `s * g`.
    pub fn amplified(&self, s: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                ExteriorTerm::Constant { level } => ExteriorTerm::Constant { level: s * level },
                ExteriorTerm::Shell { lo, hi, level } => ExteriorTerm::Shell {
                    lo: *lo,
                    hi: *hi,
                    level: s * level,
                },
                ExteriorTerm::Bump {
                    offset,
                    width,
                    height,
                } => ExteriorTerm::Bump {
                    offset: *offset,
                    width: *width,
                    height: s * height,
                },
                ExteriorTerm::Ramp {
                    radius,
                    width,
                    level,
                } => ExteriorTerm::Ramp {
                    radius: *radius,
                    width: *width,
                    level: s * level,
                },
            })
            .collect();
        ExteriorFunction { terms }
    }

    /// Indices of terms that can take negative values.
    fn negative_terms(&self) -> Vec<usize> {
        self.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| t.negative_clearance().is_some())
            .map(|(i, _)| i)
            .collect()
    }

    /// The data is guaranteed nonnegative within `radius` of the base
    /// point when every sign-carrying term clears it.
    pub fn nonneg_within(&self, radius: f64) -> bool {
        self.terms
            .iter()
            .filter_map(|t| t.negative_clearance())
            .all(|c| c >= radius)
    }

    /// Whether the support of term `i` contains `v` for some negative term
    /// earlier in the list (used to avoid double counting overlapping
    /// negative regions during quadrature).
    fn covered_by_earlier_negative(&self, i: usize, v: &[f64; D]) -> bool {
        self.terms[..i].iter().any(|t| match t {
            ExteriorTerm::Shell { lo, hi, level } if *level < 0.0 => {
                let rho = norm(v);
                rho >= *lo && rho < *hi
            }
            ExteriorTerm::Bump {
                offset,
                width,
                height,
            } if *height < 0.0 => crate::geom::dist(v, offset) < *width,
            _ => false,
        })
    }

    /// Extremes of `g` over `inner <= |v| <= outer`, by a deterministic
    /// scan over a radial-angular grid joined with each term's own
    /// critical points, plus the value at infinity.
    pub fn extremes_beyond(&self, inner: f64, outer: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut visit = |v: &[f64; D]| {
            let rho = norm(v);
            if rho >= inner && rho <= outer {
                let g = self.eval_rel(v);
                lo = lo.min(g);
                hi = hi.max(g);
            }
        };
        let n_rad = 48;
        let n_dir = 64;
        for k in 0..n_rad {
            let rho = inner * (outer / inner).powf(k as f64 / (n_rad - 1) as f64);
            for j in 0..n_dir {
                visit(&scale(&spread_direction::<D>(j), rho));
            }
        }
        for t in &self.terms {
            match t {
                ExteriorTerm::Shell { lo: a, hi: b, .. } => {
                    for rho in [*a * 1.000001, 0.5 * (a + b), *b * 0.999999] {
                        for j in 0..n_dir {
                            visit(&scale(&spread_direction::<D>(j), rho));
                        }
                    }
                }
                ExteriorTerm::Bump { offset, width, .. } => {
                    visit(offset);
                    for j in 0..16 {
                        visit(&add(offset, &scale(&spread_direction::<D>(j), 0.5 * width)));
                    }
                }
                _ => {}
            }
        }
        // value at infinity: constants and fully risen ramps survive
        let far: f64 = self
            .terms
            .iter()
            .map(|t| match t {
                ExteriorTerm::Constant { level } => *level,
                ExteriorTerm::Ramp { level, .. } => *level,
                _ => 0.0,
            })
            .sum();
        (lo.min(far), hi.max(far))
    }

    /// Random nonnegative member of the ensemble family `kind % 3`:
    /// radial shells, off-center smooth bumps, and concentrated spikes
    /// just outside the extension ball. Support sizes are kept large
    /// enough that every lattice node sees the data with comfortably
    /// positive probability at the default path budget, since a single
    /// zero-hit node makes the infimum collapse.
    pub fn random_member<R: Rng>(kind: usize, r: f64, rng: &mut R) -> Self {
        let term = match kind % 3 {
            0 => {
                let lo = r * rng.random_range(0.95..1.7);
                let width = r * rng.random_range(0.6..1.4);
                ExteriorTerm::Shell {
                    lo,
                    hi: lo + width,
                    level: rng.random_range(0.2_f64.ln()..5.0_f64.ln()).exp(),
                }
            }
            1 => {
                let dist = r * rng.random_range(1.15..1.7);
                let dir = random_direction(rng);
                ExteriorTerm::Bump {
                    offset: scale(&dir, dist),
                    width: r * rng.random_range(0.7..1.1),
                    height: rng.random_range(0.2_f64.ln()..5.0_f64.ln()).exp(),
                }
            }
            _ => {
                let dist = r * rng.random_range(0.95..1.15);
                let dir = random_direction(rng);
                ExteriorTerm::Bump {
                    offset: scale(&dir, dist),
                    width: r * rng.random_range(0.35..0.5),
                    height: rng.random_range(0.5_f64.ln()..8.0_f64.ln()).exp(),
                }
            }
        };
        ExteriorFunction { terms: vec![term] }
    }

    /// Random signed member: positive base level plus one negative bump
    /// whose support keeps a clear margin outside `B(x0, r)`.
    pub fn random_signed<R: Rng>(r: f64, rng: &mut R) -> Self {
        let dist = r * rng.random_range(1.6..2.6);
        let width = (r * rng.random_range(0.25..0.5)).min(dist - 1.05 * r);
        let dir = random_direction(rng);
        ExteriorFunction {
            terms: vec![
                ExteriorTerm::Constant { level: 1.0 },
                ExteriorTerm::Bump {
                    offset: scale(&dir, dist),
                    width,
                    height: -rng.random_range(1.2..2.2),
                },
            ],
        }
    }
}

fn random_direction<const D: usize, R: Rng>(rng: &mut R) -> [f64; D] {
    let mut x = [0.0; D];
    if D == 2 {
        let theta = rng.random_range(0.0..TAU);
        x[0] = theta.cos();
        x[1] = theta.sin();
    } else {
        let mu: f64 = rng.random_range(-1.0..1.0);
        let psi = rng.random_range(0.0..TAU);
        let s = (1.0 - mu * mu).sqrt();
        x[0] = s * psi.cos();
        x[1] = s * psi.sin();
        x[2] = mu;
    }
    x
}

/// Uniform lattice offsets over a centered ball, with unit weights.
pub fn uniform_offsets<const D: usize>(
    radius: f64,
    target: usize,
) -> (Vec<[f64; D]>, Vec<f64>, f64) {
    let spacing = lattice_spacing_for::<D>(radius, target);
    let offsets = ball_lattice(&Ball::centered(radius), spacing, 1.0);
    let weights = vec![1.0; offsets.len()];
    (offsets, weights, spacing)
}

/// Multi-resolution offsets: level `n` covers the annulus between
/// `radii[n + 1]` and `radii[n]` at a spacing that puts roughly
/// `per_level` nodes in the full level ball; the last level fills its
/// whole ball. Weights are the lattice cell volumes, so weighted averages
/// over any sub-ball are unbiased.
pub fn nested_offsets<const D: usize>(
    radii: &[f64],
    per_level: usize,
) -> (Vec<[f64; D]>, Vec<f64>, f64) {
    assert!(!radii.is_empty());
    assert!(
        radii.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0),
        "level radii must decrease strictly"
    );
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    let mut finest = f64::INFINITY;
    for (n, &rho) in radii.iter().enumerate() {
        let h = lattice_spacing_for::<D>(rho, per_level);
        finest = finest.min(h);
        let cell = h.powi(D as i32);
        let inner_cut = radii.get(n + 1).copied();
        for x in ball_lattice(&Ball::centered(rho), h, 1.0) {
            if inner_cut.is_none_or(|c| norm(&x) > c) {
                offsets.push(x);
                weights.push(cell);
            }
        }
    }
    (offsets, weights, finest)
}

/// Pooled first-exit positions from every node of a lattice, all relative
/// to the ball center. One pool prices harmonic extensions of any number
/// of exterior data sets.
#[derive(Debug, Clone)]
pub struct ExitLattice<const D: usize> {
    pub ball: Ball<D>,
    pub spacing: f64,
    offsets: Vec<[f64; D]>,
    weights: Vec<f64>,
    exits: Vec<[f64; D]>,
    paths_per_node: usize,
}

pub fn exit_lattice<const D: usize>(
    model: &StableModel<D>,
    ball: &Ball<D>,
    offsets: Vec<[f64; D]>,
    weights: Vec<f64>,
    spacing: f64,
    paths_per_node: usize,
    root_seed: u64,
) -> Result<ExitLattice<D>> {
    if offsets.is_empty() || paths_per_node == 0 {
        return Err(Error::Precondition(
            "exit lattice needs nodes and a positive path budget".into(),
        ));
    }
    if offsets.len() != weights.len() {
        return Err(Error::Precondition(
            "one weight per lattice node is required".into(),
        ));
    }
    if let Some(bad) = offsets.iter().find(|o| norm(o) >= ball.radius) {
        return Err(Error::Precondition(format!(
            "lattice offset {bad:?} is not strictly inside radius {}",
            ball.radius
        )));
    }
    let scheme = build_scheme(model, JUMP_CUT_FRACTION * ball.radius)?;
    let exits = (0..offsets.len() * paths_per_node)
        .into_par_iter()
        .map(|k| {
            let node = k / paths_per_node;
            let mut rng = substream(
                root_seed,
                Domain::HarmonicField,
                node as u64,
                (k % paths_per_node) as u64,
            );
            sample_exit_relative(
                &scheme,
                ball.radius,
                &offsets[node],
                DEFAULT_STEP_BUDGET,
                &mut rng,
            )
            .map(|s| s.position)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExitLattice {
        ball: *ball,
        spacing,
        offsets,
        weights,
        exits,
        paths_per_node,
    })
}

impl<const D: usize> ExitLattice<D> {
    pub fn node_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn paths_per_node(&self) -> usize {
        self.paths_per_node
    }

    pub fn total_paths(&self) -> u64 {
        self.exits.len() as u64
    }

    pub fn offsets(&self) -> &[[f64; D]] {
        &self.offsets
    }
}

/// A harmonic function on a ball, sampled on a lattice:
/// `u(x) = E^x[g(X at the first exit)]` with per-node standard errors.
#[derive(Debug, Clone)]
pub struct HarmonicField<const D: usize> {
    pub ball: Ball<D>,
    pub spacing: f64,
    /// `sup |g|`; by the maximum principle every node value is bounded by
    /// it up to sampling noise.
    pub data_bound: f64,
    offsets: Vec<[f64; D]>,
    weights: Vec<f64>,
    values: Vec<f64>,
    std_errs: Vec<f64>,
    paths_per_node: usize,
}

/// Average the exterior data over a pool of cached exits.
pub fn harmonic_extend_pooled<const D: usize>(
    g: &ExteriorFunction<D>,
    pool: &ExitLattice<D>,
) -> HarmonicField<D> {
    let per_node: Vec<(f64, f64)> = (0..pool.offsets.len())
        .into_par_iter()
        .map(|i| {
            let lo = i * pool.paths_per_node;
            let mut m = Moments::new();
            for e in &pool.exits[lo..lo + pool.paths_per_node] {
                m.push(g.eval_rel(e));
            }
            (m.mean(), m.std_err())
        })
        .collect();
    HarmonicField {
        ball: pool.ball,
        spacing: pool.spacing,
        data_bound: g.sup_bound(),
        offsets: pool.offsets.clone(),
        weights: pool.weights.clone(),
        values: per_node.iter().map(|p| p.0).collect(),
        std_errs: per_node.iter().map(|p| p.1).collect(),
        paths_per_node: pool.paths_per_node,
    }
}

/// Build the harmonic extension of `g` over `ball` on the given lattice
/// offsets (relative to the ball center), sampling fresh exits.
pub fn harmonic_extend<const D: usize>(
    model: &StableModel<D>,
    g: &ExteriorFunction<D>,
    ball: &Ball<D>,
    offsets: Vec<[f64; D]>,
    weights: Vec<f64>,
    spacing: f64,
    paths_per_node: usize,
    root_seed: u64,
) -> Result<HarmonicField<D>> {
    let pool = exit_lattice(model, ball, offsets, weights, spacing, paths_per_node, root_seed)?;
    Ok(harmonic_extend_pooled(g, &pool))
}

/// Weighted reduction of a field over a centered sub-ball.
#[derive(Debug, Clone, Copy)]
pub struct FieldReduction {
    pub mean: f64,
    pub mean_std_err: f64,
    pub min: f64,
    pub min_std_err: f64,
    pub max: f64,
    pub max_std_err: f64,
    pub nodes: usize,
}

impl<const D: usize> HarmonicField<D> {
    pub fn node_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[[f64; D]] {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn std_errs(&self) -> &[f64] {
        &self.std_errs
    }

    pub fn paths_per_node(&self) -> usize {
        self.paths_per_node
    }

    /// Indices of nodes within `radius` of the center.
    pub fn nodes_within(&self, radius: f64) -> Vec<usize> {
        (0..self.offsets.len())
            .filter(|&i| norm(&self.offsets[i]) <= radius)
            .collect()
    }

    /// Nearest node to a relative position, with its distance.
    pub fn nearest_node(&self, v: &[f64; D]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, o) in self.offsets.iter().enumerate() {
            let d = crate::geom::dist(o, v);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Weighted mean, min and max of the field over a centered sub-ball.
    pub fn reduce_within(&self, radius: f64) -> Result<FieldReduction> {
        let idx = self.nodes_within(radius);
        if idx.is_empty() {
            return Err(Error::GridResolution(format!(
                "no lattice nodes within radius {radius:.6e} (spacing {:.6e})",
                self.spacing
            )));
        }
        let mut wsum = 0.0;
        let mut mean = 0.0;
        let mut var = 0.0;
        let mut min = (f64::INFINITY, 0.0);
        let mut max = (f64::NEG_INFINITY, 0.0);
        for &i in &idx {
            let w = self.weights[i];
            wsum += w;
            mean += w * self.values[i];
            var += w * w * self.std_errs[i] * self.std_errs[i];
            if self.values[i] < min.0 {
                min = (self.values[i], self.std_errs[i]);
            }
            if self.values[i] > max.0 {
                max = (self.values[i], self.std_errs[i]);
            }
        }
        Ok(FieldReduction {
            mean: mean / wsum,
            mean_std_err: var.sqrt() / wsum,
            min: min.0,
            min_std_err: min.1,
            max: max.0,
            max_std_err: max.1,
            nodes: idx.len(),
        })
    }

    /// Weighted fraction of nodes within `radius` where `value <= cut`.
    pub fn fraction_at_most(&self, radius: f64, cut: f64) -> Result<f64> {
        let idx = self.nodes_within(radius);
        if idx.is_empty() {
            return Err(Error::GridResolution(format!(
                "no lattice nodes within radius {radius:.6e}"
            )));
        }
        let mut wsum = 0.0;
        let mut hit = 0.0;
        for &i in &idx {
            wsum += self.weights[i];
            if self.values[i] <= cut {
                hit += self.weights[i];
            }
        }
        Ok(hit / wsum)
    }
}

/// The three terms of one weak-Harnack instance and the smallest constant
/// closing the inequality.
#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    /// Lattice average of `u` over `B(x0, r/lambda)`.
    pub avg_term: f64,
    pub avg_std_err: f64,
    /// Lattice infimum of `u` over `B(x0, r/theta)`.
    pub inf_term: f64,
    pub inf_std_err: f64,
    /// `sup_z integral of u^-(y) f_nu(y - z) dy` over `z` in
    /// `B(x0, r/sigma_ratio)`; exact zero for nonnegative data.
    pub tail_term: f64,
    /// Quadrature defect of the tail at the maximizing `z` when the node
    /// count doubles.
    pub tail_quad_tol: f64,
    /// Smallest `c` with `avg <= c (inf + tail)`.
    pub c_est: f64,
    pub c_std_err: f64,
    /// Either side of the inequality is statistically indistinguishable
    /// from zero, so this instance says nothing about the constant.
    pub vacuous: bool,
    pub n_avg_nodes: usize,
    pub n_inf_nodes: usize,
    pub n_tail_probes: usize,
}

/// Quadrature of `integral of (-g)^+(y) f_nu(y - z) dy` over the negative
/// regions of `g`, at relative probe point `z`.
fn negative_tail_at<const D: usize>(
    model: &StableModel<D>,
    g: &ExteriorFunction<D>,
    z: &[f64; D],
    n_radial: usize,
    n_angular: usize,
) -> Result<f64> {
    let (gl_x, gl_w) = gauss_legendre(n_radial);
    let mut total = 0.0;
    for &ti in &g.negative_terms() {
        // integration region and the polar origin for this term
        let (center, rho_lo, rho_hi): ([f64; D], f64, f64) = match &g.terms[ti] {
            ExteriorTerm::Bump { offset, width, .. } => (*offset, 0.0, *width),
            ExteriorTerm::Shell { lo, hi, .. } => ([0.0; D], *lo, *hi),
            _ => {
                return Err(Error::Precondition(
                    "negative exterior data must have compact support (shell or bump)".into(),
                ))
            }
        };
        let mut term_sum = 0.0;
        for (xi, wi) in gl_x.iter().zip(&gl_w) {
            let rho = 0.5 * (rho_hi + rho_lo) + 0.5 * (rho_hi - rho_lo) * xi;
            let w_rho = 0.5 * (rho_hi - rho_lo) * wi * rho.powi(D as i32 - 1);
            term_sum += w_rho * angular_average(model, g, z, &center, rho, n_angular, ti)?;
        }
        total += term_sum;
    }
    Ok(total)
}

/// Integral over directions of `(-g)^+(center + rho omega) f_nu(... - z)`,
/// already multiplied by the sphere surface element.
fn angular_average<const D: usize>(
    model: &StableModel<D>,
    g: &ExteriorFunction<D>,
    z: &[f64; D],
    center: &[f64; D],
    rho: f64,
    n_angular: usize,
    term_index: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    if D == 2 {
        let dpsi = TAU / n_angular as f64;
        for j in 0..n_angular {
            let psi = dpsi * j as f64;
            let mut y = *center;
            y[0] += rho * psi.cos();
            y[1] += rho * psi.sin();
            sum += dpsi * tail_integrand(model, g, &y, z, term_index)?;
        }
    } else {
        let n_mu = (n_angular / 2).max(4);
        let (mu_x, mu_w) = gauss_legendre(n_mu);
        let dpsi = TAU / n_angular as f64;
        for (mi, mw) in mu_x.iter().zip(&mu_w) {
            let s = (1.0 - mi * mi).max(0.0).sqrt();
            for j in 0..n_angular {
                let psi = dpsi * j as f64;
                let mut y = *center;
                y[0] += rho * s * psi.cos();
                y[1] += rho * s * psi.sin();
                y[2] += rho * mi;
                sum += mw * dpsi * tail_integrand(model, g, &y, z, term_index)?;
            }
        }
    }
    Ok(sum)
}

fn tail_integrand<const D: usize>(
    model: &StableModel<D>,
    g: &ExteriorFunction<D>,
    y: &[f64; D],
    z: &[f64; D],
    term_index: usize,
) -> Result<f64> {
    if g.covered_by_earlier_negative(term_index, y) {
        return Ok(0.0);
    }
    let neg = (-g.eval_rel(y)).max(0.0);
    if neg == 0.0 {
        return Ok(0.0);
    }
    Ok(neg * model.levy_density(&sub(y, z))?)
}

/// Evaluate the three weak-Harnack terms for a harmonic field built from
/// exterior data `g`, and the smallest constant closing the inequality.
pub fn verify_weak_harnack<const D: usize>(
    model: &StableModel<D>,
    field: &HarmonicField<D>,
    g: &ExteriorFunction<D>,
    params: &HarnackParams<D>,
) -> Result<HarnackReport> {
    if field.ball.center != params.x0
        || (field.ball.radius - params.a * params.r).abs() > 1e-12 * params.r
    {
        return Err(Error::Precondition(
            "field was not extended over the extension ball of these parameters".into(),
        ));
    }
    if !g.nonneg_within(params.r) {
        return Err(Error::Precondition(format!(
            "exterior data may be negative inside the ball of radius {}; \
             negative supports must clear it",
            params.r
        )));
    }

    let avg = field.reduce_within(params.avg_radius())?;
    let inf = field.reduce_within(params.inf_radius())?;

    let negative = !g.negative_terms().is_empty();
    let (tail, tail_tol, n_tail) = if negative {
        let h_z = lattice_spacing_for::<D>(params.tail_radius(), 240);
        let probes = ball_lattice(&Ball::centered(params.tail_radius()), h_z, 1.0);
        let mut best = (f64::NEG_INFINITY, [0.0; D]);
        for z in &probes {
            let t = negative_tail_at(model, g, z, 16, 32)?;
            if t > best.0 {
                best = (t, *z);
            }
        }
        let refined = negative_tail_at(model, g, &best.1, 32, 64)?;
        (best.0, (refined - best.0).abs(), probes.len())
    } else {
        (0.0, 0.0, 0)
    };

    let denom = inf.min + tail;
    let c_est = if denom > 0.0 {
        avg.mean / denom
    } else if avg.mean <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let c_std_err = if denom > 0.0 && avg.mean != 0.0 {
        c_est.abs()
            * ((avg.mean_std_err / avg.mean).powi(2) + (inf.min_std_err / denom).powi(2)).sqrt()
    } else {
        0.0
    };
    let vacuous =
        avg.mean <= 2.0 * avg.mean_std_err || denom <= 2.0 * inf.min_std_err;

    Ok(HarnackReport {
        avg_term: avg.mean,
        avg_std_err: avg.mean_std_err,
        inf_term: inf.min,
        inf_std_err: inf.min_std_err,
        tail_term: tail,
        tail_quad_tol: tail_tol,
        c_est,
        c_std_err,
        vacuous,
        n_avg_nodes: avg.nodes,
        n_inf_nodes: inf.nodes,
        n_tail_probes: n_tail,
    })
}

/// Monte Carlo budget for ensemble experiments.
#[derive(Debug, Clone, Copy)]
pub struct HarnackMcBudget {
    pub lattice_target: usize,
    pub paths_per_node: usize,
}

impl Default for HarnackMcBudget {
    fn default() -> Self {
        HarnackMcBudget {
            lattice_target: 900,
            paths_per_node: 512,
        }
    }
}

/// Ensemble estimate of the weak-Harnack constant.
#[derive(Debug, Clone, Serialize)]
pub struct HarnackEnsemble {
    /// Largest `c_est` over the ensemble.
    pub c1: f64,
    /// `c_est` per member, in member order; member 0 is constant data.
    pub distribution: Vec<f64>,
    pub reports: Vec<HarnackReport>,
    pub n_paths_total: u64,
}

/// Estimate the uniform constant by maximizing `c_est` over an ensemble of
/// nonnegative exterior data sets (far shells, mid bumps, near spikes),
/// all priced on one shared pool of exits. Member `i` draws its data from
/// the stream `(root_seed, Ensemble, i)`, so a shorter ensemble is a
/// prefix of a longer one.
pub fn estimate_harnack_constant<const D: usize>(
    model: &StableModel<D>,
    params: &HarnackParams<D>,
    ensemble_size: usize,
    budget: &HarnackMcBudget,
    root_seed: u64,
) -> Result<HarnackEnsemble> {
    if ensemble_size == 0 {
        return Err(Error::Precondition("ensemble needs at least one member".into()));
    }
    let ball = params.extension_ball();
    let (offsets, weights, spacing) = uniform_offsets::<D>(ball.radius, budget.lattice_target);
    let pool = exit_lattice(
        model,
        &ball,
        offsets,
        weights,
        spacing,
        budget.paths_per_node,
        child_seed(root_seed, 1),
    )?;

    let mut reports = Vec::with_capacity(ensemble_size);
    let mut distribution = Vec::with_capacity(ensemble_size);
    for i in 0..ensemble_size {
        let g = if i == 0 {
            ExteriorFunction::constant(1.0)
        } else {
            let mut rng = stream(root_seed, Domain::Ensemble, i as u64);
            ExteriorFunction::random_member(i - 1, params.r, &mut rng)
        };
        let field = harmonic_extend_pooled(&g, &pool);
        let report = verify_weak_harnack(model, &field, &g, params)?;
        if !report.c_est.is_finite() {
            return Err(Error::McBudget(format!(
                "ensemble member {i} has a statistically zero infimum; raise the path budget"
            )));
        }
        distribution.push(report.c_est);
        reports.push(report);
    }
    let c1 = distribution.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(HarnackEnsemble {
        c1,
        distribution,
        reports,
        n_paths_total: pool.total_paths(),
    })
}
