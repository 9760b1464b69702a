//! Transition densities by Fourier inversion of `e^{-t Phi}`.
//!
//! Only the unit-time grid is ever inverted in production paths; every
//! other time goes through the exact stable scaling
//! `p(t,x) = t^{-d/alpha} p(1, t^{-1/alpha} x)`. The discrete inversion
//! equals the 2L-periodization of the true density, so the dominant error
//! away from the folding boundary is aliasing; `alias_relative_bound`
//! quantifies it per point so callers can restrict themselves to trusted
//! nodes.

use std::io::{Read as _, Write as _};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geom::{norm, scale};
use crate::measure::SpectralMeasure;
use crate::model::StableModel;

/// Largest tolerated fraction of probability mass outside the grid box,
/// estimated from the jump-kernel tail.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 0.15;

/// Grid extent L for `[-L, L]^d`: 40 in the plane, 20 in space.
pub fn default_grid_extent(d: usize) -> f64 {
    if d == 2 {
        40.0
    } else {
        20.0
    }
}

/// Grid spacing h: dyadic values giving 2048^2 and 256^3 transforms.
pub fn default_grid_spacing(d: usize) -> f64 {
    if d == 2 {
        0.0390625
    } else {
        0.15625
    }
}

/// Flip the sign so the first nonzero component is positive. Evaluating
/// the symbol on the canonical representative makes Phi(-u) == Phi(u)
/// bit-exact, which keeps the transform input even and its output real.
fn canonical_sign<const D: usize>(u: &[f64; D]) -> [f64; D] {
    for c in u.iter() {
        if *c != 0.0 {
            if *c < 0.0 {
                let mut v = *u;
                for x in v.iter_mut() {
                    *x = -*x;
                }
                return v;
            }
            return *u;
        }
    }
    *u
}

/// Fast evaluator for `Phi` tuned per measure variant: closed form for the
/// isotropic case, an exact atom sum, and an interpolated direction table
/// for density measures (the symbol is homogeneous, so one table over the
/// sphere serves every frequency).
pub(crate) enum SymbolEvaluator<'a, const D: usize> {
    Direct(&'a StableModel<D>),
    Iso {
        scale: f64,
        alpha: f64,
    },
    Circle {
        table: Vec<f64>,
        alpha: f64,
    },
    Sphere {
        table: Vec<f64>,
        n_mu: usize,
        n_psi: usize,
        alpha: f64,
    },
}

impl<'a, const D: usize> SymbolEvaluator<'a, D> {
    pub(crate) fn new(model: &'a StableModel<D>) -> Self {
        let alpha = model.alpha();
        match model.measure() {
            SpectralMeasure::Isotropic { .. } => SymbolEvaluator::Iso {
                scale: model.char_exponent(&unit_axis::<D>()),
                alpha,
            },
            SpectralMeasure::Atomic { .. } => SymbolEvaluator::Direct(model),
            SpectralMeasure::Density { .. } => {
                if D == 2 {
                    let m = 8192;
                    let table: Vec<f64> = (0..m)
                        .into_par_iter()
                        .map(|i| {
                            let theta = std::f64::consts::PI * i as f64 / m as f64;
                            let mut dir = [0.0; D];
                            dir[0] = theta.cos();
                            dir[1] = theta.sin();
                            model.char_exponent(&dir)
                        })
                        .collect();
                    SymbolEvaluator::Circle { table, alpha }
                } else {
                    let (n_mu, n_psi) = (192, 384);
                    let table: Vec<f64> = (0..n_mu * n_psi)
                        .into_par_iter()
                        .map(|idx| {
                            let i = idx / n_psi;
                            let j = idx % n_psi;
                            let mu = -1.0 + 2.0 * i as f64 / (n_mu - 1) as f64;
                            let psi = 2.0 * std::f64::consts::PI * j as f64 / n_psi as f64;
                            let s = (1.0 - mu * mu).max(0.0).sqrt();
                            let mut dir = [0.0; D];
                            dir[0] = s * psi.cos();
                            dir[1] = s * psi.sin();
                            dir[2] = mu;
                            model.char_exponent(&dir)
                        })
                        .collect();
                    SymbolEvaluator::Sphere {
                        table,
                        n_mu,
                        n_psi,
                        alpha,
                    }
                }
            }
        }
    }

    pub(crate) fn eval(&self, u: &[f64; D]) -> f64 {
        let r = norm(u);
        if r == 0.0 {
            return 0.0;
        }
        match self {
            SymbolEvaluator::Direct(model) => model.char_exponent(u),
            SymbolEvaluator::Iso { scale, alpha } => scale * r.powf(*alpha),
            SymbolEvaluator::Circle { table, alpha } => {
                let uc = canonical_sign(u);
                let m = table.len();
                // the symbol is even, so its angular factor has period pi
                let theta = uc[1].atan2(uc[0]).rem_euclid(std::f64::consts::PI);
                let t = theta / std::f64::consts::PI * m as f64;
                let i0 = (t.floor() as usize).min(m - 1);
                let f = t - i0 as f64;
                let g = table[i0] * (1.0 - f) + table[(i0 + 1) % m] * f;
                r.powf(*alpha) * g
            }
            SymbolEvaluator::Sphere {
                table,
                n_mu,
                n_psi,
                alpha,
            } => {
                let uc = canonical_sign(u);
                let mu = (uc[2] / r).clamp(-1.0, 1.0);
                let psi = uc[1].atan2(uc[0]).rem_euclid(2.0 * std::f64::consts::PI);
                let a = (mu + 1.0) / 2.0 * (*n_mu as f64 - 1.0);
                let i0 = (a.floor() as usize).min(n_mu - 2);
                let fa = a - i0 as f64;
                let b = psi / (2.0 * std::f64::consts::PI) * *n_psi as f64;
                let j0 = (b.floor() as usize).min(*n_psi - 1);
                let fb = b - j0 as f64;
                let j1 = (j0 + 1) % n_psi;
                let v00 = table[i0 * n_psi + j0];
                let v01 = table[i0 * n_psi + j1];
                let v10 = table[(i0 + 1) * n_psi + j0];
                let v11 = table[(i0 + 1) * n_psi + j1];
                let g = v00 * (1.0 - fa) * (1.0 - fb)
                    + v01 * (1.0 - fa) * fb
                    + v10 * fa * (1.0 - fb)
                    + v11 * fa * fb;
                r.powf(*alpha) * g
            }
        }
    }
}

fn unit_axis<const D: usize>() -> [f64; D] {
    let mut e = [0.0; D];
    e[0] = 1.0;
    e
}

/// Values of `p(t_ref, .)` on the uniform lattice `{(j - n/2) h}` of
/// `[-L, L)^d`. Production grids have `t_ref = 1`; other reference times
/// exist only as oracles for the scaling-law checks.
#[derive(Debug, Clone)]
pub struct TransitionDensityGrid<const D: usize> {
    pub t_ref: f64,
    pub extent: f64,
    pub spacing: f64,
    pub n: usize,
    values: Vec<f64>,
    pub mass: f64,
    /// Largest negative excursion removed by the clamp.
    pub ringing: f64,
    /// max value / min(1, |x|^{-alpha-d}) over the lattice.
    pub c_est: f64,
    pub worst_node: [f64; D],
    /// max value * |x|^{alpha+d} over the annulus L/2 <= |x| <= 3L/4;
    /// the envelope constant actually governing the far tail, used for
    /// aliasing estimates (c_est is dominated by the central peak).
    pub tail_coefficient: f64,
    pub alpha: f64,
    pub model_hash: String,
}

/// Result of `verify_heat_kernel_bound`.
#[derive(Debug, Clone)]
pub struct HeatKernelBound<const D: usize> {
    pub c_est: f64,
    pub worst_node: [f64; D],
}

/// A density query that may fall outside the tabulated box: either an
/// interpolated value or the heat-kernel upper bound for the tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityEval {
    Value(f64),
    Bound(f64),
}

impl DensityEval {
    pub fn value(&self) -> f64 {
        match self {
            DensityEval::Value(v) | DensityEval::Bound(v) => *v,
        }
    }

    pub fn is_bound(&self) -> bool {
        matches!(self, DensityEval::Bound(_))
    }
}

impl<const D: usize> TransitionDensityGrid<D> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lattice point of a multi-index.
    pub fn node_position(&self, j: &[usize; D]) -> [f64; D] {
        let mut x = [0.0; D];
        for a in 0..D {
            x[a] = (j[a] as f64 - (self.n / 2) as f64) * self.spacing;
        }
        x
    }

    pub fn flat_index(&self, j: &[usize; D]) -> usize {
        let mut idx = 0;
        for a in 0..D {
            debug_assert!(j[a] < self.n);
            idx = idx * self.n + j[a];
        }
        idx
    }

    pub fn multi_index(&self, flat: usize) -> [usize; D] {
        let mut j = [0usize; D];
        let mut rem = flat;
        for a in (0..D).rev() {
            j[a] = rem % self.n;
            rem /= self.n;
        }
        j
    }

    pub fn value(&self, j: &[usize; D]) -> f64 {
        self.values[self.flat_index(j)]
    }

    /// Multilinear interpolation; `None` outside the lattice hull.
    pub fn interpolate(&self, x: &[f64; D]) -> Option<f64> {
        let mut base = [0usize; D];
        let mut frac = [0.0; D];
        for a in 0..D {
            let g = x[a] / self.spacing + (self.n / 2) as f64;
            if !(0.0..=(self.n - 1) as f64).contains(&g) {
                return None;
            }
            let mut b = g.floor() as usize;
            let mut f = g - b as f64;
            if b >= self.n - 1 {
                b = self.n - 2;
                f = 1.0;
            }
            base[a] = b;
            frac[a] = f;
        }
        let mut sum = 0.0;
        for corner in 0..(1usize << D) {
            let mut w = 1.0;
            let mut j = base;
            for a in 0..D {
                if corner >> a & 1 == 1 {
                    j[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            sum += w * self.values[self.flat_index(&j)];
        }
        Some(sum)
    }

    /// Write "x,p" pairs along a centered axis line.
    pub fn write_axis_profile(&self, axis: usize, path: &Path) -> Result<()> {
        assert!(axis < D);
        let mut out = String::from("x,p\n");
        let mut j = [self.n / 2; D];
        for i in 0..self.n {
            j[axis] = i;
            let x = self.node_position(&j);
            out.push_str(&format!("{:.9e},{:.9e}\n", x[axis], self.value(&j)));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Serialize grid plus header to a binary cache file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"SDG1")?;
        f.write_all(&(D as u32).to_le_bytes())?;
        f.write_all(&(self.n as u64).to_le_bytes())?;
        for v in [
            self.t_ref,
            self.alpha,
            self.extent,
            self.spacing,
            self.mass,
            self.ringing,
            self.c_est,
            self.tail_coefficient,
        ] {
            f.write_all(&v.to_le_bytes())?;
        }
        for v in self.worst_node.iter() {
            f.write_all(&v.to_le_bytes())?;
        }
        let hash = self.model_hash.as_bytes();
        f.write_all(&(hash.len() as u32).to_le_bytes())?;
        f.write_all(hash)?;
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Load a cache written by `save`, refusing a header that does not
    /// match the expected model hash.
    pub fn load(path: &Path, expected_hash: &str) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != b"SDG1" {
            return Err(Error::BadCache("wrong magic bytes".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        f.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) as usize != D {
            return Err(Error::BadCache(format!(
                "cache dimension {} does not match {D}",
                u32::from_le_bytes(u32buf)
            )));
        }
        f.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        let read_f64 = |f: &mut std::io::BufReader<std::fs::File>| -> Result<f64> {
            let mut b = [0u8; 8];
            f.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let t_ref = read_f64(&mut f)?;
        let alpha = read_f64(&mut f)?;
        let extent = read_f64(&mut f)?;
        let spacing = read_f64(&mut f)?;
        let mass = read_f64(&mut f)?;
        let ringing = read_f64(&mut f)?;
        let c_est = read_f64(&mut f)?;
        let tail_coefficient = read_f64(&mut f)?;
        let mut worst_node = [0.0; D];
        for v in worst_node.iter_mut() {
            *v = read_f64(&mut f)?;
        }
        f.read_exact(&mut u32buf)?;
        let hash_len = u32::from_le_bytes(u32buf) as usize;
        let mut hash_bytes = vec![0u8; hash_len];
        f.read_exact(&mut hash_bytes)?;
        let model_hash = String::from_utf8(hash_bytes)
            .map_err(|_| Error::BadCache("hash is not utf-8".into()))?;
        if model_hash != expected_hash {
            return Err(Error::BadCache(format!(
                "cache was built for model {model_hash}, expected {expected_hash}"
            )));
        }
        let total = n.pow(D as u32);
        let mut values = vec![0.0; total];
        let mut buf = vec![0u8; total * 8];
        f.read_exact(&mut buf)?;
        for (i, chunk) in buf.chunks_exact(8).enumerate() {
            values[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(TransitionDensityGrid {
            t_ref,
            extent,
            spacing,
            n,
            values,
            mass,
            ringing,
            c_est,
            tail_coefficient,
            worst_node,
            alpha,
            model_hash,
        })
    }
}

/// In-place FFT along every axis of an n^d row-major array. The contiguous
/// axis runs in parallel over lines; the others gather strided lines into
/// a scratch row.
fn fft_all_axes(buf: &mut [Complex<f64>], n: usize, d: usize) {
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    let scratch_len = fft.get_inplace_scratch_len();
    buf.par_chunks_mut(n).for_each_init(
        || vec![Complex::default(); scratch_len],
        |scratch, line| fft.process_with_scratch(line, scratch),
    );
    for axis in (0..d - 1).rev() {
        let stride = n.pow((d - 1 - axis) as u32);
        let slab = n * stride;
        buf.par_chunks_mut(slab).for_each_init(
            || {
                (
                    vec![Complex::default(); scratch_len],
                    vec![Complex::default(); n],
                )
            },
            |(scratch, line), chunk| {
                for i in 0..stride {
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = chunk[i + j * stride];
                    }
                    fft.process_with_scratch(line, scratch);
                    for (j, v) in line.iter().enumerate() {
                        chunk[i + j * stride] = *v;
                    }
                }
            },
        );
    }
}

/// Invert `e^{-Phi}` on `[-L, L]^d` with the default tail tolerance.
pub fn unit_density_grid<const D: usize>(
    model: &StableModel<D>,
    extent: f64,
    spacing: f64,
) -> Result<TransitionDensityGrid<D>> {
    invert_symbol(model, 1.0, extent, spacing, DEFAULT_TAIL_TOLERANCE)
}

/// `unit_density_grid` with an explicit tail-mass tolerance.
pub fn unit_density_grid_with_tail_tol<const D: usize>(
    model: &StableModel<D>,
    extent: f64,
    spacing: f64,
    tail_tol: f64,
) -> Result<TransitionDensityGrid<D>> {
    invert_symbol(model, 1.0, extent, spacing, tail_tol)
}

/// Invert `e^{-t Phi}` directly. This bypasses the scaling law on purpose:
/// it provides the independent second inversion the scaling-law checks
/// compare against.
pub fn time_density_grid<const D: usize>(
    model: &StableModel<D>,
    t: f64,
    extent: f64,
    spacing: f64,
) -> Result<TransitionDensityGrid<D>> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("time must be positive, got {t}")));
    }
    invert_symbol(model, t, extent, spacing, DEFAULT_TAIL_TOLERANCE)
}

/// Shared inversion core. Pre-checks that the grid can represent the
/// density: the frequency cutoff U = pi/h must push `e^{-t Phi}` below
/// 1e-12, and the estimated mass beyond the box (the jump-kernel tail
/// `t c(alpha) |mu| L^{-alpha} / alpha`) must not exceed `tail_tol`.
fn invert_symbol<const D: usize>(
    model: &StableModel<D>,
    t: f64,
    extent: f64,
    spacing: f64,
    tail_tol: f64,
) -> Result<TransitionDensityGrid<D>> {
    if !(extent > 0.0 && spacing > 0.0 && spacing < extent) {
        return Err(Error::Precondition(format!(
            "need 0 < spacing < extent, got h={spacing}, L={extent}"
        )));
    }
    let nf = 2.0 * extent / spacing;
    let n = nf.round() as usize;
    if (n as f64 - nf).abs() > 1e-9 * nf {
        return Err(Error::GridResolution(format!(
            "2L/h = {nf} is not an integer node count"
        )));
    }
    if n % 4 != 0 {
        return Err(Error::GridResolution(format!(
            "node count {n} per axis must be divisible by 4"
        )));
    }
    let alpha = model.alpha();
    let u_max = std::f64::consts::PI / spacing;
    let decay = t * model.symbol_min_on_sphere() * u_max.powf(alpha);
    let needed = -(1e-12f64).ln();
    if decay < needed {
        return Err(Error::GridResolution(format!(
            "grid too coarse: t * min Phi at the frequency cutoff is {decay:.3e}, \
             need > {needed:.3e} for 1e-12 spectral decay"
        )));
    }
    let tail_mass = t * model.levy_norm() * model.total_mass() * extent.powf(-alpha) / alpha;
    if tail_mass > tail_tol {
        return Err(Error::GridResolution(format!(
            "grid too small: estimated mass beyond L={extent} is {tail_mass:.3e}, \
             tolerance {tail_tol:.3e}"
        )));
    }

    let total = n.pow(D as u32);
    let du = 2.0 * std::f64::consts::PI / (n as f64 * spacing);
    let evaluator = SymbolEvaluator::new(model);
    let half = (n / 2) as f64;
    let mut buf: Vec<Complex<f64>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut u = [0.0; D];
            let mut parity = 0usize;
            for a in (0..D).rev() {
                let k = rem % n;
                rem /= n;
                u[a] = (k as f64 - half) * du;
                parity += k;
            }
            let s = (-t * evaluator.eval(&u)).exp();
            Complex::new(if parity % 2 == 0 { s } else { -s }, 0.0)
        })
        .collect();
    fft_all_axes(&mut buf, n, D);

    let cell = (du / (2.0 * std::f64::consts::PI)).powi(D as i32);
    let mut ringing = 0.0f64;
    let mut values = vec![0.0f64; total];
    for (flat, v) in values.iter_mut().enumerate() {
        let mut rem = flat;
        let mut parity = 0usize;
        for _ in 0..D {
            parity += rem % n;
            rem /= n;
        }
        let raw = if parity % 2 == 0 {
            buf[flat].re * cell
        } else {
            -buf[flat].re * cell
        };
        if raw < 0.0 {
            ringing = ringing.max(-raw);
            *v = 0.0;
        } else {
            *v = raw;
        }
    }
    drop(buf);

    let mass = values.iter().sum::<f64>() * spacing.powi(D as i32);
    if (mass - 1.0).abs() > 1e-3 {
        return Err(Error::GridResolution(format!(
            "grid mass {mass:.6} drifted from 1 beyond 1e-3"
        )));
    }

    let mut grid = TransitionDensityGrid {
        t_ref: t,
        extent,
        spacing,
        n,
        values,
        mass,
        ringing,
        c_est: 0.0,
        worst_node: [0.0; D],
        tail_coefficient: 0.0,
        alpha,
        model_hash: model.hash().to_string(),
    };
    let bound = heat_kernel_bound_scan(&grid);
    grid.c_est = bound.c_est;
    grid.worst_node = bound.worst_node;
    grid.tail_coefficient = tail_coefficient_scan(&grid);
    Ok(grid)
}

fn heat_kernel_bound_scan<const D: usize>(grid: &TransitionDensityGrid<D>) -> HeatKernelBound<D> {
    let power = -(grid.alpha + D as f64);
    let mut c_est = 0.0;
    let mut worst = [0.0; D];
    for (flat, v) in grid.values.iter().enumerate() {
        let j = grid.multi_index(flat);
        let x = grid.node_position(&j);
        let envelope = norm(&x).powf(power).min(1.0);
        let ratio = v / envelope;
        if ratio > c_est {
            c_est = ratio;
            worst = x;
        }
    }
    HeatKernelBound {
        c_est,
        worst_node: worst,
    }
}

fn tail_coefficient_scan<const D: usize>(grid: &TransitionDensityGrid<D>) -> f64 {
    let power = grid.alpha + D as f64;
    let lo = 0.5 * grid.extent;
    let hi = 0.75 * grid.extent;
    let mut coeff = 0.0f64;
    for (flat, v) in grid.values.iter().enumerate() {
        let j = grid.multi_index(flat);
        let r = norm(&grid.node_position(&j));
        if r >= lo && r <= hi {
            coeff = coeff.max(v * r.powf(power));
        }
    }
    if coeff > 0.0 {
        coeff
    } else {
        grid.c_est
    }
}

/// Scan for the smallest C with `p(1,x) <= C min(1, |x|^{-alpha-d})` on the
/// lattice.
pub fn verify_heat_kernel_bound<const D: usize>(
    model: &StableModel<D>,
    grid: &TransitionDensityGrid<D>,
) -> Result<HeatKernelBound<D>> {
    if model.hash() != grid.model_hash {
        return Err(Error::Precondition(
            "grid was built for a different model".into(),
        ));
    }
    Ok(heat_kernel_bound_scan(grid))
}

/// `p(t, x)` through the scaling law and grid interpolation. Outside the
/// tabulated box the heat-kernel tail bound is returned, flagged.
pub fn density_at<const D: usize>(
    model: &StableModel<D>,
    grid: &TransitionDensityGrid<D>,
    t: f64,
    x: &[f64; D],
) -> Result<DensityEval> {
    if model.hash() != grid.model_hash {
        return Err(Error::Precondition(
            "grid was built for a different model".into(),
        ));
    }
    if grid.t_ref != 1.0 {
        return Err(Error::Precondition(
            "scaling queries need the unit-time grid".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("time must be positive, got {t}")));
    }
    let alpha = model.alpha();
    let d = D as f64;
    let s = t.powf(-1.0 / alpha);
    let y = scale(x, s);
    let t_factor = t.powf(-d / alpha);
    match grid.interpolate(&y) {
        Some(v) => Ok(DensityEval::Value(t_factor * v)),
        None => {
            let envelope = norm(&y).powf(-(alpha + d)).min(1.0);
            Ok(DensityEval::Bound(grid.c_est * t_factor * envelope))
        }
    }
}

/// Relative size of the periodization (aliasing) error at `x`: the tail
/// envelope summed over nearby periodic images, divided by the grid value.
/// Conservative by roughly a factor 1.3-2; small values mark nodes where
/// the grid is trustworthy to that relative accuracy.
pub fn alias_relative_bound<const D: usize>(grid: &TransitionDensityGrid<D>, x: &[f64; D]) -> f64 {
    let p = grid.interpolate(x).unwrap_or(0.0);
    if p <= 0.0 {
        return f64::INFINITY;
    }
    let power = -(grid.alpha + D as f64);
    let period = 2.0 * grid.extent;
    let mut alias = 0.0;
    let reach = 2i64;
    let side = (2 * reach + 1) as usize;
    for code in 0..side.pow(D as u32) {
        let mut rem = code;
        let mut img = *x;
        let mut zero = true;
        for a in 0..D {
            let m = (rem % side) as i64 - reach;
            rem /= side;
            if m != 0 {
                zero = false;
            }
            img[a] += period * m as f64;
        }
        if zero {
            continue;
        }
        alias += norm(&img).powf(power);
    }
    // images beyond the scanned block contribute a small extra factor
    1.3 * grid.tail_coefficient * alias / p
}
