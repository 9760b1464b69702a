//! The process model: dimension, stability index, spectral measure, and
//! the derived quantities everything else consumes.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{norm, scale, unit};
use crate::measure::SpectralMeasure;
use crate::quad::one_minus_cos_integral;
use crate::sphere::{default_resolution, sphere_quadrature, SphereQuadrature};

/// Outcome of the dense direction scan of the symbol on the unit sphere.
#[derive(Debug, Clone, Serialize)]
pub struct NondegeneracyCertificate<const D: usize> {
    pub min_value: f64,
    pub max_value: f64,
    /// Direction attaining the scanned minimum.
    #[serde(serialize_with = "crate::geom::vec_array::serialize")]
    pub arg_direction: [f64; D],
}

impl<const D: usize> NondegeneracyCertificate<D> {
    /// Relative acceptance rule: the scanned minimum must not collapse
    /// against the maximum.
    pub fn accepted(&self) -> bool {
        self.min_value > 1e-10 * self.max_value
    }
}

/// A symmetric stable process specification together with cached
/// derived data. Immutable after construction and cheap to share.
#[derive(Debug, Clone)]
pub struct StableModel<const D: usize> {
    alpha: f64,
    measure: SpectralMeasure<D>,
    quadrature: SphereQuadrature<D>,
    /// Quadrature weight times density value per node (density variants).
    node_weights: Vec<f64>,
    /// 1 / integral of (1 - cos r) r^{-1-alpha}; normalizes the jump kernel.
    levy_norm: f64,
    /// Total mass of the spectral measure.
    total_mass: f64,
    /// For the isotropic variant: Phi(u) = isotropic_scale * |u|^alpha.
    isotropic_scale: Option<f64>,
    certificate: NondegeneracyCertificate<D>,
    hash: String,
}

impl<const D: usize> StableModel<D> {
    /// Build and validate a model. `quad_n` is the angular resolution
    /// (nodes on the circle, polar order on the 2-sphere); `None` picks
    /// the defaults (512 and 64).
    pub fn new(
        alpha: f64,
        measure: SpectralMeasure<D>,
        quad_n: Option<usize>,
    ) -> Result<Self> {
        if D != 2 && D != 3 {
            return Err(Error::UnsupportedDimension(D));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::Precondition(format!(
                "stability index must lie in (0, 2), got {alpha}"
            )));
        }
        let n = quad_n.unwrap_or_else(|| default_resolution(D));
        let quadrature = sphere_quadrature::<D>(n)?;

        let mut node_weights = Vec::new();
        let total_mass;
        match &measure {
            SpectralMeasure::Density { f, bound, .. } => {
                node_weights.reserve(quadrature.len());
                for xi in &quadrature.nodes {
                    let v = f(xi);
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::InvalidMeasure(format!(
                            "density value {v} at {xi:?}"
                        )));
                    }
                    if v > bound * (1.0 + 1e-12) {
                        return Err(Error::InvalidMeasure(format!(
                            "density value {v} at {xi:?} exceeds the declared bound {bound}"
                        )));
                    }
                    node_weights.push(v);
                }
                for i in 0..quadrature.len() {
                    let j = quadrature.antipode_index(i);
                    if (node_weights[i] - node_weights[j]).abs() > 1e-10 * bound {
                        return Err(Error::InvalidMeasure(format!(
                            "density is not even: f({:?}) = {} vs f({:?}) = {}",
                            quadrature.nodes[i],
                            node_weights[i],
                            quadrature.nodes[j],
                            node_weights[j]
                        )));
                    }
                }
                for (w, fw) in quadrature.weights.iter().zip(node_weights.iter_mut()) {
                    *fw *= w;
                }
                total_mass = node_weights.iter().sum();
            }
            SpectralMeasure::Isotropic { kappa } => {
                node_weights = quadrature.weights.iter().map(|w| kappa * w).collect();
                total_mass = kappa * crate::geom::sphere_surface_area(D);
            }
            SpectralMeasure::Atomic { atoms } => {
                total_mass = atoms.iter().map(|(_, w)| w).sum();
            }
        }
        if !(total_mass > 0.0) {
            return Err(Error::InvalidMeasure(
                "spectral measure has zero total mass".into(),
            ));
        }

        let levy_norm = 1.0 / one_minus_cos_integral(alpha);

        let mut hasher = Sha256::new();
        hasher.update(format!(
            "d={D};alpha={alpha:.17e};measure={};quad={n}",
            measure.descriptor()
        ));
        let hash = format!("{:x}", hasher.finalize());

        let mut model = StableModel {
            alpha,
            measure,
            quadrature,
            node_weights,
            levy_norm,
            total_mass,
            isotropic_scale: None,
            certificate: NondegeneracyCertificate {
                min_value: 0.0,
                max_value: 0.0,
                arg_direction: [0.0; D],
            },
            hash,
        };
        if let SpectralMeasure::Isotropic { kappa } = model.measure {
            // Phi is rotation invariant with a closed-form radial scale,
            // so symbol evaluation is O(1) and quadrature-error free.
            model.isotropic_scale = Some(kappa * crate::sphere::axis_alpha_moment(alpha, D));
        }
        model.certificate = model.scan_symbol_minimum();
        if !model.certificate.accepted() {
            return Err(Error::Degenerate {
                min_value: model.certificate.min_value,
                direction: model.certificate.arg_direction.to_vec(),
            });
        }
        Ok(model)
    }

    pub fn dimension(&self) -> usize {
        D
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn measure(&self) -> &SpectralMeasure<D> {
        &self.measure
    }

    pub fn quadrature(&self) -> &SphereQuadrature<D> {
        &self.quadrature
    }

    /// The constant c(alpha) in the jump density
    /// `f_nu(x) = c(alpha) f_mu(x/|x|) |x|^{-d-alpha}`.
    pub fn levy_norm(&self) -> f64 {
        self.levy_norm
    }

    /// Total mass of the spectral measure.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Hex digest identifying (d, alpha, measure, resolution).
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Minimum of the symbol over scanned unit directions.
    pub fn symbol_min_on_sphere(&self) -> f64 {
        self.certificate.min_value
    }

    /// Maximum of the symbol over scanned unit directions.
    pub fn symbol_max_on_sphere(&self) -> f64 {
        self.certificate.max_value
    }

    fn symbol_by_sum(&self, u: &[f64; D]) -> f64 {
        match &self.measure {
            SpectralMeasure::Atomic { atoms } => atoms
                .iter()
                .map(|(dir, w)| w * crate::geom::dot(u, dir).abs().powf(self.alpha))
                .sum(),
            _ => self
                .quadrature
                .nodes
                .iter()
                .zip(&self.node_weights)
                .map(|(xi, nw)| nw * crate::geom::dot(u, xi).abs().powf(self.alpha))
                .sum(),
        }
    }

    /// The characteristic exponent `Phi(u)`.
    pub fn char_exponent(&self, u: &[f64; D]) -> f64 {
        if let Some(scale) = self.isotropic_scale {
            return scale * norm(u).powf(self.alpha);
        }
        self.symbol_by_sum(u)
    }

    /// The jump (Levy measure) density at `x != 0`.
    pub fn levy_density(&self, x: &[f64; D]) -> Result<f64> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::Singularity);
        }
        let xi = scale(x, 1.0 / r);
        let f = self
            .measure
            .density_at(&xi)
            .ok_or(Error::NoDensity)?;
        Ok(self.levy_norm * f * r.powf(-(D as f64) - self.alpha))
    }

    /// Direction/weight pairs representing the spectral measure at the
    /// model's working resolution (exact atoms for the atomic variant).
    pub fn weighted_directions(&self) -> Vec<([f64; D], f64)> {
        match &self.measure {
            SpectralMeasure::Atomic { atoms } => atoms.clone(),
            _ => self
                .quadrature
                .nodes
                .iter()
                .copied()
                .zip(self.node_weights.iter().copied())
                .collect(),
        }
    }

    /// Second moment matrix of the spectral measure.
    pub fn spectral_second_moment(&self) -> [[f64; D]; D] {
        let mut m = [[0.0; D]; D];
        let mut accumulate = |xi: &[f64; D], w: f64| {
            for i in 0..D {
                for j in 0..D {
                    m[i][j] += w * xi[i] * xi[j];
                }
            }
        };
        match &self.measure {
            SpectralMeasure::Atomic { atoms } => {
                for (dir, w) in atoms {
                    accumulate(dir, *w);
                }
            }
            _ => {
                for (xi, nw) in self.quadrature.nodes.iter().zip(&self.node_weights) {
                    accumulate(xi, *nw);
                }
            }
        }
        m
    }

    /// Rerun the direction scan and return the certificate.
    pub fn check_nondegenerate(&self) -> NondegeneracyCertificate<D> {
        self.scan_symbol_minimum()
    }

    fn scan_symbol_minimum(&self) -> NondegeneracyCertificate<D> {
        let mut dirs = scan_directions::<D>();
        // atom directions and their orthogonals are the natural candidates
        // for symbol extrema; make sure they participate
        if let SpectralMeasure::Atomic { atoms } = &self.measure {
            for (dir, _) in atoms {
                dirs.push(*dir);
            }
        }
        let mut min_v = f64::INFINITY;
        let mut max_v = 0.0f64;
        let mut arg = dirs[0];
        for dir in &dirs {
            let v = self.char_exponent(dir);
            if v < min_v {
                min_v = v;
                arg = *dir;
            }
            max_v = max_v.max(v);
        }
        // sharpen the minimum with two local refinement rounds
        let mut radius = 0.1;
        for _ in 0..2 {
            let mut improved = arg;
            for probe in neighborhood(&arg, radius) {
                let v = self.char_exponent(&probe);
                if v < min_v {
                    min_v = v;
                    improved = probe;
                }
            }
            arg = improved;
            radius *= 0.1;
        }
        NondegeneracyCertificate {
            min_value: min_v,
            max_value: max_v,
            arg_direction: arg,
        }
    }
}

fn scan_directions<const D: usize>() -> Vec<[f64; D]> {
    let mut dirs = Vec::new();
    if D == 2 {
        let n = 1024;
        for i in 0..n {
            let theta = std::f64::consts::PI * i as f64 / n as f64;
            let mut v = [0.0; D];
            v[0] = theta.cos();
            v[1] = theta.sin();
            dirs.push(v);
        }
    } else {
        let (n_polar, n_az) = (48, 96);
        for j in 0..n_polar {
            let mu = -1.0 + 2.0 * (j as f64 + 0.5) / n_polar as f64;
            let s = (1.0 - mu * mu).max(0.0).sqrt();
            for i in 0..n_az {
                let psi = 2.0 * std::f64::consts::PI * i as f64 / n_az as f64;
                let mut v = [0.0; D];
                v[0] = s * psi.cos();
                v[1] = s * psi.sin();
                v[2] = mu;
                dirs.push(v);
            }
        }
    }
    for axis in 0..D {
        let mut v = [0.0; D];
        v[axis] = 1.0;
        dirs.push(v);
    }
    dirs
}

fn neighborhood<const D: usize>(center: &[f64; D], radius: f64) -> Vec<[f64; D]> {
    let mut out = Vec::new();
    let steps = 8;
    let mut push = |v: [f64; D]| {
        if let Some(u) = unit(&v) {
            out.push(u);
        }
    };
    for i in 0..D {
        for k in 1..=steps {
            let t = radius * k as f64 / steps as f64;
            for sign in [1.0, -1.0] {
                let mut v = *center;
                v[i] += sign * t;
                push(v);
            }
        }
    }
    out
}
