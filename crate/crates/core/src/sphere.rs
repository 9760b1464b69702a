//! Quadrature rules on the unit sphere.

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Nodes and positive weights integrating over `S^{d-1}`; the node set is
/// closed under the antipodal map and the weights sum to the surface area.
#[derive(Debug, Clone)]
pub struct SphereQuadrature<const D: usize> {
    pub nodes: Vec<[f64; D]>,
    pub weights: Vec<f64>,
    antipodes: Vec<usize>,
}

impl<const D: usize> SphereQuadrature<D> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate a function over the sphere.
    pub fn integrate(&self, f: impl Fn(&[f64; D]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(xi, w)| w * f(xi))
            .sum()
    }

    /// Index of the node antipodal to node `i`.
    pub fn antipode_index(&self, i: usize) -> usize {
        self.antipodes[i]
    }
}

/// Default angular resolution: 512 angles in the plane, a 64 x 128
/// polar-azimuthal product on the 2-sphere.
pub fn default_resolution(d: usize) -> usize {
    if d == 2 {
        512
    } else {
        64
    }
}

/// `int_{S^{d-1}} |e . xi|^alpha sigma(dxi)` for any unit vector `e`.
///
/// d = 2 reduces to the Beta integral `2 B((alpha+1)/2, 1/2)`; d = 3 has
/// the elementary value `4 pi / (alpha + 1)`.
pub fn axis_alpha_moment(alpha: f64, d: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 2.0);
    match d {
        2 => {
            let a = 0.5 * (alpha + 1.0);
            let beta = crate::quad::tanh_sinh_01(
                |x, omx| x.powf(a - 1.0) / omx.sqrt(),
                1e-13,
            )
            .expect("Beta integrand is monotone and bounded away from blowup");
            2.0 * beta
        }
        3 => 4.0 * std::f64::consts::PI / (alpha + 1.0),
        _ => panic!("dimension {d} not supported"),
    }
}

/// Build the quadrature.
///
/// `d = 2`: `n` equally spaced angles starting at 0 (the periodic
/// trapezoidal rule, spectrally accurate for smooth integrands); `n` must
/// be even so the node set is antipodally closed.
///
/// `d = 3`: Gauss-Legendre in the polar cosine times a `2n`-point uniform
/// azimuthal rule.
pub fn sphere_quadrature<const D: usize>(n: usize) -> Result<SphereQuadrature<D>> {
    match D {
        2 => {
            if n < 4 || n % 2 != 0 {
                return Err(Error::Precondition(format!(
                    "circle quadrature needs an even node count >= 4, got {n}"
                )));
            }
            let w = 2.0 * std::f64::consts::PI / n as f64;
            let mut nodes = Vec::with_capacity(n);
            let mut antipodes = Vec::with_capacity(n);
            for i in 0..n {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let mut node = [0.0; D];
                node[0] = theta.cos();
                node[1] = theta.sin();
                nodes.push(node);
                antipodes.push((i + n / 2) % n);
            }
            Ok(SphereQuadrature {
                nodes,
                weights: vec![w; n],
                antipodes,
            })
        }
        3 => {
            if n < 4 {
                return Err(Error::Precondition(format!(
                    "sphere quadrature needs >= 4 polar nodes, got {n}"
                )));
            }
            let n_az = 2 * n;
            let (mu, w_mu) = gauss_legendre(n);
            let w_az = 2.0 * std::f64::consts::PI / n_az as f64;
            let mut nodes = Vec::with_capacity(n * n_az);
            let mut weights = Vec::with_capacity(n * n_az);
            let mut antipodes = Vec::with_capacity(n * n_az);
            for (j, (m, wm)) in mu.iter().zip(&w_mu).enumerate() {
                let sin_phi = (1.0 - m * m).max(0.0).sqrt();
                for i in 0..n_az {
                    let psi = 2.0 * std::f64::consts::PI * i as f64 / n_az as f64;
                    let mut node = [0.0; D];
                    node[0] = sin_phi * psi.cos();
                    node[1] = sin_phi * psi.sin();
                    node[2] = *m;
                    nodes.push(node);
                    weights.push(wm * w_az);
                    // GL nodes come out sign-symmetric: mu_j = -mu_{n-1-j}
                    antipodes.push((n - 1 - j) * n_az + (i + n) % n_az);
                }
            }
            Ok(SphereQuadrature { nodes, weights, antipodes })
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}
