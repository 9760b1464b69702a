//! Spectral measures on the unit sphere.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{dist, norm, scale};

pub type SphereDensity<const D: usize> = Arc<dyn Fn(&[f64; D]) -> f64 + Send + Sync>;

/// The finite symmetric measure on `S^{d-1}` driving the jump anisotropy.
///
/// Three variants:
/// * `Density` - absolutely continuous with respect to surface measure,
///   with a declared sup bound on the density. The variant all verified
///   claims are stated for.
/// * `Atomic` - a finite symmetric atom list. Useful as an exact
///   cross-check (the symbol is a finite sum) but carries no Lebesgue jump
///   density, so the operations that need one reject it.
/// * `Isotropic` - constant density `kappa` (a `Density` special case kept
///   separate because closed-form oracles exist for it).
#[derive(Clone)]
pub enum SpectralMeasure<const D: usize> {
    Density {
        f: SphereDensity<D>,
        bound: f64,
        descriptor: String,
    },
    Atomic {
        atoms: Vec<([f64; D], f64)>,
    },
    Isotropic {
        kappa: f64,
    },
}

impl<const D: usize> fmt::Debug for SpectralMeasure<D> {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralMeasure::Density { bound, descriptor, .. } => fm
                .debug_struct("Density")
                .field("bound", bound)
                .field("descriptor", descriptor)
                .finish(),
            SpectralMeasure::Atomic { atoms } => {
                fm.debug_struct("Atomic").field("atoms", atoms).finish()
            }
            SpectralMeasure::Isotropic { kappa } => {
                fm.debug_struct("Isotropic").field("kappa", kappa).finish()
            }
        }
    }
}

impl<const D: usize> SpectralMeasure<D> {
    /// Constant density `kappa > 0`.
    pub fn isotropic(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "isotropic level must be positive and finite, got {kappa}"
            )));
        }
        Ok(SpectralMeasure::Isotropic { kappa })
    }

    /// General density with a declared sup bound and a stable descriptor
    /// string (the descriptor feeds the model hash, so two models with the
    /// same descriptor are treated as identical by caches).
    pub fn density(
        f: impl Fn(&[f64; D]) -> f64 + Send + Sync + 'static,
        bound: f64,
        descriptor: impl Into<String>,
    ) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "density bound must be positive and finite, got {bound}"
            )));
        }
        Ok(SpectralMeasure::Density {
            f: Arc::new(f),
            bound,
            descriptor: descriptor.into(),
        })
    }

    /// Density `a + b (xi . e1)^2`; `a > 0`, `b >= 0`.
    pub fn cos2(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || b < 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "cos2 density needs a > 0, b >= 0, got a={a}, b={b}"
            )));
        }
        Self::density(
            move |xi: &[f64; D]| a + b * xi[0] * xi[0],
            a + b,
            format!("cos2 {a:.17e} {b:.17e}"),
        )
    }

    /// Symmetric atom list. Directions must be unit vectors and the list
    /// must be closed under the antipodal map with equal weights.
    pub fn atoms(atoms: Vec<([f64; D], f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("empty atom list".into()));
        }
        for (dir, w) in &atoms {
            if (norm(dir) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMeasure(format!(
                    "atom direction {dir:?} is not a unit vector"
                )));
            }
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "atom weight must be positive and finite, got {w}"
                )));
            }
        }
        for (dir, w) in &atoms {
            let anti = scale(dir, -1.0);
            let found = atoms
                .iter()
                .any(|(d2, w2)| dist(d2, &anti) < 1e-12 && (w2 - w).abs() <= 1e-12 * w);
            if !found {
                return Err(Error::InvalidMeasure(format!(
                    "atom list not antipodally symmetric around {dir:?}"
                )));
            }
        }
        Ok(SpectralMeasure::Atomic { atoms })
    }

    /// Convenience: equal weights `w` on `+-e_i` for every axis.
    pub fn axis_atoms(w: f64) -> Result<Self> {
        let mut atoms = Vec::new();
        for axis in 0..D {
            for sign in [1.0, -1.0] {
                let mut dir = [0.0; D];
                dir[axis] = sign;
                atoms.push((dir, w));
            }
        }
        Self::atoms(atoms)
    }

    /// Density value at a unit vector (`None` for the atomic variant).
    pub fn density_at(&self, xi: &[f64; D]) -> Option<f64> {
        match self {
            SpectralMeasure::Density { f, .. } => Some(f(xi)),
            SpectralMeasure::Isotropic { kappa } => Some(*kappa),
            SpectralMeasure::Atomic { .. } => None,
        }
    }

    /// Declared sup bound of the density (`None` for atoms).
    pub fn density_bound(&self) -> Option<f64> {
        match self {
            SpectralMeasure::Density { bound, .. } => Some(*bound),
            SpectralMeasure::Isotropic { kappa } => Some(*kappa),
            SpectralMeasure::Atomic { .. } => None,
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, SpectralMeasure::Atomic { .. })
    }

    /// Stable text form, used for hashing and manifests.
    pub fn descriptor(&self) -> String {
        match self {
            SpectralMeasure::Density { descriptor, .. } => descriptor.clone(),
            SpectralMeasure::Isotropic { kappa } => format!("isotropic {kappa:.17e}"),
            SpectralMeasure::Atomic { atoms } => {
                let mut parts: Vec<String> = atoms
                    .iter()
                    .map(|(d, w)| {
                        let coords: Vec<String> =
                            d.iter().map(|c| format!("{c:.17e}")).collect();
                        format!("({}) {w:.17e}", coords.join(","))
                    })
                    .collect();
                parts.sort();
                format!("atoms [{}]", parts.join("; "))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_symmetry_enforced() {
        let bad = SpectralMeasure::<2>::atoms(vec![([1.0, 0.0], 0.5)]);
        assert!(bad.is_err());
        let good = SpectralMeasure::<2>::atoms(vec![([1.0, 0.0], 0.5), ([-1.0, 0.0], 0.5)]);
        assert!(good.is_ok());
    }

    #[test]
    fn atomic_unit_direction_enforced() {
        let bad = SpectralMeasure::<2>::atoms(vec![([2.0, 0.0], 0.5), ([-2.0, 0.0], 0.5)]);
        assert!(bad.is_err());
    }

    #[test]
    fn descriptors_are_stable() {
        let a = SpectralMeasure::<2>::axis_atoms(0.5).unwrap();
        let b = SpectralMeasure::<2>::axis_atoms(0.5).unwrap();
        assert_eq!(a.descriptor(), b.descriptor());
        let iso = SpectralMeasure::<2>::isotropic(0.25).unwrap();
        assert!(iso.descriptor().starts_with("isotropic"));
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(SpectralMeasure::<2>::isotropic(0.0).is_err());
        assert!(SpectralMeasure::<2>::isotropic(f64::NAN).is_err());
        assert!(SpectralMeasure::<2>::cos2(-1.0, 0.5).is_err());
    }
}
