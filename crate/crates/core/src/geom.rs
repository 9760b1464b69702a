//! Small fixed-dimension vector helpers and the ball type.
//!
//! Points are plain `[f64; D]` so the Monte Carlo inner loops stay
//! allocation-free; `D` is 2 or 3 everywhere in this crate.

use serde::{Deserialize, Serialize};

pub fn zero<const D: usize>() -> [f64; D] {
    [0.0; D]
}

#[inline]
pub fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm_sq<const D: usize>(a: &[f64; D]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm<const D: usize>(a: &[f64; D]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn add<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut out = *a;
    for i in 0..D {
        out[i] += b[i];
    }
    out
}

#[inline]
pub fn sub<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut out = *a;
    for i in 0..D {
        out[i] -= b[i];
    }
    out
}

#[inline]
pub fn scale<const D: usize>(a: &[f64; D], c: f64) -> [f64; D] {
    let mut out = *a;
    for v in out.iter_mut() {
        *v *= c;
    }
    out
}

/// Deterministic low-discrepancy unit directions (golden angle on the
/// circle, a Kronecker sequence on the sphere).
pub fn spread_direction<const D: usize>(j: usize) -> [f64; D] {
    let mut x = [0.0; D];
    if D == 2 {
        let theta = j as f64 * 2.399_963_229_728_653;
        x[0] = theta.cos();
        x[1] = theta.sin();
    } else {
        let mu = 2.0 * ((j as f64 + 0.5) * 0.754_877_666_246_692_7).fract() - 1.0;
        let psi = std::f64::consts::TAU * ((j as f64 + 0.5) * 0.569_840_290_998_053_2).fract();
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        x[0] = s * psi.cos();
        x[1] = s * psi.sin();
        x[2] = mu;
    }
    x
}

#[inline]
pub fn dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    norm(&sub(a, b))
}

/// Normalize to a unit vector; returns `None` for the zero vector.
pub fn unit<const D: usize>(a: &[f64; D]) -> Option<[f64; D]> {
    let n = norm(a);
    if n == 0.0 {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

/// Surface area of the unit sphere `S^{d-1}`.
pub fn sphere_surface_area(d: usize) -> f64 {
    match d {
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("sphere_surface_area: unsupported dimension {d}"),
    }
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    sphere_surface_area(d) / d as f64
}

/// Serde glue for `[f64; D]` with const-generic `D` (serde only derives
/// fixed sizes). Serializes as a plain sequence.
pub mod vec_array {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(
        v: &[f64; D],
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(ser)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(
        de: De,
    ) -> Result<[f64; D], De::Error> {
        let v = Vec::<f64>::deserialize(de)?;
        v.try_into()
            .map_err(|v: Vec<f64>| De::Error::custom(format!("expected {D} floats, got {}", v.len())))
    }
}

/// Closed ball `B(x0, r) = { x : |x - x0| <= r }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball<const D: usize> {
    #[serde(with = "vec_array")]
    pub center: [f64; D],
    pub radius: f64,
}

impl<const D: usize> Ball<D> {
    pub fn new(center: [f64; D], radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Ball { center, radius }
    }

    pub fn centered(radius: f64) -> Self {
        Self::new([0.0; D], radius)
    }

    /// Closed-ball membership.
    pub fn contains(&self, x: &[f64; D]) -> bool {
        dist(&self.center, x) <= self.radius
    }

    pub fn strictly_contains(&self, x: &[f64; D]) -> bool {
        dist(&self.center, x) < self.radius
    }

    /// Distance from an interior point to the boundary (negative outside).
    pub fn boundary_distance(&self, x: &[f64; D]) -> f64 {
        self.radius - dist(&self.center, x)
    }

    pub fn volume(&self) -> f64 {
        ball_volume(D) * self.radius.powi(D as i32)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.center, self.radius * factor)
    }
}

/// Cholesky factor L (lower triangular, L L^T = M) of a small SPD matrix.
///
/// Rank-deficient directions are tolerated: a non-positive pivot is treated
/// as zero, which is what degenerate truncated covariances produce.
pub fn cholesky<const D: usize>(m: &[[f64; D]; D]) -> [[f64; D]; D] {
    let mut l = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][j] = if s > 0.0 { s.sqrt() } else { 0.0 };
            } else {
                l[i][j] = if l[j][j] > 0.0 { s / l[j][j] } else { 0.0 };
            }
        }
    }
    l
}

/// Uniform lattice over a ball: nodes of spacing `h` centered on the ball
/// center, kept when `|x - c| <= shrink * r`.
pub fn ball_lattice<const D: usize>(ball: &Ball<D>, h: f64, shrink: f64) -> Vec<[f64; D]> {
    assert!(h > 0.0);
    let r = ball.radius * shrink;
    let k_max = (r / h).floor() as i64;
    let mut nodes = Vec::new();
    let mut idx = [0i64; D];
    fill_lattice(ball, h, r, k_max, 0, &mut idx, &mut nodes);
    nodes
}

fn fill_lattice<const D: usize>(
    ball: &Ball<D>,
    h: f64,
    r: f64,
    k_max: i64,
    axis: usize,
    idx: &mut [i64; D],
    out: &mut Vec<[f64; D]>,
) {
    if axis == D {
        let mut x = ball.center;
        let mut d2 = 0.0;
        for i in 0..D {
            let off = idx[i] as f64 * h;
            x[i] += off;
            d2 += off * off;
        }
        if d2.sqrt() <= r {
            out.push(x);
        }
        return;
    }
    for k in -k_max..=k_max {
        idx[axis] = k;
        fill_lattice(ball, h, r, k_max, axis + 1, idx, out);
    }
}

/// Spacing that yields roughly `target` lattice nodes inside a ball.
pub fn lattice_spacing_for<const D: usize>(radius: f64, target: usize) -> f64 {
    let vol = ball_volume(D) * radius.powi(D as i32);
    (vol / target as f64).powf(1.0 / D as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_count_close_to_target() {
        let ball = Ball::<2>::centered(1.0);
        let h = lattice_spacing_for::<2>(1.0, 1000);
        let nodes = ball_lattice(&ball, h, 1.0);
        assert!(nodes.len() >= 900 && nodes.len() <= 1200, "{}", nodes.len());
        // symmetric under x -> -x
        for n in &nodes {
            let m = scale(n, -1.0);
            assert!(nodes.iter().any(|q| dist(q, &m) < 1e-12));
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = [[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(&m);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += l[i][k] * l[j][k];
                }
                assert!((s - m[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_geometry() {
        let b = Ball::new([1.0, 0.0], 2.0);
        assert!(b.contains(&[3.0, 0.0]));
        assert!(!b.strictly_contains(&[3.0, 0.0]));
        assert!((b.boundary_distance(&[1.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
