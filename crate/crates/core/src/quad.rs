//! One-dimensional quadrature building blocks.
//!
//! Three integrators cover everything the library needs: Gauss-Legendre
//! panels for smooth integrands, an adaptive Simpson rule for integrands
//! with mild structure, and tanh-sinh for endpoint singularities. On top
//! of these sits the oscillatory-integral machinery that evaluates the
//! normalization constant of the jump kernel.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on the Legendre recurrence; accurate to ~1e-15 for the
/// orders used here (n <= 256).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and its derivative by upward recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Fixed-order Gauss-Legendre integral of `f` over [a, b].
pub fn gl_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        s += w * f(mid + half * x);
    }
    s * half
}

/// Adaptive Simpson integration of a smooth integrand over [a, b].
///
/// `tol` is an absolute tolerance on the result.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let err = left + right - whole;
        if err.abs() <= 15.0 * tol {
            return Ok(left + right + err / 15.0);
        }
        if depth == 0 {
            return Err(Error::Quadrature(format!(
                "adaptive Simpson recursion limit on [{a:.6e}, {b:.6e}], residual {err:.3e}"
            )));
        }
        let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
        let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
        Ok(l + r)
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Tanh-sinh quadrature over the open interval (0, 1).
///
/// The integrand receives both `x` and `1 - x` at full precision, so
/// power-law singularities at either endpoint integrate cleanly.
pub fn tanh_sinh_01(f: impl Fn(f64, f64) -> f64, rel_tol: f64) -> Result<f64> {
    const T_MAX: f64 = 6.8;
    let eval = |t: f64| -> f64 {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        // x = (1 + tanh u)/2, 1 - x = (1 - tanh u)/2, both without cancellation
        let e2u = (2.0 * u).exp();
        let x = e2u / (1.0 + e2u);
        let omx = 1.0 / (1.0 + e2u);
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / (2.0 * u.cosh().powi(2));
        if !w.is_finite() || w == 0.0 {
            return 0.0;
        }
        let v = f(x, omx);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };
    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    loop {
        let t = h * k as f64;
        if t > T_MAX {
            break;
        }
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut prev = sum * h;
    for _level in 0..12 {
        h *= 0.5;
        // add the new midpoints (odd multiples of the new h)
        let mut add = 0.0;
        let mut k = 1;
        loop {
            let t = h * k as f64;
            if t > T_MAX {
                break;
            }
            add += eval(t) + eval(-t);
            k += 2;
        }
        sum += add;
        let cur = sum * h;
        if (cur - prev).abs() <= rel_tol * cur.abs().max(1e-300) && _level >= 2 {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// Limit of an alternating series from the magnitudes of its terms.
///
/// `magnitudes[j]` is |T_j| with implied sign (-1)^j; repeated averaging of
/// the partial sums (the Euler transformation in its numerically stable
/// form) converges geometrically even when the magnitudes decay slowly.
pub fn euler_alternating(magnitudes: &[f64]) -> f64 {
    let n = magnitudes.len();
    assert!(n >= 2);
    let mut s = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (j, m) in magnitudes.iter().enumerate() {
        acc += if j % 2 == 0 { *m } else { -*m };
        s.push(acc);
    }
    let mut best = *s.last().unwrap();
    while s.len() > 1 {
        for i in 0..s.len() - 1 {
            s[i] = 0.5 * (s[i] + s[i + 1]);
        }
        s.pop();
        best = *s.last().unwrap();
    }
    best
}

/// cos-transform tail: integral of cos(rho) * rho^(-1-alpha) over [s, inf).
///
/// Integrates half-period panels between consecutive zeros of the cosine
/// and accelerates the resulting alternating series.
pub fn cos_tail_integral(alpha: f64, s: f64) -> f64 {
    assert!(s > 0.0);
    let g = |rho: f64| rho.cos() * rho.powf(-1.0 - alpha);
    // first zero of cos at or beyond s
    let mut k0 = ((s - std::f64::consts::FRAC_PI_2) / std::f64::consts::PI).ceil();
    if k0 < 0.0 {
        k0 = 0.0;
    }
    let z0 = std::f64::consts::FRAC_PI_2 + k0 * std::f64::consts::PI;
    let head = if z0 > s { gl_integrate(g, s, z0, 24) } else { 0.0 };
    const N_PANELS: usize = 48;
    let mut mags = Vec::with_capacity(N_PANELS);
    for j in 0..N_PANELS {
        let a = z0 + j as f64 * std::f64::consts::PI;
        let b = a + std::f64::consts::PI;
        mags.push(gl_integrate(g, a, b, 16).abs());
    }
    // cos is negative just past z0 when k0 is even, positive when odd
    let lead_sign = if (k0 as i64) % 2 == 0 { -1.0 } else { 1.0 };
    head + lead_sign * euler_alternating(&mags)
}

/// Integral of (1 - cos r) * r^(-1-alpha) over (0, z].
///
/// Alternating series for z <= 1; otherwise the full integral minus the
/// tail identity `int_z (1-cos) = z^{-alpha}/alpha - int_z cos`.
pub fn one_minus_cos_partial(alpha: f64, z: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 2.0);
    if z <= 0.0 {
        return 0.0;
    }
    if z <= 1.0 {
        let mut series = 0.0;
        let mut fact = 1.0f64; // (2k)!
        for k in 1..=24u32 {
            fact *= (2 * k - 1) as f64 * (2 * k) as f64;
            let p = 2.0 * k as f64 - alpha;
            let term = z.powf(p) / (fact * p);
            series += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        series
    } else {
        one_minus_cos_integral(alpha) - (z.powf(-alpha) / alpha - cos_tail_integral(alpha, z))
    }
}

/// K(alpha) = integral over (0, inf) of (1 - cos r) * r^(-1-alpha).
///
/// Split at r = 1: a rapidly converging series below, and
/// 1/alpha - cos_tail_integral(alpha, 1) above.
pub fn one_minus_cos_integral(alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 2.0);
    // integral over (0,1): sum_{k>=1} (-1)^{k+1} / ((2k)! (2k - alpha))
    let mut series = 0.0;
    let mut fact = 1.0f64; // (2k)!
    for k in 1..=12u32 {
        fact *= (2 * k - 1) as f64 * (2 * k) as f64;
        let term = 1.0 / (fact * (2.0 * k as f64 - alpha));
        series += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    series + 1.0 / alpha - cos_tail_integral(alpha, 1.0)
}
