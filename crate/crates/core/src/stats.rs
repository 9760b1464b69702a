//! Shared statistics helpers: running moments, Kolmogorov–Smirnov
//! distances, and least-squares line fits for exponent estimation.

/// Online mean/variance accumulator (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let delta = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n - 1 denominator).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            self.std_dev() / (self.n as f64).sqrt()
        }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::new();
        for &x in xs {
            m.push(x);
        }
        m
    }
}

/// One-sample KS statistic against a CDF given as a closure.
///
/// `samples` are sorted in place.
pub fn ks_statistic_cdf(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x).clamp(0.0, 1.0);
        let lo = (f - i as f64 / n).abs();
        let hi = ((i + 1) as f64 / n - f).abs();
        d = d.max(lo).max(hi);
    }
    d
}

/// Two-sample KS statistic. Both inputs are sorted in place.
pub fn ks_statistic_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < na && j < nb {
        let xa = a[i];
        let xb = b[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        let diff = (i as f64 / na as f64 - j as f64 / nb as f64).abs();
        d = d.max(diff);
    }
    d
}

/// Asymptotic Kolmogorov survival function Q(t) = 2 sum (-1)^{k-1} exp(-2 k^2 t^2).
pub fn kolmogorov_p_value(d: f64, n_effective: f64) -> f64 {
    let t = d * n_effective.sqrt();
    if t < 1e-8 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Ordinary least squares fit `y = slope * x + intercept`.
///
/// Returns `(slope, intercept, slope_std_err)`.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(n >= 2.0, "line_fit needs at least two points");
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let e = y - (slope * x + intercept);
        ss_res += e * e;
    }
    let dof = (xs.len() as i64 - 2).max(1) as f64;
    let se = (ss_res / dof / sxx).sqrt();
    (slope, intercept, se)
}

/// Relative root-mean-square residual of `y = slope*x + intercept` on the data.
pub fn line_fit_rel_residual(xs: &[f64], ys: &[f64], slope: f64, intercept: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let e = y - (slope * x + intercept);
        num += e * e;
        den += y * y;
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_direct_formulas() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let m = Moments::from_slice(&xs);
        assert_eq!(m.count(), 4);
        assert!((m.mean() - 3.75).abs() < 1e-14);
        let var = xs.iter().map(|x| (x - 3.75_f64).powi(2)).sum::<f64>() / 3.0;
        assert!((m.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn moments_merge_equals_bulk() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let mut a = Moments::from_slice(&xs[..37]);
        let b = Moments::from_slice(&xs[37..]);
        a.merge(&b);
        let bulk = Moments::from_slice(&xs);
        assert!((a.mean() - bulk.mean()).abs() < 1e-12);
        assert!((a.variance() - bulk.variance()).abs() < 1e-12);
    }

    #[test]
    fn ks_uniform_sample_has_small_distance() {
        // deterministic low-discrepancy points
        let mut xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic_cdf(&mut xs, |x| x);
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let mut a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mut b = a.clone();
        assert_eq!(ks_statistic_two_sample(&mut a, &mut b), 0.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q at t = 1.36 is about 0.049 (classical 5% point)
        let p = kolmogorov_p_value(1.36, 1.0);
        assert!((p - 0.049).abs() < 2e-3, "{p}");
    }

    #[test]
    fn line_fit_exact_on_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (s, b, se) = line_fit(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-14);
        assert!((b - 1.0).abs() < 1e-14);
        assert!(se < 1e-12);
    }
}
