//! Oscillation decay for harmonic functions: the closed-form contraction
//! constants implied by a weak Harnack constant, the level-by-level
//! oscillation iteration with its case bookkeeping and envelope checks,
//! a regression estimate of the Hoelder exponent from measured
//! oscillations, and the geometric decay of Levy mass over dyadic
//! annuli that the iteration relies on.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{scale, spread_direction, sub};
use crate::harnack::{uniform_offsets, ExteriorFunction, HarmonicField, HarnackParams};
use crate::model::StableModel;
use crate::quad::gauss_legendre;
use crate::stats::line_fit;

const TAU: f64 = std::f64::consts::TAU;

/// Contraction constants from a weak Harnack constant `c1` and a scale
/// ratio `theta`: the measure-to-infimum gain `kappa = 1/(4 c1)` and the
/// decay exponent `beta = log(2 / (2 - kappa)) / log(theta)`, which
/// together give `osc(B(theta^-n r)) <= K theta^(-n beta)`.
pub fn hoelder_constants(c1: f64, theta: f64) -> Result<(f64, f64)> {
    if !(c1 > 0.25) || !c1.is_finite() {
        return Err(Error::Precondition(format!(
            "the contraction needs c1 > 1/4 so that kappa < 1, got c1 = {c1}"
        )));
    }
    if !(theta > 1.0) || !theta.is_finite() {
        return Err(Error::Precondition(format!(
            "scale ratio must exceed 1, got theta = {theta}"
        )));
    }
    let kappa = 0.25 / c1;
    let beta = (2.0 / (2.0 - kappa)).ln() / theta.ln();
    Ok((kappa, beta))
}

/// Which half of the range dominated the measure condition at one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OscCase {
    /// At least half the window sits below the midpoint; the upper bound
    /// contracts.
    LowerHalf,
    /// The window is mostly above the midpoint; the lower bound lifts.
    UpperHalf,
}

/// Transcript of the oscillation iteration.
#[derive(Debug, Clone, Serialize)]
pub struct HoelderIteration {
    pub c1_in: f64,
    pub kappa: f64,
    pub beta_theory: f64,
    /// Levels actually run.
    pub k_total: usize,
    /// Lower bounds `m_0 .. m_k`.
    pub m_seq: Vec<f64>,
    /// Upper bounds `M_0 .. M_k`.
    pub big_m_seq: Vec<f64>,
    /// Prescribed oscillation bounds `K theta^(-k beta)`.
    pub osc_seq: Vec<f64>,
    pub case_log: Vec<OscCase>,
    /// Lattice nodes that left the sandwich `m_k <= u <= M_k` by more
    /// than three standard errors.
    pub sandwich_violations: usize,
    /// Exterior probes that left the growth envelope.
    pub envelope_violations: usize,
    pub envelope_checked: usize,
}

/// Run the oscillation iteration on a sampled harmonic field and check
/// the sandwich and envelope bounds it predicts at every level.
///
/// Level `k` inspects the window `B(r theta^(1-k) / lambda)`: if at least
/// half of it (by cell volume) sits below the current midpoint, the upper
/// bound contracts, otherwise the lower bound lifts; either way the new
/// gap is exactly `K theta^(-k beta)`.
pub fn run_oscillation_iteration<const D: usize>(
    field: &HarmonicField<D>,
    g: &ExteriorFunction<D>,
    params: &HarnackParams<D>,
    c1: f64,
    n_levels: usize,
) -> Result<HoelderIteration> {
    let (kappa, beta) = hoelder_constants(c1, params.theta)?;
    if n_levels == 0 {
        return Err(Error::Precondition("need at least one level".into()));
    }
    if field.ball.center != params.x0
        || (field.ball.radius - params.a * params.r).abs() > 1e-12 * params.r
    {
        return Err(Error::Precondition(
            "field was not extended over the extension ball of these parameters".into(),
        ));
    }

    // global range of u: data outside the extension ball, samples inside
    let whole = field.reduce_within(field.ball.radius)?;
    let (g_lo, g_hi) = g.extremes_beyond(params.a * params.r, 50.0 * params.r);
    let big_m0 = whole.max.max(g_hi);
    let m0 = whole.min.min(g_lo);
    let range = big_m0 - m0;

    let mut out = HoelderIteration {
        c1_in: c1,
        kappa,
        beta_theory: beta,
        k_total: 0,
        m_seq: vec![m0],
        big_m_seq: vec![big_m0],
        osc_seq: vec![range],
        case_log: Vec::new(),
        sandwich_violations: 0,
        envelope_violations: 0,
        envelope_checked: 0,
    };
    if range <= 1e-13 * big_m0.abs().max(1.0) {
        // constant data: nothing to contract
        return Ok(out);
    }

    let theta = params.theta;
    let mut m = m0;
    let mut big_m = big_m0;
    for k in 1..=n_levels {
        let r_prev = params.r * theta.powi(1 - k as i32);
        let r_k = params.r * theta.powi(-(k as i32));
        let mid = 0.5 * (m + big_m);
        let gap_k = range * theta.powf(-(k as f64) * beta);

        let below = field.fraction_at_most(r_prev / params.lambda, mid)?;
        let case = if below >= 0.5 {
            OscCase::LowerHalf
        } else {
            OscCase::UpperHalf
        };
        match case {
            OscCase::LowerHalf => big_m = m + gap_k,
            OscCase::UpperHalf => m = big_m - gap_k,
        }

        for &i in &field.nodes_within(r_k.min(field.ball.radius)) {
            let slack = 3.0 * field.std_errs()[i] + 1e-12 * range;
            let v = field.values()[i];
            if v < m - slack || v > big_m + slack {
                out.sandwich_violations += 1;
            }
        }

        // exterior growth envelope in the normalized variable
        // v = (u - mid) 2 theta^((k-1) beta) / K, checked where u is the
        // data itself
        let v_scale = 2.0 * theta.powf((k - 1) as f64 * beta) / range;
        let mut radii: Vec<f64> = [1.0001, 1.3, theta, theta * theta, theta.powi(3)]
            .iter()
            .map(|s| s * r_prev)
            .collect();
        radii.extend([1.05, 1.6, 2.6, 5.0].iter().map(|s| s * params.r));
        for rho in radii {
            if rho <= params.a * params.r * 1.0001 || rho < r_prev {
                continue;
            }
            let grow = 2.0 * (theta * rho / r_prev).powf(beta);
            for j in 0..8 {
                let z = scale(&spread_direction::<D>(j), rho);
                let v = (g.eval_rel(&z) - mid) * v_scale;
                out.envelope_checked += 1;
                if v < 1.0 - grow - 1e-9 || v > grow - 1.0 + 1e-9 {
                    out.envelope_violations += 1;
                }
            }
        }

        out.m_seq.push(m);
        out.big_m_seq.push(big_m);
        out.osc_seq.push(gap_k);
        out.case_log.push(case);
        out.k_total = k;
    }
    Ok(out)
}

/// Least-squares estimate of the Hoelder exponent from measured
/// oscillations.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    /// Slope of `log osc` against `log radius` over the used levels.
    pub beta_fit: f64,
    pub beta_std_err: f64,
    /// Measured oscillation per level, noisy levels included.
    pub osc: Vec<f64>,
    /// Standard error of each measured oscillation.
    pub osc_se: Vec<f64>,
    /// Leading levels whose oscillation clears the noise floor; only
    /// these enter the fit.
    pub used_levels: usize,
}

/// Measure `osc(B(r theta^-n))` for `n = 0 .. n_levels - 1` and fit a
/// power law through the levels that stand clear of sampling noise.
pub fn estimate_hoelder_exponent<const D: usize>(
    field: &HarmonicField<D>,
    r: f64,
    theta: f64,
    n_levels: usize,
) -> Result<ExponentFit> {
    if !(theta > 1.0) || !(r > 0.0) {
        return Err(Error::Precondition(format!(
            "need r > 0 and theta > 1, got r = {r}, theta = {theta}"
        )));
    }
    if n_levels < 3 {
        return Err(Error::Precondition(
            "a slope needs at least three levels".into(),
        ));
    }
    let mut osc = Vec::with_capacity(n_levels);
    let mut osc_se = Vec::with_capacity(n_levels);
    for n in 0..n_levels {
        let red = field.reduce_within((r * theta.powi(-(n as i32))).min(field.ball.radius))?;
        osc.push(red.max - red.min);
        osc_se.push(red.max_std_err.hypot(red.min_std_err));
    }

    let mut med = field.std_errs().to_vec();
    med.sort_by(f64::total_cmp);
    let median_se = med[med.len() / 2];
    if osc[0] <= 3.0 * median_se {
        return Err(Error::NoiseFloor(format!(
            "base oscillation {:.3e} is within 3 median standard errors ({:.3e}); \
             the data is constant at this budget and the exponent is undefined",
            osc[0], median_se
        )));
    }

    let used = osc
        .iter()
        .zip(&osc_se)
        .take_while(|(o, se)| **o >= 8.0 * **se)
        .count();
    if used < 3 {
        return Err(Error::NoiseFloor(format!(
            "only {used} levels clear the noise floor (need 3); raise the path budget \
             or coarsen theta"
        )));
    }

    let xs: Vec<f64> = (0..used).map(|n| -(n as f64) * theta.ln()).collect();
    let ys: Vec<f64> = osc[..used].iter().map(|o| o.ln()).collect();
    let (slope, _, slope_se) = line_fit(&xs, &ys);
    Ok(ExponentFit {
        beta_fit: slope,
        beta_std_err: slope_se,
        osc,
        osc_se,
        used_levels: used,
    })
}

/// Levy mass seen from inside the reference ball across dyadic annuli.
#[derive(Debug, Clone, Serialize)]
pub struct TailDecayReport {
    /// `eta_j = sup over x in B(r theta^(1-k) / sigma) of the integral of
    /// f_nu(x - z) over the annulus r theta^(j-k) <= |z| <= r theta^(j+1-k)`,
    /// for `j = 1 .. j_max`.
    pub eta: Vec<f64>,
    /// Fitted ratio in `eta_j ~ c zeta^-(j+1)`.
    pub zeta_fit: f64,
    pub c_fit: f64,
    /// Largest relative deviation of a measured `eta_j` from the fit.
    pub max_residual: f64,
    /// Whether the sequence decreases strictly.
    pub monotone: bool,
    /// Number of probe points behind each supremum.
    pub sup_probes: usize,
}

/// Integral of the Levy density over the annulus `r1 <= |z| <= r2` seen
/// from `x`, by polar quadrature centered at the origin.
fn annulus_levy_integral<const D: usize>(
    model: &StableModel<D>,
    x: &[f64; D],
    r1: f64,
    r2: f64,
    n_radial: usize,
    n_angular: usize,
) -> Result<f64> {
    let (gl_x, gl_w) = gauss_legendre(n_radial);
    let mut total = 0.0;
    for (xi, wi) in gl_x.iter().zip(&gl_w) {
        let rho = 0.5 * (r2 + r1) + 0.5 * (r2 - r1) * xi;
        let w_rho = 0.5 * (r2 - r1) * wi * rho.powi(D as i32 - 1);
        let mut shell = 0.0;
        if D == 2 {
            let dpsi = TAU / n_angular as f64;
            for j in 0..n_angular {
                let psi = dpsi * j as f64;
                let mut z = [0.0; D];
                z[0] = rho * psi.cos();
                z[1] = rho * psi.sin();
                shell += dpsi * model.levy_density(&sub(&z, x))?;
            }
        } else {
            let n_mu = (n_angular / 2).max(4);
            let (mu_x, mu_w) = gauss_legendre(n_mu);
            let dpsi = TAU / n_angular as f64;
            for (mi, mw) in mu_x.iter().zip(&mu_w) {
                let s = (1.0 - mi * mi).max(0.0).sqrt();
                for j in 0..n_angular {
                    let psi = dpsi * j as f64;
                    let mut z = [0.0; D];
                    z[0] = rho * s * psi.cos();
                    z[1] = rho * s * psi.sin();
                    z[2] = rho * mi;
                    shell += mw * dpsi * model.levy_density(&sub(&z, x))?;
                }
            }
        }
        total += w_rho * shell;
    }
    Ok(total)
}

/// Measure how much Levy mass each annulus `A(r theta^(j-k), r theta^(j+1-k))`
/// carries, as seen from the worst point of `B(r theta^(1-k) / sigma_ratio)`,
/// and fit the geometric decay `eta_j ~ c zeta^-(j+1)`.
pub fn annulus_tail_decay<const D: usize>(
    model: &StableModel<D>,
    params: &HarnackParams<D>,
    k: usize,
    j_max: usize,
) -> Result<TailDecayReport> {
    if k == 0 {
        return Err(Error::Precondition("level index k starts at 1".into()));
    }
    if j_max < 3 {
        return Err(Error::Precondition(
            "fitting a ratio needs at least three annuli".into(),
        ));
    }
    let theta = params.theta;
    let r_prev = params.r * theta.powi(1 - k as i32);
    let (probes, _, _) = uniform_offsets::<D>(r_prev / params.sigma_ratio, 240);

    let (n_rad, n_ang) = if D == 2 { (20, 96) } else { (16, 32) };
    let mut eta = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let r1 = params.r * theta.powi(j as i32 - k as i32);
        let r2 = r1 * theta;
        let mut sup = f64::NEG_INFINITY;
        for x in &probes {
            sup = sup.max(annulus_levy_integral(model, x, r1, r2, n_rad, n_ang)?);
        }
        if !(sup > 0.0) {
            return Err(Error::Quadrature(format!(
                "annulus {j} carries no Levy mass (eta = {sup:.3e})"
            )));
        }
        eta.push(sup);
    }

    let xs: Vec<f64> = (1..=j_max).map(|j| (j + 1) as f64).collect();
    let ys: Vec<f64> = eta.iter().map(|e| e.ln()).collect();
    let (slope, intercept, _) = line_fit(&xs, &ys);
    let zeta_fit = (-slope).exp();
    let c_fit = intercept.exp();
    let mut max_residual: f64 = 0.0;
    for (x, e) in xs.iter().zip(&eta) {
        let fitted = c_fit * zeta_fit.powf(-x);
        max_residual = max_residual.max((fitted / e - 1.0).abs());
    }
    let monotone = eta.windows(2).all(|w| w[1] < w[0]);
    Ok(TailDecayReport {
        eta,
        zeta_fit,
        c_fit,
        max_residual,
        monotone,
        sup_probes: probes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harnack::{
        exit_lattice, harmonic_extend_pooled, nested_offsets, ExitLattice, ExteriorTerm,
    };
    use crate::measure::SpectralMeasure;
    use approx::assert_relative_eq;
    use std::sync::LazyLock;

    fn planar_cauchy() -> StableModel<2> {
        StableModel::new(1.0, SpectralMeasure::isotropic(0.25).unwrap(), None).unwrap()
    }

    fn base_params() -> HarnackParams<2> {
        HarnackParams::new([0.0, 0.0], 1.0, 1.0, 4.0 / 3.0, 2.0, 3.0, 0.9).unwrap()
    }

    static FLAT_POOL: LazyLock<(StableModel<2>, HarnackParams<2>, ExitLattice<2>)> =
        LazyLock::new(|| {
            let model = planar_cauchy();
            let params = base_params();
            let ball = params.extension_ball();
            let (offsets, weights, spacing) = uniform_offsets::<2>(ball.radius, 150);
            let pool = exit_lattice(&model, &ball, offsets, weights, spacing, 64, 17).unwrap();
            (model, params, pool)
        });

    static NESTED_POOL: LazyLock<(StableModel<2>, HarnackParams<2>, ExitLattice<2>)> =
        LazyLock::new(|| {
            let model = planar_cauchy();
            let params = base_params();
            let ball = params.extension_ball();
            let radii = [0.9, 0.5, 0.25, 0.125, 0.0625];
            let (offsets, weights, spacing) = nested_offsets::<2>(&radii, 40);
            let pool =
                exit_lattice(&model, &ball, offsets, weights, spacing, 1500, 303).unwrap();
            (model, params, pool)
        });

    #[test]
    fn closed_form_constants_match_and_reject_degenerate_inputs() {
        let (kappa, beta) = hoelder_constants(1.0, 2.0).unwrap();
        assert_eq!(kappa, 0.25);
        assert_eq!(beta, (2.0 / 1.75_f64).ln() / 2.0_f64.ln());
        assert_relative_eq!(beta, 0.19264507794239591, max_relative = 1e-12);

        assert!(matches!(
            hoelder_constants(0.25, 2.0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            hoelder_constants(0.1, 2.0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            hoelder_constants(1.0, 1.0),
            Err(Error::Precondition(_))
        ));

        // a weaker Harnack constant or a wider scale ratio both flatten the
        // exponent
        let beta_weak = hoelder_constants(10.0, 2.0).unwrap().1;
        let beta_strong = hoelder_constants(0.3, 2.0).unwrap().1;
        assert!(beta_weak < beta && beta < beta_strong);
        let beta_wide = hoelder_constants(1.0, 4.0).unwrap().1;
        assert!(beta_wide < beta);
        assert_eq!(hoelder_constants(1.0, 4.0).unwrap().0, 0.25);
    }

    #[test]
    fn constant_data_runs_a_trivial_iteration() {
        let (model, params, pool) = &*FLAT_POOL;
        let _ = model;
        let g = ExteriorFunction::constant(2.5);
        let field = harmonic_extend_pooled(&g, pool);
        let it = run_oscillation_iteration(&field, &g, params, 1.0, 5).unwrap();
        assert_eq!(it.k_total, 0);
        assert_eq!(it.osc_seq, vec![0.0]);
        assert!(it.case_log.is_empty());
        assert_eq!(it.sandwich_violations, 0);
        assert_eq!(it.envelope_violations, 0);
    }

    #[test]
    fn oscillation_iteration_contracts_with_cases_logged() {
        let (_, params, pool) = &*NESTED_POOL;
        let g = ExteriorFunction::new(vec![ExteriorTerm::Bump {
            offset: [1.6, 0.3],
            width: 1.0,
            height: 3.0,
        }]);
        let field = harmonic_extend_pooled(&g, pool);
        let c1 = 3.0;
        let it = run_oscillation_iteration(&field, &g, params, c1, 4).unwrap();

        assert_eq!(it.k_total, 4);
        assert_eq!(it.case_log.len(), 4);
        assert_eq!(it.m_seq.len(), 5);
        assert_eq!(it.big_m_seq.len(), 5);
        for w in it.m_seq.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in it.big_m_seq.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for k in 0..=4usize {
            assert!(it.m_seq[k] < it.big_m_seq[k]);
            assert_eq!(it.big_m_seq[k] - it.m_seq[k], it.osc_seq[k]);
            let expected = it.osc_seq[0] * params.theta.powf(-(k as f64) * it.beta_theory);
            assert_eq!(it.osc_seq[k], if k == 0 { it.osc_seq[0] } else { expected });
        }
        assert_eq!(it.sandwich_violations, 0, "sandwich broken");
        assert_eq!(it.envelope_violations, 0, "envelope broken");
        assert!(it.envelope_checked > 0);
    }

    #[test]
    fn oscillation_sequence_is_amplitude_invariant() {
        let (_, params, pool) = &*NESTED_POOL;
        let g = ExteriorFunction::new(vec![ExteriorTerm::Bump {
            offset: [1.6, 0.3],
            width: 1.0,
            height: 3.0,
        }]);
        let amp = g.amplified(5.0);
        let a = run_oscillation_iteration(&harmonic_extend_pooled(&g, pool), &g, params, 2.0, 4)
            .unwrap();
        let b =
            run_oscillation_iteration(&harmonic_extend_pooled(&amp, pool), &amp, params, 2.0, 4)
                .unwrap();
        assert_eq!(a.case_log, b.case_log);
        for k in 0..=4usize {
            // normalized gaps are the same binary numbers on both runs
            assert_eq!(a.osc_seq[k] / a.osc_seq[0], b.osc_seq[k] / b.osc_seq[0]);
            assert_relative_eq!(5.0 * a.osc_seq[k], b.osc_seq[k], max_relative = 1e-12);
        }
    }

    #[test]
    fn smooth_data_fits_a_large_exponent() {
        let model = planar_cauchy();
        let r = 0.8;
        let theta: f64 = 1.5;
        let ball = crate::geom::Ball::centered(0.9);
        let radii: Vec<f64> = (0..4).map(|n| r * theta.powi(-n)).collect();
        let (offsets, weights, spacing) = nested_offsets::<2>(&radii, 40);
        let pool = exit_lattice(&model, &ball, offsets, weights, spacing, 6000, 606).unwrap();
        let g = ExteriorFunction::new(vec![ExteriorTerm::Bump {
            offset: [1.7, 0.0],
            width: 1.2,
            height: 4.0,
        }]);
        let field = harmonic_extend_pooled(&g, &pool);
        let fit = estimate_hoelder_exponent(&field, r, theta, 4).unwrap();
        assert!(fit.used_levels >= 3, "levels used: {}", fit.used_levels);
        assert!(
            fit.beta_fit >= 0.8,
            "smooth data should look near-Lipschitz, got beta = {:.3} +- {:.3}",
            fit.beta_fit,
            fit.beta_std_err
        );
        assert!(fit.beta_std_err.is_finite());
        for (o, se) in fit.osc.iter().zip(&fit.osc_se).take(fit.used_levels) {
            assert!(o > &0.0 && se.is_finite());
        }
    }

    #[test]
    fn noise_floor_is_reported_not_fitted() {
        let (_, _, pool) = &*FLAT_POOL;
        let g = ExteriorFunction::constant(1.0);
        let field = harmonic_extend_pooled(&g, pool);
        assert!(matches!(
            estimate_hoelder_exponent(&field, 0.8, 2.0, 4),
            Err(Error::NoiseFloor(_))
        ));
    }

    #[test]
    fn annulus_decay_matches_the_stable_scaling() {
        let model = planar_cauchy();
        let params = base_params();
        let report = annulus_tail_decay(&model, &params, 1, 5).unwrap();
        assert!(report.sup_probes >= 200, "{}", report.sup_probes);
        assert!(report.monotone, "eta not decreasing: {:?}", report.eta);
        assert_relative_eq!(report.zeta_fit, 2.0, max_relative = 0.05);
        assert!(
            report.max_residual <= 0.10,
            "fit residual {:.3}",
            report.max_residual
        );

        // a slower process decays slower
        let slow = StableModel::new(0.5, SpectralMeasure::isotropic(0.25).unwrap(), None).unwrap();
        let slow_report = annulus_tail_decay(&slow, &params, 1, 5).unwrap();
        assert_relative_eq!(slow_report.zeta_fit, 2.0_f64.powf(0.5), max_relative = 0.05);

        // shrinking the probe ball can only lower each supremum
        let tight = HarnackParams::new([0.0, 0.0], 1.0, 1.0, 4.0 / 3.0, 2.0, 1.5, 0.9).unwrap();
        let loose_report = annulus_tail_decay(&model, &tight, 1, 5).unwrap();
        for (wide, narrow) in loose_report.eta.iter().zip(&report.eta) {
            assert!(narrow <= &(wide * (1.0 + 1e-12)));
        }
        assert!(report.eta[0] < loose_report.eta[0]);

        // three dimensions follow the same law
        let spatial =
            StableModel::<3>::new(1.0, SpectralMeasure::isotropic(0.25).unwrap(), None).unwrap();
        let params3 = HarnackParams::new([0.0; 3], 1.0, 1.0, 4.0 / 3.0, 2.0, 3.0, 0.9).unwrap();
        let report3 = annulus_tail_decay(&spatial, &params3, 1, 5).unwrap();
        assert_relative_eq!(report3.zeta_fit, 2.0, max_relative = 0.05);
        assert!(report3.monotone);

        assert!(matches!(
            annulus_tail_decay(&model, &params, 1, 2),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            annulus_tail_decay(&model, &params, 0, 4),
            Err(Error::Precondition(_))
        ));
    }
}
