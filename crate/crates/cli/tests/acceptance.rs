//! Release gate: nine end-to-end checks covering every layer of the
//! workspace against closed-form oracles, independent recomputations and
//! the determinism contract. Each test prints exactly one summary line
//! (`cargo test --test acceptance -- --nocapture` to see them all).

use std::f64::consts::PI;

use rand::Rng;

use stable_harnack::density::alias_relative_bound;
use stable_harnack::geom::{norm, scale, Ball};
use stable_harnack::rng::{child_seed, stream, Domain};
use stable_harnack::stats::{ks_statistic_cdf, ks_statistic_two_sample};
use stable_harnack::{
    annulus_tail_decay, build_scheme, estimate_harnack_constant, estimate_hoelder_exponent,
    exit_lattice, exit_radius_cdf, green_point, green_profile, harmonic_extend_pooled,
    hoelder_constants, nested_offsets, run_oscillation_iteration, sample_exit_ensemble,
    time_density_grid, uniform_offsets, unit_density_grid, verify_average_bound,
    verify_average_comparison, verify_near_diagonal_floor, verify_weak_harnack, ExteriorFunction,
    ExteriorTerm, GreenBoundReport, GreenMcBudget, HarnackMcBudget, HarnackParams,
    SpectralMeasure, StableModel,
};

fn verdict(number: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number} ({name}): {tag} [{detail}]");
    assert!(pass, "ACCEPTANCE {number} ({name}): {tag} [{detail}]");
}

fn planar_cauchy() -> StableModel<2> {
    StableModel::new(1.0, SpectralMeasure::isotropic(0.25).unwrap(), None).unwrap()
}

fn cos2_model() -> StableModel<2> {
    StableModel::new(1.0, SpectralMeasure::cos2(1.0, 0.5).unwrap(), None).unwrap()
}

#[test]
fn acceptance_1_symbol_exactness() {
    // homogeneity on a smooth anisotropic model and on the atomic model
    let mut worst = 0.0f64;
    let cases: [(f64, StableModel<2>); 2] = [
        (1.3, StableModel::new(1.3, SpectralMeasure::<2>::cos2(1.0, 0.5).unwrap(), None).unwrap()),
        (1.0, StableModel::new(1.0, SpectralMeasure::<2>::axis_atoms(0.5).unwrap(), None).unwrap()),
    ];
    for (alpha, model) in cases {
        let mut rng = stream(2026, Domain::Scratch, alpha.to_bits());
        for _ in 0..100 {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let radius = rng.random_range(0.2f64..5.0);
            let u = [radius * angle.cos(), radius * angle.sin()];
            let c = rng.random_range(0.2f64..5.0);
            let phi = model.char_exponent(&u);
            let defect = (model.char_exponent(&scale(&u, c)) - c.powf(alpha) * phi).abs() / phi;
            worst = worst.max(defect);
        }
    }

    // closed form for the isotropic model with unit spectral density
    let iso = StableModel::new(1.0, SpectralMeasure::<2>::isotropic(1.0).unwrap(), None).unwrap();
    let mut worst_closed = 0.0f64;
    let mut rng = stream(2026, Domain::Scratch, 7);
    for k in 0..100 {
        let u = if k == 0 {
            [1.0, 0.0]
        } else {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let radius = rng.random_range(0.1f64..8.0);
            [radius * angle.cos(), radius * angle.sin()]
        };
        let exact = 4.0 * norm(&u);
        worst_closed = worst_closed.max((iso.char_exponent(&u) - exact).abs() / exact);
    }

    verdict(
        1,
        "symbol exactness",
        worst <= 1e-12 && worst_closed <= 1e-8,
        &format!("homogeneity defect {worst:.2e}, closed-form defect {worst_closed:.2e}"),
    );
}

#[test]
fn acceptance_2_density_normalization_and_scaling() {
    let model = planar_cauchy();
    let base = unit_density_grid(&model, 40.0, 0.078125).unwrap();
    let mass_defect = (base.mass - 1.0).abs();

    let n = base.n;
    let mut checked = 0usize;
    let mut worst = 0.0f64;

    // p(4, x) = 4^{-2} p(1, x/4) on nodes whose quarter lands on the lattice
    let four = time_density_grid(&model, 4.0, 40.0, 0.078125).unwrap();
    for i in (0..n).step_by(4) {
        for j in (0..n).step_by(4) {
            let x = four.node_position(&[i, j]);
            let p4 = four.value(&[i, j]);
            if p4 <= 1e-6 {
                continue;
            }
            let quarter = scale(&x, 0.25);
            let trust = alias_relative_bound(&four, &x) + alias_relative_bound(&base, &quarter);
            if trust > 2e-3 {
                continue;
            }
            let bi = [i / 4 + 3 * n / 8, j / 4 + 3 * n / 8];
            let scaled = base.value(&bi) / 16.0;
            worst = worst.max((scaled - p4).abs() / p4);
            checked += 1;
        }
    }

    // p(1/4, x) = 4^2 p(1, 4x) on nodes with 4x inside the lattice
    let quarter_grid = time_density_grid(&model, 0.25, 40.0, 0.078125).unwrap();
    let half_span = n / 8;
    for i in (n / 2 - half_span)..(n / 2 + half_span) {
        for j in (n / 2 - half_span)..(n / 2 + half_span) {
            let x = quarter_grid.node_position(&[i, j]);
            let pq = quarter_grid.value(&[i, j]);
            if pq <= 1e-6 {
                continue;
            }
            let big = scale(&x, 4.0);
            let trust =
                alias_relative_bound(&quarter_grid, &x) + alias_relative_bound(&base, &big);
            if trust > 2e-3 {
                continue;
            }
            let bi = [4 * i - 3 * (n / 2), 4 * j - 3 * (n / 2)];
            let scaled = 16.0 * base.value(&bi);
            worst = worst.max((scaled - pq).abs() / pq);
            checked += 1;
        }
    }

    verdict(
        2,
        "density normalization and scaling",
        mass_defect <= 1e-3 && worst <= 2e-3 && checked >= 2000,
        &format!("mass defect {mass_defect:.2e}, scaling defect {worst:.2e} over {checked} nodes"),
    );
}

#[test]
fn acceptance_3_product_density_oracle() {
    // atoms at +-e1, +-e2 with weight 1/2 make the coordinates independent
    // standard Cauchy at t = 1
    let model =
        StableModel::new(1.0, SpectralMeasure::<2>::axis_atoms(0.5).unwrap(), None).unwrap();
    let grid = unit_density_grid(&model, 80.0, 0.078125).unwrap();
    let n = grid.n;
    let cauchy = |x: f64| 1.0 / (PI * (1.0 + x * x));

    let mut worst = 0.0f64;
    for di in -16i64..=16 {
        for dj in -16i64..=16 {
            let j = [
                (n as i64 / 2 + 2 * di) as usize,
                (n as i64 / 2 + 2 * dj) as usize,
            ];
            let x = grid.node_position(&j);
            let truth = cauchy(x[0]) * cauchy(x[1]);
            worst = worst.max((grid.value(&j) - truth).abs() / truth);
        }
    }

    verdict(
        3,
        "product density oracle",
        worst <= 1e-3,
        &format!("max relative error {worst:.2e} on a 33x33 subsample"),
    );
}

#[test]
fn acceptance_4_green_function_oracle() {
    let model = planar_cauchy();
    let grid = unit_density_grid(&model, 40.0, 0.0390625).unwrap();
    let profile = green_profile(&model, &grid).unwrap();

    let exact = 1.0 / (2.0 * PI);
    let at_e1 = green_point(&profile, &[1.0, 0.0]).unwrap();
    let value_defect = (at_e1 - exact).abs() / exact;

    let mut worst = 0.0f64;
    let mut rng = stream(44, Domain::Scratch, 0);
    for _ in 0..100 {
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        if norm(&x) < 1e-3 {
            continue;
        }
        let g = green_point(&profile, &x).unwrap();
        for c in [0.5, 2.0, 8.0, 3.7] {
            let scaled = green_point(&profile, &scale(&x, c)).unwrap();
            let predicted = g / c;
            worst = worst.max((scaled - predicted).abs() / predicted.abs());
        }
    }

    verdict(
        4,
        "green function oracle",
        value_defect <= 1e-2 && worst <= 1e-12,
        &format!("unit value defect {value_defect:.2e}, homogeneity defect {worst:.2e}"),
    );
}

#[test]
fn acceptance_5_exit_law_oracle() {
    let model = planar_cauchy();
    let n_paths = 100_000;

    let sample_scaled = |r: f64, seed: u64| -> Vec<f64> {
        let scheme = build_scheme(&model, 0.01 * r).unwrap();
        let ball = Ball::centered(r);
        let samples = sample_exit_ensemble(&scheme, &ball, &[0.0; 2], n_paths, seed).unwrap();
        samples.iter().map(|s| norm(&s.position) / r).collect()
    };

    let mut unit = sample_scaled(1.0, 505);
    let ks_unit = ks_statistic_cdf(&mut unit, |s| exit_radius_cdf(1.0, s).unwrap_or(0.0));

    let mut ks_cross = 0.0f64;
    for (r, seed) in [(0.5, 606), (2.0, 707)] {
        let mut other = sample_scaled(r, seed);
        ks_cross = ks_cross.max(ks_statistic_two_sample(&mut unit, &mut other));
    }

    verdict(
        5,
        "exit law oracle",
        ks_unit <= 0.02 && ks_cross <= 0.02,
        &format!("KS vs closed form {ks_unit:.4}, worst cross-scale KS {ks_cross:.4} at 1e5 paths"),
    );
}

struct ClaimSummary {
    c_key_value: f64,
    worst_rel_se: f64,
    all_pass: bool,
    floor_positive: bool,
}

fn summarize(report: &GreenBoundReport, c_key: &str) -> ClaimSummary {
    let mut worst_rel_se = 0.0f64;
    let mut floor_positive = true;
    for s in report.samples.iter().filter(|s| !s.skipped) {
        if s.lhs > 0.0 {
            worst_rel_se = worst_rel_se.max(s.lhs_std_err / s.lhs);
        }
        if s.lhs - 2.0 * s.lhs_std_err <= 0.0 {
            floor_positive = false;
        }
    }
    ClaimSummary {
        c_key_value: report.constants.get(c_key).copied().unwrap_or(f64::NAN),
        worst_rel_se,
        all_pass: report.conclusive && report.samples.iter().all(|s| s.pass || s.skipped),
        floor_positive,
    }
}

#[test]
fn acceptance_6_green_ball_claims() {
    let mut detail = String::new();
    let mut pass = true;

    for (tag, model) in [("isotropic", planar_cauchy()), ("cos2", cos2_model())] {
        let grid = unit_density_grid(&model, 40.0, 0.0390625).unwrap();
        let profile = green_profile(&model, &grid).unwrap();
        let budget = GreenMcBudget::default();

        let avg = verify_average_bound(
            &model, &profile, &[0.0; 2], 1.0, 4.0 / 3.0, 0.9, 12, &budget, 1001,
        )
        .unwrap();
        let avg_sum = summarize(&avg, "c_avg");
        pass &= avg_sum.c_key_value.is_finite()
            && avg_sum.worst_rel_se <= 0.05
            && avg_sum.all_pass;

        let floor = verify_near_diagonal_floor(
            &model, &profile, &[0.0; 2], 1.0, 2.0, 0.9, 6, &budget, 1002,
        )
        .unwrap();
        let floor_sum = summarize(&floor, "c_floor");
        pass &= floor_sum.c_key_value > 0.0 && floor_sum.floor_positive && floor_sum.all_pass;
        let delta1 = floor.constants.get("delta1").copied().unwrap_or(f64::NAN);
        pass &= delta1 > 0.0;

        let cmp = verify_average_comparison(
            &model,
            &profile,
            &[0.0; 2],
            1.0,
            4.0 / 3.0,
            2.0,
            0.9,
            0.15,
            20,
            &budget,
            1003,
        )
        .unwrap();
        let cmp_sum = summarize(&cmp, "c_ratio");
        pass &= cmp_sum.c_key_value.is_finite() && cmp_sum.all_pass;

        detail.push_str(&format!(
            "{tag}: c_avg {:.3} (se {:.1}%), c_floor {:.3} at delta1 {:.2}, c_ratio {:.3} over 20 pairs; ",
            avg_sum.c_key_value,
            100.0 * avg_sum.worst_rel_se,
            floor_sum.c_key_value,
            delta1,
            cmp_sum.c_key_value,
        ));
    }

    verdict(6, "green ball claims", pass, detail.trim_end_matches("; "));
}

#[test]
fn acceptance_7_weak_harnack_inequality() {
    let model = planar_cauchy();
    let params = HarnackParams::new([0.0; 2], 1.0, 1.0, 4.0 / 3.0, 2.0, 3.0, 0.9).unwrap();
    let budget = HarnackMcBudget {
        lattice_target: 900,
        paths_per_node: 512,
    };

    let ensemble = estimate_harnack_constant(&model, &params, 50, &budget, 4242).unwrap();
    let c1 = ensemble.c1;
    let mut nonneg_ok = c1.is_finite() && c1 >= 1.0;
    for rep in &ensemble.reports {
        nonneg_ok &= rep.avg_term
            <= c1 * (rep.inf_term + rep.tail_term) * (1.0 + 1e-12);
    }

    // signed-data trials reuse one pooled lattice; admissibility of each
    // draw keeps every negative support clear of the ball of radius r
    let ball = params.extension_ball();
    let (offsets, weights, spacing) = uniform_offsets::<2>(ball.radius, 900);
    let pool = exit_lattice(
        &model,
        &ball,
        offsets,
        weights,
        spacing,
        2048,
        child_seed(4242, 9),
    )
    .unwrap();

    let n_trials = 20;
    let mut strict = 0usize;
    let mut within_two_sigma = 0usize;
    for t in 0..n_trials {
        let mut rng = stream(4242, Domain::Ensemble, 1000 + t);
        let g = ExteriorFunction::random_signed(params.r, &mut rng);
        let field = harmonic_extend_pooled(&g, &pool);
        let rep = verify_weak_harnack(&model, &field, &g, &params).unwrap();
        let rhs = c1 * (rep.inf_term + rep.tail_term);
        if rep.avg_term <= rhs {
            strict += 1;
        } else {
            let sigma = (rep.avg_std_err.powi(2)
                + (c1 * rep.inf_std_err).powi(2)
                + (c1 * rep.tail_quad_tol).powi(2))
            .sqrt();
            if rep.avg_term <= rhs + 2.0 * sigma {
                within_two_sigma += 1;
            }
        }
    }
    let trials_ok =
        strict as f64 >= 0.95 * n_trials as f64 && strict + within_two_sigma == n_trials as usize;

    verdict(
        7,
        "weak harnack inequality",
        nonneg_ok && trials_ok,
        &format!(
            "c1 {c1:.3} over 50 members, signed trials {strict}/{n_trials} strict, {} within 2 sigma",
            within_two_sigma
        ),
    );
}

#[test]
fn acceptance_8_hoelder_iteration_and_exponents() {
    let (kappa, beta) = hoelder_constants(1.0, 2.0).unwrap();
    let beta_exact = (8.0f64 / 7.0).ln() / 2.0f64.ln();
    let constants_ok = (kappa - 0.25).abs() <= 1e-12 && (beta - beta_exact).abs() <= 1e-12;

    let model = planar_cauchy();
    let params = HarnackParams::new([0.0; 2], 1.0, 1.0, 4.0 / 3.0, 2.0, 3.0, 0.9).unwrap();
    let ball = params.extension_ball();
    let radii = [0.9, 0.5, 0.25, 0.125, 0.0625];
    let (offsets, weights, spacing) = nested_offsets::<2>(&radii, 40);
    let pool = exit_lattice(&model, &ball, offsets, weights, spacing, 6000, 303).unwrap();

    let g = ExteriorFunction::new(vec![ExteriorTerm::Bump {
        offset: [1.6, 0.3],
        width: 1.0,
        height: 3.0,
    }]);
    let field = harmonic_extend_pooled(&g, &pool);

    // c1 measured on the same model and geometry feeds the theory exponent
    let small_budget = HarnackMcBudget {
        lattice_target: 400,
        paths_per_node: 512,
    };
    let c1 = estimate_harnack_constant(&model, &params, 12, &small_budget, 4242)
        .unwrap()
        .c1;
    let beta_theory = hoelder_constants(c1, params.theta).unwrap().1;

    let iteration = run_oscillation_iteration(&field, &g, &params, c1.max(1.0), 4).unwrap();
    let sandwich_ok =
        iteration.sandwich_violations == 0 && iteration.envelope_violations == 0;

    let fit = estimate_hoelder_exponent(&field, params.r, params.theta, 4).unwrap();
    let fit_ok = fit.beta_fit >= beta_theory - 0.02;

    let decay = annulus_tail_decay(&model, &params, 1, 5).unwrap();
    let zeta_exact = params.theta.powf(model.alpha());
    let decay_ok = decay.monotone
        && decay.max_residual <= 0.10
        && (decay.zeta_fit - zeta_exact).abs() <= 0.05 * zeta_exact;

    verdict(
        8,
        "hoelder iteration and exponents",
        constants_ok && sandwich_ok && fit_ok && decay_ok,
        &format!(
            "constants exact, sandwich clean over {} levels, beta_fit {:.3} >= theory {:.3} - 0.02, zeta {:.3} vs {zeta_exact:.3} (residual {:.1}%)",
            iteration.k_total, fit.beta_fit, beta_theory, decay.zeta_fit,
            100.0 * decay.max_residual
        ),
    );
}

#[test]
fn acceptance_9_run_determinism() {
    let dir = std::env::temp_dir().join("stable_harnack_acceptance_9");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("run.cfg");
    std::fs::write(
        &cfg_path,
        "[model]\ndimension = 2\nalpha = 1.0\nmeasure = cos2\na = 1.0\nb = 0.5\n\n\
         [task]\nname = harnack\nseed = 99\n\n\
         [params]\nensemble = 4\nlattice_target = 200\npaths_per_node = 128\n",
    )
    .unwrap();

    let mut artifacts = Vec::new();
    for run in ["first", "second"] {
        let out = dir.join(run);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_stable-harnack"))
            .args(["run", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .status()
            .expect("binary runs");
        assert_ne!(status.code(), Some(1));
        let report = std::fs::read(out.join("report.json")).unwrap();
        let series = std::fs::read(out.join("ensemble.csv")).unwrap();
        let mut manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
                .unwrap();
        let obj = manifest.as_object_mut().unwrap();
        obj.remove("timestamp_unix");
        obj.remove("wall_time_seconds");
        artifacts.push((report, series, manifest));
    }

    let reports_equal = artifacts[0].0 == artifacts[1].0;
    let series_equal = artifacts[0].1 == artifacts[1].1;
    let manifests_equal = artifacts[0].2 == artifacts[1].2;

    verdict(
        9,
        "run determinism",
        reports_equal && series_equal && manifests_equal,
        &format!(
            "report bytes equal: {reports_equal}, series bytes equal: {series_equal}, manifests equal after dropping timestamps: {manifests_equal}"
        ),
    );
}
