//! Property tests for the structural invariants of each module.

use proptest::prelude::*;

use rotsdr::bounds::{error_bound, lambda_min2_closed_form};
use rotsdr::cert::{
    avoids_extremes, cert_clean, cert_noisy, cert_outliers_small_c, eigengap, noiseless_family, noisy_d, noisy_thresholds,
    refute_clustered, refute_large_c, verify_kkt, Verdict,
};
use rotsdr::linalg::{eigh_small, Mat4, SymMatrix, Vec3, Vec4};
use rotsdr::rotmath::{build_q, composition_cos_half, decompose_inlier, AxisAngle, UnitQuaternion};
use rotsdr::sdr::{
    assemble_big_q, lift, project_affine, sdr_feasibility, sdr_objective, solve_sdr, BigMatrix, SolverOptions,
};
use rotsdr::synth::{gen_instance, GenConfig, NoiseModel, OutlierSpec};
use rotsdr::tls::{eigenvector_residual, tls_by_classification, tls_objective, TruncationParams};

fn v3() -> impl Strategy<Value = Vec3<f64>> {
    prop::array::uniform3(-3.0..3.0f64).prop_map(|a| Vec3::new(a[0], a[1], a[2]))
}

fn quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
    prop::array::uniform4(-1.0..1.0f64)
        .prop_filter("nonzero", |a| a.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(|a| UnitQuaternion::from_vector(Vec4::new(a[0], a[1], a[2], a[3])).unwrap())
}

fn axis_angle() -> impl Strategy<Value = AxisAngle<f64>> {
    (v3().prop_filter("axis", |v| v.norm() > 1e-2), 0.0..std::f64::consts::PI)
        .prop_map(|(a, t)| AxisAngle::new(a.normalized().unwrap(), t).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn thresholds(c: f64, ell: usize) -> TruncationParams<f64> {
    TruncationParams::uniform(c, ell).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quadratic_form_is_the_residual(y in v3(), x in v3(), w in quat()) {
        let q = build_q(&y, &x);
        let rx = w.to_rotation().apply(&x);
        let direct = (y - rx).norm_sq();
        prop_assert!(rel(q.residual(w.as_vec()), direct) < 1e-10);
    }

    #[test]
    fn data_matrix_spectrum(y in v3(), x in v3()) {
        // Eigenvalues (|y| - |x|)² and (|y| + |x|)², each twice.
        let (ny, nx) = (y.norm(), x.norm());
        let lo = (ny - nx).powi(2);
        let hi = (ny + nx).powi(2);
        let e = eigh_small(build_q(&y, &x).matrix());
        let mut got = e.values.0;
        got.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip([lo, lo, hi, hi]) {
            prop_assert!((g - w).abs() <= 1e-9 * hi.max(1.0));
        }
        // The minimum over the sphere is attained at the bottom eigenvector.
        prop_assert!((build_q(&y, &x).residual(&e.vector(0)) - lo).abs() <= 1e-9 * hi.max(1.0));
    }

    #[test]
    fn half_angle_of_a_composition(a in axis_angle(), b in axis_angle()) {
        let r = a.to_rotation().transpose().compose(&b.to_rotation());
        let tr = r.matrix().trace();
        // |cos(φ/2)| from the trace of the composed matrix.
        let from_trace = ((1.0 + tr) / 4.0).max(0.0).sqrt();
        prop_assert!((composition_cos_half(&a, &b).abs() - from_trace).abs() < 1e-8);
    }

    #[test]
    fn inlier_decomposition(x in v3(), eps in v3(), w in quat()) {
        let r = w.to_rotation();
        let eps = eps.scale(0.1);
        let d = decompose_inlier(&x, &r, &eps);
        let y = r.apply(&x) + eps;
        let q = build_q(&y, &x);
        prop_assert!((d.reconstruct() - *q.matrix()).max_abs() < 1e-10 * (1.0 + q.matrix().max_abs()));
        // The noise-free part annihilates w* and has 4|x|² as its other eigenvalue.
        prop_assert!(d.p.mul_vec(w.as_vec()).norm() < 1e-10 * (1.0 + x.norm_sq()));
        let e = eigh_small(&d.p);
        prop_assert!(e.values[0].abs() < 1e-9 * (1.0 + x.norm_sq()));
        prop_assert!(e.values[1].abs() < 1e-9 * (1.0 + x.norm_sq()));
        prop_assert!((e.values[3] - 4.0 * x.norm_sq()).abs() < 1e-9 * (1.0 + x.norm_sq()));
        prop_assert!((d.eps_sq - eps.norm_sq()).abs() < 1e-15);
    }

    #[test]
    fn lambda_min2_matches_eigensolve(seed in any::<u64>(), ell in 2usize..40) {
        let inst = gen_instance::<f64>(&GenConfig::clean(ell, seed)).unwrap();
        let xs: Vec<Vec3<f64>> = inst.pairs.iter().map(|p| p.x).collect();
        let r = inst.r_star;
        let mut sum = Mat4::zeros();
        for x in &xs {
            sum = sum + decompose_inlier(x, &r, &Vec3::zeros()).p;
        }
        let direct = eigh_small(&sum).values[1];
        let closed = lambda_min2_closed_form(&xs).unwrap();
        prop_assert!(rel(closed, direct) < 1e-8);
        // Left edge of the ratio band.
        let total: f64 = xs.iter().map(|x| x.norm_sq()).sum();
        prop_assert!(closed <= 4.0 * total * (1.0 + 1e-12));
        if closed > 0.0 {
            prop_assert!(total / closed >= 0.25 * (1.0 - 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generation_is_reproducible(seed in any::<u64>(), ell in 1usize..30, sigma in 0.0..0.2f64) {
        let cfg = GenConfig::gaussian(ell, ell, sigma, seed);
        let a = gen_instance::<f64>(&cfg).unwrap().to_json().unwrap();
        let b = gen_instance::<f64>(&cfg).unwrap().to_json().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bounded_noise_respects_its_radius(seed in any::<u64>(), delta in 0.001..0.5f64, truncated in any::<bool>()) {
        let noise = if truncated {
            NoiseModel::TruncatedGaussian { sigma: delta, delta }
        } else {
            NoiseModel::Bounded { delta }
        };
        let cfg = GenConfig { ell: 20, kstar: 20, noise, seed, ..Default::default() };
        let inst = gen_instance::<f64>(&cfg).unwrap();
        for p in &inst.pairs {
            prop_assert!((p.y - inst.r_star.apply(&p.x)).norm() <= delta * (1.0 + 1e-12));
        }
    }

    #[test]
    fn clustered_outliers_vanish_at_the_cluster(seed in any::<u64>(), dot in 0.1..0.95f64) {
        let cfg = GenConfig { ell: 12, kstar: 8, seed, ..Default::default() }
            .with_outliers(OutlierSpec::ClusteredDot { dot });
        let inst = gen_instance::<f64>(&cfg).unwrap();
        let w_cl = inst.w_cl().unwrap();
        prop_assert!((w_cl.dot(&inst.w_star()).abs() - dot).abs() < 1e-9);
        for q in &inst.data_matrices()[8..] {
            prop_assert!(q.matrix().mul_vec(w_cl.as_vec()).norm() < 1e-10);
        }
    }

    #[test]
    fn classification_estimate_is_an_eigenvector(seed in any::<u64>(), ell in 2usize..25, sigma in 0.0..0.1f64) {
        let inst = gen_instance::<f64>(&GenConfig::gaussian(ell, ell, sigma, seed)).unwrap();
        let qs = inst.data_matrices();
        let c = thresholds(1.0, ell);
        let sol = tls_by_classification(&qs, &c, &inst.inlier_set()).unwrap();
        prop_assert!(eigenvector_residual(&qs, &sol) < 1e-9 * (1.0 + sol.lambda_min2.abs()));
        // A unique, consistent solution has a gap above one.
        if sol.consistent && !sol.min_eig_multiplicity_flag {
            let gap = eigengap(&qs, &sol.kept()).unwrap();
            prop_assert!(gap.zeta > 1.0);
        }
    }

    #[test]
    fn lifts_are_feasible_and_price_the_tls_cost(seed in any::<u64>(), ell in 1usize..12, mask in any::<u16>()) {
        let inst = gen_instance::<f64>(&GenConfig::gaussian(ell, ell, 0.05, seed)).unwrap();
        let qs = inst.data_matrices();
        let c = thresholds(0.5, ell);
        let w = inst.w_star();
        let theta: Vec<bool> = (0..ell).map(|i| mask >> i & 1 == 1).collect();
        let lifted = lift(&w, &theta);
        prop_assert!(sdr_feasibility(&lifted) < 1e-12);
        let big_q = assemble_big_q(&qs, &c).unwrap();
        // With θ chosen optimally for w the lift costs exactly the TLS objective.
        let best: Vec<bool> = qs.iter().map(|q| q.residual(w.as_vec()) < 0.5).collect();
        let v = sdr_objective(&big_q, &lift(&w, &best), &c);
        prop_assert!(rel(v, tls_objective(&w, &qs, &c).unwrap()) < 1e-10);
        prop_assert!(sdr_objective(&big_q, &lifted, &c) >= v - 1e-10);
    }

    #[test]
    fn affine_projection_is_idempotent(ell in 1usize..8, entries in prop::collection::vec(-2.0..2.0f64, 1024)) {
        let n = 4 * (ell + 1);
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set_sym(i, j, entries[(i * n + j) % entries.len()]);
            }
        }
        let mut once = BigMatrix::from_sym(m).unwrap();
        project_affine(&mut once);
        prop_assert!(sdr_feasibility(&once) < 1e-12);
        let mut twice = once.clone();
        project_affine(&mut twice);
        prop_assert!(twice.sub(&once).max_abs() <= 1e-12);
    }

    #[test]
    fn certificates_keep_their_block_structure(seed in any::<u64>(), ell in 2usize..20, sigma in 0.0..0.05f64) {
        let inst = gen_instance::<f64>(&GenConfig::gaussian(ell, ell, sigma, seed)).unwrap();
        let qs = inst.data_matrices();
        let c = thresholds(1.0, ell);
        let family = noiseless_family(&qs, &c, &inst.inlier_set()).unwrap();
        prop_assert_eq!(family.structure_residual(), 0.0);
        if let Ok(cert) = cert_noisy(&qs, &c, ell) {
            prop_assert!(cert.structure_residual() <= 1e-12 * (1.0 + qs.iter().map(|q| q.matrix().max_abs()).fold(0.0, f64::max)));
        }
    }

    #[test]
    fn tight_certificates_have_positive_blocks(seed in any::<u64>(), ell in 4usize..16, rate in 0.0..0.7f64) {
        // Noiseless inliers, Gaussian outliers with half their smallest eigenvalue.
        let kstar = ell - ((ell as f64 * rate) as usize).min(ell - 1);
        let cfg = GenConfig { ell, kstar, seed, ..Default::default() }.with_outliers(OutlierSpec::RandomGaussian);
        let inst = gen_instance::<f64>(&cfg).unwrap();
        let qs = inst.data_matrices();
        let c = TruncationParams::new(
            qs.iter().enumerate().map(|(i, q)| if i < kstar { 1.0 } else { 0.5 * q.lambda_min() }).collect(),
        ).unwrap();
        let cert = if kstar == ell { cert_clean(&qs, &c) } else { cert_outliers_small_c(&qs, &c, kstar) }.unwrap();
        let rep = verify_kkt(&cert, &inst.w_star(), &qs, &c, &inst.inlier_set()).unwrap();
        prop_assert_eq!(rep.verdict, Verdict::CertifiedTight);
        if avoids_extremes(&qs, &c, 1e-6) {
            prop_assert!(cert.min_block_eig() > 0.0);
        }
    }

    #[test]
    fn witnesses_evaluate_to_their_violation(seed in any::<u64>(), dot in 0.8..0.95f64, factor in 1.5..4.0f64) {
        let cfg = GenConfig { ell: 8, kstar: 7, seed, ..Default::default() }.with_outliers(OutlierSpec::RandomGaussian);
        let inst = gen_instance::<f64>(&cfg).unwrap();
        let qs = inst.data_matrices();
        let w = inst.w_star();
        let mut cs = vec![1.0; 8];
        cs[7] = factor * qs[7].residual(w.as_vec()).max(1e-3);
        let c = TruncationParams::new(cs).unwrap();
        let big_q = assemble_big_q(&qs, &c).unwrap();
        let family = noiseless_family(&qs, &c, &inst.inlier_set()).unwrap();
        let slack = family.dual_slack(&big_q);
        let wit = refute_large_c(&qs, &c, &w, 7).unwrap().expect("threshold above the residual");
        prop_assert!(wit.violation < 0.0);
        prop_assert!((wit.evaluate(&slack) - wit.violation).abs() < 1e-9 * (1.0 + wit.violation.abs()));

        let cfg = GenConfig { ell: 12, kstar: 8, seed, ..Default::default() }
            .with_outliers(OutlierSpec::ClusteredDot { dot });
        let inst = gen_instance::<f64>(&cfg).unwrap();
        let qs = inst.data_matrices();
        let c = thresholds(1.0, 12);
        let w_cl = inst.w_cl().unwrap();
        let wit = refute_clustered(&qs, &c, &inst.w_star(), &w_cl, 8).unwrap().expect("condition holds");
        let family = noiseless_family(&qs, &c, &inst.inlier_set()).unwrap();
        let slack = family.dual_slack(&assemble_big_q(&qs, &c).unwrap());
        prop_assert!(wit.violation < 0.0);
        prop_assert!((wit.evaluate(&slack) - wit.violation).abs() < 1e-9);
        prop_assert!((wit.violation - (16.0 * (1.0 - dot) - 4.0)).abs() < 1e-8);
    }

    #[test]
    fn error_bound_report_is_consistent(seed in any::<u64>(), sigma in 0.001..0.1f64) {
        let inst = gen_instance::<f64>(&GenConfig::gaussian(30, 30, sigma, seed)).unwrap();
        let qs = inst.data_matrices();
        let c = TruncationParams::new(noisy_thresholds(&qs, 30, 1.1).unwrap()).unwrap();
        let sol = tls_by_classification(&qs, &c, &inst.inlier_set()).unwrap();
        let rep = error_bound(&inst, &sol.w_hat, &inst.inlier_set()).unwrap();
        prop_assert!((0.0..=1.0).contains(&rep.sin_sq_tau));
        prop_assert_eq!(rep.holds, rep.sin_sq_tau <= rep.rhs + 1e-10);
        prop_assert!(rep.holds);
    }
}

/// d₁ from its definition, with the eigen-quantities taken from the dense solver and
/// the pairwise differences summed explicitly.
fn d1_oracle(qs: &[rotsdr::rotmath::DataMatrix<f64>]) -> f64 {
    let k = qs.len();
    let dense = |m: &Mat4<f64>| {
        let mut s = SymMatrix::zeros(4);
        for i in 0..4 {
            for j in 0..=i {
                s.set_sym(i, j, m[(i, j)]);
            }
        }
        s.eigh().unwrap()
    };
    let mut sum = Mat4::zeros();
    for q in qs {
        sum = sum + *q.matrix();
    }
    let e = dense(&sum);
    let w = Vec4::new(e.vector(0)[0], e.vector(0)[1], e.vector(0)[2], e.vector(0)[3]);
    let eta = e.values[0] / e.values[1];
    let res: Vec<f64> = qs.iter().map(|q| q.matrix().quad(&w)).collect();
    let mean = res.iter().sum::<f64>() / k as f64;
    let mut diff = Mat4::zeros();
    for q in &qs[1..] {
        diff = diff + (*qs[0].matrix() - *q.matrix());
    }
    mean - res[0] + eta * dense(&diff).max() / (k - 1) as f64
}

#[test]
fn d1_matches_an_independent_evaluation() {
    for seed in 0..200u64 {
        let sigma = [0.01, 0.03, 0.1][seed as usize % 3];
        let inst = gen_instance::<f64>(&GenConfig::gaussian(40, 40, sigma, seed)).unwrap();
        let qs = inst.data_matrices();
        let (_, d) = noisy_d(&qs, 40).unwrap();
        let oracle = d1_oracle(&qs);
        assert!((d[0] - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()), "seed {seed}: {} vs {oracle}", d[0]);
    }
}

#[test]
fn solver_is_deterministic() {
    let inst = gen_instance::<f64>(&GenConfig::gaussian(5, 5, 0.01, 3)).unwrap();
    let qs = inst.data_matrices();
    let c = thresholds(1.0, 5);
    let big_q = assemble_big_q(&qs, &c).unwrap();
    let opts = SolverOptions { max_iter: 300, ..Default::default() };
    let a = solve_sdr(&big_q, &c, &opts).unwrap();
    let b = solve_sdr(&big_q, &c, &opts).unwrap();
    assert_eq!(a.w, b.w);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn relaxation_bounds_and_strong_duality() {
    for seed in 0..4u64 {
        let inst = gen_instance::<f64>(&GenConfig::clean(6, seed)).unwrap();
        let qs = inst.data_matrices();
        let c = thresholds(1.0, 6);
        let big_q = assemble_big_q(&qs, &c).unwrap();
        let opts = SolverOptions::default();
        let sol = solve_sdr(&big_q, &c, &opts).unwrap();
        assert!(sol.converged);
        let tol = 10.0 * opts.tol * (1.0 + big_q.frobenius());
        let w = inst.w_star();
        assert!(sol.objective <= sdr_objective(&big_q, &lift(&w, &[true; 6]), &c) + tol);
        assert!(sol.objective <= sdr_objective(&big_q, &lift(&w, &[false; 6]), &c) + tol);
        let cert = cert_clean(&qs, &c).unwrap();
        assert!((sol.objective - (cert.mu_hat + c.sum())).abs() <= tol, "seed {seed}: {}", sol.objective);
    }
}

#[test]
fn batteries_are_reproducible_and_self_consistent() {
    use rotsdr::experiments::{
        battery_instance, regime_thresholds, run_tightness_battery, write_csv_to, BatteryConfig, BatteryRegime,
        GridPoint, Outliers,
    };
    let cfg = BatteryConfig {
        ells: vec![5, 7],
        outliers: vec![Outliers::Rate(0.2)],
        trials: 3,
        seed: 11,
        solve: true,
        ..BatteryConfig::new(BatteryRegime::SmallC)
    };
    let a = run_tightness_battery(&cfg).unwrap();
    let b = run_tightness_battery(&cfg).unwrap();
    assert_eq!(a.rows.len(), cfg.grid().unwrap().len() * cfg.trials);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_csv_to(&mut ca, &a.rows).unwrap();
    write_csv_to(&mut cb, &b.rows).unwrap();
    assert_eq!(ca, cb);
    for r in &a.rows {
        if r.verdict == Some(Verdict::CertifiedTight) {
            // The solver tolerance is relative to the size of the cost matrix.
            let point = GridPoint { ell: r.ell, kstar: r.kstar, sigma: r.sigma };
            let (inst, _) = battery_instance(&cfg, point, r.seed).unwrap();
            let c = regime_thresholds(&cfg, &inst).unwrap();
            let scale = 1.0 + assemble_big_q(&inst.data_matrices(), &c).unwrap().frobenius();
            let (obj, v) = (r.solver_objective.unwrap(), r.tls_value);
            assert!((obj - v).abs() <= 10.0 * cfg.solver.tol * scale, "row {}: {obj} vs {v}", r.index);
        }
    }
}
