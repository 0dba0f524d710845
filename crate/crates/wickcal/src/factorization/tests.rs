use super::*;
use crate::linalg::c;

fn grid(n: usize) -> GridSpec {
    GridSpec::periodic(1, n).unwrap()
}

fn scalar_mult(g: &GridSpec, f: impl Fn(f64) -> f64) -> DenseOperator {
    DenseOperator::multiplier(g, 1, 1, |_, k| Mat::from_element(1, 1, c(f(k[0]))))
}

fn klein_gordon(g: &GridSpec, order: usize) -> TimeAnalyticOperator {
    TimeAnalyticOperator::constant(scalar_mult(g, |k| k * k + 1.0), order)
}

/// `a(t) = −(1 + αt)²Δ + 1`.
fn stretched(g: &GridSpec, alpha: f64, order: usize) -> TimeAnalyticOperator {
    let mut coeffs = vec![
        scalar_mult(g, |k| k * k + 1.0),
        scalar_mult(g, |k| 2.0 * alpha * k * k),
        scalar_mult(g, |k| alpha * alpha * k * k),
    ];
    while coeffs.len() <= order {
        coeffs.push(DenseOperator::zero(g, 1, 1));
    }
    TimeAnalyticOperator::new(coeffs)
}

fn scalar_at(op: &DenseOperator, j: usize) -> C64 {
    op.mode_block(j)[(0, 0)]
}

#[test]
fn regularizer_examples() {
    let g = grid(16);
    let kg = scalar_mult(&g, |k| k * k + 1.0);
    let reg = regularize_auto(&kg, &[1.0], None).unwrap();
    assert_eq!(reg.radius, 0.0);
    assert_eq!(reg.r.max_abs(), 0.0);

    let lap = scalar_mult(&g, |k| k * k);
    let r = regularize(&lap, 4.0).unwrap();
    assert!((scalar_at(&r, 0) - c(4.0)).norm() < 1e-14);
    for j in 0..g.points() {
        if g.k2(j) >= 4.0 {
            assert_eq!(r.mode_block(j)[(0, 0)], c(0.0));
        }
    }
    let prof = smoothing_order_profile_on(&r, &[1, 2, 3, 4], |_| true);
    for m in 1..=4 {
        assert!(prof.passes(m));
    }
    assert!(regularize(&lap, 0.5).is_err());
}

#[test]
fn bump_shape() {
    assert_eq!(bump(0.0), 1.0);
    assert_eq!(bump(1.0), 0.0);
    assert_eq!(bump(-1.5), 0.0);
    assert!((bump(0.5) - (-1.0f64 / 3.0).exp()).abs() < 1e-15);
}

#[test]
fn accretive_sqrt_examples() {
    let d = linalg::diag_real(&[4.0, 9.0]);
    assert!(linalg::max_abs(&(accretive_sqrt_mat(&d).unwrap() - linalg::diag_real(&[2.0, 3.0]))) < 1e-14);

    let mut tri = linalg::diag_real(&[4.0, 9.0]);
    tri[(0, 1)] = c(1.0);
    let mut want = linalg::diag_real(&[2.0, 3.0]);
    want[(0, 1)] = c(0.2);
    assert!(linalg::max_abs(&(accretive_sqrt_mat(&tri).unwrap() - want)) < 1e-14);

    let g = grid(32);
    let e = accretive_sqrt(&scalar_mult(&g, |k| k * k + 1.0)).unwrap();
    for j in 0..g.points() {
        assert!((scalar_at(&e, j) - c((g.k2(j) + 1.0).sqrt())).norm() < 1e-12);
    }
    assert!(accretive_sqrt_mat(&linalg::diag_real(&[-1.0, 4.0])).is_err());
}

#[test]
fn sqrt_series_squares_back() {
    let g = grid(8);
    let a = stretched(&g, 0.3, 5);
    let e = sqrt_series(&a).unwrap();
    let sq = e.compose(&e);
    for n in 0..=5 {
        assert!(sq.coeffs[n].dist(&a.coeffs[n]) < 1e-11, "order {n}");
    }
}

#[test]
fn fixed_point_constant_epsilon_is_trivial() {
    let g = grid(16);
    let eps = sqrt_series(&klein_gordon(&g, 4)).unwrap();
    let fp = fixed_point_b(&eps, 12, 1e-12).unwrap();
    assert_eq!(fp.iterations, 1);
    assert!(fp.converged);
    assert_eq!(fp.b0.max_coeff_norm(), 0.0);
}

#[test]
fn fixed_point_matches_hand_series() {
    // ε(t) = (1 + αt)ω: c₀ = iα/(2(1+αt)), second iterate adds 3α²/(8ω) at t = 0
    let g = grid(16);
    let alpha = 0.1;
    let w = scalar_mult(&g, |k| (k * k + 1.0).sqrt());
    let mut coeffs = vec![w.clone(), w.scale(c(alpha))];
    coeffs.push(DenseOperator::zero(&g, 1, 1));
    coeffs.push(DenseOperator::zero(&g, 1, 1));
    let eps = TimeAnalyticOperator::new(coeffs);

    let first = fixed_point_b(&eps, 12, f64::INFINITY).unwrap();
    for n in 0..3 {
        let want = I * alpha / 2.0 * (-alpha).powi(n as i32);
        for j in 0..g.points() {
            assert!((scalar_at(&first.b0.coeffs[n], j) - want).norm() < 1e-14);
        }
    }

    let second = fixed_point_b(&eps, 12, 0.0).unwrap();
    assert!(second.order_exhausted);
    assert_eq!(second.iterations, 2);
    for j in 0..g.points() {
        let w = (g.k2(j) + 1.0).sqrt();
        let want = I * alpha / 2.0 + c(3.0 * alpha * alpha / (8.0 * w));
        assert!((scalar_at(second.b0.at0(), j) - want).norm() < 1e-14);
    }
}

#[test]
fn hadamard_oracle_and_algebra() {
    let g = grid(64);
    let w = scalar_mult(&g, |k| (k * k + 1.0).sqrt());
    let hp = hadamard_projectors(&w, &w.scale(c(-1.0))).unwrap();
    for j in 0..g.points() {
        let om = (g.k2(j) + 1.0).sqrt();
        let want = Mat::from_row_slice(2, 2, &[c(0.5), c(0.5 / om), c(om / 2.0), c(0.5)]);
        assert!(linalg::max_abs(&(hp.c_plus.mode_block(j) - want)) < 1e-14);
    }
    let q = lorentzian_charge(&g, &[1.0]);
    let res = hp.residuals(&q);
    assert!(res.sum <= 1e-12);
    assert!(res.idempotent() <= 1e-10);
    assert!(res.q_selfadjoint() <= 1e-10);
}

#[test]
fn factorization_of_constant_klein_gordon() {
    let g = grid(64);
    let fr = factorize(&klein_gordon(&g, 4), &[1.0], &FactorizeOptions::default()).unwrap();
    for j in 0..g.points() {
        let om = (g.k2(j) + 1.0).sqrt();
        assert!((scalar_at(fr.b_plus.at0(), j) - c(om)).norm() < 1e-12);
        assert!((scalar_at(fr.b_minus.at0(), j) + c(om)).norm() < 1e-12);
    }
    assert!(fr.residual_profile.max_raw() < 1e-12);
    let (_, defect) = t_at_zero(&fr).unwrap();
    assert!(defect < 1e-12);
}

#[test]
fn factorization_residual_decays_for_time_dependent_symbol() {
    let g = grid(32);
    let fr = factorize(&stretched(&g, 0.2, 14), &[1.0], &FactorizeOptions::default()).unwrap();
    assert!(fr.fixed_point.iterations >= 10);
    for m in 1..=3 {
        assert!(fr.residual_profile.passes(m), "m = {m}: {:?}", fr.residual_profile.verdict(m));
    }
    let (_, defect) = t_at_zero(&fr).unwrap();
    assert!(defect < 1e-10, "T*qT defect {defect}");
    let hp = projectors_of(&fr).unwrap();
    let res = hp.residuals(&lorentzian_charge(&g, &[1.0]));
    assert!(res.sum <= 1e-12 && res.idempotent() <= 1e-10 && res.q_selfadjoint() <= 1e-10, "{res:?}");
}

#[test]
fn regularizer_radius_changes_projectors_by_smoothing() {
    let g = grid(64);
    let a = stretched(&g, 0.2, 6);
    let base = factorize(&a, &[1.0], &FactorizeOptions::default()).unwrap();
    let opts = FactorizeOptions { radius: Some(30.0), ..Default::default() };
    let big = factorize(&a, &[1.0], &opts).unwrap();
    assert_eq!(base.regularizer.radius, 0.0);
    let d = projectors_of(&base).unwrap().c_plus.sub(&projectors_of(&big).unwrap().c_plus);
    assert!(d.op_norm() > 1e-6);
    let prof = smoothing_order_profile_on(&d, &[1, 2, 3], |j| g.is_band_limited(j));
    for m in 1..=3 {
        assert!(prof.passes(m));
    }
    // χ(λ/30) vanishes once k² + 1 ≥ 30
    for j in 0..g.points() {
        if g.k2(j) + 1.0 >= 30.0 {
            assert!(d.mode_column_norm(j) < 1e-12);
        }
    }
}

#[test]
fn evolution_matches_harmonic_oscillator() {
    let g = grid(16);
    let a = klein_gordon(&g, 2);
    let t = 0.7;
    let u = cauchy_evolution(&a, 0.0, t, 200).unwrap();
    for j in (0..g.points()).filter(|&j| g.is_band_limited(j)) {
        let om = (g.k2(j) + 1.0).sqrt();
        let (s, co) = (om * t).sin_cos();
        let want = Mat::from_row_slice(2, 2, &[c(co), I * s / om, I * om * s, c(co)]);
        assert!(linalg::max_abs(&(u.mode_block(j) - want)) < 1e-8, "mode {j}");
    }
    let q = lorentzian_charge(&g, &[1.0]);
    assert!(pseudo_unitarity_defect(&u, &q) < 1e-8);
    let id = cauchy_evolution(&a, 0.3, 0.3, 1).unwrap();
    assert!(id.dist(&DenseOperator::identity(&g, 2)) < 1e-15);
    assert!(cauchy_evolution(&a, 0.0, 10.0, 2).is_err());
}

#[test]
fn evolution_is_pseudo_unitary_for_time_dependent_symbol() {
    let g = grid(16);
    let a = stretched(&g, 0.3, 6);
    let u = cauchy_evolution(&a, 0.0, 0.5, 200).unwrap();
    assert!(pseudo_unitarity_defect(&u, &lorentzian_charge(&g, &[1.0])) < 1e-8);
}

fn test_section(g: &GridSpec, center: f64, width: f64, seed: u64) -> TestSection {
    let field = SectionField::from_fn(g, 1, |x, _| {
        let s = seed as f64;
        C64::new((x[0] + s).cos() + 0.3 * (2.0 * x[0]).sin(), 0.5 * (x[0] * s).sin())
    });
    TestSection { center, width, field }
}

#[test]
fn causal_propagator_matches_closed_form() {
    let g = grid(8);
    let a = klein_gordon(&g, 2);
    let phi = test_section(&g, 0.1, 0.4, 1);
    let data = causal_cauchy_data(&a, &phi, 0.6, 200).unwrap();
    let modes = data.modes();
    let src = phi.field.modes();
    let quad = 20_000;
    for j in 0..g.points() {
        let om = (g.k2(j) + 1.0).sqrt();
        let (mut u0, mut u1) = (0.0, 0.0);
        let h = 1.2 / quad as f64;
        for i in 0..=quad {
            let s = -0.6 + i as f64 * h;
            let th = phi.profile(s) * h;
            u0 += (om * (-s)).sin() / om * th;
            u1 += (om * (-s)).cos() * th;
        }
        let want0 = src[j] * u0;
        let want1 = -I * src[j] * u1;
        assert!((modes[2 * j] - want0).norm() < 1e-6, "mode {j}");
        assert!((modes[2 * j + 1] - want1).norm() < 1e-6, "mode {j}");
    }
}

#[test]
fn green_charge_identity() {
    let g = grid(8);
    let a = stretched(&g, 0.2, 6);
    let p1 = test_section(&g, -0.1, 0.3, 1);
    let p2 = test_section(&g, 0.15, 0.35, 2);
    let rep = green_charge_check(&a, &[1.0], &p1, &p2, 0.6, 200).unwrap();
    assert!(rep.lhs.norm() > 1e-3);
    assert!(rep.residual < 1e-6, "{rep:?}");
    assert!(rep.homogeneous_residual < 1e-8);

    let rev = green_charge_check(&a, &[1.0], &p2, &p1, 0.6, 200).unwrap();
    assert!((rep.lhs + rev.lhs.conj()).norm() < 1e-8);

    let zero = TestSection { field: SectionField::zeros(&g, 1), ..p2.clone() };
    let z = green_charge_check(&a, &[1.0], &p1, &zero, 0.6, 200).unwrap();
    assert_eq!(z.lhs, c(0.0));
    assert_eq!(z.rhs.norm(), 0.0);
}

#[test]
fn evolution_factorization_is_diagonal_mod_smoothing() {
    let g = grid(32);
    let fr = factorize(&stretched(&g, 0.2, 20), &[1.0], &FactorizeOptions::default()).unwrap();
    assert!(fr.fixed_point.converged);
    let prof = evolution_factorization_profile(&fr, 0.1, 400, &[1, 2, 3]).unwrap();
    for m in 1..=3 {
        assert!(prof.passes(m), "m = {m}: {:?}", prof.verdict(m));
    }
}
