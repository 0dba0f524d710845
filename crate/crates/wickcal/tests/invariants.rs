//! Property tests over randomized grids, symbols and sections.

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wickcal::bundles::{build_charges, hermitian_form_v2, trace_reversal, Bundle2Section};
use wickcal::euclidean::{calderon_projectors, reflection_defect, wick_rotate, EllipticOptions, EllipticProblem};
use wickcal::factorization::{factorize, lorentzian_charge, projectors_of, FactorizeOptions};
use wickcal::gauge_states::build_gauge_surface_ops;
use wickcal::geometry::{
    build_reduced_ops, gauge_residuals, reduced_ops_from, series_of, Bundle, MetricFamily, Model, ReducedGeometry,
};
use wickcal::linalg::{Mat, C64};
use wickcal::spectral_core::{
    adjoint, derivative_op, smoothing_order_profile, sobolev_norm, DenseOperator, GridSpec, InnerProduct, SectionField,
};

fn cx(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| cx(rng))
}

fn random_field(g: &GridSpec, fiber: usize, rng: &mut ChaCha8Rng) -> SectionField {
    let modes: Vec<C64> = (0..g.points() * fiber)
        .map(|i| if g.is_band_limited(i / fiber) { cx(rng) / (1.0 + g.k2(i / fiber)) } else { C64::new(0.0, 0.0) })
        .collect();
    SectionField::from_modes(g, fiber, &modes)
}

fn real_spd(rng: &mut ChaCha8Rng, d: usize) -> Mat {
    let b = Mat::from_fn(d, d, |_, _| C64::new(rng.random_range(-0.4..0.4), 0.0));
    b.transpose() * &b + Mat::identity(d, d)
}

fn scalar_series(g: &GridSpec, metric: &MetricFamily, mass2: f64, order: usize) -> wickcal::spectral_core::TimeAnalyticOperator {
    let geo = ReducedGeometry::new(metric, Model::Scalar { mass2 }).unwrap();
    series_of(&geo.a_hat(0), order, g).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn derivatives_commute(dim in 1usize..=3, half in 2usize..=8) {
        let n = if dim == 3 { half.min(4) * 2 } else { half * 2 };
        let g = GridSpec::periodic(dim, n).unwrap();
        for i in 0..dim {
            for j in 0..dim {
                let (a, b) = (derivative_op(&g, i).unwrap(), derivative_op(&g, j).unwrap());
                prop_assert!(a.compose(&b).dist(&b.compose(&a)) <= 1e-13);
            }
        }
    }

    #[test]
    fn adjoint_is_an_involution(seed in any::<u64>(), fiber in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::periodic(1, 8).unwrap();
        let a = DenseOperator::from_dense(&g, fiber, fiber, random_mat(&mut rng, 8 * fiber, 8 * fiber)).unwrap();
        let w: Vec<Mat> = (0..8)
            .map(|_| {
                let b = random_mat(&mut rng, fiber, fiber);
                b.adjoint() * &b + Mat::identity(fiber, fiber)
            })
            .collect();
        let ip = InnerProduct::new(DenseOperator::pointwise(&g, &w)).unwrap();
        let back = adjoint(&adjoint(&a, &ip).unwrap(), &ip).unwrap();
        prop_assert!(back.dist(&a) <= 1e-12 * a.op_norm().max(1.0));
    }

    #[test]
    fn sobolev_zero_is_the_flat_norm(seed in any::<u64>(), dim in 1usize..=2, fiber in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::periodic(dim, 8).unwrap();
        let f = random_field(&g, fiber, &mut rng);
        let flat = InnerProduct::flat(&g, fiber).eval(&f, &f).re;
        assert_relative_eq!(sobolev_norm(&f, 0.0).powi(2), flat, max_relative = 1e-12);
    }

    #[test]
    fn smoothing_operators_form_an_ideal(seed in any::<u64>(), width in 0.5f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::periodic(1, 16).unwrap();
        let s = DenseOperator::multiplier(&g, 1, 1, |_, k| Mat::from_element(1, 1, C64::new((-width * k[0] * k[0]).exp(), 0.0)));
        let (c1, c2) = (cx(&mut rng), cx(&mut rng));
        let b = DenseOperator::pointwise(
            &g,
            &(0..16)
                .map(|p| {
                    let x = g.coords(p)[0];
                    Mat::from_element(1, 1, C64::new(2.0, 0.0) + c1 * x.cos() + c2 * (2.0 * x).sin())
                })
                .collect::<Vec<_>>(),
        );
        let m = [1, 2, 3];
        prop_assert!(m.iter().all(|&k| smoothing_order_profile(&s, &m).passes(k)));
        for prod in [b.compose(&s), s.compose(&b), b.compose(&s).compose(&b)] {
            let t = smoothing_order_profile(&prod, &m);
            prop_assert!(m.iter().all(|&k| t.passes(k)), "{:?}", m.map(|k| t.verdict(k)));
        }
    }

    #[test]
    fn trace_reversal_is_an_involution_and_self_adjoint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::periodic(3, 4).unwrap();
        let h0 = vec![real_spd(&mut rng, 3)];
        let mut section = || {
            let tensors: Vec<Mat> = (0..g.points())
                .map(|_| {
                    let m = random_mat(&mut rng, 4, 4);
                    (&m + m.transpose()) * C64::new(0.5, 0.0)
                })
                .collect();
            Bundle2Section::from_tensors(&g, &tensors).unwrap()
        };
        let (u, v) = (section(), section());
        let iu = trace_reversal(&u, &h0).unwrap();
        let iiu = trace_reversal(&iu, &h0).unwrap();
        for p in 0..g.points() {
            prop_assert!((iiu.tensor_at(p) - u.tensor_at(p)).norm() <= 1e-12 * u.tensor_at(p).norm().max(1.0));
        }
        let lhs = hermitian_form_v2(&iu, &v, &h0).unwrap();
        let rhs = hermitian_form_v2(&u, &trace_reversal(&v, &h0).unwrap(), &h0).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn physical_charges_are_hermitian_and_invertible(d in 2usize..=3, sym in any::<bool>()) {
        let g = GridSpec::periodic(d, 4).unwrap();
        let ch = build_charges(&g, if sym { Bundle::Sym2 } else { Bundle::Covector }).unwrap();
        let q = &ch.q_phys.fiber;
        prop_assert!((q - q.adjoint()).norm() <= 1e-14);
        let inv = q.clone().try_inverse().expect("invertible");
        let n = q.nrows();
        prop_assert!((q * inv - Mat::identity(n, n)).norm() <= 1e-12);
    }

    #[test]
    fn physical_and_euclidean_charges_agree_on_j2_fixed_vectors(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::periodic(3, 4).unwrap();
        let ch = build_charges(&g, Bundle::Sym2).unwrap();
        let j = ch.j2.clone().unwrap();
        let n = j.nrows();
        let v = random_mat(&mut rng, n, 1);
        let k = (&v + &j * &v) * C64::new(0.5, 0.0);
        prop_assert!((&j * &k - &k).norm() <= 1e-13);
        let phys = (k.adjoint() * &ch.q_phys.fiber * &k)[(0, 0)];
        let eucl = (k.adjoint() * &ch.q_tilde.fiber * &k)[(0, 0)];
        prop_assert!((phys - eucl).norm() <= 1e-12 * phys.norm().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn transport_preserves_the_initial_metric(seed in any::<u64>(), d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::periodic(d, 4).unwrap();
        let h0 = real_spd(&mut rng, d);
        let sym = |rng: &mut ChaCha8Rng| {
            let m = Mat::from_fn(d, d, |_, _| C64::new(rng.random_range(-0.3..0.3), 0.0));
            (&m + m.transpose()) * C64::new(0.5, 0.0)
        };
        let coeffs = vec![vec![h0], vec![sym(&mut rng)], vec![sym(&mut rng)]];
        let metric = MetricFamily::from_coeffs(&g, 6, &coeffs, "random").unwrap();
        let worst = metric.transport_invariance_residual().into_iter().fold(0.0, f64::max);
        prop_assert!(worst <= 1e-10, "{worst:e}");
    }

    #[test]
    fn gauge_residuals_are_stable_under_refinement(hubble in 0.1f64..1.5) {
        let rel = |n: usize| {
            let g = GridSpec::periodic(3, n).unwrap();
            let ds = MetricFamily::de_sitter(&g, hubble, 4).unwrap();
            let ops = build_reduced_ops(&ds, 3.0 * hubble * hubble).unwrap();
            gauge_residuals(&ops.a1, &ops.a2, &ops.d0, &ops.d1).max_relative()
        };
        let (coarse, fine) = (rel(4), rel(8));
        prop_assert!(coarse <= 1e-12 && fine <= 10.0 * coarse.max(1e-15), "{coarse:e} → {fine:e}");
    }

    #[test]
    fn hadamard_projectors_are_complementary_idempotents(mass2 in 0.1f64..4.0, half in 4usize..=16, c1 in -0.3f64..0.3, c2 in 0.0f64..0.3) {
        let g = GridSpec::periodic(1, 2 * half).unwrap();
        for metric in [
            MetricFamily::static_flat(&g, 12).unwrap(),
            MetricFamily::conformally_flat(&g, 12, &[1.0, c1, c2], "poly").unwrap(),
        ] {
            let a = scalar_series(&g, &metric, mass2, 12);
            let fr = factorize(&a, &[1.0], &FactorizeOptions::default()).unwrap();
            let r = projectors_of(&fr).unwrap().residuals(&lorentzian_charge(&g, &[1.0]));
            prop_assert!(r.sum <= 1e-12, "{r:?}");
            prop_assert!(r.idempotent() <= 1e-10, "{r:?}");
            prop_assert!(r.q_selfadjoint() <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn calderon_projectors_are_reflection_symmetric(mass2 in 0.2f64..3.0, t_half in 0.5f64..1.5) {
        let g = GridSpec::periodic(1, 16).unwrap();
        let a = scalar_series(&g, &MetricFamily::static_flat(&g, 4).unwrap(), mass2, 4);
        let p = EllipticProblem::new(&wick_rotate(&a), &EllipticOptions { t_half, n_s: 32, auto_shrink: false }).unwrap();
        let ct = calderon_projectors(&p, &[1.0]).unwrap();
        prop_assert!(ct.residuals.sum <= 1e-8 && ct.residuals.idempotent() <= 1e-8 && ct.residuals.q_selfadjoint() <= 1e-8, "{:?}", ct.residuals);
        prop_assert!(reflection_defect(&ct, &[1.0]) <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn calderon_projectors_commute_with_trace_reversal(t_half in 0.5f64..1.5) {
        let g = GridSpec::periodic(3, 4).unwrap();
        let metric = MetricFamily::static_flat(&g, 4).unwrap();
        let ops = reduced_ops_from(&ReducedGeometry::new(&metric, Model::Gravity { lambda: 0.0 }).unwrap(), 4).unwrap();
        let p = EllipticProblem::new(&wick_rotate(&ops.a2), &EllipticOptions { t_half, n_s: 20, auto_shrink: false }).unwrap();
        let ct = calderon_projectors(&p, &ops.tau2).unwrap();
        let i = build_charges(&g, Bundle::Sym2).unwrap().i_sigma(&g);
        for c in [&ct.c_plus, &ct.c_minus] {
            prop_assert!(i.compose(c).dist(&c.compose(&i)) <= 1e-8);
        }
    }

    #[test]
    fn surface_adjoint_uses_the_physical_charge(hubble in 0.0f64..1.5) {
        let g = GridSpec::periodic(3, 4).unwrap();
        let ds = MetricFamily::de_sitter(&g, hubble, 4).unwrap();
        let ops = build_reduced_ops(&ds, 3.0 * hubble * hubble).unwrap();
        let ch1 = build_charges(&g, Bundle::Covector).unwrap();
        let ch2 = build_charges(&g, Bundle::Sym2).unwrap();
        let gs = build_gauge_surface_ops(&ops.a1, &ops.a2, &ops.d0, &ops.d1, &ch1, &ch2, Some(1e-10)).unwrap();
        prop_assert!(gs.residuals.q_adjoint <= 1e-12 * gs.k_sigma.op_norm().max(1.0), "{:?}", gs.residuals);
        prop_assert!(gs.residuals.kdag_k <= 1e-10, "{:?}", gs.residuals);
    }
}
