use super::*;
use crate::bundles::build_charges;
use crate::euclidean::{calderon_projectors, euclidean_charge, EllipticOptions};
use crate::geometry::{build_reduced_ops, Bundle, MetricFamily, ReducedOps};
use crate::linalg::c;

struct Flat {
    grid: GridSpec,
    ops: ReducedOps,
    ch1: Charges,
    ch2: Charges,
}

fn flat(d: usize, n: usize) -> Flat {
    let grid = GridSpec::periodic(d, n).unwrap();
    let h = MetricFamily::static_flat(&grid, 3).unwrap();
    let ops = build_reduced_ops(&h, 0.0).unwrap();
    let ch1 = build_charges(&grid, Bundle::Covector).unwrap();
    let ch2 = build_charges(&grid, Bundle::Sym2).unwrap();
    Flat { grid, ops, ch1, ch2 }
}

fn surface(s: &Flat) -> GaugeSurfaceOps {
    let tol = (s.grid.dim == 3).then_some(1e-10);
    build_gauge_surface_ops(&s.ops.a1, &s.ops.a2, &s.ops.d0, &s.ops.d1, &s.ch1, &s.ch2, tol).unwrap()
}

fn problem(a: &TimeAnalyticOperator, n_s: usize) -> EllipticProblem {
    let opts = EllipticOptions { t_half: 0.5, n_s, auto_shrink: false };
    EllipticProblem::new(&wick_rotate(a), &opts).unwrap()
}

fn random_field(grid: &GridSpec, f: usize, seed: u64) -> SectionField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band: Vec<usize> = (0..grid.points()).filter(|&j| grid.is_band_limited(j)).collect();
    let mut v = SectionField::zeros(grid, f);
    for &j in &band {
        for comp in 0..f {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            v = &v + &SectionField::plane_wave(grid, f, j, comp).scale(z);
        }
    }
    v
}

#[test]
fn surface_operators_in_flat_gravity() {
    for d in [2, 3] {
        let s = flat(d, 4);
        let g = surface(&s);
        // the complex K†K = 0 needs an involutive trace reversal
        assert_eq!(g.residuals.kdag_k <= 1e-10, d == 3, "d={d}: {:?}", g.residuals);
        assert!(g.residuals.t_vs_t_tilde <= 1e-12);
        assert!(g.residuals.q_adjoint <= 1e-12);
        assert!(g.residuals.k_norm > 1.0);
        assert_eq!(g.residuals.i_squared <= 1e-12, d == 3);
    }
}

#[test]
fn inconsistent_gauge_operator_is_rejected() {
    let s = flat(3, 4);
    let bad = s.ops.d1.add(&TimeAnalyticOperator::constant(
        DenseOperator::fiber_constant(&s.grid, &Mat::from_element(10, 4, c(0.3))),
        s.ops.d1.taylor_order(),
    ));
    let err = build_gauge_surface_ops(&s.ops.a1, &s.ops.a2, &s.ops.d0, &bad, &s.ch1, &s.ch2, Some(1e-10));
    assert!(matches!(err, Err(Error::Identity(_))));
    let swapped = build_gauge_surface_ops(&s.ops.a2, &s.ops.a1, &s.ops.d0, &s.ops.d1, &s.ch1, &s.ch2, None);
    assert!(matches!(swapped, Err(Error::Invalid(_))));
}

#[test]
fn calderon_intertwining_defect_is_smoothing() {
    let s = flat(3, 8);
    let g = surface(&s);
    let c1 = calderon_projectors(&problem(&s.ops.a1, 16), &s.ops.tau1).unwrap();
    let c2 = calderon_projectors(&problem(&s.ops.a2, 16), &s.ops.tau2).unwrap();
    let rep = gauge_intertwine_residual((&c1.c_plus, &c1.c_minus), (&c2.c_plus, &c2.c_minus), &g.k_sigma, &[1, 2, 3]).unwrap();
    // Dirichlet walls at s = ±T break exact gauge invariance by O(e^{−2|k|T})
    let t = 0.5;
    for r in rep.plus.rows.iter().chain(&rep.minus.rows).filter(|r| r.kabs > 0.0) {
        let envelope = (1.0 + r.kabs).powi(2) * (-2.0 * r.kabs * t).exp();
        assert!(r.raw <= envelope, "|k| = {}: {} > {}", r.kabs, r.raw, envelope);
    }
    assert!(rep.max_raw > 0.1);
    let wrong = gauge_intertwine_residual((&c1.c_plus, &c1.c_minus), (&c1.c_plus, &c1.c_minus), &g.k_sigma, &[1]);
    assert!(wrong.is_err());
}

#[test]
fn gauge_fix_closes_the_loop() {
    let s = flat(2, 8);
    let g = surface(&s);
    let p1 = problem(&s.ops.a1, 20);
    let fixer = GaugeFixer::new(&p1, &g).unwrap();
    assert!(fixer.sigma_min > 1e-3, "{}", fixer.sigma_min);
    let (lo, hi) = fixer.principal_ratios(2.5);
    assert!(lo > 0.3 && hi < 3.0, "{lo} {hi}");
    for seed in 0..3 {
        let u = random_field(&s.grid, 6, seed);
        let fix = gauge_fix_solve(&p1, &g, &fixer, &u).unwrap();
        assert!(fix.residual_mixed <= 1e-7, "{}", fix.residual_mixed);
        assert!(fix.residual_trace <= 1e-7, "{}", fix.residual_trace);
        let via_op = fixer.cauchy_operator().apply(&u);
        assert!((&via_op - &fix.h).norm() <= 1e-9 * fix.h.norm().max(1.0));
    }
    let bad = SectionField::zeros(&s.grid, 3);
    assert!(gauge_fix_solve(&p1, &g, &fixer, &bad).is_err());
}

#[test]
fn synchronous_decomposition_residuals() {
    let s = flat(3, 4);
    let g = surface(&s);
    let p1 = problem(&s.ops.a1, 16);
    let p2 = problem(&s.ops.a2, 16);
    let c1 = calderon_projectors(&p1, &s.ops.tau1).unwrap();
    let c2 = calderon_projectors(&p2, &s.ops.tau2).unwrap();
    let fixer = GaugeFixer::new(&p1, &g).unwrap();
    let j2 = s.ch2.j2_operator(&s.grid).unwrap();
    let f = random_field(&s.grid, 20, 7);
    let dec = synchronous_decompose(&f, &c1.c_plus, &c2.c_plus, &g, &fixer, &p1, &j2).unwrap();
    let scale = f.norm();
    assert!(dec.residual_j2 <= 1e-7 * scale, "{}", dec.residual_j2);
    assert!(dec.residual_reconstruction <= 1e-9 * scale, "{}", dec.residual_reconstruction);
    assert!(dec.residual_h_projector <= 1e-8 * scale, "{}", dec.residual_h_projector);
}

#[test]
fn positivity_on_kernel_slice() {
    let s = flat(3, 4);
    let g = surface(&s);
    let p1 = problem(&s.ops.a1, 16);
    let p2 = problem(&s.ops.a2, 16);
    let c2 = calderon_projectors(&p2, &s.ops.tau2).unwrap();
    let fixer = GaugeFixer::new(&p1, &g).unwrap();
    let slice = kernel_slice(&g.k_dagger, 1);
    assert!(slice.dim >= 20, "{}", slice.dim);
    for v in slice.vectors() {
        assert!(g.k_dagger.apply(v).norm() <= 1e-9);
    }
    let q_tilde = euclidean_charge(&s.grid, 10);
    let rep = positivity_report(&c2.c_plus, &s.ch2.q_phys.matrix, &q_tilde, &g, &fixer, &slice, 11).unwrap();
    assert!(rep.min_energy >= -1e-10, "{rep:?}");
    assert!(rep.min_margin >= -1e-10, "{rep:?}");
    assert!(rep.control_min_form < -1e-3, "{rep:?}");
    assert_eq!(rep.samples, slice.dim + 16);
    let again = positivity_report(&c2.c_plus, &s.ch2.q_phys.matrix, &q_tilde, &g, &fixer, &slice, 11).unwrap();
    assert_eq!(rep.min_margin, again.min_margin);
}

#[test]
fn dense_kernel_slice_matches_modal() {
    let s = flat(2, 4);
    let g = surface(&s);
    let modal = kernel_slice(&g.k_dagger, 1);
    let dense = kernel_slice(&g.k_dagger.densified(), 1);
    assert_eq!(modal.dim, dense.dim);
    assert_eq!(modal.ambient_dim, dense.ambient_dim);
}

fn table(rows: &[(usize, f64, f64)]) -> DecayTable {
    DecayTable::from_norms(&[1, 2], rows.iter().map(|&(j, k, r)| (j, vec![0i64; 1], k, r)).collect())
}

#[test]
fn state_report_aggregates_and_names_missing_stages() {
    let prov = Provenance {
        scenario: "unit".into(),
        dim: 2,
        n_per_axis: 4,
        t_half: 0.5,
        taylor_order: 3,
        radius: 0.0,
    };
    let art = StateArtifacts { calderon: None, positivity: None, intertwining: None, frequency: None };
    match state_conditions_report(prov.clone(), &art, &StateTolerances::default()) {
        Err(Error::Invalid(msg)) => assert!(msg.contains("calderon")),
        other => panic!("{other:?}"),
    }

    let freq = table(&[(0, 0.0, 5.0), (1, 1.0, 1e-3), (2, 2.0, 1e-4)]);
    let int = IntertwineReport { plus: table(&[(1, 1.0, 0.0)]), minus: table(&[(1, 1.0, 0.0)]), max_raw: 0.0 };
    let pos = PositivityReport {
        kernel_dim: 30,
        ambient_dim: 60,
        min_form: 0.0,
        min_energy: 0.1,
        smoothing_bound: 0.0,
        bound_by_mode: vec![],
        min_margin: 0.1,
        samples: 46,
        control_min_form: -1.0,
        max_imag: 0.0,
        seed: 0,
    };
    let cal = ProjectorResiduals {
        sum: 0.0,
        idempotent_plus: 0.0,
        idempotent_minus: 0.0,
        q_selfadjoint_plus: 0.0,
        q_selfadjoint_minus: 0.0,
    };
    let art = StateArtifacts {
        calderon: Some(&cal),
        positivity: Some(&pos),
        intertwining: Some(&int),
        frequency: Some(&freq),
    };
    let rep = state_conditions_report(prov, &art, &StateTolerances::default()).unwrap();
    assert!(rep.all_pass(), "{rep:?}");
    assert_eq!(rep.excluded_modes, vec![0]);
    assert_eq!(rep.entries.len(), 6);
}


#[test]
fn positivity_correction_is_smoothing() {
    let s = flat(3, 8);
    let g = surface(&s);
    let p1 = problem(&s.ops.a1, 16);
    let p2 = problem(&s.ops.a2, 16);
    let c2 = calderon_projectors(&p2, &s.ops.tau2).unwrap();
    let fixer = GaugeFixer::new(&p1, &g).unwrap();
    let slice = kernel_slice(&g.k_dagger, 2);
    let q_tilde = euclidean_charge(&s.grid, 10);
    let rep = positivity_report(&c2.c_plus, &s.ch2.q_phys.matrix, &q_tilde, &g, &fixer, &slice, 11).unwrap();
    assert!(rep.min_energy >= -1e-10);
    for &(_, k, b) in rep.bound_by_mode.iter().filter(|m| m.1 > 0.0) {
        let envelope = (1.0 + k).powi(2) * (-k).exp();
        assert!(b <= envelope, "|k| = {k}: {b} > {envelope}");
    }
}

#[test]
fn gauge_fix_leaves_fixed_data_alone() {
    let s = flat(2, 8);
    let g = surface(&s);
    let p1 = problem(&s.ops.a1, 20);
    let fixer = GaugeFixer::new(&p1, &g).unwrap();
    // u_{sΣ} = 0 and traceless: only Σ-block shear and a balanced ss/ΣΣ trace
    let mut u = SectionField::zeros(&s.grid, 6);
    let raw = random_field(&s.grid, 6, 3);
    for p in 0..s.grid.points() {
        let base = p * 6;
        u.values[base + packed_index(3, 1, 2)] = raw.values[base];
        u.values[base + packed_index(3, 1, 1)] = raw.values[base + 1];
        u.values[base + packed_index(3, 2, 2)] = -raw.values[base + 1];
    }
    let fix = gauge_fix_solve(&p1, &g, &fixer, &u).unwrap();
    assert!(fix.y.norm() <= 1e-10 * u.norm());
    assert!(fix.residual_mixed <= 1e-8 && fix.residual_trace <= 1e-8);
}

#[test]
fn zero_data_decomposes_to_zero() {
    let s = flat(3, 4);
    let g = surface(&s);
    let p1 = problem(&s.ops.a1, 12);
    let c1 = calderon_projectors(&p1, &s.ops.tau1).unwrap();
    let c2 = calderon_projectors(&problem(&s.ops.a2, 12), &s.ops.tau2).unwrap();
    let fixer = GaugeFixer::new(&p1, &g).unwrap();
    let j2 = s.ch2.j2_operator(&s.grid).unwrap();
    let dec = synchronous_decompose(&SectionField::zeros(&s.grid, 20), &c1.c_plus, &c2.c_plus, &g, &fixer, &p1, &j2)
        .unwrap();
    assert_eq!(dec.k.norm(), 0.0);
    assert_eq!(dec.h.norm(), 0.0);
}

#[test]
fn physical_and_euclidean_charges_agree_on_j2_fixed_data() {
    let s = flat(3, 4);
    let j2 = s.ch2.j2.clone().unwrap();
    let (fixed, _) = linalg::null_space(&(&j2 - linalg::eye(20)), 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..8 {
        let coef = crate::linalg::Vector::from_fn(fixed.ncols(), |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let k = &fixed * coef;
        let phys = k.dotc(&(&s.ch2.q_phys.fiber * &k));
        let eucl = k.dotc(&(&s.ch2.q_tilde.fiber * &k));
        assert!((phys - eucl).norm() <= 1e-12);
    }
}

#[test]
fn hadamard_projectors_intertwine_exactly() {
    use crate::factorization::{factorize, projectors_of, FactorizeOptions};
    let s = flat(3, 8);
    let g = surface(&s);
    let opts = FactorizeOptions::default();
    let f1 = factorize(&s.ops.a1, &s.ops.tau1, &opts).unwrap();
    let f2 = factorize(&s.ops.a2, &s.ops.tau2, &opts).unwrap();
    let (c1, c2) = (projectors_of(&f1).unwrap(), projectors_of(&f2).unwrap());
    let rep = gauge_intertwine_residual((&c1.c_plus, &c1.c_minus), (&c2.c_plus, &c2.c_minus), &g.k_sigma, &[1, 2]).unwrap();
    // the regularizer is a compactly supported multiplier; beyond it the intertwining is exact
    let radius = f1.regularizer.radius.max(f2.regularizer.radius);
    let outside: Vec<_> = rep.plus.rows.iter().chain(&rep.minus.rows).filter(|r| r.kabs * r.kabs >= radius).collect();
    assert!(outside.len() > 50);
    for r in outside {
        assert!(r.raw <= 1e-8, "|k| = {}: {}", r.kabs, r.raw);
    }
}
