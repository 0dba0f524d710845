use super::*;
use crate::factorization::{factorize, projectors_of, FactorizeOptions};
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
fn stretched(g: &GridSpec, alpha: f64) -> TimeAnalyticOperator {
    TimeAnalyticOperator::new(vec![
        scalar_mult(g, |k| k * k + 1.0),
        scalar_mult(g, |k| 2.0 * alpha * k * k),
        scalar_mult(g, |k| alpha * alpha * k * k),
    ])
}

fn opts(t_half: f64, n_s: usize) -> EllipticOptions {
    EllipticOptions { t_half, n_s, auto_shrink: false }
}

fn omega(g: &GridSpec, j: usize) -> f64 {
    (g.k2(j) + 1.0).sqrt()
}

#[test]
fn chebyshev_nodes_differentiate_and_integrate() {
    let t = 1.7;
    let nodes = ChebNodes::new(24, t).unwrap();
    assert_eq!(nodes.s[0], 0.0);
    assert!((nodes.s[23] - t).abs() < 1e-15);
    for i in 0..24 {
        let s = nodes.s[i];
        let d: C64 = (0..24).map(|j| nodes.d1[(i, j)] * nodes.s[j].sin()).sum();
        let d2: C64 = (0..24).map(|j| nodes.d2[(i, j)] * nodes.s[j].sin()).sum();
        assert!((d - c(s.cos())).norm() < 1e-11);
        assert!((d2 + c(s.sin())).norm() < 1e-9);
    }
    let integral: f64 = nodes.s.iter().zip(&nodes.weights).map(|(s, w)| w * s.powi(5)).sum();
    assert!((integral - t.powi(6) / 6.0).abs() < 1e-12);
    let odd = ChebNodes::new(9, 2.0).unwrap();
    let exp: f64 = odd.s.iter().zip(&odd.weights).map(|(s, w)| w * s.exp()).sum();
    assert!((exp - (2f64.exp() - 1.0)).abs() < 1e-7);
    assert!(ChebNodes::new(3, 1.0).is_err());
}

#[test]
fn wick_rotation_multiplies_by_powers_of_i() {
    let g = grid(8);
    let a = stretched(&g, 0.3);
    let w = wick_rotate(&a);
    let j = 1;
    let k2 = g.k2(j);
    assert!((w.coeffs[1].mode_block(j)[(0, 0)] - I * 0.6 * k2).norm() < 1e-14);
    assert!((w.coeffs[2].mode_block(j)[(0, 0)] + c(0.09 * k2)).norm() < 1e-14);
    let (d0, d1) = wick_rotate_gauge(&a, &a);
    assert!((d0.coeffs[0].mode_block(j)[(0, 0)] + I * (k2 + 1.0)).norm() < 1e-14);
    assert!((d1.coeffs[1].mode_block(j)[(0, 0)] - I * 0.6 * k2).norm() < 1e-14);
}

#[test]
fn calderon_matches_closed_form() {
    let g = grid(16);
    let t = 1.0;
    let p = EllipticProblem::new(&klein_gordon(&g, 2), &opts(t, 40)).unwrap();
    assert!(p.is_constant_in_s());
    let ct = calderon_projectors(&p, &[1.0]).unwrap();
    for j in 0..g.points() {
        let w = omega(&g, j);
        let want = [[0.5, (w * t).tanh() / (2.0 * w)], [w / (w * t).tanh() / 2.0, 0.5]];
        let got = ct.c_plus.mode_block(j);
        for r in 0..2 {
            for s in 0..2 {
                assert!((got[(r, s)] - c(want[r][s])).norm() < 1e-10 * (1.0 + want[r][s].abs()), "mode {j}");
            }
        }
    }
    assert!(ct.residuals.sum < 1e-12);
    assert!(ct.residuals.idempotent() < 1e-10);
    assert!(ct.residuals.q_selfadjoint() < 1e-10);
    assert!(reflection_defect(&ct, &[1.0]) < 1e-10);
}

#[test]
fn split_and_full_solves_agree() {
    let g = grid(8);
    let kg = klein_gordon(&g, 0);
    let mut padded = kg.coeffs.clone();
    padded.push(scalar_mult(&g, |_| 1e-300));
    let fast = EllipticProblem::new(&kg, &opts(1.0, 24)).unwrap();
    let full = EllipticProblem::new(&TimeAnalyticOperator::new(padded), &opts(1.0, 24)).unwrap();
    assert!(!full.is_constant_in_s());
    let a = calderon_projectors(&fast, &[1.0]).unwrap();
    let b = calderon_projectors(&full, &[1.0]).unwrap();
    assert!(a.c_plus.dist(&b.c_plus) < 1e-10);
    assert!(dtn_map(&fast, Side::Minus).unwrap().dist(&dtn_map(&full, Side::Minus).unwrap()) < 1e-9);
}

#[test]
fn dense_storage_matches_modal() {
    let g = grid(8);
    let kg = klein_gordon(&g, 0);
    let dense = TimeAnalyticOperator::new(vec![kg.coeffs[0].densified()]);
    let a = calderon_projectors(&EllipticProblem::new(&kg, &opts(1.0, 20)).unwrap(), &[1.0]).unwrap();
    let b = calderon_projectors(&EllipticProblem::new(&dense, &opts(1.0, 20)).unwrap(), &[1.0]).unwrap();
    assert!(!b.c_plus.is_modal());
    assert!(linalg::max_abs(&(a.c_plus.to_dense() - b.c_plus.to_dense())) < 1e-10);
}

#[test]
fn dtn_and_poisson_closed_form() {
    let g = grid(16);
    let t = 0.8;
    let p = EllipticProblem::new(&klein_gordon(&g, 0), &opts(t, 40)).unwrap();
    let np = dtn_map(&p, Side::Plus).unwrap();
    let nm = dtn_map(&p, Side::Minus).unwrap();
    for j in 0..g.points() {
        let w = omega(&g, j);
        let want = w / (w * t).tanh();
        assert!((np.mode_block(j)[(0, 0)] - c(want)).norm() < 1e-9 * want);
        assert!((nm.mode_block(j)[(0, 0)] + c(want)).norm() < 1e-9 * want);
    }
    let (lo, hi) = dtn_coercivity(&np);
    let wmax = (0..g.points()).map(|j| omega(&g, j)).fold(0.0, f64::max);
    assert!((lo - 1.0 / (wmax * t).tanh()).abs() < 1e-8, "{lo}");
    assert!((hi - 1.0 / (0.8f64).tanh()).abs() < 1e-8, "{hi}");

    let j = 3;
    let v = SectionField::plane_wave(&g, 1, j, 0);
    let w = omega(&g, j);
    for side in [Side::Plus, Side::Minus] {
        let u = poisson(&p, side, &v).unwrap();
        for (s, ui) in u.s.iter().zip(&u.values) {
            let want = (w * (t - s.abs())).sinh() / (w * t).sinh();
            assert!((ui - &v.scale(c(want))).max_abs() < 1e-10);
        }
    }
}

#[test]
fn interface_and_source_right_hand_sides() {
    let g = grid(8);
    let p = EllipticProblem::new(&stretched(&g, 0.2).wick(), &opts(1.0, 24)).unwrap();
    let f0 = SectionField::from_fn(&g, 1, |x, _| c(x[0].cos()));
    let f1 = SectionField::from_fn(&g, 1, |x, _| C64::new(0.5, (2.0 * x[0]).sin()));
    let ct = calderon_projectors(&p, &[1.0]).unwrap();
    let f = crate::spectral_core::CauchyData::new(f0.clone(), f1.clone()).to_section();
    let want = crate::spectral_core::CauchyData::from_section(&ct.c_plus.apply(&f));

    // σ̃f = (−f₁, f₀)
    let sol = dirichlet_solve(&p, DirichletRhs::Source { f0: &f1.scale(c(-1.0)), f1: &f0 }).unwrap();
    let du0: SectionField = (0..p.nodes.len())
        .map(|j| sol.plus.values[j].scale(p.nodes.d1[(0, j)]))
        .fold(SectionField::zeros(&g, 1), |a, b| &a + &b);
    assert!((&want.f0 + &sol.plus.values[0]).max_abs() < 1e-10);
    assert!((&want.f1 - &du0).max_abs() < 1e-10);

    let jump = dirichlet_solve(&p, DirichletRhs::Interface { jump: &f0, jump_ds: &f1 }).unwrap();
    assert!((&(&jump.plus.values[0] - &jump.minus.values[0]) - &f0).max_abs() < 1e-11);
    let last = p.nodes.len() - 1;
    assert!(jump.plus.values[last].max_abs() < 1e-12 && jump.minus.values[last].max_abs() < 1e-12);
}

#[test]
fn volume_solve_manufactured() {
    let g = grid(8);
    let t = 1.0;
    let p = EllipticProblem::new(&klein_gordon(&g, 0), &opts(t, 32)).unwrap();
    let j = 2;
    let v = SectionField::plane_wave(&g, 1, j, 0);
    let k = std::f64::consts::PI / (2.0 * t);
    let w2 = g.k2(j) + 1.0;
    let rhs = |side: f64| -> Vec<SectionField> {
        p.nodes.s.iter().map(|s| v.scale(c((k * k + w2) * (k * side * s).cos()))).collect()
    };
    let (gp, gm) = (rhs(1.0), rhs(-1.0));
    let sol = dirichlet_solve(&p, DirichletRhs::Volume { plus: &gp, minus: &gm }).unwrap();
    for half in [&sol.plus, &sol.minus] {
        for (s, u) in half.s.iter().zip(&half.values) {
            assert!((u - &v.scale(c((k * s).cos()))).max_abs() < 1e-10);
        }
    }
    assert!(dirichlet_solve(&p, DirichletRhs::Volume { plus: &gp[1..], minus: &gm }).is_err());
}

#[test]
fn green_identities_hold_for_non_dirichlet_data() {
    let g = grid(8);
    let p = EllipticProblem::new(&stretched(&g, 0.4).wick(), &opts(0.7, 20)).unwrap();
    assert!(!p.is_constant_in_s());
    let a = SectionField::from_fn(&g, 1, |x, _| C64::new(x[0].cos(), 0.3));
    let b = SectionField::from_fn(&g, 1, |x, _| C64::new(0.2, (2.0 * x[0]).sin()));
    for side in [Side::Plus, Side::Minus] {
        let sgn = side.sign();
        let s: Vec<f64> = p.nodes.s.iter().map(|s| sgn * s).collect();
        let field = |f: &dyn Fn(f64) -> C64, base: &SectionField| NodalField {
            side,
            s: s.clone(),
            values: s.iter().map(|&si| base.scale(f(si))).collect(),
        };
        let u = field(&|s| C64::new(1.0 + s, s * s), &a);
        let v = field(&|s| C64::new(0.5 - s * s * s, -s), &b);
        let r = green_identities(&p, &u, &v).unwrap();
        assert!(r.residual < 1e-11, "{side:?} {r:?}");
        assert!(r.lhs1.norm() > 1e-3 && r.lhs2.norm() > 1e-3);
    }
}

#[test]
fn coercivity_certificate_shrinks_t() {
    let g = grid(8);
    let a = TimeAnalyticOperator::new(vec![scalar_mult(&g, |k| k * k - 5.0)]);
    assert!(EllipticProblem::new(&a, &opts(1.0, 16)).is_err());
    let p = EllipticProblem::new(&a, &EllipticOptions { t_half: 1.0, n_s: 16, auto_shrink: true }).unwrap();
    assert!(p.shrunk);
    assert_eq!(p.t_half, 0.5);
    assert!((p.coercivity - (std::f64::consts::PI.powi(2) - 5.0)).abs() < 1e-12);
}

#[test]
fn hadamard_and_calderon_agree_up_to_smoothing() {
    let g = grid(32);
    let a = klein_gordon(&g, 4);
    let fr = factorize(&a, &[1.0], &FactorizeOptions::default()).unwrap();
    let c = projectors_of(&fr).unwrap();
    let t = 1.0;
    let p = EllipticProblem::new(&wick_rotate(&a), &opts(t, 40)).unwrap();
    let ct = calderon_projectors(&p, &[1.0]).unwrap();
    let cmp = compare_projectors(&c, &ct, &[1, 2, 3, 4]).unwrap();
    for &(j, _, dp, dm) in &cmp.per_mode {
        let w = omega(&g, j);
        let bound = 3.0 * w * (-2.0 * w * t).exp();
        assert!(dp <= bound && dm <= bound, "mode {j}: {dp} {dm} > {bound}");
        assert!((dp - (1.0 / (w * t).tanh() - 1.0) / 2.0).abs() < 1e-9);
    }
    assert!(cmp.profile.passes(4));
}
