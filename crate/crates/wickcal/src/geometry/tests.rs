use super::*;
use crate::linalg::{self, Mat, C64};
use crate::spectral_core::GridSpec;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn grid(d: usize, n: usize) -> GridSpec {
    GridSpec::periodic(d, n).unwrap()
}

/// Polynomial metric with band-limited spatial dependence on `T²`.
fn wavy_metric(g: &GridSpec, taylor_order: usize) -> MetricFamily {
    let np = g.points();
    let h0: Vec<Mat> = (0..np)
        .map(|p| {
            let x = g.coords(p);
            let a = 1.0 + 0.2 * x[0].cos();
            let b = 1.0 + 0.1 * (x[1] + 0.3).sin();
            let o = 0.05 * (x[0] - x[1]).cos();
            Mat::from_row_slice(2, 2, &[c(a), c(o), c(o), c(b)])
        })
        .collect();
    let h1: Vec<Mat> = (0..np)
        .map(|p| {
            let x = g.coords(p);
            let s = 0.3 + 0.1 * x[1].cos();
            Mat::from_row_slice(2, 2, &[c(s), c(0.02), c(0.02), c(0.2)])
        })
        .collect();
    let h2 = vec![Mat::from_row_slice(2, 2, &[c(0.1), c(0.0), c(0.0), c(-0.05)])];
    MetricFamily::from_coeffs(g, taylor_order, &[h0, h1, h2], "wavy").unwrap()
}

#[test]
fn series_inverse_and_exp() {
    let f = TMat::from_fn(1, |_, _| TField::real_series(&[1.0, 1.0, 0.0, 0.0, 0.0]));
    let inv = f.inverse();
    for n in 0..5 {
        let expect = if n % 2 == 0 { 1.0 } else { -1.0 };
        assert!((inv.get(0, 0).c[n][0].re - expect).abs() < 1e-15);
    }
    let e = TField::real_series(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).exp0();
    let mut fact = 1.0;
    for n in 0..6 {
        if n > 0 {
            fact *= n as f64;
        }
        assert!((e.c[n][0].re - 1.0 / fact).abs() < 1e-15);
    }
}

#[test]
fn leibniz_composition() {
    let g = grid(1, 16);
    let f = TField { c: vec![(0..16).map(|p| c(g.coords(p)[0].sin())).collect()] };
    let mult = DiffOp::multiplication(1, 1, |_, _| Some(f.clone()));
    let dx = DiffOp::partial(1, 1, 1);
    let prod = dx.compose(&mult, &g);
    let zero = prod.term([0; 4]).unwrap()[&(0, 0)].c[0].clone();
    for (p, z) in zero.iter().enumerate() {
        assert!((z.re - g.coords(p)[0].cos()).abs() < 1e-13);
    }
    let first = &prod.term([0, 1, 0, 0]).unwrap()[&(0, 0)];
    assert_eq!(first, &f);
}

#[test]
fn r_tensor_presets() {
    let g = grid(3, 4);
    let ds = MetricFamily::de_sitter(&g, 0.7, 6).unwrap();
    let r = ds.r_series();
    for n in 0..=6 {
        let m = r.coeff_at(n, 0);
        let expect = if n == 0 { 0.7 } else { 0.0 };
        assert!((m - linalg::eye(3) * c(expect)).iter().all(|z| z.norm() < 1e-13), "order {n}");
    }
    let lin = MetricFamily::conformally_flat(&g, 3, &[1.0, 1.0], "linear").unwrap();
    let r0 = lin.r_series().coeff_at(0, 0);
    assert!((r0 - linalg::eye(3) * c(0.5)).iter().all(|z| z.norm() < 1e-15));
    let flat = MetricFamily::static_flat(&g, 4).unwrap();
    assert!(flat.r_series().max_abs() == 0.0);
    let op = r_tensor(&ds).unwrap();
    assert_eq!(op.taylor_order(), 6);
}

#[test]
fn transport_closed_form_and_invariance() {
    let g = grid(3, 4);
    let hub = 1.3;
    let ds = MetricFamily::de_sitter(&g, hub, 6).unwrap();
    let u = ds.transport_series();
    let mut term = 1.0;
    for n in 0..=6 {
        assert!((u.get(1, 1).c[n][0].re - term).abs() < 1e-12, "order {n}");
        assert!(u.get(0, 1).c[n][0].norm() < 1e-15);
        term *= -hub / (n + 1) as f64;
    }
    let gw = grid(2, 8);
    let w = wavy_metric(&gw, 6);
    let res = w.transport_invariance_residual();
    assert_eq!(res.len(), 6);
    assert!(res.iter().all(|r| *r < 1e-12), "{res:?}");
    assert!(parallel_transport(&w).is_ok());
}

#[test]
fn density_factor_matches_ode() {
    // ∂_t s = ½ tr(r) s, s(0) = 1
    let g = grid(2, 8);
    let w = wavy_metric(&g, 6);
    let s = w.density_factor();
    let half_tr = w.r_series().trace().scale(c(0.5));
    let ode = s.dt().sub(&half_tr.mul(&s));
    for n in 0..6 {
        let m = ode.c[n].iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(m < 1e-12, "order {n}: {m:e}");
    }
}

#[test]
fn christoffels_match_gaussian_closed_forms() {
    let g = grid(2, 8);
    let w = wavy_metric(&g, 4);
    let st = Spacetime::new(&w);
    let hdot = w.h.dt();
    let r = w.r_series();
    for i in 0..2 {
        for j in 0..2 {
            let a = st.christoffel(0, i + 1, j + 1).sub(&hdot.get(i, j).scale(c(0.5)));
            assert!(a.max_abs() < 1e-13);
            // Γ^i_{0j} = r_j^i, the (j, i) entry of r as a matrix on covector columns
            let b = st.christoffel(i + 1, 0, j + 1).sub(r.get(j, i));
            assert!(b.max_abs() < 1e-12, "{}", b.max_abs());
        }
    }
    assert!(st.christoffel(0, 0, 0).is_zero());
}

#[test]
fn de_sitter_curvature() {
    let g = grid(3, 4);
    let hub = 1.0;
    let ds = MetricFamily::de_sitter(&g, hub, 6).unwrap();
    let st = Spacetime::new(&ds);
    assert_eq!(st.commutator_leak, 0.0);
    let ric = st.ricci();
    let lam = 3.0 * hub * hub;
    for a in 0..4 {
        for b in 0..4 {
            let diff = ric[a * 4 + b].sub(&st.g[a * 4 + b].scale(c(lam)));
            assert!(diff.truncate(6).max_abs() < 1e-10, "Ric[{a}{b}] {}", diff.max_abs());
        }
    }
    // Riem(g) = −Ric
    let riem = st.riem_op();
    let coef = riem.term([0; 4]).unwrap();
    for (ab, ric_ab) in ric.iter().enumerate().take(16) {
        let mut acc = TField::zero(st.len);
        for cd in 0..16 {
            if let Some(v) = coef.get(&(ab, cd)) {
                acc.add_assign(&v.mul(&st.g[cd]));
            }
        }
        let diff = acc.add(ric_ab);
        assert!(diff.truncate(6).max_abs() < 1e-10);
    }
}

#[test]
fn static_flat_reduced_ops() {
    let g = grid(2, 8);
    let flat = MetricFamily::static_flat(&g, 4).unwrap();
    let ops = build_reduced_ops(&flat, 0.0).unwrap();
    for j in 0..g.points() {
        let k2 = g.k2(j);
        let b1 = ops.a1.coeffs[0].mode_block(j);
        assert!((b1 - linalg::eye(3) * c(k2)).iter().all(|z| z.norm() < 1e-12));
        let b2 = ops.a2.coeffs[0].mode_block(j);
        assert!((b2 - linalg::eye(6) * c(k2)).iter().all(|z| z.norm() < 1e-12));
        for n in 1..=4 {
            assert!(ops.a1.coeffs[n].mode_block(j).iter().all(|z| z.norm() < 1e-14));
            assert!(ops.d0.coeffs[n].mode_block(j).iter().all(|z| z.norm() < 1e-14));
            assert!(ops.d1.coeffs[n].mode_block(j).iter().all(|z| z.norm() < 1e-14));
        }
    }
    let rep = gauge_residuals(&ops.a1, &ops.a2, &ops.d0, &ops.d1);
    for r in &rep.identities {
        assert!(r.absolute.iter().all(|v| *v <= 1e-12), "{}: {:?}", r.name, r.absolute);
    }
}

#[test]
fn de_sitter_gauge_identities() {
    let g = grid(3, 4);
    let ds = MetricFamily::de_sitter(&g, 1.0, 6).unwrap();
    let geo = ReducedGeometry::new(&ds, Model::Gravity { lambda: 3.0 }).unwrap();
    assert!(geo.leading_residual < 1e-12, "{}", geo.leading_residual);
    assert!(geo.first_order_residual < 1e-12, "{}", geo.first_order_residual);
    let ops = reduced_ops_from(&geo, 6).unwrap();
    let rep = gauge_residuals(&ops.a1, &ops.a2, &ops.d0, &ops.d1);
    assert_eq!(rep.order, 4);
    for r in &rep.identities {
        assert!(r.max_relative <= 1e-8, "{}: {:?}", r.name, r.relative);
    }
    let st = spacetime_gauge_residuals(geo.gravity.as_ref().unwrap(), &g, 4);
    for r in &st {
        assert!(r.max_relative <= 1e-8, "{}: {:?}", r.name, r.relative);
    }
}

#[test]
fn non_einstein_control_breaks_identity() {
    let g = grid(3, 4);
    let m = MetricFamily::conformally_flat(&g, 6, &[1.0, 0.0, 1.0], "non-einstein").unwrap();
    let ops = build_reduced_ops(&m, 0.0).unwrap();
    let rep = gauge_residuals(&ops.a1, &ops.a2, &ops.d0, &ops.d1);
    let iii = rep.get("zeroth_order").unwrap();
    assert!(iii.max_relative >= 1e-3, "{:?}", iii.relative);
}

#[test]
fn reduced_ops_are_tau_self_adjoint() {
    let g = grid(3, 4);
    let ds = MetricFamily::de_sitter(&g, 1.0, 4).unwrap();
    let ops = build_reduced_ops(&ds, 3.0).unwrap();
    for (a, tau) in [(&ops.a1, &ops.tau1), (&ops.a2, &ops.tau2)] {
        let t = linalg::diag_real(tau);
        for n in 0..=4 {
            for j in 0..g.points() {
                let b = a.coeffs[n].mode_block(j);
                let star = &t * b.adjoint() * &t;
                assert!((star - b).iter().all(|z| z.norm() < 1e-10));
            }
        }
    }
}

#[test]
fn wavy_metric_reduction_is_self_adjoint() {
    let g = grid(2, 16);
    let w = wavy_metric(&g, 3);
    let geo = ReducedGeometry::new(&w, Model::Gravity { lambda: 0.0 }).unwrap();
    let a = geo.a_hat(0).to_operator(0, &g);
    let low = |j: usize| g.kabs(j) < 2.5;
    let a = a.restrict_modes(low);
    let t = tau_operator(&g, &Bundle::Covector.tau(2));
    let star = t.compose(&a.adjoint_h()).compose(&t);
    let rel = star.dist(&a) / a.op_norm();
    assert!(rel < 1e-8, "{rel:e}");
}

#[test]
fn dense_realization_matches_symbol_on_constant_coefficients() {
    let g = grid(2, 6);
    let ds = MetricFamily::de_sitter(&g, 0.5, 2).unwrap();
    let geo = ReducedGeometry::new(&ds, Model::Gravity { lambda: 0.75 }).unwrap();
    let op = geo.a_hat(0);
    let modal = op.to_operator(1, &g);
    // force the dense path through a spatially varying but zero perturbation
    let mut wavy = op.clone();
    for c in wavy.terms.values_mut() {
        for f in c.values_mut() {
            for v in f.c.iter_mut() {
                if v.len() == 1 {
                    *v = vec![v[0]; g.points()];
                }
            }
        }
    }
    assert!(!wavy.is_x_constant());
    let dense = wavy.to_operator(1, &g);
    assert!(dense.dist(&modal.densified()) < 1e-12);
}

#[test]
fn constraint_checker() {
    let g = grid(3, 4);
    let hub = 0.8;
    let id = vec![linalg::eye(3)];
    let k = vec![linalg::eye(3) * c(hub)];
    let r = constraint_check(&g, &id, &k, 3.0 * hub * hub).unwrap();
    assert!(r.hamiltonian <= 1e-12 && r.momentum <= 1e-12);
    let z = vec![linalg::zeros(3, 3)];
    let r = constraint_check(&g, &id, &z, 0.0).unwrap();
    assert_eq!((r.hamiltonian, r.momentum), (0.0, 0.0));
    let r = constraint_check(&g, &id, &k, 0.0).unwrap();
    assert!((r.hamiltonian - 6.0 * hub * hub).abs() <= 1e-10);
}

#[test]
fn scalar_curvature_conformally_flat() {
    // h = e^{2φ} δ: Scal = e^{−2φ}(−2(d−1)Δφ − (d−2)(d−1)|∇φ|²)
    let g = grid(3, 16);
    let np = g.points();
    let phi = |x: &[f64]| 0.1 * x[0].cos() + 0.05 * (x[1] + x[2]).sin();
    let h: Vec<Mat> = (0..np).map(|p| linalg::eye(3) * c((2.0 * phi(&g.coords(p))).exp())).collect();
    let s = scalar_curvature(&g, &h).unwrap();
    for (p, sp) in s.iter().enumerate() {
        let x = g.coords(p);
        let lap = -0.1 * x[0].cos() - 2.0 * 0.05 * (x[1] + x[2]).sin();
        let gx = -0.1 * x[0].sin();
        let gy = 0.05 * (x[1] + x[2]).cos();
        let grad2 = gx * gx + 2.0 * gy * gy;
        let expect = (-2.0 * phi(&x)).exp() * (-4.0 * lap - 2.0 * grad2);
        assert!((sp.re - expect).abs() < 1e-9, "{} vs {expect}", sp.re);
    }
}

// Frozen from tools/desitter_golden.py (coordinate Christoffels, H = 1, Λ = 3).
#[test]
fn de_sitter_zero_mode_blocks_match_golden() {
    let g = grid(3, 4);
    let ds = MetricFamily::de_sitter(&g, 1.0, 6).unwrap();
    let geo = ReducedGeometry::new(&ds, Model::Gravity { lambda: 3.0 }).unwrap();
    let k0 = [0.0; 3];
    let mut a1 = linalg::zeros(4, 4);
    for (i, v) in [-8.25, -6.25, -6.25, -6.25].iter().enumerate() {
        a1[(i, i)] = C64::new(*v, 0.0);
    }
    let mut a2 = linalg::zeros(10, 10);
    let diag = [-8.25, -6.25, -6.25, -6.25, -4.25, -2.25, -2.25, -4.25, -2.25, -4.25];
    for (i, v) in diag.iter().enumerate() {
        a2[(i, i)] = C64::new(*v, 0.0);
    }
    for (i, j) in [(4, 7), (4, 9), (7, 9)] {
        a2[(i, j)] = C64::new(-2.0, 0.0);
        a2[(j, i)] = C64::new(-2.0, 0.0);
    }
    for n in 0..=4 {
        let s1 = geo.a_hat(0).symbol(n, &k0);
        let s2 = geo.a_hat(1).symbol(n, &k0);
        let (e1, e2) = if n == 0 { (a1.clone(), a2.clone()) } else { (linalg::zeros(4, 4), linalg::zeros(10, 10)) };
        assert!(linalg::max_abs(&(s1 - e1)) < 1e-10, "a1 order {n}");
        assert!(linalg::max_abs(&(s2 - e2)) < 1e-10, "a2 order {n}");
    }
}
