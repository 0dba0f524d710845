use super::tfield::{TField, TMat};
use crate::linalg::{Mat, C64};
use crate::spectral_core::GridSpec;
use crate::{Error, Result};

/// Sup norms of the Hamiltonian and momentum constraint residuals.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ConstraintResidual {
    pub hamiltonian: f64,
    pub momentum: f64,
}

fn field(grid: &GridSpec, d: usize, samples: &[Mat]) -> Result<TMat> {
    if samples.len() != 1 && samples.len() != grid.points() {
        return Err(Error::Invalid(format!("tensor field has {} samples", samples.len())));
    }
    if samples.iter().any(|m| m.shape() != (d, d)) {
        return Err(Error::Invalid(format!("tensor field is not {d}x{d}")));
    }
    Ok(TMat::from_fn(d, |i, j| {
        let v: Vec<C64> = samples.iter().map(|m| m[(i, j)]).collect();
        let c0 = if v.iter().all(|z| *z == v[0]) { vec![v[0]] } else { v };
        TField { c: vec![c0] }
    }))
}

/// Spatial Christoffels `Γ^k_{ij}` at `(k * d + i) * d + j`.
fn christoffels(h: &TMat, hinv: &TMat, grid: &GridSpec) -> Vec<TField> {
    let d = h.n;
    let dh: Vec<TField> = (0..d)
        .flat_map(|c| (0..d * d).map(move |ab| (c, ab)))
        .map(|(c, ab)| h.e[ab].dx(c, grid))
        .collect();
    let at = |c: usize, a: usize, b: usize| &dh[(c * d + a) * d + b];
    let mut out = vec![TField::zero(1); d * d * d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut acc = TField::zero(1);
                for l in 0..d {
                    let s = at(i, l, j).add(at(j, l, i)).sub(at(l, i, j));
                    acc.add_assign(&hinv.get(k, l).mul(&s));
                }
                out[(k * d + i) * d + j] = acc.scale(C64::new(0.5, 0.0));
            }
        }
    }
    out
}

/// Scalar curvature `h^{ij}(∂_k Γ^k_ij − ∂_j Γ^k_ik + Γ^k_kl Γ^l_ij − Γ^k_jl Γ^l_ik)`.
pub fn scalar_curvature(grid: &GridSpec, h0: &[Mat]) -> Result<Vec<C64>> {
    let d = grid.dim;
    let h = field(grid, d, h0)?;
    let hinv = h.inverse();
    let gm = christoffels(&h, &hinv, grid);
    let g = |k: usize, i: usize, j: usize| &gm[(k * d + i) * d + j];
    let mut scal = TField::zero(1);
    for i in 0..d {
        for j in 0..d {
            let mut ric = TField::zero(1);
            for k in 0..d {
                ric.add_assign(&g(k, i, j).dx(k, grid));
                ric = ric.sub(&g(k, i, k).dx(j, grid));
                for l in 0..d {
                    ric.add_assign(&g(k, k, l).mul(g(l, i, j)));
                    ric = ric.sub(&g(k, j, l).mul(g(l, i, k)));
                }
            }
            scal.add_assign(&hinv.get(i, j).mul(&ric));
        }
    }
    Ok(expand(&scal.c[0], grid.points()))
}

fn expand(v: &[C64], np: usize) -> Vec<C64> {
    if v.len() == 1 {
        vec![v[0]; np]
    } else {
        v.to_vec()
    }
}

/// Hamiltonian `Scal(h) − tr((kh⁻¹)²) + tr(kh⁻¹)² − 2Λ` and momentum
/// `div_h(k − tr(kh⁻¹) h)` constraint residuals as sup norms over the grid.
pub fn constraint_check(grid: &GridSpec, h0: &[Mat], k0: &[Mat], lambda: f64) -> Result<ConstraintResidual> {
    let d = grid.dim;
    for m in h0 {
        if crate::linalg::min_herm_eig(m) <= 0.0 {
            return Err(Error::Invalid("h0 is not positive definite".into()));
        }
    }
    let h = field(grid, d, h0)?;
    let k = field(grid, d, k0)?;
    let hinv = h.inverse();
    let kh = k.mul(&hinv);
    let tr = kh.trace();
    let tr2 = kh.mul(&kh).trace();
    let scal = scalar_curvature(grid, h0)?;
    let np = grid.points();
    let ham_field = tr.mul(&tr).sub(&tr2);
    let hv = expand(&ham_field.c[0], np);
    let hamiltonian = (0..np)
        .map(|p| (scal[p] + hv[p] - C64::new(2.0 * lambda, 0.0)).norm())
        .fold(0.0, f64::max);

    // T = k − tr(kh⁻¹) h; (div T)_j = h^{il}(∂_l T_ij − Γ^m_li T_mj − Γ^m_lj T_im)
    let t = TMat::from_fn(d, |i, j| k.get(i, j).sub(&tr.mul(h.get(i, j))));
    let gm = christoffels(&h, &hinv, grid);
    let g = |m: usize, a: usize, b: usize| &gm[(m * d + a) * d + b];
    let mut momentum: f64 = 0.0;
    for j in 0..d {
        let mut acc = TField::zero(1);
        for i in 0..d {
            for l in 0..d {
                let mut cov = t.get(i, j).dx(l, grid);
                for m in 0..d {
                    cov = cov.sub(&g(m, l, i).mul(t.get(m, j)));
                    cov = cov.sub(&g(m, l, j).mul(t.get(i, m)));
                }
                acc.add_assign(&hinv.get(i, l).mul(&cov));
            }
        }
        momentum = momentum.max(acc.max_abs());
    }
    Ok(ConstraintResidual { hamiltonian, momentum })
}
