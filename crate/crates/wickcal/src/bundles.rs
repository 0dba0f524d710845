//! Bundle slots `V₁ = (w_t, w_Σ)` and `V₂ = (u_tt, u_tΣ, u_ΣΣ)`, their Hermitian forms,
//! trace reversal, and the charges acting on Cauchy data.
//!
//! Reduced operators live in the orthonormal packed frame, where the unphysical form is
//! `(u|τv)` for the flat pairing and `τ` is diagonal. Symmetric tensors are packed in
//! upper-triangle row-major order with weight `√2` on the diagonal and `2` off it, so the
//! flat pairing of packed vectors is `(u|u)_{V₂} = 2 tr(u* g⁻¹ u g⁻¹)`.

use serde::Serialize;

use crate::geometry::{packed_dim, packed_index, Bundle};
use crate::linalg::{self, Mat, C64};
use crate::spectral_core::{DenseOperator, GridSpec, SectionField};
use crate::{Error, Result};

/// `w = w_t dt + w_Σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle1Section {
    pub w_t: SectionField,
    pub w_sigma: SectionField,
}

impl Bundle1Section {
    pub fn new(w_t: SectionField, w_sigma: SectionField) -> Result<Self> {
        if w_t.grid != w_sigma.grid {
            return Err(Error::Invalid("components live on different grids".into()));
        }
        if w_t.fiber_dim != 1 || w_sigma.fiber_dim != w_t.grid.dim {
            return Err(Error::Invalid("expected scalar and covector components".into()));
        }
        Ok(Self { w_t, w_sigma })
    }
}

/// `u ↦ (u_tt, u_tΣ, u_ΣΣ)` with `u_ΣΣ` packed (upper triangle, row-major, unweighted).
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle2Section {
    pub u_tt: SectionField,
    pub u_tsigma: SectionField,
    pub u_sigmasigma: SectionField,
}

impl Bundle2Section {
    pub fn new(u_tt: SectionField, u_tsigma: SectionField, u_sigmasigma: SectionField) -> Result<Self> {
        let g = &u_tt.grid;
        if &u_tsigma.grid != g || &u_sigmasigma.grid != g {
            return Err(Error::Invalid("components live on different grids".into()));
        }
        let d = g.dim;
        if u_tt.fiber_dim != 1 || u_tsigma.fiber_dim != d || u_sigmasigma.fiber_dim != packed_dim(d) {
            return Err(Error::Invalid(format!(
                "expected fibers (1, {d}, {}), got ({}, {}, {})",
                packed_dim(d),
                u_tt.fiber_dim,
                u_tsigma.fiber_dim,
                u_sigmasigma.fiber_dim
            )));
        }
        Ok(Self { u_tt, u_tsigma, u_sigmasigma })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        let d = grid.dim;
        Self {
            u_tt: SectionField::zeros(grid, 1),
            u_tsigma: SectionField::zeros(grid, d),
            u_sigmasigma: SectionField::zeros(grid, packed_dim(d)),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.u_tt.grid
    }

    /// Full spacetime tensor `u_ab` at one point.
    pub fn tensor_at(&self, p: usize) -> Mat {
        let d = self.grid().dim;
        let mut m = Mat::zeros(d + 1, d + 1);
        m[(0, 0)] = self.u_tt.at(p, 0);
        for i in 0..d {
            m[(0, i + 1)] = self.u_tsigma.at(p, i);
            m[(i + 1, 0)] = self.u_tsigma.at(p, i);
            for j in i..d {
                let v = self.u_sigmasigma.at(p, packed_index(d, i, j));
                m[(i + 1, j + 1)] = v;
                m[(j + 1, i + 1)] = v;
            }
        }
        m
    }

    pub fn from_tensors(grid: &GridSpec, tensors: &[Mat]) -> Result<Self> {
        let d = grid.dim;
        if tensors.len() != grid.points() {
            return Err(Error::Invalid("one tensor per grid point expected".into()));
        }
        let mut out = Self::zeros(grid);
        for (p, m) in tensors.iter().enumerate() {
            if m.shape() != (d + 1, d + 1) {
                return Err(Error::Invalid("tensor has wrong shape".into()));
            }
            if linalg::max_abs(&(m - m.transpose())) > 1e-14 * linalg::max_abs(m).max(1.0) {
                return Err(Error::Invalid("tensor is not symmetric".into()));
            }
            out.u_tt.values[p] = m[(0, 0)];
            for i in 0..d {
                out.u_tsigma.values[p * d + i] = m[(0, i + 1)];
                for j in i..d {
                    out.u_sigmasigma.values[p * packed_dim(d) + packed_index(d, i, j)] = m[(i + 1, j + 1)];
                }
            }
        }
        Ok(out)
    }
}

fn check_h0(grid: &GridSpec, h0: &[Mat]) -> Result<Vec<Mat>> {
    let d = grid.dim;
    let np = grid.points();
    let expanded = match h0.len() {
        1 => vec![h0[0].clone(); np],
        n if n == np => h0.to_vec(),
        n => return Err(Error::Invalid(format!("h0 has {n} samples"))),
    };
    for m in &expanded {
        if m.shape() != (d, d) || linalg::min_herm_eig(m) <= 0.0 {
            return Err(Error::Invalid("h0 is not positive definite".into()));
        }
    }
    Ok(expanded)
}

/// `∫ |h₀|^{1/2} (ū_tt v_tt − 2 ū_tΣ·h₀⁻¹v_tΣ + ū_ΣΣ·(h₀^{⊗2})⁻¹v_ΣΣ) dx`, i.e. the
/// `g^{⊗2}` pairing at `Σ`; the `V₂` form is twice this value.
pub fn hermitian_form_v2(u: &Bundle2Section, v: &Bundle2Section, h0: &[Mat]) -> Result<C64> {
    if u.grid() != v.grid() {
        return Err(Error::Invalid("sections live on different grids".into()));
    }
    let grid = u.grid();
    let h0 = check_h0(grid, h0)?;
    let d = grid.dim;
    let mut acc = C64::new(0.0, 0.0);
    for (p, h) in h0.iter().enumerate() {
        let hinv = linalg::inverse(h)?;
        let vol = h.determinant().re.sqrt();
        let mut s = u.u_tt.at(p, 0).conj() * v.u_tt.at(p, 0);
        for i in 0..d {
            for j in 0..d {
                s -= 2.0 * u.u_tsigma.at(p, i).conj() * hinv[(i, j)] * v.u_tsigma.at(p, j);
            }
        }
        let uu = u.tensor_at(p);
        let vv = v.tensor_at(p);
        let us = uu.view((1, 1), (d, d)).adjoint();
        let vs = vv.view((1, 1), (d, d)).into_owned();
        s += (us * &hinv * vs * &hinv).trace();
        acc += s * vol;
    }
    Ok(acc * grid.cell_volume())
}

/// `(Iu)_ab = u_ab − ½ tr_g(u) g_ab` for `g₀ = diag(−1, h₀)`.
pub fn trace_reversal(u: &Bundle2Section, h0: &[Mat]) -> Result<Bundle2Section> {
    let grid = u.grid();
    let h0 = check_h0(grid, h0)?;
    let d = grid.dim;
    let tensors: Vec<Mat> = h0
        .iter()
        .enumerate()
        .map(|(p, h)| {
            let mut g = Mat::zeros(d + 1, d + 1);
            g[(0, 0)] = linalg::c(-1.0);
            g.view_mut((1, 1), (d, d)).copy_from(h);
            let ginv = linalg::inverse(&g).expect("Lorentzian metric is invertible");
            let m = u.tensor_at(p);
            let tr = (&ginv * &m).trace();
            m - g * (tr * 0.5)
        })
        .collect();
    Bundle2Section::from_tensors(grid, &tensors)
}

/// Eigenvalue of trace reversal on `g`: `1 − (d+1)/2`, equal to `−1` only when `d = 3`.
pub fn trace_reversal_eigenvalue(d: usize) -> f64 {
    1.0 - (d as f64 + 1.0) / 2.0
}

/// Trace reversal `I_i` on the orthonormal packed fiber (identity for scalars and covectors).
pub fn trace_reversal_matrix(bundle: Bundle, d: usize) -> Mat {
    match bundle {
        Bundle::Scalar | Bundle::Covector => linalg::eye(bundle.fiber(d)),
        Bundle::Sym2 => {
            let n = d + 1;
            let mut gamma = Mat::zeros(packed_dim(n), 1);
            for a in 0..n {
                gamma[(packed_index(n, a, a), 0)] = linalg::c(if a == 0 { -1.0 } else { 1.0 });
            }
            linalg::eye(packed_dim(n)) - &gamma * gamma.transpose() * linalg::c(0.5)
        }
    }
}

/// Which charge a [`ChargeForm`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ChargeKind {
    Lorentzian,
    Physical,
    EuclideanQ,
    EuclideanSigma,
}

/// A form on Cauchy data, fiber-constant over the grid.
#[derive(Clone, Debug)]
pub struct ChargeForm {
    pub kind: ChargeKind,
    pub fiber: Mat,
    pub matrix: DenseOperator,
}

impl ChargeForm {
    fn new(kind: ChargeKind, grid: &GridSpec, fiber: Mat) -> Self {
        let matrix = DenseOperator::fiber_constant(grid, &fiber);
        Self { kind, fiber, matrix }
    }

    /// `⟨f, q g⟩` for the flat pairing.
    pub fn eval(&self, f: &SectionField, g: &SectionField) -> C64 {
        f.inner(&self.matrix.apply(g))
    }
}

/// Charges and the twist `J₂` for one bundle on a given grid.
#[derive(Clone, Debug)]
pub struct Charges {
    pub bundle: Bundle,
    pub d: usize,
    pub tau: Vec<f64>,
    pub trace_reversal: Mat,
    /// `false` when `I² ≠ 1` (spatial dimension other than three on `V₂`).
    pub involutive: bool,
    pub q: ChargeForm,
    pub q_phys: ChargeForm,
    pub q_tilde: ChargeForm,
    pub sigma_tilde: ChargeForm,
    /// `diag(Iτ, 1)`, present for `V₂`.
    pub j2: Option<Mat>,
    pub identity_residuals: Vec<(String, f64)>,
}

impl Charges {
    pub fn fiber(&self) -> usize {
        self.tau.len()
    }

    /// `I_Σ = I ⊗ 1` on Cauchy data.
    pub fn i_sigma(&self, grid: &GridSpec) -> DenseOperator {
        let z = Mat::zeros(self.fiber(), self.fiber());
        DenseOperator::fiber_constant(grid, &linalg::block2(&self.trace_reversal, &z, &z, &self.trace_reversal))
    }

    pub fn j2_operator(&self, grid: &GridSpec) -> Option<DenseOperator> {
        self.j2.as_ref().map(|j| DenseOperator::fiber_constant(grid, j))
    }
}

fn anti_diag(a: &Mat, b: &Mat) -> Mat {
    let z = Mat::zeros(a.nrows(), a.ncols());
    linalg::block2(&z, a, b, &z)
}

/// Builds `q`, `q_phys = q ∘ I_Σ`, `q̃`, `σ̃` and (for `V₂`) `J₂`, checking their algebra.
pub fn build_charges(grid: &GridSpec, bundle: Bundle) -> Result<Charges> {
    let d = grid.dim;
    let f = bundle.fiber(d);
    let tau = bundle.tau(d);
    let t = linalg::diag_real(&tau);
    let i_mat = trace_reversal_matrix(bundle, d);
    let one = linalg::eye(f);
    let q = anti_diag(&t, &t);
    let ti = &t * &i_mat;
    let q_phys = anti_diag(&ti, &ti);
    let q_tilde = anti_diag(&one, &one);
    let sigma_tilde = anti_diag(&(-&one), &one);

    let tol = 1e-14;
    let mut res = Vec::new();
    let herm = |m: &Mat| linalg::max_abs(&(m - m.adjoint()));
    res.push(("q hermitian".to_string(), herm(&q)));
    res.push(("q_phys hermitian".to_string(), herm(&q_phys)));
    res.push(("sigma anti-hermitian".to_string(), linalg::max_abs(&(&sigma_tilde + sigma_tilde.adjoint()))));
    for (name, v) in &res {
        if *v > tol {
            return Err(Error::Identity(format!("{name}: defect {v:.3e}")));
        }
    }
    if linalg::condition_number(&q_phys) > 1e12 {
        return Err(Error::Identity("q_phys is not invertible".into()));
    }
    let involution = linalg::max_abs(&(&i_mat * &i_mat - &one));
    res.push(("I^2 - 1".to_string(), involution));
    let involutive = involution <= tol;

    let j2 = if bundle == Bundle::Sym2 {
        let z = Mat::zeros(f, f);
        let j = linalg::block2(&(&i_mat * &t), &z, &z, &one);
        if involutive {
            let checks = [
                ("J2 hermitian", herm(&j)),
                ("J2^2 - 1", linalg::max_abs(&(&j * &j - linalg::eye(2 * f)))),
                ("J2 q_phys J2 - q_tilde", linalg::max_abs(&(&j * &q_phys * &j - &q_tilde))),
            ];
            for (name, v) in checks {
                if v > tol {
                    return Err(Error::Identity(format!("{name}: defect {v:.3e}")));
                }
                res.push((name.to_string(), v));
            }
        }
        Some(j)
    } else {
        None
    };

    Ok(Charges {
        bundle,
        d,
        tau,
        trace_reversal: i_mat,
        involutive,
        q: ChargeForm::new(ChargeKind::Lorentzian, grid, q),
        q_phys: ChargeForm::new(ChargeKind::Physical, grid, q_phys),
        q_tilde: ChargeForm::new(ChargeKind::EuclideanQ, grid, q_tilde),
        sigma_tilde: ChargeForm::new(ChargeKind::EuclideanSigma, grid, sigma_tilde),
        j2,
        identity_residuals: res,
    })
}

/// `A^† = q⁻¹ A^H q`.
pub fn symplectic_adjoint(a: &DenseOperator, q: &ChargeForm) -> Result<DenseOperator> {
    let qinv = linalg::inverse(&q.fiber).map_err(|_| Error::Singular("charge form".into()))?;
    let qi = DenseOperator::fiber_constant(&a.grid, &qinv);
    Ok(qi.compose(&a.adjoint_h()).compose(&q.matrix))
}
