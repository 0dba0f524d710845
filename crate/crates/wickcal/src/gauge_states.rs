//! Gauge operators on Cauchy data (`T_Σ`, `I_Σ`, `K_Σ`, `K_Σ^†`), gauge intertwining of
//! projector pairs, the boundary gauge fix, the synchronous decomposition, positivity of
//! the Calderón projectors on `Ker K_Σ^†`, and the aggregate state-condition report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bundles::Charges;
use crate::euclidean::{dtn_map, poisson, wick_rotate, wick_rotate_gauge, EllipticProblem, NodalField, Side};
use crate::factorization::ProjectorResiduals;
use crate::geometry::packed_index;
use crate::linalg::{self, Mat, C64, I};
use crate::spectral_core::{
    smoothing_order_profile_on, CauchyData, DecayTable, DenseOperator, GridSpec, SectionField, TimeAnalyticOperator,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct SurfaceResiduals {
    /// `‖K_Σ^† K_Σ‖`.
    pub kdag_k: f64,
    /// `‖T_Σ − T̃_Σ‖`.
    pub t_vs_t_tilde: f64,
    /// `‖q₁K_Σ^† − K_Σ^H q_{2,phys}‖`.
    pub q_adjoint: f64,
    /// `‖I_Σ² − 1‖`.
    pub i_squared: f64,
    /// Scale `‖K_Σ‖` for relative reading.
    pub k_norm: f64,
}

/// Cauchy-surface gauge operators for `K = I ∘ d`.
#[derive(Clone, Debug)]
pub struct GaugeSurfaceOps {
    pub t_sigma: DenseOperator,
    pub t_tilde_sigma: DenseOperator,
    pub i_sigma: DenseOperator,
    pub k_sigma: DenseOperator,
    pub k_dagger: DenseOperator,
    /// `d̃₀(0)` and `d̃₁(0)`.
    pub d0_tilde: DenseOperator,
    pub d1_tilde: DenseOperator,
    pub trace_reversal: Mat,
    pub dim: usize,
    pub residuals: SurfaceResiduals,
}

fn anti_diag_tau(grid: &GridSpec, tau: &[f64]) -> DenseOperator {
    let t = linalg::diag_real(tau);
    let z = Mat::zeros(tau.len(), tau.len());
    DenseOperator::fiber_constant(grid, &linalg::block2(&z, &t, &t, &z))
}

/// Assembles `T_Σ = [[d₁, i d₀], [(i/2)(d₀a₁ + a₂d₀), d₁]]` at `t = 0`, its Wick-rotated
/// counterpart `T̃_Σ = [[d̃₁, −d̃₀], [−½(d̃₀ã₁ + ã₂d̃₀), d̃₁]]`, `K_Σ = I_Σ T_Σ` and
/// `K_Σ^† = q₁⁻¹ K_Σ^H q₂ I_Σ` (adjoint for the physical charges). With `tol`, a `K^†K` residual above it is an error.
pub fn build_gauge_surface_ops(
    a1: &TimeAnalyticOperator,
    a2: &TimeAnalyticOperator,
    d0: &TimeAnalyticOperator,
    d1: &TimeAnalyticOperator,
    ch1: &Charges,
    ch2: &Charges,
    tol: Option<f64>,
) -> Result<GaugeSurfaceOps> {
    let grid = a1.at0().grid.clone();
    let (f1, f2) = (ch1.fiber(), ch2.fiber());
    if a1.fiber_in() != f1 || a2.fiber_in() != f2 || d0.fiber_in() != f1 || d0.fiber_out() != f2 {
        return Err(Error::Invalid("reduced operators do not match the charge fibers".into()));
    }
    if [a2, d0, d1].iter().any(|x| x.at0().grid != grid) {
        return Err(Error::Invalid("reduced operators live on different grids".into()));
    }
    let half_i = C64::new(0.0, 0.5);
    let (a10, a20, d00, d10) = (a1.at0(), a2.at0(), d0.at0(), d1.at0());
    let lower = d00.compose(a10).add(&a20.compose(d00)).scale(half_i);
    let t_sigma = DenseOperator::join2(d10, &d00.scale(I), &lower, d10);

    let (at1, at2) = (wick_rotate(a1), wick_rotate(a2));
    let (dt0, dt1) = wick_rotate_gauge(d0, d1);
    let (d0t, d1t) = (dt0.at0().clone(), dt1.at0().clone());
    let lower_t = d0t.compose(at1.at0()).add(&at2.at0().compose(&d0t)).scale(linalg::c(-0.5));
    let t_tilde_sigma = DenseOperator::join2(&d1t, &d0t.scale(linalg::c(-1.0)), &lower_t, &d1t);

    let i_sigma = ch2.i_sigma(&grid);
    let k_sigma = i_sigma.compose(&t_sigma);
    let q1 = anti_diag_tau(&grid, &ch1.tau);
    let q2 = ch2.q_phys.matrix.clone();
    let q1_inv = q1.inverse()?;
    let k_dagger = q1_inv.compose(&k_sigma.adjoint_h()).compose(&q2);

    let band = |op: &DenseOperator| op.restrict_modes(|j| grid.is_band_limited(j)).op_norm();
    let residuals = SurfaceResiduals {
        kdag_k: band(&k_dagger.compose(&k_sigma)),
        t_vs_t_tilde: t_sigma.dist(&t_tilde_sigma),
        q_adjoint: q1.compose(&k_dagger).dist(&k_sigma.adjoint_h().compose(&q2)),
        i_squared: i_sigma.compose(&i_sigma).dist(&DenseOperator::identity(&grid, 2 * f2)),
        k_norm: band(&k_sigma),
    };
    if let Some(tol) = tol {
        if residuals.kdag_k > tol * residuals.k_norm.max(1.0) {
            return Err(Error::Identity(format!(
                "K†K = {:.3e} exceeds {tol:.1e}: reduced operators are inconsistent",
                residuals.kdag_k
            )));
        }
    }
    Ok(GaugeSurfaceOps {
        t_sigma,
        t_tilde_sigma,
        i_sigma,
        k_sigma,
        k_dagger,
        d0_tilde: d0t,
        d1_tilde: d1t,
        trace_reversal: ch2.trace_reversal.clone(),
        dim: ch1.d,
        residuals,
    })
}

/// Gauge intertwining defect `c₂^± K_Σ − K_Σ c₁^±` per sign.
#[derive(Clone, Debug, Serialize)]
pub struct IntertwineReport {
    pub plus: DecayTable,
    pub minus: DecayTable,
    /// Largest per-mode raw norm over both signs.
    pub max_raw: f64,
}

pub fn gauge_intertwine_residual(
    c1: (&DenseOperator, &DenseOperator),
    c2: (&DenseOperator, &DenseOperator),
    k_sigma: &DenseOperator,
    m_list: &[i32],
) -> Result<IntertwineReport> {
    if c1.0.fiber_in != k_sigma.fiber_in || c2.0.fiber_in != k_sigma.fiber_out {
        return Err(Error::Invalid("projector fibers do not match K_Σ".into()));
    }
    let g = k_sigma.grid.clone();
    let defect = |a: &DenseOperator, b: &DenseOperator| {
        let r = b.compose(k_sigma).sub(&k_sigma.compose(a));
        smoothing_order_profile_on(&r, m_list, |j| g.is_band_limited(j))
    };
    let plus = defect(c1.0, c2.0);
    let minus = defect(c1.1, c2.1);
    let max_raw = plus.max_raw().max(minus.max_raw());
    Ok(IntertwineReport { plus, minus, max_raw })
}

/// Constraint rows selecting `v_{sΣ}` and the trace `γᵀv` of a packed `V₂` fiber vector.
fn gauge_conditions(d: usize) -> Mat {
    let n = d + 1;
    let f2 = crate::geometry::packed_dim(n);
    let mut p = Mat::zeros(n, f2);
    for b in 1..n {
        p[(b - 1, packed_index(n, 0, b))] = linalg::c(1.0);
    }
    for a in 0..n {
        p[(d, packed_index(n, a, a))] = linalg::c(if a == 0 { -1.0 } else { 1.0 });
    }
    p
}

/// Boundary gauge fix on `Ω⁺`: operators for `H y = M₀⁻¹ P u|_Σ` with
/// `H = N_{Ω⁺} + M₀⁻¹ P Ĩ d̃₁(0)`, `M₀ = −P Ĩ d̃₀(0)` and `N_{Ω⁺}y = −∂_s w(0)`.
#[derive(Clone, Debug)]
pub struct GaugeFixer {
    pub conditions: DenseOperator,
    pub n_plus: DenseOperator,
    pub h: DenseOperator,
    pub h_inv: DenseOperator,
    pub m0_inv: DenseOperator,
    /// Smallest singular value of `H` over storage blocks.
    pub sigma_min: f64,
}

impl GaugeFixer {
    pub fn new(p1: &EllipticProblem, gauge: &GaugeSurfaceOps) -> Result<Self> {
        let grid = p1.grid().clone();
        let p = gauge_conditions(gauge.dim);
        let pi = &p * &gauge.trace_reversal;
        let pi_op = DenseOperator::fiber_constant(&grid, &pi);
        let m0 = pi_op.compose(&gauge.d0_tilde).scale(linalg::c(-1.0));
        let m0_inv = m0
            .inverse()
            .map_err(|_| Error::Singular("gauge conditions do not control ∂_s w (trace reversal degenerate?)".into()))?;
        let n_plus = dtn_map(p1, Side::Plus)?;
        let h = n_plus.add(&m0_inv.compose(&pi_op).compose(&gauge.d1_tilde));
        let sigma_min = h
            .blocks()
            .par_iter()
            .map(|b| b.clone().svd(false, false).singular_values.min())
            .reduce(|| f64::INFINITY, f64::min);
        let h_inv = h
            .inverse()
            .map_err(|_| Error::Singular(format!("gauge-fix operator H, smallest singular value {sigma_min:.3e}")))?;
        Ok(Self {
            conditions: DenseOperator::fiber_constant(&grid, &p),
            n_plus,
            h,
            h_inv,
            m0_inv,
            sigma_min,
        })
    }

    /// `u|_Σ ↦ y = w|_Σ`.
    pub fn boundary_value(&self, u: &SectionField) -> SectionField {
        self.h_inv.apply(&self.m0_inv.apply(&self.conditions.apply(u)))
    }

    /// `u|_Σ ↦ h = ρ̃⁺w = (y, N₊y)` as an operator.
    pub fn cauchy_operator(&self) -> DenseOperator {
        let grid = &self.h.grid;
        let f1 = self.h.fiber_in;
        let f2 = self.conditions.fiber_in;
        let z = Mat::zeros(f1, f1);
        let e0 = DenseOperator::fiber_constant(grid, &linalg::block2(&linalg::eye(f1), &z, &z, &z).columns(0, f1).into_owned());
        let e1 = DenseOperator::fiber_constant(grid, &linalg::block2(&z, &z, &linalg::eye(f1), &z).columns(0, f1).into_owned());
        let embed = e0.add(&e1.compose(&self.n_plus));
        debug_assert_eq!(self.conditions.fiber_in, f2);
        embed.compose(&self.h_inv).compose(&self.m0_inv).compose(&self.conditions)
    }

    /// Singular values of `H(k)` divided by `⟨k⟩` at band-limited modes with `|k| ≥ kmin`.
    pub fn principal_ratios(&self, kmin: f64) -> (f64, f64) {
        let g = &self.h.grid;
        (0..g.points())
            .filter(|&j| g.is_band_limited(j) && g.kabs(j) >= kmin)
            .map(|j| {
                let jk = (1.0 + g.k2(j)).sqrt();
                let sv = self.h.mode_block(j).svd(false, false).singular_values;
                (sv.min() / jk, sv.max() / jk)
            })
            .fold((f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)))
    }
}

#[derive(Clone, Debug)]
pub struct GaugeFix {
    pub y: SectionField,
    pub w: NodalField,
    /// `h = ρ̃₁⁺ w` with `∂_s w` from the collocated solution.
    pub h: SectionField,
    pub v_trace: SectionField,
    /// `‖v_{sΣ}|_Σ‖`.
    pub residual_mixed: f64,
    /// `‖(Ĩ₂v − v)|_Σ‖`.
    pub residual_trace: f64,
}

fn d_s_at_zero(p: &EllipticProblem, w: &NodalField) -> SectionField {
    let mut acc = SectionField::zeros(&w.values[0].grid, w.values[0].fiber_dim);
    for (j, v) in w.values.iter().enumerate() {
        acc = &acc + &v.scale(p.nodes.d1[(0, j)]);
    }
    acc
}

/// Solves for `w` with `D̃₁w = 0` on `Ω⁺`, `w = 0` at `s = T`, such that `v = u − K̃w`
/// has no mixed components and is trace-reversal invariant on `Σ`.
pub fn gauge_fix_solve(
    p1: &EllipticProblem,
    gauge: &GaugeSurfaceOps,
    fixer: &GaugeFixer,
    u: &SectionField,
) -> Result<GaugeFix> {
    let f2 = gauge.trace_reversal.nrows();
    if u.fiber_dim != f2 {
        return Err(Error::Invalid(format!("boundary data has fiber {}, expected {f2}", u.fiber_dim)));
    }
    let y = fixer.boundary_value(u);
    let w = poisson(p1, Side::Plus, &y)?;
    let dw = d_s_at_zero(p1, &w);
    let h = CauchyData::new(w.values[0].clone(), dw.scale(linalg::c(-1.0))).to_section();
    let kw = gauge.d0_tilde.apply(&dw);
    let kw = &kw + &gauge.d1_tilde.apply(&w.values[0]);
    let i2 = DenseOperator::fiber_constant(&u.grid, &gauge.trace_reversal);
    let v_trace = u - &i2.apply(&kw);
    let (residual_mixed, residual_trace) = gauge_condition_residuals(gauge, &v_trace);
    Ok(GaugeFix { y, w, h, v_trace, residual_mixed, residual_trace })
}

fn gauge_condition_residuals(gauge: &GaugeSurfaceOps, v: &SectionField) -> (f64, f64) {
    let n = gauge.dim + 1;
    let f2 = v.fiber_dim;
    let np = v.grid.points();
    let mut mixed = 0.0;
    for p in 0..np {
        for b in 1..n {
            mixed += v.values[p * f2 + packed_index(n, 0, b)].norm_sqr();
        }
    }
    let i2 = DenseOperator::fiber_constant(&v.grid, &gauge.trace_reversal);
    let trace = (&i2.apply(v) - v).norm();
    ((mixed / np as f64).sqrt(), trace)
}

#[derive(Clone, Debug)]
pub struct SynchronousDecomposition {
    pub k: SectionField,
    pub h: SectionField,
    /// `‖J₂k − k‖`.
    pub residual_j2: f64,
    /// `‖c̃₂⁺f − k − K_Σ c̃₁⁺h‖`.
    pub residual_reconstruction: f64,
    /// `‖c̃₁⁺h − h‖`.
    pub residual_h_projector: f64,
}

/// `c̃₂⁺f = k + K_Σ c̃₁⁺h` with `J₂k = k`.
pub fn synchronous_decompose(
    f: &SectionField,
    c1_plus: &DenseOperator,
    c2_plus: &DenseOperator,
    gauge: &GaugeSurfaceOps,
    fixer: &GaugeFixer,
    p1: &EllipticProblem,
    j2: &DenseOperator,
) -> Result<SynchronousDecomposition> {
    let cf = c2_plus.apply(f);
    let u = CauchyData::from_section(&cf).f0;
    let fix = gauge_fix_solve(p1, gauge, fixer, &u)?;
    let k = &cf - &gauge.k_sigma.apply(&fix.h);
    let ch = c1_plus.apply(&fix.h);
    Ok(SynchronousDecomposition {
        residual_j2: (&j2.apply(&k) - &k).norm(),
        residual_reconstruction: (&(&cf - &k) - &gauge.k_sigma.apply(&ch)).norm(),
        residual_h_projector: (&ch - &fix.h).norm(),
        k,
        h: fix.h,
    })
}

/// Orthonormal band-limited slice of `Ker K_Σ^†`, grouped by Fourier mode when `K_Σ^†`
/// is translation invariant.
#[derive(Clone, Debug)]
pub struct KernelSlice {
    pub groups: Vec<(Option<usize>, Vec<SectionField>)>,
    /// Number of Cauchy-data directions tested.
    pub ambient_dim: usize,
    pub dim: usize,
    /// Largest singular value accepted as zero.
    pub cutoff: f64,
}

impl KernelSlice {
    pub fn vectors(&self) -> impl Iterator<Item = &SectionField> {
        self.groups.iter().flat_map(|(_, v)| v.iter())
    }
}

fn slice_modes(grid: &GridSpec, max_index: i64) -> Vec<usize> {
    (0..grid.points())
        .filter(|&j| grid.is_band_limited(j) && grid.mode(j).iter().all(|m| m.abs() <= max_index))
        .collect()
}

fn plane_basis(grid: &GridSpec, fiber: usize, modes: &[usize]) -> Vec<SectionField> {
    modes.iter().flat_map(|&j| (0..fiber).map(move |c| SectionField::plane_wave(grid, fiber, j, c))).collect()
}

/// Numerical null space of `K_Σ^†` on modes with `|m_i| ≤ max_index` (singular values
/// below `1e-10 · max(1, σ_max)`).
pub fn kernel_slice(k_dagger: &DenseOperator, max_index: i64) -> KernelSlice {
    let grid = k_dagger.grid.clone();
    let fin = k_dagger.fiber_in;
    let modes = slice_modes(&grid, max_index);
    let combine = |basis: &[SectionField], coef: &Mat| -> Vec<SectionField> {
        (0..coef.ncols())
            .map(|c| {
                let mut v = SectionField::zeros(&grid, fin);
                for (r, b) in basis.iter().enumerate() {
                    v = &v + &b.scale(coef[(r, c)]);
                }
                v
            })
            .collect()
    };
    let mut cutoff: f64 = 0.0;
    let groups = if k_dagger.is_modal() {
        modes
            .iter()
            .map(|&j| {
                let blk = k_dagger.mode_block(j);
                let smax = linalg::op_norm(&blk);
                let tol = 1e-10 * smax.max(1.0);
                let (ns, _) = linalg::null_space(&blk, tol);
                let basis = plane_basis(&grid, fin, &[j]);
                (Some(j), combine(&basis, &ns), tol)
            })
            .map(|(j, v, tol)| {
                cutoff = cutoff.max(tol);
                (j, v)
            })
            .collect()
    } else {
        let basis = plane_basis(&grid, fin, &modes);
        let cols: Vec<_> = basis.iter().map(|b| k_dagger.apply(b).to_vector()).collect();
        let a = Mat::from_columns(&cols) / C64::new((grid.points() as f64).sqrt(), 0.0);
        let smax = linalg::op_norm(&a);
        cutoff = 1e-10 * smax.max(1.0);
        let (ns, _) = linalg::null_space(&a, cutoff);
        vec![(None, combine(&basis, &ns))]
    };
    let dim = groups.iter().map(|(_, v): &(Option<usize>, Vec<SectionField>)| v.len()).sum();
    KernelSlice { groups, ambient_dim: modes.len() * fin, dim, cutoff }
}

fn gram(a: &[SectionField], b: &[SectionField]) -> Mat {
    Mat::from_fn(a.len(), b.len(), |i, j| a[i].inner(&b[j]))
}

fn herm(m: &Mat) -> Mat {
    (m + m.adjoint()) * linalg::c(0.5)
}

#[derive(Clone, Debug, Serialize)]
pub struct PositivityReport {
    pub kernel_dim: usize,
    pub ambient_dim: usize,
    /// `min λ(Herm ⟨f, q_phys c̃₂⁺ f⟩)` over the kernel slice.
    pub min_form: f64,
    /// `min λ` of the Euclidean energy part `⟨k̃, q̃ k̃⟩`.
    pub min_energy: f64,
    /// Operator norm of the assembled correction (form minus energy) on the slice.
    pub smoothing_bound: f64,
    /// Per-mode correction norms `(mode, |k|, norm)` when the slice is mode-resolved.
    pub bound_by_mode: Vec<(usize, f64, f64)>,
    /// `min (value + bound)` over basis vectors and seeded random combinations (unit norm).
    pub min_margin: f64,
    pub samples: usize,
    /// Negative control: `min λ(Herm ⟨f, q_phys c̃₂⁺ f⟩)` over the whole slice, kernel or not.
    pub control_min_form: f64,
    pub max_imag: f64,
    pub seed: u64,
}

/// Positivity of `q_phys c̃₂⁺` on the kernel slice, split into the Euclidean energy of
/// `k̃ = c̃₂⁺(f − K_Σ h)` and a measured correction.
pub fn positivity_report(
    c2_plus: &DenseOperator,
    q_phys: &DenseOperator,
    q_tilde: &DenseOperator,
    gauge: &GaugeSurfaceOps,
    fixer: &GaugeFixer,
    slice: &KernelSlice,
    seed: u64,
) -> Result<PositivityReport> {
    let grid = c2_plus.grid.clone();
    let f2 = c2_plus.fiber_in / 2;
    let pi0 = {
        let mut m = Mat::zeros(f2, 2 * f2);
        m.view_mut((0, 0), (f2, f2)).copy_from(&linalg::eye(f2));
        DenseOperator::fiber_constant(&grid, &m)
    };
    let g_op = fixer.cauchy_operator().compose(&pi0).compose(c2_plus);
    let one = DenseOperator::identity(&grid, 2 * f2);
    let l_op = c2_plus.compose(&one.sub(&gauge.k_sigma.compose(&g_op)));
    let form_op = q_phys.compose(c2_plus);

    let eval = |vecs: &[SectionField]| -> (Mat, Mat) {
        let qf: Vec<SectionField> = vecs.par_iter().map(|v| form_op.apply(v)).collect();
        let lf: Vec<SectionField> = vecs.par_iter().map(|v| l_op.apply(v)).collect();
        let qlf: Vec<SectionField> = lf.par_iter().map(|v| q_tilde.apply(v)).collect();
        (gram(vecs, &qf), gram(&lf, &qlf))
    };

    let mut all: Vec<SectionField> = Vec::new();
    let mut min_form = f64::INFINITY;
    let mut min_energy = f64::INFINITY;
    let mut bound_by_mode = Vec::new();
    let mut max_imag: f64 = 0.0;
    let mut blocks = Vec::new();
    for (mode, vecs) in &slice.groups {
        if vecs.is_empty() {
            continue;
        }
        let (q, e) = eval(vecs);
        let r = &herm(&q) - &herm(&e);
        if let Some(j) = mode {
            bound_by_mode.push((*j, grid.kabs(*j), linalg::op_norm(&r)));
        }
        min_form = min_form.min(linalg::min_herm_eig(&herm(&q)));
        min_energy = min_energy.min(linalg::min_herm_eig(&herm(&e)));
        max_imag = max_imag.max(q.diagonal().iter().map(|z| z.im.abs()).fold(0.0, f64::max));
        blocks.push((q, e));
        all.extend(vecs.iter().cloned());
    }
    if all.is_empty() {
        return Err(Error::Invalid("kernel slice is empty".into()));
    }
    // the slice is block diagonal for every operator involved when mode-resolved
    let smoothing_bound = if slice.groups.len() == 1 {
        let (q, e) = &blocks[0];
        linalg::op_norm(&(&herm(q) - &herm(e)))
    } else {
        bound_by_mode.iter().map(|b| b.2).fold(0.0, f64::max)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<SectionField> = all.clone();
    for _ in 0..16 {
        let mut v = SectionField::zeros(&grid, 2 * f2);
        for b in &all {
            v = &v + &b.scale(C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        }
        let n = v.norm();
        samples.push(v.scale(linalg::c(1.0 / n)));
    }
    let min_margin = samples
        .par_iter()
        .map(|f| f.inner(&form_op.apply(f)).re + smoothing_bound * f.norm().powi(2))
        .reduce(|| f64::INFINITY, f64::min);

    let control_min_form = slice
        .groups
        .iter()
        .filter_map(|(mode, _)| *mode)
        .map(|j| {
            let blk = herm(&form_op.mode_block(j));
            linalg::min_herm_eig(&blk)
        })
        .fold(f64::INFINITY, f64::min);
    let control_min_form = if control_min_form.is_finite() {
        control_min_form
    } else {
        let modes = slice_modes(&grid, 1);
        let basis = plane_basis(&grid, 2 * f2, &modes);
        let qf: Vec<SectionField> = basis.par_iter().map(|v| form_op.apply(v)).collect();
        linalg::min_herm_eig(&herm(&gram(&basis, &qf)))
    };

    Ok(PositivityReport {
        kernel_dim: slice.dim,
        ambient_dim: slice.ambient_dim,
        min_form,
        min_energy,
        smoothing_bound,
        bound_by_mode,
        min_margin,
        samples: samples.len(),
        control_min_form,
        max_imag,
        seed,
    })
}

/// One named check with its measured value and tolerance.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckEntry {
    pub name: String,
    /// The mathematical statement being checked.
    pub anchor: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckEntry {
    pub fn at_most(name: &str, anchor: &str, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), anchor: anchor.into(), measured, tolerance, pass: measured <= tolerance }
    }

    pub fn at_least(name: &str, anchor: &str, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), anchor: anchor.into(), measured, tolerance, pass: measured >= tolerance }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Provenance {
    pub scenario: String,
    pub dim: usize,
    pub n_per_axis: usize,
    pub t_half: f64,
    pub taylor_order: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StateTolerances {
    pub algebra: f64,
    pub self_adjoint: f64,
    pub energy: f64,
    /// Bound on the `m = 2` weighted constant of the intertwining defect.
    pub intertwining: f64,
    /// Bound on the `m = 2` weighted constant of `c₂^± − c̃₂^±`.
    pub frequency: f64,
}

impl Default for StateTolerances {
    fn default() -> Self {
        Self { algebra: 1e-6, self_adjoint: 1e-6, energy: 1e-10, intertwining: 10.0, frequency: 10.0 }
    }
}

/// Inputs of the state-condition report; `None` marks a stage that did not run.
pub struct StateArtifacts<'a> {
    pub calderon: Option<&'a ProjectorResiduals>,
    pub positivity: Option<&'a PositivityReport>,
    pub intertwining: Option<&'a IntertwineReport>,
    /// Profile of `c₂^± − c̃₂^±` (Hadamard against Calderón).
    pub frequency: Option<&'a DecayTable>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StateReport {
    pub provenance: Provenance,
    pub entries: Vec<CheckEntry>,
    /// Fourier modes left out of the frequency-sign proxy.
    pub excluded_modes: Vec<usize>,
}

impl StateReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// Aggregates the five state conditions for the pair `c̃₂^±`.
pub fn state_conditions_report(
    provenance: Provenance,
    art: &StateArtifacts<'_>,
    tol: &StateTolerances,
) -> Result<StateReport> {
    let need = |stage: &str| Error::Invalid(format!("missing upstream artifact: {stage}"));
    let cal = art.calderon.ok_or_else(|| need("calderon projectors"))?;
    let pos = art.positivity.ok_or_else(|| need("positivity"))?;
    let int = art.intertwining.ok_or_else(|| need("gauge intertwining"))?;
    let freq = art.frequency.ok_or_else(|| need("projector comparison"))?;

    // mode 0 carries the auxiliary conic set {k = 0} and is left out of the proxy
    let excluded: Vec<usize> = freq.rows.iter().filter(|r| r.kabs == 0.0).map(|r| r.mode).collect();
    let trimmed = DecayTable {
        rows: freq.rows.iter().filter(|r| r.kabs > 0.0).cloned().collect(),
        ..freq.clone()
    };
    let int_const = int.plus.constant(2).max(int.minus.constant(2));
    let entries = vec![
        CheckEntry::at_most("state.sum", "c⁺ + c⁻ = 1", cal.sum, tol.algebra),
        CheckEntry::at_most(
            "state.self-adjoint",
            "q c^± = (q c^±)^*",
            cal.q_selfadjoint(),
            tol.self_adjoint,
        ),
        CheckEntry::at_least(
            "state.positivity-energy",
            "±(f|q_phys c̃^± f) ≥ 0 on Ker K_Σ^† modulo smoothing",
            pos.min_energy,
            -tol.energy,
        ),
        CheckEntry::at_least("state.positivity-margin", "form + smoothing bound ≥ 0", pos.min_margin, -tol.energy),
        CheckEntry::at_most(
            "state.gauge-intertwining",
            "c̃₂^± K_Σ = K_Σ c̃₁^± modulo smoothing",
            int_const,
            tol.intertwining,
        ),
        CheckEntry::at_most(
            "state.frequency-sign",
            "c^± − c̃^± smoothing, k ≠ 0",
            trimmed.constant(2),
            tol.frequency,
        ),
    ];
    Ok(StateReport { provenance, entries, excluded_modes: excluded })
}

#[cfg(test)]
mod tests;
