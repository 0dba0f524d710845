//! Lorentzian factorization `D = (∂_t + ib^∓)(∂_t − ib^±)` mod smoothing, Hadamard
//! projectors, Cauchy evolution and the causal-propagator charge identity.

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::tau_operator;
use crate::linalg::{self, Mat, Vector, C64, I};
use crate::spectral_core::{
    slot_indices, smoothing_order_profile_on, DecayTable, DenseOperator, GridSpec, SectionField,
    TimeAnalyticOperator,
};
use crate::{Error, Result};

/// `χ(λ) = exp(λ²/(λ²−1))` on `|λ| < 1`, zero outside.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (x * x / (x * x - 1.0)).exp()
    }
}

/// Rebuilds an operator with the storage kind of `like` from new blocks.
pub(crate) fn from_blocks_like(like: &DenseOperator, fo: usize, fi: usize, blocks: Vec<Mat>) -> DenseOperator {
    if like.is_modal() {
        DenseOperator::from_blocks(&like.grid, fo, fi, blocks)
    } else {
        let m = blocks.into_iter().next().expect("one dense block");
        DenseOperator::from_dense(&like.grid, fo, fi, m).expect("block shape")
    }
}

/// `x⋆ = τ⁻¹ x* τ`.
pub fn star(x: &DenseOperator, tau: &[f64]) -> DenseOperator {
    let t = tau_operator(&x.grid, tau);
    t.compose(&x.adjoint_h()).compose(&t)
}

/// `a_ref = ¼((a + a*) + τ⁻¹(a + a*)τ)`, Hermitian and commuting with `τ`.
pub fn reference_part(a: &DenseOperator, tau: &[f64]) -> DenseOperator {
    let h = a.add(&a.adjoint_h());
    let t = tau_operator(&a.grid, tau);
    h.add(&t.compose(&h).compose(&t)).scale(linalg::c(0.25))
}

/// `χ(a_ref / R)`; identically zero for `R = 0`.
pub fn chi_r(a_ref: &DenseOperator, radius: f64) -> DenseOperator {
    let f = a_ref.fiber_in;
    if radius <= 0.0 {
        return DenseOperator::zero(&a_ref.grid, f, f);
    }
    a_ref.map_blocks(f, f, |m| linalg::herm_fn(m, |l| bump(l / radius)))
}

/// `r = R χ(a_ref / R)`, refusing radii that leave `a_ref + r` below one.
pub fn regularize(a_ref: &DenseOperator, radius: f64) -> Result<DenseOperator> {
    if radius < 0.0 {
        return Err(Error::Invalid("regularizer radius must be non-negative".into()));
    }
    let r = chi_r(a_ref, radius).scale(linalg::c(radius));
    let low = min_herm(&a_ref.add(&r));
    if low < 1.0 - 1e-12 {
        return Err(Error::Invalid(format!(
            "radius {radius} too small: a_ref + r has eigenvalue {low:.6}"
        )));
    }
    Ok(r)
}

fn min_herm(a: &DenseOperator) -> f64 {
    a.blocks().par_iter().map(linalg::min_herm_eig).reduce(|| f64::INFINITY, f64::min)
}

/// Regularizer at `t = 0` with the radius used.
#[derive(Clone, Debug)]
pub struct Regularizer {
    pub radius: f64,
    pub a_ref: DenseOperator,
    pub r: DenseOperator,
    /// Smallest eigenvalue of the Hermitian part of `a + r`.
    pub coercivity: f64,
}

/// Finds the smallest radius among `0, R₀, 2R₀, …` making `Herm(a + r) ≥ 1`.
pub fn regularize_auto(a: &DenseOperator, tau: &[f64], start: Option<f64>) -> Result<Regularizer> {
    let a_ref = reference_part(a, tau);
    let lowest = min_herm(&a_ref);
    let mut radii = Vec::new();
    match start {
        Some(r) => radii.push(r),
        None => {
            radii.push(0.0);
            radii.push(2.0 * (2.0 - lowest).max(1.0));
        }
    }
    while radii.len() < 48 {
        let last = *radii.last().unwrap();
        radii.push(2.0 * last.max(1.0));
    }
    for radius in radii {
        let Ok(r) = regularize(&a_ref, radius) else { continue };
        let coercivity = min_herm(&a.add(&r));
        if coercivity >= 1.0 - 1e-12 {
            return Ok(Regularizer { radius, a_ref, r, coercivity });
        }
    }
    Err(Error::Numerical("no regularizer radius achieves coercivity".into()))
}

/// Principal square root of one block with accretivity checks.
pub fn accretive_sqrt_mat(a: &Mat) -> Result<Mat> {
    let low = linalg::min_herm_eig(a);
    if low <= 0.0 {
        return Err(Error::Invalid(format!("numerical range reaches Re z = {low:.3e}")));
    }
    let e = linalg::sqrtm(a)?;
    let defect = linalg::max_abs(&(&e * &e - a)) / linalg::max_abs(a).max(1e-300);
    if defect > 1e-10 {
        return Err(Error::Numerical(format!("square root defect {defect:.3e}")));
    }
    if linalg::min_herm_eig(&e) <= 0.0 {
        return Err(Error::Numerical("square root is not accretive".into()));
    }
    Ok(e)
}

pub fn accretive_sqrt(a: &DenseOperator) -> Result<DenseOperator> {
    a.try_map_blocks(a.fiber_out, a.fiber_in, accretive_sqrt_mat)
}

/// Harmonized coefficient blocks `[coeff][block]`.
fn series_blocks(s: &TimeAnalyticOperator) -> (DenseOperator, Vec<Vec<Mat>>) {
    let refs: Vec<&DenseOperator> = s.coeffs.iter().collect();
    let h = DenseOperator::harmonize(&refs);
    let blocks = h.iter().map(|c| c.blocks().to_vec()).collect();
    (h[0].clone(), blocks)
}

fn series_from_blocks(like: &DenseOperator, fo: usize, fi: usize, per_block: Vec<Vec<Mat>>) -> TimeAnalyticOperator {
    let order = per_block[0].len();
    let coeffs = (0..order)
        .map(|n| from_blocks_like(like, fo, fi, per_block.iter().map(|b| b[n].clone()).collect()))
        .collect();
    TimeAnalyticOperator::new(coeffs)
}

/// Taylor series of `√A(t)`: `E₀ = √A₀`, `E₀E_n + E_nE₀ = A_n − Σ_{0<k<n} E_k E_{n−k}`.
pub fn sqrt_series(a: &TimeAnalyticOperator) -> Result<TimeAnalyticOperator> {
    let (like, blocks) = series_blocks(a);
    let nb = blocks[0].len();
    let per_block: Vec<Vec<Mat>> = (0..nb)
        .into_par_iter()
        .map(|b| -> Result<Vec<Mat>> {
            let e0 = accretive_sqrt_mat(&blocks[0][b])?;
            let syl = linalg::SylvesterSym::new(&e0)?;
            let mut es = vec![e0];
            for n in 1..blocks.len() {
                let mut rhs = blocks[n][b].clone();
                for k in 1..n {
                    rhs -= &es[k] * &es[n - k];
                }
                es.push(syl.solve(&rhs));
            }
            Ok(es)
        })
        .collect::<Result<_>>()?;
    Ok(series_from_blocks(&like, a.fiber_out(), a.fiber_in(), per_block))
}

/// Outcome of the symbolic fixed point.
#[derive(Clone, Debug)]
pub struct FixedPoint {
    /// `b₀` (the `Ψ⁰` correction), before the high-frequency cutoff.
    pub b0: TimeAnalyticOperator,
    pub iterations: usize,
    /// Operator norm of the order-zero coefficient of each update `d_k − d_{k−1}`.
    pub update_norms: Vec<f64>,
    /// Largest `m = 3` weighted norm of the last update over the outer third of the
    /// spectrum (infinite while the update is not yet decaying).
    pub last_update_tail: f64,
    pub converged: bool,
    /// Set when the Taylor order ran out before `max_iter`.
    pub order_exhausted: bool,
}

/// `d₀ = c₀ = (2ε)⁻¹ i∂_tε`, `d_k = c₀ + (2ε)⁻¹(i∂_t d + [ε, d] − d²)` at `d = d_{k−1}`.
pub fn fixed_point_b(epsilon: &TimeAnalyticOperator, max_iter: usize, tol: f64) -> Result<FixedPoint> {
    let two_eps_inv = epsilon.scale(linalg::c(2.0)).inverse()?;
    let c0 = two_eps_inv.compose(&epsilon.dt().scale(I));
    let f = |d: &TimeAnalyticOperator| -> TimeAnalyticOperator {
        let inner = d
            .dt()
            .scale(I)
            .add(&epsilon.compose(d))
            .sub(&d.compose(epsilon))
            .sub(&d.compose(d));
        two_eps_inv.compose(&inner)
    };
    let grid = epsilon.at0().grid.clone();
    // low frequencies stagnate (the series is only asymptotic there); judge the tail
    let measure = |u: &DenseOperator| -> f64 {
        let v = smoothing_order_profile_on(u, &[3], |j| grid.is_band_limited(j)).verdict(3);
        if v.decaying {
            v.tail_max
        } else {
            f64::INFINITY
        }
    };
    let mut d = c0.clone();
    let mut update_norms = vec![c0.at0().op_norm()];
    let mut last = measure(c0.at0());
    let mut iterations = 1;
    let mut converged = last <= tol;
    let mut order_exhausted = false;
    while !converged && iterations < max_iter {
        // one Taylor order is consumed per step; keep at least order one in b
        if d.taylor_order() < 2 {
            order_exhausted = true;
            break;
        }
        let next = c0.add(&f(&d));
        let upd = next.at0().sub(d.at0());
        update_norms.push(upd.op_norm());
        last = measure(&upd);
        d = next;
        iterations += 1;
        converged = last <= tol;
    }
    if !converged && !order_exhausted {
        return Err(Error::Numerical(format!(
            "fixed point did not converge in {max_iter} iterations (last update tail {last:.3e})"
        )));
    }
    Ok(FixedPoint { b0: d, iterations, update_norms, last_update_tail: last, converged, order_exhausted })
}

#[derive(Clone, Copy, Debug)]
pub struct FactorizeOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Starting regularizer radius; `None` tries `0` first.
    pub radius: Option<f64>,
    pub m_list: [i32; 3],
}

impl Default for FactorizeOptions {
    fn default() -> Self {
        Self { max_iter: 12, tol: 1e-6, radius: None, m_list: [1, 2, 3] }
    }
}

#[derive(Clone, Debug)]
pub struct FactorizationResult {
    pub tau: Vec<f64>,
    pub a: TimeAnalyticOperator,
    pub epsilon: TimeAnalyticOperator,
    pub b_plus: TimeAnalyticOperator,
    pub b_minus: TimeAnalyticOperator,
    pub regularizer: Regularizer,
    pub r_smoothing: DenseOperator,
    pub fixed_point: FixedPoint,
    pub iterations: usize,
    /// Profile of `i∂_t b − b² + a` at `t = 0`.
    pub residual_profile: DecayTable,
    pub cond_b_diff: f64,
}

/// `ε = √(a + r)`, `b = ε + b₀(1 − χ_R(a_ref))`, `b⁺ = b`, `b⁻ = −b⋆`.
pub fn factorize(a: &TimeAnalyticOperator, tau: &[f64], opts: &FactorizeOptions) -> Result<FactorizationResult> {
    let a0 = a.at0();
    let reg = regularize_auto(a0, tau, opts.radius)?;
    let shifted = a.add(&TimeAnalyticOperator::constant(reg.r.clone(), a.taylor_order()));
    let epsilon = sqrt_series(&shifted)?;
    let fp = fixed_point_b(&epsilon, opts.max_iter, opts.tol)?;
    let f = a0.fiber_in;
    let cut = DenseOperator::identity(&a0.grid, f).sub(&chi_r(&reg.a_ref, reg.radius));
    let b = epsilon.add(&fp.b0.map(|c| c.compose(&cut)));
    let b_minus = b.map(|c| star(c, tau).scale(linalg::c(-1.0)));

    let residual = b.dt().scale(I).sub(&b.compose(&b)).add(a);
    let grid = a0.grid.clone();
    let residual_profile = smoothing_order_profile_on(residual.at0(), &opts.m_list, |j| grid.is_band_limited(j));
    let diff = b.at0().sub(b_minus.at0());
    let cond_b_diff = diff.blocks().iter().map(linalg::condition_number).fold(0.0, f64::max);
    if !cond_b_diff.is_finite() || cond_b_diff > 1e14 {
        return Err(Error::Singular("b+ - b- at t = 0".into()));
    }
    Ok(FactorizationResult {
        tau: tau.to_vec(),
        a: a.clone(),
        epsilon,
        b_plus: b,
        b_minus,
        r_smoothing: reg.r.clone(),
        regularizer: reg,
        iterations: fp.iterations,
        fixed_point: fp,
        residual_profile,
        cond_b_diff,
    })
}

#[derive(Clone, Debug)]
pub struct HadamardProjectors {
    pub c_plus: DenseOperator,
    pub c_minus: DenseOperator,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ProjectorResiduals {
    pub sum: f64,
    pub idempotent_plus: f64,
    pub idempotent_minus: f64,
    pub q_selfadjoint_plus: f64,
    pub q_selfadjoint_minus: f64,
}

impl ProjectorResiduals {
    pub fn idempotent(&self) -> f64 {
        self.idempotent_plus.max(self.idempotent_minus)
    }

    pub fn q_selfadjoint(&self) -> f64 {
        self.q_selfadjoint_plus.max(self.q_selfadjoint_minus)
    }
}

/// Sum, idempotency and `q`-self-adjointness defects of a projector pair.
pub fn projector_residuals(c_plus: &DenseOperator, c_minus: &DenseOperator, q: &DenseOperator) -> ProjectorResiduals {
    let id = DenseOperator::identity(&c_plus.grid, c_plus.fiber_in);
    let herm = |c: &DenseOperator| {
        let qc = q.compose(c);
        qc.dist(&qc.adjoint_h())
    };
    ProjectorResiduals {
        sum: c_plus.add(c_minus).dist(&id),
        idempotent_plus: c_plus.compose(c_plus).dist(c_plus),
        idempotent_minus: c_minus.compose(c_minus).dist(c_minus),
        q_selfadjoint_plus: herm(c_plus),
        q_selfadjoint_minus: herm(c_minus),
    }
}

impl HadamardProjectors {
    pub fn residuals(&self, q: &DenseOperator) -> ProjectorResiduals {
        projector_residuals(&self.c_plus, &self.c_minus, q)
    }
}

/// `c^± = [[∓H⁻¹b^∓, ±H⁻¹], [∓b⁺H⁻¹b⁻, ±b^±H⁻¹]]` with `H = b⁺ − b⁻`.
pub fn hadamard_projectors(b_plus0: &DenseOperator, b_minus0: &DenseOperator) -> Result<HadamardProjectors> {
    let h = b_plus0.sub(b_minus0);
    let hi = h.inverse().map_err(|_| Error::Singular("b+ - b-".into()))?;
    let neg = linalg::c(-1.0);
    let bhb = b_plus0.compose(&hi).compose(b_minus0);
    let c_plus = DenseOperator::join2(
        &hi.compose(b_minus0).scale(neg),
        &hi,
        &bhb.scale(neg),
        &b_plus0.compose(&hi),
    );
    let c_minus = DenseOperator::join2(
        &hi.compose(b_plus0),
        &hi.scale(neg),
        &bhb,
        &b_minus0.compose(&hi).scale(neg),
    );
    Ok(HadamardProjectors { c_plus, c_minus })
}

/// `S = i⁻¹[[1, −1], [b⁺, −b⁻]](b⁺ − b⁻)⁻¹` and `S⁻¹ = i[[−b⁻, 1], [−b⁺, 1]]`.
pub fn s_pair(b_plus: &DenseOperator, b_minus: &DenseOperator) -> Result<(DenseOperator, DenseOperator)> {
    let f = b_plus.fiber_in;
    let id = DenseOperator::identity(&b_plus.grid, f);
    let neg = linalg::c(-1.0);
    let hi = b_plus.sub(b_minus).inverse().map_err(|_| Error::Singular("b+ - b-".into()))?;
    let s = DenseOperator::join2(&hi, &hi.scale(neg), &b_plus.compose(&hi), &b_minus.compose(&hi).scale(neg))
        .scale(-I);
    let s_inv = DenseOperator::join2(&b_minus.scale(neg), &id, &b_plus.scale(neg), &id).scale(I);
    Ok((s, s_inv))
}

/// `T(0) = S(0) diag(c, c)` with `c = (2ε)^{1/2}(1 + r₋₁)`, and the defect of
/// `T*qT = diag(τ, −τ)`.
pub fn t_at_zero(fr: &FactorizationResult) -> Result<(DenseOperator, f64)> {
    let tau = &fr.tau;
    let eps = fr.epsilon.at0();
    let f = eps.fiber_in;
    let grid = &eps.grid;
    let e2 = accretive_sqrt(&eps.scale(linalg::c(2.0)))?;
    let e2i = e2.inverse()?;
    let b0 = fr.b_plus.at0().sub(eps);
    let s = e2i.compose(&b0.add(&star(&b0, tau))).compose(&e2i).scale(linalg::c(-1.0));
    let one_r = DenseOperator::identity(grid, f)
        .sub(&s)
        .try_map_blocks(f, f, linalg::sqrtm)?;
    let c = e2.compose(&one_r);
    let (s_op, _) = s_pair(fr.b_plus.at0(), fr.b_minus.at0())?;
    let t = s_op.compose(&DenseOperator::diag2(&c));
    let tq = tau_operator(grid, tau);
    let z = DenseOperator::zero(grid, f, f);
    let q = DenseOperator::join2(&z, &tq, &tq, &z);
    let want = DenseOperator::join2(&tq, &z, &z, &tq.scale(linalg::c(-1.0)));
    let defect = t.adjoint_h().compose(&q).compose(&t).dist(&want);
    Ok((t, defect))
}

/// `q = [[0, τ], [τ, 0]]` on the grid.
pub fn lorentzian_charge(grid: &GridSpec, tau: &[f64]) -> DenseOperator {
    let t = tau_operator(grid, tau);
    let z = DenseOperator::zero(grid, tau.len(), tau.len());
    DenseOperator::join2(&z, &t, &t, &z)
}

const GL_C: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];
const GL_A: [[f64; 2]; 2] = [[0.25, 0.25 - 0.288_675_134_594_812_9], [0.25 + 0.288_675_134_594_812_9, 0.25]];

/// Per-block view of `a(t)` for the first-order system `∂_tψ = iA(t)ψ`.
struct BlockSystem {
    like: DenseOperator,
    coeffs: Vec<Vec<Mat>>,
    fiber: usize,
    npb: usize,
}

impl BlockSystem {
    fn new(a: &TimeAnalyticOperator) -> Self {
        let (like, coeffs) = series_blocks(a);
        let npb = like.block_points();
        Self { like, coeffs, fiber: a.fiber_in(), npb }
    }

    fn nblocks(&self) -> usize {
        self.coeffs[0].len()
    }

    fn dim(&self) -> usize {
        2 * self.fiber * self.npb
    }

    fn a_at(&self, b: usize, t: f64) -> Mat {
        let mut acc = self.coeffs[self.coeffs.len() - 1][b].clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc * linalg::c(t) + &c[b];
        }
        acc
    }

    /// `iA(t) = i[[0, 1], [a(t), 0]]` in slot layout.
    fn generator(&self, b: usize, t: f64) -> Mat {
        let a = self.a_at(b, t);
        let r0 = slot_indices(self.npb, self.fiber, 0);
        let r1 = slot_indices(self.npb, self.fiber, 1);
        let mut m = Mat::zeros(self.dim(), self.dim());
        for (k, &i0) in r0.iter().enumerate() {
            m[(i0, r1[k])] = I;
        }
        for (i, &ri) in r1.iter().enumerate() {
            for (j, &cj) in r0.iter().enumerate() {
                m[(ri, cj)] = I * a[(i, j)];
            }
        }
        m
    }

    fn check_step(&self, h: f64, t: f64) -> Result<()> {
        let w = (0..self.nblocks())
            .map(|b| linalg::op_norm(&self.a_at(b, t)))
            .fold(1.0, f64::max)
            .sqrt();
        if h.abs() * w > 2.5 {
            return Err(Error::Numerical(format!(
                "step {h:.3e} too large for frequency {w:.3e}; increase the step count"
            )));
        }
        Ok(())
    }

    /// Stage matrix of one Gauss–Legendre step and the stage generators.
    fn stage(&self, b: usize, t: f64, h: f64) -> Result<(Mat, Mat, Mat)> {
        let m = self.dim();
        let m1 = self.generator(b, t + GL_C[0] * h);
        let m2 = self.generator(b, t + GL_C[1] * h);
        let mut sys = linalg::eye(2 * m);
        for (r, mk) in [&m1, &m2].into_iter().enumerate() {
            for (s, &a) in GL_A[r].iter().enumerate() {
                let blk = mk * linalg::c(-h * a);
                let mut view = sys.view_mut((r * m, s * m), (m, m));
                view += blk;
            }
        }
        Ok((sys, m1, m2))
    }

    fn step_matrix(&self, b: usize, t: f64, h: f64) -> Result<Mat> {
        let m = self.dim();
        let (sys, m1, m2) = self.stage(b, t, h)?;
        let mut rhs = Mat::zeros(2 * m, m);
        rhs.view_mut((0, 0), (m, m)).copy_from(&m1);
        rhs.view_mut((m, 0), (m, m)).copy_from(&m2);
        let k = linalg::solve(&sys, &rhs)?;
        let ks = k.rows(0, m) + k.rows(m, m);
        Ok(linalg::eye(m) + ks * linalg::c(h / 2.0))
    }

    /// One step of the forced system `∂_tψ = iAψ + F(t)`.
    fn forced_step(&self, b: usize, t: f64, h: f64, psi: &Vector, force: &dyn Fn(f64) -> Vector) -> Result<Vector> {
        let m = self.dim();
        let (sys, m1, m2) = self.stage(b, t, h)?;
        let mut rhs = Vector::zeros(2 * m);
        rhs.rows_mut(0, m).copy_from(&(&m1 * psi + force(t + GL_C[0] * h)));
        rhs.rows_mut(m, m).copy_from(&(&m2 * psi + force(t + GL_C[1] * h)));
        let k = sys.lu().solve(&rhs).ok_or_else(|| Error::Singular("stage system".into()))?;
        Ok(psi + (k.rows(0, m) + k.rows(m, m)) * linalg::c(h / 2.0))
    }

    fn assemble(&self, blocks: Vec<Mat>) -> DenseOperator {
        from_blocks_like(&self.like, 2 * self.fiber, 2 * self.fiber, blocks)
    }

    fn to_blocks(&self, f: &SectionField) -> Vec<Vector> {
        let fd = f.fiber_dim;
        if self.like.is_modal() {
            let modes = f.modes();
            (0..self.nblocks()).map(|j| Vector::from_column_slice(&modes[j * fd..(j + 1) * fd])).collect()
        } else {
            vec![Vector::from_column_slice(&f.values)]
        }
    }

    fn section_of(&self, v: &[Vector], fiber: usize) -> SectionField {
        let grid = &self.like.grid;
        let flat: Vec<C64> = v.iter().flat_map(|x| x.iter().cloned()).collect();
        if self.like.is_modal() {
            SectionField::from_modes(grid, fiber, &flat)
        } else {
            SectionField { grid: grid.clone(), fiber_dim: fiber, values: flat }
        }
    }
}

/// `U(t1, t0)` on Cauchy data by the two-stage Gauss–Legendre scheme.
pub fn cauchy_evolution(a: &TimeAnalyticOperator, t0: f64, t1: f64, steps: usize) -> Result<DenseOperator> {
    if steps == 0 {
        return Err(Error::Invalid("at least one step is required".into()));
    }
    let sys = BlockSystem::new(a);
    let h = (t1 - t0) / steps as f64;
    sys.check_step(h, t0)?;
    let blocks = (0..sys.nblocks())
        .into_par_iter()
        .map(|b| -> Result<Mat> {
            let mut u = linalg::eye(sys.dim());
            for s in 0..steps {
                u = sys.step_matrix(b, t0 + s as f64 * h, h)? * u;
            }
            Ok(u)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sys.assemble(blocks))
}

/// `‖U*qU − q‖`.
pub fn pseudo_unitarity_defect(u: &DenseOperator, q: &DenseOperator) -> f64 {
    u.adjoint_h().compose(q).compose(u).dist(q)
}

/// Separable test section `φ(t, x) = χ((t − center)/width) f(x)`.
#[derive(Clone, Debug)]
pub struct TestSection {
    pub center: f64,
    pub width: f64,
    pub field: SectionField,
}

impl TestSection {
    pub fn profile(&self, t: f64) -> f64 {
        bump((t - self.center) / self.width)
    }

    fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }
}

/// `ρ(Gφ)` at every node of `[−L, L]` (`steps` intervals, `steps` even).
fn causal_trajectory(
    sys: &BlockSystem,
    phi: &TestSection,
    half_window: f64,
    steps: usize,
) -> Result<Vec<Vec<Vector>>> {
    let (lo, hi) = phi.support();
    if lo < -half_window || hi > half_window {
        return Err(Error::Invalid("test section leaves the time window".into()));
    }
    let h = 2.0 * half_window / steps as f64;
    sys.check_step(h, 0.0)?;
    let src = sys.to_blocks(&phi.field);
    let f = sys.fiber;
    let r1 = slot_indices(sys.npb, f, 1);
    (0..sys.nblocks())
        .into_par_iter()
        .map(|b| -> Result<Vec<Vector>> {
            let m = sys.dim();
            // ∂_t² u + a u = φ  ⇔  ∂_tψ = iAψ + (0, −iφ)
            let force = |t: f64| {
                let mut v = Vector::zeros(m);
                let th = phi.profile(t);
                for (k, &i) in r1.iter().enumerate() {
                    v[i] = -I * th * src[b][k];
                }
                v
            };
            let nodes = steps + 1;
            let mut ret = vec![Vector::zeros(m); nodes];
            for s in 0..steps {
                let t = -half_window + s as f64 * h;
                ret[s + 1] = sys.forced_step(b, t, h, &ret[s], &force)?;
            }
            let mut adv = vec![Vector::zeros(m); nodes];
            for s in (0..steps).rev() {
                let t = -half_window + (s + 1) as f64 * h;
                adv[s] = sys.forced_step(b, t, -h, &adv[s + 1], &force)?;
            }
            Ok(ret.iter().zip(&adv).map(|(r, a)| r - a).collect())
        })
        .collect()
}

/// `ρ(Gφ)` at `t = 0` for `G = G_ret − G_adv`.
pub fn causal_cauchy_data(
    a: &TimeAnalyticOperator,
    phi: &TestSection,
    half_window: f64,
    steps: usize,
) -> Result<SectionField> {
    if !steps.is_multiple_of(2) {
        return Err(Error::Invalid("step count must be even".into()));
    }
    let sys = BlockSystem::new(a);
    let traj = causal_trajectory(&sys, phi, half_window, steps)?;
    let at0: Vec<Vector> = traj.iter().map(|t| t[steps / 2].clone()).collect();
    Ok(sys.section_of(&at0, 2 * sys.fiber))
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct GreenChargeReport {
    pub lhs: C64,
    pub rhs: C64,
    pub residual: f64,
    /// `max_t ‖ρ_t(Gφ₂) − U(t,0)ρ(Gφ₂)‖`, i.e. how far `Gφ₂` is from solving `Du = 0`.
    pub homogeneous_residual: f64,
}

/// Both sides of `(φ₁|Gφ₂) = i⁻¹(ρGφ₁|qρGφ₂)` with the flat pairing twisted by `τ`.
pub fn green_charge_check(
    a: &TimeAnalyticOperator,
    tau: &[f64],
    phi1: &TestSection,
    phi2: &TestSection,
    half_window: f64,
    steps: usize,
) -> Result<GreenChargeReport> {
    if !steps.is_multiple_of(2) {
        return Err(Error::Invalid("step count must be even".into()));
    }
    let sys = BlockSystem::new(a);
    let np = sys.like.grid.points() as f64;
    let f = sys.fiber;
    let g1 = causal_trajectory(&sys, phi1, half_window, steps)?;
    let g2 = causal_trajectory(&sys, phi2, half_window, steps)?;
    let src1 = sys.to_blocks(&phi1.field);
    let r0 = slot_indices(sys.npb, f, 0);
    let r1 = slot_indices(sys.npb, f, 1);
    let tw = |k: usize| tau[k % f];
    let h = 2.0 * half_window / steps as f64;
    let mid = steps / 2;

    let mut lhs = C64::new(0.0, 0.0);
    let mut rhs = C64::new(0.0, 0.0);
    let mut hom: f64 = 0.0;
    for b in 0..sys.nblocks() {
        // trapezoid in time: exact to all orders for the compactly supported bump
        for (s, psi) in g2[b].iter().enumerate() {
            let t = -half_window + s as f64 * h;
            let th = phi1.profile(t);
            if th == 0.0 {
                continue;
            }
            let mut acc = C64::new(0.0, 0.0);
            for (k, &i) in r0.iter().enumerate() {
                acc += src1[b][k].conj() * tw(k) * psi[i];
            }
            lhs += acc * th * h;
        }
        let (x, y) = (&g1[b][mid], &g2[b][mid]);
        for k in 0..r0.len() {
            rhs += x[r0[k]].conj() * tw(k) * y[r1[k]] + x[r1[k]].conj() * tw(k) * y[r0[k]];
        }
        // homogeneity: propagate ρ(Gφ₂) from t = 0 to every node
        let mut fwd = y.clone();
        let mut bwd = y.clone();
        for s in 0..mid {
            fwd = sys.step_matrix(b, s as f64 * h, h)? * fwd;
            bwd = sys.step_matrix(b, -(s as f64) * h, -h)? * bwd;
            hom = hom.max((&fwd - &g2[b][mid + s + 1]).norm()).max((&bwd - &g2[b][mid - s - 1]).norm());
        }
    }
    let lhs = lhs / np;
    let rhs = -I * rhs / np;
    Ok(GreenChargeReport { lhs, rhs, residual: (lhs - rhs).norm(), homogeneous_residual: hom / np.sqrt() })
}

/// Per-mode norm of the off-diagonal blocks of `S(t)⁻¹U(t,0)S(0)`.
pub fn evolution_factorization_profile(
    fr: &FactorizationResult,
    t: f64,
    steps: usize,
    m_list: &[i32],
) -> Result<DecayTable> {
    let u = cauchy_evolution(&fr.a, 0.0, t, steps)?;
    let (s0, _) = s_pair(fr.b_plus.at0(), fr.b_minus.at0())?;
    let tc = C64::new(t, 0.0);
    let (_, st_inv) = s_pair(&fr.b_plus.eval(tc), &fr.b_minus.eval(tc))?;
    let m = st_inv.compose(&u).compose(&s0);
    let [_, off01, off10, _] = m.split2();
    let grid = &fr.a.at0().grid;
    let modes = (0..grid.points())
        .into_par_iter()
        .filter(|&j| grid.is_band_limited(j))
        .map(|j| {
            let v = off01.mode_column_norm(j).max(off10.mode_column_norm(j));
            (j, grid.mode(j), grid.kabs(j), v)
        })
        .collect();
    Ok(DecayTable::from_norms(m_list, modes))
}

/// `c^±` from a factorization, with the storage of the inputs.
pub fn projectors_of(fr: &FactorizationResult) -> Result<HadamardProjectors> {
    hadamard_projectors(fr.b_plus.at0(), fr.b_minus.at0())
}

#[cfg(test)]
mod tests;
