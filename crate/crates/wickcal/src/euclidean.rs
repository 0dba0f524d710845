//! Wick-rotated elliptic problems on `(−T, T) × Σ`: Dirichlet solves by two-domain
//! Chebyshev collocation, Calderón projectors, Poisson operators, Dirichlet-to-Neumann
//! maps and the elliptic Green identities.

use rayon::prelude::*;
use serde::Serialize;

use crate::factorization::{from_blocks_like, projector_residuals, HadamardProjectors, ProjectorResiduals};
use crate::linalg::{self, Mat, Vector, C64, I};
use crate::spectral_core::{
    slot_indices, smoothing_order_profile_on, DecayTable, DenseOperator, GridSpec, SectionField,
    TimeAnalyticOperator,
};
use crate::{Error, Result};

/// `ã(s) = a(is)`: `Ã_n = iⁿ A_n`, with the matching `(i∂_t)ⁿa(0) = ∂_sⁿã(0)` asserted.
pub fn wick_rotate(a: &TimeAnalyticOperator) -> TimeAnalyticOperator {
    let w = a.wick();
    let mut ip = C64::new(1.0, 0.0);
    for (n, (an, wn)) in a.coeffs.iter().zip(&w.coeffs).enumerate() {
        let defect = an.scale(ip).dist(wn);
        assert!(defect <= 1e-14 * an.op_norm().max(1.0), "matching fails at order {n}");
        ip *= I;
    }
    w
}

/// `d̃₀(s) = −i d₀(is)` and `d̃₁(s) = d₁(is)`.
pub fn wick_rotate_gauge(
    d0: &TimeAnalyticOperator,
    d1: &TimeAnalyticOperator,
) -> (TimeAnalyticOperator, TimeAnalyticOperator) {
    (d0.wick().scale(-I), d1.wick())
}

/// Chebyshev–Lobatto nodes on `[0, T]` ordered from `s = 0`, with differentiation
/// matrices and Clenshaw–Curtis weights.
#[derive(Clone, Debug)]
pub struct ChebNodes {
    pub s: Vec<f64>,
    pub d1: Mat,
    pub d2: Mat,
    pub weights: Vec<f64>,
}

impl ChebNodes {
    pub fn new(n: usize, t_half: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Invalid("at least four collocation nodes are needed".into()));
        }
        let p = n - 1;
        let pi = std::f64::consts::PI;
        let x: Vec<f64> = (0..n).map(|j| (pi * j as f64 / p as f64).cos()).collect();
        let cw = |j: usize| {
            let base = if j == 0 || j == p { 2.0 } else { 1.0 };
            if j.is_multiple_of(2) {
                base
            } else {
                -base
            }
        };
        let mut dx = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    dx[(i, j)] = linalg::c(cw(i) / cw(j) / (x[i] - x[j]));
                }
            }
        }
        for i in 0..n {
            let s: C64 = (0..n).filter(|&j| j != i).map(|j| dx[(i, j)]).sum();
            dx[(i, i)] = -s;
        }
        // s = T(1 − x)/2, so d/ds = −(2/T) d/dx
        let d1 = dx * linalg::c(-2.0 / t_half);
        let d2 = &d1 * &d1;
        let s = x.iter().map(|xi| t_half * (1.0 - xi) / 2.0).collect();
        // Clenshaw–Curtis weights on [−1, 1], scaled by T/2
        let mut w = vec![0.0; n];
        let theta: Vec<f64> = (0..n).map(|j| pi * j as f64 / p as f64).collect();
        let mut v = vec![1.0; n];
        let inner = 1..p;
        if p.is_multiple_of(2) {
            w[0] = 1.0 / (p * p - 1) as f64;
            w[p] = w[0];
            for k in 1..p / 2 {
                for j in inner.clone() {
                    v[j] -= 2.0 * (2.0 * k as f64 * theta[j]).cos() / (4 * k * k - 1) as f64;
                }
            }
            for j in inner.clone() {
                v[j] -= (p as f64 * theta[j]).cos() / (p * p - 1) as f64;
            }
        } else {
            w[0] = 1.0 / (p * p) as f64;
            w[p] = w[0];
            for k in 1..=(p - 1) / 2 {
                for j in inner.clone() {
                    v[j] -= 2.0 * (2.0 * k as f64 * theta[j]).cos() / (4 * k * k - 1) as f64;
                }
            }
        }
        for j in inner {
            w[j] = 2.0 * v[j] / p as f64;
        }
        let weights = w.iter().map(|wi| wi * t_half / 2.0).collect();
        Ok(Self { s, d1, d2, weights })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EllipticOptions {
    pub t_half: f64,
    pub n_s: usize,
    /// Halve `T` until the coercivity certificate holds.
    pub auto_shrink: bool,
}

impl Default for EllipticOptions {
    fn default() -> Self {
        Self { t_half: 1.0, n_s: 48, auto_shrink: true }
    }
}

/// Per-block eigen-decomposition of an `s`-independent `ã`.
#[derive(Clone, Debug)]
struct ConstantSplit {
    lambdas: Vec<C64>,
    v: Mat,
    v_inv: Mat,
}

/// `D̃ = −∂_s² + ã(s)` on `(−T, T) × Σ` with Dirichlet conditions at `s = ±T`.
#[derive(Clone, Debug)]
pub struct EllipticProblem {
    pub a_tilde: TimeAnalyticOperator,
    pub t_half: f64,
    pub nodes: ChebNodes,
    /// `min_s λ_min(Re ã(s)) + (π/2T)²`, positive when the quadratic form is coercive.
    pub coercivity: f64,
    pub shrunk: bool,
    like: DenseOperator,
    coeffs: Vec<Vec<Mat>>,
    fiber: usize,
    npb: usize,
    split: Option<Vec<ConstantSplit>>,
}

fn horner(coeffs: &[Vec<Mat>], b: usize, s: f64) -> Mat {
    let mut acc = coeffs[coeffs.len() - 1][b].clone();
    for c in coeffs.iter().rev().skip(1) {
        acc = acc * linalg::c(s) + &c[b];
    }
    acc
}

impl EllipticProblem {
    pub fn new(a_tilde: &TimeAnalyticOperator, opts: &EllipticOptions) -> Result<Self> {
        let refs: Vec<&DenseOperator> = a_tilde.coeffs.iter().collect();
        let h = DenseOperator::harmonize(&refs);
        let like = h[0].clone();
        let coeffs: Vec<Vec<Mat>> = h.iter().map(|c| c.blocks().to_vec()).collect();
        let npb = like.block_points();
        let fiber = a_tilde.fiber_in();
        let nb = coeffs[0].len();

        let mut t_half = opts.t_half;
        let mut shrunk = false;
        let coercivity = loop {
            let probe = ChebNodes::new(opts.n_s.max(8), t_half)?;
            let low = (0..nb)
                .into_par_iter()
                .map(|b| {
                    probe
                        .s
                        .iter()
                        .flat_map(|&s| [s, -s])
                        .map(|s| linalg::min_herm_eig(&horner(&coeffs, b, s)))
                        .fold(f64::INFINITY, f64::min)
                })
                .reduce(|| f64::INFINITY, f64::min);
            let cert = low + (std::f64::consts::PI / (2.0 * t_half)).powi(2);
            if cert > 0.0 {
                break cert;
            }
            if !opts.auto_shrink || t_half < 1e-3 {
                return Err(Error::Singular(format!("elliptic problem not coercive at T = {t_half}")));
            }
            t_half /= 2.0;
            shrunk = true;
        };
        let nodes = ChebNodes::new(opts.n_s, t_half)?;

        let constant = coeffs.iter().skip(1).all(|c| c.iter().all(|m| linalg::max_abs(m) == 0.0));
        let hermitian = coeffs[0].iter().all(|m| linalg::max_abs(&(m - m.adjoint())) <= 1e-12 * linalg::max_abs(m).max(1.0));
        let split = (constant && hermitian).then(|| {
            coeffs[0]
                .par_iter()
                .map(|m| {
                    let (vals, v) = linalg::herm_eig(m);
                    ConstantSplit { lambdas: vals.into_iter().map(linalg::c).collect(), v_inv: v.adjoint(), v }
                })
                .collect()
        });
        Ok(Self { a_tilde: a_tilde.clone(), t_half, nodes, coercivity, shrunk, like, coeffs, fiber, npb, split })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.like.grid
    }

    pub fn fiber(&self) -> usize {
        self.fiber
    }

    pub fn is_constant_in_s(&self) -> bool {
        self.split.is_some()
    }

    /// `D̃*` (coefficientwise adjoint of `ã`) on the same nodes.
    pub fn adjoint_problem(&self) -> Result<Self> {
        let opts = EllipticOptions { t_half: self.t_half, n_s: self.nodes.len(), auto_shrink: false };
        Self::new(&self.a_tilde.adjoint_h(), &opts)
    }

    fn nblocks(&self) -> usize {
        self.coeffs[0].len()
    }

    fn block_dim(&self) -> usize {
        self.fiber * self.npb
    }

    fn a_at(&self, b: usize, s: f64) -> Mat {
        horner(&self.coeffs, b, s)
    }

    /// Two-domain system for one block; unknowns ordered `(side, node, component)`.
    fn two_domain_matrix(&self, m: usize, a_at: impl Fn(f64) -> Mat) -> Mat {
        let n = self.nodes.len();
        let idx = |h: usize, i: usize, c: usize| (h * n + i) * m + c;
        let mut a = Mat::zeros(2 * n * m, 2 * n * m);
        for h in 0..2 {
            let sgn = if h == 0 { 1.0 } else { -1.0 };
            for i in 1..n {
                if i == n - 1 {
                    for c in 0..m {
                        a[(idx(h, i, c), idx(h, i, c))] = linalg::c(1.0);
                    }
                    continue;
                }
                let ai = a_at(sgn * self.nodes.s[i]);
                for c in 0..m {
                    let row = idx(h, i, c);
                    for j in 0..n {
                        a[(row, idx(h, j, c))] -= self.nodes.d2[(i, j)];
                    }
                    for c2 in 0..m {
                        a[(row, idx(h, i, c2))] += ai[(c, c2)];
                    }
                }
            }
        }
        for c in 0..m {
            a[(idx(0, 0, c), idx(0, 0, c))] = linalg::c(1.0);
            a[(idx(0, 0, c), idx(1, 0, c))] = linalg::c(-1.0);
            for j in 0..n {
                // u⁺'(0) − u⁻'(0) with u⁻'(0) = −Σ D1[0,j] u⁻_j
                a[(idx(1, 0, c), idx(0, j, c))] += self.nodes.d1[(0, j)];
                a[(idx(1, 0, c), idx(1, j, c))] += self.nodes.d1[(0, j)];
            }
        }
        a
    }

    /// Half-cylinder system with trace row at `s = 0`.
    fn half_matrix(&self, m: usize, side: Side, a_at: impl Fn(f64) -> Mat) -> Mat {
        let n = self.nodes.len();
        let mut a = Mat::zeros(n * m, n * m);
        for c in 0..m {
            a[(c, c)] = linalg::c(1.0);
            a[((n - 1) * m + c, (n - 1) * m + c)] = linalg::c(1.0);
        }
        for i in 1..n - 1 {
            let ai = a_at(side.sign() * self.nodes.s[i]);
            for c in 0..m {
                let row = i * m + c;
                for j in 0..n {
                    a[(row, j * m + c)] -= self.nodes.d2[(i, j)];
                }
                for c2 in 0..m {
                    a[(row, i * m + c2)] += ai[(c, c2)];
                }
            }
        }
        a
    }

    /// Solves the two-domain system for one block (`rhs` has one column per problem).
    fn solve_two_domain(&self, b: usize, rhs: &Mat) -> Result<Mat> {
        let sol = match &self.split {
            Some(split) => self.solve_split(&split[b], rhs, |a| self.two_domain_matrix(1, |_| a.clone())),
            None => linalg::solve(&self.two_domain_matrix(self.block_dim(), |s| self.a_at(b, s)), rhs),
        };
        sol.map_err(|_| Error::Singular("two-domain system".into()))
    }

    fn solve_half(&self, b: usize, side: Side, rhs: &Mat) -> Result<Mat> {
        let sol = match &self.split {
            Some(split) => self.solve_split(&split[b], rhs, |a| self.half_matrix(1, side, |_| a.clone())),
            None => linalg::solve(&self.half_matrix(self.block_dim(), side, |s| self.a_at(b, s)), rhs),
        };
        sol.map_err(|_| Error::Singular("half-cylinder system".into()))
    }

    /// Decoupled solve along the eigenvectors of a constant Hermitian `ã`;
    /// `system` builds the collocation matrix of the scalar problem for one eigenvalue.
    fn solve_split(
        &self,
        split: &ConstantSplit,
        rhs: &Mat,
        system: impl Fn(&Mat) -> Mat,
    ) -> std::result::Result<Mat, Error> {
        let m = self.block_dim();
        let rows = rhs.nrows();
        let nn = rows / m;
        let cols = rhs.ncols();
        let mut out = Mat::zeros(rows, cols);
        let mut wt = Mat::zeros(rows, cols);
        for (c, &lam) in split.lambdas.iter().enumerate() {
            // component c of V⁻¹ r at every node
            let mut sub = Mat::zeros(nn, cols);
            for i in 0..nn {
                let r = split.v_inv.row(c) * rhs.rows(i * m, m);
                sub.row_mut(i).copy_from(&r);
            }
            let w = linalg::solve(&system(&Mat::from_element(1, 1, lam)), &sub)?;
            for i in 0..nn {
                wt.row_mut(i * m + c).copy_from(&w.row(i));
            }
        }
        for i in 0..nn {
            let blk = &split.v * wt.rows(i * m, m);
            out.rows_mut(i * m, m).copy_from(&blk);
        }
        Ok(out)
    }

    fn section_blocks(&self, f: &SectionField) -> Vec<Vector> {
        let fd = f.fiber_dim;
        if self.like.is_modal() {
            let modes = f.modes();
            (0..self.nblocks()).map(|j| Vector::from_column_slice(&modes[j * fd..(j + 1) * fd])).collect()
        } else {
            vec![Vector::from_column_slice(&f.values)]
        }
    }

    fn blocks_section(&self, v: &[Vector], fiber: usize) -> SectionField {
        let flat: Vec<C64> = v.iter().flat_map(|x| x.iter().cloned()).collect();
        if self.like.is_modal() {
            SectionField::from_modes(self.grid(), fiber, &flat)
        } else {
            SectionField { grid: self.grid().clone(), fiber_dim: fiber, values: flat }
        }
    }

    /// Per-block boundary operator pairs `(c̃⁺, c̃⁻)` in doubled slot layout.
    fn calderon_block(&self, b: usize) -> Result<(Mat, Mat)> {
        let n = self.nodes.len();
        let m = self.block_dim();
        let f = self.fiber;
        let s0 = slot_indices(self.npb, f, 0);
        let s1 = slot_indices(self.npb, f, 1);
        // columns: f₀ basis then f₁ basis; [u] = −f₀, [u'] = f₁
        let mut rhs = Mat::zeros(2 * n * m, 2 * m);
        for c in 0..m {
            rhs[(c, c)] = linalg::c(-1.0);
            rhs[(n * m + c, m + c)] = linalg::c(1.0);
        }
        let sol = self.solve_two_domain(b, &rhs)?;
        let d1 = &self.nodes.d1;
        let mut cp = Mat::zeros(2 * m, 2 * m);
        let mut cm = Mat::zeros(2 * m, 2 * m);
        for col in 0..2 * m {
            let dest = if col < m { s0[col] } else { s1[col - m] };
            for c in 0..m {
                let up0 = sol[(c, col)];
                let um0 = sol[(n * m + c, col)];
                let mut dup = C64::new(0.0, 0.0);
                let mut dum = C64::new(0.0, 0.0);
                for j in 0..n {
                    dup += d1[(0, j)] * sol[(j * m + c, col)];
                    dum -= d1[(0, j)] * sol[((n + j) * m + c, col)];
                }
                // c̃⁺f = −(u(0⁺), −u'(0⁺)), c̃⁻f = (u(0⁻), −u'(0⁻))
                cp[(s0[c], dest)] = -up0;
                cp[(s1[c], dest)] = dup;
                cm[(s0[c], dest)] = um0;
                cm[(s1[c], dest)] = -dum;
            }
        }
        Ok((cp, cm))
    }

    /// Per-block DtN map `−∂_s P v|_{s=0}` from one side.
    fn dtn_block(&self, b: usize, side: Side) -> Result<Mat> {
        let n = self.nodes.len();
        let m = self.block_dim();
        let mut rhs = Mat::zeros(n * m, m);
        for c in 0..m {
            rhs[(c, c)] = linalg::c(1.0);
        }
        let sol = self.solve_half(b, side, &rhs)?;
        let mut out = Mat::zeros(m, m);
        for col in 0..m {
            for c in 0..m {
                let mut d = C64::new(0.0, 0.0);
                for j in 0..n {
                    d += self.nodes.d1[(0, j)] * sol[(j * m + c, col)];
                }
                // on Ω⁻ the nodes run along σ = −s
                out[(c, col)] = -side.sign() * d;
            }
        }
        Ok(out)
    }
}

/// Section values at the nodes of one half-cylinder (`values[i]` at `s = ±nodes.s[i]`).
#[derive(Clone, Debug)]
pub struct NodalField {
    pub side: Side,
    pub s: Vec<f64>,
    pub values: Vec<SectionField>,
}

/// Solution of a two-domain problem.
#[derive(Clone, Debug)]
pub struct TwoDomainSolution {
    pub plus: NodalField,
    pub minus: NodalField,
}

/// Right-hand sides accepted by [`dirichlet_solve`].
pub enum DirichletRhs<'a> {
    /// `D̃u = g` with `g` sampled at the nodes of both halves (interface node ignored).
    Volume { plus: &'a [SectionField], minus: &'a [SectionField] },
    /// `D̃u = 0` away from `s = 0` with `[u] = jump`, `[∂_s u] = jump_ds`.
    Interface { jump: &'a SectionField, jump_ds: &'a SectionField },
    /// Interface source `δ(s) ⊗ f₀ + δ'(s) ⊗ f₁`, i.e. `ρ̃*f`.
    Source { f0: &'a SectionField, f1: &'a SectionField },
}

/// Direct solve of the Dirichlet realization on `Ω = (−T, T) × Σ`.
pub fn dirichlet_solve(p: &EllipticProblem, rhs: DirichletRhs<'_>) -> Result<TwoDomainSolution> {
    let n = p.nodes.len();
    let m = p.block_dim();
    let f = p.fiber;
    let nb = p.nblocks();
    let mut per_block: Vec<Mat> = (0..nb).map(|_| Mat::zeros(2 * n * m, 1)).collect();
    match rhs {
        DirichletRhs::Volume { plus, minus } => {
            if plus.len() != n || minus.len() != n {
                return Err(Error::Invalid(format!("volume data needs {n} nodes per side")));
            }
            for (h, side) in [plus, minus].into_iter().enumerate() {
                for (i, g) in side.iter().enumerate().take(n - 1).skip(1) {
                    for (b, v) in p.section_blocks(g).into_iter().enumerate() {
                        per_block[b].rows_mut((h * n + i) * m, m).copy_from(&v);
                    }
                }
            }
        }
        DirichletRhs::Interface { jump, jump_ds } => {
            for (b, v) in p.section_blocks(jump).into_iter().enumerate() {
                per_block[b].rows_mut(0, m).copy_from(&v);
            }
            for (b, v) in p.section_blocks(jump_ds).into_iter().enumerate() {
                per_block[b].rows_mut(n * m, m).copy_from(&v);
            }
        }
        DirichletRhs::Source { f0, f1 } => {
            // δ ⊗ w gives [∂_s u] = −w; δ' ⊗ w gives [u] = −w
            for (b, v) in p.section_blocks(f1).into_iter().enumerate() {
                per_block[b].rows_mut(0, m).copy_from(&(-v));
            }
            for (b, v) in p.section_blocks(f0).into_iter().enumerate() {
                per_block[b].rows_mut(n * m, m).copy_from(&(-v));
            }
        }
    }
    let sols = per_block
        .par_iter()
        .enumerate()
        .map(|(b, r)| p.solve_two_domain(b, r))
        .collect::<Result<Vec<_>>>()?;
    let collect = |h: usize, side: Side| NodalField {
        side,
        s: p.nodes.s.iter().map(|s| side.sign() * s).collect(),
        values: (0..n)
            .map(|i| {
                let v: Vec<Vector> =
                    sols.iter().map(|s| s.view(((h * n + i) * m, 0), (m, 1)).column(0).into_owned()).collect();
                p.blocks_section(&v, f)
            })
            .collect(),
    };
    Ok(TwoDomainSolution { plus: collect(0, Side::Plus), minus: collect(1, Side::Minus) })
}

/// `P_{Ω±} v`: solves `D̃u = 0` on one half with `u|_Σ = v`, `u|_{s=±T} = 0`.
pub fn poisson(p: &EllipticProblem, side: Side, v: &SectionField) -> Result<NodalField> {
    let n = p.nodes.len();
    let m = p.block_dim();
    let blocks = p.section_blocks(v);
    let sols = blocks
        .par_iter()
        .enumerate()
        .map(|(b, vb)| {
            let mut rhs = Mat::zeros(n * m, 1);
            rhs.rows_mut(0, m).copy_from(vb);
            p.solve_half(b, side, &rhs)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = (0..n)
        .map(|i| {
            let v: Vec<Vector> = sols.iter().map(|s| s.view((i * m, 0), (m, 1)).column(0).into_owned()).collect();
            p.blocks_section(&v, p.fiber)
        })
        .collect();
    Ok(NodalField { side, s: p.nodes.s.iter().map(|s| side.sign() * s).collect(), values })
}

#[derive(Clone, Debug)]
pub struct CalderonProjectors {
    pub c_plus: DenseOperator,
    pub c_minus: DenseOperator,
    pub residuals: ProjectorResiduals,
    /// Profile of `(c̃⁺)² − c̃⁺` over band-limited modes.
    pub idempotency_profile: DecayTable,
}

/// `c̃^± = ∓ρ̃^± D̃_Ω⁻¹ ρ̃*σ̃`, assembled blockwise from interface-jump solves; the
/// residuals use the charge `[[0, τ], [τ, 0]]`.
pub fn calderon_projectors(p: &EllipticProblem, tau: &[f64]) -> Result<CalderonProjectors> {
    if tau.len() != p.fiber {
        return Err(Error::Invalid(format!("τ has {} entries for fiber {}", tau.len(), p.fiber)));
    }
    let f = p.fiber;
    let pairs = (0..p.nblocks()).into_par_iter().map(|b| p.calderon_block(b)).collect::<Result<Vec<_>>>()?;
    let (cp, cm): (Vec<Mat>, Vec<Mat>) = pairs.into_iter().unzip();
    let c_plus = from_blocks_like(&p.like, 2 * f, 2 * f, cp);
    let c_minus = from_blocks_like(&p.like, 2 * f, 2 * f, cm);
    let t = linalg::diag_real(tau);
    let q = DenseOperator::fiber_constant(p.grid(), &linalg::block2(&Mat::zeros(f, f), &t, &t, &Mat::zeros(f, f)));
    let residuals = projector_residuals(&c_plus, &c_minus, &q);
    let g = p.grid().clone();
    let idem = c_plus.compose(&c_plus).sub(&c_plus);
    let idempotency_profile = smoothing_order_profile_on(&idem, &[1, 2, 3, 4], |j| g.is_band_limited(j));
    Ok(CalderonProjectors { c_plus, c_minus, residuals, idempotency_profile })
}

/// `q̃ = [[0, 1], [1, 0]]`.
pub fn euclidean_charge(grid: &GridSpec, f: usize) -> DenseOperator {
    let id = DenseOperator::identity(grid, f);
    let z = DenseOperator::zero(grid, f, f);
    DenseOperator::join2(&z, &id, &id, &z)
}

/// `σ̃ = [[0, −1], [1, 0]]`.
pub fn euclidean_sigma(grid: &GridSpec, f: usize) -> DenseOperator {
    let id = DenseOperator::identity(grid, f);
    let z = DenseOperator::zero(grid, f, f);
    DenseOperator::join2(&z, &id.scale(linalg::c(-1.0)), &id, &z)
}

/// Dirichlet-to-Neumann map `N_{Ω±} v = −∂_s P_{Ω±} v|_Σ`.
pub fn dtn_map(p: &EllipticProblem, side: Side) -> Result<DenseOperator> {
    let f = p.fiber;
    let blocks = (0..p.nblocks()).into_par_iter().map(|b| p.dtn_block(b, side)).collect::<Result<Vec<_>>>()?;
    Ok(from_blocks_like(&p.like, f, f, blocks))
}

/// `diag(⟨k⟩^{1/2}, ⟨k⟩^{−1/2})` on Cauchy data, `⟨k⟩ = (1 + |k|²)^{1/2}`.
pub fn energy_weight(grid: &GridSpec, f: usize, power: f64) -> DenseOperator {
    DenseOperator::multiplier(grid, 2 * f, 2 * f, |_, k| {
        let jk = (1.0 + k.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let mut d = vec![jk.powf(0.5 * power); f];
        d.extend(std::iter::repeat_n(jk.powf(-0.5 * power), f));
        linalg::diag_real(&d)
    })
}

/// Conjugation `W A W⁻¹` by the energy weight, making both Cauchy slots order zero.
pub fn energy_balanced(a: &DenseOperator) -> DenseOperator {
    let f = a.fiber_in / 2;
    energy_weight(&a.grid, f, 1.0).compose(a).compose(&energy_weight(&a.grid, f, -1.0))
}

/// Bounds `[c₁, c₂]` of the Rayleigh quotients of `Re N` against `(1 − Δ)^{1/2}`.
pub fn dtn_coercivity(n: &DenseOperator) -> (f64, f64) {
    let f = n.fiber_in;
    let w = DenseOperator::multiplier(&n.grid, f, f, |_, k| {
        let jk = (1.0 + k.iter().map(|x| x * x).sum::<f64>()).sqrt();
        linalg::diag_real(&vec![jk.powf(-0.5); f])
    });
    let re = n.add(&n.adjoint_h()).scale(linalg::c(0.5));
    let m = w.compose(&re).compose(&w);
    m.blocks()
        .par_iter()
        .map(|b| {
            let (vals, _) = linalg::herm_eig(b);
            (vals[0], vals[vals.len() - 1])
        })
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)))
}

/// Hadamard versus Calderón projectors.
#[derive(Clone, Debug, Serialize)]
pub struct ProjectorComparison {
    /// Energy-balanced per-mode norm of `c^± − c̃^±` (larger of the two signs).
    pub profile: DecayTable,
    /// `(mode, |k|, ‖c⁺ − c̃⁺‖, ‖c⁻ − c̃⁻‖)` with the balanced norm.
    pub per_mode: Vec<(usize, f64, f64, f64)>,
}

pub fn compare_projectors(c: &HadamardProjectors, ct: &CalderonProjectors, m_list: &[i32]) -> ComparisonOrError {
    let g = c.c_plus.grid.clone();
    if ct.c_plus.grid != g || ct.c_plus.fiber_in != c.c_plus.fiber_in {
        return Err(Error::Invalid("projectors live on different spaces".into()));
    }
    let dp = energy_balanced(&c.c_plus.sub(&ct.c_plus));
    let dm = energy_balanced(&c.c_minus.sub(&ct.c_minus));
    let per_mode: Vec<(usize, f64, f64, f64)> = (0..g.points())
        .into_par_iter()
        .filter(|&j| g.is_band_limited(j))
        .map(|j| (j, g.kabs(j), dp.mode_column_norm(j), dm.mode_column_norm(j)))
        .collect();
    let norms = per_mode.iter().map(|&(j, kabs, a, b)| (j, g.mode(j), kabs, a.max(b))).collect();
    Ok(ProjectorComparison { profile: DecayTable::from_norms(m_list, norms), per_mode })
}

pub type ComparisonOrError = Result<ProjectorComparison>;

/// Reflection defect `‖c̃⁻ − K c̃⁺ K‖` with `K = diag(τ, −τ)`.
pub fn reflection_defect(ct: &CalderonProjectors, tau: &[f64]) -> f64 {
    let mut d = tau.to_vec();
    d.extend(tau.iter().map(|t| -t));
    let k = DenseOperator::fiber_constant(&ct.c_plus.grid, &linalg::diag_real(&d));
    ct.c_minus.dist(&k.compose(&ct.c_plus).compose(&k))
}

/// Both sides of the two elliptic Green identities on one half-cylinder.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct GreenIdentityReport {
    pub lhs1: C64,
    pub rhs1: C64,
    pub lhs2: C64,
    pub rhs2: C64,
    /// `max(|lhs1 − rhs1|, |lhs2 − rhs2|)` divided by the largest term.
    pub residual: f64,
}

fn d_s(p: &EllipticProblem, u: &NodalField) -> Vec<SectionField> {
    let n = p.nodes.len();
    let sgn = u.side.sign();
    (0..n)
        .map(|i| {
            let mut acc = u.values[0].scale(linalg::c(0.0));
            for j in 0..n {
                acc = &acc + &u.values[j].scale(p.nodes.d1[(i, j)] * sgn);
            }
            acc
        })
        .collect()
}

fn apply_d(p: &EllipticProblem, a: &TimeAnalyticOperator, u: &NodalField) -> Vec<SectionField> {
    let n = p.nodes.len();
    (0..n)
        .map(|i| {
            let mut acc = a.eval(linalg::c(u.s[i])).apply(&u.values[i]);
            for j in 0..n {
                acc = &acc - &u.values[j].scale(p.nodes.d2[(i, j)]);
            }
            acc
        })
        .collect()
}

fn trace_pair(u: &NodalField, du: &[SectionField], i: usize) -> (SectionField, SectionField) {
    (u.values[i].clone(), du[i].scale(linalg::c(-1.0)))
}

/// Volume pairing `∫ (u|v) ds` over one half, with Clenshaw–Curtis weights.
fn volume(p: &EllipticProblem, u: &[SectionField], v: &[SectionField]) -> C64 {
    u.iter().zip(v).zip(&p.nodes.weights).map(|((a, b), w)| a.inner(b) * *w).sum()
}

/// Green identities with `ρ̃ = (u, −∂_s u)` at `s = 0` and at the far end `s = ±T`.
pub fn green_identities(p: &EllipticProblem, u: &NodalField, v: &NodalField) -> Result<GreenIdentityReport> {
    if u.side != v.side {
        return Err(Error::Invalid("sections live on different half-cylinders".into()));
    }
    let sgn = u.side.sign();
    let n = p.nodes.len();
    let a_star = p.a_tilde.adjoint_h();
    let du = d_s(p, u);
    let dv = d_s(p, v);
    let dtv = apply_d(p, &p.a_tilde, v);
    let dtu = apply_d(p, &p.a_tilde, u);
    let dsu = apply_d(p, &a_star, u);

    let lhs1 = volume(p, &u.values, &dtv) - volume(p, &dsu, &v.values);
    let lhs2 = volume(p, &u.values, &dtv) + volume(p, &dtu, &v.values);
    let re_a = p.a_tilde.add(&a_star).scale(linalg::c(0.5));
    let re_v: Vec<SectionField> = (0..n).map(|i| re_a.eval(linalg::c(v.s[i])).apply(&v.values[i])).collect();
    let eta = volume(p, &du, &dv) + volume(p, &u.values, &re_v);

    let pair = |(a0, a1): &(SectionField, SectionField), (b0, b1): &(SectionField, SectionField), sigma: bool| {
        if sigma {
            // (a|σ̃b) = (a₀|−b₁) + (a₁|b₀)
            -a0.inner(b1) + a1.inner(b0)
        } else {
            a0.inner(b1) + a1.inner(b0)
        }
    };
    let (ru0, rv0) = (trace_pair(u, &du, 0), trace_pair(v, &dv, 0));
    let (rut, rvt) = (trace_pair(u, &du, n - 1), trace_pair(v, &dv, n - 1));
    let rhs1 = (pair(&ru0, &rv0, true) - pair(&rut, &rvt, true)) * sgn;
    let rhs2 = eta * 2.0 - (pair(&ru0, &rv0, false) - pair(&rut, &rvt, false)) * sgn;
    let scale = [lhs1.norm(), rhs1.norm(), lhs2.norm(), rhs2.norm(), eta.norm()].into_iter().fold(1e-300, f64::max);
    let residual = (lhs1 - rhs1).norm().max((lhs2 - rhs2).norm()) / scale;
    Ok(GreenIdentityReport { lhs1, rhs1, lhs2, rhs2, residual })
}

#[cfg(test)]
mod tests;
