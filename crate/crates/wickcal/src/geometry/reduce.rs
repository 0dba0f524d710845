use super::diffop::DiffOp;
use super::metric::MetricFamily;
use super::spacetime::{packed_dim, packed_index, GravityOps, Spacetime};
use super::tfield::{TField, TMat};
use crate::linalg::{self, C64};
use crate::spectral_core::{DenseOperator, GridSpec, TimeAnalyticOperator};
use crate::{Error, Result};

/// Field content of a reduced operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bundle {
    Scalar,
    Covector,
    Sym2,
}

impl Bundle {
    pub fn fiber(self, d: usize) -> usize {
        match self {
            Bundle::Scalar => 1,
            Bundle::Covector => d + 1,
            Bundle::Sym2 => packed_dim(d + 1),
        }
    }

    /// Signature of the orthonormal fiber form.
    pub fn tau(self, d: usize) -> Vec<f64> {
        match self {
            Bundle::Scalar => vec![1.0],
            Bundle::Covector => std::iter::once(-1.0).chain(std::iter::repeat_n(1.0, d)).collect(),
            Bundle::Sym2 => {
                let mut t = vec![1.0];
                t.extend(std::iter::repeat_n(-1.0, d));
                t.extend(std::iter::repeat_n(1.0, packed_dim(d)));
                t
            }
        }
    }
}

/// Action of `u ↦ M u Mᵀ` on packed symmetric tensors.
pub fn sym_square(m: &TMat) -> TMat {
    let n = m.n;
    let pd = packed_dim(n);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    let len = m.len();
    TMat::from_fn(pd, |o, i| {
        let (a, b) = pairs[o];
        let (c, e) = pairs[i];
        debug_assert_eq!(packed_index(n, a, b), o);
        let mut v = m.get(a, c).mul(m.get(b, e));
        if c != e {
            v.add_assign(&m.get(a, e).mul(m.get(b, c)));
        }
        if v.len() < len { v.pad(len) } else { v }
    })
}

fn block_time_space(d: usize, len: usize, space: &TMat) -> TMat {
    TMat::from_fn(d + 1, |i, j| match (i, j) {
        (0, 0) => TField::scalar(1.0, len),
        (0, _) | (_, 0) => TField::zero(len),
        _ => space.get(i - 1, j - 1).clone(),
    })
}

fn pointwise_tmat(n: usize, len: usize, mats: &[crate::linalg::Mat]) -> TMat {
    TMat::from_fn(n, |i, j| {
        let v: Vec<C64> = mats.iter().map(|m| m[(i, j)]).collect();
        let c0 = if v.iter().all(|z| *z == v[0]) { vec![v[0]] } else { v };
        TField { c: vec![c0] }.pad(len)
    })
}

fn scalar_field(len: usize, vals: &[f64]) -> TField {
    let v: Vec<C64> = vals.iter().map(|x| C64::new(*x, 0.0)).collect();
    let c0 = if v.iter().all(|z| *z == v[0]) { vec![v[0]] } else { v };
    TField { c: vec![c0] }.pad(len)
}

/// Reduction maps `S = E ∘ s ∘ U` per bundle: parallel transport `U`, density factor `s`,
/// and the time-independent frame `E` making the reduced fiber form `τ`-diagonal.
#[derive(Clone, Debug)]
pub struct Frames {
    pub s: TField,
    pub u: TMat,
    pub len: usize,
    quarter_det: TField,
    inv_sqrt_h0: TMat,
}

impl Frames {
    pub fn new(metric: &MetricFamily) -> Self {
        let d = metric.dim();
        let len = metric.h.len();
        let h0 = metric.h.coeff_field(0);
        let qd: Vec<f64> = metric.det_h0().iter().map(|x| x.powf(0.25)).collect();
        let isq: Vec<_> = h0.iter().map(|m| linalg::herm_fn(m, |x| x.powf(-0.5))).collect();
        Self {
            s: metric.density_factor(),
            u: metric.transport_series(),
            len,
            quarter_det: scalar_field(len, &qd),
            inv_sqrt_h0: pointwise_tmat(d, len, &isq),
        }
    }

    /// Time-independent orthonormalizing frame `E`.
    pub fn e(&self, bundle: Bundle) -> TMat {
        let d = self.inv_sqrt_h0.n;
        let q = &self.quarter_det;
        match bundle {
            Bundle::Scalar => TMat::from_fn(1, |_, _| q.clone()),
            Bundle::Covector => {
                let m = block_time_space(d, self.len, &self.inv_sqrt_h0);
                TMat::from_fn(d + 1, |i, j| q.mul(m.get(i, j)))
            }
            Bundle::Sym2 => {
                let n = d + 1;
                let m = block_time_space(d, self.len, &self.inv_sqrt_h0);
                let sq = sym_square(&m);
                let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
                TMat::from_fn(packed_dim(n), |i, j| {
                    let (a, b) = pairs[i];
                    let w = if a == b { std::f64::consts::SQRT_2 } else { 2.0 };
                    q.mul(sq.get(i, j)).scale(C64::new(w, 0.0))
                })
            }
        }
    }

    /// Full reduction `S = E s U` for a bundle.
    pub fn s_map(&self, bundle: Bundle) -> TMat {
        let d = self.u.n;
        let u = match bundle {
            Bundle::Scalar => TMat::identity(1, self.len),
            Bundle::Covector => block_time_space(d, self.len, &self.u),
            Bundle::Sym2 => sym_square(&block_time_space(d, self.len, &self.u)),
        };
        let su = TMat::from_fn(u.n, |i, j| self.s.mul(u.get(i, j)));
        self.e(bundle).mul(&su)
    }
}

/// Physical content of a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Model {
    /// `−□ + m²` on scalars.
    Scalar { mass2: f64 },
    /// Linearized gravity with cosmological constant `Λ`.
    Gravity { lambda: f64 },
}

/// Reduced operators in the orthonormal frame, kept as differential-operator series.
#[derive(Clone, Debug)]
pub struct ReducedGeometry {
    pub model: Model,
    pub spacetime: Spacetime,
    pub frames: Frames,
    /// `D̂ = ∂_t² + â` per bundle (scalar: one entry; gravity: `[D̂₁, D̂₂]`).
    pub dhat: Vec<DiffOp>,
    pub bundles: Vec<Bundle>,
    pub gravity: Option<GravityOps>,
    /// Reduced gauge differential `d̂ = S₂ d S₁⁻¹` (gravity only).
    pub d_hat: Option<DiffOp>,
    /// `max |coefficient of ∂_t² − 1|` over all `D̂`.
    pub leading_residual: f64,
    /// Largest coefficient of any `∂_t`-linear term in `D̂` (relative to the operator size).
    pub first_order_residual: f64,
}

impl ReducedGeometry {
    pub fn new(metric: &MetricFamily, model: Model) -> Result<Self> {
        let st = Spacetime::new(metric);
        let frames = Frames::new(metric);
        let grid = &metric.grid;
        let conj = |op: &DiffOp, out: Bundle, inn: Bundle| -> DiffOp {
            let so = frames.s_map(out);
            let si = frames.s_map(inn).inverse();
            DiffOp::from_tmat(&so).compose(op, grid).compose(&DiffOp::from_tmat(&si), grid)
        };
        let (bundles, ops, gravity, d_hat) = match model {
            Model::Scalar { mass2 } => {
                let d0 = st.d0_op(mass2);
                (vec![Bundle::Scalar], vec![conj(&d0, Bundle::Scalar, Bundle::Scalar)], None, None)
            }
            Model::Gravity { lambda } => {
                let g = st.gravity_ops(lambda);
                let d1 = conj(&g.d1, Bundle::Covector, Bundle::Covector);
                let d2 = conj(&g.d2, Bundle::Sym2, Bundle::Sym2);
                let dh = conj(&g.d, Bundle::Sym2, Bundle::Covector);
                (vec![Bundle::Covector, Bundle::Sym2], vec![d1, d2], Some(g), Some(dh))
            }
        };
        let mut leading: f64 = 0.0;
        let mut first: f64 = 0.0;
        for op in &ops {
            if op.max_time_order() > 2 {
                return Err(Error::Numerical("reduced operator has time order above two".into()));
            }
            let lead = op.select(|a| a[0] == 2);
            let keys: Vec<_> = lead.terms.keys().cloned().collect();
            if keys != vec![[2, 0, 0, 0]] {
                return Err(Error::Numerical(format!("unexpected leading terms {keys:?}")));
            }
            let id = DiffOp::identity(op.nout, op.len());
            let diff = lead.time_slice(2).sub(&id);
            leading = leading.max(diff.max_abs());
            let scale = op.max_abs().max(1.0);
            first = first.max(op.select(|a| a[0] == 1).max_abs() / scale);
        }
        Ok(Self {
            model,
            spacetime: st,
            frames,
            dhat: ops,
            bundles,
            gravity,
            d_hat,
            leading_residual: leading,
            first_order_residual: first,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.spacetime.grid
    }

    /// `â = D̂ − ∂_t²` for bundle slot `i`, dropping the (vanishing) `∂_t`-linear part.
    pub fn a_hat(&self, i: usize) -> DiffOp {
        self.dhat[i].time_slice(0)
    }

    /// `(d̂₀, d̂₁)` with `d̂ = d̂₀ ∂_t + d̂₁`.
    pub fn d_hat_parts(&self) -> Option<(DiffOp, DiffOp)> {
        self.d_hat.as_ref().map(|d| (d.time_slice(1), d.time_slice(0)))
    }
}

/// Taylor coefficients `0..=order` of a purely spatial operator series.
pub fn series_of(op: &DiffOp, order: usize, grid: &GridSpec) -> Result<TimeAnalyticOperator> {
    let known = op.len();
    if known != usize::MAX && known < order + 1 {
        return Err(Error::Truncation(format!(
            "operator known to {known} orders, {} requested",
            order + 1
        )));
    }
    let coeffs = (0..=order).map(|n| op.to_operator(n, grid)).collect();
    Ok(TimeAnalyticOperator::new(coeffs))
}

/// Reduced operators `â₁, â₂, d̂₀, d̂₁` as Taylor series of spatial operators.
#[derive(Clone, Debug)]
pub struct ReducedOps {
    pub a1: TimeAnalyticOperator,
    pub a2: TimeAnalyticOperator,
    pub d0: TimeAnalyticOperator,
    pub d1: TimeAnalyticOperator,
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    pub leading_residual: f64,
    pub first_order_residual: f64,
}

/// Reduced gravity operators for `h_t` and cosmological constant `Λ` in the orthonormal frame.
pub fn build_reduced_ops(h: &MetricFamily, lambda: f64) -> Result<ReducedOps> {
    let geo = ReducedGeometry::new(h, Model::Gravity { lambda })?;
    reduced_ops_from(&geo, h.taylor_order)
}

pub fn reduced_ops_from(geo: &ReducedGeometry, order: usize) -> Result<ReducedOps> {
    let grid = geo.grid();
    let (d0, d1) = geo
        .d_hat_parts()
        .ok_or_else(|| Error::Invalid("reduced gauge operators need the gravity model".into()))?;
    let d = geo.spacetime.d;
    Ok(ReducedOps {
        a1: series_of(&geo.a_hat(0), order, grid)?,
        a2: series_of(&geo.a_hat(1), order, grid)?,
        d0: series_of(&d0, order, grid)?,
        d1: series_of(&d1, order, grid)?,
        tau1: Bundle::Covector.tau(d),
        tau2: Bundle::Sym2.tau(d),
        leading_residual: geo.leading_residual,
        first_order_residual: geo.first_order_residual,
    })
}

/// `τ` as a fiber-constant operator.
pub fn tau_operator(grid: &GridSpec, tau: &[f64]) -> DenseOperator {
    DenseOperator::fiber_constant(grid, &linalg::diag_real(tau))
}
