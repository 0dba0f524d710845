use super::diffop::DiffOp;
use super::tfield::{TField, TMat};
use crate::linalg::{self, Mat, C64};
use crate::spectral_core::{GridSpec, TimeAnalyticOperator};
use crate::{Error, Result};

/// Orders carried beyond the reported Taylor order so that derivative losses in the
/// curvature and reduction pipeline still leave `D + 1` exact coefficients.
pub const WORK_EXTRA: usize = 4;

/// Riemannian family `h_t` on the torus as a Taylor series in `t`.
#[derive(Clone, Debug)]
pub struct MetricFamily {
    pub grid: GridSpec,
    pub taylor_order: usize,
    /// Working series with `taylor_order + 1 + WORK_EXTRA` coefficients.
    pub h: TMat,
    pub preset_name: String,
    pub min_eig: f64,
}

impl MetricFamily {
    fn finish(grid: &GridSpec, taylor_order: usize, h: TMat, name: &str) -> Result<Self> {
        if taylor_order < 1 {
            return Err(Error::Invalid("metric family needs taylor_order >= 1".into()));
        }
        let h0 = h.coeff_field(0);
        let mut min_eig = f64::INFINITY;
        for m in &h0 {
            if linalg::max_abs(&(m - m.transpose())) > 1e-12 || m.iter().any(|z| z.im != 0.0) {
                return Err(Error::Invalid("h0 is not real symmetric".into()));
            }
            min_eig = min_eig.min(linalg::min_herm_eig(m));
        }
        if min_eig <= 0.0 {
            return Err(Error::Invalid(format!("h0 is not positive definite (min eigenvalue {min_eig:e})")));
        }
        Ok(Self { grid: grid.clone(), taylor_order, h, preset_name: name.into(), min_eig })
    }

    fn work_len(taylor_order: usize) -> usize {
        taylor_order + 1 + WORK_EXTRA
    }

    /// `h_t = f(t) δ` for a scalar Taylor series `f`.
    pub fn conformally_flat(grid: &GridSpec, taylor_order: usize, f: &[f64], name: &str) -> Result<Self> {
        let len = Self::work_len(taylor_order);
        let mut coeffs = f.to_vec();
        coeffs.resize(len, 0.0);
        coeffs.truncate(len);
        let series = TField::real_series(&coeffs);
        let h = TMat::from_fn(grid.dim, |i, j| if i == j { series.clone() } else { TField::zero(len) });
        Self::finish(grid, taylor_order, h, name)
    }

    pub fn static_flat(grid: &GridSpec, taylor_order: usize) -> Result<Self> {
        Self::conformally_flat(grid, taylor_order, &[1.0], "static-flat")
    }

    /// Flat slicing of de Sitter space, `h_t = e^{2Ht} δ`.
    pub fn de_sitter(grid: &GridSpec, hubble: f64, taylor_order: usize) -> Result<Self> {
        let len = Self::work_len(taylor_order);
        let mut f = Vec::with_capacity(len);
        let mut term = 1.0;
        for n in 0..len {
            f.push(term);
            term *= 2.0 * hubble / (n + 1) as f64;
        }
        Self::conformally_flat(grid, taylor_order, &f, "desitter-flat")
    }

    /// Polynomial family `Σ_n t^n h^{(n)}` from per-order tensor fields.
    ///
    /// `coeffs[n]` holds one matrix per grid point, or a single matrix for a spatially
    /// constant coefficient. Orders past the list are zero, so the series is exact.
    pub fn from_coeffs(grid: &GridSpec, taylor_order: usize, coeffs: &[Vec<Mat>], name: &str) -> Result<Self> {
        let d = grid.dim;
        let np = grid.points();
        let len = Self::work_len(taylor_order);
        for (n, c) in coeffs.iter().enumerate() {
            if c.len() != 1 && c.len() != np {
                return Err(Error::Invalid(format!("metric coefficient {n} has {} samples", c.len())));
            }
            if c.iter().any(|m| m.shape() != (d, d)) {
                return Err(Error::Invalid(format!("metric coefficient {n} is not {d}x{d}")));
            }
            if c.iter().any(|m| m.iter().any(|z| !z.re.is_finite() || z.im != 0.0)) {
                return Err(Error::Invalid(format!("metric coefficient {n} is not real")));
            }
            if c.iter().any(|m| linalg::max_abs(&(m - m.transpose())) > 1e-12) {
                return Err(Error::Invalid(format!("metric coefficient {n} is not symmetric")));
            }
        }
        let h = TMat::from_fn(d, |i, j| TField {
            c: (0..len)
                .map(|n| match coeffs.get(n) {
                    Some(c) => {
                        let v: Vec<C64> = c.iter().map(|m| m[(i, j)]).collect();
                        if v.iter().all(|z| *z == v[0]) {
                            vec![v[0]]
                        } else {
                            v
                        }
                    }
                    None => vec![C64::new(0.0, 0.0)],
                })
                .collect(),
        });
        Self::finish(grid, taylor_order, h, name)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn work_len_of(&self) -> usize {
        self.h.len()
    }

    /// Reported coefficients `h^{(0)}, …, h^{(D)}`, one matrix per point (or one if constant).
    pub fn coeffs(&self) -> Vec<Vec<Mat>> {
        (0..=self.taylor_order).map(|n| self.h.coeff_field(n)).collect()
    }

    pub fn is_x_constant(&self) -> bool {
        self.h.e.iter().all(|f| f.is_x_constant())
    }

    /// `r = ½ ∂_t h h⁻¹` as a matrix series acting on covector columns.
    pub fn r_series(&self) -> TMat {
        self.h.dt().mul(&self.h.inverse()).scale(C64::new(0.5, 0.0))
    }

    /// Solution of `∂_t u = −u r`, `u(0) = 1` by the coefficient recursion.
    pub fn transport_series(&self) -> TMat {
        let r = self.r_series();
        let len = r.len() + 1;
        let d = self.dim();
        let mut coeffs: Vec<Vec<Mat>> = vec![vec![linalg::eye(d)]];
        let rc: Vec<Vec<Mat>> = (0..r.len()).map(|n| r.coeff_field(n)).collect();
        for n in 0..len - 1 {
            let np = (0..=n)
                .map(|k| coeffs[k].len().max(rc[n - k].len()))
                .max()
                .unwrap_or(1);
            let next: Vec<Mat> = (0..np)
                .map(|p| {
                    let mut acc = linalg::zeros(d, d);
                    for k in 0..=n {
                        let uk = &coeffs[k][if coeffs[k].len() == 1 { 0 } else { p }];
                        let rk = &rc[n - k][if rc[n - k].len() == 1 { 0 } else { p }];
                        acc += uk * rk;
                    }
                    acc * C64::new(-1.0 / (n + 1) as f64, 0.0)
                })
                .collect();
            coeffs.push(next);
        }
        TMat::from_fn(d, |i, j| TField {
            c: coeffs
                .iter()
                .map(|pts| {
                    let v: Vec<C64> = pts.iter().map(|m| m[(i, j)]).collect();
                    if v.iter().all(|z| *z == v[0]) {
                        vec![v[0]]
                    } else {
                        v
                    }
                })
                .collect(),
        })
    }

    /// Per-order sup norm of `u h uᵀ − h₀`, orders `0..=D−1`.
    pub fn transport_invariance_residual(&self) -> Vec<f64> {
        let u = self.transport_series();
        let w = u.mul(&self.h).mul(&u.transpose());
        let h0 = self.h.truncate(1);
        (0..self.taylor_order)
            .map(|n| {
                (0..self.dim() * self.dim())
                    .map(|e| {
                        let mut c = w.e[e].c[n].clone();
                        if n == 0 {
                            let z = &h0.e[e].c[0];
                            for (p, v) in c.iter_mut().enumerate() {
                                *v -= if z.len() == 1 { z[0] } else { z[p] };
                            }
                        }
                        c.iter().map(|z| z.norm()).fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// `log(h₀⁻¹ h_t)` as a matrix series with vanishing constant term.
    fn log_ratio(&self) -> TMat {
        let d = self.dim();
        let len = self.h.len();
        let h0inv = self.h.truncate(1).inverse();
        let mut x = h0inv.pad(len).mul(&self.h).sub(&TMat::identity(d, len));
        for f in x.e.iter_mut() {
            f.c[0] = vec![C64::new(0.0, 0.0)];
        }
        let mut acc = x.clone();
        let mut pow = x.clone();
        for k in 2..len {
            pow = pow.mul(&x);
            let s = if k % 2 == 0 { -1.0 } else { 1.0 } / k as f64;
            acc = acc.add(&pow.scale(C64::new(s, 0.0)));
        }
        acc
    }

    /// `s_t = |h_t|^{1/4} |h₀|^{−1/4} = exp(¼ tr log(h₀⁻¹ h_t))`.
    pub fn density_factor(&self) -> TField {
        self.log_ratio().trace().scale(C64::new(0.25, 0.0)).exp0()
    }

    /// `|h₀|` pointwise (one value if constant).
    pub fn det_h0(&self) -> Vec<f64> {
        self.h.coeff_field(0).iter().map(|m| m.determinant().re).collect()
    }
}

/// `r = ½ ∂_t h h⁻¹` as a series of pointwise multiplication operators on covector fibers.
pub fn r_tensor(h: &MetricFamily) -> Result<TimeAnalyticOperator> {
    let r = h.r_series();
    Ok(tmat_series(&r, h.taylor_order, &h.grid))
}

/// Taylor coefficients of the transport `u(t)` with `∂_t u = −u r`, `u(0) = 1`.
///
/// Fails when `u h uᵀ = h₀` is violated above round-off through order `D − 1`.
pub fn parallel_transport(h: &MetricFamily) -> Result<TimeAnalyticOperator> {
    let res = h.transport_invariance_residual();
    let scale = h.h.max_abs().max(1.0);
    if let Some((n, v)) = res.iter().enumerate().find(|(_, v)| **v > 1e-10 * scale) {
        return Err(Error::Identity(format!("u h u^T - h0 = {v:e} at order {n}")));
    }
    Ok(tmat_series(&h.transport_series(), h.taylor_order, &h.grid))
}

pub(crate) fn tmat_series(m: &TMat, order: usize, grid: &GridSpec) -> TimeAnalyticOperator {
    let op = DiffOp::from_tmat(m);
    let n = (order + 1).min(m.len());
    let coeffs = (0..n)
        .map(|k| {
            if op.is_empty() {
                crate::spectral_core::DenseOperator::zero(grid, m.n, m.n)
            } else {
                op.to_operator(k, grid)
            }
        })
        .collect();
    TimeAnalyticOperator::new(coeffs)
}
