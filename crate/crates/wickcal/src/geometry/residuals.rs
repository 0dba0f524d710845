use serde::Serialize;

use super::diffop::DiffOp;
use super::spacetime::GravityOps;
use crate::linalg;
use crate::spectral_core::{DenseOperator, GridSpec, TimeAnalyticOperator};

/// Per-Taylor-order norms of one identity residual.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityResidual {
    pub name: String,
    /// Operator norm of the residual coefficient on band-limited modes, per order.
    pub absolute: Vec<f64>,
    /// Largest norm among the terms entering the identity, over all checked orders.
    pub scale: f64,
    pub relative: Vec<f64>,
    pub max_relative: f64,
}

impl IdentityResidual {
    fn new(name: &str, absolute: Vec<f64>, scale: f64) -> Self {
        let s = if scale > 0.0 { scale } else { 1.0 };
        let relative: Vec<f64> = absolute.iter().map(|a| a / s).collect();
        let max_relative = relative.iter().cloned().fold(0.0, f64::max);
        Self { name: name.into(), absolute, scale, relative, max_relative }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugeResidualReport {
    /// Highest Taylor order checked.
    pub order: usize,
    pub identities: Vec<IdentityResidual>,
}

impl GaugeResidualReport {
    pub fn get(&self, name: &str) -> Option<&IdentityResidual> {
        self.identities.iter().find(|r| r.name == name)
    }

    pub fn max_relative(&self) -> f64 {
        self.identities.iter().map(|r| r.max_relative).fold(0.0, f64::max)
    }
}

fn band_norm(op: &DenseOperator) -> f64 {
    let g = op.grid.clone();
    op.restrict_modes(|j| g.is_band_limited(j)).op_norm()
}

fn series_norms(a: &TimeAnalyticOperator, upto: usize) -> Vec<f64> {
    (0..=upto).map(|n| a.coeffs.get(n).map(band_norm).unwrap_or(0.0)).collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

/// Residuals of `∂_t d̂₀ = 0`, `2∂_t d̂₁ + â₂d̂₀ − d̂₀â₁ = 0` and
/// `∂_t² d̂₁ + â₂d̂₁ − d̂₁â₁ − d̂₀∂_t â₁ = 0`, per Taylor order through `D − 2`.
pub fn gauge_residuals(
    a1: &TimeAnalyticOperator,
    a2: &TimeAnalyticOperator,
    d0: &TimeAnalyticOperator,
    d1: &TimeAnalyticOperator,
) -> GaugeResidualReport {
    let order = a1
        .taylor_order()
        .min(a2.taylor_order())
        .min(d0.taylor_order())
        .min(d1.taylor_order())
        .saturating_sub(2);
    let two = crate::linalg::c(2.0);

    let i_res = d0.dt();
    let i_scale = max_of(&series_norms(d0, order));

    let p1 = d1.dt().scale(two);
    let p2 = a2.compose(d0);
    let p3 = d0.compose(a1);
    let ii = p1.add(&p2).sub(&p3);
    let ii_scale = [&p1, &p2, &p3]
        .iter()
        .map(|p| max_of(&series_norms(p, order)))
        .fold(0.0, f64::max);

    let q1 = d1.dt().dt();
    let q2 = a2.compose(d1);
    let q3 = d1.compose(a1);
    let q4 = d0.compose(&a1.dt());
    let iii = q1.add(&q2).sub(&q3).sub(&q4);
    let iii_scale = [&q1, &q2, &q3, &q4]
        .iter()
        .map(|p| max_of(&series_norms(p, order)))
        .fold(0.0, f64::max);

    GaugeResidualReport {
        order,
        identities: vec![
            IdentityResidual::new("dt_d0", series_norms(&i_res, order), i_scale),
            IdentityResidual::new("first_order", series_norms(&ii, order), ii_scale),
            IdentityResidual::new("zeroth_order", series_norms(&iii, order), iii_scale),
        ],
    }
}

/// Norm of Taylor coefficient `n` of a differential operator with time derivatives:
/// the largest band-limited operator norm among its `∂_t^p` slices.
pub fn diffop_coeff_norm(op: &DiffOp, n: usize, grid: &GridSpec) -> f64 {
    let mut best: f64 = 0.0;
    for p in 0..=op.max_time_order() {
        let slice = op.time_slice(p);
        if slice.is_empty() {
            continue;
        }
        let v = if slice.is_x_constant() {
            (0..grid.points())
                .filter(|&j| grid.is_band_limited(j))
                .map(|j| linalg::op_norm(&slice.symbol(n, &grid.wavevector(j))))
                .fold(0.0, f64::max)
        } else {
            band_norm(&slice.to_operator(n, grid))
        };
        best = best.max(v);
    }
    best
}

/// `PK = 0` and `D₂K − KD₁ = 0` on spacetime, per Taylor order `0..=order`.
pub fn spacetime_gauge_residuals(ops: &GravityOps, grid: &GridSpec, order: usize) -> Vec<IdentityResidual> {
    let pk = ops.p.compose(&ops.k, grid);
    let d2k = ops.d2.compose(&ops.k, grid);
    let kd1 = ops.k.compose(&ops.d1, grid);
    let comm = d2k.sub(&kd1);
    let norms = |op: &DiffOp| -> Vec<f64> { (0..=order).map(|n| diffop_coeff_norm(op, n, grid)).collect() };
    let idd_k = ops.k.compose(&ops.delta, grid).compose(&ops.k, grid);
    let pk_scale = max_of(&norms(&d2k)).max(max_of(&norms(&idd_k)));
    let comm_scale = max_of(&norms(&d2k)).max(max_of(&norms(&kd1)));
    vec![
        IdentityResidual::new("PK", norms(&pk), pk_scale),
        IdentityResidual::new("D2K-KD1", norms(&comm), comm_scale),
    ]
}
