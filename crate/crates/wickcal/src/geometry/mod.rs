//! Metric families in Gaussian time, Levi-Civita data of `−dt² + h_t`, the reduced
//! operators of linearized gravity and residual checks of their gauge identities.

mod constraint;
mod diffop;
mod metric;
mod reduce;
mod residuals;
mod spacetime;
mod tfield;

pub use constraint::{constraint_check, scalar_curvature, ConstraintResidual};
pub use diffop::{Coef, DiffOp, MultiIndex};
pub use metric::{parallel_transport, r_tensor, MetricFamily, WORK_EXTRA};
pub use reduce::{
    build_reduced_ops, reduced_ops_from, series_of, sym_square, tau_operator, Bundle, Frames, Model, ReducedGeometry,
    ReducedOps,
};
pub use residuals::{diffop_coeff_norm, gauge_residuals, spacetime_gauge_residuals, GaugeResidualReport, IdentityResidual};
pub use spacetime::{packed_dim, packed_index, GravityOps, Spacetime};
pub use tfield::{TField, TMat};

#[cfg(test)]
mod tests;
