//! Grids, spectral differentiation, Sobolev norms, weighted adjoints and decay profiles.

mod field;
mod grid;
mod operator;
mod profile;
mod series;

pub use field::{sobolev_norm, SectionField};
pub use grid::GridSpec;
pub use operator::{
    adjoint, derivative_op, slot_indices, ClaimedOrder, DenseOperator, InnerProduct, Positivity, Storage,
};
pub use profile::{
    smoothing_order_profile, smoothing_order_profile_on, DecayTable, OrderVerdict, ProfileRow, NOISE_FLOOR,
};
pub use series::TimeAnalyticOperator;

/// Cauchy data `(f₀, f₁)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyData {
    pub f0: SectionField,
    pub f1: SectionField,
}

impl CauchyData {
    pub fn new(f0: SectionField, f1: SectionField) -> Self {
        assert_eq!(f0.fiber_dim, f1.fiber_dim);
        assert_eq!(f0.grid, f1.grid);
        Self { f0, f1 }
    }

    /// Interleaved section on the doubled fiber (`point * 2f + slot * f + comp`).
    pub fn to_section(&self) -> SectionField {
        let f = self.f0.fiber_dim;
        let np = self.f0.grid.points();
        let mut values = Vec::with_capacity(2 * f * np);
        for p in 0..np {
            values.extend_from_slice(&self.f0.values[p * f..(p + 1) * f]);
            values.extend_from_slice(&self.f1.values[p * f..(p + 1) * f]);
        }
        SectionField { grid: self.f0.grid.clone(), fiber_dim: 2 * f, values }
    }

    pub fn from_section(s: &SectionField) -> Self {
        let f = s.fiber_dim / 2;
        let np = s.grid.points();
        let mut a = Vec::with_capacity(f * np);
        let mut b = Vec::with_capacity(f * np);
        for p in 0..np {
            a.extend_from_slice(&s.values[p * 2 * f..p * 2 * f + f]);
            b.extend_from_slice(&s.values[p * 2 * f + f..(p + 1) * 2 * f]);
        }
        Self {
            f0: SectionField { grid: s.grid.clone(), fiber_dim: f, values: a },
            f1: SectionField { grid: s.grid.clone(), fiber_dim: f, values: b },
        }
    }
}
