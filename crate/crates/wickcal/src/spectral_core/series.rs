use super::DenseOperator;
use crate::linalg::{C64, I};
use crate::Result;

/// Truncated Taylor series `Σ_n t^n A_n` with operator coefficients.
#[derive(Clone, Debug)]
pub struct TimeAnalyticOperator {
    pub coeffs: Vec<DenseOperator>,
    /// Set once a product dropped terms above the retained order.
    pub truncated: bool,
}

impl TimeAnalyticOperator {
    pub fn new(coeffs: Vec<DenseOperator>) -> Self {
        assert!(!coeffs.is_empty(), "series needs at least one coefficient");
        Self { coeffs, truncated: false }
    }

    pub fn constant(a: DenseOperator, order: usize) -> Self {
        let z = DenseOperator::zero(&a.grid, a.fiber_out, a.fiber_in);
        let mut coeffs = vec![a];
        coeffs.extend(std::iter::repeat_n(z, order));
        Self::new(coeffs)
    }

    pub fn taylor_order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn fiber_in(&self) -> usize {
        self.coeffs[0].fiber_in
    }

    pub fn fiber_out(&self) -> usize {
        self.coeffs[0].fiber_out
    }

    pub fn at0(&self) -> &DenseOperator {
        &self.coeffs[0]
    }

    pub fn truncate(&self, order: usize) -> Self {
        let n = (order + 1).min(self.coeffs.len());
        Self { coeffs: self.coeffs[..n].to_vec(), truncated: self.truncated }
    }

    /// Horner evaluation at a complex time.
    pub fn eval(&self, t: C64) -> DenseOperator {
        let mut acc = self.coeffs[self.coeffs.len() - 1].clone();
        for a in self.coeffs.iter().rev().skip(1) {
            acc = acc.scale(t).add(a);
        }
        acc
    }

    pub fn dt(&self) -> Self {
        if self.coeffs.len() == 1 {
            let a = &self.coeffs[0];
            return Self::new(vec![DenseOperator::zero(&a.grid, a.fiber_out, a.fiber_in)]);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, a)| a.scale(C64::new(n as f64, 0.0)))
            .collect();
        Self { coeffs, truncated: self.truncated }
    }

    /// Cauchy product `self · other`, truncated at the smaller order.
    pub fn compose(&self, other: &Self) -> Self {
        let order = self.taylor_order().min(other.taylor_order());
        let coeffs = (0..=order)
            .map(|n| {
                let mut acc = self.coeffs[0].compose(&other.coeffs[n]);
                for k in 1..=n {
                    acc = acc.add(&self.coeffs[k].compose(&other.coeffs[n - k]));
                }
                acc
            })
            .collect();
        Self {
            coeffs,
            truncated: self.truncated
                || other.truncated
                || self.taylor_order() + other.taylor_order() > order,
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(&DenseOperator, &DenseOperator) -> DenseOperator) -> Self {
        let order = self.taylor_order().min(other.taylor_order());
        Self {
            coeffs: (0..=order).map(|n| f(&self.coeffs[n], &other.coeffs[n])).collect(),
            truncated: self.truncated || other.truncated,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|a| a.scale(s))
    }

    pub fn map(&self, f: impl Fn(&DenseOperator) -> DenseOperator) -> Self {
        Self { coeffs: self.coeffs.iter().map(f).collect(), truncated: self.truncated }
    }

    /// Coefficientwise flat adjoint, i.e. `a(t)^*` for real `t`.
    pub fn adjoint_h(&self) -> Self {
        self.map(|a| a.adjoint_h())
    }

    /// Substitution `t → i s`: `Ã_n = i^n A_n`.
    pub fn wick(&self) -> Self {
        let mut p = C64::new(1.0, 0.0);
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for a in &self.coeffs {
            coeffs.push(a.scale(p));
            p *= I;
        }
        Self { coeffs, truncated: self.truncated }
    }

    /// Series inverse by the recursion `X_n = -A₀⁻¹ Σ_{k≥1} A_k X_{n-k}`.
    pub fn inverse(&self) -> Result<Self> {
        let a0inv = self.coeffs[0].inverse()?;
        let mut xs = vec![a0inv.clone()];
        for n in 1..self.coeffs.len() {
            let mut acc = self.coeffs[1].compose(&xs[n - 1]);
            for k in 2..=n {
                acc = acc.add(&self.coeffs[k].compose(&xs[n - k]));
            }
            xs.push(a0inv.compose(&acc).scale(C64::new(-1.0, 0.0)));
        }
        Ok(Self { coeffs: xs, truncated: self.truncated })
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|a| a.op_norm()).fold(0.0, f64::max)
    }
}
