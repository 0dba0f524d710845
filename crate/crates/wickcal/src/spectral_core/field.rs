use std::ops::{Add, Mul, Sub};

use super::GridSpec;
use crate::linalg::{Vector, C64};
use crate::{Error, Result};

/// Bundle-valued section sampled on the grid, laid out `point * fiber + comp`.
#[derive(Clone, Debug, PartialEq)]
pub struct SectionField {
    pub grid: GridSpec,
    pub fiber_dim: usize,
    pub values: Vec<C64>,
}

impl SectionField {
    pub fn new(grid: GridSpec, fiber_dim: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.points() * fiber_dim {
            return Err(Error::Invalid(format!(
                "section has {} values, expected {}",
                values.len(),
                grid.points() * fiber_dim
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid("section has non-finite entries".into()));
        }
        Ok(Self { grid, fiber_dim, values })
    }

    pub fn zeros(grid: &GridSpec, fiber_dim: usize) -> Self {
        Self {
            grid: grid.clone(),
            fiber_dim,
            values: vec![C64::new(0.0, 0.0); grid.points() * fiber_dim],
        }
    }

    pub fn from_fn(grid: &GridSpec, fiber_dim: usize, f: impl Fn(&[f64], usize) -> C64) -> Self {
        let mut values = Vec::with_capacity(grid.points() * fiber_dim);
        for p in 0..grid.points() {
            let x = grid.coords(p);
            for comp in 0..fiber_dim {
                values.push(f(&x, comp));
            }
        }
        Self { grid: grid.clone(), fiber_dim, values }
    }

    /// Builds a section from unitary Fourier coefficients (layout `mode * fiber + comp`).
    pub fn from_modes(grid: &GridSpec, fiber_dim: usize, modes: &[C64]) -> Self {
        Self {
            grid: grid.clone(),
            fiber_dim,
            values: grid.fft_fiber(modes, fiber_dim, true),
        }
    }

    /// Plane wave `e^{ik·x}` in component `comp`; unit norm for the mean-normalized pairing.
    pub fn plane_wave(grid: &GridSpec, fiber_dim: usize, mode: usize, comp: usize) -> Self {
        let mut modes = vec![C64::new(0.0, 0.0); grid.points() * fiber_dim];
        modes[mode * fiber_dim + comp] = C64::new((grid.points() as f64).sqrt(), 0.0);
        Self::from_modes(grid, fiber_dim, &modes)
    }

    /// Unitary Fourier coefficients.
    pub fn modes(&self) -> Vec<C64> {
        self.grid.fft_fiber(&self.values, self.fiber_dim, false)
    }

    /// Mean-normalized Fourier coefficients `f̂(k) = N⁻¹ Σ f e^{-ikx}`.
    pub fn fourier_coefficients(&self) -> Vec<C64> {
        let s = 1.0 / (self.grid.points() as f64).sqrt();
        self.modes().into_iter().map(|z| z * s).collect()
    }

    pub fn component(&self, comp: usize) -> Vec<C64> {
        self.values.iter().skip(comp).step_by(self.fiber_dim).cloned().collect()
    }

    pub fn at(&self, point: usize, comp: usize) -> C64 {
        self.values[point * self.fiber_dim + comp]
    }

    /// Mean-normalized flat pairing `N⁻¹ Σ conj(f)·g`.
    pub fn inner(&self, other: &Self) -> C64 {
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        s / self.grid.points() as f64
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            grid: self.grid.clone(),
            fiber_dim: self.fiber_dim,
            values: self.values.iter().map(|z| z * s).collect(),
        }
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.values)
    }

    /// Largest lattice frequency (sup norm over axes) carrying a coefficient above `tol`.
    pub fn bandwidth(&self, tol: f64) -> i64 {
        let modes = self.fourier_coefficients();
        let mut bw = 0;
        for j in 0..self.grid.points() {
            let amp = (0..self.fiber_dim)
                .map(|c| modes[j * self.fiber_dim + c].norm())
                .fold(0.0, f64::max);
            if amp > tol {
                bw = bw.max(self.grid.mode(j).iter().map(|m| m.abs()).max().unwrap_or(0));
            }
        }
        bw
    }

    /// Trigonometric-polynomial exactness relative to a declared cutoff.
    pub fn is_trig_exact(&self, cutoff: i64, tol: f64) -> bool {
        self.bandwidth(tol) <= cutoff
    }
}

fn zip_with(a: &SectionField, b: &SectionField, f: impl Fn(C64, C64) -> C64) -> SectionField {
    assert_eq!(a.grid, b.grid, "sections live on different grids");
    assert_eq!(a.fiber_dim, b.fiber_dim, "fiber mismatch");
    SectionField {
        grid: a.grid.clone(),
        fiber_dim: a.fiber_dim,
        values: a.values.iter().zip(&b.values).map(|(x, y)| f(*x, *y)).collect(),
    }
}

impl Add for &SectionField {
    type Output = SectionField;
    fn add(self, rhs: Self) -> SectionField {
        zip_with(self, rhs, |a, b| a + b)
    }
}

impl Sub for &SectionField {
    type Output = SectionField;
    fn sub(self, rhs: Self) -> SectionField {
        zip_with(self, rhs, |a, b| a - b)
    }
}

impl Mul<C64> for &SectionField {
    type Output = SectionField;
    fn mul(self, rhs: C64) -> SectionField {
        self.scale(rhs)
    }
}

/// `(1 + |k|²)^s`-weighted norm with mean-normalized coefficients, summed over components.
pub fn sobolev_norm(f: &SectionField, s: f64) -> f64 {
    let coef = f.fourier_coefficients();
    let mut acc = 0.0;
    for j in 0..f.grid.points() {
        let w = (1.0 + f.grid.k2(j)).powf(s);
        for comp in 0..f.fiber_dim {
            acc += w * coef[j * f.fiber_dim + comp].norm_sqr();
        }
    }
    acc.sqrt()
}
