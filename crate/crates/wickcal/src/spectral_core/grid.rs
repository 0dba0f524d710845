use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::linalg::C64;
use crate::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Uniform grid on the flat torus `T^dim` of circumference `period`.
///
/// Points are stored row-major with axis 0 slowest. Fourier modes use the same
/// index layout as the FFT output, so index `i` on an axis carries the integer
/// frequency `i` for `i <= n/2` and `i - n` otherwise (lattice `{-n/2+1, …, n/2}`).
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub n_per_axis: usize,
    pub period: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n_per_axis: usize, period: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Invalid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if n_per_axis < 2 || !n_per_axis.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "n_per_axis must be a positive even integer, got {n_per_axis}"
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Invalid(format!("period must be positive, got {period}")));
        }
        Ok(Self { dim, n_per_axis, period })
    }

    pub fn periodic(dim: usize, n_per_axis: usize) -> Result<Self> {
        Self::new(dim, n_per_axis, 2.0 * PI)
    }

    pub fn points(&self) -> usize {
        self.n_per_axis.pow(self.dim as u32)
    }

    fn axis_indices(&self, j: usize) -> Vec<usize> {
        let n = self.n_per_axis;
        let mut out = vec![0; self.dim];
        let mut r = j;
        for a in (0..self.dim).rev() {
            out[a] = r % n;
            r /= n;
        }
        out
    }

    /// Integer frequencies of FFT index `j`.
    pub fn mode(&self, j: usize) -> Vec<i64> {
        let n = self.n_per_axis as i64;
        self.axis_indices(j)
            .into_iter()
            .map(|i| {
                let i = i as i64;
                if i <= n / 2 {
                    i
                } else {
                    i - n
                }
            })
            .collect()
    }

    pub fn mode_index(&self, m: &[i64]) -> usize {
        let n = self.n_per_axis as i64;
        m.iter().fold(0usize, |acc, &mi| acc * self.n_per_axis + mi.rem_euclid(n) as usize)
    }

    pub fn wavevector(&self, j: usize) -> Vec<f64> {
        let s = 2.0 * PI / self.period;
        self.mode(j).into_iter().map(|m| s * m as f64).collect()
    }

    pub fn k2(&self, j: usize) -> f64 {
        self.wavevector(j).iter().map(|k| k * k).sum()
    }

    pub fn kabs(&self, j: usize) -> f64 {
        self.k2(j).sqrt()
    }

    /// True when no axis sits on the Nyquist frequency.
    pub fn is_band_limited(&self, j: usize) -> bool {
        let half = (self.n_per_axis / 2) as i64;
        self.mode(j).iter().all(|m| m.abs() < half)
    }

    pub fn coords(&self, j: usize) -> Vec<f64> {
        let h = self.period / self.n_per_axis as f64;
        self.axis_indices(j).into_iter().map(|i| h * i as f64).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        (self.period / self.n_per_axis as f64).powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(self.dim as i32)
    }

    /// In-place unitary DFT of one scalar array (forward uses `e^{-ikx}`).
    pub fn fft(&self, data: &mut [C64], inverse: bool) {
        let n = self.n_per_axis;
        debug_assert_eq!(data.len(), self.points());
        let plan = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            if inverse {
                p.plan_fft_inverse(n)
            } else {
                p.plan_fft_forward(n)
            }
        });
        let total = self.points();
        let mut line = vec![C64::new(0.0, 0.0); n];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            for start in 0..total {
                if !(start / stride).is_multiple_of(n) {
                    continue;
                }
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[start + i * stride];
                }
                plan.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[start + i * stride] = *v;
                }
            }
        }
        let scale = 1.0 / (total as f64).sqrt();
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Unitary transform of a multi-component array laid out `point * fiber + comp`.
    pub fn fft_fiber(&self, data: &[C64], fiber: usize, inverse: bool) -> Vec<C64> {
        let np = self.points();
        let mut out = vec![C64::new(0.0, 0.0); data.len()];
        let mut buf = vec![C64::new(0.0, 0.0); np];
        for comp in 0..fiber {
            for p in 0..np {
                buf[p] = data[p * fiber + comp];
            }
            self.fft(&mut buf, inverse);
            for p in 0..np {
                out[p * fiber + comp] = buf[p];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_convention() {
        let g = GridSpec::periodic(1, 8).unwrap();
        let ms: Vec<i64> = (0..8).map(|j| g.mode(j)[0]).collect();
        assert_eq!(ms, vec![0, 1, 2, 3, 4, -3, -2, -1]);
        assert!(!g.is_band_limited(4));
        assert_eq!(g.mode_index(&[-3]), 5);
    }

    #[test]
    fn fft_is_unitary_roundtrip() {
        let g = GridSpec::periodic(2, 4).unwrap();
        let orig: Vec<C64> = (0..16).map(|i| C64::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let mut d = orig.clone();
        g.fft(&mut d, false);
        let e0: f64 = orig.iter().map(|z| z.norm_sqr()).sum();
        let e1: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        assert!((e0 - e1).abs() < 1e-10 * e0);
        g.fft(&mut d, true);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
