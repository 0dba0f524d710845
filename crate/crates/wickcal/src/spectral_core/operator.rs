use rayon::prelude::*;
use serde::Serialize;

use super::{GridSpec, SectionField};
use crate::linalg::{self, Mat, C64};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ClaimedOrder {
    Finite(i32),
    Smoothing,
    Unknown,
}

/// Dense matrix on the full section space, or one fiber block per Fourier mode
/// when the operator commutes with translations.
#[derive(Clone, Debug)]
pub enum Storage {
    Dense(Mat),
    Modal(Vec<Mat>),
}

#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub grid: GridSpec,
    pub fiber_in: usize,
    pub fiber_out: usize,
    pub storage: Storage,
    pub claimed_order: ClaimedOrder,
}

impl DenseOperator {
    pub fn from_dense(grid: &GridSpec, fiber_out: usize, fiber_in: usize, m: Mat) -> Result<Self> {
        let np = grid.points();
        if m.shape() != (np * fiber_out, np * fiber_in) {
            return Err(Error::Invalid(format!(
                "matrix shape {:?} does not match grid and fibers ({}, {})",
                m.shape(),
                np * fiber_out,
                np * fiber_in
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            fiber_in,
            fiber_out,
            storage: Storage::Dense(m),
            claimed_order: ClaimedOrder::Unknown,
        })
    }

    pub fn from_blocks(grid: &GridSpec, fiber_out: usize, fiber_in: usize, blocks: Vec<Mat>) -> Self {
        assert_eq!(blocks.len(), grid.points());
        debug_assert!(blocks.iter().all(|b| b.shape() == (fiber_out, fiber_in)));
        Self {
            grid: grid.clone(),
            fiber_in,
            fiber_out,
            storage: Storage::Modal(blocks),
            claimed_order: ClaimedOrder::Unknown,
        }
    }

    /// Fourier multiplier with fiber block `f(mode_index, wavevector)`.
    pub fn multiplier(
        grid: &GridSpec,
        fiber_out: usize,
        fiber_in: usize,
        f: impl Fn(usize, &[f64]) -> Mat,
    ) -> Self {
        let blocks = (0..grid.points()).map(|j| f(j, &grid.wavevector(j))).collect();
        Self::from_blocks(grid, fiber_out, fiber_in, blocks)
    }

    pub fn fiber_constant(grid: &GridSpec, m: &Mat) -> Self {
        Self::from_blocks(grid, m.nrows(), m.ncols(), vec![m.clone(); grid.points()])
    }

    pub fn identity(grid: &GridSpec, fiber: usize) -> Self {
        let mut op = Self::fiber_constant(grid, &linalg::eye(fiber));
        op.claimed_order = ClaimedOrder::Finite(0);
        op
    }

    pub fn zero(grid: &GridSpec, fiber_out: usize, fiber_in: usize) -> Self {
        let mut op = Self::fiber_constant(grid, &linalg::zeros(fiber_out, fiber_in));
        op.claimed_order = ClaimedOrder::Smoothing;
        op
    }

    /// Pointwise multiplication by a fiber-matrix field (`mats[point]`).
    pub fn pointwise(grid: &GridSpec, mats: &[Mat]) -> Self {
        let np = grid.points();
        assert_eq!(mats.len(), np);
        let (fo, fi) = mats[0].shape();
        let mut m = Mat::zeros(np * fo, np * fi);
        for (p, b) in mats.iter().enumerate() {
            m.view_mut((p * fo, p * fi), (fo, fi)).copy_from(b);
        }
        let mut op = Self::from_dense(grid, fo, fi, m).expect("shape");
        op.claimed_order = ClaimedOrder::Finite(0);
        op
    }

    pub fn with_order(mut self, order: ClaimedOrder) -> Self {
        self.claimed_order = order;
        self
    }

    pub fn is_modal(&self) -> bool {
        matches!(self.storage, Storage::Modal(_))
    }

    /// Number of grid points folded into one storage block.
    pub fn block_points(&self) -> usize {
        if self.is_modal() {
            1
        } else {
            self.grid.points()
        }
    }

    pub fn blocks(&self) -> &[Mat] {
        match &self.storage {
            Storage::Dense(m) => std::slice::from_ref(m),
            Storage::Modal(b) => b,
        }
    }

    fn with_storage(&self, fiber_out: usize, fiber_in: usize, storage: Storage) -> Self {
        Self {
            grid: self.grid.clone(),
            fiber_in,
            fiber_out,
            storage,
            claimed_order: ClaimedOrder::Unknown,
        }
    }

    /// Applies `f` to every storage block; the fibers of the result are given explicitly.
    pub fn map_blocks(&self, fiber_out: usize, fiber_in: usize, f: impl Fn(&Mat) -> Mat + Sync) -> Self {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(f(m)),
            Storage::Modal(b) => Storage::Modal(b.par_iter().map(&f).collect()),
        };
        self.with_storage(fiber_out, fiber_in, storage)
    }

    pub fn try_map_blocks(
        &self,
        fiber_out: usize,
        fiber_in: usize,
        f: impl Fn(&Mat) -> Result<Mat> + Sync,
    ) -> Result<Self> {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(f(m)?),
            Storage::Modal(b) => Storage::Modal(b.par_iter().map(&f).collect::<Result<Vec<_>>>()?),
        };
        Ok(self.with_storage(fiber_out, fiber_in, storage))
    }

    /// Brings a set of operators to a common storage kind.
    pub fn harmonize(ops: &[&DenseOperator]) -> Vec<DenseOperator> {
        if ops.iter().all(|o| o.is_modal()) {
            ops.iter().map(|o| (*o).clone()).collect()
        } else {
            ops.iter().map(|o| o.densified()).collect()
        }
    }

    /// Combines blockwise several operators of the same storage kind.
    pub fn zip_blocks(
        ops: &[&DenseOperator],
        fiber_out: usize,
        fiber_in: usize,
        f: impl Fn(&[&Mat]) -> Mat + Sync,
    ) -> Self {
        let h = Self::harmonize(ops);
        let nb = h[0].blocks().len();
        let blocks: Vec<Mat> = (0..nb)
            .into_par_iter()
            .map(|j| {
                let args: Vec<&Mat> = h.iter().map(|o| &o.blocks()[j]).collect();
                f(&args)
            })
            .collect();
        let storage = if h[0].is_modal() {
            Storage::Modal(blocks)
        } else {
            Storage::Dense(blocks.into_iter().next().expect("one block"))
        };
        h[0].with_storage(fiber_out, fiber_in, storage)
    }

    pub fn try_zip_blocks(
        ops: &[&DenseOperator],
        fiber_out: usize,
        fiber_in: usize,
        f: impl Fn(&[&Mat]) -> Result<Mat> + Sync,
    ) -> Result<Self> {
        let h = Self::harmonize(ops);
        let nb = h[0].blocks().len();
        let blocks: Vec<Mat> = (0..nb)
            .into_par_iter()
            .map(|j| {
                let args: Vec<&Mat> = h.iter().map(|o| &o.blocks()[j]).collect();
                f(&args)
            })
            .collect::<Result<_>>()?;
        let storage = if h[0].is_modal() {
            Storage::Modal(blocks)
        } else {
            Storage::Dense(blocks.into_iter().next().expect("one block"))
        };
        Ok(h[0].with_storage(fiber_out, fiber_in, storage))
    }

    pub fn apply(&self, f: &SectionField) -> SectionField {
        assert_eq!(f.fiber_dim, self.fiber_in, "fiber mismatch in apply");
        match &self.storage {
            Storage::Dense(m) => {
                let v = m * f.to_vector();
                SectionField {
                    grid: self.grid.clone(),
                    fiber_dim: self.fiber_out,
                    values: v.iter().cloned().collect(),
                }
            }
            Storage::Modal(blocks) => {
                let modes = f.modes();
                let mut out = vec![C64::new(0.0, 0.0); self.grid.points() * self.fiber_out];
                for (j, b) in blocks.iter().enumerate() {
                    let x = &modes[j * self.fiber_in..(j + 1) * self.fiber_in];
                    for r in 0..self.fiber_out {
                        let mut s = C64::new(0.0, 0.0);
                        for (cidx, xv) in x.iter().enumerate() {
                            s += b[(r, cidx)] * xv;
                        }
                        out[j * self.fiber_out + r] = s;
                    }
                }
                SectionField::from_modes(&self.grid, self.fiber_out, &out)
            }
        }
    }

    /// Full matrix on the section space (layout `point * fiber + comp`).
    pub fn to_dense(&self) -> Mat {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Modal(_) => {
                let np = self.grid.points();
                let cols: Vec<Vec<C64>> = (0..np * self.fiber_in)
                    .into_par_iter()
                    .map(|col| {
                        let mut v = SectionField::zeros(&self.grid, self.fiber_in);
                        v.values[col] = C64::new(1.0, 0.0);
                        self.apply(&v).values
                    })
                    .collect();
                let mut m = Mat::zeros(np * self.fiber_out, np * self.fiber_in);
                for (j, col) in cols.iter().enumerate() {
                    for (i, z) in col.iter().enumerate() {
                        m[(i, j)] = *z;
                    }
                }
                m
            }
        }
    }

    pub fn densified(&self) -> Self {
        let mut out = self.with_storage(self.fiber_out, self.fiber_in, Storage::Dense(self.to_dense()));
        out.claimed_order = self.claimed_order;
        out
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.fiber_in, other.fiber_out, "fiber mismatch in compose");
        Self::zip_blocks(&[self, other], self.fiber_out, other.fiber_in, |m| m[0] * m[1])
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::zip_blocks(&[self, other], self.fiber_out, self.fiber_in, |m| m[0] + m[1])
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::zip_blocks(&[self, other], self.fiber_out, self.fiber_in, |m| m[0] - m[1])
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.map_blocks(self.fiber_out, self.fiber_in, |m| m * s);
        out.claimed_order = self.claimed_order;
        out
    }

    /// Flat conjugate transpose.
    pub fn adjoint_h(&self) -> Self {
        let mut out = self.map_blocks(self.fiber_in, self.fiber_out, |m| m.adjoint());
        out.claimed_order = self.claimed_order;
        out
    }

    pub fn inverse(&self) -> Result<Self> {
        self.try_map_blocks(self.fiber_in, self.fiber_out, linalg::inverse)
    }

    pub fn op_norm(&self) -> f64 {
        self.blocks().par_iter().map(linalg::op_norm).reduce(|| 0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks().iter().map(linalg::max_abs).fold(0.0, f64::max)
    }

    /// Operator norm of `self - other`.
    pub fn dist(&self, other: &Self) -> f64 {
        self.sub(other).op_norm()
    }

    /// Operator norm of the restriction to the span of `e_k ⊗ fiber` for one mode.
    pub fn mode_column_norm(&self, j: usize) -> f64 {
        match &self.storage {
            Storage::Modal(b) => linalg::op_norm(&b[j]),
            Storage::Dense(m) => {
                let np = self.grid.points();
                let mut cols = Mat::zeros(np * self.fiber_out, self.fiber_in);
                for comp in 0..self.fiber_in {
                    let e = SectionField::plane_wave(&self.grid, self.fiber_in, j, comp);
                    let v = m * e.to_vector();
                    cols.set_column(comp, &v);
                }
                // plane waves have unit mean-normalized norm; rescale the flat 2-norm to match
                linalg::op_norm(&cols) / (np as f64).sqrt()
            }
        }
    }

    /// The translation-invariant fiber block at mode `j` (exact for modal storage,
    /// the diagonal Fourier block otherwise).
    pub fn mode_block(&self, j: usize) -> Mat {
        match &self.storage {
            Storage::Modal(b) => b[j].clone(),
            Storage::Dense(_) => {
                let mut out = Mat::zeros(self.fiber_out, self.fiber_in);
                for comp in 0..self.fiber_in {
                    let e = SectionField::plane_wave(&self.grid, self.fiber_in, j, comp);
                    let modes = self.apply(&e).modes();
                    let s = 1.0 / (self.grid.points() as f64).sqrt();
                    for r in 0..self.fiber_out {
                        out[(r, comp)] = modes[j * self.fiber_out + r] * s;
                    }
                }
                out
            }
        }
    }

    /// Restriction to modes selected by `keep` (other modes mapped to zero on both sides).
    pub fn restrict_modes(&self, keep: impl Fn(usize) -> bool) -> Self {
        match &self.storage {
            Storage::Modal(b) => {
                let blocks = b
                    .iter()
                    .enumerate()
                    .map(|(j, m)| if keep(j) { m.clone() } else { Mat::zeros(m.nrows(), m.ncols()) })
                    .collect();
                self.with_storage(self.fiber_out, self.fiber_in, Storage::Modal(blocks))
            }
            Storage::Dense(_) => {
                let proj_in = Self::mode_projector(&self.grid, self.fiber_in, &keep);
                let proj_out = Self::mode_projector(&self.grid, self.fiber_out, &keep);
                proj_out.compose(self).compose(&proj_in)
            }
        }
    }

    pub fn mode_projector(grid: &GridSpec, fiber: usize, keep: &impl Fn(usize) -> bool) -> Self {
        Self::multiplier(grid, fiber, fiber, |j, _| {
            if keep(j) {
                linalg::eye(fiber)
            } else {
                linalg::zeros(fiber, fiber)
            }
        })
    }

    /// Splits an operator on doubled fibers into its four slot blocks.
    pub fn split2(&self) -> [Self; 4] {
        assert!(self.fiber_in.is_multiple_of(2) && self.fiber_out.is_multiple_of(2));
        let (fo, fi) = (self.fiber_out / 2, self.fiber_in / 2);
        let npb = self.block_points();
        let mut out = Vec::with_capacity(4);
        for so in 0..2 {
            for si in 0..2 {
                let rows = slot_indices(npb, fo, so);
                let cols = slot_indices(npb, fi, si);
                out.push(self.map_blocks(fo, fi, |m| gather(m, &rows, &cols)));
            }
        }
        let mut it = out.into_iter();
        [it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
    }

    /// Assembles `[[a, b], [c, d]]` on doubled fibers.
    pub fn join2(a: &Self, b: &Self, cc: &Self, d: &Self) -> Self {
        let (fo, fi) = (a.fiber_out, a.fiber_in);
        let h = Self::harmonize(&[a, b, cc, d]);
        let npb = h[0].block_points();
        let r0 = slot_indices(npb, fo, 0);
        let r1 = slot_indices(npb, fo, 1);
        let c0 = slot_indices(npb, fi, 0);
        let c1 = slot_indices(npb, fi, 1);
        let refs: Vec<&DenseOperator> = h.iter().collect();
        Self::zip_blocks(&refs, 2 * fo, 2 * fi, |m| {
            let mut out = Mat::zeros(2 * fo * npb, 2 * fi * npb);
            scatter(&mut out, m[0], &r0, &c0);
            scatter(&mut out, m[1], &r0, &c1);
            scatter(&mut out, m[2], &r1, &c0);
            scatter(&mut out, m[3], &r1, &c1);
            out
        })
    }

    /// `diag(a, a)` on doubled fibers.
    pub fn diag2(a: &Self) -> Self {
        let z = Self::zero(&a.grid, a.fiber_out, a.fiber_in);
        Self::join2(a, &z, &z, a)
    }
}

/// Row indices of one slot of a doubled fiber inside a storage block.
pub fn slot_indices(block_points: usize, fiber: usize, slot: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(block_points * fiber);
    for p in 0..block_points {
        for comp in 0..fiber {
            idx.push(p * 2 * fiber + slot * fiber + comp);
        }
    }
    idx
}

fn gather(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn scatter(out: &mut Mat, m: &Mat, rows: &[usize], cols: &[usize]) {
    for (i, &r) in rows.iter().enumerate() {
        for (j, &cc) in cols.iter().enumerate() {
            out[(r, cc)] = m[(i, j)];
        }
    }
}

/// Fourier multiplier of `i k_axis`.
pub fn derivative_op(grid: &GridSpec, axis: usize) -> Result<DenseOperator> {
    if axis >= grid.dim {
        return Err(Error::Invalid(format!("axis {axis} out of range for dim {}", grid.dim)));
    }
    let op = DenseOperator::multiplier(grid, 1, 1, |_, k| {
        Mat::from_element(1, 1, C64::new(0.0, k[axis]))
    });
    Ok(op.with_order(ClaimedOrder::Finite(1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Positivity {
    Positive,
    Indefinite,
}

/// Hermitian weight `W` defining `⟨u, v⟩ = ⟨u, W v⟩_flat`.
#[derive(Clone, Debug)]
pub struct InnerProduct {
    pub weight: DenseOperator,
    pub positivity: Positivity,
}

impl InnerProduct {
    pub fn new(weight: DenseOperator) -> Result<Self> {
        if weight.fiber_in != weight.fiber_out {
            return Err(Error::Invalid("inner-product weight must be square".into()));
        }
        let asym = weight.dist(&weight.adjoint_h());
        let scale = weight.op_norm().max(1.0);
        if asym > 1e-12 * scale {
            return Err(Error::Invalid(format!("weight is not Hermitian (defect {asym:.3e})")));
        }
        let min_eig = weight
            .blocks()
            .iter()
            .map(linalg::min_herm_eig)
            .fold(f64::INFINITY, f64::min);
        let positivity = if min_eig > 0.0 { Positivity::Positive } else { Positivity::Indefinite };
        Ok(Self { weight, positivity })
    }

    pub fn flat(grid: &GridSpec, fiber: usize) -> Self {
        Self { weight: DenseOperator::identity(grid, fiber), positivity: Positivity::Positive }
    }

    pub fn eval(&self, u: &SectionField, v: &SectionField) -> C64 {
        u.inner(&self.weight.apply(v))
    }

    pub fn condition_number(&self) -> f64 {
        self.weight
            .blocks()
            .iter()
            .map(linalg::condition_number)
            .fold(1.0, f64::max)
    }
}

/// `W⁻¹ A^H W`.
pub fn adjoint(a: &DenseOperator, ip: &InnerProduct) -> Result<DenseOperator> {
    let winv = ip
        .weight
        .inverse()
        .map_err(|_| Error::Singular("inner-product weight".into()))?;
    let mut out = winv.compose(&a.adjoint_h()).compose(&ip.weight);
    out.claimed_order = a.claimed_order;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_cosine() {
        let g = GridSpec::periodic(1, 4).unwrap();
        let f = SectionField::from_fn(&g, 1, |x, _| C64::new(x[0].cos(), 0.0));
        let d = derivative_op(&g, 0).unwrap().apply(&f);
        for p in 0..4 {
            let x = g.coords(p)[0];
            assert!((d.values[p] - C64::new(-x.sin(), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn split_join_roundtrip_dense() {
        let g = GridSpec::periodic(1, 4).unwrap();
        let m = Mat::from_fn(16, 16, |i, j| C64::new((i * 16 + j) as f64, 0.0));
        let op = DenseOperator::from_dense(&g, 4, 4, m.clone()).unwrap();
        let [a, b, cc, d] = op.split2();
        let back = DenseOperator::join2(&a, &b, &cc, &d);
        assert!(linalg::max_abs(&(back.to_dense() - m)) == 0.0);
    }

    #[test]
    fn modal_dense_agree() {
        let g = GridSpec::periodic(2, 4).unwrap();
        let op = DenseOperator::multiplier(&g, 2, 2, |j, k| {
            Mat::from_fn(2, 2, |r, cc| C64::new(k[0] + r as f64, k[1] * cc as f64 + j as f64 * 0.1))
        });
        let f = SectionField::from_fn(&g, 2, |x, comp| C64::new(x[0].sin() + comp as f64, x[1].cos()));
        let a = op.apply(&f);
        let b = op.densified().apply(&f);
        assert!((&a - &b).max_abs() < 1e-12);
        for j in 0..g.points() {
            assert!(linalg::max_abs(&(op.mode_block(j) - op.densified().mode_block(j))) < 1e-12);
            assert!((op.mode_column_norm(j) - op.densified().mode_column_norm(j)).abs() < 1e-12);
        }
    }
}
