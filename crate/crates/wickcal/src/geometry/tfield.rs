use crate::linalg::{Mat, C64};
use crate::spectral_core::GridSpec;

/// Taylor series in `t` whose coefficients are grid fields.
///
/// A coefficient stored with length 1 is constant in space. The number of stored
/// coefficients is the number of reliably known orders.
#[derive(Clone, Debug, PartialEq)]
pub struct TField {
    pub c: Vec<Vec<C64>>,
}

const Z: C64 = C64::new(0.0, 0.0);

impl TField {
    pub fn constant_series(vals: &[C64]) -> Self {
        Self { c: vals.iter().map(|v| vec![*v]).collect() }
    }

    pub fn real_series(vals: &[f64]) -> Self {
        Self { c: vals.iter().map(|v| vec![C64::new(*v, 0.0)]).collect() }
    }

    pub fn scalar(v: f64, len: usize) -> Self {
        let mut c = vec![vec![Z]; len];
        if len > 0 {
            c[0][0] = C64::new(v, 0.0);
        }
        Self { c }
    }

    pub fn zero(len: usize) -> Self {
        Self { c: vec![vec![Z]; len] }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn is_x_constant(&self) -> bool {
        self.c.iter().all(|v| v.len() == 1)
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|v| v.iter().all(|z| *z == Z))
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn truncate(&self, len: usize) -> Self {
        Self { c: self.c[..len.min(self.len())].to_vec() }
    }

    /// Extends an exactly known series with zero coefficients.
    pub fn pad(&self, len: usize) -> Self {
        let mut c = self.c.clone();
        c.resize(len.max(c.len()), vec![Z]);
        Self { c }
    }

    /// Coefficient `n` at grid point `p` (broadcasting constants).
    pub fn at(&self, n: usize, p: usize) -> C64 {
        let v = &self.c[n];
        if v.len() == 1 {
            v[0]
        } else {
            v[p]
        }
    }

    fn bin(a: &[C64], b: &[C64], f: impl Fn(C64, C64) -> C64) -> Vec<C64> {
        match (a.len(), b.len()) {
            (1, 1) => vec![f(a[0], b[0])],
            (1, _) => b.iter().map(|y| f(a[0], *y)).collect(),
            (_, 1) => a.iter().map(|x| f(*x, b[0])).collect(),
            _ => a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect(),
        }
    }

    fn acc(dst: &mut Vec<C64>, src: &[C64]) {
        if src.len() == 1 {
            for d in dst.iter_mut() {
                *d += src[0];
            }
        } else if dst.len() == 1 {
            let base = dst[0];
            *dst = src.iter().map(|s| base + s).collect();
        } else {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.len().min(o.len());
        Self { c: (0..n).map(|i| Self::bin(&self.c[i], &o.c[i], |x, y| x + y)).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.len().min(o.len());
        Self { c: (0..n).map(|i| Self::bin(&self.c[i], &o.c[i], |x, y| x - y)).collect() }
    }

    pub fn add_assign(&mut self, o: &Self) {
        let n = self.len().min(o.len());
        self.c.truncate(n);
        for i in 0..n {
            Self::acc(&mut self.c[i], &o.c[i]);
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { c: self.c.iter().map(|v| v.iter().map(|z| z * s).collect()).collect() }
    }

    /// Cauchy product truncated at the shorter series.
    pub fn mul(&self, o: &Self) -> Self {
        let n = self.len().min(o.len());
        let mut c = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = vec![Z];
            for i in 0..=k {
                let (x, y) = (&self.c[i], &o.c[k - i]);
                if x.len() == 1 && x[0] == Z || y.len() == 1 && y[0] == Z {
                    continue;
                }
                Self::acc(&mut acc, &Self::bin(x, y, |p, q| p * q));
            }
            c.push(acc);
        }
        Self { c }
    }

    pub fn dt(&self) -> Self {
        Self {
            c: self
                .c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, v)| v.iter().map(|z| z * n as f64).collect())
                .collect(),
        }
    }

    /// Spectral derivative along a spatial axis.
    pub fn dx(&self, axis: usize, grid: &GridSpec) -> Self {
        Self {
            c: self
                .c
                .iter()
                .map(|v| {
                    if v.len() == 1 {
                        return vec![Z];
                    }
                    let mut d = v.clone();
                    grid.fft(&mut d, false);
                    for (j, z) in d.iter_mut().enumerate() {
                        let k = grid.wavevector(j)[axis];
                        let half = grid.n_per_axis as i64 / 2;
                        let nyq = grid.mode(j)[axis].abs() == half;
                        *z *= if nyq { Z } else { C64::new(0.0, k) };
                    }
                    grid.fft(&mut d, true);
                    d
                })
                .collect(),
        }
    }

    /// `exp` of a series with vanishing constant term.
    pub fn exp0(&self) -> Self {
        let n = self.len();
        let mut e: Vec<Vec<C64>> = Vec::with_capacity(n);
        e.push(vec![C64::new(1.0, 0.0)]);
        for m in 1..n {
            let mut acc = vec![Z];
            for k in 1..=m {
                let t = Self::bin(&self.c[k], &e[m - k], |x, y| x * y * k as f64);
                Self::acc(&mut acc, &t);
            }
            e.push(acc.into_iter().map(|z| z / m as f64).collect());
        }
        Self { c: e }
    }
}

/// Square matrix of [`TField`] entries.
#[derive(Clone, Debug, PartialEq)]
pub struct TMat {
    pub n: usize,
    pub e: Vec<TField>,
}

impl TMat {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> TField) -> Self {
        let mut e = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                e.push(f(i, j));
            }
        }
        Self { n, e }
    }

    pub fn identity(n: usize, len: usize) -> Self {
        Self::from_fn(n, |i, j| TField::scalar(if i == j { 1.0 } else { 0.0 }, len))
    }

    pub fn get(&self, i: usize, j: usize) -> &TField {
        &self.e[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.e.iter().map(|f| f.len()).min().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mul(&self, o: &Self) -> Self {
        let len = self.len().min(o.len());
        Self::from_fn(self.n, |i, j| {
            let mut acc = TField::zero(len);
            for k in 0..self.n {
                acc.add_assign(&self.get(i, k).mul(o.get(k, j)));
            }
            acc
        })
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j).add(o.get(i, j)))
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j).sub(o.get(i, j)))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j).scale(s))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i).clone())
    }

    pub fn dt(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j).dt())
    }

    pub fn truncate(&self, len: usize) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j).truncate(len))
    }

    pub fn pad(&self, len: usize) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j).pad(len))
    }

    pub fn trace(&self) -> TField {
        let mut acc = TField::zero(self.len());
        for i in 0..self.n {
            acc.add_assign(self.get(i, i));
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.e.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    fn points(&self) -> usize {
        self.e
            .iter()
            .flat_map(|f| f.c.iter().map(|v| v.len()))
            .max()
            .unwrap_or(1)
    }

    /// Pointwise matrix of coefficient `k`.
    pub fn coeff_at(&self, k: usize, p: usize) -> Mat {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j).at(k, p))
    }

    /// Pointwise values of coefficient `k` as a list over grid points (one entry if constant).
    pub fn coeff_field(&self, k: usize) -> Vec<Mat> {
        (0..self.points()).map(|p| self.coeff_at(k, p)).collect()
    }

    fn from_coeff_fields(n: usize, fields: &[Vec<Mat>]) -> Self {
        Self::from_fn(n, |i, j| TField {
            c: fields
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

    /// Series inverse: pointwise inverse of the constant term, then Neumann recursion.
    pub fn inverse(&self) -> Self {
        let len = self.len();
        let x0: Vec<Mat> = self
            .coeff_field(0)
            .iter()
            .map(|m| m.clone().try_inverse().expect("invertible leading coefficient"))
            .collect();
        let mut xs = Self::from_coeff_fields(self.n, &[x0]);
        // X_m = -X_0 Σ_{k≥1} A_k X_{m-k}
        let a = self;
        let x0m = xs.clone();
        for m in 1..len {
            let mut acc = Self::from_fn(self.n, |_, _| TField::zero(1));
            for k in 1..=m {
                let ak = shift_coeff(a, k);
                let xk = shift_coeff(&xs, m - k);
                acc = acc.add(&ak.mul(&xk));
            }
            let next = x0m.mul(&acc).scale(C64::new(-1.0, 0.0));
            xs = Self::from_fn(self.n, |i, j| {
                let mut f = xs.get(i, j).clone();
                f.c.push(next.get(i, j).c[0].clone());
                f
            });
        }
        xs
    }
}

/// The single coefficient `k` of a matrix series, as a length-1 series.
fn shift_coeff(a: &TMat, k: usize) -> TMat {
    TMat::from_fn(a.n, |i, j| TField { c: vec![a.get(i, j).c[k].clone()] })
}
