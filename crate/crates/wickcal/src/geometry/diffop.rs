use std::collections::{BTreeMap, HashMap};

use super::tfield::{TField, TMat};
use crate::linalg::{Mat, C64};
use crate::spectral_core::{DenseOperator, GridSpec};

/// Multi-index of derivatives `(∂_t, ∂_1, ∂_2, ∂_3)`.
pub type MultiIndex = [u8; 4];

/// Sparse fiber matrix with series-valued entries.
pub type Coef = BTreeMap<(usize, usize), TField>;

/// Linear differential operator `Σ_α c_α(t, x) ∂^α` between trivial bundles.
#[derive(Clone, Debug)]
pub struct DiffOp {
    pub nout: usize,
    pub nin: usize,
    pub terms: BTreeMap<MultiIndex, Coef>,
}

fn binom(n: u8, k: u8) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

fn add_entry(c: &mut Coef, key: (usize, usize), v: TField) {
    match c.get_mut(&key) {
        Some(e) => e.add_assign(&v),
        None => {
            c.insert(key, v);
        }
    }
}

impl DiffOp {
    pub fn zero(nout: usize, nin: usize) -> Self {
        Self { nout, nin, terms: BTreeMap::new() }
    }

    pub fn from_coef(nout: usize, nin: usize, alpha: MultiIndex, c: Coef) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_empty() {
            terms.insert(alpha, c);
        }
        Self { nout, nin, terms }
    }

    /// Multiplication by a matrix of series.
    pub fn multiplication(nout: usize, nin: usize, f: impl Fn(usize, usize) -> Option<TField>) -> Self {
        let mut c = Coef::new();
        for i in 0..nout {
            for j in 0..nin {
                if let Some(v) = f(i, j) {
                    if !v.is_zero() {
                        c.insert((i, j), v);
                    }
                }
            }
        }
        Self::from_coef(nout, nin, [0; 4], c)
    }

    pub fn from_tmat(m: &TMat) -> Self {
        Self::multiplication(m.n, m.n, |i, j| Some(m.get(i, j).clone()))
    }

    pub fn identity(n: usize, len: usize) -> Self {
        Self::multiplication(n, n, |i, j| (i == j).then(|| TField::scalar(1.0, len)))
    }

    /// `∂_axis ⊗ 1` with axis 0 the time direction.
    pub fn partial(n: usize, axis: usize, len: usize) -> Self {
        let mut alpha = [0u8; 4];
        alpha[axis] = 1;
        let mut c = Coef::new();
        for i in 0..n {
            c.insert((i, i), TField::scalar(1.0, len));
        }
        Self::from_coef(n, n, alpha, c)
    }

    pub fn len(&self) -> usize {
        self.terms
            .values()
            .flat_map(|c| c.values().map(|f| f.len()))
            .min()
            .unwrap_or(usize::MAX)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn truncate(&self, len: usize) -> Self {
        self.map_entries(|f| f.truncate(len))
    }

    pub fn map_entries(&self, f: impl Fn(&TField) -> TField) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(a, c)| (*a, c.iter().map(|(k, v)| (*k, f(v))).collect()))
            .collect();
        Self { nout: self.nout, nin: self.nin, terms }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map_entries(|f| f.scale(s))
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.nout, self.nin), (o.nout, o.nin), "shape mismatch in add");
        let mut out = self.clone();
        for (a, c) in &o.terms {
            let dst = out.terms.entry(*a).or_default();
            for (k, v) in c {
                add_entry(dst, *k, v.clone());
            }
        }
        // entries present on one side only keep their own length; cap at the common one
        let len = self.len().min(o.len());
        if len != usize::MAX {
            out = out.truncate(len);
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    /// `∂^γ` applied to every coefficient entry.
    fn coef_derivative(c: &Coef, gamma: MultiIndex, grid: &GridSpec) -> Coef {
        c.iter()
            .map(|(k, v)| {
                let mut f = v.clone();
                for _ in 0..gamma[0] {
                    f = f.dt();
                }
                for axis in 0..3 {
                    for _ in 0..gamma[axis + 1] {
                        f = f.dx(axis, grid);
                    }
                }
                (*k, f)
            })
            .collect()
    }

    fn coef_mul(a: &Coef, b: &Coef, s: f64) -> Coef {
        let mut rows: HashMap<usize, Vec<(usize, &TField)>> = HashMap::new();
        for ((k, j), v) in b {
            rows.entry(*k).or_default().push((*j, v));
        }
        let mut out = Coef::new();
        for ((i, k), av) in a {
            if let Some(r) = rows.get(k) {
                for (j, bv) in r {
                    let mut p = av.mul(bv);
                    if s != 1.0 {
                        p = p.scale(C64::new(s, 0.0));
                    }
                    add_entry(&mut out, (*i, *j), p);
                }
            }
        }
        out
    }

    /// `self ∘ other` with the Leibniz rule acting on the coefficients of `other`.
    pub fn compose(&self, o: &Self, grid: &GridSpec) -> Self {
        assert_eq!(self.nin, o.nout, "shape mismatch in compose");
        let mut out: BTreeMap<MultiIndex, Coef> = BTreeMap::new();
        let mut cache: HashMap<(MultiIndex, MultiIndex), Coef> = HashMap::new();
        for (alpha, ac) in &self.terms {
            for (beta, bc) in &o.terms {
                for g0 in 0..=alpha[0] {
                    for g1 in 0..=alpha[1] {
                        for g2 in 0..=alpha[2] {
                            for g3 in 0..=alpha[3] {
                                let gamma = [g0, g1, g2, g3];
                                let s: f64 = (0..4).map(|i| binom(alpha[i], gamma[i])).product();
                                let db = cache
                                    .entry((*beta, gamma))
                                    .or_insert_with(|| {
                                        if gamma == [0; 4] {
                                            bc.clone()
                                        } else {
                                            Self::coef_derivative(bc, gamma, grid)
                                        }
                                    });
                                let prod = Self::coef_mul(ac, db, s);
                                let idx = [
                                    alpha[0] - g0 + beta[0],
                                    alpha[1] - g1 + beta[1],
                                    alpha[2] - g2 + beta[2],
                                    alpha[3] - g3 + beta[3],
                                ];
                                let dst = out.entry(idx).or_default();
                                for (k, v) in prod {
                                    add_entry(dst, k, v);
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut res = Self { nout: self.nout, nin: o.nin, terms: out };
        res.prune();
        res
    }

    /// Drops exactly vanishing entries and empty terms.
    pub fn prune(&mut self) {
        for c in self.terms.values_mut() {
            c.retain(|_, v| !v.is_zero());
        }
        self.terms.retain(|_, c| !c.is_empty());
    }

    pub fn term(&self, alpha: MultiIndex) -> Option<&Coef> {
        self.terms.get(&alpha)
    }

    /// Terms selected by a predicate on the multi-index.
    pub fn select(&self, keep: impl Fn(&MultiIndex) -> bool) -> Self {
        Self {
            nout: self.nout,
            nin: self.nin,
            terms: self.terms.iter().filter(|(a, _)| keep(a)).map(|(a, c)| (*a, c.clone())).collect(),
        }
    }

    /// Part carrying exactly `p` time derivatives, returned with `∂_t^p` stripped.
    pub fn time_slice(&self, p: u8) -> Self {
        Self {
            nout: self.nout,
            nin: self.nin,
            terms: self
                .terms
                .iter()
                .filter(|(a, _)| a[0] == p)
                .map(|(a, c)| ([0, a[1], a[2], a[3]], c.clone()))
                .collect(),
        }
    }

    pub fn max_time_order(&self) -> u8 {
        self.terms.keys().map(|a| a[0]).max().unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.terms
            .values()
            .flat_map(|c| c.values().map(|f| f.max_abs()))
            .fold(0.0, f64::max)
    }

    /// Largest entry of Taylor coefficient `n`.
    pub fn max_abs_coeff(&self, n: usize) -> f64 {
        self.terms
            .values()
            .flat_map(|c| c.values())
            .filter(|f| f.len() > n)
            .flat_map(|f| f.c[n].iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    pub fn is_x_constant(&self) -> bool {
        self.terms.values().all(|c| c.values().all(|f| f.is_x_constant()))
    }

    /// Fiber symbol `Σ_α c_α,n (ik)^α` of a spatially constant operator at one wavevector.
    pub fn symbol(&self, n: usize, k: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.nout, self.nin);
        for (alpha, c) in &self.terms {
            assert_eq!(alpha[0], 0, "symbol of an operator with time derivatives");
            let mut w = C64::new(1.0, 0.0);
            for (axis, kk) in k.iter().enumerate() {
                for _ in 0..alpha[axis + 1] {
                    w *= C64::new(0.0, *kk);
                }
            }
            for ((i, j), f) in c {
                if f.len() > n {
                    m[(i.to_owned(), j.to_owned())] += w * f.c[n][0];
                }
            }
        }
        m
    }

    /// Taylor coefficient `n` of a purely spatial operator as a [`DenseOperator`].
    pub fn to_operator(&self, n: usize, grid: &GridSpec) -> DenseOperator {
        assert!(self.terms.keys().all(|a| a[0] == 0), "operator still has time derivatives");
        if self.is_x_constant() {
            return DenseOperator::multiplier(grid, self.nout, self.nin, |_, k| self.symbol(n, k));
        }
        // Columns on unitary plane waves, then a forward transform over the mode index.
        let np = grid.points();
        let (fo, fi) = (self.nout, self.nin);
        let norm = 1.0 / (np as f64).sqrt();
        let weights: Vec<Vec<C64>> = (0..np)
            .map(|j| {
                let k = grid.wavevector(j);
                self.terms
                    .keys()
                    .map(|alpha| {
                        let mut w = C64::new(1.0, 0.0);
                        for (axis, kk) in k.iter().enumerate() {
                            for _ in 0..alpha[axis + 1] {
                                w *= C64::new(0.0, *kk);
                            }
                        }
                        w
                    })
                    .collect()
            })
            .collect();
        let phase = |j: usize, p: usize| {
            let k = grid.wavevector(j);
            let x = grid.coords(p);
            let arg: f64 = k.iter().zip(&x).map(|(a, b)| a * b).sum();
            C64::from_polar(norm, arg)
        };
        let mut m = Mat::zeros(np * fo, np * fi);
        let mut row = vec![C64::new(0.0, 0.0); np];
        for i in 0..fi {
            for o in 0..fo {
                let entries: Vec<(usize, &TField)> = self
                    .terms
                    .values()
                    .enumerate()
                    .filter_map(|(t, c)| c.get(&(o, i)).filter(|f| f.len() > n).map(|f| (t, f)))
                    .collect();
                if entries.is_empty() {
                    continue;
                }
                for p in 0..np {
                    for (j, r) in row.iter_mut().enumerate() {
                        let mut acc = C64::new(0.0, 0.0);
                        for (t, f) in &entries {
                            acc += f.at(n, p) * weights[j][*t];
                        }
                        *r = acc * phase(j, p);
                    }
                    grid.fft(&mut row, false);
                    for (q, v) in row.iter().enumerate() {
                        m[(p * fo + o, q * fi + i)] = *v;
                    }
                }
            }
        }
        DenseOperator::from_dense(grid, fo, fi, m).expect("shape")
    }
}
