use super::diffop::{Coef, DiffOp};
use super::metric::MetricFamily;
use super::tfield::TField;
use crate::linalg::C64;
use crate::spectral_core::GridSpec;

/// Lorentzian metric `g = −dt² + h_t` in Gaussian coordinates with its Levi-Civita data.
///
/// Index 0 is time, `1..=d` are the torus axes. Christoffels use the general formula
/// and the Riemann tensor is read off the commutator of covariant derivatives.
#[derive(Clone, Debug)]
pub struct Spacetime {
    pub grid: GridSpec,
    pub d: usize,
    pub n: usize,
    pub len: usize,
    pub g: Vec<TField>,
    pub ginv: Vec<TField>,
    /// `Γ^e_{ab}` at `(e * n + a) * n + b`.
    pub gamma: Vec<TField>,
    /// `R_{abc}^e` with `(∇_a∇_b − ∇_b∇_a) w_c = R_{abc}^e w_e`, at `((a * n + b) * n + c) * n + e`.
    pub riemann: Vec<TField>,
    /// Largest coefficient of derivative terms left in the commutator (zero in exact arithmetic).
    pub commutator_leak: f64,
}

fn neg(f: &TField) -> TField {
    f.scale(C64::new(-1.0, 0.0))
}

/// Packed index of `(a, b)`, `a ≤ b`, in row-major upper-triangle order.
pub fn packed_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * n - a * (a + 1) / 2 + b
}

pub fn packed_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

impl Spacetime {
    pub fn new(metric: &MetricFamily) -> Self {
        let d = metric.dim();
        let n = d + 1;
        let len = metric.h.len();
        let grid = metric.grid.clone();
        let hinv = metric.h.inverse();
        let mut g = vec![TField::zero(len); n * n];
        let mut ginv = vec![TField::zero(len); n * n];
        g[0] = TField::scalar(-1.0, len);
        ginv[0] = TField::scalar(-1.0, len);
        for i in 0..d {
            for j in 0..d {
                g[(i + 1) * n + j + 1] = metric.h.get(i, j).clone();
                ginv[(i + 1) * n + j + 1] = hinv.get(i, j).clone();
            }
        }
        let deriv = |f: &TField, c: usize| if c == 0 { f.dt() } else { f.dx(c - 1, &grid) };
        // dg[(c * n + a) * n + b] = ∂_c g_ab
        let mut dg = Vec::with_capacity(n * n * n);
        for c in 0..n {
            dg.extend(g.iter().take(n * n).map(|gab| deriv(gab, c)));
        }
        let dg_at = |c: usize, a: usize, b: usize| &dg[(c * n + a) * n + b];
        let mut gamma = vec![TField::zero(len); n * n * n];
        for e in 0..n {
            for a in 0..n {
                for b in a..n {
                    let mut acc = TField::zero(len);
                    for f in 0..n {
                        let gi = &ginv[e * n + f];
                        if gi.is_zero() {
                            continue;
                        }
                        let s = dg_at(a, f, b).add(dg_at(b, f, a)).sub(dg_at(f, a, b));
                        if s.is_zero() {
                            continue;
                        }
                        acc.add_assign(&gi.mul(&s));
                    }
                    let v = acc.scale(C64::new(0.5, 0.0));
                    gamma[(e * n + a) * n + b] = v.clone();
                    gamma[(e * n + b) * n + a] = v;
                }
            }
        }
        let mut st = Self {
            grid,
            d,
            n,
            len,
            g,
            ginv,
            gamma,
            riemann: Vec::new(),
            commutator_leak: 0.0,
        };
        st.compute_riemann();
        st
    }

    pub fn christoffel(&self, e: usize, a: usize, b: usize) -> &TField {
        &self.gamma[(e * self.n + a) * self.n + b]
    }

    fn pow(&self, p: usize) -> usize {
        self.n.pow(p as u32)
    }

    /// `∇` on covariant rank-`p` tensors, new index first.
    pub fn nabla(&self, p: usize) -> DiffOp {
        let n = self.n;
        let np = self.pow(p);
        let mut op = DiffOp::zero(np * n, np);
        for a in 0..n {
            let mut alpha = [0u8; 4];
            alpha[a] = 1;
            let mut c = Coef::new();
            for idx in 0..np {
                c.insert((a * np + idx, idx), TField::scalar(1.0, self.len));
            }
            op.terms.insert(alpha, c);
        }
        let zero_term = op.terms.entry([0; 4]).or_default();
        for a in 0..n {
            for idx in 0..np {
                let out = a * np + idx;
                for s in 0..p {
                    let place = self.pow(p - 1 - s);
                    let bs = (idx / place) % n;
                    for e in 0..n {
                        let gm = &self.gamma[(e * n + a) * n + bs];
                        if gm.is_zero() {
                            continue;
                        }
                        let inn = idx - bs * place + e * place;
                        let v = neg(gm);
                        match zero_term.get_mut(&(out, inn)) {
                            Some(x) => x.add_assign(&v),
                            None => {
                                zero_term.insert((out, inn), v);
                            }
                        }
                    }
                }
            }
        }
        op.prune();
        op
    }

    /// Contraction of the first two indices with `g^{ab}`, rank `p + 2 → p`.
    pub fn contract(&self, p: usize) -> DiffOp {
        let n = self.n;
        let np = self.pow(p);
        DiffOp::multiplication(np, np * n * n, |out, inn| {
            let a = inn / (np * n);
            let c = (inn / np) % n;
            (inn % np == out).then(|| self.ginv[a * n + c].clone())
        })
    }

    /// `□ = g^{ab}∇_a∇_b` on rank-`p` tensors.
    pub fn box_op(&self, p: usize) -> DiffOp {
        let nn = self.nabla(p + 1).compose(&self.nabla(p), &self.grid);
        self.contract(p).compose(&nn, &self.grid)
    }

    fn compute_riemann(&mut self) {
        let n = self.n;
        let n2 = self.nabla(2).compose(&self.nabla(1), &self.grid);
        let swap = |i: usize| {
            let (a, b, c) = (i / (n * n), (i / n) % n, i % n);
            (b * n + a) * n + c
        };
        let mut comm = n2.clone();
        for (alpha, coef) in &n2.terms {
            let dst = comm.terms.entry(*alpha).or_default();
            for ((o, i), v) in coef {
                let key = (swap(*o), *i);
                let nv = neg(v);
                match dst.get_mut(&key) {
                    Some(x) => x.add_assign(&nv),
                    None => {
                        dst.insert(key, nv);
                    }
                }
            }
        }
        comm.prune();
        self.commutator_leak = comm.select(|a| *a != [0; 4]).max_abs();
        let zero = comm.term([0; 4]).cloned().unwrap_or_default();
        let len = self.len.saturating_sub(2);
        self.riemann = (0..n * n * n * n)
            .map(|i| zero.get(&(i / n, i % n)).cloned().unwrap_or_else(|| TField::zero(len)))
            .collect();
    }

    pub fn riemann_at(&self, a: usize, b: usize, c: usize, e: usize) -> &TField {
        let n = self.n;
        &self.riemann[((a * n + b) * n + c) * n + e]
    }

    /// `Ric_ab = R_{acb}^c`.
    pub fn ricci(&self) -> Vec<TField> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let mut acc = TField::zero(self.len);
                for c in 0..n {
                    acc.add_assign(self.riemann_at(a, c, b, c));
                }
                out.push(acc);
            }
        }
        out
    }

    /// `Riem(u)_ab = g^{ce} R_{eab}^f u_cf` on full rank-2 components.
    pub fn riem_op(&self) -> DiffOp {
        let n = self.n;
        let mut c = Coef::new();
        for a in 0..n {
            for b in 0..n {
                for cc in 0..n {
                    for f in 0..n {
                        let mut acc = TField::zero(self.len);
                        let mut any = false;
                        for e in 0..n {
                            let gi = &self.ginv[cc * n + e];
                            let r = self.riemann_at(e, a, b, f);
                            if gi.is_zero() || r.is_zero() {
                                continue;
                            }
                            acc.add_assign(&gi.mul(r));
                            any = true;
                        }
                        if any && !acc.is_zero() {
                            c.insert((a * n + b, cc * n + f), acc);
                        }
                    }
                }
            }
        }
        DiffOp::from_coef(n * n, n * n, [0; 4], c)
    }

    /// Packed symmetric 2-tensors `[tt, t1..td, ΣΣ upper triangle]` from full components.
    pub fn pack(&self) -> DiffOp {
        let n = self.n;
        DiffOp::multiplication(packed_dim(n), n * n, |o, i| {
            let (a, b) = (i / n, i % n);
            (a <= b && packed_index(n, a, b) == o).then(|| TField::scalar(1.0, self.len))
        })
    }

    pub fn unpack(&self) -> DiffOp {
        let n = self.n;
        DiffOp::multiplication(n * n, packed_dim(n), |o, i| {
            (packed_index(n, o / n, o % n) == i).then(|| TField::scalar(1.0, self.len))
        })
    }

    /// Packed symmetrization of full rank-2 components.
    fn pack_sym(&self) -> DiffOp {
        let n = self.n;
        DiffOp::multiplication(packed_dim(n), n * n, |o, i| {
            let (a, b) = (i / n, i % n);
            (packed_index(n, a, b) == o).then(|| TField::scalar(if a == b { 1.0 } else { 0.5 }, self.len))
        })
    }

    /// `(Iu)_ab = u_ab − ½ tr_g(u) g_ab` on packed components.
    pub fn trace_reversal(&self) -> DiffOp {
        let n = self.n;
        let full = DiffOp::multiplication(n * n, n * n, |o, i| {
            let mut v = self.g[o].mul(&self.ginv[i]).scale(C64::new(-0.5, 0.0));
            if o == i {
                v = v.add(&TField::scalar(1.0, self.len));
            }
            Some(v)
        });
        self.pack().compose(&full, &self.grid).compose(&self.unpack(), &self.grid)
    }

    /// `d = Sym ∘ ∇` from covectors to packed symmetric tensors.
    pub fn d_op(&self) -> DiffOp {
        self.pack_sym().compose(&self.nabla(1), &self.grid)
    }

    /// `δ = −2 g^{ac} ∇_a u_{cb}` from packed symmetric tensors to covectors.
    pub fn delta_op(&self) -> DiffOp {
        let div = self.contract(1).compose(&self.nabla(2), &self.grid);
        div.compose(&self.unpack(), &self.grid).scale(C64::new(-2.0, 0.0))
    }

    /// Scalar Klein–Gordon operator `−□ + m²`.
    pub fn d0_op(&self, mass2: f64) -> DiffOp {
        self.box_op(0)
            .scale(C64::new(-1.0, 0.0))
            .add(&DiffOp::identity(1, self.len).scale(C64::new(mass2, 0.0)))
    }

    /// `D₁ = −□ − Λ` on covectors.
    pub fn d1_op(&self, lambda: f64) -> DiffOp {
        self.box_op(1)
            .scale(C64::new(-1.0, 0.0))
            .add(&DiffOp::identity(self.n, self.len).scale(C64::new(-lambda, 0.0)))
    }

    /// `−□ + 2 Riem` on full rank-2 components.
    fn lich_full(&self) -> DiffOp {
        self.box_op(2)
            .scale(C64::new(-1.0, 0.0))
            .add(&self.riem_op().scale(C64::new(2.0, 0.0)))
    }

    /// `D₂ = −□ + 2 Riem` on packed symmetric tensors.
    pub fn d2_op(&self) -> DiffOp {
        self.pack()
            .compose(&self.lich_full(), &self.grid)
            .compose(&self.unpack(), &self.grid)
    }

    /// Full gravity operator family sharing one set of building blocks.
    pub fn gravity_ops(&self, lambda: f64) -> GravityOps {
        let d = self.d_op();
        let delta = self.delta_op();
        let i = self.trace_reversal();
        let d1 = self.d1_op(lambda);
        let d2 = self.d2_op();
        let k = i.compose(&d, &self.grid);
        let idd = k.compose(&delta, &self.grid);
        let p = d2.sub(&idd);
        GravityOps { d1, d2, d, delta, i, k, p }
    }
}

/// Operators of linearized gravity on `V₁` (covectors) and packed `V₂`.
#[derive(Clone, Debug)]
pub struct GravityOps {
    pub d1: DiffOp,
    pub d2: DiffOp,
    pub d: DiffOp,
    pub delta: DiffOp,
    pub i: DiffOp,
    pub k: DiffOp,
    pub p: DiffOp,
}
