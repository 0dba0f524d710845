"""Zeroth-order blocks of the reduced de Sitter operators on spatially constant sections.

Flat slicing g = -dt^2 + e^{2Ht} dx^2 in 3+1 dimensions, H = 1, Lambda = 3.
Christoffels and curvature come from the textbook coordinate formulas, not from a
commutator of covariant derivatives. Prints Taylor coefficients of a_1(t) and a_2(t)
in the orthonormal packed frame as JSON.
"""
import json
import sympy as sp

t = sp.symbols("t", real=True)
H = sp.Integer(1)
LAM = 3 * H**2
ORDER = 6
n = 4
h = sp.exp(2 * H * t)
g = sp.diag(-1, h, h, h)
ginv = g.inv()


def dd(expr, a):
    # sections and metric are spatially constant
    return sp.diff(expr, t) if a == 0 else sp.Integer(0)


Gam = [[[sp.simplify(sum(ginv[e, f] * (dd(g[f, b], a) + dd(g[f, a], b) - dd(g[a, b], f)) for f in range(n)) / 2)
         for b in range(n)] for a in range(n)] for e in range(n)]

# MTW convention: R^r_{s m v} = d_m G^r_{v s} - d_v G^r_{m s} + G^r_{m l} G^l_{v s} - G^r_{v l} G^l_{m s}
R = [[[[sp.simplify(dd(Gam[r][v][s], m) - dd(Gam[r][m][s], v)
                    + sum(Gam[r][m][l] * Gam[l][v][s] - Gam[r][v][l] * Gam[l][m][s] for l in range(n)))
        for v in range(n)] for m in range(n)] for s in range(n)] for r in range(n)]


def box_covector(w):
    nab = [[dd(w[b], a) - sum(Gam[e][a][b] * w[e] for e in range(n)) for b in range(n)] for a in range(n)]
    out = []
    for c in range(n):
        acc = 0
        for a in range(n):
            for b in range(n):
                if ginv[a, b] == 0:
                    continue
                term = dd(nab[b][c], a) - sum(Gam[e][a][b] * nab[e][c] + Gam[e][a][c] * nab[b][e] for e in range(n))
                acc += ginv[a, b] * term
        out.append(acc)
    return out


def box_tensor(u):
    nab = [[[dd(u[b][c], a) - sum(Gam[e][a][b] * u[e][c] + Gam[e][a][c] * u[b][e] for e in range(n))
             for c in range(n)] for b in range(n)] for a in range(n)]
    out = [[0] * n for _ in range(n)]
    for c in range(n):
        for f in range(n):
            acc = 0
            for a in range(n):
                for b in range(n):
                    if ginv[a, b] == 0:
                        continue
                    term = dd(nab[b][c][f], a) - sum(
                        Gam[e][a][b] * nab[e][c][f] + Gam[e][a][c] * nab[b][e][f] + Gam[e][a][f] * nab[b][c][e]
                        for e in range(n))
                    acc += ginv[a, b] * term
            out[c][f] = acc
    return out


def riem(u):
    # Riem(u)_ab = g^{ce} R_{eab}^f u_cf with R_{abc}^d = -R^d_{cab} (MTW)
    return [[sum(ginv[c, e] * (-R[f][b][e][a]) * u[c][f] for c in range(n) for e in range(n) for f in range(n))
             for b in range(n)] for a in range(n)]


s = sp.exp(sp.Rational(3, 2) * H * t)
u = sp.exp(-H * t)
M = sp.diag(1, u, u, u)
pairs = [(a, b) for a in range(n) for b in range(a, n)]
W = [sp.sqrt(2) if a == b else 2 for (a, b) in pairs]
fs = sp.symbols("f0:10")
F = [sp.Function(f"F{i}")(t) for i in range(10)]


def coeff_matrix(expr_list, m):
    A = sp.zeros(len(expr_list), m)
    for i, ex in enumerate(expr_list):
        ex = sp.expand(ex)
        for j in range(m):
            A[i, j] = sp.simplify(ex.coeff(F[j]).subs({sp.Derivative(F[k], t): 0 for k in range(m)})
                                  .subs({sp.Derivative(F[k], (t, 2)): 0 for k in range(m)}))
    return A


def a1_matrix():
    # w = S^{-1} v with S = s * diag(1, u, u, u)
    w = [F[c] / (s * M[c, c]) for c in range(n)]
    bw = box_covector(w)
    dw = [-bw[c] - LAM * w[c] for c in range(n)]
    out = [sp.expand(s * M[c, c] * dw[c]) for c in range(n)]
    return coeff_matrix(out, n)


def a2_matrix():
    # packed orthonormal v -> full u = S^{-1} v
    uu = [[0] * n for _ in range(n)]
    for i, (a, b) in enumerate(pairs):
        val = F[i] / (W[i] * s * M[a, a] * M[b, b])
        uu[a][b] = val
        uu[b][a] = val
    bu = box_tensor(uu)
    ru = riem(uu)
    out = []
    for i, (a, b) in enumerate(pairs):
        val = -bu[a][b] + 2 * ru[a][b]
        out.append(sp.expand(W[i] * s * M[a, a] * M[b, b] * val))
    return coeff_matrix(out, len(pairs))


def taylor(A):
    coeffs = []
    for k in range(ORDER + 1):
        Ck = A.applyfunc(lambda e: sp.nsimplify(sp.series(e, t, 0, ORDER + 1).removeO().coeff(t, k)))
        coeffs.append([[float(Ck[i, j]) for j in range(A.shape[1])] for i in range(A.shape[0])])
    return coeffs


if __name__ == "__main__":
    a1 = a1_matrix()
    a2 = a2_matrix()
    print(json.dumps({"a1": taylor(a1), "a2": taylor(a2),
                      "a1_closed": str(a1), "a2_closed": str(a2)}, indent=1))
