"""Brute-force reference implementations used as test oracles.

Everything here is written with plain Python loops and ``math`` so that it
shares no code path with the vectorized library.
"""

import itertools
import math

import numpy as np


def kl_loop(p, q):
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    s = 0.0
    for pi, qi in zip(p, q):
        if pi > 0:
            if qi <= 0:
                return math.inf
            s += pi * (math.log(pi) - math.log(qi))
        s += qi - pi
    return s


def outer_loop(a, b):
    return [x * y for x in a for y in b]


def linearized_cost_loop(A, B, Pf):
    n1, d1 = A.shape
    n2, d2 = B.shape
    out = np.zeros((n1, n2))
    for i in range(n1):
        for j in range(n2):
            s = 0.0
            for k in range(d1):
                for l in range(d2):
                    s += (A[i, k] - B[j, l]) ** 2 * Pf[k, l]
            out[i, j] = s
    return out


def coot_objective_loop(A, B, Ps, Pf, w1s, w1f, w2s, w2f, lam1, lam2, eps):
    """Full unbalanced objective with every tensor materialized."""
    n1, d1 = A.shape
    n2, d2 = B.shape
    transport = 0.0
    for i, j, k, l in itertools.product(range(n1), range(n2), range(d1), range(d2)):
        transport += (A[i, k] - B[j, l]) ** 2 * Ps[i, j] * Pf[k, l]
    ps1 = [sum(Ps[i, j] for j in range(n2)) for i in range(n1)]
    ps2 = [sum(Ps[i, j] for i in range(n1)) for j in range(n2)]
    pf1 = [sum(Pf[k, l] for l in range(d2)) for k in range(d1)]
    pf2 = [sum(Pf[k, l] for k in range(d1)) for l in range(d2)]
    kl1 = kl_loop(outer_loop(ps1, pf1), outer_loop(w1s, w1f))
    kl2 = kl_loop(outer_loop(ps2, pf2), outer_loop(w2s, w2f))
    joint, ref = [], []
    for i, j, k, l in itertools.product(range(n1), range(n2), range(d1), range(d2)):
        joint.append(Ps[i, j] * Pf[k, l])
        ref.append(w1s[i] * w2s[j] * w1f[k] * w2f[l])
    ent = kl_loop(joint, ref)
    total = transport
    if lam1:
        total += lam1 * kl1
    if lam2:
        total += lam2 * kl2
    if eps:
        total += eps * ent
    return {"transport": transport, "kl1": kl1, "kl2": kl2, "entropic": ent, "total": total}


def uot_objective_loop(C, mu, nu, rho1, rho2, eps, P):
    m, n = C.shape
    val = sum(C[i, j] * P[i, j] for i in range(m) for j in range(n))
    r = [sum(P[i, j] for j in range(n)) for i in range(m)]
    c = [sum(P[i, j] for i in range(m)) for j in range(n)]
    val += rho1 * kl_loop(r, mu) + rho2 * kl_loop(c, nu)
    if eps:
        val += eps * kl_loop(P.ravel(), outer_loop(mu, nu))
    return val


def foscttm_loop(X1, X2):
    n = len(X1)

    def dist(a, b):
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))

    fwd = bwd = 0.0
    for i in range(n):
        d_true = dist(X1[i], X2[i])
        fwd += sum(1 for j in range(n) if j != i and dist(X1[i], X2[j]) < d_true) / (n - 1)
        bwd += sum(1 for j in range(n) if j != i and dist(X1[j], X2[i]) < d_true) / (n - 1)
    return (fwd / n + bwd / n) / 2


def block_diag_loop(P, y1, y2):
    on = tot = 0.0
    for i in range(P.shape[0]):
        for j in range(P.shape[1]):
            tot += P[i, j]
            if y1[i] == y2[j]:
                on += P[i, j]
    return on / tot if tot > 0 else 0.0


def cost_extrema_loop(A, B, rows, cols):
    d0 = math.inf
    dinf = 0.0
    for i in range(A.shape[0]):
        for k in range(A.shape[1]):
            for j in range(B.shape[0]):
                for l in range(B.shape[1]):
                    c = (A[i, k] - B[j, l]) ** 2
                    dinf = max(dinf, c)
                    if i in rows and k in cols:
                        d0 = min(d0, c)
    return d0, dinf


def thm2_loop(clean, M, l1, l2, a_s, a_f, dinf):
    delta = 2 * (l1 + l2) * (1 - a_s * a_f)
    if delta == 0:
        return clean
    K = M + clean / M + delta
    return a_s * a_f * clean + delta * M * (1 - math.exp(-(dinf * (1 + M) + K) / (delta * M)))
