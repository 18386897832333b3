"""Independent reference computations.  None of these call into foldkit."""
import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


def matmul_loops(a, b):
    n, m = len(a), len(b[0])
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(len(b)):
                s += a[i][t] * b[t][j]
            out[i, j] = s
    return out


def jacobi_eigenvalues(sym, tol=1e-15, max_sweeps=100):
    """Cyclic two-sided Jacobi on a symmetric matrix; eigenvalues sorted descending."""
    a = np.array(sym, dtype=float)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def softmax_mp(row):
    """exp/sum computed in exact rationals after rounding exponentials to 40 digits."""
    from decimal import Decimal, getcontext

    getcontext().prec = 50
    m = max(row)
    ex = [Decimal(x - m).exp() for x in row]
    total = sum(ex)
    return [float(e / total) for e in ex]


def pairwise_distances(y, z):
    return np.array([[math.sqrt(sum((a - b) ** 2 for a, b in zip(yi, zj))) for zj in z] for yi in y])


def transport_lp(y, z, a, b):
    """Min-cost coupling cost via a generic LP solver (HiGHS)."""
    cost = pairwise_distances(y, z)
    n, k = cost.shape
    rows = []
    for i in range(n):
        r = np.zeros((n, k))
        r[i] = 1
        rows.append(r.ravel())
    for j in range(k):
        r = np.zeros((n, k))
        r[:, j] = 1
        rows.append(r.ravel())
    res = linprog(cost.ravel(), A_eq=np.array(rows), b_eq=np.r_[a, b], bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def transport_permutations(y, z):
    """Uniform n-to-n transport: optimal over permutation matrices (Birkhoff)."""
    cost = pairwise_distances(y, z)
    n = cost.shape[0]
    return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n


def energy_scan(sigma, t):
    """Linear scan with exact rational prefix sums."""
    s = [Fraction(float(v)) for v in sigma]
    total = sum(s)
    acc = Fraction(0)
    for k, v in enumerate(s, start=1):
        acc += v
        if acc / total >= Fraction(t):
            return k
    return len(s)


def spearman(x, y):
    from scipy.stats import spearmanr

    return float(spearmanr(x, y)[0])
