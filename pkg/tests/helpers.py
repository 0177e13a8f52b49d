"""Shared test helpers: independent slow references for the fast code paths.

Everything here recomputes quantities the package produces, by the most
literal route available (triple loops, textbook formulas, generic
quadrature), so the tests compare two genuinely different derivations.
"""

import numpy as np

from coxsieve.basis import build_raw_basis, orthonormalize
from coxsieve.data import Family, SurvivalDataset


def make_basis(L, order=3):
    """Orthonormalized spline system of size ``L`` on [0, 1]."""
    return orthonormalize(build_raw_basis(L, order))


def unit_quadrature(panels=200, nodes=10):
    """Composite Gauss-Legendre rule on [0, 1] with uniform panels.

    Independent of the basis module's own rule (different panels, node
    counts, and assembly code).
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2.0
    half = np.diff(edges) / 2.0
    xs = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * np.broadcast_to(w, (panels, nodes))).ravel()
    return xs, ws


def aligned_quadrature(basis, split=3, nodes=12):
    """Gauss-Legendre rule aligned with the spline panels but finer.

    Exact for piecewise polynomials of degree up to ``2*nodes - 1`` on
    every knot panel, while using different panels and node counts than
    the implementation's internal rule.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    bps = basis.raw.breakpoints if hasattr(basis, "raw") else basis.breakpoints
    edges = np.concatenate(
        [np.linspace(a, b, split + 1)[:-1] for a, b in zip(bps[:-1], bps[1:])]
        + [bps[-1:]]
    )
    mid = (edges[:-1] + edges[1:]) / 2.0
    half = np.diff(edges) / 2.0
    xs = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * np.broadcast_to(w, (len(mid), nodes))).ravel()
    return xs, ws


def ref_row(data, basis, i, t):
    """Expanded design row for subject ``i`` at time ``t``, from scratch."""
    fam = data.family
    X = data.covariates
    if fam is Family.TIME_VARYING:
        return np.kron(X[i], basis.evaluate(np.array([t]))[0])
    if fam is Family.INDEX_VC:
        b = basis.evaluate(np.array([data.index[i]]))[0]
        return np.concatenate([b[1:], np.kron(X[i], b)])
    parts = [basis.evaluate(np.array([X[i, j]]))[0][1:] for j in range(data.p)]
    return np.concatenate(parts)


def ref_value(gamma, data, basis):
    """Slow tied-risk-set reference for the averaged negative log likelihood.

    Rebuilds every design row on demand and loops over distinct event
    times, sharing one denominator among tied events.
    """
    gamma = np.asarray(gamma, dtype=float)
    n = data.n
    val = 0.0
    for i in range(n):
        if data.status[i] == 1:
            val -= float(gamma @ ref_row(data, basis, i, data.times[i]))
    for t in sorted(set(data.times[data.status == 1])):
        c = int(((data.times == t) & (data.status == 1)).sum())
        at_risk = [k for k in range(n) if data.times[k] >= t]
        s = sum(
            np.exp(float(gamma @ ref_row(data, basis, k, t))) for k in at_risk
        )
        val += c * np.log(s)
    return val / n


def random_dataset(rng, family, n=30, p=3, with_ties=True):
    """Random well-posed dataset of the given family, with injected ties."""
    times = rng.uniform(0.05, 1.0, n)
    if with_ties and n >= 21:
        times[5] = times[4]
        times[10] = times[4]
        times[20] = times[19]
    status = (rng.uniform(size=n) < 0.7).astype(int)
    status[min(4, n - 1)] = 1
    if with_ties and n >= 21:
        status[5] = status[10] = 1
    if family is Family.TIME_VARYING:
        X = rng.normal(0.0, 1.0, (n, p))
    else:
        X = rng.uniform(0.0, 1.0, (n, p))
    index = rng.uniform(0.0, 1.0, n) if family is Family.INDEX_VC else None
    return SurvivalDataset(family, times, status, X, index)


def loglog_slope(xs, ys):
    """Least-squares slope of log(ys) against log(xs)."""
    return float(np.polyfit(np.log(np.asarray(xs, float)),
                            np.log(np.asarray(ys, float)), 1)[0])


# ---------------------------------------------------------------------------
# numerical proximal-map oracles (independent of the closed forms)
# ---------------------------------------------------------------------------

def oracle_prox_group(v, a):
    """argmin_u 1/2|u-v|^2 + a|u|_2 by collinear reduction + 1-D search.

    The objective is invariant under rotations fixing ``v`` and strictly
    convex, so the minimizer is ``s*v``; the scalar profile is solved
    numerically.
    """
    from scipy.optimize import minimize_scalar

    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return np.zeros_like(v)
    f = lambda s: 0.5 * nv**2 * (1.0 - s) ** 2 + a * abs(s) * nv
    r = minimize_scalar(f, bounds=(-0.5, 1.5), method="bounded",
                        options={"xatol": 1e-14})
    s = r.x if f(r.x) <= f(0.0) else 0.0
    return s * v


def oracle_prox_p1(v, a, scalar_len):
    """argmin_u 1/2|u-v|^2 + a(|u_s|_1-ish scalar part + |u_tail|_2), slotwise."""
    from scipy.optimize import minimize_scalar

    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    for k in range(scalar_len):
        w = v[k]
        f = lambda x: 0.5 * (x - w) ** 2 + a * abs(x)
        r = minimize_scalar(f, bounds=(-abs(w) - 1.0, abs(w) + 1.0),
                            method="bounded", options={"xatol": 1e-14})
        out[k] = r.x if f(r.x) <= f(0.0) else 0.0
    out[scalar_len:] = oracle_prox_group(v[scalar_len:], a)
    return out


def oracle_prox_hier(v, a, scalar_len, iters=4000):
    """argmin_u 1/2|u-v|^2 + a|u_tail|_2 + a|u|_2 via the dual.

    The minimizer is ``v`` minus the projection of ``v`` onto the
    Minkowski sum of two Euclidean balls (one living on the tail slots
    only); the sum-projection is computed by alternating single-ball
    projections, which are elementary.
    """
    v = np.asarray(v, dtype=float)

    def p_tail(z):
        out = np.zeros_like(z)
        t = z[scalar_len:]
        nt = float(np.linalg.norm(t))
        out[scalar_len:] = t if nt <= a else t * (a / nt)
        return out

    def p_full(z):
        nz = float(np.linalg.norm(z))
        return z if nz <= a else z * (a / nz)

    y1 = np.zeros_like(v)
    y2 = np.zeros_like(v)
    for _ in range(iters):
        y1 = p_tail(v - y2)
        y2 = p_full(v - y1)
    return v - y1 - y2


# ---------------------------------------------------------------------------
# brute-force penalized minimizer (support enumeration + smooth polish)
# ---------------------------------------------------------------------------

def brute_force_min(design, spec, warm_flat=None, seed=0):
    """Upper bound of the global penalized minimum by support enumeration.

    Every on/off pattern of scalar and vector parts across the penalized
    blocks is polished by a generic quasi-Newton run on the free slots
    (finite-difference gradients, so no shared code with the solver).
    Returns ``(best_objective, best_flat)``.
    """
    import itertools

    from scipy.optimize import minimize

    from coxsieve.solver import penalty_value

    lay = design.layout
    rng = np.random.default_rng(seed)
    pen = [b for b in lay.blocks if b.penalized]
    always_on = [b for b in lay.blocks if not b.penalized]
    if warm_flat is None:
        warm_flat = np.zeros(lay.dim)
    choices = []
    for b in pen:
        if b.scalar_len and b.size > b.scalar_len:
            choices.append((0, 1, 2, 3))  # off / scalar / vector / both
        elif b.scalar_len:
            choices.append((0, 1))
        else:
            choices.append((0, 2))
    best_f, best_x = np.inf, np.zeros(lay.dim)
    for pattern in itertools.product(*choices):
        mask = np.zeros(lay.dim, dtype=bool)
        for b in always_on:
            mask[b.start:b.stop] = True
        for b, pat in zip(pen, pattern):
            if pat in (1, 3):
                mask[b.scalar_slice] = True
            if pat in (2, 3):
                mask[b.vector_slice] = True
        idx = np.flatnonzero(mask)

        def objective(u):
            x = np.zeros(lay.dim)
            x[idx] = u
            return design.value(x) + spec.lam * penalty_value(x, spec, lay)

        if idx.size == 0:
            f = float(design.value(np.zeros(lay.dim)))
            if f < best_f:
                best_f, best_x = f, np.zeros(lay.dim)
            continue
        for u0 in (warm_flat[idx], rng.normal(0.0, 0.3, idx.size)):
            r = minimize(objective, u0, method="L-BFGS-B",
                         options={"maxiter": 300, "ftol": 1e-16, "gtol": 1e-12})
            if np.isfinite(r.fun) and r.fun < best_f:
                best_f = float(r.fun)
                x = np.zeros(lay.dim)
                x[idx] = r.x
                best_x = x
    return best_f, best_x
