"""Numpy reference implementation of the risk-set accumulation kernels.

Shared conventions (both backends):

* subjects are sorted by observed time DESCENDING, so every risk set is a
  prefix of the arrays;
* events are ordered by descending event time, hence ``risk_sizes`` (prefix
  lengths) is strictly increasing;
* ``event_counts[e]`` is the tie multiplicity of event time e;
* all reductions run over the same fixed prefix order, so results are
  deterministic for a given backend.

Each kernel returns the accumulated ``sum_e count_e * log S0_e`` plus the
quantity needed by the caller (gradient accumulator or quadratic form); the
caller owns the 1/n scaling and the event-side terms.
"""

from __future__ import annotations

import numpy as np


def const_value_grad(W, eta, risk_sizes, event_counts, want_grad):
    """Log-denominator sum and gradient accumulator, time-constant design.

    Returns ``(sum_e c_e log S0_e, sum_e (c_e / S0_e) S1_e)`` where
    ``S0_e / S1_e`` are the plain and design-weighted exponential sums over
    the e-th risk prefix; the second element is None when ``want_grad`` is
    false.
    """
    if len(risk_sizes) == 0:
        return 0.0, (np.zeros(W.shape[1]) if want_grad else None)
    shift = float(eta.max())
    z = np.exp(eta - shift)
    s0 = np.cumsum(z)[risk_sizes - 1]
    logsum = float(event_counts @ (np.log(s0) + shift))
    if not want_grad:
        return logsum, None
    s1 = np.cumsum(z[:, None] * W, axis=0)[risk_sizes - 1]
    return logsum, (event_counts / s0) @ s1


def const_quad(eta, a, risk_sizes, event_counts):
    """``sum_e c_e * Var_e(a)`` with exp(eta)-weighted prefix variances."""
    if len(risk_sizes) == 0:
        return 0.0
    shift = float(eta.max())
    z = np.exp(eta - shift)
    s0 = np.cumsum(z)[risk_sizes - 1]
    m1 = np.cumsum(z * a)[risk_sizes - 1] / s0
    m2 = np.cumsum(z * a * a)[risk_sizes - 1] / s0
    return float(event_counts @ (m2 - m1 * m1))


def tv_value_grad(M, X, basis_at_events, risk_sizes, event_counts, want_grad):
    """Time-varying twin of :func:`const_value_grad`.

    The linear predictor at event time e is ``M @ basis_at_events[e]`` with
    ``M = X @ Gamma``; the gradient accumulator factorizes per event into
    ``(weighted X sum) x (basis row)`` and is returned as a ``(p, L)`` matrix.
    """
    n_events = len(risk_sizes)
    p = X.shape[1]
    L = M.shape[1]
    if n_events == 0:
        return 0.0, (np.zeros((p, L)) if want_grad else None)
    logsum = 0.0
    xw = np.empty((n_events, p)) if want_grad else None
    for e in range(n_events):
        m = risk_sizes[e]
        eta = M[:m] @ basis_at_events[e]
        shift = float(eta.max())
        z = np.exp(eta - shift)
        s0 = float(z.sum())
        logsum += event_counts[e] * (np.log(s0) + shift)
        if want_grad:
            xw[e] = (event_counts[e] / s0) * (z @ X[:m])
    if not want_grad:
        return logsum, None
    return logsum, xw.T @ basis_at_events


def tv_quad(M, N, basis_at_events, risk_sizes, event_counts):
    """``sum_e c_e * Var_e(a(t_e))`` with ``a = N @ basis_at_events[e]``."""
    acc = 0.0
    for e in range(len(risk_sizes)):
        m = risk_sizes[e]
        eta = M[:m] @ basis_at_events[e]
        shift = float(eta.max())
        z = np.exp(eta - shift)
        s0 = float(z.sum())
        a = N[:m] @ basis_at_events[e]
        m1 = float(z @ a) / s0
        m2 = float(z @ (a * a)) / s0
        acc += event_counts[e] * (m2 - m1 * m1)
    return float(acc)
