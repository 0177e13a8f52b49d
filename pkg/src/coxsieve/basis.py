"""Spline sieve on [0, 1]: clamped B-spline basis and its orthonormalized form.

The package expands unknown coefficient functions in an orthonormalized
B-spline system ``(b_1, ..., b_L)`` in which

* ``b_1`` is the constant function ``1/sqrt(L)``,
* ``b_2`` is the centered linear function ``sqrt(12/L) * (t - 1/2)``,
* the remaining elements are Gram-Schmidt images of interior raw B-splines,

all normalized so that ``integral(b_j * b_k) = delta_jk / L``.  Splitting a
function's coefficients into the ``b_1`` slot and the rest then separates its
constant part from its fluctuation, which is what the structure-selection
stage thresholds on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import BSpline

__all__ = [
    "RawBasis",
    "OrthonormalBasis",
    "ProjectedFunction",
    "build_raw_basis",
    "orthonormalize",
    "eval_basis",
    "project_function",
]

#: Residual-norm floor below which a raw element is considered dependent on
#: the already-orthonormalized ones and skipped.
_GS_SKIP_TOL = 1e-10


def _check_unit_interval(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.size and (t.min() < 0.0 or t.max() > 1.0):
        bad = t[(t < 0.0) | (t > 1.0)][0]
        raise ValueError(f"basis argument {bad!r} outside the domain [0, 1]")
    return np.atleast_1d(t)


@dataclass(frozen=True)
class RawBasis:
    """Clamped B-spline basis of size ``L`` and order ``order`` on [0, 1].

    ``order`` is the spline order (polynomial degree + 1); knots are uniform
    with spacing ``1 / (L - order + 1)`` and full multiplicity at 0 and 1, so
    the basis has exactly ``L`` elements forming a partition of unity.
    """

    L: int
    order: int
    knots: np.ndarray

    def evaluate(self, t_values) -> np.ndarray:
        """Evaluate all raw elements at ``t_values``; returns ``(m, L)``."""
        t = _check_unit_interval(t_values)
        return BSpline.design_matrix(
            t, self.knots, self.order - 1, extrapolate=False
        ).toarray()

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knots: panel boundaries for exact piecewise quadrature."""
        return np.unique(self.knots)

    def quadrature_rule(self, nodes_per_panel: int | None = None):
        """Composite Gauss-Legendre rule exact for products of two elements.

        Default node count is ``order + 2`` per knot panel, enough for
        polynomial degree ``2*order + 3 >= 2*(order-1)`` with margin.
        """
        m = nodes_per_panel if nodes_per_panel is not None else self.order + 2
        return _panel_gauss(self.breakpoints, m)

    def gram(self) -> np.ndarray:
        """Gram matrix of the raw elements under the L2([0,1]) inner product."""
        x, w = self.quadrature_rule()
        bx = self.evaluate(x)
        return (bx * w[:, None]).T @ bx

    def greville(self) -> np.ndarray:
        """Greville abscissae: coefficients representing ``t`` in the basis."""
        k = self.order - 1
        if k < 1:
            raise ValueError("greville abscissae need order >= 2")
        return np.array(
            [self.knots[j + 1 : j + 1 + k].mean() for j in range(self.L)]
        )


def _panel_gauss(breakpoints: np.ndarray, nodes_per_panel: int):
    """Gauss-Legendre nodes/weights composited over consecutive panels."""
    gx, gw = np.polynomial.legendre.leggauss(nodes_per_panel)
    lo = breakpoints[:-1]
    hi = breakpoints[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    return x, w


def build_raw_basis(L: int, order: int) -> RawBasis:
    """Construct the clamped uniform B-spline basis with ``L`` elements.

    Raises
    ------
    ValueError
        If ``L < order`` (no valid interior knot layout) or ``order < 1``.
    """
    if order < 1:
        raise ValueError(f"spline order must be >= 1, got {order}")
    if L < order:
        raise ValueError(
            f"basis size L={L} is smaller than the spline order {order}"
        )
    n_interior = L - order
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    knots = np.concatenate([np.zeros(order), interior, np.ones(order)])
    return RawBasis(L=L, order=order, knots=knots)


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormalized system ``b(t) = transform @ raw_elements(t)``.

    Rows of ``transform`` hold the raw-basis coefficients of each element;
    the system satisfies ``integral(b b^T) = I / L`` with ``b[0]`` constant
    and ``b[1]`` centered linear.
    """

    raw: RawBasis
    transform: np.ndarray
    #: smallest / largest eigenvalue of ``transform @ transform.T``
    eig_min: float = field(default=float("nan"))
    eig_max: float = field(default=float("nan"))

    @property
    def L(self) -> int:
        return self.raw.L

    @property
    def order(self) -> int:
        return self.raw.order

    def evaluate(self, t_values) -> np.ndarray:
        """Evaluate all orthonormalized elements at ``t_values``; ``(m, L)``."""
        return self.raw.evaluate(t_values) @ self.transform.T

    def evaluate_tail(self, t_values) -> np.ndarray:
        """Evaluate elements 2..L only (the non-constant ones); ``(m, L-1)``."""
        return self.evaluate(t_values)[:, 1:]

    def gram_error(self) -> float:
        """``max |L * integral(b b^T) - I|`` — orthonormality defect."""
        g = self.transform @ self.raw.gram() @ self.transform.T
        return float(np.abs(self.L * g - np.eye(self.L)).max())


def orthonormalize(raw: RawBasis) -> OrthonormalBasis:
    """Orthonormalize a raw basis, pinning the constant and linear elements.

    The first element is ``1/sqrt(L)`` and the second ``sqrt(12/L)*(t-1/2)``,
    both exactly representable in the raw basis (partition of unity and the
    Greville identity).  Remaining elements come from modified Gram-Schmidt
    (two projection passes) over the interior raw elements ``2..L-1`` in index
    order; every element is normalized to squared norm ``1/L``.

    Raises
    ------
    ValueError
        If ``order < 2`` or ``L < 2`` (the linear element would not exist).
    RuntimeError
        If the sweep cannot produce ``L`` independent elements.
    """
    if raw.order < 2:
        raise ValueError("orthonormalization needs order >= 2 (linear element)")
    L = raw.L
    if L < 2:
        raise ValueError("orthonormalization needs L >= 2")
    omega = raw.gram()

    rows = np.empty((L, L))
    rows[0] = 1.0 / np.sqrt(L)
    xi = raw.greville()
    rows[1] = np.sqrt(12.0 / L) * (xi - 0.5)

    count = 2
    for m in range(1, L - 1):  # raw interior elements 2..L-1 (1-based)
        if count == L:
            break
        c = np.zeros(L)
        c[m] = 1.0
        for _ in range(2):  # re-orthogonalize to suppress rounding drift
            for k in range(count):
                c = c - (L * (rows[k] @ omega @ c)) * rows[k]
        nrm = np.sqrt(c @ omega @ c)
        if nrm < _GS_SKIP_TOL:
            continue
        rows[count] = c / (nrm * np.sqrt(L))
        count += 1
    if count != L:
        raise RuntimeError(
            f"orthonormalization produced {count} of {L} elements; "
            "raw basis is numerically degenerate"
        )

    eigs = np.linalg.eigvalsh(rows @ rows.T)
    return OrthonormalBasis(
        raw=raw, transform=rows, eig_min=float(eigs[0]), eig_max=float(eigs[-1])
    )


def eval_basis(basis: RawBasis | OrthonormalBasis, t_values) -> np.ndarray:
    """Evaluate a raw or orthonormalized basis at ``t_values``; ``(m, L)``."""
    return basis.evaluate(t_values)


@dataclass(frozen=True)
class ProjectedFunction:
    """L2([0,1]) projection of a function onto an orthonormalized basis.

    ``const_coef`` multiplies the constant element, ``tail_coefs`` the
    remaining ``L-1`` elements; ``sup_error`` is the achieved sup-norm error
    on a uniform evaluation grid.
    """

    const_coef: float
    tail_coefs: np.ndarray
    sup_error: float

    @property
    def coefs(self) -> np.ndarray:
        """Full coefficient vector of length ``L``."""
        return np.concatenate([[self.const_coef], self.tail_coefs])


def project_function(
    basis: OrthonormalBasis,
    g: Callable[[np.ndarray], np.ndarray],
    grid_size: int = 1000,
) -> ProjectedFunction:
    """Least-squares projection of ``g`` onto the span of the basis.

    Coefficients are ``L * integral(b_j * g)`` (the basis Gram is ``I / L``),
    computed with the basis quadrature rule; the reported ``sup_error`` is
    ``max |g - projection|`` over a ``grid_size``-point uniform grid.
    """
    x, w = basis.raw.quadrature_rule()
    gx = np.asarray(g(x), dtype=float)
    coefs = basis.L * (basis.evaluate(x).T @ (w * gx))
    grid = np.linspace(0.0, 1.0, grid_size)
    fitted = basis.evaluate(grid) @ coefs
    sup = float(np.abs(np.asarray(g(grid), dtype=float) - fitted).max())
    return ProjectedFunction(
        const_coef=float(coefs[0]), tail_coefs=coefs[1:], sup_error=sup
    )
