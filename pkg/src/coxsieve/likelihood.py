"""Expanded designs and the negative log partial likelihood.

All three model families share one evaluation core.  Subjects are sorted
once by observed time (descending, stable), so every risk set is a prefix
of the sorted arrays and all reductions run in a fixed, deterministic
order.  Families whose expanded rows do not depend on the event time
(index-varying coefficients, additive) materialize the full design matrix
once; the time-varying family keeps the factorized form
``row_i(t) = X_i (x) basis(t)`` and never builds Kronecker rows.

Ties are handled with the Breslow convention: tied events share one risk
set, whose log-denominator enters the objective once per tied event.  The
objective is

    value(c) = -(1/n) sum_i status_i * <c, row_i(T_i)>
               + (1/n) sum_{event times} (ties) * log sum_{k at risk} exp<c, row_k(t)>

with the inner denominator an unnormalized sum, so the gradient and all
curvature quantities carry the single 1/n factor.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import riskset
from .basis import OrthonormalBasis
from .data import Family, SurvivalDataset

__all__ = [
    "LikelihoodError",
    "Block",
    "BlockLayout",
    "GroupCoefficients",
    "DesignExpansion",
    "expand_design",
    "neg_log_pl",
    "gradient",
    "value_and_gradient",
    "hessian_quadratic",
    "full_hessian",
]

FULL_HESSIAN_DIM_LIMIT = 2000


class LikelihoodError(ValueError):
    """Raised when a partial-likelihood quantity is requested on unusable inputs."""


@dataclasses.dataclass(frozen=True)
class Block:
    """One penalty block of the flat coefficient vector.

    The block owns the half-open slot range ``[start, stop)``.  Its first
    ``scalar_len`` slots (0 or 1) are the scalar part — the constant level
    of the coefficient function for the time-varying and index families,
    the linear trend for the additive family — and the remaining slots the
    vector (deviation) part.  ``covariate`` is the 1-based covariate index,
    or ``None`` for the index family's intercept-function block.
    """

    label: str
    start: int
    stop: int
    scalar_len: int
    penalized: bool
    covariate: int | None

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def scalar_slice(self) -> slice:
        return slice(self.start, self.start + self.scalar_len)

    @property
    def vector_slice(self) -> slice:
        return slice(self.start + self.scalar_len, self.stop)


@dataclasses.dataclass(frozen=True)
class BlockLayout:
    """Partition of the flat coefficient vector into penalty blocks.

    Slot layout by family (basis size L, p covariates):

    * time-varying — block j spans ``[(j-1)L, jL)``: one constant-level
      slot then L-1 deviation slots;
    * index-varying — a leading intercept-function block of L-1 slots
      (the constant is not identifiable and is dropped), then per-covariate
      blocks of L slots as above;
    * additive — block j spans L-1 slots: the linear-trend slot then L-2
      curvature slots (each component function has mean zero, so the
      constant basis element is dropped).
    """

    family: Family
    p: int
    L: int
    blocks: tuple[Block, ...]

    @classmethod
    def for_family(
        cls,
        family: Family | str,
        p: int,
        L: int,
        *,
        penalize_index_intercept: bool = False,
    ) -> "BlockLayout":
        family = Family(family)
        if p < 1:
            raise LikelihoodError(f"need at least one covariate, got p={p}")
        if L < 2:
            raise LikelihoodError(f"need a basis of size at least 2, got L={L}")
        blocks: list[Block] = []
        offset = 0
        if family is Family.INDEX_VC:
            blocks.append(Block("g0", 0, L - 1, 0, penalize_index_intercept, None))
            offset = L - 1
        width = L - 1 if family is Family.ADDITIVE else L
        for j in range(1, p + 1):
            start = offset + (j - 1) * width
            blocks.append(Block(f"x{j}", start, start + width, 1, True, j))
        return cls(family, p, L, tuple(blocks))

    @property
    def dim(self) -> int:
        return self.blocks[-1].stop

    @property
    def penalized_blocks(self) -> tuple[Block, ...]:
        return tuple(b for b in self.blocks if b.penalized)

    def covariate_block(self, j: int) -> Block:
        """Return the block for 1-based covariate index ``j``."""
        for block in self.blocks:
            if block.covariate == j:
                return block
        raise KeyError(f"no block for covariate index {j}")

    def block(self, label: str) -> Block:
        """Return the block with the given label (``g0``, ``x1``, ...)."""
        for block in self.blocks:
            if block.label == label:
                return block
        raise KeyError(f"no block labelled {label!r}")


@dataclasses.dataclass(frozen=True)
class GroupCoefficients:
    """A flat coefficient vector together with its block layout."""

    flat: np.ndarray
    layout: BlockLayout

    def __post_init__(self):
        flat = np.asarray(self.flat, dtype=float)
        if flat.shape != (self.layout.dim,):
            raise LikelihoodError(
                f"coefficient vector has length {flat.shape}, "
                f"layout expects ({self.layout.dim},)"
            )
        object.__setattr__(self, "flat", flat)

    def block(self, label: str) -> np.ndarray:
        b = self.layout.block(label)
        return self.flat[b.start : b.stop]

    def scalar_part(self, label: str) -> np.ndarray:
        b = self.layout.block(label)
        return self.flat[b.scalar_slice]

    def vector_part(self, label: str) -> np.ndarray:
        b = self.layout.block(label)
        return self.flat[b.vector_slice]


def _flat(gamma, dim: int) -> np.ndarray:
    if isinstance(gamma, GroupCoefficients):
        gamma = gamma.flat
    g = np.ascontiguousarray(gamma, dtype=float)
    if g.shape != (dim,):
        raise LikelihoodError(
            f"coefficient vector has shape {g.shape}, design expects ({dim},)"
        )
    return g


class DesignExpansion:
    """Immutable expanded design for one dataset/basis pair.

    Subject-indexed attributes (``times``, ``status``, ``covariates``,
    ``index``, ``rows``) are sorted by observed time, descending, so the
    risk set of the e-th distinct event time (also stored descending) is
    the prefix of length ``risk_sizes[e]``.  Evaluation methods are pure
    and safe to call concurrently.

    Attributes
    ----------
    family, basis, layout : model family, orthonormal basis, block layout.
    n, p, L, dim : sample size, covariate count, basis size, parameter count.
    times, status, covariates, index : sorted subject arrays.
    rows : (n, dim) expanded design, or None for the time-varying family.
    basis_at_events : (E, L) basis values at distinct event times
        (descending), or None for time-constant designs.
    event_design_sum : sum of expanded rows over events — a (dim,) vector
        for time-constant designs, a (p, L) matrix for time-varying.
    """

    def __init__(self, *, family, basis, layout, times, status, covariates,
                 index, rows, basis_at_events, event_design_sum,
                 event_times_desc, event_counts, risk_sizes):
        self.family = family
        self.basis = basis
        self.layout = layout
        self.times = times
        self.status = status
        self.covariates = covariates
        self.index = index
        self.rows = rows
        self.basis_at_events = basis_at_events
        self.event_design_sum = event_design_sum
        self._event_times_desc = event_times_desc
        self._event_counts = event_counts
        self._risk_sizes = risk_sizes

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def L(self) -> int:
        return self.basis.L

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def event_times(self) -> np.ndarray:
        """Distinct event times, ascending."""
        return self._event_times_desc[::-1]

    def risk_set_table(self) -> list[tuple[float, int, int]]:
        """Per-event-time ``(time, tied events, risk-set size)``, ascending in time."""
        return [
            (float(t), int(c), int(r))
            for t, c, r in zip(
                self._event_times_desc[::-1],
                self._event_counts[::-1],
                self._risk_sizes[::-1],
            )
        ]

    # -- evaluation core ---------------------------------------------------

    def _value_grad(self, gamma: np.ndarray, want_grad: bool):
        n = self.n
        if self.family is Family.TIME_VARYING:
            coef = gamma.reshape(self.p, self.L)
            m = np.ascontiguousarray(self.covariates @ coef)
            logterm, gacc = riskset.tv_value_grad(
                m, self.covariates, self.basis_at_events,
                self._risk_sizes, self._event_counts, want_grad,
            )
            value = (logterm - float((coef * self.event_design_sum).sum())) / n
            if not want_grad:
                return value, None
            return value, ((gacc - self.event_design_sum) / n).reshape(-1)
        eta = np.ascontiguousarray(self.rows @ gamma)
        logterm, s1 = riskset.const_value_grad(
            self.rows, eta, self._risk_sizes, self._event_counts, want_grad,
        )
        value = (logterm - float(gamma @ self.event_design_sum)) / n
        if not want_grad:
            return value, None
        return value, (s1 - self.event_design_sum) / n

    def value(self, gamma) -> float:
        return self._value_grad(_flat(gamma, self.dim), False)[0]

    def value_and_grad(self, gamma) -> tuple[float, np.ndarray]:
        return self._value_grad(_flat(gamma, self.dim), True)

    def grad(self, gamma) -> np.ndarray:
        return self._value_grad(_flat(gamma, self.dim), True)[1]

    def quad_form(self, gamma, theta) -> float:
        """Directional curvature ``theta' H(gamma) theta`` (always >= 0)."""
        gamma = _flat(gamma, self.dim)
        theta = _flat(theta, self.dim)
        if self.family is Family.TIME_VARYING:
            m = np.ascontiguousarray(self.covariates @ gamma.reshape(self.p, self.L))
            d = np.ascontiguousarray(self.covariates @ theta.reshape(self.p, self.L))
            acc = riskset.tv_quad(
                m, d, self.basis_at_events, self._risk_sizes, self._event_counts,
            )
        else:
            eta = np.ascontiguousarray(self.rows @ gamma)
            a = np.ascontiguousarray(self.rows @ theta)
            acc = riskset.const_quad(eta, a, self._risk_sizes, self._event_counts)
        return acc / self.n

    def dense_hessian(self, gamma) -> np.ndarray:
        """Full curvature matrix; refuses dimensions above the guard."""
        if self.dim > FULL_HESSIAN_DIM_LIMIT:
            raise LikelihoodError(
                f"full Hessian refused: dimension {self.dim} exceeds the "
                f"{FULL_HESSIAN_DIM_LIMIT}-parameter guard; "
                "use hessian_quadratic for directional curvature"
            )
        gamma = _flat(gamma, self.dim)
        counts = self._event_counts
        sizes = self._risk_sizes
        if self.family is Family.TIME_VARYING:
            coef = gamma.reshape(self.p, self.L)
            m = self.covariates @ coef
            h = np.zeros((self.dim, self.dim))
            for e in range(len(sizes)):
                k = sizes[e]
                b = self.basis_at_events[e]
                eta = m[:k] @ b
                z = np.exp(eta - eta.max())
                s0 = z.sum()
                xk = self.covariates[:k]
                mean_x = (z @ xk) / s0
                cov_x = (xk.T * z) @ xk / s0 - np.outer(mean_x, mean_x)
                h += counts[e] * np.kron(cov_x, np.outer(b, b))
            return h / self.n
        eta = self.rows @ gamma
        z = np.exp(eta - eta.max())
        h = np.zeros((self.dim, self.dim))
        s0 = 0.0
        s1 = np.zeros(self.dim)
        s2 = np.zeros((self.dim, self.dim))
        prev = 0
        for e in range(len(sizes)):
            k = sizes[e]
            chunk = self.rows[prev:k]
            zz = z[prev:k]
            s0 += zz.sum()
            s1 += zz @ chunk
            s2 += (chunk.T * zz) @ chunk
            prev = k
            mean = s1 / s0
            h += counts[e] * (s2 / s0 - np.outer(mean, mean))
        return h / self.n


def expand_design(
    data: SurvivalDataset,
    basis: OrthonormalBasis,
    *,
    penalize_index_intercept: bool = False,
) -> DesignExpansion:
    """Build the expanded design for one dataset under one basis.

    Parameters
    ----------
    data : SurvivalDataset
        The sample; its family decides the expansion.
    basis : OrthonormalBasis
        Orthonormalized spline system of size L.
    penalize_index_intercept : bool
        Index family only: include the intercept-function block in the
        convex penalty (it is left unpenalized by default).

    Raises
    ------
    LikelihoodError
        If the sample contains no events (the partial likelihood is
        undefined) or the family/basis combination is inconsistent.
    """
    if data.n_events == 0:
        raise LikelihoodError(
            "partial likelihood undefined: the dataset contains no events"
        )
    family = data.family
    L = basis.L
    layout = BlockLayout.for_family(
        family, data.p, L, penalize_index_intercept=penalize_index_intercept
    )

    order = np.argsort(-data.times, kind="stable")
    times = np.ascontiguousarray(data.times[order])
    status = np.ascontiguousarray(data.status[order])
    covariates = np.ascontiguousarray(data.covariates[order], dtype=float)
    index = None if data.index is None else np.ascontiguousarray(data.index[order])

    event_rows = np.nonzero(status == 1)[0]
    event_times_desc = np.unique(times[event_rows])[::-1]
    # prefix length of the risk set {k : time_k >= t} in the descending sort
    risk_sizes = np.ascontiguousarray(
        np.searchsorted(-times, -event_times_desc, side="right"), dtype=np.int64
    )
    # segment boundaries of tied events inside the (descending) event rows
    bounds = np.searchsorted(-times[event_rows], -event_times_desc, side="left")
    bounds = np.append(bounds, len(event_rows))
    event_counts = np.ascontiguousarray(np.diff(bounds), dtype=float)

    rows = None
    basis_at_events = None
    if family is Family.TIME_VARYING:
        basis_at_events = np.ascontiguousarray(basis.evaluate(event_times_desc))
        tie_x_sum = np.add.reduceat(covariates[event_rows], bounds[:-1], axis=0)
        event_design_sum = tie_x_sum.T @ basis_at_events
    elif family is Family.INDEX_VC:
        bz = basis.evaluate(index)
        n, p = covariates.shape
        rows = np.empty((n, layout.dim))
        rows[:, : L - 1] = bz[:, 1:]
        rows[:, L - 1 :] = (covariates[:, :, None] * bz[:, None, :]).reshape(n, p * L)
        rows = np.ascontiguousarray(rows)
        event_design_sum = rows[event_rows].sum(axis=0)
    else:
        n, p = covariates.shape
        tails = basis.evaluate(covariates.T.reshape(-1))[:, 1:]
        rows = np.ascontiguousarray(
            tails.reshape(p, n, L - 1).transpose(1, 0, 2).reshape(n, p * (L - 1))
        )
        event_design_sum = rows[event_rows].sum(axis=0)

    return DesignExpansion(
        family=family,
        basis=basis,
        layout=layout,
        times=times,
        status=status,
        covariates=covariates,
        index=index,
        rows=rows,
        basis_at_events=basis_at_events,
        event_design_sum=event_design_sum,
        event_times_desc=event_times_desc,
        event_counts=event_counts,
        risk_sizes=risk_sizes,
    )


def neg_log_pl(gamma, design: DesignExpansion) -> float:
    """Negative log partial likelihood at ``gamma`` (Breslow ties)."""
    return design.value(gamma)


def gradient(gamma, design: DesignExpansion) -> np.ndarray:
    """Gradient of :func:`neg_log_pl` at ``gamma``."""
    return design.grad(gamma)


def value_and_gradient(gamma, design: DesignExpansion) -> tuple[float, np.ndarray]:
    """Objective and gradient in one risk-set pass."""
    return design.value_and_grad(gamma)


def hessian_quadratic(gamma, design: DesignExpansion, theta) -> float:
    """Quadratic form of the curvature at ``gamma`` in direction ``theta``.

    Computed as an exponent-weighted variance of the projected design over
    each risk set, so the result is nonnegative and no matrix of size
    ``dim x dim`` is ever materialized.
    """
    return design.quad_form(gamma, theta)


def full_hessian(gamma, design: DesignExpansion) -> np.ndarray:
    """Dense curvature matrix at ``gamma`` (small instances only)."""
    return design.dense_hessian(gamma)
