"""Structure selection from fitted coefficient blocks.

A fitted block splits into a scalar part (the constant level of the
coefficient function for the time-varying and index families, the linear
trend for the additive family) and a vector part (the remaining
deviation).  Because the basis is orthonormal with every element of
squared L2 norm 1/L, both parts have exact function-space magnitudes
``|scalar| / sqrt(L)`` and ``|vector|_2 / sqrt(L)`` — no quadrature is
involved.  Thresholding those magnitudes yields the selected sets, with a
hierarchy repair for the families where a varying coefficient only makes
sense on top of a present one.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .basis import OrthonormalBasis
from .data import Family, TruthSpec
from .likelihood import GroupCoefficients

__all__ = [
    "SelectError",
    "FunctionEstimates",
    "SelectionResult",
    "CellScores",
    "SelectionScores",
    "extract_estimates",
    "threshold_select",
    "score_selection",
]


class SelectError(ValueError):
    """Raised for invalid selection inputs (bad grouping, mismatched sizes)."""


@dataclasses.dataclass(frozen=True)
class FunctionEstimates:
    """Per-covariate function estimates recovered from one fit.

    ``g_c_hat[j-1]`` is the signed scalar-part magnitude of covariate j
    (the constant level for the time-varying/index families, the linear
    coefficient times the basis scale for the additive family) and
    ``g_n_norms[j-1]`` the exact L2 norm of the vector part.  The
    ``vector_function``/``intercept_function`` accessors rebuild the
    estimated curves from the coefficients.
    """

    family: Family
    basis: OrthonormalBasis
    gamma: GroupCoefficients
    g_c_hat: np.ndarray
    g_n_norms: np.ndarray

    @property
    def p(self) -> int:
        return len(self.g_c_hat)

    def vector_function(self, j: int):
        """Estimated deviation function of covariate j (vanishes when the
        vector part is zero)."""
        coefs = np.asarray(self.gamma.vector_part(f"x{j}"), dtype=float)

        def g_n(t):
            return self.basis.evaluate_tail(np.atleast_1d(np.asarray(t, float))) @ coefs

        return g_n

    def intercept_function(self):
        """Estimated index-family intercept function, or None."""
        if self.family is not Family.INDEX_VC:
            return None
        coefs = np.asarray(self.gamma.block("g0"), dtype=float)

        def g_0(z):
            return self.basis.evaluate_tail(np.atleast_1d(np.asarray(z, float))) @ coefs

        return g_0


@dataclasses.dataclass(frozen=True)
class SelectionResult:
    """Selected structure at one threshold.

    For the time-varying and index families ``s_c_hat``/``s_n_hat`` are
    the covariates with selected constant/varying parts; for the additive
    family they hold the linear/nonlinear parts.  ``hierarchy_repaired``
    lists the covariates whose scalar part was added because the vector
    part was selected on its own.
    """

    family: Family
    s_c_hat: frozenset[int]
    s_n_hat: frozenset[int]
    g_c_hat: np.ndarray
    g_n_norms: np.ndarray
    t_lambda: float
    hierarchy_repaired: tuple[int, ...]


@dataclasses.dataclass(frozen=True)
class CellScores:
    """Scores for one (covariate group, part) table cell.

    ``failure`` is null when the cell has no relevant members and
    ``false`` null when it has no irrelevant members, mirroring the
    impossible table cells.
    """

    failure: float | None
    correct: float
    false: float | None


@dataclasses.dataclass(frozen=True)
class SelectionScores:
    """Failure/Correct/False rates per covariate group and part."""

    family: Family
    groups: tuple[tuple[int, ...], ...]
    cells: dict[tuple[int, str], CellScores]
    replications: int

    PARTS = ("scalar", "vector")

    def part_label(self, part: str) -> str:
        if self.family is Family.ADDITIVE:
            return {"scalar": "linear", "vector": "nonlinear"}[part]
        return {"scalar": "constant", "vector": "varying"}[part]


def extract_estimates(gamma: GroupCoefficients, basis: OrthonormalBasis) -> FunctionEstimates:
    """Recover per-covariate scalar levels and vector-part norms from a fit.

    The scalar estimate of covariate j is its scalar slot divided by
    sqrt(L); the vector-part norm is the Euclidean norm of its vector
    slots divided by sqrt(L).  Both identities are exact under the
    orthonormalized basis.
    """
    layout = gamma.layout
    if basis.L != layout.L:
        raise SelectError(
            f"basis size {basis.L} does not match layout basis size {layout.L}"
        )
    root_l = math.sqrt(layout.L)
    g_c = np.empty(layout.p)
    g_n = np.empty(layout.p)
    for j in range(1, layout.p + 1):
        block = layout.covariate_block(j)
        g_c[j - 1] = float(gamma.flat[block.scalar_slice][0]) / root_l
        g_n[j - 1] = float(np.linalg.norm(gamma.flat[block.vector_slice])) / root_l
    return FunctionEstimates(
        family=layout.family,
        basis=basis,
        gamma=gamma,
        g_c_hat=g_c,
        g_n_norms=g_n,
    )


def threshold_select(estimates: FunctionEstimates, t_lambda: float) -> SelectionResult:
    """Select parts whose magnitude strictly exceeds ``t_lambda``.

    A zero threshold reproduces the raw fitted support (the prox yields
    exact zeros).  For the time-varying and index families a selected
    vector part forces its scalar part into the selection (hierarchy
    repair); the additive family's two parts are free-standing.
    """
    if t_lambda < 0:
        raise SelectError(f"threshold must be nonnegative, got {t_lambda}")
    s_c = {j for j in range(1, estimates.p + 1) if abs(estimates.g_c_hat[j - 1]) > t_lambda}
    s_n = {j for j in range(1, estimates.p + 1) if estimates.g_n_norms[j - 1] > t_lambda}
    repaired: tuple[int, ...] = ()
    if estimates.family in (Family.TIME_VARYING, Family.INDEX_VC):
        repaired = tuple(sorted(s_n - s_c))
        s_c |= s_n
    return SelectionResult(
        family=estimates.family,
        s_c_hat=frozenset(s_c),
        s_n_hat=frozenset(s_n),
        g_c_hat=estimates.g_c_hat.copy(),
        g_n_norms=estimates.g_n_norms.copy(),
        t_lambda=float(t_lambda),
        hierarchy_repaired=repaired,
    )


def _validate_grouping(grouping, p: int) -> tuple[tuple[int, ...], ...]:
    groups = tuple(tuple(int(j) for j in g) for g in grouping)
    seen: list[int] = []
    for g in groups:
        if not g:
            raise SelectError("covariate groups must be nonempty")
        seen.extend(g)
    if sorted(seen) != list(range(1, p + 1)):
        raise SelectError(
            f"covariate groups must partition 1..{p}; got {sorted(seen)}"
        )
    return groups


def score_selection(results, truth: TruthSpec, grouping) -> SelectionScores:
    """Score a batch of selections against the generating truth.

    For every (replication, covariate) pair and each part, the decision is
    a failure when a relevant part was missed and a false selection when
    an irrelevant part was picked.  Cells average over the pairs they
    contain; rates for decision types a cell cannot exhibit are null.
    Correctness is averaged over all pairs, so on pure cells it equals
    one minus the failure (or false) rate.
    """
    results = list(results)
    if not results:
        raise SelectError("need at least one selection result to score")
    p = results[0].g_c_hat.shape[0]
    family = results[0].family
    for r in results:
        if r.family is not family or r.g_c_hat.shape[0] != p:
            raise SelectError("selection results disagree on family or p")
    groups = _validate_grouping(grouping, p)

    relevant = {"scalar": truth.scalar_support, "vector": truth.vector_support}
    selected = {
        "scalar": [r.s_c_hat for r in results],
        "vector": [r.s_n_hat for r in results],
    }

    cells: dict[tuple[int, str], CellScores] = {}
    for gi, group in enumerate(groups):
        for part in SelectionScores.PARTS:
            truth_set = relevant[part]
            n_rel = n_irr = miss = hit_wrong = n_correct = 0
            for sel in selected[part]:
                for j in group:
                    if j in truth_set:
                        n_rel += 1
                        if j not in sel:
                            miss += 1
                        else:
                            n_correct += 1
                    else:
                        n_irr += 1
                        if j in sel:
                            hit_wrong += 1
                        else:
                            n_correct += 1
            total = n_rel + n_irr
            cells[(gi, part)] = CellScores(
                failure=miss / n_rel if n_rel else None,
                correct=n_correct / total,
                false=hit_wrong / n_irr if n_irr else None,
            )
    return SelectionScores(
        family=family,
        groups=groups,
        cells=cells,
        replications=len(results),
    )
