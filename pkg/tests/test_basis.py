"""Spline system tests: raw basis facts, orthonormalization, projection."""

import numpy as np
import pytest

from coxsieve.basis import (
    build_raw_basis,
    eval_basis,
    orthonormalize,
    project_function,
)

from helpers import aligned_quadrature, loglog_slope, make_basis, unit_quadrature


def test_raw_partition_of_unity():
    raw = build_raw_basis(6, 3)
    grid = np.concatenate([[0.37], np.linspace(0.0, 1.0, 101)])
    sums = raw.evaluate(grid).sum(axis=1)
    assert np.abs(sums - 1.0).max() < 1e-12


def test_raw_boundary_values():
    raw = build_raw_basis(6, 3)
    at0 = raw.evaluate(np.array([0.0]))[0]
    at1 = raw.evaluate(np.array([1.0]))[0]
    assert at0[0] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(at0[1:]).max() < 1e-14
    assert at1[-1] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(at1[:-1]).max() < 1e-14


def test_raw_gram_matches_independent_quadrature():
    raw = build_raw_basis(7, 3)
    x, w = aligned_quadrature(raw)
    bx = raw.evaluate(x)
    ref = (bx * w[:, None]).T @ bx
    assert np.abs(raw.gram() - ref).max() < 1e-13


def test_raw_gram_eigenvalue_bracket():
    # Scaled eigenvalues L*eig stay inside a fixed bracket as L grows.
    for L in (4, 6, 10, 20):
        for order in (2, 3, 4):
            eigs = np.linalg.eigvalsh(build_raw_basis(L, order).gram())
            assert eigs.min() > 0.02 / L, (L, order, eigs.min())
            assert eigs.max() < 1.5 / L, (L, order, eigs.max())


def test_raw_build_errors():
    with pytest.raises(ValueError, match="order must be >= 1"):
        build_raw_basis(5, 0)
    with pytest.raises(ValueError, match="smaller than the spline order"):
        build_raw_basis(3, 4)


def test_orthonormalize_requires_linear_element():
    with pytest.raises(ValueError, match="order >= 2"):
        orthonormalize(build_raw_basis(4, 1))


def test_first_two_elements_closed_form():
    L = 6
    basis = make_basis(L)
    grid = np.linspace(0.0, 1.0, 301)
    vals = basis.evaluate(grid)
    assert np.abs(vals[:, 0] - 1.0 / np.sqrt(L)).max() < 1e-12
    assert np.abs(vals[:, 1] - np.sqrt(12.0 / L) * (grid - 0.5)).max() < 1e-10
    mid = basis.evaluate(np.array([0.5]))[0]
    assert mid[0] == pytest.approx(1.0 / np.sqrt(6), abs=1e-12)
    assert mid[1] == pytest.approx(0.0, abs=1e-12)


def test_orthonormality_identity_independent_quadrature():
    basis = make_basis(6)
    x, w = aligned_quadrature(basis)
    bx = basis.evaluate(x)
    gram = (bx * w[:, None]).T @ bx
    assert np.abs(basis.L * gram - np.eye(basis.L)).max() < 1e-10
    assert basis.gram_error() < 1e-10


def test_tail_elements_have_zero_mean():
    basis = make_basis(8)
    x, w = aligned_quadrature(basis)
    means = w @ basis.evaluate(x)
    assert np.abs(means[1:]).max() < 1e-10


def test_eval_norm_bound():
    basis = make_basis(9)
    grid = np.linspace(0.0, 1.0, 501)
    vals = basis.evaluate(grid)
    raw_vals = basis.raw.evaluate(grid)
    raw_norms = np.linalg.norm(raw_vals, axis=1)
    norms = np.linalg.norm(vals, axis=1)
    assert raw_norms.max() <= 1.0 + 1e-12  # nonnegative partition of unity
    assert np.all(norms <= np.sqrt(basis.eig_max) * raw_norms + 1e-12)
    assert norms.max() <= np.sqrt(basis.eig_max) + 1e-12


def test_eval_domain_errors():
    basis = make_basis(5)
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        basis.evaluate(np.array([1.0001]))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        eval_basis(basis.raw, np.array([-0.001]))


def test_eval_continuous_at_right_endpoint():
    basis = make_basis(7)
    lim = basis.evaluate(np.array([1.0 - 1e-9]))[0]
    at1 = basis.evaluate(np.array([1.0]))[0]
    assert np.abs(at1 - lim).max() < 1e-5


def test_project_constant_function():
    basis = make_basis(6)
    proj = project_function(basis, lambda t: np.full_like(t, 2.0))
    assert proj.const_coef == pytest.approx(2.0 * np.sqrt(6), abs=1e-10)
    assert np.abs(proj.tail_coefs).max() < 1e-10
    assert proj.sup_error < 1e-10


def test_project_centered_linear_function():
    L = 6
    basis = make_basis(L)
    proj = project_function(basis, lambda t: t - 0.5)
    assert proj.const_coef == pytest.approx(0.0, abs=1e-10)
    assert proj.tail_coefs[0] == pytest.approx(np.sqrt(L / 12.0), abs=1e-10)
    assert np.abs(proj.tail_coefs[1:]).max() < 1e-10
    assert proj.sup_error < 1e-10


def test_project_recovers_representable_function():
    basis = make_basis(7)
    rng = np.random.default_rng(3)
    coefs = rng.normal(0.0, 1.0, basis.L)
    proj = project_function(basis, lambda t: basis.evaluate(t) @ coefs)
    assert np.abs(proj.coefs - coefs).max() < 1e-8
    assert proj.sup_error < 1e-8


def test_projection_error_halves_squared_when_size_doubles():
    g = lambda t: np.sin(2 * np.pi * t)
    e6 = project_function(make_basis(6, order=2), g).sup_error
    e12 = project_function(make_basis(12, order=2), g).sup_error
    ratio = e12 / e6
    assert 0.125 < ratio < 0.5  # ~ (1/2)^2 for first-degree elements


def test_projection_norm_identities():
    # The coefficient norms are exactly the component L2 norms: the scalar
    # coefficient squared over L is the squared mean, the tail coefficient
    # norm squared over L the squared centered norm.
    g = lambda t: np.sin(2 * np.pi * t) + 0.7
    x, w = unit_quadrature()
    for L in (6, 12):
        basis = make_basis(L)
        proj = project_function(basis, g)
        fitted = basis.evaluate(x) @ proj.coefs
        total = float(w @ fitted**2)
        assert np.linalg.norm(proj.coefs) ** 2 / L == pytest.approx(
            total, abs=1e-10
        )
        assert proj.const_coef**2 / L == pytest.approx(0.7**2, abs=1e-6)
        # centered-part norm approaches the true value 1/2 from below
        tail_sq = np.linalg.norm(proj.tail_coefs) ** 2 / L
        assert tail_sq <= 0.5 + 1e-12
        assert abs(tail_sq - 0.5) < 1e-6 + 50.0 * L**-4.0


def test_projection_rate_second_order_elements():
    for g in (lambda t: np.sin(2 * np.pi * t), np.square, np.exp):
        errs = [
            project_function(make_basis(L, order=2), g).sup_error
            for L in (5, 10, 20, 40)
        ]
        slope = loglog_slope((5, 10, 20, 40), errs)
        assert -2.6 < slope < -1.6, (g, slope)
