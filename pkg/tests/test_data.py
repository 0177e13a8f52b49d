"""Data layer tests: truth specs, CSV round-trips, covariates, simulation."""

import numpy as np
import pytest
from scipy.special import ndtri
from scipy.stats import kstest

from coxsieve.data import (
    DataFormatError,
    Family,
    GFunction,
    SurvivalDataset,
    TruthSpec,
    censoring_rate,
    gen_copula_covariates,
    inverse_hazard_sample,
    load_csv,
    parse_g_function,
    save_csv,
    simulate,
)

from helpers import unit_quadrature


# ---------------------------------------------------------------------------
# coefficient-function registry
# ---------------------------------------------------------------------------

def test_g_function_registry_values():
    t = np.linspace(0.0, 1.0, 7)
    assert np.allclose(GFunction("const", 1.5)(t), 1.5)
    assert np.allclose(GFunction("lin", 4.0)(t), 4.0 * t)
    assert np.allclose(GFunction("quad", 4.0)(t), 4.0 * t**2)
    assert np.allclose(GFunction("sin1")(t), np.sin(2 * np.pi * t))
    assert np.allclose(
        GFunction("cos1_plus_lin")(t),
        np.cos(2 * np.pi * t) / np.sqrt(2) + (t - 0.5),
    )
    assert np.allclose(
        GFunction("centered_lin")(t), np.sqrt(2) * (t - 0.5)
    )


def test_g_function_parse_roundtrip():
    for text in ("const(1)", "lin(4)", "quad(4.0)", "sin1", "cos1_plus_lin",
                 "centered_lin", "centered_lin(2.5)"):
        g = parse_g_function(text)
        assert parse_g_function(str(g)) == g


def test_g_function_errors():
    with pytest.raises(ValueError, match="unknown coefficient function"):
        parse_g_function("cubic(3)")
    with pytest.raises(ValueError, match="takes no argument"):
        GFunction("sin1", 2.0)
    with pytest.raises(ValueError, match="cannot parse"):
        parse_g_function("lin(4")
    with pytest.raises(ValueError, match="bad argument"):
        parse_g_function("lin(abc)")


def test_zero_detection():
    assert GFunction("const", 0.0).is_zero
    assert not GFunction("const", 1.0).is_zero
    assert not GFunction("sin1").is_zero


# ---------------------------------------------------------------------------
# truth specifications
# ---------------------------------------------------------------------------

def test_truth_spec_supports_index_family():
    truth = TruthSpec(
        Family.INDEX_VC, p=8, q=8, censor_rate=0.85,
        coef_functions={
            1: GFunction("const", 1.0),
            2: GFunction("const", 1.0),
            3: GFunction("lin", 4.0),
            4: GFunction("quad", 4.0),
        },
    )
    assert truth.scalar_support == frozenset({1, 2, 3, 4})
    assert truth.vector_support == frozenset({3, 4})
    assert truth.s0 == 6


def test_truth_spec_supports_additive_family():
    truth = TruthSpec(
        Family.ADDITIVE, p=8, q=8, censor_rate=0.8,
        coef_functions={
            1: GFunction("centered_lin"),
            2: GFunction("centered_lin"),
            3: GFunction("cos1_plus_lin"),
            4: GFunction("sin1"),
        },
    )
    # sin(2*pi*x) has a nonzero linear projection, so covariate 4 carries
    # both a linear and a nonlinear part.
    assert truth.scalar_support == frozenset({1, 2, 3, 4})
    assert truth.vector_support == frozenset({3, 4})
    assert truth.s0 == 6


def test_truth_spec_rejects_uncentered_additive():
    with pytest.raises(ValueError, match="integrate to zero"):
        TruthSpec(Family.ADDITIVE, p=2,
                  coef_functions={1: GFunction("lin", 1.0)})


def test_truth_spec_rejects_mean_zero_varying_coefficient():
    with pytest.raises(ValueError, match="hierarchy"):
        TruthSpec(Family.TIME_VARYING, p=2,
                  coef_functions={1: GFunction("sin1")})


def test_truth_spec_rejects_uncentered_intercept():
    with pytest.raises(ValueError, match="index intercept"):
        TruthSpec(Family.INDEX_VC, p=2, q=2,
                  index_intercept=GFunction("const", 1.0))


def test_truth_spec_parameter_validation():
    with pytest.raises(ValueError, match="q must lie"):
        TruthSpec(Family.TIME_VARYING, p=2, q=3)
    with pytest.raises(ValueError, match="baseline"):
        TruthSpec(Family.TIME_VARYING, p=2, baseline=0.0)
    with pytest.raises(ValueError, match="censoring rate"):
        TruthSpec(Family.TIME_VARYING, p=2, censor_rate=-0.1)
    with pytest.raises(ValueError, match="outside 1..2"):
        TruthSpec(Family.TIME_VARYING, p=2,
                  coef_functions={5: GFunction("const", 1.0)})


# ---------------------------------------------------------------------------
# CSV input/output
# ---------------------------------------------------------------------------

def test_load_csv_three_rows(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text(
        "time,status,x1,x2\n"
        "0.5,1,0.1,0.9\n"
        "0.25,0,0.4,0.2\n"
        "0.75,1,0.8,0.5\n"
    )
    data = load_csv(f, Family.TIME_VARYING)
    assert data.n == 3
    assert data.p == 2
    assert data.n_events == 2
    assert data.times[1] == 0.25


def test_load_csv_status_error_names_row(tmp_path):
    f = tmp_path / "d.csv"
    lines = ["time,status,x1"] + [f"0.{i+1},1,0.5" for i in range(3)]
    lines.append("0.9,2,0.5")  # row 5 of the file
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="row 5: status must be 0 or 1"):
        load_csv(f, Family.TIME_VARYING)


def test_load_csv_index_column(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("time,status,x1,z\n0.5,1,0.3,0.7\n0.6,1,0.2,0.4\n")
    data = load_csv(f, Family.INDEX_VC)
    assert data.index is not None
    assert data.index[0] == 0.7
    g = tmp_path / "noz.csv"
    g.write_text("time,status,x1\n0.5,1,0.3\n")
    with pytest.raises(DataFormatError, match="requires a trailing 'z' column"):
        load_csv(g, Family.INDEX_VC)


def test_load_csv_malformed_inputs(tmp_path):
    cases = [
        ("empty.csv", "", "file is empty"),
        ("header.csv", "t,status,x1\n0.5,1,0.2\n", "header must start"),
        ("cols.csv", "time,status,x2\n0.5,1,0.2\n", "covariate columns"),
        ("nodata.csv", "time,status,x1\n", "no data rows"),
        ("ragged.csv", "time,status,x1\n0.5,1\n", "row 2: expected 3 fields"),
        ("value.csv", "time,status,x1\n0.5,1,oops\n", "row 2: non-numeric value 'oops'"),
    ]
    for name, text, message in cases:
        f = tmp_path / name
        f.write_text(text)
        with pytest.raises(DataFormatError, match=message):
            load_csv(f, Family.TIME_VARYING)


def test_save_load_roundtrip(tmp_path):
    truth = TruthSpec(Family.INDEX_VC, p=3, q=2, censor_rate=0.5,
                      coef_functions={1: GFunction("const", 1.0)})
    data = simulate(truth, 40, seed=5)
    f = tmp_path / "round.csv"
    save_csv(data, f)
    back = load_csv(f, Family.INDEX_VC)
    np.testing.assert_array_equal(back.times, data.times)
    np.testing.assert_array_equal(back.status, data.status)
    np.testing.assert_array_equal(back.covariates, data.covariates)
    np.testing.assert_array_equal(back.index, data.index)


def test_dataset_validation():
    with pytest.raises(DataFormatError, match="exceeds 1"):
        SurvivalDataset(Family.TIME_VARYING, np.array([0.5, 1.2]),
                        np.array([1, 1]), np.zeros((2, 1)))
    with pytest.raises(DataFormatError, match="must lie in \\[0, 1\\]"):
        SurvivalDataset(Family.ADDITIVE, np.array([0.5]), np.array([1]),
                        np.array([[1.7]]))
    with pytest.raises(DataFormatError, match="requires an index column"):
        SurvivalDataset(Family.INDEX_VC, np.array([0.5]), np.array([1]),
                        np.array([[0.7]]))


# ---------------------------------------------------------------------------
# covariate generation
# ---------------------------------------------------------------------------

def test_copula_independent_when_rho_zero():
    rng = np.random.default_rng(11)
    n = 20000
    X = gen_copula_covariates(rng, n, 4, 4, 0.0)
    corr = np.corrcoef(X.T)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.abs(off).max() < 3.0 / np.sqrt(n)


def test_copula_ar1_correlation_on_normal_scale():
    rng = np.random.default_rng(12)
    n = 100000
    X = gen_copula_covariates(rng, n, 3, 3, 0.3)
    y = ndtri(X)  # back to the underlying Gaussian scale
    r01 = np.corrcoef(y[:, 0], y[:, 1])[0, 1]
    r12 = np.corrcoef(y[:, 1], y[:, 2])[0, 1]
    r02 = np.corrcoef(y[:, 0], y[:, 2])[0, 1]
    assert r01 == pytest.approx(0.3, abs=0.01)
    assert r12 == pytest.approx(0.3, abs=0.01)
    assert r02 == pytest.approx(0.09, abs=0.01)


def test_copula_marginals_uniform():
    rng = np.random.default_rng(13)
    X = gen_copula_covariates(rng, 10000, 5, 3, 0.3)
    for j in (0, 2, 4):  # inside and outside the correlated block
        assert kstest(X[:, j], "uniform").pvalue > 0.01


# ---------------------------------------------------------------------------
# hazard inversion
# ---------------------------------------------------------------------------

def test_inverse_hazard_closed_forms():
    assert inverse_hazard_sample(lambda t: t, 0.7) == pytest.approx(0.7, abs=1e-9)
    assert inverse_hazard_sample(lambda t: 2.0 * t, 0.8) == pytest.approx(0.4, abs=1e-9)
    got = inverse_hazard_sample(lambda t: np.expm1(t), 0.6, t_max=2.0)
    assert got == pytest.approx(np.log(1.6), abs=1e-9)


def test_inverse_hazard_sentinels():
    assert inverse_hazard_sample(lambda t: t, 2.0) == np.inf
    assert inverse_hazard_sample(lambda t: t, 0.0) == 0.0
    assert inverse_hazard_sample(lambda t: t, -1.0) == 0.0


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def test_simulate_deterministic_and_replication_streams():
    truth = TruthSpec(Family.TIME_VARYING, p=2, censor_rate=0.5,
                      coef_functions={1: GFunction("const", 0.5)})
    a = simulate(truth, 50, seed=42, replication=3)
    b = simulate(truth, 50, seed=42, replication=3)
    c = simulate(truth, 50, seed=42, replication=4)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.covariates, b.covariates)
    assert not np.array_equal(a.times, c.times)


def test_simulate_null_model_is_unit_scaled_exponential():
    # All coefficient functions zero and baseline 0.5: observed times are
    # Exp(0.5), so the mean is 2 and the cumulative hazard at 1 is 0.5.
    truth = TruthSpec(Family.ADDITIVE, p=2)
    data = simulate(truth, 100000, seed=21)
    assert data.status.min() == 1  # no censoring mechanism
    assert data.times.mean() == pytest.approx(2.0, abs=0.05)
    surv_at_1 = float((data.times > 1.0).mean())
    assert -np.log(surv_at_1) == pytest.approx(0.5, rel=0.05)


def test_simulate_documented_draw_order_and_independent_censoring():
    # Reconstruct the exact draw stream for the additive null model and
    # verify observed times decompose into independent event/censoring parts.
    truth = TruthSpec(Family.ADDITIVE, p=3, q=2, censor_rate=0.8)
    n, seed, rep = 4000, 99, 2
    data = simulate(truth, n, seed=seed, replication=rep)
    rng = np.random.default_rng(np.random.SeedSequence((seed, rep)))
    X = gen_copula_covariates(rng, n, 3, 2, 0.3)
    t0 = rng.exponential(1.0, n) / 0.5
    cens = rng.exponential(1.0 / 0.8, n)
    np.testing.assert_array_equal(data.covariates, X)
    np.testing.assert_allclose(data.times, np.maximum(np.minimum(t0, cens), 1e-12))
    np.testing.assert_array_equal(data.status, (t0 <= cens).astype(int))
    r = np.corrcoef(t0, cens)[0, 1]
    assert abs(r) < 3.0 / np.sqrt(n)


def test_simulate_time_varying_matches_analytic_inversion():
    # For g_1 = lin(a) the cumulative hazard solves in closed form:
    # t = log1p(2 a X E) / (a X).  The quadrature/bisection path must agree.
    a_coef = 1.5
    truth = TruthSpec(Family.TIME_VARYING, p=1,
                      coef_functions={1: GFunction("lin", a_coef)})
    n, seed = 200, 31
    data = simulate(truth, n, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    X = gen_copula_covariates(rng, n, 1, 0, 0.3)[:, 0]
    targets = rng.exponential(1.0, n)
    ax = a_coef * X
    t_exact = np.log1p(2.0 * targets * ax) / ax
    events = data.status == 1
    assert events.sum() > 50
    np.testing.assert_allclose(data.times[events], t_exact[events], atol=1e-9)
    # subjects whose hazard never reaches the target are censored at 1
    assert np.all(data.times[~events] == 1.0)
    assert np.all(t_exact[~events] > 1.0)


def test_simulate_time_varying_truncates_at_one():
    truth = TruthSpec(Family.TIME_VARYING, p=1, censor_rate=0.3,
                      coef_functions={1: GFunction("const", 0.2)})
    data = simulate(truth, 500, seed=8)
    assert data.times.max() <= 1.0
    assert (data.status == 0).any()


def test_simulate_overflow_guard_names_largest_term():
    cases = [
        TruthSpec(Family.TIME_VARYING, p=2,
                  coef_functions={1: GFunction("const", 800.0)}),
        TruthSpec(Family.ADDITIVE, p=2,
                  coef_functions={1: GFunction("centered_lin", 3000.0)}),
        TruthSpec(Family.INDEX_VC, p=2, q=2,
                  coef_functions={1: GFunction("const", 900.0)}),
    ]
    for truth in cases:
        with pytest.raises(ValueError, match="overflow.*g_1") as err:
            simulate(truth, 100, seed=1)
        assert "rescale" in str(err.value)


def test_censoring_rate_helper():
    truth = TruthSpec(Family.ADDITIVE, p=1, censor_rate=0.8)
    data = simulate(truth, 2000, seed=55)
    assert censoring_rate(data) == pytest.approx(
        1.0 - data.status.mean(), abs=1e-12
    )
    assert 0.0 < censoring_rate(data) < 1.0


def test_relevance_quadrature_matches_independent_rule():
    # The derived scalar part of an additive sin component is its linear
    # projection slope 12 * integral(g(x) (x - 1/2)).
    x, w = unit_quadrature()
    slope = 12.0 * float(w @ (np.sin(2 * np.pi * x) * (x - 0.5)))
    assert slope == pytest.approx(-6.0 / np.pi, abs=1e-10)
    truth = TruthSpec(Family.ADDITIVE, p=1, coef_functions={1: GFunction("sin1")})
    assert truth.scalar_support == frozenset({1})
    assert truth.vector_support == frozenset({1})
