import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seedbank.distributions import (
    from_dict,
    make_dirac,
    make_explicit,
    make_power_law,
    mean,
    sample_age,
    sample_ages,
    to_dict,
    truncate,
    zeta,
)
from seedbank.errors import InvalidParameterError

# mpmath, 30 digits
ZETA_1_5 = 2.6123753486854883
ZETA_2 = 1.6449340668482264
ZETA_3 = 1.2020569031595943


def test_power_law_pmf_and_tail():
    d = make_power_law(1.5)
    assert d.pmf(1) == pytest.approx(0.6464466094067263, abs=1e-15)
    assert d.tail(1) == 1.0
    assert make_power_law(0.3).tail(4) == pytest.approx(0.6597539553864471, rel=1e-14)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_power_law_rejects_bad_alpha(bad):
    with pytest.raises(InvalidParameterError):
        make_power_law(bad)


def test_dirac():
    d = make_dirac(3)
    assert d.tail(2) == 1 and d.tail(4) == 0
    assert mean(make_dirac(1)) == 1
    rng = np.random.default_rng(0)
    assert all(sample_age(make_dirac(1), rng) == 1 for _ in range(50))
    assert not d.satisfies_assumption
    with pytest.raises(InvalidParameterError):
        make_dirac(0)


def test_explicit_validation():
    with pytest.raises(InvalidParameterError):
        make_explicit([0.5, 0.6])
    with pytest.raises(InvalidParameterError):
        make_explicit([-0.1, 1.1])
    d = make_explicit([0.5, 0.5, 0.0, 0.0])
    assert d.support_max == 2


@pytest.mark.parametrize(
    "alpha, expected", [(1.5, ZETA_1_5), (2.0, ZETA_2), (3.0, ZETA_3)]
)
def test_zeta_against_mpmath(alpha, expected):
    assert zeta(alpha) == pytest.approx(expected, rel=1e-12)
    assert mean(make_power_law(alpha)) == pytest.approx(expected, rel=1e-12)


def test_means():
    assert mean(make_explicit([0.5, 0.5])) == 1.5
    assert math.isinf(mean(make_power_law(0.3)))
    assert math.isinf(mean(make_power_law(1.0)))


def test_truncate():
    d = truncate(make_explicit([0.5, 0.5]), 1)
    assert d.table == (1.0,)
    t = truncate(make_power_law(0.5), 2)
    # (1 - 2**-0.5) / (1 - 3**-0.5)
    assert t.pmf(1) == pytest.approx(0.6929927963088227, rel=1e-13)
    assert t.pmf(1) + t.pmf(2) == pytest.approx(1.0, abs=1e-15)
    e = make_explicit([0.2, 0.3, 0.5])
    assert truncate(e, 5).table == e.table
    with pytest.raises(InvalidParameterError):
        truncate(make_explicit([0.0, 1.0]), 1)


def test_sample_means():
    rng = np.random.default_rng(12)
    x = sample_ages(make_explicit([0.5, 0.5]), rng, size=10**6)
    se = x.std() / 1e3
    assert abs(x.mean() - 1.5) < 3 * se
    y = sample_ages(make_power_law(1.5), rng, size=10**6).astype(float)
    # the variance is infinite, so also compare a trimmed mean against its exact value
    assert abs(y.mean() - ZETA_1_5) < 3 * y.std() / 1e3
    trimmed = np.minimum(y, 1e4)
    # E[min(X, c)] = sum_{n<=c} P(X >= n)
    exact = float(np.sum(np.arange(1, 10**4 + 1, dtype=float) ** -1.5))
    assert abs(trimmed.mean() - exact) < 3 * trimmed.std() / 1e3


def test_power_law_sampling_chi_square():
    from seedbank.stats import chi_square_gof

    d = make_power_law(0.3)
    rng = np.random.default_rng(3)
    x = sample_ages(d, rng, size=10**5, cap=10**9)
    obs = np.bincount(np.minimum(x, 51), minlength=52)[1:]
    probs = np.append(d.pmf(np.arange(1, 51)), d.tail(51))
    _, _, p = chi_square_gof(obs, probs)
    assert p > 1e-3


def test_sampling_cap():
    rng = np.random.default_rng(1)
    x = sample_ages(make_power_law(0.05), rng, size=1000, cap=100)
    assert x.max() <= 100 and x.min() >= 1


def test_dict_round_trip_and_rejection():
    for d in (make_power_law(0.7), make_dirac(2), make_explicit([0.25, 0.75])):
        assert from_dict(to_dict(d)) == d
    with pytest.raises(InvalidParameterError):
        from_dict({"kind": "power_law", "alpha": 0.3, "beta": 1})
    with pytest.raises(InvalidParameterError):
        from_dict({"kind": "dirac"})
    with pytest.raises(InvalidParameterError):
        from_dict({"kind": "gamma"})


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.05, max_value=4.0), st.integers(min_value=1, max_value=10**6))
def test_power_law_mass_identity(alpha, n_max):
    d = make_power_law(alpha)
    total = float(np.sum(d.pmf(np.arange(1, n_max + 1)))) + float(d.tail(n_max + 1))
    assert abs(total - 1.0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 0.01))
def test_explicit_mass_identity_and_truncation(weights):
    pmf = [w / sum(weights) for w in weights]
    pmf[-1] = max(0.0, 1.0 - sum(pmf[:-1]))
    d = make_explicit(pmf)
    for n in range(1, len(pmf) + 2):
        total = float(np.sum(d.pmf(np.arange(1, n + 1)))) + float(d.tail(n + 1))
        assert abs(total - 1.0) <= 1e-12
    j = d.support_max
    t = truncate(d, j)
    assert np.allclose(t.pmf(np.arange(1, j + 1)), d.pmf(np.arange(1, j + 1)), atol=1e-12)
