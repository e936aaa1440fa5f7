import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarlab.average import (
    AvgConditionalTable,
    BoundSpec,
    avg_F,
    avg_table,
    bound_F,
    bound_p_lower,
    bound_p_upper,
    bound_window,
    gaussian_binomial,
    gaussian_binomial_log2,
    p_given_s,
    p_given_s_exact,
)
from polarlab.behavior import exact_behavior, f_pair
from polarlab.gf2 import Seed, enumerate_gl, sample_nonsingular


def count_subspaces(n: int, k: int) -> int:
    """Distinct k-dim subspaces of F2^n by spanning every k-subset of nonzero vectors."""
    seen = set()
    for vecs in itertools.combinations(range(1, 2**n), k):
        sp = {0}
        for v in vecs:
            sp |= {x ^ v for x in sp}
        if len(sp) == 2**k:
            seen.add(frozenset(sp))
    return len(seen)


# --- Gaussian binomials -------------------------------------------------------------


def test_gaussian_binomial_examples():
    assert gaussian_binomial_log2(7, 0) == 0.0
    assert gaussian_binomial_log2(2, 1) == pytest.approx(math.log2(3), abs=1e-14)
    assert gaussian_binomial_log2(4, 2) == pytest.approx(math.log2(35), abs=1e-14)


@pytest.mark.parametrize("n, k", [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)])
def test_gaussian_binomial_brute_force(n, k):
    assert gaussian_binomial(n, k) == count_subspaces(n, k)


@pytest.mark.parametrize("n", [10, 33, 64])
def test_gaussian_binomial_log_matches_integer(n):
    for k in range(n + 1):
        assert gaussian_binomial_log2(n, k) == pytest.approx(math.log2(gaussian_binomial(n, k)), rel=1e-13, abs=1e-13)


def test_gaussian_binomial_rejects_k_above_n():
    with pytest.raises(ValueError):
        gaussian_binomial_log2(3, 4)


# --- conditional probabilities ---------------------------------------------------------


@pytest.mark.parametrize("ell", [2, 5, 17, 64])
def test_boundary_values(ell):
    for i in range(1, ell + 1):
        assert p_given_s(ell, i, 0) == 0.0
        assert p_given_s(ell, i, ell) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("ell", range(2, 11))
def test_first_index_closed_form(ell):
    for s in range(ell + 1):
        expected = 1 - (2 ** (ell - s) - 1) / (2**ell - 1)
        assert p_given_s(ell, 1, s) == pytest.approx(expected, abs=1e-13)


@pytest.mark.parametrize("ell", [2, 3])
def test_exhaustive_gl_average(ell):
    kernels = enumerate_gl(ell)
    q = np.mean([exact_behavior(k).q for k in kernels], axis=0)
    for i in range(1, ell + 1):
        for s in range(ell + 1):
            assert abs(q[i - 1, s] - p_given_s(ell, i, s)) <= 1e-12


@pytest.mark.parametrize("ell", [4, 7, 10, 12])
def test_float_matches_rational(ell):
    for i in range(1, ell + 1):
        for s in range(ell + 1):
            assert p_given_s(ell, i, s) == pytest.approx(float(p_given_s_exact(ell, i, s)), abs=1e-13)


@pytest.mark.parametrize("ell, i, s", [(49, 1, 45), (54, 3, 46), (64, 8, 60), (64, 1, 63), (40, 20, 39)])
def test_complement_relative_accuracy(ell, i, s):
    exact = p_given_s_exact(ell, i, s)
    assert 1 - p_given_s(ell, i, s) == pytest.approx(float(1 - exact), rel=1e-6)


def test_rational_small_values():
    # p_{1|1} = 2/3 and p_{2|1} = 1/3 at ell = 2
    assert p_given_s_exact(2, 1, 1) == Fraction(2, 3)
    assert p_given_s_exact(2, 2, 1) == Fraction(1, 3)


@pytest.mark.parametrize("ell", [2, 8, 16, 33, 64])
def test_table_monotone_and_mass(ell):
    p = avg_table(ell).p
    assert np.all(np.diff(p, axis=1) >= -1e-12)  # non-decreasing in s
    assert np.all(np.diff(p, axis=0) <= 1e-12)  # non-increasing in i
    # every pattern with s erasures leaves exactly s undecodable bits, on average too
    assert np.allclose(p.sum(axis=0), np.arange(ell + 1), atol=1e-9)


def test_index_checks():
    with pytest.raises(IndexError):
        p_given_s(4, 0, 1)
    with pytest.raises(ValueError):
        p_given_s(4, 1, 5)


def test_table_csv():
    text = AvgConditionalTable.build(2).to_csv()
    lines = text.splitlines()
    assert lines[0] == "i,s,p" and len(lines) == 1 + 2 * 3


# --- average erasure probability ----------------------------------------------------------


def test_avg_F_ell2():
    assert abs(avg_F(2, 1, 0.5) - 7 / 12) <= 1e-12
    assert abs(avg_F(2, 2, 0.5) - 5 / 12) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.floats(0.0, 1.0))
def test_avg_F_conservation(ell, z):
    total = sum(avg_F(ell, i, z) for i in range(1, ell + 1))
    assert total == pytest.approx(ell * z, abs=1e-9)


@pytest.mark.parametrize("ell", [3, 20, 64])
def test_avg_F_endpoints(ell):
    for i in (1, ell // 2, ell):
        assert avg_F(ell, i, 0.0) == 0.0
        assert avg_F(ell, i, 1.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("ell, kernels", [(8, 2000), (16, 20_000)])
def test_avg_F_matches_sampled_kernels(ell, kernels):
    # at ell = 16 rare kernels dominate the mean for z near 1; 2000 draws miss them
    z = np.linspace(0.05, 0.95, 19)
    vals = np.array([
        f_pair(exact_behavior(sample_nonsingular(ell, Seed(77, (ell, j)))), z)[0]
        for j in range(kernels)
    ])  # (kernels, z, i)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(len(vals))
    for i in range(ell):
        target = avg_F(ell, i + 1, z)
        assert np.all(np.abs(mean[:, i] - target) <= 4 * se[:, i] + 1e-12)


# --- bounds ----------------------------------------------------------------------------------


def test_bound_examples():
    assert bound_p_lower(10, 2, 8) == 0.984375 <= p_given_s(10, 2, 8)
    up = bound_p_upper(10, 8, 2)
    assert up == pytest.approx(2 * (2 / 3) ** 5) and up >= p_given_s(10, 8, 2)
    assert bound_p_lower(10, 5, 5) == 0.0 and bound_p_lower(10, 5, 3) == 0.0


@pytest.mark.parametrize("ell", range(4, 65))
def test_sandwich(ell):
    for i in range(1, ell + 1):
        for s in range(ell + 1):
            p = p_given_s(ell, i, s)
            assert bound_p_lower(ell, i, s) <= p <= bound_p_upper(ell, i, s)


def test_bound_F_examples():
    spec = BoundSpec(1.0, 1.0)
    lo = bound_F(64, 8, 0.9, spec)
    assert lo.applicable and lo.side == "lower" and lo.bound == pytest.approx((1 - 1 / 64) ** 2)
    up = bound_F(64, 56, 0.1, spec)
    assert up.applicable and up.side == "upper" and up.bound == pytest.approx(2 / 64)
    mid = bound_F(64, 32, 0.5, spec)
    assert not mid.applicable and mid.side is None


def test_g_of_delta():
    assert BoundSpec(1.0, 1.0).g_of_delta(64) == math.floor((6 + math.log2(6)) / (math.log2(3) - 1))
    with pytest.raises(ValueError):
        BoundSpec(0.0, 1.0)


@pytest.mark.parametrize("ell", [16, 32, 64])
def test_bound_F_holds_where_applicable(ell):
    spec = BoundSpec(1.0, 1.0)
    for i in range(1, ell + 1):
        for z in np.linspace(0.01, 0.99, 99):
            r = bound_F(ell, i, float(z), spec)
            if not r.applicable:
                continue
            F = avg_F(ell, i, float(z))
            if r.side == "lower":
                assert F > r.bound
            else:
                assert F < r.bound


def test_sharpness_windows_at_desk_scale():
    # the i/ell +- 5 ell^-1/2 log2 ell window covers all of (0, 1) for ell <= 64,
    # so the large-beta sharpness property has no interior point to check here
    ell = 64
    beta = delta = 4.5 + math.log2(ell)
    spec = BoundSpec(beta, delta)
    w = 5 * math.log2(ell) / math.sqrt(ell)
    assert w > 1
    for i in range(1, ell + 1):
        z_hi, z_lo = bound_window(ell, i, spec)
        assert z_hi >= 1.0 and z_lo <= 0.0
