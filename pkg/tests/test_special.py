import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special as sps
from scipy.stats import poisson

from bihaar.errors import DomainError
from bihaar.special import (
    SkellamParams,
    bessel_i_scaled,
    bessel_i_scaled_table,
    normal_quantile,
    normal_sf,
    skellam_pmf,
    skellam_pmf_table,
    skellam_tail,
    symmetric_tails,
)

mpmath.mp.dps = 40


def mp_ive(n, x):
    return float(mpmath.besseli(n, x) * mpmath.exp(-x))


def convolution_pmf(n, mu1, mu2):
    # Brute force: sum over the second Poisson variable.
    k = np.arange(0, int(mu1 + mu2 + 20 * math.sqrt(mu1 + mu2 + 1) + 60))
    return float(np.sum(poisson.pmf(n + k, mu1) * poisson.pmf(k, mu2)))


# ---------------------------------------------------------------- Bessel


@pytest.mark.parametrize("n,x,expected", [(0, 0.0, 1.0), (1, 0.0, 0.0), (0, 2.0, 0.308508322553671)])
def test_bessel_examples(n, x, expected):
    assert bessel_i_scaled(n, x) == pytest.approx(expected, rel=1e-13, abs=1e-300)


@pytest.mark.parametrize("x", [1e-8, 1e-3, 0.1, 0.7, 2.0, 9.5, 30.0, 49.0, 51.0, 200.0, 1e3, 2.5e4, 1e6])
@pytest.mark.parametrize("n", [0, 1, 2, 5, 9, 17, 40, 100, 250])
def test_bessel_matches_mpmath(n, x):
    ref = mp_ive(n, x)
    got = bessel_i_scaled(n, x)
    if ref < 1e-300:
        assert got < 1e-290
    else:
        assert got == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("x", [0.3, 4.0, 77.0, 640.0])
def test_bessel_table_matches_scipy(x):
    table = bessel_i_scaled_table(60, x)
    ref = sps.ive(np.arange(61), x)
    live = ref > 1e-290
    np.testing.assert_allclose(table[live], ref[live], rtol=1e-12)


@pytest.mark.parametrize("x", [1.0, 10.0, 100.0])
def test_bessel_three_term_recurrence(x):
    for n in range(1, 31):
        lhs = bessel_i_scaled(n - 1, x) - bessel_i_scaled(n + 1, x)
        rhs = 2.0 * n / x * bessel_i_scaled(n, x)
        assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("n,x", [(-1, 1.0), (1, -0.5), (1.5, 1.0)])
def test_bessel_domain_errors(n, x):
    with pytest.raises(DomainError):
        bessel_i_scaled(n, x)


# ---------------------------------------------------------------- Skellam


def test_params_validation():
    with pytest.raises(DomainError):
        SkellamParams(-1.0, 1.0)
    with pytest.raises(DomainError):
        SkellamParams(1.0, float("nan"))
    assert SkellamParams.symmetric(2).is_symmetric


def test_pmf_examples():
    assert skellam_pmf(0, SkellamParams(0, 0)) == 1.0
    p = SkellamParams.symmetric(0.5)
    assert skellam_pmf(0, p) == pytest.approx(0.465759607593, rel=1e-10)
    assert skellam_pmf(0, p) == pytest.approx(convolution_pmf(0, 0.5, 0.5), rel=1e-12)
    for lam in (0.3, 4.0, 60.0):
        q = SkellamParams.symmetric(lam)
        assert skellam_pmf(-3, q) == skellam_pmf(3, q)


@pytest.mark.parametrize("mu1,mu2", [(0.5, 2.0), (3.0, 0.1), (10.0, 12.5), (40.0, 5.0), (0.0, 2.0), (1.5, 0.0)])
@pytest.mark.parametrize("n", [-12, -3, 0, 1, 4, 15])
def test_asymmetric_pmf_matches_convolution(mu1, mu2, n):
    ref = convolution_pmf(n, mu1, mu2)
    got = skellam_pmf(n, SkellamParams(mu1, mu2))
    assert got == pytest.approx(ref, rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0, 100.0])
def test_pmf_sums_to_one(lam):
    N = math.ceil(10 * (lam + 1)) + 50
    p = SkellamParams.symmetric(lam)
    total = sum(skellam_pmf(n, p) for n in range(-N, N + 1))
    assert total >= 1 - 1e-12
    assert total <= 1 + 1e-12


def test_tail_examples():
    assert skellam_tail(4, SkellamParams.symmetric(0.5)) == pytest.approx(1.12e-3, rel=5e-3)
    assert skellam_tail(9, SkellamParams.symmetric(5)) == pytest.approx(3.97e-3, rel=5e-3)
    assert skellam_tail(1, SkellamParams(0, 0)) == 0.0


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_tail_recursion(lam):
    p = SkellamParams.symmetric(lam)
    for k in range(1, 51):
        t0 = skellam_tail(k, p)
        t1 = skellam_tail(k + 1, p)
        assert t0 == pytest.approx(t1 + skellam_pmf(k, p), rel=1e-14, abs=1e-300)


@pytest.mark.parametrize("mu1,mu2,k0", [(0.5, 0.5, 1), (2.0, 2.0, 6), (7.0, 3.0, 2), (1.0, 4.0, 1), (30.0, 30.0, 25)])
def test_tail_matches_convolution(mu1, mu2, k0):
    ref = sum(convolution_pmf(n, mu1, mu2) for n in range(k0, k0 + 400))
    assert skellam_tail(k0, SkellamParams(mu1, mu2)) == pytest.approx(ref, rel=1e-10)


def test_tail_domain():
    with pytest.raises(DomainError):
        skellam_tail(0, SkellamParams.symmetric(1))


@settings(max_examples=60, deadline=None)
@given(lam=st.floats(0.01, 300.0), k=st.integers(1, 120))
def test_symmetric_tails_agree_with_scalar(lam, k):
    vec = symmetric_tails([k], lam)[0]
    ref = skellam_tail(k, SkellamParams.symmetric(lam))
    assert vec == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_pmf_table_is_read_only():
    t = skellam_pmf_table(1.0, 10)
    with pytest.raises(ValueError):
        t[0] = 0.0


@pytest.mark.slow
@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
def test_tail_noncentral_chi2_identity(lam):
    # Pr(X1 - X2 >= n) = Pr(chi2_(2n)(2 lam) < 2 lam); chi2 sampled from shifted normals.
    rng = np.random.default_rng(20240611)
    draws = 10_000_000
    chunk = 1_000_000
    shift = math.sqrt(2.0 * lam)
    hits = np.zeros(10)
    for _ in range(draws // chunk):
        z = rng.standard_normal((chunk, 20))
        sq = z * z
        sq[:, 0] += 2.0 * shift * z[:, 0] + 2.0 * lam
        cum = np.cumsum(sq, axis=1)[:, 1::2]
        hits += (cum < 2.0 * lam).sum(axis=0)
    for n in range(1, 11):
        p = skellam_tail(n, SkellamParams.symmetric(lam))
        est = hits[n - 1] / draws
        se = math.sqrt(max(p * (1 - p), 1e-300) / draws)
        assert abs(est - p) <= 4 * se + 1e-12


# ---------------------------------------------------------------- normal


def test_normal_quantile_examples():
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.975) == pytest.approx(1.9599639845400542, abs=1e-10)
    assert normal_quantile(0.025) == pytest.approx(-1.9599639845400542, abs=1e-10)
    assert normal_quantile(1 - 1e-6) == pytest.approx(4.753424308822899, abs=1e-10)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_normal_quantile_domain(p):
    with pytest.raises(DomainError):
        normal_quantile(p)


@pytest.mark.parametrize("x", [-5.0, -1.0, 0.0, 0.3, 1.9599639845400542, 4.0, 8.0])
def test_normal_sf_matches_mpmath(x):
    ref = float(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2)
    assert normal_sf(x) == pytest.approx(ref, rel=1e-12)


def test_normal_sf_examples():
    assert normal_sf(0.0) == 0.5
    assert normal_sf(1.959964) == pytest.approx(0.025, abs=1e-9)
    v = normal_sf(40.0)
    assert 0.0 <= v < 1e-300
