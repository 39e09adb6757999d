import math

import numpy as np
import pytest

from bihaar.analysis import sample_poisson
from bihaar.denoise import (
    DenoiseConfig,
    bh_fdr_select,
    coefficient_pvalue,
    denoise,
    estimate_lambda_j,
    threshold_band,
)
from bihaar.errors import DomainError, SizeError, StructureError
from bihaar.special import SkellamParams, skellam_tail
from bihaar.thresholds import ThresholdSpec
from bihaar.transforms import forward_1d, haar_bank


def test_estimate_lambda_examples():
    np.testing.assert_array_equal(estimate_lambda_j(np.zeros(4)), 0.0)
    assert estimate_lambda_j(np.array([-0.5]))[0] == 0.0
    np.testing.assert_array_equal(estimate_lambda_j(np.zeros(3), j=2, q=1, known_lambda=2.0), 8.0)
    np.testing.assert_allclose(estimate_lambda_j(np.array([3.0]), c=1.0, j=2, q=1), 12.0)


def test_threshold_band_examples():
    spec = ThresholdSpec.from_alpha("fab", 0.02)
    assert spec.critical_count(np.array([1.0]))[0] == 4
    d = np.array([4.0, 3.0, -4.0, 0.0])
    out, mask = threshold_band(d, np.ones(4), spec)
    assert mask.tolist() == [True, False, True, False]
    assert out.tolist() == [4.0, 0.0, -4.0, 0.0]
    out, mask = threshold_band(np.zeros(8), np.full(8, 3.0), spec)
    assert not mask.any()
    with pytest.raises(StructureError):
        threshold_band(np.zeros(4), np.ones(3), spec)


def test_coefficient_pvalue_examples():
    assert coefficient_pvalue(0.0, 3.0) == 1.0
    assert coefficient_pvalue(4.0, 1.0) == pytest.approx(2 * 1.12e-3, rel=5e-3)
    assert coefficient_pvalue(-4.0, 1.0) == coefficient_pvalue(4.0, 1.0)
    assert coefficient_pvalue(20.0, 100.0) == pytest.approx(2 * 2.56e-2, rel=5e-3)
    vec = coefficient_pvalue(np.array([0.0, 2.0, 5.0]), np.array([1.0, 1.0, 7.0]))
    assert vec[1] == pytest.approx(2 * skellam_tail(2, SkellamParams.symmetric(0.5)))
    assert vec[2] == pytest.approx(2 * skellam_tail(5, SkellamParams.symmetric(3.5)))
    with pytest.raises(DomainError):
        coefficient_pvalue(1.0, -1.0)


def test_bh_examples():
    assert bh_fdr_select([0.001, 0.02, 0.8], 0.05).tolist() == [True, True, False]
    assert not bh_fdr_select([1.0, 1.0], 0.05).any()
    assert bh_fdr_select([0.05], 0.05).tolist() == [True]
    assert bh_fdr_select([], 0.1).size == 0


def test_config_validation():
    with pytest.raises(DomainError):
        DenoiseConfig(alpha=2.0)
    with pytest.raises(DomainError):
        DenoiseConfig(transform="db4")
    with pytest.raises(DomainError):
        DenoiseConfig(scales=0)
    with pytest.raises(DomainError):
        DenoiseConfig(mode="fdr")
    with pytest.raises(DomainError):
        DenoiseConfig(known_lambda=-1.0)


@pytest.mark.parametrize("transform", ["haar", "bihaar", "tihaar"])
@pytest.mark.parametrize("scheme,shape", [("1d", (64,)), ("2d", (16, 16)), ("2d1d", (8, 8, 16))])
def test_zero_counts_give_zero(transform, scheme, shape):
    est, rep = denoise(np.zeros(shape, dtype=int), DenoiseConfig(transform=transform, scheme=scheme, scales=2))
    assert est.shape == shape
    assert np.all(est == 0.0)
    assert all(b.kept <= b.tested for b in rep.bands)


@pytest.mark.parametrize("transform", ["haar", "bihaar", "tihaar"])
def test_positive_and_deterministic(transform):
    rng = np.random.default_rng(0)
    for _ in range(5):
        counts = rng.poisson(rng.uniform(0, 5, 128))
        cfg = DenoiseConfig(transform=transform, scales=4, alpha=0.05)
        a, _ = denoise(counts, cfg)
        b, _ = denoise(counts, cfg)
        assert np.all(a >= 0)
        assert np.array_equal(a, b)


def test_large_constant_field_returns_mean():
    counts = sample_poisson(np.full(1024, 1000.0), seed=2)
    est, _ = denoise(counts, DenoiseConfig(transform="bihaar", scales=5, alpha=1e-3))
    # Estimate is the local block mean: within a few block standard errors of 1000.
    assert np.max(np.abs(est - 1000.0)) < 5 * math.sqrt(1000.0 / 32) + 5
    assert abs(est.mean() - counts.mean()) < 1e-9


def test_known_lambda_uses_constant():
    counts = sample_poisson(np.full(256, 4.0), seed=1)
    _, rep = denoise(counts, DenoiseConfig(scales=3, known_lambda=4.0))
    b = rep.band("j=2/D")
    assert b.lambda_min == b.lambda_max == 16.0


def test_signal_is_kept():
    truth = np.full(256, 2.0)
    truth[70:133] = 40.0
    counts = sample_poisson(truth, seed=3)
    for transform in ("haar", "bihaar", "tihaar"):
        est, rep = denoise(counts, DenoiseConfig(transform=transform, scales=4))
        assert sum(b.kept for b in rep.bands) > 0
        assert np.mean((est - truth) ** 2) < np.mean((counts - truth) ** 2)


def test_modes_run_and_report():
    truth = np.full((32, 32), 1.0)
    truth[8:16, 8:16] = 30.0
    counts = sample_poisson(truth, seed=4)
    for mode, extra in (("universal", {}), ("fdr", {"fdr_rate": 0.05}), ("fpr", {})):
        est, rep = denoise(counts, DenoiseConfig(scheme="2d", scales=2, mode=mode, **extra))
        assert est.shape == truth.shape
        assert sum(b.kept for b in rep.bands) > 0
        d = rep.to_dict()
        assert set(d["timing"]) >= {"forward", "testing", "synthesis", "total"}


def test_fdr_controls_null_discoveries():
    counts = sample_poisson(np.full(4096, 3.0), seed=5)
    _, rep = denoise(counts, DenoiseConfig(scales=5, mode="fdr", fdr_rate=0.05))
    assert sum(b.kept for b in rep.bands) <= 2
    assert any("BH-FDR" in n for n in rep.notes)


def test_hard_threshold_contracts_energy():
    counts = sample_poisson(np.linspace(1, 20, 256), seed=6)
    cfg = DenoiseConfig(transform="haar", scales=4)
    est, _ = denoise(counts, cfg)
    before = forward_1d(counts.astype(float), 4, haar_bank())
    after = forward_1d(est, 4, haar_bank())
    for k in before.details:
        assert np.sum(after.details[k] ** 2) <= np.sum(before.details[k] ** 2) + 1e-9


def test_haar_fpr_matches_exact_tail():
    # Constant field, known intensity: kept fraction equals the exact two-sided tail.
    lam, J, reps, alpha = 2.0, 3, 60, 0.05
    spec = ThresholdSpec.from_alpha("fab", alpha)
    kept = np.zeros(J + 1)
    tested = np.zeros(J + 1)
    for r in range(reps):
        counts = sample_poisson(np.full(2048, lam), seed=9, replicate=r)
        _, rep = denoise(counts, DenoiseConfig(transform="haar", scales=J, alpha=alpha, known_lambda=lam))
        for j in range(1, J + 1):
            b = rep.band(f"j={j}/D")
            kept[j] += b.kept
            tested[j] += b.tested
    for j in range(1, J + 1):
        lj = 2 ** j * lam
        k0 = int(spec.critical_count(np.array([lj]))[0])
        p = 2 * skellam_tail(k0, SkellamParams.symmetric(lj / 2))
        se = math.sqrt(p * (1 - p) / tested[j])
        assert abs(kept[j] / tested[j] - p) <= 4 * se


def test_input_errors():
    cfg = DenoiseConfig(scales=3)
    with pytest.raises(DomainError):
        denoise(np.array([1, -1] * 8), cfg)
    with pytest.raises(DomainError):
        denoise(np.array([0.5] * 16), cfg)
    with pytest.raises(DomainError):
        denoise(np.array([np.nan] * 16), cfg)
    with pytest.raises(SizeError):
        denoise(np.zeros(12), cfg)
    with pytest.raises(SizeError):
        denoise(np.zeros(12), DenoiseConfig(transform="tihaar", scales=3))
    with pytest.raises(StructureError):
        denoise(np.zeros((8, 8)), cfg)
