import itertools

import numpy as np
import pytest

from sparseadv.cornersearch import (
    CornerSearchConfig,
    build_orderings,
    corner_search,
    one_pixel_candidates,
    sample_indices,
)
from sparseadv.image import l0_pixel_distance, linf_distance
from sparseadv.models import Dense, ReferenceModel
from sparseadv.projections import ThreatModel
from sparseadv.sigma import compute_sigma_map


class ConstantOracle:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.calls = 0

    def logits(self, batch):
        self.calls += 1
        return np.tile(self.values, (len(batch), 1))


def linear_model(rng, shape, classes):
    d = int(np.prod(shape))
    return ReferenceModel(shape, [Dense(rng.normal(size=(classes, d)), rng.normal(size=classes))])


def test_candidate_counts(rng):
    assert len(one_pixel_candidates(rng.random((2, 2, 3)), "l0")) == 32
    x = rng.random((3, 3, 1))
    assert len(one_pixel_candidates(x, ThreatModel("sigma", kappa=0.4), compute_sigma_map(x))) == 18
    assert len(one_pixel_candidates(x, "l0")) == 18


def test_candidate_order():
    x = np.full((1, 2, 3), 0.5)
    cands = one_pixel_candidates(x, "l0")
    corners = list(itertools.product((0.0, 1.0), repeat=3))
    assert [tuple(v) for v in cands.values.tolist()] == corners + corners
    assert cands.pixels.tolist() == [[0, 0]] * 8 + [[0, 1]] * 8


def test_sigma_candidates_constant_image():
    x = np.full((2, 3, 3), 0.4)
    cands = one_pixel_candidates(x, ThreatModel("sigma", kappa=0.4), compute_sigma_map(x))
    assert cands.collapsed.all()
    assert np.all(cands.values == 0.4)


def test_sigma_requires_map(rng):
    with pytest.raises(ValueError):
        one_pixel_candidates(rng.random((2, 2, 1)), ThreatModel("sigma", kappa=0.4))


def test_linf_candidates(rng):
    x = rng.random((2, 2, 1))
    cands = one_pixel_candidates(x, ThreatModel("l0_linf", eps=0.1))
    for (r, c), v in zip(cands.pixels, cands.values):
        assert abs(v[0] - x[r, c, 0]) <= 0.1 + 1e-15
        assert 0 <= v[0] <= 1


def test_orderings_examples():
    logits = np.array([[0.0, -0.1], [0.0, -0.5]])
    order = build_orderings(logits, 0)
    assert order[1].tolist() == [0, 1]  # 1-based: (1, 2)
    assert np.array_equal(build_orderings(np.ones((5, 3)), 1), np.tile(np.arange(5), (3, 1)))


def test_orderings_match_reference_sort(rng):
    for _ in range(20):
        m, k = int(rng.integers(1, 30)), int(rng.integers(2, 6))
        logits = np.round(rng.normal(size=(m, k)), 1)  # coarse values force ties
        c = int(rng.integers(k))
        order = build_orderings(logits, c)
        for r in range(k):
            if r != c:
                key = [logits[j, r] - logits[j, c] for j in range(m)]
            else:
                key = [max(logits[j, s] for s in range(k) if s != c) - logits[j, c] for j in range(m)]
            expected = sorted(range(m), key=lambda j: (-key[j], j))
            assert order[r].tolist() == expected


def test_sampling_small_cases():
    rng = np.random.default_rng(0)
    assert np.all(sample_indices(1, 1000, rng) == 1)
    draws = sample_indices(100, 200_000, rng)
    assert draws.min() >= 1 and draws.max() <= 100
    assert np.mean(draws == 1) == pytest.approx(199 / 10000, abs=0.0015)
    with pytest.raises(ValueError):
        sample_indices(0, 1, rng)
    assert sample_indices(5, (3, 4), rng).shape == (3, 4)


def test_sampling_probabilities_sum_to_one():
    for n in (1, 2, 7, 100):
        probs = [(2 * n - 2 * i + 1) / n**2 for i in range(1, n + 1)]
        assert sum(probs) == pytest.approx(1.0, abs=1e-12)


def test_constant_oracle_fails_with_full_budget():
    oracle = ConstantOracle([1.0, 0.0, -1.0])
    x = np.full((2, 2, 1), 0.5)
    cfg = CornerSearchConfig(n=5, k_max=4, n_iter=7, seed=1, batch_size=3)
    result = corner_search(x, oracle, cfg)
    assert not result.success
    assert result.adversarial is None and result.pixels_changed is None
    m = 8
    assert result.queries == m + (cfg.k_max - 1) * 3 * cfg.n_iter


def test_one_by_two_example():
    # class 1 wins once the second pixel reaches 1.0
    model = ReferenceModel((1, 2, 1), [Dense([[0.0, 0.0], [0.0, 4.0]], [0.0, -3.0])])
    x = np.full((1, 2, 1), 0.5)
    assert model.predict(x) == 0
    result = corner_search(x, model, CornerSearchConfig())
    assert result.success and result.pixels_changed == 1 and result.label == 1
    assert result.adversarial[0, 1, 0] == 1.0 and result.adversarial[0, 0, 0] == 0.5
    assert result.queries == 4


def test_multi_pixel_success_and_constraints(rng):
    # needs at least two pixels set high: logit gap closes only with two
    w = np.zeros((2, 9))
    w[1] = 1.0
    model = ReferenceModel((3, 3, 1), [Dense(w, [0.0, -6.0])])
    x = np.full((3, 3, 1), 0.5)
    assert model.predict(x) == 0
    result = corner_search(x, model, CornerSearchConfig(n=18, k_max=5, n_iter=200))
    assert result.success
    assert result.pixels_changed >= 2
    assert model.predict(result.adversarial) == 1
    assert l0_pixel_distance(x, result.adversarial) == result.pixels_changed <= 5


def test_threat_constraints_hold(rng):
    for mode in ("l0_linf", "sigma"):
        threat = ThreatModel(mode, eps=0.2, kappa=0.8)
        cfg = CornerSearchConfig(threat=threat, n=20, k_max=6, n_iter=50)
        for _ in range(10):
            model = linear_model(rng, (3, 3, 3), 3)
            x = rng.random((3, 3, 3))
            result = corner_search(x, model, cfg)
            if not result.success:
                continue
            assert cfg.feasible(x, result.adversarial)
            if mode == "l0_linf":
                assert linf_distance(x, result.adversarial) <= 0.2 + 1e-15
            else:
                # clipping may break the shared-coefficient form, so check the
                # clipped extremes pixel by pixel
                sigma = compute_sigma_map(x)
                for r, c in zip(*np.nonzero(np.any(result.adversarial != x, axis=-1))):
                    plus = np.clip((1 + 0.8 * sigma[r, c]) * x[r, c], 0, 1)
                    minus = np.clip((1 - 0.8 * sigma[r, c]) * x[r, c], 0, 1)
                    v = result.adversarial[r, c]
                    assert np.array_equal(v, plus) or np.array_equal(v, minus)


def test_reproducible(rng):
    model = linear_model(rng, (4, 4, 1), 3)
    x = rng.random((4, 4, 1))
    cfg = CornerSearchConfig(n=10, k_max=4, n_iter=20, seed=7)
    a, b = corner_search(x, model, cfg), corner_search(x, model, cfg)
    assert (a.success, a.pixels_changed, a.label, a.queries) == (b.success, b.pixels_changed, b.label, b.queries)
    if a.success:
        assert np.array_equal(a.adversarial, b.adversarial)


def test_success_within_larger_budget(rng):
    # the sampling schedule for k <= a is a prefix of that for k <= b
    for _ in range(10):
        model = linear_model(rng, (3, 3, 1), 2)
        x = rng.random((3, 3, 1)) * 0.3 + 0.35
        small = corner_search(x, model, CornerSearchConfig(n=10, k_max=3, n_iter=30, seed=3))
        large = corner_search(x, model, CornerSearchConfig(n=10, k_max=6, n_iter=30, seed=3))
        if small.success:
            assert large.success and large.pixels_changed == small.pixels_changed
            assert np.array_equal(large.adversarial, small.adversarial)


def test_config_validation():
    with pytest.raises(ValueError):
        CornerSearchConfig(n=0)
    with pytest.raises(ValueError):
        CornerSearchConfig(k_max=0)


def test_oracle_failure_propagates():
    class Broken:
        def logits(self, batch):
            raise RuntimeError("oracle down")

    with pytest.raises(RuntimeError):
        corner_search(np.zeros((2, 2, 1)), Broken(), CornerSearchConfig())
