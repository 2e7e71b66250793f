import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tce.errors import DegenerateSample, EmptyList, LengthMismatch, ZeroEstimate, ZeroReference
from tce.metrics import (
    evaluate,
    incorrect_target_ratio,
    neg_snr_loss,
    neg_snr_loss_grad,
    paired_t_test,
    si_sdr,
    snr,
    summarize,
)


def brute_snr(e, r):
    num = sum(x * x for x in r)
    den = sum((a - b) ** 2 for a, b in zip(e, r))
    return 10 * math.log10(num / den)


def brute_si_sdr(e, r):
    alpha = sum(a * b for a, b in zip(e, r)) / sum(x * x for x in r)
    s = [alpha * x for x in r]
    n = [a - b for a, b in zip(e, s)]
    return 10 * math.log10(sum(x * x for x in s) / sum(x * x for x in n))


def test_worked_examples():
    r = np.array([1.0, 0.0, -1.0, 0.0])
    assert snr(r, r) == math.inf
    assert snr(r * 0.5, r) == pytest.approx(10 * math.log10(4))
    assert si_sdr(r * 0.5, r) == math.inf
    assert snr(np.zeros(4), r) == pytest.approx(0.0)
    assert si_sdr(np.array([1.0, 1.0, -1.0, 0.0]), r) == pytest.approx(10 * math.log10(2))


def test_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        r = rng.standard_normal(n)
        e = r + rng.standard_normal(n) * rng.uniform(0.01, 3)
        assert abs(snr(e, r) - brute_snr(e.tolist(), r.tolist())) < 1e-9
        assert abs(si_sdr(e, r) - brute_si_sdr(e.tolist(), r.tolist())) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3))
def test_si_sdr_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(64)
    e = r + rng.standard_normal(64)
    assert si_sdr(c * e, r) == pytest.approx(si_sdr(e, r), abs=1e-9)


def test_errors():
    with pytest.raises(ZeroReference):
        snr(np.ones(3), np.zeros(3))
    with pytest.raises(ZeroEstimate):
        si_sdr(np.zeros(3), np.ones(3))
    with pytest.raises(LengthMismatch):
        snr(np.ones(3), np.ones(4))
    with pytest.raises(EmptyList):
        incorrect_target_ratio([])


def test_evaluate_improvements():
    rng = np.random.default_rng(0)
    r = rng.standard_normal(200)
    mix = r + rng.standard_normal(200)
    est = r + 0.1 * rng.standard_normal(200)
    res = evaluate("x", mix, est, r)
    assert res.snri_db == pytest.approx(snr(est, r) - snr(mix, r))
    assert res.si_sdri_db == pytest.approx(si_sdr(est, r) - si_sdr(mix, r))


class TestLoss:
    def test_floor_and_values(self):
        r = np.array([1.0, -2.0, 3.0])
        assert neg_snr_loss(r, r) == pytest.approx(-100.0)
        assert neg_snr_loss(np.zeros(3), r) == pytest.approx(0.0)
        assert np.all(neg_snr_loss_grad(r, r) == 0)

    def test_monotone_in_error(self):
        rng = np.random.default_rng(1)
        r = rng.standard_normal(50)
        d = rng.standard_normal(50)
        losses = [neg_snr_loss(r + s * d, r) for s in (0.01, 0.1, 0.5, 1, 3)]
        assert losses == sorted(losses)

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            r = rng.standard_normal(128)
            e = r + 0.3 * rng.standard_normal(128)
            g = neg_snr_loss_grad(e, r)
            h = 1e-6
            fd = np.array([(neg_snr_loss(e + h * u, r) - neg_snr_loss(e - h * u, r)) / (2 * h)
                           for u in np.eye(128)])
            assert np.max(np.abs(fd - g)) <= 1e-4 * np.max(np.abs(g))


class TestTTest:
    def test_closed_form(self):
        res = paired_t_test([1.0, 3.0], [0.0, 0.0])
        assert res["t_stat"] == pytest.approx(2.0)
        assert res["p_value"] == pytest.approx(1 - 2 / math.pi * math.atan(2), abs=1e-12)
        assert res["p_value"] == pytest.approx(0.2952, abs=1e-4)
        assert res["df"] == 1

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal(20), rng.standard_normal(20)
        x, y = paired_t_test(a, b), paired_t_test(b, a)
        assert x["t_stat"] == pytest.approx(-y["t_stat"])
        assert x["p_value"] == pytest.approx(y["p_value"])

    def test_degenerate(self):
        with pytest.raises(DegenerateSample):
            paired_t_test([1.0], [0.0])
        with pytest.raises(DegenerateSample):
            paired_t_test([1.0, 2.0], [0.0, 1.0])


class TestIncorrectTarget:
    def _sample(self, out_mix, seed=0):
        rng = np.random.default_rng(seed)
        s0 = rng.standard_normal(400)
        partner = rng.standard_normal(400)
        inter = rng.standard_normal(400)
        target, wrong = s0 + partner, s0 + inter
        mixture = s0 + partner + inter
        a, b = out_mix
        return {"output": a * target + b * wrong, "target_conv": target,
                "wrong_conv": wrong, "mixture": mixture}

    def test_examples(self):
        assert incorrect_target_ratio([self._sample((1, 0))]) == 0.0
        assert incorrect_target_ratio([self._sample((0, 1))]) == 1.0
        both = [self._sample((1, 0), 1), self._sample((0, 1), 2)]
        assert incorrect_target_ratio(both) == 0.5

    def test_blend_brute_force(self):
        s = self._sample((0.6, 0.4), 5)
        right = brute_snr(s["output"], s["target_conv"]) - brute_snr(s["mixture"], s["target_conv"])
        wrong = brute_snr(s["output"], s["wrong_conv"]) - brute_snr(s["mixture"], s["wrong_conv"])
        assert incorrect_target_ratio([s]) == float(wrong > right)


def test_summarize_infinite():
    out = summarize([1.0, 3.0, math.inf])
    assert out == {"mean": 2.0, "std": pytest.approx(math.sqrt(2)), "n": 3, "n_infinite": 1}
