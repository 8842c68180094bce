import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nerp.losses import EPS, LAMBDA_SWEEP, adv_loss_d, adv_loss_g, l_reg, total_objective

images = arrays(np.float64, (3, 4), elements=st.floats(0, 1))
scores = st.lists(st.floats(0, 1), min_size=1, max_size=16)


class TestReg:
    def test_identity(self):
        x = np.random.default_rng(0).uniform(size=(8, 8))
        assert l_reg(x, x) == 0.0

    def test_extremes(self):
        assert l_reg(np.ones((4, 4)), np.zeros((4, 4))) == 1.0

    def test_mean(self):
        a = np.zeros((2, 2))
        b = np.array([[0.1, 0.2], [0.3, 0.4]])
        assert l_reg(a, b) == pytest.approx(0.25, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            l_reg(np.zeros((2, 2)), np.zeros((2, 3)))

    @given(images, images, images)
    def test_metric(self, a, b, c):
        assert l_reg(a, b) == l_reg(b, a)
        assert (l_reg(a, b) == 0) == np.array_equal(a, b)
        assert l_reg(a, c) <= l_reg(a, b) + l_reg(b, c) + 1e-12


class TestAdversarial:
    def test_midpoint(self):
        assert adv_loss_d([0.5], [0.5]) == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_perfect_discriminator(self):
        assert adv_loss_d([1.0], [0.0]) == pytest.approx(0.0, abs=1e-6)
        assert adv_loss_d([1 - EPS], [EPS]) == pytest.approx(-2 * math.log1p(-EPS), rel=1e-6)

    def test_arithmetic(self):
        assert adv_loss_d([0.9], [0.1]) == pytest.approx(-2 * math.log(0.9), abs=1e-12)
        assert adv_loss_d([0.9], [0.1]) == pytest.approx(0.2107, abs=1e-4)

    @pytest.mark.parametrize("fake, expected", [([1 - EPS], 0.0), ([0.5], math.log(2)), ([0.25, 0.25], math.log(4))])
    def test_generator(self, fake, expected):
        assert adv_loss_g(fake) == pytest.approx(expected, abs=1e-6)

    def test_empty(self):
        with pytest.raises(ValueError):
            adv_loss_d([], [0.5])
        with pytest.raises(ValueError):
            adv_loss_g([])

    @given(scores, scores)
    def test_nonnegative(self, real, fake):
        assert adv_loss_d(real, fake) >= 0
        assert adv_loss_g(fake) >= 0
        assert math.isfinite(adv_loss_d(real, fake))


class TestTotal:
    def test_default_weight(self):
        assert total_objective(0.5, 0.2).total == pytest.approx(0.7, abs=1e-15)

    def test_zero_weight(self):
        assert total_objective(0.5, 0.2, 0.0).total == 0.5

    def test_weighted(self):
        v = total_objective(0.5, 0.2, 5.0)
        assert float(v) == pytest.approx(1.5, abs=1e-15)
        assert (v.adv, v.reg, v.lam) == (0.5, 0.2, 5.0)

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            total_objective(0.5, 0.2, -1.0)

    @pytest.mark.parametrize("lam", LAMBDA_SWEEP)
    def test_linear_in_reg(self, lam):
        regs = np.linspace(0, 2, 9)
        totals = np.array([total_objective(0.3, r, lam).total for r in regs])
        assert np.allclose(np.diff(totals), lam * np.diff(regs), atol=1e-12)
