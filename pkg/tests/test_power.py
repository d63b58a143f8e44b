import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import shaping_bruteforce
from prbsim.grid import CellConfig, validate_power
from prbsim.power import (
    KAPPA_MAX,
    UnscheduledUserWithPower,
    assemble_power_tensor,
    equal_power,
    shape_user_power,
    shaping_weights,
    squash_kappa,
    user_budgets,
)
from prbsim.scheduler import quotas_from_logits, resolve_prbs


class TestBudgets:
    def test_equal_logits(self):
        b = user_budgets(np.zeros(4), 10.0)
        np.testing.assert_allclose(b.per_user, 2.5)

    def test_ln2(self):
        np.testing.assert_allclose(user_budgets([math.log(2.0), 0.0], 1.0).shares, [2 / 3, 1 / 3], rtol=1e-15)

    @given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-30, 30)), st.floats(-50, 50))
    def test_shift_invariance(self, w, c):
        np.testing.assert_allclose(user_budgets(w, 1.0).shares, user_budgets(w + c, 1.0).shares, rtol=1e-9, atol=1e-300)

    def test_squash_range(self):
        k = squash_kappa(np.array([-1e3, 0.0, 1e3]))
        np.testing.assert_allclose(k, [0.0, KAPPA_MAX / 2, KAPPA_MAX])


class TestShaping:
    def test_closed_form_ln2(self):
        g = np.array([[3.0, 1.0, 2.0]])  # ranks: PRB0 first, PRB2 second, PRB1 third
        x = np.array([[1], [1], [1]])
        p = shape_user_power(0, 1.0, math.log(2.0), x, g[:, :, None])
        np.testing.assert_allclose(p[0], [4 / 7, 1 / 7, 2 / 7], rtol=0, atol=1e-12)

    def test_kappa_zero_uniform(self, rng):
        g = rng.exponential(size=(12, 5, 1))
        x = np.ones((5, 1), dtype=int)
        np.testing.assert_allclose(shape_user_power(0, 6.0, 0.0, x, g), 6.0 / 60, rtol=0, atol=1e-12)

    def test_single_prb(self, rng):
        g = rng.exponential(size=(12, 4, 2))
        x = np.zeros((4, 2), dtype=int)
        x[2, 1] = 1
        p = shape_user_power(1, 3.0, 5.0, x, g)
        np.testing.assert_allclose(p[:, 2], 3.0 / 12)
        assert np.count_nonzero(p) == 12

    def test_ties_to_lower_prb(self):
        w = shaping_weights(np.array([[1.0, 1.0, 1.0]]), math.log(2.0))
        np.testing.assert_allclose(w, [[1.0, 0.5, 0.25]])

    def test_unscheduled_with_power(self):
        with pytest.raises(UnscheduledUserWithPower):
            shape_user_power(0, 1.0, 1.0, np.zeros((3, 1), dtype=int), np.ones((2, 3, 1)))

    def test_kappa_max_concentration(self, rng):
        n, L = 5, 3
        g = rng.exponential(size=(L, n, 1))
        p = shape_user_power(0, 1.0, KAPPA_MAX, np.ones((n, 1), dtype=int), g)
        top = sum(p[l, np.argmax(g[l, :, 0])] for l in range(L))
        # L rank-1 entries out of L geometric series with ratio exp(-8)
        series = sum(math.exp(-KAPPA_MAX * m) for m in range(n))
        np.testing.assert_allclose(top, 1.0 / series, rtol=1e-12)
        assert top > 0.999

    @given(st.data())
    def test_weights_match_sort_oracle(self, data):
        L, n = data.draw(st.integers(1, 4)), data.draw(st.integers(1, 8))
        g = data.draw(arrays(np.float64, (L, n), elements=st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.5])))
        kappa = data.draw(st.floats(0, KAPPA_MAX))
        np.testing.assert_allclose(shaping_weights(g, kappa), shaping_bruteforce(g, kappa), rtol=1e-15)

    @given(st.data())
    def test_conservation_and_monotonicity(self, data):
        L, B = data.draw(st.integers(1, 4)), data.draw(st.integers(1, 10))
        g = data.draw(arrays(np.float64, (L, B, 1), elements=st.floats(0, 10)))
        kappa = data.draw(st.floats(0, KAPPA_MAX))
        x = np.ones((B, 1), dtype=int)
        p = shape_user_power(0, 2.0, kappa, x, g)
        np.testing.assert_allclose(p.sum(), 2.0, rtol=1e-12)
        for l in range(L):
            order = np.lexsort((np.arange(B), -g[l, :, 0]))
            assert np.all(np.diff(p[l, order]) <= 1e-15)


class TestAssemble:
    def _setup(self, rng, counts):
        cell = CellConfig(num_users=len(counts), num_prbs=sum(counts) + 1, data_symbols=3)
        g = rng.exponential(size=cell.power_shape)
        psi = g.sum(axis=0)
        x = resolve_prbs(np.array(counts), psi)
        return cell, g, x

    def test_all_scheduled_full_budget(self, rng):
        cell, g, x = self._setup(rng, [2, 3, 1])
        p = assemble_power_tensor(user_budgets(rng.normal(size=3), cell.p_max), rng.uniform(0, 8, 3), x, g)
        np.testing.assert_allclose(p.sum(), cell.p_max, rtol=1e-12)
        validate_power(p, x, cell)

    def test_redistribution(self, rng):
        cell, g, x = self._setup(rng, [2, 0, 2])
        budget = user_budgets(np.array([0.0, 1.0, math.log(3.0)]), cell.p_max)
        p = assemble_power_tensor(budget, 0.0, x, g)
        validate_power(p, x, cell)
        per_user = p.sum(axis=(0, 1))
        assert per_user[1] == 0.0
        # user 1's share is split in proportion 1:3
        np.testing.assert_allclose(per_user[[0, 2]], cell.p_max * np.array([0.25, 0.75]), rtol=1e-12)

    def test_idle_slot(self, rng):
        p = assemble_power_tensor(user_budgets(np.zeros(2), 1.0), 1.0, np.zeros((3, 2), dtype=int), np.ones((2, 3, 2)))
        assert not p.any()


class TestEqualPower:
    def test_full_grid(self):
        x = np.zeros((51, 4), dtype=int)
        x[np.arange(51), np.arange(51) % 4] = 1
        p = equal_power(x, 10.0, 12)
        np.testing.assert_allclose(p[x[None].repeat(12, 0) == 1], 10.0 / 612)

    def test_single_prb(self):
        x = np.zeros((5, 2), dtype=int)
        x[3, 1] = 1
        p = equal_power(x, 10.0, 12)
        np.testing.assert_allclose(p[:, 3, 1], 10.0 / 12)
        assert np.count_nonzero(p) == 12

    def test_idle(self):
        cell = CellConfig(num_users=2, num_prbs=3, data_symbols=2)
        x = np.zeros((3, 2), dtype=int)
        p = equal_power(x, cell.p_max, 2)
        assert not p.any()
        validate_power(p, x, cell)

    def test_equals_kappa_zero_count_weighted(self, rng):
        cell = CellConfig(num_users=3, num_prbs=9, data_symbols=4)
        g = rng.exponential(size=cell.power_shape)
        x = resolve_prbs(np.array([4, 3, 2]), g.sum(axis=0))
        budget = user_budgets(np.log([4.0, 3.0, 2.0]), cell.p_max)
        np.testing.assert_allclose(assemble_power_tensor(budget, 0.0, x, g), equal_power(x, cell.p_max, 4), rtol=1e-12)


@given(st.data())
def test_fuzzed_decisions_are_feasible(data):
    U = data.draw(st.integers(1, 5))
    B = data.draw(st.integers(1, 16))
    L = data.draw(st.integers(1, 4))
    cell = CellConfig(num_users=U, num_prbs=B, data_symbols=L)
    g = data.draw(arrays(np.float64, (L, B, U), elements=st.floats(0, 1e-8)))
    z = data.draw(arrays(np.float64, U, elements=st.floats(-10, 10)))
    w = data.draw(arrays(np.float64, U, elements=st.floats(-10, 10)))
    kappa = data.draw(arrays(np.float64, U, elements=st.floats(0, KAPPA_MAX)))
    x = resolve_prbs(quotas_from_logits(z, B).counts, g.sum(axis=0))
    p = assemble_power_tensor(user_budgets(w, cell.p_max), kappa, x, g)
    validate_power(p, x, cell)
    np.testing.assert_allclose(p.sum(), cell.p_max, rtol=1e-9)
