import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swapcert.bell import (Behavior, CorrelatorForm, CountsRecord, alpha_for_theta, behavior_from_counts,
                           deterministic_correlators, epsilon_deviation, from_correlators, local_bound,
                           mu_for_theta, quantum_max, signaling_deficit, tilted_chsh, to_correlators)
from swapcert.errors import DomainError, EmptySettingError, ValidationError
from swapcert.quantum import (MeasurementSetting, TrialPlan, born_behavior, ideal_measurements,
                              random_density_matrix, sample_counts, target_state)

from conftest import GRID_DEG


def uniform_counts(n=25):
    return CountsRecord(45.0, np.full((2, 2, 2, 2), n), 4 * n)


def ideal_behavior(deg):
    th = math.radians(deg)
    return born_behavior(target_state(th).density(), ideal_measurements(th))


@st.composite
def correlator_forms(draw):
    """Valid correlator forms: convex mixtures of the 16 deterministic boxes."""
    w = np.array(draw(st.lists(st.floats(0, 1), min_size=16, max_size=16)))
    if w.sum() == 0:
        w[0] = 1
    w = w / w.sum()
    mA = np.zeros(2)
    mB = np.zeros(2)
    corr = np.zeros((2, 2))
    for k, (a, b) in enumerate(itertools.product(itertools.product((1, -1), repeat=2), repeat=2)):
        c = deterministic_correlators(a, b)
        mA += w[k] * c.mA
        mB += w[k] * c.mB
        corr += w[k] * c.corr
    return CorrelatorForm(mA, mB, corr)


class TestBehaviorFromCounts:
    def test_uniform(self):
        b = behavior_from_counts(uniform_counts())
        assert np.all(b.p == 0.25)

    def test_deterministic_column(self):
        n = np.full((2, 2, 2, 2), 125)
        n[:, :, 0, 0] = 0
        n[0, 0, 0, 0] = 500
        b = behavior_from_counts(CountsRecord(45.0, n, 500))
        assert b.p[0, 0, 0, 0] == 1.0

    def test_empty_setting_names_it(self):
        n = np.full((2, 2, 2, 2), 5)
        n[:, :, 1, 0] = 0
        rec = CountsRecord(45.0, n, 20, counting_mode="poisson")
        with pytest.raises(EmptySettingError) as info:
            behavior_from_counts(rec)
        assert info.value.setting == (1, 0)
        assert "(1, 0)" in str(info.value)

    def test_multinomial_totals_checked(self):
        n = np.full((2, 2, 2, 2), 5)
        n[0, 0, 1, 1] = 6
        with pytest.raises(ValidationError, match="x=1, y=1"):
            CountsRecord(45.0, n, 20)

    def test_sample_can_exceed_quantum_max(self):
        # 500 trials per setting at 45 deg: some seeds land above 2 sqrt 2
        b = ideal_behavior(45)
        values = [tilted_chsh(to_correlators(behavior_from_counts(sample_counts(b, TrialPlan(500, seed=s)))), 0.0)
                  for s in range(20)]
        assert max(values) > 2 * math.sqrt(2)


class TestCorrelators:
    def test_uniform_is_zero(self):
        c = to_correlators(behavior_from_counts(uniform_counts()))
        assert not np.any(c.mA) and not np.any(c.mB) and not np.any(c.corr)

    def test_ideal_45_corr(self):
        c = to_correlators(ideal_behavior(45))
        assert c.corr[0, 0] == pytest.approx(math.cos(math.pi / 4), abs=1e-12)

    def test_deterministic_box(self):
        c = to_correlators(from_correlators(deterministic_correlators((1, 1), (1, 1))))
        assert np.all(c.corr == 1) and np.all(c.mA == 1) and np.all(c.mB == 1)

    def test_zero_form_gives_uniform(self):
        assert np.all(from_correlators(CorrelatorForm.zeros()).p == 0.25)

    def test_all_ones_is_plus_plus(self):
        b = from_correlators(CorrelatorForm(np.ones(2), np.ones(2), np.ones((2, 2))))
        assert np.all(b.p[0, 0] == 1)

    def test_inconsistent_names_cell(self):
        bad = CorrelatorForm(np.array([1.0, 0]), np.array([-1.0, 0]), np.array([[1.0, 0], [0, 0]]))
        with pytest.raises(ValidationError, match=r"x=0, y=0"):
            from_correlators(bad)

    @given(correlator_forms())
    def test_round_trip(self, c):
        back = to_correlators(from_correlators(c))
        assert np.allclose(back.mA, c.mA, atol=1e-12)
        assert np.allclose(back.mB, c.mB, atol=1e-12)
        assert np.allclose(back.corr, c.corr, atol=1e-12)

    @given(correlator_forms())
    def test_from_correlators_is_no_signaling(self, c):
        assert signaling_deficit(from_correlators(c)).max_deficit <= 1e-12

    def test_signaling_marginals_are_averaged(self):
        b = ideal_behavior(40)
        p = b.p.copy()
        p[0, 0, 0, 0] += 0.01
        p[1, 0, 0, 0] -= 0.01
        c = to_correlators(Behavior(p))
        ma = Behavior(p).marginal_a()
        assert c.mA[0] == pytest.approx((ma[0, 0] + ma[0, 1]) / 2, abs=1e-15)


class TestSignaling:
    def test_perturbation_deficit(self):
        b = ideal_behavior(40)
        p = b.p.copy()
        p[0, 0, 0, 0] += 0.01
        p[1, 0, 0, 0] -= 0.01
        rep = signaling_deficit(Behavior(p))
        assert rep.deficit_A[0] == pytest.approx(0.02, abs=1e-12)
        assert rep.max_deficit == pytest.approx(0.02, abs=1e-12)
        assert min(*rep.deficit_A, *rep.deficit_B) >= 0

    @given(st.integers(0, 2 ** 32 - 1))
    def test_born_behaviors_are_no_signaling(self, seed):
        rng = np.random.default_rng(seed)
        rho = random_density_matrix(rng)
        angles = rng.uniform(-math.pi, math.pi, 4)
        settings = [MeasurementSetting(p, i, a) for (p, i), a in zip((("A", 0), ("A", 1), ("B", 0), ("B", 1)), angles)]
        assert signaling_deficit(born_behavior(rho, settings)).max_deficit <= 1e-12


class TestTiltedChsh:
    def test_zero(self):
        assert tilted_chsh(CorrelatorForm.zeros(), 0.7) == 0

    @pytest.mark.parametrize("alpha", [0.0, 0.3, 0.75, 1.5, 1.99])
    def test_local_bound_over_deterministic_strategies(self, alpha):
        values = [tilted_chsh(deterministic_correlators(a, b), alpha)
                  for a in itertools.product((1, -1), repeat=2)
                  for b in itertools.product((1, -1), repeat=2)]
        assert max(values) == pytest.approx(local_bound(alpha), abs=1e-12)
        assert tilted_chsh(deterministic_correlators((1, 1), (1, 1)), alpha) == pytest.approx(2 + alpha)

    def test_ideal_45(self):
        assert tilted_chsh(to_correlators(ideal_behavior(45)), 0.0) == pytest.approx(2 * math.sqrt(2), abs=1e-12)

    @pytest.mark.parametrize("deg", GRID_DEG)
    def test_ideal_grid_reaches_quantum_max(self, deg):
        alpha = alpha_for_theta(math.radians(deg))
        assert abs(tilted_chsh(to_correlators(ideal_behavior(deg)), alpha) - quantum_max(alpha)) <= 1e-9

    @given(st.integers(0, 2 ** 32 - 1), st.floats(0, 1.99))
    def test_born_never_exceeds_quantum_max(self, seed, alpha):
        rng = np.random.default_rng(seed)
        rho = random_density_matrix(rng, rank=int(rng.integers(1, 5)))
        angles = rng.uniform(-math.pi, math.pi, 4)
        settings = [MeasurementSetting(p, i, a) for (p, i), a in zip((("A", 0), ("A", 1), ("B", 0), ("B", 1)), angles)]
        value = tilted_chsh(to_correlators(born_behavior(rho, settings)), alpha)
        assert value <= quantum_max(alpha) + 1e-9

    def test_alpha_domain(self):
        with pytest.raises(DomainError):
            tilted_chsh(CorrelatorForm.zeros(), 2.0)


class TestAngles:
    def test_45(self):
        th = math.pi / 4
        assert alpha_for_theta(th) == 0.0
        assert quantum_max(0.0) == pytest.approx(2 * math.sqrt(2))
        assert mu_for_theta(th) == pytest.approx(math.pi / 4, abs=1e-15)

    def test_30(self):
        a = alpha_for_theta(math.radians(30))
        assert a == pytest.approx(2 / math.sqrt(7), abs=1e-12)
        assert quantum_max(a) == pytest.approx(8 / math.sqrt(7), abs=1e-12)

    def test_epsilon_zero_at_max(self):
        a = alpha_for_theta(math.radians(35))
        assert epsilon_deviation(quantum_max(a), a) == 0

    @pytest.mark.parametrize("theta", [0.0, -0.1, math.pi / 4 + 1e-6, math.pi])
    def test_domain(self, theta):
        for fn in (alpha_for_theta, mu_for_theta):
            with pytest.raises(DomainError):
                fn(theta)

    @given(st.floats(1e-4, math.pi / 4), st.floats(1e-4, math.pi / 4))
    def test_alpha_strictly_decreasing(self, t1, t2):
        if abs(t1 - t2) < 1e-9:
            return
        lo, hi = min(t1, t2), max(t1, t2)
        assert alpha_for_theta(lo) > alpha_for_theta(hi)
