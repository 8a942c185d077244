"""Two-input/two-output bipartite boxes and the tilted-CHSH functional.

Arrays are indexed ``[a, b, x, y]`` where the outcome index 0 means +1 and
1 means -1 (see :data:`OUTCOMES`), and ``x, y`` are the setting bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptySettingError, ValidationError

OUTCOMES = (1, -1)
OUTCOME_LABELS = ("+", "-")
_SIGN = np.array(OUTCOMES, dtype=float)

# sign tensors: _SA[a, b] = a, _SB[a, b] = b, _SAB[a, b] = a*b
_SA = np.broadcast_to(_SIGN[:, None], (2, 2))
_SB = np.broadcast_to(_SIGN[None, :], (2, 2))
_SAB = np.outer(_SIGN, _SIGN)


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Behavior:
    """Conditional probabilities ``p[a, b, x, y] = P(a, b | x, y)``."""

    p: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p)
        if p.shape != (2, 2, 2, 2):
            raise ValidationError(f"behavior must have shape (2,2,2,2), got {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValidationError("behavior entries must lie in [0, 1]")
        sums = p.sum(axis=(0, 1))
        if np.max(np.abs(sums - 1)) > 1e-12:
            raise ValidationError(f"behavior is not normalised per setting: sums {sums.tolist()}")
        object.__setattr__(self, "p", p)

    def __eq__(self, other):
        return isinstance(other, Behavior) and np.array_equal(self.p, other.p)

    def vector(self) -> np.ndarray:
        """The 16 probabilities in ``[a, b, x, y]`` row-major order."""
        return self.p.reshape(-1).copy()

    def marginal_a(self) -> np.ndarray:
        """``<A_x>_y`` as a ``(2, 2)`` array indexed ``[x, y]``."""
        return np.einsum("ab,abxy->xy", _SA, self.p)

    def marginal_b(self) -> np.ndarray:
        """``<B_y>_x`` as a ``(2, 2)`` array indexed ``[x, y]``."""
        return np.einsum("ab,abxy->xy", _SB, self.p)


@dataclass(frozen=True, eq=False)
class CorrelatorForm:
    mA: np.ndarray
    mB: np.ndarray
    corr: np.ndarray

    def __post_init__(self):
        mA, mB, corr = _frozen(self.mA), _frozen(self.mB), _frozen(self.corr)
        if mA.shape != (2,) or mB.shape != (2,) or corr.shape != (2, 2):
            raise ValidationError("correlator form needs mA[2], mB[2], corr[2][2]")
        if max(np.max(np.abs(mA)), np.max(np.abs(mB)), np.max(np.abs(corr))) > 1 + 1e-9:
            raise ValidationError("correlators and marginals must lie in [-1, 1]")
        object.__setattr__(self, "mA", mA)
        object.__setattr__(self, "mB", mB)
        object.__setattr__(self, "corr", corr)

    def __eq__(self, other):
        return (isinstance(other, CorrelatorForm) and np.array_equal(self.mA, other.mA)
                and np.array_equal(self.mB, other.mB) and np.array_equal(self.corr, other.corr))

    @classmethod
    def zeros(cls) -> "CorrelatorForm":
        return cls(np.zeros(2), np.zeros(2), np.zeros((2, 2)))

    def as_dict(self) -> dict:
        return {"mA": self.mA.tolist(), "mB": self.mB.tolist(), "corr": self.corr.tolist()}


@dataclass(frozen=True, eq=False)
class CountsRecord:
    """Raw coincidence counts ``n[a, b, x, y]`` for the four Bell settings."""

    theta_deg: float
    n: np.ndarray
    trials_per_setting: int
    counting_mode: str = "multinomial"
    seed: int | None = None

    def __post_init__(self):
        n = np.asarray(self.n)
        if n.shape != (2, 2, 2, 2):
            raise ValidationError(f"counts must have shape (2,2,2,2), got {n.shape}")
        if not np.all(np.equal(np.mod(n, 1), 0)) or np.any(n < 0):
            raise ValidationError("counts must be nonnegative integers")
        object.__setattr__(self, "n", _frozen(n, dtype=np.int64))
        if self.trials_per_setting < 1:
            raise ValidationError("trials_per_setting must be at least 1")
        if self.counting_mode not in ("multinomial", "poisson"):
            raise ValidationError(f"unknown counting mode {self.counting_mode!r}")
        if self.counting_mode == "multinomial":
            totals = self.n.sum(axis=(0, 1))
            for x in range(2):
                for y in range(2):
                    if totals[x, y] != self.trials_per_setting:
                        raise ValidationError(
                            f"setting (x={x}, y={y}) has {totals[x, y]} counts, "
                            f"declared trials_per_setting={self.trials_per_setting}")

    def __eq__(self, other):
        return (isinstance(other, CountsRecord) and np.array_equal(self.n, other.n)
                and np.array_equal(self.theta_deg, other.theta_deg, equal_nan=True)
                and self.trials_per_setting == other.trials_per_setting
                and self.counting_mode == other.counting_mode and self.seed == other.seed)


@dataclass(frozen=True)
class SignalingReport:
    deficit_A: tuple[float, float]
    deficit_B: tuple[float, float]
    marginals_A: tuple[tuple[float, float], tuple[float, float]]
    marginals_B: tuple[tuple[float, float], tuple[float, float]]

    @property
    def max_deficit(self) -> float:
        return max(*self.deficit_A, *self.deficit_B)


def behavior_from_counts(counts: CountsRecord) -> Behavior:
    n = counts.n.astype(float)
    totals = n.sum(axis=(0, 1))
    for x in range(2):
        for y in range(2):
            if totals[x, y] <= 0:
                raise EmptySettingError((x, y))
    return Behavior(n / totals)


def to_correlators(b: Behavior) -> CorrelatorForm:
    """Marginals and correlators; signaling marginals are averaged uniformly."""
    corr = np.einsum("ab,abxy->xy", _SAB, b.p)
    mA = b.marginal_a().mean(axis=1)
    mB = b.marginal_b().mean(axis=0)
    return CorrelatorForm(mA, mB, corr)


def from_correlators(c: CorrelatorForm, clip_tol: float = 1e-8) -> Behavior:
    """Inverse of :func:`to_correlators` on the no-signaling set.

    Implied probabilities in ``[-clip_tol, 0)`` (solver round-off) are
    clipped to zero and the setting renormalised.
    """
    p = (1 + _SA[:, :, None, None] * c.mA[None, None, :, None]
         + _SB[:, :, None, None] * c.mB[None, None, None, :]
         + _SAB[:, :, None, None] * c.corr[None, None, :, :]) / 4
    worst = np.unravel_index(np.argmin(p), p.shape)
    if p[worst] < -clip_tol:
        a, bb, x, y = worst
        raise ValidationError(
            f"inconsistent correlators: P(a={OUTCOMES[a]:+d}, b={OUTCOMES[bb]:+d} | "
            f"x={x}, y={y}) = {p[worst]:.3e} < 0")
    if np.any(p < 0):
        p = np.clip(p, 0, None)
        p = p / p.sum(axis=(0, 1))
    return Behavior(np.clip(p, 0, 1))


def signaling_deficit(b: Behavior) -> SignalingReport:
    ma, mb = b.marginal_a(), b.marginal_b()
    return SignalingReport(
        deficit_A=(float(abs(ma[0, 0] - ma[0, 1])), float(abs(ma[1, 0] - ma[1, 1]))),
        deficit_B=(float(abs(mb[0, 0] - mb[1, 0])), float(abs(mb[0, 1] - mb[1, 1]))),
        marginals_A=tuple(tuple(float(v) for v in row) for row in ma),
        marginals_B=tuple(tuple(float(v) for v in row) for row in mb.T),
    )


def tilted_chsh(c: CorrelatorForm, alpha: float) -> float:
    if not 0 <= alpha < 2:
        raise DomainError(f"alpha must lie in [0, 2), got {alpha}")
    k = c.corr
    return float(alpha * c.mA[0] + k[0, 0] + k[0, 1] + k[1, 0] - k[1, 1])


def _check_theta(theta: float) -> None:
    if not (0 < theta <= math.pi / 4 + 1e-15):
        raise DomainError(f"theta must lie in (0, pi/4], got {theta}")


def alpha_for_theta(theta: float) -> float:
    """Tilt for which ``cos(theta)|00> + sin(theta)|11>`` is the unique maximiser."""
    _check_theta(theta)
    if abs(theta - math.pi / 4) < 1e-15:
        return 0.0
    return 2 / math.sqrt(1 + 2 * math.tan(2 * theta) ** 2)


def mu_for_theta(theta: float) -> float:
    _check_theta(theta)
    return math.atan(math.sin(2 * theta))


def quantum_max(alpha: float) -> float:
    return math.sqrt(8 + 2 * alpha ** 2)


def local_bound(alpha: float) -> float:
    return 2 + alpha


def epsilon_deviation(value: float, alpha: float) -> float:
    return quantum_max(alpha) - value


def deterministic_correlators(a: tuple[int, int], b: tuple[int, int]) -> CorrelatorForm:
    """Correlators of the local strategy ``A_x = a[x], B_y = b[y]`` (entries +-1)."""
    a_, b_ = np.asarray(a, float), np.asarray(b, float)
    return CorrelatorForm(a_, b_, np.outer(a_, b_))
