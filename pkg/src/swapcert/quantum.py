"""Exact two-qubit simulation: target states, x-z plane measurements, sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bell import OUTCOMES, Behavior, CountsRecord, _check_theta, mu_for_theta
from .errors import DomainError, ValidationError

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "x": SX, "y": SY, "z": SZ}


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray  # basis order |00>, |01>, |10>, |11>

    def __post_init__(self):
        psi = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if psi.shape != (4,):
            raise ValidationError("a two-qubit state needs 4 amplitudes")
        if abs(np.vdot(psi, psi).real - 1) > 1e-12:
            raise ValidationError("state is not normalised")
        psi.setflags(write=False)
        object.__setattr__(self, "amplitudes", psi)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        d = rho.shape[0]
        if rho.shape != (d, d) or d not in (2, 4):
            raise ValidationError(f"density matrix must be 2x2 or 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1) > 1e-12:
            raise ValidationError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(rho)[0] < -1e-10:
            raise ValidationError("density matrix has a negative eigenvalue")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class MeasurementSetting:
    """A +-1 observable ``cos(angle) sigma_z + sin(angle) sigma_x`` on one party."""

    party: str
    index: int
    angle: float

    def __post_init__(self):
        if self.party not in ("A", "B") or self.index not in (0, 1):
            raise ValidationError(f"bad setting label {self.party}{self.index}")

    def observable(self) -> np.ndarray:
        return math.cos(self.angle) * SZ + math.sin(self.angle) * SX

    def projector(self, outcome: int) -> np.ndarray:
        return (I2 + outcome * self.observable()) / 2


@dataclass(frozen=True)
class NoiseModel:
    depolarizing_p: float = 1.0
    offsets_A: tuple[float, float] = (0.0, 0.0)
    offsets_B: tuple[float, float] = (0.0, 0.0)
    xi: float = 0.0  # global rotation of every measurement axis

    def __post_init__(self):
        if not 0 <= self.depolarizing_p <= 1:
            raise DomainError(f"depolarizing_p must lie in [0, 1], got {self.depolarizing_p}")

    def perturb(self, settings):
        out = []
        for s in settings:
            offs = self.offsets_A if s.party == "A" else self.offsets_B
            out.append(MeasurementSetting(s.party, s.index, s.angle + offs[s.index] + self.xi))
        return tuple(out)


@dataclass(frozen=True)
class TrialPlan:
    trials_per_setting: int
    counting_mode: str = "multinomial"
    seed: int = 0

    def __post_init__(self):
        if self.trials_per_setting < 1:
            raise ValidationError("trials_per_setting must be at least 1")
        if self.counting_mode not in ("multinomial", "poisson"):
            raise ValidationError(f"unknown counting mode {self.counting_mode!r}")


def target_state(theta: float) -> PureState:
    _check_theta(theta)
    return PureState(np.array([math.cos(theta), 0, 0, math.sin(theta)]))


def ideal_measurements(theta: float) -> tuple[MeasurementSetting, ...]:
    """``(A0, A1, B0, B1)`` maximising the tilted-CHSH value for ``theta``."""
    mu = mu_for_theta(theta)
    return (
        MeasurementSetting("A", 0, 0.0),
        MeasurementSetting("A", 1, math.pi / 2),
        MeasurementSetting("B", 0, mu),
        MeasurementSetting("B", 1, -mu),
    )


def _split(settings):
    a = {s.index: s for s in settings if s.party == "A"}
    b = {s.index: s for s in settings if s.party == "B"}
    if sorted(a) != [0, 1] or sorted(b) != [0, 1]:
        raise ValidationError("need exactly A0, A1, B0, B1")
    return a, b


def born_behavior(rho: DensityMatrix, settings) -> Behavior:
    a_set, b_set = _split(settings)
    p = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            for ia, a in enumerate(OUTCOMES):
                for ib, b in enumerate(OUTCOMES):
                    proj = np.kron(a_set[x].projector(a), b_set[y].projector(b))
                    p[ia, ib, x, y] = np.trace(rho.matrix @ proj).real
    p = np.clip(p, 0, 1)
    return Behavior(p / p.sum(axis=(0, 1)))


def apply_depolarizing(rho: DensityMatrix, p: float) -> DensityMatrix:
    if not 0 <= p <= 1:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    d = rho.dim
    return DensityMatrix(p * rho.matrix + (1 - p) * np.eye(d) / d)


def fidelity_pure(rho: DensityMatrix, psi: PureState) -> float:
    v = psi.amplitudes
    return float(np.vdot(v, rho.matrix @ v).real)


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for the stream ``key`` spawned from ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def setting_rng(seed: int, x: int, y: int) -> np.random.Generator:
    """Independent PCG64 stream for Bell setting ``(x, y)``.

    The stream depends only on ``(seed, x, y)``, so settings can be drawn in
    any order or concurrently with identical results.
    """
    return stream_rng(seed, x, y)


def sample_counts(b: Behavior, plan: TrialPlan, theta_deg: float = math.nan) -> CountsRecord:
    n = np.zeros((2, 2, 2, 2), dtype=np.int64)
    for x in range(2):
        for y in range(2):
            rng = setting_rng(plan.seed, x, y)
            probs = b.p[:, :, x, y].reshape(-1)
            if plan.counting_mode == "multinomial":
                draw = rng.multinomial(plan.trials_per_setting, probs / probs.sum())
            else:
                draw = rng.poisson(plan.trials_per_setting * probs)
            n[:, :, x, y] = draw.reshape(2, 2)
    return CountsRecord(theta_deg, n, plan.trials_per_setting, plan.counting_mode, plan.seed)


def random_density_matrix(rng: np.random.Generator, dim: int = 4, rank: int | None = None) -> DensityMatrix:
    """Ginibre-distributed mixed state, used by property tests and demos."""
    rank = rank or dim
    G = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = G @ G.conj().T
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix(rho / np.trace(rho).real)
