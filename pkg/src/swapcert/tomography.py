"""Two-qubit Pauli tomography: expectations, linear inversion, physical projection.

Tomography data uses nine joint settings labelled by a Pauli pair
(``"xx"``, ``"xy"``, ..., ``"zz"``), each with four outcome cells indexed
``[a, b]`` in the same ``(+1, -1)`` order as :mod:`swapcert.bell`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bell import OUTCOMES
from .errors import DomainError, EmptySettingError, ValidationError
from .quantum import (I2, PAULI, SX, SZ, DensityMatrix, TrialPlan, fidelity_pure, stream_rng,
                      target_state)

LABELS = "Ixyz"
AXES = "xyz"
TOMO_BASES = tuple(i + j for i in AXES for j in AXES)
_SIGN = np.array(OUTCOMES, dtype=float)


@dataclass(frozen=True, eq=False)
class PauliExpectations:
    """``values[i, j] = <sigma_i (x) sigma_j>`` over ``LABELS``; ``values[0, 0]`` is 1."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (4, 4):
            raise ValidationError(f"Pauli expectations must be 4x4, got {v.shape}")
        v[0, 0] = 1.0
        if np.max(np.abs(v)) > 1 + 1e-9:
            raise ValidationError("Pauli expectations must lie in [-1, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, label: str) -> float:
        """``e["xz"]`` is ``<sigma_x (x) sigma_z>``; ``e["zI"]`` a single-party term."""
        return float(self.values[LABELS.index(label[0]), LABELS.index(label[1])])

    def as_dict(self) -> dict[str, float]:
        return {i + j: self[i + j] for i in LABELS for j in LABELS if i + j != "II"}


@dataclass(frozen=True, eq=False)
class TomographyRecord:
    """Counts ``n[s, a, b]`` for the nine settings of :data:`TOMO_BASES`."""

    n: np.ndarray
    trials_per_setting: int
    counting_mode: str = "multinomial"
    seed: int | None = None

    def __post_init__(self):
        n = np.asarray(self.n)
        if n.shape != (9, 2, 2):
            raise ValidationError(f"tomography counts must have shape (9,2,2), got {n.shape}")
        if not np.all(np.equal(np.mod(n, 1), 0)) or np.any(n < 0):
            raise ValidationError("counts must be nonnegative integers")
        n = np.array(n, dtype=np.int64)
        n.setflags(write=False)
        object.__setattr__(self, "n", n)
        if self.counting_mode == "multinomial":
            for s, basis in enumerate(TOMO_BASES):
                if n[s].sum() != self.trials_per_setting:
                    raise ValidationError(
                        f"tomography setting {basis!r} has {n[s].sum()} counts, "
                        f"declared trials_per_setting={self.trials_per_setting}")

    def __eq__(self, other):
        return (isinstance(other, TomographyRecord) and np.array_equal(self.n, other.n)
                and self.trials_per_setting == other.trials_per_setting
                and self.counting_mode == other.counting_mode and self.seed == other.seed)


@dataclass(frozen=True)
class MiscalibrationDemo:
    p: float
    xi: float
    F_true: float
    F_reported: float

    @property
    def absurd(self) -> bool:
        return self.F_reported > 1

    def as_dict(self) -> dict:
        return {"p": self.p, "xi_rad": self.xi, "xi_deg": math.degrees(self.xi),
                "F_true": self.F_true, "F_reported": self.F_reported,
                "overestimate": self.F_reported - self.F_true, "absurd": self.absurd}


def _pauli(label: str) -> np.ndarray:
    return PAULI[label]


def expectations_from_state(rho: DensityMatrix) -> PauliExpectations:
    if rho.dim != 4:
        raise ValidationError("two-qubit tomography needs a 4x4 density matrix")
    v = np.empty((4, 4))
    for i, a in enumerate(LABELS):
        for j, b in enumerate(LABELS):
            v[i, j] = np.trace(rho.matrix @ np.kron(_pauli(a), _pauli(b))).real
    return PauliExpectations(v)


def miscalibrated_axes(xi: float = 0.0) -> dict[str, np.ndarray]:
    """Observables actually measured when the labelled axes are rotated by ``xi``.

    ``z`` and ``x`` tilt towards each other in the x-z plane; ``y`` is untouched.
    """
    c, s = math.cos(xi), math.sin(xi)
    return {"x": c * SX + s * SZ, "y": PAULI["y"], "z": c * SZ + s * SX}


def tomography_probabilities(rho: DensityMatrix, xi: float = 0.0) -> np.ndarray:
    """Born probabilities ``[s, a, b]`` of the nine settings (both parties rotated by ``xi``)."""
    if rho.dim != 4:
        raise ValidationError("two-qubit tomography needs a 4x4 density matrix")
    axes = miscalibrated_axes(xi)
    p = np.empty((9, 2, 2))
    for s, basis in enumerate(TOMO_BASES):
        oa, ob = axes[basis[0]], axes[basis[1]]
        for ia, a in enumerate(OUTCOMES):
            for ib, b in enumerate(OUTCOMES):
                proj = np.kron((I2 + a * oa) / 2, (I2 + b * ob) / 2)
                p[s, ia, ib] = np.trace(rho.matrix @ proj).real
    p = np.clip(p, 0, 1)
    return p / p.sum(axis=(1, 2), keepdims=True)


def sample_tomography(probs: np.ndarray, plan: TrialPlan) -> TomographyRecord:
    """Draw counts per setting; stream ``(3, s)`` keeps them apart from the Bell streams."""
    n = np.zeros((9, 2, 2), dtype=np.int64)
    for s in range(9):
        rng = stream_rng(plan.seed, 3, s)
        cell = probs[s].reshape(-1)
        if plan.counting_mode == "multinomial":
            draw = rng.multinomial(plan.trials_per_setting, cell / cell.sum())
        else:
            draw = rng.poisson(plan.trials_per_setting * cell)
        n[s] = draw.reshape(2, 2)
    return TomographyRecord(n, plan.trials_per_setting, plan.counting_mode, plan.seed)


def expectations_from_probabilities(probs: np.ndarray) -> PauliExpectations:
    """Joint terms per setting; single-party terms averaged over the partner's three settings."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (9, 2, 2):
        raise ValidationError(f"tomography probabilities must have shape (9,2,2), got {probs.shape}")
    v = np.zeros((4, 4))
    v[0, 0] = 1.0
    for s, basis in enumerate(TOMO_BASES):
        i, j = LABELS.index(basis[0]), LABELS.index(basis[1])
        q = probs[s]
        v[i, j] = _SIGN @ q @ _SIGN
        v[i, 0] += (_SIGN @ q.sum(axis=1)) / 3
        v[0, j] += (_SIGN @ q.sum(axis=0)) / 3
    return PauliExpectations(v)


def expectations_from_counts(record: TomographyRecord) -> PauliExpectations:
    n = record.n.astype(float)
    totals = n.sum(axis=(1, 2))
    for s, basis in enumerate(TOMO_BASES):
        if totals[s] <= 0:
            raise EmptySettingError(basis, "tomography setting")
    return expectations_from_probabilities(n / totals[:, None, None])


def linear_inversion(e: PauliExpectations) -> np.ndarray:
    """``(1/4) sum_ij e_ij sigma_i (x) sigma_j``; Hermitian with unit trace, maybe not PSD."""
    rho = np.zeros((4, 4), dtype=complex)
    for i, a in enumerate(LABELS):
        for j, b in enumerate(LABELS):
            rho += e.values[i, j] * np.kron(_pauli(a), _pauli(b))
    rho /= 4
    return (rho + rho.conj().T) / 2


def project_simplex(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``w`` onto the probability simplex (sort-based)."""
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(w) + 1)
    rho = np.nonzero(u - (css - 1) / k > 0)[0][-1]
    tau = (css[rho] - 1) / (rho + 1)
    return np.clip(w - tau, 0, None)


def project_to_physical(H: np.ndarray) -> DensityMatrix:
    """Frobenius-nearest density matrix to the Hermitian, unit-trace ``H``."""
    H = np.asarray(H, dtype=complex)
    if H.shape[0] != H.shape[1] or np.max(np.abs(H - H.conj().T)) > 1e-9:
        raise ValidationError("projection needs a Hermitian matrix")
    w, V = np.linalg.eigh((H + H.conj().T) / 2)
    lam = project_simplex(w)
    rho = (V * lam) @ V.conj().T
    return DensityMatrix((rho + rho.conj().T) / 2)


def reconstruct(e: PauliExpectations) -> DensityMatrix:
    return project_to_physical(linear_inversion(e))


def tomography_fidelity(rho: DensityMatrix, theta: float) -> float:
    return fidelity_pure(rho, target_state(theta))


# -- single-qubit false-positive construction ---------------------------------

def _demo_target() -> np.ndarray:
    return np.array([math.cos(math.pi / 8), math.sin(math.pi / 8)], dtype=complex)


def miscalibration_demo(p: float, xi: float) -> MiscalibrationDemo:
    """Single-qubit tomography of a depolarised state with rotated x and z axes.

    The apparatus reports Bloch components from the rotated observables while
    the analyst inverts them as if they were the calibrated Paulis; no
    positivity projection is applied, so the reported fidelity can exceed 1.
    """
    if not 0 <= p <= 1:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    if not 0 <= xi < math.pi / 2:
        raise DomainError(f"xi must lie in [0, pi/2), got {xi}")
    phi = _demo_target()
    rho = np.outer(phi, phi.conj())
    prepared = p * rho + (1 - p) * I2 / 2
    measured = miscalibrated_axes(xi)
    bloch = {a: float(np.trace(prepared @ measured[a]).real) for a in AXES}
    reported = (I2 + sum(bloch[a] * PAULI[a] for a in AXES)) / 2
    f_true = float(np.vdot(phi, prepared @ phi).real)
    f_reported = float(np.vdot(phi, reported @ phi).real)
    return MiscalibrationDemo(p=p, xi=xi, F_true=f_true, F_reported=f_reported)


def miscalibration_closed_form(p: float, xi: float) -> float:
    return (1 + p * (math.sin(xi) + math.cos(xi))) / 2


__all__ = [
    "AXES", "LABELS", "TOMO_BASES", "MiscalibrationDemo", "PauliExpectations",
    "TomographyRecord", "expectations_from_counts", "expectations_from_probabilities",
    "expectations_from_state", "linear_inversion", "miscalibrated_axes", "miscalibration_closed_form",
    "miscalibration_demo", "project_simplex", "project_to_physical", "reconstruct",
    "sample_tomography", "tomography_fidelity", "tomography_probabilities",
]
