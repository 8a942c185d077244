"""Reading and writing per-angle data files.

One JSON document per angle::

    {"metadata": {"theta_deg": 45.0, "trials_per_setting": 500,
                  "counting_mode": "multinomial", "seed": 7, "infinite_sample": false},
     "selftest_settings": [{"x": 0, "y": 0, "counts": {"++": n, "+-": n, "-+": n, "--": n}}, ...],
     "tomo_settings": [{"basis": "xx", "counts": {...}}, ...]}

Every setting appears exactly once (4 Bell settings, 9 Pauli pairs).  With
``infinite_sample`` true, each setting carries ``"probabilities"`` (same
four keys, floats) instead of integer ``"counts"``.  Outcome labels accept
either ASCII ``-`` or the Unicode minus sign on input; output uses ASCII.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .bell import Behavior, CountsRecord, behavior_from_counts
from .errors import ValidationError
from .tomography import TOMO_BASES, TomographyRecord

CELLS = ("++", "+-", "-+", "--")  # row-major [a, b] with index 0 meaning +1
FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """Self-testing and tomography data for one angle, sampled or exact."""

    theta_deg: float
    trials_per_setting: int
    counting_mode: str
    seed: int | None
    selftest: CountsRecord | None = None
    tomo: TomographyRecord | None = None
    exact_behavior: Behavior | None = None
    exact_tomo: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.theta_deg <= 45:
            raise ValidationError(f"theta_deg {self.theta_deg} outside (0, 45]")
        sampled = self.selftest is not None and self.tomo is not None
        exact = self.exact_behavior is not None and self.exact_tomo is not None
        if sampled == exact:
            raise ValidationError("data needs either counts or exact probabilities for both parts")

    @property
    def infinite_sample(self) -> bool:
        return self.exact_behavior is not None

    def behavior(self) -> Behavior:
        return self.exact_behavior if self.infinite_sample else behavior_from_counts(self.selftest)

    def setting_totals(self) -> np.ndarray:
        """Trials per Bell setting ``[x, y]`` (the nominal count when exact)."""
        if self.infinite_sample:
            return np.full((2, 2), float(self.trials_per_setting))
        return self.selftest.n.sum(axis=(0, 1)).astype(float)


def _cells(arr) -> dict:
    return {label: arr[i // 2, i % 2].item() for i, label in enumerate(CELLS)}


def _read_cells(d, what: str, as_int: bool) -> np.ndarray:
    if not isinstance(d, dict):
        raise ValidationError(f"{what}: outcome table must be an object")
    norm = {str(k).replace("−", "-"): v for k, v in d.items()}
    if sorted(norm) != sorted(CELLS):
        raise ValidationError(f"{what}: outcome keys must be {list(CELLS)}, got {sorted(d)}")
    out = np.zeros((2, 2), dtype=np.int64 if as_int else float)
    for i, label in enumerate(CELLS):
        v = norm[label]
        if as_int:
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ValidationError(f"{what}: count {label!r} must be a nonnegative integer, got {v!r}")
        elif isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
            raise ValidationError(f"{what}: probability {label!r} must be a finite number >= 0")
        out[i // 2, i % 2] = v
    return out


def data_to_json(data: ExperimentData) -> dict:
    meta = {
        "format_version": FORMAT_VERSION,
        "theta_deg": data.theta_deg,
        "trials_per_setting": data.trials_per_setting,
        "counting_mode": data.counting_mode,
        "seed": data.seed,
        "infinite_sample": data.infinite_sample,
    }
    key = "probabilities" if data.infinite_sample else "counts"
    selftest, tomo = [], []
    for x in range(2):
        for y in range(2):
            arr = data.exact_behavior.p[:, :, x, y] if data.infinite_sample else data.selftest.n[:, :, x, y]
            selftest.append({"x": x, "y": y, key: _cells(arr)})
    for s, basis in enumerate(TOMO_BASES):
        arr = data.exact_tomo[s] if data.infinite_sample else data.tomo.n[s]
        tomo.append({"basis": basis, key: _cells(arr)})
    return {"metadata": meta, "selftest_settings": selftest, "tomo_settings": tomo}


def dumps_data(data: ExperimentData) -> str:
    return json.dumps(data_to_json(data), indent=2, sort_keys=False) + "\n"


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ValidationError(f"{where}: missing {key!r}")
    return d[key]


def data_from_json(doc: dict, source: str = "data") -> ExperimentData:
    meta = _require(doc, "metadata", source)
    theta = float(_require(meta, "theta_deg", f"{source} metadata"))
    trials = _require(meta, "trials_per_setting", f"{source} metadata")
    if isinstance(trials, bool) or not isinstance(trials, int):
        raise ValidationError(f"{source}: trials_per_setting must be an integer")
    mode = meta.get("counting_mode", "multinomial")
    seed = meta.get("seed")
    exact = bool(meta.get("infinite_sample", False))
    key = "probabilities" if exact else "counts"

    bell = np.zeros((2, 2, 2, 2), dtype=float if exact else np.int64)
    seen = set()
    for i, entry in enumerate(_require(doc, "selftest_settings", source)):
        where = f"{source} selftest_settings[{i}]"
        x, y = _require(entry, "x", where), _require(entry, "y", where)
        if x not in (0, 1) or y not in (0, 1) or (x, y) in seen:
            raise ValidationError(f"{where}: bad or repeated setting (x={x}, y={y})")
        seen.add((x, y))
        bell[:, :, x, y] = _read_cells(_require(entry, key, where), where, not exact)
    if len(seen) != 4:
        raise ValidationError(f"{source}: need all four self-testing settings, got {sorted(seen)}")

    tomo = np.zeros((9, 2, 2), dtype=float if exact else np.int64)
    bases = set()
    for i, entry in enumerate(_require(doc, "tomo_settings", source)):
        where = f"{source} tomo_settings[{i}]"
        basis = _require(entry, "basis", where)
        if basis not in TOMO_BASES or basis in bases:
            raise ValidationError(f"{where}: bad or repeated basis {basis!r}")
        bases.add(basis)
        tomo[TOMO_BASES.index(basis)] = _read_cells(_require(entry, key, where), where, not exact)
    if len(bases) != 9:
        raise ValidationError(f"{source}: need all nine tomography settings, got {sorted(bases)}")

    if exact:
        return ExperimentData(theta, trials, mode, seed, exact_behavior=Behavior(bell), exact_tomo=tomo)
    return ExperimentData(
        theta, trials, mode, seed,
        selftest=CountsRecord(theta, bell, trials, mode, seed),
        tomo=TomographyRecord(tomo, trials, mode, seed))


def read_data(path: str) -> ExperimentData:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    return data_from_json(doc, source=os.path.basename(path))


def data_filename(theta_deg: float) -> str:
    return f"theta_{theta_deg:g}.json"


def write_data(data: ExperimentData, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, data_filename(data.theta_deg))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_data(data))
    return path


def read_directory(directory: str) -> list[tuple[ExperimentData, str]]:
    """``(data, path)`` for every ``*.json`` file in ``directory``, ordered by angle."""
    if not os.path.isdir(directory):
        raise ValidationError(f"input directory {directory!r} does not exist")
    items = []
    for name in sorted(os.listdir(directory)):
        if name.endswith(".json"):
            path = os.path.join(directory, name)
            items.append((read_data(path), path))
    if not items:
        raise ValidationError(f"no data files in {directory!r}")
    thetas = [d.theta_deg for d, _ in items]
    if len(set(thetas)) != len(thetas):
        raise ValidationError(f"{directory!r} holds several files for one angle")
    return sorted(items, key=lambda item: item[0].theta_deg)
