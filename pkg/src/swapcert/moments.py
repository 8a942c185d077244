"""Operator words, NPA moment matrices and localizing matrices.

Generators ``A0, A1`` (Alice) and ``B0..B3`` (Bob) are Hermitian involutions;
Alice's letters commute with Bob's.  Moments are taken real, so a word and
its adjoint (reversal) share one variable.  ``B2`` and ``B3`` are the
Hermitian polar factors of ``B0 + B1`` and ``B0 - B1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .bell import CorrelatorForm, _check_theta, mu_for_theta
from .errors import SchemaError, ValidationError
from .quantum import I2, SX, SZ

A_LETTERS = ("A0", "A1")
B_LETTERS = ("B0", "B1", "B2", "B3")
GENERATORS = A_LETTERS + B_LETTERS

SCHEMA_VERSION = 1
TAG_Z = "B2(B0+B1)"
TAG_X = "B3(B0-B1)"


@dataclass(frozen=True, order=True)
class OperatorWord:
    """A reduced word: Alice's letters (indices into A0, A1) then Bob's (B0..B3)."""

    a: tuple[int, ...] = ()
    b: tuple[int, ...] = ()

    def __str__(self) -> str:
        letters = [f"A{i}" for i in self.a] + [f"B{i}" for i in self.b]
        return " ".join(letters) if letters else "1"

    def __repr__(self) -> str:
        return f"OperatorWord({str(self)!r})"

    @property
    def is_identity(self) -> bool:
        return not self.a and not self.b

    def letters(self) -> tuple[str, ...]:
        return tuple(f"A{i}" for i in self.a) + tuple(f"B{i}" for i in self.b)

    def adjoint(self) -> "OperatorWord":
        return OperatorWord(self.a[::-1], self.b[::-1])


IDENTITY = OperatorWord()


def parse_letters(text: str | Iterable[str]) -> list[str]:
    if isinstance(text, str):
        text = text.replace("*", " ").split()
    letters = [t for t in text if t != "1"]
    for t in letters:
        if t not in GENERATORS:
            raise ValidationError(f"unknown generator {t!r}")
    return letters


def _reduce(seq: Iterable[int]) -> tuple[int, ...]:
    stack: list[int] = []
    for s in seq:
        if stack and stack[-1] == s:
            stack.pop()
        else:
            stack.append(s)
    return tuple(stack)


def reduce_word(letters) -> OperatorWord:
    """Commute Alice's letters to the left and cancel squares, keeping orientation."""
    letters = parse_letters(letters)
    a = _reduce(int(t[1]) for t in letters if t[0] == "A")
    b = _reduce(int(t[1]) for t in letters if t[0] == "B")
    return OperatorWord(a, b)


def canonicalize(letters) -> OperatorWord:
    """Reduced word, identified with its adjoint (lexicographically smaller wins)."""
    w = reduce_word(letters.letters() if isinstance(letters, OperatorWord) else letters)
    return min(w, w.adjoint())


def word(text: str) -> OperatorWord:
    return canonicalize(text)


KNOWN_WORDS = tuple(word(t) for t in (
    "A0", "A1", "B0", "B1", "A0 B0", "A0 B1", "A1 B0", "A1 B1"))


class VariableTable:
    """Canonical word -> variable id.  The identity is a constant, not a variable."""

    def __init__(self):
        self.words: list[OperatorWord] = []
        self.ids: dict[OperatorWord, int] = {}
        for w in KNOWN_WORDS:
            self.add(w)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, w) -> bool:
        return canonicalize(w) in self.ids

    def add(self, w: OperatorWord) -> int:
        w = canonicalize(w)
        if w.is_identity:
            raise ValidationError("the identity is not a variable")
        if w not in self.ids:
            self.ids[w] = len(self.words)
            self.words.append(w)
        return self.ids[w]

    def index(self, w) -> int:
        key = canonicalize(w)
        try:
            return self.ids[key]
        except KeyError:
            raise SchemaError(f"moment <{key}> is not in the variable table") from None

    @property
    def known_ids(self) -> tuple[int, ...]:
        return tuple(self.ids[w] for w in KNOWN_WORDS)


@dataclass(frozen=True)
class Entry:
    """Affine entry ``const + sum(coef * var)``."""

    const: float
    terms: tuple[tuple[int, float], ...]


def _entry(products: Iterable[tuple[float, tuple[str, ...]]], table: VariableTable) -> Entry:
    const = 0.0
    acc: dict[int, float] = {}
    for coef, letters in products:
        w = canonicalize(letters)
        if w.is_identity:
            const += coef
        else:
            vid = table.add(w)
            acc[vid] = acc.get(vid, 0.0) + coef
    terms = tuple(sorted((k, v) for k, v in acc.items() if v != 0))
    return Entry(const, terms)


@dataclass(frozen=True, eq=False)
class MomentSchema:
    """``entries[i][j]`` is the affine image of ``<O_i^dag P O_j>``.

    ``tag`` is ``None`` for the moment matrix, or the localizing polynomial.
    """

    operators: tuple[OperatorWord, ...]
    entries: tuple[tuple[Entry, ...], ...]
    table: VariableTable
    tag: str | None = None
    # linear moment expressions that must vanish: <O_i^dag P O_j> - <O_i^dag P^dag O_j>
    hermiticity: tuple[Entry, ...] = ()

    @property
    def size(self) -> int:
        return len(self.operators)

    def variables(self) -> set[int]:
        out = {vid for row in self.entries for e in row for vid, _ in e.terms}
        return out | {vid for e in self.hermiticity for vid, _ in e.terms}

    def coefficient_map(self, nvars: int | None = None):
        """``(const, coeffs)`` with ``coeffs`` of shape ``(nvars, d*d)`` (sparse)."""
        d = self.size
        nvars = len(self.table) if nvars is None else nvars
        const = np.zeros((d, d))
        rows, cols, vals = [], [], []
        for i in range(d):
            for j in range(d):
                e = self.entries[i][j]
                const[i, j] = e.const
                for vid, coef in e.terms:
                    rows.append(vid)
                    cols.append(i * d + j)
                    vals.append(coef)
        coeffs = sp.csr_matrix((vals, (rows, cols)), shape=(nvars, d * d))
        return const, coeffs

    def matrix(self, values: Mapping[OperatorWord, float] | np.ndarray) -> np.ndarray:
        """Evaluate on a full assignment (by word mapping or by id vector)."""
        if not isinstance(values, np.ndarray):
            vec = np.full(len(self.table), np.nan)
            for w, v in values.items():
                if not canonicalize(w).is_identity and w in self.table:
                    vec[self.table.index(w)] = v
            values = vec
        const, coeffs = self.coefficient_map(values.shape[0])
        used = sorted(self.variables())
        if np.any(np.isnan(values[used])):
            missing = [str(self.table.words[i]) for i in used if np.isnan(values[i])]
            raise SchemaError(f"assignment is missing moments: {missing[:5]}")
        return const + (coeffs.T @ np.nan_to_num(values)).reshape(self.size, self.size)


# polynomial for each localizing tag, as (coefficient, letters) terms
LOCALIZING_POLYNOMIALS = {
    TAG_Z: ((1.0, ("B2", "B0")), (1.0, ("B2", "B1"))),
    TAG_X: ((1.0, ("B3", "B0")), (-1.0, ("B3", "B1"))),
}


def _load_default_manifest() -> dict:
    text = resources.files("swapcert").joinpath("data/operators.json").read_text()
    return load_manifest(text)


def load_manifest(text: str) -> dict:
    data = json.loads(text)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"unsupported operator manifest version {data.get('schema_version')!r}")
    for s in data["moment_matrix"]:
        parse_letters(s)
    for tag, ops in data["localizing"].items():
        if tag not in LOCALIZING_POLYNOMIALS:
            raise ValidationError(f"unknown localizing tag {tag!r}")
        for s in ops:
            parse_letters(s)
    return data


def dump_manifest(data: dict) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def _operators(strings) -> tuple[OperatorWord, ...]:
    return tuple(reduce_word(s) for s in strings)


def build_moment_schema(table: VariableTable | None = None, manifest: dict | None = None) -> MomentSchema:
    manifest = manifest or _load_default_manifest()
    table = table if table is not None else VariableTable()
    ops = _operators(manifest["moment_matrix"])
    entries = tuple(
        tuple(_entry([(1.0, oi.adjoint().letters() + oj.letters())], table) for oj in ops)
        for oi in ops)
    return MomentSchema(ops, entries, table)


def build_localizing_schema(tag: str, table: VariableTable, manifest: dict | None = None) -> MomentSchema:
    """Entries ``(1/2) <O_i^dag (P + P^dag) O_j>`` for the tagged polynomial ``P``.

    ``P`` PSD means ``P`` is Hermitian, so the schema also carries the
    equalities ``<O_i^dag P O_j> = <O_i^dag P^dag O_j>``.  Without them the
    symmetrised matrix only encodes ``P + P^dag`` PSD, which for
    ``B2 (B0 + B1)`` no longer ties ``B2`` to the polar factor of ``B0 + B1``.
    """
    manifest = manifest or _load_default_manifest()
    if tag not in LOCALIZING_POLYNOMIALS:
        raise ValidationError(f"unknown localizing tag {tag!r}")
    poly = LOCALIZING_POLYNOMIALS[tag]
    sym = [(c / 2, lt) for c, lt in poly] + [(c / 2, lt[::-1]) for c, lt in poly]
    ops = _operators(manifest["localizing"][tag])
    entries = tuple(
        tuple(_entry([(c, oi.adjoint().letters() + lt + oj.letters()) for c, lt in sym], table)
              for oj in ops)
        for oi in ops)
    herm = []
    for i, oi in enumerate(ops):
        for oj in ops[i:]:
            diff = [(c, oi.adjoint().letters() + lt + oj.letters()) for c, lt in poly]
            diff += [(-c, oi.adjoint().letters() + lt[::-1] + oj.letters()) for c, lt in poly]
            e = _entry(diff, table)
            if e.terms or e.const:
                herm.append(e)
    return MomentSchema(ops, entries, table, tag, tuple(herm))


@dataclass(frozen=True, eq=False)
class SchemaSet:
    table: VariableTable
    moment: MomentSchema
    localizing: dict

    @property
    def all(self) -> tuple[MomentSchema, ...]:
        return (self.moment, *self.localizing.values())


def build_schemas(manifest: dict | None = None) -> SchemaSet:
    manifest = manifest or _load_default_manifest()
    table = VariableTable()
    gamma = build_moment_schema(table, manifest)
    loc = {tag: build_localizing_schema(tag, table, manifest) for tag in manifest["localizing"]}
    return SchemaSet(table, gamma, loc)


def bind_known(c: CorrelatorForm) -> dict[OperatorWord, float]:
    """The nine moments fixed by observed statistics (identity included)."""
    values = [c.mA[0], c.mA[1], c.mB[0], c.mB[1],
              c.corr[0, 0], c.corr[0, 1], c.corr[1, 0], c.corr[1, 1]]
    out = {IDENTITY: 1.0}
    out.update({w: float(v) for w, v in zip(KNOWN_WORDS, values)})
    return out


def ideal_operators(theta: float) -> dict[str, np.ndarray]:
    """4x4 realisations of the six generators for the ideal strategy at ``theta``."""
    mu = mu_for_theta(theta)
    bz = math.cos(mu) * SZ
    bx = math.sin(mu) * SX
    return {
        "A0": np.kron(SZ, I2), "A1": np.kron(SX, I2),
        "B0": np.kron(I2, bz + bx), "B1": np.kron(I2, bz - bx),
        "B2": np.kron(I2, SZ), "B3": np.kron(I2, SX),
    }


def word_operator(w: OperatorWord | Iterable[str], ops: Mapping[str, np.ndarray]) -> np.ndarray:
    letters = w.letters() if isinstance(w, OperatorWord) else parse_letters(w)
    out = np.eye(4, dtype=complex)
    for t in letters:
        out = out @ ops[t]
    return out


def moments_from_state(rho: np.ndarray, ops: Mapping[str, np.ndarray], words: Iterable[OperatorWord]) -> dict:
    """``Re tr(rho W)`` for every word (the identity maps to 1)."""
    out = {IDENTITY: 1.0}
    for w in words:
        out[w] = float(np.trace(rho @ word_operator(w, ops)).real)
    return out


def quantum_moment_vector(theta: float, table: VariableTable | None = None) -> dict[OperatorWord, float]:
    """Every table moment on the target state with the ideal strategy."""
    _check_theta(theta)
    if table is None:
        table = build_schemas().table
    psi = np.array([math.cos(theta), 0, 0, math.sin(theta)], dtype=complex)
    return moments_from_state(np.outer(psi, psi.conj()), ideal_operators(theta), table.words)
