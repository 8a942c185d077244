"""Regularisation onto the NPA relaxation and SWAP-isometry fidelity bounds."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import sdp
from .bell import (OUTCOMES, Behavior, CorrelatorForm, CountsRecord, alpha_for_theta,
                   behavior_from_counts, from_correlators, quantum_max, to_correlators)
from .errors import CertificateError, SchemaError, SolverError
from .moments import (IDENTITY, KNOWN_WORDS, TAG_X, TAG_Z, OperatorWord, SchemaSet,
                      bind_known, build_schemas, canonicalize, word)

BEHAVIOR_CONSTRAINED = "behavior-constrained"
EPSILON_CONSTRAINED = "epsilon-constrained"


@functools.lru_cache(maxsize=1)
def default_schemas() -> SchemaSet:
    return build_schemas()


# -- fidelity objective ------------------------------------------------------

def cross_coefficient(theta: float) -> float:
    """Weight of the off-diagonal SWAP terms in the fidelity.

    Expanding the projection of the isometry output onto the target gives
    ``cos(theta) sin(theta)``; this is the one constant to touch if a
    different normalisation is ever wanted.
    """
    return math.cos(theta) * math.sin(theta)


CROSS_TERMS = (
    (+1, "A1 B3"), (+1, "A1 A0 B3 B2"), (+1, "A0 A1 B2 B3"), (+1, "A0 A1 A0 B2 B3 B2"),
    (-1, "A0 A1 A0 B3"), (-1, "A0 A1 B3 B2"), (-1, "A1 A0 B2 B3"), (-1, "A1 B2 B3 B2"),
)


def fidelity_terms(theta: float) -> list[tuple[float, OperatorWord]]:
    """``F = sum(coef * <word>)`` including the identity term."""
    c2 = math.cos(2 * theta)
    k = cross_coefficient(theta)
    terms = [(0.25, IDENTITY), (0.25, word("A0 B2")), (0.25 * c2, word("A0")), (0.25 * c2, word("B2"))]
    terms += [(0.125 * k * s, word(w)) for s, w in CROSS_TERMS]
    return terms


def objective_on_moments(assignment, theta: float) -> float:
    total = 0.0
    for coef, w in fidelity_terms(theta):
        key = canonicalize(w)
        if key.is_identity:
            total += coef
            continue
        if key not in assignment:
            raise SchemaError(f"assignment lacks moment <{key}>")
        total += coef * assignment[key]
    return total


# -- problem assembly ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MomentProblem:
    """An SDP over the free moments plus a record of how to read it back."""

    problem: sdp.SdpProblem
    free_ids: tuple[int, ...]
    offset: float
    extra: tuple[str, ...] = ()

    def moments(self, x: np.ndarray, fixed: dict[int, float], table) -> dict[OperatorWord, float]:
        out = {IDENTITY: 1.0}
        for vid, v in fixed.items():
            out[table.words[vid]] = v
        for pos, vid in enumerate(self.free_ids):
            out[table.words[vid]] = float(x[pos])
        return out


def _assemble(schemas: SchemaSet, blocks_used, fixed: dict[int, float], objective: dict[int, float],
              extra_blocks=(), extra_vars=0):
    """Substitute fixed moments and restrict each block to the free ones.

    ``extra_blocks`` are ``(const, coeffs)`` pairs whose coefficient rows are
    indexed by table id, followed by ``extra_vars`` trailing variables.
    """
    used = set()
    for sch in blocks_used:
        used |= sch.variables()
    free = tuple(sorted(used - set(fixed)))
    ntab = len(schemas.table)
    fixed_vec = np.zeros(ntab + extra_vars)
    for vid, v in fixed.items():
        fixed_vec[vid] = v
    rows = list(free) + [ntab + k for k in range(extra_vars)]
    blocks = []
    for const, coeffs in [sch.coefficient_map(ntab + extra_vars) for sch in blocks_used] + list(extra_blocks):
        d = const.shape[0]
        coeffs = sp.csr_matrix(coeffs)
        const = const + (coeffs.T @ fixed_vec).reshape(d, d)
        blocks.append(sdp.Block((const + const.T) / 2, coeffs[rows, :]))
    c = np.zeros(len(rows))
    offset = 0.0
    pos = {vid: i for i, vid in enumerate(rows)}
    for vid, coef in objective.items():
        if vid in fixed:
            offset += coef * fixed[vid]
        elif vid in pos:
            c[pos[vid]] += coef
        else:
            raise SchemaError(f"objective moment <{schemas.table.words[vid]}> is not in any block")
    eq_rows, eq_rhs = [], []
    for sch in blocks_used:
        for e in sch.hermiticity:
            row = np.zeros(len(rows))
            rhs = -e.const
            for vid, coef in e.terms:
                if vid in fixed:
                    rhs -= coef * fixed[vid]
                else:
                    row[pos[vid]] += coef
            if np.any(row):
                eq_rows.append(row)
                eq_rhs.append(rhs)
            elif abs(rhs) > 1e-12:
                raise SchemaError("hermiticity constraint contradicts the fixed moments")
    E = np.array(eq_rows) if eq_rows else None
    g = np.array(eq_rhs) if eq_rows else None
    return free, blocks, c, offset, E, g


def _objective_ids(schemas: SchemaSet, theta: float) -> tuple[dict[int, float], float]:
    obj: dict[int, float] = {}
    const = 0.0
    for coef, w in fidelity_terms(theta):
        if w.is_identity:
            const += coef
        else:
            vid = schemas.table.index(w)
            obj[vid] = obj.get(vid, 0.0) + coef
    return obj, const


def swap_problem(theta: float, c: CorrelatorForm | None = None, epsilon: float | None = None,
                 schemas: SchemaSet | None = None) -> MomentProblem:
    """Fidelity minimisation over the moment matrix and both localizing matrices.

    Exactly one of ``c`` (bind the nine observed moments) and ``epsilon``
    (require tilted-CHSH >= quantum max - epsilon) must be given.
    """
    if (c is None) == (epsilon is None):
        raise ValueError("give exactly one of correlators or epsilon")
    schemas = schemas or default_schemas()
    table = schemas.table
    obj, obj_const = _objective_ids(schemas, theta)
    fixed: dict[int, float] = {}
    extra = []
    if c is not None:
        for w, v in bind_known(c).items():
            if not w.is_identity:
                fixed[table.index(w)] = v
    else:
        alpha = alpha_for_theta(theta)
        ntab = len(table)
        coef = np.zeros(ntab)
        ids = [table.index(w) for w in KNOWN_WORDS]
        # alpha<A0> + <A0B0> + <A0B1> + <A1B0> - <A1B1>
        for vid, w in zip(ids, (alpha, 0, 0, 0, 1, 1, 1, -1)):
            coef[vid] = w
        extra.append((np.array([[-(quantum_max(alpha) - epsilon)]]), sp.csr_matrix(coef[:, None])))
    blocks_used = (schemas.moment, schemas.localizing[TAG_Z], schemas.localizing[TAG_X])
    free, blocks, cvec, offset, E, g = _assemble(schemas, blocks_used, fixed, obj, extra)
    problem = sdp.SdpProblem(cvec, tuple(blocks), eq_matrix=E, eq_rhs=g, bounds=np.ones(len(free)),
                             names=tuple(str(table.words[v]) for v in free))
    return MomentProblem(problem, free, offset + obj_const)


# -- results -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FidelityCertificate:
    theta: float
    f_s: float
    primal_objective: float
    certificate_valid: bool
    bound_source: str
    epsilon: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "theta_deg": math.degrees(self.theta), "f_s": self.f_s,
            "primal_objective": self.primal_objective,
            "certificate_valid": self.certificate_valid,
            "bound_source": self.bound_source, "epsilon": self.epsilon,
            "solver": self.diagnostics,
        }


@dataclass(frozen=True, eq=False)
class Nqa2Result:
    regularized: Behavior
    distance: float
    raw: Behavior
    diagnostics: dict = field(default_factory=dict)

    @property
    def correlators(self) -> CorrelatorForm:
        return to_correlators(self.regularized)


def _certify(mp: MomentProblem, theta: float, source: str, tol: float, epsilon=None) -> FidelityCertificate:
    sol = sdp.solve(mp.problem, tol=tol)
    if sol.status in (sdp.PRIMAL_INFEASIBLE, sdp.DUAL_INFEASIBLE):
        raise SolverError(f"fidelity SDP at theta={math.degrees(theta):.4g} deg: {sol.status}", sol)
    try:
        bound = sdp.certified_lower_bound(mp.problem, sol) + mp.offset
        valid = True
    except CertificateError:
        if sol.status == sdp.OPTIMAL:
            raise
        raise CertificateError(
            f"fidelity SDP at theta={math.degrees(theta):.4g} deg ended with {sol.status} "
            "and no repairable dual certificate", sol) from None
    diag = sol.diagnostics()
    diag["tolerance"] = tol
    return FidelityCertificate(
        theta=theta, f_s=max(0.0, bound), primal_objective=sol.objective + mp.offset,
        certificate_valid=valid, bound_source=source, epsilon=epsilon, diagnostics=diag)


def swap_fidelity(c: CorrelatorForm, theta: float, tol: float = sdp.DEFAULT_TOL,
                  schemas: SchemaSet | None = None) -> FidelityCertificate:
    """Certified lower bound on the fidelity with ``cos(theta)|00> + sin(theta)|11>``."""
    mp = swap_problem(theta, c=c, schemas=schemas)
    return _certify(mp, theta, BEHAVIOR_CONSTRAINED, tol)


def epsilon_fidelity(theta: float, epsilon: float, tol: float = sdp.DEFAULT_TOL,
                     schemas: SchemaSet | None = None) -> FidelityCertificate:
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    mp = swap_problem(theta, epsilon=epsilon, schemas=schemas)
    return _certify(mp, theta, EPSILON_CONSTRAINED, tol, epsilon)


def robust_curve(theta: float, eps_grid, tol: float = sdp.DEFAULT_TOL) -> list[tuple[float, float]]:
    """``(epsilon, f_s)`` pairs; the Bell constraint is an inequality, so curves are monotone."""
    return [(float(e), epsilon_fidelity(theta, float(e), tol).f_s) for e in eps_grid]


# -- NQA2 ------------------------------------------------------------------------------

def nqa2_problem(raw: Behavior, schemas: SchemaSet | None = None, include_localizing: bool = False):
    """Minimise ``s`` with ``[[s I, P - f], [(P - f)^T, s]]`` PSD and the moment matrix PSD."""
    schemas = schemas or default_schemas()
    table = schemas.table
    ntab = len(table)
    blocks_used = [schemas.moment]
    if include_localizing:
        blocks_used += [schemas.localizing[TAG_Z], schemas.localizing[TAG_X]]
    f = raw.vector()
    known = {w: table.index(w) for w in KNOWN_WORDS}
    nv = ntab + 1
    s_id = ntab
    const = np.zeros((17, 17))
    rows, cols, vals = [], [], []

    def put(vid, r, cc, v):
        rows.extend([vid, vid] if r != cc else [vid])
        cols.extend([r * 17 + cc, cc * 17 + r] if r != cc else [r * 17 + cc])
        vals.extend([v, v] if r != cc else [v])

    for k in range(16):
        put(s_id, k, k, 1.0)
    put(s_id, 16, 16, 1.0)
    k = 0
    for ia, a in enumerate(OUTCOMES):
        for ib, b in enumerate(OUTCOMES):
            for x in range(2):
                for y in range(2):
                    # P(a,b|x,y) = (1 + a<A_x> + b<B_y> + ab<A_x B_y>) / 4
                    const[k, 16] = const[16, k] = 0.25 - f[k]
                    put(known[word(f"A{x}")], k, 16, a / 4)
                    put(known[word(f"B{y}")], k, 16, b / 4)
                    put(known[word(f"A{x} B{y}")], k, 16, a * b / 4)
                    k += 1
    schur = (const, sp.csr_matrix((vals, (rows, cols)), shape=(nv, 17 * 17)))
    obj = {}
    free, blocks, c, _, E, g = _assemble(schemas, blocks_used, {}, obj, [schur], extra_vars=1)
    c[-1] = 1.0
    bounds = np.concatenate([np.ones(len(free)), [4.0]])
    problem = sdp.SdpProblem(c, tuple(blocks), eq_matrix=E, eq_rhs=g, bounds=bounds)
    return MomentProblem(problem, free, 0.0, extra=("s",))


def nqa2_regularize(raw: Behavior, tol: float = sdp.DEFAULT_TOL, include_localizing: bool = False,
                    schemas: SchemaSet | None = None) -> Nqa2Result:
    schemas = schemas or default_schemas()
    mp = nqa2_problem(raw, schemas, include_localizing)
    sol = sdp.solve(mp.problem, tol=tol)
    if sol.status != sdp.OPTIMAL and not np.all(np.isfinite(sol.x)):
        raise SolverError(f"NQA2 regularisation failed: {sol.status}", sol)
    if sol.status == sdp.PRIMAL_INFEASIBLE:
        # the relaxation always contains the uniform box, so this is a bug signal
        raise SolverError("NQA2 reported an infeasible relaxation", sol)
    pos = {vid: i for i, vid in enumerate(mp.free_ids)}
    vals = [float(np.clip(sol.x[pos[schemas.table.index(w)]], -1, 1)) for w in KNOWN_WORDS]
    cf = CorrelatorForm(np.array(vals[0:2]), np.array(vals[2:4]), np.array(vals[4:8]).reshape(2, 2))
    reg = from_correlators(cf)
    dist = float(np.linalg.norm(reg.vector() - raw.vector()))
    diag = sol.diagnostics()
    diag.update(tolerance=tol, solver_s=float(sol.x[-1]), include_localizing=include_localizing)
    return Nqa2Result(reg, dist, raw, diag)


@dataclass(frozen=True, eq=False)
class PipelineResult:
    raw: Behavior
    nqa2: Nqa2Result
    correlators: CorrelatorForm
    certificate: FidelityCertificate


def certify_behavior(raw: Behavior, theta: float, tol: float = sdp.DEFAULT_TOL) -> PipelineResult:
    """NQA2 on the moment matrix, then the SWAP bound on the regularised correlators.

    A moment-matrix-only projection can land where the fidelity SDP, which
    also carries the localizing blocks, has no repairable dual certificate.
    In that case the projection is redone with the localizing blocks included
    (``nq.diagnostics["include_localizing"]`` records which one was used).
    """
    nq = nqa2_regularize(raw, tol)
    try:
        cert = swap_fidelity(nq.correlators, theta, tol)
    except CertificateError:
        nq = nqa2_regularize(raw, tol, include_localizing=True)
        cert = swap_fidelity(nq.correlators, theta, tol)
    return PipelineResult(raw, nq, nq.correlators, cert)


def certify_pipeline(counts: CountsRecord, theta: float, tol: float = sdp.DEFAULT_TOL) -> PipelineResult:
    """Frequencies -> NQA2 -> correlators -> SWAP bound, keeping every stage."""
    return certify_behavior(behavior_from_counts(counts), theta, tol)
