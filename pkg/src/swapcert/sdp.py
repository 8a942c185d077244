"""Small dense-block semidefinite programming engine.

Problems are posed in linear-matrix-inequality form::

    minimize    c @ x
    subject to  C_k + sum_i x[i] * A_{k,i}  is PSD   for every block k
                E @ x == g                            (optional)

and solved by an infeasible-start primal-dual path-following method
(HKM search direction, Mehrotra predictor-corrector).  The dual of the
problem is::

    maximize    -sum_k <C_k, Y_k> + g @ lam
    subject to  <A_{k,i}, Y_k> summed over k  + (E.T @ lam)[i] == c[i]
                Y_k PSD

Block coefficient maps are stored as sparse ``(n, d*d)`` matrices whose
row ``i`` is the row-major vectorisation of ``A_{k,i}``.  Everything runs
in a fixed order with no randomness, so repeated solves are bit-identical.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import CertificateError, ValidationError

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal-infeasible"
DUAL_INFEASIBLE = "dual-infeasible"
MAX_ITERATIONS = "max-iterations"

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 200
# step-to-boundary fraction and the exponent of Mehrotra's centering heuristic
STEP_FRACTION = 0.98
CENTERING_POWER = 3
# iterations without a better merit before giving up, and dual-repair sweeps
STALL_ITERATIONS = 6
REPAIR_ROUNDS = 5


@dataclass(frozen=True)
class Block:
    """One PSD block ``const + sum_i x[i] * coeffs[i].reshape(d, d)``."""

    const: np.ndarray
    coeffs: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        d = self.size
        return self.const + (self.coeffs.T @ x).reshape(d, d)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """Map a ``d x d`` matrix to the vector ``<A_i, y>``."""
        return self.coeffs @ y.reshape(-1)


def _transpose_perm(d: int) -> np.ndarray:
    idx = np.arange(d * d).reshape(d, d)
    return idx.T.reshape(-1)


@dataclass(frozen=True)
class SdpProblem:
    c: np.ndarray
    blocks: tuple[Block, ...]
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    # optional box |x_i| <= bounds[i]; only used to make certificates rigorous
    bounds: np.ndarray | None = None
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "c", c)
        n = c.shape[0]
        for k, blk in enumerate(self.blocks):
            d = blk.const.shape[0]
            if blk.const.shape != (d, d) or blk.coeffs.shape != (n, d * d):
                raise ValidationError(f"block {k}: dimension mismatch")
            if not np.allclose(blk.const, blk.const.T, atol=1e-12, rtol=0):
                raise ValidationError(f"block {k}: constant matrix is not symmetric")
            asym = blk.coeffs - blk.coeffs[:, _transpose_perm(d)]
            if asym.nnz and np.max(np.abs(asym.data)) > 1e-12:
                raise ValidationError(f"block {k}: coefficient matrix is not symmetric")
        if (self.eq_matrix is None) != (self.eq_rhs is None):
            raise ValidationError("eq_matrix and eq_rhs must be given together")
        if self.eq_matrix is not None:
            E = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
            g = np.asarray(self.eq_rhs, dtype=float).reshape(-1)
            if E.shape != (g.shape[0], n):
                raise ValidationError("equality constraints: dimension mismatch")
            object.__setattr__(self, "eq_matrix", E)
            object.__setattr__(self, "eq_rhs", g)
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
            if b.shape != (n,) or np.any(b < 0):
                raise ValidationError("bounds must be a nonnegative vector of length n")
            object.__setattr__(self, "bounds", b)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @classmethod
    def from_dense(cls, c, blocks, **kwargs) -> "SdpProblem":
        """Build from ``blocks = [(C, [A_1, ..., A_n]), ...]`` with dense matrices."""
        c = np.asarray(c, dtype=float)
        out = []
        for const, mats in blocks:
            const = np.asarray(const, dtype=float)
            d = const.shape[0]
            rows = np.array([np.asarray(m, dtype=float).reshape(d * d) for m in mats])
            out.append(Block(const, sp.csr_matrix(rows.reshape(len(mats), d * d))))
        return cls(c, tuple(out), **kwargs)

    def slacks(self, x) -> list[np.ndarray]:
        return [blk.evaluate(np.asarray(x, dtype=float)) for blk in self.blocks]

    def adjoint(self, ys) -> np.ndarray:
        out = np.zeros(self.n)
        for blk, y in zip(self.blocks, ys):
            out += blk.adjoint(y)
        return out


@dataclass(frozen=True)
class SdpSolution:
    x: np.ndarray
    objective: float
    dual_objective: float
    duals: tuple[np.ndarray, ...]
    eq_multipliers: np.ndarray
    status: str
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int

    def diagnostics(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "relative_gap": self.gap,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": self.iterations,
        }


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    L = np.linalg.cholesky(X)
    W = sla.solve_triangular(L, dX, lower=True)
    W = sla.solve_triangular(L, W.T, lower=True)
    lam = np.linalg.eigvalsh((W + W.T) / 2)[0]
    if lam >= 0:
        return 1.0
    return min(1.0, -STEP_FRACTION / lam)


def _rref(E: np.ndarray, g: np.ndarray):
    """Reduced row echelon form of ``[E | g]`` with partial pivoting."""
    A = np.hstack([E, g[:, None]]).astype(float)
    m, n = E.shape
    tol = 1e-12 * max(1.0, float(np.max(np.abs(E), initial=0)))
    pivots: list[int] = []
    r = 0
    for col in range(n):
        if r == m:
            break
        piv = r + int(np.argmax(np.abs(A[r:, col])))
        if abs(A[piv, col]) <= tol:
            continue
        if piv != r:
            A[[r, piv]] = A[[piv, r]]
        A[r] /= A[r, col]
        factors = A[:, col].copy()
        factors[r] = 0
        nz = np.flatnonzero(factors)
        if nz.size:
            A[nz] -= np.outer(factors[nz], A[r])
            A[nz, col] = 0
        A[np.abs(A) < 1e-15] = 0
        pivots.append(col)
        r += 1
    inconsistent = bool(np.any(np.abs(A[r:, n]) > 1e-9 * (1 + float(np.max(np.abs(g), initial=0)))))
    return A[:r, :n], A[:r, n], pivots, inconsistent


def _eliminate_equalities(p: SdpProblem):
    """Return (x0, N, reduced blocks, reduced c, infeasible) with x = x0 + N z.

    The null-space basis comes from the reduced row echelon form, so it is
    as sparse as the constraints allow and keeps the block maps sparse.
    """
    R, rhs, pivots, infeasible = _rref(p.eq_matrix, p.eq_rhs)
    n = p.n
    free = [j for j in range(n) if j not in set(pivots)]
    x0 = np.zeros(n)
    x0[pivots] = rhs
    N = sp.lil_matrix((n, len(free)))
    for k, j in enumerate(free):
        N[j, k] = 1.0
    if pivots and free:
        Rf = R[:, free]
        for i, j in enumerate(pivots):
            for k in np.flatnonzero(Rf[i]):
                N[j, k] = -Rf[i, k]
    N = N.tocsr()
    blocks = []
    for blk in p.blocks:
        d = blk.size
        const = blk.const + (blk.coeffs.T @ x0).reshape(d, d)
        coeffs = sp.csr_matrix(N.T @ blk.coeffs)
        coeffs.eliminate_zeros()
        blocks.append(Block((const + const.T) / 2, coeffs))
    return x0, N, tuple(blocks), N.T @ p.c, infeasible


def solve(p: SdpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SdpSolution:
    """Solve ``p`` to relative duality gap ``tol``.

    Numerical breakdown (a failed factorisation) or ``STALL_ITERATIONS``
    iterations without progress end the run with status ``max-iterations``.
    The iterate returned is then the one with the smallest combined gap and
    residual, so its dual part can still go to :func:`certified_lower_bound`.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if p.eq_matrix is not None:
        x0, N, blocks, c, infeasible = _eliminate_equalities(p)
        if infeasible:
            return _trivial_solution(p, PRIMAL_INFEASIBLE)
    else:
        x0, N, blocks, c = np.zeros(p.n), None, p.blocks, p.c

    z, ys, status, it, res = _ipm(c, blocks, tol, max_iter)

    x = x0 + N @ z if N is not None else z
    lam = np.zeros(0 if p.eq_matrix is None else p.eq_matrix.shape[0])
    if p.eq_matrix is not None:
        r = p.c - p.adjoint(ys)
        lam, *_ = np.linalg.lstsq(p.eq_matrix.T, r, rcond=None)
    pobj = float(p.c @ x)
    dobj = -sum(float(np.vdot(b.const, y)) for b, y in zip(p.blocks, ys))
    if p.eq_matrix is not None:
        dobj += float(p.eq_rhs @ lam)
    gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
    return SdpSolution(
        x=x, objective=pobj, dual_objective=dobj, duals=tuple(ys),
        eq_multipliers=lam, status=status, gap=gap,
        primal_residual=res[0], dual_residual=res[1], iterations=it,
    )


def _trivial_solution(p, status):
    return SdpSolution(
        x=np.full(p.n, np.nan), objective=math.nan, dual_objective=math.nan,
        duals=tuple(np.zeros_like(b.const) for b in p.blocks),
        eq_multipliers=np.zeros(0), status=status, gap=math.inf,
        primal_residual=math.inf, dual_residual=math.inf, iterations=0,
    )


def _ipm(c, blocks, tol, max_iter):
    n = c.shape[0]
    dims = [b.size for b in blocks]
    nu = float(sum(dims))
    normC = math.sqrt(sum(float(np.sum(b.const ** 2)) for b in blocks))
    normc = float(np.linalg.norm(c))

    x = np.zeros(n)
    S, Y = [], []
    for b in blocks:
        d = b.size
        anorm = np.sqrt(np.asarray(b.coeffs.multiply(b.coeffs).sum(axis=1)).ravel())
        eta = max(10.0, math.sqrt(d), math.sqrt(d) * float(np.max((1 + np.abs(c)) / (1 + anorm), initial=0)))
        xi = max(10.0, math.sqrt(d), float(np.linalg.norm(b.const)), float(np.max(anorm, initial=0)))
        S.append(xi * np.eye(d))
        Y.append(eta * np.eye(d))

    status = MAX_ITERATIONS
    res = (math.inf, math.inf)
    best = (math.inf, x, Y, 0, res)
    it = 0
    for it in range(max_iter + 1):
        aY = np.zeros(n)
        for b, y in zip(blocks, Y):
            aY += b.adjoint(y)
        rp = c - aY
        Rd = [b.evaluate(x) - s for b, s in zip(blocks, S)]
        pobj = float(c @ x)
        dobj = -sum(float(np.vdot(b.const, y)) for b, y in zip(blocks, Y))
        mu = sum(float(np.vdot(y, s)) for y, s in zip(Y, S)) / nu
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        lmi_res = math.sqrt(sum(float(np.sum(r ** 2)) for r in Rd)) / (1 + normC)
        dual_res = float(np.linalg.norm(rp)) / (1 + normc)
        res = (lmi_res, dual_res)
        if gap <= tol and lmi_res <= tol and dual_res <= tol:
            status = OPTIMAL
            break
        t = -sum(float(np.vdot(b.const, y)) for b, y in zip(blocks, Y))
        if t > 1e6 * (1 + normc) and np.linalg.norm(aY) <= tol * t:
            status = PRIMAL_INFEASIBLE
            break
        if -pobj > 1e6 * (1 + normC) and lmi_res * (1 + normC) <= tol * -pobj:
            status = DUAL_INFEASIBLE
            break
        merit = max(gap, lmi_res, dual_res)
        if merit < best[0]:
            best = (merit, x, Y, it, res)
        elif it - best[3] >= STALL_ITERATIONS:
            break
        if it == max_iter:
            break

        try:
            Sinv = [sla.cho_solve(sla.cho_factor(s, lower=True), np.eye(s.shape[0])) for s in S]
            Sinv = [(si + si.T) / 2 for si in Sinv]
            M = np.zeros((n, n))
            for b, y, si in zip(blocks, Y, Sinv):
                KA = b.coeffs @ np.kron(y, si)
                M += (b.coeffs @ KA.T).T
            M = (M + M.T) / 2
            solver = _schur_solver(M)

            def direction(sigma_mu, corr):
                R = []
                rhs = -c.copy()
                for k, (b, y, si, rd) in enumerate(zip(blocks, Y, Sinv, Rd)):
                    r = sigma_mu * si - y @ rd @ si
                    if corr is not None:
                        r = r - corr[k]
                    R.append(r)
                    rhs += b.adjoint(r)
                dx = solver(rhs)
                dS, dY = [], []
                for b, y, si, rd, r in zip(blocks, Y, Sinv, Rd, R):
                    d = b.size
                    ds = rd + (b.coeffs.T @ dx).reshape(d, d)
                    dy = r - y - y @ (ds - rd) @ si
                    dS.append((ds + ds.T) / 2)
                    dY.append((dy + dy.T) / 2)
                return dx, dS, dY

            dx, dS, dY = direction(0.0, None)
            a_s = min(_max_step(s, d) for s, d in zip(S, dS))
            a_y = min(_max_step(y, d) for y, d in zip(Y, dY))
            mu_aff = sum(float(np.vdot(y + a_y * dy, s + a_s * ds))
                         for y, dy, s, ds in zip(Y, dY, S, dS)) / nu
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** CENTERING_POWER
            corr = [dy @ ds @ si for dy, ds, si in zip(dY, dS, Sinv)]
            dx, dS, dY = direction(sigma * mu, corr)
            a_s = min(_max_step(s, d) for s, d in zip(S, dS))
            a_y = min(_max_step(y, d) for y, d in zip(Y, dY))
        except (np.linalg.LinAlgError, sla.LinAlgError, ValueError):
            break

        x = x + a_s * dx
        S = [s + a_s * ds for s, ds in zip(S, dS)]
        Y = [y + a_y * dy for y, dy in zip(Y, dY)]

    if status == MAX_ITERATIONS:
        # late iterations on problems without an interior point can drift;
        # hand back the iterate with the smallest combined residual
        _, x, Y, it, res = best
    return x, Y, status, it, res


def _schur_solver(M):
    try:
        fac = sla.cho_factor(M, lower=True)
        return lambda r: sla.cho_solve(fac, r)
    except sla.LinAlgError:
        pass
    reg = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(M)))))
    try:
        fac = sla.cho_factor(M + reg * np.eye(M.shape[0]), lower=True)
        return lambda r: sla.cho_solve(fac, r)
    except sla.LinAlgError:
        return lambda r: np.linalg.lstsq(M, r, rcond=None)[0]


def psd_clip(y: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((y + y.T) / 2)
    return (V * np.clip(w, 0, None)) @ V.T


def _repair_duals(p: SdpProblem, ys, rounds: int = REPAIR_ROUNDS):
    """Alternate a least-norm correction of ``A*(Y) = c`` with PSD clipping.

    Equality multipliers absorb whatever lies in the row space of the
    equality matrix, so only the remainder is corrected.
    """
    gram = sum((b.coeffs @ b.coeffs.T).toarray() for b in p.blocks)
    E = p.eq_matrix
    for _ in range(rounds):
        r = p.c - p.adjoint(ys)
        if E is not None:
            lam, *_ = np.linalg.lstsq(E.T, r, rcond=None)
            r = r - E.T @ lam
        w, *_ = np.linalg.lstsq(gram, r, rcond=None)
        trial = [psd_clip(y + (b.coeffs.T @ w).reshape(b.size, b.size)) for b, y in zip(p.blocks, ys)]
        r_new = p.c - p.adjoint(trial)
        if E is not None:
            r_new = r_new - E.T @ np.linalg.lstsq(E.T, r_new, rcond=None)[0]
        if np.max(np.abs(r_new), initial=0) >= np.max(np.abs(r), initial=0):
            break
        ys = trial
    return ys


def certified_lower_bound(p: SdpProblem, sol: SdpSolution, repair_tol: float = 1e-5) -> float:
    """A lower bound on the optimum of ``p`` computed from the dual iterate only.

    Dual blocks are clipped to PSD and the leftover residual in the dual
    equality ``c - A*(Y) - E.T lam`` is charged against the variable box
    ``|x_i| <= bounds[i]``.  Without bounds, ``1 + |x_i|`` from the primal
    iterate stands in for the box, which is exact only in the limit.
    """
    if not sol.duals:
        raise CertificateError("solution carries no dual iterate", sol)
    ys = _repair_duals(p, [psd_clip(y) for y in sol.duals])
    r = p.c - p.adjoint(ys)
    value = -sum(float(np.vdot(b.const, y)) for b, y in zip(p.blocks, ys))
    if p.eq_matrix is not None:
        lam, *_ = np.linalg.lstsq(p.eq_matrix.T, r, rcond=None)
        r = r - p.eq_matrix.T @ lam
        value += float(p.eq_rhs @ lam)
    if not np.all(np.isfinite(r)) or np.max(np.abs(r), initial=0) > repair_tol * (1 + np.max(np.abs(p.c), initial=0)):
        raise CertificateError(
            f"dual residual {np.max(np.abs(r), initial=0):.3e} exceeds repair tolerance", sol)
    if p.bounds is not None:
        box = p.bounds
    else:
        box = 1 + np.abs(np.nan_to_num(sol.x))
    return value - float(np.abs(r) @ box)


# -- plain-text dump -------------------------------------------------------
#
#   # swapcert-sdp 1
#   n <n>
#   blocks <d_1> <d_2> ...
#   c <c_1> ... <c_n>
#   bounds <b_1> ... <b_n>            (optional)
#   e <block> <row> <col> <var> <coef> (1-based; var 0 is the constant, upper triangle)
#   eq <row> <var> <coef>               (1-based; var 0 is the right-hand side)

def dump_problem(p: SdpProblem, stream=None) -> str:
    out = io.StringIO()
    out.write("# swapcert-sdp 1\n")
    out.write(f"n {p.n}\n")
    out.write("blocks " + " ".join(str(b.size) for b in p.blocks) + "\n")
    out.write("c " + " ".join(repr(float(v)) for v in p.c) + "\n")
    if p.bounds is not None:
        out.write("bounds " + " ".join(repr(float(v)) for v in p.bounds) + "\n")
    for k, b in enumerate(p.blocks, start=1):
        d = b.size
        for r in range(d):
            for col in range(r, d):
                if b.const[r, col] != 0:
                    out.write(f"e {k} {r + 1} {col + 1} 0 {float(b.const[r, col])!r}\n")
        coo = b.coeffs.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            r, col = divmod(int(j), d)
            if col >= r and v != 0:
                out.write(f"e {k} {r + 1} {col + 1} {int(i) + 1} {float(v)!r}\n")
    if p.eq_matrix is not None:
        for r, (row, rhs) in enumerate(zip(p.eq_matrix, p.eq_rhs), start=1):
            out.write(f"eq {r} 0 {float(rhs)!r}\n")
            for i in np.flatnonzero(row):
                out.write(f"eq {r} {i + 1} {float(row[i])!r}\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def load_problem(text: str) -> SdpProblem:
    n = None
    dims: list[int] = []
    c = bounds = None
    entries = []
    eqs = []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        key = parts[0]
        if key == "n":
            n = int(parts[1])
        elif key == "blocks":
            dims = [int(v) for v in parts[1:]]
        elif key == "c":
            c = np.array([float(v) for v in parts[1:]])
        elif key == "bounds":
            bounds = np.array([float(v) for v in parts[1:]])
        elif key == "e":
            k, r, col, i = (int(v) for v in parts[1:5])
            entries.append((k - 1, r - 1, col - 1, i, float(parts[5])))
        elif key == "eq":
            eqs.append((int(parts[1]) - 1, int(parts[2]), float(parts[3])))
        else:
            raise ValidationError(f"unknown record {key!r} in problem dump")
    if n is None or c is None:
        raise ValidationError("problem dump lacks 'n' or 'c'")
    consts = [np.zeros((d, d)) for d in dims]
    rows = [[] for _ in dims]
    for k, r, col, i, v in entries:
        d = dims[k]
        if i == 0:
            consts[k][r, col] = consts[k][col, r] = v
        else:
            rows[k].append((i - 1, r * d + col, v))
            if r != col:
                rows[k].append((i - 1, col * d + r, v))
    blocks = []
    for k, d in enumerate(dims):
        if rows[k]:
            ii, jj, vv = zip(*rows[k])
        else:
            ii, jj, vv = (), (), ()
        blocks.append(Block(consts[k], sp.csr_matrix((vv, (ii, jj)), shape=(n, d * d))))
    E = g = None
    if eqs:
        m = max(r for r, _, _ in eqs) + 1
        E, g = np.zeros((m, n)), np.zeros(m)
        for r, i, v in eqs:
            if i == 0:
                g[r] = v
            else:
                E[r, i - 1] = v
    return SdpProblem(c, tuple(blocks), eq_matrix=E, eq_rhs=g, bounds=bounds)
