"""Damped-Newton log-barrier solver for structured convex matrix programs.

The programs handled here are built from three ingredients over a tuple of
Hermitian matrix variables (a real scalar is a 1x1 Hermitian block):

* smooth convex objective   ``lin . x + c + sum_r w_r * (-ln det M_r(x))``
* smooth convex constraints of the same shape, as ``h_j(x) <= 0``
* conic constraints         ``M(x) >= 0`` for Hermitian-affine ``M``

with every ``M`` affine in the variables and every weight ``w_r >= 0``.  This
covers the compression-design subproblems: log-det terms of affine matrix
expressions in the objective, backhaul constraints mixing a linear part with
``-ln det`` of a principal quantization block, trace/power constraints, and
semidefinite cones for covariances and S-procedure certificates.

Variables are coordinatized over an orthonormal Hermitian basis per block, so
gradients and Hessians of each log-det piece reduce to batched traces against
precomputed generator stacks.  A standard path-following barrier with damped
Newton centering drives the duality-gap proxy below ``gap_tol``; the KKT
stationarity residual of the original program equals the final Newton
gradient divided by the barrier parameter and is reported on the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

__all__ = [
    "hermitian_basis",
    "herm_to_coords",
    "coords_to_herm",
    "trace_coeffs",
    "congruence_gens",
    "principal_gens",
    "Layout",
    "MatrixPart",
    "AffineMatrix",
    "LogDetPiece",
    "SmoothFunc",
    "BarrierProblem",
    "BarrierResult",
    "solve_barrier",
    "DomainError",
]

_LN2 = float(np.log(2.0))


class DomainError(ValueError):
    """Raised when a supposed interior point is outside the barrier domain."""


@lru_cache(maxsize=64)
def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis of n x n Hermitian matrices, stacked as (n*n, n, n).

    Order: diagonal units, then real-symmetric off-diagonal pairs, then
    imaginary-antisymmetric pairs, each row-major over (a < b).
    """
    mats = np.zeros((n * n, n, n), dtype=complex)
    idx = 0
    for a in range(n):
        mats[idx, a, a] = 1.0
        idx += 1
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for a in range(n):
        for b in range(a + 1, n):
            mats[idx, a, b] = inv_sqrt2
            mats[idx, b, a] = inv_sqrt2
            idx += 1
    for a in range(n):
        for b in range(a + 1, n):
            mats[idx, a, b] = 1j * inv_sqrt2
            mats[idx, b, a] = -1j * inv_sqrt2
            idx += 1
    mats.setflags(write=False)
    return mats


def herm_to_coords(mat: np.ndarray) -> np.ndarray:
    basis = hermitian_basis(mat.shape[0])
    return np.einsum("aij,ji->a", basis, mat).real


def coords_to_herm(x: np.ndarray) -> np.ndarray:
    n = int(round(np.sqrt(x.size)))
    basis = hermitian_basis(n)
    return np.tensordot(x, basis, axes=(0, 0))


def trace_coeffs(n: int, coeff_mat: np.ndarray) -> np.ndarray:
    """Coordinates of the functional X -> Re tr(coeff_mat X) on Hermitian X."""
    basis = hermitian_basis(n)
    return np.einsum("aij,ji->a", basis, coeff_mat).real


def congruence_gens(n: int, transform: np.ndarray) -> np.ndarray:
    """Generator stack of X -> T X T^H applied to the Hermitian basis."""
    basis = hermitian_basis(n)
    return np.einsum("mi,aij,nj->amn", transform, basis, transform.conj(), optimize=True)


def principal_gens(n: int, rows: np.ndarray) -> np.ndarray:
    """Generator stack of the principal-submatrix map on ``rows``."""
    basis = hermitian_basis(n)
    return np.ascontiguousarray(basis[:, rows][:, :, rows])


class Layout:
    """Coordinate layout for a tuple of Hermitian blocks."""

    def __init__(self, sizes: Sequence[int]):
        self.sizes = tuple(int(n) for n in sizes)
        if any(n < 1 for n in self.sizes):
            raise ValueError("block sizes must be >= 1")
        self.dims = tuple(n * n for n in self.sizes)
        self.offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.dims)[:-1]])) if self.sizes else ()
        self.total = int(sum(self.dims))

    def block_slice(self, b: int) -> slice:
        return slice(self.offsets[b], self.offsets[b] + self.dims[b])

    def pack(self, mats: Sequence[np.ndarray]) -> np.ndarray:
        if len(mats) != len(self.sizes):
            raise ValueError("wrong number of blocks")
        return np.concatenate([herm_to_coords(np.asarray(m, dtype=complex)) for m in mats]) if mats else np.zeros(0)

    def unpack(self, x: np.ndarray) -> list[np.ndarray]:
        return [coords_to_herm(x[self.block_slice(b)]) for b in range(len(self.sizes))]


@dataclass(frozen=True)
class MatrixPart:
    """One affine contribution ``coeff * map(X_block)`` with generator stack ``gens``."""

    block: int
    coeff: float
    gens: np.ndarray  # (block_dim, m, m)


@dataclass(frozen=True)
class AffineMatrix:
    """Hermitian-valued affine map of the variables."""

    size: int
    const: np.ndarray
    parts: tuple[MatrixPart, ...]

    def __post_init__(self):
        seen = set()
        for p in self.parts:
            if p.block in seen:
                raise ValueError("at most one part per variable block; merge generators first")
            seen.add(p.block)

    def value(self, xblocks: Sequence[np.ndarray]) -> np.ndarray:
        m = np.array(self.const, dtype=complex)
        for p in self.parts:
            m += p.coeff * np.tensordot(xblocks[p.block], p.gens, axes=(0, 0))
        return 0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class LogDetPiece:
    """Contribution ``weight * (-ln det mat)`` with ``weight > 0`` (convex)."""

    weight: float
    mat: AffineMatrix


@dataclass(frozen=True)
class SmoothFunc:
    """``lin . x + const + sum_p piece_p`` in natural-log units."""

    lin: np.ndarray
    const: float
    pieces: tuple[LogDetPiece, ...] = ()


@dataclass
class BarrierProblem:
    layout: Layout
    objective: SmoothFunc
    ineqs: tuple[SmoothFunc, ...] = ()
    cones: tuple[AffineMatrix, ...] = ()

    def __post_init__(self):
        mats: list[AffineMatrix] = []
        for piece in self.objective.pieces:
            mats.append(piece.mat)
        for h in self.ineqs:
            for piece in h.pieces:
                mats.append(piece.mat)
        mats.extend(self.cones)
        # identity-deduplicated evaluation list
        self._matrices = list({id(m): m for m in mats}.values())
        self.total_constraint_dim = len(self.ineqs) + sum(c.size for c in self.cones)


class _MatState:
    __slots__ = ("lndet", "inv", "_cmats")

    def __init__(self, lndet: float, inv: np.ndarray):
        self.lndet = lndet
        self.inv = inv
        self._cmats: dict[int, np.ndarray] = {}

    def cmat(self, part: MatrixPart) -> np.ndarray:
        got = self._cmats.get(id(part.gens))
        if got is None:
            got = np.einsum("ij,ajk->aik", self.inv, part.gens, optimize=True)
            self._cmats[id(part.gens)] = got
        return got


def _make_state(mat: AffineMatrix, xblocks) -> _MatState | None:
    m = mat.value(xblocks)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None
    diag = np.real(np.diag(chol))
    if np.any(diag <= 0.0):
        return None
    lndet = float(2.0 * np.sum(np.log(diag)))
    inv = np.linalg.inv(m)
    inv = 0.5 * (inv + inv.conj().T)
    return _MatState(lndet, inv)


def _add_lndet_grad(out: np.ndarray, layout: Layout, mat: AffineMatrix, state: _MatState, scale: float):
    """Add ``scale * grad(ln det M)`` into ``out``."""
    for p in mat.parts:
        sl = layout.block_slice(p.block)
        out[sl] += (scale * p.coeff) * np.einsum("aij,ji->a", p.gens, state.inv, optimize=True).real


def _add_lndet_hess(out: np.ndarray, layout: Layout, mat: AffineMatrix, state: _MatState, scale: float):
    """Add ``scale * hess(ln det M)`` into ``out`` (the Hessian itself is NSD)."""
    parts = mat.parts
    ecache: dict[tuple[int, int], np.ndarray] = {}
    for i, p1 in enumerate(parts):
        c1 = state.cmat(p1)
        sl1 = layout.block_slice(p1.block)
        for p2 in parts[i:]:
            key = (id(p1.gens), id(p2.gens))
            e = ecache.get(key)
            if e is None and key[::-1] in ecache:
                e = ecache[key[::-1]].T
            if e is None:
                c2 = state.cmat(p2)
                e = np.einsum("aij,bji->ab", c1, c2, optimize=True).real
                ecache[key] = e
            sl2 = layout.block_slice(p2.block)
            blockval = (-scale * p1.coeff * p2.coeff) * e
            out[sl1, sl2] += blockval
            if p1 is not p2:
                out[sl2, sl1] += blockval.T


class _Eval:
    __slots__ = ("phi", "grad", "hess", "obj", "slacks", "states", "obj_grad")

    def __init__(self):
        self.phi = np.inf
        self.grad = None
        self.hess = None
        self.obj = np.nan
        self.slacks = None
        self.states = None
        self.obj_grad = None


def _smooth_value(func: SmoothFunc, x: np.ndarray, states) -> float:
    val = float(func.lin @ x) + func.const
    for piece in func.pieces:
        val -= piece.weight * states[id(piece.mat)].lndet
    return val


def _smooth_grad(func: SmoothFunc, layout: Layout, states) -> np.ndarray:
    g = func.lin.copy()
    for piece in func.pieces:
        _add_lndet_grad(g, layout, piece.mat, states[id(piece.mat)], -piece.weight)
    return g


def _barrier_eval(problem: BarrierProblem, x: np.ndarray, t: float, derivs: bool) -> _Eval | None:
    layout = problem.layout
    xblocks = [x[layout.block_slice(b)] for b in range(len(layout.sizes))]
    states = {}
    for mat in problem._matrices:
        st = _make_state(mat, xblocks)
        if st is None:
            return None
        states[id(mat)] = st

    out = _Eval()
    out.states = states
    out.obj = _smooth_value(problem.objective, x, states)
    slacks = []
    for h in problem.ineqs:
        s = -_smooth_value(h, x, states)
        if s <= 0.0 or not np.isfinite(s):
            return None
        slacks.append(s)
    out.slacks = np.array(slacks)
    phi = t * out.obj - float(np.sum(np.log(out.slacks))) if slacks else t * out.obj
    for cone in problem.cones:
        phi -= states[id(cone)].lndet
    out.phi = phi
    if not derivs:
        return out

    d = layout.total
    grad = np.zeros(d)
    hess = np.zeros((d, d))

    out.obj_grad = _smooth_grad(problem.objective, layout, states)
    grad += t * out.obj_grad
    for piece in problem.objective.pieces:
        _add_lndet_hess(hess, layout, piece.mat, states[id(piece.mat)], -t * piece.weight)

    for h, s in zip(problem.ineqs, out.slacks):
        gh = _smooth_grad(h, layout, states)
        grad += gh / s
        hess += np.outer(gh, gh) / (s * s)
        for piece in h.pieces:
            _add_lndet_hess(hess, layout, piece.mat, states[id(piece.mat)], -piece.weight / s)

    for cone in problem.cones:
        st = states[id(cone)]
        _add_lndet_grad(grad, layout, cone, st, -1.0)
        _add_lndet_hess(hess, layout, cone, st, -1.0)

    out.grad = grad
    out.hess = hess
    return out


def _newton_direction(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    jitter = 0.0
    scale = max(float(np.trace(hess)) / max(hess.shape[0], 1), 1.0)
    for attempt in range(4):
        try:
            h = hess if jitter == 0.0 else hess + jitter * np.eye(hess.shape[0])
            chol = np.linalg.cholesky(h)
            y = np.linalg.solve(chol, -grad)
            return np.linalg.solve(chol.conj().T, y)
        except np.linalg.LinAlgError:
            jitter = scale * (1e-12 if jitter == 0.0 else jitter / scale * 100.0)
    return np.linalg.lstsq(hess, -grad, rcond=None)[0]


def _center(problem: BarrierProblem, x: np.ndarray, t: float, ntol: float, max_newton: int) -> tuple[np.ndarray, _Eval, int]:
    """Damped Newton minimization of the barrier at fixed ``t``."""
    ev = _barrier_eval(problem, x, t, derivs=True)
    if ev is None:
        raise DomainError("starting point is not strictly feasible")
    steps = 0
    while steps < max_newton:
        direction = _newton_direction(ev.hess, ev.grad)
        lam2 = float(-ev.grad @ direction)
        if lam2 <= 2.0 * ntol:
            break
        steps += 1
        if lam2 <= 0.25:
            # quadratic-convergence regime: full step, domain-checked
            sigma = 1.0
            while sigma > 1e-18:
                cand = _barrier_eval(problem, x + sigma * direction, t, derivs=False)
                if cand is not None:
                    break
                sigma *= 0.5
            else:
                break
            x = x + sigma * direction
        else:
            sigma = 1.0
            accepted = False
            while sigma > 1e-18:
                cand = _barrier_eval(problem, x + sigma * direction, t, derivs=False)
                if cand is not None and cand.phi <= ev.phi - 0.25 * sigma * lam2:
                    accepted = True
                    break
                sigma *= 0.5
            if not accepted:
                break
            x = x + sigma * direction
        ev = _barrier_eval(problem, x, t, derivs=True)
        if ev is None:  # paranoia: accepted point must be interior
            raise DomainError("line search left the barrier domain")
    return x, ev, steps


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    t: float
    ineq_duals: np.ndarray
    kkt_residual: float
    gap: float
    newton_steps: int
    status: str

    def blocks(self, layout: Layout) -> list[np.ndarray]:
        return layout.unpack(self.x)


def solve_barrier(
    problem: BarrierProblem,
    x0: np.ndarray,
    *,
    t0: float = 1.0,
    mu: float = 20.0,
    gap_tol: float = 1e-8,
    ntol: float = 1e-9,
    final_ntol: float = 5e-14,
    max_newton: int = 120,
) -> BarrierResult:
    """Path-following solve from a strictly feasible ``x0``.

    ``gap_tol`` bounds the duality-gap proxy (total constraint dimension over
    the final barrier parameter); the reported ``kkt_residual`` is the larger
    of the normalized stationarity and complementarity residuals.
    """
    m_total = max(problem.total_constraint_dim, 1)
    t_final = m_total / gap_tol
    t = min(max(t0, 1e-3), t_final)
    x = np.array(x0, dtype=float)
    total_steps = 0
    status = "optimal"
    for _stage in range(80):
        last = t >= t_final * (1.0 - 1e-12)
        x, ev, steps = _center(problem, x, t, final_ntol if last else ntol, max_newton)
        total_steps += steps
        if last:
            break
        t = min(t * mu, t_final)
    else:
        status = "stage-cap"

    grad_norm = float(np.linalg.norm(ev.grad))
    obj_grad_norm = float(np.linalg.norm(ev.obj_grad))
    stationarity = grad_norm / t / (1.0 + obj_grad_norm)
    gap = m_total / t
    kkt = max(stationarity, gap / (1.0 + abs(ev.obj)))
    duals = 1.0 / (t * ev.slacks) if ev.slacks is not None and ev.slacks.size else np.zeros(0)
    return BarrierResult(
        x=x,
        objective=ev.obj,
        t=t,
        ineq_duals=duals,
        kkt_residual=float(kkt),
        gap=float(gap),
        newton_steps=total_steps,
        status=status,
    )
