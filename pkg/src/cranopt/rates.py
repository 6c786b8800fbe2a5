"""Closed-form rate and backhaul evaluators.

Everything here is a pure function of a channel set, a precoder and a joint
quantization-noise covariance.  Rates are in bits per channel use (base-2
logarithms throughout).

The transmitted vector is ``x = A s + q`` with ``s ~ CN(0, I)`` and
``q ~ CN(0, Omega)``, so a mobile decoding its own streams sees user rate

    log2 det(I + H (A A^H + Omega) H^H) - log2 det(I + H (J + Omega) H^H)

with ``J`` the interference covariance.  The backhaul cost of delivering the
compressed signals of a station subset S is

    g(S) = sum_{i in S} log2 det(B_i A A^H B_i^H + Omega_ii) - log2 det(Omega_SS)

which reduces to the per-station independent-compression cost when the
off-diagonal blocks of Omega vanish.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import ChannelSet, NetworkConfig

__all__ = [
    "Precoder",
    "QuantCov",
    "RateReport",
    "FeasibilityReport",
    "user_rate",
    "dpc_rate",
    "independent_backhaul_rate",
    "backhaul_subset_rate",
    "check_feasible",
    "corner_point",
    "detect_corner_ordering",
    "weighted_sum_rate",
    "all_subsets",
]

LN2 = float(np.log(2.0))

#: Eigenvalue floor below which quantization covariances are regularized
#: before log-det evaluation.
REG_FLOOR = 1e-10

#: Largest station count for which the exponential subset enumeration runs.
MAX_ENUM_BS = 12

#: Ingestion tolerance on the most negative eigenvalue of a covariance.
PSD_TOL = 1e-8


def logdet_pd(mat: np.ndarray) -> float:
    """Base-2 log-determinant of a Hermitian positive definite matrix."""
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"matrix is not positive definite: {exc}") from exc
    return float(2.0 * np.sum(np.log(np.real(np.diag(chol)))) / LN2)


def _hermitize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


@dataclass(frozen=True)
class Precoder:
    """Per-mobile precoding matrices, each of shape (total BS antennas, streams)."""

    cfg: NetworkConfig
    matrices: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.matrices) != self.cfg.n_ms:
            raise ValueError(f"expected {self.cfg.n_ms} precoding matrices, got {len(self.matrices)}")
        frozen = []
        for k, a in enumerate(self.matrices):
            a = np.asarray(a, dtype=complex)
            want = (self.cfg.total_bs_antennas, self.cfg.streams[k])
            if a.shape != want:
                raise ValueError(f"precoder {k} has shape {a.shape}, expected {want}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"precoder {k} has non-finite entries")
            a = a.copy()
            a.setflags(write=False)
            frozen.append(a)
        object.__setattr__(self, "matrices", tuple(frozen))

    @classmethod
    def zero(cls, cfg: NetworkConfig) -> "Precoder":
        return cls(cfg, tuple(np.zeros((cfg.total_bs_antennas, r), dtype=complex) for r in cfg.streams))

    def covariance(self, k: int) -> np.ndarray:
        """Transmit covariance of mobile ``k``."""
        a = self.matrices[k]
        return a @ a.conj().T

    def covariances(self) -> list[np.ndarray]:
        return [self.covariance(k) for k in range(self.cfg.n_ms)]

    def gram(self) -> np.ndarray:
        """Total transmit covariance (sum over mobiles)."""
        out = np.zeros((self.cfg.total_bs_antennas,) * 2, dtype=complex)
        for k in range(self.cfg.n_ms):
            out += self.covariance(k)
        return out

    def stacked(self) -> np.ndarray:
        return np.hstack(self.matrices)


@dataclass(frozen=True)
class QuantCov:
    """Joint quantization-noise covariance over all stacked BS antennas.

    The matrix is Hermitian-symmetrized on ingestion and must be positive
    semidefinite within :data:`PSD_TOL`.
    """

    cfg: NetworkConfig
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.cfg.total_bs_antennas
        if m.shape != (n, n):
            raise ValueError(f"quantization covariance has shape {m.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(m)):
            raise ValueError("quantization covariance has non-finite entries")
        m = _hermitize(m)
        lam_min = float(np.linalg.eigvalsh(m)[0]) if n else 0.0
        if lam_min < -PSD_TOL:
            raise ValueError(f"quantization covariance is not PSD (min eigenvalue {lam_min:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def zero(cls, cfg: NetworkConfig) -> "QuantCov":
        return cls(cfg, np.zeros((cfg.total_bs_antennas,) * 2, dtype=complex))

    @classmethod
    def from_blocks(cls, cfg: NetworkConfig, blocks: Sequence[np.ndarray]) -> "QuantCov":
        """Block-diagonal covariance from per-station blocks."""
        n = cfg.total_bs_antennas
        m = np.zeros((n, n), dtype=complex)
        for i, b in enumerate(blocks):
            sl = cfg.bs_slice(i)
            m[sl, sl] = b
        return cls(cfg, m)

    def block(self, i: int, j: int) -> np.ndarray:
        return self.matrix[self.cfg.bs_slice(i), self.cfg.bs_slice(j)]

    def is_block_diagonal(self, tol: float = 0.0) -> bool:
        for i in range(self.cfg.n_bs):
            for j in range(self.cfg.n_bs):
                if i != j and np.max(np.abs(self.block(i, j))) > tol:
                    return False
        return True


# ---------------------------------------------------------------------------
# user and DPC rates
# ---------------------------------------------------------------------------


def rate_from_covariances(
    k: int,
    chans: ChannelSet,
    signal_covs: Sequence[np.ndarray],
    interference_covs: Sequence[np.ndarray],
    omega: np.ndarray | None,
) -> float:
    """Rate of mobile ``k`` for explicit signal/interference covariance lists."""
    h = chans.per_ms[k]
    n_rx = h.shape[0]
    om = 0.0 if omega is None else omega
    sig = sum(signal_covs) + om if signal_covs else om
    intf = sum(interference_covs) + om if interference_covs else om
    eye = np.eye(n_rx)
    top = eye if isinstance(sig, float) else _hermitize(eye + h @ sig @ h.conj().T)
    bot = eye if isinstance(intf, float) else _hermitize(eye + h @ intf @ h.conj().T)
    rate = logdet_pd(top) - logdet_pd(bot)
    if rate < -1e-9:
        raise ArithmeticError(f"negative rate {rate} for mobile {k}; inconsistent covariances")
    return max(rate, 0.0)


def user_rate(k: int, chans: ChannelSet, prec: Precoder, q: QuantCov) -> float:
    """Achievable rate of mobile ``k`` with single-user detection, in bits/c.u."""
    covs = prec.covariances()
    others = [covs[j] for j in range(len(covs)) if j != k]
    return rate_from_covariances(k, chans, covs, others, q.matrix)


def dpc_rate(
    position: int,
    order: Sequence[int],
    chans: ChannelSet,
    prec: Precoder,
    q: QuantCov,
) -> float:
    """Rate of the mobile encoded at ``position`` under dirty-paper encoding order ``order``.

    Interference is limited to mobiles encoded after ``position``; the
    quantization noise is never cancelled.
    """
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(chans.cfg.n_ms)):
        raise ValueError(f"order {order} is not a permutation of 0..{chans.cfg.n_ms - 1}")
    if not (0 <= position < len(order)):
        raise ValueError(f"position {position} out of range")
    covs = prec.covariances()
    k = order[position]
    signal = [covs[order[l]] for l in range(position, len(order))]
    interference = [covs[order[l]] for l in range(position + 1, len(order))]
    return rate_from_covariances(k, chans, signal, interference, q.matrix)


# ---------------------------------------------------------------------------
# backhaul usage
# ---------------------------------------------------------------------------


def _regularized_omega(q: QuantCov, rows: np.ndarray) -> tuple[np.ndarray, bool]:
    """Quantization covariance to use for a subset evaluation.

    If the principal block on ``rows`` has an eigenvalue below
    :data:`REG_FLOOR`, the whole covariance is shifted by ``REG_FLOOR * I`` so
    that the first and second log-det terms stay mutually consistent.
    """
    block = q.matrix[np.ix_(rows, rows)]
    lam_min = float(np.linalg.eigvalsh(_hermitize(block))[0])
    if lam_min >= REG_FLOOR:
        return q.matrix, False
    return q.matrix + REG_FLOOR * np.eye(q.matrix.shape[0]), True


def _subset_rate(cfg: NetworkConfig, gram: np.ndarray, omega: np.ndarray, subset: Sequence[int]) -> float:
    total = 0.0
    for i in subset:
        sl = cfg.bs_slice(i)
        total += logdet_pd(_hermitize(gram[sl, sl] + omega[sl, sl]))
    rows = cfg.bs_rows(subset)
    total -= logdet_pd(_hermitize(omega[np.ix_(rows, rows)]))
    return total


def backhaul_subset_rate(subset: Iterable[int], prec: Precoder, q: QuantCov) -> float:
    """Joint backhaul usage of a station subset, in bits/c.u."""
    cfg = prec.cfg
    idx = tuple(sorted(set(int(i) for i in subset)))
    rows = cfg.bs_rows(idx)
    omega, _ = _regularized_omega(q, rows)
    try:
        value = _subset_rate(cfg, prec.gram(), omega, idx)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular quantization block for subset {idx}: {exc}") from exc
    return max(value, 0.0)


def independent_backhaul_rate(i: int, prec: Precoder, q: QuantCov) -> float:
    """Backhaul usage of station ``i`` alone (single-station compression cost)."""
    return backhaul_subset_rate((i,), prec, q)


def all_subsets(n_bs: int) -> list[tuple[int, ...]]:
    """Every nonempty station subset, smallest first, lexicographic within size."""
    if n_bs > MAX_ENUM_BS:
        raise ValueError(f"subset enumeration capped at {MAX_ENUM_BS} stations, got {n_bs}")
    out: list[tuple[int, ...]] = []
    for size in range(1, n_bs + 1):
        out.extend(itertools.combinations(range(n_bs), size))
    return out


def bs_power(cfg: NetworkConfig, prec: Precoder, q: QuantCov, i: int) -> float:
    """Transmit power of station ``i``: trace of its signal-plus-noise block."""
    sl = cfg.bs_slice(i)
    gram = prec.gram()
    return float(np.real(np.trace(gram[sl, sl]) + np.trace(q.matrix[sl, sl])))


@dataclass(frozen=True)
class FeasibilityReport:
    """Exhaustive constraint evaluation for one design point."""

    subsets: tuple[tuple[int, ...], ...]
    backhaul_usage: tuple[float, ...]
    backhaul_caps: tuple[float, ...]
    power_used: tuple[float, ...]
    power_caps: tuple[float, ...]
    worst_violation: float
    regularized: bool

    def is_feasible(self, tol: float = 1e-9) -> bool:
        return self.worst_violation <= tol

    def active_backhaul(self, tol: float) -> tuple[tuple[int, ...], ...]:
        return tuple(
            s
            for s, use, cap in zip(self.subsets, self.backhaul_usage, self.backhaul_caps)
            if abs(use - cap) <= tol
        )

    def active_power(self, tol: float) -> tuple[int, ...]:
        return tuple(i for i, (use, cap) in enumerate(zip(self.power_used, self.power_caps)) if abs(use - cap) <= tol)


def check_feasible(cfg: NetworkConfig, prec: Precoder, q: QuantCov, tol: float = 1e-9) -> FeasibilityReport:
    """Evaluate every backhaul-subset and per-station power constraint.

    ``worst_violation`` is the largest signed constraint excess (negative when
    everything holds with slack).  Enumeration is exact and therefore capped
    at :data:`MAX_ENUM_BS` stations.
    """
    subsets = tuple(all_subsets(cfg.n_bs))
    gram = prec.gram()
    usage = []
    caps = []
    regularized = False
    for s in subsets:
        rows = cfg.bs_rows(s)
        omega, flagged = _regularized_omega(q, rows)
        regularized = regularized or flagged
        try:
            usage.append(max(_subset_rate(cfg, gram, omega, s), 0.0))
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"singular quantization block for subset {s}: {exc}") from exc
        caps.append(sum(cfg.backhaul[i] for i in s))
    power_used = tuple(bs_power(cfg, prec, q, i) for i in range(cfg.n_bs))
    worst = max(
        max(u - c for u, c in zip(usage, caps)),
        max(p - cap for p, cap in zip(power_used, cfg.powers)),
    )
    return FeasibilityReport(
        subsets=subsets,
        backhaul_usage=tuple(usage),
        backhaul_caps=tuple(caps),
        power_used=power_used,
        power_caps=cfg.powers,
        worst_violation=float(worst),
        regularized=regularized,
    )


# ---------------------------------------------------------------------------
# corner points of the backhaul region
# ---------------------------------------------------------------------------


def corner_point(order: Sequence[int], prec: Precoder, q: QuantCov) -> tuple[float, ...]:
    """Per-station backhaul rates of the corner point for station order ``order``.

    Entry ``i`` is the rate of station ``order[i]``: its single-station cost
    with the quantization-noise block replaced by the conditional (Schur
    complement) covariance given the stations earlier in the order.  Prefix
    sums of the result telescope to the subset usage of the prefix sets.
    """
    cfg = prec.cfg
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(cfg.n_bs)):
        raise ValueError(f"order {order} is not a permutation of 0..{cfg.n_bs - 1}")
    rows_all = cfg.bs_rows(order)
    omega, _ = _regularized_omega(q, rows_all)
    gram = prec.gram()
    rates = []
    prev_rows = np.array([], dtype=int)
    for b in order:
        sl = cfg.bs_slice(b)
        own = _hermitize(omega[sl, sl])
        if prev_rows.size:
            cross = omega[sl, prev_rows]
            prior = _hermitize(omega[np.ix_(prev_rows, prev_rows)])
            try:
                solved = np.linalg.solve(prior, cross.conj().T)
            except np.linalg.LinAlgError as exc:
                raise ValueError(f"singular prefix block before station {b}: {exc}") from exc
            cond = _hermitize(own - cross @ solved)
        else:
            cond = own
        first = logdet_pd(_hermitize(gram[sl, sl] + own))
        try:
            second = logdet_pd(cond)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"singular conditional block at station {b}: {exc}") from exc
        rates.append(max(first - second, 0.0))
        prev_rows = np.concatenate([prev_rows, np.arange(sl.start, sl.stop)])
    return tuple(rates)


def detect_corner_ordering(
    cfg: NetworkConfig,
    prec: Precoder,
    q: QuantCov,
    tol: float = 1e-6,
) -> tuple[int, ...] | None:
    """Station order whose nested prefix subsets all meet their caps with equality.

    Returns the lexicographically smallest such order, or ``None`` when no
    chain of tight constraints exists (an interior solution, for instance).
    """
    subsets = all_subsets(cfg.n_bs)
    gram = prec.gram()
    tight: set[frozenset[int]] = set()
    for s in subsets:
        rows = cfg.bs_rows(s)
        omega, _ = _regularized_omega(q, rows)
        usage = max(_subset_rate(cfg, gram, omega, s), 0.0)
        cap = sum(cfg.backhaul[i] for i in s)
        if abs(usage - cap) <= tol:
            tight.add(frozenset(s))

    def extend(prefix: list[int]) -> tuple[int, ...] | None:
        if len(prefix) == cfg.n_bs:
            return tuple(prefix)
        for b in range(cfg.n_bs):
            if b in prefix:
                continue
            if frozenset(prefix + [b]) in tight:
                found = extend(prefix + [b])
                if found is not None:
                    return found
        return None

    return extend([])


def weighted_sum_rate(cfg: NetworkConfig, chans: ChannelSet, prec: Precoder, q: QuantCov) -> "RateReport":
    """Weighted sum-rate report with per-subset backhaul usage and station powers."""
    per_ms = tuple(user_rate(k, chans, prec, q) for k in range(cfg.n_ms))
    weighted = float(sum(w * r for w, r in zip(cfg.weights, per_ms)))
    subsets = tuple(all_subsets(cfg.n_bs))
    usage = tuple(backhaul_subset_rate(s, prec, q) for s in subsets)
    powers = tuple(bs_power(cfg, prec, q, i) for i in range(cfg.n_bs))
    return RateReport(
        per_ms_rates=per_ms,
        weights=cfg.weights,
        weighted_sum=weighted,
        subsets=subsets,
        backhaul_usage=usage,
        bs_powers=powers,
    )


@dataclass(frozen=True)
class RateReport:
    per_ms_rates: tuple[float, ...]
    weights: tuple[float, ...]
    weighted_sum: float
    subsets: tuple[tuple[int, ...], ...]
    backhaul_usage: tuple[float, ...]
    bs_powers: tuple[float, ...]

    @property
    def sum_rate(self) -> float:
        return float(sum(self.per_ms_rates))
