"""Network dimensions and channel generation.

A central encoder serves ``n_ms`` mobile stations through ``n_bs`` base
stations.  Each base station is fed over a digital fronthaul/backhaul link of
finite capacity, transmits from its own antennas, and is subject to its own
power budget.  This module holds the dimension bookkeeping plus the two
channel models used in the experiments: the deterministic circulant Wyner
model and an i.i.d. Rayleigh-fading model with geometrically decaying
inter-cell gain.

All base-station and mobile-station indices are 0-based throughout the
package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NetworkConfig",
    "ChannelSet",
    "BlockSelector",
    "block_select",
    "wyner_channels",
    "fading_channels",
]


def _int_tuple(value, n: int, name: str, minimum: int = 1) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        out = (int(value),) * n
    else:
        out = tuple(int(v) for v in value)
    if len(out) != n:
        raise ValueError(f"{name} must have length {n}, got {len(out)}")
    if any(v < minimum for v in out):
        raise ValueError(f"{name} entries must be >= {minimum}, got {out}")
    return out


def _float_tuple(value, n: int, name: str, minimum: float, strict: bool) -> tuple[float, ...]:
    if isinstance(value, (int, float, np.floating, np.integer)):
        out = (float(value),) * n
    else:
        out = tuple(float(v) for v in value)
    if len(out) != n:
        raise ValueError(f"{name} must have length {n}, got {len(out)}")
    bad = [v for v in out if (v <= minimum if strict else v < minimum) or not np.isfinite(v)]
    if bad:
        raise ValueError(f"{name} entries must be {'>' if strict else '>='} {minimum} and finite, got {out}")
    return out


@dataclass(frozen=True, eq=True)
class NetworkConfig:
    """Static description of one downlink instance.

    Scalars broadcast to per-node tuples, so ``NetworkConfig(3, 3, powers=2.0,
    backhaul=4.0)`` describes three single-antenna cells with identical
    budgets.  Powers are linear-scale and backhaul capacities are bits per
    channel use; any dB conversion happens at the CLI boundary, never here.
    """

    n_bs: int
    n_ms: int
    bs_antennas: tuple[int, ...] = 1
    ms_antennas: tuple[int, ...] = 1
    powers: tuple[float, ...] = 1.0
    backhaul: tuple[float, ...] = 1.0
    weights: tuple[float, ...] = 1.0
    streams: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_bs < 1 or self.n_ms < 1:
            raise ValueError("n_bs and n_ms must be >= 1")
        object.__setattr__(self, "bs_antennas", _int_tuple(self.bs_antennas, self.n_bs, "bs_antennas"))
        object.__setattr__(self, "ms_antennas", _int_tuple(self.ms_antennas, self.n_ms, "ms_antennas"))
        object.__setattr__(self, "powers", _float_tuple(self.powers, self.n_bs, "powers", 0.0, strict=True))
        object.__setattr__(self, "backhaul", _float_tuple(self.backhaul, self.n_bs, "backhaul", 0.0, strict=False))
        object.__setattr__(self, "weights", _float_tuple(self.weights, self.n_ms, "weights", 0.0, strict=False))
        streams = self.ms_antennas if self.streams is None else _int_tuple(self.streams, self.n_ms, "streams")
        if any(r > m for r, m in zip(streams, self.ms_antennas)):
            raise ValueError(f"streams {streams} may not exceed ms_antennas {self.ms_antennas}")
        object.__setattr__(self, "streams", streams)

    @property
    def total_bs_antennas(self) -> int:
        return sum(self.bs_antennas)

    @property
    def total_ms_antennas(self) -> int:
        return sum(self.ms_antennas)

    @property
    def total_streams(self) -> int:
        return sum(self.streams)

    def bs_offset(self, i: int) -> int:
        return sum(self.bs_antennas[:i])

    def bs_slice(self, i: int) -> slice:
        off = self.bs_offset(i)
        return slice(off, off + self.bs_antennas[i])

    def bs_rows(self, subset: Iterable[int]) -> np.ndarray:
        """Stacked antenna-row indices of a base-station subset, ascending."""
        idx = sorted(set(int(i) for i in subset))
        if not idx:
            raise ValueError("subset must be nonempty")
        if idx[0] < 0 or idx[-1] >= self.n_bs:
            raise ValueError(f"subset {idx} out of range for {self.n_bs} base stations")
        return np.concatenate([np.arange(self.bs_slice(i).start, self.bs_slice(i).stop) for i in idx])


@dataclass(frozen=True)
class BlockSelector:
    """Row selection realizing the per-station antenna blocks of a stacked vector.

    ``rows`` holds the 0-based stacked antenna indices of ``subset`` in
    ascending station order; ``matrix()`` materializes the corresponding
    0/1 selection matrix (total antennas x selected antennas).
    """

    cfg: NetworkConfig
    subset: tuple[int, ...]
    rows: np.ndarray

    def matrix(self) -> np.ndarray:
        e = np.zeros((self.cfg.total_bs_antennas, self.rows.size))
        e[self.rows, np.arange(self.rows.size)] = 1.0
        return e

    def take(self, vec: np.ndarray) -> np.ndarray:
        """Extract the selected rows from a stacked vector (or row-indexed array)."""
        return vec[..., self.rows]

    def principal(self, mat: np.ndarray) -> np.ndarray:
        """Principal submatrix on the selected rows/columns."""
        return mat[np.ix_(self.rows, self.rows)]


def block_select(cfg: NetworkConfig, subset: Iterable[int]) -> BlockSelector:
    idx = tuple(sorted(set(int(i) for i in subset)))
    rows = cfg.bs_rows(idx)
    rows.setflags(write=False)
    return BlockSelector(cfg, idx, rows)


@dataclass(frozen=True)
class ChannelSet:
    """Per-mobile channel matrices, each of shape (ms antennas, total BS antennas)."""

    cfg: NetworkConfig
    per_ms: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.per_ms) != self.cfg.n_ms:
            raise ValueError(f"expected {self.cfg.n_ms} channel matrices, got {len(self.per_ms)}")
        frozen = []
        for k, h in enumerate(self.per_ms):
            h = np.asarray(h, dtype=complex)
            want = (self.cfg.ms_antennas[k], self.cfg.total_bs_antennas)
            if h.shape != want:
                raise ValueError(f"channel {k} has shape {h.shape}, expected {want}")
            if not np.all(np.isfinite(h)):
                raise ValueError(f"channel {k} has non-finite entries")
            h = h.copy()
            h.setflags(write=False)
            frozen.append(h)
        object.__setattr__(self, "per_ms", tuple(frozen))

    def block(self, k: int, i: int) -> np.ndarray:
        """Channel from base station ``i`` to mobile ``k``."""
        return self.per_ms[k][:, self.cfg.bs_slice(i)]

    def stacked(self) -> np.ndarray:
        return np.vstack(self.per_ms)


def wyner_channels(cfg: NetworkConfig, gain: float) -> ChannelSet:
    """Circulant Wyner channels: unit direct gain, ``gain`` to every other cell.

    Requires a square, single-antenna layout (one single-antenna mobile per
    cell).
    """
    if not (0.0 <= gain <= 1.0):
        raise ValueError(f"inter-cell gain must be in [0, 1], got {gain}")
    if cfg.n_bs != cfg.n_ms:
        raise ValueError("Wyner model requires one mobile per cell (n_bs == n_ms)")
    if any(a != 1 for a in cfg.bs_antennas) or any(a != 1 for a in cfg.ms_antennas):
        raise ValueError("Wyner model requires single-antenna nodes")
    mats = []
    for k in range(cfg.n_ms):
        row = np.full((1, cfg.n_bs), gain, dtype=complex)
        row[0, k] = 1.0
        mats.append(row)
    return ChannelSet(cfg, tuple(mats))


def _complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    # Polar Box-Muller: radius from the exponential quantile, uniform phase.
    u = 1.0 - rng.random(shape)
    v = rng.random(shape)
    return np.sqrt(-variance * np.log(u)) * np.exp(2j * np.pi * v)


def fading_channels(cfg: NetworkConfig, alpha: float, seed: int) -> ChannelSet:
    """Rayleigh-fading channels with per-entry variance ``alpha**|i - k|``.

    Entries of the block from station ``i`` to mobile ``k`` are i.i.d.
    circularly symmetric complex Gaussian.  Each (mobile, station) block is
    drawn from its own stream keyed by ``SeedSequence(seed, spawn_key=(k, i))``
    through the polar Box-Muller transform, so a given block is reproducible
    regardless of evaluation order.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    mats = []
    for k in range(cfg.n_ms):
        blocks = []
        for i in range(cfg.n_bs):
            ss = np.random.SeedSequence(seed, spawn_key=(k, i))
            rng = np.random.Generator(np.random.PCG64(ss))
            var = float(alpha) ** abs(i - k)
            blocks.append(_complex_gaussian(rng, (cfg.ms_antennas[k], cfg.bs_antennas[i]), var))
        mats.append(np.hstack(blocks))
    return ChannelSet(cfg, tuple(mats))
