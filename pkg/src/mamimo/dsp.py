"""Downlink precoding, received-power maps and spectral-efficiency metrics.

Conventions: user channels are M-vectors per subcarrier, the signal a user
receives from precoding vector w is h^T w (plain transpose; the conjugation
lives in the weights), and precoding is computed independently per
subcarrier with wideband figures averaged over the pilot subcarriers.
Transmit power is split equally over scheduled users; no water-filling.
"""

from __future__ import annotations

import enum
import statistics
from dataclasses import dataclass

import numpy as np

from .model import CsiSample, Position3, SampleGrid


class PrecodingScheme(enum.Enum):
    MRT = "mrt"
    ZF = "zf"


@dataclass(frozen=True, slots=True)
class LinkBudget:
    """Total downlink power and noise floor, both linear."""

    total_tx_power: float = 1.0
    noise_power: float = 1e-3

    def __post_init__(self):
        if self.total_tx_power <= 0 or self.noise_power < 0:
            raise ValueError("powers must be positive (noise may be zero)")

    def per_user_power(self, n_users: int) -> float:
        return self.total_tx_power / n_users


class PrecodingWeights:
    """Per-subcarrier unit-norm beamforming vectors for K scheduled users.

    ``w`` has shape (K, M, F); each (M,) vector w[k, :, f] has unit norm.
    """

    def __init__(self, w, scheme: PrecodingScheme):
        w = np.array(w, dtype=np.complex128, order="C")
        if w.ndim != 3:
            raise ValueError("weights must have shape (K, M, F)")
        norms = np.linalg.norm(w, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("each per-user, per-subcarrier vector must have unit norm")
        w.flags.writeable = False
        self.w = w
        self.scheme = scheme

    @property
    def n_users(self) -> int:
        return self.w.shape[0]

    def per_user(self, k: int) -> np.ndarray:
        return self.w[k]


def mrt_weights(h: np.ndarray) -> PrecodingWeights:
    """Maximum-ratio weights for one user: w_k = conj(h_k) / ||h_k||.

    Maximises h^T w per subcarrier (the Cauchy-Schwarz equality case), so
    the received amplitude at the matched channel is exactly ||h_k||.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2:
        raise ValueError("channel must be an M x F matrix")
    norms = np.linalg.norm(h, axis=0)
    if np.any(norms == 0.0):
        k = int(np.flatnonzero(norms == 0.0)[0])
        raise ValueError(f"zero channel column at subcarrier {k}")
    return PrecodingWeights((np.conj(h) / norms)[None, :, :], PrecodingScheme.MRT)


def zf_weights(H: np.ndarray) -> PrecodingWeights:
    """Zero-forcing weights for K stacked users, H of shape (K, M, F).

    Per subcarrier the unnormalized weights are the columns of
    H^H (H H^H)^-1, which satisfy h_j^T w_k = delta_jk; each column is then
    scaled to unit norm (preserving the nulls).
    """
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 3:
        raise ValueError("stacked channels must have shape (K, M, F)")
    K, M, F = H.shape
    if K > M:
        raise ValueError(f"cannot zero-force {K} users with {M} antennas")
    Hf = np.moveaxis(H, 2, 0)  # (F, K, M)
    sv = np.linalg.svd(Hf, compute_uv=False)  # (F, K)
    bad = np.flatnonzero(sv[:, -1] <= sv[:, 0] * 1e-12)
    if bad.size:
        raise ValueError(f"rank-deficient channel matrix at subcarrier {int(bad[0])}")
    gram = Hf @ np.conj(np.transpose(Hf, (0, 2, 1)))  # (F, K, K)
    W = np.conj(np.transpose(Hf, (0, 2, 1))) @ np.linalg.inv(gram)  # (F, M, K)
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    return PrecodingWeights(np.transpose(W, (2, 1, 0)), PrecodingScheme.ZF)


def received_power(h_eval: np.ndarray, weights: PrecodingWeights,
                   budget: LinkBudget, user: int = 0):
    """Power received at an evaluation channel from one user's beams.

    Returns (per_subcarrier, total) linear powers, where per-subcarrier
    power is P_user * |h_k^T w_k|^2 and the total is the mean over
    subcarriers. P_user is the equal split of the budget over the weights'
    scheduled users.
    """
    h_eval = np.asarray(h_eval, dtype=np.complex128)
    w = weights.per_user(user)
    if h_eval.shape != w.shape:
        raise ValueError(f"evaluation channel {h_eval.shape} does not match weights {w.shape}")
    p_user = budget.per_user_power(weights.n_users)
    amps = np.einsum("mf,mf->f", h_eval, w)
    per_subcarrier = p_user * np.abs(amps) ** 2
    return per_subcarrier, float(np.mean(per_subcarrier))


class PowerMap:
    """Received power over a positioner grid for one beamformed target.

    ``values`` is (ny, nx), raster-ordered (row-major, x fastest), linear
    power. A map starts out unnormalized; ``normalize_power_maps`` scales
    one or several maps by their common maximum so the peak node becomes 1.
    """

    def __init__(self, grid: SampleGrid, values, target: Position3, normalized: bool = False):
        values = np.array(values, dtype=np.float64, order="C")
        if values.shape != (grid.ny, grid.nx):
            raise ValueError(f"values shape {values.shape} does not match grid {grid.ny}x{grid.nx}")
        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("power values must be finite and nonnegative")
        if normalized and values.size and values.max() > 1.0 + 1e-12:
            raise ValueError("normalized map must not exceed 1")
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self.target = target
        self.normalized = normalized

    def argmax_node(self) -> tuple[int, int]:
        """(iy, ix) of the strongest node."""
        iy, ix = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(iy), int(ix)

    def node_position(self, iy: int, ix: int) -> Position3:
        g = self.grid
        return Position3(g.origin.x + ix * g.resolution_mm,
                         g.origin.y + iy * g.resolution_mm, g.origin.z)


def power_map(grid: SampleGrid, samples, target: CsiSample,
              budget: LinkBudget = LinkBudget(),
              scheme: PrecodingScheme = PrecodingScheme.MRT) -> PowerMap:
    """Evaluate one user's beamforming pattern over a grid of channels.

    ``samples`` supplies one CsiSample per grid node in raster order
    (an iterable; a dataset stream works). Weights are computed once from
    the target sample, then every node's channel is evaluated against them.
    The result is unnormalized; normalization is a separate, explicit step
    because the comparison set (a single map, or several maps that must
    share a colour scale) is the caller's choice.
    """
    if scheme is PrecodingScheme.MRT:
        weights = mrt_weights(target.h)
    elif scheme is PrecodingScheme.ZF:
        weights = zf_weights(target.h[None, :, :])
    else:
        raise ValueError(f"unknown precoding scheme {scheme!r}")
    values = np.empty(grid.node_count, dtype=np.float64)
    count = 0
    for i, sample in enumerate(samples):
        if i >= grid.node_count:
            raise ValueError(f"more samples than the {grid.node_count} grid nodes")
        if sample.h.shape != target.h.shape:
            raise ValueError(f"sample {i} shape {sample.h.shape} does not match target")
        _, values[i] = received_power(sample.h, weights, budget)
        count += 1
    if count != grid.node_count:
        raise ValueError(f"got {count} samples for {grid.node_count} grid nodes")
    return PowerMap(grid, values.reshape(grid.ny, grid.nx), target.label or Position3(0, 0, 0))


def normalize_power_maps(maps) -> list[PowerMap]:
    """Scale one or several maps by their common maximum power."""
    maps = list(maps)
    if not maps:
        raise ValueError("no maps to normalize")
    peak = max(float(m.values.max()) for m in maps)
    if peak <= 0.0:
        raise ValueError("all-zero power maps cannot be normalized")
    return [PowerMap(m.grid, m.values / peak, m.target, normalized=True) for m in maps]


def power_map_to_csv(pmap: PowerMap, path) -> None:
    """Write ``x_mm,y_mm,power_db`` rows in raster order."""
    g = pmap.grid
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(pmap.values)
    lines = ["x_mm,y_mm,power_db"]
    for iy in range(g.ny):
        y = g.origin.y + iy * g.resolution_mm
        for ix in range(g.nx):
            x = g.origin.x + ix * g.resolution_mm
            lines.append(f"{x!r},{y!r},{float(db[iy, ix])!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def power_map_to_pgm(pmap: PowerMap, path, db_range: tuple[float, float] = (-40.0, 0.0)) -> None:
    """Render the map as a 16-bit binary PGM (P5) over a dB dynamic range.

    Linear dB-to-gray mapping: db_range[0] and below -> 0, db_range[1] and
    above -> 65535. Row 0 of the image is the row nearest the grid origin.
    """
    lo, hi = db_range
    if hi <= lo:
        raise ValueError("db_range must be increasing")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(pmap.values)
    unit = np.clip((db - lo) / (hi - lo), 0.0, 1.0)
    gray = np.round(unit * 65535.0).astype(">u2")
    header = f"P5\n{pmap.grid.nx} {pmap.grid.ny}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(gray.tobytes())


def group_spectral_efficiency(H_group: np.ndarray,
                              scheme: PrecodingScheme,
                              budget: LinkBudget):
    """Per-user and sum spectral efficiency of one simultaneously served group.

    For users stacked as (K, M, F):

        SINR_k,f = P_k |h_k,f^T w_k,f|^2 / (sigma^2 + sum_{j!=k} P_j |h_k,f^T w_j,f|^2)
        SE_k = mean_f log2(1 + SINR_k,f)

    with the equal power split P_k = P_total / K. Returns (per_user, sum).
    """
    H_group = np.asarray(H_group, dtype=np.complex128)
    if H_group.ndim != 3:
        raise ValueError("group channels must have shape (K, M, F)")
    K = H_group.shape[0]
    if scheme is PrecodingScheme.ZF:
        weights = zf_weights(H_group)
        w = weights.w  # (K, M, F)
    elif scheme is PrecodingScheme.MRT:
        w = np.stack([mrt_weights(H_group[k]).w[0] for k in range(K)])
    else:
        raise ValueError(f"unknown precoding scheme {scheme!r}")
    p = budget.per_user_power(K)
    # amps[k, j, f] = h_k,f^T w_j,f
    amps = np.einsum("kmf,jmf->kjf", H_group, w)
    powers = p * np.abs(amps) ** 2
    signal = np.einsum("kkf->kf", powers)
    interference = powers.sum(axis=1) - signal
    with np.errstate(divide="ignore"):
        sinr = signal / (budget.noise_power + interference)
    se = np.mean(np.log2(1.0 + sinr), axis=1)
    return se, float(np.sum(se))


def max_served_users(user_pool, se_threshold: float = 1.0, trials: int = 5,
                     seed: int = 0, budget: LinkBudget = LinkBudget()) -> float:
    """How many users zero-forcing can serve before someone drops below a floor.

    Each trial draws users uniformly without replacement, adding one at a
    time and recomputing the zero-forcing group SE; the trial stops when any
    served user falls below ``se_threshold`` (or the pool / antenna count is
    exhausted) and scores the last feasible group size. Returns the median
    score over trials. Deterministic for a fixed seed.
    """
    pool = list(user_pool)
    if not pool:
        raise ValueError("user pool is empty")
    if se_threshold <= 0:
        raise ValueError("se_threshold must be positive")
    n_antennas = pool[0].n_antennas
    rng = np.random.default_rng(seed)
    scores = []
    for _ in range(trials):
        order = rng.permutation(len(pool))
        feasible = 0
        k_max = min(len(pool), n_antennas)
        for k in range(1, k_max + 1):
            H = np.stack([pool[i].h for i in order[:k]])
            try:
                se, _ = group_spectral_efficiency(H, PrecodingScheme.ZF, budget)
            except ValueError:
                break  # rank-deficient: adding this user is infeasible
            if np.min(se) < se_threshold:
                break
            feasible = k
        scores.append(feasible)
    return statistics.median(scores)
