"""Online dictionary learning from partially observed samples.

Each sample is a pair ``(obs, x_obs)`` where ``obs`` holds the observed
coordinates and ``x_obs`` their values. The dictionary update only needs
running sums over past samples, discounted by ``gamma_t = (1 - 1/t)**rho``:

    C[:, j] = sum_i w_i * mask_i * alpha_ij**2          (diagonal of C_j)
    B       = sum_i w_i * mask_i * x_i alpha_i'
    e[:, j] ~ sum_i w_i * mask_i * (D alpha_i) alpha_ij

with ``w_i = (s_i / t)**rho`` for a sample processed at step ``s_i``. C and B
are exact; ``e`` freezes each sample's contribution at the dictionary used
when the sample was absorbed.

Statistics arrays are stored column-per-atom, shape ``(obs_dim, code_dim)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .coder import CoderConfig, omega, solve_code
from .groups import GroupStructure

logger = logging.getLogger(__name__)

Sample = Tuple[np.ndarray, np.ndarray]

_TINY = 1e-12


@dataclass
class Dictionary:
    matrix: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def code_dim(self) -> int:
        return self.matrix.shape[1]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=0)


@dataclass
class LearnerStats:
    C: np.ndarray
    B: np.ndarray
    e: np.ndarray
    rho: float
    t: int = 0
    n_samples: int = 0
    n_skipped: int = 0

    @classmethod
    def zeros(cls, obs_dim: int, code_dim: int, rho: float) -> "LearnerStats":
        shape = (obs_dim, code_dim)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape), rho)

    def copy(self) -> "LearnerStats":
        return LearnerStats(self.C.copy(), self.B.copy(), self.e.copy(), self.rho,
                            self.t, self.n_samples, self.n_skipped)


@dataclass(frozen=True)
class LearnerConfig:
    coder: CoderConfig
    rho: float = 0.0
    minibatch_size: int = 8
    bcd_iters: int = 5
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be non-negative, got {self.rho}")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.bcd_iters < 1:
            raise ValueError("bcd_iters must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def project_column(u) -> np.ndarray:
    """Euclidean projection onto the unit ball."""
    u = np.asarray(u, dtype=float)
    n = np.linalg.norm(u)
    return u / n if n > 1.0 else u.copy()


def _project_columns(U):
    norms = np.linalg.norm(U, axis=0)
    return U / np.maximum(norms, 1.0)


def init_dictionary(obs_dim: int, code_dim: int, seed: int) -> Dictionary:
    """Uniform(-1, 1) entries, columns scaled to unit norm."""
    if obs_dim < 1 or code_dim < 1:
        raise ValueError("dictionary dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    D = rng.uniform(-1.0, 1.0, size=(obs_dim, code_dim))
    D /= np.linalg.norm(D, axis=0)
    return Dictionary(D)


def forgetting_weight(t: int, rho: float) -> float:
    """``gamma_t = (1 - 1/t)**rho``; note ``gamma_1 = 0`` for ``rho > 0``."""
    return (1.0 - 1.0 / t) ** rho


def update_stats(stats: LearnerStats, batch: Sequence[Sample], alphas: Sequence[np.ndarray],
                 D: np.ndarray) -> LearnerStats:
    """Absorb one mini-batch as a single time step; updates ``stats`` in place.

    ``D`` must be the dictionary the codes were computed against; it is also the
    one frozen into the ``e`` contribution of these samples.
    """
    D = np.asarray(D, dtype=float)
    obs_dim, code_dim = stats.C.shape
    if D.shape != (obs_dim, code_dim):
        raise ValueError(f"dictionary shape {D.shape} does not match statistics {(obs_dim, code_dim)}")
    if len(batch) != len(alphas):
        raise ValueError("batch and codes differ in length")

    dC = np.zeros((obs_dim, code_dim))
    dB = np.zeros((obs_dim, code_dim))
    de = np.zeros((obs_dim, code_dim))
    for (obs, x_obs), a in zip(batch, alphas):
        obs = np.asarray(obs, dtype=int)
        a = np.asarray(a, dtype=float)
        if a.shape != (code_dim,):
            raise ValueError(f"code has shape {a.shape}, expected ({code_dim},)")
        if len(obs) != len(x_obs):
            raise ValueError("observed index set and values differ in length")
        dC[obs] += a * a
        dB[obs] += np.outer(x_obs, a)
        de[obs] += np.outer(D[obs] @ a, a)

    stats.t += 1
    g = forgetting_weight(stats.t, stats.rho)
    stats.C = g * stats.C + dC
    stats.B = g * stats.B + dB
    stats.e = g * stats.e + de
    stats.n_samples += len(batch)
    return stats


def bcd_step(D: np.ndarray, stats: LearnerStats, bcd_iters: int = 1) -> np.ndarray:
    """Block-coordinate update of every column, followed by ball projection.

    Column ``j`` solves ``C_j u = b_j - e_j + C_j d_j`` coordinate-wise, where
    ``e_j - C_j d_j`` stands for the contribution of the other atoms. Since the
    ``e`` statistics are not re-evaluated during the sweep, that term is formed
    with the columns as they were when the sweep started; coordinates with
    ``C_j ~ 0`` keep their old value. Under this rule a sweep does not depend on
    the output of the previous one, so repeating it (``bcd_iters > 1``) returns
    the same dictionary.
    """
    if stats.t < 1:
        raise ValueError("statistics are empty; absorb at least one sample first")
    if bcd_iters < 1:
        raise ValueError("bcd_iters must be >= 1")
    D0 = np.asarray(D, dtype=float)
    C = stats.C
    live = C >= _TINY
    U = D0.copy()
    U[live] = D0[live] + (stats.B[live] - stats.e[live]) / C[live]
    return _project_columns(U)


def _as_sample(item) -> Sample:
    obs, x_obs = item
    return np.asarray(obs, dtype=int), np.asarray(x_obs, dtype=float)


def train(stream: Iterable[Sample], gs: GroupStructure, cfg: LearnerConfig,
          obs_dim: Optional[int] = None, init: Optional[Dictionary] = None,
          on_step=None) -> Tuple[Dictionary, LearnerStats]:
    """Learn a dictionary from a stream of partially observed samples.

    Every mini-batch of ``cfg.minibatch_size`` samples is coded against the
    current dictionary, absorbed into the statistics as one time step, and
    followed by one BCD update. Samples with no observed coordinate are skipped
    and counted in ``stats.n_skipped``.

    ``stream`` is consumed once; pass an already repeated stream for multiple
    passes. ``on_step(t, D)`` is called after each dictionary update.
    """
    if init is None:
        if obs_dim is None:
            raise ValueError("pass obs_dim or an initial dictionary")
        init = init_dictionary(obs_dim, gs.code_dim, cfg.seed)
    if init.code_dim != gs.code_dim:
        raise ValueError(f"dictionary has {init.code_dim} atoms, groups expect {gs.code_dim}")
    D = init.matrix.copy()
    stats = LearnerStats.zeros(init.obs_dim, init.code_dim, cfg.rho)

    batch: List[Sample] = []
    seen = 0

    def flush():
        alphas = [solve_code(x_obs, D[obs], gs, cfg.coder).alpha for obs, x_obs in batch]
        update_stats(stats, batch, alphas, D)
        return bcd_step(D, stats, cfg.bcd_iters)

    for item in stream:
        seen += 1
        obs, x_obs = _as_sample(item)
        if obs.size == 0:
            stats.n_skipped += 1
            continue
        batch.append((obs, x_obs))
        if len(batch) == cfg.minibatch_size:
            D = flush()
            batch = []
            if on_step is not None:
                on_step(stats.t, D)
    if batch:
        D = flush()
        if on_step is not None:
            on_step(stats.t, D)
    if seen == 0:
        raise ValueError("empty sample stream")
    if stats.t == 0:
        raise ValueError("no sample in the stream had an observed coordinate")
    if stats.n_skipped:
        logger.info("skipped %d samples without observations", stats.n_skipped)
    return Dictionary(D), stats


# Exact reference path: statistics recomputed from a retained sample buffer.

def sample_weights(steps: Sequence[int], t: int, rho: float) -> np.ndarray:
    """``(s_i / t)**rho`` for samples absorbed at steps ``s_i``."""
    return (np.asarray(steps, dtype=float) / t) ** rho


def exact_stats(samples: Sequence[Sample], alphas: Sequence[np.ndarray], weights,
                D: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch definitions of ``C``, ``B`` and ``e`` with ``e`` evaluated at ``D``."""
    D = np.asarray(D, dtype=float)
    C = np.zeros_like(D)
    B = np.zeros_like(D)
    e = np.zeros_like(D)
    for (obs, x_obs), a, w in zip(samples, alphas, weights):
        obs = np.asarray(obs, dtype=int)
        C[obs] += w * a * a
        B[obs] += w * np.outer(x_obs, a)
        e[obs] += w * np.outer(D[obs] @ a, a)
    return C, B, e


def surrogate_objective(D: np.ndarray, samples: Sequence[Sample], alphas: Sequence[np.ndarray],
                        weights, gs: Optional[GroupStructure] = None, kappa: float = 0.0,
                        eta: float = 0.5, normalize: bool = True) -> float:
    """Weighted fit of the stored codes, ``f_hat_t(D)``.

    The regularizer term does not depend on ``D``; it is added only when ``gs``
    is given. With ``normalize`` the sum is divided by the total weight.
    """
    D = np.asarray(D, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = 0.0
    for (obs, x_obs), a, w in zip(samples, alphas, weights):
        r = np.asarray(x_obs) - D[np.asarray(obs, dtype=int)] @ a
        val = 0.5 * float(r @ r)
        if gs is not None:
            val += kappa * omega(a, gs, eta)
        total += w * val
    return total / weights.sum() if normalize else total


def bcd_step_exact(D: np.ndarray, samples: Sequence[Sample], alphas: Sequence[np.ndarray],
                   weights, bcd_iters: int = 1, return_unprojected: bool = False):
    """Gauss-Seidel BCD with ``e`` recomputed from the samples after every column.

    Reference implementation for checking the online update; cost grows with
    the number of stored samples.
    """
    D = np.array(D, dtype=float)
    C, B, _ = exact_stats(samples, alphas, weights, D)
    unprojected = []
    for _ in range(bcd_iters):
        for j in range(D.shape[1]):
            _, _, e = exact_stats(samples, alphas, weights, D)
            live = C[:, j] >= _TINY
            u = D[:, j].copy()
            u[live] = (B[live, j] - e[live, j] + C[live, j] * D[live, j]) / C[live, j]
            unprojected.append((j, u.copy(), D.copy()))
            D[:, j] = project_column(u)
    if return_unprojected:
        return D, unprojected
    return D
