"""Rating prediction with a trained dictionary plus item-neighbour corrections.

Items are rows of the dictionary. A user's known ratings are coded against the
observed rows; the product of the full dictionary with that code estimates
every rating. The estimate for an unrated item ``k`` can then be nudged by the
similarity-weighted mean of the errors the model makes on the user's rated
items:

    x_k = g0 * d_k a + g1 * sum_j s_kj (d_j a - x_j) / sum_j s_kj

``S1``/``S2`` fix ``g0 = 1``; ``S1_0``/``S2_0`` fit it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .coder import CoderConfig, solve_code
from .groups import GroupStructure

logger = logging.getLogger(__name__)

SCHEMES = ("S1", "S2", "S1_0", "S2_0")


class UnratableUser(ValueError):
    """Raised when a user has no observed rating to code from."""


@dataclass(frozen=True)
class CorrectionConfig:
    scheme: str = "S1_0"
    beta: float = 1.0
    gamma0: float = 1.0
    gamma1: float = 0.0
    sim_clamp: float = 1e12
    rating_range: Tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown correction scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.sim_clamp > 0:
            raise ValueError("sim_clamp must be positive")
        lo, hi = self.rating_range
        if not lo < hi:
            raise ValueError(f"empty rating range {self.rating_range}")

    @property
    def similarity_kind(self) -> str:
        return self.scheme[:2]

    @property
    def fits_gamma0(self) -> bool:
        return self.scheme.endswith("_0")


@dataclass
class Prediction:
    user: int
    items: np.ndarray
    base: np.ndarray
    corrected: np.ndarray
    fallback: np.ndarray


def predict_base(D, obs, x_obs, gs: GroupStructure, coder_cfg: CoderConfig):
    """Code the observed ratings and reconstruct every item.

    Returns ``(alpha, x_hat)`` where ``x_hat = D @ alpha`` covers all items.
    """
    D = np.asarray(D, dtype=float)
    obs = np.asarray(obs, dtype=int)
    if obs.size == 0:
        raise UnratableUser("user has no observed ratings")
    alpha = solve_code(np.asarray(x_obs, dtype=float), D[obs], gs, coder_cfg).alpha
    return alpha, D @ alpha


def similarity(d_i, d_j, scheme: str, beta: float, sim_clamp: float = 1e12) -> float:
    """Similarity of two dictionary rows; zero rows are similar to nothing."""
    d_i = np.asarray(d_i, dtype=float)
    d_j = np.asarray(d_j, dtype=float)
    ni, nj = np.linalg.norm(d_i), np.linalg.norm(d_j)
    if ni == 0 or nj == 0:
        return 0.0
    kind = scheme[:2]
    if kind == "S1":
        cos = min(1.0, max(0.0, float(d_i @ d_j) / (ni * nj)))
        return cos**beta
    if kind == "S2":
        diff = d_i - d_j
        ratio = float(diff @ diff) / (ni * nj)
        if ratio == 0.0:
            return sim_clamp
        with np.errstate(over="ignore"):
            return float(min(sim_clamp, ratio ** (-beta)))
    raise ValueError(f"unknown similarity {scheme!r}")


def similarity_matrix(D, scheme: str, beta: float, sim_clamp: float = 1e12) -> np.ndarray:
    """All pairwise row similarities of ``D``; same values as :func:`similarity`."""
    D = np.asarray(D, dtype=float)
    norms = np.linalg.norm(D, axis=1)
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    denom = np.outer(safe, safe)
    kind = scheme[:2]
    with np.errstate(over="ignore", divide="ignore"):
        if kind == "S1":
            cos = np.clip((D @ D.T) / denom, 0.0, 1.0)
            S = cos**beta
        elif kind == "S2":
            sq = norms**2
            dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (D @ D.T), 0.0)
            # the expansion above loses precision for near-identical rows
            close = dist < 1e-8 * np.maximum(sq[:, None], sq[None, :])
            if close.any():
                ii, jj = np.nonzero(close)
                diff = D[ii] - D[jj]
                dist[ii, jj] = np.einsum("ij,ij->i", diff, diff)
            ratio = dist / denom
            S = np.where(ratio > 0, np.minimum(ratio ** (-beta), sim_clamp), sim_clamp)
        else:
            raise ValueError(f"unknown similarity {scheme!r}")
    S[zero, :] = 0.0
    S[:, zero] = 0.0
    return S


def correction_terms(S, x_hat, obs, x_obs, items) -> Tuple[np.ndarray, np.ndarray]:
    """Similarity-weighted mean error on the rated items, for each target item.

    Returns ``(terms, defined)``; where every similarity to the rated items is
    zero the term is 0 and ``defined`` is False.
    """
    obs = np.asarray(obs, dtype=int)
    items = np.asarray(items, dtype=int)
    err = x_hat[obs] - np.asarray(x_obs, dtype=float)
    W = S[np.ix_(items, obs)]
    num = W @ err
    den = W.sum(axis=1)
    defined = den > 0
    terms = np.zeros(items.size)
    terms[defined] = num[defined] / den[defined]
    return terms, defined


def combine(base, terms, cfg: CorrectionConfig, clamp: bool = True) -> np.ndarray:
    g0 = cfg.gamma0 if cfg.fits_gamma0 else 1.0
    out = g0 * np.asarray(base, dtype=float) + cfg.gamma1 * np.asarray(terms, dtype=float)
    if clamp:
        out = np.clip(out, *cfg.rating_range)
    return out


def correct(k: int, alpha, obs, x_obs, D, cfg: CorrectionConfig, clamp: bool = True) -> float:
    """Corrected estimate for one unrated item ``k``.

    Falls back to the (``gamma0``-scaled) base estimate when no rated item has
    positive similarity to ``k``.
    """
    D = np.asarray(D, dtype=float)
    obs = np.asarray(obs, dtype=int)
    if k in set(obs.tolist()):
        raise ValueError(f"item {k} is already rated")
    alpha = np.asarray(alpha, dtype=float)
    x_hat = D @ alpha
    s = np.array([similarity(D[k], D[j], cfg.scheme, cfg.beta, cfg.sim_clamp) for j in obs])
    total = s.sum()
    if total > 0:
        term = float(s @ (x_hat[obs] - np.asarray(x_obs, dtype=float)) / total)
    else:
        logger.debug("item %d has no similar rated item; using base estimate", k)
        term = 0.0
    return float(combine([x_hat[k]], [term], cfg, clamp)[0])


def predict_user(user: int, D, obs, x_obs, gs: GroupStructure, coder_cfg: CoderConfig,
                 cfg: CorrectionConfig, items=None, S: Optional[np.ndarray] = None) -> Prediction:
    """Base and corrected estimates for ``items`` (default: every unrated item)."""
    D = np.asarray(D, dtype=float)
    obs = np.asarray(obs, dtype=int)
    if items is None:
        rated = np.zeros(D.shape[0], dtype=bool)
        rated[obs] = True
        items = np.flatnonzero(~rated)
    items = np.asarray(items, dtype=int)
    if S is None:
        S = similarity_matrix(D, cfg.scheme, cfg.beta, cfg.sim_clamp)
    _, x_hat = predict_base(D, obs, x_obs, gs, coder_cfg)
    terms, defined = correction_terms(S, x_hat, obs, x_obs, items)
    base = np.clip(x_hat[items], *cfg.rating_range)
    return Prediction(user, items, base, combine(x_hat[items], terms, cfg), ~defined)


def fit_gammas(targets, base, corr, scheme: str) -> Tuple[float, float]:
    """Least-squares correction weights on validation ratings.

    Fits ``targets ~ g0 * base + g1 * corr``, with ``g0`` pinned to 1 for the
    ``S1``/``S2`` schemes. Rank-deficient systems give ``(1, 0)``.
    """
    y = np.asarray(targets, dtype=float)
    b = np.asarray(base, dtype=float)
    c = np.asarray(corr, dtype=float)
    if y.size < 2:
        raise ValueError("need at least two validation ratings")
    if scheme.endswith("_0"):
        X = np.column_stack([b, c])
        G = X.T @ X
        if np.linalg.matrix_rank(G) < 2:
            return 1.0, 0.0
        g0, g1 = np.linalg.solve(G, X.T @ y)
        return float(g0), float(g1)
    cc = float(c @ c)
    if cc <= 1e-12 * max(1.0, float(y @ y)):
        return 1.0, 0.0
    return 1.0, float(c @ (y - b) / cc)
