"""Structured sparse coding against a fixed dictionary.

The non-convex group regularizer

    omega(a) = || ( ||w_G * a||_2 )_G ||_eta

is handled through its variational form: with an auxiliary vector ``z > 0``
over groups,

    omega(a) = min_z 1/2 * ( sum_j zeta_j(z) a_j**2 + ||z||_p ),
    zeta_j(z) = sum_{G ni j} w_{G,j}**2 / z_G,   p = eta / (2 - eta),

so the coding problem alternates between a ridge-type linear solve in ``a``
and a closed-form update of ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg

from .groups import GroupStructure


class SolverError(RuntimeError):
    """The inner quadratic could not be solved."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (inner iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class CoderConfig:
    kappa: float
    eta: float = 0.5
    inner_iters: int = 5
    epsilon: float = 1e-5
    aux_exponent: Optional[float] = None
    nonneg: bool = False

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not 0 < self.eta < 2:
            raise ValueError(f"eta must lie in (0, 2), got {self.eta}")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        if not 0 < self.epsilon <= 1e-2:
            raise ValueError(f"epsilon must lie in (0, 1e-2], got {self.epsilon}")
        if self.aux_exponent is None:
            object.__setattr__(self, "aux_exponent", self.eta / (2.0 - self.eta))
        elif not self.aux_exponent > 0:
            raise ValueError("aux_exponent must be positive")


@dataclass
class SparseCode:
    alpha: np.ndarray
    objective: float
    z: np.ndarray
    # loss (data fit + kappa * omega) after each alternation round
    history: List[float] = field(default_factory=list)


def _quasi_norm(v, p):
    v = np.abs(v)
    if not v.any():
        return 0.0
    if p == 1:
        return float(v.sum())
    if p == 2:
        return float(np.sqrt(v @ v))
    # scale first so small entries do not underflow under v**p
    m = v.max()
    return float(m * np.sum((v / m) ** p) ** (1.0 / p))


def group_norms(alpha, gs: GroupStructure) -> np.ndarray:
    """``||w_G * alpha||_2`` for every group."""
    alpha = np.asarray(alpha, dtype=float)
    m = np.max(np.abs(alpha)) if alpha.size else 0.0
    if m == 0.0:
        return np.zeros(gs.n_groups)
    # scaled so tiny codes do not underflow when squared
    return m * np.sqrt(gs.sq_weights @ ((alpha / m) ** 2))


def omega(alpha, gs: GroupStructure, eta: float) -> float:
    """Structured regularizer: eta-(quasi)norm of the within-group norms."""
    return _quasi_norm(group_norms(alpha, gs), eta)


def optimal_z(alpha, gs: GroupStructure, eta: float) -> np.ndarray:
    """Minimizing auxiliary vector for fixed ``alpha`` (before smoothing).

    ``z_G = n_G**(2 - eta) * ||n||_eta**(eta - 1)`` with ``n`` the group norms.
    Returns zeros when every group norm vanishes.
    """
    norms = group_norms(alpha, gs)
    total = _quasi_norm(norms, eta)
    if total == 0.0:
        return np.zeros_like(norms)
    return norms ** (2.0 - eta) * total ** (eta - 1.0)


def zeta(z, gs: GroupStructure) -> np.ndarray:
    """Per-coordinate ridge weights ``sum_{G ni j} w_{G,j}**2 / z_G``."""
    return gs.sq_weights.T @ (1.0 / np.asarray(z, dtype=float))


def variational_bound(alpha, z, gs: GroupStructure, aux_exponent: float) -> float:
    """``1/2 (alpha' diag(zeta(z)) alpha + ||z||_p)``; equals omega at the optimal z."""
    alpha = np.asarray(alpha, dtype=float)
    z = np.asarray(z, dtype=float)
    # 0/0 terms (empty group, zero z) contribute nothing
    with np.errstate(divide="ignore", invalid="ignore"):
        per_group = np.where(z > 0, (gs.sq_weights @ alpha**2) / z, 0.0)
    return 0.5 * (float(per_group.sum()) + _quasi_norm(z, aux_exponent))


def loss(x_obs, D_obs, alpha, gs: GroupStructure, kappa: float, eta: float) -> float:
    """``1/2 ||x - D alpha||**2 + kappa * omega(alpha)``."""
    r = np.asarray(x_obs, dtype=float) - np.asarray(D_obs, dtype=float) @ alpha
    return 0.5 * float(r @ r) + kappa * omega(alpha, gs, eta)


def _solve_spd(A, rhs, iteration):
    try:
        return linalg.cho_solve(linalg.cho_factor(A, check_finite=False), rhs, check_finite=False)
    except linalg.LinAlgError:
        pass
    A = A + 1e-10 * np.eye(A.shape[0])
    try:
        return linalg.cho_solve(linalg.cho_factor(A, check_finite=False), rhs, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SolverError("quadratic subproblem is numerically singular", iteration) from exc


def _nonneg_quadratic(A, rhs, start, sweeps=100):
    # projected coordinate descent on 1/2 a'Aa - rhs'a over a >= 0
    a = np.maximum(start, 0.0)
    diag = np.diag(A)
    for _ in range(sweeps):
        for j in range(a.size):
            if diag[j] > 0:
                a[j] = max(0.0, a[j] - (A[j] @ a - rhs[j]) / diag[j])
    return a


def solve_code(x_obs, D_obs, gs: GroupStructure, cfg: CoderConfig) -> SparseCode:
    """Code ``x_obs`` against the observed rows ``D_obs`` of the dictionary.

    Runs ``cfg.inner_iters`` rounds of: smooth ``z <- max(z, epsilon)``, solve
    ``(D'D + kappa diag(zeta(z))) alpha = D'x`` exactly, then reset ``z`` to its
    closed-form optimum. ``z`` starts at all ones.

    The returned ``z`` is the smoothed vector used for the final solve, so the
    returned ``alpha`` is exactly stationary for it, and ``objective`` is the
    auxiliary cost J at that pair.
    """
    x_obs = np.asarray(x_obs, dtype=float)
    D_obs = np.asarray(D_obs, dtype=float)
    if D_obs.ndim != 2 or D_obs.shape[0] != x_obs.shape[0]:
        raise ValueError(f"shape mismatch: D_obs {D_obs.shape}, x_obs {x_obs.shape}")
    if D_obs.shape[0] < 1:
        raise ValueError("need at least one observed coordinate")
    if D_obs.shape[1] != gs.code_dim:
        raise ValueError(f"dictionary has {D_obs.shape[1]} columns, groups expect {gs.code_dim}")
    if not (np.isfinite(x_obs).all() and np.isfinite(D_obs).all()):
        raise ValueError("non-finite values in x_obs or D_obs")

    gram = D_obs.T @ D_obs
    rhs = D_obs.T @ x_obs
    diag = np.diag_indices(gs.code_dim)
    z = np.ones(gs.n_groups)
    alpha = np.zeros(gs.code_dim)
    history = []
    for it in range(cfg.inner_iters):
        z_s = np.maximum(z, cfg.epsilon)
        A = gram.copy()
        A[diag] += cfg.kappa * zeta(z_s, gs)
        alpha = _solve_spd(A, rhs, it)
        if cfg.nonneg:
            alpha = _nonneg_quadratic(A, rhs, alpha)
        norms = group_norms(alpha, gs)
        total = _quasi_norm(norms, cfg.eta)
        z = norms ** (2.0 - cfg.eta) * total ** (cfg.eta - 1.0) if total > 0 else np.zeros_like(norms)
        r = x_obs - D_obs @ alpha
        history.append(0.5 * float(r @ r) + cfg.kappa * total)

    r = x_obs - D_obs @ alpha
    J = 0.5 * float(r @ r) + cfg.kappa * variational_bound(alpha, z_s, gs, cfg.aux_exponent)
    return SparseCode(alpha=alpha, objective=J, z=z_s, history=history)
