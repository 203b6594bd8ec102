"""Metrics, train/validation/test splitting and the hyperparameter sweep.

A trial trains one dictionary for a fixed (structure, kappa, rho, minibatch)
tuple, then picks the correction scheme, the similarity exponent and the
correction weights on validation cells only. Test cells are read once, after
that choice is frozen.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coder import CoderConfig, solve_code
from .data import RatingDataset, user_stream
from .groups import GroupStructure, toroid_groups, tree_groups
from .learner import LearnerConfig, train
from .recommender import SCHEMES, fit_gammas, similarity_matrix

logger = logging.getLogger(__name__)

RATING_RANGE = (-10.0, 10.0)


def _pairs(truth, estimate=None):
    if estimate is None:
        arr = np.asarray(truth, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("expected a list of (truth, estimate) pairs")
        truth, estimate = arr[:, 0], arr[:, 1]
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.size == 0:
        raise ValueError("cannot score an empty set of ratings")
    if truth.shape != estimate.shape:
        raise ValueError("truth and estimate differ in length")
    return truth, estimate


def rmse(truth, estimate=None) -> float:
    """Root mean squared error of ``(truth, estimate)`` pairs or two arrays."""
    t, e = _pairs(truth, estimate)
    return float(np.sqrt(np.mean((t - e) ** 2)))


def mae(truth, estimate=None) -> float:
    """Mean absolute error of ``(truth, estimate)`` pairs or two arrays."""
    t, e = _pairs(truth, estimate)
    return float(np.mean(np.abs(t - e)))


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if len(self.fractions) != 3 or min(self.fractions) < 0:
            raise ValueError("fractions must be three non-negative numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(self.fractions)}")


def split_sizes(n: int, fractions=(0.8, 0.1, 0.1)) -> Tuple[int, int, int]:
    n_train = int(math.floor(fractions[0] * n + 0.5))
    n_val = min(n - n_train, int(math.floor(fractions[1] * n + 0.5)))
    return n_train, n_val, n - n_train - n_val


def split(ds: RatingDataset, spec: SplitSpec = SplitSpec()):
    """Uniform random partition of the rated cells into train/validation/test."""
    if len(ds) == 0:
        raise ValueError("cannot split an empty dataset")
    n_train, n_val, _ = split_sizes(len(ds), spec.fractions)
    perm = np.random.default_rng(spec.seed).permutation(len(ds))
    parts = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    return tuple(ds.subset(np.sort(p)) for p in parts)


class HeldOutCells:
    """Scoring cells that count how often their ratings are read."""

    def __init__(self, ds: RatingDataset):
        self._ds = ds
        self.reads = 0

    def __len__(self):
        return len(self._ds)

    @property
    def users(self):
        return self._ds.users

    @property
    def items(self):
        return self._ds.items

    def ratings(self) -> np.ndarray:
        self.reads += 1
        return self._ds.ratings


def parse_structure(spec: str) -> GroupStructure:
    """``"toroid:<d>:<r>"`` or ``"tree:<levels>"``."""
    kind, *args = spec.split(":")
    try:
        if kind == "toroid" and len(args) == 2:
            return toroid_groups(int(args[0]), int(args[1]))
        if kind == "tree" and len(args) == 1:
            return tree_groups(int(args[0]))
    except ValueError as exc:
        raise ValueError(f"bad structure {spec!r}: {exc}") from None
    raise ValueError(f"bad structure {spec!r}; use 'toroid:<d>:<r>' or 'tree:<levels>'")


def beta_grid(start=0.2, stop=14.6, step=0.8) -> List[float]:
    n = int(round((stop - start) / step)) + 1
    return [round(start + k * step, 10) for k in range(n)]


DEFAULT_KAPPAS = [2.0, 1.0, 0.5, 0.25] + [2.0 ** -k for k in range(4, 15, 2)]
DEFAULT_RHOS = [0.0, 1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0]
DEFAULT_BETAS = beta_grid()


@dataclass
class GridSpec:
    structures: List[str] = field(default_factory=lambda: ["toroid:10:4"])
    kappas: List[float] = field(default_factory=lambda: list(DEFAULT_KAPPAS))
    rhos: List[float] = field(default_factory=lambda: list(DEFAULT_RHOS))
    minibatch_sizes: List[int] = field(default_factory=lambda: [8, 16])
    schemes: List[str] = field(default_factory=lambda: list(SCHEMES))
    betas: List[float] = field(default_factory=lambda: list(DEFAULT_BETAS))
    seeds: List[int] = field(default_factory=lambda: [0])
    eta: float = 0.5
    inner_iters: int = 5
    epsilon: float = 1e-5
    bcd_iters: int = 5
    epochs: int = 1
    sim_clamp: float = 1e12

    def __post_init__(self):
        for name in ("structures", "kappas", "rhos", "minibatch_sizes", "schemes", "betas", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"grid '{name}' is empty")
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown schemes {sorted(bad)}")

    def trials(self) -> List["TrialConfig"]:
        return [
            TrialConfig(structure=s, kappa=k, rho=r, minibatch_size=R, seed=seed, eta=self.eta,
                        inner_iters=self.inner_iters, epsilon=self.epsilon,
                        bcd_iters=self.bcd_iters, epochs=self.epochs)
            for s, k, r, R, seed in itertools.product(self.structures, self.kappas, self.rhos,
                                                       self.minibatch_sizes, self.seeds)
        ]

    @classmethod
    def from_dict(cls, d: Dict) -> "GridSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown grid keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class TrialConfig:
    structure: str
    kappa: float
    rho: float
    minibatch_size: int
    seed: int = 0
    eta: float = 0.5
    inner_iters: int = 5
    epsilon: float = 1e-5
    bcd_iters: int = 5
    epochs: int = 1

    def coder(self) -> CoderConfig:
        return CoderConfig(kappa=self.kappa, eta=self.eta, inner_iters=self.inner_iters,
                           epsilon=self.epsilon)

    def learner(self) -> LearnerConfig:
        return LearnerConfig(coder=self.coder(), rho=self.rho, minibatch_size=self.minibatch_size,
                             bcd_iters=self.bcd_iters, epochs=self.epochs, seed=self.seed)


@dataclass
class TrialResult:
    config: TrialConfig
    scheme: str = ""
    beta: float = float("nan")
    gamma0: float = float("nan")
    gamma1: float = float("nan")
    validation_rmse: float = float("nan")
    validation_mae: float = float("nan")
    test_rmse: float = float("nan")
    test_mae: float = float("nan")
    wall_time: float = 0.0
    n_unratable: int = 0
    error: str = ""
    # (beta, validation_rmse, test_rmse) for the selected scheme
    curve: List[Tuple[float, float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class CodedUsers:
    """Base reconstructions of every user from their training ratings."""

    x_hat: np.ndarray
    errors: np.ndarray
    mask: np.ndarray
    ratable: np.ndarray


def code_users(D: np.ndarray, train_ds: RatingDataset, gs: GroupStructure,
               coder_cfg: CoderConfig) -> CodedUsers:
    n_users, n_items = train_ds.n_users, train_ds.n_items
    x_hat = np.zeros((n_users, n_items))
    errors = np.zeros((n_users, n_items))
    mask = np.zeros((n_users, n_items))
    ratable = np.zeros(n_users, dtype=bool)
    for u, (obs, x_obs) in enumerate(train_ds.by_user()):
        if obs.size == 0:
            continue
        alpha = solve_code(x_obs, D[obs], gs, coder_cfg).alpha
        x_hat[u] = D @ alpha
        errors[u, obs] = x_hat[u, obs] - x_obs
        mask[u, obs] = 1.0
        ratable[u] = True
    return CodedUsers(x_hat, errors, mask, ratable)


def _cell_terms(coded: CodedUsers, S: np.ndarray, users, items):
    # numerator / denominator of the neighbour correction for every (user, item) cell
    num = np.einsum("ij,ij->i", coded.errors[users], S[items])
    den = np.einsum("ij,ij->i", coded.mask[users], S[items])
    terms = np.zeros(users.size)
    ok = den > 0
    terms[ok] = num[ok] / den[ok]
    return terms


def _estimates(coded, item_means, users, items, S, scheme, g0, g1):
    base = np.where(coded.ratable[users], coded.x_hat[users, items], item_means[items])
    terms = np.where(coded.ratable[users], _cell_terms(coded, S, users, items), 0.0)
    g0 = g0 if scheme.endswith("_0") else 1.0
    # unratable users keep the plain item mean
    est = np.where(coded.ratable[users], g0 * base + g1 * terms, base)
    return np.clip(est, *RATING_RANGE), base, terms


def select_correction(coded: CodedUsers, item_means, val: HeldOutCells, D, schemes, betas,
                      sim_clamp=1e12):
    """Best (scheme, beta, gamma0, gamma1) by validation RMSE, plus per-beta scores."""
    y = val.ratings()
    users, items = val.users, val.items
    best = None
    per_beta = {}
    for kind in sorted({s[:2] for s in schemes}):
        for beta in betas:
            S = similarity_matrix(D, kind, beta, sim_clamp)
            base = np.where(coded.ratable[users], coded.x_hat[users, items], item_means[items])
            terms = np.where(coded.ratable[users], _cell_terms(coded, S, users, items), 0.0)
            fit = coded.ratable[users]
            for scheme in (s for s in schemes if s[:2] == kind):
                if fit.sum() >= 2:
                    g0, g1 = fit_gammas(y[fit], base[fit], terms[fit], scheme)
                else:
                    g0, g1 = 1.0, 0.0
                est, _, _ = _estimates(coded, item_means, users, items, S, scheme, g0, g1)
                score = (rmse(y, est), mae(y, est))
                per_beta[(scheme, beta)] = (score, g0, g1)
                if best is None or score[0] < best[0][0]:
                    best = (score, scheme, beta, g0, g1)
    return best, per_beta


def run_trial(cfg: TrialConfig, train_ds: RatingDataset, val: HeldOutCells, test: HeldOutCells,
              schemes: Sequence[str] = SCHEMES, betas: Sequence[float] = DEFAULT_BETAS,
              sim_clamp: float = 1e12) -> TrialResult:
    """Train, select the correction on validation, then score the test cells."""
    start = time.perf_counter()
    result = TrialResult(cfg)
    gs = parse_structure(cfg.structure)
    per_user = train_ds.by_user()
    stream = user_stream(per_user, cfg.epochs, cfg.seed)
    dictionary, _ = train(stream, gs, cfg.learner(), obs_dim=train_ds.n_items)
    D = dictionary.matrix
    coded = code_users(D, train_ds, gs, cfg.coder())
    item_means = train_ds.item_means()
    result.n_unratable = int((~coded.ratable).sum())

    (vscore, scheme, beta, g0, g1), per_beta = select_correction(
        coded, item_means, val, D, schemes, betas, sim_clamp)
    result.scheme, result.beta, result.gamma0, result.gamma1 = scheme, beta, g0, g1
    result.validation_rmse, result.validation_mae = vscore

    # selection is frozen from here on
    y = test.ratings()
    S = similarity_matrix(D, scheme[:2], beta, sim_clamp)
    est, _, _ = _estimates(coded, item_means, test.users, test.items, S, scheme, g0, g1)
    result.test_rmse, result.test_mae = rmse(y, est), mae(y, est)
    for b in betas:
        (vr, _), bg0, bg1 = per_beta[(scheme, b)]
        Sb = similarity_matrix(D, scheme[:2], b, sim_clamp)
        est_b, _, _ = _estimates(coded, item_means, test.users, test.items, Sb, scheme, bg0, bg1)
        result.curve.append((b, vr, rmse(y, est_b)))
    result.wall_time = time.perf_counter() - start
    return result


def _trial_worker(args):
    cfg, train_ds, val_ds, test_ds, schemes, betas, sim_clamp = args
    try:
        return run_trial(cfg, train_ds, HeldOutCells(val_ds), HeldOutCells(test_ds),
                         schemes, betas, sim_clamp)
    except Exception as exc:  # a failed trial must not abort the sweep
        logger.warning("trial %s failed: %s", cfg, exc)
        return TrialResult(cfg, error=f"{type(exc).__name__}: {exc}")


def rank(results: Sequence[TrialResult]) -> List[TrialResult]:
    """Successful trials by validation RMSE (stable), failures last."""
    key = lambda r: (not r.ok, r.validation_rmse if r.ok else 0.0)
    return sorted(results, key=key)


def grid_search(ds: RatingDataset, grid: GridSpec, split_spec: SplitSpec = SplitSpec(),
                budget: Optional[int] = None, workers: int = 1, splits=None) -> List[TrialResult]:
    """Run every grid tuple (at most ``budget`` of them) and rank by validation RMSE.

    ``splits`` may supply a precomputed ``(train, validation, test)`` triple.
    """
    train_ds, val_ds, test_ds = splits if splits is not None else split(ds, split_spec)
    configs = grid.trials()
    if budget is not None:
        configs = configs[:budget]
    jobs = [(c, train_ds, val_ds, test_ds, grid.schemes, grid.betas, grid.sim_clamp) for c in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_worker, jobs))
    else:
        results = [_trial_worker(j) for j in jobs]
    return rank(results)


def item_mean_baseline(train_ds: RatingDataset, cells: RatingDataset) -> Tuple[float, float]:
    """RMSE and MAE of predicting every cell by its item's training mean."""
    means = train_ds.item_means(default=float(train_ds.ratings.mean()) if len(train_ds) else 0.0)
    est = means[cells.items]
    return rmse(cells.ratings, est), mae(cells.ratings, est)


# persistence

TRIAL_COLUMNS = ["structure", "kappa", "rho", "minibatch_size", "seed", "eta", "inner_iters",
                 "epsilon", "bcd_iters", "epochs", "scheme", "beta", "gamma0", "gamma1",
                 "validation_rmse", "validation_mae", "test_rmse", "test_mae", "wall_time",
                 "n_unratable", "error"]

_METRICS = ("validation_rmse", "validation_mae", "test_rmse", "test_mae")


def _fmt(name, value):
    if isinstance(value, float):
        if name in _METRICS:
            return f"{value:.6f}"
        return repr(value)
    return str(value)


def write_trials_csv(path, results: Sequence[TrialResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for r in results:
            row = {**asdict(r.config), **{k: getattr(r, k) for k in TRIAL_COLUMNS
                                          if hasattr(r, k) and k != "config"}}
            w.writerow([_fmt(c, row[c]) for c in TRIAL_COLUMNS])


def read_trials_csv(path) -> List[TrialResult]:
    out = []
    cfg_fields = {f.name: f.type for f in fields(TrialConfig)}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cfg = TrialConfig(
                structure=row["structure"], kappa=float(row["kappa"]), rho=float(row["rho"]),
                minibatch_size=int(row["minibatch_size"]), seed=int(row["seed"]),
                eta=float(row["eta"]), inner_iters=int(row["inner_iters"]),
                epsilon=float(row["epsilon"]), bcd_iters=int(row["bcd_iters"]),
                epochs=int(row["epochs"]))
            assert set(cfg_fields) <= set(row)
            out.append(TrialResult(
                cfg, scheme=row["scheme"], beta=float(row["beta"]), gamma0=float(row["gamma0"]),
                gamma1=float(row["gamma1"]),
                **{m: float(row[m]) for m in _METRICS},
                wall_time=float(row["wall_time"]), n_unratable=int(row["n_unratable"]),
                error=row["error"]))
    return out


def surfaces(results: Sequence[TrialResult]) -> List[Dict]:
    """Long-format (kappa, rho) surfaces, best over everything else in each cell."""
    best: Dict[tuple, TrialResult] = {}
    for r in results:
        if not r.ok:
            continue
        key = (r.config.structure, r.config.minibatch_size, r.config.kappa, r.config.rho)
        if key not in best or r.validation_rmse < best[key].validation_rmse:
            best[key] = r
    rows = []
    for (structure, R, kappa, rho), r in sorted(best.items(), key=lambda kv: kv[0]):
        for m in _METRICS:
            rows.append({"structure": structure, "minibatch_size": R, "kappa": kappa, "rho": rho,
                         "metric": m, "value": getattr(r, m)})
    return rows


def write_surfaces_csv(path, rows: Sequence[Dict]) -> None:
    cols = ["structure", "minibatch_size", "kappa", "rho", "metric", "value"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(c, row[c]) if c != "value" else f"{row[c]:.6f}" for c in cols])


def write_curve_csv(path, result: TrialResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "validation_rmse", "test_rmse"])
        for b, v, t in result.curve:
            w.writerow([repr(b), f"{v:.6f}", f"{t:.6f}"])


def manifest(grid: GridSpec, split_spec: SplitSpec, dataset_hash: str, **extra) -> Dict:
    from . import __version__

    return {"grid": asdict(grid), "split": asdict(split_spec), "dataset_sha256": dataset_hash,
            "version": __version__, **extra}


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
