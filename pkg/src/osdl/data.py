"""Rating datasets: Jester ingestion, cell files and synthetic generation.

The Jester dense CSV layout has one row per user: column 0 is the number of
rated jokes, the remaining columns are ratings on ``[-10, 10]`` with ``99``
meaning "not rated". Users and items are 0-based row and column positions.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from .groups import GroupStructure

logger = logging.getLogger(__name__)

SENTINEL = 99.0
RATING_RANGE = (-10.0, 10.0)


class DataFormatError(ValueError):
    pass


@dataclass
class RatingDataset:
    """Sparse user x item ratings stored as parallel cell arrays."""

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.items = np.asarray(self.items, dtype=np.int64)
        self.ratings = np.asarray(self.ratings, dtype=float)
        if not (self.users.shape == self.items.shape == self.ratings.shape):
            raise ValueError("cell arrays differ in length")

    def __len__(self):
        return self.ratings.size

    def check(self, rating_range=RATING_RANGE) -> List[str]:
        problems = []
        if len(self) and (self.users.min() < 0 or self.users.max() >= self.n_users):
            problems.append("user index out of range")
        if len(self) and (self.items.min() < 0 or self.items.max() >= self.n_items):
            problems.append("item index out of range")
        keys = self.users * self.n_items + self.items
        if np.unique(keys).size != keys.size:
            problems.append("duplicate (user, item) cells")
        lo, hi = rating_range
        if np.any((self.ratings < lo) | (self.ratings > hi)):
            problems.append(f"ratings outside [{lo}, {hi}]")
        return problems

    def subset(self, mask) -> "RatingDataset":
        mask = np.asarray(mask)
        return RatingDataset(self.n_users, self.n_items, self.users[mask], self.items[mask],
                             self.ratings[mask])

    def by_user(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Per-user ``(items, ratings)``, items sorted; empty users included."""
        order = np.lexsort((self.items, self.users))
        u, it, r = self.users[order], self.items[order], self.ratings[order]
        bounds = np.searchsorted(u, np.arange(self.n_users + 1))
        return [(it[a:b], r[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]

    def dense(self, fill=np.nan) -> np.ndarray:
        X = np.full((self.n_users, self.n_items), fill, dtype=float)
        X[self.users, self.items] = self.ratings
        return X

    def item_means(self, default: float = 0.0) -> np.ndarray:
        sums = np.bincount(self.items, weights=self.ratings, minlength=self.n_items)
        counts = np.bincount(self.items, minlength=self.n_items)
        return np.where(counts > 0, sums / np.maximum(counts, 1), default)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.n_users, self.n_items], dtype=np.int64).tobytes())
        for arr in (self.users, self.items, self.ratings):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _parse_jester_rows(lines: Iterable[str], source: str, user_offset: int = 0):
    users, items, ratings = [], [], []
    n_items = None
    n_rows = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.strip().split(",")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise DataFormatError(f"{source}:{lineno}: non-numeric field") from None
        if len(values) < 2:
            raise DataFormatError(f"{source}:{lineno}: expected a count column and ratings")
        row = np.array(values[1:])
        if n_items is None:
            n_items = row.size
        elif row.size != n_items:
            raise DataFormatError(f"{source}:{lineno}: {row.size} ratings, expected {n_items}")
        rated = row != SENTINEL
        bad = rated & ((row < RATING_RANGE[0]) | (row > RATING_RANGE[1]))
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise DataFormatError(f"{source}:{lineno}: rating {row[j]} for item {j} outside [-10, 10]")
        if int(values[0]) != int(rated.sum()):
            warnings.warn(f"{source}:{lineno}: count column says {int(values[0])}, "
                          f"found {int(rated.sum())} ratings (row {n_rows})")
        idx = np.flatnonzero(rated)
        users.append(np.full(idx.size, user_offset + n_rows))
        items.append(idx)
        ratings.append(row[idx])
        n_rows += 1
    return n_rows, n_items or 0, users, items, ratings


def load_jester(paths: Union[str, Path, Sequence[Union[str, Path]]]) -> RatingDataset:
    """Read one or more Jester dense CSV files into a single dataset.

    Users of later files follow the users of earlier ones.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    users, items, ratings = [], [], []
    n_users, n_items = 0, None
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            rows, width, u, it, r = _parse_jester_rows(fh, str(path), n_users)
        if n_items is not None and width != n_items and rows:
            raise DataFormatError(f"{path}: {width} items, earlier files had {n_items}")
        n_items = width if n_items is None else n_items
        n_users += rows
        users += u
        items += it
        ratings += r
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
    return RatingDataset(n_users, n_items or 0, cat(users, np.int64), cat(items, np.int64),
                         cat(ratings, float))


def loads_jester(text: str) -> RatingDataset:
    n, width, u, it, r = _parse_jester_rows(io.StringIO(text), "<string>")
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
    return RatingDataset(n, width, cat(u, np.int64), cat(it, np.int64), cat(r, float))


def dumps_jester(ds: RatingDataset) -> str:
    X = ds.dense(fill=SENTINEL)
    out = io.StringIO()
    for row in X:
        count = int(np.sum(row != SENTINEL))
        out.write(",".join([str(count)] + [format_rating(v) for v in row]) + "\n")
    return out.getvalue()


def save_jester(ds: RatingDataset, path) -> None:
    Path(path).write_text(dumps_jester(ds), encoding="utf-8")


def format_rating(v: float) -> str:
    return "99" if v == SENTINEL else repr(float(v))


def save_cells(path, users, items, ratings=None) -> None:
    """Cell list as CSV ``user,item[,rating]``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if ratings is None:
            w.writerow(["user", "item"])
            w.writerows(zip(map(int, users), map(int, items)))
        else:
            w.writerow(["user", "item", "rating"])
            w.writerows(zip(map(int, users), map(int, items), map(repr, map(float, ratings))))


def load_cells(path):
    """Inverse of :func:`save_cells`; ratings are None when the column is absent."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["user", "item"]:
            raise DataFormatError(f"{path}: expected a 'user,item[,rating]' header")
        rows = list(reader)
    users = np.array([int(r[0]) for r in rows], dtype=np.int64)
    items = np.array([int(r[1]) for r in rows], dtype=np.int64)
    ratings = np.array([float(r[2]) for r in rows]) if len(header) > 2 else None
    return users, items, ratings


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def subsample_users(ds: RatingDataset, n_users: int, seed: int) -> RatingDataset:
    """Keep ``n_users`` random users, renumbered in their original order."""
    if n_users >= ds.n_users:
        return ds
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(ds.n_users, size=n_users, replace=False))
    remap = np.full(ds.n_users, -1, dtype=np.int64)
    remap[keep] = np.arange(n_users)
    mask = remap[ds.users] >= 0
    return RatingDataset(n_users, ds.n_items, remap[ds.users[mask]], ds.items[mask], ds.ratings[mask])


@dataclass
class SyntheticData:
    dataset: RatingDataset
    dictionary: np.ndarray
    codes: np.ndarray
    full: np.ndarray
    observed: np.ndarray

    def hidden_cells(self):
        u, i = np.nonzero(~self.observed)
        return u, i, self.full[u, i]


def gen_synthetic(n_users: int, obs_dim: int, gs: GroupStructure, sparsity=None,
                  noise: float = 0.0, missing: float = 0.0, seed: int = 0) -> SyntheticData:
    """Ratings from a known dictionary and group-aligned sparse codes.

    Each user draws one group uniformly among those with at most ``sparsity``
    members (all groups when None) and fills it with standard normal values.
    The dictionary has unit-norm columns. Exactly ``round(missing * cells)``
    cells, chosen uniformly, are hidden.
    """
    if n_users < 1 or obs_dim < 1:
        raise ValueError("dimensions must be >= 1")
    if not 0 <= missing < 1:
        raise ValueError("missing fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    D = rng.uniform(-1.0, 1.0, size=(obs_dim, gs.code_dim))
    D /= np.linalg.norm(D, axis=0)
    eligible = [g for g in gs.groups if sparsity is None or len(g) <= sparsity]
    if not eligible:
        raise ValueError(f"no group has at most {sparsity} members")
    codes = np.zeros((n_users, gs.code_dim))
    for a in codes:
        g = eligible[rng.integers(len(eligible))]
        a[g] = rng.standard_normal(len(g))
    X = codes @ D.T
    if noise > 0:
        X += noise * rng.standard_normal(X.shape)
    n_cells = n_users * obs_dim
    observed = np.ones(n_cells, dtype=bool)
    observed[rng.choice(n_cells, size=int(round(missing * n_cells)), replace=False)] = False
    observed = observed.reshape(n_users, obs_dim)
    u, i = np.nonzero(observed)
    ds = RatingDataset(n_users, obs_dim, u, i, X[u, i])
    return SyntheticData(ds, D, codes, X, observed)


def user_stream(per_user: Sequence[Tuple[np.ndarray, np.ndarray]], epochs: int = 1,
                seed: int = 0) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield ``(items, ratings)`` for users with ratings, shuffled every pass."""
    rng = np.random.default_rng(seed)
    rated = [k for k, (obs, _) in enumerate(per_user) if len(obs)]
    for _ in range(epochs):
        for k in rng.permutation(rated):
            yield per_user[k]
