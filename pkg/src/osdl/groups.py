"""Group structures over the coordinates of a sparse code.

A group structure is a set system over ``{0, ..., code_dim - 1}`` together with
one non-negative weight vector per group. The structured regularizer only ever
needs the squared weights, so they are stored densely as a
``(n_groups, code_dim)`` matrix.

Indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np


@dataclass(frozen=True)
class GroupStructure:
    """Groups over code coordinates and their weight vectors.

    Parameters
    ----------
    code_dim : int
        Dimension of the code vector.
    groups : list of ndarray
        Sorted index arrays, one per group.
    weights : ndarray, shape (n_groups, code_dim)
        Row ``g`` is the weight vector of group ``g``; positive on the group
        and zero elsewhere.
    kind : str
        Free-form description of the generator, kept for provenance.
    """

    code_dim: int
    groups: List[np.ndarray]
    weights: np.ndarray
    kind: str = "custom"
    _sq_weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_sq_weights", w * w)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sq_weights(self) -> np.ndarray:
        return self._sq_weights

    def sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups])

    def __eq__(self, other):
        if not isinstance(other, GroupStructure):
            return NotImplemented
        return (
            self.code_dim == other.code_dim
            and self.n_groups == other.n_groups
            and all(np.array_equal(a, b) for a, b in zip(self.groups, other.groups))
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


def from_groups(code_dim: int, groups: Sequence[Sequence[int]], kind: str = "custom") -> GroupStructure:
    """Build a structure with indicator weights from index lists."""
    arrays = [np.array(sorted(set(int(i) for i in g)), dtype=int) for g in groups]
    weights = np.zeros((len(arrays), code_dim))
    for row, g in zip(weights, arrays):
        row[g[(g >= 0) & (g < code_dim)]] = 1.0
    return GroupStructure(code_dim, arrays, weights, kind)


def toroid_groups(d: int, r: int) -> GroupStructure:
    """Wrapped square neighbourhoods on a ``d x d`` torus.

    Cell ``(row, col)`` has code index ``row * d + col``. Group ``i`` holds every
    cell within Chebyshev distance ``r`` of cell ``i``, so each group has
    ``(2r + 1)**2`` members. ``r = 0`` gives singletons, i.e. plain sparsity.
    """
    if d < 1:
        raise ValueError(f"toroid side must be >= 1, got {d}")
    if r < 0:
        raise ValueError(f"neighbourhood radius must be >= 0, got {r}")
    if 2 * r >= d:
        raise ValueError(f"radius {r} wraps onto itself on a {d}x{d} torus (need r < d/2)")
    offsets = np.arange(-r, r + 1)
    groups = []
    for row in range(d):
        rows = (row + offsets) % d
        for col in range(d):
            cols = (col + offsets) % d
            groups.append((rows[:, None] * d + cols[None, :]).ravel())
    return from_groups(d * d, groups, kind=f"toroid(d={d},r={r})")


def tree_groups(levels: int) -> GroupStructure:
    """Node-plus-descendants groups of a complete binary tree.

    Nodes are numbered in level order (root 0, children of ``i`` are
    ``2i + 1`` and ``2i + 2``); there are ``2**levels - 1`` of them.
    """
    if levels < 1:
        raise ValueError(f"tree needs at least one level, got {levels}")
    n = 2**levels - 1
    groups = []
    for node in range(n):
        members, frontier = [], [node]
        while frontier:
            members.extend(frontier)
            frontier = [c for p in frontier for c in (2 * p + 1, 2 * p + 2) if c < n]
        groups.append(members)
    return from_groups(n, groups, kind=f"tree(levels={levels})")


def validate(gs: GroupStructure) -> List[str]:
    """Return the violated invariants of ``gs``; an empty list means valid."""
    problems = []
    w = np.asarray(gs.weights)
    if w.shape != (gs.n_groups, gs.code_dim):
        problems.append(f"weights shape {w.shape} != ({gs.n_groups}, {gs.code_dim})")
        return problems
    covered = np.zeros(gs.code_dim, dtype=bool)
    for i, g in enumerate(gs.groups):
        g = np.asarray(g)
        if g.size == 0:
            problems.append(f"empty group: G{i}")
            continue
        if g.min() < 0 or g.max() >= gs.code_dim:
            problems.append(f"index range: G{i} has indices outside [0, {gs.code_dim})")
            g = g[(g >= 0) & (g < gs.code_dim)]
        if np.any(w[i] < 0):
            problems.append(f"negative weight: G{i}")
        member = np.zeros(gs.code_dim, dtype=bool)
        member[g] = True
        if np.any(w[i][member] <= 0) or np.any(w[i][~member] != 0):
            problems.append(f"weight support != group: G{i}")
        covered |= member
    if not covered.all():
        missing = np.flatnonzero(~covered).tolist()
        problems.append(f"coverage: indices {missing} belong to no group")
    return problems


def dumps(gs: GroupStructure) -> str:
    """Line-oriented text form: ``dalpha=<n>`` then ``G<i>: j ... ; w: w_j ...``."""
    lines = [f"dalpha={gs.code_dim}"]
    for i, g in enumerate(gs.groups):
        idx = " ".join(str(int(j)) for j in g)
        wts = " ".join(repr(float(gs.weights[i, j])) for j in g)
        lines.append(f"G{i}: {idx} ; w: {wts}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> GroupStructure:
    """Inverse of :func:`dumps`."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dalpha="):
        raise ValueError("group dump must start with 'dalpha=<n>'")
    code_dim = int(lines[0].split("=", 1)[1])
    groups, weights = [], []
    for ln in lines[1:]:
        head, _, rest = ln.partition(":")
        if not head.startswith("G"):
            raise ValueError(f"bad group line: {ln!r}")
        idx_part, _, w_part = rest.partition("; w:")
        idx = np.array([int(tok) for tok in idx_part.split()], dtype=int)
        wts = [float(tok) for tok in w_part.split()]
        if len(wts) != len(idx):
            raise ValueError(f"index/weight count mismatch on {head}")
        row = np.zeros(code_dim)
        row[idx] = wts
        groups.append(idx)
        weights.append(row)
    return GroupStructure(code_dim, groups, np.array(weights).reshape(len(groups), code_dim), "loaded")
