# Group structures over code coordinates
#
# Codes live on a 10 x 10 grid (toroid) or on a binary tree. Each group is a
# set of code coordinates with a weight vector supported on it.

# %%
import numpy as np

from osdl.groups import dumps, toroid_groups, tree_groups, validate

# %% A toroid: every cell owns the (2r+1) x (2r+1) window around it, with wraparound.
gs = toroid_groups(10, 1)
print(gs.n_groups, "groups of size", set(gs.sizes().tolist()))
print("window of cell (0, 0):", gs.groups[0].tolist())

# %% Picture the window of cell (0, 0) on the grid.
grid = np.zeros(100, dtype=int)
grid[gs.groups[0]] = 1
print(grid.reshape(10, 10))

# %% A tree: node i's group is node i and all of its descendants (level order).
tree = tree_groups(4)
for node in (0, 1, 7):
    print(f"node {node}:", tree.groups[node].tolist())

# %% Structures are checked and can be dumped as text.
print("problems:", validate(tree))
print(dumps(tree_groups(2)))
