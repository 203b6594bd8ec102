# Hyperparameter sweep with validation-based selection
#
# Ratings are split 80/10/10 by cell. Each (structure, kappa, rho, R) tuple is
# trained on the training cells; the correction scheme, beta and gammas are
# picked on validation; test cells are scored last.

# %%
from osdl.data import gen_synthetic
from osdl.evaluation import (GridSpec, SplitSpec, grid_search, item_mean_baseline, split,
                             surfaces)
from osdl.groups import tree_groups

ds = gen_synthetic(300, 15, tree_groups(4), sparsity=4, noise=0.1, missing=0.3, seed=3).dataset
parts = split(ds, SplitSpec(seed=0))
print("split sizes:", [len(p) for p in parts])

# %%
grid = GridSpec(structures=["tree:4"], kappas=[1 / 16, 1 / 256], rhos=[0.0, 0.5],
                minibatch_sizes=[8], betas=[0.2, 1.8, 5.0])
results = grid_search(ds, grid, splits=parts)
for r in results:
    c = r.config
    print(f"kappa={c.kappa:<9.6g} rho={c.rho:<4} {r.scheme:5s} beta={r.beta:<4} "
          f"val {r.validation_rmse:.4f}  test {r.test_rmse:.4f}")

# %%
print("item-mean baseline test RMSE: %.4f" % item_mean_baseline(parts[0], parts[2])[0])
for row in surfaces(results)[:4]:
    print(row)
