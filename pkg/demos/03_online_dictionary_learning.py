# Online dictionary learning from partially observed samples
#
# Samples arrive in mini-batches. Each is coded against the current dictionary,
# absorbed into discounted running statistics, and the columns are refreshed
# by one block-coordinate sweep.

# %%
import numpy as np

from osdl.coder import CoderConfig, solve_code
from osdl.data import gen_synthetic, user_stream
from osdl.evaluation import rmse
from osdl.groups import tree_groups
from osdl.learner import LearnerConfig, train

gs = tree_groups(4)
syn = gen_synthetic(500, 20, gs, sparsity=4, noise=0.1, missing=0.3, seed=0)
per_user = syn.dataset.by_user()
print(len(syn.dataset), "observed ratings,", (~syn.observed).sum(), "hidden")

# %% Train, tracking held-out error after every tenth dictionary update.
coder = CoderConfig(kappa=1 / 192, inner_iters=20)
cfg = LearnerConfig(coder=coder, rho=4.0, minibatch_size=8, epochs=10, seed=0)
u, i, truth = syn.hidden_cells()


def held_out_rmse(D):
    pred = np.empty_like(truth)
    for user in np.unique(u):
        obs, x_obs = per_user[user]
        sel = u == user
        pred[sel] = D[i[sel]] @ solve_code(x_obs, D[obs], gs, coder).alpha
    return rmse(truth, pred)


def log(t, D):
    if t % 100 == 0:
        print(f"step {t:4d}  held-out RMSE {held_out_rmse(D):.4f}")


dictionary, stats = train(user_stream(per_user, cfg.epochs, 0), gs, cfg, obs_dim=20, on_step=log)

# %% Compare with predicting each item's mean.
baseline = rmse(truth, syn.dataset.item_means()[i])
final = held_out_rmse(dictionary.matrix)
print(f"final {final:.4f} vs item mean {baseline:.4f} (ratio {final / baseline:.3f})")
print("max column norm:", dictionary.column_norms().max())
