# Rating prediction with item-neighbour corrections
#
# Items are dictionary rows. The base estimate of an unrated item is refined by
# the similarity-weighted error the model makes on the user's rated items.

# %%
import numpy as np

from osdl.coder import CoderConfig
from osdl.groups import toroid_groups
from osdl.recommender import CorrectionConfig, fit_gammas, predict_user, similarity_matrix

rng = np.random.default_rng(1)
gs = toroid_groups(4, 1)
D = rng.normal(size=(30, 16)) / 4
coder = CoderConfig(kappa=1e-2)

# %% Similarities between items, two kinds.
S1 = similarity_matrix(D, "S1", beta=1.8)
S2 = similarity_matrix(D, "S2", beta=1.8)
print("S1 range:", S1.min().round(3), S1.max().round(3))
print("S2 diagonal is clamped:", S2[0, 0])

# %% Predict one user's unrated items with and without a correction.
obs = np.sort(rng.choice(30, 12, replace=False))
x_obs = rng.uniform(-10, 10, size=12)
plain = predict_user(0, D, obs, x_obs, gs, coder, CorrectionConfig(scheme="S1", gamma1=0.0))
nudged = predict_user(0, D, obs, x_obs, gs, coder,
                      CorrectionConfig(scheme="S1_0", beta=1.8, gamma0=0.9, gamma1=0.5))
for k, b, c in list(zip(plain.items, plain.base, nudged.corrected))[:5]:
    print(f"item {k:2d}: base {b:+.3f}  corrected {c:+.3f}")

# %% The correction weights are fitted by least squares on held-out ratings.
base = rng.normal(size=200)
corr = rng.normal(size=200)
target = 0.9 * base + 0.2 * corr + 0.05 * rng.normal(size=200)
print("fitted (gamma0, gamma1):", np.round(fit_gammas(target, base, corr, "S1_0"), 3))
