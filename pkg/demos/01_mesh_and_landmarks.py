# %% [markdown]
# # Curvature and landmarks on a torso surface
#
# A synthetic torso (an elliptic capped cylinder) stands in for a scanned
# body surface. We look at its discrete curvature and at the order in which
# Gaussian-process landmarking visits its vertices.

# %%
import numpy as np

from bspm_osp.gplmk import GplmkConfig, landmarks_for_mesh
from bspm_osp.mesh import curvatures, icosphere, torso_mesh

# %% [markdown]
# Sanity check first: on a unit sphere the Gaussian curvature is 1 and the
# mean-curvature magnitude is 2, and the angle deficits add up to 4 pi.

# %%
sphere = icosphere(3)
g = curvatures(sphere)
print("sphere: median K =", np.median(g.gauss_k).round(3), " median eta =", np.median(g.mean_eta).round(3))
print("total angle deficit / 4pi =", np.sum(g.gauss_k * g.area) / (4 * np.pi))

# %%
torso = torso_mesh()
g = curvatures(torso)
print(torso.n_vertices, "vertices,", torso.n_faces, "faces, Euler characteristic", torso.euler_characteristic())
print("|K| percentiles (5, 50, 95):", np.percentile(np.abs(g.gauss_k), [5, 50, 95]).round(6))

# %% [markdown]
# Landmarks: lambda mixes Gaussian against mean curvature in the weight,
# rho sharpens it. The first picks land on the strongly curved rims of the
# caps; later ones fill in the flatter sides.

# %%
for lam in (0.0, 0.5, 1.0):
    seq = landmarks_for_mesh(torso, GplmkConfig(lam=lam, rho=1.0, n_landmarks=60))
    z = torso.vertices[seq.indices, 2]
    rim = np.mean(np.abs(z) > 0.9 * np.abs(torso.vertices[:, 2]).max())
    print(f"lambda={lam}: first 8 = {seq.indices[:8]}, share near the caps among 60 = {rim:.2f}")

# %%
seq = landmarks_for_mesh(torso, GplmkConfig(n_landmarks=torso.n_vertices))
scores = np.array(seq.scores)
print("posterior variance after 10 / 30 / 100 landmarks:", scores[[10, 30, 100]] / scores[0])
