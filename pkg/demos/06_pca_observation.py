"""Low-dimensional structure of Mueller matrices across materials.

Normalizing each block by its intensity gain and squashing the entries
through a scaled arctangent puts wildly different materials on a common
footing; PCA of the resulting 16-vectors then shows how few degrees of
freedom the ensemble really uses.
"""

import numpy as np

from pltt.analysis import arctan_map, arctan_unmap, build_observation, pca, pca_project, pca_reconstruct
from pltt.scene import generate_ensemble

samples = generate_ensemble(seed=2024, n=500).samples
obs = build_observation(samples, c=8.0)
print("observation matrix: %s (%d dark samples skipped)"
      % (obs.rows.shape, obs.n_skipped))

# the map is invertible on its range
x = np.linspace(-0.99, 0.99, 9)
print("arctan map round trip error %.1e"
      % np.abs(arctan_unmap(arctan_map(x, c=8.0), c=8.0) - x).max())

basis = pca(obs.rows)
print("\nsingular values:")
print(np.array2string(basis.singular_values, precision=2, suppress_small=True))
for frac in (0.90, 0.95, 0.99):
    print("components for %.0f%% energy: %d" % (100 * frac, basis.n_components_for(frac)))

# -- rank-k truncation error equals the energy it discards -------------------
print("\n%-12s %14s %14s" % ("components", "error^2", "discarded"))
for k in (2, 6, 10, 14):
    coeffs = pca_project(basis, obs.rows, n_components=k)
    recon = pca_reconstruct(basis, coeffs)
    err_sq = np.sum((obs.rows - recon) ** 2)
    discarded = np.sum(basis.singular_values[k:] ** 2)
    print("%-12d %14.6f %14.6f" % (k, err_sq, discarded))

# a familiar face: the first component, folded back to 4x4 layout
print("\nleading component as a 4x4 stencil:")
print(np.round(basis.components[0].reshape(4, 4), 3))
