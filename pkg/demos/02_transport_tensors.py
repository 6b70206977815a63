"""Time-resolved polarimetric light transport as a five-axis tensor.

T(s, s', p, p', t) maps the p'-th Stokes component sent from projector
pixel s' to the p-th component arriving at camera pixel s after t time
bins. This script builds small tensors by hand and exercises the
algebra: contraction with illumination, temporal convolution, slicing,
and epipolar probing.
"""

import numpy as np

from pltt.polarization import ideal_mirror, linear_polarizer
from pltt.tensor import (
    IlluminationTensor,
    TransportTensor,
    contract,
    convolve_time,
    epipolar_masks,
    probe,
    slice_polarimetric,
    slice_spatial,
    slice_temporal,
)

np.set_printoptions(precision=3, suppress=True)

# -- a 2x2 coaxial scene: mirror echoes at two depths ------------------------
data = np.zeros((4, 1, 4, 4, 6))
data[:2, 0, :, :, 2] = ideal_mirror()          # near pixels echo at bin 2
data[2:, 0, :, :, 5] = 0.6 * ideal_mirror()    # far pixels, dimmer and later
coaxial = TransportTensor(data, (2, 2), (2, 2), 1e-10, coaxial=True)
print("coaxial tensor: %d camera pixels, %d bins" % (coaxial.n_cam, coaxial.n_bins))

flood = IlluminationTensor(np.tile([1.0, 0.0, 0.0, 0.0], (4, 1)), (2, 2))
detected = contract(coaxial, flood)
print("detected intensity per pixel and bin:")
print(detected.data[:, 0, :])

# time profile summed over pixels picks out both echoes
print("temporal profile: %s" % slice_temporal(coaxial))

# -- a two-bin pulse smears the echoes by convolution ------------------------
pulse = np.zeros((4, 4, 6))
pulse[:, 0, 0] = 1.0
pulse[:, 0, 1] = 0.5
blurred = convolve_time(coaxial, IlluminationTensor(pulse, (2, 2), 1e-10))
print("pulsed capture, pixel 0: %s" % blurred.data[0, 0, :])

# -- dense projector-camera tensor and its slices ----------------------------
rng = np.random.default_rng(0)
dense_data = np.zeros((4, 4, 4, 4, 3))
for s in range(4):
    dense_data[s, s, :, :, 1] = linear_polarizer(rng.uniform(0, np.pi))
dense = TransportTensor(dense_data, (2, 2), (2, 2), 1e-10)

print("\nspatial transport matrix (sum over time, intensity entry):")
print(slice_spatial(dense))
print("aggregate Mueller block:")
print(slice_polarimetric(dense))

# -- epipolar probing splits direct from indirect coupling --------------------
# our dense tensor is purely diagonal, so the non-epipolar probe is empty
epi, non_epi = epipolar_masks((2, 2), (2, 2))
direct = probe(dense, epi)
indirect = probe(dense, non_epi)
print("\nepipolar energy %.3f, non-epipolar energy %.3f"
      % (np.abs(direct.data).sum(), np.abs(indirect.data).sum()))
print("probes partition the tensor exactly: %s"
      % np.array_equal(direct.data + indirect.data, dense.data))

# add an interreflection between rows and the probe sees it
dense_data[0, 3, 0, 0, 2] = 0.2
bounced = TransportTensor(dense_data, (2, 2), (2, 2), 1e-10)
print("after adding a cross-row bounce: non-epipolar energy %.3f"
      % np.abs(probe(bounced, non_epi).data).sum())
