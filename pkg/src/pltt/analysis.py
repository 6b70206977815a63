"""
Statistical tools layered on top of transport tensors: a bounded
arctan compression for Mueller samples, PCA over the compressed
vectors, and an affine descattering fit that predicts a scatter-free
intensity image from the 16 polarimetric channels of a summed tensor.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .tensor import probe


def arctan_map(m, c=8.0):
    """Elementwise y = arctan(c * x): squashes each entry into (-pi/2, pi/2)."""
    if c <= 0:
        raise ValueError("compression factor must be positive")
    return np.arctan(c * np.asarray(m, dtype=float))


def arctan_unmap(y, c=8.0):
    """Inverse of arctan_map; |y| >= pi/2 has no preimage and raises."""
    if c <= 0:
        raise ValueError("compression factor must be positive")
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= np.pi / 2):
        raise ValueError("arctan_unmap needs |y| < pi/2 everywhere")
    return np.tan(y) / c


@dataclass(frozen=True)
class ObservationMatrix:
    """Rows are vec(arctan(c * M / m00)) for each usable Mueller sample."""

    rows: np.ndarray = field(repr=False)
    c: float = 8.0
    n_skipped: int = 0


def build_observation(samples, c=8.0):
    """
    Stack Mueller samples (n, 4, 4) into an (n_used, 16) observation
    matrix. Each sample is normalized by its own m00 before the arctan
    map, so the rows are invariant to overall attenuation. Samples with
    m00 <= 0 are skipped and counted.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[1:] != (4, 4):
        raise ValueError("expected samples of shape (n, 4, 4), got %r" % (samples.shape,))
    keep = samples[:, 0, 0] > 0
    used = samples[keep]
    rows = arctan_map(used / used[:, :1, :1], c=c).reshape(used.shape[0], 16)
    return ObservationMatrix(rows=rows, c=float(c), n_skipped=int((~keep).sum()))


@dataclass(frozen=True)
class PrincipalBasis:
    mean: np.ndarray = field(repr=False)
    components: np.ndarray = field(repr=False)      # (16, 16), rows orthonormal
    singular_values: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)          # cumulative variance fraction

    def n_components_for(self, fraction):
        """Smallest component count whose cumulative energy reaches fraction."""
        if not 0 < fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        return int(np.searchsorted(self.energy, fraction - 1e-12) + 1)


def pca(obs):
    """
    Principal components of an observation matrix (mean removed).

    Always returns a full 16-vector basis; when fewer samples than
    dimensions are available the trailing singular values are zero.
    A degenerate matrix of identical rows yields all-zero singular
    values and a flat energy curve of ones.
    """
    rows = obs.rows if isinstance(obs, ObservationMatrix) else np.asarray(obs, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 16:
        raise ValueError("expected an (n, 16) observation matrix, got %r" % (rows.shape,))
    n = rows.shape[0]
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    mean = rows.mean(axis=0)
    centered = rows - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=True)
    full = np.zeros(16)
    full[: svals.shape[0]] = svals
    power = full**2
    total = power.sum()
    energy = np.cumsum(power) / total if total > 0 else np.ones(16)
    return PrincipalBasis(mean=mean, components=vt, singular_values=full, energy=energy)


def pca_project(basis, rows, n_components=16):
    """Coefficients of (rows - mean) on the leading principal directions."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return (rows - basis.mean) @ basis.components[:n_components].T


def pca_reconstruct(basis, coeffs):
    """Back from principal coefficients to observation rows."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    return coeffs @ basis.components[: coeffs.shape[1]] + basis.mean


def summed_polarimetric_image(tensor, mask=None):
    """
    Per-camera-pixel 4x4 Mueller image: the transport tensor summed
    over projector pixels and time bins, optionally through a probe
    mask first (dense tensors only).
    """
    if mask is not None:
        tensor = probe(tensor, mask)
    return tensor.data.sum(axis=(1, 4))


@dataclass(frozen=True)
class DescatterModel:
    """
    Affine map from a (S, 4, 4) Mueller image to a scalar image:
    prediction(s) = sum_ij weights[i,j] * (image[s,i,j] + offsets[i,j]).
    """

    weights: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    mode: str = "full"
    method: str = "closed_form"
    objective: float = 0.0
    history: tuple = ()


def apply_descatter(model, image):
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[1:] != (4, 4):
        raise ValueError("expected an image of shape (n, 4, 4), got %r" % (image.shape,))
    return np.einsum("sij,ij->s", image + model.offsets, model.weights)


def _restrict(mode):
    support = np.zeros((4, 4), dtype=bool)
    if mode == "full":
        support[:] = True
    elif mode == "intensity_only":
        support[0, 0] = True
    else:
        raise ValueError("unknown descatter mode %r" % (mode,))
    return support


def _closed_form(x_flat, target):
    design = np.concatenate([x_flat, np.ones((x_flat.shape[0], 1))], axis=1)
    theta, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    w, beta = theta[:-1], theta[-1]
    wsq = float(w @ w)
    if wsq > 0:
        b = beta * w / wsq
    else:
        if abs(beta) > 1e-12:
            raise ValueError(
                "descatter fit collapsed to a constant; no weight/offset pair realizes it"
            )
        b = np.zeros_like(w)
    return w, b


def _objective_and_grad(params, x_flat, target, support_flat):
    w = params[:16] * support_flat
    b = params[16:] * support_flat
    pred = x_flat @ w + w @ b
    resid = pred - target
    obj = float(resid @ resid)
    grad_w = 2.0 * (resid @ x_flat + resid.sum() * b) * support_flat
    grad_b = 2.0 * resid.sum() * w * support_flat
    return obj, np.concatenate([grad_w, grad_b])


def fit_descatter(image, target, mode="full", method="closed_form"):
    """
    Fit the affine descattering model minimizing sum_s (prediction - target)^2.

    mode "full" fits all 16 channels; "intensity_only" restricts weight
    and offset support to the (0, 0) channel, which is what a camera
    without polarimetry could do. method "closed_form" solves the
    equivalent affine least-squares exactly; "lbfgs" runs L-BFGS-B with
    analytic gradients from the identity initialization and records the
    objective history. Both land on the same objective value for
    well-posed inputs.
    """
    image = np.asarray(image, dtype=float)
    target = np.asarray(target, dtype=float)
    if image.ndim != 3 or image.shape[1:] != (4, 4):
        raise ValueError("expected an image of shape (n, 4, 4), got %r" % (image.shape,))
    if target.shape != (image.shape[0],):
        raise ValueError("target must have one value per camera pixel")
    if image.shape[0] < 2:
        raise ValueError("descatter fit needs at least 2 pixels")
    if not np.any(image):
        raise ValueError("descatter fit needs a nonzero image")

    support = _restrict(mode)
    support_flat = support.reshape(16).astype(float)
    x_flat = image.reshape(image.shape[0], 16) * support_flat

    if method == "closed_form":
        w, b = _closed_form(x_flat[:, support_flat > 0], target)
        w_full = np.zeros(16)
        b_full = np.zeros(16)
        w_full[support_flat > 0] = w
        b_full[support_flat > 0] = b
        obj, _ = _objective_and_grad(
            np.concatenate([w_full, b_full]), x_flat, target, support_flat
        )
        history = (obj,)
    elif method == "lbfgs":
        x0 = np.zeros(32)
        x0[0] = 1.0   # start from the plain-intensity readout
        history_list = []

        def track(params):
            history_list.append(
                _objective_and_grad(params, x_flat, target, support_flat)[0]
            )

        res = minimize(
            _objective_and_grad,
            x0,
            args=(x_flat, target, support_flat),
            jac=True,
            method="L-BFGS-B",
            callback=track,
            options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12},
        )
        w_full = res.x[:16] * support_flat
        b_full = res.x[16:] * support_flat
        obj = float(res.fun)
        history = tuple(history_list)
    else:
        raise ValueError("unknown descatter method %r" % (method,))

    return DescatterModel(
        weights=w_full.reshape(4, 4),
        offsets=b_full.reshape(4, 4),
        mode=mode,
        method=method,
        objective=obj,
        history=history,
    )
