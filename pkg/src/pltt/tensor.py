"""
Dense spatio-temporal polarimetric transport tensors.

A transport tensor couples every projector pixel s' to every camera
pixel s through a 4x4 Mueller block resolved over time bins t. Storage
is a dense float array indexed ``(s, s', p, p', t)`` where p is the
outgoing (detected) Stokes component and p' the incoming (illumination)
one. Spatial indices are flattened row-major with the 2D shapes kept as
metadata.

Coaxial tensors sample only the s' = s diagonal; they store a projector
axis of length 1 with ``coaxial=True`` and the logical projector shape
equal to the camera shape.
"""

from dataclasses import dataclass, field

import numpy as np


def _flat(shape):
    return int(shape[0]) * int(shape[1])


@dataclass(frozen=True)
class TransportTensor:
    """
    Dense transport tensor with metadata.

    data : ndarray, shape (S_cam, S_proj, 4, 4, n_bins)
        For coaxial tensors the projector axis has length 1 and holds
        the diagonal blocks T(s, s, ...).
    cam_shape, proj_shape : (height, width)
        Logical 2D pixel grids; flattening is row-major.
    time_bin_width : float
        Seconds per bin.
    """

    data: np.ndarray = field(repr=False)
    cam_shape: tuple
    proj_shape: tuple
    time_bin_width: float
    channel_id: str = "mono"
    coaxial: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "cam_shape", tuple(int(v) for v in self.cam_shape))
        object.__setattr__(self, "proj_shape", tuple(int(v) for v in self.proj_shape))
        if data.ndim != 5:
            raise ValueError("transport data must be 5-dimensional, got %d axes" % data.ndim)
        s_cam, s_proj, p, q, n_bins = data.shape
        if min(data.shape) < 1:
            raise ValueError("all tensor dimensions must be >= 1, got %r" % (data.shape,))
        if (p, q) != (4, 4):
            raise ValueError("polarimetric block must be 4x4, got %dx%d" % (p, q))
        if s_cam != _flat(self.cam_shape):
            raise ValueError("camera axis %d does not match cam_shape %r" % (s_cam, self.cam_shape))
        expected = 1 if self.coaxial else _flat(self.proj_shape)
        if s_proj != expected:
            raise ValueError("projector axis %d does not match proj_shape %r (coaxial=%r)"
                             % (s_proj, self.proj_shape, self.coaxial))
        if self.coaxial and self.proj_shape != self.cam_shape:
            raise ValueError("coaxial tensors must have proj_shape equal to cam_shape")
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor values must be finite")
        if not self.time_bin_width > 0.0:
            raise ValueError("time_bin_width must be positive, got %r" % (self.time_bin_width,))

    @property
    def n_cam(self):
        return self.data.shape[0]

    @property
    def n_proj(self):
        return _flat(self.proj_shape)

    @property
    def n_bins(self):
        return self.data.shape[4]


@dataclass(frozen=True)
class IlluminationTensor:
    """Per-projector-pixel Stokes vectors, optionally time-resolved.

    data is (S_proj, 4) for steady illumination or (S_proj, 4, n_bins)
    for pulsed illumination (then time_bin_width must be set).
    """

    data: np.ndarray = field(repr=False)
    proj_shape: tuple
    time_bin_width: float = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "proj_shape", tuple(int(v) for v in self.proj_shape))
        if data.ndim not in (2, 3):
            raise ValueError("illumination data must be (S,4) or (S,4,T), got %r" % (data.shape,))
        if data.shape[0] != _flat(self.proj_shape) or data.shape[1] != 4:
            raise ValueError("illumination shape %r does not match proj_shape %r"
                             % (data.shape, self.proj_shape))
        if data.ndim == 3 and self.time_bin_width is None:
            raise ValueError("time-resolved illumination needs a time_bin_width")
        if not np.all(np.isfinite(data)):
            raise ValueError("illumination values must be finite")

    @property
    def has_time(self):
        return self.data.ndim == 3

    def is_physical(self, tol=1e-9):
        from .polarization import is_valid_stokes
        if self.has_time:
            return is_valid_stokes(np.moveaxis(self.data, 1, -1), tol)
        return is_valid_stokes(self.data, tol)


@dataclass(frozen=True)
class DetectedTensor:
    """Per-camera-pixel detected Stokes vectors over time bins: (S_cam, 4, n_bins)."""

    data: np.ndarray = field(repr=False)
    cam_shape: tuple
    time_bin_width: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "cam_shape", tuple(int(v) for v in self.cam_shape))
        if data.ndim != 3 or data.shape[1] != 4:
            raise ValueError("detected data must be (S,4,T), got %r" % (data.shape,))
        if data.shape[0] != _flat(self.cam_shape):
            raise ValueError("detected shape %r does not match cam_shape %r"
                             % (data.shape, self.cam_shape))
        if not np.all(np.isfinite(data)):
            raise ValueError("detected values must be finite")


@dataclass(frozen=True)
class ProbeMask:
    """
    Spatial probing pattern as a stack of scan steps.

    camera_mask has shape (J, S_cam) and projector_mask (J, S_proj);
    probing applies sum_j camera_mask[j, s] * projector_mask[j, s'] to
    the (s, s') coupling. A single pattern may be given as 1D vectors
    (J = 1), which reduces to a plain separable mask. Values must lie
    in [0, 1].
    """

    camera_mask: np.ndarray = field(repr=False)
    projector_mask: np.ndarray = field(repr=False)
    label: str = "custom"

    def __post_init__(self):
        cam = np.atleast_2d(np.asarray(self.camera_mask, dtype=float))
        proj = np.atleast_2d(np.asarray(self.projector_mask, dtype=float))
        object.__setattr__(self, "camera_mask", cam)
        object.__setattr__(self, "projector_mask", proj)
        if cam.shape[0] != proj.shape[0]:
            raise ValueError("camera and projector mask stacks must have the same step count")
        for name, m in (("camera", cam), ("projector", proj)):
            if np.any(m < 0.0) or np.any(m > 1.0):
                raise ValueError("%s mask values must lie in [0, 1]" % name)

    @property
    def n_steps(self):
        return self.camera_mask.shape[0]

    def coupling(self):
        """Effective (S_cam, S_proj) pairwise weight matrix."""
        return np.einsum("js,jx->sx", self.camera_mask, self.projector_mask)


# ---------------------------------------------------------------------------
# operations


def contract(tensor, illum):
    """
    Contract a transport tensor with steady illumination.

    I(s, p, t) = sum_{s', p'} T(s, s', p, p', t) P(s', p')

    For coaxial tensors only the diagonal s' = s contributes.
    """
    if illum.has_time:
        raise ValueError("contract needs steady illumination; use convolve_time")
    if illum.proj_shape != tensor.proj_shape:
        raise ValueError("illumination grid %r does not match tensor projector grid %r"
                         % (illum.proj_shape, tensor.proj_shape))
    if tensor.coaxial:
        out = np.einsum("spqt,sq->spt", tensor.data[:, 0], illum.data)
    else:
        out = np.einsum("sxpqt,xq->spt", tensor.data, illum.data)
    return DetectedTensor(out, tensor.cam_shape, tensor.time_bin_width)


def convolve_time(tensor, illum):
    """
    Contract with pulsed illumination by temporal convolution.

    I(s, p, t) = sum_{s', p', t'} T(s, s', p, p', t - t') P(s', p', t')

    Zero-padded and non-circular; the output keeps the tensor's bin
    count, so energy past the last bin is truncated.
    """
    if not illum.has_time:
        raise ValueError("convolve_time needs time-resolved illumination; use contract")
    if illum.proj_shape != tensor.proj_shape:
        raise ValueError("illumination grid %r does not match tensor projector grid %r"
                         % (illum.proj_shape, tensor.proj_shape))
    if illum.time_bin_width != tensor.time_bin_width:
        raise ValueError("time bin widths differ: tensor %r vs illumination %r"
                         % (tensor.time_bin_width, illum.time_bin_width))
    n_bins = tensor.n_bins
    out = np.zeros((tensor.n_cam, 4, n_bins))
    for t_in in range(illum.data.shape[2]):
        if t_in >= n_bins:
            break
        pulse = illum.data[:, :, t_in]
        # contract the full tensor, then shift-and-truncate: keeping the
        # einsum shape fixed per iteration makes delaying the pulse by a
        # bin shift the output bitwise-exactly
        if tensor.coaxial:
            part = np.einsum("spqt,sq->spt", tensor.data[:, 0], pulse)
        else:
            part = np.einsum("sxpqt,xq->spt", tensor.data, pulse)
        out[:, :, t_in:] += part[:, :, :n_bins - t_in]
    return DetectedTensor(out, tensor.cam_shape, tensor.time_bin_width)


def slice_spatial(tensor):
    """Spatial transport matrix: sum over time of the (p=0, p'=0) entry."""
    return tensor.data[:, :, 0, 0, :].sum(axis=2)


def slice_temporal(tensor, s=None, s_prime=None):
    """
    Temporal profile of the (p=0, p'=0) entry.

    With no indices, sums over all pixel pairs (the backward-compatible
    aggregate); with indices, returns the single-pair profile. For
    coaxial tensors ``s_prime`` must be omitted or equal ``s``.
    """
    if s is None and s_prime is None:
        return tensor.data[:, :, 0, 0, :].sum(axis=(0, 1))
    if s is None:
        raise ValueError("s must be given when s_prime is")
    if not 0 <= s < tensor.n_cam:
        raise ValueError("camera index %r out of range" % (s,))
    if tensor.coaxial:
        if s_prime not in (None, s):
            raise ValueError("coaxial tensors only hold the s' = s diagonal")
        return tensor.data[s, 0, 0, 0, :]
    if s_prime is None:
        return tensor.data[s, :, 0, 0, :].sum(axis=0)
    if not 0 <= s_prime < tensor.data.shape[1]:
        raise ValueError("projector index %r out of range" % (s_prime,))
    return tensor.data[s, s_prime, 0, 0, :]


def slice_polarimetric(tensor):
    """Aggregate Mueller block: sum over pixels, pixel pairs, and time."""
    return tensor.data.sum(axis=(0, 1, 4))


def probe(tensor, mask):
    """
    Keep only the pixel couplings selected by a probe mask.

    T'(s, s', ...) = sum_j camera_mask[j, s] projector_mask[j, s'] T(s, s', ...)
    """
    if tensor.coaxial:
        raise ValueError("cannot probe a coaxial tensor: its projector axis is virtual")
    if mask.camera_mask.shape[1] != tensor.n_cam:
        raise ValueError("camera mask length %d does not match tensor %d"
                         % (mask.camera_mask.shape[1], tensor.n_cam))
    if mask.projector_mask.shape[1] != tensor.n_proj:
        raise ValueError("projector mask length %d does not match tensor %d"
                         % (mask.projector_mask.shape[1], tensor.n_proj))
    weight = mask.coupling()
    data = tensor.data * weight[:, :, None, None, None]
    return TransportTensor(data, tensor.cam_shape, tensor.proj_shape,
                           tensor.time_bin_width, tensor.channel_id, False)


def epipolar_masks(cam_shape, proj_shape):
    """
    Complementary epipolar / non-epipolar probe masks for rectified
    row-aligned camera and projector grids.

    Camera row i couples only to projector row i in the epipolar mask;
    the non-epipolar mask holds exactly the complementary couplings, so
    the two probes partition any tensor.
    """
    cam_h, cam_w = cam_shape
    proj_h, proj_w = proj_shape
    if cam_h != proj_h:
        raise ValueError("rectified geometry needs equal row counts, got %d vs %d"
                         % (cam_h, proj_h))
    n_cam = cam_h * cam_w
    n_proj = proj_h * proj_w
    cam_rows = np.zeros((cam_h, n_cam))
    proj_rows = np.zeros((cam_h, n_proj))
    for row in range(cam_h):
        cam_rows[row, row * cam_w:(row + 1) * cam_w] = 1.0
        proj_rows[row, row * proj_w:(row + 1) * proj_w] = 1.0
    epi = ProbeMask(cam_rows, proj_rows, label="epipolar")
    non_epi = ProbeMask(cam_rows, 1.0 - proj_rows, label="non_epipolar")
    return epi, non_epi
