"""
Rotating-ellipsometry capture models and per-pixel Mueller recovery.

A capture k modulates the source with a linear polarizer at theta1 and
a quarter-wave plate at theta2, and the detection arm with a
quarter-wave plate at theta3 and a linear polarizer at theta4:

    I_k = [ L(theta4) Q(theta3) M Q(theta2) L(theta1) p ]_0,   p = (1,0,0,0)

With a polarizer-array sensor the detector polarizer is replaced by
four fixed on-sensor analyzers at 0/45/90/135 degrees, giving four
rows per capture (theta4 is ignored).

In coaxial geometry the source arm continues through the beamsplitter
in transmission and the galvo before the scene, and the return path
folds over the galvo and the beamsplitter in reflection before the
detection optics; both folds are absorbed into the effective source
and analyzer vectors, so reconstruction recovers the scene block
itself.

Every capture is linear in the 16 entries of M: stacking rows
kron(analyzer_row_k, source_stokes_k) gives the design matrix A with
I = A vec(M) (row-major vec). Reconstruction is least squares through
a truncated-SVD pseudoinverse, shared across pixels and time bins.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .polarization import (
    beamsplitter,
    galvo_mirror,
    linear_polarizer,
    quarter_wave_plate,
)
from .tensor import TransportTensor, probe

ANALYZER_ANGLES_DEG = (0.0, 45.0, 90.0, 135.0)
UNPOLARIZED = np.array([1.0, 0.0, 0.0, 0.0])
RANK_TOL = 1e-10


@dataclass(frozen=True)
class AngleSchedule:
    """
    K capture configurations of the four rotating elements.

    theta1..theta4 are arrays of K angles in radians for the source LP,
    source QWP, detector QWP, and detector LP. ``fixed`` flags the
    columns that do not rotate (metadata used by the angle learner).
    In polarizer_array mode theta4 is carried but ignored.
    """

    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray
    theta4: np.ndarray
    sensor_mode: str = "intensity"
    fixed: tuple = (True, False, False, True)

    def __post_init__(self):
        for name in ("theta1", "theta2", "theta3", "theta4"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ValueError("%s must be a 1D finite angle array" % name)
        k = self.theta1.shape[0]
        if k < 1:
            raise ValueError("a schedule needs at least one capture")
        for name in ("theta2", "theta3", "theta4"):
            if getattr(self, name).shape[0] != k:
                raise ValueError("angle columns must share the capture count K=%d" % k)
        if self.sensor_mode not in ("intensity", "polarizer_array"):
            raise ValueError("sensor_mode must be 'intensity' or 'polarizer_array', got %r"
                             % (self.sensor_mode,))
        object.__setattr__(self, "fixed", tuple(bool(b) for b in self.fixed))

    @property
    def n_captures(self):
        return self.theta1.shape[0]

    @property
    def n_rows(self):
        """Measurement rows: K, or 4K with the polarizer-array sensor."""
        factor = 4 if self.sensor_mode == "polarizer_array" else 1
        return factor * self.n_captures

    def with_angles(self, theta1=None, theta2=None, theta3=None, theta4=None):
        return AngleSchedule(
            self.theta1 if theta1 is None else theta1,
            self.theta2 if theta2 is None else theta2,
            self.theta3 if theta3 is None else theta3,
            self.theta4 if theta4 is None else theta4,
            self.sensor_mode, self.fixed)


def drr_schedule(k, sensor_mode="intensity"):
    """
    Classical dual-rotating-retarder schedule.

    Fixed polarizers at 0; the source QWP steps 5 degrees per capture
    and the detector QWP 25 degrees (1:5 ratio), k = 1..K mapping to
    5(k-1) and 25(k-1) degrees.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    idx = np.arange(k, dtype=float)
    return AngleSchedule(
        theta1=np.zeros(k),
        theta2=np.deg2rad(5.0 * idx),
        theta3=np.deg2rad(25.0 * idx),
        theta4=np.zeros(k),
        sensor_mode=sensor_mode,
        fixed=(True, False, False, True),
    )


def schedule_to_dict(schedule):
    """Schedule as a plain dict with angles in degrees (file form)."""
    return {
        "sensor_mode": schedule.sensor_mode,
        "theta1_deg": np.rad2deg(schedule.theta1).tolist(),
        "theta2_deg": np.rad2deg(schedule.theta2).tolist(),
        "theta3_deg": np.rad2deg(schedule.theta3).tolist(),
        "theta4_deg": np.rad2deg(schedule.theta4).tolist(),
        "fixed": list(schedule.fixed),
    }


def schedule_from_dict(obj):
    for key in ("theta1_deg", "theta2_deg", "theta3_deg", "theta4_deg"):
        if key not in obj:
            raise ValueError("schedule is missing field %r" % key)
    return AngleSchedule(
        theta1=np.deg2rad(obj["theta1_deg"]),
        theta2=np.deg2rad(obj["theta2_deg"]),
        theta3=np.deg2rad(obj["theta3_deg"]),
        theta4=np.deg2rad(obj["theta4_deg"]),
        sensor_mode=obj.get("sensor_mode", "intensity"),
        fixed=tuple(obj.get("fixed", (True, False, False, True))),
    )


def save_schedule(path, schedule):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schedule_to_dict(schedule), fh, indent=2, sort_keys=True)


def load_schedule(path):
    with open(path, "r", encoding="utf-8") as fh:
        return schedule_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# forward model


def _coaxial_arms(split=0.5):
    """
    Folded source/detection factors: (galvo @ B_t, B_r @ galvo).

    Light transmits through the splitter into the scene (fraction
    ``split``) and the returning beam reflects toward the detector
    (fraction ``1 - split``).
    """
    g = galvo_mirror()
    return g @ beamsplitter("transmit", split), beamsplitter("reflect", 1.0 - split) @ g


def source_vectors(schedule, coaxial=False, split=0.5):
    """Per-capture source Stokes vectors c_k, shape (K, 4)."""
    k = schedule.n_captures
    out = np.empty((k, 4))
    into_scene = _coaxial_arms(split)[0] if coaxial else np.eye(4)
    for i in range(k):
        out[i] = into_scene @ quarter_wave_plate(schedule.theta2[i]) \
            @ linear_polarizer(schedule.theta1[i]) @ UNPOLARIZED
    return out


def analyzer_rows(schedule, coaxial=False, split=0.5):
    """
    Per-row analyzer vectors r, shape (n_rows, 4).

    Intensity mode has one row per capture; polarizer_array mode has
    four per capture (analyzers 0/45/90/135 degrees), capture-major.
    """
    k = schedule.n_captures
    out_of_scene = _coaxial_arms(split)[1] if coaxial else np.eye(4)
    if schedule.sensor_mode == "intensity":
        rows = np.empty((k, 4))
        for i in range(k):
            rows[i] = (linear_polarizer(schedule.theta4[i])
                       @ quarter_wave_plate(schedule.theta3[i]) @ out_of_scene)[0]
        return rows
    rows = np.empty((4 * k, 4))
    analyzers = [linear_polarizer(np.deg2rad(q)) for q in ANALYZER_ANGLES_DEG]
    for i in range(k):
        detector = quarter_wave_plate(schedule.theta3[i]) @ out_of_scene
        for j, analyzer in enumerate(analyzers):
            rows[4 * i + j] = (analyzer @ detector)[0]
    return rows


def forward_intensity(m, schedule, k, q=None, coaxial=False, split=0.5):
    """
    Noiseless intensity of capture k for scene block ``m``.

    In polarizer_array mode ``q`` selects the analyzer (0..3); in
    intensity mode it must be omitted.
    """
    if not 0 <= k < schedule.n_captures:
        raise ValueError("capture index %r out of range" % (k,))
    c = source_vectors(schedule, coaxial, split)[k]
    rows = analyzer_rows(schedule, coaxial, split)
    if schedule.sensor_mode == "polarizer_array":
        if q is None or not 0 <= q < 4:
            raise ValueError("polarizer_array mode needs an analyzer index q in 0..3")
        r = rows[4 * k + q]
    else:
        if q is not None:
            raise ValueError("intensity mode takes no analyzer index")
        r = rows[k]
    return float(r @ np.asarray(m, dtype=float) @ c)


@dataclass(frozen=True)
class DesignMatrix:
    """Linearized capture model: intensities = a @ vec(M), row-major vec."""

    a: np.ndarray = field(repr=False)
    rank: int
    cond: float

    @property
    def n_rows(self):
        return self.a.shape[0]


def design_matrix(schedule, coaxial=False, split=0.5):
    """
    Design matrix of a schedule: row (k[,q]) equals kron(r_k, c_k).

    Satisfies A @ vec(M) == stacked forward intensities exactly.
    """
    c = source_vectors(schedule, coaxial, split)
    r = analyzer_rows(schedule, coaxial, split)
    if schedule.sensor_mode == "polarizer_array":
        c = np.repeat(c, 4, axis=0)
    a = np.einsum("ki,kj->kij", r, c).reshape(r.shape[0], 16)
    svals = np.linalg.svd(a, compute_uv=False)
    tol = RANK_TOL * svals[0] if svals[0] > 0 else 0.0
    rank = int((svals > tol).sum())
    positive = svals[svals > tol]
    cond = float(positive[0] / positive[-1]) if positive.size else np.inf
    return DesignMatrix(a, rank, cond)


# ---------------------------------------------------------------------------
# capture


@dataclass(frozen=True)
class MeasurementSet:
    """
    Stack of modulated intensities with capture provenance.

    intensities has shape (n_rows, S_cam, S_proj, n_bins); coaxial
    geometry stores S_proj = 1 (the diagonal). Rows are capture-major
    (analyzer index fastest in polarizer_array mode).
    """

    intensities: np.ndarray = field(repr=False)
    schedule: AngleSchedule
    geometry_mode: str
    cam_shape: tuple
    proj_shape: tuple
    time_bin_width: float
    noise_sigma: float = 0.0
    seed: int = None
    provenance: str = ""

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=float)
        object.__setattr__(self, "intensities", arr)
        object.__setattr__(self, "cam_shape", tuple(int(v) for v in self.cam_shape))
        object.__setattr__(self, "proj_shape", tuple(int(v) for v in self.proj_shape))
        if arr.ndim != 4:
            raise ValueError("intensities must be 4D (rows, S_cam, S_proj, bins)")
        if arr.shape[0] != self.schedule.n_rows:
            raise ValueError("row count %d does not match the schedule's %d"
                             % (arr.shape[0], self.schedule.n_rows))
        if self.geometry_mode not in ("coaxial", "projector_camera"):
            raise ValueError("geometry_mode must be 'coaxial' or 'projector_camera'")


def capture(tensor, schedule, noise_sigma=0.0, seed=None, masks=None, split=0.5):
    """
    Simulate a full rotating-ellipsometry capture of a transport tensor.

    Projector-camera tensors are captured as an impulse scan: each
    projector pixel is lit alone, so the record holds one intensity per
    (row, camera pixel, projector pixel, bin). Coaxial tensors fold the
    beamsplitter and galvo into the optical chain and record the
    diagonal. Gaussian noise of the given sigma is added per record,
    deterministically for a given seed.

    masks, if given, probe the tensor before the scan (projector-camera
    geometry only).
    """
    geometry = "coaxial" if tensor.coaxial else "projector_camera"
    if masks is not None:
        if tensor.coaxial:
            raise ValueError("masks require projector_camera geometry")
        tensor = probe(tensor, masks)
    coax = tensor.coaxial
    c = source_vectors(schedule, coax, split)
    r = analyzer_rows(schedule, coax, split)
    if schedule.sensor_mode == "polarizer_array":
        c = np.repeat(c, 4, axis=0)
    vals = np.einsum("kp,sxpqt,kq->ksxt", r, tensor.data, c, optimize=True)
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        vals = vals + rng.normal(0.0, noise_sigma, size=vals.shape)
    return MeasurementSet(
        intensities=vals,
        schedule=schedule,
        geometry_mode=geometry,
        cam_shape=tensor.cam_shape,
        proj_shape=tensor.proj_shape,
        time_bin_width=tensor.time_bin_width,
        noise_sigma=float(noise_sigma),
        seed=seed,
        provenance="capture(split=%g)" % split,
    )


# ---------------------------------------------------------------------------
# reconstruction


@dataclass(frozen=True)
class ReconstructionResult:
    """
    Per-pixel(-bin) recovered Mueller blocks plus solver diagnostics.

    ``tensor`` mirrors the captured tensor's layout. ``residual_norms``
    has shape (S_cam, S_proj, n_bins).
    """

    tensor: TransportTensor
    rank: int
    cond: float
    underdetermined: bool
    residual_norms: np.ndarray = field(repr=False)


def pinv_truncated(a, tol_factor=RANK_TOL):
    """Moore-Penrose pseudoinverse with relative singular-value cutoff."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] <= 0:
        raise ValueError("design matrix is identically zero")
    keep = s > tol_factor * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T, int(keep.sum()), float(s[0] / s[keep][-1])


def reconstruct(meas, split=0.5):
    """
    Per-pixel least-squares Mueller recovery from a measurement set.

    Solves min ||I - A vec(M)|| for every (camera pixel, projector
    pixel, bin) with the shared design matrix of the recorded schedule.
    Full-rank designs give the unique solution; rank-deficient ones
    give the minimum-norm solution and set ``underdetermined``.
    """
    coax = meas.geometry_mode == "coaxial"
    design = design_matrix(meas.schedule, coaxial=coax, split=split)
    a = design.a
    if not np.any(a):
        raise ValueError("design matrix is identically zero")
    a_pinv, rank, cond = pinv_truncated(a)
    k_rows, s_cam, s_proj, n_bins = meas.intensities.shape
    stacked = meas.intensities.reshape(k_rows, -1)
    solution = a_pinv @ stacked
    blocks = solution.T.reshape(s_cam, s_proj, n_bins, 4, 4).transpose(0, 1, 3, 4, 2)
    residual = a @ solution - stacked
    residual_norms = np.linalg.norm(residual, axis=0).reshape(s_cam, s_proj, n_bins)
    tensor = TransportTensor(blocks, meas.cam_shape, meas.proj_shape,
                             meas.time_bin_width, coaxial=coax)
    return ReconstructionResult(tensor, rank, cond, rank < 16, residual_norms)
