"""
Stokes-Mueller algebra and the polarizing elements of the capture models.

Conventions, fixed once and locked by tests:

- Stokes vectors are ``(s0, s1, s2, s3)``: intensity, 0/90 degree linear,
  +/-45 degree linear, circular. Positive ``s3`` is right-circular from
  the receiver's point of view.
- A frame rotation by ``theta`` acts on the ``(s1, s2)`` pair through the
  doubled angle: R(theta) = [[1,0,0,0],[0,c,-s,0],[0,s,c,0],[0,0,0,1]]
  with c = cos(2 theta), s = sin(2 theta).
- An element oriented at ``theta`` is ``R(theta) @ M0 @ R(-theta)``.
- The axis-aligned retarder leaves ``(s0, s1)`` alone and rotates the
  ``(s2, s3)`` pair by the retardance.
- Angles are radians everywhere inside the package; degrees appear only
  at user-facing boundaries (CLI flags, schedule files, scene files).
"""

from dataclasses import dataclass, field

import numpy as np


def rotation_mueller(theta):
    """
    Mueller matrix of a frame rotation by ``theta`` radians.

    Parameters
    ----------
    theta : float
        Rotation angle in radians.

    Returns
    -------
    ndarray
        4x4 rotation Mueller matrix.
    """
    c = np.cos(2.0 * theta)
    s = np.sin(2.0 * theta)
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c, -s, 0.0],
        [0.0, s, c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def rotation_mueller_deriv(theta):
    """Derivative of ``rotation_mueller`` with respect to ``theta``."""
    c = np.cos(2.0 * theta)
    s = np.sin(2.0 * theta)
    return np.array([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, -2.0 * s, -2.0 * c, 0.0],
        [0.0, 2.0 * c, -2.0 * s, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])


def rotate_element(m0, theta):
    """Orient an axis-aligned element matrix at angle ``theta``."""
    return rotation_mueller(theta) @ m0 @ rotation_mueller(-theta)


def linear_polarizer(theta=0.0):
    """
    Ideal linear polarizer with transmission axis at ``theta`` radians.

    Transmits half of unpolarized light and fully polarizes the output.
    """
    m0 = 0.5 * np.array([
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    if theta == 0.0:
        return m0
    return rotate_element(m0, theta)


def retarder(theta, delta):
    """
    Linear retarder with fast axis at ``theta`` and retardance ``delta``.

    Parameters
    ----------
    theta : float
        Fast-axis orientation, radians.
    delta : float
        Retardance, radians.

    Returns
    -------
    ndarray
        4x4 Mueller matrix.
    """
    cd = np.cos(delta)
    sd = np.sin(delta)
    m0 = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, cd, sd],
        [0.0, 0.0, -sd, cd],
    ])
    if theta == 0.0:
        return m0
    return rotate_element(m0, theta)


def quarter_wave_plate(theta=0.0):
    """Quarter-wave plate: retarder with retardance pi/2."""
    return retarder(theta, np.pi / 2.0)


def rotator(theta):
    """Optical rotator by ``theta`` radians."""
    return rotation_mueller(theta)


def ideal_mirror():
    """Ideal mirror: flips the diagonal linear and circular components."""
    return np.diag([1.0, 1.0, -1.0, -1.0])


def beamsplitter(mode="transmit", split=0.5):
    """
    Non-polarizing beamsplitter arm.

    ``transmit`` is a scaled identity, ``reflect`` a scaled mirror flip;
    ``split`` is the fraction of intensity sent into the arm.
    """
    if not 0.0 <= split <= 1.0:
        raise ValueError("split fraction must lie in [0, 1], got %r" % (split,))
    if mode == "transmit":
        return split * np.eye(4)
    if mode == "reflect":
        return split * np.diag([1.0, 1.0, -1.0, -1.0])
    raise ValueError("beamsplitter mode must be 'transmit' or 'reflect', got %r" % (mode,))


def galvo_mirror(orientation=0.0):
    """
    Scanning galvo mirror.

    Modeled as an ideal mirror for every scan orientation; pass a
    CustomMueller element to substitute a calibrated matrix.
    """
    del orientation
    return ideal_mirror()


# ---------------------------------------------------------------------------
# element descriptions


@dataclass(frozen=True)
class LinearPolarizer:
    theta: float = 0.0


@dataclass(frozen=True)
class QuarterWavePlate:
    theta: float = 0.0


@dataclass(frozen=True)
class Retarder:
    theta: float
    delta: float


@dataclass(frozen=True)
class Rotator:
    theta: float


@dataclass(frozen=True)
class IdealMirror:
    pass


@dataclass(frozen=True)
class NonPolarizingBeamsplitter:
    mode: str = "transmit"
    split: float = 0.5


@dataclass(frozen=True)
class GalvoMirror:
    orientation: float = 0.0


@dataclass(frozen=True)
class CustomMueller:
    m: np.ndarray = field(repr=False)


def mueller_of(element):
    """
    Mueller matrix of a polarizing element description.

    Angles must be finite; beamsplitter split fractions must lie in [0, 1].
    """
    if isinstance(element, LinearPolarizer):
        _check_finite_angle(element.theta)
        return linear_polarizer(element.theta)
    if isinstance(element, QuarterWavePlate):
        _check_finite_angle(element.theta)
        return quarter_wave_plate(element.theta)
    if isinstance(element, Retarder):
        _check_finite_angle(element.theta)
        _check_finite_angle(element.delta)
        return retarder(element.theta, element.delta)
    if isinstance(element, Rotator):
        _check_finite_angle(element.theta)
        return rotator(element.theta)
    if isinstance(element, IdealMirror):
        return ideal_mirror()
    if isinstance(element, NonPolarizingBeamsplitter):
        return beamsplitter(element.mode, element.split)
    if isinstance(element, GalvoMirror):
        return galvo_mirror(element.orientation)
    if isinstance(element, CustomMueller):
        m = np.asarray(element.m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError("custom Mueller matrix must be 4x4, got %r" % (m.shape,))
        return m.copy()
    raise TypeError("not a polarizing element: %r" % (element,))


def _check_finite_angle(value):
    if not np.isfinite(value):
        raise ValueError("angle must be finite, got %r" % (value,))


# ---------------------------------------------------------------------------
# algebra


def apply_mueller(m, s):
    """Apply Mueller matrix ``m`` to one Stokes vector or a batch of rows."""
    m = np.asarray(m, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.ndim == 1:
        return m @ s
    return s @ m.T


def compose(chain):
    """
    Matrix of an ordered chain of elements.

    The product is taken right to left: the last listed matrix is applied
    to the light first, so ``compose([m1, m2, m3]) == m1 @ m2 @ m3`` and
    listing matrices in writing order matches the optical-train notation.

    Raises
    ------
    ValueError
        If the chain is empty.
    """
    mats = [np.asarray(m, dtype=float) for m in chain]
    if not mats:
        raise ValueError("cannot compose an empty chain")
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


def reverse_pass(m):
    """
    Mueller matrix of a reciprocal element traversed in the reverse
    direction.

    When light folds back through the same physical element (e.g. a wave
    plate in front of a mirror), the return pass is not the forward matrix
    but ``D @ m.T @ D`` with ``D = diag(1, 1, -1, 1)``: the receiver-frame
    s2 axis flips with the propagation direction. A quarter-wave plate at
    +45 degrees bounded by a mirror therefore acts as a half-wave plate
    over the round trip, the classic circular-polarizer extinction.
    """
    d = np.diag([1.0, 1.0, -1.0, 1.0])
    return d @ np.asarray(m, dtype=float).T @ d


def degree_of_polarization(s):
    """
    Degree of polarization of a Stokes vector, in [0, 1].

    Accepts a single vector or an array whose last axis has length 4.
    Values overshooting 1 by at most 1e-9 are clamped to 1; larger
    overshoots are returned as-is so invalid states stay visible.

    Raises
    ------
    ValueError
        If any intensity component is <= 0.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s[..., 0] <= 0.0):
        raise ValueError("degree of polarization needs s0 > 0")
    dop = np.sqrt(s[..., 1] ** 2 + s[..., 2] ** 2 + s[..., 3] ** 2) / s[..., 0]
    dop = np.where((dop > 1.0) & (dop <= 1.0 + 1e-9), 1.0, dop)
    if dop.ndim == 0:
        return float(dop)
    return dop


def is_valid_stokes(s, tol=1e-9):
    """
    True when ``s`` could be physical light: s0 >= 0 and
    s1^2 + s2^2 + s3^2 <= s0^2 within a relative slack of ``tol``.

    The all-zero vector is valid (no light). Works on batches; all
    entries must pass.
    """
    s = np.asarray(s, dtype=float)
    s0 = s[..., 0]
    if np.any(s0 < 0.0):
        return False
    pol_sq = s[..., 1] ** 2 + s[..., 2] ** 2 + s[..., 3] ** 2
    return bool(np.all(pol_sq <= s0 * s0 * (1.0 + tol) + tol * np.finfo(float).tiny))


def is_passive(m, tol=1e-9):
    """
    Passive-validity predicate for a Mueller matrix.

    Checks m00 >= 0, m00 >= |mij| for all entries, and that the peak
    transmittance m00 * (1 + D) stays at or below 1, within ``tol``.
    Reconstructed matrices may fail this under noise; it is a check,
    not a constructor constraint.
    """
    m = np.asarray(m, dtype=float)
    m00 = m[..., 0, 0]
    if np.any(m00 < -tol):
        return False
    biggest = np.abs(m).max(axis=(-2, -1))
    if np.any(biggest > m00 + tol):
        return False
    gain = m00 + np.linalg.norm(m[..., 0, 1:], axis=-1)
    return bool(np.all(gain <= 1.0 + tol))


def random_physical_stokes(rng, n=1, radius=1.0):
    """
    Sample physical Stokes vectors uniformly from the Poincare ball.

    Unit intensity; polarized part drawn uniformly in the ball of the
    given radius (<= 1).
    """
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    out = np.empty((n, 4))
    out[:, 0] = 1.0
    out[:, 1:] = v * r[:, None]
    if n == 1:
        return out[0]
    return out
