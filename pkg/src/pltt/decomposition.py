"""
Polar decomposition of Mueller matrices into depolarizer, retarder,
and diattenuator factors, M = M_depol @ M_ret @ M_diat, plus the
scalar polarizance / retardance / diattenuation summaries.

The diattenuator is built from the first row of M; the depolarizer
block is the symmetric factor recovered from the eigenvalues of
m' m'^T with a sign branch on det(m'); the retarder is what remains.
Singular diattenuators (|D| ~ 1, e.g. an ideal polarizer) switch every
inversion to a pseudoinverse and are flagged; recomposition is then
only approximate.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

SINGULAR_EPS = 1e-9
ORTHOGONALITY_EPS = 1e-9


@dataclass(frozen=True)
class DecompositionResult:
    m_depol: np.ndarray = field(repr=False)
    m_ret: np.ndarray = field(repr=False)
    m_diat: np.ndarray = field(repr=False)
    polarizance: float = 0.0
    retardance: float = 0.0
    diattenuation: float = 0.0
    singular_diattenuator: bool = False
    negative_det_branch: bool = False
    reorthogonalized: bool = False

    def recompose(self):
        return self.m_depol @ self.m_ret @ self.m_diat


def diattenuation(m):
    """Dependence of transmitted power on input polarization: first row of M."""
    m = np.asarray(m, dtype=float)
    if m[0, 0] <= 0:
        raise ValueError("diattenuation needs m00 > 0")
    return float(np.sqrt(m[0, 1] ** 2 + m[0, 2] ** 2 + m[0, 3] ** 2) / m[0, 0])


def polarizance(m):
    """Degree of polarization of the output for unpolarized input: first column."""
    m = np.asarray(m, dtype=float)
    if m[0, 0] <= 0:
        raise ValueError("polarizance needs m00 > 0")
    return float(np.sqrt(m[1, 0] ** 2 + m[2, 0] ** 2 + m[3, 0] ** 2) / m[0, 0])


def _retardance_of(m_ret):
    arg = float(np.trace(m_ret)) / 2.0 - 1.0
    if abs(arg) > 1.0 + 1e-9:
        logger.warning("retardance trace argument %.6g clamped to [-1, 1]", arg)
    return float(np.arccos(np.clip(arg, -1.0, 1.0)))


def retardance(decomp):
    """
    Rotation angle of the retarder factor, in [0, pi].

    arccos(tr(M_ret)/2 - 1), with the argument clamped to [-1, 1];
    clamping beyond 1e-9 is logged.
    """
    return _retardance_of(decomp.m_ret)


def _nearest_rotation(block):
    u, _, vt = np.linalg.svd(block)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return rot


def polar_decompose(m):
    """
    Factor a Mueller matrix into depolarizer, retarder, diattenuator.

    Returns a DecompositionResult whose factors recompose the input
    (elementwise ~1e-8 for non-singular passive inputs). Flags record
    the singular-diattenuator fallback, the negative-determinant
    branch of the depolarizer block, and any re-orthogonalization of
    the retarder block.

    Raises
    ------
    ValueError
        If m00 <= 0.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise ValueError("expected a 4x4 matrix, got %r" % (m.shape,))
    m00 = m[0, 0]
    if m00 <= 0:
        raise ValueError("polar decomposition needs m00 > 0")

    d_vec = m[0, 1:] / m00
    d_mag = float(np.linalg.norm(d_vec))
    singular = d_mag >= 1.0 - SINGULAR_EPS

    if d_mag > 1e-14:
        d_hat = d_vec / d_mag
        root = np.sqrt(max(0.0, 1.0 - min(d_mag, 1.0) ** 2))
        m_d_block = root * np.eye(3) + (1.0 - root) * np.outer(d_hat, d_hat)
    else:
        m_d_block = np.eye(3)
    m_diat = np.empty((4, 4))
    m_diat[0, 0] = 1.0
    m_diat[0, 1:] = d_vec
    m_diat[1:, 0] = d_vec
    m_diat[1:, 1:] = m_d_block
    m_diat *= m00

    inv_diat = np.linalg.pinv(m_diat) if singular else np.linalg.inv(m_diat)
    m_prime = m @ inv_diat

    sub = m_prime[1:, 1:]
    gram = sub @ sub.T
    eigvals = np.linalg.eigvalsh(gram)
    roots = np.sqrt(np.clip(eigvals, 0.0, None))[::-1]   # descending
    s1, s2, s3 = roots
    det_sub = np.linalg.det(sub)
    negative_branch = det_sub < 0
    sign = -1.0 if negative_branch else 1.0
    bracket = gram + (s1 * s2 + s2 * s3 + s3 * s1) * np.eye(3)
    target = (s1 + s2 + s3) * gram + (s1 * s2 * s3) * np.eye(3)
    bracket_cond = np.linalg.cond(bracket)
    if singular or not np.isfinite(bracket_cond) or bracket_cond > 1e12:
        depol_block = sign * (np.linalg.pinv(bracket) @ target)
    else:
        depol_block = sign * np.linalg.solve(bracket, target)

    m_depol = np.eye(4)
    m_depol[1:, 0] = m_prime[1:, 0]
    m_depol[1:, 1:] = depol_block

    depol_cond = np.linalg.cond(m_depol)
    if singular or not np.isfinite(depol_cond) or depol_cond > 1e12:
        m_ret = np.linalg.pinv(m_depol) @ m_prime
    else:
        m_ret = np.linalg.solve(m_depol, m_prime)

    reorthogonalized = False
    block = m_ret[1:, 1:]
    defect = np.abs(block @ block.T - np.eye(3)).max()
    if defect > ORTHOGONALITY_EPS:
        block = _nearest_rotation(block)
        m_ret = np.eye(4)
        m_ret[1:, 1:] = block
        reorthogonalized = True

    return DecompositionResult(
        m_depol=m_depol,
        m_ret=m_ret,
        m_diat=m_diat,
        polarizance=polarizance(m),
        retardance=_retardance_of(m_ret),
        diattenuation=diattenuation(m),
        singular_diattenuator=singular,
        negative_det_branch=bool(negative_branch),
        reorthogonalized=reorthogonalized,
    )


@dataclass(frozen=True)
class TensorDecomposition:
    """Per-(pixel, bin) scalar maps; NaN marks blocks below the floor."""

    polarizance: np.ndarray = field(repr=False)
    retardance: np.ndarray = field(repr=False)
    diattenuation: np.ndarray = field(repr=False)
    m_depol: np.ndarray = field(repr=False)
    m_ret: np.ndarray = field(repr=False)
    m_diat: np.ndarray = field(repr=False)
    null_mask: np.ndarray = field(repr=False)
    n_null: int = 0


def decompose_tensor(tensor, floor_frac=1e-6):
    """
    Polar-decompose every polarimetric block of a transport tensor.

    Blocks whose m00 falls below floor_frac times the tensor's largest
    m00 are left out (NaN in every map) and counted in ``n_null``;
    the decomposition is meaningless on dark pixels.
    """
    data = tensor.data
    m00 = data[:, :, 0, 0, :]
    floor = floor_frac * max(m00.max(), 0.0)
    shape = m00.shape
    maps = {name: np.full(shape, np.nan) for name in ("p", "r", "d")}
    factors = {name: np.full(shape + (4, 4), np.nan) for name in ("depol", "ret", "diat")}
    null_mask = np.ones(shape, dtype=bool)
    for s in range(shape[0]):
        for x in range(shape[1]):
            for t in range(shape[2]):
                if not m00[s, x, t] > floor or m00[s, x, t] <= 0:
                    continue
                res = polar_decompose(data[s, x, :, :, t])
                maps["p"][s, x, t] = res.polarizance
                maps["r"][s, x, t] = res.retardance
                maps["d"][s, x, t] = res.diattenuation
                factors["depol"][s, x, t] = res.m_depol
                factors["ret"][s, x, t] = res.m_ret
                factors["diat"][s, x, t] = res.m_diat
                null_mask[s, x, t] = False
    return TensorDecomposition(
        polarizance=maps["p"],
        retardance=maps["r"],
        diattenuation=maps["d"],
        m_depol=factors["depol"],
        m_ret=factors["ret"],
        m_diat=factors["diat"],
        null_mask=null_mask,
        n_null=int(null_mask.sum()),
    )
