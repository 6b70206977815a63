"""
Analytic desk-scale transport generation.

Scenes are small axis-aligned patch stacks with known Mueller blocks,
so every generated tensor has closed-form ground truth. A surface at
depth d contributes its material's Mueller matrix at the round-trip
time bin floor(2 d / c / bin_width); scripted multi-bounce chains
contribute the composed matrix of an ordered material list at an
explicit total path length. There is no occlusion: contributions that
land in the same bin sum.

Geometry modes:

- ``coaxial``: illumination and detection share an optical axis; the
  tensor holds the s' = s diagonal only.
- ``projector_camera``: rectified, orthographic, row-aligned; a single
  bounce couples projector pixel s' to the camera pixel s = s'
  (diagonal coupling), chains may couple arbitrary patches.

Scene files are JSON; angles are given in degrees there.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .polarization import compose, ideal_mirror, is_passive, retarder, rotator
from .tensor import TransportTensor

SPEED_OF_LIGHT = 299792458.0


# ---------------------------------------------------------------------------
# materials


def fresnel_mueller(eta, theta_i):
    """
    Mueller matrix of specular reflection off a smooth dielectric.

    Parameters
    ----------
    eta : float
        Relative refractive index, > 1.
    theta_i : float
        Incidence angle in radians, 0 <= theta_i < pi/2.

    Returns
    -------
    ndarray
        4x4 reflection Mueller matrix. The lower 2x2 block is negated
        (both s2 and s3 rows) so the perfect-reflector limit matches
        ``ideal_mirror()``.

    Notes
    -----
    At Brewster incidence arctan(eta) the p-reflectance vanishes and
    the matrix is a perfect diattenuator; at normal incidence both
    reflectances equal ((eta-1)/(eta+1))**2.
    """
    if not eta > 1.0:
        raise ValueError("relative refractive index must be > 1, got %r" % (eta,))
    if not 0.0 <= theta_i < np.pi / 2.0:
        raise ValueError("incidence angle must lie in [0, pi/2), got %r" % (theta_i,))
    ci = np.cos(theta_i)
    st = np.sin(theta_i) / eta
    ct = np.sqrt(1.0 - st * st)
    r_s = (ci - eta * ct) / (ci + eta * ct)
    r_p = (eta * ci - ct) / (eta * ci + ct)
    refl_s = r_s * r_s
    refl_p = r_p * r_p
    a = 0.5 * (refl_s + refl_p)
    b = 0.5 * (refl_s - refl_p)
    c = np.sqrt(refl_s * refl_p)
    return np.array([
        [a, b, 0.0, 0.0],
        [b, a, 0.0, 0.0],
        [0.0, 0.0, -c, 0.0],
        [0.0, 0.0, 0.0, -c],
    ])


def diffuse_depolarizer(albedo, residual_dop):
    """
    Depolarizing diffuse bounce: albedo * diag(1, r, r, r/2).

    ``residual_dop`` r is the fraction of linear polarization that
    survives; the circular residual decays twice as fast (a modeling
    knob, not a law).
    """
    if not 0.0 <= albedo <= 1.0:
        raise ValueError("albedo must lie in [0, 1], got %r" % (albedo,))
    if not 0.0 <= residual_dop <= 1.0:
        raise ValueError("residual_dop must lie in [0, 1], got %r" % (residual_dop,))
    r = residual_dop
    return albedo * np.diag([1.0, r, r, 0.5 * r])


def material_mueller(spec):
    """
    Mueller matrix of a material description dict.

    Kinds: diffuse_depolarizer(albedo, residual_dop),
    fresnel_dielectric(eta, incidence_deg), ideal_mirror,
    retarder_plate(retardance_deg, axis_deg), custom(matrix).
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("material must be a dict with a 'kind' field, got %r" % (spec,))
    kind = spec["kind"]
    if kind == "diffuse_depolarizer":
        return diffuse_depolarizer(_need(spec, "albedo"), _need(spec, "residual_dop"))
    if kind == "fresnel_dielectric":
        return fresnel_mueller(_need(spec, "eta"), np.deg2rad(_need(spec, "incidence_deg")))
    if kind == "ideal_mirror":
        return ideal_mirror()
    if kind == "retarder_plate":
        return retarder(np.deg2rad(_need(spec, "axis_deg")),
                        np.deg2rad(_need(spec, "retardance_deg")))
    if kind == "custom":
        m = np.asarray(_need(spec, "matrix"), dtype=float)
        if m.shape != (4, 4):
            raise ValueError("material field 'matrix' must be 4x4, got %r" % (m.shape,))
        return m
    raise ValueError("unknown material kind %r" % (kind,))


def _need(spec, key):
    if key not in spec:
        raise ValueError("material kind %r is missing field %r" % (spec.get("kind"), key))
    return spec[key]


# ---------------------------------------------------------------------------
# scene description


@dataclass(frozen=True)
class Surface:
    patch: tuple            # (row0, row1, col0, col1), half-open pixel rows/cols
    depth_m: float
    material: dict


@dataclass(frozen=True)
class BounceChain:
    materials: tuple        # ordered as the light meets them
    path_length_m: float    # total optical path for the time bin
    camera_patch: tuple
    projector_patch: tuple = None   # defaults to camera_patch


@dataclass(frozen=True)
class ScatterVolume:
    backscatter: dict       # material dict for the backscatter block
    strength: object        # fraction in [0,1], scalar or (H, W) map
    depth_m: float


@dataclass(frozen=True)
class SceneSpec:
    geometry_mode: str
    surfaces: tuple = ()
    chains: tuple = ()
    scatter_volume: ScatterVolume = None


def parse_scene(obj):
    """Validate a scene dict (parsed JSON) into a SceneSpec."""
    if not isinstance(obj, dict):
        raise ValueError("scene must be a JSON object")
    mode = obj.get("geometry_mode")
    if mode not in ("coaxial", "projector_camera"):
        raise ValueError("field 'geometry_mode' must be 'coaxial' or 'projector_camera', got %r"
                         % (mode,))
    surfaces = []
    for i, raw in enumerate(obj.get("surfaces", [])):
        patch = _parse_patch(raw, "surfaces[%d].patch" % i)
        depth = raw.get("depth_m")
        if not isinstance(depth, (int, float)) or depth < 0:
            raise ValueError("field 'surfaces[%d].depth_m' must be a number >= 0, got %r"
                             % (i, depth))
        material = raw.get("material")
        material_mueller(material)   # validates, result rebuilt later
        surfaces.append(Surface(patch, float(depth), material))
    chains = []
    for i, raw in enumerate(obj.get("chains", [])):
        mats = raw.get("materials")
        if not isinstance(mats, list) or not mats:
            raise ValueError("field 'chains[%d].materials' must be a nonempty list" % i)
        for mat in mats:
            material_mueller(mat)
        length = raw.get("path_length_m")
        if not isinstance(length, (int, float)) or length < 0:
            raise ValueError("field 'chains[%d].path_length_m' must be a number >= 0, got %r"
                             % (i, length))
        cam_patch = _parse_patch({"patch": raw.get("camera_patch")},
                                 "chains[%d].camera_patch" % i)
        proj_patch = None
        if raw.get("projector_patch") is not None:
            proj_patch = _parse_patch({"patch": raw.get("projector_patch")},
                                      "chains[%d].projector_patch" % i)
        chains.append(BounceChain(tuple(mats), float(length), cam_patch, proj_patch))
    volume = None
    if obj.get("scatter_volume") is not None:
        raw = obj["scatter_volume"]
        depth = raw.get("depth_m")
        if not isinstance(depth, (int, float)) or depth < 0:
            raise ValueError("field 'scatter_volume.depth_m' must be a number >= 0, got %r"
                             % (depth,))
        strength = raw.get("strength")
        strength_arr = np.asarray(strength, dtype=float)
        if np.any(strength_arr < 0.0) or np.any(strength_arr > 1.0):
            raise ValueError("field 'scatter_volume.strength' must lie in [0, 1]")
        backscatter = raw.get("backscatter")
        material_mueller(backscatter)
        volume = ScatterVolume(backscatter, strength, float(depth))
    return SceneSpec(mode, tuple(surfaces), tuple(chains), volume)


def load_scene(path):
    """Read and validate a JSON scene file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError("scene file is not valid JSON: %s" % exc) from exc
    return parse_scene(obj)


def _parse_patch(raw, name):
    patch = raw.get("patch")
    if (not isinstance(patch, (list, tuple)) or len(patch) != 4
            or not all(isinstance(v, int) for v in patch)):
        raise ValueError("field '%s' must be [row0, row1, col0, col1] integers, got %r"
                         % (name, patch))
    r0, r1, c0, c1 = patch
    if r0 < 0 or c0 < 0 or r1 <= r0 or c1 <= c0:
        raise ValueError("field '%s' must satisfy 0 <= row0 < row1, 0 <= col0 < col1" % name)
    return (r0, r1, c0, c1)


# ---------------------------------------------------------------------------
# tensor assembly


def _patch_pixels(patch, shape):
    r0, r1, c0, c1 = patch
    h, w = shape
    if r1 > h or c1 > w:
        raise ValueError("patch %r exceeds the %dx%d pixel grid" % (patch, h, w))
    rows = np.arange(r0, r1)
    cols = np.arange(c0, c1)
    return (rows[:, None] * w + cols[None, :]).ravel()


def _time_bin(path_length_m, bin_width, n_bins, what):
    t_bin = int(np.floor(path_length_m / SPEED_OF_LIGHT / bin_width))
    if t_bin >= n_bins:
        raise ValueError("%s needs time bin %d but the tensor has only %d bins"
                         % (what, t_bin, n_bins))
    return t_bin


def build_transport(scene, resolution, n_bins, time_bin_width):
    """
    Assemble the ground-truth transport tensor of a scene.

    Parameters
    ----------
    scene : SceneSpec
    resolution : (height, width)
        Camera grid; the projector grid matches it.
    n_bins : int
        Time bin count (1 for steady state with a wide bin).
    time_bin_width : float
        Seconds per bin.

    Deterministic; bit-identical across runs.
    """
    h, w = (int(resolution[0]), int(resolution[1]))
    n_pix = h * w
    coaxial = scene.geometry_mode == "coaxial"
    s_proj = 1 if coaxial else n_pix
    data = np.zeros((n_pix, s_proj, 4, 4, int(n_bins)))

    for i, surf in enumerate(scene.surfaces):
        block = material_mueller(surf.material)
        t_bin = _time_bin(2.0 * surf.depth_m, time_bin_width, n_bins,
                          "surface %d at depth %g m" % (i, surf.depth_m))
        pix = _patch_pixels(surf.patch, (h, w))
        if coaxial:
            data[pix, 0, :, :, t_bin] += block
        else:
            data[pix, pix, :, :, t_bin] += block

    for i, chain in enumerate(scene.chains):
        block = compose([material_mueller(m) for m in reversed(chain.materials)])
        t_bin = _time_bin(chain.path_length_m, time_bin_width, n_bins,
                          "chain %d of path length %g m" % (i, chain.path_length_m))
        cam_pix = _patch_pixels(chain.camera_patch, (h, w))
        if coaxial:
            if chain.projector_patch is not None:
                raise ValueError("chain %d: coaxial scenes cannot give a projector_patch" % i)
            data[cam_pix, 0, :, :, t_bin] += block
        else:
            proj_patch = chain.projector_patch or chain.camera_patch
            proj_pix = _patch_pixels(proj_patch, (h, w))
            for s in cam_pix:
                data[s, proj_pix, :, :, t_bin] += block

    if scene.scatter_volume is not None:
        vol = scene.scatter_volume
        block = material_mueller(vol.backscatter)
        t_bin = _time_bin(2.0 * vol.depth_m, time_bin_width, n_bins,
                          "scatter volume at depth %g m" % vol.depth_m)
        strength = np.asarray(vol.strength, dtype=float)
        if strength.ndim == 0:
            strength = np.full(n_pix, float(strength))
        elif strength.shape == (h, w):
            strength = strength.ravel()
        else:
            raise ValueError("scatter strength must be a scalar or a %dx%d map, got %r"
                             % (h, w, strength.shape))
        contribution = strength[:, None, None] * block
        if coaxial:
            data[:, 0, :, :, t_bin] += contribution
        else:
            idx = np.arange(n_pix)
            data[idx, idx, :, :, t_bin] += contribution

    return TransportTensor(data, (h, w), (h, w), float(time_bin_width),
                           coaxial=coaxial)


# ---------------------------------------------------------------------------
# synthetic training ensemble


@dataclass(frozen=True)
class SyntheticMuellerEnsemble:
    samples: np.ndarray = field(repr=False)   # (n, 4, 4)
    seed: int = 0
    weights: tuple = ()

    def __len__(self):
        return self.samples.shape[0]


_FAMILIES = ("fresnel", "fresnel_depolarized", "composed")


def generate_ensemble(seed, n, weights=(0.3, 0.35, 0.35)):
    """
    Draw n passive-valid Mueller matrices from mixed analytic families.

    Families: raw dielectric reflections (eta in [1.3, 2.5], incidence
    in [5, 85] degrees); convex mixes of a reflection with the ideal
    depolarizer of equal throughput; reflections sandwiched between a
    random retarder and rotator. Deterministic for a given seed, with
    per-sample RNG streams so generation order does not matter.
    """
    if n < 1:
        raise ValueError("ensemble size must be >= 1")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (3,) or np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("weights must be three nonnegative numbers")
    probs = weights / weights.sum()
    streams = np.random.SeedSequence(seed).spawn(n)
    samples = np.empty((n, 4, 4))
    for i, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        family = _FAMILIES[rng.choice(3, p=probs)]
        eta = rng.uniform(1.3, 2.5)
        theta_i = np.deg2rad(rng.uniform(5.0, 85.0))
        m = fresnel_mueller(eta, theta_i)
        if family == "fresnel_depolarized":
            lam = rng.uniform(0.1, 0.9)
            depol = np.diag([m[0, 0], 0.0, 0.0, 0.0])
            m = lam * m + (1.0 - lam) * depol
        elif family == "composed":
            before = rotator(rng.uniform(0.0, np.pi))
            after = retarder(rng.uniform(0.0, np.pi), rng.uniform(0.0, np.pi))
            m = compose([after, m, before])
        samples[i] = m
    ensemble = SyntheticMuellerEnsemble(samples, int(seed), tuple(float(p) for p in probs))
    bad = [i for i in range(n) if not is_passive(ensemble.samples[i], tol=1e-9)]
    if bad:
        raise RuntimeError("ensemble produced non-passive samples at indices %r" % bad[:5])
    return ensemble
