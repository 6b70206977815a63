"""
PLTT v1 container, plus small grid/image writers for exports.

Layout of a PLTT v1 file:

- 16-byte magic ``PLTT-TENSOR-v001``
- 7 little-endian u32 dims: cam_w, cam_h, proj_w, proj_h, dim_p, dim_q, n_bins
- 1 byte coaxial flag (0/1; when 1 the stored projector axis has length 1
  and holds the s' = s diagonal)
- float64 little-endian payload, C order, axes (s, s', p, p', t)
- trailing UTF-8 JSON metadata: at least time_bin_width, channel_id,
  provenance, and a ``kind`` selecting the payload semantics

One container serves four kinds. Axis extents by kind (header dims in
the same seven slots):

- transport:    (S_cam, S_proj|1, 4, 4, n_bins)
- illumination: (1, S_proj, 1, 4, n_bins or 1)
- detected:     (S_cam, 1, 4, 1, n_bins)
- measurement:  (S_cam, S_proj|1, K', 1, n_bins) with the capture index
  in the first polarimetric slot; schedule and noise metadata ride in
  the JSON block.
"""

import json
import struct

import numpy as np

from .tensor import TransportTensor, IlluminationTensor, DetectedTensor

MAGIC = b"PLTT-TENSOR-v001"
_HEADER = struct.Struct("<7I")


def _pack(dims, coaxial, payload, meta):
    parts = [MAGIC, _HEADER.pack(*dims), struct.pack("<B", 1 if coaxial else 0)]
    parts.append(np.ascontiguousarray(payload, dtype="<f8").tobytes())
    parts.append(json.dumps(meta, sort_keys=True).encode("utf-8"))
    return b"".join(parts)


def write_pltt(path, obj, provenance=""):
    """Serialize a transport/illumination/detected/measurement object."""
    from .ellipsometry import MeasurementSet, schedule_to_dict

    if isinstance(obj, TransportTensor):
        dims = (obj.cam_shape[1], obj.cam_shape[0], obj.proj_shape[1], obj.proj_shape[0],
                4, 4, obj.n_bins)
        meta = {"kind": "transport", "time_bin_width": obj.time_bin_width,
                "channel_id": obj.channel_id, "provenance": provenance}
        blob = _pack(dims, obj.coaxial, obj.data, meta)
    elif isinstance(obj, IlluminationTensor):
        n_bins = obj.data.shape[2] if obj.has_time else 1
        dims = (1, 1, obj.proj_shape[1], obj.proj_shape[0], 1, 4, n_bins)
        payload = obj.data if obj.has_time else obj.data[:, :, None]
        payload = payload[None, :, None, :, :]
        meta = {"kind": "illumination", "time_bin_width": obj.time_bin_width,
                "channel_id": "mono", "provenance": provenance,
                "has_time": obj.has_time}
        blob = _pack(dims, False, payload, meta)
    elif isinstance(obj, DetectedTensor):
        dims = (obj.cam_shape[1], obj.cam_shape[0], 1, 1, 4, 1, obj.data.shape[2])
        payload = obj.data[:, None, :, None, :]
        meta = {"kind": "detected", "time_bin_width": obj.time_bin_width,
                "channel_id": "mono", "provenance": provenance}
        blob = _pack(dims, False, payload, meta)
    elif isinstance(obj, MeasurementSet):
        k_rows, s_cam, s_proj, n_bins = obj.intensities.shape
        dims = (obj.cam_shape[1], obj.cam_shape[0], obj.proj_shape[1], obj.proj_shape[0],
                k_rows, 1, n_bins)
        payload = obj.intensities.transpose(1, 2, 0, 3)[:, :, :, None, :]
        coaxial = obj.geometry_mode == "coaxial"
        meta = {"kind": "measurement", "time_bin_width": obj.time_bin_width,
                "channel_id": "mono", "provenance": provenance,
                "schedule": schedule_to_dict(obj.schedule),
                "geometry_mode": obj.geometry_mode,
                "noise_sigma": obj.noise_sigma, "seed": obj.seed}
        blob = _pack(dims, coaxial, payload, meta)
    else:
        raise TypeError("cannot serialize %r" % type(obj))
    with open(path, "wb") as fh:
        fh.write(blob)


def read_pltt(path):
    """Read a PLTT v1 file back into its in-memory object."""
    from .ellipsometry import MeasurementSet, schedule_from_dict

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:16] != MAGIC:
        raise ValueError("not a PLTT v1 file: bad magic")
    dims = _HEADER.unpack_from(blob, 16)
    coaxial = bool(blob[16 + _HEADER.size])
    offset = 16 + _HEADER.size + 1
    cam_w, cam_h, proj_w, proj_h, dim_p, dim_q, n_bins = dims
    s_cam = cam_w * cam_h
    s_proj = 1 if coaxial else proj_w * proj_h
    count = s_cam * s_proj * dim_p * dim_q * n_bins
    nbytes = count * 8
    payload = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    payload = payload.reshape(s_cam, s_proj, dim_p, dim_q, n_bins).copy()
    meta = json.loads(blob[offset + nbytes:].decode("utf-8"))
    kind = meta.get("kind", "transport")
    if kind == "transport":
        return TransportTensor(payload, (cam_h, cam_w), (proj_h, proj_w),
                               meta["time_bin_width"], meta.get("channel_id", "mono"),
                               coaxial)
    if kind == "illumination":
        data = payload[0, :, 0]
        if not meta.get("has_time", False):
            data = data[:, :, 0]
        return IlluminationTensor(data, (proj_h, proj_w), meta.get("time_bin_width"))
    if kind == "detected":
        return DetectedTensor(payload[:, 0, :, 0, :], (cam_h, cam_w), meta["time_bin_width"])
    if kind == "measurement":
        intensities = payload[:, :, :, 0, :].transpose(2, 0, 1, 3)
        return MeasurementSet(
            intensities=intensities,
            schedule=schedule_from_dict(meta["schedule"]),
            geometry_mode=meta["geometry_mode"],
            cam_shape=(cam_h, cam_w),
            proj_shape=(proj_h, proj_w),
            time_bin_width=meta["time_bin_width"],
            noise_sigma=meta["noise_sigma"],
            seed=meta["seed"],
            provenance=meta.get("provenance", ""),
        )
    raise ValueError("unknown PLTT payload kind %r" % kind)


def read_metadata(path):
    """Return just the trailing metadata block of a PLTT file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:16] != MAGIC:
        raise ValueError("not a PLTT v1 file: bad magic")
    dims = _HEADER.unpack_from(blob, 16)
    coaxial = bool(blob[16 + _HEADER.size])
    cam_w, cam_h, proj_w, proj_h, dim_p, dim_q, n_bins = dims
    s_proj = 1 if coaxial else proj_w * proj_h
    nbytes = cam_w * cam_h * s_proj * dim_p * dim_q * n_bins * 8
    return json.loads(blob[16 + _HEADER.size + 1 + nbytes:].decode("utf-8"))


# ---------------------------------------------------------------------------
# simple exports


def write_pgm(path, image, bit_depth=16):
    """
    Write a grayscale image as binary PGM (P5).

    The image is min/max normalized to the full range; pass the raw
    array and record the range in a sidecar for exact reproduction.
    NaNs map to 0.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("PGM export needs a 2D array, got %r" % (image.shape,))
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    maxval = (1 << bit_depth) - 1
    finite = np.isfinite(image)
    lo = image[finite].min() if finite.any() else 0.0
    hi = image[finite].max() if finite.any() else 0.0
    span = hi - lo if hi > lo else 1.0
    scaled = np.zeros_like(image)
    scaled[finite] = (image[finite] - lo) / span * maxval
    pix = np.round(scaled).astype(">u2" if bit_depth == 16 else "u1")
    header = ("P5\n%d %d\n%d\n" % (image.shape[1], image.shape[0], maxval)).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pix.tobytes())
    return {"min": float(lo), "max": float(hi), "bit_depth": bit_depth,
            "nan_count": int((~finite).sum())}


def write_csv_grid(path, grid, header=""):
    """Write a 2D array as CSV with full float precision."""
    grid = np.asarray(grid, dtype=float)
    np.savetxt(path, grid, delimiter=",", header=header, fmt="%.17g")
