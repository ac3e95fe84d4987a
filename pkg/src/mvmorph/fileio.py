"""Raster I/O: the MVR1 binary format, color-model lifts, and renderers.

MVR1 layout (little-endian): magic ``MVR1``, u16 version, u16 manifold code,
u32 n1, u32 n2, u32 dof, then n1*n2*dof float64 values, row-major with x2
varying faster than x1 and the point storage innermost.

Color lifts: ``gray`` -> Euclidean(1) in [0, 1]; ``rgb`` -> Euclidean(3);
``hsv`` -> Circle x Euclidean(2) with the hue as an angle of period 2 pi;
``cb`` -> Sphere(2) x Euclidean(1) with chromaticity rgb/|rgb| and
brightness |rgb| (black maps to chromaticity (1,1,1)/sqrt(3), brightness 0).
"""

import struct

import numpy as np

from .errors import InvalidArgumentError, RasterParseError
from .images import MvImage
from .manifolds import Circle, Euclidean, Product, Sphere, Spd, wrap_angle

MAGIC = b"MVR1"
VERSION = 1
_HEADER = struct.Struct("<4sHHIII")

CODE_EUCLIDEAN = 0
CODE_CIRCLE = 1
CODE_SPHERE = 2
CODE_SPD = 3
CODE_HSV = 4
CODE_CB = 5


def hsv_manifold():
    return Product([(Circle(), 1.0), (Euclidean(2), 1.0)])


def cb_manifold():
    return Product([(Sphere(2), 1.0), (Euclidean(1), 1.0)])


def manifold_code(m):
    if isinstance(m, Euclidean):
        return CODE_EUCLIDEAN
    if isinstance(m, Circle):
        return CODE_CIRCLE
    if isinstance(m, Sphere):
        return CODE_SPHERE
    if isinstance(m, Spd):
        return CODE_SPD
    if isinstance(m, Product):
        kinds = tuple(type(f).__name__ for f, _ in m.factors)
        if kinds == ("Circle", "Euclidean") and m.point_dim == 3:
            return CODE_HSV
        if kinds == ("Sphere", "Euclidean") and m.point_dim == 4:
            return CODE_CB
    raise InvalidArgumentError(f"no raster code for manifold {m!r}")


def manifold_from_code(code, dof):
    if code == CODE_EUCLIDEAN:
        return Euclidean(dof)
    if code == CODE_CIRCLE:
        if dof != 1:
            raise RasterParseError(f"circle rasters need dof 1, got {dof}")
        return Circle()
    if code == CODE_SPHERE:
        if dof < 2:
            raise RasterParseError(f"sphere rasters need dof >= 2, got {dof}")
        return Sphere(dof - 1)
    if code == CODE_SPD:
        n = int(round(np.sqrt(dof)))
        if n * n != dof:
            raise RasterParseError(f"spd rasters need a square dof, got {dof}")
        return Spd(n)
    if code == CODE_HSV:
        if dof != 3:
            raise RasterParseError(f"hsv rasters need dof 3, got {dof}")
        return hsv_manifold()
    if code == CODE_CB:
        if dof != 4:
            raise RasterParseError(f"cb rasters need dof 4, got {dof}")
        return cb_manifold()
    raise RasterParseError(f"unknown manifold code {code}")


def write_mvr(img, path):
    """Lossless dump of an MvImage."""
    n1, n2 = img.shape
    dof = img.manifold.point_dim
    header = _HEADER.pack(MAGIC, VERSION, manifold_code(img.manifold), n1, n2, dof)
    payload = np.ascontiguousarray(img.data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _validate_members(m, data):
    mask = m._member_mask(data, 1e-10)
    if not np.all(mask):
        i, j = np.argwhere(~mask)[0]
        raise RasterParseError(
            f"pixel ({i + 1}, {j + 1}) is not a valid point of {m!r}"
        )


def read_mvr(path):
    """Read and validate an MVR1 raster."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise RasterParseError(f"{path}: truncated header")
    magic, version, code, n1, n2, dof = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise RasterParseError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise RasterParseError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * n1 * n2 * dof
    if len(raw) != expected:
        raise RasterParseError(
            f"{path}: payload length {len(raw) - _HEADER.size} does not match header"
        )
    m = manifold_from_code(code, dof)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    data = data.reshape(n1, n2, dof)
    _validate_members(m, data)
    return MvImage(m, data)


# -- color conversions ---------------------------------------------------------


def rgb_to_hsv_points(rgb):
    """(..., 3) rgb in [0, 1] -> (hue angle, saturation, value)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    c = maxc - minc
    safe = np.where(c > 0, c, 1.0)
    hp = np.where(
        c == 0,
        0.0,
        np.where(
            maxc == r,
            np.mod((g - b) / safe, 6.0),
            np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
        ),
    )
    hue = wrap_angle(hp * (np.pi / 3.0))
    sat = np.where(maxc > 0, c / np.where(maxc > 0, maxc, 1.0), 0.0)
    return np.stack([hue, sat, maxc], axis=-1)


def hsv_points_to_rgb(pts):
    """Inverse of rgb_to_hsv_points."""
    hue = np.mod(pts[..., 0], 2.0 * np.pi)
    s = np.clip(pts[..., 1], 0.0, 1.0)
    v = np.clip(pts[..., 2], 0.0, 1.0)
    hp = hue / (np.pi / 3.0)
    c = v * s
    x = c * (1.0 - np.abs(np.mod(hp, 2.0) - 1.0))
    z = np.zeros_like(c)
    k = np.floor(hp).astype(int) % 6
    r = np.choose(k, [c, x, z, z, x, c])
    g = np.choose(k, [x, c, c, x, z, z])
    b = np.choose(k, [z, z, x, c, c, x])
    mm = v - c
    return np.stack([r + mm, g + mm, b + mm], axis=-1)


def rgb_to_cb_points(rgb):
    """(..., 3) rgb -> (chromaticity on S^2, brightness)."""
    nrm = np.linalg.norm(rgb, axis=-1)
    safe = np.where(nrm > 0, nrm, 1.0)
    chrom = rgb / safe[..., None]
    black = nrm == 0
    chrom = np.where(black[..., None], 1.0 / np.sqrt(3.0), chrom)
    return np.concatenate([chrom, nrm[..., None]], axis=-1)


def cb_points_to_rgb(pts):
    return np.clip(pts[..., :3] * pts[..., 3:4], 0.0, 1.0)


# -- ingest / export -----------------------------------------------------------

MODELS = ("gray", "rgb", "hsv", "cb", "spd", "mvr")


def _load_rgb01(path):
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def ingest(path, model):
    """Read an image file and lift it to the model's manifold."""
    if model not in MODELS:
        raise InvalidArgumentError(f"unknown model {model!r}; choose from {MODELS}")
    if model in ("spd", "mvr"):
        img = read_mvr(path)
        if model == "spd" and not isinstance(img.manifold, Spd):
            raise RasterParseError(f"{path}: not an SPD raster")
        return img
    rgb = _load_rgb01(path)
    if model == "gray":
        gray = rgb @ np.array([0.299, 0.587, 0.114])
        return MvImage(Euclidean(1), gray[..., None])
    if model == "rgb":
        return MvImage(Euclidean(3), rgb)
    if model == "hsv":
        return MvImage(hsv_manifold(), rgb_to_hsv_points(rgb))
    return MvImage(cb_manifold(), rgb_to_cb_points(rgb))


def to_rgb01(img):
    """Invert the color lift of an exportable image."""
    m = img.manifold
    code = manifold_code(m)
    if code == CODE_EUCLIDEAN and m.point_dim == 1:
        g = np.clip(img.data[..., 0], 0.0, 1.0)
        return np.stack([g, g, g], axis=-1)
    if code == CODE_EUCLIDEAN and m.point_dim == 3:
        return np.clip(img.data, 0.0, 1.0)
    if code == CODE_HSV:
        return np.clip(hsv_points_to_rgb(img.data), 0.0, 1.0)
    if code == CODE_CB:
        return cb_points_to_rgb(img.data)
    raise InvalidArgumentError(f"cannot render {m!r} to RGB; use mvr or glyph")


def write_png(img, path):
    from PIL import Image

    rgb = np.round(to_rgb01(img) * 255.0).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path)


def write_glyphs(img, path, scale=0.45):
    """Ellipse glyphs of an SPD image: the leading 2x2 block per pixel,
    colored by the orientation of its principal eigenvector."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.collections import EllipseCollection

    m = img.manifold
    if not isinstance(m, Spd):
        raise InvalidArgumentError("glyph rendering needs an SPD image")
    n1, n2 = img.shape
    n = m.n
    mats = img.data.reshape(n1, n2, n, n)[:, :, :2, :2]
    vals, vecs = np.linalg.eigh(mats.reshape(-1, 2, 2))
    vmax = vals[:, 1].max()
    widths = scale * 2.0 * vals[:, 1] / vmax
    heights = scale * 2.0 * np.maximum(vals[:, 0], 0.0) / vmax
    angles = np.degrees(np.arctan2(vecs[:, 1, 1], vecs[:, 0, 1]))
    hue = np.mod(np.radians(angles), np.pi) / np.pi

    jj, ii = np.meshgrid(np.arange(n2), np.arange(n1))
    offsets = np.stack([jj.ravel(), (n1 - 1 - ii).ravel()], axis=-1)
    fig, ax = plt.subplots(figsize=(max(n2 / 8, 2), max(n1 / 8, 2)))
    ec = EllipseCollection(
        widths,
        heights,
        angles,
        units="xy",
        offsets=offsets,
        transOffset=ax.transData,
    )
    ec.set_array(hue)
    ec.set_cmap("hsv")
    ec.set_clim(0.0, 1.0)
    ax.add_collection(ec)
    ax.set_xlim(-1, n2)
    ax.set_ylim(-1, n1)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def export_frames(images, out_dir, render):
    """Write one file per frame with zero-padded names; returns the paths."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    ext = "mvr" if render == "mvr" else "png"
    for k, img in enumerate(images):
        p = out / f"frame_{k:03d}.{ext}"
        if render == "mvr":
            write_mvr(img, p)
        elif render == "png":
            write_png(img, p)
        elif render == "glyph":
            write_glyphs(img, p)
        else:
            raise InvalidArgumentError(f"unknown render mode {render!r}")
        paths.append(p)
    return paths
