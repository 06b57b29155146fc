"""Channel-major value grids and the statistics/resampling ops defined on them.

A grid is a (channels, height, width) array of float64 values. Latents and
decoded images share the same representation; only their sizes differ. All
ops are pure: inputs are never mutated and every constructor freezes its
buffer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

# floor applied to the content std inside adain; style std is used as-is
STD_FLOOR = 1e-5

INTERP_MODES = ("nearest", "bilinear")


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class LatentGrid:
    """Immutable (C, H, W) grid of real values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ShapeError(f"grid must be (C, H, W) with positive dims, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ShapeError("grid values must be finite")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "LatentGrid":
        return cls(np.zeros((channels, height, width)))


@dataclass(frozen=True)
class RegionMask:
    """Immutable (H, W) mask with values in [0, 1]. Binary in practice;
    soft values are allowed at region edges."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ShapeError(f"mask must be (H, W) with positive dims, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ShapeError("mask values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ShapeError("mask values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def complement(self) -> "RegionMask":
        return RegionMask(1.0 - self.data)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and population std of a grid."""

    mean: np.ndarray  # (C,)
    std: np.ndarray   # (C,)


def channel_stats(g: LatentGrid) -> ChannelStats:
    """Mean and population std over the full spatial extent of each channel."""
    flat = g.data.reshape(g.channels, -1)
    return ChannelStats(mean=_frozen(flat.mean(axis=1)), std=_frozen(flat.std(axis=1)))


def adain(content: LatentGrid, style: LatentGrid) -> LatentGrid:
    """Renormalize each content channel to the style channel's mean/std.

    Statistics are taken over each grid's whole spatial extent. The content
    std is floored at STD_FLOOR so constant channels map to the style mean
    instead of dividing by zero; the style std is used as-is. Spatial sizes
    of the two grids may differ, channel counts may not.
    """
    if content.channels != style.channels:
        raise ShapeError(
            f"channel mismatch: content has {content.channels}, style has {style.channels}"
        )
    cs = channel_stats(content)
    ss = channel_stats(style)
    denom = np.maximum(cs.std, STD_FLOOR)[:, None, None]
    normalized = (content.data - cs.mean[:, None, None]) / denom
    return LatentGrid(normalized * ss.std[:, None, None] + ss.mean[:, None, None])


def masked_blend(a: LatentGrid, b: LatentGrid, mask: RegionMask) -> LatentGrid:
    """Cellwise a*m + b*(1-m) with the mask broadcast over channels."""
    if a.shape != b.shape:
        raise ShapeError(f"grid shapes differ: {a.shape} vs {b.shape}")
    if (mask.height, mask.width) != (a.height, a.width):
        raise ShapeError(
            f"mask {mask.data.shape} does not match grid spatial dims {(a.height, a.width)}"
        )
    m = mask.data[None, :, :]
    return LatentGrid(a.data * m + b.data * (1.0 - m))


def _sample_nearest(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    c, h, w = data.shape
    ix = np.rint(xs).astype(np.int64)
    iy = np.rint(ys).astype(np.int64)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros((c,) + xs.shape)
    if valid.any():
        out[:, valid] = data[:, iy[valid], ix[valid]]
    return out


def _sample_bilinear(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    c, h, w = data.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    out = np.zeros((c,) + xs.shape)
    # out-of-bounds corners contribute 0, so edge samples fade toward 0
    for dx, dy, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        cx = x0 + dx
        cy = y0 + dy
        valid = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        if valid.any():
            out[:, valid] += data[:, cy[valid], cx[valid]] * wgt[valid]
    return out


def sample_at(g: LatentGrid, xs: np.ndarray, ys: np.ndarray, mode: str) -> np.ndarray:
    """Sample grid values at fractional (x, y) positions; outside reads fill 0."""
    if mode == "nearest":
        return _sample_nearest(g.data, np.asarray(xs, float), np.asarray(ys, float))
    if mode == "bilinear":
        return _sample_bilinear(g.data, np.asarray(xs, float), np.asarray(ys, float))
    raise ShapeError(f"unknown interpolation mode {mode!r}, expected one of {INTERP_MODES}")


def rotate_resample(
    g: LatentGrid,
    angle: float,
    center: tuple[float, float] | None = None,
    mode: str = "bilinear",
) -> LatentGrid:
    """Rotate grid content by `angle` radians about `center` (x, y).

    A positive angle turns content from the +x axis toward the +y (row)
    axis. Each output cell pulls from the inverse-rotated source position;
    reads outside the grid fill 0. Default center is the grid middle,
    ((W-1)/2, (H-1)/2), so a square grid rotated by pi/2 lands exactly on
    the lattice.
    """
    h, w = g.height, g.width
    cx, cy = ((w - 1) / 2.0, (h - 1) / 2.0) if center is None else center
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs - cx
    dy = ys - cy
    cos_a = np.cos(-angle)
    sin_a = np.sin(-angle)
    src_x = cx + cos_a * dx - sin_a * dy
    src_y = cy + sin_a * dx + cos_a * dy
    return LatentGrid(sample_at(g, src_x, src_y, mode))


def _quad_array(corners) -> np.ndarray:
    quad = np.asarray(corners, dtype=np.float64)
    if quad.shape != (4, 2):
        raise ShapeError(f"quad must be 4 (x, y) corners, got shape {quad.shape}")
    return quad


def _quad_point(quad: np.ndarray, us: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map quad parameters (u, v) in [0,1]^2 to plane points by corner blending."""
    a, b, c, d = quad
    w00 = (1 - us) * (1 - vs)
    w10 = us * (1 - vs)
    w11 = us * vs
    w01 = (1 - us) * vs
    px = w00 * a[0] + w10 * b[0] + w11 * c[0] + w01 * d[0]
    py = w00 * a[1] + w10 * b[1] + w11 * c[1] + w01 * d[1]
    return px, py


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _quad_params(quad: np.ndarray, px: np.ndarray, py: np.ndarray, eps: float = 1e-9):
    """Invert the corner-blend map: plane points -> (u, v, inside).

    Solves the quadratic that makes (p - A - v*F) parallel to (E + v*G)
    where E, F span the quad edges at A and G is the non-affine residual.
    For parallelograms G vanishes and the solve is linear.
    """
    a, b, c, d = quad
    e = b - a          # u direction at v=0
    f = d - a          # v direction at u=0
    gvec = a - b + c - d
    qx = px - a[0]
    qy = py - a[1]

    # cross(q - vF, E + vG) = cross(q,E) + v*(cross(q,G) - cross(F,E)) - v^2*cross(F,G)
    scale = max(np.abs(quad).max(), 1.0)
    k2 = -_cross(f[0], f[1], gvec[0], gvec[1])
    k1 = _cross(qx, qy, gvec[0], gvec[1]) - _cross(f[0], f[1], e[0], e[1])
    k0 = _cross(qx, qy, e[0], e[1])

    if abs(k2) < eps * scale * scale:
        denom = np.where(np.abs(k1) < eps * scale * scale, np.nan, k1)
        v = -k0 / denom
    else:
        disc = k1 * k1 - 4.0 * k2 * k0
        root = np.sqrt(np.maximum(disc, 0.0))
        v1 = (-k1 + root) / (2.0 * k2)
        v2 = (-k1 - root) / (2.0 * k2)
        in1 = (v1 >= -eps) & (v1 <= 1 + eps)
        v = np.where(in1, v1, v2)
        v = np.where(disc < -eps, np.nan, v)

    dirx = e[0] + v * gvec[0]
    diry = e[1] + v * gvec[1]
    norm2 = dirx * dirx + diry * diry
    norm2 = np.where(norm2 < eps * scale * scale, np.nan, norm2)
    u = ((qx - v * f[0]) * dirx + (qy - v * f[1]) * diry) / norm2

    tol = 1e-9
    inside = (
        np.isfinite(u) & np.isfinite(v)
        & (u >= -tol) & (u <= 1 + tol)
        & (v >= -tol) & (v <= 1 + tol)
    )
    return u, v, inside


def extract_region(
    g: LatentGrid, corners, out_h: int, out_w: int, mode: str = "bilinear"
) -> LatentGrid:
    """Resample the quad spanned by `corners` (UL, UR, LR, LL) into an
    axis-aligned (C, out_h, out_w) grid."""
    quad = _quad_array(corners)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be positive, got {(out_h, out_w)}")
    js, is_ = np.meshgrid(np.arange(out_w), np.arange(out_h))
    us = (js + 0.5) / out_w
    vs = (is_ + 0.5) / out_h
    px, py = _quad_point(quad, us, vs)
    return LatentGrid(sample_at(g, px, py, mode))


def paste_region(
    dst: LatentGrid, src: LatentGrid, corners, mode: str = "bilinear"
) -> LatentGrid:
    """Write `src` into the quad area of `dst`; cells outside the quad keep
    their dst values. Returns a new grid."""
    out, _ = paste_region_with_mask(dst, src, corners, mode)
    return out


def paste_region_with_mask(
    dst: LatentGrid, src: LatentGrid, corners, mode: str = "bilinear"
) -> tuple[LatentGrid, np.ndarray]:
    """paste_region plus the boolean (H, W) mask of cells that were written."""
    quad = _quad_array(corners)
    if dst.channels != src.channels:
        raise ShapeError(
            f"channel mismatch: dst has {dst.channels}, src has {src.channels}"
        )
    h, w = dst.height, dst.width
    x0 = int(np.clip(np.floor(quad[:, 0].min()), 0, w))
    x1 = int(np.clip(np.ceil(quad[:, 0].max()) + 1, 0, w))
    y0 = int(np.clip(np.floor(quad[:, 1].min()), 0, h))
    y1 = int(np.clip(np.ceil(quad[:, 1].max()) + 1, 0, h))
    written = np.zeros((h, w), dtype=bool)
    if x0 >= x1 or y0 >= y1:
        return LatentGrid(dst.data), written

    js, is_ = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    u, v, inside = _quad_params(quad, js.astype(float), is_.astype(float))
    if not inside.any():
        return LatentGrid(dst.data), written

    sx = u[inside] * src.width - 0.5
    sy = v[inside] * src.height - 0.5
    values = sample_at(src, sx, sy, mode)

    out = dst.data.copy()
    iy = is_[inside]
    ix = js[inside]
    out[:, iy, ix] = values
    written[iy, ix] = True
    return LatentGrid(out), written
