"""Grid sampling, maximum-intensity projection and image files (NRRD, PGM)."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .expr import Expression
from .mesh import CONTAINMENT_TOL


class ImageSizeError(ValueError):
    pass


@dataclass
class ImageGrid:
    """Row-major image; ``values[j, i]`` is row ``j``, column ``i``."""

    values: np.ndarray
    world_window: Optional[tuple[tuple[float, float], tuple[float, float]]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("image values must be 2-D (height, width)")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def argmax(self) -> tuple[int, int]:
        """``(column, row)`` of the first maximal pixel."""
        j, i = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(i), int(j)


@dataclass(frozen=True)
class Camera:
    eye: tuple[float, float, float]
    look_at: tuple[float, float, float] = (1.0, 1.0, 1.0)
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov: float = 30.0
    width: int = 65
    height: int = 65
    near: float = 0.0
    far: float = 20.0

    def __post_init__(self):
        eye, at, up = (np.asarray(v, dtype=float) for v in (self.eye, self.look_at, self.up))
        if any(v.shape != (3,) for v in (eye, at, up)):
            raise ValueError("eye, look_at and up must be 3-vectors")
        view = at - eye
        if np.linalg.norm(view) == 0:
            raise ValueError("camera eye coincides with look_at")
        if np.linalg.norm(np.cross(view, up)) <= 1e-12 * np.linalg.norm(view) * np.linalg.norm(up):
            raise ValueError("camera up vector is parallel to the view direction")
        if not 0 < self.fov < 180:
            raise ValueError(f"fov must be in (0, 180) degrees, got {self.fov}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image resolution must be positive")
        if not self.near < self.far:
            raise ValueError("near must be smaller than far")

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        eye, at, up = (np.asarray(v, dtype=float) for v in (self.eye, self.look_at, self.up))
        forward = at - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, up)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, forward)
        return forward, right, true_up

    def ray_directions(self) -> np.ndarray:
        """Unit directions through pixel centers, ``(height, width, 3)``; row 0 is the top."""
        forward, right, up = self.frame()
        half = math.tan(math.radians(self.fov) / 2)
        aspect = self.width / self.height
        a = (np.arange(self.width) + 0.5) / self.width * 2
        b = (np.arange(self.height) + 0.5) / self.height * 2
        u = (a - 1.0) * half * aspect
        v = (1.0 - b) * half
        d = forward + u[None, :, None] * right + v[:, None, None] * up
        return d / np.linalg.norm(d, axis=2, keepdims=True)


@dataclass(frozen=True)
class RenderConfig:
    step: float = 0.01
    clip_sphere: Optional[tuple[tuple[float, float, float], float]] = None
    background: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"ray step must be positive, got {self.step}")
        if self.clip_sphere is not None and not self.clip_sphere[1] > 0:
            raise ValueError("clip sphere radius must be positive")


@dataclass(frozen=True)
class AnalyticField:
    """An expression restricted to an axis-aligned box; renders like an FE field."""

    expr: Expression
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    clamp_min: Optional[float] = field(default=None)

    @property
    def dim(self) -> int:
        return self.expr.dim

    @property
    def bbox(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def probe(self, points, fill: float = np.nan):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = self.bbox
        tol = CONTAINMENT_TOL * max(1.0, float(np.max(np.abs(hi))))
        mask = np.all((points >= lo - tol) & (points <= hi + tol), axis=1)
        out = np.full(len(points), fill)
        if mask.any():
            vals = self.expr(points[mask])
            if self.clamp_min is not None:
                vals = np.maximum(vals, self.clamp_min)
            out[mask] = vals
        return out, mask


def _bbox(field) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(field, "space"):
        return field.space.mesh.bbox
    return field.bbox


def sample2d(field, resx: int, resy: int,
             window: Optional[Sequence[Sequence[float]]] = None,
             background: float = 0.0) -> ImageGrid:
    """Sample a 2-D field at cell-centred pixel positions of ``window = ((x0, y0), (x1, y1))``.

    Row ``j`` holds ``y = y0 + (j + 0.5) / resy * (y1 - y0)``; pixels outside the
    mesh take ``background``.
    """
    if field.dim != 2:
        raise ValueError("sample2d needs a 2-D field")
    if resx < 1 or resy < 1:
        raise ValueError("resolution must be at least 1")
    if window is None:
        lo, hi = _bbox(field)
        window = (tuple(lo), tuple(hi))
    (x0, y0), (x1, y1) = window
    xs = x0 + (np.arange(resx) + 0.5) / resx * (x1 - x0)
    ys = y0 + (np.arange(resy) + 0.5) / resy * (y1 - y0)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vals, _ = field.probe(np.column_stack([X.ravel(), Y.ravel()]), fill=background)
    return ImageGrid(vals.reshape(resy, resx), ((x0, y0), (x1, y1)))


def _march_rows(field, camera: Camera, config: RenderConfig, dirs: np.ndarray) -> np.ndarray:
    """MIP for a block of rays ``(n, 3)``."""
    eye = np.asarray(camera.eye, dtype=float)
    n = len(dirs)
    out = np.full(n, config.background, dtype=float)
    nsteps = int(math.floor((camera.far - camera.near) / config.step))

    # restrict marching to the samples that can fall inside the bounding box;
    # every other sample would be skipped as outside anyway
    lo, hi = _bbox(field)
    pad = 1e-9 * max(1.0, float(np.max(np.abs(hi))))
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        ta = (lo - pad - eye) * inv
        tb = (hi + pad - eye) * inv
    tmin = np.nanmax(np.minimum(ta, tb), axis=1)
    tmax = np.nanmin(np.maximum(ta, tb), axis=1)
    s0 = np.maximum(np.ceil((tmin - camera.near) / config.step), 0)
    s1 = np.minimum(np.floor((tmax - camera.near) / config.step), nsteps)
    hit = (s1 >= s0) & np.isfinite(s0) & np.isfinite(s1)
    if not hit.any():
        return out
    rays = np.flatnonzero(hit)
    counts = (s1[hit] - s0[hit] + 1).astype(np.int64)
    ray_of = np.repeat(rays, counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    s = np.repeat(s0[hit], counts) + offsets
    t = camera.near + s * config.step
    pos = eye + t[:, None] * dirs[ray_of]

    vals, mask = field.probe(pos)
    if config.clip_sphere is not None:
        center, radius = config.clip_sphere
        mask &= np.linalg.norm(pos - np.asarray(center, dtype=float), axis=1) < radius
    np.maximum.at(out, ray_of[mask], vals[mask])
    return out


def mip_render(field, camera: Camera, config: RenderConfig = RenderConfig(),
               threads: int = 1) -> ImageGrid:
    """Maximum-intensity projection of a 3-D field.

    Each pixel marches ``pos = eye + t * dir`` for ``t = near, near + step, ...,
    <= far`` and keeps the largest value seen at positions inside the field (and
    inside ``config.clip_sphere`` when one is set). Rows are independent, so
    ``threads > 1`` gives the same image as serial rendering.
    """
    if field.dim != 3:
        raise ValueError("mip_render needs a 3-D field")
    dirs = camera.ray_directions()
    h, w, _ = dirs.shape
    flat = dirs.reshape(-1, 3)
    # ~64 rows of work per block keeps the probe arrays modest
    block = max(1, 64 * 1024 // max(w, 1))
    blocks = [flat[i : i + block] for i in range(0, len(flat), block)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda d: _march_rows(field, camera, config, d), blocks))
    else:
        parts = [_march_rows(field, camera, config, d) for d in blocks]
    return ImageGrid(np.concatenate(parts).reshape(h, w))


def diff_image(a: ImageGrid, b: ImageGrid) -> ImageGrid:
    if a.values.shape != b.values.shape:
        raise ImageSizeError(f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    return ImageGrid(np.abs(a.values - b.values), a.world_window)


def rotation_asymmetry(image: ImageGrid) -> float:
    """Largest pixel change under a 90 degree rotation about the image centre."""
    v = image.values
    if v.shape[0] != v.shape[1]:
        raise ImageSizeError("rotation symmetry needs a square image")
    return float(np.max(np.abs(v - np.rot90(v))))


# -- files -------------------------------------------------------------------

def _check_finite(grid: ImageGrid):
    if not np.all(np.isfinite(grid.values)):
        raise ValueError("image contains non-finite values")


def write_nrrd(grid: ImageGrid, path) -> None:
    """Attached-header NRRD0004 with raw little-endian doubles, fastest axis = width."""
    _check_finite(grid)
    header = (
        "NRRD0004\n"
        "type: double\n"
        "dimension: 2\n"
        f"sizes: {grid.width} {grid.height}\n"
        "endian: little\n"
        "encoding: raw\n"
        "\n"
    )
    payload = np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(payload)
    except OSError as err:
        raise OSError(f"cannot write NRRD file {path}: {err.strerror}") from err


def read_nrrd(path) -> ImageGrid:
    """Read the files :func:`write_nrrd` produces (2-D, double, raw)."""
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise OSError(f"cannot read NRRD file {path}: {err.strerror}") from err
    end = data.find(b"\n\n")
    if not data.startswith(b"NRRD") or end < 0:
        raise ValueError(f"{path}: not an NRRD file")
    fields = {}
    for line in data[:end].decode("ascii").splitlines()[1:]:
        if line.startswith("#") or ":" not in line:
            continue
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip().lstrip("=").strip()
    if fields.get("type") != "double" or fields.get("encoding") != "raw" or fields.get("dimension") != "2":
        raise ValueError(f"{path}: only 2-D raw double NRRD files are supported")
    width, height = (int(v) for v in fields["sizes"].split())
    dtype = "<f8" if fields.get("endian", "little") == "little" else ">f8"
    payload = data[end + 2:]
    if len(payload) != 8 * width * height:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {8 * width * height}")
    return ImageGrid(np.frombuffer(payload, dtype=dtype).astype(float).reshape(height, width))


def pgm_bytes(grid: ImageGrid) -> np.ndarray:
    """Min-max normalize to 0..255 (a constant image maps to all zeros)."""
    _check_finite(grid)
    v = grid.values
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.rint((v - lo) / (hi - lo) * 255).astype(np.uint8)


def write_pgm(grid: ImageGrid, path) -> None:
    """Binary (P5) 8-bit PGM, rows in stored order."""
    pixels = pgm_bytes(grid)
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii"))
            fh.write(pixels.tobytes())
    except OSError as err:
        raise OSError(f"cannot write PGM file {path}: {err.strerror}") from err
