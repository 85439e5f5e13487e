"""Height maps, footprint queries, local plane fits, and the slope-aware
parameter reduction.

Height-map file format (bit-exact, SI units):

    line 1:  HMAP v1
    line 2:  origin_x origin_y resolution rows cols
    then `rows` lines of `cols` space-separated heights, `nan` = missing

Grid cell (r, c) is centered at (origin_x + c*resolution,
origin_y + r*resolution): columns run along x, rows along y.

The pendulum-on-a-plane reduction: when the walking direction is aligned
with the steepest gradient of a locally planar terrain, the horizontal
dynamics reduce to the flat-ground pendulum with the same vertical CoM
offset, so the effective parameters keep omega = sqrt(g / h0) unchanged
and only the geometry (foot heights, CoM plane) tilts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, InvalidInputError, MapFormatError, NoDataError
from .lip import Foothold, LipParams, Vec2

DEFAULT_FOOTPRINT_RADIUS = 0.09  # half-width of the averaging square (m)


@dataclass(frozen=True)
class TerrainPlane:
    """Local planar terrain model z(x, y) relative to an anchor point:
    height = alpha*(x - ax) + beta*(y - ay) + h0_anchor."""

    alpha: float
    beta: float
    h0_anchor: float
    anchor: Vec2 = (0.0, 0.0)

    def __post_init__(self):
        for name in ("alpha", "beta", "h0_anchor"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")

    def height_at(self, xy) -> float:
        return (
            self.alpha * (xy[0] - self.anchor[0])
            + self.beta * (xy[1] - self.anchor[1])
            + self.h0_anchor
        )

    @property
    def slope_angle(self) -> float:
        """Steepest-gradient inclination in radians."""
        return math.atan(math.hypot(self.alpha, self.beta))


FLAT_PLANE = TerrainPlane(alpha=0.0, beta=0.0, h0_anchor=0.0)


class HeightMap:
    """Immutable 2.5D grid of terrain heights with optional missing cells."""

    def __init__(self, origin: Vec2, resolution: float, grid):
        if resolution <= 0 or not math.isfinite(resolution):
            raise InvalidInputError(f"resolution must be positive, got {resolution}")
        arr = np.asarray(grid, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise InvalidInputError("grid must be a non-empty 2D array")
        if np.any(np.isinf(arr)):
            raise InvalidInputError("heights must be finite or nan")
        self.origin = (float(origin[0]), float(origin[1]))
        self.resolution = float(resolution)
        self._grid = arr.copy()
        self._grid.setflags(write=False)

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    @property
    def shape(self) -> tuple[int, int]:
        return self._grid.shape

    def cell_center(self, r: int, c: int) -> Vec2:
        return (
            self.origin[0] + c * self.resolution,
            self.origin[1] + r * self.resolution,
        )

    def save(self, path: str) -> None:
        rows, cols = self._grid.shape
        with open(path, "w") as fh:
            fh.write("HMAP v1\n")
            fh.write(
                f"{self.origin[0]!r} {self.origin[1]!r} {self.resolution!r} {rows} {cols}\n"
            )
            for r in range(rows):
                fh.write(" ".join(_fmt(v) for v in self._grid[r]) + "\n")

    @staticmethod
    def load(path: str) -> "HeightMap":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0].strip() != "HMAP v1":
            raise MapFormatError("expected header 'HMAP v1'", line=1)
        if len(lines) < 2:
            raise MapFormatError("missing geometry line", line=2)
        parts = lines[1].split()
        if len(parts) != 5:
            raise MapFormatError(
                "expected 'origin_x origin_y resolution rows cols'", line=2
            )
        try:
            ox, oy, res = float(parts[0]), float(parts[1]), float(parts[2])
            rows, cols = int(parts[3]), int(parts[4])
        except ValueError as exc:
            raise MapFormatError(str(exc), line=2) from exc
        if len(lines) < 2 + rows:
            raise MapFormatError(
                f"expected {rows} data rows, found {len(lines) - 2}", line=len(lines)
            )
        grid = np.empty((rows, cols))
        for r in range(rows):
            vals = lines[2 + r].split()
            if len(vals) != cols:
                raise MapFormatError(
                    f"expected {cols} values, found {len(vals)}", line=3 + r
                )
            try:
                grid[r] = [float(v) for v in vals]
            except ValueError as exc:
                raise MapFormatError(str(exc), line=3 + r) from exc
        return HeightMap(origin=(ox, oy), resolution=res, grid=grid)


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


# --- synthetic map generators --------------------------------------------


def flat_map(height: float = 0.0, extent: float = 4.0, resolution: float = 0.02) -> HeightMap:
    n = int(2 * extent / resolution) + 1
    grid = np.full((n, n), height)
    return HeightMap(origin=(-extent, -extent), resolution=resolution, grid=grid)


def ramp_map(
    angle_deg: float,
    direction_deg: float = 0.0,
    extent: float = 4.0,
    resolution: float = 0.02,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> HeightMap:
    """Plane through the origin rising at angle_deg along direction_deg."""
    n = int(2 * extent / resolution) + 1
    xs = -extent + resolution * np.arange(n)
    ys = -extent + resolution * np.arange(n)
    X, Y = np.meshgrid(xs, ys)  # X varies along columns, Y along rows
    slope = math.tan(math.radians(angle_deg))
    d = math.radians(direction_deg)
    grid = slope * (X * math.cos(d) + Y * math.sin(d))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        grid = grid + rng.normal(0.0, noise_sigma, grid.shape)
    return HeightMap(origin=(-extent, -extent), resolution=resolution, grid=grid)


def steps_map(
    step_height: float,
    step_length: float = 0.3,
    extent: float = 4.0,
    resolution: float = 0.02,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> HeightMap:
    """Staircase rising along +x: height d at x in [0, L), 2d in [L, 2L), ..."""
    n = int(2 * extent / resolution) + 1
    xs = -extent + resolution * np.arange(n)
    levels = np.where(xs < 0.0, 0.0, np.floor_divide(xs, step_length) + 1.0)
    row = step_height * levels
    grid = np.tile(row, (n, 1))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        grid = grid + rng.normal(0.0, noise_sigma, grid.shape)
    return HeightMap(origin=(-extent, -extent), resolution=resolution, grid=grid)


# --- queries and fits ------------------------------------------------------


def query_footprint_height(
    hmap: HeightMap, center, footprint_radius: float = DEFAULT_FOOTPRINT_RADIUS
) -> float:
    """Mean observed height over the footprint square around center.

    Fails when fewer than a quarter of the footprint's cells carry data.
    """
    if footprint_radius <= 0:
        raise InvalidInputError("footprint_radius must be positive")
    res = hmap.resolution
    ox, oy = hmap.origin
    rows, cols = hmap.shape
    c_lo = int(math.ceil((center[0] - footprint_radius - ox) / res - 1e-12))
    c_hi = int(math.floor((center[0] + footprint_radius - ox) / res + 1e-12))
    r_lo = int(math.ceil((center[1] - footprint_radius - oy) / res - 1e-12))
    r_hi = int(math.floor((center[1] + footprint_radius - oy) / res + 1e-12))
    expected = max(0, c_hi - c_lo + 1) * max(0, r_hi - r_lo + 1)
    c_lo, c_hi = max(c_lo, 0), min(c_hi, cols - 1)
    r_lo, r_hi = max(r_lo, 0), min(r_hi, rows - 1)
    if c_lo > c_hi or r_lo > r_hi or expected == 0:
        raise NoDataError(f"footprint at {tuple(center)} lies outside the map")
    patch = hmap.grid[r_lo : r_hi + 1, c_lo : c_hi + 1]
    present = ~np.isnan(patch)
    count = int(np.count_nonzero(present))
    if count == 0 or count < 0.25 * expected:
        raise NoDataError(
            f"footprint at {tuple(center)} has {count}/{expected} observed cells"
        )
    return float(patch[present].mean())


def fit_plane(
    hmap: HeightMap,
    support: Foothold,
    planned: list[Foothold] | tuple[Foothold, ...],
    footprint_radius: float = DEFAULT_FOOTPRINT_RADIUS,
) -> TerrainPlane:
    """Least-squares plane through footprint heights at the support foot
    and the planned footholds (exact interpolation for three points).

    The plane is anchored at the support foot.  Collinear query points
    raise DegenerateFitError so the caller can keep its previous plane.
    """
    points = [support.xy] + [f.xy for f in planned]
    if len(points) < 3:
        raise DegenerateFitError("need at least three query points")
    heights = [query_footprint_height(hmap, p, footprint_radius) for p in points]
    ax, ay = points[0]
    A = np.array([[p[0] - ax, p[1] - ay, 1.0] for p in points])
    # collinearity check on the xy footprint of the query points
    spread = A[:, :2] - A[:, :2].mean(axis=0)
    sv = np.linalg.svd(spread, compute_uv=False)
    if sv[-1] < 1e-10:
        raise DegenerateFitError("query points are collinear")
    coef, *_ = np.linalg.lstsq(A, np.array(heights), rcond=None)
    return TerrainPlane(
        alpha=float(coef[0]), beta=float(coef[1]), h0_anchor=float(coef[2]), anchor=(ax, ay)
    )


def foot_normal(
    hmap: HeightMap, center, footprint_radius: float = DEFAULT_FOOTPRINT_RADIUS
) -> tuple[float, float, float]:
    """Unit normal of the terrain patch around a footstep position."""
    res = hmap.resolution
    offsets = [
        (-footprint_radius, -footprint_radius),
        (footprint_radius, -footprint_radius),
        (-footprint_radius, footprint_radius),
        (footprint_radius, footprint_radius),
        (0.0, 0.0),
    ]
    pts = []
    heights = []
    for dx, dy in offsets:
        p = (center[0] + dx, center[1] + dy)
        try:
            h = query_footprint_height(hmap, p, max(footprint_radius, 2 * res))
        except NoDataError:
            continue
        pts.append(p)
        heights.append(h)
    if len(pts) < 3:
        raise DegenerateFitError("not enough observed cells for a normal")
    ax, ay = pts[0]
    A = np.array([[p[0] - ax, p[1] - ay, 1.0] for p in pts])
    spread = A[:, :2] - A[:, :2].mean(axis=0)
    sv = np.linalg.svd(spread, compute_uv=False)
    if sv[-1] < 1e-10:
        raise DegenerateFitError("normal query points are collinear")
    coef, *_ = np.linalg.lstsq(A, np.array(heights), rcond=None)
    nx, ny, nz = -float(coef[0]), -float(coef[1]), 1.0
    norm = math.sqrt(nx * nx + ny * ny + nz * nz)
    return (nx / norm, ny / norm, nz / norm)


def effective_params_on_plane(
    plane: TerrainPlane, nominal_h0: float, g: float = 9.81
) -> LipParams:
    """Pendulum parameters for walking along an inclined plane.

    The CoM is constrained to a plane at constant vertical offset h0 above
    the terrain.  Under heading alignment with the steepest gradient the
    horizontal dynamics reduce to the flat-ground pendulum, so omega stays
    sqrt(g / h0) regardless of the tilt.
    """
    if nominal_h0 <= 0:
        raise InvalidInputError("nominal_h0 must be positive")
    if not (math.isfinite(plane.alpha) and math.isfinite(plane.beta)):
        raise InvalidInputError("plane gradients must be finite")
    return LipParams(g=g, h=nominal_h0)


@dataclass(frozen=True)
class ReductionReport:
    """Diagnostics for the planar-reduction validity conditions."""

    lateral_gradient: float  # terrain gradient across the heading
    along_gradient: float  # terrain gradient along the heading
    heading_deviation_deg: float  # angle between heading and steepest ascent
    valid: bool


def check_reduction_validity(
    plane: TerrainPlane, heading, angle_threshold_deg: float = 10.0
) -> ReductionReport:
    """Check how well the flat-pendulum reduction applies for a heading.

    The reduction needs the lateral terrain gradient (in the robot frame)
    to vanish, which holds when the heading aligns with the steepest
    gradient.  Flat terrain is valid for any heading.
    """
    hx, hy = heading
    norm = math.hypot(hx, hy)
    if norm < 1e-12:
        raise InvalidInputError("heading must be a nonzero vector")
    hx, hy = hx / norm, hy / norm
    along = plane.alpha * hx + plane.beta * hy
    lateral = -plane.alpha * hy + plane.beta * hx
    gmag = math.hypot(plane.alpha, plane.beta)
    if gmag < 1e-9:
        return ReductionReport(0.0, along, 0.0, True)
    cosang = max(-1.0, min(1.0, abs(along) / gmag))
    deviation = math.degrees(math.acos(cosang))
    return ReductionReport(
        lateral_gradient=lateral,
        along_gradient=along,
        heading_deviation_deg=deviation,
        valid=deviation <= angle_threshold_deg,
    )
