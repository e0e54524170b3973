"""Per-point fog transformation of whole LiDAR point clouds.

For each point the clear-weather measurement is inverted to the pulse
energy, then the attenuated solid return competes with the strongest
distributed fog return along the same line of sight.  Whichever peak is
larger wins: either the point keeps its position with attenuated intensity,
or it is pulled to the fog-return range (jittered by a bounded noise factor
so relocated points do not collapse onto a perfect circle).

Noise draws are counter-based on (seed, point index) and the cloud is
processed in fixed-size blocks, so results are bit-identical regardless of
worker count or point order.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .optics import (
    BETA_MOR_SCALE,
    MOR_ALPHA_PRODUCT,
    DEFAULT_BETA_0,
    FogParams,
    SensorModel,
    hard_peak_intensity,
)
from .rng import uniform01
from .tables import SoftResponseTable, build_table

# training-style attenuation schedule: clear air through dense fog (MOR 50 m)
DEFAULT_ALPHA_SCHEDULE = (0.0, 0.005, 0.01, 0.02, 0.03, 0.06)

_BLOCK_SIZE = 1 << 16  # fixed block decomposition keeps results worker-invariant


class Provenance(IntEnum):
    HARD_KEPT = 0
    SOFT_REPLACED = 1


@dataclass(frozen=True)
class Point:
    """One return: sensor-centered position [m] and intensity reading."""

    x: float
    y: float
    z: float
    intensity: float


class PointCloud:
    """Column store of points: xyz (n, 3) float64 and intensity (n,) float64.

    `intensity_scale` declares the intensity value range of the source data
    (255 for 8-bit sensors, 1.0 for normalized files); it is the target of
    intensity rescaling and is carried through transformations unchanged.
    """

    def __init__(self, xyz, intensity, intensity_scale: float = 255.0, frame_id: str = ""):
        xyz = np.ascontiguousarray(xyz, dtype=np.float64)
        intensity = np.ascontiguousarray(intensity, dtype=np.float64)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must have shape (n, 3), got {xyz.shape}")
        if intensity.shape != (xyz.shape[0],):
            raise ValueError(
                f"intensity shape {intensity.shape} does not match {xyz.shape[0]} points"
            )
        if intensity_scale <= 0:
            raise ValueError(f"intensity_scale must be positive, got {intensity_scale}")
        self.xyz = xyz
        self.intensity = intensity
        self.intensity_scale = float(intensity_scale)
        self.frame_id = frame_id

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def point(self, i: int) -> Point:
        return Point(self.xyz[i, 0], self.xyz[i, 1], self.xyz[i, 2], self.intensity[i])

    @classmethod
    def from_points(cls, points: Sequence[Point], intensity_scale: float = 255.0,
                    frame_id: str = "") -> "PointCloud":
        xyz = np.array([(p.x, p.y, p.z) for p in points], dtype=np.float64).reshape(-1, 3)
        inten = np.array([p.intensity for p in points], dtype=np.float64)
        return cls(xyz, inten, intensity_scale, frame_id)


@dataclass(frozen=True)
class CloudStats:
    n_points: int
    n_soft_replaced: int
    n_skipped: int
    fraction_replaced: float
    intensity_in_min: float
    intensity_in_max: float
    intensity_in_mean: float
    intensity_out_min: float
    intensity_out_max: float
    intensity_out_mean: float
    rescale_factor: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FoggifyOutcome:
    cloud: PointCloud
    provenance: np.ndarray  # uint8, Provenance values, one per point
    stats: CloudStats


def alpha_to_mor(alpha: float) -> float:
    """Meteorological optical range for an attenuation coefficient (inf at 0)."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return float("inf") if alpha == 0 else MOR_ALPHA_PRODUCT / alpha


def mor_to_alpha(mor: float) -> float:
    """Attenuation coefficient for a meteorological optical range."""
    if not mor > 0:
        raise ValueError(f"mor must be positive, got {mor}")
    return 0.0 if np.isinf(mor) else MOR_ALPHA_PRODUCT / mor


def mor_to_beta(mor: float) -> float:
    """Backscattering coefficient 0.046 / MOR."""
    if not mor > 0:
        raise ValueError(f"mor must be positive, got {mor}")
    return BETA_MOR_SCALE / mor


def fog_from_alpha(alpha: float, beta: Optional[float] = None,
                   beta_0: float = DEFAULT_BETA_0) -> FogParams:
    """FogParams with MOR and (unless given) beta derived from alpha."""
    mor = alpha_to_mor(alpha)
    if beta is None:
        beta = mor_to_beta(mor) if alpha > 0 else 0.0
    return FogParams(alpha=alpha, beta=beta, beta_0=beta_0, mor=mor)


def fog_from_mor(mor: float, beta: Optional[float] = None,
                 beta_0: float = DEFAULT_BETA_0) -> FogParams:
    """FogParams with alpha and (unless given) beta derived from MOR."""
    alpha = mor_to_alpha(mor)
    if beta is None:
        beta = mor_to_beta(mor)
    return FogParams(alpha=alpha, beta=beta, beta_0=beta_0, mor=mor)


def sample_alpha(schedule: Sequence[float], draw: float) -> float:
    """Pick schedule[floor(draw * len)] — uniform over the schedule for uniform draws."""
    if len(schedule) == 0:
        raise ValueError("alpha schedule is empty")
    if not 0.0 <= draw < 1.0:
        raise ValueError(f"draw must lie in [0, 1), got {draw}")
    return schedule[min(int(draw * len(schedule)), len(schedule) - 1)]


def _transform_block(x, y, z, inten, draws, fog: FogParams, sensor: SensorModel,
                     table: SoftResponseTable):
    """Vectorized per-point transform; the single source of truth.

    Returns (x_out, y_out, z_out, i_out, soft_mask, skipped_mask).  Skipped
    points (zero/overlong range, non-finite coordinates or intensity) pass
    through unchanged.
    """
    r0 = np.sqrt(x * x + y * y + z * z)
    valid = np.isfinite(r0) & (r0 > 0.0) & (r0 <= sensor.max_range) & np.isfinite(inten)
    # sanitized copies keep the dead lanes free of stray inf/nan arithmetic
    r0s = np.where(valid, r0, 1.0)
    inten_s = np.where(valid, inten, 0.0)

    k = np.minimum(np.floor(r0s / table.grid_step).astype(np.int64), table.n_entries)
    has_grid = valid & (k >= 1)
    ki = np.where(has_grid, k - 1, 0)
    i_tmp = np.where(has_grid, table.prefix_max[ki], 0.0)
    r_tmp = np.where(has_grid, table.prefix_argmax[ki], 0.0)

    i_hard = hard_peak_intensity(inten_s, r0s, fog.alpha)
    i_soft = (inten_s * r0s * r0s / fog.beta_0) * fog.beta * i_tmp
    soft = valid & (i_soft > i_hard)

    # noise factor 2^p with p uniform in [-1, 1); the new range n * r_tmp is
    # applied along the unit direction so a median draw lands exactly on the
    # table argmax range
    noise = np.exp2(2.0 * draws - 1.0)
    new_range = noise * r_tmp
    x_out = np.where(soft, (np.where(soft, x, 0.0) / r0s) * new_range, x)
    y_out = np.where(soft, (np.where(soft, y, 0.0) / r0s) * new_range, y)
    z_out = np.where(soft, (np.where(soft, z, 0.0) / r0s) * new_range, z)
    i_out = np.where(soft, i_soft, np.where(valid, i_hard, inten))
    return x_out, y_out, z_out, i_out, soft, ~valid


def _check_table(table: SoftResponseTable, fog: FogParams):
    if table.alpha != fog.alpha:
        raise ValueError(
            f"table was built for alpha={table.alpha}, fog has alpha={fog.alpha}"
        )


def foggify_point(p: Point, fog: FogParams, sensor: SensorModel,
                  table: SoftResponseTable, noise_draw: float):
    """Transform one point; returns (Point, Provenance).

    `noise_draw` in [0, 1) drives the range jitter of a relocated point.
    Degenerate inputs (zero range, non-finite values, range beyond
    max_range) come back unchanged and tagged HARD_KEPT.
    """
    if not 0.0 <= noise_draw < 1.0:
        raise ValueError(f"noise_draw must lie in [0, 1), got {noise_draw}")
    _check_table(table, fog)
    x, y, z, i, soft, _ = _transform_block(
        np.array([p.x]), np.array([p.y]), np.array([p.z]),
        np.array([p.intensity]), np.array([noise_draw]),
        fog, sensor, table,
    )
    tag = Provenance.SOFT_REPLACED if soft[0] else Provenance.HARD_KEPT
    return Point(float(x[0]), float(y[0]), float(z[0]), float(i[0])), tag


def foggify_cloud(
    cloud: PointCloud,
    fog: FogParams,
    sensor: SensorModel,
    seed: int = 0,
    rescale: bool = True,
    table: Optional[SoftResponseTable] = None,
    workers: Optional[int] = None,
    block_size: int = _BLOCK_SIZE,
) -> FoggifyOutcome:
    """Apply the per-point transform to a whole cloud.

    Each point gets a deterministic noise draw keyed by (seed, its index).
    With `rescale`, intensities are scaled by one per-cloud linear factor so
    the maximum reaches `cloud.intensity_scale` (mimicking a sensor gain
    stage that always fills the value range); ratios between points are
    preserved.  Output is bit-identical for identical (cloud, fog, sensor,
    seed) regardless of `workers`.
    """
    n = len(cloud)
    if n == 0:
        raise ValueError("cannot foggify an empty point cloud")
    if table is None:
        table = build_table(fog, sensor)
    _check_table(table, fog)

    x = np.ascontiguousarray(cloud.xyz[:, 0])
    y = np.ascontiguousarray(cloud.xyz[:, 1])
    z = np.ascontiguousarray(cloud.xyz[:, 2])
    inten = cloud.intensity

    xo = np.empty(n)
    yo = np.empty(n)
    zo = np.empty(n)
    io = np.empty(n)
    soft = np.empty(n, dtype=bool)
    skipped = np.empty(n, dtype=bool)

    def run_block(lo: int, hi: int):
        draws = uniform01(seed, np.arange(lo, hi, dtype=np.uint64))
        res = _transform_block(x[lo:hi], y[lo:hi], z[lo:hi], inten[lo:hi],
                               draws, fog, sensor, table)
        for dst, src in zip((xo, yo, zo, io, soft, skipped), res):
            dst[lo:hi] = src

    blocks = [(lo, min(lo + block_size, n)) for lo in range(0, n, block_size)]
    if workers is None:
        workers = min(len(blocks), os.cpu_count() or 1)
    if workers <= 1 or len(blocks) == 1:
        for lo, hi in blocks:
            run_block(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: run_block(*b), blocks))

    rescale_factor = 1.0
    max_out = float(io.max())
    if rescale and max_out > 0.0:
        io = (io / max_out) * cloud.intensity_scale
        rescale_factor = cloud.intensity_scale / max_out

    n_soft = int(np.count_nonzero(soft))
    stats = CloudStats(
        n_points=n,
        n_soft_replaced=n_soft,
        n_skipped=int(np.count_nonzero(skipped)),
        fraction_replaced=n_soft / n,
        intensity_in_min=float(np.min(inten)),
        intensity_in_max=float(np.max(inten)),
        intensity_in_mean=float(np.mean(inten)),
        intensity_out_min=float(np.min(io)),
        intensity_out_max=float(np.max(io)),
        intensity_out_mean=float(np.mean(io)),
        rescale_factor=rescale_factor,
    )
    out = PointCloud(np.column_stack((xo, yo, zo)), io,
                     cloud.intensity_scale, cloud.frame_id)
    provenance = soft.astype(np.uint8)
    return FoggifyOutcome(cloud=out, provenance=provenance, stats=stats)
