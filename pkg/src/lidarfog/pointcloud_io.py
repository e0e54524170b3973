"""Point-cloud file IO and the dual-return intersection filter.

Two formats: the headerless binary record layout used by KITTI-style
datasets (consecutive little-endian float32 x, y, z, intensity) and a plain
ASCII PLY with the same four properties.  Binary round-trips are bit-exact.

`intersect_returns` keeps the points of a strongest-return scan that have a
counterpart in the last-return scan of the same sweep; everything a
dual-mode sensor reports in only one of the two echoes is scattering noise,
not a solid object.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .foggify import PointCloud

BIN_KIND = "bin"
PLY_KIND = "ply"
RECORD_BYTES = 16  # four little-endian float32 per point
DEFAULT_MATCH_TOLERANCE = 1e-3  # [m]


class MalformedFileError(Exception):
    """File content violates the declared point-cloud format."""


@dataclass(frozen=True)
class CloudFormat:
    """Record layout declaration.

    `columns` covers binary datasets that append extra per-point fields
    (channel, timestamp, ...) after x, y, z, intensity: records are read as
    that many float32 values and the extras are dropped.  Output always
    carries the canonical four columns.
    """

    kind: str = BIN_KIND
    intensity_scale: float = 255.0
    columns: int = 4

    def __post_init__(self):
        if self.kind not in (BIN_KIND, PLY_KIND):
            raise ValueError(f"unknown cloud format kind {self.kind!r}")
        if self.intensity_scale <= 0:
            raise ValueError(f"intensity_scale must be positive, got {self.intensity_scale}")
        if self.columns < 4:
            raise ValueError(f"records need at least 4 columns, got {self.columns}")
        if self.columns != 4 and self.kind != BIN_KIND:
            raise ValueError("column-count override applies to the binary format only")


def _check_finite(rows: np.ndarray, path, allow_nonfinite: bool):
    if allow_nonfinite:
        return
    if not np.all(np.isfinite(rows)):
        bad = int(np.count_nonzero(~np.all(np.isfinite(rows), axis=1)))
        raise MalformedFileError(
            f"{path}: {bad} record(s) with non-finite values "
            "(pass allow_nonfinite to keep them)"
        )


def _read_bin(path, allow_nonfinite: bool, columns: int) -> np.ndarray:
    record_bytes = 4 * columns
    size = os.path.getsize(path)
    if size % record_bytes != 0:
        raise MalformedFileError(
            f"{path}: size {size} is not a multiple of the {record_bytes}-byte record"
        )
    with open(path, "rb") as fh:
        rows = np.fromfile(fh, dtype="<f4").reshape(-1, columns)
    rows = rows[:, :4].astype(np.float64)
    _check_finite(rows, path, allow_nonfinite)
    return rows


_PLY_HEADER = """ply
format ascii 1.0
element vertex {n}
property float x
property float y
property float z
property float intensity
end_header
"""


def _read_ply(path, allow_nonfinite: bool) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh]
    if not lines or lines[0] != "ply":
        raise MalformedFileError(f"{path}: missing ply magic line")
    try:
        end = lines.index("end_header")
    except ValueError:
        raise MalformedFileError(f"{path}: missing end_header") from None
    header = lines[1:end]
    n = None
    props = []
    for ln in header:
        if ln.startswith("element vertex "):
            n = int(ln.split()[-1])
        elif ln.startswith("property "):
            props.append(ln.split()[-1])
        elif ln.startswith(("comment", "format")):
            continue
    if n is None or props != ["x", "y", "z", "intensity"]:
        raise MalformedFileError(f"{path}: unsupported ply layout")
    body = [ln for ln in lines[end + 1:] if ln]
    if len(body) != n:
        raise MalformedFileError(f"{path}: header declares {n} vertices, found {len(body)}")
    rows = np.empty((n, 4), dtype=np.float64)
    for i, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != 4:
            raise MalformedFileError(f"{path}: bad vertex line {i + 1}")
        try:
            rows[i] = [float(v) for v in parts]
        except ValueError:
            raise MalformedFileError(f"{path}: bad vertex line {i + 1}") from None
    _check_finite(rows, path, allow_nonfinite)
    return rows


def read_cloud(path, fmt: CloudFormat = CloudFormat(), allow_nonfinite: bool = False) -> PointCloud:
    """Load a point cloud; the frame id is the file stem.

    Raises OSError for filesystem trouble and MalformedFileError for content
    that breaks the format (partial trailing record, bad PLY header, and —
    unless allow_nonfinite — NaN/inf values).
    """
    if fmt.kind == BIN_KIND:
        rows = _read_bin(path, allow_nonfinite, fmt.columns)
    else:
        rows = _read_ply(path, allow_nonfinite)
    frame_id = os.path.splitext(os.path.basename(str(path)))[0]
    return PointCloud(rows[:, :3], rows[:, 3], fmt.intensity_scale, frame_id)


def write_cloud(cloud: PointCloud, path, fmt: CloudFormat = CloudFormat()) -> None:
    """Write a cloud atomically (temp file + rename).

    Binary output narrows to float32 (the record format); reading it back
    reproduces those records bit-exactly.  PLY text keeps six decimals,
    good to 5e-7 absolute per coordinate.
    """
    rows32 = np.column_stack((cloud.xyz, cloud.intensity)).astype("<f4")
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        if fmt.kind == BIN_KIND:
            with open(tmp, "wb") as fh:
                rows32.tofile(fh)
        else:
            with open(tmp, "w", encoding="ascii") as fh:
                fh.write(_PLY_HEADER.format(n=len(cloud)))
                for x, y, z, i in rows32:
                    fh.write(f"{x:.6f} {y:.6f} {z:.6f} {i:.6f}\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def intersect_returns(strongest: PointCloud, last: PointCloud,
                      tol: float = DEFAULT_MATCH_TOLERANCE) -> PointCloud:
    """Points of `strongest` with a neighbor in `last` within Euclidean tol.

    Output preserves the order (and is a subset by index) of `strongest`;
    tol = 0 keeps exact coordinate matches only.
    """
    if tol < 0 or math.isnan(tol):
        raise ValueError(f"tolerance must be >= 0, got {tol}")
    if len(strongest) == 0 or len(last) == 0:
        mask = np.zeros(len(strongest), dtype=bool)
    else:
        tree = cKDTree(last.xyz)
        counts = tree.query_ball_point(strongest.xyz, r=tol, workers=-1, return_length=True)
        mask = counts > 0
    return PointCloud(strongest.xyz[mask], strongest.intensity[mask],
                      strongest.intensity_scale, strongest.frame_id)
