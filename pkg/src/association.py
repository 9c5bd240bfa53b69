"""
Deployment-side association
Interaction-candidate pairing, ground-to-image homography, GPS projection and
optimal tracklet <-> GPS identity assignment
"""
import csv
import itertools
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError
from scipy.optimize import linear_sum_assignment

from .config import config
from .errors import DegenerateConfiguration, InsufficientPoints, NoTemporalOverlap, SchemaViolation
from .file_matcher import require_file
from .schemas import AssignmentResult, BoundingBox, GpsTrack, Homography, PairCandidate, Tracklet

logger = logging.getLogger(__name__)

Correspondence = Tuple[float, float, float, float]

GPS_COLUMNS = ["cattle_id", "timestamp_s", "x_m", "y_m"]
CORRESPONDENCE_COLUMNS = ["x_m", "y_m", "u_px", "v_px"]

# Relative singular-value floors below which point sets and fitted maps count as degenerate
COLLINEAR_TOLERANCE = 1e-9
SINGULAR_TOLERANCE = 1e-12


# ============================================================================
# Interaction candidates
# ============================================================================

def is_candidate_pair(a: BoundingBox, b: BoundingBox, threshold: float) -> bool:
    """Overlapping boxes, or boxes whose boundary gap is within threshold x their mean diagonal"""
    if a.iou(b) > 0.0:
        return True
    return a.gap(b) <= threshold * (a.diagonal + b.diagonal) / 2.0


def build_interaction_candidates(
    boxes: Sequence[BoundingBox],
    threshold: Optional[float] = None,
) -> List[PairCandidate]:
    """
    Pair detections that are close enough to interact

    Args:
        boxes: Detections of one frame
        threshold: Gap threshold as a fraction of the pair's mean diagonal
            (config.pairing_gap_threshold)

    Returns:
        PairCandidate list sorted by (i, j), with the tight union box
    """
    threshold = config.pairing_gap_threshold if threshold is None else threshold
    pairs = []
    for i, j in itertools.combinations(range(len(boxes)), 2):
        if is_candidate_pair(boxes[i], boxes[j], threshold):
            pairs.append(PairCandidate(i=i, j=j, union=boxes[i].union(boxes[j])))
    return pairs


# ============================================================================
# Homography
# ============================================================================

def _as_correspondences(correspondences) -> Tuple[np.ndarray, np.ndarray]:
    data = np.asarray(correspondences, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 4:
        raise InsufficientPoints(f"correspondences must be rows of (x_m, y_m, u_px, v_px), got shape {data.shape}")
    if len(data) < 4:
        raise InsufficientPoints(f"a homography needs at least 4 correspondences, got {len(data)}")
    if not np.all(np.isfinite(data)):
        raise DegenerateConfiguration("correspondences must be finite")
    return data[:, :2], data[:, 2:]


def _normalizing_transform(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)"""
    centroid = points.mean(axis=0)
    spread = np.mean(np.linalg.norm(points - centroid, axis=1))
    if spread <= 0.0:
        raise DegenerateConfiguration("all correspondence points coincide")
    s = np.sqrt(2.0) / spread
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _collinear_triple(points: np.ndarray, tol: float = COLLINEAR_TOLERANCE) -> Optional[Tuple[int, int, int]]:
    extent = max(float(np.ptp(points[:, 0])), float(np.ptp(points[:, 1])), 1e-300)
    for i, j, k in itertools.combinations(range(len(points)), 3):
        u = points[j] - points[i]
        v = points[k] - points[i]
        if abs(u[0] * v[1] - u[1] * v[0]) <= tol * extent ** 2:
            return i, j, k
    return None


def _spread_ratio(points: np.ndarray) -> float:
    """Smallest over largest singular value of the centered points; 0 when they lie on one line"""
    s = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    return float(s[-1] / s[0]) if s[0] > 0.0 else 0.0


def apply_homography(H: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Homogeneous transform with perspective divide

    Returns:
        (N x 2 projected points, N homogeneous w values)
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    homogeneous = np.hstack([points, np.ones((len(points), 1))]) @ np.asarray(H, dtype=np.float64).T
    w = homogeneous[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        projected = homogeneous[:, :2] / w[:, None]
    return projected, w


def reprojection_rms(H: np.ndarray, ground: np.ndarray, image: np.ndarray) -> float:
    projected, _ = apply_homography(H, ground)
    return float(np.sqrt(np.mean(np.sum((projected - image) ** 2, axis=1))))


def fit_homography(correspondences: Sequence[Correspondence]) -> Homography:
    """
    Direct linear transform from ground-plane meters to image pixels

    Both point sets are normalized before solving; the solution is the right
    singular vector of the smallest singular value, denormalized and scaled so
    that H[2][2] = 1.

    Args:
        correspondences: Rows of (x_m, y_m, u_px, v_px), at least 4

    Returns:
        Homography with the reprojection RMS in pixels
    """
    ground, image = _as_correspondences(correspondences)

    for name, points in (("ground", ground), ("image", image)):
        if _spread_ratio(points) <= COLLINEAR_TOLERANCE:
            raise DegenerateConfiguration(f"all {len(points)} {name} points lie on one line")
        # four points with three on a line leave the fit underdetermined
        triple = _collinear_triple(points) if len(points) == 4 else None
        if triple is not None:
            raise DegenerateConfiguration(f"{name} points {list(triple)} are collinear")

    T_ground = _normalizing_transform(ground)
    T_image = _normalizing_transform(image)
    g, _ = apply_homography(T_ground, ground)
    m, _ = apply_homography(T_image, image)

    rows = []
    for (x, y), (u, v) in zip(g, m):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    A = np.asarray(rows)

    _, s, vt = np.linalg.svd(A)
    if s[7] <= 1e-12 * s[0]:
        raise DegenerateConfiguration("correspondences do not determine a unique homography")

    H = np.linalg.inv(T_image) @ vt[-1].reshape(3, 3) @ T_ground
    if abs(H[2, 2]) <= 1e-12 * np.abs(H).max():
        raise DegenerateConfiguration("fitted homography maps the ground origin to infinity")
    H = H / H[2, 2]
    singular_values = np.linalg.svd(H, compute_uv=False)
    if singular_values[-1] <= SINGULAR_TOLERANCE * singular_values[0]:
        raise DegenerateConfiguration("fitted homography is singular")

    rms = reprojection_rms(H, ground, image)
    logger.info(f"Fitted homography from {len(ground)} correspondences, reprojection RMS {rms:.3g} px")
    return Homography.from_matrix(H, rms_error=rms)


# ============================================================================
# GPS projection and cost
# ============================================================================

class ProjectedTrack(BaseModel):
    """GPS fixes mapped into the image; fixes behind the camera are dropped"""
    cattle_id: str
    fixes: List[Tuple[float, float, float]] = Field(description="(t, u_px, v_px)")
    behind_camera: List[float] = Field(default_factory=list, description="Timestamps of excluded fixes")

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f[0] for f in self.fixes], dtype=np.float64)

    @property
    def pixels(self) -> np.ndarray:
        return np.array([(f[1], f[2]) for f in self.fixes], dtype=np.float64).reshape(-1, 2)


def project_gps(track: GpsTrack, homography: Homography) -> ProjectedTrack:
    """
    Project every fix through H

    Args:
        track: GPS fixes in ground-plane meters
        homography: Ground -> image map

    Returns:
        ProjectedTrack; fixes with w <= 0 are listed in behind_camera
    """
    pixels, w = apply_homography(homography.matrix, track.positions)
    times = track.timestamps
    visible = w > 0.0
    if not np.all(visible):
        logger.info(f"{track.cattle_id}: {int(np.sum(~visible))} fixes project behind the camera and are excluded")
    return ProjectedTrack(
        cattle_id=track.cattle_id,
        fixes=[(float(t), float(u), float(v)) for t, (u, v), keep in zip(times, pixels, visible) if keep],
        behind_camera=[float(t) for t, keep in zip(times, visible) if not keep],
    )


def tracklet_gps_cost(tracklet: Tracklet, projected: ProjectedTrack, time_tolerance_s: float) -> float:
    """
    Mean pixel distance between tracklet anchors and the time-interpolated projected track

    Only tracklet frames whose nearest GPS fix lies within time_tolerance_s
    count; with no such frame the cost is infinite.
    """
    fix_times = projected.timestamps
    if fix_times.size == 0:
        return float("inf")

    frame_times = tracklet.timestamps
    nearest = np.min(np.abs(frame_times[:, None] - fix_times[None, :]), axis=1)
    overlap = nearest <= time_tolerance_s
    if not np.any(overlap):
        return float("inf")

    pixels = projected.pixels
    t = frame_times[overlap]
    interpolated = np.stack([np.interp(t, fix_times, pixels[:, 0]), np.interp(t, fix_times, pixels[:, 1])], axis=1)
    distances = np.linalg.norm(tracklet.anchors()[overlap] - interpolated, axis=1)
    return float(np.mean(distances))


def cost_matrix(
    tracklets: Sequence[Tracklet],
    gps_tracks: Sequence[GpsTrack],
    homography: Homography,
    time_tolerance_s: Optional[float] = None,
) -> np.ndarray:
    """Tracklets x GPS tracks matrix of tracklet_gps_cost"""
    time_tolerance_s = config.time_tolerance_s if time_tolerance_s is None else time_tolerance_s
    projected = [project_gps(track, homography) for track in gps_tracks]
    costs = np.full((len(tracklets), len(gps_tracks)), np.inf)
    for i, tracklet in enumerate(tracklets):
        for j, track in enumerate(projected):
            costs[i, j] = tracklet_gps_cost(tracklet, track, time_tolerance_s)
    return costs


# ============================================================================
# Assignment
# ============================================================================

def solve_assignment(costs: np.ndarray, sentinel: Optional[float] = None) -> List[Tuple[int, int]]:
    """
    Minimum-cost one-to-one assignment of rows to columns

    The matrix is padded to square with a large finite sentinel, which also
    stands in for infinite entries; pairs landing on padding or on an
    infinite cost are dropped.

    Returns:
        Sorted (row, col) pairs
    """
    costs = np.asarray(costs, dtype=np.float64)
    n_rows, n_cols = costs.shape
    if n_rows == 0 or n_cols == 0:
        return []
    if not np.any(np.isfinite(costs)):
        raise NoTemporalOverlap("no tracklet overlaps any GPS track in time")

    sentinel = config.assignment_sentinel if sentinel is None else sentinel
    size = max(n_rows, n_cols)
    padded = np.full((size, size), sentinel, dtype=np.float64)
    padded[:n_rows, :n_cols] = np.where(np.isfinite(costs), costs, sentinel)

    rows, cols = linear_sum_assignment(padded)
    return sorted(
        (int(r), int(c)) for r, c in zip(rows, cols)
        if r < n_rows and c < n_cols and np.isfinite(costs[r, c])
    )


def assignment_from_costs(costs: np.ndarray, track_ids: Sequence[str], cattle_ids: Sequence[str]) -> AssignmentResult:
    """AssignmentResult for a precomputed cost matrix"""
    pairs = solve_assignment(costs)
    matched_rows = {r for r, _ in pairs}
    matched_cols = {c for _, c in pairs}
    return AssignmentResult(
        matching={track_ids[r]: cattle_ids[c] for r, c in pairs},
        total_cost=float(sum(costs[r, c] for r, c in pairs)),
        pair_costs={track_ids[r]: float(costs[r, c]) for r, c in pairs},
        unmatched_tracklets=[tid for i, tid in enumerate(track_ids) if i not in matched_rows],
        unmatched_gps=[cid for j, cid in enumerate(cattle_ids) if j not in matched_cols],
    )


def match_gps_to_tracklets(
    tracklets: Sequence[Tracklet],
    gps_tracks: Sequence[GpsTrack],
    homography: Homography,
    time_tolerance_s: Optional[float] = None,
) -> AssignmentResult:
    """
    Identify tracklets by optimally matching them to projected GPS trajectories

    Args:
        tracklets: Image-plane tracks
        gps_tracks: Collar trajectories in ground-plane meters
        homography: Ground -> image map
        time_tolerance_s: Max gap between a frame and its nearest fix (config.time_tolerance_s)

    Returns:
        AssignmentResult
    """
    if not tracklets or not gps_tracks:
        raise NoTemporalOverlap(f"need tracklets and GPS tracks, got {len(tracklets)} and {len(gps_tracks)}")

    costs = cost_matrix(tracklets, gps_tracks, homography, time_tolerance_s)
    result = assignment_from_costs(costs, [t.track_id for t in tracklets], [g.cattle_id for g in gps_tracks])
    logger.info(
        f"Matched {len(result.matching)}/{len(tracklets)} tracklets (total cost {result.total_cost:.2f} px); "
        f"unmatched tracklets {result.unmatched_tracklets}, unmatched GPS {result.unmatched_gps}"
    )
    return result


def identity_recovery(result: AssignmentResult, truth: Dict[str, str]) -> float:
    """Fraction of ground-truth tracklets assigned their true animal"""
    if not truth:
        return 1.0
    return sum(result.matching.get(track_id) == cattle_id for track_id, cattle_id in truth.items()) / len(truth)


# ============================================================================
# File I/O
# ============================================================================

def _read_csv(path: Path, columns: Sequence[str]) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaViolation(f"{path.name} lacks columns {missing} (expected {','.join(columns)})")
        return list(reader)


def read_gps_csv(path: Union[str, Path]) -> List[GpsTrack]:
    """GPS fixes CSV (cattle_id,timestamp_s,x_m,y_m), grouped per animal in order of first appearance"""
    path = require_file(path, "GPS file")
    fixes: Dict[str, list] = {}
    for index, row in enumerate(_read_csv(path, GPS_COLUMNS)):
        try:
            fix = (float(row["timestamp_s"]), float(row["x_m"]), float(row["y_m"]))
        except (TypeError, ValueError) as e:
            raise SchemaViolation(str(e), record_index=index)
        fixes.setdefault(row["cattle_id"], []).append(fix)

    tracks = []
    for cattle_id, rows in fixes.items():
        try:
            tracks.append(GpsTrack(cattle_id=cattle_id, fixes=sorted(rows)))
        except ValidationError as e:
            raise SchemaViolation(f"track {cattle_id}: {e.errors()[0]['msg']}")
    return tracks


def write_gps_csv(tracks: Sequence[GpsTrack], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(GPS_COLUMNS)
        for track in tracks:
            for t, x, y in track.fixes:
                writer.writerow([track.cattle_id, repr(t), repr(x), repr(y)])
    return path


def read_tracklets_jsonl(path: Union[str, Path]) -> List[Tracklet]:
    """One {"track_id": ..., "frames": [[t, x0, y0, x1, y1], ...]} object per line"""
    path = require_file(path, "Tracklet file")
    tracklets = []
    for index, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            tracklets.append(Tracklet.model_validate_json(line))
        except ValidationError as e:
            loc = ".".join(str(p) for p in e.errors()[0]["loc"])
            raise SchemaViolation(e.errors()[0]["msg"], record_index=index, field=loc or None)
    return tracklets


def write_tracklets_jsonl(tracklets: Sequence[Tracklet], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"track_id": t.track_id, "frames": [list(f) for f in t.frames]}) for t in tracklets]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_correspondences_csv(path: Union[str, Path]) -> List[Correspondence]:
    path = require_file(path, "Correspondence file")
    rows = []
    for index, row in enumerate(_read_csv(path, CORRESPONDENCE_COLUMNS)):
        try:
            rows.append(tuple(float(row[c]) for c in CORRESPONDENCE_COLUMNS))
        except (TypeError, ValueError) as e:
            raise SchemaViolation(str(e), record_index=index)
    return rows


def write_correspondences_csv(correspondences: Sequence[Correspondence], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CORRESPONDENCE_COLUMNS)
        for row in correspondences:
            writer.writerow([repr(float(v)) for v in row])
    return path


def read_homography_json(path: Union[str, Path]) -> Homography:
    path = require_file(path, "Homography file")
    try:
        return Homography.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise SchemaViolation(f"{path.name}: {e.errors()[0]['msg']}")
