"""Mesh generation from continuous sizing fields.

1D meshes follow the exact marching construction on the unit interval. 2D
meshes are built by conforming Delaunay refinement: the boundary is
discretized to the sizing field, encroached boundary segments are split until
every segment is a Delaunay (Gabriel) edge, and circumcenters of oversized or
low-quality triangles are inserted until the mesh conforms. Interior vertices
are relaxed with a few Laplacian smoothing sweeps at the end.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, cKDTree
from scipy.stats import qmc

from .errors import MeshGenerationError
from .geometry import Geometry, contains_many
from .mesh import DiscreteSizingField, SimplicialMesh, interpolate_many, interval_mesh

_SIZE_SLACK = 1.05       # refine elements whose sizing exceeds slack * target
_MIN_SPACING = 0.45      # new points keep this fraction of the local target apart
_MAX_ROUNDS = 200
_AREA_PER_SIZING2 = math.sqrt(3.0) / 2.0  # element area implied by sizing h


@dataclass
class GeneratorConfig:
    """Knobs of the 2D generator; defaults follow the training pipeline."""

    clip_low: float = 1e-4
    clip_high: float = 10.0
    max_elements: int = 200_000
    gradation_limit: float = 1.3
    quality_min_angle: float = 20.0

    def __post_init__(self):
        if not 0 < self.clip_low < self.clip_high:
            raise MeshGenerationError("need 0 < clip_low < clip_high")
        if self.gradation_limit <= 1.0:
            raise MeshGenerationError("gradation_limit must exceed 1")
        if not 0 < self.quality_min_angle < 30:
            raise MeshGenerationError("quality_min_angle must lie in (0, 30)")
        if self.max_elements < 1:
            raise MeshGenerationError("max_elements must be positive")


def evaluate_sizing(sizing, points: np.ndarray) -> np.ndarray:
    """Evaluate a sizing callable on an (n, 2) array of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(sizing, DiscreteSizingField):
        return interpolate_many(sizing, pts)
    if hasattr(sizing, "evaluate_many"):
        return np.asarray(sizing.evaluate_many(pts), dtype=float)
    return np.array([float(sizing(p)) for p in pts])


class ClippedSizing:
    """Sizing wrapper clamping values to (0.8 min, 1.25 max) of expert sizes."""

    def __init__(self, inner, low: float, high: float):
        self.inner = inner
        self.low = low
        self.high = high

    def __call__(self, point) -> float:
        return float(np.clip(float(self.inner(point)), self.low, self.high))

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        return np.clip(evaluate_sizing(self.inner, points), self.low, self.high)


class ScaledSizing:
    """Sizing wrapper multiplying values by a constant factor."""

    def __init__(self, inner, factor: float):
        self.inner = inner
        self.factor = factor

    def __call__(self, point) -> float:
        return self.factor * float(self.inner(point))

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        return self.factor * evaluate_sizing(self.inner, points)


def clip_sizing(raw, training_stats: tuple) -> ClippedSizing:
    """Clamp a raw sizing callable to (0.8 min, 1.25 max) expert sizing."""
    min_expert, max_expert = training_stats
    if not min_expert < max_expert:
        raise MeshGenerationError("need min_expert_sizing < max_expert_sizing")
    return ClippedSizing(raw, 0.8 * min_expert, 1.25 * max_expert)


def estimate_element_count(geometry: Geometry, sizing, n_samples: int = 1024) -> float:
    """Expected element count of a mesh conforming to the sizing field.

    Integrates the inverse expected element area over quasi-random interior
    sample points. Deliberately conservative (tends to overestimate).
    """
    lo, hi = geometry.bounding_box
    sampler = qmc.Halton(d=2, scramble=False)
    inside_pts = []
    need = max(1000, n_samples)
    for _ in range(64):
        raw = sampler.random(2 * need)
        pts = lo + raw * (hi - lo)
        pts = pts[contains_many(geometry, pts)]
        inside_pts.append(pts)
        if sum(len(p) for p in inside_pts) >= need:
            break
    pts = np.concatenate(inside_pts)
    if len(pts) == 0:
        raise MeshGenerationError("no interior sample points found")
    h = evaluate_sizing(sizing, pts)
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        raise MeshGenerationError("sizing field non-positive or non-finite")
    area = geometry.area()
    per_point_density = 1.0 / (_AREA_PER_SIZING2 * h * h)
    return float(area * per_point_density.mean())


def apply_budget(geometry: Geometry, sizing, max_elements: int):
    """Scale the sizing up if its estimated element count exceeds the budget."""
    if max_elements <= 0:
        raise MeshGenerationError("max_elements must be positive")
    estimate = estimate_element_count(geometry, sizing)
    if estimate <= max_elements:
        return sizing
    return ScaledSizing(sizing, math.sqrt(estimate / max_elements))


# ----------------------------------------------------------------------
# 1D generation

def generate_1d(sizing, max_vertices: int = 10_000_000) -> SimplicialMesh:
    """March across [0, 1] placing vertices at local sizing increments.

    A final gap below 1e-12 is absorbed into the endpoint so the generator
    cannot emit a degenerate last segment.
    """
    verts = [0.0]
    while True:
        v = verts[-1]
        f = float(sizing(v))
        if not np.isfinite(f) or f <= 0.0:
            raise MeshGenerationError(f"sizing must be positive and finite, got {f} at {v}")
        nxt = v + f
        if nxt >= 1.0 or 1.0 - nxt <= 1e-12:
            verts.append(1.0)
            break
        verts.append(nxt)
        if len(verts) > max_vertices:
            raise MeshGenerationError("1D generation exceeded the vertex guard")
    return interval_mesh(np.asarray(verts))


def expert_spacing(expert: SimplicialMesh, points) -> np.ndarray:
    """Piecewise-constant spacing of a 1D mesh, sampled left-inclusively.

    A query within 1e-13 below a mesh vertex is treated as that vertex, so
    roundoff in iteratively generated meshes cannot select the wrong interval.
    """
    v = expert.vertices[:, 0]
    s = np.diff(v)
    z = np.atleast_1d(np.asarray(points, dtype=float)).ravel()
    idx = np.clip(np.searchsorted(v, z, side="right") - 1, 0, len(s) - 1)
    nxt = np.minimum(idx + 1, len(v) - 1)
    snap = (nxt <= len(s) - 1) & (v[nxt] - z >= 0) & (v[nxt] - z <= 1e-13)
    idx[snap] = nxt[snap]
    return s[idx]


def perfect_sizing_field(current: SimplicialMesh, expert: SimplicialMesh) -> DiscreteSizingField:
    """Targets of an oracle predictor: expert spacing at current vertices."""
    return DiscreteSizingField(current, expert_spacing(expert, current.vertices[:, 0]))


# ----------------------------------------------------------------------
# 2D generation

def _subdivide_edge(a: np.ndarray, b: np.ndarray, sizing, depth: int = 0) -> list:
    """Points strictly between a and b so every piece fits the local sizing."""
    mid = 0.5 * (a + b)
    length = float(np.linalg.norm(b - a))
    target = float(sizing(mid))
    if not np.isfinite(target) or target <= 0.0:
        raise MeshGenerationError("sizing field non-positive on the boundary")
    if length <= target or depth >= 24:
        return []
    return _subdivide_edge(a, mid, sizing, depth + 1) + [mid] + _subdivide_edge(mid, b, sizing, depth + 1)


def _discretize_boundary(geometry: Geometry, sizing):
    points: list[np.ndarray] = []
    segments: list[tuple[int, int]] = []
    for loop in geometry.loops:
        start = len(points)
        loop_pts: list[np.ndarray] = []
        n = len(loop)
        for k in range(n):
            a, b = loop[k], loop[(k + 1) % n]
            if k == 0:
                loop_pts.append(a)
            loop_pts.extend(_subdivide_edge(a, b, sizing))
            if k < n - 1:
                loop_pts.append(b)
        points.extend(loop_pts)
        m = len(loop_pts)
        segments.extend(((start + i, start + (i + 1) % m) for i in range(m)))
    return points, segments


def _triangle_geometry(pts: np.ndarray, tris: np.ndarray):
    """Areas, sizings, centroids and min angles for an (m, 3) triangle array."""
    p = pts[tris]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    areas = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    sizings = np.sqrt(np.abs(areas) * 2.0 / np.sqrt(3.0))
    centroids = p.mean(axis=1)
    e0 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    e1 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    e2 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    lengths = np.stack([e0, e1, e2], axis=1)
    with np.errstate(invalid="ignore"):
        # law of cosines; the smallest angle faces the shortest edge
        cos0 = (e1**2 + e2**2 - e0**2) / (2 * e1 * e2)
        cos1 = (e0**2 + e2**2 - e1**2) / (2 * e0 * e2)
        cos2 = (e0**2 + e1**2 - e2**2) / (2 * e0 * e1)
    angles = np.degrees(np.arccos(np.clip(np.stack([cos0, cos1, cos2], axis=1), -1, 1)))
    return np.abs(areas), sizings, centroids, lengths, angles.min(axis=1)


def _circumcenter(pa, pb, pc):
    d = 2.0 * (pa[0] * (pb[1] - pc[1]) + pb[0] * (pc[1] - pa[1]) + pc[0] * (pa[1] - pb[1]))
    if d == 0.0:
        return None
    sa, sb, sc = pa @ pa, pb @ pb, pc @ pc
    ux = (sa * (pb[1] - pc[1]) + sb * (pc[1] - pa[1]) + sc * (pa[1] - pb[1])) / d
    uy = (sa * (pc[0] - pb[0]) + sb * (pa[0] - pc[0]) + sc * (pb[0] - pa[0])) / d
    return np.array([ux, uy])


def _limit_gradation(targets: np.ndarray, edges: np.ndarray, limit: float) -> np.ndarray:
    """Largest field below `targets` whose edge-adjacent ratio is <= limit."""
    t = targets.copy()
    heap = [(t[i], i) for i in range(len(t))]
    heapq.heapify(heap)
    nbrs: dict[int, list[int]] = {}
    for a, b in edges:
        nbrs.setdefault(int(a), []).append(int(b))
        nbrs.setdefault(int(b), []).append(int(a))
    while heap:
        val, i = heapq.heappop(heap)
        if val > t[i]:
            continue
        cap = val * limit
        for j in nbrs.get(i, ()):
            if t[j] > cap:
                t[j] = cap
                heapq.heappush(heap, (cap, j))
    return t


def _orient_ccw(pts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = pts[tris]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    flip = (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]) < 0
    out = tris.copy()
    out[flip] = out[flip][:, [0, 2, 1]]
    return out


def _laplacian_smooth(verts: np.ndarray, tris: np.ndarray, boundary: np.ndarray,
                      sweeps: int) -> np.ndarray:
    """Move interior vertices to the mean of their neighbors, rejecting
    any move that inverts an incident triangle."""
    verts = verts.copy()
    nbrs: list[set] = [set() for _ in range(len(verts))]
    incident: list[list] = [[] for _ in range(len(verts))]
    for ti, (a, b, c) in enumerate(tris):
        nbrs[a].update((b, c))
        nbrs[b].update((a, c))
        nbrs[c].update((a, b))
        for v in (a, b, c):
            incident[v].append(ti)
    order = [i for i in range(len(verts)) if not boundary[i] and nbrs[i]]
    for _ in range(sweeps):
        for i in order:
            candidate = verts[sorted(nbrs[i])].mean(axis=0)
            old = verts[i].copy()
            verts[i] = candidate
            ok = True
            for ti in incident[i]:
                p = verts[tris[ti]]
                area2 = ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                         - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))
                if area2 <= 1e-14:
                    ok = False
                    break
            if not ok:
                verts[i] = old
    return verts


def generate_2d(geometry: Geometry, sizing, config: GeneratorConfig | None = None) -> SimplicialMesh:
    """Triangulate a geometry so element sizings follow the sizing field."""
    config = config or GeneratorConfig()
    points_list, segments = _discretize_boundary(geometry, sizing)
    if len(points_list) < 3:
        raise MeshGenerationError("degenerate boundary discretization")
    points = np.asarray(points_list)
    if len(points) > 2 * config.max_elements + 4:
        raise MeshGenerationError("boundary alone exceeds the element budget")

    min_angle = config.quality_min_angle
    tris = None
    keep = None
    vertex_targets = None
    for _ in range(_MAX_ROUNDS):
        dt = Delaunay(points)
        tris = _orient_ccw(points, dt.simplices)
        areas, sizes, centroids, lengths, angles = _triangle_geometry(points, tris)
        keep = contains_many(geometry, centroids)

        # 1) split encroached boundary segments: a clean pass guarantees all
        #    segments are Gabriel (hence Delaunay) edges.
        tree = cKDTree(points)
        seg_arr = np.asarray(segments)
        mids = 0.5 * (points[seg_arr[:, 0]] + points[seg_arr[:, 1]])
        radii = 0.5 * np.linalg.norm(points[seg_arr[:, 0]] - points[seg_arr[:, 1]], axis=1)
        hits = tree.query_ball_point(mids, radii * (1.0 - 1e-12))
        encroached = [k for k, h in enumerate(hits)
                      if any(i not in (seg_arr[k, 0], seg_arr[k, 1]) for i in h)]
        if encroached:
            new_points, new_segments = [], []
            enc = set(encroached)
            for k, (i, j) in enumerate(segments):
                if k in enc:
                    m = len(points) + len(new_points)
                    new_points.append(mids[k])
                    new_segments.extend([(i, m), (m, j)])
                else:
                    new_segments.append((i, j))
            points = np.concatenate([points, np.asarray(new_points)])
            segments = new_segments
            continue

        # 2) insert points for oversized or low-quality kept triangles
        kept_idx = np.flatnonzero(keep)
        if len(kept_idx) >= config.max_elements:
            break
        if vertex_targets is None:
            vertex_targets = evaluate_sizing(sizing, points)
        elif len(vertex_targets) < len(points):
            extra = evaluate_sizing(sizing, points[len(vertex_targets):])
            vertex_targets = np.concatenate([vertex_targets, extra])
        if not np.all(np.isfinite(vertex_targets)) or np.any(vertex_targets <= 0):
            raise MeshGenerationError("sizing field non-positive or non-finite")
        kept_edges = np.unique(np.sort(np.concatenate(
            [tris[kept_idx][:, [0, 1]], tris[kept_idx][:, [1, 2]], tris[kept_idx][:, [2, 0]]]), axis=1), axis=0)
        limited = _limit_gradation(vertex_targets, kept_edges, config.gradation_limit)
        tri_targets = limited[tris].mean(axis=1)

        oversized = sizes > _SIZE_SLACK * tri_targets
        skinny = angles < min_angle
        bad = kept_idx[oversized[kept_idx] | skinny[kept_idx]]
        if len(bad) == 0:
            break

        segment_index = {tuple(sorted(s)): k for k, s in enumerate(segments)}
        seg_mids = mids
        seg_radii = radii
        new_pts: list[np.ndarray] = []
        split_segs: set[int] = set()
        budget_room = config.max_elements - len(kept_idx)
        for t in bad:
            if 2 * len(new_pts) + 2 * len(split_segs) >= budget_room:
                break
            p = tris[t]
            cc = _circumcenter(points[p[0]], points[p[1]], points[p[2]])
            candidate = None
            if cc is not None and np.all(np.isfinite(cc)):
                # a circumcenter that encroaches a boundary segment splits
                # that segment instead (standard Delaunay refinement rule)
                d_seg = np.linalg.norm(seg_mids - cc, axis=1)
                enc = np.flatnonzero(d_seg < seg_radii * (1.0 - 1e-12))
                if len(enc) > 0:
                    split_segs.update(int(e) for e in enc)
                    continue
                if contains_many(geometry, cc[None, :])[0]:
                    candidate = cc
            if candidate is None:
                # fall back to the longest-edge midpoint when the circumcenter
                # is unusable (outside a non-convex region, degenerate, ...)
                le = int(np.argmax(lengths[t]))
                a, b = int(p[le]), int(p[(le + 1) % 3])
                key = (min(a, b), max(a, b))
                if key in segment_index:
                    split_segs.add(segment_index[key])
                    continue
                m = 0.5 * (points[a] + points[b])
                if not contains_many(geometry, m[None, :])[0]:
                    continue
                candidate = m
            spacing = _MIN_SPACING * float(tri_targets[t])
            if new_pts:
                d = np.linalg.norm(np.asarray(new_pts) - candidate, axis=1)
                if d.min() < spacing:
                    continue
            dist, _ = tree.query(candidate)
            if dist < spacing and not skinny[t]:
                continue
            new_pts.append(candidate)

        if not new_pts and not split_segs:
            break
        if split_segs:
            new_segments = []
            for k, (i, j) in enumerate(segments):
                if k in split_segs:
                    m = len(points) + len(new_pts)
                    new_pts.append(0.5 * (points[i] + points[j]))
                    new_segments.extend([(i, m), (m, j)])
                else:
                    new_segments.append((i, j))
            segments = new_segments
        points = np.concatenate([points, np.asarray(new_pts)])

    kept_tris = tris[keep]
    if len(kept_tris) == 0:
        raise MeshGenerationError("no elements inside the geometry")
    if len(kept_tris) > config.max_elements:
        raise MeshGenerationError(
            f"element budget exceeded: {len(kept_tris)} > {config.max_elements}")
    used = np.unique(kept_tris.ravel())
    remap = np.full(len(points), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = points[used]
    tris_final = remap[kept_tris]

    mesh = SimplicialMesh(2, verts, tris_final)
    smoothed = _laplacian_smooth(verts, tris_final, mesh.boundary_flags, sweeps=3)
    return SimplicialMesh(2, smoothed, tris_final)


def uniform_coarse_sizing(geometry: Geometry, target_elements: int = 100) -> float:
    """Uniform sizing aimed at a coarse mesh of roughly target_elements."""
    return math.sqrt(geometry.area() / target_elements * 4.0 / math.sqrt(3.0))


def initial_coarse_mesh(geometry: Geometry, config: GeneratorConfig | None = None) -> SimplicialMesh:
    """Near-uniform starting mesh used by training and inference rollouts."""
    h = uniform_coarse_sizing(geometry)
    return generate_2d(geometry, lambda p: h, config)
