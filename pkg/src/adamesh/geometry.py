"""Polygonal 2D domains (outer boundary plus holes) and procedural samplers.

A :class:`Geometry` is a counterclockwise outer polyline with zero or more
clockwise hole polylines. Points on a boundary count as inside the domain.
The samplers reproduce the procedural dataset families: L-shaped plates with
a Gaussian-mixture load, perforated lattices with a Gaussian-mixture boundary
condition, and elongated beams with circular cutouts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError


def as_rng(seed_or_rng) -> np.random.Generator:
    """Coerce an int seed or an existing Generator into a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def polygon_area(loop: np.ndarray) -> float:
    """Signed shoelace area of a closed polyline (positive = CCW)."""
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """Proper intersection test for two open segments (shared endpoints ok)."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from an (n,2) point array to segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=-1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=-1)


@dataclass(frozen=True)
class Geometry:
    """A polygonal domain: CCW outer boundary minus CW holes.

    Coordinates are float64 in domain units. Polylines are stored open
    (the closing edge last->first is implicit).
    """

    outer: np.ndarray
    holes: tuple = ()

    def __post_init__(self):
        outer = np.asarray(self.outer, dtype=float)
        holes = tuple(np.asarray(h, dtype=float) for h in self.holes)
        object.__setattr__(self, "outer", outer)
        object.__setattr__(self, "holes", holes)
        self._validate()

    def _validate(self):
        if self.outer.ndim != 2 or self.outer.shape[1] != 2 or len(self.outer) < 3:
            raise GeometryError("outer boundary needs >= 3 vertices of shape (n, 2)")
        if polygon_area(self.outer) <= 0:
            raise GeometryError("outer boundary must be counterclockwise")
        for h in self.holes:
            if h.ndim != 2 or h.shape[1] != 2 or len(h) < 3:
                raise GeometryError("every hole needs >= 3 vertices of shape (n, 2)")
            if polygon_area(h) >= 0:
                raise GeometryError("holes must be clockwise")
        if self._self_intersects(self.outer):
            raise GeometryError("outer boundary is self-intersecting")
        for i, h in enumerate(self.holes):
            if self._self_intersects(h):
                raise GeometryError(f"hole {i} is self-intersecting")
            inside = _even_odd_inside(self.outer, (), h)
            if not inside.all():
                raise GeometryError(f"hole {i} is not strictly inside the outer boundary")
        for i in range(len(self.holes)):
            for j in range(i + 1, len(self.holes)):
                if self._loops_touch(self.holes[i], self.holes[j]):
                    raise GeometryError(f"holes {i} and {j} are not disjoint")

    @staticmethod
    def _self_intersects(loop: np.ndarray) -> bool:
        n = len(loop)
        segs = [(loop[k], loop[(k + 1) % n]) for k in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue  # adjacent segments share an endpoint
                if _segments_intersect(*segs[i], *segs[j]):
                    return True
        return False

    @staticmethod
    def _loops_touch(a: np.ndarray, b: np.ndarray) -> bool:
        if (a[:, 0].max() < b[:, 0].min() or b[:, 0].max() < a[:, 0].min()
                or a[:, 1].max() < b[:, 1].min() or b[:, 1].max() < a[:, 1].min()):
            return False
        if _even_odd_inside(b, (), a).any() or _even_odd_inside(a, (), b).any():
            return True
        na, nb = len(a), len(b)
        for i in range(na):
            for j in range(nb):
                if _segments_intersect(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb]):
                    return True
        return False

    @property
    def bounding_box(self) -> np.ndarray:
        """[[xmin, ymin], [xmax, ymax]] of the outer boundary."""
        return np.array([self.outer.min(axis=0), self.outer.max(axis=0)])

    @property
    def loops(self) -> tuple:
        return (self.outer,) + self.holes

    def area(self) -> float:
        return polygon_area(self.outer) + sum(polygon_area(h) for h in self.holes)

    def boundary_segments(self) -> np.ndarray:
        """All boundary segments as an (m, 2, 2) array of endpoint pairs."""
        segs = []
        for loop in self.loops:
            segs.append(np.stack([loop, np.roll(loop, -1, axis=0)], axis=1))
        return np.concatenate(segs, axis=0)

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the nearest boundary segment."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dist = np.full(len(pts), np.inf)
        for a, b in self.boundary_segments():
            np.minimum(dist, _point_segment_distance(pts, a, b), out=dist)
        return dist

    def to_json(self) -> str:
        doc = {"outer": self.outer.tolist(), "holes": [h.tolist() for h in self.holes]}
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Geometry":
        doc = json.loads(text)
        return cls(np.asarray(doc["outer"], dtype=float),
                   tuple(np.asarray(h, dtype=float) for h in doc.get("holes", [])))


def _even_odd_inside(outer: np.ndarray, holes: tuple, points: np.ndarray) -> np.ndarray:
    """Even-odd crossing parity over all loops, boundary not handled."""
    pts = np.atleast_2d(points)
    inside = np.zeros(len(pts), dtype=bool)
    for loop in (outer,) + tuple(holes):
        x1, y1 = loop[:, 0], loop[:, 1]
        x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
        px = pts[:, 0][:, None]
        py = pts[:, 1][:, None]
        straddles = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        hits = straddles & (px < xcross)
        inside ^= hits.sum(axis=1) % 2 == 1
    return inside


def contains(geometry: Geometry, point) -> bool:
    """True iff the point is inside the domain (boundary points included)."""
    return bool(contains_many(geometry, np.asarray(point, dtype=float)[None, :])[0])


def contains_many(geometry: Geometry, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`contains` for an (n, 2) point array."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = geometry.bounding_box
    scale = max(1.0, float(np.linalg.norm(hi - lo)))
    inside = _even_odd_inside(geometry.outer, geometry.holes, pts)
    # Boundary points have ambiguous parity; resolve them explicitly.
    tol = 1e-12 * scale
    near = geometry.boundary_distance(pts) <= tol
    inside[near] = True
    return inside


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted 2D Gaussian mixture with full covariance matrices."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.covariances, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        if not np.isclose(w.sum(), 1.0, atol=1e-9):
            raise GeometryError("mixture weights must sum to 1")
        if mu.shape != (len(w), 2) or cov.shape != (len(w), 2, 2):
            raise GeometryError("mixture shapes inconsistent")
        for c in cov:
            if not np.allclose(c, c.T, atol=1e-12) or np.linalg.eigvalsh(c).min() <= 0:
                raise GeometryError("covariances must be symmetric positive-definite")

    def density(self, points) -> np.ndarray:
        """Mixture pdf evaluated at an (n, 2) array (or a single point)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts))
        for w, mu, cov in zip(self.weights, self.means, self.covariances):
            inv = np.linalg.inv(cov)
            det = np.linalg.det(cov)
            d = pts - mu
            q = np.einsum("ni,ij,nj->n", d, inv, d)
            out += w * np.exp(-0.5 * q) / (2.0 * np.pi * np.sqrt(det))
        return out if np.asarray(points).ndim == 2 else out[0]

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "covariances": self.covariances.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianMixture":
        return cls(np.asarray(doc["weights"]), np.asarray(doc["means"]),
                   np.asarray(doc["covariances"]))


@dataclass(frozen=True)
class ProcessConditions:
    """Optional per-sample physics: a load function or a boundary condition."""

    kind: str = "none"  # none | load_function | dirichlet_boundary
    mixture: GaussianMixture | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("none", "load_function", "dirichlet_boundary"):
            raise GeometryError(f"unknown process-condition kind {self.kind!r}")
        if (self.kind == "none") != (self.mixture is None):
            raise GeometryError("mixture must be present iff kind != none")

    def to_json(self) -> str:
        doc = {"kind": self.kind}
        if self.mixture is not None:
            doc["gmm"] = self.mixture.to_dict()
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "ProcessConditions":
        doc = json.loads(text)
        gmm = GaussianMixture.from_dict(doc["gmm"]) if "gmm" in doc else None
        return cls(doc["kind"], gmm)


def sample_lshape(seed_or_rng) -> Geometry:
    """Unit square minus the [p1,1] x [p2,1] corner, p ~ U(0.2, 0.8)^2."""
    rng = as_rng(seed_or_rng)
    p1, p2 = rng.uniform(0.2, 0.8, size=2)
    outer = np.array([
        [0.0, 0.0], [1.0, 0.0], [1.0, p2], [p1, p2], [p1, 1.0], [0.0, 1.0],
    ])
    return Geometry(outer)


def _random_spd_cov(rng: np.random.Generator, log_low: float, log_high: float) -> np.ndarray:
    diag = np.exp(rng.uniform(np.log(log_low), np.log(log_high), size=2))
    theta = rng.uniform(0.0, 2.0 * np.pi)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag(diag) @ rot.T


def _mixture_weights(rng: np.random.Generator, n: int) -> np.ndarray:
    w = np.exp(rng.normal(size=n)) + 1.0
    return w / w.sum()


def sample_gmm_load(geometry: Geometry, seed_or_rng) -> GaussianMixture:
    """Three-component load mixture with means rejected near the boundary."""
    rng = as_rng(seed_or_rng)
    means = []
    while len(means) < 3:
        m = rng.uniform(0.0, 1.0, size=2)
        if not contains(geometry, m):
            continue
        if geometry.boundary_distance(m[None, :])[0] <= 0.01:
            continue
        means.append(m)
    covs = np.stack([_random_spd_cov(rng, 1e-4, 5e-4) for _ in range(3)])
    return GaussianMixture(_mixture_weights(rng, 3), np.stack(means), covs)


def sample_gmm_dirichlet(seed_or_rng) -> GaussianMixture:
    """Boundary-condition mixture: means in U(0.1, 0.9)^2, broader covariances."""
    rng = as_rng(seed_or_rng)
    means = rng.uniform(0.1, 0.9, size=(3, 2))
    covs = np.stack([_random_spd_cov(rng, 5e-3, 1e-2) for _ in range(3)])
    return GaussianMixture(_mixture_weights(rng, 3), means, covs)


def sample_lattice(seed_or_rng) -> Geometry:
    """Unit square with a uniform k x k grid of square holes."""
    rng = as_rng(seed_or_rng)
    k = int(rng.integers(5, 11))
    side = rng.uniform(0.04, 0.075)
    outer = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    half = side / 2.0
    holes = []
    for j in range(k):
        for i in range(k):
            cx, cy = (i + 0.5) / k, (j + 0.5) / k
            # clockwise square
            holes.append(np.array([
                [cx - half, cy - half], [cx - half, cy + half],
                [cx + half, cy + half], [cx + half, cy - half],
            ]))
    return Geometry(outer, tuple(holes))


def _circle_polyline(center: np.ndarray, radius: float, n: int = 32) -> np.ndarray:
    """Clockwise regular n-gon approximating a circle."""
    angles = -2.0 * np.pi * np.arange(n) / n
    return center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def sample_beam(seed_or_rng, min_thickness: float = 0.001) -> Geometry:
    """Elongated rectangle with sequentially placed interior disk cutouts.

    Disks violating the minimum part thickness (to the rectangle or to an
    already accepted disk) are resampled in place; placement stops once a
    candidate would extend past 90% of the beam length.
    """
    rng = as_rng(seed_or_rng)
    h = rng.normal(0.5, 0.05)
    length = rng.normal(10.0, 1.0)
    outer = np.array([[0.0, 0.0], [length, 0.0], [length, h], [0.0, h]])
    rect_segs = [(outer[i], outer[(i + 1) % 4]) for i in range(4)]

    holes: list[np.ndarray] = []
    x_prev = 0.1 * length
    for _ in range(1000):
        r = rng.uniform(0.25 * h, 2.0 * h)
        x = rng.uniform(x_prev + 1.5 * r, x_prev + 20.0 * r)
        y = rng.uniform(0.0, h)
        if x + r > length - 0.1 * length:
            break
        poly = _circle_polyline(np.array([x, y]), r)
        clear = min(_point_segment_distance(poly, a, b).min() for a, b in rect_segs)
        inside = (poly[:, 0].min() > 0 and poly[:, 0].max() < length
                  and poly[:, 1].min() > 0 and poly[:, 1].max() < h)
        for other in holes:
            n = len(other)
            d_ab = min(_point_segment_distance(poly, other[i], other[(i + 1) % n]).min()
                       for i in range(n))
            d_ba = min(_point_segment_distance(other, poly[i], poly[(i + 1) % 32]).min()
                       for i in range(32))
            clear = min(clear, d_ab, d_ba)
        if inside and clear >= min_thickness:
            holes.append(poly)
            x_prev = x
    return Geometry(outer, tuple(holes))
