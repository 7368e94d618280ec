"""Simplicial meshes (1D segments, 2D triangles) and sizing-field operations.

The mesh is immutable after construction. Derived structures (edge tables,
vertex incidence, spatial lookup grid, nearest-vertex tree) are built lazily
and cached, so all query operations are safe to call concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import MeshError

_BARY_TOL = 1e-12  # containment slack on barycentric coordinates


class SimplicialMesh:
    """Conforming simplicial mesh of dimension 1 or 2.

    Parameters
    ----------
    dimension : 1 or 2
    vertices : (n, d) float array of vertex positions
    elements : (m, d+1) int array; 2D triangles must be counterclockwise
    """

    def __init__(self, dimension: int, vertices, elements):
        if dimension not in (1, 2):
            raise MeshError("dimension must be 1 or 2")
        self.dimension = int(dimension)
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != self.dimension:
            raise MeshError(f"vertices must have shape (n, {self.dimension})")
        if self.elements.ndim != 2 or self.elements.shape[1] != self.dimension + 1:
            raise MeshError(f"elements must have shape (m, {self.dimension + 1})")
        self._cache: dict = {}
        self._validate()

    # ------------------------------------------------------------------
    # construction-time validation

    def _validate(self):
        n, m = len(self.vertices), len(self.elements)
        if m == 0:
            raise MeshError("mesh has no elements")
        if self.elements.min() < 0 or self.elements.max() >= n:
            raise MeshError("element vertex index out of range")
        for k in range(self.dimension + 1):
            for j in range(k + 1, self.dimension + 1):
                if np.any(self.elements[:, k] == self.elements[:, j]):
                    raise MeshError("element with repeated vertex")
        if np.any(self.element_volumes() <= 0.0):
            bad = int(np.argmin(self.element_volumes()))
            raise MeshError(f"element {bad} has non-positive volume "
                            "(2D elements must be counterclockwise)")
        referenced = np.zeros(n, dtype=bool)
        referenced[self.elements.ravel()] = True
        if not referenced.all():
            raise MeshError("unreferenced vertex present")
        if self.dimension == 2:
            edges, counts = np.unique(np.sort(self._directed_edges(), axis=1),
                                      axis=0, return_counts=True)
            if counts.max(initial=0) > 2:
                raise MeshError("non-conforming mesh: edge shared by > 2 elements")
            directed = self._directed_edges()
            _, dcounts = np.unique(directed, axis=0, return_counts=True)
            if dcounts.max(initial=0) > 1:
                raise MeshError("inconsistent orientation: repeated directed edge")
        else:
            if np.any(self.vertices[self.elements[:, 1], 0]
                      <= self.vertices[self.elements[:, 0], 0]):
                raise MeshError("1D elements must be ordered left-to-right")

    def _directed_edges(self) -> np.ndarray:
        e = self.elements
        if self.dimension == 1:
            return e.copy()
        return np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])

    # ------------------------------------------------------------------
    # basic measures

    def element_volumes(self) -> np.ndarray:
        """Length (1D) or triangle area (2D) of every element."""
        if "volumes" not in self._cache:
            p = self.vertices[self.elements]
            if self.dimension == 1:
                vol = p[:, 1, 0] - p[:, 0, 0]
            else:
                a = p[:, 1] - p[:, 0]
                b = p[:, 2] - p[:, 0]
                vol = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
            self._cache["volumes"] = vol
        return self._cache["volumes"]

    def element_sizings(self) -> np.ndarray:
        """Per-element sizing: (V d!/sqrt(d+1))^(1/d) in 2D, spacing in 1D."""
        if "sizings" not in self._cache:
            v = self.element_volumes()
            if self.dimension == 1:
                s = v.copy()
            else:
                s = np.sqrt(v * 2.0 / np.sqrt(3.0))
            self._cache["sizings"] = s
        return self._cache["sizings"]

    @property
    def boundary_flags(self) -> np.ndarray:
        """Per-vertex flag: True if the vertex lies on the mesh boundary."""
        if "boundary_flags" not in self._cache:
            flags = np.zeros(len(self.vertices), dtype=bool)
            if self.dimension == 1:
                idx, counts = np.unique(self.elements.ravel(), return_counts=True)
                flags[idx[counts == 1]] = True
            else:
                edges, first, counts = self._edge_table()
                flags[edges[counts == 1].ravel()] = True
            self._cache["boundary_flags"] = flags
        return self._cache["boundary_flags"]

    def _edge_table(self):
        """Unique undirected edges with counts; 2D only."""
        if "edge_table" not in self._cache:
            directed = self._directed_edges()
            und = np.sort(directed, axis=1)
            edges, first, counts = np.unique(und, axis=0, return_index=True,
                                             return_counts=True)
            self._cache["edge_table"] = (edges, first, counts)
        return self._cache["edge_table"]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (e, 2) sorted-index array."""
        if self.dimension == 1:
            return np.sort(self.elements, axis=1)
        return self._edge_table()[0]

    def edge_elements(self) -> np.ndarray:
        """(e, 2) adjacent element indices per undirected edge, -1 if boundary."""
        if "edge_elements" not in self._cache:
            edges, _, _ = self._edge_table()
            key = {tuple(e): i for i, e in enumerate(edges)}
            adj = np.full((len(edges), 2), -1, dtype=np.int64)
            directed = self._directed_edges()
            owner = np.tile(np.arange(len(self.elements)), 3)
            for (a, b), el in zip(np.sort(directed, axis=1), owner):
                i = key[(a, b)]
                if adj[i, 0] < 0:
                    adj[i, 0] = el
                elif adj[i, 1] < 0:
                    adj[i, 1] = el
            self._cache["edge_elements"] = adj
        return self._cache["edge_elements"]

    def vertex_elements(self) -> list:
        """Per-vertex list of incident element indices."""
        if "vertex_elements" not in self._cache:
            inc = [[] for _ in range(len(self.vertices))]
            for i, el in enumerate(self.elements):
                for v in el:
                    inc[v].append(i)
            self._cache["vertex_elements"] = inc
        return self._cache["vertex_elements"]

    def vertex_neighbors(self) -> list:
        """Per-vertex sorted list of vertices sharing an edge."""
        if "vertex_neighbors" not in self._cache:
            nbr = [set() for _ in range(len(self.vertices))]
            for a, b in self.edges():
                nbr[a].add(b)
                nbr[b].add(a)
            self._cache["vertex_neighbors"] = [sorted(s) for s in nbr]
        return self._cache["vertex_neighbors"]

    # ------------------------------------------------------------------
    # point location

    def _grid(self):
        """Uniform bucket grid mapping cells to candidate elements."""
        if "grid" not in self._cache:
            pts = self.vertices if self.dimension == 2 else np.column_stack(
                [self.vertices[:, 0], np.zeros(len(self.vertices))])
            lo = pts.min(axis=0)
            hi = pts.max(axis=0)
            span = np.maximum(hi - lo, 1e-300)
            m = len(self.elements)
            nx = max(1, int(np.ceil(np.sqrt(m * span[0] / max(span[1], span[0] * 1e-6)))))
            ny = max(1, int(np.ceil(m / nx)))
            if self.dimension == 1:
                ny = 1
            cells: dict = {}
            corners = self.vertices[self.elements]
            if self.dimension == 1:
                corners = np.concatenate(
                    [corners, np.zeros(corners.shape[:2] + (1,))], axis=2)
            for i, quad in enumerate(corners):
                cl = np.floor((quad.min(axis=0) - lo) / span * [nx, ny]).astype(int)
                ch = np.floor((quad.max(axis=0) - lo) / span * [nx, ny]).astype(int)
                cl = np.clip(cl, 0, [nx - 1, ny - 1])
                ch = np.clip(ch, 0, [nx - 1, ny - 1])
                for cx in range(cl[0], ch[0] + 1):
                    for cy in range(cl[1], ch[1] + 1):
                        cells.setdefault((cx, cy), []).append(i)
            self._cache["grid"] = (lo, span, nx, ny, cells)
        return self._cache["grid"]

    def locate(self, point) -> int | None:
        """Index of an element containing the point (lowest index on ties)."""
        p = np.asarray(point, dtype=float).ravel()
        lo, span, nx, ny, cells = self._grid()
        q = p if self.dimension == 2 else np.array([p[0], 0.0])
        c = np.floor((q - lo) / span * [nx, ny]).astype(int)
        if c[0] < 0 or c[0] >= nx or c[1] < 0 or c[1] >= ny:
            return None
        for ei in cells.get((c[0], c[1]), ()):
            if self._element_contains(ei, p):
                return ei
        return None

    def _element_contains(self, ei: int, p: np.ndarray) -> bool:
        lam = self.barycentric(ei, p)
        return bool(lam.min() >= -_BARY_TOL)

    def barycentric(self, ei: int, p: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of p in element ei (sum to 1)."""
        vs = self.vertices[self.elements[ei]]
        if self.dimension == 1:
            a, b = vs[0, 0], vs[1, 0]
            t = (p[0] - a) / (b - a)
            return np.array([1.0 - t, t])
        a, b, c = vs
        den = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        l1 = ((b[0] - p[0]) * (c[1] - p[1]) - (b[1] - p[1]) * (c[0] - p[0])) / den
        l2 = ((c[0] - p[0]) * (a[1] - p[1]) - (c[1] - p[1]) * (a[0] - p[0])) / den
        return np.array([l1, l2, 1.0 - l1 - l2])

    def _vertex_tree(self) -> cKDTree:
        if "vtree" not in self._cache:
            self._cache["vtree"] = cKDTree(self.vertices)
        return self._cache["vtree"]

    def _centroid_tree(self) -> cKDTree:
        if "ctree" not in self._cache:
            self._cache["ctree"] = cKDTree(self.element_centroids())
        return self._cache["ctree"]

    def element_centroids(self) -> np.ndarray:
        if "centroids" not in self._cache:
            self._cache["centroids"] = self.vertices[self.elements].mean(axis=1)
        return self._cache["centroids"]

    def nearest_vertex(self, point) -> int:
        _, idx = self._vertex_tree().query(np.asarray(point, dtype=float))
        return int(idx)


@dataclass(frozen=True)
class DiscreteSizingField:
    """Positive target edge length per vertex of a carrier mesh."""

    carrier: SimplicialMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if len(vals) != len(self.carrier.vertices):
            raise MeshError("sizing values must match vertex count")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise MeshError("sizing values must be positive and finite")

    def __call__(self, point) -> float:
        return interpolate(self, point)


@dataclass(frozen=True)
class ElementSizingField:
    """Positive sizing per element of a carrier mesh."""

    carrier: SimplicialMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if len(vals) != len(self.carrier.elements):
            raise MeshError("sizing values must match element count")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise MeshError("sizing values must be positive and finite")


def element_volume(mesh: SimplicialMesh, element_index: int) -> float:
    """Length (1D) or area (2D) of one element."""
    if not 0 <= element_index < len(mesh.elements):
        raise MeshError(f"element index {element_index} out of range")
    return float(mesh.element_volumes()[element_index])


def element_sizing(mesh: SimplicialMesh, element_index: int) -> float:
    """Sizing of one element: (V d!/sqrt(d+1))^(1/d) in 2D, spacing in 1D."""
    if not 0 <= element_index < len(mesh.elements):
        raise MeshError(f"element index {element_index} out of range")
    return float(mesh.element_sizings()[element_index])


def element_sizing_field(mesh: SimplicialMesh) -> ElementSizingField:
    return ElementSizingField(mesh, mesh.element_sizings())


def vertex_sizing(mesh: SimplicialMesh) -> DiscreteSizingField:
    """Volume-weighted average of incident element sizings, per vertex."""
    vol = mesh.element_volumes()
    siz = mesh.element_sizings()
    num = np.zeros(len(mesh.vertices))
    den = np.zeros(len(mesh.vertices))
    for k in range(mesh.dimension + 1):
        np.add.at(num, mesh.elements[:, k], vol * siz)
        np.add.at(den, mesh.elements[:, k], vol)
    if np.any(den == 0.0):
        raise MeshError("vertex without incident element")
    return DiscreteSizingField(mesh, num / den)


def locate(mesh: SimplicialMesh, point) -> int | None:
    """Containing element index (boundary-inclusive), or None."""
    return mesh.locate(point)


def interpolate(field: DiscreteSizingField, point) -> float:
    """Piecewise-linear interpolation with nearest-vertex extrapolation."""
    mesh = field.carrier
    p = np.asarray(point, dtype=float).ravel()
    ei = mesh.locate(p)
    if ei is None:
        return float(field.values[mesh.nearest_vertex(p)])
    lam = mesh.barycentric(ei, p)
    return float(lam @ field.values[mesh.elements[ei]])


def interpolate_many(field: DiscreteSizingField, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`interpolate` over an (n, d) point array."""
    mesh = field.carrier
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts))
    misses = []
    for i, p in enumerate(pts):
        ei = mesh.locate(p)
        if ei is None:
            misses.append(i)
        else:
            lam = mesh.barycentric(ei, p)
            out[i] = lam @ field.values[mesh.elements[ei]]
    if misses:
        q = pts[misses] if mesh.dimension == 2 else pts[misses][:, :1]
        _, idx = mesh._vertex_tree().query(q)
        out[misses] = field.values[np.atleast_1d(idx)]
    return out


def project_labels(intermediate: SimplicialMesh, expert: SimplicialMesh) -> np.ndarray:
    """Expert element sizing at each intermediate vertex position.

    Vertices covered by the expert mesh take the sizing of the containing
    element; vertices outside it take the sizing of the expert element with
    the nearest centroid.
    """
    if intermediate.dimension != expert.dimension:
        raise MeshError("meshes must share a dimension")
    sizing = expert.element_sizings()
    out = np.empty(len(intermediate.vertices))
    misses = []
    for i, p in enumerate(intermediate.vertices):
        ei = expert.locate(p)
        if ei is None:
            misses.append(i)
        else:
            out[i] = sizing[ei]
    if misses:
        _, idx = expert._centroid_tree().query(intermediate.vertices[misses])
        out[misses] = sizing[np.atleast_1d(idx)]
    return out


def boundary_edge_orientation(mesh: SimplicialMesh) -> dict:
    """Boundary edges directed so the domain lies on their left side.

    Returns {(min,max) vertex pair: (tail, head)} for every boundary edge.
    """
    edges, _, counts = mesh._edge_table()
    boundary = {tuple(e) for e in edges[counts == 1]}
    oriented = {}
    for el in mesh.elements:
        for a, b in ((el[0], el[1]), (el[1], el[2]), (el[2], el[0])):
            key = (min(a, b), max(a, b))
            if key in boundary:
                oriented[key] = (int(a), int(b))
    return oriented


def boundary_normals_and_curvature(mesh: SimplicialMesh) -> np.ndarray:
    """Signed curvature per undirected edge, aligned with ``mesh.edges()``.

    Boundary edges get the signed angle (scaled by pi into [-1, 1]) between
    the averaged outward normals at their endpoints; positive at convex
    corners of the domain. Interior edges get 0.
    """
    if mesh.dimension != 2:
        raise MeshError("curvature is defined for 2D meshes")
    if "curvature" in mesh._cache:
        return mesh._cache["curvature"]
    edges = mesh.edges()
    oriented = boundary_edge_orientation(mesh)
    normals = np.zeros((len(mesh.vertices), 2))
    for (a, b) in oriented.values():
        d = mesh.vertices[b] - mesh.vertices[a]
        n = np.array([d[1], -d[0]])
        norm = np.linalg.norm(n)
        if norm > 0:
            normals[a] += n / norm
            normals[b] += n / norm
    lengths = np.linalg.norm(normals, axis=1)
    nz = lengths > 0
    normals[nz] /= lengths[nz][:, None]
    out = np.zeros(len(edges))
    index = {tuple(e): i for i, e in enumerate(edges)}
    for key, (a, b) in oriented.items():
        na, nb = normals[a], normals[b]
        angle = np.arctan2(na[0] * nb[1] - na[1] * nb[0], na @ nb)
        out[index[key]] = angle / np.pi
    mesh._cache["curvature"] = out
    return out


# ----------------------------------------------------------------------
# construction helpers and serialization

def structured_unit_square(n: int) -> SimplicialMesh:
    """Uniform right-triangle mesh of [0,1]^2 with n x n cells."""
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            tris.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
            tris.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return SimplicialMesh(2, verts, np.asarray(tris))


def interval_mesh(points: np.ndarray) -> SimplicialMesh:
    """1D mesh from sorted breakpoints."""
    pts = np.asarray(points, dtype=float).ravel()
    elems = np.column_stack([np.arange(len(pts) - 1), np.arange(1, len(pts))])
    return SimplicialMesh(1, pts[:, None], elems)


def mesh_to_json(mesh: SimplicialMesh) -> str:
    return json.dumps({
        "dim": mesh.dimension,
        "vertices": mesh.vertices.tolist(),
        "elements": mesh.elements.tolist(),
    })


def mesh_from_json(text: str) -> SimplicialMesh:
    doc = json.loads(text)
    return SimplicialMesh(doc["dim"], np.asarray(doc["vertices"], dtype=float),
                          np.asarray(doc["elements"], dtype=np.int64))


def mesh_to_msh(mesh: SimplicialMesh) -> str:
    """Gmsh MSH 2.2 ASCII export (triangles or lines)."""
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes",
             str(len(mesh.vertices))]
    for i, v in enumerate(mesh.vertices, start=1):
        x = v[0]
        y = v[1] if mesh.dimension == 2 else 0.0
        lines.append(f"{i} {x:.16g} {y:.16g} 0")
    lines += ["$EndNodes", "$Elements", str(len(mesh.elements))]
    etype = 2 if mesh.dimension == 2 else 1
    for i, el in enumerate(mesh.elements, start=1):
        ids = " ".join(str(v + 1) for v in el)
        lines.append(f"{i} {etype} 2 0 0 {ids}")
    lines.append("$EndElements")
    return "\n".join(lines) + "\n"
