"""Geometric core: labeled convex polyhedra, mirror reflection, ray casting.

Everything is float64 with explicit tolerances (no exact arithmetic kernel).
Hits that land too close to an edge or vertex are classified conservatively,
so callers can treat them as singular instead of silently continuing along
an unreliable orbit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class NonConvex(Exception):
    """Some vertex lies strictly outside a face plane."""


class OpenSurface(Exception):
    """An edge is not shared by exactly two faces."""


class DegenerateFace(Exception):
    """A face polygon is collinear, non-convex as a polygon, or non-planar."""


class NoAdvance(Exception):
    """Ray direction does not advance into the interior from its start point."""


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used throughout the library.

    plane : point-on-plane and edge/vertex hit classification
    norm  : unit-vector check
    step  : minimum ray advance before a boundary hit counts
    angle : tangency threshold on <theta, normal>
    sing  : near-singular flag radius around edges (non-terminal)
    den   : smallest denominator accepted in rational constraints
    surf  : surface-membership residual threshold
    deg   : polygon degeneracy threshold (point/segment/area separation)
    """

    plane: float = 1e-9
    norm: float = 1e-12
    step: float = 1e-9
    angle: float = 1e-9
    sing: float = 1e-7
    den: float = 1e-10
    surf: float = 1e-8
    deg: float = 1e-8


DEFAULT_TOL = Tolerances()


# ---------------------------------------------------------------------------
# small vector helpers
# ---------------------------------------------------------------------------

def vec3(x) -> np.ndarray:
    if isinstance(x, np.ndarray) and x.dtype == np.float64 and x.shape == (3,):
        return x
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite coordinates")
    return v


def unit(v, tol: float = 1e-12) -> np.ndarray:
    """Normalize ``v``; raise if it is numerically zero."""
    v = vec3(v)
    n = float(np.linalg.norm(v))
    if n <= tol:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def point_line_distance(q, p, x) -> float:
    """Distance from point ``q`` to the line through ``p`` with unit direction ``x``."""
    w = np.asarray(q, float) - p
    return float(np.linalg.norm(w - (w @ x) * x))


def point_segment_distance(q, a, b) -> float:
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return float(np.linalg.norm(q - a))
    t = np.clip(float((q - a) @ ab) / L2, 0.0, 1.0)
    return float(np.linalg.norm(q - (a + t * ab)))


def line_line_distance(p1, x1, p2, x2) -> float:
    """Distance between two (infinite) lines given by point + unit direction."""
    n = np.cross(x1, x2)
    nn = float(np.linalg.norm(n))
    if nn < 1e-14:
        return point_line_distance(p2, p1, x1)
    return abs(float((p2 - p1) @ n)) / nn


def segment_segment_distance(p1, q1, p2, q2) -> float:
    """Distance between segments [p1,q1] and [p2,q2] (clamped closest points)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    if a <= 1e-30 and e <= 1e-30:
        return float(np.linalg.norm(r))
    if a <= 1e-30:
        t = np.clip(f / e, 0.0, 1.0)
        return float(np.linalg.norm(p1 - (p2 + t * d2)))
    c = float(d1 @ r)
    if e <= 1e-30:
        s = np.clip(-c / a, 0.0, 1.0)
        return float(np.linalg.norm(p1 + s * d1 - p2))
    b = float(d1 @ d2)
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-30 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t = 1.0
        s = np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm(p1 + s * d1 - (p2 + t * d2)))


def _newell_normal(pts: np.ndarray) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    n = np.array([
        np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
        np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
        np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
    ])
    return n


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Plane:
    """Oriented plane {x : <normal, x> + offset = 0} with unit normal."""

    normal: np.ndarray
    offset: float

    def signed(self, pts) -> np.ndarray:
        return np.asarray(pts, float) @ self.normal + self.offset


@dataclass(frozen=True)
class Face:
    """Labeled convex boundary polygon; ``plane.normal`` points into the solid."""

    label: str
    plane: Plane
    boundary: tuple[int, ...]


@dataclass(frozen=True)
class Edge:
    endpoints: tuple[int, int]
    point: np.ndarray          # one endpoint
    direction: np.ndarray      # unit, along the edge
    faces: tuple[int, int]     # the two incident face ids


class Polyhedron:
    """Immutable convex polyhedron with labeled faces and derived edges.

    Construct through :func:`validate` (or the solid builders below), never
    directly; the constructor trusts its inputs.  All query methods are pure,
    so instances are safe to share across threads.
    """

    def __init__(self, vertices: np.ndarray, faces: list[Face],
                 edges: list[Edge], tol: Tolerances):
        self.vertices = vertices
        self.faces = faces
        self.edges = edges
        self.tol = tol
        self.normals = np.array([f.plane.normal for f in faces])
        self.offsets = np.array([f.plane.offset for f in faces])
        self.labels = [f.label for f in faces]
        self._label_index = {f.label: i for i, f in enumerate(faces)}
        self._face_edges: list[list[int]] = [[] for _ in faces]
        for e_id, e in enumerate(edges):
            for f in e.faces:
                self._face_edges[f].append(e_id)
        self._face_polys = [vertices[list(f.boundary)] for f in faces]
        self._edge_cache: dict | None = None

    # -- queries ------------------------------------------------------------

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_index(self, label: str) -> int:
        try:
            return self._label_index[label]
        except KeyError:
            raise KeyError(f"unknown face label {label!r}") from None

    def face_polygon(self, f: int) -> np.ndarray:
        return self._face_polys[f]

    def face_edge_ids(self, f: int) -> list[int]:
        return self._face_edges[f]

    def interior_point(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def signed_distances(self, pts) -> np.ndarray:
        """Signed distances to all face planes; >= 0 everywhere iff inside."""
        return np.asarray(pts, float) @ self.normals.T + self.offsets

    def contains(self, p, slack: float | None = None) -> bool:
        slack = self.tol.plane if slack is None else slack
        return bool(self.signed_distances(p).min() >= -slack)

    def point_in_face(self, f: int, q, slack: float | None = None) -> bool:
        """Is ``q`` (assumed on the face plane) inside the face polygon?"""
        slack = self.tol.plane if slack is None else slack
        poly = self.face_polygon(f)
        n = self.faces[f].plane.normal
        nxt = np.roll(poly, -1, axis=0)
        side = np.cross(n, nxt - poly)          # points into the polygon
        rel = np.asarray(q, float) - poly
        return bool(np.all(np.einsum("ij,ij->i", rel, side) >= -slack * np.linalg.norm(side, axis=1)))

    def face_boundary_distance(self, f: int, q) -> float:
        """Distance from ``q`` to the nearest boundary edge of face ``f``."""
        poly = self.face_polygon(f)
        nxt = np.roll(poly, -1, axis=0)
        return _min_segment_distance(np.asarray(q, float), poly, nxt)

    def face_frame(self, f: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (t1, t2, n) with n the inward face normal."""
        n = self.faces[f].plane.normal
        a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        t1 = unit(np.cross(n, a))
        t2 = np.cross(n, t1)
        return t1, t2, n

    def with_tolerances(self, tol: Tolerances) -> "Polyhedron":
        return Polyhedron(self.vertices, self.faces, self.edges, tol)


def _min_segment_distance(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Min distance from point(s) ``q`` to segments with endpoints rows of a, b."""
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", q - a, ab) / np.maximum(L2, 1e-300), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.linalg.norm(q - closest, axis=1).min())


def edge_arrays(P: Polyhedron) -> dict:
    """Per-face padded edge arrays for vectorized segment distances.

    Keys: start points ``A`` (F, Emax, 3; pads far away), unit directions
    ``U``, lengths ``L``, and edge ids ``ids`` (-1 pads).
    """
    if P._edge_cache is None:
        F = P.n_faces
        e_max = max(len(P.face_edge_ids(f)) for f in range(F))
        A = np.full((F, e_max, 3), 1e30)
        U = np.zeros((F, e_max, 3))
        L = np.zeros((F, e_max))
        ids = np.full((F, e_max), -1, dtype=np.int64)
        for f in range(F):
            for k, e_id in enumerate(P.face_edge_ids(f)):
                i, j = P.edges[e_id].endpoints
                seg = P.vertices[j] - P.vertices[i]
                ln = float(np.linalg.norm(seg))
                A[f, k], U[f, k], L[f, k], ids[f, k] = P.vertices[i], seg / ln, ln, e_id
        P._edge_cache = {"A": A, "U": U, "L": L, "ids": ids}
    return P._edge_cache


# ---------------------------------------------------------------------------
# validation and file format
# ---------------------------------------------------------------------------

def validate(vertices, faces, tol: Tolerances | None = None) -> Polyhedron:
    """Build a :class:`Polyhedron` from raw vertex and face lists.

    ``faces`` entries are ``{"label": str, "vertices": [i, ...]}`` dicts or
    ``(label, indices)`` pairs; vertex indices are 0-based and each polygon
    must be convex and planar.  Normals are oriented inward and the derived
    edge table requires every edge to be shared by exactly two faces.
    """
    tol = tol or DEFAULT_TOL
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2 or V.shape[1] != 3:
        raise ValueError("vertices must be an (N, 3) array")
    if not np.all(np.isfinite(V)):
        raise ValueError("vertex coordinates must be finite")
    if len(V) < 4:
        raise ValueError("a solid needs at least 4 vertices")

    face_specs: list[tuple[str, list[int]]] = []
    for fs in faces:
        if isinstance(fs, dict):
            label, idx = fs["label"], fs["vertices"]
        else:
            label, idx = fs
        idx = [int(i) for i in idx]
        if len(idx) < 3:
            raise ValueError(f"face {label!r} has fewer than 3 vertices")
        if len(set(idx)) != len(idx):
            raise ValueError(f"face {label!r} repeats a vertex")
        if min(idx) < 0 or max(idx) >= len(V):
            raise ValueError(f"face {label!r} has an out-of-range vertex index")
        face_specs.append((str(label), idx))
    if len(face_specs) < 4:
        raise ValueError("a solid needs at least 4 faces")
    labels = [lab for lab, _ in face_specs]
    if any(not lab for lab in labels) or len(set(labels)) != len(labels):
        raise ValueError("face labels must be distinct non-empty strings")

    centroid = V.mean(axis=0)
    planes: list[Plane] = []
    boundaries: list[list[int]] = []
    for label, idx in face_specs:
        pts = V[idx]
        n = _newell_normal(pts)
        nn = float(np.linalg.norm(n))
        if nn <= 1e-12 * max(1.0, float(np.abs(pts).max()) ** 2):
            raise DegenerateFace(f"face {label!r} is collinear")
        n = n / nn
        c = -float(n @ pts.mean(axis=0))
        if float(n @ centroid) + c < 0.0:
            n, c = -n, -c
            idx = idx[::-1]
        planes.append(Plane(n, c))
        boundaries.append(idx)

    # convexity first: a vertex pushed past another face's plane must report
    # NonConvex even though it also warps its own faces out of planarity
    for (label, _), pl in zip(face_specs, planes):
        d = V @ pl.normal + pl.offset
        worst = float(d.min())
        if worst < -tol.plane:
            raise NonConvex(
                f"vertex {int(d.argmin())} lies {-worst:.3g} outside face {label!r}")

    face_objs: list[Face] = []
    for (label, _), pl, idx in zip(face_specs, planes, boundaries):
        pts = V[idx]
        dev = float(np.abs(pl.signed(pts)).max())
        if dev > max(tol.plane, 1e-12 * max(1.0, float(np.abs(pts).max()))):
            raise DegenerateFace(f"face {label!r} is not planar (deviation {dev:.3g})")
        edges_v = np.roll(pts, -1, axis=0) - pts
        turns = np.cross(edges_v, np.roll(edges_v, -1, axis=0)) @ pl.normal
        if np.any(turns < -tol.plane):
            raise DegenerateFace(f"face {label!r} polygon is not convex")
        face_objs.append(Face(label, pl, tuple(idx)))

    edge_map: dict[tuple[int, int], list[int]] = {}
    for f, face in enumerate(face_objs):
        idx = face.boundary
        for a in range(len(idx)):
            i, j = idx[a], idx[(a + 1) % len(idx)]
            edge_map.setdefault((min(i, j), max(i, j)), []).append(f)
    edges: list[Edge] = []
    for (i, j), fs in sorted(edge_map.items()):
        if len(fs) != 2:
            raise OpenSurface(f"edge ({i},{j}) belongs to {len(fs)} faces, expected 2")
        edges.append(Edge((i, j), V[i].copy(), unit(V[j] - V[i]), (fs[0], fs[1])))

    V.setflags(write=False)
    return Polyhedron(V, face_objs, edges, tol)


def load_polyhedron(source, tol: Tolerances | None = None) -> Polyhedron:
    """Load the JSON polyhedron format.

    ``{"vertices": [[x,y,z],...], "faces": [{"label": "a", "vertices": [...]}]}``
    with 0-based indices.  ``source`` may be a path, a JSON string, or an
    already-parsed dict.
    """
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        try:
            path = Path(text)
            if path.exists():
                text = path.read_text()
        except OSError:
            pass  # not a usable path; treat as raw JSON
        data = json.loads(text)
    if not isinstance(data, dict) or "vertices" not in data or "faces" not in data:
        raise ValueError("polyhedron JSON needs 'vertices' and 'faces' keys")
    return validate(data["vertices"], data["faces"], tol=tol)


def dump_polyhedron(P: Polyhedron) -> dict:
    """Inverse of :func:`load_polyhedron`; polygons counter-clockwise from outside."""
    return {
        "vertices": [list(map(float, v)) for v in P.vertices],
        "faces": [
            {"label": f.label, "vertices": [int(i) for i in f.boundary[::-1]]}
            for f in P.faces
        ],
    }


# ---------------------------------------------------------------------------
# reflection and ray casting
# ---------------------------------------------------------------------------

def reflect_direction(theta, face: Face) -> np.ndarray:
    """Mirror a direction across a face plane: theta - 2 <theta, n> n."""
    theta = np.asarray(theta, float)
    n = face.plane.normal
    return theta - 2.0 * float(theta @ n) * n


class HitKind(Enum):
    FACE = "face"
    EDGE = "edge"
    VERTEX = "vertex"
    TANGENT = "tangent"


@dataclass(frozen=True)
class Hit:
    """First boundary intersection of a ray with the polyhedron surface.

    ``edge_distance`` is the distance from the hit point to the nearest
    boundary edge of the hit face (finite for FACE hits), used by callers to
    flag unreliable near-edge passages.
    """

    kind: HitKind
    point: np.ndarray
    length: float
    face: int | None = None
    edge: int | None = None
    vertex: int | None = None
    edge_distance: float = float("inf")


def cast_ray(m, theta, P: Polyhedron) -> Hit:
    """First boundary hit of the ray ``m + t * theta`` (t > step tolerance).

    ``m`` must be on the boundary or inside.  Raises :class:`NoAdvance` when
    theta points out of the solid, or is tangent to a face whose interior
    contains ``m`` (no forward motion into the interior is possible).  A ray
    contained in a face plane but starting on that face's boundary is returned
    as a TANGENT hit.
    """
    m = vec3(m)
    theta = vec3(theta)
    tol = P.tol
    s = P.signed_distances(m)
    if float(s.min()) < -10 * tol.plane:
        raise ValueError("ray start point lies outside the polyhedron")
    d = P.normals @ theta

    containing = np.flatnonzero(np.abs(s) <= tol.plane)
    for f in containing:
        if d[f] < -tol.angle:
            raise NoAdvance(f"direction points outside through face {P.labels[f]!r}")
    tangent = [int(f) for f in containing if abs(d[f]) <= tol.angle]
    if tangent:
        f = tangent[0]
        if P.face_boundary_distance(f, m) > tol.plane and P.point_in_face(f, m):
            raise NoAdvance(f"direction is tangent to face {P.labels[f]!r} at an interior start")
        return _tangent_hit(m, theta, f, P)

    return first_hit(m, theta, P, s=s, d=d)


def first_hit(m, theta, P: Polyhedron, s=None, d=None) -> Hit:
    """First boundary hit without start-point admissibility checks.

    Hot-path core of :func:`cast_ray`; callers must already know the ray
    advances into the interior (the orbit iterator checks this itself).
    """
    tol = P.tol
    if s is None:
        s = P.signed_distances(m)
    if d is None:
        d = P.normals @ theta
    t = np.full(len(d), np.inf)
    np.divide(s, -d, out=t, where=d < -tol.angle)
    t[t <= tol.step] = np.inf
    f = int(np.argmin(t))
    tf = float(t[f])
    if not np.isfinite(tf):
        raise NoAdvance("ray does not reach the boundary")
    q = m + tf * theta

    verts = P.face_polygon(f)
    diff = verts - q
    vdist2 = np.einsum("ij,ij->i", diff, diff)
    v_local = int(vdist2.argmin())
    if vdist2[v_local] <= tol.plane * tol.plane:
        return Hit(HitKind.VERTEX, q, tf, face=f,
                   vertex=int(P.faces[f].boundary[v_local]), edge_distance=0.0)
    ea = edge_arrays(P)
    A, U, L, ids = ea["A"][f], ea["U"][f], ea["L"][f], ea["ids"][f]
    w = q - A
    tt = np.clip(np.einsum("ej,ej->e", w, U), 0.0, L)
    dvec = w - tt[:, None] * U
    ed2 = np.einsum("ej,ej->e", dvec, dvec)
    k = int(ed2.argmin())
    edist = float(np.sqrt(ed2[k]))
    if edist <= tol.plane:
        return Hit(HitKind.EDGE, q, tf, face=f, edge=int(ids[k]), edge_distance=edist)
    return Hit(HitKind.FACE, q, tf, face=f, edge_distance=edist)


def _tangent_hit(m, theta, f: int, P: Polyhedron) -> Hit:
    # ray runs inside the face plane; exit through the polygon boundary
    poly = P.face_polygon(f)
    n = P.faces[f].plane.normal
    nxt = np.roll(poly, -1, axis=0)
    side = np.cross(n, nxt - poly)
    adv = side @ theta
    s = np.einsum("ij,ij->i", poly - m, side)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(adv < -1e-15, s / adv, np.inf)
    t[t <= P.tol.step] = np.inf
    tf = float(t.min()) if np.isfinite(t.min()) else 0.0
    return Hit(HitKind.TANGENT, m + tf * theta, tf, face=f, edge_distance=0.0)


# ---------------------------------------------------------------------------
# canonical solids
# ---------------------------------------------------------------------------

def box(ax: float, ay: float, az: float, tol: Tolerances | None = None) -> Polyhedron:
    """Axis-aligned box [0,ax] x [0,ay] x [0,az] with faces x0,x1,y0,y1,z0,z1."""
    vs = [(x, y, z) for z in (0.0, az) for y in (0.0, ay) for x in (0.0, ax)]
    # index: x + 2*y + 4*z over {0,1}^3 scaled
    faces = [
        ("x0", [0, 4, 6, 2]),
        ("x1", [1, 3, 7, 5]),
        ("y0", [0, 1, 5, 4]),
        ("y1", [2, 6, 7, 3]),
        ("z0", [0, 2, 3, 1]),
        ("z1", [4, 5, 7, 6]),
    ]
    return validate(vs, faces, tol=tol)


def unit_cube(tol: Tolerances | None = None) -> Polyhedron:
    return box(1.0, 1.0, 1.0, tol=tol)


def regular_tetrahedron(tol: Tolerances | None = None) -> Polyhedron:
    vs = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    faces = [
        ("a", [1, 2, 3]),
        ("b", [0, 3, 2]),
        ("c", [0, 1, 3]),
        ("d", [0, 2, 1]),
    ]
    return validate(vs, faces, tol=tol)
