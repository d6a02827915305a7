"""The billiard map on the boundary phase space, with singularity tracking.

A phase point is a boundary point plus an inward unit direction.  One step
casts the forward ray, reflects at the hit face, and refuses to continue when
the ray meets an edge or vertex or runs inside a face: the map is only
defined away from those singular lines, and no continuation convention is
invented for them.  Orbits additionally flag bounces that pass suspiciously
close to an edge so downstream statistics can discard unreliable words.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (Hit, HitKind, NoAdvance, Polyhedron, edge_arrays,
                       first_hit, point_segment_distance, reflect_direction,
                       segment_segment_distance, unit, vec3)
from .transversal import EdgeLine
from .unfolding import Isometry, cumulative_isometries


class SingularInput(Exception):
    """The step was asked to continue an orbit that leaves the phase space."""


class EmptyReport(Exception):
    """No discontinuities were found along the orbit."""


@dataclass(frozen=True)
class PhasePoint:
    """Boundary point ``m`` on face ``face`` with inward unit direction ``theta``."""

    face: int
    m: np.ndarray
    theta: np.ndarray


def phase_point(P: Polyhedron, m, theta, face: int | str | None = None) -> PhasePoint:
    """Validated phase point; the face is located from ``m`` when omitted."""
    m = vec3(m)
    theta = unit(theta)
    if face is None:
        s = np.abs(P.signed_distances(m))
        cands = [f for f in np.flatnonzero(s <= P.tol.plane)
                 if P.point_in_face(int(f), m)]
        if not cands:
            raise ValueError("point does not lie on any face")
        face = int(cands[0])
    elif isinstance(face, str):
        face = P.face_index(face)
    if abs(float(P.faces[face].plane.signed(m))) > 10 * P.tol.plane:
        raise ValueError("point does not lie on the given face plane")
    if float(theta @ P.normals[face]) <= 0.0:
        raise ValueError("direction does not point into the interior")
    return PhasePoint(face, m, theta)


class SingularityKind(Enum):
    EDGE_HIT = "edge-hit"
    VERTEX_HIT = "vertex-hit"
    TANGENT_IN_FACE = "tangent-in-face"


@dataclass(frozen=True)
class SingularityEvent:
    """Where and how an orbit left the phase space.

    For edge hits the offending edge is also given in unfolded coordinates
    (point and unit direction after applying the cumulative unfolding
    isometry of the step), ready for transversal analysis.
    """

    kind: SingularityKind
    step: int
    point: np.ndarray
    edge: int | None = None
    vertex: int | None = None
    face: int | None = None
    unfolded_point: np.ndarray | None = None
    unfolded_direction: np.ndarray | None = None


@dataclass
class OrbitRecord:
    """A coded orbit: visited phase points, their face-label word, terminal state."""

    initial: PhasePoint
    points: list[PhasePoint]
    word: list[str]
    singularity: SingularityEvent | None = None
    near_singular_steps: list[int] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.singularity is None

    @property
    def n_bounces(self) -> int:
        return len(self.points)

    def positions(self) -> np.ndarray:
        return np.array([p.m for p in self.points])


def _edge_start_event(x: PhasePoint, P: Polyhedron) -> SingularityEvent | None:
    """Starts sitting on an edge of their own face are rejected as singular
    (the map has no continuation convention there)."""
    if P.face_boundary_distance(x.face, x.m) > P.tol.plane:
        return None
    e_ids = P.face_edge_ids(x.face)
    dists = [point_segment_distance(x.m, P.vertices[P.edges[e].endpoints[0]],
                                    P.vertices[P.edges[e].endpoints[1]])
             for e in e_ids]
    k = int(np.argmin(dists))
    return SingularityEvent(SingularityKind.EDGE_HIT, 0, x.m.copy(),
                            edge=e_ids[k], face=x.face)


def _advance(x: PhasePoint, P: Polyhedron) -> tuple[Hit | None, SingularityEvent | None]:
    """Cast the forward ray of ``x``; singular outcomes come back as events.

    Assumes ``x.m`` lies strictly inside its face polygon (entry points are
    vetted by :func:`_edge_start_event`; points minted by the loop satisfy it
    by construction).
    """
    if float(x.theta @ P.normals[x.face]) <= P.tol.angle:
        return None, SingularityEvent(SingularityKind.TANGENT_IN_FACE, 0,
                                      x.m.copy(), face=x.face)
    try:
        hit = first_hit(x.m, x.theta, P)
    except NoAdvance:
        return None, SingularityEvent(SingularityKind.TANGENT_IN_FACE, 0,
                                      x.m.copy(), face=x.face)
    if hit.kind is HitKind.FACE:
        return hit, None
    if hit.kind is HitKind.EDGE:
        return hit, SingularityEvent(SingularityKind.EDGE_HIT, 0, hit.point,
                                     edge=hit.edge, face=hit.face)
    if hit.kind is HitKind.VERTEX:
        return hit, SingularityEvent(SingularityKind.VERTEX_HIT, 0, hit.point,
                                     vertex=hit.vertex, face=hit.face)
    return hit, SingularityEvent(SingularityKind.TANGENT_IN_FACE, 0, hit.point,
                                 face=hit.face)


def _finalize(event: SingularityEvent, step: int, iso: Isometry,
              P: Polyhedron) -> SingularityEvent:
    up = ud = None
    if event.kind is SingularityKind.EDGE_HIT and event.edge is not None:
        e = P.edges[event.edge]
        up = iso.apply(e.point)
        ud = iso.apply_direction(e.direction)
    elif event.kind is SingularityKind.VERTEX_HIT and event.vertex is not None:
        up = iso.apply(P.vertices[event.vertex])
    return SingularityEvent(event.kind, step, event.point, edge=event.edge,
                            vertex=event.vertex, face=event.face,
                            unfolded_point=up, unfolded_direction=ud)


def classify_phase_point(x: PhasePoint, P: Polyhedron) -> SingularityEvent | None:
    """``None`` when the forward ray lands transversally inside a face,
    otherwise the singularity event (edge, vertex, or in-face tangency)."""
    event = _edge_start_event(x, P)
    if event is None:
        _, event = _advance(x, P)
    if event is None:
        return None
    return _finalize(event, 0, Isometry.identity(), P)


def billiard_step(x: PhasePoint, P: Polyhedron) -> PhasePoint:
    """One application of the billiard map.  Raises :class:`SingularInput`
    instead of stepping through an edge, vertex, or tangency."""
    event = _edge_start_event(x, P)
    if event is None:
        hit, event = _advance(x, P)
    if event is not None:
        raise SingularInput(f"singular phase point: {event.kind.value}")
    theta2 = reflect_direction(x.theta, P.faces[hit.face])
    return PhasePoint(hit.face, hit.point, theta2)


def orbit(x: PhasePoint, n_max: int, P: Polyhedron) -> OrbitRecord:
    """Iterate the map until ``n_max`` bounces are recorded or the orbit
    turns singular; the word collects one face label per recorded bounce."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    points = [x]
    word = [P.labels[x.face]]
    flagged: list[int] = []
    iso = Isometry.identity()
    reflections = [Isometry.reflection(f.plane) for f in P.faces]

    event0 = _edge_start_event(x, P)
    if event0 is None:
        _, event0 = _advance(x, P)
    if event0 is not None:
        return OrbitRecord(x, points, word, _finalize(event0, 0, iso, P), flagged)

    while len(points) < n_max:
        cur = points[-1]
        hit, event = _advance(cur, P)
        if event is not None:
            return OrbitRecord(x, points, word,
                               _finalize(event, len(points) - 1, iso, P), flagged)
        theta2 = reflect_direction(cur.theta, P.faces[hit.face])
        points.append(PhasePoint(hit.face, hit.point, theta2))
        word.append(P.labels[hit.face])
        iso = iso.compose(reflections[hit.face])
        if hit.edge_distance < P.tol.sing:
            flagged.append(len(points) - 1)
    return OrbitRecord(x, points, word, None, flagged)


def discontinuity_report(record: OrbitRecord, P: Polyhedron,
                         radius: float = 0.0) -> list[EdgeLine]:
    """Unfolded edge lines met (or approached within ``radius``) by an orbit.

    With ``radius == 0`` only an exact terminal edge/vertex hit contributes;
    a positive radius also collects near-misses along every segment.  Raises
    :class:`EmptyReport` when nothing is found.
    """
    faces = [p.face for p in record.points]
    isos = cumulative_isometries(P, faces)
    segs: list[tuple[np.ndarray, np.ndarray, Isometry]] = []
    for k in range(len(record.points) - 1):
        segs.append((record.points[k].m, record.points[k + 1].m, isos[k]))
    ev = record.singularity
    if ev is not None and ev.kind is not SingularityKind.TANGENT_IN_FACE \
            and len(record.points) >= 1:
        segs.append((record.points[-1].m, ev.point, isos[-1]))

    found: list[EdgeLine] = []
    keys: set[tuple] = set()

    def _emit(point: np.ndarray, direction: np.ndarray) -> None:
        d = direction if direction[int(np.argmax(np.abs(direction)))] >= 0.0 else -direction
        base = point - (point @ d) * d
        key = tuple(np.round(np.concatenate([base, d]), 9))
        if key not in keys:
            keys.add(key)
            found.append(EdgeLine(point.copy(), direction.copy()))

    if radius > 0.0:
        for a, b, iso in segs:
            for e in P.edges:
                v0 = P.vertices[e.endpoints[0]]
                v1 = P.vertices[e.endpoints[1]]
                if segment_segment_distance(a, b, v0, v1) <= radius:
                    _emit(iso.apply(e.point), iso.apply_direction(e.direction))
    if ev is not None and ev.unfolded_point is not None \
            and ev.unfolded_direction is not None:
        _emit(ev.unfolded_point, ev.unfolded_direction)
    if not found:
        raise EmptyReport("no discontinuities within the requested radius")
    return found


# ---------------------------------------------------------------------------
# sampling and batched word generation
# ---------------------------------------------------------------------------

def sample_points_in_face(P: Polyhedron, f: int, count: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Uniform points in the face polygon via its triangle fan."""
    poly = P.face_polygon(f)
    v0 = poly[0]
    tri_a = poly[1:-1] - v0
    tri_b = poly[2:] - v0
    areas = 0.5 * np.linalg.norm(np.cross(tri_a, tri_b), axis=1)
    idx = rng.choice(len(areas), size=count, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    return v0 + (r1 * (1 - r2))[:, None] * tri_a[idx] + (r1 * r2)[:, None] * tri_b[idx]


def sample_inward_directions(P: Polyhedron, faces: np.ndarray,
                             rng: np.random.Generator,
                             w_lo: np.ndarray | float = 0.0,
                             w_hi: np.ndarray | float = 1.0,
                             phi_lo: np.ndarray | float = 0.0,
                             phi_hi: np.ndarray | float = 2.0 * np.pi) -> np.ndarray:
    """Directions uniform w.r.t. area on the inward hemisphere of each face.

    ``w`` is the cosine of the polar angle from the inward normal; restricting
    (w, phi) to sub-ranges yields equal-area stratification tiles.
    """
    count = len(faces)
    w = rng.uniform(0.0, 1.0, count) * (np.asarray(w_hi) - np.asarray(w_lo)) + w_lo
    phi = rng.uniform(0.0, 1.0, count) * (np.asarray(phi_hi) - np.asarray(phi_lo)) + phi_lo
    r = np.sqrt(np.maximum(0.0, 1.0 - w * w))
    frames = np.array([np.vstack(P.face_frame(f)) for f in range(P.n_faces)])
    fr = frames[faces]                                 # (B, 3, 3) rows t1,t2,n
    local = np.stack([r * np.cos(phi), r * np.sin(phi), w], axis=1)
    return np.einsum("bi,bij->bj", local, fr)


def random_phase_points(P: Polyhedron, count: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(m, theta, face) arrays sampled uniformly over faces x inward hemisphere."""
    faces = rng.integers(0, P.n_faces, count)
    m = np.empty((count, 3))
    for f in range(P.n_faces):
        rows = np.flatnonzero(faces == f)
        if rows.size:
            m[rows] = sample_points_in_face(P, f, rows.size, rng)
    theta = sample_inward_directions(P, faces, rng)
    return m, theta, faces


def run_word_batch(P: Polyhedron, m: np.ndarray, theta: np.ndarray,
                   face: np.ndarray, n_labels: int
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Iterate many billiard rays at once and record their label words.

    Returns ``(words, lengths, flags)``: an (B, n_labels) int16 array of face
    indices padded with -1 past each orbit's termination, the number of valid
    labels per row, and a near-singular flag per row (some bounce passed
    within the ``sing`` tolerance of an edge).  Semantics match iterating
    :func:`billiard_step`, including conservative edge-hit termination.
    """
    tol = P.tol
    N = P.normals
    off = P.offsets
    ed = edge_arrays(P)
    B = len(m)
    words = np.full((B, n_labels), -1, dtype=np.int16)
    lengths = np.zeros(B, dtype=np.int64)
    flags = np.zeros(B, dtype=bool)

    m = np.asarray(m, float).copy()
    theta = np.asarray(theta, float).copy()
    face = np.asarray(face).astype(np.int64)
    words[:, 0] = face
    lengths[:] = 1

    # tangent starts never advance
    good = np.einsum("bj,bj->b", theta, N[face]) > tol.angle
    rows = np.flatnonzero(good)
    m, theta, face = m[rows], theta[rows], face[rows]

    for k in range(1, n_labels):
        if rows.size == 0:
            break
        s = m @ N.T + off
        d = theta @ N.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(d < -tol.angle, s / -d, np.inf)
        t[t <= tol.step] = np.inf
        fstar = np.argmin(t, axis=1)
        tstar = np.take_along_axis(t, fstar[:, None], axis=1)[:, 0]
        ok = np.isfinite(tstar)
        q = m + tstar[:, None] * theta

        a = ed["A"][fstar]
        u = ed["U"][fstar]
        ln = ed["L"][fstar]
        w = q[:, None, :] - a
        tt = np.clip(np.einsum("bej,bej->be", w, u), 0.0, ln)
        edist = np.linalg.norm(w - tt[..., None] * u, axis=2).min(axis=1)

        keep = ok & (edist > tol.plane)
        flags[rows[keep & (edist <= tol.sing)]] = True
        sel = rows[keep]
        words[sel, k] = fstar[keep].astype(np.int16)
        lengths[sel] = k + 1

        if not keep.all():
            q, theta, fstar, rows = q[keep], theta[keep], fstar[keep], sel
        else:
            rows = sel
        nvec = N[fstar]
        theta = theta - 2.0 * np.einsum("bj,bj->b", theta, nvec)[:, None] * nvec
        m = q
        face = fstar
    return words, lengths, flags
