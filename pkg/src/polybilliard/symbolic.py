"""Coding-side machinery: beams, cell classification, word complexity.

A beam is the set of parallel lines with a fixed direction whose base points
form a convex cross-section in the plane orthogonal to that direction.
Propagating a beam by a face label intersects the cross-section with the
projection of the label's unfolded face copy, so after a word the section is
exactly the set of base points whose orbit code starts with that word.
Sections shrink to polygons (tubes), segments (strips), or points; tubes go
with periodic words, detected through the cumulative unfolding isometry
becoming a pure translation along the beam direction.

The complexity estimator samples orbits in bulk, collects every factor of
each coded word into per-length distinct sets, and reports the counts as
explicit lower bounds for the number of length-n words together with their
normalized logarithms.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .billiard import run_word_batch, sample_inward_directions, sample_points_in_face
from .geometry import Polyhedron, unit
from .unfolding import Isometry


class LabelNotReachable(Exception):
    """The requested label cannot extend this beam's word."""


# ---------------------------------------------------------------------------
# 2D convex sections
# ---------------------------------------------------------------------------

_EMPTY2 = np.zeros((0, 2))


def _polygon_area(pts: np.ndarray) -> float:
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d * d).sum(axis=2)).max())


def _dedupe(pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if len(pts) < 2:
        return pts
    keep = [0]
    for i in range(1, len(pts)):
        if np.abs(pts[i] - pts[keep[-1]]).max() > tol:
            keep.append(i)
    if len(keep) > 1 and np.abs(pts[keep[0]] - pts[keep[-1]]).max() <= tol:
        keep.pop()
    return pts[keep]


def _clip_half(pts: np.ndarray, n2: np.ndarray, c: float) -> np.ndarray:
    """Clip a convex section (point/segment/polygon) to {p : <n2, p> <= c}."""
    if len(pts) == 0:
        return _EMPTY2
    d = pts @ n2 - c
    if len(pts) == 1:
        return pts if d[0] <= 0.0 else _EMPTY2
    if len(pts) == 2:
        ina, inb = d[0] <= 0.0, d[1] <= 0.0
        if ina and inb:
            return pts
        if not ina and not inb:
            return _EMPTY2
        t = d[0] / (d[0] - d[1])
        x = pts[0] + t * (pts[1] - pts[0])
        return np.array([pts[0], x]) if ina else np.array([x, pts[1]])
    out: list[np.ndarray] = []
    K = len(pts)
    for i in range(K):
        j = (i + 1) % K
        ina, inb = d[i] <= 0.0, d[j] <= 0.0
        if ina:
            out.append(pts[i])
        if ina != inb:
            t = d[i] / (d[i] - d[j])
            out.append(pts[i] + t * (pts[j] - pts[i]))
    return _dedupe(np.array(out)) if out else _EMPTY2


def _clip_convex(subject: np.ndarray, clip_ccw: np.ndarray) -> np.ndarray:
    out = subject
    K = len(clip_ccw)
    for i in range(K):
        a = clip_ccw[i]
        b = clip_ccw[(i + 1) % K]
        e = b - a
        n2 = np.array([e[1], -e[0]])       # interior of a CCW polygon: <n2, p-a> <= 0
        out = _clip_half(out, n2, float(n2 @ a))
        if len(out) == 0:
            return _EMPTY2
    return out


def _ensure_ccw(pts: np.ndarray) -> np.ndarray:
    return pts[::-1] if _polygon_area(pts) < 0.0 else pts


# ---------------------------------------------------------------------------
# beams
# ---------------------------------------------------------------------------

@dataclass
class Beam:
    """Parallel lines with direction ``theta`` over a convex cross-section.

    ``section`` lives in the plane through ``origin`` orthogonal to ``theta``,
    spanned by the rows of ``axes``; ``isometries[k]`` is the cumulative
    unfolding after the first ``k`` reflections of the word (entry 0 is the
    identity), so ``isometry`` maps the next folded face into the straight
    picture.
    """

    theta: np.ndarray
    origin: np.ndarray
    axes: np.ndarray                         # (2, 3)
    section: np.ndarray                      # (K, 2)
    word: list[str]
    isometries: list[Isometry] = field(default_factory=lambda: [Isometry.identity()])

    @property
    def isometry(self) -> Isometry:
        return self.isometries[-1]

    @property
    def is_empty(self) -> bool:
        return len(self.section) == 0

    def project(self, pts3) -> np.ndarray:
        return (np.atleast_2d(np.asarray(pts3, float)) - self.origin) @ self.axes.T

    def contains_base_point(self, m, slack: float = 1e-8) -> bool:
        """Is the projection of a base point inside the cross-section?"""
        q = self.project(m)[0]
        pts = self.section
        if len(pts) == 0:
            return False
        if len(pts) == 1:
            return bool(np.linalg.norm(q - pts[0]) <= slack)
        if len(pts) == 2:
            e = pts[1] - pts[0]
            L = float(np.linalg.norm(e))
            t = np.clip(float((q - pts[0]) @ e) / max(L * L, 1e-300), 0.0, 1.0)
            return bool(np.linalg.norm(q - (pts[0] + t * e)) <= slack)
        nxt = np.roll(pts, -1, axis=0)
        e = nxt - pts
        n2 = np.stack([e[:, 1], -e[:, 0]], axis=1)
        return bool(np.all(np.einsum("ij,ij->i", q - pts, n2)
                           <= slack * np.linalg.norm(n2, axis=1)))


def make_beam(P: Polyhedron, label: str, theta) -> Beam:
    """Beam of all lines entering through one full face at a fixed direction."""
    f = P.face_index(label)
    theta = unit(theta)
    if float(theta @ P.normals[f]) <= P.tol.angle:
        raise ValueError(f"direction is tangent to face {label!r}")
    helper = np.array([1.0, 0.0, 0.0]) if abs(theta[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit(np.cross(theta, helper))
    e2 = np.cross(theta, e1)
    axes = np.vstack([e1, e2])
    origin = P.face_polygon(f).mean(axis=0)
    beam = Beam(theta, origin, axes, _EMPTY2, [label])
    beam.section = _ensure_ccw(beam.project(P.face_polygon(f)))
    return beam


def propagate_beam(b: Beam, label: str, P: Polyhedron, strict: bool = False) -> Beam:
    """Extend the beam's word by one label.

    The new cross-section is the old one intersected with the projection of
    the label's unfolded face copy (exact convex clipping; a face copy seen
    edge-on clips to a segment).  A geometric miss yields an empty beam, or
    :class:`LabelNotReachable` when ``strict``; a label equal to the previous
    one, or unknown, always raises.
    """
    if b.is_empty:
        raise ValueError("cannot propagate an empty beam")
    if label not in P.labels:
        raise LabelNotReachable(f"unknown face label {label!r}")
    if b.word and label == b.word[-1]:
        raise LabelNotReachable("consecutive labels cannot repeat on a convex solid")
    f = P.face_index(label)
    iso = b.isometry
    poly3 = iso.apply(P.face_polygon(f))
    n3 = iso.apply_direction(P.faces[f].plane.normal)
    verts2 = b.project(poly3)

    if abs(float(n3 @ b.theta)) <= P.tol.angle:
        # face copy is parallel to the beam: its projection is a segment
        d = verts2[:, None, :] - verts2[None, :, :]
        i, j = np.unravel_index(np.argmax((d * d).sum(axis=2)), d.shape[:2])
        a = verts2[i]
        dir2 = verts2[j] - a
        L = float(np.linalg.norm(dir2))
        if L < 1e-15:
            section = _EMPTY2
        else:
            dir2 = dir2 / L
            perp = np.array([-dir2[1], dir2[0]])
            s = (verts2 - a) @ dir2
            section = b.section
            section = _clip_half(section, perp, float(perp @ a))
            section = _clip_half(section, -perp, float(-perp @ a))
            section = _clip_half(section, -dir2, -float(dir2 @ a) - float(s.min()))
            section = _clip_half(section, dir2, float(dir2 @ a) + float(s.max()))
    else:
        section = _clip_convex(b.section, _ensure_ccw(verts2))

    new_iso = iso.compose(Isometry.reflection(P.faces[f].plane))
    out = Beam(b.theta, b.origin, b.axes, section, b.word + [label],
               b.isometries + [new_iso])
    if strict and out.is_empty:
        raise LabelNotReachable(f"face {label!r} projection misses the beam")
    return out


@dataclass(frozen=True)
class CellClass:
    """Shape of a limiting cross-section: tube (2D), strip (1D), point, empty."""

    kind: str                  # "tube" | "strip" | "point" | "empty"
    width: float | None = None
    area: float | None = None


def classify_cell(b: Beam, deg_tol: float | None = None) -> CellClass:
    """Classify the beam's cross-section by diameter and area thresholds."""
    tol = 1e-8 if deg_tol is None else deg_tol
    pts = b.section
    if len(pts) == 0:
        return CellClass("empty")
    diam = _diameter(pts)
    if diam <= tol:
        return CellClass("point")
    area = abs(_polygon_area(pts))
    if area <= tol * diam:
        return CellClass("strip", width=diam)
    return CellClass("tube", area=area)


def detect_periodicity(b: Beam, k_max: int, tol: float = 1e-9) -> int | None:
    """Smallest period k <= k_max whose unfolding is a translation along the
    beam direction and whose word repeats with that period; None otherwise."""
    w = b.word
    for k in range(1, min(k_max, len(w) - 1) + 1):
        if any(w[i] != w[i + k] for i in range(len(w) - k)):
            continue
        iso = b.isometries[k]
        if not iso.is_translation(tol):
            continue
        t = iso.translation
        tn = float(np.linalg.norm(t))
        if tn <= tol:
            continue
        if float(np.linalg.norm(t - (t @ b.theta) * b.theta)) > tol * tn:
            continue
        if float(t @ b.theta) <= 0.0:
            continue
        return k
    return None


# ---------------------------------------------------------------------------
# word complexity
# ---------------------------------------------------------------------------

@dataclass
class ComplexityTable:
    """Sampled lower bounds for the number of distinct length-n words."""

    n: np.ndarray
    p_hat: np.ndarray
    log_p_over_n: np.ndarray
    budget: int
    seed: int
    n_max: int
    discarded: int              # near-singular orbits dropped entirely
    singular: int               # orbits cut short by an exact edge/vertex hit
    labels: list[str]
    word_codes: dict[int, np.ndarray]
    tiles: tuple[int, int]

    @property
    def extendability_ok(self) -> bool:
        """Sampled counts should inherit p(n+1) >= p(n) from word extendability."""
        return bool(np.all(np.diff(self.p_hat) >= 0))

    def words(self, n: int) -> list[tuple[str, ...]]:
        """Decode the distinct words of length ``n`` back to label tuples."""
        base = len(self.labels)
        out = []
        for code in self.word_codes[n]:
            c = int(code)
            rev = []
            for _ in range(n):
                rev.append(self.labels[c % base])
                c //= base
            out.append(tuple(reversed(rev)))
        return out

    def factor_closure_holds(self) -> bool:
        """Every counted (n+1)-word must have both its n-prefix and n-suffix counted."""
        base = len(self.labels)
        for n in range(1, self.n_max):
            longer = self.word_codes.get(n + 1)
            shorter = self.word_codes.get(n)
            if longer is None or shorter is None or len(longer) == 0:
                continue
            prefixes = longer // base
            suffixes = longer % (base ** n)
            if not (np.isin(prefixes, shorter).all()
                    and np.isin(suffixes, shorter).all()):
                return False
        return True


def _chunk_complexity(P: Polyhedron, seed: int, chunk_idx: int, start: int,
                      stop: int, n_max: int, tiles: tuple[int, int]
                      ) -> tuple[dict[int, np.ndarray], int, int]:
    rng = np.random.default_rng([seed, chunk_idx])
    F = P.n_faces
    tw, tp = tiles
    g = np.arange(start, stop)
    faces = g % F
    tile = (g // F) % (tw * tp)
    iw = tile % tw
    ip = tile // tw
    m = np.empty((len(g), 3))
    for f in range(F):
        rows = np.flatnonzero(faces == f)
        if rows.size:
            m[rows] = sample_points_in_face(P, f, rows.size, rng)
    theta = sample_inward_directions(
        P, faces, rng,
        w_lo=iw / tw, w_hi=(iw + 1) / tw,
        phi_lo=ip * 2.0 * np.pi / tp, phi_hi=(ip + 1) * 2.0 * np.pi / tp)
    words, lengths, flags = run_word_batch(P, m, theta, faces, n_max)

    valid = ~flags
    powers_full = (F ** np.arange(n_max - 1, -1, -1)).astype(np.int64)
    uniq: dict[int, np.ndarray] = {}
    for n in range(1, n_max + 1):
        win = np.lib.stride_tricks.sliding_window_view(words, n, axis=1)
        n_win = win.shape[1]
        mask = (np.arange(n_win)[None, :] < (lengths - n + 1)[:, None]) & valid[:, None]
        codes = win.astype(np.int64) @ powers_full[n_max - n:]
        uniq[n] = np.unique(codes[mask])
    return uniq, int(flags.sum()), int((lengths < n_max).sum())


def estimate_complexity(P: Polyhedron, n_max: int, budget: int, seed: int = 0,
                        chunk_size: int = 65536, workers: int = 1,
                        tiles: tuple[int, int] = (4, 8)) -> ComplexityTable:
    """Sample ``budget`` orbits and count distinct word factors per length.

    Initial conditions are stratified: faces round-robin, directions binned
    into equal-area tiles of the inward hemisphere (``tiles`` = polar x
    azimuthal counts), with per-chunk jitter from a seeded generator.  Words
    flagged near-singular are discarded outright; words cut short by an exact
    singular hit contribute the factors of their reliable prefix.  Results
    are deterministic for a given seed and independent of chunking order or
    worker count.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    F = P.n_faces
    if F ** n_max >= 2 ** 62:
        raise ValueError("alphabet too large for integer word codes at this n_max")
    bounds = list(range(0, budget, chunk_size)) + [budget]
    jobs = [(i, bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

    per_chunk: list[tuple[dict[int, np.ndarray], int, int]] = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_chunk_complexity, P, seed, ci, a, b, n_max, tiles)
                    for ci, a, b in jobs]
            per_chunk = [f.result() for f in futs]
    else:
        per_chunk = [_chunk_complexity(P, seed, ci, a, b, n_max, tiles)
                     for ci, a, b in jobs]

    word_codes: dict[int, np.ndarray] = {}
    for n in range(1, n_max + 1):
        parts = [u[n] for u, _, _ in per_chunk if len(u[n])]
        word_codes[n] = (np.unique(np.concatenate(parts)) if parts
                         else np.array([], dtype=np.int64))
    discarded = sum(d for _, d, _ in per_chunk)
    singular = sum(s for _, _, s in per_chunk)

    ns = np.arange(1, n_max + 1)
    p_hat = np.array([len(word_codes[n]) for n in ns], dtype=np.int64)
    with np.errstate(divide="ignore"):
        lpn = np.where(p_hat > 0, np.log(np.maximum(p_hat, 1)) / ns, -np.inf)
    return ComplexityTable(ns, p_hat, lpn, budget, seed, n_max, discarded,
                           singular, list(P.labels), word_codes, tiles)
