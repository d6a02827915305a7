"""Incidence geometry of lines through skew edges.

A line leaving a base edge at offset ``m`` (measured along the edge from its
reference point) with direction ``theta`` meets another edge iff either the
two edges are coplanar and ``theta`` lies in their common plane (a linear
form vanishes), or the edges are skew and the offset is forced:

    m = <(p1 - p0) ^ x1, theta> / <u ^ x1, theta>

with ``u`` the base direction, ``p1, x1`` point and direction of the other
edge, and ``^`` the cross product.  Lines meeting three pairwise-skew edges
sweep a surface; in an adapted frame with the base direction as first axis
the surface is the zero set of a cleared-denominator polynomial of degree at
most three along any straight probe, so a probe not contained in the surface
crosses it at most four times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .geometry import line_line_distance, unit, vec3


class IdenticalLines(Exception):
    """The two edges describe the same line."""


class NotPairwiseSkew(Exception):
    """Some pair of edges is coplanar (or parallel) where skewness is required."""


@dataclass(frozen=True)
class EdgeLine:
    """An (unbounded) edge line: a point on it and a unit direction."""

    point: np.ndarray
    direction: np.ndarray

    @staticmethod
    def of(point, direction) -> "EdgeLine":
        return EdgeLine(vec3(point), unit(direction))

    def at(self, t: float) -> np.ndarray:
        return self.point + t * self.direction


@dataclass(frozen=True)
class CoplanarConstraint:
    """Incidence reduces to a linear form on directions: form @ theta == 0."""

    form: np.ndarray
    base_direction: np.ndarray


@dataclass(frozen=True)
class RationalConstraint:
    """Incidence pins the base offset: m = <numerator, theta> / <denominator, theta>."""

    numerator: np.ndarray
    denominator: np.ndarray
    base_direction: np.ndarray


TransversalConstraint = CoplanarConstraint | RationalConstraint

_COPLANAR_TOL = 1e-10


def pair_constraint(a0: EdgeLine, a1: EdgeLine,
                    coplanar_tol: float = _COPLANAR_TOL) -> TransversalConstraint:
    """Constraint for lines from base edge ``a0`` to meet edge ``a1``.

    Offsets ``m`` are measured along ``a0.direction`` from ``a0.point``; all
    vectors are computed in coordinates translated so the base point is the
    origin, which the rational form requires.
    """
    u = a0.direction
    p = a1.point - a0.point
    x1 = a1.direction
    b = np.cross(u, x1)
    bn = float(np.linalg.norm(b))
    if bn < 1e-12:
        # parallel edges: coplanar, possibly identical
        perp = p - (p @ u) * u
        if float(np.linalg.norm(perp)) < 1e-12:
            raise IdenticalLines("edges span the same line")
        return CoplanarConstraint(unit(np.cross(u, p)), u.copy())
    scale = max(1.0, float(np.linalg.norm(p)))
    if abs(float(p @ b)) <= coplanar_tol * bn * scale:
        return CoplanarConstraint(b / bn, u.copy())
    return RationalConstraint(np.cross(p, x1), b, u.copy())


def eval_constraint(c: TransversalConstraint, theta,
                    den_tol: float = 1e-10) -> float | None:
    """Evaluate a constraint at a direction.

    Rational: the forced offset, or ``None`` when the denominator is below
    ``den_tol`` (direction parallel to the critical plane).  Coplanar: the
    linear residual, zero exactly on the incidence plane.
    """
    theta = np.asarray(theta, float)
    if isinstance(c, CoplanarConstraint):
        return float(c.form @ theta)
    den = float(c.denominator @ theta)
    if abs(den) < den_tol:
        return None
    return float(c.numerator @ theta) / den


def _require_skew(a: EdgeLine, b: EdgeLine, what: str) -> RationalConstraint:
    try:
        con = pair_constraint(a, b)
    except IdenticalLines:
        raise NotPairwiseSkew(f"{what}: edges are identical")
    if not isinstance(con, RationalConstraint):
        raise NotPairwiseSkew(f"{what}: edges are coplanar")
    return con


@dataclass
class TripleSurface:
    """Surface swept by lines meeting three pairwise-skew edges.

    The adapted frame maps the base edge point to the origin and its
    direction to the first axis; ``coeff_num[i]``/``coeff_den[i]`` are the
    rational-constraint vectors of the other two edges in that frame.  The
    surface is the locus where the two forced offsets agree, expressed as a
    height field ``P1 = f(P2, P3)`` away from its denominator locus and as a
    cleared-denominator polynomial residual everywhere.
    """

    edges: tuple[EdgeLine, EdgeLine, EdgeLine]
    origin: np.ndarray
    frame: np.ndarray            # (3,3) rotation; rows are adapted axes
    coeff_num: np.ndarray        # (2,3)
    coeff_den: np.ndarray        # (2,3), first components ~0

    def to_adapted(self, pts) -> np.ndarray:
        return (np.asarray(pts, float) - self.origin) @ self.frame.T

    def from_adapted(self, pts) -> np.ndarray:
        return np.asarray(pts, float) @ self.frame + self.origin

    def _pieces(self, P2, P3):
        (a1, a2), (b1, b2) = self.coeff_num, self.coeff_den
        B1 = b1[1] * P2 + b1[2] * P3
        B2 = b2[1] * P2 + b2[2] * P3
        alpha = a1[0] * B2 - a2[0] * B1
        A1 = a1[1] * P2 + a1[2] * P3
        A2 = a2[1] * P2 + a2[2] * P3
        beta = A1 * B2 - A2 * B1
        return B1, B2, alpha, A1, A2, beta

    def height(self, P2: float, P3: float) -> float | None:
        """First adapted coordinate of the surface over (P2, P3), if defined."""
        (a1, a2), _ = self.coeff_num, self.coeff_den
        B1, B2, alpha, A1, A2, beta = self._pieces(P2, P3)
        tiny = 1e-12 * (1.0 + abs(P2) + abs(P3))
        if abs(alpha) < tiny * (1.0 + abs(a1[0]) + abs(a2[0])):
            return None
        q = -beta / alpha
        if abs(B1) >= abs(B2):
            if abs(B1) < tiny:
                return None
            return (a1[0] * q + A1) / B1 + q
        if abs(B2) < tiny:
            return None
        return (a2[0] * q + A2) / B2 + q

    def residual(self, pts_adapted) -> np.ndarray:
        """Cleared-denominator implicit residual; zero on the surface."""
        pts = np.atleast_2d(np.asarray(pts_adapted, float))
        P1, P2, P3 = pts[:, 0], pts[:, 1], pts[:, 2]
        (a1, _), _ = self.coeff_num, self.coeff_den
        B1, B2, alpha, A1, A2, beta = self._pieces(P2, P3)
        return P1 * B1 * alpha + beta * (B1 + a1[0]) - A1 * alpha

    def contains(self, pts, tol: float = 1e-8) -> np.ndarray:
        """Surface membership for world points (boolean array)."""
        ad = np.atleast_2d(self.to_adapted(pts))
        out = np.zeros(len(ad), dtype=bool)
        for i, (P1, P2, P3) in enumerate(ad):
            h = self.height(P2, P3)
            if h is not None:
                out[i] = abs(P1 - h) <= tol * (1.0 + abs(P1) + abs(h))
                continue
            (a1, _), _ = self.coeff_num, self.coeff_den
            B1, B2, alpha, A1, A2, beta = self._pieces(P2, P3)
            res = P1 * B1 * alpha + beta * (B1 + a1[0]) - A1 * alpha
            mag = abs(P1 * B1 * alpha) + abs(beta * (B1 + a1[0])) + abs(A1 * alpha)
            out[i] = abs(res) <= tol * (1.0 + mag)
        return out

    def residual_poly_along(self, line: EdgeLine) -> np.ndarray:
        """Ascending coefficients of the residual along ``line`` (degree <= 3)."""
        c = self.to_adapted(line.point)
        d = self.frame @ line.direction
        (a1, a2), (b1, b2) = self.coeff_num, self.coeff_den
        lin = lambda v: np.array([v[1] * c[1] + v[2] * c[2], v[1] * d[1] + v[2] * d[2]])
        P1 = np.array([c[0], d[0]])
        B1, B2 = lin(b1), lin(b2)
        A1, A2 = lin(a1), lin(a2)
        alpha = a1[0] * B2 - a2[0] * B1
        beta = npoly.polysub(npoly.polymul(A1, B2), npoly.polymul(A2, B1))
        res = npoly.polymul(npoly.polymul(P1, B1), alpha)
        res = npoly.polyadd(res, npoly.polymul(beta, npoly.polyadd(B1, [a1[0]])))
        res = npoly.polysub(res, npoly.polymul(A1, alpha))
        return res


def triple_surface(a0: EdgeLine, a1: EdgeLine, a2: EdgeLine) -> TripleSurface:
    """Build the transversal surface of three pairwise-skew edges."""
    _require_skew(a0, a1, "a0/a1")
    _require_skew(a0, a2, "a0/a2")
    _require_skew(a1, a2, "a1/a2")
    e1 = a0.direction
    helper = np.array([1.0, 0.0, 0.0]) if abs(e1[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e2 = unit(np.cross(e1, helper))
    e3 = np.cross(e1, e2)
    frame = np.vstack([e1, e2, e3])
    origin = a0.point.copy()
    num = np.empty((2, 3))
    den = np.empty((2, 3))
    for i, a in enumerate((a1, a2)):
        num[i] = frame @ np.cross(a.point - origin, a.direction)
        den[i] = frame @ np.cross(e1, a.direction)
    return TripleSurface((a0, a1, a2), origin, frame, num, den)


ON_SURFACE = "on-surface"


def count_line_surface_intersections(line: EdgeLine, S: TripleSurface,
                                     tol: float = 1e-8,
                                     merge_tol: float = 1e-7) -> int | str:
    """Count parameter values where a probe line crosses the surface.

    Real roots of the degree <= 3 cleared residual are isolated, merged when
    closer than ``merge_tol`` (tangencies), and each surviving root is
    verified against surface membership so spurious zeros of the cleared
    denominators are not counted.  Returns :data:`ON_SURFACE` when the
    residual vanishes identically along the line and sampled points confirm
    membership.
    """
    coeffs = S.residual_poly_along(line)
    cmax = float(np.abs(coeffs).max())
    c_ad = S.to_adapted(line.point)
    char = ((1.0 + float(np.abs(S.coeff_num).max()))
            * (1.0 + float(np.abs(S.coeff_den).max())) ** 2
            * (1.0 + float(np.linalg.norm(c_ad))) ** 3)
    if cmax <= 1e-10 * char:
        probes = line.point[None, :] + np.linspace(-3.0, 3.0, 9)[:, None] * line.direction
        if bool(S.contains(probes, tol=max(tol, 1e-7)).all()):
            return ON_SURFACE
        return 0
    trimmed = npoly.polytrim(coeffs, tol=1e-12 * cmax)
    if len(trimmed) <= 1:
        return 0
    roots = npoly.polyroots(trimmed)
    real = sorted(float(r.real) for r in roots
                  if abs(r.imag) <= 1e-7 * (1.0 + abs(r.real)))
    merged: list[float] = []
    for r in real:
        if not merged or r - merged[-1] > merge_tol:
            merged.append(r)
    pts = [line.at(t) for t in merged]
    if not pts:
        return 0
    on = S.contains(np.array(pts), tol=max(tol, 1e-7))
    return int(on.sum())


def sample_transversals(a0: EdgeLine, a1: EdgeLine, a2: EdgeLine,
                        span: float = 3.0, count: int = 33,
                        tol: float = 1e-8) -> list[EdgeLine]:
    """Lines meeting all three pairwise-skew edges.

    For each sampled point ``q`` on ``a2`` the unique line through ``q``
    meeting ``a0`` and ``a1`` is the intersection of the planes spanned by
    ``(q, a0)`` and ``(q, a1)``; samples where that construction degenerates
    or fails verification are skipped.
    """
    scale = 1.0 + max(float(np.linalg.norm(a.point)) for a in (a0, a1, a2))
    lines: list[EdgeLine] = []
    for s in np.linspace(-span, span, count):
        q = a2.at(float(s))
        n0 = np.cross(a0.point - q, a0.direction)
        n1 = np.cross(a1.point - q, a1.direction)
        m0, m1 = np.linalg.norm(n0), np.linalg.norm(n1)
        if m0 < 1e-12 * scale or m1 < 1e-12 * scale:
            continue
        d = np.cross(n0 / m0, n1 / m1)
        if float(np.linalg.norm(d)) < 1e-10:
            continue
        cand = EdgeLine(q, unit(d))
        if (line_line_distance(cand.point, cand.direction, a0.point, a0.direction)
                <= tol * scale
                and line_line_distance(cand.point, cand.direction, a1.point, a1.direction)
                <= tol * scale):
            lines.append(cand)
    return lines


def independence_check(a0: EdgeLine, a1: EdgeLine, a2: EdgeLine, a3: EdgeLine,
                       tol: float = 1e-8, count: int = 41) -> str:
    """Decide whether a fourth edge is forced by the first three.

    ``"dependent"`` when every sampled transversal of (a0, a1, a2) also meets
    ``a3`` within tolerance (numerically: a3 lies on their surface),
    ``"independent"`` otherwise.  All four edges must be pairwise skew.
    """
    edges = (a0, a1, a2, a3)
    for i in range(4):
        for j in range(i + 1, 4):
            _require_skew(edges[i], edges[j], f"a{i}/a{j}")
    lines = sample_transversals(a0, a1, a2, count=count)
    if not lines:
        raise NotPairwiseSkew("transversal sampler produced no lines")
    scale = 1.0 + max(float(np.linalg.norm(a.point)) for a in edges)
    for line in lines:
        if (line_line_distance(line.point, line.direction, a3.point, a3.direction)
                > tol * scale):
            return "independent"
    return "dependent"
