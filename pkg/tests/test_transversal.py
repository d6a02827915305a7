import numpy as np
import pytest

from polybilliard import transversal as tv

SQRT3 = np.sqrt(3.0)
SQRT30 = np.sqrt(30.0)


def _incidence_offset(a0, a1, theta):
    """Oracle: solve the 3x3 linear system  m*u + lam*theta - s*x1 = p1 - p0
    for the base offset m, independently of the cross-product formula."""
    A = np.column_stack([a0.direction, theta, -a1.direction])
    try:
        sol = np.linalg.solve(A, a1.point - a0.point)
    except np.linalg.LinAlgError:
        return None
    return float(sol[0])


def _random_skew_pair(rng, min_sep=0.2):
    while True:
        a0 = tv.EdgeLine.of(rng.normal(size=3), rng.normal(size=3))
        a1 = tv.EdgeLine.of(rng.normal(size=3), rng.normal(size=3))
        b = np.cross(a0.direction, a1.direction)
        if np.linalg.norm(b) < min_sep:
            continue
        if abs((a1.point - a0.point) @ b) / np.linalg.norm(b) < min_sep:
            continue
        return a0, a1


X_AXIS = tv.EdgeLine.of([0, 0, 0], [1, 0, 0])
A1 = tv.EdgeLine.of([0, 1, 0], [0, 0, 1])
A2 = tv.EdgeLine.of([2, 0, 1], [0, 1, 0])


# ---------------------------------------------------------------------------
# pair constraints
# ---------------------------------------------------------------------------

def test_rational_coefficients_frozen():
    c = tv.pair_constraint(X_AXIS, A1)
    assert isinstance(c, tv.RationalConstraint)
    assert np.allclose(c.numerator, [1.0, 0.0, 0.0])
    assert np.allclose(c.denominator, [0.0, -1.0, 0.0])


def test_parallel_pair_is_coplanar():
    c = tv.pair_constraint(X_AXIS, tv.EdgeLine.of([0, 1, 0], [1, 0, 0]))
    assert isinstance(c, tv.CoplanarConstraint)
    assert np.allclose(np.abs(c.form), [0.0, 0.0, 1.0])


def test_identical_lines_rejected():
    with pytest.raises(tv.IdenticalLines):
        tv.pair_constraint(X_AXIS, tv.EdgeLine.of([5, 0, 0], [-1, 0, 0]))


def test_eval_frozen_values():
    c = tv.pair_constraint(X_AXIS, A1)
    assert abs(tv.eval_constraint(c, np.array([1, 2, 5.0]) / SQRT30) - (-0.5)) < 1e-12
    assert abs(tv.eval_constraint(c, np.array([1, -1, 1.0]) / SQRT3) - 1.0) < 1e-12
    # oracle agrees and the incident ray really meets A1
    theta = np.array([1, 2, 5.0]) / SQRT30
    m = tv.eval_constraint(c, theta)
    assert abs(m - _incidence_offset(X_AXIS, A1, theta)) < 1e-12
    lam = 1.0 / theta[1]
    assert np.allclose(np.array([m, 0, 0]) + lam * theta, [0, 1.0, 2.5])


def test_eval_undefined_denominator():
    c = tv.pair_constraint(X_AXIS, A1)
    assert tv.eval_constraint(c, np.array([0.0, 0.0, 1.0])) is None


def test_coplanar_residual_vanishes_in_plane():
    c = tv.pair_constraint(X_AXIS, tv.EdgeLine.of([0, 1, 0], [1, 1, 0]))
    assert isinstance(c, tv.CoplanarConstraint)
    rng = np.random.default_rng(2)
    for _ in range(50):
        v = rng.normal(size=3)
        v[2] = 0.0                       # in the incidence plane z = 0
        v /= np.linalg.norm(v)
        assert abs(tv.eval_constraint(c, v)) < 1e-12
    assert abs(tv.eval_constraint(c, np.array([0, 0, 1.0]))) > 0.9


def test_oracle_equivalence_random_pairs():
    rng = np.random.default_rng(3)
    for _ in range(300):
        a0, a1 = _random_skew_pair(rng)
        con = tv.pair_constraint(a0, a1)
        assert isinstance(con, tv.RationalConstraint)
        theta = rng.normal(size=3)
        theta /= np.linalg.norm(theta)
        if abs(con.denominator @ theta) < 1e-3:
            continue
        m = tv.eval_constraint(con, theta)
        m_direct = _incidence_offset(a0, a1, theta)
        assert m_direct is not None
        assert abs(m - m_direct) < 1e-8


def test_homogeneity():
    rng = np.random.default_rng(4)
    c = tv.pair_constraint(X_AXIS, A1)
    for _ in range(50):
        theta = rng.normal(size=3)
        if abs(c.denominator @ theta) < 1e-6:
            continue
        for lam in (0.1, 2.0, 17.0):
            assert abs(tv.eval_constraint(c, lam * theta)
                       - tv.eval_constraint(c, theta)) < 1e-9


def test_frame_invariance():
    rng = np.random.default_rng(5)
    a0, a1 = _random_skew_pair(rng)
    con = tv.pair_constraint(a0, a1)
    # random rigid motion
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    shift = rng.normal(size=3)
    a0m = tv.EdgeLine.of(q @ a0.point + shift, q @ a0.direction)
    a1m = tv.EdgeLine.of(q @ a1.point + shift, q @ a1.direction)
    conm = tv.pair_constraint(a0m, a1m)
    for _ in range(50):
        theta = rng.normal(size=3)
        theta /= np.linalg.norm(theta)
        if abs(con.denominator @ theta) < 1e-3:
            continue
        m = tv.eval_constraint(con, theta)
        mm = tv.eval_constraint(conm, q @ theta)
        assert abs(m - mm) < 1e-8


# ---------------------------------------------------------------------------
# the three-edge surface
# ---------------------------------------------------------------------------

def _brute_transversals(a0, a1, a2):
    """Oracle sampler: for a grid of offsets m on a0, scan the pencil of lines
    from a0.at(m) through points of a1 and bisect the coplanarity determinant
    with a2 down to the incident line.  No cross-product constraint algebra."""
    def copl(base, s):
        # zero iff the line base -> a1.at(s) meets a2
        d1 = a1.at(s) - base
        return float(np.linalg.det(np.column_stack(
            [d1, a2.point - base, a2.point + a2.direction - base])))

    lines = []
    for m in np.linspace(-3, 3, 31):
        base = a0.at(m)
        grid = np.linspace(-6, 6, 121)
        vals = [copl(base, s) for s in grid]
        for i in range(len(grid) - 1):
            if vals[i] == 0.0 or vals[i] * vals[i + 1] > 0:
                continue
            lo, hi = grid[i], grid[i + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if copl(base, lo) * copl(base, mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            d = a1.at(0.5 * (lo + hi)) - base
            nd = np.linalg.norm(d)
            if nd > 1e-9:
                lines.append(tv.EdgeLine(base, d / nd))
    return lines


def test_surface_frozen_example():
    S = tv.triple_surface(X_AXIS, A1, A2)
    assert bool(S.contains([2.0, -1.0, 1.0])[0])
    line = tv.EdgeLine.of([1, 0, 0], np.array([1.0, -1.0, 1.0]) / SQRT3)
    assert tv.count_line_surface_intersections(line, S) == tv.ON_SURFACE


def test_generator_edges_on_surface():
    S = tv.triple_surface(X_AXIS, A1, A2)
    for t in np.linspace(-2, 2, 9):
        assert bool(S.contains(A1.at(t))[0])
        assert bool(S.contains(A2.at(t))[0])


def test_brute_force_sampler_agrees():
    S = tv.triple_surface(X_AXIS, A1, A2)
    lines = _brute_transversals(X_AXIS, A1, A2)
    assert len(lines) > 20
    for line in lines:
        pts = np.array([line.at(t) for t in (-1.0, 0.0, 0.5, 2.0)])
        assert bool(S.contains(pts, tol=1e-6).all())


def test_regulus_surface():
    # rulings x = const of the saddle z = x*y; transversals are the other family
    b0 = tv.EdgeLine.of([0, 0, 0], [0, 1, 0])
    b1 = tv.EdgeLine.of([1, 0, 0], np.array([0, 1, 1.0]) / np.sqrt(2))
    b2 = tv.EdgeLine.of([2, 0, 0], np.array([0, 1, 2.0]) / np.sqrt(5))
    S = tv.triple_surface(b0, b1, b2)
    lines = tv.sample_transversals(b0, b1, b2, count=21)
    assert len(lines) >= 15
    for line in lines:
        pts = np.array([line.at(t) for t in np.linspace(-2, 2, 7)])
        assert bool(S.contains(pts, tol=1e-8).all())
    # saddle points (x, y, xy) lie on the surface
    for x in (-1.0, 0.5, 2.5):
        for y in (-2.0, 0.3, 1.7):
            assert bool(S.contains([x, y, x * y], tol=1e-8)[0])


def test_probe_intersections_bounded():
    S = tv.triple_surface(X_AXIS, A1, A2)
    rng = np.random.default_rng(7)
    seen = 0
    for _ in range(300):
        probe = tv.EdgeLine.of(rng.normal(size=3) * 2.0, rng.normal(size=3))
        c = tv.count_line_surface_intersections(probe, S)
        if c == tv.ON_SURFACE:
            continue
        assert 0 <= c <= 4
        seen = max(seen, c)
    assert seen >= 1


def test_not_pairwise_skew_rejected():
    with pytest.raises(tv.NotPairwiseSkew):
        tv.triple_surface(X_AXIS, tv.EdgeLine.of([0, 1, 0], [1, 0, 0]), A2)
    with pytest.raises(tv.NotPairwiseSkew):
        tv.independence_check(X_AXIS, A1, A2, A1)


def test_independence_ruling_dependent():
    lines = tv.sample_transversals(X_AXIS, A1, A2, count=9)
    t1, t2, t3 = lines[0], lines[len(lines) // 2], lines[-1]
    q = t3.at(0.37)
    n0 = np.cross(t1.point - q, t1.direction)
    n1 = np.cross(t2.point - q, t2.direction)
    ruling = tv.EdgeLine.of(q, np.cross(n0, n1))
    assert tv.independence_check(X_AXIS, A1, A2, ruling) == "dependent"


def test_independence_generic_line():
    a3 = tv.EdgeLine.of([0.3, -2.0, 1.4], [0.5, 0.4, -0.8])
    assert tv.independence_check(X_AXIS, A1, A2, a3) == "independent"
    rng = np.random.default_rng(8)
    hits = 0
    for _ in range(20):
        a3 = tv.EdgeLine.of(rng.normal(size=3) * 2, rng.normal(size=3))
        try:
            verdict = tv.independence_check(X_AXIS, A1, A2, a3)
        except tv.NotPairwiseSkew:
            continue
        hits += verdict == "independent"
    assert hits >= 18
