import numpy as np
import pytest

from polybilliard import billiard as bl
from polybilliard import unfolding as uf
from polybilliard.geometry import Plane, box, regular_tetrahedron, unit_cube

SQRT2 = np.sqrt(2.0)


@pytest.fixture(scope="module")
def cube():
    return unit_cube()


def _orbit(cube, m, theta, n):
    theta = np.asarray(theta, float)
    x = bl.phase_point(cube, m, theta / np.linalg.norm(theta))
    rec = bl.orbit(x, n, cube)
    assert rec.completed
    return rec


# ---------------------------------------------------------------------------
# isometries
# ---------------------------------------------------------------------------

def test_reflection_isometry():
    pl = Plane(np.array([0.0, 0.0, 1.0]), -1.0)   # plane z = 1
    R = uf.Isometry.reflection(pl)
    assert np.allclose(R.apply([0.3, 0.4, 0.0]), [0.3, 0.4, 2.0])
    assert np.allclose(R.compose(R).linear, np.eye(3))
    assert np.allclose(R.compose(R).translation, 0.0)
    assert R.orthogonality_error() < 1e-15


def test_compose_order():
    Rz0 = uf.Isometry.reflection(Plane(np.array([0.0, 0.0, 1.0]), 0.0))
    Rz1 = uf.Isometry.reflection(Plane(np.array([0.0, 0.0, 1.0]), -1.0))
    # Rz1 o Rz0 maps z -> 2 + z: a pure translation by (0,0,2)
    G = Rz1.compose(Rz0)
    assert G.is_translation(1e-12)
    assert np.allclose(G.translation, [0, 0, 2.0])


def test_inverse():
    rng = np.random.default_rng(0)
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    R = uf.Isometry.reflection(Plane(n, 0.7))
    RI = R.compose(R.inverse())
    assert np.allclose(RI.linear, np.eye(3))
    assert np.abs(RI.translation).max() < 1e-12


# ---------------------------------------------------------------------------
# orbit unfolding
# ---------------------------------------------------------------------------

def test_unfold_bouncing_orbit(cube):
    rec = _orbit(cube, [0.5, 0.5, 0.0], [0, 0, 1.0], 6)
    track = uf.unfold_orbit(rec, cube)
    expect = np.array([[0.5, 0.5, float(k)] for k in range(6)])
    assert np.abs(track.points - expect).max() < 1e-12
    assert track.residual < 1e-12


def test_unfold_period_four(cube):
    rec = _orbit(cube, [0.25, 0.5, 0.0], [1.0, 0, 1.0], 8)
    track = uf.unfold_orbit(rec, cube)
    theta = np.array([1.0, 0, 1.0]) / SQRT2
    lam = (track.points - track.points[0]) @ theta
    recon = track.points[0] + lam[:, None] * theta
    assert np.abs(track.points - recon).max() < 1e-12
    assert np.allclose(track.points[2], [1.25, 0.5, 1.0])
    assert np.allclose(track.points[-1], [4.0, 0.5, 3.75])


def test_unfold_single_bounce_mirror(cube):
    # one reflection: the point after the bounce unfolds to its mirror image
    rec = _orbit(cube, [0.25, 0.5, 0.0], [1.0, 0, 1.0], 3)
    track = uf.unfold_orbit(rec, cube)
    folded_third = rec.points[2].m
    mirrored = folded_third.copy()
    mirrored[0] = 2.0 - mirrored[0]    # reflect across x = 1
    assert np.allclose(track.points[2], mirrored)
    assert np.allclose(track.points[1], rec.points[1].m)


def test_unfolded_faces_contain_unfolded_points(cube):
    rng = np.random.default_rng(5)
    for _ in range(10):
        m, th, f = bl.random_phase_points(cube, 1, rng)
        rec = bl.orbit(bl.PhasePoint(int(f[0]), m[0], th[0]), 40, cube)
        if not rec.completed:
            continue
        track = uf.unfold_orbit(rec, cube)
        for k, (pt, poly) in enumerate(zip(track.points, track.face_polygons)):
            n = np.cross(poly[1] - poly[0], poly[2] - poly[0])
            n /= np.linalg.norm(n)
            assert abs((pt - poly[0]) @ n) < 1e-9


def test_unfold_colinearity_long(cube):
    rng = np.random.default_rng(6)
    done = 0
    while done < 20:
        m, th, f = bl.random_phase_points(cube, 1, rng)
        rec = bl.orbit(bl.PhasePoint(int(f[0]), m[0], th[0]), 200, cube)
        if not rec.completed or rec.near_singular_steps:
            continue
        track = uf.unfold_orbit(rec, cube)
        assert track.relative_residual < 1e-9
        done += 1


# ---------------------------------------------------------------------------
# reflection group closure
# ---------------------------------------------------------------------------

def test_cube_group_order_eight(cube):
    closure = uf.generate_group(cube, bound=100)
    assert closure.closed
    assert closure.order == 8
    # exactly the diagonal sign matrices
    for M in closure.elements:
        assert np.allclose(M, np.diag(np.diag(M)), atol=1e-12)
        assert np.allclose(np.abs(np.diag(M)), 1.0)
    signs = {tuple(int(x) for x in np.sign(np.diag(M))) for M in closure.elements}
    assert len(signs) == 8


def test_box_group_same_as_cube():
    closure = uf.generate_group(box(2.0, 1.0, 0.5), bound=100)
    assert closure.closed and closure.order == 8


def test_tetrahedron_group_not_closed():
    closure = uf.generate_group(regular_tetrahedron(), bound=1000)
    assert not closure.closed
    assert closure.order is None
    assert len(closure.elements) > 1000


def test_closure_contains_identity_and_inverses(cube):
    closure = uf.generate_group(cube, bound=100)
    assert closure.contains(np.eye(3))
    for M in closure.elements:
        assert closure.contains(M.T)   # orthogonal inverse


def test_closure_closed_under_generators(cube):
    closure = uf.generate_group(cube, bound=100)
    gens = {tuple(np.round(np.eye(3) - 2 * np.outer(f.plane.normal, f.plane.normal), 9).ravel())
            for f in cube.faces}
    for M in closure.elements:
        for gt in gens:
            G = np.array(gt).reshape(3, 3)
            assert closure.contains(G @ M)
