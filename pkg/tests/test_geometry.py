from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbindex.bounds import check_constant_mean_curvature
from fbindex.errors import ConfigError, GeometryError
from fbindex.geometry import (
    Ball,
    BallComplement,
    HalfSpace,
    Slab,
    check_free_boundary,
    compute_geometry,
    container_from_dict,
)
from fbindex.surfaces import gen_disk_in_ball
from fbindex.testfields import build_test_set


@pytest.mark.parametrize("name", ["cylinder", "hemisphere", "disk_ball"])
def test_curvature_matches_oracle(request, geom, name):
    m, c, oracle = request.getfixturevalue(name)
    g = geom(m)
    inner = ~m.boundary_vertex_mask
    np.testing.assert_allclose(g.H[inner], oracle.exact_H, atol=2e-3)
    np.testing.assert_allclose(g.A_norm_sq[inner], oracle.exact_A_norm_sq, atol=5e-3)


def test_cylinder_shape_operator(cylinder, geom):
    m = cylinder[0]
    g = geom(m)
    x = m.vertices
    xi = np.c_[-x[:, 1], x[:, 0], np.zeros(len(x))]
    np.testing.assert_allclose(np.einsum("vij,vj->vi", g.shape3, xi), xi, atol=1e-6)
    np.testing.assert_allclose(g.rotate(xi), np.tile([0, 0, -1.0], (len(x), 1)), atol=1e-12)


@pytest.mark.parametrize("name", ["cylinder", "hemisphere", "disk_ball"])
def test_free_boundary_holds(request, geom, name):
    m, c, _ = request.getfixturevalue(name)
    assert check_free_boundary(m, geom(m), c) < 1e-8


def test_tilted_disk_detected():
    m, c, _ = gen_disk_in_ball(8, 0.1)
    assert check_free_boundary(m, compute_geometry(m), c) == pytest.approx(0.1, abs=1e-6)


def test_mean_convexity():
    assert Ball().is_mean_convex()
    assert HalfSpace().is_mean_convex()
    assert Slab(0, 1).is_mean_convex()
    assert not BallComplement().is_mean_convex()


@pytest.mark.parametrize("c", [Ball(2.0, (1, 0, 0)), BallComplement(), HalfSpace((0, 0, 1), (0, 1, 0)), Slab(-1, 3)])
def test_container_round_trip(c):
    c2 = container_from_dict(c.to_dict())
    p = np.random.default_rng(1).normal(size=(5, 3))
    np.testing.assert_allclose(c2.value(p), c.value(p))


@pytest.mark.parametrize("d", [{"type": "torus"}, {"type": "slab", "lower": 1}, {"type": "slab", "lower": 2, "upper": 1}])
def test_container_bad_description(d):
    with pytest.raises(ConfigError):
        container_from_dict(d)


def test_non_constant_mean_curvature_rejected():
    with pytest.raises(GeometryError):
        check_constant_mean_curvature(np.array([0.5, 0.5, 0.6]), 1e-3)
    assert check_constant_mean_curvature(np.full(4, 0.5), 1e-3) == 0.5


@lru_cache(maxsize=None)
def _small_hemisphere():
    from fbindex.surfaces import gen_hemisphere_on_plane

    m = gen_hemisphere_on_plane(1.0, 2)[0]
    return m, compute_geometry(m)


@given(st.integers(0, 10_000))
def test_frame_and_trace_identities(seed):
    # sum_i E_i (x) E_i = I - N N^T and sum_i w_i^2 = |xi|^2 for tangent xi
    m, g = _small_hemisphere()
    rng = np.random.default_rng(seed)
    t = build_test_set(rng.normal(size=(m.n_vertices, 3)), m, g)
    N = g.normals
    P = np.eye(3) - N[:, :, None] * N[:, None, :]
    np.testing.assert_allclose(np.einsum("vik,vjk->vij", t.E, t.E), P, atol=1e-12)
    np.testing.assert_allclose((t.w**2).sum(1), (t.xi**2).sum(1), rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose((t.wbar**2).sum(1), (t.xi**2).sum(1), rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose((t.g**2).sum(1), 1.0)
