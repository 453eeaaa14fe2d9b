import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbindex.errors import MeshError
from fbindex.mesh import Mesh, load_mesh, refine, topology, write_off
from fbindex.surfaces import annulus_mesh, disk_mesh


TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)


@pytest.mark.parametrize(
    "name, gk",
    [("flat_disk", (0, 1)), ("annulus", (0, 2)), ("torus", (1, 1)), ("genus2", (2, 1))],
)
def test_topology_of_fixtures(request, name, gk):
    t = topology(request.getfixturevalue(name))
    assert (t.genus, t.boundary_components) == gk
    assert t.harmonic_dimension == 2 * gk[0] + gk[1] - 1


def test_cylinder_topology(cylinder):
    m = cylinder[0]
    t = topology(m)
    assert (t.genus, t.boundary_components, t.euler_characteristic) == (0, 2, 0)
    assert len(m.boundary_loops) == 2


def test_closed_surface_rejected():
    m = Mesh(TET, [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    with pytest.raises(MeshError):
        topology(m)


def test_inconsistent_winding_rejected():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
    with pytest.raises(MeshError):
        Mesh(v, [[0, 1, 2], [1, 2, 3]])


@pytest.mark.parametrize(
    "v, t",
    [
        ([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]]),  # zero area
        ([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]]),  # index out of range
        ([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]]),  # repeated vertex
        ([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2]]),  # unused vertex
    ],
)
def test_malformed_input(v, t):
    with pytest.raises(MeshError):
        Mesh(v, t)


def test_edge_orientation_and_boundary(annulus):
    m = annulus
    assert np.all(m.edges[:, 0] < m.edges[:, 1])
    # interior edges have two faces, so boundary edges are exactly the loops
    assert m.boundary_edge_mask.sum() == sum(len(l) for l in m.boundary_loops)
    assert set(np.flatnonzero(m.boundary_vertex_mask)) == set(np.concatenate(m.boundary_loops))


def test_off_round_trip(flat_disk):
    text = write_off(flat_disk)
    assert text.startswith("NOFF")
    m2 = load_mesh(io.StringIO(text), "OFF")
    np.testing.assert_allclose(m2.vertices, flat_disk.vertices)
    np.testing.assert_array_equal(m2.triangles, flat_disk.triangles)
    np.testing.assert_allclose(m2.normals, flat_disk.normals)


def test_unknown_format():
    with pytest.raises(MeshError):
        load_mesh("ply", "PLY")


def test_rings_exclude_center(flat_disk):
    r1 = flat_disk.rings(1)
    assert len(r1[0]) == 6 and 0 not in r1[0]
    r2 = flat_disk.rings(2)
    assert set(r1[0]) < set(r2[0])


@given(st.integers(2, 7), st.integers(1, 4))
def test_flip_reverses_face_normals(n_theta_half, n_r):
    m = annulus_mesh(0.3, 1.0, 2 * n_theta_half + 2, n_r)
    flipped = Mesh(m.vertices, m.triangles[:, ::-1])
    np.testing.assert_allclose(flipped.face_normals, -m.face_normals)
    np.testing.assert_allclose(flipped.face_areas, m.face_areas)
    # edge set unchanged, per-face edge signs flip
    np.testing.assert_array_equal(flipped.edges, m.edges)


@given(st.integers(1, 5))
def test_refine_preserves_topology(res):
    m = disk_mesh(res)
    r = refine(m)
    assert r.n_faces == 4 * m.n_faces
    assert topology(r) == topology(m)
    assert np.isclose(r.area, m.area)
