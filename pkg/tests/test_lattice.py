import math

import numpy as np
import pytest

from kubo_lattice import (
    HONEYCOMB_BASIS,
    RefineSpec,
    build_honeycomb,
    build_square,
    bz_mesh,
    cell_area,
    nearest_neighbor_vectors,
    reciprocal_basis,
    refined_point_count,
    torus_distance,
    torus_momenta,
)

SQRT3 = math.sqrt(3.0)


def test_honeycomb_geometry():
    lat = build_honeycomb(2)
    assert np.allclose(lat.basis, HONEYCOMB_BASIS)
    assert cell_area(lat) == pytest.approx(1.5 * SQRT3)
    # B sublattice sits one bond away from A along x
    assert np.allclose(lat.offsets[-1] - lat.offsets[0], [1.0, 0.0])


def test_honeycomb_spin_channels():
    assert build_honeycomb(2).n_spin == 2
    assert build_honeycomb(2, spinless=True).n_spin == 1


def test_nearest_neighbor_vectors_unit_and_balanced():
    delta = nearest_neighbor_vectors()
    assert delta.shape == (3, 2)
    assert np.allclose(np.linalg.norm(delta, axis=1), 1.0)
    assert np.allclose(delta.sum(axis=0), 0.0)


def test_reciprocal_basis_duality():
    lat = build_honeycomb(1)
    g = reciprocal_basis(lat)
    assert np.allclose(g @ lat.basis.T, 2.0 * math.pi * np.eye(2), atol=1e-12)


def test_square_lattice():
    lat = build_square(3)
    assert cell_area(lat) == pytest.approx(1.0)
    assert np.allclose(reciprocal_basis(lat), 2.0 * math.pi * np.eye(2))


def test_build_errors():
    with pytest.raises(ValueError, match="size must be >= 1"):
        build_honeycomb(0)
    with pytest.raises(ValueError, match="mesh size"):
        bz_mesh(build_honeycomb(1), 0)


def test_mesh_weights_sum_to_zone_area():
    lat = build_honeycomb(1)
    mesh = bz_mesh(lat, 30)
    g = reciprocal_basis(lat)
    zone = abs(g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0])
    assert mesh.weights.sum() == pytest.approx(zone, rel=1e-13)
    assert mesh.frac.shape == (900, 2)


def test_mesh_avoids_symmetry_points():
    # offset grid: the gapless momenta at fractional thirds are never sampled
    mesh = bz_mesh(build_honeycomb(1), 90)
    thirds = np.array([[1.0 / 3.0, 2.0 / 3.0], [2.0 / 3.0, 1.0 / 3.0]])
    for point in thirds:
        d = np.abs(mesh.frac - point[None, :]).max(axis=1)
        assert d.min() > 1e-4


def test_refined_mesh_preserves_weight_sum():
    lat = build_honeycomb(1)
    refine = RefineSpec(centers=np.array([[2.0 * math.pi / 3.0,
                                           2.0 * math.pi / (3.0 * SQRT3)]]),
                        depth=2)
    mesh = bz_mesh(lat, 150, refine)
    flat = bz_mesh(lat, 150)
    assert mesh.weights.sum() == pytest.approx(flat.weights.sum(), rel=1e-14)
    assert mesh.frac.shape[0] == refined_point_count(150, refine)
    assert mesh.frac.shape[0] > flat.frac.shape[0]


def test_refined_quadrature_matches_flat_on_smooth_integrand():
    # on a smooth integrand the zoom blocks change nothing beyond their own
    # quadrature error, which is O(cell^2): at n=600 that sits below 1e-6
    lat = build_honeycomb(1)
    refine = RefineSpec(centers=np.array([[0.5, 0.5]]), depth=1)
    mesh = bz_mesh(lat, 600, refine)
    flat = bz_mesh(lat, 600)

    def integrate(m):
        ks = m.frac @ reciprocal_basis(lat)
        f = np.cos(ks[:, 0]) * np.sin(2.0 * ks[:, 1]) + 2.0
        return float((m.weights * f).sum())

    assert integrate(mesh) == pytest.approx(integrate(flat), abs=1e-6)


def test_refinement_overlap_rejected():
    # two centers whose guard blocks collide on a coarse base mesh
    centers = np.array([[2.0 * math.pi / 3.0, 2.0 * math.pi / (3.0 * SQRT3)],
                        [2.0 * math.pi / 3.0, -2.0 * math.pi / (3.0 * SQRT3)]])
    with pytest.raises(ValueError, match="overlap"):
        bz_mesh(build_honeycomb(1), 60, RefineSpec(centers=centers, depth=1))


def test_refine_spec_validation():
    c = np.zeros((1, 2))
    with pytest.raises(ValueError, match="depth"):
        RefineSpec(centers=c, depth=-1)
    with pytest.raises(ValueError, match="power of two"):
        RefineSpec(centers=c, depth=1, zoom=48)
    with pytest.raises(ValueError, match="guard"):
        RefineSpec(centers=c, depth=1, guard=0)


def test_torus_momenta_counts_and_kind():
    lat = build_honeycomb(2, spinless=True)
    mesh = torus_momenta(lat)
    assert mesh.frac.shape == (4, 2)
    assert mesh.kind == "torus"
    rect = torus_momenta(lat, dims=(2, 1))
    assert rect.frac.shape == (2, 2)
    # torus weights also sum to the zone area
    g = reciprocal_basis(lat)
    zone = abs(g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0])
    assert mesh.weights.sum() == pytest.approx(zone, rel=1e-13)


def test_torus_distance_wraps():
    lat = build_honeycomb(4, spinless=True)
    # sites at opposite corners are one lattice vector apart after wrapping
    d = torus_distance(lat, (0, 0), (3, 0))
    assert d == pytest.approx(np.linalg.norm(lat.basis[0]))
