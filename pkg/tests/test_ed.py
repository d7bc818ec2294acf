import math
from itertools import combinations

import numpy as np
import pytest

from kubo_lattice import (
    EDModel,
    FockOperator,
    FockSpace,
    bond_current_operator,
    build_gapped_ed,
    build_honeycomb,
    build_hubbard_ed,
    build_open_cluster,
    build_square,
    builtin_model,
    continuity_check,
    half_filling_check,
    haldane_bloch,
    honeycomb_nn_kernel,
    flat_bands_bloch,
    kubo_correlator_free,
    many_body_gap,
    matsubara_correlator_ed,
    position_operator,
    sigma_interacting,
    torus_momenta,
    u_stability_scan,
    wick_rotation_check,
)

BULK_GAP = 1.0392304845413263  # haldane_topological, from the band spectrum


def topological_model(u=0.0, dims=(2, 1)):
    h = builtin_model("haldane_topological")
    return build_gapped_ed(h, honeycomb_nn_kernel(), u, 2, dims=dims)


def test_fock_space_sectors():
    space = FockSpace(4)
    assert space.dim == 16
    sizes = [len(space.sector_states(n)) for n in space.sectors()]
    assert sizes == [1, 4, 6, 4, 1]
    two = space.sector_states(2)
    assert np.array_equal(two, np.sort(two))
    with pytest.raises(ValueError, match="out of range"):
        space.sector_states(5)
    with pytest.raises(ValueError, match="at least one mode"):
        FockSpace(0)


def test_fock_operator_rejects_non_hermitian_terms():
    space = FockSpace(3)
    with pytest.raises(ValueError, match="not hermitian"):
        FockOperator(space, [0], [1], [1.0])
    ok = FockOperator(space, [0, 1], [1, 0], [0.5 + 0.25j, 0.5 - 0.25j])
    m = ok.matrix(None)
    assert np.allclose(m, m.conj().T)


def _jw_mode_operator(n_modes, p):
    """c_p as an explicit string-of-Z construction on the bitstring basis."""
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])  # acts on (|0>, |1>) ordering
    z = np.diag([1.0, -1.0])
    full = np.eye(1)
    for q in reversed(range(n_modes)):
        if q == p:
            op = lower
        elif q < p:
            op = z
        else:
            op = np.eye(2)
        full = np.kron(full, op)
    return full


def test_sector_assembly_matches_explicit_fermion_matrices():
    model = topological_model(u=0.3)
    n = model.n_modes
    cs = [_jw_mode_operator(n, p) for p in range(n)]
    h_ref = np.zeros((2**n, 2**n), dtype=complex)
    for a, b, amp in zip(model.qa, model.qb, model.qamp):
        h_ref += amp * cs[a].conj().T @ cs[b]
    for i, j, coeff in zip(model.ia, model.ib, model.icoeff):
        ni = cs[i].conj().T @ cs[i] - 0.5 * np.eye(2**n)
        nj = cs[j].conj().T @ cs[j] - 0.5 * np.eye(2**n)
        h_ref += coeff * ni @ nj
    assert np.abs(model.matrix(None) - h_ref).max() < 1e-12


def test_hubbard_builder_input_checks():
    with pytest.raises(ValueError, match="two orbitals"):
        build_hubbard_ed(build_square(2), 1.0, 0.0)
    with pytest.raises(ValueError, match="spinful"):
        build_hubbard_ed(build_honeycomb(2, spinless=True), 1.0, 0.5)


def test_free_torus_correlator_matches_band_route():
    # same physical system, two independent evaluations
    lat = build_honeycomb(2, spinless=True)
    model = build_hubbard_ed(lat, 1.0, 0.0, dims=(2, 1))
    beta = 10.0
    omegas = [2.0 * math.pi * k / beta for k in (1, 2, 3)]
    ed = matsubara_correlator_ed(model, beta, 0.0, omegas)
    h = builtin_model("graphene")
    free = kubo_correlator_free(
        h, 0.0, beta, torus_momenta(lat, (2, 1)), omegas)
    # the ED model is spinless, the band route counts spin twice
    assert np.abs(ed.values - free.values / 2.0).max() < 1e-10


def test_matsubara_grid_enforced():
    model = topological_model()
    with pytest.raises(ValueError, match="off the Matsubara grid"):
        matsubara_correlator_ed(model, 10.0, 0.0, [0.37])


def test_diagonal_correlator_even_in_frequency():
    model = topological_model()
    beta = 10.0
    base = 2.0 * math.pi / beta
    series = matsubara_correlator_ed(model, beta, 0.0, [base, -base])
    plus = series.value_at(base)
    minus = series.value_at(-base)
    for d in (0, 1):
        assert plus[d, d] == pytest.approx(minus[d, d], abs=1e-14)


def test_gapless_spectrum_rejected_for_fit():
    model = build_gapped_ed(flat_bands_bloch((0.0, 0.0)), None, 0.0, 1,
                            dims=(2, 1))
    assert many_body_gap(model) < 1e-12
    with pytest.raises(ValueError, match="gapless ED spectrum"):
        sigma_interacting(model, 10.0, 0.0, [0.628])


def test_bond_current_equals_commutator_on_open_cluster():
    h = haldane_bloch(1.0, 0.1, math.pi / 2.0, 0.3)
    model = build_open_cluster(h, (2, 2))
    hm = model.matrix(None)
    for d in (1, 2):
        j = bond_current_operator(model, d).matrix(None)
        x = position_operator(model, d).matrix(None)
        assert np.abs(j - 1j * (hm @ x - x @ hm)).max() < 1e-12
    with pytest.raises(ValueError, match="direction"):
        bond_current_operator(model, 3)
    with pytest.raises(ValueError, match="direction"):
        position_operator(model, 0)


def test_continuity_on_torus_and_open_cluster():
    torus = topological_model(u=0.3)
    assert continuity_check(torus) < 1e-13
    assert continuity_check(torus, flip_bond=0) > 0.1
    open_box = build_open_cluster(builtin_model("haldane_topological"), (2, 2))
    assert continuity_check(open_box) < 1e-13


def test_half_filling_is_exact():
    for u in (0.5, -0.5):
        model = build_hubbard_ed(build_honeycomb(2), 1.0, u, dims=(2, 1))
        for beta in (5.0, 20.0):
            assert half_filling_check(model, beta) == pytest.approx(0.5, abs=1e-12)


def test_gibbs_beta_validation():
    model = topological_model()
    with pytest.raises(ValueError, match="beta must be positive"):
        half_filling_check(model, 0.0)
    with pytest.raises(ValueError, match="beta must be positive"):
        half_filling_check(model, math.inf)


def test_interaction_kernel_validation():
    h = builtin_model("haldane_topological")
    lop = {(1, 0): [[0.0, 1.0], [0.0, 0.0]]}
    with pytest.raises(ValueError, match="asymmetric v"):
        build_gapped_ed(h, lop, 0.3, 1, dims=(2, 1))
    cplx = {(0, 0): [[0.0, 1.0j], [-1.0j, 0.0]]}
    with pytest.raises(ValueError, match="kernel must be real"):
        build_gapped_ed(h, cplx, 0.3, 1, dims=(2, 1))
    assert build_gapped_ed(h, lop, 0.0, 1, dims=(2, 1)).icoeff.size == 0


def test_spectrum_and_sector_listing():
    model = topological_model()
    spec = model.spectrum()
    assert len(spec) == model.space.dim
    assert np.all(np.diff(spec) >= 0)
    by_sector = model.sector_eigenvalues()
    assert sorted(by_sector) == list(range(model.n_modes + 1))
    assert sum(len(v) for v in by_sector.values()) == model.space.dim


def test_wick_rotation_hall_agreement_noninteracting():
    model = topological_model()
    omega = 0.1 * BULK_GAP
    t_max = 10.0 * math.log(10.0) / omega
    rep = wick_rotation_check(model, 20.0, 0.0, t_max, omega)
    assert abs(rep.hall_diff) < 1e-6
    assert abs(rep.lhs_hall) > 0.01  # the compared quantity is not trivially zero
    with pytest.raises(ValueError, match="omega must be"):
        wick_rotation_check(model, 20.0, 0.0, t_max, -omega)


def test_u_stability_smallest_size_has_live_hall_signal():
    # regression: the one-cell torus has identically vanishing currents, so
    # size 1 must be realised as the two-cell torus and produce sigma12 != 0
    h = builtin_model("haldane_topological")
    beta = 200.0
    omegas = [2.0 * math.pi * k / beta for k in (1, 2, 3, 4, 5, 6, 8, 10, 50, 100)]
    rows = u_stability_scan(h, honeycomb_nn_kernel(), beta, [1],
                            [0.05 * BULK_GAP], omegas)
    assert [r["U"] for r in rows] == [0.0, pytest.approx(0.05 * BULK_GAP)]
    assert abs(rows[0]["sigma12"]) > 0.01
    assert rows[0]["deviation"] == 0.0
    assert rows[1]["deviation"] < 0.05 * abs(rows[0]["sigma12"])
