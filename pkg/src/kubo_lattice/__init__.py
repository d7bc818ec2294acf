"""Lattice linear response: Kubo conductivity, Chern invariants, small-torus ED.

Free-fermion side: Bloch Hamiltonians on the honeycomb lattice, the
current-current correlator on refined Brillouin-zone meshes, the small
frequency extrapolation of the conductivity tensor, and the discretized
Chern number with its Kubo cross-check. Interacting side: exact
diagonalization on small tori, the Matsubara conductivity, charge
continuity, half filling, interaction-stability scans, and the
real-time/imaginary-time rotation identity.
"""

__version__ = "0.1.0"

from .lattice import (
    SQRT3,
    HONEYCOMB_BASIS,
    LatticeSpec,
    RefineSpec,
    BZMesh,
    build_honeycomb,
    build_square,
    nearest_neighbor_vectors,
    cell_area,
    reciprocal_basis,
    bz_mesh,
    refined_point_count,
    torus_momenta,
    torus_distance,
)
from .bloch import (
    BlochHamiltonian,
    GapReport,
    graphene_bloch,
    haldane_bloch,
    flat_bands_bloch,
    custom_bloch,
    current_vertex,
    spectral_gap,
    fermi_points,
    graphene_fermi_momenta,
    builtin_model,
    BUILTIN_MODELS,
    GAPPED_BUILTINS,
)
from .response import (
    UNITS_NATURAL,
    UNITS_E2_OVER_H,
    E2_OVER_H_NATURAL,
    DEFAULT_OMEGAS,
    CorrelatorSeries,
    ConductivityTensor,
    ChernReport,
    kubo_correlator_free,
    kubo_sigma,
    fhs_chern,
    tknn_sigma12,
    kubo_vs_tknn,
)
from .ed import (
    FockSpace,
    FockOperator,
    EDModel,
    WickReport,
    build_hubbard_ed,
    build_gapped_ed,
    build_open_cluster,
    honeycomb_nn_kernel,
    bond_current_operator,
    position_operator,
    continuity_check,
    matsubara_correlator_ed,
    many_body_gap,
    sigma_interacting,
    half_filling_check,
    wick_rotation_check,
    u_stability_scan,
)
from .config import (
    RunConfig,
    ConfigError,
    COMPUTATIONS,
    parse_config,
    serialize_config,
    load_config,
)
from .cli import run, convergence_report, main

__all__ = [name for name in dir() if not name.startswith("_")]
