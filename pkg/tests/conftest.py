import math

import pytest

from kubo_lattice import (
    DEFAULT_OMEGAS,
    GAPPED_BUILTINS,
    RefineSpec,
    build_honeycomb,
    builtin_model,
    bz_mesh,
    graphene_fermi_momenta,
    kubo_correlator_free,
    kubo_sigma,
)


@pytest.fixture(scope="session")
def graphene_refined_run():
    """Headline graphene run: 600x600 base mesh, depth-3 zoom at the cones.

    Costs a few seconds, so it is computed once and shared.
    """
    h = builtin_model("graphene")
    lat = build_honeycomb(1)
    refine = RefineSpec(centers=graphene_fermi_momenta(), depth=3)
    mesh = bz_mesh(lat, 600, refine)
    series = kubo_correlator_free(h, 0.0, math.inf, mesh, DEFAULT_OMEGAS)
    return kubo_sigma(series, log_term=True)


@pytest.fixture(scope="session")
def gapped_fits():
    """Log-aware fits for every gapped built-in on a moderate mesh."""
    out = {}
    for name in GAPPED_BUILTINS:
        h = builtin_model(name)
        lat = build_honeycomb(1, spinless=True)
        series = kubo_correlator_free(h, 0.0, math.inf, bz_mesh(lat, 120),
                                      DEFAULT_OMEGAS)
        out[name] = kubo_sigma(series, log_term=True)
    return out
