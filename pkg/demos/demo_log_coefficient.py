"""demo_log_coefficient.py

The small-frequency expansion of the graphene conductivity quotient picks
up an omega*log(omega) term from the gapless cones, so sigma(omega) is
continuous but not differentiable at omega = 0. Gapped models have no such
term. The fit reports both the coefficient and its uncertainty; compare
the significance across models.
"""

import math

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


def fit_for(name, n, depth):
    h = builtin_model(name)
    lat = build_honeycomb(1, spinless=h.spin_multiplicity == 1)
    refine = None
    if name == "graphene" and depth > 0:
        refine = RefineSpec(centers=graphene_fermi_momenta(), depth=depth)
    series = kubo_correlator_free(h, 0.0, math.inf, bz_mesh(lat, n, refine),
                                  DEFAULT_OMEGAS)
    return kubo_sigma(series, log_term=True).extrapolation["fit"]["11"]


def main():
    print(f"{'model':24s} {'c1 (w log w)':>14s} {'uncertainty':>12s} "
          f"{'|c1|/unc':>9s}")
    # the graphene row costs a few seconds: the coefficient only shows up
    # once the mesh resolves the cones well inside the omega window
    rows = [("graphene", 600, 3)]
    rows += [(name, 120, 0) for name in GAPPED_BUILTINS]
    for name, n, depth in rows:
        f = fit_for(name, n, depth)
        c1, unc = f["c1"], f["c1_uncertainty"]
        ratio = abs(c1) / unc if unc else 0.0
        verdict = "log term present" if ratio > 5 else \
            "consistent with zero" if ratio <= 1 else "inconclusive"
        print(f"{name:24s} {c1:+14.4e} {unc:12.4e} {ratio:9.2f}  {verdict}")
    print("\nonly the gapless model clears its own uncertainty, with a"
          "\ncoefficient several times any gapped one's; pushing it past"
          "\nthe formal 5x significance bar needs deeper cone refinement")


if __name__ == "__main__":
    main()
