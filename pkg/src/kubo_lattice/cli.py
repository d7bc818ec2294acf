"""Command-line runner: config ingestion, dispatch, persistence, convergence.

Exit codes: 0 success, 2 config error, 3 computation error, 4 I/O error.
Errors are emitted as one JSON object on stderr. Output files are written
atomically; the JSON payload keeps all run data under "data" (byte-identical
across reruns of the same config) and run metadata under "provenance".
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
import datetime

import numpy as np

from . import __version__
from .lattice import build_honeycomb, bz_mesh, RefineSpec
from .bloch import builtin_model, graphene_fermi_momenta, spectral_gap
from .response import (DEFAULT_OMEGAS, UNITS_NATURAL, UNITS_E2_OVER_H,
                       kubo_correlator_free, kubo_sigma, fhs_chern, kubo_vs_tknn)
from .ed import (build_hubbard_ed, build_gapped_ed, honeycomb_nn_kernel,
                 continuity_check, many_body_gap, matsubara_correlator_ed,
                 sigma_interacting, half_filling_check, wick_rotation_check,
                 u_stability_scan)
from .config import (RunConfig, ConfigError, COMPUTATIONS, load_config,
                     config_to_dict, config_from_dict, apply_override,
                     with_output_directory)

OUTDIR_ENV = "KUBO_LATTICE_OUTDIR"
EXIT_CONFIG, EXIT_COMPUTE, EXIT_IO = 2, 3, 4

# Matsubara indices used when no frequency list is configured: dense inside
# the smallest decade, two points anchoring the second decade for the fit.
DEFAULT_MATSUBARA_INDICES = (1, 2, 3, 4, 5, 6, 8, 10, 50, 100)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    return value


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _csv_text(header, rows) -> str:
    def cell(v):
        return repr(v) if isinstance(v, float) else str(v)

    lines = [",".join(header)]
    lines.extend(",".join(cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# model/lattice assembly


def _bloch(config: RunConfig):
    return builtin_model(config.model.name, **config.model.params)


def _mesh_lattice(config: RunConfig, h):
    return build_honeycomb(max(config.lattice.L, 1),
                           spinless=h.spin_multiplicity == 1)


def _free_mesh(config: RunConfig, h):
    lat = _mesh_lattice(config, h)
    refine = None
    if config.model.name == "graphene" and config.numerics.refine_depth > 0:
        refine = RefineSpec(centers=graphene_fermi_momenta(),
                            depth=config.numerics.refine_depth)
    return bz_mesh(lat, config.numerics.mesh_n, refine)


def _bulk_gap(h, mu: float) -> float:
    lat = build_honeycomb(1, spinless=h.spin_multiplicity == 1)
    return 2.0 * spectral_gap(h, mu, bz_mesh(lat, 150)).delta_mu


def _ed_model(config: RunConfig, u: float, dims=None):
    h = _bloch(config)
    if config.model.name == "graphene":
        lat = build_honeycomb(config.lattice.L)
        return build_hubbard_ed(lat, config.model.params.get("t", 1.0), u,
                                dims=dims)
    return build_gapped_ed(h, honeycomb_nn_kernel(), u, config.lattice.L,
                           dims=dims)


def _ed_beta(config: RunConfig, default: float) -> float:
    return config.numerics.beta if config.numerics.beta is not None else default


def _matsubara_omegas(config: RunConfig, beta: float):
    if config.numerics.omegas:
        return list(config.numerics.omegas)
    return [2.0 * math.pi * n / beta for n in DEFAULT_MATSUBARA_INDICES]


def _first_u(config: RunConfig) -> float:
    return config.numerics.u_list[0] if config.numerics.u_list else 0.0


def _sigma_block(tensor, units: str) -> dict:
    t = tensor.convert(units)
    return {
        "sigma": _jsonable(np.real(t.sigma)),
        "uncertainty": _jsonable(np.real(t.uncertainty)),
        "units": units,
        "flags": list(t.flags),
    }


def _correlator_table(series):
    header = ["omega"]
    for i in (1, 2):
        for j in (1, 2):
            header += [f"re_K{i}{j}", f"im_K{i}{j}"]
    rows = []
    for w, k in zip(series.omegas, series.values):
        row = [float(w)]
        for i in range(2):
            for j in range(2):
                row += [float(k[i, j].real), float(k[i, j].imag)]
        rows.append(row)
    return header, rows


# ---------------------------------------------------------------------------
# computations: each returns (data, tables); tables map name -> (header, rows)


def _run_conductivity(config: RunConfig, units: str):
    nm = config.numerics
    h = _bloch(config)
    mesh = _free_mesh(config, h)
    beta = nm.beta if nm.beta is not None else math.inf
    omegas = list(nm.omegas) if nm.omegas else list(DEFAULT_OMEGAS)
    series = kubo_correlator_free(h, nm.mu, beta, mesh, omegas)
    tensor = kubo_sigma(series, log_term=True)
    data = _sigma_block(tensor, units)
    data["mesh_points"] = int(mesh.frac.shape[0])
    data["extrapolation"] = _jsonable(tensor.extrapolation)
    return data, {"correlator": _correlator_table(series)}


def _run_chern(config: RunConfig, units: str):
    h = _bloch(config)
    report = fhs_chern(h, config.numerics.mu, config.numerics.mesh_n)
    data = {
        "chern": int(report.chern),
        "per_band": [int(c) for c in report.per_band],
        "bands_below_mu": int(report.bands_below_mu),
        "max_abs_flux": float(report.max_abs_flux),
        "pre_round_sum": float(report.pre_round_sum),
        "mesh_n": int(report.mesh_n),
    }
    return data, {}


def _run_kubo_vs_tknn(config: RunConfig, units: str):
    nm = config.numerics
    h = _bloch(config)
    mesh = bz_mesh(_mesh_lattice(config, h), nm.mesh_n)
    omegas = list(nm.omegas) if nm.omegas else list(DEFAULT_OMEGAS)
    out = kubo_vs_tknn(h, nm.mu, mesh, omegas, n=24)
    data = {
        "kubo": _sigma_block(out["sigma_kubo"], units),
        "tknn": _sigma_block(out["sigma_tknn"], units),
        "chern": int(out["chern_report"].chern),
        "discrepancy_e2h": _jsonable(out["discrepancy_e2h"]),
        "max_discrepancy_e2h": float(out["max_discrepancy_e2h"]),
    }
    return data, {}


def _run_ed_spectrum(config: RunConfig, units: str):
    model = _ed_model(config, _first_u(config))
    header = ["sector", "index", "energy"]
    rows = []
    sector_ground = {}
    for n, energies in model.sector_eigenvalues().items():
        sector_ground[str(n)] = float(energies[0]) if energies.size else None
        rows.extend([int(n), int(i), float(e)] for i, e in enumerate(energies))
    data = {
        "model": model.tag,
        "n_modes": int(model.n_modes),
        "ground_energy": float(min(v for v in sector_ground.values() if v is not None)),
        "many_body_gap": float(many_body_gap(model, config.numerics.mu)),
        "sector_ground_energies": sector_ground,
        "half_filling": float(half_filling_check(model, _ed_beta(config, 20.0),
                                                 config.numerics.mu)),
    }
    return data, {"spectrum": (header, rows)}


def _run_ed_conductivity(config: RunConfig, units: str):
    nm = config.numerics
    model = _ed_model(config, _first_u(config))
    beta = _ed_beta(config, 20.0)
    omegas = _matsubara_omegas(config, beta)
    tensor = sigma_interacting(model, beta, nm.mu, omegas)
    series = matsubara_correlator_ed(model, beta, nm.mu, omegas)
    data = _sigma_block(tensor, units)
    data["model"] = model.tag
    data["beta"] = float(beta)
    data["many_body_gap"] = float(many_body_gap(model, nm.mu))
    return data, {"correlator": _correlator_table(series)}


def _run_ed_ustability(config: RunConfig, units: str):
    nm = config.numerics
    h = _bloch(config)
    if h.spin_multiplicity != 1:
        raise ValueError("the U-stability scan runs on spinless gapped models")
    beta = _ed_beta(config, 200.0)
    omegas = _matsubara_omegas(config, beta)
    if nm.u_list:
        u_values = list(nm.u_list)
    else:
        gap = _bulk_gap(h, nm.mu)
        u_values = [f * gap for f in (0.02, 0.05, 0.1)]
    sizes = list(range(1, config.lattice.L + 1))
    rows = u_stability_scan(h, honeycomb_nn_kernel(), beta, sizes, u_values,
                            omegas, nm.mu)
    factor = 2.0 * math.pi if units == UNITS_E2_OVER_H else 1.0
    table = [[r["L"], float(r["U"]), float(r["sigma12"] * factor),
              float(r["deviation"] * factor)] for r in rows]
    data = {
        "units": units,
        "beta": float(beta),
        "sizes": sizes,
        "u_values": [float(u) for u in u_values],
        "rows": [{"L": t[0], "U": t[1], "sigma12": t[2], "deviation": t[3]}
                 for t in table],
        "max_deviation": max((t[3] for t in table), default=0.0),
    }
    return data, {"ustability": (["L", "U", "sigma12", "deviation"], table)}


def _run_wick_check(config: RunConfig, units: str):
    nm = config.numerics
    h = _bloch(config)
    if h.spin_multiplicity != 1:
        raise ValueError("the rotation check runs on spinless gapped models")
    model = _ed_model(config, _first_u(config))
    beta = _ed_beta(config, 20.0)
    gap = _bulk_gap(h, nm.mu)
    if gap <= 1e-9:
        raise ValueError("rotation check needs a gapped model")
    omega = nm.omegas[0] if nm.omegas else 0.1 * gap
    t_max = nm.t_max if nm.t_max is not None else 10.0 * math.log(10.0) / omega
    report = wick_rotation_check(model, beta, nm.mu, t_max, omega)
    sym_defect = (report.diff + report.diff.T) / 2.0
    data = {
        "model": model.tag,
        "beta": float(beta),
        "omega": float(omega),
        "t_max": float(t_max),
        "truncation_bound": float(math.exp(-omega * t_max)),
        "lhs_hall": report.lhs_hall,
        "rhs_hall": report.rhs_hall,
        "abs_hall_diff": abs(report.hall_diff),
        "lhs": _jsonable(report.lhs),
        "rhs": _jsonable(report.rhs),
        "finite_size_symmetric_defect": float(np.abs(sym_defect).max()),
    }
    return data, {}


def _run_ward_check(config: RunConfig, units: str):
    u_values = list(config.numerics.u_list) if config.numerics.u_list \
        else [0.0, 0.1, -0.1]
    # dense site-resolved check caps at 12 modes: spinful models get the
    # two-cell torus, spinless ones keep the configured size
    dims = (2, 1) if config.model.name == "graphene" else None
    rows = []
    worst = 0.0
    for u in u_values:
        model = _ed_model(config, u, dims=dims)
        residual = continuity_check(model)
        flipped = continuity_check(model, flip_bond=0) if model.qamp.size else None
        worst = max(worst, residual)
        rows.append([float(u), float(residual),
                     float(flipped) if flipped is not None else ""])
    data = {
        "u_values": [float(u) for u in u_values],
        "max_residual": float(worst),
        "rows": [{"U": r[0], "residual": r[1],
                  "flipped_residual": r[2] if r[2] != "" else None}
                 for r in rows],
    }
    return data, {"ward": (["U", "residual", "flipped_residual"], rows)}


_RUNNERS = {
    "conductivity": _run_conductivity,
    "chern": _run_chern,
    "kubo-vs-tknn": _run_kubo_vs_tknn,
    "ed-spectrum": _run_ed_spectrum,
    "ed-conductivity": _run_ed_conductivity,
    "ed-ustability": _run_ed_ustability,
    "wick-check": _run_wick_check,
    "ward-check": _run_ward_check,
}


def run(config: RunConfig, units: str = UNITS_NATURAL) -> dict:
    """Execute the configured computation; returns {data, tables, provenance}."""
    if config.computation not in _RUNNERS:
        raise ConfigError(f"unknown computation {config.computation!r}")
    start = time.monotonic()
    data, tables = _RUNNERS[config.computation](config, units)
    # the echo covers what determines the numbers; output placement is
    # metadata, so the data payload stays byte-identical wherever it lands
    echo = config_to_dict(config)
    output_echo = echo.pop("output")
    data["config"] = echo
    provenance = {
        "artifact_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "wall_time_s": time.monotonic() - start,
        "output": output_echo,
    }
    return {"data": data, "tables": tables, "provenance": provenance}


# ---------------------------------------------------------------------------
# convergence sweeps

CONVERGENCE_PARAMETERS = ("mesh_n", "beta", "L", "omega_min", "T_max")


def _with_parameter(config: RunConfig, parameter: str, value) -> RunConfig:
    doc = config_to_dict(config)
    if parameter == "mesh_n":
        doc["numerics"]["mesh_n"] = int(value)
    elif parameter == "beta":
        doc["numerics"]["beta"] = float(value)
    elif parameter == "L":
        doc["lattice"]["L"] = int(value)
    elif parameter == "omega_min":
        doc["numerics"]["omegas"] = [float(value) * f for f in (1, 3, 10, 30, 100)]
    elif parameter == "T_max":
        doc["numerics"]["t_max"] = float(value)
    else:
        raise ConfigError(f"unknown convergence parameter {parameter!r}; "
                          f"available: {list(CONVERGENCE_PARAMETERS)}")
    return config_from_dict(doc)


def _scalar_summary(computation: str, data: dict) -> dict:
    if computation == "conductivity":
        s = data["sigma"]
        return {"sigma_11": s[0][0], "sigma_12": s[0][1], "sigma_22": s[1][1]}
    if computation == "chern":
        return {"chern": data["chern"], "max_abs_flux": data["max_abs_flux"]}
    if computation == "kubo-vs-tknn":
        return {"max_discrepancy_e2h": data["max_discrepancy_e2h"]}
    if computation == "ed-spectrum":
        return {"ground_energy": data["ground_energy"],
                "many_body_gap": data["many_body_gap"]}
    if computation == "ed-conductivity":
        return {"sigma_12": data["sigma"][0][1]}
    if computation == "ed-ustability":
        biggest = max(r["L"] for r in data["rows"])
        return {"max_deviation": max((r["deviation"] for r in data["rows"]
                                      if r["L"] == biggest), default=0.0)}
    if computation == "wick-check":
        return {"abs_hall_diff": data["abs_hall_diff"]}
    if computation == "ward-check":
        return {"max_residual": data["max_residual"]}
    raise ConfigError(f"unknown computation {computation!r}")


def convergence_report(config: RunConfig, parameter: str, values,
                       units: str = UNITS_NATURAL) -> dict:
    """Rerun the configured computation across parameter values."""
    if parameter not in CONVERGENCE_PARAMETERS:
        raise ConfigError(f"unknown convergence parameter {parameter!r}; "
                          f"available: {list(CONVERGENCE_PARAMETERS)}")
    if not values:
        raise ConfigError("convergence needs a nonempty value list")
    rows = []
    keys = None
    for value in values:
        result = run(_with_parameter(config, parameter, value), units)
        scalars = _scalar_summary(config.computation, result["data"])
        if keys is None:
            keys = list(scalars)
        rows.append({parameter: value, **scalars})
    lead = keys[0]
    for prev, cur in zip(rows, rows[1:]):
        cur[f"diff_{lead}"] = cur[lead] - prev[lead]
    rows[0][f"diff_{lead}"] = None
    header = [parameter, *keys, f"diff_{lead}"]
    table = [[r[k] if r.get(k) is not None else "" for k in header] for r in rows]
    echo = config_to_dict(config)
    output_echo = echo.pop("output")
    return {
        "data": {
            "computation": config.computation,
            "parameter": parameter,
            "values": list(values),
            "rows": rows,
            "config": echo,
        },
        "tables": {"convergence": (header, table)},
        "provenance": {
            "artifact_version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "output": output_echo,
        },
    }


# ---------------------------------------------------------------------------
# entry point


def _persist(result: dict, config: RunConfig, stem: str) -> list:
    outdir = config.output.directory
    os.makedirs(outdir, exist_ok=True)
    written = []
    if "json" in config.output.formats:
        path = os.path.join(outdir, f"{stem}.json")
        payload = {"data": _jsonable(result["data"]),
                   "provenance": result["provenance"]}
        _write_atomic(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")
        written.append(path)
    if "csv" in config.output.formats:
        for name, (header, rows) in result["tables"].items():
            path = os.path.join(outdir, f"{stem}_{name}.csv")
            _write_atomic(path, _csv_text(header, rows))
            written.append(path)
    return written


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kubo-lattice",
        description="Lattice linear-response toolkit: conductivity tensors, "
                    "topological invariants, and interacting small-torus checks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a config entry, e.g. numerics.mesh_n=240")
        p.add_argument("--units", choices=[UNITS_NATURAL, UNITS_E2_OVER_H],
                       default=UNITS_NATURAL)
        p.add_argument("--outdir", help="output directory (wins over "
                                        f"${OUTDIR_ENV} and the config)")

    for name in COMPUTATIONS:
        add_common(sub.add_parser(name, help=f"run the {name} computation"))

    conv = sub.add_parser("convergence",
                          help="rerun a computation across parameter values")
    add_common(conv)
    conv.add_argument("--parameter", required=True,
                      choices=list(CONVERGENCE_PARAMETERS))
    conv.add_argument("--values", required=True,
                      help="JSON list of parameter values, e.g. [200,400,800]")
    return parser


def _resolve_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.subcommand in COMPUTATIONS and args.subcommand != config.computation:
        config = config_from_dict({**config_to_dict(config),
                                   "computation": args.subcommand})
    env_dir = os.environ.get(OUTDIR_ENV)
    if env_dir:
        config = with_output_directory(config, env_dir)
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, raw = item.partition("=")
        config = apply_override(config, key, raw)
    if args.outdir:
        config = with_output_directory(config, args.outdir)
    return config


def _fail(kind: str, code: int, exc: BaseException) -> int:
    print(json.dumps({"error": {"exit_code": code, "kind": kind,
                                "message": str(exc)}}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.subcommand == "convergence":
            try:
                values = json.loads(args.values)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--values must be a JSON list: {exc}") from exc
            if not isinstance(values, list):
                raise ConfigError("--values must be a JSON list")
            result = convergence_report(config, args.parameter, values, args.units)
            stem = f"convergence_{args.parameter}"
        else:
            result = run(config, args.units)
            stem = config.computation
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail("computation", EXIT_COMPUTE, exc)

    try:
        written = _persist(result, config, stem)
    except OSError as exc:
        return _fail("io", EXIT_IO, exc)
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
