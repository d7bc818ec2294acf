"""Run configuration: parsing, validation, canonical serialization.

The on-disk format is JSON. Unknown keys anywhere in the document are
errors; a parsed config serializes back to the same value (round-trip
identity), and the serialized form is canonical (sorted keys), which is
what makes rerun outputs byte-comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace

from .bloch import BUILTIN_MODELS, builtin_model

COMPUTATIONS = (
    "conductivity",
    "chern",
    "kubo-vs-tknn",
    "ed-spectrum",
    "ed-conductivity",
    "ed-ustability",
    "wick-check",
    "ward-check",
)

LATTICE_PRESETS = ("honeycomb", "square")
OUTPUT_FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Malformed, unknown-key, or out-of-range configuration."""


@dataclass(frozen=True)
class ModelConfig:
    name: str = "graphene"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LatticeConfig:
    preset: str = "honeycomb"
    L: int = 2


@dataclass(frozen=True)
class NumericsConfig:
    mesh_n: int = 600
    refine_depth: int = 3
    omegas: tuple = ()          # () -> computation-dependent default grid
    beta: float | None = None   # None -> T=0 for the free bubble, 20/t for ED
    mu: float = 0.0
    u_list: tuple = ()
    t_max: float | None = None


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "."
    formats: tuple = ("json", "csv")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    computation: str = "conductivity"
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


_SECTIONS = {
    "model": ("name", "params"),
    "lattice": ("preset", "L"),
    "numerics": ("mesh_n", "refine_depth", "omegas", "beta", "mu", "u_list", "t_max"),
    "output": ("directory", "formats"),
}
_TOP_KEYS = ("model", "lattice", "computation", "numerics", "output")


def _reject_unknown(mapping: dict, allowed, where: str):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key in {where}: {key!r}")


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _as_number(value, where: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{where} must be a number, got {value!r}")
    return float(value)


def _number_tuple(value, where: str) -> tuple:
    _require(isinstance(value, (list, tuple)), f"{where} must be a list of numbers")
    return tuple(_as_number(v, where) for v in value)


def config_from_dict(doc: dict) -> RunConfig:
    """Validate a plain dict (already JSON-decoded) into a RunConfig."""
    _require(isinstance(doc, dict), "config document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "config")
    for section, allowed in _SECTIONS.items():
        if section in doc:
            sub = doc[section]
            _require(isinstance(sub, dict), f"{section} must be an object")
            _reject_unknown(sub, allowed, section)

    m = doc.get("model", {})
    name = m.get("name", "graphene")
    _require(name in BUILTIN_MODELS,
             f"unknown model preset {name!r}; available: {sorted(BUILTIN_MODELS)}")
    params = m.get("params", {})
    _require(isinstance(params, dict), "model.params must be an object")
    params = {str(k): _as_number(v, f"model.params.{k}") for k, v in params.items()}
    try:
        builtin_model(name, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameter for model {name!r}: {exc}") from exc
    model = ModelConfig(name=name, params=params)

    lt = doc.get("lattice", {})
    preset = lt.get("preset", "honeycomb")
    _require(preset in LATTICE_PRESETS,
             f"unknown lattice preset {preset!r}; available: {list(LATTICE_PRESETS)}")
    size = lt.get("L", 2)
    _require(isinstance(size, int) and not isinstance(size, bool) and size >= 1,
             f"lattice.L must be a positive integer, got {size!r}")
    lattice = LatticeConfig(preset=preset, L=size)

    computation = doc.get("computation", "conductivity")
    _require(computation in COMPUTATIONS,
             f"unknown computation {computation!r}; available: {list(COMPUTATIONS)}")

    nm = doc.get("numerics", {})
    mesh_n = nm.get("mesh_n", 600)
    _require(isinstance(mesh_n, int) and not isinstance(mesh_n, bool) and mesh_n >= 1,
             f"numerics.mesh_n must be a positive integer, got {mesh_n!r}")
    depth = nm.get("refine_depth", 3)
    _require(isinstance(depth, int) and not isinstance(depth, bool) and depth >= 0,
             f"numerics.refine_depth must be a nonnegative integer, got {depth!r}")
    omegas = _number_tuple(nm.get("omegas", ()), "numerics.omegas")
    _require(all(w > 0 for w in omegas),
             "numerics.omegas must be positive (the static point is added internally)")
    beta = nm.get("beta")
    if beta is not None:
        beta = _as_number(beta, "numerics.beta")
        _require(beta > 0, f"numerics.beta must be positive, got {beta}")
    mu = _as_number(nm.get("mu", 0.0), "numerics.mu")
    u_list = _number_tuple(nm.get("u_list", ()), "numerics.u_list")
    t_max = nm.get("t_max")
    if t_max is not None:
        t_max = _as_number(t_max, "numerics.t_max")
        _require(t_max > 0, f"numerics.t_max must be positive, got {t_max}")
    numerics = NumericsConfig(mesh_n=mesh_n, refine_depth=depth, omegas=omegas,
                              beta=beta, mu=mu, u_list=u_list, t_max=t_max)

    out = doc.get("output", {})
    directory = out.get("directory", ".")
    _require(isinstance(directory, str) and directory != "",
             "output.directory must be a nonempty string")
    formats = out.get("formats", ["json", "csv"])
    _require(isinstance(formats, (list, tuple)) and len(formats) > 0,
             "output.formats must be a nonempty list")
    for f in formats:
        _require(f in OUTPUT_FORMATS, f"unknown output format {f!r}")
    output = OutputConfig(directory=directory, formats=tuple(formats))

    return RunConfig(model=model, lattice=lattice, computation=computation,
                     numerics=numerics, output=output)


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


def config_to_dict(config: RunConfig) -> dict:
    doc = asdict(config)
    # tuples JSON-encode as lists; normalize so round-trip compares equal
    doc["numerics"]["omegas"] = list(config.numerics.omegas)
    doc["numerics"]["u_list"] = list(config.numerics.u_list)
    doc["output"]["formats"] = list(config.output.formats)
    return doc


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config_to_dict(config), sort_keys=True, indent=2) + "\n"


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)


def apply_override(config: RunConfig, dotted: str, raw: str) -> RunConfig:
    """Apply one `--set section.key=value` override; value parsed as JSON."""
    path = dotted.split(".")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings allowed: --set model.name=graphene
    doc = config_to_dict(config)
    node = doc
    for part in path[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown override path {dotted!r}")
        node = node[part]
    if not isinstance(node, dict):
        raise ConfigError(f"unknown override path {dotted!r}")
    leaf = path[-1]
    if leaf not in node and path[:-1] != ["model", "params"]:
        raise ConfigError(f"unknown override path {dotted!r}")
    node[leaf] = value
    return config_from_dict(doc)


def with_output_directory(config: RunConfig, directory: str) -> RunConfig:
    return replace(config, output=replace(config.output, directory=directory))
