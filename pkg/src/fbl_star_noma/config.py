"""Experiment configuration: YAML schema, validation, defaults and hashing.

Every key carries its unit in the name (``transmit_power_dbm``,
``t_max_ms``).  Unknown keys, unit-suffix mismatches and invariant violations
raise :class:`ConfigError` naming the key path and source line.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .channel import ChannelParams, SystemGeometry
from .fbl import QosRequirements
from .optimizer.model import SolverConfig

log = logging.getLogger(__name__)

KINDS = ("tradeoff-grid", "optimize-sweep", "convergence-compare")
UNIT_SUFFIXES = ("db", "dbm", "hz", "khz", "mhz", "m", "ms", "s", "us", "w", "mw", "bits")

DEFAULTS: dict[str, dict[str, Any]] = {
    "experiment": {"id": "default", "kind": "optimize-sweep"},
    "geometry": {
        "source_pos_m": [0.0, 0.0, 10.0],
        "ris_pos_m": [35.0, 20.0, 10.0],
        "near_user_pos_m": [40.0, 0.0, 0.0],
        "far_user_pos_m": [40.0, 40.0, 0.0],
        "N_v": 4,
        "N_h": 4,
        "spacing_ratio": 0.5,
    },
    "channel": {
        "path_loss_ref_db": -30.0,
        "path_loss_exp_sr": 2.5,
        "path_loss_exp_ru": 2.5,
        "rician_k_db": 3.0,
        "noise_power_dbm_c": -80.0,
        "noise_power_dbm_s": -80.0,
        "transmit_power_dbm": 30.0,
        "bandwidth_hz": 1.4e6,
    },
    "qos": {
        "eps_c": 1e-3,
        "eps_s": 1e-3,
        "t_max_ms": 0.715,
        "packet_c_bits": 100,
        "packet_s_bits": 100,
        "m_max": 1000,
    },
    "solver": {
        "zeta1": 1e-4,
        "zeta2": 1e-10,
        "iter_max": 30,
        "inner_iter_max": 50,
        "inner_tol": 1e-8,
        "barrier_mu": 10.0,
        "line_search_shrink": 0.5,
        "far_gain_weight": 1e-4,
    },
    "sweep": {
        "elements": [16],
        "thresholds": [[1e-3, 1e-3]],
        "realizations": 50,
        "seed": 0,
        "grid_m_points": 50,
        "grid_a_c_points": 50,
        "grid_a_c_min": 0.51,
        "grid_a_c_max": 0.99,
        "grid_delta_max": 0.1,
    },
    "output": {"dir": "results", "format": "csv"},
}
# sections that never change numeric results
NON_SEMANTIC = ("output",)


class ConfigError(ValueError):
    def __init__(self, message: str, key_path: str = "", line: int | None = None):
        where = key_path + (f" (line {line})" if line else "")
        super().__init__(f"{where}: {message}" if where else message)
        self.key_path = key_path
        self.line = line


@dataclass(frozen=True)
class ElementLayout:
    N_v: int
    N_h: int

    @property
    def N(self) -> int:
        return self.N_v * self.N_h


@dataclass
class ExperimentConfig:
    experiment_id: str
    kind: str
    geometry: SystemGeometry
    channel: ChannelParams
    qos: QosRequirements
    solver: SolverConfig
    elements: list[ElementLayout]
    thresholds: list[tuple[float, float]]
    realizations: int
    seed: int
    grid: dict[str, float]
    output_dir: str
    output_format: str
    raw: dict = field(default_factory=dict, repr=False)

    def config_hash(self) -> str:
        semantic = {k: v for k, v in self.raw.items() if k not in NON_SEMANTIC}
        blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **sweep) -> "ExperimentConfig":
        """Copy with selected raw values replaced, e.g. ``seed=3``."""
        raw = copy.deepcopy(self.raw)
        for key, value in sweep.items():
            if value is None:
                continue
            section = "output" if key in ("dir", "format") else "experiment" if key == "kind" else "sweep"
            raw[section][key] = value
        return from_dict(raw)

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and self.raw == other.raw


def _key_lines(text: str) -> dict[str, int]:
    """Map dotted key paths to 1-based source lines."""
    lines: dict[str, int] = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    if root is not None:
        walk(root, "")
    return lines


def _suffix(key: str) -> tuple[str, str]:
    stem, _, suf = key.rpartition("_")
    if stem and suf.lower() in UNIT_SUFFIXES:
        return stem, suf
    return key, ""


def _check_keys(section: str, given: dict, lines: dict[str, int]) -> None:
    known = DEFAULTS[section]
    for key in given:
        if key in known:
            continue
        path = f"{section}.{key}"
        stem, suf = _suffix(str(key))
        for k in known:
            kstem, ksuf = _suffix(k)
            if kstem == stem and ksuf and ksuf != suf:
                raise ConfigError(f"unit-suffix mismatch, expected '{k}'", path, lines.get(path))
        raise ConfigError("unknown key", path, lines.get(path))


def _number(value, path, lines, *, integer=False, positive=False, lo=None, hi=None) -> float:
    try:
        if isinstance(value, bool):
            raise TypeError
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", path, lines.get(path)) from None
    if not math.isfinite(out) and not path.endswith("rician_k_db"):
        raise ConfigError("must be finite", path, lines.get(path))
    if integer and out != int(out):
        raise ConfigError("expected an integer", path, lines.get(path))
    if positive and not out > 0:
        raise ConfigError("must be positive", path, lines.get(path))
    if lo is not None and out < lo or hi is not None and out > hi:
        raise ConfigError(f"must lie in [{lo}, {hi}]", path, lines.get(path))
    return int(out) if integer else out


def _point(value, path, lines) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError("expected a 3-element coordinate list", path, lines.get(path))
    return [_number(v, path, lines) for v in value]


def _square_layout(n, path, lines) -> ElementLayout:
    n = _number(n, path, lines, integer=True, positive=True)
    r = math.isqrt(n)
    if r * r != n:
        raise ConfigError(f"N={n} is not a perfect square; give N_v and N_h explicitly", path, lines.get(path))
    return ElementLayout(r, r)


def _layout(entry, path, lines) -> ElementLayout:
    if isinstance(entry, dict):
        extra = set(entry) - {"N_v", "N_h"}
        if extra or len(entry) != 2:
            raise ConfigError("element layout needs exactly N_v and N_h", path, lines.get(path))
        return ElementLayout(
            _number(entry["N_v"], path, lines, integer=True, positive=True),
            _number(entry["N_h"], path, lines, integer=True, positive=True),
        )
    if isinstance(entry, str) and "x" in entry:
        a, _, b = entry.partition("x")
        return ElementLayout(
            _number(a.strip(), path, lines, integer=True, positive=True),
            _number(b.strip(), path, lines, integer=True, positive=True),
        )
    return _square_layout(entry, path, lines)


def from_dict(data: dict | None, lines: dict[str, int] | None = None) -> ExperimentConfig:
    """Validate a parsed mapping and fill defaults."""
    lines = lines or {}
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    for section in data:
        if section not in DEFAULTS:
            raise ConfigError("unknown section", str(section), lines.get(str(section)))
    raw: dict[str, dict[str, Any]] = {}
    for section, defaults in DEFAULTS.items():
        given = data.get(section) or {}
        if not isinstance(given, dict):
            raise ConfigError("section must be a mapping", section, lines.get(section))
        given = dict(given)
        # square shorthand for the surface size
        if section == "geometry" and "N" in given:
            if "N_v" in given or "N_h" in given:
                raise ConfigError("give either N or N_v/N_h, not both", "geometry.N", lines.get("geometry.N"))
            lay = _square_layout(given.pop("N"), "geometry.N", lines)
            given["N_v"], given["N_h"] = lay.N_v, lay.N_h
        _check_keys(section, given, lines)
        merged = copy.deepcopy(defaults)
        for key, value in given.items():
            log.info("config override %s.%s = %r", section, key, value)
            merged[key] = value
        raw[section] = merged

    def num(section, key, **kw):
        value = _number(raw[section][key], f"{section}.{key}", lines, **kw)
        raw[section][key] = value  # canonical numeric form for hashing and round-trips
        return value

    kind = raw["experiment"]["kind"]
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}", "experiment.kind", lines.get("experiment.kind"))
    exp_id = str(raw["experiment"]["id"])
    if not exp_id or any(c in exp_id for c in ",\n\r\""):
        raise ConfigError("id must be non-empty without commas, quotes or newlines", "experiment.id", lines.get("experiment.id"))

    g = raw["geometry"]
    for key in ("source_pos_m", "ris_pos_m", "near_user_pos_m", "far_user_pos_m"):
        g[key] = _point(g[key], f"geometry.{key}", lines)
    try:
        geometry = SystemGeometry(
            c_S=tuple(_point(g["source_pos_m"], "geometry.source_pos_m", lines)),
            c_R=tuple(_point(g["ris_pos_m"], "geometry.ris_pos_m", lines)),
            c_Uc=tuple(_point(g["near_user_pos_m"], "geometry.near_user_pos_m", lines)),
            c_Us=tuple(_point(g["far_user_pos_m"], "geometry.far_user_pos_m", lines)),
            N_v=num("geometry", "N_v", integer=True, positive=True),
            N_h=num("geometry", "N_h", integer=True, positive=True),
            spacing_ratio=num("geometry", "spacing_ratio", positive=True),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "geometry", lines.get("geometry")) from None

    try:
        channel = ChannelParams(
            rho_db=num("channel", "path_loss_ref_db"),
            alpha1=num("channel", "path_loss_exp_sr", positive=True),
            alpha2=num("channel", "path_loss_exp_ru", positive=True),
            rician_k_db=num("channel", "rician_k_db"),
            noise_power_dbm_c=num("channel", "noise_power_dbm_c"),
            noise_power_dbm_s=num("channel", "noise_power_dbm_s"),
            transmit_power_dbm=num("channel", "transmit_power_dbm"),
            bandwidth_hz=num("channel", "bandwidth_hz", positive=True),
        )
        qos = QosRequirements(
            eps_c=num("qos", "eps_c", positive=True),
            eps_s=num("qos", "eps_s", positive=True),
            t_max_s=num("qos", "t_max_ms", positive=True) * 1e-3,
            d_c=num("qos", "packet_c_bits", integer=True, positive=True),
            d_s=num("qos", "packet_s_bits", integer=True, positive=True),
            m_max=num("qos", "m_max", integer=True, positive=True),
        )
        solver = SolverConfig(
            zeta1=num("solver", "zeta1"),
            zeta2=num("solver", "zeta2"),
            iter_max=num("solver", "iter_max", integer=True),
            inner_iter_max=num("solver", "inner_iter_max", integer=True),
            inner_tol=num("solver", "inner_tol"),
            barrier_mu=num("solver", "barrier_mu"),
            line_search_shrink=num("solver", "line_search_shrink"),
            far_gain_weight=num("solver", "far_gain_weight"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    s = raw["sweep"]
    if not isinstance(s["elements"], list) or not s["elements"]:
        raise ConfigError("expected a non-empty list", "sweep.elements", lines.get("sweep.elements"))
    elements = [_layout(e, "sweep.elements", lines) for e in s["elements"]]
    # normalize to explicit layouts so serialization round-trips
    raw["sweep"]["elements"] = [{"N_v": e.N_v, "N_h": e.N_h} for e in elements]
    thresholds = []
    if not isinstance(s["thresholds"], list) or not s["thresholds"]:
        raise ConfigError("expected a non-empty list of [eps_c, eps_s] pairs", "sweep.thresholds", lines.get("sweep.thresholds"))
    for pair in s["thresholds"]:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError("each threshold must be a pair [eps_c, eps_s]", "sweep.thresholds", lines.get("sweep.thresholds"))
        ec, es = (_number(p, "sweep.thresholds", lines, positive=True) for p in pair)
        if not (ec < 0.5 and es < 0.5):
            raise ConfigError("thresholds must lie in (0, 0.5)", "sweep.thresholds", lines.get("sweep.thresholds"))
        thresholds.append((ec, es))
    raw["sweep"]["thresholds"] = [list(t) for t in thresholds]
    realizations = num("sweep", "realizations", integer=True)
    if realizations < 1:
        raise ConfigError("realization count must be at least 1", "sweep.realizations", lines.get("sweep.realizations"))
    seed = num("sweep", "seed", integer=True, lo=0, hi=2**64 - 1)
    grid = {
        "m_points": num("sweep", "grid_m_points", integer=True, positive=True),
        "a_c_points": num("sweep", "grid_a_c_points", integer=True, positive=True),
        "a_c_min": num("sweep", "grid_a_c_min", lo=0.5, hi=1.0),
        "a_c_max": num("sweep", "grid_a_c_max", lo=0.5, hi=1.0),
        "delta_max": num("sweep", "grid_delta_max", positive=True),
    }
    if not 0.5 < grid["a_c_min"] <= grid["a_c_max"] < 1.0:
        raise ConfigError("need 0.5 < grid_a_c_min <= grid_a_c_max < 1", "sweep.grid_a_c_min", lines.get("sweep.grid_a_c_min"))
    fmt = raw["output"]["format"]
    if fmt not in ("csv", "json"):
        raise ConfigError("format must be csv or json", "output.format", lines.get("output.format"))
    return ExperimentConfig(
        experiment_id=exp_id,
        kind=kind,
        geometry=geometry,
        channel=channel,
        qos=qos,
        solver=solver,
        elements=elements,
        thresholds=thresholds,
        realizations=realizations,
        seed=seed,
        grid=grid,
        output_dir=str(raw["output"]["dir"]),
        output_format=fmt,
        raw=raw,
    )


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML parse error: {exc}", "", mark.line + 1 if mark else None) from None
    return from_dict(data, _key_lines(text))


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML experiment file; missing fields take the default values."""
    return loads(Path(path).read_text())


def serialize(cfg: ExperimentConfig) -> str:
    """YAML text that reparses to an equal configuration."""
    return yaml.safe_dump(cfg.raw, sort_keys=True, default_flow_style=None)


def default_config() -> ExperimentConfig:
    return from_dict({})
