"""Configuration-driven experiments: analytic curves, sweeps, comparisons, churn.

A config is a YAML or JSON mapping; every key is optional::

    scenario: {type: ring, radius: 8}        # or {type: disc, radius: 20, seed: 3}
    n: 10                                    # or schedule: [[0, 10], [60, 20], [120, 10]]
    n_values: [10, 40]                       # analytic / compare
    sense_radius: 24
    tx_radius: null                          # null -> max(16, disc radius)
    protocol: wtop                           # stddcf | idlesense | wtop | tora | ppersistent | randomreset
    weights: null                            # wTOP per-node weights
    p: 0.03                                  # ppersistent
    j: 0                                     # randomreset / sweep p0(j)
    p0: 1.0                                  # randomreset
    idle_target: 3.1
    phy: {sigma_ns: 9000, sifs_ns: 16000, difs_ns: 34000, rate_bps: 54e6,
          payload_bits: 8000, header_bits: 272, ack_bits: 112, cw_min: 8, cw_max: 1024}
    controller: {update_period_ms: 250, scale: log, force_factor: 4, delta_lo: 0.05, delta_hi: 0.95}
    duration: 60                             # seconds
    seeds: [1, 2, 3]
    window: 1.0                              # seconds
    analytic: {p_points: 201, p_max: 0.2, p0_points: 11}
    sweep: {variable: p, grid: [0.005, 0.01, 0.02, 0.04], tolerance: 0.02}
    compare: {protocols: [stddcf, idlesense, wtop, tora]}
    trace_events: false
    trace_controller: false
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import yaml

from .controllers import DEFAULT_UPDATE_PERIOD_NS, ApController
from .model import (
    PhyMacConfig,
    ResetDistribution,
    approx_optimal_p,
    check_unimodal,
    gradient_indicator,
    optimal_p,
    rr_tau,
    solve_attempt_fixed_point,
    system_throughput,
)
from .sim.engine import SimReport, run_sim
from .sim.strategies import StrategySpec
from .sim.topology import Topology, build_topology, place_disc, place_ring

__all__ = [
    "ConfigError",
    "Scenario",
    "ControllerConfig",
    "ExperimentConfig",
    "RunResult",
    "load_config",
    "parse_config",
    "make_topology",
    "run_one",
    "cmd_analytic",
    "cmd_sweep",
    "cmd_compare",
    "cmd_dynamic",
    "PROTOCOLS",
    "ANALYTIC_HEADER",
    "SWEEP_HEADER",
    "COMPARE_HEADER",
    "DYNAMIC_HEADER",
]

PROTOCOLS = ("stddcf", "idlesense", "wtop", "tora", "ppersistent", "randomreset")
_ALIASES = {"dcf": "stddcf", "std_dcf": "stddcf", "idle_sense": "idlesense", "p_persistent": "ppersistent",
            "random_reset": "randomreset"}

ANALYTIC_HEADER = ["p", "S_bits_per_s", "f_value"]
ANALYTIC_SUMMARY_HEADER = ["N", "p_star", "p_star_approx", "S_star_bits_per_s", "dcf_tau", "dcf_c", "dcf_S_bits_per_s"]
TAU_GRID_HEADER = ["N", "j", "p0", "tau", "S_bits_per_s"]
SWEEP_HEADER = ["variable", "value", "j", "seed", "N", "hidden_pairs", "S_bits_per_s"]
SWEEP_SUMMARY_HEADER = ["variable", "value", "j", "mean_S_bits_per_s", "std_S_bits_per_s", "runs"]
COMPARE_HEADER = ["scenario", "seed", "N", "hidden_pairs", "protocol", "control", "total_bits_per_s",
                  "node_bits_per_s", "idle_slots"]
COMPARE_SUMMARY_HEADER = ["protocol", "N", "mean_bits_per_s", "std_bits_per_s", "mean_idle_slots", "runs"]
DYNAMIC_HEADER = ["scenario", "seed", "protocol", "time_s", "N", "p_val", "j", "total_bits_per_s",
                  "node_bits_per_s"]
CONTROLLER_TRACE_HEADER = ["seed", "time_ns", "p_val", "probe", "s_plus", "s_minus", "j", "forced"]
EVENT_HEADER = ["time_ns", "node", "event"]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message

    def to_dict(self) -> dict:
        return {"error": "config", "field": self.field, "message": self.message}


@dataclass(frozen=True)
class Scenario:
    kind: str = "ring"
    radius_m: float = 8.0
    seed: Optional[int] = None  # disc only; None -> the run seed

    @property
    def label(self) -> str:
        if self.kind == "ring":
            return f"ring({self.radius_m:g})"
        return f"disc({self.radius_m:g},{'run' if self.seed is None else self.seed})"


@dataclass(frozen=True)
class ControllerConfig:
    update_period_ns: Optional[int] = DEFAULT_UPDATE_PERIOD_NS  # None -> automatic
    scale: str = "log"
    force_factor: float = 4.0
    delta_lo: float = 0.05
    delta_hi: float = 0.95


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario = Scenario()
    schedule: tuple = ((0.0, 10),)  # (time_s, active count)
    n_values: tuple = (10,)
    sense_radius_m: float = 24.0
    tx_radius_m: Optional[float] = None
    protocol: str = "wtop"
    weights: Optional[tuple] = None
    p: float = 0.03
    j: int = 0
    p0: float = 1.0
    idle_target: float = 3.1
    phy: PhyMacConfig = PhyMacConfig()
    controller: ControllerConfig = ControllerConfig()
    duration_s: float = 60.0
    seeds: tuple = tuple(range(1, 21))
    window_s: float = 1.0
    p_points: int = 201
    p_max: float = 0.2
    p0_points: int = 11
    sweep_variable: str = "p"
    sweep_grid: tuple = tuple(float(x) for x in np.round(np.geomspace(0.002, 0.2, 13), 6))
    sweep_tolerance: float = 0.02
    compare_protocols: tuple = ("stddcf", "idlesense", "wtop", "tora")
    trace_events: bool = False
    trace_controller: bool = False

    @property
    def n(self) -> int:
        return self.schedule[0][1]

    @property
    def n_max(self) -> int:
        return max(c for _, c in self.schedule)

    @property
    def static(self) -> bool:
        return len(self.schedule) == 1

    @property
    def tx_radius(self) -> float:
        if self.tx_radius_m is not None:
            return self.tx_radius_m
        return max(16.0, self.scenario.radius_m) if self.scenario.kind == "disc" else 16.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phy"]["cw_max"] = self.phy.cw_max
        return d


# -- parsing --------------------------------------------------------------------------

_TOP_KEYS = {
    "scenario", "n", "schedule", "n_values", "sense_radius", "tx_radius", "protocol", "weights", "p", "j",
    "p0", "idle_target", "phy", "controller", "duration", "seeds", "window", "analytic", "sweep", "compare",
    "trace_events", "trace_controller",
}
_PHY_KEYS = {"sigma_ns", "sifs_ns", "difs_ns", "rate_bps", "payload_bits", "header_bits", "ack_bits", "cw_min",
             "cw_max", "m_stages"}


def _num(d, key, kind=float, *, prefix="", lo=None, lo_open=False, default=None):
    if key not in d or d[key] is None:
        return default
    v = d[key]
    name = prefix + key
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(name, f"expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(name, "must be finite")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(name, f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
    return v


def _protocol(name, field_name):
    if not isinstance(name, str):
        raise ConfigError(field_name, f"expected a protocol name, got {name!r}")
    key = _ALIASES.get(name.lower(), name.lower())
    if key not in PROTOCOLS:
        raise ConfigError(field_name, f"unknown protocol {name!r}; expected one of {', '.join(PROTOCOLS)}")
    return key


def _parse_phy(d) -> PhyMacConfig:
    if d is None:
        return PhyMacConfig()
    if not isinstance(d, dict):
        raise ConfigError("phy", "expected a mapping")
    unknown = set(d) - _PHY_KEYS
    if unknown:
        raise ConfigError(f"phy.{sorted(unknown)[0]}", "unknown key")
    base = PhyMacConfig()
    kw = {}
    for key in ("sigma_ns", "sifs_ns", "difs_ns", "payload_bits", "cw_min"):
        v = _num(d, key, int, prefix="phy.", lo=0, lo_open=True)
        if v is not None:
            kw[key] = v
    for key in ("header_bits", "ack_bits"):
        v = _num(d, key, int, prefix="phy.", lo=0)
        if v is not None:
            kw[key] = v
    rate = _num(d, "rate_bps", prefix="phy.", lo=0, lo_open=True)
    if rate is not None:
        kw["rate_bps"] = rate
    cw_min = kw.get("cw_min", base.cw_min)
    if cw_min < 2 or cw_min & (cw_min - 1):
        raise ConfigError("phy.cw_min", f"must be a power of two >= 2, got {cw_min}")
    cw_max = _num(d, "cw_max", int, prefix="phy.", lo=1)
    m = _num(d, "m_stages", int, prefix="phy.", lo=1)
    if cw_max is not None:
        if cw_max < cw_min:
            raise ConfigError("phy.cw_max", f"must be >= cw_min ({cw_min}), got {cw_max}")
        ratio = cw_max // cw_min
        if cw_max % cw_min or ratio & (ratio - 1) or ratio < 2:
            raise ConfigError("phy.cw_max", f"must be cw_min times a power of two >= 2, got {cw_max}")
        m_from_cw = ratio.bit_length() - 1
        if m is not None and m != m_from_cw:
            raise ConfigError("phy.m_stages", f"inconsistent with cw_max/cw_min = 2^{m_from_cw}")
        m = m_from_cw
    if m is not None:
        kw["m_stages"] = m
    try:
        return PhyMacConfig(**kw)
    except ValueError as exc:
        raise ConfigError("phy", str(exc)) from None


def _parse_scenario(d) -> Scenario:
    if d is None:
        return Scenario()
    if not isinstance(d, dict):
        raise ConfigError("scenario", "expected a mapping with a 'type' key")
    kind = d.get("type", "ring")
    if kind not in ("ring", "disc"):
        raise ConfigError("scenario.type", f"must be 'ring' or 'disc', got {kind!r}")
    radius = _num(d, "radius", prefix="scenario.", lo=0, lo_open=True,
                  default=8.0 if kind == "ring" else 16.0)
    seed = _num(d, "seed", int, prefix="scenario.", lo=0)
    if kind == "ring" and seed is not None:
        raise ConfigError("scenario.seed", "only disc scenarios take a seed")
    unknown = set(d) - {"type", "radius", "seed"}
    if unknown:
        raise ConfigError(f"scenario.{sorted(unknown)[0]}", "unknown key")
    return Scenario(kind, radius, seed)


def _parse_controller(d) -> ControllerConfig:
    if d is None:
        return ControllerConfig()
    if not isinstance(d, dict):
        raise ConfigError("controller", "expected a mapping")
    unknown = set(d) - {"update_period_ms", "scale", "force_factor", "delta_lo", "delta_hi"}
    if unknown:
        raise ConfigError(f"controller.{sorted(unknown)[0]}", "unknown key")
    period = d.get("update_period_ms", 250)
    if period == "auto":
        period_ns = None
    else:
        period_ns = int(round(_num(d, "update_period_ms", prefix="controller.", lo=0, lo_open=True, default=250) * 1e6))
    scale = d.get("scale", "log")
    if scale not in ("log", "linear"):
        raise ConfigError("controller.scale", f"must be 'log' or 'linear', got {scale!r}")
    ff = _num(d, "force_factor", prefix="controller.", lo=1, lo_open=True, default=4.0)
    lo = _num(d, "delta_lo", prefix="controller.", lo=0, lo_open=True, default=0.05)
    hi = _num(d, "delta_hi", prefix="controller.", default=0.95)
    if not lo < hi < 1:
        raise ConfigError("controller.delta_hi", "need 0 < delta_lo < delta_hi < 1")
    return ControllerConfig(period_ns, scale, ff, lo, hi)


def _int_list(v, name, lo=None):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(name, "expected a non-empty list")
    out = []
    for k, x in enumerate(v):
        out.append(_num({name: x}, name, int, lo=lo))
    return tuple(out)


def parse_config(raw: Optional[dict]) -> ExperimentConfig:
    """Validate a raw mapping; the standard defaults fill every missing key."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")

    scenario = _parse_scenario(raw.get("scenario"))
    if "schedule" in raw and raw["schedule"] is not None:
        if "n" in raw:
            raise ConfigError("schedule", "give either n or schedule, not both")
        sched = raw["schedule"]
        if not isinstance(sched, (list, tuple)) or not sched:
            raise ConfigError("schedule", "expected a non-empty list of [time_s, N] pairs")
        pairs = []
        for k, item in enumerate(sched):
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise ConfigError(f"schedule[{k}]", "expected a [time_s, N] pair")
            t = _num({"t": item[0]}, "t", lo=0)
            c = _num({"n": item[1]}, "n", int, lo=1)
            if t is None or c is None:
                raise ConfigError(f"schedule[{k}]", "time and N are required")
            pairs.append((t, c))
        if pairs[0][0] != 0:
            raise ConfigError("schedule", "first entry must be at time 0")
        if any(b[0] <= a[0] for a, b in zip(pairs, pairs[1:])):
            raise ConfigError("schedule", "times must be strictly increasing")
        schedule = tuple(pairs)
    else:
        schedule = ((0.0, _num(raw, "n", int, lo=1, default=10)),)
    n_values = _int_list(raw["n_values"], "n_values", lo=1) if raw.get("n_values") is not None else (schedule[0][1],)

    protocol = _protocol(raw.get("protocol", "wtop"), "protocol")
    weights = raw.get("weights")
    if weights is not None:
        if not isinstance(weights, (list, tuple)) or not weights:
            raise ConfigError("weights", "expected a non-empty list of positive numbers")
        weights = tuple(_num({"w": w}, "w", lo=0, lo_open=True) for w in weights)
        n_max = max(c for _, c in schedule)
        if len(weights) < n_max:
            raise ConfigError("weights", f"need at least {n_max} weights, got {len(weights)}")

    phy = _parse_phy(raw.get("phy"))
    p = _num(raw, "p", lo=0, default=0.03)
    if p > 1:
        raise ConfigError("p", "must lie in [0, 1]")
    j = _num(raw, "j", int, lo=0, default=0)
    if j > phy.m_stages - 1:
        raise ConfigError("j", f"must lie in [0, {phy.m_stages - 1}]")
    p0 = _num(raw, "p0", lo=0, default=1.0)
    if p0 > 1:
        raise ConfigError("p0", "must lie in [0, 1]")

    seeds = _int_list(raw["seeds"], "seeds", lo=0) if raw.get("seeds") is not None else ExperimentConfig.seeds
    an = raw.get("analytic") or {}
    sw = raw.get("sweep") or {}
    cp = raw.get("compare") or {}
    for name, sub, keys in (("analytic", an, {"p_points", "p_max", "p0_points"}),
                            ("sweep", sw, {"variable", "grid", "tolerance"}),
                            ("compare", cp, {"protocols"})):
        if not isinstance(sub, dict):
            raise ConfigError(name, "expected a mapping")
        bad = set(sub) - keys
        if bad:
            raise ConfigError(f"{name}.{sorted(bad)[0]}", "unknown key")
    variable = sw.get("variable", "p")
    if variable not in ("p", "p0"):
        raise ConfigError("sweep.variable", f"must be 'p' or 'p0', got {variable!r}")
    grid = ExperimentConfig.sweep_grid if variable == "p" else tuple(np.round(np.linspace(0, 1, 11), 6))
    if "grid" in sw:
        g = sw["grid"]
        if not isinstance(g, (list, tuple)) or not g:
            raise ConfigError("sweep.grid", "expected a non-empty list")
        grid = tuple(_num({"x": x}, "x", lo=0) for x in g)
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ConfigError("sweep.grid", "must be sorted ascending")
        if max(grid) > 1 or (variable == "p" and max(grid) >= 1):
            raise ConfigError("sweep.grid", "values must be probabilities")
    protocols = tuple(_protocol(x, "compare.protocols") for x in cp.get("protocols", ExperimentConfig.compare_protocols))
    if not protocols:
        raise ConfigError("compare.protocols", "expected at least one protocol")

    cfg = ExperimentConfig(
        scenario=scenario,
        schedule=schedule,
        n_values=n_values,
        sense_radius_m=_num(raw, "sense_radius", lo=0, lo_open=True, default=24.0),
        tx_radius_m=_num(raw, "tx_radius", lo=0, lo_open=True),
        protocol=protocol,
        weights=weights,
        p=p,
        j=j,
        p0=p0,
        idle_target=_num(raw, "idle_target", lo=0, lo_open=True, default=3.1),
        phy=phy,
        controller=_parse_controller(raw.get("controller")),
        duration_s=_num(raw, "duration", lo=0, lo_open=True, default=60.0),
        seeds=seeds,
        window_s=_num(raw, "window", lo=0, lo_open=True, default=1.0),
        p_points=_num(an, "p_points", int, prefix="analytic.", lo=2, default=201),
        p_max=_num(an, "p_max", prefix="analytic.", lo=0, lo_open=True, default=0.2),
        p0_points=_num(an, "p0_points", int, prefix="analytic.", lo=2, default=11),
        sweep_variable=variable,
        sweep_grid=grid,
        sweep_tolerance=_num(sw, "tolerance", prefix="sweep.", lo=0, default=0.02),
        compare_protocols=protocols,
        trace_events=bool(raw.get("trace_events", False)),
        trace_controller=bool(raw.get("trace_controller", False)),
    )
    if cfg.p_max >= 1:
        raise ConfigError("analytic.p_max", "must be < 1")
    if cfg.duration_s * 1e9 < 1e6:
        raise ConfigError("duration", "must be at least 1 ms")
    if cfg.schedule[-1][0] >= cfg.duration_s and not cfg.static:
        raise ConfigError("schedule", "all changes must happen before the end of the run")
    return cfg


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Read YAML or JSON from ``path`` (``None`` -> all defaults)."""
    if path is None:
        return parse_config({})
    if not os.path.exists(path):
        raise ConfigError("--config", f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"cannot parse {path}: {exc}") from None
    return parse_config(raw)


# -- running ----------------------------------------------------------------------------


def _sub_seed(seed: int, salt: int) -> int:
    return int(np.random.SeedSequence([seed, salt]).generate_state(1)[0])


def make_topology(cfg: ExperimentConfig, N: int, seed: int, n_total: Optional[int] = None) -> Topology:
    """Topology with ``n_total`` slots: the first N by the scenario rule, extra
    churn arrivals by the same rule with a derived sub-seed."""
    sc = cfg.scenario
    n_total = n_total or N
    if sc.kind == "ring":
        pos = place_ring(N, sc.radius_m)
        if n_total > N:
            extra = place_ring(n_total - N, sc.radius_m)
            phi = np.random.default_rng(_sub_seed(seed, 1)).uniform(0, 2 * np.pi)
            rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
            pos = np.vstack([pos, extra @ rot.T])
    else:
        topo_seed = seed if sc.seed is None else sc.seed
        pos = place_disc(N, sc.radius_m, topo_seed)
        if n_total > N:
            pos = np.vstack([pos, place_disc(n_total - N, sc.radius_m, _sub_seed(topo_seed, 1))])
    return build_topology(pos, cfg.sense_radius_m, cfg.tx_radius)


def _specs(cfg: ExperimentConfig, protocol: str, n: int, *, p=None, j=None, p0=None):
    if protocol == "stddcf":
        return StrategySpec.std_dcf()
    if protocol == "idlesense":
        return StrategySpec.idle_sense(cfg.idle_target)
    if protocol == "ppersistent":
        return StrategySpec.ppersistent(cfg.p if p is None else p)
    if protocol == "randomreset":
        return StrategySpec.random_reset(cfg.j if j is None else j, cfg.p0 if p0 is None else p0)
    if protocol == "tora":
        return StrategySpec.tora()
    weights = cfg.weights or (1.0,) * n
    return [StrategySpec.wtop(w) for w in weights[:n]]


def _controller(cfg: ExperimentConfig, protocol: str):
    c = cfg.controller
    if protocol == "wtop":
        return ApController.wtop(cfg.phy, update_period_ns=c.update_period_ns, scale=c.scale,
                                 force_factor=c.force_factor)
    if protocol == "tora":
        return ApController.tora(cfg.phy, update_period_ns=c.update_period_ns, scale=c.scale,
                                 force_factor=c.force_factor, delta_lo=c.delta_lo, delta_hi=c.delta_hi)
    return None


@dataclass
class RunResult:
    report: SimReport
    topology: Topology
    protocol: str
    seed: int
    controller: Optional[ApController] = None

    @property
    def control(self) -> str:
        if self.controller is None:
            return ""
        last = self.controller.trace[-1]
        if self.protocol == "wtop":
            return f"{last.p_val:.6g}"
        return f"{last.p_val:.6g};{last.j}"


def run_one(cfg: ExperimentConfig, protocol: str, seed: int, *, N: Optional[int] = None, schedule=None,
            duration_s: Optional[float] = None, **spec_overrides) -> RunResult:
    """One simulation.  ``schedule`` is in seconds; N defaults to the config's."""
    duration_ns = int(round((duration_s or cfg.duration_s) * 1e9))
    if schedule is not None:
        sched_ns = [(int(round(t * 1e9)), c) for t, c in schedule]
        n_total = max(c for _, c in schedule)
        topo = make_topology(cfg, schedule[0][1], seed, n_total)
    else:
        N = N or cfg.n
        sched_ns, n_total = None, N
        topo = make_topology(cfg, N, seed)
    specs = _specs(cfg, protocol, n_total, **spec_overrides)
    ctl = _controller(cfg, protocol)
    report = run_sim(topo, cfg.phy, specs, duration_ns, seed, controller=ctl, schedule=sched_ns,
                     window_ns=int(round(cfg.window_s * 1e9)), trace_events=cfg.trace_events)
    return RunResult(report, topo, protocol, seed, ctl)


# -- output helpers -------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, np.generic):
        x = x.item()
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(round(x, 9)) if abs(x) < 1e15 else repr(x)
    return str(x)


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _write_json(path: str, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serialisable: {type(o)!r}")


def _sidecar(out_dir: str, command: str, cfg: ExperimentConfig, outputs: list, extra: Optional[dict] = None):
    from . import __version__

    meta = {"command": command, "version": __version__, "config": cfg.to_dict(), "outputs": sorted(outputs)}
    if extra:
        meta.update(extra)
    _write_json(os.path.join(out_dir, f"{command}.json"), meta)
    outputs.append(f"{command}.json")


def _node_vec(values) -> str:
    return ";".join(_fmt(float(v)) for v in values)


def _emit_traces(cfg: ExperimentConfig, out_dir: str, command: str, runs: list, outputs: list):
    if cfg.trace_controller:
        rows = []
        for r in runs:
            if r.controller is not None:
                rows += [(r.protocol, r.report.n_nodes, r.seed, tp.time_ns, tp.p_val, tp.probe, tp.s_plus,
                          tp.s_minus, tp.j, int(tp.forced)) for tp in r.controller.trace]
        name = f"{command}_controller_trace.csv"
        _write_csv(os.path.join(out_dir, name), ["protocol", "N_slots"] + CONTROLLER_TRACE_HEADER, rows)
        outputs.append(name)
    if cfg.trace_events:
        for r in runs:
            name = f"{command}_events_{r.protocol}_n{r.report.n_nodes}_seed{r.seed}.csv"
            _write_csv(os.path.join(out_dir, name), EVENT_HEADER, r.report.events or [])
            outputs.append(name)


def _runs_json(out_dir: str, command: str, cfg: ExperimentConfig, runs: list, outputs: list):
    name = f"{command}_runs.json"
    _write_json(os.path.join(out_dir, name), {
        "scenario": cfg.scenario.label,
        "runs": [dict(protocol=r.protocol, seed=r.seed, control=r.control, topology=r.topology.to_dict(),
                      result=r.report.to_dict()) for r in runs],
    })
    outputs.append(name)


# -- commands ---------------------------------------------------------------------------


def cmd_analytic(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Throughput curves, optima, RandomReset attempt-probability grids and DCF fixed points."""
    os.makedirs(out_dir, exist_ok=True)
    phy = cfg.phy
    outputs, summary = [], []
    ps = np.linspace(0.0, cfg.p_max, cfg.p_points)
    for N in cfg.n_values:
        W = np.ones(N)
        rows = [(float(p), system_throughput(float(p), W, phy), gradient_indicator(float(p), W, phy)) for p in ps]
        name = f"analytic_N{N}.csv"
        _write_csv(os.path.join(out_dir, name), ANALYTIC_HEADER, rows)
        outputs.append(name)
        opt = optimal_p(W, phy)
        dcf = solve_attempt_fixed_point(ResetDistribution.point_mass(0, phy.m_stages), N, phy)
        summary.append((N, opt.p, approx_optimal_p(N, phy),
                        system_throughput(min(opt.p, 1 - 1e-9), W, phy), dcf.tau, dcf.c,
                        system_throughput(dcf.tau, W, phy)))
    _write_csv(os.path.join(out_dir, "analytic_summary.csv"), ANALYTIC_SUMMARY_HEADER, summary)
    tau_rows = []
    for N in cfg.n_values:
        for j in range(phy.m_stages):
            for p0 in np.linspace(0, 1, cfg.p0_points):
                tau = rr_tau(j, float(p0), N, phy)
                tau_rows.append((N, j, float(p0), tau, system_throughput(tau, np.ones(N), phy)))
    _write_csv(os.path.join(out_dir, "tau_grid.csv"), TAU_GRID_HEADER, tau_rows)
    outputs += ["analytic_summary.csv", "tau_grid.csv"]
    _sidecar(out_dir, "analytic", cfg, outputs)
    return {"outputs": outputs, "summary": summary}


def cmd_sweep(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Simulated throughput over a grid of fixed p (p-persistent) or p0 (RandomReset(j))."""
    if not cfg.sweep_grid:
        raise ConfigError("sweep.grid", "grid must not be empty")
    os.makedirs(out_dir, exist_ok=True)
    var = cfg.sweep_variable
    rows, runs = [], []
    per_value = {x: [] for x in cfg.sweep_grid}
    for seed in cfg.seeds:
        for x in cfg.sweep_grid:
            if var == "p":
                r = run_one(cfg, "ppersistent", seed, p=x)
            else:
                r = run_one(cfg, "randomreset", seed, j=cfg.j, p0=x)
            s = r.report.total_throughput_bps
            per_value[x].append(s)
            rows.append((var, x, cfg.j if var == "p0" else "", seed, r.report.n_nodes, r.topology.hidden_pairs, s))
            runs.append(r)
    means = [float(np.mean(per_value[x])) for x in cfg.sweep_grid]
    summary = [(var, x, cfg.j if var == "p0" else "", m, float(np.std(per_value[x])), len(per_value[x]))
               for x, m in zip(cfg.sweep_grid, means)]
    verdict = (check_unimodal(cfg.sweep_grid, means, cfg.sweep_tolerance)
               if len(cfg.sweep_grid) >= 3 else None)
    outputs = ["sweep.csv", "sweep_summary.csv", "sweep_verdict.json"]
    _write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_HEADER, rows)
    _write_csv(os.path.join(out_dir, "sweep_summary.csv"), SWEEP_SUMMARY_HEADER, summary)
    peak = cfg.sweep_grid[int(np.argmax(means))]
    result = {
        "variable": var,
        "unimodal": None if verdict is None else bool(verdict.unimodal),
        "violations": [] if verdict is None else [cfg.sweep_grid[i] for i in verdict.violations],
        "tolerance": cfg.sweep_tolerance,
        "peak_value": peak,
        "peak_S_bits_per_s": max(means),
    }
    if var == "p" and cfg.scenario.kind == "ring":
        result["analytic_optimal_p"] = optimal_p(np.ones(cfg.n), cfg.phy).p
    _write_json(os.path.join(out_dir, "sweep_verdict.json"), result)
    _emit_traces(cfg, out_dir, "sweep", runs, outputs)
    _sidecar(out_dir, "sweep", cfg, outputs)
    return {"outputs": outputs, "means": means, **result}


def cmd_compare(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Every (protocol, N, seed) cell once, plus mean/std per (protocol, N)."""
    os.makedirs(out_dir, exist_ok=True)
    rows, runs, cells = [], [], {}
    for protocol in cfg.compare_protocols:
        for N in cfg.n_values:
            for seed in cfg.seeds:
                r = run_one(cfg, protocol, seed, N=N)
                rep = r.report
                rows.append((cfg.scenario.label, seed, N, r.topology.hidden_pairs, protocol, r.control,
                             rep.total_throughput_bps, _node_vec(rep.node_throughput_bps), rep.mean_idle_slots))
                cells.setdefault((protocol, N), []).append((rep.total_throughput_bps, rep.mean_idle_slots))
                runs.append(r)
    summary = []
    for (protocol, N), vals in cells.items():
        tot = np.array([v[0] for v in vals])
        idle = np.array([v[1] for v in vals])
        summary.append((protocol, N, float(tot.mean()), float(tot.std()),
                        float(np.nanmean(idle)) if np.isfinite(idle).any() else float("nan"), len(vals)))
    outputs = ["compare.csv", "compare_summary.csv"]
    _write_csv(os.path.join(out_dir, "compare.csv"), COMPARE_HEADER, rows)
    _write_csv(os.path.join(out_dir, "compare_summary.csv"), COMPARE_SUMMARY_HEADER, summary)
    _runs_json(out_dir, "compare", cfg, runs, outputs)
    _emit_traces(cfg, out_dir, "compare", runs, outputs)
    _sidecar(out_dir, "compare", cfg, outputs)
    return {"outputs": outputs, "summary": summary, "runs": runs}


def cmd_dynamic(cfg: ExperimentConfig, out_dir: str, protocol: Optional[str] = None) -> dict:
    """Windowed throughput and control traces across the N schedule."""
    protocol = protocol or cfg.protocol
    os.makedirs(out_dir, exist_ok=True)
    rows, runs = [], []
    w = cfg.window_s
    for seed in cfg.seeds:
        r = run_one(cfg, protocol, seed, schedule=cfg.schedule)
        rep = r.report
        trace = r.controller.trace if r.controller is not None else []
        times = np.array([tp.time_ns for tp in trace])
        tot = rep.window_throughput_bps
        ends = np.minimum(rep.window_start_ns + rep.window_ns, rep.duration_ns)
        for k, start in enumerate(rep.window_start_ns):
            p_val, j = "", ""
            if trace:
                idx = np.searchsorted(times, ends[k], side="right") - 1
                p_val, j = trace[idx].p_val, trace[idx].j if protocol == "tora" else ""
            node = rep.window_node_bits[k] * 1e9 / (ends[k] - start)
            rows.append((cfg.scenario.label, seed, protocol, start / 1e9, int(rep.window_active[k]), p_val, j,
                         float(tot[k]), _node_vec(node)))
        runs.append(r)
    outputs = ["dynamic.csv"]
    _write_csv(os.path.join(out_dir, "dynamic.csv"), DYNAMIC_HEADER, rows)
    _runs_json(out_dir, "dynamic", cfg, runs, outputs)
    _emit_traces(cfg, out_dir, "dynamic", runs, outputs)
    _sidecar(out_dir, "dynamic", cfg, outputs, {"protocol": protocol})
    return {"outputs": outputs, "runs": runs}
