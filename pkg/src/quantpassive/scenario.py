"""Scenario files: parsing, validation and the shipped presets.

Scenarios are YAML documents. Node and edge indices are 1-based in the
file and converted to 0-based on load. Every validation error names the
offending key, e.g. ``graph.edges[2]``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from scipy.signal import place_poles

from .agents import (ExosystemSpec, LinearPassiveAgent, PassiveAgent, lowpass_oscillator, make_double_integrator,
                     make_nonlinear_preset, make_single_integrator, oscillator)
from .analysis import solve_regulator_equations
from .exceptions import QuantPassiveError, ScenarioError
from .graph import OrientedGraph, incidence_matrix, laplacian_spectrum
from .quantizer import UniformQuantizer
from .simulate import RegulatedPlant, ReferenceVelocity, SimulationConfig

MODES = ("coordination", "estimator", "synchronization", "regulation")
PRNG_ALGORITHM = "numpy PCG64 seeded by SeedSequence([seed, crc32(name)])"

DEFAULT_CHECKS = {
    "coordination": ["practical_consensus", "velocity_tracking", "diameter_bound", "lyapunov", "feedforward",
                     "prior_bound"],
    "estimator": ["practical_consensus", "estimator_convergence", "lyapunov", "feedforward"],
    "synchronization": ["sync_radius", "average_invariance", "lyapunov"],
    "regulation": ["regulator_equations", "sync_radius", "average_invariance", "output_disagreement"],
}
KNOWN_CHECKS = {c for v in DEFAULT_CHECKS.values() for c in v} | {"spr"}


@dataclass(frozen=True)
class CheckSettings:
    names: tuple[str, ...]
    window: float
    tol: float = 1e-6
    lyapunov_tol: float = 1e-6
    average_tol: float = 1e-6
    estimate_tol: float = 1e-4


@dataclass(frozen=True)
class EstimatorSettings:
    leader: int
    gains: tuple[np.ndarray, ...]


@dataclass
class Scenario:
    name: str
    mode: str
    description: str
    graph: OrientedGraph
    quantizer: UniformQuantizer
    config: SimulationConfig
    initial: dict[str, np.ndarray]
    checks: CheckSettings
    seed: int
    raw: dict = field(repr=False)
    agents: list[PassiveAgent] | None = None
    system: ExosystemSpec | None = None
    estimator: EstimatorSettings | None = None
    plants: list[RegulatedPlant] | None = None
    path: str | None = None

    @property
    def sha256(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def p(self) -> int:
        if self.system is not None:
            return self.system.system().p
        return self.agents[0].io_dim

    def with_overrides(self, *, delta: float | None = None, seed: int | None = None, tol: float | None = None,
                       gain_scale: float | None = None) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        if delta is not None:
            raw.setdefault("quantizer", {})["delta"] = float(delta)
        if seed is not None:
            raw["seed"] = int(seed)
        if tol is not None:
            raw.setdefault("checks", {})["tol"] = float(tol)
        if gain_scale is not None:
            if self.mode != "estimator":
                raise ScenarioError("the lambda-scale parameter applies to estimator scenarios only")
            gains = raw.get("estimator", {}).get("gain", 1.0)
            raw["estimator"]["gain"] = _scale_nested(gains, float(gain_scale))
        return build_scenario(raw, path=self.path)


def _scale_nested(value, factor):
    if isinstance(value, list):
        return [_scale_nested(v, factor) for v in value]
    return float(value) * factor


# ---------------------------------------------------------------- helpers


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    if key not in d:
        raise ScenarioError(f"{where}.{key}: missing required key")
    return d[key]


def _matrix(value, where: str, shape=None) -> np.ndarray:
    try:
        arr = np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: not a numeric matrix") from None
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: expected a finite 2-D matrix")
    if shape is not None and arr.shape != shape:
        raise ScenarioError(f"{where}: expected shape {shape}, got {arr.shape}")
    return arr


def _vector(value, where: str, size: int | None = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: not a numeric vector") from None
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: entries must be finite")
    if size is not None and arr.size != size:
        raise ScenarioError(f"{where}: expected {size} numbers, got {arr.size}")
    return arr


def _positive(value, where: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected a number") from None
    if not (np.isfinite(v) and v > 0):
        raise ScenarioError(f"{where}: must be positive and finite, got {value!r}")
    return v


def scenario_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])))


# ---------------------------------------------------------------- sections


def _parse_graph(section) -> OrientedGraph:
    n = _require(section, "nodes", "graph")
    if not isinstance(n, int) or n < 1:
        raise ScenarioError(f"graph.nodes: expected a positive integer, got {n!r}")
    edges = _require(section, "edges", "graph")
    if not isinstance(edges, list):
        raise ScenarioError("graph.edges: expected a list of [i, j] pairs")
    pairs = []
    for k, e in enumerate(edges):
        where = f"graph.edges[{k + 1}]"
        if not (isinstance(e, (list, tuple)) and len(e) == 2 and all(isinstance(v, int) for v in e)):
            raise ScenarioError(f"{where}: expected a pair of integer node indices, got {e!r}")
        i, j = e
        if not (1 <= i <= n and 1 <= j <= n):
            raise ScenarioError(f"{where} = [{i}, {j}]: node indices are 1-based and must lie in 1..{n}")
        pairs.append((i - 1, j - 1))
    try:
        g = OrientedGraph(n, tuple(pairs))
    except QuantPassiveError as exc:
        raise ScenarioError(f"graph.edges: {exc} (indices shown 0-based)") from None
    if not g.is_connected():
        raise ScenarioError("graph: the graph is not connected")
    return g


def _parse_agent(spec, where: str, p_default: int) -> PassiveAgent:
    kind = _require(spec, "type", where)
    p = int(spec.get("p", p_default))
    try:
        if kind == "single_integrator":
            return make_single_integrator(p)
        if kind == "double_integrator":
            return make_double_integrator(spec.get("K", 1.0), p)
        if kind == "linear_passive":
            A = _matrix(_require(spec, "A", where), f"{where}.A")
            B = _matrix(_require(spec, "B", where), f"{where}.B")
            C = _matrix(_require(spec, "C", where), f"{where}.C")
            P = _matrix(_require(spec, "P", where), f"{where}.P")
            return LinearPassiveAgent(A, B, C, P).as_passive_agent()
        if kind == "nonlinear":
            return make_nonlinear_preset(_require(spec, "preset", where), p, **spec.get("params", {}))
    except QuantPassiveError as exc:
        raise type(exc)(f"{where}: {exc}") from None
    raise ScenarioError(f"{where}.type: unknown agent type {kind!r}")


def _parse_agents(section, N: int) -> list[PassiveAgent]:
    if isinstance(section, dict):
        p = int(section.get("p", 1))
        agent = _parse_agent(section, "agents", p)
        return [agent] * N
    if isinstance(section, list):
        if len(section) != N:
            raise ScenarioError(f"agents: {len(section)} entries given for a graph with {N} nodes")
        p = int(section[0].get("p", 1)) if isinstance(section[0], dict) else 1
        agents = [_parse_agent(s, f"agents[{i + 1}]", p) for i, s in enumerate(section)]
        dims = {a.io_dim for a in agents}
        if len(dims) != 1:
            raise ScenarioError(f"agents: all agents must share the input/output dimension, found {sorted(dims)}")
        return agents
    raise ScenarioError("agents: expected a mapping (shared by all agents) or a list with one entry per node")


def _parse_system(section) -> ExosystemSpec:
    kind = _require(section, "type", "system")
    try:
        if kind == "oscillator":
            return oscillator(float(section.get("omega", 1.0)))
        if kind == "lowpass_oscillator":
            return lowpass_oscillator(float(section.get("omega", 1.0)), _positive(_require(section, "a", "system"),
                                                                                  "system.a"))
        if kind == "linear":
            A = _matrix(_require(section, "A", "system"), "system.A")
            B = _matrix(_require(section, "B", "system"), "system.B")
            C = _matrix(_require(section, "C", "system"), "system.C")
            mode = section.get("certificate", "passive")
            P = _matrix(section["P"], "system.P") if "P" in section else None
            spec = ExosystemSpec(A, B, C, mode, P)
            spec.system()  # shape checks
            return spec
    except QuantPassiveError as exc:
        raise type(exc)(f"system: {exc}") from None
    raise ScenarioError(f"system.type: unknown system type {kind!r}")


def _gain_from_poles(F, G, poles, where):
    poles = np.asarray(poles, dtype=float)
    if poles.size != F.shape[0]:
        raise ScenarioError(f"{where}: need {F.shape[0]} poles, got {poles.size}")
    if F.shape[0] == 1 and G.shape[1] == 1:
        return np.array([[(poles[0] - F[0, 0]) / G[0, 0]]])
    try:
        return -place_poles(F, G, poles).gain_matrix
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _parse_plants(section, exo: ExosystemSpec, N: int) -> list[RegulatedPlant]:
    plants_raw = _require(section, "plants", "regulation")
    if not isinstance(plants_raw, list) or len(plants_raw) != N:
        raise ScenarioError(f"regulation.plants: expected one plant per node ({N})")
    sysm = exo.system()
    R_out = _matrix(section["R_out"], "regulation.R_out") if "R_out" in section else sysm.C
    out = []
    for i, spec in enumerate(plants_raw):
        where = f"regulation.plants[{i + 1}]"
        F = _matrix(_require(spec, "F", where), f"{where}.F")
        G = _matrix(_require(spec, "G", where), f"{where}.G")
        H = _matrix(_require(spec, "H", where), f"{where}.H")
        try:
            sol = solve_regulator_equations(F, G, H, sysm.A, R_out)
        except QuantPassiveError as exc:
            raise type(exc)(f"{where}: {exc}") from None
        K = _gain_from_poles(F, G, _require(spec, "controller_poles", where), f"{where}.controller_poles")
        L = _gain_from_poles(F.T, H.T, _require(spec, "observer_poles", where), f"{where}.observer_poles").T
        out.append(RegulatedPlant(F, G, H, K, L, sol.Pi, sol.Gamma))
    return out


def _parse_estimator(section, N: int, p: int) -> EstimatorSettings:
    leader = _require(section, "leader", "estimator")
    if not isinstance(leader, int) or not 1 <= leader <= N:
        raise ScenarioError(f"estimator.leader: expected a node index in 1..{N}, got {leader!r}")
    gain = section.get("gain", 1.0)
    if isinstance(gain, (int, float)):
        gains = [float(gain) * np.eye(p)] * N
    else:
        arr = np.asarray(gain, dtype=float)
        if arr.ndim == 2 and arr.shape == (p, p):
            gains = [arr] * N
        elif arr.ndim == 1 and arr.size == N:
            gains = [g * np.eye(p) for g in arr]
        elif arr.ndim == 3 and arr.shape == (N, p, p):
            gains = list(arr)
        else:
            raise ScenarioError("estimator.gain: expected a scalar, a p x p matrix, N scalars or N p x p matrices")
    for i, G in enumerate(gains):
        if np.abs(G - G.T).max() > 1e-12 or np.linalg.eigvalsh(G).min() <= 0:
            raise ScenarioError(f"estimator.gain[{i + 1}]: must be symmetric positive definite")
    return EstimatorSettings(leader - 1, tuple(gains))


def _parse_simulation(section, p: int | None, mode: str) -> SimulationConfig:
    if not isinstance(section, dict):
        raise ScenarioError("simulation: expected a mapping")
    kw: dict[str, Any] = {"horizon": _positive(_require(section, "horizon", "simulation"), "simulation.horizon")}
    for key in ("max_step", "event_tolerance", "max_events_per_unit_time"):
        if key in section:
            kw[key] = _positive(section[key], f"simulation.{key}")
    if "dwell_min" in section:
        kw["dwell_min"] = float(section["dwell_min"])
    if "record_every" in section:
        kw["record_every"] = int(section["record_every"])
    table = section.get("reference_velocity")
    if table is not None:
        if mode not in ("coordination", "estimator"):
            raise ScenarioError("simulation.reference_velocity: only coordination and estimator modes use it")
        try:
            kw["reference_velocity"] = ReferenceVelocity.from_table(table)
        except (ValueError, TypeError, IndexError) as exc:
            raise ScenarioError(f"simulation.reference_velocity: {exc}") from None
        if kw["reference_velocity"].dim != p:
            raise ScenarioError(f"simulation.reference_velocity: dimension {kw['reference_velocity'].dim} "
                                f"does not match the agent dimension {p}")
    elif mode in ("coordination", "estimator"):
        kw["reference_velocity"] = ReferenceVelocity.constant(np.zeros(p))
    try:
        return SimulationConfig(**kw)
    except ValueError as exc:
        raise ScenarioError(f"simulation: {exc}") from None


def _parse_checks(section, mode: str, horizon: float) -> CheckSettings:
    section = section or {}
    names = section.get("run", DEFAULT_CHECKS[mode])
    unknown = [n for n in names if n not in KNOWN_CHECKS]
    if unknown:
        raise ScenarioError(f"checks.run: unknown checks {unknown}; known: {sorted(KNOWN_CHECKS)}")
    window = float(section.get("window", min(5.0, horizon / 4)))
    if not 0 < window <= horizon:
        raise ScenarioError(f"checks.window: must lie in (0, horizon], got {window}")
    return CheckSettings(tuple(names), window, float(section.get("tol", 1e-6)),
                         float(section.get("lyapunov_tol", 1e-6)), float(section.get("average_tol", 1e-6)),
                         float(section.get("estimate_tol", 1e-4)))


def _block_sizes(mode, N, p, agents, system, plants):
    if mode in ("coordination", "estimator"):
        sizes = {"x": N * p, "xi": sum(a.state_dim for a in agents)}
        if mode == "estimator":
            sizes["vhat"] = N * p
        return sizes
    n = system.system().n
    sizes = {"xi": N * n}
    if mode == "regulation":
        nx = sum(pl.n for pl in plants)
        sizes.update({"plant": nx, "observer": nx})
    return sizes


def _parse_initial(section, sizes: dict[str, int], seed: int, name: str) -> dict[str, np.ndarray]:
    section = section or {}
    unknown = set(section) - set(sizes) - {"random"}
    if unknown:
        raise ScenarioError(f"initial: unknown keys {sorted(unknown)}; expected {sorted(sizes)} or 'random'")
    rnd = section.get("random")
    rng = scenario_rng(seed, name) if rnd is not None else None
    out = {}
    for key, size in sizes.items():
        if key in section:
            out[key] = _vector(section[key], f"initial.{key}", size)
        elif rnd is not None and key in rnd.get("fields", list(sizes)):
            low, high = float(rnd.get("low", -1.0)), float(rnd.get("high", 1.0))
            out[key] = rng.uniform(low, high, size)
        else:
            out[key] = np.zeros(size)
    return out


def build_scenario(raw: dict, path: str | None = None) -> Scenario:
    """Validate a parsed scenario document and assemble all model objects."""
    if not isinstance(raw, dict):
        raise ScenarioError("scenario: the document must be a mapping")
    name = str(_require(raw, "name", "scenario"))
    mode = _require(raw, "mode", "scenario")
    if mode not in MODES:
        raise ScenarioError(f"mode: expected one of {MODES}, got {mode!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ScenarioError(f"seed: expected an integer, got {seed!r}")
    graph = _parse_graph(_require(raw, "graph", "scenario"))
    N = graph.num_nodes
    try:
        quantizer = UniformQuantizer(_positive(_require(_require(raw, "quantizer", "scenario"), "delta", "quantizer"),
                                               "quantizer.delta"))
    except ValueError as exc:
        raise ScenarioError(f"quantizer.delta: {exc}") from None
    agents = system = estimator = plants = None
    if mode in ("coordination", "estimator"):
        agents = _parse_agents(_require(raw, "agents", "scenario"), N)
        for i, a in enumerate(agents):
            if not a.strict:
                raise ScenarioError(f"agents[{i + 1}]: agent is not strictly passive")
        p = agents[0].io_dim
        if mode == "estimator":
            estimator = _parse_estimator(_require(raw, "estimator", "scenario"), N, p)
    else:
        system = _parse_system(_require(raw, "system", "scenario"))
        spec = laplacian_spectrum(incidence_matrix(graph))
        try:
            system.validate(spec.lambda2, spec.lambdaN)
        except QuantPassiveError as exc:
            raise type(exc)(f"system: {exc}") from None
        p = system.system().p
        if mode == "regulation":
            plants = _parse_plants(_require(raw, "regulation", "scenario"), system, N)
    config = _parse_simulation(_require(raw, "simulation", "scenario"), p, mode)
    if mode == "estimator" and not config.reference_velocity.is_constant:
        raise ScenarioError("simulation.reference_velocity: estimator mode needs a constant reference velocity")
    checks = _parse_checks(raw.get("checks"), mode, config.horizon)
    if "lyapunov" in checks.names and system is not None and system.P is None:
        raise ScenarioError("checks.run: the lyapunov check needs a system with a passivity certificate P")
    if "spr" in checks.names and (system is None or system.mode != "spr"):
        raise ScenarioError("checks.run: the spr check needs a system with certificate 'spr'")
    sizes = _block_sizes(mode, N, p, agents, system, plants)
    initial = _parse_initial(raw.get("initial"), sizes, seed, name)
    return Scenario(name=name, mode=mode, description=str(raw.get("description", "")).strip(), graph=graph,
                    quantizer=quantizer, config=config, initial=initial, checks=checks, seed=seed, raw=raw,
                    agents=agents, system=system, estimator=estimator, plants=plants, path=path)


# ---------------------------------------------------------------- loading


def preset_names() -> list[str]:
    root = resources.files("quantpassive") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_path(name: str) -> Path:
    root = resources.files("quantpassive") / "presets"
    path = root / f"{name}.yaml"
    if not path.is_file():
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return Path(str(path))


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario from a YAML file, or a shipped preset by name."""
    path = Path(path_or_name)
    if not path.exists() and path.suffix == "" and path.parent == Path("."):
        path = preset_path(str(path_or_name))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: YAML parse error: {exc}") from None
    return build_scenario(raw, path=str(path))
