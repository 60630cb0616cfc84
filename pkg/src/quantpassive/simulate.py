"""Event-triggered simulation of the quantized distributed control protocol.

Between broadcasts every agent holds a constant control, so the closed loop
is smooth and is integrated with classical fixed-step RK4. A cubic Hermite
interpolant of the relative measurements over each step brackets the first
quantizer-level crossing, which is then confirmed on a true RK4 sub-step so
that the state at the event instant lies on the far side of the boundary.
Only the two agents incident to the edge update their control.
"""

from __future__ import annotations

import logging
from functools import lru_cache
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .agents import LinearPassiveAgent, PassiveAgent
from .exceptions import CertificateError, DimensionError, EventBracketError, SimulationError, ZenoError
from .graph import OrientedGraph, incidence_matrix, kron
from .quantizer import UniformQuantizer

log = logging.getLogger(__name__)

MODES = ("coordination", "estimator", "synchronization", "regulation", "unquantized_baseline")


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class ReferenceVelocity:
    """Piecewise-constant ``v(t)``: ``values[k]`` holds on ``[times[k], times[k+1])``."""

    times: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("reference velocity needs matching, non-empty breakpoint and value lists")
        if self.times[0] != 0.0 or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("reference velocity breakpoints must start at 0 and increase strictly")
        if len({len(v) for v in self.values}) != 1:
            raise ValueError("all reference velocity values must have the same dimension")

    @classmethod
    def constant(cls, v: Sequence[float]) -> "ReferenceVelocity":
        return cls((0.0,), (tuple(float(c) for c in v),))

    @classmethod
    def from_table(cls, table) -> "ReferenceVelocity":
        times = tuple(float(row[0]) for row in table)
        values = tuple(tuple(float(c) for c in np.atleast_1d(row[1])) for row in table)
        return cls(times, values)

    @property
    def dim(self) -> int:
        return len(self.values[0])

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def __call__(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return np.asarray(self.values[max(k, 0)], dtype=float)

    def next_breakpoint(self, t: float) -> float:
        k = int(np.searchsorted(self.times, t, side="right"))
        return self.times[k] if k < len(self.times) else np.inf


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float
    max_step: float = 0.01
    event_tolerance: float = 1e-10
    dwell_min: float = 1e-4
    reference_velocity: ReferenceVelocity | None = None
    max_events_per_unit_time: float = 1e6
    record_every: int = 1
    mode: str = "coordination"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if not 0 < self.event_tolerance < self.max_step:
            raise ValueError("event_tolerance must lie in (0, max_step)")
        if self.dwell_min < 0:
            raise ValueError("dwell_min must be non-negative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class EventRecord:
    time: float
    edge: int
    component: int
    old_level: float
    new_level: float
    deferred: bool = False


@dataclass
class Trajectory:
    """Sampled closed-loop solution plus the broadcast log.

    ``levels`` holds the broadcast values ``q(z)`` in force right after each
    sample time (for unquantized runs it holds ``z``); ``controls`` the
    corresponding held inputs ``u``.
    """

    mode: str
    graph: OrientedGraph
    p: int
    delta: float | None
    times: np.ndarray
    states: np.ndarray
    levels: np.ndarray
    controls: np.ndarray
    measurement: np.ndarray
    layout: dict[str, slice]
    events: list[EventRecord] = field(default_factory=list)
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    chatter_count: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def quantized(self) -> bool:
        return self.delta is not None

    def block(self, name: str) -> np.ndarray:
        return self.states[:, self.layout[name]]

    @property
    def z(self) -> np.ndarray:
        return self.states @ self.measurement.T

    def final(self, name: str) -> np.ndarray:
        return self.block(name)[-1]


# ---------------------------------------------------------------- event detection


@dataclass(frozen=True)
class Crossing:
    """Quantizer boundary crossing of measurement component ``component``.

    The crossing time lies in ``[start + lower, start + offset]`` and the
    bracket width is at most the requested tolerance.
    """

    offset: float
    lower: float
    component: int
    direction: int


def _hermite(s0, s1, d0, d1, dt, tau):
    """Cubic Hermite interpolant on ``[0, dt]``; ``tau`` broadcasts over rows."""
    x = np.asarray(tau) / dt
    x2, x3 = x * x, x * x * x
    return ((2 * x3 - 3 * x2 + 1) * s0 + (x3 - 2 * x2 + x) * dt * d0
            + (-2 * x3 + 3 * x2) * s1 + (x3 - x2) * dt * d1)


@lru_cache(maxsize=8)
def _hermite_basis(samples: int) -> np.ndarray:
    x = np.linspace(0.0, 1.0, samples + 1)
    x2, x3 = x * x, x * x * x
    basis = np.stack([2 * x3 - 3 * x2 + 1, x3 - 2 * x2 + x, -2 * x3 + 3 * x2, x3 - x2], axis=1)
    basis[-1] = (0.0, 0.0, 1.0, 0.0)
    return basis


def detect_events(dt: float, s0, s1, ds0, ds1, levels, active=None, tol: float = 1e-10,
                  samples: int = 8) -> list[Crossing]:
    """Locate every quantizer-cell exit of the cubic interpolant over one step.

    Measurements are expressed in level units ``s = z / delta + 1/2``, so the
    cell of level ``m`` is ``m <= s < m + 1``. ``ds0`` and ``ds1`` are time
    derivatives at the two ends of the step of length ``dt``.

    Returns crossings sorted by time and then by component index; an empty
    list means no component leaves its cell.
    """
    s0, s1, ds0, ds1 = (np.asarray(a, dtype=float) for a in (s0, s1, ds0, ds1))
    levels = np.asarray(levels)
    vals = _hermite_basis(samples) @ np.stack([s0, dt * ds0, s1, dt * ds1])
    outside = np.floor(vals) != levels
    outside[0] = False
    if active is not None:
        outside &= np.asarray(active, dtype=bool)
    if not outside.any():
        return []
    taus = np.linspace(0.0, dt, samples + 1)
    hits = np.flatnonzero(outside.any(axis=0))
    found = []
    for c in hits:
        k = int(np.argmax(outside[:, c]))
        direction = 1 if vals[k, c] >= levels[c] + 1 else -1
        boundary = float(levels[c] + 1 if direction > 0 else levels[c])
        lo, hi = float(taus[k - 1]), float(taus[k])
        a0, a1, b0, b1 = float(s0[c]), float(s1[c]), float(ds0[c]) * dt, float(ds1[c]) * dt
        for _ in range(200):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            x = mid / dt
            x2 = x * x
            x3 = x2 * x
            val = (2 * x3 - 3 * x2 + 1) * a0 + (x3 - 2 * x2 + x) * b0 + (-2 * x3 + 3 * x2) * a1 + (x3 - x2) * b1
            crossed = val >= boundary if direction > 0 else val < boundary
            if crossed:
                hi = mid
            else:
                lo = mid
        else:
            raise EventBracketError(f"bisection did not converge for component {c}")
        found.append(Crossing(offset=float(hi), lower=float(lo), component=int(c), direction=direction))
    found.sort(key=lambda cr: (cr.offset, cr.component))
    return found


# ---------------------------------------------------------------- plants


class _Plant:
    """Closed-loop vector field ``y' = F(y, u, v)`` with linear measurements ``z = Z y``."""

    dim: int
    Z: np.ndarray

    def field(self, u: np.ndarray, v: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        raise NotImplementedError


class _LinearPlant(_Plant):
    def __init__(self, A, B, E, Z):
        self.A, self.B, self.E, self.Z = A, B, E, Z
        self.dim = A.shape[0]

    def field(self, u, v):
        c = self.B @ u
        if self.E is not None and v is not None:
            c = c + self.E @ v
        A = self.A
        return lambda y: A @ y + c


class _CoordinationPlant(_Plant):
    """Agents given by callables; ``x' = h(xi) + [u] + v_or_vhat``."""

    def __init__(self, agents, p, Z, estimator_gains=None, leader=0):
        self.agents, self.p, self.Z = agents, p, Z
        N = len(agents)
        self.xi_slices = []
        start = N * p
        for a in agents:
            self.xi_slices.append(slice(start, start + a.state_dim))
            start += a.state_dim
        self.estimator = estimator_gains is not None
        if self.estimator:
            self.vhat = slice(start, start + N * p)
            self.gains = estimator_gains
            self.leader = leader
            start += N * p
        self.dim = start

    def field(self, u, v):
        agents, p = self.agents, self.p
        N = len(agents)

        def f(y):
            dy = np.empty_like(y)
            for i, a in enumerate(agents):
                ui = u[i * p:(i + 1) * p]
                xi = y[self.xi_slices[i]]
                vel = a.output(xi, ui) if a.state_dim else ui.copy()
                if self.estimator:
                    vel = vel + y[self.vhat][i * p:(i + 1) * p]
                else:
                    vel = vel + v
                dy[i * p:(i + 1) * p] = vel
                if a.state_dim:
                    dy[self.xi_slices[i]] = a.drift(xi) + np.atleast_2d(a.input_map(xi)) @ ui
            if self.estimator:
                dv = np.zeros(N * p)
                for i in range(N):
                    if i != self.leader:
                        dv[i * p:(i + 1) * p] = self.gains[i] @ u[i * p:(i + 1) * p]
                dy[self.vhat] = dv
            return dy

        return f


def _rk4(f, y, dt, k1):
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------- engine


def _integrate(plant: _Plant, DI: np.ndarray, quantizer: UniformQuantizer | None, cfg: SimulationConfig,
               y0: np.ndarray, vref: ReferenceVelocity | None):
    """Run the protocol; returns arrays of samples, events and chatter count.

    ``DI`` is the integer matrix ``D kron I_p`` mapping edge levels to agent
    controls (with a minus sign).
    """
    T, h = float(cfg.horizon), float(cfg.max_step)
    y = np.array(y0, dtype=float)
    if y.shape != (plant.dim,):
        raise DimensionError(f"initial state has shape {y.shape}, expected ({plant.dim},)")
    if not np.all(np.isfinite(y)):
        raise SimulationError("initial state must be finite")
    quantized = quantizer is not None
    delta = quantizer.delta if quantized else 1.0
    # measurements in level units: the cell of level m is m <= s < m + 1
    Zs = plant.Z / delta
    p_edge = getattr(plant, "p_edges", 1)
    ncomp = Zs.shape[0]
    eps_t = 1e-14 * max(1.0, T)

    times, states, lev_log, ctl_log = [], [], [], []
    events: list[EventRecord] = []
    chatter = 0
    s_now = Zs @ y + 0.5
    m = np.floor(s_now).astype(np.int64)
    u_idx = -(DI @ m)
    last_event = np.full(ncomp, -np.inf)
    deferred_until = np.full(ncomp, np.inf)
    recent: deque[float] = deque()

    def control(state):
        if quantized:
            return delta * u_idx.astype(float)
        return -(DI @ (plant.Z @ state))

    def record(t, state):
        times.append(t)
        states.append(state.copy())
        lev_log.append(delta * m.astype(float) if quantized else plant.Z @ state)
        ctl_log.append(control(state))

    def apply(t, c, new, deferred):
        nonlocal u_idx
        old = int(m[c])
        m[c] = new
        u_idx = u_idx - DI[:, c] * (new - old)
        last_event[c] = t
        events.append(EventRecord(float(t), int(c // p_edge), int(c % p_edge), old * delta, new * delta,
                                  bool(deferred)))
        recent.append(t)
        while recent and recent[0] < t - 1.0:
            recent.popleft()
        if len(recent) > cfg.max_events_per_unit_time:
            raise ZenoError(f"more than {cfg.max_events_per_unit_time:g} events within one time unit "
                            f"at t = {t:.6g}")

    t = 0.0
    record(t, y)
    step = 0
    while t < T - eps_t:
        t_stop = min(t + h, T)
        if vref is not None:
            t_stop = min(t_stop, vref.next_breakpoint(t))
        if quantized:
            pending = deferred_until.min()
            if pending < t_stop:
                t_stop = max(float(pending), t)
        dt = t_stop - t
        v = vref(t) if vref is not None else None
        f = plant.field(control(y), v) if quantized else _unquantized_field(plant, DI, v)
        k1 = f(y)
        y1 = _rk4(f, y, dt, k1) if dt > 0 else y.copy()
        if not np.all(np.isfinite(y1)):
            raise SimulationError(f"state became non-finite at t = {t:.6g}")
        t_new, y_new = t_stop, y1
        s1 = Zs @ y1 + 0.5
        if quantized and dt > 0:
            mask = ~np.isfinite(deferred_until)
            ds0 = Zs @ k1
            ds1 = None
            while True:
                if ds1 is None:
                    # cheap exit: neither endpoint leaves its cell and the slopes are small
                    if not np.any(mask & (np.floor(s1) != m)):
                        reach = np.abs(ds0) * dt
                        if np.all((s_now - m > reach) & (m + 1 - s_now > reach) | ~mask):
                            break
                    ds1 = Zs @ f(y1)
                found = detect_events(dt, s_now, s1, ds0, ds1, m, mask, tol=cfg.event_tolerance)
                if not found:
                    break
                cr = found[0]
                c = cr.component
                tau_hi = cr.offset
                y_e = _rk4(f, y, tau_hi, k1)
                if np.floor(Zs[c] @ y_e + 0.5) == m[c]:
                    # cubic and RK4 disagree near the boundary: bracket on true sub-steps
                    if np.floor(s1[c]) == m[c]:
                        mask[c] = False
                        continue
                    lo, hi, y_hi = tau_hi, dt, y1
                    for _ in range(200):
                        if hi - lo <= cfg.event_tolerance:
                            break
                        mid = 0.5 * (lo + hi)
                        y_mid = _rk4(f, y, mid, k1)
                        if np.floor(Zs[c] @ y_mid + 0.5) != m[c]:
                            hi, y_hi = mid, y_mid
                        else:
                            lo = mid
                    else:
                        raise EventBracketError(f"could not bracket crossing of component {c} near t = {t:.6g}")
                    tau_hi, y_e = hi, y_hi
                t_new, y_new = t + tau_hi, y_e
                s1 = Zs @ y_e + 0.5
                break
        t, y, s_now = t_new, y_new, s1
        step += 1
        fired = False
        if quantized:
            lev = np.floor(s_now).astype(np.int64)
            moved = lev != m
            free = ~np.isfinite(deferred_until)
            for c in np.flatnonzero(free & moved):
                if t - last_event[c] < cfg.dwell_min:
                    deferred_until[c] = last_event[c] + cfg.dwell_min
                    chatter += 1
                else:
                    apply(t, c, int(lev[c]), False)
                    fired = True
            if deferred_until.min() <= t + eps_t:
                for c in np.flatnonzero(deferred_until <= t + eps_t):
                    deferred_until[c] = np.inf
                    if lev[c] != m[c]:
                        apply(t, c, int(lev[c]), True)
                        fired = True
            if fired and not np.array_equal(u_idx, -(DI @ m)):
                raise SimulationError("incremental control updates drifted from -(D kron I) q(z)")
        if fired or step % cfg.record_every == 0 or t >= T - eps_t:
            record(t, y)
    if chatter:
        log.warning("dwell guard deferred %d crossings (possible sliding along a quantizer boundary)", chatter)
    return (np.array(times), np.array(states), np.array(lev_log), np.array(ctl_log), events, chatter)


def _unquantized_field(plant, DI, v):
    """Continuous control ``u = -(D kron I) z`` substituted into the plant."""
    if isinstance(plant, _LinearPlant):
        A = plant.A - plant.B @ DI @ plant.Z
        c = plant.E @ v if plant.E is not None and v is not None else 0.0
        return lambda y: A @ y + c
    Z = plant.Z

    def f(y):
        return plant.field(-(DI @ (Z @ y)), v)(y)

    return f


# ---------------------------------------------------------------- assembly helpers


def _stack(vals, n, count, name):
    arr = np.asarray(vals, dtype=float).reshape(-1)
    if arr.size != n * count:
        raise DimensionError(f"{name} must contain {count} x {n} = {n * count} numbers, got {arr.size}")
    return arr


def _block_diag(mats, rows, cols):
    out = np.zeros((sum(rows), sum(cols)))
    r = c = 0
    for M, nr, nc in zip(mats, rows, cols):
        out[r:r + nr, c:c + nc] = M
        r += nr
        c += nc
    return out


def _coordination_plant(graph, agents, p, estimator_gains=None, leader=0):
    N = graph.num_nodes
    if len(agents) != N:
        raise DimensionError(f"{len(agents)} agents given for a graph with {N} nodes")
    for i, a in enumerate(agents):
        if a.io_dim != p:
            raise DimensionError(f"agent {i} has io_dim {a.io_dim}, expected {p}")
        if not a.strict:
            raise CertificateError(f"agent {i} ({a.name}) is not strictly passive")
    D = incidence_matrix(graph)
    DI = kron(D, np.eye(p, dtype=int)).astype(np.int64)
    nxi = sum(a.state_dim for a in agents)
    nv = N * p if estimator_gains is not None else 0
    dim = N * p + nxi + nv
    Z = np.zeros((graph.num_edges * p, dim))
    Z[:, :N * p] = DI.T
    layout = {"x": slice(0, N * p), "xi": slice(N * p, N * p + nxi)}
    if nv:
        layout["vhat"] = slice(N * p + nxi, dim)
    if all(a.linear is not None or a.state_dim == 0 for a in agents):
        A = np.zeros((dim, dim))
        B = np.zeros((dim, N * p))
        E = None
        off = N * p
        for i, a in enumerate(agents):
            rows = slice(i * p, (i + 1) * p)
            if a.state_dim:
                Ai, Bi, Ci = a.linear
                xs = slice(off, off + a.state_dim)
                A[rows, xs] = Ci
                A[xs, xs] = Ai
                B[xs, rows] = Bi
                off += a.state_dim
            if a.feedthrough:
                B[rows, rows] += np.eye(p)
            if nv:
                A[rows, layout["vhat"].start + i * p: layout["vhat"].start + (i + 1) * p] = np.eye(p)
                if i != leader:
                    vs = slice(layout["vhat"].start + i * p, layout["vhat"].start + (i + 1) * p)
                    B[vs, rows] = estimator_gains[i]
        if not nv:
            E = np.tile(np.eye(p), (N, 1))
            E = np.vstack([E, np.zeros((dim - N * p, p))])
        plant = _LinearPlant(A, B, E, Z)
    else:
        plant = _CoordinationPlant(agents, p, Z, estimator_gains, leader)
    plant.p_edges = p
    return plant, DI, layout


def _finish(mode, graph, p, quantizer, plant, DI, layout, out, extra_meta=None):
    times, states, levels, controls, events, chatter = out
    traj = Trajectory(
        mode=mode, graph=graph, p=p, delta=quantizer.delta if quantizer is not None else None,
        times=times, states=states, levels=levels, controls=controls,
        measurement=plant.Z, layout=layout, events=events, chatter_count=chatter,
        meta=dict(extra_meta or {}),
    )
    return traj


# ---------------------------------------------------------------- public runners


def _potential_series(traj, quantizer):
    if quantizer is None:
        return 0.5 * np.sum(traj.z ** 2, axis=1)
    return np.sum(quantizer.potential_components(traj.z), axis=1)


def run_coordination(graph: OrientedGraph, agents: Sequence[PassiveAgent], quantizer: UniformQuantizer | None,
                     cfg: SimulationConfig, x0, xi0=None) -> Trajectory:
    """Quantized agreement with velocity tracking.

    ``quantizer=None`` gives the unquantized baseline with ``psi = identity``.
    """
    graph.require_connected()
    vref = cfg.reference_velocity
    p = vref.dim if vref is not None else agents[0].io_dim
    if vref is None:
        vref = ReferenceVelocity.constant(np.zeros(p))
    plant, DI, layout = _coordination_plant(graph, list(agents), p)
    N = graph.num_nodes
    nxi = layout["xi"].stop - layout["xi"].start
    y0 = np.concatenate([_stack(x0, p, N, "x0"), np.zeros(nxi) if xi0 is None else _stack(xi0, 1, nxi, "xi0")])
    out = _integrate(plant, DI, quantizer, cfg, y0, vref)
    dims = {"x": [p] * N, "xi": [a.state_dim for a in agents]}
    traj = _finish("coordination", graph, p, quantizer, plant, DI, layout, out, {"block_dims": dims})
    _coordination_diagnostics(traj, list(agents), quantizer, vref)
    return traj


def run_estimator(graph: OrientedGraph, agents: Sequence[PassiveAgent], quantizer: UniformQuantizer | None,
                  cfg: SimulationConfig, x0, xi0, vhat0, gains, leader: int = 0) -> Trajectory:
    """Agreement with a leader that knows the constant reference velocity.

    Followers integrate ``vhat_i' = Lambda_i u_i``; the leader's estimate is
    pinned to the true ``v``.
    """
    graph.require_connected()
    vref = cfg.reference_velocity
    if vref is None or not vref.is_constant:
        raise SimulationError("estimator mode requires a constant reference velocity")
    p = vref.dim
    N = graph.num_nodes
    if not 0 <= leader < N:
        raise DimensionError(f"leader index {leader} outside 0..{N - 1}")
    gains = [np.atleast_2d(np.asarray(G, dtype=float)) for G in gains]
    if len(gains) != N:
        raise DimensionError("one estimator gain per agent is required")
    for i, G in enumerate(gains):
        if G.shape != (p, p) or np.abs(G - G.T).max() > 1e-12 or np.linalg.eigvalsh(G).min() <= 0:
            raise CertificateError(f"estimator gain {i} must be a symmetric positive definite {p}x{p} matrix")
    plant, DI, layout = _coordination_plant(graph, list(agents), p, gains, leader)
    nxi = layout["xi"].stop - layout["xi"].start
    vh = _stack(vhat0, p, N, "vhat0").copy()
    vh[leader * p:(leader + 1) * p] = vref(0.0)
    y0 = np.concatenate([_stack(x0, p, N, "x0"), np.zeros(nxi) if xi0 is None else _stack(xi0, 1, nxi, "xi0"), vh])
    out = _integrate(plant, DI, quantizer, cfg, y0, None)
    dims = {"x": [p] * N, "xi": [a.state_dim for a in agents], "vhat": [p] * N}
    traj = _finish("estimator", graph, p, quantizer, plant, DI, layout, out, {"leader": leader, "block_dims": dims})
    _coordination_diagnostics(traj, list(agents), quantizer, vref, gains)
    return traj


def _coordination_diagnostics(traj, agents, quantizer, vref, gains=None):
    p, N = traj.p, traj.graph.num_nodes
    xi = traj.block("xi")
    S = np.zeros(len(traj.times))
    vel = np.zeros((len(traj.times), N * p))
    off = 0
    for i, a in enumerate(agents):
        if a.state_dim:
            seg = xi[:, off:off + a.state_dim]
            S += np.array([a.storage(row) for row in seg])
            vel[:, i * p:(i + 1) * p] = np.array([a.output_map(row) for row in seg])
            off += a.state_dim
        if a.feedthrough:
            vel[:, i * p:(i + 1) * p] += traj.controls[:, i * p:(i + 1) * p]
    P = _potential_series(traj, quantizer)
    V = S + P
    v_true = np.array([vref(t) for t in traj.times])
    if gains is not None:
        vt = traj.block("vhat") - np.tile(v_true, (1, N))
        vel += vt
        Linv = [np.linalg.inv(G) for G in gains]
        V = V + 0.5 * np.array([sum(row[i * p:(i + 1) * p] @ Linv[i] @ row[i * p:(i + 1) * p] for i in range(N))
                                for row in vt])
        traj.diagnostics["estimate_error"] = np.linalg.norm(vt, axis=1)
    traj.diagnostics.update({"S": S, "P": P, "V": V, "velocity_error": np.linalg.norm(vel, axis=1)})
    traj.meta["reference_velocity"] = v_true


def run_synchronization(graph: OrientedGraph, system: LinearPassiveAgent, quantizer: UniformQuantizer | None,
                        cfg: SimulationConfig, xi0) -> Trajectory:
    """Identical linear agents coupled through quantized output differences."""
    if not graph.is_connected():
        graph.require_connected()
    N, n, p = graph.num_nodes, system.n, system.p
    D = incidence_matrix(graph)
    DI = kron(D, np.eye(p, dtype=int)).astype(np.int64)
    A = kron(np.eye(N), system.A)
    B = kron(np.eye(N), system.B)
    Z = DI.T @ kron(np.eye(N), system.C)
    plant = _LinearPlant(A, B, None, Z)
    plant.p_edges = p
    layout = {"xi": slice(0, N * n)}
    out = _integrate(plant, DI, quantizer, cfg, _stack(xi0, n, N, "xi0"), None)
    traj = _finish("synchronization", graph, p, quantizer, plant, DI, layout, out,
                   {"n": n, "block_dims": {"xi": [n] * N}})
    _sync_diagnostics(traj, system)
    return traj


def _sync_diagnostics(traj, system, block="xi"):
    N, n = traj.graph.num_nodes, system.n
    xi = traj.block(block)
    avg = xi.reshape(len(traj.times), N, n).mean(axis=1)
    dis = xi - np.tile(avg, (1, N))
    traj.diagnostics["disagreement"] = np.linalg.norm(dis, axis=1)
    traj.diagnostics["sum"] = xi.reshape(len(traj.times), N, n).sum(axis=1)
    if system.P is not None:
        PN = kron(np.eye(N), system.P)
        traj.diagnostics["V"] = np.einsum("ti,ij,tj->t", xi, PN, xi)


@dataclass(frozen=True)
class RegulatedPlant:
    """Heterogeneous plant ``x' = F x + G u``, ``y = H x`` with its regulator data.

    ``Pi``, ``Gamma`` solve the regulator equations; ``K`` and ``L`` make
    ``F + G K`` and ``F + L H`` Hurwitz.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    K: np.ndarray
    L: np.ndarray
    Pi: np.ndarray
    Gamma: np.ndarray

    @property
    def n(self) -> int:
        return np.atleast_2d(self.F).shape[0]


def run_output_regulation(graph: OrientedGraph, exo: LinearPassiveAgent, plants: Sequence[RegulatedPlant],
                          quantizer: UniformQuantizer | None, cfg: SimulationConfig, xi0, x0=None,
                          xhat0=None) -> Trajectory:
    """Exosystems synchronized by quantized coupling, each driving an observer-based regulator.

    Per agent: ``xhat' = F xhat + G u + L (H xhat - H x)`` and
    ``u = K (xhat - Pi xi) + Gamma xi``.
    """
    graph.require_connected()
    N, n, p = graph.num_nodes, exo.n, exo.p
    if len(plants) != N:
        raise DimensionError(f"{len(plants)} plants for {N} nodes")
    D = incidence_matrix(graph)
    DI = kron(D, np.eye(p, dtype=int)).astype(np.int64)
    nx = [pl.n for pl in plants]
    total = N * n + 2 * sum(nx)
    A = np.zeros((total, total))
    A[:N * n, :N * n] = kron(np.eye(N), exo.A)
    B = np.zeros((total, N * p))
    B[:N * n] = kron(np.eye(N), exo.B)
    off_x = N * n
    off_h = N * n + sum(nx)
    for i, pl in enumerate(plants):
        F, G, H, K, L, Pi, Gam = (np.atleast_2d(np.asarray(M, dtype=float)) for M in
                                  (pl.F, pl.G, pl.H, pl.K, pl.L, pl.Pi, pl.Gamma))
        xs = slice(off_x, off_x + pl.n)
        hs = slice(off_h, off_h + pl.n)
        es = slice(i * n, (i + 1) * n)
        # u = K xhat + (Gamma - K Pi) xi
        A[xs, xs] += F
        A[xs, hs] += G @ K
        A[xs, es] += G @ (Gam - K @ Pi)
        A[hs, hs] += F + G @ K + L @ H
        A[hs, xs] += -L @ H
        A[hs, es] += G @ (Gam - K @ Pi)
        off_x += pl.n
        off_h += pl.n
    Z = np.zeros((graph.num_edges * p, total))
    Z[:, :N * n] = DI.T @ kron(np.eye(N), exo.C)
    plant = _LinearPlant(A, B, None, Z)
    plant.p_edges = p
    layout = {"xi": slice(0, N * n), "plant": slice(N * n, N * n + sum(nx)),
              "observer": slice(N * n + sum(nx), total)}
    y0 = np.concatenate([
        _stack(xi0, n, N, "xi0"),
        np.zeros(sum(nx)) if x0 is None else _stack(x0, 1, sum(nx), "x0"),
        np.zeros(sum(nx)) if xhat0 is None else _stack(xhat0, 1, sum(nx), "xhat0"),
    ])
    out = _integrate(plant, DI, quantizer, cfg, y0, None)
    traj = _finish("regulation", graph, p, quantizer, plant, DI, layout, out,
                   {"n": n, "block_dims": {"xi": [n] * N, "plant": nx, "observer": nx}})
    _sync_diagnostics(traj, exo)
    xs = traj.block("plant")
    outputs = []
    off = 0
    for pl in plants:
        outputs.append(xs[:, off:off + pl.n] @ np.atleast_2d(pl.H).T)
        off += pl.n
    y = np.stack(outputs, axis=1)  # (T, N, q)
    traj.diagnostics["outputs"] = y.reshape(len(traj.times), -1)
    spread = y.max(axis=1) - y.min(axis=1)
    traj.diagnostics["output_disagreement"] = spread.max(axis=1)
    return traj


def run_unquantized_baseline(mode: str, *args, **kwargs) -> Trajectory:
    """Same loop as the quantized runner for ``mode`` with ``q`` replaced by the identity."""
    runners = {"coordination": run_coordination, "estimator": run_estimator,
               "synchronization": run_synchronization, "regulation": run_output_regulation}
    try:
        runner = runners[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}") from None
    kwargs["quantizer"] = None
    return runner(*args, **kwargs)
