"""Constants, bounds and trajectory checks for the quantized protocols.

The disagreement Gram matrix ``R`` is assembled from per-eigenvalue blocks
``R_i = int_0^inf exp(M_i^T s) exp(M_i s) ds`` with ``M_i = A - lambda_i B C``,
using the Laplacian eigenbasis to block-diagonalize ``A~ = I kron A - L kron BC``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .exceptions import AnalysisError, RegulatorError
from .graph import OrientedGraph, diameter, incidence_matrix, kron, laplacian_spectrum, ratio_rho
from .quantizer import UniformQuantizer
from .simulate import Trajectory

log = logging.getLogger(__name__)

SPR_MARGIN = 1e-8
MONOTONE_TOL = 1e-6


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class BoundReport:
    """Outcome of comparing a measured quantity with a bound.

    ``entry_time`` is the start of the final run of samples on which the
    measured quantity stays within ``bound + tol`` (``None`` if the last
    sample violates it).
    """

    label: str
    bound_value: float
    achieved_value: float
    entry_time: float | None
    margin: float
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.achieved_value <= self.bound_value + self.tol)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _window_mask(times: np.ndarray, window: float) -> np.ndarray:
    T = times[-1]
    if window > T - times[0] + 1e-12:
        raise AnalysisError(f"window {window:g} exceeds the simulated horizon {T - times[0]:g}")
    return times >= T - window


def _entry_time(times, series, limit):
    ok = series <= limit
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return float(times[0] if bad.size == 0 else times[bad[-1] + 1])


def _report(label, times, series, bound, window, tol) -> BoundReport:
    mask = _window_mask(times, window)
    achieved = float(np.max(series[mask]))
    return BoundReport(label, float(bound), achieved, _entry_time(times, series, bound + tol),
                       float(bound - series[-1]), tol)


# ---------------------------------------------------------------- coordination checks


def check_practical_consensus(traj: Trajectory, delta: float, window: float, tol: float = 1e-6) -> list[BoundReport]:
    """Per-edge trailing-window test ``|z_kj| <= delta/2 + tol``.

    For runs whose agents carry internal state an extra ``"xi"`` report
    tests ``||xi|| <= tol`` over the same window.
    """
    z = np.abs(traj.z)
    p = traj.p
    reports = []
    for k in range(traj.graph.num_edges):
        series = z[:, k * p:(k + 1) * p].max(axis=1)
        reports.append(_report(f"edge {k + 1}", traj.times, series, delta / 2, window, tol))
    if "xi" in traj.layout and traj.layout["xi"].stop > traj.layout["xi"].start:
        xi = np.linalg.norm(traj.block("xi"), axis=1)
        reports.append(_report("xi", traj.times, xi, 0.0, window, tol))
    return reports


def check_velocity_tracking(traj: Trajectory, window: float, tol: float = 1e-6) -> BoundReport:
    """Trailing-window test of ``||x' - 1 kron v|| <= tol``."""
    return _report("velocity", traj.times, traj.diagnostics["velocity_error"], 0.0, window, tol)


def check_diameter_bound(traj: Trajectory, g: OrientedGraph, delta: float, window: float,
                         tol: float = 1e-6) -> list[BoundReport]:
    """Trailing-window test of ``|x_il - x_jl| <= dist(i, j) * delta`` for every pair."""
    dist = g.distances()
    p = traj.p
    x = traj.block("x")
    reports = []
    for i in range(g.num_nodes):
        for j in range(i + 1, g.num_nodes):
            gap = np.abs(x[:, i * p:(i + 1) * p] - x[:, j * p:(j + 1) * p]).max(axis=1)
            reports.append(_report(f"pair {i + 1}-{j + 1}", traj.times, gap, dist[i, j] * delta, window, tol))
    return reports


@dataclass(frozen=True)
class PriorBoundComparison:
    ours: float
    prior: float
    rho: float
    diameter: int

    @property
    def ratio(self) -> float:
        return self.ours / self.prior


def compare_prior_bound(g: OrientedGraph, delta: float) -> PriorBoundComparison:
    """Diameter bound ``d * delta`` next to the eigenvalue-ratio bound ``2 rho delta sqrt(N - 1)``."""
    D = incidence_matrix(g)
    rho = ratio_rho(D)
    d = diameter(g)
    return PriorBoundComparison(d * delta, 2 * rho * delta * math.sqrt(g.num_nodes - 1), rho, d)


# ---------------------------------------------------------------- synchronization constants


@dataclass(frozen=True)
class SyncConstants:
    R: np.ndarray
    norm_R: float
    norm_R_upper: float
    c1: float
    c2: float
    quadrature_horizon: float
    quadrature_residual: float
    block_R: tuple[np.ndarray, ...] = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    rule: str = "simpson"
    intervals: int = 0

    def to_dict(self) -> dict:
        return {"norm_R": self.norm_R, "norm_R_upper": self.norm_R_upper, "c1": self.c1, "c2": self.c2,
                "quadrature_horizon": self.quadrature_horizon, "quadrature_residual": self.quadrature_residual,
                "rule": self.rule, "intervals": self.intervals}


def a_tilde(A, B, C, D) -> np.ndarray:
    """``I_N kron A - (D D^T) kron (B C)``."""
    A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C))
    D = np.asarray(D, dtype=float)
    return kron(np.eye(D.shape[0]), A) - kron(D @ D.T, B @ C)


def _tail_bound(M: np.ndarray, T: float, power: int = 2) -> tuple[float, float]:
    """Upper bound on ``int_T^inf ||exp(M s)||^power ds`` and the block length ``tau`` used.

    Picks ``tau`` with ``rho = ||exp(M tau)|| <= 1/2``; then
    ``||exp(M s)|| <= ||exp(M T)|| rho^j exp(mu tau)`` on the j-th block after
    ``T``, with ``mu`` the positive part of the logarithmic norm.
    """
    alpha = float(np.max(np.linalg.eigvals(M).real))
    tau = 1.0 / abs(alpha)
    rho = np.linalg.norm(expm(M * tau), 2)
    for _ in range(200):
        if rho <= 0.5:
            break
        tau *= 2.0
        rho = np.linalg.norm(expm(M * tau), 2)
    else:
        raise AnalysisError("could not find a contraction interval for the quadrature tail")
    mu = max(0.0, float(np.linalg.eigvalsh((M + M.T) / 2).max()))
    head = np.linalg.norm(expm(M * T), 2) ** power
    return head * tau * math.exp(power * mu * tau) / (1 - rho ** power), tau


def _powers(E: np.ndarray, count: int) -> np.ndarray:
    """Stack ``[I, E, E^2, ..., E^(count-1)]`` built by repeated doubling."""
    out = np.empty((count,) + E.shape)
    out[0] = np.eye(E.shape[0])
    filled, step = 1, E
    while filled < count:
        take = min(filled, count - filled)
        out[filled:filled + take] = out[:take] @ step
        filled += take
        step = step @ step
    return out


def _quadrature(blocks: Sequence[np.ndarray], T: float, n: int, rule: str):
    """Gram integrals on ``[0, T]`` with ``n`` sub-intervals plus the integral of the max squared norm."""
    h = T / n
    weights = np.ones(n + 1)
    if rule == "simpson":
        weights[1:-1:2] = 4.0
        weights[2:-1:2] = 2.0
        weights *= h / 3.0
    else:
        weights[[0, -1]] = 0.5
        weights *= h
    grams = []
    norms = np.zeros((len(blocks), n + 1))
    for b, M in enumerate(blocks):
        Phi = _powers(expm(M * h), n + 1)
        acc = np.einsum("k,kji,kjl->il", weights, Phi, Phi)
        grams.append((acc + acc.T) / 2)
        norms[b] = np.linalg.norm(Phi, 2, axis=(1, 2)) ** 2
    upper = float(weights @ norms.max(axis=0))
    return grams, upper


def compute_sync_constants(A, B, C, D, rule: str = "simpson", tol: float = 1e-10,
                           quad_tol: float | None = None, max_intervals: int = 1 << 20) -> SyncConstants:
    """Matrix ``R``, its norm, the block-norm integral bound and ``c1``/``c2``.

    ``c1`` and ``c2`` are the extreme eigenvalues of ``R`` on the disagreement
    subspace ``range(Pi kron I_n)``.

    Raises
    ------
    AnalysisError
        If some ``A - lambda_i B C`` is not Hurwitz or the quadrature does
        not converge.
    """
    if rule not in ("simpson", "trapezoid"):
        raise ValueError("rule must be 'simpson' or 'trapezoid'")
    A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C))
    D = np.asarray(D, dtype=float)
    spec = laplacian_spectrum(D)
    lams = spec.eigenvalues
    n = A.shape[0]
    # one block per distinct nonzero eigenvalue
    distinct: list[float] = []
    which = []
    for lam in lams[1:]:
        for idx, mu in enumerate(distinct):
            if abs(lam - mu) <= 1e-9 * max(1.0, abs(mu)):
                which.append(idx)
                break
        else:
            distinct.append(float(lam))
            which.append(len(distinct) - 1)
    blocks = [A - lam * (B @ C) for lam in distinct]
    for lam, M in zip(distinct, blocks):
        alpha = float(np.max(np.linalg.eigvals(M).real))
        if alpha >= -1e-12:
            raise AnalysisError(f"A - lambda B C is not Hurwitz for lambda = {lam:.6g} (abscissa {alpha:.3e})")
    # horizon: extend by contraction blocks until the analytic tail is below tol
    T = 0.0
    tails = []
    for M in blocks:
        tail, tau = _tail_bound(M, 0.0)
        Ti = 0.0
        while tail > tol:
            Ti += tau
            tail, _ = _tail_bound(M, Ti)
        T = max(T, Ti)
    tails = [_tail_bound(M, T)[0] for M in blocks]
    scale = max(np.linalg.norm(M, 2) for M in blocks)
    intervals = max(64, 2 * math.ceil(T * scale * 2))
    prev = None
    # successive-refinement tolerance; Simpson's true error is about a fifteenth of the change
    step_tol = quad_tol if quad_tol is not None else (1e-9 if rule == "simpson" else 1e-7)
    while True:
        grams, upper = _quadrature(blocks, T, intervals, rule)
        if prev is not None:
            change = max(np.abs(g - q).max() / max(1.0, np.abs(g).max()) for g, q in zip(grams, prev))
            if change <= step_tol:
                break
        if intervals >= max_intervals:
            raise AnalysisError(f"quadrature for R did not converge with {intervals} intervals")
        prev = grams
        intervals *= 2
    residual = float(max(tails))
    upper += residual
    block_R = tuple(grams[w] for w in which)
    V = spec.eigenvectors
    N = D.shape[0]
    full = np.zeros((N * n, N * n))
    for i, Ri in enumerate(block_R, start=1):
        vi = V[:, i:i + 1]
        full += kron(vi @ vi.T, Ri)
    full = (full + full.T) / 2
    eig = [np.linalg.eigvalsh(Ri) for Ri in grams]
    c1 = float(min(e.min() for e in eig))
    c2 = float(max(e.max() for e in eig))
    return SyncConstants(R=full, norm_R=c2, norm_R_upper=float(upper), c1=c1, c2=c2,
                         quadrature_horizon=float(T), quadrature_residual=residual, block_R=block_R,
                         eigenvalues=lams, rule=rule, intervals=intervals)


def disagreement_projector(N: int, n: int) -> np.ndarray:
    return kron(np.eye(N) - np.ones((N, N)) / N, np.eye(n))


def lyapunov_identity_residual(consts: SyncConstants, A, B, C, D) -> float:
    """Norm of ``A~^T R + R A~ + Pi~^T Pi~`` restricted to the disagreement subspace."""
    At = a_tilde(A, B, C, D)
    N = np.asarray(D).shape[0]
    n = np.atleast_2d(A).shape[0]
    Pt = disagreement_projector(N, n)
    res = At.T @ consts.R + consts.R @ At + Pt.T @ Pt
    return float(np.linalg.norm(Pt @ res @ Pt, 2))


def sync_bound(consts: SyncConstants, B, D, p: int, M: int, delta: float) -> float:
    """Radius ``2 sqrt(c2/c1) ||R|| ||B|| ||D kron I_p|| delta`` of the practical synchronization ball.

    ``p`` and ``M`` only enter the left-hand metric; they are accepted here
    so that both sides are built from the same arguments.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    nB = np.linalg.norm(np.atleast_2d(B), 2)
    nD = np.linalg.norm(np.asarray(D, dtype=float), 2)
    return float(2 * math.sqrt(consts.c2 / consts.c1) * consts.norm_R * nB * nD * delta)


def disagreement_metric(xi: np.ndarray, N: int, n: int, p: int, M: int) -> np.ndarray:
    """``||xi - 1 kron mean(xi)|| / sqrt(p M)`` for each row of ``xi``."""
    xi = np.atleast_2d(xi)
    blocks = xi.reshape(xi.shape[0], N, n)
    dev = blocks - blocks.mean(axis=1, keepdims=True)
    return np.linalg.norm(dev.reshape(xi.shape[0], -1), axis=1) / math.sqrt(p * M)


def check_sync_radius(traj: Trajectory, consts: SyncConstants, B, D, p: int, M: int, delta: float,
                      window: float, tol: float = 1e-6) -> BoundReport:
    N = np.asarray(D).shape[0]
    xi = traj.block("xi")
    n = xi.shape[1] // N
    if consts.R.shape != (N * n, N * n):
        raise AnalysisError("constants were computed for a different system or graph")
    metric = disagreement_metric(xi, N, n, p, M)
    return _report("sync radius", traj.times, metric, sync_bound(consts, B, D, p, M, delta), window, tol)


def check_average_invariance(traj: Trajectory, A) -> float:
    """Largest ``||sum_i xi_i(t) - exp(A t) sum_i xi_i(0)|| / (1 + ||xi(0)||)`` over snapshots."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    xi = traj.block("xi")
    N = xi.shape[1] // n
    sums = xi.reshape(len(traj.times), N, n).sum(axis=1)
    scale = 1.0 + np.linalg.norm(xi[0])
    worst = 0.0
    for t, s in zip(traj.times, sums):
        worst = max(worst, float(np.linalg.norm(s - expm(A * t) @ sums[0])))
    return worst / scale


# ---------------------------------------------------------------- Lyapunov-type checks


def max_rise(series: np.ndarray) -> float:
    """``max_t [s(t) - min_{u <= t} s(u)]``: zero iff the series never increases."""
    series = np.asarray(series, dtype=float)
    return float(np.max(series - np.minimum.accumulate(series)))


def check_lyapunov_monotone(traj: Trajectory, rel_tol: float = MONOTONE_TOL) -> BoundReport:
    V = traj.diagnostics.get("V")
    if V is None:
        raise AnalysisError("trajectory carries no Lyapunov function samples")
    tol = rel_tol * (1.0 + abs(float(V[0])))
    rise = max_rise(V)
    return BoundReport("lyapunov", tol, rise, float(traj.times[0]) if rise <= tol else None, tol - rise)


def check_feedforward_passivity(traj: Trajectory, quantizer: UniformQuantizer | None,
                                rel_tol: float = MONOTONE_TOL) -> BoundReport:
    """``P(z(t2)) - P(z(t1)) <= int_{t1}^{t2} -u^T x' dt`` for every pair of snapshots.

    Controls are constant between snapshots, so the integral over each
    sampling interval equals ``-u_n^T (x_{n+1} - x_n)`` exactly.
    """
    x = traj.block("x")
    if quantizer is None:
        P = 0.5 * np.sum(traj.z ** 2, axis=1)
        work = -np.concatenate([[0.0], np.cumsum(
            0.5 * np.einsum("ti,ti->t", traj.controls[:-1] + traj.controls[1:], np.diff(x, axis=0)))])
    else:
        P = np.sum(quantizer.potential_components(traj.z), axis=1)
        work = -np.concatenate([[0.0], np.cumsum(np.einsum("ti,ti->t", traj.controls[:-1], np.diff(x, axis=0)))])
    surplus = (P - P[0]) - work
    tol = rel_tol * (1.0 + abs(float(traj.diagnostics["V"][0])))
    rise = max_rise(surplus)
    return BoundReport("feedforward passivity", tol, rise, None if rise > tol else float(traj.times[0]), tol - rise)


# ---------------------------------------------------------------- SPR


@dataclass(frozen=True)
class SPRResult:
    passed: bool
    worst_frequency: float
    min_eigenvalue: float
    frequencies: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    skipped: tuple[float, ...] = ()
    margin: float = SPR_MARGIN


def default_frequency_grid(mats: Sequence[np.ndarray], points: int = 2000) -> np.ndarray:
    """Log-spaced grid on ``[1e-3, 1e3]`` refined within 5% of every oscillatory mode of ``mats``."""
    grid = [np.logspace(-3, 3, points)]
    for M in mats:
        for ev in np.linalg.eigvals(np.atleast_2d(M)):
            w = abs(ev.imag)
            if w > 0:
                grid.append(w * (1.0 + np.linspace(-0.05, 0.05, 201)))
    return np.unique(np.concatenate(grid))


def spr_check(A, B, C, lambda2: float, lambdaN: float, grid=None, margin: float = SPR_MARGIN) -> SPRResult:
    """Frequency-grid test that ``[I + lambdaN G][I + lambda2 G]^{-1}`` is strictly positive real.

    Uses the identity ``[I + lambdaN G][I + lambda2 G]^{-1} = I + (lambdaN - lambda2)
    C (sI - A + lambda2 B C)^{-1} B``, which is regular at the poles of ``G``.
    """
    A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C))
    p = B.shape[1]
    Acl = A - lambda2 * (B @ C)
    if grid is None:
        grid = default_frequency_grid([A, Acl])
    grid = np.asarray(grid, dtype=float)
    n = A.shape[0]
    values = np.full(grid.shape, np.nan)
    skipped = []
    for idx, nu in enumerate(grid):
        K = 1j * nu * np.eye(n) - Acl
        if np.linalg.cond(K) > 1e12:
            log.warning("I + lambda2 G(i nu) is singular at nu = %.6g; skipping", nu)
            skipped.append(float(nu))
            continue
        H = np.eye(p) + (lambdaN - lambda2) * (C @ np.linalg.solve(K, B))
        values[idx] = float(np.linalg.eigvalsh((H + H.conj().T) / 2).min())
    if np.all(np.isnan(values)):
        raise AnalysisError("every grid point was singular")
    k = int(np.nanargmin(values))
    return SPRResult(bool(values[k] >= margin), float(grid[k]), float(values[k]), grid, values, tuple(skipped), margin)


def lowpass_spr_polynomial(omega: float, a: float, lambda2: float, lambdaN: float, nu) -> np.ndarray:
    """``(a w^2 - a nu^2)^2 + ((w^2 + lambdaN a) nu - nu^3)((w^2 + lambda2 a) nu - nu^3)``.

    For ``G(s) = a s / ((s^2 + w^2)(s + a))`` this equals
    ``Re H(i nu) * |(i nu)^2 + w^2)(i nu + a) + lambda2 a i nu|^2``.
    """
    nu = np.asarray(nu, dtype=float)
    return ((a * omega ** 2 - a * nu ** 2) ** 2
            + ((omega ** 2 + lambdaN * a) * nu - nu ** 3) * ((omega ** 2 + lambda2 * a) * nu - nu ** 3))


def lowpass_spr_real_part(omega: float, a: float, lambda2: float, lambdaN: float, nu) -> np.ndarray:
    """``Re H(i nu)`` recovered from the polynomial and the denominator modulus."""
    nu = np.asarray(nu, dtype=float)
    den = (a * (omega ** 2 - nu ** 2)) ** 2 + ((omega ** 2 + lambda2 * a) * nu - nu ** 3) ** 2
    return lowpass_spr_polynomial(omega, a, lambda2, lambdaN, nu) / den


# ---------------------------------------------------------------- output regulation


@dataclass(frozen=True)
class RegulatorSolution:
    Pi: np.ndarray
    Gamma: np.ndarray
    residual_dynamics: float
    residual_output: float
    relative_dynamics: float
    relative_output: float

    @property
    def residuals(self) -> tuple[float, float]:
        return self.residual_dynamics, self.residual_output


def solve_regulator_equations(F, G, H, S, R_out, tol: float = 1e-8) -> RegulatorSolution:
    """Solve ``F Pi + G Gamma = Pi S`` and ``H Pi = R_out`` by least squares.

    With column-major ``vec``: ``(I kron F - S^T kron I) vec Pi + (I kron G) vec Gamma = 0``
    and ``(I kron H) vec Pi = vec R_out``.

    Raises
    ------
    RegulatorError
        If either relative residual exceeds ``tol`` (no solution exists).
    """
    F, G, H, S, R_out = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (F, G, H, S, R_out))
    n, m = G.shape
    s = S.shape[0]
    q = H.shape[0]
    if F.shape != (n, n) or H.shape[1] != n or S.shape != (s, s) or R_out.shape != (q, s):
        raise RegulatorError(f"inconsistent shapes F{F.shape} G{G.shape} H{H.shape} S{S.shape} R{R_out.shape}")
    Is = np.eye(s)
    top = np.hstack([np.kron(Is, F) - np.kron(S.T, np.eye(n)), np.kron(Is, G)])
    bottom = np.hstack([np.kron(Is, H), np.zeros((q * s, m * s))])
    lhs = np.vstack([top, bottom])
    rhs = np.concatenate([np.zeros(n * s), R_out.reshape(-1, order="F")])
    sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    Pi = sol[:n * s].reshape((n, s), order="F")
    Gamma = sol[n * s:].reshape((m, s), order="F")
    r1 = float(np.linalg.norm(F @ Pi + G @ Gamma - Pi @ S))
    r2 = float(np.linalg.norm(H @ Pi - R_out))
    scale1 = 1.0 + np.linalg.norm(F) * np.linalg.norm(Pi) + np.linalg.norm(G) * np.linalg.norm(Gamma) \
        + np.linalg.norm(Pi) * np.linalg.norm(S)
    scale2 = 1.0 + np.linalg.norm(R_out)
    sol = RegulatorSolution(Pi, Gamma, r1, r2, r1 / scale1, r2 / scale2)
    if sol.relative_dynamics > tol or sol.relative_output > tol:
        raise RegulatorError(f"regulator equations have no solution (relative residuals "
                             f"{sol.relative_dynamics:.3e}, {sol.relative_output:.3e})")
    return sol


def _l1_gain(M, Hm, Bm, tol: float = 1e-10, max_intervals: int = 1 << 18) -> float:
    """``int_0^inf ||Hm exp(M t) Bm|| dt``: composite Simpson, refined by doubling, plus an analytic tail bound."""
    scale = np.linalg.norm(Hm, 2) * np.linalg.norm(Bm, 2)
    T, (tail, tau) = 0.0, _tail_bound(M, 0.0, power=1)
    while scale * tail > tol:
        T += tau
        tail, _ = _tail_bound(M, T, power=1)
    n = max(256, 2 * math.ceil(4 * T * np.linalg.norm(M, 2)))
    prev = None
    while True:
        h = T / n
        vals = np.linalg.norm(Hm @ _powers(expm(M * h), n + 1) @ Bm, 2, axis=(1, 2))
        w = np.ones(n + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        est = float(h / 3.0 * (w @ vals))
        if prev is not None and abs(est - prev) <= 1e-10 * max(1.0, abs(est)):
            break
        if n >= max_intervals:
            raise AnalysisError(f"L1 gain quadrature did not converge with {n} intervals")
        prev, n = est, 2 * n
    return est + scale * tail


def regulation_gain(plants, exo_B, graph: OrientedGraph) -> float:
    """Gain factor ``kappa_reg = 4 g deg_max / d`` of the regulated outputs.

    ``g = max_i int ||H_i exp((F_i + G_i K_i) t) Pi_i B|| dt`` bounds the
    output deviation produced by a unit exosystem coupling input. With
    ``|w_i| <= deg_i delta`` and ``|y_i - y_j| <= d delta / 2`` for the
    exosystem outputs this gives ``|y_i - y_j| <= d (delta/2) (1 + kappa_reg)``.
    """
    gain = 0.0
    for pl in plants:
        F, G, H, K, Pi = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (pl.F, pl.G, pl.H, pl.K, pl.Pi))
        gain = max(gain, _l1_gain(F + G @ K, H, Pi @ np.atleast_2d(exo_B)))
    d = diameter(graph)
    return float(4.0 * gain * graph.degrees().max() / d)


def check_output_disagreement(traj: Trajectory, delta: float, kappa: float, window: float,
                              tol: float = 1e-6) -> BoundReport:
    d = diameter(traj.graph)
    return _report("output disagreement", traj.times, traj.diagnostics["output_disagreement"],
                   d * (delta / 2) * (1 + kappa), window, tol)


# ---------------------------------------------------------------- sweeps


def final_disagreement(traj: Trajectory, block: str | None = None) -> float:
    """Largest pairwise component spread of agent positions (or ``xi`` blocks) at the last sample."""
    if block is None:
        block = "x" if "x" in traj.layout else "xi"
    row = traj.block(block)[-1]
    N = traj.graph.num_nodes
    per = row.reshape(N, -1)
    return float((per.max(axis=0) - per.min(axis=0)).max())
