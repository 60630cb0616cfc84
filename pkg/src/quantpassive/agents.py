"""Passive agent dynamics and passivity certificate checks.

Every agent is described by ``xi' = f(xi) + g(xi) u`` with output
``y = h(xi)`` (plus ``u`` itself for feed-through agents such as single
integrators), a storage function ``S`` and a dissipation rate ``W`` such that
``grad S . (f + g u) <= -W + y^T u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import CertificateError, DimensionError

PASSIVITY_TOL = 1e-9


@dataclass(frozen=True)
class PassiveAgent:
    """Callable description of one (strictly) passive agent.

    ``linear`` optionally carries ``(A, B, C)`` so that simulators can
    assemble block matrices instead of calling the component maps.
    """

    state_dim: int
    io_dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    input_map: Callable[[np.ndarray], np.ndarray]
    output_map: Callable[[np.ndarray], np.ndarray]
    storage: Callable[[np.ndarray], float]
    storage_gradient: Callable[[np.ndarray], np.ndarray]
    dissipation: Callable[[np.ndarray], float]
    name: str = "agent"
    feedthrough: bool = False
    strict: bool = True
    linear: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.state_dim == 0:
            if not self.feedthrough:
                raise DimensionError("a stateless agent must be feed-through")
            return
        zero = np.zeros(self.state_dim)
        if np.linalg.norm(self.drift(zero)) > PASSIVITY_TOL:
            raise CertificateError(f"{self.name}: f(0) != 0")
        if np.linalg.norm(self.output_map(zero)) > PASSIVITY_TOL:
            raise CertificateError(f"{self.name}: h(0) != 0")
        g0 = np.atleast_2d(self.input_map(zero))
        if g0.shape != (self.state_dim, self.io_dim):
            raise DimensionError(f"{self.name}: g(0) has shape {g0.shape}, expected {(self.state_dim, self.io_dim)}")
        if np.linalg.svd(g0, compute_uv=False).min() <= PASSIVITY_TOL:
            raise CertificateError(f"{self.name}: g(0) is not full column rank")
        if abs(self.storage(zero)) > PASSIVITY_TOL or abs(self.dissipation(zero)) > PASSIVITY_TOL:
            raise CertificateError(f"{self.name}: storage and dissipation must vanish at 0")

    def output(self, xi: np.ndarray, u: np.ndarray) -> np.ndarray:
        y = self.output_map(xi) if self.state_dim else np.zeros(self.io_dim)
        return y + u if self.feedthrough else y


@dataclass(frozen=True)
class PassivityCertificate:
    lyapunov_max_eig: float
    output_residual: float
    pd_margin: float
    tol: float = PASSIVITY_TOL

    @property
    def passed(self) -> bool:
        return (self.lyapunov_max_eig <= self.tol and self.output_residual <= self.tol
                and self.pd_margin > 0.0)


def verify_passivity_certificate(A, B, C, P, tol: float = PASSIVITY_TOL) -> PassivityCertificate:
    """Check ``A^T P + P A <= 0``, ``B^T P = C`` and ``P > 0``."""
    A, B, C, P = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C, P))
    n = A.shape[0]
    if A.shape != (n, n) or P.shape != (n, n) or B.shape[0] != n or C.shape != (B.shape[1], n):
        raise DimensionError(f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape} P{P.shape}")
    if np.abs(P - P.T).max() > tol:
        raise CertificateError("P must be symmetric")
    lyap = A.T @ P + P @ A
    return PassivityCertificate(
        lyapunov_max_eig=float(np.linalg.eigvalsh((lyap + lyap.T) / 2).max()),
        output_residual=float(np.linalg.norm(B.T @ P - C)),
        pd_margin=float(np.linalg.eigvalsh(P).min()),
        tol=tol,
    )


def _unit_ball(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    if dim == 0:
        return np.zeros((count, 0))
    v = rng.standard_normal((count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / dim)
    return v * r[:, None]


def sample_passivity_inequality(agent: PassiveAgent, samples: int = 10_000, radius: float = 1.0,
                                seed: int = 0) -> float:
    """Worst value of ``grad S . (f + g u) + W - y^T u`` over random ``(xi, u)`` in a ball.

    A non-positive result (up to roundoff) means no violation was found.
    """
    rng = np.random.default_rng(seed)
    xis = _unit_ball(rng, samples, agent.state_dim, radius)
    us = _unit_ball(rng, samples, agent.io_dim, radius)
    worst = -np.inf
    for xi, u in zip(xis, us):
        if agent.state_dim:
            rate = agent.storage_gradient(xi) @ (agent.drift(xi) + np.atleast_2d(agent.input_map(xi)) @ u)
            w = agent.dissipation(xi)
        else:
            rate, w = 0.0, 0.0
        worst = max(worst, float(rate + w - agent.output(xi, u) @ u))
    return worst


def min_dissipation_on_shell(agent: PassiveAgent, radius: float, samples: int = 1000, seed: int = 0) -> float:
    """Smallest ``W`` over random points with ``|xi| = radius``; positive for strict agents."""
    if agent.state_dim == 0:
        return np.inf
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((samples, agent.state_dim))
    v *= radius / np.linalg.norm(v, axis=1, keepdims=True)
    return float(min(agent.dissipation(x) for x in v))


# ------------------------------------------------------------------ catalogue


def _spd(K, name: str) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != K.shape[1] or np.abs(K - K.T).max() > 1e-12:
        raise CertificateError(f"{name} must be a symmetric square matrix")
    if np.linalg.eigvalsh(K).min() <= 0:
        raise CertificateError(f"{name} must be positive definite")
    return K


def make_single_integrator(p: int) -> PassiveAgent:
    """``x' = u + v``: stateless, the velocity error equals the control input."""
    empty = np.zeros(0)
    return PassiveAgent(
        state_dim=0, io_dim=p,
        drift=lambda xi: empty, input_map=lambda xi: np.zeros((0, p)),
        output_map=lambda xi: np.zeros(p), storage=lambda xi: 0.0,
        storage_gradient=lambda xi: empty, dissipation=lambda xi: 0.0,
        name="single_integrator", feedthrough=True,
    )


def make_double_integrator(K, p: int | None = None) -> PassiveAgent:
    """Velocity-error system of ``x'' = -K (x' - v) + v' + u``.

    With ``xi = x' - v`` this reads ``xi' = -K xi + u``, ``y = xi``, storage
    ``xi^T xi / 2`` and dissipation ``xi^T K xi``.
    """
    K = _spd(K if p is None or np.ndim(K) else np.eye(p) * K, "K")
    p = K.shape[0]
    ident = np.eye(p)
    return PassiveAgent(
        state_dim=p, io_dim=p,
        drift=lambda xi: -K @ xi, input_map=lambda xi: ident, output_map=lambda xi: xi,
        storage=lambda xi: 0.5 * float(xi @ xi), storage_gradient=lambda xi: xi,
        dissipation=lambda xi: float(xi @ K @ xi),
        name="double_integrator", linear=(-K, ident, ident),
    )


@dataclass(frozen=True)
class LinearPassiveAgent:
    """``xi' = A xi + B u``, ``w = C xi`` with certificate ``P``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    P: np.ndarray | None = None

    def __post_init__(self):
        for name in ("A", "B", "C"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape != (self.B.shape[1], n):
            raise DimensionError(f"inconsistent shapes A{self.A.shape} B{self.B.shape} C{self.C.shape}")
        if self.P is not None:
            object.__setattr__(self, "P", np.atleast_2d(np.asarray(self.P, dtype=float)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    def certificate(self) -> PassivityCertificate:
        if self.P is None:
            raise CertificateError("no passivity certificate P supplied")
        return verify_passivity_certificate(self.A, self.B, self.C, self.P)

    def require_certificate(self) -> None:
        cert = self.certificate()
        if not cert.passed:
            raise CertificateError(
                f"passivity certificate failed: max eig(A^T P + P A) = {cert.lyapunov_max_eig:.3e}, "
                f"||B^T P - C|| = {cert.output_residual:.3e}, min eig(P) = {cert.pd_margin:.3e}")

    def as_passive_agent(self) -> PassiveAgent:
        """Wrap as a :class:`PassiveAgent` with ``S = xi^T P xi / 2``."""
        self.require_certificate()
        A, B, C, P = self.A, self.B, self.C, self.P
        Q = -(A.T @ P + P @ A) / 2
        return PassiveAgent(
            state_dim=self.n, io_dim=self.p,
            drift=lambda xi: A @ xi, input_map=lambda xi: B, output_map=lambda xi: C @ xi,
            storage=lambda xi: 0.5 * float(xi @ P @ xi), storage_gradient=lambda xi: P @ xi,
            dissipation=lambda xi: float(xi @ Q @ xi),
            name="linear_passive", strict=bool(np.linalg.eigvalsh(Q).min() > PASSIVITY_TOL),
            linear=(A, B, C),
        )


@dataclass(frozen=True)
class ExosystemSpec:
    """Reference generator ``xi' = S xi + B u``, ``w = C xi``.

    ``mode`` is ``"passive"`` (certificate ``P`` required) or ``"spr"``.
    """

    S: np.ndarray
    B: np.ndarray
    C: np.ndarray
    mode: str = "passive"
    P: np.ndarray | None = None

    def system(self) -> LinearPassiveAgent:
        return LinearPassiveAgent(self.S, self.B, self.C, self.P)

    def validate(self, lambda2: float | None = None, lambdaN: float | None = None) -> None:
        if self.mode == "passive":
            self.system().require_certificate()
        elif self.mode == "spr":
            from .analysis import spr_check

            if lambda2 is None or lambdaN is None:
                raise CertificateError("SPR mode needs the Laplacian eigenvalues lambda2 and lambdaN")
            res = spr_check(self.S, self.B, self.C, lambda2, lambdaN)
            if not res.passed:
                raise CertificateError(f"SPR check failed at frequency {res.worst_frequency:.4g}")
        else:
            raise CertificateError(f"unknown exosystem mode {self.mode!r}")


def oscillator(omega: float) -> ExosystemSpec:
    A = np.array([[0.0, omega], [-omega, 0.0]])
    return ExosystemSpec(A, np.array([[0.0], [1.0]]), np.array([[0.0, 1.0]]), "passive", np.eye(2))


def lowpass_oscillator(omega: float, a: float) -> ExosystemSpec:
    """Oscillator cascaded with a first-order low-pass filter of cut-off ``a``."""
    S = np.array([[0.0, omega, 0.0], [-omega, 0.0, 0.0], [0.0, a, -a]])
    return ExosystemSpec(S, np.array([[0.0], [1.0], [0.0]]), np.array([[0.0, 0.0, 1.0]]), "spr")


# nonlinear presets ----------------------------------------------------------


def _cubic_damper(p: int, gain: float = 1.0) -> PassiveAgent:
    """``xi' = -gain xi - xi^3 + u``, ``y = xi`` (componentwise cube)."""
    return PassiveAgent(
        state_dim=p, io_dim=p,
        drift=lambda xi: -gain * xi - xi ** 3, input_map=lambda xi: np.eye(p),
        output_map=lambda xi: xi, storage=lambda xi: 0.5 * float(xi @ xi),
        storage_gradient=lambda xi: xi,
        dissipation=lambda xi: float(gain * xi @ xi + np.sum(xi ** 4)),
        name="cubic_damper",
    )


def _saturated_damper(p: int, gain: float = 1.0) -> PassiveAgent:
    """``xi' = -xi - gain tanh(xi) + u``, ``y = xi``."""
    return PassiveAgent(
        state_dim=p, io_dim=p,
        drift=lambda xi: -xi - gain * np.tanh(xi), input_map=lambda xi: np.eye(p),
        output_map=lambda xi: xi, storage=lambda xi: 0.5 * float(xi @ xi),
        storage_gradient=lambda xi: xi,
        dissipation=lambda xi: float(xi @ xi + gain * xi @ np.tanh(xi)),
        name="saturated_damper",
    )


NONLINEAR_PRESETS: dict[str, Callable[..., PassiveAgent]] = {
    "cubic_damper": _cubic_damper,
    "saturated_damper": _saturated_damper,
}


def make_nonlinear_preset(name: str, p: int, **params) -> PassiveAgent:
    try:
        factory = NONLINEAR_PRESETS[name]
    except KeyError:
        raise CertificateError(f"unknown nonlinear preset {name!r}; known: {sorted(NONLINEAR_PRESETS)}") from None
    return factory(p, **params)
