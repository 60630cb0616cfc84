"""Reference computations that share no code path with the package.

Each oracle takes plain arrays and uses a different numerical route from
the implementation under test (quadrature instead of closed forms, dense
Lyapunov solves instead of block Gram integrals, exact matrix-exponential
propagation instead of RK4).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.linalg import expm, null_space, solve_continuous_lyapunov


def quantize(delta, r):
    return delta * math.floor(r / delta + 0.5)


def potential_by_quadrature(delta: float, r: float) -> float:
    """Integral of q from 0 to r, split at every jump."""
    if r == 0:
        return 0.0
    lo, hi = sorted((0.0, r))
    k0 = math.ceil(lo / delta - 0.5)
    k1 = math.floor(hi / delta - 0.5)
    points = [lo] + [(k + 0.5) * delta for k in range(k0, k1 + 1) if lo < (k + 0.5) * delta < hi] + [hi]
    total = 0.0
    for a, b in zip(points[:-1], points[1:]):
        val, _ = integrate.quad(lambda s: quantize(delta, s), a, b, epsabs=1e-13, epsrel=1e-13)
        total += val
    return total if r > 0 else -total


def incidence(num_nodes, edges):
    D = np.zeros((num_nodes, len(edges)))
    for k, (i, j) in enumerate(edges):
        D[i, k], D[j, k] = 1.0, -1.0
    return D


def graph_distances(num_nodes, edges):
    """Floyd-Warshall hop distances."""
    dist = np.full((num_nodes, num_nodes), np.inf)
    np.fill_diagonal(dist, 0)
    for i, j in edges:
        dist[i, j] = dist[j, i] = 1
    for k in range(num_nodes):
        dist = np.minimum(dist, dist[:, [k]] + dist[[k], :])
    return dist


def disagreement_gram(A, B, C, D):
    """R restricted to the disagreement subspace, via one dense Lyapunov solve.

    Uses an orthonormal basis Q of ``1^perp kron R^n`` from an SVD null
    space (not the Laplacian eigenvectors), solves ``Ar^T X + X Ar = -I``
    and maps back with ``Q X Q^T``.
    """
    A, B, C = (np.atleast_2d(np.asarray(M, float)) for M in (A, B, C))
    D = np.asarray(D, float)
    N, n = D.shape[0], A.shape[0]
    At = np.kron(np.eye(N), A) - np.kron(D @ D.T, B @ C)
    Q = np.kron(null_space(np.ones((1, N))), np.eye(n))
    Ar = Q.T @ At @ Q
    X = solve_continuous_lyapunov(Ar.T, -np.eye(Ar.shape[0]))
    return Q @ X @ Q.T, X


def consensus_closed_form(D, x0, t):
    """Unquantized single-integrator consensus ``x(t) = exp(-L t) x0``."""
    L = D @ D.T
    return expm(-L * t) @ np.asarray(x0, float)


def exact_piecewise_constant(A, B, y0, times, inputs):
    """Propagate ``y' = A y + B u`` exactly with ``u = inputs[k]`` on ``[times[k], times[k+1])``."""
    n, m = B.shape
    out = [np.asarray(y0, float)]
    y = out[0]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    for k in range(len(times) - 1):
        E = expm(aug * (times[k + 1] - times[k]))
        y = E[:n, :n] @ y + E[:n, n:] @ inputs[k]
        out.append(y)
    return np.array(out)


def lowpass_real_part_direct(omega, a, lambda2, lambdaN, nu):
    """``Re [(1 + lambdaN G)/(1 + lambda2 G)]`` with ``G(s) = a s / ((s^2 + w^2)(s + a))``, in complex arithmetic."""
    s = 1j * np.asarray(nu, float)
    base = (s ** 2 + omega ** 2) * (s + a)
    return ((base + lambdaN * a * s) / (base + lambda2 * a * s)).real


def regulator_instance(rng, n, m, s, q):
    """Random feasible regulator problem built backwards from a chosen (Pi, Gamma)."""
    S = rng.standard_normal((s, s))
    S = S - S.T                      # skew: a neutrally stable exosystem
    Pi = rng.standard_normal((n, s))
    Gamma = rng.standard_normal((m, s))
    G = rng.standard_normal((n, m))
    H = rng.standard_normal((q, n))
    F0 = rng.standard_normal((n, n))
    pinv = np.linalg.pinv(Pi)
    F = (Pi @ S - G @ Gamma) @ pinv + F0 @ (np.eye(n) - Pi @ pinv)
    R_out = H @ Pi
    return F, G, H, S, R_out, Pi, Gamma
