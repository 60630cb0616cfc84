"""Oriented communication graphs, incidence matrices and spectral quantities.

Nodes are indexed from 0 inside the package. Scenario files use 1-based
indices; conversion happens in :mod:`quantpassive.scenario`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import GraphError

# Zero-eigenvalue / connectivity threshold for the Laplacian.
SPECTRAL_TOL = 1e-10


@dataclass(frozen=True)
class OrientedGraph:
    """Undirected graph whose edges carry an arbitrary orientation.

    ``edges[k] = (i, j)`` means node ``i`` is the positive end and node ``j``
    the negative end of edge ``k``, so that ``z_k = x_i - x_j``.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if int(self.num_nodes) != self.num_nodes or self.num_nodes < 1:
            raise GraphError(f"num_nodes must be a positive integer, got {self.num_nodes!r}")
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        seen = set()
        for k, (i, j) in enumerate(edges):
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise GraphError(f"edge {k} = ({i}, {j}) references a node outside 0..{self.num_nodes - 1}")
            if i == j:
                raise GraphError(f"edge {k} = ({i}, {j}) is a self-loop")
            key = frozenset((i, j))
            if key in seen:
                raise GraphError(f"edge {k} = ({i}, {j}) duplicates an earlier edge")
            seen.add(key)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_pairs(cls, num_nodes: int, pairs: Iterable[Sequence[int]], orient: bool = False) -> "OrientedGraph":
        """Build a graph; with ``orient=True`` the lower index becomes the positive end."""
        edges = []
        for i, j in pairs:
            if orient and i > j:
                i, j = j, i
            edges.append((i, j))
        return cls(num_nodes, tuple(edges))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self.neighbors()], dtype=int)

    def is_connected(self) -> bool:
        return bool(np.all(self.distances() >= 0))

    def require_connected(self) -> None:
        if not self.is_connected():
            raise GraphError("graph is not connected")

    def distances(self) -> np.ndarray:
        """All-pairs unweighted shortest-path lengths; -1 marks unreachable pairs."""
        adj = self.neighbors()
        n = self.num_nodes
        dist = np.full((n, n), -1, dtype=int)
        for src in range(n):
            dist[src, src] = 0
            queue = deque([src])
            while queue:
                a = queue.popleft()
                for b in adj[a]:
                    if dist[src, b] < 0:
                        dist[src, b] = dist[src, a] + 1
                        queue.append(b)
        return dist

    def flipped(self, k: int) -> "OrientedGraph":
        """Copy of the graph with the orientation of edge ``k`` reversed."""
        edges = list(self.edges)
        i, j = edges[k]
        edges[k] = (j, i)
        return OrientedGraph(self.num_nodes, tuple(edges))


@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def lambdaN(self) -> float:
        return float(self.eigenvalues[-1])


def incidence_matrix(g: OrientedGraph) -> np.ndarray:
    """N x M integer incidence matrix with +1 at the positive end of each edge."""
    D = np.zeros((g.num_nodes, g.num_edges), dtype=int)
    for k, (i, j) in enumerate(g.edges):
        D[i, k] = 1
        D[j, k] = -1
    return D


def laplacian_spectrum(D: np.ndarray, tol: float = SPECTRAL_TOL) -> LaplacianSpectrum:
    """Sorted eigen-decomposition of ``L = D D^T``.

    The eigenvectors form an orthonormal basis whose first column is
    proportional to the all-ones vector.

    Raises
    ------
    GraphError
        If fewer than two nodes are present or ``lambda2 <= tol``.
    """
    D = np.asarray(D, dtype=float)
    if D.shape[0] < 2:
        raise GraphError("algebraic connectivity needs at least two nodes")
    L = D @ D.T
    w, V = np.linalg.eigh(L)
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    if w[1] <= tol:
        raise GraphError(f"graph is not connected (lambda2 = {w[1]:.3e})")
    # pin the agreement direction exactly
    N = D.shape[0]
    V[:, 0] = 1.0 / np.sqrt(N)
    w[0] = 0.0
    return LaplacianSpectrum(eigenvalues=w, eigenvectors=V)


def diameter(g: OrientedGraph) -> int:
    dist = g.distances()
    if np.any(dist < 0):
        raise GraphError("diameter is undefined for a disconnected graph")
    return int(dist.max())


def kron(A, B) -> np.ndarray:
    """Kronecker product ``[a_ij B]``."""
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def ratio_rho(D: np.ndarray, tol: float = SPECTRAL_TOL) -> float:
    """||D^T D|| divided by the smallest nonzero eigenvalue of D^T D."""
    D = np.asarray(D, dtype=float)
    if D.shape[1] == 0:
        raise GraphError("ratio_rho needs at least one edge")
    laplacian_spectrum(D, tol)  # connectivity check
    w = np.linalg.eigvalsh(D.T @ D)
    nonzero = w[w > tol]
    return float(w.max() / nonzero.min())


# ---------------------------------------------------------------- generators


def path_graph(n: int) -> OrientedGraph:
    return OrientedGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> OrientedGraph:
    if n < 3:
        raise GraphError("a cycle needs at least 3 nodes")
    return OrientedGraph(n, tuple((i, (i + 1) % n) for i in range(n)))


def complete_graph(n: int) -> OrientedGraph:
    return OrientedGraph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def star_graph(leaves: int) -> OrientedGraph:
    return OrientedGraph(leaves + 1, tuple((0, j) for j in range(1, leaves + 1)))


def random_connected_graph(n: int, edge_prob: float, rng: np.random.Generator) -> OrientedGraph:
    """Random spanning tree plus independent extra edges, randomly oriented."""
    order = rng.permutation(n)
    pairs = set()
    for idx in range(1, n):
        a = int(order[idx])
        b = int(order[rng.integers(0, idx)])
        pairs.add(frozenset((a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                pairs.add(frozenset((i, j)))
    edges = []
    for pair in sorted(tuple(sorted(p)) for p in pairs):
        i, j = pair
        edges.append((i, j) if rng.random() < 0.5 else (j, i))
    return OrientedGraph(n, tuple(edges))
