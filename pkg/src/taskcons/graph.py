"""Directed interaction graphs with constant per-edge delays.

Convention: ``weights[i, j] > 0`` means agent ``i`` receives from agent
``j``.  Paths for spanning-tree purposes follow listener -> source, so a
root is an agent that every other agent can reach that way.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class DirectedGraph:
    weights: np.ndarray
    delays: np.ndarray = field(default=None)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"weights must be square, got shape {w.shape}")
        T = np.zeros_like(w) if self.delays is None else np.array(self.delays, dtype=float)
        if np.ndim(T) == 0:
            T = np.where(w > 0, float(T), 0.0)
        if T.shape != w.shape:
            raise GraphError(f"delays shape {T.shape} does not match weights {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise GraphError("weights must be finite and nonnegative")
        if np.any(np.diag(w) != 0):
            raise GraphError("self-loops are not allowed (w_ii must be 0)")
        if not np.all(np.isfinite(T)) or np.any(T < 0):
            raise GraphError("delays must be finite and nonnegative")
        w.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "delays", T)

    @property
    def n(self):
        return self.weights.shape[0]

    def edges(self):
        """(receiver, source, weight, delay) for every edge, row-major order."""
        rec, src = np.nonzero(self.weights > 0)
        return [(int(i), int(j), float(self.weights[i, j]), float(self.delays[i, j]))
                for i, j in zip(rec, src)]


def ring(n, weight=0.5, delay=0.0):
    """Directed ring where agent i listens to agent i-1 (mod n)."""
    w = np.zeros((n, n))
    if n > 1:
        for i in range(n):
            w[i, (i - 1) % n] = weight
    return DirectedGraph(w, np.where(w > 0, delay, 0.0))


def laplacian(g):
    L = -np.array(g.weights, dtype=float)
    np.fill_diagonal(L, 0.0)
    # diagonal as negated off-diagonal row sum keeps rows summing to exactly zero
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def reaching_set(g, k):
    """Vertices that have a directed path (listener -> source) to ``k``."""
    seen = {k}
    queue = deque([k])
    listeners = [np.nonzero(g.weights[:, j] > 0)[0] for j in range(g.n)]
    while queue:
        j = queue.popleft()
        for i in listeners[j]:
            if i not in seen:
                seen.add(int(i))
                queue.append(int(i))
    return seen


def roots(g):
    return [k for k in range(g.n) if len(reaching_set(g, k)) == g.n]


def has_spanning_tree(g):
    return g.n >= 1 and bool(roots(g))


def left_eigenvector_gamma(g, tol=1e-10):
    """Normalized nonnegative left null vector of the Laplacian."""
    n = g.n
    if n == 1:
        return np.ones(1)
    L = laplacian(g)
    _, sv, vh = np.linalg.svd(L.T)
    scale = max(1.0, sv[0])
    nullity = int(np.sum(sv <= tol * scale))
    if nullity != 1:
        raise GraphError(
            f"Laplacian zero eigenvalue has multiplicity {nullity} (expected 1); "
            "the graph has no directed spanning tree or is numerically degenerate"
        )
    gamma = vh[-1]
    gamma = gamma / gamma.sum()
    # flush round-off on non-root vertices
    gamma[np.abs(gamma) < 1e-14] = 0.0
    return gamma / gamma.sum()


def delay_scale(g, gamma=None):
    """1 / (1 + sum_k sum_l gamma_k w_kl T_kl)."""
    gamma = left_eigenvector_gamma(g) if gamma is None else gamma
    return 1.0 / (1.0 + float(gamma @ (g.weights * g.delays).sum(axis=1)))


def predicted_consensus_value(g, x_o0):
    """Equilibrium of the delayed observer network when the integral terms vanish."""
    x_o0 = np.asarray(x_o0, dtype=float)
    if x_o0.shape[0] != g.n:
        raise GraphError(f"need {g.n} initial positions, got {x_o0.shape[0]}")
    gamma = left_eigenvector_gamma(g)
    return delay_scale(g, gamma) * (gamma @ x_o0)
