"""Exact transportation distance on finite alphabets.

rho_bar(p, q, rho) is the minimum of E[rho(X,Y)] over all couplings of p
and q. It is computed exactly by the transportation-simplex method on the
coupling polytope; no external LP solver. By LP duality the same quantity,
viewed as a function of p for fixed q, is a maximum of finitely many
linear functions; dual_vertices enumerates those pieces from the
spanning-tree bases of the transportation structure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import DistortionMatrix, Pmf
from .errors import BudgetExceeded, DimensionMismatch, InvalidDistribution

MAX_PIVOTS = 10_000
TREE_BUDGET = 200_000
REDUCED_COST_TOL = 1e-12
DUAL_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Coupling:
    """A joint table with the given marginals and its expected distortion."""

    joint: np.ndarray
    value: float

    def __init__(self, joint, value: float):
        arr = np.asarray(joint, dtype=np.float64).copy()
        if arr.ndim != 2:
            raise DimensionMismatch(f"coupling must be 2-D, got shape {arr.shape}")
        if np.any(arr < -1e-12):
            raise InvalidDistribution("negative coupling mass")
        np.clip(arr, 0.0, None, out=arr)
        if abs(arr.sum() - 1.0) > 1e-9:
            raise InvalidDistribution(f"coupling mass {arr.sum()!r} != 1")
        arr.flags.writeable = False
        object.__setattr__(self, "joint", arr)
        object.__setattr__(self, "value", float(value))

    def marginal_residual(self, p: Pmf, q: Pmf) -> float:
        r = np.max(np.abs(self.joint.sum(axis=1) - p.probs))
        c = np.max(np.abs(self.joint.sum(axis=0) - q.probs))
        return float(max(r, c))


@dataclass(frozen=True)
class DualVertex:
    """One linear piece of p -> rho_bar(p, q): alpha . p + offset_on_py."""

    alpha: np.ndarray
    beta: np.ndarray
    offset_on_py: float

    def __init__(self, alpha, beta, offset_on_py: float):
        a = np.asarray(alpha, dtype=np.float64).copy()
        b = np.asarray(beta, dtype=np.float64).copy()
        if a.ndim != 1 or b.ndim != 1:
            raise DimensionMismatch("dual potentials must be 1-D")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "offset_on_py", float(offset_on_py))

    def evaluate(self, p) -> float:
        probs = p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=np.float64)
        return float(self.alpha @ probs + self.offset_on_py)


def _northwest_basis(p: np.ndarray, q: np.ndarray):
    """Northwest-corner start: m+n-1 basic cells forming a spanning tree.

    Moves one step (down or right) per cell, so degenerate zero cells are
    kept in the basis and the tree stays connected.
    """
    m, n = p.size, q.size
    x = np.zeros((m, n))
    basis = []
    a = p.copy()
    b = q.copy()
    i = j = 0
    while True:
        t = min(a[i], b[j])
        x[i, j] = t
        basis.append((i, j))
        a[i] -= t
        b[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return x, basis


def _tree_duals(cells, rho: np.ndarray, m: int, n: int):
    """Solve u_i + v_j = rho_ij on the spanning tree, gauge u_0 = 0."""
    u = np.empty(m)
    v = np.empty(n)
    adj = [[] for _ in range(m + n)]
    for (i, j) in cells:
        adj[i].append(m + j)
        adj[m + j].append(i)
    u[0] = 0.0
    seen = [False] * (m + n)
    seen[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < m:
                v[nb - m] = rho[node, nb - m] - u[node]
            else:
                u[nb] = rho[nb, node - m] - v[node - m]
            stack.append(nb)
    return u, v


def _find_cycle(basis, enter, m: int):
    """Unique cycle created by the entering cell, ordered from it.

    Leaf-prune the basis-plus-entering edge set until every remaining node
    has degree two, then walk the cycle starting along the entering edge.
    """
    edges = set(basis)
    edges.add(enter)
    while True:
        deg = {}
        for (i, j) in edges:
            deg[i] = deg.get(i, 0) + 1
            deg[m + j] = deg.get(m + j, 0) + 1
        leaves = [e for e in edges if deg[e[0]] == 1 or deg[m + e[1]] == 1]
        if not leaves:
            break
        edges.difference_update(leaves)

    cycle = [enter]
    node = m + enter[1]
    prev = enter
    while True:
        nxt = None
        for e in edges:
            if e is prev or e == prev:
                continue
            if e[0] == node or m + e[1] == node:
                nxt = e
                break
        cycle.append(nxt)
        node = m + nxt[1] if nxt[0] == node else nxt[0]
        prev = nxt
        if node == enter[0]:
            break
    return cycle


def rho_bar(p: Pmf, q: Pmf, rho: DistortionMatrix):
    """Minimal expected distortion over couplings of p and q.

    Returns (value, witness). Exact transportation simplex with Bland's
    rule (lexicographically first entering cell, first minimal leaving
    cell), so degenerate pivots cannot cycle.
    """
    m, n = rho.shape
    if p.alphabet_size != m:
        raise DimensionMismatch(f"p has {p.alphabet_size} letters, rho has {m} rows")
    if q.alphabet_size != n:
        raise DimensionMismatch(f"q has {q.alphabet_size} letters, rho has {n} cols")
    cost = rho.rho
    x, basis = _northwest_basis(p.probs, q.probs)

    for _ in range(MAX_PIVOTS):
        u, v = _tree_duals(basis, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        in_basis = set(basis)
        enter = None
        for i in range(m):
            for j in range(n):
                if (i, j) not in in_basis and reduced[i, j] < -REDUCED_COST_TOL:
                    enter = (i, j)
                    break
            if enter is not None:
                break
        if enter is None:
            break
        cycle = _find_cycle(basis, enter, m)
        minus = cycle[1::2]
        theta = min(x[c] for c in minus)
        leave = min(c for c in minus if x[c] <= theta)
        for k, c in enumerate(cycle):
            x[c] += theta if k % 2 == 0 else -theta
        x[leave] = 0.0
        basis.remove(leave)
        basis.append(enter)
        basis.sort()
    else:
        raise ArithmeticError("transportation simplex exceeded pivot budget")

    np.clip(x, 0.0, None, out=x)
    value = float((x * cost).sum())
    return value, Coupling(x, value)


def rho_bar_hamming(p: Pmf, q: Pmf) -> float:
    """Transportation distance under Hamming distortion: half L1 distance."""
    if p.alphabet_size != q.alphabet_size:
        raise DimensionMismatch(
            f"size mismatch {p.alphabet_size} vs {q.alphabet_size}"
        )
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def dual_vertices(rho: DistortionMatrix, q: Pmf) -> list[DualVertex]:
    """All vertices of the dual polyhedron, pinned at alpha(0) = 0.

    Every vertex of {alpha(0)=0, alpha_i + beta_j <= rho_ij} has a spanning
    tree of tight cells, so enumerating spanning-tree duals and filtering to
    feasible ones yields the complete list of linear pieces of
    p -> rho_bar(p, q, rho).
    """
    m, n = rho.shape
    if q.alphabet_size != n:
        raise DimensionMismatch(f"q has {q.alphabet_size} letters, rho has {n} cols")
    total = math.comb(m * n, m + n - 1)
    if total > TREE_BUDGET:
        raise BudgetExceeded(
            f"{total} candidate bases for a {m}x{n} matrix exceeds the "
            f"enumeration budget {TREE_BUDGET}"
        )
    cost = rho.rho
    cells_all = [(i, j) for i in range(m) for j in range(n)]
    out: dict[tuple, DualVertex] = {}
    for combo in itertools.combinations(cells_all, m + n - 1):
        parent = list(range(m + n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        acyclic = True
        for (i, j) in combo:
            ra, rb = find(i), find(m + j)
            if ra == rb:
                acyclic = False
                break
            parent[ra] = rb
        if not acyclic:
            continue
        u, v = _tree_duals(combo, cost, m, n)
        if np.any(u[:, None] + v[None, :] > cost + DUAL_FEAS_TOL):
            continue
        key = tuple(np.round(np.concatenate([u, v]), 9))
        if key not in out:
            out[key] = DualVertex(u, v, float(v @ q.probs))
    return [out[k] for k in sorted(out)]
