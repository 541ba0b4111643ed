"""Dense transportation simplex with node potentials (MODI method).

Solves min sum(C[i,j] * x[i,j]) over x >= 0 with fixed row sums (supplies)
and column sums (demands).  Returns the optimal basic flows together with
the dual node potentials, which the transport module turns into a
Kantorovich potential.  Deterministic: ties break on the first flat index.

Transportation instances built from gridded measures are massively
degenerate (uniform demands tie everywhere), which stalls the pivot rule;
supplies are therefore given a graded perturbation of relative size 1e-12
that removes ties.  Returned flows match the original marginals to that
same relative size, far inside the 1e-9 marginal contract.
"""

from __future__ import annotations

from collections import deque

import numpy as np


class SimplexError(RuntimeError):
    pass


PERTURBATION = 1e-12


def _northwest_corner(supply: np.ndarray, demand: np.ndarray):
    """Initial basic feasible solution with exactly m + n - 1 basic arcs."""
    m, n = len(supply), len(demand)
    a = supply.astype(float).copy()
    b = demand.astype(float).copy()
    flows: dict[tuple[int, int], float] = {}
    i = j = 0
    while i < m and j < n:
        f = min(a[i], b[j])
        flows[(i, j)] = f
        a[i] -= f
        b[j] -= f
        if i == m - 1 and j == n - 1:
            break
        if a[i] <= b[j] and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    if len(flows) != m + n - 1:
        raise SimplexError("degenerate northwest start lost basis arcs")
    return flows


def _build_adjacency(flows, m, n):
    adj: list[list[int]] = [[] for _ in range(m + n)]
    for (i, j) in flows:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _potentials(adj, m, n, cost):
    """Dual potentials from the basis tree: u[i] + v[j] = C[i,j] on basic arcs."""
    u = np.empty(m)
    v = np.empty(n)
    u[0] = 0.0
    seen = np.zeros(m + n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            count += 1
            if nb >= m:
                v[nb - m] = cost[node, nb - m] - u[node]
            else:
                u[nb] = cost[nb, node - m] - v[node - m]
            queue.append(nb)
    if count != m + n:
        raise SimplexError("basis is not a spanning tree")
    return u, v


def _tree_path(adj, start, goal, size):
    """Unique path between two nodes of the basis tree."""
    parent = [-1] * size
    seen = [False] * size
    seen[start] = True
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if not seen[nb]:
                seen[nb] = True
                parent[nb] = node
                queue.append(nb)
    else:
        raise SimplexError("basis tree disconnected")
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def solve_transportation(
    cost: np.ndarray, supply: np.ndarray, demand: np.ndarray
) -> tuple[dict[tuple[int, int], float], np.ndarray, np.ndarray, float]:
    """Optimal flows, row/column potentials, and total cost.

    Requires positive supplies/demands with equal totals (caller equalizes).
    Terminates when every reduced cost exceeds -tol with
    tol = 1e-12 * (1 + max |C|); switches from Dantzig to Bland pivoting if
    the objective stalls, so residual degeneracy cannot cycle.
    """
    cost = np.ascontiguousarray(cost, dtype=float)
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    m, n = cost.shape
    if m == 0 or n == 0:
        return {}, np.zeros(m), np.zeros(n), 0.0

    total = float(supply.sum())
    delta = PERTURBATION * total / max(m, 1)
    a = supply + delta * (np.arange(m) + 1.0)
    b = demand.copy()
    b[-1] += float(a.sum() - supply.sum())

    flows = _northwest_corner(a, b)
    adj = _build_adjacency(flows, m, n)
    tol = 1e-12 * (1.0 + float(np.abs(cost).max()))
    max_pivots = 3000 * (m + n) + 1000
    stall_window = 4 * (m + n) + 40
    bland = False
    stall = 0

    for _ in range(max_pivots):
        u, v = _potentials(adj, m, n, cost)
        rc = cost - u[:, None]
        rc -= v[None, :]
        if bland:
            neg = rc.ravel() < -tol
            enter_flat = int(np.argmax(neg))
            if not neg[enter_flat]:
                break
        else:
            enter_flat = int(np.argmin(rc))
            if rc.flat[enter_flat] >= -tol:
                break
        ei, ej = divmod(enter_flat, n)

        path = _tree_path(adj, ei, m + ej, m + n)
        # arcs along the path alternate -theta, +theta, ... starting at -theta
        arcs = []
        for s, e in zip(path[:-1], path[1:]):
            arcs.append((s, e - m) if s < m else (e, s - m))
        minus_arcs = arcs[0::2]
        theta = min(flows[arc] for arc in minus_arcs)
        leave = min(
            (arc for arc in minus_arcs if flows[arc] <= theta),
            key=lambda arc: (flows[arc], arc),
        )
        for idx, arc in enumerate(arcs):
            flows[arc] += -theta if idx % 2 == 0 else theta
        flows[(ei, ej)] = theta
        del flows[leave]
        adj[ei].append(m + ej)
        adj[m + ej].append(ei)
        adj[leave[0]].remove(m + leave[1])
        adj[m + leave[1]].remove(leave[0])

        if theta > tol:
            stall = 0
        else:
            stall += 1
            if stall > stall_window:
                bland = True
    else:
        raise SimplexError("pivot limit exceeded")

    u, v = _potentials(adj, m, n, cost)
    total_cost = float(sum(cost[arc] * f for arc, f in flows.items()))
    return flows, u, v, total_cost
