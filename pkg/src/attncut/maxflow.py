"""Max-flow / min-cut on a source/sink-augmented grid graph.

Augmenting paths are found in breadth-first (shortest-path) order: a BFS
builds the level graph and a blocking flow saturates every shortest
augmenting path before the next BFS. On real-valued capacities this
terminates because the source-sink distance strictly increases per phase.
"""

from __future__ import annotations

from collections import deque

import numpy as np


class FlowNetwork:
    """Residual graph with paired forward/reverse edges (edge i ^ 1 is the
    reverse of edge i). Capacities are nonnegative floats."""

    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[float] = []

    def add_edge(self, u: int, v: int, cap_uv: float, cap_vu: float = 0.0) -> None:
        if u == v:
            raise ValueError("self-loops are not allowed")
        if cap_uv < 0 or cap_vu < 0:
            raise ValueError("capacities must be nonnegative")
        if not (np.isfinite(cap_uv) and np.isfinite(cap_vu)):
            raise ValueError("capacities must be finite")
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap_uv))
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(float(cap_vu))

    def _bfs_levels(self, s: int, t: int) -> list[int] | None:
        level = [-1] * self.n
        level[s] = 0
        queue = deque([s])
        to, cap, adj = self.to, self.cap, self.adj
        while queue:
            u = queue.popleft()
            for e in adj[u]:
                v = to[e]
                if cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[t] >= 0 else None

    def _blocking_flow(self, s: int, t: int, level: list[int]) -> float:
        to, cap, adj = self.to, self.cap, self.adj
        it = [0] * self.n
        total = 0.0
        # iterative DFS over admissible (level-increasing, positive-capacity) arcs
        path: list[int] = []
        u = s
        while True:
            if u == t:
                bottleneck = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= bottleneck
                    cap[e ^ 1] += bottleneck
                total += bottleneck
                # retreat to the first saturated edge on the path
                for i, e in enumerate(path):
                    if cap[e] <= 0:
                        del path[i:]
                        break
                u = to[path[-1]] if path else s
                continue
            advanced = False
            while it[u] < len(adj[u]):
                e = adj[u][it[u]]
                v = to[e]
                if cap[e] > 0 and level[v] == level[u] + 1:
                    path.append(e)
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if advanced:
                continue
            if u == s:
                break
            # dead end: block this node and retreat
            level[u] = -1
            e = path.pop()
            u = to[e ^ 1]
        return total

    def max_flow(self, s: int, t: int) -> float:
        total = 0.0
        while True:
            level = self._bfs_levels(s, t)
            if level is None:
                return total
            total += self._blocking_flow(s, t, level)

    def min_cut_source_side(self, s: int) -> np.ndarray:
        """Nodes reachable from the source in the residual graph (after
        max_flow); this is the source side of a minimum cut."""
        seen = np.zeros(self.n, dtype=bool)
        seen[s] = True
        queue = deque([s])
        to, cap, adj = self.to, self.cap, self.adj
        while queue:
            u = queue.popleft()
            for e in adj[u]:
                v = to[e]
                if cap[e] > 0 and not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return seen
