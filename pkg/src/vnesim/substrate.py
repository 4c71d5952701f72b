"""Physical network model: capacitated nodes and links, resource accounting,
and bandwidth-constrained shortest-path routing.

All resource quantities are non-negative integers so that conservation checks
are exact. Availability is owned by the network, not the node records: node
records describe hardware (which never changes), the network tracks what is
currently free.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import AccountingError, AllocationError, VnesimError


class NodeKind(Enum):
    """Hardware profile of a physical node, used by placement rewards."""

    CPU_RICH = "CpuRich"
    GPU_RICH = "GpuRich"
    MEM_RICH = "MemRich"


KIND_ORDER = (NodeKind.CPU_RICH, NodeKind.GPU_RICH, NodeKind.MEM_RICH)
KIND_CODE = {kind: i for i, kind in enumerate(KIND_ORDER)}


@dataclass(frozen=True)
class SubstrateNode:
    """Static description of a physical node."""

    id: int
    cpu_capacity: int
    mem_capacity: int
    clock_avail: int
    kind: NodeKind

    def __post_init__(self):
        if self.cpu_capacity < 0 or self.mem_capacity < 0 or self.clock_avail < 0:
            raise VnesimError(f"node {self.id}: negative capacity")


@dataclass(frozen=True)
class SubstrateLink:
    """Undirected physical link; endpoints are node indices with a < b."""

    a: int
    b: int
    bw_capacity: int

    def __post_init__(self):
        if self.a == self.b:
            raise VnesimError(f"self-loop link at node {self.a}")
        if self.bw_capacity < 0:
            raise VnesimError(f"link ({self.a},{self.b}): negative bandwidth")


class SubstrateNetwork:
    """Mutable resource state over an immutable topology.

    Node and link availability live in arrays (``cpu_avail``, ``mem_avail``,
    ``bw_avail``) so placement heuristics can scan them vectorised. Only the
    allocate/release/reserve methods may mutate them.
    """

    def __init__(self, nodes: list[SubstrateNode]):
        for i, node in enumerate(nodes):
            if node.id != i:
                raise VnesimError("node ids must be consecutive from 0")
        self.nodes: list[SubstrateNode] = list(nodes)
        m = len(nodes)
        self.cpu_capacity = np.array([n.cpu_capacity for n in nodes], dtype=np.int64)
        self.mem_capacity = np.array([n.mem_capacity for n in nodes], dtype=np.int64)
        self.cpu_avail = self.cpu_capacity.copy()
        self.mem_avail = self.mem_capacity.copy()
        self.kind_codes = np.array([KIND_CODE[n.kind] for n in nodes], dtype=np.int64)
        self.links: list[SubstrateLink] = []
        self.bw_capacity: list[int] = []
        self.bw_avail: list[int] = []
        self._adj: list[list[tuple[int, int]]] = [[] for _ in range(m)]
        self._pair_index: dict[tuple[int, int], int] = {}
        # Per-kind bandwidth mass (each link counted once per endpoint), kept
        # incrementally because state encoding reads it on every placement.
        self.kind_bw_capacity = np.zeros(len(KIND_ORDER), dtype=np.int64)
        self.kind_bw_avail = np.zeros(len(KIND_ORDER), dtype=np.int64)

    # -- construction -----------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def link_count(self) -> int:
        return len(self.links)

    def add_link(self, i: int, j: int, bw_capacity: int) -> int:
        """Register an undirected link and return its index."""
        a, b = (i, j) if i < j else (j, i)
        self._check_node(a)
        self._check_node(b)
        if a == b:
            raise VnesimError(f"self-loop link at node {a}")
        if (a, b) in self._pair_index:
            raise VnesimError(f"duplicate link ({a},{b})")
        idx = len(self.links)
        self.links.append(SubstrateLink(a, b, bw_capacity))
        self.bw_capacity.append(int(bw_capacity))
        self.bw_avail.append(int(bw_capacity))
        self._pair_index[(a, b)] = idx
        self._insert_sorted(self._adj[a], (b, idx))
        self._insert_sorted(self._adj[b], (a, idx))
        for end in (a, b):
            self.kind_bw_capacity[self.kind_codes[end]] += bw_capacity
            self.kind_bw_avail[self.kind_codes[end]] += bw_capacity
        return idx

    @staticmethod
    def _insert_sorted(adj: list[tuple[int, int]], item: tuple[int, int]) -> None:
        lo = 0
        while lo < len(adj) and adj[lo][0] < item[0]:
            lo += 1
        adj.insert(lo, item)

    def _check_node(self, i: int) -> None:
        if not 0 <= i < len(self.nodes):
            raise IndexError(f"node index {i} out of range")

    def link_index(self, i: int, j: int) -> int:
        a, b = (i, j) if i < j else (j, i)
        return self._pair_index[(a, b)]

    def link_endpoints(self, idx: int) -> tuple[int, int]:
        link = self.links[idx]
        return (link.a, link.b)

    def neighbors(self, i: int) -> list[tuple[int, int]]:
        """(neighbor, link index) pairs, sorted by neighbor id."""
        self._check_node(i)
        return self._adj[i]

    # -- queries -----------------------------------------------------------

    def node_bandwidth_avail(self, i: int) -> int:
        """Best currently free bandwidth on any link incident to node i.

        An isolated node has no network reachability and reports 0.
        """
        self._check_node(i)
        best = 0
        for _, li in self._adj[i]:
            if self.bw_avail[li] > best:
                best = self.bw_avail[li]
        return best

    def node_bandwidth_capacity(self, i: int) -> int:
        self._check_node(i)
        best = 0
        for _, li in self._adj[i]:
            if self.bw_capacity[li] > best:
                best = self.bw_capacity[li]
        return best

    def shortest_feasible_path(
        self, src: int, dst: int, bw_demand: int
    ) -> Optional[list[int]]:
        """Hop-minimal path from src to dst using only links with enough
        free bandwidth, as a list of link indices.

        Among equal-hop paths the lexicographically smallest node sequence is
        returned so results are reproducible. Returns [] when src == dst and
        None when no feasible path exists.
        """
        self._check_node(src)
        self._check_node(dst)
        if bw_demand < 0:
            raise VnesimError("negative bandwidth demand")
        if src == dst:
            return []
        bw_avail = self.bw_avail
        adj = self._adj
        # Breadth-first from dst so the walk below can follow decreasing
        # distance while preferring the smallest next node id.
        dist = {dst: 0}
        frontier = [dst]
        level = 0
        found = False
        while frontier and not found:
            nxt = []
            for u in frontier:
                for v, li in adj[u]:
                    if v not in dist and bw_avail[li] >= bw_demand:
                        dist[v] = level + 1
                        nxt.append(v)
                        if v == src:
                            found = True
            frontier = nxt
            level += 1
        if src not in dist:
            return None
        path: list[int] = []
        cur = src
        while cur != dst:
            want = dist[cur] - 1
            for v, li in adj[cur]:  # ascending neighbor order
                if bw_avail[li] >= bw_demand and dist.get(v, -1) == want:
                    path.append(li)
                    cur = v
                    break
            else:  # pragma: no cover - BFS guarantees a predecessor
                raise VnesimError("path reconstruction failed")
        return path

    # -- resource accounting ------------------------------------------------

    def allocate(self, i: int, cpu: int, mem: int) -> None:
        """Take cpu/mem units from node i; both or neither."""
        self._check_node(i)
        if cpu < 0 or mem < 0:
            raise AllocationError(f"node {i}: negative allocation")
        if cpu > self.cpu_avail[i] or mem > self.mem_avail[i]:
            raise AllocationError(
                f"node {i}: need ({cpu},{mem}), "
                f"free ({int(self.cpu_avail[i])},{int(self.mem_avail[i])})"
            )
        self.cpu_avail[i] -= cpu
        self.mem_avail[i] -= mem

    def release(self, i: int, cpu: int, mem: int) -> None:
        """Return cpu/mem units to node i; over-release is a simulator bug."""
        self._check_node(i)
        if cpu < 0 or mem < 0:
            raise AccountingError(f"node {i}: negative release")
        if (
            self.cpu_avail[i] + cpu > self.cpu_capacity[i]
            or self.mem_avail[i] + mem > self.mem_capacity[i]
        ):
            raise AccountingError(f"node {i}: release past capacity")
        self.cpu_avail[i] += cpu
        self.mem_avail[i] += mem

    def reserve_path(self, path: list[int], bw: int) -> None:
        """Reserve bw on every link of path; all links or none."""
        if bw < 0:
            raise AllocationError("negative bandwidth reservation")
        for li in path:
            if self.bw_avail[li] < bw:
                link = self.links[li]
                raise AllocationError(
                    f"link ({link.a},{link.b}): need {bw}, free {self.bw_avail[li]}"
                )
        for li in path:
            self.bw_avail[li] -= bw
            link = self.links[li]
            self.kind_bw_avail[self.kind_codes[link.a]] -= bw
            self.kind_bw_avail[self.kind_codes[link.b]] -= bw

    def release_path(self, path: list[int], bw: int) -> None:
        """Return bw on every link of path; all links or none."""
        if bw < 0:
            raise AccountingError("negative bandwidth release")
        for li in path:
            if self.bw_avail[li] + bw > self.bw_capacity[li]:
                link = self.links[li]
                raise AccountingError(f"link ({link.a},{link.b}): release past capacity")
        for li in path:
            self.bw_avail[li] += bw
            link = self.links[li]
            self.kind_bw_avail[self.kind_codes[link.a]] += bw
            self.kind_bw_avail[self.kind_codes[link.b]] += bw

    # -- snapshots -----------------------------------------------------------

    def clone(self) -> "SubstrateNetwork":
        """Snapshot with shared immutable topology and copied live state."""
        dup = SubstrateNetwork.__new__(SubstrateNetwork)
        dup.nodes = self.nodes
        dup.cpu_capacity = self.cpu_capacity
        dup.mem_capacity = self.mem_capacity
        dup.kind_codes = self.kind_codes
        dup.links = self.links
        dup.bw_capacity = self.bw_capacity
        dup._adj = self._adj
        dup._pair_index = self._pair_index
        dup.kind_bw_capacity = self.kind_bw_capacity
        dup.cpu_avail = self.cpu_avail.copy()
        dup.mem_avail = self.mem_avail.copy()
        dup.bw_avail = list(self.bw_avail)
        dup.kind_bw_avail = self.kind_bw_avail.copy()
        return dup

    def is_connected(self) -> bool:
        m = len(self.nodes)
        if m <= 1:
            return True
        seen = [False] * m
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            u = stack.pop()
            for v, _ in self._adj[u]:
                if not seen[v]:
                    seen[v] = True
                    count += 1
                    stack.append(v)
        return count == m


# -- text format ---------------------------------------------------------
#
# nodes <m>
# node <id> <cpu_cap> <mem_cap> <clock> <kind>
# link <i> <j> <bw_cap>
#
# The format carries topology and capacities only; a loaded network starts
# with availability equal to capacity.

def substrate_to_text(net: SubstrateNetwork) -> str:
    lines = [f"nodes {net.node_count}"]
    for n in net.nodes:
        lines.append(
            f"node {n.id} {n.cpu_capacity} {n.mem_capacity} {n.clock_avail} {n.kind.value}"
        )
    for link in net.links:
        lines.append(f"link {link.a} {link.b} {link.bw_capacity}")
    return "\n".join(lines) + "\n"


def substrate_from_text(text: str) -> SubstrateNetwork:
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines or not lines[0].startswith("nodes "):
        raise VnesimError("substrate text must start with a 'nodes' header")
    m = int(lines[0].split()[1])
    kinds = {k.value: k for k in NodeKind}
    nodes = []
    idx = 1
    for _ in range(m):
        parts = lines[idx].split()
        if parts[0] != "node":
            raise VnesimError(f"expected node line, got: {lines[idx]}")
        nodes.append(
            SubstrateNode(
                id=int(parts[1]),
                cpu_capacity=int(parts[2]),
                mem_capacity=int(parts[3]),
                clock_avail=int(parts[4]),
                kind=kinds[parts[5]],
            )
        )
        idx += 1
    net = SubstrateNetwork(nodes)
    for line in lines[idx:]:
        parts = line.split()
        if parts[0] != "link":
            raise VnesimError(f"expected link line, got: {line}")
        net.add_link(int(parts[1]), int(parts[2]), int(parts[3]))
    return net
