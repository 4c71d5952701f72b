"""Tiny-instance comparison against the exhaustive optimum.

Each instance is small enough to enumerate every assignment, so the
brute-force value is the true optimum and the learned agent and the greedy
baseline can be scored as a fraction of it.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .embedder import QTable, SarsaAgent, brute_force_embed, embed_vn_baseline
from .metrics import ObjectiveWeights, objective_value
from .seeding import component_rng
from .substrate import KIND_ORDER, SubstrateNetwork, SubstrateNode
from .virtual import DelayClass, VirtualLink, VirtualMachine, VnRequest
from .workload import vm_type_label, WorkloadConfig


def _tiny_instance(
    rng: np.random.Generator, max_nodes: int = 4, max_vms: int = 3
) -> tuple[SubstrateNetwork, VnRequest, dict]:
    """One random fully-feasible instance plus ground-truth VM types.

    Each instance models one homogeneous mini-rack: capacities are drawn once
    and shared by its nodes, the way machines inside a rack are provisioned.
    """
    cfg = WorkloadConfig()  # reuse the labeling rule and usage ranges
    m = int(rng.integers(2, max_nodes + 1))
    cpu_cap = int(rng.integers(16, 33))
    mem_cap = int(rng.integers(2000, 5001))
    nodes = []
    for i in range(m):
        nodes.append(
            SubstrateNode(
                id=i,
                cpu_capacity=cpu_cap,
                mem_capacity=mem_cap,
                clock_avail=int(rng.integers(1000, 4001)),
                kind=KIND_ORDER[int(rng.integers(len(KIND_ORDER)))],
            )
        )
    net = SubstrateNetwork(nodes)
    for i in range(m):
        for j in range(i + 1, m):
            if rng.random() < 0.8 or j == i + 1:  # keep it connected
                net.add_link(i, j, int(rng.integers(1000, 10001)))
    n = int(rng.integers(1, max_vms + 1))
    vms = []
    types = {}
    for vm_id in range(n):
        vm = VirtualMachine(
            id=vm_id,
            cpu_demand=int(rng.integers(1, 5)),
            mem_demand=int(rng.integers(200, 1200)),
            vm_class=DelayClass(int(rng.integers(1, 4))),
            start=0.0,
        )
        vms.append(vm)
        usage = (float(rng.uniform(0.3, 0.99)), float(rng.uniform(0.3, 0.99)), float(rng.random()))
        types[vm_id] = vm_type_label(cfg, usage)
    vlinks = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.6:
                vlinks.append(VirtualLink(a, b, int(rng.integers(100, 501))))
    vn = VnRequest(id=0, vms=vms, vlinks=vlinks, start=0.0)
    return net, vn, types


def _train_tiny_agent(
    net: SubstrateNetwork,
    vn: VnRequest,
    types: dict,
    rng: np.random.Generator,
    episodes: int = 400,
) -> SarsaAgent:
    # Episodes here are one to three steps, so the immediate reward carries
    # the signal; a small discount keeps sparsely visited successors from
    # skewing the ranking, and sustained exploration fills the tiny table.
    q = QTable(alpha=0.2, gamma=0.4, epsilon=0.3, epsilon_decay=0.995, epsilon_min=0.1)
    agent = SarsaAgent(q, rng=rng)
    for _ in range(episodes):
        agent.embed(net.clone(), vn, types, train=True)
        agent.end_episode()
    return agent


def oracle_comparison(
    instances: int,
    seed: int,
    weights: Optional[ObjectiveWeights] = None,
    max_nodes: int = 4,
    max_vms: int = 3,
    episodes: int = 400,
) -> list[tuple[float, float]]:
    """(agent/optimum, greedy/optimum) objective ratios over seeded instances.

    Instances where the optimum itself is infeasible are redrawn.
    """
    weights = weights or ObjectiveWeights()
    rng = component_rng(seed, "oracle")
    rows: list[tuple[float, float]] = []
    while len(rows) < instances:
        net, vn, types = _tiny_instance(rng, max_nodes=max_nodes, max_vms=max_vms)
        best = brute_force_embed(net, vn, weights)
        if best is None or best[1] <= 0:
            continue
        optimum = best[1]
        agent = _train_tiny_agent(net, vn, types, rng, episodes=episodes)
        episode = agent.embed(net.clone(), vn, types, train=False)
        agent_value = (
            objective_value(weights, net, vn, episode.embedding)
            if episode.embedding is not None
            else 0.0
        )
        work = net.clone()
        greedy = embed_vn_baseline("greedy_best_fit", work, vn)
        greedy_value = (
            objective_value(weights, net, vn, greedy) if greedy is not None else 0.0
        )
        rows.append((agent_value / optimum, greedy_value / optimum))
    return rows
