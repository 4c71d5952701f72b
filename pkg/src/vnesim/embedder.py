"""Node selection for placement: the on-policy learning agent, simple
baseline strategies, and an exhaustive optimum finder for tiny instances.

One learning episode covers one request: VMs are placed largest demand first,
each placement earns a reward (hardware-type match plus per-resource
satisfaction), and the tabular value function is updated on-policy. A failed
episode rolls every tentative allocation back, leaving the network exactly as
it was.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import VnesimError
from .substrate import KIND_ORDER, NodeKind, SubstrateNetwork
from .virtual import Embedding, VirtualMachine, VmType, VnRequest, vm_bandwidth_demand

REWARD_QUANTUM = 1.0 / 6.0  # exact sixth so the [-1, +1] bounds are sharp

TYPE_TO_KIND = {
    VmType.CPU_INTENSIVE: NodeKind.CPU_RICH,
    VmType.GPU_INTENSIVE: NodeKind.GPU_RICH,
    VmType.MEM_INTENSIVE: NodeKind.MEM_RICH,
}
_TYPE_CODE = {t: i for i, t in enumerate(TYPE_TO_KIND)}

BASELINE_STRATEGIES = ("random", "first_fit", "greedy_best_fit", "brute_force")

BRUTE_FORCE_MAX_VMS = 4
BRUTE_FORCE_MAX_NODES = 5


# -- state and action encoding ----------------------------------------------

def quantize(fraction: float, levels: int) -> int:
    """Bucket index of a fraction in [0, 1]; buckets are half-open above,
    with 1.0 clamped into the top bucket."""
    if fraction < 0.0:
        return 0
    return min(levels - 1, int(fraction * levels))


def encode_state(
    net: SubstrateNetwork,
    vm: VirtualMachine,
    vm_type: VmType,
    position: int,
    levels: int = 4,
    position_cap: int = 4,
) -> tuple:
    """Finite, deterministic view of (network snapshot, current VM).

    Per hardware kind, the aggregate cpu/mem/bandwidth availability fractions
    are quantised into ``levels`` buckets; the VM contributes its predicted
    type and its (capped) position inside the request.
    """
    profile = []
    for code in range(len(KIND_ORDER)):
        mask = net.kind_codes == code
        if not np.any(mask):
            profile.extend((0, 0, 0))
            continue
        cpu_cap = int(net.cpu_capacity[mask].sum())
        mem_cap = int(net.mem_capacity[mask].sum())
        cpu_frac = float(net.cpu_avail[mask].sum()) / cpu_cap if cpu_cap else 0.0
        mem_frac = float(net.mem_avail[mask].sum()) / mem_cap if mem_cap else 0.0
        bw_cap = int(net.kind_bw_capacity[code])
        bw_frac = float(net.kind_bw_avail[code]) / bw_cap if bw_cap else 0.0
        profile.extend(
            (quantize(cpu_frac, levels), quantize(mem_frac, levels), quantize(bw_frac, levels))
        )
    return (_TYPE_CODE[vm_type], min(position, position_cap), tuple(profile))


def node_action_class(net: SubstrateNetwork, node: int, levels: int = 4) -> tuple[int, int]:
    """Action generalisation key: (hardware kind, combined availability bucket).

    Keying the table by node id would tie it to one workload; the class key
    transfers across instances of the same shape.
    """
    cpu_frac = float(net.cpu_avail[node]) / max(int(net.cpu_capacity[node]), 1)
    mem_frac = float(net.mem_avail[node]) / max(int(net.mem_capacity[node]), 1)
    return (int(net.kind_codes[node]), quantize(0.5 * (cpu_frac + mem_frac), levels))


# -- reward -------------------------------------------------------------------

@dataclass(frozen=True)
class RewardBreakdown:
    """Per-placement reward components; total always lies in [-1, +1]."""

    type_component: float
    cpu: float
    mem: float
    network: float

    @property
    def total(self) -> float:
        return self.type_component + self.cpu + self.mem + self.network


def compute_reward(
    type_match: bool,
    cpu_ok: bool,
    mem_ok: bool,
    network_ok: bool,
    type_mismatch_penalty: bool = False,
) -> RewardBreakdown:
    """Half the reward rides on placing the VM onto its matching hardware
    kind; the other half splits equally across cpu/mem/network satisfaction.

    A matched type earns +0.5 and a mismatch earns 0 (or -0.5 when the
    penalty flag is on, which makes the -1 floor reachable). Each satisfied
    resource earns +1/6, each unsatisfied one -1/6.
    """
    if type_match:
        type_component = 0.5
    else:
        type_component = -0.5 if type_mismatch_penalty else 0.0
    signs = [1.0 if ok else -1.0 for ok in (cpu_ok, mem_ok, network_ok)]
    return RewardBreakdown(
        type_component=type_component,
        cpu=signs[0] * REWARD_QUANTUM,
        mem=signs[1] * REWARD_QUANTUM,
        network=signs[2] * REWARD_QUANTUM,
    )


# -- tabular value function ---------------------------------------------------

@dataclass
class QTable:
    """State-action value table with the learning hyper-parameters.

    Missing entries read as zero. ``epsilon`` decays multiplicatively once
    per episode down to ``epsilon_min``.
    """

    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.3
    epsilon_decay: float = 0.999
    epsilon_min: float = 0.01
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.gamma <= 1.0:
            raise VnesimError("alpha and gamma must lie in [0, 1]")

    def get(self, state: tuple, action: tuple) -> float:
        return self.values.get((state, action), 0.0)

    def decay_epsilon(self) -> None:
        self.epsilon = max(self.epsilon_min, self.epsilon * self.epsilon_decay)


def sarsa_update(
    q: QTable,
    state: tuple,
    action: tuple,
    reward: float,
    next_state: Optional[tuple],
    next_action: Optional[tuple],
) -> float:
    """On-policy temporal-difference update toward reward + gamma * Q(s', a').

    Terminal transitions pass None for the successor and bootstrap from zero.
    Returns the new value.
    """
    current = q.get(state, action)
    future = 0.0
    if next_state is not None and next_action is not None:
        future = q.get(next_state, next_action)
    updated = current + q.alpha * (reward + q.gamma * future - current)
    q.values[(state, action)] = updated
    return updated


def qtable_save(q: QTable, path: str | Path) -> None:
    lines = [
        f"qtable {q.alpha!r} {q.gamma!r} {q.epsilon!r} {q.epsilon_decay!r} {q.epsilon_min!r}"
    ]
    for (state, action), value in sorted(q.values.items(), key=lambda kv: repr(kv[0])):
        lines.append(f"{_encode_state_key(state)} {_encode_action_key(action)} {value!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def qtable_load(path: str | Path) -> QTable:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "qtable":
        raise VnesimError("not a qtable file")
    q = QTable(
        alpha=float(head[1]),
        gamma=float(head[2]),
        epsilon=float(head[3]),
        epsilon_decay=float(head[4]),
        epsilon_min=float(head[5]),
    )
    for line in lines[1:]:
        if not line.strip():
            continue
        state_key, action_key, value = line.split()
        q.values[(_decode_state_key(state_key), _decode_action_key(action_key))] = float(value)
    return q


def _encode_state_key(state: tuple) -> str:
    type_code, position, profile = state
    return f"t{type_code}:p{position}:" + "".join(str(b) for b in profile)


def _decode_state_key(key: str) -> tuple:
    t_part, p_part, profile = key.split(":")
    return (int(t_part[1:]), int(p_part[1:]), tuple(int(ch) for ch in profile))


def _encode_action_key(action: tuple) -> str:
    return f"k{action[0]}b{action[1]}"


def _decode_action_key(key: str) -> tuple:
    kind, bucket = key[1:].split("b")
    return (int(kind), int(bucket))


# -- shared placement helpers --------------------------------------------------

def feasible_nodes(net: SubstrateNetwork, vm: VirtualMachine) -> np.ndarray:
    """Indices of nodes whose free cpu and memory cover the VM's demand."""
    mask = (net.cpu_avail >= vm.cpu_demand) & (net.mem_avail >= vm.mem_demand)
    return np.flatnonzero(mask)

def placement_order(vn: VnRequest) -> list[VirtualMachine]:
    """Largest-first processing order; bulky VMs fail fastest, which keeps
    dead-end rollbacks cheap."""
    max_cpu = max(vm.cpu_demand for vm in vn.vms)
    max_mem = max(vm.mem_demand for vm in vn.vms)
    return sorted(
        vn.vms,
        key=lambda vm: (-(vm.cpu_demand / max_cpu + vm.mem_demand / max_mem), vm.id),
    )


def best_fit_node(net: SubstrateNetwork, candidates: np.ndarray, cpu: int, mem: int) -> int:
    """Candidate maximising post-placement utilisation, preferring the more
    balanced node on ties, then the lowest index."""
    cpu_cap = net.cpu_capacity[candidates].astype(float)
    mem_cap = net.mem_capacity[candidates].astype(float)
    post_cpu = (cpu_cap - net.cpu_avail[candidates] + cpu) / cpu_cap
    post_mem = (mem_cap - net.mem_avail[candidates] + mem) / mem_cap
    total = post_cpu + post_mem
    imbalance = np.abs(post_cpu - post_mem)
    order = np.lexsort((candidates, imbalance, -total))
    return int(candidates[order[0]])


def placement_gain(
    net: SubstrateNetwork,
    node: int,
    vm: VirtualMachine,
    vn: VnRequest,
    assignment: dict[int, int],
    weights,
) -> float:
    """One-step objective contribution of putting ``vm`` on ``node``.

    Node part mirrors the server term of the objective; the link part scores
    virtual links toward already-placed peers, preferring co-location, then a
    direct physical hop, with a flat discount for anything farther (exact hop
    counts are not worth a search per candidate here).
    """
    m = net.node_count
    cpu_cap = int(net.cpu_capacity[node])
    mem_cap = int(net.mem_capacity[node])
    used_cpu = cpu_cap - int(net.cpu_avail[node])
    used_mem = mem_cap - int(net.mem_avail[node])
    gain = weights.cpu * (used_cpu + vm.cpu_demand) / cpu_cap / m
    gain += weights.mem * (used_mem + vm.mem_demand) / mem_cap / m
    for vl in vn.vlinks:
        if vm.id == vl.a:
            other = vl.b
        elif vm.id == vl.b:
            other = vl.a
        else:
            continue
        peer = assignment.get(other)
        if peer is None:
            continue
        if peer == node:
            gain += 2.0 * weights.net
        elif (min(node, peer), max(node, peer)) in net._pair_index:
            gain += weights.net
        else:
            gain += weights.net / 2.0
    return gain


def route_and_reserve(
    net: SubstrateNetwork, vn: VnRequest, assignment: dict[int, int]
) -> Optional[dict[tuple[int, int], list[int]]]:
    """Map every virtual link onto a reserved physical path.

    Co-located endpoints need no physical links. On the first unroutable
    link, every reservation made so far is undone and None is returned.
    """
    reserved: list[tuple[list[int], int]] = []
    paths: dict[tuple[int, int], list[int]] = {}
    for vl in sorted(vn.vlinks, key=lambda v: (v.a, v.b)):
        src, dst = assignment[vl.a], assignment[vl.b]
        if src == dst:
            paths[(vl.a, vl.b)] = []
            continue
        path = net.shortest_feasible_path(src, dst, vl.bw_demand)
        if path is None:
            for done_path, bw in reversed(reserved):
                net.release_path(done_path, bw)
            return None
        net.reserve_path(path, vl.bw_demand)
        reserved.append((path, vl.bw_demand))
        paths[(vl.a, vl.b)] = path
    return paths


def _rollback_nodes(net: SubstrateNetwork, done: list[tuple[int, int, int]]) -> None:
    for node, cpu, mem in reversed(done):
        net.release(node, cpu, mem)


def _place_with(
    net: SubstrateNetwork,
    vn: VnRequest,
    pick: Callable[[VirtualMachine, np.ndarray], int],
) -> Optional[Embedding]:
    """Common skeleton: place every VM with the given rule, then route.

    Commits allocations and reservations on success; restores the network
    exactly on any failure.
    """
    allocated: list[tuple[int, int, int]] = []
    assignment: dict[int, int] = {}
    for vm in placement_order(vn):
        candidates = feasible_nodes(net, vm)
        if len(candidates) == 0:
            _rollback_nodes(net, allocated)
            return None
        node = pick(vm, candidates)
        net.allocate(node, vm.cpu_demand, vm.mem_demand)
        allocated.append((node, vm.cpu_demand, vm.mem_demand))
        assignment[vm.id] = node
    paths = route_and_reserve(net, vn, assignment)
    if paths is None:
        _rollback_nodes(net, allocated)
        return None
    return Embedding(assignment=assignment, link_paths=paths)


# -- baseline embedders ---------------------------------------------------------

def embed_vn_baseline(
    strategy: str,
    net: SubstrateNetwork,
    vn: VnRequest,
    rng: Optional[np.random.Generator] = None,
    weights=None,
) -> Optional[Embedding]:
    """Place a request with one of the non-learning strategies.

    ``random`` draws uniformly among feasible nodes, ``first_fit`` takes the
    lowest feasible index, ``greedy_best_fit`` packs via ``best_fit_node``,
    and ``brute_force`` returns the objective-optimal embedding (tiny
    instances only; requires objective weights).
    """
    if strategy not in BASELINE_STRATEGIES:
        raise VnesimError(f"unknown strategy {strategy!r}")
    if strategy == "brute_force":
        if weights is None:
            raise VnesimError("brute_force needs objective weights")
        best = brute_force_embed(net, vn, weights)
        if best is None:
            return None
        emb = best[0]
        for vm in vn.vms:
            net.allocate(emb.assignment[vm.id], vm.cpu_demand, vm.mem_demand)
        for vl in vn.vlinks:
            net.reserve_path(emb.link_paths[(vl.a, vl.b)], vl.bw_demand)
        return emb
    if strategy == "random":
        if rng is None:
            raise VnesimError("random strategy needs an rng")
        return _place_with(net, vn, lambda vm, cand: int(rng.choice(cand)))
    if strategy == "first_fit":
        return _place_with(net, vn, lambda vm, cand: int(cand[0]))
    return _place_with(
        net, vn, lambda vm, cand: best_fit_node(net, cand, vm.cpu_demand, vm.mem_demand)
    )


def brute_force_embed(
    net: SubstrateNetwork, vn: VnRequest, weights
) -> Optional[tuple[Embedding, float]]:
    """Enumerate every VM-to-node assignment and keep the objective maximum.

    Serves as the optimisation oracle, so it must stay exhaustive; the size
    cap keeps the m^n enumeration at desk scale.
    """
    from .metrics import objective_value

    n, m = len(vn.vms), net.node_count
    if n > BRUTE_FORCE_MAX_VMS or m > BRUTE_FORCE_MAX_NODES:
        raise VnesimError(
            f"brute force capped at {BRUTE_FORCE_MAX_VMS} VMs x {BRUTE_FORCE_MAX_NODES} nodes, "
            f"got {n} x {m}"
        )
    best: Optional[tuple[Embedding, float]] = None
    for combo in itertools.product(range(m), repeat=n):
        need_cpu = [0] * m
        need_mem = [0] * m
        for vm, node in zip(vn.vms, combo):
            need_cpu[node] += vm.cpu_demand
            need_mem[node] += vm.mem_demand
        if any(
            need_cpu[i] > net.cpu_avail[i] or need_mem[i] > net.mem_avail[i] for i in range(m)
        ):
            continue
        assignment = {vm.id: node for vm, node in zip(vn.vms, combo)}
        work = net.clone()
        paths = route_and_reserve(work, vn, assignment)
        if paths is None:
            continue
        emb = Embedding(assignment=assignment, link_paths=paths)
        value = objective_value(weights, net, vn, emb)
        if best is None or value > best[1]:
            best = (emb, value)
    return best


# -- learning agent ---------------------------------------------------------------

@dataclass
class EpisodeResult:
    """Outcome of one embedding episode."""

    embedding: Optional[Embedding]
    rewards: list[float]
    breakdowns: list[RewardBreakdown]

    @property
    def mean_reward(self) -> Optional[float]:
        if not self.rewards:
            return None
        return sum(self.rewards) / len(self.rewards)


def embed_vn_random_scored(
    net: SubstrateNetwork,
    vn: VnRequest,
    vm_types: dict[int, VmType],
    rng: np.random.Generator,
    type_mismatch_penalty: bool = False,
) -> EpisodeResult:
    """Random placement with the same reward accounting as the agent.

    Baseline for learning-signal comparisons: identical episode structure and
    reward rule, with the node drawn uniformly from the feasible candidates.
    """
    allocated: list[tuple[int, int, int]] = []
    assignment: dict[int, int] = {}
    rewards: list[float] = []
    breakdowns: list[RewardBreakdown] = []
    for vm in placement_order(vn):
        candidates = feasible_nodes(net, vm)
        if len(candidates) == 0:
            _rollback_nodes(net, allocated)
            return EpisodeResult(None, rewards, breakdowns)
        node = int(rng.choice(candidates))
        vm_type = vm_types[vm.id]
        reward = compute_reward(
            type_match=net.nodes[node].kind == TYPE_TO_KIND[vm_type],
            cpu_ok=bool(net.cpu_avail[node] >= vm.cpu_demand),
            mem_ok=bool(net.mem_avail[node] >= vm.mem_demand),
            network_ok=net.node_bandwidth_avail(node) >= vm_bandwidth_demand(vn, vm.id),
            type_mismatch_penalty=type_mismatch_penalty,
        )
        net.allocate(node, vm.cpu_demand, vm.mem_demand)
        allocated.append((node, vm.cpu_demand, vm.mem_demand))
        assignment[vm.id] = node
        rewards.append(reward.total)
        breakdowns.append(reward)
    paths = route_and_reserve(net, vn, assignment)
    if paths is None:
        _rollback_nodes(net, allocated)
        return EpisodeResult(None, rewards, breakdowns)
    return EpisodeResult(Embedding(assignment=assignment, link_paths=paths), rewards, breakdowns)


class SarsaAgent:
    """Learns which node class suits each VM type through placement rewards.

    Actions are node classes; the concrete node is the best-scoring member of
    the chosen class under the one-step objective gain, which keeps the table
    small while placement quality rides on the packer. Classes whose values
    sit within ``q_tie_tol`` of the maximum count as reward-indifferent and
    defer to the packer too; the tolerance is far below the type-match
    quantum, so a learned type preference always wins.
    """

    def __init__(
        self,
        qtable: QTable,
        rng: np.random.Generator,
        levels: int = 4,
        position_cap: int = 4,
        type_mismatch_penalty: bool = False,
        weights=None,
        q_tie_tol: float = 0.05,
    ):
        from .metrics import ObjectiveWeights

        self.q = qtable
        self.rng = rng
        self.levels = levels
        self.position_cap = position_cap
        self.type_mismatch_penalty = type_mismatch_penalty
        self.weights = weights if weights is not None else ObjectiveWeights()
        self.q_tie_tol = q_tie_tol

    def _best_member(
        self,
        net: SubstrateNetwork,
        members: list[int],
        vm: VirtualMachine,
        vn: VnRequest,
        assignment: dict[int, int],
    ) -> tuple[int, float]:
        best_node = members[0]
        best_gain = -1.0
        for node in sorted(members):
            gain = placement_gain(net, node, vm, vn, assignment, self.weights)
            if gain > best_gain + 1e-12:
                best_gain = gain
                best_node = node
        return best_node, best_gain

    def _select(
        self,
        net: SubstrateNetwork,
        state: tuple,
        candidates: np.ndarray,
        vm: VirtualMachine,
        vn: VnRequest,
        assignment: dict[int, int],
        explore: bool,
    ) -> tuple[tuple[int, int], int]:
        """epsilon-greedy over the action classes present among candidates."""
        classes: dict[tuple[int, int], list[int]] = {}
        for node in candidates.tolist():
            classes.setdefault(node_action_class(net, node, self.levels), []).append(node)
        keys = sorted(classes)
        if explore and self.rng.random() < self.q.epsilon:
            choice = keys[int(self.rng.integers(len(keys)))]
            node, _ = self._best_member(net, classes[choice], vm, vn, assignment)
            return choice, node
        values = [self.q.get(state, k) for k in keys]
        top = max(values)
        near = [k for k, v in zip(keys, values) if v >= top - self.q_tie_tol]
        best_key = near[0]
        best_node, best_gain = self._best_member(net, classes[near[0]], vm, vn, assignment)
        for key in near[1:]:
            node, gain = self._best_member(net, classes[key], vm, vn, assignment)
            if gain > best_gain + 1e-12:
                best_key, best_node, best_gain = key, node, gain
        return best_key, best_node

    def embed(
        self,
        net: SubstrateNetwork,
        vn: VnRequest,
        vm_types: dict[int, VmType],
        train: bool = True,
    ) -> EpisodeResult:
        """Run one episode over the request; mutates the table when training.

        Rewards are judged against availability at selection time; the
        network-resource check compares the node's best free link bandwidth
        with the VM's total virtual-link demand. Any failure restores the
        pre-episode network exactly.
        """
        allocated: list[tuple[int, int, int]] = []
        assignment: dict[int, int] = {}
        rewards: list[float] = []
        breakdowns: list[RewardBreakdown] = []
        pending: Optional[tuple[tuple, tuple, float]] = None
        for position, vm in enumerate(placement_order(vn)):
            candidates = feasible_nodes(net, vm)
            if len(candidates) == 0:
                if train and pending is not None:
                    sarsa_update(self.q, pending[0], pending[1], pending[2], None, None)
                _rollback_nodes(net, allocated)
                return EpisodeResult(None, rewards, breakdowns)
            vm_type = vm_types[vm.id]
            state = encode_state(net, vm, vm_type, position, self.levels, self.position_cap)
            action, node = self._select(
                net, state, candidates, vm, vn, assignment, explore=train
            )
            reward = compute_reward(
                type_match=net.nodes[node].kind == TYPE_TO_KIND[vm_type],
                cpu_ok=bool(net.cpu_avail[node] >= vm.cpu_demand),
                mem_ok=bool(net.mem_avail[node] >= vm.mem_demand),
                network_ok=net.node_bandwidth_avail(node) >= vm_bandwidth_demand(vn, vm.id),
                type_mismatch_penalty=self.type_mismatch_penalty,
            )
            net.allocate(node, vm.cpu_demand, vm.mem_demand)
            allocated.append((node, vm.cpu_demand, vm.mem_demand))
            assignment[vm.id] = node
            if train and pending is not None:
                sarsa_update(self.q, pending[0], pending[1], pending[2], state, action)
            pending = (state, action, reward.total)
            rewards.append(reward.total)
            breakdowns.append(reward)
        if train and pending is not None:
            sarsa_update(self.q, pending[0], pending[1], pending[2], None, None)
        paths = route_and_reserve(net, vn, assignment)
        if paths is None:
            _rollback_nodes(net, allocated)
            return EpisodeResult(None, rewards, breakdowns)
        return EpisodeResult(Embedding(assignment=assignment, link_paths=paths), rewards, breakdowns)

    def end_episode(self) -> None:
        self.q.decay_epsilon()
