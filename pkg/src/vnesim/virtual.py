"""Virtual network requests: VMs, virtual links, classes and priorities,
plus the embedding result and its validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

from .errors import VnesimError
from .substrate import SubstrateNetwork


class DelayClass(IntEnum):
    """Delay sensitivity class requested by the user (1 is strictest)."""

    HIGH = 1
    MODERATE = 2
    LOW = 3


class VmType(Enum):
    """Dominant-resource category of a VM, observed after execution."""

    CPU_INTENSIVE = "CpuIntensive"
    GPU_INTENSIVE = "GpuIntensive"
    MEM_INTENSIVE = "MemIntensive"


def priority_of(delay_class: DelayClass) -> int:
    """Scheduling preference derived from the class: strictest class gets 3."""
    return 4 - int(delay_class)


@dataclass
class VirtualMachine:
    """One requested machine. ``end`` and actual usage are unknown at arrival
    and filled in only for completed, observed requests."""

    id: int
    cpu_demand: int
    mem_demand: int
    vm_class: DelayClass
    start: float
    priority: int = 0
    end: Optional[float] = None
    actual_cpu: Optional[float] = None
    actual_mem: Optional[float] = None

    def __post_init__(self):
        if self.cpu_demand <= 0 or self.mem_demand <= 0:
            raise VnesimError(f"vm {self.id}: demands must be positive")
        if self.priority == 0:
            self.priority = priority_of(self.vm_class)
        for actual, demand in (
            (self.actual_cpu, self.cpu_demand),
            (self.actual_mem, self.mem_demand),
        ):
            if actual is not None and not 0 < actual <= demand:
                raise VnesimError(f"vm {self.id}: actual usage outside (0, demand]")


@dataclass(frozen=True)
class VirtualLink:
    """Undirected link between two VMs of the same request (a < b)."""

    a: int
    b: int
    bw_demand: int

    def __post_init__(self):
        if self.a == self.b:
            raise VnesimError(f"virtual self-loop at vm {self.a}")
        if self.bw_demand <= 0:
            raise VnesimError(f"vlink ({self.a},{self.b}): demand must be positive")


def derive_vn_class(vms: list[VirtualMachine]) -> tuple[DelayClass, int]:
    """Class and priority of a whole request from its member VMs.

    The strictest (most delay sensitive) member dominates: a request carrying
    even one class-1 VM must be treated as class 1.
    """
    if not vms:
        raise VnesimError("cannot derive a class from an empty VM list")
    cls = DelayClass(min(int(vm.vm_class) for vm in vms))
    return cls, priority_of(cls)


@dataclass
class VnRequest:
    """A user request: an undirected weighted graph of VMs."""

    id: int
    vms: list[VirtualMachine]
    vlinks: list[VirtualLink]
    start: float
    vn_class: DelayClass = field(init=False)
    priority: int = field(init=False)
    agg_cpu: int = field(init=False)
    agg_mem: int = field(init=False)
    end: Optional[float] = None

    def __post_init__(self):
        ids = [vm.id for vm in self.vms]
        if len(set(ids)) != len(ids):
            raise VnesimError(f"vn {self.id}: duplicate vm ids")
        known = set(ids)
        seen_pairs = set()
        for vl in self.vlinks:
            if vl.a not in known or vl.b not in known:
                raise VnesimError(f"vn {self.id}: vlink references unknown vm")
            if (vl.a, vl.b) in seen_pairs:
                raise VnesimError(f"vn {self.id}: duplicate vlink ({vl.a},{vl.b})")
            seen_pairs.add((vl.a, vl.b))
        self.vn_class, self.priority = derive_vn_class(self.vms)
        self.agg_cpu = sum(vm.cpu_demand for vm in self.vms)
        self.agg_mem = sum(vm.mem_demand for vm in self.vms)

    def vm(self, vm_id: int) -> VirtualMachine:
        for vm in self.vms:
            if vm.id == vm_id:
                return vm
        raise IndexError(f"vn {self.id}: no vm {vm_id}")

    @property
    def total_link_demand(self) -> int:
        return sum(vl.bw_demand for vl in self.vlinks)


def vm_bandwidth_demand(vn: VnRequest, vm_id: int) -> int:
    """Total bandwidth demanded by the virtual links incident to one VM."""
    vn.vm(vm_id)  # index check
    return sum(vl.bw_demand for vl in vn.vlinks if vm_id in (vl.a, vl.b))


@dataclass
class Embedding:
    """Placement result: VM id to node id, and one physical path per vlink.

    ``assignment`` being a mapping makes double assignment unrepresentable;
    validation still guards missing or unknown VM ids. Paths are lists of
    substrate link indices; co-located endpoints use the empty path.
    """

    assignment: dict[int, int]
    link_paths: dict[tuple[int, int], list[int]]


@dataclass(frozen=True)
class Violation:
    """One violated placement constraint with the offending entity."""

    constraint: str  # assign-once | node-capacity | link-path | link-bandwidth
    entity: str
    detail: str


def validate_embedding(
    vn: VnRequest, emb: Embedding, net_before: SubstrateNetwork
) -> list[Violation]:
    """Check an embedding against the pre-embedding network snapshot.

    An empty result guarantees that replaying the embedding through
    allocate/reserve_path succeeds without accounting errors: node checks sum
    co-located demands and link checks sum every vlink routed over the same
    physical link.
    """
    violations: list[Violation] = []
    vm_ids = {vm.id for vm in vn.vms}
    assigned = set(emb.assignment)
    for vm_id in sorted(vm_ids - assigned):
        violations.append(
            Violation("assign-once", f"vm {vm_id}", "vm has no assigned node")
        )
    for vm_id in sorted(assigned - vm_ids):
        violations.append(
            Violation("assign-once", f"vm {vm_id}", "assignment for unknown vm")
        )

    node_cpu: dict[int, int] = {}
    node_mem: dict[int, int] = {}
    for vm in vn.vms:
        if vm.id not in emb.assignment:
            continue
        node = emb.assignment[vm.id]
        node_cpu[node] = node_cpu.get(node, 0) + vm.cpu_demand
        node_mem[node] = node_mem.get(node, 0) + vm.mem_demand
    for node in sorted(node_cpu):
        if (
            node_cpu[node] > net_before.cpu_avail[node]
            or node_mem[node] > net_before.mem_avail[node]
        ):
            violations.append(
                Violation(
                    "node-capacity",
                    f"node {node}",
                    f"needs ({node_cpu[node]},{node_mem[node]}), free "
                    f"({int(net_before.cpu_avail[node])},{int(net_before.mem_avail[node])})",
                )
            )

    link_load: dict[int, int] = {}
    for vl in vn.vlinks:
        if vl.a not in emb.assignment or vl.b not in emb.assignment:
            continue
        key = (vl.a, vl.b)
        src = emb.assignment[vl.a]
        dst = emb.assignment[vl.b]
        path = emb.link_paths.get(key)
        if src == dst:
            if path:
                violations.append(
                    Violation("link-path", f"vlink {key}", "co-located but path not empty")
                )
            continue
        if path is None:
            violations.append(Violation("link-path", f"vlink {key}", "no path recorded"))
            continue
        cur = src
        broken = False
        for li in path:
            a, b = net_before.link_endpoints(li)
            if cur == a:
                cur = b
            elif cur == b:
                cur = a
            else:
                broken = True
                break
        if broken or cur != dst:
            violations.append(
                Violation("link-path", f"vlink {key}", "path does not connect assigned nodes")
            )
            continue
        for li in path:
            link_load[li] = link_load.get(li, 0) + vl.bw_demand
    for li in sorted(link_load):
        if link_load[li] > net_before.bw_avail[li]:
            a, b = net_before.link_endpoints(li)
            violations.append(
                Violation(
                    "link-bandwidth",
                    f"link ({a},{b})",
                    f"needs {link_load[li]}, free {net_before.bw_avail[li]}",
                )
            )
    return violations


# -- text format ---------------------------------------------------------
#
# vn <id> <class> <start>
# vm <id> <cpu> <mem> <class>
# vlink <i> <j> <bw>

def vn_to_text(vn: VnRequest) -> str:
    lines = [f"vn {vn.id} {int(vn.vn_class)} {vn.start!r}"]
    for vm in vn.vms:
        lines.append(f"vm {vm.id} {vm.cpu_demand} {vm.mem_demand} {int(vm.vm_class)}")
    for vl in vn.vlinks:
        lines.append(f"vlink {vl.a} {vl.b} {vl.bw_demand}")
    return "\n".join(lines) + "\n"


def vn_from_text(text: str) -> VnRequest:
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines or not lines[0].startswith("vn "):
        raise VnesimError("vn text must start with a 'vn' header")
    head = lines[0].split()
    vn_id, start = int(head[1]), float(head[3])
    vms: list[VirtualMachine] = []
    vlinks: list[VirtualLink] = []
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "vm":
            vms.append(
                VirtualMachine(
                    id=int(parts[1]),
                    cpu_demand=int(parts[2]),
                    mem_demand=int(parts[3]),
                    vm_class=DelayClass(int(parts[4])),
                    start=start,
                )
            )
        elif parts[0] == "vlink":
            a, b = sorted((int(parts[1]), int(parts[2])))
            vlinks.append(VirtualLink(a, b, int(parts[3])))
        else:
            raise VnesimError(f"unexpected line in vn text: {line}")
    return VnRequest(id=vn_id, vms=vms, vlinks=vlinks, start=start)
