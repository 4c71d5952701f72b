"""Shared fixtures: the default end-to-end run (computed once per session)
and the two-server motivating example."""

import pytest

from vnesim.config import ExperimentConfig
from vnesim.simulation import run_pipeline
from vnesim.substrate import NodeKind, SubstrateNetwork, SubstrateNode
from vnesim.virtual import DelayClass, VirtualMachine, VnRequest


@pytest.fixture(scope="session")
def default_pipeline():
    """Full pipeline on the default workload (15000 requests, seed 0)."""
    return run_pipeline(ExperimentConfig(seed=0))


def two_server_network() -> SubstrateNetwork:
    """Two machines: 14/12 cpu units, 150 memory units each, one link."""
    net = SubstrateNetwork(
        [
            SubstrateNode(0, cpu_capacity=14, mem_capacity=150, clock_avail=2000, kind=NodeKind.CPU_RICH),
            SubstrateNode(1, cpu_capacity=12, mem_capacity=150, clock_avail=2000, kind=NodeKind.MEM_RICH),
        ]
    )
    net.add_link(0, 1, 1000)
    return net


def single_vm_request(vn_id: int, cpu: int, mem: int, start: float = 0.0) -> VnRequest:
    vm = VirtualMachine(id=0, cpu_demand=cpu, mem_demand=mem, vm_class=DelayClass.MODERATE, start=start)
    return VnRequest(id=vn_id, vms=[vm], vlinks=[], start=start)


# Demands of the four initial requests and the follow-up request.
TWO_SERVER_DEMANDS = [(5, 20), (3, 65), (5, 13), (2, 83)]
FOLLOW_UP_DEMAND = (5, 36)
# node assignments per placement style for requests 1..4
UNEVEN_PLACEMENT = [0, 1, 0, 1]
EVEN_PLACEMENT = [0, 0, 1, 1]


@pytest.fixture
def two_server_example():
    net = two_server_network()
    requests = [
        single_vm_request(i + 1, cpu, mem) for i, (cpu, mem) in enumerate(TWO_SERVER_DEMANDS)
    ]
    follow_up = single_vm_request(5, *FOLLOW_UP_DEMAND)
    return net, requests, follow_up
