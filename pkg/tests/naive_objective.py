"""Independent re-derivation of the placement objective, written straight
from the program definition (indicator sums over every node/VM pair) so it
shares no code path with the library's evaluator."""


def naive_objective(weights, net_before, vn, emb) -> float:
    m = net_before.node_count
    total = 0.0
    for resource in ("cpu", "mem"):
        for i in range(m):
            for member in vn.vms:
                if emb.assignment.get(member.id) != i:
                    continue  # indicator is zero
                if resource == "cpu":
                    cap = int(net_before.cpu_capacity[i])
                    avail = int(net_before.cpu_avail[i])
                    demand = member.cpu_demand
                    weight = weights.cpu
                else:
                    cap = int(net_before.mem_capacity[i])
                    avail = int(net_before.mem_avail[i])
                    demand = member.mem_demand
                    weight = weights.mem
                total += (1.0 / m) * weight * (cap - avail + demand) / cap
    for vl in vn.vlinks:
        first = emb.assignment[vl.a]
        second = emb.assignment[vl.b]
        if first == second:
            total += 2.0 * weights.net
        else:
            route = net_before.shortest_feasible_path(first, second, vl.bw_demand)
            total += weights.net / len(route)
    return total
