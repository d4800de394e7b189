"""Shared corpus builders and oracles for the test suite."""

from collections import deque

import pytest

from gnnplan import benchmarks, pddl, state_space
from gnnplan.grounding import StateModel


def parse_pair(domain_text: str, instance_text: str, name: str = "test"):
    domain = pddl.parse_domain(domain_text, f"{name}-domain.pddl")
    instance = pddl.parse_instance(instance_text, domain, f"{name}-instance.pddl")
    return domain, instance


def gripper(name: str, balls: int, grippers: int = 2) -> pddl.Instance:
    domain = pddl.parse_domain(benchmarks.gripper_domain(), "gripper.pddl")
    return pddl.parse_instance(
        benchmarks.gripper_instance(name, balls, grippers), domain, f"{name}.pddl"
    )


def blocks(name: str, init_towers, goal_towers) -> pddl.Instance:
    domain = pddl.parse_domain(benchmarks.blocks_domain(), "blocks.pddl")
    return pddl.parse_instance(
        benchmarks.blocks_instance(name, init_towers, goal_towers), domain, f"{name}.pddl"
    )


def delivery(name: str, rows: int, cols: int, packages, target) -> pddl.Instance:
    domain = pddl.parse_domain(benchmarks.delivery_domain(), "delivery.pddl")
    return pddl.parse_instance(
        benchmarks.delivery_instance(name, rows, cols, packages, target),
        domain,
        f"{name}.pddl",
    )


def spanner(name: str, locations: int, spanner_at: int = 1, nuts: int = 1) -> pddl.Instance:
    domain = pddl.parse_domain(benchmarks.spanner_domain(), "spanner.pddl")
    return pddl.parse_instance(
        benchmarks.spanner_instance(name, locations, spanner_at, nuts), domain, f"{name}.pddl"
    )


def logistics(name: str, cities: int, locations_per_city: int, packages) -> pddl.Instance:
    domain = pddl.parse_domain(benchmarks.logistics_domain(), "logistics.pddl")
    return pddl.parse_instance(
        benchmarks.logistics_instance(name, cities, locations_per_city, packages),
        domain,
        f"{name}.pddl",
    )


def tiny_corpus() -> list[pddl.Instance]:
    """Small solvable instances of three domains, all fully expandable."""
    return [
        gripper("gripper-b1", 1),
        gripper("gripper-b2", 2),
        gripper("gripper-b3", 3),
        blocks("blocks-3", [["a", "b", "c"]], [["c", "b", "a"]]),
        blocks("blocks-4", [["a", "b"], ["c", "d"]], [["d", "c", "b", "a"]]),
        delivery("delivery-1", 2, 2, [(1, 1)], (0, 0)),
        delivery("delivery-2", 2, 2, [(1, 1), (0, 1)], (0, 0)),
    ]


def expanded(instance: pddl.Instance, cap: int = 200000) -> state_space.TransitionSystem:
    return state_space.compute_vstar(state_space.expand(instance, cap))


def bfs_goal_distance(model: StateModel) -> int | None:
    """Independent forward breadth-first search from the initial state."""
    start = model.init
    if model.is_goal(start):
        return 0
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        state, dist = frontier.popleft()
        for _, succ in model.successors(state):
            if succ in seen:
                continue
            if model.is_goal(succ):
                return dist + 1
            seen.add(succ)
            frontier.append((succ, dist + 1))
    return None


@pytest.fixture(scope="session")
def gripper_domain():
    return pddl.parse_domain(benchmarks.gripper_domain(), "gripper.pddl")


@pytest.fixture(scope="session")
def blocks_domain():
    return pddl.parse_domain(benchmarks.blocks_domain(), "blocks.pddl")


@pytest.fixture(scope="session")
def logistics_domain():
    return pddl.parse_domain(benchmarks.logistics_domain(), "logistics.pddl")
