"""Reachable state-space expansion, optimal goal distances, and datasets.

Training data comes from fully expanding small instances breadth-first,
labeling every state with its optimal goal distance by backward breadth-first
search, and sampling up to a per-instance cap of solvable states.
"""

from __future__ import annotations

import collections
import hashlib
import json
import random
import time
from dataclasses import dataclass, field

from .grounding import GroundAction, State, StateModel
from .pddl import Atom, Domain, Instance, parse_atom

DATASET_FORMAT = "gnnplan-dataset 1"


class CapExceededError(Exception):
    """Reachable state count exceeded the expansion cap."""

    def __init__(self, instance_id: str, cap: int):
        super().__init__(f"instance {instance_id!r}: reachable states exceed cap {cap}")
        self.instance_id = instance_id
        self.cap = cap


@dataclass
class TransitionSystem:
    """A fully expanded reachable state space.

    ``edges[i]`` lists (action, successor index) pairs in the exact order of
    the grounding successor function; ``vstar[i]`` is the optimal goal
    distance, or None for states that cannot reach a goal.
    """

    model: StateModel
    states: list[State]
    edges: list[list[tuple[GroundAction, int]]]
    goal_flags: list[bool]
    init_index: int = 0
    vstar: list[int | None] | None = None
    index: dict[State, int] = field(default_factory=dict)

    @property
    def instance_id(self) -> str:
        return self.model.instance.name

    def state_index(self, state: State) -> int:
        return self.index[state]


def _as_model(task: Instance | StateModel) -> StateModel:
    return task if isinstance(task, StateModel) else StateModel(task)


def expand(task: Instance | StateModel, state_cap: int) -> TransitionSystem:
    """Breadth-first expansion from the initial state.

    Raises CapExceededError as soon as more than ``state_cap`` distinct
    states have been discovered; training instances must fit completely.
    """
    model = _as_model(task)
    init = model.init
    states = [init]
    index = {init: 0}
    edges: list[list[tuple[GroundAction, int]]] = []
    queue = collections.deque([0])
    while queue:
        i = queue.popleft()
        out: list[tuple[GroundAction, int]] = []
        for action, succ in model.successors(states[i]):
            j = index.get(succ)
            if j is None:
                if len(states) >= state_cap:
                    raise CapExceededError(model.instance.name, state_cap)
                j = len(states)
                index[succ] = j
                states.append(succ)
                queue.append(j)
            out.append((action, j))
        edges.append(out)
    goal_flags = [model.is_goal(s) for s in states]
    return TransitionSystem(model, states, edges, goal_flags, 0, None, index)


def compute_vstar(ts: TransitionSystem) -> TransitionSystem:
    """Fill ``ts.vstar`` by backward breadth-first search from all goals."""
    n = len(ts.states)
    reverse: list[list[int]] = [[] for _ in range(n)]
    for i, out in enumerate(ts.edges):
        for _, j in out:
            reverse[j].append(i)
    vstar: list[int | None] = [None] * n
    queue = collections.deque()
    for i, is_goal in enumerate(ts.goal_flags):
        if is_goal:
            vstar[i] = 0
            queue.append(i)
    while queue:
        j = queue.popleft()
        d = vstar[j]
        assert d is not None
        for i in reverse[j]:
            if vstar[i] is None:
                vstar[i] = d + 1
                queue.append(i)
    ts.vstar = vstar
    return ts


def optimal_plan_length(
    task: Instance | StateModel,
    node_budget: int | None = None,
    time_budget: float | None = None,
) -> int | None:
    """Length of a shortest plan by forward breadth-first search.

    Returns None when a budget is exhausted or no goal is reachable; a
    budget of 0 is an immediate timeout.
    """
    start = time.monotonic()
    if node_budget is not None and node_budget <= 0:
        return None
    if time_budget is not None and time_budget <= 0:
        return None
    model = _as_model(task)
    init = model.init
    if model.is_goal(init):
        return 0
    seen = {init}
    queue = collections.deque([(init, 0)])
    while queue:
        if time_budget is not None and time.monotonic() - start > time_budget:
            return None
        state, d = queue.popleft()
        for _, succ in model.successors(state):
            if succ in seen:
                continue
            if model.is_goal(succ):
                return d + 1
            if node_budget is not None and len(seen) >= node_budget:
                return None
            seen.add(succ)
            queue.append((succ, d + 1))
    return None


@dataclass(frozen=True)
class DatasetEntry:
    instance_id: str
    state: State
    vstar: int
    is_goal: bool
    successors: tuple[State, ...]


@dataclass
class Dataset:
    """Sampled training/validation/test states with exact successor lists."""

    partition: str
    entries: list[DatasetEntry]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.partition not in ("train", "validation", "test"):
            raise ValueError(f"unknown partition tag {self.partition!r}")


def sample_dataset(
    systems: list[TransitionSystem],
    cap: int = 40000,
    seed: int = 0,
    partition: str = "train",
) -> Dataset:
    """Per instance, keep all solvable states, or a seeded uniform sample of
    ``cap`` of them when there are more; unsolvable states are dropped."""
    rng = random.Random(seed)
    entries: list[DatasetEntry] = []
    per_instance: dict[str, dict] = {}
    for ts in systems:
        if ts.vstar is None:
            compute_vstar(ts)
        assert ts.vstar is not None
        solvable = [i for i, v in enumerate(ts.vstar) if v is not None]
        kept = solvable if len(solvable) <= cap else sorted(rng.sample(solvable, cap))
        goals = 0
        for i in kept:
            is_goal = ts.goal_flags[i]
            goals += is_goal
            entries.append(
                DatasetEntry(
                    instance_id=ts.instance_id,
                    state=ts.states[i],
                    vstar=ts.vstar[i],
                    is_goal=is_goal,
                    successors=tuple(ts.states[j] for _, j in ts.edges[i]),
                )
            )
        per_instance[ts.instance_id] = {
            "reachable": len(ts.states),
            "solvable": len(solvable),
            "kept": len(kept),
            "goal_states": goals,
        }
    total = len(entries)
    goal_total = sum(1 for e in entries if e.is_goal)
    meta = {
        "cap": cap,
        "seed": seed,
        "instances": per_instance,
        "entries": total,
        "goal_ratio": (goal_total / total) if total else 0.0,
    }
    return Dataset(partition, entries, meta)


def instance_fingerprint(instance: Instance) -> str:
    """Hash of (object count, init, goal) used to enforce that no instance
    appears in more than one partition."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(len(instance.objects)).encode())
    for a in sorted(instance.init):
        h.update(str(a).encode())
    h.update(b"|goal|")
    for a in sorted(instance.goal):
        h.update(str(a).encode())
    return h.hexdigest()


def _atoms_field(atoms) -> str:
    return " ".join(str(a) for a in sorted(atoms))


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write the line-oriented dataset format (see load_dataset)."""
    instances: dict[str, Instance] = {}
    order: list[str] = []
    state_index: dict[tuple[str, State], int] = {}
    records: list[tuple[str, State, bool]] = []  # (instance id, state, is entry)

    def intern(iid: str, state: State, entry: bool) -> int:
        key = (iid, state)
        idx = state_index.get(key)
        if idx is None:
            idx = len(records)
            state_index[key] = idx
            records.append((iid, state, entry))
        elif entry and not records[idx][2]:
            records[idx] = (iid, state, True)
        return idx

    succ_refs: dict[int, list[int]] = {}
    for e in dataset.entries:
        if e.instance_id not in instances:
            instances[e.instance_id] = e.state.model.instance
            order.append(e.instance_id)
        idx = intern(e.instance_id, e.state, True)
        succ_refs[idx] = [intern(e.instance_id, s, False) for s in e.successors]

    vstar_by_key = {(e.instance_id, e.state): e.vstar for e in dataset.entries}
    lines = [DATASET_FORMAT, f"partition {dataset.partition}"]
    lines.append("meta " + json.dumps(dataset.meta, sort_keys=True))
    for iid in order:
        inst = instances[iid]
        blob = {
            "name": inst.name,
            "objects": list(inst.objects),
            "init": [str(a) for a in sorted(inst.init)],
            "goal": [str(a) for a in sorted(inst.goal)],
        }
        lines.append(f"instance {iid} " + json.dumps(blob, sort_keys=True))
    for idx, (iid, state, entry) in enumerate(records):
        vstar = vstar_by_key.get((iid, state))
        vs = "-" if vstar is None else str(vstar)
        goal = "1" if state.model.is_goal(state) else "0"
        ent = "1" if entry else "0"
        refs = " ".join(str(j) for j in succ_refs[idx]) if entry else "-"
        lines.append(f"state {iid}|{vs}|{goal}|{ent}|{_atoms_field(state.atoms)}|{refs}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(path: str, domain: Domain) -> Dataset:
    """Read a dataset written by save_dataset.

    One ``state`` record per state: instance id, V* (dash when unknown),
    goal flag, entry flag, atom list, and successor references by record
    index (dash for states only referenced as successors).
    """
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or lines[0] != DATASET_FORMAT:
        raise ValueError(f"{path}: not a {DATASET_FORMAT!r} file")
    if not lines[1].startswith("partition "):
        raise ValueError(f"{path}: missing partition tag")
    partition = lines[1].split(" ", 1)[1]
    meta: dict = {}
    models: dict[str, StateModel] = {}
    states: list[State] = []
    rows: list[tuple[str, str, str, str, str]] = []
    for ln in lines[2:]:
        kind, rest = ln.split(" ", 1)
        if kind == "meta":
            meta = json.loads(rest)
        elif kind == "instance":
            iid, blob = rest.split(" ", 1)
            spec = json.loads(blob)
            inst = Instance(
                name=spec["name"],
                domain=domain,
                objects=tuple(spec["objects"]),
                init=frozenset(parse_atom(a) for a in spec["init"]),
                goal=frozenset(parse_atom(a) for a in spec["goal"]),
            )
            models[iid] = StateModel(inst)
        elif kind == "state":
            iid, vs, goal, ent, atoms, refs = rest.split("|")
            model = models[iid]
            state = model.state(parse_atom(a) for a in atoms.split())
            states.append(state)
            rows.append((iid, vs, goal, ent, refs))
        else:
            raise ValueError(f"{path}: unknown record kind {kind!r}")
    entries: list[DatasetEntry] = []
    for state, (iid, vs, goal, ent, refs) in zip(states, rows):
        if ent != "1":
            continue
        if vs == "-":
            raise ValueError(f"{path}: entry state without V*")
        succ = tuple(states[int(j)] for j in refs.split()) if refs != "-" else ()
        entries.append(DatasetEntry(iid, state, int(vs), goal == "1", succ))
    return Dataset(partition, entries, meta)
