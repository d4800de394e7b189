"""Greedy policy execution induced by a value function.

Two modes: plain greedy descent (argmin V over successor states, first tie
wins) and cycle avoidance (best successor not visited earlier in the run;
failing when every child was already visited). All failures are trace
outcomes, never exceptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .grounding import GroundAction, State, StateModel
from .pddl import Instance
from .state_space import TransitionSystem

MODES = ("plain", "cycle-avoid")
OUTCOMES = ("solved", "step-limit", "stuck", "cycle")

TRACE_FORMAT = "gnnplan-trace 1"


@dataclass
class PolicyStep:
    state: State
    action: GroundAction
    value: float  # V of the successor the action leads to


@dataclass
class PolicyTrace:
    instance_id: str
    domain: str
    mode: str
    steps: list[PolicyStep]
    outcome: str
    eval_seed: int | None = None

    @property
    def plan_length(self) -> int:
        return len(self.steps)


def _select(
    value_fn: Callable[[State], float],
    successors: list[tuple[GroundAction, State]],
    visited: set[State] | None,
) -> tuple[GroundAction, State, float] | None:
    best: tuple[GroundAction, State, float] | None = None
    for action, succ in successors:
        if visited is not None and succ in visited:
            continue
        v = value_fn(succ)
        if best is None or v < best[2]:
            best = (action, succ, v)
    return best


def greedy_step(
    value_fn: Callable[[State], float],
    state: State,
    visited: set[State] | None = None,
) -> GroundAction | None:
    """The greedy action at ``state``, or None on failure.

    None means either no applicable action exists or (when ``visited`` is
    given) every successor was already visited.
    """
    sel = _select(value_fn, state.model.successors(state), visited)
    return sel[0] if sel is not None else None


def execute(
    value_fn: Callable[[State], float],
    task: Instance | StateModel,
    mode: str = "plain",
    step_limit: int = 1000,
    eval_seed: int | None = None,
    domain: str | None = None,
) -> PolicyTrace:
    """Run the greedy policy from the initial state until goal or failure.

    The goal test precedes action selection, so a goal initial state yields
    a solved trace of length 0. ``eval_seed`` is recorded in the trace for
    reproducibility; the value function itself must already be deterministic.
    """
    if mode not in MODES:
        raise ValueError(f"unknown policy mode {mode!r}")
    model = task if isinstance(task, StateModel) else StateModel(task)
    state = model.init
    visited: set[State] | None = {state} if mode == "cycle-avoid" else None
    steps: list[PolicyStep] = []
    while True:
        if model.is_goal(state):
            outcome = "solved"
            break
        if len(steps) >= step_limit:
            outcome = "step-limit"
            break
        successors = model.successors(state)
        if not successors:
            outcome = "stuck"
            break
        sel = _select(value_fn, successors, visited)
        if sel is None:
            outcome = "cycle"
            break
        action, succ, value = sel
        steps.append(PolicyStep(state, action, value))
        state = succ
        if visited is not None:
            visited.add(succ)
    return PolicyTrace(
        instance_id=model.instance.name,
        domain=model.domain.name if domain is None else domain,
        mode=mode,
        steps=steps,
        outcome=outcome,
        eval_seed=eval_seed,
    )


def table_value_fn(ts: TransitionSystem) -> Callable[[State], float]:
    """Exact V* lookup over a fully expanded system; unsolvable states map
    to infinity. Raises KeyError for states outside the system."""
    if ts.vstar is None:
        raise ValueError("transition system has no V* labels; run compute_vstar first")
    values = {
        s: (math.inf if v is None else float(v)) for s, v in zip(ts.states, ts.vstar)
    }

    def fn(state: State) -> float:
        try:
            return values[state]
        except KeyError:
            raise KeyError("state is not part of the expanded transition system") from None

    return fn


def write_trace(trace: PolicyTrace, path: str, include_states: bool = False) -> None:
    """Structured text export; states as atom lists only when asked."""
    lines = [
        TRACE_FORMAT,
        f"instance {trace.instance_id}",
        f"domain {trace.domain}",
        f"mode {trace.mode}",
        f"eval-seed {'-' if trace.eval_seed is None else trace.eval_seed}",
        f"outcome {trace.outcome}",
        f"plan-length {trace.plan_length}",
    ]
    for i, step in enumerate(trace.steps, start=1):
        lines.append(f"step {i} {step.action.name} {step.value:.6f}")
        if include_states:
            lines.append("state " + " ".join(str(a) for a in step.state.canonical))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


@dataclass
class TraceRecord:
    """The part of a trace the report needs; readable back from trace files."""

    instance_id: str
    domain: str
    mode: str
    outcome: str
    plan_length: int
    eval_seed: int | None = None
    actions: list[str] = field(default_factory=list)
    states: list[list[str]] | None = None


def read_trace(path: str) -> TraceRecord:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or lines[0] != TRACE_FORMAT:
        raise ValueError(f"{path}: not a {TRACE_FORMAT!r} file")
    fields: dict[str, str] = {}
    actions: list[str] = []
    states: list[list[str]] = []
    for ln in lines[1:]:
        key, rest = ln.split(" ", 1)
        if key == "step":
            actions.append(rest.split(" ")[1])
        elif key == "state":
            states.append(rest.split(" "))
        else:
            fields[key] = rest
    seed = fields.get("eval-seed", "-")
    return TraceRecord(
        instance_id=fields["instance"],
        domain=fields["domain"],
        mode=fields["mode"],
        outcome=fields["outcome"],
        plan_length=int(fields["plan-length"]),
        eval_seed=None if seed == "-" else int(seed),
        actions=actions,
        states=states or None,
    )
