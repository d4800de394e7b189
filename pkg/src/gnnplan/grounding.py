"""Grounding of lifted tasks and the induced successor-state semantics.

Grounding is naive Cartesian instantiation over the instance's objects, with
an applicability filter at expansion time. Bindings whose instantiated add
and delete sets overlap (for example moving from a room to itself) denote no
coherent transition and are dropped during grounding.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

from .pddl import ActionSchema, Atom, Domain, Instance

# A ground atom is an Atom whose arguments are object names.
GroundAtom = Atom


class PreconditionError(Exception):
    """Applying an action whose precondition does not hold."""


@dataclass(frozen=True)
class GroundAction:
    """A schema instantiated with one binding, parameters in declared order."""

    schema: str
    binding: tuple[str, ...]
    precondition: frozenset[GroundAtom]
    add: frozenset[GroundAtom]
    delete: frozenset[GroundAtom]

    @property
    def name(self) -> str:
        return f"{self.schema}({','.join(self.binding)})"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class State:
    """A set of ground atoms tied to the model that produced it.

    Equality and hashing consider only the atoms, so permuted insertion
    orders compare equal; ``canonical`` gives a deterministic atom order for
    reproducible iteration and tie-breaking.
    """

    atoms: frozenset[GroundAtom]
    model: "StateModel" = field(compare=False, repr=False)

    @cached_property
    def canonical(self) -> tuple[GroundAtom, ...]:
        return tuple(sorted(self.atoms))

    def __repr__(self) -> str:
        return "State({" + ", ".join(str(a) for a in self.canonical) + "})"


def _instantiate(schema: ActionSchema, binding: tuple[str, ...]) -> GroundAction | None:
    sub = dict(zip(schema.parameters, binding))

    def ground(atoms: frozenset[Atom]) -> frozenset[GroundAtom]:
        return frozenset(Atom(a.predicate, tuple(sub[v] for v in a.args)) for a in atoms)

    add = ground(schema.add)
    delete = ground(schema.delete)
    if add & delete:
        return None
    return GroundAction(schema.name, binding, ground(schema.precondition), add, delete)


def ground_actions(domain: Domain, instance: Instance) -> list[GroundAction]:
    """All bindings of every schema, schemas in declaration order and
    bindings in lexicographic order over the sorted object names."""
    objects = instance.objects
    out: list[GroundAction] = []
    for schema in domain.schemas:
        for binding in itertools.product(objects, repeat=len(schema.parameters)):
            action = _instantiate(schema, binding)
            if action is not None:
                out.append(action)
    return out


class StateModel:
    """Ground action table plus transition semantics for one instance.

    After construction the model is read-only; states, successor queries and
    goal tests on it may run concurrently.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self.domain = instance.domain
        self.goal = instance.goal
        self.actions: tuple[GroundAction, ...] = tuple(ground_actions(self.domain, instance))
        # Actions requiring a static atom (never added or deleted by any
        # schema) that is false in init can never fire; skipping them keeps
        # successor scans linear in the useful action count.
        fluent = {a.predicate for s in self.domain.schemas for a in s.add | s.delete}
        init = frozenset(instance.init)
        self._live: tuple[GroundAction, ...] = tuple(
            ga
            for ga in self.actions
            if all(a.predicate in fluent or a in init for a in ga.precondition)
        )
        self.init = State(frozenset(instance.init), self)

    def state(self, atoms) -> State:
        return State(frozenset(atoms), self)

    def applicable(self, state: State, action: GroundAction) -> bool:
        return action.precondition <= state.atoms

    def applicable_actions(self, state: State) -> list[GroundAction]:
        return [a for a in self._live if a.precondition <= state.atoms]

    def apply(self, state: State, action: GroundAction) -> State:
        if not action.precondition <= state.atoms:
            raise PreconditionError(f"{action.name} is not applicable")
        return State((state.atoms - action.delete) | action.add, self)

    def successors(self, state: State) -> list[tuple[GroundAction, State]]:
        out = []
        for action in self._live:
            if action.precondition <= state.atoms:
                out.append((action, State((state.atoms - action.delete) | action.add, self)))
        return out

    def is_goal(self, state: State) -> bool:
        return self.goal <= state.atoms


def applicable(state: State, action: GroundAction) -> bool:
    """True iff the action's precondition holds in the state."""
    return state.model.applicable(state, action)


def apply(state: State, action: GroundAction) -> State:
    """Successor state (atoms \\ delete) | add; rejects inapplicable actions."""
    return state.model.apply(state, action)


def successors(state: State) -> list[tuple[GroundAction, State]]:
    """One (action, state) pair per applicable ground action, in fixed order."""
    return state.model.successors(state)


def is_goal(state: State) -> bool:
    """True iff the instance goal is a subset of the state's atoms."""
    return state.model.is_goal(state)
