"""Derived-atom augmentation of states and domains.

Three mechanisms extend what the value network can see: goal versions of
predicates (atoms of the goal copied into every state under a decorated
predicate name), transitive closures of binary predicates, and role
compositions (relational joins along a chain of binary predicates).

Derived atoms are recomputed from the base state after every transition,
never maintained incrementally; action schemas are untouched.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field

from .grounding import State
from .pddl import Atom, Domain, Instance, PredicateSymbol, GOAL_VERSION, DERIVED

GOAL_SUFFIX = "@"
CLOSURE_SUFFIX = "+"
COMPOSE_SEP = "."


def goal_version_name(predicate: str) -> str:
    return predicate + GOAL_SUFFIX


def closure_name(predicate: str) -> str:
    return predicate + CLOSURE_SUFFIX


def compose_name(chain: tuple[str, ...]) -> str:
    return COMPOSE_SEP.join(chain)


@dataclass(frozen=True)
class AugmentationSpec:
    """Which derived predicates to add.

    ``compositions`` entries are (chain, derived-name) pairs; chains may
    reference goal-version or closure names, which are computed first.
    """

    goal_versions: bool = True
    closures: tuple[str, ...] = ()
    compositions: tuple[tuple[tuple[str, ...], str], ...] = ()

    @staticmethod
    def from_dict(spec: dict) -> "AugmentationSpec":
        comps = tuple(
            (tuple(c["chain"]), c.get("name") or compose_name(tuple(c["chain"])))
            for c in spec.get("compositions", ())
        )
        return AugmentationSpec(
            goal_versions=bool(spec.get("goal_versions", True)),
            closures=tuple(spec.get("closures", ())),
            compositions=comps,
        )

    def to_dict(self) -> dict:
        return {
            "goal_versions": self.goal_versions,
            "closures": list(self.closures),
            "compositions": [{"chain": list(c), "name": n} for c, n in self.compositions],
        }


PRESETS: dict[str, AugmentationSpec] = {
    "blocks-above": AugmentationSpec(goal_versions=True, closures=("on",)),
    "spanner-linkplus": AugmentationSpec(goal_versions=True, closures=("link",)),
    "logistics-4comp": AugmentationSpec(
        goal_versions=True,
        compositions=(
            (("at", "in-city"), "at.in-city"),
            (("at@", "in-city"), "at@.in-city"),
            (("in", "at"), "in.at"),
            (("in", "at", "in-city"), "in.at.in-city"),
        ),
    ),
}


def augment_domain(domain: Domain, spec: AugmentationSpec) -> Domain:
    """New Domain with goal-version/derived predicate symbols appended.

    Goal versions are declared for every base predicate; closure and
    composition predicates follow in spec order. Schemas are unchanged.
    """
    predicates = list(domain.predicates)
    table = {p.name: p for p in predicates}

    def declare(sym: PredicateSymbol) -> None:
        existing = table.get(sym.name)
        if existing is not None:
            raise ValueError(f"derived predicate {sym.name!r} collides with {existing}")
        table[sym.name] = sym
        predicates.append(sym)

    if spec.goal_versions:
        for p in domain.predicates:
            declare(PredicateSymbol(goal_version_name(p.name), p.arity, GOAL_VERSION))
    for p in spec.closures:
        base = table.get(p)
        if base is None:
            raise ValueError(f"closure over unknown predicate {p!r}")
        if base.arity != 2:
            raise ValueError(f"closure over non-binary predicate {p!r} (arity {base.arity})")
        declare(PredicateSymbol(closure_name(p), 2, DERIVED))
    for chain, name in spec.compositions:
        if len(chain) < 2:
            raise ValueError(f"composition chain for {name!r} must have length >= 2")
        for p in chain:
            step = table.get(p)
            if step is None:
                raise ValueError(f"composition {name!r} references unknown predicate {p!r}")
            if step.arity != 2:
                raise ValueError(f"composition step {p!r} is not binary (arity {step.arity})")
        declare(PredicateSymbol(name, 2, DERIVED))
    return Domain(domain.name, tuple(predicates), domain.schemas, domain.types)


def add_goal_versions(state: State, instance: Instance) -> State:
    """Copy each goal atom p(o...) into the state as p@(o...)."""
    extra = {Atom(goal_version_name(a.predicate), a.args) for a in instance.goal}
    return State(state.atoms | extra, state.model)


def _closure_pairs(pairs) -> set[tuple[str, str]]:
    succ: dict[str, list[str]] = collections.defaultdict(list)
    for x, y in pairs:
        succ[x].append(y)
    closed: set[tuple[str, str]] = set()
    for source in succ:
        frontier = list(succ[source])
        reached: set[str] = set()
        while frontier:
            y = frontier.pop()
            if y in reached:
                continue
            reached.add(y)
            frontier.extend(succ.get(y, ()))
        closed.update((source, y) for y in reached)
    return closed


def transitive_closure(state: State, predicate: str, derived: str) -> State:
    """Add derived(x,y) for every directed predicate-path of length >= 1."""
    pairs = [a.args for a in state.atoms if a.predicate == predicate]
    if any(len(p) != 2 for p in pairs):
        raise ValueError(f"transitive closure needs a binary predicate, got {predicate!r}")
    extra = {Atom(derived, (x, y)) for x, y in _closure_pairs(pairs)}
    return State(state.atoms | extra, state.model)


def compose_roles(state: State, chain: tuple[str, ...], derived: str) -> State:
    """Add derived(x,z) whenever the chain relations join x to z."""
    if len(chain) < 2:
        raise ValueError("composition chain must have length >= 2")
    relations = []
    for p in chain:
        pairs = [a.args for a in state.atoms if a.predicate == p]
        if any(len(q) != 2 for q in pairs):
            raise ValueError(f"composition step {p!r} is not binary")
        relations.append(pairs)
    joined = set(relations[0])
    for pairs in relations[1:]:
        by_first: dict[str, list[str]] = collections.defaultdict(list)
        for y, z in pairs:
            by_first[y].append(z)
        joined = {(x, z) for x, y in joined for z in by_first.get(y, ())}
    extra = {Atom(derived, (x, z)) for x, z in joined}
    return State(state.atoms | extra, state.model)


class Augmenter:
    """Applies one AugmentationSpec uniformly to states of one domain.

    Augment only states you will not expand further: derived atoms are not
    tracked by action effects, so take successors on base states and augment
    each successor afterwards.
    """

    def __init__(self, domain: Domain, spec: AugmentationSpec):
        self.spec = spec
        self.domain = augment_domain(domain, spec)

    def signature(self) -> dict[str, int]:
        return self.domain.signature()

    def augment(self, state: State) -> State:
        out = state
        if self.spec.goal_versions:
            out = add_goal_versions(out, state.model.instance)
        for p in self.spec.closures:
            out = transitive_closure(out, p, closure_name(p))
        for chain, name in self.spec.compositions:
            out = compose_roles(out, chain, name)
        return out
