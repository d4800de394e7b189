"""Generators for the PDDL domains used in training and evaluation.

These are reconstructions of the classical benchmark encodings (untyped,
positive STRIPS with unary type predicates), sized by parameters so tests
and run configurations can produce instances at desk scale.
"""

from __future__ import annotations


def gripper_domain() -> str:
    return """
(define (domain gripper)
  (:requirements :strips)
  (:predicates (room ?r) (ball ?b) (gripper ?g)
               (at-robby ?r) (at ?b ?r) (free ?g) (carry ?b ?g))
  (:action move
    :parameters (?from ?to)
    :precondition (and (room ?from) (room ?to) (at-robby ?from))
    :effect (and (at-robby ?to) (not (at-robby ?from))))
  (:action pick
    :parameters (?obj ?room ?gripper)
    :precondition (and (ball ?obj) (room ?room) (gripper ?gripper)
                       (at ?obj ?room) (at-robby ?room) (free ?gripper))
    :effect (and (carry ?obj ?gripper) (not (at ?obj ?room)) (not (free ?gripper))))
  (:action drop
    :parameters (?obj ?room ?gripper)
    :precondition (and (ball ?obj) (room ?room) (gripper ?gripper)
                       (carry ?obj ?gripper) (at-robby ?room))
    :effect (and (at ?obj ?room) (free ?gripper) (not (carry ?obj ?gripper)))))
"""


def gripper_instance(name: str, balls: int, grippers: int = 1) -> str:
    """All balls start in rooma with the robot; goal is all balls in roomb."""
    gripper_names = ["left", "right"] + [f"grip{i}" for i in range(3, grippers + 1)]
    gripper_names = gripper_names[:grippers]
    ball_names = [f"ball{i}" for i in range(1, balls + 1)]
    objects = " ".join(["rooma", "roomb"] + ball_names + gripper_names)
    init = ["(room rooma)", "(room roomb)", "(at-robby rooma)"]
    init += [f"(ball {b})" for b in ball_names]
    init += [f"(at {b} rooma)" for b in ball_names]
    init += [f"(gripper {g})" for g in gripper_names]
    init += [f"(free {g})" for g in gripper_names]
    goal = [f"(at {b} roomb)" for b in ball_names]
    return _problem(name, "gripper", objects, init, goal)


def blocks_domain() -> str:
    return """
(define (domain blocks)
  (:requirements :strips)
  (:predicates (on ?x ?y) (ontable ?x) (clear ?x) (handempty) (holding ?x))
  (:action pick-up
    :parameters (?x)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (not (ontable ?x)) (not (clear ?x)) (not (handempty)) (holding ?x)))
  (:action put-down
    :parameters (?x)
    :precondition (holding ?x)
    :effect (and (not (holding ?x)) (clear ?x) (handempty) (ontable ?x)))
  (:action stack
    :parameters (?x ?y)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (not (holding ?x)) (not (clear ?y)) (clear ?x) (handempty) (on ?x ?y)))
  (:action unstack
    :parameters (?x ?y)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (clear ?x)) (not (handempty)) (not (on ?x ?y)))))
"""


def blocks_instance(name: str, init_towers: list[list[str]], goal_towers: list[list[str]]) -> str:
    """Towers are listed bottom-up; the goal constrains only on() pairs."""
    blocks = sorted(b for tower in init_towers for b in tower)
    init = ["(handempty)"]
    for tower in init_towers:
        init.append(f"(ontable {tower[0]})")
        init += [f"(on {upper} {lower})" for lower, upper in zip(tower, tower[1:])]
        init.append(f"(clear {tower[-1]})")
    goal = []
    for tower in goal_towers:
        goal += [f"(on {upper} {lower})" for lower, upper in zip(tower, tower[1:])]
    return _problem(name, "blocks", " ".join(blocks), init, goal)


def delivery_domain() -> str:
    return """
(define (domain delivery)
  (:requirements :strips)
  (:predicates (cell ?c) (package ?p) (truck ?t) (adjacent ?c1 ?c2)
               (at ?x ?c) (in ?p ?t) (empty ?t))
  (:action move
    :parameters (?t ?from ?to)
    :precondition (and (truck ?t) (cell ?from) (cell ?to)
                       (adjacent ?from ?to) (at ?t ?from))
    :effect (and (at ?t ?to) (not (at ?t ?from))))
  (:action pick
    :parameters (?p ?t ?c)
    :precondition (and (package ?p) (truck ?t) (cell ?c)
                       (at ?p ?c) (at ?t ?c) (empty ?t))
    :effect (and (in ?p ?t) (not (at ?p ?c)) (not (empty ?t))))
  (:action drop
    :parameters (?p ?t ?c)
    :precondition (and (package ?p) (truck ?t) (cell ?c) (in ?p ?t) (at ?t ?c))
    :effect (and (at ?p ?c) (empty ?t) (not (in ?p ?t)))))
"""


def delivery_instance(
    name: str, rows: int, cols: int, packages: list[tuple[int, int]], target: tuple[int, int]
) -> str:
    """Grid world; one truck starts at cell (0, 0), packages go to ``target``."""

    def cell(r: int, c: int) -> str:
        return f"c{r}-{c}"

    cells = [cell(r, c) for r in range(rows) for c in range(cols)]
    pkg_names = [f"p{i}" for i in range(1, len(packages) + 1)]
    init = [f"(cell {c})" for c in cells]
    for r in range(rows):
        for c in range(cols):
            if r + 1 < rows:
                init += [f"(adjacent {cell(r, c)} {cell(r + 1, c)})",
                         f"(adjacent {cell(r + 1, c)} {cell(r, c)})"]
            if c + 1 < cols:
                init += [f"(adjacent {cell(r, c)} {cell(r, c + 1)})",
                         f"(adjacent {cell(r, c + 1)} {cell(r, c)})"]
    init += ["(truck t1)", f"(at t1 {cell(0, 0)})", "(empty t1)"]
    for p, (r, c) in zip(pkg_names, packages):
        init += [f"(package {p})", f"(at {p} {cell(r, c)})"]
    goal = [f"(at {p} {cell(*target)})" for p in pkg_names]
    objects = " ".join(cells + pkg_names + ["t1"])
    return _problem(name, "delivery", objects, init, goal)


def spanner_domain() -> str:
    """Chain-walk variant: the worker may walk against the link direction,
    so no state is a dead end."""
    return """
(define (domain spanner)
  (:requirements :strips)
  (:predicates (location ?l) (man ?m) (spanner ?s) (nut ?n) (link ?l1 ?l2)
               (at ?x ?l) (carrying ?m ?s) (usable ?s) (loose ?n) (tightened ?n))
  (:action walk
    :parameters (?from ?to ?m)
    :precondition (and (man ?m) (location ?from) (location ?to)
                       (link ?from ?to) (at ?m ?from))
    :effect (and (at ?m ?to) (not (at ?m ?from))))
  (:action walk-back
    :parameters (?from ?to ?m)
    :precondition (and (man ?m) (location ?from) (location ?to)
                       (link ?to ?from) (at ?m ?from))
    :effect (and (at ?m ?to) (not (at ?m ?from))))
  (:action pickup
    :parameters (?s ?m ?l)
    :precondition (and (spanner ?s) (man ?m) (location ?l) (at ?m ?l) (at ?s ?l))
    :effect (and (carrying ?m ?s) (not (at ?s ?l))))
  (:action tighten
    :parameters (?n ?s ?m ?l)
    :precondition (and (nut ?n) (spanner ?s) (man ?m) (location ?l)
                       (at ?m ?l) (at ?n ?l) (carrying ?m ?s) (usable ?s) (loose ?n))
    :effect (and (tightened ?n) (not (loose ?n)) (not (usable ?s)))))
"""


def spanner_instance(
    name: str, locations: int, spanner_at: int = 1, nuts: int = 1
) -> str:
    """Directed chain l1 -> ... -> lN; worker at l1, nuts at lN."""
    locs = [f"l{i}" for i in range(1, locations + 1)]
    nut_names = [f"nut{i}" for i in range(1, nuts + 1)]
    spanner_names = [f"spanner{i}" for i in range(1, nuts + 1)]
    init = [f"(location {l})" for l in locs]
    init += [f"(link {a} {b})" for a, b in zip(locs, locs[1:])]
    init += ["(man bob)", f"(at bob {locs[0]})"]
    for s in spanner_names:
        init += [f"(spanner {s})", f"(usable {s})", f"(at {s} l{spanner_at})"]
    for n in nut_names:
        init += [f"(nut {n})", f"(loose {n})", f"(at {n} {locs[-1]})"]
    goal = [f"(tightened {n})" for n in nut_names]
    objects = " ".join(locs + ["bob"] + spanner_names + nut_names)
    return _problem(name, "spanner", objects, init, goal)


def logistics_domain() -> str:
    return """
(define (domain logistics)
  (:requirements :strips)
  (:predicates (package ?p) (truck ?t) (airplane ?a) (location ?l) (airport ?l)
               (city ?c) (in-city ?l ?c) (at ?x ?l) (in ?p ?v))
  (:action load-truck
    :parameters (?p ?t ?l)
    :precondition (and (package ?p) (truck ?t) (location ?l) (at ?p ?l) (at ?t ?l))
    :effect (and (in ?p ?t) (not (at ?p ?l))))
  (:action unload-truck
    :parameters (?p ?t ?l)
    :precondition (and (package ?p) (truck ?t) (location ?l) (in ?p ?t) (at ?t ?l))
    :effect (and (at ?p ?l) (not (in ?p ?t))))
  (:action load-airplane
    :parameters (?p ?a ?l)
    :precondition (and (package ?p) (airplane ?a) (airport ?l) (at ?p ?l) (at ?a ?l))
    :effect (and (in ?p ?a) (not (at ?p ?l))))
  (:action unload-airplane
    :parameters (?p ?a ?l)
    :precondition (and (package ?p) (airplane ?a) (airport ?l) (in ?p ?a) (at ?a ?l))
    :effect (and (at ?p ?l) (not (in ?p ?a))))
  (:action drive-truck
    :parameters (?t ?from ?to ?c)
    :precondition (and (truck ?t) (location ?from) (location ?to) (city ?c)
                       (in-city ?from ?c) (in-city ?to ?c) (at ?t ?from))
    :effect (and (at ?t ?to) (not (at ?t ?from))))
  (:action fly-airplane
    :parameters (?a ?from ?to)
    :precondition (and (airplane ?a) (airport ?from) (airport ?to) (at ?a ?from))
    :effect (and (at ?a ?to) (not (at ?a ?from)))))
"""


def logistics_instance(
    name: str,
    cities: int,
    locations_per_city: int,
    packages: list[tuple[int, int, int, int]],
    airplanes: int = 1,
) -> str:
    """Each city has one airport (location 0), one truck, and the listed
    packages as (from-city, from-loc, to-city, to-loc) tuples."""

    def loc(c: int, l: int) -> str:
        return f"c{c}l{l}"

    city_names = [f"city{c}" for c in range(cities)]
    init = []
    objects = list(city_names)
    for c in range(cities):
        init.append(f"(city city{c})")
        for l in range(locations_per_city):
            objects.append(loc(c, l))
            init += [f"(location {loc(c, l)})", f"(in-city {loc(c, l)} city{c})"]
        init.append(f"(airport {loc(c, 0)})")
        objects.append(f"truck{c}")
        init += [f"(truck truck{c})", f"(at truck{c} {loc(c, 0)})"]
    for a in range(airplanes):
        objects.append(f"plane{a}")
        init += [f"(airplane plane{a})", f"(at plane{a} {loc(0, 0)})"]
    goal = []
    for i, (fc, fl, tc, tl) in enumerate(packages):
        p = f"pkg{i + 1}"
        objects.append(p)
        init += [f"(package {p})", f"(at {p} {loc(fc, fl)})"]
        goal.append(f"(at {p} {loc(tc, tl)})")
    return _problem(name, "logistics", " ".join(objects), init, goal)


def _problem(name: str, domain: str, objects: str, init: list[str], goal: list[str]) -> str:
    lines = [
        f"(define (problem {name})",
        f"  (:domain {domain})",
        f"  (:objects {objects})",
        "  (:init",
    ]
    lines += [f"    {a}" for a in init]
    lines.append("  )")
    lines.append("  (:goal (and " + " ".join(goal) + "))")
    lines.append(")")
    return "\n".join(lines) + "\n"
