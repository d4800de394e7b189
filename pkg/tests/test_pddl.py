"""Frontend tests: parsing, validation, diagnostics, round-trips."""

import re

import pytest

from conftest import gripper, parse_pair
from gnnplan import benchmarks, pddl

MINI_DOMAIN = """
(define (domain mini)
  (:requirements :strips)
  (:predicates (on ?x ?y))
  (:action stack
    :parameters (?x ?y)
    :precondition (on ?x ?y)
    :effect (not (on ?x ?y))))
"""


def test_minimal_domain_counts():
    dom = pddl.parse_domain(MINI_DOMAIN, "mini.pddl")
    assert len(dom.predicates) == 1
    assert len(dom.schemas) == 1
    assert dom.predicate["on"].arity == 2
    assert dom.schema["stack"].parameters == ("?x", "?y")


def test_unknown_predicate_in_effect():
    text = MINI_DOMAIN.replace("(not (on ?x ?y))", "(clear ?x)")
    with pytest.raises(pddl.ParseError) as err:
        pddl.parse_domain(text, "mini.pddl")
    assert "unknown predicate" in str(err.value)


def test_blocks_domain_hand_count():
    dom = pddl.parse_domain(benchmarks.blocks_domain(), "blocks.pddl")
    assert {p.name for p in dom.predicates} == {"on", "ontable", "clear", "holding", "handempty"}
    assert {s.name for s in dom.schemas} == {"pick-up", "put-down", "stack", "unstack"}
    assert len(dom.schemas) == 4


def test_instance_object_count():
    dom_text = """
(define (domain g)
  (:requirements :strips)
  (:predicates (at-robby ?r) (at ?b ?r) (free ?g) (carry ?b ?g)))
"""
    inst_text = """
(define (problem g1)
  (:domain g)
  (:objects roomA roomB ball1 left)
  (:init (at-robby roomA) (at ball1 roomA) (free left))
  (:goal (at ball1 roomB)))
"""
    dom, inst = parse_pair(dom_text, inst_text)
    assert len(inst.objects) == 4
    assert "rooma" in inst.objects  # names are normalized to lower case
    assert pddl.parse_atom("at-robby(rooma)") in inst.init
    assert inst.goal == frozenset({pddl.parse_atom("at(ball1,roomb)")})


def test_empty_goal_is_valid():
    dom_text = "(define (domain e) (:requirements :strips) (:predicates (p ?x)))"
    inst_text = "(define (problem e1) (:domain e) (:objects a) (:init (p a)) (:goal (and)))"
    _, inst = parse_pair(dom_text, inst_text)
    assert inst.goal == frozenset()


def test_undeclared_object_rejected():
    dom_text = "(define (domain e) (:requirements :strips) (:predicates (p ?x)))"
    inst_text = "(define (problem e1) (:domain e) (:objects a) (:init (p b)) (:goal (and)))"
    with pytest.raises(pddl.ParseError) as err:
        parse_pair(dom_text, inst_text)
    assert "undeclared object" in str(err.value)


def test_goal_with_unknown_predicate_rejected():
    dom_text = "(define (domain e) (:requirements :strips) (:predicates (p ?x)))"
    inst_text = "(define (problem e1) (:domain e) (:objects a) (:init) (:goal (q a)))"
    with pytest.raises(pddl.ParseError) as err:
        parse_pair(dom_text, inst_text)
    assert "unknown predicate" in str(err.value)


def test_validate_clean_pair():
    inst = gripper("g2", 2)
    assert pddl.validate(inst.domain, inst) == []


def test_validate_accepts_self_loop_goal():
    dom_text = "(define (domain s) (:requirements :strips) (:predicates (on ?x ?y)))"
    inst_text = "(define (problem s1) (:domain s) (:objects a) (:init) (:goal (on a a)))"
    dom, inst = parse_pair(dom_text, inst_text)
    assert pddl.validate(dom, inst) == []


def test_validate_reports_arity_mismatch():
    dom_text = "(define (domain s) (:requirements :strips) (:predicates (on ?x ?y)))"
    inst_text = "(define (problem s1) (:domain s) (:objects a b c) (:init) (:goal (on a b)))"
    dom, inst = parse_pair(dom_text, inst_text)
    broken = pddl.Instance(
        name=inst.name,
        domain=dom,
        objects=inst.objects,
        init=inst.init,
        goal=frozenset({pddl.Atom("on", ("a", "b", "c"))}),
    )
    diags = pddl.validate(dom, broken)
    assert len(diags) == 1
    assert "arity" in diags[0].message


def test_diagnostic_position_format():
    bad = "(define (domain d)\n  (:requirements :adl))"
    with pytest.raises(pddl.ParseError) as err:
        pddl.parse_domain(bad, "bad.pddl")
    assert re.match(r"^bad\.pddl:2:\d+: unsupported: ", str(err.value))


def test_equality_precondition_rejected():
    text = MINI_DOMAIN.replace("(on ?x ?y)\n    :effect", "(and (on ?x ?y) (= ?x ?y))\n    :effect")
    with pytest.raises(pddl.ParseError) as err:
        pddl.parse_domain(text, "mini.pddl")
    assert "equality" in str(err.value)


def test_negative_precondition_rejected():
    text = MINI_DOMAIN.replace(
        ":precondition (on ?x ?y)", ":precondition (not (on ?x ?y))"
    )
    with pytest.raises(pddl.ParseError) as err:
        pddl.parse_domain(text, "mini.pddl")
    assert "negative" in str(err.value)


def test_disjunctive_precondition_rejected():
    text = MINI_DOMAIN.replace(
        ":precondition (on ?x ?y)", ":precondition (or (on ?x ?y) (on ?y ?x))"
    )
    with pytest.raises(pddl.ParseError):
        pddl.parse_domain(text, "mini.pddl")


def test_unbound_effect_variable_rejected():
    text = MINI_DOMAIN.replace("(not (on ?x ?y))", "(on ?x ?z)")
    with pytest.raises(pddl.ParseError) as err:
        pddl.parse_domain(text, "mini.pddl")
    assert "?z" in str(err.value)


def test_constant_in_schema_rejected():
    text = MINI_DOMAIN.replace("(not (on ?x ?y))", "(on ?x table)")
    with pytest.raises(pddl.ParseError):
        pddl.parse_domain(text, "mini.pddl")


def test_overlapping_add_delete_rejected():
    text = MINI_DOMAIN.replace("(not (on ?x ?y))", "(and (on ?x ?y) (not (on ?x ?y)))")
    with pytest.raises(pddl.ParseError):
        pddl.parse_domain(text, "mini.pddl")


def test_duplicate_predicate_rejected():
    text = MINI_DOMAIN.replace("(:predicates (on ?x ?y))", "(:predicates (on ?x ?y) (on ?z))")
    with pytest.raises(pddl.ParseError) as err:
        pddl.parse_domain(text, "mini.pddl")
    assert "duplicate" in str(err.value)


def test_unsupported_requirement_rejected():
    text = MINI_DOMAIN.replace(":strips", ":strips :conditional-effects")
    with pytest.raises(pddl.ParseError) as err:
        pddl.parse_domain(text, "mini.pddl")
    assert "requirement" in str(err.value)


def test_typing_compiles_to_unary_predicates():
    dom_text = """
(define (domain typed)
  (:requirements :strips :typing)
  (:types block - object table - surface surface - object)
  (:predicates (on ?x ?y))
  (:action put
    :parameters (?b - block ?s - surface)
    :precondition (and)
    :effect (on ?b ?s)))
"""
    inst_text = """
(define (problem t1)
  (:domain typed)
  (:objects b1 - block t1 - table)
  (:init)
  (:goal (on b1 t1)))
"""
    dom, inst = parse_pair(dom_text, inst_text)
    names = {p.name for p in dom.predicates}
    assert {"block", "table", "surface"} <= names
    # declared parameter types become unary precondition atoms
    put = dom.schema["put"]
    assert pddl.Atom("block", ("?b",)) in put.precondition
    assert pddl.Atom("surface", ("?s",)) in put.precondition
    # typed objects seed init with their type and all ancestors below object
    assert pddl.Atom("block", ("b1",)) in inst.init
    assert pddl.Atom("table", ("t1",)) in inst.init
    assert pddl.Atom("surface", ("t1",)) in inst.init
    assert pddl.Atom("object", ("t1",)) not in inst.init


def test_type_cycle_rejected():
    dom_text = """
(define (domain c)
  (:requirements :strips :typing)
  (:types a - b b - a)
  (:predicates (p ?x)))
"""
    with pytest.raises(pddl.ParseError):
        pddl.parse_domain(dom_text, "c.pddl")


def test_instance_domain_name_checked():
    dom = pddl.parse_domain(MINI_DOMAIN, "mini.pddl")
    text = "(define (problem x) (:domain other) (:objects a) (:init) (:goal (and)))"
    with pytest.raises(pddl.ParseError):
        pddl.parse_instance(text, dom, "x.pddl")


def test_round_trip_all_benchmark_domains():
    corpora = [
        (benchmarks.gripper_domain(), benchmarks.gripper_instance("g", 2)),
        (
            benchmarks.blocks_domain(),
            benchmarks.blocks_instance("b", [["a", "b"], ["c"]], [["c", "b", "a"]]),
        ),
        (
            benchmarks.delivery_domain(),
            benchmarks.delivery_instance("d", 2, 2, [(1, 1)], (0, 0)),
        ),
        (benchmarks.spanner_domain(), benchmarks.spanner_instance("s", 4)),
        (
            benchmarks.logistics_domain(),
            benchmarks.logistics_instance("l", 2, 2, [(0, 1, 1, 1)]),
        ),
    ]
    for dom_text, inst_text in corpora:
        dom, inst = parse_pair(dom_text, inst_text)
        dom2 = pddl.parse_domain(pddl.pretty_print_domain(dom), "rt-domain.pddl")
        assert dom2 == dom
        inst2 = pddl.parse_instance(pddl.pretty_print_instance(inst), dom, "rt-instance.pddl")
        assert inst2 == inst


def test_parsing_is_total_on_corrupted_inputs():
    text = benchmarks.gripper_domain()
    for cut in range(0, len(text), 37):
        try:
            pddl.parse_domain(text[:cut] + text[cut + 3 :], "corrupt.pddl")
        except pddl.ParseError as exc:
            assert str(exc.diagnostic) == str(exc)
        # any other exception type fails the test


def test_atom_text_round_trip():
    for text in ("on(a,b)", "handempty()", "at(ball1,rooma)"):
        atom = pddl.parse_atom(text)
        assert str(atom) == text
        assert pddl.parse_atom(str(atom)) == atom


def test_atom_ordering_groups_by_predicate():
    atoms = [pddl.parse_atom(t) for t in ("on(b,a)", "at(x,y)", "on(a,b)", "clear(a)")]
    ordered = sorted(atoms)
    assert [a.predicate for a in ordered] == ["at", "clear", "on", "on"]
