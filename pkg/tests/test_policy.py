"""Greedy-policy execution and trace-export tests."""

import math

import pytest

from conftest import blocks, delivery, expanded, gripper, parse_pair, spanner
from gnnplan.grounding import StateModel
from gnnplan.policy import (
    execute,
    greedy_step,
    read_trace,
    table_value_fn,
    write_trace,
)


def test_greedy_step_picks_lowest_value_child():
    inst = gripper("g", 1, grippers=1)
    model = StateModel(inst)
    succs = model.successors(model.init)
    assert len(succs) == 2
    target = succs[1][1]
    fn = lambda s: 2.5 if s == target else 4.0
    action = greedy_step(fn, model.init)
    assert action.name == succs[1][0].name


def test_greedy_step_breaks_ties_by_first_successor():
    inst = gripper("g", 1, grippers=1)
    model = StateModel(inst)
    action = greedy_step(lambda s: 2.5, model.init)
    assert action.name == model.successors(model.init)[0][0].name


def test_greedy_step_fails_when_everything_is_visited():
    inst = gripper("g", 1, grippers=1)
    model = StateModel(inst)
    visited = {s for _, s in model.successors(model.init)}
    assert greedy_step(lambda s: 0.0, model.init, visited) is None
    assert greedy_step(lambda s: 0.0, model.init, set()) is not None


def test_goal_initial_state_solves_in_zero_steps():
    dom_text = "(define (domain t) (:requirements :strips) (:predicates (p ?x)))"
    inst_text = "(define (problem t1) (:domain t) (:objects a) (:init (p a)) (:goal (p a)))"
    _, inst = parse_pair(dom_text, inst_text)
    trace = execute(lambda s: 0.0, inst, mode="plain")
    assert trace.outcome == "solved"
    assert trace.plan_length == 0


def test_vstar_lookup_solves_gripper_optimally():
    inst = gripper("g", 1, grippers=1)
    ts = expanded(inst)
    trace = execute(table_value_fn(ts), inst, mode="plain")
    assert trace.outcome == "solved"
    assert trace.plan_length == 3


def test_vstar_lookup_is_optimal_on_every_small_instance():
    corpus = [
        gripper("g2", 2, grippers=2),
        blocks("b3", [["a", "b", "c"]], [["c", "b", "a"]]),
        delivery("d1", 2, 2, [(1, 1)], (0, 0)),
        spanner("s4", 4),
    ]
    for inst in corpus:
        ts = expanded(inst)
        fn = table_value_fn(ts)
        for mode in ("plain", "cycle-avoid"):
            trace = execute(fn, inst, mode=mode)
            assert trace.outcome == "solved"
            assert trace.plan_length == ts.vstar[ts.init_index]


def test_constant_value_function_hits_step_limit_in_plain_mode():
    inst = gripper("g", 1, grippers=1)
    trace = execute(lambda s: 1.0, inst, mode="plain", step_limit=50)
    assert trace.outcome == "step-limit"
    assert trace.plan_length == 50


def test_plain_mode_never_reports_cycle():
    inst = gripper("g", 2, grippers=1)
    for fn in (lambda s: 0.0, lambda s: -float(len(s.atoms))):
        trace = execute(fn, inst, mode="plain", step_limit=30)
        assert trace.outcome in ("solved", "step-limit", "stuck")


def test_cycle_avoid_never_revisits_and_can_fail():
    inst = gripper("g", 1, grippers=1)
    trace = execute(lambda s: 1.0, inst, mode="cycle-avoid", step_limit=50)
    states = [step.state for step in trace.steps]
    assert len(set(states)) == len(states)
    assert trace.outcome in ("solved", "cycle")
    # an adversarial value function that always prefers going back fails fast
    ts = expanded(inst)
    fn = table_value_fn(ts)
    anti = lambda s: -fn(s)  # climb away from the goal
    trace2 = execute(anti, inst, mode="cycle-avoid", step_limit=50)
    assert trace2.outcome == "cycle"


def test_mode_validated():
    inst = gripper("g", 1, grippers=1)
    with pytest.raises(ValueError):
        execute(lambda s: 0.0, inst, mode="greedy")


def test_stuck_outcome_when_no_action_applies():
    dom_text = """
(define (domain dead)
  (:requirements :strips)
  (:predicates (p ?x) (q ?x) (r ?x))
  (:action go
    :parameters (?x)
    :precondition (p ?x)
    :effect (and (q ?x) (not (p ?x)))))
"""
    inst_text = "(define (problem d) (:domain dead) (:objects a) (:init (p a)) (:goal (r a)))"
    _, inst = parse_pair(dom_text, inst_text)
    trace = execute(lambda s: 0.0, inst, mode="plain")
    assert trace.outcome == "stuck"
    assert trace.plan_length == 1


def test_table_value_fn_contract():
    inst = gripper("g", 1, grippers=1)
    ts = expanded(inst)
    fn = table_value_fn(ts)
    assert fn(ts.states[ts.init_index]) == 3.0
    other = expanded(gripper("h", 2, grippers=1))
    with pytest.raises(KeyError):
        fn(other.states[0])
    unlabeled = expanded(inst)
    unlabeled.vstar = None
    with pytest.raises(ValueError):
        table_value_fn(unlabeled)


def test_unsolvable_states_value_to_infinity():
    dom_text = """
(define (domain frag)
  (:requirements :strips)
  (:predicates (whole ?x) (built ?x))
  (:action build
    :parameters (?x)
    :precondition (whole ?x)
    :effect (built ?x))
  (:action smash
    :parameters (?x)
    :precondition (whole ?x)
    :effect (not (whole ?x))))
"""
    inst_text = "(define (problem f) (:domain frag) (:objects a) (:init (whole a)) (:goal (built a)))"
    _, inst = parse_pair(dom_text, inst_text)
    ts = expanded(inst)
    fn = table_value_fn(ts)
    dead = next(s for s, v in zip(ts.states, ts.vstar) if v is None)
    assert fn(dead) == math.inf
    trace = execute(fn, inst, mode="plain")
    assert trace.outcome == "solved"
    assert trace.plan_length == 1


def test_trace_round_trip(tmp_path):
    inst = gripper("g", 2, grippers=2)
    ts = expanded(inst)
    trace = execute(table_value_fn(ts), inst, mode="cycle-avoid", eval_seed=11)
    path = tmp_path / "run.trace"
    write_trace(trace, str(path))
    record = read_trace(str(path))
    assert record.instance_id == trace.instance_id
    assert record.mode == "cycle-avoid"
    assert record.outcome == "solved"
    assert record.plan_length == trace.plan_length
    assert record.eval_seed == 11
    assert record.actions == [s.action.name for s in trace.steps]
    assert record.states is None

    verbose = tmp_path / "verbose.trace"
    write_trace(trace, str(verbose), include_states=True)
    record2 = read_trace(str(verbose))
    assert record2.actions == record.actions
    assert len(record2.states) == trace.plan_length
    text = verbose.read_text()
    assert text.splitlines()[0] == "gnnplan-trace 1"
