"""Engine tests on a toy problem that knows nothing about satellites."""

import ast
import itertools
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import agileplan.engine as engine
from agileplan.engine import (
    Callbacks,
    OpenNodes,
    SearchNode,
    choose_nodes_dfs,
    choose_nodes_objective,
    create_child_node,
    plan_it,
)


class ToyState:
    def __init__(self, picks=()):
        self.picks = list(picks)

    def copy(self):
        return ToyState(self.picks)


def toy_callbacks(rewards, forbidden=frozenset(), strategy=choose_nodes_objective, order=None, gain=True):
    """rewards[i][j]: reward of value j for variable i. A pick (i, j) after (i-1, k) is
    infeasible when (k, j) is in ``forbidden``. ``order`` re-sorts values per variable."""

    def choose_variable(node):
        i = len(node.state.picks)
        return i if i < len(rewards) else None

    def choose_value(node, var):
        vals = list(range(len(rewards[var])))
        return order(var, vals) if order else sorted(vals, key=lambda j: -rewards[var][j])

    def propagate(child, var, val):
        child.state.picks.append(val)
        child.score += rewards[var][val]

    def feasible(node):
        p = node.state.picks
        return len(p) < 2 or (p[-2], p[-1]) not in forbidden

    return Callbacks(strategy, choose_variable, choose_value, propagate, feasible,
                     value_gain=(lambda node, val: rewards[node.variable][val]) if gain else None)


def brute_force(rewards, forbidden=frozenset()):
    best = None
    for combo in itertools.product(*[range(len(r)) for r in rewards]):
        if any((a, b) in forbidden for a, b in zip(combo, combo[1:])):
            continue
        s = sum(rewards[i][j] for i, j in enumerate(combo))
        best = s if best is None or s > best else best
    return best


def node(i, score):
    return SearchNode(i, None, score=score)


def test_root_without_variables_is_returned():
    res = plan_it(ToyState(), toy_callbacks([]), beam_width=3)
    assert res.best.id == 0 and res.best.score == 0 and res.nodes_created == 1


def test_two_by_two_exhaustive_matches_enumeration():
    rewards = [[0.3, 0.5], [0.4, 0.1]]
    forbidden = {(1, 0)}
    res = plan_it(ToyState(), toy_callbacks(rewards, forbidden), beam_width=None, budget=None, exhaustive=True)
    assert res.best.score == pytest.approx(brute_force(rewards, forbidden)) == pytest.approx(0.7)
    assert res.solutions == 3


def test_objective_picks_highest_scores():
    o = OpenNodes()
    for i, s in enumerate([5, 9, 7]):
        o.add(node(i, s))
    assert [n.score for n in choose_nodes_objective(o, 2)] == [9, 7]
    assert len(o) == 1


def test_objective_ties_go_to_first_created():
    o = OpenNodes()
    for i in (3, 1, 2):
        o.add(node(i, 1.0))
    assert [n.id for n in choose_nodes_objective(o, 2)] == [1, 2]


def test_objective_wide_beam_takes_everything():
    o = OpenNodes()
    for i in range(3):
        o.add(node(i, i))
    assert len(choose_nodes_objective(o, 10)) == 3 and not o


def test_dfs_is_lifo():
    o = OpenNodes()
    for i in (1, 2, 3):
        o.add(node(i, 0))
    assert [n.id for n in choose_nodes_dfs(o, 1)] == [3]
    o.add(node(4, 0))
    assert [n.id for n in choose_nodes_dfs(o, 5)] == [4, 2, 1]


@given(st.lists(st.one_of(st.just(None), st.integers(1, 3)), max_size=40))
def test_dfs_matches_reference_stack(ops):
    """None pushes a fresh node; an integer pops that many."""
    o, stack, nid = OpenNodes(), [], 0
    for op in ops:
        if op is None:
            o.add(node(nid, 0))
            stack.append(nid)
            nid += 1
        else:
            got = [n.id for n in choose_nodes_dfs(o, op)]
            want = [stack.pop() for _ in range(min(op, len(stack)))]
            assert got == want
    assert len(o) == len(stack)


def test_reinserted_node_replaces_its_old_entry():
    o = OpenNodes()
    n = node(0, 1.0)
    o.add(n)
    assert choose_nodes_objective(o, 1) == [n]
    n.priority = 2.0
    o.add(n)
    o.add(node(1, 1.5))
    assert [x.id for x in choose_nodes_objective(o, None)] == [0, 1]


def test_children_are_isolated():
    parent = SearchNode(0, ToyState([1]))
    ids = iter(range(1, 10))
    a = create_child_node(parent, 1, 0, lambda: next(ids))
    b = create_child_node(parent, 1, 1, lambda: next(ids))
    a.state.picks.append(7)
    assert parent.state.picks == [1] and b.state.picks == [1]
    assert a.parent is parent and a.depth == 1 and a.assignment == (1, 0)


def test_budget_truncates_with_best_so_far():
    rewards = [[1.0, 0.5, 0.2]] * 6
    res = plan_it(ToyState(), toy_callbacks(rewards), beam_width=3, budget=5)
    assert res.truncated and res.nodes_created == 5
    assert res.best.score > 0


def test_max_open_bounds_memory_and_still_finishes():
    rewards = [[0.1 * (j + 1) for j in range(4)] for _ in range(5)]
    res = plan_it(ToyState(), toy_callbacks(rewards), beam_width=None, budget=None, exhaustive=True, max_open=3)
    assert res.complete and res.best.score == pytest.approx(2.0)


def test_greedy_beam_follows_best_values():
    rewards = [[0.1, 0.3], [0.2, 0.4], [0.05, 0.0]]
    res = plan_it(ToyState(), toy_callbacks(rewards), beam_width=1)
    assert [v for _, v in res.best.path()] == [1, 1, 0]
    assert res.nodes_created == 4


def test_pending_sibling_outranks_worse_frontier():
    # value order prefers value 0 (reward 0.1); the pending value 1 (0.9) ranks the root above that child
    rewards = [[0.1, 0.9], [0.0]]
    order = lambda var, vals: vals  # noqa: E731
    res = plan_it(ToyState(), toy_callbacks(rewards, order=order), beam_width=1)
    assert res.best.score == pytest.approx(0.9)
    plain = plan_it(ToyState(), toy_callbacks(rewards, order=order, gain=False), beam_width=1)
    assert plain.best.score == pytest.approx(0.1)


def test_dfs_stops_at_first_leaf():
    rewards = [[0.1, 0.9]] * 3
    res = plan_it(ToyState(), toy_callbacks(rewards, strategy=choose_nodes_dfs), beam_width=1)
    assert res.nodes_created == 4 and res.best.score == pytest.approx(2.7)


instances = st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(0, 20).map(lambda x: x / 10), min_size=1, max_size=4), min_size=n, max_size=n),
    st.sets(st.tuples(st.integers(0, 3), st.integers(0, 3)), max_size=5),
))


@settings(max_examples=80, deadline=None)
@given(instances, st.sampled_from([choose_nodes_objective, choose_nodes_dfs]))
def test_exhaustive_equals_brute_force_and_beams_never_exceed(inst, strategy):
    rewards, forbidden = inst
    # keep at least one feasible completion
    forbidden = {(a, b) for a, b in forbidden if a != 0 or b != 0}
    opt = brute_force(rewards, forbidden)
    res = plan_it(ToyState(), toy_callbacks(rewards, forbidden, strategy), beam_width=None, budget=None,
                  exhaustive=True)
    assert res.best.score == pytest.approx(opt, abs=1e-9)
    for b in (1, 2, 5):
        r = plan_it(ToyState(), toy_callbacks(rewards, forbidden, strategy), beam_width=b)
        assert r.best.score <= opt + 1e-9


@settings(max_examples=60, deadline=None)
@given(instances)
def test_scores_never_decrease_along_a_path(inst):
    rewards, _ = inst
    res = plan_it(ToyState(), toy_callbacks(rewards), beam_width=2)
    total = 0.0
    for var, val in res.best.path():
        step = total + rewards[var][val]
        assert step >= total
        total = step
    assert total == pytest.approx(res.best.score)


def test_nodes_created_grows_with_beam_width():
    rewards = [[0.5, 0.4, 0.3, 0.2]] * 12
    counts = [plan_it(ToyState(), toy_callbacks(rewards), beam_width=b).nodes_created for b in (1, 3, 5)]
    assert counts == sorted(counts)


def test_engine_imports_nothing_from_the_domain():
    tree = ast.parse(Path(engine.__file__).read_text())
    imported = {a.name.split(".")[0] for n in ast.walk(tree) if isinstance(n, ast.Import) for a in n.names}
    imported |= {n.module or "" for n in ast.walk(tree) if isinstance(n, ast.ImportFrom)}
    assert not any(m.startswith(".") or m.startswith("agileplan") or m == "" for m in imported)
