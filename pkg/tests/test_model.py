import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydrosched.model import (
    Policy,
    Scenario,
    ScenarioError,
    build_epochs,
    check_feasible,
    load_scenario,
    save_scenario,
    split_arrivals,
    throughput,
)


def _scenario(deadline, times, energies=None, **kw):
    energies = energies or [1.0] * len(times)
    base = dict(initial_sc=0.0, initial_b=0.0, e_max=5.0, eta=0.5)
    base.update(kw)
    return Scenario(deadline=deadline, arrivals=tuple(zip(times, energies)), **base)


@pytest.mark.parametrize(
    "deadline, times, lengths",
    [(10, [1], [1, 9]), (2, [1], [1, 1]), (11, [1], [1, 10])],
)
def test_build_epochs_lengths(deadline, times, lengths):
    grid = build_epochs(_scenario(deadline, times))
    np.testing.assert_allclose(grid.lengths, lengths)
    assert grid.n == len(times) + 1
    assert grid.boundaries[0] == 0 and grid.boundaries[-1] == deadline


@pytest.mark.parametrize("times", [[1, 1], [2, 1], [0], [10], [12]])
def test_bad_arrival_times_rejected(times):
    with pytest.raises(ScenarioError) as err:
        _scenario(10, times)
    assert err.value.field == "arrivals"


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"eta": 1.0}, "eta"),
        ({"eta": -0.1}, "eta"),
        ({"e_max": 0.0}, "e_max"),
        ({"initial_sc": 6.0}, "initial_sc"),
        ({"deadline": 0.0}, "deadline"),
    ],
)
def test_invariants(changes, field):
    s = _scenario(10, [1])
    with pytest.raises(ScenarioError) as err:
        s.replace(**changes)
    assert err.value.field == field


@pytest.mark.parametrize(
    "energies, e_max, sc, b",
    [([1, 3], 2, [1, 2], [0, 1]), ([10, 10], 10, [10, 10], [0, 0]), ([0], 5, [0], [0])],
)
def test_split_arrivals(energies, e_max, sc, b):
    # first entry plays the role of the initial content, split by hand
    s = Scenario.from_lengths(
        [1.0] * len(energies), energies[1:], e_max=e_max, eta=0.5,
        initial_sc=min(energies[0], e_max), initial_b=max(energies[0] - e_max, 0),
    )
    split = split_arrivals(s)
    np.testing.assert_array_equal(split.sc_arrivals, sc)
    np.testing.assert_array_equal(split.b_arrivals, b)


def test_initial_battery_kept_verbatim():
    s = Scenario.from_lengths([1.0], [], e_max=1.0, eta=0.5, initial_sc=0.3, initial_b=7.0)
    split = split_arrivals(s)
    assert split.sc_arrivals[0] == 0.3 and split.b_arrivals[0] == 7.0


def test_throughput_examples():
    assert throughput(Policy.zeros(3), np.ones(3)) == 0.0
    assert throughput(Policy([math.e - 1], [0.0]), [1.0]) == pytest.approx(0.5)
    value = throughput(Policy([1, 2], [0, 0.9]), [1, 1])
    assert value == pytest.approx(0.5 * (math.log(2) + math.log(3.9)))
    assert value == pytest.approx(1.0271, abs=1e-4)


def test_throughput_rejects_negative_power():
    with pytest.raises(ValueError):
        throughput(Policy([-1.0], [0.0]), [1.0])


def test_check_feasible_examples(golden_scenario):
    # doing nothing overflows the SC when the second full charge lands
    idle = check_feasible(Policy.zeros(2), golden_scenario)
    assert [(v.kind, v.epoch, v.amount) for v in idle] == [("sc_overflow", 1, pytest.approx(10.0))]
    kinds = {v.kind for v in check_feasible(Policy([11, 0], [0, 0]), golden_scenario)}
    assert "sc_causality" in kinds
    over = check_feasible(Policy([5, 0], [0, 0]), golden_scenario)
    assert [(v.kind, v.amount) for v in over] == [("sc_overflow", pytest.approx(5.0))]


def test_terminal_transfer_flagged(golden_scenario):
    v = check_feasible(Policy([1, 0], [0, 0], [0, 0.1]), golden_scenario)
    assert any(x.kind == "terminal_transfer" for x in v)


def test_transfer_usable_next_epoch_only(golden_scenario):
    # 1 J moved in epoch 1 gives 0.9 J from epoch 2 on
    ok = Policy([2, 0.9], [0, 0.09], [8, 0])
    assert check_feasible(ok, golden_scenario) == []
    early = Policy([2, 1], [0.5, 0], [8, 0])
    assert [v.kind for v in check_feasible(early, golden_scenario)] == ["battery_causality"]


def test_json_round_trip(tmp_path, golden_scenario):
    path = tmp_path / "s.json"
    save_scenario(golden_scenario, path)
    assert load_scenario(path) == golden_scenario


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("eta"), "eta"),
        (lambda d: d.update(colour="red"), "colour"),
        (lambda d: d["arrivals"][0].pop("E"), "arrivals[0]"),
        (lambda d: d.update(e_max="10"), "e_max"),
    ],
)
def test_strict_schema(tmp_path, golden_scenario, mutate, field):
    data = golden_scenario.to_dict()
    mutate(data)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ScenarioError) as err:
        load_scenario(path)
    assert err.value.field == field


def test_invalid_json(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(path)


scenarios = st.builds(
    lambda lengths, energies, e_max, eta, frac, b0: Scenario.from_lengths(
        lengths, energies[: len(lengths) - 1], e_max=e_max, eta=eta, initial_sc=frac * e_max, initial_b=b0
    ),
    st.lists(st.floats(0.1, 5.0), min_size=1, max_size=6),
    st.lists(st.floats(0.0, 20.0), min_size=5, max_size=5),
    st.floats(0.1, 10.0),
    st.floats(0.0, 0.99),
    st.floats(0.0, 1.0),
    st.floats(0.0, 10.0),
)


@given(scenarios)
def test_zero_policy_only_breaks_overflow(s):
    kinds = {v.kind for v in check_feasible(Policy.zeros(s.n_epochs), s)}
    assert kinds <= {"sc_overflow"}
    fits = np.cumsum(split_arrivals(s).sc_arrivals).max() <= s.e_max
    assert (not kinds) == fits


@given(scenarios)
def test_split_conserves_energy(s):
    split = split_arrivals(s)
    raw = np.array([e for _, e in s.arrivals])
    np.testing.assert_allclose(split.sc_arrivals[1:] + split.b_arrivals[1:], raw)
    assert np.all(split.sc_arrivals <= s.e_max)


@given(
    st.lists(st.tuples(st.floats(0.1, 5), st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=6),
    st.randoms(use_true_random=False),
)
def test_throughput_permutation_invariant(rows, rnd):
    ell, a, b = map(np.array, zip(*rows))
    order = list(range(len(rows)))
    rnd.shuffle(order)
    v = throughput(Policy(a, b), ell)
    w = throughput(Policy(a[order], b[order]), ell[order])
    assert w == pytest.approx(v, rel=1e-12)


@given(
    st.lists(st.tuples(st.floats(0.1, 5), st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=6),
    st.integers(0, 5),
    st.floats(1e-3, 1.0),
)
def test_throughput_increasing_in_each_power(rows, idx, bump):
    ell, a, b = map(np.array, zip(*rows))
    i = idx % len(rows)
    base = throughput(Policy(a, b), ell)
    a2, b2 = a.copy(), b.copy()
    a2[i] += bump
    b2[i] += bump
    assert throughput(Policy(a2, b), ell) > base
    assert throughput(Policy(a, b2), ell) > base
