import numpy as np
import pytest

from dialogrl.curriculum import (
    ALL,
    DIFFICULT,
    EASY,
    MIDDLE,
    SCHEDULES,
    build_buffers,
    classify_goal,
    sample_goal,
    stage_boundaries,
    stage_for_epoch,
    stage_index,
    strategy_of,
)
from dialogrl.domain import DEFAULT_GOAL_COUNTS, Slot, UserGoal, generate_goal_set, generate_kb
from dialogrl.errors import ConfigError, SamplingError


@pytest.fixture(scope="module")
def goals():
    kb = generate_kb(seed=7, n_movies=200)
    return generate_goal_set(kb, DEFAULT_GOAL_COUNTS, seed=7)


def goal_with_requests(n):
    extras = [Slot.STARTTIME, Slot.THEATER, Slot.DATE, Slot.PRICE][: n - 1]
    return UserGoal(tuple([Slot.TICKET] + extras), {Slot.MOVIENAME: "m"})


def test_classify_by_request_slot_count():
    # one request slot -> easy; 2-3 -> middle; 4-5 -> difficult
    assert classify_goal(goal_with_requests(1)) == EASY
    assert classify_goal(goal_with_requests(2)) == MIDDLE
    assert classify_goal(goal_with_requests(3)) == MIDDLE
    assert classify_goal(goal_with_requests(4)) == DIFFICULT
    assert classify_goal(goal_with_requests(5)) == DIFFICULT


def test_classify_rejects_empty_requests():
    bad = UserGoal((Slot.TICKET,), {})
    bad.request_slots = ()
    with pytest.raises(ConfigError):
        classify_goal(bad)


def test_partition_of_default_goal_set(goals):
    buffers = build_buffers(goals)
    assert len(buffers.easy) == 61
    assert len(buffers.middle) == 33
    assert len(buffers.difficult) == 43
    assert len(buffers.total) == 137
    # partition: disjoint and exhaustive
    ids = lambda gs: {id(g) for g in gs}
    assert ids(buffers.easy) | ids(buffers.middle) | ids(buffers.difficult) == ids(buffers.total)
    assert not ids(buffers.easy) & ids(buffers.middle)
    assert not ids(buffers.middle) & ids(buffers.difficult)
    assert not ids(buffers.easy) & ids(buffers.difficult)


def test_build_buffers_edge_cases():
    empty = build_buffers([])
    assert empty.easy == [] and empty.total == []
    one = build_buffers([goal_with_requests(5)])
    assert len(one.difficult) == 1


def test_stage_boundaries_canonical_and_scaled():
    assert stage_boundaries(300) == (70, 140, 210)
    assert stage_boundaries(50) == (12, 23, 35)


def test_full_300_epoch_schedule_tables():
    # Hand-written expectation: stage levels over the four canonical ranges.
    expected = {
        "EMD": [EASY, MIDDLE, DIFFICULT, ALL],
        "EDD": [EASY, DIFFICULT, DIFFICULT, ALL],
        "EED": [EASY, EASY, DIFFICULT, ALL],
        "DME": [DIFFICULT, MIDDLE, EASY, ALL],
        "DEE": [DIFFICULT, EASY, EASY, ALL],
        "DDM": [DIFFICULT, DIFFICULT, MIDDLE, ALL],
        "RANDOM": [ALL, ALL, ALL, ALL],
    }
    for name, stages in expected.items():
        want = [stages[0]] * 70 + [stages[1]] * 70 + [stages[2]] * 70 + [stages[3]] * 90
        got = [stage_for_epoch(name, e) for e in range(300)]
        assert got == want, name


def test_schedule_walkthrough_points():
    assert stage_for_epoch("EMD", 0) == EASY
    assert stage_for_epoch("DME", 70) == MIDDLE
    assert stage_for_epoch("EDD", 250) == ALL
    assert stage_for_epoch("DME", 140) == EASY
    assert stage_for_epoch("DME", 299) == ALL


def test_stage_for_epoch_bounds():
    with pytest.raises(ConfigError):
        stage_for_epoch("EMD", 300)
    with pytest.raises(ConfigError):
        stage_for_epoch("EMD", -1)
    with pytest.raises(ConfigError):
        stage_for_epoch("XYZ", 0)


def test_reversal_symmetry():
    for a, b in (("EMD", "DME"),):
        fwd = [SCHEDULES[a][i] for i in range(3)]
        rev = [SCHEDULES[b][i] for i in range(3)]
        assert fwd == rev[::-1]


def test_stage_index_scaled_run():
    assert [stage_index(e, 8) for e in range(8)] == [1, 1, 2, 2, 3, 3, 4, 4]


def test_sample_goal_uniform(goals):
    buffers = build_buffers(goals)
    rng = np.random.default_rng(0)
    counts = {}
    n = 100_000
    for _ in range(n):
        g = sample_goal(buffers, EASY, rng)
        counts[id(g)] = counts.get(id(g), 0) + 1
    freqs = np.array([counts.get(id(g), 0) for g in buffers.easy]) / n
    assert np.abs(freqs - 1 / 61).max() <= 0.003


def test_sample_goal_singleton_and_empty():
    buffers = build_buffers([goal_with_requests(1)])
    rng = np.random.default_rng(1)
    for _ in range(5):
        assert sample_goal(buffers, EASY, rng) is buffers.easy[0]
    with pytest.raises(SamplingError):
        sample_goal(buffers, MIDDLE, rng)


def test_strategy_grouping():
    assert strategy_of("EMD") == strategy_of("EED") == "EFS"
    assert strategy_of("DME") == strategy_of("DDM") == "DFS"
    assert strategy_of("RANDOM") == "Random"
