import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import forward_count as forward_oracle
from wayfinder.choice import (
    ChoiceField,
    PathEvaluation,
    UtilityWeights,
    choose_path,
    decay_choice_field,
    diffuse_choice,
    eval_f,
    eval_q,
    eval_tt,
    forward_count,
    path_probabilities,
    perceive_forward,
    sample_paths,
    travel_time,
)
from wayfinder.cognitive import Path
from wayfinder.fields import FloorField


def agent(pos, dest=None):
    return SimpleNamespace(pos=pos, dest=dest)


def line_field(name, values):
    return FloorField(name, np.array([values], dtype=float))


PA = Path(("a", "E"), 5.0)
PB = Path(("b", "E"), 6.0)
PC = Path(("c", "E"), 7.0)


# travel time ---------------------------------------------------------------


def test_travel_time_on_opening():
    f = {"a": line_field("a", [0.0, 1.33])}
    assert travel_time(PA, (0, 0), f, 1.33) == 5.0


def test_travel_time_upstream():
    f = {"a": line_field("a", [0.0, 1.33])}
    assert travel_time(PA, (1, 0), f, 1.33) == pytest.approx(6.0)


def test_travel_time_order_from_entrance(experiment, knowledge):
    cell = (3, 31)
    region = experiment.region_of((3, 33))
    tts = {p.first: travel_time(p, cell, knowledge.fields, 1.33) for p in knowledge.paths(region, "E")}
    assert tts["1"] < tts["2"] < tts["3"]


def test_eval_tt_examples():
    assert eval_tt([4.2]) == [1.0]
    a, b = eval_tt([12.08 / 1.33, 12.85 / 1.33])
    assert a == 1.0
    assert b == pytest.approx(0.940, abs=5e-4)
    assert eval_tt([3.0, 3.0, 3.0]) == [1.0, 1.0, 1.0]


@given(st.lists(st.floats(0.1, 1e4), min_size=1, max_size=6))
def test_eval_tt_range_and_unique_best(times):
    out = eval_tt(times)
    assert all(0 < v <= 1 for v in out)
    if times.count(min(times)) == 1:
        assert out.count(1.0) == 1


# congestion ----------------------------------------------------------------


def test_forward_count_examples():
    f = line_field("a", [0, 1, 2, 3, 4])
    me = agent((2, 0), "a")
    assert forward_count("a", me, [me], f) == 0
    near, far = agent((1, 0), "a"), agent((3, 0), "a")
    assert forward_count("a", me, [me, near, far], f) == 1


def random_crowd(rng, n=30):
    f = {k: FloorField(k, rng.random((6, 8)) * 12) for k in "abc"}
    cells = [(int(x), int(y)) for y in range(6) for x in range(8)]
    picks = rng.choice(len(cells), size=n, replace=False)
    crowd = [agent(cells[i], str(rng.choice(list("abc")))) for i in picks]
    return f, crowd


@pytest.mark.parametrize("seed", range(10))
def test_forward_count_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    f, crowd = random_crowd(rng)
    for me in crowd:
        for k in "abc":
            assert forward_count(k, me, crowd, f[k]) == forward_oracle(me, crowd, k, f[k])


def test_perceive_forward_threshold():
    f = line_field("a", [0, 1, 2, 3, 4])
    me = agent((2, 0), "a")
    crowd = [me, agent((0, 0), "a"), agent((1, 0), "a")]
    assert perceive_forward("a", me, 2.0, crowd, f) == 0  # PF == gamma
    assert perceive_forward("a", me, 2.0 + 1e-9, crowd, f) == 2
    assert perceive_forward("a", me, 1e12, crowd, f) == forward_count("a", me, crowd, f)
    assert perceive_forward("a", me, 0.0, crowd, f) == 0


def queue_setup(n_a, n_b):
    # two gates on separate rows; the evaluator sits at distance 5 from both
    fa = FloorField("a", np.array([[0, 1, 2, 3, 4, 5, 6, 7], [9] * 8], dtype=float))
    fb = FloorField("b", np.array([[9] * 8, [0, 1, 2, 3, 4, 5, 6, 7]], dtype=float))
    me = agent((5, 0), None)
    crowd = [me] + [agent((i, 0), "a") for i in range(n_a)] + [agent((i, 1), "b") for i in range(n_b)]
    return me, crowd, {"a": fa, "b": fb}


def test_eval_q_empty_room():
    me, crowd, f = queue_setup(0, 0)
    assert eval_q([PA, PB], me, 10.0, crowd, f, {"a": 1.0, "b": 1.0}) == [0.0, 0.0]


def test_eval_q_five_vs_none():
    me, crowd, f = queue_setup(5, 0)
    me.pos = (6, 0)
    f["b"].values[0, 6] = 6.0
    assert eval_q([PA, PB], me, 10.0, crowd, f, {"a": 1.0, "b": 1.0}) == [1.0, 0.0]


def test_eval_q_width_scaling():
    me, crowd, f = queue_setup(4, 0)
    crowd += [agent((i, 1), "b") for i in range(4)]
    f["b"].values[0, 5] = 5.0
    assert eval_q([PA, PB], me, 10.0, crowd, f, {"a": 2.0, "b": 1.0}) == [0.5, 1.0]


# choice field --------------------------------------------------------------


def test_diffusion_values():
    cf = ChoiceField((9, 9))
    diffuse_choice(cf, agent((4, 4)), "b", 1.2, 3)
    assert cf.weights_at((4, 4)) == {"b": 1.0}
    assert cf.weights_at((6, 4)) == {"b": pytest.approx(0.5)}
    assert cf.weights_at((5, 5))["b"] == pytest.approx(1 / math.sqrt(2))
    assert cf.weights_at((8, 4)) == {}


def test_diffusion_overlap_sums():
    cf = ChoiceField((9, 9))
    diffuse_choice(cf, agent((3, 4)), "b", 1.2, 3)
    diffuse_choice(cf, agent((6, 4)), "b", 1.2, 3)
    assert cf.weights_at((4, 4))["b"] == pytest.approx(1.5)


def test_decay_lifecycle():
    cf = ChoiceField((5, 5))
    decay_choice_field(cf)
    assert cf.entry_count() == 0
    diffuse_choice(cf, agent((2, 2)), "a", 1.2, 1)
    decay_choice_field(cf)
    assert not cf
    diffuse_choice(cf, agent((2, 2)), "a", 1.2, 3)
    w0 = cf.weights_at((2, 3))
    for _ in range(2):
        decay_choice_field(cf)
        assert cf.weights_at((2, 3)) == w0  # discarded, never faded
    decay_choice_field(cf)
    assert cf.entry_count() == 0


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6), st.sampled_from("abc"), st.integers(0, 5)), max_size=8),
    st.integers(1, 5),
)
def test_choice_field_drains(events, tau):
    cf = ChoiceField((7, 7))
    for step, (x, y, k, _) in enumerate(events):
        diffuse_choice(cf, agent((x, y)), k, 1.2, tau)
    counts = [cf.entry_count()]
    for _ in range(tau):
        decay_choice_field(cf)
        counts.append(cf.entry_count())
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[-1] == 0


def test_eval_f_examples():
    rng = np.random.default_rng(0)
    cf = ChoiceField((3, 3))
    me = agent((1, 1))
    assert eval_f([PA, PB], me, cf, rng) == [0.0, 0.0]
    cf.cells[(1, 1)] = [["b", 0.7, 2]]
    assert eval_f([PA, PB, PC], me, cf, rng) == [0.0, 1.0, 0.0]


def test_eval_f_frequencies():
    rng = np.random.default_rng(1)
    cf = ChoiceField((3, 3))
    cf.cells[(1, 1)] = [["b", 3.0, 2], ["c", 1.0, 2]]
    me = agent((1, 1))
    hits = np.array([eval_f([PB, PC], me, cf, rng) for _ in range(10_000)])
    assert (hits.sum(axis=1) == 1).all()
    assert hits[:, 0].mean() == pytest.approx(0.75, abs=0.03)


# path choice ---------------------------------------------------------------


def evals_of(triples):
    return [PathEvaluation(Path((str(i), "E"), 1.0), *t) for i, t in enumerate(triples)]


def test_zero_weights_uniform():
    ev = evals_of([(1.0, 0.3, 0.0), (0.5, 1.0, 1.0), (0.9, 0.0, 0.0)])
    choose_path(ev, UtilityWeights(0, 0, 0), np.random.default_rng(0))
    assert [e.probability for e in ev] == [pytest.approx(1 / 3)] * 3


def test_identical_paths_split_evenly():
    ev = evals_of([(0.8, 0.2, 0.0), (0.8, 0.2, 0.0)])
    choose_path(ev, UtilityWeights(), np.random.default_rng(0))
    assert [e.probability for e in ev] == [0.5, 0.5]


def test_travel_time_softmax_value():
    ev = evals_of([(1.0, 0, 0), (0.940, 0, 0)])
    choose_path(ev, UtilityWeights(100, 0, 0), np.random.default_rng(0))
    direct = 1 / (1 + math.exp(-6.0))
    assert ev[0].probability == pytest.approx(direct, abs=1e-12)
    assert ev[0].probability == pytest.approx(0.9975, abs=1e-4)
    assert ev[1].probability == pytest.approx(0.0025, abs=1e-4)


def test_single_draw_agrees_with_vectorised_sampler():
    ev = evals_of([(1.0, 0.5, 0), (0.9, 0.0, 1), (0.95, 0.2, 0)])
    w = UtilityWeights(10, 7, 5)
    for seed in range(50):
        p = choose_path(ev, w, np.random.default_rng(seed))
        (i,) = sample_paths(ev, w, np.random.default_rng(seed), 1)
        assert p is ev[i].path


def test_rejects_bad_weights_and_empty():
    with pytest.raises(ValueError):
        UtilityWeights(-1, 0, 0)
    with pytest.raises(ValueError):
        choose_path([], UtilityWeights(), np.random.default_rng(0))


unit = st.floats(0, 1)
triple = st.tuples(unit, unit, st.sampled_from([0.0, 1.0]))
kappa = st.floats(0, 200)


@given(st.lists(triple, min_size=1, max_size=5), kappa, kappa, kappa)
def test_probabilities_sum_to_one(triples, a, b, c):
    p = path_probabilities(evals_of(triples), UtilityWeights(a, b, c))
    assert (p >= 0).all()
    assert abs(p.sum() - 1) <= 1e-9


@given(st.lists(triple, min_size=2, max_size=5), st.floats(0.1, 50), st.floats(1e-3, 1))
def test_queue_monotonicity(triples, kq, bump):
    w = UtilityWeights(10, kq, 5)
    ev = evals_of(triples)
    before = path_probabilities(ev, w)[0]
    old = ev[0].eval_q
    ev[0].eval_q = min(1.0, old + bump)
    after = path_probabilities(ev, w)[0]
    assert after <= before + 1e-12
    if ev[0].eval_q > old and 1e-6 < before < 1 - 1e-6:
        assert after < before


@given(st.lists(triple, min_size=2, max_size=5), kappa, kappa, kappa, st.floats(1.01, 10))
def test_scaling_sharpens(triples, a, b, c, lam):
    w = UtilityWeights(a, b, c)
    ev = evals_of(triples)
    u = [e.utility(w) for e in ev]
    assume(sorted(u)[-1] - sorted(u)[-2] > 1e-6)
    p1 = path_probabilities(ev, w)
    p2 = path_probabilities(ev, w.scaled(lam))
    assert p2.max() >= p1.max() - 1e-12
    assert p2.argmax() == p1.argmax()
