import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memreset.memory_model import FullHistory, IdleReset, ModelLimits, Turn, accumulate
from memreset.simulate import (
    SimulationResult,
    apply_reset,
    infer_turns,
    parse_duration,
    parse_thresholds,
    replay_oracle,
    results_from_json,
    results_to_csv,
    results_to_json,
    sweep,
)

from .conftest import make_thread


def closed_form(prompts, completions, pauses, threshold, rule):
    """new[k] = p[k] - p[r-1] (- c[r-1]) with r the last reset at or before k."""
    out = []
    r = None
    for k, p in enumerate(prompts):
        if k and pauses[k] is not None and pauses[k] > threshold:
            r = k
        if r is None:
            out.append(p)
            continue
        removed = prompts[r - 1] + (completions[r - 1] if rule == "previous-exchange" else 0)
        out.append(min(p, max(1, p - removed)))
    return out


def test_single_reset_example():
    t = make_thread([10, 30, 60], pauses=[10, 7200])
    adj = apply_reset(t, 1800)
    assert adj.new_prompt_tokens == (10, 30, 30)
    assert adj.reset_here == (False, False, True)


def test_no_qualifying_pause_is_identity():
    t = make_thread([10, 30, 60], pauses=[10, 7200])
    assert apply_reset(t, math.inf).new_prompt_tokens == (10, 30, 60)


def test_two_resets_accumulate_adjusted_values():
    t = make_thread([10, 30, 60, 100], pauses=[10, 7200, 7200])
    assert apply_reset(t, 1800).new_prompt_tokens == (10, 30, 30, 40)
    # same thread replayed from its turns (u = 10, 20, 30, 40; no completions)
    turns = [Turn(10), Turn(20, 0, 10), Turn(30, 0, 7200), Turn(40, 0, 7200)]
    assert replay_oracle(turns, ModelLimits(0, None), 1800) == [10, 30, 30, 40]


def test_plateau_is_floored_at_one():
    t = make_thread([50, 80, 80, 80], pauses=[1, 9000, 9000])
    assert apply_reset(t, 100).new_prompt_tokens == (50, 80, 1, 1)


def test_replay_oracle_trivial_cases():
    limits = ModelLimits(7, 100)
    assert replay_oracle([Turn(200)], limits, 60) == [100]
    assert replay_oracle([Turn(5)], limits, 60) == [12]
    turns = [Turn(5, 3), Turn(6, 2, 10_000), Turn(7, 1, 50)]
    assert replay_oracle(turns, limits, math.inf) == accumulate(turns, limits, FullHistory())[0]


threads_st = st.lists(
    st.tuples(st.integers(1, 400), st.integers(0, 400), st.integers(1, 200_000)),
    min_size=1,
    max_size=20,
)


def observed(turn_spec, template=0):
    turns = [Turn(u, c, None if i == 0 else p) for i, (u, c, p) in enumerate(turn_spec)]
    prompts = accumulate(turns, ModelLimits(template, None), FullHistory())[0]
    thread = make_thread(prompts, pauses=[t.pause_before_seconds for t in turns[1:]], completions=[t.completion_tokens for t in turns])
    return turns, thread


@given(threads_st, st.sampled_from([0, 60, 1800, 3600, 86_400]))
@settings(max_examples=300, deadline=None)
def test_rules_match_closed_form(drawn, threshold):
    _, thread = observed(drawn)
    pauses = thread.pauses
    comps = [m.completion_tokens for m in thread.messages]
    for rule in ("previous-prompt", "previous-exchange"):
        adj = apply_reset(thread, threshold, rule)
        assert list(adj.new_prompt_tokens) == closed_form(thread.prompt_tokens, comps, pauses, threshold, rule)
        assert all(1 <= n <= p for n, p in zip(adj.new_prompt_tokens, adj.prompt_tokens))


@given(threads_st, st.sampled_from([60, 1800, 3600, 86_400]))
@settings(max_examples=300, deadline=None)
def test_exchange_rule_equals_replay(drawn, threshold):
    turns, thread = observed(drawn)
    oracle = replay_oracle(turns, ModelLimits(0, None), threshold)
    assert list(apply_reset(thread, threshold, "previous-exchange").new_prompt_tokens) == oracle


@given(threads_st, st.sampled_from([60, 1800, 3600, 86_400]))
@settings(max_examples=300, deadline=None)
def test_prompt_rule_keeps_previous_completion(drawn, threshold):
    turns, thread = observed(drawn)
    oracle = replay_oracle(turns, ModelLimits(0, None), threshold)
    new = apply_reset(thread, threshold).new_prompt_tokens
    kept = 0
    for k, t in enumerate(turns):
        if k and t.pause_before_seconds > threshold:
            kept = turns[k - 1].completion_tokens
        assert new[k] - oracle[k] == kept


def test_sweep_hand_fixture():
    threads = [
        make_thread([10, 30, 60], pauses=[10, 7200]),
        make_thread([10, 30, 60, 100], pauses=[10, 7200, 7200]),
        make_thread([5, 9], pauses=[100_000]),
    ]
    inf, hour, day = sweep(threads, [math.inf, 1800, 86_400])
    assert inf.total_prompt_tokens_before == 100 + 200 + 14
    assert (inf.total_prompt_tokens_after, inf.reduction_fraction, inf.threads_affected) == (314, 0.0, 0)
    assert hour.total_prompt_tokens_after == 70 + 110 + (5 + 4)
    assert (hour.threads_affected, hour.resets_applied) == (3, 4)
    assert day.total_prompt_tokens_after == 314 - 5
    assert (day.threads_affected, day.resets_applied) == (1, 1)
    assert hour.reduction_fraction == pytest.approx(1 - 189 / 314)


def test_sweep_empty_and_validation():
    (r,) = sweep([], [1800])
    assert (r.total_prompt_tokens_before, r.total_prompt_tokens_after, r.reduction_fraction) == (0, 0, 0.0)
    with pytest.raises(ValueError):
        sweep([], [])


@given(st.lists(threads_st, min_size=1, max_size=15))
@settings(max_examples=50, deadline=None)
def test_sweep_conservation(specs):
    threads = [observed(s)[1] for s in specs]
    results = sweep(threads, [60, 3600, 86_400])
    before = sum(sum(t.prompt_tokens) for t in threads)
    for r in results:
        adjusted = [apply_reset(t, r.threshold_seconds) for t in threads]
        assert r.total_prompt_tokens_before == before
        assert r.total_prompt_tokens_after == sum(sum(a.new_prompt_tokens) for a in adjusted)
        assert r.resets_applied == sum(a.resets for a in adjusted)
        assert r.threads_affected == sum(a.resets > 0 for a in adjusted)
    fractions = [r.reduction_fraction for r in results]
    assert fractions == sorted(fractions, reverse=True)


def test_sweep_parallel_matches_serial():
    threads = [make_thread([i, 2 * i + 5, 4 * i + 9], pauses=[i * 97 % 5000, i * 31 % 9000]) for i in range(1, 400)]
    assert sweep(threads, [60, 1800], jobs=1) == sweep(threads, [60, 1800], jobs=4)


def test_infer_turns_inverts_accumulation():
    turns, thread = observed([(5, 7, 1), (9, 3, 20), (4, 0, 3000)], template=11)
    assert infer_turns(thread, 11) == turns


@pytest.mark.parametrize(
    "text, value",
    [("1800", 1800), ("30m", 1800), ("24h", 86_400), ("2d", 172_800), ("inf", math.inf), ("1.5", 1.5)],
)
def test_parse_duration(text, value):
    assert parse_duration(text) == value


def test_parse_thresholds_rejects_garbage():
    for bad in ("", "abc", "-5", "nan"):
        with pytest.raises(ValueError):
            parse_thresholds(bad)


def test_result_serialisation():
    results = [SimulationResult(math.inf, 100, 100, 0, 0, 3), SimulationResult(1800, 1000, 809, 2, 5, 3)]
    assert results_from_json(results_to_json(results)) == results
    csv_text = results_to_csv(results).decode()
    assert csv_text.splitlines() == [
        "threshold_seconds,before,after,reduction_pct,threads_affected,resets",
        "inf,100,100,0.0,0,0",
        "1800,1000,809,19.1,2,5",
    ]
    assert json.loads(results_to_json(results))[1]["reduction_fraction"] == pytest.approx(0.191)
