import json
import math
import time

import numpy as np
import pytest

from fieldkit.errors import CycleError, DuplicateProducer, FilterError, InputError, UnknownSlot
from fieldkit.pipeline_scheduler import (
    EMPTY,
    RunContext,
    compute_batches,
    parse_pipeline,
    run_frame,
    run_frames,
)


def doc(filters, sources=("frame",)):
    return json.dumps({"source_slots": list(sources), "filters": filters})


def passthrough(outputs):
    def fn(inputs):
        return {o: ("v", tuple(sorted(inputs))) for o in outputs}
    return fn


# --- parsing and validation --------------------------------------------------

def test_parse_linear_chain():
    spec = parse_pipeline(doc([
        {"name": "a", "inputs": ["frame"], "outputs": ["x"]},
        {"name": "b", "inputs": ["x"], "outputs": ["y"]},
        {"name": "c", "inputs": ["y"], "outputs": ["z"]},
    ]))
    assert [f.name for f in spec.filters] == ["a", "b", "c"]
    assert spec.by_name()["b"].frequency_divider == 1


def test_parse_cycle_names_the_cycle():
    with pytest.raises(CycleError) as err:
        parse_pipeline(doc([
            {"name": "a", "inputs": ["sb"], "outputs": ["sa"]},
            {"name": "b", "inputs": ["sa"], "outputs": ["sb"]},
        ]))
    assert set(err.value.cycle) >= {"a", "b"}


def test_parse_unknown_slot():
    with pytest.raises(UnknownSlot) as err:
        parse_pipeline(doc([{"name": "a", "inputs": ["foo"], "outputs": ["x"]}]))
    assert err.value.slot == "foo" and err.value.filter_name == "a"


def test_parse_duplicate_producer():
    with pytest.raises(DuplicateProducer) as err:
        parse_pipeline(doc([
            {"name": "a", "inputs": ["frame"], "outputs": ["x"]},
            {"name": "b", "inputs": ["frame"], "outputs": ["x"]},
        ]))
    assert err.value.slot == "x"


def test_parse_self_feeding_filter_rejected():
    with pytest.raises(InputError):
        parse_pipeline(doc([{"name": "a", "inputs": ["x"], "outputs": ["x"]}]))


def test_parse_bad_json():
    with pytest.raises(InputError):
        parse_pipeline("{nope")


# --- batch computation -------------------------------------------------------

def test_diamond_batches():
    spec = parse_pipeline(doc([
        {"name": "A", "inputs": ["frame"], "outputs": ["a"]},
        {"name": "B", "inputs": ["a"], "outputs": ["b"]},
        {"name": "C", "inputs": ["a"], "outputs": ["c"]},
        {"name": "D", "inputs": ["b", "c"], "outputs": ["d"]},
    ]))
    plan = compute_batches(spec)
    assert plan.batches == (("A",), ("B", "C"), ("D",))


def test_chain_gives_singletons():
    n = 7
    filters = [{"name": f"f{i}", "inputs": [f"s{i}"], "outputs": [f"s{i+1}"]}
               for i in range(n)]
    spec = parse_pipeline(doc(filters, sources=("s0",)))
    plan = compute_batches(spec)
    assert len(plan.batches) == n
    assert all(len(b) == 1 for b in plan.batches)


def test_independent_filters_one_batch():
    filters = [{"name": f"f{i}", "inputs": ["frame"], "outputs": [f"o{i}"]}
               for i in range(5)]
    plan = compute_batches(parse_pipeline(doc(filters)))
    assert len(plan.batches) == 1
    assert plan.batches[0] == tuple(sorted(f"f{i}" for i in range(5)))


def test_batches_deterministic():
    filters = [
        {"name": "zeta", "inputs": ["frame"], "outputs": ["z"]},
        {"name": "alpha", "inputs": ["frame"], "outputs": ["a"]},
        {"name": "mid", "inputs": ["z", "a"], "outputs": ["m"]},
    ]
    a = compute_batches(parse_pipeline(doc(filters)))
    b = compute_batches(parse_pipeline(doc(filters)))
    assert a.batches == b.batches == (("alpha", "zeta"), ("mid",))


def random_dag(rng, n_filters):
    """Random layered DAG over source slot 'frame'."""
    filters = []
    produced = ["frame"]
    for i in range(n_filters):
        k = int(rng.integers(1, min(3, len(produced)) + 1))
        ins = list(rng.choice(produced, size=k, replace=False))
        out = f"slot{i}"
        filters.append({"name": f"f{i:02d}", "inputs": ins, "outputs": [out]})
        produced.append(out)
    return parse_pipeline(doc(filters))


def longest_path_depth(spec):
    producer = spec.producer_of()
    memo = {}

    def depth(name):
        if name not in memo:
            f = spec.by_name()[name]
            deps = [producer[s] for s in f.inputs if s in producer]
            memo[name] = 1 + (max(map(depth, deps)) if deps else 0)
        return memo[name]

    return max(depth(f.name) for f in spec.filters)


def test_batch_count_equals_longest_path():
    rng = np.random.default_rng(0)
    for _ in range(30):
        spec = random_dag(rng, int(rng.integers(2, 14)))
        plan = compute_batches(spec)
        assert len(plan.batches) == longest_path_depth(spec)


# --- frame execution ---------------------------------------------------------

def test_divider_two_runs_even_frames_only():
    spec = parse_pipeline(doc([
        {"name": "a", "inputs": ["frame"], "outputs": ["x"], "divider": 2},
    ]))
    plan = compute_batches(spec)
    ctx = RunContext(serial=True)
    runs = []
    registry = {"a": lambda inputs: (runs.append(1), {"x": len(runs)})[1]}
    for k in range(4):
        ctx.sources = {"frame": k}
        run_frame(plan, registry, k, ctx)
    assert len(runs) == 2  # frames 0 and 2


def test_divider_counts_over_f_frames():
    for d in (1, 2, 3, 5):
        for frames in (1, 7, 10, 12):
            spec = parse_pipeline(doc([
                {"name": "a", "inputs": ["frame"], "outputs": ["x"], "divider": d},
            ]))
            plan = compute_batches(spec)
            ctx = RunContext(serial=True)
            count = [0]

            def fn(inputs, count=count):
                count[0] += 1
                return {"x": count[0]}

            run_frames(plan, {"a": fn}, frames, ctx, frame_sources=lambda k: {"frame": k})
            assert count[0] == math.ceil(frames / d)


def test_skipped_filter_retains_outputs_and_consumers_read_them():
    spec = parse_pipeline(doc([
        {"name": "slow", "inputs": ["frame"], "outputs": ["s"], "divider": 2},
        {"name": "fast", "inputs": ["s"], "outputs": ["out"]},
    ]))
    plan = compute_batches(spec)
    ctx = RunContext(serial=True)
    seen = []
    registry = {
        "slow": lambda inputs: {"s": f"slow@{inputs['frame']}"},
        "fast": lambda inputs: (seen.append(inputs["s"]), {"out": inputs["s"]})[1],
    }
    for k in range(4):
        ctx.sources = {"frame": k}
        store = run_frame(plan, registry, k, ctx)
    assert seen == ["slow@0", "slow@0", "slow@2", "slow@2"]
    assert store["out"] == "slow@2"


def test_consumer_of_never_run_filter_sees_empty():
    spec = parse_pipeline(doc([
        {"name": "rare", "inputs": ["frame"], "outputs": ["r"], "divider": 4},
        {"name": "user", "inputs": ["r"], "outputs": ["u"]},
    ]))
    plan = compute_batches(spec)
    ctx = RunContext(serial=True)
    got = []
    registry = {
        "rare": lambda inputs: {"r": "ready"},
        "user": lambda inputs: (got.append(inputs["r"]), {"u": 0})[1],
    }
    ctx.sources = {"frame": 1}
    run_frame(plan, registry, 1, ctx)  # frame 1: rare skipped, never ran
    assert got == [EMPTY]


def test_dependency_timestamps_on_random_dags():
    rng = np.random.default_rng(1)
    for _ in range(20):
        spec = random_dag(rng, int(rng.integers(3, 10)))
        plan = compute_batches(spec)
        ctx = RunContext(max_workers=4)
        registry = {f.name: passthrough(f.outputs) for f in spec.filters}
        ctx.sources = {"frame": 0}
        run_frame(plan, registry, 0, ctx)
        ends = {r.filter_name: r.end for r in ctx.log}
        starts = {r.filter_name: r.start for r in ctx.log}
        producer = spec.producer_of()
        for f in spec.filters:
            for slot in f.inputs:
                if slot in producer:
                    assert ends[producer[slot]] <= starts[f.name]


def test_parallel_batch_beats_serial():
    filters = [{"name": f"sleep{i}", "inputs": ["frame"], "outputs": [f"o{i}"]}
               for i in range(4)]
    spec = parse_pipeline(doc(filters))
    plan = compute_batches(spec)

    def sleeper(inputs):
        time.sleep(0.05)
        return {}

    registry = {f["name"]: (lambda o: lambda inputs: (time.sleep(0.05), {o: 1})[1])(f["outputs"][0])
                for f in filters}
    ctx_par = RunContext(max_workers=4)
    ctx_par.sources = {"frame": 0}
    t0 = time.perf_counter()
    run_frame(plan, registry, 0, ctx_par)
    parallel = time.perf_counter() - t0

    ctx_ser = RunContext(serial=True)
    ctx_ser.sources = {"frame": 0}
    t0 = time.perf_counter()
    run_frame(plan, registry, 0, ctx_ser)
    serial = time.perf_counter() - t0
    assert serial >= 0.2
    assert parallel <= 0.12  # roughly one sleep + pool overhead


def test_filter_error_stops_later_batches():
    spec = parse_pipeline(doc([
        {"name": "boom", "inputs": ["frame"], "outputs": ["x"]},
        {"name": "after", "inputs": ["x"], "outputs": ["y"]},
    ]))
    plan = compute_batches(spec)
    ran = []

    def boom(inputs):
        raise RuntimeError("kaput")

    registry = {"boom": boom, "after": lambda inputs: (ran.append(1), {"y": 1})[1]}
    ctx = RunContext(serial=True)
    ctx.sources = {"frame": 0}
    with pytest.raises(FilterError) as err:
        run_frame(plan, registry, 0, ctx)
    assert err.value.filter_name == "boom"
    assert ran == []


def test_output_contract_enforced():
    spec = parse_pipeline(doc([
        {"name": "bad", "inputs": ["frame"], "outputs": ["x", "y"]},
    ]))
    plan = compute_batches(spec)
    ctx = RunContext(serial=True)
    ctx.sources = {"frame": 0}
    with pytest.raises(InputError):
        run_frame(plan, {"bad": lambda inputs: {"x": 1}}, 0, ctx)
