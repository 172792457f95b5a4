"""Declarative filter-DAG executor.

A pipeline is a set of named filters wired by slots; the batch plan groups
filters whose inputs are already satisfied so each batch can run its
filters concurrently. Filters with a frequency divider d run on every d-th
frame; on other frames their output slots retain the last produced values.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import CycleError, DuplicateProducer, FilterError, InputError, UnknownSlot


class _Empty:
    """Marker for a slot whose producer has not run yet."""

    def __repr__(self):
        return "EMPTY"


EMPTY = _Empty()


@dataclass(frozen=True)
class FilterSpec:
    name: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    frequency_divider: int = 1

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.frequency_divider < 1:
            raise InputError(f"filter {self.name!r}: divider must be >= 1")
        overlap = set(self.inputs) & set(self.outputs)
        if overlap:
            raise InputError(f"filter {self.name!r} both consumes and produces {sorted(overlap)}")


@dataclass(frozen=True)
class PipelineSpec:
    filters: tuple[FilterSpec, ...]
    source_slots: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "source_slots", tuple(self.source_slots))
        names = [f.name for f in self.filters]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise InputError(f"duplicate filter names: {dup}")
        producer: dict[str, str] = {}
        for f in self.filters:
            for slot in f.outputs:
                if slot in producer:
                    raise DuplicateProducer(slot, [producer[slot], f.name])
                if slot in self.source_slots:
                    raise DuplicateProducer(slot, ["<source>", f.name])
                producer[slot] = f.name
        for f in self.filters:
            for slot in f.inputs:
                if slot not in producer and slot not in self.source_slots:
                    raise UnknownSlot(f.name, slot)
        self._check_acyclic(producer)

    def _check_acyclic(self, producer):
        deps = {f.name: sorted({producer[s] for s in f.inputs if s in producer})
                for f in self.filters}
        state: dict[str, int] = {}
        stack: list[str] = []

        def visit(name):
            state[name] = 1
            stack.append(name)
            for dep in deps[name]:
                if state.get(dep, 0) == 1:
                    cycle = stack[stack.index(dep):] + [dep]
                    raise CycleError(cycle)
                if state.get(dep, 0) == 0:
                    visit(dep)
            stack.pop()
            state[name] = 2

        for f in self.filters:
            if state.get(f.name, 0) == 0:
                visit(f.name)

    def producer_of(self) -> dict[str, str]:
        return {slot: f.name for f in self.filters for slot in f.outputs}

    def by_name(self) -> dict[str, FilterSpec]:
        return {f.name: f for f in self.filters}


@dataclass(frozen=True)
class BatchPlan:
    """Ordered batches of filter names; producers always land in earlier batches."""

    spec: PipelineSpec
    batches: tuple[tuple[str, ...], ...]


def parse_pipeline(document: str) -> PipelineSpec:
    """Parse and validate the JSON pipeline format:

    {"source_slots": [...],
     "filters": [{"name": ..., "inputs": [...], "outputs": [...], "divider": 1}]}
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid pipeline JSON: {exc}") from exc
    if not isinstance(doc, dict) or "filters" not in doc:
        raise InputError("pipeline document must be an object with a 'filters' list")
    filters = []
    for entry in doc["filters"]:
        try:
            filters.append(FilterSpec(
                name=str(entry["name"]),
                inputs=tuple(entry.get("inputs", ())),
                outputs=tuple(entry.get("outputs", ())),
                frequency_divider=int(entry.get("divider", 1)),
            ))
        except KeyError as exc:
            raise InputError(f"filter entry missing {exc}") from exc
    return PipelineSpec(filters=tuple(filters),
                        source_slots=tuple(doc.get("source_slots", ())))


def compute_batches(spec: PipelineSpec) -> BatchPlan:
    """Greedy layering: batch k holds every unscheduled filter whose inputs
    are source slots or outputs of batches < k. Equals longest-path depth;
    lexicographic order inside a batch keeps the plan deterministic.
    """
    producer = spec.producer_of()
    ready: set[str] = set(spec.source_slots)
    remaining = {f.name: f for f in spec.filters}
    batches: list[tuple[str, ...]] = []
    while remaining:
        batch = sorted(name for name, f in remaining.items()
                       if all(s in ready for s in f.inputs))
        if not batch:  # unreachable after validation, kept as a guard
            raise CycleError(sorted(remaining))
        for name in batch:
            ready.update(remaining.pop(name).outputs)
        batches.append(tuple(batch))
    return BatchPlan(spec=spec, batches=tuple(batches))


@dataclass
class ExecutionRecord:
    filter_name: str
    frame_index: int
    batch_index: int
    start: float
    end: float


@dataclass
class RunContext:
    """Mutable per-pipeline state: the slot store, worker policy, and a log.

    Slot payloads must be treated as immutable once published for a frame;
    skipped filters leave their previous outputs (EMPTY before first run).
    """

    store: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)
    max_workers: int | None = None
    serial: bool = False
    log: list = field(default_factory=list)

    def reset_for(self, spec: PipelineSpec) -> None:
        self.store = {slot: EMPTY for f in spec.filters for slot in f.outputs}


def run_frame(plan: BatchPlan, registry: dict, frame_index: int,
              context: RunContext) -> dict:
    """Execute one frame through the batch plan; returns the slot store.

    Within a batch the due filters run concurrently and all complete before
    the next batch starts. A filter is due iff frame_index % divider == 0.
    A raising filter aborts the frame: FilterError propagates and later
    batches never start.
    """
    if frame_index < 0:
        raise InputError("frame_index must be >= 0")
    spec = plan.spec
    by_name = spec.by_name()
    missing = [name for name in by_name if name not in registry]
    if missing:
        raise InputError(f"registry missing filters: {missing}")
    store = context.store
    if not store:
        context.reset_for(spec)
        store = context.store
    for slot in spec.source_slots:
        if slot in context.sources:
            store[slot] = context.sources[slot]
        elif slot not in store:
            store[slot] = EMPTY

    def execute(name, batch_index):
        f = by_name[name]
        inputs = {slot: store[slot] for slot in f.inputs}
        start = time.perf_counter()
        result = registry[name](inputs)
        end = time.perf_counter()
        if f.outputs:
            if not isinstance(result, dict) or set(result) != set(f.outputs):
                raise InputError(
                    f"filter {name!r} must return a dict with keys {sorted(f.outputs)}")
        context.log.append(ExecutionRecord(name, frame_index, batch_index, start, end))
        return result or {}

    for batch_index, batch in enumerate(plan.batches):
        due = [name for name in batch
               if frame_index % by_name[name].frequency_divider == 0]
        results = {}
        if context.serial or len(due) <= 1:
            for name in due:
                try:
                    results[name] = execute(name, batch_index)
                except InputError:
                    raise
                except Exception as exc:
                    raise FilterError(name, exc) from exc
        else:
            workers = context.max_workers or os.cpu_count() or 1
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {name: pool.submit(execute, name, batch_index) for name in due}
                error = None
                for name in due:  # deterministic blame order
                    try:
                        results[name] = futures[name].result()
                    except InputError:
                        raise
                    except Exception as exc:
                        if error is None:
                            error = FilterError(name, exc)
                if error is not None:
                    raise error
        # publish after the whole batch completes
        for name, result in results.items():
            store.update(result)
    return store


def run_frames(plan: BatchPlan, registry: dict, n_frames: int,
               context: RunContext, frame_sources=None) -> list[float]:
    """Run frames 0..n_frames-1, returning per-frame wall times (seconds)."""
    times = []
    for k in range(n_frames):
        if frame_sources is not None:
            context.sources = frame_sources(k)
        t0 = time.perf_counter()
        run_frame(plan, registry, k, context)
        times.append(time.perf_counter() - t0)
    return times
