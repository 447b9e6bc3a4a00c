"""Strategy runners and report plumbing for the four-way comparison.

Strategies:

* ``baseline_full``: trains on all chunks pooled, plain shuffled epochs.
* ``baseline_hem``: trains on all chunks pooled, but every iteration's
  batch is a 4K hard/easy selection refreshed as training proceeds.
* ``iem_incremental``: the incremental mining loop, one stage per chunk.
* ``naive_finetune``: trains on only the newest chunk each stage.

All strategies share one presentation budget. The initial chunk is worth
iterations_per_step passes over it; each later chunk is worth
iterations_per_step batches of 4K examples, K being that chunk's
positive count. Pooled strategies receive the sum. The mining loop may
present slightly less when truncation shrinks a selection; the allowance
is never exceeded.

Per-strategy outputs: a report fragment CSV (no wall-clock column, so
reruns are byte-identical), a timings sidecar CSV, a trace log of what
was trained on, a checkpoint, and for pool-based strategies the pool
state. The comparison step joins fragment and sidecar into the full
report schema.
"""

import os
import time
from dataclasses import dataclass

import numpy as np

from . import metrics
from .errors import DataError
from .pgm import ImageCache
from .pool import PoolState, add_chunk, refresh_errors, record_training_update, save_state
from .selection import partition_number_for, select_subset
from .trainer import (
    augmented_error_terms,
    example_rng,
    forward,
    init_params,
    save_params,
    train_on_subset,
)

STRATEGIES = ("baseline_full", "baseline_hem", "iem_incremental", "naive_finetune")

REPORT_HEADER = "strategy,stage,precision,recall,f1,jaccard,examples_trained"
TIMINGS_HEADER = "strategy,stage,seconds"
FULL_HEADER = "strategy,stage,precision,recall,f1,jaccard,seconds,examples_trained"

REPORT_NAME = "report.csv"
TIMINGS_NAME = "timings.csv"
TRACE_NAME = "trace.txt"
CHECKPOINT_NAME = "checkpoint.txt"
POOL_NAME = "pool.tsv"


@dataclass(frozen=True)
class StageResult:
    stage: int
    precision: float
    recall: float
    f1: float
    jaccard: float
    seconds: float
    examples_trained: int

    def __post_init__(self):
        for name in ("precision", "recall", "f1", "jaccard"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of [0,1]: {v}")


@dataclass(frozen=True)
class StrategyReport:
    strategy: str
    seed: int
    config_hash: str
    rows: tuple

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        stages = [row.stage for row in self.rows]
        if stages != sorted(stages):
            raise ValueError("report rows must be stage-ordered")

    def final_row(self):
        return self.rows[-1]


def evaluate_model(params, test_records, selcfg, cache):
    """Lesion-level precision/recall/F1 at tau plus mean pixel Jaccard."""
    preds, gts, jis = [], [], []
    for rec in test_records:
        img, mask = cache.pair(rec.image_ref, rec.mask_ref)
        pred = metrics.binarize(forward(params, img), selcfg.binarize_threshold)
        preds.append(pred)
        gts.append(mask)
        jis.append(metrics.jaccard_index(pred, mask))
    precision, recall, f1 = metrics.evaluate_detection(preds, gts, selcfg.tau)
    return precision, recall, f1, float(np.mean(jis))


def stage_budgets(train_chunks, selcfg):
    """Presentation allowance per stage, before the epoch multiplier."""
    budgets = [selcfg.iterations_per_step * len(train_chunks[0])]
    for chunk in train_chunks[1:]:
        budgets.append(selcfg.iterations_per_step * 4 * partition_number_for(selcfg, chunk))
    return budgets


class _Cycler:
    """Yields examples in reshuffled passes so batches cover the set evenly."""

    def __init__(self, examples, rng):
        self.examples = examples
        self.rng = rng
        self.order = np.empty(0, dtype=np.int64)
        self.pos = 0

    def take(self, n):
        out = []
        while len(out) < n:
            if self.pos >= len(self.order):
                self.order = self.rng.permutation(len(self.examples))
                self.pos = 0
            out.append(self.examples[int(self.order[self.pos])])
            self.pos += 1
        return out


def _pairs(records, cache):
    return [cache.pair(rec.image_ref, rec.mask_ref) for rec in records]


def _train_initial(params, chunk, selcfg, traincfg, cache, trace):
    """Shared stage-0 routine: iterations_per_step passes over the chunk."""
    rng = np.random.default_rng([selcfg.seed, 0])
    examples = _pairs(chunk, cache)
    for _ in range(selcfg.iterations_per_step):
        train_on_subset(params, examples, traincfg, rng)
    presented = selcfg.iterations_per_step * len(examples) * traincfg.epochs_per_iteration
    trace.append(f"stage=0\tset_size={len(examples)}\tpresentations={presented}")
    return presented


def _format_subset(stage, iteration, subset):
    return "\t".join([
        f"stage={stage}",
        f"iter={iteration}",
        "hard_pos=" + ",".join(subset.hard_positives),
        "hard_neg=" + ",".join(subset.hard_negatives),
        "easy_pos=" + ",".join(subset.easy_positives),
        "easy_neg=" + ",".join(subset.easy_negatives),
    ])


def _run_iem(train_chunks, test_records, selcfg, traincfg, cache):
    from .trainer import incremental_step

    pool = PoolState([])
    params = init_params()
    rows, trace = [], []
    t0 = time.perf_counter()
    add_chunk(pool, train_chunks[0], 0)
    presented = _train_initial(params, train_chunks[0], selcfg, traincfg, cache, trace)
    seconds = time.perf_counter() - t0
    rows.append(StageResult(0, *evaluate_model(params, test_records, selcfg, cache),
                            seconds, presented))
    for chunk in train_chunks[1:]:
        counter = [0]

        def trace_cb(stage, iteration, subset):
            counter[0] += len(subset) * traincfg.epochs_per_iteration
            trace.append(_format_subset(stage, iteration, subset))

        t0 = time.perf_counter()
        pool, params = incremental_step(
            pool, params, selcfg, traincfg, chunk, cache, trace_cb
        )
        seconds = time.perf_counter() - t0
        rows.append(StageResult(
            pool.stage, *evaluate_model(params, test_records, selcfg, cache),
            seconds, counter[0],
        ))
    return rows, params, pool, trace


def _run_naive(train_chunks, test_records, selcfg, traincfg, cache):
    params = init_params()
    rows, trace = [], []
    t0 = time.perf_counter()
    presented = _train_initial(params, train_chunks[0], selcfg, traincfg, cache, trace)
    seconds = time.perf_counter() - t0
    rows.append(StageResult(0, *evaluate_model(params, test_records, selcfg, cache),
                            seconds, presented))
    for stage, chunk in enumerate(train_chunks[1:], start=1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([selcfg.seed, stage])
        batch_size = 4 * partition_number_for(selcfg, chunk)
        cycler = _Cycler(_pairs(chunk, cache), rng)
        presented = 0
        for _ in range(selcfg.iterations_per_step):
            batch = cycler.take(batch_size)
            train_on_subset(params, batch, traincfg, rng)
            presented += len(batch) * traincfg.epochs_per_iteration
        seconds = time.perf_counter() - t0
        trace.append(f"stage={stage}\tset_size={len(chunk)}\tpresentations={presented}")
        rows.append(StageResult(
            stage, *evaluate_model(params, test_records, selcfg, cache),
            seconds, presented,
        ))
    return rows, params, None, trace


def _run_full(train_chunks, test_records, selcfg, traincfg, cache):
    params = init_params()
    trace = []
    final_stage = len(train_chunks) - 1
    pooled = [rec for chunk in train_chunks for rec in chunk]
    budget = sum(stage_budgets(train_chunks, selcfg))
    t0 = time.perf_counter()
    rng = np.random.default_rng([selcfg.seed, 0])
    examples = _pairs(pooled, cache)
    epochs, remainder = divmod(budget, len(examples))
    for _ in range(epochs):
        train_on_subset(params, examples, traincfg, rng)
    if remainder:
        idx = rng.permutation(len(examples))[:remainder]
        train_on_subset(params, [examples[int(i)] for i in idx], traincfg, rng)
    presented = budget * traincfg.epochs_per_iteration
    seconds = time.perf_counter() - t0
    trace.append(
        f"stage={final_stage}\tset_size={len(examples)}\tpresentations={presented}"
    )
    rows = [StageResult(
        final_stage, *evaluate_model(params, test_records, selcfg, cache),
        seconds, presented,
    )]
    return rows, params, None, trace


def _run_hem(train_chunks, test_records, selcfg, traincfg, cache):
    """Pooled run with the mining loop's batch composition and error updates.

    K follows the newest chunk's positive count, matching what the
    incremental loop would use at its final stage.
    """
    params = init_params()
    trace = []
    final_stage = len(train_chunks) - 1
    pool = PoolState([])
    for i, chunk in enumerate(train_chunks):
        add_chunk(pool, chunk, i)
    K = partition_number_for(selcfg, train_chunks[-1])
    budget = sum(stage_budgets(train_chunks, selcfg))
    t0 = time.perf_counter()
    refresh_errors(pool, lambda img: forward(params, img), selcfg, cache)
    rng = np.random.default_rng([selcfg.seed, final_stage])
    presented = 0
    for iteration in range(budget // (4 * K)):
        subset = select_subset(pool, K, rng)
        ids = subset.all_ids()
        if not ids:
            break
        train_on_subset(
            params,
            [cache.pair(pool.record_for(i).image_ref, pool.record_for(i).mask_ref)
             for i in ids],
            traincfg, rng,
        )
        presented += len(ids) * traincfg.epochs_per_iteration
        for example_id in sorted(ids):
            rec = pool.record_for(example_id)
            img, mask = cache.pair(rec.image_ref, rec.mask_ref)
            errors = augmented_error_terms(
                params, img, mask, selcfg, traincfg.recipe,
                example_rng(selcfg.seed, final_stage, iteration, example_id),
            )
            record_training_update(pool, example_id, errors, selcfg.d)
        trace.append(_format_subset(final_stage, iteration, subset))
    seconds = time.perf_counter() - t0
    rows = [StageResult(
        final_stage, *evaluate_model(params, test_records, selcfg, cache),
        seconds, presented,
    )]
    return rows, params, pool, trace


_RUNNERS = {
    "baseline_full": _run_full,
    "baseline_hem": _run_hem,
    "iem_incremental": _run_iem,
    "naive_finetune": _run_naive,
}


def run_strategy(strategy, train_chunks, test_records, selcfg, traincfg, cache=None):
    """Train one strategy end to end; returns (report, params, pool, trace).

    ``pool`` is None for strategies that do not keep error bookkeeping.
    """
    if strategy not in _RUNNERS:
        raise ValueError(f"unknown strategy {strategy!r}")
    if not train_chunks or not train_chunks[0]:
        raise ValueError("need at least one nonempty training chunk")
    if cache is None:
        cache = ImageCache()
    rows, params, pool, trace = _RUNNERS[strategy](
        train_chunks, test_records, selcfg, traincfg, cache
    )
    report = StrategyReport(
        strategy=strategy, seed=selcfg.seed, config_hash=selcfg.fingerprint(),
        rows=tuple(rows),
    )
    return report, params, pool, trace


def write_strategy_outputs(out_dir, report, params, pool, trace):
    """Write checkpoint, report fragment, timings, trace, and pool state."""
    os.makedirs(out_dir, exist_ok=True)
    save_params(params, os.path.join(out_dir, CHECKPOINT_NAME))
    write_report_fragment(report, os.path.join(out_dir, REPORT_NAME))
    write_timings(report, os.path.join(out_dir, TIMINGS_NAME))
    with open(os.path.join(out_dir, TRACE_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(trace) + ("\n" if trace else ""))
    if pool is not None:
        save_state(pool, os.path.join(out_dir, POOL_NAME))


def write_report_fragment(report, path):
    lines = [f"# seed={report.seed}", f"# config={report.config_hash}", REPORT_HEADER]
    for row in report.rows:
        lines.append(",".join([
            report.strategy, str(row.stage),
            f"{row.precision:.6f}", f"{row.recall:.6f}", f"{row.f1:.6f}",
            f"{row.jaccard:.6f}", str(row.examples_trained),
        ]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_timings(report, path):
    lines = [TIMINGS_HEADER]
    for row in report.rows:
        lines.append(f"{report.strategy},{row.stage},{row.seconds:.6f}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _check_header(path, got, expected):
    got_fields = got.split(",")
    expected_fields = expected.split(",")
    for field in expected_fields:
        if field not in got_fields:
            raise DataError(f"{path}: missing field {field!r} in header")
    if got_fields != expected_fields:
        raise DataError(f"{path}: bad column order {got!r}")


def read_report_fragment(path):
    """Parse a fragment written by write_report_fragment; timings come separately."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line:
            body.append(line)
    if "seed" not in meta or "config" not in meta:
        raise DataError(f"{path}: report lacks seed/config annotations")
    if not body:
        raise DataError(f"{path}: empty report")
    _check_header(path, body[0], REPORT_HEADER)
    strategy = None
    rows = []
    for lineno, line in enumerate(body[1:], start=2):
        fields = line.split(",")
        if len(fields) != 7:
            raise DataError(f"{path}:{lineno}: expected 7 columns, got {len(fields)}")
        if strategy is None:
            strategy = fields[0]
        elif fields[0] != strategy:
            raise DataError(f"{path}:{lineno}: mixed strategies in one fragment")
        try:
            rows.append(StageResult(
                stage=int(fields[1]), precision=float(fields[2]),
                recall=float(fields[3]), f1=float(fields[4]),
                jaccard=float(fields[5]), seconds=0.0,
                examples_trained=int(fields[6]),
            ))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value ({exc})") from exc
    try:
        return StrategyReport(
            strategy=strategy, seed=int(meta["seed"]), config_hash=meta["config"],
            rows=tuple(rows),
        )
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def read_timings(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read timings {path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path}: empty timings file")
    _check_header(path, lines[0], TIMINGS_HEADER)
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 columns")
        try:
            out[(fields[0], int(fields[1]))] = float(fields[2])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value ({exc})") from exc
    return out


def merge_reports(reports, timings):
    """Full-schema rows (list of dicts), one per strategy per stage."""
    seeds = {r.seed for r in reports}
    configs = {r.config_hash for r in reports}
    if len(seeds) > 1 or len(configs) > 1:
        raise DataError(
            f"reports disagree on seed/config: seeds={sorted(seeds)} "
            f"configs={sorted(configs)}"
        )
    order = {name: i for i, name in enumerate(STRATEGIES)}
    merged = []
    for report in sorted(reports, key=lambda r: order[r.strategy]):
        for row in report.rows:
            merged.append({
                "strategy": report.strategy, "stage": row.stage,
                "precision": row.precision, "recall": row.recall,
                "f1": row.f1, "jaccard": row.jaccard,
                "seconds": timings.get((report.strategy, row.stage), row.seconds),
                "examples_trained": row.examples_trained,
            })
    return merged


def comparison_csv(merged):
    lines = [FULL_HEADER]
    for row in merged:
        lines.append(",".join([
            row["strategy"], str(row["stage"]),
            f"{row['precision']:.6f}", f"{row['recall']:.6f}", f"{row['f1']:.6f}",
            f"{row['jaccard']:.6f}", f"{row['seconds']:.6f}",
            str(row["examples_trained"]),
        ]))
    return "\n".join(lines) + "\n"


def final_stage_table(merged):
    """Text table of each strategy's last-stage row."""
    last = {}
    for row in merged:
        key = row["strategy"]
        if key not in last or row["stage"] >= last[key]["stage"]:
            last[key] = row
    order = {name: i for i, name in enumerate(STRATEGIES)}
    header = (f"{'strategy':<16} {'stage':>5} {'precision':>9} {'recall':>9} "
              f"{'f1':>9} {'jaccard':>9} {'seconds':>9} {'examples':>9}")
    lines = [header, "-" * len(header)]
    for name in sorted(last, key=lambda n: order[n]):
        row = last[name]
        lines.append(
            f"{row['strategy']:<16} {row['stage']:>5} {row['precision']:>9.4f} "
            f"{row['recall']:>9.4f} {row['f1']:>9.4f} {row['jaccard']:>9.4f} "
            f"{row['seconds']:>9.3f} {row['examples_trained']:>9}"
        )
    return "\n".join(lines)


def load_dataset(data_dir):
    """Read chunk0..chunkN and test manifests from a generated data tree."""
    from .synth import MANIFEST_NAME, read_manifest

    chunks = []
    i = 0
    while True:
        manifest = os.path.join(data_dir, f"chunk{i}", MANIFEST_NAME)
        if not os.path.isfile(manifest):
            break
        chunks.append(read_manifest(manifest))
        i += 1
    if not chunks:
        raise DataError(f"no chunk manifests under {data_dir}")
    test_manifest = os.path.join(data_dir, "test", MANIFEST_NAME)
    if not os.path.isfile(test_manifest):
        raise DataError(f"missing test manifest {test_manifest}")
    return chunks, read_manifest(test_manifest)
