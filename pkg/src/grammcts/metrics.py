"""Per-iteration instrumentation, ablation summaries and anytime traces."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Mapping, Sequence

ITERATION_FIELDS = [
    "iter", "algo_time_s", "actions", "repeated", "reward", "best_so_far",
    "search", "simulated", "key", "error",
]
SUMMARY_FIELDS = [
    "time_iter_mean", "time_iter_std", "time_first", "tot_time",
    "act_iter_mean", "act_iter_std", "first_act", "tot_act", "rep_ratio",
]


@dataclass
class IterationRecord:
    """One MCTS iteration (one backpropagation).

    ``search`` is the index of the Search call the iteration belongs to; the
    ablation statistics treat one Search call (one returned configuration)
    as one iteration of the algorithm.
    """

    iteration: int
    algo_time: float
    actions: int
    key: str
    repeated: bool
    reward: float
    best_so_far: float = 0.0
    search: int = 0
    simulated: bool = True
    error: str = ""


class Recorder:
    """Append-only iteration log for one run."""

    def __init__(self):
        self.records: list[IterationRecord] = []
        self._seen: set[str] = set()
        self.best = -math.inf

    def record(self, *, search: int, algo_time: float, actions: int, key: str, reward: float,
               simulated: bool = True, error: str = "") -> IterationRecord:
        repeated = key in self._seen
        self._seen.add(key)
        self.best = max(self.best, reward)
        rec = IterationRecord(len(self.records), algo_time, actions, key, repeated, reward,
                              self.best, search, simulated, error)
        self.records.append(rec)
        return rec


def _row(rec: IterationRecord) -> list:
    return [rec.iteration, repr(float(rec.algo_time)), rec.actions, int(rec.repeated), repr(float(rec.reward)),
            repr(float(rec.best_so_far)), rec.search, int(rec.simulated), rec.key, rec.error]


def write_iterations(records: Iterable[IterationRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ITERATION_FIELDS)
    for rec in records:
        w.writerow(_row(rec))


def read_iterations(fh) -> list[IterationRecord]:
    reader = csv.DictReader(fh)
    if reader.fieldnames != ITERATION_FIELDS:
        raise ValueError(f"unexpected iteration header {reader.fieldnames}")
    return [
        IterationRecord(
            iteration=int(r["iter"]),
            algo_time=float(r["algo_time_s"]),
            actions=int(r["actions"]),
            key=r["key"],
            repeated=r["repeated"] == "1",
            reward=float(r["reward"]),
            best_so_far=float(r["best_so_far"]),
            search=int(r["search"]),
            simulated=r["simulated"] == "1",
            error=r["error"],
        )
        for r in reader
    ]


@dataclass
class AblationSummary:
    time_iter_mean: float
    time_iter_std: float
    time_first: float
    tot_time: float
    act_iter_mean: float
    act_iter_std: float
    first_act: float
    tot_act: float
    rep_ratio: float

    def row(self) -> dict[str, float]:
        return asdict(self)


def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    if not xs:
        return 0.0, 0.0
    # population std: {4, 6} -> 1.0
    return statistics.fmean(xs), statistics.pstdev(xs)


def summarize(records: Sequence[IterationRecord]) -> AblationSummary:
    """Fold iteration records into the ablation columns.

    Time and action statistics are per Search call; the repetition ratio
    counts simulations whose completed path had been simulated before.
    """
    per_search: dict[int, list[float]] = {}
    for rec in records:
        acc = per_search.setdefault(rec.search, [0.0, 0])
        acc[0] += rec.algo_time
        acc[1] += rec.actions
    order = sorted(per_search)
    times = [per_search[s][0] for s in order]
    acts = [per_search[s][1] for s in order]
    t_mean, t_std = _mean_std(times)
    a_mean, a_std = _mean_std(acts)

    sims = [r for r in records if r.simulated]
    rep = sum(r.repeated for r in sims) / len(sims) if sims else 0.0
    return AblationSummary(
        time_iter_mean=t_mean,
        time_iter_std=t_std,
        time_first=times[0] if times else 0.0,
        tot_time=math.fsum(times),
        act_iter_mean=a_mean,
        act_iter_std=a_std,
        first_act=acts[0] if acts else 0,
        tot_act=sum(acts),
        rep_ratio=rep,
    )


def mean_summary(summaries: Sequence[AblationSummary]) -> AblationSummary:
    """Average several runs' summaries column by column."""
    cols = {f.name: statistics.fmean(getattr(s, f.name) for s in summaries) for f in fields(AblationSummary)}
    return AblationSummary(**cols)


def write_summary(rows: Iterable[AblationSummary], fh, labels: Sequence[tuple[str, str]] | None = None) -> None:
    """Write summary rows; ``labels`` optionally prefixes each row with ``(name, value)`` setting columns."""
    rows = list(rows)
    w = csv.writer(fh, lineterminator="\n")
    prefix = [labels[0][0]] if labels else []
    w.writerow(prefix + SUMMARY_FIELDS)
    for i, s in enumerate(rows):
        lead = [labels[i][1]] if labels else []
        w.writerow(lead + [repr(float(getattr(s, f))) for f in SUMMARY_FIELDS])


def read_summary(fh) -> list[AblationSummary]:
    reader = csv.DictReader(fh)
    return [AblationSummary(**{f: float(r[f]) for f in SUMMARY_FIELDS}) for r in reader]


def summary_csv(rows: Iterable[AblationSummary]) -> str:
    buf = io.StringIO()
    write_summary(rows, buf)
    return buf.getvalue()


# --------------------------------------------------------------- anytime traces


@dataclass
class RunTrace:
    points: list[tuple[float, float]]
    outcomes: list

    def __post_init__(self):
        for (_, a), (_, b) in zip(self.points, self.points[1:]):
            if b < a:
                raise ValueError("best-so-far series must be non-decreasing")


def anytime_trace(outcomes: Sequence, true_max: float | None = None) -> RunTrace:
    """Best-so-far series over outcomes, as ``1 - regret`` when ``true_max`` is given.

    Outcomes need ``elapsed`` and ``reward`` attributes.
    """
    points = []
    best = -math.inf
    for o in outcomes:
        best = max(best, o.reward)
        score = best if true_max is None else 1.0 - (true_max - best)
        points.append((o.elapsed, score))
    return RunTrace(points, list(outcomes))


def value_at(points: Sequence[tuple[float, float]], t: float) -> float | None:
    """Last value recorded at or before ``t``; None before the first point."""
    out = None
    for time_, v in points:
        if time_ <= t:
            out = v
        else:
            break
    return out


def average_rank(values: Sequence[float | None]) -> list[float]:
    """Rank (1 = best = highest) with ties sharing the mean rank; missing values rank last."""
    keyed = [(-math.inf if v is None else v) for v in values]
    order = sorted(range(len(keyed)), key=lambda i: -keyed[i])
    ranks = [0.0] * len(keyed)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and keyed[order[j + 1]] == keyed[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def aggregate_ranks(traces: Mapping[str, RunTrace | Sequence[tuple[float, float]]],
                    grid: Sequence[float]) -> dict[str, list[float]]:
    """Per-method rank at every grid time for one task."""
    methods = list(traces)
    pts = {m: (t.points if isinstance(t, RunTrace) else t) for m, t in traces.items()}
    out = {m: [] for m in methods}
    for t in grid:
        ranks = average_rank([value_at(pts[m], t) for m in methods])
        for m, r in zip(methods, ranks):
            out[m].append(r)
    return out


def average_over_tasks(per_task: Sequence[Mapping[str, Sequence[float]]]) -> dict[str, list[float]]:
    """Element-wise mean of per-method series across tasks (ranks or scores)."""
    methods = list(per_task[0])
    return {
        m: [statistics.fmean(series) for series in zip(*(task[m] for task in per_task))]
        for m in methods
    }


def score_series(trace: RunTrace, grid: Sequence[float], missing: float = 0.0) -> list[float]:
    return [v if (v := value_at(trace.points, t)) is not None else missing for t in grid]
