"""Adaptation-curve evaluation: regret and RMSE vs observed context pairs.

Per test door, a fixed candidate pool and a fixed context ordering are drawn
from substreams keyed by (seed, door), so every model and every context size
is scored against identical draws, and parallel evaluation is byte-identical
to serial. Regret always grades the selected action with the simulator, never
with the model's own prediction.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .diffcore.rng import RngStream
from .doorsim.dataset import Dataset, ObjectRecord
from .doorsim.kinematics import execute_action, optimal_reward, sample_candidate_actions

RECORD_FIELDS = ("model", "k", "x", "door_id", "seed", "metric", "value")


@dataclass(frozen=True)
class EvalRecord:
    model: str
    k: float
    x: int
    door_id: int
    seed: int
    metric: str
    value: float
    image_count: int | None = None


def _default_predict_fn(predictor):
    """Door-wise prediction with the context latent cached across x."""
    cache: dict[int, np.ndarray | None] = {}

    def fn(rec: ObjectRecord, door_id: int, obs_actions, obs_rewards, targets, images=None):
        key = (door_id, len(images) if images is not None else -1)
        if key not in cache:
            cache[key] = predictor.context_mean(images if images is not None else rec.images)
        ca = predictor.action_context_mean(obs_actions, obs_rewards)
        return predictor.decode(cache[key], ca, targets)

    return fn


def _run_doors(n_doors: int, worker, workers: int) -> list[list[EvalRecord]]:
    if workers <= 1:
        return [worker(i) for i in range(n_doors)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(n_doors)))


def eval_regret(
    predictor,
    test: Dataset,
    k: float,
    seed: int,
    candidates: int = 100,
    max_context: int = 10,
    workers: int = 1,
    predict_fn=None,
    candidate_fn=None,
) -> list[EvalRecord]:
    """Regret of the greedily selected candidate per door and context size.

    At x observed pairs, the model scores `candidates` fresh random actions;
    the best-scored one is executed in the simulator and compared to the
    door's optimal reward. Ties pick the lowest candidate index.
    `candidate_fn(record, stream, count)` overrides the candidate pool (a
    testing hook, e.g. to inject the optimal action).
    """
    kind = getattr(predictor, "kind", "custom")
    fn = predict_fn if predict_fn is not None else _default_predict_fn(predictor)

    def worker(door_id: int) -> list[EvalRecord]:
        rec = test.records[door_id]
        door_stream = RngStream(seed, "eval", door_id)
        if candidate_fn is None:
            cands = sample_candidate_actions(door_stream.substream("cand"), candidates)
        else:
            cands = candidate_fn(rec, door_stream.substream("cand"), candidates)
        cand_rows = np.stack([a.as_array() for a in cands])
        order = door_stream.substream("ctx").permutation(len(rec.actions))
        r_star = optimal_reward(rec.kinematics)
        out = []
        for x in range(max_context + 1):
            idx = order[:x]
            preds = fn(rec, door_id, rec.actions[idx], rec.rewards[idx], cand_rows)
            best = int(np.argmax(preds))
            r_hat = execute_action(rec.kinematics, cands[best])
            out.append(EvalRecord(kind, k, x, door_id, seed, "regret", (r_star - r_hat) / r_star))
        return out

    return [r for chunk in _run_doors(len(test.records), worker, workers) for r in chunk]


def eval_rmse(
    predictor,
    test: Dataset,
    k: float,
    seed: int,
    max_context: int = 10,
    workers: int = 1,
    predict_fn=None,
    image_counts: list[int] | None = None,
) -> list[EvalRecord]:
    """RMSE (unnormalized reward units) over each door's full action list,
    predicted from the first x context pairs.

    With `image_counts`, the image set is truncated per count before
    encoding and rows carry the count tag (the image ablation)."""
    kind = getattr(predictor, "kind", "custom")
    fn = predict_fn if predict_fn is not None else _default_predict_fn(predictor)
    tagged = image_counts is not None
    counts = image_counts if tagged else [None]
    for c in counts:
        if c is not None and c > test.images_per_door:
            raise ValueError(f"image count {c} exceeds the {test.images_per_door} images per door")

    def worker(door_id: int) -> list[EvalRecord]:
        rec = test.records[door_id]
        order = RngStream(seed, "eval", door_id).substream("ctx").permutation(len(rec.actions))
        out = []
        for m_eval in counts:
            images = rec.images if m_eval is None else rec.images[:m_eval]
            for x in range(max_context + 1):
                idx = order[:x]
                preds = fn(rec, door_id, rec.actions[idx], rec.rewards[idx], rec.actions, images)
                rmse = float(np.sqrt(np.mean((preds - rec.rewards) ** 2)))
                out.append(EvalRecord(kind, k, x, door_id, seed, "rmse", rmse, m_eval))
        return out

    return [r for chunk in _run_doors(len(test.records), worker, workers) for r in chunk]


def eval_image_ablation(
    predictor,
    test: Dataset,
    k: float,
    seed: int,
    image_counts: tuple[int, ...] = (1, 5, 10),
    max_context: int = 10,
    workers: int = 1,
    predict_fn=None,
) -> list[EvalRecord]:
    return eval_rmse(
        predictor,
        test,
        k,
        seed,
        max_context=max_context,
        workers=workers,
        predict_fn=predict_fn,
        image_counts=list(image_counts),
    )


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------


def records_to_csv(records: list[EvalRecord]) -> str:
    """Stable CSV text; the image_count column appears only when any record
    carries the tag."""
    tagged = any(r.image_count is not None for r in records)
    buf = io.StringIO()
    header = list(RECORD_FIELDS)
    if tagged:
        header.insert(6, "image_count")
    buf.write(",".join(header) + "\n")
    for r in records:
        row = [r.model, repr(r.k), str(r.x), str(r.door_id), str(r.seed), r.metric]
        if tagged:
            row.append("" if r.image_count is None else str(r.image_count))
        row.append(repr(r.value))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_records_csv(records: list[EvalRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(records_to_csv(records))


def read_records_csv(path: str) -> list[EvalRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        records = []
        for row in reader:
            ic = row.get("image_count")
            records.append(
                EvalRecord(
                    model=row["model"],
                    k=float(row["k"]),
                    x=int(row["x"]),
                    door_id=int(row["door_id"]),
                    seed=int(row["seed"]),
                    metric=row["metric"],
                    value=float(row["value"]),
                    image_count=int(ic) if ic not in (None, "") else None,
                )
            )
        return records


@dataclass(frozen=True)
class CurveSummary:
    model: str
    k: float
    x: int
    metric: str
    image_count: int | None
    mean: float
    stderr: float
    count: int


def summarize(records: list[EvalRecord]) -> list[CurveSummary]:
    """Group by (model, k, x, metric, image_count); mean and standard error."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.model, r.k, r.x, r.metric, r.image_count), []).append(r.value)
    rows = []
    for (model, k, x, metric, ic), values in groups.items():
        arr = np.asarray(values)
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        rows.append(CurveSummary(model, k, x, metric, ic, float(arr.mean()), stderr, arr.size))
    rows.sort(key=lambda s: (s.metric, s.model, -1 if s.image_count is None else s.image_count, s.k, s.x))
    return rows


def summary_to_csv(rows: list[CurveSummary]) -> str:
    buf = io.StringIO()
    buf.write("model,k,x,metric,image_count,mean,stderr,count\n")
    for s in rows:
        ic = "" if s.image_count is None else str(s.image_count)
        buf.write(
            f"{s.model},{s.k!r},{s.x},{s.metric},{ic},{s.mean!r},{s.stderr!r},{s.count}\n"
        )
    return buf.getvalue()


def write_summary_csv(rows: list[CurveSummary], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(summary_to_csv(rows))
