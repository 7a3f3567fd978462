"""Task-level evaluation: leave-one-out queries, full-catalog ranking, HR/NDCG."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..data.dataset import TEST, VALID, InteractionDataset, Query
from ..inference.beam import RankedPrediction
from ..inference.tasks import TASKS, Predictor
from ..numerics.checkpoint import config_hash
from .metrics import first_hit_rank

JOINT_TASKS = ("behavior-item", "behavior-aware")


class EmptyEvaluationError(ValueError):
    pass


@dataclass
class MetricsReport:
    task: str
    split: str
    n_users: int
    hr: dict[int, float]
    ndcg: dict[int, float]
    next_behavior_acc: float | None = None
    n_beams: int | None = None
    config_hash: str = ""
    dataset_hash: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hr"] = {str(k): v for k, v in self.hr.items()}
        d["ndcg"] = {str(k): v for k, v in self.ndcg.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def flat(self) -> dict:
        row = {"task": self.task, "split": self.split, "n_users": self.n_users, "n_beams": self.n_beams}
        for k in sorted(self.hr):
            row[f"HR@{k}"] = round(self.hr[k], 6)
        for k in sorted(self.ndcg):
            row[f"NDCG@{k}"] = round(self.ndcg[k], 6)
        row["next_behavior_acc"] = None if self.next_behavior_acc is None else round(self.next_behavior_acc, 6)
        return row

    def to_csv(self) -> str:
        return rows_csv([self.flat()])

    def to_text(self) -> str:
        lines = [f"task {self.task} ({self.split}, {self.n_users} users, beams={self.n_beams})"]
        for k in sorted(self.hr):
            lines.append(f"  HR@{k:<3d} {self.hr[k]:.4f}   NDCG@{k:<3d} {self.ndcg[k]:.4f}")
        if self.next_behavior_acc is not None:
            lines.append(f"  next-behavior accuracy {self.next_behavior_acc:.4f}")
        return "\n".join(lines)


def rows_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# ---- rankers ---------------------------------------------------------------

class GenerativeRanker:
    """The sequence model behind the :class:`Predictor` tasks."""

    def __init__(self, scorer, codes, vocab, max_items: int = 50, chunk: int = 64):
        self.predictor = Predictor(scorer, codes, vocab, max_items, chunk)

    def rank(self, queries, task, N, n_beams, target_behavior=None, behavior_probs=None):
        return self.predictor.predict(queries, task, n_beams, N, target_behavior, behavior_probs)

    def behavior_log_probs(self, queries):
        return self.predictor.behavior_log_probs(queries)


class OracleRanker:
    """Stub that knows each query's answer and puts it first."""

    def __init__(self, n_items: int, n_behaviors: int):
        self.n_items, self.n_behaviors = n_items, n_behaviors

    def rank(self, queries, task, N, n_beams=None, target_behavior=None, behavior_probs=None):
        out = []
        for q in queries:
            b = target_behavior if task == "target" else q.target_behavior
            rest = [v for v in range(self.n_items) if v != q.target_item][:N - 1]
            items = np.array([q.target_item] + rest)
            out.append(RankedPrediction(np.full(len(items), b), items, -np.arange(len(items), dtype=float)))
        return out

    def behavior_log_probs(self, queries):
        lp = np.full((len(queries), self.n_behaviors), -np.inf)
        lp[np.arange(len(queries)), [q.target_behavior for q in queries]] = 0.0
        return lp


class UniformRandomRanker:
    """Ranks N items drawn uniformly without replacement; joint tasks also draw behaviors."""

    def __init__(self, n_items: int, n_behaviors: int, seed: int = 0):
        self.n_items, self.n_behaviors = n_items, n_behaviors
        self.rng = np.random.default_rng([seed, 60])

    def rank(self, queries, task, N, n_beams=None, target_behavior=None, behavior_probs=None):
        out = []
        for q in queries:
            if task in JOINT_TASKS:
                flat = self.rng.choice(self.n_items * self.n_behaviors, size=N, replace=False)
                beh, items = np.divmod(flat, self.n_items)
            else:
                items = self.rng.choice(self.n_items, size=N, replace=False)
                beh = np.full(N, target_behavior if task == "target" else q.target_behavior)
            out.append(RankedPrediction(beh, items, np.zeros(N)))
        return out

    def behavior_log_probs(self, queries):
        return np.full((len(queries), self.n_behaviors), -np.log(self.n_behaviors))


# ---- evaluation -------------------------------------------------------------

def evaluation_queries(dataset: InteractionDataset, split: str, task: str,
                       target_behavior: int | None = None, max_users: int | None = None) -> list[Query]:
    """Queries for ``task``; the target task keeps only users whose held-out interaction is the target behavior."""
    if split not in ("valid", "test"):
        raise ValueError(f"split must be 'valid' or 'test', got {split!r}")
    marker = TEST if split == "test" else VALID
    queries = []
    for u in range(dataset.n_users):
        q = dataset.query(u, split)
        pos = np.nonzero(dataset.split_markers(u) == marker)[0]
        assert len(pos) == 1 and int(dataset.users[u].items[pos[0]]) == q.target_item, \
            f"user {u}: {split} target does not sit at the split marker"
        if task == "target" and q.target_behavior != target_behavior:
            continue
        queries.append(q)
    return queries[:max_users] if max_users is not None else queries


def score_predictions(queries: Sequence[Query], preds: Sequence[RankedPrediction], task: str,
                      ks=(5, 10)) -> tuple[dict, dict, np.ndarray]:
    """Mean HR@K / NDCG@K plus the per-query hit rank (0 = miss)."""
    ranks = np.zeros(len(queries), dtype=np.int64)
    for i, (q, r) in enumerate(zip(queries, preds)):
        if task in JOINT_TASKS:
            hit = first_hit_rank(r.pairs(), (q.target_behavior, q.target_item))
        else:
            hit = first_hit_rank(r.items.tolist(), q.target_item)
        ranks[i] = hit or 0
    hr, ndcg = {}, {}
    for k in ks:
        inside = (ranks >= 1) & (ranks <= k)
        hr[k] = float(inside.mean())
        gains = np.zeros(len(ranks))
        gains[inside] = 1.0 / np.log2(1.0 + ranks[inside])
        ndcg[k] = float(gains.mean())
    return hr, ndcg, ranks


def next_behavior_accuracy(ranker, queries: Sequence[Query]) -> float:
    if not queries:
        raise EmptyEvaluationError("next-behavior accuracy over an empty query set")
    lp = ranker.behavior_log_probs(queries)
    truth = np.array([q.target_behavior for q in queries])
    return float(np.mean(np.argmax(lp, axis=1) == truth))


def evaluate_task(ranker, dataset: InteractionDataset, task: str, split: str = "test", n_beams: int = 50,
                  ks=(5, 10), target_behavior: int | None = None, max_users: int | None = None,
                  behavior_probs=None, config: dict | None = None) -> MetricsReport:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {TASKS}")
    if task == "target" and target_behavior is None:
        target_behavior = dataset.behaviors.target_behavior
    queries = evaluation_queries(dataset, split, task, target_behavior, max_users)
    if not queries:
        raise EmptyEvaluationError(f"no {split} queries for task {task!r}"
                                   + (f" with target behavior {target_behavior}" if task == "target" else ""))
    N = max(ks)
    preds = ranker.rank(queries, task, N, n_beams, target_behavior, behavior_probs)
    hr, ndcg, ranks = score_predictions(queries, preds, task, ks)
    acc = next_behavior_accuracy(ranker, queries)
    return MetricsReport(task, split, len(queries), hr, ndcg, acc, n_beams,
                         config_hash(config) if config else "", dataset.content_hash(),
                         {"ranks": ranks.tolist()})


def beam_count_sweep(ranker, dataset: InteractionDataset, beams=(10, 20, 30, 40, 50), split: str = "test",
                     task: str = "behavior-item", ks=(5, 10), max_users: int | None = None) -> list[dict]:
    rows = []
    for nb in beams:
        rep = evaluate_task(ranker, dataset, task, split, nb, ks, max_users=max_users)
        row = rep.flat()
        row.pop("next_behavior_acc")
        rows.append(row)
    return rows
