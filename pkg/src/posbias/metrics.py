"""Scoring: exact-match chunk P/R/F1, token accuracy, and windowed evaluation.

Chunk scoring follows the classic conlleval semantics: micro-averaged exact
span+type matching, with legacy I-X chunks (no opening B-X) treated as chunk
starts. "IGN" positions never join or extend a chunk and are excluded from
token counts.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import IGNORE_LABEL, Task
from .duplication import EvalSet


@dataclass(frozen=True, order=True)
class Chunk:
    type: str
    start: int
    end: int


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    support: int

    @classmethod
    def from_counts(cls, tp: int, n_pred: int, n_gold: int) -> "Scores":
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_gold if n_gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(precision=p, recall=r, f1=f1, support=n_gold)


def extract_chunks(labels: Sequence[str]) -> set[Chunk]:
    """Spans of (type, start, end) with inclusive 0-based bounds.

    An I-X that follows O, IGN, a different type, or the sequence start opens
    a new chunk (legacy-style input normalization).
    """
    chunks: set[Chunk] = set()
    cur_type: str | None = None
    cur_start = 0
    for i, lab in enumerate(labels):
        if lab == "O" or lab == IGNORE_LABEL:
            if cur_type is not None:
                chunks.add(Chunk(cur_type, cur_start, i - 1))
                cur_type = None
            continue
        if len(lab) < 3 or lab[1] != "-" or lab[0] not in "BI":
            raise ValueError(f"not a BIO label: {lab!r}")
        tag, typ = lab[0], lab[2:]
        if tag == "B" or typ != cur_type:
            if cur_type is not None:
                chunks.add(Chunk(cur_type, cur_start, i - 1))
            cur_type, cur_start = typ, i
    if cur_type is not None:
        chunks.add(Chunk(cur_type, cur_start, len(labels) - 1))
    return chunks


def _check_aligned(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> None:
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sequences, pred has {len(pred)}")
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ValueError(f"sequence {i}: gold length {len(g)} != pred length {len(p)}")


def chunk_prf(
    gold: Sequence[Sequence[str]],
    pred: Sequence[Sequence[str]],
    label: str | None = None,
) -> Scores:
    """Micro-averaged exact-match chunk scores over aligned label sequences.

    Positions where gold is IGN are excluded: the prediction there is ignored
    and no chunk may cross them. With `label` set, only chunks of that type
    are scored.
    """
    _check_aligned(gold, pred)
    tp = n_pred = n_gold = 0
    for g_labels, p_labels in zip(gold, pred):
        masked_pred = [
            IGNORE_LABEL if g == IGNORE_LABEL else p for g, p in zip(g_labels, p_labels)
        ]
        g_chunks = extract_chunks(g_labels)
        p_chunks = extract_chunks(masked_pred)
        if label is not None:
            g_chunks = {c for c in g_chunks if c.type == label}
            p_chunks = {c for c in p_chunks if c.type == label}
        tp += len(g_chunks & p_chunks)
        n_gold += len(g_chunks)
        n_pred += len(p_chunks)
    return Scores.from_counts(tp, n_pred, n_gold)


def token_accuracy_scores(
    gold: Sequence[Sequence[str]],
    pred: Sequence[Sequence[str]],
    label: str | None = None,
) -> Scores:
    """Micro token accuracy (P = R = F1), or one-vs-rest P/R for one tag."""
    _check_aligned(gold, pred)
    if label is None:
        correct = total = 0
        for g_labels, p_labels in zip(gold, pred):
            for g, p in zip(g_labels, p_labels):
                if g == IGNORE_LABEL:
                    continue
                total += 1
                correct += g == p
        acc = correct / total if total else 0.0
        return Scores(precision=acc, recall=acc, f1=acc, support=total)
    tp = n_pred = n_gold = 0
    for g_labels, p_labels in zip(gold, pred):
        for g, p in zip(g_labels, p_labels):
            if g == IGNORE_LABEL:
                continue
            n_gold += g == label
            n_pred += p == label
            tp += g == label == p
    return Scores.from_counts(tp, n_pred, n_gold)


def score_sequences(
    gold: Sequence[Sequence[str]],
    pred: Sequence[Sequence[str]],
    task: Task,
    label: str | None = None,
) -> Scores:
    if task is Task.NER_BIO:
        return chunk_prf(gold, pred, label=label)
    return token_accuracy_scores(gold, pred, label=label)


def windowed_scores(
    es: EvalSet,
    preds: Sequence[Sequence[str]],
    alpha: int,
    task: Task = Task.NER_BIO,
    label: str | None = None,
) -> Scores:
    """Scores restricted to copy alpha of every duplicated sequence."""
    if not 1 <= alpha <= es.k:
        raise ValueError(f"alpha must be in 1..{es.k}, got {alpha}")
    if len(preds) != len(es.sequences):
        raise ValueError(f"{len(es.sequences)} sequences but {len(preds)} prediction rows")
    gold_w: list[tuple[str, ...]] = []
    pred_w: list[tuple[str, ...]] = []
    for seq, p_labels in zip(es.sequences, preds):
        if len(p_labels) != len(seq.tokens):
            raise ValueError(
                f"{seq.origin_id}: prediction length {len(p_labels)} != "
                f"sequence length {len(seq.tokens)}"
            )
        start, end = seq.copy_spans[alpha - 1]
        gold_w.append(seq.labels[start : end + 1])
        pred_w.append(tuple(p_labels[start : end + 1]))
    return score_sequences(gold_w, pred_w, task, label=label)


@dataclass(frozen=True)
class WindowedReport:
    alpha: int
    mean_f1: float
    std_f1: float
    mean_p: float
    std_p: float
    mean_r: float
    std_r: float
    k_values: tuple[int, ...]


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    # sample standard deviation (n-1 denominator); a single value has std 0
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate_over_k(
    results: Mapping[tuple[int, int], Scores],
    alpha: int,
    k_range: Sequence[int] = tuple(range(2, 11)),
) -> WindowedReport:
    """Mean and std of windowed scores at one alpha across duplication factors.

    Only factors k >= alpha contribute; requesting an alpha no factor in
    k_range reaches is an error.
    """
    ks = tuple(sorted(k for k in set(k_range) if k >= alpha))
    if not ks:
        raise ValueError(f"no duplication factor in {sorted(set(k_range))} reaches alpha={alpha}")
    missing = [k for k in ks if (k, alpha) not in results]
    if missing:
        raise ValueError(f"missing scores for alpha={alpha} at k={missing}")
    picked = [results[(k, alpha)] for k in ks]
    mean_f1, std_f1 = _mean_std([s.f1 for s in picked])
    mean_p, std_p = _mean_std([s.precision for s in picked])
    mean_r, std_r = _mean_std([s.recall for s in picked])
    return WindowedReport(
        alpha=alpha,
        mean_f1=mean_f1,
        std_f1=std_f1,
        mean_p=mean_p,
        std_p=std_p,
        mean_r=mean_r,
        std_r=std_r,
        k_values=ks,
    )
