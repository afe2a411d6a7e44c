"""Duplicated evaluation sets.

A test sentence x becomes [CLS] x [SEP] x [SEP] ... (k copies), with
continuous position ids from 0 and one inclusive (start, end) span recorded
per copy so that scoring can be restricted to any single copy later.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator

from .corpus import (
    CLS_TOKEN,
    IGNORE_LABEL,
    SEP_TOKEN,
    Dataset,
    ParseError,
    Sentence,
    Token,
    special_token,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DuplicatedSequence:
    origin_id: str
    k: int
    tokens: tuple[Token, ...]
    position_ids: tuple[int, ...]
    copy_spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        n = len(self.tokens)
        if len(self.position_ids) != n:
            raise ValueError(f"{self.origin_id}: position_ids length mismatch")
        if self.position_ids != tuple(range(n)):
            raise ValueError(f"{self.origin_id}: position ids must run 0..{n - 1}")
        if not self.tokens or self.tokens[0].surface != CLS_TOKEN:
            raise ValueError(f"{self.origin_id}: sequence must start with {CLS_TOKEN}")
        if len(self.copy_spans) != self.k:
            raise ValueError(f"{self.origin_id}: expected {self.k} copy spans")
        for tok in self.tokens:
            if tok.is_special != (tok.label == IGNORE_LABEL):
                raise ValueError(f"{self.origin_id}: specials and {IGNORE_LABEL} must coincide")
        width = None
        prev_end = 0
        for start, end in self.copy_spans:
            if not 0 < start <= end < n:
                raise ValueError(f"{self.origin_id}: span ({start}, {end}) out of range")
            if start <= prev_end:
                raise ValueError(f"{self.origin_id}: copy spans must be disjoint and ordered")
            if width is None:
                width = end - start + 1
            elif end - start + 1 != width:
                raise ValueError(f"{self.origin_id}: copy spans must have equal width")
            prev_end = end

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(tok.label for tok in self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(tok.surface for tok in self.tokens)


@dataclass(frozen=True)
class EvalSet:
    k: int
    sequences: tuple[DuplicatedSequence, ...]

    def __post_init__(self):
        for seq in self.sequences:
            if seq.k != self.k:
                raise ValueError(f"{seq.origin_id}: k={seq.k} differs from set k={self.k}")


def required_length(sentence_length: int, k: int) -> int:
    """Token count of the duplicated layout: [CLS] plus k copies of x [SEP]."""
    return 1 + k * (sentence_length + 1)


def duplicate_sentence(s: Sentence, k: int, max_len: int) -> DuplicatedSequence:
    if k < 1:
        raise ValueError(f"duplication factor must be >= 1, got {k}")
    needed = required_length(s.length, k)
    if needed > max_len:
        raise ValueError(
            f"{s.id}: duplicated sequence needs {needed} positions, max length is {max_len}"
        )
    tokens: list[Token] = [special_token(CLS_TOKEN)]
    spans: list[tuple[int, int]] = []
    for _ in range(k):
        start = len(tokens)
        tokens.extend(s.tokens)
        spans.append((start, len(tokens) - 1))
        tokens.append(special_token(SEP_TOKEN))
    return DuplicatedSequence(
        origin_id=s.id,
        k=k,
        tokens=tuple(tokens),
        position_ids=tuple(range(len(tokens))),
        copy_spans=tuple(spans),
    )


def build_eval_set(ds: Dataset, k: int, max_len: int) -> EvalSet:
    """Duplicate every sentence; sentences that cannot fit are dropped."""
    ds.validate()
    kept: list[DuplicatedSequence] = []
    dropped = 0
    for s in ds.sentences:
        if required_length(s.length, k) > max_len:
            dropped += 1
            continue
        kept.append(duplicate_sentence(s, k, max_len))
    if dropped:
        logger.warning(
            "dropped %d/%d sentences over capacity (k=%d, max_len=%d)",
            dropped, len(ds.sentences), k, max_len,
        )
    if not kept:
        raise ValueError(f"every sentence exceeds capacity at k={k}, max_len={max_len}")
    return EvalSet(k=k, sequences=tuple(kept))


def serialize_eval_set(es: EvalSet) -> Iterator[str]:
    for seq in es.sequences:
        yield json.dumps(
            {
                "origin_id": seq.origin_id,
                "k": seq.k,
                "tokens": list(seq.surfaces),
                "labels": list(seq.labels),
                "position_ids": list(seq.position_ids),
                "copy_spans": [list(span) for span in seq.copy_spans],
            },
            ensure_ascii=False,
            separators=(",", ":"),
        )


def parse_eval_set(lines: Iterable[str]) -> EvalSet:
    sequences: list[DuplicatedSequence] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            tokens = tuple(
                Token(surface=t, label=l, is_special=(l == IGNORE_LABEL))
                for t, l in zip(rec["tokens"], rec["labels"], strict=True)
            )
            sequences.append(
                DuplicatedSequence(
                    origin_id=str(rec["origin_id"]),
                    k=int(rec["k"]),
                    tokens=tokens,
                    position_ids=tuple(rec["position_ids"]),
                    copy_spans=tuple((int(a), int(b)) for a, b in rec["copy_spans"]),
                )
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ParseError(f"bad eval-set record: {exc}", line_no) from exc
    if not sequences:
        raise ParseError("no sequences in eval set")
    return EvalSet(k=sequences[0].k, sequences=tuple(sequences))


def read_eval_set(path) -> EvalSet:
    with open(path, "r", encoding="utf-8", errors="strict") as fp:
        return parse_eval_set(fp)


def write_eval_set(es: EvalSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for line in serialize_eval_set(es):
            fp.write(line + "\n")


def write_predictions(origin_ids: Iterable[str], preds: Iterable[Iterable[str]], path) -> None:
    """Prediction records aligned line-by-line with an eval-set file."""
    with open(path, "w", encoding="utf-8") as fp:
        for oid, labels in zip(origin_ids, preds):
            rec = {"origin_id": oid, "pred_labels": list(labels)}
            fp.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")


def read_predictions(path, es: EvalSet) -> list[list[str]]:
    """Load predictions for an eval set, checking alignment by origin_id."""
    preds: list[list[str]] = []
    with open(path, "r", encoding="utf-8", errors="strict") as fp:
        for line_no, raw in enumerate(fp, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                preds.append(list(rec["pred_labels"]))
                oid = str(rec["origin_id"])
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad prediction record: {exc}", line_no) from exc
            idx = len(preds) - 1
            if idx < len(es.sequences) and es.sequences[idx].origin_id != oid:
                raise ParseError(
                    f"prediction origin_id {oid!r} does not match "
                    f"eval set entry {es.sequences[idx].origin_id!r}",
                    line_no,
                )
    if len(preds) != len(es.sequences):
        raise ValueError(
            f"eval set has {len(es.sequences)} sequences but {len(preds)} predictions"
        )
    return preds
