"""Value-type bindings for external training loops.

Everything that crosses this boundary is a plain string, int, or list, so a
caller never touches the core's dataclasses or numpy state. Each call
delegates to the in-process library and converts back; given equal seeds the
results are identical to the command-line pipeline, byte for byte after
serialization. All calls are reentrant and share no mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from posbias import __version__ as _core_version
from posbias.corpus import IGNORE_LABEL, Sentence, Token, infer_task
from posbias.duplication import duplicate_sentence, read_eval_set
from posbias.metrics import windowed_scores
from posbias.transforms import EncodedBatch, EncodedSequence, cp_perturb, rpp_shift

__version__ = "0.1.0"

__all__ = [
    "BoundaryBatch",
    "bind_duplicate",
    "bind_rpp",
    "bind_cp",
    "bind_windowed_eval",
    "core_version",
]


def core_version() -> str:
    return _core_version


@dataclass(frozen=True)
class BoundaryBatch:
    """A batch as parallel lists: one row per sequence, value types only."""

    tokens: list[list[str]] = field(default_factory=list)
    labels: list[list[str]] = field(default_factory=list)
    position_ids: list[list[int]] = field(default_factory=list)
    max_len: int = 512
    seed: int = 0

    def __post_init__(self):
        if not (len(self.tokens) == len(self.labels) == len(self.position_ids)):
            raise ValueError("tokens, labels, and position_ids need one row per sequence")
        for toks, labs, pids in zip(self.tokens, self.labels, self.position_ids):
            if not (len(toks) == len(labs) == len(pids)):
                raise ValueError("rows must have parallel lengths")


def _to_native(b: BoundaryBatch) -> EncodedBatch:
    sequences = []
    for toks, labs, pids in zip(b.tokens, b.labels, b.position_ids):
        row = tuple(
            Token(surface=t, label=l, is_special=(l == IGNORE_LABEL))
            for t, l in zip(toks, labs)
        )
        sequences.append(
            EncodedSequence(tokens=row, position_ids=tuple(int(p) for p in pids))
        )
    return EncodedBatch(sequences=tuple(sequences), max_len=b.max_len, seed=b.seed)


def _from_native(batch: EncodedBatch, seed: int) -> BoundaryBatch:
    return BoundaryBatch(
        tokens=[list(s.surfaces) for s in batch.sequences],
        labels=[list(s.labels) for s in batch.sequences],
        position_ids=[list(s.position_ids) for s in batch.sequences],
        max_len=batch.max_len,
        seed=seed,
    )


def bind_rpp(batch: BoundaryBatch, rpp_lower_bound: int | None = None) -> BoundaryBatch:
    """Shift every sequence to a random start position drawn per batch.seed."""
    shifted, _ = rpp_shift(_to_native(batch), batch.seed, lower_bound=rpp_lower_bound)
    return _from_native(shifted, batch.seed)


def bind_cp(batch: BoundaryBatch) -> BoundaryBatch:
    """Pack and re-concatenate the batch in seed-deterministic random orders."""
    perturbed, _ = cp_perturb(_to_native(batch), batch.seed)
    return _from_native(perturbed, batch.seed)


def bind_duplicate(
    tokens: list[str], labels: list[str], k: int, max_len: int, origin_id: str = "s0"
) -> dict:
    """Duplicate one sentence k times; returns the eval-set record as a dict."""
    s = Sentence(
        id=origin_id,
        tokens=tuple(Token(surface=t, label=l) for t, l in zip(tokens, labels)),
    )
    d = duplicate_sentence(s, k, max_len)
    return {
        "origin_id": d.origin_id,
        "k": d.k,
        "tokens": list(d.surfaces),
        "labels": list(d.labels),
        "position_ids": list(d.position_ids),
        "copy_spans": [list(span) for span in d.copy_spans],
    }


def bind_windowed_eval(eval_set_path, predictions: list[list[str]], alpha: int) -> dict:
    """Score predictions against copy alpha of an eval-set file."""
    es = read_eval_set(eval_set_path)
    task = infer_task(
        lab for seq in es.sequences for lab in seq.labels if lab != IGNORE_LABEL
    )
    s = windowed_scores(es, predictions, alpha, task)
    return {
        "alpha": alpha,
        "precision": s.precision,
        "recall": s.recall,
        "f1": s.f1,
        "support": s.support,
    }
