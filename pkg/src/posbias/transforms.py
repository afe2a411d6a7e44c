"""Training-time batch transforms that reshape the position distribution.

Two perturbations are provided. The random position shift draws a fresh start
position per sequence and moves every non-[CLS] token by the same offset,
leaving [CLS] at position 0. The context perturbation packs a batch into
capacity-bounded subsets and re-emits each subset as randomly ordered
concatenations, which exposes tokens to late absolute positions with real
surrounding content.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import (
    CLS_TOKEN,
    IGNORE_LABEL,
    SEP_TOKEN,
    ParseError,
    Sentence,
    Token,
    special_token,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncodedSequence:
    tokens: tuple[Token, ...]
    position_ids: tuple[int, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("encoded sequence must be non-empty")
        if len(self.position_ids) != len(self.tokens):
            raise ValueError("position_ids must align with tokens")
        if any(p < 0 for p in self.position_ids):
            raise ValueError("position ids must be non-negative")
        if self.tokens[0].surface == CLS_TOKEN and self.position_ids[0] != 0:
            raise ValueError(f"{CLS_TOKEN} must sit at position 0")
        for tok in self.tokens:
            if tok.is_special != (tok.label == IGNORE_LABEL):
                raise ValueError(f"specials and {IGNORE_LABEL} must coincide")

    @property
    def length(self) -> int:
        """Token count excluding the leading [CLS]."""
        has_cls = self.tokens[0].surface == CLS_TOKEN and self.tokens[0].is_special
        return len(self.tokens) - (1 if has_cls else 0)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(tok.label for tok in self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(tok.surface for tok in self.tokens)

    def core_tokens(self) -> tuple[Token, ...]:
        return tuple(tok for tok in self.tokens if not tok.is_special)


@dataclass(frozen=True)
class EncodedBatch:
    sequences: tuple[EncodedSequence, ...]
    max_len: int
    seed: int

    def __post_init__(self):
        for seq in self.sequences:
            if len(seq.tokens) > self.max_len:
                raise ValueError(
                    f"sequence of {len(seq.tokens)} tokens exceeds max length {self.max_len}"
                )


@dataclass(frozen=True)
class RppDraw:
    p_r: int
    tau: int
    interval: tuple[int, int]


@dataclass(frozen=True)
class CpPlan:
    subsets: tuple[tuple[int, ...], ...]
    permutations: tuple[tuple[tuple[int, ...], ...], ...] | None = None


def encode_for_training(s: Sentence, max_len: int) -> EncodedSequence:
    """[CLS] x [SEP] with specials labelled IGN and positions 0..len+1."""
    if s.length + 2 > max_len:
        raise ValueError(
            f"{s.id}: encoded sequence needs {s.length + 2} positions, max length is {max_len}"
        )
    tokens = (special_token(CLS_TOKEN), *s.tokens, special_token(SEP_TOKEN))
    return EncodedSequence(tokens=tokens, position_ids=tuple(range(len(tokens))))


def _sequence_rng(seed: int, index: int) -> np.random.Generator:
    # an independent, deterministic stream per (seed, index)
    return np.random.default_rng((seed, index))


def _shift_positions(seq: EncodedSequence, tau: int) -> EncodedSequence:
    new_positions = tuple(
        0 if (i == 0 and tok.surface == CLS_TOKEN and tok.is_special) else p + tau
        for i, (tok, p) in enumerate(zip(seq.tokens, seq.position_ids))
    )
    return EncodedSequence(tokens=seq.tokens, position_ids=new_positions)


def sample_rpp_draw(
    rng: np.random.Generator, l_t: int, max_len: int, lower_bound: int | None = None
) -> RppDraw:
    """Draw a start position uniformly on [lower_bound, max_len - l_t].

    The default lower bound is l_t. If the interval is empty the draw falls
    back to [1, max_len - l_t]; if that is empty too the shift degrades to 0.
    """
    lo = l_t if lower_bound is None else lower_bound
    hi = max_len - l_t
    interval = (lo, hi)
    if lo <= hi:
        p_r = int(rng.integers(lo, hi, endpoint=True))
    elif hi >= 1:
        p_r = int(rng.integers(1, hi, endpoint=True))
    else:
        p_r = 1
    return RppDraw(p_r=p_r, tau=p_r - 1, interval=interval)


def rpp_shift(
    batch: EncodedBatch, rng_seed: int, lower_bound: int | None = None
) -> tuple[EncodedBatch, list[RppDraw]]:
    """Shift every sequence to an independently drawn start position.

    Token content, order, and labels are untouched; only position ids move.
    Draws are split deterministically per (rng_seed, sequence index).
    """
    shifted: list[EncodedSequence] = []
    draws: list[RppDraw] = []
    for idx, seq in enumerate(batch.sequences):
        rng = _sequence_rng(rng_seed, idx)
        draw = sample_rpp_draw(rng, seq.length, batch.max_len, lower_bound=lower_bound)
        draws.append(draw)
        shifted.append(_shift_positions(seq, draw.tau))
    out = EncodedBatch(sequences=tuple(shifted), max_len=batch.max_len, seed=rng_seed)
    return out, draws


def _packing_cost(seq: EncodedSequence) -> int:
    # one slot per content token plus this member's [SEP]
    return len(seq.core_tokens()) + 1


def cp_partition(batch: EncodedBatch) -> CpPlan:
    """Greedy first-fit packing under max_len, counting one [CLS] per subset."""
    subsets: list[list[int]] = []
    budgets: list[int] = []
    for idx, seq in enumerate(batch.sequences):
        cost = _packing_cost(seq)
        if 1 + cost > batch.max_len:
            raise ValueError(
                f"sequence {idx} needs {1 + cost} positions alone, max length is {batch.max_len}"
            )
        for si, budget in enumerate(budgets):
            if budget + cost <= batch.max_len:
                subsets[si].append(idx)
                budgets[si] += cost
                break
        else:
            subsets.append([idx])
            budgets.append(1 + cost)
    return CpPlan(subsets=tuple(tuple(s) for s in subsets))


def _distinct_permutations(rng: np.random.Generator, n: int) -> tuple[tuple[int, ...], ...]:
    """n pairwise-distinct orderings of range(n); all of them when n <= 2."""
    if n == 1:
        return ((0,),)
    perms: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    while len(perms) < n:
        cand = tuple(int(v) for v in rng.permutation(n))
        if cand not in seen:
            seen.add(cand)
            perms.append(cand)
    return tuple(perms)


def _concatenate(members: Sequence[EncodedSequence]) -> EncodedSequence:
    tokens: list[Token] = [special_token(CLS_TOKEN)]
    for member in members:
        tokens.extend(member.core_tokens())
        tokens.append(special_token(SEP_TOKEN))
    return EncodedSequence(tokens=tuple(tokens), position_ids=tuple(range(len(tokens))))


def cp_perturb(batch: EncodedBatch, rng_seed: int) -> tuple[EncodedBatch, CpPlan]:
    """Re-emit each packed subset as per-member random concatenation orders.

    A subset of n members yields n concatenated sequences, one per sampled
    ordering, so the output batch has the input's cardinality. Orderings
    within a subset are pairwise distinct.
    """
    plan = cp_partition(batch)
    outputs: list[EncodedSequence] = []
    all_perms: list[tuple[tuple[int, ...], ...]] = []
    for si, subset in enumerate(plan.subsets):
        rng = _sequence_rng(rng_seed, si)
        perms = _distinct_permutations(rng, len(subset))
        all_perms.append(perms)
        for perm in perms:
            members = [batch.sequences[subset[j]] for j in perm]
            outputs.append(_concatenate(members))
    out = EncodedBatch(sequences=tuple(outputs), max_len=batch.max_len, seed=rng_seed)
    return out, CpPlan(subsets=plan.subsets, permutations=tuple(all_perms))


def apply_transform(
    batch: EncodedBatch,
    transform: str,
    rng_seed: int,
    rpp_lower_bound: int | None = None,
):
    """Dispatch by name; returns (batch, audit) where audit is None for 'none'."""
    if transform == "none":
        return batch, None
    if transform == "rpp":
        return rpp_shift(batch, rng_seed, lower_bound=rpp_lower_bound)
    if transform == "cp":
        return cp_perturb(batch, rng_seed)
    raise ValueError(f"unknown transform {transform!r}; expected none, rpp, or cp")


TRANSFORMS = ("none", "rpp", "cp")


def serialize_batches(batches: Iterable[EncodedBatch]) -> Iterator[str]:
    """One JSON record per sequence, tagged with its batch index."""
    for bi, batch in enumerate(batches):
        for seq in batch.sequences:
            yield json.dumps(
                {
                    "batch": bi,
                    "tokens": list(seq.surfaces),
                    "labels": list(seq.labels),
                    "position_ids": list(seq.position_ids),
                },
                ensure_ascii=False,
                separators=(",", ":"),
            )


def parse_batches(lines: Iterable[str], max_len: int, seed: int = 0) -> list[EncodedBatch]:
    """Group consecutive records by their batch index."""
    grouped: list[tuple[int, list[EncodedSequence]]] = []
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
            seq = EncodedSequence(tokens=tokens, position_ids=tuple(rec["position_ids"]))
            bi = int(rec["batch"])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ParseError(f"bad batch record: {exc}", line_no) from exc
        if grouped and grouped[-1][0] == bi:
            grouped[-1][1].append(seq)
        else:
            grouped.append((bi, [seq]))
    if not grouped:
        raise ParseError("no batch records")
    return [
        EncodedBatch(sequences=tuple(seqs), max_len=max_len, seed=seed)
        for _, seqs in grouped
    ]


def audit_records(
    transform: str, audits: Sequence[object]
) -> Iterator[str]:
    """JSON audit lines, one per batch, describing the draws or the plan."""
    for bi, audit in enumerate(audits):
        if transform == "rpp":
            body = {
                "batch": bi,
                "draws": [
                    {"p_r": d.p_r, "tau": d.tau, "interval": list(d.interval)}
                    for d in audit
                ],
            }
        elif transform == "cp":
            body = {
                "batch": bi,
                "subsets": [list(s) for s in audit.subsets],
                "permutations": [
                    [list(p) for p in perms] for perms in (audit.permutations or ())
                ],
            }
        else:
            continue
        yield json.dumps(body, ensure_ascii=False, separators=(",", ":"))
