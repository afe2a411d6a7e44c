"""Corpus ingestion and interchange.

Readers for whitespace-column NER files (CoNLL-2003 layout) and tab-column
treebank files (CoNLL-U layout), plus a JSON-lines interchange format used by
every downstream command. All file IO is UTF-8 with strict decoding.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

IGNORE_LABEL = "IGN"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"

_BIO_RE = re.compile(r"^(O|[BI]-.+)$")

# CoNLL-U column layout (0-based)
_COL_ID = 0
_COL_FORM = 1
_COL_UPOS = 3
_N_COLS = 10


class Task(str, Enum):
    NER_BIO = "ner_bio"
    POS_FLAT = "pos_flat"


class Split(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class ParseError(ValueError):
    """Malformed input; carries the 1-based line number when known."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass(frozen=True)
class Token:
    surface: str
    label: str
    is_special: bool = False

    def __post_init__(self):
        if not self.surface or any(ch.isspace() for ch in self.surface):
            raise ValueError(
                f"token surface must be non-empty with no whitespace: {self.surface!r}"
            )
        if not self.label:
            raise ValueError("token label must be non-empty")
        if self.is_special and self.label != IGNORE_LABEL:
            raise ValueError(f"special token must carry label {IGNORE_LABEL!r}")


def special_token(surface: str) -> Token:
    return Token(surface=surface, label=IGNORE_LABEL, is_special=True)


@dataclass(frozen=True)
class Sentence:
    id: str
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.id:
            raise ValueError("sentence id must be non-empty")
        if len(self.tokens) < 1:
            raise ValueError(f"sentence {self.id}: must contain at least one token")
        for tok in self.tokens:
            if tok.is_special:
                raise ValueError(f"sentence {self.id}: raw sentences carry no specials")

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(tok.label for tok in self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(tok.surface for tok in self.tokens)


@dataclass(frozen=True)
class Dataset:
    """An immutable split of a corpus. label_inventory is derived, never passed."""

    name: str
    split: Split
    sentences: tuple[Sentence, ...]
    task: Task
    label_inventory: frozenset[str] = field(init=False)

    def __post_init__(self):
        inventory = frozenset(tok.label for s in self.sentences for tok in s.tokens)
        object.__setattr__(self, "label_inventory", inventory)
        if self.task is Task.NER_BIO:
            bad = sorted(lab for lab in inventory if not _BIO_RE.match(lab))
            if bad:
                raise ValueError(f"labels do not follow the O/B-/I- scheme: {bad}")

    def validate(self) -> None:
        """Reject datasets that cannot be meaningfully serialized or analyzed."""
        if not self.sentences:
            raise ValueError(f"dataset {self.name}/{self.split.value}: no sentences")

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(s.length for s in self.sentences)


def infer_task(labels: Iterable[str]) -> Task:
    """BIO-shaped label sets are tagged NER, anything else is flat POS."""
    return Task.NER_BIO if all(_BIO_RE.match(lab) for lab in labels) else Task.POS_FLAT


def parse_conll2003(
    lines: Iterable[str], name: str = "conll2003", split: Split = Split.TRAIN
) -> Dataset:
    """Parse whitespace-column token files; the label is the last column.

    Blank lines separate sentences. Document delimiter blocks (first column
    ``-DOCSTART-``) are dropped. A content line with fewer than two columns is
    a parse error.
    """
    sentences: list[Sentence] = []
    current: list[Token] = []
    is_docstart = False

    def flush():
        nonlocal current, is_docstart
        if current and not is_docstart:
            sentences.append(Sentence(id=f"{split.value}-{len(sentences)}", tokens=tuple(current)))
        current = []
        is_docstart = False

    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush()
            continue
        fields = line.split()
        if fields[0] == "-DOCSTART-":
            is_docstart = True
            continue
        if len(fields) < 2:
            raise ParseError(f"expected at least 2 columns, got {len(fields)}", line_no)
        current.append(Token(surface=fields[0], label=fields[-1]))
    flush()

    if not sentences:
        raise ParseError("no sentences")
    return Dataset(name=name, split=split, sentences=tuple(sentences), task=Task.NER_BIO)


def parse_conllu(
    lines: Iterable[str], name: str = "conllu", split: Split = Split.TRAIN
) -> Dataset:
    """Parse 10-column tab-separated treebank files; the label is the UPOS column.

    Comment lines start with '#'. Multiword range ids ("1-2") and empty-node
    ids ("1.1") are skipped. Any other content line must have exactly 10
    tab-separated columns.
    """
    sentences: list[Sentence] = []
    current: list[Token] = []

    def flush():
        nonlocal current
        if current:
            sentences.append(Sentence(id=f"{split.value}-{len(sentences)}", tokens=tuple(current)))
        current = []

    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != _N_COLS:
            raise ParseError(f"expected {_N_COLS} tab-separated columns, got {len(fields)}", line_no)
        tok_id = fields[_COL_ID]
        if "-" in tok_id or "." in tok_id:
            continue
        if not tok_id.isdigit():
            raise ParseError(f"unrecognized token id {tok_id!r}", line_no)
        try:
            current.append(Token(surface=fields[_COL_FORM], label=fields[_COL_UPOS]))
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from exc
    flush()

    if not sentences:
        raise ParseError("no sentences")
    return Dataset(name=name, split=split, sentences=tuple(sentences), task=Task.POS_FLAT)


def serialize_dataset(ds: Dataset) -> Iterator[str]:
    """Yield one compact JSON record per sentence: {"id", "tokens", "labels"}."""
    ds.validate()
    for s in ds.sentences:
        yield json.dumps(
            {"id": s.id, "tokens": list(s.surfaces), "labels": list(s.labels)},
            ensure_ascii=False,
            separators=(",", ":"),
        )


def parse_jsonl(
    lines: Iterable[str],
    name: str = "jsonl",
    split: Split = Split.TRAIN,
    task: Task | None = None,
) -> Dataset:
    """Inverse of serialize_dataset. Task is inferred from labels unless given."""
    sentences = []
    labels_seen: set[str] = set()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line_no) from exc
        try:
            sid, surfaces, labels = rec["id"], rec["tokens"], rec["labels"]
        except (KeyError, TypeError) as exc:
            raise ParseError("record needs id/tokens/labels fields", line_no) from exc
        if len(surfaces) != len(labels):
            raise ParseError(
                f"tokens/labels length mismatch ({len(surfaces)} vs {len(labels)})", line_no
            )
        try:
            tokens = tuple(Token(surface=t, label=l) for t, l in zip(surfaces, labels))
            sentences.append(Sentence(id=str(sid), tokens=tokens))
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from exc
        labels_seen.update(labels)
    if not sentences:
        raise ParseError("no sentences")
    if task is None:
        task = infer_task(labels_seen)
    return Dataset(name=name, split=split, sentences=tuple(sentences), task=task)


_PARSERS = {
    "conll2003": parse_conll2003,
    "conllu": parse_conllu,
    "jsonl": parse_jsonl,
}

FORMATS = tuple(_PARSERS)


def read_dataset(
    path, fmt: str, name: str | None = None, split: Split = Split.TRAIN
) -> Dataset:
    """Read one file in the given format; invalid UTF-8 is a hard error."""
    if fmt not in _PARSERS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    with open(path, "r", encoding="utf-8", errors="strict") as fp:
        try:
            return _PARSERS[fmt](fp, name=name or fmt, split=split)
        except UnicodeDecodeError as exc:
            raise ParseError(f"{path}: not valid UTF-8: {exc}") from exc


def write_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for line in serialize_dataset(ds):
            fp.write(line + "\n")
