from dataclasses import dataclass
from pathlib import Path

import pytest

from posbias.corpus import Dataset, Sentence, Split, Task, Token, write_dataset

DATA = Path(__file__).parent / "data"


def sent(sid: str, pairs) -> Sentence:
    return Sentence(id=sid, tokens=tuple(Token(surface=s, label=l) for s, l in pairs))


def _length_profile(n: int, n_le25: int, n_ge50: int) -> list[int]:
    """Deterministic length list with exactly the requested share counts."""
    n_mid = n - n_le25 - n_ge50
    lengths = [3 + i % 23 for i in range(n_le25)]            # 3..25
    lengths += [26 + i % 24 for i in range(n_mid)]           # 26..49
    lengths += [50 + i % 31 for i in range(n_ge50)]          # 50..80
    return lengths


def _profile_corpus(name: str, lengths: list[int]) -> Dataset:
    tags = ("NOUN", "VERB")
    sentences = tuple(
        Sentence(
            id=f"{name}-{i}",
            tokens=tuple(Token(f"w{j % 7}", tags[j % 2]) for j in range(length)),
        )
        for i, length in enumerate(lengths)
    )
    return Dataset(name=name, split=Split.TRAIN, sentences=sentences, task=Task.POS_FLAT)


@dataclass(frozen=True)
class ProfiledCorpus:
    dataset: Dataset
    path: Path
    n: int
    n_le25: int
    n_ge50: int


@pytest.fixture(scope="session")
def length_profiled(tmp_path_factory):
    """Two corpora with exactly known length-share counts, on disk and in memory.

    One mirrors a treebank dominated by short-to-mid sentences with a visible
    long tail, the other a social-media corpus that is shorter still.
    """
    root = tmp_path_factory.mktemp("profiled")
    out = {}
    for name, n, n_le25, n_ge50 in (
        ("udlike", 16600, 13612, 830),
        ("tweetlike", 3500, 3010, 4),
    ):
        ds = _profile_corpus(name, _length_profile(n, n_le25, n_ge50))
        path = root / f"{name}.jsonl"
        write_dataset(ds, path)
        out[name] = ProfiledCorpus(dataset=ds, path=path, n=n, n_le25=n_le25, n_ge50=n_ge50)
    return out


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def tiny_ner() -> Dataset:
    """Three NER sentences of lengths 5, 2, and 3."""
    sentences = (
        sent("a", [("Alice", "B-PER"), ("met", "O"), ("Bob", "B-PER"),
                   ("yesterday", "O"), (".", "O")]),
        sent("b", [("New", "B-LOC"), ("York", "I-LOC")]),
        sent("c", [("nothing", "O"), ("happened", "O"), (".", "O")]),
    )
    return Dataset(name="tiny", split=Split.TEST, sentences=sentences, task=Task.NER_BIO)


@pytest.fixture
def tiny_pos() -> Dataset:
    sentences = (
        sent("p1", [("the", "DET"), ("cat", "NOUN"), ("sat", "VERB")]),
        sent("p2", [("it", "PRON"), ("ran", "VERB")]),
    )
    return Dataset(name="tinypos", split=Split.TEST, sentences=sentences, task=Task.POS_FLAT)
