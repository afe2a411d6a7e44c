"""Bound calls must reproduce the native pipeline exactly.

The headline check serializes 100 random seeded batches, pushes them through
the installed command line, and compares bytes against the bound route using
a serializer written here rather than imported from the core.
"""

import json
import random
import shutil
import subprocess

import pytest

posbias_bindings = pytest.importorskip("posbias_bindings")

import posbias
from posbias.corpus import IGNORE_LABEL, Task
from posbias.duplication import build_eval_set, serialize_eval_set, write_eval_set
from posbias.metrics import windowed_scores
from posbias.toytagger import SynthConfig, generate_synthetic_corpus
from posbias_bindings import (
    BoundaryBatch,
    bind_cp,
    bind_duplicate,
    bind_rpp,
    bind_windowed_eval,
)

CLI = shutil.which("posbias")

pytestmark = pytest.mark.skipif(CLI is None, reason="posbias CLI not on PATH")


def canonical_lines(batches):
    """The batch JSONL schema, written independently of the core."""
    lines = []
    for bi, bb in enumerate(batches):
        for toks, labs, pids in zip(bb.tokens, bb.labels, bb.position_ids):
            lines.append(
                json.dumps(
                    {"batch": bi, "tokens": toks, "labels": labs, "position_ids": pids},
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
    return lines


def random_batch(rng, max_len=64):
    """One encoded batch of 2..5 short sentences as plain lists."""
    tokens, labels, positions = [], [], []
    for _ in range(rng.randint(2, 5)):
        n = rng.randint(3, 12)
        surfaces = [f"t{rng.randint(0, 999)}" for _ in range(n)]
        labs = []
        for _ in range(n):
            roll = rng.random()
            if roll < 0.6:
                labs.append("O")
            elif roll < 0.8:
                labs.append("B-ENT")
            else:
                labs.append("I-ENT")
        tokens.append(["[CLS]", *surfaces, "[SEP]"])
        labels.append([IGNORE_LABEL, *labs, IGNORE_LABEL])
        positions.append(list(range(n + 2)))
    return tokens, labels, positions


class FixedRng:
    def __init__(self, value):
        self.value = value

    def integers(self, lo, hi, endpoint=False):
        assert lo <= self.value <= (hi if endpoint else hi - 1)
        return self.value


class TestVersion:
    def test_matches_core(self):
        assert posbias_bindings.__version__ == posbias.__version__
        assert posbias_bindings.core_version() == posbias.__version__


class TestBoundaryBatch:
    def test_ragged_rows_rejected(self):
        with pytest.raises(ValueError, match="one row per sequence"):
            BoundaryBatch(tokens=[["a"]], labels=[], position_ids=[])
        with pytest.raises(ValueError, match="parallel lengths"):
            BoundaryBatch(tokens=[["a", "b"]], labels=[["O"]], position_ids=[[0, 1]])


class TestAgainstNativeCli:
    def test_hundred_batches_byte_identical(self, tmp_path):
        rng = random.Random(20250815)
        seeds = [rng.randint(0, 10**6) for _ in range(10)]
        for transform, bound in (("rpp", bind_rpp), ("cp", bind_cp)):
            for gi, seed in enumerate(seeds):
                batches = [random_batch(rng) for _ in range(10)]
                inputs = [
                    BoundaryBatch(
                        tokens=t, labels=l, position_ids=p, max_len=64, seed=seed
                    )
                    for t, l, p in batches
                ]
                infile = tmp_path / f"{transform}_{gi}_in.jsonl"
                outfile = tmp_path / f"{transform}_{gi}_out.jsonl"
                infile.write_text(
                    "\n".join(canonical_lines(inputs)) + "\n", encoding="utf-8"
                )
                proc = subprocess.run(
                    [CLI, "perturb", str(infile), "--transform", transform,
                     "--seed", str(seed), "--max-len", "64", "--out", str(outfile)],
                    capture_output=True, text=True,
                )
                assert proc.returncode == 0, proc.stderr
                native = outfile.read_text(encoding="utf-8")
                ours = "\n".join(canonical_lines([bound(b) for b in inputs])) + "\n"
                assert ours == native


class TestRppExamples:
    def test_degenerate_interval_is_identity(self):
        tokens = [["[CLS]", *(f"w{i}" for i in range(62)), "[SEP]"]]
        labels = [[IGNORE_LABEL, *["O"] * 62, IGNORE_LABEL]]
        positions = [list(range(64))]
        batch = BoundaryBatch(
            tokens=tokens, labels=labels, position_ids=positions, max_len=64, seed=9
        )
        assert bind_rpp(batch).position_ids == positions

    def test_forced_draw_lands_on_seven(self, monkeypatch):
        import posbias.transforms

        monkeypatch.setattr(
            posbias.transforms, "_sequence_rng", lambda seed, idx: FixedRng(7)
        )
        batch = BoundaryBatch(
            tokens=[["[CLS]", *(f"w{i}" for i in range(9)), "[SEP]"]],
            labels=[[IGNORE_LABEL, *["O"] * 9, IGNORE_LABEL]],
            position_ids=[list(range(11))],
            max_len=512,
            seed=0,
        )
        out = bind_rpp(batch, rpp_lower_bound=1)
        assert out.position_ids == [[0, *range(7, 17)]]


class TestCpExamples:
    def test_single_member_reemitted_with_trailing_sep(self):
        batch = BoundaryBatch(
            tokens=[["[CLS]", "a", "b", "[SEP]"]],
            labels=[[IGNORE_LABEL, "O", "O", IGNORE_LABEL]],
            position_ids=[[0, 1, 2, 3]],
            max_len=8,
            seed=3,
        )
        out = bind_cp(batch)
        assert out.tokens == [["[CLS]", "a", "b", "[SEP]"]]
        assert out.position_ids == [[0, 1, 2, 3]]

    def test_pair_yields_both_orderings(self):
        batch = BoundaryBatch(
            tokens=[["[CLS]", "a1", "a2", "[SEP]"], ["[CLS]", "b1", "b2", "[SEP]"]],
            labels=[[IGNORE_LABEL, "O", "O", IGNORE_LABEL]] * 2,
            position_ids=[[0, 1, 2, 3]] * 2,
            max_len=16,
            seed=5,
        )
        out = bind_cp(batch)
        joined = {" ".join(row) for row in out.tokens}
        assert joined == {
            "[CLS] a1 a2 [SEP] b1 b2 [SEP]",
            "[CLS] b1 b2 [SEP] a1 a2 [SEP]",
        }


class TestDuplicate:
    def test_record_matches_native_serialization(self):
        rec = bind_duplicate(["New", "York"], ["B-LOC", "I-LOC"], k=3, max_len=64)
        from posbias.corpus import Sentence, Token
        from posbias.duplication import EvalSet, duplicate_sentence

        s = Sentence(
            id="s0",
            tokens=(Token("New", "B-LOC"), Token("York", "I-LOC")),
        )
        native = duplicate_sentence(s, 3, 64)
        (line,) = serialize_eval_set(EvalSet(k=3, sequences=(native,)))
        assert rec == json.loads(line)

    def test_over_capacity_propagates(self):
        with pytest.raises(ValueError, match="max length"):
            bind_duplicate(["a"] * 30, ["O"] * 30, k=10, max_len=64)


class TestWindowedEval:
    def test_matches_library_scores(self, tmp_path):
        _, test_ds = generate_synthetic_corpus(
            SynthConfig(n_train=5, n_test=40, seed=3)
        )
        es = build_eval_set(test_ds, 3, max_len=256)
        path = tmp_path / "eval_k3.jsonl"
        write_eval_set(es, path)
        rng = random.Random(8)
        preds = []
        for seq in es.sequences:
            preds.append(
                [rng.choice(["O", "B-PER", "I-PER", "B-LOC"]) for _ in seq.tokens]
            )
        for alpha in (1, 2, 3):
            got = bind_windowed_eval(path, preds, alpha)
            want = windowed_scores(es, preds, alpha, Task.NER_BIO)
            assert abs(got["precision"] - want.precision) < 1e-12
            assert abs(got["recall"] - want.recall) < 1e-12
            assert abs(got["f1"] - want.f1) < 1e-12
            assert got["support"] == want.support
            assert got["alpha"] == alpha
