"""Position-shift and packed-concatenation transforms."""

import json
from collections import Counter

import numpy as np
import pytest
from scipy import stats

import posbias.transforms
from posbias.corpus import CLS_TOKEN, IGNORE_LABEL, SEP_TOKEN, ParseError, Token
from posbias.transforms import (
    TRANSFORMS,
    EncodedBatch,
    EncodedSequence,
    apply_transform,
    audit_records,
    cp_partition,
    cp_perturb,
    encode_for_training,
    parse_batches,
    rpp_shift,
    sample_rpp_draw,
    serialize_batches,
)

from conftest import sent


def encode_batch(lengths, max_len=64, seed=0):
    seqs = tuple(
        encode_for_training(
            sent(f"s{i}", [(f"w{i}_{j}", "O") for j in range(n)]), max_len
        )
        for i, n in enumerate(lengths)
    )
    return EncodedBatch(sequences=seqs, max_len=max_len, seed=seed)


class FixedRng:
    """Stands in for a Generator; returns a preset value after a range check."""

    def __init__(self, value):
        self.value = value

    def integers(self, lo, hi, endpoint=False):
        assert lo <= self.value <= (hi if endpoint else hi - 1)
        return self.value


class TestEncodeForTraining:
    def test_layout(self):
        seq = encode_for_training(sent("a", [("x", "B-PER"), ("y", "O")]), 16)
        assert seq.surfaces == (CLS_TOKEN, "x", "y", SEP_TOKEN)
        assert seq.labels == (IGNORE_LABEL, "B-PER", "O", IGNORE_LABEL)
        assert seq.position_ids == (0, 1, 2, 3)
        # length counts everything the shift moves: content plus [SEP]
        assert seq.length == 3

    def test_capacity(self):
        s = sent("a", [(f"w{i}", "O") for i in range(63)])
        with pytest.raises(ValueError, match="65"):
            encode_for_training(s, 64)

    def test_cls_must_be_at_zero(self):
        seq = encode_for_training(sent("a", [("x", "O")]), 8)
        with pytest.raises(ValueError, match="position 0"):
            EncodedSequence(tokens=seq.tokens, position_ids=(5, 6, 7))


class TestRppDraw:
    def test_shift_matches_worked_example(self, monkeypatch):
        # a draw of 7 for a body occupying positions 1..10 lands it on 7..16
        monkeypatch.setattr(
            posbias.transforms, "_sequence_rng", lambda seed, idx: FixedRng(7)
        )
        batch = encode_batch([9], max_len=512)
        out, draws = rpp_shift(batch, rng_seed=0, lower_bound=1)
        assert draws[0].p_r == 7
        assert draws[0].tau == 6
        assert out.sequences[0].position_ids == (0, *range(7, 17))

    def test_default_interval(self):
        draw = sample_rpp_draw(FixedRng(10), l_t=10, max_len=512)
        assert draw.interval == (10, 502)

    def test_uniform_over_interval(self):
        rng = np.random.default_rng(4242)
        draws = [sample_rpp_draw(rng, 10, 512).p_r for _ in range(10_000)]
        assert min(draws) >= 10 and max(draws) <= 502
        counts = np.bincount(draws, minlength=503)[10:]
        assert counts.sum() == 10_000
        assert stats.chisquare(counts).pvalue > 0.01

    def test_empty_interval_falls_back_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            draw = sample_rpp_draw(rng, l_t=300, max_len=512)
            assert draw.interval == (300, 212)
            assert 1 <= draw.p_r <= 212

    def test_degenerate_interval_means_no_shift(self):
        draw = sample_rpp_draw(np.random.default_rng(1), l_t=512, max_len=512)
        assert draw.p_r == 1 and draw.tau == 0

    def test_lower_bound_override(self):
        draw = sample_rpp_draw(FixedRng(1), l_t=10, max_len=512, lower_bound=1)
        assert draw.interval == (1, 502)
        assert draw.tau == 0


class TestRppShift:
    def test_invariants(self):
        batch = encode_batch([5, 12, 3, 25], max_len=64)
        out, draws = rpp_shift(batch, rng_seed=11)
        assert len(out.sequences) == len(batch.sequences)
        for before, after, draw in zip(batch.sequences, out.sequences, draws):
            assert after.surfaces == before.surfaces
            assert after.labels == before.labels
            assert after.position_ids[0] == 0
            body = after.position_ids[1:]
            assert body[0] == draw.p_r
            assert all(b - a == 1 for a, b in zip(body, body[1:]))
            assert max(body) <= batch.max_len - 1
            lo, hi = draw.interval
            assert lo <= draw.p_r <= hi

    def test_deterministic_per_seed(self):
        batch = encode_batch([5, 12, 3, 25], max_len=64)
        first, draws_a = rpp_shift(batch, rng_seed=7)
        second, draws_b = rpp_shift(batch, rng_seed=7)
        assert first == second
        assert draws_a == draws_b
        third, _ = rpp_shift(batch, rng_seed=8)
        assert third != first

    def test_draws_differ_across_sequences(self):
        batch = encode_batch([10] * 12, max_len=512)
        _, draws = rpp_shift(batch, rng_seed=0)
        assert len({d.p_r for d in draws}) > 1


class TestCpPartition:
    def test_single_subset_when_everything_fits(self):
        plan = cp_partition(encode_batch([5, 5, 5], max_len=32))
        assert plan.subsets == ((0, 1, 2),)

    def test_first_fit_backfills(self):
        # costs 21, 21, 6 against capacity 32: third joins the first subset
        plan = cp_partition(encode_batch([20, 20, 5], max_len=32))
        assert plan.subsets == ((0, 2), (1,))

    def test_oversized_member(self):
        raw = EncodedSequence(
            tokens=tuple(Token(f"w{i}", "O", False) for i in range(7)),
            position_ids=tuple(range(7)),
        )
        batch = EncodedBatch(sequences=(raw,), max_len=8, seed=0)
        with pytest.raises(ValueError, match="9 positions"):
            cp_partition(batch)


class TestCpPerturb:
    def test_cardinality_and_capacity(self):
        batch = encode_batch([5, 5, 5, 5], max_len=16)
        out, plan = cp_perturb(batch, rng_seed=3)
        assert plan.subsets == ((0, 1), (2, 3))
        assert len(out.sequences) == len(batch.sequences)
        assert all(len(s.tokens) <= batch.max_len for s in out.sequences)

    def test_concatenation_layout(self):
        batch = encode_batch([2, 3], max_len=16)
        out, _ = cp_perturb(batch, rng_seed=3)
        for seq in out.sequences:
            assert seq.surfaces[0] == CLS_TOKEN
            assert seq.surfaces.count(SEP_TOKEN) == 2
            assert seq.surfaces[-1] == SEP_TOKEN
            assert seq.position_ids == tuple(range(len(seq.tokens)))

    def test_subset_token_multisets_preserved(self):
        batch = encode_batch([4, 6, 3, 5], max_len=32)
        out, plan = cp_perturb(batch, rng_seed=5)
        assert plan.subsets == ((0, 1, 2, 3),)
        expected = Counter(
            tok.surface for s in batch.sequences for tok in s.core_tokens()
        )
        for seq in out.sequences:
            assert Counter(tok.surface for tok in seq.core_tokens()) == expected

    def test_labels_travel_with_tokens(self):
        batch = encode_batch([3, 3], max_len=16)
        by_surface = {
            tok.surface: tok.label
            for s in batch.sequences
            for tok in s.core_tokens()
        }
        out, _ = cp_perturb(batch, rng_seed=1)
        for seq in out.sequences:
            for tok in seq.core_tokens():
                assert tok.label == by_surface[tok.surface]

    def test_all_orderings_when_pair(self):
        batch = encode_batch([3, 3], max_len=16)
        _, plan = cp_perturb(batch, rng_seed=2)
        assert set(plan.permutations[0]) == {(0, 1), (1, 0)}

    def test_singleton_subset_reemits_once(self):
        batch = encode_batch([300, 300], max_len=512)
        out, plan = cp_perturb(batch, rng_seed=2)
        assert plan.subsets == ((0,), (1,))
        assert plan.permutations == (((0,),), ((0,),))
        for before, after in zip(batch.sequences, out.sequences):
            assert after.surfaces == before.surfaces

    def test_larger_subsets_get_distinct_orderings(self):
        batch = encode_batch([2, 2, 2], max_len=16)
        _, plan = cp_perturb(batch, rng_seed=9)
        perms = plan.permutations[0]
        assert len(perms) == 3
        assert len(set(perms)) == 3
        assert all(sorted(p) == [0, 1, 2] for p in perms)

    def test_deterministic_per_seed(self):
        batch = encode_batch([4, 6, 3, 5], max_len=32)
        assert cp_perturb(batch, rng_seed=9) == cp_perturb(batch, rng_seed=9)


class TestApplyTransform:
    def test_names(self):
        assert TRANSFORMS == ("none", "rpp", "cp")

    def test_none_is_identity(self):
        batch = encode_batch([3])
        out, audit = apply_transform(batch, "none", rng_seed=1)
        assert out is batch
        assert audit is None

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown transform"):
            apply_transform(encode_batch([3]), "swap", rng_seed=1)

    def test_forwards_lower_bound(self):
        batch = encode_batch([10], max_len=512)
        _, draws = apply_transform(batch, "rpp", rng_seed=1, rpp_lower_bound=1)
        assert draws[0].interval == (1, 501)


class TestBatchSerialization:
    def test_round_trip(self):
        batches = [encode_batch([3, 4]), encode_batch([2])]
        lines = list(serialize_batches(batches))
        assert parse_batches(lines, max_len=64, seed=0) == batches

    def test_grouping_by_batch_index(self):
        lines = serialize_batches([encode_batch([3, 4]), encode_batch([2, 2, 2])])
        parsed = parse_batches(lines, max_len=64)
        assert [len(b.sequences) for b in parsed] == [2, 3]

    def test_shifted_positions_survive(self):
        shifted, _ = rpp_shift(encode_batch([5, 7], max_len=64), rng_seed=4)
        lines = serialize_batches([shifted])
        parsed = parse_batches(lines, max_len=64, seed=shifted.seed)
        assert parsed == [shifted]

    def test_bad_record_reports_line(self):
        good = list(serialize_batches([encode_batch([2])]))
        with pytest.raises(ParseError, match="line 3"):
            parse_batches(good + ["", "{not json"], max_len=64)

    def test_empty_input(self):
        with pytest.raises(ParseError, match="no batch records"):
            parse_batches([], max_len=64)


class TestAuditRecords:
    def test_rpp_draws(self):
        batch = encode_batch([5, 7], max_len=64)
        _, draws = rpp_shift(batch, rng_seed=3)
        (line,) = audit_records("rpp", [draws])
        rec = json.loads(line)
        assert rec["batch"] == 0
        assert rec["draws"][0] == {
            "p_r": draws[0].p_r,
            "tau": draws[0].tau,
            "interval": list(draws[0].interval),
        }

    def test_cp_plan(self):
        batch = encode_batch([4, 4], max_len=32)
        _, plan = cp_perturb(batch, rng_seed=3)
        (line,) = audit_records("cp", [plan])
        rec = json.loads(line)
        assert rec["subsets"] == [[0, 1]]
        assert sorted(map(tuple, rec["permutations"][0])) == [(0, 1), (1, 0)]

    def test_none_yields_nothing(self):
        assert list(audit_records("none", [object()])) == []
