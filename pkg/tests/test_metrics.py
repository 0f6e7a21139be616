import json

import pytest
from hypothesis import given, strategies as st

from textrot.core import RotationClass
from textrot.metrics import confusion, hmean

H = RotationClass.HORIZONTAL
V = RotationClass.VERTICAL


class TestConfusion:
    def test_all_correct(self):
        counts = confusion([H] * 5 + [V] * 5, [H] * 5 + [V] * 5)
        for cls in (H, V):
            assert counts.per_class[cls].fp == 0
            assert counts.per_class[cls].fn == 0
        assert counts.n_samples == 10

    def test_all_flipped(self):
        counts = confusion([V] * 4 + [H] * 4, [H] * 4 + [V] * 4)
        assert counts.per_class[H].tp == 0
        assert counts.per_class[V].tp == 0

    def test_hand_tabulated(self):
        # pairs: (H,H) (H,V) (V,V) (V,V) (V,H)
        counts = confusion([H, H, V, V, V], [H, V, V, V, H])
        v = counts.per_class[V]
        assert (v.tp, v.fp, v.fn) == (2, 1, 1)
        assert v.total == 5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([H], [H, V])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            confusion([], [])

    def test_counts_sum_to_n(self):
        counts = confusion([H, V, H], [V, V, H])
        for cls in (H, V):
            assert counts.per_class[cls].total == 3


class TestHmean:
    def test_perfect(self):
        report = hmean(confusion([H, V], [H, V]))
        assert report.macro_hmean == 1.0
        assert report.precision[H] == report.recall[H] == 1.0

    def test_derived_value(self):
        # vertical TP=3, FP=1, FN=1 -> P = R = 0.75, hmean = 2*.75*.75/1.5 = 0.75
        preds = [V, V, V, V, H, H]
        truths = [V, V, V, H, V, H]
        report = hmean(confusion(preds, truths))
        assert report.precision[V] == pytest.approx(0.75)
        assert report.recall[V] == pytest.approx(0.75)
        assert report.hmean_per_class[V] == pytest.approx(0.75)

    def test_never_predicted_class_is_zero(self):
        report = hmean(confusion([H, H, H], [H, H, V]))
        assert report.hmean_per_class[V] == 0.0

    def test_macro_is_mean_of_per_class(self):
        report = hmean(confusion([H, V, V], [V, V, H]))
        expected = (report.hmean_per_class[H] + report.hmean_per_class[V]) / 2
        assert report.macro_hmean == pytest.approx(expected)

    @given(
        st.lists(
            st.tuples(st.sampled_from([H, V]), st.sampled_from([H, V])),
            min_size=1,
            max_size=40,
        ),
        st.randoms(use_true_random=False),
    )
    def test_permutation_invariance(self, pairs, rnd):
        preds, truths = zip(*pairs)
        before = hmean(confusion(list(preds), list(truths)))
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        sp, st_ = zip(*shuffled)
        after = hmean(confusion(list(sp), list(st_)))
        assert before.to_dict() == after.to_dict()

    @given(
        st.lists(
            st.tuples(st.sampled_from([H, V]), st.sampled_from([H, V])),
            min_size=1,
            max_size=40,
        )
    )
    def test_class_swap_symmetry(self, pairs):
        preds, truths = zip(*pairs)
        swap = {H: V, V: H}
        orig = hmean(confusion(list(preds), list(truths)))
        swapped = hmean(
            confusion([swap[p] for p in preds], [swap[t] for t in truths])
        )
        assert swapped.hmean_per_class[H] == pytest.approx(orig.hmean_per_class[V])
        assert swapped.hmean_per_class[V] == pytest.approx(orig.hmean_per_class[H])
        assert swapped.macro_hmean == pytest.approx(orig.macro_hmean)

    @given(
        st.lists(
            st.tuples(st.sampled_from([H, V]), st.sampled_from([H, V])),
            min_size=1,
            max_size=60,
        )
    )
    def test_values_in_unit_interval_and_perfection(self, pairs):
        preds, truths = zip(*pairs)
        report = hmean(confusion(list(preds), list(truths)))
        vals = (
            list(report.precision.values())
            + list(report.recall.values())
            + list(report.hmean_per_class.values())
            + [report.macro_hmean]
        )
        assert all(0.0 <= v <= 1.0 for v in vals)
        all_correct = all(p is t for p, t in pairs)
        has_both = {t for _, t in pairs} == {H, V}
        if all_correct and has_both:
            assert report.macro_hmean == 1.0
        if report.macro_hmean == 1.0:
            assert all_correct

    def test_json_round_trip(self):
        report = hmean(confusion([H, V, V], [H, V, H]))
        loaded = json.loads(report.to_json())
        assert loaded["macro_hmean"] == pytest.approx(report.macro_hmean)
        assert set(loaded["hmean"]) == {"horizontal", "vertical"}
