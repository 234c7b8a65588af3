"""Accuracy, recall, Jaccard binning, answer F1, and report round trips."""

from __future__ import annotations

import math
from types import SimpleNamespace

import pytest
from hypothesis import given, settings, strategies as st

from chronolink.errors import MetricsError
from chronolink.metrics import (
    AccuracyRow,
    MetricsReport,
    PredictionRecord,
    QAF1Row,
    RecallRow,
    bin_by_jaccard,
    build_report,
    emit_report,
    first_sentence,
    jaccard_bin,
    jaccard_char,
    linking_accuracy,
    load_report,
    normalize_answer,
    qa_f1,
    recall_at_n,
)


def rec(mid, ranked, gold, segment="s1", jaccard=None):
    return PredictionRecord(
        mention_id=mid, ranked=tuple(ranked), gold_entity=gold, segment=segment, jaccard=jaccard
    )


# ------------------------------------------------------------- records


def test_prediction_record_validation():
    with pytest.raises(MetricsError):
        rec("m", [], "e")
    with pytest.raises(MetricsError):
        rec("m", ["e1", "e1"], "e1")
    with pytest.raises(MetricsError):
        rec("m", ["e1"], "e1", jaccard=1.5)
    assert rec("m", ["e1"], None).gold_entity is None


# ------------------------------------------------------------- jaccard


def test_jaccard_char_frozen_example():
    # distinct chars: {b,a,r,c} vs {f,c,b,a,r,e,l,o,n} -> 4/9
    assert jaccard_char("Barca", "FC Barcelona") == pytest.approx(4.0 / 9.0, abs=1e-12)


def test_jaccard_char_normalizes_case_and_whitespace():
    assert jaccard_char("  F C  Barcelona ", "fcbarcelona") == 1.0
    assert jaccard_char("abc", "ABC") == 1.0


def test_jaccard_char_empty_after_normalization():
    with pytest.raises(MetricsError):
        jaccard_char("   ", "abc")
    with pytest.raises(MetricsError):
        jaccard_char("abc", "")


def test_jaccard_char_bigrams():
    # {ba,ar,rc,ca} vs {ba,ar,rc,ce,el,lo,on,na}: 3 shared of 9
    assert jaccard_char("barca", "barcelona", bigrams=True) == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert jaccard_char("ab", "ab", bigrams=True) == 1.0
    # a single character falls back to itself as the only token
    assert jaccard_char("a", "ab", bigrams=True) == 0.0
    assert jaccard_char("a", "a", bigrams=True) == 1.0


@given(
    st.text(alphabet=st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=12),
    st.text(alphabet=st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=12),
)
@settings(max_examples=60, deadline=None)
def test_jaccard_char_symmetric_and_bounded(a, b):
    v = jaccard_char(a, b)
    assert 0.0 <= v <= 1.0
    assert v == jaccard_char(b, a)
    assert jaccard_char(a, a) == 1.0


def test_jaccard_bin_boundaries():
    assert jaccard_bin(0.0) == 1
    assert jaccard_bin(0.19999999999999998) == 1
    assert jaccard_bin(0.2) == 2
    assert jaccard_bin(0.4) == 3
    assert jaccard_bin(0.6) == 4  # comparison-based, no float drift
    assert jaccard_bin(0.8) == 5
    assert jaccard_bin(1.0) == 5
    with pytest.raises(MetricsError):
        jaccard_bin(-0.01)
    with pytest.raises(MetricsError):
        jaccard_bin(1.01)


def test_bin_by_jaccard_conserves_counts():
    records = [rec(f"m{i}", ["e"], "e", jaccard=i / 10.0) for i in range(11)]
    bins = bin_by_jaccard(records)
    assert sorted(bins) == [1, 2, 3, 4, 5]
    assert sum(len(v) for v in bins.values()) == 11
    assert [len(bins[i]) for i in range(1, 6)] == [2, 2, 2, 2, 3]


def test_bin_by_jaccard_requires_values():
    with pytest.raises(MetricsError):
        bin_by_jaccard([rec("m", ["e"], "e")])


# ------------------------------------------------------------ accuracy


def test_linking_accuracy_percent_scale():
    records = [
        rec("m1", ["e1", "e2"], "e1"),
        rec("m2", ["e2", "e1"], "e1"),
        rec("m3", ["e1"], None),  # unlabeled counts as a miss
        rec("m4", ["e1"], "e1"),
    ]
    assert linking_accuracy(records) == {"all": 50.0}


def test_linking_accuracy_by_segment_sorted():
    records = [
        rec("m1", ["e1"], "e1", segment="b"),
        rec("m2", ["e1"], "e2", segment="a"),
        rec("m3", ["e1"], "e1", segment="a"),
    ]
    out = linking_accuracy(records, group_by="segment")
    assert list(out) == ["a", "b"]
    assert out["a"] == 50.0 and out["b"] == 100.0


def test_linking_accuracy_by_bin_skips_empty_bins():
    records = [
        rec("m1", ["e1"], "e1", jaccard=0.1),
        rec("m2", ["e1"], "e2", jaccard=0.1),
        rec("m3", ["e1"], "e1", jaccard=0.9),
    ]
    out = linking_accuracy(records, group_by="bin")
    assert out == {1: 50.0, 5: 100.0}


def test_linking_accuracy_errors():
    with pytest.raises(MetricsError):
        linking_accuracy([])
    with pytest.raises(MetricsError):
        linking_accuracy([rec("m", ["e"], "e")], group_by="surface")


# -------------------------------------------------------------- recall


def test_recall_at_n_counts_top_slices():
    records = [
        rec("m1", ["e1", "e2", "e3"], "e3"),
        rec("m2", ["e1", "e2"], "e1"),
        rec("m3", ["e1"], "e9"),  # gold beyond the ranking end
    ]
    out = recall_at_n(records, [1, 2, 3, 64])
    assert out[1] == pytest.approx(100.0 / 3.0)
    assert out[2] == pytest.approx(100.0 / 3.0)
    assert out[3] == pytest.approx(200.0 / 3.0)
    assert out[64] == pytest.approx(200.0 / 3.0)  # short rankings stay misses


def test_recall_top1_equals_accuracy():
    records = [rec("m1", ["e1", "e2"], "e1"), rec("m2", ["e2", "e1"], "e1")]
    assert recall_at_n(records, [1])[1] == linking_accuracy(records)["all"]


def test_recall_errors():
    with pytest.raises(MetricsError):
        recall_at_n([], [1])
    with pytest.raises(MetricsError):
        recall_at_n([rec("m", ["e"], "e")], [0])


@given(
    st.lists(
        st.tuples(st.integers(0, 5), st.permutations(["e0", "e1", "e2", "e3"])),
        min_size=1,
        max_size=20,
    )
)
@settings(max_examples=50, deadline=None)
def test_recall_monotone_in_n(raw):
    records = [
        rec(f"m{i}", ranked, f"e{gold}" if gold < 4 else None)
        for i, (gold, ranked) in enumerate(raw)
    ]
    out = recall_at_n(records, [1, 2, 3, 4, 8])
    values = [out[n] for n in (1, 2, 3, 4, 8)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert all(0.0 <= v <= 100.0 for v in values)


# ------------------------------------------------------------ sentences


def test_first_sentence_terminator_runs():
    assert first_sentence("In 1992!? Yes.") == "In 1992!"
    assert first_sentence("What?!") == "What?"
    assert first_sentence("Done.") == "Done."


def test_first_sentence_ignores_mid_word_dots():
    assert first_sentence("Version 2.5 shipped. More later.") == "Version 2.5 shipped."
    assert first_sentence("e.g. test") == "e.g."


def test_first_sentence_without_terminator():
    assert first_sentence("no terminator here") == "no terminator here"
    assert first_sentence("") == ""


def test_normalize_answer():
    assert normalize_answer("The Quick, Brown Fox!") == "quick brown fox"
    assert normalize_answer("An answer about another thing") == "answer about another thing"
    assert normalize_answer("a.m.") == "am"  # punctuation goes before article removal


# ------------------------------------------------------------------ F1


def test_qa_f1_frozen_example():
    # P = 2/2, R = 2/7 -> F1 = 4/9
    pred = "Rosario, Argentina"
    gold = "Lionel Messi was born in Rosario, Argentina."
    assert qa_f1(pred, gold) == pytest.approx(4.0 / 9.0, abs=1e-12)


def test_qa_f1_prediction_cut_to_first_sentence():
    assert qa_f1("Rosario. And plenty more words follow here.", "Rosario") == 1.0


def test_qa_f1_edge_cases():
    assert qa_f1("the", "a") == 1.0  # both normalize to empty
    assert qa_f1("", "answer") == 0.0
    assert qa_f1("answer", "the") == 0.0
    assert qa_f1("alpha beta", "gamma delta") == 0.0


def test_qa_f1_token_multiset():
    # repeated tokens match by multiset count: common = 1 for "very"
    assert qa_f1("very very", "very") == pytest.approx(2 * (0.5 * 1.0) / 1.5, abs=1e-12)


# -------------------------------------------------------------- report


def test_metrics_report_checks_bin_sums():
    rows = (
        AccuracyRow("s1", "all", 3, 100.0),
        AccuracyRow("s1", "1", 1, 100.0),
        AccuracyRow("s1", "5", 2, 100.0),
    )
    MetricsReport(accuracy=rows)  # sums match
    with pytest.raises(MetricsError):
        MetricsReport(accuracy=rows[:2])


def _report_fixture():
    records = [
        rec("m1", ["e1", "e2"], "e1", segment="a", jaccard=0.1),
        rec("m2", ["e2", "e1"], "e1", segment="a", jaccard=0.9),
        rec("m3", ["e1", "e2"], "e1", segment="b", jaccard=0.5),
    ]
    outcomes = [
        SimpleNamespace(segment="a", variant="plain", f1=1.0, hit=True, resolution_ok=True),
        SimpleNamespace(segment="a", variant="plain", f1=0.5, hit=False, resolution_ok=True),
        SimpleNamespace(segment="a", variant="plain", f1=None, hit=True, resolution_ok=True),
    ]
    return records, outcomes


def test_build_report_layout():
    records, outcomes = _report_fixture()
    report = build_report(records, ns=(1, 2), qa_outcomes=outcomes)

    segments = [r.segment for r in report.accuracy if r.bin == "all"]
    assert segments == ["all", "a", "b"]
    assert {(r.segment, r.bin) for r in report.accuracy} == {
        ("all", "all"), ("all", "1"), ("all", "3"), ("all", "5"),
        ("a", "all"), ("a", "1"), ("a", "5"),
        ("b", "all"), ("b", "3"),
    }
    all_row = next(r for r in report.accuracy if r.segment == "all" and r.bin == "all")
    assert all_row.n_mentions == 3
    assert all_row.accuracy == pytest.approx(200.0 / 3.0)

    assert {(r.segment, r.n) for r in report.recall} == {
        ("all", 1), ("all", 2), ("a", 1), ("a", 2), ("b", 1), ("b", 2)
    }
    assert next(r.recall for r in report.recall if r.segment == "all" and r.n == 2) == 100.0

    # the errored outcome (f1 None) is excluded everywhere
    key = {(r.split, r.resolution): r for r in report.qa}
    assert all(r.segment == "a" and r.variant == "plain" for r in report.qa)
    assert key[("all", "all")].count == 2
    assert key[("all", "all")].mean_f1 == pytest.approx(0.75)
    assert key[("hit", "all")].count == 1
    assert key[("hit", "all")].mean_f1 == 1.0
    assert key[("miss", "success")].mean_f1 == 0.5
    assert ("hit", "failure") not in key


def test_build_report_without_jaccard_skips_bins():
    report = build_report([rec("m1", ["e1"], "e1")], ns=(1,))
    assert [(r.segment, r.bin) for r in report.accuracy] == [("all", "all"), ("s1", "all")]


def test_build_report_empty_inputs():
    report = build_report()
    assert report.accuracy == () and report.recall == () and report.qa == ()


def test_emit_report_json_round_trip_and_determinism(tmp_path):
    records, outcomes = _report_fixture()
    report = build_report(records, ns=(1, 2), qa_outcomes=outcomes)
    p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
    emit_report(report, "json", p1)
    emit_report(report, "json", p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert load_report(p1) == report


def test_emit_report_csv_sections(tmp_path):
    path = tmp_path / "empty.csv"
    emit_report(MetricsReport(), "csv", path)
    assert path.read_text() == (
        "segment,bin,n_mentions,accuracy\n"
        "\n"
        "segment,n,recall\n"
        "\n"
        "segment,variant,split,resolution,mean_f1,count\n"
    )


def test_emit_report_csv_floats_round_trip_exactly(tmp_path):
    report = MetricsReport(
        accuracy=(AccuracyRow("a", "all", 3, 200.0 / 3.0),),
        recall=(RecallRow("a", 1, 200.0 / 3.0),),
        qa=(QAF1Row("a", "plain", "all", "all", 1.0 / 3.0, 3),),
    )
    path = tmp_path / "r.csv"
    emit_report(report, "csv", path)
    lines = path.read_text().splitlines()
    acc_value = lines[1].split(",")[-1]
    assert float(acc_value) == 200.0 / 3.0  # repr keeps the full double


def test_emit_report_rejects_unknown_format(tmp_path):
    with pytest.raises(MetricsError):
        emit_report(MetricsReport(), "yaml", tmp_path / "r.yaml")


def test_load_report_rejects_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"accuracy": [{"wrong": 1}], "recall": [], "qa": []}')
    with pytest.raises(MetricsError):
        load_report(path)
    path.write_text('{"recall": [], "qa": []}')
    with pytest.raises(MetricsError):
        load_report(path)
