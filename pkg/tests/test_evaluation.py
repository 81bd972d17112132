import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DUPLICATE_ARPA, char_speller
from oracles import edit_distance
from tokpass.builder import ClassSpec, GraphError
from tokpass.decoder import DecodeConfig
from tokpass.evaluation import (Bundle, BundleError, DecodeJob, build_bundle, decode_testset, labels_to_words,
                                limit_phrases, read_testset, sweep, sweep_table, wer)
from tokpass.synth import ambiguity_suite, contextual_suite, general_suite


def test_wer_examples():
    assert wer("call alex chen", "call alex chen") == 0.0
    assert wer("call alex chen", "call alex chan") == pytest.approx(1 / 3)
    assert wer("a b c d", "b c d e") == pytest.approx(2 / 4)
    assert wer("a", "b c d") == 3.0  # insertions can push past 1
    with pytest.raises(ValueError):
        wer("", "a")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=8), st.lists(st.sampled_from("abcd"), max_size=8))
def test_wer_matches_recursive_edit_distance(ref, hyp):
    assert wer(ref, hyp) == edit_distance(ref, hyp) / len(ref)


def test_labels_to_words():
    assert labels_to_words(list("AB_C_"), "_") == ["AB", "C"]
    assert labels_to_words(list("_AB__C"), "_") == ["AB", "C"]
    assert labels_to_words([], "_") == []


def test_limit_phrases_nested_and_keeps_reference():
    phrases = [f"N{i:03d}" for i in range(1000)]
    small = limit_phrases(phrases, "CALL N500", 10, seed=3)
    mid = limit_phrases(phrases, "CALL N500", 100, seed=3)
    big = limit_phrases(phrases, "CALL N500", 1000, seed=3)
    assert small[0] == "N500" and len(small) == 10 and len(mid) == 100
    assert set(small) <= set(mid) <= set(big) == set(phrases)
    assert limit_phrases(phrases, "CALL N500", 10, seed=3) == small
    # whole words only: N50 is not in "CALL N500"
    assert limit_phrases(["N50", "X"], "CALL N500", 2, seed=0) in (("N50", "X"), ("X", "N50"))
    assert limit_phrases(["TOM CRUISE", "TOM"], "CALL TOM CRUISE", 1, seed=0)[0] == "TOM CRUISE"


def test_build_bundle_needs_class_phrases():
    with pytest.raises(GraphError, match="<song>"):
        build_bundle(DUPLICATE_ARPA, char_speller(["PLAY", "MELODY"]), [])


def test_bundle_roundtrip(tmp_path, duplicate_bundle):
    duplicate_bundle.write(tmp_path / "b")
    back = Bundle.read(tmp_path / "b")
    assert back.graph_set().dump() == duplicate_bundle.graph_set().dump()
    back.write(tmp_path / "c")
    for f in (tmp_path / "b").iterdir():
        assert f.read_bytes() == (tmp_path / "c" / f.name).read_bytes()


def test_bundle_read_missing_manifest(tmp_path):
    with pytest.raises(BundleError, match="manifest"):
        Bundle.read(tmp_path)


def test_unknown_class_in_utterance_manifest(backoff_bundle):
    with pytest.raises(BundleError, match="unknown class"):
        backoff_bundle.graph_set([ClassSpec("<contact>", ("ALEX",))])


def test_suite_written_files_read_back(tmp_path):
    suite = contextual_suite(n_utts=3, n_distractors=20)
    paths = suite.write(tmp_path)
    items = read_testset(paths["testset"])
    assert [it.utt.id for it in items] == [it.utt.id for it in suite.items]
    for a, b in zip(items, suite.items):
        assert a.alphabet == b.alphabet and a.utt.reference == b.utt.reference
        assert np.array_equal(a.utt.context, b.utt.context)
        assert [(s.token, s.phrases, s.boost) for s in a.classes] == \
            [(s.token, tuple(p for p in s.phrases), s.boost) for s in b.classes]


def test_read_testset_errors(tmp_path):
    (tmp_path / "index.tsv").write_text("u1\tp.post\n")
    with pytest.raises(BundleError, match="index.tsv:1"):
        read_testset(tmp_path / "index.tsv")
    (tmp_path / "index.tsv").write_text("u1\tp.post\tA\t-\nu1\tp.post\tA\t-\n")
    (tmp_path / "p.post").write_text("alphabet: A _ <eos>\n0 -inf -inf\n-inf -inf 0\n")
    with pytest.raises(BundleError, match="duplicate"):
        read_testset(tmp_path / "index.tsv")
    (tmp_path / "index.tsv").write_text("u1\tp.post\tA\tmissing.tsv\n")
    with pytest.raises(OSError):
        read_testset(tmp_path / "index.tsv")


def test_parallel_decode_matches_serial():
    suite = ambiguity_suite(n_cases=6)
    bundle = suite.bundle()
    job = DecodeJob(DecodeConfig())
    serial = decode_testset(bundle, suite.items, job, workers=1)
    parallel = decode_testset(bundle, suite.items, job, workers=2)
    assert serial.hypothesis_text() == parallel.hypothesis_text()
    assert serial.wer == parallel.wer


def test_contextual_truth_recovered_when_favoured():
    suite = contextual_suite(n_utts=8, n_distractors=999, seed=4)
    report = decode_testset(suite.bundle(), suite.items, DecodeJob(DecodeConfig()))
    clean = [r for r in report.results if suite.notes[r.id]["confuser"] is None]
    assert clean, "suite should contain utterances without a confuser"
    for r in clean:
        assert r.errors == 0, (r.hypothesis, r.reference)
    for r in report.results:
        assert len(next(it for it in suite.items if it.utt.id == r.id).classes[0].phrases) == 1000


def test_phrase_count_trend_small():
    suite = contextual_suite(n_utts=10, seed=0)
    rows = sweep(suite.bundle(), suite.items, "phrases", [10, 100, 1000], DecodeJob(DecodeConfig()))
    wers = [r.wer for r in rows]
    assert wers == sorted(wers)


def test_general_boost_sweep_is_flat():
    suite = general_suite(n_utts=12)
    rows = sweep(suite.bundle(), suite.items, "boost", [-3, -1, 0, 1, 3], DecodeJob(DecodeConfig()))
    wers = [r.wer for r in rows]
    assert max(wers) - min(wers) <= 0.05
    table = sweep_table("boost", rows)
    assert table.splitlines()[0] == "boost\twer\tmean_time\tmean_tokens_per_step"
    assert len(table.splitlines()) == 6


def test_btok_sweep_non_increasing():
    suite = ambiguity_suite()
    rows = sweep(suite.bundle(), suite.items, "btok", [1, 2, 5, 10], DecodeJob(DecodeConfig()))
    wers = [r.wer for r in rows]
    assert wers == sorted(wers, reverse=True) and wers[0] > wers[-1] == 0.0
    tokens = [r.mean_tokens for r in rows]
    assert tokens == sorted(tokens)


def test_sweep_rejects_unknown_axis(backoff_bundle):
    with pytest.raises(ValueError):
        sweep(backoff_bundle, [], "lambda", [1], DecodeJob(DecodeConfig()))


def test_report_summary(backoff_bundle):
    from tokpass.evaluation import TestItem
    from tokpass.scorer import EOS, Utterance
    from tokpass.synth import peaked_posteriors, spell_sentence
    alphabet = sorted(backoff_bundle.speller.alphabet) + ["_", EOS]
    post = peaked_posteriors(spell_sentence(["ALEX", "CALL"]), alphabet, 0.9)
    item = TestItem(Utterance("u1", post, "ALEX CALL"), alphabet)
    rep = decode_testset(backoff_bundle, [item], DecodeJob(DecodeConfig()))
    assert rep.hypothesis_text() == "u1\tALEX CALL\n"
    assert "wer\t0.0\n" in rep.summary_text() and "incomplete\t0\n" in rep.summary_text()
