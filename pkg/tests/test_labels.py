import numpy as np
import pytest

from deteclap.errors import ContractError, InputError, ParseError
from deteclap.labels import (
    LabelStore,
    LabelVector,
    ScoreVector,
    Vocabulary,
    build_labels,
    ingest_labels,
    ingest_scores,
    merge,
    resolve_targets,
    soft_labels,
    synth_scores,
    threshold_labels,
    write_label_file,
    write_score_file,
)


def sv(scores, modality="audio", clip="c0"):
    return ScoreVector(clip=clip, modality=modality, scores=np.array(scores))


def hard(values, provenance="audio", clip="c0"):
    return LabelVector(clip=clip, kind="hard", values=np.array(values, float),
                       provenance=provenance)


class TestThreshold:
    def test_strict_exceeds(self):
        got = threshold_labels(sv([0.6, 0.4, 0.5]), theta=0.5)
        assert np.array_equal(got.values, [1.0, 0.0, 0.0])
        assert got.kind == "hard" and got.provenance == "audio"

    def test_zero_threshold(self):
        got = threshold_labels(sv([0.3, 0.0, 0.9]), theta=0.0)
        assert np.array_equal(got.values, [1.0, 0.0, 1.0])

    def test_threshold_one_gives_all_zeros(self):
        got = threshold_labels(sv([1.0, 0.99, 0.5], modality="visual"), theta=1.0)
        assert np.array_equal(got.values, [0.0, 0.0, 0.0])

    def test_theta_domain(self):
        for bad in (-0.1, 1.1):
            with pytest.raises(InputError):
                threshold_labels(sv([0.5]), theta=bad)

    def test_monotone_in_theta(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            scores = sv(rng.uniform(-1, 1, size=12))
            t1, t2 = sorted(rng.uniform(0, 1, size=2))
            low = threshold_labels(scores, t1).values
            high = threshold_labels(scores, t2).values
            assert np.all(high <= low)  # higher threshold keeps a subset


class TestMerge:
    def test_and_or_examples(self):
        a = hard([1, 0, 1])
        v = hard([1, 1, 0], provenance="visual")
        assert np.array_equal(merge(a, v, "and").values, [1, 0, 0])
        assert np.array_equal(merge(a, v, "or").values, [1, 1, 1])

    def test_identity_elements(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            y = hard(rng.integers(0, 2, size=9).astype(float))
            zeros = hard(np.zeros(9), provenance="visual")
            ones = hard(np.ones(9), provenance="visual")
            assert np.array_equal(merge(y, zeros, "or").values, y.values)
            assert np.array_equal(merge(y, ones, "and").values, y.values)

    def test_mismatches_rejected(self):
        with pytest.raises(ContractError):
            merge(hard([1, 0]), hard([1, 0], clip="other"), "or")
        with pytest.raises(ContractError):
            merge(hard([1, 0]), hard([1, 0, 1]), "or")
        soft = LabelVector("c0", "soft", np.array([0.5, 0.5]), "audio")
        with pytest.raises(ContractError):
            merge(hard([1, 0]), soft, "and")

    def test_and_subset_inputs_subset_or(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            a = hard(rng.integers(0, 2, size=16).astype(float))
            v = hard(rng.integers(0, 2, size=16).astype(float), provenance="visual")
            both = merge(a, v, "and").values
            either = merge(a, v, "or").values
            for y in (a.values, v.values):
                assert np.all(both <= y)
                assert np.all(y <= either)


class TestSoftLabels:
    def test_max_clamps_negative_audio(self):
        audio = sv([0.2, -0.1])
        visual = sv([0.5, 0.3], modality="visual")
        got = soft_labels(audio, visual, "max")
        assert np.array_equal(got.values, [0.5, 0.3])
        assert got.kind == "soft" and got.provenance == "max"

    def test_visual_kind_is_probability_vector(self):
        visual = sv([0.9, 0.05], modality="visual")
        got = soft_labels(None, visual, "visual")
        assert np.array_equal(got.values, visual.scores)

    def test_max_idempotent(self):
        a = sv([0.4, 0.6])
        v = sv([0.4, 0.6], modality="visual")
        got = soft_labels(a, v, "max")
        assert np.array_equal(got.values, [0.4, 0.6])

    def test_missing_side_rejected(self):
        with pytest.raises(ContractError):
            soft_labels(None, None, "max")

    def test_max_dominates_both(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = sv(rng.uniform(-1, 1, size=8))
            v = sv(rng.uniform(0, 1, size=8), modality="visual")
            mx = soft_labels(a, v, "max").values
            assert np.all(mx >= soft_labels(a, v, "audio").values)
            assert np.all(mx >= soft_labels(a, v, "visual").values)

    def test_hard_of_max_equals_or_of_hards(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            a = sv(rng.uniform(-1, 1, size=6))
            v = sv(rng.uniform(0, 1, size=6), modality="visual")
            theta = rng.uniform(0, 1)
            mx = soft_labels(a, v, "max")
            as_scores = ScoreVector(clip="c0", modality="visual",
                                    scores=mx.values)
            left = threshold_labels(as_scores, theta).values
            right = merge(threshold_labels(a, theta),
                          threshold_labels(v, theta), "or").values
            assert np.array_equal(left, right)


class TestScoreFiles:
    def test_round_trip(self, tmp_path):
        vocab = Vocabulary(["dog", "flute", "engine"])
        vectors = [sv([0.9, -0.2, 0.1]), sv([0.5, 0.4, 0.0], modality="visual")]
        path = tmp_path / "scores.jsonl"
        write_score_file(path, vocab, vectors)
        got_vocab, got = ingest_scores(path)
        assert got_vocab == vocab
        assert len(got) == 2
        assert np.array_equal(got[0].scores, vectors[0].scores)
        assert got[1].modality == "visual"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        vocab, vectors = ingest_scores(path)
        assert vocab is None and vectors == []

    def test_wrong_score_count_names_line_and_expected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"vocabulary": ["a", "b", "c"]}\n'
            '{"clip": "c0", "modality": "audio", "scores": [0.1, 0.2]}\n'
        )
        with pytest.raises(ParseError, match="line 2.*expected 3"):
            ingest_scores(path)

    def test_non_finite_score_rejected(self, tmp_path):
        path = tmp_path / "nan.jsonl"
        path.write_text(
            '{"vocabulary": ["a"]}\n'
            '{"clip": "c0", "modality": "audio", "scores": [NaN]}\n'
        )
        with pytest.raises(ParseError, match="line 2"):
            ingest_scores(path)

    def test_unknown_label_name_rejected(self, tmp_path):
        vocab = Vocabulary(["a", "b"])
        path = tmp_path / "scores.jsonl"
        write_score_file(path, Vocabulary(["a", "zebra"]), [])
        with pytest.raises(ParseError, match="zebra"):
            ingest_scores(path, vocabulary=vocab)

    def test_label_file_round_trip(self, tmp_path):
        vocab = Vocabulary(["a", "b"])
        vectors = [hard([1, 0], provenance="or"),
                   LabelVector("c1", "soft", np.array([0.25, 1.0]), "max")]
        path = tmp_path / "labels.jsonl"
        write_label_file(path, vocab, vectors)
        got_vocab, got = ingest_labels(path)
        assert got_vocab == vocab
        assert got[0].provenance == "or" and got[1].kind == "soft"
        assert np.array_equal(got[1].values, [0.25, 1.0])


class TestSynthScores:
    def test_clean_scores_recover_latents(self):
        clips = [("c0", {1}), ("c1", {0, 3})]
        audio, visual = synth_scores(clips, n_classes=4, noise=0.0, dropout=0.0)
        for vectors in (audio, visual):
            assert np.array_equal(
                threshold_labels(vectors[0], 0.5).values, [0, 1, 0, 0]
            )
            assert np.array_equal(
                threshold_labels(vectors[1], 0.5).values, [1, 0, 0, 1]
            )

    def test_audio_dropout_seen_by_or_not_and(self):
        clips = [("c0", {2})]
        audio, visual = synth_scores(clips, n_classes=4, dropout=(1.0, 0.0))
        y_a = threshold_labels(audio[0], 0.5)
        y_v = threshold_labels(visual[0], 0.5)
        assert merge(y_a, y_v, "or").values[2] == 1.0
        assert merge(y_a, y_v, "and").values[2] == 0.0

    def test_deterministic_given_seed(self):
        clips = [("c0", {0}), ("c1", {1, 2})]
        a1, v1 = synth_scores(clips, 4, noise=0.2, dropout=0.3, seed=9)
        a2, v2 = synth_scores(clips, 4, noise=0.2, dropout=0.3, seed=9)
        for x, y in zip(a1 + v1, a2 + v2):
            assert np.array_equal(x.scores, y.scores)

    def test_scores_in_domain(self):
        clips = [(f"c{i}", {i % 3}) for i in range(20)]
        audio, visual = synth_scores(clips, 3, noise=0.5, dropout=0.2, seed=1)
        for v in audio:
            assert v.scores.min() >= -1.0 and v.scores.max() <= 1.0
        for v in visual:
            assert v.scores.min() >= 0.0 and v.scores.max() <= 1.0


class TestBuildAndResolve:
    def fixture_scores(self):
        clips = [("c0", {0}), ("c1", {1})]
        return synth_scores(clips, n_classes=3, noise=0.0, dropout=0.0)

    def test_build_or_is_union(self):
        audio, visual = self.fixture_scores()
        vectors = build_labels(audio, visual, "or")
        store = LabelStore()
        store.extend(vectors)
        assert np.array_equal(
            store.get("c0", "hard", "or").values, [1, 0, 0]
        )

    def test_build_separate_emits_both(self):
        audio, visual = self.fixture_scores()
        vectors = build_labels(audio, visual, "separate")
        assert len(vectors) == 4
        provs = {v.provenance for v in vectors}
        assert provs == {"audio", "visual"}

    def test_resolve_variants(self):
        audio, visual = self.fixture_scores()
        store = LabelStore()
        store.extend(build_labels(audio, visual, "separate"))
        ta, tv = resolve_targets(store, "c0", "separate")
        assert np.array_equal(ta, [1, 0, 0]) and np.array_equal(tv, [1, 0, 0])
        # and/or merge on the fly from the per-modality hard labels
        ta, tv = resolve_targets(store, "c0", "or")
        assert np.array_equal(ta, tv)
        assert resolve_targets(store, "c0", "base") is None

    def test_resolve_soft(self):
        audio, visual = self.fixture_scores()
        store = LabelStore()
        store.extend(build_labels(audio, visual, "soft-max"))
        ta, tv = resolve_targets(store, "c1", "or", label_kind="soft-max")
        assert np.array_equal(ta, tv)
        assert ta[1] == 0.9

    def test_resolve_missing_label_raises(self):
        store = LabelStore()
        with pytest.raises(ContractError, match="c9"):
            resolve_targets(store, "c9", "or")


def test_vocabulary_uniqueness_and_load(tmp_path):
    with pytest.raises(InputError):
        Vocabulary(["a", "a"])
    path = tmp_path / "vocab.txt"
    path.write_text("dog\nflute\n\nengine\n")
    vocab = Vocabulary.load(path)
    assert vocab.names == ["dog", "flute", "engine"]
    assert vocab.index("flute") == 1
    with pytest.raises(InputError):
        vocab.index("cat")
