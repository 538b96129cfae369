import math
from fractions import Fraction

import numpy as np
import pytest

from semchat.metrics import (
    CHAR,
    GOLD_VARIABLES,
    PLANNED,
    WORD,
    EmbeddingTable,
    bleu_n,
    corpus_bleu_n,
    dist_n,
    embedding_metrics,
    evaluate_generation,
    label_f1,
    topical_f1,
    topical_recall,
)


def bleu_oracle(hyp_tokens, ref_tokens, n):
    """Exact-rational recomputation of smoothed sentence BLEU-n."""

    def grams(tokens, k):
        out = {}
        for i in range(len(tokens) - k + 1):
            g = tuple(tokens[i : i + k])
            out[g] = out.get(g, 0) + 1
        return out

    if not hyp_tokens:
        return 0.0
    logs = []
    for k in range(1, n + 1):
        h, r = grams(hyp_tokens, k), grams(ref_tokens, k)
        m = sum(min(c, r.get(g, 0)) for g, c in h.items())
        t = sum(h.values())
        if k == 1:
            if m == 0:
                return 0.0
            p = Fraction(m, t)
        else:
            p = Fraction(m + 1, t + 1)
        logs.append(math.log(p))
    bp = 1.0 if len(hyp_tokens) >= len(ref_tokens) else math.exp(
        1 - len(ref_tokens) / len(hyp_tokens)
    )
    return bp * math.exp(sum(logs) / n)


class TestBleu:
    def test_identity_is_exactly_one(self):
        for n in (1, 2, 3):
            assert bleu_n("the cat sat", "the cat sat", n, WORD) == 1.0
            assert bleu_n("你好吗", "你好吗", n, CHAR) == 1.0

    def test_disjoint_is_zero(self):
        assert bleu_n("aa bb", "cc dd", 2, WORD) == 0.0

    def test_empty_hypothesis_is_zero(self):
        assert bleu_n("", "anything", 1, WORD) == 0.0

    def test_hand_computed_value(self):
        hyp, ref = "the cat sat", "the cat on the mat"
        expected = (2 / 3) * math.exp(1 - 5 / 3)
        assert bleu_n(hyp, ref, 1, WORD) == pytest.approx(expected, abs=1e-12)

    def test_matches_oracle_on_fixtures(self):
        cases = [
            ("the cat sat", "the cat on the mat"),
            ("a b c d", "a b c d e f"),
            ("x y x y", "y x y x"),
            ("one two three four five", "one three five"),
        ]
        for hyp, ref in cases:
            for n in (1, 2, 3):
                oracle = bleu_oracle(hyp.split(), ref.split(), n)
                assert bleu_n(hyp, ref, n, WORD) == pytest.approx(oracle, abs=1e-9)

    def test_char_unit_ignores_whitespace(self):
        assert bleu_n("ab", "a b", 1, CHAR) == 1.0

    def test_corpus_mean(self):
        pairs = [("a", "a"), ("b", "c")]
        assert corpus_bleu_n(pairs, 1, WORD) == pytest.approx(0.5)

    def test_bad_n_rejected(self):
        with pytest.raises(ValueError):
            bleu_n("a", "a", 4, WORD)


class TestEmbedding:
    def table(self):
        return EmbeddingTable(
            vectors={
                "a": np.array([1.0, 0.0]),
                "b": np.array([0.0, 1.0]),
                "c": np.array([1.0, 1.0]),
                "d": np.array([-2.0, 0.5]),
            },
            dimension=2,
        )

    def test_identity_is_one(self):
        scores = embedding_metrics("a b", "a b", self.table())
        assert scores.average == pytest.approx(1.0, abs=1e-12)
        assert scores.extreme == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_single_phrases(self):
        scores = embedding_metrics("a", "b", self.table())
        assert scores.average == pytest.approx(0.5, abs=1e-12)
        assert scores.extreme == pytest.approx(0.5, abs=1e-12)

    def test_three_phrase_fixture_brute_force(self):
        scores = embedding_metrics("a b c", "a", self.table())
        hyp_mean = np.array([2 / 3, 2 / 3])
        ref_mean = np.array([1.0, 0.0])
        cos = hyp_mean.dot(ref_mean) / (
            np.linalg.norm(hyp_mean) * np.linalg.norm(ref_mean)
        )
        assert scores.average == pytest.approx((1 + cos) / 2, abs=1e-9)
        # extrema: hyp dims max magnitude over {a,b,c} -> [1, 1]; ref -> [1, 0]
        ext_cos = np.array([1.0, 1.0]).dot([1.0, 0.0]) / math.sqrt(2)
        assert scores.extreme == pytest.approx((1 + ext_cos) / 2, abs=1e-9)

    def test_extreme_keeps_sign_of_max_magnitude(self):
        scores = embedding_metrics("a d", "a d", self.table())
        assert scores.extreme == pytest.approx(1.0, abs=1e-12)
        # the extreme vector is [-2, 0.5], not [1, 0.5]
        cross = embedding_metrics("a d", "a", self.table())
        vec = np.array([-2.0, 0.5])
        cos = vec.dot([1.0, 0.0]) / np.linalg.norm(vec)
        assert cross.extreme == pytest.approx((1 + cos) / 2, abs=1e-9)

    def test_all_oov_scores_zero_with_flag(self):
        scores = embedding_metrics("zz qq", "a", self.table())
        assert scores.all_oov
        assert scores.average == 0.0
        assert scores.extreme == 0.0

    def test_random_table_deterministic(self):
        t1 = EmbeddingTable.random(["x", "y"], dimension=4, seed=9)
        t2 = EmbeddingTable.random(["y", "x"], dimension=4, seed=9)
        assert np.array_equal(t1.lookup("x"), t2.lookup("x"))

    def test_load_text_format(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1.0 0.0\nb 0.0 2.0\n", encoding="utf-8")
        table = EmbeddingTable.load_text(path)
        assert table.dimension == 2
        assert np.array_equal(table.lookup("b"), np.array([0.0, 2.0]))
        assert np.array_equal(table.lookup("zz"), np.zeros(2))


class TestDistN:
    def test_hand_count(self):
        assert dist_n(["a a a"], 1) == pytest.approx(1 / 3, abs=1e-12)

    def test_all_unique(self):
        assert dist_n(["a b", "c d"], 1) == 1.0
        assert dist_n(["a b c"], 2) == 1.0

    def test_no_ngrams(self):
        assert dist_n([], 1) == 0.0
        assert dist_n(["a"], 2) == 0.0

    def test_pooled_across_hypotheses(self):
        # bigrams: (a,b) twice, (b,a) once -> 2 distinct / 3 total
        assert dist_n(["a b", "a b a"], 2) == pytest.approx(2 / 3, abs=1e-12)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            dist_n(["a"], 3)


class TestTopicalRecall:
    def test_half_present(self):
        assert topical_recall("i saw a tiger", [("tiger",), ("lion",)]) == 0.5

    def test_all_present(self):
        assert topical_recall("rock and jazz", [("rock",), ("jazz",)]) == 1.0

    def test_empty_gold_excluded(self):
        assert topical_recall("anything", []) is None

    def test_token_boundary(self):
        assert topical_recall("hardrock", [("rock",)]) == 0.0

    def test_multi_token_phrase(self):
        assert topical_recall("i like rock music", [("rock", "music")]) == 1.0
        assert topical_recall("music of rock", [("rock", "music")]) == 0.0


def brute_force_label_f1(pred, gold, label_set):
    """Independent dense-matrix recomputation of prevalence-weighted F1."""
    P = np.array([[l in p for l in label_set] for p in pred], dtype=float)
    G = np.array([[l in g for l in label_set] for g in gold], dtype=float)
    support = G.sum(axis=0)
    f1s = np.zeros(len(label_set))
    for j in range(len(label_set)):
        tp = float((P[:, j] * G[:, j]).sum())
        fp = float((P[:, j] * (1 - G[:, j])).sum())
        fn = float(((1 - P[:, j]) * G[:, j]).sum())
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s[j] = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    keep = support > 0
    return float((f1s[keep] * support[keep]).sum() / support[keep].sum())


class TestLabelF1:
    LABELS = ["Inform", "Question", "Directive", "Commissive"]

    def test_perfect_prediction(self):
        gold = [["Inform"], ["Question", "Inform"]]
        assert label_f1(gold, gold, self.LABELS) == 1.0

    def test_two_sample_hand_computed(self):
        pred = [["Inform"], ["Question"]]
        gold = [["Inform"], ["Inform"]]
        # Inform: support 2, tp 1, fp 0, fn 1 -> F1 = 2/3; Question unsupported.
        assert label_f1(pred, gold, self.LABELS) == pytest.approx(2 / 3, abs=1e-12)

    def test_matches_brute_force_on_random_fixtures(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(1, 8))
            pred = [
                list(rng.choice(self.LABELS, size=rng.integers(0, 3), replace=False))
                for _ in range(n)
            ]
            gold = [
                list(rng.choice(self.LABELS, size=rng.integers(1, 3), replace=False))
                for _ in range(n)
            ]
            assert label_f1(pred, gold, self.LABELS) == pytest.approx(
                brute_force_label_f1(pred, gold, self.LABELS), abs=1e-9
            )

    def test_never_predicted_label_weighs_in_at_zero(self):
        pred = [["Inform"], ["Inform"]]
        gold = [["Inform"], ["Directive"]]
        # Inform: support 1... sample0 tp, sample1 fp -> P=1/2, R=1 -> 2/3
        # Directive: support 1, never predicted -> F1 0
        expected = (1 * (2 / 3) + 1 * 0.0) / 2
        assert label_f1(pred, gold, self.LABELS) == pytest.approx(expected, abs=1e-12)

    def test_permutation_invariant(self):
        pred = [["Inform"], ["Question"], ["Directive"]]
        gold = [["Inform"], ["Inform"], ["Directive"]]
        a = label_f1(pred, gold, self.LABELS)
        b = label_f1(pred[::-1], gold[::-1], self.LABELS)
        assert a == b

    def test_label_counted_once_per_sample(self):
        pred = [["Inform", "Inform"]]
        gold = [["Inform"]]
        assert label_f1(pred, gold, self.LABELS) == 1.0

    def test_empty_gold_rejected(self):
        with pytest.raises(ValueError):
            label_f1([], [], self.LABELS)
        with pytest.raises(ValueError):
            label_f1([["Inform"]], [[]], self.LABELS)


class TestTopicalF1:
    def test_hand_computed(self):
        assert topical_f1([("a",)], [("a",), ("b",)]) == pytest.approx(2 / 3, abs=1e-12)

    def test_identical(self):
        assert topical_f1([("a",), ("b",)], [("b",), ("a",)]) == 1.0

    def test_disjoint(self):
        assert topical_f1([("a",)], [("b",)]) == 0.0

    def test_both_empty_is_one(self):
        assert topical_f1([], []) == 1.0

    def test_empty_pred_nonempty_gold(self):
        assert topical_f1([], [("a",)]) == 0.0


class TestEvaluateGeneration:
    def test_schema_and_determinism(self, tokenizer, linearizer, toy_sessions, uniform_stub):
        from semchat.decode import default_policy

        sessions = toy_sessions[:2]
        policy = default_policy()
        r1 = evaluate_generation(
            uniform_stub, linearizer, sessions, policy, mode=PLANNED, seed=4
        )
        r2 = evaluate_generation(
            uniform_stub, linearizer, sessions, policy, mode=PLANNED, seed=4
        )
        assert r1.to_dict() == r2.to_dict()
        d = r1.to_dict()
        for key in (
            "bleu_1", "bleu_2", "bleu_3", "emb_average", "emb_extreme",
            "dist_1", "dist_2", "topical_recall", "das_f1", "emotions_f1",
        ):
            assert 0.0 <= d[key] <= 1.0
        assert d["mode"] == PLANNED
        assert len(d["per_sample"]) == sum(
            1 for s in sessions for u in s.utterances if u.speaker.value == "machine"
        )

    def test_gold_mode_marks_overrides(self, linearizer, toy_sessions, uniform_stub):
        from semchat.decode import default_policy

        report = evaluate_generation(
            uniform_stub, linearizer, toy_sessions[:1], default_policy(),
            mode=GOLD_VARIABLES, seed=0,
        )
        assert all(s["plan_overridden"] for s in report.per_sample)

    def test_empty_test_set_rejected(self, linearizer, uniform_stub):
        from semchat.decode import default_policy

        with pytest.raises(ValueError, match="empty"):
            evaluate_generation(uniform_stub, linearizer, [], default_policy())

    def test_bad_mode_rejected(self, linearizer, toy_sessions, uniform_stub):
        from semchat.decode import default_policy

        with pytest.raises(ValueError, match="mode"):
            evaluate_generation(
                uniform_stub, linearizer, toy_sessions[:1], default_policy(), mode="FREE"
            )

    def test_report_save(self, tmp_path, linearizer, toy_sessions, uniform_stub):
        import json

        from semchat.decode import default_policy

        report = evaluate_generation(
            uniform_stub, linearizer, toy_sessions[:1], default_policy(), seed=0
        )
        path = tmp_path / "report.json"
        report.save(path)
        loaded = json.loads(path.read_text())
        assert loaded["mode"] == PLANNED
        assert "per_sample" in loaded
