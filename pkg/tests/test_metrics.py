"""BLEU, embedding-based P/R/F1, rate reports, and the two-sample t-test."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disfluent.annotation import parse_annotated
from disfluent.errors import (
    DimensionMismatchError,
    EmptyInputError,
    FormatError,
    LengthMismatchError,
    NonUnitVectorError,
    TooFewSamplesError,
    ZeroVarianceError,
)
from disfluent.metrics import (
    EvalReport,
    bert_score_corpus,
    bert_score_from_embeddings,
    corpus_bleu,
    load_embeddings,
    micro_rate,
    rate_report,
    two_sample_ttest,
)

# --- independent oracles (kept deliberately naive) -----------------------------------


def oracle_bleu(hypotheses, references, max_n=4):
    """Clipped n-gram BLEU via explicit list removal instead of Counters."""
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    if hyp_len == 0:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        matched = 0
        total = 0
        for hyp, ref in zip(hypotheses, references):
            ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
            for i in range(len(hyp) - n + 1):
                total += 1
                gram = tuple(hyp[i : i + n])
                if gram in ref_grams:
                    ref_grams.remove(gram)
                    matched += 1
        if matched == 0 or total == 0:
            return 0.0
        precisions.append(matched / total)
    geo = math.exp(sum(math.log(p) for p in precisions) / max_n)
    return min(1.0, math.exp(1.0 - ref_len / hyp_len)) * geo


def oracle_pooled_t(a, b):
    na, nb = len(a), len(b)
    ma, mb = sum(a) / na, sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    sp = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    return (ma - mb) / (sp * math.sqrt(1 / na + 1 / nb))


# --- corpus BLEU ---------------------------------------------------------------------


class TestBleu:
    def test_identity_is_exactly_one(self):
        sents = [["a", "b", "c", "d", "e"], ["x", "y", "z", "w"]]
        assert corpus_bleu(sents, sents) == 1.0

    def test_brevity_penalty_hand_case(self):
        score = corpus_bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]])
        assert score == pytest.approx(0.778801, abs=1e-6)
        assert score == pytest.approx(math.exp(-0.25), abs=1e-12)

    def test_disjoint_tokens_zero(self):
        assert corpus_bleu([["p", "q"]], [["x", "y"]]) == 0.0

    def test_zero_when_any_order_unmatched(self):
        # unigrams match but no bigram does
        assert corpus_bleu([["a", "x", "b"]], [["a", "b", "c"]]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            corpus_bleu([["a"]], [["a"], ["b"]])

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            corpus_bleu([], [])

    def test_empty_hypothesis_scores_zero(self):
        assert corpus_bleu([[]], [["a"]]) == 0.0

    def test_matches_oracle_on_random_pairs(self):
        rng = random.Random(99)
        vocab = list("abcdef")
        for _ in range(300):
            n_sents = rng.randint(1, 3)
            hyp = [[rng.choice(vocab) for _ in range(rng.randint(1, 6))] for _ in range(n_sents)]
            ref = [[rng.choice(vocab) for _ in range(rng.randint(1, 6))] for _ in range(n_sents)]
            assert corpus_bleu(hyp, ref) == pytest.approx(oracle_bleu(hyp, ref), abs=1e-9)

    @given(
        st.lists(
            # four tokens minimum so every sentence contributes a 4-gram
            st.lists(st.sampled_from("abcd"), min_size=4, max_size=8),
            min_size=1,
            max_size=4,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_range_and_renaming_invariance(self, sents):
        score = corpus_bleu(sents, sents)
        assert score == 1.0
        renamed = [[f"tok_{c}" for c in s] for s in sents]
        shuffled = [list(reversed(s)) for s in sents]
        assert 0.0 <= corpus_bleu(shuffled, sents) <= 1.0
        assert corpus_bleu(shuffled, sents) == pytest.approx(
            corpus_bleu([[f"tok_{c}" for c in s] for s in shuffled], renamed), abs=1e-12
        )


# --- embedding score -----------------------------------------------------------------


def unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    m = rng.normal(size=(count, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


class TestBertScore:
    def test_identical_lists(self):
        rng = np.random.default_rng(1)
        vecs = unit_rows(rng, 4, 8)
        p, r, f1 = bert_score_from_embeddings(vecs, vecs)
        assert p == pytest.approx(1.0)
        assert r == pytest.approx(1.0)
        assert f1 == pytest.approx(1.0)

    def test_one_hot_half_overlap(self):
        a, b, c = np.eye(3)
        p, r, f1 = bert_score_from_embeddings([a, b], [a, c])
        assert (p, r, f1) == (0.5, 0.5, 0.5)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(7)
        hyp = unit_rows(rng, 5, 16)
        ref = unit_rows(rng, 3, 16)
        p, r, f1 = bert_score_from_embeddings(hyp, ref)
        p2, r2, f12 = bert_score_from_embeddings(ref, hyp)
        assert p == pytest.approx(r2, abs=1e-12)
        assert r == pytest.approx(p2, abs=1e-12)
        assert f1 == pytest.approx(f12, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            bert_score_from_embeddings([[1.0, 0.0]], [[1.0, 0.0, 0.0]])

    def test_non_unit_rejected(self):
        with pytest.raises(NonUnitVectorError):
            bert_score_from_embeddings([[0.5, 0.5]], [[1.0, 0.0]])

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            bert_score_from_embeddings([], [[1.0]])

    def test_corpus_average(self):
        a, b, c = np.eye(3)
        # sentence 1 scores (1, 1); sentence 2 scores (0.5, 0.5)
        p, r, f1 = bert_score_corpus(
            [np.array([a]), np.array([a, b])], [np.array([a]), np.array([a, c])]
        )
        assert p == pytest.approx(0.75)
        assert r == pytest.approx(0.75)
        assert f1 == pytest.approx(0.75)

    def test_corpus_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            bert_score_corpus([np.eye(2)], [np.eye(2), np.eye(2)])


class TestLoadEmbeddings:
    def test_blocks(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("1 0\n0 1\n\n0.6 0.8\n", encoding="utf-8")
        blocks = load_embeddings(path)
        assert len(blocks) == 2
        assert blocks[0].shape == (2, 2)
        assert blocks[1].shape == (1, 2)

    def test_bad_float_line_number(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("1 0\nnot a number\n", encoding="utf-8")
        with pytest.raises(FormatError) as exc:
            load_embeddings(path)
        assert exc.value.line == 2

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("1 0\n1 0 0\n", encoding="utf-8")
        with pytest.raises(FormatError) as exc:
            load_embeddings(path)
        assert exc.value.line == 2


# --- rate report ---------------------------------------------------------------------


class TestRateReport:
    def test_delta_on_thousand_token_stream(self):
        tokens = ["{F um}"] * 291 + ["w"] * 709
        generated = [parse_annotated(" ".join(tokens))]
        report = rate_report(generated, 0.245)
        assert report.rate_generated == pytest.approx(0.291, abs=1e-12)
        assert report.rate_delta == pytest.approx(0.046, abs=1e-9)

    def test_fluent_only(self):
        report = rate_report([parse_annotated("I like it")], 0.3)
        assert report.rate_generated == 0.0
        assert report.rate_delta == -0.3

    def test_equal_rates(self):
        generated = [parse_annotated("{F um} a b c")]
        report = rate_report(generated, 0.25)
        assert report.rate_delta == 0.0

    def test_micro_rate_pools_tokens(self):
        utterances = [parse_annotated("{F um} a"), parse_annotated("b c d e f g")]
        assert micro_rate(utterances) == pytest.approx(1 / 8)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            micro_rate([])

    def test_bad_reference_rate(self):
        with pytest.raises(ValueError):
            rate_report([parse_annotated("a")], 1.5)


class TestEvalReport:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            EvalReport(bert_p=0.6, bert_r=0.4, bert_f1=0.5)  # wrong harmonic mean
        with pytest.raises(ValueError):
            EvalReport(rate_generated=0.3, rate_reference=0.2, rate_delta=0.2)
        with pytest.raises(ValueError):
            EvalReport(bleu=1.2)

    def test_harmonic_mean_accepted(self):
        report = EvalReport(bert_p=0.6, bert_r=0.4, bert_f1=0.48)
        assert report.bert_f1 == 0.48

    def test_to_dict_drops_missing(self):
        report = EvalReport(bleu=0.5)
        assert report.to_dict() == {"bleu": 0.5}


# --- two-sample t-test ----------------------------------------------------------------


class TestTTest:
    def test_equal_samples(self):
        result = two_sample_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.statistic == 0.0
        assert result.p_value == 1.0

    def test_hand_case(self):
        result = two_sample_ttest([1, 2, 3], [2, 3, 4])
        assert result.statistic == pytest.approx(-1.224745, abs=1e-6)
        assert result.degrees_of_freedom == 4
        assert result.method == "student_t"

    def test_against_direct_formula(self):
        rng = random.Random(17)
        for _ in range(100):
            a = [rng.gauss(0, 1) for _ in range(rng.randint(2, 12))]
            b = [rng.gauss(0.5, 2) for _ in range(rng.randint(2, 12))]
            result = two_sample_ttest(a, b)
            assert result.statistic == pytest.approx(oracle_pooled_t(a, b), abs=1e-9)
            assert result.degrees_of_freedom == len(a) + len(b) - 2

    def test_antisymmetry_exact(self):
        rng = random.Random(23)
        for _ in range(40):
            a = [rng.gauss(0, 1) for _ in range(rng.randint(2, 8))]
            b = [rng.gauss(1, 1) for _ in range(rng.randint(2, 8))]
            fwd = two_sample_ttest(a, b)
            rev = two_sample_ttest(b, a)
            assert fwd.statistic == -rev.statistic
            assert fwd.p_value == rev.p_value

    def test_p_value_against_scipy(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = random.Random(31)
        for _ in range(60):
            a = [rng.gauss(0, 1) for _ in range(rng.randint(2, 15))]
            b = [rng.gauss(0.3, 1.5) for _ in range(rng.randint(2, 15))]
            mine = two_sample_ttest(a, b)
            t_ref, p_ref = scipy_stats.ttest_ind(a, b)
            assert mine.statistic == pytest.approx(float(t_ref), abs=1e-9)
            assert mine.p_value == pytest.approx(float(p_ref), abs=1e-9)
            welch = two_sample_ttest(a, b, welch=True)
            t_w, p_w = scipy_stats.ttest_ind(a, b, equal_var=False)
            assert welch.statistic == pytest.approx(float(t_w), abs=1e-9)
            assert welch.p_value == pytest.approx(float(p_w), abs=1e-9)
            assert welch.method == "welch_t"

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            two_sample_ttest([1.0], [1.0, 2.0])

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            two_sample_ttest([2.0, 2.0], [2.0, 2.0])

    def test_p_value_in_range(self):
        rng = random.Random(41)
        for _ in range(50):
            a = [rng.gauss(0, 1) for _ in range(5)]
            b = [rng.gauss(5, 1) for _ in range(5)]
            result = two_sample_ttest(a, b)
            assert 0.0 <= result.p_value <= 1.0

    def test_incomplete_beta_against_scipy_grid(self):
        special = pytest.importorskip("scipy.special")
        from disfluent.metrics import _regularized_incomplete_beta

        for a in (0.5, 1.0, 2.5, 10.0, 50.0):
            for b in (0.5, 1.0, 3.0, 25.0):
                for x in (0.0, 1e-6, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0 - 1e-6, 1.0):
                    assert _regularized_incomplete_beta(a, b, x) == pytest.approx(
                        float(special.betainc(a, b, x)), abs=1e-12
                    )
