"""Evaluation: corpus BLEU, embedding-based precision/recall/F1, disfluency
rate reports, and a two-sample t-test."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotation import AnnotatedUtterance, disfluent_token_indices
from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    FormatError,
    LengthMismatchError,
    NonUnitVectorError,
    TooFewSamplesError,
    ZeroVarianceError,
)

UNIT_NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EvalReport:
    """Evaluation results; fields are None when that metric was not computed."""

    bleu: float | None = None
    bert_p: float | None = None
    bert_r: float | None = None
    bert_f1: float | None = None
    rate_generated: float | None = None
    rate_reference: float | None = None
    rate_delta: float | None = None

    def __post_init__(self):
        for name in ("bleu", "bert_p", "bert_r", "bert_f1"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if None not in (self.bert_p, self.bert_r, self.bert_f1):
            expected = _harmonic(self.bert_p, self.bert_r)
            if abs(self.bert_f1 - expected) > 1e-9:
                raise ValueError("bert_f1 must be the harmonic mean of bert_p and bert_r")
        if None not in (self.rate_generated, self.rate_reference, self.rate_delta):
            if abs(self.rate_delta - (self.rate_generated - self.rate_reference)) > 1e-12:
                raise ValueError("rate_delta must equal rate_generated - rate_reference")

    def to_dict(self) -> dict:
        return {
            name: getattr(self, name)
            for name in (
                "bleu",
                "bert_p",
                "bert_r",
                "bert_f1",
                "rate_generated",
                "rate_reference",
                "rate_delta",
            )
            if getattr(self, name) is not None
        }


def _harmonic(p: float, r: float) -> float:
    return 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)


# --- corpus BLEU ---------------------------------------------------------------


def corpus_bleu(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
) -> float:
    """Corpus-level BLEU with clipped n-gram precisions up to ``max_n``.

    Precisions are aggregated over the whole corpus before the geometric
    mean; the brevity penalty is exp(min(0, 1 - ref_len / hyp_len)) on total
    lengths. Returns 0.0 if any corpus-level precision is zero. There is no
    smoothing, and each hypothesis has exactly one reference.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatchError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise EmptyInputError("corpus_bleu needs at least one hypothesis")

    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    if hyp_len == 0:
        return 0.0

    log_precision_sum = 0.0
    for n in range(1, max_n + 1):
        matched = 0
        total = 0
        for hyp, ref in zip(hypotheses, references):
            hyp_counts = Counter(tuple(hyp[i : i + n]) for i in range(len(hyp) - n + 1))
            ref_counts = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
            matched += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            total += max(len(hyp) - n + 1, 0)
        if matched == 0 or total == 0:
            return 0.0
        log_precision_sum += math.log(matched / total)

    brevity = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    return brevity * math.exp(log_precision_sum / max_n)


# --- embedding-based precision / recall / F1 ------------------------------------


def bert_score_from_embeddings(
    hyp_vectors: Sequence[Sequence[float]],
    ref_vectors: Sequence[Sequence[float]],
) -> tuple[float, float, float]:
    """Greedy-matching precision, recall, and F1 from unit-norm vectors.

    Precision is the mean over hypothesis vectors of the maximum cosine
    similarity to any reference vector; recall is symmetric; F1 is their
    harmonic mean.
    """
    hyp = _as_unit_matrix(hyp_vectors, "hypothesis")
    ref = _as_unit_matrix(ref_vectors, "reference")
    if hyp.shape[1] != ref.shape[1]:
        raise DimensionMismatchError(
            f"hypothesis dimension {hyp.shape[1]} vs reference dimension {ref.shape[1]}"
        )
    similarity = hyp @ ref.T
    precision = float(similarity.max(axis=1).mean())
    recall = float(similarity.max(axis=0).mean())
    return precision, recall, _harmonic(precision, recall)


def _as_unit_matrix(vectors: Sequence[Sequence[float]], side: str) -> np.ndarray:
    if len(vectors) == 0:
        raise EmptyInputError(f"{side} embeddings are empty")
    matrix = np.asarray(vectors, dtype=float)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"{side} vectors have inconsistent dimensions")
    norms = np.linalg.norm(matrix, axis=1)
    worst = float(np.abs(norms - 1.0).max())
    if worst > UNIT_NORM_TOLERANCE:
        raise NonUnitVectorError(
            f"{side} vector norm deviates from 1 by {worst:.3g} (tolerance {UNIT_NORM_TOLERANCE})"
        )
    return matrix


def load_embeddings(path: str | Path) -> list[np.ndarray]:
    """Read sentence blocks of vectors: one space-separated vector per line,
    blank lines between sentences."""
    blocks: list[np.ndarray] = []
    rows: list[list[float]] = []
    width: int | None = None

    def flush():
        nonlocal rows, width
        if rows:
            blocks.append(np.asarray(rows, dtype=float))
            rows = []
            width = None

    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            flush()
            continue
        try:
            row = [float(x) for x in line.split()]
        except ValueError as exc:
            raise FormatError(lineno, f"not a vector: {exc}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FormatError(lineno, f"expected {width} components, got {len(row)}")
        rows.append(row)
    flush()
    return blocks


def bert_score_corpus(
    hyp_blocks: Sequence[np.ndarray], ref_blocks: Sequence[np.ndarray]
) -> tuple[float, float, float]:
    """Average per-sentence precision and recall; F1 is the harmonic mean of
    the averages (so the report-level F1 invariant holds)."""
    if len(hyp_blocks) != len(ref_blocks):
        raise LengthMismatchError(
            f"{len(hyp_blocks)} hypothesis blocks vs {len(ref_blocks)} reference blocks"
        )
    if not hyp_blocks:
        raise EmptyInputError("no embedding blocks to score")
    precisions = []
    recalls = []
    for hyp, ref in zip(hyp_blocks, ref_blocks):
        p, r, _ = bert_score_from_embeddings(hyp, ref)
        precisions.append(p)
        recalls.append(r)
    precision = sum(precisions) / len(precisions)
    recall = sum(recalls) / len(recalls)
    return precision, recall, _harmonic(precision, recall)


# --- disfluency rate report ------------------------------------------------------


def micro_rate(utterances: Sequence[AnnotatedUtterance]) -> float:
    """Disfluent tokens over all tokens, pooled across utterances."""
    total = sum(len(u.tokens) for u in utterances)
    if total == 0:
        raise EmptyInputError("micro rate is undefined without tokens")
    return sum(len(disfluent_token_indices(u)) for u in utterances) / total


def rate_report(
    generated: Sequence[AnnotatedUtterance], reference_rate: float
) -> EvalReport:
    """Compare the pooled disfluency rate of generated output to a reference."""
    if not 0.0 <= reference_rate <= 1.0:
        raise ValueError(f"reference_rate must lie in [0, 1], got {reference_rate}")
    generated_rate = micro_rate(generated)
    return EvalReport(
        rate_generated=generated_rate,
        rate_reference=reference_rate,
        rate_delta=generated_rate - reference_rate,
    )


def combine_reports(base: EvalReport, **fields) -> EvalReport:
    return replace(base, **fields)


# --- two-sample t-test ------------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    statistic: float
    degrees_of_freedom: float
    p_value: float
    method: str

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value must lie in [0, 1]")
        if self.degrees_of_freedom <= 0:
            raise ValueError("degrees_of_freedom must be positive")


def two_sample_ttest(
    a: Sequence[float], b: Sequence[float], welch: bool = False
) -> TestResult:
    """Two-sided two-sample t-test.

    The default pools the variance (degrees of freedom |a| + |b| - 2);
    ``welch=True`` uses Welch's unequal-variance form instead. The p-value
    comes from the t-distribution CDF evaluated by a continued fraction for
    the regularized incomplete beta function.
    """
    if len(a) < 2 or len(b) < 2:
        raise TooFewSamplesError("each sample needs at least two observations")
    na, nb = len(a), len(b)
    mean_a = sum(a) / na
    mean_b = sum(b) / nb
    var_a = sum((x - mean_a) ** 2 for x in a) / (na - 1)
    var_b = sum((x - mean_b) ** 2 for x in b) / (nb - 1)

    if welch:
        sq_a = var_a / na
        sq_b = var_b / nb
        if sq_a + sq_b == 0.0:
            raise ZeroVarianceError("both samples are constant")
        statistic = (mean_a - mean_b) / math.sqrt(sq_a + sq_b)
        df = (sq_a + sq_b) ** 2 / (sq_a**2 / (na - 1) + sq_b**2 / (nb - 1))
        method = "welch_t"
    else:
        pooled = ((na - 1) * var_a + (nb - 1) * var_b) / (na + nb - 2)
        if pooled == 0.0:
            raise ZeroVarianceError("pooled variance is zero")
        statistic = (mean_a - mean_b) / math.sqrt(pooled * (1.0 / na + 1.0 / nb))
        df = na + nb - 2
        method = "student_t"

    p_value = _student_t_two_sided_p(statistic, df)
    return TestResult(statistic, float(df), p_value, method)


def _student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for T ~ Student's t with ``df`` degrees of freedom."""
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return _regularized_incomplete_beta(df / 2.0, 0.5, x)


def _regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by Lentz's continued fraction; absolute error below 1e-12."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    eps = 1e-15
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h
