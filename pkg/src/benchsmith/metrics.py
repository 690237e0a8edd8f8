"""Scoring and agreement statistics: MCQ set-overlap metrics, run
aggregation, score categorization and comparison, Spearman rank
correlation, quadratic-weighted kappa, retrieval scoring, and model
ranking across judges."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EvalError(Exception):
    pass


class LengthMismatch(EvalError):
    pass


class DegenerateAgreement(EvalError):
    """Agreement is undefined (constant ratings / expected agreement 1)."""


class IdMismatch(EvalError):
    pass


class EmptyMatrix(EvalError):
    pass


class IncompleteMatrix(EvalError):
    pass


class OutOfScale(EvalError):
    pass


# ---------------------------------------------------------------------------
# MCQ scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McqScore:
    accuracy: int
    recall: float
    precision: float

    def as_tuple(self) -> tuple[int, float, float]:
        return (self.accuracy, self.recall, self.precision)


def score_mcq(selected: set[str], correct: set[str]) -> McqScore:
    """accuracy = exact set match; recall over the correct set; precision
    over the selection (0 when nothing was selected)."""
    selected, correct = set(selected), set(correct)
    if not correct:
        raise EvalError("correct set must be non-empty")
    overlap = len(selected & correct)
    return McqScore(
        accuracy=1 if selected == correct else 0,
        recall=overlap / len(correct),
        precision=overlap / len(selected) if selected else 0.0,
    )


def macro_average_mcq(scores: list[McqScore]) -> dict:
    """Dataset-level accuracy/recall/precision as plain means of the
    per-question values."""
    if not scores:
        raise EmptyMatrix("no MCQ scores to aggregate")
    return {
        "accuracy": float(np.mean([s.accuracy for s in scores])),
        "recall": float(np.mean([s.recall for s in scores])),
        "precision": float(np.mean([s.precision for s in scores])),
    }


# ---------------------------------------------------------------------------
# Run aggregation
# ---------------------------------------------------------------------------


@dataclass
class RunAggregate:
    per_question_means: dict[str, float]
    overall_mean: float
    dispersion: float | None  # sample std of per-run overall means; None for 1 run
    per_run_means: list[float] = field(default_factory=list)


def aggregate_runs(score_matrix: dict[str, list[float]]) -> RunAggregate:
    """Aggregate a question x run score matrix: per-question means over
    runs, the overall mean, and the sample standard deviation of per-run
    overall means (absent for a single run)."""
    if not score_matrix:
        raise EmptyMatrix("score matrix is empty")
    lengths = {len(v) for v in score_matrix.values()}
    if len(lengths) != 1:
        raise EvalError(f"matrix is ragged: run counts {sorted(lengths)}")
    runs = lengths.pop()
    if runs < 1:
        raise EmptyMatrix("matrix has zero runs")

    grid = np.array([score_matrix[q] for q in score_matrix], dtype=float)
    per_question = {q: float(np.mean(scores)) for q, scores in score_matrix.items()}
    per_run = [float(np.mean(grid[:, r])) for r in range(runs)]
    dispersion = float(np.std(per_run, ddof=1)) if runs > 1 else None
    return RunAggregate(
        per_question_means=per_question,
        overall_mean=float(np.mean(per_run)),
        dispersion=dispersion,
        per_run_means=per_run,
    )


# ---------------------------------------------------------------------------
# Categorization and baseline/variant comparison
# ---------------------------------------------------------------------------

COMPARE_DELTA = 0.5


def categorize_score(score: float) -> str:
    """high for scores above 4, mid for scores above 2 (up to 4), low otherwise."""
    if score > 4:
        return "high"
    if score > 2:
        return "mid"
    return "low"


@dataclass
class CategoryReport:
    categories: dict[str, str]  # question id -> high|mid|low (from baseline)
    baseline_means: dict[str, float]  # per category
    variant_means: dict[str, float]
    better_count: int
    worse_count: int
    per_category_counts: dict[str, int]


def categorize_and_compare(
    baseline: dict[str, float], variant: dict[str, float]
) -> CategoryReport:
    """Bucket questions by their baseline score and compare a variant
    against it; better/worse counts use the strict |delta| > 0.5 rule."""
    if set(baseline) != set(variant):
        raise IdMismatch("baseline and variant cover different question ids")
    if not baseline:
        raise EmptyMatrix("no scores to compare")

    categories = {q: categorize_score(s) for q, s in baseline.items()}
    baseline_means, variant_means, counts = {}, {}, {}
    for cat in ("high", "mid", "low"):
        ids = [q for q, c in categories.items() if c == cat]
        counts[cat] = len(ids)
        if ids:
            baseline_means[cat] = float(np.mean([baseline[q] for q in ids]))
            variant_means[cat] = float(np.mean([variant[q] for q in ids]))

    better = sum(1 for q in baseline if variant[q] - baseline[q] > COMPARE_DELTA)
    worse = sum(1 for q in baseline if baseline[q] - variant[q] > COMPARE_DELTA)
    return CategoryReport(
        categories=categories,
        baseline_means=baseline_means,
        variant_means=variant_means,
        better_count=better,
        worse_count=worse,
        per_category_counts=counts,
    )


# ---------------------------------------------------------------------------
# Agreement statistics
# ---------------------------------------------------------------------------


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties replaced by the mean of their rank span."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    sorted_values = values[order]
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman's rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise LengthMismatch(f"|x|={len(x)} vs |y|={len(y)}")
    if len(x) < 2:
        raise EvalError("need at least 2 paired ratings")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateAgreement("constant rating vector: correlation undefined")
    rx, ry = _average_ranks(x), _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))


def weighted_kappa(x, y, categories=(1, 2, 3, 4, 5)) -> float:
    """Cohen's kappa with quadratic weights w(i,j) = ((i-j)/(k-1))^2 over
    the ordered category scale; marginals come from the paired sample."""
    categories = list(categories)
    k = len(categories)
    if k < 2:
        raise EvalError("scale needs at least 2 categories")
    index = {c: i for i, c in enumerate(categories)}
    if len(x) != len(y):
        raise LengthMismatch(f"|x|={len(x)} vs |y|={len(y)}")
    if len(x) < 2:
        raise EvalError("need at least 2 paired ratings")
    for value in list(x) + list(y):
        if value not in index:
            raise OutOfScale(f"rating {value!r} not on the scale {categories}")

    observed = np.zeros((k, k))
    for a, b in zip(x, y):
        observed[index[a], index[b]] += 1
    n = observed.sum()

    idx = np.arange(k, dtype=float)
    weights = ((idx[:, None] - idx[None, :]) / (k - 1)) ** 2
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / n

    expected_disagreement = float((weights * expected).sum())
    if expected_disagreement == 0.0:
        raise DegenerateAgreement("expected agreement is 1: kappa undefined")
    observed_disagreement = float((weights * observed).sum())
    return 1.0 - observed_disagreement / expected_disagreement


@dataclass
class AgreementReport:
    rater_a: str
    rater_b: str
    spearman_rho: float
    kappa: float
    n: int


def agreement_report(rater_a: str, ratings_a, rater_b: str, ratings_b,
                     categories=(1, 2, 3, 4, 5)) -> AgreementReport:
    """Both statistics over the identical paired sample."""
    return AgreementReport(
        rater_a=rater_a,
        rater_b=rater_b,
        spearman_rho=spearman(ratings_a, ratings_b),
        kappa=weighted_kappa(ratings_a, ratings_b, categories),
        n=len(ratings_a),
    )


# ---------------------------------------------------------------------------
# Retrieval scoring
# ---------------------------------------------------------------------------


@dataclass
class RetrievalReport:
    per_insight: dict[str, dict]  # id -> {correct_fraction, incorrect_count, ...}
    macro_average: float
    histogram: dict[int, int]  # incorrect-count -> number of insights


def score_retrieval(
    ground_truth: dict[str, set[str]], retrieved: dict[str, set[str]]
) -> RetrievalReport:
    """Per-insight fraction of ground-truth files retrieved plus the count
    of incorrectly retrieved extras; the histogram keys on that incorrect
    count, 0 meaning every retrieved file was correct."""
    if set(ground_truth) != set(retrieved):
        raise IdMismatch("ground-truth and retrieved sets cover different insights")
    if not ground_truth:
        raise EmptyMatrix("no insights to score")

    per_insight = {}
    histogram: dict[int, int] = {}
    for insight_id in ground_truth:
        truth = set(ground_truth[insight_id])
        got = set(retrieved[insight_id])
        if not truth:
            raise EvalError(f"insight {insight_id} has an empty ground-truth set")
        fraction = len(got & truth) / len(truth)
        incorrect = len(got - truth)
        per_insight[insight_id] = {
            "ground_truth": sorted(truth),
            "retrieved": sorted(got),
            "correct_fraction": fraction,
            "incorrect_count": incorrect,
        }
        histogram[incorrect] = histogram.get(incorrect, 0) + 1

    macro = float(np.mean([v["correct_fraction"] for v in per_insight.values()]))
    return RetrievalReport(per_insight=per_insight, macro_average=macro, histogram=histogram)


# ---------------------------------------------------------------------------
# Model ranking across judges
# ---------------------------------------------------------------------------


@dataclass
class RankingReport:
    rankings: dict[str, list[str]]  # judge -> models, best first
    overall_means: dict[str, dict[str, float]]  # judge -> model -> mean
    agreements: list[tuple[str, AgreementReport]]  # (model, reference-vs-judge)
    pair_summaries: dict[str, dict[str, float]]  # judge -> mean/std of rho and kappa


def rank_models(
    ratings: dict[str, dict[str, dict[str, int]]],
    reference_judge: str,
    categories=(1, 2, 3, 4, 5),
) -> RankingReport:
    """ratings[judge][model][question] -> rating. Ranks models per judge by
    overall mean and computes agreement between the reference judge and each
    other judge over per-question ratings, per model."""
    if reference_judge not in ratings:
        raise EvalError(f"reference judge {reference_judge!r} missing from ratings")
    judges = list(ratings)
    models = sorted({m for judge in judges for m in ratings[judge]})
    question_ids: set[str] | None = None
    for judge in judges:
        for model in models:
            if model not in ratings[judge]:
                raise IncompleteMatrix(f"judge {judge} lacks scores for model {model}")
            ids = set(ratings[judge][model])
            if question_ids is None:
                question_ids = ids
            elif ids != question_ids:
                raise IncompleteMatrix(
                    f"judge {judge} scored a different question set for {model}"
                )
    ordered_ids = sorted(question_ids or [])

    overall = {
        judge: {
            model: float(np.mean([ratings[judge][model][q] for q in ordered_ids]))
            for model in models
        }
        for judge in judges
    }
    rankings = {
        judge: sorted(models, key=lambda m: (-overall[judge][m], m)) for judge in judges
    }

    agreements: list[tuple[str, AgreementReport]] = []
    pair_values: dict[str, dict[str, list[float]]] = {}
    for judge in judges:
        if judge == reference_judge:
            continue
        for model in models:
            ref = [ratings[reference_judge][model][q] for q in ordered_ids]
            other = [ratings[judge][model][q] for q in ordered_ids]
            report = agreement_report(reference_judge, ref, judge, other, categories)
            agreements.append((model, report))
            bucket = pair_values.setdefault(judge, {"rho": [], "kappa": []})
            bucket["rho"].append(report.spearman_rho)
            bucket["kappa"].append(report.kappa)

    pair_summaries = {
        judge: {
            "rho_mean": float(np.mean(v["rho"])),
            "rho_std": float(np.std(v["rho"], ddof=1)) if len(v["rho"]) > 1 else 0.0,
            "kappa_mean": float(np.mean(v["kappa"])),
            "kappa_std": float(np.std(v["kappa"], ddof=1)) if len(v["kappa"]) > 1 else 0.0,
        }
        for judge, v in pair_values.items()
    }
    return RankingReport(
        rankings=rankings,
        overall_means=overall,
        agreements=agreements,
        pair_summaries=pair_summaries,
    )


# ---------------------------------------------------------------------------
# Plain-text table rendering for CLI reports
# ---------------------------------------------------------------------------


def render_table(headers: list[str], rows: list[list]) -> str:
    cells = [[str(c) for c in row] for row in rows]
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in cells)) if cells else len(headers[i])
        for i in range(len(headers))
    ]
    def fmt(row):
        return "  ".join(str(c).ljust(widths[i]) for i, c in enumerate(row)).rstrip()

    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in cells)
    return "\n".join(lines)
