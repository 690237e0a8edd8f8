"""Scoring walkthrough: MCQ set metrics, run aggregation, score
categorization, and the two inter-rater agreement statistics.

Run:  python3 demos/05_scoring_and_agreement.py
"""

from benchsmith.metrics import (
    aggregate_runs,
    categorize_and_compare,
    render_table,
    score_mcq,
    score_retrieval,
    spearman,
    weighted_kappa,
)

print("MCQ set-overlap scoring (accuracy, recall, precision):")
rows = []
for selected, correct in [({"A", "C"}, {"A", "C"}), ({"A"}, {"A", "C"}),
                          ({"A", "B", "C", "D"}, {"B"}), (set(), {"B"})]:
    score = score_mcq(selected, correct)
    rows.append([",".join(sorted(selected)) or "-", ",".join(sorted(correct)),
                 score.accuracy, f"{score.recall:.2f}", f"{score.precision:.2f}"])
print(render_table(["selected", "correct", "acc", "recall", "precision"], rows))

print("\nAggregating three independent runs:")
agg = aggregate_runs({"q1": [2.1, 2.2, 2.3], "q2": [1.9, 2.0, 1.9], "q3": [2.1, 2.0, 2.2]})
print(f"  per-run means {['%.3f' % m for m in agg.per_run_means]}"
      f" -> {agg.overall_mean:.3f} +/- {agg.dispersion:.3f}")

print("\nCategorize a baseline and count meaningful shifts (|delta| > 0.5):")
baseline = {"q1": 4.6, "q2": 3.1, "q3": 1.4, "q4": 2.2}
variant = {"q1": 4.1, "q2": 3.8, "q3": 2.5, "q4": 2.1}
report = categorize_and_compare(baseline, variant)
print(f"  categories {report.categories}")
print(f"  better {report.better_count}, worse {report.worse_count}")

print("\nAgreement between two raters over the same answers:")
rater_a = [5, 4, 4, 2, 1, 3, 2, 5, 1, 4]
rater_b = [5, 4, 3, 2, 1, 3, 1, 4, 2, 4]
print(f"  spearman rho = {spearman(rater_a, rater_b):.4f}")
print(f"  quadratic-weighted kappa = {weighted_kappa(rater_a, rater_b):.4f}")

print("\nRetrieval quality against known ground-truth file sets:")
report = score_retrieval(
    {"i1": {"a.py", "b.py"}, "i2": {"c.py"}, "i3": {"d.py", "e.py"}},
    {"i1": {"a.py"}, "i2": {"c.py", "x.py"}, "i3": {"d.py", "e.py"}},
)
print(f"  macro-average correct fraction: {report.macro_average:.3f}")
print(f"  incorrect-count histogram: {report.histogram}")
