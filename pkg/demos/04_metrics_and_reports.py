"""The evaluation harness: retrieval, yes/no, factoid, list, and ideal
metrics, assembled into ranked report tables.
"""
from bioqa.evaluation import (
    average_precision,
    build_report,
    factoid_metrics,
    list_metrics,
    map_gmap,
    rouge2_f1,
    snippet_overlap_metrics,
    yesno_metrics,
)
from bioqa.model import AnswerSet, GoldExact, Question, QuestionType, Snippet, SubmissionEntry

# =============================================================================
# Retrieval metrics
# =============================================================================

ap = average_precision(["d1", "d2", "d3"], {"d1", "d3"})
print(f"AP([d1 d2 d3] vs {{d1,d3}}) = {ap:.4f}")          # 0.8333

mean_ap, gmap = map_gmap([0.5, 0.0])
print(f"MAP = {mean_ap:.4f}, GMAP = {gmap:.7f}")          # GMAP floored by epsilon

# =============================================================================
# Answer metrics
# =============================================================================

pairs = [("yes", "yes")] * 11 + [("no", "no")] * 5 + [("no", "yes")]
accuracy, f1_yes, f1_no, macro = yesno_metrics(pairs)
print(f"yes/no: acc={accuracy:.4f} f1y={f1_yes:.4f} f1n={f1_no:.4f} macro={macro:.4f}")

strict, lenient, mrr = factoid_metrics([
    ([["p53", "TP53"]], [["tp53"]]),          # rank-1 synonym hit, case-folded
    ([["p53", "TP53"]], [["x"], ["p53"]]),    # rank-2 hit
    ([["p53", "TP53"]], [["x"], ["y"]]),      # miss
])
print(f"factoid: strict={strict:.4f} lenient={lenient:.4f} mrr={mrr:.4f}")

mean_p, mean_r, mean_f = list_metrics([
    ([["BRCA1"], ["TP53", "p53"]], [["p53"], ["EGFR"]]),
])
print(f"list: P={mean_p:.4f} R={mean_r:.4f} F={mean_f:.4f}")

print(f"rouge-2: {rouge2_f1('a b c d', ['a b c e']):.4f}")

gold_span = Snippet("1", "abstract", 0, 10, "x" * 10)
returned = Snippet("1", "abstract", 5, 15, "x" * 10)
print("snippet overlap:", snippet_overlap_metrics([returned], [gold_span]))

# =============================================================================
# Report tables
# =============================================================================

answers = ["yes", "yes", "no", "no"]
gold = [Question(id=f"q{i}", body=f"{i}?", qtype=QuestionType.YESNO,
                 gold_exact=GoldExact(yesno_answer=answers[i])) for i in range(4)]
perfect = [SubmissionEntry(question_id=f"q{i}",
                           answers=AnswerSet(question_id=f"q{i}", qtype=QuestionType.YESNO,
                                             ideal="i", yesno=answers[i]))
           for i in range(4)]
sloppy = perfect[:3] + [
    SubmissionEntry(question_id="q3",
                    answers=AnswerSet(question_id="q3", qtype=QuestionType.YESNO,
                                      ideal="i", yesno="yes"))
]
report = build_report([("system-a", sloppy), ("system-b", perfect)], gold)
print()
print(report.render_text())
