"""Evaluation metrics and report tables.

Retrieval: precision/recall/F at the returned list, average precision
(cutoff 10), MAP, epsilon-floored GMAP. Snippets: character-interval
overlap P/R/F plus an overlap-relevance MAP. Yes/no: accuracy and
per-class/macro F1. Factoid: strict/lenient accuracy and MRR. List:
mean P/R/F with at-most-once group matching. Ideal: ROUGE-2 F1.

All internal math is full precision; rounding happens only when tables
are rendered (4 decimals).
"""
from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .model import Question, QuestionType, Snippet, SubmissionEntry

log = logging.getLogger(__name__)

AP_CUTOFF = 10
GMAP_EPSILON = 1e-5

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


# --- retrieval ---------------------------------------------------------------

def average_precision(ranked: Sequence[str], relevant: Iterable[str],
                      cutoff: int = AP_CUTOFF) -> float:
    """AP over the cutoff-truncated ranking with denominator
    min(|relevant|, cutoff); zero (a logged anomaly) when there is no
    relevant document."""
    relevant = set(relevant)
    ranked = list(ranked)[:cutoff]
    if len(set(ranked)) != len(ranked):
        raise ValueError("ranked list contains duplicate ids")
    if not relevant:
        log.warning("average_precision: empty relevant set")
        return 0.0
    hits = 0
    precision_sum = 0.0
    for position, doc_id in enumerate(ranked, start=1):
        if doc_id in relevant:
            hits += 1
            precision_sum += hits / position
    return precision_sum / min(len(relevant), cutoff)


def map_gmap(per_question_ap: Sequence[float],
             epsilon: float = GMAP_EPSILON) -> tuple[float, float]:
    if not per_question_ap:
        raise ValueError("need at least one AP value")
    mean_ap = sum(per_question_ap) / len(per_question_ap)
    gmap = math.exp(sum(math.log(ap + epsilon) for ap in per_question_ap)
                    / len(per_question_ap))
    return mean_ap, gmap


def prf_at_list(returned: Sequence[str], relevant: Iterable[str]) -> tuple[float, float, float]:
    relevant = set(relevant)
    returned = list(returned)
    hits = len(set(returned) & relevant)
    precision = hits / len(returned) if returned else 0.0
    recall = hits / len(relevant) if relevant else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# --- yes/no --------------------------------------------------------------------

def yesno_metrics(pairs: Sequence[tuple[str, Optional[str]]]
                  ) -> tuple[float, float, float, float]:
    """(accuracy, f1_yes, f1_no, macro_f1) over (gold, predicted) pairs;
    a missing prediction counts as wrong and as neither predicted class."""
    if not pairs:
        raise ValueError("need at least one yes/no pair")
    correct = sum(1 for gold, pred in pairs if pred == gold)
    accuracy = correct / len(pairs)

    def class_f1(label: str) -> float:
        tp = sum(1 for gold, pred in pairs if gold == label and pred == label)
        fp = sum(1 for gold, pred in pairs if gold != label and pred == label)
        fn = sum(1 for gold, pred in pairs if gold == label and pred != label)
        if tp == 0 and fp == 0 and fn == 0:
            log.warning("yes/no F1 for class %r undefined (no gold, no predictions); using 0", label)
            return 0.0
        if 2 * tp + fp + fn == 0:
            return 0.0
        return 2 * tp / (2 * tp + fp + fn)

    f1_yes = class_f1("yes")
    f1_no = class_f1("no")
    return accuracy, f1_yes, f1_no, (f1_yes + f1_no) / 2


# --- entity matching -------------------------------------------------------------

def _norm_entity(entity: str) -> str:
    return entity.strip().casefold()


def _entity_in_groups(entity: str, groups: Sequence[Sequence[str]]) -> bool:
    norm = _norm_entity(entity)
    return any(norm == _norm_entity(s) for group in groups for s in group)


def factoid_metrics(per_question: Sequence[tuple[Sequence[Sequence[str]],
                                                 Sequence[Sequence[str]]]]
                    ) -> tuple[float, float, float]:
    """(strict, lenient, mrr): a predicted entity matches when it equals
    any synonym in any gold group after trim+casefold; strict needs the
    match at rank 1, lenient within the top 5."""
    if not per_question:
        raise ValueError("need at least one factoid question")
    strict = lenient = rr_sum = 0.0
    for gold_groups, predicted in per_question:
        first_rank = None
        for rank, group in enumerate(predicted[:5], start=1):
            if any(_entity_in_groups(entity, gold_groups) for entity in group):
                first_rank = rank
                break
        if first_rank == 1:
            strict += 1
        if first_rank is not None:
            lenient += 1
            rr_sum += 1.0 / first_rank
    n = len(per_question)
    return strict / n, lenient / n, rr_sum / n


def list_metrics(per_question: Sequence[tuple[Sequence[Sequence[str]],
                                              Sequence[Sequence[str]]]]
                 ) -> tuple[float, float, float]:
    """Unweighted means of per-question P/R/F where each gold group can
    be matched by at most one predicted entity (duplicates only hurt
    precision)."""
    if not per_question:
        raise ValueError("need at least one list question")
    p_sum = r_sum = f_sum = 0.0
    for gold_groups, predicted in per_question:
        matched_groups: set[int] = set()
        for group in predicted:
            for gi, gold_group in enumerate(gold_groups):
                if gi in matched_groups:
                    continue
                if any(_entity_in_groups(entity, [gold_group]) for entity in group):
                    matched_groups.add(gi)
                    break
        matched = len(matched_groups)
        precision = matched / len(predicted) if predicted else 0.0
        recall = matched / len(gold_groups) if gold_groups else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        p_sum += precision
        r_sum += recall
        f_sum += f1
    n = len(per_question)
    return p_sum / n, r_sum / n, f_sum / n


# --- ideal answers -----------------------------------------------------------------

def _bigrams(text: str) -> Counter:
    tokens = [t.lower() for t in _WORD_RE.findall(text)]
    return Counter(zip(tokens, tokens[1:]))


def rouge2_f1(candidate: str, references: Sequence[str]) -> float:
    """Bigram-multiset F1 against each reference (lowercase word
    segmentation, no stemming or stopwords); returns the max."""
    cand = _bigrams(candidate)
    if not cand:
        return 0.0
    best = 0.0
    for reference in references:
        ref = _bigrams(reference)
        if not ref:
            continue
        overlap = sum((cand & ref).values())
        precision = overlap / sum(cand.values())
        recall = overlap / sum(ref.values())
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        best = max(best, f1)
    return best


# --- snippet overlap ----------------------------------------------------------------

def _merge_intervals(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for begin, end in sorted(intervals):
        if merged and begin <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((begin, end))
    return merged


def _interval_length(intervals: list[tuple[int, int]]) -> int:
    return sum(end - begin for begin, end in intervals)


def _intersection_length(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> int:
    total = 0
    for ab, ae in a:
        for bb, be in b:
            total += max(0, min(ae, be) - max(ab, bb))
    return total


def _group_by_section(snippets: Sequence[Snippet]) -> dict[tuple[str, str], list[tuple[int, int]]]:
    grouped: dict[tuple[str, str], list[tuple[int, int]]] = {}
    for snippet in snippets:
        grouped.setdefault((snippet.pmid, snippet.section), []) \
            .append((snippet.begin_offset, snippet.end_offset))
    return {key: _merge_intervals(intervals) for key, intervals in grouped.items()}


def snippet_overlap_metrics(returned: Sequence[Snippet], gold: Sequence[Snippet]
                            ) -> tuple[float, float, float]:
    """Character-interval overlap per (pmid, section); overlapping spans
    are merged on both sides before counting."""
    returned_merged = _group_by_section(returned)
    gold_merged = _group_by_section(gold)
    returned_total = sum(_interval_length(v) for v in returned_merged.values())
    gold_total = sum(_interval_length(v) for v in gold_merged.values())
    overlap = 0
    for key, intervals in returned_merged.items():
        if key in gold_merged:
            overlap += _intersection_length(intervals, gold_merged[key])
    precision = overlap / returned_total if returned_total else 0.0
    recall = overlap / gold_total if gold_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def snippet_relevant(snippet: Snippet, gold: Sequence[Snippet]) -> bool:
    return any(
        snippet.pmid == g.pmid and snippet.section == g.section
        and min(snippet.end_offset, g.end_offset) > max(snippet.begin_offset, g.begin_offset)
        for g in gold
    )


def snippet_average_precision(returned: Sequence[Snippet], gold: Sequence[Snippet],
                              cutoff: int = AP_CUTOFF) -> float:
    """AP over the ranked snippet list with gold-overlap as binary
    relevance; denominator min(|gold|, cutoff)."""
    if not gold:
        log.warning("snippet AP: empty gold set")
        return 0.0
    hits = 0
    precision_sum = 0.0
    for position, snippet in enumerate(returned[:cutoff], start=1):
        if snippet_relevant(snippet, gold):
            hits += 1
            precision_sum += hits / position
    return precision_sum / min(len(gold), cutoff)


# --- report ------------------------------------------------------------------------

TABLE_SPECS = (
    ("documents", "Document Retrieval",
     ("Precision", "Recall", "F-Measure", "MAP", "GMAP"), "MAP"),
    ("snippets", "Snippet Retrieval",
     ("Precision", "Recall", "F-Measure", "MAP", "GMAP"), "MAP"),
    ("yesno", "Yes/No questions",
     ("Accuracy", "F1 Yes", "F1 No", "Macro F1"), "Macro F1"),
    ("factoid", "Factoid questions",
     ("Strict Acc.", "Lenient Acc.", "MRR"), "MRR"),
    ("list", "List questions",
     ("Mean Prec.", "Recall", "F-Measure"), "F-Measure"),
    ("ideal", "Ideal answers",
     ("ROUGE-2 F1",), "ROUGE-2 F1"),
)


@dataclass(frozen=True)
class ReportRow:
    position: int
    system: str
    values: Mapping[str, float]


@dataclass(frozen=True)
class ReportTable:
    key: str
    title: str
    columns: tuple[str, ...]
    headline: str
    rows: tuple[ReportRow, ...]


@dataclass(frozen=True)
class MetricsReport:
    tables: tuple[ReportTable, ...]

    def table(self, key: str) -> Optional[ReportTable]:
        for table in self.tables:
            if table.key == key:
                return table
        return None

    def render_text(self) -> str:
        blocks = []
        for table in self.tables:
            headers = ("Position", "System", *table.columns)
            rows = [
                (str(row.position), row.system,
                 *(f"{row.values[c]:.4f}" for c in table.columns))
                for row in table.rows
            ]
            widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
                      for i, h in enumerate(headers)]
            lines = [table.title,
                     "  ".join(h.ljust(w) for h, w in zip(headers, widths))]
            for row in rows:
                lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"

    def to_obj(self) -> dict:
        return {
            "tables": [
                {
                    "key": table.key,
                    "title": table.title,
                    "columns": list(table.columns),
                    "headline": table.headline,
                    "rows": [
                        {"position": row.position, "system": row.system,
                         "values": dict(row.values)}
                        for row in table.rows
                    ],
                }
                for table in self.tables
            ]
        }

    def render_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _entry_map(entries: Sequence[SubmissionEntry]) -> dict[str, SubmissionEntry]:
    return {entry.question_id: entry for entry in entries}


def _system_metrics(entries: Sequence[SubmissionEntry], gold: Sequence[Question]
                    ) -> dict[str, dict[str, float]]:
    by_id = _entry_map(entries)
    out: dict[str, dict[str, float]] = {}

    doc_questions = [question for question in gold if question.gold_documents]
    if doc_questions:
        aps, ps, rs, fs = [], [], [], []
        for question in doc_questions:
            entry = by_id.get(question.id)
            returned = [d.pmid for d in entry.documents] if entry else []
            relevant = set(question.gold_documents)
            aps.append(average_precision(returned, relevant))
            p, r, f1 = prf_at_list(returned, relevant)
            ps.append(p)
            rs.append(r)
            fs.append(f1)
        mean_ap, gmap = map_gmap(aps)
        out["documents"] = {
            "Precision": sum(ps) / len(ps), "Recall": sum(rs) / len(rs),
            "F-Measure": sum(fs) / len(fs), "MAP": mean_ap, "GMAP": gmap,
        }

    snip_questions = [question for question in gold if question.gold_snippets]
    if snip_questions:
        aps, ps, rs, fs = [], [], [], []
        for question in snip_questions:
            entry = by_id.get(question.id)
            returned = list(entry.snippets) if entry else []
            gold_snips = list(question.gold_snippets)
            p, r, f1 = snippet_overlap_metrics(returned, gold_snips)
            ps.append(p)
            rs.append(r)
            fs.append(f1)
            aps.append(snippet_average_precision(returned, gold_snips))
        mean_ap, gmap = map_gmap(aps)
        out["snippets"] = {
            "Precision": sum(ps) / len(ps), "Recall": sum(rs) / len(rs),
            "F-Measure": sum(fs) / len(fs), "MAP": mean_ap, "GMAP": gmap,
        }

    yesno_pairs = []
    for question in gold:
        if question.qtype is QuestionType.YESNO and question.gold_exact \
                and question.gold_exact.yesno_answer:
            entry = by_id.get(question.id)
            predicted = entry.answers.yesno if entry and entry.answers else None
            yesno_pairs.append((question.gold_exact.yesno_answer, predicted))
    if yesno_pairs:
        accuracy, f1_yes, f1_no, macro = yesno_metrics(yesno_pairs)
        out["yesno"] = {"Accuracy": accuracy, "F1 Yes": f1_yes,
                        "F1 No": f1_no, "Macro F1": macro}

    factoid_rows = []
    for question in gold:
        if question.qtype is QuestionType.FACTOID and question.gold_exact \
                and question.gold_exact.factoid_synonym_groups:
            entry = by_id.get(question.id)
            predicted = entry.answers.entities if entry and entry.answers \
                and entry.answers.entities else ()
            factoid_rows.append((question.gold_exact.factoid_synonym_groups, predicted))
    if factoid_rows:
        strict, lenient, mrr = factoid_metrics(factoid_rows)
        out["factoid"] = {"Strict Acc.": strict, "Lenient Acc.": lenient, "MRR": mrr}

    list_rows = []
    for question in gold:
        if question.qtype is QuestionType.LIST and question.gold_exact \
                and question.gold_exact.list_entity_groups:
            entry = by_id.get(question.id)
            predicted = entry.answers.entities if entry and entry.answers \
                and entry.answers.entities else ()
            list_rows.append((question.gold_exact.list_entity_groups, predicted))
    if list_rows:
        mean_p, mean_r, mean_f = list_metrics(list_rows)
        out["list"] = {"Mean Prec.": mean_p, "Recall": mean_r, "F-Measure": mean_f}

    rouge_scores = []
    for question in gold:
        if question.gold_ideal:
            entry = by_id.get(question.id)
            candidate = entry.answers.ideal if entry and entry.answers else ""
            rouge_scores.append(rouge2_f1(candidate or "", list(question.gold_ideal)))
    if rouge_scores:
        out["ideal"] = {"ROUGE-2 F1": sum(rouge_scores) / len(rouge_scores)}

    return out


def build_report(systems: Sequence[tuple[str, Sequence[SubmissionEntry]]],
                 gold: Sequence[Question]) -> MetricsReport:
    """All applicable metrics per system, one table per question
    category, rows sorted by the table's headline metric (ties broken by
    system name) with positions assigned."""
    per_system = {name: _system_metrics(entries, gold) for name, entries in systems}
    tables = []
    for key, title, columns, headline in TABLE_SPECS:
        entries = [(name, metrics[key]) for name, metrics in per_system.items()
                   if key in metrics]
        if not entries:
            continue
        entries.sort(key=lambda item: (-item[1][headline], item[0]))
        rows = tuple(
            ReportRow(position=i, system=name, values=values)
            for i, (name, values) in enumerate(entries, start=1)
        )
        tables.append(ReportTable(key=key, title=title, columns=columns,
                                  headline=headline, rows=rows))
    return MetricsReport(tables=tuple(tables))
