"""Prompt templates for every pipeline stage.

Stage-specific drafting/query prompts ship as editable default template
files (package data), while the feedback instructions (one per answer
type) and the refinement block are fixed verbatim constants; the
template files must contain them character-for-character, which is
checked at load time and by snapshot tests.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..model import QuestionType

# fixed wording for the feedback step, one instruction per answer type
FEEDBACK_INSTRUCTION_YESNO = (
    "Evaluate the draft answer ('yes' or 'no') against the provided snippets "
    "and the question. Indicate explicitly if it should change, with brief reasoning."
)
FEEDBACK_INSTRUCTION_ENTITY = (
    "Evaluate the draft JSON entity list answer against the provided snippets "
    "and the question. Clearly suggest corrections, removals, or additions."
)
FEEDBACK_INSTRUCTION_SUMMARY = (
    "Evaluate the provided summary answer for accuracy, clarity, and completeness "
    "against the provided snippets and the question. Clearly suggest improvements."
)
REFINEMENT_INSTRUCTION = (
    "Revise and provide the final improved answer strictly following the original instructions."
)
REFINEMENT_BLOCK = "Expert Feedback: {feedback_response}\n" + REFINEMENT_INSTRUCTION

FEEDBACK_INSTRUCTIONS = {
    QuestionType.YESNO: FEEDBACK_INSTRUCTION_YESNO,
    QuestionType.FACTOID: FEEDBACK_INSTRUCTION_ENTITY,
    QuestionType.LIST: FEEDBACK_INSTRUCTION_ENTITY,
    QuestionType.SUMMARY: FEEDBACK_INSTRUCTION_SUMMARY,
}

# instruction fragments the scripted oracle keys on to identify stages
MARKER_QUERY_GEN = "Generate one boolean retrieval query"
MARKER_QUERY_FEEDBACK = "Evaluate whether the query retrieves"
MARKER_SNIPPET_EXTRACT = "Copy up to 3 verbatim passages"
MARKER_RERANK = "comma-separated permutation"
MARKER_DRAFT_YESNO = 'with exactly "yes" or "no"'
MARKER_DRAFT_FACTOID = "up to 5 candidate entities"
MARKER_DRAFT_LIST = "list of all entities it asks for"
MARKER_DRAFT_SUMMARY = "Write a short ideal answer"

QUESTION_ID_RE = re.compile(r"Question ID: (\S+)")
PMID_RE = re.compile(r"Document PMID: (\S+)")

TEMPLATE_NAMES = (
    "query_gen", "query_feedback", "snippet_extract", "rerank",
    "draft_yesno", "draft_factoid", "draft_list", "draft_summary",
    "feedback_yesno", "feedback_factoid", "feedback_summary",
    "refine",
)

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class UndefinedPlaceholderError(KeyError):
    pass


@dataclass(frozen=True)
class Template:
    name: str
    text: str

    @property
    def placeholders(self) -> frozenset:
        return frozenset(_PLACEHOLDER_RE.findall(self.text))

    def render(self, **values) -> str:
        missing = self.placeholders - values.keys()
        if missing:
            raise UndefinedPlaceholderError(
                f"template {self.name}: undefined placeholders {sorted(missing)}")
        return _PLACEHOLDER_RE.sub(lambda m: str(values[m.group(1)]), self.text)


@dataclass(frozen=True)
class PromptSet:
    templates: Mapping[str, Template]

    def __post_init__(self):
        missing = set(TEMPLATE_NAMES) - set(self.templates)
        if missing:
            raise ValueError(f"prompt set is missing templates: {sorted(missing)}")
        checks = (
            ("feedback_yesno", FEEDBACK_INSTRUCTION_YESNO),
            ("feedback_factoid", FEEDBACK_INSTRUCTION_ENTITY),
            ("feedback_summary", FEEDBACK_INSTRUCTION_SUMMARY),
            ("refine", "Expert Feedback: {feedback_response}"),
            ("refine", REFINEMENT_INSTRUCTION),
        )
        for name, fragment in checks:
            if fragment not in self.templates[name].text:
                raise ValueError(f"template {name} must contain the fixed text {fragment!r}")

    def __getitem__(self, name: str) -> Template:
        return self.templates[name]

    def draft(self, qtype: QuestionType) -> Template:
        return self.templates[f"draft_{qtype.value}"]

    def feedback(self, qtype: QuestionType) -> Template:
        # factoid and list questions share one feedback instruction
        if qtype is QuestionType.LIST:
            return self.templates["feedback_factoid"]
        return self.templates[f"feedback_{qtype.value}"]

    @classmethod
    def from_dir(cls, directory) -> "PromptSet":
        directory = Path(directory)
        templates = {}
        for name in TEMPLATE_NAMES:
            path = directory / f"{name}.txt"
            if not path.exists():
                raise FileNotFoundError(f"missing prompt template file: {path}")
            templates[name] = Template(name=name, text=path.read_text("utf-8"))
        return cls(templates=templates)

    @classmethod
    def default(cls) -> "PromptSet":
        root = resources.files("bioqa.data").joinpath("prompts")
        templates = {
            name: Template(name=name, text=root.joinpath(f"{name}.txt").read_text("utf-8"))
            for name in TEMPLATE_NAMES
        }
        return cls(templates=templates)


def default_fewshot_examples(k: int = 10) -> tuple[tuple[str, str], ...]:
    raw = resources.files("bioqa.data").joinpath("fewshot_examples.json").read_text("utf-8")
    pairs = [(item["question"], item["query"]) for item in json.loads(raw)]
    if k > len(pairs):
        raise ValueError(f"only {len(pairs)} bundled examples, {k} requested")
    return tuple(pairs[:k])
