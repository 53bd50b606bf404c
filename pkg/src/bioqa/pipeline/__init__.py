"""The staged question-answering pipeline and its prompt templates."""
from .prompts import (
    FEEDBACK_INSTRUCTION_ENTITY,
    FEEDBACK_INSTRUCTION_SUMMARY,
    FEEDBACK_INSTRUCTION_YESNO,
    FEEDBACK_INSTRUCTIONS,
    REFINEMENT_BLOCK,
    REFINEMENT_INSTRUCTION,
    PromptSet,
    Template,
    UndefinedPlaceholderError,
    default_fewshot_examples,
)
from .stages import (
    Baseline,
    DraftAnswer,
    ExtractionFailedError,
    Feedback,
    FewShot,
    PhaseAResult,
    PipelineContext,
    PipelineEvent,
    SearchBackend,
    StageCaller,
    Strategy,
    SystemConfig,
    draft_answer,
    extract_entity_groups,
    extract_snippets,
    extract_yesno,
    fallback_query,
    feedback_then_refine,
    generate_query,
    locate_span,
    refine_query_with_feedback,
    rerank,
    run_phase_a,
    run_phase_a_plus,
    run_phase_b,
)

__all__ = [
    "FEEDBACK_INSTRUCTION_YESNO", "FEEDBACK_INSTRUCTION_ENTITY",
    "FEEDBACK_INSTRUCTION_SUMMARY", "FEEDBACK_INSTRUCTIONS",
    "REFINEMENT_BLOCK", "REFINEMENT_INSTRUCTION", "PromptSet", "Template",
    "UndefinedPlaceholderError", "default_fewshot_examples",
    "Baseline", "DraftAnswer", "ExtractionFailedError", "Feedback", "FewShot",
    "PhaseAResult", "PipelineContext", "PipelineEvent", "SearchBackend",
    "StageCaller", "Strategy", "SystemConfig", "draft_answer",
    "extract_entity_groups", "extract_snippets", "extract_yesno",
    "fallback_query", "feedback_then_refine", "generate_query", "locate_span",
    "refine_query_with_feedback", "rerank", "run_phase_a", "run_phase_a_plus",
    "run_phase_b",
]
