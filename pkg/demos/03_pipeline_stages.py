"""The staged pipeline under a scripted model.

One question goes through query generation, retrieval, snippet
extraction, reranking, answer drafting, and the two-step
feedback-then-refine protocol. The scripted provider stands in for a
live model, which makes every step reproducible here.
"""
from bioqa.gateway import ChatRequest, FixtureRule, ScriptedProvider
from bioqa.model import Question, QuestionType
from bioqa.pipeline import (
    Feedback,
    PipelineContext,
    SystemConfig,
    draft_answer,
    feedback_then_refine,
    run_phase_a,
)
from bioqa.retrieval import CorpusDocument, ingest_corpus

# =============================================================================
# A corpus, a question, and a scripted model
# =============================================================================

backend = ingest_corpus([
    CorpusDocument("201", "Night blindness and vitamin A",
                   "Vitamin A deficiency causes night blindness."),
    CorpusDocument("202", "Nyctalopia therapy outcomes",
                   "Retinol supplementation reverses nyctalopia."),
    CorpusDocument("203", "Unrelated influenza study",
                   "Fever patterns in influenza."),
])

question = Question(id="demo1", body="Is night blindness treatable?",
                    qtype=QuestionType.YESNO)

rules = [
    # first match wins, and the refine prompt embeds the draft
    # instructions, so the refine rule must come before the draft rule
    FixtureRule("Revise and provide the final improved answer", "Yes."),
    FixtureRule("Generate one boolean retrieval query",
                '"night blindness" OR nyctalopia'),
    FixtureRule("Document PMID: 201\n", "abstract: causes night blindness"),
    FixtureRule("Document PMID: 202\n", "abstract: Retinol supplementation reverses nyctalopia."),
    FixtureRule("comma-separated permutation", "2,1"),
    FixtureRule('with exactly "yes" or "no"', "Yes, retinol supplementation reverses it."),
    FixtureRule("Evaluate the draft answer", "The draft is supported by snippet 1. Keep yes."),
]
provider = ScriptedProvider(rules)


class DirectCaller:
    """Routes stage prompts straight to the provider."""

    def call(self, stage, prompt, *, role="answer"):
        request = ChatRequest("scripted", "demo-model", (("user", prompt),))
        response = provider.send(request)
        print(f"  [{stage}] -> {response.text[:60]!r}")
        return response.text


config = SystemConfig(name="DEMO", query_model=("scripted", "demo-model"),
                      answer_model=("scripted", "demo-model"),
                      answer_strategy=Feedback(), retrieval_k=10)
ctx = PipelineContext(config=config, caller=DirectCaller(), backend=backend)

# =============================================================================
# Phase A: documents and snippets
# =============================================================================

print("phase A:")
phase_a = run_phase_a(question, ctx)
print("documents:", [(d.pmid, d.rank) for d in phase_a.documents])
for snippet in phase_a.snippets:
    print(f"snippet: pmid={snippet.pmid} {snippet.section}"
          f"[{snippet.begin_offset}:{snippet.end_offset}] {snippet.text!r}")

# =============================================================================
# Answer drafting with one feedback round
# =============================================================================

print("\nanswer generation:")
draft = draft_answer(question, phase_a.ranked_snippets, ctx)
print("draft payload:", draft.yesno)
final = feedback_then_refine(question, draft, phase_a.ranked_snippets, ctx)
print("final payload:", final.yesno)

print("\npipeline events:", [(e.kind, e.stage) for e in ctx.events] or "(none)")
