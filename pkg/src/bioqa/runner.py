"""Experiment configuration, the resumable run manifest, and batch
orchestration: every system over every question under a bounded worker
pool, with per-question partial outputs merged into canonical
submissions at the end (failures are per-question, never run-fatal).

Config files are INI-style; all relative paths inside a config resolve
against the config file's directory. Credentials come from environment
variables only.
"""
from __future__ import annotations

import configparser
import datetime
import json
import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import evaluation
from .gateway import (
    ChatRequest,
    FailingProvider,
    Gateway,
    HttpProvider,
    OracleProvider,
    ProviderLimits,
    ResponseCache,
    ScriptedProvider,
    TokenBucket,
)
from .model import (
    Phase,
    Question,
    QuestionType,
    SubmissionEntry,
    parse_questions,
    parse_submission,
    serialize_submission,
)
from .pipeline import (
    Baseline,
    Feedback,
    FewShot,
    PipelineContext,
    PromptSet,
    SystemConfig,
    run_phase_a,
    run_phase_a_plus,
    run_phase_b,
)
from .retrieval import Index, RemoteSearchClient
from .retrieval.remote import RemoteBackend
from .retry import RetryPolicy

log = logging.getLogger(__name__)

DEFAULT_CONCURRENCY = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    id: str
    kind: str
    base_url: str = ""
    api_key_env: str = ""
    fixtures: Optional[Path] = None
    gold: Optional[Path] = None
    requests_per_second: Optional[float] = None
    max_in_flight: Optional[int] = None


@dataclass(frozen=True)
class SweepConfig:
    provider: str
    models: tuple[str, ...]
    query_strategy: str = "baseline"
    answer_strategy: str = "baseline"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    phase: Phase
    mode: str
    concurrency: int
    cache_dir: Path
    index_path: Optional[Path]
    endpoint: Optional[str]
    providers: dict[str, ProviderConfig]
    systems: tuple[SystemConfig, ...]
    sweep: Optional[SweepConfig] = None
    max_attempts: int = 5
    document_cap: int = 10
    snippet_cap: int = 10


def _parse_strategy(raw: str) -> object:
    raw = raw.strip().lower()
    if raw in ("baseline", "base", ""):
        return Baseline()
    if raw in ("feedback", "fb"):
        return Feedback()
    if raw in ("10-shot", "10shot", "fewshot"):
        return FewShot.default(10)
    if raw.startswith("fewshot:"):
        k = int(raw.split(":", 1)[1])
        return FewShot.default(k)
    raise ConfigError(f"unknown strategy {raw!r} (baseline|feedback|10-shot|fewshot:<k>)")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    base = path.parent
    parser = configparser.ConfigParser()
    parser.read(path, encoding="utf-8")

    def resolve(raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base / p

    run = parser["run"] if parser.has_section("run") else {}
    phase = Phase.parse(run.get("phase", "a"))
    mode = run.get("mode", "record")
    if mode not in ("record", "replay"):
        raise ConfigError(f"mode must be record|replay, got {mode!r}")
    concurrency = int(run.get("concurrency", DEFAULT_CONCURRENCY))
    cache_dir = resolve(run.get("cache_dir", "cache"))
    max_attempts = int(run.get("max_attempts", 5))
    document_cap = int(run.get("document_cap", 10))
    snippet_cap = int(run.get("snippet_cap", 10))

    index_path: Optional[Path] = None
    endpoint: Optional[str] = None
    if parser.has_section("retrieval"):
        retrieval = parser["retrieval"]
        if retrieval.get("index_path"):
            index_path = resolve(retrieval["index_path"])
        if retrieval.get("endpoint"):
            endpoint = retrieval["endpoint"]
    if (index_path is None) == (endpoint is None):
        raise ConfigError("exactly one retrieval backend required: "
                          "[retrieval] index_path or endpoint")

    providers: dict[str, ProviderConfig] = {}
    for section in parser.sections():
        if not section.startswith("provider."):
            continue
        pid = section.split(".", 1)[1]
        s = parser[section]
        kind = s.get("kind", "")
        if kind not in ("openai_chat", "google_chat", "reasoning_chat",
                        "scripted", "oracle", "failing"):
            raise ConfigError(f"provider {pid}: unknown kind {kind!r}")
        providers[pid] = ProviderConfig(
            id=pid, kind=kind,
            base_url=s.get("base_url", ""),
            api_key_env=s.get("api_key_env", ""),
            fixtures=resolve(s["fixtures"]) if s.get("fixtures") else None,
            gold=resolve(s["gold"]) if s.get("gold") else None,
            requests_per_second=float(s["requests_per_second"])
            if s.get("requests_per_second") else None,
            max_in_flight=int(s["max_in_flight"]) if s.get("max_in_flight") else None,
        )

    systems: list[SystemConfig] = []
    for section in parser.sections():
        if not section.startswith("system."):
            continue
        name = section.split(".", 1)[1]
        s = parser[section]
        for key in ("query_provider", "query_model", "answer_provider", "answer_model"):
            if not s.get(key):
                raise ConfigError(f"system {name}: missing {key}")
        for role_key in ("query_provider", "answer_provider"):
            if s[role_key] not in providers:
                raise ConfigError(f"system {name}: provider {s[role_key]!r} is not configured")
        prompts = PromptSet.default()
        if s.get("prompts_dir"):
            prompts_dir = resolve(s["prompts_dir"])
            if not prompts_dir.is_dir():
                raise ConfigError(f"system {name}: prompts_dir {prompts_dir} does not exist")
            prompts = PromptSet.from_dir(prompts_dir)
        feedback_model = None
        if s.get("feedback_provider") or s.get("feedback_model"):
            if not (s.get("feedback_provider") and s.get("feedback_model")):
                raise ConfigError(f"system {name}: feedback_provider and feedback_model "
                                  "must be set together")
            if s["feedback_provider"] not in providers:
                raise ConfigError(
                    f"system {name}: provider {s['feedback_provider']!r} is not configured")
            feedback_model = (s["feedback_provider"], s["feedback_model"])
        try:
            systems.append(SystemConfig(
                name=name,
                query_model=(s["query_provider"], s["query_model"]),
                answer_model=(s["answer_provider"], s["answer_model"]),
                feedback_model=feedback_model,
                query_strategy=_parse_strategy(s.get("query_strategy", "baseline")),
                answer_strategy=_parse_strategy(s.get("answer_strategy", "baseline")),
                prompts=prompts,
                retrieval_k=int(s.get("retrieval_k", 50)),
                snippet_context_k=int(s.get("snippet_context_k", 20)),
                document_cap=document_cap,
                snippet_cap=snippet_cap,
                max_snippets_per_doc=int(s.get("max_snippets_per_doc", 3)),
                feedback_context=s.get("feedback_context", "titles"),
                temperature=float(s.get("temperature", 0.0)),
                max_output_tokens=int(s.get("max_output_tokens", 1024)),
            ))
        except ValueError as exc:
            raise ConfigError(f"system {name}: {exc}") from exc

    sweep = None
    if parser.has_section("sweep"):
        s = parser["sweep"]
        if not s.get("provider") or not s.get("models"):
            raise ConfigError("[sweep] needs provider and models")
        if s["provider"] not in providers:
            raise ConfigError(f"sweep provider {s['provider']!r} is not configured")
        sweep = SweepConfig(
            provider=s["provider"],
            models=tuple(m.strip() for m in s["models"].split(",") if m.strip()),
            query_strategy=s.get("query_strategy", "baseline"),
            answer_strategy=s.get("answer_strategy", "baseline"),
        )

    if not systems and sweep is None:
        raise ConfigError("config defines no [system.*] sections and no [sweep]")

    return ExperimentConfig(
        name=path.stem, phase=phase, mode=mode, concurrency=concurrency,
        cache_dir=cache_dir, index_path=index_path, endpoint=endpoint,
        providers=providers, systems=tuple(systems), sweep=sweep,
        max_attempts=max_attempts, document_cap=document_cap, snippet_cap=snippet_cap,
    )


# --- manifest -----------------------------------------------------------------

class RunManifest:
    """Per-run bookkeeping enabling resume: a run touches only questions
    that are not already done, and a question's status never regresses
    from done."""

    def __init__(self, path: Path, *, config_name: str = "", questions_path: str = "",
                 phase: str = "", cache_root: str = ""):
        self.path = path
        self.data = {
            "run_id": uuid.uuid4().hex,
            "config_name": config_name,
            "questions_path": questions_path,
            "phase": phase,
            "cache_root": cache_root,
            "started_at": _now(),
            "finished_at": None,
            "systems": {},
        }
        self._lock = threading.Lock()

    @classmethod
    def load_or_create(cls, path: Path, **kwargs) -> "RunManifest":
        manifest = cls(path, **kwargs)
        if path.exists():
            existing = json.loads(path.read_text("utf-8"))
            manifest.data = existing
        return manifest

    def status(self, system: str, qid: str) -> Optional[str]:
        entry = self.data["systems"].get(system, {}).get(qid)
        return entry["status"] if entry else None

    def mark(self, system: str, qid: str, status: str, reason: str = ""):
        with self._lock:
            questions = self.data["systems"].setdefault(system, {})
            current = questions.get(qid)
            if current and current["status"] == "done" and status != "done":
                log.warning("manifest: refusing to regress %s/%s from done to %s",
                            system, qid, status)
                return
            entry = {"status": status}
            if reason:
                entry["reason"] = reason
            questions[qid] = entry

    def finish(self):
        self.data["finished_at"] = _now()

    def save(self):
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(
                json.dumps(self.data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                "utf-8")


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


# --- transcript-writing caller ---------------------------------------------------

class TranscriptCaller:
    """Routes stage prompts to the gateway and writes one transcript file
    per model call (no timestamps, so replay transcripts are
    byte-identical across runs)."""

    def __init__(self, gateway: Gateway, system: SystemConfig, question_id: str,
                 transcript_dir: Path):
        self.gateway = gateway
        self.system = system
        self.question_id = question_id
        self.transcript_dir = transcript_dir
        self.sequence = 0

    def call(self, stage: str, prompt: str, *, role: str = "answer") -> str:
        system = self.system
        if role == "query":
            provider_id, model_id = system.query_model
        elif role == "query_feedback":
            provider_id, model_id = system.feedback_model or system.query_model
        elif role == "answer_feedback":
            provider_id, model_id = system.feedback_model or system.answer_model
        else:
            provider_id, model_id = system.answer_model
        request = ChatRequest(
            provider_id=provider_id,
            model_id=model_id,
            messages=(("user", prompt),),
            temperature=self.system.temperature,
            max_output_tokens=self.system.max_output_tokens,
        )
        response, attempts = self.gateway.chat_with_attempts(request)
        self.sequence += 1
        record = {
            "system": self.system.name,
            "question_id": self.question_id,
            "sequence": self.sequence,
            "stage": stage,
            "request": request.to_obj(),
            "response": response.to_obj(),
            "attempts": [vars(a) for a in attempts],
        }
        self.transcript_dir.mkdir(parents=True, exist_ok=True)
        out = self.transcript_dir / f"{self.sequence:03d}_{stage}.json"
        out.write_text(json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                       "utf-8")
        return response.text


# --- batch execution ----------------------------------------------------------------

def build_gateway(config: ExperimentConfig, questions: Sequence[Question], *,
                  mode: Optional[str] = None,
                  index: Optional[Index] = None) -> Gateway:
    providers = {}
    limits = {}
    for pid, pc in config.providers.items():
        if pc.kind in ("openai_chat", "google_chat", "reasoning_chat"):
            providers[pid] = HttpProvider(pid, base_url=pc.base_url, dialect=pc.kind,
                                          api_key_env=pc.api_key_env or None)
        elif pc.kind == "scripted":
            if pc.fixtures is None:
                raise ConfigError(f"provider {pid}: scripted kind needs fixtures")
            providers[pid] = ScriptedProvider.from_json(pc.fixtures, provider_id=pid)
        elif pc.kind == "oracle":
            gold = questions
            if pc.gold is not None:
                gold = parse_questions(pc.gold.read_bytes(), expect_gold=True)
            oracle = OracleProvider(gold, provider_id=pid)
            if index is not None:
                oracle.attach_corpus(index.documents())
            providers[pid] = oracle
        elif pc.kind == "failing":
            providers[pid] = FailingProvider(pid)
        bucket = TokenBucket(pc.requests_per_second) if pc.requests_per_second else None
        gate = threading.Semaphore(pc.max_in_flight) if pc.max_in_flight else None
        if bucket or gate:
            limits[pid] = ProviderLimits(bucket=bucket, in_flight=gate)
    cache = ResponseCache(config.cache_dir, mode=mode or config.mode)
    policy = RetryPolicy(max_attempts=config.max_attempts)
    return Gateway(providers, cache=cache, policy=policy, limits=limits)


def build_backend(config: ExperimentConfig):
    if config.index_path is not None:
        if not config.index_path.exists():
            raise ConfigError(f"index file not found: {config.index_path} (run `bioqa index` first)")
        return Index.load(config.index_path)
    return RemoteBackend(RemoteSearchClient(config.endpoint))


@dataclass
class QuestionOutcome:
    question_id: str
    status: str
    reason: str = ""
    entry: Optional[SubmissionEntry] = None


def _run_question(system: SystemConfig, question: Question, gateway: Gateway,
                  backend, phase: Phase, out_dir: Path) -> QuestionOutcome:
    transcript_dir = out_dir / "transcripts" / system.name / question.id
    caller = TranscriptCaller(gateway, system, question.id, transcript_dir)
    ctx = PipelineContext(config=system, caller=caller, backend=backend)
    try:
        phase_a = run_phase_a(question, ctx)
        if phase is Phase.A:
            entry = SubmissionEntry(question_id=question.id,
                                    documents=phase_a.documents,
                                    snippets=phase_a.snippets)
        elif phase is Phase.A_PLUS:
            answers = run_phase_a_plus(question, ctx, phase_a)
            entry = SubmissionEntry(question_id=question.id,
                                    documents=phase_a.documents,
                                    snippets=phase_a.snippets,
                                    answers=answers)
        else:
            answers = run_phase_b(question, ctx, phase_a,
                                  question.gold_snippets or ())
            entry = SubmissionEntry(question_id=question.id,
                                    documents=phase_a.documents,
                                    snippets=phase_a.snippets,
                                    answers=answers)
    except Exception as exc:  # per-question isolation, by design
        log.warning("question %s failed under system %s: %s", question.id, system.name, exc)
        return QuestionOutcome(question.id, "failed", reason=f"{type(exc).__name__}: {exc}")

    partial_dir = out_dir / "partial" / system.name
    partial_dir.mkdir(parents=True, exist_ok=True)
    partial_path = partial_dir / f"{question.id}.json"
    partial_path.write_bytes(serialize_submission(
        [entry], phase, document_cap=system.document_cap, snippet_cap=system.snippet_cap))
    return QuestionOutcome(question.id, "done", entry=entry)


def run_batch(config: ExperimentConfig, questions_path, out_dir, *,
              mode: Optional[str] = None, phase: Optional[Phase] = None,
              concurrency: Optional[int] = None,
              systems: Optional[Sequence[SystemConfig]] = None) -> int:
    """Execute every system over every question; one submission per
    system plus manifest and transcripts under out_dir. Returns the exit
    status (nonzero iff any question failed)."""
    questions_path = Path(questions_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    phase = phase or config.phase
    mode = mode or config.mode
    concurrency = concurrency or config.concurrency
    systems = list(systems if systems is not None else config.systems)
    if not systems:
        raise ConfigError("no systems to run")

    questions = parse_questions(questions_path.read_bytes(), expect_gold=True)
    qtypes = {question.id: question.qtype for question in questions}
    backend = build_backend(config)
    index = backend if isinstance(backend, Index) else None
    gateway = build_gateway(config, questions, mode=mode, index=index)

    manifest = RunManifest.load_or_create(
        out_dir / "manifest.json",
        config_name=config.name, questions_path=str(questions_path),
        phase=phase.value, cache_root=str(config.cache_dir),
    )

    failures = 0
    submissions_dir = out_dir / "submissions"
    submissions_dir.mkdir(exist_ok=True)
    for system in systems:
        pending = []
        for question in questions:
            partial = out_dir / "partial" / system.name / f"{question.id}.json"
            if manifest.status(system.name, question.id) == "done" and partial.exists():
                continue
            pending.append(question)

        outcomes: dict[str, QuestionOutcome] = {}
        if pending:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                futures = {
                    pool.submit(_run_question, system, question, gateway,
                                backend, phase, out_dir): question
                    for question in pending
                }
                for future, question in futures.items():
                    outcome = future.result()
                    outcomes[question.id] = outcome
                    manifest.mark(system.name, question.id, outcome.status, outcome.reason)

        # merge partials in question-file order for deterministic output
        entries = []
        for question in questions:
            if manifest.status(system.name, question.id) != "done":
                failures += 1
                continue
            outcome = outcomes.get(question.id)
            if outcome is not None and outcome.entry is not None:
                entries.append(outcome.entry)
                continue
            partial = out_dir / "partial" / system.name / f"{question.id}.json"
            entries.extend(parse_submission(partial.read_bytes(), qtypes=qtypes))
        submission = serialize_submission(entries, phase,
                                          document_cap=config.document_cap,
                                          snippet_cap=config.snippet_cap)
        (submissions_dir / f"{system.name}.json").write_bytes(submission)

    manifest.finish()
    manifest.save()
    return 1 if failures else 0


# --- evaluation and sweep -------------------------------------------------------------

def evaluate_submissions(gold_path, submission_paths: Sequence, report_path, *,
                         phase: Phase = Phase.B,
                         corpus_lookup=None) -> tuple[int, evaluation.MetricsReport]:
    """Validate and score submissions against a gold file; writes the
    plain-text report and a .json mirror next to it."""
    from .model import validate_submission

    gold = parse_questions(Path(gold_path).read_bytes(), expect_gold=True)
    qtypes = {question.id: question.qtype for question in gold}
    status = 0
    systems = []
    for sub_path in submission_paths:
        sub_path = Path(sub_path)
        raw = sub_path.read_bytes()
        violations = validate_submission(raw, phase, corpus_lookup, qtypes=qtypes)
        errors = [v for v in violations if v.severity == "error"]
        for violation in violations:
            print(f"{sub_path.name}: {violation}")
        if errors:
            status = 1
        systems.append((sub_path.stem, parse_submission(raw, qtypes=qtypes)))

    report = evaluation.build_report(systems, gold)
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.render_text(), "utf-8")
    report_path.with_suffix(report_path.suffix + ".json").write_text(report.render_json(), "utf-8")
    return status, report


SWEEP_COLUMNS = ("Yes/No Macro F1", "Factoid MRR", "List F-measure", "Ideal R2 F1")

_SWEEP_SOURCES = {
    "Yes/No Macro F1": ("yesno", "Macro F1"),
    "Factoid MRR": ("factoid", "MRR"),
    "List F-measure": ("list", "F-Measure"),
    "Ideal R2 F1": ("ideal", "ROUGE-2 F1"),
}


def render_sweep_table(report: evaluation.MetricsReport, models: Sequence[str]) -> str:
    """Model-comparison summary with the four headline answer metrics."""
    values: dict[str, dict[str, float]] = {model: {} for model in models}
    for column, (table_key, metric) in _SWEEP_SOURCES.items():
        table = report.table(table_key)
        if table is None:
            continue
        for row in table.rows:
            if row.system in values:
                values[row.system][column] = row.values[metric]

    def sort_key(model: str):
        return tuple(-values[model].get(c, 0.0) for c in SWEEP_COLUMNS)

    ordered = sorted(models, key=sort_key)
    headers = ("Model Name", *SWEEP_COLUMNS)
    rows = [(model, *(f"{values[model].get(c, 0.0):.4f}" for c in SWEEP_COLUMNS))
            for model in ordered]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def run_sweep(config: ExperimentConfig, questions_path, out_dir, *,
              mode: Optional[str] = None, concurrency: Optional[int] = None) -> int:
    """Run every sweep model over the same questions (resumable per
    model), evaluate them together, and render the comparison table."""
    if config.sweep is None:
        raise ConfigError("config has no [sweep] section")
    out_dir = Path(out_dir)
    sweep = config.sweep
    status = 0
    submission_paths = []
    for model in sweep.models:
        system = SystemConfig(
            name=model,
            query_model=(sweep.provider, model),
            answer_model=(sweep.provider, model),
            query_strategy=_parse_strategy(sweep.query_strategy),
            answer_strategy=_parse_strategy(sweep.answer_strategy),
            document_cap=config.document_cap,
            snippet_cap=config.snippet_cap,
        )
        model_dir = out_dir / "models" / model
        rc = run_batch(config, questions_path, model_dir, mode=mode,
                       concurrency=concurrency, systems=[system])
        status = max(status, rc)
        submission_paths.append(model_dir / "submissions" / f"{model}.json")

    rc, report = evaluate_submissions(questions_path, submission_paths,
                                      out_dir / "report.txt", phase=config.phase)
    status = max(status, rc)
    table = render_sweep_table(report, list(sweep.models))
    (out_dir / "sweep_comparison.txt").write_text(table, "utf-8")
    print(table, end="")
    return status
