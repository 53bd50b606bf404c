"""Runner: config parsing, manifest resume semantics, CLI surface,
sweep composition, and the oracle end-to-end world."""
import json
import time

import pytest

from bioqa.cli import main as cli_main
from bioqa.model import Phase, parse_submission, validate_submission
from bioqa.runner import ConfigError, RunManifest, load_config, run_batch
from bioqa.pipeline import Baseline, Feedback, FewShot

SMALL_CONFIG = """\
[run]
phase = b
mode = record
concurrency = 2
cache_dir = cache

[retrieval]
index_path = small.idx

[provider.scr]
kind = scripted
fixtures = fixtures.json

[system.MINI]
query_provider = scr
query_model = mini-1
answer_provider = scr
answer_model = mini-1
"""

BASE_RULES = [
    {"regex": True, "match": r"(?s)Question ID: s1.*Generate one boolean", "response": "alphadoc"},
    {"regex": True, "match": r"(?s)Question ID: s2.*Generate one boolean", "response": "betadoc"},
    {"regex": True, "match": r"(?s)Question ID: s3.*Generate one boolean", "response": "gammadoc"},
    {"match": "Copy up to 3 verbatim passages", "response": "NONE"},
    {"regex": True, "match": r"(?s)Question ID: s1.*exactly \"yes\" or \"no\"", "response": "Yes."},
    {"regex": True, "match": r"(?s)Question ID: s2.*exactly \"yes\" or \"no\"", "response": "No."},
    {"match": "Write a short ideal answer", "response": "A concise summary of the study."},
]

SMALL_GOLD = {"questions": [
    {"id": "s1", "body": "Is alphadoc effective?", "type": "yesno",
     "documents": ["11"], "exact_answer": "yes", "ideal_answer": "Alphadoc works."},
    {"id": "s2", "body": "Is betadoc effective?", "type": "yesno",
     "documents": ["12"], "exact_answer": "no", "ideal_answer": "Betadoc does not."},
    {"id": "s3", "body": "Summarize gammadoc.", "type": "summary",
     "documents": ["13"], "ideal_answer": "Gammadoc is a trial."},
]}

SMALL_CORPUS = [
    {"pmid": "11", "title": "alphadoc study fever", "abstract": "Alpha fever text."},
    {"pmid": "12", "title": "betadoc study cough", "abstract": "Beta cough text."},
    {"pmid": "13", "title": "gammadoc trial", "abstract": "Gamma text."},
]


@pytest.fixture()
def small_world(tmp_path):
    corpus = tmp_path / "small.jsonl"
    corpus.write_text("\n".join(json.dumps(r) for r in SMALL_CORPUS), "utf-8")
    assert cli_main(["index", "--corpus", str(corpus), "--out", str(tmp_path / "small.idx")]) == 0
    (tmp_path / "gold.json").write_text(json.dumps(SMALL_GOLD), "utf-8")
    (tmp_path / "fixtures.json").write_text(json.dumps(BASE_RULES), "utf-8")
    (tmp_path / "config.ini").write_text(SMALL_CONFIG, "utf-8")
    return tmp_path


class TestLoadConfig:
    def test_small_config_parses(self, small_world):
        config = load_config(small_world / "config.ini")
        assert config.phase is Phase.B
        assert config.concurrency == 2
        assert config.systems[0].name == "MINI"
        assert isinstance(config.systems[0].query_strategy, Baseline)
        assert config.index_path == small_world / "small.idx"

    def test_strategy_spellings(self, small_world):
        text = SMALL_CONFIG.replace("query_model = mini-1",
                                    "query_model = mini-1\nquery_strategy = 10-shot") \
                           .replace("answer_model = mini-1",
                                    "answer_model = mini-1\nanswer_strategy = feedback")
        (small_world / "alt.ini").write_text(text, "utf-8")
        config = load_config(small_world / "alt.ini")
        assert isinstance(config.systems[0].query_strategy, FewShot)
        assert config.systems[0].query_strategy.k == 10
        assert isinstance(config.systems[0].answer_strategy, Feedback)

    def test_missing_retrieval_backend(self, small_world):
        text = SMALL_CONFIG.replace("index_path = small.idx", "")
        (small_world / "bad.ini").write_text(text, "utf-8")
        with pytest.raises(ConfigError):
            load_config(small_world / "bad.ini")

    def test_two_retrieval_backends(self, small_world):
        text = SMALL_CONFIG.replace("index_path = small.idx",
                                    "index_path = small.idx\nendpoint = http://x")
        (small_world / "bad.ini").write_text(text, "utf-8")
        with pytest.raises(ConfigError):
            load_config(small_world / "bad.ini")

    def test_unknown_provider_reference(self, small_world):
        text = SMALL_CONFIG.replace("query_provider = scr", "query_provider = nope")
        (small_world / "bad.ini").write_text(text, "utf-8")
        with pytest.raises(ConfigError):
            load_config(small_world / "bad.ini")

    def test_unknown_strategy(self, small_world):
        text = SMALL_CONFIG + "query_strategy = magic\n"
        (small_world / "bad.ini").write_text(text, "utf-8")
        with pytest.raises(ConfigError):
            load_config(small_world / "bad.ini")

    def test_cross_model_feedback_config(self, small_world):
        text = SMALL_CONFIG.replace(
            "answer_model = mini-1",
            "answer_model = mini-1\nfeedback_provider = scr\nfeedback_model = critic-9\n"
            "answer_strategy = feedback")
        (small_world / "xm.ini").write_text(text, "utf-8")
        config = load_config(small_world / "xm.ini")
        assert config.systems[0].feedback_model == ("scr", "critic-9")

        # the caller routes feedback roles to the critic, refinement back
        # to the generating model
        from bioqa.runner import TranscriptCaller

        class Recorder:
            def __init__(self):
                self.models = []

            def chat_with_attempts(self, request):
                from bioqa.gateway import ChatResponse
                from bioqa.retry import Attempt
                self.models.append((request.model_id, request.provider_id))
                return ChatResponse(text="ok"), [Attempt(1, "ok")]

        recorder = Recorder()
        caller = TranscriptCaller(recorder, config.systems[0], "q1",
                                  small_world / "transcripts")
        caller.call("feedback_yesno", "p", role="answer_feedback")
        caller.call("refine_yesno", "p", role="answer")
        caller.call("query_feedback", "p", role="query_feedback")
        assert [m for m, _ in recorder.models] == ["critic-9", "mini-1", "critic-9"]

    def test_feedback_model_requires_both_keys(self, small_world):
        text = SMALL_CONFIG + "feedback_model = critic-9\n"
        (small_world / "bad.ini").write_text(text, "utf-8")
        with pytest.raises(ConfigError):
            load_config(small_world / "bad.ini")

    def test_cli_reports_usage_error_for_bad_config(self, small_world):
        (small_world / "bad.ini").write_text("[run]\n", "utf-8")
        rc = cli_main(["run", "--config", str(small_world / "bad.ini"),
                       "--questions", str(small_world / "gold.json"),
                       "--out", str(small_world / "out")])
        assert rc == 2


class TestManifest:
    def test_done_never_regresses(self, tmp_path):
        manifest = RunManifest(tmp_path / "m.json")
        manifest.mark("sys", "q1", "done")
        manifest.mark("sys", "q1", "failed", "late error")
        assert manifest.status("sys", "q1") == "done"
        manifest.mark("sys", "q2", "failed", "boom")
        manifest.mark("sys", "q2", "done")
        assert manifest.status("sys", "q2") == "done"

    def test_save_load_round_trip(self, tmp_path):
        manifest = RunManifest(tmp_path / "m.json", config_name="c", phase="b")
        manifest.mark("sys", "q1", "done")
        manifest.save()
        loaded = RunManifest.load_or_create(tmp_path / "m.json")
        assert loaded.status("sys", "q1") == "done"
        assert loaded.data["config_name"] == "c"


class TestRunBatch:
    def test_small_run_produces_valid_submission(self, small_world):
        rc = cli_main(["run", "--config", str(small_world / "config.ini"),
                       "--questions", str(small_world / "gold.json"),
                       "--out", str(small_world / "out")])
        assert rc == 0
        submission = small_world / "out" / "submissions" / "MINI.json"
        raw = submission.read_bytes()
        assert validate_submission(raw, Phase.B) == []
        entries = parse_submission(raw)
        assert [e.question_id for e in entries] == ["s1", "s2", "s3"]
        assert entries[0].answers.yesno == "yes"
        assert entries[1].answers.yesno == "no"
        assert entries[2].answers.yesno is None
        assert entries[2].answers.ideal

    def test_failed_question_is_isolated_and_resumable(self, small_world):
        # omit the rule for s2: that question fails, the others complete
        broken = [r for r in BASE_RULES if "s2.*exactly" not in r["match"]]
        (small_world / "fixtures.json").write_text(json.dumps(broken), "utf-8")
        out = small_world / "out"
        rc = cli_main(["run", "--config", str(small_world / "config.ini"),
                       "--questions", str(small_world / "gold.json"), "--out", str(out)])
        assert rc == 1
        manifest = json.loads((out / "manifest.json").read_text())
        statuses = manifest["systems"]["MINI"]
        assert statuses["s1"]["status"] == "done"
        assert statuses["s2"]["status"] == "failed"
        assert statuses["s3"]["status"] == "done"
        # the submission still carries the questions that worked
        entries = parse_submission((out / "submissions" / "MINI.json").read_bytes())
        assert [e.question_id for e in entries] == ["s1", "s3"]

        done_partial = out / "partial" / "MINI" / "s1.json"
        stamp_before = done_partial.stat().st_mtime_ns

        # repair the fixtures and rerun: only s2 is touched
        (small_world / "fixtures.json").write_text(json.dumps(BASE_RULES), "utf-8")
        rc = cli_main(["run", "--config", str(small_world / "config.ini"),
                       "--questions", str(small_world / "gold.json"), "--out", str(out)])
        assert rc == 0
        assert done_partial.stat().st_mtime_ns == stamp_before
        entries = parse_submission((out / "submissions" / "MINI.json").read_bytes())
        assert [e.question_id for e in entries] == ["s1", "s2", "s3"]

    def test_worker_pool_bound_respected(self, small_world, monkeypatch):
        import bioqa.runner as runner_mod
        real_build = runner_mod.build_gateway
        seen = {}

        def slowed_build(config, questions, *, mode=None, index=None):
            gateway = real_build(config, questions, mode=mode, index=index)
            provider = gateway.providers["scr"]
            original = provider._respond

            def delayed(request):
                time.sleep(0.005)
                return original(request)

            provider._respond = delayed
            seen["provider"] = provider
            return gateway

        monkeypatch.setattr(runner_mod, "build_gateway", slowed_build)
        config = load_config(small_world / "config.ini")
        rc = run_batch(config, small_world / "gold.json", small_world / "out",
                       concurrency=2)
        assert rc == 0
        assert seen["provider"].max_in_flight_seen <= 2


SWEEP_CONFIG = """\
[run]
phase = b
mode = record
concurrency = 2
cache_dir = sweep_cache

[retrieval]
index_path = small.idx

[provider.scr]
kind = scripted
fixtures = sweep_fixtures.json

[sweep]
provider = scr
models = good-model, bad-model
"""


def sweep_rules():
    shared = [r for r in BASE_RULES if "exactly" not in r["match"]]
    per_model = [
        {"regex": True, "match": r"(?s)Question ID: s1.*exactly \"yes\" or \"no\"",
         "response": "Yes.", "model": "good-model"},
        {"regex": True, "match": r"(?s)Question ID: s2.*exactly \"yes\" or \"no\"",
         "response": "No.", "model": "good-model"},
        {"regex": True, "match": r"(?s)Question ID: s1.*exactly \"yes\" or \"no\"",
         "response": "No.", "model": "bad-model"},
        {"regex": True, "match": r"(?s)Question ID: s2.*exactly \"yes\" or \"no\"",
         "response": "Yes.", "model": "bad-model"},
    ]
    return shared + per_model


class TestSweep:
    def test_sweep_runs_evaluates_and_orders_models(self, small_world):
        (small_world / "sweep_fixtures.json").write_text(json.dumps(sweep_rules()), "utf-8")
        (small_world / "sweep.ini").write_text(SWEEP_CONFIG, "utf-8")
        out = small_world / "sweep_out"
        rc = cli_main(["sweep", "--config", str(small_world / "sweep.ini"),
                       "--questions", str(small_world / "gold.json"), "--out", str(out)])
        assert rc == 0
        table = (out / "sweep_comparison.txt").read_text()
        lines = [l for l in table.splitlines() if "model" in l and "Model Name" not in l]
        assert lines[0].startswith("good-model")
        assert lines[1].startswith("bad-model")
        assert "1.0000" in lines[0]
        # sweep composes run + eval: per-model submissions and the report exist
        assert (out / "models" / "good-model" / "submissions" / "good-model.json").exists()
        assert (out / "report.txt").exists()
        assert (out / "report.txt.json").exists()

    def test_sweep_resumes_per_model(self, small_world):
        (small_world / "sweep_fixtures.json").write_text(json.dumps(sweep_rules()), "utf-8")
        (small_world / "sweep.ini").write_text(SWEEP_CONFIG, "utf-8")
        out = small_world / "sweep_out"
        assert cli_main(["sweep", "--config", str(small_world / "sweep.ini"),
                         "--questions", str(small_world / "gold.json"),
                         "--out", str(out)]) == 0
        partial = out / "models" / "good-model" / "partial" / "good-model" / "s1.json"
        stamp = partial.stat().st_mtime_ns
        assert cli_main(["sweep", "--config", str(small_world / "sweep.ini"),
                         "--questions", str(small_world / "gold.json"),
                         "--out", str(out)]) == 0
        assert partial.stat().st_mtime_ns == stamp


class TestValidateCommand:
    def test_valid_submission(self, small_world, capsys):
        out = small_world / "out"
        cli_main(["run", "--config", str(small_world / "config.ini"),
                  "--questions", str(small_world / "gold.json"), "--out", str(out)])
        rc = cli_main(["validate", "--submission",
                       str(out / "submissions" / "MINI.json"), "--phase", "b"])
        assert rc == 0
        assert "valid" in capsys.readouterr().out

    def test_bad_offsets_detected_with_index(self, small_world, tmp_path):
        bad = {"questions": [{
            "id": "s1",
            "documents": [],
            "snippets": [{"document": "11", "offsetInBeginSection": 1,
                          "offsetInEndSection": 6, "beginSection": "abstract",
                          "endSection": "abstract", "text": "Alpha"}],
        }]}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad), "utf-8")
        rc = cli_main(["validate", "--submission", str(path),
                       "--index", str(small_world / "small.idx"), "--phase", "a"])
        assert rc == 1


class TestE2EWorld:
    def test_all_runs_succeed(self, e2e_world):
        assert e2e_world.exit_codes == {"index": 0, "record": 0, "replays": [0, 0]}

    def test_submissions_validate_against_corpus(self, e2e_world):
        from bioqa.retrieval import Index
        index = Index.load(e2e_world.index_path)
        qtypes = {question.id: question.qtype for question in e2e_world.gold}
        for system in ("SYS-BASE", "SYS-FB", "SYS-SHOT"):
            raw = e2e_world.submission(e2e_world.record_out, system).read_bytes()
            violations = validate_submission(raw, Phase.B, index.get_document, qtypes=qtypes)
            assert violations == []

    def test_replay_used_cache_only(self, e2e_world):
        # the replay config's provider raises on any contact, so a clean
        # exit proves zero provider traffic; every response came from cache
        assert e2e_world.exit_codes["replays"] == [0, 0]
        transcripts = list((e2e_world.replay_outs[0] / "transcripts").rglob("*.json"))
        assert transcripts
        sampled = json.loads(transcripts[0].read_text())
        assert sampled["response"]["from_cache"] is True

    def test_transcript_files_name_stages(self, e2e_world):
        q0_dir = e2e_world.record_out / "transcripts" / "SYS-FB" / "q00"
        stages = sorted(p.name.split("_", 1)[1].removesuffix(".json")
                        for p in q0_dir.glob("*.json"))
        assert "query_feedback" in stages
        assert "query_refine" in stages

    def test_eval_shows_perfect_retrieval_and_answers(self, e2e_world, capsys):
        report_path = e2e_world.root / "report.txt"
        rc = cli_main(["eval", "--gold", str(e2e_world.gold_path),
                       "--out", str(report_path), "--phase", "b",
                       str(e2e_world.submission(e2e_world.record_out, "SYS-BASE"))])
        assert rc == 0
        report = json.loads((e2e_world.root / "report.txt.json").read_text())
        tables = {t["key"]: t for t in report["tables"]}
        assert tables["documents"]["rows"][0]["values"]["MAP"] == pytest.approx(1.0, abs=1e-9)
        assert tables["yesno"]["rows"][0]["values"]["Accuracy"] == 1.0
        assert tables["factoid"]["rows"][0]["values"]["Strict Acc."] == 1.0
        assert tables["list"]["rows"][0]["values"]["F-Measure"] == 1.0
        assert tables["ideal"]["rows"][0]["values"]["ROUGE-2 F1"] == pytest.approx(1.0)
