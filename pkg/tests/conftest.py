"""Shared fixtures: a synthetic end-to-end world (500-document corpus,
30 gold questions with unique marker tokens, oracle-provider configs)
built and executed once per session, in record mode and twice in replay
mode."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from bioqa.cli import main as cli_main
from bioqa.model import parse_questions

N_DOCS = 500
N_QUESTIONS = 30

PMID_BASE = 100000


def corpus_record(i: int) -> dict:
    return {
        "pmid": str(PMID_BASE + i),
        "title": f"Influence of zaq{i}tor on bem{i}lin signaling",
        "abstract": (f"The compound zaq{i}tor reduces bem{i}lin activity in cells. "
                     f"Treatment with vex{i}ol improves outcomes."),
    }


def gold_snippet_for(i: int) -> dict:
    sentence = f"The compound zaq{i}tor reduces bem{i}lin activity in cells."
    return {
        "document": f"http://www.ncbi.nlm.nih.gov/pubmed/{PMID_BASE + i}",
        "offsetInBeginSection": 0,
        "offsetInEndSection": len(sentence),
        "beginSection": "abstract",
        "endSection": "abstract",
        "text": sentence,
    }


def gold_question(j: int) -> dict:
    doc_nums = [3 * j + 1, 3 * j + 2, 3 * j + 3]
    lead = doc_nums[0]
    if j < 9:
        qtype = "yesno"
        body = f"Does zaq{lead}tor affect bem{lead}lin signaling in cohort {j}?"
        exact = "yes" if j % 2 == 0 else "no"
    elif j < 16:
        qtype = "factoid"
        body = f"Which compound reduces bem{lead}lin activity in cohort {j}?"
        exact = [[f"zaq{lead}tor", f"compound {lead}"]]
    elif j < 23:
        qtype = "list"
        body = f"List the compounds studied in cohort {j}."
        exact = [[f"zaq{i}tor"] for i in doc_nums]
    else:
        qtype = "summary"
        body = f"Summarize the findings of cohort {j}."
        exact = None
    entry = {
        "id": f"q{j:02d}",
        "body": body,
        "type": qtype,
        "documents": [f"http://www.ncbi.nlm.nih.gov/pubmed/{PMID_BASE + i}" for i in doc_nums],
        "snippets": [gold_snippet_for(i) for i in doc_nums],
        "ideal_answer": [
            f"The compound zaq{lead}tor modulates bem{lead}lin signaling "
            f"and improves outcomes in cohort {j}."
        ],
    }
    if exact is not None:
        entry["exact_answer"] = exact
    return entry


RECORD_CONFIG = """\
[run]
phase = b
mode = record
concurrency = 4
cache_dir = cache

[retrieval]
index_path = corpus.idx

[provider.orc]
kind = oracle

[system.SYS-BASE]
query_provider = orc
query_model = oracle-v1
answer_provider = orc
answer_model = oracle-v1
query_strategy = baseline
answer_strategy = baseline
retrieval_k = 30

[system.SYS-FB]
query_provider = orc
query_model = oracle-v1
answer_provider = orc
answer_model = oracle-v1
query_strategy = feedback
answer_strategy = feedback
retrieval_k = 30

[system.SYS-SHOT]
query_provider = orc
query_model = oracle-v1
answer_provider = orc
answer_model = oracle-v1
query_strategy = 10-shot
answer_strategy = baseline
retrieval_k = 30
"""

# identical systems, but replay mode and a provider that raises on contact
REPLAY_CONFIG = RECORD_CONFIG.replace("mode = record", "mode = replay") \
                             .replace("kind = oracle", "kind = failing")

SYSTEMS = ("SYS-BASE", "SYS-FB", "SYS-SHOT")


@dataclass
class E2EWorld:
    root: Path
    corpus_path: Path
    index_path: Path
    gold_path: Path
    record_config: Path
    replay_config: Path
    record_out: Path
    replay_outs: tuple[Path, Path]
    record_seconds: float
    exit_codes: dict = field(default_factory=dict)

    @property
    def gold(self):
        return parse_questions(self.gold_path.read_bytes(), expect_gold=True)

    def submission(self, out_dir: Path, system: str) -> Path:
        return out_dir / "submissions" / f"{system}.json"


@pytest.fixture(scope="session")
def e2e_world(tmp_path_factory) -> E2EWorld:
    root = tmp_path_factory.mktemp("e2e")
    corpus_path = root / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for i in range(1, N_DOCS + 1):
            fh.write(json.dumps(corpus_record(i)) + "\n")

    gold_path = root / "gold.json"
    gold_path.write_text(json.dumps(
        {"questions": [gold_question(j) for j in range(N_QUESTIONS)]}, indent=1), "utf-8")

    index_path = root / "corpus.idx"
    rc_index = cli_main(["index", "--corpus", str(corpus_path), "--out", str(index_path)])
    assert rc_index == 0

    record_config = root / "config.ini"
    record_config.write_text(RECORD_CONFIG, "utf-8")
    replay_config = root / "config_replay.ini"
    replay_config.write_text(REPLAY_CONFIG, "utf-8")

    record_out = root / "run_record"
    started = time.monotonic()
    rc_record = cli_main(["run", "--config", str(record_config),
                          "--questions", str(gold_path), "--out", str(record_out)])
    record_seconds = time.monotonic() - started

    replay_outs = (root / "run_replay1", root / "run_replay2")
    rc_replays = []
    for out in replay_outs:
        rc_replays.append(cli_main(["run", "--config", str(replay_config),
                                    "--questions", str(gold_path), "--out", str(out)]))

    return E2EWorld(
        root=root, corpus_path=corpus_path, index_path=index_path,
        gold_path=gold_path, record_config=record_config, replay_config=replay_config,
        record_out=record_out, replay_outs=tuple(replay_outs),
        record_seconds=record_seconds,
        exit_codes={"index": rc_index, "record": rc_record, "replays": rc_replays},
    )
