"""End to end through the CLI: build an index, run two systems over a
gold batch with the gold-driven oracle provider (the pipeline's upper
bound), evaluate the submissions, and print the report.

Everything happens in a temporary directory; the oracle provider needs
no credentials or network.
"""
import json
import tempfile
from pathlib import Path

from bioqa.cli import main

root = Path(tempfile.mkdtemp(prefix="bioqa_demo_"))
print("working in", root)

# =============================================================================
# A miniature corpus and gold question file
# =============================================================================

docs = []
for i in range(1, 21):
    docs.append({
        "pmid": str(9000 + i),
        "title": f"Role of marker{i}gene in condition {i}",
        "abstract": f"The gene marker{i}gene drives condition {i} progression.",
    })
(root / "corpus.jsonl").write_text("\n".join(json.dumps(d) for d in docs), "utf-8")

questions = []
for j in range(4):
    lead = 2 * j + 1
    snippet_text = f"The gene marker{lead}gene drives condition {lead} progression."
    questions.append({
        "id": f"d{j}",
        "body": f"Which gene drives condition {lead}?",
        "type": "factoid",
        "documents": [str(9000 + lead)],
        "snippets": [{
            "document": str(9000 + lead),
            "offsetInBeginSection": 0,
            "offsetInEndSection": len(snippet_text),
            "beginSection": "abstract",
            "endSection": "abstract",
            "text": snippet_text,
        }],
        "exact_answer": [[f"marker{lead}gene"]],
        "ideal_answer": [f"marker{lead}gene drives condition {lead}."],
    })
(root / "gold.json").write_text(json.dumps({"questions": questions}), "utf-8")

(root / "config.ini").write_text("""\
[run]
phase = b
mode = record
concurrency = 2
cache_dir = cache

[retrieval]
index_path = corpus.idx

[provider.orc]
kind = oracle

[system.ORACLE-BASE]
query_provider = orc
query_model = oracle-v1
answer_provider = orc
answer_model = oracle-v1

[system.ORACLE-FB]
query_provider = orc
query_model = oracle-v1
answer_provider = orc
answer_model = oracle-v1
query_strategy = feedback
answer_strategy = feedback
""", "utf-8")

# =============================================================================
# index -> run -> validate -> eval
# =============================================================================

assert main(["index", "--corpus", str(root / "corpus.jsonl"),
             "--out", str(root / "corpus.idx")]) == 0

assert main(["run", "--config", str(root / "config.ini"),
             "--questions", str(root / "gold.json"),
             "--out", str(root / "out")]) == 0
print("submissions:", sorted(p.name for p in (root / "out" / "submissions").iterdir()))

assert main(["validate",
             "--submission", str(root / "out" / "submissions" / "ORACLE-BASE.json"),
             "--index", str(root / "corpus.idx"), "--phase", "b"]) == 0

assert main(["eval", "--gold", str(root / "gold.json"),
             "--out", str(root / "report.txt"), "--phase", "b",
             str(root / "out" / "submissions" / "ORACLE-BASE.json"),
             str(root / "out" / "submissions" / "ORACLE-FB.json")]) == 0

# =============================================================================
# Replay: the same run again, purely from the response cache
# =============================================================================

replay_config = (root / "config.ini").read_text().replace("mode = record", "mode = replay")
(root / "config_replay.ini").write_text(replay_config, "utf-8")
assert main(["run", "--config", str(root / "config_replay.ini"),
             "--questions", str(root / "gold.json"),
             "--out", str(root / "out_replay")]) == 0

first = (root / "out" / "submissions" / "ORACLE-BASE.json").read_bytes()
second = (root / "out_replay" / "submissions" / "ORACLE-BASE.json").read_bytes()
print("replay submission byte-identical:", first == second)
