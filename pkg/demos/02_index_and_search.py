"""The embedded retrieval substrate: analysis, indexing, BM25 search.

Documents carry a title and an abstract. Both fields go through the
same analyzer (word segmentation, lowercasing, the fixed English
stopword list, suffix stemming) and into a positional inverted index
scored with BM25 (k1=1.2, b=0.75).
"""
from bioqa.query import parse_query
from bioqa.retrieval import CorpusDocument, analyze, analyzer_fingerprint, ingest_corpus

# =============================================================================
# Analysis
# =============================================================================

print(analyze("Aspirin reduces fevers"))     # ['aspirin', 'reduc', 'fever']
print(analyze("the of and"))                 # [] (all stopwords)
print("fingerprint:", analyzer_fingerprint())

# =============================================================================
# Indexing a small corpus
# =============================================================================

docs = [
    CorpusDocument("101", "Night blindness and vitamin A",
                   "Vitamin A deficiency causes night blindness in adults."),
    CorpusDocument("102", "Nyctalopia case report",
                   "A patient with nyctalopia improved after retinol treatment."),
    CorpusDocument("103", "Influenza fever management",
                   "Aspirin reduces fever in influenza patients."),
    CorpusDocument("104", "Fever of unknown origin",
                   "Workup of persistent fever without a clear cause."),
]
index = ingest_corpus(docs)
print(f"indexed {index.doc_count} documents, {index.term_count} terms")

# =============================================================================
# Boolean search with BM25 ranking
# =============================================================================

for text in [
    '"night blindness" OR nyctalopia',
    "fever AND aspirin",
    "fever NOT influenza",
    'title:fever',
]:
    hits = index.search(parse_query(text), k=5)
    ranked = ", ".join(f"{h.pmid} ({h.score:.3f})" for h in hits)
    print(f"{text:35} -> {ranked or '(no hits)'}")

# Stemming links query and document morphology: "reducing" matches "reduces".
hits = index.search(parse_query("reducing"), k=5)
print("reducing ->", [h.pmid for h in hits])
