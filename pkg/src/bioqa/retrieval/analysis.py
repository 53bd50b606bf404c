"""Text analysis: Unicode word segmentation, lowercasing, English
stopword removal (fixed 33-word list shipped as data), suffix stemming.

The whole pipeline is deterministic; an analyzer fingerprint names the
exact configuration so indexes and queries can be checked for agreement.
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .stemmer import stem as porter_stem

# letters/digits (any script), excluding underscore
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


@lru_cache(maxsize=1)
def stopwords() -> frozenset:
    data = resources.files("bioqa.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(line.strip() for line in data.splitlines() if line.strip())


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text)


def analyze(text: str, *, stem: bool = True) -> list[str]:
    """Segment, lowercase, drop stopwords, then stem (unless disabled)."""
    out = []
    stops = stopwords()
    for raw in _WORD_RE.findall(text):
        token = raw.lower()
        if token in stops:
            continue
        out.append(porter_stem(token) if stem else token)
    return out


def analyzer_fingerprint(*, stem: bool = True) -> str:
    variant = "porter" if stem else "nostem"
    return f"unicode-word/lowercase/stop-en33/{variant}/v1"
