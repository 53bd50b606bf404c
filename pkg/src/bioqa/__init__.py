"""Retrieval-augmented biomedical question answering with an LLM
self-feedback loop, plus the evaluation harness to score and compare
configurations."""

__version__ = "0.1.0"
