"""Retry with exponential backoff + jitter, bounded by attempt cap and a
total-time ceiling. Sleep and RNG are injectable so tests run instantly
and deterministically. Every attempt is recorded for run transcripts.
"""
from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Callable, Optional


class TransientFailure(Exception):
    """Raise inside the retried callable to request another attempt."""

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


class RetriesExhausted(Exception):
    def __init__(self, last_cause: TransientFailure, attempts: list["Attempt"]):
        self.last_cause = last_cause
        self.attempts = attempts
        super().__init__(f"retries exhausted after {len(attempts)} attempts; last: {last_cause}")


@dataclass(frozen=True)
class Attempt:
    number: int
    outcome: str  # "ok" or a TransientFailure kind
    detail: str = ""
    backoff_s: float = 0.0


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay_s: float = 0.5
    max_delay_s: float = 10.0
    total_budget_s: float = 60.0
    jitter: float = 0.25  # +- fraction applied to each delay

    def delay_for(self, attempt_number: int, rng: random.Random) -> float:
        # attempt_number is 1-based; delay before attempt_number + 1
        raw = min(self.max_delay_s, self.base_delay_s * (2 ** (attempt_number - 1)))
        if self.jitter:
            raw *= 1.0 + rng.uniform(-self.jitter, self.jitter)
        return max(0.0, raw)


def run_with_retries(fn: Callable[[], object], policy: RetryPolicy, *,
                     sleep: Callable[[float], None] = time.sleep,
                     rng: Optional[random.Random] = None,
                     clock: Callable[[], float] = time.monotonic):
    """Call ``fn`` until it returns, retrying TransientFailure with
    backoff. Returns (result, attempts). Non-transient exceptions
    propagate immediately with the attempt list attached when possible.
    """
    rng = rng or random.Random()
    attempts: list[Attempt] = []
    started = clock()
    for number in range(1, policy.max_attempts + 1):
        try:
            result = fn()
        except TransientFailure as failure:
            elapsed = clock() - started
            remaining = policy.total_budget_s - elapsed
            if number >= policy.max_attempts or remaining <= 0:
                attempts.append(Attempt(number, failure.kind, failure.detail))
                raise RetriesExhausted(failure, attempts) from failure
            delay = min(policy.delay_for(number, rng), max(0.0, remaining))
            attempts.append(Attempt(number, failure.kind, failure.detail, backoff_s=delay))
            sleep(delay)
            continue
        attempts.append(Attempt(number, "ok"))
        return result, attempts
    raise AssertionError("unreachable")
