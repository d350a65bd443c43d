"""Membership-query oracles: simulated ground truth, scripted replay, and an
interactive bridge for human sessions."""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import (
    Assignment,
    ConstraintNetwork,
    IncompleteAssignment,
    TriState,
    satisfies,
)


class OracleResponse(Enum):
    VALID = "valid"
    INVALID = "invalid"


class SessionTimeout(Exception):
    pass


class OracleInconsistency(Exception):
    pass


class GroundTruthOracle:
    """Classifies queries against a hidden target network.

    Complete assignments: Valid iff a solution of the target. Partial
    assignments (allowed when partial_semantics is on): Invalid iff some
    target constraint with a fully bound scope is violated, else Valid.
    """

    def __init__(self, target: ConstraintNetwork, partial_semantics: bool = True):
        self.target = target
        self.partial_semantics = partial_semantics
        self.query_count = 0

    def ask(self, y: Assignment) -> OracleResponse:
        complete = y.is_complete(self.target.vocabulary)
        if not complete and not self.partial_semantics:
            raise IncompleteAssignment("partial query without partial semantics")
        self.query_count += 1
        for c in self.target.constraints:
            if satisfies(y, c) is TriState.VIOLATED:
                return OracleResponse.INVALID
        return OracleResponse.VALID


class ScriptedOracle:
    """Replays a fixed answer sequence (or a recorded transcript)."""

    def __init__(self, answers, strict: bool = True):
        self._answers = list(answers)
        self._i = 0
        self.strict = strict
        self.query_count = 0
        self.transcript: list[tuple[str, OracleResponse]] = []

    @staticmethod
    def from_transcript(entries) -> "ScriptedOracle":
        return ScriptedOracle([e["answer"] for e in entries])

    def ask(self, y: Assignment) -> OracleResponse:
        if self._i >= len(self._answers):
            if self.strict:
                raise OracleInconsistency("script exhausted")
            return OracleResponse.VALID
        ans = self._answers[self._i]
        self._i += 1
        if isinstance(ans, str):
            ans = OracleResponse(ans)
        self.query_count += 1
        self.transcript.append((y.digest(), ans))
        return ans


@dataclass
class TranscriptEntry:
    index: int
    digest: str
    assignment: dict
    answer: str
    timestamp: float


class InteractiveOracle:
    """Rendezvous between an engine worker and a human answer channel.

    Exactly one query is pending at a time; answers for anything but the
    pending query are rejected, and duplicate answers are idempotent.
    """

    def __init__(self, session_id: str, timeout: Optional[float] = None,
                 on_query=None):
        self.session_id = session_id
        self.timeout = timeout
        self.on_query = on_query  # callback(query_id, assignment)
        self._answer_q: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self.pending_id: Optional[int] = None
        self.pending_assignment: Optional[Assignment] = None
        self._next_id = 0
        self._last_answer: Optional[tuple[int, OracleResponse]] = None
        self.query_count = 0
        self.transcript: list[TranscriptEntry] = []

    def ask(self, y: Assignment) -> OracleResponse:
        with self._lock:
            qid = self._next_id
            self._next_id += 1
            self.pending_id = qid
            self.pending_assignment = y
        if self.on_query is not None:
            self.on_query(qid, y)
        try:
            got_id, answer = self._answer_q.get(timeout=self.timeout)
        except queue.Empty:
            raise SessionTimeout(f"no answer for query {qid}") from None
        if got_id != qid:  # stale answers are filtered in submit(); guard anyway
            raise OracleInconsistency(f"answer for {got_id}, expected {qid}")
        with self._lock:
            self.pending_id = None
            self.pending_assignment = None
            self._last_answer = (qid, answer)
        self.query_count += 1
        self.transcript.append(TranscriptEntry(
            qid, y.digest(), {str(k): v for k, v in sorted(y.items())},
            answer.value, time.time()))
        return answer

    def submit(self, query_id: int, answer: OracleResponse) -> str:
        """Returns 'ok', 'duplicate', or raises StaleQueryId."""
        with self._lock:
            if self.pending_id == query_id:
                self._answer_q.put((query_id, answer))
                return "ok"
            if self._last_answer and self._last_answer[0] == query_id:
                if self._last_answer[1] == answer:
                    return "duplicate"
            raise StaleQueryId(f"query {query_id} is not pending")

    def transcript_export(self) -> list[dict]:
        return [{"index": e.index, "digest": e.digest,
                 "assignment": e.assignment, "answer": e.answer,
                 "timestamp": e.timestamp}
                for e in self.transcript]


class StaleQueryId(Exception):
    pass
