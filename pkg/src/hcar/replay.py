"""Replay and audit of refinement event logs.

Reconstructs the budget/bias state machine from a JSON-lines log, verifying
budget conservation after every event and that the final accepted set matches
the recorded outcome.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

BUDGET_TOL = 1e-6


class ReplayError(Exception):
    pass


@dataclass
class ReplayResult:
    events: int
    queries: int
    accepted: list
    rejected: int
    max_budget_total: float
    conservation_ok: bool
    violations: list = field(default_factory=list)


def load_events(path: str) -> list[dict]:
    events = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


def replay_events(events: list[dict]) -> ReplayResult:
    header = next((e for e in events if e.get("event") == "run_header"), None)
    if header is None:
        raise ReplayError("log has no run_header event")
    budget_total = header["config"]["budget_total"]
    budgets: dict[str, float] = {}
    live: set[str] = set()
    accepted: list = []
    rejected = 0
    queries = 0
    violations: list = []

    def key(cjson) -> str:
        return json.dumps(cjson, sort_keys=True)

    for cand in header["candidates"]:
        k = key(cand["constraint"])
        budgets[k] = cand["budget"]
        live.add(k)

    def check(i, ev):
        total = sum(budgets[k] for k in live) + queries
        if total > budget_total + BUDGET_TOL:
            violations.append(
                f"event {i} ({ev}): live budget + used = {total} > {budget_total}")

    last_constraint = None
    for i, e in enumerate(events):
        kind = e.get("event")
        if kind == "query_posed":
            last_constraint = key(e["constraint"])
        elif kind == "oracle_answer" and e.get("phase") == 2:
            queries += 1
            if last_constraint in live:
                budgets[last_constraint] -= 1.0
        elif kind == "accept":
            k = key(e["constraint"])
            accepted.append(e["constraint"])
            if k in live:
                live.discard(k)
                budgets[k] = 0.0  # leftover moves to the pool, then back out
        elif kind == "reject":
            k = key(e["constraint"])
            if k in live:
                live.discard(k)
                budgets.pop(k, None)
                rejected += 1
        elif kind == "subsets_spawned":
            for cj in e["children"]:
                k = key(cj)
                budgets[k] = e["budget_each"]
                live.add(k)
        elif kind == "budget_redistribute":
            share = e["amount"] / max(1, e["recipients"])
            for k in live:
                budgets[k] += share
        check(i, kind)

    footer = next((e for e in events if e.get("event") == "run_finished"), None)
    if footer is not None:
        want = [json.dumps(c, sort_keys=True) for c in footer["accepted"]]
        got = [json.dumps(c, sort_keys=True) for c in accepted]
        if want != got:
            violations.append("accepted set in footer differs from replayed set")
    return ReplayResult(
        events=len(events),
        queries=queries,
        accepted=accepted,
        rejected=rejected,
        max_budget_total=budget_total,
        conservation_ok=not violations,
        violations=violations,
    )


def replay_file(path: str) -> ReplayResult:
    return replay_events(load_events(path))
