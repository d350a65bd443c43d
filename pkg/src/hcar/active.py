"""Phase 3: active learning over the fixed-arity bias.

Seeded with the refined global constraints, the learner generates membership
queries that satisfy everything learned so far while violating at least one
remaining bias candidate. Valid answers eliminate the violated candidates;
Invalid answers are localized with partial-query scope finding, then the
responsible constraint is identified and added to the model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import solver as fd
from .model import (
    Assignment,
    Constraint,
    ConstraintNetwork,
    TriState,
    VarRef,
    Vocabulary,
    constraint_to_json,
    satisfies,
    violated_constraints,
)
from .oracle import OracleInconsistency, OracleResponse


class EmptyCandidateSet(Exception):
    """The constraint responsible for a negative answer is not in the bias."""


BLOCK_SIZE = 50


@dataclass
class ActiveState:
    vocabulary: Vocabulary
    learned: list[Constraint]
    bias: list[Constraint]
    queries_used: int = 0
    log: list[dict] = field(default_factory=list)
    implied_cache: set = field(default_factory=set)
    recent_queries: list[Assignment] = field(default_factory=list)

    def emit(self, event: str, **fields):
        rec = {"event": event, "phase": 3, "q_used": self.queries_used}
        rec.update(fields)
        self.log.append(rec)


@dataclass
class ActiveResult:
    learned_fixed: list[Constraint]
    queries_used: int
    log: list[dict]
    converged: bool
    collapsed: bool = False


def _ask(state: ActiveState, oracle, y: Assignment) -> OracleResponse:
    answer = oracle.ask(y)
    state.queries_used += 1
    state.emit("oracle_answer", answer=answer.value,
               assignment={str(k): v for k, v in sorted(y.items())})
    return answer


def _blocks(state: ActiveState):
    ordered = sorted(state.bias,
                     key=lambda c: (len(c.scope), tuple(sorted(map(str, c.scope))),
                                    c.pretty()))
    for i in range(0, len(ordered), BLOCK_SIZE):
        yield ordered[i:i + BLOCK_SIZE]


def generate_informative_query(state: ActiveState, seed: int = 0,
                               time_limit: float = 5.0) -> Optional[Assignment]:
    """Assignment satisfying the learned network and violating at least one
    bias candidate; None when no such assignment exists (convergence)."""
    voc = state.vocabulary
    learned_vars = {v for c in state.learned for v in c.scope}
    # opportunistic pass: a fresh sample of the learned model usually violates
    # some candidate while the bias is still crowded
    pending_all = [c for c in state.bias if c not in state.implied_cache]
    if pending_all:
        pvars = {v for c in pending_all for v in c.scope}
        rel = [v for v in voc.variables if v in pvars or v in learned_vars]
        subvoc = Vocabulary(tuple(rel), {v: voc.domains[v] for v in rel})
        net = ConstraintNetwork(subvoc, tuple(
            c for c in state.learned if all(v in subvoc.domains for v in c.scope)))
        for attempt in range(3):
            req = fd.SolveRequest(
                network=net, time_limit=time_limit,
                forbidden=tuple(state.recent_queries[-24:]),
                seed=(seed * 104729 + state.queries_used * 131 + attempt)
                & 0x7FFFFFFF)
            out = fd.solve(req)
            if out.status is not fd.SolveStatus.SOLUTION:
                break
            if violated_constraints(out.assignment, pending_all):
                return out.assignment
    for block in _blocks(state):
        pending = [c for c in block if c not in state.implied_cache]
        if not pending:
            continue
        block_vars = {v for c in pending for v in c.scope}
        rel = [v for v in voc.variables if v in block_vars or v in learned_vars]
        subvoc = Vocabulary(tuple(rel), {v: voc.domains[v] for v in rel})
        net = ConstraintNetwork(subvoc, tuple(
            c for c in state.learned if all(v in subvoc.domains for v in c.scope)))
        batch = fd.solve_violate_any(net, pending,
                                     time_limit=max(time_limit, 10.0), seed=seed)
        # implication proofs stay valid as the learned set only grows
        state.implied_cache.update(batch.implied)
        if batch.outcome.status is fd.SolveStatus.SOLUTION:
            return batch.outcome.assignment
        if batch.outcome.status is fd.SolveStatus.UNSAT:
            state.implied_cache.update(pending)
    return None


def handle_valid(state: ActiveState, y: Assignment) -> list[Constraint]:
    """Remove every bias constraint whose fully-bound scope y violates."""
    gone = violated_constraints(y, state.bias)
    if gone:
        state.bias = [c for c in state.bias if c not in set(gone)]
        state.emit("bias_eliminated", count=len(gone),
                   constraints=[constraint_to_json(c) for c in gone])
    return gone


def find_scope(y: Assignment, variables: Sequence[VarRef], state: ActiveState,
               oracle) -> list[VarRef]:
    """Minimal variable set S such that y restricted to S is classified
    Invalid; recursive bisection with partial membership queries."""
    variables = sorted(variables)
    if _ask(state, oracle, y.restrict(variables)) is not OracleResponse.INVALID:
        raise OracleInconsistency("full restriction is not invalid")

    def rec(background: list[VarRef], remaining: list[VarRef],
            check_background: bool) -> list[VarRef]:
        if check_background and background:
            if _ask(state, oracle, y.restrict(background)) is OracleResponse.INVALID:
                return []
        if len(remaining) == 1:
            return list(remaining)
        half = len(remaining) // 2
        y1, y2 = remaining[:half], remaining[half:]
        s1 = rec(background + y1, y2, True)
        s2 = rec(background + s1, y1, bool(s1))
        return s1 + s2

    return sorted(rec([], list(variables), False))


def find_constraint(scope: Sequence[VarRef], y: Assignment, state: ActiveState,
                    oracle, seed: int = 0) -> Constraint:
    """Identify the bias constraint with the given scope responsible for the
    negative classification of y restricted to it."""
    scope_set = set(scope)
    restricted = y.restrict(scope)
    kappa = [c for c in state.bias
             if set(c.scope) == scope_set
             and satisfies(restricted, c) is TriState.VIOLATED]
    if not kappa:
        raise EmptyCandidateSet(f"no bias candidate over {sorted(map(str, scope))}")
    voc = state.vocabulary
    subvoc = Vocabulary(tuple(v for v in voc.variables if v in scope_set),
                        {v: voc.domains[v] for v in scope_set})
    local = tuple(c for c in state.learned if set(c.scope) <= scope_set)
    probes = 0
    while len(kappa) > 1 and probes < 64:
        split = None
        for i, ci in enumerate(kappa):
            for cj in kappa[:i] + kappa[i + 1:]:
                net = ConstraintNetwork(subvoc, local + (cj,))
                out = fd.solve(fd.SolveRequest(network=net, time_limit=5.0,
                                               seed=seed + probes),
                               fd.NegatedGoal(ci))
                if out.status is fd.SolveStatus.SOLUTION:
                    split = out.assignment
                    break
            if split is not None:
                break
        if split is None:
            break  # candidates indistinguishable here; any representative works
        probes += 1
        answer = _ask(state, oracle, split)
        hit = [c for c in kappa if satisfies(split, c) is TriState.VIOLATED]
        if answer is OracleResponse.INVALID:
            kappa = hit
        else:
            kappa = [c for c in kappa if c not in set(hit)]
            state.bias = [c for c in state.bias if c not in set(hit)]
            if not kappa:
                raise EmptyCandidateSet("all candidates refuted by probes")
    learned = kappa[0]
    state.bias = [c for c in state.bias if c != learned]
    state.learned.append(learned)
    state.emit("constraint_learned", constraint=constraint_to_json(learned))
    return learned


def run_active(voc: Vocabulary, learned_globals: Sequence[Constraint],
               fixed_bias: Sequence[Constraint], oracle, seed: int = 0,
               query_cap: Optional[int] = None,
               time_limit: float = 5.0) -> ActiveResult:
    """Drive query/classify/update until convergence; returns the learned
    fixed-arity constraints (the final model is globals + these)."""
    state = ActiveState(voc, list(learned_globals), list(fixed_bias))
    collapsed = False
    while state.bias:
        if query_cap is not None and state.queries_used >= query_cap:
            return ActiveResult([c for c in state.learned
                                 if c not in set(learned_globals)],
                                state.queries_used, state.log, converged=False,
                                collapsed=False)
        y = generate_informative_query(state, seed=seed, time_limit=time_limit)
        if y is None:
            break  # no informative query exists: converged
        state.recent_queries.append(y)
        state.emit("query_posed",
                   assignment={str(k): v for k, v in sorted(y.items())})
        answer = _ask(state, oracle, y)
        if answer is OracleResponse.VALID:
            handle_valid(state, y)
            continue
        # negative example: localize and learn, possibly several constraints
        remaining = sorted(y.keys())
        first = True
        while True:
            if not first:
                if not remaining:
                    break
                if _ask(state, oracle, y.restrict(remaining)) is not \
                        OracleResponse.INVALID:
                    handle_valid(state, y.restrict(remaining))
                    break
            try:
                scope = find_scope(y, remaining, state, oracle)
                find_constraint(scope, y, state, oracle, seed=seed)
            except EmptyCandidateSet:
                collapsed = True
                state.emit("collapse")
                break
            remaining = [v for v in remaining if v not in set(scope)]
            first = False
        if collapsed:
            break
    learned_fixed = [c for c in state.learned if c not in set(learned_globals)]
    return ActiveResult(learned_fixed, state.queries_used, state.log,
                        converged=not state.bias or not collapsed,
                        collapsed=collapsed)
