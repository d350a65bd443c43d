"""Phase 2: query-driven interactive refinement of global candidates.

Candidates carry a confidence score initialized by the prior model and
updated by Bayesian evidence from oracle answers. The loop selects the
least-confident candidate with budget left, generates assignments that
isolate it (satisfy everything else, violate it, unseen so far), and decides
accept/reject/undecided against the confidence thresholds. Rejected
candidates at shallow hierarchy levels spawn scope-reduced children that
inherit type and parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from . import solver as fd
from .model import (
    AllDifferent,
    Assignment,
    Constraint,
    ConstraintNetwork,
    Count,
    Sum,
    TriState,
    VarRef,
    Vocabulary,
    constraint_to_json,
    satisfies,
)
from .oracle import OracleResponse


class OracleFailure(Exception):
    pass


@dataclass(frozen=True)
class RefinementConfig:
    theta_min: float = 0.1
    theta_max: float = 0.9
    alpha: float = 0.42
    budget_total: int = 1500
    time_max: float = 600.0
    solver_time_limit: float = 5.0
    d_max: int = 3
    seed: int = 0
    max_deferrals: int = 3
    validate_queries: bool = True

    def __post_init__(self):
        if not (0.0 < self.theta_min < self.theta_max < 1.0):
            raise ValueError("need 0 < theta_min < theta_max < 1")
        if not (0.0 < self.alpha < 0.5):
            raise ValueError("need 0 < alpha < 0.5 so refuting evidence "
                             "raises confidence")
        if self.budget_total < 1:
            raise ValueError("budget_total must be >= 1")
        if self.d_max < 0:
            raise ValueError("d_max must be >= 0")


@dataclass
class CandidateState:
    constraint: Constraint
    confidence: float
    level: int
    budget: Fraction  # remaining allocated query budget
    seq: int  # insertion order, for deterministic tie-breaking
    parent: Optional["CandidateState"] = None
    history: list[Assignment] = field(default_factory=list)
    digests: set = field(default_factory=set)
    status: str = "live"  # live | accepted | rejected | pruned | undecided
    queries_spent: int = 0
    deferrals: int = 0
    children: list["CandidateState"] = field(default_factory=list)

    def key(self) -> str:
        return self.constraint.pretty()


@dataclass
class RefinementStats:
    constraints_learned: int = 0
    constraints_removed: int = 0
    subsets_generated: int = 0
    subsets_accepted: int = 0
    subsets_rejected: int = 0
    avg_queries_per_accepted_subset: float = 0.0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RefinementResult:
    accepted: list[Constraint]
    stats: RefinementStats
    log: list[dict]
    queries_used: int
    elapsed: float
    undecided: list[Constraint]
    rejected: list[Constraint]
    terminated_by: str


def update_bayes(p: float, response: OracleResponse, alpha: float) -> float:
    """Posterior belief after an answer to a query that violated the
    candidate. Invalid supports the candidate; Valid refutes it outright."""
    if response is OracleResponse.VALID:
        return 0.0
    num = (1.0 - alpha) * p
    den = num + alpha * (1.0 - p)
    return num / den if den > 0 else 0.0


def decide(confidence: float, cfg: RefinementConfig) -> str:
    if confidence >= cfg.theta_max:
        return "accept"
    if confidence <= cfg.theta_min:
        return "reject"
    return "undecided"


def generate_subsets(cand: CandidateState, cfg: RefinementConfig) -> list[Constraint]:
    """Scope-reduced children: drop the first, middle (n//2, 0-based), or last
    variable of the ordered scope, keeping type and parameters."""
    scope = cand.constraint.scope
    n = len(scope)
    if n <= 2:
        return []  # children would fall below the minimum arity
    out: list[Constraint] = []
    seen = set()
    for pos in (0, n // 2, n - 1):
        sub = scope[:pos] + scope[pos + 1:]
        if sub in seen:
            continue
        seen.add(sub)
        c = cand.constraint
        if isinstance(c, AllDifferent):
            out.append(AllDifferent(sub, divisor=c.divisor))
        elif isinstance(c, Sum):
            out.append(Sum(sub, c.rel, c.bound))
        elif isinstance(c, Count):
            out.append(Count(sub, c.value, c.rel, c.count, divisor=c.divisor))
        else:
            return []  # binary candidates have no valid children
    return out


class RefinementEngine:
    def __init__(self, voc: Vocabulary, candidates: Sequence[Constraint],
                 oracle, cfg: RefinementConfig,
                 prior_fn: Callable[[Constraint], float],
                 solve_fn=fd.solve, enable_svr: bool = True,
                 decision_mode: str = "bayes"):
        if decision_mode not in ("bayes", "one_shot"):
            raise ValueError(f"unknown decision mode {decision_mode!r}")
        self.voc = voc
        self.cfg = cfg
        self.oracle = oracle
        self.prior_fn = prior_fn
        self.solve_fn = solve_fn
        self.enable_svr = enable_svr
        self.decision_mode = decision_mode
        self.log: list[dict] = []
        self.accepted: list[CandidateState] = []
        self.rejected: list[CandidateState] = []
        self.undecided_final: list[CandidateState] = []
        self.queries_used = 0
        self.budget_pool = Fraction(0)
        self._seq = 0
        self._solver_calls = 0
        self.bias: list[CandidateState] = []
        share = Fraction(cfg.budget_total, max(1, len(candidates)))
        for c in candidates:
            self._insert(c, level=0, budget=share, parent=None)
        self.stats = RefinementStats()

    # -- bookkeeping --------------------------------------------------------

    def _insert(self, c: Constraint, level: int, budget: Fraction,
                parent: Optional[CandidateState]) -> CandidateState:
        st = CandidateState(constraint=c, confidence=self.prior_fn(c),
                            level=level, budget=budget, seq=self._seq,
                            parent=parent)
        self._seq += 1
        self.bias.append(st)
        if parent is not None:
            parent.children.append(st)
        return st

    def _emit(self, event: str, **fields):
        rec = {"event": event, "phase": 2, "q_used": self.queries_used}
        rec.update(fields)
        self.log.append(rec)

    def _live(self) -> list[CandidateState]:
        return [s for s in self.bias if s.status == "live"]

    def _check_budget_invariant(self):
        total = self.budget_pool + sum((s.budget for s in self._live()),
                                       Fraction(0)) + self.queries_used
        if total > self.cfg.budget_total + Fraction(1, 10**6):
            raise AssertionError(f"budget conservation violated: {total}")

    # -- query generation ---------------------------------------------------

    def _relevant_vars(self, cand: CandidateState) -> list[VarRef]:
        rel: set[VarRef] = set(cand.constraint.scope)
        for s in self.accepted:
            rel.update(s.constraint.scope)
        for s in self._live():
            if s is not cand:
                rel.update(s.constraint.scope)
        return [v for v in self.voc.variables if v in rel]

    def generate_query(self, cand: CandidateState, relax_from: int = 0):
        """Returns ('query', assignment, relax_level, dropped_constraints),
        ('implied', ...), or ('deferred', ...).

        Relaxation ladder: level 0 satisfies all other live candidates; when
        that is proven infeasible, level 1 drops the live candidates with
        confidence below 0.5 (the suspected over-fits); level 2 drops all
        other live candidates. Validated constraints in C'_G are always
        satisfied, and the candidate under test is always violated.
        """
        for level in range(relax_from, 3):
            others = [s for s in self._live() if s is not cand]
            if level == 1:
                dropped = [s for s in others if s.confidence < 0.5]
            elif level == 2:
                dropped = others
            else:
                dropped = []
            if level > 0 and not dropped:
                continue  # identical to the previous level
            kept = [s for s in others if s not in dropped]
            variables = self._relevant_vars(cand)
            constraints = [s.constraint for s in self.accepted]
            constraints += [s.constraint for s in kept]
            subvoc = Vocabulary(tuple(variables),
                                {v: self.voc.domains[v] for v in variables})
            net = ConstraintNetwork(subvoc, tuple(constraints))
            req = fd.SolveRequest(
                network=net,
                forbidden=tuple(cand.history),
                time_limit=self.cfg.solver_time_limit,
                seed=hash((self.cfg.seed, cand.seq, cand.queries_spent, level))
                & 0x7FFFFFFF,
            )
            self._solver_calls += 1
            out = self.solve_fn(req, fd.NegatedGoal(cand.constraint))
            if out.status is fd.SolveStatus.TIMEOUT:
                return ("deferred", None, level, [])
            if out.status is fd.SolveStatus.UNSAT:
                continue  # proven infeasible at this level; relax further
            y = out.assignment
            if self.cfg.validate_queries:
                self._validate_query(cand, y, {s.constraint for s in dropped})
            cand.history.append(y)
            cand.digests.add(y.digest())
            return ("query", y, level, [s.constraint for s in dropped])
        return ("implied", None, 2, [])

    def _validate_query(self, cand: CandidateState, y: Assignment, dropped: set):
        for s in self.accepted:
            if satisfies(y, s.constraint) is not TriState.SAT:
                raise AssertionError(
                    f"query breaks validated constraint {s.key()}")
        for s in self._live():
            if (s is not cand and s.constraint not in dropped
                    and satisfies(y, s.constraint) is not TriState.SAT):
                raise AssertionError(
                    f"query breaks live candidate {s.key()}")
        if satisfies(y, cand.constraint) is not TriState.VIOLATED:
            raise AssertionError(f"query does not violate {cand.key()}")
        if y.digest() in cand.digests:
            raise AssertionError("query already seen for this candidate")

    def _valid_coeliminations(self, cand: CandidateState, y: Assignment
                              ) -> list[CandidateState]:
        """Live candidates other than cand that the Valid assignment refutes."""
        return [s for s in self._live()
                if s is not cand
                and satisfies(y, s.constraint) is TriState.VIOLATED]

    # -- structural updates -------------------------------------------------

    def _remove_subtree(self, st: CandidateState, reason: str):
        for child in st.children:
            if child.status == "live":
                self._remove_subtree(child, reason)
        if st.status == "live":
            st.status = "pruned"
            self.stats.constraints_removed += 1
            if st.level >= 1:
                self.stats.subsets_rejected += 1
            self._emit("reject", constraint=constraint_to_json(st.constraint),
                       level=st.level, reason=reason,
                       confidence=st.confidence)

    def _siblings(self, st: CandidateState) -> list[CandidateState]:
        if st.parent is None:
            return []
        return [s for s in st.parent.children if s is not st and s.status == "live"]

    def apply_decision(self, cand: CandidateState, verdict: str):
        cfg = self.cfg
        if verdict == "accept":
            cand.status = "accepted"
            self.accepted.append(cand)
            self.stats.constraints_learned += 1
            if cand.level >= 1:
                self.stats.subsets_accepted += 1
            self._emit("accept", constraint=constraint_to_json(cand.constraint),
                       level=cand.level, confidence=cand.confidence,
                       queries_spent=cand.queries_spent)
            for child in cand.children:
                if child.status == "live":
                    self._remove_subtree(child, "ancestor_accepted")
            if isinstance(cand.constraint, AllDifferent) and cand.level >= 1:
                for sib in self._siblings(cand):
                    self._remove_subtree(sib, "alldifferent_sibling_accepted")
            leftover = cand.budget
            cand.budget = Fraction(0)
            if leftover > 0:
                self.budget_pool += leftover
                live = self._live()
                if live:
                    share = self.budget_pool / len(live)
                    for s in live:
                        s.budget += share
                    self._emit("budget_redistribute",
                               amount=float(self.budget_pool),
                               recipients=len(live))
                    self.budget_pool = Fraction(0)
        elif verdict == "reject":
            cand.status = "rejected"
            self.rejected.append(cand)
            self.stats.constraints_removed += 1
            if cand.level >= 1:
                self.stats.subsets_rejected += 1
            self._emit("reject", constraint=constraint_to_json(cand.constraint),
                       level=cand.level, reason="refuted",
                       confidence=cand.confidence)
            if cand.level >= 1:
                for sib in self._siblings(cand):
                    self._remove_subtree(sib, "sibling_rejected")
            if self.enable_svr and cand.level < cfg.d_max:
                # "unseen": never re-create a candidate that ever existed
                existing = {s.constraint for s in self.bias}
                children = [c for c in generate_subsets(cand, cfg)
                            if c not in existing]
                if children:
                    self.stats.subsets_generated += len(children)
                    share = cand.budget / len(children)
                    cand.budget = Fraction(0)
                    inserted = []
                    for c in children:
                        st = self._insert(c, cand.level + 1, share, cand)
                        inserted.append(st)
                    self._emit("subsets_spawned",
                               parent=constraint_to_json(cand.constraint),
                               children=[constraint_to_json(c) for c in children],
                               level=cand.level + 1,
                               budget_each=float(share))
        # undecided: candidate stays live with whatever budget remains
        self._check_budget_invariant()

    def _reject_coeliminated(self, coeliminated: list[CandidateState]):
        for s in sorted(coeliminated, key=lambda s: s.seq):
            if s.status == "live":
                s.confidence = 0.0
                self.apply_decision(s, "reject")

    def _one_shot(self, cand: CandidateState):
        """Single violating query, immediate and final decision: a Valid
        answer rejects, anything else (Invalid, no query, timeout) accepts."""
        cfg = self.cfg
        kind, y, relax, dropped = self.generate_query(cand)
        if kind == "implied":
            cand.confidence = cfg.theta_max
            self._emit("implied", constraint=constraint_to_json(cand.constraint),
                       level=cand.level)
            self.apply_decision(cand, "accept")
            return
        if kind == "deferred":
            cand.confidence = cfg.theta_max
            self._emit("deferred", constraint=constraint_to_json(cand.constraint),
                       deferrals=1, accepted_on_timeout=True)
            self.apply_decision(cand, "accept")
            return
        self._emit("query_posed", constraint=constraint_to_json(cand.constraint),
                   assignment={str(k): v for k, v in sorted(y.items())},
                   level=cand.level, relax_level=relax,
                   dropped=[constraint_to_json(c) for c in dropped])
        try:
            answer = self.oracle.ask(y)
        except Exception as exc:
            raise OracleFailure(str(exc)) from exc
        self.queries_used += 1
        cand.queries_spent += 1
        cand.budget -= 1
        self._emit("oracle_answer", answer=answer.value)
        before = cand.confidence
        coelim: list[CandidateState] = []
        if answer is OracleResponse.VALID:
            cand.confidence = 0.0
            verdict = "reject"
            coelim = self._valid_coeliminations(cand, y)
        else:
            cand.confidence = cfg.theta_max
            verdict = "accept"
        self._emit("confidence_update", before=before, after=cand.confidence,
                   constraint=constraint_to_json(cand.constraint))
        self.apply_decision(cand, verdict)
        self._reject_coeliminated(coelim)

    # -- selection & main loop ----------------------------------------------

    def select_candidate(self) -> Optional[CandidateState]:
        eligible = [s for s in self._live() if s.budget >= 1]
        if not eligible:
            return None
        return min(eligible, key=lambda s: (s.confidence, s.deferrals, s.seq))

    def run(self) -> RefinementResult:
        cfg = self.cfg
        t0 = time.monotonic()
        self._emit("run_header",
                   config={"theta_min": cfg.theta_min, "theta_max": cfg.theta_max,
                           "alpha": cfg.alpha, "budget_total": cfg.budget_total,
                           "d_max": cfg.d_max, "seed": cfg.seed,
                           "decision_mode": self.decision_mode,
                           "enable_svr": self.enable_svr},
                   candidates=[{"constraint": constraint_to_json(s.constraint),
                                "prior": s.confidence,
                                "budget": float(s.budget)}
                               for s in self.bias])
        terminated_by = "bias_empty"
        while True:
            if not self._live():
                terminated_by = "bias_empty"
                break
            if self.queries_used >= cfg.budget_total:
                terminated_by = "budget_exhausted"
                break
            if time.monotonic() - t0 > cfg.time_max:
                terminated_by = "time_exhausted"
                break
            cand = self.select_candidate()
            if cand is None:
                terminated_by = "no_selectable_candidate"
                break
            if self.decision_mode == "one_shot":
                self._one_shot(cand)
                continue
            q_c = 0
            relax_floor = 0  # the live set is fixed for this investigation
            coelim: list[CandidateState] = []
            while (cfg.theta_min < cand.confidence < cfg.theta_max
                   and cand.budget >= 1
                   and self.queries_used < cfg.budget_total
                   and time.monotonic() - t0 <= cfg.time_max):
                kind, y, relax, dropped = self.generate_query(cand, relax_floor)
                relax_floor = relax  # stricter levels stay UNSAT as H_c grows
                if kind == "implied":
                    cand.confidence = cfg.theta_max
                    self._emit("implied",
                               constraint=constraint_to_json(cand.constraint),
                               level=cand.level)
                    break
                if kind == "deferred":
                    cand.deferrals += 1
                    self._emit("deferred",
                               constraint=constraint_to_json(cand.constraint),
                               deferrals=cand.deferrals,
                               final=cand.deferrals >= cfg.max_deferrals)
                    if cand.deferrals >= cfg.max_deferrals:
                        cand.status = "undecided"
                        self.undecided_final.append(cand)
                        self.stats.constraints_removed += 1
                    break
                self._emit("query_posed",
                           constraint=constraint_to_json(cand.constraint),
                           assignment={str(k): v for k, v in sorted(y.items())},
                           level=cand.level, relax_level=relax,
                           dropped=[constraint_to_json(c) for c in dropped])
                try:
                    answer = self.oracle.ask(y)
                except Exception as exc:  # engine state stays consistent
                    raise OracleFailure(str(exc)) from exc
                self.queries_used += 1
                q_c += 1
                cand.queries_spent += 1
                cand.budget -= 1
                self._emit("oracle_answer", answer=answer.value)
                before = cand.confidence
                cand.confidence = update_bayes(cand.confidence, answer, cfg.alpha)
                self._emit("confidence_update", before=before,
                           after=cand.confidence,
                           constraint=constraint_to_json(cand.constraint))
                if answer is OracleResponse.VALID:
                    coelim = self._valid_coeliminations(cand, y)
                    break
            if cand.status != "live":
                continue  # resolved as undecided-final inside the loop
            verdict = decide(cand.confidence, cfg)
            if verdict == "undecided":
                # stays live with reduced budget; budget redistribution from a
                # later acceptance can make it selectable again
                continue
            self.apply_decision(cand, verdict)
            self._reject_coeliminated(coelim)

        elapsed = time.monotonic() - t0
        accepted_subsets = [s for s in self.accepted if s.level >= 1]
        if accepted_subsets:
            self.stats.avg_queries_per_accepted_subset = (
                sum(s.queries_spent for s in accepted_subsets)
                / len(accepted_subsets))
        self._emit("run_finished", terminated_by=terminated_by,
                   accepted=[constraint_to_json(s.constraint)
                             for s in self.accepted],
                   stats=self.stats.to_json())
        leftovers = [s for s in self._live()] + self.undecided_final
        return RefinementResult(
            accepted=[s.constraint for s in self.accepted],
            stats=self.stats,
            log=self.log,
            queries_used=self.queries_used,
            elapsed=elapsed,
            undecided=[s.constraint for s in leftovers],
            rejected=[s.constraint for s in self.rejected],
            terminated_by=terminated_by,
        )


def run_refinement(voc: Vocabulary, candidates: Sequence[Constraint], oracle,
                   cfg: RefinementConfig,
                   prior_fn: Callable[[Constraint], float],
                   solve_fn=fd.solve) -> RefinementResult:
    engine = RefinementEngine(voc, candidates, oracle, cfg, prior_fn, solve_fn)
    return engine.run()
