"""Finite-domain solver: DFS with propagation, escalating to a MILP backend.

The DFS core (smallest-domain-first, seeded random value order) finds
solutions quickly and proves UNSAT on small instances. Aux-CSP infeasibility
proofs that are out of reach for propagation-based search (e.g. a candidate
implied by the rest of the model through counting arguments) escalate to a
one-hot MILP solved by scipy's HiGHS, which settles them via LP-based branch
and bound. Both paths are deterministic for a fixed seed.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .model import (
    AllDifferent,
    Assignment,
    BinaryRel,
    Constraint,
    ConstraintNetwork,
    Count,
    MalformedModel,
    Relation,
    Sum,
    TriState,
    VarRef,
    satisfies,
)


class SolveStatus(Enum):
    SOLUTION = "solution"
    UNSAT = "unsat"
    TIMEOUT = "timeout"


class UNSATNetwork(Exception):
    pass


CONFLICT = "conflict"


@dataclass(frozen=True)
class NegatedGoal:
    target: Constraint


@dataclass(frozen=True)
class SolveRequest:
    network: ConstraintNetwork
    forbidden: tuple[Assignment, ...] = ()
    # (reference assignment, minimum hamming distance) pairs
    min_distance_from: tuple[tuple[Assignment, int], ...] = ()
    time_limit: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.time_limit <= 0:
            raise MalformedModel("time_limit must be positive")


@dataclass(frozen=True)
class SolveOutcome:
    status: SolveStatus
    assignment: Optional[Assignment] = None


# ---------------------------------------------------------------------------
# Internal constraint forms used by the DFS engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _NotAllDifferent:
    inner: AllDifferent

    @property
    def scope(self):
        return self.inner.scope


@dataclass(frozen=True)
class _DifferFrom:
    """At least one variable must differ from the reference values."""

    refs: tuple[tuple[VarRef, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(v for v, _ in self.refs))


@dataclass(frozen=True)
class _MinHamming:
    refs: tuple[tuple[VarRef, int], ...]
    k: int

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(v for v, _ in self.refs))


class _TrailDict(dict):
    """Domain store that records (key, old_value) pairs on rebinding while a
    trail is attached, so search can undo propagation cheaply."""

    __slots__ = ("trail",)

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.trail = None

    def __setitem__(self, k, v):
        if self.trail is not None:
            self.trail.append((k, dict.__getitem__(self, k)))
        dict.__setitem__(self, k, v)


def negate(c: Constraint):
    """Decompose the negation of a constraint into solver form."""
    if isinstance(c, AllDifferent):
        return _NotAllDifferent(c)
    if isinstance(c, Sum):
        return Sum(c.scope, c.rel.complement(), c.bound)
    if isinstance(c, Count):
        return Count(c.scope, c.value, c.rel.complement(), c.count, divisor=c.divisor)
    if isinstance(c, BinaryRel):
        return BinaryRel(c.x, c.y, c.rel.complement())
    raise MalformedModel(f"cannot negate {c!r}")


# ---------------------------------------------------------------------------
# Propagators. Each takes (constraint, domains) where domains maps var -> list
# of values; returns a set of changed vars, or None on wipeout. Domains are
# rebound, never mutated in place, so parent search nodes stay intact.
# ---------------------------------------------------------------------------

def _prop_alldiff(c: AllDifferent, dom: dict) -> Optional[set]:
    changed = set()
    fixed_q = set()
    for v in c.scope:
        if len(dom[v]) == 1:
            q = dom[v][0] // c.divisor
            if q in fixed_q:
                return None
            fixed_q.add(q)
    if not fixed_q:
        return changed
    for v in c.scope:
        d = dom[v]
        if len(d) == 1:
            continue
        kept = [x for x in d if x // c.divisor not in fixed_q]
        if len(kept) != len(d):
            if not kept:
                return None
            dom[v] = kept
            changed.add(v)
    return changed


def _prop_not_alldiff(c: _NotAllDifferent, dom: dict) -> Optional[set]:
    div = c.inner.divisor
    unfixed = [v for v in c.inner.scope if len(dom[v]) > 1]
    fixed_qs = [dom[v][0] // div for v in c.inner.scope if len(dom[v]) == 1]
    if len(set(fixed_qs)) < len(fixed_qs):
        return set()  # a duplicate is already locked in
    if not unfixed:
        return None
    if len(unfixed) == 1:
        v = unfixed[0]
        used = set(fixed_qs)
        kept = [x for x in dom[v] if x // div in used]
        if not kept:
            return None
        if len(kept) != len(dom[v]):
            dom[v] = kept
            return {v}
    return set()


def _prop_sum(c: Sum, dom: dict) -> Optional[set]:
    changed = set()
    los = [dom[v][0] for v in c.scope]
    his = [dom[v][-1] for v in c.scope]
    total_lo = sum(los)
    total_hi = sum(his)
    rel, b = c.rel, c.bound
    hi_bound = None  # require sum <= hi_bound
    lo_bound = None  # require sum >= lo_bound
    if rel in (Relation.LEQ, Relation.LT, Relation.EQ):
        hi_bound = b - 1 if rel is Relation.LT else b
    if rel in (Relation.GEQ, Relation.GT, Relation.EQ):
        lo_bound = b + 1 if rel is Relation.GT else b
    if rel is Relation.NEQ:
        if total_lo == total_hi == b:
            return None
        open_vars = [v for v in c.scope if len(dom[v]) > 1]
        if len(open_vars) == 1:
            v = open_vars[0]
            bad = b - sum(dom[w][0] for w in c.scope if w != v)
            if bad in dom[v]:
                kept = [x for x in dom[v] if x != bad]
                if not kept:
                    return None
                dom[v] = kept
                changed.add(v)
        return changed
    if hi_bound is not None:
        if total_lo > hi_bound:
            return None
        for i, v in enumerate(c.scope):
            cap = hi_bound - (total_lo - los[i])
            if his[i] > cap:
                kept = [x for x in dom[v] if x <= cap]
                if not kept:
                    return None
                dom[v] = kept
                changed.add(v)
    if lo_bound is not None:
        if total_hi < lo_bound:
            return None
        for i, v in enumerate(c.scope):
            floor = lo_bound - (total_hi - his[i])
            if los[i] < floor:
                kept = [x for x in dom[v] if x >= floor]
                if not kept:
                    return None
                dom[v] = kept
                changed.add(v)
    return changed


def _prop_count(c: Count, dom: dict) -> Optional[set]:
    changed = set()
    div, v0 = c.divisor, c.value
    fixed_match = 0
    may_match = []   # unfixed vars with at least one matching value
    must_match = 0   # unfixed vars whose every value matches
    for v in c.scope:
        d = dom[v]
        if len(d) == 1:
            if d[0] // div == v0:
                fixed_match += 1
        else:
            m = [x for x in d if x // div == v0]
            if m:
                may_match.append((v, m))
                if len(m) == len(d):
                    must_match += 1
    min_occ = fixed_match + must_match
    max_occ = fixed_match + len(may_match)
    rel, k = c.rel, c.count
    if rel is Relation.NEQ:
        return None if min_occ == max_occ == k else changed
    hi_k = None
    lo_k = None
    if rel in (Relation.LEQ, Relation.LT, Relation.EQ):
        hi_k = k - 1 if rel is Relation.LT else k
    if rel in (Relation.GEQ, Relation.GT, Relation.EQ):
        lo_k = k + 1 if rel is Relation.GT else k
    if hi_k is not None:
        if min_occ > hi_k:
            return None
        if min_occ == hi_k:
            for v, m in may_match:
                if len(m) == len(dom[v]):
                    continue  # forced matcher, counted in min_occ
                kept = [x for x in dom[v] if x // div != v0]
                if len(kept) != len(dom[v]):
                    dom[v] = kept
                    changed.add(v)
    if lo_k is not None:
        if max_occ < lo_k:
            return None
        if max_occ == lo_k:
            for v, m in may_match:
                if len(m) != len(dom[v]):
                    dom[v] = m
                    changed.add(v)
    return changed


def _prop_binary(c: BinaryRel, dom: dict) -> Optional[set]:
    changed = set()
    rel = c.rel
    if rel is Relation.EQ:
        common = set(dom[c.x]) & set(dom[c.y])
        if not common:
            return None
        for v in (c.x, c.y):
            kept = [x for x in dom[v] if x in common]
            if len(kept) != len(dom[v]):
                dom[v] = kept
                changed.add(v)
        return changed
    if rel is Relation.NEQ:
        for a, b in ((c.x, c.y), (c.y, c.x)):
            if len(dom[a]) == 1 and dom[a][0] in dom[b]:
                kept = [x for x in dom[b] if x != dom[a][0]]
                if not kept:
                    return None
                if len(kept) != len(dom[b]):
                    dom[b] = kept
                    changed.add(b)
        return changed
    off = 1 if rel in (Relation.LT, Relation.GT) else 0
    if rel in (Relation.LT, Relation.LEQ):
        small, big = c.x, c.y  # small <= big - off
    else:
        small, big = c.y, c.x
    cap = dom[big][-1] - off
    kept = [x for x in dom[small] if x <= cap]
    if not kept:
        return None
    if len(kept) != len(dom[small]):
        dom[small] = kept
        changed.add(small)
    floor = dom[small][0] + off
    kept = [x for x in dom[big] if x >= floor]
    if not kept:
        return None
    if len(kept) != len(dom[big]):
        dom[big] = kept
        changed.add(big)
    return changed


def _prop_differ(c: _DifferFrom, dom: dict) -> Optional[set]:
    open_refs = []
    for v, ref in c.refs:
        d = dom[v]
        if ref not in d:
            return set()  # differs for sure
        if len(d) > 1:
            open_refs.append((v, ref))
        elif d[0] != ref:
            return set()
    if not open_refs:
        return None  # pinned to the reference everywhere
    if len(open_refs) == 1:
        v, ref = open_refs[0]
        kept = [x for x in dom[v] if x != ref]
        if not kept:
            return None
        dom[v] = kept
        return {v}
    return set()


def _prop_min_hamming(c: _MinHamming, dom: dict) -> Optional[set]:
    diffs = 0
    undecided = []
    for v, ref in c.refs:
        d = dom[v]
        if ref not in d:
            diffs += 1
        elif len(d) > 1:
            undecided.append((v, ref))
    if diffs >= c.k:
        return set()
    if diffs + len(undecided) < c.k:
        return None
    if diffs + len(undecided) == c.k:
        changed = set()
        for v, ref in undecided:
            kept = [x for x in dom[v] if x != ref]
            if not kept:
                return None
            dom[v] = kept
            changed.add(v)
        return changed
    return set()


_PROPAGATORS: dict[type, Callable] = {
    AllDifferent: _prop_alldiff,
    _NotAllDifferent: _prop_not_alldiff,
    Sum: _prop_sum,
    Count: _prop_count,
    BinaryRel: _prop_binary,
    _DifferFrom: _prop_differ,
    _MinHamming: _prop_min_hamming,
}


class _Engine:
    """Constraint store with prebuilt watch lists for fixpoint propagation."""

    def __init__(self, constraints: Sequence):
        self.constraints = list(constraints)
        self.props = [_PROPAGATORS[type(c)] for c in self.constraints]
        self.watch: dict[VarRef, list[int]] = {}
        for i, c in enumerate(self.constraints):
            for v in c.scope:
                self.watch.setdefault(v, []).append(i)

    def fixpoint(self, dom: dict, touched: Optional[set] = None) -> bool:
        """Propagate to fixpoint; rebinding goes through the domain store, so
        a _TrailDict with an attached trail records undo information."""
        if touched is None:
            queue = list(range(len(self.constraints)))
        else:
            queue = sorted({i for v in touched for i in self.watch.get(v, ())})
        pending = set(queue)
        while queue:
            i = queue.pop()
            pending.discard(i)
            changed = self.props[i](self.constraints[i], dom)
            if changed is None:
                return False
            for v in changed:
                for j in self.watch.get(v, ()):
                    if j not in pending:
                        queue.append(j)
                        pending.add(j)
        return True


def propagate(net: ConstraintNetwork, partial: Mapping[VarRef, int]):
    """Prune domains under a partial assignment; returns var->values or CONFLICT."""
    dom = {}
    for v in net.vocabulary.variables:
        if v in partial:
            x = partial[v]
            if x not in net.vocabulary.domain(v):
                return CONFLICT
            dom[v] = [x]
        else:
            dom[v] = list(net.vocabulary.domain(v).values)
    if not _Engine(net.constraints).fixpoint(dom):
        return CONFLICT
    return {v: tuple(d) for v, d in dom.items()}


# ---------------------------------------------------------------------------
# DFS search
# ---------------------------------------------------------------------------

class _Budget:
    def __init__(self, deadline: float, node_limit: Optional[int]):
        self.deadline = deadline
        self.node_limit = node_limit
        self.nodes = 0

    def tick(self) -> bool:
        self.nodes += 1
        if self.node_limit is not None and self.nodes > self.node_limit:
            return False
        if self.nodes % 256 == 0 and time.monotonic() > self.deadline:
            return False
        return True


class _ValueOrder:
    """Per-variable seeded random value permutation, fixed for the search."""

    def __init__(self, variables, dom, seed: int, randomize: bool):
        rng = random.Random(seed)
        self.perm = {}
        self.rank = {}
        for i, v in enumerate(sorted(variables)):
            self.rank[v] = i
            order = list(dom[v])
            if randomize:
                rng.shuffle(order)
            self.perm[v] = {x: j for j, x in enumerate(order)}

    def ordered(self, var, values):
        p = self.perm[var]
        return sorted(values, key=p.__getitem__)


def _dfs(variables, engine: _Engine, dom, order: _ValueOrder, budget: _Budget,
         on_solution) -> Optional[bool]:
    """Returns True when the subtree is fully explored, False when on_solution
    requested a stop, None when the budget ran out. Backtracking restores
    domains through the propagation trail."""
    unfixed = [v for v in variables if len(dom[v]) > 1]
    if not unfixed:
        return False if not on_solution({v: dom[v][0] for v in variables}) else True
    if not budget.tick():
        return None
    var = min(unfixed, key=lambda v: (len(dom[v]), order.rank[v]))
    outer_trail = dom.trail
    for val in order.ordered(var, dom[var]):
        trail: list = []
        dom.trail = trail
        dom[var] = [val]
        ok = engine.fixpoint(dom, touched={var})
        res = True
        if ok:
            res = _dfs(variables, engine, dom, order, budget, on_solution)
        dom.trail = None
        while trail:
            k, old = trail.pop()
            dict.__setitem__(dom, k, old)
        if res is None or res is False:
            dom.trail = outer_trail
            return res
    dom.trail = outer_trail
    return True


# ---------------------------------------------------------------------------
# MILP backend
# ---------------------------------------------------------------------------

class _MilpBuilder:
    def __init__(self, variables: Sequence[VarRef], domains: Mapping[VarRef, Sequence[int]]):
        self.vars = list(variables)
        self.domvals = {v: list(domains[v]) for v in self.vars}
        self.offset = {}
        ncols = 0
        self.colpos = {}
        for v in self.vars:
            self.offset[v] = ncols
            for j, x in enumerate(self.domvals[v]):
                self.colpos[(v, x)] = ncols + j
            ncols += len(self.domvals[v])
        self.n_struct = ncols
        self.extra = 0
        self.rows: list[list[tuple[int, float]]] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        for v in self.vars:
            self.add_row([(self.colpos[(v, x)], 1.0) for x in self.domvals[v]], 1, 1)

    def new_binary(self) -> int:
        ix = self.n_struct + self.extra
        self.extra += 1
        return ix

    def add_row(self, entries, lb, ub):
        self.rows.append(entries)
        self.lo.append(lb)
        self.hi.append(ub)

    def value_expr(self, v: VarRef):
        return [(self.colpos[(v, x)], float(x)) for x in self.domvals[v]]

    def quotient_cols(self, v: VarRef, div: int, q: int):
        return [self.colpos[(v, x)] for x in self.domvals[v] if x // div == q]

    def add_constraint(self, c) -> None:
        if isinstance(c, AllDifferent):
            qs = sorted({x // c.divisor for v in c.scope for x in self.domvals[v]})
            for q in qs:
                cols = [cc for v in c.scope for cc in self.quotient_cols(v, c.divisor, q)]
                if len(cols) > 1:
                    self.add_row([(cc, 1.0) for cc in cols], 0, 1)
        elif isinstance(c, _NotAllDifferent):
            inner = c.inner
            qs = sorted({x // inner.divisor for v in inner.scope for x in self.domvals[v]})
            ind = []
            for q in qs:
                cols = [cc for v in inner.scope
                        for cc in self.quotient_cols(v, inner.divisor, q)]
                if len(cols) < 2:
                    continue
                d = self.new_binary()
                ind.append(d)
                self.add_row([(cc, 1.0) for cc in cols] + [(d, -2.0)], 0, len(cols))
            if not ind:
                self.add_row([], 1, 1)  # 0 >= 1: negation infeasible outright
                return
            self.add_row([(d, 1.0) for d in ind], 1, len(ind))
        elif isinstance(c, Sum):
            expr = [e for v in c.scope for e in self.value_expr(v)]
            self._add_rel_row(expr, c.rel, c.bound)
        elif isinstance(c, Count):
            expr = [(cc, 1.0) for v in c.scope
                    for cc in self.quotient_cols(v, c.divisor, c.value)]
            if not expr:
                if not c.rel.holds(0, c.count):
                    self.add_row([], 1, 1)
                return
            self._add_rel_row(expr, c.rel, c.count)
        elif isinstance(c, BinaryRel):
            self._add_binary(c)
        elif isinstance(c, _DifferFrom):
            entries = []
            for v, ref in c.refs:
                if (v, ref) not in self.colpos:
                    return  # this variable cannot take the reference value
                entries.append((self.colpos[(v, ref)], 1.0))
            self.add_row(entries, 0, len(entries) - 1)
        elif isinstance(c, _MinHamming):
            entries = []
            absent = 0
            for v, ref in c.refs:
                if (v, ref) in self.colpos:
                    entries.append((self.colpos[(v, ref)], 1.0))
                else:
                    absent += 1
            need = c.k - absent
            if need <= 0:
                return
            self.add_row(entries, 0, len(entries) - need)
        else:
            raise MalformedModel(f"no MILP encoding for {type(c).__name__}")

    def _expr_range(self, expr):
        lo = sum(min(0.0, w) for _, w in expr)
        hi = sum(max(0.0, w) for _, w in expr)
        return lo, hi

    def _add_rel_row(self, expr, rel: Relation, b: float):
        if rel is Relation.EQ:
            self.add_row(expr, b, b)
        elif rel is Relation.LEQ:
            self.add_row(expr, -np.inf, b)
        elif rel is Relation.LT:
            self.add_row(expr, -np.inf, b - 1)
        elif rel is Relation.GEQ:
            self.add_row(expr, b, np.inf)
        elif rel is Relation.GT:
            self.add_row(expr, b + 1, np.inf)
        else:  # NEQ: d=1 -> expr >= b+1, d=0 -> expr <= b-1
            lo_e, hi_e = self._expr_range(expr)
            d = self.new_binary()
            self.add_row(expr + [(d, -(b + 1 - lo_e))], lo_e, np.inf)
            self.add_row(expr + [(d, -(hi_e - b + 1))], -np.inf, b - 1)

    def add_violation_indicator(self, c: BinaryRel) -> int:
        """A binary column d with d=1 forcing the constraint to be violated."""
        if not isinstance(c, BinaryRel):
            raise MalformedModel("violation indicators support binary constraints")
        d = self.new_binary()
        rel = c.rel
        if rel is Relation.EQ:  # violated: x != y
            for x in set(self.domvals[c.x]) & set(self.domvals[c.y]):
                self.add_row([(self.colpos[(c.x, x)], 1.0),
                              (self.colpos[(c.y, x)], 1.0), (d, 1.0)], 0, 2)
        elif rel is Relation.NEQ:  # violated: x == y
            for x in sorted(set(self.domvals[c.x]) | set(self.domvals[c.y])):
                ex = [(self.colpos[(c.x, x)], 1.0)] if (c.x, x) in self.colpos else []
                ey = [(self.colpos[(c.y, x)], -1.0)] if (c.y, x) in self.colpos else []
                if ex and ey:
                    # d=1 forces equal one-hots for this value
                    self.add_row(ex + ey + [(d, 1.0)], -np.inf, 1)
                    self.add_row(ex + ey + [(d, -1.0)], -1, np.inf)
                elif ex or ey:
                    # value possible on one side only: excluded when d=1
                    entry = ex if ex else [(self.colpos[(c.y, x)], 1.0)]
                    self.add_row(entry + [(d, 1.0)], 0, 1)
        else:
            comp = rel.complement()  # d=1 -> x comp y
            dx = self.value_expr(c.x) + [(cc, -w) for cc, w in self.value_expr(c.y)]
            lo_dx = self.domvals[c.x][0] - self.domvals[c.y][-1]
            hi_dx = self.domvals[c.x][-1] - self.domvals[c.y][0]
            if comp in (Relation.GEQ, Relation.GT):
                k = 1 if comp is Relation.GT else 0
                self.add_row(dx + [(d, -(k - lo_dx))], lo_dx, np.inf)
            else:
                k = -1 if comp is Relation.LT else 0
                self.add_row(dx + [(d, -(k - hi_dx))], -np.inf, hi_dx)
        return d

    def _add_binary(self, c: BinaryRel):
        rel = c.rel
        if rel is Relation.EQ:
            for x in sorted(set(self.domvals[c.x]) | set(self.domvals[c.y])):
                ex = [(self.colpos[(c.x, x)], 1.0)] if (c.x, x) in self.colpos else []
                ey = [(self.colpos[(c.y, x)], -1.0)] if (c.y, x) in self.colpos else []
                if ex or ey:
                    self.add_row(ex + ey, 0, 0)
        elif rel is Relation.NEQ:
            for x in set(self.domvals[c.x]) & set(self.domvals[c.y]):
                self.add_row([(self.colpos[(c.x, x)], 1.0),
                              (self.colpos[(c.y, x)], 1.0)], 0, 1)
        else:
            expr = self.value_expr(c.x) + [(cc, -w) for cc, w in self.value_expr(c.y)]
            off = 1 if rel in (Relation.LT, Relation.GT) else 0
            if rel in (Relation.LT, Relation.LEQ):
                self.add_row(expr, -np.inf, -off)
            else:
                self.add_row(expr, off, np.inf)

    def solve(self, time_limit: float):
        n = self.n_struct + self.extra
        ridx, cidx, data = [], [], []
        for r, entries in enumerate(self.rows):
            for col, w in entries:
                ridx.append(r)
                cidx.append(col)
                data.append(w)
        a = sparse.csc_matrix((data, (ridx, cidx)), shape=(len(self.rows), n))
        res = milp(c=np.zeros(n),
                   constraints=LinearConstraint(a, self.lo, self.hi),
                   integrality=np.ones(n),
                   bounds=Bounds(0, 1),
                   options={"time_limit": max(0.05, time_limit)})
        if res.status == 2:
            return SolveStatus.UNSAT, None
        if res.status == 0:
            values = {}
            for v in self.vars:
                base = self.offset[v]
                dv = self.domvals[v]
                j = int(np.argmax(res.x[base:base + len(dv)]))
                values[v] = dv[j]
            return SolveStatus.SOLUTION, values
        return SolveStatus.TIMEOUT, None


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

# Escalate to the MILP backend once DFS has spent this many branch nodes:
# solution finding under propagation rarely needs more, while UNSAT proofs
# beyond small instances are hopeless for DFS and fast for LP-based search.
DFS_NODE_LIMIT = 2500


def _build_problem(req: SolveRequest, negated: Optional[NegatedGoal]) -> list:
    net = req.network
    voc = net.vocabulary
    constraints: list = list(net.constraints)
    if negated is not None:
        for v in negated.target.scope:
            if v not in voc.domains:
                raise MalformedModel(f"negated goal references unknown {v}")
        constraints.append(negate(negated.target))
    model_vars = set(voc.variables)
    for a in req.forbidden:
        refs = tuple((v, a[v]) for v in sorted(a) if v in model_vars)
        if refs:
            constraints.append(_DifferFrom(refs))
    for a, k in req.min_distance_from:
        refs = tuple((v, a[v]) for v in sorted(a) if v in model_vars)
        if refs and k > 0:
            constraints.append(_MinHamming(refs, k))
    return constraints


def solve(req: SolveRequest, negated: Optional[NegatedGoal] = None,
          dfs_node_limit: int = DFS_NODE_LIMIT) -> SolveOutcome:
    """Solve the request; a SOLUTION satisfies the network, violates the
    negated goal when given, and differs from every forbidden assignment."""
    t0 = time.monotonic()
    deadline = t0 + req.time_limit
    constraints = _build_problem(req, negated)
    voc = req.network.vocabulary
    dom = _TrailDict({v: list(voc.domain(v).values) for v in voc.variables})
    engine = _Engine(constraints)
    if not engine.fixpoint(dom):
        return SolveOutcome(SolveStatus.UNSAT)

    order = _ValueOrder(voc.variables, dom, req.seed, randomize=True)
    found: list[dict] = []
    budget = _Budget(min(deadline, t0 + max(0.3, 0.25 * req.time_limit)),
                     dfs_node_limit)
    res = _dfs(list(voc.variables), engine, dom, order, budget,
               lambda sol: (found.append(sol), False)[1])
    if found:
        a = Assignment(found[0])
        _assert_valid(a, req, negated)
        return SolveOutcome(SolveStatus.SOLUTION, a)
    if res is True:
        return SolveOutcome(SolveStatus.UNSAT)

    remaining = deadline - time.monotonic()
    if remaining <= 0:
        return SolveOutcome(SolveStatus.TIMEOUT)
    builder = _MilpBuilder(voc.variables, dom)
    for c in constraints:
        builder.add_constraint(c)
    status, values = builder.solve(remaining)
    if status is SolveStatus.SOLUTION:
        a = Assignment(values)
        _assert_valid(a, req, negated)
        return SolveOutcome(SolveStatus.SOLUTION, a)
    return SolveOutcome(status)


def _assert_valid(a: Assignment, req: SolveRequest, negated: Optional[NegatedGoal]):
    for c in req.network.constraints:
        if satisfies(a, c) is not TriState.SAT:
            raise AssertionError(f"solver produced assignment violating {c.pretty()}")
    if negated is not None and satisfies(a, negated.target) is not TriState.VIOLATED:
        raise AssertionError("solver failed to violate the negated goal")
    for f in req.forbidden:
        shared = [v for v in f if v in a]
        if shared and all(a[v] == f[v] for v in shared):
            raise AssertionError("solver returned a forbidden assignment")


@dataclass(frozen=True)
class BatchOutcome:
    outcome: SolveOutcome
    implied: tuple[BinaryRel, ...]  # candidates individually proven implied


def solve_violate_any(net: ConstraintNetwork, candidates: Sequence[BinaryRel],
                      time_limit: float = 5.0, seed: int = 0) -> BatchOutcome:
    """Assignment satisfying the network while violating at least one of the
    candidate binary constraints; UNSAT proves the whole batch implied.

    Candidates are probed one by one with a small DFS budget first (cheap for
    both easy solutions and shallow implication proofs); the inconclusive rest
    goes into a single MILP with one violation indicator per candidate.
    """
    voc = net.vocabulary
    dom = {v: list(voc.domain(v).values) for v in voc.variables}
    engine = _Engine(net.constraints)
    if not engine.fixpoint(dom):
        return BatchOutcome(SolveOutcome(SolveStatus.UNSAT), tuple(candidates))
    implied: list[BinaryRel] = []
    inconclusive: list[BinaryRel] = []
    rng = random.Random(seed)
    order = list(candidates)
    rng.shuffle(order)
    found: list[dict] = []
    searches = 0
    for cand in order:
        sub = list(net.constraints) + [negate(cand)]
        subengine = _Engine(sub)
        d2 = _TrailDict({v: list(d) for v, d in dom.items()})
        if not subengine.fixpoint(d2):
            implied.append(cand)  # refuted outright by propagation
            continue
        if searches >= 6:
            inconclusive.append(cand)
            continue
        searches += 1
        budget = _Budget(time.monotonic() + 0.4, 800)
        order_ = _ValueOrder(voc.variables, d2, seed, randomize=True)
        res = _dfs(list(voc.variables), subengine, d2, order_, budget,
                   lambda sol: (found.append(sol), False)[1])
        if found:
            a = Assignment(found[0])
            _check_batch_solution(a, net, candidates)
            return BatchOutcome(SolveOutcome(SolveStatus.SOLUTION, a),
                                tuple(implied))
        if res is True:
            implied.append(cand)
        else:
            inconclusive.append(cand)
    if not inconclusive:
        return BatchOutcome(SolveOutcome(SolveStatus.UNSAT), tuple(implied))
    builder = _MilpBuilder(voc.variables, dom)
    for c in net.constraints:
        builder.add_constraint(c)
    indicators = [builder.add_violation_indicator(c) for c in inconclusive]
    builder.add_row([(d, 1.0) for d in indicators], 1, len(indicators))
    status, values = builder.solve(time_limit)
    if status is SolveStatus.SOLUTION:
        a = Assignment(values)
        _check_batch_solution(a, net, candidates)
        return BatchOutcome(SolveOutcome(SolveStatus.SOLUTION, a), tuple(implied))
    if status is SolveStatus.UNSAT:
        implied.extend(inconclusive)
        return BatchOutcome(SolveOutcome(SolveStatus.UNSAT), tuple(implied))
    return BatchOutcome(SolveOutcome(status), tuple(implied))


def _check_batch_solution(a: Assignment, net: ConstraintNetwork, candidates):
    for c in net.constraints:
        if satisfies(a, c) is not TriState.SAT:
            raise AssertionError(f"batch query violates {c.pretty()}")
    if not any(satisfies(a, c) is TriState.VIOLATED for c in candidates):
        raise AssertionError("batch query violates no candidate")


def enumerate_solutions(net: ConstraintNetwork, limit: Optional[int] = None,
                        extra: Sequence = ()) -> list[Assignment]:
    """Complete enumeration by DFS; the brute-force oracle, independent of MILP."""
    constraints = list(net.constraints) + list(extra)
    voc = net.vocabulary
    dom = _TrailDict({v: list(voc.domain(v).values) for v in voc.variables})
    engine = _Engine(constraints)
    if not engine.fixpoint(dom):
        return []
    out: list[Assignment] = []

    def take(sol):
        out.append(Assignment(sol))
        return limit is None or len(out) < limit

    order = _ValueOrder(voc.variables, dom, seed=0, randomize=False)
    budget = _Budget(time.monotonic() + 3600.0, None)
    _dfs(list(voc.variables), engine, dom, order, budget, take)
    return out


def count_solutions(net: ConstraintNetwork, cap: Optional[int] = None) -> int:
    return len(enumerate_solutions(net, limit=cap))


@dataclass(frozen=True)
class SampleResult:
    assignments: tuple[Assignment, ...]
    truncated: bool


def sample_diverse(net: ConstraintNetwork, n: int, min_hamming: int, seed: int,
                   time_limit: float = 30.0) -> SampleResult:
    """Up to n solutions, pairwise hamming >= min_hamming, with a truncation
    flag when the space is exhausted under the diversity requirement."""
    if n < 1:
        raise MalformedModel("n must be >= 1")
    if min_hamming < 0:
        raise MalformedModel("min_hamming must be >= 0")
    sols: list[Assignment] = []
    for k in range(n):
        req = SolveRequest(
            network=net,
            min_distance_from=tuple((s, min_hamming) for s in sols),
            time_limit=time_limit,
            seed=seed * 100003 + k,
        )
        out = solve(req)
        if out.status is SolveStatus.SOLUTION:
            sols.append(out.assignment)
            continue
        if not sols:
            raise UNSATNetwork("network has no solution")
        return SampleResult(tuple(sols), truncated=True)
    return SampleResult(tuple(sols), truncated=False)
