"""Core CSP model: variables, domains, constraints, assignments, satisfaction.

All types here are immutable values. The canonical JSON forms defined at the
bottom are the wire/file format shared by benchmark files, the session
protocol and result dumps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence


class ModelError(Exception):
    pass


class IncompleteAssignment(ModelError):
    pass


class VocabularyMismatch(ModelError):
    pass


class MalformedModel(ModelError):
    pass


@dataclass(frozen=True, order=True)
class VarRef:
    """A variable reference: base name plus integer indices, e.g. grid[2][3]."""

    base: str
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        # hot in propagation-heavy paths; dataclass hashing recomputes otherwise
        object.__setattr__(self, "_hash", hash((self.base, self.indices)))

    def __hash__(self):
        return self._hash

    def __str__(self):
        if not self.indices:
            return self.base
        return self.base + "." + ".".join(str(i) for i in self.indices)

    @staticmethod
    def parse(s: str) -> "VarRef":
        parts = s.split(".")
        if len(parts) == 1:
            return VarRef(parts[0])
        return VarRef(parts[0], tuple(int(p) for p in parts[1:]))

    def pretty(self) -> str:
        return self.base + "".join(f"[{i}]" for i in self.indices)


class TriState(Enum):
    SAT = "sat"
    VIOLATED = "violated"
    UNDETERMINED = "undetermined"


class Relation(Enum):
    EQ = "="
    NEQ = "!="
    LT = "<"
    LEQ = "<="
    GT = ">"
    GEQ = ">="

    def holds(self, a: int, b: int) -> bool:
        if self is Relation.EQ:
            return a == b
        if self is Relation.NEQ:
            return a != b
        if self is Relation.LT:
            return a < b
        if self is Relation.LEQ:
            return a <= b
        if self is Relation.GT:
            return a > b
        return a >= b

    def complement(self) -> "Relation":
        """The negation: values satisfy exactly one of rel, rel.complement()."""
        return _COMPLEMENT[self]

    def flip(self) -> "Relation":
        """Mirror under operand swap: a rel b <=> b rel.flip() a."""
        return _FLIP[self]


_COMPLEMENT = {
    Relation.EQ: Relation.NEQ,
    Relation.NEQ: Relation.EQ,
    Relation.LT: Relation.GEQ,
    Relation.LEQ: Relation.GT,
    Relation.GT: Relation.LEQ,
    Relation.GEQ: Relation.LT,
}
_FLIP = {
    Relation.EQ: Relation.EQ,
    Relation.NEQ: Relation.NEQ,
    Relation.LT: Relation.GT,
    Relation.LEQ: Relation.GEQ,
    Relation.GT: Relation.LT,
    Relation.GEQ: Relation.LEQ,
}

# Maximum magnitudes accepted at model load; Python ints never overflow, this
# guards against nonsense inputs per the core-model width guarantee.
MAX_SCOPE = 10**4
MAX_VALUE = 10**6


@dataclass(frozen=True)
class AllDifferent:
    """All scope variables take pairwise distinct values.

    With divisor d > 1 the comparison applies to value // d (used for the
    exam-timetabling day extension where day = slot // slots_per_day).
    """

    scope: tuple[VarRef, ...]
    divisor: int = 1

    def __post_init__(self):
        _check_scope(self.scope, minimum=2)
        if self.divisor < 1:
            raise MalformedModel(f"divisor must be >= 1, got {self.divisor}")

    def evaluate(self, values: Sequence[int]) -> bool:
        keys = [v // self.divisor for v in values]
        return len(set(keys)) == len(keys)

    def pretty(self) -> str:
        inner = ", ".join(v.pretty() for v in self.scope)
        if self.divisor != 1:
            return f"AllDifferent_div{self.divisor}({inner})"
        return f"AllDifferent({inner})"


@dataclass(frozen=True)
class Sum:
    """Sum of scope values, compared against a constant bound."""

    scope: tuple[VarRef, ...]
    rel: Relation
    bound: int

    def __post_init__(self):
        _check_scope(self.scope, minimum=2)

    def evaluate(self, values: Sequence[int]) -> bool:
        return self.rel.holds(sum(values), self.bound)

    def pretty(self) -> str:
        inner = ", ".join(v.pretty() for v in self.scope)
        return f"Sum({{{inner}}}, {self.rel.value}, {self.bound})"


@dataclass(frozen=True)
class Count:
    """Number of scope variables equal to `value`, compared against `count`.

    With divisor d > 1, a variable matches when (its value // d) == value.
    """

    scope: tuple[VarRef, ...]
    value: int
    rel: Relation
    count: int
    divisor: int = 1

    def __post_init__(self):
        _check_scope(self.scope, minimum=2)
        if self.divisor < 1:
            raise MalformedModel(f"divisor must be >= 1, got {self.divisor}")

    def evaluate(self, values: Sequence[int]) -> bool:
        occ = sum(1 for v in values if v // self.divisor == self.value)
        return self.rel.holds(occ, self.count)

    def pretty(self) -> str:
        inner = ", ".join(v.pretty() for v in self.scope)
        tag = f"Count_div{self.divisor}" if self.divisor != 1 else "Count"
        return f"{tag}({{{inner}}}, {self.value}, {self.rel.value}, {self.count})"


@dataclass(frozen=True)
class BinaryRel:
    """Fixed-arity relational constraint x rel y."""

    x: VarRef
    y: VarRef
    rel: Relation

    def __post_init__(self):
        if self.x == self.y:
            raise MalformedModel("binary constraint needs two distinct variables")

    @property
    def scope(self) -> tuple[VarRef, ...]:
        return (self.x, self.y)

    def evaluate(self, values: Sequence[int]) -> bool:
        return self.rel.holds(values[0], values[1])

    def pretty(self) -> str:
        return f"{self.x.pretty()} {self.rel.value} {self.y.pretty()}"


Constraint = AllDifferent | Sum | Count | BinaryRel


def _check_scope(scope: tuple[VarRef, ...], minimum: int):
    if len(scope) < minimum:
        raise MalformedModel(f"scope must have >= {minimum} variables, got {len(scope)}")
    if len(set(scope)) != len(scope):
        raise MalformedModel("scope has duplicate variables")
    if len(scope) > MAX_SCOPE:
        raise MalformedModel("scope exceeds supported size")


@dataclass(frozen=True)
class Domain:
    """Finite, non-empty set of integer values, stored sorted."""

    values: tuple[int, ...]

    def __post_init__(self):
        if not self.values:
            raise MalformedModel("empty domain")
        if any(abs(v) > MAX_VALUE for v in self.values):
            raise MalformedModel("domain value magnitude exceeds supported bound")

    @staticmethod
    def interval(lo: int, hi: int) -> "Domain":
        if hi < lo:
            raise MalformedModel(f"empty interval [{lo}, {hi}]")
        return Domain(tuple(range(lo, hi + 1)))

    @staticmethod
    def of(values: Iterable[int]) -> "Domain":
        return Domain(tuple(sorted(set(values))))

    def __contains__(self, v: int) -> bool:
        return v in set(self.values)

    def __len__(self):
        return len(self.values)

    @property
    def lo(self) -> int:
        return self.values[0]

    @property
    def hi(self) -> int:
        return self.values[-1]


# Scan directives attached to structure groups; consumed by the passive learner.
@dataclass(frozen=True)
class AllDiffScan:
    divisor: int = 1


@dataclass(frozen=True)
class SumScan:
    # emit Sum(G, =, s) when the group sum is the same s in every example
    infer_eq: bool = True
    # (rel, bound): declared bound value, or bound=None to use the observed
    # extremum over the examples (max for <=/<, min for >=/>)
    bounds: tuple[tuple[Relation, Optional[int]], ...] = ()


@dataclass(frozen=True)
class CountScan:
    # None: candidate values are those observed on the group in the examples
    values: Optional[tuple[int, ...]] = None
    divisor: int = 1
    # emit Count(G, v, =, k) when v occurs exactly k times in every example
    infer_eq: bool = True
    # declared per-value bounds; bound=None uses the observed extremum
    bounds: tuple[tuple[Relation, Optional[int]], ...] = ()


ScanDirective = AllDiffScan | SumScan | CountScan


@dataclass(frozen=True)
class StructureGroup:
    """Named ordered variable list with the constraint families to scan for."""

    name: str
    variables: tuple[VarRef, ...]
    scans: tuple[ScanDirective, ...] = (AllDiffScan(),)


@dataclass(frozen=True)
class Vocabulary:
    variables: tuple[VarRef, ...]
    domains: Mapping[VarRef, Domain]
    groups: tuple[StructureGroup, ...] = ()

    def __post_init__(self):
        missing = [v for v in self.variables if v not in self.domains]
        if missing:
            raise MalformedModel(f"variables without domains: {missing[:3]}")
        for g in self.groups:
            for v in g.variables:
                if v not in self.domains:
                    raise MalformedModel(f"group {g.name} references unknown {v}")

    def domain(self, v: VarRef) -> Domain:
        return self.domains[v]

    def index_of(self, v: VarRef) -> int:
        try:
            return self.variables.index(v)
        except ValueError:
            raise MalformedModel(f"unknown variable {v}") from None


class Assignment(Mapping):
    """Immutable variable -> value map; may be partial w.r.t. a vocabulary."""

    __slots__ = ("_bindings", "_hash")

    def __init__(self, bindings: Mapping[VarRef, int]):
        self._bindings = dict(bindings)
        self._hash = None

    def __getitem__(self, v: VarRef) -> int:
        return self._bindings[v]

    def __iter__(self):
        return iter(self._bindings)

    def __len__(self):
        return len(self._bindings)

    def __eq__(self, other):
        if isinstance(other, Assignment):
            return self._bindings == other._bindings
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._bindings.items()))
        return self._hash

    def __repr__(self):
        items = ", ".join(f"{k}={v}" for k, v in sorted(self._bindings.items()))
        return f"Assignment({items})"

    def is_complete(self, voc: Vocabulary) -> bool:
        return set(self._bindings) == set(voc.variables)

    def restrict(self, variables: Iterable[VarRef]) -> "Assignment":
        keep = set(variables)
        return Assignment({v: x for v, x in self._bindings.items() if v in keep})

    def merged(self, other: Mapping[VarRef, int]) -> "Assignment":
        d = dict(self._bindings)
        d.update(other)
        return Assignment(d)

    def digest(self) -> str:
        """Canonical variable-sorted serialization; the H_c identity."""
        return ";".join(f"{v}={x}" for v, x in sorted(self._bindings.items()))


@dataclass(frozen=True)
class ConstraintNetwork:
    vocabulary: Vocabulary
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        declared = set(self.vocabulary.variables)
        for c in self.constraints:
            for v in c.scope:
                if v not in declared:
                    raise MalformedModel(f"{c.pretty()} references unknown {v}")

    def with_constraints(self, constraints: Iterable[Constraint]) -> "ConstraintNetwork":
        return ConstraintNetwork(self.vocabulary, tuple(constraints))


def satisfies(a: Mapping[VarRef, int], c: Constraint) -> TriState:
    """Tri-state satisfaction: UNDETERMINED iff some scope variable is unbound."""
    values = []
    for v in c.scope:
        if v not in a:
            return TriState.UNDETERMINED
        values.append(a[v])
    return TriState.SAT if c.evaluate(values) else TriState.VIOLATED


def is_solution(a: Assignment, net: ConstraintNetwork) -> bool:
    if not a.is_complete(net.vocabulary):
        raise IncompleteAssignment("assignment is partial")
    return all(satisfies(a, c) is TriState.SAT for c in net.constraints)


def violated_constraints(a: Mapping[VarRef, int], constraints: Iterable[Constraint]) -> list[Constraint]:
    """Constraints whose scope is fully bound in `a` and evaluates false."""
    return [c for c in constraints if satisfies(a, c) is TriState.VIOLATED]


def hamming_distance(a: Assignment, b: Assignment) -> int:
    if set(a.keys()) != set(b.keys()):
        raise VocabularyMismatch("assignments cover different variables")
    return sum(1 for v in a if a[v] != b[v])


def dedupe_constraints(constraints: Iterable[Constraint]) -> list[Constraint]:
    """Order-preserving structural deduplication."""
    seen = set()
    out = []
    for c in constraints:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


# ---------------------------------------------------------------------------
# Canonical JSON forms
# ---------------------------------------------------------------------------

def constraint_to_json(c: Constraint) -> dict:
    if isinstance(c, AllDifferent):
        d = {"type": "alldifferent", "scope": [str(v) for v in c.scope]}
        if c.divisor != 1:
            d["divisor"] = c.divisor
        return d
    if isinstance(c, Sum):
        return {"type": "sum", "scope": [str(v) for v in c.scope],
                "rel": c.rel.value, "bound": c.bound}
    if isinstance(c, Count):
        d = {"type": "count", "scope": [str(v) for v in c.scope],
             "value": c.value, "rel": c.rel.value, "count": c.count}
        if c.divisor != 1:
            d["divisor"] = c.divisor
        return d
    if isinstance(c, BinaryRel):
        return {"type": "binary", "scope": [str(c.x), str(c.y)], "rel": c.rel.value}
    raise MalformedModel(f"unknown constraint {c!r}")


def constraint_from_json(d: Mapping) -> Constraint:
    kind = d["type"]
    scope = tuple(VarRef.parse(s) for s in d["scope"])
    if kind == "alldifferent":
        return AllDifferent(scope, divisor=int(d.get("divisor", 1)))
    if kind == "sum":
        return Sum(scope, Relation(d["rel"]), int(d["bound"]))
    if kind == "count":
        return Count(scope, int(d["value"]), Relation(d["rel"]), int(d["count"]),
                     divisor=int(d.get("divisor", 1)))
    if kind == "binary":
        return BinaryRel(scope[0], scope[1], Relation(d["rel"]))
    raise MalformedModel(f"unknown constraint type {kind!r}")


def assignment_to_json(a: Mapping[VarRef, int]) -> dict:
    return {str(v): int(x) for v, x in sorted(a.items())}


def assignment_from_json(d: Mapping) -> Assignment:
    return Assignment({VarRef.parse(k): int(v) for k, v in d.items()})


def _scan_to_json(s: ScanDirective) -> dict:
    if isinstance(s, AllDiffScan):
        return {"family": "alldifferent", "divisor": s.divisor}
    if isinstance(s, SumScan):
        return {"family": "sum", "infer_eq": s.infer_eq,
                "bounds": [[r.value, b] for r, b in s.bounds]}
    if isinstance(s, CountScan):
        return {"family": "count",
                "values": list(s.values) if s.values is not None else None,
                "divisor": s.divisor, "infer_eq": s.infer_eq,
                "bounds": [[r.value, b] for r, b in s.bounds]}
    raise MalformedModel(f"unknown scan {s!r}")


def _scan_from_json(d: Mapping) -> ScanDirective:
    fam = d["family"]
    if fam == "alldifferent":
        return AllDiffScan(divisor=int(d.get("divisor", 1)))
    if fam == "sum":
        return SumScan(infer_eq=bool(d.get("infer_eq", True)),
                       bounds=tuple((Relation(r), b) for r, b in d.get("bounds", [])))
    if fam == "count":
        vals = d.get("values")
        return CountScan(values=tuple(vals) if vals is not None else None,
                         divisor=int(d.get("divisor", 1)),
                         infer_eq=bool(d.get("infer_eq", True)),
                         bounds=tuple((Relation(r), b) for r, b in d.get("bounds", [])))
    raise MalformedModel(f"unknown scan family {fam!r}")


def vocabulary_to_json(voc: Vocabulary) -> dict:
    return {
        "variables": [{"name": str(v), "values": list(voc.domains[v].values)}
                      for v in voc.variables],
        "groups": [{"name": g.name,
                    "vars": [str(v) for v in g.variables],
                    "scans": [_scan_to_json(s) for s in g.scans]}
                   for g in voc.groups],
    }


def vocabulary_from_json(d: Mapping) -> Vocabulary:
    variables = []
    domains = {}
    for ent in d["variables"]:
        v = VarRef.parse(ent["name"])
        variables.append(v)
        domains[v] = Domain.of(ent["values"])
    groups = tuple(
        StructureGroup(g["name"],
                       tuple(VarRef.parse(s) for s in g["vars"]),
                       tuple(_scan_from_json(s) for s in g["scans"]))
        for g in d.get("groups", ())
    )
    return Vocabulary(tuple(variables), domains, groups)


def network_to_json(net: ConstraintNetwork) -> dict:
    return {"vocabulary": vocabulary_to_json(net.vocabulary),
            "constraints": [constraint_to_json(c) for c in net.constraints]}


def network_from_json(d: Mapping) -> ConstraintNetwork:
    voc = vocabulary_from_json(d["vocabulary"])
    return ConstraintNetwork(voc, tuple(constraint_from_json(c) for c in d["constraints"]))


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=False)
