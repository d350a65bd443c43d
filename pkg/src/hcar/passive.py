"""Phase 1: passive candidate generation from positive examples.

Global candidates come from the vocabulary's structure groups: each group is
scanned for the constraint families its declaration names, keeping exactly
the instantiations satisfied by every example. The fixed-arity bias starts
from all binary relational constraints over variable pairs and is pruned the
same way.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    AllDifferent,
    AllDiffScan,
    Assignment,
    BinaryRel,
    Constraint,
    CountScan,
    Count,
    Relation,
    StructureGroup,
    Sum,
    SumScan,
    TriState,
    Vocabulary,
    dedupe_constraints,
    satisfies,
)


class EmptyExampleSet(Exception):
    pass


@dataclass(frozen=True)
class ExampleSet:
    examples: tuple[Assignment, ...]

    def __post_init__(self):
        if not self.examples:
            raise EmptyExampleSet("at least one positive example is required")

    def __len__(self):
        return len(self.examples)


@dataclass(frozen=True)
class PassiveOutput:
    globals_: tuple[Constraint, ...]
    fixed: tuple[Constraint, ...]


def _sat_on_all(c: Constraint, examples) -> bool:
    return all(satisfies(e, c) is TriState.SAT for e in examples)


def _scan_alldiff(group: StructureGroup, scan: AllDiffScan, examples) -> list[Constraint]:
    if len(group.variables) < 2:
        return []
    cand = AllDifferent(group.variables, divisor=scan.divisor)
    return [cand] if _sat_on_all(cand, examples) else []


def _scan_sum(group: StructureGroup, scan: SumScan, examples) -> list[Constraint]:
    if len(group.variables) < 2:
        return []
    out: list[Constraint] = []
    sums = [sum(e[v] for v in group.variables) for e in examples]
    if scan.infer_eq and len(set(sums)) == 1:
        out.append(Sum(group.variables, Relation.EQ, sums[0]))
    for rel, declared in scan.bounds:
        if declared is not None:
            bound = declared
        elif rel in (Relation.LEQ, Relation.LT):
            bound = max(sums)
        elif rel in (Relation.GEQ, Relation.GT):
            bound = min(sums)
        else:
            continue  # only inequality directions make sense as bound hints
        cand = Sum(group.variables, rel, bound)
        if _sat_on_all(cand, examples):
            out.append(cand)
    return out


def _scan_count(group: StructureGroup, scan: CountScan, examples) -> list[Constraint]:
    if len(group.variables) < 2:
        return []
    div = scan.divisor
    per_example: list[dict[int, int]] = []
    for e in examples:
        occ: dict[int, int] = {}
        for v in group.variables:
            q = e[v] // div
            occ[q] = occ.get(q, 0) + 1
        per_example.append(occ)
    if scan.values is not None:
        values = list(scan.values)
    else:
        values = sorted({q for occ in per_example for q in occ})
    out: list[Constraint] = []
    for val in values:
        counts = [occ.get(val, 0) for occ in per_example]
        if scan.infer_eq and len(set(counts)) == 1 and counts[0] > 0:
            out.append(Count(group.variables, val, Relation.EQ, counts[0], divisor=div))
        for rel, declared in scan.bounds:
            if declared is not None:
                k = declared
            elif rel in (Relation.LEQ, Relation.LT):
                k = max(counts)
            elif rel in (Relation.GEQ, Relation.GT):
                k = min(counts)
            else:
                continue
            cand = Count(group.variables, val, rel, k, divisor=div)
            if _sat_on_all(cand, examples):
                out.append(cand)
    return out


def extract_global_candidates(e: ExampleSet, voc: Vocabulary) -> list[Constraint]:
    """Scan every structure group for patterns consistent with all examples."""
    out: list[Constraint] = []
    for group in voc.groups:
        for scan in group.scans:
            if isinstance(scan, AllDiffScan):
                out.extend(_scan_alldiff(group, scan, e.examples))
            elif isinstance(scan, SumScan):
                out.extend(_scan_sum(group, scan, e.examples))
            elif isinstance(scan, CountScan):
                out.extend(_scan_count(group, scan, e.examples))
    return dedupe_constraints(out)


def build_fixed_bias(e: ExampleSet, voc: Vocabulary) -> list[Constraint]:
    """All binary relational constraints over variable pairs (vocabulary
    order, one representative per unordered pair) consistent with E+."""
    out: list[Constraint] = []
    variables = voc.variables
    for i, x in enumerate(variables):
        for y in variables[i + 1:]:
            for rel in Relation:
                c = BinaryRel(x, y, rel)
                if _sat_on_all(c, e.examples):
                    out.append(c)
    return out


def run_phase1(e: ExampleSet, voc: Vocabulary) -> PassiveOutput:
    for ex in e.examples:
        if not ex.is_complete(voc):
            raise EmptyExampleSet("examples must be complete assignments")
    return PassiveOutput(
        globals_=tuple(extract_global_candidates(e, voc)),
        fixed=tuple(build_fixed_bias(e, voc)),
    )
