"""Benchmark instance builders: vocabulary, structure groups, target model,
and positive-example generation.

Each builder fixes the ground-truth network C_T and declares the structure
groups the passive learner scans. Groups that are not scopes of target
constraints are deliberately coincidence-prone (cross-unit pairs, handover
windows): with few examples they frequently survive the consistency filter
and produce the over-fitted candidates the refinement phase exists to remove.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Optional

from .model import (
    AllDifferent,
    AllDiffScan,
    Assignment,
    BinaryRel,
    Constraint,
    ConstraintNetwork,
    Count,
    CountScan,
    Domain,
    Relation,
    StructureGroup,
    Sum,
    SumScan,
    VarRef,
    Vocabulary,
)
from . import solver


class UnknownBenchmark(Exception):
    pass


class SlotOutOfRange(Exception):
    pass


@dataclass(frozen=True)
class BenchmarkInstance:
    name: str
    vocabulary: Vocabulary
    target: ConstraintNetwork
    layout: str  # render hint: grid | table | list

    def generate_examples(self, n: int, min_hamming: int = 5, seed: int = 0,
                          time_limit: float = 30.0):
        res = solver.sample_diverse(self.target, n, min_hamming, seed,
                                    time_limit=time_limit)
        return list(res.assignments)


BENCHMARK_NAMES = ("sudoku4", "sudoku9", "uefa", "vm_alloc", "exam_tt", "nurse")


def build(name: str) -> BenchmarkInstance:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownBenchmark(f"unknown benchmark {name!r}; "
                               f"expected one of {BENCHMARK_NAMES}") from None
    return builder()


# ---------------------------------------------------------------------------
# Sudoku
# ---------------------------------------------------------------------------

def _sudoku(n: int, box: int) -> BenchmarkInstance:
    cells = [VarRef("grid", (i, j)) for i in range(n) for j in range(n)]
    domains = {v: Domain.interval(1, n) for v in cells}

    def cell(i, j):
        return VarRef("grid", (i, j))

    rows = [tuple(cell(i, j) for j in range(n)) for i in range(n)]
    cols = [tuple(cell(i, j) for i in range(n)) for j in range(n)]
    blocks = []
    for bi in range(0, n, box):
        for bj in range(0, n, box):
            blocks.append(tuple(cell(bi + di, bj + dj)
                                for di in range(box) for dj in range(box)))
    target = [AllDifferent(s) for s in rows + cols + blocks]

    groups = []
    for i, s in enumerate(rows):
        groups.append(StructureGroup(f"row{i}", s, (AllDiffScan(),)))
    for j, s in enumerate(cols):
        groups.append(StructureGroup(f"col{j}", s, (AllDiffScan(),)))
    for b, s in enumerate(blocks):
        groups.append(StructureGroup(f"block{b}", s, (AllDiffScan(),)))
    diag = tuple(cell(i, i) for i in range(n))
    anti = tuple(cell(i, n - 1 - i) for i in range(n))
    groups.append(StructureGroup("diag_main", diag, (AllDiffScan(),)))
    groups.append(StructureGroup("diag_anti", anti, (AllDiffScan(),)))

    if n == 9:
        # Diagonal-neighbour pairs that cross a block boundary: unconstrained
        # by the target, so they survive small example sets by coincidence.
        def same_block(a, b):
            return a[0] // box == b[0] // box and a[1] // box == b[1] // box

        on_main = {(i, i) for i in range(n)}
        on_anti = {(i, n - 1 - i) for i in range(n)}
        k = 0
        for i in range(n - 1):
            for j in range(n - 1):
                for dj in (1, -1):
                    a = (i, j if dj == 1 else j + 1)
                    b = (i + 1, a[1] + dj)
                    if not (0 <= b[1] < n) or same_block(a, b):
                        continue
                    if (a in on_main and b in on_main) or (a in on_anti and b in on_anti):
                        continue  # contained in a declared diagonal group
                    groups.append(StructureGroup(
                        f"diagpair{k}", (cell(*a), cell(*b)), (AllDiffScan(),)))
                    k += 1

    voc = Vocabulary(tuple(cells), domains, tuple(groups))
    return BenchmarkInstance(f"sudoku{n}", voc,
                             ConstraintNetwork(voc, tuple(target)), "grid")


def _sudoku4():
    return _sudoku(4, 2)


def _sudoku9():
    return _sudoku(9, 3)


# ---------------------------------------------------------------------------
# UEFA group-stage scheduling: 32 teams into 8 groups.
# ---------------------------------------------------------------------------

_UEFA_COUNTRIES = (
    # 7 countries contribute >= 2 teams -> 7 same-country separation groups
    ["ENG"] * 4 + ["ESP"] * 3 + ["GER"] * 3 + ["ITA"] * 3 +
    ["FRA"] * 2 + ["POR"] * 2 + ["NED"] * 2 +
    ["AUT", "UKR", "GRE", "SCO", "BEL", "TUR", "DEN", "CZE",
     "SUI", "NOR", "SWE", "POL", "CRO"]
)


def _uefa() -> BenchmarkInstance:
    teams = [VarRef("team", (t,)) for t in range(32)]
    domains = {v: Domain.interval(1, 8) for v in teams}
    # pots: consecutive blocks of 8 by coefficient rank
    pots = [tuple(teams[p * 8:(p + 1) * 8]) for p in range(4)]
    countries: dict[str, list[VarRef]] = {}
    # spread each country's teams across pots to mirror the seeding structure
    order = sorted(range(32), key=lambda t: (t % 8, t // 8))
    for slot, t in enumerate(order):
        countries.setdefault(_UEFA_COUNTRIES[slot], []).append(teams[t])
    multi = {c: tuple(vs) for c, vs in sorted(countries.items()) if len(vs) >= 2}
    assert len(multi) == 7, multi

    target: list[Constraint] = []
    for g in range(1, 9):
        target.append(Count(tuple(teams), g, Relation.EQ, 4))
    for p in pots:
        target.append(AllDifferent(p))
    for c, vs in multi.items():
        target.append(AllDifferent(vs))

    groups = [StructureGroup("all_teams", tuple(teams),
                             (CountScan(values=tuple(range(1, 9)), infer_eq=True),))]
    for i, p in enumerate(pots):
        groups.append(StructureGroup(f"pot{i}", p, (AllDiffScan(),)))
    for c, vs in multi.items():
        groups.append(StructureGroup(f"country_{c}", vs, (AllDiffScan(),)))
    # televised rivalry pairs: cross-pot, cross-country, so the target never
    # separates them -- a pure coincidence pool
    country_of = {}
    for c, vs in countries.items():
        for v in vs:
            country_of[v] = c
    rng = random.Random(20240901)
    pairs = []
    seen = set()
    while len(pairs) < 16:
        a, b = rng.sample(teams, 2)
        if country_of[a] == country_of[b]:
            continue
        if (teams.index(a) // 8) == (teams.index(b) // 8):
            continue
        key = frozenset((a, b))
        if key in seen:
            continue
        seen.add(key)
        pairs.append((a, b))
    for i, (a, b) in enumerate(pairs):
        groups.append(StructureGroup(f"rivalry{i}", (a, b), (AllDiffScan(),)))

    voc = Vocabulary(tuple(teams), domains, tuple(groups))
    return BenchmarkInstance("uefa", voc, ConstraintNetwork(voc, tuple(target)), "table")


# ---------------------------------------------------------------------------
# Cloud VM allocation: 40 VMs onto 10 PMs.
# ---------------------------------------------------------------------------

def _vm_alloc() -> BenchmarkInstance:
    vms = [VarRef("vm", (i,)) for i in range(40)]
    domains = {v: Domain.interval(1, 10) for v in vms}
    rng = random.Random(77003)

    target: list[Constraint] = []
    groups: list[StructureGroup] = []

    # 30 Sum constraints: per affinity cluster, keep the PM-index load inside a
    # band (spread across the rack); 10 clusters x (<=, >=) = 20, plus 5
    # storage pools of 8 VMs x (<=, >=) = 10.
    clusters = [tuple(vms[i * 4:(i + 1) * 4]) for i in range(10)]
    for i, cl in enumerate(clusters):
        lo, hi = 8, 36  # 4 vars in 1..10: range 4..40, generous slack
        target.append(Sum(cl, Relation.LEQ, hi))
        target.append(Sum(cl, Relation.GEQ, lo))
        groups.append(StructureGroup(
            f"cluster{i}", cl,
            (SumScan(infer_eq=False, bounds=((Relation.LEQ, hi), (Relation.GEQ, lo))),)))
    pools = [tuple(vms[i * 8:(i + 1) * 8]) for i in range(5)]
    for i, pool in enumerate(pools):
        lo, hi = 20, 68  # 8 vars in 1..10: range 8..80
        target.append(Sum(pool, Relation.LEQ, hi))
        target.append(Sum(pool, Relation.GEQ, lo))
        groups.append(StructureGroup(
            f"pool{i}", pool,
            (SumScan(infer_eq=False, bounds=((Relation.LEQ, hi), (Relation.GEQ, lo))),)))
    assert sum(1 for c in target if isinstance(c, Sum)) == 30

    # 18 Count constraints: GPU-capable PMs 1..6; the GPU-hungry VM pool must
    # respect per-PM caps and minimum utilisation on the first three.
    gpu_pool = tuple(vms[0:12])
    for p in range(1, 7):
        target.append(Count(gpu_pool, p, Relation.LEQ, 4))
    for p in range(1, 4):
        target.append(Count(gpu_pool, p, Relation.GEQ, 1))
    all_vms = tuple(vms)
    for p in range(1, 7):
        target.append(Count(all_vms, p, Relation.LEQ, 8))
    for p in range(7, 10):
        target.append(Count(all_vms, p, Relation.LEQ, 8))
    assert sum(1 for c in target if isinstance(c, Count)) == 18
    groups.append(StructureGroup(
        "gpu_pool", gpu_pool,
        (CountScan(values=tuple(range(1, 7)), infer_eq=True,
                   bounds=((Relation.LEQ, 4),)),
         CountScan(values=tuple(range(1, 4)), infer_eq=False,
                   bounds=((Relation.GEQ, 1),)))))
    groups.append(StructureGroup(
        "all_vms", all_vms,
        (CountScan(values=tuple(range(1, 10)), infer_eq=False,
                   bounds=((Relation.LEQ, 8),)),)))

    # 24 AllDifferent constraints: high-availability replica groups on distinct PMs.
    ha_groups = []
    ha_seen = set()
    while len(ha_groups) < 24:
        size = 2 if len(ha_groups) % 3 else 3
        ha = tuple(rng.sample(vms, size))
        if frozenset(ha) in ha_seen:
            continue
        ha_seen.add(frozenset(ha))
        ha_groups.append(ha)
        target.append(AllDifferent(ha))
        groups.append(StructureGroup(f"ha{len(ha_groups)-1}", ha, (AllDiffScan(),)))
    assert sum(1 for c in target if isinstance(c, AllDifferent)) == 24
    assert len(target) == 72

    # anti-affinity suggestion pairs from ops tickets: not actually constrained
    ha_sets = [frozenset(h) for h in ha_groups]
    k = 0
    pair_seen = set()
    while k < 30:
        a, b = rng.sample(vms, 2)
        if any(a in h and b in h for h in ha_sets) or frozenset((a, b)) in pair_seen:
            continue
        pair_seen.add(frozenset((a, b)))
        groups.append(StructureGroup(f"anti_affinity{k}", (a, b), (AllDiffScan(),)))
        k += 1

    voc = Vocabulary(tuple(vms), domains, tuple(groups))
    return BenchmarkInstance("vm_alloc", voc, ConstraintNetwork(voc, tuple(target)), "list")


# ---------------------------------------------------------------------------
# University exam timetabling: 54 exams into 126 timeslots over 14 days.
# ---------------------------------------------------------------------------

EXAM_SEMESTERS = 9
EXAM_COURSES = 6
EXAM_SLOTS_PER_DAY = 9
EXAM_DAYS = 14
EXAM_TOTAL_SLOTS = EXAM_SLOTS_PER_DAY * EXAM_DAYS


def exam_day_of(slot: int) -> int:
    """Day index of a timeslot (9 slots per day, 14 days)."""
    if not 0 <= slot < EXAM_TOTAL_SLOTS:
        raise SlotOutOfRange(f"slot {slot} outside [0, {EXAM_TOTAL_SLOTS})")
    return slot // EXAM_SLOTS_PER_DAY


def _exam_tt() -> BenchmarkInstance:
    exams = [VarRef("exam", (s, c))
             for s in range(EXAM_SEMESTERS) for c in range(EXAM_COURSES)]
    domains = {v: Domain.interval(0, EXAM_TOTAL_SLOTS - 1) for v in exams}

    def exam(s, c):
        return VarRef("exam", (s, c))

    semesters = [tuple(exam(s, c) for c in range(EXAM_COURSES))
                 for s in range(EXAM_SEMESTERS)]
    all_exams = tuple(exams)

    target: list[Constraint] = [AllDifferent(all_exams)]
    for sem in semesters:
        target.append(AllDifferent(sem, divisor=EXAM_SLOTS_PER_DAY))
    for d in range(EXAM_DAYS):
        target.append(Count(all_exams, d, Relation.LEQ, 5, divisor=EXAM_SLOTS_PER_DAY))
    assert len(target) == 24

    groups = [StructureGroup(
        "all_exams", all_exams,
        (AllDiffScan(),
         CountScan(values=tuple(range(EXAM_DAYS)), divisor=EXAM_SLOTS_PER_DAY,
                   infer_eq=False, bounds=((Relation.LEQ, 5),))))]
    for s, sem in enumerate(semesters):
        groups.append(StructureGroup(
            f"semester{s}", sem, (AllDiffScan(divisor=EXAM_SLOTS_PER_DAY),)))
    # cross-semester "related course" day-clash pairs; unconstrained by the target
    rng = random.Random(55001)
    seen = set()
    k = 0
    while k < 30:
        s1, s2 = rng.sample(range(EXAM_SEMESTERS), 2)
        c1, c2 = rng.randrange(EXAM_COURSES), rng.randrange(EXAM_COURSES)
        key = frozenset(((s1, c1), (s2, c2)))
        if key in seen:
            continue
        seen.add(key)
        groups.append(StructureGroup(
            f"related{k}", (exam(s1, c1), exam(s2, c2)),
            (AllDiffScan(divisor=EXAM_SLOTS_PER_DAY),)))
        k += 1

    voc = Vocabulary(all_exams, domains, tuple(groups))
    return BenchmarkInstance("exam_tt", voc, ConstraintNetwork(voc, tuple(target)), "table")


# ---------------------------------------------------------------------------
# Nurse rostering: 7 days x 3 shifts x 2 positions, 8 nurses.
# ---------------------------------------------------------------------------

NURSE_DAYS = 7
NURSE_SHIFTS = 3
NURSE_POSITIONS = 2
NURSE_COUNT = 8
NURSE_MAX_SLOTS = 6


def _nurse() -> BenchmarkInstance:
    slots = [VarRef("roster", (d, s, p))
             for d in range(NURSE_DAYS)
             for s in range(NURSE_SHIFTS)
             for p in range(NURSE_POSITIONS)]
    domains = {v: Domain.interval(1, NURSE_COUNT) for v in slots}

    def slot(d, s, p):
        return VarRef("roster", (d, s, p))

    days = [tuple(slot(d, s, p) for s in range(NURSE_SHIFTS)
                  for p in range(NURSE_POSITIONS))
            for d in range(NURSE_DAYS)]
    rests = [tuple([slot(d, NURSE_SHIFTS - 1, p) for p in range(NURSE_POSITIONS)] +
                   [slot(d + 1, 0, p) for p in range(NURSE_POSITIONS)])
             for d in range(NURSE_DAYS - 1)]
    all_slots = tuple(slots)

    target: list[Constraint] = []
    for day in days:
        target.append(AllDifferent(day))
    for rest in rests:
        target.append(AllDifferent(rest))
    for n in range(1, NURSE_COUNT + 1):
        target.append(Count(all_slots, n, Relation.LEQ, NURSE_MAX_SLOTS))
    assert len(target) == 21

    groups = []
    for d, day in enumerate(days):
        groups.append(StructureGroup(f"day{d}", day, (AllDiffScan(),)))
    for d, rest in enumerate(rests):
        groups.append(StructureGroup(f"rest{d}", rest, (AllDiffScan(),)))
    groups.append(StructureGroup(
        "workload", all_slots,
        (CountScan(values=tuple(range(1, NURSE_COUNT + 1)), infer_eq=True,
                   bounds=((Relation.LEQ, NURSE_MAX_SLOTS),)),)))
    # same-shift continuity pairs across consecutive days (coincidence pool)
    k = 0
    for d in range(NURSE_DAYS - 1):
        for s in range(NURSE_SHIFTS):
            for p in range(NURSE_POSITIONS):
                groups.append(StructureGroup(
                    f"carryover{k}", (slot(d, s, p), slot(d + 1, s, p)),
                    (AllDiffScan(),)))
                k += 1
    # evening-to-morning handover pairs, each contained in a handover window below
    for d in range(NURSE_DAYS - 1):
        groups.append(StructureGroup(
            f"handover_pair{d}", (slot(d, 2, 0), slot(d + 1, 1, 0)),
            (AllDiffScan(),)))
    # handover windows: a rest group plus one next-morning late slot (extra last)
    w = 0
    for d in range(NURSE_DAYS - 1):
        for p_extra in (0, 1):
            groups.append(StructureGroup(
                f"window{w}",
                rests[d] + (slot(d + 1, 1, p_extra),),
                (AllDiffScan(),)))
            w += 1

    voc = Vocabulary(all_slots, domains, tuple(groups))
    return BenchmarkInstance("nurse", voc, ConstraintNetwork(voc, tuple(target)), "table")


_BUILDERS: dict[str, Callable[[], BenchmarkInstance]] = {
    "sudoku4": _sudoku4,
    "sudoku9": _sudoku9,
    "uefa": _uefa,
    "vm_alloc": _vm_alloc,
    "exam_tt": _exam_tt,
    "nurse": _nurse,
}


# ---------------------------------------------------------------------------
# Benchmark file format (canonical JSON)
# ---------------------------------------------------------------------------

def instance_to_json(inst: BenchmarkInstance,
                     examples: Optional[list[Assignment]] = None) -> dict:
    from .model import assignment_to_json, constraint_to_json, vocabulary_to_json
    d = {
        "name": inst.name,
        "layout": inst.layout,
        "vocabulary": vocabulary_to_json(inst.vocabulary),
        "target": [constraint_to_json(c) for c in inst.target.constraints],
    }
    if examples:
        d["examples"] = [assignment_to_json(a) for a in examples]
    return d


def instance_from_json(d: dict) -> tuple[BenchmarkInstance, list[Assignment]]:
    from .model import assignment_from_json, constraint_from_json, vocabulary_from_json
    voc = vocabulary_from_json(d["vocabulary"])
    target = ConstraintNetwork(
        voc, tuple(constraint_from_json(c) for c in d.get("target", [])))
    inst = BenchmarkInstance(d.get("name", "problem"), voc, target,
                             d.get("layout", "list"))
    examples = [assignment_from_json(a) for a in d.get("examples", [])]
    return inst, examples


def save_problem(inst: BenchmarkInstance, path: str,
                 examples: Optional[list[Assignment]] = None):
    import json
    with open(path, "w") as f:
        json.dump(instance_to_json(inst, examples), f, indent=1)


def load_problem(path: str) -> tuple[BenchmarkInstance, list[Assignment]]:
    import json
    with open(path) as f:
        return instance_from_json(json.load(f))
