"""ML-based prior confidence for candidate constraints.

A gradient-boosted tree classifier is trained offline on constraints from a
small corpus of known models: ground-truth constraints labelled valid,
over-fitted candidates from passive runs on tiny example subsets and verified
perturbations of valid constraints labelled invalid. At acquisition time the
model's probability for a candidate, clamped inside the decision thresholds,
initializes the candidate's confidence.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import passive, solver
from .features import FEATURE_VERSION, extract_features
from .gbdt import GradientBoostedClassifier, roc_auc
from .model import (
    AllDifferent,
    AllDiffScan,
    Assignment,
    Constraint,
    ConstraintNetwork,
    Count,
    CountScan,
    Domain,
    Relation,
    StructureGroup,
    Sum,
    SumScan,
    TriState,
    VarRef,
    Vocabulary,
    satisfies,
)

PRIOR_CLAMP_EPS = 0.01


class CorpusTooSmall(Exception):
    pass


class DegenerateData(Exception):
    pass


@dataclass(frozen=True)
class TrainingInstance:
    features: tuple[float, ...]
    label: int  # 1 = valid, 0 = invalid
    provenance: str  # ground_truth | passive_overfit | perturbation

    def __post_init__(self):
        if self.provenance == "ground_truth" and self.label != 1:
            raise ValueError("ground-truth instances must be labelled valid")


@dataclass
class PriorModel:
    classifier: GradientBoostedClassifier
    metadata: dict

    def score(self, c: Constraint, voc: Vocabulary) -> float:
        vec = extract_features(c, voc)
        return float(self.classifier.predict_proba(vec.reshape(1, -1))[0])

    def save(self, path: str):
        with open(path, "w") as f:
            json.dump({"metadata": self.metadata,
                       "classifier": self.classifier.to_json()}, f)

    @staticmethod
    def load(path: str) -> "PriorModel":
        with open(path) as f:
            d = json.load(f)
        return PriorModel(GradientBoostedClassifier.from_json(d["classifier"]),
                          d["metadata"])


def ml_prior(model: Optional[PriorModel], c: Constraint, voc: Vocabulary,
             ablation_flat: bool = False,
             theta_min: float = 0.1, theta_max: float = 0.9) -> float:
    """Initial confidence for a candidate; clamped strictly inside the
    decision thresholds so no candidate is decided without oracle evidence."""
    if ablation_flat or model is None:
        return 0.5
    p = model.score(c, voc)
    return min(max(p, theta_min + PRIOR_CLAMP_EPS), theta_max - PRIOR_CLAMP_EPS)


# ---------------------------------------------------------------------------
# Reduced training corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusProblem:
    name: str
    vocabulary: Vocabulary
    target: ConstraintNetwork
    n_solutions: int = 24


def _queens(n: int = 6) -> CorpusProblem:
    cols = tuple(VarRef("queen", (i,)) for i in range(n))
    domains = {v: Domain.interval(0, n - 1) for v in cols}
    target = (AllDifferent(cols),)
    groups = [StructureGroup("board", cols, (AllDiffScan(),))]
    for i in range(n - 1):
        groups.append(StructureGroup(f"adj{i}", (cols[i], cols[i + 1]), (AllDiffScan(),)))
    rng = random.Random(101)
    for k in range(6):
        a, b = rng.sample(cols, 2)
        groups.append(StructureGroup(f"pair{k}", (a, b), (AllDiffScan(),)))
    voc = Vocabulary(cols, domains, tuple(groups))
    return CorpusProblem("queens", voc, ConstraintNetwork(voc, target))


def _magic_square() -> CorpusProblem:
    cells = tuple(VarRef("square", (i, j)) for i in range(3) for j in range(3))
    domains = {v: Domain.interval(1, 9) for v in cells}

    def cell(i, j):
        return VarRef("square", (i, j))

    lines = ([tuple(cell(i, j) for j in range(3)) for i in range(3)]
             + [tuple(cell(i, j) for i in range(3)) for j in range(3)]
             + [tuple(cell(i, i) for i in range(3)),
                tuple(cell(i, 2 - i) for i in range(3))])
    target = [AllDifferent(cells)] + [Sum(ln, Relation.EQ, 15) for ln in lines]
    groups = [StructureGroup("cells", cells, (AllDiffScan(),))]
    for i, ln in enumerate(lines):
        groups.append(StructureGroup(f"line{i}", ln, (SumScan(infer_eq=True),)))
    rng = random.Random(202)
    for k in range(8):
        trio = tuple(rng.sample(cells, 3))
        groups.append(StructureGroup(f"triple{k}", trio,
                                     (SumScan(infer_eq=True),)))
    voc = Vocabulary(cells, domains, tuple(groups))
    return CorpusProblem("magic_square", voc, ConstraintNetwork(voc, tuple(target)))


def _latin(n: int = 5) -> CorpusProblem:
    cells = tuple(VarRef("cell", (i, j)) for i in range(n) for j in range(n))
    domains = {v: Domain.interval(1, n) for v in cells}

    def cell(i, j):
        return VarRef("cell", (i, j))

    rows = [tuple(cell(i, j) for j in range(n)) for i in range(n)]
    cols = [tuple(cell(i, j) for i in range(n)) for j in range(n)]
    target = [AllDifferent(s) for s in rows + cols]
    groups = []
    for i, s in enumerate(rows):
        groups.append(StructureGroup(f"row{i}", s, (AllDiffScan(),)))
    for j, s in enumerate(cols):
        groups.append(StructureGroup(f"col{j}", s, (AllDiffScan(),)))
    groups.append(StructureGroup("diag", tuple(cell(i, i) for i in range(n)),
                                 (AllDiffScan(),)))
    groups.append(StructureGroup("anti", tuple(cell(i, n - 1 - i) for i in range(n)),
                                 (AllDiffScan(),)))
    rng = random.Random(303)
    for k in range(10):
        a, b = rng.sample(cells, 2)
        if a.indices[0] == b.indices[0] or a.indices[1] == b.indices[1]:
            continue
        groups.append(StructureGroup(f"pair{k}", (a, b), (AllDiffScan(),)))
    for k in range(6):
        trio = tuple(rng.sample(cells, 3))
        groups.append(StructureGroup(f"sumtriple{k}", trio, (SumScan(infer_eq=True),)))
    voc = Vocabulary(cells, domains, tuple(groups))
    return CorpusProblem("latin", voc, ConstraintNetwork(voc, tuple(target)))


def _partition(n: int = 12, k: int = 3) -> CorpusProblem:
    items = tuple(VarRef("item", (i,)) for i in range(n))
    domains = {v: Domain.interval(1, k) for v in items}
    target = [Count(items, v, Relation.EQ, n // k) for v in range(1, k + 1)]
    groups = [StructureGroup(
        "items", items,
        (CountScan(values=tuple(range(1, k + 1)), infer_eq=True),))]
    rng = random.Random(404)
    for t in range(6):
        sub = tuple(rng.sample(items, 6))
        groups.append(StructureGroup(
            f"subset{t}", sub, (CountScan(values=None, infer_eq=True),)))
    for t in range(6):
        a, b = rng.sample(items, 2)
        groups.append(StructureGroup(f"pair{t}", (a, b), (AllDiffScan(),)))
    voc = Vocabulary(items, domains, tuple(groups))
    return CorpusProblem("partition", voc, ConstraintNetwork(voc, tuple(target)))


def default_corpus() -> list[CorpusProblem]:
    return [_queens(), _magic_square(), _latin(), _partition()]


# ---------------------------------------------------------------------------
# Training data
# ---------------------------------------------------------------------------

def _sample_solutions(problem: CorpusProblem, seed: int) -> list[Assignment]:
    res = solver.sample_diverse(problem.target, problem.n_solutions,
                                min_hamming=1, seed=seed, time_limit=10.0)
    return list(res.assignments)


def _perturbations(c: Constraint, voc: Vocabulary, rng: random.Random) -> list[Constraint]:
    out: list[Constraint] = []
    extra = [v for v in voc.variables if v not in c.scope]

    def with_scope(scope):
        if isinstance(c, AllDifferent):
            return AllDifferent(scope, divisor=c.divisor)
        if isinstance(c, Sum):
            return Sum(scope, c.rel, c.bound)
        if isinstance(c, Count):
            return Count(scope, c.value, c.rel, c.count, divisor=c.divisor)
        return None

    if extra:
        v = rng.choice(extra)
        pos = rng.randrange(len(c.scope) + 1)
        grown = with_scope(c.scope[:pos] + (v,) + c.scope[pos:])
        if grown is not None:
            out.append(grown)
    if len(c.scope) > 2:
        i = rng.randrange(len(c.scope))
        shrunk = with_scope(c.scope[:i] + c.scope[i + 1:])
        if shrunk is not None:
            out.append(shrunk)
    if isinstance(c, Sum):
        delta = rng.choice([-3, -2, -1, 1, 2, 3])
        out.append(Sum(c.scope, c.rel, c.bound + delta))
        out.append(Sum(c.scope, rng.choice([r for r in Relation if r != c.rel]), c.bound))
    if isinstance(c, Count):
        delta = rng.choice([-3, -2, -1, 1, 2, 3])
        out.append(Count(c.scope, c.value, c.rel, c.count + delta, divisor=c.divisor))
        out.append(Count(c.scope, c.value,
                         rng.choice([r for r in Relation if r != c.rel]),
                         c.count, divisor=c.divisor))
    return out


def generate_training_data(corpus: Sequence[CorpusProblem], seed: int = 0
                           ) -> list[TrainingInstance]:
    """Labelled constraint instances from a corpus of known models."""
    if len(corpus) < 2:
        raise CorpusTooSmall("need at least two corpus problems")
    rng = random.Random(seed)
    out: list[TrainingInstance] = []
    for prob in corpus:
        voc = prob.vocabulary
        truth = set(prob.target.constraints)
        solutions = _sample_solutions(prob, seed=rng.randrange(1 << 30))

        def add(c: Constraint, label: int, provenance: str):
            out.append(TrainingInstance(tuple(extract_features(c, voc)),
                                        label, provenance))

        for c in truth:
            add(c, 1, "ground_truth")
            add(c, 1, "ground_truth")  # weight truth against the larger negative pool

        seen_neg: set[Constraint] = set()
        for _ in range(8):
            k = rng.choice([2, 2, 3])
            subset = rng.sample(solutions, min(k, len(solutions)))
            ex = passive.ExampleSet(tuple(subset))
            for cand in passive.extract_global_candidates(ex, voc):
                if cand not in truth and cand not in seen_neg:
                    seen_neg.add(cand)
                    add(cand, 0, "passive_overfit")

        for c in truth:
            for pert in _perturbations(c, voc, rng):
                if pert in truth or pert in seen_neg:
                    continue
                # keep only perturbations that sampled solutions refute
                if any(satisfies(s, pert) is TriState.VIOLATED for s in solutions):
                    seen_neg.add(pert)
                    add(pert, 0, "perturbation")
    return out


def corpus_hash(data: Sequence[TrainingInstance]) -> str:
    h = hashlib.sha256()
    for inst in sorted(data, key=lambda t: (t.features, t.label, t.provenance)):
        h.update(repr((inst.features, inst.label, inst.provenance)).encode())
    return h.hexdigest()[:16]


def train(data: Sequence[TrainingInstance], hyperparams: Optional[dict] = None,
          seed: int = 0) -> PriorModel:
    """Fit the prior classifier; reports held-out accuracy and AUC."""
    labels = {inst.label for inst in data}
    if labels != {0, 1}:
        raise DegenerateData(f"need both classes, got labels {sorted(labels)}")
    hp = {"n_trees": 60, "max_depth": 3, "learning_rate": 0.15, "min_leaf": 8}
    if hyperparams:
        hp.update(hyperparams)
    rng = random.Random(seed)
    order = list(range(len(data)))
    rng.shuffle(order)
    split = max(1, int(0.75 * len(order)))
    train_ix, test_ix = order[:split], order[split:]
    x = np.array([data[i].features for i in train_ix])
    y = np.array([data[i].label for i in train_ix])
    clf = GradientBoostedClassifier(**hp).fit(x, y)
    meta = {
        "feature_version": FEATURE_VERSION,
        "corpus_hash": corpus_hash(data),
        "seed": seed,
        "n_train": len(train_ix),
        "n_test": len(test_ix),
    }
    if test_ix:
        xt = np.array([data[i].features for i in test_ix])
        yt = np.array([data[i].label for i in test_ix])
        scores = clf.predict_proba(xt)
        meta["holdout_accuracy"] = float(np.mean((scores >= 0.5) == yt))
        if len(set(yt.tolist())) == 2:
            meta["holdout_auc"] = roc_auc(yt, scores)
    return PriorModel(clf, meta)
