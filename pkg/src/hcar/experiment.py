"""End-to-end experiment harness: runs the acquisition pipeline and its
ablation variants, estimates solution-space precision/recall, and renders
CSV/JSON reports."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import active, passive, solver
from .benchmarks import BenchmarkInstance, build
from .model import Constraint, ConstraintNetwork, constraint_to_json, is_solution
from .oracle import GroundTruthOracle
from .prior import PriorModel, ml_prior
from .refine import RefinementConfig, RefinementEngine, RefinementStats

VARIANTS = ("hcar", "no_refine", "no_ml_priors", "no_svr", "no_bayes")


class UnsatLearnedModel(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: str
    n_examples: int = 5
    variant: str = "hcar"
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    n_samples: int = 100
    min_hamming: int = 5
    seed: int = 0
    metric_seed: Optional[int] = None  # defaults to a stream independent of seed
    phase3_query_cap: Optional[int] = None  # safety cap, off by default

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class RunReport:
    benchmark: str
    variant: str
    n_examples: int
    seed: int
    s_precision: float
    s_recall: float
    bias_size: int
    learned_globals: int
    learned_fixed: int
    q2: int
    q3: int
    q_total: int
    wall_time: float
    refinement_stats: RefinementStats
    collapsed: bool = False
    spurious_in_bias: int = 0
    log: list = field(default_factory=list)

    def to_json(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "log"}
        d["refinement_stats"] = self.refinement_stats.to_json()
        return d


def s_precision(learned: ConstraintNetwork, target: ConstraintNetwork,
                n_samples: int = 100, min_hamming: int = 5, seed: int = 0) -> float:
    """Share of solutions sampled from the learned model that the target
    accepts, in percent."""
    try:
        sample = solver.sample_diverse(learned, n_samples, min_hamming, seed)
    except solver.UNSATNetwork:
        raise UnsatLearnedModel("learned model has no solutions")
    good = sum(1 for a in sample.assignments if is_solution(a, target))
    return 100.0 * good / len(sample.assignments)


def s_recall(learned: ConstraintNetwork, target: ConstraintNetwork,
             n_samples: int = 100, min_hamming: int = 5, seed: int = 0) -> float:
    return s_precision(target, learned, n_samples, min_hamming, seed)


def count_spurious(candidates: Sequence[Constraint], target: ConstraintNetwork,
                   probe_limit: int = 400) -> int:
    """Candidates not implied by the target (checked by searching for a target
    solution that violates them)."""
    n = 0
    for c in candidates:
        req = solver.SolveRequest(network=target, time_limit=10.0, seed=7)
        out = solver.solve(req, solver.NegatedGoal(c))
        if out.status is solver.SolveStatus.SOLUTION:
            n += 1
    return n


def run_experiment(cfg: ExperimentConfig,
                   prior_model: Optional[PriorModel] = None,
                   instance: Optional[BenchmarkInstance] = None,
                   examples=None) -> RunReport:
    t0 = time.monotonic()
    inst = instance or build(cfg.benchmark)
    voc = inst.vocabulary
    oracle = GroundTruthOracle(inst.target)
    if examples is None:
        examples = inst.generate_examples(cfg.n_examples, cfg.min_hamming, cfg.seed)
    ex = passive.ExampleSet(tuple(examples))
    phase1 = passive.run_phase1(ex, voc)
    b_globals = list(phase1.globals_)
    b_fixed = list(phase1.fixed)

    use_flat = cfg.variant == "no_ml_priors"
    rcfg = cfg.refinement

    def prior_fn(c: Constraint) -> float:
        return ml_prior(prior_model, c, voc, ablation_flat=use_flat,
                        theta_min=rcfg.theta_min, theta_max=rcfg.theta_max)

    log: list = []
    stats = RefinementStats()
    q2 = 0
    if cfg.variant == "no_refine":
        accepted = list(b_globals)
    else:
        engine = RefinementEngine(
            voc, b_globals, oracle, rcfg, prior_fn,
            enable_svr=cfg.variant != "no_svr",
            decision_mode="one_shot" if cfg.variant == "no_bayes" else "bayes",
        )
        res = engine.run()
        accepted = list(res.accepted)
        stats = res.stats
        q2 = res.queries_used
        log.extend(res.log)

    ares = active.run_active(voc, accepted, b_fixed, oracle, seed=cfg.seed,
                             query_cap=cfg.phase3_query_cap,
                             time_limit=rcfg.solver_time_limit)
    log.extend(ares.log)
    learned_final = ConstraintNetwork(
        voc, tuple(accepted) + tuple(ares.learned_fixed))

    mseed = cfg.metric_seed if cfg.metric_seed is not None else cfg.seed + 999331
    sp = s_precision(learned_final, inst.target, cfg.n_samples,
                     cfg.min_hamming, mseed)
    sr = s_recall(learned_final, inst.target, cfg.n_samples,
                  cfg.min_hamming, mseed)
    return RunReport(
        benchmark=inst.name,
        variant=cfg.variant,
        n_examples=cfg.n_examples,
        seed=cfg.seed,
        s_precision=sp,
        s_recall=sr,
        bias_size=len(b_globals),
        learned_globals=len(accepted),
        learned_fixed=len(ares.learned_fixed),
        q2=q2,
        q3=ares.queries_used,
        q_total=q2 + ares.queries_used,
        wall_time=time.monotonic() - t0,
        refinement_stats=stats,
        collapsed=ares.collapsed,
        log=log,
    )


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

MAIN_HEADER = ["Prob.", "Alg.", "|B_globals|", "S-Prec.", "S-Rec.", "|C'_G|",
               "Q2", "Q3", "Q_total", "T (s)"]
STATS_HEADER = ["Benchmark", "Constr. Learned", "Subsets Gen.",
                "Subsets Accepted", "Subsets Rejected",
                "Avg. Queries per Accepted Subset"]


def render_main_csv(reports: Sequence[RunReport], aggregate: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(MAIN_HEADER)
    rows = [[r.benchmark, r.variant, r.bias_size, f"{r.s_precision:.0f}%",
             f"{r.s_recall:.0f}%", r.learned_globals, r.q2, r.q3, r.q_total,
             f"{r.wall_time:.1f}"] for r in reports]
    for row in rows:
        w.writerow(row)
    if aggregate and len(reports) > 1:
        n = len(reports)
        w.writerow([reports[0].benchmark, "mean", "",
                    f"{sum(r.s_precision for r in reports)/n:.1f}%",
                    f"{sum(r.s_recall for r in reports)/n:.1f}%",
                    f"{sum(r.learned_globals for r in reports)/n:.1f}",
                    f"{sum(r.q2 for r in reports)/n:.1f}",
                    f"{sum(r.q3 for r in reports)/n:.1f}",
                    f"{sum(r.q_total for r in reports)/n:.1f}",
                    f"{sum(r.wall_time for r in reports)/n:.1f}"])
    return buf.getvalue()


def render_stats_csv(reports: Sequence[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(STATS_HEADER)
    for r in reports:
        s = r.refinement_stats
        w.writerow([r.benchmark, s.constraints_learned, s.subsets_generated,
                    s.subsets_accepted, s.subsets_rejected,
                    f"{s.avg_queries_per_accepted_subset:.1f}"])
    return buf.getvalue()


def emit_report(reports: Sequence[RunReport], out_prefix: str,
                aggregate: bool = False) -> list[str]:
    """Write CSV and JSON renderings; returns the file paths."""
    paths = []
    main_csv = f"{out_prefix}_results.csv"
    with open(main_csv, "w") as f:
        f.write(render_main_csv(reports, aggregate=aggregate))
    paths.append(main_csv)
    stats_csv = f"{out_prefix}_refinement_stats.csv"
    with open(stats_csv, "w") as f:
        f.write(render_stats_csv(reports))
    paths.append(stats_csv)
    json_path = f"{out_prefix}_results.json"
    with open(json_path, "w") as f:
        json.dump([r.to_json() for r in reports], f, indent=2)
    paths.append(json_path)
    return paths
