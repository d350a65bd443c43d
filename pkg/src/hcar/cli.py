"""Command-line interface: experiment runs, prior-model training, log replay,
and the interactive session service."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import benchmarks, prior, replay
from .experiment import ExperimentConfig, RunReport, emit_report, run_experiment
from .refine import RefinementConfig

EXIT_OK = 0
EXIT_INCOMPLETE = 2


def _add_run(sub):
    p = sub.add_parser("run", help="run an acquisition experiment")
    p.add_argument("--benchmark", default=None,
                   help=f"one of {', '.join(benchmarks.BENCHMARK_NAMES)}")
    p.add_argument("--problem", default=None,
                   help="path to a benchmark JSON file (alternative to --benchmark)")
    p.add_argument("--examples", type=int, default=5)
    p.add_argument("--variant", default="hcar",
                   choices=("hcar", "no_refine", "no_ml_priors", "no_svr", "no_bayes"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=1500)
    p.add_argument("--theta-min", type=float, default=0.1)
    p.add_argument("--theta-max", type=float, default=0.9)
    p.add_argument("--alpha", type=float, default=0.42)
    p.add_argument("--dmax", type=int, default=3)
    p.add_argument("--time-max", type=float, default=600.0)
    p.add_argument("--solver-time-limit", type=float, default=5.0)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--min-hamming", type=int, default=5)
    p.add_argument("--prior-model", default=None,
                   help="path to a trained prior model (default: bundled model)")
    p.add_argument("--out", default="hcar_run",
                   help="output prefix for CSV/JSON reports and the event log")


def _add_train(sub):
    p = sub.add_parser("train-prior", help="train the prior confidence model")
    p.add_argument("--corpus", required=True,
                   help="directory of benchmark JSON files")
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--write-default", action="store_true",
                   help="populate the corpus directory with the built-in "
                        "reduced corpus before training")


def _add_replay(sub):
    p = sub.add_parser("replay", help="verify and summarize an event log")
    p.add_argument("--log", required=True, help="JSON-lines event log")


def _add_serve(sub):
    p = sub.add_parser("serve", help="start the interactive session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8601)
    p.add_argument("--prior-model", default=None)


def bundled_model_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "prior_model.json")


def load_prior_model(path=None):
    path = path or bundled_model_path()
    if os.path.exists(path):
        return prior.PriorModel.load(path)
    return None


def cmd_run(args) -> int:
    if bool(args.benchmark) == bool(args.problem):
        print("exactly one of --benchmark / --problem is required", file=sys.stderr)
        return EXIT_INCOMPLETE
    examples = None
    if args.problem:
        instance, examples = benchmarks.load_problem(args.problem)
        examples = examples[:args.examples] or None
    else:
        instance = benchmarks.build(args.benchmark)
    rcfg = RefinementConfig(
        theta_min=args.theta_min, theta_max=args.theta_max, alpha=args.alpha,
        budget_total=args.budget, time_max=args.time_max,
        solver_time_limit=args.solver_time_limit, d_max=args.dmax,
        seed=args.seed)
    cfg = ExperimentConfig(
        benchmark=instance.name, n_examples=args.examples, variant=args.variant,
        refinement=rcfg, n_samples=args.samples, min_hamming=args.min_hamming,
        seed=args.seed)
    model = load_prior_model(args.prior_model)
    report = run_experiment(cfg, prior_model=model, instance=instance,
                            examples=examples)
    paths = emit_report([report], args.out)
    log_path = f"{args.out}_events.jsonl"
    with open(log_path, "w") as f:
        for e in report.log:
            f.write(json.dumps(e) + "\n")
    paths.append(log_path)
    print(f"benchmark={report.benchmark} variant={report.variant} "
          f"S-Prec={report.s_precision:.1f}% S-Rec={report.s_recall:.1f}% "
          f"|B_globals|={report.bias_size} |C'_G|={report.learned_globals} "
          f"Q2={report.q2} Q3={report.q3} Q_total={report.q_total} "
          f"T={report.wall_time:.1f}s")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_INCOMPLETE if report.collapsed else EXIT_OK


def cmd_train_prior(args) -> int:
    os.makedirs(args.corpus, exist_ok=True)
    if args.write_default:
        for prob in prior.default_corpus():
            inst = benchmarks.BenchmarkInstance(
                prob.name, prob.vocabulary, prob.target, "list")
            benchmarks.save_problem(inst, os.path.join(args.corpus,
                                                       f"{prob.name}.json"))
    files = sorted(f for f in os.listdir(args.corpus) if f.endswith(".json"))
    if not files:
        print(f"no corpus files in {args.corpus} (use --write-default)",
              file=sys.stderr)
        return EXIT_INCOMPLETE
    corpus = []
    for f in files:
        inst, _ = benchmarks.load_problem(os.path.join(args.corpus, f))
        corpus.append(prior.CorpusProblem(inst.name, inst.vocabulary, inst.target))
    data = prior.generate_training_data(corpus, seed=args.seed)
    model = prior.train(data, seed=args.seed)
    model.save(args.out)
    meta = model.metadata
    print(f"trained on {meta['n_train']} instances "
          f"(corpus {meta['corpus_hash']}, feature v{meta['feature_version']}); "
          f"holdout accuracy {meta.get('holdout_accuracy', float('nan')):.3f}, "
          f"AUC {meta.get('holdout_auc', float('nan')):.3f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    res = replay.replay_file(args.log)
    print(f"events={res.events} phase2-queries={res.queries} "
          f"accepted={len(res.accepted)} rejected={res.rejected}")
    if res.conservation_ok:
        print("budget conservation: OK")
        return EXIT_OK
    print("budget conservation: VIOLATED")
    for v in res.violations:
        print(f"  {v}")
    return EXIT_INCOMPLETE


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(prior_model=load_prior_model(args.prior_model))
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hcar",
        description="Constraint acquisition with query-driven refinement")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_train(sub)
    _add_replay(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "train-prior":
        return cmd_train_prior(args)
    if args.command == "replay":
        return cmd_replay(args)
    if args.command == "serve":
        return cmd_serve(args)
    return EXIT_INCOMPLETE


if __name__ == "__main__":
    sys.exit(main())
