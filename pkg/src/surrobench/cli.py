"""Command-line front end.

Every subcommand honors --seed: all randomness is derived from it through
named substreams, so identical invocations produce identical artifacts.
Experiment outputs land under a run directory named by the config hash;
SURROBENCH_OUT overrides the default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from . import harness, space, surrogate, synth
from .gbtree import BoostParams, lgb_profile, xgb_profile
from .rng import substream
from .space import Op, SpaceConfig


def _space_config(args) -> SpaceConfig:
    ops = tuple(Op(tag) for tag in args.ops.split(",")) if args.ops else space.ALL_OPS
    return SpaceConfig(n_intermediate=args.n_intermediate, ops=ops)


def _add_space_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-intermediate", type=int, default=4)
    p.add_argument("--ops", type=str, default="", help="comma-separated op tags (default: all 7)")


def _add_boost_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=["lgb", "xgb"], default="lgb")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--early-stopping", type=int, default=None)


def _boost_params(args, seed: int) -> BoostParams:
    params = lgb_profile() if args.profile == "lgb" else xgb_profile()
    overrides = {"seed": seed}
    if args.rounds is not None:
        overrides["n_rounds"] = args.rounds
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    if args.early_stopping is not None:
        overrides["early_stopping_rounds"] = args.early_stopping
    return replace(params, **overrides)


def _out_root(args) -> Path:
    return Path(args.out or os.environ.get("SURROBENCH_OUT", "runs"))


def _finish_run(args, name: str, report: harness.ExperimentReport) -> Path:
    run_dir = harness.make_run_dir(_out_root(args), name, report.config)
    harness.save_report(report, run_dir)
    harness.write_text_atomic(
        run_dir / "config.json", json.dumps(report.config, indent=2, sort_keys=True)
    )
    print(run_dir)
    return run_dir


def cmd_count_space(args) -> int:
    cfg = _space_config(args)
    print(f"topologies_per_cell {space.count_topologies(cfg)}")
    print(f"genotypes_per_cell {space.count_cell(cfg)}")
    print(f"genotypes_total {space.count_space(cfg)}")
    return 0


def cmd_synth_gen(args) -> int:
    cfg = _space_config(args)
    oracle = synth.SyntheticOracle(
        synth.OracleConfig(seed=args.oracle_seed, noise_std=args.noise_std), cfg
    )
    mix = {}
    for part in args.mix.split(","):
        tag, _, count = part.partition("=")
        mix[tag.strip()] = int(count)
    ds = synth.generate_dataset(oracle, mix, rng_seed=args.seed)
    ds_mod.save_jsonl(ds, args.out_file)
    oracle_path = Path(args.out_file).with_suffix(".oracle.json")
    harness.write_text_atomic(
        oracle_path, json.dumps(oracle.config.to_json_obj(), indent=2, sort_keys=True)
    )
    print(f"wrote {len(ds)} records to {args.out_file}")
    print(f"oracle config: {oracle_path}")
    return 0


def cmd_fit(args) -> int:
    cfg = _space_config(args)
    ds = ds_mod.load_jsonl(args.data, cfg)
    boost = _boost_params(args, args.seed)
    bench = surrogate.fit_benchmark(ds, boost, k=args.k, version=args.version)
    surrogate.save(bench, args.out_file)
    print(f"fitted {bench.n_members}-member benchmark on {len(ds)} records -> {args.out_file}")
    return 0


def cmd_eval(args) -> int:
    cfg = _space_config(args)
    ds = ds_mod.load_jsonl(args.data, cfg)
    report = harness.run_datafit_eval(
        ds, _boost_params(args, args.seed), ds_mod.SplitSpec(seed=args.seed)
    )
    _finish_run(args, "datafit", report)
    return 0


def cmd_loo(args) -> int:
    cfg = _space_config(args)
    ds = ds_mod.load_jsonl(args.data, cfg)
    report = harness.run_loo_eval(ds, _boost_params(args, args.seed), seed=args.seed)
    _finish_run(args, "loo", report)
    return 0


def cmd_sweep_paramfree(args) -> int:
    bench = surrogate.load(args.model)
    rng = substream(args.seed, "paramfree")
    if args.data:
        ds = ds_mod.load_jsonl(args.data, bench.cfg)
        genotypes = ds.genotypes()[: args.n_genotypes]
    else:
        genotypes = [
            space.sample_uniform(rng, bench.cfg) for _ in range(args.n_genotypes)
        ]
    ratios = [float(r) for r in args.ratios.split(",")]
    op_kinds = [Op(tag) for tag in args.op_kinds.split(",")]
    report = harness.run_paramfree_sweep(
        bench, genotypes, ratios, op_kinds, rng, repeats=args.repeats
    )
    run_dir = _finish_run(args, "paramfree", report)
    rows = report.tables["rows"]
    csv = "op,ratio,repeat,genotype_index,pred_error\n" + "\n".join(
        f'{r["op"]},{r["ratio"]!r},{r["repeat"]},{r["genotype_index"]},{r["pred_error"]!r}'
        for r in rows
    )
    harness.write_text_atomic(run_dir / "sweep.csv", csv + "\n")
    return 0


def cmd_sweep_topology(args) -> int:
    bench = surrogate.load(args.model)
    oracle = synth.SyntheticOracle(
        synth.OracleConfig(seed=args.oracle_seed, noise_std=args.noise_std), bench.cfg
    )
    report = harness.run_topology_sweep(
        bench, oracle, substream(args.seed, "topology"), n_op_sets=args.n_op_sets
    )
    _finish_run(args, "topology", report)
    return 0


def cmd_smoothing(args) -> int:
    cfg = _space_config(args)
    oracle = synth.SyntheticOracle(
        synth.OracleConfig(seed=args.oracle_seed, noise_std=args.noise_std), cfg
    )
    report = harness.run_smoothing_experiment(
        oracle,
        n_seeds=args.n_seeds,
        boost=_boost_params(args, args.seed),
        k=args.k,
        seed=args.seed,
        n_archs=args.n_archs,
    )
    _finish_run(args, "smoothing", report)
    return 0


def cmd_run_opt(args) -> int:
    bench = surrogate.load(args.model)
    tags = [t.strip() for t in args.optimizers.split(",")]
    config = {
        "optimizers": tags,
        "budget": args.budget,
        "n_repeats": args.repeats,
        "seed": args.seed,
        "benchmark_version": bench.version,
    }
    run_dir = harness.make_run_dir(_out_root(args), "run-opt", config)
    _, report = harness.run_benchmark_suite(
        bench,
        tags,
        budget=args.budget,
        seed=args.seed,
        n_repeats=args.repeats,
        out_dir=run_dir,
        jobs=args.jobs,
    )
    harness.save_report(report, run_dir)
    harness.write_text_atomic(
        run_dir / "config.json", json.dumps(config, indent=2, sort_keys=True)
    )
    print(run_dir)
    return 0


def cmd_query(args) -> int:
    bench = surrogate.load(args.model)
    g = space.from_json(Path(args.genotype).read_text(), bench.cfg)
    noise = args.noise.lower() in ("1", "true", "yes")
    rng = substream(args.seed, "query") if noise else None
    res = bench.query(g, with_noise=noise, rng=rng)
    print(
        json.dumps(
            {
                "mean_acc": res.mean_acc,
                "std_acc": res.std_acc,
                "sample_acc": res.sample_acc,
                "runtime_s": res.runtime_s,
                "benchmark_version": bench.version,
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surrobench",
        description="Surrogate benchmark engine for cell-based architecture search",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=str, default=None,
                       help="output root (default: $SURROBENCH_OUT or ./runs)")
        p.add_argument("--jobs", type=int, default=1)
        return p

    p = common(sub.add_parser("count-space", help="print exact space counts"))
    _add_space_flags(p)
    p.set_defaults(func=cmd_count_space)

    p = common(sub.add_parser("synth-gen", help="generate a synthetic dataset"))
    _add_space_flags(p)
    p.add_argument("--oracle-seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=1.7e-3)
    p.add_argument("--mix", type=str, default="RS=2000",
                   help="comma list of TAG=count (RS, RE, DE, TPE, BANANAS, LS)")
    p.add_argument("--out-file", type=str, required=True)
    p.set_defaults(func=cmd_synth_gen)

    p = common(sub.add_parser("fit", help="fit a surrogate benchmark"))
    _add_space_flags(p)
    _add_boost_flags(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--version", type=str, default=surrogate.DEFAULT_VERSION)
    p.add_argument("--out-file", type=str, required=True)
    p.set_defaults(func=cmd_fit)

    p = common(sub.add_parser("eval", help="data-fit metrics on a stratified split"))
    _add_space_flags(p)
    _add_boost_flags(p)
    p.add_argument("--data", type=str, required=True)
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("loo", help="leave-one-optimizer-out evaluation"))
    _add_space_flags(p)
    _add_boost_flags(p)
    p.add_argument("--data", type=str, required=True)
    p.set_defaults(func=cmd_loo)

    p = common(sub.add_parser("sweep-paramfree", help="parameter-free op sweep"))
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--n-genotypes", type=int, default=200)
    p.add_argument("--ratios", type=str, default="0.0,0.25,0.5,0.75,1.0")
    p.add_argument("--op-kinds", type=str,
                   default="max_pool_3x3,avg_pool_3x3,skip_connect")
    p.add_argument("--repeats", type=int, default=4)
    p.set_defaults(func=cmd_sweep_paramfree)

    p = common(sub.add_parser("sweep-topology", help="cell-topology sweep"))
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--oracle-seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=1.7e-3)
    p.add_argument("--n-op-sets", type=int, default=10)
    p.set_defaults(func=cmd_sweep_topology)

    p = common(sub.add_parser("smoothing", help="tabular-vs-surrogate smoothing study"))
    _add_space_flags(p)
    _add_boost_flags(p)
    p.add_argument("--oracle-seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=4.6e-3)
    p.add_argument("--n-seeds", type=int, default=3)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n-archs", type=int, default=None,
                   help="sample size (default: exhaustive enumeration)")
    p.set_defaults(func=cmd_smoothing)

    p = common(sub.add_parser("run-opt", help="optimizer runs on a benchmark"))
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--optimizers", type=str, default="RS,RE")
    p.add_argument("--budget", type=int, default=500)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_run_opt)

    p = common(sub.add_parser("query", help="query a benchmark for one genotype"))
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--genotype", type=str, required=True,
                   help="path to a genotype JSON file")
    p.add_argument("--noise", type=str, default="false")
    p.set_defaults(func=cmd_query)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
