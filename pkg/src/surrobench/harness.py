"""Experiment drivers: data-fit evaluation, leave-one-optimizer-out,
parameter-free and topology sweeps, the tabular-vs-surrogate smoothing
experiment, and optimizer benchmark suites.

Every driver is reproducible from (config, seed); run directories are named
by a hash of the canonical config JSON and all artifacts are written
atomically.  Leakage guards are part of the drivers themselves, not only of
the test suite.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import encoding, space
from .dataset import Dataset, SplitSpec, loo_partition, stratified_split
from .gbtree import BoostParams, fit_boosted
from .metrics import AllTied, kendall_tau, mae, r2, sparse_kendall_tau
from .optimizers import SurrogateObjective, Trajectory, run_optimizer, save_trajectory_csv
from .rng import substream
from .space import Genotype, Op
from .surrogate import SurrogateBenchmark, fit_members
from .synth import SyntheticOracle, evaluate_repeats


@dataclass
class ExperimentReport:
    name: str
    config: dict
    seeds: list[int]
    tables: dict
    csv_paths: list[str] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "config": self.config,
            "seeds": self.seeds,
            "tables": self.tables,
            "csv_paths": self.csv_paths,
        }


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:10]


def make_run_dir(out_root: str | Path, name: str, config: dict) -> Path:
    run_dir = Path(out_root) / f"{name}-{config_hash(config)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def write_text_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def save_report(report: ExperimentReport, run_dir: Path) -> Path:
    path = run_dir / "report.json"
    write_text_atomic(path, json.dumps(report.to_json_obj(), indent=2, sort_keys=True))
    return path


def _assert_no_shared_genotypes(parts: Sequence[Dataset]) -> None:
    seen: set[str] = set()
    for part in parts:
        keys = set(part.by_genotype)
        overlap = seen & keys
        assert not overlap, f"split leaks {len(overlap)} genotypes across sides"
        seen |= keys


def _safe_sparse_kt(y_true, y_pred) -> float | None:
    try:
        return sparse_kendall_tau(y_true, y_pred)
    except AllTied:
        return None


# --- data-fit evaluation ---------------------------------------------------------


def run_datafit_eval(
    ds: Dataset, boost: BoostParams, split: SplitSpec
) -> ExperimentReport:
    """Fit one boosted model on the stratified train split (validation split
    drives early stopping) and report R^2, Kendall tau and sparse Kendall tau
    on the validation and test splits."""
    train, val, test = stratified_split(ds, split)
    _assert_no_shared_genotypes([train, val, test])
    cfg = ds.cfg
    layout = encoding.layout_version(cfg)
    X_train = encoding.encode_one_hot_many(train.genotypes(), cfg)
    X_val = encoding.encode_one_hot_many(val.genotypes(), cfg)
    X_test = encoding.encode_one_hot_many(test.genotypes(), cfg)
    model = fit_boosted(
        X_train, train.val_acc(), X_val, val.val_acc(), boost,
        feature_layout_version=layout,
    )
    tables = {}
    for part_name, X, y in (("val", X_val, val.val_acc()), ("test", X_test, test.val_acc())):
        pred = model.predict(X)
        tables[part_name] = {
            "r2": r2(y, pred),
            "kendall_tau": kendall_tau(y, pred),
            "sparse_kendall_tau": _safe_sparse_kt(y, pred),
            "n": int(y.size),
        }
    return ExperimentReport(
        name="datafit",
        config={
            "boost": boost.__dict__,
            "split": {"fractions": list(split.fractions), "seed": split.seed},
            "n_records": len(ds),
        },
        seeds=[split.seed, boost.seed],
        tables=tables,
    )


# --- leave-one-optimizer-out ------------------------------------------------------


def run_loo_eval(
    ds: Dataset, boost: BoostParams, seed: int = 0
) -> ExperimentReport:
    """One row per optimizer tag: train on all other tags (stratified 0.9/0.1
    train/val split), evaluate R^2 and sparse Kendall tau on the left-out rows."""
    tags = sorted(ds.optimizers())
    if len(tags) < 2:
        raise ValueError("leave-one-optimizer-out needs at least 2 optimizer tags")
    cfg = ds.cfg
    layout = encoding.layout_version(cfg)
    rows = {}
    for tag in tags:
        train_val, held = loo_partition(ds, tag)
        held_keys = {(space.to_json(r.genotype), r.seed, r.optimizer) for r in held}
        train_keys = {(space.to_json(r.genotype), r.seed, r.optimizer) for r in train_val}
        assert not held_keys & train_keys, f"left-out rows of {tag} leak into training"
        assert all(r.optimizer != tag for r in train_val)
        train, val = stratified_split(train_val, SplitSpec((0.9, 0.1), seed=seed))
        model = fit_boosted(
            encoding.encode_one_hot_many(train.genotypes(), cfg),
            train.val_acc(),
            encoding.encode_one_hot_many(val.genotypes(), cfg),
            val.val_acc(),
            boost,
            feature_layout_version=layout,
        )
        pred = model.predict(encoding.encode_one_hot_many(held.genotypes(), cfg))
        y = held.val_acc()
        rows[tag] = {
            "r2": r2(y, pred),
            "sparse_kendall_tau": _safe_sparse_kt(y, pred),
            "n_held_out": len(held),
        }
    return ExperimentReport(
        name="loo",
        config={"boost": boost.__dict__, "tags": tags, "n_records": len(ds)},
        seeds=[seed, boost.seed],
        tables={"per_left_out": rows},
    )


# --- parameter-free operation sweep -----------------------------------------------


def run_paramfree_sweep(
    b: SurrogateBenchmark,
    test_genotypes: Sequence[Genotype],
    ratios: Sequence[float],
    op_kinds: Sequence[Op],
    rng: np.random.Generator,
    repeats: int = 4,
) -> ExperimentReport:
    """Predicted-error distributions after replacing a growing ratio of cell
    ops with one parameter-free op kind; repeated ``repeats`` times per ratio."""
    cfg = b.cfg
    rows = []
    perturbed: list[Genotype] = []
    for op_kind in op_kinds:
        for ratio in ratios:
            for rep in range(repeats):
                for gi, g in enumerate(test_genotypes):
                    rows.append((op_kind.value, float(ratio), rep, gi))
                    perturbed.append(
                        space.replace_parameter_free(g, rng, ratio, op_kind, cfg)
                    )
    X = encoding.encode_one_hot_many(perturbed, cfg)
    pred_err = 1.0 - b.member_predictions(X).mean(axis=1)

    table = [
        {"op": op, "ratio": ratio, "repeat": rep, "genotype_index": gi, "pred_error": float(e)}
        for (op, ratio, rep, gi), e in zip(rows, pred_err)
    ]
    medians: dict[str, dict[float, float]] = {}
    for op_kind in op_kinds:
        medians[op_kind.value] = {}
        for ratio in ratios:
            vals = [r["pred_error"] for r in table if r["op"] == op_kind.value and r["ratio"] == float(ratio)]
            medians[op_kind.value][float(ratio)] = float(np.median(vals))
    return ExperimentReport(
        name="paramfree-sweep",
        config={
            "ratios": [float(r) for r in ratios],
            "op_kinds": [o.value for o in op_kinds],
            "repeats": repeats,
            "n_genotypes": len(test_genotypes),
            "benchmark_version": b.version,
        },
        seeds=[],
        tables={"rows": table, "median_pred_error": medians},
    )


# --- cell-topology sweep -----------------------------------------------------------


def run_topology_sweep(
    b: SurrogateBenchmark,
    oracle: SyntheticOracle,
    rng: np.random.Generator,
    n_op_sets: int = 10,
) -> ExperimentReport:
    """Evaluate every cell topology under ``n_op_sets`` random op assignments,
    assign the same cell to both cell slots, and report sparse Kendall tau
    between predicted and true accuracy grouped by cell depth."""
    cfg = b.cfg
    topologies = list(space.enumerate_topologies(cfg))
    n_ops = len(cfg.ops)
    rows = []
    genotypes = []
    for s in range(n_op_sets):
        op_set = [cfg.ops[i] for i in rng.integers(n_ops, size=cfg.edges_per_cell)]
        for ti, topo in enumerate(topologies):
            nodes = []
            for k, (pa, pb) in enumerate(topo):
                nodes.append(((pa, op_set[2 * k]), (pb, op_set[2 * k + 1])))
            cell = space.canonicalize_cell(nodes)
            g = Genotype(cell, cell)
            genotypes.append(g)
            rows.append(
                {
                    "op_set": s,
                    "topology": ti,
                    "depth": space.depth(cell),
                    "truth_acc": oracle.truth(g),
                }
            )
    X = encoding.encode_one_hot_many(genotypes, cfg)
    pred = b.member_predictions(X).mean(axis=1)
    for row, p in zip(rows, pred):
        row["pred_acc"] = float(p)

    per_depth = {}
    for d in sorted({r["depth"] for r in rows}):
        sub = [r for r in rows if r["depth"] == d]
        skt = _safe_sparse_kt(
            [r["truth_acc"] for r in sub], [r["pred_acc"] for r in sub]
        )
        per_depth[d] = {"sparse_kendall_tau": skt, "n": len(sub)}
    return ExperimentReport(
        name="topology-sweep",
        config={"n_op_sets": n_op_sets, "n_topologies": len(topologies),
                "benchmark_version": b.version},
        seeds=[],
        tables={"rows": rows, "per_depth": per_depth},
    )


# --- smoothing experiment ------------------------------------------------------------


def run_smoothing_experiment(
    oracle: SyntheticOracle,
    n_seeds: int,
    boost: BoostParams,
    k: int,
    seed: int = 0,
    n_archs: int | None = None,
) -> ExperimentReport:
    """Tabular-vs-surrogate comparison on repeated noisy evaluations.

    Each architecture is evaluated ``n_seeds`` times.  For every rotation of
    the training seed, a K-member ensemble is fitted on that seed's values
    and both estimators are scored against the mean of the remaining seeds:
    the tabular estimate is the training value itself, the surrogate estimate
    is the ensemble mean.  With ``n_archs`` None the reduced space is
    enumerated exhaustively.
    """
    if n_seeds < 3:
        raise ValueError("need at least 3 seeds to rotate")
    cfg = oracle.cfg
    if n_archs is None:
        genotypes = list(space.enumerate_genotypes(cfg))
    else:
        rng = substream(seed, "smoothing-sample")
        seen = {}
        while len(seen) < n_archs:
            g = space.sample_uniform(rng, cfg)
            seen.setdefault(space.to_json(g), g)
        genotypes = list(seen.values())

    eval_rng = substream(seed, "smoothing-evals")
    Y = np.empty((len(genotypes), n_seeds))
    for j in range(n_seeds):
        for i, g in enumerate(genotypes):
            Y[i, j] = oracle.evaluate_noisy(g, eval_rng)

    X = encoding.encode_one_hot_many(genotypes, cfg)
    layout = encoding.layout_version(cfg)
    sigma = oracle.config.noise_std
    analytic_tabular = sigma * math.sqrt(1.0 + 1.0 / (n_seeds - 1)) * math.sqrt(2.0 / math.pi)

    rotations = []
    for s in range(n_seeds):
        others = [j for j in range(n_seeds) if j != s]
        gt = Y[:, others].mean(axis=1)
        members = fit_members(
            X, Y[:, s], replace(boost, seed=boost.seed + s), k, layout
        )
        pred = np.mean([m.predict(X) for m in members], axis=0)
        rotations.append(
            {
                "train_seed": s + 1,
                "mae_tabular": mae(gt, Y[:, s]),
                "mae_surrogate": mae(gt, pred),
            }
        )
    return ExperimentReport(
        name="smoothing",
        config={
            "boost": boost.__dict__,
            "k": k,
            "n_seeds": n_seeds,
            "n_archs": len(genotypes),
            "noise_std": sigma,
            "oracle": oracle.config.to_json_obj(),
        },
        seeds=[seed, boost.seed],
        tables={
            "rotations": rotations,
            "mae_tabular": float(np.mean([r["mae_tabular"] for r in rotations])),
            "mae_surrogate": float(np.mean([r["mae_surrogate"] for r in rotations])),
            "analytic_tabular_mae": analytic_tabular,
        },
    )


# --- optimizer benchmark suite ---------------------------------------------------------


def _run_one_benchmark(args) -> tuple[str, int, Trajectory]:
    b, tag, repeat, budget, seed, overrides = args
    obj = SurrogateObjective(b, noise_rng=substream(seed, "noise", tag, repeat))
    opt_rng = substream(seed, "opt", tag)  # identical init across repeats
    traj = run_optimizer(tag, obj, budget, opt_rng, space_cfg=b.cfg,
                         cfg=overrides.get(tag) if overrides else None)
    return tag, repeat, traj


def run_benchmark_suite(
    b: SurrogateBenchmark,
    optimizer_tags: Sequence[str],
    budget: int,
    seed: int = 0,
    n_repeats: int = 5,
    out_dir: str | Path | None = None,
    overrides: dict | None = None,
    jobs: int = 1,
) -> tuple[dict[str, list[Trajectory]], ExperimentReport]:
    """Run each optimizer against the noisy surrogate ``n_repeats`` times.

    The optimizer's decision stream is identical across repeats; only the
    surrogate's noise stream varies, so repeats share their initialization.
    Per-run trajectory CSVs and an aggregate incumbent table are written when
    ``out_dir`` is given.
    """
    units = [
        (b, tag, r, budget, seed, overrides)
        for tag in optimizer_tags
        for r in range(n_repeats)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one_benchmark, units))
    else:
        results = [_run_one_benchmark(u) for u in units]
    trajectories: dict[str, list[Trajectory]] = {t: [None] * n_repeats for t in optimizer_tags}
    for tag, r, traj in results:
        trajectories[tag][r] = traj

    csv_paths = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for tag in optimizer_tags:
            for r, traj in enumerate(trajectories[tag]):
                path = out_dir / f"traj_{tag}_{r}.csv"
                save_trajectory_csv(traj, path)
                csv_paths.append(str(path))
        agg_path = out_dir / "incumbent_aggregate.csv"
        write_text_atomic(agg_path, _aggregate_csv(trajectories))
        csv_paths.append(str(agg_path))

    final = {
        tag: {
            "median_final_incumbent": float(
                np.median([t.final_incumbent for t in trajectories[tag]])
            ),
            "mean_final_incumbent": float(
                np.mean([t.final_incumbent for t in trajectories[tag]])
            ),
        }
        for tag in optimizer_tags
    }
    report = ExperimentReport(
        name="benchmark-suite",
        config={
            "optimizers": list(optimizer_tags),
            "budget": budget,
            "n_repeats": n_repeats,
            "benchmark_version": b.version,
        },
        seeds=[seed],
        tables={"final_incumbent": final},
        csv_paths=csv_paths,
    )
    return trajectories, report


def _aggregate_csv(trajectories: dict[str, list[Trajectory]]) -> str:
    """Median/IQR (robust to heavy tails) plus mean incumbent per eval index."""
    lines = [
        "optimizer,eval_index,median_sim_time_s,median_incumbent,"
        "q25_incumbent,q75_incumbent,mean_incumbent"
    ]
    for tag, trajs in trajectories.items():
        inc = np.stack([t.incumbent_curve() for t in trajs])
        times = np.stack([t.sim_times() for t in trajs])
        med = np.median(inc, axis=0)
        q25 = np.quantile(inc, 0.25, axis=0)
        q75 = np.quantile(inc, 0.75, axis=0)
        mean = inc.mean(axis=0)
        tmed = np.median(times, axis=0)
        for i in range(inc.shape[1]):
            lines.append(
                f"{tag},{i},{tmed[i]!r},{med[i]!r},{q25[i]!r},{q75[i]!r},{mean[i]!r}"
            )
    return "\n".join(lines) + "\n"
