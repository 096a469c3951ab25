"""Discrete architecture optimizers over an abstract objective.

Every optimizer consumes an :class:`Objective` (the noisy synthetic oracle or
a surrogate benchmark query) and emits a :class:`Trajectory` whose length
equals the evaluation budget, with simulated wallclock accumulated from the
per-evaluation runtimes.  Identical (seed, objective) pairs reproduce the
trajectory exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from . import encoding, space
from .gbtree import BoostParams, fit_boosted
from .space import DEFAULT_CONFIG, Genotype, SpaceConfig


class Objective(Protocol):
    """Evaluation backend: returns (validation error, runtime in seconds)."""

    mode: str

    def evaluate(
        self, g: Genotype, rng: np.random.Generator | None = None
    ) -> tuple[float, float]: ...


class OracleObjective:
    """Noisy synthetic-oracle objective; owns its noise stream."""

    mode = "oracle"

    def __init__(self, oracle, noise_rng: np.random.Generator):
        self.oracle = oracle
        self.noise_rng = noise_rng

    def evaluate(self, g, rng=None):
        acc = self.oracle.evaluate_noisy(g, self.noise_rng)
        return 1.0 - acc, self.oracle.runtime_truth(g)


class SurrogateObjective:
    """Benchmark-backed objective, either sampling the predictive distribution
    (surrogate-noisy) or returning the ensemble mean (surrogate-mean)."""

    def __init__(self, benchmark, noise_rng: np.random.Generator | None = None):
        self.benchmark = benchmark
        self.noise_rng = noise_rng
        self.mode = "surrogate-noisy" if noise_rng is not None else "surrogate-mean"

    def evaluate(self, g, rng=None):
        noisy = self.noise_rng is not None
        res = self.benchmark.query(g, with_noise=noisy, rng=self.noise_rng)
        acc = res.sample_acc if noisy else res.mean_acc
        return 1.0 - acc, res.runtime_s


@dataclass(frozen=True)
class TrajectoryEvent:
    eval_index: int
    sim_time_s: float
    genotype: Genotype
    val_error: float
    incumbent_error: float
    runtime_s: float


@dataclass(frozen=True)
class Trajectory:
    optimizer: str
    events: tuple[TrajectoryEvent, ...]

    def __len__(self) -> int:
        return len(self.events)

    @property
    def final_incumbent(self) -> float:
        return self.events[-1].incumbent_error

    def incumbent_curve(self) -> np.ndarray:
        return np.array([e.incumbent_error for e in self.events])

    def sim_times(self) -> np.ndarray:
        return np.array([e.sim_time_s for e in self.events])


def save_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    """One row per evaluation: eval_index, sim_time_s, val_error,
    incumbent_error, genotype_json."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        fh.write("eval_index,sim_time_s,val_error,incumbent_error,genotype_json\n")
        for e in traj.events:
            fh.write(
                f"{e.eval_index},{e.sim_time_s!r},{e.val_error!r},"
                f'{e.incumbent_error!r},"{space.to_json(e.genotype)}"\n'
            )
    tmp.replace(path)


class _Recorder:
    """Accumulates the trajectory while enforcing the evaluation budget."""

    def __init__(self, obj: Objective, budget: int, name: str):
        if budget < 1:
            raise ValueError(f"budget must be >= 1, got {budget}")
        self.obj = obj
        self.budget = budget
        self.name = name
        self.events: list[TrajectoryEvent] = []
        self.sim_time = 0.0
        self.best = math.inf

    @property
    def remaining(self) -> int:
        return self.budget - len(self.events)

    def evaluate(self, g: Genotype) -> float:
        err, runtime = self.obj.evaluate(g)
        self.sim_time += runtime
        self.best = min(self.best, err)
        self.events.append(
            TrajectoryEvent(
                eval_index=len(self.events),
                sim_time_s=self.sim_time,
                genotype=g,
                val_error=err,
                incumbent_error=self.best,
                runtime_s=runtime,
            )
        )
        return err

    def trajectory(self) -> Trajectory:
        return Trajectory(self.name, tuple(self.events))


# --- random search -------------------------------------------------------------


def run_rs(
    obj: Objective,
    budget: int,
    rng: np.random.Generator,
    space_cfg: SpaceConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Uniform random sampling."""
    rec = _Recorder(obj, budget, "RS")
    while rec.remaining:
        rec.evaluate(space.sample_uniform(rng, space_cfg))
    return rec.trajectory()


# --- regularized evolution -------------------------------------------------------


@dataclass(frozen=True)
class REConfig:
    budget: int
    init_pop: int = 100
    sample_size: int = 100


def run_re(
    obj: Objective,
    cfg: REConfig,
    rng: np.random.Generator,
    space_cfg: SpaceConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Aging evolution: random init population, then repeatedly sample a
    tournament, mutate its best member, add the child and evict the oldest."""
    if cfg.init_pop > cfg.budget:
        raise ValueError("init_pop must not exceed the budget")
    rec = _Recorder(obj, cfg.budget, "RE")
    population: list[tuple[Genotype, float]] = []
    while rec.remaining and len(population) < cfg.init_pop:
        g = space.sample_uniform(rng, space_cfg)
        population.append((g, rec.evaluate(g)))
    while rec.remaining:
        k = min(cfg.sample_size, len(population))
        idx = rng.choice(len(population), size=k, replace=False)
        parent = min((population[i] for i in idx), key=lambda t: t[1])[0]
        child = space.mutate(parent, rng, space_cfg)
        population.append((child, rec.evaluate(child)))
        population.pop(0)
    return rec.trajectory()


# --- differential evolution ------------------------------------------------------


@dataclass(frozen=True)
class DEConfig:
    budget: int
    pop: int = 100
    f: float = 0.5
    cr: float = 0.5


def run_de(
    obj: Objective,
    cfg: DEConfig,
    rng: np.random.Generator,
    space_cfg: SpaceConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """rand/1/bin differential evolution on the unit-cube encoding.

    Mutant components outside [0, 1) are uniformly resampled before the
    binomial crossover; children replace their parent when not worse.
    """
    if cfg.budget < cfg.pop:
        raise ValueError("budget must cover at least the initial population")
    rec = _Recorder(obj, cfg.budget, "DE")
    dims = len(encoding.layout_cardinalities(space_cfg))
    pop_x = rng.random((cfg.pop, dims))
    pop_err = np.empty(cfg.pop)
    for i in range(cfg.pop):
        pop_err[i] = rec.evaluate(encoding.from_unit(pop_x[i], space_cfg))
    while rec.remaining:
        for i in range(cfg.pop):
            if not rec.remaining:
                break
            others = [j for j in range(cfg.pop) if j != i]
            a, b, c = rng.choice(others, size=3, replace=False)
            v = pop_x[a] + cfg.f * (pop_x[b] - pop_x[c])
            bad = (v < 0.0) | (v >= 1.0)
            if bad.any():
                v[bad] = rng.random(int(bad.sum()))
            cross = rng.random(dims) < cfg.cr
            u = np.where(cross, v, pop_x[i])
            err = rec.evaluate(encoding.from_unit(u, space_cfg))
            if err <= pop_err[i]:
                pop_x[i], pop_err[i] = u, err
    return rec.trajectory()


# --- tree-structured density-ratio optimizer --------------------------------------


@dataclass(frozen=True)
class TPEConfig:
    budget: int
    gamma: float = 0.15
    n_candidates: int = 64
    n_init: int = 20


def run_tpe(
    obj: Objective,
    cfg: TPEConfig,
    rng: np.random.Generator,
    space_cfg: SpaceConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Density-ratio optimization with per-dimension categorical estimators.

    The top ``gamma`` fraction of observations forms the "good" model l(x),
    the rest g(x); both use add-one smoothed category frequencies.  Each step
    draws ``n_candidates`` samples from l and evaluates the maximizer of
    l(x)/g(x).
    """
    if cfg.budget < cfg.n_init:
        raise ValueError("budget must cover the initial design")
    rec = _Recorder(obj, cfg.budget, "TPE")
    cards = encoding.layout_cardinalities(space_cfg)
    observed: list[tuple[tuple[int, ...], float]] = []

    while rec.remaining:
        if len(observed) < cfg.n_init:
            g = space.sample_uniform(rng, space_cfg)
            err = rec.evaluate(g)
            observed.append((encoding.to_categorical(g, space_cfg).values, err))
            continue
        order = sorted(range(len(observed)), key=lambda i: observed[i][1])
        n_good = max(1, math.ceil(cfg.gamma * len(observed)))
        good = np.array([observed[i][0] for i in order[:n_good]])
        rest_idx = order[n_good:]
        rest = np.array([observed[i][0] for i in rest_idx]) if rest_idx else None

        cand = np.empty((cfg.n_candidates, len(cards)), dtype=np.int64)
        score = np.zeros(cfg.n_candidates)
        for d, card in enumerate(cards):
            cg = np.bincount(good[:, d], minlength=card).astype(np.float64)
            pl = (cg + 1.0) / (len(good) + card)
            if rest is not None:
                cr = np.bincount(rest[:, d], minlength=card).astype(np.float64)
                pg = (cr + 1.0) / (len(rest) + card)
            else:
                pg = np.full(card, 1.0 / card)
            cand[:, d] = rng.choice(card, size=cfg.n_candidates, p=pl / pl.sum())
            score += np.log(pl[cand[:, d]]) - np.log(pg[cand[:, d]])
        best = cand[int(np.argmax(score))]
        g = encoding.from_categorical(
            encoding.CategoricalVector(tuple(zip(cards, best.tolist()))), space_cfg
        )
        err = rec.evaluate(g)
        observed.append((tuple(best.tolist()), err))
    return rec.trajectory()


def tpe_acquisition_ratios(
    observations: list[tuple[tuple[int, ...], float]],
    candidates: np.ndarray,
    cards: tuple[int, ...],
    gamma: float = 0.15,
) -> np.ndarray:
    """log l(x) - log g(x) for given candidates; exposed for estimator tests."""
    order = sorted(range(len(observations)), key=lambda i: observations[i][1])
    n_good = max(1, math.ceil(gamma * len(observations)))
    good = np.array([observations[i][0] for i in order[:n_good]])
    rest = np.array([observations[i][0] for i in order[n_good:]])
    score = np.zeros(len(candidates))
    for d, card in enumerate(cards):
        cg = np.bincount(good[:, d], minlength=card).astype(np.float64)
        pl = (cg + 1.0) / (len(good) + card)
        if rest.size:
            cr = np.bincount(rest[:, d], minlength=card).astype(np.float64)
            pg = (cr + 1.0) / (len(rest) + card)
        else:
            pg = np.full(card, 1.0 / card)
        score += np.log(pl[candidates[:, d]]) - np.log(pg[candidates[:, d]])
    return score


# --- path-encoding ensemble optimizer ----------------------------------------------


def _default_predictor_params() -> BoostParams:
    return BoostParams(
        n_rounds=30,
        learning_rate=0.15,
        max_depth=6,
        max_leaves=16,
        max_bin=8,
        feature_fraction=0.25,
        min_child_weight=1.0,
        lambda_l1=0.0,
        lambda_l2=1.0,
        early_stopping_rounds=30,
        seed=0,
    )


@dataclass(frozen=True)
class BananasConfig:
    budget: int
    n_init: int = 100
    ensemble_size: int = 3
    n_mutation_candidates: int = 100
    top_k: int = 10
    batch_size: int = 50
    predictor: BoostParams = field(default_factory=_default_predictor_params)


def run_bananas_lite(
    obj: Objective,
    cfg: BananasConfig,
    rng: np.random.Generator,
    space_cfg: SpaceConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Path-encoding ensemble optimizer with mutation-based acquisition.

    A small ensemble of boosted-tree regressors is fitted on the path
    encodings of all observations; candidates are mutations of the current
    top architectures, scored by Thompson sampling (one randomly chosen
    member per candidate), and the best predicted ``batch_size`` candidates
    are evaluated between refits.
    """
    if cfg.budget < cfg.n_init:
        raise ValueError("budget must cover the initial design")
    rec = _Recorder(obj, cfg.budget, "BANANAS")
    archs: list[Genotype] = []
    feats: list[frozenset[int]] = []
    errs: list[float] = []

    def observe(g: Genotype) -> None:
        errs.append(rec.evaluate(g))
        archs.append(g)
        feats.append(encoding.to_path(g, space_cfg).active)

    while rec.remaining and len(archs) < cfg.n_init:
        observe(space.sample_uniform(rng, space_cfg))

    refit_idx = 0
    while rec.remaining:
        # dense projection onto the union of active path coordinates
        cols = sorted(set().union(*feats))
        col_of = {c: j for j, c in enumerate(cols)}
        X = np.zeros((len(archs), len(cols)))
        for i, f in enumerate(feats):
            for c in f:
                X[i, col_of[c]] = 1.0
        y = np.asarray(errs)
        members = [
            fit_boosted(
                X, y, None, None,
                replace(cfg.predictor, seed=cfg.predictor.seed + 31 * refit_idx + m),
            )
            for m in range(cfg.ensemble_size)
        ]
        refit_idx += 1

        top = np.argsort(y)[: cfg.top_k]
        candidates = []
        for j in range(cfg.n_mutation_candidates):
            parent = archs[top[j % len(top)]]
            candidates.append(space.mutate(parent, rng, space_cfg))
        Xc = np.zeros((len(candidates), len(cols)))
        for i, g in enumerate(candidates):
            for c in encoding.to_path(g, space_cfg).active:
                j = col_of.get(c)
                if j is not None:
                    Xc[i, j] = 1.0
        member_preds = np.stack([m.predict(Xc) for m in members], axis=1)
        pick = rng.integers(cfg.ensemble_size, size=len(candidates))
        scores = member_preds[np.arange(len(candidates)), pick]
        order = np.argsort(scores, kind="stable")
        for i in order[: min(cfg.batch_size, rec.remaining)]:
            observe(candidates[int(i)])
    return rec.trajectory()


# --- local search -------------------------------------------------------------------


@dataclass(frozen=True)
class LSConfig:
    budget: int
    first_improvement: bool = False


def neighborhood(g: Genotype, cfg: SpaceConfig = DEFAULT_CONFIG) -> list[Genotype]:
    """All single-edit neighbors: one op change or one parent change."""
    out = []
    for ci, cell in enumerate(g.cells):
        for ni, node in enumerate(cell):
            for slot, (parent, op) in enumerate(node):
                other_parent = node[1 - slot][0]
                for new_op in cfg.ops:
                    if new_op is op:
                        continue
                    new_node = list(node)
                    new_node[slot] = (parent, new_op)
                    out.append(_replace_node(g, ci, ni, new_node))
                for new_parent in cfg.admissible_parents(ni + 1):
                    if new_parent in (parent, other_parent):
                        continue
                    new_node = list(node)
                    new_node[slot] = (new_parent, op)
                    out.append(_replace_node(g, ci, ni, new_node))
    return out


def _replace_node(g: Genotype, cell_idx: int, node_idx: int, node) -> Genotype:
    cells = list(g.cells)
    cell = cells[cell_idx]
    new_cell = (
        cell[:node_idx]
        + (tuple(sorted(node, key=lambda e: (e[0], e[1].ordinal))),)
        + cell[node_idx + 1 :]
    )
    cells[cell_idx] = new_cell
    return Genotype(*cells)


def run_local_search(
    obj: Objective,
    cfg: LSConfig,
    rng: np.random.Generator,
    space_cfg: SpaceConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Hill climbing over the single-edit neighborhood with uniform restarts.

    Best-improvement by default; with ``first_improvement`` the climb moves
    to the first improving neighbor in a shuffled scan.
    """
    rec = _Recorder(obj, cfg.budget, "LS")
    while rec.remaining:
        current = space.sample_uniform(rng, space_cfg)
        cur_err = rec.evaluate(current)
        climbing = True
        while climbing and rec.remaining:
            nbrs = neighborhood(current, space_cfg)
            order = rng.permutation(len(nbrs))
            best_g, best_err = None, cur_err
            for i in order:
                if not rec.remaining:
                    climbing = False
                    break
                err = rec.evaluate(nbrs[int(i)])
                if err < best_err:
                    best_g, best_err = nbrs[int(i)], err
                    if cfg.first_improvement:
                        break
            if best_g is None:
                break  # local optimum: restart
            current, cur_err = best_g, best_err
    return rec.trajectory()


# --- dispatch -----------------------------------------------------------------------

OPTIMIZER_TAGS = ("RS", "RE", "DE", "TPE", "BANANAS", "LS")


def make_config(tag: str, budget: int, **overrides):
    """Default config for ``tag`` with initial-design sizes clamped to the budget."""
    if tag == "RS":
        if overrides:
            raise ValueError(f"random search takes no options, got {overrides}")
        return None
    if tag == "RE":
        overrides.setdefault("init_pop", min(100, budget))
        return REConfig(budget=budget, **overrides)
    if tag == "DE":
        overrides.setdefault("pop", min(100, budget))
        return DEConfig(budget=budget, **overrides)
    if tag == "TPE":
        overrides.setdefault("n_init", min(20, budget))
        return TPEConfig(budget=budget, **overrides)
    if tag == "BANANAS":
        overrides.setdefault("n_init", min(100, budget))
        return BananasConfig(budget=budget, **overrides)
    if tag == "LS":
        return LSConfig(budget=budget, **overrides)
    raise ValueError(f"unknown optimizer tag {tag!r}")


def run_optimizer(
    tag: str,
    obj: Objective,
    budget: int,
    rng: np.random.Generator,
    space_cfg: SpaceConfig = DEFAULT_CONFIG,
    cfg=None,
) -> Trajectory:
    """Run the optimizer named by ``tag``; ``cfg`` overrides its defaults."""
    if tag == "RS":
        return run_rs(obj, budget, rng, space_cfg)
    if cfg is None:
        cfg = make_config(tag, budget)
    elif cfg.budget != budget:
        cfg = replace(cfg, budget=budget)
    runners = {
        "RE": run_re,
        "DE": run_de,
        "TPE": run_tpe,
        "BANANAS": run_bananas_lite,
        "LS": run_local_search,
    }
    if tag not in runners:
        raise ValueError(f"unknown optimizer tag {tag!r}")
    return runners[tag](obj, cfg, rng, space_cfg)
