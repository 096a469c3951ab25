"""Synthetic ground truth for desk-scale verification.

The oracle assigns each genotype a deterministic accuracy built from an
additive per-edge op-utility table, a cell-depth bonus, a sparse set of
pairwise interactions over the categorical encoding, and a quadratic penalty
once the parameter-free op count of a cell exceeds a threshold.  The additive
part dominates, which keeps nearby genotypes correlated (the property that
makes surrogate learning meaningful), while the interactions guarantee that a
constant or single-feature model cannot pass the experiments trivially.

Noisy evaluations add Gaussian noise to the truth; runtimes come from a
per-op cost table (convolutions far above parameter-free ops) plus a
deterministic topology jitter, so op substitutions shift the runtime by
exactly the table delta.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import encoding, space
from .dataset import Dataset, EvalRecord
from .rng import substream
from .space import DEFAULT_CONFIG, Genotype, Op, SpaceConfig

# Per-op runtime cost in seconds and parameter counts; convolutions dominate.
_RUNTIME_COST = {
    Op.SEP_CONV_3X3: 330.0,
    Op.SEP_CONV_5X5: 505.0,
    Op.DIL_CONV_3X3: 245.0,
    Op.DIL_CONV_5X5: 370.0,
    Op.MAX_POOL_3X3: 40.0,
    Op.AVG_POOL_3X3: 40.0,
    Op.SKIP_CONNECT: 12.0,
}
_PARAM_COST = {
    Op.SEP_CONV_3X3: 45_000,
    Op.SEP_CONV_5X5: 65_000,
    Op.DIL_CONV_3X3: 30_000,
    Op.DIL_CONV_5X5: 44_000,
    Op.MAX_POOL_3X3: 0,
    Op.AVG_POOL_3X3: 0,
    Op.SKIP_CONNECT: 0,
}
_RUNTIME_BASE = 900.0
_PARAM_BASE = 120_000


@dataclass(frozen=True)
class OracleConfig:
    seed: int = 0
    noise_std: float = 1.7e-3
    base_acc: float = 0.92
    acc_lo: float = 0.88
    acc_hi: float = 0.96
    op_weight: float = 0.010
    depth_weight: float = 0.002
    n_interactions: int = 30
    interaction_weight: float = 0.002
    pf_penalty: float = 2.5e-3
    pf_threshold: int | None = None  # defaults to n_intermediate

    def to_json_obj(self) -> dict:
        return {
            "seed": self.seed,
            "noise_std": self.noise_std,
            "base_acc": self.base_acc,
            "acc_lo": self.acc_lo,
            "acc_hi": self.acc_hi,
            "op_weight": self.op_weight,
            "depth_weight": self.depth_weight,
            "n_interactions": self.n_interactions,
            "interaction_weight": self.interaction_weight,
            "pf_penalty": self.pf_penalty,
            "pf_threshold": self.pf_threshold,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "OracleConfig":
        return cls(**obj)


class SyntheticOracle:
    """Deterministic accuracy/runtime oracle over a (possibly reduced) space."""

    def __init__(self, config: OracleConfig = OracleConfig(), cfg: SpaceConfig = DEFAULT_CONFIG):
        self.config = config
        self.cfg = cfg
        n = cfg.n_intermediate
        n_ops = len(cfg.ops)
        rng = substream(config.seed, "oracle-tables")

        # Op base utilities: convolutions clearly above parameter-free ops,
        # plus positional jitter per (cell, node, slot).
        base = np.where(
            [op.parameter_free for op in cfg.ops],
            rng.uniform(0.10, 0.50, size=n_ops),
            rng.uniform(0.55, 0.95, size=n_ops),
        )
        jitter = rng.uniform(-0.20, 0.20, size=(2, n, 2, n_ops))
        self._u = base[None, None, None, :] + jitter
        self._u -= self._u.mean()

        self._depth_bonus = rng.uniform(-1.0, 1.0, size=(2, n + 1))
        self._depth_bonus[:, 0] = 0.0

        cards = encoding.layout_cardinalities(cfg)
        inter = []
        for _ in range(config.n_interactions):
            d1, d2 = sorted(rng.choice(len(cards), size=2, replace=False).tolist())
            v1 = int(rng.integers(cards[d1]))
            v2 = int(rng.integers(cards[d2]))
            inter.append((d1, v1, d2, v2, float(rng.normal())))
        self._interactions = tuple(inter)

        self._pf_threshold = (
            config.pf_threshold if config.pf_threshold is not None else n
        )
        self._op_index = {op: i for i, op in enumerate(cfg.ops)}

    # -- accuracy --------------------------------------------------------------

    def raw_score(self, g: Genotype) -> float:
        """Unclipped deviation from base accuracy; exposed for oracle algebra tests."""
        c = self.config
        score = 0.0
        for ci, cell in enumerate(g.cells):
            for ni, node in enumerate(cell):
                for slot, (_, op) in enumerate(node):
                    score += c.op_weight * self._u[ci, ni, slot, self._op_index[op]]
            score += c.depth_weight * self._depth_bonus[ci, space.depth(cell)]
            pf = space.parameter_free_count(cell)
            over = max(0, pf - self._pf_threshold)
            score -= c.pf_penalty * over * over
        vals = encoding.to_categorical(g, self.cfg).values
        for d1, v1, d2, v2, coef in self._interactions:
            if vals[d1] == v1 and vals[d2] == v2:
                score += c.interaction_weight * coef
        return score

    def truth(self, g: Genotype) -> float:
        """Noise-free accuracy in [acc_lo, acc_hi]."""
        c = self.config
        return float(np.clip(c.base_acc + self.raw_score(g), c.acc_lo, c.acc_hi))

    def evaluate_noisy(self, g: Genotype, rng: np.random.Generator) -> float:
        acc = self.truth(g) + rng.normal(0.0, self.config.noise_std)
        return float(np.clip(acc, 0.0, 1.0))

    # -- runtime and size -------------------------------------------------------

    def runtime_truth(self, g: Genotype) -> float:
        """Deterministic training-time model; jitter depends only on topology."""
        total = _RUNTIME_BASE
        topo = []
        for cell in g.cells:
            for node in cell:
                topo.append((node[0][0], node[1][0]))
                for _, op in node:
                    total += _RUNTIME_COST[op]
        key = zlib.crc32(repr(topo).encode()) ^ (self.config.seed & 0xFFFFFFFF)
        total += np.random.default_rng(key).uniform(0.0, 120.0)
        return float(max(total, 1.0))

    def n_params(self, g: Genotype) -> int:
        total = _PARAM_BASE
        for cell in g.cells:
            for node in cell:
                for _, op in node:
                    total += _PARAM_COST[op]
        return total

    # -- record construction ----------------------------------------------------

    def make_record(
        self, g: Genotype, rng: np.random.Generator, optimizer: str, seed: int = 1
    ) -> EvalRecord:
        val = self.evaluate_noisy(g, rng)
        test = float(np.clip(val - 0.002 + rng.normal(0.0, 5e-4), 0.0, 1.0))
        train = float(np.clip(val + 0.035 + rng.normal(0.0, 1e-3), 0.0, 1.0))
        return EvalRecord(
            genotype=g,
            train_acc=train,
            val_acc=val,
            test_acc=test,
            runtime_s=self.runtime_truth(g),
            n_params=self.n_params(g),
            optimizer=optimizer,
            seed=seed,
        )


def evaluate_repeats(
    oracle: SyntheticOracle,
    genotypes,
    n_seeds: int,
    rng: np.random.Generator,
    optimizer: str = "repeats",
) -> Dataset:
    """Evaluate each genotype ``n_seeds`` times; record seeds run 1..n_seeds."""
    records = []
    for g in genotypes:
        for s in range(1, n_seeds + 1):
            records.append(oracle.make_record(g, rng, optimizer, seed=s))
    return Dataset(records, oracle.cfg)


def generate_dataset(
    oracle: SyntheticOracle,
    optimizer_mix: dict[str, int],
    rng_seed: int,
    optimizer_configs: dict[str, object] | None = None,
) -> Dataset:
    """Collect evaluations by running the configured optimizers against the
    noisy oracle, tagging each record with its originating optimizer."""
    from . import optimizers as opt

    optimizer_configs = optimizer_configs or {}
    records: list[EvalRecord] = []
    for tag in sorted(optimizer_mix):
        budget = optimizer_mix[tag]
        if budget <= 0:
            raise ValueError(f"budget for {tag!r} must be positive")
        obj = opt.OracleObjective(oracle, substream(rng_seed, "noise", tag))
        record_rng = substream(rng_seed, "records", tag)
        traj = opt.run_optimizer(
            tag,
            obj,
            budget,
            substream(rng_seed, "opt", tag),
            space_cfg=oracle.cfg,
            cfg=optimizer_configs.get(tag),
        )
        for ev in traj.events:
            acc = 1.0 - ev.val_error
            test = float(np.clip(acc - 0.002 + record_rng.normal(0.0, 5e-4), 0.0, 1.0))
            train = float(np.clip(acc + 0.035 + record_rng.normal(0.0, 1e-3), 0.0, 1.0))
            records.append(
                EvalRecord(
                    genotype=ev.genotype,
                    train_acc=train,
                    val_acc=acc,
                    test_acc=test,
                    runtime_s=ev.runtime_s,
                    n_params=oracle.n_params(ev.genotype),
                    optimizer=tag,
                    seed=1,
                )
            )
    return Dataset(records, oracle.cfg)
