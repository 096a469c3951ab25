"""The surrogate benchmark: a K-member boosted-tree ensemble over encoded
genotypes with a predictive distribution, a runtime model, and lossless
serialization."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import encoding, space
from .dataset import Dataset, InsufficientRepeats
from .gbtree import BoostParams, TreeEnsemble, fit_boosted
from .metrics import GaussianSummary, kl_gaussian, mae
from .space import DEFAULT_CONFIG, Genotype, SpaceConfig

MODEL_FORMAT_VERSION = 1
DEFAULT_STD_FLOOR = 1e-4
RUNTIME_FLOOR = 1.0
DEFAULT_VERSION = "NB301-GBT-v0.9-synth"


class SurrogateError(ValueError):
    pass


class TooFewRecords(SurrogateError):
    pass


class VersionMismatch(SurrogateError):
    pass


class CorruptModel(SurrogateError):
    pass


@dataclass(frozen=True)
class QueryResult:
    mean_acc: float
    std_acc: float
    runtime_s: float
    sample_acc: float | None = None


class SurrogateBenchmark:
    """K ensemble members plus a runtime model behind a query interface.

    Noise-free queries are pure functions of (model, genotype); noisy queries
    draw from Normal(mean, std) clamped to [0, 1], where std is the member
    disagreement (n-1 denominator) floored at ``std_floor``.
    """

    def __init__(
        self,
        members: list[TreeEnsemble],
        runtime_model: TreeEnsemble,
        cfg: SpaceConfig,
        std_floor: float = DEFAULT_STD_FLOOR,
        version: str = DEFAULT_VERSION,
        hyperparameters: BoostParams | None = None,
    ):
        if len(members) < 2:
            raise SurrogateError("need K >= 2 members for distributional queries")
        layouts = {m.feature_layout_version for m in members}
        layouts.add(runtime_model.feature_layout_version)
        if len(layouts) != 1:
            raise SurrogateError(f"members disagree on feature layout: {layouts}")
        self.members = tuple(members)
        self.runtime_model = runtime_model
        self.cfg = cfg
        self.std_floor = float(std_floor)
        self.version = version
        self.hyperparameters = hyperparameters

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def feature_layout_version(self) -> str:
        return self.members[0].feature_layout_version

    def member_predictions(self, X: np.ndarray) -> np.ndarray:
        """(n_rows, K) matrix of member predictions in fixed member order."""
        return np.stack([m.predict(X) for m in self.members], axis=1)

    def _query_row(self, x: np.ndarray) -> tuple[float, float, float]:
        preds = self.member_predictions(x[None, :])[0]
        mean = float(np.mean(preds))
        std = max(float(np.std(preds, ddof=1)), self.std_floor)
        runtime = max(float(self.runtime_model.predict(x[None, :])[0]), RUNTIME_FLOOR)
        return mean, std, runtime

    def query(
        self,
        g: Genotype,
        with_noise: bool = False,
        rng: np.random.Generator | None = None,
    ) -> QueryResult:
        space.validate(g, self.cfg)
        x = encoding.encode_one_hot(g, self.cfg)
        mean, std, runtime = self._query_row(x)
        sample = None
        if with_noise:
            if rng is None:
                raise SurrogateError("noisy queries need a caller-supplied rng")
            sample = float(np.clip(rng.normal(mean, std), 0.0, 1.0))
        return QueryResult(mean_acc=mean, std_acc=std, runtime_s=runtime, sample_acc=sample)


def _fold_slices(n: int, k: int) -> list[np.ndarray]:
    idx = np.arange(n)
    return [idx[f::k] for f in range(k)]


def fit_members(
    X: np.ndarray,
    y: np.ndarray,
    boost: BoostParams,
    k: int,
    feature_layout_version: str = "",
) -> list[TreeEnsemble]:
    """Fit K ensemble members by K-fold cross-validation.

    Member ``f`` trains on all folds but ``f``, uses fold ``f`` as its
    early-stopping validation set, and offsets the boosting seed by ``f`` so
    members differ both by fold and by initialization.  Folds are assigned
    over a seeded shuffle of the rows.
    """
    n = len(y)
    if k < 2 or k > n:
        raise TooFewRecords(f"need 2 <= K <= {n}, got K={k}")
    shuffle = np.random.default_rng(np.random.SeedSequence([boost.seed, 0xF01D])).permutation(n)
    members = []
    for f, fold in enumerate(_fold_slices(n, k)):
        val_idx = shuffle[fold]
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        params = replace(boost, seed=boost.seed + f)
        members.append(
            fit_boosted(
                X[mask],
                y[mask],
                X[val_idx],
                y[val_idx],
                params,
                feature_layout_version=feature_layout_version,
            )
        )
    return members


def fit_benchmark(
    ds: Dataset,
    boost: BoostParams = BoostParams(),
    k: int = 10,
    std_floor: float = DEFAULT_STD_FLOOR,
    version: str = DEFAULT_VERSION,
    runtime_boost: BoostParams | None = None,
) -> SurrogateBenchmark:
    """Fit K cross-validated accuracy members plus a runtime model."""
    n = len(ds)
    if n == 0:
        raise TooFewRecords("dataset is empty")
    cfg = ds.cfg
    layout = encoding.layout_version(cfg)
    X = encoding.encode_one_hot_many(ds.genotypes(), cfg)
    members = fit_members(X, ds.val_acc(), boost, k, layout)

    rt_params = runtime_boost if runtime_boost is not None else replace(boost, seed=boost.seed + k)
    runtime_model = fit_boosted(
        X, ds.runtime(), None, None, rt_params, feature_layout_version=layout
    )
    return SurrogateBenchmark(
        members, runtime_model, cfg, std_floor=std_floor, version=version,
        hyperparameters=boost,
    )


# --- serialization -----------------------------------------------------------


def _space_obj(cfg: SpaceConfig) -> dict:
    return {"n_intermediate": cfg.n_intermediate, "ops": [op.value for op in cfg.ops]}


def _space_from_obj(obj: dict) -> SpaceConfig:
    ops = tuple(space.Op(tag) for tag in obj["ops"])
    return SpaceConfig(n_intermediate=obj["n_intermediate"], ops=ops)


def save(b: SurrogateBenchmark, path: str | Path) -> None:
    """Write a self-describing JSON model file (atomic: temp file + rename)."""
    obj = {
        "format_version": MODEL_FORMAT_VERSION,
        "benchmark_version": b.version,
        "feature_layout_version": b.feature_layout_version,
        "std_floor": b.std_floor,
        "space": _space_obj(b.cfg),
        "n_members": b.n_members,
        "hyperparameters": (
            None if b.hyperparameters is None else b.hyperparameters.__dict__
        ),
        "members": [m.to_obj() for m in b.members],
        "runtime_model": b.runtime_model.to_obj(),
    }
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(obj, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path: str | Path) -> SurrogateBenchmark:
    try:
        with Path(path).open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CorruptModel(f"cannot read model file: {e}") from None
    version = obj.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise VersionMismatch(f"unsupported model format_version {version!r}")
    try:
        hyper = obj.get("hyperparameters")
        return SurrogateBenchmark(
            members=[TreeEnsemble.from_obj(m) for m in obj["members"]],
            runtime_model=TreeEnsemble.from_obj(obj["runtime_model"]),
            cfg=_space_from_obj(obj["space"]),
            std_floor=obj["std_floor"],
            version=obj["benchmark_version"],
            hyperparameters=None if hyper is None else BoostParams(**hyper),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptModel(f"malformed model file: {e}") from None


# --- noise modelling protocol --------------------------------------------------


@dataclass(frozen=True)
class NoiseReport:
    mae_tabular: float
    mae_surrogate: float
    mean_pred_std: float
    mean_groundtruth_std: float
    mean_kl: float
    n_genotypes: int


def noise_report(
    b: SurrogateBenchmark,
    ds_repeats: Dataset,
    extra_train: Dataset | None = None,
) -> NoiseReport:
    """Repeat-evaluation study: refit members on the lowest-seed record of each
    genotype (plus optional extra single-evaluation records), then compare the
    ensemble against the mean of the remaining seeds.

    The tabular baseline is the lowest-seed value itself.  KL divergence is
    computed per genotype between the groundtruth Gaussian (mean/std over all
    repeats) and the predicted Gaussian, with both stds floored at the
    benchmark's std floor so the divergence is always finite.
    """
    cfg = b.cfg
    groups = []
    for key, idxs in ds_repeats.by_genotype.items():
        if len(idxs) < 2:
            raise InsufficientRepeats(f"genotype {key} has {len(idxs)} < 2 repeats")
        recs = sorted((ds_repeats[i] for i in idxs), key=lambda r: r.seed)
        groups.append(recs)
    train_records = [recs[0] for recs in groups]
    if extra_train is not None:
        train_records = train_records + list(extra_train.records)
    train_ds = Dataset(train_records, cfg)

    params = b.hyperparameters if b.hyperparameters is not None else BoostParams()
    refit = fit_benchmark(
        train_ds, params, k=b.n_members, std_floor=b.std_floor, version=b.version
    )

    X = encoding.encode_one_hot_many([recs[0].genotype for recs in groups], cfg)
    preds = refit.member_predictions(X)
    pred_mean = preds.mean(axis=1)
    pred_std = np.maximum(preds.std(axis=1, ddof=1), b.std_floor)

    seed1 = np.array([recs[0].val_acc for recs in groups])
    heldout_mean = np.array([np.mean([r.val_acc for r in recs[1:]]) for recs in groups])
    gt_mean = np.array([np.mean([r.val_acc for r in recs]) for recs in groups])
    gt_std = np.array([np.std([r.val_acc for r in recs], ddof=1) for recs in groups])

    kls = [
        kl_gaussian(
            GaussianSummary(m, max(s, b.std_floor)),
            GaussianSummary(pm, ps),
        )
        for m, s, pm, ps in zip(gt_mean, gt_std, pred_mean, pred_std)
    ]
    return NoiseReport(
        mae_tabular=mae(heldout_mean, seed1),
        mae_surrogate=mae(heldout_mean, pred_mean),
        mean_pred_std=float(pred_std.mean()),
        mean_groundtruth_std=float(gt_std.mean()),
        mean_kl=float(np.mean(kls)),
        n_genotypes=len(groups),
    )
