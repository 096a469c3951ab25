"""Deterministic feature encodings of genotypes.

Three encodings are provided:

* categorical: per cell, one categorical per node parent pair (cardinalities
  C(2,2), C(3,2), ... in lexicographic pair order) followed by one
  categorical per edge op; both cells concatenated.
* unit: each categorical dim mapped onto equal sub-intervals of [0, 1);
  decoding rounds a coordinate down to its containing sub-interval.
* path: sparse indicators over the op sequences traversed by the directed
  input-to-output paths of each cell.

Tree models consume one-hot expansions of the categorical vector: ops and
parent pairs are nominal, so raw ordinals would fake an order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import (
    ALL_OPS,
    CELL_NAMES,
    DEFAULT_CONFIG,
    Cell,
    Genotype,
    Op,
    SpaceConfig,
    canonicalize_cell,
    parent_pairs,
    validate,
)


class EncodingError(ValueError):
    pass


class OutOfUnitRange(EncodingError):
    pass


@dataclass(frozen=True)
class CategoricalVector:
    """Per-dim (cardinality, value) pairs; layout is a pure function of the config."""

    dims: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        for card, value in self.dims:
            if not (0 <= value < card):
                raise EncodingError(f"value {value} outside cardinality {card}")

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(c for c, _ in self.dims)

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(v for _, v in self.dims)


def layout_cardinalities(cfg: SpaceConfig = DEFAULT_CONFIG) -> tuple[int, ...]:
    """Cardinality of each categorical dim: per cell, n pair dims then 2n op dims."""
    n_ops = len(cfg.ops)
    per_cell = [len(parent_pairs(k)) for k in range(1, cfg.n_intermediate + 1)]
    per_cell += [n_ops] * cfg.edges_per_cell
    return tuple(per_cell * 2)


def layout_version(cfg: SpaceConfig = DEFAULT_CONFIG) -> str:
    """Identifier embedded in serialized models to pin the feature layout."""
    ops = "+".join(op.value for op in cfg.ops)
    return f"cat-v1/n={cfg.n_intermediate}/ops={ops}"


def one_hot_width(cfg: SpaceConfig = DEFAULT_CONFIG) -> int:
    return sum(layout_cardinalities(cfg))


_PAIR_INDEX: dict[int, dict[tuple[int, int], int]] = {}


def _pair_index(k: int) -> dict[tuple[int, int], int]:
    if k not in _PAIR_INDEX:
        _PAIR_INDEX[k] = {pair: i for i, pair in enumerate(parent_pairs(k))}
    return _PAIR_INDEX[k]


def _op_index(cfg: SpaceConfig) -> dict[Op, int]:
    return {op: i for i, op in enumerate(cfg.ops)}


def to_categorical(g: Genotype, cfg: SpaceConfig = DEFAULT_CONFIG) -> CategoricalVector:
    """Bijective categorical encoding of a canonical genotype."""
    validate(g, cfg)
    op_idx = _op_index(cfg)
    dims: list[tuple[int, int]] = []
    for cell in g.cells:
        pair_vals = []
        op_vals = []
        for i, node in enumerate(cell):
            k = i + 1
            pair = (node[0][0], node[1][0])
            pair_vals.append((len(parent_pairs(k)), _pair_index(k)[pair]))
            op_vals.append((len(cfg.ops), op_idx[node[0][1]]))
            op_vals.append((len(cfg.ops), op_idx[node[1][1]]))
        dims.extend(pair_vals)
        dims.extend(op_vals)
    return CategoricalVector(tuple(dims))


def from_categorical(
    v: CategoricalVector, cfg: SpaceConfig = DEFAULT_CONFIG
) -> Genotype:
    """Inverse of ``to_categorical``."""
    expected = layout_cardinalities(cfg)
    if v.cardinalities != expected:
        raise EncodingError(
            f"vector layout {v.cardinalities} does not match config layout {expected}"
        )
    n = cfg.n_intermediate
    per_cell = 3 * n
    cells = []
    for c in range(2):
        vals = v.values[c * per_cell : (c + 1) * per_cell]
        pair_vals, op_vals = vals[:n], vals[n:]
        nodes = []
        for i in range(n):
            k = i + 1
            pa, pb = parent_pairs(k)[pair_vals[i]]
            oa = cfg.ops[op_vals[2 * i]]
            ob = cfg.ops[op_vals[2 * i + 1]]
            nodes.append(((pa, oa), (pb, ob)))
        cells.append(canonicalize_cell(nodes))
    g = Genotype(*cells)
    validate(g, cfg)
    return g


def to_unit(g: Genotype, cfg: SpaceConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Map each categorical value to the midpoint of its sub-interval of [0, 1)."""
    v = to_categorical(g, cfg)
    return np.array([(val + 0.5) / card for card, val in v.dims], dtype=np.float64)


def from_unit(x: np.ndarray, cfg: SpaceConfig = DEFAULT_CONFIG) -> Genotype:
    """Decode unit coordinates: dim of cardinality m maps c to floor(c * m)."""
    cards = layout_cardinalities(cfg)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(cards),):
        raise EncodingError(f"expected {len(cards)} coords, got shape {x.shape}")
    if np.any(x < 0.0) or np.any(x >= 1.0):
        raise OutOfUnitRange("coordinates must lie in [0, 1)")
    values = tuple(int(c * m) for c, m in zip(x, cards))
    return from_categorical(
        CategoricalVector(tuple(zip(cards, values))), cfg
    )


def one_hot(v: CategoricalVector) -> np.ndarray:
    """Concatenated one-hot blocks; the row sums to the number of dims."""
    width = sum(v.cardinalities)
    row = np.zeros(width, dtype=np.float64)
    offset = 0
    for card, value in v.dims:
        row[offset + value] = 1.0
        offset += card
    return row


def encode_one_hot(g: Genotype, cfg: SpaceConfig = DEFAULT_CONFIG) -> np.ndarray:
    return one_hot(to_categorical(g, cfg))


def encode_one_hot_many(
    genotypes, cfg: SpaceConfig = DEFAULT_CONFIG
) -> np.ndarray:
    """One-hot feature matrix for a sequence of genotypes."""
    gs = list(genotypes)
    out = np.zeros((len(gs), one_hot_width(cfg)), dtype=np.float64)
    for i, g in enumerate(gs):
        out[i] = encode_one_hot(g, cfg)
    return out


# --- path encoding -----------------------------------------------------------

N_FULL_OPS = len(ALL_OPS)
_PATH_OFFSETS = (0, 7, 56, 399)  # cumulative 7 + 49 + 343 before each length
PATH_DIMS_PER_CELL = 2800  # 7 + 49 + 343 + 2401
PATH_DIMS = 2 * PATH_DIMS_PER_CELL


@dataclass(frozen=True)
class PathFeature:
    """Sparse indicator over op sequences of length 1..4 per cell."""

    active: frozenset[int]
    n_dims: int = PATH_DIMS

    def to_dense(self) -> np.ndarray:
        row = np.zeros(self.n_dims, dtype=np.float64)
        if self.active:
            row[sorted(self.active)] = 1.0
        return row


def _sequence_index(seq: tuple[int, ...]) -> int:
    acc = 0
    for o in seq:
        acc = acc * N_FULL_OPS + o
    return _PATH_OFFSETS[len(seq) - 1] + acc


def _cell_paths(cell: Cell) -> set[tuple[int, ...]]:
    """Op sequences of every simple input-to-output path through the cell."""
    seqs_at: list[set[tuple[int, ...]]] = []
    for node in cell:
        seqs = set()
        for p, op in node:
            o = op.ordinal
            if p <= 1:
                seqs.add((o,))
            else:
                for prefix in seqs_at[p - 2]:
                    seqs.add(prefix + (o,))
        seqs_at.append(seqs)
    all_seqs: set[tuple[int, ...]] = set()
    for seqs in seqs_at:
        all_seqs |= seqs
    return all_seqs


def to_path(g: Genotype, cfg: SpaceConfig = DEFAULT_CONFIG) -> PathFeature:
    """Path encoding; defined for the four-node space (any op subset)."""
    if cfg.n_intermediate != 4:
        raise EncodingError("path encoding is defined for the 4-node space")
    validate(g, cfg)
    active: set[int] = set()
    for c, cell in enumerate(g.cells):
        base = c * PATH_DIMS_PER_CELL
        for seq in _cell_paths(cell):
            active.add(base + _sequence_index(seq))
    return PathFeature(frozenset(active))
