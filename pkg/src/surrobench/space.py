"""Cell-based architecture search space.

A genotype is a pair of cells (normal, reduction).  Each cell is a small DAG
with two input nodes (ids 0 and 1) and ``n_intermediate`` intermediate nodes
(ids 2, 3, ...).  Intermediate node k (1-based) picks two distinct parents
among the ids below its own, i.e. from {0, ..., k}, and labels each incoming
edge with one of seven operations.  All intermediates feed the cell output,
so the per-cell topology count is prod_k C(k+1, 2) = 180 in the default
four-node space.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class Op(enum.Enum):
    """Edge operations; ordinal order is the canonical tag order."""

    SEP_CONV_3X3 = "sep_conv_3x3"
    SEP_CONV_5X5 = "sep_conv_5x5"
    DIL_CONV_3X3 = "dil_conv_3x3"
    DIL_CONV_5X5 = "dil_conv_5x5"
    MAX_POOL_3X3 = "max_pool_3x3"
    AVG_POOL_3X3 = "avg_pool_3x3"
    SKIP_CONNECT = "skip_connect"

    @property
    def parameter_free(self) -> bool:
        return self in _PARAMETER_FREE

    @property
    def ordinal(self) -> int:
        return _OP_ORDINAL[self]


ALL_OPS: tuple[Op, ...] = tuple(Op)
_OP_ORDINAL = {op: i for i, op in enumerate(ALL_OPS)}
_OP_BY_TAG = {op.value: op for op in ALL_OPS}
_PARAMETER_FREE = frozenset({Op.MAX_POOL_3X3, Op.AVG_POOL_3X3, Op.SKIP_CONNECT})
PARAMETER_FREE_OPS: tuple[Op, ...] = tuple(op for op in ALL_OPS if op.parameter_free)

CELL_NAMES = ("normal", "reduction")


class SpaceError(ValueError):
    """Base class for search-space violations."""


class ParentOutOfRange(SpaceError):
    pass


class DuplicateParent(SpaceError):
    pass


class NotCanonical(SpaceError):
    pass


class UnknownOp(SpaceError):
    pass


class MutationImpossible(SpaceError):
    """No admissible edit exists for the drawn mutation; callers re-draw."""


class SpaceTooLarge(SpaceError):
    pass


class NotParameterFree(SpaceError):
    pass


# An edge is (parent_id, Op); a node is a pair of edges; a cell is a tuple of
# nodes; a genotype is (normal_cell, reduction_cell).
Edge = tuple[int, Op]
Node = tuple[Edge, Edge]
Cell = tuple[Node, ...]


@dataclass(frozen=True)
class Genotype:
    normal: Cell
    reduction: Cell

    @property
    def cells(self) -> tuple[Cell, Cell]:
        return (self.normal, self.reduction)


@dataclass(frozen=True)
class SpaceConfig:
    """Search-space shape: number of intermediate nodes and allowed ops.

    Defaults reproduce the full seven-op, four-node space; smaller values
    define reduced spaces that are cheap to enumerate exhaustively.
    """

    n_intermediate: int = 4
    ops: tuple[Op, ...] = ALL_OPS

    def __post_init__(self) -> None:
        if self.n_intermediate < 1:
            raise SpaceError(f"n_intermediate must be >= 1, got {self.n_intermediate}")
        if not self.ops:
            raise SpaceError("ops must be nonempty")
        if len(set(self.ops)) != len(self.ops):
            raise SpaceError("ops contains duplicates")
        # normalize op order to the canonical tag order
        object.__setattr__(self, "ops", tuple(sorted(self.ops, key=lambda o: o.ordinal)))

    def admissible_parents(self, k: int) -> range:
        """Parent ids admissible for intermediate node k (1-based): {0..k}."""
        return range(0, k + 1)

    @property
    def edges_per_cell(self) -> int:
        return 2 * self.n_intermediate


DEFAULT_CONFIG = SpaceConfig()

# Guard against accidentally iterating the full 1e18 space.
DEFAULT_ENUMERATION_CAP = 10_000_000


def _edge_key(e: Edge) -> tuple[int, int]:
    return (e[0], e[1].ordinal)


def canonicalize_cell(cell: Sequence[Sequence[tuple[int, Op]]]) -> Cell:
    """Sort each node's two edges ascending by (parent, op ordinal)."""
    return tuple(
        tuple(sorted((tuple(e) for e in node), key=_edge_key)) for node in cell
    )


def canonicalize(g: Genotype) -> Genotype:
    return Genotype(canonicalize_cell(g.normal), canonicalize_cell(g.reduction))


def _validate_cell(cell: Cell, cfg: SpaceConfig, name: str) -> None:
    if len(cell) != cfg.n_intermediate:
        raise SpaceError(
            f"{name} cell has {len(cell)} nodes, expected {cfg.n_intermediate}"
        )
    allowed = set(cfg.ops)
    for i, node in enumerate(cell):
        k = i + 1
        if len(node) != 2:
            raise SpaceError(f"{name} node {k} has {len(node)} edges, expected 2")
        (p1, op1), (p2, op2) = node
        for p, op in node:
            if not isinstance(op, Op):
                raise UnknownOp(f"{name} node {k}: {op!r} is not an operation")
            if op not in allowed:
                raise UnknownOp(f"{name} node {k}: op {op.value} not in configured set")
            if not (0 <= p <= k):
                raise ParentOutOfRange(
                    f"{name} node {k}: parent {p} outside admissible ids 0..{k}"
                )
        if p1 == p2:
            raise DuplicateParent(f"{name} node {k}: both edges use parent {p1}")
        if _edge_key(node[0]) > _edge_key(node[1]):
            raise NotCanonical(
                f"{name} node {k}: edges not in ascending (parent, op) order"
            )


def validate(g: Genotype, cfg: SpaceConfig = DEFAULT_CONFIG) -> None:
    """Raise a SpaceError subclass unless ``g`` is valid and canonical under ``cfg``."""
    for name, cell in zip(CELL_NAMES, g.cells):
        _validate_cell(cell, cfg, name)


def _sample_cell(rng: np.random.Generator, cfg: SpaceConfig) -> Cell:
    nodes = []
    n_ops = len(cfg.ops)
    for k in range(1, cfg.n_intermediate + 1):
        pairs = parent_pairs(k)
        pa, pb = pairs[rng.integers(len(pairs))]
        ops = (cfg.ops[rng.integers(n_ops)], cfg.ops[rng.integers(n_ops)])
        nodes.append(((pa, ops[0]), (pb, ops[1])))
    return canonicalize_cell(nodes)


def sample_uniform(rng: np.random.Generator, cfg: SpaceConfig = DEFAULT_CONFIG) -> Genotype:
    """Draw a genotype uniformly over all canonical genotypes."""
    return Genotype(_sample_cell(rng, cfg), _sample_cell(rng, cfg))


def parent_pairs(k: int) -> tuple[tuple[int, int], ...]:
    """Distinct parent pairs for node k in ascending lexicographic order."""
    return tuple(itertools.combinations(range(0, k + 1), 2))


def _with_node(cell: Cell, idx: int, node: Node) -> Cell:
    return cell[:idx] + (tuple(sorted(node, key=_edge_key)),) + cell[idx + 1 :]


def mutate(
    g: Genotype, rng: np.random.Generator, cfg: SpaceConfig = DEFAULT_CONFIG
) -> Genotype:
    """Apply one mutation step: pick a cell, then one of parent-change,
    op-change or identity with probability 1/3 each.

    A parent change replaces one edge's parent with a uniformly chosen
    admissible id distinct from both current parents of the node; an op
    change replaces one edge's op with a uniformly chosen different op.
    When the drawn edit has no admissible alternative (e.g. a parent change
    on node 1, whose only pair is {0, 1}), the mutation type is re-drawn.
    """
    cell_idx = int(rng.integers(2))
    cell = g.cells[cell_idx]
    n_edges = cfg.edges_per_cell

    for _ in range(64):
        kind = int(rng.integers(3))
        if kind == 0:  # identity
            return g
        edge_flat = int(rng.integers(n_edges))
        node_idx, slot = divmod(edge_flat, 2)
        node = cell[node_idx]
        parent, op = node[slot]
        other_parent = node[1 - slot][0]
        if kind == 1:  # parent change
            alts = [
                p
                for p in cfg.admissible_parents(node_idx + 1)
                if p != parent and p != other_parent
            ]
            if not alts:
                continue  # re-draw the mutation type
            new_parent = alts[int(rng.integers(len(alts)))]
            new_node = list(node)
            new_node[slot] = (new_parent, op)
        else:  # op change
            alts_op = [o for o in cfg.ops if o is not op]
            if not alts_op:
                continue
            new_op = alts_op[int(rng.integers(len(alts_op)))]
            new_node = list(node)
            new_node[slot] = (parent, new_op)
        new_cell = _with_node(cell, node_idx, tuple(new_node))
        cells = list(g.cells)
        cells[cell_idx] = new_cell
        return Genotype(*cells)
    # Only reachable in degenerate configs where no edit ever applies.
    return g


def depth(cell: Cell) -> int:
    """Longest input-to-output path, counted in intermediate nodes."""
    best = 0
    node_depth: dict[int, int] = {0: 0, 1: 0}
    for i, node in enumerate(cell):
        d = 1 + max(node_depth[p] for p, _ in node)
        node_depth[i + 2] = d
        best = max(best, d)
    return best


def count_topologies(cfg: SpaceConfig = DEFAULT_CONFIG) -> int:
    """Per-cell parent-pair assignments: prod_k C(k+1, 2)."""
    t = 1
    for k in range(1, cfg.n_intermediate + 1):
        t *= math.comb(k + 1, 2)
    return t


def count_cell(cfg: SpaceConfig = DEFAULT_CONFIG) -> int:
    """Canonical single-cell count: topologies x |ops|^(2 n)."""
    return count_topologies(cfg) * len(cfg.ops) ** cfg.edges_per_cell


def count_space(cfg: SpaceConfig = DEFAULT_CONFIG) -> int:
    """Exact number of canonical genotypes (both cells)."""
    return count_cell(cfg) ** 2


def enumerate_topologies(
    cfg: SpaceConfig = DEFAULT_CONFIG, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[tuple[tuple[int, int], ...]]:
    """Yield every per-cell parent-pair assignment once, in lexicographic order."""
    if count_topologies(cfg) > cap:
        raise SpaceTooLarge(
            f"{count_topologies(cfg)} topologies exceed enumeration cap {cap}"
        )
    per_node = [parent_pairs(k) for k in range(1, cfg.n_intermediate + 1)]
    yield from itertools.product(*per_node)


def _enumerate_cells(cfg: SpaceConfig, cap: int) -> Iterator[Cell]:
    op_choices = list(itertools.product(cfg.ops, repeat=2))
    for topo in enumerate_topologies(cfg, cap=cap):
        per_node = []
        for (pa, pb) in topo:
            per_node.append(
                [canonicalize_cell([((pa, oa), (pb, ob))])[0] for oa, ob in op_choices]
            )
        for nodes in itertools.product(*per_node):
            yield tuple(nodes)


def enumerate_genotypes(
    cfg: SpaceConfig = DEFAULT_CONFIG, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[Genotype]:
    """Yield every canonical genotype once; guarded by the enumeration cap."""
    total = count_space(cfg)
    if total > cap:
        raise SpaceTooLarge(f"{total} genotypes exceed enumeration cap {cap}")
    cells = list(_enumerate_cells(cfg, cap))
    for normal in cells:
        for reduction in cells:
            yield Genotype(normal, reduction)


def replace_parameter_free(
    g: Genotype,
    rng: np.random.Generator,
    ratio: float,
    op_kind: Op,
    cfg: SpaceConfig = DEFAULT_CONFIG,
) -> Genotype:
    """Set ceil(ratio * edges_per_cell) uniformly chosen edge ops per cell to
    ``op_kind``; the topology is untouched."""
    if not op_kind.parameter_free:
        raise NotParameterFree(f"{op_kind.value} has parameters")
    if not (0.0 <= ratio <= 1.0):
        raise SpaceError(f"ratio must be in [0, 1], got {ratio}")
    n_edges = cfg.edges_per_cell
    n_replace = math.ceil(ratio * n_edges)
    new_cells = []
    for cell in g.cells:
        chosen = set(rng.choice(n_edges, size=n_replace, replace=False).tolist())
        nodes = []
        for i, node in enumerate(cell):
            edges = []
            for slot, (p, op) in enumerate(node):
                if 2 * i + slot in chosen:
                    op = op_kind
                edges.append((p, op))
            nodes.append(edges)
        new_cells.append(canonicalize_cell(nodes))
    return Genotype(*new_cells)


def parameter_free_count(cell: Cell) -> int:
    return sum(1 for node in cell for _, op in node if op.parameter_free)


def to_json_obj(g: Genotype) -> dict:
    return {
        name: [[[p, op.value] for p, op in node] for node in cell]
        for name, cell in zip(CELL_NAMES, g.cells)
    }


def to_json(g: Genotype) -> str:
    return json.dumps(to_json_obj(g), separators=(",", ":"))


def from_json_obj(obj: dict, cfg: SpaceConfig = DEFAULT_CONFIG) -> Genotype:
    """Parse a genotype object; non-canonical edge order is tolerated and fixed."""
    cells = []
    for name in CELL_NAMES:
        if name not in obj:
            raise SpaceError(f"genotype object missing {name!r} cell")
        raw = obj[name]
        nodes = []
        for node in raw:
            edges = []
            for p, tag in node:
                if tag not in _OP_BY_TAG:
                    raise UnknownOp(f"unknown op tag {tag!r}")
                edges.append((int(p), _OP_BY_TAG[tag]))
            nodes.append(edges)
        cells.append(canonicalize_cell(nodes))
    g = Genotype(*cells)
    validate(g, cfg)
    return g


def from_json(s: str, cfg: SpaceConfig = DEFAULT_CONFIG) -> Genotype:
    return from_json_obj(json.loads(s), cfg)
