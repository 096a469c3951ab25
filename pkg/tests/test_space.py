import numpy as np
import pytest

from surrobench import space
from surrobench.space import (
    DuplicateParent,
    Genotype,
    NotCanonical,
    NotParameterFree,
    Op,
    ParentOutOfRange,
    SpaceConfig,
    SpaceTooLarge,
    UnknownOp,
)

S3 = Op.SEP_CONV_3X3
S5 = Op.SEP_CONV_5X5
MP = Op.MAX_POOL_3X3
SK = Op.SKIP_CONNECT


def chain_cell():
    # node k takes the previous intermediate and input 0
    return (
        ((0, S3), (1, S3)),
        ((0, S3), (2, S3)),
        ((0, S3), (3, S3)),
        ((0, S3), (4, S3)),
    )


def inputs_only_cell(op=S3):
    return tuple(((0, op), (1, op)) for _ in range(4))


def make_genotype(cell=None):
    cell = cell if cell is not None else chain_cell()
    return Genotype(cell, cell)


class TestValidate:
    def test_canonical_chain_ok(self):
        space.validate(make_genotype())

    def test_duplicate_parent(self):
        bad = (((0, S3), (0, S5)),) + chain_cell()[1:]
        with pytest.raises(DuplicateParent):
            space.validate(Genotype(bad, chain_cell()))

    def test_parent_out_of_range_node1(self):
        # the first intermediate only admits the two cell inputs
        bad = (((0, S3), (2, S3)),) + chain_cell()[1:]
        with pytest.raises(ParentOutOfRange):
            space.validate(Genotype(bad, chain_cell()))

    def test_parent_out_of_range_node2(self):
        # the second intermediate admits ids {0, 1, 2} only
        bad = (chain_cell()[0], ((0, S3), (3, S3))) + chain_cell()[2:]
        with pytest.raises(ParentOutOfRange):
            space.validate(Genotype(bad, chain_cell()))

    def test_not_canonical(self):
        bad = (((1, S3), (0, S3)),) + chain_cell()[1:]
        with pytest.raises(NotCanonical):
            space.validate(Genotype(bad, chain_cell()))

    def test_unknown_op_outside_config(self):
        cfg = SpaceConfig(ops=(S3, S5))
        with pytest.raises(UnknownOp):
            space.validate(make_genotype(inputs_only_cell(MP)), cfg)

    def test_wrong_node_count(self):
        with pytest.raises(space.SpaceError):
            space.validate(Genotype(chain_cell()[:3], chain_cell()))


class TestOperationEnum:
    def test_seven_ops(self):
        assert len(space.ALL_OPS) == 7

    def test_parameter_free_partition(self):
        free = {op for op in space.ALL_OPS if op.parameter_free}
        assert free == {Op.MAX_POOL_3X3, Op.AVG_POOL_3X3, Op.SKIP_CONNECT}


class TestSampleUniform:
    def test_always_valid(self):
        rng = np.random.default_rng(42)
        for _ in range(2000):
            space.validate(space.sample_uniform(rng))

    def test_node1_pair_forced(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            g = space.sample_uniform(rng)
            for cell in g.cells:
                assert (cell[0][0][0], cell[0][1][0]) == (0, 1)

    def test_node4_pair_frequencies(self):
        # each of the C(5,2)=10 pairs should appear with frequency 1/10
        rng = np.random.default_rng(7)
        n = 100_000
        counts = {}
        for _ in range(n):
            g = space.sample_uniform(rng)
            pair = (g.normal[3][0][0], g.normal[3][1][0])
            counts[pair] = counts.get(pair, 0) + 1
        assert len(counts) == 10
        sigma = (0.1 * 0.9 / n) ** 0.5
        for c in counts.values():
            assert abs(c / n - 0.1) < 3 * sigma


def node_sets(g):
    return [frozenset(node) for cell in g.cells for node in cell]


class TestMutate:
    def test_outputs_valid(self):
        rng = np.random.default_rng(5)
        g = space.sample_uniform(rng)
        for _ in range(2000):
            g = space.mutate(g, rng)
            space.validate(g)

    def test_single_edit(self):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            g = space.sample_uniform(rng)
            m = space.mutate(g, rng)
            before, after = node_sets(g), node_sets(m)
            changed = [i for i in range(8) if before[i] != after[i]]
            assert len(changed) <= 1
            if changed:
                i = changed[0]
                assert len(before[i] - after[i]) == 1
                assert len(after[i] - before[i]) == 1

    def test_branch_statistics(self):
        rng = np.random.default_rng(8)
        n = 30_000
        identity = 0
        normal_changed = 0
        changed = 0
        for _ in range(n):
            g = space.sample_uniform(rng)
            m = space.mutate(g, rng)
            if m == g:
                identity += 1
            else:
                changed += 1
                if m.normal != g.normal:
                    normal_changed += 1
        # identity branch is drawn with p=1/3; re-draws on impossible parent
        # changes push a little extra mass onto it
        assert 0.30 < identity / n < 0.40
        sigma = (0.25 / changed) ** 0.5
        assert abs(normal_changed / changed - 0.5) < 3 * sigma

    def test_reduced_space_single_op_identity_possible(self):
        cfg = SpaceConfig(n_intermediate=1, ops=(S3,))
        g = Genotype((((0, S3), (1, S3)),), (((0, S3), (1, S3)),))
        rng = np.random.default_rng(0)
        m = space.mutate(g, rng, cfg)
        assert m == g  # only the identity branch applies


class TestDepth:
    def test_inputs_only(self):
        assert space.depth(inputs_only_cell()) == 1

    def test_chain(self):
        assert space.depth(chain_cell()) == 4

    def test_hand_example(self):
        # n1, n2 from inputs; n3 on {n1, n2}; n4 on inputs -> depth 2
        cell = (
            ((0, S3), (1, S3)),
            ((0, S3), (1, S3)),
            ((2, S3), (3, S3)),
            ((0, S3), (1, S3)),
        )
        assert space.depth(cell) == 2

    def test_invariant_under_edge_reordering(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            g = space.sample_uniform(rng)
            swapped = tuple((node[1], node[0]) for node in g.normal)
            assert space.depth(swapped) == space.depth(g.normal)


class TestCounting:
    def test_topologies_per_cell(self):
        assert space.count_topologies() == 180

    def test_cell_count(self):
        assert space.count_cell() == 180 * 7**8 == 1_037_664_180

    def test_total_count(self):
        total = space.count_space()
        assert total == 1_037_664_180**2
        assert total > 10**18

    def test_reduced_topology_counts(self):
        assert space.count_topologies(SpaceConfig(n_intermediate=2, ops=(S3,))) == 3
        assert space.count_topologies(SpaceConfig(n_intermediate=1, ops=(S3,))) == 1

    @pytest.mark.parametrize(
        "cfg",
        [
            SpaceConfig(n_intermediate=1, ops=(S3,)),
            SpaceConfig(n_intermediate=1, ops=(S3, MP)),
            SpaceConfig(n_intermediate=2, ops=(S3, SK)),
        ],
    )
    def test_count_matches_enumeration(self, cfg):
        gs = list(space.enumerate_genotypes(cfg))
        assert len(gs) == space.count_space(cfg)
        assert len({space.to_json(g) for g in gs}) == len(gs)


class TestEnumeration:
    def test_default_topologies(self):
        topos = list(space.enumerate_topologies())
        assert len(topos) == 180
        assert len(set(topos)) == 180

    def test_two_node_topologies(self):
        assert len(list(space.enumerate_topologies(SpaceConfig(n_intermediate=2)))) == 3

    def test_single_node_forced(self):
        topos = list(space.enumerate_topologies(SpaceConfig(n_intermediate=1)))
        assert topos == [((0, 1),)]

    def test_reduced_genotypes(self):
        cfg = SpaceConfig(n_intermediate=2, ops=(S3, MP, SK))
        gs = list(space.enumerate_genotypes(cfg))
        assert len(gs) == (3 * 3**4) ** 2 == 59_049
        for g in gs[:100]:
            space.validate(g, cfg)

    def test_full_space_guarded(self):
        with pytest.raises(SpaceTooLarge):
            next(iter(space.enumerate_genotypes()))


class TestReplaceParameterFree:
    def test_ratio_zero_unchanged(self):
        rng = np.random.default_rng(0)
        g = space.sample_uniform(rng)
        assert space.replace_parameter_free(g, rng, 0.0, SK) == g

    def test_ratio_one_all_replaced(self):
        rng = np.random.default_rng(1)
        g = space.sample_uniform(rng)
        out = space.replace_parameter_free(g, rng, 1.0, SK)
        ops = [op for cell in out.cells for node in cell for _, op in node]
        assert ops == [SK] * 16

    def test_half_ratio_counts(self):
        rng = np.random.default_rng(2)
        g = make_genotype(inputs_only_cell())  # no parameter-free ops initially
        out = space.replace_parameter_free(g, rng, 0.5, MP)
        for cell in out.cells:
            n_mp = sum(1 for node in cell for _, op in node if op is MP)
            assert n_mp == 4

    def test_topology_unchanged(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            g = space.sample_uniform(rng)
            out = space.replace_parameter_free(g, rng, 0.7, MP)
            for c_in, c_out in zip(g.cells, out.cells):
                for n_in, n_out in zip(c_in, c_out):
                    assert {e[0] for e in n_in} == {e[0] for e in n_out}

    def test_rejects_parametric_op(self):
        rng = np.random.default_rng(4)
        g = space.sample_uniform(rng)
        with pytest.raises(NotParameterFree):
            space.replace_parameter_free(g, rng, 0.5, S3)


class TestJson:
    def test_round_trip_fuzz(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            g = space.sample_uniform(rng)
            assert space.from_json(space.to_json(g)) == g

    def test_non_canonical_input_is_canonicalized(self):
        g = make_genotype()
        obj = space.to_json_obj(g)
        obj["normal"][2] = obj["normal"][2][::-1]  # swap edge order on disk
        assert space.from_json_obj(obj) == g

    def test_unknown_tag_rejected(self):
        obj = space.to_json_obj(make_genotype())
        obj["normal"][0][0][1] = "conv_7x7"
        with pytest.raises(UnknownOp):
            space.from_json_obj(obj)

    def test_invalid_parent_rejected(self):
        obj = space.to_json_obj(make_genotype())
        obj["normal"][0][1][0] = 5
        with pytest.raises(ParentOutOfRange):
            space.from_json_obj(obj)
