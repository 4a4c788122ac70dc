"""Plans, partitioning, cross-product, aggregation, reuse, execution."""

import numpy as np
import pytest

from forestserve import dataflow, model, synth
from forestserve.blocks import split_rows
from forestserve.dataflow import (
    ExecConfig,
    RELATION_CENTRIC,
    RELATION_CENTRIC_REUSED,
    UDF_CENTRIC,
    aggregate,
    cross_product,
    execute,
    load_partitions,
    materialize_partitions,
    partition_model,
    plan,
)
from forestserve.engines.traversal import NaiveEngine
from forestserve.errors import MissingPartial, StoreCorrupt, UnsupportedEngineForPlan

from conftest import make_forest, make_samples


def make_blocks(seed, rows, num_features, block_rows=64, missing_rate=0.0):
    values, missing = make_samples(seed, rows, num_features, missing_rate)
    return split_rows(values, missing, block_rows)


class TestPlan:
    def test_stage_counts(self):
        forest = make_forest(1, n_trees=4)
        assert len(plan(forest, None, UDF_CENTRIC, ExecConfig()).stages) == 1
        assert len(plan(forest, None, RELATION_CENTRIC, ExecConfig()).stages) == 4
        reused = plan(forest, None, RELATION_CENTRIC_REUSED,
                      ExecConfig(partition_store="x"))
        assert len(reused.stages) == 3
        assert reused.stages[0].name == "load-partitions"

    def test_quickscorer_rejected_for_relation_plan(self):
        forest = make_forest(2, n_trees=4, max_depth=6)
        with pytest.raises(UnsupportedEngineForPlan):
            plan(forest, None, RELATION_CENTRIC, ExecConfig(engine="quickscorer"))
        plan(forest, None, UDF_CENTRIC, ExecConfig(engine="quickscorer"))


class TestPartitionModel:
    def test_single_partition(self):
        forest = make_forest(3, n_trees=10)
        [part] = partition_model(forest, 1)
        assert part.n_trees == 10
        assert part.tree_indices == tuple(range(10))

    def test_ten_trees_four_ways(self):
        forest = make_forest(4, n_trees=10)
        parts = partition_model(forest, 4)
        assert [p.n_trees for p in parts] == [3, 3, 2, 2]
        covered = sorted(i for p in parts for i in p.tree_indices)
        assert covered == list(range(10))

    def test_1600_trees_eight_ways(self):
        forest = synth.synth_forest(1600, 2, 4, seed=5)
        parts = partition_model(forest, 8)
        assert [p.n_trees for p in parts] == [200] * 8
        assert sorted(i for p in parts for i in p.tree_indices) == list(range(1600))
        for p in parts:
            for local, original in enumerate(p.tree_indices):
                assert p.forest.trees[local] == forest.trees[original]

    def test_more_workers_than_trees(self):
        forest = make_forest(6, n_trees=3)
        parts = partition_model(forest, 8)
        assert [p.n_trees for p in parts] == [1, 1, 1]

    def test_deterministic(self):
        forest = make_forest(7, n_trees=13)
        a = partition_model(forest, 5)
        b = partition_model(forest, 5)
        assert [p.tree_indices for p in a] == [p.tree_indices for p in b]


class TestCrossProduct:
    def test_degenerate_single_pair(self):
        forest = make_forest(8, n_trees=6, kind=model.GRADIENT_BOOSTING)
        blocks = make_blocks(9, 50, forest.num_features)
        [partial] = cross_product(partition_model(forest, 1), blocks[:1], "naive")
        whole = NaiveEngine(forest).leaf_sum_block(blocks[0].values, blocks[0].missing)
        assert (partial.sums == whole).all()
        assert partial.tree_count == 6

    def test_cardinality(self):
        forest = make_forest(10, n_trees=8)
        blocks = make_blocks(11, 192, forest.num_features)
        partials = cross_product(partition_model(forest, 4), blocks[:3], "naive")
        assert len(partials) == 12
        pairs = {(p.partition_id, p.block_id) for p in partials}
        assert len(pairs) == 12

    def test_partition_sums_recompose_naive_raw(self):
        forest = make_forest(12, n_trees=11, kind=model.GRADIENT_BOOSTING)
        blocks = make_blocks(13, 100, forest.num_features, block_rows=100)
        partials = cross_product(partition_model(forest, 4), blocks, "naive")
        total = np.zeros(100)
        for p in sorted(partials, key=lambda x: x.partition_id):
            total = total + p.sums
        raw = model.finalize_raw(total, forest.n_trees, forest.model_kind,
                                 forest.base_score)
        naive = NaiveEngine(forest).predict_block(blocks[0])
        assert (raw == naive.raw_score).all()


class TestAggregate:
    def _partials(self, forest, blocks, k):
        return cross_product(partition_model(forest, k), blocks, "naive")

    def test_identity_merge(self):
        forest = make_forest(14, n_trees=5)
        blocks = make_blocks(15, 40, forest.num_features, block_rows=40)
        out = aggregate(self._partials(forest, blocks, 1), 1, forest.n_trees,
                        forest.model_kind, forest.base_score)
        naive = NaiveEngine(forest).predict_block(blocks[0])
        assert (out[0][1] == naive.raw_score).all()

    def test_k2_equals_k8_bitwise(self):
        forest = make_forest(16, n_trees=24, kind=model.GRADIENT_BOOSTING)
        blocks = make_blocks(17, 128, forest.num_features)
        a = aggregate(self._partials(forest, blocks, 2), 2, forest.n_trees,
                      forest.model_kind, forest.base_score)
        b = aggregate(self._partials(forest, blocks, 8), 8, forest.n_trees,
                      forest.model_kind, forest.base_score)
        for block_id in a:
            assert (a[block_id][1] == b[block_id][1]).all()

    def test_missing_partial_names_block_and_partition(self):
        forest = make_forest(18, n_trees=8)
        blocks = make_blocks(19, 64, forest.num_features, block_rows=32)
        partials = self._partials(forest, blocks, 4)
        dropped = [p for p in partials if not (p.block_id == 1 and p.partition_id == 2)]
        with pytest.raises(MissingPartial) as err:
            aggregate(dropped, 4, forest.n_trees, forest.model_kind, forest.base_score)
        assert err.value.block_id == 1 and err.value.partition_id == 2


class TestMaterialize:
    def test_roundtrip(self, tmp_path):
        forest = make_forest(20, n_trees=9)
        parts = partition_model(forest, 4)
        store = str(tmp_path / "store")
        materialize_partitions(parts, store, forest)
        loaded = load_partitions(store, forest)
        assert [p.tree_indices for p in loaded] == [p.tree_indices for p in parts]
        assert [p.forest for p in loaded] == [p.forest for p in parts]

    def test_stale_model_rejected(self, tmp_path):
        forest = make_forest(21, n_trees=6)
        other = make_forest(22, n_trees=6)
        store = str(tmp_path / "store")
        materialize_partitions(partition_model(forest, 2), store, forest)
        with pytest.raises(StoreCorrupt, match="different model"):
            load_partitions(store, other)

    def test_corrupt_partition_file(self, tmp_path):
        forest = make_forest(23, n_trees=6)
        store = tmp_path / "store"
        materialize_partitions(partition_model(forest, 2), str(store), forest)
        target = store / "partition_0001.json"
        raw = bytearray(target.read_bytes())
        raw[10] ^= 0xFF
        target.write_bytes(bytes(raw))
        with pytest.raises(StoreCorrupt, match="checksum"):
            load_partitions(str(store), forest)


class TestExecute:
    @pytest.mark.parametrize("engine", ["naive", "predicated", "tensor", "compiled"])
    def test_plan_kinds_agree_bitwise(self, tmp_path, engine):
        forest = make_forest(24, n_trees=12, kind=model.GRADIENT_BOOSTING)
        blocks = make_blocks(25, 300, forest.num_features)
        store = str(tmp_path / "store")
        results = {}
        for kind in (UDF_CENTRIC, RELATION_CENTRIC, RELATION_CENTRIC_REUSED):
            cfg = ExecConfig(workers=4, engine=engine, partition_store=store)
            result = execute(plan(forest, None, kind, cfg), blocks)
            results[kind] = np.concatenate([b.raw_score for b in result.blocks])
            assert len(result.stage_metrics) == len(plan(forest, None, kind, cfg).stages)
        assert (results[UDF_CENTRIC] == results[RELATION_CENTRIC]).all()
        assert (results[RELATION_CENTRIC] == results[RELATION_CENTRIC_REUSED]).all()

    def test_workers_do_not_change_output(self):
        forest = make_forest(26, n_trees=16)
        blocks = make_blocks(27, 256, forest.num_features, missing_rate=0.1)
        outs = []
        for workers in (1, 8):
            cfg = ExecConfig(workers=workers, engine="predicated")
            result = execute(plan(forest, None, UDF_CENTRIC, cfg), blocks)
            outs.append(np.concatenate([b.raw_score for b in result.blocks]))
            rel = execute(plan(forest, None, RELATION_CENTRIC,
                               ExecConfig(workers=workers, engine="predicated")), blocks)
            outs.append(np.concatenate([b.raw_score for b in rel.blocks]))
        for other in outs[1:]:
            assert (outs[0] == other).all()

    def test_reuse_skips_partition_stage(self, tmp_path):
        forest = make_forest(28, n_trees=10)
        blocks = make_blocks(29, 100, forest.num_features)
        store = str(tmp_path / "store")
        first = execute(plan(forest, None, RELATION_CENTRIC,
                             ExecConfig(workers=2, partition_store=store)), blocks)
        assert first.counters["partition_stage_runs"] == 1
        second = execute(plan(forest, None, RELATION_CENTRIC_REUSED,
                              ExecConfig(workers=2, partition_store=store)), blocks)
        assert second.counters["partition_stage_runs"] == 0
        a = np.concatenate([b.raw_score for b in first.blocks])
        b = np.concatenate([b.raw_score for b in second.blocks])
        assert (a == b).all()

    def test_batching_covers_all_rows_in_order(self):
        forest = make_forest(30, n_trees=6)
        blocks = make_blocks(31, 500, forest.num_features, block_rows=64)
        cfg = ExecConfig(workers=2, batch_blocks=3)
        result = execute(plan(forest, None, RELATION_CENTRIC, cfg), blocks)
        assert [b.block_id for b in result.blocks] == [b.block_id for b in blocks]
        assert [b.row_offset for b in result.blocks] == [b.row_offset for b in blocks]
        assert sum(b.n_rows for b in result.blocks) == 500
        unbatched = execute(plan(forest, None, RELATION_CENTRIC,
                                 ExecConfig(workers=2)), blocks)
        got = np.concatenate([b.raw_score for b in result.blocks])
        want = np.concatenate([b.raw_score for b in unbatched.blocks])
        assert (got == want).all()

    def test_stage_metrics_record_rows_and_workers(self):
        forest = make_forest(32, n_trees=8)
        blocks = make_blocks(33, 128, forest.num_features)
        result = execute(plan(forest, None, RELATION_CENTRIC,
                              ExecConfig(workers=4)), blocks)
        names = [m.stage for m in result.stage_metrics]
        assert names == ["partition-model", "cross-product", "aggregate", "post-process"]
        cross = result.stage_metrics[1]
        assert cross.rows == 128 * 4 and cross.workers == 4
