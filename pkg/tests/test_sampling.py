import numpy as np
import pytest

from gpnn.errors import ValidationError
from gpnn.sampling import format_batch, hop_of, sample_sequences

from conftest import path_graph, random_graph, star_graph


def walk_reachability_rows(g, k, max_len):
    """Independent oracle: nodes first reached at power i of the original
    adjacency, deduplicated in increasing i, ascending id within a power."""
    adj = (g.adjacency.toarray() > 0)
    n = g.num_nodes
    rows = []
    for v in range(n):
        row = [v]
        seen = {v}
        power = np.eye(n, dtype=bool)
        for _ in range(k):
            power = power @ adj
            for u in np.flatnonzero(power[v]):
                u = int(u)
                if u not in seen and len(row) < max_len:
                    seen.add(u)
                    row.append(u)
                elif u not in seen:
                    seen.add(u)  # beyond max_len: truncated
        rows.append(row[:max_len])
    return rows


class TestSampleSequences:
    def test_path_center_row(self):
        g = path_graph(5)
        batch = sample_sequences(g, 2, 16)
        np.testing.assert_array_equal(batch.indices[2][:batch.lengths[2]],
                                      [2, 1, 3, 0, 4])

    def test_depth_zero(self):
        g = random_graph(10, 20, seed=1)
        batch = sample_sequences(g, 0, 8)
        assert np.all(batch.lengths == 1)
        np.testing.assert_array_equal(batch.indices[:, 0], np.arange(10))
        assert not batch.mask[:, 1:].any()

    def test_star_truncation(self):
        g = star_graph(20)
        batch = sample_sequences(g, 1, 4)
        np.testing.assert_array_equal(batch.indices[0], [0, 1, 2, 3])
        assert batch.lengths[0] == 4

    def test_deterministic(self):
        g = random_graph(30, 70, seed=2)
        a = sample_sequences(g, 2, 16)
        b = sample_sequences(g, 2, 16)
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_rows_start_at_self_and_are_distinct(self):
        g = random_graph(25, 50, seed=3)
        batch = sample_sequences(g, 3, 12)
        for v in range(25):
            row = batch.indices[v][:batch.lengths[v]]
            assert row[0] == v
            assert len(set(row.tolist())) == len(row)

    def test_padding_sentinel_and_mask(self):
        g = path_graph(4)
        batch = sample_sequences(g, 1, 8)
        for v in range(4):
            assert np.all(batch.indices[v][batch.lengths[v]:] == 0)
            assert batch.mask[v].sum() == batch.lengths[v]

    def test_order_respects_hop_distance(self):
        g = random_graph(20, 35, seed=4)
        k = 3
        batch = sample_sequences(g, k, 20)
        for v in range(20):
            row = batch.indices[v][:batch.lengths[v]]
            hops = [hop_of(g, v, int(u), k) for u in row]
            assert all(h is not None for h in hops)
            assert hops == sorted(hops)

    def test_matches_walk_reachability_oracle(self):
        for seed in range(20):
            g = random_graph(np.random.default_rng(seed).integers(2, 13), 14,
                             seed=seed)
            for k in range(4):
                batch = sample_sequences(g, k, 16)
                expected = walk_reachability_rows(g, k, 16)
                for v in range(g.num_nodes):
                    got = batch.indices[v][:batch.lengths[v]].tolist()
                    assert got == expected[v], (seed, k, v)

    def test_full_depth_gives_reachable_permutation(self):
        g = random_graph(15, 25, seed=5, allow_isolated=False)
        batch = sample_sequences(g, 15, 15)
        for v in range(15):
            row = set(batch.indices[v][:batch.lengths[v]].tolist())
            reachable = {u for u in range(15) if hop_of(g, v, u, 15) is not None}
            assert row == reachable

    def test_shuffle_mode_same_layers_different_order(self):
        g = random_graph(20, 45, seed=6)
        asc = sample_sequences(g, 2, 32)
        shuf = sample_sequences(g, 2, 32, order="shuffle", seed=11)
        shuf2 = sample_sequences(g, 2, 32, order="shuffle", seed=11)
        np.testing.assert_array_equal(shuf.indices, shuf2.indices)
        different = False
        for v in range(20):
            a = asc.indices[v][:asc.lengths[v]]
            s = shuf.indices[v][:shuf.lengths[v]]
            # same node set per hop layer, possibly different order
            ha = [hop_of(g, v, int(u), 2) for u in a]
            hs = [hop_of(g, v, int(u), 2) for u in s]
            assert ha == hs
            assert sorted(a.tolist()) == sorted(s.tolist())
            different |= a.tolist() != s.tolist()
        assert different

    def test_rejects_bad_arguments(self):
        g = path_graph(3)
        with pytest.raises(ValidationError):
            sample_sequences(g, -1, 4)
        with pytest.raises(ValidationError):
            sample_sequences(g, 2, 0)
        with pytest.raises(ValidationError):
            sample_sequences(g, 2, 4, order="sideways")


class TestHopOf:
    def test_self_distance(self):
        g = path_graph(3)
        assert hop_of(g, 0, 0, 2) == 0

    def test_path_distance(self):
        g = path_graph(3)
        assert hop_of(g, 0, 2, 2) == 2

    def test_beyond_depth_is_none(self):
        g = path_graph(3)
        assert hop_of(g, 0, 2, 1) is None

    def test_disconnected_is_none(self):
        g = random_graph(6, 2, seed=0)
        comp = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for w in g.neighbors(u):
                    if int(w) not in comp:
                        comp.add(int(w))
                        nxt.append(int(w))
            frontier = nxt
        outside = [v for v in range(6) if v not in comp]
        if outside:
            assert hop_of(g, 0, outside[0], 6) is None


class TestFormatBatch:
    def test_dump_shape(self):
        g = path_graph(5)
        batch = sample_sequences(g, 2, 6)
        text = format_batch(batch)
        lines = text.strip().split("\n")
        assert len(lines) == 5
        assert lines[2].startswith("2: 2,1,3,0,4,0 | 111110")
