import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhaug.data import (
    GraphFormatError,
    SbmSpec,
    format_graph,
    gen_complete,
    gen_grid,
    gen_path,
    gen_sbm,
    gen_star,
    load_graph,
    parse_graph,
    save_graph,
)
from mhaug.graph import Graph, GraphValidationError

MINIMAL = "1 0 1 0\n0.0\n-1\n0\n0\n0\n"


class TestFormat:
    def test_minimal(self):
        g = parse_graph(MINIMAL)
        assert g.num_nodes == 1 and g.num_edges == 0

    def test_duplicate_edge(self):
        with pytest.raises(GraphValidationError, match="duplicate"):
            parse_graph("2 2 1 0\n0 1\n1 0\n0.0\n0.0\n-1\n-1\n0 0\n0 0\n0 0\n")

    @pytest.mark.parametrize("text, line", [
        ("1 0 1\n", 1),
        ("2 1 1 0\n0 x\n", 2),
        ("2 1 1 0\n0 1\n0.5\n", 4),
        ("1 0 2 0\n0.5\n", 2),
        ("1 0 1 1\n0.5\n0\n1 1\n", 4),
        ("1 0 1 1\n0.5\n0\n1\n0\n0\nextra\n", 7),
        ("1 0 1 0\nabc\n-1\n0\n0\n0\n", 2),
    ])
    def test_parse_errors_carry_line(self, text, line):
        with pytest.raises(GraphFormatError) as info:
            parse_graph(text)
        assert info.value.lineno == line
        assert str(info.value).startswith(f"line {line}:")

    def test_label_too_large(self):
        with pytest.raises(GraphValidationError):
            parse_graph("1 0 1 1\n0.0\n1\n0\n0\n0\n")

    def test_round_trip_bytes(self, tmp_path):
        g = gen_sbm(SbmSpec(nodes_per_block=10, feature_dim=3), seed=4)
        path = tmp_path / "g.txt"
        save_graph(g, path)
        raw = path.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")
        again = tmp_path / "h.txt"
        save_graph(load_graph(path), again)
        assert again.read_bytes() == raw
        back = load_graph(path)
        assert np.array_equal(back.features, g.features)
        assert np.array_equal(back.test_mask, g.test_mask)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, n, d, seed):
        r = np.random.default_rng(seed)
        iu, ju = np.triu_indices(n, 1)
        hit = r.random(iu.size) < 0.4
        labels = r.integers(-1, 3, n)
        labeled = np.flatnonzero(labels >= 0)
        train = np.zeros(n, bool)
        train[labeled[: len(labeled) // 2]] = True
        g = Graph(n, np.stack([iu[hit], ju[hit]], 1), r.normal(size=(n, d)) * 10.0 ** r.integers(-5, 5),
                  labels, train, np.zeros(n, bool), np.zeros(n, bool), num_classes=3)
        text = format_graph(g)
        assert format_graph(parse_graph(text)) == text
        assert np.array_equal(parse_graph(text).features, g.features)


class TestGenerators:
    def test_sbm_two_triangles(self):
        g = gen_sbm(SbmSpec(blocks=2, nodes_per_block=3, p_in=1.0, p_out=0.0, labels_per_class=1), seed=0)
        assert sorted(map(tuple, g.edges.tolist())) == [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]

    def test_sbm_deterministic(self):
        a = format_graph(gen_sbm(SbmSpec(), seed=11))
        assert a == format_graph(gen_sbm(SbmSpec(), seed=11))
        assert a != format_graph(gen_sbm(SbmSpec(), seed=12))

    def test_sbm_edge_count_binomial(self):
        spec = SbmSpec()
        n_in = 2 * 100 * 99 // 2
        n_out = 100 * 100
        mean = n_in * spec.p_in + n_out * spec.p_out
        sd = np.sqrt(n_in * spec.p_in * (1 - spec.p_in) + n_out * spec.p_out * (1 - spec.p_out))
        for seed in range(20):
            assert abs(gen_sbm(spec, seed).num_edges - mean) <= 3 * sd

    def test_sbm_splits(self):
        g = gen_sbm(SbmSpec(), seed=0)
        assert g.train_mask.sum() == 10 and g.val_mask.sum() == 95 and g.test_mask.sum() == 95
        for c in range(2):
            assert (g.train_mask & (g.labels == c)).sum() == 5
        big = gen_sbm(SbmSpec(nodes_per_block=700, p_in=0.01, p_out=0.001), seed=0)
        assert big.val_mask.sum() == 500

    def test_sbm_features(self):
        g = gen_sbm(SbmSpec(feature_noise=0.0, feature_dim=4), seed=0)
        assert np.array_equal(g.features, np.eye(4)[g.labels])

    @pytest.mark.parametrize("kw", [dict(p_in=0.1, p_out=0.2), dict(feature_dim=1), dict(labels_per_class=101),
                                    dict(feature_noise=-1.0)])
    def test_sbm_spec_invalid(self, kw):
        with pytest.raises(ValueError):
            SbmSpec(**kw)

    @pytest.mark.parametrize("r, c", [(10, 10), (1, 5), (3, 7)])
    def test_grid(self, r, c):
        g = gen_grid(r, c)
        assert g.num_nodes == r * c and g.num_edges == 2 * r * c - r - c
        assert all(abs(u - v) in (1, c) for u, v in g.edges.tolist())

    def test_grid_row_major(self):
        assert gen_grid(2, 2).edges.tolist() == [[0, 1], [0, 2], [1, 3], [2, 3]]

    def test_small_generators(self):
        assert gen_complete(4).num_edges == 6
        s = gen_star(4)
        assert s.num_nodes == 5 and s.num_edges == 4 and set(s.edges[:, 0].tolist()) == {0}
        assert gen_path(5).edges.tolist() == [[0, 1], [1, 2], [2, 3], [3, 4]]
        assert gen_path(1).num_edges == 0

    @pytest.mark.parametrize("fn, arg", [(gen_complete, 0), (gen_star, 0), (gen_path, 0)])
    def test_nonpositive(self, fn, arg):
        with pytest.raises(ValueError):
            fn(arg)
