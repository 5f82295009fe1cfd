import numpy as np
import pytest

from grfgp.graphs import (
    Graph,
    IsolatedNodeError,
    Objective,
    WalkMatrix,
    approx_diameter,
    generate,
    laplacian,
    load_edge_list,
    normalized_adjacency,
    normalized_laplacian,
    save_edge_list,
)

from conftest import connected_graph, random_graph


class TestGraphConstruction:
    def test_two_node_edge(self):
        g = Graph.from_edges(2, [0], [1])
        assert g.num_nodes == 2 and g.num_edges == 1
        assert list(g.degrees) == [1, 1]
        assert np.allclose(g.weighted_degrees, [1.0, 1.0])

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            Graph.from_edges(3, [0, 1], [0, 2])

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            Graph.from_edges(3, [0, 1], [1, 0])

    def test_rejects_nonpositive_weight(self):
        with pytest.raises(ValueError, match="positive"):
            Graph.from_edges(2, [0], [1], [0.0])

    def test_symmetry_entrywise(self):
        for seed in range(5):
            g = random_graph(seed)
            a = g.to_scipy()
            assert (a != a.T).nnz == 0

    def test_degrees_count_stored_neighbors(self):
        g = random_graph(3)
        for i in range(g.num_nodes):
            assert g.degrees[i] == len(g.neighbors(i))


class TestLaplacians:
    def test_two_node_laplacian(self):
        g = Graph.from_edges(2, [0], [1])
        assert np.array_equal(laplacian(g).toarray(), [[1.0, -1.0], [-1.0, 1.0]])

    def test_empty_graph_laplacian_is_zero(self):
        g = Graph.from_edges(3, [], [])
        assert np.array_equal(laplacian(g).toarray(), np.zeros((3, 3)))

    def test_triangle_eigenvalues(self):
        g = Graph.from_edges(3, [0, 0, 1], [1, 2, 2])
        lam = np.linalg.eigvalsh(laplacian(g).toarray())
        assert np.allclose(lam, [0.0, 3.0, 3.0], atol=1e-12)

    def test_row_sums_zero(self):
        for seed in range(8):
            g = random_graph(seed, n=20)
            rows = np.asarray(laplacian(g).sum(axis=1)).ravel()
            scale = max(1.0, g.weighted_degrees.max())
            assert np.abs(rows).max() <= 1e-12 * scale

    def test_normalized_two_node(self):
        g = Graph.from_edges(2, [0], [1])
        lt = normalized_laplacian(g).toarray()
        assert np.allclose(lt, [[1.0, -1.0], [-1.0, 1.0]], atol=1e-15)
        assert np.allclose(np.linalg.eigvalsh(lt), [0.0, 2.0])

    def test_normalized_ring8_spectrum(self):
        g, _ = generate("ring", {"num_nodes": 8}, seed=0)
        lam = np.linalg.eigvalsh(normalized_laplacian(g).toarray())
        assert abs(lam[0]) < 1e-12
        assert lam.min() >= -1e-9 and lam.max() <= 2.0 + 1e-9

    def test_normalized_spectrum_bounds_random(self):
        for seed in range(6):
            g = connected_graph(seed, n=30)
            lam = np.linalg.eigvalsh(normalized_laplacian(g).toarray())
            assert lam.min() >= -1e-9 and lam.max() <= 2.0 + 1e-9

    def test_isolated_node_error_names_node(self):
        g = Graph.from_edges(3, [0], [1])
        with pytest.raises(IsolatedNodeError, match="node 2"):
            normalized_laplacian(g)
        with pytest.raises(IsolatedNodeError, match="node 2"):
            normalized_adjacency(g)


class TestNormalizedAdjacency:
    def test_two_node(self):
        g = Graph.from_edges(2, [0], [1])
        assert np.allclose(normalized_adjacency(g).to_dense(), [[0, 1], [1, 0]])

    def test_triangle_half(self):
        g = Graph.from_edges(3, [0, 0, 1], [1, 2, 2])
        wt = normalized_adjacency(g).to_dense()
        off = wt[~np.eye(3, dtype=bool)]
        assert np.allclose(off, 0.5)

    def test_star_hub_entries(self):
        g = Graph.from_edges(4, [0, 0, 0], [1, 2, 3])
        wt = normalized_adjacency(g).to_dense()
        assert np.allclose(wt[0, 1:], 1.0 / np.sqrt(3.0))

    def test_complement_identity(self):
        # normalised adjacency equals I minus the normalised Laplacian
        for seed in range(6):
            g = connected_graph(seed, n=25)
            wt = normalized_adjacency(g).to_dense()
            lt = normalized_laplacian(g).toarray()
            assert np.abs(wt - (np.eye(g.num_nodes) - lt)).max() <= 1e-12

    def test_spectrum_in_unit_interval(self):
        g = connected_graph(1, n=40)
        lam = np.linalg.eigvalsh(normalized_adjacency(g).to_dense())
        assert lam.min() >= -1.0 - 1e-9 and lam.max() <= 1.0 + 1e-9

    def test_walk_matrix_alignment_check(self):
        g = Graph.from_edges(2, [0], [1])
        with pytest.raises(ValueError):
            WalkMatrix(g, np.ones(5))

    def test_from_scipy_rejects_larger_support(self):
        g = Graph.from_edges(3, [0], [1])
        dense = np.zeros((3, 3))
        dense[0, 2] = dense[2, 0] = 1.0
        import scipy.sparse as sp

        with pytest.raises(ValueError, match="subset"):
            WalkMatrix.from_scipy(g, sp.csr_matrix(dense))


class TestGenerators:
    def test_grid_30x30(self):
        g, obj = generate("grid", {"rows": 30, "cols": 30}, seed=0)
        assert g.num_nodes == 900
        assert g.num_edges == 2 * 30 * 29  # 1740
        assert obj.num_nodes == 900

    def test_ring_degrees(self):
        g, _ = generate("ring", {"num_nodes": 10}, seed=0)
        assert np.all(g.degrees == 2)

    def test_ring_chords(self):
        g, _ = generate("ring", {"num_nodes": 10, "k": 4}, seed=0)
        assert np.all(g.degrees == 4)

    def test_sbm_degenerate_cliques(self):
        g, obj = generate(
            "sbm", {"block_sizes": [5, 5], "p_in": 1.0, "p_out": 0.0}, seed=3
        )
        a = g.to_scipy().toarray()
        assert np.array_equal(a[:5, :5], np.ones((5, 5)) - np.eye(5))
        assert np.array_equal(a[5:, 5:], np.ones((5, 5)) - np.eye(5))
        assert not a[:5, 5:].any()

    def test_unimodal_peak_at_center(self):
        g, obj = generate("unimodal", {"rows": 9, "cols": 9}, seed=0)
        assert obj.best_node == 40  # center of the grid

    def test_multimodal_has_peaks(self):
        _, obj = generate("multimodal", {"rows": 10, "cols": 10, "peaks": 3}, seed=5)
        assert obj.values.max() > obj.values.mean()

    def test_bit_reproducible(self):
        for kind, params in [
            ("ring", {"num_nodes": 12}),
            ("sbm", {"block_sizes": [6, 6], "p_in": 0.8, "p_out": 0.1}),
            ("multimodal", {"rows": 6, "cols": 7}),
        ]:
            g1, o1 = generate(kind, params, seed=9)
            g2, o2 = generate(kind, params, seed=9)
            assert np.array_equal(g1.indices, g2.indices)
            assert np.array_equal(g1.weights, g2.weights)
            assert np.array_equal(o1.values, o2.values)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            generate("grid", {"rows": 1, "cols": 5}, seed=0)
        with pytest.raises(ValueError):
            generate("ring", {"num_nodes": 2}, seed=0)
        with pytest.raises(ValueError):
            generate("sbm", {"block_sizes": [3], "p_in": 1.5, "p_out": 0.0}, seed=0)
        with pytest.raises(ValueError):
            generate("nope", {}, seed=0)
        with pytest.raises(ValueError):
            generate("grid", {"rows": 3, "cols": 3, "bogus": 1}, seed=0)

    def test_observation_noise_seeded_and_order_free(self):
        _, obj = generate("unimodal", {"rows": 5, "cols": 5, "noise_var": 0.5}, seed=1)
        a = obj.observe(7)
        b = obj.observe(3)
        assert obj.observe(7) == a and obj.observe(3) == b
        assert a != obj.values[7]  # noise actually applied


class TestEdgeListIO:
    def test_simple_path(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("0 1\n1 2\n")
        g, ids = load_edge_list(p)
        assert g.num_nodes == 3 and g.num_edges == 2
        assert list(ids) == [0, 1, 2]

    def test_comment_and_weight(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("# comment\n0 1 2.5\n")
        g, _ = load_edge_list(p, weighted=True)
        assert g.num_edges == 1
        assert g.weights[0] == 2.5

    def test_duplicate_collapse_unweighted(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("0 1\n1 0\n")
        g, _ = load_edge_list(p, weighted=False)
        assert g.num_edges == 1
        assert np.all(g.weights == 1.0)

    def test_duplicate_sum_weighted(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("0 1 1.5\n1 0 2.0\n")
        g, _ = load_edge_list(p, weighted=True)
        assert g.num_edges == 1
        assert g.weights[0] == 3.5

    def test_self_loops_dropped_and_ids_compacted(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("5 5\n10 20\n")
        g, ids = load_edge_list(p)
        assert g.num_nodes == 2 and g.num_edges == 1
        assert list(ids) == [10, 20]

    def test_malformed_line_number(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("0 1\nnot an edge here at all\n")
        with pytest.raises(ValueError, match="line 2"):
            load_edge_list(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("# nothing\n")
        with pytest.raises(ValueError, match="no edges"):
            load_edge_list(p)

    def test_round_trip(self, tmp_path):
        for seed in range(4):
            g = random_graph(seed, n=15)
            if g.num_edges == 0:
                continue
            p = tmp_path / f"g{seed}.txt"
            save_edge_list(g, p)
            g2, ids = load_edge_list(p, weighted=True)
            kept = np.flatnonzero(g.degrees > 0)  # isolated nodes are not representable
            assert np.array_equal(ids, kept)
            sub = g.to_scipy()[np.ix_(kept, kept)]
            assert (sub != g2.to_scipy()).nnz == 0

    def test_export_sorted_and_full_precision(self, tmp_path):
        g = Graph.from_edges(3, [1, 0], [2, 1], [1 / 3, 2 / 7])
        p = tmp_path / "g.txt"
        save_edge_list(g, p)
        lines = p.read_text().strip().split("\n")
        assert lines == sorted(lines)
        assert float(lines[0].split()[2]) == 2 / 7


class TestDiameter:
    def test_path_graph_exact(self):
        g = Graph.from_edges(5, [0, 1, 2, 3], [1, 2, 3, 4])
        assert approx_diameter(g) == 4

    def test_ring(self):
        g, _ = generate("ring", {"num_nodes": 12}, seed=0)
        assert approx_diameter(g) in (5, 6)
