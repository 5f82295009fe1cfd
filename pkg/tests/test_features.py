import math

import numpy as np
import pytest

from grfgp.features import (
    FeatureMatrix,
    ModulationSpec,
    WalkConfig,
    bound_constant_c,
    concentration_bound,
    dense_kernel,
    kernel_entry,
    kernel_matvec,
    sample_feature_basis,
    sample_features,
    sample_features_adhoc,
    sparsity_bound,
)
from grfgp.graphs import Graph, WalkMatrix, generate, normalized_adjacency
from grfgp.solvers import matrix_power_series

from conftest import connected_graph, random_graph


def series_oracle(walk: WalkMatrix, mod: ModulationSpec, l_max: int) -> np.ndarray:
    """Dense Psi^T Psi for the truncated series (independent of the sampler)."""
    psi = matrix_power_series(walk.to_dense(), mod.coefficients(l_max + 1))
    return psi.T @ psi


class TestModulationSpec:
    def test_diffusion_formula(self):
        spec = ModulationSpec.diffusion(beta=2.0, sigma_f=3.0, l_max=4)
        f = spec.coefficients()
        expect = [3.0 * math.exp(-1.0) * 1.0**l / math.factorial(l) for l in range(5)]
        assert np.allclose(f, expect, rtol=1e-14)

    def test_free_passthrough_and_truncation(self):
        spec = ModulationSpec.free([1.0, -0.5, 0.25])
        assert np.array_equal(spec.coefficients(5), [1.0, -0.5, 0.25, 0.0, 0.0])
        assert np.array_equal(spec.coefficients(2), [1.0, -0.5])

    def test_validation(self):
        with pytest.raises(ValueError):
            ModulationSpec(kind="diffusion_shape", l_max=3, beta=-1.0)
        with pytest.raises(ValueError):
            ModulationSpec(kind="free", l_max=2, coeffs=np.ones(2))
        with pytest.raises(ValueError):
            ModulationSpec(kind="bogus", l_max=1)

    def test_free_random_decaying_scale(self):
        spec = ModulationSpec.free_random(8, seed=0)
        assert len(spec.coeffs) == 9

    def test_log_beta_gradient_matches_fd(self):
        spec = ModulationSpec.diffusion(beta=1.7, sigma_f=0.9, l_max=6)
        h = 1e-6
        up = spec.with_params(beta=1.7 * math.exp(h)).coefficients()
        dn = spec.with_params(beta=1.7 * math.exp(-h)).coefficients()
        fd = (up - dn) / (2 * h)
        assert np.allclose(spec.d_coeffs_d_log_beta(), fd, rtol=1e-6, atol=1e-12)


class TestWalkConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            WalkConfig(0)
        with pytest.raises(ValueError):
            WalkConfig(1, p_halt=1.0)
        with pytest.raises(ValueError):
            WalkConfig(1, l_max=-1)

    def test_defaults_for(self):
        g, _ = generate("grid", {"rows": 10, "cols": 10}, seed=0)
        cfg = WalkConfig.defaults_for(g)
        assert cfg.num_walkers == math.ceil(4 * g.degrees.mean())
        assert cfg.p_halt == 0.1
        assert 3 <= cfg.l_max <= 10


class TestSampler:
    def test_length_zero_is_scaled_identity(self):
        g = connected_graph(0, n=8)
        walk = WalkMatrix.from_adjacency(g)
        phi = sample_features(g, walk, ModulationSpec.free([2.0]), WalkConfig(5, 0.5, 0, seed=7))
        assert np.array_equal(phi.matrix.toarray(), 2.0 * np.eye(8))
        assert np.array_equal(dense_kernel(phi), 4.0 * np.eye(8))

    def test_zero_modulation_gives_zero_features(self):
        g = connected_graph(1, n=6)
        walk = WalkMatrix.from_adjacency(g)
        for sampler in (sample_features, sample_features_adhoc):
            phi = sampler(g, walk, ModulationSpec.free([0.0, 0.0]), WalkConfig(4, 0.3, 1, seed=1))
            assert phi.matrix.nnz == 0

    def test_path3_unbiased_mean(self, path3):
        # one walker, f = (1, 0.3), p = 0.5 on the raw adjacency:
        # the (0, 2) kernel entry of the squared series is 0.09
        walk = WalkMatrix.from_adjacency(path3)
        mod = ModulationSpec.free([1.0, 0.3])
        target = series_oracle(walk, mod, 1)[0, 2]
        assert target == pytest.approx(0.09, abs=1e-15)
        m = 100_000
        vals = np.empty(m)
        for d in range(m):
            phi = sample_features(path3, walk, mod, WalkConfig(1, 0.5, 1, seed=d))
            vals[d] = (phi.matrix[0] @ phi.matrix[2].T)[0, 0]
        se = vals.std(ddof=1) / math.sqrt(m)
        assert abs(vals.mean() - target) < 4 * se

    def test_adhoc_lmax0_identical_to_unbiased(self):
        g = connected_graph(2, n=7)
        walk = WalkMatrix.from_adjacency(g)
        mod = ModulationSpec.free([1.3])
        cfg = WalkConfig(6, 0.4, 0, seed=3)
        a = sample_features(g, walk, mod, cfg).matrix
        b = sample_features_adhoc(g, walk, mod, cfg).matrix
        assert (a != b).nnz == 0

    def test_adhoc_one_step_enumeration(self, path3):
        # enumeration oracle for one-step walks without reweighting:
        # E[phi(i)] = f0 e_i + f1 (1-p) sum_j (W_ij / d_i) e_j
        walk = WalkMatrix.from_adjacency(path3)
        mod = ModulationSpec.free([1.0, 1.0])
        p = 0.5
        w = walk.to_dense()
        deg = path3.degrees.astype(float)
        expected_rows = np.eye(3) + (1 - p) * (w / deg[:, None])
        target = expected_rows[0] @ expected_rows[2]
        assert target == pytest.approx((1 - p) ** 2)
        m = 60_000
        vals = np.empty(m)
        for d in range(m):
            phi = sample_features_adhoc(path3, walk, mod, WalkConfig(1, p, 1, seed=d))
            vals[d] = (phi.matrix[0] @ phi.matrix[2].T)[0, 0]
        se = vals.std(ddof=1) / math.sqrt(m)
        assert abs(vals.mean() - target) < 4 * se

    def test_determinism_same_config(self):
        g = connected_graph(3, n=10)
        walk = normalized_adjacency(g)
        mod = ModulationSpec.free_random(3, seed=0)
        cfg = WalkConfig(9, 0.25, 3, seed=42)
        a = sample_features(g, walk, mod, cfg).matrix
        b = sample_features(g, walk, mod, cfg).matrix
        assert np.array_equal(a.data, b.data)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.indptr, b.indptr)

    def test_sparsity_hard_cap(self):
        for seed in range(4):
            g = connected_graph(seed, n=30)
            walk = normalized_adjacency(g)
            cfg = WalkConfig(5, 0.2, 4, seed=seed)
            phi = sample_features(g, walk, ModulationSpec.free_random(4, seed), cfg)
            assert phi.row_nnz().max() <= cfg.num_walkers * (cfg.l_max + 1)

    def test_row_l1_bounded_by_c(self):
        for seed in range(4):
            g = connected_graph(seed, n=20)
            walk = WalkMatrix.from_adjacency(g)
            mod = ModulationSpec.free_random(5, seed)
            cfg = WalkConfig(8, 0.3, 5, seed=seed)
            c = bound_constant_c(g, walk, mod, cfg.p_halt)
            phi = sample_features(g, walk, mod, cfg)
            assert phi.row_l1_norms().max() <= c + 1e-9

    def test_isolated_nodes_get_only_self_deposit(self):
        g = Graph.from_edges(3, [0], [1])  # node 2 isolated
        walk = WalkMatrix.from_adjacency(g)
        phi = sample_features(g, walk, ModulationSpec.free([1.0, 1.0]), WalkConfig(4, 0.5, 1, seed=0))
        row = phi.matrix[2].toarray().ravel()
        assert np.array_equal(row, [0.0, 0.0, 1.0])

    def test_nonfinite_load_error_names_node_and_walker(self):
        g = Graph.from_edges(2, [0], [1], [1e308])
        walk = WalkMatrix.from_adjacency(g)
        mod = ModulationSpec.free([1.0, 1.0, 1.0])
        for backend in ("cython", "python"):
            with pytest.raises(FloatingPointError, match=r"node 0, walker 0"):
                sample_features(g, walk, mod, WalkConfig(1, 0.5, 2, seed=1), backend=backend)

    def test_diagonal_bias_shrinks_linearly_in_walkers(self):
        g = connected_graph(5, n=10)
        walk = normalized_adjacency(g)
        mod = ModulationSpec.free([1.0, 0.8, 0.4])
        oracle = series_oracle(walk, mod, 2)[0, 0]
        m = 4000
        bias = []
        for n in (10, 20, 40, 80):
            vals = np.empty(m)
            for d in range(m):
                phi = sample_features(g, walk, mod, WalkConfig(n, 0.3, 2, seed=d))
                vals[d] = (phi.matrix[0] @ phi.matrix[0].T)[0, 0]
            bias.append(abs(vals.mean() - oracle))
        assert bias[-1] <= bias[0] / 4.0
        assert bias[1] < bias[0] and bias[2] < bias[1]


class TestKernelOps:
    def test_matvec_scaled_identity(self):
        g = connected_graph(0, n=8)
        walk = WalkMatrix.from_adjacency(g)
        phi = sample_features(g, walk, ModulationSpec.free([2.0]), WalkConfig(3, 0.5, 0, seed=0))
        v = np.arange(8.0)
        assert np.allclose(kernel_matvec(phi, v), 4.0 * v)
        assert np.array_equal(kernel_matvec(phi, np.zeros(8)), np.zeros(8))

    def test_matvec_matches_dense(self):
        g = connected_graph(1, n=6)
        walk = normalized_adjacency(g)
        phi = sample_features(g, walk, ModulationSpec.free_random(3, 1), WalkConfig(5, 0.3, 3, seed=2))
        v = np.random.default_rng(0).standard_normal(6)
        dense = dense_kernel(phi) @ v
        assert np.abs(kernel_matvec(phi, v) - dense).max() < 1e-12

    def test_matvec_dimension_mismatch(self):
        g = connected_graph(1, n=6)
        phi = sample_features(
            g, WalkMatrix.from_adjacency(g), ModulationSpec.free([1.0]), WalkConfig(2, 0.5, 0, seed=0)
        )
        with pytest.raises(ValueError):
            kernel_matvec(phi, np.zeros(7))

    def test_entry_diagonal_single_walker(self):
        g = connected_graph(2, n=5)
        walk = WalkMatrix.from_adjacency(g)
        phi = sample_features(g, walk, ModulationSpec.free([1.0]), WalkConfig(1, 0.5, 0, seed=0))
        assert kernel_entry(phi, 2, 2) == 1.0

    def test_disconnected_pair_entry_zero(self):
        g = Graph.from_edges(4, [0, 2], [1, 3])  # two components
        walk = WalkMatrix.from_adjacency(g)
        phi = sample_features(g, walk, ModulationSpec.free([1.0, 0.5]), WalkConfig(6, 0.4, 1, seed=1))
        assert kernel_entry(phi, 0, 3) == 0.0

    def test_dense_kernel_psd_both_variants(self):
        g = connected_graph(3, n=5)
        walk = normalized_adjacency(g)
        mod = ModulationSpec.free_random(3, 3)
        cfg = WalkConfig(7, 0.3, 3, seed=5)
        for sampler in (sample_features, sample_features_adhoc):
            k = dense_kernel(sampler(g, walk, mod, cfg))
            lam = np.linalg.eigvalsh(k)
            assert lam.min() >= -1e-9 * max(lam.max(), 1e-30)
            assert lam.min() >= -1e-10

    def test_dense_kernel_cap(self):
        g = connected_graph(0, n=8)
        phi = sample_features(
            g, WalkMatrix.from_adjacency(g), ModulationSpec.free([1.0]), WalkConfig(1, 0.5, 0, seed=0)
        )
        with pytest.raises(ValueError, match="capped"):
            dense_kernel(phi, cap=4)


class TestBounds:
    def test_constant_c_order_zero(self):
        g = connected_graph(0, n=6)
        walk = WalkMatrix.from_adjacency(g)
        assert bound_constant_c(g, walk, ModulationSpec.free([1.0]), 0.5) == 1.0

    def test_constant_c_arithmetic(self, path3):
        # max stored walk entry times row degree = 2, over (1 - p) = 4; f = (1, 1) -> c = 5
        walk = WalkMatrix.from_adjacency(path3)
        c = bound_constant_c(path3, walk, ModulationSpec.free([1.0, 1.0]), 0.5)
        assert c == pytest.approx(5.0)

    def test_constant_c_diffusion_series_cross_check(self):
        g, _ = generate("ring", {"num_nodes": 12}, seed=0)
        walk = WalkMatrix.from_adjacency(g)
        mod = ModulationSpec.diffusion(beta=1.0, sigma_f=1.0, l_max=10)
        c = bound_constant_c(g, walk, mod, 0.1)
        rho = 2.0 / 0.9
        manual = math.fsum(
            abs(f) * rho**l for l, f in enumerate(mod.coefficients())
        )
        assert c == pytest.approx(manual, rel=1e-12)

    def test_sparsity_bound_cancellation(self):
        assert sparsity_bound(1, 0.5, 0.5) == pytest.approx(1.0)

    def test_sparsity_bound_monotone_in_p(self):
        values = [sparsity_bound(20, p, 0.05) for p in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a > b for a, b in zip(values, values[1:]))
        # p -> 1 limit: walks die almost immediately and the bound vanishes
        assert sparsity_bound(20, 1.0 - 1e-12, 0.05) < 5.0

    def test_concentration_bound_clamped_vacuous(self):
        assert concentration_bound(10, 1.0, 0.0) == 1.0
        # raw value 2 exp(-0.0996...) ~ 1.81 also clamps to 1
        assert concentration_bound(50, 2.0, 0.5) == 1.0

    def test_concentration_bound_vanishes_for_many_walkers(self):
        # exponent behaves like -t^2 n / 8 c^4 once n is past the small-n dip
        vals = [concentration_bound(n, 1.0, 2.0) for n in (2, 4, 8, 64, 512)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-6

    def test_bound_validation(self):
        with pytest.raises(ValueError):
            sparsity_bound(0, 0.5, 0.5)
        with pytest.raises(ValueError):
            concentration_bound(1, 0.0, 1.0)


class TestFeatureBasis:
    def test_combine_matches_fused_sampler(self):
        g = connected_graph(4, n=9)
        walk = normalized_adjacency(g)
        mod = ModulationSpec.free_random(4, seed=1)
        cfg = WalkConfig(6, 0.2, 4, seed=9)
        fused = sample_features(g, walk, mod, cfg).matrix
        basis = sample_feature_basis(g, walk, cfg)
        combined = basis.combine(mod.coefficients(5)).matrix
        assert np.abs(fused - combined).max() < 1e-14

    def test_length_zero_matrix_is_identity(self):
        g = connected_graph(4, n=9)
        basis = sample_feature_basis(g, normalized_adjacency(g), WalkConfig(5, 0.3, 2, seed=0))
        assert np.allclose(basis.length_matrix(0).toarray(), np.eye(9))

    def test_adhoc_basis(self):
        g = connected_graph(6, n=7)
        walk = normalized_adjacency(g)
        mod = ModulationSpec.free([0.5, 1.5, -0.2])
        cfg = WalkConfig(4, 0.4, 2, seed=3)
        fused = sample_features_adhoc(g, walk, mod, cfg).matrix
        basis = sample_feature_basis(g, walk, cfg, reweight=False)
        assert np.abs(fused - basis.combine(mod.coefficients(3)).matrix).max() < 1e-14


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        g = connected_graph(7, n=11)
        walk = normalized_adjacency(g)
        phi = sample_features(
            g, walk, ModulationSpec.free_random(3, 2), WalkConfig(5, 0.17, 3, seed=123)
        )
        path = tmp_path / "phi.txt"
        phi.save(path)
        back = FeatureMatrix.load(path)
        assert back.config == phi.config
        assert np.array_equal(back.matrix.data, phi.matrix.data)
        assert np.array_equal(back.matrix.indices, phi.matrix.indices)
        assert np.array_equal(back.matrix.indptr, phi.matrix.indptr)
