"""B 样条基、KAN 层与适配器测试"""
import numpy as np
import pytest

from autograd import Tensor, backward, finite_diff_check, mul, tensor_sum
from errors import ConfigError, DimensionError
from kan import (
    KanAdapter, KanLayer, MlpAdapter, SplineGrid, adapter_forward, break_even_threshold,
    bspline_basis, count_params, kan_adapter_param_count, kan_layer_forward,
    kan_layer_param_count, kan_stack_forward, mlp_adapter_param_count,
)


def scalar_basis(x, knots, j, k):
    """逐个函数递归的 Cox-de Boor，作为独立对照"""
    if k == 0:
        return 1.0 if knots[j] <= x < knots[j + 1] else 0.0
    left = (x - knots[j]) / (knots[j + k] - knots[j]) * scalar_basis(x, knots, j, k - 1)
    right = (knots[j + k + 1] - x) / (knots[j + k + 1] - knots[j + 1]) * scalar_basis(x, knots, j + 1, k - 1)
    return left + right


def brute_force_layer(layer, x):
    """按边逐项求和的 KAN 层"""
    grid = layer.grid
    out = np.zeros((x.shape[0], layer.n_out))
    for n in range(x.shape[0]):
        for q in range(layer.n_out):
            for p in range(layer.n_in):
                xp = x[n, p]
                base = layer.base_weight.data[q, p] * xp / (1.0 + np.exp(-xp))
                spline = 0.0
                xc = min(max(xp, grid.lo), grid.hi)
                for j in range(grid.n_basis):
                    spline += layer.spline_coeffs.data[q, p, j] * scalar_basis(xc, grid.knots, j, grid.degree)
                out[n, q] += layer.edge_scale.data[q, p] * (base + spline)
    return out


class TestSplineGrid:
    def test_knot_vector(self):
        grid = SplineGrid(degree=3, intervals=5)
        knots = grid.knots
        assert len(knots) == 5 + 2 * 3 + 1
        assert np.all(np.diff(knots) > 0)
        np.testing.assert_allclose(np.diff(knots), 0.4)
        assert knots[3] == pytest.approx(-1.0) and knots[8] == pytest.approx(1.0)
        assert grid.n_basis == 8

    @pytest.mark.parametrize("grid", [
        SplineGrid(intervals=0),
        SplineGrid(lo=1.0, hi=1.0),
        SplineGrid(lo=2.0, hi=-1.0),
    ])
    def test_degenerate_grid(self, grid):
        with pytest.raises(ConfigError):
            bspline_basis(0.0, grid)


class TestBasis:
    def test_degree_zero_indicator(self):
        basis = bspline_basis(-0.9, SplineGrid(degree=0, intervals=4))
        np.testing.assert_array_equal(basis, [1.0, 0.0, 0.0, 0.0])

    def test_partition_of_unity(self, rng):
        x = rng.uniform(-1.0, 1.0, size=10_000)
        basis = bspline_basis(x, SplineGrid())
        assert np.max(np.abs(basis.sum(axis=-1) - 1.0)) < 1e-9
        assert np.all(basis >= 0.0)

    def test_right_endpoint_included(self):
        assert bspline_basis(1.0, SplineGrid()).sum() == pytest.approx(1.0, abs=1e-12)

    def test_matches_scalar_recursion(self):
        grid = SplineGrid(degree=3, intervals=5)
        expected = [scalar_basis(0.0, grid.knots, j, 3) for j in range(grid.n_basis)]
        np.testing.assert_allclose(bspline_basis(0.0, grid), expected, atol=1e-12)

    def test_matches_scalar_recursion_random(self, rng):
        grid = SplineGrid(degree=2, intervals=7, lo=-0.5, hi=1.5)
        for x in rng.uniform(-0.5, 1.5, size=20):
            expected = [scalar_basis(x, grid.knots, j, 2) for j in range(grid.n_basis)]
            np.testing.assert_allclose(bspline_basis(x, grid), expected, atol=1e-12)

    def test_local_support(self, rng):
        grid = SplineGrid()
        knots = grid.knots
        x = rng.uniform(-1.0, 1.0, size=2000)
        basis = bspline_basis(x, grid)
        for j in range(grid.n_basis):
            outside = (x < knots[j]) | (x > knots[j + grid.degree + 1])
            assert np.all(basis[outside, j] == 0.0)

    def test_inputs_clamped(self):
        grid = SplineGrid()
        np.testing.assert_array_equal(bspline_basis(5.0, grid), bspline_basis(1.0, grid))
        np.testing.assert_array_equal(bspline_basis(-3.0, grid), bspline_basis(-1.0, grid))


class TestKanLayer:
    def test_zero_spline_is_base_path(self, rng):
        layer = KanLayer(4, 3, rng=rng)
        layer.spline_coeffs.data = np.zeros_like(layer.spline_coeffs.data)
        x = rng.uniform(-1, 1, size=(6, 4))
        expected = (x / (1.0 + np.exp(-x))) @ layer.base_weight.data.T
        np.testing.assert_allclose(layer(Tensor(x)).data, expected, rtol=1e-12, atol=1e-14)

    def test_one_hot_coefficient(self):
        grid = SplineGrid()
        layer = KanLayer(1, 1, grid, zero_init=True)
        coeffs = np.zeros((1, 1, grid.n_basis))
        coeffs[0, 0, 4] = 2.5
        layer.spline_coeffs.data = coeffs
        out = layer(Tensor([[0.1]])).data
        assert out[0, 0] == pytest.approx(2.5 * bspline_basis(0.1, grid)[4], abs=1e-14)

    @pytest.mark.parametrize("n_in,n_out", [(1, 1), (2, 5), (4, 3), (5, 5), (3, 1)])
    def test_brute_force_equivalence(self, n_in, n_out):
        rng = np.random.default_rng(n_in * 10 + n_out)
        layer = KanLayer(n_in, n_out, rng=rng)
        layer.edge_scale.data = rng.uniform(0.5, 1.5, size=(n_out, n_in))
        x = rng.uniform(-1, 1, size=(100, n_in))
        np.testing.assert_allclose(kan_layer_forward(layer, Tensor(x)).data, brute_force_layer(layer, x),
                                   rtol=0, atol=1e-10)

    def test_leading_dimensions_kept(self, rng):
        layer = KanLayer(3, 2, rng=rng)
        assert layer(Tensor(rng.uniform(-1, 1, size=(2, 4, 3)))).shape == (2, 4, 2)

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            KanLayer(3, 2, rng=rng)(Tensor(np.zeros((4, 2))))

    def test_gradient(self, rng):
        layer = KanLayer(4, 3, rng=rng)
        weights = Tensor(rng.uniform(-1, 1, size=(6, 3)))
        err = finite_diff_check(lambda t: tensor_sum(mul(layer(t), weights)), rng.uniform(-0.9, 0.9, size=(6, 4)))
        assert err < 1e-5

    def test_parameter_gradients_nonzero(self, rng):
        layer = KanLayer(3, 2, rng=rng)
        backward(tensor_sum(mul(layer(Tensor(rng.uniform(-1, 1, size=(5, 3)))), 1.0)))
        for name, param in layer.named_parameters():
            assert np.any(param.grad != 0.0), name


class TestKanStack:
    def test_zero_spline_composition(self, rng):
        down, up = KanLayer(3, 2, rng=rng), KanLayer(2, 3, rng=rng)
        for layer in (down, up):
            layer.spline_coeffs.data = np.zeros_like(layer.spline_coeffs.data)
        x = rng.uniform(-1, 1, size=(4, 3))

        def base(v, w):
            return (v / (1.0 + np.exp(-v))) @ w.T

        expected = base(base(x, down.base_weight.data), up.base_weight.data)
        np.testing.assert_allclose(kan_stack_forward(down, up, Tensor(x)).data, expected, atol=1e-12)

    def test_identity_down_layer(self, rng):
        down = KanLayer.identity(2)
        up = KanLayer(2, 3, rng=rng)
        x = rng.uniform(-1, 1, size=(50, 2))
        np.testing.assert_allclose(down(Tensor(x)).data, x, atol=1e-6)
        np.testing.assert_allclose(kan_stack_forward(down, up, Tensor(x)).data, up(Tensor(x)).data, atol=1e-6)

    def test_mismatch(self, rng):
        with pytest.raises(DimensionError):
            kan_stack_forward(KanLayer(3, 2, rng=rng), KanLayer(3, 3, rng=rng), Tensor(np.zeros((1, 3))))

    def test_gradient(self, rng):
        down, up = KanLayer(4, 2, rng=rng), KanLayer(2, 4, rng=rng)
        weights = Tensor(rng.uniform(-1, 1, size=(5, 4)))
        err = finite_diff_check(lambda t: tensor_sum(mul(kan_stack_forward(down, up, t), weights)),
                                rng.uniform(-0.9, 0.9, size=(5, 4)))
        assert err < 1e-5


class TestAdapter:
    def _randomize_up(self, adapter, rng):
        adapter.up.spline_coeffs.data = rng.normal(0, 0.2, size=adapter.up.spline_coeffs.shape)
        adapter.up.base_weight.data = rng.uniform(-0.5, 0.5, size=adapter.up.base_weight.shape)

    def test_zero_init_with_zero_thermal_is_identity(self, rng):
        adapter = KanAdapter(8, 4, rng=rng)
        f_rgb = rng.normal(size=(4, 4, 8))
        out = adapter_forward(adapter, Tensor(f_rgb), Tensor(np.zeros((2, 2, 4))))
        np.testing.assert_array_equal(out.data, f_rgb)

    def test_zero_init_residual(self, rng):
        adapter = KanAdapter(8, 4, rng=rng)
        adapter.align_proj.bias.data = rng.normal(size=8)
        f_rgb = rng.normal(size=(4, 4, 8))
        thermal = rng.normal(size=(2, 2, 4))
        prompt = adapter.align(Tensor(thermal), 4, 4).data
        out = adapter(Tensor(f_rgb), Tensor(thermal)).data
        np.testing.assert_array_equal(out, f_rgb + prompt)

    def test_pure_thermal_path(self, rng):
        adapter = KanAdapter(8, 4, rng=rng)
        self._randomize_up(adapter, rng)
        thermal = Tensor(rng.normal(size=(4, 4, 4)))
        prompt = adapter.align(thermal, 4, 4)
        stack = kan_stack_forward(adapter.down, adapter.up, Tensor(prompt.data.reshape(16, 8))).data
        out = adapter(Tensor(np.zeros((4, 4, 8))), thermal).data
        np.testing.assert_allclose(out, stack.reshape(4, 4, 8) + prompt.data, atol=1e-12)

    def test_algebraic_decomposition(self, rng):
        adapter = KanAdapter(8, 4, rng=rng)
        self._randomize_up(adapter, rng)
        f_rgb = rng.normal(0, 0.5, size=(4, 4, 8))
        thermal = Tensor(rng.normal(size=(8, 8, 4)))
        prompt = adapter.align(thermal, 4, 4).data
        out = adapter(Tensor(f_rgb), thermal).data
        stack = kan_stack_forward(adapter.down, adapter.up, Tensor((f_rgb + prompt).reshape(16, 8))).data
        np.testing.assert_allclose(out - f_rgb - prompt, stack.reshape(4, 4, 8), atol=1e-10)

    def test_channel_mismatch(self, rng):
        adapter = KanAdapter(8, 4, rng=rng)
        with pytest.raises(ConfigError):
            adapter(Tensor(np.zeros((2, 2, 8))), Tensor(np.zeros((2, 2, 3))))
        with pytest.raises(ConfigError):
            adapter(Tensor(np.zeros((2, 2, 6))), Tensor(np.zeros((2, 2, 4))))

    def test_reduction_must_divide(self):
        with pytest.raises(ConfigError):
            KanAdapter(10, 4, reduction=4)

    def test_all_parameters_receive_gradient(self, rng):
        adapter = KanAdapter(8, 4, rng=rng)
        self._randomize_up(adapter, rng)
        weights = Tensor(rng.uniform(-1, 1, size=(4, 4, 8)))
        out = adapter(Tensor(rng.normal(0, 0.5, size=(4, 4, 8))), Tensor(rng.normal(size=(4, 4, 4))))
        backward(tensor_sum(mul(out, weights)))
        for name, param in adapter.named_parameters():
            assert param.grad is not None and np.any(param.grad != 0.0), name

    def test_mlp_adapter_same_contract(self, rng):
        adapter = MlpAdapter(8, 4, rng=rng)
        f_rgb = rng.normal(size=(4, 4, 8))
        out = adapter(Tensor(f_rgb), Tensor(np.zeros((4, 4, 4)))).data
        np.testing.assert_array_equal(out, f_rgb)


class TestParamCounts:
    def test_layer_formula(self):
        assert kan_layer_param_count(8, 8, 5, 3) == 640
        assert kan_layer_param_count(1, 1, 1, 0) == 3

    def test_layer_count_matches_module(self):
        layer = KanLayer(8, 8, SplineGrid(degree=3, intervals=5))
        assert count_params(layer) == 640
        tiny = KanLayer(1, 1, SplineGrid(degree=0, intervals=1))
        assert count_params(tiny) == 3

    def test_adapter_counts_match_modules(self):
        grid = SplineGrid()
        kan = KanAdapter(32, 16, reduction=4, grid=grid)
        mlp = MlpAdapter(32, 16, reduction=4)
        assert count_params(kan) == kan_adapter_param_count(32, 16, 4, grid.intervals, grid.degree)
        assert count_params(mlp) == mlp_adapter_param_count(32, 16, 4)

    def test_break_even_threshold(self):
        # C=32, r=4: MLP 无对齐投影部分为 32*8+8+8*32+32 = 552，KAN 每条边 G+k+2 个参数、共 512 条边
        threshold = break_even_threshold(32, 4)
        assert threshold == pytest.approx(552 / 512)

    def test_kan_smaller_iff_below_threshold(self):
        for channels, reduction, ratio in [(32, 4, 1), (32, 4, 16), (64, 2, 8), (128, 4, 24)]:
            threshold = break_even_threshold(channels, reduction, ratio)
            for intervals, degree in [(1, 0), (5, 3), (3, 1), (20, 3)]:
                kan = kan_adapter_param_count(channels, 0, reduction, intervals, degree, include_align=False)
                mlp = mlp_adapter_param_count(channels, 0, reduction, ratio, include_align=False)
                assert (kan < mlp) == (intervals + degree + 2 < threshold)
