"""工具函数与梯度校验入口测试"""
import hashlib

import numpy as np
import pytest

from gradcheck import SCALES, _spanning_inputs, layer_checks, run_gradcheck
from kan import SplineGrid, bspline_basis
from utils import canonical_json, derive_rng, quantize_u8, resolve_threads, round_half_away, stable_hash


def test_stable_hash_is_process_independent():
    assert stable_hash("train-00001") == int(hashlib.md5(b"train-00001").hexdigest()[:8], 16)
    assert stable_hash("a") != stable_hash("b")


def test_derived_streams():
    a = derive_rng(3, "mask", "s1", 0).random(4)
    b = derive_rng(3, "mask", "s1", 0).random(4)
    c = derive_rng(3, "mask", "s1", 1).random(4)
    d = derive_rng(4, "mask", "s1", 0).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_round_half_away():
    np.testing.assert_array_equal(round_half_away(np.array([0.5, 1.5, 2.5, -0.5, 0.49])),
                                  [1.0, 2.0, 3.0, -1.0, 0.0])


def test_quantize_u8():
    out = quantize_u8(np.array([-0.2, 0.0, 0.6 / 255, 0.5, 1.0, 1.3]))
    assert out.dtype == np.uint8
    np.testing.assert_array_equal(out, [0, 0, 1, 128, 255, 255])


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [1.5, "x"]}) == '{"a":[1.5,"x"],"b":1}'


def test_resolve_threads(monkeypatch):
    assert resolve_threads(4) == 4
    assert resolve_threads(0) == 1
    assert resolve_threads() == 1
    monkeypatch.setenv("KAN_SAM_THREADS", "3")
    assert resolve_threads() == 3


@pytest.mark.parametrize("n_tokens", [6, 16])
def test_layer_check_inputs_cover_every_basis(n_tokens):
    grid = SplineGrid()
    x = _spanning_inputs(np.random.default_rng(0), n_tokens, 8, grid)
    assert x.shape == (n_tokens, 8)
    assert grid.lo < x.min() and x.max() < grid.hi
    # 每个通道上每个基函数（含两端的 j=0 与 j=G+k-1）都有可观的支撑质量
    mass = bspline_basis(x, grid).sum(axis=0)
    assert mass.shape == (8, grid.n_basis)
    assert mass.min() > 0.05


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_adapter_spline_gradchecks_across_seeds(seed):
    errors = layer_checks(seed=seed)
    for name in ("kan_adapter.down.spline_coeffs", "kan_adapter.up.spline_coeffs", "kan_layer.spline_coeffs"):
        assert errors[name] < 1e-5, (name, errors[name])


def test_layer_gradchecks():
    errors = layer_checks(seed=0)
    assert {"kan_layer.input", "kan_stack.input", "kan_adapter.input", "layer_norm.input",
            "attention_block.input", "kan_adapter.up.spline_coeffs"} <= set(errors)
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-5, worst


def test_run_gradcheck_report():
    result = run_gradcheck("primitive", seed=0)
    assert set(result) == {"scale", "tolerance", "worst", "passed", "errors"}
    assert result["passed"] and result["tolerance"] == SCALES["primitive"][1]


def test_unknown_scale():
    with pytest.raises(KeyError):
        run_gradcheck("galaxy")
