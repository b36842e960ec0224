"""命令行入口测试"""
import json
import os
import struct

import numpy as np
import pytest

from constants import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE
from main import main
from netpbm import read_image

TINY_CONFIG = """\
model:
  input_size: 16
  patch_size: 4
  stage_channels: [8, 16, 32]
  blocks_per_stage: 1
  fpn_dim: 16
  precision: 64
train:
  batch_size: 2
  max_epochs: 1
  lr: 1.0e-3
  flip: false
  rotate: false
  crop: false
scene:
  image_size: 16
  object_scale: [0.2, 0.35]
  min_area: 0.05
  max_area: 0.5
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_CONFIG)
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == EXIT_OK and out.strip() else None)


@pytest.fixture
def benchmark(tmp_path, tiny_config, capsys):
    out = tmp_path / "data"
    code, report = _run(capsys, "gen-data", "--config", tiny_config, "--out", str(out),
                        "--n-train", "2", "--n-test", "1", "--seed", "7")
    assert code == EXIT_OK
    return out, report


def test_gen_data(benchmark):
    out, report = benchmark
    assert report["seed"] == 7
    assert set(report["regimes"]) == {"rgb-easy", "thermal-informative"}
    area = report["regimes"]["rgb-easy"]["train"]["gt_area"]
    assert area["count"] == 2 and 0.05 <= area["min"] <= area["max"] <= 0.5
    for regime in ("rgb-easy", "thermal-informative"):
        assert (out / regime / "train.tsv").exists() and (out / regime / "test.tsv").exists()


def test_gen_data_is_reproducible(tmp_path, tiny_config, capsys):
    for name in ("a", "b"):
        _run(capsys, "gen-data", "--config", tiny_config, "--out", str(tmp_path / name),
             "--regime", "rgb-easy", "--n-train", "2", "--n-test", "0", "--seed", "3")
    rel = os.path.join("rgb-easy", "rgb", "train-00001.ppm")
    assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_unknown_regime_is_usage_error(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path), "--regime", "night"]) == EXIT_USAGE


def test_unknown_override_key(tmp_path, capsys):
    code = main(["mask-preview", "--out", str(tmp_path / "m.ppm"), "--set", "mask.rate=0.2"])
    assert code == EXIT_USAGE


def test_bad_thread_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("KAN_SAM_THREADS", "many")
    assert main(["count-params"]) == EXIT_USAGE


@pytest.mark.parametrize("value", ["[8,a,32]", "[8,16.5,32]"])
def test_non_integer_stage_channel_is_usage_error(value, capsys):
    assert main(["count-params", "--set", f"model.stage_channels={value}"]) == EXIT_USAGE


def test_count_params(capsys):
    code, report = _run(capsys, "count-params")
    assert code == EXIT_OK
    assert report["total"] == report["frozen"] + report["tunable"]
    assert len(report["adapters"]) == 3
    assert all(a["built"] == a["kan"] for a in report["adapters"])
    assert report["kan_adapters"] == sum(a["kan"] for a in report["adapters"])


def test_mask_preview(tmp_path, capsys):
    out = tmp_path / "mask.ppm"
    code, report = _run(capsys, "mask-preview", "--out", str(out), "--size", "32", "--p-mask", "0.5")
    assert code == EXIT_OK
    image = read_image(str(out))
    assert image.shape == (32, 32, 3)
    masked = np.count_nonzero(image.any(axis=-1)) / (32 * 32)
    assert masked == pytest.approx(report["masked_fraction"])
    assert report["rgb_fraction"] + report["thermal_fraction"] == pytest.approx(report["masked_fraction"])


def test_mask_preview_rejects_bad_probability(tmp_path, capsys):
    assert main(["mask-preview", "--out", str(tmp_path / "m.ppm"), "--p-mask", "1.5"]) == EXIT_USAGE


def test_gradcheck_primitive(capsys):
    code, report = _run(capsys, "gradcheck", "--scale", "primitive")
    assert code == EXIT_OK and report["passed"]
    assert report["worst"] < report["tolerance"]


def test_gradcheck_failure_exit_code(capsys):
    assert main(["gradcheck", "--scale", "primitive", "--tolerance", "1e-30"]) == EXIT_NUMERICAL


def test_train_eval_predict(tmp_path, tiny_config, benchmark, capsys):
    data, _ = benchmark
    run = tmp_path / "run"
    code, summary = _run(capsys, "train", "--config", tiny_config, "--data", str(data / "rgb-easy"),
                         "--out", str(run), "--variant", "kan-only", "--seed", "1")
    assert code == EXIT_OK
    assert summary["variant"] == "kan-only" and summary["split"] == "test"
    for name in ("model.ckpt", "best.ckpt", "eval.json", "train_log.jsonl"):
        assert (run / name).exists(), name
    assert set(summary["metrics"]) == {"f_avg", "f_max", "f_w", "mae", "e_m", "s_m"}

    code, report = _run(capsys, "eval", "--checkpoint", str(run / "model.ckpt"),
                        "--data", str(data / "rgb-easy" / "test.tsv"), "--out", str(tmp_path / "eval.json"))
    assert code == EXIT_OK
    assert report["checkpoint_extra"]["variant"] == "kan-only"
    assert report["report"]["mae"] == pytest.approx(summary["metrics"]["mae"])
    assert len(report["report"]["samples"]) == 1

    out = tmp_path / "pred.pgm"
    code, _ = _run(capsys, "predict", "--checkpoint", str(run / "model.ckpt"),
                   "--rgb", str(data / "rgb-easy" / "rgb" / "test-00002.ppm"),
                   "--thermal", str(data / "rgb-easy" / "thermal" / "test-00002.pgm"), "--out", str(out))
    assert code == EXIT_OK
    assert read_image(str(out)).shape == (16, 16)


def test_train_with_mismatched_model_size(tmp_path, benchmark, capsys):
    data, _ = benchmark
    code = main(["train", "--data", str(data / "rgb-easy"), "--out", str(tmp_path / "run")])
    assert code == EXIT_USAGE


def test_missing_checkpoint_is_io_error(tmp_path, benchmark, capsys):
    data, _ = benchmark
    code = main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"),
                 "--data", str(data / "rgb-easy" / "test.tsv")])
    assert code == EXIT_IO


def test_missing_data_is_io_error(tmp_path, tiny_config, capsys):
    code = main(["train", "--config", tiny_config, "--data", str(tmp_path / "nowhere"),
                 "--out", str(tmp_path / "run")])
    assert code == EXIT_IO


@pytest.fixture
def trained(tmp_path, tiny_config, benchmark, capsys):
    data, _ = benchmark
    run = tmp_path / "run"
    code, _ = _run(capsys, "train", "--config", tiny_config, "--data", str(data / "rgb-easy"),
                   "--out", str(run), "--variant", "base", "--seed", "2")
    assert code == EXIT_OK
    return data / "rgb-easy", run / "model.ckpt"


def test_eval_accepts_matching_config(trained, tiny_config, capsys):
    # 变体（去掉适配器）与种子不算结构差异
    data, ckpt = trained
    code, report = _run(capsys, "eval", "--config", tiny_config, "--checkpoint", str(ckpt),
                        "--data", str(data / "test.tsv"))
    assert code == EXIT_OK
    assert report["checkpoint_extra"]["variant"] == "base"


@pytest.mark.parametrize("override", ["model.fpn_dim=8", "model.blocks_per_stage=2", "model.precision=32",
                                      "model.adapter_reduction=2"])
def test_eval_rejects_config_that_disagrees_with_checkpoint(trained, tiny_config, override, capsys):
    data, ckpt = trained
    code = main(["eval", "--config", tiny_config, "--set", override, "--checkpoint", str(ckpt),
                 "--data", str(data / "test.tsv")])
    assert code == EXIT_USAGE


def test_predict_rejects_config_that_disagrees_with_checkpoint(trained, tiny_config, tmp_path, capsys):
    data, ckpt = trained
    code = main(["predict", "--config", tiny_config, "--set", "model.stage_channels=[8,16,64]",
                 "--checkpoint", str(ckpt), "--rgb", str(data / "rgb" / "test-00002.ppm"),
                 "--thermal", str(data / "thermal" / "test-00002.pgm"), "--out", str(tmp_path / "p.pgm")])
    assert code == EXIT_USAGE
    assert not (tmp_path / "p.pgm").exists()


def test_corrupt_checkpoint_header_is_io_error(trained, tmp_path, capsys):
    data, ckpt = trained
    payload = ckpt.read_bytes()
    header_len = struct.unpack_from("<Q", payload, 12)[0]
    header = json.loads(payload[20:20 + header_len])
    del header["tensors"][0]["offset"]
    raw = json.dumps(header).encode("utf-8")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(payload[:8] + struct.pack("<IQ", struct.unpack_from("<I", payload, 8)[0], len(raw))
                    + raw + payload[20 + header_len:])
    code = main(["eval", "--checkpoint", str(bad), "--data", str(data / "test.tsv")])
    assert code == EXIT_IO


def test_train_without_test_split_records_training_selection(tmp_path, tiny_config, capsys):
    data = tmp_path / "data"
    code, _ = _run(capsys, "gen-data", "--config", tiny_config, "--out", str(data), "--regime", "rgb-easy",
                   "--n-train", "2", "--n-test", "0", "--seed", "4")
    assert code == EXIT_OK
    run = tmp_path / "run"
    code, summary = _run(capsys, "train", "--config", tiny_config, "--data", str(data / "rgb-easy"),
                         "--out", str(run))
    assert code == EXIT_OK
    assert summary["split"] == "train"
    rows = [json.loads(line) for line in (run / "train_log.jsonl").read_text().splitlines()]
    assert {row["split"] for row in rows if row["kind"] == "eval"} == {"train"}
