"""训练流程测试"""
import json
import os
from dataclasses import replace

import numpy as np
import pytest

from autograd import backward
from checkpoint import read_checkpoint_extra
from constants import VARIANT_BASE, VARIANT_FULL, VARIANT_KAN_ONLY, VARIANT_MASK_ONLY
from data import RgbtSample, generate_sample
from errors import ConfigError, DatasetError, NumericalAbort
from losses import total_loss
from masking import MaskConfig
from model import SaliencyModel, partition_parameters
from training import (
    AblationReport, TrainConfig, TrainState, ablation_suite, fit, train_step, variant_configs,
)


@pytest.fixture
def samples(tiny_scene):
    return [generate_sample(tiny_scene, i) for i in range(4)]


def _snapshot(named):
    return {name: p.data.copy() for name, p in named}


class TestTrainStep:
    def test_frozen_untouched_and_tunable_moves(self, tiny_model_config, tiny_train_config, samples):
        model = SaliencyModel(tiny_model_config)
        frozen, tunable = partition_parameters(model)
        frozen_before, tunable_before = _snapshot(frozen), _snapshot(tunable)
        state = TrainState.create(model, tiny_train_config, total_steps=10)
        for step in range(10):
            train_step(model, samples[step % 2 * 2:step % 2 * 2 + 2], state, tiny_train_config)
        for name, p in frozen:
            assert p.data.tobytes() == frozen_before[name].tobytes(), name
        for prefix in ("adapter0.", "adapter1.", "adapter2.", "decoder."):
            moved = [not np.array_equal(p.data, tunable_before[name])
                     for name, p in tunable if name.startswith(prefix)]
            assert moved and any(moved), prefix
        assert state.step == 10

    def test_optimizer_state_covers_tunable_only(self, tiny_model_config, tiny_train_config):
        model = SaliencyModel(tiny_model_config)
        state = TrainState.create(model, tiny_train_config)
        frozen, tunable = partition_parameters(model)
        assert set(state.optimizer.state_names()) == {name for name, _ in tunable}
        assert not set(state.optimizer.state_names()) & {name for name, _ in frozen}

    def test_gradient_reaches_every_tunable_tensor_after_one_step(self, tiny_model_config, tiny_train_config,
                                                                  samples):
        model = SaliencyModel(tiny_model_config)
        state = TrainState.create(model, tiny_train_config)
        train_step(model, samples[:2], state, tiny_train_config)
        sample = samples[2]
        backward(total_loss(model.forward(sample.rgb, sample.thermal), sample.gt).objective)
        for name, p in partition_parameters(model)[1]:
            assert p.grad is not None and np.linalg.norm(p.grad) > 0.0, name

    def test_non_finite_loss_aborts_without_update(self, tiny_model_config, tiny_train_config, samples):
        model = SaliencyModel(tiny_model_config)
        state = TrainState.create(model, tiny_train_config)
        bad = samples[0]
        rgb = bad.rgb.copy()
        rgb[:] = np.nan
        poisoned = RgbtSample("poisoned", rgb, bad.thermal, bad.gt)
        before = _snapshot(partition_parameters(model)[1])
        with pytest.raises(NumericalAbort) as info:
            train_step(model, [samples[1], poisoned], state, tiny_train_config)
        assert info.value.batch_ids == [samples[1].id, "poisoned"]
        for name, p in partition_parameters(model)[1]:
            assert p.data.tobytes() == before[name].tobytes()

    def test_empty_batch(self, tiny_model_config, tiny_train_config):
        model = SaliencyModel(tiny_model_config)
        with pytest.raises(DatasetError):
            train_step(model, [], TrainState.create(model, tiny_train_config), tiny_train_config)


class TestFit:
    def test_log_and_checkpoint(self, tiny_model_config, tiny_train_config, samples, tmp_path):
        cfg = replace(tiny_train_config, max_epochs=2)
        result = fit(SaliencyModel(tiny_model_config), samples, samples[:2], cfg, str(tmp_path))
        kinds = [row["kind"] for row in result.log_rows]
        assert kinds == ["step", "step", "eval", "step", "step", "eval"]

        lines = (tmp_path / "train_log.jsonl").read_text().splitlines()
        assert [json.loads(line) for line in lines] == result.log_rows
        step_row = result.log_rows[0]
        for key in ("epoch", "step", "iou_loss", "dice_loss", "total", "grad_norm", "lr", "wall_time"):
            assert key in step_row
        assert step_row["total"] == pytest.approx(step_row["iou_loss"] + step_row["dice_loss"])
        eval_row = result.log_rows[2]
        for key in ("train_loss", "f_avg", "f_max", "f_w", "mae", "e_m", "s_m"):
            assert key in eval_row

        assert result.best_checkpoint == os.path.join(str(tmp_path), "best.ckpt")
        extra = read_checkpoint_extra(result.best_checkpoint)
        assert extra["epoch"] in (0, 1)
        assert 0.0 <= result.final_report.mae <= 1.0

    def test_without_output_dir(self, tiny_model_config, tiny_train_config, samples):
        result = fit(SaliencyModel(tiny_model_config), samples[:2], samples[2:], tiny_train_config)
        assert result.best_checkpoint is None
        assert len(result.final_report.rows) == 2

    def test_empty_evaluation_set_is_rejected(self, tiny_model_config, tiny_train_config, samples, tmp_path):
        model = SaliencyModel(tiny_model_config)
        before = _snapshot(model.named_parameters())
        with pytest.raises(DatasetError, match="Evaluation set is empty"):
            fit(model, samples[:2], [], tiny_train_config, str(tmp_path))
        assert not (tmp_path / "best.ckpt").exists()
        for name, p in model.named_parameters():
            np.testing.assert_array_equal(p.data, before[name])

    def test_selection_on_training_split_is_recorded(self, tiny_model_config, tiny_train_config, samples,
                                                     tmp_path):
        result = fit(SaliencyModel(tiny_model_config), samples[:2], samples[:2], tiny_train_config,
                     str(tmp_path), eval_split="train")
        eval_rows = [row for row in result.log_rows if row["kind"] == "eval"]
        assert eval_rows and all(row["split"] == "train" for row in eval_rows)
        assert read_checkpoint_extra(result.best_checkpoint)["split"] == "train"

        held_out = fit(SaliencyModel(tiny_model_config), samples[:2], samples[2:], tiny_train_config)
        assert all(row["split"] == "test" for row in held_out.log_rows if row["kind"] == "eval")

    def test_deterministic_across_runs_and_threads(self, tiny_model_config, tiny_train_config, samples):
        cfg = replace(tiny_train_config, flip=True, rotate=True, crop=True)

        def losses(threads):
            run_cfg = replace(cfg, threads=threads)
            rows = fit(SaliencyModel(tiny_model_config), samples, samples[:1], run_cfg).log_rows
            return [(r["kind"], r.get("total"), r.get("mae")) for r in rows]

        assert losses(1) == losses(1) == losses(2)

    def test_empty_training_set(self, tiny_model_config, tiny_train_config):
        with pytest.raises(DatasetError):
            fit(SaliencyModel(tiny_model_config), [], [], tiny_train_config)

    @pytest.mark.parametrize("changes", [
        {"lr": 0.0},
        {"batch_size": 0},
        {"grad_clip": -1.0},
        {"schedule": "step"},
        {"mask": MaskConfig(p_mask=2.0)},
    ])
    def test_invalid_config(self, changes):
        with pytest.raises(ConfigError):
            replace(TrainConfig(), **changes).validate()


class TestAblation:
    @pytest.mark.parametrize("variant, mask, adapters", [
        (VARIANT_BASE, False, False),
        (VARIANT_MASK_ONLY, True, False),
        (VARIANT_KAN_ONLY, False, True),
        (VARIANT_FULL, True, True),
    ])
    def test_variant_configs(self, tiny_model_config, tiny_train_config, variant, mask, adapters):
        m_cfg, t_cfg = variant_configs(variant, tiny_model_config, tiny_train_config, seed=7)
        assert m_cfg.use_adapters == adapters and t_cfg.mask.enabled == mask
        assert m_cfg.seed == t_cfg.seed == 7
        assert tiny_train_config.mask.enabled

    def test_unknown_variant(self, tiny_model_config, tiny_train_config):
        with pytest.raises(ConfigError):
            variant_configs("kan-plus", tiny_model_config, tiny_train_config)

    def test_report_wins_and_medians(self):
        rows = []
        for seed, (base, kan) in enumerate([(0.3, 0.2), (0.25, 0.26), (0.4, 0.1)]):
            for variant, value in ((VARIANT_BASE, base), (VARIANT_KAN_ONLY, kan)):
                row = {"regime": "r", "variant": variant, "seed": seed}
                row.update({name: value for name in ("f_avg", "f_max", "f_w", "mae", "e_m", "s_m")})
                rows.append(row)
        report = AblationReport(rows)
        assert report.wins("r") == 2
        assert report.medians("r", VARIANT_KAN_ONLY)["mae"] == pytest.approx(0.2)
        assert report.to_dict()["median"]["r"][VARIANT_BASE]["mae"] == pytest.approx(0.3)
        assert "SAM2+KAN" in report.table()

    def test_suite_runs_each_variant(self, tiny_model_config, tiny_train_config, samples, tmp_path):
        report = ablation_suite({"tiny": (samples[:2], samples[2:])}, tiny_model_config, tiny_train_config,
                                seeds=[0], variants=[VARIANT_BASE, VARIANT_KAN_ONLY], out_dir=str(tmp_path))
        assert [(r["variant"], r["seed"]) for r in report.rows] == [(VARIANT_BASE, 0), (VARIANT_KAN_ONLY, 0)]
        assert report.rows[0]["adapter_params"] == 0
        assert report.rows[1]["adapter_params"] > 0
        assert os.path.exists(tmp_path / "tiny" / VARIANT_KAN_ONLY / "seed0" / "train_log.jsonl")
