import json

import numpy as np
import pytest

from app.cli import EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK, run
from app.config.settings import settings
from app.engine.serialization import load_weights, read_tensor, write_tensor


@pytest.fixture
def small_config(tmp_path, small_spec):
    path = tmp_path / "small.json"
    path.write_text(small_spec.model_dump_json(), encoding="utf-8")
    return path


class TestCostCommands:
    """Pruebas de los comandos de costo"""

    def test_cost_table_with_scaling(self, capsys):
        code = run(["cost", "--config", "bhrnet-32", "--input-size", "256", "--input-size", "384", "--format", "text"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "bhrnet-32" in out
        assert "x2.2500" in out

    def test_cost_json(self, capsys):
        assert run(["cost", "--config", "hrnet-32", "--format", "json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["network"] == "hrnet-32"
        assert [r["bucket"] for r in payload["resolutions"]][0] == "stem"

    def test_compare_dist_shipped_bhrnet_fails_check(self, capsys):
        assert run(["compare-dist", "--config-a", "hrnet-32", "--config-b", "bhrnet-32"]) == EXIT_CHECK_FAILED
        out = capsys.readouterr().out
        assert "Resultado: FALLA" in out
        assert "decreciente con la resolución: sí" in out

    def test_compare_dist_tapered_passes(self, tmp_path, tapered_bhrnet_spec, capsys):
        path = tmp_path / "tapered.json"
        path.write_text(tapered_bhrnet_spec.model_dump_json(), encoding="utf-8")
        assert run(["compare-dist", "--config-a", "hrnet-32", "--config-b", str(path)]) == EXIT_OK
        assert "Resultado: OK" in capsys.readouterr().out

    def test_compare_dist_non_decreasing_reference(self, tmp_path, inverted_hrnet_spec, monkeypatch, capsys):
        monkeypatch.setattr(settings, "balance_improvement", 1.0)
        path = tmp_path / "inverted.json"
        path.write_text(inverted_hrnet_spec.model_dump_json(), encoding="utf-8")
        assert run(["compare-dist", "--config-a", str(path), "--config-b", str(path)]) == EXIT_CHECK_FAILED
        out = capsys.readouterr().out
        assert "decreciente con la resolución: no" in out
        assert "Resultado: FALLA" in out

    def test_unknown_config(self):
        assert run(["cost", "--config", "resnet-50"]) == EXIT_ERROR


class TestPoseCommands:
    """Pruebas de inferencia, decodificación y verificaciones"""

    def test_loss_check(self, capsys):
        assert run(["loss-check", "--seed", "7", "--trials", "3"]) == EXIT_OK
        assert "max relative error" in capsys.readouterr().out

    def test_synth_eval(self, capsys):
        code = run(["synth-eval", "--scenes", "3", "--persons", "2", "--keypoints", "4", "--oracle"])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["scenes"] == 3
        assert payload["detection_rate"] == 1.0

    def test_init_infer_decode_pipeline(self, tmp_path, small_config, capsys):
        weights = tmp_path / "small.bhrw"
        assert run(["init-weights", "--config", str(small_config), "--seed", "3", "--output", str(weights)]) == EXIT_OK
        assert "tensors written" in capsys.readouterr().out
        assert "head.final.bias" in load_weights(weights)

        image = tmp_path / "image.bhrt"
        write_tensor(image, np.random.default_rng(0).uniform(0, 1, (1, 3, 16, 16)).astype(np.float32))
        prefix = tmp_path / "out"
        code = run([
            "infer", "--config", str(small_config), "--weights", str(weights),
            "--input", str(image), "--output", str(prefix),
        ])
        assert code == EXIT_OK
        heatmaps = read_tensor(f"{prefix}.heatmaps.bhrt")
        assert heatmaps.shape == (1, 2, 8, 8)

        code = run([
            "decode", "--heatmaps", f"{prefix}.heatmaps.bhrt", "--tagmaps", f"{prefix}.tagmaps.bhrt",
        ])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["num_keypoints"] == 2

    def test_infer_missing_input(self, tmp_path, small_config):
        code = run([
            "infer", "--config", str(small_config), "--input", str(tmp_path / "missing.bhrt"),
            "--output", str(tmp_path / "out"),
        ])
        assert code == EXIT_ERROR


class TestArguments:
    """Pruebas del manejo de argumentos"""

    @pytest.mark.parametrize("argv", [[], ["cost"], ["explode"], ["loss-check", "--trials", "many"]])
    def test_usage_errors(self, argv):
        assert run(argv) == EXIT_ERROR

    def test_invalid_trials(self):
        assert run(["loss-check", "--trials", "0"]) == EXIT_ERROR
