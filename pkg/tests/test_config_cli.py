import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from bpplus import cli, config, sbs_basis, store
from bpplus.gkp import GkpParams, NoiseParams

TINY = dict(delta=0.65, cutoff=28, rank=1, norm_loss_tol=1e-6)


def test_config_defaults_valid():
    cfg = config.ExperimentConfig().validate()
    assert cfg.cutoff == 60
    assert cfg.gkp_params().dim == 60
    assert cfg.noise_params().t1_mode == pytest.approx(1e-3)


def test_config_yaml_roundtrip(tmp_path):
    cfg = config.ExperimentConfig(kind="surface_memory", distance=5, noise_scale=3.0)
    text = config.config_to_yaml(cfg)
    path = tmp_path / "cfg.yaml"
    path.write_text(text)
    loaded = config.load_config(path)
    assert loaded.kind == "surface_memory"
    assert loaded.distance == 5
    assert loaded.noise_scale == 3.0
    assert loaded.noise_params().t1_mode == pytest.approx(1e-3 / 3)


def test_config_infinite_noise(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("kind: stab_only\nnoise: {t1_mode: inf, t1_tls: inf}\n")
    cfg = config.load_config(path)
    assert math.isinf(cfg.noise.t1_mode)
    assert cfg.noise.tphi_mode == pytest.approx(100e-3)


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("kind: stab_only\nbananas: 7\n")
    with pytest.raises(ValueError, match="unknown config keys"):
        config.load_config(path)


@pytest.mark.parametrize(
    "overrides",
    [
        {"kind": "bad_kind"},
        {"shots": 0},
        {"distance": 4},
        {"init_basis": "Y"},
        {"decoders": ("nope",)},
        {"sbs_schedule": ("q", "r")},
    ],
)
def test_config_validation_errors(overrides):
    with pytest.raises(ValueError):
        config.config_from_dict(overrides)


def test_artifact_check(tmp_path):
    params = GkpParams(delta=0.65, dim=28)
    mset = store.extract_model_set(
        params, NoiseParams(), rank=1, seed=0, norm_loss_tol=1e-6
    )
    store.save_model_set(mset, tmp_path / "models")
    cfg = config.config_from_dict(
        {**TINY, "kind": "surface_memory", "models_dir": str(tmp_path / "models")}
    )
    config.check_model_artifacts(cfg)
    cfg_bad = config.config_from_dict(
        {**TINY, "rank": 2, "kind": "surface_memory", "models_dir": str(tmp_path / "models")}
    )
    with pytest.raises(ValueError, match="rank"):
        config.check_model_artifacts(cfg_bad)


def test_model_set_roundtrip(tmp_path, small_mset):
    store.save_model_set(small_mset, tmp_path / "ms")
    loaded = store.load_model_set(tmp_path / "ms")
    assert loaded.params.delta == small_mset.params.delta
    assert set(loaded.bp) == set(small_mset.bp)
    for key in small_mset.bp:
        assert np.array_equal(loaded.bp[key].trans, small_mset.bp[key].trans)
    for gauge, basis in small_mset.bases.items():
        assert np.array_equal(loaded.bases[gauge].matrix, basis.matrix)
    manifest = json.loads((tmp_path / "ms" / "manifest.json").read_text())
    assert manifest["dim"] == small_mset.params.dim


def test_model_set_hash_guard(tmp_path, small_mset):
    store.save_model_set(small_mset, tmp_path / "ms")
    target = tmp_path / "ms" / "basis_00.sbsb"
    blob = bytearray(target.read_bytes())
    blob[-9] ^= 0xFF  # corrupt one payload byte
    target.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="hash"):
        store.load_model_set(tmp_path / "ms")


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    """Full CLI pipeline at a tiny scale, shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()
    cfg_text = (
        "kind: surface_memory\n"
        f"delta: {TINY['delta']}\ncutoff: {TINY['cutoff']}\nrank: {TINY['rank']}\n"
        "norm_loss_tol: 1.0e-6\nshots: 120\ndistance: 3\nrounds: 1\n"
        f"models_dir: {root / 'models'}\noutput_dir: {root / 'out'}\n"
    )
    cfg_path = root / "cfg.yaml"
    cfg_path.write_text(cfg_text)
    result = runner.invoke(
        cli.main, ["extract-models", "--config", str(cfg_path)], catch_exceptions=False
    )
    assert result.exit_code == 0, result.output
    return root, runner, cfg_path


def test_cli_build_basis(tmp_path):
    runner = CliRunner()
    out = tmp_path / "basis.sbsb"
    result = runner.invoke(
        cli.main,
        [
            "build-basis", "--delta", "0.65", "--cutoff", "28", "--rank", "1",
            "--seed", "5", "--out", str(out),
        ],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    basis = sbs_basis.DecomposedBasis.load(out)
    assert basis.dim == 28
    assert basis.seed == 5


def test_cli_simulate_and_decode(cli_workspace):
    root, runner, cfg_path = cli_workspace
    result = runner.invoke(
        cli.main, ["simulate", "--config", str(cfg_path)], catch_exceptions=False
    )
    assert result.exit_code == 0, result.output
    assert "P_L" in result.output
    assert (root / "out" / "records.bprc").exists()
    result = runner.invoke(
        cli.main,
        [
            "decode", "--records", str(root / "out"), "--models", str(root / "models"),
            "--decoder", "autonomous",
        ],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    assert "autonomous" in result.output


def test_cli_compare_and_report(cli_workspace):
    root, runner, cfg_path = cli_workspace
    result = runner.invoke(
        cli.main,
        [
            "compare-models", "--config", str(cfg_path),
            "--experiment", "stab_only", "--rounds", "4", "--shots", "150",
            "--out", str(root / "cmp"),
        ],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    result = runner.invoke(
        cli.main, ["report", "--results", str(root / "cmp")], catch_exceptions=False
    )
    assert result.exit_code == 0, result.output
    assert (root / "cmp" / "expectations.png").exists()
    result = runner.invoke(
        cli.main, ["report", "--results", str(root / "out")], catch_exceptions=False
    )
    assert result.exit_code == 0, result.output
    assert (root / "out" / "logical_error_rates.png").exists()


def test_worker_count_env(monkeypatch):
    monkeypatch.delenv("BPPLUS_WORKERS", raising=False)
    assert config.worker_count() is None
    monkeypatch.setenv("BPPLUS_WORKERS", "2")
    assert config.worker_count() == 2
    monkeypatch.setenv("BPPLUS_WORKERS", "0")
    with pytest.raises(ValueError):
        config.worker_count()
