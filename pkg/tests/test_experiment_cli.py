import json
import os

import pytest

from popforge.attacks import AttackKind
from popforge.cli import main
from popforge.corpus import Label, parse_protocol
from popforge.errors import StageError
from popforge.experiment import PRESETS, ExperimentConfig, derive_seed, preset, run_experiment

from conftest import make_mini_asvspoof

# small enough for unit tests: one grid cell family, few clips
TINY = {
    "synth_train_real": 12,
    "synth_train_spoof": 36,
    "synth_eval_real": 8,
    "synth_eval_spoof": 16,
    "synth_duration_s": 1.0,
    "C_values": [1.0, 10.0],
    "gamma_values": ["1/d"],
    "folds": 3,
    "smote_k": 3,
}

RUN_FILES = [
    "config.json", "manifest.csv", "features_train.csv", "features_eval.csv", "model.json",
    "report.json", "sweep.csv", "hist_real.csv", "hist_spoof.csv", "hist.svg",
]


@pytest.fixture(scope="module")
def mini_root(tmp_path_factory):
    return make_mini_asvspoof(tmp_path_factory.mktemp("asv"))


def test_derive_seed():
    assert derive_seed(7, "split") == derive_seed(7, "split")
    assert derive_seed(7, "split") != derive_seed(7, "smote")
    assert derive_seed(7, "split") != derive_seed(8, "split")
    assert 0 <= derive_seed(2**40, "x") < 2**63


def test_reference_presets():
    assert preset("even-train").split_mode == "even" and preset("even-train").split_n == 2580
    plan = preset("synthpop-20").poison_plan()
    assert plan.kind == AttackKind.SYNTHETIC_POP and plan.target_class == Label.SPOOF and plan.fraction == 0.2
    flip = preset("flip-20").poison_plan()
    assert flip.kind == AttackKind.LABEL_FLIP and flip.target_class is None and flip.fraction == 0.2
    assert preset("full").split_mode == "full"
    for name in ("full", "even-train", "flip-20", "synthpop-20"):
        twin = PRESETS[f"{name}-synthetic"]
        assert (twin.synth_train_real, twin.synth_train_spoof) == (200, 800)
        assert (twin.synth_eval_real, twin.synth_eval_spoof) == (100, 400)
        assert twin.attack == PRESETS[name].attack


def test_config_json_roundtrip(tmp_path):
    cfg = preset("flip-20-synthetic").with_overrides(seed=3, threshold="auto")
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(p) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(threshold=1.5)
    with pytest.raises(ValueError):
        ExperimentConfig(dataset="both")


def test_run_is_self_contained_and_deterministic(tmp_path):
    cfg = ExperimentConfig.from_dict({**preset("synthpop-20-synthetic").to_dict(), **TINY})
    rep = run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in RUN_FILES:
        assert (tmp_path / "a" / name).is_file(), name
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert str(tmp_path) not in (tmp_path / "a" / "report.json").read_text()
    assert rep.meta["n_poisoned"] == int(0.2 * 12)  # even split: 12 spoof in training
    assert (tmp_path / "a" / "poisoned" / "attack_manifest.csv").is_file()


def test_missing_dataset_is_stage_error(tmp_path, monkeypatch):
    monkeypatch.delenv("POPFORGE_DATA_ROOT", raising=False)
    with pytest.raises(StageError) as info:
        run_experiment(preset("even-train"), tmp_path)
    assert info.value.stage == "data"


def test_cli_run_even_train_preset(mini_root, tmp_path, monkeypatch):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"split_n": 10, **{k: TINY[k] for k in ("C_values", "gamma_values", "folds")}}))
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("POPFORGE_DATA_ROOT", str(mini_root))
    code = main(["run", "--preset", "even-train", "--seed", "7", "--out", "runs/e1", "--config", str(cfg)])
    assert code == 0
    report = json.loads((tmp_path / "runs/e1/report.json").read_text())
    assert report["meta"]["train_split"] == {"real": 10, "spoof": 10}
    assert report["meta"]["seed"] == 7


def test_cli_usage_errors(capsys):
    assert main(["attack", "synthetic-pop", "--fraction", "0.2"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["run"]) == 1
    assert main(["run", "--preset", "nope"]) == 1
    assert main(["eval", "--model", "m", "--features", "f", "--out", "o", "--threshold", "2"]) == 1
    assert main([]) == 1
    assert main(["--help"]) == 0


def test_cli_runtime_error(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("POPFORGE_DATA_ROOT", raising=False)
    assert main(["run", "--preset", "full", "--out", str(tmp_path / "r")]) == 2
    assert "data" in capsys.readouterr().err


def test_cli_stepwise_pipeline(tmp_path, capsys):
    c = tmp_path / "corpus"
    assert main(["synth-corpus", "--out", str(c), "--n-real", "10", "--n-spoof", "30", "--seed", "2",
                 "--duration", "1.0"]) == 0
    feats = tmp_path / "features.csv"
    assert main(["extract", "--protocol", str(c / "protocol.txt"), "--audio-root", str(c / "wav"),
                 "--out", str(feats)]) == 0
    assert (tmp_path / "skipped.txt").exists()
    model = tmp_path / "model.json"
    assert main(["train", "--features", str(feats), "--out", str(model), "--C", "1", "10",
                 "--gamma", "1/d", "--folds", "3", "--smote-k", "3"]) == 0
    assert main(["eval", "--model", str(model), "--features", str(feats), "--out", str(tmp_path / "ev"),
                 "--threshold", "auto"]) == 0
    assert main(["report", "--report", str(tmp_path / "ev/report.json"), "--out", str(tmp_path / "re")]) == 0
    assert (tmp_path / "ev/report.json").read_bytes() == (tmp_path / "re/report.json").read_bytes()
    out = capsys.readouterr().out
    assert "accuracy" in out and "ASR" in out

    assert main(["attack", "label-flip", "--protocol", str(c / "protocol.txt"), "--fraction", "0.2",
                 "--out", str(tmp_path / "lf")]) == 0
    before, after = parse_protocol(c / "protocol.txt"), parse_protocol(tmp_path / "lf/protocol.txt")
    assert sum(a != b for a, b in zip(before, after)) == 8
    assert main(["attack", "synthetic-pop", "--protocol", str(c / "protocol.txt"), "--audio-root", str(c / "wav"),
                 "--fraction", "0.2", "--out", str(tmp_path / "sp")]) == 0
    assert len((tmp_path / "sp/attack_manifest.csv").read_text().splitlines()) == 1 + 6


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "popforge", "--version"], capture_output=True, text=True,
                       env={**os.environ})
    assert r.returncode == 0 and r.stdout.startswith("popforge ")
