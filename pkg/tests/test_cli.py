"""End-to-end command-line tests: artifacts, determinism, exit codes."""

import json
import os

import numpy as np
import pytest

from rulerl.cli import main
from rulerl.logic import parse_rules
from rulerl.assets import load_language


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def neural_ckpt(workdir):
    out = workdir / "neural"
    code = run(["train-neural", "--env", "getout", "--seed", "1",
                "--steps", "400", "--update-every", "200", "--hidden", "8",
                "--out", str(out)])
    assert code == 0
    return out / "neural.json"


@pytest.fixture(scope="module")
def candidates(workdir, neural_ckpt):
    out = workdir / "abstract"
    code = run(["abstract", "--env", "getout", "--seed", "2",
                "--oracle", str(neural_ckpt), "--states", "40",
                "--n-beam", "2", "--t-beam", "2", "--out", str(out)])
    assert code == 0
    return out / "candidates.rules"


@pytest.fixture(scope="module")
def logic_ckpt(workdir, candidates):
    out = workdir / "logic"
    code = run(["train-logic", "--env", "getout", "--seed", "3",
                "--rules", str(candidates), "--steps", "300",
                "--slots", "3", "--prune", "1", "--out", str(out)])
    assert code == 0
    return out / "logic.json"


# ---------------------------------------------------------------------------
# Pipeline artifacts
# ---------------------------------------------------------------------------

def test_train_neural_artifacts(workdir, neural_ckpt):
    out = neural_ckpt.parent
    assert neural_ckpt.exists()
    assert (out / "train_neural_metrics.csv").exists()
    assert (out / "train_neural_curve.png").exists()
    blob = json.loads(neural_ckpt.read_text())
    assert blob["format"] == "rulerl-neural-checkpoint"
    header = (out / "train_neural_metrics.csv").read_text().splitlines()
    assert header[0].startswith("# config_hash=") and "seed=1" in header[0]
    assert header[1] == "episode,steps,return,moving_avg"


def test_abstract_artifacts(candidates):
    out = candidates.parent
    assert candidates.exists()
    assert (out / "abstraction_scores.csv").exists()
    lang = load_language("getout")
    rules = parse_rules(candidates.read_text(), lang)
    assert rules  # emitted rule file re-parses


def test_train_logic_artifacts(logic_ckpt):
    out = logic_ckpt.parent
    assert logic_ckpt.exists()
    assert (out / "train_logic_metrics.csv").exists()
    assert (out / "train_logic_curve.png").exists()
    assert (out / "pruned.rules").exists()
    blob = json.loads(logic_ckpt.read_text())
    assert blob["format"] == "rulerl-logic-checkpoint"
    lang = load_language("getout")
    assert parse_rules("\n".join(blob["rules"]), lang)


def test_eval_random_baseline(workdir):
    out = workdir / "eval_rand"
    code = run(["eval", "--env", "getout", "--seed", "4",
                "--episodes", "3", "--out", str(out)])
    assert code == 0
    assert (out / "eval_stats.csv").exists()
    assert (out / "eval_returns.png").exists()


def test_eval_checkpoint_and_swap(workdir, logic_ckpt):
    out = workdir / "eval_logic"
    code = run(["eval", "--env", "getout", "--seed", "4", "--episodes", "2",
                "--checkpoint", str(logic_ckpt), "--out", str(out)])
    assert code == 0
    out2 = workdir / "eval_swap"
    code = run(["eval", "--env", "getout", "--seed", "4", "--episodes", "2",
                "--checkpoint", str(logic_ckpt),
                "--swap", "on_left", "on_right", "--out", str(out2)])
    assert code == 0


def test_eval_reruns_are_byte_identical(workdir, logic_ckpt):
    out_a = workdir / "det_a"
    out_b = workdir / "det_b"
    for out in (out_a, out_b):
        assert run(["eval", "--env", "getout", "--seed", "7",
                    "--episodes", "2", "--checkpoint", str(logic_ckpt),
                    "--out", str(out)]) == 0
    assert (out_a / "eval_stats.csv").read_bytes() == \
           (out_b / "eval_stats.csv").read_bytes()


def test_explain_artifacts_and_determinism(workdir, logic_ckpt, capsys):
    out_a = workdir / "explain_a"
    out_b = workdir / "explain_b"
    for out in (out_a, out_b):
        code = run(["explain", "--env", "getout", "--seed", "5",
                    "--checkpoint", str(logic_ckpt), "--step", "2",
                    "--action", "right", "--out", str(out)])
        assert code == 0
    for name in ("explain.csv", "explain.txt"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    assert (out_a / "explain_attribution.png").exists()
    text = (out_a / "explain.txt").read_text()
    assert "chosen action: right" in text
    assert "top attributions:" in text


def test_render_prints_frames(workdir, capsys):
    code = run(["render", "--env", "threefishes", "--seed", "6",
                "--steps", "3", "--out", str(workdir / "render")])
    assert code == 0
    captured = capsys.readouterr()
    assert "A" in captured.out
    assert "t=1" in captured.out


# ---------------------------------------------------------------------------
# Config file merging
# ---------------------------------------------------------------------------

def test_config_file_sets_defaults_and_flags_win(workdir, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("episodes: 2\nseed: 9\n")
    out = workdir / "cfg_eval"
    code = run(["--config", str(cfg), "eval", "--env", "getout",
                "--out", str(out)])
    assert code == 0
    first = (out / "eval_stats.csv").read_text().splitlines()[0]
    assert "seed=9" in first
    # Explicit flag beats the config value.
    out2 = workdir / "cfg_eval2"
    code = run(["--config", str(cfg), "eval", "--env", "getout",
                "--seed", "11", "--out", str(out2)])
    assert code == 0
    first = (out2 / "eval_stats.csv").read_text().splitlines()[0]
    assert "seed=11" in first


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------

def test_usage_errors_exit_1(capsys):
    assert run(["eval", "--env", "marslander"]) == 1
    assert run(["no-such-command"]) == 1
    assert run(["eval", "--env", "getout", "--episodes", "0"]) == 1


def test_runtime_errors_exit_2(workdir, capsys):
    missing = str(workdir / "nope.json")
    assert run(["eval", "--env", "getout", "--checkpoint", missing,
                "--episodes", "1", "--out", str(workdir / "x")]) == 2
    err = capsys.readouterr().err
    assert "file not found" in err
    # A rules file that is not a checkpoint is a runtime failure too.
    bad = workdir / "bad.json"
    bad.write_text('{"format": "mystery"}')
    assert run(["eval", "--env", "getout", "--checkpoint", str(bad),
                "--episodes", "1", "--out", str(workdir / "y")]) == 2


def test_explain_rejects_unknown_action(workdir, logic_ckpt):
    assert run(["explain", "--env", "getout", "--checkpoint",
                str(logic_ckpt), "--action", "warp",
                "--out", str(workdir / "z")]) == 1
