import subprocess
import sys

import pytest

from dagen.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from dagen.config import AppConfig, ModelConfig, TrainConfig, dump_config
from dagen.model import load_checkpoint

DA = "inform(name='Sakura';food='Thai')"


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "c.yaml"
    cfg = AppConfig(
        model=ModelConfig(hidden=8, embed=8, act_embed=4, max_len=12),
        train=TrainConfig(max_epochs=2, restarts=2),
    )
    dump_config(cfg, path)
    return path


def test_make_toy(tmp_path, capsys):
    out = tmp_path / "toy.txt"
    assert main(["make-toy", "--out", str(out), "--n", "30"]) == EXIT_OK
    assert "30 examples" in capsys.readouterr().out
    assert out.stat().st_size > 0


def test_zero_model_generates_deterministically(tmp_path, capsys):
    ckpt = tmp_path / "z.ckpt"
    assert main(["init", "--data", "toy", "--out", str(ckpt), "--refiner", "identity", "--zero"]) == EXIT_OK
    capsys.readouterr()
    outs = []
    for _ in range(2):
        assert main(["generate", "--ckpt", str(ckpt), "--da", DA, "--n", "3"]) == EXIT_OK
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert "rank" in outs[0]


def test_train_evaluate_inspect(tmp_path, small_config, capsys):
    ckpt = tmp_path / "m.ckpt"
    report = tmp_path / "report.txt"
    assert main(["train", "--config", str(small_config), "--data", "toy", "--out", str(ckpt)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "run 0" in out and "run 1" in out and "mean valid BLEU" in out
    _, header = load_checkpoint(ckpt)
    assert header["extra"]["epochs"] == 2
    assert main(["evaluate", "--ckpt", str(ckpt), "--data", "toy", "--split", "test", "--greedy",
                 "--report", str(report)]) == EXIT_OK
    assert "BLEU" in capsys.readouterr().out
    assert "ERR" in report.read_text()
    assert main(["inspect", str(ckpt)]) == EXIT_OK
    assert "tensors" in capsys.readouterr().out


def test_generate_lexicalizes(tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    main(["init", "--data", "toy", "--out", str(ckpt), "--seed", "3"])
    capsys.readouterr()
    assert main(["generate", "--ckpt", str(ckpt), "--da", DA, "--n", "2", "--lexicalize", "--lam", "0"]) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) >= 2


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count(" ok") == 6


def test_gradcheck_impossible_tolerance_fails(capsys):
    assert main(["gradcheck", "--tol", "0"]) == EXIT_NUMERIC


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["train", "--data", "toy"])
    assert e.value.code == EXIT_USAGE


def test_bad_refiner_exits_one(tmp_path):
    assert main(["init", "--data", "toy", "--out", str(tmp_path / "x"), "--refiner", "lstm"]) == EXIT_USAGE


def test_data_errors_exit_two(tmp_path):
    assert main(["inspect", str(tmp_path / "missing.ckpt")]) == EXIT_DATA
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["inspect", str(bad)]) == EXIT_DATA
    assert main(["init", "--data", str(tmp_path / "none.txt"), "--out", str(tmp_path / "x")]) == EXIT_DATA


def test_bad_da_exits_two(tmp_path):
    ckpt = tmp_path / "m.ckpt"
    main(["init", "--data", "toy", "--out", str(ckpt)])
    assert main(["generate", "--ckpt", str(ckpt), "--da", "inform(name="]) == EXIT_DATA


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "dagen", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "generate" in r.stdout
