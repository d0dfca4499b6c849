"""
命令行入口
"""
import json

import pytest

from src.main import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def body(text):
    return [line for line in text.splitlines() if not line.startswith("#")]


@pytest.mark.parametrize("flag, label", [
    (["--beta", "0.5"], "B"),
    (["--beta", "1.5"], "D"),
    (["--uniform"], "C"),
    (["--x2"], "A"),
    (["--kingman"], "D"),
])
def test_classify_labels(capsys, flag, label):
    code, out, _ = run_cli(capsys, "classify", *flag)
    assert code == 0
    assert body(out)[0] == label


def test_classify_csv(capsys):
    code, out, _ = run_cli(capsys, "classify", "--beta", "0.5", "--format", "csv")
    assert code == 0
    assert "label,B" in out.splitlines()
    assert out.startswith("# config:")


def test_classify_text_output_has_header(capsys, tmp_path):
    target = tmp_path / "classify.txt"
    code, out, _ = run_cli(capsys, "classify", "--beta", "0.5", "--output", str(target))
    assert code == 0
    assert out == ""
    text = target.read_text(encoding="utf-8")
    lines = text.splitlines()
    assert any(line.startswith("# version: ") for line in lines)
    assert any(line.startswith("# config_hash: ") for line in lines)
    assert any(line.startswith("# seed:") for line in lines)
    assert body(text)[0] == "B"


def test_simulate_flow_is_reproducible(capsys):
    argv = ["simulate-flow", "--beta", "1.5", "--seed", "5", "--eps", "0.25,0.125,0.0625", "--n", "4"]
    code, first, _ = run_cli(capsys, *argv)
    assert code == 0
    _, second, _ = run_cli(capsys, *argv)
    assert first == second
    lines = [line for line in first.splitlines() if not line.startswith("#")]
    assert lines[0].startswith("eps,points,holes,case_a,dust")
    assert len(lines) == 4


def test_simulate_flow_replicates_json(capsys, tmp_path):
    records = tmp_path / "records.jsonl"
    code, out, _ = run_cli(
        capsys, "simulate-flow", "--x2", "--seed", "1", "--eps", "0.25,0.125",
        "--replicates", "20", "--format", "json", "--jsonl", str(records),
    )
    assert code == 0
    document = json.loads(out)
    assert document["header"]["seed"] == 1
    assert any(s["name"] == "bounded" and s["mean"] == 1.0 for s in document["statistics"])
    assert len(records.read_text(encoding="utf-8").splitlines()) == 21


def test_simulate_chain_single_path(capsys):
    code, out, _ = run_cli(capsys, "simulate-chain", "--uniform", "--n", "5", "--t", "100", "--seed", "3")
    assert code == 0
    rows = [line for line in out.splitlines() if line.startswith("event,")]
    assert rows
    assert rows[-1].endswith(",1,\"1,2,3,4,5\"")


def test_missing_seed_is_generated(capsys):
    code, _, err = run_cli(capsys, "simulate-chain", "--uniform", "--n", "3")
    assert code == 0
    assert "--seed" in err


def test_invalid_arguments_exit_code(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["classify", "--no-such-flag"])
    assert excinfo.value.code == 2
    capsys.readouterr()

    code, _, err = run_cli(capsys, "simulate-chain", "--uniform", "--n", "1", "--seed", "0")
    assert code == 2
    assert "[错误]" in err


def test_measures_are_mutually_exclusive(capsys):
    with pytest.raises(SystemExit):
        main(["classify", "--beta", "0.5", "--uniform"])
    capsys.readouterr()


def test_render_bridge_to_file(capsys, tmp_path):
    target = tmp_path / "bridge.svg"
    code, out, _ = run_cli(capsys, "render", "--bridge", "0.5;0.2:0.3,0.6:0.2", "--output", str(target))
    assert code == 0
    assert out == ""
    svg = target.read_text(encoding="utf-8")
    assert "<svg" in svg
    assert "holes=2" in svg


def test_render_rejects_csv(capsys):
    code, _, _ = run_cli(capsys, "render", "--bridge", "1;", "--format", "csv")
    assert code == 2


def test_config_file_and_inline_priority(capsys, tmp_path):
    cfg = tmp_path / "run.conf"
    cfg.write_text("# 测度\nbeta = 0.5\n", encoding="utf-8")
    code, out, _ = run_cli(capsys, "classify", "--config", str(cfg))
    assert code == 0
    assert body(out)[0] == "B"

    code, out, _ = run_cli(capsys, "classify", "--config", str(cfg), "--beta", "1.5")
    assert body(out)[0] == "D"

    cfg.write_text("colour = red\n", encoding="utf-8")
    code, _, _ = run_cli(capsys, "classify", "--config", str(cfg))
    assert code == 2


def test_quick_verify(capsys):
    code, out, _ = run_cli(
        capsys, "verify", "--kingman", "--seed", "2", "--replicates", "200",
        "--n", "3", "--eps", "0.25,0.125",
    )
    assert code == 0
    assert "classify,label" in out
    assert "flow:oracle:exact,bounded" in out
