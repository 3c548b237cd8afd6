import hashlib
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from sstrack.cli import cli


def dir_checksum(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_bad_flags_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        cli(["generate", "--preset", "nope", "--out", "x"])
    assert e.value.code == 2


def test_missing_subcommand_exit_2():
    with pytest.raises(SystemExit) as e:
        cli([])
    assert e.value.code == 2


def test_generate_deterministic_checksums(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli(["generate", "--preset", "ci", "--seed", "7", "--num", "3",
                "--out", str(a)]) == 0
    assert cli(["generate", "--preset", "ci", "--seed", "7", "--num", "3",
                "--out", str(b)]) == 0
    assert dir_checksum(a) == dir_checksum(b)


def test_generate_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli(["generate", "--preset", "easy", "--seed", "1", "--num", "2", "--out", str(a)])
    cli(["generate", "--preset", "easy", "--seed", "2", "--num", "2", "--out", str(b)])
    assert dir_checksum(a) != dir_checksum(b)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Small end-to-end workspace: dataset, 2-step training run, checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert cli(["generate", "--preset", "easy", "--seed", "3", "--num", "3",
                "--out", str(data)]) == 0
    cfg = {
        "epochs": 1, "steps_per_epoch": 2, "batch_size": 2, "seed": 0,
        "model": {"patch_size": 16, "embed_dim": 32, "depth": 2,
                  "num_heads": 2, "ref_size": 32, "search_size": 64},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    out = root / "run"
    assert cli(["train", "--config", str(cfg_path), "--data", str(data),
                "--out", str(out)]) == 0
    return root


def test_train_outputs(workspace):
    out = workspace / "run"
    assert (out / "last.ckpt").exists()
    assert (out / "best.ckpt").exists()
    assert (out / "epoch_001.ckpt").exists()
    log = (out / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 2
    assert {"step", "loss_all"} <= set(json.loads(log[0]))


def test_eval_oracle_ao_one(workspace):
    report_path = workspace / "oracle_report.json"
    assert cli(["eval", "--ckpt", str(workspace / "run" / "last.ckpt"),
                "--data", str(workspace / "data"),
                "--report", str(report_path), "--oracle"]) == 0
    report = json.loads(report_path.read_text())
    assert report["aggregate"]["ao"] == pytest.approx(1.0, abs=1e-6)


def test_eval_learned_model_and_report_schema(workspace):
    report_path = workspace / "report.json"
    assert cli(["eval", "--ckpt", str(workspace / "run" / "last.ckpt"),
                "--data", str(workspace / "data"),
                "--report", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert set(report["aggregate"]) == {"auc", "p", "p_norm", "ao",
                                        "sr_0.5", "sr_0.75"}
    assert report["meta"]["ckpt_hash"]


def test_plot_emits_wellformed_svg(workspace):
    report_path = workspace / "oracle_report.json"
    plot_dir = workspace / "plots"
    assert cli(["plot", "--report", str(report_path),
                "--log", str(workspace / "run" / "train_log.jsonl"),
                "--out", str(plot_dir)]) == 0
    svgs = sorted(plot_dir.glob("*.svg"))
    assert {p.name for p in svgs} == {"success.svg", "precision.svg", "loss.svg"}
    for p in svgs:
        root = ET.parse(p).getroot()
        assert root.tag.endswith("svg")


def test_eval_missing_ckpt_exit_1(workspace, capsys):
    code = cli(["eval", "--ckpt", str(workspace / "nope.ckpt"),
                "--data", str(workspace / "data"),
                "--report", str(workspace / "r.json")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_train_empty_data_exit_1(workspace, tmp_path, capsys):
    cfg_path = workspace / "config.json"
    code = cli(["train", "--config", str(cfg_path), "--data", str(tmp_path),
                "--out", str(tmp_path / "out")])
    assert code == 1


def test_selftest_passes(capsys):
    assert cli(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out
