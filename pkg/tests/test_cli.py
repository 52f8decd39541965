import json
import subprocess
import sys

import numpy as np
import pytest

from defectlab.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main

SUBCOMMANDS = (
    "synth",
    "aggregate",
    "consistency",
    "train",
    "predict",
    "eval",
    "baseline",
    "localize",
    "serve",
    "report",
)


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_exits_zero(command):
    proc = subprocess.run(
        [sys.executable, "-m", "defectlab.cli", command, "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "--help" in proc.stdout


def test_usage_error_exit_code():
    proc = subprocess.run(
        [sys.executable, "-m", "defectlab.cli", "synth"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == EXIT_USAGE

    proc = subprocess.run(
        [sys.executable, "-m", "defectlab.cli", "unknowncmd"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == EXIT_USAGE


def test_data_error_exit_code(tmp_path):
    rc = main(
        [
            "aggregate",
            "--annotations",
            str(tmp_path / "missing.jsonl"),
            "--out",
            str(tmp_path / "gt.csv"),
        ]
    )
    assert rc == EXIT_DATA


def test_synth_eval_report_pipeline(tmp_path, capsys):
    base_dir = str(tmp_path / "bases")
    out_dir = str(tmp_path / "data")
    rc = main(
        [
            "synth",
            "--base-dir", base_dir,
            "--out-dir", out_dir,
            "--defects", "noise",
            "--seed", "5",
            "--count", "3",
            "--size", "64",
        ]
    )
    assert rc == EXIT_OK
    manifest = json.loads(open(out_dir + "/manifest.json").read())
    assert len(manifest["rows"]) == 33
    assert manifest["provenance"]["seed"] == 5

    # Build gt/pred CSVs from the manifest scores.
    gt_path = str(tmp_path / "gt.csv")
    pred_path = str(tmp_path / "pred.csv")
    with open(gt_path, "w") as gt, open(pred_path, "w") as pred:
        gt.write("image_id,noise\n")
        pred.write("image_id,noise\n")
        for row in manifest["rows"]:
            gt.write(f"{row['image_id']},{row['score']}\n")
            pred.write(f"{row['image_id']},{row['score'] * 0.5 + 0.01}\n")

    report_path = str(tmp_path / "report.json")
    rc = main(
        [
            "eval",
            "--pred", pred_path,
            "--gt", gt_path,
            "--reps", "300",
            "--seed", "7",
            "--out", report_path,
        ]
    )
    assert rc == EXIT_OK
    report = json.loads(open(report_path).read())
    assert report["per_defect"]["noise"]["value"] == pytest.approx(1.0)

    rc = main(["report", report_path])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "noise" in out and "mean" in out


def test_eval_determinism(tmp_path):
    gt_path = str(tmp_path / "gt.csv")
    pred_path = str(tmp_path / "pred.csv")
    rng = np.random.default_rng(3)
    with open(gt_path, "w") as gt, open(pred_path, "w") as pred:
        gt.write("image_id,noise\n")
        pred.write("image_id,noise\n")
        for i in range(60):
            score = (i % 11) / 10
            gt.write(f"i{i},{score}\n")
            pred.write(f"i{i},{score + rng.normal(0, 0.1):.6f}\n")
    outs = []
    for name in ("r1.json", "r2.json"):
        path = str(tmp_path / name)
        rc = main(
            ["eval", "--pred", pred_path, "--gt", gt_path, "--reps", "500",
             "--seed", "11", "--out", path]
        )
        assert rc == EXIT_OK
        payload = json.loads(open(path).read())
        del payload["provenance"]
        outs.append(json.dumps(payload, sort_keys=True))
    assert outs[0] == outs[1]


def test_baseline_csv(tmp_path):
    from defectlab.raster import Raster, save

    images = tmp_path / "imgs"
    images.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        save(Raster(rng.uniform(size=(32, 32, 3))), str(images / f"x{i}.png"))
    out = str(tmp_path / "scores.csv")
    rc = main(["baseline", "--method", "noise", "--images", str(images), "--out", out])
    assert rc == EXIT_OK
    lines = open(out).read().splitlines()
    assert lines[0] == "image_id,score"
    assert len(lines) == 4


def test_config_file_precedence(tmp_path):
    parser = build_parser()
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"count": 9, "size": 32}))
    args = parser.parse_args(
        ["synth", "--base-dir", "b", "--out-dir", "o", "--count", "4",
         "--config", str(config)]
    )
    from defectlab.cli import _load_config_overrides

    _load_config_overrides(parser, args)
    assert args.count == 4  # CLI wins
    assert args.size == 32  # config beats default
