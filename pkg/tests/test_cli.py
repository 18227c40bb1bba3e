import hashlib
import os
import shutil

import numpy as np

from oicprune.checkpoint import save_checkpoint
from oicprune.cli import main
from oicprune.model import build_model
from oicprune.reports import read_csv

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
EXAMPLE_CONFIG = os.path.join(REPO_ROOT, "configs", "example_train.ini")
GOLDEN_METRICS = os.path.join(REPO_ROOT, "tests", "data", "example_metrics.csv")

TINY_CONFIG = """\
[model]
input = 1x8x8
layers = conv:4:k3:p1, relu, maxpool:2, conv:6:k3:p1, relu, maxpool:2, flatten, dense:4
init_seed = 1

[train]
lr = 0.05
epochs = 2
batch_size = 16
seed = 1
regularizer = oicsr_gl
lambda_s = 1e-4
lr_schedule =

[prune]
iterations = 1
targets = 0.3
criterion = out_in_channel
fine_tune_epochs = 1

[data]
task = striped_images
n = 32
seed = 5
eval_n = 16
eval_seed = 6
"""


def write_tiny_config(tmp_path, body=TINY_CONFIG):
    path = tmp_path / "run.ini"
    path.write_text(body)
    return str(path)


def sha256(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def test_missing_required_key_exit_2(tmp_path, capsys):
    cfg = tmp_path / "broken.ini"
    cfg.write_text(TINY_CONFIG.replace("task = striped_images\n", ""))
    code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "data.task" in capsys.readouterr().err


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = tmp_path / "typo.ini"
    cfg.write_text(TINY_CONFIG + "\n[train]\nlearning_rate = 0.1\n".replace("[train]\n", ""))
    cfg.write_text(TINY_CONFIG.replace("lr = 0.05", "learning_rate = 0.05"))
    code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "learning_rate" in capsys.readouterr().err


def test_ambiguous_override_exit_2(tmp_path, capsys):
    cfg = write_tiny_config(tmp_path)
    code = main(
        ["train", "--config", cfg, "--out", str(tmp_path / "out"), "--override", "seed=9"]
    )
    assert code == 2
    assert "ambiguous" in capsys.readouterr().err


def test_missing_checkpoint_exit_1(tmp_path, capsys):
    cfg = write_tiny_config(tmp_path)
    code = main(
        [
            "eval",
            "--config", cfg,
            "--checkpoint", str(tmp_path / "nope.ckpt"),
        ]
    )
    assert code == 1


def test_override_disables_structured_penalty(tmp_path):
    cfg = write_tiny_config(tmp_path)
    out = tmp_path / "out"
    assert main(
        ["train", "--config", cfg, "--out", str(out), "--override", "lambda_s=0"]
    ) == 0
    rows = read_csv(out / "metrics.csv")
    assert all(float(r["reg"]) == 0.0 for r in rows)


def test_example_config_reproduces_golden_metrics(tmp_path):
    out = tmp_path / "out"
    assert main(["train", "--config", EXAMPLE_CONFIG, "--out", str(out)]) == 0
    with open(GOLDEN_METRICS, "rb") as f:
        golden = f.read()
    with open(out / "metrics.csv", "rb") as f:
        produced = f.read()
    assert produced == golden


def test_train_outputs_byte_reproducible(tmp_path):
    cfg = write_tiny_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    for name in ("metrics.csv", "energy.csv", "checkpoint.ckpt"):
        assert sha256(a / name) == sha256(b / name), name


def test_prune_pipeline_and_budget(tmp_path):
    cfg = write_tiny_config(tmp_path)
    out = tmp_path / "train"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    pruned = tmp_path / "pruned"
    assert main(
        [
            "prune",
            "--config", cfg,
            "--checkpoint", str(out / "checkpoint.ckpt"),
            "--out", str(pruned),
        ]
    ) == 0
    rows = read_csv(pruned / "iterations.csv")
    assert rows[0]["iteration"] == "0"
    last = rows[-1]
    if not last["capped_pairs"]:
        assert float(last["achieved_ratio"]) >= float(last["target_ratio"])
    assert os.path.exists(pruned / "plan_1.csv")
    assert os.path.exists(pruned / "flops_1.csv")
    assert os.path.exists(pruned / "checkpoint.ckpt")


def test_prune_criterion_changes_selection(tmp_path):
    # channel 0 of the first pair: tiny out-slice, huge in-slice. The
    # out_channel score prunes it; the joint score keeps it.
    model = build_model(
        [
            {"kind": "dense", "out_features": 4},
            {"kind": "dense", "out_features": 4},
            {"kind": "dense", "out_features": 3},
        ],
        (2,),
        seed=0,
    )
    w0 = model.layers[0].weight.data
    w1 = model.layers[1].weight.data
    w0[:] = 1.0
    w1[:] = 1.0
    w0[0, :] = 1e-4
    w1[:, 0] = 50.0
    ckpt_path = tmp_path / "fixture.ckpt"
    save_checkpoint(model, {}, ckpt_path)
    body = TINY_CONFIG.replace("input = 1x8x8", "input = 2").replace(
        "layers = conv:4:k3:p1, relu, maxpool:2, conv:6:k3:p1, relu, maxpool:2, flatten, dense:4",
        "layers = dense:4, dense:4, dense:3",
    ).replace("task = striped_images", "task = gaussian_blobs").replace(
        "fine_tune_epochs = 1", "fine_tune_epochs = 0"
    )
    cfg = write_tiny_config(tmp_path, body)
    plans = {}
    for crit in ("out_channel", "out_in_channel"):
        out = tmp_path / crit
        assert main(
            [
                "prune",
                "--config", cfg,
                "--checkpoint", str(ckpt_path),
                "--out", str(out),
                "--override", f"criterion={crit}",
            ]
        ) == 0
        rows = read_csv(out / "plan_1.csv")
        plans[crit] = {(r["pair_id"], r["channel"]) for r in rows}
    assert ("0", "0") in plans["out_channel"]
    assert ("0", "0") not in plans["out_in_channel"]


def test_eval_does_not_mutate_checkpoint(tmp_path, capsys):
    cfg = write_tiny_config(tmp_path)
    out = tmp_path / "out"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    ckpt = out / "checkpoint.ckpt"
    before = sha256(ckpt)
    assert main(["eval", "--config", cfg, "--checkpoint", str(ckpt)]) == 0
    assert "eval accuracy:" in capsys.readouterr().out
    assert sha256(ckpt) == before


def test_report_merges_runs_and_is_deterministic(tmp_path):
    cfg = write_tiny_config(tmp_path)
    runs = []
    for name in ("first", "second"):
        train_out = tmp_path / f"train_{name}"
        assert main(["train", "--config", cfg, "--out", str(train_out)]) == 0
        prune_out = tmp_path / name
        assert main(
            [
                "prune",
                "--config", cfg,
                "--checkpoint", str(train_out / "checkpoint.ckpt"),
                "--out", str(prune_out),
            ]
        ) == 0
        runs.append(str(prune_out))
    rep1, rep2 = tmp_path / "rep1", tmp_path / "rep2"
    for rep in (rep1, rep2):
        assert main(
            ["report", "--run-dir", runs[0], "--run-dir", runs[1], "--out", str(rep)]
        ) == 0
    rows = read_csv(rep1 / "accuracy_vs_flops.csv")
    assert {r["series"] for r in rows} == {"first", "second"}
    for name in ("accuracy_vs_flops.csv", "accuracy_vs_flops.svg",
                 "energy_hist.csv", "energy_hist.svg"):
        assert sha256(rep1 / name) == sha256(rep2 / name), name
    svg = (rep1 / "accuracy_vs_flops.svg").read_text()
    assert svg.startswith("<svg ")
