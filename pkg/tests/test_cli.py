import json

import numpy as np
import pytest
from click.testing import CliRunner

from toolbody.cli import main
from toolbody.mlp import load_model

TINY = """
[run]
seed = 3
[grid]
l_tool = 300 500 700
phi_tool = 0 30 60
[data]
n_per_grasp = 40
[train]
epochs = 3
batch_size = 60
hidden = 16, 16
[finetune]
epochs = 2
[trajectory]
n_cycles = 12
"""


@pytest.fixture
def tiny(tmp_path):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY)
    return cfg


def run(args, ok=True):
    res = CliRunner().invoke(main, [str(a) for a in args])
    if ok:
        assert res.exit_code == 0, res.output
    return res


def pipeline(cfg, out):
    run(["--config", cfg, "--out", out, "gen-data"])
    run(["--config", cfg, "--out", out, "train", "--data", out / "data.csv"])
    run(["--config", cfg, "--out", out, "adapt-run", "--model", out / "model.tbnpb",
         "--scenario", "1"])


def test_pipeline_outputs(tiny, tmp_path):
    out = tmp_path / "o"
    pipeline(tiny, out)
    assert (out / "data.csv").read_text().count("\n") == 9 * 40 + 1
    model, latents = load_model(out / "model.tbnpb")
    assert model.layer_dims == [9, 16, 16, 3] and sorted(latents) == list(range(9))
    loss = (out / "model_loss.csv").read_text().splitlines()
    assert loss[0] == "epoch,mse" and len(loss) == 5
    assert (out / "model_latents.csv").read_text().startswith("grasp_id,p_1,p_2,l_tool")
    head = (out / "adapt_1.csv").read_text().splitlines()[0].split(",")
    assert head[:5] == ["step", "time_s", "phase", "stored", "buffer_size"]
    summary = json.loads((out / "adapt_1_summary.json").read_text())
    assert summary["scenario"] == "1" and summary["switch_step"] == 18


def test_pipeline_is_byte_identical(tiny, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    pipeline(tiny, a)
    pipeline(tiny, b)
    for name in ("data.csv", "model.tbnpb", "model_loss.csv", "model_latents.csv",
                 "adapt_1.csv", "adapt_1_summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_seed_override_changes_data(tiny, tmp_path):
    run(["--config", tiny, "--out", tmp_path / "s1", "--seed", 1, "gen-data"])
    run(["--config", tiny, "--out", tmp_path / "s2", "--seed", 2, "gen-data"])
    assert (tmp_path / "s1/data.csv").read_bytes() != (tmp_path / "s2/data.csv").read_bytes()


def test_finetune_control_and_map(tiny, tmp_path):
    out = tmp_path / "o"
    run(["--config", tiny, "--out", out, "gen-data"])
    run(["--config", tiny, "--out", out, "train", "--data", out / "data.csv"])
    run(["--config", tiny, "--out", out, "gen-data", "--name", "real.csv", "--noise-mm", 10,
         "--n-per-grasp", 20])
    run(["--config", tiny, "--out", out, "finetune", "--model", out / "model.tbnpb",
         "--data", out / "real.csv"])
    _, lat = load_model(out / "finetuned.tbnpb")
    assert np.all(np.isfinite(np.stack(list(lat.values()))))
    for mode in ("update_p", "frozen"):
        run(["--config", tiny, "--out", out, "control-run", "--model", out / "model.tbnpb",
             "--mode", mode])
        s = json.loads((out / f"control_{mode}_summary.json").read_text())
        assert s["mode"] == mode and np.isfinite(s["replay_mean_mm"])
    solves = (out / "control_frozen_solves.csv").read_text().splitlines()
    assert solves[0] == "phase,step,epoch,chosen_gamma,loss,position_error_mm"
    assert len(solves) == 1 + 2 * 36 * 10
    run(["--config", tiny, "--out", out, "pb-map", "--model", out / "model.tbnpb"])
    rows = (out / "pb_map.csv").read_text().splitlines()
    assert rows[0] == "grasp_id,pc1,pc2,l_tool,phi_tool,psi_tool" and len(rows) == 10


@pytest.mark.parametrize("args,needle", [
    (["--config", "/no/such.ini", "gen-data"], "config file not found"),
    (["train", "--data", "/no/such.csv"], "does not exist"),
    (["adapt-run", "--model", "/no/model.tbnpb", "--scenario", "1"], "model file not found"),
])
def test_errors_are_single_line_nonzero(tmp_path, args, needle):
    res = run(["--out", tmp_path, *args], ok=False)
    assert res.exit_code != 0
    assert needle in res.output


def test_bad_scenario_and_corrupt_model(tiny, tmp_path):
    bad = tmp_path / "bad.tbnpb"
    bad.write_bytes(b"TBNPB9garbage")
    res = run(["--out", tmp_path, "pb-map", "--model", bad], ok=False)
    assert res.exit_code == 1 and "version" in res.output
    assert len(res.output.strip().splitlines()) == 1
    out = tmp_path / "o"
    run(["--config", tiny, "--out", out, "gen-data"])
    run(["--config", tiny, "--out", out, "train", "--data", out / "data.csv", "--epochs", 0])
    res = run(["--config", tiny, "--out", out, "adapt-run", "--model", out / "model.tbnpb",
               "--scenario", "9"], ok=False)
    assert res.exit_code == 1 and "unknown scenario" in res.output
