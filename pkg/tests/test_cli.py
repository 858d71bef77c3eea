import json

import numpy as np
import pytest

from graphsr.cli import main
from graphsr.io import load_graph, load_selection, load_signals


@pytest.fixture
def geo(tmp_path):
    out = tmp_path / "gen"
    assert main(["gen", "--kind", "geometric", "--n", "80", "--degree", "8", "--bandwidth", "4",
                 "--piecewise", "--seed", "2", "--out", str(out)]) == 0
    return out


def test_gen_sbm_writes_declared_outputs(tmp_path):
    out = tmp_path / "sbm"
    assert main(["gen", "--kind", "sbm", "--sizes", "30,10", "--p-in", "0.3,0.3", "--p-out", "0.01",
                 "--bandwidth", "3", "--features", "2", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "gen"
    for name in manifest["outputs"]:
        assert (out / name).exists()
    g = load_graph(out / "graph.txt")
    assert g.n == 40
    assert load_signals(out / "signals.csv", 40).shape == (40, 3)


def test_sample_and_recover_pipeline(geo, tmp_path):
    sel = tmp_path / "sel"
    assert main(["sample", "--graph", str(geo / "graph.txt"), "--signals", str(geo / "signals.csv"),
                 "--method", "bls", "--bandwidth", "4", "--m", "6", "--out", str(sel)]) == 0
    plan, _ = load_selection(sel / "selection.json")
    assert len(plan.indices) == 6
    rec = tmp_path / "rec"
    assert main(["recover", "--graph", str(geo / "graph.txt"), "--signals", str(geo / "signals.csv"),
                 "--selection", str(sel / "selection.json"), "--out", str(rec)]) == 0
    x = load_signals(geo / "signals.csv")
    x_hat = load_signals(rec / "recovered.csv")
    assert np.allclose(x_hat[list(plan.indices)], x[list(plan.indices)])


def test_train_sr_then_unrolled_recover_is_reproducible(geo, tmp_path):
    tr = tmp_path / "tr"
    assert main(["train-sr", "--graph", str(geo / "graph.txt"), "--signals", str(geo / "signals.csv"),
                 "--m", "10", "--epochs", "3", "--out", str(tr)]) == 0
    args = ["recover", "--graph", str(geo / "graph.txt"), "--signals", str(geo / "signals.csv"),
            "--selection", str(tr / "selection.json"), "--method", "unrolled",
            "--checkpoint", str(tr / "model.ckpt")]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(["recover", "--config", str(tmp_path / "r1" / "manifest.json"), "--out", str(tmp_path / "r2")]) == 0
    for name in ("recovered.csv", "recovery_report.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_exit_codes(geo, tmp_path, capsys):
    bad = tmp_path / "bad"
    assert main(["gen", "--kind", "sbm", "--p-in", "1.5,0.1", "--out", str(bad)]) == 3
    assert main(["sample", "--graph", str(tmp_path / "missing.txt"), "--signals", "x",
                 "--out", str(bad)]) == 3
    assert main(["sample", "--graph", str(geo / "graph.txt"), "--out", str(bad)]) == 2
    assert main(["recover", "--graph", str(geo / "graph.txt"), "--signals", str(geo / "signals.csv"),
                 "--selection", str(bad / "none.json"), "--out", str(bad)]) == 3
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["gen", "--kind", "sbm", "--config", str(cfg), "--out", str(bad)]) == 3
    with pytest.raises(SystemExit) as info:
        main(["gen", "--out", str(bad), "--kind", "torus"])
    assert info.value.code == 2


def test_diverging_step_is_numeric_failure(geo, tmp_path):
    sel = tmp_path / "sel"
    main(["sample", "--graph", str(geo / "graph.txt"), "--signals", str(geo / "signals.csv"),
          "--method", "random", "--m", "20", "--out", str(sel)])
    code = main(["recover", "--graph", str(geo / "graph.txt"), "--signals", str(geo / "signals.csv"),
                 "--selection", str(sel / "selection.json"), "--method", "iterative", "--step-size", "50",
                 "--iters", "400", "--out", str(tmp_path / "rec")])
    assert code == 4


def test_manifest_of_other_command_is_usage_error(geo, tmp_path):
    code = main(["sample", "--config", str(geo / "manifest.json"), "--out", str(tmp_path / "x")])
    assert code == 2


def test_exp_set_override_and_rerun(tmp_path, capsys):
    out = tmp_path / "a"
    args = ["exp", "active", "--trials", "1", "--budgets", "3,6", "--set", "block_sizes=[15,15,15]",
            "--set", "samplers=[\"random\",\"sp\"]", "--set", "gcn_epochs=20", "--out", str(out)]
    assert main(args) == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary) == {"random", "sp"}
    assert main(["exp", "active", "--config", str(out / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    assert (out / "active.csv").read_bytes() == (tmp_path / "b" / "active.csv").read_bytes()
    assert main(["exp", "active", "--set", "nonsense=1", "--out", str(tmp_path / "c")]) == 3
    assert main(["exp", "gxn", "--budgets", "1", "--out", str(tmp_path / "d")]) == 2
