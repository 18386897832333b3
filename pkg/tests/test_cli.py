import json

import numpy as np
import pytest

from foldkit.analysis import max_threads, min_tokens
from foldkit.cli import main, merge_reports, read_config_file
from foldkit.errors import FormatError
from foldkit.folder import FoldTrace
from foldkit.linalg import cosine_matrix
from foldkit.tokenseq import load

SMALL = ["--dim", "16", "--heads", "2", "--blocks", "4", "--seed", "3", "--n", "40"]


def run(*argv):
    return main([str(a) for a in argv])


def test_gen_is_reproducible(tmp_path):
    a, b = tmp_path / "a.ftsq", tmp_path / "b.ftsq"
    assert run("gen", "--seed", 5, "--n", 30, "--d", 8, "--out", a) == 0
    assert run("gen", "--seed", 5, "--n", 30, "--d", 8, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    run("gen", "--seed", 6, "--n", 30, "--d", 8, "--out", b)
    assert a.read_bytes() != b.read_bytes()


def test_gen_correlation_extremes(tmp_path):
    path = tmp_path / "x.ftsq"
    means = []
    for seed in range(5):
        run("gen", "--seed", seed, "--n", 100, "--d", 64, "--correlation", 0, "--out", path)
        c = np.abs(cosine_matrix(load(path).tokens, load(path).tokens))
        means.append(c[~np.eye(100, dtype=bool)].mean())
    assert np.mean(means) < 0.2
    for seed in range(5):
        run("gen", "--seed", seed, "--n", 100, "--d", 64, "--correlation", 0.99, "--out", path)
        assert min_tokens(load(path).tokens, 0.9) <= 3


def test_gen_pinned(tmp_path):
    path = tmp_path / "p.ftsq"
    run("gen", "--n", 10, "--d", 4, "--pinned", 1, "--out", path)
    assert load(path).pinned_prefix == 1


def test_fold_writes_sequence_and_trace(tmp_path):
    src, out, trace = tmp_path / "in.ftsq", tmp_path / "out.ftsq", tmp_path / "t.json"
    run("gen", "--n", 50, "--d", 8, "--out", src)
    assert run("fold", "--in", src, "--r", 40, "--out", out, "--trace", trace) == 0
    seq = load(out)
    assert seq.n == 10 and seq.sizes.sum() == 50
    t = FoldTrace.from_dict(json.loads(trace.read_text()))
    assert t.r_folds == [25, 12, 3]
    assert run("fold", "--in", src, "--ratio", 0.5, "--agg", "drop", "--matcher", "turbo", "--out", out) == 0
    assert load(out).n == 25


def test_exit_codes(tmp_path, capsys):
    src = tmp_path / "in.ftsq"
    run("gen", "--n", 10, "--d", 4, "--out", src)
    # argument error
    assert run("fold", "--in", src, "--out", tmp_path / "o.ftsq") == 2
    with pytest.raises(SystemExit) as exc:
        run("fold", "--bogus")
    assert exc.value.code == 2
    # capacity error
    assert run("fold", "--in", src, "--r", 10, "--out", tmp_path / "o.ftsq") == 4
    assert run("simulate", *SMALL, "--schedule", "last1:40") == 4
    # format error
    bad = tmp_path / "bad.ftsq"
    bad.write_bytes(b"nope")
    assert run("fold", "--in", bad, "--r", 1, "--out", tmp_path / "o.ftsq") == 3
    # missing file
    assert run("fold", "--in", tmp_path / "missing.ftsq", "--r", 1, "--out", tmp_path / "o.ftsq") == 1
    err = capsys.readouterr().err
    assert "foldkit: error" in err


def test_emd_subcommand(tmp_path):
    a, b, rep, plan = (tmp_path / f for f in ("a.ftsq", "b.ftsq", "r.json", "plan.csv"))
    run("gen", "--seed", 1, "--n", 6, "--d", 3, "--out", a)
    run("gen", "--seed", 2, "--n", 4, "--d", 3, "--out", b)
    assert run("emd", "--a", a, "--b", b, "--report", rep, "--plan", plan) == 0
    data = json.loads(rep.read_text())
    gamma = np.loadtxt(plan, delimiter=",")
    assert gamma.shape == (6, 4)
    np.testing.assert_allclose(gamma.sum(axis=1), 1 / 6, atol=1e-12)
    assert data["emd"] > 0 and data["version"] and data["kind"] == "emd"


def test_simulate_writes_activations(tmp_path):
    acts, out, rep = tmp_path / "acts", tmp_path / "out.ftsq", tmp_path / "r.json"
    assert run("simulate", *SMALL, "--schedule", "last1:20", "--out", out, "--acts", acts, "--report", rep) == 0
    assert load(out).n == 20
    assert len(list(acts.glob("block_*_attn.npy"))) == 4
    data = json.loads(rep.read_text())
    assert data["table"]["values"][-1] == [20, 20]
    assert len(data["weights_sha256"]) == 64


def test_report_merge(tmp_path):
    r1, r2, merged, csv = (tmp_path / f for f in ("p1.json", "p2.json", "m.json", "m.csv"))
    assert run("propagate", *SMALL, "--ratios", "0.5", "--report", r1) == 0
    assert run("propagate", *SMALL, "--ratios", "0.25", "--report", r2) == 0
    assert run("report", r1, "--out", merged) == 0
    single = json.loads(merged.read_text())
    assert single["table"] == json.loads(r1.read_text())["table"]
    assert run("report", r1, r2, "--out", merged, "--csv", csv) == 0
    table = json.loads(merged.read_text())["table"]
    assert len(table["index"]) == 4 and all(len(row) == 2 for row in table["values"])
    assert len(csv.read_text().splitlines()) == 5
    inputs = json.loads(merged.read_text())["inputs"]
    assert [i["config"]["ratios"] for i in inputs] == ["0.5", "0.25"]


def test_report_twelve_blocks(tmp_path):
    # two propagation sweeps over 12 blocks give a 12 x 2 table
    reps = []
    for i, ratio in enumerate(("0.5", "0.75")):
        path = tmp_path / f"p{i}.json"
        run("propagate", "--dim", 8, "--heads", 2, "--blocks", 12, "--n", 16, "--ratios", ratio, "--report", path)
        reps.append(path)
    table = merge_reports(reps)["table"]
    assert len(table["values"]) == 12 and all(len(v) == 2 for v in table["values"])


def test_report_schema_mismatch_names_file(tmp_path):
    good, other, broken = tmp_path / "g.json", tmp_path / "e.json", tmp_path / "broken.json"
    run("propagate", *SMALL, "--ratios", "0.5", "--report", good)
    run("energy", *SMALL, "--report", other)
    broken.write_text('{"tool": "foldkit"}')
    with pytest.raises(FormatError, match="broken.json"):
        merge_reports([good, broken])
    with pytest.raises(FormatError, match="e.json"):
        merge_reports([good, other])
    assert run("report", good, broken) == 3


def test_config_file_and_override(tmp_path):
    cfg, rep = tmp_path / "run.cfg", tmp_path / "r.json"
    cfg.write_text("# small run\ndim = 16\nheads = 2\nblocks = 4\nseed = 3\nn = 40\nthresholds = 0.5,0.9\n")
    assert read_config_file(cfg)["dim"] == "16"
    assert run("energy", "--config", cfg, "--blocks", 3, "--report", rep) == 0
    data = json.loads(rep.read_text())
    assert data["config"]["dim"] == 16 and data["config"]["blocks"] == 3
    assert len(data["table"]["index"]) == 3 and data["seeds"] == {"seed": 3, "data_seed": 3}
    cfg.write_text("dim 16\n")
    assert run("energy", "--config", cfg) == 3


@pytest.mark.parametrize("cmd,extra", [
    ("propagate", ["--ratios", "0.5"]),
    ("aggsweep", ["--block", "4"]),
    ("energy", []),
    ("schedsweep", ["--kinds", "last1,uniform"]),
])
def test_report_replay_is_byte_identical(tmp_path, cmd, extra):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert run(cmd, *SMALL, *extra, "--report", first) == 0
    assert run(cmd, "--config", first, "--report", second) == 0
    assert first.read_bytes() == second.read_bytes()


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("FOLDKIT_THREADS", "2")
    assert max_threads() == 2
    monkeypatch.setenv("FOLDKIT_THREADS", "0")
    assert max_threads() >= 1


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("FOLDKIT_THREADS", threads)
        path = tmp_path / f"t{threads}.json"
        run("propagate", *SMALL, "--ratios", "0.5", "--report", path)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
