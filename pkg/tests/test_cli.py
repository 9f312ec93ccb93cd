import json

import numpy as np
import pytest

from camgraph.cli import main
from camgraph.formats import PointCloud, write_pfm, write_ply, write_png


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def workdir(tmp_path):
    assert run("gen", "--kind", "orbit", "--n", 40, "--noise", 0.05, "--seed", 1, "--out", tmp_path / "poses.json") == 0
    rng = np.random.default_rng(0)
    cloud = PointCloud(rng.uniform(size=(3000, 3)), rng.integers(0, 256, size=(3000, 3)).astype(np.uint8))
    write_ply(tmp_path / "points.ply", cloud)
    img = rng.uniform(size=(16, 20, 3))
    write_png(tmp_path / "i.png", img)
    write_pfm(tmp_path / "d.pfm", np.full((16, 20), 2.0))
    K = [[10.0, 0, 9.5], [0, 10.0, 7.5], [0, 0, 1]]
    (tmp_path / "cam.json").write_text(json.dumps({"K_i": K, "K_j": K, "R_ji": np.eye(3).tolist(), "T_ji": [0, 0, 0]}))
    return tmp_path


def stage_commands(d, out):
    return [
        ("gen", "--kind", "two_cluster", "--n", 10, "--seed", 2, "--format", "colmap", "--out", out / "gen.txt"),
        ("pairs", "--poses", d / "poses.json", "--r", 3, "--h", 4, "--out", out / "pairs.json", "--match-list", out / "pairs.txt"),
        ("filter", "--poses", d / "poses.json", "--pairs", out / "pairs.json", "--out", out / "kept.json",
         "--match-list", out / "kept.txt", "--report", out / "report.json"),
        ("graph", "--poses", d / "poses.json", "--pairs", out / "kept.json", "--out", out / "weights.json"),
        ("octree", "--in", d / "points.ply", "--out", out / "pruned.ply", "--target-points", 1000, "--tau", 2),
        ("consistency", "--image-i", d / "i.png", "--image-j", d / "i.png", "--depth-i", d / "d.pfm",
         "--camera", d / "cam.json", "--out", out / "loss.json"),
        ("validate", "--quick", "--samples", 100_000, "--out", out / "validate.json"),
        ("pipeline", "--poses", d / "poses.json", "--points", d / "points.ply", "--target-points", 500, "--out-dir", out / "pipe"),
    ]


def snapshot(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_every_stage_is_byte_deterministic(workdir):
    outs = []
    for name in ("run1", "run2"):
        out = workdir / name
        (out / "pipe").mkdir(parents=True)
        for cmd in stage_commands(workdir, out):
            assert run(*cmd) == 0, cmd[0]
        outs.append(snapshot(out))
    assert len(outs[0]) == 16
    assert outs[0] == outs[1]


def test_stage_outputs(workdir):
    out = workdir / "o"
    (out / "pipe").mkdir(parents=True)
    for cmd in stage_commands(workdir, out):
        assert run(*cmd) == 0
    weights = json.loads((out / "weights.json").read_text())
    assert weights["params"]["r"] == 3 and weights["params"]["mode"] == "strict"
    assert max(n["P"] for n in weights["nodes"]) == 1.0
    assert json.loads((out / "loss.json").read_text())["loss"] == 0.0
    assert json.loads((out / "validate.json").read_text())["passed"] is True
    report = json.loads((out / "report.json").read_text())
    assert report["kept"] + report["filtered"] == report["input_pairs"]
    kept_lines = (out / "kept.txt").read_text().splitlines()
    assert len(kept_lines) == report["kept"]
    pipe = {p.name for p in (out / "pipe").iterdir()}
    assert pipe == {"pairs.json", "filtered_pairs.json", "match_list.txt", "filter_report.json", "weights.json", "points_pruned.ply"}


def test_pipeline_matches_individual_stages(workdir):
    out = workdir / "o"
    (out / "pipe").mkdir(parents=True)
    args = ("--poses", workdir / "poses.json")
    assert run("pairs", *args, "--out", out / "pairs.json") == 0
    assert run("filter", *args, "--pairs", out / "pairs.json", "--out", out / "kept.json", "--match-list", out / "m.txt") == 0
    assert run("graph", *args, "--pairs", out / "kept.json", "--out", out / "w.json") == 0
    assert run("pipeline", *args, "--out-dir", out / "pipe") == 0
    assert (out / "pipe" / "pairs.json").read_bytes() == (out / "pairs.json").read_bytes()
    assert (out / "pipe" / "filtered_pairs.json").read_bytes() == (out / "kept.json").read_bytes()
    assert (out / "pipe" / "match_list.txt").read_bytes() == (out / "m.txt").read_bytes()
    assert (out / "pipe" / "weights.json").read_bytes() == (out / "w.json").read_bytes()


def test_usage_errors_exit_1(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        run("pairs")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 1
    assert run("pairs", "--poses", workdir / "poses.json", "--r", 0, "--out", workdir / "x.json") == 1
    assert run("gen", "--kind", "line", "--n", 1, "--out", workdir / "x.json") == 1


def test_data_errors_exit_2(workdir):
    bad = workdir / "bad.txt"
    bad.write_text("1 1 0 0 0 0 0 1 a.jpg\n")
    assert run("pairs", "--poses", bad, "--out", workdir / "x.json") == 2
    assert run("pairs", "--poses", workdir / "missing.json", "--out", workdir / "x.json") == 2
    (workdir / "junk.ply").write_bytes(b"not a ply")
    assert run("octree", "--in", workdir / "junk.ply", "--out", workdir / "y.ply") == 2
    assert not (workdir / "x.json").exists() and not (workdir / "y.ply").exists()


def test_validation_failure_exits_3(workdir, monkeypatch):
    import camgraph.validation as validation

    monkeypatch.setattr(validation, "RATE_TOLERANCE", -1.0)
    assert run("validate", "--quick", "--samples", 100_000, "--out", workdir / "v.json") == 3
    assert json.loads((workdir / "v.json").read_text())["passed"] is False
