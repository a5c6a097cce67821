import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from pccomplete import cli, metrics, neuralcore, pcgeom, projection


def run(*args, env=None, cwd=None):
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run(
        [sys.executable, "-m", "pccomplete.cli", *map(str, args)],
        capture_output=True, text=True, env=full_env, cwd=cwd,
    )


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    pcgeom.write_pcb(d / "partial.pcb", rng.uniform(-0.4, 0.4, (2048, 3)))
    pcgeom.write_pcb(d / "gt.pcb", metrics.fibonacci_sphere(8192))
    assert cli.main(["init-weights", "--profile", "tiny-test", "--seed", "3", "--out", str(d / "w.psw")]) == 0
    return d


def test_project_default_three_views(files, tmp_path):
    assert cli.main(["project", str(files / "partial.pcb"), str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == [f"view_{i}.{e}" for i in range(3) for e in ("dmb", "pgm")]
    dm = projection.read_dmb(tmp_path / "view_0.dmb")
    assert dm.depth.shape == (224, 224) and dm.viewpoint.position == (np.float32(0.7), 0.0, 0.0)


def test_project_one_view_and_overrides(files, tmp_path):
    assert cli.main(["project", str(files / "partial.pcb"), str(tmp_path), "--views", "1", "--resolution", "64"]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["view_0.dmb", "view_0.pgm"]
    assert projection.read_dmb(tmp_path / "view_0.dmb").depth.shape == (64, 64)


def test_project_config_and_flag_precedence(files, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# two views at 96px\nn_views = 2\nresolution = 96  # trailing comment\n")
    out = tmp_path / "o"
    assert cli.main(["project", str(files / "partial.pcb"), str(out), "--config", str(cfg), "--resolution", "32"]) == 0
    assert len(list(out.glob("*.dmb"))) == 2
    assert projection.read_dmb(out / "view_1.dmb").depth.shape == (32, 32)


def test_project_bad_config(files, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("warp = 9\n")
    assert cli.main(["project", str(files / "partial.pcb"), str(tmp_path / "o"), "--config", str(cfg)]) == 2


def test_project_corrupt_text_input(tmp_path):
    (tmp_path / "bad.xyz").write_text("1 2 three\n")
    assert cli.main(["project", str(tmp_path / "bad.xyz"), str(tmp_path / "o")]) == 2
    assert cli.main(["project", str(tmp_path / "missing.xyz"), str(tmp_path / "o")]) == 2


def test_complete_and_trace(files, tmp_path):
    out, trace = tmp_path / "out.pcb", tmp_path / "trace"
    assert cli.main([
        "complete", str(files / "partial.pcb"), "--weights", str(files / "w.psw"),
        "--profile", "tiny-test", "--out", str(out), "--trace", str(trace),
    ]) == 0
    assert pcgeom.read_pcb(out).shape == (256, 3)
    names = sorted(p.name for p in trace.iterdir())
    assert names == sorted(["p_c.pcb", "p_0.pcb", "p_1.pcb", "p_2.pcb", "alpha_1.f32", "alpha_2.f32",
                            "attn_1.f32", "attn_2.f32", "attn_1.meta", "attn_2.meta"])
    assert (trace / "attn_1.meta").read_text().split() == ["64", "64"]
    assert (trace / "alpha_2.f32").stat().st_size == 4 * 128
    assert (trace / "p_2.pcb").read_bytes() == out.read_bytes()


def test_complete_rejects_mismatched_weights(files, tmp_path):
    assert cli.main([
        "complete", str(files / "partial.pcb"), "--weights", str(files / "w.psw"),
        "--profile", "pcn", "--out", str(tmp_path / "o.pcb"),
    ]) == 2


@pytest.mark.parametrize("flag", [["--no-projection"], ["--no-analysis"], ["--no-alignment"],
                                  ["--no-incompleteness"], ["--fixed-alpha", "0.5"]])
def test_complete_ablation_flags(files, tmp_path, flag):
    out = tmp_path / "o.pcb"
    assert cli.main(["complete", str(files / "partial.pcb"), "--weights", str(files / "w.psw"),
                     "--profile", "tiny-test", "--out", str(out), *flag]) == 0
    assert pcgeom.read_pcb(out).shape == (256, 3)


def test_protocol(files, tmp_path):
    for missing in (2048, 4096, 6144):
        out, rest = tmp_path / f"p{missing}.pcb", tmp_path / f"m{missing}.pcb"
        assert cli.main(["protocol", str(files / "gt.pcb"), "--viewpoint", "5", "--missing", str(missing),
                         "--out", str(out), "--missing-out", str(rest)]) == 0
        assert pcgeom.read_pcb(out).shape == (2048, 3)
        assert pcgeom.read_pcb(rest).shape == (missing, 3)


def test_protocol_bad_viewpoint_and_missing(files, tmp_path):
    base = ["protocol", str(files / "gt.pcb"), "--out", str(tmp_path / "o.pcb")]
    assert cli.main(base + ["--viewpoint", "8", "--missing", "2048"]) == 2
    assert cli.main(base + ["--viewpoint", "-1", "--missing", "2048"]) == 2
    assert cli.main(base + ["--viewpoint", "0", "--missing", "1000"]) == 2


def test_eval_identity(files, capsys):
    assert cli.main(["eval", str(files / "gt.pcb"), str(files / "gt.pcb")]) == 0
    lines = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert lines["cd_eq5"] == "0" and lines["f1"] == "1" and lines["dcd"] == "0"


def test_eval_metric_filter(files, capsys):
    assert cli.main(["eval", str(files / "partial.pcb"), str(files / "gt.pcb"), "--metrics", "cd_l2,f1", "--tau", "0.05"]) == 0
    keys = [line.split(" = ")[0] for line in capsys.readouterr().out.splitlines()]
    assert "cd_l2" in keys and "f1" in keys and "dcd" not in keys and "cd_eq5" not in keys
    assert cli.main(["eval", str(files / "partial.pcb"), str(files / "gt.pcb"), "--metrics", "emd"]) == 2


def test_eval_batch_csv(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir(), gt.mkdir()
    rng = np.random.default_rng(1)
    for i in range(4):
        pcgeom.write_pcb(pred / f"s{i}.pcb", rng.random((50, 3)))
        pcgeom.write_pcb(gt / f"s{i}.pcb", rng.random((60, 3)))
    table = tmp_path / "m.csv"
    assert cli.main(["eval", str(pred), str(gt), "--csv", str(table)]) == 0
    rows = list(csv.DictReader(table.open()))
    assert len(rows) == 4 and rows[0]["shape"] == "s0.pcb"
    want = metrics.chamfer(pcgeom.read_pcb(pred / "s2.pcb"), pcgeom.read_pcb(gt / "s2.pcb"), "l2-squared")
    assert float(rows[2]["cd_l2"]) == pytest.approx(want, rel=1e-8)


def test_format_error_exit_code(files, tmp_path):
    bad = tmp_path / "bad.pcb"
    bad.write_bytes(b"NOPE" + (files / "partial.pcb").read_bytes()[4:])
    assert cli.main(["eval", str(bad), str(files / "gt.pcb")]) == 3
    badw = tmp_path / "bad.psw"
    badw.write_bytes(b"XXXX" + (files / "w.psw").read_bytes()[4:])
    assert cli.main(["complete", str(files / "partial.pcb"), "--weights", str(badw),
                     "--profile", "tiny-test", "--out", str(tmp_path / "o.pcb")]) == 3


def test_usage_errors():
    assert cli.main([]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["init-weights", "--profile", "nope", "--out", "x"]) == 2


def test_init_weights_repeatable(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["init-weights", "--profile", "tiny-test", "--seed", "9", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    w = neuralcore.load_weights(tmp_path / "a")
    assert w.identical(neuralcore.init_weights("tiny-test", 9))


def test_fit_demo_writes_curve(tmp_path):
    out = tmp_path / "curve.csv"
    assert cli.main(["fit-demo", "--out", str(out), "--steps", "20"]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["step", "loss"] and len(rows) == 22
    assert all(float(r[1]) >= 0 for r in rows[1:])


def test_selfcheck_subprocess():
    res = run("selfcheck")
    assert res.returncode == 0, res.stdout + res.stderr
    from pccomplete import selfcheck
    for fn in selfcheck.CHECKS:
        assert f"PASS {fn.__name__}" in res.stdout


def test_complete_is_byte_identical_across_thread_counts(files, tmp_path):
    outs = []
    for threads in ("1", "4"):
        env = {k: threads for k in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")}
        out = tmp_path / f"o{threads}.pcb"
        res = run("complete", files / "partial.pcb", "--weights", files / "w.psw", "--profile", "tiny-test",
                  "--out", out, "--trace", tmp_path / f"t{threads}", env=env)
        assert res.returncode == 0, res.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    for name in ("p_c.pcb", "alpha_1.f32", "attn_2.f32"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes()
