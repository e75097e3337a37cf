import re

import numpy as np
import pytest

from wienergauge.cli import (
    ConfigError,
    RunConfig,
    emit_svg,
    main,
    parse_config,
)
from wienergauge.pipeline import GalleryEntry, run_gallery


def test_parse_example():
    cfg = parse_config("capacity --domain full_ball --p 2 --rho 0.25 --grid 129".split())
    assert (cfg.command, cfg.domain, cfg.p, cfg.rho, cfg.grid) == ("capacity", "full_ball", 2.0,
                                                                  0.25, 129)


def test_parse_equals_and_hyphens():
    cfg = parse_config(["delta", "--nodes-across=12", "--radii", "0.5,0.25"])
    assert cfg.nodes_across == 12 and cfg.radii == (0.5, 0.25)


def test_unknown_flag_named():
    with pytest.raises(ConfigError, match="fast"):
        parse_config(["capacity", "--fast", "1"])


@pytest.mark.parametrize("args", [[], ["launch"], ["capacity", "--p", "two"],
                                  ["capacity", "--rho", "1.5"], ["capacity", "--grid", "64"],
                                  ["wiener", "--radii", "0.25,0.5"], ["capacity", "--p"]])
def test_bad_configs(args):
    with pytest.raises(ConfigError):
        parse_config(args)


def test_flag_overrides_file(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# trial\ndomain = half_space\np = 1.5\nrho = 0.125  # small\n")
    cfg = parse_config(["capacity", "--config", str(conf), "--p", "1.8"])
    assert cfg.domain == "half_space" and cfg.rho == 0.125 and cfg.p == 1.8


def test_file_unknown_key(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("speed = 3\n")
    with pytest.raises(ConfigError, match="speed"):
        parse_config(["capacity", "--config", str(conf)])


def test_digest_ignores_output_dir():
    a = parse_config(["capacity", "--out", "x"])
    b = parse_config(["capacity", "--out", "y"])
    assert a.digest() == b.digest() != parse_config(["capacity", "--p", "1.5"]).digest()


def test_invalid_rho_exit_2_no_artifacts(tmp_path):
    out = tmp_path / "o"
    assert main(["capacity", "--rho", "1.5", "--out", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())


def test_geometry_error_exit_2(tmp_path):
    assert main(["capacity", "--domain", "blob", "--out", str(tmp_path)]) == 2


def test_help(capsys):
    assert main(["--help"]) == 0
    assert "capacity" in capsys.readouterr().out


def _run(tmp_path, name, args):
    out = tmp_path / name
    assert main(args + ["--out", str(out)]) == 0
    return out


def test_capacity_run_deterministic(tmp_path):
    args = ["capacity", "--domain", "slit", "--rho", "0.25", "--grid", "33", "--refine", "2"]
    a = _run(tmp_path, "a", args)
    b = _run(tmp_path, "b", args)
    for name in ("capacity.csv", "levels.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    text = (a / "capacity.csv").read_text().splitlines()
    assert text[0].startswith("# command=capacity config_hash=")
    assert re.search(r"grid=33 tol=\S+ max_iters=\d+", text[0])
    assert text[1] == "value,extrapolated,order,levels,iterations,residual"
    assert float(text[2].split(",")[0]) > 0


def test_solve_artifacts(tmp_path):
    from wienergauge.geometry import GridFunction
    out = _run(tmp_path, "s", ["solve", "--domain", "slit", "--grid", "33", "--emit-svg", "true"])
    gf = GridFunction.from_bytes((out / "solution.bin").read_bytes())
    assert gf.grid.counts == (33, 33)
    lines = (out / "oscillation.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and lines[1] == "rho,osc"
    assert (out / "oscillation.svg").read_text().count("<polyline") == 1


def test_wiener_artifacts(tmp_path):
    import json
    out = _run(tmp_path, "w", ["wiener", "--domain", "half_space", "--levels", "4",
                               "--nodes-across", "8"])
    rec = json.loads((out / "wiener.json").read_text())
    assert rec["growth_class"] in ("bounded", "log", "loglog", "indeterminate")
    for name in ("delta.csv", "wiener.csv", "wiener_curve.csv"):
        assert (out / name).read_text().startswith("# command=wiener")


def test_verify_artifacts(tmp_path):
    out = _run(tmp_path, "v", ["verify", "--domain", "slit", "--grid", "129"])
    lines = (out / "verify.csv").read_text().splitlines()
    assert lines[1] == "name,lhs,rhs,ratio,witness,h,flags"
    assert all(len(ln.split(",")) == 7 for ln in lines[1:])
    names = {ln.split(",")[0] for ln in lines[2:]}
    assert {"eq21", "eq23", "eq25", "eq33", "eq34", "cap_lb", "eq32"} <= names
    assert "eps_eff=" in (out / "calibration.txt").read_text()


@pytest.mark.slow
def test_modulus_cone_decays_geometrically(tmp_path):
    out = _run(tmp_path, "m", ["modulus", "--domain", "cone:0.7853981634", "--p", "2",
                               "--levels", "6", "--gamma", "50"])
    lines = [ln for ln in (out / "modulus.csv").read_text().splitlines()
             if not ln.startswith("#")]
    assert lines[0] == "n,rho,delta,factor,osc_bound,eq18_bound"
    osc = np.array([float(ln.split(",")[4]) for ln in lines[1:]])
    ratios = osc[1:] / osc[:-1]
    assert np.all(ratios < 1)
    # roughly constant relative capacity on a cone: nearly constant decay factor
    assert ratios.max() - ratios.min() < 0.05
    assert (out / "modulus_literal.csv").exists()


@pytest.mark.slow
def test_gallery_default(tmp_path):
    out = _run(tmp_path, "g", ["gallery"])
    lines = (out / "gallery.csv").read_text().splitlines()
    assert lines[1] == "domain,p,eps,rho_min,I,ziemer,growth_class"
    assert len(lines) - 2 >= 5


def test_worker_count_does_not_change_results(monkeypatch):
    manifest = (GalleryEntry("slit", 2, 2.0, 0.5, levels=4),
                GalleryEntry("half_space", 2, 1.5, 0.5, levels=4))
    serial = [r.csv_row() for r in run_gallery(manifest, workers=1)]
    monkeypatch.setenv("WIENERGAUGE_THREADS", "2")
    parallel = [r.csv_row() for r in run_gallery(manifest)]
    assert serial == parallel


def test_bad_threads_env(monkeypatch):
    monkeypatch.setenv("WIENERGAUGE_THREADS", "many")
    with pytest.raises(ValueError, match="WIENERGAUGE_THREADS"):
        run_gallery((GalleryEntry("empty", 2, 2.0, 0.5, levels=4),))


def test_svg_single_series(tmp_path):
    path = emit_svg([("a", [1.0, 2.0], [0.5, 0.25])], tmp_path / "a.svg")
    text = path.read_text()
    assert text.startswith("<svg") or text.startswith("<?xml")
    assert text.count("<polyline") == 1


def test_svg_deterministic(tmp_path):
    series = [("x", [0.5, 0.25, 0.125], [1, 2, 3]), ("y", [0.5, 0.25, 0.125], [3, 2, 1])]
    a = emit_svg(series, tmp_path / "a.svg", logx=True, title="t")
    b = emit_svg(series, tmp_path / "b.svg", logx=True, title="t")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().count("<polyline") == 2


@pytest.mark.parametrize("series", [[], [("a", [], [])], [("a", [1, 2], [1])]])
def test_svg_rejects(tmp_path, series):
    with pytest.raises(ValueError):
        emit_svg(series, tmp_path / "x.svg")


def test_runconfig_defaults_valid():
    cfg = RunConfig(command="capacity")
    assert cfg.h() == pytest.approx(4 / 128)
    assert cfg.dimension() == 2
