import json
import math
import os

import numpy as np
import pytest

from neckflow import (NeckflowError, SweepSpec, build_symmetric_disc_example,
                      run_sweep)
from neckflow.cli import main as cli_main
from neckflow.harness import CSV_BASE_COLUMNS, compare_prediction


def tiny_spec(out_dir=None, **kw):
    geom = build_symmetric_disc_example(scale=1.0)
    base = dict(geometry=geom, p_list=(2.0,), eps_list=(1e-2,),
                target_h=0.16, neck_layers=6, probes=(0.0,),
                flux_windows=(0.3, 0.2, 0.1), out_dir=out_dir)
    base.update(kw)
    return SweepSpec(**base)


class TestSweepSpec:
    def test_validation(self, tmp_path):
        with pytest.raises(NeckflowError):
            tiny_spec(p_list=(0.9,)).validate()
        with pytest.raises(NeckflowError):
            tiny_spec(eps_list=(1e-3, 1e-2)).validate()
        tiny_spec(str(tmp_path / "out")).validate()


class TestSingleCaseSweep:
    def test_one_row_insufficient_slope(self, tmp_path):
        report = run_sweep(tiny_spec(str(tmp_path / "out")))
        assert len(report.rows) == 1
        assert report.fits[2.0]["slope_fit"]["status"] == "insufficient points"
        assert math.isnan(report.fits[2.0]["slope_fit"]["slope"])
        out = tmp_path / "out"
        assert (out / "rows.csv").exists()
        assert (out / "probes.csv").exists()
        assert (out / "report.json").exists()
        assert (out / "solution_2_0.01.txt").exists()
        summary = json.loads((out / "solution_2_0.01.json").read_text())
        assert summary["p"] == 2.0
        assert abs(summary["flux1"]) <= 1e-8

    def test_csv_columns_frozen(self, tmp_path):
        spec = tiny_spec(str(tmp_path / "out"))
        run_sweep(spec)
        header = (tmp_path / "out" / "rows.csv").read_text().splitlines()[1]
        cols = header.split(",")
        assert cols[:len(CSV_BASE_COLUMNS)] == list(CSV_BASE_COLUMNS)
        assert cols[len(CSV_BASE_COLUMNS):] == ["winflux_r0.3", "winflux_r0.2",
                                                "winflux_r0.1"]


def test_rerun_is_byte_identical_modulo_timestamp(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    run_sweep(tiny_spec(a, eps_list=(1e-2, 6e-3), seed=3))
    run_sweep(tiny_spec(b, eps_list=(1e-2, 6e-3), seed=3))
    ra = open(os.path.join(a, "rows.csv")).read().splitlines()
    rb = open(os.path.join(b, "rows.csv")).read().splitlines()
    assert ra[0].startswith("#") and rb[0].startswith("#")
    assert ra[1:] == rb[1:]
    pa = open(os.path.join(a, "probes.csv")).read()
    pb = open(os.path.join(b, "probes.csv")).read()
    assert pa == pb


def test_mesh_cache_reuse(tmp_path):
    cache = str(tmp_path / "cache")
    spec = tiny_spec(str(tmp_path / "out"), cache_dir=cache)
    run_sweep(spec)
    files = os.listdir(cache)
    assert len(files) == 1
    mtime = os.path.getmtime(os.path.join(cache, files[0]))
    run_sweep(tiny_spec(str(tmp_path / "out2"), cache_dir=cache))
    assert os.path.getmtime(os.path.join(cache, files[0])) == mtime


def test_cache_env_var(tmp_path, monkeypatch):
    cache = tmp_path / "envcache"
    monkeypatch.setenv("NECKFLOW_CACHE", str(cache))
    run_sweep(tiny_spec(str(tmp_path / "out")))
    assert len(os.listdir(cache)) == 1


def test_failure_isolation(tmp_path):
    # a vertex cap that only the small-separation mesh exceeds
    spec = tiny_spec(str(tmp_path / "out"), eps_list=(1e-2, 1e-4),
                     mesh_vertex_cap=6000)
    report = run_sweep(spec)
    assert len(report.rows) == 1
    assert len(report.failures) == 1
    assert report.failures[0]["eps"] == 1e-4
    assert "MeshCapacityError" in report.failures[0]["error"]
    assert not report.ok


def test_workers_parallel_path(tmp_path):
    spec = tiny_spec(str(tmp_path / "out"), p_list=(2.0, 3.0), workers=2)
    report = run_sweep(spec)
    assert len(report.rows) == 2
    assert report.ok


class TestComparePrediction:
    def test_exact_synthetic_is_zero_error(self):
        import neckflow.asymptotics as asy
        K = asy.gap_constant([[1.0]], asy.Regime(2.0, 2))
        F = 4.0
        eps = 1e-4
        delta = eps
        dn = asy.blowup_scale(eps, asy.Regime(2.0, 2)) * (K * F) / delta
        rows = [{"p": 2.0, "eps": eps, "ugap": 0.0,
                 "probes": [{"xprime": 0.0, "xn": 0.0, "grad_x": 0.0,
                             "grad_n": dn, "delta": delta}]}]
        fits = {2.0: {"ugap_fit": {"flux_implied": F}}}
        table = compare_prediction(rows, [[1.0]], fits)
        assert table[0]["status"] == "OK"
        assert table[0]["rel_error"] == pytest.approx(0.0, abs=1e-14)

    def test_probe_outside_region_excluded(self):
        rows = [{"p": 2.0, "eps": 1e-2, "ugap": 0.1,
                 "probes": [{"xprime": 0.5, "xn": 0.0, "grad_x": 0.0,
                             "grad_n": 1.0, "delta": 1e-2}]}]
        fits = {2.0: {"ugap_fit": {"flux_implied": 1.0}}}
        table = compare_prediction(rows, [[1.0]], fits)
        assert table[0]["status"] == "EXCLUDED"

    def test_zero_prediction_reports_absolute(self):
        rows = [{"p": 2.0, "eps": 1e-4, "ugap": 0.0,
                 "probes": [{"xprime": 0.0, "xn": 0.0, "grad_x": 0.0,
                             "grad_n": 0.25, "delta": 1e-4}]}]
        fits = {2.0: {"ugap_fit": {"flux_implied": 0.0}}}
        table = compare_prediction(rows, [[1.0]], fits)
        assert table[0]["status"] == "ABS"
        assert table[0]["rel_error"] == pytest.approx(0.25)

    def test_sub_branch_uses_same_eps_gap(self):
        rows = [{"p": 1.3, "eps": 1e-4, "ugap": 0.3,
                 "probes": [{"xprime": 0.0, "xn": 0.0, "grad_x": 0.0,
                             "grad_n": 0.3 / 1e-4, "delta": 1e-4}]}]
        table = compare_prediction(rows, [[1.0]], {1.3: {}})
        assert table[0]["status"] == "OK"
        assert table[0]["rel_error"] == pytest.approx(0.0, abs=1e-14)


class TestCLI:
    def test_oracle_exit_code(self, capsys):
        assert cli_main(["oracle"]) == 0
        out = capsys.readouterr().out
        assert "oracle: ok" in out

    def test_solve_smoke(self, tmp_path, capsys):
        rc = cli_main(["solve", "--p", "2", "--eps", "1e-2",
                       "--target-h", "0.2", "--out", str(tmp_path / "o")])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["p"] == 2.0
        assert abs(payload["U1"] + payload["U2"]) < 1e-8

    def test_sweep_cli_with_config(self, tmp_path, capsys):
        cfg = tmp_path / "geom.cfg"
        cfg.write_text("shape = disc\nscale = 1\nphi = linear_xn\n")
        rc = cli_main(["sweep", "--config", str(cfg), "--p", "2",
                       "--eps", "1e-2,6e-3", "--target-h", "0.18",
                       "--out", str(tmp_path / "out")])
        assert rc == 0
        assert (tmp_path / "out" / "rows.csv").exists()
        assert "blow-up slope" in capsys.readouterr().out
