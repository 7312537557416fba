import csv
import json
import math
import subprocess
import sys

import pytest

from pronylab.cli import analysis_selftest, config_hash, main

R2_SMALL = {"regime": "R2", "grid": [0.5, 1.0, 1.5, 2.0], "n1": 4, "eta": 0.5,
            "epsilon": "0.1", "prec_bits": 1024}
FREE_PDE = {"potential": {"fourier": [0]}, "x0": "0.45", "initial": {"sine": [1, 0, 0.5]},
            "delta": "0.01", "t_final": "0.1", "n_x": 40, "prec_bits": 256, "n_eigs": 4}


def write(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


def rows(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert len(config_hash({})) == 16


def test_sweep_writes_rows_and_slopes(tmp_path):
    cfg = write(tmp_path / "s.json", R2_SMALL)
    assert main(["sweep", cfg, "--out", str(tmp_path / "o")]) == 0
    table = rows(tmp_path / "o" / "sweep_R2.csv")
    assert len(table) == 4 * 4  # grid points x (analytic, empirical) x (lambda, y)
    slopes = json.loads((tmp_path / "o" / "slopes_R2.json").read_text())
    assert len(slopes["slopes"]) == 4
    assert all(v["slope"] == pytest.approx(1, abs=0.2) for v in slopes["slopes"].values())


def test_sweep_decay_list_writes_one_sweep_per_power(tmp_path):
    cfg = write(tmp_path / "s.json", {**R2_SMALL, "power_p_list": [1, 2, 3]})
    assert main(["sweep", cfg, "--out", str(tmp_path / "o")]) == 0
    names = sorted(p.name for p in (tmp_path / "o").glob("sweep_*.csv"))
    assert names == ["sweep_R2_p1.csv", "sweep_R2_p2.csv", "sweep_R2_p3.csv"]


def test_malformed_json_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{regime: R2", encoding="utf-8")
    assert main(["sweep", str(bad), "--out", str(tmp_path)]) == 2


def test_schema_violation_exits_2(tmp_path):
    cfg = write(tmp_path / "s.json", {"regime": "R9"})
    assert main(["sweep", cfg, "--out", str(tmp_path)]) == 2


def test_pde_gen_sample_count_and_analytic_trace(tmp_path):
    cfg = write(tmp_path / "p.json", FREE_PDE)
    out = tmp_path / "o"
    assert main(["pde-gen", cfg, "--out", str(out)]) == 0
    table = rows(out / "trace.csv")
    assert len(table) == 2 * math.floor(0.1 / (2 * 0.01))
    for r in table:
        t = float(r["t"])
        want = sum(b * math.exp(-(k * math.pi) ** 2 * t) * math.sin(k * math.pi * 0.45)
                   for k, b in ((1, 1), (3, 0.5)))
        assert abs(float(r["y"]) - want) <= 1e-8
    meta = json.loads((out / "meta.json").read_text())
    assert meta["source"] == "pde-point"
    assert float(meta["true_lambdas"][0]) == pytest.approx(math.pi ** 2, rel=1e-12)


def test_pde_gen_rejects_nonpositive_horizon(tmp_path):
    cfg = write(tmp_path / "p.json", {**FREE_PDE, "t_final": 0})
    assert main(["pde-gen", cfg, "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o" / "trace.csv").exists()


def test_outputs_are_stamped_and_deterministic(tmp_path):
    cfg = write(tmp_path / "p.json", FREE_PDE)
    for name in ("a", "b"):
        assert main(["pde-gen", cfg, "--out", str(tmp_path / name)]) == 0
    for f in ("trace.csv", "meta.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert {"prec_bits", "seed", "config_hash"} <= meta.keys()
    assert all(r["config_hash"] == meta["config_hash"] for r in rows(tmp_path / "a" / "trace.csv"))


def test_recover_and_fit_on_generated_trace(tmp_path):
    out = tmp_path / "o"
    main(["pde-gen", write(tmp_path / "p.json", FREE_PDE), "--out", str(out), "--full-precision"])
    rec = write(tmp_path / "r.json", {"trace": str(out / "trace.csv"), "n_prony": 3, "M": 2})
    assert main(["recover", rec, "--out", str(tmp_path / "r")]) == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert {"prec_bits", "seed", "config_hash"} <= report.keys()
    assert report["metrics"]["n_recovered"] == 2
    assert max(abs(c) for c in report["recovered_coeffs"]) <= 1e-6

    assert main(["recover", rec, "--out", str(tmp_path / "c"), "--sweep-m", "2,3"]) == 0
    assert [r["m"] for r in rows(tmp_path / "c" / "convergence.csv")] == ["2", "3"]

    fit = tmp_path / "fit.json"
    assert main(["fit", str(out / "trace.csv"), "--n-prony", "2", "--solver", "classical",
                 "--out", str(fit)]) == 0
    assert "config_hash" in json.loads(fit.read_text())


def test_recover_missing_trace_exits_2(tmp_path):
    rec = write(tmp_path / "r.json", {"trace": str(tmp_path / "nope.csv"), "n_prony": 3, "M": 2})
    assert main(["recover", rec, "--out", str(tmp_path / "r")]) == 2


def test_analysis_selftest_passes():
    assert all(ok for _, ok in analysis_selftest())


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pronylab", "analysis-selftest"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "FAIL" not in proc.stdout
