import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from glx import cli
from glx.errors import CertificateError, ConfigError, TruncationError
from glx.io import cached_green, config_hash, merge_csv, read_csv, write_csv
from glx.lattice import BoxDomain
from glx.models import ModelSpec
from glx.green import finite_green
from glx.runner import RunConfig, emit_plotdata, run


def _cfg(tmp_path, name="c.json", **data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir()) if p.name != "manifest.json"}


# --- io ----------------------------------------------------------------------

def test_hash_is_canonical():
    assert config_hash({"a": 1, "b": [1.0, 2]}) == config_hash({"b": [1.0, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 16


def test_merge_refuses_mixed_hashes(tmp_path):
    a = write_csv(tmp_path / "a.csv", ["x"], [[1]], "aaaa")
    b = write_csv(tmp_path / "b.csv", ["x"], [[2]], "aaaa")
    c = write_csv(tmp_path / "c.csv", ["x"], [[3]], "bbbb")
    d = write_csv(tmp_path / "d.csv", ["y"], [[3]], "aaaa")
    h, header, rows = read_csv(merge_csv([a, b], tmp_path / "m.csv"))
    assert h == "aaaa" and header == ["x"] and rows == [["1"], ["2"]]
    with pytest.raises(ConfigError):
        merge_csv([a, c], tmp_path / "bad.csv")
    with pytest.raises(ConfigError):
        merge_csv([a, d], tmp_path / "bad.csv")


def test_green_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("GLX_CACHE_DIR", str(tmp_path / "cache"))
    m, dom = ModelSpec.massive(2, 0.3), BoxDomain(2, 5)
    first = cached_green(m, dom)
    assert len(list((tmp_path / "cache").glob("green_*.npy"))) == 1
    again = cached_green(m, dom)
    assert np.array_equal(first.matrix, again.matrix)
    assert np.array_equal(again.matrix, finite_green(m, dom).matrix)


# --- config ------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError, match="membrane requires d>=5"):
        RunConfig.from_dict({"model": {"kind": "membrane", "d": 3}})
    with pytest.raises(ConfigError, match="unknown configuration key"):
        RunConfig.from_dict({"replicate": 10})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"replicates": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"experiment": "pointprocess", "model": {"kind": "massive", "d": 1, "theta": 0.5}})
    a = RunConfig.from_dict({"workers": 1, "out": "x"})
    b = RunConfig.from_dict({"workers": 4, "out": "y"})
    assert a.hash == b.hash != RunConfig.from_dict({"seed": 1}).hash


def test_emit_plotdata_series(tmp_path):
    _, hd, rows = read_csv(emit_plotdata({"z": np.arange(5.0), "limit": lambda z: z / 4}, "gumbel",
                                         tmp_path / "g.csv", "h", points=7))
    assert hd == ["x", "y", "series"] and {r[2] for r in rows} == {"empirical", "limit"}
    _, _, rows = read_csv(emit_plotdata([{"N": 10, "b1": 1, "b2": 2, "b3": 3}], "bterms",
                                        tmp_path / "b.csv", "h"))
    assert [r[2] for r in rows] == ["b1", "b2", "b3"]


# --- cli ---------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    bad = _cfg(tmp_path, model={"kind": "membrane", "d": 2})
    assert cli.main(["covariance", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert "membrane requires d>=5" in capsys.readouterr().err
    assert cli.main(["covariance", "--config", str(tmp_path / "missing.json")]) == 2
    ok = _cfg(tmp_path, "ok.json", model={"kind": "massive", "d": 1, "theta": 0.5})

    def boom(exc):
        def f(cfg):
            raise exc
        return f

    monkeypatch.setattr(cli, "run", boom(CertificateError("tail certificate failed")))
    assert cli.main(["audit", "--config", ok]) == 3
    monkeypatch.setattr(cli, "run", boom(TruncationError("series")))
    assert cli.main(["audit", "--config", ok]) == 4


def test_cli_entry_point(tmp_path):
    cfg = _cfg(tmp_path, model={"kind": "massive", "d": 1, "theta": 0.5}, domain={"n": 6})
    out = subprocess.run([sys.executable, "-m", "glx.cli", "covariance", "--config", cfg,
                          "--out", str(tmp_path / "o")], capture_output=True, text=True, check=True)
    msg = json.loads(out.stdout)
    assert "covariance_n6.csv" in msg["files"]
    h, hd, rows = read_csv(tmp_path / "o" / "covariance_n6.csv")
    assert h == msg["config_hash"] and hd == ["row_site_index", "col_site_index", "value"]
    assert len(rows) == 36
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["norm"] == "euclidean" and man["config_hash"] == h


SMALL = {
    "sample": {"model": {"kind": "massive", "d": 2, "theta": 0.3}, "domain": {"n": 4}, "replicates": 600},
    "maxima": {"model": {"kind": "massive", "d": 2, "theta": 0.3}, "domain": {"sizes": [8, 12]},
               "replicates": 1100},
    "steinchen": {"model": {"kind": "massive", "d": 2, "theta": 0.3}, "domain": {"n": 10},
                  "replicates": 1100},
    "pointprocess": {"model": {"kind": "massive", "d": 2, "theta": 0.3}, "domain": {"n": 12},
                     "replicates": 1100, "options": {"mode": "bulk"}},
}


@pytest.mark.parametrize("experiment", sorted(SMALL))
def test_byte_identical_across_runs_and_workers(tmp_path, experiment):
    cfg = _cfg(tmp_path, **SMALL[experiment])
    dirs = []
    for k, w in enumerate((1, 4, 1)):
        d = tmp_path / f"o{k}"
        assert cli.main([experiment, "--config", cfg, "--seed", "7", "--workers", str(w),
                         "--out", str(d)]) == 0
        dirs.append(_outputs(d))
    assert dirs[0] == dirs[1] == dirs[2]
    d = tmp_path / "other"
    cli.main([experiment, "--config", cfg, "--seed", "8", "--out", str(d)])
    assert _outputs(d) != dirs[0]


def test_steinchen_lambda_ordering(tmp_path):
    man = run(RunConfig.from_dict({"experiment": "steinchen", "z_grid": [-2.0, 0.0, 2.0],
                                   "model": {"kind": "massive", "d": 2, "theta": 0.3},
                                   "domain": {"n": 10}, "options": {"monte_carlo": False}}),
              tmp_path)
    reps = json.loads((tmp_path / "steinchen.json").read_text())["reports"]
    lam = [r["lambda"] for r in reps]
    assert [r["z"] for r in reps] == [-2.0, 0.0, 2.0]
    assert lam[0] > lam[1] > lam[2]
    assert "plot_bterms_z0.csv" in man.files


def test_audit_run_massive_d1(tmp_path):
    man = run(RunConfig.from_dict({"experiment": "audit",
                                   "model": {"kind": "massive", "d": 1, "theta": 0.5},
                                   "domain": {"sizes": [32, 64, 128]}}), tmp_path)
    _, hd, rows = read_csv(tmp_path / "audit_a2.csv")
    below = [float(r[hd.index("below")]) for r in rows]
    assert len(rows) == 3 and below[0] > below[1] > below[2]
    _, hd, rows = read_csv(tmp_path / "audit_a3.csv")
    sup = [float(r[hd.index("sup_var_mu")]) for r in rows]
    # log N = 3.47, 4.16, 4.85: the last two share the integer ball radius 4
    assert sup[0] > sup[1] and sup[1] == pytest.approx(sup[2], rel=1e-12)
    assert man.flags["A2"] == "pass" and man.flags["A1"] == "pass"
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert 0 < cert["kappa"] <= 1
