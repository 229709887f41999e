import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freesurf import cli, lab
from freesurf.config import ConfigError, RunConfig, dump_config, parse_config
from freesurf.dynamics import read_checkpoint

SMALL = """
grid.ny = 16
grid.nz = 12
grid.H = 2.0
physics.T = 0.1
physics.dt = 0.025
monitor.every = 2
"""


def small_cfg(extra="", **kw) -> RunConfig:
    cfg = parse_config(SMALL + extra)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---- parsing --------------------------------------------------------------------

def test_parse_overrides_and_comments():
    cfg = parse_config("# header\ngrid.ny = 32  # trailing\nphysics.eps = 0.1, 0.01, 0\nmonitor.checkpoint = false\n")
    assert cfg.grid.ny == 32
    assert cfg.physics.eps == (0.1, 0.01, 0.0)
    assert cfg.monitor.checkpoint is False
    assert cfg.grid.nz == RunConfig().grid.nz


def test_dump_round_trip():
    cfg = parse_config(SMALL + "physics.eps = 0.3, 0.001, 0\ninitial.velocity = linear\nseed = 7\n")
    again = parse_config(dump_config(cfg))
    assert again == cfg


@given(st.lists(st.floats(1e-8, 10.0), min_size=1, max_size=5, unique=True))
def test_decreasing_eps_lists_round_trip(vals):
    eps = tuple(sorted(vals, reverse=True)) + (0.0,)
    cfg = RunConfig()
    cfg.physics.eps = eps
    assert parse_config(dump_config(cfg.validate())).physics.eps == eps


@pytest.mark.parametrize("text", [
    "grid.nx = 4",
    "nosuch.key = 1",
    "grid = 3",
    "grid.ny = many",
    "just a line",
    "physics.eps = 0.01, 0.1",
    "physics.eps = 0.1, 0.1",
    "physics.eps = -0.1",
    "physics.eps = 0, 0",
    "physics.T = 0",
    "initial.velocity = swirl",
    "monitor.window = 0.8, 0.5",
    "monitor.checkpoint = maybe",
])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


# ---- CLI ------------------------------------------------------------------------

def test_cli_exit_2_on_bad_config(tmp_path, capsys):
    p = write(tmp_path, "grid.unknown = 1\n")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "unknown config key" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["run", "--eps", "0.1,abc", "--out", str(tmp_path / "o")]) == 2


def test_cli_sweep_without_reference_is_config_error(tmp_path):
    p = write(tmp_path, SMALL + "physics.eps = 0.1\n")
    assert cli.main(["sweep", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_cli_run_writes_outputs(tmp_path, capsys):
    p = write(tmp_path, SMALL)
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(p), "--out", str(out), "--eps", "0.05"]) == 0
    assert "status=ok" in capsys.readouterr().out
    assert (out / "config.txt").exists()
    text = (out / "diagnostics_eps0.05.csv").read_text().splitlines()
    assert text[0].split(",") == list(lab.CSV_COLUMNS)
    assert len(text) == 1 + 3  # t = 0, 0.05, 0.1
    state, eps = read_checkpoint(out / "final_eps0.05.chk")
    assert eps == 0.05 and math.isclose(state.t, 0.1)
    assert parse_config((out / "config.txt").read_text()).physics.eps == (0.05,)


def test_cli_kernels_search_failure_exit_4(tmp_path, capsys):
    p = write(tmp_path, "kernels.sym_c0 = 0\nkernels.heat_n = 3\nkernels.sym_n = 20\n")
    assert cli.main(["kernels", "--config", str(p), "--out", str(tmp_path / "o")]) == 4
    out = capsys.readouterr().out
    assert "FAIL symmetrizer: search failure" in out
    assert "PASS heat" in out


def test_cli_kernels_domain_error_exit_4(tmp_path, capsys):
    p = write(tmp_path, "kernels.heat_gamma_min = 0.5\nkernels.heat_n = 3\nkernels.sym_n = 20\n")
    assert cli.main(["kernels", "--config", str(p), "--out", str(tmp_path / "o")]) == 4
    assert "FAIL heat: KernelDomainError" in capsys.readouterr().out


def test_cli_norms_initial_and_checkpoint(tmp_path, capsys):
    p = write(tmp_path, SMALL)
    out = tmp_path / "o"
    assert cli.main(["norms", "--config", str(p), "--out", str(out)]) == 0
    rows = (out / "norms.csv").read_text().splitlines()
    assert len(rows) == 1 + 2  # header plus two velocity components
    # at rest every volume norm vanishes
    head = rows[0].split(",")
    vals = dict(zip(head, rows[1].split(",")))
    assert float(vals[head[1]]) == 0.0
    capsys.readouterr()
    assert cli.main(["run", "--config", str(p), "--out", str(out), "--eps", "0.1"]) == 0
    assert cli.main(["norms", "--config", str(p), "--out", str(out),
                     "--checkpoint", str(out / "final_eps0.1.chk")]) == 0
    bad = write(tmp_path, "garbage", "bad.chk")
    assert cli.main(["norms", "--out", str(out), "--checkpoint", str(bad)]) == 2


# ---- runs -----------------------------------------------------------------------

def test_rest_state_stays_at_rest():
    cfg = small_cfg()
    cfg.initial.a = 0.0
    res = lab.run_single(cfg, 0.1)
    assert res.ok
    for col in ("Qm_total", "Vm_norm", "h_m", "Sn_m2", "energy_residual", "div_residual"):
        c = res.monitor.column(col)
        assert np.all(c == c[0]), col
    assert np.all(res.monitor.column("taylor_min") == cfg.physics.g)
    assert np.abs(res.state.v).max() < 1e-14


def test_repeat_run_is_byte_identical(tmp_path):
    cfg = small_cfg("initial.noise = 0.3\nseed = 11\n")
    for d in ("a", "b"):
        lab.run_single(cfg, 0.02, out_dir=tmp_path / d)
    for name in ("diagnostics_eps0.02.csv", "final_eps0.02.chk"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_noisy_initial_data():
    a = lab.initial_state(small_cfg("initial.noise = 0.3\nseed = 1\n"))
    b = lab.initial_state(small_cfg("initial.noise = 0.3\nseed = 2\n"))
    assert not np.array_equal(a.h, b.h)


def test_breakdown_is_isolated(monkeypatch, tmp_path):
    """One member blowing up leaves the other members and the report intact."""
    real = lab.run_single

    def flaky(cfg, eps, **kw):
        if eps == 0.01:
            res = real(cfg, eps, **kw)
            res.status, res.error = "breakdown", "step 3: NumericalBlowup: injected"
            return res
        return real(cfg, eps, **kw)

    monkeypatch.setattr(lab, "run_single", flaky)
    cfg = small_cfg("physics.eps = 0.1, 0.01, 0\n")
    rep = lab.run_sweep(cfg, out_dir=tmp_path)
    assert rep.partial
    by = {r["eps"]: r for r in rep.rows}
    assert by[0.1]["status"] == "ok" and math.isfinite(by[0.1]["l2_distance"])
    assert by[0.01]["status"] == "breakdown" and math.isnan(by[0.01]["l2_distance"])
    assert (tmp_path / "sweep_report.csv").exists()


def test_cli_run_reports_breakdown_exit_3(monkeypatch, tmp_path):
    from freesurf.dynamics import NumericalBlowup, Stepper

    def boom(self, state, dt):
        raise NumericalBlowup("injected")

    monkeypatch.setattr(Stepper, "step", boom)
    p = write(tmp_path, SMALL)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o"), "--eps", "0.1"]) == 3
    assert (tmp_path / "o" / "diagnostics_eps0.1.csv").exists()


def test_zero_crossings_and_linear_period():
    t = np.linspace(0, 10, 2001)
    cr = lab.zero_crossings(t, np.cos(2.0 * t))
    assert np.allclose(cr, (np.pi / 2 + np.pi * np.arange(cr.size)) / 2, atol=1e-5)
    assert lab.linear_period(2, 1e3) == pytest.approx(2 * np.pi / np.sqrt(2))
    assert lab.linear_period(1, 1e-4) == pytest.approx(2 * np.pi / 1e-2, rel=1e-6)


def test_short_dispersion_run_tracks_mode():
    cfg = small_cfg("initial.k = 2\nphysics.eps = 0\nphysics.T = 2.5\nphysics.dt = 0.05\n")
    r = lab.run_dispersion(cfg)
    assert r.amplitude[0] == pytest.approx(cfg.initial.a)
    assert r.crossings.size == 1
    assert r.crossings[0] == pytest.approx(r.predicted / 4, rel=0.02)
