import json
import math
import struct

import pytest

from nhsense import cli

FIG3_MIN = "[run]\ntask = fig3\noutput = fig3.csv\n"


def test_minimal_fig3_defaults():
    cfg = cli.parse_config(FIG3_MIN)
    assert cfg.task == "fig3" and cfg.output == "fig3.csv" and cfg.kappa == 1.0
    g = cfg.grid
    assert g["eps_over_kappa"] == (1e-8,)
    assert g["n_tot"] == (5e9,)
    assert g["A"] == (0.2,)
    assert g["J_over_kappa"] == (10.0, 100.0, 1000.0)
    assert g["N"] == tuple(range(1, 52, 2))


def test_fig4_defaults():
    g = cli.parse_config("[run]\ntask = fig4\n").grid
    assert (g["A"], g["eps_over_kappa"], g["n_tot"]) == ((0.05,), (1e-7,), (5e9,))


def test_common_defaults():
    g = cli.parse_config("[run]\ntask = snr-linear\n").grid
    assert g["n_th"] == (0.0,) and g["theta"] == (0.0,) and g["phi"] == (math.pi / 2,)
    assert all(n % 2 for n in g["N"])


def test_unstable_w_delta():
    with pytest.raises(cli.ConfigError, match=r"snr-linear\.w.*stability"):
        cli.parse_config("[run]\ntask = snr-linear\n[snr-linear]\nw = 1\ndelta = 2\n")


def test_w_delta_grid():
    cfg = cli.parse_config("[run]\ntask = qfi-scan\n[qfi-scan]\nw = 5\ndelta = 3\nN = 3\n")
    assert "A" not in cfg.grid and cfg.grid["w"] == (5.0,)
    ds = cli.run_sweep(cfg, threads=1)
    assert ds.column("status") == ["ok"]
    with pytest.raises(cli.ConfigError, match="together"):
        cli.parse_config("[run]\ntask = qfi-scan\n[qfi-scan]\nw = 5\n")
    with pytest.raises(cli.ConfigError, match="one pair"):
        cli.parse_config("[run]\ntask = qfi-scan\n[qfi-scan]\nw = 5\ndelta = 1\nA = 0.1\n")


@pytest.mark.parametrize(
    "text,where",
    [
        ("[run]\ntask = fig3\n[fig3]\nfoo = 1\n", "fig3.foo"),
        ("[run]\ntask = fig3\nbar = 1\n", "run.bar"),
        ("[run]\ntask = fig3\n[fig4]\nN = 3\n", "fig4"),
        ("[run]\ntask = fig3\n[tolerances]\nzzz = 1\n", "tolerances.zzz"),
        ("[run]\ntask = snr-linear\n[snr-linear]\nn_th = -1\n", "snr-linear.n_th"),
        ("[run]\ntask = snr-linear\nkappa = -1\n", "run.kappa"),
        ("[run]\ntask = fig3\n[fig3]\nN = 4\n", "fig3.N"),
        ("[run]\ntask = fig3\n[fig3]\nN = 2.5\n", "fig3.N"),
        ("[run]\ntask = fig3\n[fig3]\nA = abc\n", "fig3.A"),
        ("[run]\ntask = fig3\n[fig3]\nA = 0.1:0.3\n", "fig3.A"),
        ("[run]\ntask = nope\n", "run.task"),
        ("[run]\n", "run.task"),
        ("garbage without section", "malformed"),
    ],
)
def test_config_errors_name_the_key(text, where):
    with pytest.raises(cli.ConfigError, match=where.replace(".", r"\.")):
        cli.parse_config(text)


def test_task_mismatch():
    with pytest.raises(cli.ConfigError, match="run.task"):
        cli.parse_config(FIG3_MIN, task="fig4")
    assert cli.parse_config("", task="fig4").task == "fig4"


def test_even_allowed_when_requested():
    cfg = cli.parse_config("[run]\ntask = qfi-scan\nodd_only = false\n[qfi-scan]\nN = 2:4\n")
    assert cfg.grid["N"] == (2, 3, 4)


def test_ranges_and_lists():
    cfg = cli.parse_config("[run]\ntask = fig4\n[fig4]\nN = 1:9:4\nA = 0.1, 0.2\n")
    assert cfg.grid["N"] == (1, 5, 9)
    assert cfg.grid["A"] == (0.1, 0.2)
    assert len(cfg.points()) == 6


def test_empty_dataset_header_only(tmp_path):
    ds = cli.Dataset(columns=("a", "b"), rows=())
    cli.emit_csv(ds, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "a,b\n"


def test_emit_io_error_has_path(tmp_path):
    bad = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        cli.emit_csv(cli.Dataset(("a",), ()), bad)


def test_format_value():
    assert cli.format_value(0.1) == "0.10000000000000001"
    assert cli.format_value(3) == "3"
    assert cli.format_value(True) == "true"
    assert cli.format_value(math.nan) == "nan"


def _bits(x):
    return struct.pack("<d", float(x))


def test_fig3_roundtrip_bit_equal(tmp_path):
    cfg = cli.parse_config("[run]\ntask = fig3\n[fig3]\nN = 1:9:2\nJ_over_kappa = 10, 1000\n")
    ds = cli.run_sweep(cfg, threads=2)
    path = tmp_path / "f3.csv"
    cli.emit_csv(ds, path, cfg)
    back = cli.read_csv(path)
    assert back.columns == ds.columns == (
        "N", "J_over_kappa", "kappa_tau_M_numeric", "kappa_tau_M_analytic", "kappa_t_rt", "kappa_tau_star", "status"
    )
    for r0, r1 in zip(ds.rows, back.rows):
        for a, b in zip(r0, r1):
            if isinstance(a, float):
                assert _bits(a) == _bits(b)
            else:
                assert a == b
    meta = json.loads(cli.sidecar_path(path).read_text())
    assert meta["config"]["grid"]["eps_over_kappa"] == [1e-8]
    assert meta["config"]["grid"]["n_tot"] == [5e9]


def test_fig4_columns():
    cfg = cli.parse_config("[run]\ntask = fig4\n[fig4]\nN = 1:5:2\n")
    ds = cli.run_sweep(cfg, threads=1)
    assert ds.columns == ("N", "snr_ratio", "snr_linear_prediction", "N_star", "status")
    assert ds.column("N") == [1, 3, 5]


def test_row_level_error_marker(monkeypatch):
    def flaky(pt, kappa):
        if pt["N"] == 3:
            raise cli.NumericalError("bracketing failed")
        return {name: 1.0 for name in cli._OUTPUTS["fig4"]}

    monkeypatch.setitem(cli._RUNNERS, "fig4", flaky)
    ds = cli.run_sweep(cli.parse_config("[run]\ntask = fig4\n[fig4]\nN = 1:5:2\n"), threads=3)
    assert ds.column("status") == ["ok", "error: NumericalError: bracketing failed", "ok"]
    assert math.isnan(ds.rows[1][1])
    assert ds.n_errors == 1


def test_threads_env_cap(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    assert cli.resolve_threads(8) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "x")
    with pytest.raises(cli.ConfigError):
        cli.resolve_threads(4)
    monkeypatch.delenv(cli.THREADS_ENV)
    assert cli.resolve_threads(3) == 3


def test_parallel_equals_serial():
    cfg = cli.parse_config("[run]\ntask = nonpert-scan\n[nonpert-scan]\nN = 1:15:2\n")
    assert cli.run_sweep(cfg, threads=1) == cli.run_sweep(cfg, threads=6)


def test_verify_small_suite_passes():
    cfg = cli.parse_config("[run]\ntask = verify\n[verify]\nN = 1:7:2\nn_omega = 5\n")
    ds = cli.run_sweep(cfg, threads=4)
    assert ds.column("check") == list(cli.VERIFY_CHECKS)
    assert all(ds.column("passed")), ds.rows


def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "g.ini"
    good.write_text("[run]\ntask = fig4\n[fig4]\nN = 1:5:2\n")
    out = tmp_path / "o.csv"
    assert cli.main(["fig4", "--config", str(good), "--out", str(out), "--threads", "2"]) == 0
    assert out.read_text().startswith("N,snr_ratio,")
    assert cli.sidecar_path(out).exists()

    bad = tmp_path / "b.ini"
    bad.write_text("[run]\ntask = snr-linear\n[snr-linear]\nw = 1\ndelta = 2\n")
    assert cli.main(["snr-linear", "--config", str(bad), "--out", str(out)]) == 2
    assert "snr-linear.w" in capsys.readouterr().err

    assert cli.main(["fig4", "--config", str(tmp_path / "nope.ini")]) == 2
    assert cli.main(["fig4", "--config", str(good), "--threads", "0"]) == 2
    assert cli.main(["fig4", "--config", str(good), "--out", str(tmp_path / "no" / "x.csv")]) == 2


def test_main_numerical_failure_exit(tmp_path, monkeypatch):
    def broken(pt, kappa):
        raise cli.PoleError("on a pole")

    monkeypatch.setitem(cli._RUNNERS, "fig4", broken)
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\ntask = fig4\n[fig4]\nN = 1\n")
    out = tmp_path / "o.csv"
    assert cli.main(["fig4", "--config", str(cfg), "--out", str(out)]) == 3
    assert "error: PoleError" in out.read_text()
