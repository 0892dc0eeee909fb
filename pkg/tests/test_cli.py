import csv
import io
import json

import pytest

from sunlease import forecast as fc
from sunlease.cli import main
from sunlease.economics import builtin_catalog

PVGIS = (
    "Latitude (decimal degrees):\t41.530\n"
    "Longitude (decimal degrees):\t2.230\n"
    "\n"
    "time,G(i),H_sun,T2m,WS10m,Int\n"
    "20160101:1110,500.0,20.1,9.5,1.2,0.0\n"
    "20160101:1210,700.0,22.3,10.1,1.4,0.0\n"
    "20160102:1110,800.0,20.3,8.1,2.0,0.0\n"
    "\n"
    "G(i): Global irradiance on the inclined plane (W/m2)\n"
)


def cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def table(text):
    rows = {}
    for line in text.splitlines():
        key, _, value = line.rpartition("  ")
        rows[key.strip()] = value.strip()
    return rows


def test_viability_worked_example():
    code, text = cli("viability", "--eta-c", "20", "--price", "0.02", "--feed-in", "0.05",
                     "--psh", "1670.7", "--eta-sys", "0.7739")
    assert code == 0
    t = table(text)
    assert t["A [EUR/yr]"] == "452.53"
    assert t["breakeven alpha"] == "0.125"
    assert t["R_N [EUR/kWh]"] == "0.35"


def test_viability_catalog_instance():
    code, text = cli("viability", "--instance", "t2.medium", "--alpha", "0.5", "--fit-tariff", "0.05",
                     "--psh", "1670.7", "--eta-sys", "0.7739")
    assert code == 0
    assert table(text)["A [EUR/yr]"] == "551.73"


def test_viability_without_site_has_no_payback():
    code, text = cli("viability", "--eta-c", "10", "--price", "0.02")
    assert code == 0
    t = table(text)
    assert t["breakeven alpha"] == "0.25"
    assert "A [EUR/yr]" not in t


@pytest.mark.parametrize(
    "argv",
    [
        ("viability", "--instance", "m9.huge"),
        ("viability", "--eta-c", "20"),
        ("viability", "--eta-c", "20", "--price", "0.02", "--alpha", "1.5"),
        ("viability", "--eta-c", "-1", "--price", "0.02"),
        ("viability", "--eta-c", "0", "--price", "0.02"),
        ("viability", "--grid", "payback"),
    ],
)
def test_viability_domain_errors_exit_2(argv):
    assert cli(*argv)[0] == 2


def test_viability_bad_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli("viability", "--alphas", "a,b")
    assert exc.value.code == 2


def test_revenue_grid_csv():
    code, text = cli("viability", "--grid", "revenue", "--alphas", "0.5,1", "--p-avg", "50", "--prices", "0.02")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 2
    assert float(rows[1]["r_n"]) == pytest.approx(0.35)


def test_payback_grid_catalog():
    code, text = cli("viability", "--grid", "payback", "--alphas", "1", "--psh", "1670.7", "--eta-sys", "0.7739")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == len(builtin_catalog())
    assert rows[0]["instance"] == builtin_catalog()[0].name


def test_psh_command(tmp_path):
    src = tmp_path / "pvgis.csv"
    src.write_text(PVGIS)
    trace = tmp_path / "trace.csv"
    code, text = cli("psh", "--input", str(src), "--period", "day", "--trace-out", str(trace))
    assert code == 0
    lines = text.splitlines()
    assert lines[1].split()[:2] == ["01-01", "1.2"]
    assert lines[2].split()[:2] == ["01-02", "0.8"]
    assert trace.read_text().splitlines() == [
        "timestamp,poa_wm2",
        "2016-01-01T11:00:00Z,500.0",
        "2016-01-01T12:00:00Z,700.0",
        "2016-01-02T11:00:00Z,800.0",
    ]


def test_psh_errors(tmp_path):
    assert cli("psh", "--input", str(tmp_path / "missing.csv"))[0] == 3
    bad = tmp_path / "bad.csv"
    bad.write_text(PVGIS.replace("700.0", "x"))
    assert cli("psh", "--input", str(bad))[0] == 3


def test_forecast_train_roundtrip(tmp_path):
    path = tmp_path / "m.json"
    code, text = cli("forecast-train", "--synthetic", "5", "--n", "200", "--kind", "ridge",
                     "--lambda", "0.5", "--out", str(path))
    assert code == 0 and "ridge" in text
    model = fc.loads(path.read_text())
    assert model.kind == "ridge"
    assert json.loads(path.read_text())["hyperparameters"]["lambda"] == 0.5


def test_forecast_train_from_csv(tmp_path, small_set):
    data = tmp_path / "d.csv"
    data.write_text(small_set.to_csv())
    code, text = cli("forecast-train", "--data", str(data), "--kind", "ols")
    assert code == 0
    assert fc.loads(text).kind == "ols"


def test_forecast_eval_table():
    code, text = cli("forecast-eval", "--synthetic", "7", "--n", "400", "--kind", "naive,ols")
    assert code == 0
    assert "naive" in text and "ols" in text
    assert "svr" not in text


@pytest.mark.parametrize(
    "argv,code",
    [
        (("forecast-eval", "--synthetic", "7", "--n", "200", "--split", "1.0"), 2),
        (("forecast-train", "--synthetic", "7", "--n", "5", "--kind", "ols"), 2),
        (("forecast-train", "--synthetic", "7", "--n", "100", "--kind", "lasso", "--max-iter", "1", "--lambda", "1e-6"), 4),
        (("forecast-train", "--synthetic", "7", "--n", "100", "--kind", "ridge", "--lambda", "-1"), 2),
    ],
)
def test_forecast_error_codes(argv, code):
    assert cli(*argv)[0] == code


def test_too_few_rows_for_linear_fit(tmp_path, small_set):
    data = tmp_path / "d.csv"
    data.write_text("".join(small_set.to_csv().splitlines(keepends=True)[:6]))
    assert cli("forecast-train", "--data", str(data), "--kind", "ols")[0] == 2


def test_forecast_bad_data_file(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("not,a,training,set\n1,2,3,4\n")
    assert cli("forecast-train", "--data", str(data), "--kind", "ols")[0] == 3


def test_simulate_command(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text(
        "[plant]\nlatitude = 41.53\nlongitude = 2.23\np_mpp = 2.0\n"
        '[instances]\nname = "custom"\neta_c = 20.0\nv_i = 0.02\ncluster_size = 40\n'
        "[sim]\nhorizon = 48\nseed = 3\n"
    )
    code, text = cli("simulate", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert code == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["slots"] == 48
    assert f"{report['advantage_eur']:.2f}" in text
    assert (tmp_path / "out" / "ledger.csv").read_text().count("\n") == 49


def test_simulate_config_error(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[plant]\nlatitude = 41.53\nlongitude = 2.23\n")
    assert cli("simulate", "--config", str(cfg))[0] == 5
    assert cli("simulate", "--config", str(tmp_path / "nope.toml"))[0] == 5


def test_catalog(capsys):
    code, text = cli("catalog", "--csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["name"] for r in rows] == [i.name for i in builtin_catalog()]
    assert main(["catalog"]) == 0
    assert "t2.medium" in capsys.readouterr().out


def test_missing_subcommand():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
