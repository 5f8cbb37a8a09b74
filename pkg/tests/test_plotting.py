import pytest

from chest_lab.errors import SchemaError
from chest_lab.plotting import emit_plots


def _write(path, text):
    path.write_text(text)
    return path


def test_bias_plot_one_series_per_scenario(tmp_path):
    f = _write(tmp_path / "bias.csv", "scenario,p,trial,rel_error\na,1,0,0.5\na,2,0,0.25\nb,1,0,0.9\nb,2,0,0.1\n")
    ((svg, n),) = emit_plots([f])
    assert n == 2 and svg.exists() and svg.read_text().lstrip().startswith("<?xml")


def test_tradeoff_plot_one_chart_per_s(tmp_path):
    rows = ["S,snr_db,p,method,trial,rel_error,time_s"]
    for S in (2, 4):
        for m in ("joint", "sequential"):
            for snr in ("0.0", "inf"):
                for p in (1, 2):
                    rows.append(f"{S},{snr},{p},{m},0,{0.1 * p},0.01")
    f = _write(tmp_path / "tradeoff.csv", "\n".join(rows) + "\n")
    out = emit_plots([f], tmp_path / "svg")
    assert [(s.name, n) for s, n in out] == [("tradeoff_S2.svg", 4), ("tradeoff_S4.svg", 4)]


def test_mean_files_plot(tmp_path):
    f = _write(tmp_path / "m.csv", "scenario,p,mean_rel_error\na,1,0.5\na,2,0.0\n")
    ((svg, n),) = emit_plots([f])
    assert n == 1 and svg.exists()


def test_empty_data_gives_empty_chart(tmp_path):
    f = _write(tmp_path / "e.csv", "S,snr_db,p,method,trial,rel_error,time_s\n")
    ((svg, n),) = emit_plots([f])
    assert n == 0 and svg.exists()


@pytest.mark.parametrize("text", ["scenario,trial,rel_error\n", "S,snr_db,p,rel_error\n", "a,b\n", ""])
def test_schema_errors(tmp_path, text):
    f = _write(tmp_path / "bad.csv", text)
    with pytest.raises(SchemaError):
        emit_plots([f])
