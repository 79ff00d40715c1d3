import csv

import numpy as np
import pytest

from condrisk import cli
from condrisk.errors import ConfigError, DuplicateLocation, ParseError, TooFewPoints


def write_csv(path, rows, header="x1,x2,y"):
    path.write_text(header + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return str(path)


@pytest.fixture(scope="module")
def field_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    out = d / "field.csv"
    assert cli.main(["simulate", "--scenario", "table1-15x15", "--seed", "3",
                     "--output", str(out), "--targets", str(d / "targets.csv")]) == 0
    return out


def test_ingest_small_file(tmp_path):
    p = write_csv(tmp_path / "a.csv", [(0, 0, 1), (1, 0, 2), (0, 1, 3)])
    assert cli.ingest_csv(p, allow_small=True).n == 3
    with pytest.raises(TooFewPoints):
        cli.ingest_csv(p)


def test_ingest_nan_names_line(tmp_path):
    p = write_csv(tmp_path / "a.csv", [(0, 0, 1), (1, 0, "NaN")])
    with pytest.raises(ParseError, match="line 3"):
        cli.ingest_csv(p, allow_small=True)


def test_ingest_errors(tmp_path):
    with pytest.raises(ParseError, match="line 1"):
        cli.ingest_csv(write_csv(tmp_path / "h.csv", [(0, 0, 1)], header="a,b,c"))
    with pytest.raises(ParseError, match="line 2"):
        cli.ingest_csv(write_csv(tmp_path / "f.csv", [(0, 0)]))
    with pytest.raises(DuplicateLocation, match="line 4"):
        cli.ingest_csv(write_csv(tmp_path / "d.csv", [(0, 0, 1), (1, 1, 2), (0, 0, 3)]), True)
    with pytest.raises(ParseError):
        cli.ingest_csv(write_csv(tmp_path / "x.csv", [(0, "abc", 1)]), True)


def test_parsers():
    H, H2 = cli.parse_bandwidth("0.3")
    assert np.array_equal(H, 0.3 * np.eye(2)) and H2 == "auto"
    H, H2 = cli.parse_bandwidth("0.3,0.01,0.2:0.5")
    assert H[0, 1] == 0.01 and np.array_equal(H2, 0.5 * np.eye(2))
    assert cli.parse_bandwidth("auto") == ("auto", "auto")
    for bad in ("0.3,0.1", "-1", "1,2,1", "a:b:c", "x"):
        with pytest.raises(ConfigError):
            cli.parse_bandwidth(bad)
    assert cli.parse_floats("1,1.5, 2") == [1.0, 1.5, 2.0]
    with pytest.raises(ConfigError):
        cli.parse_floats("1,inf")
    assert len(cli.parse_grid("4x3")) == 12
    with pytest.raises(ConfigError):
        cli.parse_grid("4by3")


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nB = 20\nallow_small = yes\nik = off\n")
    assert cli.read_config(str(p)) == ["--B", "20", "--allow-small"]
    p.write_text("B\n")
    with pytest.raises(ConfigError):
        cli.read_config(str(p))


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["fit", "--input", str(tmp_path / "missing.csv")]) == 2
    assert "error: input" in capsys.readouterr().err
    p = write_csv(tmp_path / "a.csv", [(0, 0, 1), (1, 0, "x")])
    assert cli.main(["fit", "--input", p]) == 2
    assert cli.main(["riskmap", "--input", p]) == 4
    assert cli.main(["riskmap", "--input", p, "--thresholds", "1", "--B", "0"]) == 4
    assert cli.main(["study", "--scenario", "nope", "--N", "1"]) == 4
    assert cli.main(["bogus"]) == 4


def test_numerical_exit_code(tmp_path, capsys):
    rows = [(i % 4, i // 4, 1.0) for i in range(12)]
    p = write_csv(tmp_path / "flat.csv", rows)
    assert cli.main(["fit", "--input", p, "--bandwidth", "2"]) == 3
    assert "error: numerical" in capsys.readouterr().err


def test_study_list(capsys):
    assert cli.main(["study", "--list"]) == 0
    names = capsys.readouterr().out.split()
    assert "table1-c2-15x15" in names and "table3-nu0.5-c2" in names


def test_study_smoke(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["study", "--scenario", "table1-c2-15x15", "--N", "2", "--B", "5",
                     "--output", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 1 and float(rows[0]["mean"]) >= 0


def test_fit_command(field_csv, tmp_path):
    out = tmp_path / "fit.csv"
    assert cli.main(["fit", "--input", str(field_csv), "--output", str(out),
                     "--bandwidth", "0.3:0.4", "--h3", "0.1"]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 216 and set(rows[0]) == {"x1", "x2", "y", "trend", "variance", "std_residual"}
    assert "iterations:" in (tmp_path / "fit.csv.report.txt").read_text()


def test_riskmap_rows_per_threshold(field_csv, tmp_path):
    out = tmp_path / "r.csv"
    targets = field_csv.parent / "targets.csv"
    assert cli.main(["riskmap", "--input", str(field_csv), "--targets", str(targets),
                     "--thresholds", "1,1.5,2,2.5,3,3.5,4", "--B", "20",
                     "--bandwidth", "0.3:0.4", "--h3", "0.1", "--output", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 7 * 9
    assert all(0 <= float(r["prob"]) <= 1 for r in rows)


def test_riskmap_config_and_override(field_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("B = 10\nbandwidth = 0.3:0.4\nh3 = 0.1\ngrid = 5x5\nthresholds = 2\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["riskmap", "--config", str(cfg), "--input", str(field_csv),
                     "--output", str(a)]) == 0
    assert "replicates B: 10" in (tmp_path / "a.csv.report.txt").read_text()
    assert cli.main(["riskmap", "--config", str(cfg), "--input", str(field_csv),
                     "--B", "12", "--output", str(b)]) == 0
    assert "replicates B: 12" in (tmp_path / "b.csv.report.txt").read_text()
    assert len(a.read_text().splitlines()) == 26


def test_riskmap_seed_determinism(field_csv, tmp_path):
    common = ["riskmap", "--input", str(field_csv), "--grid", "6x6", "--thresholds", "2,3",
              "--B", "40", "--bandwidth", "0.3:0.4", "--h3", "0.1", "--seed", "42"]
    outs = []
    for k, threads in enumerate(("1", "1", "3")):
        p = tmp_path / f"m{k}.csv"
        assert cli.main(common + ["--threads", threads, "--output", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_ik_command(field_csv, tmp_path):
    out = tmp_path / "ik.csv"
    assert cli.main(["ik", "--input", str(field_csv), "--grid", "4x4",
                     "--thresholds", "2", "--output", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 17
