import json

import pytest

from mlwalk.certify import reproduce_table
from mlwalk.io import TABLE_COLUMNS, render, write_report
from mlwalk.stats import TestReport


def _report(p=0.5):
    return TestReport("fclt", 0.01, p, 100, True, {"variance_ratio": 1.01})


def test_json_keys():
    doc = json.loads(render(_report(), "json"))
    assert set(doc) == {"name", "statistic", "p_value", "n_samples", "passed", "detail"}


def test_csv_header_written_once(tmp_path):
    path = tmp_path / "r.csv"
    write_report(_report(0.5), "csv", path)
    write_report(_report(0.25), "csv", path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("name,statistic,p_value")
    assert lines[2].split(",")[2] == "0.25"


def test_json_round_trip(tmp_path):
    path = tmp_path / "r.json"
    write_report(_report(), "json", path)
    assert json.loads(path.read_text()) == _report().to_dict()


def test_table_rows():
    text = render([reproduce_table(2, "0.5")], "table")
    head, row = text.splitlines()
    assert head.split() == list(TABLE_COLUMNS)
    assert row.split()[:3] == ["0.5", "0.50000", "10"]
    assert "1.4283-1.4456i" in row and "0.92605" in row


def test_certificate_csv_flattens_complex():
    row = reproduce_table(2, "0.9")
    text = render(row.result, "csv")
    header = text.splitlines()[0].split(",")
    assert "ell1.re" in header and "ell1.im" in header and "inputs.theta1" in header


def test_unknown_format():
    with pytest.raises(ValueError):
        render(_report(), "xml")
