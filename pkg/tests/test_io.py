import json
import math

from spinreadout import __version__
from spinreadout.io import RunManifest, csv_text, digest, format_value, sha256_file, write_json


def test_format_round_trip():
    for x in (0.1, 1 / 3, 1e-300, 6.02214076e23, -2.5):
        assert float(format_value(x)) == x
    assert format_value(math.nan) == "NA"
    assert format_value(3) == "3"
    assert format_value("mean") == "mean"


def test_csv_line_endings():
    text = csv_text(("a", "b"), [(1.0, math.nan), (0.5, 2)])
    assert text == "a,b\n1.0,NA\n0.5,2\n"


def test_json_nan_is_null(tmp_path):
    path = write_json(tmp_path / "x.json", {"v": [1.0, math.nan]})
    assert json.loads(path.read_text()) == {"v": [1.0, None]}


def test_digest_is_key_order_independent():
    assert digest({"a": 1, "b": [1.5]}) == digest({"b": [1.5], "a": 1})
    assert digest({"a": 1}) != digest({"a": 2})


def test_manifest(tmp_path):
    out = tmp_path / "data.csv"
    out.write_text("x\n1\n")
    m = RunManifest("snr", {"lambda": [1.0]}, seed=7)
    m.add(out)
    doc = json.loads(m.write(tmp_path).read_text())
    assert doc["tool_version"] == __version__
    assert doc["outputs"] == [{"path": "data.csv", "sha256": sha256_file(out)}]
    assert doc["config_digest"] == digest({"lambda": [1.0]})
    assert doc["seed"] == 7
