import json
from pathlib import Path

import jsonschema
import pytest

from ivqr import report as report_mod


def test_schema_is_itself_valid():
    schema = report_mod.schema()
    jsonschema.Draft7Validator.check_schema(schema)
    assert schema["properties"]["schema_version"]["const"] == report_mod.SCHEMA_VERSION


def test_docs_copy_in_sync():
    shipped = report_mod.schema()
    docs = json.loads(
        (Path(__file__).resolve().parent.parent / "docs" / "report_schema.json").read_text()
    )
    assert shipped == docs


def test_new_report_skeleton_validates():
    report = report_mod.finalize(report_mod.new_report("estimate", {"taus": [0.5]}, 3))
    jsonschema.validate(report, report_mod.schema())
    assert report["provenance"]["seed"] == 3
    assert report["provenance"]["config"]["taus"] == [0.5]


def test_finalize_rejects_non_finite():
    report = report_mod.new_report("estimate", {}, 0)
    report["estimates"] = [{"wald_min": float("nan")}]
    with pytest.raises(ValueError):
        report_mod.finalize(report)


def test_sanitize_preserves_bools_and_numbers():
    import numpy as np

    out = report_mod.sanitize(
        {"flag": np.bool_(True), "x": np.float64(1.5), "n": np.int64(3), "plain": True}
    )
    assert out["flag"] is True
    assert out["plain"] is True
    assert isinstance(out["x"], float) and out["x"] == 1.5
    assert isinstance(out["n"], int) and not isinstance(out["n"], bool)
