import json
from pathlib import Path

import numpy as np
import pytest

import cfslab

PRESETS = Path(__file__).resolve().parents[2] / "presets"


def test_preset_names():
    names = [name for name, _ in cfslab.presets()]
    assert "conservation" in names
    assert len(names) == 7


def test_dirac_h0_spectrum():
    h = cfslab.dirac_h0(4, 1.0, 1.0)
    assert h.shape == (8, 8)
    assert np.allclose(h, h.conj().T)
    assert np.min(np.abs(np.linalg.eigvalsh(h))) == pytest.approx(1.0, abs=1e-12)


def test_format_double():
    assert cfslab.format_double(0.1) == "0.10000000000000001"


def test_validate_rejects_unknown_key():
    cfg = json.loads((PRESETS / "conservation.json").read_text())
    cfslab.validate(cfg)
    cfg["bogus"] = 1
    with pytest.raises(cfslab.CfsError, match="ConfigError"):
        cfslab.validate(cfg)


def test_run_conservation():
    summary, tables = cfslab.run("conservation", PRESETS / "conservation.json", realizations=2)
    assert summary["preset"] == "conservation"
    assert summary["realizations"] == 2
    assert "conservation.csv" in tables
    assert tables["conservation.csv"].startswith("t,drift_dt,drift_half_dt,norm_mean\n")
    names = {a["name"] for a in summary["assertions"]}
    assert {"drift_at_dt", "dual_formula"} <= names
