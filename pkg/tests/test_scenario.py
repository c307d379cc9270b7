import copy
import json
import math
from pathlib import Path

import pytest

from layersphere.harness import desk_scenario, full_scale_scenario
from layersphere.scenario import ScenarioError, load_scenario, save_scenario, scenario_from_dict

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def _base():
    return desk_scenario().to_dict()


def test_roundtrip(tmp_path):
    sc = desk_scenario()
    save_scenario(sc, tmp_path / "s.json")
    back = load_scenario(tmp_path / "s.json")
    assert back.digest() == sc.digest()
    assert back.stack.digest() == sc.stack.digest()
    assert back.sweep.layer == 2  # 1-based "3" in the file


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    load_scenario(path)


def test_digest_ignores_workers():
    sc = desk_scenario()
    assert sc.with_pbs(workers=4).digest() == sc.digest()
    assert sc.with_pbs(seed=1).digest() != sc.digest()


def test_unit_conversion():
    d = _base()
    d["free_diffusion"] = {"value": 1e-9, "unit": "cm2/s"}
    assert scenario_from_dict(d).stack.free_diffusion == pytest.approx(0.1)


def _problems(d):
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(d)
    return info.value.problems


def test_porosity_error_names_layer():
    d = _base()
    d["layers"][1]["porosity"] = 1.2
    probs = _problems(d)
    assert any("layers[1].porosity" in p and "layer 2" in p for p in probs)


def test_source_on_interface_error():
    d = _base()
    d["source"]["r"] = sum(l["width"] for l in d["layers"][:1])
    probs = _problems(d)
    assert any(p.startswith("source.r") and "interface R_1" in p for p in probs)


def test_all_problems_reported_together():
    d = _base()
    d["layers"][0]["width"] = -1
    d["exterior"]["porosity"] = 0
    d["free_diffusion"].pop("unit")
    d["schema_version"] = 7
    probs = _problems(d)
    assert len(probs) >= 4
    assert any(p.startswith("schema_version") for p in probs)
    assert any(p.startswith("free_diffusion.unit") for p in probs)


def test_sweep_validation():
    d = _base()
    d["sweep"] = {"layer": 3, "porosities": []}
    assert any("sweep.porosities" in p for p in _problems(d))
    d["sweep"] = {"layer": 9, "porosities": [0.1]}
    assert any("sweep.layer" in p for p in _problems(d))


def test_receiver_on_source_rejected():
    d = _base()
    d["receivers"][0].update(r=d["source"]["r"], theta=d["source"]["theta"], phi=d["source"]["phi"])
    with pytest.raises(ScenarioError):
        scenario_from_dict(d)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_full_scale_scenario_is_full_size():
    sc = full_scale_scenario()
    assert sc.stack.outer_radius == pytest.approx(275.0)
    assert sc.source.r == pytest.approx(45.83)
    assert sc.source.theta == pytest.approx(math.pi / 2) and sc.source.phi == pytest.approx(math.pi / 2)
    assert all(r.radius == 10.0 for r in sc.receivers)
    assert sc.pbs.dt == 0.5
