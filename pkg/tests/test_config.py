import json

import numpy as np
import pytest

from jetmpc.config import (RunSpec, ScenarioSpec, WaypointSpec, apply_overrides, build_scenario,
                           default_model_spec, dump_config, load_config, parse_config, to_dict)
from jetmpc.errors import ConfigError
from jetmpc.mpc import SINGLE_RATE


def base_doc():
    spec = RunSpec(model=default_model_spec(),
                   scenario=ScenarioSpec(duration=1.0,
                                         waypoints=(WaypointSpec(0.0, (0.0, 0.0, 1.0)),)))
    return to_dict(spec)


def test_round_trip():
    spec = parse_config(base_doc())
    assert parse_config(json.loads(dump_config(spec))) == spec


def test_defaults_fill_missing_sections():
    doc = base_doc()
    for key in ("jets", "plant", "mpc"):
        doc.pop(key)
    spec = parse_config(doc)
    assert spec.plant.time_scale == 1.1
    assert spec.mpc.f_jet == 10.0


@pytest.mark.parametrize("mutate, path, msg", [
    (lambda d: d["model"].pop("mass"), "model.mass", "required"),
    (lambda d: d["mpc"].update(foo=1), "mpc.foo", "unknown key"),
    (lambda d: d["mpc"].update(mode="fast"), "mpc.mode", "unknown mode"),
    (lambda d: d["scenario"].update(duration="long"), "scenario.duration", "number"),
    (lambda d: d["scenario"].update(seed=1.5), "scenario.seed", "integer"),
    (lambda d: d["plant"].update(time_scale=-1.0), "plant", "positive"),
    (lambda d: d["model"]["chains"][0]["mount"].update(xyz=[0, 0]), "model.chains[0].mount",
     "three"),
])
def test_errors_name_the_entry(mutate, path, msg):
    doc = base_doc()
    mutate(doc)
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.path == path
    assert msg in str(err.value)


def test_overrides():
    doc = apply_overrides(base_doc(), ['mpc.mode="single-rate"', "mpc.weights.du_jet=2",
                                       "scenario.waypoints.0.t=0.5", "scenario.name=abc"])
    spec = parse_config(doc)
    assert spec.mpc.mode == SINGLE_RATE
    assert spec.mpc.weights.du_jet == 2.0
    assert spec.scenario.waypoints[0].t == 0.5
    assert spec.scenario.name == "abc"


def test_override_does_not_mutate_input():
    doc = base_doc()
    apply_overrides(doc, ["mpc.weights.du_jet=2"])
    assert doc == base_doc()


@pytest.mark.parametrize("item", ["novalue", "scenario.waypoints.x=1", "scenario.waypoints.9.t=1"])
def test_bad_overrides(item):
    with pytest.raises(ConfigError):
        apply_overrides(base_doc(), [item])


def test_load_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(base_doc()))
    spec = load_config(path, ["scenario.seed=4"])
    assert spec.scenario.seed == 4
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


def test_single_waypoint_means_hover():
    sc = build_scenario(parse_config(base_doc()))
    np.testing.assert_allclose(sc.trajectory(0.7)[0], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(sc.trajectory(0.7)[1], 0.0)


def test_scenario_errors_are_config_errors():
    doc = base_doc()
    doc["scenario"]["disturbances"] = [{"start": 0.5, "duration": 2.0}]
    with pytest.raises(ConfigError, match="past the end"):
        build_scenario(parse_config(doc))
