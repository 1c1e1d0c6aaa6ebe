import dataclasses
import json
import math
import pathlib

import jsonschema
import pytest

from rccs import scenarios as sc

SCHEMA = json.loads(
    (pathlib.Path(__file__).parent.parent / "schemas" /
     "scenario_config.schema.json").read_text())


def _all_configs():
    cfgs = [sc.effectiveness(v) for v in sc.VARIANTS]
    cfgs += [sc.chaos("oa-mpc"), sc.chaos("r-ccs")]
    cfgs += [sc.starvation("oa-mpc"), sc.starvation("r-ccs")]
    cfgs += [sc.cloud_switch(seed=3)]
    cfgs += sc.validation_grid(seed=1)
    return cfgs


@pytest.mark.parametrize("cfg", _all_configs(), ids=lambda c: c.name)
def test_json_round_trip(cfg):
    text = sc.to_json(cfg)
    again = sc.from_json(text)
    assert again == cfg


@pytest.mark.parametrize("cfg", _all_configs(), ids=lambda c: c.name)
def test_configs_match_published_schema(cfg):
    doc = json.loads(sc.to_json(cfg))
    jsonschema.validate(doc, SCHEMA)


def test_save_load(tmp_path):
    cfg = sc.starvation("r-ccs", seed=5)
    path = tmp_path / "cfg.json"
    sc.save(cfg, str(path))
    assert sc.load(str(path)) == cfg
    with pytest.raises(OSError):
        sc.load(str(tmp_path / "missing.json"))


def test_infinity_round_trips():
    spec = dataclasses.replace(
        sc.ScenarioConfig().mpc, x_max=(0.55, math.inf, math.pi / 4),
        x_min=(-0.55, -math.inf, -math.pi / 4))
    cfg = dataclasses.replace(sc.effectiveness("r-ccs"), mpc=spec)
    again = sc.from_json(sc.to_json(cfg))
    assert again.mpc.x_max[1] == math.inf
    assert again.mpc.x_min[1] == -math.inf


def test_validation_grid_shape():
    grid = sc.validation_grid(seed=7)
    assert len(grid) == 12                      # 2 scenarios x 6 variants
    assert all(cfg.duration == 400.0 for cfg in grid)
    assert {cfg.delay_scenario for cfg in grid} == {1, 2}
    queued = [c for c in grid if c.queue_capacity == 1]
    assert len(queued) == 6


def test_validation_variants():
    cfg = sc.validation(2, "22hz")
    assert cfg.tenants[0].variant == "oa-mpc"
    assert cfg.tenants[0].fixed_period == pytest.approx(0.045)
    cfg = sc.validation(1, "r-ccs+q")
    assert cfg.tenants[0].variant == "r-ccs"
    assert cfg.queue_capacity == 1
    with pytest.raises(ValueError):
        sc.validation(2, "44hz")


def test_starvation_layout():
    cfg = sc.starvation("r-ccs")
    assert [t.admission_time for t in cfg.tenants] == [0.0, 20.0, 40.0]
    assert cfg.queue_capacity == 1
    assert cfg.capacity_schedule == ((60.0, 3),)


def test_chaos_flag():
    assert sc.chaos("r-ccs").chaos
    assert not sc.effectiveness("r-ccs").chaos


def test_cloud_switch_schedule():
    cfg = sc.cloud_switch(seed=0)
    assert cfg.delay_mode == "rtt"
    assert len(cfg.switch_schedule) == 5
    assert [t for t, _ in cfg.switch_schedule] == [20.0, 40.0, 60.0, 80.0, 100.0]


def test_validate_rejects_bad_configs():
    good = sc.effectiveness("r-ccs")
    with pytest.raises(ValueError):
        dataclasses.replace(good, duration=-1.0).validate()
    with pytest.raises(ValueError):
        dataclasses.replace(good, delay_mode="carrier-pigeon").validate()
    with pytest.raises(ValueError):
        dataclasses.replace(good, delay_scenario=3).validate()
    with pytest.raises(ValueError):
        dataclasses.replace(
            good, tenants=(sc.TenantSpec(variant="pid"),)).validate()
    with pytest.raises(ValueError):
        dataclasses.replace(
            good, tenants=(sc.TenantSpec(fixed_period=0.0312),)).validate()
    with pytest.raises(ValueError):
        dataclasses.replace(
            good, tenants=(sc.TenantSpec(), sc.TenantSpec())).validate()
    with pytest.raises(ValueError):
        dataclasses.replace(good, queue_capacity=0).validate()
    with pytest.raises(ValueError):
        dataclasses.replace(good, capacity_schedule=((500.0, 2),)).validate()
