import pytest

from config import (
    build_config,
    load_config,
    parse_charges,
    parse_grid,
    parse_lines,
    parse_overrides,
    parse_schedule,
)
from errors import ConfigError
from models import StaticCharge

EXAMPLE = """
# 时钟极限扫描
task = sweep
model = clock
N = 3
L = 16
g = 0
g_grid = 0
lam_grid = 0.4:1.2:5          # start:stop:num
observables = energy, order_parameter
dmrg.max_bond = 64
dmrg.schedule = 16:1e-4, 64:0:1e-9
rg.lower = 0.3
max_workers = 2
g_b = none
"""


def test_parse_lines_strips_comments():
    raw = parse_lines(EXAMPLE.splitlines())
    assert raw["lam_grid"] == "0.4:1.2:5"
    assert raw["model"] == "clock"
    assert "# 时钟极限扫描" not in raw


def test_parse_lines_errors():
    with pytest.raises(ConfigError) as info:
        parse_lines(["N = 3", "N = 4"])
    assert info.value.key == "N"
    with pytest.raises(ConfigError):
        parse_lines(["just a line"])
    with pytest.raises(ConfigError):
        parse_lines([" = 3"])


def test_grid_forms():
    assert parse_grid("g_grid", "0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("g_grid", "0.1, 0.3,0.7") == [0.1, 0.3, 0.7]
    for bad in ("0:1", "a:b:c", "0:1:0", "0.1, x"):
        with pytest.raises(ConfigError):
            parse_grid("g_grid", bad)


def test_charges_and_schedule():
    assert parse_charges("static_charges", "3:up:1, 7:down:-1") == [
        {"r": "3", "leg": "up", "q": "1"},
        {"r": "7", "leg": "down", "q": "-1"},
    ]
    assert parse_schedule("dmrg.schedule", "32:1e-4, 64:0:1e-9") == [
        {"m": "32", "noise": "1e-4"},
        {"m": "64", "noise": "0", "tol": "1e-9"},
    ]
    with pytest.raises(ConfigError):
        parse_charges("static_charges", "3:up")
    with pytest.raises(ConfigError):
        parse_schedule("dmrg.schedule", "32")


def test_build_full_config():
    cfg = build_config(parse_lines(EXAMPLE.splitlines()))
    assert cfg.task == "sweep" and cfg.model == "clock"
    assert cfg.lam_grid == pytest.approx([0.4, 0.6, 0.8, 1.0, 1.2])
    assert cfg.observables == ["energy", "order_parameter"]
    assert cfg.static_charges == []
    assert cfg.g_b is None
    assert cfg.dmrg.max_bond == 64
    assert cfg.dmrg.schedule[1].tol == pytest.approx(1e-9)
    assert cfg.rg.lower == pytest.approx(0.3)
    assert cfg.max_workers == 2


def test_charges_become_models():
    cfg = build_config({"task": "ed", "static_charges": "2:up:1, 3:up:-1"})
    assert cfg.static_charges == [StaticCharge(r=2, leg="up", q=1), StaticCharge(r=3, leg="up", q=-1)]
    assert cfg.spec().charge_at(3, "up") == -1


@pytest.mark.parametrize("key", ["colour", "dmrg.bond", "rg", "foo.bar"])
def test_unknown_keys(key):
    with pytest.raises(ConfigError) as info:
        build_config({"task": "ed", key: "1"})
    assert info.value.key == key


@pytest.mark.parametrize(
    "raw, key",
    [
        ({"task": "ed", "N": "1"}, "N"),
        ({"task": "ed", "dmrg.max_bond": "0"}, "dmrg.max_bond"),
        ({"N": "3"}, "task"),
        ({"task": "ed", "model": "ising"}, "model"),
        ({"task": "rg", "g_grid": "1", "lam_grid": "1", "rg.method": "Euler"}, "rg.method"),
    ],
)
def test_validation_errors_name_the_key(raw, key):
    with pytest.raises(ConfigError) as info:
        build_config(raw)
    assert info.value.key == key


def test_cross_field_check_reports_config():
    with pytest.raises(ConfigError) as info:
        build_config({"task": "sweep"})
    assert "g_grid" in str(info.value)


def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("task = ed\nN = 3\nL = 3\n", encoding="utf-8")
    cfg = load_config(path, parse_overrides(["L=5", "g = 0.25"]))
    assert (cfg.N, cfg.L, cfg.g) == (3, 5, 0.25)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.conf")
    with pytest.raises(ConfigError):
        parse_overrides(["L5"])


def test_rg_integrator_settings():
    cfg = build_config({"task": "rg", "g_grid": "0", "lam_grid": "1", "rg.method": "RK45", "rg.max_steps": "800"})
    assert cfg.rg.method == "RK45"
    assert cfg.rg.max_steps == 800
    assert build_config({"task": "rg", "g_grid": "0", "lam_grid": "1"}).rg.method == "Radau"
