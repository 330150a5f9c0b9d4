import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from outstab import report as rp
from outstab.cli import main
from outstab.config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from outstab.devices import Device, Profile, Zone
from outstab.simulator import InitialState
from outstab.spectral_core import Domain

COUNTER = """\
[domain]
kind = "interval"
lengths = [1.0]

[system]
k = 50.0

[[actuators]]
label = "a1"
zone = [[0.0, 1.0]]
profile = { kind = "sine_product", modes = [2] }

[[sensors]]
label = "s1"
zone = [[0.0, 1.0]]
"""

HALF = COUNTER.replace('profile = { kind = "sine_product", modes = [2] }', "").replace("[[0.0, 1.0]]\n\n[[sensors]]", "[[0.0, 0.5]]\n\n[[sensors]]")


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_parse_example():
    cfg = parse_config(COUNTER)
    assert cfg.domain == Domain.interval(1.0)
    assert cfg.k == 50.0
    assert cfg.actuators[0].profile == Profile.sine_product([2])
    assert cfg.sensors[0].profile == Profile.constant()
    assert cfg.k_reading == "refined"
    assert cfg.tolerances.rank == 1e-10


def test_unknown_key_reports_line():
    text = COUNTER.replace('label = "s1"', 'label = "s1"\nweight = 2.0')
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert any("weight" in e and e.startswith("line 15:") for e in err.value.errors)


def test_unknown_section():
    with pytest.raises(ConfigError) as err:
        parse_config(COUNTER + "\n[plotting]\ncolor = 1\n")
    assert "plotting" in err.value.errors[0]


def test_zone_outside_domain_names_device():
    text = COUNTER.replace("zone = [[0.0, 1.0]]\n\n[[sensors]]", "zone = [[0.5, 1.2]]\n\n[[sensors]]").replace('profile = { kind = "sine_product", modes = [2] }', "")
    text = text.replace('label = "a1"\nzone = [[0.0, 1.0]]', 'label = "a1"\nzone = [[0.5, 1.2]]')
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    msg = " ".join(err.value.errors)
    assert "'a1'" in msg and "line 10" in msg


def test_overlapping_actuators_rejected():
    text = COUNTER + '\n[[actuators]]\nlabel = "a2"\nzone = [[0.4, 0.6]]\n'
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert any("a2" in e or "overlap" in e for e in err.value.errors)


def test_bad_values():
    with pytest.raises(ConfigError):
        parse_config(COUNTER.replace("k = 50.0", 'k = "fifty"'))
    with pytest.raises(ConfigError):
        parse_config(COUNTER + "\n[tolerances]\nrank = -1.0\n")
    with pytest.raises(ConfigError):
        parse_config(COUNTER + '\n[analysis]\nk_reading = "loose"\n')
    with pytest.raises(ConfigError):
        parse_config("[domain\n")


def test_csv_profile_relative_path(tmp_path):
    (tmp_path / "g.csv").write_text("x,g\n0.0,0.0\n0.5,1.0\n1.0,0.0\n", encoding="utf-8")
    text = COUNTER.replace('{ kind = "sine_product", modes = [2] }', '{ kind = "tabulated", csv = "g.csv" }')
    cfg = load_config(write(tmp_path, text))
    assert cfg.actuators[0].profile.positions == ((0.0, 0.5, 1.0),)


def test_round_trip_full():
    text = COUNTER + """
[tolerances]
cluster = 1e-8
rank = 1e-11
zero = 1e-7

[truncation]
verdict_policy = "count"
verdict_modes = 12

[analysis]
k_reading = "literal"

[simulation]
sigma = 2.0
t_max = 3.5
initial_state = { kind = "combination", modes = [1, 3], coefficients = [1.0, -0.25] }

[oracle]
resolution = 255

[output]
dir = "results"
"""
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg
    assert serialize_config(parse_config(serialize_config(cfg))) == serialize_config(cfg)


profiles_1d = st.one_of(
    st.floats(-5, 5).map(Profile.constant),
    st.lists(st.floats(-5, 5), min_size=1, max_size=4).map(Profile.polynomial),
    st.tuples(st.integers(1, 9), st.floats(-3, 3)).map(lambda t: Profile.sine_product([t[0]], t[1])),
)


@settings(max_examples=60, deadline=None)
@given(
    k=st.floats(-100, 100),
    zones=st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)).map(sorted).filter(lambda z: z[1] > z[0]), min_size=1, max_size=3),
    profs=st.lists(profiles_1d, min_size=3, max_size=3),
    reading=st.sampled_from(["literal", "refined"]),
)
def test_round_trip_property(k, zones, profs, reading):
    sens = tuple(Device("sensor", Zone((tuple(z),)), p, f"s{i}") for i, (z, p) in enumerate(zip(zones, profs)))
    cfg = RunConfig(Domain.interval(1.0), k, (), sens, k_reading=reading)
    assert parse_config(serialize_config(cfg)) == cfg


def test_round_trip_rectangle_and_states():
    cfg = RunConfig(
        Domain.rectangle(1.0, 2.0), 3.0,
        (Device("actuator", Zone(((0.0, 0.5), (0.25, 1.0))), Profile.polynomial([[1.0, 0.0], [0.5, 2.0]]), "a"),),
        (Device("sensor", Zone(((0.1, 0.9), (0.0, 2.0))), Profile.tabulated([[0.0, 0.5, 1.0], [0.0, 2.0]], [[1, 2], [3, 4], [5, 6]]), "s"),),
    )
    assert parse_config(serialize_config(cfg)) == cfg
    from dataclasses import replace
    for state in (InitialState.eigenfunction((1, 2)), InitialState.polynomial([[0.0, 1.0], [1.0, 0.0]])):
        c2 = replace(cfg, simulation=replace(cfg.simulation, initial_state=state))
        assert parse_config(serialize_config(c2)) == c2


def test_reports_are_byte_identical(tmp_path):
    path = write(tmp_path, COUNTER)
    outs = []
    for i in range(2):
        out = tmp_path / f"o{i}"
        assert main(["analyze", "--config", str(path), "--out", str(out)]) == rp.EXIT_NOT_STABILIZABLE
        outs.append((out / "report.json").read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert doc["verdict"] is False
    assert doc["witnesses"]["refined"][0]["cluster"] == 1
    assert list(doc)[:4] == ["schema_version", "tool", "command", "verdict"]


def test_exit_codes(tmp_path, capsys):
    assert main(["analyze", "--config", str(write(tmp_path, HALF, "h.toml"))]) == rp.EXIT_STABILIZABLE
    assert json.loads(capsys.readouterr().out)["verdict"] is True
    assert main(["validate", "--config", str(write(tmp_path, "[domain]\n", "bad.toml"))]) == rp.EXIT_CONFIG_ERROR
    assert main(["analyze", "--config", str(tmp_path / "missing.toml")]) == rp.EXIT_CONFIG_ERROR
    assert main(["validate", "--config", str(write(tmp_path, COUNTER))]) == 0
    count = COUNTER + '\n[truncation]\nverdict_policy = "count"\nverdict_modes = 1\n'
    assert main(["analyze", "--config", str(write(tmp_path, count, "c.toml"))]) == rp.EXIT_INTERNAL_ERROR
    assert main(["simulate", "--config", str(write(tmp_path, COUNTER))]) == rp.EXIT_NOT_STABILIZABLE


def test_k_reading_override(tmp_path, capsys):
    # symmetric actuator and symmetric sensor on the square: the readings disagree at cluster 2
    text = """
[domain]
kind = "rectangle"
lengths = [1.0, 1.0]
[system]
k = 60.0
[[actuators]]
zone = [[0.0, 0.5], [0.0, 0.5]]
[[sensors]]
zone = [[0.5, 1.0], [0.5, 1.0]]
"""
    path = write(tmp_path, text)
    assert main(["analyze", "--config", str(path)]) == rp.EXIT_STABILIZABLE
    capsys.readouterr()
    assert main(["analyze", "--config", str(path), "--k-reading", "literal"]) == rp.EXIT_NOT_STABILIZABLE
    doc = json.loads(capsys.readouterr().out)
    assert doc["reading"] == "literal" and doc["verdict_refined"] is True


def test_simulate_writes_csv(tmp_path):
    path = write(tmp_path, HALF.replace('label = "s1"', 'label = "mid"'))
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    lines = (out / "series.csv").read_text().splitlines()
    assert lines[0] == "t,y_1:mid,norm_y"
    assert len(lines) == 401
    decay = json.loads((out / "decay.json").read_text())
    assert decay["fitted_rate"] <= -0.5


def test_oracle_check_without_sensors(tmp_path):
    text = COUNTER.split("[[sensors]]")[0]
    out = tmp_path / "o"
    assert main(["oracle-check", "--config", str(write(tmp_path, text)), "--out", str(out)]) == rp.EXIT_STABILIZABLE
    doc = json.loads((out / "oracle.json").read_text())
    assert doc["agreement"] is True and doc["trajectory_max_relative_deviation"] is None


def test_oracle_check_counterexample(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle-check", "--config", str(write(tmp_path, COUNTER)), "--out", str(out)]) == rp.EXIT_NOT_STABILIZABLE
    doc = json.loads((out / "oracle.json").read_text())
    assert doc["agreement"] is True
    assert doc["oracle_witnesses"][0] == pytest.approx(50 - math.pi**2, abs=1e-2)


def test_oracle_inconclusive_on_coarse_grid(tmp_path):
    k = 4 * math.pi**2 + 2.0
    text = COUNTER.replace("k = 50.0", f"k = {k!r}") + "\n[oracle]\nresolution = 16\n"
    assert main(["oracle-check", "--config", str(write(tmp_path, text))]) == rp.EXIT_INCONCLUSIVE


def test_suite_mode(tmp_path):
    out = tmp_path / "suite"
    code = main(["oracle-check", "--seed", "7", "--trials", "5", "--trials-2d", "1", "--out", str(out)])
    doc = json.loads((out / "suite.json").read_text())
    assert code == 0 and doc["trials"] == 6 and doc["disagreements"] == 0


def test_non_finite_values_serialize():
    assert json.loads(rp.dumps({"a": math.inf, "b": -math.inf, "c": math.nan, "d": np.float64(0.1)})) == {
        "a": "inf", "b": "-inf", "c": "nan", "d": 0.1,
    }


def test_unresolvable_rank_decision_is_inconclusive():
    from outstab.report import oracle_check

    cfg = RunConfig(
        Domain.rectangle(1.0, 1.0), 56.82,
        (
            Device("actuator", Zone(((0.75, 1.0), (0.0, 0.75))), Profile.constant(), "a1"),
            Device("actuator", Zone(((0.4245, 0.5757), (0.4245, 0.5757))), Profile.constant(), "a2"),
        ),
        (Device("sensor", Zone(((0.06, 0.39), (0.25, 0.5))), Profile.constant(), "s1"),),
    )
    doc = oracle_check(cfg, with_trajectory=False)
    assert doc["verdict_refined"] is True
    assert doc["agreement"] == "inconclusive"
    assert doc["guard_band"]["rank_margin"] < doc["guard_band"]["rank_margin_floor"]
