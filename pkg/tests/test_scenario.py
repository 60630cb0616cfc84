import copy

import numpy as np
import pytest
import yaml

from quantpassive.exceptions import CertificateError, DimensionError, QuantPassiveError, ScenarioError
from quantpassive.scenario import PRNG_ALGORITHM, build_scenario, load_scenario, preset_names, preset_path

REQUIRED_PRESETS = {
    "single_integrators_k2", "single_integrators_p3", "single_integrators_c6", "double_integrators_k2",
    "double_integrators_p3", "double_integrators_c6", "double_integrators_tracking", "cubic_dampers_p3",
    "estimator_p3", "consensus_sync_a0", "oscillator_sync_p3", "oscillator_sync_k5", "lowpass_sync_k5",
    "output_regulation_p3", "consensus_p3",
}


def base():
    return yaml.safe_load(preset_path("single_integrators_p3").read_text())


def test_presets_present():
    assert REQUIRED_PRESETS <= set(preset_names())


@pytest.mark.parametrize("name", sorted(REQUIRED_PRESETS))
def test_every_preset_loads_and_is_commented(name):
    s = load_scenario(name)
    assert s.name == name
    assert s.description
    text = preset_path(name).read_text()
    assert text.lstrip().startswith("#")


def test_single_integrators_p3_contents():
    s = load_scenario("single_integrators_p3")
    assert s.mode == "coordination"
    assert s.graph.edges == ((0, 1), (1, 2))
    assert s.quantizer.delta == 1.0
    assert s.initial["x"].tolist() == [-1.36, 2.31, -1.57]
    assert s.initial["xi"].size == 0
    assert s.p == 1


def test_load_from_path(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(preset_path("single_integrators_k2").read_text())
    assert load_scenario(path).name == "single_integrators_k2"


def test_edge_referencing_node_zero():
    raw = base()
    raw["graph"]["edges"] = [[0, 1], [2, 3]]
    with pytest.raises(ScenarioError, match=r"graph\.edges\[1\] = \[0, 1\]"):
        build_scenario(raw)


def test_disconnected_graph():
    raw = base()
    raw["graph"] = {"nodes": 4, "edges": [[1, 2], [3, 4]]}
    raw["initial"]["x"] = [0, 1, 2, 3]
    with pytest.raises(ScenarioError, match="not connected"):
        build_scenario(raw)


def test_linear_passive_certificate_failure_reports_residual():
    raw = base()
    raw["agents"] = {"type": "linear_passive", "A": [[-1.0]], "B": [[1.0]], "C": [[2.0]], "P": [[1.0]]}
    with pytest.raises(CertificateError, match=r"agents: .*\|\|B\^T P - C\|\| = 1\.000e\+00"):
        build_scenario(raw)


def test_agent_count_mismatch():
    raw = base()
    raw["agents"] = [{"type": "single_integrator"}] * 2
    with pytest.raises(ScenarioError, match="2 entries given for a graph with 3 nodes"):
        build_scenario(raw)


def test_initial_dimension_mismatch():
    raw = base()
    raw["initial"]["x"] = [1.0, 2.0]
    with pytest.raises(ScenarioError, match=r"initial\.x: expected 3 numbers"):
        build_scenario(raw)


@pytest.mark.parametrize("key", ["graph", "quantizer", "simulation", "mode", "name"])
def test_missing_key_named(key):
    raw = base()
    del raw[key]
    with pytest.raises(ScenarioError, match=key):
        build_scenario(raw)


def test_unknown_mode_and_check():
    raw = base()
    raw["mode"] = "telepathy"
    with pytest.raises(ScenarioError, match="mode"):
        build_scenario(raw)
    raw = base()
    raw["checks"]["run"] = ["nope"]
    with pytest.raises(ScenarioError, match="unknown checks"):
        build_scenario(raw)


def test_bad_delta():
    raw = base()
    raw["quantizer"]["delta"] = -1
    with pytest.raises(ScenarioError, match="quantizer.delta"):
        build_scenario(raw)


def test_reference_velocity_dimension_checked():
    raw = base()
    raw["simulation"]["reference_velocity"] = [[0.0, [1.0, 2.0]]]
    with pytest.raises(ScenarioError, match="reference_velocity"):
        build_scenario(raw)


def test_reference_velocity_rejected_in_sync_mode():
    raw = yaml.safe_load(preset_path("oscillator_sync_p3").read_text())
    raw["simulation"]["reference_velocity"] = [[0.0, [1.0]]]
    with pytest.raises(ScenarioError, match="only coordination and estimator"):
        build_scenario(raw)


def test_estimator_needs_constant_velocity():
    raw = yaml.safe_load(preset_path("estimator_p3").read_text())
    raw["simulation"]["reference_velocity"] = [[0.0, [1.0]], [1.0, [0.0]]]
    with pytest.raises(ScenarioError, match="constant"):
        build_scenario(raw)


def test_estimator_leader_is_one_based():
    s = load_scenario("estimator_p3")
    assert s.estimator.leader == 0
    raw = copy.deepcopy(s.raw)
    raw["estimator"]["leader"] = 0
    with pytest.raises(ScenarioError, match="estimator.leader"):
        build_scenario(raw)


def test_lyapunov_check_requires_certificate():
    raw = yaml.safe_load(preset_path("lowpass_sync_k5").read_text())
    raw["checks"]["run"] = ["lyapunov"]
    with pytest.raises(ScenarioError, match="certificate P"):
        build_scenario(raw)


def test_spr_failure_at_load():
    raw = yaml.safe_load(preset_path("lowpass_sync_k5").read_text())
    raw["graph"] = {"nodes": 3, "edges": [[1, 2], [2, 3]]}
    raw["system"]["a"] = 0.01
    with pytest.raises(CertificateError, match="SPR"):
        build_scenario(raw)


def test_regulation_plant_count():
    raw = yaml.safe_load(preset_path("output_regulation_p3").read_text())
    raw["regulation"]["plants"] = raw["regulation"]["plants"][:2]
    with pytest.raises(ScenarioError, match="one plant per node"):
        build_scenario(raw)


def test_regulation_pole_count():
    raw = yaml.safe_load(preset_path("output_regulation_p3").read_text())
    raw["regulation"]["plants"][0]["controller_poles"] = [-1.0]
    with pytest.raises(ScenarioError, match=r"plants\[1\]\.controller_poles"):
        build_scenario(raw)


def test_regulation_gains_place_poles():
    s = load_scenario("output_regulation_p3")
    for pl in s.plants:
        assert np.all(np.linalg.eigvals(pl.F + pl.G @ pl.K).real < 0)
        assert np.all(np.linalg.eigvals(pl.F + pl.L @ pl.H).real < 0)
    assert s.initial["plant"].tolist() == [0.0] * 5


def test_random_initial_conditions_reproducible_and_named():
    a = load_scenario("oscillator_sync_p3")
    b = load_scenario("oscillator_sync_p3")
    assert np.array_equal(a.initial["xi"], b.initial["xi"])
    assert np.all(np.abs(a.initial["xi"]) <= 5.0)
    raw = copy.deepcopy(a.raw)
    raw["name"] = "renamed"
    c = build_scenario(raw)
    assert not np.array_equal(a.initial["xi"], c.initial["xi"])
    d = a.with_overrides(seed=1)
    assert not np.array_equal(a.initial["xi"], d.initial["xi"])
    assert "PCG64" in PRNG_ALGORITHM


def test_sha256_tracks_content():
    a = load_scenario("single_integrators_p3")
    assert a.sha256 == load_scenario("single_integrators_p3").sha256
    assert a.sha256 != a.with_overrides(delta=0.5).sha256
    assert len(a.sha256) == 64


def test_with_overrides():
    s = load_scenario("single_integrators_p3")
    t = s.with_overrides(delta=0.5, tol=1e-3)
    assert t.quantizer.delta == 0.5
    assert t.checks.tol == 1e-3
    assert s.quantizer.delta == 1.0
    with pytest.raises(ScenarioError, match="lambda-scale"):
        s.with_overrides(gain_scale=2.0)
    e = load_scenario("estimator_p3").with_overrides(gain_scale=2.0)
    assert np.array_equal(e.estimator.gains[1], 2.0 * np.eye(1))


def test_yaml_parse_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("name: [unclosed\n")
    with pytest.raises(ScenarioError, match="YAML"):
        load_scenario(path)


def test_missing_file_and_unknown_preset(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "absent.yaml")
    with pytest.raises(ScenarioError, match="unknown preset"):
        load_scenario("no_such_preset")


def test_errors_share_a_base_class():
    for exc in (ScenarioError, CertificateError, DimensionError):
        assert issubclass(exc, QuantPassiveError)
