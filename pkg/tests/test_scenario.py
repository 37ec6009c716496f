import pytest

from qdirsim import scenario as scn
from qdirsim.errors import ConfigError
from qdirsim.optics import TransferFunction

BUNDLED = ["control_narrowbeams", "default_protocol", "infeasible", "narrow_aperture",
           "periodic_slots"]


def test_bundled_names():
    assert scn.bundled_names() == BUNDLED


@pytest.mark.parametrize("name", BUNDLED)
def test_round_trip(name):
    cfg = scn.load(name)
    again = scn.loads(scn.dumps(cfg))
    assert again == cfg
    assert scn.config_hash(again) == scn.config_hash(cfg)


@pytest.mark.parametrize("name,feasible", [("default_protocol", True), ("narrow_aperture", True),
                                           ("periodic_slots", True), ("infeasible", False),
                                           ("control_narrowbeams", False)])
def test_bundled_feasibility(name, feasible):
    assert scn.Scenario(scn.load(name)).feasibility().feasible is feasible


def test_defaults_from_empty_file():
    cfg = scn.loads("")
    assert cfg == scn.ScenarioConfig()
    sc = scn.Scenario(cfg)
    assert sc.image.dot_positions == (-2.0, 2.0)
    assert sc.mask_width == pytest.approx(0.05)


def test_chain_parsed():
    cfg = scn.load("narrow_aperture")
    assert cfg.channel.chain == (TransferFunction("hard_aperture", arm="signal", cutoff=0.1),)


@pytest.mark.parametrize("text,needle", [
    ("colour = 1", "colour"),
    ("[geometry]\nrange_km = 1.0", "geometry.range_km"),
    ("[[channel.chain]]\nkind = 'hard_aperture'\ncutoff = 0.1\nradius = 2", "radius"),
    ("[telescope]\nx = 1", "telescope"),
])
def test_unknown_keys_named(text, needle):
    with pytest.raises(ConfigError, match=needle):
        scn.loads(text)


@pytest.mark.parametrize("text", [
    "[run]\nn_events = 'many'",
    "[run]\nn_events = 10.5",
    "[grid]\nq_max = true",
    "[state]\nalphabet = ['a']",
    "[run]\nn_events = 0",
    "[run]\nseed = -1",
    "[state]\nkind = 'laser'",
    "[noise]\noffset = 'sometimes'",
    "[grid]\nn_points = 100",
    "[[channel.chain]]\nkind = 'lens'",
    "[channel]\nkind = 'camera'",
])
def test_invalid_values(text):
    with pytest.raises(ConfigError):
        scn.loads(text)


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        scn.loads("[run]\nseed = 1\nn_events = = 3\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nosuch"):
        scn.load(str(tmp_path / "nosuch.toml"))


def test_overrides():
    cfg = scn.load("default_protocol")
    changed = cfg.replace_run(seed=7, n_events=None)
    assert changed.run.seed == 7
    assert changed.run.n_events == cfg.run.n_events
    assert scn.config_hash(changed) != scn.config_hash(cfg)
    with pytest.raises(ConfigError):
        cfg.replace_run(n_events=0)


def test_noise_policy_auto(default_scenario):
    policy = default_scenario.noise_policy()
    assert policy.offset_rate > 0 and policy.residual < 1e-12
    assert scn.Scenario(scn.load("periodic_slots")).noise_policy().total_rate == 0
