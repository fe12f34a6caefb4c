import json

import numpy as np
import pytest
from click.testing import CliRunner

from glvortex.cli import main
from glvortex.grid_field import read_glf1
from glvortex.harness import (
    CHECKS,
    CheckRecord,
    ConfigError,
    Report,
    ScenarioConfig,
    exit_code,
    list_presets,
    load_config,
    run_checks,
)

BASE = {"name": "t", "kind": "single-vortex", "epsilons": [0.04], "vortices": [[[0.0, 0.0], 1]]}


def _cfg(**kw):
    d = dict(BASE)
    d.update(kw)
    return d


def test_ell0_is_validated_with_field_name():
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.from_dict(_cfg(constants={"ell0": 0.5}))
    assert exc.value.field == "constants.ell0"
    assert "1/8" in str(exc.value) and "0.5" in str(exc.value)


@pytest.mark.parametrize("bad, field", [
    (_cfg(colour="red"), "colour"),
    ({"name": "t", "kind": "uniform"}, "epsilons"),
    (_cfg(kind="vortex-soup"), "kind"),
    (_cfg(epsilons=[0.5]), "epsilons"),
    (_cfg(vortices=[]), "vortices"),
    (_cfg(domain={"shape": "disc", "radius": -1}), "domain.radius"),
    (_cfg(constants={"warp": 9}), "constants.warp"),
    (_cfg(checks=["nope"]), "checks"),
    (_cfg(kind="lattice", lattice={"spacing": 0.2}), "lattice"),
])
def test_config_errors_name_the_field(bad, field):
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.from_dict(bad)
    assert exc.value.field == field


def test_config_roundtrip_and_presets():
    for name in list_presets():
        cfg = load_config(name)
        assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError, match="no file or preset"):
        load_config("no-such-preset")


def test_jitter_is_seeded():
    cfg = ScenarioConfig.from_dict(_cfg(kind="multi-vortex", jitter=0.01,
                                        vortices=[[[0.0, 0.0], 1], [[0.2, 0.0], -1]]))
    a = cfg.vortex_list()
    assert a == cfg.vortex_list()
    assert a != cfg.with_seed(1).vortex_list()


def test_exit_codes_follow_statuses():
    def rep(status):
        return Report("s", 0, {}, [CheckRecord("c", "a", None, 0.0, 0.0, 0.0, status)])
    assert exit_code([rep("pass"), rep("pass")]) == 0
    assert exit_code([rep("pass"), rep("flag")]) == 2
    assert exit_code([rep("fail")]) == 2


def test_uniform_state_has_nothing_to_bound():
    rep = run_checks(load_config("core"), checks=["ball-soundness", "g-lower-bound", "jacobian"])
    assert rep.status == "pass"
    for c in rep.checks:
        assert c.lhs == 0.0


def test_core_digest_is_reproducible():
    cfg = load_config("core")
    a, b = run_checks(cfg), run_checks(cfg)
    assert a.digest() == b.digest()
    assert a.status == "pass"
    assert a.digest() != run_checks(cfg.with_seed(7)).digest()
    assert {c.name for c in a.checks} <= set(CHECKS)


def test_cli_version():
    res = CliRunner().invoke(main, ["--version"])
    assert res.exit_code == 0 and "0.1.0" in res.output


def test_cli_bad_config_exits_one(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(_cfg(constants={"ell0": 0.5})))
    res = CliRunner().invoke(main, ["synth", "--config", str(p), "--out", str(tmp_path / "o")])
    assert res.exit_code == 1
    assert "constants.ell0" in res.output
    res = CliRunner().invoke(main, ["synth", "--out", str(tmp_path / "o")])
    assert res.exit_code == 1


def test_cli_synth_writes_fields(tmp_path):
    res = CliRunner().invoke(main, ["synth", "--config", "bbh-single", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    u, eps = read_glf1(tmp_path / "bbh-single_eps0.04_u.glf1")
    assert eps == 0.04
    # the mesh is ε/3, so the nearest node to the core sits at |u| ≈ 0.14
    k = np.unravel_index(np.argmin(u.modulus), u.modulus.shape)
    assert u.modulus[k] < 0.5
    assert np.hypot(*(np.array(u.geometry.coords)[:, k[0], k[1]])) < 0.04 / 3
    assert (tmp_path / "report_bbh-single_synth.json").exists()


def test_cli_check_all_core(tmp_path):
    res = CliRunner().invoke(main, ["check-all", "--config", "core", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["core"]["status"] == "pass"
    rows = (tmp_path / "report_core.csv").read_text().splitlines()
    assert rows[0] == "scenario,check,epsilon,lhs,rhs,slack,status,anchor"
    assert "core: pass" in res.output


def test_cli_failed_check_exits_two(tmp_path):
    # the annulus constant drifts with ε on the coarse sweep, so this check fails
    d = load_config("cluster-5").to_dict()
    d["checks"] = ["annulus"]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(d))
    res = CliRunner().invoke(main, ["check-all", "--config", str(p), "--out", str(tmp_path)])
    assert res.exit_code == 2, res.output
