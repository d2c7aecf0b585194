import textwrap

import pytest

from mvsde.cli import main
from mvsde.config import ConfigError, load_config

CHAOS_CONFIG = """
[experiment]
name = chaos
seed = 77
replications = 2
out = {out}

[kernel]
name = linear
a = -1.0
c = 0.5
s = 0.2

[initial]
law = gaussian
mean = 1.0
cov = 0.04

[grid]
T = 1.0
h_fine = 0.03125

[chaos]
N_list = 4, 8, 16
law_source = analytic
"""


def write_config(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def test_valid_chaos_config(tmp_path):
    path = write_config(tmp_path, CHAOS_CONFIG.format(out=tmp_path / "res"))
    cfg = load_config(path)
    assert cfg.experiment == "chaos"
    assert cfg.seed == 77
    assert cfg.n_list == [4, 8, 16]
    assert cfg.kernel_params == {"a": -1.0, "c": 0.5, "s": 0.2}
    assert cfg.fine_grid().n_steps == 32
    assert cfg.to_dict()["kernel"]["name"] == "linear"


@pytest.mark.parametrize(
    "mutation, message",
    [
        (("h_fine = 0.03125", "h_fine = 0.3"), "divide"),
        (("N_list = 4, 8, 16", "N_list = 8, 4"), "increasing"),
        (("law_source = analytic", "law_source = magic"), "law_source"),
        (("name = linear", "name = warp"), "kernel"),
        (("law = gaussian", "law = cauchy"), "law"),
        (("seed = 77", "sead = 77"), "sead"),
    ],
)
def test_invalid_configs(tmp_path, mutation, message):
    old, new = mutation
    text = CHAOS_CONFIG.format(out=tmp_path / "res").replace(old, new)
    path = write_config(tmp_path, text)
    with pytest.raises(ConfigError, match=message):
        load_config(path)


def test_unknown_key_and_section_are_hard_errors(tmp_path):
    text = CHAOS_CONFIG.format(out=tmp_path / "res") + "\nturbo = on\n"
    with pytest.raises(ConfigError, match="turbo"):
        load_config(write_config(tmp_path, text))
    text = CHAOS_CONFIG.format(out=tmp_path / "res") + "\n[extras]\nfoo = 1\n"
    with pytest.raises(ConfigError, match="extras"):
        load_config(write_config(tmp_path, text, name="exp2.ini"))


def test_analytic_law_requires_linear_kernel(tmp_path):
    text = CHAOS_CONFIG.format(out=tmp_path / "res").replace("name = linear", "name = loglip")
    text = text.replace("a = -1.0\nc = 0.5\ns = 0.2", "s = 0.3")
    with pytest.raises(ConfigError, match="analytic"):
        load_config(write_config(tmp_path, text))


def test_euler_rate_requires_nested_steps(tmp_path):
    text = """
    [experiment]
    name = euler-rate
    seed = 1
    [kernel]
    name = linear
    [initial]
    law = point_mass
    x0 = 1.0
    [grid]
    T = 1.0
    h_fine = 0.0625
    [euler-rate]
    N = 4
    h_list = 0.125, 0.1
    """
    with pytest.raises(ConfigError, match="multiple"):
        load_config(write_config(tmp_path, text))


def test_cli_success_and_exit_codes(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        """
        [experiment]
        name = validate-kernel
        seed = 3
        out = {out}
        [kernel]
        name = kuramoto
        kappa = 0.5
        [initial]
        law = gaussian
        [grid]
        T = 1.0
        h_fine = 0.25
        [validate-kernel]
        n_samples = 500
        """.format(out=tmp_path / "vk"),
    )
    assert main(["validate-kernel", "--config", str(cfg), "--no-plots"]) == 0
    out = capsys.readouterr().out
    assert "check conditions: PASS" in out
    assert (tmp_path / "vk" / "results.csv").exists()

    # requesting a different experiment than the config declares
    assert main(["chaos", "--config", str(cfg)]) == 2
    # nonexistent config
    assert main(["chaos", "--config", str(tmp_path / "nope.ini")]) == 2


def test_cli_numerical_failure_exit_code(tmp_path):
    cfg = write_config(
        tmp_path,
        """
        [experiment]
        name = picard
        seed = 3
        out = {out}
        [kernel]
        name = linear
        a = -1.0
        c = 0.5
        s = 0.2
        [initial]
        law = gaussian
        mean = 1.0
        cov = 0.04
        [grid]
        T = 1.0
        h_fine = 0.0625
        [picard]
        M_law = 32
        max_iter = 1
        """.format(out=tmp_path / "pic"),
    )
    assert main(["picard", "--config", str(cfg), "--no-plots"]) == 3


def test_cli_check_failure_exit_code(tmp_path):
    # The constant-diffusion linear kernel has squared strong error of order
    # h^2, so the configured slope band around 1 fails deterministically.
    cfg = write_config(
        tmp_path,
        """
        [experiment]
        name = euler-rate
        seed = 9
        replications = 2
        out = {out}
        [kernel]
        name = linear
        a = -1.0
        c = 0.5
        s = 0.2
        [initial]
        law = gaussian
        mean = 1.0
        cov = 0.04
        [grid]
        T = 1.0
        h_fine = 0.015625
        [euler-rate]
        N = 16
        h_list = 0.25, 0.125, 0.0625
        """.format(out=tmp_path / "er"),
    )
    assert main(["euler-rate", "--config", str(cfg), "--no-plots"]) == 0
    assert main(["euler-rate", "--config", str(cfg), "--no-plots", "--check"]) == 4


def test_threads_env_fallback(tmp_path, monkeypatch):
    from mvsde.cli import _resolve_threads

    monkeypatch.delenv("MVSDE_THREADS", raising=False)
    assert _resolve_threads(None, None) == 1
    assert _resolve_threads(4, None) == 4
    assert _resolve_threads(None, 3) == 3
    monkeypatch.setenv("MVSDE_THREADS", "2")
    assert _resolve_threads(None, None) == 2
    monkeypatch.setenv("MVSDE_THREADS", "banana")
    with pytest.raises(ConfigError):
        _resolve_threads(None, None)
