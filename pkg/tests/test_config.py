import pytest

from zdjscc.errors import ConfigError
from zdjscc.experiment.cli import preset_names, preset_text
from zdjscc.experiment.config import METHODS, apply_overrides, load_config

BASE = """
[experiment]
setting = side_info
method = linear, opta
seed = 4

[source]
rho = 0.5

[power]
mode = lambda
lam1 = 0.01
"""


def test_minimal_config():
    cfg = load_config(text=BASE)
    assert cfg.setting == "side_info"
    assert cfg.methods == ("linear", "opta")
    assert cfg.source.rho == 0.5
    assert cfg.anneal.rng_seed == 4


def test_method_all_expands_in_order():
    cfg = load_config(text=BASE.replace("linear, opta", "all"))
    assert cfg.methods == METHODS


def test_overrides_take_precedence():
    cfg = load_config(text=BASE, overrides=["source.rho=0.25", "anneal.alpha=0.5", "grid.spacing=0.1"])
    assert cfg.source.rho == 0.25
    assert cfg.anneal.alpha == 0.5
    assert cfg.spacing == 0.1


@pytest.mark.parametrize(
    "override,field",
    [
        ("source.rho=1.5", "source.rho"),
        ("source.colour=red", "source.colour"),
        ("anneal.alpha=2", "anneal"),
        ("anneal.nonsense=1", "anneal.nonsense"),
        ("power.lam1=-1", "power.lam1"),
        ("experiment.method=magic", "experiment.method"),
        ("experiment.setting=quantum", "experiment.setting"),
        ("grid.spacing=abc", "grid.spacing"),
        ("validate.samples=10", "validate.samples"),
        ("power.mode=total_calibrate", "power"),
    ],
)
def test_errors_name_the_field(override, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        load_config(text=BASE, overrides=[override])


def test_override_syntax_errors():
    with pytest.raises(ConfigError):
        apply_overrides({}, ["no_equals_sign"])
    with pytest.raises(ConfigError):
        apply_overrides({}, ["nosection=1"])


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(text=BASE + "\n[extra]\nx = 1\n")


def test_calibration_needs_targets():
    with pytest.raises(ConfigError, match="power.csnr1"):
        load_config(text=BASE, overrides=["power.mode=calibrate"])
    with pytest.raises(ConfigError, match="power.csnr2"):
        load_config(
            text=BASE,
            overrides=["experiment.setting=distributed_function", "power.mode=calibrate", "power.csnr1=10"],
        )


def test_mixture_needs_matching_weights():
    with pytest.raises(ConfigError, match="mix_weights"):
        load_config(text=BASE, overrides=["source.family=mixture", "source.centers=0 0; 1 1", "source.mix_weights=1"])


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(path=tmp_path / "absent.ini")


@pytest.mark.parametrize("name", ["fig3", "fig5", "fig9", "table1", "fig6-sweep"])
def test_presets_parse(name):
    assert name in preset_names()
    cfg = load_config(text=preset_text(name))
    assert cfg.name == name


def test_sweep_preset_lists_targets():
    cfg = load_config(text=preset_text("fig6-sweep"))
    assert cfg.sweep_csnr == (6.0, 10.0, 14.0, 18.0)
