import pytest

from fieldint.cli.config import DEFAULTS, load_config
from fieldint.core.spaces import Boundary
from fieldint.utils.errors import ConfigError


def _write(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_only():
    cfg = load_config()
    assert cfg.seed == int(DEFAULTS["run"]["seed"])
    assert cfg.mc_seed == cfg.seed
    assert cfg.workers == 1
    spec = cfg.grid_spec()
    assert spec.extent == (4,)
    assert spec.boundary == (Boundary.DIRICHLET,)


def test_defaults_match_acceptance_runs():
    cfg = load_config()
    assert cfg.samples == 1_000_000
    assert cfg.get_float("mc", "band") == 3.0
    assert cfg.get_float("mc", "min_coverage") == 0.99
    assert cfg.get_int("lattice", "seeds") == 50
    assert cfg.get_int("comb", "instances") == 20
    # 8 x 8 的 Dirichlet 外框留下 6 x 6 个内部格点
    assert cfg.get_int("lattice", "spatial_sites") == 8
    assert cfg.get_int("lattice", "time_steps") == 7


def test_file_overrides_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, "[grid]\ndims = 5, 6\nspacing = 0.5, 0.25\n[mc]\nseed = 99\n"))
    spec = cfg.grid_spec()
    assert spec.extent == (5, 6)
    assert spec.spacing == (0.5, 0.25)
    assert cfg.mc_seed == 99


def test_command_line_overrides(tmp_path):
    cfg = load_config(_write(tmp_path, "[run]\nseed = 5\n[mc]\nseed = 99\n"), seed=42, workers=4)
    assert cfg.seed == 42
    assert cfg.mc_seed == 42
    assert cfg.workers == 4


@pytest.mark.parametrize("text", [
    "[nonsense]\nkey = 1\n",
    "[grid]\ncolour = red\n",
    "not an ini file",
])
def test_unknown_or_malformed_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, text))


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"))


def test_typed_getters(tmp_path):
    cfg = load_config(_write(tmp_path, "[mc]\nsamples = -5\n[integrator]\ns = 1+0.5j\n"))
    with pytest.raises(ConfigError):
        cfg.samples
    assert cfg.get_complex("integrator", "s") == 1 + 0.5j
    assert cfg.get_int_list("lattice", "seeds") == [50]
    assert cfg.get_float_list("localization", "W") == [0.5, 1.0, 3.0]
    with pytest.raises(ConfigError):
        cfg.get_float("grid", "boundary")
    with pytest.raises(ConfigError):
        cfg.get("grid", "colour")


def test_config_hash_is_canonical(tmp_path):
    assert load_config().config_hash() == load_config().config_hash()
    changed = load_config(_write(tmp_path, "[run]\nseed = 1\n"))
    assert changed.config_hash() != load_config().config_hash()
    assert load_config(seed=1).config_hash() == changed.config_hash()


def test_negative_overrides_rejected():
    with pytest.raises(ConfigError):
        load_config(seed=-1)
    with pytest.raises(ConfigError):
        load_config(workers=0)
