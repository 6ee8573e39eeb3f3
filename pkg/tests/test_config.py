import json

import pytest

from foamck.config import RunConfig, load_config
from foamck.errors import PreconditionError
from foamck.expr import DomainBox


def test_defaults_validate():
    assert RunConfig().validate() == RunConfig()


@pytest.mark.parametrize("changes", [{"sigma": 1.0}, {"h": 0.0}, {"order": 1}, {"workers": 0},
                                     {"epsilon": -0.1}, {"tail_budget": 0}])
def test_invalid_values_rejected(changes):
    with pytest.raises(PreconditionError):
        RunConfig().replace(**changes).validate()


def test_resolution_must_fit_domain():
    with pytest.raises(PreconditionError):
        RunConfig(h=0.5).validate(DomainBox((0, 0), (1, 0.4)))


def test_string_values_are_coerced():
    cfg = RunConfig().updated({"order": "14", "tile-y": "0.02", "tol": "1e-5"})
    assert (cfg.order, cfg.tile_y, cfg.tol) == (14, 0.02, 1e-5)


def test_unknown_or_bad_keys_rejected():
    with pytest.raises(PreconditionError):
        RunConfig().updated({"speed": 3})
    with pytest.raises(PreconditionError):
        RunConfig().updated({"order": "2.5"})


@pytest.mark.parametrize("name, text", [
    ("c.json", json.dumps({"order": 9, "sigma": 0.5})),
    ("c.yaml", "order: 9\nsigma: 0.5\n"),
    ("c.txt", "# comment\norder 9\nsigma 0.5\n"),
])
def test_config_files(tmp_path, name, text):
    if name.endswith("yaml"):
        pytest.importorskip("yaml")
    path = tmp_path / name
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.order == 9 and cfg.sigma == 0.5
