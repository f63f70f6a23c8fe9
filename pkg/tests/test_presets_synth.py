import numpy as np
import pytest

from logitcal.datamodel import validate_split
from logitcal.presets import BUILTIN_PRESETS, CONFIG_ENV, get_preset, load_presets
from logitcal.scoring import sigmoid
from logitcal.synth import SyntheticSpec, generate

# published hyperparameters: (ml lambda, ml bins, map lambda, map bins)
PUBLISHED = {
    "rgb": (1.6e-6, 22, 1e-8, 24),
    "rav": (1.3e-3, 20, 1.7e-5, 24),
    "rev": (1.3e-3, 23, 8e-5, 5),
    "second-3d": (5e-3, 22, 1e-4, 24),
}


@pytest.mark.parametrize("name", sorted(PUBLISHED))
def test_builtin_presets_exact(name):
    p = BUILTIN_PRESETS[name]
    assert (p.ml_smoothing, p.ml_bins, p.map_smoothing, p.map_bins) == PUBLISHED[name]
    assert p.temperature == 1.82
    ml, mp = p.config("ml"), p.config("MAP")
    assert (ml.method, ml.smoothing, ml.bins) == ("ML", PUBLISHED[name][0], PUBLISHED[name][1])
    assert (mp.method, mp.smoothing, mp.bins) == ("MAP", PUBLISHED[name][2], PUBLISHED[name][3])


def test_presets_read_only_and_unknown(tmp_path, monkeypatch):
    assert set(BUILTIN_PRESETS) == set(PUBLISHED)
    with pytest.raises(TypeError):
        BUILTIN_PRESETS["rgb"] = None
    with pytest.raises(KeyError):
        get_preset("thermal")
    cfg = tmp_path / "p.ini"
    cfg.write_text("[rgb]\nml_lambda=1\nml_bins=2\nmap_lambda=1\nmap_bins=2\ntemperature=1\n")
    with pytest.raises(ValueError, match="read-only"):
        load_presets(cfg)
    cfg.write_text("[mine]\nml_lambda=1e-3\nml_bins=12\nmap_lambda=1e-4\nmap_bins=8\ntemperature=1.5\n")
    monkeypatch.setenv(CONFIG_ENV, str(cfg))
    assert get_preset("mine").ml_bins == 12 and "rgb" in load_presets()
    cfg.write_text("[bad]\nml_lambda=1\n")
    with pytest.raises(ValueError, match="lacks"):
        load_presets(cfg)


def test_synth_default_shape_and_premise():
    spec = SyntheticSpec()
    split = generate(spec)
    tp = [r for r in split.test if r.match.is_tp]
    fp = [r for r in split.test if not r.match.is_tp]
    assert len(tp) >= 2000 and len(fp) >= 2000 and split.K == 3
    assert validate_split(split) == []
    # overconfident false positives under the sigmoid baseline
    fp_conf = [sigmoid(max(r.logits)) * r.objectness for r in fp]
    assert np.mean(fp_conf) > 0.7


def test_synth_deterministic_and_fp_only():
    a, b = generate(SyntheticSpec(seed=9)), generate(SyntheticSpec(seed=9))
    assert a == b
    assert generate(SyntheticSpec(seed=10)).test != a.test
    fp_only = generate(SyntheticSpec(n_tp=0, n_fp=50))
    assert len(fp_only.test) == 50 and not any(r.match.is_tp for r in fp_only.test)


def test_synth_invalid_spec():
    for bad in (dict(K=1), dict(n_tp=-1), dict(noise_sigma=0), dict(tp_objectness=(0.5, 1.5)),
                dict(seed=-1), dict(fp_logit_means=(1.0,))):
        with pytest.raises(ValueError):
            SyntheticSpec(**bad)
    assert SyntheticSpec.with_classes(5).fp_logit_means == (1.5,) * 5
