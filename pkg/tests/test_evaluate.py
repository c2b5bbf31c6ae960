"""Tests for test-set inference and the per-class metrics report."""

import numpy as np
import pytest

from triad.evaluate import OracleMismatchError, evaluate, infer_maps
from triad.model import Model, ModelDims
from triad.scoring import FusionWeights
from triad.synthdata import SynthConfig, gen_dataset

DIMS = ModelDims(d_rgb=5, d_3d=7, d_text=8, n_experts=3, top_k=2,
                 dropout_rate=0.0)


def _data(classes=("bagel", "carrot"), seed=0):
    cfg = SynthConfig(classes=list(classes), n_train=2, n_test=4, height=8,
                      width=8, d_latent=3, d_rgb=DIMS.d_rgb, d_3d=DIMS.d_3d)
    return gen_dataset(cfg, seed=seed)


def test_infer_maps_shape_and_invalid_zeroing():
    _, test = _data(classes=("bagel",))
    model = Model(DIMS, seed=0)
    s = test[0]
    final, score = infer_maps(model, s, FusionWeights())
    assert final.shape == s.mask.shape
    assert (final[~s.mask] == 0.0).all()
    assert (final >= 0.0).all()
    assert score == final[s.mask].max()


def test_infer_maps_deterministic():
    _, test = _data(classes=("bagel",))
    model = Model(DIMS, seed=1)
    a, sa = infer_maps(model, test[0], FusionWeights())
    b, sb = infer_maps(model, test[0], FusionWeights())
    np.testing.assert_array_equal(a, b)
    assert sa == sb


def test_evaluate_report_structure():
    _, test = _data()
    model = Model(DIMS, seed=2)
    report = evaluate(model, test, FusionWeights(), [0.3, 0.01])
    assert sorted(report["classes"]) == ["bagel", "carrot"]
    assert report["sample_counts"] == {"bagel": 4, "carrot": 4}
    for entry in report["classes"].values():
        assert set(entry) == {"i_auroc", "p_auroc", "aupro@0.3", "aupro@0.01"}
        for v in entry.values():
            assert 0.0 <= v <= 1.0
    for key, v in report["average"].items():
        per = [report["classes"][c][key] for c in report["classes"]]
        assert v == pytest.approx(np.mean(per), abs=1e-12)


def test_evaluate_oracle_check_passes_on_real_model():
    _, test = _data(classes=("bagel",), seed=3)
    model = Model(DIMS, seed=3)
    evaluate(model, test, FusionWeights(), [0.3], oracle_check=True)


def test_evaluate_oracle_check_catches_corruption(monkeypatch):
    _, test = _data(classes=("bagel",), seed=4)
    model = Model(DIMS, seed=4)
    import triad.evaluate as ev

    def wrong_auroc(s):
        return 0.123

    monkeypatch.setattr(ev, "auroc", wrong_auroc)
    with pytest.raises(OracleMismatchError):
        ev.evaluate(model, test, FusionWeights(), [0.3], oracle_check=True)
