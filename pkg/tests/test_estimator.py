import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hkgf.estimator import HKGFClassifier, check_subjects
from hkgf.graphs import Subject, generate_synthetic_cohort
from hkgf.model import MissingModalityError

FAST = dict(hidden=4, hnn_hidden=4, epochs=2, batch_size=4, heads=(2, 1))


class TestCheckSubjects:
    def test_accepts_list(self, small_cohort):
        assert len(check_subjects(small_cohort)) == 12

    def test_rejects(self, small_cohort):
        with pytest.raises(TypeError):
            check_subjects(small_cohort[0])
        with pytest.raises(TypeError):
            check_subjects([np.zeros(3)])
        with pytest.raises(ValueError):
            check_subjects([])
        with pytest.raises(MissingModalityError):
            check_subjects([Subject("x", {"fc": small_cohort[0].graphs["fc"]})])
        other = generate_synthetic_cohort(2, 10, seed=0)
        with pytest.raises(ValueError, match="ROIs"):
            check_subjects([small_cohort[0], other[0]])
        with pytest.raises(ValueError, match="both classes"):
            check_subjects(small_cohort[::2], require_labels=True)


class TestClassifier:
    def test_params_and_clone(self):
        est = HKGFClassifier(backbone="hkgat", lam=0.1)
        params = clone(est).get_params()
        assert params["backbone"] == "hkgat" and params["lam"] == 0.1
        assert params["learning_rate"] == 1e-4 and params["epochs"] == 50

    @pytest.mark.parametrize("backbone", ["hkgcn", "hkgat"])
    def test_fit_predict(self, backbone, small_cohort):
        est = HKGFClassifier(backbone=backbone, **FAST).fit(small_cohort)
        proba = est.predict_proba(small_cohort)
        assert proba.shape == (12, 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)
        np.testing.assert_array_equal(est.predict(small_cohort), proba.argmax(axis=1))
        np.testing.assert_allclose(est.decision_function(small_cohort),
                                   np.log(proba[:, 1] / proba[:, 0]))
        assert len(est.history_) == 2
        assert 0 <= est.score(small_cohort, [s.label for s in small_cohort]) <= 1

    def test_y_overrides_labels(self, small_cohort):
        y = [1 - s.label for s in small_cohort]
        est = HKGFClassifier(**FAST).fit(small_cohort, y)
        assert est.classes_.tolist() == [0, 1]
        with pytest.raises(ValueError):
            HKGFClassifier(**FAST).fit(small_cohort, [0, 1])
        with pytest.raises(ValueError):
            HKGFClassifier(**FAST).fit(small_cohort, [2] * 12)

    def test_deterministic(self, small_cohort):
        a = HKGFClassifier(**FAST, random_state=3).fit(small_cohort).predict_proba(small_cohort)
        b = HKGFClassifier(**FAST, random_state=3).fit(small_cohort).predict_proba(small_cohort)
        np.testing.assert_array_equal(a, b)

    def test_not_fitted(self, small_cohort):
        with pytest.raises(NotFittedError):
            HKGFClassifier().predict(small_cohort)

    def test_roi_mismatch(self, small_cohort):
        est = HKGFClassifier(**FAST).fit(small_cohort)
        with pytest.raises(ValueError, match="ROIs"):
            est.predict(generate_synthetic_cohort(2, 10, seed=0))

    def test_embed_and_attention(self, small_cohort):
        est = HKGFClassifier(backbone="hkgat", **FAST).fit(small_cohort)
        assert est.embed(small_cohort[:3]).shape == (3, 8, 4)
        att = est.attention(small_cohort[:3], layer=0)
        assert att.shape == (3, 2, 8, 8)
        np.testing.assert_allclose(att.sum(axis=-1), 1.0)
        with pytest.raises(ValueError):
            est.attention(small_cohort, layer=2)

    def test_attention_needs_attention_backbone(self, small_cohort):
        est = HKGFClassifier(**FAST).fit(small_cohort)
        with pytest.raises(ValueError, match="no attention"):
            est.attention(small_cohort)
