import numpy as np
import pytest

from hkgf.graphs import ConnectivityGraph, Subject
from hkgf.model import MissingModalityError, ModelSpec, init_params, prepare_inputs
from reference import euclidean_logits, model_logits


class TestModelSpec:
    def test_defaults(self):
        spec = ModelSpec()
        assert spec.fc_dim == 116 and spec.sc_dim == 348
        assert spec.encoder("coupling").dims[0] == 128
        assert not spec.encoder("fc").heads[0] > 1

    def test_attention_coupling_width(self):
        spec = ModelSpec("hkgat", n_rois=8)
        assert spec.encoder("fc").out_width == 64
        assert spec.encoder("coupling").dims[0] == 128
        assert spec.encoder("fc").bias is False

    def test_param_shapes_cover_init(self):
        spec = ModelSpec("hkgat", n_rois=8, hidden=4)
        params = init_params(spec, seed=1)
        assert {k: v.shape for k, v in params.items()} == spec.param_shapes()

    def test_init_deterministic(self):
        spec = ModelSpec(n_rois=8, hidden=4)
        a, b = init_params(spec, 3), init_params(spec, 3)
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    @pytest.mark.parametrize("kwargs", [{"backbone": "mlp"}, {"hidden": 0},
                                        {"backbone": "hkgat", "heads": (2,)}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelSpec(n_rois=8, **kwargs)

    def test_to_dict_round_trip(self):
        spec = ModelSpec("hkgat", n_rois=8)
        d = spec.to_dict()
        d["heads"] = tuple(d["heads"])
        assert ModelSpec(**d) == spec


class TestInputs:
    def test_missing_modality(self, small_cohort):
        s = small_cohort[0]
        lone = Subject("x", {"fc": s.graphs["fc"]})
        with pytest.raises(MissingModalityError):
            prepare_inputs([lone], ModelSpec(n_rois=8))

    def test_wrong_roi_count(self, small_cohort):
        with pytest.raises(ValueError, match="nodes"):
            prepare_inputs(small_cohort[:1], ModelSpec(n_rois=9))

    def test_wrong_width(self, small_cohort):
        s = small_cohort[0]
        g = ConnectivityGraph(s.graphs["fc"].adjacency, np.ones((8, 3)), "fc")
        with pytest.raises(ValueError, match="width"):
            prepare_inputs([Subject("x", {"fc": g, "sc": s.graphs["sc"]})], ModelSpec(n_rois=8))

    def test_take(self, small_cohort):
        inputs = prepare_inputs(small_cohort, ModelSpec(n_rois=8))
        sub = inputs.take([2, 0])
        assert sub.ids == [small_cohort[2].id, small_cohort[0].id]
        np.testing.assert_array_equal(sub.fc_x[1], inputs.fc_x[0])


class TestForward:
    @pytest.mark.parametrize("backbone", ["hkgcn", "hkgat"])
    def test_euclidean_degeneration(self, backbone, small_cohort):
        spec = ModelSpec(backbone, n_rois=8, hidden=8, lam=0.0, c=1e-8)
        params = init_params(spec, seed=2)
        ours = model_logits(spec, params, small_cohort[:4])
        for i, s in enumerate(small_cohort[:4]):
            np.testing.assert_allclose(ours[i], euclidean_logits(spec, params, s), atol=1e-5)

    @pytest.mark.parametrize("backbone", ["gcn", "gat"])
    def test_euclidean_backbones_are_exact(self, backbone, small_cohort):
        spec = ModelSpec(backbone, n_rois=8, hidden=8)
        params = init_params(spec, seed=2)
        ours = model_logits(spec, params, small_cohort[:3])
        for i, s in enumerate(small_cohort[:3]):
            ref = euclidean_logits(spec, params, s)
            # the head still log-maps its inputs; c = 1e-3 keeps that close to identity
            np.testing.assert_allclose(ours[i], ref, atol=1e-2)

    def test_lambda_changes_output(self, small_cohort):
        base = ModelSpec(n_rois=8, hidden=8, lam=0.0)
        params = init_params(base, seed=0)
        with_cos = ModelSpec(n_rois=8, hidden=8, lam=0.5)
        a = model_logits(base, params, small_cohort[:2])
        b = model_logits(with_cos, params, small_cohort[:2])
        assert np.abs(a - b).max() > 1e-3

    def test_batch_independence(self, small_cohort):
        spec = ModelSpec("hkgat", n_rois=8, hidden=8)
        params = init_params(spec, 0)
        together = model_logits(spec, params, small_cohort[:4])
        for i in range(4):
            np.testing.assert_allclose(together[i], model_logits(spec, params,
                                                                 small_cohort[i:i + 1])[0],
                                       rtol=1e-12, atol=1e-14)
