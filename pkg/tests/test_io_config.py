import json

import numpy as np
import pytest

from hkgf.config import ConfigError, RunConfig
from hkgf.graphs import ConnectivityGraph
from hkgf.io import (ParseError, format_matrix, load_cohort, load_graph, load_matrix,
                     parse_matrix, save_graph, save_matrix, write_cohort)


class TestMatrixFiles:
    def test_round_trip_exact(self, tmp_path, rng):
        m = rng.normal(size=(4, 3)) * 10.0 ** rng.integers(-20, 20, size=(4, 3))
        save_matrix(tmp_path / "m.csv", m)
        np.testing.assert_array_equal(load_matrix(tmp_path / "m.csv"), m)

    def test_ragged_row(self):
        with pytest.raises(ParseError, match="line 2: expected 2 columns, got 3"):
            parse_matrix("1,2\n3,4,5\n", "x.csv")

    def test_bad_cell(self):
        with pytest.raises(ParseError, match="line 1, column 2: not a number"):
            parse_matrix("1,abc\n")
        with pytest.raises(ParseError, match="column 1: non-finite"):
            parse_matrix("nan,1\n")

    def test_empty(self):
        with pytest.raises(ParseError):
            parse_matrix("")
        with pytest.raises(ParseError, match="empty row"):
            parse_matrix("1,2\n\n3,4\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            load_matrix(tmp_path / "nope.csv")

    def test_format_rejects(self):
        with pytest.raises(ValueError):
            format_matrix(np.ones(3))
        with pytest.raises(ValueError):
            format_matrix(np.array([[np.inf]]))

    def test_graph_round_trip(self, tmp_path, rng):
        g = ConnectivityGraph(np.eye(3), rng.normal(size=(3, 2)), "sc")
        save_graph(tmp_path, g)
        back = load_graph(tmp_path, "sc")
        np.testing.assert_array_equal(back.features, g.features)


class TestCohortFiles:
    def test_round_trip(self, tmp_path, small_cohort):
        manifest = write_cohort(small_cohort, tmp_path)
        back = load_cohort(manifest)
        assert [s.id for s in back] == [s.id for s in small_cohort]
        for a, b in zip(back, small_cohort):
            assert a.label == b.label
            for m in ("fc", "sc"):
                np.testing.assert_array_equal(a.graphs[m].features, b.graphs[m].features)
                np.testing.assert_array_equal(a.graphs[m].adjacency, b.graphs[m].adjacency)

    def test_timeseries_entry(self, tmp_path, rng):
        ts = rng.normal(size=(4, 30))
        save_matrix(tmp_path / "ts.csv", ts)
        for name in ("fn", "fa", "fl"):
            save_matrix(tmp_path / f"{name}.csv", np.ones((4, 4)))
        doc = {"subjects": [{"id": "a", "label": 1, "fc_timeseries_path": "ts.csv",
                             "sc_fn_path": "fn.csv", "sc_fa_path": "fa.csv",
                             "sc_fl_path": "fl.csv"}]}
        (tmp_path / "m.json").write_text(json.dumps(doc))
        (s,) = load_cohort(tmp_path / "m.json", keep_fraction=1.0, binary=True)
        np.testing.assert_allclose(s.graphs["fc"].features, np.corrcoef(ts), atol=1e-12)
        np.testing.assert_array_equal(s.graphs["fc"].adjacency, 1 - np.eye(4))

    def _manifest(self, tmp_path, small_cohort, edit):
        manifest = write_cohort(small_cohort[:2], tmp_path)
        doc = json.loads(manifest.read_text())
        edit(doc)
        manifest.write_text(json.dumps(doc))
        return manifest

    @pytest.mark.parametrize("edit,match", [
        (lambda d: d.update(extra=1), "unknown keys"),
        (lambda d: d["subjects"][0].update(color="red"), "unknown keys"),
        (lambda d: d["subjects"][0].pop("sc_fa_path"), "missing 'sc_fa_path'"),
        (lambda d: d["subjects"][0].update(fc_timeseries_path="x.csv"), "exactly one"),
        (lambda d: d["subjects"][0].update(label=3), "label"),
        (lambda d: d["subjects"][1].update(id=d["subjects"][0]["id"]), "duplicate"),
        (lambda d: d.update(subjects=[]), "no subjects"),
    ])
    def test_manifest_errors(self, tmp_path, small_cohort, edit, match):
        with pytest.raises(ParseError, match=match):
            load_cohort(self._manifest(tmp_path, small_cohort, edit))

    def test_missing_referenced_file(self, tmp_path, small_cohort):
        manifest = self._manifest(tmp_path, small_cohort,
                                  lambda d: d["subjects"][0].update(sc_fn_path="gone.csv"))
        with pytest.raises(FileNotFoundError, match="gone.csv"):
            load_cohort(manifest)

    def test_invalid_json(self, tmp_path):
        (tmp_path / "m.json").write_text("{\n  oops")
        with pytest.raises(ParseError, match="line 2"):
            load_cohort(tmp_path / "m.json")


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.model.hidden == 64 and cfg.model.lam == 0.01 and cfg.model.c == 1e-3
        assert cfg.train.learning_rate == 1e-4 and cfg.train.batch_size == 128
        assert cfg.cv.plan(7).seeds == (7, 8, 9, 10, 11)

    def test_from_dict_and_back(self):
        d = {"model": {"backbone": "hkgat", "heads": [2, 1]}, "train": {"epochs": 3},
             "cv": {"folds": 3, "repeats": 2, "seeds": [5, 6]}, "seed": 4}
        cfg = RunConfig.from_dict(d)
        assert cfg.model.spec(8).heads == (2, 1)
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("d", [{"modle": {}}, {"model": {"width": 3}},
                                   {"model": {"backbone": "mlp"}}, {"train": []},
                                   {"keep_fraction": 0}, {"cv": {"repeats": 2, "seeds": [1]}}])
    def test_rejects(self, d):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(d)

    def test_override(self):
        cfg = RunConfig().override({"model.hidden": 8, "train.epochs": None, "seed": 3})
        assert cfg.model.hidden == 8 and cfg.train.epochs == 50 and cfg.seed == 3
        with pytest.raises(ConfigError):
            RunConfig().override({"model.nope": 1})
        with pytest.raises(ConfigError):
            RunConfig().override({"train.learning_rate": -1.0})

    def test_load(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"model": {"lam": 0.5}}))
        assert RunConfig.load(p).model.lam == 0.5
        p.write_text("{bad")
        with pytest.raises(ConfigError, match="line 1"):
            RunConfig.load(p)
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.load(tmp_path / "missing.json")
