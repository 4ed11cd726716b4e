"""Matrix CSV files, cohort manifests and graph files.

Matrices are UTF-8 CSV without a header, one row per line. A cohort
manifest is a JSON object ``{"subjects": [...]}`` whose entries are::

    {"id": ..., "label": 0 | 1,
     "fc_timeseries_path" | "fc_matrix_path": ...,
     "sc_fn_path": ..., "sc_fa_path": ..., "sc_fl_path": ...}

with paths relative to the manifest's directory.
"""

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .graphs import (ConnectivityGraph, Subject, build_fc_graph, build_sc_graph,
                     fc_graph_from_correlation)
from .training import atomic_write_bytes

SUBJECT_KEYS = {"id", "label", "fc_timeseries_path", "fc_matrix_path", "sc_fn_path",
                "sc_fa_path", "sc_fl_path"}
MANIFEST_KEYS = {"subjects", "keep_fraction", "binary"}


class ParseError(ValueError):
    """Malformed input file; the message names the file and position."""


def format_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite values")
    return "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in m)


def save_matrix(path, m):
    atomic_write_bytes(path, format_matrix(m).encode("utf-8"))


def parse_matrix(text, source="<string>"):
    rows = []
    width = None
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(cell.strip() == "" for cell in row):
            raise ParseError(f"{source}: line {line_no}: empty row")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"{source}: line {line_no}: expected {width} columns, got {len(row)}")
        values = []
        for col_no, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{source}: line {line_no}, column {col_no}: "
                                 f"not a number: {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"{source}: line {line_no}, column {col_no}: non-finite value")
            values.append(v)
        rows.append(values)
    if not rows:
        raise ParseError(f"{source}: no data")
    return np.array(rows)


def load_matrix(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"matrix file not found: {path}")
    return parse_matrix(path.read_text(encoding="utf-8"), str(path))


def _read_manifest(manifest_path):
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{manifest_path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("subjects"), list):
        raise ParseError(f"{manifest_path}: expected an object with a 'subjects' list")
    unknown = set(doc) - MANIFEST_KEYS
    if unknown:
        raise ParseError(f"{manifest_path}: unknown keys {sorted(unknown)}")
    return manifest_path, doc


def _subject_from_entry(entry, base, keep_fraction, binary, where):
    if not isinstance(entry, dict):
        raise ParseError(f"{where}: subject entry must be an object")
    unknown = set(entry) - SUBJECT_KEYS
    if unknown:
        raise ParseError(f"{where}: unknown keys {sorted(unknown)}")
    for key in ("id", "label", "sc_fn_path", "sc_fa_path", "sc_fl_path"):
        if key not in entry:
            raise ParseError(f"{where}: missing {key!r}")
    fc_keys = [k for k in ("fc_timeseries_path", "fc_matrix_path") if k in entry]
    if len(fc_keys) != 1:
        raise ParseError(f"{where}: give exactly one of fc_timeseries_path, fc_matrix_path")
    if entry["label"] not in (0, 1) or isinstance(entry["label"], bool):
        raise ParseError(f"{where}: label must be 0 or 1")

    def matrix(key):
        return load_matrix(base / entry[key])

    if fc_keys[0] == "fc_timeseries_path":
        fc = build_fc_graph(matrix("fc_timeseries_path"), keep_fraction, binary)
    else:
        fc = fc_graph_from_correlation(matrix("fc_matrix_path"), keep_fraction, binary)
    sc = build_sc_graph(matrix("sc_fn_path"), matrix("sc_fa_path"), matrix("sc_fl_path"))
    return Subject(str(entry["id"]), {"fc": fc, "sc": sc}, int(entry["label"]))


def load_cohort(manifest_path, keep_fraction=None, binary=None):
    """Subjects listed in a manifest, sorted by id.

    ``keep_fraction`` / ``binary`` default to the manifest's values, then to
    0.5 / weighted edges.
    """
    manifest_path, doc = _read_manifest(manifest_path)
    keep_fraction = doc.get("keep_fraction", 0.5) if keep_fraction is None else keep_fraction
    binary = doc.get("binary", False) if binary is None else binary
    base = manifest_path.parent
    subjects = []
    for k, entry in enumerate(doc["subjects"]):
        where = f"{manifest_path}: subject #{k}"
        if isinstance(entry, dict) and "id" in entry:
            where = f"{manifest_path}: subject {entry['id']!r}"
        subjects.append(_subject_from_entry(entry, base, keep_fraction, binary, where))
    ids = [s.id for s in subjects]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{manifest_path}: duplicate subject ids")
    if not subjects:
        raise ParseError(f"{manifest_path}: no subjects")
    return sorted(subjects, key=lambda s: s.id)


def write_cohort(subjects, out_dir):
    """Write each subject's FC correlation matrix and FN/FA/FL blocks plus a manifest.

    The FC file holds the correlation features (the manifest records
    ``keep_fraction`` 0.5); SC blocks are split back out of the ``N x 3N``
    feature matrix. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in sorted(subjects, key=lambda s: s.id):
        n = s.n_rois
        sc = s.graphs["sc"].features
        files = {
            "fc_matrix_path": (f"{s.id}_fc.csv", s.graphs["fc"].features),
            "sc_fn_path": (f"{s.id}_fn.csv", sc[:, :n]),
            "sc_fa_path": (f"{s.id}_fa.csv", sc[:, n:2 * n]),
            "sc_fl_path": (f"{s.id}_fl.csv", sc[:, 2 * n:]),
        }
        entry = {"id": s.id, "label": int(s.label)}
        for key, (name, m) in files.items():
            save_matrix(out_dir / name, m)
            entry[key] = name
        entries.append(entry)
    manifest = out_dir / "manifest.json"
    doc = {"keep_fraction": 0.5, "subjects": entries}
    atomic_write_bytes(manifest, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
    return manifest


def save_graph(directory, graph):
    """``<modality>_adjacency.csv`` and ``<modality>_features.csv`` in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_matrix(directory / f"{graph.modality}_adjacency.csv", graph.adjacency)
    save_matrix(directory / f"{graph.modality}_features.csv", graph.features)


def load_graph(directory, modality):
    directory = Path(directory)
    return ConnectivityGraph(load_matrix(directory / f"{modality}_adjacency.csv"),
                             load_matrix(directory / f"{modality}_features.csv"), modality)


def write_json(path, obj):
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))
