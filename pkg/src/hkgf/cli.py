"""Command-line interface.

Exit status is 0 on success, 1 for invalid input and 2 for numerical
failures (non-finite values, failed gradient check). Errors are reported on
stderr as one line: ``hkgf-error: <validation|numerical>: <message>``.
"""

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .cost import format_cost_table, cost_table
from .evaluation import (cross_validate, discriminative_connections_attention,
                         discriminative_connections_correlation)
from .graphs import generate_synthetic_cohort
from .io import ParseError, load_cohort, save_graph, write_cohort, write_json
from .kernels import kernel_convergence
from .model import ModelSpec
from .training import (HKGFModel, NumericalError, atomic_write_bytes, embed, gradcheck,
                       model_from_checkpoint, save_checkpoint, train)

VALIDATION, NUMERICAL = 1, 2


class UsageError(ValueError):
    pass


class GradcheckFailure(ArithmeticError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _log(msg):
    print(msg, file=sys.stderr)


# Commands -------------------------------------------------------------------


def cmd_synth(args):
    if args.n_subjects % 2:
        raise UsageError(f"--n-subjects must be even, got {args.n_subjects}")
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"{out} is not empty; pass --force to overwrite")
    cohort = generate_synthetic_cohort(args.n_subjects, args.rois, args.effect, args.seed)
    manifest = write_cohort(cohort, out)
    print(manifest)
    return 0


def cmd_build_graphs(args):
    subjects = load_cohort(args.manifest, keep_fraction=args.keep_fraction, binary=args.binary)
    out = Path(args.out)
    for s in subjects:
        for g in s.graphs.values():
            save_graph(out / s.id, g)
    write_json(out / "subjects.json", [{"id": s.id, "label": s.label} for s in subjects])
    print(f"wrote graphs for {len(subjects)} subjects to {out}")
    return 0


def _run_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg.override({
        "manifest": args.manifest, "output": args.out, "seed": args.seed,
        "keep_fraction": getattr(args, "keep_fraction", None),
        "model.backbone": args.backbone, "model.hidden": args.hidden,
        "model.lam": args.lam, "model.c": args.curvature,
        "model.heads": tuple(args.heads) if args.heads else None,
        "train.learning_rate": args.lr, "train.weight_decay": args.weight_decay,
        "train.batch_size": args.batch_size, "train.epochs": args.epochs,
        "cv.folds": getattr(args, "folds", None), "cv.repeats": getattr(args, "repeats", None),
        "cv.seeds": getattr(args, "seeds", None),
    })
    if cfg.manifest is None:
        raise UsageError("no manifest given (--manifest or config 'manifest')")
    if cfg.output is None:
        raise UsageError("no output directory given (--out or config 'output')")
    return cfg


def cmd_train(args):
    cfg = _run_config(args)
    subjects = load_cohort(cfg.manifest, keep_fraction=cfg.keep_fraction)
    spec = cfg.model.spec(subjects[0].n_rois)
    model = HKGFModel.create(spec, cfg.seed)
    log = (lambda e, loss: _log(f"epoch {e + 1}: loss {loss:.6f}")) if args.verbose else None
    history = train(model, subjects, cfg.train.config(cfg.seed), log=log)
    if not np.all(np.isfinite(history)):
        raise NumericalError("training loss became non-finite")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", model, extra={"config": cfg.to_dict()})
    write_json(out / "history.json", {"epoch_loss": history})
    print(f"final loss {history[-1]:.6f}" if history else "no epochs run")
    return 0


def cmd_cv(args):
    cfg = _run_config(args)
    subjects = load_cohort(cfg.manifest, keep_fraction=cfg.keep_fraction)
    spec = cfg.model.spec(subjects[0].n_rois)
    report = cross_validate(subjects, spec, cfg.train.config(cfg.seed), cfg.cv.plan(cfg.seed),
                            workers=args.workers)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(out / "metrics.json", report.to_json().encode("utf-8"))
    print(report.format_table())
    return 0


def cmd_kernel_bench(args):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["features", "mean_abs_error"])
    for m, err in kernel_convergence(args.kernel, args.features, args.pairs, args.dim, args.seed,
                                     oracle_samples=args.oracle_samples):
        writer.writerow([m, f"{err:.17g}"])
    if args.out:
        atomic_write_bytes(args.out, buf.getvalue().encode("utf-8"))
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_gradcheck(args):
    cohort = generate_synthetic_cohort(2, args.rois, 1.0, args.seed)
    spec = ModelSpec(backbone=args.backbone, n_rois=args.rois)
    model = HKGFModel.create(spec, args.seed)
    if args.fault is not None and args.fault not in model.store.params:
        raise UsageError(f"--fault names no parameter: {args.fault!r}")
    start = time.perf_counter()
    report = gradcheck(model, cohort[1], tolerance=args.tolerance, fault=args.fault)
    print(report.format())
    print(f"worst relative error {report.worst:.3e} ({time.perf_counter() - start:.1f} s)")
    if not report.passed:
        failed = [e.name for e in report.entries if not e.passed]
        raise GradcheckFailure(f"gradient check failed for {', '.join(failed)}")
    return 0


def cmd_flops(args):
    if args.json:
        keys = ("method", "modality", "params", "macs", "published_params_k", "published_mmac")
        print(json.dumps([dict(zip(keys, row)) for row in cost_table()], indent=2))
    else:
        print(format_cost_table())
    return 0


def cmd_discriminative(args):
    model, _ = model_from_checkpoint(args.checkpoint)
    subjects = load_cohort(args.manifest, keep_fraction=args.keep_fraction)
    labels = np.array([s.label for s in subjects])
    if args.method == "attention":
        if not model.spec.is_attention:
            raise UsageError(f"backbone {model.spec.backbone!r} has no attention weights")
        record = {}
        embed(model, subjects, record=record)
        found = discriminative_connections_attention(record["coupling_attention"][args.layer],
                                                     labels, args.top_k)
    else:
        found = discriminative_connections_correlation(embed(model, subjects), labels, args.top_k)
    text = json.dumps([c.to_dict() for c in found], indent=2) + "\n"
    if args.out:
        atomic_write_bytes(args.out, text.encode("utf-8"))
    sys.stdout.write(text)
    return 0


# Parser ---------------------------------------------------------------------


def _model_flags(p):
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--manifest", help="cohort manifest (JSON)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--keep-fraction", type=float)
    p.add_argument("--backbone", choices=("hkgcn", "hkgat", "gcn", "gat"))
    p.add_argument("--hidden", type=int)
    p.add_argument("--heads", type=_ints)
    p.add_argument("--lam", type=float)
    p.add_argument("--curvature", type=float, help="curvature magnitude c")
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)


def build_parser():
    parser = _Parser(prog="hkgf", description="Hyperbolic kernel graph fusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic two-class cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--n-subjects", type=int, default=200)
    p.add_argument("--rois", type=int, default=32)
    p.add_argument("--effect", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-graphs", help="build FC/SC graph files from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keep-fraction", type=float)
    p.add_argument("--binary", action="store_true", default=None)
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("train", help="train one model on a cohort")
    _model_flags(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="repeated stratified cross-validation")
    _model_flags(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--workers", type=int, help="parallel folds (default: HKGF_WORKERS or 1)")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("kernel-bench", help="random-feature kernel error against references")
    p.add_argument("--kernel", choices=("hrbf", "hac"), default="hrbf")
    p.add_argument("--features", type=_ints, default=[64, 256, 1024, 4096])
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle-samples", type=int, default=1_000_000)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_kernel_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--backbone", choices=("hkgcn", "hkgat", "gcn", "gat"), default="hkgcn")
    p.add_argument("--rois", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--fault", help="scale this parameter's analytic gradient by 1.5")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("flops", help="parameter and MAC table")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("discriminative", help="rank discriminative ROI pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=("correlation", "attention"), default="correlation")
    p.add_argument("--top-k", type=int, default=15)
    p.add_argument("--layer", type=int, default=0, help="coupling layer for --method attention")
    p.add_argument("--keep-fraction", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_discriminative)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (NumericalError, GradcheckFailure, FloatingPointError) as e:
        _log(f"hkgf-error: numerical: {e}")
        return NUMERICAL
    except (UsageError, ConfigError, ParseError, FileNotFoundError, KeyError, ValueError,
            TypeError) as e:
        msg = str(e).replace("\n", " ")
        _log(f"hkgf-error: validation: {msg}")
        return VALIDATION


if __name__ == "__main__":
    sys.exit(main())
