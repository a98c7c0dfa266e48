"""``nmflab`` command-line interface: train, predict, cv, evaluate."""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import persist
from .classify import (
    LabelEncoding,
    UnknownLabelError,
    assign_bases,
    class_order,
    confusion_matrix,
    encode_hard,
    encode_soft,
    encode_unlabeled,
    predict_samples,
)
from .dataset import Dataset, DatasetError, apply_scaling, load_csv, resolve
from .kernel import (
    DegenerateInputError,
    DesignKind,
    DesignSpec,
    KernelDesign,
    beta_grid,
    fine_beta_grid,
    median_heuristic_beta,
    select_landmarks,
)
from .matcore import DomainError, ShapeError
from .modelsel import (
    Criterion,
    DegenerateStratificationError,
    SplitSpec,
    grid_search,
    kfold_cv_kernel,
    nmflab_pipeline,
    repeated_evaluation,
    stratified_split,
)
from .trinmf import ConfigError, InitMode, TriNmfConfig, fit, reconstruct

logger = logging.getLogger("nmflab")

DESIGNS = {"direct": DesignKind.DIRECT, "kernel": DesignKind.GAUSSIAN_FULL,
           "nystrom": DesignKind.GAUSSIAN_NYSTROM}


class UsageError(ValueError):
    pass


class FeatureMismatchError(ValueError):
    pass


ERROR_CODES = [
    (UsageError, "E_USAGE"),
    (FeatureMismatchError, "E_FEATURE"),
    (persist.ModelFormatError, "E_MODEL"),
    (DatasetError, "E_DATA"),
    (UnknownLabelError, "E_LABEL"),
    (ShapeError, "E_SHAPE"),
    (DomainError, "E_DOMAIN"),
    (ConfigError, "E_CONFIG"),
    (DegenerateInputError, "E_DEGENERATE"),
    (DegenerateStratificationError, "E_DEGENERATE"),
    (OSError, "E_IO"),
    (ValueError, "E_VALUE"),
    (RuntimeError, "E_RUNTIME"),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# shared helpers


def _dataset(args, *, scale: bool, need_labels: bool = True) -> Dataset:
    path, label_col, id_col = resolve(args.data, args.data_dir)
    label_col = args.label_column or label_col
    id_col = args.id_column or id_col
    if need_labels and label_col is None:
        raise UsageError("--label-column is required for this dataset")
    return load_csv(path, label_col, id_column=id_col, scale=scale,
                    unlabeled_token=getattr(args, "unlabeled", None))


def _class_names(args, ds: Dataset) -> tuple[str, ...]:
    if args.classes:
        return tuple(c.strip() for c in args.classes.split(","))
    return class_order([x for x in ds.labels if x is not None])


def _label_matrix(labels, names, soft_r: float) -> LabelEncoding:
    """Soft/hard columns for labeled samples, uniform columns for the rest."""
    cols = np.empty((len(names), len(labels)))
    known = [i for i, x in enumerate(labels) if x is not None]
    unknown = [i for i, x in enumerate(labels) if x is None]
    if known:
        cols[:, known] = encode_soft([labels[i] for i in known], names, soft_r).columns
    if unknown:
        cols[:, unknown] = encode_unlabeled(len(unknown), names).columns
    return LabelEncoding(tuple(names), cols)


def _rank(args, default: int) -> int:
    return default if args.rank is None else args.rank


def _config(args, rank: int, n_rows: int) -> TriNmfConfig:
    """Solver settings; identity start when the rank matches Y's row count."""
    mode = args.init or ("identity" if rank == n_rows else "kmeans")
    return TriNmfConfig(rank_q=rank, max_iter=args.max_iter, rel_tol=args.tol,
                        init_mode=InitMode(mode), seed=args.seed)


def _grid(spec: str, samples: np.ndarray, seed: int) -> list[float]:
    if spec in ("decade", "fine"):
        bmed = median_heuristic_beta(samples, seed=seed)
        return beta_grid(bmed) if spec == "decade" else fine_beta_grid(bmed)
    try:
        values = sorted(float(v) for v in spec.split(","))
    except ValueError:
        raise UsageError(f"--beta-grid must be 'decade', 'fine' or comma-separated numbers, "
                         f"got {spec!r}") from None
    return values


def _check_flags(args) -> None:
    if getattr(args, "design", "kernel") is None:
        args.design = "direct" if getattr(args, "mode", "label") == "forward" else "kernel"
    design = getattr(args, "design", "kernel")
    if getattr(args, "landmarks", None) is not None and design != "nystrom":
        raise UsageError("--landmarks only applies to --design nystrom")
    if design == "nystrom" and getattr(args, "landmarks", None) is None:
        raise UsageError("--design nystrom needs --landmarks")
    if design == "direct" and getattr(args, "beta", None) not in (None,):
        raise UsageError("--beta does not apply to --design direct")
    if getattr(args, "mode", "label") == "forward":
        if args.soft_r != 1.0 or args.unlabeled is not None:
            raise UsageError("--soft-r/--unlabeled only apply to --mode label")
        if design != "direct":
            raise UsageError("--mode forward uses group indicators; use --design direct")
    if not 0.0 <= getattr(args, "soft_r", 1.0) <= 1.0:
        raise UsageError("--soft-r must lie in [0, 1]")


def _resolve_beta(args, samples, enc: LabelEncoding, truth, cfg) -> tuple[float, Optional[object]]:
    """Bandwidth from --beta (value, 'median' or 'cv') for a Gaussian design."""
    choice = args.beta or ("cv" if args.design == "kernel" else "median")
    if choice == "median":
        return median_heuristic_beta(samples, seed=args.seed), None
    if choice == "cv":
        if args.design != "kernel":
            raise UsageError("--beta cv supports --design kernel only")
        grid = _grid(args.beta_grid, samples, args.seed)
        cv = kfold_cv_kernel(samples, enc, grid, args.folds, cfg, args.criterion,
                             truth=truth, seed=args.seed)
        return cv.best.beta, cv
    try:
        return float(choice), None
    except ValueError:
        raise UsageError(f"--beta must be 'median', 'cv' or a number, got {choice!r}") from None


def _pipeline_grid(args):
    """(fixed betas or None, exponents around each split's median heuristic)."""
    choice = args.beta or "cv"
    if choice == "median":
        return None, (0,)
    if choice != "cv":
        try:
            return [float(choice)], ()
        except ValueError:
            raise UsageError(f"--beta must be 'median', 'cv' or a number, got {choice!r}") from None
    if args.beta_grid == "decade":
        return None, (-2, -1, 0, 1)
    if args.beta_grid == "fine":
        return None, tuple(k / 4 for k in range(-8, 5))
    return _grid(args.beta_grid, np.zeros((0, 0)), args.seed), ()


def _design(args, samples, beta) -> KernelDesign:
    kind = DESIGNS[args.design]
    dim = samples.shape[1]
    if kind is DesignKind.DIRECT:
        return KernelDesign(kind, dim)
    if kind is DesignKind.GAUSSIAN_FULL:
        return KernelDesign(kind, dim, beta, samples)
    m = min(args.landmarks, samples.shape[0])
    return KernelDesign(kind, dim, beta, select_landmarks(samples, m, args.seed))


def _fit_label_model(args, ds: Dataset):
    names = _class_names(args, ds)
    enc = _label_matrix(ds.labels, names, args.soft_r)
    cfg = _config(args, _rank(args, len(names)), len(names))
    labeled = [i for i, x in enumerate(ds.labels) if x is not None]
    cv = None
    beta = None
    if args.design != "direct":
        cv_enc = enc.subset(labeled)
        truth = [ds.labels[i] for i in labeled]
        beta, cv = _resolve_beta(args, ds.samples[labeled], cv_enc, truth, cfg)
    design = _design(args, ds.samples, beta)
    model, report = fit(enc.columns, design.build(ds.samples), cfg,
                        design=design, class_names=names)
    return model, report, cv, enc


def _print_report(report, out=None) -> None:
    out = out or sys.stdout
    sums = report.b_column_sums
    print(f"iterations: {report.iterations_run}  converged: {report.converged}  "
          f"final loss: {report.final_loss:.6g}", file=out)
    print(f"raw B column sums: mean {sums.mean():.4f}  sd {sums.std(ddof=1) if len(sums) > 1 else 0.0:.4f}",
          file=out)


def _fit_info(report, cfg_seed, beta=None) -> dict:
    return {"final_loss": float(report.final_loss), "iterations": int(report.iterations_run),
            "converged": bool(report.converged), "seed": int(cfg_seed),
            "beta": None if beta is None else float(beta)}


def _write_csv(path, header: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(str(v) for v in row) + "\n")
    persist.atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    _check_flags(args)
    if args.mode == "forward":
        ds = _dataset(args, scale=False)
        if any(x is None for x in ds.labels):
            raise UsageError("forward mode needs every sample's group label")
        groups = _class_names(args, ds)
        a = encode_hard(ds.labels, groups).columns
        y = ds.samples.T
        cfg = _config(args, _rank(args, len(groups)), y.shape[0])
        design = KernelDesign(DesignKind.DIRECT, len(groups))
        model, report = fit(y, a, cfg, design=design, class_names=groups)
        mf = persist.ModelFile(model, "forward", ds.feature_names, None,
                               _fit_info(report, cfg.seed))
        persist.save(mf, args.output)
        _print_report(report)
        curves = reconstruct(model, np.eye(len(groups)))
        print("fitted profile per group (" + ", ".join(ds.feature_names) + "):")
        for g, col in zip(groups, curves.T):
            print(f"  {g}: " + ", ".join(f"{v:.2f}" for v in col))
        return 0

    ds = _dataset(args, scale=not args.no_scale)
    model, report, cv, _ = _fit_label_model(args, ds)
    beta = model.design.beta
    mf = persist.ModelFile(model, "label", ds.feature_names, ds.scaling,
                           _fit_info(report, args.seed, beta))
    persist.save(mf, args.output)
    if cv is not None:
        print(f"cv chose beta = {beta:.6g} ({cv.criterion.value})")
    elif beta is not None:
        print(f"beta = {beta:.6g}")
    _print_report(report)
    print("basis X (rows = classes):")
    for name, row in zip(model.class_names, model.x):
        print(f"  {name}: " + " ".join(f"{v:.3f}" for v in row))
    assign_bases(model.x, model.class_names)
    return 0


def cmd_predict(args) -> int:
    mf = persist.load(args.model)
    path, label_col, id_col = resolve(args.data, args.data_dir)
    id_col = args.id_column or id_col
    label_col = args.label_column or label_col
    need_label = mf.mode == "forward"
    if need_label and label_col is None:
        raise UsageError("forward-mode models need --label-column to predict")
    try:
        ds = load_csv(path, label_col if need_label else None, id_column=id_col,
                      feature_columns=mf.feature_names if mf.mode == "label" else None,
                      scale=False, allow_empty=True)
    except DatasetError as exc:
        if "not in file" in str(exc):
            raise FeatureMismatchError(f"{exc}; model features are {mf.feature_names}") from None
        raise

    if mf.mode == "forward":
        a = encode_hard(ds.labels, mf.class_names).columns if len(ds) else np.zeros((len(mf.class_names), 0))
        fitted = mf.model.x @ mf.model.theta @ a
        rows = ([sid] + [_fmt(v) for v in col] for sid, col in zip(ds.ids, fitted.T))
        _write_csv(args.output, ["sample_id"] + mf.feature_names, rows)
        return 0

    if ds.feature_names != mf.feature_names:
        raise FeatureMismatchError(f"data features {ds.feature_names} differ from model "
                                   f"features {mf.feature_names}")
    names = list(mf.class_names)
    rows = []
    if len(ds):
        samples = ds.samples if mf.scaling is None else apply_scaling(ds.samples, mf.scaling, clip=True)
        pred = predict_samples(mf.model, samples)
        rows = ([sid] + [_fmt(v) for v in col] + [cls]
                for sid, col, cls in zip(ds.ids, pred.probabilities.T, pred.predicted_class))
    _write_csv(args.output, ["sample_id"] + names + ["predicted"], rows)
    return 0


def cmd_cv(args) -> int:
    _check_flags(args)
    ds = _dataset(args, scale=not args.no_scale)
    labeled = [i for i, x in enumerate(ds.labels) if x is not None]
    samples = ds.samples[labeled]
    truth = [ds.labels[i] for i in labeled]
    names = _class_names(args, ds)
    enc = encode_soft(truth, names, args.soft_r)
    cfg = _config(args, _rank(args, len(names)), len(names))
    grid = _grid(args.beta_grid, samples, args.seed)
    if args.split == "kfold":
        result = kfold_cv_kernel(samples, enc, grid, args.folds, cfg, args.criterion,
                                 truth=truth, seed=args.seed)
    else:
        tr, va, _ = stratified_split(truth, SplitSpec(seed=args.seed))
        specs = [DesignSpec(DesignKind.GAUSSIAN_FULL, b) for b in grid]
        result = grid_search(samples[tr], enc.subset(tr), samples[va],
                             encode_hard([truth[i] for i in va], names), specs, cfg,
                             args.criterion, valid_truth=[truth[i] for i in va],
                             refit_valid_enc=enc.subset(va)).cv
    rows = [[_fmt(c.beta), _fmt(c.mean_loss), _fmt(c.mean_accuracy), int(i == result.chosen)]
            for i, c in enumerate(result.candidates)]
    _write_csv(args.output, ["beta", "mean_loss", "mean_accuracy", "chosen"], rows)
    best = result.best
    print(f"chosen beta = {best.beta:.6g} (criterion {result.criterion.value}; "
          f"loss {best.mean_loss:.6g}, accuracy {best.mean_accuracy:.4f})")
    return 0


def cmd_evaluate(args) -> int:
    _check_flags(args)
    ds = _dataset(args, scale=not args.no_scale)
    if any(x is None for x in ds.labels):
        raise UsageError("evaluate needs every sample labeled")
    names = _class_names(args, ds)
    out = Path(args.output)

    if args.full_fit:
        model, report, cv, _ = _fit_label_model(args, ds)
        pred = predict_samples(model, ds.samples)
        conf = confusion_matrix(pred, ds.labels)
        accs = np.array([conf.accuracy])
        total = conf.counts
        extra = {"beta": model.design.beta, "iterations": report.iterations_run,
                 "b_column_sum_mean": float(report.b_column_sums.mean())}
    else:
        betas, exps = _pipeline_grid(args)
        cfg = TriNmfConfig(rank_q=1, max_iter=args.max_iter, rel_tol=args.tol,
                           init_mode=InitMode(args.init or "identity"), seed=args.seed)
        pipeline = nmflab_pipeline(DESIGNS[args.design], cfg=cfg, criterion=args.criterion,
                                   soft_r=args.soft_r, grid_exponents=exps, betas=betas,
                                   n_landmarks=args.landmarks, class_names=names)
        res = repeated_evaluation(ds.samples, ds.labels, SplitSpec(seed=args.seed),
                                  args.repeats, pipeline, class_names=names)
        accs = res.accuracies
        total = sum(c.counts for c in res.confusions)
        extra = {"chosen": res.chosen}

    mean = float(accs.mean())
    sd = float(accs.std(ddof=1)) if len(accs) > 1 else 0.0
    metrics = {"dataset": args.data, "design": args.design, "repeats": len(accs),
               "soft_r": args.soft_r, "accuracy_mean": mean, "accuracy_sd": sd,
               "accuracies": accs.tolist(), "class_names": list(names), **extra}
    persist.atomic_write_text(out / "metrics.json", json.dumps(metrics, indent=1) + "\n")
    _write_csv(out / "confusion.csv", ["predicted\\true"] + list(names),
               ([n] + list(row) for n, row in zip(names, total)))
    print(f"accuracy: {100 * mean:.1f} +/- {100 * sd:.1f} % over {len(accs)} run(s)")
    print("confusion (rows = predicted, columns = true):")
    print("  " + " ".join(f"{n:>10}" for n in names))
    for n, row in zip(names, total):
        print(f"  {n:>10} " + " ".join(f"{v:>10d}" for v in row))
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p, *, label_flags=True):
    p.add_argument("data", help="CSV path or bundled dataset name (orthodont, iris, digits)")
    p.add_argument("--label-column")
    p.add_argument("--id-column")
    p.add_argument("--data-dir", help="dataset cache directory (default $NMFLAB_DATA_DIR)")
    if not label_flags:
        return
    p.add_argument("--classes", help="comma-separated class order (default: first appearance)")
    p.add_argument("--no-scale", action="store_true", help="skip min-max feature scaling")
    p.add_argument("--soft-r", type=float, default=1.0)
    p.add_argument("--unlabeled", help="label value marking unlabeled samples")
    p.add_argument("--rank", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--init", choices=[m.value for m in InitMode])
    p.add_argument("--beta", help="'median', 'cv' or a positive number")
    p.add_argument("--beta-grid", default="decade",
                   help="'decade' (median x 10^-2..10^1), 'fine' (quarter decades) or values")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default="loss")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nmflab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model and write a model file")
    _common(p)
    p.add_argument("--mode", choices=["label", "forward"], default="label")
    p.add_argument("--design", choices=list(DESIGNS),
                   help="default: kernel for label mode, direct for forward mode")
    p.add_argument("--landmarks", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write class probabilities for new samples")
    p.add_argument("model")
    _common(p, label_flags=False)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="cross-validate the Gaussian bandwidth")
    _common(p)
    p.add_argument("--split", choices=["kfold", "holdout"], default="kfold")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_cv, design="kernel")

    p = sub.add_parser("evaluate", help="repeated split/tune/test accuracy")
    _common(p)
    p.add_argument("--design", choices=list(DESIGNS), default="kernel")
    p.add_argument("--landmarks", type=int)
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--full-fit", action="store_true",
                   help="fit on all samples and score the training set")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        code = next((c for cls, c in ERROR_CODES if isinstance(exc, cls)), "E_INTERNAL")
        msg = " ".join(str(exc).split())
        print(f"nmflab: error {code}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
