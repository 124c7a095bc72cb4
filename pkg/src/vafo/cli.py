"""Command-line entry point.

Everything prints CSV: a ``# vafo-version`` comment line, a header row,
then data rows. Runs are deterministic given flags and seed; the default
seed (7) can be overridden with the VAFO_SEED environment variable.

Exit codes: 0 success, 2 usage error, 3 data error, 4 verification
failure (gradcheck above tolerance).
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, downstream, features, loss, metrics, raster_io, simulate
from . import morphology
from .errors import PairingError, VafoError

_EXIT_DATA_ERROR = 3
_EXIT_VERIFY_FAILED = 4

CLASS_IDS = {"artery": 1, "vein": 2, "uncertain": 3}


def _default_seed() -> int:
    return int(os.environ.get("VAFO_SEED", "7"))


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def _emit(header: list[str], rows: list[list]) -> None:
    click.echo(f"# vafo-version {__version__}")
    click.echo(",".join(header))
    for row in rows:
        click.echo(",".join(_fmt(v) for v in row))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [f"# vafo-version {__version__}", ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _parse_palette(spec: str | None):
    if spec is None:
        return None
    parts = spec.split(",")
    if len(parts) != 4:
        raise click.UsageError("--palette needs 4 comma-separated hex colors (bg,artery,vein,uncertain)")
    palette = {}
    for class_id, part in enumerate(parts):
        part = part.strip().lstrip("#")
        if len(part) != 6:
            raise click.UsageError(f"bad palette entry {part!r}")
        palette[class_id] = tuple(int(part[i : i + 2], 16) for i in (0, 2, 4))
    return palette


def _parse_classes(spec: str) -> tuple[int, ...]:
    try:
        return tuple(CLASS_IDS[name.strip()] for name in spec.split(","))
    except KeyError as exc:
        raise click.UsageError(f"unknown class name {exc}")


def _load_map_any(path: Path, palette=None) -> np.ndarray:
    """Label map from a PNG, or a hardened probability map from a VAFP."""
    if path.suffix.lower() == ".vafp":
        return raster_io.harden(raster_io.load_probmap(path))
    return raster_io.load_label_png(path, palette=palette)


class _DataError(click.ClickException):
    exit_code = _EXIT_DATA_ERROR


def _data_errors(fn):
    """Map package errors and I/O failures to exit code 3."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (VafoError, OSError) as exc:
            raise _DataError(str(exc))

    wrapper.__name__ = fn.__name__
    return wrapper


@click.group()
@click.version_option(version=__version__)
def main():
    """Vascular-feature loss, features, metrics, and simulation toolkit."""


@main.command("features")
@click.option("--map", "map_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="Label PNG or VAFP probability map (hardened before analysis).")
@click.option("--classes", default="artery,vein", show_default=True)
@click.option("--image-id", default=None, help="Identifier column value; defaults to the file stem.")
@click.option("--palette", default=None, help="Override label colors: bg,artery,vein,uncertain hex.")
@_data_errors
def cmd_features(map_path: Path, classes: str, image_id: str | None, palette: str | None):
    """Vessel density, fractal dimension, and mean tortuosity per class."""
    labels = _load_map_any(map_path, palette=_parse_palette(palette))
    image_id = image_id or map_path.stem
    rows = []
    names = {v: k for k, v in CLASS_IDS.items()}
    for class_id in _parse_classes(classes):
        rec = features.feature_record(labels, class_id)
        rows.append([
            image_id, names[class_id], rec.vessel_density, rec.fractal_dimension,
            rec.mean_tortuosity, rec.n_branches,
        ])
    _emit(
        ["image_id", "class", "vessel_density", "fractal_dimension", "mean_tortuosity", "n_branches"],
        rows,
    )


@main.command("loss")
@click.option("--pred", type=click.Path(exists=True, path_type=Path), required=True,
              help="Predicted probability map (VAFP).")
@click.option("--gt", type=click.Path(exists=True, path_type=Path), required=True,
              help="Ground-truth label PNG.")
@click.option("--lambda", "lam", type=float, default=0.5, show_default=True)
@click.option("--classes", default="artery,vein", show_default=True)
@click.option("--grad", "grad_path", type=click.Path(path_type=Path), default=None,
              help="Write the loss gradient to this VAFP file.")
@click.option("--strict-empty", is_flag=True, help="Error out when a class has no ground truth.")
@click.option("--palette", default=None)
@_data_errors
def cmd_loss(pred: Path, gt: Path, lam: float, classes: str, grad_path: Path | None,
             strict_empty: bool, palette: str | None):
    """Total loss, cross-entropy part, and box-count part for one pair."""
    probs = raster_io.load_probmap(pred)
    labels = raster_io.load_label_png(gt, palette=_parse_palette(palette))
    cfg = loss.LossConfig(lam=lam, class_set=_parse_classes(classes), strict_empty=strict_empty)
    value = loss.vafo_loss(probs, labels, cfg, with_grad=grad_path is not None)
    if grad_path is not None:
        raster_io.write_vafp(value.gradient.astype(np.float32), grad_path)
    _emit(["total", "loss_v", "loss_b"], [[value.total, value.loss_v, value.loss_b]])


@main.command("metrics")
@click.option("--pred", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--gt", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--palette", default=None)
@_data_errors
def cmd_metrics(pred: Path, gt: Path, palette: str | None):
    """Per-class and weighted F1 / IOU / MSE (MSE reported x100)."""
    pal = _parse_palette(palette)
    pred_map = _load_map_any(pred, palette=pal)
    gt_map = _load_map_any(gt, palette=pal)
    scores = metrics.seg_scores(pred_map, gt_map)
    names = {v: k for k, v in CLASS_IDS.items()}
    rows = []
    for class_id, s in sorted(scores.per_class.items()):
        rows.append([names[class_id], s.f1, s.iou, s.mse * 100.0])
    w = scores.weighted
    rows.append(["weighted", w.f1, w.iou, w.mse * 100.0])
    _emit(["class", "f1", "iou", "mse_x100"], rows)


@main.command("agree")
@click.option("--pred-features", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--gt-features", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--feature", required=True,
              type=click.Choice(["vessel_density", "fractal_dimension", "mean_tortuosity"]))
@click.option("--class", "class_name", default="artery", show_default=True,
              type=click.Choice(list(CLASS_IDS)))
@click.option("--seed", type=int, default=None, help="Bootstrap seed (default: VAFO_SEED or 7).")
@_data_errors
def cmd_agree(pred_features: Path, gt_features: Path, feature: str, class_name: str, seed: int | None):
    """ICC agreement between two feature CSVs (as written by `features`)."""
    seed = _default_seed() if seed is None else seed
    pred_rows = _read_feature_csv(pred_features, class_name, feature)
    gt_rows = _read_feature_csv(gt_features, class_name, feature)
    common = sorted(set(pred_rows) & set(gt_rows))
    if not common:
        raise PairingError("no shared image ids between the feature files")
    pairs = [(pred_rows[i], gt_rows[i]) for i in common]
    result = metrics.icc(pairs, seed=seed)
    _emit(
        ["feature", "class", "n", "icc", "ci_low", "ci_high"],
        [[feature, class_name, len(pairs), result.icc, result.ci_low, result.ci_high]],
    )


def _read_feature_csv(path: Path, class_name: str, feature: str) -> dict[str, float]:
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    try:
        id_col = header.index("image_id")
        class_col = header.index("class")
        feat_col = header.index(feature)
    except ValueError as exc:
        raise PairingError(f"{path}: missing column ({exc})")
    out = {}
    for ln in lines[1:]:
        cells = ln.split(",")
        if cells[class_col] == class_name:
            out[cells[id_col]] = float(cells[feat_col])
    return out


@main.command("simulate")
@click.option("--rho", type=float, required=True, help="Arc-length ratio arc(A2)/arc(A1).")
@click.option("--width", type=int, default=3, show_default=True)
@click.option("--canvas", type=int, default=512, show_default=True)
@click.option("--chord", type=int, default=None, help="Sub-segment chord in px (default canvas/3).")
@click.option("--curvature", type=float, default=0.0, show_default=True,
              help="Base half-angle (rad) of the shorter arc.")
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
@_data_errors
def cmd_simulate(rho, width, canvas, chord, curvature, seed, out_dir: Path):
    """Write truth.png, corrupted.png, and errors.csv for one scenario."""
    seed = _default_seed() if seed is None else seed
    spec = simulate.ScenarioSpec(
        rho=rho, width=width, chord=chord, curvature=curvature, canvas=canvas, seed=seed
    )
    pair = simulate.generate_scenario(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    raster_io.save_label_png(pair.truth, out_dir / "truth.png")
    raster_io.save_label_png(pair.corrupted, out_dir / "corrupted.png")
    predicted = simulate.predicted_errors(rho)
    empirical = simulate.empirical_errors(pair)
    rows = [
        ["tortuosity", predicted[0], empirical[0]],
        ["vessel_density", predicted[1], empirical[1]],
        ["box_counts", predicted[2], empirical[2]],
        ["measured_rho", rho, pair.measured_rho],
    ]
    _write_csv(out_dir / "errors.csv", ["quantity", "predicted", "empirical"], rows)
    click.echo(f"wrote {out_dir}/truth.png, corrupted.png, errors.csv")


@main.group("downstream", invoke_without_command=True)
@click.option("--cohort", "cohort_path", type=click.Path(path_type=Path), default=None)
@click.option("--train-frac", type=float, default=0.6, show_default=True)
@click.option("--bootstrap", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.pass_context
def cmd_downstream(ctx, cohort_path: Path | None, train_frac: float, bootstrap: int, seed: int | None):
    """Fit/evaluate the single-feature incidence model on a cohort CSV."""
    if ctx.invoked_subcommand is not None:
        return
    if cohort_path is None:
        raise click.UsageError("provide --cohort CSV or use the `synth` subcommand")
    seed = _default_seed() if seed is None else seed
    try:
        cohort = _read_cohort_csv(cohort_path)
        ev = downstream.evaluate_split(cohort, train_frac=train_frac, seed=seed, bootstrap=bootstrap)
    except (VafoError, OSError) as exc:
        raise _DataError(str(exc))
    roc_ci = ev.roc_ci or (float("nan"), float("nan"))
    pr_ci = ev.pr_ci or (float("nan"), float("nan"))
    _emit(
        ["auc_roc", "roc_ci_low", "roc_ci_high", "auc_pr", "pr_ci_low", "pr_ci_high",
         "weight", "intercept", "n_train", "n_test"],
        [[ev.auc_roc, roc_ci[0], roc_ci[1], ev.auc_pr, pr_ci[0], pr_ci[1],
          ev.model.weight, ev.model.intercept, ev.n_train, ev.n_test]],
    )


@cmd_downstream.command("synth")
@click.option("--n", type=int, default=1548, show_default=True)
@click.option("--d", type=float, default=0.742, show_default=True, help="Effect size between classes.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@_data_errors
def cmd_downstream_synth(n: int, d: float, seed: int | None, out: Path):
    """Generate a balanced synthetic cohort CSV."""
    seed = _default_seed() if seed is None else seed
    cohort = downstream.synth_cohort(n, d, seed=seed)
    rows = [
        [sid, feat, int(lab)]
        for sid, feat, lab in zip(cohort.subject_ids, cohort.features, cohort.labels)
    ]
    _write_csv(out, ["subject_id", "feature", "label"], rows)
    click.echo(f"wrote {out}")


def _read_cohort_csv(path: Path) -> downstream.Cohort:
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    sid_col = header.index("subject_id")
    feat_col = header.index("feature")
    label_col = header.index("label")
    ids, feats, labels = [], [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        ids.append(cells[sid_col])
        feats.append(float(cells[feat_col]))
        labels.append(int(cells[label_col]))
    return downstream.Cohort(tuple(ids), np.array(feats), np.array(labels, dtype=np.int64))


@main.command("gradcheck")
@click.option("--seed", type=int, default=None)
@click.option("--size", type=int, default=16, show_default=True)
@click.option("--lambda", "lam", type=float, default=0.5, show_default=True)
def cmd_gradcheck(seed: int | None, size: int, lam: float):
    """Check analytic gradients against central finite differences."""
    if size > 64:
        raise click.UsageError("size must be <= 64 (finite differences get expensive)")
    if size < 2:
        raise click.UsageError("size must be >= 2")
    seed = _default_seed() if seed is None else seed
    rng = np.random.default_rng(seed)
    labels = loss.random_labelmap((size, size), rng)
    probs = loss.random_probmap((size, size), rng)
    report = loss.finite_difference_report(probs, labels, loss.LossConfig(lam=lam))
    _emit(
        ["component", "max_rel_err"],
        [
            ["cross_entropy", report.max_rel_err_ce],
            ["loss_b", report.max_rel_err_lb],
            ["total", report.max_rel_err_total],
        ],
    )
    click.echo(f"# checked {report.n_checked} coords, excluded {report.n_excluded} near ties")
    if report.worst > 1e-4:
        sys.exit(_EXIT_VERIFY_FAILED)


@main.command("sweep")
@click.option("--pred-dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--gt-dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--lambdas", default="0,0.1,0.2,0.5,1.0", show_default=True)
@click.option("--classes", default="artery,vein", show_default=True)
@_data_errors
def cmd_sweep(pred_dir: Path, gt_dir: Path, lambdas: str, classes: str):
    """Mean loss per lambda over a directory of prediction/ground-truth pairs."""
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.vafp"))}
    gts = {p.stem: p for p in sorted(gt_dir.glob("*.png"))}
    stems = sorted(preds.keys() & gts.keys())
    if not stems or preds.keys() != gts.keys():
        unmatched = sorted(preds.keys() ^ gts.keys())
        raise PairingError(f"unmatched stems between directories: {unmatched or 'no files found'}")
    class_set = _parse_classes(classes)

    pairs = []
    for stem in stems:
        pairs.append((raster_io.load_probmap(preds[stem]), raster_io.load_label_png(gts[stem])))

    try:
        lam_values = [float(v) for v in lambdas.split(",")]
    except ValueError:
        raise click.UsageError(f"bad --lambdas list: {lambdas!r}")
    rows = []
    for lam in lam_values:
        cfg = loss.LossConfig(lam=lam, class_set=class_set)
        values = [loss.vafo_loss(s, t, cfg, with_grad=False) for s, t in pairs]
        mean_total = float(np.mean([v.total for v in values]))
        mean_ce = float(np.mean([v.loss_v for v in values]))
        mean_lb = float(np.mean([v.loss_b for v in values]))
        share = (lam * mean_lb / mean_total) if mean_total > 0 else 0.0
        rows.append([lam, mean_total, mean_ce, mean_lb, share])
    _emit(["lambda", "mean_total", "mean_loss_v", "mean_loss_b", "loss_b_share"], rows)


@main.command("pipeline")
@click.option("--pred", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--gt", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--patch", type=int, default=None,
              help="Betti error over patch x patch tiles instead of whole maps.")
@click.option("--palette", default=None)
@_data_errors
def cmd_pipeline(pred: Path, gt: Path, patch: int | None, palette: str | None):
    """Segmentation scores, Betti error, and features of both maps."""
    pal = _parse_palette(palette)
    pred_map = _load_map_any(pred, palette=pal)
    gt_map = _load_map_any(gt, palette=pal)
    names = {v: k for k, v in CLASS_IDS.items()}

    rows = []
    scores = metrics.seg_scores(pred_map, gt_map)
    for class_id, s in sorted(scores.per_class.items()):
        cname = names[class_id]
        rows.append(["seg", cname, "f1", s.f1])
        rows.append(["seg", cname, "iou", s.iou])
        rows.append(["seg", cname, "mse_x100", s.mse * 100.0])
    w = scores.weighted
    rows.append(["seg", "weighted", "f1", w.f1])
    rows.append(["seg", "weighted", "iou", w.iou])
    rows.append(["seg", "weighted", "mse_x100", w.mse * 100.0])
    rows.append(["topology", "artery+vein", "betti_error", metrics.betti_error(pred_map, gt_map, patch=patch)])

    for tag, label_map in (("pred", pred_map), ("gt", gt_map)):
        for class_id in (1, 2):
            cname = names[class_id]
            try:
                rec = features.feature_record(label_map, class_id)
            except VafoError:
                rows.append([f"features_{tag}", cname, "vessel_density", float("nan")])
                continue
            rows.append([f"features_{tag}", cname, "vessel_density", rec.vessel_density])
            rows.append([f"features_{tag}", cname, "fractal_dimension", rec.fractal_dimension])
            rows.append([f"features_{tag}", cname, "mean_tortuosity", rec.mean_tortuosity])
            rows.append([f"features_{tag}", cname, "n_branches", rec.n_branches])
    _emit(["section", "class", "name", "value"], rows)


if __name__ == "__main__":
    main()
