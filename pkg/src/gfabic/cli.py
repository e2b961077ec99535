"""Command-line interface: simulate, fit, biclusters, predict, evaluate,
preprocess.  Exit codes: 0 success, 1 runtime/validation failure, 2 usage."""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .biclusters import extract_biclusters, match_chains
from .dataio import (
    read_biclusters,
    read_collection,
    read_matrix_tsv,
    read_truth,
    write_biclusters,
    write_collection,
    write_matrix_tsv,
    write_robust_report,
    write_truth,
)
from .evaluate import f1_cells, regression_metrics
from .model import (
    ConfigurationError,
    DataCollection,
    GfabicError,
    HyperParams,
    ModelVariant,
    ViewData,
)
from .sampler import ChainConfig, predict_missing, run_chain
from .storage import load_store, save_store
from .simulate import SimulationSpec, generate, generate_two_mode_blocks

HYPER_KEYS = ("a_pi", "b_pi", "a_alpha", "b_alpha", "a_tau", "b_tau")


def _run_record(command: str, config: dict, seed, t0: float,
                out_dir: Path | None = None) -> None:
    record = {
        "command": command,
        "config": config,
        "seed": seed,
        "versions": {
            "gfabic": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    line = json.dumps(record)
    print(line)
    if out_dir is not None:
        (out_dir / "run.json").write_text(line + "\n", encoding="utf-8")


def _parse_hyper(pairs: list[str] | None) -> HyperParams:
    kwargs = {}
    for pair in pairs or []:
        key, _, value = pair.partition("=")
        if key not in HYPER_KEYS or not value:
            raise ConfigurationError(
                f"bad --hyper entry {pair!r}; expected key=value with key "
                f"in {HYPER_KEYS}"
            )
        kwargs[key] = float(value)
    return HyperParams(**kwargs)


def _parse_k(text: str) -> int | tuple[int, int]:
    parts = text.split(",")
    if len(parts) == 1:
        return int(parts[0])
    if len(parts) == 2:
        return int(parts[0]), int(parts[1])
    raise argparse.ArgumentTypeError("expected K or K1,K2")


def cmd_simulate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    if args.experiment == "blocks":
        data, truth = generate_two_mode_blocks(args.seed)
        k_hint: int | list[int] = [
            truth.modes[0].x.shape[1], truth.modes[1].x.shape[1]]
    else:
        kwargs = dict(
            experiment=args.experiment, seed=args.seed,
            n_views=args.views, n_samples=args.samples,
            view_dim=args.dim, k_true=args.k, activity=args.activity,
            n_noise_components=args.noise_components,
        )
        if args.aux_precision is not None:
            kwargs["aux_precision"] = args.aux_precision
        spec = SimulationSpec(**kwargs)
        data, truth = generate(spec)
        k_hint = truth.n_components()
    if args.mask_fraction > 0:
        rng = np.random.default_rng(args.seed + 1)
        target = data.mode1[args.mask_view - 1]
        mask = rng.random(target.values.shape) < args.mask_fraction
        target.missing = mask
    out.mkdir(parents=True, exist_ok=True)
    manifest = write_collection(data, out, k_hint=k_hint)
    write_truth(truth, out / "truth.json")
    _run_record("simulate", {
        "experiment": args.experiment, "out": str(out),
        "manifest": str(manifest),
    }, args.seed, t0, out)
    return 0


def _fit_one(payload: tuple) -> str:
    data, config, chain_dir = payload
    store = run_chain(data, config)
    save_store(store, chain_dir)
    return store.chain_id


def cmd_fit(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    data, manifest = read_collection(args.manifest)
    variant = ModelVariant(kind=args.variant, two_mode=data.two_mode)
    if args.k is not None:
        k = args.k
    else:
        hint = manifest.get("k_hint")
        if hint is None:
            raise ConfigurationError(
                "no --k given and the manifest carries no k_hint"
            )
        if isinstance(hint, list):
            k = (int(hint[0]) + 5, int(hint[1]) + 5)
        else:
            k = int(hint) + 5
    hyper = _parse_hyper(args.hyper)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for c in range(args.chains):
        seed = args.seed + c
        config = ChainConfig(
            k=k, burn_in=args.burn_in, thinning=args.thin,
            n_samples=args.samples, seed=seed, variant=variant,
            hyper=hyper, snr=args.snr,
        )
        jobs.append((data, config, out / f"chain_{seed}"))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            chain_ids = list(pool.map(_fit_one, jobs))
    else:
        chain_ids = [_fit_one(job) for job in jobs]
    _run_record("fit", {
        "manifest": str(args.manifest), "out": str(out), "k": list(k)
        if isinstance(k, tuple) else k,
        "chains": chain_ids, "variant": args.variant,
        "burn_in": args.burn_in, "thinning": args.thin,
        "n_samples": args.samples, "snr": args.snr,
    }, args.seed, t0, out)
    return 0


def cmd_biclusters(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    stores = [load_store(d) for d in args.chains]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for store in stores:
        bics = extract_biclusters(store, min_sample_members=args.min_samples)
        write_biclusters(bics, out / f"biclusters_{store.chain_id}.json")
    if len(stores) > 1:
        report = match_chains(stores, threshold=args.threshold,
                              min_chains_fraction=args.min_chains_fraction)
        write_robust_report(report, out / "robust_components.json")
        robust = report.robust_count()
    else:
        robust = None
    _run_record("biclusters", {
        "chains": [str(c) for c in args.chains], "out": str(out),
        "threshold": args.threshold,
        "min_chains_fraction": args.min_chains_fraction,
        "min_samples": args.min_samples, "robust_components": robust,
    }, None, t0, out)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    data, _ = read_collection(args.data)
    stores = [load_store(d) for d in args.chains]
    preds = [predict_missing(store, data) for store in stores]
    mean_pred = {
        name: np.mean([p[name] for p in preds], axis=0)
        for name in preds[0]
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    any_masked = any(v.missing is not None and v.missing.any()
                     for v in data.mode1 + data.mode2)
    if not any_masked:
        print("warning: no masked cells in any view; nothing to predict",
              file=sys.stderr)
    else:
        from .dataio import default_col_names, default_row_names

        sample_names = default_row_names(data.n_samples)
        entity_names = default_col_names(
            data.mode1[0].name, data.mode1[0].values.shape[1])
        for view in data.mode1 + data.mode2:
            if view.missing is None or not view.missing.any():
                continue
            pred = mean_pred[view.name]
            rows = sample_names if any(v.name == view.name
                                       for v in data.mode1) else entity_names
            cols = default_col_names(view.name, view.values.shape[1])
            write_matrix_tsv(out / f"predicted_{view.name}.tsv", pred,
                             rows, cols, missing=~view.missing)
        if args.rank_view:
            if args.rank_view not in mean_pred:
                raise ConfigurationError(
                    f"unknown view {args.rank_view!r} for --rank-view")
            pred = mean_pred[args.rank_view]
            with np.errstate(invalid="ignore"):
                scores = np.nanmean(pred, axis=1)
            order = np.argsort(-scores)
            lines = ["id\tscore\trank"]
            rank = 1
            for i in order:
                if np.isnan(scores[i]):
                    continue
                lines.append(f"{sample_names[i]}\t{scores[i]:.6g}\t{rank}")
                rank += 1
            (out / f"ranking_{args.rank_view}.tsv").write_text(
                "\n".join(lines) + "\n", encoding="utf-8")
    _run_record("predict", {
        "chains": [str(c) for c in args.chains], "data": str(args.data),
        "out": str(out), "rank_view": args.rank_view,
    }, None, t0, out)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    if args.task == "bicluster":
        bics = read_biclusters(args.pred)
        truth = read_truth(args.truth)
        score = f1_cells(bics, truth)
        lines = ["metric\tvalue", f"f1\t{score:.6f}"]
    else:
        pred_vals, pred_missing, _, _ = read_matrix_tsv(args.pred)
        true_vals, _, _, _ = read_matrix_tsv(args.truth)
        if pred_vals.shape != true_vals.shape:
            raise ConfigurationError(
                f"prediction shape {pred_vals.shape} != truth "
                f"{true_vals.shape}"
            )
        # Cells present (non-NA) in the prediction file are the ones scored.
        scored = ~pred_missing if pred_missing is not None \
            else np.ones(pred_vals.shape, dtype=bool)
        metrics = regression_metrics(pred_vals, true_vals, scored)
        lines = ["metric\tvalue"]
        for key, value in metrics.to_dict().items():
            lines.append(f"{key}\t{value}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    _run_record("evaluate", {
        "task": args.task, "pred": str(args.pred), "truth": str(args.truth),
    }, None, t0, None)
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    data, manifest = read_collection(args.manifest)
    targets = set(args.views.split(",")) if args.views else \
        {v.name for v in data.mode1}
    unknown = targets - set(data.view_names())
    if unknown:
        raise ConfigurationError(f"unknown views: {sorted(unknown)}")
    new_mode1 = []
    for view in data.mode1:
        if view.name in targets and view.values.shape[1] > args.top_variance:
            vals = np.where(view.missing, np.nan, view.values) \
                if view.missing is not None else view.values
            variances = np.nanvar(vals, axis=0)
            keep = np.sort(np.argsort(-variances)[:args.top_variance])
            new_mode1.append(ViewData(
                view.name, view.values[:, keep],
                None if view.missing is None else view.missing[:, keep]))
        else:
            new_mode1.append(view)
    if data.mode2 and data.mode1[0].name in targets:
        raise ConfigurationError(
            "cannot filter features of the paired view; its features are "
            "the samples of the second mode"
        )
    new_data = DataCollection(mode1=new_mode1, mode2=data.mode2)
    out = Path(args.out)
    write_collection(new_data, out, k_hint=manifest.get("k_hint"))
    _run_record("preprocess", {
        "manifest": str(args.manifest), "out": str(out),
        "top_variance": args.top_variance, "views": sorted(targets),
    }, None, t0, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfabic",
        description="Sparse group factor analysis for joint biclustering "
                    "of multi-view data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--experiment", required=True,
                   choices=["a", "b", "c", "d", "e", "f", "blocks"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--views", type=int, default=5)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--k", type=int, default=1, help="planted biclusters")
    p.add_argument("--activity", type=float, default=0.7)
    p.add_argument("--noise-components", type=int, default=0)
    p.add_argument("--aux-precision", type=float, default=None)
    p.add_argument("--mask-fraction", type=float, default=0.0,
                   help="randomly mask this fraction of one view's cells")
    p.add_argument("--mask-view", type=int, default=1,
                   help="1-based index of the mode-1 view to mask")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run sampling chains on a collection")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=_parse_k, default=None,
                   help="components (K or K1,K2); default: manifest k_hint + 5")
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=2000)
    p.add_argument("--thin", type=int, default=20)
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--variant", choices=["gfa", "fa"], default="gfa")
    p.add_argument("--snr", type=float, default=None,
                   help="signal-to-noise ratio for the noise-precision prior")
    p.add_argument("--hyper", action="append", metavar="KEY=VALUE",
                   help="override a hyperparameter (repeatable)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("biclusters",
                       help="extract biclusters and match chains")
    p.add_argument("chains", nargs="+", help="chain store directories")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.80)
    p.add_argument("--min-chains-fraction", type=float, default=0.5)
    p.add_argument("--min-samples", type=int, default=0)
    p.set_defaults(func=cmd_biclusters)

    p = sub.add_parser("predict", help="predict masked cells")
    p.add_argument("--chains", nargs="+", required=True)
    p.add_argument("--data", required=True, help="collection manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--rank-view", default=None,
                   help="also rank samples by mean prediction in this view")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against truth")
    p.add_argument("--task", choices=["bicluster", "regression"],
                   required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("preprocess",
                       help="keep only the highest-variance features")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--top-variance", type=int, required=True)
    p.add_argument("--views", default=None,
                   help="comma-separated view names (default: all mode-1)")
    p.set_defaults(func=cmd_preprocess)
    return parser


def validate_args(parser: argparse.ArgumentParser,
                  args: argparse.Namespace) -> None:
    """Reject out-of-range option values as usage errors (exit 2)."""
    checks = {
        "threshold": lambda v: 0.0 < v <= 1.0,
        "min_chains_fraction": lambda v: 0.0 < v <= 1.0,
        "mask_fraction": lambda v: 0.0 <= v < 1.0,
        "activity": lambda v: 0.0 < v <= 1.0,
        "jobs": lambda v: v >= 1,
        "top_variance": lambda v: v >= 1,
    }
    for name, ok in checks.items():
        value = getattr(args, name, None)
        if value is not None and not ok(value):
            parser.error(f"--{name.replace('_', '-')}: value "
                         f"{value} out of range")
    chains = getattr(args, "chains", None)
    if isinstance(chains, int) and chains < 1:
        parser.error("--chains must be >= 1")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    validate_args(parser, args)
    try:
        return args.func(args)
    except (GfabicError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
