"""Scoring and experiment harness.

F1 over cells compares union-of-bicluster membership between a prediction
and the ground truth across all views.  The grid runner regenerates data,
fits each method, extracts biclusters, and scores, producing rows suitable
for a TSV table plus JSON provenance.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .biclusters import BiclusterSet, extract_biclusters
from .model import ConfigurationError, ModelVariant
from .sampler import ChainConfig, run_chain
from .simulate import GroundTruth, SimulationSpec, generate


def f1_cells(predicted: BiclusterSet, truth: GroundTruth) -> float:
    """Cell-level F1 = 2TP / (2TP + FN + FP) over all views.

    A cell counts as positive when it belongs to the union of biclusters on
    the respective side.  When both sides are entirely negative there is
    nothing to detect and the score is defined as 1 (documented convention;
    the harmonic mean is otherwise undefined).
    """
    shapes = truth.view_shapes
    for name, shape in predicted.view_shapes.items():
        if name in shapes and tuple(shapes[name]) != tuple(shape):
            raise ConfigurationError(
                f"view {name!r}: predicted shape {shape} != truth {shapes[name]}"
            )
    tp = fp = fn = 0
    for name, shape in shapes.items():
        true_mask = truth.union_cells(name)
        if name in predicted.view_shapes:
            pred_mask = predicted.union_cells(name)
        else:
            pred_mask = np.zeros(shape, dtype=bool)
        tp += int((pred_mask & true_mask).sum())
        fp += int((pred_mask & ~true_mask).sum())
        fn += int((~pred_mask & true_mask).sum())
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fn + fp)


@dataclass
class RegressionMetrics:
    rmse: float
    pearson: float
    spearman: float
    n: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "pearson": self.pearson,
                "spearman": self.spearman, "n": self.n,
                "degenerate": self.degenerate}


def regression_metrics(predicted: np.ndarray, truth: np.ndarray,
                       mask: np.ndarray | None = None) -> RegressionMetrics:
    """RMSE and correlations between predictions and truth.

    With a mask, only cells where it is True are scored.  Correlations on
    fewer than two points or on zero-variance inputs are reported as 0 with
    the degenerate flag set.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape:
        raise ConfigurationError(
            f"prediction shape {predicted.shape} != truth shape {truth.shape}"
        )
    if mask is not None:
        p = predicted[mask]
        t = truth[mask]
    else:
        p = predicted.ravel()
        t = truth.ravel()
    if p.size == 0:
        return RegressionMetrics(rmse=float("nan"), pearson=0.0, spearman=0.0,
                                 n=0, degenerate=True)
    rmse = float(np.sqrt(np.mean((p - t) ** 2)))
    if p.size < 2 or np.std(p) == 0 or np.std(t) == 0:
        return RegressionMetrics(rmse=rmse, pearson=0.0, spearman=0.0,
                                 n=int(p.size), degenerate=True)
    pearson = float(np.corrcoef(p, t)[0, 1])
    spearman = float(stats.spearmanr(p, t).statistic)
    if not np.isfinite(spearman):
        return RegressionMetrics(rmse=rmse, pearson=pearson, spearman=0.0,
                                 n=int(p.size), degenerate=True)
    return RegressionMetrics(rmse=rmse, pearson=pearson, spearman=spearman,
                             n=int(p.size))


def cv_splits(n: int, n_folds: int, seed: int = 0) -> list[np.ndarray]:
    """Disjoint test-index folds covering range(n), sizes differing by <= 1."""
    if not 2 <= n_folds <= n:
        raise ConfigurationError("need 2 <= n_folds <= n")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(perm, n_folds)]


DEFAULT_GRIDS: dict[str, tuple] = {
    "a": (1, 3, 5, 7),
    "b": (1, 3, 5, 7),
    "c": (3, 5, 7),
    "d": (0, 2, 4, 6),
    "e": (1, 3, 5, 7),
    "f": (1e-2, 1e-1, 1.0, 1e1, 1e2),
}


def spec_for_grid_point(experiment: str, value, rep: int, seed0: int = 0,
                        **overrides) -> SimulationSpec:
    """SimulationSpec for one grid cell and repetition.

    The grid value sets the experiment's varied quantity: view count for
    (a)-(c), noise components for (d), bicluster count for (e), auxiliary
    precision for (f).  Seeds are distinct per (experiment, value, rep).
    """
    kwargs: dict = {"experiment": experiment}
    if experiment in ("a", "b", "c"):
        kwargs["n_views"] = int(value)
    elif experiment == "d":
        kwargs["n_noise_components"] = int(value)
    elif experiment == "e":
        kwargs["k_true"] = int(value)
    elif experiment == "f":
        kwargs["aux_precision"] = float(value)
    else:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    kwargs.update(overrides)
    gi = DEFAULT_GRIDS[experiment].index(value) \
        if value in DEFAULT_GRIDS[experiment] else 97
    kwargs["seed"] = seed0 + 10007 * gi + rep
    return SimulationSpec(**kwargs)


@dataclass
class GridRow:
    experiment: str
    grid_value: float
    method: str
    rep: int
    seed: int
    f1: float | None
    effective_k: int | None
    runtime_s: float
    error: str | None = None


@dataclass
class GridResult:
    rows: list[GridRow] = field(default_factory=list)

    def summary(self) -> list[dict]:
        """Mean/std of F1 per (grid value, method), failures skipped."""
        cells: dict[tuple[float, str], list[GridRow]] = {}
        for row in self.rows:
            cells.setdefault((row.grid_value, row.method), []).append(row)
        out = []
        for (value, method), rows in sorted(cells.items()):
            scores = [r.f1 for r in rows if r.error is None]
            out.append({
                "experiment": rows[0].experiment,
                "grid_value": value,
                "method": method,
                "n_ok": len(scores),
                "n_failed": len(rows) - len(scores),
                "mean_f1": float(np.mean(scores)) if scores else float("nan"),
                "std_f1": float(np.std(scores)) if scores else float("nan"),
                "mean_runtime_s": float(np.mean([r.runtime_s for r in rows])),
            })
        return out

    def f1_values(self, method: str, grid_value=None) -> list[float]:
        return [r.f1 for r in self.rows
                if r.method == method and r.error is None
                and (grid_value is None or r.grid_value == grid_value)]

    def write(self, out_dir: str | Path) -> None:
        """TSV summary plus per-run JSON provenance."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = ["experiment\tgrid_value\tmethod\tn_ok\tn_failed"
                 "\tmean_f1\tstd_f1\tmean_runtime_s"]
        for c in self.summary():
            lines.append(
                f"{c['experiment']}\t{c['grid_value']:g}\t{c['method']}"
                f"\t{c['n_ok']}\t{c['n_failed']}\t{c['mean_f1']:.6f}"
                f"\t{c['std_f1']:.6f}\t{c['mean_runtime_s']:.3f}"
            )
        (out_dir / "results.tsv").write_text("\n".join(lines) + "\n")
        runs = [{
            "experiment": r.experiment, "grid_value": r.grid_value,
            "method": r.method, "rep": r.rep, "seed": r.seed,
            "f1": r.f1, "effective_k": r.effective_k,
            "runtime_s": r.runtime_s, "error": r.error,
        } for r in self.rows]
        with open(out_dir / "runs.json", "w", encoding="utf-8") as fh:
            json.dump(runs, fh, indent=2)
            fh.write("\n")


def fit_and_extract(data, k: int, method: str, seed: int,
                    burn_in: int = 600, thinning: int = 5,
                    n_samples: int = 101) -> BiclusterSet:
    """Fit one chain with the given method and extract its biclusters."""
    if method not in ("gfa", "fa"):
        raise ConfigurationError(f"unknown method {method!r}")
    config = ChainConfig(
        k=k, burn_in=burn_in, thinning=thinning, n_samples=n_samples,
        seed=seed, variant=ModelVariant(kind=method),
    )
    store = run_chain(data, config)
    return extract_biclusters(store)


def _load_external_biclusters(template: str, experiment: str, value,
                              rep: int) -> BiclusterSet:
    from .dataio import read_biclusters  # deferred: dataio imports evaluate types

    path = template.format(experiment=experiment, grid=value, rep=rep)
    return read_biclusters(path)


def run_experiment_grid(
    experiment: str,
    grid: tuple | None = None,
    reps: int = 10,
    methods: tuple[str, ...] = ("gfa", "fa"),
    k_extra: int = 5,
    burn_in: int = 600,
    thinning: int = 5,
    n_samples: int = 101,
    seed0: int = 0,
    out_dir: str | Path | None = None,
    spec_overrides: dict | None = None,
) -> GridResult:
    """Fig.-2-style sweep: generate, fit each method, extract, score.

    ``methods`` entries are "gfa", "fa", or "file:<template>" to ingest an
    external tool's bicluster JSON (template fields: experiment, grid, rep).
    Failures of single runs are recorded, not raised.  The component budget
    is the true component count (biclusters plus planted noise) + k_extra.
    """
    if grid is None:
        grid = DEFAULT_GRIDS[experiment]
    result = GridResult()
    for value in grid:
        for rep in range(reps):
            spec = spec_for_grid_point(experiment, value, rep, seed0,
                                       **(spec_overrides or {}))
            data, truth = generate(spec)
            k = truth.n_components() + k_extra
            for method in methods:
                t0 = time.perf_counter()
                f1 = None
                eff_k = None
                error = None
                try:
                    if method.startswith("file:"):
                        bics = _load_external_biclusters(
                            method[5:], experiment, value, rep)
                    else:
                        bics = fit_and_extract(
                            data, k, method, seed=spec.seed + 7919,
                            burn_in=burn_in, thinning=thinning,
                            n_samples=n_samples)
                    f1 = f1_cells(bics, truth)
                    eff_k = bics.effective_k()
                except Exception as exc:  # deliberate: record and continue
                    error = f"{type(exc).__name__}: {exc}"
                result.rows.append(GridRow(
                    experiment=experiment, grid_value=float(value),
                    method=method, rep=rep, seed=spec.seed, f1=f1,
                    effective_k=eff_k,
                    runtime_s=time.perf_counter() - t0, error=error))
    if out_dir is not None:
        result.write(out_dir)
    return result
