"""File formats: TSV matrices with NA for missing cells, a JSON manifest
tying views into a collection, and JSON forms of ground truth, bicluster
sets, and robust-component reports."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .biclusters import (
    Bicluster,
    BiclusterSet,
    MatchedGroup,
    MatchedMember,
    RobustComponentReport,
    ViewCells,
)
from .model import ConfigurationError, DataCollection, ViewData
from .simulate import GroundTruth, PlantedMode, TrueComponent

NA = "NA"


def write_matrix_tsv(path: str | Path, values: np.ndarray,
                     row_names: list[str], col_names: list[str],
                     missing: np.ndarray | None = None) -> None:
    values = np.asarray(values)
    if values.shape != (len(row_names), len(col_names)):
        raise ConfigurationError(
            f"matrix shape {values.shape} does not match "
            f"{len(row_names)} row / {len(col_names)} column names"
        )
    lines = ["\t".join(["id"] + list(col_names))]
    for i, rname in enumerate(row_names):
        cells = [rname]
        for j in range(values.shape[1]):
            if missing is not None and missing[i, j]:
                cells.append(NA)
            else:
                cells.append(repr(float(values[i, j])))
        lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix_tsv(path: str | Path) \
        -> tuple[np.ndarray, np.ndarray | None, list[str], list[str]]:
    """Returns (values, missing-or-None, row_names, col_names)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"missing data file: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ConfigurationError(f"empty data file: {path}")
    header = lines[0].split("\t")
    col_names = header[1:]
    row_names: list[str] = []
    rows: list[list[float]] = []
    miss_rows: list[list[bool]] = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(col_names) + 1:
            raise ConfigurationError(
                f"{path}:{ln}: expected {len(col_names) + 1} columns, "
                f"got {len(parts)}"
            )
        row_names.append(parts[0])
        vals: list[float] = []
        miss: list[bool] = []
        for token in parts[1:]:
            if token == NA:
                vals.append(np.nan)
                miss.append(True)
            else:
                try:
                    vals.append(float(token))
                except ValueError as exc:
                    raise ConfigurationError(
                        f"{path}:{ln}: bad value {token!r}") from exc
                miss.append(False)
        rows.append(vals)
        miss_rows.append(miss)
    values = np.array(rows, dtype=np.float64)
    missing = np.array(miss_rows, dtype=bool)
    if not missing.any():
        missing = None
    return values, missing, row_names, col_names


def default_row_names(n: int) -> list[str]:
    return [f"s{i + 1}" for i in range(n)]


def default_col_names(view: str, d: int) -> list[str]:
    return [f"{view}_f{j + 1}" for j in range(d)]


def write_collection(data: DataCollection, out_dir: str | Path,
                     k_hint: int | list[int] | None = None) -> Path:
    """One TSV per view plus collection.json naming them.

    Mode-2 views reuse the feature names of the first mode-1 view as their
    row names; the reader checks that pairing.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sample_names = default_row_names(data.n_samples)
    entity_names = default_col_names(data.mode1[0].name,
                                     data.mode1[0].values.shape[1])
    entries = []
    for v in data.mode1:
        cols = default_col_names(v.name, v.values.shape[1])
        write_matrix_tsv(out_dir / f"{v.name}.tsv", v.values,
                         sample_names, cols, v.missing)
        entries.append({"name": v.name, "file": f"{v.name}.tsv",
                        "mode": 1, "paired_to": None})
    for v in data.mode2:
        cols = default_col_names(v.name, v.values.shape[1])
        write_matrix_tsv(out_dir / f"{v.name}.tsv", v.values,
                         entity_names, cols, v.missing)
        entries.append({"name": v.name, "file": f"{v.name}.tsv",
                        "mode": 2, "paired_to": data.mode1[0].name})
    manifest: dict = {"views": entries}
    if k_hint is not None:
        manifest["k_hint"] = k_hint
    with open(out_dir / "collection.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return out_dir / "collection.json"


def read_collection(manifest_path: str | Path) \
        -> tuple[DataCollection, dict]:
    """Load a collection; returns (data, manifest dict)."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ConfigurationError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"corrupt manifest {manifest_path}: {exc}") from exc
    if "views" not in manifest or not manifest["views"]:
        raise ConfigurationError(f"{manifest_path}: no views listed")
    base = manifest_path.parent
    mode1: list[ViewData] = []
    mode2: list[tuple[dict, ViewData, list[str]]] = []
    first_cols: list[str] | None = None
    first_name: str | None = None
    for entry in manifest["views"]:
        values, missing, row_names, col_names = read_matrix_tsv(
            base / entry["file"])
        view = ViewData(entry["name"], values, missing)
        if entry.get("mode", 1) == 1:
            if first_cols is None:
                first_cols = col_names
                first_name = entry["name"]
            mode1.append(view)
        else:
            mode2.append((entry, view, row_names))
    if not mode1:
        raise ConfigurationError(f"{manifest_path}: no mode-1 views")
    pair: list[ViewData] = []
    for entry, view, row_names in mode2:
        target = entry.get("paired_to")
        if target != first_name:
            raise ConfigurationError(
                f"view {view.name!r} is paired to {target!r}; expected the "
                f"first mode-1 view {first_name!r}"
            )
        if row_names != first_cols:
            raise ConfigurationError(
                f"view {view.name!r}: row names do not match the feature "
                f"names of {first_name!r}"
            )
        pair.append(view)
    return DataCollection(mode1=mode1, mode2=pair), manifest


def write_truth(truth: GroundTruth, path: str | Path) -> None:
    doc = {
        "view_shapes": {k: list(v) for k, v in truth.view_shapes.items()},
        "components": [
            {
                "mode": c.mode,
                "kind": c.kind,
                "sample_support": c.sample_support.tolist(),
                "feature_support": {k: v.tolist()
                                    for k, v in c.feature_support.items()},
                "cells": {
                    name: {
                        "rows": np.flatnonzero(mat.any(axis=1)).tolist(),
                        "cols": np.flatnonzero(mat.any(axis=0)).tolist(),
                    }
                    for name, mat in c.cells.items()
                },
            }
            for c in truth.components
        ],
        "modes": [
            {
                "x": m.x.tolist(),
                "loadings": {k: v.tolist() for k, v in m.loadings.items()},
            }
            for m in truth.modes
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_truth(path: str | Path) -> GroundTruth:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"missing truth file: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    shapes = {k: tuple(v) for k, v in doc["view_shapes"].items()}
    components = []
    for c in doc["components"]:
        cells = {}
        for name, rc in c["cells"].items():
            mat = np.zeros(shapes[name], dtype=bool)
            rows = np.asarray(rc["rows"], dtype=int)
            cols = np.asarray(rc["cols"], dtype=int)
            if rows.size and cols.size:
                mat[np.ix_(rows, cols)] = True
            cells[name] = mat
        components.append(TrueComponent(
            mode=int(c["mode"]),
            kind=c["kind"],
            sample_support=np.asarray(c["sample_support"], dtype=int),
            feature_support={k: np.asarray(v, dtype=int)
                             for k, v in c["feature_support"].items()},
            cells=cells,
        ))
    modes = []
    for m in doc["modes"]:
        x = np.asarray(m["x"], dtype=np.float64)
        loadings = {k: np.asarray(v, dtype=np.float64)
                    for k, v in m["loadings"].items()}
        modes.append(PlantedMode(
            x=x, h_x=(x != 0).astype(np.uint8), loadings=loadings,
            h={k: (w != 0).astype(np.uint8) for k, w in loadings.items()},
        ))
    return GroundTruth(components=components, modes=modes, view_shapes=shapes)


def write_biclusters(bics: BiclusterSet, path: str | Path) -> None:
    doc = {
        "n_snapshots": bics.n_snapshots,
        "view_shapes": {k: list(v) for k, v in bics.view_shapes.items()},
        "components": [
            {
                "mode": b.mode,
                "component": b.component,
                "views": {
                    name: {
                        "rows": vc.rows.tolist(),
                        "cols": vc.cols.tolist(),
                        "cells": np.argwhere(vc.cells).tolist(),
                        "intensity": vc.intensity.tolist(),
                        "sample_axis": vc.sample_axis,
                    }
                    for name, vc in b.views.items()
                },
            }
            for b in bics.components
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_biclusters(path: str | Path) -> BiclusterSet:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"missing bicluster file: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    shapes = {k: tuple(v) for k, v in doc["view_shapes"].items()}
    comps = []
    for b in doc["components"]:
        views = {}
        for name, vc in b["views"].items():
            cells = np.zeros(shapes[name], dtype=bool)
            for i, j in vc["cells"]:
                cells[i, j] = True
            views[name] = ViewCells(
                rows=np.asarray(vc["rows"], dtype=int),
                cols=np.asarray(vc["cols"], dtype=int),
                cells=cells,
                intensity=np.asarray(vc["intensity"], dtype=np.float64),
                sample_axis=int(vc.get("sample_axis", 0)),
            )
        comps.append(Bicluster(mode=int(b["mode"]),
                               component=int(b["component"]), views=views))
    return BiclusterSet(components=comps,
                        n_snapshots=int(doc["n_snapshots"]),
                        view_shapes=shapes)


def write_robust_report(report: RobustComponentReport, path: str | Path) -> None:
    doc = {
        "n_chains": report.n_chains,
        "threshold": report.threshold,
        "min_chains_fraction": report.min_chains_fraction,
        "groups": [
            {
                "mode": g.mode,
                "chains_present": g.chains_present,
                "robust": g.robust,
                "members": [
                    {"chain_id": m.chain_id, "component": m.component,
                     "similarity": m.similarity, "sign": m.sign}
                    for m in g.members
                ],
                "consensus_profile": g.consensus_profile.tolist(),
            }
            for g in report.groups
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_robust_report(path: str | Path) -> RobustComponentReport:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    groups = []
    for g in doc["groups"]:
        members = [MatchedMember(chain_id=m["chain_id"], mode=g["mode"],
                                 component=int(m["component"]),
                                 similarity=float(m["similarity"]),
                                 sign=float(m["sign"]))
                   for m in g["members"]]
        groups.append(MatchedGroup(
            mode=int(g["mode"]), members=members,
            chains_present=int(g["chains_present"]),
            robust=bool(g["robust"]),
            consensus_profile=np.asarray(g["consensus_profile"],
                                         dtype=np.float64)))
    return RobustComponentReport(
        n_chains=int(doc["n_chains"]), threshold=float(doc["threshold"]),
        min_chains_fraction=float(doc["min_chains_fraction"]), groups=groups)
