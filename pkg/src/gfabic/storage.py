"""On-disk format for posterior stores.

One directory per chain: ``manifest.json`` describing dimensions, the chain
config, and the parameter inventory, plus one flat binary file per snapshot
per parameter named ``snapshot_<i>_<param>.bin``.  Real-valued matrices are
row-major 64-bit little-endian floats; inclusion masks are raw bytes.  The
manifest carries no timestamps so identical runs produce bit-identical
directories.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .model import (
    CollectionLayout,
    ConfigurationError,
    ModeBlock,
    ModelState,
    ViewBlock,
)
from .sampler import ChainConfig, PosteriorStore

FORMAT_TAG = "gfabic-store-v1"


def _param_inventory(state: ModelState) -> list[dict]:
    params: list[dict] = []

    def add(name: str, arr: np.ndarray, kind: str) -> None:
        params.append({"name": name, "shape": list(arr.shape), "kind": kind})

    for r, mode in enumerate(state.modes):
        p = f"m{r + 1}"
        add(f"{p}_X", mode.X, "float")
        add(f"{p}_Hx", mode.Hx, "mask")
        add(f"{p}_alpha_x", mode.alpha_x, "float")
        add(f"{p}_pi_x", mode.pi_x, "float")
        for v, blk in enumerate(mode.views):
            q = f"{p}_v{v}"
            add(f"{q}_W", blk.W, "float")
            add(f"{q}_H", blk.H, "mask")
            add(f"{q}_alpha", blk.alpha, "float")
            add(f"{q}_pi", blk.pi, "float")
            if blk.tau is not None:
                add(f"{q}_tau", blk.tau, "float")
    return params


def _state_arrays(state: ModelState) -> dict[str, tuple[np.ndarray, str]]:
    out: dict[str, tuple[np.ndarray, str]] = {}
    for r, mode in enumerate(state.modes):
        p = f"m{r + 1}"
        out[f"{p}_X"] = (mode.X, "float")
        out[f"{p}_Hx"] = (mode.Hx, "mask")
        out[f"{p}_alpha_x"] = (mode.alpha_x, "float")
        out[f"{p}_pi_x"] = (mode.pi_x, "float")
        for v, blk in enumerate(mode.views):
            q = f"{p}_v{v}"
            out[f"{q}_W"] = (blk.W, "float")
            out[f"{q}_H"] = (blk.H, "mask")
            out[f"{q}_alpha"] = (blk.alpha, "float")
            out[f"{q}_pi"] = (blk.pi, "float")
            if blk.tau is not None:
                out[f"{q}_tau"] = (blk.tau, "float")
    return out


def _tau_prior_table(state: ModelState) -> list[list[list[float] | None]]:
    table: list[list[list[float] | None]] = []
    for mode in state.modes:
        row: list[list[float] | None] = []
        for blk in mode.views:
            if blk.tau is None or math.isnan(blk.tau_a):
                row.append(None)
            else:
                row.append([blk.tau_a, blk.tau_b])
        table.append(row)
    return table


def save_store(store: PosteriorStore, directory: str | Path) -> Path:
    """Write a posterior store to a directory, creating it if needed."""
    if not store.snapshots:
        raise ConfigurationError("cannot save a store with no snapshots")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    first = store.snapshots[0]
    layout = store.layout
    manifest = {
        "format": FORMAT_TAG,
        "chain_id": store.chain_id,
        "config": store.config.to_dict(),
        "layout": {
            "n_samples": layout.n_samples,
            "mode1": [{"name": n, "dim": d}
                      for n, d in zip(layout.mode1_names, layout.mode1_dims)],
            "mode2": [{"name": n, "dim": d}
                      for n, d in zip(layout.mode2_names, layout.mode2_dims)],
        },
        "n_snapshots": store.n_snapshots,
        "tau_priors": _tau_prior_table(first),
        "params": _param_inventory(first),
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    for i, state in enumerate(store.snapshots):
        for name, (arr, kind) in _state_arrays(state).items():
            path = directory / f"snapshot_{i}_{name}.bin"
            if kind == "mask":
                payload = np.ascontiguousarray(arr, dtype=np.uint8).tobytes()
            else:
                payload = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            path.write_bytes(payload)
    return directory


def _read_array(path: Path, shape: tuple[int, ...], kind: str) -> np.ndarray:
    if not path.is_file():
        raise ConfigurationError(f"missing snapshot file: {path}")
    raw = path.read_bytes()
    dtype = np.dtype(np.uint8) if kind == "mask" else np.dtype("<f8")
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise ConfigurationError(
            f"corrupt snapshot file {path}: {len(raw)} bytes, expected {expected}"
        )
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
    if kind == "mask":
        return arr.copy()
    return arr.astype(np.float64)


def load_store(directory: str | Path) -> PosteriorStore:
    """Read a store directory written by save_store."""
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise ConfigurationError(f"missing manifest: {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"corrupt manifest {mpath}: {exc}") from exc
    if manifest.get("format") != FORMAT_TAG:
        raise ConfigurationError(
            f"{mpath}: unknown format {manifest.get('format')!r}"
        )
    config = ChainConfig.from_dict(manifest["config"])
    lay = manifest["layout"]
    layout = CollectionLayout(
        n_samples=int(lay["n_samples"]),
        mode1_names=tuple(v["name"] for v in lay["mode1"]),
        mode1_dims=tuple(int(v["dim"]) for v in lay["mode1"]),
        mode2_names=tuple(v["name"] for v in lay.get("mode2", [])),
        mode2_dims=tuple(int(v["dim"]) for v in lay.get("mode2", [])),
    )
    params = {p["name"]: (tuple(p["shape"]), p["kind"])
              for p in manifest["params"]}
    tau_priors = manifest["tau_priors"]
    n_modes = max(int(name[1]) for name in params) if params else 1

    snapshots: list[ModelState] = []
    for i in range(int(manifest["n_snapshots"])):
        def arr(name: str) -> np.ndarray:
            shape, kind = params[name]
            return _read_array(directory / f"snapshot_{i}_{name}.bin",
                               shape, kind)

        modes: list[ModeBlock] = []
        for r in range(n_modes):
            p = f"m{r + 1}"
            views: list[ViewBlock] = []
            v = 0
            while f"{p}_v{v}_W" in params:
                q = f"{p}_v{v}"
                has_tau = f"{q}_tau" in params
                prior = tau_priors[r][v]
                views.append(ViewBlock(
                    W=arr(f"{q}_W"),
                    H=arr(f"{q}_H"),
                    alpha=arr(f"{q}_alpha"),
                    pi=arr(f"{q}_pi"),
                    tau=arr(f"{q}_tau") if has_tau else None,
                    tau_a=prior[0] if prior else float("nan"),
                    tau_b=prior[1] if prior else float("nan"),
                ))
                v += 1
            modes.append(ModeBlock(
                X=arr(f"{p}_X"),
                Hx=arr(f"{p}_Hx"),
                alpha_x=arr(f"{p}_alpha_x"),
                pi_x=arr(f"{p}_pi_x"),
                views=views,
            ))
        snapshots.append(ModelState(modes=modes, variant=config.variant))
    return PosteriorStore(chain_id=manifest["chain_id"], config=config,
                          layout=layout, snapshots=snapshots)
