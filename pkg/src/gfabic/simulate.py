"""Synthetic benchmark data with planted bicluster structure.

Experiments follow one shared recipe: a sample support drawn once per
component, per-view feature supports, Gaussian values on the active cells,
additive Gaussian noise.  Variants differ in view heterogeneity, group
sparsity, structured noise, overlap, and the strength of the auxiliary-view
signal.  A separate generator builds the two-mode block design used by the
paired-data demonstration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ConfigurationError, DataCollection, ViewData

EXPERIMENTS = ("a", "b", "c", "d", "e", "f")

# Heterogeneous (bicluster variance, noise variance) pairs for auxiliary
# views; the view of interest always uses (1, 1).
HETERO_VARIANCES = ((0.2, 0.2), (5.0, 5.0), (0.2, 5.0), (5.0, 0.2))


@dataclass(frozen=True)
class SimulationSpec:
    """Settings for one synthetic dataset.

    ``activity`` is the fraction of samples and of features covered by each
    planted bicluster.  ``n_noise_components`` adds dense view-specific
    rank-1 structure (experiment d).  ``aux_precision`` scales the active
    loading values of auxiliary views as draws from N(0, 1/aux_precision)
    (experiment f).  ``bicluster_vars``/``noise_vars`` override the
    per-view variance defaults when given.
    """

    experiment: str = "a"
    n_views: int = 5
    n_samples: int = 50
    view_dim: int = 100
    k_true: int = 1
    activity: float = 0.7
    n_noise_components: int = 0
    aux_precision: float | None = None
    bicluster_vars: tuple[float, ...] | None = None
    noise_vars: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}"
            )
        if not 0.0 < self.activity <= 1.0:
            raise ConfigurationError("activity must be in (0, 1]")
        if self.n_views < 1 or self.n_samples < 1 or self.view_dim < 1:
            raise ConfigurationError("n_views, n_samples, view_dim must be >= 1")
        if self.k_true < 1:
            raise ConfigurationError("k_true must be >= 1")
        if self.n_noise_components < 0:
            raise ConfigurationError("n_noise_components must be >= 0")
        if self.aux_precision is not None and not self.aux_precision > 0:
            raise ConfigurationError("aux_precision must be positive")
        for name in ("bicluster_vars", "noise_vars"):
            vals = getattr(self, name)
            if vals is not None:
                if len(vals) != self.n_views:
                    raise ConfigurationError(f"{name} must list one value per view")
                if any(v <= 0 for v in vals):
                    raise ConfigurationError(f"{name} entries must be positive")

    def variances(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Per-view (bicluster variance, noise variance) after defaults."""
        if self.experiment == "a":
            bic = [1.0] * self.n_views
            noise = [1.0] * self.n_views
        elif self.experiment == "f":
            # Auxiliary signal strength is controlled by aux_precision
            # alone, so noise stays at 1 in every view.
            prec = 1.0 if self.aux_precision is None else self.aux_precision
            bic = [1.0] + [1.0 / prec] * (self.n_views - 1)
            noise = [1.0] * self.n_views
        else:
            bic, noise = [1.0], [1.0]
            for i in range(self.n_views - 1):
                b, n = HETERO_VARIANCES[i % len(HETERO_VARIANCES)]
                bic.append(b)
                noise.append(n)
        if self.bicluster_vars is not None:
            bic = list(self.bicluster_vars)
        if self.noise_vars is not None:
            noise = list(self.noise_vars)
        return tuple(bic), tuple(noise)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "n_views": self.n_views,
            "n_samples": self.n_samples,
            "view_dim": self.view_dim,
            "k_true": self.k_true,
            "activity": self.activity,
            "n_noise_components": self.n_noise_components,
            "aux_precision": self.aux_precision,
            "bicluster_vars": list(self.bicluster_vars) if self.bicluster_vars else None,
            "noise_vars": list(self.noise_vars) if self.noise_vars else None,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationSpec":
        d = dict(d)
        for name in ("bicluster_vars", "noise_vars"):
            if d.get(name) is not None:
                d[name] = tuple(d[name])
        return cls(**d)


@dataclass
class TrueComponent:
    """One planted component with its cell footprint per view.

    ``cells`` matrices are boolean and in data orientation.  ``kind`` is
    "bicluster" for planted biclusters and "noise" for the dense rank-1
    view-specific structure of experiment (d); both are real planted
    components whose cell sets are the supports of their x w^T products.
    """

    mode: int
    kind: str
    sample_support: np.ndarray
    feature_support: dict[str, np.ndarray]
    cells: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class PlantedMode:
    """Planted factor/loading matrices of one mode (model orientation)."""

    x: np.ndarray
    h_x: np.ndarray
    loadings: dict[str, np.ndarray]
    h: dict[str, np.ndarray]


@dataclass
class GroundTruth:
    components: list[TrueComponent]
    modes: list[PlantedMode]
    view_shapes: dict[str, tuple[int, int]]

    def union_cells(self, view: str) -> np.ndarray:
        out = np.zeros(self.view_shapes[view], dtype=bool)
        for comp in self.components:
            mat = comp.cells.get(view)
            if mat is not None:
                out |= mat
        return out

    def n_components(self, kind: str | None = None) -> int:
        return sum(1 for c in self.components
                   if kind is None or c.kind == kind)


def _support(size: int, active: float, rng: np.random.Generator) -> np.ndarray:
    """A contiguous index block covering round(active * size) positions."""
    span = max(1, int(round(active * size)))
    start = int(rng.integers(0, size - span + 1))
    return np.arange(start, start + span)


def _cells_from_supports(shape: tuple[int, int], rows: np.ndarray,
                         cols: np.ndarray) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    if rows.size and cols.size:
        out[np.ix_(rows, cols)] = True
    return out


def generate(spec: SimulationSpec) -> tuple[DataCollection, GroundTruth]:
    """Build one dataset and its ground truth from a SimulationSpec.

    Active factor entries are N(0,1) and active loading entries
    N(0, bicluster variance of the view); all inactive entries are exact
    zeros.  The sample support of a bicluster is shared by all views,
    feature supports are drawn per view.  Experiment (c) omits every third
    view (the 3rd, 6th, ...) from each bicluster.  Experiment (d) appends
    dense single-view rank-1 components cycling over the views.
    """
    rng = np.random.default_rng(spec.seed)
    m, n, d = spec.n_views, spec.n_samples, spec.view_dim
    names = [f"view{i + 1}" for i in range(m)]
    bic_var, noise_var = spec.variances()

    k_total = spec.k_true + spec.n_noise_components
    x = np.zeros((n, k_total))
    loadings = {name: np.zeros((d, k_total)) for name in names}
    components: list[TrueComponent] = []

    for k in range(spec.k_true):
        rows = _support(n, spec.activity, rng)
        x[rows, k] = rng.standard_normal(rows.size)
        feature_support: dict[str, np.ndarray] = {}
        cells: dict[str, np.ndarray] = {}
        for v, name in enumerate(names):
            if spec.experiment == "c" and (v + 1) % 3 == 0:
                continue  # group sparsity: absent from every 3rd view
            cols = _support(d, spec.activity, rng)
            loadings[name][cols, k] = (
                rng.standard_normal(cols.size) * np.sqrt(bic_var[v])
            )
            feature_support[name] = cols
            cells[name] = _cells_from_supports((n, d), rows, cols)
        components.append(TrueComponent(
            mode=0, kind="bicluster", sample_support=rows,
            feature_support=feature_support, cells=cells))

    for j in range(spec.n_noise_components):
        k = spec.k_true + j
        v = j % m
        name = names[v]
        x[:, k] = rng.standard_normal(n)
        loadings[name][:, k] = rng.standard_normal(d)
        rows = np.arange(n)
        cols = np.arange(d)
        components.append(TrueComponent(
            mode=0, kind="noise", sample_support=rows,
            feature_support={name: cols},
            cells={name: _cells_from_supports((n, d), rows, cols)}))

    views = []
    for v, name in enumerate(names):
        signal = x @ loadings[name].T
        eps = rng.standard_normal((n, d)) * np.sqrt(noise_var[v])
        views.append(ViewData(name, signal + eps))
    data = DataCollection(mode1=views)

    planted = PlantedMode(
        x=x, h_x=(x != 0).astype(np.uint8),
        loadings=loadings,
        h={name: (w != 0).astype(np.uint8) for name, w in loadings.items()},
    )
    truth = GroundTruth(
        components=components, modes=[planted],
        view_shapes={name: (n, d) for name in names},
    )
    return data, truth


def _truncated_normal(size: int, rng: np.random.Generator,
                      lo: float = 1.0, hi: float = 2.0) -> np.ndarray:
    """N(0,1) draws rejected until lo <= |value| <= hi."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        draw = rng.standard_normal(size - filled)
        keep = draw[(np.abs(draw) >= lo) & (np.abs(draw) <= hi)]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


# Block plan of the two-mode demonstration dataset: three mode-1 components
# and one mode-2 component, pairwise disjoint in every matrix they touch.
_BLOCK_PLAN = {
    "n_samples": 200,
    "mode1_dims": (100, 50, 60),
    "mode2_dim": 70,
    "mode1": [
        {"samples": (0, 50), "features": {0: (0, 25), 1: (0, 20), 2: (0, 25)}},
        {"samples": (50, 100), "features": {0: (25, 50), 1: (20, 40), 2: (25, 50)}},
        {"samples": (100, 150), "features": {0: (50, 75)}},
    ],
    # The mode-2 component pairs entities (features of the first matrix)
    # with the mode-2 view and reaches into the paired matrix rows.
    "mode2": {"entities": (75, 100), "features": (0, 35),
              "cross_samples": (150, 200)},
}


def generate_two_mode_blocks(seed: int = 0) -> tuple[DataCollection, GroundTruth]:
    """Two-mode collection with four non-overlapping planted blocks.

    Matrices: 200x100, 200x50, 200x60 sharing samples, plus a 100x70 view
    paired on the features of the first matrix.  Three components live in
    mode 1 and one in mode 2; nonzero values are standard normal draws
    rejection-truncated to absolute values in [1, 2]; noise variance is 1
    everywhere.
    """
    rng = np.random.default_rng(seed)
    plan = _BLOCK_PLAN
    n1 = plan["n_samples"]
    dims1 = plan["mode1_dims"]
    d1 = dims1[0]
    n2 = plan["mode2_dim"]
    names1 = [f"view{i + 1}" for i in range(len(dims1))]
    name2 = "pair_view1"
    k1 = len(plan["mode1"])

    x1 = np.zeros((n1, k1))
    w1 = {name: np.zeros((dims1[i], k1)) for i, name in enumerate(names1)}
    components: list[TrueComponent] = []
    for k, block in enumerate(plan["mode1"]):
        lo, hi = block["samples"]
        rows = np.arange(lo, hi)
        x1[rows, k] = _truncated_normal(rows.size, rng)
        feature_support: dict[str, np.ndarray] = {}
        cells: dict[str, np.ndarray] = {}
        for v, (flo, fhi) in sorted(block["features"].items()):
            cols = np.arange(flo, fhi)
            w1[names1[v]][cols, k] = _truncated_normal(cols.size, rng)
            feature_support[names1[v]] = cols
            cells[names1[v]] = _cells_from_supports(
                (n1, dims1[v]), rows, cols)
        components.append(TrueComponent(
            mode=0, kind="bicluster", sample_support=rows,
            feature_support=feature_support, cells=cells))

    blk2 = plan["mode2"]
    entities = np.arange(*blk2["entities"])
    feat2 = np.arange(*blk2["features"])
    cross = np.arange(*blk2["cross_samples"])
    x2 = np.zeros((d1, 1))
    x2[entities, 0] = _truncated_normal(entities.size, rng)
    wc = np.zeros((n1, 1))
    wc[cross, 0] = _truncated_normal(cross.size, rng)
    w2 = np.zeros((n2, 1))
    w2[feat2, 0] = _truncated_normal(feat2.size, rng)
    components.append(TrueComponent(
        mode=1, kind="bicluster", sample_support=entities,
        feature_support={names1[0]: cross, name2: feat2},
        cells={
            names1[0]: _cells_from_supports((n1, d1), cross, entities),
            name2: _cells_from_supports((d1, n2), entities, feat2),
        }))

    views = []
    for v, name in enumerate(names1):
        mean = x1 @ w1[name].T
        if v == 0:
            mean = mean + wc @ x2.T
        views.append(ViewData(name, mean + rng.standard_normal(mean.shape)))
    pair_mean = x2 @ w2.T
    pair = ViewData(name2, pair_mean + rng.standard_normal(pair_mean.shape))
    data = DataCollection(mode1=views, mode2=[pair])

    modes = [
        PlantedMode(x=x1, h_x=(x1 != 0).astype(np.uint8), loadings=w1,
                    h={n: (w != 0).astype(np.uint8) for n, w in w1.items()}),
        PlantedMode(x=x2, h_x=(x2 != 0).astype(np.uint8),
                    loadings={names1[0]: wc, name2: w2},
                    h={names1[0]: (wc != 0).astype(np.uint8),
                       name2: (w2 != 0).astype(np.uint8)}),
    ]
    shapes = {name: (n1, dims1[i]) for i, name in enumerate(names1)}
    shapes[name2] = (d1, n2)
    truth = GroundTruth(components=components, modes=modes, view_shapes=shapes)
    return data, truth
