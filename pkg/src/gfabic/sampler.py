"""Chain orchestration: full Gibbs sweeps, chain runs, generative draws,
and posterior-mean prediction of missing cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    FA_CONCAT,
    CollectionLayout,
    ConfigurationError,
    DataCollection,
    HyperParams,
    ModelState,
    ModelVariant,
    ViewData,
    draw_prior_state,
    model_feature_dims,
    resolve_tau_priors,
)
from .updates import (
    PreparedData,
    as_prepared,
    update_alpha,
    update_factors,
    update_loadings,
    update_pi,
    update_tau,
)


@dataclass(frozen=True)
class ChainConfig:
    """Settings of one sampling chain.

    ``k`` is the component budget: one integer for both modes or a
    (mode-1, mode-2) pair.  A chain performs burn_in + thinning * n_samples
    sweeps and keeps every thinning-th state after burn-in.
    """

    k: int | tuple[int, int]
    burn_in: int = 2000
    thinning: int = 20
    n_samples: int = 101
    seed: int = 0
    variant: ModelVariant = field(default_factory=ModelVariant)
    hyper: HyperParams = field(default_factory=HyperParams)
    snr: float | None = None

    def __post_init__(self) -> None:
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ConfigurationError("thinning must be >= 1")
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")
        ks = self.k if isinstance(self.k, tuple) else (self.k,)
        if any(int(x) < 1 for x in ks):
            raise ConfigurationError("component count k must be >= 1")

    @property
    def total_sweeps(self) -> int:
        return self.burn_in + self.thinning * self.n_samples

    def to_dict(self) -> dict:
        return {
            "k": list(self.k) if isinstance(self.k, tuple) else self.k,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "variant": self.variant.to_dict(),
            "hyper": self.hyper.to_dict(),
            "snr": self.snr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChainConfig":
        k = d["k"]
        return cls(
            k=tuple(k) if isinstance(k, list) else int(k),
            burn_in=int(d["burn_in"]),
            thinning=int(d["thinning"]),
            n_samples=int(d["n_samples"]),
            seed=int(d["seed"]),
            variant=ModelVariant(**d["variant"]),
            hyper=HyperParams(**d["hyper"]),
            snr=d.get("snr"),
        )


@dataclass
class PosteriorStore:
    """Thinned posterior snapshots of one chain plus the run's metadata."""

    chain_id: str
    config: ChainConfig
    layout: CollectionLayout
    snapshots: list[ModelState]

    @property
    def n_snapshots(self) -> int:
        return len(self.snapshots)


def chain_rng(seed: int) -> np.random.Generator:
    """The package-wide generator: counter-based, one instance per chain."""
    return np.random.Generator(np.random.Philox(key=seed))


def gibbs_sweep(state: ModelState, data: DataCollection | PreparedData,
                config: ChainConfig, rng: np.random.Generator) -> ModelState:
    """One full scan over all conditionals in a fixed deterministic order.

    Per mode: factors first, then per view loadings / slab precision /
    inclusion probability / noise precision, then the mode's sample-side
    slab precision and inclusion probability.  The mode-2 alias of the
    doubly paired matrix owns no noise precision and skips that draw.
    """
    prep = as_prepared(data, state.variant)
    hyper = config.hyper
    for r, mode in enumerate(state.modes):
        update_factors(state, prep, r, rng)
        for v in range(len(mode.views)):
            update_loadings(state, prep, r, v, rng)
            update_alpha(state, hyper, r, v, rng)
            update_pi(state, hyper, r, v, rng)
            if mode.views[v].tau is not None:
                update_tau(state, prep, r, v, rng)
        update_alpha(state, hyper, r, None, rng)
        update_pi(state, hyper, r, None, rng)
    return state


def run_chain(data: DataCollection, config: ChainConfig,
              chain_id: str | None = None) -> PosteriorStore:
    """Run one chain from a prior draw and collect thinned snapshots.

    Deterministic given the seed: initialization and all sweeps consume a
    single counter-based generator.  Aborts with the iteration index if the
    state ever turns non-finite.
    """
    data.validate()
    data.check_finite()
    variant = config.variant
    prep = as_prepared(data, variant)
    rng = chain_rng(config.seed)
    dims = model_feature_dims(data, variant)
    samples = [data.n_samples]
    if variant.two_mode:
        samples.append(data.mode1[0].values.shape[1])
    tau_priors = resolve_tau_priors(data, variant, config.hyper, config.snr)
    state = draw_prior_state(dims, samples, config.k, config.hyper, variant,
                             rng, tau_priors)
    snapshots: list[ModelState] = []
    for it in range(1, config.total_sweeps + 1):
        gibbs_sweep(state, prep, config, rng)
        state.check_finite(f"after sweep {it}")
        if it > config.burn_in and (it - config.burn_in) % config.thinning == 0:
            snapshots.append(state.copy())
    if chain_id is None:
        chain_id = f"chain_{config.seed}"
    return PosteriorStore(chain_id=chain_id, config=config,
                          layout=CollectionLayout.from_data(data),
                          snapshots=snapshots)


@dataclass(frozen=True)
class DataDims:
    """Shape of a synthetic collection: samples and per-view feature counts.

    ``mode2_dims`` lists feature counts of second-mode views, whose shared
    sample axis is the feature axis of the first mode-1 view.
    """

    n_samples: int
    view_dims: tuple[int, ...]
    mode2_dims: tuple[int, ...] = ()

    def view_names(self) -> list[str]:
        return [f"view{i + 1}" for i in range(len(self.view_dims))]

    def mode2_names(self) -> list[str]:
        return [f"pair_view{i + 1}" for i in range(len(self.mode2_dims))]


def draw_data(state: ModelState, dims: DataDims,
              rng: np.random.Generator) -> DataCollection:
    """Draw observations from the likelihood given a complete state.

    The number of random values consumed depends only on the shapes, never
    on the state, so seeded streams stay aligned across repeated calls.
    """
    mode1 = state.modes[0]
    views: list[ViewData] = []
    if state.variant.kind == FA_CONCAT:
        blk = mode1.views[0]
        mean = mode1.X @ blk.W.T
        noise = rng.standard_normal(mean.shape) / np.sqrt(blk.tau)
        concat = mean + noise
        offset = 0
        for name, d in zip(dims.view_names(), dims.view_dims):
            views.append(ViewData(name, concat[:, offset:offset + d].copy()))
            offset += d
        return DataCollection(mode1=views)

    for v, (name, _) in enumerate(zip(dims.view_names(), dims.view_dims)):
        blk = mode1.views[v]
        mean = mode1.X @ blk.W.T
        if v == 0 and state.variant.two_mode:
            other = state.modes[1]
            mean = mean + other.views[0].W @ other.X.T
        noise = rng.standard_normal(mean.shape) / np.sqrt(blk.tau)
        views.append(ViewData(name, mean + noise))
    mode2: list[ViewData] = []
    if state.variant.two_mode:
        m2 = state.modes[1]
        for j, (name, _) in enumerate(zip(dims.mode2_names(), dims.mode2_dims)):
            blk = m2.views[j + 1]
            mean = m2.X @ blk.W.T
            noise = rng.standard_normal(mean.shape) / np.sqrt(blk.tau)
            mode2.append(ViewData(name, mean + noise))
    return DataCollection(mode1=views, mode2=mode2)


def ancestral_sample(
    dims: DataDims,
    k: int | tuple[int, int],
    hyper: HyperParams,
    rng: np.random.Generator,
    variant: ModelVariant | None = None,
) -> tuple[ModelState, DataCollection]:
    """Draw (state, data) top-down from the full generative model."""
    if variant is None:
        variant = ModelVariant(two_mode=bool(dims.mode2_dims))
    if variant.kind == FA_CONCAT:
        model_dims = [[sum(dims.view_dims)]]
        samples = [dims.n_samples]
    else:
        model_dims = [list(dims.view_dims)]
        samples = [dims.n_samples]
        if variant.two_mode:
            # Mode-2 model views: the transposed paired matrix (features =
            # mode-1 samples) followed by the mode-2 views proper.
            model_dims.append([dims.n_samples] + list(dims.mode2_dims))
            samples.append(dims.view_dims[0])
    state = draw_prior_state(model_dims, samples, k, hyper, variant, rng)
    data = draw_data(state, dims, rng)
    return state, data


def reconstruct_views(state: ModelState,
                      layout: CollectionLayout) -> dict[str, np.ndarray]:
    """Mean reconstruction of every data view under one state."""
    out: dict[str, np.ndarray] = {}
    mode1 = state.modes[0]
    if state.variant.kind == FA_CONCAT:
        concat = mode1.X @ mode1.views[0].W.T
        offset = 0
        for name, d in zip(layout.mode1_names, layout.mode1_dims):
            out[name] = concat[:, offset:offset + d]
            offset += d
        return out
    for v, name in enumerate(layout.mode1_names):
        mean = mode1.X @ mode1.views[v].W.T
        if v == 0 and state.variant.two_mode:
            other = state.modes[1]
            mean = mean + other.views[0].W @ other.X.T
        out[name] = mean
    if state.variant.two_mode:
        m2 = state.modes[1]
        for j, name in enumerate(layout.mode2_names):
            out[name] = m2.X @ m2.views[j + 1].W.T
    return out


def posterior_mean_reconstruction(store: PosteriorStore) -> dict[str, np.ndarray]:
    """Per-view reconstruction averaged over all snapshots."""
    if not store.snapshots:
        raise ConfigurationError("posterior store holds no snapshots")
    acc: dict[str, np.ndarray] = {}
    for state in store.snapshots:
        recon = reconstruct_views(state, store.layout)
        for name, mat in recon.items():
            if name in acc:
                acc[name] += mat
            else:
                acc[name] = mat.copy()
    s = float(store.n_snapshots)
    return {name: mat / s for name, mat in acc.items()}


def predict_missing(store: PosteriorStore,
                    data: DataCollection) -> dict[str, np.ndarray]:
    """Posterior-mean predictions at the masked cells of each view.

    Returns one matrix per view with predictions where the view's mask is
    True and NaN elsewhere.  Rows fully missing in one view still receive
    informed predictions because their factors are inferred from the other
    views during sampling.
    """
    store.layout.check_matches(data)
    mean_recon = posterior_mean_reconstruction(store)
    out: dict[str, np.ndarray] = {}
    for view in data.mode1 + data.mode2:
        recon = mean_recon[view.name]
        if view.missing is None:
            out[view.name] = np.full(view.values.shape, np.nan)
        else:
            out[view.name] = np.where(view.missing, recon, np.nan)
    return out
