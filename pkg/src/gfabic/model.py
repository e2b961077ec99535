"""Core data model: multi-view data collections, hyperparameters, latent state.

The model factorizes every data view as factors times loadings plus Gaussian
noise, with spike-and-slab priors on both factors and loadings so that
inactive entries are exactly zero.  A collection may carry a second pairing
mode whose views share the feature axis of the first mode-1 view; the doubly
paired matrix receives additive contributions from both modes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln

GFA = "gfa"
FA_CONCAT = "fa"

# Inclusion probabilities are clamped to this band inside log computations to
# avoid -inf from degenerate Beta draws.
PI_FLOOR = 1e-12

LOG_2PI = float(np.log(2.0 * np.pi))


class GfabicError(Exception):
    """Base class for package errors."""


class ConfigurationError(GfabicError):
    """Invalid dimensions, options, or file contents."""


class NumericalError(GfabicError):
    """Non-finite values encountered where finite ones are required."""


class InvariantError(GfabicError):
    """A model-state invariant does not hold."""


@dataclass
class ViewData:
    """One observation matrix plus an optional missingness mask.

    ``values`` is samples-by-features for mode-1 views and
    paired-entities-by-features for mode-2 views.  ``missing`` marks
    unobserved cells with True; None means fully observed.  Values at
    missing cells are ignored (they may be NaN).
    """

    name: str
    values: np.ndarray
    missing: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ConfigurationError(f"view {self.name!r}: values must be 2-D")
        if self.missing is not None:
            self.missing = np.asarray(self.missing, dtype=bool)
            if self.missing.shape != self.values.shape:
                raise ConfigurationError(
                    f"view {self.name!r}: mask shape {self.missing.shape} "
                    f"!= data shape {self.values.shape}"
                )

    @property
    def n_missing(self) -> int:
        return 0 if self.missing is None else int(self.missing.sum())


@dataclass
class DataCollection:
    """Views paired in up to two modes.

    Mode-1 views share their rows (samples).  Mode-2 views, when present,
    share their rows with the columns (features) of the first mode-1 view;
    that first matrix is then generated from the components of both modes.
    """

    mode1: list[ViewData]
    mode2: list[ViewData] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not self.mode1:
            raise ConfigurationError("at least one mode-1 view is required")
        n1 = self.mode1[0].values.shape[0]
        for v in self.mode1:
            if v.values.shape[0] != n1:
                raise ConfigurationError(
                    f"mode-1 view {v.name!r} has {v.values.shape[0]} rows, "
                    f"expected {n1}"
                )
        d1 = self.mode1[0].values.shape[1]
        for v in self.mode2:
            if v.values.shape[0] != d1:
                raise ConfigurationError(
                    f"mode-2 view {v.name!r} has {v.values.shape[0]} rows; "
                    f"must equal the {d1} features of {self.mode1[0].name!r}"
                )
        names = [v.name for v in self.mode1] + [v.name for v in self.mode2]
        if len(set(names)) != len(names):
            raise ConfigurationError("view names must be unique")

    @property
    def two_mode(self) -> bool:
        return bool(self.mode2)

    @property
    def n_samples(self) -> int:
        return self.mode1[0].values.shape[0]

    def view_names(self) -> list[str]:
        return [v.name for v in self.mode1] + [v.name for v in self.mode2]

    def check_finite(self) -> None:
        """Raise NumericalError naming the first non-finite observed cell."""
        for v in self.mode1 + self.mode2:
            bad = ~np.isfinite(v.values)
            if v.missing is not None:
                bad &= ~v.missing
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise NumericalError(
                    f"non-finite observed value in view {v.name!r} "
                    f"at cell ({i}, {j})"
                )


@dataclass(frozen=True)
class CollectionLayout:
    """Names and dimensions of the original data views.

    Kept alongside posterior snapshots so that results map back to the
    data even for the concatenated-FA variant, whose model state no longer
    shows the view boundaries.
    """

    n_samples: int
    mode1_names: tuple[str, ...]
    mode1_dims: tuple[int, ...]
    mode2_names: tuple[str, ...] = ()
    mode2_dims: tuple[int, ...] = ()

    @classmethod
    def from_data(cls, data: DataCollection) -> "CollectionLayout":
        return cls(
            n_samples=data.n_samples,
            mode1_names=tuple(v.name for v in data.mode1),
            mode1_dims=tuple(v.values.shape[1] for v in data.mode1),
            mode2_names=tuple(v.name for v in data.mode2),
            mode2_dims=tuple(v.values.shape[1] for v in data.mode2),
        )

    @property
    def two_mode(self) -> bool:
        return bool(self.mode2_names)

    def view_shapes(self) -> dict[str, tuple[int, int]]:
        shapes = {n: (self.n_samples, d)
                  for n, d in zip(self.mode1_names, self.mode1_dims)}
        n_entities = self.mode1_dims[0] if self.mode1_dims else 0
        shapes.update({n: (n_entities, d)
                       for n, d in zip(self.mode2_names, self.mode2_dims)})
        return shapes

    def check_matches(self, data: DataCollection) -> None:
        other = CollectionLayout.from_data(data)
        if other != self:
            known = set(self.mode1_names) | set(self.mode2_names)
            for name in other.mode1_names + other.mode2_names:
                if name not in known:
                    raise KeyError(f"view {name!r} is not part of this model")
            raise ConfigurationError(
                "data views do not match the model layout "
                f"(model: {self}, data: {other})"
            )


@dataclass(frozen=True)
class HyperParams:
    """Shape parameters of the Beta/Gamma hyperpriors; all default to 1."""

    a_pi: float = 1.0
    b_pi: float = 1.0
    a_alpha: float = 1.0
    b_alpha: float = 1.0
    a_tau: float = 1.0
    b_tau: float = 1.0

    def __post_init__(self) -> None:
        for name in ("a_pi", "b_pi", "a_alpha", "b_alpha", "a_tau", "b_tau"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"hyperparameter {name} must be > 0")

    def to_dict(self) -> dict:
        return {
            "a_pi": self.a_pi, "b_pi": self.b_pi,
            "a_alpha": self.a_alpha, "b_alpha": self.b_alpha,
            "a_tau": self.a_tau, "b_tau": self.b_tau,
        }


@dataclass(frozen=True)
class ModelVariant:
    """Model flavour: proper multi-view GFA or the concatenated-FA baseline.

    The FA baseline flattens all mode-1 views into one block with a single
    slab precision and inclusion probability per component across all
    features, and a feature-wise noise precision.  It does not support a
    second mode.
    """

    kind: str = GFA
    two_mode: bool = False

    def __post_init__(self) -> None:
        if self.kind not in (GFA, FA_CONCAT):
            raise ConfigurationError(f"unknown variant kind {self.kind!r}")
        if self.kind == FA_CONCAT and self.two_mode:
            raise ConfigurationError(
                "the concatenated-FA baseline does not support two-mode data"
            )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "two_mode": self.two_mode}


@dataclass
class ViewBlock:
    """Loading-side state of one model view.

    W holds the loadings (features x K) with exact zeros wherever the
    inclusion indicator H is 0.  alpha and pi are the per-component slab
    precisions and inclusion probabilities.  tau is the noise precision:
    shape (1,) when shared across the view, (n_features,) for the
    feature-wise FA baseline, and None for the mode-2 alias of the doubly
    paired matrix (whose noise precision lives with mode-1 view 0).
    tau_a/tau_b are the resolved prior shape/rate for tau, which may be
    view-specific when an SNR-informed prior is requested.
    """

    W: np.ndarray
    H: np.ndarray
    alpha: np.ndarray
    pi: np.ndarray
    tau: np.ndarray | None
    tau_a: float = 1.0
    tau_b: float = 1.0

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    @property
    def k(self) -> int:
        return self.W.shape[1]


@dataclass
class ModeBlock:
    """Factor-side state of one mode plus its view blocks.

    X is samples x K with exact zeros where Hx is 0; alpha_x and pi_x are
    the sample-side per-component slab precisions and inclusion
    probabilities.
    """

    X: np.ndarray
    Hx: np.ndarray
    alpha_x: np.ndarray
    pi_x: np.ndarray
    views: list[ViewBlock]

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]


@dataclass
class ModelState:
    """All latent variables and parameters of one sampling chain."""

    modes: list[ModeBlock]
    variant: ModelVariant

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)

    def check_finite(self, context: str = "") -> None:
        where = f" {context}" if context else ""
        for r, mode in enumerate(self.modes):
            arrays = {"X": mode.X, "alpha_x": mode.alpha_x, "pi_x": mode.pi_x}
            for name, arr in arrays.items():
                if not np.all(np.isfinite(arr)):
                    raise NumericalError(f"non-finite {name} in mode {r + 1}{where}")
            for v, blk in enumerate(mode.views):
                arrays = {"W": blk.W, "alpha": blk.alpha, "pi": blk.pi}
                if blk.tau is not None:
                    arrays["tau"] = blk.tau
                for name, arr in arrays.items():
                    if not np.all(np.isfinite(arr)):
                        raise NumericalError(
                            f"non-finite {name} in mode {r + 1} view {v}{where}"
                        )


def check_state(state: ModelState) -> None:
    """Verify every model-state invariant, raising InvariantError on failure.

    Checked: exact zeros outside the inclusion masks, mask values in {0,1},
    positive precisions, inclusion probabilities inside (0,1), and
    consistent component counts within each mode.
    """
    for r, mode in enumerate(state.modes):
        k = mode.k
        _check_pair(mode.X, mode.Hx, f"mode {r + 1} factors")
        _check_positive(mode.alpha_x, f"mode {r + 1} alpha_x")
        _check_prob(mode.pi_x, f"mode {r + 1} pi_x")
        if mode.alpha_x.shape != (k,) or mode.pi_x.shape != (k,):
            raise InvariantError(f"mode {r + 1}: component-vector length != K")
        for v, blk in enumerate(mode.views):
            label = f"mode {r + 1} view {v}"
            if blk.W.shape[1] != k:
                raise InvariantError(f"{label}: W has {blk.W.shape[1]} columns, K={k}")
            _check_pair(blk.W, blk.H, f"{label} loadings")
            _check_positive(blk.alpha, f"{label} alpha")
            _check_prob(blk.pi, f"{label} pi")
            if blk.tau is not None:
                _check_positive(blk.tau, f"{label} tau")


def _check_pair(values: np.ndarray, mask: np.ndarray, label: str) -> None:
    if values.shape != mask.shape:
        raise InvariantError(f"{label}: value/mask shape mismatch")
    if not np.isin(mask, (0, 1)).all():
        raise InvariantError(f"{label}: mask entries outside {{0, 1}}")
    if np.any(values[mask == 0] != 0.0):
        raise InvariantError(f"{label}: nonzero value where mask is 0")


def _check_positive(arr: np.ndarray, label: str) -> None:
    if not np.all(arr > 0):
        raise InvariantError(f"{label}: non-positive entries")


def _check_prob(arr: np.ndarray, label: str) -> None:
    if not (np.all(arr > 0) and np.all(arr < 1)):
        raise InvariantError(f"{label}: entries outside (0, 1)")


def clamped_logit(pi: np.ndarray | float) -> np.ndarray | float:
    p = np.clip(pi, PI_FLOOR, 1.0 - PI_FLOOR)
    return np.log(p) - np.log1p(-p)


def _clamped_log(pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.clip(pi, PI_FLOOR, 1.0 - PI_FLOOR)
    return np.log(p), np.log1p(-p)


def resolve_tau_priors(
    data: DataCollection,
    variant: ModelVariant,
    hyper: HyperParams,
    snr: float | None = None,
    pseudo_obs: float = 10.0,
) -> list[list[tuple[float, float]]]:
    """Per-mode, per-model-view (shape, rate) priors for the noise precision.

    With ``snr`` set, each view that owns a noise precision gets the mildly
    informative prior shape=pseudo_obs, rate=pseudo_obs*snr*var(view), where
    the variance is taken over the view's observed cells.  Without ``snr``
    every view uses (a_tau, b_tau).  The mode-2 alias of the doubly paired
    matrix owns no noise precision and is reported as (nan, nan).
    """
    if snr is not None and snr <= 0:
        raise ConfigurationError("snr must be positive")

    def prior_for(view: ViewData | None, values: np.ndarray | None = None,
                  missing: np.ndarray | None = None) -> tuple[float, float]:
        if snr is None:
            return hyper.a_tau, hyper.b_tau
        if view is not None:
            values, missing = view.values, view.missing
        obs = values if missing is None else values[~missing]
        var = float(np.var(obs)) if obs.size else 1.0
        if var <= 0:
            var = 1.0
        return pseudo_obs, pseudo_obs * snr * var

    if variant.kind == FA_CONCAT:
        values = np.hstack([v.values for v in data.mode1])
        missing = _hstack_missing(data.mode1)
        return [[prior_for(None, values, missing)]]

    priors = [[prior_for(v) for v in data.mode1]]
    if variant.two_mode:
        mode2 = [(float("nan"), float("nan"))]
        mode2 += [prior_for(v) for v in data.mode2]
        priors.append(mode2)
    return priors


def _hstack_missing(views: list[ViewData]) -> np.ndarray | None:
    if all(v.missing is None for v in views):
        return None
    return np.hstack([
        v.missing if v.missing is not None
        else np.zeros(v.values.shape, dtype=bool)
        for v in views
    ])


def _as_k_pair(k: int | tuple[int, int]) -> tuple[int, int]:
    if isinstance(k, tuple):
        k1, k2 = k
    else:
        k1 = k2 = int(k)
    if k1 < 1 or k2 < 1:
        raise ConfigurationError("component count K must be >= 1")
    return int(k1), int(k2)


def model_feature_dims(data: DataCollection, variant: ModelVariant) -> list[list[int]]:
    """Feature dimension of each model view, per mode.

    GFA maps each data view to one model view; the FA baseline concatenates
    all mode-1 views into a single block.  In two-mode models the first
    mode-2 view block is the transposed doubly paired matrix, whose
    features are the mode-1 samples.
    """
    if variant.kind == FA_CONCAT:
        return [[sum(v.values.shape[1] for v in data.mode1)]]
    dims = [[v.values.shape[1] for v in data.mode1]]
    if variant.two_mode:
        dims.append([data.n_samples] + [v.values.shape[1] for v in data.mode2])
    return dims


def draw_prior_state(
    data_dims: list[list[int]],
    mode_samples: list[int],
    k: int | tuple[int, int],
    hyper: HyperParams,
    variant: ModelVariant,
    rng: np.random.Generator,
    tau_priors: list[list[tuple[float, float]]] | None = None,
) -> ModelState:
    """Draw a complete state from the prior.

    ``data_dims[r][v]`` is the feature count of model view v in mode r and
    ``mode_samples[r]`` the sample count of mode r.  Draw order is fixed
    (mode by mode: sample side, then each view) so that a seeded generator
    reproduces the state bit for bit.
    """
    k1, k2 = _as_k_pair(k)
    ks = [k1, k2]
    modes: list[ModeBlock] = []
    for r, view_dims in enumerate(data_dims):
        kr = ks[r]
        n = mode_samples[r]
        alpha_x = rng.gamma(hyper.a_alpha, 1.0 / hyper.b_alpha, size=kr)
        pi_x = rng.beta(hyper.a_pi, hyper.b_pi, size=kr)
        hx = (rng.random((n, kr)) < pi_x).astype(np.uint8)
        x = np.where(hx == 1, rng.standard_normal((n, kr)) / np.sqrt(alpha_x), 0.0)
        views: list[ViewBlock] = []
        for v, d in enumerate(view_dims):
            ta, tb = (hyper.a_tau, hyper.b_tau)
            if tau_priors is not None:
                ta, tb = tau_priors[r][v]
            alpha = rng.gamma(hyper.a_alpha, 1.0 / hyper.b_alpha, size=kr)
            pi = rng.beta(hyper.a_pi, hyper.b_pi, size=kr)
            h = (rng.random((d, kr)) < pi).astype(np.uint8)
            w = np.where(h == 1, rng.standard_normal((d, kr)) / np.sqrt(alpha), 0.0)
            if r == 1 and v == 0:
                tau = None
                ta = tb = float("nan")
            elif variant.kind == FA_CONCAT:
                tau = rng.gamma(ta, 1.0 / tb, size=d)
            else:
                tau = rng.gamma(ta, 1.0 / tb, size=1)
            views.append(ViewBlock(W=w, H=h, alpha=alpha, pi=pi, tau=tau,
                                   tau_a=ta, tau_b=tb))
        modes.append(ModeBlock(X=x, Hx=hx, alpha_x=alpha_x, pi_x=pi_x, views=views))
    return ModelState(modes=modes, variant=variant)


def init_state(
    data: DataCollection,
    k: int | tuple[int, int],
    hyper: HyperParams,
    variant: ModelVariant | None = None,
    rng_seed: int = 0,
    snr: float | None = None,
) -> ModelState:
    """Initialize a chain state by drawing every parameter from its prior.

    Prior-distributed initialization keeps the chain a valid sample of the
    joint model from sweep zero, which the sampler-validity test relies on.
    Deterministic given ``rng_seed``.
    """
    if variant is None:
        variant = ModelVariant(two_mode=data.two_mode)
    if variant.two_mode and not data.mode2:
        raise ConfigurationError("two_mode variant requires mode-2 views")
    if data.mode2 and not variant.two_mode:
        raise ConfigurationError("data has mode-2 views; variant is single-mode")
    data.validate()
    rng = np.random.Generator(np.random.Philox(key=rng_seed))
    dims = model_feature_dims(data, variant)
    samples = [data.n_samples]
    if variant.two_mode:
        samples.append(data.mode1[0].values.shape[1])
    tau_priors = resolve_tau_priors(data, variant, hyper, snr)
    return draw_prior_state(dims, samples, k, hyper, variant, rng, tau_priors)


def _gamma_logpdf(x: np.ndarray, a: float, b: float) -> np.ndarray:
    return a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(x) - b * x


def _beta_logpdf(x: np.ndarray, a: float, b: float) -> np.ndarray:
    xc = np.clip(x, PI_FLOOR, 1.0 - PI_FLOOR)
    return (a - 1.0) * np.log(xc) + (b - 1.0) * np.log1p(-xc) - betaln(a, b)


def _spike_slab_logprior(values: np.ndarray, mask: np.ndarray,
                         alpha: np.ndarray, pi: np.ndarray) -> float:
    log_pi, log_1mpi = _clamped_log(pi)
    n_on = mask.sum(axis=0).astype(np.float64)
    n_off = mask.shape[0] - n_on
    total = float(n_on @ log_pi + n_off @ log_1mpi)
    # Slab density for included entries; excluded ones sit on the point mass.
    sq = (values * values).sum(axis=0)
    total += float(0.5 * (n_on * (np.log(alpha) - LOG_2PI)).sum()
                   - 0.5 * (alpha * sq).sum())
    return total


def log_joint(state: ModelState, data: DataCollection, hyper: HyperParams) -> float:
    """Exact log density of the observed data and the full state.

    The Gaussian likelihood runs over observed cells only; the doubly
    paired matrix contributes once, with the mode-2 term added to its mean.
    Spike-and-slab priors contribute log pi or log(1-pi) through the
    inclusion masks, the slab density for included entries, and the
    Gamma/Beta hyperprior terms for the precisions and probabilities.
    """
    from .updates import prepare  # local import to avoid a cycle

    data.check_finite()
    state.check_finite("in log_joint")
    prep = prepare(data, state.variant)
    total = 0.0
    for r, mode in enumerate(state.modes):
        for v, blk in enumerate(mode.views):
            pv = prep.modes[r][v]
            if pv.alias:
                continue  # paired matrix already counted through mode 1
            resid = pv.values - mode.X @ blk.W.T
            if r == 0 and v == 0 and state.variant.two_mode:
                other = state.modes[1]
                resid = resid - other.views[0].W @ other.X.T
            if pv.observed is not None:
                resid = np.where(pv.observed, resid, 0.0)
            tau = blk.tau
            if tau.shape[0] == 1:
                t = float(tau[0])
                total += 0.5 * pv.n_observed * (np.log(t) - LOG_2PI)
                total += -0.5 * t * float((resid * resid).sum())
            else:
                n_obs_d = pv.observed_per_feature
                ssr_d = (resid * resid).sum(axis=0)
                total += float(0.5 * (n_obs_d * (np.log(tau) - LOG_2PI)).sum())
                total += float(-0.5 * (tau * ssr_d).sum())

    for mode in state.modes:
        total += _spike_slab_logprior(mode.X, mode.Hx, mode.alpha_x, mode.pi_x)
        total += float(_gamma_logpdf(mode.alpha_x, hyper.a_alpha, hyper.b_alpha).sum())
        total += float(_beta_logpdf(mode.pi_x, hyper.a_pi, hyper.b_pi).sum())
        for blk in mode.views:
            total += _spike_slab_logprior(blk.W, blk.H, blk.alpha, blk.pi)
            total += float(_gamma_logpdf(blk.alpha, hyper.a_alpha, hyper.b_alpha).sum())
            total += float(_beta_logpdf(blk.pi, hyper.a_pi, hyper.b_pi).sum())
            if blk.tau is not None:
                total += float(_gamma_logpdf(blk.tau, blk.tau_a, blk.tau_b).sum())
    if not np.isfinite(total):
        raise NumericalError("log_joint evaluated to a non-finite value")
    return float(total)
