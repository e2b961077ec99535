"""Gibbs conditional updates for the sparse group factor model.

Each update op recomputes the residuals it needs from the current state, so
every op is correct in isolation.  Loading and factor updates draw the
inclusion indicator and the coefficient jointly from their marginal
conditional: entries within one component are conditionally independent
given everything else, so the whole column is drawn in one vectorized block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import (
    FA_CONCAT,
    ConfigurationError,
    DataCollection,
    HyperParams,
    InvariantError,
    ModelState,
    ModelVariant,
    clamped_logit,
)


@dataclass
class PreparedView:
    """One model view in sample-major orientation, missing cells zero-filled.

    ``observed`` is None for fully observed views.  ``alias`` marks the
    mode-2 copy of the doubly paired matrix, which owns no noise precision.
    """

    values: np.ndarray
    observed: np.ndarray | None
    n_observed: int
    observed_per_feature: np.ndarray
    alias: bool = False


@dataclass
class PreparedData:
    """Per-mode model views derived from a DataCollection and variant."""

    modes: list[list[PreparedView]]
    variant: ModelVariant


def _prepared_view(values: np.ndarray, missing: np.ndarray | None,
                   alias: bool = False) -> PreparedView:
    if missing is not None and missing.any():
        observed = ~missing
        vals = np.where(observed, values, 0.0)
        n_obs_d = observed.sum(axis=0)
        return PreparedView(vals, observed, int(observed.sum()),
                            n_obs_d.astype(np.float64), alias)
    d = values.shape[1]
    per_feature = np.full(d, float(values.shape[0]))
    return PreparedView(np.ascontiguousarray(values, dtype=np.float64),
                        None, values.size, per_feature, alias)


def prepare(data: DataCollection, variant: ModelVariant) -> PreparedData:
    """Orient and zero-fill the data matrices for the given variant."""
    if variant.kind == FA_CONCAT:
        if data.mode2:
            raise ConfigurationError(
                "the concatenated-FA baseline does not support two-mode data"
            )
        values = np.hstack([v.values for v in data.mode1])
        missing = None
        if any(v.missing is not None for v in data.mode1):
            missing = np.hstack([
                v.missing if v.missing is not None
                else np.zeros(v.values.shape, dtype=bool)
                for v in data.mode1
            ])
        return PreparedData([[_prepared_view(values, missing)]], variant)

    if variant.two_mode and not data.mode2:
        raise ConfigurationError("two_mode variant requires mode-2 views")
    if data.mode2 and not variant.two_mode:
        raise ConfigurationError("data has mode-2 views; variant is single-mode")

    mode1 = [_prepared_view(v.values, v.missing) for v in data.mode1]
    modes = [mode1]
    if variant.two_mode:
        first = data.mode1[0]
        miss_t = None if first.missing is None else first.missing.T
        mode2 = [_prepared_view(first.values.T, miss_t, alias=True)]
        mode2 += [_prepared_view(v.values, v.missing) for v in data.mode2]
        modes.append(mode2)
    return PreparedData(modes, variant)


def as_prepared(data: DataCollection | PreparedData,
                variant: ModelVariant) -> PreparedData:
    if isinstance(data, PreparedData):
        if data.variant != variant:
            raise ConfigurationError("prepared data was built for another variant")
        return data
    return prepare(data, variant)


def spike_slab_params(
    alpha: float | np.ndarray,
    logit_pi: float | np.ndarray,
    prec_like: np.ndarray,
    mean_like: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Posterior of a coefficient with a zero point mass and a Gaussian slab.

    The likelihood contributes precision ``prec_like`` and precision-weighted
    mean ``mean_like`` (so the slab posterior is N(mean_like/lam, 1/lam) with
    lam = alpha + prec_like).  Returns (p_include, slab_mean, slab_precision);
    the inclusion probability is the stable logistic of

        logit(pi) + (log alpha - log lam)/2 + lam * mu^2 / 2.
    """
    lam = alpha + prec_like
    mu = mean_like / lam
    log_odds = logit_pi + 0.5 * (np.log(alpha) - np.log(lam)) + 0.5 * lam * mu * mu
    return expit(log_odds), mu, lam


def _draw_spike_slab(p: np.ndarray, mu: np.ndarray, lam: np.ndarray,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    h = rng.random(p.shape) < p
    draws = mu + rng.standard_normal(p.shape) / np.sqrt(lam)
    return np.where(h, draws, 0.0), h.astype(np.uint8)


def _effective_tau(state: ModelState, mode: int, view: int) -> np.ndarray:
    blk = state.modes[mode].views[view]
    tau = blk.tau if blk.tau is not None else state.modes[0].views[0].tau
    if not np.all(tau > 0):
        raise InvariantError("noise precision must be positive")
    return tau


def _residual(state: ModelState, prep: PreparedData,
              mode: int, view: int) -> np.ndarray:
    """Residual of one view under the current state, zero at unobserved cells.

    For the doubly paired matrix (view 0 of either mode in a two-mode model)
    the other mode's contribution is part of the mean.  In both orientations
    that contribution is loadings @ factors.T of the other mode.
    """
    pv = prep.modes[mode][view]
    mb = state.modes[mode]
    resid = pv.values - mb.X @ mb.views[view].W.T
    if view == 0 and state.variant.two_mode:
        other = state.modes[1 - mode]
        resid = resid - other.views[0].W @ other.X.T
    if pv.observed is not None:
        resid = np.where(pv.observed, resid, 0.0)
    return resid


def update_loadings(state: ModelState, data: DataCollection | PreparedData,
                    mode: int, view: int, rng: np.random.Generator) -> ModelState:
    """Redraw one view's loading matrix and inclusion mask column by column.

    For each component the inactive residual is restored by a rank-one
    add-back, the spike-and-slab conditional is drawn for all features of
    the component at once, and the residual is updated with the new column.
    """
    prep = as_prepared(data, state.variant)
    pv = prep.modes[mode][view]
    mb = state.modes[mode]
    blk = mb.views[view]
    if not np.all(blk.alpha > 0):
        raise InvariantError("slab precision must be positive")
    tau = _effective_tau(state, mode, view)
    tau_scalar = tau.shape[0] == 1
    x = mb.X
    logit_pi = clamped_logit(blk.pi)
    resid = _residual(state, prep, mode, view)
    obs = pv.observed
    for k in range(blk.k):
        x_k = x[:, k]
        addback = np.outer(x_k, blk.W[:, k])
        if obs is not None:
            addback = np.where(obs, addback, 0.0)
        partial = resid + addback
        sxx = float(x_k @ x_k) if obs is None else (x_k * x_k) @ obs
        sxr = x_k @ partial
        if tau_scalar:
            prec_like = tau[0] * sxx
            mean_like = tau[0] * sxr
        else:
            prec_like = tau * sxx
            mean_like = tau * sxr
        p, mu, lam = spike_slab_params(blk.alpha[k], logit_pi[k], prec_like, mean_like)
        w_new, h_new = _draw_spike_slab(p, mu, lam, rng)
        blk.W[:, k] = w_new
        blk.H[:, k] = h_new
        update = np.outer(x_k, w_new)
        if obs is not None:
            update = np.where(obs, update, 0.0)
        resid = partial - update
    return state


def update_factors(state: ModelState, data: DataCollection | PreparedData,
                   mode: int, rng: np.random.Generator) -> ModelState:
    """Redraw one mode's factor matrix, pooling evidence over its views."""
    prep = as_prepared(data, state.variant)
    mb = state.modes[mode]
    if not np.all(mb.alpha_x > 0):
        raise InvariantError("slab precision must be positive")
    n = mb.n_samples
    logit_pi = clamped_logit(mb.pi_x)
    views = list(range(len(mb.views)))
    resids = [_residual(state, prep, mode, v) for v in views]
    taus = [_effective_tau(state, mode, v) for v in views]
    for k in range(mb.k):
        x_k = mb.X[:, k]
        prec_like = np.zeros(n)
        mean_like = np.zeros(n)
        partials = []
        for v in views:
            pv = prep.modes[mode][v]
            blk = mb.views[v]
            w_k = blk.W[:, k]
            obs = pv.observed
            addback = np.outer(x_k, w_k)
            if obs is not None:
                addback = np.where(obs, addback, 0.0)
            partial = resids[v] + addback
            partials.append(partial)
            tau = taus[v]
            if tau.shape[0] == 1:
                t = tau[0]
                if obs is None:
                    prec_like += t * float(w_k @ w_k)
                else:
                    prec_like += t * (obs @ (w_k * w_k))
                mean_like += t * (partial @ w_k)
            else:
                tw = tau * w_k
                if obs is None:
                    prec_like += float(w_k @ tw)
                else:
                    prec_like += obs @ (w_k * tw)
                mean_like += partial @ tw
        p, mu, lam = spike_slab_params(mb.alpha_x[k], logit_pi[k], prec_like, mean_like)
        x_new, hx_new = _draw_spike_slab(p, mu, lam, rng)
        mb.X[:, k] = x_new
        mb.Hx[:, k] = hx_new
        for v in views:
            pv = prep.modes[mode][v]
            w_k = mb.views[v].W[:, k]
            update = np.outer(x_new, w_k)
            if pv.observed is not None:
                update = np.where(pv.observed, update, 0.0)
            resids[v] = partials[v] - update
    return state


def update_alpha(state: ModelState, hyper: HyperParams, mode: int,
                 view: int | None, rng: np.random.Generator) -> ModelState:
    """Redraw slab precisions from their Gamma conditional.

    ``view=None`` targets the mode's factor side.  The conditional for
    component k is Gamma(a + n_active/2, b + sum of active squares / 2);
    inactive entries are exact zeros, so a plain column sum of squares works.
    """
    mb = state.modes[mode]
    if view is None:
        values, mask = mb.X, mb.Hx
        target = mb
        attr = "alpha_x"
    else:
        blk = mb.views[view]
        values, mask = blk.W, blk.H
        target = blk
        attr = "alpha"
    n_active = mask.sum(axis=0).astype(np.float64)
    sq = (values * values).sum(axis=0)
    shape = hyper.a_alpha + 0.5 * n_active
    rate = hyper.b_alpha + 0.5 * sq
    setattr(target, attr, rng.gamma(shape, 1.0 / rate))
    return state


def update_pi(state: ModelState, hyper: HyperParams, mode: int,
              view: int | None, rng: np.random.Generator) -> ModelState:
    """Redraw inclusion probabilities from their Beta conditional."""
    mb = state.modes[mode]
    if view is None:
        mask = mb.Hx
        target, attr = mb, "pi_x"
    else:
        blk = mb.views[view]
        mask = blk.H
        target, attr = blk, "pi"
    n = mask.shape[0]
    s = mask.sum(axis=0).astype(np.float64)
    setattr(target, attr, rng.beta(hyper.a_pi + s, hyper.b_pi + (n - s)))
    return state


def update_tau(state: ModelState, data: DataCollection | PreparedData,
               mode: int, view: int, rng: np.random.Generator) -> ModelState:
    """Redraw one view's noise precision from its Gamma conditional.

    Only observed cells enter the residual sum of squares and the cell
    count.  The mode-2 alias of the doubly paired matrix owns no noise
    precision and is rejected.
    """
    prep = as_prepared(data, state.variant)
    blk = state.modes[mode].views[view]
    if blk.tau is None:
        raise ConfigurationError(
            "this view shares its noise precision with the paired matrix"
        )
    pv = prep.modes[mode][view]
    resid = _residual(state, prep, mode, view)
    if blk.tau.shape[0] == 1:
        ssr = float((resid * resid).sum())
        shape = blk.tau_a + 0.5 * pv.n_observed
        rate = blk.tau_b + 0.5 * ssr
        blk.tau = rng.gamma(shape, 1.0 / rate, size=1)
    else:
        ssr_d = (resid * resid).sum(axis=0)
        shape = blk.tau_a + 0.5 * pv.observed_per_feature
        rate = blk.tau_b + 0.5 * ssr_d
        blk.tau = rng.gamma(shape, 1.0 / rate)
    return state
