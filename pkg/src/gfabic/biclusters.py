"""Turning posterior stores into discrete biclusters and robust components.

A cell belongs to a component's bicluster when the product of its factor and
loading entries is nonzero in strictly more than half of the posterior
snapshots.  Components are matched across chains by absolute cosine
similarity of their posterior-mean factor/loading profiles against a
reference chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import FA_CONCAT, ConfigurationError
from .sampler import PosteriorStore


@dataclass
class ViewCells:
    """One component's footprint in one data view, data orientation.

    ``cells`` is the full-shape boolean membership matrix; ``rows`` and
    ``cols`` are its nonempty projections.  ``intensity`` holds the
    posterior-mean factor-loading products over the rows-by-cols box.
    ``sample_axis`` is the data axis carrying the component's own sample
    dimension: 0 except for mode-2 components in the doubly paired matrix,
    whose entities are that matrix's columns.
    """

    rows: np.ndarray
    cols: np.ndarray
    cells: np.ndarray
    intensity: np.ndarray
    sample_axis: int = 0


@dataclass
class Bicluster:
    """All view footprints of one model component."""

    mode: int
    component: int
    views: dict[str, ViewCells] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not self.views

    def n_sample_members(self) -> int:
        """Members along the component's own sample axis.

        For mode-1 components that axis is the data rows; for mode-2
        components it is the paired entities, which appear as columns of
        the doubly paired matrix and as rows of the second-mode views.
        """
        members: set[int] = set()
        for vc in self.views.values():
            members.update(vc.rows.tolist() if vc.sample_axis == 0
                           else vc.cols.tolist())
        return len(members)


@dataclass
class BiclusterSet:
    """Extraction result for one chain: one entry per model component."""

    components: list[Bicluster]
    n_snapshots: int
    view_shapes: dict[str, tuple[int, int]]

    def effective_k(self, mode: int | None = None) -> int:
        return sum(
            1 for c in self.components
            if not c.is_empty and (mode is None or c.mode == mode)
        )

    def union_cells(self, view: str) -> np.ndarray:
        out = np.zeros(self.view_shapes[view], dtype=bool)
        for c in self.components:
            vc = c.views.get(view)
            if vc is not None:
                out |= vc.cells
        return out


def _mode_cells(snapshots, mode: int, threshold_count: float):
    """Per component: majority-vote cell matrices in model orientation."""
    xs = np.stack([s.modes[mode].X for s in snapshots])
    hx = np.stack([s.modes[mode].Hx for s in snapshots]).astype(np.float64)
    n_views = len(snapshots[0].modes[mode].views)
    ws = [np.stack([s.modes[mode].views[v].W for s in snapshots])
          for v in range(n_views)]
    hw = [np.stack([s.modes[mode].views[v].H for s in snapshots])
          .astype(np.float64) for v in range(n_views)]
    k = xs.shape[2]
    s = float(len(snapshots))
    for comp in range(k):
        per_view = []
        for v in range(n_views):
            count = hx[:, :, comp].T @ hw[v][:, :, comp]
            cells = count > threshold_count
            mean = (xs[:, :, comp].T @ ws[v][:, :, comp]) / s
            per_view.append((cells, mean))
        yield comp, per_view


def _view_cells(cells: np.ndarray, mean: np.ndarray,
                sample_axis: int = 0) -> ViewCells | None:
    if not cells.any():
        return None
    rows = np.flatnonzero(cells.any(axis=1))
    cols = np.flatnonzero(cells.any(axis=0))
    return ViewCells(rows=rows, cols=cols, cells=cells,
                     intensity=mean[np.ix_(rows, cols)],
                     sample_axis=sample_axis)


def extract_biclusters(store: PosteriorStore,
                       min_sample_members: int = 0) -> BiclusterSet:
    """Majority-vote biclusters from one chain's snapshots.

    Components whose sample member set is smaller than
    ``min_sample_members`` are emptied (they stay in the list so component
    indices remain aligned with the model, but count as inactive).
    """
    if not store.snapshots:
        raise ConfigurationError("posterior store holds no snapshots")
    layout = store.layout
    threshold = store.n_snapshots / 2.0
    comps: list[Bicluster] = []

    if store.config.variant.kind == FA_CONCAT:
        bounds = np.cumsum((0,) + layout.mode1_dims)
        for comp, per_view in _mode_cells(store.snapshots, 0, threshold):
            bic = Bicluster(mode=0, component=comp)
            cells_all, mean_all = per_view[0]
            for i, name in enumerate(layout.mode1_names):
                sl = slice(bounds[i], bounds[i + 1])
                vc = _view_cells(cells_all[:, sl], mean_all[:, sl])
                if vc is not None:
                    bic.views[name] = vc
            comps.append(bic)
    else:
        for comp, per_view in _mode_cells(store.snapshots, 0, threshold):
            bic = Bicluster(mode=0, component=comp)
            for name, (cells, mean) in zip(layout.mode1_names, per_view):
                vc = _view_cells(cells, mean)
                if vc is not None:
                    bic.views[name] = vc
            comps.append(bic)
        if store.config.variant.two_mode:
            names = [layout.mode1_names[0]] + list(layout.mode2_names)
            for comp, per_view in _mode_cells(store.snapshots, 1, threshold):
                bic = Bicluster(mode=1, component=comp)
                for j, (name, (cells, mean)) in enumerate(zip(names, per_view)):
                    if j == 0:
                        # The paired matrix is modelled transposed in mode 2;
                        # report its cells in data orientation.
                        cells, mean = cells.T, mean.T
                    vc = _view_cells(cells, mean, sample_axis=1 if j == 0 else 0)
                    if vc is not None:
                        bic.views[name] = vc
                comps.append(bic)

    if min_sample_members > 0:
        for bic in comps:
            if bic.views and bic.n_sample_members() < min_sample_members:
                bic.views = {}
    return BiclusterSet(components=comps, n_snapshots=store.n_snapshots,
                        view_shapes=layout.view_shapes())


def _component_profiles(store: PosteriorStore, mode: int) -> np.ndarray:
    """Posterior-mean factor and loading values, one row per component."""
    snaps = store.snapshots
    s = float(len(snaps))
    parts = [sum(st.modes[mode].X for st in snaps) / s]
    for v in range(len(snaps[0].modes[mode].views)):
        parts.append(sum(st.modes[mode].views[v].W for st in snaps) / s)
    return np.vstack(parts).T


@dataclass
class MatchedMember:
    chain_id: str
    mode: int
    component: int
    similarity: float
    sign: float


@dataclass
class MatchedGroup:
    mode: int
    members: list[MatchedMember]
    chains_present: int
    robust: bool
    consensus_profile: np.ndarray

    def split_consensus(self, store: PosteriorStore) \
            -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Split the consensus profile into factor and per-view loadings."""
        layout = store.layout
        if self.mode == 0:
            n = layout.n_samples
            if store.config.variant.kind == FA_CONCAT:
                names = ["concat"]
                dims = [sum(layout.mode1_dims)]
            else:
                names = list(layout.mode1_names)
                dims = list(layout.mode1_dims)
        else:
            n = layout.mode1_dims[0]
            names = [layout.mode1_names[0]] + list(layout.mode2_names)
            dims = [layout.n_samples] + list(layout.mode2_dims)
        x = self.consensus_profile[:n]
        loadings: dict[str, np.ndarray] = {}
        offset = n
        for name, d in zip(names, dims):
            loadings[name] = self.consensus_profile[offset:offset + d]
            offset += d
        return x, loadings


@dataclass
class RobustComponentReport:
    n_chains: int
    threshold: float
    min_chains_fraction: float
    groups: list[MatchedGroup]

    def robust_count(self, mode: int | None = None) -> int:
        return sum(1 for g in self.groups
                   if g.robust and (mode is None or g.mode == mode))


def _greedy_match(sim: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Highest-similarity one-to-one pairs at or above the threshold.

    Ties resolve to the lowest (reference, candidate) index pair; sim is
    scanned row-major so np.argmax implements that directly.
    """
    sim = sim.copy()
    pairs: list[tuple[int, int]] = []
    while sim.size:
        flat = int(np.argmax(sim))
        i, j = np.unravel_index(flat, sim.shape)
        if sim[i, j] < threshold:
            break
        pairs.append((int(i), int(j)))
        sim[i, :] = -1.0
        sim[:, j] = -1.0
    return pairs


def match_chains(stores: list[PosteriorStore], threshold: float = 0.80,
                 min_chains_fraction: float = 0.5) -> RobustComponentReport:
    """Match components across chains against the first (reference) chain.

    Component profiles are posterior means of the factor column and every
    loading column, concatenated.  Similarity is absolute cosine; matching
    is greedy one-to-one per chain against the reference.  Empty (all-zero)
    components never match and never form groups.  A group is robust when
    it appears in at least ceil(n_chains * min_chains_fraction) chains.
    """
    if not stores:
        raise ConfigurationError("no chains given")
    if not 0.0 < threshold <= 1.0:
        raise ConfigurationError("threshold must be in (0, 1]")
    if not 0.0 < min_chains_fraction <= 1.0:
        raise ConfigurationError("min_chains_fraction must be in (0, 1]")
    ref_layout = stores[0].layout
    for st in stores[1:]:
        if st.layout != ref_layout:
            raise ConfigurationError(
                f"chain {st.chain_id!r} has a different data layout "
                f"than {stores[0].chain_id!r}"
            )
    n_chains = len(stores)
    need = math.ceil(n_chains * min_chains_fraction)
    n_modes = len(stores[0].snapshots[0].modes)
    groups: list[MatchedGroup] = []

    for mode in range(n_modes):
        profiles = [_component_profiles(st, mode) for st in stores]
        norms = [np.linalg.norm(p, axis=1) for p in profiles]
        ref = profiles[0]
        ref_norm = norms[0]
        ref_alive = ref_norm > 0
        # members[r] collects (chain index, component, similarity, sign)
        members: dict[int, list[tuple[int, int, float, float]]] = {
            int(r): [(0, int(r), 1.0, 1.0)] for r in np.flatnonzero(ref_alive)
        }
        leftovers: list[tuple[int, int]] = []
        for c in range(1, n_chains):
            alive = norms[c] > 0
            sim = ref @ profiles[c].T
            with np.errstate(invalid="ignore", divide="ignore"):
                sim = sim / np.outer(ref_norm, norms[c])
            sim[~ref_alive, :] = -1.0
            sim[:, ~alive] = -1.0
            signs = np.where(sim >= 0, 1.0, -1.0)
            pairs = _greedy_match(np.abs(np.where(np.isfinite(sim), sim, -1.0)),
                                  threshold)
            matched = {j for _, j in pairs}
            for i, j in pairs:
                members[i].append((c, j, float(abs(sim[i, j])),
                                   float(signs[i, j])))
            leftovers.extend((c, int(j)) for j in np.flatnonzero(alive)
                             if j not in matched)

        for r in sorted(members):
            group_members = members[r]
            chains_present = len({c for c, *_ in group_members})
            vecs = []
            mlist = []
            for c, j, simval, sign in group_members:
                vecs.append(sign * profiles[c][j])
                mlist.append(MatchedMember(
                    chain_id=stores[c].chain_id, mode=mode, component=j,
                    similarity=simval, sign=sign))
            consensus = np.mean(vecs, axis=0)
            groups.append(MatchedGroup(
                mode=mode, members=mlist, chains_present=chains_present,
                robust=chains_present >= need, consensus_profile=consensus))
        for c, j in leftovers:
            groups.append(MatchedGroup(
                mode=mode,
                members=[MatchedMember(chain_id=stores[c].chain_id, mode=mode,
                                       component=j, similarity=1.0, sign=1.0)],
                chains_present=1,
                robust=1 >= need,
                consensus_profile=profiles[c][j].copy()))
    return RobustComponentReport(
        n_chains=n_chains, threshold=threshold,
        min_chains_fraction=min_chains_fraction, groups=groups)


@dataclass
class EffectiveKReport:
    per_chain: dict[str, int]
    consensus: int


def report_effective_K(stores: list[PosteriorStore],
                       threshold: float = 0.80,
                       min_chains_fraction: float = 0.5) -> EffectiveKReport:
    """Effective component count per chain plus the cross-chain consensus.

    A chain's effective K counts components with a nonempty bicluster cell
    set.  With several chains the consensus is the number of robust matched
    groups; a single chain is its own consensus.
    """
    if not stores:
        raise ConfigurationError("no chains given")
    per_chain = {st.chain_id: extract_biclusters(st).effective_k()
                 for st in stores}
    if len(stores) == 1:
        consensus = next(iter(per_chain.values()))
    else:
        report = match_chains(stores, threshold, min_chains_fraction)
        consensus = report.robust_count()
    return EffectiveKReport(per_chain=per_chain, consensus=consensus)


def component_stability(store: PosteriorStore, mode: int = 0) -> np.ndarray:
    """Within-chain stability diagnostic, one value per component.

    Returns the fraction of snapshots whose sign-aligned cosine similarity
    to the chain's mean component profile falls below 0.5; values near 0
    indicate a component that keeps a consistent identity across the chain.
    """
    snaps = store.snapshots
    mean = _component_profiles(store, mode)
    k = mean.shape[0]
    out = np.zeros(k)
    for comp in range(k):
        m = mean[comp]
        m_norm = np.linalg.norm(m)
        if m_norm == 0:
            out[comp] = 1.0
            continue
        flagged = 0
        for st in snaps:
            parts = [st.modes[mode].X[:, comp]]
            for blk in st.modes[mode].views:
                parts.append(blk.W[:, comp])
            vec = np.concatenate(parts)
            v_norm = np.linalg.norm(vec)
            cos = 0.0 if v_norm == 0 else abs(float(vec @ m)) / (v_norm * m_norm)
            if cos < 0.5:
                flagged += 1
        out[comp] = flagged / len(snaps)
    return out
