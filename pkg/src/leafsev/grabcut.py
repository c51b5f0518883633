"""GrabCut foreground extraction: iterated colour-GMM fitting and s-t min-cut.

Energy follows the hard-assignment formulation: every pixel carries a label
``alpha`` (fg/bg) and a component index ``k`` inside the GMM of its label, and

    E = sum_n D(alpha_n, k_n) + gamma * sum_{(m,n) neighbours} [alpha_m != alpha_n]
        * exp(-beta * |z_m - z_n|^2) / dist(m, n)

with ``D = -log w_k + 0.5 log det S_k + 0.5 (z - mu_k)^T S_k^-1 (z - mu_k)``.
Each iteration (assign components, refit GMMs, min-cut relabel) is a
coordinate-descent step on E, so the energy never increases.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import maxflow
import numpy as np
from PIL import Image
from sklearn.base import BaseEstimator

from leafsev._validation import check_image, check_positive_int, check_rect
from leafsev.cluster import kmeans

BG_FIXED = 0
FG_FIXED = 1
BG_SOFT = 2
FG_SOFT = 3

# (dy, dx) offsets covering every 8-neighbour pair exactly once
_NEIGHBOUR_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass(frozen=True, eq=False)
class Trimap:
    width: int
    height: int
    labels: np.ndarray

    @property
    def foreground(self) -> np.ndarray:
        return (self.labels == FG_FIXED) | (self.labels == FG_SOFT)

    @property
    def fixed(self) -> np.ndarray:
        return (self.labels == FG_FIXED) | (self.labels == BG_FIXED)


@dataclass(frozen=True, eq=False)
class SegMask:
    width: int
    height: int
    mask: np.ndarray

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def to_png(self) -> bytes:
        """1-bit PNG, 255 for foreground."""
        out = io.BytesIO()
        Image.fromarray(self.mask.astype(bool)).convert("1").save(out, format="PNG")
        return out.getvalue()


def init_trimap(width, height, rect) -> Trimap:
    """Everything outside ``rect`` is fixed background, everything inside is soft foreground."""
    x, y, w, h = check_rect(rect, width, height)
    labels = np.full((height, width), BG_FIXED, dtype=np.uint8)
    labels[y : y + h, x : x + w] = FG_SOFT
    return Trimap(width=width, height=height, labels=labels)


def default_rect(width, height, margin=0.02) -> tuple[int, int, int, int]:
    mx = int(round(width * margin))
    my = int(round(height * margin))
    return mx, my, width - 2 * mx, height - 2 * my


# -- colour models ---------------------------------------------------------


@dataclass
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    inverses: np.ndarray = field(repr=False)
    log_dets: np.ndarray = field(repr=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_costs(self, X: np.ndarray) -> np.ndarray:
        """Per-component data cost ``D`` for each row of ``X``; ``inf`` for empty components."""
        X = np.asarray(X, dtype=np.float64)
        costs = np.full((X.shape[0], self.n_components), np.inf)
        for j in range(self.n_components):
            if self.weights[j] <= 0:
                continue
            diff = X - self.means[j]
            maha = np.einsum("ij,jk,ik->i", diff, self.inverses[j], diff)
            costs[:, j] = -math.log(self.weights[j]) + 0.5 * self.log_dets[j] + 0.5 * maha
        return costs


def fit_gmm(pixels, assignments, K, variance_floor=1e-3, sample_weight=None) -> GaussianMixture:
    """Maximum-likelihood GMM parameters for a fixed hard assignment.

    Covariance eigenvalues are clamped from below at ``variance_floor``, which
    is the likelihood optimum under that constraint.  Components with no
    members get weight zero.  ``sample_weight`` counts repeated rows.
    """
    X = np.asarray(pixels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("fit_gmm needs a non-empty (n, dim) pixel array")
    comp = np.asarray(assignments)
    if comp.shape != (X.shape[0],):
        raise ValueError("assignments must give one component index per pixel")
    if comp.size and (comp.min() < 0 or comp.max() >= K):
        raise ValueError(f"component index out of range [0, {K})")
    dim = X.shape[1]
    sw = np.ones(X.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    counts = np.bincount(comp, weights=sw, minlength=K)
    weights = counts / counts.sum()
    means = np.zeros((K, dim))
    covs = np.empty((K, dim, dim))
    for j in range(K):
        cov = np.zeros((dim, dim))
        if counts[j] > 0:
            members = comp == j
            w = sw[members]
            means[j] = w @ X[members] / counts[j]
            diff = X[members] - means[j]
            cov = (diff * w[:, None]).T @ diff / counts[j]
        evals, evecs = np.linalg.eigh((cov + cov.T) / 2)
        evals = np.maximum(evals, variance_floor)
        covs[j] = (evecs * evals) @ evecs.T
    inverses = np.empty_like(covs)
    log_dets = np.empty(K)
    for j in range(K):
        inverses[j] = np.linalg.inv(covs[j])
        log_dets[j] = np.linalg.slogdet(covs[j])[1]
    return GaussianMixture(weights, means, covs, inverses, log_dets)


# -- max-flow --------------------------------------------------------------


@dataclass
class FlowNetwork:
    """Directed network with non-negative capacities.  ``math.inf`` marks hard arcs."""

    n_nodes: int
    source: int = 0
    sink: int = 1
    arcs: list = field(default_factory=list)

    def add_arc(self, u, v, capacity):
        if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
            raise ValueError(f"arc ({u}, {v}) references a missing node")
        if capacity < 0 or math.isnan(capacity):
            raise ValueError(f"capacity must be non-negative, got {capacity}")
        self.arcs.append((u, v, float(capacity)))

    def cut_capacity(self, source_side) -> float:
        side = set(source_side)
        return sum(c for u, v, c in self.arcs if u in side and v not in side)


def max_flow_min_cut(net: FlowNetwork):
    """Exact maximum flow value and the source side of a minimum cut."""
    if net.source == net.sink:
        raise ValueError("source and sink must differ")
    finite = sum(c for _, _, c in net.arcs if math.isfinite(c))
    hard = finite + 1.0  # any cut through a hard arc costs more than all finite arcs together
    inner = [i for i in range(net.n_nodes) if i not in (net.source, net.sink)]
    index = {node: i for i, node in enumerate(inner)}
    g = maxflow.Graph[float]()
    if inner:
        g.add_nodes(len(inner))
    direct = 0.0
    for u, v, c in net.arcs:
        c = c if math.isfinite(c) else hard
        if u == v or c == 0:
            continue
        if u == net.source and v == net.sink:
            direct += c
        elif u == net.source and v in index:
            g.add_tedge(index[v], c, 0.0)
        elif v == net.sink and u in index:
            g.add_tedge(index[u], 0.0, c)
        elif u in index and v in index:
            g.add_edge(index[u], index[v], c, 0.0)
        # arcs into the source or out of the sink never cross an s-t cut
    flow = (g.maxflow() if inner else 0.0) + direct
    side = {net.source} | {node for node in inner if g.get_segment(index[node]) == 0}
    if flow >= hard:
        flow = math.inf
    return flow, frozenset(side)


# -- GrabCut ---------------------------------------------------------------


def _neighbour_pairs(h, w, dy, dx):
    ys = slice(0, h - dy)
    xs = slice(max(0, -dx), w - max(0, dx))
    ys2 = slice(dy, h)
    xs2 = slice(max(0, dx), w + min(0, dx))
    return (ys, xs), (ys2, xs2)


def _pairwise_weights(z, gamma):
    """Per-direction smoothness weights, each stored at the first pixel of the pair."""
    h, w, _ = z.shape
    diffs = []
    total, n_pairs = 0.0, 0
    for dy, dx in _NEIGHBOUR_OFFSETS:
        a, b = _neighbour_pairs(h, w, dy, dx)
        d2 = ((z[a] - z[b]) ** 2).sum(axis=2)
        diffs.append((a, d2))
        total += float(d2.sum())
        n_pairs += d2.size
    mean_d2 = total / n_pairs if n_pairs else 0.0
    beta = 1.0 / (2.0 * mean_d2) if mean_d2 > 0 else 0.0
    weights = []
    for (dy, dx), (a, d2) in zip(_NEIGHBOUR_OFFSETS, diffs):
        scale = gamma / math.hypot(dy, dx)
        full = np.zeros((h, w))
        full[a] = scale * np.exp(-beta * d2)
        weights.append(full)
    return weights, beta


def _smoothness_energy(fg, weights):
    h, w = fg.shape
    e = 0.0
    for (dy, dx), wt in zip(_NEIGHBOUR_OFFSETS, weights):
        a, b = _neighbour_pairs(h, w, dy, dx)
        e += float(wt[a][fg[a] != fg[b]].sum())
    return e


class _State:
    """Working state of one GrabCut run.

    Pixel colours are 8-bit, so costs and component choices are computed once
    per distinct colour and broadcast to pixels through ``inverse``.
    """

    def __init__(self, img, trimap, n_components, gamma, variance_floor, seed):
        data = img.data
        self.h, self.w, _ = data.shape
        keys = (data[..., 0].astype(np.int32) << 16) | (data[..., 1].astype(np.int32) << 8) | data[..., 2]
        uniq, inverse = np.unique(keys.reshape(-1), return_inverse=True)
        self.inverse = inverse.reshape(-1)
        self.palette = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1).astype(np.float64)
        self.labels = trimap.labels.copy()
        self.K = n_components
        self.floor = variance_floor
        self.weights, self.beta = _pairwise_weights(data.astype(np.float64), gamma)
        self.hard = 1.0 + self._incident()
        P = len(self.palette)
        # component index per palette colour, one array per side
        self.comp = {True: np.zeros(P, dtype=np.intp), False: np.zeros(P, dtype=np.intp)}
        self.gmm = {True: None, False: None}
        self.costs = {True: None, False: None}
        for side in (True, False):
            counts = self._palette_counts(side)
            present = np.flatnonzero(counts)
            if present.size == 0:
                continue
            k = min(self.K, present.size)
            model = kmeans(self.palette[present], k, seed=seed, max_iter=10, restarts=1,
                           sample_weight=counts[present])
            self.comp[side][present] = model.assignments
        self.learn()

    def _incident(self):
        total = np.zeros((self.h, self.w))
        for (dy, dx), wt in zip(_NEIGHBOUR_OFFSETS, self.weights):
            a, b = _neighbour_pairs(self.h, self.w, dy, dx)
            total[a] += wt[a]
            total[b] += wt[a]
        return total

    @property
    def fg(self):
        return (self.labels == FG_FIXED) | (self.labels == FG_SOFT)

    def _palette_counts(self, side):
        sel = self.fg.reshape(-1) == side
        return np.bincount(self.inverse[sel], minlength=len(self.palette)).astype(np.float64)

    def learn(self):
        for side in (True, False):
            counts = self._palette_counts(side)
            present = np.flatnonzero(counts)
            if present.size == 0:
                continue
            self.gmm[side] = fit_gmm(self.palette[present], self.comp[side][present], self.K,
                                     self.floor, sample_weight=counts[present])
            self.costs[side] = self.gmm[side].component_costs(self.palette)

    def assign(self):
        for side in (True, False):
            if self.costs[side] is not None:
                self.comp[side] = np.argmin(self.costs[side], axis=1)

    def energy(self):
        data = 0.0
        P = len(self.palette)
        for side in (True, False):
            counts = self._palette_counts(side)
            present = np.flatnonzero(counts)
            if present.size:
                per_colour = self.costs[side][present, self.comp[side][present]]
                data += float(counts[present] @ per_colour)
        return data + _smoothness_energy(self.fg, self.weights)

    def _best_cost(self, side):
        if self.costs[side] is None:
            return np.full(self.h * self.w, np.inf)
        return self.costs[side].min(axis=1)[self.inverse]

    def cut(self):
        fg_cost = self._best_cost(True).reshape(self.h, self.w)
        bg_cost = self._best_cost(False).reshape(self.h, self.w)
        fixed_fg = self.labels == FG_FIXED
        fixed_bg = self.labels == BG_FIXED
        soft = ~(fixed_fg | fixed_bg)
        with np.errstate(invalid="ignore"):
            base = np.minimum(fg_cost, bg_cost)
            src_cap = np.where(soft, bg_cost - base, 0.0)
            snk_cap = np.where(soft, fg_cost - base, 0.0)
        # a side without a model can never be chosen; fixed pixels are pinned
        src_cap = np.where((soft & np.isinf(bg_cost)) | fixed_fg, self.hard, src_cap)
        snk_cap = np.where((soft & np.isinf(fg_cost)) | fixed_bg, self.hard, snk_cap)

        g = maxflow.Graph[float]()
        nodes = g.add_grid_nodes((self.h, self.w))
        for (dy, dx), wt in zip(_NEIGHBOUR_OFFSETS, self.weights):
            structure = np.zeros((3, 3))
            structure[1 + dy, 1 + dx] = 1
            g.add_grid_edges(nodes, weights=wt, structure=structure, symmetric=True)
        g.add_grid_tedges(nodes, src_cap, snk_cap)
        g.maxflow()
        on_sink = g.get_grid_segments(nodes)
        self.labels = np.where(soft, np.where(on_sink, BG_SOFT, FG_SOFT), self.labels).astype(np.uint8)
        # the cut priced every pixel at its best component; make ``comp`` agree
        self.assign()


def _run(img, rect, iterations, n_components, gamma, variance_floor, seed):
    img = check_image(img)
    iterations = check_positive_int(iterations, "iterations")
    if rect is None:
        rect = default_rect(img.width, img.height)
    trimap = init_trimap(img.width, img.height, rect)
    state = _State(img, trimap, n_components, gamma, variance_floor, seed)
    steps = [state.energy()]
    trace = []
    for _ in range(iterations):
        state.assign()
        steps.append(state.energy())
        state.learn()
        steps.append(state.energy())
        state.cut()
        e = state.energy()
        steps.append(e)
        trace.append(e)
    mask = SegMask(width=img.width, height=img.height, mask=state.fg.copy())
    return mask, trace, steps, state


def grabcut_segment(img, rect=None, iterations=5, *, seed=0, n_components=5, gamma=50.0,
                    variance_floor=1e-3):
    """Segment the foreground inside ``rect`` (``(x, y, w, h)``; 2% inset by default).

    Returns the final :class:`SegMask` and the total energy after each iteration.
    """
    mask, trace, _, _ = _run(img, rect, iterations, n_components, gamma, variance_floor, seed)
    return mask, trace


class GrabCutSegmenter(BaseEstimator):
    """Estimator front-end for :func:`grabcut_segment`.

    After ``fit``, ``mask_`` holds the boolean foreground mask, ``energy_trace_``
    the per-iteration energy and ``step_energies_`` the energy after the
    initial fit and after each sub-step.
    """

    def __init__(self, iterations=5, rect=None, n_components=5, gamma=50.0,
                 variance_floor=1e-3, random_state=0):
        self.iterations = iterations
        self.rect = rect
        self.n_components = n_components
        self.gamma = gamma
        self.variance_floor = variance_floor
        self.random_state = random_state

    def fit(self, X, y=None):
        mask, trace, steps, state = _run(
            X, self.rect, self.iterations, self.n_components, self.gamma,
            self.variance_floor, self.random_state,
        )
        self.segmentation_ = mask
        self.mask_ = mask.mask
        self.energy_trace_ = trace
        self.step_energies_ = steps
        self.beta_ = state.beta
        self.trimap_ = Trimap(width=mask.width, height=mask.height, labels=state.labels)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).mask_
