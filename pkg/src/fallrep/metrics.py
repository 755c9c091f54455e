"""Embedding-geometry diagnostics.

Ordinal labels are the integer ranks 0 (Supported), 1 (Trunk), 2 (Head).
Every function here is a pure function of its inputs; the only randomness
(POA pair sampling, database subsampling) comes from an explicit seed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import kendalltau, rankdata

PCR_EPS = 1e-12
CLASS_PAIRS = ((0, 1), (0, 2), (1, 2))


class MetricError(ValueError):
    pass


class DegenerateGeometryWarning(RuntimeWarning):
    """Intra-class distances vanish; the consistency ratio is guarded, not meaningful."""


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).ravel()


# -- severity axis ------------------------------------------------------------

def severity_axis(train_embeddings, train_labels) -> np.ndarray:
    """Unit vector from the Supported centroid to the Head centroid."""
    z = np.asarray(train_embeddings, dtype=np.float64)
    y = np.asarray(train_labels).astype(int)
    if not (y == 2).any() or not (y == 0).any():
        raise MetricError("severity axis needs Head and Supported training windows")
    diff = z[y == 2].mean(axis=0) - z[y == 0].mean(axis=0)
    norm = np.linalg.norm(diff)
    if norm == 0:
        raise MetricError("Head and Supported centroids coincide")
    return diff / norm


def project(embeddings, axis) -> np.ndarray:
    z = np.asarray(embeddings, dtype=np.float64)
    axis = _vec(axis)
    if z.ndim != 2 or z.shape[1] != axis.size:
        raise MetricError(f"cannot project shape {z.shape} onto a {axis.size}-dim axis")
    return z @ axis


# -- rank statistics ----------------------------------------------------------

def _check_pair(x, y):
    x, y = _vec(x), _vec(y)
    if x.size != y.size:
        raise MetricError("inputs differ in length")
    if x.size < 2:
        raise MetricError("need at least two items")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise MetricError("correlation undefined for a constant input")
    return x, y


def spearman(labels, scores) -> float:
    """Pearson correlation of average ranks."""
    x, y = _check_pair(labels, scores)
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def kendall(labels, scores) -> float:
    """Tie-adjusted concordance (tau-b)."""
    x, y = _check_pair(labels, scores)
    return float(kendalltau(x, y, variant="b").statistic)


# -- ordering accuracy --------------------------------------------------------

def poa_macro(labels, scores, seed=0, pair_cap: int = 100_000) -> float:
    """Macro pairwise ordering accuracy over the present ordered class pairs.

    A pair (lower class a, higher class b) counts 1 when s_b > s_a and 0.5 on
    ties. Pairs are enumerated when there are at most ``pair_cap`` of them,
    otherwise ``pair_cap`` pairs are drawn with replacement.
    """
    y = np.asarray(labels).astype(int).ravel()
    s = _vec(scores)
    if y.size != s.size:
        raise MetricError("inputs differ in length")
    accs = []
    for a, b in CLASS_PAIRS:
        lo, hi = s[y == a], s[y == b]
        if lo.size == 0 or hi.size == 0:
            continue
        if lo.size * hi.size <= pair_cap:
            # count via sorted search: for each high score, #low below and #low equal
            srt = np.sort(lo)
            below = np.searchsorted(srt, hi, side="left")
            equal = np.searchsorted(srt, hi, side="right") - below
            wins = below.sum() + 0.5 * equal.sum()
            accs.append(wins / (lo.size * hi.size))
        else:
            rng = np.random.default_rng([int(seed), a, b])
            i = rng.integers(0, lo.size, size=pair_cap)
            j = rng.integers(0, hi.size, size=pair_cap)
            d = hi[j] - lo[i]
            accs.append(((d > 0).sum() + 0.5 * (d == 0).sum()) / pair_cap)
    if len(accs) == 0 or len(np.unique(y)) < 2:
        raise MetricError("ordering accuracy needs at least two classes")
    return float(np.mean(accs))


# -- binary ranking metrics ---------------------------------------------------

def _binary(labels, scores):
    y = np.asarray(labels).astype(bool).ravel()
    s = _vec(scores)
    if y.size != s.size:
        raise MetricError("inputs differ in length")
    return y, s


def auc(binary_labels, scores) -> float:
    """Mann-Whitney estimate P(s_pos > s_neg) + 0.5 P(equal)."""
    y, s = _binary(binary_labels, scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(binary_labels, scores) -> float:
    """Sum of precision@k over the ranks of positives, divided by #positives.

    Items are ordered by descending score; ties keep input order (stable sort
    on ascending index).
    """
    y, s = _binary(binary_labels, scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    k = np.arange(1, y.size + 1)
    precision = np.cumsum(hits) / k
    return float(precision[hits].sum() / n_pos)


# -- geometry -----------------------------------------------------------------

def pcr(embeddings, labels) -> float:
    """Mean cross-class distance over mean within-class distance (Euclidean)."""
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels).astype(int).ravel()
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise MetricError("consistency ratio needs at least two classes")
    intra_sum, intra_n = 0.0, 0
    inter_sum, inter_n = 0.0, 0
    for k, c in enumerate(classes):
        zc = z[y == c]
        if counts[k] >= 2:
            d = pdist(zc)
            intra_sum += d.sum()
            intra_n += d.size
        for c2 in classes[k + 1:]:
            d = cdist(zc, z[y == c2])
            inter_sum += d.sum()
            inter_n += d.size
    if intra_n == 0:
        raise MetricError("no class has two members; within-class distance undefined")
    intra = intra_sum / intra_n
    if intra < PCR_EPS:
        warnings.warn("within-class distances are zero; ratio is guarded", DegenerateGeometryWarning)
    return float((inter_sum / inter_n) / max(intra, PCR_EPS))


# -- linear probe -------------------------------------------------------------

def linear_probe_scores(train_x, train_y, eval_x, l2: float = 1e-3, steps: int = 500,
                        lr: float = 0.5) -> np.ndarray:
    """L2-regularised logistic regression by full-batch gradient descent.

    Inputs are standardised with train statistics; weights start at zero so
    the result is a deterministic function of the data. Returns raw decision
    values on ``eval_x``.
    """
    x = np.asarray(train_x, dtype=np.float64)
    y = np.asarray(train_y).astype(bool).ravel()
    if y.all() or not y.any():
        raise MetricError("probe training data must contain both classes")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    xs = (x - mu) / sd
    t = y.astype(np.float64)
    n, d = xs.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(steps):
        p = 0.5 * (1.0 + np.tanh(0.5 * (xs @ w + b)))
        r = p - t
        w -= lr * (xs.T @ r / n + l2 * w)
        b -= lr * r.mean()
    xe = (np.asarray(eval_x, dtype=np.float64) - mu) / sd
    return xe @ w + b


# -- cross-video retrieval ----------------------------------------------------

@dataclass(frozen=True)
class NeighborhoodResult:
    diagonal: dict
    skipped: dict
    confusion: np.ndarray


def neighborhood_consistency(embeddings, labels, video_ids, k: int = 10, seed=0,
                             classes=(0, 1, 2)) -> NeighborhoodResult:
    """Class-balanced cosine retrieval with same-video exclusion.

    The database keeps a seeded random subset of each class of the size of
    the smallest class. Every window is a query; its neighbours are the up to
    ``k`` most similar database entries from other videos. ``diagonal[c]`` is
    the fraction of all neighbours retrieved for class-``c`` queries that are
    themselves class ``c``. Queries with no admissible neighbour are skipped.
    """
    if k < 1:
        raise MetricError("k must be at least 1")
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels).astype(int).ravel()
    vids = np.asarray(video_ids, dtype=object)
    members = {c: np.flatnonzero(y == c) for c in classes}
    if any(m.size == 0 for m in members.values()):
        raise MetricError("every class must be present")
    size = min(m.size for m in members.values())
    rng = np.random.default_rng(seed)
    db = np.sort(np.concatenate([np.sort(rng.choice(members[c], size=size, replace=False))
                                 for c in classes]))
    zn = z / np.linalg.norm(z, axis=1, keepdims=True)
    sims = zn @ zn[db].T
    pos = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    skipped = {c: 0 for c in classes}
    for q in range(z.shape[0]):
        ok = vids[db] != vids[q]
        if not ok.any():
            skipped[y[q]] += 1
            continue
        cand = np.flatnonzero(ok)
        order = cand[np.argsort(-sims[q, cand], kind="stable")][:k]
        for j in db[order]:
            confusion[pos[y[q]], pos[y[j]]] += 1
    diagonal = {}
    for c in classes:
        row = confusion[pos[c]]
        diagonal[c] = float(row[pos[c]] / row.sum()) if row.sum() else float("nan")
    return NeighborhoodResult(diagonal=diagonal, skipped=skipped, confusion=confusion)
