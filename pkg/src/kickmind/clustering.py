"""Gaussian-mixture summaries of particle beliefs.

EM runs on particle positions only; each hard cluster then gets its own
orientation statistics. The number of clusters grows from 1 while an extra
cluster at least halves the internal position variance, up to 5 clusters.
The most massive cluster is the belief used for decisions and broadcast.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .circular import circular_mean, circular_variance
from .localization import ParticleSet

REG_COVAR = 1e-6
MAX_K = 5
MIN_COMPONENT_WEIGHT = 1e-6
BELIEF_MAGIC = 0xB7
_HEADER = struct.Struct("<BB")
_CLUSTER = struct.Struct("<hhhHHHI")


class DegenerateComponent(RuntimeError):
    pass


class MalformedBelief(ValueError):
    pass


@dataclass(frozen=True)
class Cluster:
    mean_xy: tuple[float, float]
    cov_xy: tuple[tuple[float, float], tuple[float, float]]
    mean_theta: float
    var_theta: float
    mass: float
    member_count: int
    var_p: float  # trace of the members' weighted position covariance, m^2

    def to_dict(self) -> dict:
        return {
            "mean_xy": list(self.mean_xy),
            "cov_xy": [list(r) for r in self.cov_xy],
            "mean_theta": self.mean_theta,
            "var_theta": self.var_theta,
            "mass": self.mass,
            "member_count": self.member_count,
            "var_p": self.var_p,
        }


@dataclass(frozen=True)
class ClusteringResult:
    clusters: tuple[Cluster, ...]
    k: int
    best_index: int
    var_p: float
    var_o: float

    @property
    def best(self) -> Cluster:
        return self.clusters[self.best_index]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "best_index": self.best_index,
            "var_p": self.var_p,
            "var_o": self.var_o,
            "clusters": [c.to_dict() for c in self.clusters],
        }


@dataclass
class MixtureFit:
    clusters: tuple[Cluster, ...]
    log_likelihood: float
    history: list[float]
    labels: np.ndarray  # cluster index of each particle, matching ``clusters`` order
    iterations: int


def _logpdf(x, means, covs):
    """Log density of every point under every 2-D Gaussian, shape (n, k)."""
    a, b, d = covs[:, 0, 0], covs[:, 0, 1], covs[:, 1, 1]
    det = a * d - b * b
    diff = x[:, None, :] - means[None, :, :]
    u, v = diff[..., 0], diff[..., 1]
    quad = (d * u * u - 2 * b * u * v + a * v * v) / det
    return -math.log(2 * math.pi) - 0.5 * np.log(det) - 0.5 * quad


def _weighted_cov(x, w, mean):
    diff = x - mean
    return (w[:, None] * diff).T @ diff / w.sum()


def _kmeanspp(x, w, k, rng):
    centers = [x[rng.choice(len(x), p=w)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        p = w * d2
        total = p.sum()
        if total <= 0:
            raise DegenerateComponent(f"cannot seed {k} distinct centers")
        centers.append(x[rng.choice(len(x), p=p / total)])
        d2 = np.minimum(d2, np.sum((x - centers[-1]) ** 2, axis=1))
    return np.array(centers)


def _cluster_from_members(xy, theta, w, count) -> Cluster:
    wn = w / w.sum()
    mean = wn @ xy
    cov = _weighted_cov(xy, wn, mean)
    reg = cov + REG_COVAR * np.eye(2)
    return Cluster(
        mean_xy=(float(mean[0]), float(mean[1])),
        cov_xy=((float(reg[0, 0]), float(reg[0, 1])), (float(reg[1, 0]), float(reg[1, 1]))),
        mean_theta=circular_mean(theta, wn),
        var_theta=circular_variance(theta, wn),
        mass=float(w.sum()),
        member_count=int(count),
        var_p=float(max(0.0, np.trace(cov))),
    )


def clusters_from_labels(particles: ParticleSet, labels, k: int) -> list[Cluster]:
    """Cluster summaries of a hard partition, in label order."""
    labels = np.asarray(labels)
    w = particles.weights
    clusters = []
    for j in range(k):
        m = labels == j
        if not np.any(m) or w[m].sum() <= 0:
            raise DegenerateComponent(f"component {j} owns no particle")
        clusters.append(_cluster_from_members(particles.xy[m], particles.theta[m], w[m], np.count_nonzero(m)))
    return clusters


def _order(clusters):
    """Mass descending, then mean position; the first cluster is the best one."""
    return sorted(range(len(clusters)), key=lambda i: (-clusters[i].mass, clusters[i].mean_xy))


def _split_init(clusters, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Start for k+1 components: split cluster ``j`` along its principal axis, keep the others."""
    means = np.array([c.mean_xy for c in clusters])
    covs = np.array([c.cov_xy for c in clusters])
    mix = np.array([c.mass for c in clusters])
    lam, vec = np.linalg.eigh(covs[j])
    # Halves of a Gaussian sit sqrt(2 lam / pi) from its mean along the split axis.
    step = math.sqrt(2 * lam[-1] / math.pi) * vec[:, -1]
    half_cov = covs[j] - (2 / math.pi) * lam[-1] * np.outer(vec[:, -1], vec[:, -1]) + REG_COVAR * np.eye(2)
    means = np.vstack([means[:j], means[j] - step, means[j] + step, means[j + 1:]])
    covs = np.concatenate([covs[:j], [half_cov, half_cov], covs[j + 1:]])
    mix = np.concatenate([mix[:j], [mix[j] / 2, mix[j] / 2], mix[j + 1:]])
    return means, covs, mix


def em_fit(
    particles: ParticleSet,
    k: int,
    seed=0,
    max_iters: int = 200,
    tol: float = 1e-9,
    init=None,
    split: int | None = None,
) -> MixtureFit:
    """Weighted EM for a k-component full-covariance mixture over positions.

    Starts from ``init`` (a (k-1)-cluster fit, of which cluster ``split``, by
    default the one holding the most variance, is cut in two) or else from
    weighted k-means++ seeding.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ps = particles.normalized()
    x, w = ps.xy, ps.weights
    if np.count_nonzero(w > 0) < k:
        raise DegenerateComponent(f"fewer than {k} particles with positive weight")

    if init is not None:
        if len(init) != k - 1:
            raise ValueError(f"a {k}-component start needs {k - 1} clusters to split, got {len(init)}")
        if split is None:
            split = int(np.argmax([c.var_p * c.member_count for c in init]))
        means, covs, mix = _split_init(init, split)
    else:
        rng = np.random.default_rng(seed)
        means = _kmeanspp(x, w, k, rng)
        nearest = np.argmin(((x[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
        covs = np.empty((k, 2, 2))
        mix = np.empty(k)
        for j in range(k):
            m = nearest == j
            mix[j] = w[m].sum()
            covs[j] = _weighted_cov(x[m], w[m], means[j]) + REG_COVAR * np.eye(2) if mix[j] > 0 else np.eye(2)
    mix = np.maximum(mix, MIN_COMPONENT_WEIGHT)
    mix /= mix.sum()

    history: list[float] = []
    prev = None
    it = 0
    for it in range(1, max_iters + 1):
        log_joint = np.log(mix)[None, :] + _logpdf(x, means, covs)
        top = log_joint.max(axis=1)
        lse = top + np.log(np.exp(log_joint - top[:, None]).sum(axis=1))
        ll = float(w @ lse)
        if history and ll < history[-1]:
            # Regularization makes the M-step inexact; never accept a worse fit.
            means, covs, mix, resp = prev
            break
        resp = np.exp(log_joint - lse[:, None])
        history.append(ll)
        if len(history) > 1 and ll - history[-2] < tol:
            break
        prev = (means, covs, mix, resp)
        nk = w @ resp
        if np.any(nk < MIN_COMPONENT_WEIGHT):
            raise DegenerateComponent(f"component weight collapsed to {nk.min():.3g}")
        rw = resp * w[:, None]
        means = rw.T @ x / nk[:, None]
        dx = x[:, 0, None] - means[None, :, 0]
        dy = x[:, 1, None] - means[None, :, 1]
        sxx, sxy, syy = (rw * dx * dx).sum(0), (rw * dx * dy).sum(0), (rw * dy * dy).sum(0)
        covs = np.stack([np.stack([sxx, sxy], -1), np.stack([sxy, syy], -1)], -2) / nk[:, None, None]
        covs = covs + REG_COVAR * np.eye(2)
        mix = nk / nk.sum()

    labels = np.argmax(resp, axis=1)
    clusters = clusters_from_labels(ps, labels, k)
    order = _order(clusters)
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    return MixtureFit(tuple(clusters[i] for i in order), history[-1], history, remap[labels], it)


def internal_variance(clusters) -> tuple[float, float]:
    """Member-count weighted mean of per-cluster position and orientation variances."""
    clusters = list(clusters)
    if not clusters:
        raise ValueError("internal variance of an empty clustering")
    counts = np.array([c.member_count for c in clusters], dtype=float)
    var_p = np.array([c.var_p for c in clusters])
    var_o = np.array([c.var_theta for c in clusters])
    total = counts.sum()
    return float(var_p @ counts / total), float(var_o @ counts / total)


def _result(clusters) -> ClusteringResult:
    clusters = tuple(clusters)
    var_p, var_o = internal_variance(clusters)
    masses = [c.mass for c in clusters]
    return ClusteringResult(clusters, len(clusters), int(np.argmax(masses)), var_p, var_o)


def refine_split(
    particles: ParticleSet, clusters, seed=0, max_iters: int = 200, tol: float = 1e-9
) -> MixtureFit:
    """Next fit of a nested chain.

    Candidates are EM runs started from every one-cluster split of
    ``clusters`` plus one k-means++ seeded run; the candidate with the least
    internal position variance is kept.
    """
    k = len(clusters) + 1
    starts = [dict(init=clusters, split=j) for j in range(len(clusters))] + [dict(seed=seed)]
    best, best_var = None, math.inf
    for start in starts:
        try:
            fit = em_fit(particles, k, max_iters=max_iters, tol=tol, **start)
        except DegenerateComponent:
            continue
        var = internal_variance(fit.clusters)[0]
        if var < best_var:
            best, best_var = fit, var
    if best is None:
        raise DegenerateComponent(f"no {k}-component fit survives EM")
    return best


def nested_fits(particles: ParticleSet, max_k: int = MAX_K, seed=0, max_iters: int = 200, tol: float = 1e-9):
    """Yield the nested EM fits for k = 1, 2, ... up to ``max_k``; stops early
    when no k-component fit survives."""
    fit = em_fit(particles, 1, seed=_k_seed(seed, 1), max_iters=max_iters, tol=tol)
    yield fit
    for k in range(2, min(max_k, MAX_K) + 1):
        try:
            fit = refine_split(particles, fit.clusters, _k_seed(seed, k), max_iters, tol)
        except DegenerateComponent:
            return
        yield fit


def select_k(
    particles: ParticleSet,
    seed=0,
    ratio: float = 0.5,
    max_k: int = MAX_K,
    max_iters: int = 200,
    tol: float = 1e-9,
) -> ClusteringResult:
    """Grow k from 1 while ``Var_P(C_{k+1}) < ratio * Var_P(C_k)``, up to ``max_k``."""
    current, var = None, math.inf
    for fit in nested_fits(particles, max_k, seed, max_iters, tol):
        new_var = internal_variance(fit.clusters)[0]
        if current is not None and not new_var < ratio * var:
            break
        current, var = fit.clusters, new_var
    return _result(current)


def _k_seed(seed, k):
    """Independent, reproducible seed per candidate size k."""
    if isinstance(seed, np.random.SeedSequence):
        entropy = [*np.atleast_1d(seed.entropy), *seed.spawn_key]
    else:
        entropy = [int(seed)]
    return np.random.SeedSequence([*entropy, k])


# ---------------------------------------------------------------- wire format


def _clip_round(value, lo, hi) -> int:
    return int(min(hi, max(lo, round(value))))


def serialize_belief(result: ClusteringResult) -> bytes:
    """Two header bytes (magic, k) and 16 little-endian bytes per cluster."""
    if not 1 <= result.k <= MAX_K or len(result.clusters) != result.k:
        raise ValueError(f"cannot encode a clustering with k={result.k}")
    out = bytearray(_HEADER.pack(BELIEF_MAGIC, result.k))
    for c in result.clusters:
        out += _CLUSTER.pack(
            _clip_round(c.mean_xy[0] * 100, -32768, 32767),
            _clip_round(c.mean_xy[1] * 100, -32768, 32767),
            _clip_round(c.mean_theta * 1e4, -32768, 32767),
            _clip_round(c.mass * 65535, 0, 65535),
            _clip_round(c.var_p * 1e4, 0, 65535),
            _clip_round(c.var_theta * 65535, 0, 65535),
            _clip_round(c.member_count, 0, 2**32 - 1),
        )
    return bytes(out)


def deserialize_belief(data: bytes) -> ClusteringResult:
    """Inverse of :func:`serialize_belief`; covariances come back isotropic."""
    if len(data) < _HEADER.size:
        raise MalformedBelief("belief payload shorter than its header")
    magic, k = _HEADER.unpack_from(data)
    if magic != BELIEF_MAGIC:
        raise MalformedBelief(f"bad magic byte 0x{magic:02x}")
    if not 1 <= k <= MAX_K:
        raise MalformedBelief(f"bad cluster count {k}")
    if len(data) != _HEADER.size + k * _CLUSTER.size:
        raise MalformedBelief(f"expected {_HEADER.size + k * _CLUSTER.size} bytes for k={k}, got {len(data)}")
    clusters = []
    for i in range(k):
        x, y, th, mass, var_p, var_o, count = _CLUSTER.unpack_from(data, _HEADER.size + i * _CLUSTER.size)
        vp = var_p / 1e4
        clusters.append(Cluster(
            mean_xy=(x / 100, y / 100),
            cov_xy=((vp / 2 + REG_COVAR, 0.0), (0.0, vp / 2 + REG_COVAR)),
            mean_theta=th / 1e4,
            var_theta=var_o / 65535,
            mass=mass / 65535,
            member_count=count,
            var_p=vp,
        ))
    return _result(clusters)
