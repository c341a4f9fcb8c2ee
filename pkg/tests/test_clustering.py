import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kickmind.circular import circular_mean, circular_variance
from kickmind.clustering import (
    MAX_K,
    Cluster,
    ClusteringResult,
    MalformedBelief,
    clusters_from_labels,
    deserialize_belief,
    em_fit,
    internal_variance,
    nested_fits,
    select_k,
    serialize_belief,
)
from kickmind.field import FieldSpec
from kickmind.localization import ParticleSet
from kickmind.sim import sideline_reentry_hypotheses

FIELD = FieldSpec()


def random_particles(rng, n=None):
    n = int(rng.integers(50, 400)) if n is None else n
    return ParticleSet(np.column_stack([
        rng.uniform(-4.5, 4.5, n), rng.uniform(-3, 3, n), rng.uniform(-math.pi, math.pi, n),
    ]))


def blob_particles(rng, centers, n_each=150, spread=0.2):
    parts = [np.column_stack([rng.normal(cx, spread, n_each), rng.normal(cy, spread, n_each),
                              rng.normal(th, 0.1, n_each)]) for cx, cy, th in centers]
    return ParticleSet(np.vstack(parts))


def hand_internal_variance(points, weights, thetas, labels):
    """Member-count weighted mean of per-cluster position and circular variances, in plain Python."""
    groups = {}
    for p, w, t, lab in zip(points, weights, thetas, labels):
        groups.setdefault(int(lab), []).append((p, w, t))
    num_p = num_o = 0.0
    total = 0
    for members in groups.values():
        sw = math.fsum(w for _, w, _ in members)
        mx = math.fsum(w * p[0] for p, w, _ in members) / sw
        my = math.fsum(w * p[1] for p, w, _ in members) / sw
        var_p = math.fsum(w * ((p[0] - mx) ** 2 + (p[1] - my) ** 2) for p, w, _ in members) / sw
        c = math.fsum(w * math.cos(t) for _, w, t in members) / sw
        s = math.fsum(w * math.sin(t) for _, w, t in members) / sw
        var_o = 1.0 - math.hypot(c, s)
        num_p += len(members) * var_p
        num_o += len(members) * var_o
        total += len(members)
    return num_p / total, num_o / total


@pytest.mark.parametrize("case", ["halves", "three_blobs", "weighted_singletons"])
def test_internal_variance_matches_hand_evaluation(case):
    rng = np.random.default_rng({"halves": 1, "three_blobs": 2, "weighted_singletons": 3}[case])
    if case == "halves":
        ps = random_particles(rng, 100)
        labels = (ps.xy[:, 0] > 0).astype(int)
    elif case == "three_blobs":
        ps = blob_particles(rng, [(-3, 0, 0.5), (0, 2, -2.0), (3, -2, 3.0)], 60)
        labels = np.repeat([0, 1, 2], 60)
    else:
        states = rng.uniform(-3, 3, (12, 3))
        ps = ParticleSet(states, rng.uniform(0.1, 2.0, 12)).normalized()
        labels = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 3])
    k = labels.max() + 1
    got = internal_variance(clusters_from_labels(ps, labels, k))
    want = hand_internal_variance(ps.xy, ps.weights, ps.theta, labels)
    assert got[0] == pytest.approx(want[0], abs=1e-12)
    assert got[1] == pytest.approx(want[1], abs=1e-12)


def test_em_log_likelihood_never_decreases():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ps = random_particles(rng) if seed % 2 else blob_particles(rng, rng.uniform(-3, 3, (3, 3)), 80, 0.4)
        fit = em_fit(ps, int(rng.integers(1, 6)), seed=seed)
        assert np.all(np.diff(fit.history) >= 0)


def test_nested_fits_reduce_internal_variance():
    """Var_P(C_{k+1}) <= Var_P(C_k) + 1e-9 for at least 95% of 200 random particle sets."""
    flagged = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        ps = random_particles(rng)
        variances = [internal_variance(f.clusters)[0] for f in nested_fits(ps, MAX_K, seed)]
        worst = max(np.diff(variances), default=0.0)
        if worst > 1e-9:
            flagged.append((seed, float(worst)))
    if flagged:
        warnings.warn(f"variance increase with k on seeds {flagged}")
    assert len(flagged) <= 10


@given(st.integers(0, 2**32 - 1), st.integers(1, 9))
def test_k_never_exceeds_five(seed, n_blobs):
    rng = np.random.default_rng(seed)
    centers = np.column_stack([rng.uniform(-4, 4, n_blobs), rng.uniform(-2.5, 2.5, n_blobs),
                               rng.uniform(-3, 3, n_blobs)])
    result = select_k(blob_particles(rng, centers, 30, 0.05), seed=seed)
    assert 1 <= result.k <= MAX_K
    assert result.best_index == int(np.argmax([c.mass for c in result.clusters]))


def test_separated_blobs_found():
    rng = np.random.default_rng(0)
    result = select_k(blob_particles(rng, [(-3, -1, 0.0), (2.5, 1.5, 1.0)]), seed=0)
    assert result.k == 2
    assert sorted(round(c.mass, 6) for c in result.clusters) == [0.5, 0.5]


def test_unimodal_belief_stays_single():
    rng = np.random.default_rng(1)
    assert select_k(blob_particles(rng, [(1.0, 1.0, 0.0)], 500, 0.2), seed=1).k == 1


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_translation_equivariance(dx, dy):
    rng = np.random.default_rng(4)
    ps = blob_particles(rng, [(-2, 0, 0.0), (2, 1, 1.0)], 100)
    moved = ParticleSet(ps.states + [dx, dy, 0.0])
    a, b = select_k(ps, seed=4), select_k(moved, seed=4)
    assert a.k == b.k
    for ca, cb in zip(sorted(a.clusters, key=lambda c: c.mean_xy), sorted(b.clusters, key=lambda c: c.mean_xy)):
        assert cb.mean_xy[0] - ca.mean_xy[0] == pytest.approx(dx, abs=1e-6)
        assert cb.mean_xy[1] - ca.mean_xy[1] == pytest.approx(dy, abs=1e-6)


@given(st.floats(-math.pi, math.pi))
def test_rotating_orientations_rotates_cluster_headings(phi):
    rng = np.random.default_rng(6)
    ps = blob_particles(rng, [(-2, 0, 0.3), (2, 1, 2.5)], 100)
    turned = ParticleSet(ps.states + [0.0, 0.0, phi])
    a, b = select_k(ps, seed=6), select_k(turned, seed=6)
    for ca, cb in zip(a.clusters, b.clusters):
        delta = math.remainder(cb.mean_theta - ca.mean_theta - phi, 2 * math.pi)
        assert abs(delta) < 1e-9
        assert cb.var_theta == pytest.approx(ca.var_theta, abs=1e-12)


def test_circular_statistics():
    assert circular_mean([math.pi - 0.1, -math.pi + 0.1]) == pytest.approx(math.pi)
    assert circular_variance([0.0, math.pi]) == pytest.approx(1.0)
    assert circular_variance([1.0, 1.0, 1.0]) == pytest.approx(0.0)


def test_mirrored_hypotheses_give_meaningful_best_orientation():
    rng = np.random.default_rng(8)
    poses = sideline_reentry_hypotheses((-1.5, -3.0, math.pi / 2))
    ps = ParticleSet.around(poses, 500, 0.15, 0.1, rng)
    result = select_k(ps, seed=8)
    whole = circular_variance(ps.theta, ps.weights)
    assert result.k >= 2
    assert result.best.var_theta < 0.05 < whole


# ---------------------------------------------------------------- wire format


def sample_result(k=3):
    clusters = tuple(
        Cluster((1.234 * i - 2, -0.5 + i), ((0.1, 0.0), (0.0, 0.1)), 0.3 * i - 1, 0.01 * i,
                1.0 / k, 100 + i, 0.2 + 0.01 * i)
        for i in range(k)
    )
    return ClusteringResult(clusters, k, 0, 0.2, 0.01)


@pytest.mark.parametrize("k", range(1, 6))
def test_belief_round_trip_within_quantization(k):
    result = sample_result(k)
    data = serialize_belief(result)
    assert len(data) == 2 + 16 * k
    back = deserialize_belief(data)
    for a, b in zip(result.clusters, back.clusters):
        assert abs(a.mean_xy[0] - b.mean_xy[0]) <= 0.005 + 1e-12
        assert abs(a.mean_xy[1] - b.mean_xy[1]) <= 0.005 + 1e-12
        assert abs(a.mean_theta - b.mean_theta) <= math.radians(0.1)
        assert abs(a.mass - b.mass) <= 1 / 65535
        assert abs(a.var_theta - b.var_theta) <= 1 / 65535
        assert abs(a.var_p - b.var_p) <= 0.5e-4 + 1e-12
        assert a.member_count == b.member_count


def test_belief_saturates_large_variance():
    c = Cluster((0.0, 0.0), ((50.0, 0.0), (0.0, 50.0)), 0.0, 0.5, 1.0, 10, 100.0)
    back = deserialize_belief(serialize_belief(ClusteringResult((c,), 1, 0, 100.0, 0.5)))
    assert back.clusters[0].var_p == pytest.approx(65535 / 1e4)


@pytest.mark.parametrize("data", [
    b"",
    b"\xb7",
    bytes([0xB6, 1]) + bytes(16),
    bytes([0xB7, 0]),
    bytes([0xB7, 6]) + bytes(96),
    bytes([0xB7, 2]) + bytes(16),
])
def test_malformed_belief_rejected(data):
    with pytest.raises(MalformedBelief):
        deserialize_belief(data)
