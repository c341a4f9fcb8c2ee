"""Reference computations that share no code with the package's solvers."""

from __future__ import annotations

import itertools

import numpy as np


def classify_segment(fx, fy, tx, ty, half_length, half_width, goal_width):
    """Scalar goal/out/in-play rule, written out by hand.

    Returns ("in", x, y), ("out", x, y) with the exit point, "goal_for" or
    "goal_against".
    """
    if abs(tx) <= half_length and abs(ty) <= half_width:
        return ("in", tx, ty)
    dx, dy = tx - fx, ty - fy
    exits = []
    # A boundary only counts when the ball moves outward across it.
    for bound in (half_length, -half_length):
        if dx * bound > 0:
            t = (bound - fx) / dx
            if 0 <= t <= 1:
                exits.append((t, "x", bound, fy + t * dy))
    for bound in (half_width, -half_width):
        if dy * bound > 0:
            t = (bound - fy) / dy
            if 0 <= t <= 1:
                exits.append((t, "y", fx + t * dx, bound))
    # Earliest boundary crossing; goal lines win exact corner ties.
    t, axis, ex, ey = min(exits, key=lambda e: (e[0], e[1] != "x"))
    if axis == "x" and abs(ey) < goal_width / 2:
        return "goal_for" if ex > 0 else "goal_against"
    return ("out", ex, ey)


def mc_outcomes(start, mean_d, sigma_d, aim, sigma_a, field, n, rng, span=4.0):
    """Empirical outcome distribution of a kick from ``start``.

    Distance and direction are drawn from normals truncated to +/- ``span``
    sigma (and distance >= 0) by rejection. Outcomes are keyed like
    ``("in", col, row)``, ``("out", col, row)``, ``"goal_for"``, ``"goal_against"``.
    """
    def truncated(mean, sigma, size, lo):
        out = np.empty(0)
        while len(out) < size:
            x = rng.normal(mean, sigma, 2 * size)
            keep = (np.abs(x - mean) <= span * sigma) & (x >= lo)
            out = np.concatenate([out, x[keep]])
        return out[:size]

    d = truncated(mean_d, sigma_d, n, 0.0) if sigma_d > 0 else np.full(n, mean_d)
    phi = truncated(aim, sigma_a, n, -np.inf) if sigma_a > 0 else np.full(n, aim)
    tx = start[0] + d * np.cos(phi)
    ty = start[1] + d * np.sin(phi)
    keys = classify_endpoints(start, tx, ty, field)
    uniq, counts = np.unique(keys, return_counts=True)
    return {_decode(int(k), field): c / n for k, c in zip(uniq, counts)}


def _decode(key, field):
    n = field.n_cells
    if key == 2 * n:
        return "goal_for"
    if key == 2 * n + 1:
        return "goal_against"
    kind = "in" if key < n else "out"
    return (kind, key % n % field.n_cols, key % n // field.n_cols)


def classify_endpoints(start, tx, ty, field):
    """Integer outcome key per endpoint: ``row*cols+col`` in play, ``n+...`` out,
    ``2n`` goal for, ``2n+1`` goal against. Numpy transcription of ``classify_segment``."""
    hl, hw, res = field.half_length, field.half_width, field.grid_resolution_m
    fx, fy = start
    n = field.n_cells
    dx, dy = tx - fx, ty - fy
    inside = (np.abs(tx) <= hl) & (np.abs(ty) <= hw)
    with np.errstate(divide="ignore", invalid="ignore"):
        tgx = np.where(dx > 0, (hl - fx) / dx, np.where(dx < 0, (-hl - fx) / dx, np.inf))
        tgy = np.where(dy > 0, (hw - fy) / dy, np.where(dy < 0, (-hw - fy) / dy, np.inf))
    goal_line_first = tgx <= tgy
    t = np.minimum(tgx, tgy)
    ex = np.where(goal_line_first, np.sign(dx) * hl, fx + t * dx)
    ey = np.where(goal_line_first, fy + t * dy, np.sign(dy) * hw)
    px = np.where(inside, tx, ex)
    py = np.where(inside, ty, ey)
    col = np.clip(np.ceil((np.clip(px, -hl, hl) + hl) / res - 1.0), 0, field.n_cols - 1).astype(np.int64)
    row = np.clip(np.ceil((np.clip(py, -hw, hw) + hw) / res - 1.0), 0, field.n_rows - 1).astype(np.int64)
    keys = row * field.n_cols + col + np.where(inside, 0, n)
    goal = ~inside & goal_line_first & (np.abs(ey) < field.goal_width_m / 2)
    keys = np.where(goal & (dx > 0), 2 * n, keys)
    return np.where(goal & (dx < 0), 2 * n + 1, keys)


def outcome_key(outcome) -> object:
    """Map a package BallOutcome onto the oracle's keys."""
    kind = outcome.kind.value
    if kind in ("goal_for", "goal_against"):
        return kind
    return ("in" if kind == "in_play" else "out", outcome.cell.col, outcome.cell.row)


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def exhaustive_policy_values(P, C, batch: int = 65536):
    """Optimal values by evaluating every stationary deterministic policy.

    ``P[a]`` is the (n, n) sub-stochastic transition matrix of action ``a``
    (missing mass is absorption), ``C[a]`` its expected one-step cost. Improper
    policies (singular ``I - P_pi``) are skipped. Returns the per-state minimum.
    """
    P = np.asarray(P, dtype=float)
    C = np.asarray(C, dtype=float)
    n_actions, n, _ = P.shape
    best = np.full(n, np.inf)
    eye = np.eye(n)
    policies = itertools.product(range(n_actions), repeat=n)
    rows = np.arange(n)
    while True:
        chunk = np.array(list(itertools.islice(policies, batch)), dtype=np.int64)
        if len(chunk) == 0:
            return best
        P_pi = P[chunk, rows[None, :], :]  # (b, n, n)
        c_pi = C[chunk, rows[None, :]]  # (b, n)
        A = eye[None] - P_pi
        proper = np.abs(np.linalg.det(A)) > 1e-12
        V = np.linalg.solve(A[proper], c_pi[proper][..., None])[..., 0]
        V = V[np.all(V > -1e-9, axis=1)]
        if len(V):
            best = np.minimum(best, V.min(axis=0))


def grid_posterior_mean(prior_box, theta, observations, landmarks, sigma_b, sigma_rel, step=0.02):
    """Posterior mean of (x, y) for a known heading, on a ``step`` grid.

    The prior is uniform over ``prior_box = (x0, x1, y0, y1)``; each
    observation is explained by the same-class landmark with the smallest
    normalized residual.
    """
    x0, x1, y0, y1 = prior_box
    xs = np.arange(x0 + step / 2, x1, step)
    ys = np.arange(y0 + step / 2, y1, step)
    gx, gy = np.meshgrid(xs, ys)
    ll = np.zeros_like(gx)
    for cls, bearing, dist in observations:
        best = np.full_like(gx, np.inf)
        for lcls, lx, ly in landmarks:
            if lcls != cls:
                continue
            pred_b = np.arctan2(ly - gy, lx - gx) - theta
            db = np.angle(np.exp(1j * (bearing - pred_b))) / sigma_b
            dd = (dist - np.hypot(lx - gx, ly - gy)) / (sigma_rel * dist)
            best = np.minimum(best, db ** 2 + dd ** 2)
        ll -= 0.5 * best
    w = np.exp(ll - ll.max())
    w /= w.sum()
    return float((w * gx).sum()), float((w * gy).sum())
