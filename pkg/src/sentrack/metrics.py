"""OSPA and windowed track OSPA tracking-accuracy metrics."""

import numpy as np
from scipy.optimize import linear_sum_assignment


def _as_matrix(states) -> np.ndarray:
    rows = [np.asarray(s, dtype=float)[:2] for s in states]
    return np.array(rows) if rows else np.zeros((0, 2))


def ospa(truth, estimate, c: float, p: float) -> float:
    """Optimal subpattern assignment distance between two point sets.

    Combines localization error (optimal assignment on distances cut off
    at c) and cardinality error; both sets empty gives 0 by convention.
    """
    if c <= 0:
        raise ValueError("cutoff c must be positive")
    if p < 1:
        raise ValueError("order p must be >= 1")
    x = _as_matrix(truth)
    y = _as_matrix(estimate)
    n, m = len(x), len(y)
    if n == 0 and m == 0:
        return 0.0
    if n == 0 or m == 0:
        return float(c)
    if n > m:
        x, y, n, m = y, x, m, n
    d = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
    d = np.minimum(d, c) ** p
    rows, cols = linear_sum_assignment(d)
    cost = float(d[rows, cols].sum())
    return float(((cost + c**p * (m - n)) / m) ** (1.0 / p))


def _window_distance(track_a: dict, track_b: dict, steps, c: float) -> float:
    """Time-averaged cutoff distance between two tracks over given steps.

    A step where exactly one track exists costs c; a step where neither
    exists costs 0.
    """
    total = 0.0
    for t in steps:
        a, b = track_a.get(t), track_b.get(t)
        if a is None and b is None:
            continue
        if a is None or b is None:
            total += c
        else:
            diff = np.asarray(a, dtype=float)[:2] - np.asarray(b, dtype=float)[:2]
            total += min(c, float(np.hypot(diff[0], diff[1])))
    return total / len(steps)


def ospa2(truth_tracks: dict, estimated_tracks: dict, c: float, p: float, window, step: int | None = None) -> float:
    """OSPA over track segments in a trailing window.

    Tracks map a track key to {step: state}.  The base distance between a
    truth track and an estimated track is the time-averaged cutoff
    distance over the window (steps where exactly one of them exists cost
    c), and those base distances feed a standard OSPA assignment across
    tracks.  Tracks with no presence in the window are excluded.

    `window` is either an iterable of steps or an integer length w, in
    which case the window is the w steps trailing `step` (inclusive).
    """
    if isinstance(window, int):
        if window < 1:
            raise ValueError("window length must be >= 1")
        if step is None:
            raise ValueError("step is required with an integer window length")
        steps = list(range(step - window + 1, step + 1))
    else:
        steps = sorted(window)
        if not steps:
            raise ValueError("empty window")

    in_window = lambda track: any(t in track for t in steps)
    xs = [track for track in truth_tracks.values() if in_window(track)]
    ys = [track for track in estimated_tracks.values() if in_window(track)]
    n, m = len(xs), len(ys)
    if n == 0 and m == 0:
        return 0.0
    if n == 0 or m == 0:
        return float(c)
    if n > m:
        xs, ys, n, m = ys, xs, m, n
    base = np.array([[_window_distance(a, b, steps, c) for b in ys] for a in xs])
    d = np.minimum(base, c) ** p
    rows, cols = linear_sum_assignment(d)
    cost = float(d[rows, cols].sum())
    return float(((cost + c**p * (m - n)) / m) ** (1.0 / p))
