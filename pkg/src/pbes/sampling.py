"""Exemplar selection.

Every sampler returns an ordered selection, so truncating to a prefix is a
meaningful way to shrink a stored exemplar set later. The median samplers
(``pbes_sample`` along principal directions, ``randp_sample`` along random
directions) append one median point per pass when the remaining set has odd
size and the lower-then-higher pair when it is even; outliers sit at the
sorted extremes and are never picked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .numerics import (
    RngState,
    as_data_matrix,
    mean_vector,
    principal_directions,
    random_unit_directions,
)


@dataclass(frozen=True)
class ExemplarSelection:
    """Ordered row indices chosen from a class's data matrix.

    ``appended_count`` records how many points the median loop appended before
    truncation to m (always m or m+1); it is None for samplers without that
    loop (herding, random).
    """

    method: str
    ordered_indices: tuple[int, ...]
    appended_count: int | None = None

    def __len__(self) -> int:
        return len(self.ordered_indices)


def _check_request(m: int, n: int) -> None:
    if not 1 <= m <= n:
        raise ValidationError(f"need 1 <= m <= n, got m={m}, n={n}")


def direction_count(n: int, m: int) -> int:
    """Number of median passes: ceil(m/2), plus one when n is odd and m even.

    The extra pass covers the parity mismatch: starting from an odd remaining
    set, the first pass appends a single point and every later pass appends
    two, so the loop always accumulates exactly m or m+1 points.
    """
    p = -(-m // 2)
    if n % 2 == 1 and m % 2 == 0:
        p += 1
    return p


def _median_select(
    A: np.ndarray, directions: np.ndarray, passes: int, m: int
) -> tuple[list[int], int]:
    """Run the median-selection loop over fixed directions.

    Pass i sorts the remaining rows by their projection on direction
    ``i mod len(directions)`` (stable, ties by ascending original row index)
    and appends the middle point, or the lower-then-higher middle pair when
    the remaining count is even.
    """
    projections = A @ directions.T  # (n, k)
    remaining = list(range(A.shape[0]))
    appended: list[int] = []
    for i in range(passes):
        proj = projections[:, i % directions.shape[0]]
        ordered = sorted(remaining, key=lambda r: (proj[r], r))
        size = len(ordered)
        if size % 2 == 0:
            lower = ordered[size // 2 - 1]
            higher = ordered[size // 2]
            appended.append(lower)
            appended.append(higher)
            remaining.remove(lower)
            remaining.remove(higher)
        else:
            middle = ordered[(size - 1) // 2]
            appended.append(middle)
            remaining.remove(middle)
    return appended[:m], len(appended)


def pbes_sample(X, m: int) -> ExemplarSelection:
    """Median selection along the leading principal directions of X.

    Computes ``direction_count(n, m)`` principal directions once on the full
    class set, then repeatedly appends the median point(s) of the remaining
    rows projected on direction 1, 2, ... and returns the first m appended
    indices. Deterministic; no RNG involved.
    """
    A = as_data_matrix(X)
    n = A.shape[0]
    _check_request(m, n)
    passes = direction_count(n, m)
    basis = principal_directions(A, passes)
    indices, appended = _median_select(A, basis.directions, passes, m)
    return ExemplarSelection("pbes", tuple(indices), appended)


def randp_sample(
    X, m: int, rng: RngState, pool_size: int | None = None
) -> ExemplarSelection:
    """Median selection along seeded random unit directions.

    Control variant of :func:`pbes_sample`: the loop, parity rule, and median
    rule are identical, only the directions differ. ``pool_size`` is the
    number of random directions drawn (defaults to the pass count); if the
    loop needs more passes than the pool holds, directions cycle.
    """
    A = as_data_matrix(X)
    n, d = A.shape
    _check_request(m, n)
    passes = direction_count(n, m)
    k = passes if pool_size is None else pool_size
    if k < 1:
        raise ValidationError(f"direction pool size must be >= 1, got {k}")
    basis = random_unit_directions(d, k, rng)
    indices, appended = _median_select(A, basis.directions, passes, m)
    return ExemplarSelection("randp", tuple(indices), appended)


def herding_sample(X, m: int) -> ExemplarSelection:
    """Greedy selection keeping the running exemplar mean near the class mean.

    At step k the unselected row minimizing
    ``|mean(X) - (x + sum of already selected) / k|`` is taken, without
    replacement, ties by ascending row index.
    """
    A = as_data_matrix(X)
    n = A.shape[0]
    _check_request(m, n)
    mu = mean_vector(A)
    chosen: list[int] = []
    taken = np.zeros(n, dtype=bool)
    running = np.zeros(A.shape[1])
    for step in range(1, m + 1):
        best = -1
        best_dist = np.inf
        for r in range(n):
            if taken[r]:
                continue
            dist = float(np.linalg.norm(mu - (running + A[r]) / step))
            if dist < best_dist:
                best = r
                best_dist = dist
        chosen.append(best)
        taken[best] = True
        running += A[best]
    return ExemplarSelection("herding", tuple(chosen), None)


def random_sample(X, m: int, rng: RngState) -> ExemplarSelection:
    """m distinct indices via a seeded Fisher-Yates prefix shuffle."""
    A = as_data_matrix(X)
    n = A.shape[0]
    _check_request(m, n)
    gen = rng.generator()
    indices = list(range(n))
    for i in range(m):
        j = int(gen.integers(i, n))
        indices[i], indices[j] = indices[j], indices[i]
    return ExemplarSelection("random", tuple(indices[:m]), None)


SAMPLER_NAMES = ("pbes", "randp", "herding", "random")


def sample(
    method: str,
    X,
    m: int,
    rng: RngState | None = None,
    pool_size: int | None = None,
) -> ExemplarSelection:
    """Dispatch to a sampler by name; randp/random require an RngState."""
    if method == "pbes":
        return pbes_sample(X, m)
    if method == "herding":
        return herding_sample(X, m)
    if method == "randp":
        if rng is None:
            raise ValidationError("randp sampling requires a seed")
        return randp_sample(X, m, rng, pool_size)
    if method == "random":
        if rng is None:
            raise ValidationError("random sampling requires a seed")
        return random_sample(X, m, rng)
    raise ValidationError(f"unknown sampling method {method!r}")
